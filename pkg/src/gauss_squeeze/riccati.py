"""Matrix Riccati flows ``dA/dt = G - D A - A E - A F A``.

Three routes are provided:

* :func:`integrate` -- fixed-step classical RK4 on ``A`` itself.
* :func:`integrate_linearized` -- ``A = W U^{-1}`` with the linear pair
  ``dW/dt = -D W + G U``, ``dU/dt = F W + E U`` propagated by matrix
  exponentials.
* :func:`steady_state` -- damped Newton iteration on the algebraic equation.

:func:`continuum_riccati` turns a per-segment step matrix followed by a
homodyne measurement (or a trace-out) into the Riccati coefficients of the
``tau -> 0`` limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import expm, solve_sylvester

from .gaussian import Label, StepMatrix, as_label

__all__ = [
    "RiccatiSystem",
    "CovTrajectory",
    "RiccatiDivergenceError",
    "RiccatiConvergenceError",
    "integrate",
    "integrate_linearized",
    "integrate_linearized_series",
    "steady_state",
    "continuum_riccati",
]

SYMMETRY_TOL = 1e-12


class RiccatiDivergenceError(RuntimeError):
    pass


class RiccatiConvergenceError(RuntimeError):
    pass


@dataclass
class RiccatiSystem:
    G: np.ndarray
    D: np.ndarray
    E: np.ndarray
    F: np.ndarray

    def __post_init__(self) -> None:
        mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in (self.G, self.D, self.E, self.F)]
        shapes = {m.shape for m in mats}
        if len(shapes) != 1:
            raise ValueError(f"G, D, E, F must share one square shape, got {sorted(shapes)}")
        (shape,) = shapes
        if shape[0] != shape[1]:
            raise ValueError(f"Riccati matrices must be square, got {shape}")
        self.G, self.D, self.E, self.F = mats

    @property
    def n(self) -> int:
        return self.G.shape[0]

    def rhs(self, A: np.ndarray) -> np.ndarray:
        return self.G - self.D @ A - A @ self.E - A @ self.F @ A

    def residual(self, A: np.ndarray) -> float:
        return float(np.abs(self.rhs(A)).max())

    def residual_scale(self, A: np.ndarray) -> float:
        terms = (self.G, self.D @ A, A @ self.E, A @ self.F @ A)
        return max(1e-300, max(float(np.abs(t).max()) for t in terms))

    def rate(self) -> float:
        """Largest rate scale of the flow (used to size integration steps)."""
        nrm = [np.linalg.norm(self.D, 2), np.linalg.norm(self.E, 2)]
        nrm.append(math.sqrt(np.linalg.norm(self.G, 2) * np.linalg.norm(self.F, 2)))
        return float(max(nrm))

    def hamiltonian(self) -> np.ndarray:
        """Generator of the linear pair ``(W, U)``."""
        return np.block([[-self.D, self.G], [self.F, self.E]])


@dataclass
class CovTrajectory:
    times: np.ndarray
    A: np.ndarray  # shape (len(times), n, n)

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        if self.A.shape[0] != self.times.shape[0]:
            raise ValueError("times and A_of_t lengths differ")

    def __len__(self) -> int:
        return len(self.times)

    def element(self, i: int, j: int) -> np.ndarray:
        return self.A[:, i, j]


def _check_inputs(system: RiccatiSystem, A0, times) -> tuple[np.ndarray, np.ndarray]:
    A0 = np.atleast_2d(np.asarray(A0, dtype=float))
    if A0.shape != (system.n, system.n):
        raise ValueError(f"A0 has shape {A0.shape}, system is {system.n}x{system.n}")
    scale = max(1.0, float(np.abs(A0).max()))
    if np.abs(A0 - A0.T).max() > SYMMETRY_TOL * scale:
        raise ValueError("A0 must be symmetric")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if times.ndim != 1 or times.size == 0:
        raise ValueError("times must be a non-empty 1-d sequence")
    if np.any(np.diff(times) <= 0):
        raise ValueError("times must be strictly increasing")
    return 0.5 * (A0 + A0.T), times


def integrate(
    system: RiccatiSystem,
    A0,
    times: Sequence[float],
    max_step: float | None = None,
    t0: float = 0.0,
) -> CovTrajectory:
    """Fixed-step RK4 from ``A(t0) = A0`` with output at ``times``.

    The internal step is at most ``1e-3 / rate`` (see :meth:`RiccatiSystem.rate`)
    and at most the output spacing; ``max_step`` overrides the rate bound.
    """
    A, times = _check_inputs(system, A0, times)
    if times[0] < t0:
        raise ValueError("output times must not precede t0")
    rate = system.rate()
    if max_step is None:
        max_step = 1e-3 / rate if rate > 0 else math.inf
    G, D, E, F = system.G, system.D, system.E, system.F

    def f(X):
        return G - D @ X - X @ E - X @ F @ X

    out = np.empty((len(times), system.n, system.n))
    t = t0
    for k, t_next in enumerate(times):
        span = t_next - t
        if span > 0:
            nsub = max(1, math.ceil(span / max_step - 1e-9))
            h = span / nsub
            for _ in range(nsub):
                k1 = f(A)
                k2 = f(A + 0.5 * h * k1)
                k3 = f(A + 0.5 * h * k2)
                k4 = f(A + h * k3)
                A = A + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
                A = 0.5 * (A + A.T)
            if not np.all(np.isfinite(A)):
                raise RiccatiDivergenceError(
                    f"Riccati integration diverged before t={t_next:.6g}"
                )
        out[k] = A
        t = t_next
    return CovTrajectory(times, out)


def _propagate_linearized(H: np.ndarray, A: np.ndarray, span: float, rate: float) -> np.ndarray:
    n = A.shape[0]
    # Restart (W, U) = (A, I) every chunk so U stays well conditioned.
    nchunk = max(1, math.ceil(rate * span / 0.5))
    Phi = expm(H * (span / nchunk))
    for _ in range(nchunk):
        W = Phi[:n, :n] @ A + Phi[:n, n:]
        U = Phi[n:, :n] @ A + Phi[n:, n:]
        # U starts at I each chunk; a sign change of det U means a pole was crossed.
        if np.linalg.det(U) <= 0 or np.linalg.cond(U) > 1.0 / 1e-12:
            raise RiccatiDivergenceError("U became singular in the linearized propagation")
        A = np.linalg.solve(U.T, W.T).T
        A = 0.5 * (A + A.T)
    if not np.all(np.isfinite(A)):
        raise RiccatiDivergenceError("linearized Riccati propagation produced non-finite values")
    return A


def integrate_linearized(system: RiccatiSystem, A0, t: float) -> np.ndarray:
    """``A(t) = W(t) U(t)^{-1}`` with ``W(0) = A0`` and ``U(0) = I``."""
    A, _ = _check_inputs(system, A0, [max(t, 1e-300)])
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return A
    H = system.hamiltonian()
    rate = float(np.linalg.norm(H, 2))
    return _propagate_linearized(H, A, t, rate)


def integrate_linearized_series(
    system: RiccatiSystem, A0, times: Sequence[float]
) -> CovTrajectory:
    """:func:`integrate_linearized` evaluated on an increasing grid starting at 0."""
    A, times = _check_inputs(system, A0, times)
    if times[0] < 0:
        raise ValueError("times must be non-negative")
    H = system.hamiltonian()
    rate = float(np.linalg.norm(H, 2))
    out = np.empty((len(times), system.n, system.n))
    t = 0.0
    for k, t_next in enumerate(times):
        if t_next > t:
            A = _propagate_linearized(H, A, t_next - t, rate)
        out[k] = A
        t = t_next
    return CovTrajectory(times, out)


def _is_stabilizing(system: RiccatiSystem, A: np.ndarray) -> bool:
    left = np.linalg.eigvals(system.D + A @ system.F)
    right = np.linalg.eigvals(system.E + system.F @ A)
    sums = left[:, None] + right[None, :]
    return bool(np.all(sums.real > 0))


def steady_state(
    system: RiccatiSystem,
    A_init=None,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> np.ndarray:
    """Stabilizing symmetric root of ``G - D A - A E - A F A = 0``.

    Damped Newton iteration from ``A = I``.  The Newton correction solves the
    Sylvester equation ``(D + A F) X + X (E + F A) = R(A)``; steps are halved
    until the residual decreases.  Convergence means
    ``max|R| <= tol * max(|G|, |D A|, |A E|, |A F A|)``.
    """
    A = np.eye(system.n) if A_init is None else np.array(A_init, dtype=float)
    res = system.residual(A)
    for _ in range(max_iter):
        if res <= tol * system.residual_scale(A):
            break
        R = system.rhs(A)
        try:
            X = solve_sylvester(system.D + A @ system.F, system.E + system.F @ A, R)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise RiccatiConvergenceError(f"singular Newton step: {exc}") from None
        if not np.all(np.isfinite(X)):
            raise RiccatiConvergenceError("Newton step is not finite; no stabilizing solution")
        step = 1.0
        while True:
            trial = A + step * X
            trial = 0.5 * (trial + trial.T)
            trial_res = system.residual(trial)
            if trial_res < res or step < 1e-10:
                break
            step *= 0.5
        if step < 1e-10 and trial_res >= res:
            raise RiccatiConvergenceError("damped Newton iteration stalled")
        A, res = trial, trial_res
    else:
        raise RiccatiConvergenceError(f"no convergence in {max_iter} iterations")
    if not _is_stabilizing(system, A):
        raise RiccatiConvergenceError("converged to a non-stabilizing root")
    if np.linalg.eigvalsh(A).min() < -1e-9 * max(1.0, float(np.abs(A).max())):
        raise RiccatiConvergenceError("steady state is not positive semidefinite")
    return A


def continuum_riccati(
    step_at: Callable[[float], StepMatrix],
    system_labels: Sequence[Label | str],
    probe_labels: Sequence[Label | str],
    measured: Label | str | None,
    probe_cov: np.ndarray | None = None,
    tau: float = 1e-3,
) -> RiccatiSystem:
    """Riccati coefficients of the ``tau -> 0`` limit of attach/step/measure cycles.

    ``step_at(tau)`` must have entries of the form ``a + b sqrt(tau) + c tau``
    on the system-system and system-probe blocks, with identity at ``tau = 0``.
    The coefficients are recovered exactly from two evaluations at ``tau`` and
    ``4 tau``.  Writing ``S_ss = I + M tau``, ``S_sp = K sqrt(tau)``,
    ``S_ps = L sqrt(tau)`` and ``P`` for the incoming probe covariance, a
    homodyne measurement of probe slot ``q`` gives

    ``G = K P K^T - k k^T / P_qq``, ``D = -M + k l^T / P_qq``,
    ``E = D^T``, ``F = l l^T / P_qq``

    with ``k = K P e_q`` and ``l = L^T e_q``.  ``measured=None`` traces the
    probe out (``F = 0``, ``G = K P K^T``).
    """
    sys_names = [as_label(lab).name for lab in system_labels]
    probe_names = [as_label(lab).name for lab in probe_labels]
    P = np.eye(len(probe_names)) if probe_cov is None else np.asarray(probe_cov, dtype=float)

    def blocks(t):
        step = step_at(t)
        names = list(step.names)
        if sorted(names) != sorted(sys_names + probe_names):
            raise ValueError("step labels must be exactly the system plus probe labels")
        order = [names.index(n) for n in sys_names + probe_names]
        return step.matrix[np.ix_(order, order)] - np.eye(len(order))

    X1 = blocks(tau)
    X2 = blocks(4.0 * tau)
    lin = (X2 - 2.0 * X1) / (2.0 * tau)
    root = (X1 - lin * tau) / math.sqrt(tau)
    ns = len(sys_names)
    M = lin[:ns, :ns]
    K = root[:ns, ns:]
    L = root[ns:, :ns]
    if np.abs(root[:ns, :ns]).max(initial=0.0) > 1e-9 * max(1.0, np.abs(M).max(initial=0.0)):
        raise ValueError("system block of the step matrix has sqrt(tau) terms")

    G = K @ P @ K.T
    if measured is None:
        return RiccatiSystem(G, -M, -M.T, np.zeros((ns, ns)))
    q = probe_names.index(as_label(measured).name)
    pq = P[q, q]
    k = K @ P[:, q]
    l = L[q]
    G = G - np.outer(k, k) / pq
    D = -M + np.outer(k, l) / pq
    F = np.outer(l, l) / pq
    return RiccatiSystem(0.5 * (G + G.T), D, D.T, F)
