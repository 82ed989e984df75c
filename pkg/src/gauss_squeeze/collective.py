"""Collective quadratures of the retained OPO output.

Every emitted segment is kept, and the cavity's x quadrature is propagated
together with all segment x quadratures.  With no x-p correlation in the
initial cavity state the x and p chains decouple; the p chain is the x chain
with ``g -> -g``.

Per segment ``k`` the chain keeps a scalar cavity variance ``A``, the cavity
cross-covariances ``C`` with earlier segments and the segment block ``B``
(all in the cov convention).  One step reads

    B[k, k]   = gamma tau A + xi^2
    B[k, j]   = -sqrt(gamma tau) C[j]              (j < k)
    C[j]     <- alpha C[j],  C[k] = sqrt(gamma tau) (xi - alpha A)
    A        <- alpha^2 A + gamma tau

with ``alpha = 1 - gamma tau/2 + 2 g tau`` and ``xi = 1 - gamma tau/2``.
``var(x_T) = sum(B) / (2N)`` needs only running sums, so long chains cost
O(N) memory; the dense ``B`` is kept only on request.

Segments are indexed in emission order (oldest first).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .gaussian import GaussianState, StepMatrix, apply_linear, attach_vacuum, new_vacuum
from .opo import OpoParams, opo_step_matrix

__all__ = [
    "MAX_SEGMENTS",
    "MAX_DENSE_SEGMENTS",
    "ChainState",
    "CollectiveResult",
    "chain_evolve",
    "var_xT_simulated",
    "collective_series",
    "retained_segments_state",
    "oracle_var_xT",
    "oracle_var_pT",
    "steady_var_xT",
    "printed_appendix_var_pT",
    "var_limits",
]

MAX_SEGMENTS = 10**5
MAX_DENSE_SEGMENTS = 4000


@dataclass
class ChainState:
    """Retained-segment chain after ``n`` steps.

    ``prefix_sums[k]`` is the sum of the leading ``(k+1) x (k+1)`` block of
    ``B``, so ``var(x_T)`` is available for every ``T = (k+1) tau``.
    """

    A: float
    n: int
    tau: float
    alpha: float
    prefix_sums: np.ndarray
    _c_seed: np.ndarray
    B: np.ndarray | None = None

    @property
    def C(self) -> np.ndarray:
        """Cavity/segment cross-covariances, oldest segment first."""
        if self.n == 0:
            return np.zeros(0)
        powers = self.alpha ** np.arange(self.n - 1, -1, -1, dtype=float)
        return self._c_seed * powers

    @property
    def b_sum(self) -> float:
        return float(self.prefix_sums[-1]) if self.n else 0.0


@dataclass(frozen=True)
class CollectiveResult:
    T: float
    N: int
    var_xT: float
    var_pT: float


def chain_evolve(
    params: OpoParams, N: int, a11_initial: float, keep_matrix: bool | None = None
) -> ChainState:
    """Run ``N`` steps of the x-chain from cavity variance ``a11_initial / 2``.

    Pass ``params.mirrored()`` (and the cavity p entry) for the p-chain.
    """
    if N < 1 or N > MAX_SEGMENTS:
        raise ValueError(f"segment count must be in [1, {MAX_SEGMENTS}], got {N}")
    if not a11_initial >= 0:
        raise ValueError(f"initial cavity covariance must be non-negative, got {a11_initial}")
    if keep_matrix is None:
        keep_matrix = N <= MAX_DENSE_SEGMENTS
    if keep_matrix and N > MAX_DENSE_SEGMENTS:
        raise ValueError(f"dense segment matrix limited to {MAX_DENSE_SEGMENTS} segments")
    tau, gam, g = params.tau, params.gamma, params.g
    xi = 1.0 - 0.5 * gam * tau
    alpha = xi + 2 * g * tau
    s = math.sqrt(gam * tau)

    A = float(a11_initial)
    c_seed = np.empty(N)
    prefix = np.empty(N)
    B = np.zeros((N, N)) if keep_matrix else None
    c_sum = 0.0
    total = 0.0
    for k in range(N):
        diag = gam * tau * A + xi * xi
        total += diag - 2.0 * s * c_sum
        prefix[k] = total
        if B is not None:
            B[k, k] = diag
            if k:
                old = c_seed[:k] * alpha ** np.arange(k - 1, -1, -1, dtype=float)
                B[k, :k] = -s * old
                B[:k, k] = -s * old
        new_c = s * (xi - alpha * A)
        # Stored unscaled; C[j] after n steps is c_seed[j] * alpha**(n-1-j).
        c_seed[k] = new_c
        c_sum = alpha * c_sum + new_c
        A = alpha * alpha * A + gam * tau
    return ChainState(A, N, tau, alpha, prefix, c_seed, B)


def var_xT_simulated(chain: ChainState) -> float:
    """``(1/N) sum_ij cov(x_i, x_j)`` in variance units."""
    return chain.b_sum / (2.0 * chain.n)


def collective_series(chain: ChainState) -> tuple[np.ndarray, np.ndarray]:
    """``(T, var)`` for every prefix ``T = k tau``, ``k = 1..N``."""
    k = np.arange(1, chain.n + 1, dtype=float)
    return k * chain.tau, chain.prefix_sums / (2.0 * k)


def retained_segments_state(
    params: OpoParams, N: int, cavity_cov: np.ndarray | None = None
) -> GaussianState:
    """Full Gaussian state with every segment kept, built from the generic state ops.

    Segment ``i`` (1-based, in emission order) carries labels ``x_s{i}``,
    ``p_s{i}``.
    """
    state = new_vacuum(["x_c", "p_c"])
    if cavity_cov is not None:
        state = GaussianState(state.labels, state.mean, cavity_cov)
    base = opo_step_matrix(params).matrix
    for i in range(1, N + 1):
        seg = (f"x_s{i}", f"p_s{i}")
        state = attach_vacuum(state, seg)
        state = apply_linear(state, StepMatrix(base, ("x_c", "p_c") + seg))
    return state


def _lam(params: OpoParams) -> float:
    return params.gamma - 4 * params.g


def oracle_var_xT(params: OpoParams, T, a11: float | None = None):
    """Continuum ``var(x_T)`` for a cavity seeded with x covariance ``a11``.

    ``a11=None`` uses the unconditioned steady state ``gamma/(gamma - 4g)``.
    """
    gam, g = params.gamma, params.g
    lam = _lam(params)
    if a11 is None:
        a11 = gam / lam
    T = np.asarray(T, dtype=float)
    bracket = (
        lam * (gam + 4 * g) ** 2 * T
        - 4 * gam * (gam + 8 * g)
        + 4 * a11 * gam * lam
        - 8 * gam * (a11 * lam - (gam + 4 * g)) * np.exp(-0.5 * lam * T)
        - 4 * gam * (gam - a11 * lam) * np.exp(-lam * T)
    )
    return bracket / (2 * T * lam**3)


def steady_var_xT(params: OpoParams, T):
    """Steady-state-seeded ``var(x_T)``, written in its reduced form."""
    gam, g = params.gamma, params.g
    lam = _lam(params)
    T = np.asarray(T, dtype=float)
    bracket = lam * (gam + 4 * g) ** 2 * T + 32 * gam * g * np.expm1(-0.5 * lam * T)
    return bracket / (2 * T * lam**3)


def oracle_var_pT(params: OpoParams, T, a22: float | None = None):
    """``var(p_T)``: :func:`oracle_var_xT` with ``g -> -g`` and seed ``a22``.

    ``a22=None`` uses the steady p entry ``gamma/(gamma + 4g)``.
    """
    mirrored = params.mirrored()
    if a22 is None:
        return steady_var_xT(mirrored, T)
    return oracle_var_xT(mirrored, T, a22)


def printed_appendix_var_pT(params: OpoParams, T):
    """The printed appendix expression for ``var(p_T)``, kept for comparison only.

    It tends to minus infinity as ``T -> 0`` and disagrees with the simulated
    chain; :func:`oracle_var_pT` is the consistent form.
    """
    gam, g = params.gamma, params.g
    T = np.asarray(T, dtype=float)
    lp = gam + 4 * g
    lm = gam - 4 * g
    bracket = (
        lp * lm**2 * T
        - 32 * gam * g
        - 32 * g * lm * np.exp(-(gam / 2 + 2 * g) * T)
        - 64 * g**2 * np.exp(-lp * T)
    )
    return bracket / (2 * T * lp**3)


def var_limits(params: OpoParams) -> tuple[float, float]:
    """``T -> infinity`` limits of ``(var_xT, var_pT)``."""
    ratio = (params.gamma + 4 * params.g) / (params.gamma - 4 * params.g)
    return 0.5 * ratio**2, 0.5 / ratio**2
