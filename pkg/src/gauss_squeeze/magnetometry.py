"""Magnetic-field estimation by continuous Faraday probing of an atomic ensemble.

The field ``B`` is a classical Gaussian parameter.  It rotates the collective
atomic spin, whose quadratures ``(x_at, p_at)`` imprint on the polarization of
a probe beam chopped into segments ``(x_ph, p_ph)``.  Homodyne detection of
each segment narrows the estimator variance of ``B``.

Three probes are supported:

* ``coherent``: every segment enters in vacuum;
* ``squeezed``: every segment enters with covariance ``diag(1/r, r)``, the
  broadband idealisation;
* ``opo``: the segments are the output of the OPO cavity ``(x_c, p_c)``,
  which is kept in the state permanently so correlations between segments
  (the finite squeezing bandwidth) are retained.

The coherent/squeezed scheme detects ``x_ph`` and the OPO scheme detects
``p_ph``; in each layout that is the slot carrying the atomic signal.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .gaussian import CompiledCycle, StepMatrix
from .opo import OpoParams
from .riccati import RiccatiSystem, continuum_riccati, integrate_linearized_series

__all__ = [
    "Probe",
    "MagnetometryParams",
    "EstimateTrace",
    "EnsembleResult",
    "ATOM_LABELS",
    "OPO_LABELS",
    "DEFAULT_KAPPA_SQ",
    "DEFAULT_MU",
    "faraday_step_matrix",
    "opo_faraday_step_matrix",
    "riccati_system",
    "estimate_variance",
    "oracle_var_B",
    "squeezing_ratio",
    "effective_delay",
    "fit_delay",
    "run_trajectory",
    "run_ensemble",
]

DEFAULT_KAPPA_SQ = 1.83e6  # s^-1
DEFAULT_MU = 8.79e4  # s^-1 pT^-1

ATOM_LABELS = ("B", "x_at", "p_at")
OPO_LABELS = ("B", "x_at", "p_at", "x_c", "p_c")
_SEGMENT = ("x_ph", "p_ph")


class Probe(enum.Enum):
    COHERENT = "coherent"
    SQUEEZED = "squeezed"
    OPO = "opo"

    @classmethod
    def parse(cls, value: "Probe | str") -> "Probe":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(
                f"probe must be 'coherent', 'squeezed' or 'opo', got {value!r}"
            ) from None


@dataclass(frozen=True)
class MagnetometryParams:
    """Coupling rates, prior and probe description.

    ``kappa_sq`` is the atom-light rate (s^-1), ``mu`` the field-atom coupling
    (s^-1 pT^-1) and ``var_B0`` the prior variance of ``B`` (pT^2).  ``r`` is
    used by the squeezed probe and ``opo`` by the OPO probe.  ``tau`` defaults
    to ``1e-3`` over the fastest rate in the problem.
    """

    kappa_sq: float = DEFAULT_KAPPA_SQ
    mu: float = DEFAULT_MU
    var_B0: float = 1.0
    probe: Probe = Probe.COHERENT
    r: float = 1.0
    opo: OpoParams = field(default_factory=OpoParams)
    tau: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "probe", Probe.parse(self.probe))
        if not (self.kappa_sq >= 0 and math.isfinite(self.kappa_sq)):
            raise ValueError(f"kappa_sq must be non-negative, got {self.kappa_sq}")
        if not math.isfinite(self.mu):
            raise ValueError("mu must be finite")
        if not (self.var_B0 > 0 and math.isfinite(self.var_B0)):
            raise ValueError(f"var_B0 must be positive, got {self.var_B0}")
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ValueError(f"squeezing parameter r must be positive, got {self.r}")
        if self.tau is None:
            object.__setattr__(self, "tau", 1e-3 / self.fastest_rate)
        if not 0 < self.tau * self.fastest_rate < 0.1:
            raise ValueError(
                f"segment length must satisfy 0 < tau*rate < 0.1, got {self.tau * self.fastest_rate:.3g}"
            )
        if self.probe is Probe.OPO:
            # Re-validates the OPO at this segment length.
            self.opo.with_tau(self.tau)

    @property
    def fastest_rate(self) -> float:
        squeeze = max(self.r, 1.0 / self.r) if self.probe is Probe.SQUEEZED else 1.0
        rates = [self.kappa_sq * squeeze, abs(self.mu) * math.sqrt(self.var_B0)]
        if self.probe is Probe.OPO:
            rates.append(self.opo.gamma)
        rate = max(rates)
        return rate if rate > 0 else 1.0

    @property
    def labels(self) -> tuple[str, ...]:
        return OPO_LABELS if self.probe is Probe.OPO else ATOM_LABELS

    @property
    def measured(self) -> str:
        return "p_ph" if self.probe is Probe.OPO else "x_ph"

    @property
    def probe_cov(self) -> np.ndarray:
        if self.probe is Probe.SQUEEZED:
            return np.diag([1.0 / self.r, self.r])
        return np.eye(2)

    def initial_cov(self) -> np.ndarray:
        """Prior covariance: ``2 var_B0`` for the field, vacuum elsewhere."""
        cov = np.eye(len(self.labels))
        cov[0, 0] = 2.0 * self.var_B0
        return cov

    def replace(self, **changes) -> "MagnetometryParams":
        fields = dict(
            kappa_sq=self.kappa_sq, mu=self.mu, var_B0=self.var_B0, probe=self.probe,
            r=self.r, opo=self.opo, tau=self.tau,
        )
        if "tau" not in changes:
            fields["tau"] = None
        fields.update(changes)
        return MagnetometryParams(**fields)


@dataclass
class EstimateTrace:
    """``var_B`` (pT^2) and, for sampled runs, the running estimate ``mean_B`` (pT)."""

    times: np.ndarray
    var_B: np.ndarray
    mean_B: np.ndarray | None = None


@dataclass
class EnsembleResult:
    """Monte-Carlo estimates; ``mean_B`` has shape ``(n_traj, n_times)``."""

    times: np.ndarray
    var_B: np.ndarray
    mean_B: np.ndarray
    true_B: float

    @property
    def squared_error(self) -> np.ndarray:
        return (self.mean_B - self.true_B) ** 2

    @property
    def mse(self) -> np.ndarray:
        return self.squared_error.mean(axis=0)

    @property
    def mse_stderr(self) -> np.ndarray:
        n = self.mean_B.shape[0]
        return self.squared_error.std(axis=0, ddof=1) / math.sqrt(n)


def _faraday_matrix(kappa_sq: float, mu: float, tau: float) -> np.ndarray:
    k = math.sqrt(kappa_sq * tau)
    S = np.eye(5)
    S[1, 4] = k
    S[2, 0] = -mu * tau
    S[3, 2] = k
    return S


def _opo_faraday_matrix(kappa_sq: float, mu: float, gamma: float, g: float, tau: float) -> np.ndarray:
    kappa = math.sqrt(kappa_sq)
    s = math.sqrt(gamma * tau)
    xi = 1.0 - 0.5 * gamma * tau
    S = np.eye(7)
    S[1, 0] = mu * tau
    S[2, 3] = kappa * math.sqrt(gamma) * tau
    S[2, 5] = -kappa * math.sqrt(tau)
    S[3, 3] = xi + 2 * g * tau
    S[3, 5] = s
    S[4, 4] = xi - 2 * g * tau
    S[4, 6] = s
    S[5, 3] = -s
    S[5, 5] = xi
    S[6, 1] = -kappa * math.sqrt(tau)
    S[6, 4] = -s
    S[6, 6] = xi
    return S


def faraday_step_matrix(params: MagnetometryParams) -> StepMatrix:
    """Per-segment map over ``(B, x_at, p_at, x_ph, p_ph)`` for coherent/squeezed probes."""
    if params.probe is Probe.OPO:
        raise ValueError("faraday_step_matrix is for coherent or squeezed probes; use opo_faraday_step_matrix")
    return StepMatrix(_faraday_matrix(params.kappa_sq, params.mu, params.tau), ATOM_LABELS + _SEGMENT)


def opo_faraday_step_matrix(params: MagnetometryParams) -> StepMatrix:
    """Per-segment map over ``(B, x_at, p_at, x_c, p_c, x_ph, p_ph)`` for the OPO probe."""
    if params.probe is not Probe.OPO:
        raise ValueError("opo_faraday_step_matrix needs the opo probe")
    m = _opo_faraday_matrix(params.kappa_sq, params.mu, params.opo.gamma, params.opo.g, params.tau)
    return StepMatrix(m, OPO_LABELS + _SEGMENT)


def _step(params: MagnetometryParams) -> StepMatrix:
    if params.probe is Probe.OPO:
        return opo_faraday_step_matrix(params)
    return faraday_step_matrix(params)


def riccati_system(params: MagnetometryParams) -> RiccatiSystem:
    """Continuum flow of the ``B``/atom (and, for the OPO, cavity) covariance."""
    if params.probe is Probe.OPO:
        gam, g = params.opo.gamma, params.opo.g

        def step_at(t):
            return StepMatrix(_opo_faraday_matrix(params.kappa_sq, params.mu, gam, g, t), OPO_LABELS + _SEGMENT)

    else:

        def step_at(t):
            return StepMatrix(_faraday_matrix(params.kappa_sq, params.mu, t), ATOM_LABELS + _SEGMENT)

    return continuum_riccati(
        step_at, params.labels, _SEGMENT, params.measured, params.probe_cov, tau=params.tau
    )


def _check_grid(t_grid) -> np.ndarray:
    t = np.asarray(t_grid, dtype=float).ravel()
    if t.size == 0 or not np.all(np.isfinite(t)) or t[0] < 0 or np.any(np.diff(t) <= 0):
        raise ValueError("time grid must be finite, non-negative and strictly increasing")
    return t


def _step_indices(times: np.ndarray, tau: float) -> np.ndarray:
    return np.rint(times / tau).astype(np.int64)


def estimate_variance(
    params: MagnetometryParams, t_grid, method: str = "riccati"
) -> EstimateTrace:
    """``var(B)`` on ``t_grid`` from the prior at ``t = 0``.

    ``method='riccati'`` integrates the continuum flow; ``'segments'`` runs the
    attach/step/measure cycle at ``params.tau`` and samples the nearest whole
    segment to each grid time.
    """
    times = _check_grid(t_grid)
    if method == "riccati":
        traj = integrate_linearized_series(riccati_system(params), params.initial_cov(), times)
        return EstimateTrace(times, 0.5 * traj.A[:, 0, 0])
    if method == "segments":
        cycle = CompiledCycle(params.labels, _step(params), _SEGMENT, params.probe_cov, params.measured)
        steps = _step_indices(times, params.tau)
        cov = params.initial_cov()
        mean = np.zeros(len(params.labels))
        out = np.empty(len(times))
        k = 0
        for j, target in enumerate(steps):
            while k < target:
                mean, cov, _, _ = cycle.advance(mean, cov)
                k += 1
            out[j] = 0.5 * cov[0, 0]
        return EstimateTrace(times, out)
    raise ValueError(f"unknown method {method!r}; use 'riccati' or 'segments'")


def oracle_var_B(params: MagnetometryParams, t):
    """Closed-form ``var(B(t))`` for coherent and squeezed probes.

    The squeezed probe replaces ``kappa_sq`` by ``kappa_sq * r``.  There is no
    compact closed form for the OPO probe.
    """
    if params.probe is Probe.OPO:
        raise NotImplementedError("no closed form for the opo probe; use estimate_variance")
    k2 = params.kappa_sq * (params.r if params.probe is Probe.SQUEEZED else 1.0)
    return _closed_form(k2, params.mu, params.var_B0, t)


def _closed_form(k2: float, mu: float, v0: float, t):
    t = np.asarray(t, dtype=float)
    den = k2**2 * mu**2 * v0 * t**4 / 6 + 2.0 / 3.0 * k2 * mu**2 * v0 * t**3 + k2 * t + 1
    return v0 * (k2 * t + 1) / den


def squeezing_ratio(opo: OpoParams) -> float:
    """Long-time squeezing of the OPO output, ``((gamma + 4g)/(gamma - 4g))^2``."""
    return ((opo.gamma + 4 * opo.g) / (opo.gamma - 4 * opo.g)) ** 2


def effective_delay(opo: OpoParams) -> float:
    """Lag of the OPO-probe curve behind the broadband squeezed one (seconds).

    ``16 g (3 gamma + 4 g) / ((gamma - 4 g)(gamma + 4 g)^2)``
    """
    gam, g = opo.gamma, opo.g
    return 16 * g * (3 * gam + 4 * g) / ((gam - 4 * g) * (gam + 4 * g) ** 2)


def fit_delay(
    params: MagnetometryParams, window: tuple[float, float] = (10.0, 100.0), n_points: int = 91
) -> float:
    """Empirical time shift of the OPO trace against the squeezed reference.

    The reference is the broadband squeezed curve with ``r`` from
    :func:`squeezing_ratio`.  For each ``t`` in ``window`` (units of
    ``1/gamma``) the OPO variance is matched to the reference time ``t_eq``
    where the reference reaches the same value.  The least-squares constant
    offset in ``t_eq = t - d`` is the mean of ``t - t_eq``.
    """
    if params.probe is not Probe.OPO:
        params = params.replace(probe=Probe.OPO)
    gam = params.opo.gamma
    times = np.linspace(window[0], window[1], n_points) / gam
    var_opo = estimate_variance(params, times).var_B
    k2r = params.kappa_sq * squeezing_ratio(params.opo)
    shifts = np.empty(len(times))
    for i, (t, v) in enumerate(zip(times, var_opo)):
        def gap(s, v=v):
            return float(_closed_form(k2r, params.mu, params.var_B0, s)) - v

        hi = t
        while gap(hi) > 0:
            hi *= 2.0
        t_eq = brentq(gap, 0.0, hi, xtol=1e-15 / gam, rtol=1e-13)
        shifts[i] = t - t_eq
    return float(shifts.mean())


def _stream(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def run_ensemble(
    params: MagnetometryParams,
    true_B: float,
    seed: int,
    t_grid,
    n_traj: int = 1,
    indices: Sequence[int] | None = None,
    chunk: int = 1024,
) -> EnsembleResult:
    """Sampled estimator runs with outcomes generated by a field of ``true_B``.

    Every trajectory carries two filters on the same record: a truth filter in
    which ``B = true_B`` is known exactly, whose predictive law generates the
    homodyne outcomes, and the estimator filter started from the prior
    (mean 0, variance ``var_B0``).  Trajectory ``i`` draws from its own stream
    keyed by ``(seed, i)``, so any subset reproduces the same records.  The
    covariances do not depend on the outcomes and are shared by all
    trajectories.
    """
    if not math.isfinite(true_B):
        raise ValueError("true_B must be finite")
    times = _check_grid(t_grid)
    if indices is None:
        indices = range(n_traj)
    indices = [int(i) for i in indices]
    if not indices:
        raise ValueError("need at least one trajectory")
    streams = [_stream(seed, i) for i in indices]
    n = len(params.labels)
    cycle = CompiledCycle(params.labels, _step(params), _SEGMENT, params.probe_cov, params.measured)

    est_cov = params.initial_cov()
    true_cov = params.initial_cov()
    true_cov[0, 0] = 0.0
    est_mean = np.zeros((len(indices), n))
    true_mean = np.zeros((len(indices), n))
    true_mean[:, 0] = true_B

    steps = _step_indices(times, params.tau)
    var_out = np.empty(len(times))
    mean_out = np.empty((len(indices), len(times)))
    noise = np.empty((len(indices), 0))
    used = 0
    k = 0
    for j, target in enumerate(steps):
        while k < target:
            if used == noise.shape[1]:
                width = min(chunk, int(steps[-1] - k))
                noise = np.stack([rng.standard_normal(width) for rng in streams])
                used = 0
            pred_true, bqq = cycle.predict(true_mean, true_cov)
            outcome = pred_true + math.sqrt(0.5 * bqq) * noise[:, used]
            used += 1
            pred_est, _ = cycle.predict(est_mean, est_cov)
            true_mean, true_cov, _, _ = cycle.advance(true_mean, true_cov, outcome - pred_true)
            est_mean, est_cov, _, _ = cycle.advance(est_mean, est_cov, outcome - pred_est)
            k += 1
        var_out[j] = 0.5 * est_cov[0, 0]
        mean_out[:, j] = est_mean[:, 0]
    return EnsembleResult(times, var_out, mean_out, float(true_B))


def run_trajectory(
    params: MagnetometryParams, true_B: float, seed: int, t_grid, index: int = 0
) -> EstimateTrace:
    """One sampled run; identical to trajectory ``index`` of :func:`run_ensemble`."""
    res = run_ensemble(params, true_B, seed, t_grid, indices=[index])
    return EstimateTrace(res.times, res.var_B, res.mean_B[0])
