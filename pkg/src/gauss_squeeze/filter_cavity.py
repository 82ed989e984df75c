"""OPO output analysed by a second, detuned cavity.

Each segment first meets the OPO cavity ``(x_c1, p_c1)`` and its output is
fed, within the same step, into an analysis cavity ``(x_c2, p_c2)`` with
decay ``gamma2`` and detuning ``delta``.  The segment is discarded after the
second cavity.  The steady covariance of the analysis cavity maps out the
squeezing spectrum of the OPO output as ``delta`` is scanned.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .gaussian import CompiledCycle, StepMatrix, new_vacuum
from .opo import DEFAULT_G, DEFAULT_GAMMA
from .riccati import RiccatiSystem, steady_state

__all__ = [
    "FilterParams",
    "SteadyProbe",
    "SpectrumScan",
    "LABELS",
    "chain_step_matrix",
    "continuum_system",
    "steady_probe_covariance",
    "refined_steady_probe",
    "narrowband_limit",
    "simulate_probe",
    "scan_detuning",
    "oracle_vmax",
    "oracle_vmin",
    "thread_count",
]

LABELS = ("x_c1", "p_c1", "x_c2", "p_c2", "x_ph", "p_ph")
_CAVITIES = LABELS[:4]
_SEGMENT = LABELS[4:]


@dataclass(frozen=True)
class FilterParams:
    gamma1: float = DEFAULT_GAMMA
    g: float = DEFAULT_G
    gamma2: float = DEFAULT_GAMMA
    delta: float = 0.0
    tau: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if not (self.gamma1 > 0 and math.isfinite(self.gamma1)):
            raise ValueError(f"gamma1 must be positive, got {self.gamma1}")
        if not (self.gamma2 >= 0 and math.isfinite(self.gamma2)):
            raise ValueError(f"gamma2 must be non-negative, got {self.gamma2}")
        if not math.isfinite(self.g) or not 4 * abs(self.g) < self.gamma1:
            raise ValueError(
                f"OPO must run below threshold, 4g < gamma1 (got 4g = {4 * self.g:.6g}, "
                f"gamma1 = {self.gamma1:.6g})"
            )
        if not math.isfinite(self.delta):
            raise ValueError("delta must be finite")
        if self.tau is None:
            object.__setattr__(self, "tau", 1e-3 / self.fastest_rate)
        if not self.tau > 0 or self.tau * self.fastest_rate >= 0.1:
            raise ValueError(
                f"segment length must satisfy 0 < tau*rate < 0.1, got {self.tau * self.fastest_rate:.3g}"
            )

    @property
    def fastest_rate(self) -> float:
        return max(self.gamma1, self.gamma2, abs(self.delta))

    def replace(self, **changes) -> "FilterParams":
        fields = dict(gamma1=self.gamma1, g=self.g, gamma2=self.gamma2, delta=self.delta, tau=self.tau)
        if "tau" not in changes and any(k in changes for k in ("gamma1", "gamma2", "delta")):
            fields["tau"] = None
        fields.update(changes)
        return FilterParams(**fields)


@dataclass(frozen=True)
class SteadyProbe:
    """Steady analysis-cavity state; ``cov`` is in variance units."""

    cov: np.ndarray
    v_min: float
    v_max: float


@dataclass
class SpectrumScan:
    deltas: np.ndarray
    v_min: np.ndarray
    v_max: np.ndarray


def chain_step_matrix(params: FilterParams) -> StepMatrix:
    """Per-segment map over ``(x_c1, p_c1, x_c2, p_c2, x_ph, p_ph)``.

    The segment passes the OPO cavity first; its output then enters the
    analysis cavity, whose detuning acts as the rotation
    ``x2 -> x2 + delta tau p2``, ``p2 -> p2 - delta tau x2``.
    """
    tau = params.tau
    g1, g2 = params.gamma1, params.gamma2
    xi1 = 1.0 - 0.5 * g1 * tau
    xi2 = 1.0 - 0.5 * g2 * tau
    s1 = math.sqrt(g1 * tau)
    s2 = math.sqrt(g2 * tau)
    gain = 2 * params.g * tau
    rot = params.delta * tau

    opo = np.eye(6)
    opo[0, 0] = xi1 + gain
    opo[1, 1] = xi1 - gain
    opo[0, 4] = opo[1, 5] = s1
    opo[4, 0] = opo[5, 1] = -s1
    opo[4, 4] = opo[5, 5] = xi1

    analysis = np.eye(6)
    analysis[2, 2] = analysis[3, 3] = xi2
    analysis[2, 3] = rot
    analysis[3, 2] = -rot
    analysis[2, 4] = analysis[3, 5] = s2
    analysis[4, 2] = analysis[5, 3] = -s2
    analysis[4, 4] = analysis[5, 5] = xi2
    return StepMatrix(analysis @ opo, LABELS)


def continuum_system(params: FilterParams) -> RiccatiSystem:
    """``tau -> 0`` flow of the joint covariance of both cavities (no measurement)."""
    g1, g2, g, d = params.gamma1, params.gamma2, params.g, params.delta
    M = np.zeros((4, 4))
    M[0, 0] = 2 * g - g1 / 2
    M[1, 1] = -2 * g - g1 / 2
    M[2, 2] = M[3, 3] = -g2 / 2
    M[2, 3] = d
    M[3, 2] = -d
    M[2, 0] = M[3, 1] = -math.sqrt(g1 * g2)
    K = np.zeros((4, 2))
    K[0, 0] = K[1, 1] = math.sqrt(g1)
    K[2, 0] = K[3, 1] = math.sqrt(g2)
    return RiccatiSystem(K @ K.T, -M, -M.T, np.zeros((4, 4)))


def _probe_from_cov(cov4: np.ndarray) -> SteadyProbe:
    block = 0.5 * cov4[2:, 2:]
    block = 0.5 * (block + block.T)
    lo, hi = np.linalg.eigvalsh(block)
    return SteadyProbe(block, float(lo), float(hi))


def steady_probe_covariance(params: FilterParams, method: str = "riccati") -> SteadyProbe:
    """Steady covariance of the analysis cavity and its eigenvalues.

    ``method='riccati'`` solves the continuum flow for its fixed point.
    ``method='segments'`` returns the exact fixed point of the per-segment
    map at ``params.tau`` (a discrete Lyapunov equation), i.e. the state the
    segment simulation settles into.
    """
    if method == "riccati":
        return _probe_from_cov(steady_state(continuum_system(params)))
    if method == "segments":
        S = chain_step_matrix(params).matrix
        Scc = S[:4, :4]
        Scp = S[:4, 4:]
        radius = np.abs(np.linalg.eigvals(Scc)).max()
        if radius >= 1.0:
            raise RuntimeError(f"segment map does not converge (spectral radius {radius:.12g})")
        P = solve_discrete_lyapunov(Scc, Scp @ Scp.T)
        return _probe_from_cov(P)
    raise ValueError(f"unknown method {method!r}; use 'riccati' or 'segments'")


def _richardson(values: Sequence[float], ratio: float = 2.0) -> float:
    """Extrapolate a sequence computed at steps ``h, h/ratio, ...`` to ``h -> 0``."""
    table = [float(v) for v in values]
    order = 1
    while len(table) > 1:
        factor = ratio**order
        table = [(factor * b - a) / (factor - 1) for a, b in zip(table, table[1:])]
        order += 1
    return table[0]


def refined_steady_probe(
    params: FilterParams, levels: int = 5, tau0: float | None = None
) -> tuple[float, float]:
    """Segment-route ``(V_min, V_max)`` extrapolated to ``tau -> 0``.

    Evaluates the segment fixed point at ``tau0 / 2**k`` for ``k < levels`` and
    removes the error terms order by order.
    """
    if tau0 is None:
        tau0 = 0.02 / params.fastest_rate
    lows, highs = [], []
    for k in range(levels):
        probe = steady_probe_covariance(params.replace(tau=tau0 / 2**k), "segments")
        lows.append(probe.v_min)
        highs.append(probe.v_max)
    return _richardson(lows), _richardson(highs)


def narrowband_limit(
    params: FilterParams, method: str = "riccati", eps0: float = 1e-3, levels: int = 4
) -> tuple[float, float]:
    """``(V_min, V_max)`` extrapolated to ``gamma2 -> 0``.

    At ``gamma2 = 0`` the analysis cavity decouples and stays in vacuum, so
    the limit is taken from ``gamma2 = gamma1 * eps0 / 2**k``.
    ``method='segments'`` applies :func:`refined_steady_probe` at each point.
    """
    lows, highs = [], []
    for k in range(levels):
        p = params.replace(gamma2=params.gamma1 * eps0 / 2**k)
        if method == "segments":
            lo, hi = refined_steady_probe(p)
        else:
            probe = steady_probe_covariance(p, method)
            lo, hi = probe.v_min, probe.v_max
        lows.append(lo)
        highs.append(hi)
    return _richardson(lows), _richardson(highs)


def simulate_probe(params: FilterParams, t_max: float, dt_out: float | None = None):
    """Segment-by-segment run from both cavities in vacuum.

    Returns ``(times, v_min, v_max)`` for the analysis cavity.
    """
    n_steps = int(round(t_max / params.tau))
    every = 1 if dt_out is None else max(1, int(round(dt_out / params.tau)))
    cycle = CompiledCycle(_CAVITIES, chain_step_matrix(params), _SEGMENT)
    state = new_vacuum(_CAVITIES)
    mean, cov = state.mean, state.cov
    times, lows, highs = [], [], []
    for k in range(n_steps + 1):
        if k:
            mean, cov, _, _ = cycle.advance(mean, cov)
        if k % every == 0 or k == n_steps:
            probe = _probe_from_cov(cov)
            times.append(k * params.tau)
            lows.append(probe.v_min)
            highs.append(probe.v_max)
    return np.array(times), np.array(lows), np.array(highs)


def thread_count() -> int:
    """Worker cap from ``GAUSS_SQUEEZE_THREADS`` (default 1)."""
    raw = os.environ.get("GAUSS_SQUEEZE_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def scan_detuning(
    params: FilterParams, deltas: Sequence[float], method: str = "riccati"
) -> SpectrumScan:
    """Steady ``V_min``/``V_max`` at every detuning, in grid order."""
    deltas = np.asarray(deltas, dtype=float)
    if not np.all(np.isfinite(deltas)):
        raise ValueError("detuning grid must be finite")

    def point(d):
        p = params.replace(delta=float(d))
        # tau must also stay small against the detuning rotation.
        p = p.replace(tau=min(params.tau, p.tau))
        probe = steady_probe_covariance(p, method)
        return probe.v_min, probe.v_max

    workers = min(thread_count(), max(1, len(deltas)))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(point, deltas))
    else:
        results = [point(d) for d in deltas]
    arr = np.array(results, dtype=float).reshape(len(deltas), 2)
    return SpectrumScan(deltas, arr[:, 0], arr[:, 1])


def oracle_vmax(params: FilterParams) -> float:
    """Steady ``V_max`` at zero detuning.

    ``(1/2) ((G1 + 4g)^2 + (G1 - 4g) G2) / ((G1 - 4g)(G1 + G2 - 4g))``;
    ``gamma2 = 0`` gives the long-time collective value.
    """
    g1, g2, g = params.gamma1, params.gamma2, params.g
    return 0.5 * ((g1 + 4 * g) ** 2 + (g1 - 4 * g) * g2) / ((g1 - 4 * g) * (g1 + g2 - 4 * g))


def oracle_vmin(params: FilterParams) -> float:
    """:func:`oracle_vmax` with ``g -> -g``."""
    return oracle_vmax(FilterParams(params.gamma1, -params.g, params.gamma2, 0.0, params.tau))
