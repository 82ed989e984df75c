"""Degenerate optical parametric oscillator below threshold.

The cavity mode ``(x_c, p_c)`` is pumped with gain ``g`` and leaks at rate
``gamma`` through one mirror into a beam chopped into segments of duration
``tau``.  Each segment ``(x_ph, p_ph)`` arrives in vacuum, interacts with the
cavity through :func:`opo_step_matrix`, and is then either discarded or
detected by homodyne measurement of one quadrature.

Closed-form results for the intracavity variances, the output spectrum and
the integrated output noise live alongside the simulators so the two can be
compared directly.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .gaussian import CompiledCycle, StepMatrix, new_vacuum
from .riccati import RiccatiSystem, integrate_linearized_series

__all__ = [
    "DEFAULT_GAMMA",
    "DEFAULT_G",
    "OpoParams",
    "Measured",
    "IntracavitySeries",
    "CAVITY",
    "SEGMENT",
    "opo_step_matrix",
    "simulate_intracavity",
    "riccati_system_for",
    "riccati_intracavity",
    "oracle_intracavity",
    "oracle_spectrum",
    "oracle_normal_ordered_xT",
    "oracle_var_xT_long_time",
]

DEFAULT_GAMMA = 2 * math.pi * 6e6  # s^-1
DEFAULT_G = 0.2 * DEFAULT_GAMMA

CAVITY = ("x_c", "p_c")
SEGMENT = ("x_ph", "p_ph")


class Measured(enum.Enum):
    X = "x"
    P = "p"
    NONE = "none"

    @classmethod
    def parse(cls, value: "Measured | str | None") -> "Measured":
        if value is None:
            return cls.NONE
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"measured quadrature must be 'x', 'p' or 'none', got {value!r}") from None


@dataclass(frozen=True)
class OpoParams:
    """Cavity decay ``gamma`` (s^-1), gain ``g`` (s^-1) and segment length ``tau`` (s).

    ``tau`` defaults to ``1e-3 / gamma``.  Operation below threshold,
    ``4|g| < gamma``, is enforced.
    """

    gamma: float = DEFAULT_GAMMA
    g: float = DEFAULT_G
    tau: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not math.isfinite(self.g) or not 4 * abs(self.g) < self.gamma:
            raise ValueError(
                f"OPO must run below threshold, 4g < gamma (got 4g = {4 * self.g:.6g}, "
                f"gamma = {self.gamma:.6g})"
            )
        if self.tau is None:
            object.__setattr__(self, "tau", 1e-3 / self.gamma)
        if not 0 < self.tau * self.gamma < 0.1:
            raise ValueError(
                f"segment length must satisfy 0 < tau*gamma < 0.1, got {self.tau * self.gamma:.3g}"
            )

    @property
    def xi(self) -> float:
        """Mirror reflection amplitude to first order, ``1 - gamma*tau/2``."""
        return 1.0 - 0.5 * self.gamma * self.tau

    def mirrored(self) -> "OpoParams":
        """Same cavity with ``g -> -g`` (swaps the roles of x and p)."""
        return OpoParams(self.gamma, -self.g, self.tau)

    def with_tau(self, tau: float) -> "OpoParams":
        return OpoParams(self.gamma, self.g, tau)


def opo_step_matrix(params: OpoParams) -> StepMatrix:
    """Per-segment map over ``(x_c, p_c, x_ph, p_ph)``."""
    tau, gam, g = params.tau, params.gamma, params.g
    xi = params.xi
    s = math.sqrt(gam * tau)
    S = np.array(
        [
            [xi + 2 * g * tau, 0.0, s, 0.0],
            [0.0, xi - 2 * g * tau, 0.0, s],
            [-s, 0.0, xi, 0.0],
            [0.0, -s, 0.0, xi],
        ]
    )
    return StepMatrix(S, CAVITY + SEGMENT)


@dataclass
class IntracavitySeries:
    """Cavity variances over time.  ``purity`` is ``1/sqrt(det cov)``."""

    times: np.ndarray
    var_xc: np.ndarray
    var_pc: np.ndarray
    purity: np.ndarray

    @property
    def var_product(self) -> np.ndarray:
        return self.var_xc * self.var_pc


def _series_from_covs(times, covs) -> IntracavitySeries:
    covs = np.asarray(covs)
    det = covs[:, 0, 0] * covs[:, 1, 1] - covs[:, 0, 1] * covs[:, 1, 0]
    return IntracavitySeries(
        np.asarray(times, dtype=float),
        0.5 * covs[:, 0, 0],
        0.5 * covs[:, 1, 1],
        1.0 / np.sqrt(det),
    )


def _measured_label(measured: Measured) -> str | None:
    return {Measured.X: "x_ph", Measured.P: "p_ph", Measured.NONE: None}[measured]


def simulate_intracavity(
    params: OpoParams,
    t_max: float,
    measured: Measured | str = Measured.NONE,
    dt_out: float | None = None,
) -> IntracavitySeries:
    """Segment-by-segment evolution from the empty cavity.

    Every step attaches a vacuum segment, applies :func:`opo_step_matrix`,
    and then traces the segment out or conditions on a homodyne measurement
    of its ``measured`` quadrature.  Outputs are recorded every ``dt_out``
    (rounded to whole segments), starting with ``t = 0``.
    """
    if not t_max > 0:
        raise ValueError("t_max must be positive")
    measured = Measured.parse(measured)
    n_steps = int(round(t_max / params.tau))
    every = 1 if dt_out is None else max(1, int(round(dt_out / params.tau)))
    cycle = CompiledCycle(
        CAVITY, opo_step_matrix(params), SEGMENT, measured=_measured_label(measured)
    )
    state = new_vacuum(CAVITY)
    mean, cov = state.mean, state.cov
    times = [0.0]
    covs = [cov]
    for k in range(1, n_steps + 1):
        mean, cov, _, _ = cycle.advance(mean, cov)
        if k % every == 0 or k == n_steps:
            times.append(k * params.tau)
            covs.append(cov)
    return _series_from_covs(times, covs)


def riccati_system_for(params: OpoParams, measured: Measured | str) -> RiccatiSystem:
    """Continuous-limit flow of the cavity covariance.

    ``measured='x'`` gives the matrices ``G = diag(0, gamma)``,
    ``F = diag(gamma, 0)``, ``D = E = diag(-2g - gamma/2, 2g + gamma/2)``;
    ``'p'`` is its x<->p mirror and ``'none'`` drops the measurement term.
    """
    measured = Measured.parse(measured)
    gam, g = params.gamma, params.g
    if measured is Measured.NONE:
        D = np.diag([gam / 2 - 2 * g, gam / 2 + 2 * g])
        return RiccatiSystem(gam * np.eye(2), D, D, np.zeros((2, 2)))
    if measured is Measured.X:
        G = np.diag([0.0, gam])
        F = np.diag([gam, 0.0])
        D = np.diag([-2 * g - gam / 2, 2 * g + gam / 2])
        return RiccatiSystem(G, D, D, F)
    G = np.diag([gam, 0.0])
    F = np.diag([0.0, gam])
    D = np.diag([gam / 2 - 2 * g, 2 * g - gam / 2])
    return RiccatiSystem(G, D, D, F)


def riccati_intracavity(
    params: OpoParams, times, measured: Measured | str = Measured.NONE
) -> IntracavitySeries:
    """Cavity variances from the Riccati flow, starting from vacuum at ``t = 0``."""
    traj = integrate_linearized_series(riccati_system_for(params, measured), np.eye(2), times)
    return _series_from_covs(traj.times, traj.A)


def _relax(gam: float, g: float, t) -> np.ndarray:
    """Unconditioned x variance: relaxes from 1/2 towards gamma/(2(gamma-4g))."""
    lam = gam - 4 * g
    t = np.asarray(t, dtype=float)
    return 0.5 * (gam - 4 * g * np.exp(-lam * t)) / lam


def _logistic(gam: float, g: float, t) -> np.ndarray:
    """Conditioned p variance: minimum-uncertainty partner of :func:`_relax`."""
    lam = gam - 4 * g
    t = np.asarray(t, dtype=float)
    return 0.5 * lam / (gam - 4 * g * np.exp(-lam * t))


def oracle_intracavity(params: OpoParams, t, measured: Measured | str = Measured.NONE):
    """Closed-form ``(var_xc, var_pc)`` at time(s) ``t`` from the vacuum start."""
    measured = Measured.parse(measured)
    gam, g = params.gamma, params.g
    var_x = _relax(gam, g, t)
    var_p = _relax(gam, -g, t)
    if measured is Measured.P:
        var_p = _logistic(gam, g, t)
    elif measured is Measured.X:
        var_x = _logistic(gam, -g, t)
    return var_x, var_p


def oracle_spectrum(params: OpoParams, omega):
    """Normal-ordered output x spectrum ``2 gamma g / ((gamma/2 - 2g)^2 + omega^2)``."""
    gam, g = params.gamma, params.g
    omega = np.asarray(omega, dtype=float)
    return 2 * gam * g / ((gam / 2 - 2 * g) ** 2 + omega**2)


def oracle_normal_ordered_xT(params: OpoParams, T):
    """Normal-ordered ``<:x_T^2:>`` of the output integrated over ``T``.

    Adding the vacuum contribution 1/2 gives the variance of the collective
    quadrature (see :func:`gauss_squeeze.collective.oracle_var_xT`).
    """
    gam, g = params.gamma, params.g
    lam = gam - 4 * g
    T = np.asarray(T, dtype=float)
    bracket = lam * T + 2.0 * np.expm1(-0.5 * lam * T)
    return 8 * g * gam / (T * lam**3) * bracket


def oracle_var_xT_long_time(params: OpoParams) -> float:
    """``var(x_T)`` for ``T -> infinity``: ``(1/2) ((gamma+4g)/(gamma-4g))^2``."""
    gam, g = params.gamma, params.g
    return 0.5 * ((gam + 4 * g) / (gam - 4 * g)) ** 2
