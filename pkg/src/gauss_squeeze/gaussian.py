"""Multimode Gaussian states over labelled quadrature variables.

Covariances use the convention ``cov_ij = 2 Re<(y_i - <y_i>)(y_j - <y_j>)>``,
so the vacuum covariance is the identity and ``variance(v) = cov_vv / 2``.

Quantum modes are pairs of labels ``x_<mode>`` / ``p_<mode>``.  Any other
name is a classical parameter (for instance the magnetic field ``B``): a
single row without a conjugate partner, ignored by the physicality checks.

Every operation is pure: the input state is left untouched and a new
state is returned.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "Kind",
    "Label",
    "GaussianState",
    "StepMatrix",
    "HomodyneOutcome",
    "PhysicalityReport",
    "as_label",
    "mode_labels",
    "new_vacuum",
    "apply_linear",
    "attach_vacuum",
    "attach_squeezed",
    "attach_block",
    "condition_homodyne",
    "sample_homodyne",
    "trace_out",
    "check_physical",
    "symplectic_form",
    "segment_cycle",
    "CompiledCycle",
]

# Relative cutoff below which the projected measured block counts as rank zero.
PINV_RCOND = 1e-12


class Kind(enum.Enum):
    POSITION = "position"
    MOMENTUM = "momentum"
    CLASSICAL = "classical"


@dataclass(frozen=True)
class Label:
    """Name and role of one row of a Gaussian state."""

    name: str
    kind: Kind

    @property
    def mode(self) -> str | None:
        """Mode key shared by an ``x_``/``p_`` pair, ``None`` for classical rows."""
        if self.kind is Kind.CLASSICAL:
            return None
        return self.name[2:]

    @property
    def partner(self) -> str | None:
        if self.kind is Kind.POSITION:
            return "p_" + self.name[2:]
        if self.kind is Kind.MOMENTUM:
            return "x_" + self.name[2:]
        return None

    def __str__(self) -> str:
        return self.name


def as_label(label: Label | str) -> Label:
    """Coerce a name to a :class:`Label`; ``x_*``/``p_*`` names are quadratures."""
    if isinstance(label, Label):
        return label
    if not isinstance(label, str) or not label:
        raise TypeError(f"label must be a non-empty string or Label, got {label!r}")
    if label.startswith("x_") and len(label) > 2:
        return Label(label, Kind.POSITION)
    if label.startswith("p_") and len(label) > 2:
        return Label(label, Kind.MOMENTUM)
    return Label(label, Kind.CLASSICAL)


def mode_labels(mode: str) -> tuple[Label, Label]:
    """The ``(x_mode, p_mode)`` label pair of a quantum mode."""
    return Label("x_" + mode, Kind.POSITION), Label("p_" + mode, Kind.MOMENTUM)


def _coerce_labels(labels: Iterable[Label | str]) -> tuple[Label, ...]:
    out = tuple(as_label(lab) for lab in labels)
    names = [lab.name for lab in out]
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ValueError(f"duplicate labels: {dupes}")
    return out


def _check_partners(labels: Sequence[Label]) -> None:
    names = {lab.name for lab in labels}
    for lab in labels:
        if lab.partner is not None and lab.partner not in names:
            raise ValueError(f"label {lab.name!r} has no conjugate partner {lab.partner!r}")


@dataclass
class GaussianState:
    """Mean vector and covariance matrix over an ordered list of labels."""

    labels: tuple[Label, ...]
    mean: np.ndarray
    cov: np.ndarray
    _index: dict[str, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.labels = _coerce_labels(self.labels)
        _check_partners(self.labels)
        n = len(self.labels)
        self.mean = np.array(self.mean, dtype=float).reshape(n)
        self.cov = np.array(self.cov, dtype=float).reshape(n, n)
        self._index = {lab.name: i for i, lab in enumerate(self.labels)}

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(lab.name for lab in self.labels)

    def __len__(self) -> int:
        return len(self.labels)

    def __contains__(self, name: object) -> bool:
        if isinstance(name, Label):
            name = name.name
        return name in self._index

    def index(self, label: Label | str) -> int:
        name = label.name if isinstance(label, Label) else label
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"unknown label {name!r}; state has {list(self.names)}") from None

    def indices(self, labels: Iterable[Label | str]) -> list[int]:
        return [self.index(lab) for lab in labels]

    def variance(self, label: Label | str) -> float:
        i = self.index(label)
        return 0.5 * float(self.cov[i, i])

    def mean_of(self, label: Label | str) -> float:
        return float(self.mean[self.index(label)])

    def block(self, labels: Sequence[Label | str]) -> np.ndarray:
        """Covariance sub-block (cov convention) for the given labels."""
        idx = self.indices(labels)
        return self.cov[np.ix_(idx, idx)].copy()

    def with_mean(self, label: Label | str, value: float) -> "GaussianState":
        mean = self.mean.copy()
        mean[self.index(label)] = value
        return GaussianState(self.labels, mean, self.cov)

    def with_cov(self, label: Label | str, value: float) -> "GaussianState":
        """Replace the diagonal covariance entry of one uncorrelated row."""
        i = self.index(label)
        cov = self.cov.copy()
        cov[i, :] = 0.0
        cov[:, i] = 0.0
        cov[i, i] = value
        return GaussianState(self.labels, self.mean, cov)

    def mode_pairs(self) -> list[tuple[int, int]]:
        """Index pairs ``(i_x, i_p)`` of every quantum mode, in order of appearance."""
        pairs = []
        for i, lab in enumerate(self.labels):
            if lab.kind is Kind.POSITION:
                pairs.append((i, self._index[lab.partner]))
        return pairs


@dataclass
class StepMatrix:
    """Linear map ``y -> S y`` acting on the listed labels."""

    matrix: np.ndarray
    labels: tuple[Label, ...]

    def __post_init__(self) -> None:
        self.labels = _coerce_labels(self.labels)
        self.matrix = np.array(self.matrix, dtype=float)
        n = len(self.labels)
        if self.matrix.shape != (n, n):
            raise ValueError(
                f"step matrix shape {self.matrix.shape} does not match {n} labels"
            )

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(lab.name for lab in self.labels)

    def entry(self, row: Label | str, col: Label | str) -> float:
        names = self.names
        r = row.name if isinstance(row, Label) else row
        c = col.name if isinstance(col, Label) else col
        return float(self.matrix[names.index(r), names.index(c)])


@dataclass(frozen=True)
class HomodyneOutcome:
    value: float
    measured_label: Label
    log_likelihood: float


@dataclass(frozen=True)
class PhysicalityReport:
    """``min_eigenvalue`` is the smallest eigenvalue of ``cov + i*Omega`` on the
    quantum rows; negative values flag an unphysical state.  ``purity`` maps each
    mode to ``1/sqrt(det)`` of its 2x2 block (1 for pure single-mode states)."""

    min_eigenvalue: float
    symmetric_defect: float
    purity: dict[str, float]

    @property
    def physical_defect(self) -> float:
        return max(0.0, -self.min_eigenvalue)


def _symmetrize(cov: np.ndarray) -> np.ndarray:
    return 0.5 * (cov + cov.T)


def symplectic_form(n_modes: int) -> np.ndarray:
    """Block skew form for ``n_modes`` ordered as ``(x1, p1, x2, p2, ...)``."""
    return np.kron(np.eye(n_modes), np.array([[0.0, 1.0], [-1.0, 0.0]]))


def new_vacuum(labels: Iterable[Label | str]) -> GaussianState:
    """Zero mean and identity covariance over ``labels``.

    Classical rows also receive a unit diagonal; override it with
    :meth:`GaussianState.with_cov` when a prior variance is known.
    """
    labels = _coerce_labels(labels)
    n = len(labels)
    return GaussianState(labels, np.zeros(n), np.eye(n))


def attach_block(
    state: GaussianState,
    labels: Iterable[Label | str],
    cov: np.ndarray,
    mean: np.ndarray | None = None,
) -> GaussianState:
    """Append uncorrelated rows with the given covariance block."""
    new = _coerce_labels(labels)
    clash = [lab.name for lab in new if lab.name in state]
    if clash:
        raise ValueError(f"duplicate labels: {clash}")
    k = len(new)
    n = len(state)
    cov = np.asarray(cov, dtype=float).reshape(k, k)
    full = np.zeros((n + k, n + k))
    full[:n, :n] = state.cov
    full[n:, n:] = cov
    m = np.zeros(k) if mean is None else np.asarray(mean, dtype=float).reshape(k)
    return GaussianState(state.labels + new, np.concatenate([state.mean, m]), full)


def attach_vacuum(state: GaussianState, labels: Iterable[Label | str]) -> GaussianState:
    new = _coerce_labels(labels)
    return attach_block(state, new, np.eye(len(new)))


def attach_squeezed(
    state: GaussianState, labels: Iterable[Label | str], r: float
) -> GaussianState:
    """Attach one mode in the squeezed vacuum ``diag(1/r, r)``."""
    if not r > 0 or not math.isfinite(r):
        raise ValueError(f"squeezing ratio must be positive and finite, got {r}")
    new = _coerce_labels(labels)
    if len(new) != 2 or new[0].kind is not Kind.POSITION or new[1].partner != new[0].name:
        raise ValueError("attach_squeezed needs an (x_mode, p_mode) label pair")
    return attach_block(state, new, np.diag([1.0 / r, r]))


def apply_linear(state: GaussianState, step: StepMatrix) -> GaussianState:
    """``mean -> S mean``, ``cov -> S cov S^T``; identity on rows the step omits."""
    names = step.names
    if names == state.names:
        S = step.matrix
    else:
        try:
            idx = state.indices(names)
        except KeyError as exc:
            raise ValueError(f"step labels not in state: {exc.args[0]}") from None
        S = np.eye(len(state))
        S[np.ix_(idx, idx)] = step.matrix
    mean = S @ state.mean
    cov = _symmetrize(S @ state.cov @ S.T)
    return GaussianState(state.labels, mean, cov)


def trace_out(state: GaussianState, labels: Iterable[Label | str]) -> GaussianState:
    """Delete the rows and columns of ``labels``."""
    drop = set(state.indices(labels))
    keep = [i for i in range(len(state)) if i not in drop]
    return GaussianState(
        tuple(state.labels[i] for i in keep),
        state.mean[keep],
        state.cov[np.ix_(keep, keep)],
    )


def _measured_group(state: GaussianState, measured: Label | str) -> tuple[list[int], int]:
    """Indices of the measured mode (quadrature pair, or the lone classical row)
    and the position of the measured quadrature inside that group."""
    lab = state.labels[state.index(measured)]
    if lab.partner is None:
        return [state.index(lab)], 0
    group = sorted([state.index(lab), state.index(lab.partner)])
    return group, group.index(state.index(lab))


def _projected_pinv(B: np.ndarray, slot: int) -> np.ndarray:
    """Moore-Penrose pseudoinverse of ``pi B pi`` with ``pi`` selecting ``slot``.

    ``pi B pi`` has the single non-zero entry ``B[slot, slot]``, so its
    pseudoinverse is ``1/B[slot, slot]`` in that slot (or zero when the entry
    is below the rank cutoff).
    """
    out = np.zeros_like(B)
    bq = B[slot, slot]
    scale = np.abs(B).max() if B.size else 0.0
    if bq > PINV_RCOND * scale:
        out[slot, slot] = 1.0 / bq
    return out


def _condition(
    state: GaussianState, measured: Label | str, outcome: float | None
) -> GaussianState:
    group, slot = _measured_group(state, measured)
    keep = [i for i in range(len(state)) if i not in group]
    A = state.cov[np.ix_(keep, keep)]
    C = state.cov[np.ix_(keep, group)]
    B = state.cov[np.ix_(group, group)]
    P = _projected_pinv(B, slot)
    cov = _symmetrize(A - C @ P @ C.T)
    mean = state.mean[keep].copy()
    if outcome is not None:
        e = np.zeros(len(group))
        e[slot] = outcome - state.mean[group[slot]]
        mean = mean + C @ P @ e
    return GaussianState(tuple(state.labels[i] for i in keep), mean, cov)


def condition_homodyne(
    state: GaussianState, measured: Label | str, outcome: float
) -> GaussianState:
    """Condition on a homodyne outcome of ``measured`` and discard the measured mode.

    ``A -> A - C (pi B pi)^- C^T`` for the retained block ``A``, measured-mode
    block ``B`` and cross block ``C``.  The mean of the retained rows moves by
    ``C (pi B pi)^- e (outcome - mean_measured)``.  The cov-convention factor of
    two cancels between ``C`` and the pseudoinverse.
    """
    if not math.isfinite(outcome):
        raise ValueError(f"homodyne outcome must be finite, got {outcome}")
    i = state.index(measured)
    bqq = state.cov[i, i]
    if not bqq > 0:
        raise ValueError(f"measured variance of {measured} is {bqq/2}, must be positive")
    return _condition(state, measured, outcome)


def _log_normal_pdf(x: float, mean: float, var: float) -> float:
    return -0.5 * (math.log(2.0 * math.pi * var) + (x - mean) ** 2 / var)


def sample_homodyne(
    state: GaussianState, measured: Label | str, rng: np.random.Generator
) -> tuple[HomodyneOutcome, GaussianState]:
    """Draw an outcome from the marginal ``N(mean_q, cov_qq/2)`` and condition on it.

    A vanishing measured variance is clamped: the outcome equals the mean and
    the retained rows are left as they are.
    """
    i = state.index(measured)
    lab = state.labels[i]
    mu = float(state.mean[i])
    bqq = float(state.cov[i, i])
    if bqq < 0:
        raise ValueError(f"measured variance of {lab.name} is {bqq/2}, must be positive")
    var = 0.5 * bqq
    if var > 0:
        value = mu + math.sqrt(var) * float(rng.standard_normal())
        loglik = _log_normal_pdf(value, mu, var)
    else:
        value = mu
        loglik = math.inf
    return HomodyneOutcome(value, lab, loglik), _condition(state, lab, value)


def check_physical(state: GaussianState) -> PhysicalityReport:
    """Report uncertainty-principle violation, asymmetry and per-mode purity.

    Never raises; classical rows are skipped.
    """
    cov = state.cov
    scale = max(1.0, float(np.abs(cov).max())) if cov.size else 1.0
    sym = float(np.abs(cov - cov.T).max()) / scale if cov.size else 0.0
    pairs = state.mode_pairs()
    purity = {}
    if not pairs:
        return PhysicalityReport(math.inf, sym, purity)
    order = [i for pair in pairs for i in pair]
    q = _symmetrize(cov[np.ix_(order, order)])
    herm = q + 1j * symplectic_form(len(pairs))
    min_ev = float(np.linalg.eigvalsh(herm).min())
    for ix, ip in pairs:
        blk = cov[np.ix_([ix, ip], [ix, ip])]
        det = float(np.linalg.det(blk))
        purity[state.labels[ix].mode] = 1.0 / math.sqrt(det) if det > 0 else math.inf
    return PhysicalityReport(min_ev, sym, purity)


def segment_cycle(
    state: GaussianState,
    step: StepMatrix,
    probe_labels: Sequence[Label | str],
    probe_cov: np.ndarray | None = None,
    measured: Label | str | None = None,
    outcome: float | None = None,
    rng: np.random.Generator | None = None,
) -> tuple[GaussianState, HomodyneOutcome | None]:
    """One segment: attach the probe, apply ``step``, then detect or discard the probe.

    With ``measured=None`` the probe is traced out.  Otherwise the measured
    quadrature is sampled when ``rng`` is given, conditioned on ``outcome``
    when given, and conditioned on its predicted mean (leaving means unchanged)
    when neither is given.
    """
    probe = _coerce_labels(probe_labels)
    cov = np.eye(len(probe)) if probe_cov is None else probe_cov
    joint = apply_linear(attach_block(state, probe, cov), step)
    if measured is None:
        return trace_out(joint, probe), None
    if rng is not None:
        result, after = sample_homodyne(joint, measured, rng)
        return after, result
    i = joint.index(measured)
    value = float(joint.mean[i]) if outcome is None else float(outcome)
    var = 0.5 * float(joint.cov[i, i])
    loglik = _log_normal_pdf(value, float(joint.mean[i]), var) if var > 0 else math.inf
    after = condition_homodyne(joint, measured, value)
    return after, HomodyneOutcome(value, joint.labels[i], loglik)


class CompiledCycle:
    """Array kernel for repeating :func:`segment_cycle` on a fixed layout.

    The probe enters uncorrelated with the retained rows, so after the step
    the retained block is ``S_kk A S_kk^T + S_kp P S_kp^T`` and the measured
    row has cross-covariance ``S_kk A s_q + S_kp P p_q`` with the retained
    rows.  Long loops call :meth:`advance` directly on arrays; the result
    matches :func:`segment_cycle` to rounding error.
    """

    def __init__(
        self,
        labels: Sequence[Label | str],
        step: StepMatrix,
        probe_labels: Sequence[Label | str],
        probe_cov: np.ndarray | None = None,
        measured: Label | str | None = None,
    ) -> None:
        self.labels = _coerce_labels(labels)
        probe = _coerce_labels(probe_labels)
        template = attach_block(
            GaussianState(self.labels, np.zeros(len(self.labels)), np.eye(len(self.labels))),
            probe,
            np.eye(len(probe)),
        )
        n = len(self.labels)
        S = np.eye(len(template))
        idx = template.indices(step.names)
        S[np.ix_(idx, idx)] = step.matrix
        P = np.eye(len(probe)) if probe_cov is None else np.asarray(probe_cov, dtype=float)
        self.S_kk = S[:n, :n].copy()
        S_kp = S[:n, n:]
        self.noise = S_kp @ P @ S_kp.T
        self.measured = None if measured is None else as_label(measured)
        if self.measured is not None:
            q = template.index(self.measured)
            if q < n:
                raise ValueError("measured label must belong to the probe")
            self.s_q = S[q, :n].copy()
            self.cross_noise = S_kp @ P @ S[q, n:]
            self.var_noise = float(S[q, n:] @ P @ S[q, n:])

    def predict(self, mean: np.ndarray, cov: np.ndarray):
        """Predicted mean and cov-convention variance of the measured quadrature."""
        if self.measured is None:
            raise ValueError("cycle has no measured quadrature")
        return mean @ self.s_q, float(self.s_q @ cov @ self.s_q) + self.var_noise

    def advance(self, mean: np.ndarray, cov: np.ndarray, residual=None):
        """One cycle on arrays.

        ``mean`` may be a single vector or a stack ``(n_traj, n)``.  ``residual``
        is ``outcome - predicted_mean`` (scalar or per trajectory); ``None``
        leaves the means at their predicted values.  Returns
        ``(mean, cov, predicted_q, bqq)`` where ``predicted_q`` is the predicted
        mean of the measured quadrature and ``bqq`` its cov-convention variance
        (both ``None`` without a measurement).
        """
        Skk = self.S_kk
        m = mean @ Skk.T
        A = Skk @ cov @ Skk.T + self.noise
        if self.measured is None:
            return m, 0.5 * (A + A.T), None, None
        pred, bqq = self.predict(mean, cov)
        c = Skk @ (cov @ self.s_q) + self.cross_noise
        if not bqq > PINV_RCOND * max(1.0, float(np.abs(A).max())):
            return m, 0.5 * (A + A.T), pred, bqq
        A = A - np.outer(c, c) / bqq
        if residual is not None:
            m = m + np.multiply.outer(np.asarray(residual, dtype=float), c / bqq)
        return m, 0.5 * (A + A.T), pred, bqq
