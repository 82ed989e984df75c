"""Command-line front end: run a scenario, write CSV, report oracle deviations.

Usage::

    gauss-squeeze opo-variances --t-max 2e-7 --out opo.csv
    gauss-squeeze filter-scan --config scan.ini --delta-steps 41

A ``--config`` file uses INI syntax.  Keys are read from ``[DEFAULT]`` and
from a section named after the scenario, with dashes or underscores
(``kappa_sq = 1.83e6``).  Command-line flags override the file.

Exit status is 0 on success, 2 for invalid parameters and 1 for failures
during the run.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import math
import sys
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import collective, filter_cavity, magnetometry, opo
from .opo import DEFAULT_G, DEFAULT_GAMMA, Measured, OpoParams

__all__ = ["main", "build_parser", "ScenarioResult", "SCENARIOS"]

FLOAT_FORMAT = "%.9g"


class ConfigError(ValueError):
    """Invalid configuration file or value."""


@dataclass
class ScenarioResult:
    header: list[str]
    rows: np.ndarray
    summary: list[str]


def _fmt(x: float) -> str:
    return FLOAT_FORMAT % x


def _grid(t_max: float, dt_out: float) -> np.ndarray:
    if not (t_max > 0 and dt_out > 0):
        raise ValueError("t_max and dt_out must be positive")
    n = max(1, int(round(t_max / dt_out)))
    return np.linspace(0.0, t_max, n + 1)


def _opo_params(args) -> OpoParams:
    return OpoParams(args.gamma, args.g, args.tau)


# -- scenarios ---------------------------------------------------------------

def run_opo_variances(args) -> ScenarioResult:
    params = _opo_params(args)
    t_max = args.t_max if args.t_max is not None else 50.0 / params.gamma
    dt_out = args.dt_out if args.dt_out is not None else t_max / 100
    uncond = opo.simulate_intracavity(params, t_max, Measured.NONE, dt_out)
    cond = opo.simulate_intracavity(params, t_max, Measured.P, dt_out)
    rows = np.column_stack([uncond.times, uncond.var_xc, uncond.var_pc, cond.var_pc, cond.purity])
    ox, op = opo.oracle_intracavity(params, uncond.times, Measured.NONE)
    _, opc = opo.oracle_intracavity(params, cond.times, Measured.P)
    err = max(
        np.abs(uncond.var_xc - ox).max(), np.abs(uncond.var_pc - op).max(), np.abs(cond.var_pc - opc).max()
    )
    summary = [
        f"segments: {int(round(t_max / params.tau))}, tau = {_fmt(params.tau)} s",
        f"final var_pc (conditioned) = {_fmt(cond.var_pc[-1])}",
        f"max |simulated - oracle| = {_fmt(err)}",
    ]
    header = ["t", "var_xc_uncond", "var_pc_uncond", "var_pc_cond", "purity"]
    return ScenarioResult(header, rows, summary)


def run_collective(args) -> ScenarioResult:
    params = _opo_params(args)
    t_max = args.t_max if args.t_max is not None else 10.0 / params.gamma
    n = int(round(t_max / params.tau))
    if n > collective.MAX_SEGMENTS:
        raise ValueError(
            f"t_max/tau = {n} segments exceeds the limit of {collective.MAX_SEGMENTS}; raise --tau"
        )
    lam_x = params.gamma - 4 * params.g
    lam_p = params.gamma + 4 * params.g
    x_chain = collective.chain_evolve(params, n, params.gamma / lam_x, keep_matrix=False)
    p_chain = collective.chain_evolve(params.mirrored(), n, params.gamma / lam_p, keep_matrix=False)
    T, vx = collective.collective_series(x_chain)
    _, vp = collective.collective_series(p_chain)
    every = 1 if args.dt_out is None else max(1, int(round(args.dt_out / params.tau)))
    if args.dt_out is None:
        every = max(1, n // 100)
    pick = np.arange(every - 1, n, every)
    if pick[-1] != n - 1:
        pick = np.append(pick, n - 1)
    T, vx, vp = T[pick], vx[pick], vp[pick]
    ox = collective.steady_var_xT(params, T)
    op = collective.oracle_var_pT(params, T)
    cols = [T, vx, ox, vp, op]
    header = ["T", "var_xT_sim", "var_xT_oracle", "var_pT_sim", "var_pT_oracle"]
    if args.show_paper_eq58:  # flag name fixed by the CLI interface
        cols.append(collective.printed_appendix_var_pT(params, T))
        header.append("var_pT_printed_appendix")
    lim_x, lim_p = collective.var_limits(params)
    summary = [
        f"segments: {n}, tau = {_fmt(params.tau)} s",
        f"var_xT(T_max) = {_fmt(vx[-1])}, var_pT(T_max) = {_fmt(vp[-1])}",
        f"limits T->inf: var_xT = {_fmt(lim_x)}, var_pT = {_fmt(lim_p)}",
        f"max |simulated - oracle| = {_fmt(max(np.abs(vx - ox).max(), np.abs(vp - op).max()))}",
    ]
    return ScenarioResult(header, np.column_stack(cols), summary)


def run_filter_scan(args) -> ScenarioResult:
    gamma2 = args.gamma2 if args.gamma2 is not None else args.gamma
    params = filter_cavity.FilterParams(args.gamma, args.g, gamma2, 0.0, args.tau)
    lo = args.delta_min if args.delta_min is not None else -3 * args.gamma
    hi = args.delta_max if args.delta_max is not None else 3 * args.gamma
    if args.delta_steps < 1 or not hi >= lo:
        raise ValueError("delta grid needs delta_steps >= 1 and delta_max >= delta_min")
    deltas = np.linspace(lo, hi, args.delta_steps)
    scan = filter_cavity.scan_detuning(params, deltas, args.method)
    summary = [f"detunings: {len(deltas)}, method = {args.method}"]
    zero = np.flatnonzero(deltas == 0.0)
    if zero.size:
        i = zero[0]
        err = max(
            abs(scan.v_max[i] - filter_cavity.oracle_vmax(params)),
            abs(scan.v_min[i] - filter_cavity.oracle_vmin(params)),
        )
        summary.append(f"at delta = 0: V_min = {_fmt(scan.v_min[i])}, V_max = {_fmt(scan.v_max[i])}")
        summary.append(f"max |simulated - oracle| = {_fmt(err)}")
    else:
        summary.append("no oracle comparison (delta = 0 not on the grid)")
    return ScenarioResult(["delta", "v_min", "v_max"], np.column_stack([deltas, scan.v_min, scan.v_max]), summary)


def _mag_params(args, probe) -> magnetometry.MagnetometryParams:
    op = OpoParams(args.gamma, args.g)
    r = args.r if args.r is not None else magnetometry.squeezing_ratio(op)
    return magnetometry.MagnetometryParams(args.kappa_sq, args.mu, args.var_b0, probe, r, op, args.tau)


def run_magnetometry(args) -> ScenarioResult:
    coh = _mag_params(args, magnetometry.Probe.COHERENT)
    sq = _mag_params(args, magnetometry.Probe.SQUEEZED)
    op = _mag_params(args, magnetometry.Probe.OPO)
    t_max = args.t_max if args.t_max is not None else 2e-5
    dt_out = args.dt_out if args.dt_out is not None else t_max / 100
    times = _grid(t_max, dt_out)
    v_coh = magnetometry.estimate_variance(coh, times).var_B
    v_opo = magnetometry.estimate_variance(op, times).var_B
    v_sq = magnetometry.estimate_variance(sq, times).var_B
    err = max(
        np.abs(v_coh - magnetometry.oracle_var_B(coh, times)).max(),
        np.abs(v_sq - magnetometry.oracle_var_B(sq, times)).max(),
    )
    delay = magnetometry.effective_delay(op.opo)
    summary = [
        f"r = {_fmt(sq.r)}, delay = {_fmt(delay)} s",
        f"at t_max: coherent {_fmt(v_coh[-1])}, opo {_fmt(v_opo[-1])}, squeezed {_fmt(v_sq[-1])} pT^2",
        f"max |riccati - oracle| (coherent, squeezed) = {_fmt(err)}",
    ]
    return ScenarioResult(
        ["t", "var_coherent", "var_opo", "var_squeezed"], np.column_stack([times, v_coh, v_opo, v_sq]), summary
    )


def run_montecarlo(args) -> ScenarioResult:
    params = _mag_params(args, magnetometry.Probe.COHERENT)
    t_max = args.t_max if args.t_max is not None else 1.6e-5
    dt_out = args.dt_out if args.dt_out is not None else t_max / 5
    times = _grid(t_max, dt_out)[1:]
    if args.trajectories < 2:
        raise ValueError("montecarlo needs at least 2 trajectories")
    res = magnetometry.run_ensemble(params, args.true_b, args.seed, times, n_traj=args.trajectories)
    stderr = res.mse_stderr
    z = np.abs(res.mse - res.var_B) / np.where(stderr > 0, stderr, np.inf)
    summary = [
        f"trajectories: {args.trajectories}, seed = {args.seed}, true_B = {_fmt(args.true_b)} pT",
        f"max |mse - var_B| = {_fmt(np.abs(res.mse - res.var_B).max())} pT^2",
        f"max |mse - var_B| / stderr = {_fmt(z.max())}",
    ]
    return ScenarioResult(
        ["t", "var_B", "mse", "mse_stderr"], np.column_stack([times, res.var_B, res.mse, stderr]), summary
    )


SCENARIOS: dict[str, Callable] = {
    "opo-variances": run_opo_variances,
    "collective": run_collective,
    "filter-scan": run_filter_scan,
    "magnetometry": run_magnetometry,
    "montecarlo": run_montecarlo,
}


# -- argument handling -------------------------------------------------------

def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with parameter defaults")
    p.add_argument("--out", help="CSV output path (default: standard output)")
    p.add_argument("--gamma", type=float, default=DEFAULT_GAMMA, help="OPO decay rate, s^-1 (default 2*pi*6e6)")
    p.add_argument("--g", type=float, default=DEFAULT_G, help="OPO gain, s^-1 (default 0.2*gamma)")
    p.add_argument("--tau", type=float, default=None, help="segment length, s (default 1e-3 / fastest rate)")
    p.add_argument("--t-max", type=float, default=None, help="final time, s")
    p.add_argument("--dt-out", type=float, default=None, help="output spacing, s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gauss-squeeze", description="Gaussian-state simulations of OPO squeezing and magnetometry."
    )
    sub = parser.add_subparsers(dest="scenario", required=True, metavar="scenario")

    p = sub.add_parser("opo-variances", help="intracavity variances, unconditioned and p-measured")
    _add_common(p)

    p = sub.add_parser("collective", help="variances of the collective output quadratures")
    _add_common(p)
    p.add_argument("--show-paper-eq58", action="store_true", help="add the printed appendix var_pT expression")

    p = sub.add_parser("filter-scan", help="analysis-cavity V_min/V_max against detuning")
    _add_common(p)
    p.add_argument("--gamma2", type=float, default=None, help="analysis cavity decay, s^-1 (default gamma)")
    p.add_argument("--delta-min", type=float, default=None, help="lowest detuning, s^-1 (default -3 gamma)")
    p.add_argument("--delta-max", type=float, default=None, help="highest detuning, s^-1 (default 3 gamma)")
    p.add_argument("--delta-steps", type=int, default=61, help="number of detunings (default 61)")
    p.add_argument("--method", choices=("riccati", "segments"), default="riccati")

    for name, text in (
        ("magnetometry", "var(B) for coherent, OPO and broadband squeezed probes"),
        ("montecarlo", "sampled estimator error against var(B), coherent probe"),
    ):
        p = sub.add_parser(name, help=text)
        _add_common(p)
        p.add_argument("--kappa-sq", type=float, default=magnetometry.DEFAULT_KAPPA_SQ, help="s^-1 (default 1.83e6)")
        p.add_argument("--mu", type=float, default=magnetometry.DEFAULT_MU, help="s^-1 pT^-1 (default 8.79e4)")
        p.add_argument("--var-b0", type=float, default=1.0, help="prior variance of B, pT^2 (default 1)")
        p.add_argument("--r", type=float, default=None, help="broadband squeezing (default ((gamma+4g)/(gamma-4g))^2)")
        if name == "montecarlo":
            p.add_argument("--seed", type=int, default=0, help="base seed (default 0)")
            p.add_argument("--trajectories", type=int, default=1000, help="number of runs (default 1000)")
            p.add_argument("--true-b", type=float, default=1.0, help="field driving the record, pT (default 1)")
    return parser


def _subparser(parser: argparse.ArgumentParser, scenario: str) -> argparse.ArgumentParser:
    for action in parser._subparsers._group_actions:  # noqa: SLF001
        if isinstance(action, argparse._SubParsersAction):  # noqa: SLF001
            return action.choices[scenario]
    raise KeyError(scenario)


def _config_defaults(path: str, scenario: str, sub: argparse.ArgumentParser) -> dict:
    cfg = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            cfg.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    items = dict(cfg.defaults())
    if cfg.has_section(scenario):
        items.update(cfg.items(scenario))
    actions = {a.dest: a for a in sub._actions}  # noqa: SLF001
    out = {}
    for key, raw in items.items():
        dest = key.strip().replace("-", "_")
        if dest in ("config", "help") or dest not in actions:
            raise ConfigError(f"unknown config key {key!r} for scenario {scenario}")
        action = actions[dest]
        if isinstance(action, argparse._StoreTrueAction):  # noqa: SLF001
            out[dest] = raw.strip().lower() in ("1", "true", "yes", "on")
            continue
        try:
            value = action.type(raw) if action.type else raw
        except ValueError:
            raise ConfigError(f"bad value for {key}: {raw!r}") from None
        if action.choices is not None and value not in action.choices:
            raise ConfigError(f"bad value for {key}: {raw!r}")
        out[dest] = value
    return out


def parse_args(argv: Sequence[str] | None = None) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        sub = _subparser(parser, args.scenario)
        sub.set_defaults(**_config_defaults(args.config, args.scenario, sub))
        args = parser.parse_args(argv)
    for key, value in vars(args).items():
        if isinstance(value, float) and not math.isfinite(value):
            raise ConfigError(f"{key} must be finite")
    return args


def write_csv(result: ScenarioResult, stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(result.header)
    for row in result.rows:
        writer.writerow([_fmt(v) for v in row])


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = parse_args(argv)
    except SystemExit as exc:  # argparse usage errors exit with 2
        return int(exc.code or 0)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        result = SCENARIOS[args.scenario](args)
    except ValueError as exc:
        print(f"error: invalid parameters: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1

    buf = io.StringIO()
    write_csv(result, buf)
    if args.out:
        try:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(buf.getvalue())
        except OSError as exc:
            print(f"error: cannot write {args.out}: {exc}", file=sys.stderr)
            return 1
        report = sys.stdout
    else:
        sys.stdout.write(buf.getvalue())
        report = sys.stderr
    print(f"scenario: {args.scenario}", file=report)
    for line in result.summary:
        print(line, file=report)
    return 0


if __name__ == "__main__":
    sys.exit(main())
