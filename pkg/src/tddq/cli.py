"""Command-line experiment runner.

Subcommands wire scenario files to the analytic formulas and the simulator
and emit plotter-agnostic CSV:

  sojourn-sweep   mean sojourn vs utilization, coupled and decoupled,
                  analytic and simulated side by side
  residual-cdf    coupled vs decoupled (min-of-two) residual-time CDF,
                  closed form and Monte Carlo
  cycle-time      two-way cycle time mean and tail quantiles
  validate        quick oracle/invariant self-check, nonzero exit on failure

Exit codes: 0 success, 1 failed validation check, 2 bad input.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from contextlib import nullcontext
from dataclasses import dataclass, replace

import numpy as np

from .analytic import (
    CycleTimeModel,
    ResidualModel,
    cycle_time_stats,
    mg1_priority_sojourn,
    mg2_priority_sojourn,
    residual_cdf,
)
from .sim import SweepPoint, Topology, run, sweep
from .traffic import (
    ChannelModel,
    RateAdaptationTable,
    SaturationError,
    Scenario,
    TrafficConfig,
    default_scenario,
    load_scenario,
    region_probabilities,
    solve_arrival_rates,
)

__all__ = [
    "ExperimentSpec",
    "cmd_sojourn_sweep",
    "cmd_residual_cdf",
    "cmd_cycle_time",
    "cmd_validate",
    "main",
]


@dataclass(frozen=True)
class ExperimentSpec:
    """Resolved parameters of one CLI experiment."""

    experiment: str
    scenario: Scenario
    out: str
    seed: int
    rho_list: tuple[float, ...] = ()
    horizon: int = 200_000
    warmup: int | None = None
    n_samples: int = 100_000
    family: str = "exponential"
    rate: float = 1.0
    s_long: float = 10.0
    s_short: float = 1.0
    t_proc: float = 2.0
    grid_step: float = 0.1
    empirical_samples: tuple[float, ...] = ()
    mm1_tol: float = 0.02
    little_tol: float = 0.01

    def __post_init__(self) -> None:
        for rho in self.rho_list:
            if not (0.0 < rho < 1.0):
                raise ValueError(f"rho values must lie in (0, 1), got {rho}")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float) and math.isnan(x):
        return ""
    if isinstance(x, float):
        return format(x, ".9g")
    return str(x)


def _open_out(path: str):
    if path == "-":
        return nullcontext(sys.stdout)
    return open(path, "w", newline="", encoding="utf-8")


def _residual_model(spec: ExperimentSpec) -> ResidualModel:
    if spec.family == "exponential":
        return ResidualModel.exponential(spec.rate, spec.s_long)
    if spec.family == "truncated-exponential":
        return ResidualModel.truncated_exponential(spec.rate, spec.s_long)
    if spec.family == "uniform":
        return ResidualModel.uniform(spec.s_long)
    if spec.family == "empirical":
        return ResidualModel.empirical(spec.empirical_samples, spec.s_long)
    raise ValueError(f"unknown residual family {spec.family!r}")


def cmd_sojourn_sweep(spec: ExperimentSpec) -> int:
    """Sweep utilization; one row per (rho, topology, class)."""
    header = ["rho", "class", "topology", "count", "analytic_mean",
              "sim_mean", "sim_ci95", "rel_err", "error"]
    results = {
        topo: sweep(spec.scenario, topo, spec.rho_list, spec.horizon,
                    spec.warmup, seed_base=spec.seed)
        for topo in (Topology.COUPLED, Topology.DECOUPLED)
    }
    with _open_out(spec.out) as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for i, rho in enumerate(spec.rho_list):
            for topo in (Topology.COUPLED, Topology.DECOUPLED):
                point = results[topo][i]
                try:
                    config = spec.scenario.config_for(rho)
                    predict = (mg1_priority_sojourn if topo is Topology.COUPLED
                               else mg2_priority_sojourn)(config)
                    analytic = {"short": predict.mean_short, "long": predict.mean_long}
                except (SaturationError, ValueError) as exc:
                    analytic = {"short": None, "long": None}
                    if point.error is None:
                        point = SweepPoint(rho, point.summary, str(exc))
                for kind in ("short", "long"):
                    stats = getattr(point.summary, kind) if point.summary else None
                    sim_mean = stats.mean if stats and stats.count else None
                    sim_ci = stats.ci95 if stats and stats.count else None
                    ana = analytic[kind]
                    rel = (abs(sim_mean - ana) / ana
                           if sim_mean is not None and ana else None)
                    w.writerow([
                        _fmt(rho), kind, topo.value,
                        _fmt(stats.count if stats else None),
                        _fmt(ana), _fmt(sim_mean), _fmt(sim_ci), _fmt(rel),
                        point.error or "",
                    ])
    return 0


def cmd_residual_cdf(spec: ExperimentSpec) -> int:
    """Residual-time CDF on a y grid over (0, S_L), closed form and empirical."""
    model = _residual_model(spec)
    rng = np.random.default_rng(spec.seed)
    n = spec.n_samples
    emp_coupled = np.sort(model.sample(rng, n))
    emp_decoupled = np.sort(model.sample(rng, (n, 2)).min(axis=1))
    grid = np.arange(0.0, spec.s_long + spec.grid_step / 2, spec.grid_step)
    with _open_out(spec.out) as fh:
        w = csv.writer(fh)
        w.writerow(["y", "cdf_coupled", "cdf_decoupled",
                    "empirical_coupled", "empirical_decoupled"])
        for y in grid:
            w.writerow([
                _fmt(float(y)),
                _fmt(float(residual_cdf(model, y, decoupled=False))),
                _fmt(float(residual_cdf(model, y, decoupled=True))),
                _fmt(float(np.searchsorted(emp_coupled, y, side="right") / n)),
                _fmt(float(np.searchsorted(emp_decoupled, y, side="right") / n)),
            ])
    return 0


def cmd_cycle_time(spec: ExperimentSpec) -> int:
    """Cycle-time mean and tail quantiles for both access modes."""
    model = _residual_model(spec)
    rng = np.random.default_rng(spec.seed)
    rows = []
    for topo in (Topology.COUPLED, Topology.DECOUPLED):
        cycle = CycleTimeModel(
            s_short=spec.s_short, t_proc=spec.t_proc, residual=model,
            decoupled=topo is Topology.DECOUPLED,
        )
        mean, samples = cycle_time_stats(cycle, spec.n_samples, rng)
        q = np.quantile(samples, [0.5, 0.9, 0.99, 0.999])
        rows.append([topo.value, mean, *map(float, q)])
    with _open_out(spec.out) as fh:
        w = csv.writer(fh)
        w.writerow(["topology", "mean", "p50", "p90", "p99", "p999"])
        for row in rows:
            w.writerow([row[0]] + [_fmt(v) for v in row[1:]])
    return 0


def _check_normalization(rng: np.random.Generator) -> tuple[bool, str]:
    worst = 0.0
    for _ in range(1000):
        m = int(rng.integers(1, 7))
        inner = np.sort(rng.uniform(0.1, 50.0, size=m - 1))
        rates = np.sort(rng.uniform(0.05, 5.0, size=m))
        table = RateAdaptationTable(
            thresholds=(0.0, *map(float, inner), math.inf),
            rates=tuple(map(float, rates)),
        )
        channel = ChannelModel(mean_snr=float(rng.uniform(0.05, 50.0)))
        worst = max(worst, abs(float(region_probabilities(channel, table).sum()) - 1.0))
    return worst <= 1e-12, f"max |sum p - 1| = {worst:.3g}"


def _check_stability(spec: ExperimentSpec) -> tuple[bool, str]:
    s = spec.scenario
    for rho in s.rho_list:
        try:
            solve_arrival_rates(rho, s.lambda_ratio, s.channel, s.table, s.mu_short)
            s.config_for(rho)
        except (SaturationError, ValueError) as exc:
            return False, f"rho={rho}: {exc}"
    return True, f"{len(s.rho_list)} load points stable"


def _check_mm1(spec: ExperimentSpec) -> tuple[bool, str]:
    table = RateAdaptationTable(thresholds=(0.0, math.inf), rates=(1.0,))
    config = TrafficConfig(
        lambda_short=0.5, lambda_long=0.0, mu_short=1.0,
        channel=ChannelModel(1.0), table=table,
    )
    summary = run(config, Topology.COUPLED, spec.horizon, seed=spec.seed,
                  slot_aligned=False, exponential_service=True)
    rel = abs(summary.short.mean - 2.0) / 2.0
    return rel <= spec.mm1_tol, f"mean sojourn {summary.short.mean:.4f} vs 2.0 (rel {rel:.3%})"


def _check_conservation(spec: ExperimentSpec) -> tuple[bool, str]:
    s = spec.scenario
    rho = 0.7 if not s.rho_list else min(s.rho_list, key=lambda r: abs(r - 0.7))
    try:
        config = s.config_for(rho)
    except (SaturationError, ValueError) as exc:
        return False, f"rho={rho}: {exc}"
    summary = run(config, Topology.COUPLED, spec.horizon, seed=spec.seed)
    little = summary.little_residual
    busy_err = abs(summary.busy_fraction[0] - rho)
    ok = little < spec.little_tol and busy_err <= 0.01
    return ok, (f"rho={rho:g}: little residual {little:.4f} "
                f"(tol {spec.little_tol:g}), |busy - rho| = {busy_err:.4f}")


def _check_dominance() -> tuple[bool, str]:
    families = [
        ResidualModel.exponential(1.0, 10.0),
        ResidualModel.truncated_exponential(0.5, 10.0),
        ResidualModel.uniform(10.0),
        ResidualModel.empirical([0.5, 1.0, 2.5, 4.0, 9.5], 10.0),
    ]
    grid = np.linspace(0.0, 12.0, 241)
    for model in families:
        coupled = np.asarray(residual_cdf(model, grid, decoupled=False))
        decoupled = np.asarray(residual_cdf(model, grid, decoupled=True))
        if not (np.all(decoupled >= coupled - 1e-12)
                and np.all(np.diff(coupled) >= -1e-12)
                and np.all(np.diff(decoupled) >= -1e-12)
                and np.all((coupled >= 0) & (coupled <= 1))
                and np.all((decoupled >= 0) & (decoupled <= 1))):
            return False, f"dominance violated for family {model.family}"
    return True, f"{len(families)} families dominate pointwise"


def cmd_validate(spec: ExperimentSpec) -> int:
    """Run the oracle/invariant suite; exit 1 if any check fails."""
    rng = np.random.default_rng(spec.seed)
    checks = [
        ("region-prob-normalization", *_check_normalization(rng)),
        ("load-points-stable", *_check_stability(spec)),
        ("mm1-sanity", *_check_mm1(spec)),
        ("littles-law-and-busy", *_check_conservation(spec)),
        ("residual-dominance", *_check_dominance()),
    ]
    width = max(len(name) for name, _, _ in checks)
    failed = 0
    for name, ok, detail in checks:
        status = "PASS" if ok else "FAIL"
        print(f"{name:<{width}}  {status}  {detail}")
        failed += 0 if ok else 1
    print(f"{failed} of {len(checks)} checks failed" if failed
          else f"all {len(checks)} checks passed")
    return 1 if failed else 0


def _parse_rho_list(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _build_spec(args: argparse.Namespace) -> ExperimentSpec:
    if args.command == "validate":
        # validate reports saturated load points as a failed check instead of
        # rejecting the file outright
        scenario = (load_scenario(args.config, strict_rho=False)
                    if args.config else default_scenario())
    else:
        scenario = load_scenario(args.config) if args.config else default_scenario()
    rho_list = scenario.rho_list
    if getattr(args, "rho", None) is not None:
        rho_list = _parse_rho_list(args.rho)
    if args.command == "validate":
        # the stability check inspects the scenario's load points directly
        scenario = replace(scenario, rho_list=rho_list)
        rho_list = ()
    return ExperimentSpec(
        experiment=args.command,
        scenario=scenario,
        out=getattr(args, "out", "-"),
        seed=args.seed,
        rho_list=rho_list,
        horizon=args.horizon,
        warmup=getattr(args, "warmup", None),
        n_samples=getattr(args, "samples", 100_000),
        family=getattr(args, "family", "exponential"),
        rate=getattr(args, "rate", 1.0),
        s_long=getattr(args, "s_long", 10.0),
        s_short=getattr(args, "s_short", 1.0),
        t_proc=getattr(args, "t_proc", 2.0),
        grid_step=getattr(args, "grid_step", 0.1),
        empirical_samples=tuple(
            float(v) for v in getattr(args, "empirical_samples", "").split(",") if v.strip()
        ),
        mm1_tol=getattr(args, "mm1_tol", 0.02),
        little_tol=getattr(args, "little_tol", 0.01),
    )


def _add_common(p: argparse.ArgumentParser, horizon: int = 200_000) -> None:
    p.add_argument("--config", help="scenario file (key = value lines)")
    p.add_argument("--out", default="-", help="output CSV path ('-' for stdout)")
    p.add_argument("--seed", type=int, default=12345)
    p.add_argument("--horizon", type=int, default=horizon,
                   help="departures per simulation run")


def _add_residual_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", default="exponential",
                   choices=["exponential", "truncated-exponential", "uniform", "empirical"])
    p.add_argument("--rate", type=float, default=1.0, help="exponential rate")
    p.add_argument("--s-long", dest="s_long", type=float, default=10.0,
                   help="longest TTI bounding the residual support")
    p.add_argument("--empirical-samples", dest="empirical_samples", default="",
                   help="comma list of residual samples (family=empirical)")
    p.add_argument("--samples", type=int, default=100_000,
                   help="Monte Carlo sample count")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tddq",
        description="Latency of coupled vs decoupled access under flexible TDD",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sojourn-sweep", help="mean sojourn vs utilization")
    _add_common(p)
    p.add_argument("--rho", help="comma list overriding the scenario load points")
    p.add_argument("--warmup", type=int, default=None,
                   help="departures discarded (default 10%% of horizon)")

    p = sub.add_parser("residual-cdf", help="coupled vs min-of-two residual CDF")
    _add_common(p)
    _add_residual_flags(p)
    p.add_argument("--grid-step", dest="grid_step", type=float, default=0.1)

    p = sub.add_parser("cycle-time", help="two-way cycle time quantiles")
    _add_common(p)
    _add_residual_flags(p)
    p.add_argument("--s-short", dest="s_short", type=float, default=1.0)
    p.add_argument("--t-proc", dest="t_proc", type=float, default=2.0)

    p = sub.add_parser("validate", help="oracle/invariant self-check")
    _add_common(p)
    p.add_argument("--rho", help="comma list overriding the scenario load points")
    p.add_argument("--mm1-tol", dest="mm1_tol", type=float, default=0.02)
    p.add_argument("--little-tol", dest="little_tol", type=float, default=0.01)

    return parser


_COMMANDS = {
    "sojourn-sweep": cmd_sojourn_sweep,
    "residual-cdf": cmd_residual_cdf,
    "cycle-time": cmd_cycle_time,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = _build_spec(args)
        return _COMMANDS[args.command](spec)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
