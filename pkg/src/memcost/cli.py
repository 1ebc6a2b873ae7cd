"""Command-line front end.

Subcommands: threshold, rho, cost-curve, ols, simulate, verify, spectrum.
Tables go to stdout as CSV (metadata in leading ``#`` lines) or JSON; every
table embeds the exact config and seed needed to reproduce it, and numeric
cells carry 17 significant digits so byte-identical reruns are possible.
Exit codes: 0 success, 1 verification/check failure, 2 usage/validation
error.

``simulate --out DIR`` writes two files.  ``trials.csv`` holds one row per
trial per metric with columns (trial, metric, value), where metric is one of
rho, train_ridge, cost, ols_gap.  ``summary.json`` holds {config, metadata,
metrics}, and each metrics entry carries mean, se, and (when an asymptotic
target exists) target and rel_dev.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import cost_engine as ce
from . import finite_n_lab as lab
from .deformed import PopulationSpectrum, load_population_spectrum
from .errors import (
    DomainError,
    MemcostError,
    NearDivergenceError,
    RegimeError,
    SpectrumFormatError,
)
from .spectra import MPLaw, bai_yin_check, esd_from_design, kolmogorov_distance, mp_stieltjes_neg

__all__ = ["main", "OutputTable", "parse_grid"]


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


@dataclass
class OutputTable:
    header: list[str]
    rows: list[tuple]
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for row in self.rows:
            if len(row) != len(self.header):
                raise DomainError("table rows must match the header length")

    def to_csv(self) -> str:
        lines = [f"# memcost {__version__}"]
        for key in sorted(self.metadata):
            lines.append(f"# {key}: {json.dumps(self.metadata[key], sort_keys=True)}")
        lines.append(",".join(self.header))
        for row in self.rows:
            lines.append(",".join(_fmt(v) for v in row))
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        payload = {
            "config": self.metadata.get("config", {}),
            "metadata": {"version": __version__, **{k: v for k, v in self.metadata.items() if k != "config"}},
            "columns": self.header,
            "rows": [list(row) for row in self.rows],
        }
        return json.dumps(payload, sort_keys=True, indent=2) + "\n"

    def render(self, fmt: str) -> str:
        return self.to_json() if fmt == "json" else self.to_csv()


def parse_grid(spec: str) -> list[float]:
    """Parse `start:step:stop`, inclusive of stop within half a step."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise DomainError(f"grid spec must be start:step:stop, got {spec!r}")
    try:
        start, step, stop = (float(p) for p in parts)
    except ValueError:
        raise DomainError(f"non-numeric grid spec {spec!r}") from None
    if step <= 0:
        raise DomainError("grid step must be positive")
    out = []
    v = start
    while v <= stop + step / 2:
        out.append(v)
        v = start + len(out) * step
    return out


def _emit(table: OutputTable, args) -> None:
    text = table.render(args.format)
    sys.stdout.write(text)
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _load_pop(args) -> PopulationSpectrum | None:
    if getattr(args, "pop", None):
        return load_population_spectrum(args.pop)
    return None


def _eps2_from_args(args) -> float | None:
    if getattr(args, "eps2", None) is not None:
        return args.eps2
    if getattr(args, "eps", None) is not None:
        return args.eps**2
    return None


def _config_echo(args, keys) -> dict:
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def cmd_threshold(args) -> int:
    noise = ce.NoiseLevel(args.sigma2)
    pop = _load_pop(args)
    report = ce.threshold_report(args.gamma, noise, pop)
    rho_ols = ce.solve_rho_ols(args.gamma, noise)
    header = ["gamma", "sigma2", "eps_sigma2", "eps_sigma2_approx", "eps_ols2", "rho_ols"]
    row = [
        args.gamma,
        args.sigma2,
        report.eps_sigma2,
        report.eps_sigma2_approx,
        report.eps_ols2,
        rho_ols.rho,
    ]
    if pop is not None:
        kappa = pop.kappa
        bound = kappa * args.sigma2**2 * mp_stieltjes_neg(MPLaw(args.gamma), kappa * args.sigma2)
        header += ["eps_def2", "eps_def2_upper_bound", "kappa"]
        row += [report.eps_def2, bound, kappa]
    table = OutputTable(
        header=header,
        rows=[tuple(row)],
        metadata={"config": _config_echo(args, ["gamma", "sigma2", "pop"]), "command": "threshold"},
    )
    _emit(table, args)
    return 0


def cmd_rho(args) -> int:
    noise = ce.NoiseLevel(args.sigma2)
    eps2 = _eps2_from_args(args)
    if args.grid:
        grid = parse_grid(args.grid)
        if args.grid_units == "eps":
            grid = [g * g for g in grid]
    elif eps2 is not None:
        grid = [eps2]
    else:
        raise DomainError("rho needs --eps2, --eps, or --grid")
    rows = []
    for e2 in grid:
        sol = ce.solve_rho(args.gamma, noise, e2)
        rows.append((e2, sol.rho, sol.regime.value, sol.residual))
    table = OutputTable(
        header=["eps2", "rho", "regime", "residual"],
        rows=rows,
        metadata={"config": _config_echo(args, ["gamma", "sigma2", "eps2", "eps", "grid"]), "command": "rho"},
    )
    _emit(table, args)
    return 0


_GNUPLOT_TEMPLATE = """\
# plot-ready companion script; feed the CSV written via --out
set datafile separator ','
set datafile commentschars '#'
set xlabel 'eps2'
set ylabel 'asymptotic cost'
set key left top
plot '{csv}' using 1:3 with lines title 'cost', \\
     '{csv}' using 1:4 with lines title 'cost vs interpolant'
"""


def cmd_cost_curve(args) -> int:
    noise = ce.NoiseLevel(args.sigma2)
    grid = parse_grid(args.grid)
    if args.grid_units == "eps":
        grid = [g * g for g in grid]
    rows = []
    for e2 in grid:
        try:
            point = ce.asymptotic_cost(args.gamma, noise, e2)
            sol_regime = (
                ce.Regime.BELOW_THRESHOLD if point.rho == 0.0 else ce.Regime.ABOVE_THRESHOLD
            )
            rows.append((e2, point.rho, point.cost, point.costbar, sol_regime.value))
        except NearDivergenceError:
            rows.append((e2, float("nan"), float("nan"), float("nan"), "error"))
    table = OutputTable(
        header=["eps2", "rho", "cost", "costbar", "regime"],
        rows=rows,
        metadata={"config": _config_echo(args, ["gamma", "sigma2", "grid"]), "command": "cost-curve"},
    )
    if args.gnuplot:
        if not args.out:
            raise DomainError("--gnuplot needs --out so the script has a data file to plot")
        with open(args.gnuplot, "w", encoding="utf-8") as fh:
            fh.write(_GNUPLOT_TEMPLATE.format(csv=args.out))
    _emit(table, args)
    return 0


def cmd_ols(args) -> int:
    noise = ce.NoiseLevel(args.sigma2)
    sol = ce.solve_rho_ols(args.gamma, noise)
    gap = ce.ols_gap(args.gamma, noise)
    table = OutputTable(
        header=["gamma", "sigma2", "rho_ols", "eps_ols2", "residual", "ols_gap"],
        rows=[(args.gamma, args.sigma2, sol.rho, sol.target_eps2, sol.residual, gap)],
        metadata={"config": _config_echo(args, ["gamma", "sigma2"]), "command": "ols"},
    )
    _emit(table, args)
    return 0


def cmd_spectrum(args) -> int:
    pop = _load_pop(args) or PopulationSpectrum.isotropic()
    config = lab.ExperimentConfig(
        n=args.n, d=args.d, sigma2=1.0, seed=args.seed, trials=1,
        entry_dist=args.dist, population=pop, rho=0.0,
    )
    design = lab.sample_design(config, 0)
    spec = esd_from_design(design.X)
    metadata = {
        "config": _config_echo(args, ["n", "d", "seed", "dist", "pop"]),
        "command": "spectrum",
    }
    if pop.is_isotropic:
        law = MPLaw(args.d / args.n)
        dev_hi, dev_lo = bai_yin_check(spec, law)
        metadata["edge_deviation_upper"] = dev_hi
        metadata["edge_deviation_lower"] = dev_lo
        metadata["kolmogorov_distance"] = kolmogorov_distance(spec, law)
    rows = [(i + 1, float(v)) for i, v in enumerate(spec.values)]
    _emit(OutputTable(header=["rank", "eigenvalue"], rows=rows, metadata=metadata), args)
    return 0


def _simulate_targets(config: lab.ExperimentConfig, noise: ce.NoiseLevel) -> lab.AsymptoticTargets:
    gamma = config.gamma_n
    if not config.population.is_isotropic:
        # only the proved lower bound exists for anisotropic cost; no exact target
        return lab.AsymptoticTargets(train_ridge=None, cost=None, ols_gap=None)
    train_ridge = ce.memorization_threshold(gamma, noise)
    gap = ce.ols_gap(gamma, noise)
    if config.eps2 is not None:
        cost = ce.asymptotic_cost(gamma, noise, config.eps2).cost
    elif config.rho == 0.0:
        cost = 0.0
    else:
        law = MPLaw(gamma)
        s2 = noise.sigma2
        from .spectra import mp_integrate

        cost = config.rho**2 / gamma * mp_integrate(
            law, lambda s: s2 * s2 * s / ((1.0 - config.rho * s) ** 2 * (s + s2))
        )
    return lab.AsymptoticTargets(train_ridge=train_ridge, cost=cost, ols_gap=gap)


def cmd_simulate(args) -> int:
    pop = _load_pop(args) or PopulationSpectrum.isotropic()
    eps2 = _eps2_from_args(args)
    config = lab.ExperimentConfig(
        n=args.n, d=args.d, sigma2=args.sigma2, seed=args.seed, trials=args.trials,
        entry_dist=args.dist, population=pop, rho=args.rho, eps2=eps2,
    )
    noise = ce.NoiseLevel(args.sigma2)
    metrics = lab.run_trials(config, lab.trial_metrics)
    targets = _simulate_targets(config, noise)

    rows = []
    for m in metrics:
        for name in ("rho", "train_ridge", "cost", "ols_gap"):
            rows.append((m.trial, name, getattr(m, name)))
    config_echo = _config_echo(
        args, ["n", "d", "sigma2", "seed", "trials", "dist", "rho", "eps2", "eps", "pop"]
    )
    table = OutputTable(
        header=["trial", "metric", "value"],
        rows=rows,
        metadata={"config": config_echo, "command": "simulate"},
    )

    def stats(name: str, target):
        vals = np.array([getattr(m, name) for m in metrics])
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
        entry = {"mean": mean, "se": se}
        if target is not None:
            entry["target"] = target
            entry["rel_dev"] = abs(mean - target) / abs(target) if target != 0 else abs(mean)
        return entry

    summary = {
        "config": config_echo,
        "metadata": {"version": __version__, "command": "simulate", "gamma_n": config.gamma_n},
        "metrics": {
            "train_ridge": stats("train_ridge", targets.train_ridge),
            "cost": stats("cost", targets.cost),
            "ols_gap": stats("ols_gap", targets.ols_gap),
            "rho": stats("rho", None),
        },
    }

    sys.stdout.write(table.render(args.format))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "trials.csv"), "w", encoding="utf-8") as fh:
            fh.write(table.to_csv())
        with open(os.path.join(args.out, "summary.json"), "w", encoding="utf-8") as fh:
            fh.write(json.dumps(summary, sort_keys=True, indent=2) + "\n")
    return 0


def _verify_checks(quick: bool, seed: int, perturb: bool):
    """Yield (name, margin, limit, passed) for the full identity/invariant suite."""
    from .spectra import mp_integrate

    # quadrature moments of the limit law
    worst = 0.0
    for gamma in (1.5, 2.0, 4.0, 10.0):
        law = MPLaw(gamma)
        worst = max(worst, abs(mp_integrate(law, lambda s: np.ones_like(s)) - 1.0))
        worst = max(worst, abs(mp_integrate(law, lambda s: s) - 1.0))
    yield ("limit-law-moments", worst, 1e-10, worst <= 1e-10)

    worst = 0.0
    for gamma in (1.5, 2.0, 4.0):
        law = MPLaw(gamma)
        for s2 in (1e-2, 0.1, 1.0):
            quad = mp_integrate(law, lambda s: 1.0 / (s + s2))
            closed = mp_stieltjes_neg(law, s2)
            worst = max(worst, abs(quad - closed) / closed)
    yield ("resolvent-closed-form", worst, 1e-9, worst <= 1e-9)

    n, d = (100, 200) if quick else (200, 400)
    n_rho = 3 if quick else 10
    sigma2 = 0.1
    combos = [
        (lab.EntryDist.GAUSSIAN, PopulationSpectrum.isotropic()),
        (lab.EntryDist.RADEMACHER, PopulationSpectrum(atoms=((1.0, 0.5), (0.5, 0.5)))),
    ]
    if not quick:
        combos += [
            (lab.EntryDist.RADEMACHER, PopulationSpectrum.isotropic()),
            (lab.EntryDist.GAUSSIAN, PopulationSpectrum(atoms=((1.0, 0.5), (0.5, 0.5)))),
        ]

    worst_identity = 0.0
    worst_stationarity = 0.0
    worst_closed_form = 0.0
    worst_growth = 0.0
    worst_interp = 0.0
    rng = np.random.default_rng(seed)
    for dist, pop in combos:
        config = lab.ExperimentConfig(
            n=n, d=d, sigma2=sigma2, seed=int(rng.integers(0, 2**63)), trials=1,
            entry_dist=dist, population=pop, rho=0.0,
        )
        design = lab.sample_design(config, 0)
        rho_max = lab.max_feasible_rho(design.Z)
        for rho in rng.uniform(0.02, 0.9, size=n_rho) * rho_max:
            rho = float(rho)
            report = lab.evaluate_design(design.X, design.sigma_sqrt, sigma2, rho)
            worst_identity = max(
                worst_identity,
                abs(report.train_trace - report.train_direct) / abs(report.train_direct),
            )
            growth = report.pred_direct - report.pred_ridge
            # same softened scale as the report validator: tiny growths are
            # pure cancellation in the direct route
            scale = max(abs(growth), abs(report.pred_ridge) * 1e-6, 1e-300)
            worst_identity = max(worst_identity, abs(report.pred_growth_trace - growth) / scale)
            resid = report.duality_residual
            if perturb:
                A = lab.build_estimator(design.X, design.sigma_sqrt, sigma2, rho).A
                bump = np.random.default_rng(0).standard_normal(A.shape)
                A = A + 1e-2 * bump / np.linalg.norm(bump)
                resid = lab.lagrangian_gradient_residual(
                    A, design.X, design.sigma_sqrt, sigma2, rho
                )
            worst_stationarity = max(worst_stationarity, resid)
            checks = lab.matrix_identity_checks(design.X, design.sigma_sqrt, sigma2, rho)
            worst_closed_form = max(worst_closed_form, checks.max_dev)
            bounds = lab.growth_control_bounds_check(design.Z, pop, sigma2, rho)
            worst_growth = max(worst_growth, -bounds.pred_margin, -bounds.train_margin)
        A_ols_train = lab.train_error_direct(
            np.linalg.pinv(design.X), design.X, sigma2
        )
        worst_interp = max(worst_interp, A_ols_train)

    yield ("error-route-identities", worst_identity, 1e-9, worst_identity <= 1e-9)
    yield ("stationarity-residual", worst_stationarity, 1e-8, worst_stationarity <= 1e-8)
    yield ("closed-form-residual-identities", worst_closed_form, 1e-9, worst_closed_form <= 1e-9)
    yield ("isotropic-growth-bounds", worst_growth, 1e-10, worst_growth <= 1e-10)
    yield ("interpolant-zero-train-error", worst_interp, 1e-16, worst_interp <= 1e-16)

    # feasibility boundary behavior on an isotropic design
    config = lab.ExperimentConfig(
        n=n, d=d, sigma2=sigma2, seed=seed, trials=1, rho=0.0,
    )
    design = lab.sample_design(config, 0)
    rho_max = lab.max_feasible_rho(design.Z)
    ok = True
    try:
        lab.build_estimator(design.X, design.sigma_sqrt, sigma2, 0.99 * rho_max)
    except MemcostError:
        ok = False
    try:
        lab.build_estimator(design.X, design.sigma_sqrt, sigma2, 1.01 * rho_max)
        ok = False
    except MemcostError:
        pass
    yield ("feasibility-boundary", 0.0 if ok else 1.0, 0.5, ok)

    # training error is strictly increasing in the multiplier
    rhos = np.linspace(0.0, 0.9 * rho_max, 6)
    trains = [
        lab.error_growth_trace(design.X, design.sigma_sqrt, sigma2, float(r))[1] for r in rhos
    ]
    increasing = bool(np.all(np.diff(trains) > 0))
    yield ("train-error-monotone", 0.0 if increasing else 1.0, 0.5, increasing)


def cmd_verify(args) -> int:
    failed = 0
    for name, margin, limit, passed in _verify_checks(args.quick, args.seed, args.perturb):
        status = "PASS" if passed else "FAIL"
        print(f"[{status}] {name}: measured {margin:.3e} (limit {limit:.1e})")
        if not passed:
            failed += 1
    print(f"verify: {failed} failing check(s)")
    return 1 if failed else 0


def _add_common_output(p: argparse.ArgumentParser):
    p.add_argument("--out", help="write the table to this path (simulate: directory)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")


def _add_eps_args(p: argparse.ArgumentParser):
    group = p.add_mutually_exclusive_group()
    group.add_argument("--eps2", type=float, help="squared training-error floor")
    group.add_argument("--eps", type=float, help="training-error floor (will be squared)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memcost",
        description="Memorization thresholds and cost-of-not-fitting curves for "
        "overparameterized linear regression, with a finite-sample Monte Carlo lab.",
    )
    parser.add_argument("--version", action="version", version=f"memcost {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("threshold", help="threshold family at one (gamma, sigma2)")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--pop", help="population spectrum file (value weight lines)")
    _add_common_output(p)
    p.set_defaults(func=cmd_threshold)

    p = sub.add_parser("rho", help="training-error multiplier at given eps2")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    _add_eps_args(p)
    p.add_argument("--grid", help="eps2 grid start:step:stop")
    p.add_argument("--grid-units", choices=("eps2", "eps"), default="eps2")
    _add_common_output(p)
    p.set_defaults(func=cmd_rho)

    p = sub.add_parser("cost-curve", help="cost curve over an eps2 grid")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--grid", required=True, help="eps2 grid start:step:stop")
    p.add_argument("--grid-units", choices=("eps2", "eps"), default="eps2")
    p.add_argument("--gnuplot", help="also write a plot script for the --out CSV")
    _add_common_output(p)
    p.set_defaults(func=cmd_cost_curve)

    p = sub.add_parser("ols", help="interpolation threshold and gap")
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    _add_common_output(p)
    p.set_defaults(func=cmd_ols)

    p = sub.add_parser("simulate", help="finite-sample Monte Carlo run")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--sigma2", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--rho", type=float)
    _add_eps_args(p)
    p.add_argument("--dist", choices=("gaussian", "rademacher"), default="gaussian")
    p.add_argument("--pop", help="population spectrum file")
    _add_common_output(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run the identity/invariant suite")
    p.add_argument("--quick", action="store_true", help="reduced sizes, same criteria")
    p.add_argument("--seed", type=int, default=20240901)
    p.add_argument("--perturb", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("spectrum", help="empirical spectrum of one sampled design")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dist", choices=("gaussian", "rademacher"), default="gaussian")
    p.add_argument("--pop", help="population spectrum file")
    _add_common_output(p)
    p.set_defaults(func=cmd_spectrum)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, RegimeError, SpectrumFormatError, NearDivergenceError) as exc:
        print(f"memcost: error: {exc}", file=sys.stderr)
        return 2
    except MemcostError as exc:
        print(f"memcost: check failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
