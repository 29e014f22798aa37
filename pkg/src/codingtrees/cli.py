"""Command-line entry point: ``codingtrees <group> <action> --config FILE``.

Every command writes ``<out>/<group>-<action>.json`` and exits with 0 when
all verdicts pass, 1 when a verdict fails and 2 on errors.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, RunConfig
from .ergodic import (
    lyapunov,
    pesin_block,
    ruelle_check,
    sample_mme,
    statistical_good_density,
    verify_pesin,
)
from .linearization import find_periodic_branch, koenigs_chart
from .mapcore import MapSpec, PeriodicPoint, periodic_points
from .plot import Figure, Frame, membership_raster
from .rays import build_potential, landing, piece_decay, poly_like, ray_pieces, trace_ray
from .report import RunReport, write_csv
from .telescopes import (
    GoodPointParams,
    build_telescope,
    good_point_verdict,
    good_times,
    verify_telescope,
)
from .tree import diameter_profile, tree_consistency

COMMANDS = {
    "tree": ("build", "diam"),
    "access": ("periodic", "good"),
    "telescope": ("verify",),
    "ray": ("trace",),
    "measure": ("lyapunov", "pesin", "good-density"),
    "plot": (),
}


class CommandError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# helpers


def resolve_periodic(m: MapSpec, point: complex, period: int) -> PeriodicPoint:
    """The periodic point of exact period ``period`` nearest to ``point``."""
    cands = periodic_points(m, period)
    if not cands:
        raise CommandError(f"no periodic points of period {period}")
    best = min(cands, key=lambda p: abs(p.location - point))
    if abs(best.location - point) > 1e-6 * max(1.0, abs(point)):
        raise CommandError(f"{point} is not a period-{period} point (nearest {best.location})")
    return best


def _params(cfg: RunConfig) -> GoodPointParams:
    t = cfg.telescope
    return GoodPointParams(t.r, t.delta, t.kappa, t.Delta, t.n0)


def _avoid(tree) -> list:
    return [tree.root] + [z for c in tree.base_curves for z in c.z]


def _targets(cfg: RunConfig) -> list:
    if not cfg.charts:
        raise ConfigError("charts", "this command needs at least one chart target")
    return cfg.charts


# ---------------------------------------------------------------------------
# commands (each returns verdicts, tables, warnings)


def cmd_tree_build(cfg: RunConfig, out: Path, workers: int):
    tree = cfg.build_tree()
    rng = np.random.default_rng(cfg.seed)
    for n in range(cfg.budgets.depth + 1):
        tree.level_edges(n, samples=cfg.budgets.samples, rng=rng)
    rep = tree_consistency(tree)
    verdicts = {"functional_equation": rep.functional < 1e-8, "concatenation": rep.concatenation < 1e-9}
    return verdicts, {"consistency": rep.to_dict(), "depth": cfg.budgets.depth}, []


def cmd_tree_diam(cfg: RunConfig, out: Path, workers: int):
    tree = cfg.build_tree()
    rows = diameter_profile(tree, cfg.budgets.depth, samples=cfg.budgets.samples, seed=cfg.seed)
    write_csv(out / "tree-diam.csv", ["n", "max_diameter", "words", "exhaustive"],
              [(r.n, r.max_diameter, r.words, int(r.exhaustive)) for r in rows])
    diam = [r.max_diameter for r in rows]
    monotone = all(b <= a for a, b in zip(diam, diam[1:]))
    warnings = [] if monotone else ["sampled maxima are not monotone"]
    table = {"profile": [[r.n, r.max_diameter, r.words, r.exhaustive] for r in rows], "monotone": monotone}
    return {"shrinking": diam[-1] < diam[0]}, table, warnings


def cmd_access_periodic(cfg: RunConfig, out: Path, workers: int):
    tree = cfg.build_tree()
    verdicts, tables = {}, {}
    for t in _targets(cfg):
        q = resolve_periodic(cfg.map, t.point, t.period)
        chart = koenigs_chart(cfg.map, q, avoid=_avoid(tree))
        rep = find_periodic_branch(tree, q, chart, seed=cfg.seed)
        key = f"{q.location.real:.12g}{q.location.imag:+.12g}i"
        verdicts[key] = rep.status == "found" and rep.rate_error < 0.15
        tables[key] = {"chart": chart.to_dict(), "branch": rep.to_dict()}
    return verdicts, tables, []


def cmd_access_good(cfg: RunConfig, out: Path, workers: int):
    tree = cfg.build_tree()
    params = _params(cfg)
    verdicts, tables = {}, {}
    for t in _targets(cfg):
        v = good_point_verdict(cfg.map, t.point, tree, params, cfg.telescope.K)
        key = f"{t.point.real:.12g}{t.point.imag:+.12g}i"
        verdicts[key] = v.verdict == "good"
        tables[key] = {"verdict": v.verdict, "reason": v.reason, "sup_distance": v.sup_distance}
    return verdicts, tables, []


def cmd_telescope_verify(cfg: RunConfig, out: Path, workers: int):
    tree = cfg.build_tree()
    params = _params(cfg)
    verdicts, tables = {}, {}
    for t in _targets(cfg):
        key = f"{t.point.real:.12g}{t.point.imag:+.12g}i"
        gt = good_times(cfg.map, t.point, params, cfg.budgets.horizon)
        checks = []
        for k in range(1, cfg.telescope.k + 1):
            tel = build_telescope(cfg.map, t.point, gt.good, params, k, tree)
            checks.append({"k": k, "times": tel.times, **verify_telescope(tel).to_dict()})
        verdicts[key] = gt.density_ok and all(c["passed"] for c in checks)
        tables[key] = {"good_times": gt.to_dict(), "telescopes": checks}
    return verdicts, tables, []


def _trace_one(args):
    pot, tau, start, max_level, steps, side, tol = args
    ray = trace_ray(pot, tau, start, max_level, steps, side)
    land = landing(ray, pot.spec, tol)
    pieces = ray_pieces(ray)
    return ray, land, pieces


def cmd_ray_trace(cfg: RunConfig, out: Path, workers: int):
    r = cfg.ray
    spec = poly_like(cfg.map, r.center, r.radius)
    pot = build_potential(spec, seed=cfg.seed)
    jobs = [
        (pot, r.tau, r.center + r.radius * complex(math.cos(2 * math.pi * a), math.sin(2 * math.pi * a)),
         r.max_level, r.steps_per_level, r.side, r.tol)
        for a in r.angles
    ]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_trace_one, jobs))
    else:
        results = [_trace_one(j) for j in jobs]
    verdicts = {"functional_residual": pot.functional_residual < 1e-5}
    tables = {"potential": pot.to_dict(), "spec": spec.to_dict(), "rays": []}
    frame = Frame(r.center.real - r.radius, r.center.imag - r.radius, 2 * r.radius)
    fig = Figure(frame, "tau-rays", {"config_hash": cfg.hash()})
    fig.background(membership_raster(cfg.map, frame, r.radius))
    fig.polyline(spec.boundary_w(), "#555555")
    fig.polyline(np.append(spec.boundary_w1, spec.boundary_w1[0]), "#999999")
    for a, (ray, land, pieces) in zip(r.angles, results):
        decay = piece_decay(pieces)
        verdicts[f"landed[{a}]"] = land.landed
        verdicts[f"piece_decay[{a}]"] = decay["holds"]
        tables["rays"].append(
            {"angle": a, "landing": land.to_dict(), "pieces": decay, "saddles": [s.to_dict() for s in ray.saddles],
             "levels": len(ray.levels), "end": ray.points[-1]}
        )
        fig.polyline(ray.points, "#c0392b", 1.0)
    fig.write(out / "ray-trace.svg")
    return verdicts, tables, []


def cmd_measure_lyapunov(cfg: RunConfig, out: Path, workers: int):
    mu = sample_mme(cfg.map, cfg.measure.samples, seed=cfg.seed)
    est = lyapunov(cfg.map, mu)
    h = math.log(cfg.map.degree)
    ru = ruelle_check(h, est.value, est.stderr)
    return {"ruelle": ru.passed}, {"lyapunov": est.to_dict(), "entropy": h, "ruelle_bound": ru.bound}, []


def cmd_measure_pesin(cfg: RunConfig, out: Path, workers: int):
    ms = cfg.measure
    mu = sample_mme(cfg.map, ms.samples, seed=cfg.seed)
    block = pesin_block(cfg.map, mu, lam=ms.lam, C=ms.C, orbits=ms.pesin_orbits)
    held = sample_mme(cfg.map, ms.samples, seed=cfg.seed + 1)
    verified = verify_pesin(cfg.map, held, block, ms.held_out)
    verdicts = {"coverage": block.coverage >= ms.target, "held_out": verified >= ms.target}
    return verdicts, {"block": block.to_dict(), "held_out_fraction": verified}, []


def cmd_measure_good_density(cfg: RunConfig, out: Path, workers: int):
    ms = cfg.measure
    mu = sample_mme(cfg.map, ms.samples, seed=cfg.seed)
    rep = statistical_good_density(cfg.map, mu, _params(cfg), cfg.budgets.horizon, ms.points, seed=cfg.seed)
    return {"fraction": rep.fraction >= ms.target}, {"density": rep.to_dict()}, []


def cmd_plot(cfg: RunConfig, out: Path, workers: int):
    tree = cfg.build_tree()
    depth = min(cfg.budgets.depth, 8)
    rng = np.random.default_rng(cfg.seed)
    curves = []
    for n in range(depth + 1):
        _, cs, _ = tree.level_edges(n, samples=cfg.budgets.samples, rng=rng)
        curves.extend(cs)
    if not curves:
        raise ConfigError("tree", "the tree has no edges to plot")
    frame = Frame.around(np.concatenate([c.z for c in curves]))
    fig = Figure(frame, "coding tree", {"config_hash": cfg.hash(), "depth": depth})
    if cfg.map.is_polynomial:
        from .telescopes import escape_radius

        fig.background(membership_raster(cfg.map, frame, escape_radius(cfg.map)))
    for c in curves:
        fig.polyline(c.z)
    fig.points(np.array([t.point for t in cfg.charts], dtype=complex))
    path = fig.write(out / "plot.svg")
    return {"written": True}, {"svg": path.name, "edges": len(curves)}, []


HANDLERS = {
    "tree build": cmd_tree_build,
    "tree diam": cmd_tree_diam,
    "access periodic": cmd_access_periodic,
    "access good": cmd_access_good,
    "telescope verify": cmd_telescope_verify,
    "ray trace": cmd_ray_trace,
    "measure lyapunov": cmd_measure_lyapunov,
    "measure pesin": cmd_measure_pesin,
    "measure good-density": cmd_measure_good_density,
    "plot": cmd_plot,
}


def run(command: str, cfg: RunConfig, out: str | Path | None = None, workers: int = 1) -> RunReport:
    """Dispatch ``command`` and write its JSON report; returns the report."""
    if command not in HANDLERS:
        raise CommandError(f"unknown command {command!r}")
    out = Path(out if out is not None else cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    verdicts, tables, warnings = HANDLERS[command](cfg, out, workers)
    report = RunReport(command, cfg.hash(), cfg.seed, verdicts, tables, warnings, time.perf_counter() - t0)
    report.write(out)
    return report


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="codingtrees", description="Geometric coding trees for rational maps.")
    p.add_argument("group", choices=sorted(COMMANDS))
    p.add_argument("action", nargs="?", default=None)
    p.add_argument("--config", required=True, help="YAML or JSON run configuration")
    p.add_argument("--seed", type=int, help="override the configured seed")
    p.add_argument("--out", help="output directory (default: config 'out')")
    p.add_argument("--workers", type=int, default=1, help="worker processes for independent jobs")
    p.add_argument("--depth", type=int, help="override budgets.depth")
    p.add_argument("--samples", type=int, help="override budgets.samples")
    p.add_argument("--horizon", type=int, help="override budgets.horizon")
    return p


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    budgets = cfg.budgets
    for name in ("depth", "samples", "horizon"):
        v = getattr(args, name)
        if v is not None:
            budgets = replace(budgets, **{name: v})
    cfg = replace(cfg, budgets=budgets)
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, out=args.out)
    cfgmod.validate(cfg)
    return cfg


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    actions = COMMANDS[args.group]
    if actions and args.action not in actions:
        parser.print_usage(sys.stderr)
        print(f"codingtrees: {args.group} needs one of {', '.join(actions)}", file=sys.stderr)
        return 2
    if not actions and args.action is not None:
        print(f"codingtrees: {args.group} takes no action", file=sys.stderr)
        return 2
    command = args.group if not actions else f"{args.group} {args.action}"
    if args.workers < 1:
        print("codingtrees: --workers must be positive", file=sys.stderr)
        return 2
    try:
        cfg = apply_overrides(cfgmod.load(args.config), args)
        report = run(command, cfg, workers=args.workers)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # any failure inside a module is an error exit
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    status = "pass" if report.passed else "FAIL"
    for name, ok in report.verdicts.items():
        print(f"{'ok  ' if ok else 'FAIL'} {name}")
    print(f"{command}: {status} ({report.wall_time:.1f} s) -> {Path(cfg.out) / (command.replace(' ', '-') + '.json')}")
    return 0 if report.passed else 1
