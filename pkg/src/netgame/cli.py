"""Command-line interface: ``netgame equilibrium|run|verify|sweep``.

Exit codes: 0 success, 2 configuration error, 3 solver failure,
4 property violation, 5 I/O error.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig, load_config
from .dynamics import AlphaRule, SimulationTrace, run_replications
from .equilibrium import epsilon_bar, export_equilibrium, solve_expected_vi
from .game import EvaluationError, NotMonotoneError, derive_bounds, expected_jacobian, game_fingerprint
from .metrics import (
    RunningMoments,
    appendix_checks,
    concentration_frequency,
    constants,
    epsilon_nash_frequency,
    expected_averaged_regret_bound,
    mean_square_bound_check,
    noise_ceiling_check,
    noise_moments,
    regret_bound_check,
    time_averaged_regret,
)
from .traceio import write_profiles, write_summary, write_trace

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_PROPERTY, EXIT_IO = 0, 2, 3, 4, 5


class SolverFailure(RuntimeError):
    pass


class PropertyViolation(RuntimeError):
    pass


def _log(args, msg):
    if not args.quiet:
        print(msg)


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output"] = str(args.out)
    if args.replications is not None:
        overrides["replications"] = args.replications
    return cfg.with_overrides(**overrides) if overrides else cfg


def _equilibrium(cfg: ExperimentConfig):
    res = solve_expected_vi(cfg.game, tolerance=cfg.tolerance)
    if not res.converged:
        raise SolverFailure(f"equilibrium solver stopped at residual {res.residual:.3g} "
                            f"after {res.iterations} iterations (tolerance {cfg.tolerance:g})")
    return res


def _outdir(cfg: ExperimentConfig) -> Path:
    out = cfg.output
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_equilibrium(args) -> int:
    cfg = _config(args)
    res = _equilibrium(cfg)
    bounds = derive_bounds(cfg.game)
    path = _outdir(cfg) / "equilibrium.csv"
    export_equilibrium(path, cfg.game, res)
    _log(args, f"mu = {bounds.mu:.6g}, residual = {res.residual:.3g}, iterations = {res.iterations}")
    _log(args, f"sbar[:5] = {np.array2string(res.s.ravel()[:5], precision=6)}")
    _log(args, f"wrote {path}")
    return EXIT_OK


def _run_meta(cfg, res, consts):
    return {"config_hash": cfg.hash(), "game_hash": game_fingerprint(cfg.game),
            "equilibrium_residual": res.residual, "constants": consts.as_dict()}


def cmd_run(args) -> int:
    cfg = _config(args)
    game, schedule = cfg.game, cfg.schedule
    res = _equilibrium(cfg)
    bounds = derive_bounds(game)
    consts = constants(bounds, game.network, schedule)
    out = _outdir(cfg)
    export_equilibrium(out / "equilibrium.csv", game, res)
    meta = _run_meta(cfg, res, consts)
    rec = cfg.record
    per_rep = []
    final = RunningMoments()

    def consume(tr: SimulationTrace):
        name = f"trace_r{tr.replication:04d}.csv"
        digest = write_trace(out / name, tr, meta)
        if rec["profiles"]:
            write_profiles(out / f"profiles_r{tr.replication:04d}.csv", tr)
        check = regret_bound_check(tr, consts)
        row = {"replication": tr.replication, "trace": name, "trace_sha256": digest,
               "final_dist": float(tr.dist[-1]), "initial_dist": float(tr.dist[0]),
               "final_wdist": float(tr.wdist[-1]),
               "avg_max_regret": float(time_averaged_regret(tr.max_regret[1:])[-1]) if tr.T else None,
               "regret_bound_violations": len(check.violations) + len(check.worst_case_violations),
               "regret_bound_min_slack": check.min_slack}
        if tr.noise_sq is not None:
            row["noise_ceiling_violations"] = int(noise_ceiling_check(tr.noise_sq, consts).size)
        per_rep.append(row)
        final.add(tr.dist[-1])
        _log(args, f"replication {tr.replication}: final |s-sbar| = {tr.dist[-1]:.4g}  ({name})")

    run_replications(game, schedule, cfg.horizon, cfg.seed, cfg.replications, consume, sbar=res.s,
                     record_noise=rec["noise"], store_regret=rec["regret"],
                     profile_every=rec["profile_every"] or None)
    summary = {"command": "run", "version": __version__, "seed": cfg.seed, "horizon": cfg.horizon,
               "replications": cfg.replications, **meta,
               "equilibrium": res.s.ravel(), "mu": bounds.mu,
               "final_dist_mean": final.mean, "final_dist_stderr": final.stderr,
               "per_replication": per_rep}
    write_summary(out / "summary.json", summary)
    _log(args, f"wrote {cfg.replications} trace(s) and summary.json to {out}")
    return EXIT_OK


def _verdict(args, results, name, ok, detail):
    results.append({"check": name, "pass": bool(ok), "detail": detail})
    _log(args, f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")


def cmd_verify(args) -> int:
    cfg = _config(args)
    game, ver = cfg.game, cfg.verify
    res = _equilibrium(cfg)
    bounds = derive_bounds(game)
    sbar = res.s
    results = []
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xE0]))

    # equilibrium solves the variational inequality
    Fbar = expected_jacobian(game, sbar).ravel()
    lo_hi = [(S.lower, S.upper) if hasattr(S, "lower") else (S.center - S.radius, S.center + S.radius)
             for S in game.sets]
    lo = np.stack([a for a, _ in lo_hi])
    hi = np.stack([b for _, b in lo_hi])
    probes = np.stack([game.project_profile(lo + (hi - lo) * rng.random(lo.shape)) for _ in range(1000)])
    vi = (probes - sbar).reshape(1000, -1) @ Fbar
    _verdict(args, results, "variational inequality", vi.min() >= -1e-8,
             f"min (s - sbar).F~(sbar) = {vi.min():.3g} over 1000 random s")

    # noise moments at random profiles
    consts = constants(bounds, game.network, cfg.schedule)
    worst_over = worst_mean = 0
    for j in range(ver["profiles"]):
        s = game.project_profile(lo + (hi - lo) * rng.random(lo.shape))
        rep = noise_moments(game, s, consts, ver["draws"], seed=cfg.seed, replication=1000 + j)
        worst_over += rep.ceiling_violations
        worst_mean += rep.mean_violations
    _verdict(args, results, "noise moments", worst_over == 0 and worst_mean == 0,
             f"{worst_mean} mean coordinates beyond 4 SE, {worst_over} draws above M^2 N = {consts.M**2*consts.N:.4g}")

    # regret bound on the configured dynamics
    bad = 0
    traces = 0

    def check_regret(tr):
        nonlocal bad, traces
        rb = regret_bound_check(tr, consts)
        bad += len(rb.violations) + len(rb.worst_case_violations)
        traces += 1

    run_replications(game, cfg.schedule, cfg.horizon, cfg.seed, cfg.replications, check_regret, sbar=sbar,
                     store_regret=True)
    _verdict(args, results, "regret bound", bad == 0,
             f"{bad} violations of R_i <= C4 |s - sbar| + eps_worst or R_i <= 2 J1 over {traces} trace(s)")

    # mean-square envelope under the alpha rule
    alpha = cfg.data["schedule"]["alpha"] if cfg.data["schedule"]["kind"] == "alpha" else 1.0
    sched = AlphaRule.for_game(game, alpha)
    c_alpha = constants(bounds, game.network, sched)
    moments = RunningMoments()
    run_replications(game, sched, cfg.horizon, cfg.seed, ver["replications"], lambda tr: moments.add(tr.dist),
                     sbar=sbar)
    ms = mean_square_bound_check(np.arange(cfg.horizon + 1), moments, c_alpha, sched)
    _verdict(args, results, "mean-square envelope", bool(ms.ok.all()),
             f"{int((~ms.ok).sum())} of {ms.k.size} iterations above sqrt(N D delta_k) + 4 SE "
             f"(alpha = {alpha:g}, R = {moments.count})")

    # concentration and epsilon-Nash frequency at the equilibrium
    delta = ver["delta"]
    conc = concentration_frequency(game, sbar, delta, ver["draws"], seed=cfg.seed, replication=2000)
    _verdict(args, results, "aggregate concentration", conc.ok,
             f"min per-agent frequency {conc.frequency.min():.4f} >= {conc.threshold:.4f}")
    en = epsilon_nash_frequency(game, sbar, delta, ver["draws"], seed=cfg.seed, replication=2001)
    _verdict(args, results, "epsilon-Nash frequency", en.ok,
             f"frequency {float(en.frequency):.4f} >= {en.threshold:.4f} (eps_bar = {en.radius:.4g}); "
             f"{en.hard_violations} draws above eps_worst")

    app = appendix_checks()
    _verdict(args, results, "appendix inequalities", app.ok,
             f"{app.power_violations + app.series_violations + app.step_violations} violations over "
             f"{app.power_checked + app.series_checked + app.step_checked} grid points")

    passed = all(r["pass"] for r in results)
    out = _outdir(cfg)
    write_summary(out / "verify.json", {"command": "verify", "version": __version__, "seed": cfg.seed,
                                        "config_hash": cfg.hash(), "game_hash": game_fingerprint(game),
                                        "constants": consts.as_dict(), "passed": passed, "checks": results})
    if not passed:
        raise PropertyViolation(", ".join(r["check"] for r in results if not r["pass"]))
    return EXIT_OK


_SWEEP_KEYS = {"N": "game.N", "alpha": "schedule.alpha", "theta": "schedule.theta",
               "delta": "verify.delta", "participation": "network.participation"}


def cmd_sweep(args) -> int:
    cfg = _config(args)
    param = args.param or cfg.sweep["param"]
    if param not in _SWEEP_KEYS:
        raise ConfigError(args.config, [f"sweep parameter must be one of {sorted(_SWEEP_KEYS)}"])
    values = [float(v) for v in args.values.split(",")] if args.values else list(cfg.sweep["values"])
    if not values:
        raise ConfigError(args.config, ["sweep needs values (config 'sweep.values' or --values)"])
    simulate = cfg.sweep["simulate"]
    rows = []
    for v in values:
        changes = {_SWEEP_KEYS[param]: int(v) if param == "N" else v}
        if param in ("alpha", "theta"):
            changes["schedule.kind"] = param
        c = cfg.with_overrides(**changes)
        bounds = derive_bounds(c.game)
        bounds.require_monotone()
        consts = constants(bounds, c.game.network, c.schedule)
        eps = epsilon_bar(c.game.N, c.game.n, c.verify["delta"], bounds)
        row = {param: v, "N": c.game.N, "mu": bounds.mu, "eps_bar": eps.eps_bar, "eps_worst": eps.eps_worst,
               "D": consts.D if consts.D_defined else None}
        if simulate:
            res = _equilibrium(c)
            fin, reg = RunningMoments(), RunningMoments()

            def consume(tr):
                fin.add(tr.dist[-1])
                reg.add(time_averaged_regret(tr.max_regret[1:])[-1] if tr.T else tr.max_regret[0])

            run_replications(c.game, c.schedule, c.horizon, c.seed, c.replications, consume, sbar=res.s)
            row.update(final_dist=float(fin.mean), final_dist_se=float(fin.stderr),
                       avg_max_regret=float(reg.mean))
            if consts.D_defined and c.horizon:
                row["avg_regret_bound"] = float(expected_averaged_regret_bound(c.horizon, consts, bounds, c.game.n))
        rows.append(row)

    cols = list(rows[0])
    out = _outdir(cfg)
    fmt = lambda x: "" if x is None else (f"{x:.6g}" if isinstance(x, float) else str(x))
    lines = [",".join(cols)] + [",".join(fmt(r[c]) for c in cols) for r in rows]
    (out / "sweep.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    width = max(12, *(len(c) for c in cols))
    _log(args, "".join(c.rjust(width) for c in cols))
    for r in rows:
        _log(args, "".join(fmt(r[c]).rjust(width) for c in cols))

    summary = {"command": "sweep", "param": param, "values": values, "rows": rows, "config_hash": cfg.hash()}
    if param == "N":
        order = np.argsort(values)
        eps = np.array([rows[i]["eps_bar"] for i in order])
        decreasing = bool(np.all(np.diff(eps) < 0))
        summary["eps_bar_strictly_decreasing"] = decreasing
        _log(args, f"eps_bar strictly decreasing in N: {'yes' if decreasing else 'no'}")
        write_summary(out / "sweep.json", summary)
        if not decreasing:
            raise PropertyViolation("eps_bar is not strictly decreasing in N")
        return EXIT_OK
    write_summary(out / "sweep.json", summary)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="netgame", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {"equilibrium": "solve the expected game and export sbar",
             "run": "simulate R replications and write traces plus a summary",
             "verify": "run the property battery; exit 4 on any failure",
             "sweep": "vary one parameter over a grid and tabulate"}
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", required=True, type=Path, help="TOML experiment file")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        p.add_argument("--out", type=Path, help="output directory (overrides the config)")
        p.add_argument("--replications", type=int, help="replication count (overrides the config)")
        p.add_argument("--quiet", action="store_true")
        if name == "sweep":
            p.add_argument("--param", choices=sorted(_SWEEP_KEYS))
            p.add_argument("--values", help="comma-separated grid, e.g. 10,100,1000")
    return parser


COMMANDS = {"equilibrium": cmd_equilibrium, "run": cmd_run, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error in {exc.path}:", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, NotMonotoneError, EvaluationError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except PropertyViolation as exc:
        print(f"property violated: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
