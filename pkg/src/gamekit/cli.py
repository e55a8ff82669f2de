"""Command-line entry point: ``gamekit gen-data|check|solve|sweep|reproduce-paper``.

Exit codes: 0 success, 1 I/O or configuration error, 2 data certification
failure, 3 singular stage matrix, 4 reproduction mismatch.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import benchmark as bm
from .behavior import behavior_basis, check_assumption1, partition, predictors
from .config import (ConfigError, ExperimentConfig, config_from_dict, load_config,
                     reference_config_dict)
from .errors import (GamekitError, InconsistentInitialData, InvalidInput, NoConvergence,
                     RankShortfall, SingularStageMatrix)
from .fne_dd import best_response_check, solve_finite_fne, verify_solution_residuals
from .fne_known import cross_check_theorem1, infinite_horizon_known, solve_finite_fne_known
from .lti import match_initial_state, write_trajectory_csv
from .numerics import newest_first_permutation
from .receding import convergence_report, evaluate_costs, run_receding_horizon, sweep_horizons

EXIT_OK, EXIT_IO, EXIT_CERT, EXIT_SINGULAR, EXIT_MISMATCH = 0, 1, 2, 3, 4


class _Exit(Exception):
    def __init__(self, code: int, message: str = ""):
        super().__init__(message)
        self.code = code


def _print(*args):
    print(*args, flush=True)


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return "" if np.isnan(v) else f"{float(v):.15g}"
    return v


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, default=_jsonable) + "\n", encoding="utf-8")


def _jsonable(x):
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, (np.floating, np.integer, np.bool_)):
        return x.item()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not serializable: {type(x)}")


# --------------------------------------------------------------------------- shared steps


def _config(args) -> ExperimentConfig:
    if args.config is None:
        raise _Exit(EXIT_IO, "--config is required")
    return load_config(args.config)


def _out_dir(cfg: ExperimentConfig, args) -> Path:
    out = Path(args.out) if getattr(args, "out", None) else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    return out


def _certified(cfg: ExperimentConfig, data, depth: int):
    """Certify the data at ``T_ini + depth`` and build blocks and predictors."""
    report = check_assumption1(data, cfg.T_ini, depth, cfg.state_dim, cfg.tolerances.rank)
    _print(f"certification: {report.as_text()}")
    if not report.passed:
        raise _Exit(EXIT_CERT, "data do not satisfy the rank condition")
    blocks = partition(data, cfg.T_ini, depth, n_hint=cfg.state_dim,
                       player_partition=cfg.game.partition, tol=cfg.tolerances.rank)
    return blocks, predictors(blocks, cfg.tolerances.rank)


def _sweep_depth(cfg: ExperimentConfig, data) -> int:
    """One horizon beyond the sweep when the data allow it, so the last difference is defined."""
    extra = cfg.horizon_max + 1
    if check_assumption1(data, cfg.T_ini, extra, cfg.state_dim, cfg.tolerances.rank).passed:
        return extra
    return cfg.horizon_max


def _column_labels(layout) -> list[str]:
    labels = []
    for name, width in layout.segments:
        labels += [f"{name}[{k + 1}]" for k in range(width)]
    return labels


def _stage1_table(sol, T_ini, m, p):
    st = sol.stage(1)
    perm = newest_first_permutation(T_ini, m, p)
    return {f"player{i + 1}": {"K_canonical": st.K[i], "K_newest_first": st.K[i][:, perm],
                               "L": st.L[i]} for i in range(len(st.K))}


def _gain_rows(stage, labels):
    """Long-format rows ``(player, row, column, value)``; the offset uses column ``L``."""
    rows = []
    for i, (K, L) in enumerate(zip(stage.K, stage.L)):
        for r in range(K.shape[0]):
            rows += [(i + 1, r + 1, lab, K[r, c]) for c, lab in enumerate(labels)]
            rows.append((i + 1, r + 1, "L", L[r]))
    return rows


def _write_solution(sol, out: Path) -> None:
    for st in sol.stages:
        _write_csv(out / "stages" / f"stage_{st.t:03d}.csv", ["player", "row", "column", "value"],
                   _gain_rows(st, _column_labels(st.layout)))


def _oracle(cfg: ExperimentConfig, x1):
    if cfg.system is None or not cfg.game.references_constant():
        return None, None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            inf = infinite_horizon_known(cfg.system, cfg.game, eps=1e-10, T_max=5000)
    except (NoConvergence, SingularStageMatrix) as exc:
        _print(f"oracle unavailable: {exc}")
        return None, None
    return inf, (inf.cost(x1) if x1 is not None else None)


# --------------------------------------------------------------------------- commands


def cmd_gen_data(args) -> int:
    cfg = _config(args)
    if cfg.system is None:
        raise _Exit(EXIT_IO, "gen-data needs a system in the config")
    if cfg.generate is None:
        raise _Exit(EXIT_IO, "gen-data needs data.generate in the config")
    g = cfg.generate
    seed = g.seed if args.seed is None else args.seed
    length = g.length if args.length is None else args.length
    (traj,) = cfg.load_data(seed=seed, length=length)
    out = _out_dir(cfg, args)
    write_trajectory_csv(traj, out / "data.csv")
    manifest = {"file": "data.csv", "seed": seed, "length": length, "amplitude": g.amplitude,
                "x1": list(g.x1) if g.x1 is not None else [0.0] * cfg.system.n,
                "generator": "numpy PCG64, uniform(-amplitude, amplitude)"}
    _write_json(out / "manifest.json", manifest)
    _print(f"wrote {out / 'data.csv'} ({length} rows)")
    return EXIT_OK


def cmd_check(args) -> int:
    cfg = _config(args)
    data = cfg.load_data(seed=args.seed, length=args.length)
    depths = [args.T] if args.T else sorted({cfg.solve_T, cfg.horizon_max})
    ok = True
    _print(f"{'L':>5} {'rank':>6} {'required':>9} {'columns':>8}  pass")
    for T in depths:
        rep = check_assumption1(data, cfg.T_ini, T, cfg.state_dim, cfg.tolerances.rank)
        _print(f"{rep.L:>5} {rep.rank:>6} {rep.required:>9} {rep.columns:>8}  "
               f"{'PASS' if rep.passed else 'FAIL'}")
        for k, why in rep.rejected:
            _print(f"      trajectory {k} rejected: {why}")
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_CERT


def cmd_solve(args) -> int:
    cfg = _config(args)
    T = args.T or cfg.solve_T
    data = cfg.load_data(seed=args.seed, length=args.length)
    out = _out_dir(cfg, args)
    blocks, preds = _certified(cfg, data, T)
    sol = solve_finite_fne(blocks, preds, cfg.game, T, keep_values=True,
                           rcond_min=cfg.tolerances.rcond)
    basis = behavior_basis(data, cfg.T_ini, cfg.state_dim, tol=cfg.tolerances.rank)
    resid = verify_solution_residuals(sol, preds, basis, cfg.game, cfg.tolerances.residual)
    _write_solution(sol, out)
    summary = {"T": T, "rcond": sol.rconds, "residuals": resid.max_by_kind(),
               "residuals_pass": resid.passed,
               "stage1": _stage1_table(sol, cfg.T_ini, cfg.game.m, cfg.game.p)}
    ok = resid.passed
    if cfg.system is not None:
        known = solve_finite_fne_known(cfg.system, cfg.game, T, rcond_min=cfg.tolerances.rcond)
        cc = cross_check_theorem1(sol, known, cfg.system, basis, cfg.tolerances.cross_check)
        summary["cross_check"] = cc.to_dict()
        ok &= cc.passed
        if cfg.has_initial_data:
            br = best_response_check(sol, cfg.system, cfg.game, cfg.u_ini, cfg.y_ini,
                                     trials=100, seed=0 if args.seed is None else args.seed)
            summary["best_response"] = {"worst_margin": br.worst_margin, "pass": br.passed}
            ok &= br.passed
    _write_json(out / "summary.json", summary)
    np.set_printoptions(precision=4, suppress=True)
    for name, row in summary["stage1"].items():
        _print(f"{name}: K_1 = {row['K_canonical'].ravel()}  L_1 = {row['L']}")
    _print(f"residuals: {'PASS' if resid.passed else 'FAIL'} (worst {resid.worst:.2e})")
    if "cross_check" in summary:
        _print(f"cross-check: {'PASS' if summary['cross_check']['pass'] else 'FAIL'} "
               f"(worst {cc.worst:.2e})")
    if "best_response" in summary:
        _print(f"best response: worst margin {summary['best_response']['worst_margin']:.3e}")
    _print(f"wrote {out / 'summary.json'}")
    return EXIT_OK if ok else EXIT_MISMATCH


def _sweep(cfg: ExperimentConfig, data, args, out: Path, eps: float, M: int):
    depth = _sweep_depth(cfg, data)
    blocks, preds = _certified(cfg, data, depth)
    sweep = sweep_horizons(blocks, preds, cfg.game, cfg.horizons, eps=eps, jobs=args.jobs)
    oracle_costs = report = None
    if cfg.has_initial_data:
        x1 = match_initial_state(cfg.system, cfg.u_ini, cfg.y_ini) if cfg.system is not None else None
        _, oracle_costs = _oracle(cfg, x1)
        closure = cfg.system if cfg.system is not None else preds
        sweep = evaluate_costs(sweep, closure, cfg.u_ini, cfg.y_ini, cfg.game, M,
                               oracle_costs, jobs=args.jobs)
        if oracle_costs is not None:
            report = convergence_report(sweep)
    N = cfg.game.N
    labels = _column_labels(preds.layouts[0])[: sweep.gains[sweep.horizons[0]].K[0].shape[1]]
    rows = []
    for T in sweep.horizons:
        for player, r, lab, v in _gain_rows(sweep.gains[T], labels):
            rows.append([T, player, r, lab, v])
    _write_csv(out / "fig1_gains.csv", ["T", "player", "row", "column", "value"], rows)
    cost_rows, sweep_rows = [], []
    for k, T in enumerate(sweep.horizons):
        for i in range(N):
            J = sweep.costs[k, i] if sweep.costs is not None else np.nan
            Jo = oracle_costs[i] if oracle_costs is not None else np.nan
            cost_rows.append([T, i + 1, J, Jo])
            sweep_rows.append([T, i + 1, sweep.gain_diff[k], J, Jo, abs(J - Jo)])
    _write_csv(out / "fig2_costs.csv", ["T", "player", "J_tilde", "J_oracle"], cost_rows)
    _write_csv(out / "sweep.csv", ["T", "player", "gain_diff", "J_tilde", "J_oracle", "gap"], sweep_rows)
    for T in sweep.horizons:
        _write_csv(out / "gains" / f"T_{T:03d}.csv", ["player", "row", "column", "value"],
                   _gain_rows(sweep.gains[T], labels))
    if report is not None:
        _write_csv(out / "convergence.csv", ["T", "player", "gain_gap", "offset_gap", "cost_gap", "ratio"],
                   [[r["T"], r["player"], r["gain_gap"], r["offset_gap"], r["cost_gap"], r["ratio"]]
                    for r in report.rows()])
    if args.plot:
        from .plots import costs_chart, gains_chart
        gains_chart(sweep, out / "fig1_gains.svg")
        if sweep.costs is not None:
            costs_chart(sweep, out / "fig2_costs.svg")
    _print(f"sweep T={sweep.horizons[0]}..{sweep.horizons[-1]}: first d(T) <= {eps} at "
           f"T={sweep.converged_at}, settled from T={sweep.settled_at}")
    if sweep.extras.get("diverged"):
        _print(f"closed loop diverged for T in {[T for T, _ in sweep.extras['diverged']]}")
    return sweep, preds, oracle_costs


def cmd_sweep(args) -> int:
    cfg = _config(args)
    data = cfg.load_data(seed=args.seed, length=args.length)
    out = _out_dir(cfg, args)
    eps = cfg.eps if args.eps is None else args.eps
    M = cfg.M if args.M is None else args.M
    _sweep(cfg, data, args, out, eps, M)
    _print(f"wrote sweep outputs to {out}")
    return EXIT_OK


def _gain_match(sol):
    """Compare stage-1 gains with the printed values in both window orderings."""
    perm = newest_first_permutation(bm.T_INI, 2, 2)
    st = sol.stage(1)
    result = {}
    for name, reorder in (("canonical", lambda K: K), ("newest_first", lambda K: K[:, perm])):
        dev = max(max(float(np.max(np.abs(reorder(st.K[i]) - bm.K_PRINTED[i]))),
                      float(np.max(np.abs(st.L[i] - bm.L_PRINTED[i])))) for i in range(2))
        result[name] = dev
    return result


def cmd_reproduce(args) -> int:
    seed = 0 if args.seed is None else args.seed
    length = bm.DATA_LENGTH if args.length is None else args.length
    doc = config_from_dict(reference_config_dict(seed, length))
    out = Path(args.out) if args.out else Path("reproduction")
    out.mkdir(parents=True, exist_ok=True)
    checks: list[tuple[str, bool, str]] = []
    data = doc.load_data()
    write_trajectory_csv(data[0], out / "data.csv")
    rep = check_assumption1(data, doc.T_ini, bm.HORIZON + 1, doc.state_dim)
    checks.append(("rank certificate (T_ini + 51)", rep.passed, rep.as_text()))
    if not rep.passed:
        _table(checks)
        return EXIT_CERT

    blocks, preds = _certified(doc, data, bm.HORIZON)
    sol = solve_finite_fne(blocks, preds, doc.game, bm.HORIZON, keep_values=True)
    _write_solution(sol, out)
    match = _gain_match(sol)
    best = min(match, key=match.get)
    checks.append(("stage-1 gains vs printed", match[best] <= bm.GAIN_TOL,
                   f"ordering={best} max dev={match[best]:.2e} "
                   f"(canonical {match['canonical']:.2e}, newest-first {match['newest_first']:.2e})"))
    basis = behavior_basis(data, doc.T_ini, doc.state_dim)
    resid = verify_solution_residuals(sol, preds, basis, doc.game)
    checks.append(("coupled-equation residuals", resid.passed, f"worst {resid.worst:.2e}"))
    known = solve_finite_fne_known(doc.system, doc.game, bm.HORIZON)
    cc = cross_check_theorem1(sol, known, doc.system, basis)
    checks.append(("known-dynamics cross-check", cc.passed, f"worst {cc.worst:.2e}"))

    sweep, preds_sweep, oracle = _sweep(doc, data, args, out, doc.eps, doc.M)
    checks.append(("gain convergence d(T) <= eps", sweep.converged_at is not None,
                   f"first at T={sweep.converged_at}, settled from T={sweep.settled_at}"))
    k50 = sweep.horizons.index(bm.HORIZON)
    k5 = sweep.horizons.index(5)
    gap50 = np.abs(sweep.costs[k50] - oracle)
    gap5 = np.abs(sweep.costs[k5] - oracle)
    rel = gap50 / np.abs(oracle)
    checks.append(("cost within 1% of oracle at T=50", bool(np.all(rel <= 0.01)),
                   f"relative gaps {np.array2string(rel, precision=2)}"))
    checks.append(("cost gap shrinks from T=5 to T=50", bool(np.all(gap50 < gap5)),
                   f"gap(5)={np.array2string(gap5, precision=3)} gap(50)={np.array2string(gap50, precision=3)}"))
    w = bm.reference_window(doc.system)
    r_sys = run_receding_horizon(sweep.gains[bm.HORIZON], doc.system, w.u_ini, w.y_ini, doc.game, doc.M)
    r_dat = run_receding_horizon(sweep.gains[bm.HORIZON], preds_sweep, w.u_ini, w.y_ini, doc.game, doc.M)
    dy = float(np.max(np.abs(r_sys.trajectory.outputs - r_dat.trajectory.outputs)))
    scale = max(1.0, float(np.max(np.abs(r_sys.trajectory.outputs))))
    checks.append(("data-mode loop matches system loop", dy <= 1e-8 * scale,
                   f"max |dy| = {dy:.2e}, window drift {r_dat.max_window_distance:.1e}"))
    _write_json(out / "summary.json", {
        "seed": seed, "length": length, "ordering": best, "gain_deviation": match,
        "stage1": _stage1_table(sol, bm.T_INI, 2, 2), "residuals": resid.max_by_kind(),
        "cross_check": cc.to_dict(), "oracle_costs": oracle, "J_tilde_50": sweep.costs[k50],
        "checks": [{"name": n, "pass": ok, "detail": d} for n, ok, d in checks]})
    _table(checks)
    return EXIT_OK if all(ok for _, ok, _ in checks) else EXIT_MISMATCH


def _table(checks) -> None:
    width = max(len(n) for n, _, _ in checks)
    for name, ok, detail in checks:
        _print(f"{'PASS' if ok else 'FAIL'}  {name:<{width}}  {detail}")


# --------------------------------------------------------------------------- entry


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gamekit", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", help="experiment JSON file")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--seed", type=int, help="data-generation seed override")
        p.add_argument("--length", type=int, help="data-generation length override")
        p.add_argument("--T", type=int, help="horizon override")
        p.add_argument("--eps", type=float, help="gain-convergence threshold")
        p.add_argument("--M", type=int, help="receding-horizon steps")
        p.add_argument("--plot", action="store_true", help="also write SVG charts")
        p.add_argument("--jobs", type=int, default=1, help="parallel horizon solves")
        return p

    common(sub.add_parser("gen-data", help="generate offline data from the configured system"))
    common(sub.add_parser("check", help="certify the data's rank condition"))
    common(sub.add_parser("solve", help="solve and verify the finite-horizon equilibrium"))
    common(sub.add_parser("sweep", help="horizon sweep with receding-horizon costs"))
    common(sub.add_parser("reproduce-paper", help="run the embedded two-player reference study"),
           config=False)
    return parser


COMMANDS = {"gen-data": cmd_gen_data, "check": cmd_check, "solve": cmd_solve,
            "sweep": cmd_sweep, "reproduce-paper": cmd_reproduce}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except _Exit as exc:
        if str(exc):
            print(f"gamekit: {exc}", file=sys.stderr)
        return exc.code
    except SingularStageMatrix as exc:
        print(f"gamekit: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except RankShortfall as exc:
        print(f"gamekit: {exc}", file=sys.stderr)
        return EXIT_CERT
    except (ConfigError, InvalidInput, InconsistentInitialData, OSError, RuntimeError) as exc:
        print(f"gamekit: {exc}", file=sys.stderr)
        return EXIT_IO
    except GamekitError as exc:
        print(f"gamekit: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
