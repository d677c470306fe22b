"""Command line: ``warplab <suite> --config <path> [--out DIR] [--seed N]``.

Exit codes: 0 every check passed, 1 a check failed (or the run raised),
2 configuration error.  ``WARPLAB_THREADS`` sets the worker count of sweeps
and capacity trends.
"""
from __future__ import annotations

import argparse
import math
import sys
from dataclasses import fields as dc_fields
from pathlib import Path

import numpy as np

from .config import SUITES, load_config, resolve
from .errors import ConfigError, WarpLabError
from .fiber import build_fiber, export_field_csv
from .fields import random_state_field
from .graphgeom import closed_forms, export_fields_csv
from .identities import IDENTITIES, disk_cmc_state, interior_mask, refinement_study, torus_states
from .parabolic import capacity, parabolicity_trend
from .report import Report, write_rows
from .solver import SolveConfig, le1_empirical_check, solve_cmc, sweep
from .warp import WarpSpec

TORUS_NOTE = (
    "flat torus fibers are closed; the runs probe the spatially closed analog of the "
    "complete noncompact setting, not that setting itself"
)


def _warp(cfg) -> WarpSpec:
    return WarpSpec.from_dict(cfg["warp"])


def _center(fiber, cfg) -> int:
    if "center" in cfg:
        return fiber.nearest_node(np.asarray(cfg["center"], dtype=float))
    if fiber.kind == "disk":
        return fiber.nearest_node(np.zeros(fiber.dim))
    return 0


def _radii(cfg):
    rd = cfg["radii"]
    R = rd["R"] if isinstance(rd["R"], list) else [rd["R"]]
    return float(rd["r"]), [float(x) for x in R]


def _base_height(cfg, warp) -> float:
    u0 = cfg.get("u0") or {}
    if "base" in u0:
        return float(u0["base"])
    if warp.contains(2.0):
        return 2.0
    a, b = warp.sample_window()
    return 0.5 * (a + b)


def _solver_config(cfg) -> SolveConfig:
    extra = dict(cfg.get("solver") or {})
    known = {f.name for f in dc_fields(SolveConfig)}
    for k in ("max_newton", "max_backtracks", "restarts", "stall_window"):
        if k in extra:
            extra[k] = int(extra[k])
    return SolveConfig(H=float(cfg.get("H", 0.0)), lam=float(cfg.get("lambda", 0.9)), seed=int(cfg["seed"]),
                       **{k: v for k, v in extra.items() if k in known})


def _initial(fiber, warp, cfg, scfg: SolveConfig) -> np.ndarray:
    from .solver import default_initial

    u0 = cfg.get("u0")
    if not u0:
        return default_initial(fiber, warp, scfg.H, scfg)
    if "expression" in u0:
        X = fiber.coords
        ns = {k: getattr(np, k) for k in ("sin", "cos", "exp", "log", "sqrt", "tanh", "cosh", "sinh", "abs")}
        ns.update(pi=np.pi, e=np.e)
        for k, name in enumerate("xyzw"[: X.shape[1]]):
            ns[name] = X[:, k]
        try:
            val = eval(u0["expression"], {"__builtins__": {}}, ns)
        except Exception as exc:  # noqa: BLE001 - any failure here is a config problem
            raise ConfigError(f"u0.expression: cannot evaluate ({exc})")
        return np.broadcast_to(np.asarray(val, dtype=float), (fiber.n_nodes,)).copy()
    rng = np.random.default_rng(int(u0.get("seed", cfg["seed"])))
    return random_state_field(fiber, warp, float(u0["base"]), float(u0.get("ratio", 0.3 * scfg.lam)), rng)


# ---------------------------------------------------------------------------------------
# suites


def run_identities(cfg, out: Path) -> Report:
    rep = Report("verify-identities", cfg, cfg["seed"])
    tol = cfg["tolerances"]
    warp = _warp(cfg)
    lam = float(cfg["lambda"])
    res = cfg["resolutions"]
    L = float(cfg["fiber"].get("lengths", [1.0, 1.0])[0])
    t0 = _base_height(cfg, warp)
    hs = [L / m for m in res]
    fit_kw = dict(min_order=tol["min_order"], min_ratio=tol["min_ratio"])

    chains = []
    states = torus_states(warp, lam, res, seed=cfg["seed"], t0=t0, L=L)
    chains.append(("torus", refinement_study(states, hs, "torus", **fit_kw), states[-1], None))
    rep.notes.append("torus states are smooth random fields; the cosh(phi) Laplacians carry the "
                     "n g(grad H, K^T) correction because these states are not CMC")
    if "cmc" in cfg:
        H = float(cfg["cmc"]["H"])
        radius = float(cfg["cmc"].get("radius", 1.0))
        dstates, amp = [], None
        for m in res:
            st, sr, amp = disk_cmc_state(warp, H, lam, 1.0 / m, seed=cfg["seed"], t0=t0, radius=radius, amp=amp)
            rep.check(f"disk-cmc/solve-{m}", sr.status, "converged", "==")
            dstates.append(st)
        masks = [interior_mask(s.fiber) for s in dstates]
        chains.append(("disk-cmc", refinement_study(dstates, [1.0 / m for m in res], "disk-cmc", H, masks=masks, **fit_kw),
                       dstates[-1], H))

    rows = []
    for label, study, finest, H in chains:
        rep.results[label] = study.summary()
        for name in IDENTITIES:
            fit = study.fits[name]
            if fit.exact:
                rep.check(f"{label}/{name}/exact", max(fit.errors), 1e-11, "<=", "exact to round-off at every level")
            else:
                rep.check(f"{label}/{name}/order", fit.order, tol["min_order"], ">=")
                rep.check(f"{label}/{name}/min-ratio", min(fit.ratios), tol["min_ratio"], ">=")
        for m, row in zip(res, study.residuals):
            rows += [{"chain": label, "resolution": m, "identity": k, "residual": v} for k, v in row.items()]
        gf = closed_forms(finest, H)
        p = export_fields_csv(finest, gf, out / f"fields_{label}_{res[-1]}.csv")
        rep.artifacts.append(p.name)
    write_rows(out / "identity_residuals.csv", rows)
    rep.artifacts.append("identity_residuals.csv")
    return rep


def _capacity_oracle(fiber, r, R):
    if fiber.kind != "disk":
        return None
    if fiber.dim == 2:
        return 2 * math.pi / math.log(R / r)
    if fiber.dim == 3:
        return 4 * math.pi / (1 / r - 1 / R)
    return None


def run_capacity(cfg, out: Path) -> Report:
    rep = Report("capacity", cfg, cfg["seed"])
    fiber = build_fiber(dict(cfg["fiber"]))
    c = _center(fiber, cfg)
    r, Rs = _radii(cfg)
    rows = []
    caps = []
    for R in Rs:
        cr = capacity(fiber, c, r, R)
        oracle = _capacity_oracle(fiber, r, R)
        row = cr.row()
        row["oracle"] = oracle if oracle is not None else float("nan")
        rows.append(row)
        caps.append(cr.cap)
        if oracle is not None:
            rep.check(f"cap(R={R:g})/relative-error", abs(cr.cap - oracle) / oracle, cfg["tolerances"]["capacity_rel"],
                      "<=", f"cap={cr.cap:.6g} oracle={oracle:.6g}")
        rep.check(f"cap(R={R:g})/not-truncated", cr.truncated, False, "==")
    if len(caps) > 1:
        rep.check("monotone-in-R", bool(np.all(np.diff(caps) <= 0)), True, "==")
    rep.results["capacities"] = rows
    write_rows(out / "capacity.csv", rows)
    rep.artifacts.append("capacity.csv")
    return rep


def run_solve(cfg, out: Path) -> Report:
    rep = Report("solve", cfg, cfg["seed"])
    fiber = build_fiber(dict(cfg["fiber"]))
    warp = _warp(cfg)
    scfg = _solver_config(cfg)
    u0 = _initial(fiber, warp, cfg, scfg)
    res = solve_cmc(fiber, warp, scfg, u0)
    res.write(out, "solve")
    export_field_csv(fiber, out / "u_final.csv", {"u0": u0, "u_final": res.u_final})
    rep.artifacts += ["solve.json", "solve_residual_history.csv", "u_final.csv"]
    rep.results["solve"] = res.summary()
    if fiber.kind == "torus":
        rep.notes.append(TORUS_NOTE)
    if res.status == "converged":
        rep.check("final-residual", res.final_residual, scfg.tol_residual, "<=")
        rep.check("constraint-margin", res.constraint_min_margin, 0.0, ">=")
        sq = le1_empirical_check(res, warp, fiber=fiber)
        rep.results["squeeze"] = {"lower": sq.lower, "H": sq.H, "upper": sq.upper, "skipped": sq.skipped, "note": sq.note}
        if not sq.skipped:
            rep.check("squeeze", sq.passed, True, "==", f"{sq.lower:.6g} <= {sq.H:.6g} <= {sq.upper:.6g}")
    exp = cfg.get("expect") or {}
    if "status" in exp:
        rep.check("status", res.status, exp["status"], "==")
    if "slice_t0" in exp:
        sd = res.slice_detect
        dev = float(np.max(np.abs(res.u_final - float(exp["slice_t0"]))))
        rep.check("slice-deviation", dev, cfg["tolerances"]["slice_dev"], "<=", f"detected t0={sd.t0 if sd else None}")
    if exp.get("constant"):
        dev = float(np.ptp(res.u_final)) / 2
        rep.check("constant-deviation", dev, cfg["tolerances"]["slice_dev"], "<=")
    return rep


def run_sweep(cfg, out: Path) -> Report:
    rep = Report("sweep", cfg, cfg["seed"])
    fiber = build_fiber(dict(cfg["fiber"]))
    warp = _warp(cfg)
    scfg = _solver_config(cfg)
    rows = sweep(fiber, warp, cfg.get("H_grid", []), scfg)
    rep.results["map"] = rows
    if fiber.kind == "torus":
        rep.notes.append(TORUS_NOTE)
    flat = [{k: v for k, v in r.items() if k not in ("runs", "slice_detect")} for r in rows]
    for r, fr in zip(rows, flat):
        sd = r.get("slice_detect")
        fr["slice_t0"] = sd["t0"] if sd else float("nan")
        fr["slice_deviation"] = sd["deviation"] if sd else float("nan")
        if r["status"] == "converged":
            rep.check(f"H={r['H']:g}/constraint-margin", r["constraint_min_margin"], 0.0, ">=")
    exp = (cfg.get("expect") or {}).get("statuses")
    if exp:
        for r, s in zip(rows, exp):
            rep.check(f"H={r['H']:g}/status", r["status"], s, "==")
    write_rows(out / "sweep.csv", flat)
    rep.artifacts.append("sweep.csv")
    return rep


def run_trend(cfg, out: Path) -> Report:
    rep = Report("parabolic-trend", cfg, cfg["seed"])
    tol = cfg["tolerances"]
    fiber = build_fiber(dict(cfg["fiber"]))
    r, Rs = _radii(cfg)
    tr = parabolicity_trend(fiber, _center(fiber, cfg), r, Rs, drop_threshold=tol["drop_threshold"],
                            ratio_span=tol["ratio_span"], asymptote_fraction=tol["asymptote_fraction"])
    tr.write_csv(out / "trend.csv")
    rep.artifacts.append("trend.csv")
    rep.results["trend"] = {"rows": tr.rows(), "c_inf": tr.c_inf, "slope": tr.slope, "drop": tr.drop,
                            "monotone": tr.monotone, "verdict": tr.verdict}
    rep.notes.append("the verdict is a finite-radius diagnostic trend, not a proof of (non)parabolicity")
    rep.check("monotone-in-R", tr.monotone, True, "==")
    if "verdict" in (cfg.get("expect") or {}):
        rep.check("verdict", tr.verdict, cfg["expect"]["verdict"], "==")
    else:
        rep.check("verdict-valid", tr.verdict in ("parabolic-trend", "nonparabolic-trend", "inconclusive", "no-verdict"),
                  True, "==", tr.verdict)
    return rep


RUNNERS = {
    "verify-identities": run_identities,
    "capacity": run_capacity,
    "solve": run_solve,
    "sweep": run_sweep,
    "parabolic-trend": run_trend,
}


def run_suite(cfg: dict, out: Path) -> Report:
    suite = cfg["suite"]
    if suite != "full-report":
        return _guarded(suite, cfg, out)
    rep = Report("full-report", {k: v for k, v in cfg.items() if k != "suites"}, cfg["seed"])
    for name, sub in cfg["suites"].items():
        sub_rep = _guarded(name, sub, out / name)
        sub_rep.artifacts = [f"{name}/{a}" for a in sub_rep.artifacts]
        rep.merge(sub_rep, name)
    rep.config = {**rep.config, "suites": cfg["suites"]}
    return rep


def _guarded(suite, cfg, out: Path) -> Report:
    out.mkdir(parents=True, exist_ok=True)
    try:
        rep = RUNNERS[suite](cfg, out)
    except ConfigError:
        raise
    except (WarpLabError, ValueError) as exc:
        rep = Report(suite, cfg, cfg["seed"])
        rep.check("run", f"{type(exc).__name__}: {exc}", "completed", "==")
    return rep


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="warplab", description="Spacelike graph experiments in warped products.")
    ap.add_argument("suite", choices=SUITES)
    ap.add_argument("--config", required=True, help="JSON config file")
    ap.add_argument("--out", default=None, help="output directory (default: config 'out' or ./warplab-out)")
    ap.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        data = load_config(args.config)
        cfg = resolve(data, args.suite, args.seed)
        out = Path(args.out or cfg.get("out") or "warplab-out")
        rep = run_suite(cfg, out)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for p in exc.problems:
            print(f"  {p}", file=sys.stderr)
        return 2
    path = rep.write(out)
    n_fail = sum(not c["passed"] for c in rep.checks)
    print(f"{args.suite}: {len(rep.checks) - n_fail}/{len(rep.checks)} checks passed -> {path}")
    for c in rep.checks:
        if not c["passed"]:
            print(f"  FAIL {c['name']}: {c['value']!r} {c['comparison']} {c['tolerance']!r}")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
