"""Acceptance suite: one PASS/FAIL line per primary criterion.

Run with ``pytest tests/test_acceptance.py -v`` (lines are printed even under
capture) or directly with ``python tests/test_acceptance.py``.
"""
import math
import time

import numpy as np
import pytest

from warplab.errors import HypothesisError
from warplab.fiber import build_fiber
from warplab.fields import random_state_field
from warplab.graphgeom import (
    GraphState,
    completeness_ratio,
    normal_field,
    random_path,
    ricci_lower_bound_check,
    shape_operator,
    tocho_gap,
)
from warplab.identities import disk_cmc_state, fit_order, interior_mask, refinement_study, torus_states
from warplab.parabolic import capacity, graph_mesh, lemma1_bound_check, parabolicity_trend
from warplab.solver import SolveConfig, default_initial, jacobian, le1_empirical_check, residual, solve_cmc
from warplab.warp import WarpSpec

INF = math.inf
FLAT = WarpSpec("constant", {"c": 1.0})
LIN = WarpSpec("linear", {"a": 1.0, "b": 0.0}, (0.0, INF))
FAMILIES = [
    (LIN, (0.5, 5.0)),
    (WarpSpec("power", {"c": 1.0, "k": 0.5}, (0.0, INF)), (0.5, 5.0)),
    (WarpSpec("exponential", {"c": 1.0, "a": -0.7}), (-2.0, 2.0)),
    (WarpSpec("logistic", {"K": 2.0, "r": 1.5, "t_mid": 0.0}, (0.0, INF)), (0.2, 4.0)),
    (WarpSpec("sine", {"c": 1.0, "omega": 1.0}, (0.0, math.pi)), (0.3, 2.8)),
]
IDS = ("laptau", "lapftau", "ARS1995", "wegotit", "hess")


def torus(m, L=1.0):
    return build_fiber(kind="torus", lengths=[L, L], shape=[m, m])


def report(capsys, k, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed <= budget
    with capsys.disabled():
        print(f"\nCRITERION {k:2d} {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f}s / {budget:.0f}s]")
    assert ok, detail


# criterion 7 solutions are reused by criteria 6 and 10
_SOLVES = {}


def criterion7_solves():
    if not _SOLVES:
        fb = torus(64)
        x, y = fb.coords.T
        t = time.perf_counter()
        a = solve_cmc(fb, LIN, SolveConfig(H=-0.5, lam=0.5), 2 + 0.1 * np.sin(2 * np.pi * x))
        _SOLVES["lin"] = (fb, LIN, a, time.perf_counter() - t)
        t = time.perf_counter()
        b = solve_cmc(fb, FLAT, SolveConfig(H=0.0, lam=0.9), 0.1 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y))
        _SOLVES["flat"] = (fb, FLAT, b, time.perf_counter() - t)
    return _SOLVES


def test_c01_slice_exactness(capsys):
    t = time.perf_counter()
    rng = np.random.default_rng(101)
    fb = torus(16)
    worst_r = worst_a = 0.0
    for warp, (lo, hi) in FAMILIES:
        for t0 in rng.uniform(lo, hi, 10):
            f, fp = (float(v) for v in warp.derivatives(t0)[:2])
            s = GraphState(fb, warp, np.full(fb.n_nodes, t0))
            worst_r = max(worst_r, float(np.max(np.abs(residual(s, -fp / f)))))
            A = shape_operator(s).A
            worst_a = max(worst_a, float(np.max(np.abs(A - (fp / f) * np.eye(2)))))
    ok = worst_r <= 1e-12 and worst_a <= 1e-8
    report(capsys, 1, ok, f"slices 5x10: max|R|={worst_r:.1e} (<=1e-12), max|A-(f'/f)I|={worst_a:.1e} (<=1e-8)",
           time.perf_counter() - t, 10)


def test_c02_identity_convergence(capsys):
    t = time.perf_counter()
    parts, ok = [], True
    res = [32, 64, 128]
    for name, warp in (("f=t", LIN), ("f=1", FLAT)):
        st = refinement_study(torus_states(warp, 0.3, res, seed=5), [1 / m for m in res], f"T2 {name}", names=IDS)
        ok &= st.passed
        fin = [v for v in st.fits.values() if not v.exact]
        worst = min(fin, key=lambda v: v.order) if fin else None
        parts.append(f"T2 {name}: min order {worst.order:.2f}" + (f" min ratio {min(worst.ratios):.2f}" if worst else "")
                     + f" exact={[k for k, v in st.fits.items() if v.exact]}")
    hs = [1 / 32, 1 / 64, 1 / 128]
    for name, warp, H in (("f=1", FLAT, 0.2), ("f=t", LIN, -0.45)):
        states, amp = [], None
        for h in hs:
            s, r, amp = disk_cmc_state(warp, H, 0.3, h, seed=3, amp=amp)
            ok &= r.status == "converged"
            states.append(s)
        st = refinement_study(states, hs, "disk", H, names=IDS, masks=[interior_mask(s.fiber) for s in states])
        ok &= st.passed
        p = min(v.order for v in st.fits.values())
        rt = min(min(v.ratios) for v in st.fits.values() if v.ratios)
        parts.append(f"disk CMC {name} H={H}: min order {p:.2f} min ratio {rt:.2f}")
    report(capsys, 2, ok, "; ".join(parts) + " (order>=1, ratio>=1.8)", time.perf_counter() - t, 300)


def _tocho_minima(state, H, mask):
    rep = tocho_gap(state, H)
    return float(np.min(rep.gap[mask])), float(np.min(rep.gap_discrete[mask])), rep


def test_c03_tocho(capsys):
    t = time.perf_counter()
    combos = [(FLAT, lam) for lam in (0.2, 0.4)] + [(LIN, lam) for lam in (0.2, 0.4)]
    H_range = {"constant": (-0.3, 0.3), "linear": (-0.55, -0.3)}
    hs = [1 / 16, 1 / 32, 1 / 64]
    # discretization constant of the gap: closed vs discrete Laplacian route on a refinement chain
    C_fit = 0.0
    for warp, lam in combos:
        H = float(np.mean(H_range[warp.family]))
        amp, errs = None, []
        for h in hs:
            s, r, amp = disk_cmc_state(warp, H, lam, h, seed=0, amp=amp)
            rep = tocho_gap(s, H)
            m = interior_mask(s.fiber)
            errs.append(float(np.max(np.abs(rep.gap - rep.gap_discrete)[m])))
        C_fit = max(C_fit, fit_order(hs, errs).C)
    h = 1 / 32
    n_states = n_cert = n_conv = soft = hard = 0
    worst = np.inf
    for warp, lam in combos:
        for seed in range(50):
            H = float(np.random.default_rng(1000 + seed).uniform(*H_range[warp.family]))
            s, r, amp = disk_cmc_state(warp, H, lam, h, seed=seed)
            n_states += 1
            n_conv += r.status == "converged"
            if r.status != "converged":
                continue
            m = interior_mask(s.fiber)
            try:
                gc, gd, _ = _tocho_minima(s, H, m)
            except HypothesisError:
                continue
            n_cert += 1
            g = min(gc, gd)
            worst = min(worst, g)
            if g < -10 * C_fit * h:
                hard += 1
            if g < 0:
                soft += 1
                s2, r2, _ = disk_cmc_state(warp, H, lam, 1 / 128, seed=seed, amp=amp)
                gc2, gd2, _ = _tocho_minima(s2, H, interior_mask(s2.fiber))
                if min(gc2, gd2) < -10 * C_fit / 128:
                    hard += 1
    ok = n_states == 200 and n_cert == 200 and hard == 0
    report(capsys, 3, ok,
           f"tocho: {n_cert}/{n_states} certified CMC states (converged {n_conv}), min gap {worst:.3e} "
           f">= -10*C_fit*h = {-10 * C_fit * h:.2e} (C_fit={C_fit:.3g}), soft {soft}, hard {hard}",
           time.perf_counter() - t, 600)


def test_c04_capacity_oracles(capsys):
    t = time.perf_counter()
    fb = build_fiber(kind="disk", radius=3.0, h=0.02)
    c = fb.nearest_node([0, 0])
    Rs2 = [1.5, 2.0, math.e, 2.9]
    caps2 = [capacity(fb, c, 1.0, R).cap for R in Rs2]
    e2 = abs(caps2[2] / (2 * math.pi) - 1)
    fb3 = build_fiber(kind="disk", radius=8.5, h=0.125, dim=3)
    c3 = fb3.nearest_node([0, 0, 0])
    Rs3 = [2.0, 4.0, 8.0]
    caps3 = [capacity(fb3, c3, 1.0, R).cap for R in Rs3]
    e3 = abs(caps3[-1] / (4 * math.pi / (1 - 1 / 8)) - 1)
    mono = all(b < a for cs in (caps2, caps3) for a, b in zip(cs, cs[1:]))
    ok = e2 <= 0.05 and e3 <= 0.08 and mono
    report(capsys, 4, ok, f"planar R=e rel err {e2:.4f} (<=0.05); 3-D R=8 h=0.125 rel err {e3:.4f} (<=0.08); "
           f"monotone in R: {mono}", time.perf_counter() - t, 120)


def test_c05_trend(capsys):
    t = time.perf_counter()
    Rs = [4, 8, 16, 32]
    fb2 = build_fiber(kind="disk", radius=32.5, h=0.25)
    tr2 = parabolicity_trend(fb2, fb2.nearest_node([0, 0]), 1.0, Rs)
    fb3 = build_fiber(kind="disk", radius=33.0, h=1.0, dim=3)
    tr3 = parabolicity_trend(fb3, fb3.nearest_node([0, 0, 0]), 1.0, Rs)
    ok = tr2.verdict == "parabolic-trend" and tr3.verdict == "nonparabolic-trend"
    report(capsys, 5, ok, f"2-D verdict {tr2.verdict} (drop {tr2.drop:.2f}); 3-D verdict {tr3.verdict} "
           f"(c_inf {tr3.c_inf:.2f})", time.perf_counter() - t, 180)


def test_c06_lemma1(capsys):
    t = time.perf_counter()
    cases = []
    fb = build_fiber(kind="disk", radius=7.0, h=0.05)
    c = fb.nearest_node([0, 0])
    cases.append(("v=1", lemma1_bound_check(fb, np.ones(fb.n_nodes), c, 1.0, 3.0)))
    for r_in, R_out, x in ((0.5, 6.0, 3.0), (0.5, 6.0, -2.5), (1.0, 5.0, 3.0)):
        v = capacity(fb, c, r_in, R_out).potential
        cases.append((f"potential@{x}", lemma1_bound_check(fb, v, fb.nearest_node([x, 0.0]), 0.5, 1.5)))
    # coshphi of converged f=1 solutions: Dirichlet disks and the closed torus of criterion 7
    for H in (0.0, 0.2, -0.2):
        s, r, _ = disk_cmc_state(FLAT, H, 0.4, 1 / 64, seed=7)
        if r.status != "converged":
            cases.append((f"disk H={H} not converged", None))
            continue
        v = normal_field(s).coshphi
        v = np.where(np.isfinite(v), v, 1.0)  # Dirichlet nodes lie outside B_R
        cases.append((f"coshphi disk H={H}", lemma1_bound_check(graph_mesh(s), v, s.fiber.nearest_node([0, 0]), 0.2, 0.6)))
    fbt, _, res, _ = criterion7_solves()["flat"]
    st = GraphState(fbt, FLAT, res.u_final)
    cases.append(("coshphi torus H=0", lemma1_bound_check(graph_mesh(st), normal_field(st).coshphi, 0, 0.1, 0.3)))
    bad = [name for name, rep in cases if rep is None or not rep.holds]
    report(capsys, 6, not bad, f"lemma1 on {len(cases)} cases, violations {len(bad)} {bad}", time.perf_counter() - t, 120)


def test_c07_uniqueness(capsys):
    t = time.perf_counter()
    sol = criterion7_solves()
    fb, _, a, ta = sol["lin"]
    _, _, b, tb = sol["flat"]
    da = float(np.max(np.abs(a.u_final - 2.0)))
    db = b.slice_detect.deviation if b.slice_detect else np.inf
    ok = a.status == "converged" and da < 1e-7 and b.status == "converged" and db < 1e-8 and max(ta, tb) <= 120
    report(capsys, 7, ok, f"f=t H=-1/2: {a.status} max|u-2|={da:.1e} (<1e-7, {ta:.1f}s); f=1 H=0: {b.status} "
           f"deviation {db:.1e} (<1e-8, {tb:.1f}s)", time.perf_counter() - t, 240)


def test_c08_nonexistence(capsys):
    t = time.perf_counter()
    fb = torus(32)
    counts = {}
    for H in (0.2, -0.2):
        n = 0
        for seed in range(20):
            cfg = SolveConfig(H=H, lam=0.9, restarts=10, seed=seed)
            r = solve_cmc(fb, FLAT, cfg, default_initial(fb, FLAT, H, cfg))
            n += r.status == "nonexistence-evidence"
        counts[H] = n
    ok = all(v == 20 for v in counts.values())
    report(capsys, 8, ok, f"f=1 on T2 32x32: H=+0.2 {counts[0.2]}/20, H=-0.2 {counts[-0.2]}/20 nonexistence-evidence",
           time.perf_counter() - t, 600)


def test_c09_jacobian(capsys):
    t = time.perf_counter()
    rng = np.random.default_rng(909)
    fams = [(FLAT, (-3.0, 3.0))] + FAMILIES
    fb = torus(16)
    worst = 0.0
    for k in range(50):
        warp, win = fams[k % len(fams)]
        u = random_state_field(fb, warp, 0.5 * sum(win), float(rng.uniform(0.1, 0.8)), rng)
        s = GraphState(fb, warp, u)
        v = rng.normal(size=fb.n_nodes)
        H = float(rng.uniform(-0.5, 0.5))
        eps = 1e-6
        fd = (residual(s.with_u(u + eps * v), H) - residual(s.with_u(u - eps * v), H)) / (2 * eps)
        jv = jacobian(s) @ v
        worst = max(worst, float(np.linalg.norm(fd - jv) / np.linalg.norm(jv)))
    report(capsys, 9, worst <= 1e-5, f"Jacobian at 50 states: max rel directional error {worst:.1e} (<=1e-5)",
           time.perf_counter() - t, 60)


def test_c10_squeeze_ricci_completeness(capsys):
    t = time.perf_counter()
    rng = np.random.default_rng(1010)
    parts, ok = [], True
    for key, (fb, warp, res, _) in criterion7_solves().items():
        if res.status != "converged":
            ok = False
            parts.append(f"{key}: not converged")
            continue
        sq = le1_empirical_check(res, warp)
        s = GraphState(fb, warp, res.u_final)
        cert = ricci_lower_bound_check(s)
        paths = sum(completeness_ratio(s, random_path(fb, rng, 40)).holds for _ in range(100))
        ok &= sq.passed and not sq.skipped and cert.passed and not cert.skipped and paths == 100
        parts.append(f"{key}: le1 {sq.lower:.3g}<={sq.H:.3g}<={sq.upper:.3g} {sq.passed}, le2 margin {cert.margin:.1e} "
                     f"{cert.passed}, complete {paths}/100")
    report(capsys, 10, ok, "; ".join(parts), time.perf_counter() - t, 120)


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
