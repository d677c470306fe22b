import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from warplab.errors import CausalityError, ConditioningError, HypothesisError
from warplab.fiber import build_fiber
from warplab.fields import random_state_field
from warplab.graphgeom import (
    GraphState,
    ambient_curvature_form,
    check_spacelike,
    closed_forms,
    completeness_ratio,
    export_fields_csv,
    graph_gradient,
    mean_curvature,
    normal_field,
    random_path,
    ricci_lower_bound_check,
    shape_operator,
    tocho_gap,
)
from warplab.warp import WarpSpec

INF = math.inf
FLAT = WarpSpec("constant", {"c": 1.0})
LIN = WarpSpec("linear", {"a": 1.0, "b": 0.0}, (0.0, INF))


def torus(m):
    return build_fiber(kind="torus", lengths=[1, 1], shape=[m, m])


def disk(h=0.05, R=1.0):
    return build_fiber(kind="disk", radius=R, h=h)


def random_state(m, warp, lam, seed, t0=2.0):
    fb = torus(m)
    u = random_state_field(fb, warp, t0, lam, np.random.default_rng(seed))
    return GraphState(fb, warp, u)


# -- spacelike test and normal ------------------------------------------------------------


def test_spacelike_constant():
    st_ = GraphState(torus(16), LIN, np.full(256, 2.0))
    rep = check_spacelike(st_, 0.01)
    assert rep.max_ratio == 0.0 and rep.verdict == "lambda-elliptic"


def test_spacelike_ramp_not_elliptic():
    fb = disk()
    st_ = GraphState(fb, FLAT, 0.99 * fb.coords[:, 0])
    rep = check_spacelike(st_, 0.9)
    assert rep.max_ratio == pytest.approx(0.99)
    assert rep.spacelike and not rep.lambda_elliptic and rep.verdict == "spacelike"


def test_spacelike_sine_perturbation():
    fb = torus(64)
    st_ = GraphState(fb, LIN, 2 + 0.1 * np.sin(2 * np.pi * fb.coords[:, 0]))
    rep = check_spacelike(st_, 0.5)
    # continuum value max 0.2 pi cos / (2 + 0.1 sin) = 0.1 pi at x = 0
    assert rep.max_ratio == pytest.approx(0.1 * np.pi, rel=2e-3)
    assert rep.lambda_elliptic


def test_not_spacelike_raises():
    fb = disk()
    st_ = GraphState(fb, FLAT, 1.2 * fb.coords[:, 0])
    assert check_spacelike(st_).verdict == "failed"
    with pytest.raises(CausalityError, match="node"):
        normal_field(st_)


def test_normal_of_slice():
    nf = normal_field(GraphState(torus(16), LIN, np.full(256, 3.0)))
    assert np.all(nf.Nt == -1.0) and np.all(nf.NF == 0.0) and np.all(nf.coshphi == 1.0)


def test_normal_coshphi_ramp():
    fb = disk()
    nf = normal_field(GraphState(fb, FLAT, 0.6 * fb.coords[:, 0]))
    spur = np.isnan(nf.coshphi)  # rim nodes with no neighbour along one axis
    assert spur.sum() <= 4 and np.all(fb.boundary[spur])
    assert np.allclose(nf.coshphi[~spur], 1.25)


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 1000), lam=st.floats(0.1, 0.9))
def test_normal_unit_and_angle_bound(seed, lam):
    s = random_state(24, LIN, lam, seed)
    nf = normal_field(s)
    f = s.fvals[0]
    assert np.max(np.abs(nf.ambient_norm2(f) + 1)) < 1e-10
    # g(N, d_t) = -Nt = cosh(phi) > 0
    assert np.all(-nf.Nt == nf.coshphi) and np.all(nf.coshphi >= 1)
    assert np.max(nf.coshphi) <= 1 / np.sqrt(1 - lam**2) + 1e-12


# -- shape operator and mean curvature ------------------------------------------------------


def test_shape_operator_slice():
    s = GraphState(torus(16), LIN, np.full(256, 2.0))
    so = shape_operator(s)
    assert np.max(np.abs(so.A - 0.5 * np.eye(2))) < 1e-12
    assert np.allclose(so.H_field, -0.5)
    so = shape_operator(GraphState(torus(16), FLAT, np.full(256, 2.0)))
    assert np.all(so.A == 0) and np.all(so.traceA2 == 0)


def test_shape_operator_sine_example():
    fb = torus(128)
    s = GraphState(fb, FLAT, 0.05 * np.sin(2 * np.pi * fb.coords[:, 0]))
    k = fb.nearest_node([0.25, 0.5])
    exact = 0.5 * 0.05 * 4 * np.pi**2  # -(1/2) u''/(1-u'^2)^{3/2} at x = 1/4
    assert exact == pytest.approx(0.9870, abs=1e-4)
    assert shape_operator(s).H_field[k] == pytest.approx(exact, abs=1e-3)
    assert mean_curvature(s)[k] == pytest.approx(exact, abs=1e-3)
    fb2 = torus(256)
    s2 = GraphState(fb2, FLAT, 0.05 * np.sin(2 * np.pi * fb2.coords[:, 0]))
    k2 = fb2.nearest_node([0.25, 0.5])
    e1 = abs(shape_operator(s).H_field[k] - exact)
    e2 = abs(shape_operator(s2).H_field[k2] - exact)
    assert e1 / e2 > 3.5  # second order


def test_shape_operator_guard():
    fb = disk()
    s = GraphState(fb, FLAT, 0.99 * fb.coords[:, 0])
    with pytest.raises(ConditioningError):
        shape_operator(s)


def test_shape_operator_needs_structured_fiber():
    fb = build_fiber(kind="sphere_torus", radius=1.0, subdivisions=1, ring_length=1.0, ring_nodes=8)
    with pytest.raises(ValueError):
        shape_operator(GraphState(fb, FLAT, np.zeros(fb.n_nodes)))


@pytest.mark.parametrize("warp,t0", [(FLAT, 0.7), (LIN, 2.0), (WarpSpec("exponential", {"c": 1.0, "a": -1.0}), 0.3)])
def test_mean_curvature_slice_exact(warp, t0):
    s = GraphState(torus(16), warp, np.full(256, t0))
    f, fp, _ = warp.derivatives(t0)
    assert np.all(mean_curvature(s) == -fp / f)


def test_mean_curvature_dirichlet_boundary_nan():
    fb = disk()
    H = mean_curvature(GraphState(fb, LIN, np.full(fb.n_nodes, 2.0)))
    assert np.all(np.isnan(H[fb.boundary])) and np.allclose(H[~fb.boundary], -0.5)


def test_two_routes_to_H_agree_under_refinement():
    errs = []
    for m in (32, 64, 128):
        fb = torus(m)
        x, y = fb.coords.T
        u = 2 + 0.05 * np.sin(2 * np.pi * x) * np.cos(2 * np.pi * y) + 0.03 * np.cos(4 * np.pi * y)
        s = GraphState(fb, LIN, u)
        errs.append(np.max(np.abs(mean_curvature(s) - shape_operator(s).H_field)))
    assert errs[0] / errs[1] > 1.8 and errs[1] / errs[2] > 1.8


# -- closed forms ------------------------------------------------------------------------------


def test_closed_forms_slice_values():
    s = GraphState(torus(16), LIN, np.full(256, 2.0))
    gf = closed_forms(s, -0.5)
    assert np.allclose(gf.laptau_rhs, 0.0, atol=1e-14)
    assert np.allclose(gf.deltacosh_rhs, 0.0, atol=1e-14)
    assert np.allclose(gf.lapftau_rhs, 0.0, atol=1e-14)  # f = t so lap f(tau) = lap tau
    assert np.all(gf.coshphi == 1) and np.all(gf.sinh2phi == 0)


def test_closed_forms_flat_product():
    s = random_state(32, FLAT, 0.3, 4, t0=0.0)
    gf = closed_forms(s, 0.0)
    assert np.all(gf.ric_KT_N == 0)
    assert np.allclose(gf.lapfcosh_rhs, gf.coshphi * gf.traceA2, atol=1e-13)


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 1000), lam=st.floats(0.05, 0.8), fam=st.sampled_from(["flat", "lin"]))
def test_geometry_field_invariants(seed, lam, fam):
    warp = FLAT if fam == "flat" else LIN
    s = random_state(24, warp, lam, seed)
    gf = closed_forms(s)
    c, sh = gf.coshphi, gf.sinh2phi
    f = s.fvals[0]
    assert np.allclose(sh, c**2 - 1, atol=1e-12)
    assert np.allclose(sh, f**2 * np.sum(gf.NF**2, 1), atol=1e-12)
    # |grad tau|^2 in g_u
    so = shape_operator(s)
    gt = np.einsum("ni,nij,nj->n", gf.grad_tau, so.g, gf.grad_tau)
    assert np.allclose(gt, sh, atol=1e-12)
    assert np.all(gf.traceA2 >= -1e-8)
    assert np.allclose(gf.H_field, -np.trace(gf.A, axis1=1, axis2=2) / s.n)
    assert np.all(gf.speed < 1) and np.allclose(gf.speed, np.tanh(np.arccosh(c)))
    assert np.all(gf.hess_tau_norm2 >= -1e-10)
    assert np.all(gf.rf_value >= -1e-12)  # TCC holds for both warps
    assert np.max(c) <= 1 / np.sqrt(1 - lam**2) + 1e-12


def test_slice_iff_vanishing_angle():
    s = GraphState(torus(16), LIN, np.full(256, 2.0))
    assert np.all(closed_forms(s).coshphi == 1.0)
    s2 = random_state(16, LIN, 1e-3, 0)
    assert np.max(closed_forms(s2).coshphi) > 1.0


def test_gradcosh_identity_first_order():
    from warplab.identities import torus_states

    errs = []
    for s in torus_states(LIN, 0.3, [32, 64], seed=7):
        gf = closed_forms(s)
        AK = np.einsum("nab,nb->na", gf.A, gf.K_T)
        errs.append(np.max(np.linalg.norm(graph_gradient(s, s.fvals[0] * gf.coshphi) + AK, axis=1)))
    assert errs[0] / errs[1] > 1.8


def test_export_fields(tmp_path):
    s = random_state(16, LIN, 0.3, 1)
    gf = closed_forms(s)
    p = export_fields_csv(s, gf, tmp_path / "g.csv")
    header = p.read_text().splitlines()[0].split(",")
    for name in ("u", "coshphi", "laptau_rhs", "deltacosh_rhs", "ricciM_lower_gap", "NF_0", "grad_tau_1"):
        assert name in header


def test_state_copies_input():
    fb = torus(8)
    u = np.full(64, 2.0)
    GraphState(fb, LIN, u)
    u[0] = 3.0  # caller's array stays writable


def test_state_domain_checked():
    with pytest.raises(ValueError):
        GraphState(torus(8), LIN, np.full(64, -1.0))


# -- tocho gap ---------------------------------------------------------------------------------


def test_tocho_slice_gap_zero():
    s = GraphState(torus(16), LIN, np.full(256, 2.0))
    rep = tocho_gap(s, -0.5)
    assert np.allclose(rep.gap, 0.0, atol=1e-14)


def test_tocho_flat_maximal_nonnegative():
    s = random_state(32, FLAT, 0.4, 3, t0=0.0)
    rep = tocho_gap(s, 0.0)
    gf = closed_forms(s, 0.0)
    assert np.allclose(rep.rhs, 0.0)
    assert np.allclose(rep.gap, gf.coshphi**2 * gf.traceA2, atol=1e-12)
    assert rep.min_gap >= -1e-10


def test_tocho_requires_tcc():
    w = WarpSpec("exponential", {"c": 1.0, "a": 1.0})
    s = GraphState(torus(16), w, np.full(256, 0.5))
    with pytest.raises(HypothesisError):
        tocho_gap(s, -1.0)


# -- ambient curvature and the Ricci certificate -------------------------------------------------


def test_ambient_curvature_matches_symbolic():
    sp = pytest.importorskip("sympy")
    t, x, y = sp.symbols("t x y")
    F = sp.Function("f")(t)
    X = [t, x, y]
    g = sp.diag(-1, F**2, F**2)
    gi = g.inv()
    Gam = [[[sum(gi[a, d] * (sp.diff(g[d, b], X[c]) + sp.diff(g[d, c], X[b]) - sp.diff(g[b, c], X[d])) for d in range(3)) / 2
             for c in range(3)] for b in range(3)] for a in range(3)]

    def riem(a, b, c, d):  # R^a_{bcd}, R(d_c, d_d) d_b = R^a_{bcd} d_a
        r = sp.diff(Gam[a][d][b], X[c]) - sp.diff(Gam[a][c][b], X[d])
        r += sum(Gam[a][c][e] * Gam[e][d][b] - Gam[a][d][e] * Gam[e][c][b] for e in range(3))
        return r

    R = [[[[sp.simplify(riem(a, b, c, d)) for d in range(3)] for c in range(3)] for b in range(3)] for a in range(3)]
    rng = np.random.default_rng(0)
    t0, f0, fp0, fpp0 = 0.7, 1.3, -0.4, 0.9
    subs = {sp.Derivative(F, (t, 2)): fpp0, sp.Derivative(F, t): fp0}
    Rn = np.zeros((3, 3, 3, 3))
    for a in range(3):
        for b in range(3):
            for c in range(3):
                for d in range(3):
                    Rn[a, b, c, d] = float(R[a][b][c][d].subs(subs).subs(F, f0))
    gn = np.diag([-1, f0**2, f0**2])
    for _ in range(5):
        U, V, Y = rng.normal(size=(3, 3))
        # <R(U, Y) Y, V> = g_ae R^a_{bcd} Y^b U^c Y^d V^e
        ref = np.einsum("ae,abcd,b,c,d,e->", gn, Rn, Y, U, Y, V)
        got = ambient_curvature_form(np.array([f0]), np.array([fpp0]), np.array([fp0]), U[None], V[None], Y[None])[0]
        assert got == pytest.approx(ref, rel=1e-10, abs=1e-12)


def test_ricci_certificate_slices():
    s = GraphState(torus(16), FLAT, np.full(256, 1.0))
    cert = ricci_lower_bound_check(s)
    assert cert.passed and np.allclose(cert.ric, 0.0)
    s = GraphState(torus(16), LIN, np.full(256, 2.0))
    cert = ricci_lower_bound_check(s)
    assert cert.passed
    assert np.allclose(cert.ric, 0.0, atol=1e-12)
    assert np.allclose(cert.bound, -0.25)


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_ricci_certificate_random(seed):
    cert = ricci_lower_bound_check(random_state(32, LIN, 0.3, seed), seed=seed)
    assert cert.passed and not cert.skipped


def test_ricci_certificate_skips_without_hypotheses():
    ts = np.linspace(0.0, 3.0, 40)
    w = WarpSpec("spline", {"t": list(ts), "f": list(np.exp(ts**2))}, (0.0, 3.0))
    cert = ricci_lower_bound_check(GraphState(torus(16), w, np.full(256, 1.0)))
    assert cert.skipped and "log f" in cert.note


# -- completeness --------------------------------------------------------------------------------


def test_completeness_slices(rng):
    fb = torus(16)
    p = random_path(fb, rng, 20)
    r = completeness_ratio(GraphState(fb, FLAT, np.zeros(256)), p)
    assert r.L_u == pytest.approx(r.L_F) and r.B == 1.0
    r = completeness_ratio(GraphState(fb, LIN, np.full(256, 3.0)), p)
    assert r.L_u == pytest.approx(3.0 * r.L_F) and r.bound == pytest.approx(r.L_u) and r.holds


def test_completeness_random_paths(rng):
    s = random_state(32, LIN, 0.5, 9)
    for _ in range(100):
        assert completeness_ratio(s, random_path(s.fiber, rng, 30)).holds


def test_completeness_empty_path():
    with pytest.raises(ValueError):
        completeness_ratio(GraphState(torus(8), FLAT, np.zeros(64)), [3])
