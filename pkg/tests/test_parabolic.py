import math
import time

import numpy as np
import pytest

from warplab.errors import CapacityError, HypothesisError
from warplab.fiber import build_fiber
from warplab.fields import random_state_field
from warplab.graphgeom import GraphState, normal_field
from warplab.parabolic import capacity, fiber_mesh, graph_mesh, lemma1_bound_check, parabolicity_trend
from warplab.solver import SolveConfig, solve_cmc
from warplab.warp import WarpSpec

FLAT = WarpSpec("constant", {"c": 1.0})


def planar(R=3.0, h=0.02):
    fb = build_fiber(kind="disk", radius=R, h=h)
    return fb, fb.nearest_node([0.0, 0.0])


def test_planar_annulus_oracle():
    fb, c = planar()
    rep = capacity(fb, c, 1.0, math.e)
    assert rep.cap == pytest.approx(2 * math.pi, rel=0.05)
    assert rep.mu == pytest.approx(1 / rep.cap)
    # conjugate gradients run to relative residual 1e-10 on the free block
    free = (rep.potential > 0) & (rep.potential < 1)
    K = fiber_mesh(fb).stiffness()
    Kp = K @ rep.potential
    rhs = K[free][:, rep.potential == 1] @ np.ones(rep.n_inner)
    assert np.linalg.norm(Kp[free]) <= 1e-10 * np.linalg.norm(rhs) * 1.01


def test_potential_maximum_principle():
    fb, c = planar(h=0.05)
    rep = capacity(fb, c, 0.5, 2.0)
    assert rep.potential_range[0] >= -1e-12 and rep.potential_range[1] <= 1 + 1e-12
    free = (rep.potential > 0) & (rep.potential < 1)
    assert free.sum() > 0


def test_three_d_capacity_converges_toward_oracle():
    errs = []
    for h in (0.5, 0.25):
        fb = build_fiber(kind="disk", radius=4.2, h=h, dim=3)
        rep = capacity(fb, fb.nearest_node([0, 0, 0]), 1.0, 4.0)
        exact = 4 * math.pi / (1 - 1 / 4)
        errs.append(abs(rep.cap - exact) / exact)
    assert errs[1] < errs[0]


def test_degenerate_annulus():
    fb, c = planar(h=0.1)
    with pytest.raises(CapacityError):
        capacity(fb, c, 1.0, 1.0)
    with pytest.raises(CapacityError):
        capacity(fb, c, 2.0, 1.0)
    with pytest.raises(CapacityError):
        capacity(fb, c, 0.5, 10.0)  # no outer plate inside the mesh


def test_capacity_monotone_in_R():
    fb, c = planar(R=6.0, h=0.1)
    caps = [capacity(fb, c, 1.0, R).cap for R in (1.5, 2.0, 3.0, 4.0, 5.5)]
    assert all(b <= a for a, b in zip(caps, caps[1:]))


def test_trend_verdicts():
    fb2 = build_fiber(kind="disk", radius=32.5, h=0.25)
    tr = parabolicity_trend(fb2, fb2.nearest_node([0, 0]), 1.0, [4, 8, 16, 32])
    assert tr.verdict == "parabolic-trend" and tr.monotone
    fb3 = build_fiber(kind="disk", radius=33.0, h=1.0, dim=3)
    tr3 = parabolicity_trend(fb3, fb3.nearest_node([0, 0, 0]), 1.0, [4, 8, 16, 32])
    assert tr3.verdict == "nonparabolic-trend" and tr3.monotone
    assert tr3.c_inf == pytest.approx(4 * math.pi, rel=0.3)


def test_trend_degenerate_cases(tmp_path):
    fb, c = planar(R=6.0, h=0.1)
    assert parabolicity_trend(fb, c, 1.0, [2.0, 4.0]).verdict == "no-verdict"
    tr = parabolicity_trend(fb, c, 1.0, [2.0, 4.0, 5.9])
    assert tr.verdict != "invalid-truncated"
    tr = parabolicity_trend(fb, fb.nearest_node([3.0, 0.0]), 1.0, [1.5, 2.0, 3.5])
    assert tr.verdict == "invalid-truncated"
    with pytest.raises(ValueError):
        parabolicity_trend(fb, c, 1.0, [4.0, 2.0, 3.0])
    p = tr.write_csv(tmp_path / "t.csv")
    assert p.read_text().splitlines()[0] == "R,cap,residual,truncated"


def test_graph_surface_of_slice_is_scaled_fiber():
    fb = build_fiber(kind="torus", lengths=[8, 8], shape=[32, 32])
    w = WarpSpec("linear", {"a": 1.0, "b": 0.0}, (0.0, math.inf))
    g = graph_mesh(GraphState(fb, w, np.full(fb.n_nodes, 2.0)))
    # g_u = 4 g_F: conductances of a 2-D surface are scale invariant, radii double
    a = capacity(g, 0, 2.0, 6.0).cap
    b = capacity(fiber_mesh(fb), 0, 1.0, 3.0).cap
    assert a == pytest.approx(b, rel=0.05)


def test_transfer_experiment_flat_graph():
    fb = build_fiber(kind="torus", lengths=[72, 72], shape=[144, 144])
    u = random_state_field(fb, FLAT, 0.0, 0.5, np.random.default_rng(0), modes=2)
    g = graph_mesh(GraphState(fb, FLAT, u))
    c = fb.nearest_node([36.0, 36.0])
    Rs = [4, 8, 16, 32]
    tf = parabolicity_trend(fiber_mesh(fb), c, 1.0, Rs)
    tg = parabolicity_trend(g, c, 1.0, Rs)
    assert np.all(np.abs(tg.caps - tf.caps) <= 0.2 * tf.caps)
    assert tg.verdict == tf.verdict == "parabolic-trend"


def test_graph_mesh_rejects_non_2d():
    fb = build_fiber(kind="disk", radius=2.0, h=0.25, dim=3)
    with pytest.raises(ValueError):
        graph_mesh(GraphState(fb, FLAT, np.zeros(fb.n_nodes)))


def test_lemma1_constant():
    fb, c = planar(R=4.0, h=0.05)
    rep = lemma1_bound_check(fb, np.ones(fb.n_nodes), c, 1.0, 3.0)
    assert rep.lhs == 0.0 and rep.holds and rep.rhs == pytest.approx(4 * rep.cap)


def test_lemma1_equilibrium_potential():
    fb, c = planar(R=7.0, h=0.05)
    v = capacity(fb, c, 0.5, 6.0).potential  # harmonic away from the origin
    k = fb.nearest_node([3.0, 0.0])
    rep = lemma1_bound_check(fb, v, k, 0.5, 2.0)
    assert rep.holds and rep.slack >= 4


def test_lemma1_hypothesis_checked():
    fb, c = planar(R=4.0, h=0.05)
    v = capacity(fb, c, 0.5, 3.0).potential  # superharmonic kink on the inner plate
    with pytest.raises(HypothesisError, match="node"):
        lemma1_bound_check(fb, v, c, 0.5, 2.0)


def test_lemma1_coshphi_of_maximal_graph():
    fb = build_fiber(kind="disk", radius=1.0, h=1 / 64)
    u0 = 0.3 * fb.coords[:, 0] * fb.coords[:, 1] + 0.1 * fb.coords[:, 0]
    res = solve_cmc(fb, FLAT, SolveConfig(H=0.0), u0)
    assert res.status == "converged"
    s = GraphState(fb, FLAT, res.u_final)
    g = graph_mesh(s)
    v = normal_field(s).coshphi
    v = np.where(np.isnan(v), 1.0, v)
    c = fb.nearest_node([0, 0])
    rep = lemma1_bound_check(g, v, c, 0.2, 0.6)
    assert rep.holds
