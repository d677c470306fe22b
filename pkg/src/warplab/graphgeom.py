"""Extrinsic geometry of a spacelike graph {(u(x), x)} in I x_f F.

Conventions: the ambient metric is -dt^2 + f(t)^2 g_F, the unit normal is
future pointing in the sense g(N, d_t) = cosh(phi) > 0, the shape operator
is A X = -nabla_X N and H = -trace(A)/n.  With W = sqrt(f^2 - |Du|^2):

    N = -(f^2 d_t + Du) / (f W),   cosh(phi) = f / W,   sinh^2 = |Du|^2 / W^2.

The coordinate tangent frame is E_i = d_i + u_i d_t, in which the induced
metric is g_ij = f^2 delta_ij - u_i u_j on a flat fiber.

Two independent discretizations of H are provided.  :func:`mean_curvature`
uses the conservative edge form of the divergence operator from
:mod:`warplab.fiber`; :func:`shape_operator` differentiates the nodal normal
with central differences and adds the connection terms of the warped
product.  They agree to O(h^2) on smooth data.

Shape operators, closed forms and the graph Laplacian/Hessian need node
coordinates with analytic Christoffel symbols, so they are restricted to the
structured (flat) fibers.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, fields
from functools import cached_property
from pathlib import Path

import numpy as np

from .errors import CausalityError, ConditioningError, HypothesisError
from .fiber import DiscreteFiber, gradient, node_norm2
from .warp import WarpSpec, check_tcc

# max |Du|/f(u) above which differentiating the normal is refused
CONDITIONING_GUARD = 0.98


class GraphState:
    """Height field ``u`` over ``fiber`` in the warped product built on ``warp``."""

    def __init__(self, fiber: DiscreteFiber, warp: WarpSpec, u, lambda_margin: float = 0.9):
        u = np.array(u, dtype=float)  # private copy, frozen below
        if u.shape != (fiber.n_nodes,):
            raise ValueError(f"u has shape {u.shape}, expected ({fiber.n_nodes},)")
        if not 0.0 < lambda_margin < 1.0:
            raise ValueError(f"lambda must satisfy 0 < lambda < 1 (got {lambda_margin})")
        warp.check_domain(u, "u")
        self.fiber = fiber
        self.warp = warp
        self.u = u
        self.u.setflags(write=False)
        self.lambda_margin = float(lambda_margin)

    @property
    def n(self) -> int:
        return self.fiber.dim

    @cached_property
    def fvals(self):
        """(f, f', f'', (log f)'') evaluated at u."""
        f, fp, fpp = self.warp.derivatives(self.u)
        return f, fp, fpp, (f * fpp - fp * fp) / (f * f)

    @cached_property
    def du2(self) -> np.ndarray:
        """|Du|^2 per node as the edge energy density (used by the PDE)."""
        return node_norm2(self.fiber, gradient(self.fiber, self.u))

    @cached_property
    def Du(self) -> np.ndarray:
        """Nodal gradient vectors (central differences, one-sided on boundaries)."""
        return self.fiber.node_gradient(self.u)

    @cached_property
    def ratio(self) -> np.ndarray:
        return np.sqrt(self.du2) / self.fvals[0]

    def with_u(self, u) -> "GraphState":
        return GraphState(self.fiber, self.warp, u, self.lambda_margin)

    def u_range(self) -> tuple:
        return float(self.u.min()), float(self.u.max())


# ---------------------------------------------------------------------------------------
# spacelike test and normal


@dataclass
class SpacelikeReport:
    ratio: np.ndarray
    max_ratio: float
    lam: float
    spacelike: bool
    lambda_elliptic: bool
    failed_nodes: np.ndarray
    worst_node: int

    @property
    def verdict(self) -> str:
        if self.lambda_elliptic:
            return "lambda-elliptic"
        return "spacelike" if self.spacelike else "failed"

    def summary(self) -> dict:
        return {
            "max_ratio": self.max_ratio,
            "lambda": self.lam,
            "verdict": self.verdict,
            "n_failed": int(self.failed_nodes.size),
            "worst_node": self.worst_node,
        }


def check_spacelike(state: GraphState, lam: float | None = None) -> SpacelikeReport:
    """Per-node ratio |Du|/f(u) and the spacelike / lambda-elliptic verdicts.

    |Du|^2 is the edge energy density; on structured grids it bounds the
    squared central-difference gradient from above, so lambda-ellipticity
    here implies the coshphi bound for the nodal normal.
    """
    lam = state.lambda_margin if lam is None else float(lam)
    r = state.ratio
    worst = int(np.argmax(r))
    mx = float(r[worst])
    return SpacelikeReport(
        ratio=r,
        max_ratio=mx,
        lam=lam,
        spacelike=mx < 1.0,
        lambda_elliptic=mx <= lam,
        failed_nodes=np.flatnonzero(r >= 1.0),
        worst_node=worst,
    )


def _require_spacelike(state: GraphState, guard: float = 1.0):
    rep = check_spacelike(state)
    if rep.max_ratio >= 1.0:
        raise CausalityError(
            f"graph is not spacelike: |Du|/f(u) = {rep.max_ratio:.6g} at node {rep.worst_node}"
        )
    if rep.max_ratio > guard:
        raise ConditioningError(
            f"|Du|/f(u) = {rep.max_ratio:.6g} at node {rep.worst_node} exceeds the guard {guard}"
        )
    return rep


@dataclass
class NormalField:
    """Ambient components of the unit normal: N = Nt d_t + NF^a d_a."""

    Nt: np.ndarray
    NF: np.ndarray
    coshphi: np.ndarray
    W: np.ndarray

    def ambient_norm2(self, f) -> np.ndarray:
        return -self.Nt**2 + f**2 * np.sum(self.NF**2, axis=1)


def normal_field(state: GraphState) -> NormalField:
    _require_spacelike(state)
    f = state.fvals[0]
    Du = state.Du
    g2 = np.sum(Du * Du, axis=1)
    W = np.sqrt(f * f - g2)
    Nt = -f / W
    NF = -Du / (f * W)[:, None]
    return NormalField(Nt=Nt, NF=NF, coshphi=f / W, W=W)


# ---------------------------------------------------------------------------------------
# mean curvature, divergence form


def mean_curvature(state: GraphState) -> np.ndarray:
    """H(u) = -div(Du/(n f W)) - f'(n + |Du|^2/f^2)/(n W) with the edge operators.

    Dirichlet-boundary nodes get NaN (their divergence stencil is incomplete).
    """
    _require_spacelike(state)
    fb = state.fiber
    n = state.n
    f, fp = state.fvals[0], state.fvals[1]
    q = state.du2
    W = np.sqrt(f * f - q)
    a = 1.0 / (n * f * W)
    i, j = fb.edges[:, 0], fb.edges[:, 1]
    abar = 0.5 * (a[i] + a[j])
    flux = fb.cond * abar * (state.u[j] - state.u[i])
    div_term = (fb.incidence.T @ flux) / fb.measure
    H = div_term - (fp / W) * (1.0 + q / (n * f * f))
    if not fb.boundary_free:
        H = H.copy()
        H[fb.boundary] = np.nan
    return H


# ---------------------------------------------------------------------------------------
# shape operator


@dataclass
class ShapeOperator:
    A: np.ndarray  # (N, n, n), A[:, a, b] = component a of A(E_b)
    g: np.ndarray  # (N, n, n) induced metric in the frame E_i
    traceA2: np.ndarray
    H_field: np.ndarray
    symmetry_defect: np.ndarray


def _require_structured(state: GraphState, what: str):
    if not state.fiber.structured:
        raise ValueError(f"{what} needs a structured flat fiber (torus or disk grid)")


def induced_metric(state: GraphState) -> np.ndarray:
    """g_ij = f(u)^2 delta_ij - u_i u_j in the coordinate frame (flat fibers)."""
    _require_structured(state, "induced_metric")
    f = state.fvals[0]
    Du = state.Du
    n = state.n
    return (f * f)[:, None, None] * np.eye(n)[None] - Du[:, :, None] * Du[:, None, :]


def shape_operator(state: GraphState, guard: float = CONDITIONING_GUARD) -> ShapeOperator:
    """Shape operator A = -nabla N by central differences of N plus connection terms.

    A^a_b = -[d_b N^a + (f'/f)(u_b N^a + delta_ab N^t)], from
    nabla_{d_a} d_t = (f'/f) d_a and nabla_{d_a} d_b = -f f' delta_ab d_t.
    """
    _require_structured(state, "shape_operator")
    _require_spacelike(state, guard)
    fb = state.fiber
    n = state.n
    f, fp = state.fvals[0], state.fvals[1]
    nf = normal_field(state)
    Du = state.Du
    dN = np.stack([fb.central_diff(nf.NF, b, one_sided=True) for b in range(n)], axis=2)  # [:, a, b]
    k = (fp / f)[:, None, None]
    A = -(dN + k * (nf.NF[:, :, None] * Du[:, None, :] + np.eye(n)[None] * nf.Nt[:, None, None]))
    g = induced_metric(state)
    gA = np.einsum("nac,ncb->nab", g, A)
    defect = np.linalg.norm(gA - np.swapaxes(gA, 1, 2), axis=(1, 2)) / np.maximum(
        np.linalg.norm(gA, axis=(1, 2)), 1e-300
    )
    AA = np.einsum("nab,nbc->nac", A, A)
    trA = np.trace(A, axis1=1, axis2=2)
    return ShapeOperator(
        A=A,
        g=g,
        traceA2=np.trace(AA, axis1=1, axis2=2),
        H_field=-trA / n,
        symmetry_defect=defect,
    )


# ---------------------------------------------------------------------------------------
# closed forms


@dataclass
class GeometryFields:
    coshphi: np.ndarray
    sinh2phi: np.ndarray
    Nt: np.ndarray
    NF: np.ndarray
    grad_tau: np.ndarray  # frame components of nabla tau = -d_t^T
    K_T: np.ndarray  # frame components of K^T = f d_t^T
    A: np.ndarray
    H_field: np.ndarray
    traceA2: np.ndarray
    hess_tau_norm2: np.ndarray
    speed: np.ndarray
    laptau_rhs: np.ndarray
    lapftau_rhs: np.ndarray
    lapfcosh_rhs: np.ndarray
    deltacosh_rhs: np.ndarray
    ric_KT_N: np.ndarray
    rf_value: np.ndarray
    ricciM_lower_gap: np.ndarray
    g_AT_T: np.ndarray  # g(A d_t^T, d_t^T)
    codazzi_term: np.ndarray  # n g(grad H, K^T); zero for constant H
    symmetry_defect: np.ndarray
    H_used: np.ndarray
    cmc: bool

    SCALARS = (
        "coshphi", "sinh2phi", "Nt", "H_field", "traceA2", "hess_tau_norm2", "speed",
        "laptau_rhs", "lapftau_rhs", "lapfcosh_rhs", "deltacosh_rhs", "ric_KT_N",
        "rf_value", "ricciM_lower_gap", "g_AT_T", "codazzi_term", "symmetry_defect",
    )

    def columns(self) -> dict:
        cols = {k: getattr(self, k) for k in self.SCALARS}
        for a in range(self.NF.shape[1]):
            cols[f"NF_{a}"] = self.NF[:, a]
            cols[f"grad_tau_{a}"] = self.grad_tau[:, a]
        return cols


def closed_forms(state: GraphState, H_constant: float | None = None, shape: ShapeOperator | None = None) -> GeometryFields:
    """Evaluate every closed-form Laplacian/Hessian expression at the nodes.

    With ``H_constant`` the constant value is used in every formula.  Without
    it the pointwise shape-operator H is used, and the Codazzi term
    n g(grad H, K^T), which vanishes for CMC graphs, is added to the
    Laplacians of f cosh(phi) and cosh(phi) so the identities stay exact for
    variable H.
    """
    _require_structured(state, "closed_forms")
    fb = state.fiber
    n = state.n
    f, fp, fpp, L = state.fvals
    so = shape if shape is not None else shape_operator(state)
    nf = normal_field(state)
    Du = state.Du
    W = nf.W
    c = nf.coshphi
    s = np.sum(Du * Du, axis=1) / W**2
    a = fp / f
    g = so.g
    A = so.A
    P = -Du / (W**2)[:, None]  # d_t^T in the frame
    AP = np.einsum("nab,nb->na", A, P)
    G = np.einsum("na,nab,nb->n", AP, g, P)
    T = so.traceA2
    ricF = fb.ricci(nf.NF)
    cmc = H_constant is not None
    if cmc:
        H = np.full(fb.n_nodes, float(H_constant))
        codazzi = np.zeros(fb.n_nodes)
    else:
        H = so.H_field
        dH = np.stack([fb.central_diff(H, k, one_sided=True) for k in range(n)], axis=1)
        codazzi = n * f * np.sum(P * dH, axis=1)
    laptau = -a * (n + s) - n * H * c
    lapftau = -n * fp**2 / f + s * f * L - n * H * fp * c
    ric_KT_N = f * c * ricF - (n - 1) * f * c * s * L
    lapfcosh = ric_KT_N + fp * n * H + f * c * T + codazzi
    deltacosh = (
        n * H * a * (1 + c * c)
        + c * (ricF - n * s * L)
        + a * a * c * (n + 2 * s)
        + c * T
        - 2 * a * G
        + codazzi / f
    )
    hess = a * a * ((n - 1) + c**4) + c * c * T + 2 * n * H * a * c - 2 * a * c * G
    rf = ricF - (n - 1) * L * s
    # |AY + (nH/2)Y|^2 >= 0 minimum over unit Y: Gauss-equation slack for H_field
    gap = _shape_slack(A, g, so.H_field, n)
    return GeometryFields(
        coshphi=c,
        sinh2phi=s,
        Nt=nf.Nt,
        NF=nf.NF,
        grad_tau=-P,
        K_T=f[:, None] * P,
        A=A,
        H_field=so.H_field,
        traceA2=T,
        hess_tau_norm2=hess,
        speed=np.sqrt(s) / c,
        laptau_rhs=laptau,
        lapftau_rhs=lapftau,
        lapfcosh_rhs=lapfcosh,
        deltacosh_rhs=deltacosh,
        ric_KT_N=ric_KT_N,
        rf_value=rf,
        ricciM_lower_gap=gap,
        g_AT_T=G,
        codazzi_term=codazzi,
        symmetry_defect=so.symmetry_defect,
        H_used=H,
        cmc=cmc,
    )


def _shape_slack(A, g, H, n) -> np.ndarray:
    """min over g-unit Y of |AY|^2 - trA g(AY,Y) + (n^2/4) H^2."""
    gs = 0.5 * (np.einsum("nac,ncb->nab", g, A) + np.einsum("nac,ncb->nab", g, A).transpose(0, 2, 1))
    AgA = np.einsum("nca,ncd,ndb->nab", A, g, A)
    trA = np.trace(A, axis1=1, axis2=2)
    Q = AgA - trA[:, None, None] * gs + (n * n / 4.0) * (H * H)[:, None, None] * g
    Q = 0.5 * (Q + Q.transpose(0, 2, 1))
    # generalized eigenvalues of (Q, g)
    Lc = np.linalg.cholesky(g)
    Li = np.linalg.inv(Lc)
    M = np.einsum("nab,nbc,ndc->nad", Li, Q, Li)
    return np.linalg.eigvalsh(M)[:, 0]


def export_fields_csv(state: GraphState, gf: GeometryFields, path) -> Path:
    from .fiber import export_field_csv

    cols = {"u": state.u}
    cols.update(gf.columns())
    return export_field_csv(state.fiber, path, cols)


# ---------------------------------------------------------------------------------------
# intrinsic operators of g_u (independent of the closed forms)


def _christoffel(state: GraphState, g: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    fb = state.fiber
    n = state.n
    dg = np.stack([fb.central_diff(g.reshape(g.shape[0], -1), k, one_sided=True).reshape(g.shape) for k in range(n)], axis=1)
    # dg[:, k, i, j] = d_k g_ij;  term[:, i, j, m] = d_i g_jm + d_j g_im - d_m g_ij
    term = dg + np.einsum("njim->nijm", dg) - np.einsum("nmij->nijm", dg)
    return 0.5 * np.einsum("nlm,nijm->nlij", ginv, term)


def laplace_graph(state: GraphState, phi) -> np.ndarray:
    """Laplace-Beltrami of the induced metric g_u applied to a node field.

    Flux form (1/sqrt|g|) d_i(sqrt|g| g^ij d_j phi) with central differences
    in both steps; nodes whose stencil leaves the grid get NaN.
    """
    _require_structured(state, "laplace_graph")
    fb = state.fiber
    n = state.n
    phi = np.asarray(phi, dtype=float)
    g = induced_metric(state)
    ginv = np.linalg.inv(g)
    with np.errstate(invalid="ignore"):  # spur nodes without a full stencil carry NaN
        sq = np.sqrt(np.linalg.det(g))
    dphi = np.stack([fb.central_diff(phi, k) for k in range(n)], axis=1)
    V = sq[:, None] * np.einsum("nij,nj->ni", ginv, dphi)
    div = sum(fb.central_diff(V[:, i], i) for i in range(n))
    return div / sq


def hessian_graph(state: GraphState, phi) -> np.ndarray:
    """|Hess_g phi|^2 = g^ik g^jl H_ij H_kl with Christoffels from differenced g."""
    _require_structured(state, "hessian_graph")
    fb = state.fiber
    n = state.n
    phi = np.asarray(phi, dtype=float)
    g = induced_metric(state)
    ginv = np.linalg.inv(g)
    dphi = np.stack([fb.central_diff(phi, k) for k in range(n)], axis=1)
    d2 = np.stack([fb.central_diff(dphi, k) for k in range(n)], axis=2)  # [:, i, k] = d_k d_i
    d2 = 0.5 * (d2 + d2.transpose(0, 2, 1))
    Gam = _christoffel(state, g, ginv)
    Hs = d2 - np.einsum("nlij,nl->nij", Gam, dphi)
    return np.einsum("nik,njl,nij,nkl->n", ginv, ginv, Hs, Hs)


def graph_gradient(state: GraphState, phi) -> np.ndarray:
    """Frame components of grad_g phi = g^ij d_j phi."""
    _require_structured(state, "graph_gradient")
    fb = state.fiber
    ginv = np.linalg.inv(induced_metric(state))
    dphi = np.stack([fb.central_diff(np.asarray(phi, dtype=float), k) for k in range(state.n)], axis=1)
    return np.einsum("nij,nj->ni", ginv, dphi)


# ---------------------------------------------------------------------------------------
# Lemma-level checks


@dataclass
class TochoReport:
    gap: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    gap_discrete: np.ndarray
    hess_tau_norm2: np.ndarray
    min_gap: float
    worst_node: int


def tocho_rhs(H, a, c, s, n):
    return s * (0.5 * n * H + a * c) ** 2 + n * s * (a * a - 0.25 * n * H * H) + a * a * s * s


def tocho_gap(state: GraphState, H_constant: float, gf: GeometryFields | None = None, tcc=None) -> TochoReport:
    """cosh(phi) Delta cosh(phi) minus the lower bound, with Delta cosh from the closed form.

    Also returns ``gap_discrete`` where Delta cosh(phi) comes from the
    discrete g_u Laplacian instead.  Requires the TCC (sharp form) on the
    realized height range.
    """
    if tcc is None:
        tcc = check_tcc(state.warp, state.fiber, state.n, data_range=state.u_range())
    if not tcc.satisfied_sharp:
        raise HypothesisError(f"TCC not certified: {tcc.worst_reason} near t={tcc.worst_t}")
    gf = gf if gf is not None else closed_forms(state, H_constant)
    f, fp = state.fvals[0], state.fvals[1]
    a = fp / f
    c, s = gf.coshphi, gf.sinh2phi
    rhs = tocho_rhs(float(H_constant), a, c, s, state.n)
    lhs = c * gf.deltacosh_rhs
    gap = lhs - rhs
    gap_d = c * laplace_graph(state, c) - rhs
    w = int(np.nanargmin(gap))
    return TochoReport(gap, lhs, rhs, gap_d, gf.hess_tau_norm2, float(gap[w]), w)


# ---------------------------------------------------------------------------------------
# ambient curvature and the Gauss-equation Ricci bound


def ambient_curvature_form(f, fpp, fp, U, V, Y, fiber_sec=None):
    """Bilinear form B(U, V) = <R(U, Y) Y, V> of -dt^2 + f^2 g_F over a flat fiber.

    Vectors are (t-component, fiber components) stacked as arrays of shape
    (N, 1+n).  Dots between fiber parts use delta (coordinate components).
    """
    ut, uf = U[:, 0], U[:, 1:]
    vt, vf = V[:, 0], V[:, 1:]
    yt, yf = Y[:, 0], Y[:, 1:]
    uv = np.sum(uf * vf, 1)
    uy = np.sum(uf * yf, 1)
    vy = np.sum(vf * yf, 1)
    yy = np.sum(yf * yf, 1)
    k = f * fpp
    out = -k * ut * vt * yy + k * yt * (ut * vy + vt * uy) - k * yt * yt * uv
    out += f * f * fp * fp * (uv * yy - uy * vy)
    return out


@dataclass
class RicciCertificate:
    ric: np.ndarray  # (N, samples)
    bound: np.ndarray
    ambient: np.ndarray
    margin: float
    passed: bool
    skipped: bool
    note: str = ""


def ricci_lower_bound_check(state: GraphState, n_random: int = 8, seed: int = 0, H=None, tol: float = 1e-8) -> RicciCertificate:
    """Ric_M(Y, Y) from the Gauss equation against -(n^2/4) H^2 |Y|^2.

    Y runs over the coordinate frame and ``n_random`` random directions per
    node.  H defaults to the pointwise shape-operator mean curvature.
    """
    _require_structured(state, "ricci_lower_bound_check")
    L = state.fvals[3]
    if np.any(L > 1e-12) or state.fiber.sectional_min < 0:
        return RicciCertificate(np.empty((0, 0)), np.empty((0, 0)), np.empty((0, 0)), np.nan, False, True,
                                "hypotheses fail: need (log f)'' <= 0 and nonnegative fiber sectional curvature")
    f, fp, fpp, _ = state.fvals
    n = state.n
    N = state.fiber.n_nodes
    so = shape_operator(state)
    A, g = so.A, so.g
    Hv = so.H_field if H is None else np.broadcast_to(np.asarray(H, dtype=float), (N,))
    ginv = np.linalg.inv(g)
    Du = state.Du
    E = np.zeros((n, N, 1 + n))
    for i in range(n):
        E[i, :, 0] = Du[:, i]
        E[i, :, 1 + i] = 1.0
    rng = np.random.default_rng(seed)
    dirs = [np.eye(n)[i] for i in range(n)] + [rng.normal(size=n) for _ in range(n_random)]
    rics, bounds, ambs = [], [], []
    trA = np.trace(A, axis1=1, axis2=2)
    for y in dirs:
        yv = np.broadcast_to(y, (N, n))
        Y = np.einsum("ni,inj->nj", yv, E)
        amb = np.zeros(N)
        for i in range(n):
            for j in range(n):
                amb += ginv[:, i, j] * ambient_curvature_form(f, fpp, fp, E[i], E[j], Y)
        Ay = np.einsum("nab,nb->na", A, yv)
        gAyy = np.einsum("na,nab,nb->n", Ay, g, yv)
        gAyAy = np.einsum("na,nab,nb->n", Ay, g, Ay)
        yy = np.einsum("na,nab,nb->n", yv, g, yv)
        ric = amb - trA * gAyy + gAyAy
        rics.append(ric / yy)
        bounds.append(-(n * n / 4.0) * Hv * Hv)
        ambs.append(amb / yy)
    ric = np.stack(rics, 1)
    bound = np.stack(bounds, 1)
    margin = float(np.min(ric - bound))
    return RicciCertificate(ric, bound, np.stack(ambs, 1), margin, margin >= -tol, False)


# ---------------------------------------------------------------------------------------
# completeness length comparison


@dataclass
class PathLengths:
    L_u: float
    L_F: float
    B: float
    inf_f: float
    bound: float
    holds: bool


def _fiber_steps(fiber: DiscreteFiber, path: np.ndarray) -> np.ndarray:
    d = fiber.coords[path[1:]] - fiber.coords[path[:-1]]
    if fiber.kind == "torus":
        Ls = np.asarray(fiber.spec["lengths"], dtype=float)
        d = (d + 0.5 * Ls) % Ls - 0.5 * Ls
    return np.sqrt(np.sum(d * d, axis=1))


def completeness_ratio(state: GraphState, path, B: float | None = None, rtol: float = 1e-12) -> PathLengths:
    """Lengths of a node path under g_u and g_F and the bound B inf f(u) L_F.

    Each step is the chord of the straight fiber segment with u linear on
    it, of g_u-length sqrt(f(u_mid)^2 |dx|^2 - du^2).  B defaults to
    1/max cosh(phi) over the state.
    """
    path = np.asarray(path, dtype=np.int64)
    if path.size < 2:
        raise ValueError("path needs at least two nodes")
    fb = state.fiber
    dx = _fiber_steps(fb, path)
    du = np.diff(state.u[path])
    fm = state.warp.derivatives(0.5 * (state.u[path[1:]] + state.u[path[:-1]]))[0]
    arg = fm**2 * dx**2 - du**2
    if np.any(arg <= 0):
        raise CausalityError("path has a non-spacelike step")
    L_u = float(np.sum(np.sqrt(arg)))
    L_F = float(np.sum(dx))
    if B is None:
        B = 1.0 / float(np.max(normal_field(state).coshphi))
    inf_f = float(min(np.min(state.fvals[0][path]), np.min(fm)))
    bound = B * inf_f * L_F
    return PathLengths(L_u, L_F, B, inf_f, bound, L_u >= bound * (1 - rtol))


def random_path(fiber: DiscreteFiber, rng, steps: int = 40, start: int | None = None) -> np.ndarray:
    """Non-backtracking random walk along fiber edges."""
    nbrs = fiber.incidence.T @ fiber.incidence  # sparsity pattern of adjacency + diagonal
    nbrs = nbrs.tolil().rows
    cur = int(rng.integers(fiber.n_nodes)) if start is None else int(start)
    out = [cur]
    prev = -1
    for _ in range(steps):
        cand = [j for j in nbrs[cur] if j != cur and j != prev]
        if not cand:
            break
        prev, cur = cur, int(cand[rng.integers(len(cand))])
        out.append(cur)
    return np.asarray(out)
