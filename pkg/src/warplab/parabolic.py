"""Condenser capacities, parabolicity trends and the energy-capacity bound.

The capacity of the annulus between the metric balls B_r and B_R is the
Dirichlet energy of the discrete equilibrium potential: p = 1 on nodes with
d <= r, p = 0 on nodes with d >= R, and p harmonic (K p = 0 for the
stiffness matrix K) at the nodes in between.  Then cap = p^T K p and the
reciprocal mu_{r,R} = 1/cap.

Capacities are computed on a :class:`MetricMesh`: either a raw fiber with
its own conductances, or a spacelike graph over a 2-D grid with its induced
metric g_u, triangulated cell by cell and given intrinsic cotangent weights.
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import CapacityError, HypothesisError
from .fiber import DiscreteFiber, distances, stencil_offsets


@dataclass(eq=False)
class MetricMesh:
    """Nodes, weighted edges and node measure of a 2-D/3-D Riemannian mesh."""

    edges: np.ndarray
    cond: np.ndarray
    measure: np.ndarray
    dist_fn: object  # center -> distances to all nodes
    trunc_fn: object  # (center, radius) -> bool
    label: str = "fiber"
    fiber: DiscreteFiber | None = None
    active: np.ndarray | None = None  # nodes covered by the mesh; None means all

    def __post_init__(self):
        if self.active is None:
            self.active = np.ones(self.measure.size, dtype=bool)

    @property
    def n_nodes(self) -> int:
        return self.measure.size

    def stiffness(self) -> sp.csr_matrix:
        i, j = self.edges[:, 0], self.edges[:, 1]
        c = self.cond
        n = self.n_nodes
        K = sp.coo_matrix(
            (np.concatenate([-c, -c, c, c]), (np.concatenate([i, j, i, j]), np.concatenate([j, i, i, j]))),
            shape=(n, n),
        ).tocsr()
        K.sum_duplicates()
        return K

    def laplacian(self, v) -> np.ndarray:
        out = -(self.stiffness() @ np.asarray(v, dtype=float)) / self.measure
        out[~self.active] = np.nan
        return out

    def energy(self, v, nodes=None) -> float:
        """sum of c_e (v_j - v_i)^2 over edges (inside ``nodes`` when given)."""
        v = np.asarray(v, dtype=float)
        i, j = self.edges[:, 0], self.edges[:, 1]
        w = self.cond * (v[j] - v[i]) ** 2
        if nodes is not None:
            inside = np.zeros(self.n_nodes, dtype=bool)
            inside[nodes] = True
            w = w[inside[i] & inside[j]]
        return float(np.sum(w))


def fiber_mesh(fiber: DiscreteFiber, method: str = "exact") -> MetricMesh:
    return MetricMesh(
        edges=np.asarray(fiber.edges),
        cond=fiber.cond,
        measure=np.asarray(fiber.measure),
        dist_fn=lambda c: distances(fiber, c, method),
        trunc_fn=fiber.ball_truncated,
        label=f"fiber:{fiber.kind}",
        fiber=fiber,
    )


def _chord(fm, dx2, du):
    arg = fm * fm * dx2 - du * du
    if np.any(arg <= 0):
        raise CapacityError("graph is not spacelike along a mesh edge")
    return np.sqrt(arg)


def graph_mesh(state) -> MetricMesh:
    """Triangulated graph surface of a state over a 2-D structured fiber.

    Each grid cell is split along its g_u-shorter diagonal; edge lengths are
    g_u chords sqrt(f(u_mid)^2 |dx|^2 - du^2); cotangent weights come from
    the intrinsic edge lengths and the node measure is one third of the
    adjacent triangle areas (Heron).
    """
    fb = state.fiber
    if not fb.structured or fb.dim != 2:
        raise ValueError("graph surfaces are supported over 2-D structured fibers")
    u = state.u
    warp = state.warp
    h = fb.spacing

    def length(i, j, off):
        dx2 = float(np.sum((np.asarray(off) * h) ** 2))
        fm = warp.derivatives(0.5 * (u[i] + u[j]))[0]
        return _chord(fm, dx2, u[j] - u[i])

    a, b = fb.offset_pairs((1, 0))
    lut_x = np.full(fb.n_nodes, -1)
    lut_x[a] = b
    a, b = fb.offset_pairs((0, 1))
    lut_y = np.full(fb.n_nodes, -1)
    lut_y[a] = b
    a, b = fb.offset_pairs((1, 1))
    lut_xy = np.full(fb.n_nodes, -1)
    lut_xy[a] = b
    p00 = np.arange(fb.n_nodes)
    p10, p01, p11 = lut_x, lut_y, lut_xy
    ok = (p10 >= 0) & (p01 >= 0) & (p11 >= 0)
    p00, p10, p01, p11 = p00[ok], p10[ok], p01[ok], p11[ok]
    d1 = length(p00, p11, (1, 1))
    d2 = length(p10, p01, (-1, 1))
    use1 = d1 <= d2
    tris = np.concatenate(
        [
            np.stack([p00[use1], p10[use1], p11[use1]], 1),
            np.stack([p00[use1], p11[use1], p01[use1]], 1),
            np.stack([p00[~use1], p10[~use1], p01[~use1]], 1),
            np.stack([p10[~use1], p11[~use1], p01[~use1]], 1),
        ]
    )
    # side lengths from the g_u chords of each triangle edge
    def side(i, j):
        d = fb.coords[j] - fb.coords[i]
        if fb.kind == "torus":
            Ls = np.asarray(fb.spec["lengths"], dtype=float)
            d = (d + 0.5 * Ls) % Ls - 0.5 * Ls
        fm = warp.derivatives(0.5 * (u[i] + u[j]))[0]
        return _chord(fm, np.sum(d * d, axis=1), u[j] - u[i])

    la = side(tris[:, 1], tris[:, 2])
    lb = side(tris[:, 2], tris[:, 0])
    lc = side(tris[:, 0], tris[:, 1])
    s = 0.5 * (la + lb + lc)
    area = np.sqrt(np.maximum(s * (s - la) * (s - lb) * (s - lc), 0.0))
    if np.any(area <= 0):
        raise CapacityError("degenerate triangle in the graph surface")
    cot_a = (lb**2 + lc**2 - la**2) / (4 * area)
    cot_b = (lc**2 + la**2 - lb**2) / (4 * area)
    cot_c = (la**2 + lb**2 - lc**2) / (4 * area)
    rows = np.concatenate([tris[:, 1], tris[:, 2], tris[:, 0]])
    cols = np.concatenate([tris[:, 2], tris[:, 0], tris[:, 1]])
    vals = 0.5 * np.concatenate([cot_a, cot_b, cot_c])
    lo, hi = np.minimum(rows, cols), np.maximum(rows, cols)
    Wm = sp.coo_matrix((vals, (lo, hi)), shape=(fb.n_nodes,) * 2).tocsr()
    Wm.sum_duplicates()
    Wm = Wm.tocoo()
    measure = np.zeros(fb.n_nodes)
    for k in range(3):
        np.add.at(measure, tris[:, k], area / 3.0)
    edges = np.stack([Wm.row, Wm.col], 1).astype(np.int64)
    # staircase corners of a disk grid belong to no complete cell
    active = measure > 0
    measure[~active] = 1.0

    graph = _graph_distance_graph(state)
    inj = fb.injectivity_radius()

    def dist_fn(c):
        return dijkstra(graph, indices=c)

    def trunc_fn(c, radius):
        d = dist_fn(c)
        members = d <= radius
        if fb.kind == "disk":
            return bool(np.any(members & fb.boundary))
        return bool(np.any(fb.distance_from(c)[members] >= inj - np.max(h)))

    mesh = MetricMesh(edges, Wm.data, measure, dist_fn, trunc_fn, "graph", fb, active)
    mesh.triangles = tris
    return mesh


def _graph_distance_graph(state) -> sp.csr_matrix:
    fb = state.fiber
    u = state.u
    ii, jj, ww = [], [], []
    for off, dx in stencil_offsets(fb.dim, fb.spacing):
        i, j = fb.offset_pairs(off)
        fm = state.warp.derivatives(0.5 * (u[i] + u[j]))[0]
        ii.append(i)
        jj.append(j)
        ww.append(_chord(fm, dx * dx, u[j] - u[i]))
    i, j, w = np.concatenate(ii), np.concatenate(jj), np.concatenate(ww)
    g = sp.coo_matrix((np.concatenate([w, w]), (np.concatenate([i, j]), np.concatenate([j, i]))), shape=(fb.n_nodes,) * 2)
    return g.tocsr()


def as_mesh(surface) -> MetricMesh:
    if isinstance(surface, MetricMesh):
        return surface
    if isinstance(surface, DiscreteFiber):
        return fiber_mesh(surface)
    if hasattr(surface, "u") and hasattr(surface, "fiber"):
        return graph_mesh(surface)
    raise TypeError(f"cannot build a metric mesh from {type(surface).__name__}")


# ---------------------------------------------------------------------------------------
# capacity


@dataclass
class CapacityReport:
    r: float
    R: float
    cap: float
    mu: float
    potential: np.ndarray
    residual: float
    truncated: bool
    n_inner: int
    n_free: int
    n_outer: int
    cg_iterations: int
    potential_range: tuple

    def row(self) -> dict:
        return {
            "r": self.r, "R": self.R, "cap": self.cap, "mu": self.mu, "residual": self.residual,
            "truncated": self.truncated, "n_inner": self.n_inner, "n_free": self.n_free,
        }


def _cg(A, b, rtol: float):
    d = A.diagonal()
    M = sp.diags(1.0 / d)
    it = [0]

    def cb(_):
        it[0] += 1

    x, info = spla.cg(A, b, rtol=rtol, atol=0.0, M=M, maxiter=20 * b.size + 1000, callback=cb)
    if info != 0:
        raise CapacityError(f"conjugate gradients did not converge (info={info})")
    return x, it[0]


def capacity(surface, center: int, r: float, R: float, rtol: float = 1e-10, dist=None) -> CapacityReport:
    """Capacity of the annulus B_R \\ closure(B_r) around node ``center``."""
    if not (0 < r < R):
        raise CapacityError(f"need 0 < r < R (got r={r}, R={R})")
    mesh = as_mesh(surface)
    d = mesh.dist_fn(center) if dist is None else dist
    act = mesh.active
    inner = (d <= r) & act
    outer = (d >= R) & act
    free = ~(inner | outer) & act
    if not np.any(outer):
        raise CapacityError(f"ball of radius {R} covers the whole mesh; annulus is not a condenser")
    if not np.any(free):
        raise CapacityError("annulus contains no free nodes at this resolution")
    K = mesh.stiffness()
    Kff = K[free][:, free]
    # every free component has to touch the Dirichlet data
    ncomp, lab = connected_components(Kff, directed=False)
    touch = np.asarray(np.abs(K[free][:, ~free]).sum(axis=1)).ravel() > 0
    hit = np.zeros(ncomp, dtype=bool)
    hit[lab[touch]] = True
    if not np.all(hit):
        raise CapacityError("annulus has a component disconnected from both plates")
    p = np.zeros(mesh.n_nodes)
    p[inner] = 1.0
    rhs = -(K[free][:, inner] @ np.ones(int(inner.sum())))
    x, its = _cg(Kff.tocsr(), rhs, rtol)
    p[free] = x
    Kp = K @ p
    res = float(np.max(np.abs(Kp[free] / mesh.measure[free])))
    cap = float(p @ Kp)
    if not cap > 0:
        raise CapacityError(f"non-positive capacity {cap}")
    return CapacityReport(
        r=float(r), R=float(R), cap=cap, mu=1.0 / cap, potential=p, residual=res,
        truncated=bool(mesh.trunc_fn(center, R)),
        n_inner=int(inner.sum()), n_free=int(free.sum()), n_outer=int(outer.sum()),
        cg_iterations=its, potential_range=(float(p.min()), float(p.max())),
    )


# ---------------------------------------------------------------------------------------
# trend


@dataclass
class TrendReport:
    r: float
    R: np.ndarray
    caps: np.ndarray
    residuals: np.ndarray
    truncated: np.ndarray
    c_inf: float
    slope: float
    drop: float
    monotone: bool
    verdict: str
    reports: list = field(default_factory=list)

    def rows(self):
        return [
            {"R": float(R), "cap": float(c), "residual": float(res), "truncated": bool(t)}
            for R, c, res, t in zip(self.R, self.caps, self.residuals, self.truncated)
        ]

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["R", "cap", "residual", "truncated"])
            w.writeheader()
            w.writerows(self.rows())
        return path


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("WARPLAB_THREADS", "1")))
    except ValueError:
        return 1


def parabolicity_trend(
    surface,
    center: int,
    r: float,
    R_list,
    drop_threshold: float = 0.30,
    ratio_span: float = 8.0,
    asymptote_fraction: float = 0.10,
    mono_rtol: float = 1e-8,
) -> TrendReport:
    """Capacities for growing outer radii and a parabolic / nonparabolic verdict.

    The fit is cap ~ c_inf + slope / log(R/r).  ``parabolic-trend`` needs a
    pair of radii at least ``ratio_span`` apart with a relative capacity drop
    of at least ``drop_threshold`` and c_inf <= ``asymptote_fraction`` of the
    first capacity; ``nonparabolic-trend`` needs c_inf above that fraction.
    Truncated balls invalidate the verdict, fewer than three radii give none.
    """
    R = np.asarray(R_list, dtype=float)
    if np.any(np.diff(R) <= 0):
        raise ValueError("R_list must be increasing")
    mesh = as_mesh(surface)
    d = mesh.dist_fn(center)
    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        reps = list(ex.map(lambda RR: capacity(mesh, center, r, RR, dist=d), R))
    caps = np.array([x.cap for x in reps])
    res = np.array([x.residual for x in reps])
    trunc = np.array([x.truncated for x in reps])
    mono = bool(np.all(caps[1:] <= caps[:-1] * (1 + mono_rtol)))
    c_inf = slope = drop = np.nan
    if R.size < 3:
        verdict = "no-verdict"
    elif np.any(trunc):
        verdict = "invalid-truncated"
    else:
        x = 1.0 / np.log(R / r)
        slope, c_inf = np.polyfit(x, caps, 1)
        drops = [
            (caps[i] - caps[j]) / caps[i]
            for i in range(R.size)
            for j in range(i + 1, R.size)
            if R[j] / R[i] >= ratio_span * (1 - 1e-12)
        ]
        drop = max(drops) if drops else np.nan
        floor = asymptote_fraction * caps[0]
        if c_inf > floor:
            verdict = "nonparabolic-trend"
        elif drops and drop >= drop_threshold:
            verdict = "parabolic-trend"
        else:
            verdict = "inconclusive"
    return TrendReport(float(r), R, caps, res, trunc, float(c_inf), float(slope), float(drop), mono, verdict, reps)


# ---------------------------------------------------------------------------------------
# energy bound


@dataclass
class Lemma1Report:
    lhs: float
    rhs: float
    cap: float
    sup_v2: float
    holds: bool
    min_v_lap_v: float
    worst_node: int
    slack: float


def lemma1_bound_check(surface, v, center: int, r: float, R: float, tol: float = 1e-9, hyp_tol: float = 1e-6) -> Lemma1Report:
    """Check int_{B_r} |grad v|^2 <= 4 sup_{B_R} v^2 cap(r, R).

    The hypothesis v lap(v) >= -hyp_tol is verified on the nodes of B_R
    first (HypothesisError naming the worst node otherwise).  The default
    ``hyp_tol`` admits the round-off left in potentials solved by CG.
    """
    mesh = as_mesh(surface)
    v = np.asarray(v, dtype=float)
    if v.shape != (mesh.n_nodes,):
        raise ValueError(f"v has shape {v.shape}, expected ({mesh.n_nodes},)")
    d = mesh.dist_fn(center)
    ballR = np.flatnonzero((d <= R) & mesh.active)
    vlv = v * mesh.laplacian(v)
    k = ballR[int(np.argmin(vlv[ballR]))]
    if vlv[k] < -hyp_tol:
        raise HypothesisError(f"v*lap(v) = {vlv[k]:.3e} < 0 at node {int(k)} inside B_R")
    rep = capacity(mesh, center, r, R, dist=d)
    lhs = mesh.energy(v, np.flatnonzero(d <= r))
    sup_v2 = float(np.max(v[ballR] ** 2))
    rhs = 4.0 * sup_v2 * rep.cap
    slack = rhs / lhs if lhs > 0 else math.inf
    return Lemma1Report(lhs, rhs, rep.cap, sup_v2, lhs <= rhs * (1 + tol), float(vlv[k]), int(k), slack)
