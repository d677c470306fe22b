"""Newton solver for the prescribed mean curvature equation of spacelike graphs.

The discrete residual at node i is

    R_i = div(a Du)_i + H + b_i,
    a = 1/(n f W),  b = (f'/W)(1 + |Du|^2/(n f^2)),  W = sqrt(f^2 - |Du|^2),

with the conservative edge divergence of :mod:`warplab.fiber` and the edge
average of a.  R = H - H(u), so R = 0 exactly when the graph has mean
curvature H.  The Jacobian is assembled in closed form; only free nodes
(non-Dirichlet) are unknowns.

Globalization: damped Newton with a backtracking line search that rejects
trial steps leaving the constraint set |Du| <= lambda f(u); when a full
line search fails the iteration switches to linearly implicit
pseudo-transient continuation (I/dt - J) du = R and returns to Newton once
dt has grown large.
"""
from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import CausalityError
from .fiber import DiscreteFiber
from .fields import fourier_field, scale_to_ratio
from .graphgeom import GraphState
from .warp import WarpSpec, check_tcc, eval_warp

log = logging.getLogger(__name__)

STATUSES = ("converged", "nonexistence-evidence", "diverged", "constraint-violated", "max-iters")


@dataclass
class SolveConfig:
    H: float
    lam: float = 0.9
    tol_residual: float = 1e-9
    max_newton: int = 200
    step0: float = 1.0
    backtrack: float = 0.5
    max_backtracks: int = 3
    continuation: bool = True
    dt0: float = 1e-2
    dt_newton: float = 1e6
    restarts: int = 0
    seed: int = 0
    stall_window: int = 15
    stall_improvement: float = 0.01
    slice_tol: float = 1e-7
    max_ratio_guard: float = 0.98

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must satisfy 0 < lambda < 1 (got {self.lam})")
        if not self.tol_residual > 0:
            raise ValueError("tol_residual must be positive")
        if self.restarts and self.restarts < 10:
            raise ValueError("nonexistence evidence needs restarts = 0 or >= 10")

    @property
    def ratio_cap(self) -> float:
        return min(self.lam, self.max_ratio_guard)


@dataclass
class SliceDetect:
    t0: float
    deviation: float
    is_slice: bool


@dataclass
class SolveResult:
    status: str
    u_final: np.ndarray
    residual_history: list
    slice_detect: SliceDetect | None
    constraint_min_margin: float
    iterations: int = 0
    final_residual: float = np.nan
    note: str = ""
    modes: list = field(default_factory=list)
    runs: list = field(default_factory=list)
    H: float = np.nan

    def summary(self) -> dict:
        out = {
            "status": self.status,
            "H": self.H,
            "iterations": self.iterations,
            "final_residual": self.final_residual,
            "constraint_min_margin": self.constraint_min_margin,
            "note": self.note,
            "u_min": float(np.min(self.u_final)),
            "u_max": float(np.max(self.u_final)),
        }
        if self.slice_detect is not None:
            out["slice_detect"] = asdict(self.slice_detect)
        if self.runs:
            out["runs"] = self.runs
        return out

    def write(self, outdir, stem: str = "solve") -> None:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        (outdir / f"{stem}.json").write_text(json.dumps(_jsonable(self.summary()), indent=2))
        with (outdir / f"{stem}_residual_history.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "scaled_residual", "mode"])
            for k, (r, m) in enumerate(zip(self.residual_history, self.modes)):
                w.writerow([k, repr(float(r)), m])


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        return float(x) if np.isfinite(x) else str(float(x))
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# ---------------------------------------------------------------------------------------
# residual and Jacobian


class _Problem:
    """Discrete operator pieces for one (fiber, warp) pair."""

    def __init__(self, fiber: DiscreteFiber, warp: WarpSpec):
        self.fiber = fiber
        self.warp = warp
        self.n = fiber.dim
        self.D = fiber.incidence
        self.Dabs = fiber.abs_incidence
        self.DT = fiber.incidence.T.tocsr()
        self.Q = fiber.norm_weights
        self.c = fiber.cond
        self.l = fiber.edge_len
        self.m = fiber.measure
        self.free = np.flatnonzero(~fiber.boundary)

    def pieces(self, u):
        f, fp, fpp = self.warp.derivatives(u)
        du = self.D @ u
        X = du / self.l
        q = self.Q @ (X * X)
        W2 = f * f - q
        return f, fp, fpp, du, q, W2

    def residual(self, u, H):
        n = self.n
        f, fp, _, du, q, W2 = self.pieces(u)
        if np.any(W2 <= 0):
            return None
        W = np.sqrt(W2)
        a = 1.0 / (n * f * W)
        abar = 0.5 * (a[self.fiber.edges[:, 0]] + a[self.fiber.edges[:, 1]])
        div = -(self.DT @ (self.c * abar * du)) / self.m
        b = (fp / W) * (1.0 + q / (n * f * f))
        return div + H + b

    def jacobian(self, u):
        n = self.n
        f, fp, fpp, du, q, W2 = self.pieces(u)
        W = np.sqrt(W2)
        a = 1.0 / (n * f * W)
        e0, e1 = self.fiber.edges[:, 0], self.fiber.edges[:, 1]
        abar = 0.5 * (a[e0] + a[e1])
        a_u = -a * fp * (1.0 / f + f / W2)
        a_q = a / (2.0 * W2)
        g = n + q / (f * f)
        b_u = (fpp * g / W - 2.0 * q * fp * fp / (f**3 * W) - fp * g * f * fp / W**3) / n
        b_q = (fp / (f * f * W) + fp * g / (2.0 * W**3)) / n
        Qd = self.Q @ sp.diags(2.0 * du / self.l**2) @ self.D
        da = sp.diags(a_u) + sp.diags(a_q) @ Qd
        inner = sp.diags(abar) @ self.D + sp.diags(du) @ (0.5 * self.Dabs) @ da
        J = -sp.diags(1.0 / self.m) @ self.DT @ sp.diags(self.c) @ inner
        J = J + sp.diags(b_u) + sp.diags(b_q) @ Qd
        return J.tocsr()

    def ratio(self, u):
        f, _, _, _, q, _ = self.pieces(u)
        return np.sqrt(np.maximum(q, 0.0)) / f

    def margin(self, u, lam):
        f, _, _, _, q, _ = self.pieces(u)
        return float(np.min(lam * f - np.sqrt(np.maximum(q, 0.0))))


def residual(state: GraphState, H: float) -> np.ndarray:
    """R = H - H(u) per node (NaN on Dirichlet nodes).

    Raises CausalityError when the graph is not spacelike.
    """
    pr = _Problem(state.fiber, state.warp)
    r = pr.residual(state.u, float(H))
    if r is None:
        raise CausalityError("graph is not spacelike; residual undefined")
    if not state.fiber.boundary_free:
        r = r.copy()
        r[state.fiber.boundary] = np.nan
    return r


def jacobian(state: GraphState) -> sp.csr_matrix:
    """Analytic Jacobian dR/du over all nodes (Dirichlet rows included)."""
    return _Problem(state.fiber, state.warp).jacobian(state.u)


# ---------------------------------------------------------------------------------------
# the iteration


def _deflate(fiber: DiscreteFiber, warp: WarpSpec) -> bool:
    return fiber.boundary_free and warp.family == "constant"


def _wnorm(r, m) -> float:
    return float(np.sqrt(np.sum(m * r * r) / np.sum(m)))


def _single_solve(fiber: DiscreteFiber, warp: WarpSpec, cfg: SolveConfig, u0: np.ndarray) -> SolveResult:
    pr = _Problem(fiber, warp)
    H = float(cfg.H)
    scale = max(1.0, abs(H))
    free = pr.free
    mf = pr.m[free]
    deflate = _deflate(fiber, warp)
    u = np.array(u0, dtype=float)
    cap = cfg.ratio_cap

    def admissible(v):
        if not np.all(warp.contains(v)):
            return False
        return float(np.max(pr.ratio(v))) <= cap

    r0 = float(np.max(pr.ratio(u)))
    if r0 >= 1.0:
        raise CausalityError(f"initial graph is not spacelike (max |Du|/f = {r0:.6g})")
    hist, modes = [], []
    margin = pr.margin(u, cfg.lam)
    if r0 > cfg.lam:
        return SolveResult("constraint-violated", u, hist, None, margin, 0, np.nan,
                           f"initial data violates the lambda constraint (ratio {r0:.4g} > {cfg.lam})", modes, H=H)
    R = pr.residual(u, H)
    mode = "newton"
    dt = cfg.dt0
    fails = 0
    status, note = "max-iters", "iteration budget exhausted"
    for it in range(cfg.max_newton + 1):
        Rf = R[free]
        res = float(np.max(np.abs(Rf))) / scale
        hist.append(res)
        modes.append(mode)
        if res <= cfg.tol_residual:
            status, note = "converged", ""
            break
        if it == cfg.max_newton:
            break
        if not np.all(np.isfinite(Rf)):
            status, note = "diverged", "non-finite residual"
            break
        w = cfg.stall_window
        if len(hist) > w and hist[-1] > (1.0 - cfg.stall_improvement) * min(hist[: -w]):
            status, note = "max-iters", f"stalled: no {cfg.stall_improvement:.0%} improvement over {w} iterations"
            break
        J = pr.jacobian(u)[free][:, free]
        nrm0 = _wnorm(Rf, mf)
        try:
            if mode == "newton":
                delta = _linear_solve(J, -Rf, mf if deflate else None)
            else:
                A = sp.identity(free.size, format="csr") / dt - J
                delta = _linear_solve(A, Rf, None)
        except RuntimeError as exc:
            status, note = "diverged", f"linear solve failed: {exc}"
            break
        if not np.all(np.isfinite(delta)):
            status, note = "diverged", "non-finite update"
            break
        accepted = False
        if mode == "newton":
            alpha = cfg.step0
            for _ in range(cfg.max_backtracks + 1):
                trial = u.copy()
                trial[free] += alpha * delta
                if admissible(trial):
                    Rt = pr.residual(trial, H)
                    if Rt is not None and _wnorm(Rt[free], mf) <= (1.0 - 1e-4 * alpha) * nrm0:
                        u, R, accepted = trial, Rt, True
                        break
                alpha *= cfg.backtrack
            if not accepted:
                fails += 1
                if cfg.continuation:
                    mode, dt = "ptc", cfg.dt0
                else:
                    status, note = "diverged", "line search failed"
                    break
        else:
            for _ in range(30):
                trial = u.copy()
                trial[free] += delta
                if admissible(trial):
                    Rt = pr.residual(trial, H)
                    if Rt is not None:
                        nrm1 = _wnorm(Rt[free], mf)
                        u, R, accepted = trial, Rt, True
                        dt = float(np.clip(dt * nrm0 / max(nrm1, 1e-300), 0.1 * dt, 10.0 * dt))
                        break
                dt *= 0.25
                A = sp.identity(free.size, format="csr") / dt - J
                delta = _linear_solve(A, Rf, None)
            if not accepted:
                status, note = "constraint-violated", "pseudo-transient step cannot stay inside the lambda constraint"
                break
            if dt >= cfg.dt_newton:
                mode = "newton"
        margin = min(margin, pr.margin(u, cfg.lam))
    final = hist[-1] if hist else np.nan
    sd = None
    if status == "converged":
        t0 = float(np.median(u))
        dev = float(np.max(np.abs(u - t0)))
        sd = SliceDetect(t0, dev, dev <= cfg.slice_tol * max(1.0, abs(t0)))
        if margin <= 0:
            status, note = "constraint-violated", "converged outside the lambda constraint"
    res = SolveResult(status, u, hist, sd, margin, len(hist) - 1, final, note, modes, H=H)
    if fails:
        res.note = (res.note + f"; {fails} failed line searches").lstrip("; ")
    return res


def _linear_solve(A: sp.spmatrix, rhs: np.ndarray, border_weights) -> np.ndarray:
    """Sparse LU solve; with ``border_weights`` solve the bordered system

        [A 1; w^T 0] [x; mu] = [rhs; 0]

    which removes the constant kernel of the Jacobian on closed fibers.
    """
    if border_weights is not None:
        k = rhs.size
        col = sp.csr_matrix(np.ones((k, 1)))
        row = sp.csr_matrix(border_weights.reshape(1, -1) / np.sum(border_weights))
        A = sp.bmat([[A, col], [row, None]], format="csc")
        rhs = np.concatenate([rhs, [0.0]])
        x = spla.splu(A).solve(rhs)
        return x[:k]
    return spla.splu(A.tocsc()).solve(rhs)


def _restart_field(fiber, warp, u0, cfg: SolveConfig, rng) -> np.ndarray:
    center = float(np.mean(u0))
    shape = fourier_field(fiber, rng)
    if not fiber.boundary_free:
        shape[fiber.boundary] = 0.0
        base = np.array(u0, dtype=float)
        base[~fiber.boundary] = center
        target = cfg.lam * rng.uniform(0.2, 0.8)
        return scale_to_ratio(fiber, warp, base, shape, max(target, float(np.max(_Problem(fiber, warp).ratio(base))) + 1e-3))
    target = cfg.lam * rng.uniform(0.2, 0.8)
    return scale_to_ratio(fiber, warp, center, shape, target)


def solve_cmc(fiber: DiscreteFiber, warp: WarpSpec, config: SolveConfig, u0) -> SolveResult:
    """Solve H(u) = config.H from ``u0``; Dirichlet data on disk grids is u0 on the boundary.

    With ``config.restarts`` >= 10, a failed first run is followed by runs
    from independent smooth random data (seeded by ``config.seed``).  If any
    run converges that result is returned; if every run stalls with
    residual bounded away from zero or leaves the constraint set, the
    status is ``nonexistence-evidence`` (evidence, not proof).
    """
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (fiber.n_nodes,):
        raise ValueError(f"u0 has shape {u0.shape}, expected ({fiber.n_nodes},)")
    warp.check_domain(u0, "u0")
    first = _single_solve(fiber, warp, config, u0)
    if first.status == "converged" or config.restarts == 0:
        return first
    rng = np.random.default_rng(config.seed)
    runs = [_run_record(first)]
    for k in range(config.restarts):
        start = _restart_field(fiber, warp, u0, config, rng)
        r = _single_solve(fiber, warp, config, start)
        runs.append(_run_record(r))
        if r.status == "converged":
            r.runs = runs
            r.note = (r.note + f"; converged on restart {k + 1}").lstrip("; ")
            return r
    failing = all(_is_failure_evidence(rr, config) for rr in runs)
    status = "nonexistence-evidence" if failing else "max-iters"
    note = (
        f"all {len(runs)} runs stalled away from zero residual or left the constraint set"
        if failing
        else "runs failed for reasons that do not count as nonexistence evidence"
    )
    return SolveResult(status, first.u_final, first.residual_history, None,
                       min(rr["constraint_min_margin"] for rr in runs), first.iterations, first.final_residual,
                       note, first.modes, runs, H=first.H)


def _run_record(r: SolveResult) -> dict:
    return {
        "status": r.status,
        "final_residual": float(r.final_residual),
        "iterations": r.iterations,
        "constraint_min_margin": float(r.constraint_min_margin),
        "note": r.note,
    }


def _is_failure_evidence(rec: dict, cfg: SolveConfig) -> bool:
    if rec["status"] == "constraint-violated":
        return True
    return rec["status"] == "max-iters" and rec["final_residual"] > 1e3 * cfg.tol_residual


# ---------------------------------------------------------------------------------------
# sweeps and regime annotation


def regime(warp: WarpSpec, fiber: DiscreteFiber, H: float, u_range) -> str:
    """Which uniqueness / nonexistence statement applies to (warp, fiber, H).

    ``otro``: product (f constant), TCC, H != 0: no such hypersurface.
    ``maximales``: TCC, H = 0: totally geodesic.
    ``t4``: TCC, n + 1 <= 5, 0 < H^2 <= inf f'^2/f^2 over u_range: slice.
    ``none``: TCC, n + 1 > 5, 0 < H^2 <= (4/n) inf f'^2/f^2: no such hypersurface.
    Otherwise ``no-theorem``.
    """
    n = fiber.dim
    tcc = check_tcc(warp, fiber, n, data_range=u_range)
    if not tcc.satisfied_sharp:
        return "no-theorem"
    if warp.family == "constant":
        return "maximales" if H == 0 else "otro"
    if H == 0:
        return "maximales"
    lo, hi = u_range
    ts = np.linspace(lo, hi, 257) if hi > lo else np.array([lo])
    f, fp, _ = warp.derivatives(ts)
    k2 = float(np.min((fp / f) ** 2))
    if n + 1 <= 5:
        return "t4" if H * H <= k2 else "no-theorem"
    return "none" if H * H <= (4.0 / n) * k2 else "no-theorem"


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("WARPLAB_THREADS", "1")))
    except ValueError:
        return 1


def sweep(fiber: DiscreteFiber, warp: WarpSpec, H_grid, template: SolveConfig, u0_for=None) -> list:
    """Solve for every H in ``H_grid`` (concurrently; WARPLAB_THREADS workers).

    ``u0_for(H)`` supplies initial data; by default the slice t0 with
    -f'(t0)/f(t0) = H when it exists in I, else a mid-interval height,
    perturbed by a smooth field.  Results are ordered as ``H_grid``.
    """
    H_grid = [float(h) for h in H_grid]
    if not H_grid:
        return []
    if u0_for is None:
        u0_for = lambda H: default_initial(fiber, warp, H, template)

    def job(H):
        cfg = replace(template, H=H)
        res = solve_cmc(fiber, warp, cfg, u0_for(H))
        urange = (float(res.u_final.min()), float(res.u_final.max()))
        return {"H": H, "regime": regime(warp, fiber, H, urange), **res.summary()}

    with ThreadPoolExecutor(max_workers=_threads()) as ex:
        return list(ex.map(job, H_grid))


def slice_height(warp: WarpSpec, H: float):
    """A t0 in I with -f'(t0)/f(t0) = H, or None (scanned then bisected)."""
    a, b = warp.sample_window()
    ts = np.linspace(a, b, 4001)
    f, fp, _ = warp.derivatives(ts)
    g = -fp / f - H
    hits = np.flatnonzero(g == 0)
    if hits.size:
        return float(ts[hits[0]])
    idx = np.flatnonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)
    if idx.size == 0:
        return None
    lo, hi = ts[idx[0]], ts[idx[0] + 1]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        gm = -warp.derivatives(mid)[1] / warp.derivatives(mid)[0] - H
        glo = -warp.derivatives(lo)[1] / warp.derivatives(lo)[0] - H
        if np.sign(gm) == np.sign(glo):
            lo = mid
        else:
            hi = mid
    return float(0.5 * (lo + hi))


def default_initial(fiber: DiscreteFiber, warp: WarpSpec, H: float, cfg: SolveConfig, amplitude_ratio: float = 0.3) -> np.ndarray:
    t0 = slice_height(warp, H)
    if t0 is None:
        a, b = warp.sample_window()
        t0 = 0.5 * (a + b)
    rng = np.random.default_rng(cfg.seed)
    shape = fourier_field(fiber, rng, modes=2)
    if not fiber.boundary_free:
        shape[fiber.boundary] = 0.0
    return scale_to_ratio(fiber, warp, t0, shape, amplitude_ratio * cfg.lam)


# ---------------------------------------------------------------------------------------
# squeeze check


@dataclass
class SqueezeReport:
    lower: float
    H: float
    upper: float
    passed: bool
    skipped: bool
    note: str = ""


def le1_empirical_check(result: SolveResult, warp: WarpSpec, tol: float = 1e-6, fiber: DiscreteFiber | None = None) -> SqueezeReport:
    """-f'/f(sup u) <= H <= -f'/f(inf u) for a converged solution.

    Requires (log f)'' <= 0 on the realized range, which makes -f'/f
    nondecreasing; otherwise the check is skipped with a note.  On a fiber
    with Dirichlet boundary (pass ``fiber``) the squeeze comes from the
    maximum principle at an interior extremum, so each side is only tested
    when the matching extremum is attained off the boundary; the other side
    is reported as NaN.
    """
    if result.status != "converged":
        return SqueezeReport(np.nan, result.H, np.nan, False, True, f"result not converged ({result.status})")
    u = result.u_final
    lo, hi = float(np.min(u)), float(np.max(u))
    ts = np.linspace(lo, hi, 257) if hi > lo else np.array([lo])
    L = eval_warp(warp, ts)[3]
    if np.any(np.asarray(L) > 1e-12):
        return SqueezeReport(np.nan, result.H, np.nan, False, True, "(log f)'' > 0 on the solution range")
    f_hi, fp_hi = eval_warp(warp, hi)[:2]
    f_lo, fp_lo = eval_warp(warp, lo)[:2]
    lower, upper = -fp_hi / f_hi, -fp_lo / f_lo
    note = ""
    if fiber is not None and not fiber.boundary_free:
        inner = ~fiber.boundary
        if not np.any(inner & (u >= hi)):
            lower = np.nan
        if not np.any(inner & (u <= lo)):
            upper = np.nan
        if np.isnan(lower) and np.isnan(upper):
            return SqueezeReport(lower, result.H, upper, False, True, "both extrema lie on the Dirichlet boundary")
        note = "Dirichlet fiber: sides tested at interior extrema only"
    H = result.H
    ok = (np.isnan(lower) or lower - tol <= H) and (np.isnan(upper) or H <= upper + tol)
    return SqueezeReport(float(lower), H, float(upper), bool(ok), False, note)
