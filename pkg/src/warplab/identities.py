"""Discrete-versus-closed-form checks of the Laplacian and Hessian identities.

For a state on a structured fiber the closed forms of :func:`closed_forms`
are compared with the intrinsic operators of the induced metric
(:func:`laplace_graph`, :func:`hessian_graph`, :func:`graph_gradient`),
which know nothing about the extrinsic geometry.  Both converge to the same
continuum values, so their difference measured on a refinement chain
shrinks at the order of the discretization.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fiber import build_fiber
from .fields import fourier_field, scale_to_ratio
from .graphgeom import GraphState, closed_forms, graph_gradient, hessian_graph, laplace_graph, shape_operator
from .solver import SolveConfig, solve_cmc

IDENTITIES = ("laptau", "lapftau", "ARS1995", "wegotit", "hess", "gradcosh")


def identity_residuals(state: GraphState, H_constant: float | None = None, mask=None) -> dict:
    """Max-norm residual of every identity over ``mask`` (default: all nodes with a full stencil)."""
    gf = closed_forms(state, H_constant)
    f = state.fvals[0]
    c = gf.coshphi
    u = state.u
    lap = lambda v: laplace_graph(state, v)
    fc = f * c
    res = {
        "laptau": lap(u) - gf.laptau_rhs,
        "lapftau": lap(f) - gf.lapftau_rhs,
        "ARS1995": lap(fc) - gf.lapfcosh_rhs,
        "wegotit": lap(c) - gf.deltacosh_rhs,
        "hess": hessian_graph(state, u) - gf.hess_tau_norm2,
    }
    # grad g(K, N) = -A K^T
    AK = np.einsum("nab,nb->na", gf.A, gf.K_T)
    res["gradcosh"] = np.linalg.norm(graph_gradient(state, fc) + AK, axis=1)
    if mask is None:
        mask = np.all(np.isfinite(np.stack(list(res.values()), 1)), axis=1)
    out = {k: float(np.max(np.abs(v[mask]))) for k, v in res.items()}
    return out


@dataclass
class OrderFit:
    hs: list
    errors: list
    order: float
    ratios: list
    C: float
    exact: bool
    passed: bool

    def summary(self) -> dict:
        return {
            "h": self.hs, "errors": self.errors, "order": self.order, "ratios": self.ratios,
            "C_fit": self.C, "exact": self.exact, "passed": self.passed,
        }


def fit_order(hs, errors, min_order: float = 1.0, min_ratio: float = 1.8, floor: float = 1e-11) -> OrderFit:
    """Least-squares order of err ~ C h^p plus per-halving ratios.

    Errors at or below ``floor`` at every level count as exact (the identity
    holds to round-off on the discrete level) and pass.
    """
    hs = [float(h) for h in hs]
    errs = [float(e) for e in errors]
    if all(e <= floor for e in errs):
        return OrderFit(hs, errs, float("inf"), [], 0.0, True, True)
    e = np.maximum(np.asarray(errs), 1e-300)
    h = np.asarray(hs)
    p = float(np.polyfit(np.log(h), np.log(e), 1)[0])
    ratios = [float(e[k] / e[k + 1]) for k in range(len(e) - 1)]
    C = float(np.max(e / h))
    ok = p >= min_order and all(r >= min_ratio for r in ratios)
    return OrderFit(hs, errs, p, ratios, C, False, ok)


# ---------------------------------------------------------------------------------------
# refinement chains


def torus_states(warp, lam: float, resolutions, seed: int = 0, t0: float = 2.0, L: float = 1.0, modes: int = 3):
    """The same smooth random field sampled on n x n tori, steepness ~lam."""
    out = []
    amp = None
    for m in resolutions:
        fb = build_fiber(kind="torus", lengths=[L, L], shape=[m, m])
        phi = fourier_field(fb, np.random.default_rng(seed), modes)
        if amp is None:
            u = scale_to_ratio(fb, warp, t0, phi, lam)
            k = int(np.argmax(np.abs(phi)))
            amp = (u[k] - t0) / phi[k]
        out.append(GraphState(fb, warp, t0 + amp * phi))
    return out


def disk_cmc_state(warp, H: float, lam: float, h: float, seed: int = 0, t0: float = 2.0, radius: float = 1.0,
                   amp: float | None = None, modes: int = 2, cfg: SolveConfig | None = None):
    """Dirichlet CMC graph on a disk grid with smooth random boundary data.

    The boundary data t0 + amp*phi uses a resolution-independent field, so
    calls with decreasing ``h`` approximate one continuum solution.  When
    ``amp`` is None it is chosen so the data field has steepness ``lam`` on
    this grid.  Returns (state, SolveResult, amp).
    """
    fb = build_fiber(kind="disk", radius=radius, h=h, dim=2)
    phi = fourier_field(fb, np.random.default_rng(seed), modes, center=False)
    if amp is None:
        u = scale_to_ratio(fb, warp, t0, phi, lam)
        k = int(np.argmax(np.abs(phi)))
        amp = (u[k] - t0) / phi[k]
    u0 = t0 + amp * phi
    cfg = cfg or SolveConfig(H=H, lam=0.98 - 1e-9)
    res = solve_cmc(fb, warp, cfg, u0)
    return GraphState(fb, warp, res.u_final, cfg.lam), res, amp


def interior_mask(fiber, fraction: float = 0.5):
    """Nodes of a disk grid within ``fraction`` of its radius (all nodes on a torus)."""
    if fiber.kind != "disk":
        return np.ones(fiber.n_nodes, dtype=bool)
    return np.linalg.norm(fiber.coords, axis=1) <= fraction * fiber.spec["radius"]


@dataclass
class StudyResult:
    label: str
    residuals: list  # one dict per resolution
    fits: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(f.passed for f in self.fits.values())

    def summary(self) -> dict:
        return {"label": self.label, "fits": {k: v.summary() for k, v in self.fits.items()}, "passed": self.passed}


def refinement_study(states, hs, label: str, H_constant=None, names=IDENTITIES, masks=None, **fit_kw) -> StudyResult:
    rows = []
    for k, st in enumerate(states):
        mask = None if masks is None else masks[k]
        rows.append(identity_residuals(st, H_constant, mask))
    fits = {name: fit_order(hs, [r[name] for r in rows], **fit_kw) for name in names}
    return StudyResult(label, rows, fits)
