"""Smooth random height fields on fibers, scaled to a prescribed steepness."""
from __future__ import annotations

import numpy as np

from .fiber import DiscreteFiber, gradient, node_norm2


def fourier_field(fiber: DiscreteFiber, rng: np.random.Generator, modes: int = 3, decay: float = 2.0, center: bool = True) -> np.ndarray:
    """Random smooth zero-mean field built from low Fourier modes.

    Tori get periodic modes; disk grids get plane waves with random
    directions and wavelengths comparable to the disk; the sphere x ring
    product gets low-degree polynomials on the sphere times ring modes.
    Amplitudes fall like |k|^-decay.  The random draws do not depend on the
    resolution, so one seed gives the same continuous field on every grid of
    a refinement chain (set ``center=False`` to skip the grid-dependent mean
    removal).
    """
    X = fiber.coords
    out = np.zeros(fiber.n_nodes)
    if fiber.kind == "torus":
        Ls = np.asarray(fiber.spec["lengths"], dtype=float)
        for k in np.ndindex(*(2 * modes + 1,) * fiber.dim):
            kv = np.asarray(k) - modes
            if not np.any(kv):
                continue
            amp = rng.normal(size=2) * np.linalg.norm(kv) ** (-decay)
            ph = 2 * np.pi * (X / Ls) @ kv
            out += amp[0] * np.cos(ph) + amp[1] * np.sin(ph)
    elif fiber.kind == "disk":
        R = float(fiber.spec["radius"])
        for m in range(1, 2 * modes + 1):
            d = rng.normal(size=fiber.dim)
            d /= np.linalg.norm(d)
            kk = np.pi * (0.5 + m * rng.uniform(0.5, 1.0)) / R
            amp = rng.normal(size=2) * (kk * R) ** (-decay)
            ph = kk * (X @ d)
            out += amp[0] * np.cos(ph) + amp[1] * np.sin(ph)
    else:
        S = X[:, :3] / fiber.sphere_radius
        ring = 2 * np.pi * X[:, 3] / fiber.ring_length
        for m in range(1, modes + 1):
            c = rng.normal(size=3)
            Q = rng.normal(size=(3, 3))
            sph = S @ c + np.einsum("ni,ij,nj->n", S, 0.5 * (Q + Q.T), S) / m
            amp = rng.normal(size=2) * m ** (-decay)
            out += sph * (amp[0] * np.cos(m * ring) + amp[1] * np.sin(m * ring))
    if center:
        out -= np.mean(out)
    return out


def steepness(fiber: DiscreteFiber, warp, u) -> float:
    """max |Du| / f(u) with the edge energy-density |Du|."""
    q = node_norm2(fiber, gradient(fiber, u))
    return float(np.max(np.sqrt(q) / warp.derivatives(u)[0]))


def scale_to_ratio(fiber: DiscreteFiber, warp, base, shape, target: float, tol: float = 1e-10) -> np.ndarray:
    """Return base + s*shape with s >= 0 chosen so the steepness equals ``target``.

    The steepness is increasing in s on every family used here as long as u
    stays in I; bisection on s keeps u inside the warp interval.
    """
    shape = np.asarray(shape, dtype=float)
    base = np.broadcast_to(np.asarray(base, dtype=float), shape.shape)

    def ratio(s):
        u = base + s * shape
        if not np.all(warp.contains(u)):
            return np.inf
        return steepness(fiber, warp, u)

    lo, hi = 0.0, 1.0
    while ratio(hi) < target:
        hi *= 2.0
        if hi > 1e12:
            raise ValueError("field is too flat to reach the target ratio")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if ratio(mid) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol * hi:
            break
    return base + lo * shape


def random_state_field(fiber: DiscreteFiber, warp, center: float, lam: float, rng, modes: int = 3) -> np.ndarray:
    """Smooth random field around height ``center`` with steepness exactly ``lam``."""
    return scale_to_ratio(fiber, warp, center, fourier_field(fiber, rng, modes), lam)
