"""Warping functions f > 0 on an interval I and the slices of I x_f F.

A :class:`WarpSpec` is an analytic family plus its parameters and the open
interval on which it is declared.  Everything downstream only needs
f, f', f'' and (log f)'' at the heights of a graph, so that is what
:func:`eval_warp` returns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

FAMILIES = ("constant", "linear", "power", "exponential", "logistic", "sine", "spline")

_DEFAULT_PARAMS = {
    "constant": {"c": 1.0},
    "linear": {"a": 1.0, "b": 0.0},
    "power": {"c": 1.0, "k": 0.5},
    "exponential": {"c": 1.0, "a": 1.0},
    "logistic": {"K": 1.0, "r": 1.0, "t_mid": 0.0},
    "sine": {"c": 1.0, "omega": 1.0},
}

# Window used to sample an interval end that is infinite and not pinned by data.
DEFAULT_HALF_WINDOW = 50.0


@dataclass(frozen=True)
class WarpSpec:
    """Analytic warping function ``f`` on the open interval ``(t_min, t_max)``.

    Families (parameters in brackets):

    * ``constant`` [c]: f = c
    * ``linear`` [a, b]: f = a t + b
    * ``power`` [c, k]: f = c t**k, requires t_min >= 0
    * ``exponential`` [c, a]: f = c exp(a t)
    * ``logistic`` [K, r, t_mid]: f = K / (1 + exp(-r (t - t_mid))); concave
      for t > t_mid when r > 0
    * ``sine`` [c, omega]: f = c sin(omega t) on a subinterval of (0, pi/omega)
    * ``spline`` [t, f]: cubic spline through tabulated samples.  Derivatives
      come from the spline, so f'' is only piecewise linear and (log f)'' is
      as accurate as the tabulation; use it for exploration, not for
      certificates.
    """

    family: str
    params: dict = field(default_factory=dict)
    interval: tuple = (-math.inf, math.inf)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown warp family {self.family!r}; expected one of {FAMILIES}")
        params = dict(_DEFAULT_PARAMS.get(self.family, {}))
        params.update(self.params or {})
        object.__setattr__(self, "params", params)
        lo, hi = (float(self.interval[0]), float(self.interval[1]))
        if not lo < hi:
            raise ValueError(f"interval must satisfy t_min < t_max, got ({lo}, {hi})")
        object.__setattr__(self, "interval", (lo, hi))
        if self.family == "spline":
            from scipy.interpolate import CubicSpline

            ts = np.asarray(params["t"], dtype=float)
            fs = np.asarray(params["f"], dtype=float)
            if ts.ndim != 1 or ts.size < 4 or ts.shape != fs.shape:
                raise ValueError("spline warp needs matching 1-D 't' and 'f' with >= 4 samples")
            if lo < ts[0] or hi > ts[-1]:
                raise ValueError("spline interval must lie inside the tabulated range")
            object.__setattr__(self, "_spline", CubicSpline(ts, fs))
        self._validate_positive()

    # -- construction helpers -------------------------------------------------
    @classmethod
    def from_dict(cls, data: dict) -> "WarpSpec":
        interval = data.get("interval")
        if interval is None:
            interval = default_interval(data["family"], data.get("params", {}))
        interval = tuple(_parse_end(v) for v in interval)
        return cls(data["family"], dict(data.get("params", {})), interval)

    def to_dict(self) -> dict:
        params = {k: (list(map(float, v)) if np.ndim(v) else float(v)) for k, v in self.params.items()}
        return {
            "family": self.family,
            "params": params,
            "interval": [_format_end(self.interval[0]), _format_end(self.interval[1])],
        }

    # -- evaluation -------------------------------------------------------------
    def contains(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return (t > self.interval[0]) & (t < self.interval[1])

    def derivatives(self, t):
        """Return (f, f', f'') for array ``t`` without a domain check."""
        t = np.asarray(t, dtype=float)
        p = self.params
        fam = self.family
        if fam == "constant":
            f = np.full_like(t, p["c"])
            return f, np.zeros_like(t), np.zeros_like(t)
        if fam == "linear":
            return p["a"] * t + p["b"], np.full_like(t, p["a"]), np.zeros_like(t)
        if fam == "power":
            c, k = p["c"], p["k"]
            return c * t**k, c * k * t ** (k - 1.0), c * k * (k - 1.0) * t ** (k - 2.0)
        if fam == "exponential":
            c, a = p["c"], p["a"]
            f = c * np.exp(a * t)
            return f, a * f, a * a * f
        if fam == "logistic":
            K, r, tm = p["K"], p["r"], p["t_mid"]
            s = 1.0 / (1.0 + np.exp(-r * (t - tm)))
            return K * s, K * r * s * (1 - s), K * r * r * s * (1 - s) * (1 - 2 * s)
        if fam == "sine":
            c, w = p["c"], p["omega"]
            return c * np.sin(w * t), c * w * np.cos(w * t), -c * w * w * np.sin(w * t)
        sp = self._spline
        return sp(t), sp(t, 1), sp(t, 2)

    def check_domain(self, t, what: str = "t") -> None:
        t = np.asarray(t, dtype=float)
        bad = ~self.contains(t)
        if np.any(bad):
            worst = t[bad].flat[0]
            raise DomainError(
                f"{what}={worst!r} outside the warp interval I=({_format_end(self.interval[0])}, "
                f"{_format_end(self.interval[1])})"
            )

    # -- analytic shape facts ---------------------------------------------------
    def concave_on(self, lo: float, hi: float):
        """Return True/False when f'' <= 0 on [lo, hi] is decided analytically, else None."""
        p = self.params
        fam = self.family
        if fam in ("constant", "linear", "sine"):
            return True
        if fam == "power":
            return 0.0 <= p["k"] <= 1.0
        if fam == "exponential":
            return p["a"] == 0.0
        if fam == "logistic":
            if p["r"] == 0.0:
                return True
            # f'' = K r^2 s(1-s)(1-2s); sign changes at t_mid.
            if p["r"] > 0:
                return lo >= p["t_mid"] if p["K"] > 0 else hi <= p["t_mid"]
            return hi <= p["t_mid"] if p["K"] > 0 else lo >= p["t_mid"]
        return None

    def sample_window(self, data_range=None, expand: float = 0.1) -> tuple:
        """Finite closed window inside I on which hypotheses are sampled.

        With ``data_range`` = (min u, max u) the window is that range widened by
        ``expand`` of its length on each side and clipped to I.  Otherwise
        infinite ends are replaced by a window of half-width
        ``DEFAULT_HALF_WINDOW``.
        """
        lo, hi = self.interval
        if data_range is not None:
            a, b = float(data_range[0]), float(data_range[1])
            pad = expand * max(b - a, 1e-12 * max(1.0, abs(a)))
            a, b = a - pad, b + pad
        else:
            a = lo if math.isfinite(lo) else (hi - 2 * DEFAULT_HALF_WINDOW if math.isfinite(hi) else -DEFAULT_HALF_WINDOW)
            b = hi if math.isfinite(hi) else a + 2 * DEFAULT_HALF_WINDOW
        span = b - a
        eps = 1e-9 * max(1.0, span)
        a = max(a, lo + eps) if math.isfinite(lo) else a
        b = min(b, hi - eps) if math.isfinite(hi) else b
        return a, b

    def _validate_positive(self) -> None:
        p = self.params
        fam = self.family
        lo, hi = self.interval
        if fam == "constant" and not p["c"] > 0:
            raise ValueError("constant warp needs c > 0")
        if fam == "linear":
            a, b = p["a"], p["b"]
            for end in (lo, hi):
                if math.isfinite(end):
                    if a * end + b < 0:
                        raise ValueError("linear warp is negative on the interval")
                elif (a > 0 and end < 0) or (a < 0 and end > 0) or (a == 0 and b <= 0):
                    raise ValueError("linear warp changes sign on an unbounded interval")
        if fam == "power" and not (p["c"] > 0 and lo >= 0):
            raise ValueError("power warp needs c > 0 and an interval inside (0, inf)")
        if fam in ("exponential",) and not p["c"] > 0:
            raise ValueError("exponential warp needs c > 0")
        if fam == "logistic" and not p["K"] > 0:
            raise ValueError("logistic warp needs K > 0")
        if fam == "sine":
            c, w = p["c"], p["omega"]
            if not (c > 0 and w > 0 and lo >= 0 and hi <= math.pi / w + 1e-15):
                raise ValueError("sine warp needs c, omega > 0 and I inside (0, pi/omega)")
        a, b = self.sample_window()
        ts = np.linspace(a, b, 2001)
        f = self.derivatives(ts)[0]
        if not np.all(f > 0):
            raise ValueError(f"warp {fam} is not positive on the sampled interval ({a}, {b})")


def default_interval(family: str, params: dict) -> tuple:
    p = dict(_DEFAULT_PARAMS.get(family, {}))
    p.update(params or {})
    if family == "power":
        return (0.0, math.inf)
    if family == "linear":
        a, b = p["a"], p["b"]
        if a > 0:
            return (-b / a, math.inf)
        if a < 0:
            return (-math.inf, -b / a)
        return (-math.inf, math.inf)
    if family == "logistic":
        return (p["t_mid"], math.inf) if p["r"] >= 0 else (-math.inf, p["t_mid"])
    if family == "sine":
        return (0.0, math.pi / p["omega"])
    if family == "spline":
        ts = params["t"]
        return (float(ts[0]), float(ts[-1]))
    return (-math.inf, math.inf)


def _parse_end(v):
    if isinstance(v, str):
        return {"inf": math.inf, "+inf": math.inf, "-inf": -math.inf}[v.strip().lower()]
    return float(v)


def _format_end(v):
    if math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return float(v)


def eval_warp(spec: WarpSpec, t):
    """Evaluate (f, f', f'', (log f)'') at ``t`` (scalar or array).

    Raises :class:`DomainError` when any ``t`` lies outside the open interval.
    """
    spec.check_domain(t)
    f, fp, fpp = spec.derivatives(t)
    logfpp = (f * fpp - fp * fp) / (f * f)
    if np.ndim(t) == 0:
        return float(f), float(fp), float(fpp), float(logfpp)
    return f, fp, fpp, logfpp


def slice_mean_curvature(spec: WarpSpec, t0):
    """Constant mean curvature -f'(t0)/f(t0) of the slice {t0} x F."""
    f, fp, _, _ = eval_warp(spec, t0)
    return -fp / f


def slice_shape_scalar(spec: WarpSpec, t0):
    """The slice shape operator is this scalar times the identity."""
    f, fp, _, _ = eval_warp(spec, t0)
    return fp / f


@dataclass
class TccReport:
    """Outcome of the timelike convergence test for I x_f F.

    ``ricci_bound_needed`` holds n (f f'' - f'^2) at ``samples``.  The sharper
    ``ricci_bound_sharp`` = (n-1)(f f'' - f'^2) is what the null limit of a
    timelike vector actually requires; ``satisfied_sharp`` uses it.
    """

    f_concave: bool
    samples: np.ndarray
    ricci_bound_needed: np.ndarray
    ricci_bound_sharp: np.ndarray
    fiber_ricci_min: float
    satisfied: bool
    satisfied_sharp: bool
    n: int
    window: tuple
    worst_t: float | None = None
    worst_reason: str | None = None
    concavity_source: str = "sampled"

    def summary(self) -> dict:
        return {
            "f_concave": bool(self.f_concave),
            "concavity_source": self.concavity_source,
            "fiber_ricci_min": float(self.fiber_ricci_min),
            "sup_ricci_bound_needed": float(np.max(self.ricci_bound_needed)),
            "sup_ricci_bound_sharp": float(np.max(self.ricci_bound_sharp)),
            "satisfied": bool(self.satisfied),
            "satisfied_sharp": bool(self.satisfied_sharp),
            "n": int(self.n),
            "window": [float(self.window[0]), float(self.window[1])],
            "samples": int(self.samples.size),
            "worst_t": None if self.worst_t is None else float(self.worst_t),
            "worst_reason": self.worst_reason,
        }


def check_tcc(spec: WarpSpec, fiber, n: int | None = None, sampling: int = 10_000, data_range=None) -> TccReport:
    """Certify f'' <= 0 and Ric^F >= n (f f'' - f'^2) on a sampled window of I.

    ``fiber`` may be a DiscreteFiber or a plain number giving inf Ric^F over
    unit directions.  ``data_range`` truncates the sampled window to the
    heights actually reached (widened by 10%).
    """
    if hasattr(fiber, "ricci_min"):
        ric_min = float(fiber.ricci_min)
        if n is None:
            n = fiber.dim
        elif n != fiber.dim:
            raise ValueError(f"n={n} does not match the fiber dimension {fiber.dim}")
    else:
        ric_min = float(fiber)
        if n is None:
            raise ValueError("n is required when the fiber is given as a number")
    if n < 2:
        raise ValueError("hypersurface dimension n must be >= 2")
    a, b = spec.sample_window(data_range)
    ts = np.linspace(a, b, int(sampling))
    f, fp, fpp = spec.derivatives(ts)
    analytic = spec.concave_on(a, b)
    sampled_concave = bool(np.all(fpp <= 1e-12 * np.maximum(1.0, np.abs(f))))
    concave = sampled_concave if analytic is None else bool(analytic)
    source = "sampled" if analytic is None else "analytic"
    core = f * fpp - fp * fp
    need = n * core
    sharp = (n - 1) * core
    sat = concave and ric_min >= float(np.max(need))
    sat_sharp = concave and ric_min >= float(np.max(sharp))
    worst_t, reason = None, None
    if not concave:
        i = int(np.argmax(fpp))
        worst_t, reason = float(ts[i]), "f'' > 0"
    elif not sat:
        i = int(np.argmax(need))
        worst_t = float(ts[i])
        reason = "Ric^F below n(f f'' - f'^2)" if sat_sharp else "Ric^F below (n-1)(f f'' - f'^2)"
    return TccReport(
        f_concave=concave,
        samples=ts,
        ricci_bound_needed=need,
        ricci_bound_sharp=sharp,
        fiber_ricci_min=ric_min,
        satisfied=sat,
        satisfied_sharp=sat_sharp,
        n=n,
        window=(a, b),
        worst_t=worst_t,
        worst_reason=reason,
        concavity_source=source,
    )
