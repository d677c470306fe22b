"""Experiment configuration: JSON key/value files validated with key paths."""
from __future__ import annotations

import copy
import json
import math
from pathlib import Path

from .errors import ConfigError
from .fiber import MIN_RESOLUTION, build_fiber
from .warp import FAMILIES, WarpSpec

SUITES = ("verify-identities", "capacity", "solve", "sweep", "parabolic-trend", "full-report")

TOP_KEYS = {
    "suite", "warp", "fiber", "lambda", "H", "H_grid", "resolutions", "seed", "radii", "center",
    "tolerances", "solver", "u0", "cmc", "expect", "suites", "out",
}
SOLVER_KEYS = {
    "tol_residual", "max_newton", "step0", "backtrack", "max_backtracks", "continuation", "dt0",
    "dt_newton", "restarts", "stall_window", "stall_improvement", "slice_tol",
}
TOL_KEYS = {"min_order", "min_ratio", "capacity_rel", "slice_dev", "drop_threshold", "ratio_span", "asymptote_fraction"}

DEFAULT_TOLERANCES = {
    "min_order": 1.0,
    "min_ratio": 1.8,
    "capacity_rel": 0.05,
    "slice_dev": 1e-7,
    "drop_threshold": 0.30,
    "ratio_span": 8.0,
    "asymptote_fraction": 0.10,
}

# desk-scale defaults per suite, used by full-report and to fill gaps
SUITE_DEFAULTS = {
    "verify-identities": {
        "warp": {"family": "linear", "params": {"a": 1.0, "b": 0.0}, "interval": [0.0, "inf"]},
        "fiber": {"kind": "torus", "lengths": [1.0, 1.0]},
        "lambda": 0.3,
        "resolutions": [32, 64, 128],
    },
    "capacity": {
        "fiber": {"kind": "disk", "radius": 3.0, "h": 0.02, "dim": 2},
        "radii": {"r": 1.0, "R": [math.e]},
    },
    "solve": {
        "warp": {"family": "linear", "params": {"a": 1.0, "b": 0.0}, "interval": [0.0, "inf"]},
        "fiber": {"kind": "torus", "lengths": [1.0, 1.0], "shape": [64, 64]},
        "H": -0.5,
        "lambda": 0.5,
        "u0": {"expression": "2 + 0.1*sin(2*pi*x)"},
    },
    "sweep": {
        "warp": {"family": "linear", "params": {"a": 1.0, "b": 0.0}, "interval": [0.0, "inf"]},
        "fiber": {"kind": "torus", "lengths": [1.0, 1.0], "shape": [32, 32]},
        "H_grid": [-0.1, -0.5, -1.0],
        "lambda": 0.5,
    },
    "parabolic-trend": {
        "fiber": {"kind": "disk", "radius": 32.5, "h": 0.25, "dim": 2},
        "radii": {"r": 1.0, "R": [4.0, 8.0, 16.0, 32.0]},
    },
}


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def load_config(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path}: {exc.strerror}")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}")
    if not isinstance(data, dict):
        raise ConfigError("config: top level must be an object")
    return data


def resolve(data: dict, suite: str, seed: int | None = None) -> dict:
    """Merge suite defaults, the config file and flags; validate the result."""
    if suite not in SUITES:
        raise ConfigError(f"suite: unknown suite {suite!r}; expected one of {list(SUITES)}")
    if "suite" in data and data["suite"] != suite:
        raise ConfigError(f"suite: config names {data['suite']!r} but {suite!r} was requested")
    cfg = copy.deepcopy(SUITE_DEFAULTS.get(suite, {}))
    for k, v in data.items():
        if k in ("fiber", "warp") and isinstance(v, dict) and isinstance(cfg.get(k), dict) and v.get("kind", v.get("family")) in (None, cfg[k].get("kind", cfg[k].get("family"))):
            cfg[k] = {**cfg[k], **v}
        else:
            cfg[k] = copy.deepcopy(v)
    cfg["suite"] = suite
    if seed is not None:
        cfg["seed"] = int(seed)
    cfg.setdefault("seed", 0)
    cfg["tolerances"] = {**DEFAULT_TOLERANCES, **(cfg.get("tolerances") or {})}
    problems = validate(cfg)
    if problems:
        raise ConfigError(problems)
    if suite == "full-report":
        subs = {}
        for name, sub in (cfg.get("suites") or {s: {} for s in SUITES if s != "full-report"}).items():
            base = {k: v for k, v in data.items() if k not in ("suites", "suite")}
            try:
                subs[name] = resolve({**base, **sub}, name, cfg["seed"])
            except ConfigError as exc:
                raise ConfigError([f"suites.{name}.{p}" for p in exc.problems])
        cfg["suites"] = subs
    return cfg


def validate(cfg: dict) -> list:
    """Return a list of 'key.path: message' problems (empty when valid)."""
    p = []
    for k in cfg:
        if k not in TOP_KEYS:
            p.append(f"{k}: unknown key")
    suite = cfg.get("suite")

    lam = cfg.get("lambda")
    if lam is not None and (not _is_num(lam) or not 0 < lam < 1):
        p.append(f"lambda: lambda must satisfy 0 < lambda < 1 (got {lam!r})")
    if "seed" in cfg and (not isinstance(cfg["seed"], int) or isinstance(cfg["seed"], bool) or cfg["seed"] < 0):
        p.append("seed: must be a non-negative integer")

    if "warp" in cfg:
        w = cfg["warp"]
        if not isinstance(w, dict):
            p.append("warp: must be an object")
        elif w.get("family") not in FAMILIES:
            p.append(f"warp.family: must be one of {list(FAMILIES)} (got {w.get('family')!r})")
        else:
            try:
                WarpSpec.from_dict(w)
            except (ValueError, TypeError, KeyError) as exc:
                p.append(f"warp: {exc}")
    elif suite in ("verify-identities", "solve", "sweep"):
        p.append("warp: required")

    if "fiber" in cfg:
        fb = cfg["fiber"]
        if not isinstance(fb, dict):
            p.append("fiber: must be an object")
        elif suite != "verify-identities":
            try:
                build_fiber(dict(fb))
            except (ValueError, TypeError) as exc:
                p.append(f"fiber: {exc}")
        elif fb.get("kind") != "torus":
            p.append("fiber.kind: verify-identities refines a torus (kind must be 'torus')")

    if "resolutions" in cfg:
        res = cfg["resolutions"]
        if not isinstance(res, list) or len(res) < 2 or not all(isinstance(r, int) and not isinstance(r, bool) for r in res):
            p.append("resolutions: must be a list of at least two integers")
        else:
            if any(r < MIN_RESOLUTION for r in res):
                p.append(f"resolutions: every resolution must be >= {MIN_RESOLUTION}")
            if any(b <= a for a, b in zip(res, res[1:])):
                p.append("resolutions: must form an increasing refinement chain")

    if "H" in cfg and not _is_num(cfg["H"]):
        p.append("H: must be a finite number")
    if suite == "solve" and "H" not in cfg:
        p.append("H: required")
    if "H_grid" in cfg:
        g = cfg["H_grid"]
        if not isinstance(g, list) or not all(_is_num(x) for x in g):
            p.append("H_grid: must be a list of finite numbers")

    if "radii" in cfg:
        rd = cfg["radii"]
        if not isinstance(rd, dict):
            p.append("radii: must be an object with 'r' and 'R'")
        else:
            r = rd.get("r")
            R = rd.get("R")
            if not _is_num(r) or r <= 0:
                p.append("radii.r: must be a positive number")
            Rs = R if isinstance(R, list) else [R]
            if not Rs or not all(_is_num(x) and x > 0 for x in Rs):
                p.append("radii.R: must be a positive number or a list of them")
            elif _is_num(r) and any(x <= r for x in Rs):
                p.append("radii.R: every outer radius must exceed radii.r")
            for k in rd:
                if k not in ("r", "R"):
                    p.append(f"radii.{k}: unknown key")
    if "center" in cfg and not (isinstance(cfg["center"], list) and all(_is_num(x) for x in cfg["center"])):
        p.append("center: must be a list of coordinates")

    tol = cfg.get("tolerances") or {}
    if not isinstance(tol, dict):
        p.append("tolerances: must be an object")
    else:
        for k, v in tol.items():
            if k not in TOL_KEYS:
                p.append(f"tolerances.{k}: unknown key")
            elif not _is_num(v) or v <= 0:
                p.append(f"tolerances.{k}: must be a positive number")

    sv = cfg.get("solver") or {}
    if not isinstance(sv, dict):
        p.append("solver: must be an object")
    else:
        for k, v in sv.items():
            if k not in SOLVER_KEYS:
                p.append(f"solver.{k}: unknown key")
            elif k == "continuation":
                if not isinstance(v, bool):
                    p.append("solver.continuation: must be true or false")
            elif not _is_num(v):
                p.append(f"solver.{k}: must be a number")
        if _is_num(sv.get("tol_residual", 1.0)) and sv.get("tol_residual", 1.0) <= 0:
            p.append("solver.tol_residual: must be positive")
        rs = sv.get("restarts", 0)
        if _is_num(rs) and rs and rs < 10:
            p.append("solver.restarts: must be 0 or >= 10")

    if "u0" in cfg:
        u0 = cfg["u0"]
        if not isinstance(u0, dict) or not ({"expression"} <= set(u0) or {"base"} <= set(u0)):
            p.append("u0: must be {'expression': str} or {'base': t0, 'ratio': r}")

    if "cmc" in cfg:
        c = cfg["cmc"]
        if not isinstance(c, dict) or not _is_num(c.get("H")):
            p.append("cmc.H: required number")
    if "suites" in cfg:
        s = cfg["suites"]
        if suite != "full-report":
            p.append("suites: only valid for full-report")
        elif not isinstance(s, dict) or any(k not in SUITES or k == "full-report" for k in s):
            p.append(f"suites: must map suite names to objects ({[x for x in SUITES if x != 'full-report']})")
    if "expect" in cfg and not isinstance(cfg["expect"], dict):
        p.append("expect: must be an object")
    return p
