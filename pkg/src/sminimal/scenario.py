"""Scenario configs: parsing, execution and PASS/FAIL checks.

A scenario file is INI-style text. Unknown sections or keys are errors, and
every error names the file, line, section and key. Shapes are written as
calls, e.g. ``ball(center=(-1, 0), radius=1)``.
"""

from __future__ import annotations

import ast
import configparser
import json
import math
import operator
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import grid as G
from .battery import oracle_battery, random_instance
from .curvature import curvature_profile
from .diagnostics import (
    bounds_check,
    boundary_jump,
    comparison_check,
    interior_oscillation,
    continuity_report,
    nestedness_check,
)
from .grid import CellSet, GridSpec, ShapeDesc, rasterize
from .kernel import build_kernel, check_near_rule, tail_norm
from .perimeter import alpha_bar, interaction, perimeter_in, perimeter_whole
from .solver import ScalarField, energy, solve_smoothed, solve_sminimal


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# expression parsing

_SHAPES = {
    "ball": G.ball,
    "box": G.box,
    "halfplane": G.halfplane,
    "dumbbell_K": G.dumbbell_K,
    "dumbbell_Omega": G.dumbbell_Omega,
    "union": G.union,
    "intersection": G.intersection,
    "complement": G.complement,
    "difference": G.difference,
}
_BINOPS = {ast.Add: operator.add, ast.Sub: operator.sub, ast.Mult: operator.mul, ast.Div: operator.truediv, ast.Pow: operator.pow}
_NAMES = {"pi": math.pi}


def _eval(node):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        return node.value
    if isinstance(node, (ast.Tuple, ast.List)):
        return tuple(_eval(e) for e in node.elts)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval(node.operand)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval(node.left), _eval(node.right))
    if isinstance(node, ast.Name) and node.id in _NAMES:
        return _NAMES[node.id]
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _SHAPES:
        args = [_eval(a) for a in node.args]
        kwargs = {k.arg: _eval(k.value) for k in node.keywords}
        return _SHAPES[node.func.id](*args, **kwargs)
    raise ValueError(f"unsupported expression: {ast.unparse(node)}")


def parse_expr(text: str):
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ValueError(f"syntax error in {text!r}") from exc
    try:
        return _eval(tree.body)
    except TypeError as exc:
        raise ValueError(str(exc)) from exc


def parse_shape(text: str) -> ShapeDesc:
    v = parse_expr(text)
    if not isinstance(v, ShapeDesc):
        raise ValueError(f"{text!r} is not a shape")
    return v


def _number(text: str) -> float:
    v = parse_expr(text)
    if isinstance(v, (tuple, ShapeDesc)):
        raise ValueError(f"{text!r} is not a number")
    return float(v)


def _numbers(text: str) -> list[float]:
    text = text.strip()
    if not text:
        return []
    v = parse_expr(text if text.startswith(("(", "[")) else f"({text},)")
    if not isinstance(v, tuple):
        v = (v,)
    return [float(x) for x in v]


def _ints(text: str) -> list[int]:
    vals = _numbers(text)
    if any(v != int(v) for v in vals):
        raise ValueError("expected integers")
    return [int(v) for v in vals]


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _str(text: str) -> str:
    return text.strip()


def _pieces(text: str):
    v = parse_expr(text)
    if not isinstance(v, tuple) or not all(isinstance(p, tuple) and len(p) == 2 and isinstance(p[0], ShapeDesc) for p in v):
        raise ValueError("pieces must be a list of (shape, value) pairs")
    return [(p[0], float(p[1])) for p in v]


SCHEMA = {
    "scenario": {"name": _str, "kind": _str, "description": _str},
    "grid": {"dim": lambda t: int(_number(t)), "origin": _numbers, "extent": _number, "levels": _ints},
    "domain": {"omega": parse_shape},
    "datum": {
        "type": _str,
        "value": _number,
        "shape": parse_shape,
        "center": _numbers,
        "radius": _number,
        "height": _number,
        "quantize": lambda t: int(_number(t)),
        "pieces": _pieces,
        "default": _number,
    },
    "kernel": {"s": _numbers, "r_trunc": _number, "near_rule": _str},
    "solver": {
        "threshold_rule": _str,
        "verify_trials": lambda t: int(_number(t)),
        "eps": _number,
        "tol": _number,
        "max_iter": lambda t: int(_number(t)),
        "smoothed_levels": _ints,
    },
    "diagnostics": {
        "continuity": _bool,
        "curvature": _bool,
        "curvature_rho": _number,
        "curvature_margin": _number,
        "tail_radius": _number,
        "thresholds": _numbers,
        "dumbbell": _bool,
        "probe_threshold": _number,
    },
    "perimeter": {"set": parse_shape, "reference": parse_shape, "scale": _number},
    "alpha": {"set": parse_shape, "expected": _number, "radius": _number},
    "curvature": {"set": parse_shape},
    "battery": {"seeds": lambda t: int(_number(t)), "cells": lambda t: int(_number(t)), "inner": lambda t: int(_number(t))},
    "checks": None,  # free-form, validated per kind
}

KINDS = {
    "solve": {
        "constant_solution",
        "zero_energy",
        "max_principle",
        "nested",
        "coarea",
        "minimality",
        "zero_in_omega",
        "nonzero_in_omega",
        "boundary_jump",
        "strict_inclusion",
        "dumbbell_identities",
        "dumbbell_strict",
        "interior_discontinuity",
        "boundary_discontinuity",
        "smoothed_energy",
        "curvature_decrease",
        "midpoint_identical",
    },
    "perimeter_ratio": {"ratio_power"},
    "alpha": {"alpha"},
    "curvature": {"zero_curvature", "antisymmetry"},
    "oracle_battery": {"oracle_match"},
    "random_battery": {"max_principle", "comparison"},
}

REQUIRED = {
    "solve": [("grid", "origin"), ("grid", "extent"), ("grid", "levels"), ("domain", "omega"), ("datum", "type"), ("kernel", "r_trunc")],
    "perimeter_ratio": [("grid", "origin"), ("grid", "extent"), ("grid", "levels"), ("perimeter", "set"), ("perimeter", "reference"), ("kernel", "r_trunc")],
    "alpha": [("grid", "origin"), ("grid", "extent"), ("grid", "levels"), ("alpha", "set")],
    "curvature": [("grid", "origin"), ("grid", "extent"), ("grid", "levels"), ("curvature", "set"), ("domain", "omega"), ("kernel", "r_trunc")],
    "oracle_battery": [("battery", "seeds")],
    "random_battery": [("battery", "seeds")],
}


@dataclass
class Scenario:
    name: str
    kind: str
    path: str
    sections: dict
    checks: dict
    description: str = ""

    def get(self, section: str, key: str, default=None):
        return self.sections.get(section, {}).get(key, default)

    @property
    def s_list(self) -> list[float]:
        return list(self.get("kernel", "s", []))

    @property
    def levels(self) -> list[int]:
        return list(self.get("grid", "levels", []))

    def grid(self, cells: int) -> GridSpec:
        return GridSpec(int(self.get("grid", "dim", 2)), tuple(self.get("grid", "origin")), self.get("grid", "extent"), cells)


def _line_of(text: str, section: str, key: str | None) -> int:
    cur = None
    for no, line in enumerate(text.splitlines(), 1):
        m = re.match(r"\s*\[([^\]]+)\]", line)
        if m:
            cur = m.group(1).strip()
            if key is None and cur == section:
                return no
            continue
        if cur == section and key is not None:
            m = re.match(r"\s*([^=:#;\s]+)\s*[=:]", line)
            if m and m.group(1).strip().lower() == key.lower():
                return no
    return 0


def load_scenario(path) -> Scenario:
    """Parse and validate a scenario file."""
    path = str(path)
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read: {exc}") from exc
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    def fail(section, key, msg):
        line = _line_of(text, section, key)
        where = f"[{section}]" + (f" {key}" if key else "")
        raise ConfigError(f"{path}:{line}: {where}: {msg}")

    sections: dict = {}
    checks: dict = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            fail(sec, None, "unknown section")
        for key, raw in cp.items(sec):
            if sec == "checks":
                checks[key] = raw.strip()
                continue
            conv = SCHEMA[sec].get(key)
            if conv is None:
                fail(sec, key, "unknown key")
            try:
                sections.setdefault(sec, {})[key] = conv(raw)
            except (ValueError, TypeError, SyntaxError) as exc:
                fail(sec, key, str(exc))
    name = sections.get("scenario", {}).get("name")
    kind = sections.get("scenario", {}).get("kind")
    if not name:
        fail("scenario", "name", "missing")
    if not re.fullmatch(r"[A-Za-z0-9_.-]+", name):
        fail("scenario", "name", "use letters, digits, '_', '-' or '.'")
    if kind not in KINDS:
        fail("scenario", "kind", f"unknown kind {kind!r}; expected one of {sorted(KINDS)}")
    for sec, key in REQUIRED[kind]:
        if key not in sections.get(sec, {}):
            fail(sec, key, "missing required key")
    for key in checks:
        if key not in KINDS[kind]:
            fail("checks", key, f"unknown check for kind {kind!r}")
    for s in sections.get("kernel", {}).get("s", []):
        if not 0 < s < 1:
            fail("kernel", "s", f"order {s} outside (0, 1)")
    if "near_rule" in sections.get("kernel", {}):
        try:
            check_near_rule(sections["kernel"]["near_rule"])
        except ValueError as exc:
            fail("kernel", "near_rule", str(exc))
    rule = sections.get("solver", {}).get("threshold_rule", "data_levels")
    if rule not in ("data_levels", "midpoint"):
        fail("solver", "threshold_rule", f"unknown rule {rule!r}")
    if kind == "solve":
        dtype = sections["datum"]["type"]
        need = {"constant": ["value"], "indicator": ["shape"], "bump": ["center", "radius", "height"], "piecewise": ["pieces"]}
        if dtype not in need:
            fail("datum", "type", f"unknown datum type {dtype!r}")
        for key in need[dtype]:
            if key not in sections["datum"]:
                fail("datum", key, f"required for datum type {dtype!r}")
    for lv in sections.get("grid", {}).get("levels", []):
        if lv < 2:
            fail("grid", "levels", "need at least 2 cells per axis")
    sc = Scenario(name, kind, path, sections, checks, sections.get("scenario", {}).get("description", ""))
    try:
        for lv in sc.levels[:1]:
            sc.grid(lv)
    except ValueError as exc:
        fail("grid", None, str(exc))
    return sc


# ---------------------------------------------------------------------------
# data


def datum_field(sc: Scenario, grid: GridSpec, omega: CellSet) -> ScalarField:
    d = sc.sections["datum"]
    typ = d["type"]
    c = grid.centers()
    if typ == "constant":
        return ScalarField.constant(grid, omega, d["value"])
    if typ == "indicator":
        shape = d["shape"]
        v = d.get("value", 1.0)
        far = shape.far_field(grid.dim)
        if far.kind == "cone":
            raise ConfigError(f"{sc.path}: indicator datum needs a bounded shape or its complement")
        return ScalarField(grid, omega, v * shape.contains(c), v if far.kind == "full" else 0.0)
    if typ == "bump":
        ctr = np.asarray(d["center"], float)
        vals = d["height"] * np.clip(1.0 - np.linalg.norm(c - ctr, axis=-1) / d["radius"], 0.0, None)
        q = d.get("quantize", 0)
        if q > 0:
            vals = np.round(vals / d["height"] * q) / q * d["height"]
        return ScalarField(grid, omega, vals, 0.0)
    if typ == "piecewise":
        default = d.get("default", 0.0)
        vals = np.full(grid.shape, default)
        done = np.zeros(grid.shape, bool)
        for shape, v in d["pieces"]:
            if not shape.far_field(grid.dim).is_empty:
                raise ConfigError(f"{sc.path}: piecewise datum needs bounded pieces")
            m = shape.contains(c) & ~done
            vals[m] = v
            done |= m
        return ScalarField(grid, omega, vals, default)
    raise ConfigError(f"unknown datum type {typ!r}")


# ---------------------------------------------------------------------------
# output helpers


def _fmt(x) -> str:
    return "%.12g" % x


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def write_json(path: Path, data) -> None:
    path.write_text(json.dumps(_jsonable(data), sort_keys=True, indent=2) + "\n")


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(_fmt(v) if isinstance(v, (float, np.floating)) else str(v) for v in r))
    path.write_text("\n".join(lines) + "\n")


def field_rows(sol) -> tuple[list[str], list[list]]:
    g = sol.u_max.grid
    om = sol.u_max.omega.mask
    idx = np.argwhere(om)
    c = g.centers()[om]
    umax = sol.u_max.omega_values
    umin = sol.u_min.omega_values
    if g.dim == 1:
        header = ["i", "x", "u_max", "u_min"]
        rows = [[int(i[0]), float(p[0]), float(a), float(b)] for i, p, a, b in zip(idx, c, umax, umin)]
    else:
        header = ["i", "j", "x", "y", "u_max", "u_min"]
        rows = [[int(i[0]), int(i[1]), float(p[0]), float(p[1]), float(a), float(b)] for i, p, a, b in zip(idx, c, umax, umin)]
    return header, rows


def instance_dir(out: Path, sc: Scenario, s, level) -> Path:
    d = out / sc.name / (_fmt(s) if s is not None else "none") / str(level)
    d.mkdir(parents=True, exist_ok=True)
    return d


# ---------------------------------------------------------------------------
# runners


def _solve_instance(sc: Scenario, s: float, level: int, out: str, seed: int) -> dict:
    g = sc.grid(level)
    omega = rasterize(sc.get("domain", "omega"), g)
    omega = CellSet(g, omega.mask)
    phi = datum_field(sc, g, omega)
    kt = build_kernel(g, omega, sc.get("kernel", "r_trunc"), s, sc.get("kernel", "near_rule", "tent"))
    rule = sc.get("solver", "threshold_rule", "data_levels")
    trials = sc.get("solver", "verify_trials", 8)
    sol = solve_sminimal(phi, kt, rule, verify=trials > 0, trials=max(trials, 1), seed=seed)
    checks = sc.checks
    summ: dict = {
        "scenario": sc.name,
        "s": s,
        "cells_per_axis": level,
        "h": g.h,
        "omega_cells": omega.count,
        "r_trunc": kt.r_trunc,
        "near_rule": kt.near_rule,
        "threshold_rule": rule,
        "thresholds": sol.thresholds,
        "energy_max": sol.energy_max,
        "energy_min": sol.energy_min,
        "coarea_max": sol.coarea_sum("max"),
        "coarea_min": sol.coarea_sum("min"),
        "cut_values": sol.per_level_cut_values,
        "gap": sol.gap,
        "nested": nestedness_check(sol),
        "bounds": bounds_check(sol, kt.ring),
        "boundary_jump": boundary_jump(sol.u_max),
        "interior_osc": interior_oscillation(sol.u_max),
        "u_max_range": [float(sol.u_max.omega_values.min()), float(sol.u_max.omega_values.max())],
        "u_min_range": [float(sol.u_min.omega_values.min()), float(sol.u_min.omega_values.max())],
    }
    if sol.verification:
        summ["verification"] = {k: v for k, v in sol.verification.items() if k != "witness"}
    tr = sc.get("diagnostics", "tail_radius")
    if tr:
        summ["tail_norm"] = tail_norm(phi, kt, tr)
    probe = sc.get("diagnostics", "probe_threshold", 0.5)
    E = (sol.u_max.values >= probe) & omega.mask
    summ["probe"] = {"t": probe, "set_cells_in_omega": int(E.sum()), "omega_cells": omega.count}
    if sc.get("diagnostics", "dumbbell", False):
        summ["dumbbell"] = _dumbbell_terms(g, omega, kt)
    if "midpoint_identical" in checks and rule != "midpoint":
        alt = solve_sminimal(phi, kt, "midpoint", verify=False)
        summ["midpoint_identical"] = bool(
            np.array_equal(alt.u_max.values, sol.u_max.values) and np.array_equal(alt.u_min.values, sol.u_min.values)
        )
    if sc.get("diagnostics", "curvature", False):
        margin = sc.get("diagnostics", "curvature_margin", 0.0)
        rho = sc.get("diagnostics", "curvature_rho")
        prof = curvature_profile(sol.max_sets[-1], omega, rho, kt, margin=margin)
        summ["curvature"] = {"samples": len(prof.samples), "residual": prof.residual, "rho": rho if rho else 2 * g.h}
        curv_csv = prof.to_csv()
    else:
        curv_csv = None
    if level in sc.get("solver", "smoothed_levels", []):
        sm = solve_smoothed(
            phi,
            kt,
            eps=sc.get("solver", "eps", 1e-3),
            tol=sc.get("solver", "tol", 1e-6),
            max_iter=sc.get("solver", "max_iter", 20000),
        )
        e = energy(sm.field, kt)
        summ["smoothed"] = {
            "energy": e,
            "cut_energy": sol.energy_max,
            "rel_diff": abs(e - sol.energy_max) / max(abs(sol.energy_max), 1e-300),
            "converged": sm.converged,
            "iterations": sm.iterations,
            "eps": sm.eps,
            "grad_norm": sm.grad_norm,
        }
        sm_field = sm.field
    else:
        sm_field = None
    d = instance_dir(Path(out), sc, s, level)
    header, rows = field_rows(sol)
    write_csv(d / "field.csv", header, rows)
    write_json(d / "summary.json", summ)
    ts = sol.thresholds
    pick = np.unique(np.linspace(0, len(ts) - 1, min(len(ts), 8)).round().astype(int))
    for k in pick:
        (d / f"sets_t{_fmt(ts[k])}.txt").write_text(sol.max_sets[k].to_text())
    if curv_csv is not None:
        (d / "curvature.csv").write_text(curv_csv)
    if sm_field is not None:
        om = omega.mask
        rows = [[*map(int, i), float(v)] for i, v in zip(np.argwhere(om), sm_field.values[om])]
        write_csv(d / "smoothed.csv", [*"ij"[: g.dim], "u"], rows)
    return {"summary": summ, "u_max": sol.u_max, "phi": phi}


def _dumbbell_terms(g: GridSpec, omega: CellSet, kt) -> dict:
    s = kt.s
    K = rasterize(G.dumbbell_K(), g)
    B1 = rasterize(G.ball((0, 0), 1), g)
    B2 = rasterize(G.ball((0, 0), 2), g)
    per_in = {name: perimeter_in(X, omega, kt).total for name, X in (("B1", B1), ("K", K), ("B2", B2))}
    L = interaction(K, ~B2, kt)
    whole = {}
    for name, X in (("B1", B1), ("K", K)):
        whole[name] = perimeter_whole(X, build_kernel(g, X, kt.r_trunc, s, kt.near_rule))
    ident = {name: abs(per_in[name] - (whole[name] - L)) / abs(per_in[name]) for name in ("B1", "K")}
    return {
        "per_in_omega": per_in,
        "per_whole": whole,
        "L_K_outside_B2": L,
        "identity_rel_error": ident,
        "strict_margin": min(per_in["K"], per_in["B2"]) - per_in["B1"],
        "whole_ratio_K_B1": whole["K"] / whole["B1"],
    }


def _perimeter_instance(sc: Scenario, s: float, level: int, out: str, seed: int) -> dict:
    g = sc.grid(level)
    E = rasterize(sc.get("perimeter", "set"), g)
    F = rasterize(sc.get("perimeter", "reference"), g)
    omega = CellSet(g, E.mask | F.mask)
    kt = build_kernel(g, omega, sc.get("kernel", "r_trunc"), s, sc.get("kernel", "near_rule", "tent"))
    pE = perimeter_whole(E, kt)
    pF = perimeter_whole(F, kt)
    lam = sc.get("perimeter", "scale")
    summ = {
        "scenario": sc.name,
        "s": s,
        "cells_per_axis": level,
        "h": g.h,
        "per_set": pE,
        "per_reference": pF,
        "ratio": pE / pF,
    }
    if lam is not None:
        summ["expected"] = lam ** (g.dim - s)
        summ["rel_error"] = abs(summ["ratio"] / summ["expected"] - 1)
    d = instance_dir(Path(out), sc, s, level)
    write_json(d / "summary.json", summ)
    return {"summary": summ}


def _alpha_instance(sc: Scenario, level: int, out: str) -> dict:
    g = sc.grid(level)
    E0 = rasterize(sc.get("alpha", "set"), g)
    est = alpha_bar(E0, sc.s_list, sc.get("alpha", "radius"))
    summ = {
        "scenario": sc.name,
        "cells_per_axis": level,
        "h": g.h,
        "alpha_smallest_s": est.value,
        "alpha_extrapolated": est.extrapolated,
        "sequence": [[s, v] for s, v in est.sequence],
        "monotone": est.monotone,
    }
    exp = sc.get("alpha", "expected")
    if exp is not None:
        summ["expected"] = exp
        summ["rel_error"] = abs(est.value / exp - 1) if exp else abs(est.value)
    d = instance_dir(Path(out), sc, min(sc.s_list), level)
    write_json(d / "summary.json", summ)
    return {"summary": summ}


def _curvature_instance(sc: Scenario, s: float, level: int, out: str, seed: int) -> dict:
    g = sc.grid(level)
    E = rasterize(sc.get("curvature", "set"), g)
    omega = CellSet(g, rasterize(sc.get("domain", "omega"), g).mask)
    kt = build_kernel(g, omega, sc.get("kernel", "r_trunc"), s, sc.get("kernel", "near_rule", "tent"))
    rho = sc.get("diagnostics", "curvature_rho")
    prof = curvature_profile(E, omega, rho, kt)
    comp = curvature_profile(~E, omega, rho, kt)
    anti = len(prof.samples) == len(comp.samples) and all(
        a.point == b.point and a.value == -b.value for a, b in zip(prof.samples, comp.samples)
    )
    zero_ok = all(abs(c.value) <= c.pv_pairing_error for c in prof.samples)
    summ = {
        "scenario": sc.name,
        "s": s,
        "cells_per_axis": level,
        "samples": len(prof.samples),
        "residual": prof.residual,
        "max_pv_error": max((c.pv_pairing_error for c in prof.samples), default=0.0),
        "antisymmetric": anti,
        "within_pairing_error": zero_ok,
    }
    d = instance_dir(Path(out), sc, s, level)
    write_json(d / "summary.json", summ)
    (d / "curvature.csv").write_text(prof.to_csv())
    return {"summary": summ}


def _run_instance(args):
    kind, sc, s, level, out, seed = args
    if kind == "solve":
        return _solve_instance(sc, s, level, out, seed)
    if kind == "perimeter_ratio":
        return _perimeter_instance(sc, s, level, out, seed)
    if kind == "curvature":
        return _curvature_instance(sc, s, level, out, seed)
    raise ValueError(kind)


def _map(fn, items, jobs: int):
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


# ---------------------------------------------------------------------------
# checks


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _tol(raw: str, default: float) -> float:
    r = raw.strip().lower()
    if r in ("true", "yes", "on"):
        return default
    return float(parse_expr(r))


def _solve_checks(sc: Scenario, results: dict) -> list[CheckResult]:
    out = []
    summaries = [(s, lv, r["summary"]) for (s, lv), r in sorted(results.items())]

    def each(name, ok_fn, detail_fn):
        bad = [(s, lv) for s, lv, m in summaries if not ok_fn(m)]
        details = "; ".join(f"s={_fmt(s)} n={lv}: {detail_fn(m)}" for s, lv, m in summaries)
        out.append(CheckResult(name, not bad, details))

    for name, raw in sc.checks.items():
        if name == "constant_solution":
            c = sc.get("datum", "value")
            each(name, lambda m: m["u_max_range"] == [c, c] and m["u_min_range"] == [c, c],
                 lambda m: f"u_max in {m['u_max_range']}, u_min in {m['u_min_range']}")
        elif name == "zero_energy":
            each(name, lambda m: m["energy_max"] == 0.0 and m["energy_min"] == 0.0,
                 lambda m: f"energy {_fmt(m['energy_max'])}")
        elif name == "max_principle":
            each(name, lambda m: m["bounds"]["ok"], lambda m: f"{_fmt(m['bounds']['u_min'])}..{_fmt(m['bounds']['u_max'])} within {_fmt(m['bounds']['datum_min'])}..{_fmt(m['bounds']['datum_max'])}")
        elif name == "nested":
            each(name, lambda m: m["nested"], lambda m: str(m["nested"]))
        elif name == "coarea":
            tol = _tol(raw, 1e-9)
            rel = lambda m: abs(m["energy_max"] - m["coarea_max"]) / max(abs(m["energy_max"]), 1e-300) if m["energy_max"] else abs(m["coarea_max"])
            each(name, lambda m: rel(m) <= tol, lambda m: f"rel {rel(m):.3g}")
        elif name == "minimality":
            each(name, lambda m: m.get("verification", {}).get("verdict") == "minimal",
                 lambda m: f"worst margin {_fmt(m.get('verification', {}).get('worst_margin', float('nan')))}")
        elif name == "zero_in_omega":
            each(name, lambda m: m["u_max_range"] == [0.0, 0.0] and m["u_min_range"] == [0.0, 0.0],
                 lambda m: f"u_max in {m['u_max_range']}")
        elif name == "nonzero_in_omega":
            each(name, lambda m: m["u_max_range"][1] > 0, lambda m: f"max u_max {_fmt(m['u_max_range'][1])}")
        elif name == "boundary_jump":
            target = float(parse_expr(raw))
            each(name, lambda m: abs(m["boundary_jump"] - target) <= 1e-12, lambda m: f"jump {_fmt(m['boundary_jump'])}")
        elif name == "strict_inclusion":
            each(name, lambda m: 0 < m["probe"]["set_cells_in_omega"] < m["probe"]["omega_cells"],
                 lambda m: f"|E in omega| = {m['probe']['set_cells_in_omega']} of {m['probe']['omega_cells']}")
        elif name == "dumbbell_identities":
            tol = _tol(raw, 0.02)
            err = lambda m: max(m["dumbbell"]["identity_rel_error"].values())
            each(name, lambda m: err(m) <= tol, lambda m: f"rel {err(m):.3g}")
        elif name == "dumbbell_strict":
            each(name, lambda m: m["dumbbell"]["strict_margin"] > 0, lambda m: f"margin {_fmt(m['dumbbell']['strict_margin'])}")
        elif name in ("interior_discontinuity", "boundary_discontinuity", "curvature_decrease"):
            pass  # ladder checks below
        elif name == "smoothed_energy":
            tol = _tol(raw, 0.02)
            sm = [(s, lv, m["smoothed"]) for s, lv, m in summaries if "smoothed" in m]
            ok = bool(sm) and all(x["rel_diff"] <= tol and x["converged"] for _, _, x in sm)
            out.append(CheckResult(name, ok, "; ".join(
                f"s={_fmt(s)} n={lv}: rel {x['rel_diff']:.3g}, converged={x['converged']}, iters={x['iterations']}" for s, lv, x in sm
            ) or "no smoothed levels configured"))
        elif name == "midpoint_identical":
            each(name, lambda m: m.get("midpoint_identical", True), lambda m: str(m.get("midpoint_identical")))
    # ladder checks, per s
    for name in ("interior_discontinuity", "boundary_discontinuity", "curvature_decrease"):
        if name not in sc.checks:
            continue
        parts = []
        ok = True
        for s in sorted({s for s, _ in results}):
            lv = sorted(lv for ss, lv in results if ss == s)
            if name == "curvature_decrease":
                res = [results[(s, v)]["summary"]["curvature"]["residual"] for v in lv]
                good = len(res) >= 3 and all(b < a for a, b in zip(res[:-1], res[1:]))
                parts.append(f"s={_fmt(s)}: residuals {[float('%.6g' % r) for r in res]}")
            else:
                rep = results[(s, lv[0])]["ladder"]
                verdict = rep["verdict_interior"] if name == "interior_discontinuity" else rep["verdict_boundary"]
                key = "interior_osc" if name == "interior_discontinuity" else "boundary_jump"
                good = verdict == "discontinuity_detected"
                parts.append(f"s={_fmt(s)}: {key} {[float('%.6g' % v) for v in rep[key]]} -> {verdict}")
            ok &= good
        out.append(CheckResult(name, ok, "; ".join(parts)))
    return out


def run_scenario(path, out="out", seed: int = 0, jobs: int = 1) -> tuple[int, list[CheckResult]]:
    """Run a scenario file; returns ``(exit_status, check_results)``."""
    sc = load_scenario(path)
    out = str(out)
    base = Path(out) / sc.name
    base.mkdir(parents=True, exist_ok=True)
    checks: list[CheckResult] = []
    report: dict = {"scenario": sc.name, "kind": sc.kind, "seed": seed}
    if sc.kind in ("solve", "perimeter_ratio", "curvature"):
        items = [(sc.kind, sc, s, lv, out, seed) for s in sc.s_list for lv in sc.levels]
        res = _map(_run_instance, items, jobs)
        results = {(it[2], it[3]): r for it, r in zip(items, res)}
        if sc.kind == "solve":
            if sc.get("diagnostics", "continuity", False):
                for s in sc.s_list:
                    lv = sorted(sc.levels)
                    if len(lv) >= 3:
                        rep = continuity_report(
                            [results[(s, v)]["u_max"] for v in lv],
                            [results[(s, v)]["phi"] for v in lv],
                            thresholds=sc.get("diagnostics", "thresholds"),
                        )
                        d = rep.as_dict()
                        d["levelset_collisions"] = len(d["levelset_collisions"])
                        results[(s, lv[0])]["ladder"] = d
                        write_json(base / _fmt(s) / "continuity.json", d)
            checks = _solve_checks(sc, results)
        elif sc.kind == "perimeter_ratio":
            tol = _tol(sc.checks.get("ratio_power", "0.03"), 0.03)
            errs = [(s, lv, r["summary"]) for (s, lv), r in sorted(results.items())]
            if "ratio_power" in sc.checks:
                ok = all(m["rel_error"] <= tol for _, _, m in errs)
                checks.append(CheckResult("ratio_power", ok, "; ".join(f"s={_fmt(s)} n={lv}: ratio {m['ratio']:.6g} vs {m['expected']:.6g} (rel {m['rel_error']:.3g})" for s, lv, m in errs)))
        else:
            rows = [(s, lv, r["summary"]) for (s, lv), r in sorted(results.items())]
            if "zero_curvature" in sc.checks:
                checks.append(CheckResult("zero_curvature", all(m["within_pairing_error"] for _, _, m in rows),
                                          "; ".join(f"s={_fmt(s)} n={lv}: max|H| {m['residual']:.3g}, pv error {m['max_pv_error']:.3g}" for s, lv, m in rows)))
            if "antisymmetry" in sc.checks:
                checks.append(CheckResult("antisymmetry", all(m["antisymmetric"] for _, _, m in rows),
                                          "; ".join(f"s={_fmt(s)} n={lv}: {m['antisymmetric']}" for s, lv, m in rows)))
    elif sc.kind == "alpha":
        rows = [_alpha_instance(sc, lv, out)["summary"] for lv in sc.levels] if sc.s_list else []
        if "alpha" in sc.checks:
            tol = _tol(sc.checks["alpha"], 0.02)
            ok = bool(rows) and all(m["rel_error"] <= tol for m in rows)
            checks.append(CheckResult("alpha", ok, "; ".join(
                f"n={m['cells_per_axis']}: alpha(s={_fmt(min(sc.s_list))}) = {m['alpha_smallest_s']:.6g}, extrapolated {m['alpha_extrapolated']:.6g}, expected {m['expected']:.6g} (rel {m['rel_error']:.3g})" for m in rows)))
    elif sc.kind == "oracle_battery":
        seeds = sc.get("battery", "seeds")
        r = oracle_battery(seeds, sc.s_list, seed0=seed)
        write_json(base / "battery.json", r)
        if "oracle_match" in sc.checks:
            checks.append(CheckResult("oracle_match", not r["failures"], f"{r['instances']} instances, {len(r['failures'])} mismatches, worst value rel diff {r['worst_rel_value']:.3g}"))
    elif sc.kind == "random_battery":
        r = _random_battery(sc, seed)
        write_json(base / "battery.json", r)
        for name in ("max_principle", "comparison"):
            if name in sc.checks:
                bad = r[name + "_failures"]
                checks.append(CheckResult(name, not bad, f"{r['instances']} instances, {len(bad)} failures"))
    for c in checks:
        report.setdefault("checks", {})[c.name] = {"passed": c.passed, "detail": c.detail}
    status = 0 if all(c.passed for c in checks) else 1
    report["status"] = "PASS" if status == 0 else "FAIL"
    write_json(base / "report.json", report)
    (base / "report.txt").write_text("".join(c.line() + "\n" for c in checks))
    return status, checks


def _random_battery(sc: Scenario, seed: int) -> dict:
    seeds = sc.get("battery", "seeds")
    cells = sc.get("battery", "cells", 12)
    inner = sc.get("battery", "inner", 6)
    mp_fail, cmp_fail = [], []
    n = 0
    for s in sc.s_list:
        for k in range(seeds):
            p1, p2, kt = random_instance(seed + k, s, cells, inner)
            a = solve_sminimal(p1, kt, trials=4, seed=seed + k)
            b = solve_sminimal(p2, kt, trials=4, seed=seed + k)
            n += 1
            for sol in (a, b):
                if not bounds_check(sol, kt.ring)["ok"]:
                    mp_fail.append({"s": s, "seed": seed + k})
            c = comparison_check(a, b)
            if c["verdict"] == "violated":
                cmp_fail.append({"s": s, "seed": seed + k, "worst": c["worst_violation"]})
    return {"instances": n, "max_principle_failures": mp_fail, "comparison_failures": cmp_fail}


# ---------------------------------------------------------------------------
# sweeps


SWEEP_COLUMNS = {
    "solve": ["energy_max", "energy_min", "gap", "boundary_jump", "interior_osc"],
    "perimeter_ratio": ["per_set", "per_reference", "ratio", "expected"],
    "curvature": ["residual", "max_pv_error"],
}


def sweep(path, axis: str, out="out", seed: int = 0, jobs: int = 1) -> Path:
    """One CSV row per axis value (``s`` at the finest level, or each resolution at the first s)."""
    if axis not in ("s", "resolution"):
        raise ValueError("axis must be 's' or 'resolution'")
    sc = load_scenario(path)
    base = Path(out) / sc.name
    base.mkdir(parents=True, exist_ok=True)
    target = base / f"sweep_{axis}.csv"
    if sc.kind == "alpha":
        header = ["s", "alpha"] if axis == "s" else ["cells", "alpha"]
        rows = []
        if sc.s_list and sc.levels:
            if axis == "s":
                g = sc.grid(max(sc.levels))
                E0 = rasterize(sc.get("alpha", "set"), g)
                from .perimeter import alpha_s

                rows = [[float(s), alpha_s(E0, s, sc.get("alpha", "radius"))] for s in sc.s_list]
            else:
                rows = [[lv, _alpha_instance(sc, lv, str(out))["summary"]["alpha_smallest_s"]] for lv in sc.levels]
        write_csv(target, header, rows)
        return target
    if sc.kind not in SWEEP_COLUMNS:
        raise ValueError(f"kind {sc.kind!r} has no sweep table")
    cols = SWEEP_COLUMNS[sc.kind]
    if axis == "s":
        pts = [(s, max(sc.levels)) for s in sc.s_list] if sc.levels else []
    else:
        pts = [(sc.s_list[0], lv) for lv in sc.levels] if sc.s_list else []
    items = [(sc.kind, sc, s, lv, str(out), seed) for s, lv in pts]
    res = _map(_run_instance, items, jobs)
    header = ["s", "cells"] + cols
    rows = [[float(s), lv] + [r["summary"].get(c, float("nan")) for c in cols] for (s, lv), r in zip(pts, res)]
    write_csv(target, header, rows)
    return target
