"""Acceptance suite: the full shipped scenario set, run twice.

Each test re-derives its verdict from the files written by ``run_scenario``
and records one ``CRITERION n PASS/FAIL`` line, printed in the terminal summary.
"""

import json
import time
from pathlib import Path

import pytest

from conftest import CRITERIA
from sminimal.scenario import run_scenario

SHIPPED = Path(__file__).resolve().parents[1] / "src" / "sminimal" / "scenarios"
TIME_LIMIT = 120.0  # seconds per scenario

COAREA_TOL = 1e-9  # coarea relative tolerance
RATIO_TOL = 0.03
IDENTITY_TOL = 0.02
ALPHA_TOL = 0.02
SMOOTHED_TOL = 0.02


@pytest.fixture(scope="session")
def runs(tmp_path_factory):
    out = {}
    for tag in ("A", "B"):
        root = tmp_path_factory.mktemp(f"run{tag}")
        status, elapsed = {}, {}
        for cfg in sorted(SHIPPED.glob("*.cfg")):
            t0 = time.perf_counter()
            code, _ = run_scenario(cfg, out=root)
            elapsed[cfg.stem] = time.perf_counter() - t0
            status[cfg.stem] = code
        out[tag] = (root, status, elapsed)
    return out


@pytest.fixture(scope="session")
def root(runs):
    return runs["A"][0]


def load(root, *parts):
    return json.loads(root.joinpath(*parts).read_text())


def summaries(root, scenario):
    return {
        (float(p.parts[-3]), int(p.parts[-2])): json.loads(p.read_text())
        for p in sorted((root / scenario).glob("*/*/summary.json"))
    }


def record(n, ok, detail):
    CRITERIA[n] = (bool(ok), detail)
    assert ok, detail


def test_criterion_01_oracle_equivalence(root):
    b = load(root, "oracle_battery", "battery.json")
    ok = b["instances"] == 300 and not b["failures"]
    record(1, ok, f"{b['instances']} instances (100 seeds x 3 s), {len(b['failures'])} mismatches")


def test_criterion_02_constant_datum(root):
    parts, ok = [], True
    for name, c in (("constant_datum_neg", -1.0), ("constant_datum_zero", 0.0), ("constant_datum", 5.0)):
        for key, m in summaries(root, name).items():
            good = (
                m["u_max_range"] == [c, c]
                and m["u_min_range"] == [c, c]
                and m["energy_max"] == 0.0
                and m["energy_min"] == 0.0
            )
            ok &= good
        parts.append(f"c={c:g}: {len(summaries(root, name))} instances")
    record(2, ok, "u == c and energy == 0 exactly; " + ", ".join(parts))


def test_criterion_03_maximum_principle(root):
    b = load(root, "random_battery", "battery.json")
    ok = b["instances"] == 100 and not b["max_principle_failures"]
    record(3, ok, f"{b['instances']} random instances, {len(b['max_principle_failures'])} violations")


def test_criterion_04_comparison_principle(root):
    b = load(root, "random_battery", "battery.json")
    ok = b["instances"] == 100 and not b["comparison_failures"]
    record(4, ok, f"{b['instances']} ordered pairs, {len(b['comparison_failures'])} violations")


def test_criterion_05_nested_and_coarea(root):
    worst, count, nested = 0.0, 0, True
    for rep in sorted(root.glob("*/report.json")):
        for key, m in summaries(root, rep.parent.name).items():
            if "coarea_max" not in m:
                continue
            count += 1
            nested &= m["nested"]
            for side in ("max", "min"):
                e, c = m[f"energy_{side}"], m[f"coarea_{side}"]
                worst = max(worst, abs(e - c) / max(abs(e), 1e-300) if e else abs(c))
    ok = count > 0 and nested and worst <= COAREA_TOL
    record(5, ok, f"{count} solves, all nested={nested}, worst coarea rel {worst:.3g}")


def test_criterion_06_scaling_law(root):
    rows = summaries(root, "perimeter_ratio")
    want = [(s, n) for s in (0.3, 0.5, 0.9) for n in (96, 128, 160)]
    missing = [k for k in want if k not in rows]
    errs = {k: rows[k]["rel_error"] for k in want if k in rows}
    for (s, _), m in ((k, rows[k]) for k in errs):
        assert m["expected"] == pytest.approx(2 ** (2 - s), rel=1e-12)
    worst = max(errs.values())
    ok = not missing and worst <= RATIO_TOL
    record(6, ok, f"Per(B2)/Per(B1) vs 2^(2-s), s in (0.3,0.5,0.9) x 3 levels, worst rel {worst:.3g}")


def test_criterion_07_dumbbell(root):
    rows = summaries(root, "dumbbell")
    m = rows[(0.9, 128)]
    d = m["dumbbell"]
    probe = m["probe"]
    a = d["strict_margin"] > 0
    b = 0 < probe["set_cells_in_omega"] < probe["omega_cells"]
    c = max(d["identity_rel_error"].values()) <= IDENTITY_TOL
    cont = load(root, "dumbbell", "0.9", "continuity.json")
    osc = cont["interior_osc"]
    dd = cont["verdict_interior"] == "discontinuity_detected" and len(osc) == 3 and all(o == 1.0 for o in osc)
    detail = (
        f"128^2: margin {d['strict_margin']:.4g}, |E in omega| {probe['set_cells_in_omega']} of "
        f"{probe['omega_cells']}, identity rel {max(d['identity_rel_error'].values()):.2g}, "
        f"interior osc {osc} -> {cont['verdict_interior']}"
    )
    record(7, a and b and c and dd, detail)


def test_criterion_08_stickiness(root):
    rows = summaries(root, "stickiness")
    zero = all(m["u_max_range"] == [0.0, 0.0] and m["u_min_range"] == [0.0, 0.0] for m in rows.values())
    jumps = [m["boundary_jump"] for _, m in sorted(rows.items())]
    contrast = summaries(root, "stickiness_contrast")[(0.9, 63)]
    peak = contrast["u_max_range"][1]
    ok = zero and all(j == 1.0 for j in jumps) and peak > 0
    record(8, ok, f"s=0.1: u == 0 in omega at {len(rows)} levels, jump {jumps}; s=0.9 contrast max u {peak:.4g}")


def test_criterion_09_alpha(root):
    parts, ok = [], True
    for name, expected in (("alpha_halfplane", 3.141592653589793), ("alpha_quarter", 1.5707963267948966)):
        m = next(iter(summaries(root, name).values()))
        assert m["sequence"][-1][0] == 0.05
        rel = abs(m["alpha_smallest_s"] - expected) / expected
        ok &= m["expected"] == pytest.approx(expected, rel=1e-15) and rel <= ALPHA_TOL
        parts.append(f"{name.split('_')[1]} {m['alpha_smallest_s']:.6g} (rel {rel:.2g})")
    record(9, ok, "s=0.05: " + ", ".join(parts))


def test_criterion_10_curvature(root):
    half = summaries(root, "curvature_halfplane").values()
    zero = all(m["within_pairing_error"] for m in half)
    anti = all(m["antisymmetric"] for m in half)
    rows = summaries(root, "dumbbell")
    res = [m["curvature"]["residual"] for _, m in sorted(rows.items())]
    mono = all(b < a for a, b in zip(res, res[1:]))
    detail = (
        f"half-plane H=0 within pairing error: {zero}; antisymmetry: {anti}; "
        f"dumbbell residual {[round(r, 4) for r in res]} decreasing: {mono}"
    )
    record(10, zero and anti and mono, detail)


def test_criterion_11_cross_solver(root):
    parts, ok = [], True
    for name in ("dumbbell", "stickiness"):
        for (s, n), m in sorted(summaries(root, name).items()):
            sm = m.get("smoothed")
            if not sm:
                continue
            rel = abs(sm["energy"] - m["energy_max"]) / m["energy_max"]
            ok &= sm["eps"] == 1e-3 and rel <= SMOOTHED_TOL
            parts.append(f"{name} n={n}: rel {rel:.3g}")
    ok &= len(parts) == 2
    record(11, ok, "eps=1e-3; " + ", ".join(parts))


def test_criterion_12_determinism(runs):
    (ra, _, _), (rb, _, _) = runs["A"], runs["B"]
    fa = sorted(p.relative_to(ra) for p in ra.rglob("*") if p.is_file())
    fb = sorted(p.relative_to(rb) for p in rb.rglob("*") if p.is_file())
    diff = [f for f in fa if f in fb and (ra / f).read_bytes() != (rb / f).read_bytes()]
    ok = fa == fb and not diff
    record(12, ok, f"{len(fa)} files in each run, {len(diff)} differ, trees equal: {fa == fb}")


def test_scenario_time_budget(runs):
    _, status, elapsed = runs["A"]
    slow = {k: round(v, 1) for k, v in elapsed.items() if v > TIME_LIMIT}
    assert not slow, slow


def test_scenario_status_codes(runs):
    _, status, _ = runs["A"]
    # the dumbbell scenario carries the curvature-decrease check, which fails
    assert {k for k, v in status.items() if v} <= {"dumbbell"}
    assert runs["B"][1] == status
