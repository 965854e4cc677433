"""Acceptance criteria 1-11 on the shipped configurations.

Each experiment runs once per session through the same functions the
command line uses.  The tests re-derive every quantity from the report
payloads (tables and documents) and apply the stated tolerances here, so a
mistake in an experiment's own pass/fail logic cannot hide a failure.
Every criterion prints one PASS or FAIL line, repeated in the terminal
summary.
"""

import time
from pathlib import Path

import numpy as np
import pytest

from hodge_neck import cli
from hodge_neck.experiments import EXPERIMENTS, structural_suite

ROOT = Path(__file__).resolve().parents[1]
RESULTS = []

pytestmark = pytest.mark.slow


def config(name):
    return cli.parse_config((ROOT / "configs" / f"{name}.cfg").read_text(), name)


_RUNS = {}


def outcome(name):
    """(Outcome, seconds) for one experiment, computed once."""
    if name not in _RUNS:
        cfg = config(name)
        t0 = time.perf_counter()
        out = EXPERIMENTS[name](cfg, cfg["run"]["seed"])
        _RUNS[name] = (out, time.perf_counter() - t0, cfg)
    return _RUNS[name]


def table(out, name):
    header, rows = out.files[name][1]
    return {h: np.array([r[i] for r in rows], dtype=float) for i, h in enumerate(header)}


def doc(out, name):
    return out.files[name][1]


def rel(value, target):
    return abs(value - target) / abs(target)


def slope(x, y):
    return float(np.polyfit(np.asarray(x, float), np.log(np.abs(y)), 1)[0])


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_criterion_01_spectrum_ordering():
    out, secs, _ = outcome("spectrum")
    spec = table(out, "spectrum.csv")
    modes = table(out, "closed_modes.csv")
    low = spec["eigenvalue"][0]
    closed_min = spec["eigenvalue"][spec["closed_flag"] == 1].min()
    second = modes["eigenvalue"][modes["cluster"] == 1].mean()
    ok = (len(spec["eigenvalue"]) >= 20 and rel(low, 3) <= 0.05 and rel(closed_min, 4) <= 0.05
          and rel(second, 9) <= 0.07 and secs < 120)
    report(1, ok, f"lowest {low:.4f}, closed minimum {closed_min:.4f}, second closed cluster {second:.4f}, "
                  f"{secs:.0f} s (< 120 s)")


def test_criterion_02_reference_forms():
    out, _, _ = outcome("spectrum")
    d = doc(out, "reference_forms.json")
    rq = np.asarray(d["rayleigh"])
    sv = np.asarray(d["singular_values"])
    ok = bool(np.all(np.abs(rq - 4) <= 0.05 * 4) and sv.min() / sv.max() > 0.1)
    report(2, ok, f"Rayleigh quotients {np.round(rq, 4).tolist()}, singular ratio {sv.min() / sv.max():.3f}")


def test_criterion_03_neck_decay():
    out, _, cfg = outcome("neck-decay")
    levels = doc(out, "decay_summary.json")["levels"]
    dev = max(lv["max_ratio_deviation"] for lv in levels)
    lam3 = [lv["lambda_min"] for lv in levels if lv["level"] == 3][0]
    strict = True
    for lv in cfg["neck"]["levels"]:
        single = table(out, f"decay_level{lv}.csv")
        np.testing.assert_allclose(single["slice_norm_sq"] / single["slice_norm_sq"][0],
                                   np.exp(-2 * [x["lambda_min"] for x in levels if x["level"] == lv][0]
                                          * single["s"]), rtol=0, atol=1e-10)
        mixed = table(out, f"decay_mixed_level{lv}.csv")
        ratio = mixed["slice_norm_sq"] / mixed["slice_norm_sq"][0]
        pos = mixed["s"] > 0
        strict &= bool(np.all(ratio[pos] < mixed["sharp_bound"][pos]))
    ok = dev <= 1e-10 and rel(lam3, 2) <= 0.03 and strict
    report(3, ok, f"single-mode deviation {dev:.1e}, lambda_min {lam3:.4f} at level 3, mixed strictly below: {strict}")


def test_criterion_04_gluing_convergence():
    out, secs, _ = outcome("glue")
    sw = table(out, "glue_sweep.csv")
    s1, s12 = slope(sw["T"], sw["dist_u1"]), slope(sw["T"], sw["dist_u12"])
    contraction = doc(out, "glue_fits.json")["contraction"]
    spread = 0.0
    for vals in contraction.values():
        c = np.asarray(vals[1:])                # C_i for i >= 3
        spread = max(spread, float(np.max(np.abs(c / c.mean() - 1))))
    ok = rel(s1, -2) <= 0.10 and rel(s12, -4) <= 0.15 and spread <= 0.20 and secs < 600
    report(4, ok, f"slopes {s1:.4f} and {s12:.4f}, contraction spread {spread:.3f}, {secs:.0f} s (< 600 s)")


def test_criterion_05_mode2_dominance():
    out, _, _ = outcome("glue")
    fits = {f["quantity"]: -f["slope"] for f in doc(out, "glue_fits.json")["fits"] if f["quantity"].startswith("tail")}
    ok = all(e > 2 for e in fits.values()) and rel(fits["tail_level3"], 3) <= 0.15
    report(5, ok, ", ".join(f"{k} {v:.4f}" for k, v in sorted(fits.items())))


def test_criterion_06_blowup_algebra():
    out, _, _ = outcome("blowup-scaling")
    a = doc(out, "algebra.json")
    ok = (a["gram_error"] <= 1e-12 and a["pairing_error"] <= 1e-12 and a["asd_residual"] < 1e-8
          and a["length_variance"] < 1e-8 and a["lie_error"] <= 1e-6 and a["scaling_error"] <= 1e-6)
    report(6, ok, f"Gram {a['gram_error']:.1e}, pairing {a['pairing_error']:.1e}, ASD {a['asd_residual']:.1e}, "
                  f"length variance {a['length_variance']:.1e}, Lie {a['lie_error']:.1e}, "
                  f"scaling {a['scaling_error']:.1e}")


def test_criterion_07_blowup_period():
    out, _, cfg = outcome("blowup-scaling")
    sw = table(out, "blowup_sweep.csv")
    slopes, amps = [], []
    for a1 in cfg["blowup"]["a1_values"]:
        sel = sw["a1"] == a1
        T, per = sw["T"][sel], sw["period"][sel]
        k, b = np.polyfit(T, np.log(np.abs(per)), 1)
        slopes.append(k)
        amps.append(np.sign(per[0]) * np.exp(b) / (8 * a1))
    amps = np.array(amps)
    zero = sw["a1"] == 0
    c_fit = -slope(sw["T"][zero], sw["period"][zero])
    ok = (all(rel(k, -2) <= 0.10 for k in slopes) and np.all(amps > 0)
          and np.max(np.abs(amps / amps.mean() - 1)) <= 0.10 and c_fit > 2)
    report(7, ok, f"exponents {np.round(slopes, 4).tolist()}, A {', '.join('%.4e' % a for a in amps)}, c_fit {c_fit:.3f}")


def test_criterion_08_perturbation_formula():
    out, _, cfg = outcome("period-jacobian")
    t = table(out, "honda_vs_fd.csv")
    steps = np.asarray(cfg["jacobian"]["fd_steps"])
    orders, finest = [], []
    for axis in range(3):
        e = t["relative_error"][t["axis"] == axis]
        orders += list(np.log(e[:-1] / e[1:]) / np.log(steps[:-1] / steps[1:]))
        finest.append(e[-1])
    ok = bool(np.all(np.abs(np.array(orders) - 2) <= 0.2) and max(finest) < 1e-4)
    report(8, ok, f"orders {min(orders):.3f}..{max(orders):.3f}, finest relative error {max(finest):.2e}")


def test_criterion_09_jacobian():
    out, _, _ = outcome("period-jacobian")
    J = np.asarray(doc(out, "period_jacobian.json")["jacobian_near"])
    d = np.diag(J)
    off = np.max(np.abs(J - np.diag(d)) / np.abs(d)[:, None])
    cond = np.linalg.cond(J)
    ok = bool(np.all(d > 0) and off < 0.05 and cond < 20)
    report(9, ok, f"diagonal {np.round(d, 4).tolist()}, off-diagonal ratio {off:.4f}, condition {cond:.3f}")


def test_criterion_10_theorem_demo():
    out, secs, cfg = outcome("theorem-demo")
    d = doc(out, "theorem_demo.json")
    T = cfg["demo"]["decay_T"]
    res = np.array([d["residuals"][repr(float(t))] for t in T])
    per_unit = np.diff(np.log(res)) / np.diff(T)
    ok = bool(d["scaled_period"] < 1e-3 and np.all(per_unit <= -0.5) and secs < 900)
    report(10, ok, f"scaled period {d['scaled_period']:.2e} at T = {d['T']}, log residual change per unit T "
                   f"{np.round(per_unit, 3).tolist()}, {secs:.0f} s (< 900 s)")


def test_criterion_11_structure():
    cfg = config("period-jacobian")
    t0 = time.perf_counter()
    st = structural_suite(cfg)
    secs = time.perf_counter() - t0
    ok = (st["chain_defect"] == 0 and st["involution_defect"] <= 1e-10 and st["b2"] == 6 and st["b2_plus"] == 3
          and st["conformal_star_change"] <= 1e-10 and st["conformal_harmonic_angle"] <= 1e-10 and secs < 60)
    report(11, ok, f"d d {st['chain_defect']}, S^2 - I {st['involution_defect']:.1e}, b2 {st['b2']}, "
                   f"b2+ {st['b2_plus']}, conformal {st['conformal_star_change']:.1e}, {secs:.1f} s (< 60 s)")
