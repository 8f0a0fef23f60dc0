"""End-to-end acceptance criteria, d = 1, at their stated tolerances.

Each test prints one PASS/FAIL line; the lines are repeated in the terminal
summary.
"""
import hashlib

import numpy as np
import pytest

from sharplab.constructions import bernoulli_moment_closed_form, bernoulli_moment_enumerated
from sharplab.experiments import default_config, results_csv, run_scenario, sobolev_control_corpus
from sharplab.grid_core import Grid, GridFunction, lp_norm
from sharplab.mixed_norms import linear_fit
from sharplab.operators import MultiplierSpec, apply_multiplier

pytestmark = pytest.mark.acceptance


def test_01_moment_oracle(acceptance_report):
    worst = 0.0
    exact_first = True
    for L in range(1, 13):
        for a in (0.1, 0.5, 0.9):
            for r in (0.5, 1.0, 2.0, 3.0):
                e = bernoulli_moment_enumerated(L, a, r)
                worst = max(worst, abs(bernoulli_moment_closed_form(L, a, r) - e) / e)
            exact_first &= bernoulli_moment_closed_form(L, a, 1) == L * a
    acceptance_report("1 moment oracle", worst <= 1e-12 and exact_first,
                      f"max rel err {worst:.2e}, first moment exact {exact_first}")


def test_02_uniformity(acceptance_report):
    res = run_scenario(default_config("uniformity"))
    lhs = [r.lhs_mean for r in res.records]
    spread = res.extras["lhs_spread"]
    acceptance_report("2 uniformity in L", spread <= 2.0,
                      f"lhs {np.round(lhs, 3).tolist()} over L={res.config.sweep}, "
                      f"spread {spread:.3f} (<= 2)")


def test_03_peetre_sharpness(acceptance_report):
    low = run_scenario(default_config("peetre", sigma=0.5))
    crit = run_scenario(default_config("peetre", sigma=1.0))
    s = low.slope
    ok_low = abs(s.slope - 0.5) <= 0.15 and s.r_squared >= 0.9
    lin = crit.slope
    ok_crit = lin.slope > 0 and lin.r_squared >= 0.85
    acceptance_report("3 Peetre sharpness", ok_low and ok_crit,
                      f"sigma=0.5 slope {s.slope:.3f} r2 {s.r_squared:.3f} (0.5 +- 0.15, r2 >= 0.9); "
                      f"sigma=1 linear slope {lin.slope:.3f} r2 {lin.r_squared:.3f} (> 0, r2 >= 0.85)")


def test_04_deterministic_family(acceptance_report):
    low = run_scenario(default_config("deterministic", sigma=0.5))
    crit = run_scenario(default_config("deterministic", sigma=1.0))
    spread = max(low.extras["rhs_spread"], crit.extras["rhs_spread"])
    s = low.slope
    ok_low = abs(s.slope - 0.5) <= 0.15 and s.r_squared >= 0.9
    lin = crit.slope
    ok_crit = lin.slope > 0 and lin.r_squared >= 0.85
    support = low.extras["support_measure_exact"] and crit.extras["support_measure_exact"]
    acceptance_report("4 deterministic family", spread <= 3 and ok_low and ok_crit and support,
                      f"rhs spread {spread:.3f} (<= 3); sigma=0.5 ratio slope {s.slope:.3f} "
                      f"r2 {s.r_squared:.3f}; sigma=1 lhs linear slope {lin.slope:.3f} "
                      f"r2 {lin.r_squared:.3f}; support exact {support}")


def test_05_window_scaling(acceptance_report):
    parts, ok = [], True
    for q in (1.0, 2.0):
        res = run_scenario(default_config("window", p=q, q=q))
        lo, hi = 1 / q - 0.2, 1 / q + 0.1
        good = lo <= res.slope.slope <= hi
        ok &= good
        parts.append(f"q={q:g} slope {res.slope.slope:.3f} in [{lo:.2f}, {hi:.2f}]")
    acceptance_report("5 window scaling", ok, "; ".join(parts))


def test_06a_sobolev_control(acceptance_report):
    cfg = default_config("sobolev", sigma=1.5, control=True)
    out = sobolev_control_corpus(cfg, count=20)
    acceptance_report("6a Sobolev control corpus", out["spread"] <= 3,
                      f"ratio in [{out['min']:.3f}, {out['max']:.3f}], spread {out['spread']:.3f} (<= 3)")


def test_06b_sobolev_growth(acceptance_report):
    parts, ok = [], True
    for sigma in (0.75, 1.0):
        res = run_scenario(default_config("sobolev", sigma=sigma))
        ratio = [r.ratio_mean for r in res.records]
        inc = res.extras["ratio_strictly_increasing"]
        ok &= inc
        parts.append(f"sigma={sigma:g} ratios {np.round(ratio, 3).tolist()} increasing {inc}")
    acceptance_report("6b Sobolev truncated growth", ok, "; ".join(parts))


def test_07_bochner_riesz(acceptance_report):
    lam_c = 1 * (1 / 0.8 - 0.5) - 0.5
    above = run_scenario(default_config("bochner-riesz", lam=lam_c + 0.3))
    below = run_scenario(default_config("bochner-riesz", lam=lam_c - 0.3))
    last = above.extras["increments"][-1]
    rate = below.slope.slope
    tails = []
    for res in (above, below):
        got, want = res.extras["tail_fit"]["slope"], res.extras["tail_expected"]
        tails.append((got, want, abs(got - want) <= 0.2))
    ok = last < 0.02 and rate > 0 and all(t[2] for t in tails)
    tail_txt = ", ".join(f"{g:.3f} vs {w:.3f}" for g, w, _ in tails)
    acceptance_report("7 Bochner-Riesz criticality", ok,
                      f"last increment {100 * last:.2f}% (< 2%) above; log-rate {rate:.3f} (> 0) "
                      f"below; tail exponents {tail_txt} (+- 0.2)")


def test_08_oscillatory(acceptance_report):
    res = run_scenario(default_config("oscillatory"))
    rhs = res.extras["rhs_slope"]["slope"]
    lhs = res.extras["lhs_slope"]["slope"]
    g = Grid(1, 12)
    rng = np.random.default_rng(0)
    f = GridFunction(g, rng.standard_normal(g.n) + 1j * rng.standard_normal(g.n))
    Tf = apply_multiplier(MultiplierSpec.oscillatory(0.5, 0.0), f)
    iso = abs(lp_norm(Tf, 2) / lp_norm(f, 2) - 1)
    ok = abs(rhs - 0.5) <= 0.15 and abs(lhs - 1.0) <= 0.15 and iso <= 1e-10
    acceptance_report("8 oscillatory slopes", ok,
                      f"rhs slope {rhs:.3f} (0.5 +- 0.15), lhs slope {lhs:.3f} (1 +- 0.15), "
                      f"isometry err {iso:.1e}")


def test_09_plancherel_polya(acceptance_report):
    res = run_scenario(default_config("pp"))
    drift = res.extras["band_drift"]
    acceptance_report("9 Plancherel-Polya stability", drift <= 2,
                      f"constant ratio drift {drift:.3f} (<= 2) over ell={res.config.sweep}")


DETERMINISM_CONFIGS = {
    "peetre": dict(J=12, sweep=[1, 2, 3], trials=3),
    "uniformity": dict(J=10, sweep=[4, 16, 64], trials=3),
    "deterministic": dict(J=14, sweep=[2, 3, 4], trials=3, samples=5000),
    "window": dict(J=11, sweep=[0, 1, 2, 3], trials=2),
    "sobolev": dict(J=14, sweep=[1, 2, 3], trials=2, k_cap=3),
    "bochner-riesz": dict(J=16, sweep=[3, 4, 5, 6], tail_J=18),
    "oscillatory": dict(sweep=[4, 8, 16], trials=2, samples=1000),
    "pp": dict(),
}


def test_10_determinism(acceptance_report):
    mismatched = []
    for scenario, overrides in DETERMINISM_CONFIGS.items():
        cfg = default_config(scenario, seed=11, **overrides)
        digests = [hashlib.sha256(results_csv(run_scenario(cfg)).encode()).hexdigest()
                   for _ in range(2)]
        if digests[0] != digests[1]:
            mismatched.append(scenario)
    acceptance_report("10 determinism", not mismatched,
                      f"{len(DETERMINISM_CONFIGS)} scenarios rerun, checksum mismatches: "
                      f"{mismatched or 'none'}")
