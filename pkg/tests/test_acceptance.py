"""Acceptance criteria 1-10, one test each.

Every test records a single PASS/FAIL line (printed in the pytest terminal
summary) and then asserts the same condition. Tolerances and runtime budgets
are fixed here.
"""

import math
import time
import warnings

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from sg_lab import bounds as bnd
from sg_lab.errors import DegenerateWeights
from sg_lab.estimator import estimation_error, run_regression
from sg_lab.experiment import design_for, parse_config, run_experiment, simulate_direct, track_transition
from sg_lab.schedule import factorial_schedule
from sg_lab.spectral import spectral_norm
from sg_lab.transition import TransitionTracker, product_oracle

BOUND_TOL = 1e-9
CERT_TOL = 1e-10
INTEGRAL_RTOL = 1e-9
SCALAR_TOL = 1e-12


def record(num, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {num}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def _random_normalized(rng, m, n):
    phis = rng.normal(size=(n, m)) * np.exp(rng.uniform(-3, 2, size=(n, 1)))
    rs = 1.0 + np.cumsum(np.sum(phis**2, axis=1))
    return phis, rs, bnd.normalize(phis, rs)


def test_criterion_1_norm_bound_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240101)
    instances, violations, worst = 0, 0, -np.inf
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWeights)
        for _ in range(600):
            m = int(rng.integers(1, 6))
            n = int(rng.integers(1, 201))
            _, rs, phis = _random_normalized(rng, m, n)
            k = int(rng.integers(0, n))
            exact = spectral_norm(product_oracle(phis, np.ones(n), k, n)) ** 2
            for w in (bnd.WeightScheme.unit(n), bnd.WeightScheme.r_weighted(rs)):
                rep = bnd.theorem_bound(phis, w, k, n, exact_norm_sq=exact)
                instances += 1
                worst = max(worst, rep.exact_norm_sq - rep.bound_value)
                violations += rep.exact_norm_sq > rep.bound_value + BOUND_TOL
    dt = time.perf_counter() - t0
    ok = instances >= 1000 and violations == 0 and dt < 30
    record(1, ok, f"{instances} instances, {violations} violations, max(exact - bound) = {worst:.3g}, {dt:.1f} s")
    assert ok


def test_criterion_2_certificate_suite():
    # the identity is checked in the recursion-consistent form v = (I + C) u
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    instances, failures = 0, {"identity": 0, "quadratic_form": 0, "norm_bound": 0, "energy": 0}
    for _ in range(500):
        m = int(rng.integers(1, 6))
        n = int(rng.integers(1, 41))
        _, rs, phis = _random_normalized(rng, m, n)
        k = int(rng.integers(0, n))
        w = bnd.WeightScheme.r_weighted(rs) if rng.random() < 0.5 else bnd.WeightScheme.unit(n)
        cert = bnd.certificate(phis, w, rng.normal(size=m), k, n)
        instances += 1
        for name, passed in cert.checks(CERT_TOL).items():
            failures[name] += not passed
    dt = time.perf_counter() - t0
    ok = instances >= 500 and not any(failures.values()) and dt < 30
    record(2, ok, f"{instances} instances, failures {failures}, {dt:.1f} s")
    assert ok


def test_criterion_3_integral_estimate():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    instances, failures, tightest = 0, 0, 0.0
    for _ in range(500):
        m = int(rng.integers(1, 6))
        n = int(rng.integers(2, 201))
        raw, rs, _ = _random_normalized(rng, m, n)
        k = int(rng.integers(1, n))
        chk = bnd.integral_estimate_check(raw, rs, k, n)
        instances += 1
        failures += not (chk.lhs <= chk.rhs + INTEGRAL_RTOL * (1 + abs(chk.rhs)))
        if chk.rhs > 0:
            tightest = max(tightest, chk.lhs / chk.rhs)
    dt = time.perf_counter() - t0
    ok = instances >= 500 and failures == 0 and dt < 30
    record(3, ok, f"{instances} instances, {failures} failures, max lhs/rhs = {tightest:.4f}, {dt:.1f} s")
    assert ok


def test_criterion_4_factorial_schedule():
    t0 = time.perf_counter()
    n = 100_000
    rs = np.arange(1, n + 2, dtype=float)
    sched = factorial_schedule(rs)
    exact = sched.t == [math.factorial(k) - 1 for k in range(1, sched.k_max + 1)]
    certs = all(c.passed for c in sched.ratio_certs)
    dt = time.perf_counter() - t0
    ok = exact and certs and sched.k_max == 8 and dt < 5
    record(4, ok, f"t = {sched.t}, K_max = {sched.k_max}, ratio certificates {'all pass' if certs else 'FAIL'}, "
                  f"l = {sched.l_const:g}, {dt:.2f} s")
    assert ok


def test_criterion_5_main_theorem_ledger():
    t0 = time.perf_counter()
    alpha = 0.5
    phis = design_for(parse_config({"horizon": 100_000, "excitation": {"dim": 2, "alpha": alpha}}))
    rs = 1.0 + np.arange(len(phis), dtype=float)
    sched = factorial_schedule(rs)
    M = bnd.envelope_constant(phis, rs, alpha, sched)
    ledger = bnd.main_theorem_ledger(phis, rs, sched, alpha, M, k_min=3)
    failed = [(r.block, r.name) for r in ledger if not r.passed]
    skipped = [(r.block, r.name) for r in ledger if not r.applicable]
    rows = bnd.criterion_partial_sums(phis, rs, sched, "general-mu")
    c_lo, c_hi = bnd.summand_rate_fit(rows, alpha, k_min=5)
    dt = time.perf_counter() - t0
    ok = not failed and not skipped and c_lo > 0 and sched.k_max >= 5 and dt < 120
    record(5, ok, f"{len(ledger)} ledger lines over k = 3..{sched.k_max}, failed {failed}, not applicable {skipped}; "
                  f"term_k k^0.5 (log k)^1.5 in [{c_lo:.3f}, {c_hi:.3f}] on k = 5..{sched.k_max} (c = {c_lo:.3f}); "
                  f"M = {M:.3f}, {dt:.1f} s")
    assert ok


THETA_C6 = [[0.3], [0.3]]


def test_criterion_6_convergence_regime():
    t0 = time.perf_counter()
    parts, ok = [], True
    for alpha in (0.0, 0.3, 0.5, 0.8):
        base = {"horizon": 100_000, "stride": 100, "excitation": {"dim": 2, "alpha": alpha}, "theta": THETA_C6}
        cfg = parse_config({**base, "noise": {"kind": "zero"}})
        data = simulate_direct(cfg)
        series, _ = track_transition(data.phis, data.rs, cfg.stride)
        norms = np.array([v for _, _, v in series])
        mono = bool(np.all(np.diff(norms) <= 1e-12)) and norms[-1] < norms[0]
        final_phi = norms[-1]
        errs = []
        for seed in range(20):
            noisy = parse_config({**base, "seed": seed, "noise": {"kind": "bounded-uniform", "c0": 0.01}})
            errs.append(simulate_direct(noisy).final_theta_err)
        hits = sum(e < 0.1 for e in errs)
        this = mono and final_phi < 0.2 and hits >= 18
        ok &= this
        parts.append(f"alpha={alpha}: ||Phi(N,0)||={final_phi:.4f} monotone={mono} err<0.1 in {hits}/20 "
                     f"(max {max(errs):.4f})")
    dt = time.perf_counter() - t0
    ok &= dt < 300
    record(6, ok, "; ".join(parts) + f"; {dt:.1f} s")
    assert ok


def test_criterion_7_divergence_regime():
    # evidence for the alpha > 1 regime, not a proof; terms decay like c / (k^2 (log k)^3), so K_max = 9 stays above 1e-4
    t0 = time.perf_counter()
    cfg = parse_config({"horizon": 1_000_000, "stride": 1000, "excitation": {"dim": 2, "alpha": 2.0},
                        "noise": {"kind": "zero"}})
    phis = design_for(cfg)
    rs = 1.0 + np.arange(len(phis), dtype=float)
    sched = factorial_schedule(rs)
    rows = bnd.criterion_partial_sums(phis, rs, sched, "general-mu")
    last = rows[-1].term
    series, _ = track_transition(phis, rs, cfg.stride)
    norm_at = {n: v for n, _, v in series}
    plateau = norm_at[1_000_000] >= 0.5 * norm_at[1000]
    dt = time.perf_counter() - t0
    ok = last < 1e-4 and plateau and dt < 300
    record(7, ok, f"final increment (k={rows[-1].k}) = {last:.3g} (need < 1e-4), partial sum = {rows[-1].partial_sum:.4f}; "
                  f"||Phi(1e6,0)|| = {norm_at[1_000_000]:.4f} vs ||Phi(1e3,0)|| = {norm_at[1000]:.4f} "
                  f"(plateau {'holds' if plateau else 'fails'}); {dt:.1f} s")
    assert ok


def test_criterion_8_scalar_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 300))
        energies = rng.exponential(size=n) * rng.uniform(0, 3)
        phis = np.sqrt(energies)[:, None]
        rs = 1.0 + np.cumsum(energies)
        t = TransitionTracker.start(1)
        for phi, r in zip(phis, rs):
            t.step(phi, r)
        oracle = np.prod(1.0 - energies / rs)
        worst = max(worst, abs(t.exact_norm(0) - oracle))
    dt = time.perf_counter() - t0
    ok = worst <= SCALAR_TOL and dt < 5
    record(8, ok, f"100 sequences, max |tracked - prod(1 - a_i)| = {worst:.3g}, {dt:.2f} s")
    assert ok


def test_criterion_9_pe_baseline():
    t0 = time.perf_counter()
    n, errs = 100_000, []
    for seed in range(20):
        rng = np.random.default_rng(seed)
        phis = rng.choice((-1.0, 1.0), size=(n + 1, 1))
        w = rng.uniform(-1.0, 1.0, size=(n, 1)) * math.sqrt(3 * 0.01)
        run = run_regression(phis, 2.0 * phis[:-1] + w, [[2.0]])
        errs.append(estimation_error(run.theta, [[2.0]]))
    hits = sum(e < 0.05 for e in errs)
    dt = time.perf_counter() - t0
    ok = hits >= 18 and dt < 60
    record(9, ok, f"final error < 0.05 in {hits}/20 seeds (median {np.median(errs):.2e}, max {max(errs):.2e}), {dt:.1f} s")
    assert ok


@pytest.mark.parametrize("doc", [
    {"horizon": 20_000, "stride": 100, "seed": 11, "excitation": {"alpha": 0.5},
     "noise": {"kind": "gaussian", "c0": 0.01}, "emit": {"trace": True}},
    {"mode": "armax", "horizon": 5000, "stride": 50, "seed": 4, "noise": {"c0": 0.1},
     "system": {"A": [[[-0.5]]], "B": [[[1.0]]], "C": [[[0.3]]]}, "emit": {"trace": True}},
], ids=["direct", "armax"])
def test_criterion_10_determinism(doc, tmp_path):
    cfg = parse_config(doc)
    run_experiment(cfg, tmp_path / "a")
    run_experiment(parse_config(doc), tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    differing = [n for n in names if (tmp_path / "a" / n).read_bytes() != (tmp_path / "b" / n).read_bytes()]
    ok = len(names) >= 8 and not differing
    record(10, ok, f"{cfg.mode}: {len(names)} CSVs compared, {len(differing)} differ {differing}")
    assert ok
