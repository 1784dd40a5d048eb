"""Acceptance checks, one test per criterion.

Each test records a PASS/FAIL line; the lines are printed in the terminal
summary (see conftest.py) and by ``python3 tests/test_acceptance.py``.
"""

import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from qsdpert import bounds, chain, diffusion, logistic, spectral


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_spectral_reproduction():
    expected = {(2, 0): (0.4879, 0.003), (2, 1): (1.8501, 0.003),
                (10, 0): (0.4999, 0.003), (10, 1): (1.9984, 0.003),
                (40, 0): (0.49999, 0.002), (40, 1): (1.99842, 0.003)}
    start = time.perf_counter()
    got = {key: spectral.find_eigenvalue(float(key[0]), key[1]) for key in expected}
    elapsed = time.perf_counter() - start
    errs = {k: abs(got[k] - v) for k, (v, _) in expected.items()}
    ok = all(errs[k] <= tol for k, (_, tol) in expected.items()) and elapsed < 30
    detail = ", ".join(f"lam{n}(M={M})={got[(M, n)]:.6f}" for M, n in expected)
    report("spectral reproduction", ok, f"{detail}; max |err|={max(errs.values()):.2e}; "
                                        f"{elapsed:.1f}s")


def test_delta_admissibility(eig):
    d2 = eig(2.0, 1) - 0.5
    d10 = eig(10.0, 1) - 0.5
    assert spectral.delta_separation(2.0) == d2
    report("delta admissibility", d2 >= 1.3 and d10 >= 1.4,
           f"delta(2)={d2:.6f} >= 1.3, delta(10)={d10:.6f} >= 1.4")


def test_ou_constants():
    c = bounds.ou_constants(1.3)
    ok = abs(c.c3 - 25.624) <= 0.01 and abs(c.M_min - 2.79) <= 0.01
    report("OU constants", ok, f"c3={c.c3:.4f} (25.624), M_min={c.M_min:.4f} (2.79)")


def test_eigenvalue_monotonicity(eig):
    Ms = (2.0, 5.0, 10.0, 20.0, 40.0)
    tol = spectral.EigenSolveConfig.for_M(2.0).root_abs_tol
    lam1 = [eig(M, 1) for M in Ms]
    lam0 = [eig(M, 0) for M in Ms]
    ok = (all(b >= a - 2 * tol for a, b in zip(lam1, lam1[1:]))
          and max(lam1) <= 2.0 + 2 * tol and max(lam0) < 0.5)
    report("eigenvalue monotonicity", ok,
           f"lam1={[f'{v:.10f}' for v in lam1]}, max lam0 - 0.5={max(lam0) - 0.5:.2e}")


def test_finite_dimensional_certification():
    start = time.perf_counter()
    worst = {"weyl": math.inf, "main": math.inf, "dk": math.inf}
    for i in range(200):
        dim = 2 + i % 7
        inst = bounds.finite_dim_oracle(dim, seed=i)
        assert inst.pert.h_opnorm < inst.gap.nu / 2
        h = inst.pert.h_opnorm
        worst["weyl"] = min(worst["weyl"], min(h - abs(s) for s in inst.exact_eigval_shifts))
        d = inst.exact_eigvec_dist
        worst["main"] = min(worst["main"], bounds.eigenfunction_bound(inst.gap, inst.pert) - d)
        worst["dk"] = min(worst["dk"],
                          bounds.davis_kahan_bound(inst.gap, inst.pert.h_phi_norm) - d)
    elapsed = time.perf_counter() - start
    ok = min(worst.values()) >= -1e-10 and elapsed < 10
    report("finite-dimensional bounds", ok,
           "min slack " + ", ".join(f"{k}={v:.3e}" for k, v in worst.items())
           + f"; 200 instances in {elapsed:.1f}s")


def test_chain_tv_bound_exact():
    start = time.perf_counter()
    worst, failures = math.inf, 0
    for i in range(100):
        base, tilde = chain.random_pair(2 + i % 5, seed=i, max_diff=0.05)
        rep = chain.verify_prop1(base, tilde, 50)
        if rep.truncated_at is not None or not rep.all_satisfied:
            failures += 1
        worst = min(worst, min(rep.margins))
    elapsed = time.perf_counter() - start
    report("chain TV bound exact", failures == 0 and elapsed < 10,
           f"{failures} failing pairs, min margin {worst:.4f}, {elapsed:.2f}s")


def test_simulation_vs_exact_chain():
    tvs = []
    for i in range(10):
        c = chain.random_chain(2 + i % 5, seed=1000 + i, kappa_range=(0.02, 0.15))
        exact = chain.conditional_distribution(c, 20)
        sample = chain.simulate_chain(c, 20, 1_000_000, seed=i, threads=4)
        tvs.append(chain.tv_distance(sample.distribution, exact))
    report("chain simulation vs exact", max(tvs) <= 0.01,
           f"max TV {max(tvs):.4f} over 10 chains (n=20, 1e6 paths)")


def test_kappa_from_target():
    grid = np.linspace(-5.0, 5.0, 1001)
    log_pi, A = diffusion.TARGETS["ou"]
    res = diffusion.kappa_from_target(log_pi, A, grid, fd_step=1e-4)
    dev = float(np.max(np.abs(res.kappa - grid ** 2)))
    report("kappa from target", dev <= 1e-4 and abs(res.K - 0.5) <= 1e-4,
           f"max |kappa - y^2|={dev:.2e}, K={res.K:.8f}")


def test_qsd_simulation(eig):
    start = time.perf_counter()
    curve = diffusion.survival_curve(diffusion.DiffusionSpec.ou(),
                                     diffusion.KillingSpec.truncated_quadratic(10.0),
                                     T=10.0, dt=0.01, n_particles=100_000, seed=2024,
                                     n_checkpoints=20)
    hist = diffusion.qsd_estimate(curve.ensemble, 60, (-3.0, 3.0))
    l1 = diffusion.l1_vs_gaussian(hist, 0.0, 0.5)
    elapsed = time.perf_counter() - start
    lam0 = eig(10.0, 0)
    rate_ok = abs(curve.rate - lam0) <= 0.05
    ok = l1 <= 0.05 and rate_ok and elapsed < 120
    report("QSD simulation", ok,
           f"L1={l1:.3f} (<= 0.05: {l1 <= 0.05}) from {hist.n_samples} survivors; "
           f"rate={curve.rate:.4f} vs lam0={lam0:.4f} (ok: {rate_ok}); {elapsed:.1f}s")


def test_hm_phi0_norm():
    Ms = (2.0, 5.0, 10.0, 20.0, 40.0)
    at0 = bounds.hm_phi0_norm(0.0)
    grid = np.linspace(0.0, 40.0, 81)
    vals = [bounds.hm_phi0_norm(M) for M in grid]
    mono = all(b <= a for a, b in zip(vals, vals[1:]))
    chain_ok = all(bounds.hm_phi0_norm(M) ** 2 <= bounds.hm_phi0_proof_bound(M) for M in Ms)
    # diagnostic only: certified sqrt(2)||H_M phi0||/delta next to the c2 e^{-M} rate
    c2 = bounds.ou_constants(1.3).c2
    diag = "; ".join(f"M={M:g}: {bounds.truncation_eigfun_bound(1.3, bounds.hm_phi0_norm(M)):.2e}"
                     f" vs c2e^-M={c2 * math.exp(-M):.2e}" for M in (2.0, 10.0))
    ok = abs(at0 - 3 ** -0.5) <= 1e-8 and mono and chain_ok
    report("hm_phi0_norm", ok, f"|h(0) - 3^-1/2|={abs(at0 - 3 ** -0.5):.1e}, nonincreasing={mono}, "
                               f"proof chain={chain_ok}; diagnostic {diag}")


def test_logistic_suite():
    data = logistic.synthetic_dataset(20, 2, 11)
    grid = logistic.make_grid(-5, 5, 51, 2)
    field = logistic.KappaField.calibrated(data, grid)
    nonneg = bool(np.all(field.on_grid() >= 0.0))

    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n, d = int(rng.integers(1, 15)), int(rng.integers(1, 4))
        X = rng.standard_normal((n, d)) * rng.uniform(0.1, 3)
        y = rng.integers(0, 2, n).astype(float)
        x = rng.standard_normal(d) * 2
        ds = logistic.Dataset(X, y)
        p = [1 / (1 + math.exp(-sum(X[i, j] * x[j] for j in range(d)))) for i in range(n)]
        first = sum(sum((y[i] - p[i]) * X[i, j] for i in range(n)) ** 2 for j in range(d))
        second = sum(p[i] * (1 - p[i]) * X[i, j] ** 2 for i in range(n) for j in range(d))
        ref = 0.5 * (first - second)
        worst = max(worst, abs(logistic.kappa_raw(x, ds) - ref) / max(1.0, abs(ref)))

    def flip_run():
        base = logistic.synthetic_dataset(30, 2, 99)
        b = logistic.KappaField.calibrated(base, grid)
        p = logistic.KappaField.calibrated(logistic.perturb_labels(base, [7]), grid)
        return logistic.sup_diff(b, p)

    r1, r2 = flip_run(), flip_run()
    ok = nonneg and worst <= 1e-12 and r1.hex() == r2.hex()
    report("logistic suite", ok, f"kappa >= 0 on grid={nonneg}, dual max rel diff={worst:.1e}, "
                                 f"flip sup_diff={r1!r} reproducible={r1.hex() == r2.hex()}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
