import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from qsdpert import logistic
from qsdpert.errors import AssumptionViolated, DomainError
from qsdpert.logistic import Dataset, KappaField


def kappa_loops(x, X, y):
    """Independent loop evaluation of the raw killing rate."""
    n, d = len(X), len(x)
    p = []
    for i in range(n):
        z = sum(X[i][j] * x[j] for j in range(d))
        p.append(1 / (1 + math.exp(-z)) if z >= 0 else math.exp(z) / (1 + math.exp(z)))
    first = 0.0
    second = 0.0
    for j in range(d):
        g = sum((y[i] - p[i]) * X[i][j] for i in range(n))
        first += g * g
        second += sum(p[i] * (1 - p[i]) * X[i][j] ** 2 for i in range(n))
    return 0.5 * (first - second)


def small_dataset(seed):
    rng = np.random.default_rng(seed)
    n, d = rng.integers(1, 15), rng.integers(1, 4)
    X = rng.standard_normal((n, d)) * rng.uniform(0.1, 3)
    y = rng.integers(0, 2, n).astype(float)
    return Dataset(X, y), rng


def test_dataset_validation():
    with pytest.raises(DomainError):
        Dataset([[1.0, 2.0]], [2])
    with pytest.raises(DomainError):
        Dataset([[np.nan]], [1])
    with pytest.raises(DomainError):
        Dataset([[1.0], [2.0]], [1])


def test_predict_p_examples():
    assert logistic.predict_p([0.0, 0.0], [1.0, -2.0]) == 0.5
    assert logistic.predict_p([1.0], [1e4]) == pytest.approx(1.0, abs=1e-12)
    assert logistic.predict_p([1.0], [-1e4]) == pytest.approx(0.0, abs=1e-12)
    x, row = np.array([0.3, -1.2]), np.array([2.0, 0.5])
    assert logistic.predict_p(x, row) == pytest.approx(1 / (1 + math.exp(-(row @ x))), abs=1e-14)
    with pytest.raises(DomainError):
        logistic.predict_p([1.0], [1.0, 2.0])


@given(st.floats(-700, 700), st.floats(0.0, 5.0))
def test_predict_p_range_and_monotone(z, dz):
    p, q = logistic.predict_p([z], [1.0]), logistic.predict_p([z + dz], [1.0])
    assert 0.0 <= p <= q <= 1.0
    if abs(z) < 30:
        assert 0.0 < p < 1.0


def test_kappa_raw_examples():
    assert logistic.kappa_raw([0.0], Dataset([[1.0]], [1])) == 0.0
    data = Dataset(np.eye(2), [1.0, 0.0])
    assert logistic.kappa_raw_many(np.zeros((5, 2)), data).shape == (5,)
    with pytest.raises(DomainError):
        logistic.kappa_raw([0.0, 1.0, 2.0], data)


def test_kappa_raw_balanced_point_is_nonpositive():
    # identical rows with opposite labels: the gradient term cancels at x = 0
    X = np.array([[1.0], [1.0]])
    data = Dataset(X, [1.0, 0.0])
    assert logistic.kappa_raw([0.0], data) == pytest.approx(-0.5 * 2 * 0.25)


@pytest.mark.parametrize("seed", range(100))
def test_kappa_raw_dual_implementation(seed):
    data, rng = small_dataset(seed)
    for _ in range(3):
        x = rng.standard_normal(data.d) * 2
        want = kappa_loops(x.tolist(), data.X.tolist(), data.y.tolist())
        assert abs(logistic.kappa_raw(x, data) - want) <= 1e-12 * max(1.0, abs(want))


def test_calibration():
    data = logistic.synthetic_dataset(20, 2, 0)
    grid = logistic.make_grid(-5, 5, 51, 2)
    field = KappaField.calibrated(data, grid)
    scan = min(kappa_loops(g.tolist(), data.X.tolist(), data.y.tolist()) for g in grid)
    assert field.Phi == pytest.approx(scan, abs=1e-10)
    vals = field.on_grid()
    assert vals.min() == 0.0 and np.all(vals >= 0.0)
    single = KappaField.calibrated(data, grid[:1])
    assert single.on_grid().tolist() == [0.0]
    with pytest.raises(DomainError):
        logistic.calibrate_phi(data, np.empty((0, 2)))


def test_perturb_labels():
    data = logistic.synthetic_dataset(10, 2, 4)
    assert np.array_equal(logistic.perturb_labels(data, []).y, data.y)
    flipped = logistic.perturb_labels(data, [3])
    assert flipped.y[3] == 1 - data.y[3]
    assert np.array_equal(np.delete(flipped.y, 3), np.delete(data.y, 3))
    assert np.array_equal(logistic.perturb_labels(flipped, [3]).y, data.y)
    with pytest.raises(DomainError):
        logistic.perturb_labels(data, [10])


def fields(seed, grid):
    data = logistic.synthetic_dataset(20, 2, seed)
    flips = np.random.default_rng(seed).integers(0, 20, 2)
    return (KappaField.calibrated(data, grid),
            KappaField.calibrated(logistic.perturb_labels(data, flips), grid))


def test_sup_diff_examples():
    grid = logistic.make_grid(-3, 3, 21, 2)
    base, pert = fields(1, grid)
    assert logistic.sup_diff(base, base) == 0.0
    one = KappaField.calibrated(logistic.perturb_labels(base.dataset, [0]), grid)
    assert 0 < logistic.sup_diff(base, one) < math.inf
    X = base.dataset.X.copy()
    X[0, 0] += 1e-6
    nudged = KappaField.calibrated(Dataset(X, base.dataset.y), grid)
    assert logistic.sup_diff(base, nudged) <= 1e-3
    other = KappaField.calibrated(base.dataset, logistic.make_grid(-3, 3, 11, 2))
    with pytest.raises(DomainError):
        logistic.sup_diff(base, other)


@given(st.integers(0, 10 ** 6), st.integers(0, 10 ** 6), st.integers(0, 10 ** 6))
def test_sup_diff_is_a_pseudometric(a, b, c):
    grid = logistic.make_grid(-2, 2, 9, 2)
    fa, fb, fc = (KappaField.calibrated(logistic.synthetic_dataset(8, 2, s), grid) for s in (a, b, c))
    ab, ba = logistic.sup_diff(fa, fb), logistic.sup_diff(fb, fa)
    assert ab == ba
    assert logistic.sup_diff(fa, fa) == 0.0
    ac, bc = logistic.sup_diff(fa, fc), logistic.sup_diff(fb, fc)
    assert ac <= ab + bc + 1e-12 * max(1.0, ab + bc)


def test_robustness_report():
    grid = logistic.make_grid(-3, 3, 21, 2)
    base, pert = fields(2, grid)
    same = logistic.robustness_report(base, base, 1.0)
    assert (same.sup_diff, same.main_bound, same.dk_bound, same.assumption_ok) == (0, 0, 0, True)
    h = logistic.sup_diff(base, pert)
    big = logistic.robustness_report(base, pert, nu=4 * h)
    assert big.main_bound == pytest.approx(h / (4 * h - 2 * h))
    assert big.dk_bound == pytest.approx(2 * math.sqrt(2) * h / (4 * h))
    assert big.grid_points == len(grid)
    with pytest.raises(AssumptionViolated) as info:
        logistic.robustness_report(base, pert, nu=h)
    assert info.value.condition == "||H|| < nu/2"
    soft = logistic.robustness_report(base, pert, nu=h, strict=False)
    assert not soft.assumption_ok and math.isnan(soft.main_bound)
    with pytest.raises(DomainError):
        logistic.robustness_report(base, pert, nu=0.0)


def test_one_label_flip_is_bit_reproducible():
    grid = logistic.make_grid(-4, 4, 31, 2)

    def run():
        data = logistic.synthetic_dataset(30, 2, 123)
        b = KappaField.calibrated(data, grid)
        p = KappaField.calibrated(logistic.perturb_labels(data, [5]), grid)
        return logistic.sup_diff(b, p)

    assert run().hex() == run().hex()


def test_load_csv(tmp_path):
    path = tmp_path / "d.csv"
    path.write_text("1,0.5,2\n0,-1,3\n")
    data = logistic.load_csv(path)
    assert data.y.tolist() == [1.0, 0.0] and data.X.shape == (2, 2)
