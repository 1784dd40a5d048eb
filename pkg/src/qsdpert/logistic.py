"""Killing rate for Bayesian logistic regression driven by Brownian motion.

With drift A = 0 and an improper flat prior the rate is

    kappa(x) = 1/2 ( sum_j [sum_i (y_i - p_i(x)) X_ij]^2
                     - sum_j sum_i p_i(x) (1 - p_i(x)) X_ij^2 ) - Phi

where p_i(x) = sigmoid(X_i . x) and Phi shifts the minimum to zero.  The
sup over R^d is replaced by a max over a finite parameter grid throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .bounds import SpectralGapData, PerturbationData, davis_kahan_bound, eigenfunction_bound
from .errors import AssumptionViolated, DomainError, NumericalError


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        y = np.array(self.y, dtype=float)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise DomainError("X must be n x d and y must have length n")
        if not np.all(np.isfinite(X)):
            raise DomainError("design matrix has non-finite entries")
        if not np.all((y == 0) | (y == 1)):
            raise DomainError("responses must be 0 or 1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def d(self):
        return self.X.shape[1]


def predict_p(x, row):
    x = np.asarray(x, dtype=float)
    row = np.asarray(row, dtype=float)
    if x.shape != row.shape:
        raise DomainError(f"parameter of shape {x.shape} does not match row of shape {row.shape}")
    return float(expit(row @ x))


def kappa_raw_many(points, data):
    """Un-shifted killing rate at each row of ``points`` (m x d)."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != data.d:
        raise DomainError(f"parameters have dimension {points.shape[1]}, data has {data.d}")
    P = expit(points @ data.X.T)
    grad = (data.y - P) @ data.X
    curvature = (P * (1.0 - P)) @ np.sum(data.X ** 2, axis=1)
    out = 0.5 * (np.sum(grad ** 2, axis=1) - curvature)
    if not np.all(np.isfinite(out)):
        raise NumericalError("non-finite killing rate")
    return out


def kappa_raw(x, data):
    return float(kappa_raw_many(np.asarray(x, dtype=float)[None, :], data)[0])


def calibrate_phi(data, grid):
    """Phi = min of the raw rate over the grid, so kappa = raw - Phi >= 0 there."""
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise DomainError("calibration grid is empty")
    return float(kappa_raw_many(grid, data).min())


@dataclass
class KappaField:
    dataset: Dataset
    Phi: float
    calibration_grid: np.ndarray = field(repr=False)

    @classmethod
    def calibrated(cls, data, grid):
        grid = np.atleast_2d(np.asarray(grid, dtype=float))
        return cls(data, calibrate_phi(data, grid), grid)

    def __call__(self, points):
        return kappa_raw_many(points, self.dataset) - self.Phi

    def on_grid(self):
        return self(self.calibration_grid)


def make_grid(lo, hi, points, d):
    """Cartesian product grid with ``points`` nodes per axis on [lo, hi]^d."""
    axis = np.linspace(lo, hi, points)
    return np.array(list(itertools.product(axis, repeat=d)))


def sup_diff(base, perturbed, grid=None):
    """Grid estimate of ||kappa - kappa~||_inf, each field with its own Phi."""
    if grid is None:
        grid = base.calibration_grid
    grid = np.atleast_2d(np.asarray(grid, dtype=float))
    for f in (base, perturbed):
        if not np.array_equal(f.calibration_grid, grid):
            raise DomainError("both fields must be calibrated on the evaluation grid")
    return float(np.max(np.abs(base(grid) - perturbed(grid))))


def perturb_labels(data, indices):
    y = data.y.copy()
    for i in indices:
        if not 0 <= i < data.n:
            raise DomainError(f"label index {i} out of range 0..{data.n - 1}")
        y[i] = 1.0 - y[i]
    return Dataset(data.X, y)


@dataclass
class RobustnessReport:
    sup_diff: float
    main_bound: float
    dk_bound: float
    assumption_ok: bool
    nu: float
    grid_points: int

    def as_dict(self):
        return dict(self.__dict__)


def robustness_report(base, perturbed, nu, grid=None, strict=True):
    """Eigenfunction bounds for the killing-rate perturbation H = kappa~ - kappa.

    ||H|| is the grid sup-difference and ||H phi|| is replaced by ||H||
    (phi has unit norm).  ``nu`` is the caller's spectral gap.  With
    ``strict`` a violated ||H|| < nu/2 raises; otherwise the report carries
    ``assumption_ok=False`` and a NaN main bound.
    """
    if not nu > 0:
        raise DomainError("nu must be positive")
    if grid is None:
        grid = base.calibration_grid
    h = sup_diff(base, perturbed, grid)
    gap = SpectralGapData.from_gap(nu)
    pert = PerturbationData(h, h)
    ok = h < nu / 2
    if ok:
        main = eigenfunction_bound(gap, pert)
    elif strict:
        raise AssumptionViolated(
            f"sup|kappa - kappa~| = {h:.6g} >= nu/2 = {nu / 2:.6g}", "||H|| < nu/2"
        )
    else:
        main = math.nan
    return RobustnessReport(h, main, davis_kahan_bound(gap, h), ok, float(nu),
                            int(np.atleast_2d(grid).shape[0]))


def synthetic_dataset(n, d, seed, scale=1.0):
    """Gaussian design and labels drawn from a logistic model with random coefficients."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d)) * scale
    beta = rng.standard_normal(d)
    y = (rng.random(n) < expit(X @ beta)).astype(float)
    return Dataset(X, y)


def load_csv(path):
    """Dataset from CSV: first column y in {0, 1}, remaining columns the design row."""
    raw = np.loadtxt(path, delimiter=",", ndmin=2)
    return Dataset(raw[:, 1:], raw[:, 0])
