"""Monte Carlo for one-dimensional diffusions killed at a bounded rate.

The Ornstein-Uhlenbeck process dX = -X/2 dt + dW is stepped with its exact
Gaussian transition; other drifts use Euler-Maruyama.  Killing events come
from Poisson thinning: candidates arrive at rate ``bound_M`` and are kept
with probability kappa(x)/bound_M, where x is the position at the start of
the current time step.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.special import ndtr

from .errors import ConditioningError, DomainError, NumericalError
from .rng import block_generator, blocks

OU_HALF_RATE = "ou_half_rate"
CUSTOM_1D = "custom_1d"


class KillingRateError(DomainError):
    """The killing rate left [0, bound_M] at some position."""

    def __init__(self, message, x):
        super().__init__(message)
        self.x = x


@dataclass(frozen=True)
class DiffusionSpec:
    kind: str = OU_HALF_RATE
    drift: Optional[Callable] = None  # grad A, vectorised; custom_1d only

    def __post_init__(self):
        if self.kind not in (OU_HALF_RATE, CUSTOM_1D):
            raise DomainError(f"unknown diffusion kind {self.kind!r}")
        if self.kind == CUSTOM_1D and self.drift is None:
            raise DomainError("custom_1d needs a drift function")

    @classmethod
    def ou(cls):
        return cls(OU_HALF_RATE)

    @classmethod
    def custom(cls, drift):
        return cls(CUSTOM_1D, drift)

    def grad_A(self, x):
        if self.kind == OU_HALF_RATE:
            return -0.5 * x
        return self.drift(x)


@dataclass(frozen=True)
class KillingSpec:
    rate: Callable
    bound_M: float

    def __post_init__(self):
        if not self.bound_M > 0:
            raise DomainError("bound_M must be positive")

    @classmethod
    def truncated_quadratic(cls, M):
        """kappa_M(x) = min(x^2, M) with thinning bound M."""
        return cls(lambda x: np.minimum(x * x, M), float(M))

    @classmethod
    def constant(cls, c, bound_M=None):
        bound = float(c) if bound_M is None else float(bound_M)
        if bound == 0.0:
            bound = 1.0
        return cls(lambda x: np.full(np.shape(x), float(c)), bound)


@dataclass
class ParticleEnsemble:
    positions: np.ndarray
    alive: np.ndarray
    t: float
    seed: int
    death_time: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if len(self.positions) != len(self.alive):
            raise DomainError("positions and alive flags must have equal length")
        if self.death_time is None:
            self.death_time = np.where(self.alive, np.inf, np.nan)

    @property
    def alive_fraction(self):
        return float(np.mean(self.alive))

    @property
    def survivors(self):
        return self.positions[self.alive]


def ou_transition_sample(x, h, rng):
    """Exact draw of X_h given X_0 = x for dX = -X/2 dt + dW."""
    if not h > 0:
        raise DomainError("time step must be positive")
    x = np.asarray(x, dtype=float)
    decay = math.exp(-0.5 * h)
    sd = math.sqrt(-math.expm1(-h))
    return decay * x + sd * rng.standard_normal(x.shape)


def _initial_positions(initial, size, rng):
    if initial is None:
        return rng.standard_normal(size)
    if callable(initial):
        return np.asarray(initial(rng, size), dtype=float)
    return np.full(size, float(initial))


def _evolve_block(dspec, kspec, n_steps, dt, size, rng, initial, record_every):
    x = _initial_positions(initial, size, rng)
    alive = np.ones(size, dtype=bool)
    death = np.full(size, np.inf)
    counts = []
    bound = kspec.bound_M
    mean_candidates = bound * dt
    for step in range(n_steps):
        rate = np.asarray(kspec.rate(x), dtype=float)
        bad = alive & ((rate > bound * (1 + 1e-12)) | (rate < 0) | ~np.isfinite(rate))
        if bad.any():
            xb = float(x[np.argmax(bad)])
            raise KillingRateError(
                f"killing rate {float(kspec.rate(np.array([xb]))[0]):.6g} at x={xb:.6g} "
                f"outside [0, bound_M={bound}]", xb)
        candidates = rng.poisson(mean_candidates, size)
        accepted = rng.binomial(candidates, np.clip(rate / bound, 0.0, 1.0))
        u = rng.random(size)
        killed = alive & (accepted > 0)
        if killed.any():
            k = accepted[killed]
            # first of k uniform event times within the step
            death[killed] = step * dt + dt * (1.0 - u[killed] ** (1.0 / k))
            alive &= ~killed
        if dspec.kind == OU_HALF_RATE:
            x = ou_transition_sample(x, dt, rng)
        else:
            x = x + dspec.grad_A(x) * dt + math.sqrt(dt) * rng.standard_normal(size)
        if record_every and (step + 1) % record_every == 0:
            counts.append(int(alive.sum()))
    return x, alive, death, counts


def _run(dspec, kspec, T, dt, n_particles, seed, initial, record_every, threads):
    if not (T > 0 and dt > 0):
        raise DomainError("T and dt must be positive")
    if n_particles < 1:
        raise DomainError("n_particles must be >= 1")
    n_steps = max(1, round(T / dt))
    if not math.isclose(n_steps * dt, T, rel_tol=1e-9):
        raise DomainError("T must be an integer multiple of dt")

    def job(spec):
        index, size = spec
        return _evolve_block(dspec, kspec, n_steps, dt, size, block_generator(seed, index),
                             initial, record_every)

    specs = list(blocks(n_particles))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(job, specs))
    else:
        parts = [job(s) for s in specs]
    x = np.concatenate([p[0] for p in parts])
    alive = np.concatenate([p[1] for p in parts])
    death = np.concatenate([p[2] for p in parts])
    counts = np.sum([p[3] for p in parts], axis=0) if record_every else None
    return ParticleEnsemble(x, alive, n_steps * dt, seed, death), counts, n_steps


def simulate_killed_ensemble(dspec, kspec, T, dt, n_particles, seed, initial=None, threads=1):
    """Evolve ``n_particles`` independent killed particles up to time T.

    ``initial`` is None (standard normal start, the OU invariant law), a
    number (common start point) or ``f(rng, size)``.
    """
    ensemble, _, _ = _run(dspec, kspec, T, dt, n_particles, seed, initial, 0, threads)
    return ensemble


@dataclass
class Histogram:
    edges: np.ndarray
    density: np.ndarray
    n_samples: int

    @property
    def centers(self):
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def masses(self):
        return self.density * np.diff(self.edges)


def histogram_density(samples, bins, range):
    samples = np.asarray(samples, dtype=float)
    counts, edges = np.histogram(samples, bins=bins, range=range)
    total = counts.sum()
    if total == 0:
        raise ConditioningError("no samples inside the histogram range", 0.0)
    return Histogram(edges, counts / (total * np.diff(edges)), int(total))


def qsd_estimate(ensemble, bins, range):
    """Normalised histogram of the surviving particles."""
    if not ensemble.alive.any():
        raise ConditioningError("no surviving particles", 0.0)
    return histogram_density(ensemble.survivors, bins, range)


def l1_vs_gaussian(hist, mean, variance):
    """Sum over bins of |histogram mass - Gaussian mass|."""
    sd = math.sqrt(variance)
    cdf = ndtr((hist.edges - mean) / sd)
    return float(np.abs(hist.masses - np.diff(cdf)).sum())


@dataclass
class SurvivalCurve:
    points: list  # [(t, alive fraction)]
    rate: float
    ensemble: ParticleEnsemble = field(repr=False)


def survival_curve(dspec, kspec, T, dt, n_particles, seed, n_checkpoints, initial=None,
                   threads=1):
    """Alive fraction at ``n_checkpoints`` equally spaced times and the decay rate
    fitted by least squares to log(alive fraction) over the later half."""
    if n_checkpoints < 2:
        raise DomainError("need at least two checkpoints")
    n_steps = max(1, round(T / dt))
    if n_steps % n_checkpoints:
        raise DomainError("checkpoints must fall on the time grid")
    every = n_steps // n_checkpoints
    ensemble, counts, _ = _run(dspec, kspec, T, dt, n_particles, seed, initial, every, threads)
    times = dt * every * np.arange(1, n_checkpoints + 1)
    frac = np.asarray(counts, dtype=float) / n_particles
    points = list(zip(times.tolist(), frac.tolist()))
    window = (times >= 0.5 * times[-1]) & (frac > 0)
    if window.sum() < 2:
        raise NumericalError("fewer than two checkpoints with positive survival to fit")
    slope = np.polyfit(times[window], np.log(frac[window]), 1)[0]
    return SurvivalCurve(points, float(-slope), ensemble)


@dataclass
class KappaFromTarget:
    grid: np.ndarray
    kappa: np.ndarray
    K: float


def kappa_from_target(log_pi, A, grid, fd_step=1e-4):
    """Killing rate making ``pi`` quasi-stationary for dX = A'(X) dt + dW:

        kappa = 1/2 (pi''/pi - 2 A' pi'/pi - 2 A'') + K

    with derivatives of log pi and A by central differences and the
    smallest K >= 0 giving kappa >= 0 on the grid.
    """
    grid = np.asarray(grid, dtype=float)
    if not fd_step > 0:
        raise DomainError("fd_step must be positive")
    if grid.ndim != 1 or np.any(np.diff(grid) < 0):
        raise DomainError("grid must be a sorted 1-D array")
    h = fd_step

    def derivs(f):
        lo, mid, hi = f(grid - h), f(grid), f(grid + h)
        return (hi - lo) / (2 * h), (hi - 2 * mid + lo) / (h * h)

    lp1, lp2 = derivs(log_pi)
    a1, a2 = derivs(A)
    bracket = 0.5 * (lp2 + lp1 ** 2 - 2.0 * a1 * lp1 - 2.0 * a2)
    if not np.all(np.isfinite(bracket)):
        raise NumericalError("non-finite derivative estimates")
    K = max(0.0, -float(bracket.min()))
    return KappaFromTarget(grid, bracket + K, K)


# Named targets for the command line: (log pi, A)
TARGETS = {
    "ou": (lambda y: -y * y, lambda y: -0.25 * y * y),
    "bm-normal": (lambda y: -0.5 * y * y, lambda y: np.zeros_like(y)),
}
