"""Eigenvalues of the Ornstein-Uhlenbeck generator with truncated killing.

The operator is

    L phi = -1/2 phi'' + (x/2) phi' + min(x^2, M) phi

on L^2(R, exp(-x^2/2) dx).  Outside [-sqrt(M), sqrt(M)] the killing rate
is constant and the square-integrable solutions are explicit integrals
(``kb_tail_ratio``), so the problem reduces to matching a polar phase
angle alpha (tan alpha = phi'/phi) transported across the interior.

The mismatch

    s_M(lam) = alpha_R - alpha_L - (alpha(+sqrt M) - alpha(-sqrt M))

is zero modulo pi exactly at eigenvalues; the n-th eigenvalue sits where
the transported angle has wound n extra half-turns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import BracketError, DomainError, NumericalError, PartialSpectrumError

SQRT2 = math.sqrt(2.0)

LEFT = "left"
RIGHT = "right"

# Scan layout used when no bracket is supplied.
SCAN_EDGE = 0.01
SCAN_RESOLUTION = 0.05


@dataclass(frozen=True)
class EigenSolveConfig:
    """Precision settings for the phase-angle solver.

    Use :meth:`for_M` to get the defaults for a given truncation level.
    """

    truncation_M: float
    ode_step: float
    quad_rel_tol: float = 1e-11
    root_abs_tol: float = 1e-10
    max_quad_range: float = 50.0

    def __post_init__(self):
        if self.truncation_M < 0:
            raise DomainError("truncation_M must be >= 0")
        for name in ("ode_step", "quad_rel_tol", "root_abs_tol", "max_quad_range"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be strictly positive")
        if self.truncation_M >= 1 and self.ode_step > math.sqrt(self.truncation_M) / 100:
            raise DomainError("ode_step must be <= sqrt(M)/100 when M >= 1")

    @classmethod
    def for_M(cls, M, **overrides):
        M = float(M)
        step = math.sqrt(M) / 2000 if M >= 1 else 5e-4
        params = dict(truncation_M=M, ode_step=step)
        params.update(overrides)
        return cls(**params)

    def with_step(self, ode_step):
        return EigenSolveConfig(
            self.truncation_M, ode_step, self.quad_rel_tol, self.root_abs_tol, self.max_quad_range
        )


@dataclass(frozen=True)
class PhasePoint:
    x: float
    alpha: float


@dataclass
class SpectrumResult:
    truncation_M: float
    eigenvalues: list = field(default_factory=list)  # [(n, lambda)]
    s_curve: list = field(default_factory=list)  # [(lambda, s)]

    @property
    def values(self):
        return [lam for _, lam in self.eigenvalues]


def _resolve(M, cfg):
    if cfg is None:
        return EigenSolveConfig.for_M(M)
    if not math.isclose(cfg.truncation_M, M, rel_tol=0, abs_tol=1e-12):
        raise DomainError(f"config built for M={cfg.truncation_M}, called with M={M}")
    return cfg


# -- tail kernels -----------------------------------------------------------


def _scaled_moment(p, c, shift, upper, rel_tol):
    """int_0^upper r^p exp(-r^2 - c r - shift) dr for p > -1."""
    if p >= 0:
        def f(r):
            if r <= 0.0:
                return math.exp(-shift) if p == 0 else 0.0
            return math.exp(p * math.log(r) - r * r - c * r - shift)

        peak = (-c + math.sqrt(c * c + 8.0 * max(p, 1e-300))) / 4.0
        points = [peak] if 0.0 < peak < upper else None
        res = integrate.quad(f, 0.0, upper, points=points, epsabs=0.0, epsrel=rel_tol,
                             limit=400, full_output=1)
    else:
        res = integrate.quad(lambda r: math.exp(-r * r - c * r - shift), 0.0, upper,
                             weight="alg", wvar=(p, 0.0), epsabs=0.0, epsrel=rel_tol,
                             limit=400, full_output=1)
    if len(res) > 3:
        raise NumericalError(f"tail quadrature did not converge: {res[3]}")
    return res[0]


def kb_tail_ratio(beta_star, x, side, cfg):
    """tan(alpha) of the square-integrable tail solution at ``x``.

    Right tail::

        -sqrt(2) * int r^b e^{-r^2 - sqrt2 r x} dr / int r^{b-1} e^{-r^2 - sqrt2 r x} dr

    and the left tail uses ``+sqrt2 r x`` in the exponent with a positive
    prefactor.  ``cfg`` supplies ``quad_rel_tol`` and ``max_quad_range``.
    """
    if not beta_star > 0:
        raise DomainError(f"beta_star must be positive, got {beta_star}")
    if side == RIGHT:
        c, sign = SQRT2 * x, -1.0
    elif side == LEFT:
        c, sign = -SQRT2 * x, 1.0
    else:
        raise DomainError(f"side must be 'left' or 'right', got {side!r}")

    upper = cfg.max_quad_range
    peak = (-c + math.sqrt(c * c + 8.0 * beta_star)) / 4.0
    if peak >= upper:
        raise NumericalError(f"integrand peak r={peak:.3g} beyond max_quad_range={upper}")
    # common scale so that neither moment overflows
    shift = beta_star * math.log(peak) - peak * peak - c * peak
    num = _scaled_moment(beta_star, c, shift, upper, cfg.quad_rel_tol)
    den = _scaled_moment(beta_star - 1.0, c, shift, upper, cfg.quad_rel_tol)
    if not (den > 0 and math.isfinite(num)):
        raise NumericalError("degenerate tail moments")
    return sign * SQRT2 * num / den


def tail_angle(M, lam, side, cfg=None):
    """Boundary phase angle at x = -sqrt(M) (left) or +sqrt(M) (right), principal branch."""
    if lam >= M:
        raise DomainError("eigenvalue candidate above truncation level")
    cfg = _resolve(M, cfg)
    x = -math.sqrt(M) if side == LEFT else math.sqrt(M)
    return math.atan(kb_tail_ratio(2.0 * (M - lam), x, side, cfg))


# -- phase transport --------------------------------------------------------


def phase_rhs(x, alpha, M, lam):
    """Right-hand side of the phase-angle ODE."""
    c = np.cos(alpha)
    s = np.sin(alpha)
    return 2.0 * (np.minimum(x * x, M) - lam) * c * c - s * s + x * s * c


def _rhs_scalar(x, a, M, lam):
    c = math.cos(a)
    s = math.sin(a)
    return 2.0 * (min(x * x, M) - lam) * c * c - s * s + x * s * c


def _grid(M, ode_step):
    half = math.sqrt(M)
    n = max(1, math.ceil(2.0 * half / ode_step))
    return -half, 2.0 * half / n, n


def _transport_scalar(M, lam, alpha0, ode_step):
    x0, h, n = _grid(M, ode_step)
    a = alpha0
    half_h = 0.5 * h
    limit = 0.5 * math.pi
    f = _rhs_scalar
    for i in range(n):
        x = x0 + i * h
        k1 = f(x, a, M, lam)
        k2 = f(x + half_h, a + half_h * k1, M, lam)
        k3 = f(x + half_h, a + half_h * k2, M, lam)
        k4 = f(x + h, a + h * k3, M, lam)
        da = h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if abs(da) > limit:
            raise NumericalError(f"phase changed by {da:.3g} rad in one step; reduce ode_step")
        a += da
    return a


def _transport_vector(M, lam, alpha0, ode_step):
    x0, h, n = _grid(M, ode_step)
    a = np.array(alpha0, dtype=float)
    lam = np.asarray(lam, dtype=float)
    for i in range(n):
        x = x0 + i * h
        k1 = phase_rhs(x, a, M, lam)
        k2 = phase_rhs(x + 0.5 * h, a + (0.5 * h) * k1, M, lam)
        k3 = phase_rhs(x + 0.5 * h, a + (0.5 * h) * k2, M, lam)
        k4 = phase_rhs(x + h, a + h * k3, M, lam)
        da = h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0
        if np.any(np.abs(da) > 0.5 * math.pi):
            raise NumericalError("phase changed by more than pi/2 in one step; reduce ode_step")
        a = a + da
    return a


def transport(M, lam, alpha0, cfg=None):
    """Carry the unwrapped phase angle from -sqrt(M) to +sqrt(M) by fixed-step RK4."""
    cfg = _resolve(M, cfg)
    return PhasePoint(math.sqrt(M), _transport_scalar(M, float(lam), float(alpha0), cfg.ode_step))


def s_value(M, lam, cfg=None):
    cfg = _resolve(M, cfg)
    a_left = tail_angle(M, lam, LEFT, cfg)
    a_right = tail_angle(M, lam, RIGHT, cfg)
    a_end = _transport_scalar(M, float(lam), a_left, cfg.ode_step)
    return a_right - a_left - (a_end - a_left)


def s_curve(M, lambdas, cfg=None):
    """Vectorised ``s_value`` over an array of lambdas; returns [(lambda, s)]."""
    cfg = _resolve(M, cfg)
    lambdas = np.asarray(lambdas, dtype=float)
    a_left = np.array([tail_angle(M, lam, LEFT, cfg) for lam in lambdas])
    a_right = np.array([tail_angle(M, lam, RIGHT, cfg) for lam in lambdas])
    a_end = _transport_vector(M, lambdas, a_left, cfg.ode_step)
    s = a_right - a_left - (a_end - a_left)
    return list(zip(lambdas.tolist(), s.tolist()))


@lru_cache(maxsize=64)
def _direction(cfg):
    # sign of ds/dlambda from two probes at the ends of the scan window
    M = cfg.truncation_M
    lo = min(SCAN_EDGE, M / 4.0)
    hi = M - lo
    s_lo = s_value(M, lo, cfg)
    s_hi = s_value(M, hi, cfg)
    if s_hi == s_lo:
        raise NumericalError("s_M is flat across the scan window; cannot fix sign convention")
    return 1.0 if s_hi > s_lo else -1.0


def target(M, n, cfg=None):
    """Matching value of s_M for the eigenvalue of index n."""
    cfg = _resolve(M, cfg)
    return _direction(cfg) * n * math.pi


def _scan_grid(M):
    lo, hi = SCAN_EDGE, M - SCAN_EDGE
    if hi <= lo:
        raise DomainError(f"truncation level M={M} too small to scan")
    grid = np.arange(lo, hi, SCAN_RESOLUTION)
    if grid[-1] < hi:
        grid = np.append(grid, hi)
    return grid


def _brackets(curve, goal_fn, count):
    lams = [lam for lam, _ in curve]
    vals = [s for _, s in curve]
    out = []
    for n in range(count):
        goal = goal_fn(n)
        found = None
        for i in range(len(vals) - 1):
            a, b = vals[i] - goal, vals[i + 1] - goal
            if a == 0.0:
                found = (lams[i], lams[i])
                break
            if a * b < 0.0:
                found = (lams[i], lams[i + 1])
                break
        if found is None:
            break
        out.append(found)
    return out


def find_eigenvalue(M, n, bracket=None, cfg=None):
    """Bisection for s_M(lambda) = target(n) inside ``bracket``.

    Without a bracket the default lambda scan locates one first.  Returns
    the lower end of the final bracket, so the discretised root lies in
    ``[lam, lam + cfg.root_abs_tol]``.  Near an eigenvalue s_M is almost a
    step of height pi once M is large, so the tolerance is on lambda only.
    """
    cfg = _resolve(M, cfg)
    if n < 0:
        raise DomainError("eigenvalue index must be >= 0")
    goal = target(M, n, cfg)
    if bracket is None:
        brackets = _brackets(s_curve(M, _scan_grid(M), cfg), lambda k: target(M, k, cfg), n + 1)
        if len(brackets) <= n:
            raise BracketError(f"no eigenvalue of index {n} found below M={M}")
        bracket = brackets[n]
    lo, hi = map(float, bracket)
    if hi >= M:
        raise DomainError("bracket must lie strictly below the truncation level M")
    if not lo <= hi:
        raise DomainError(f"malformed bracket {bracket}")
    f_lo = s_value(M, lo, cfg) - goal
    if f_lo == 0.0:
        return lo
    f_hi = s_value(M, hi, cfg) - goal
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0.0:
        raise BracketError(f"s_M - {goal:.6g} does not change sign on [{lo}, {hi}]")
    while hi - lo > cfg.root_abs_tol:
        mid = 0.5 * (lo + hi)
        f_mid = s_value(M, mid, cfg) - goal
        if f_mid == 0.0:
            return mid
        if (f_mid < 0.0) == (f_lo < 0.0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return lo


def spectrum(M, count, cfg=None):
    """The first ``count`` eigenvalues below M together with the scanned s-curve."""
    cfg = _resolve(M, cfg)
    if count < 1:
        raise DomainError("count must be >= 1")
    curve = s_curve(M, _scan_grid(M), cfg)
    brackets = _brackets(curve, lambda k: target(M, k, cfg), count)
    found = [(n, find_eigenvalue(M, n, br, cfg)) for n, br in enumerate(brackets)]
    if len(found) < count:
        raise PartialSpectrumError(
            f"only {len(found)} of {count} eigenvalues lie below M={M}", found
        )
    return SpectrumResult(float(M), found, curve)


def unperturbed_eigenvalue(n):
    """Eigenvalue of index n for the untruncated killing x^2: 1/2 + 3n/2."""
    if n < 0:
        raise DomainError("eigenvalue index must be >= 0")
    return 0.5 + 1.5 * n


def delta_separation(M, cfg=None):
    """Distance from lambda_0 = 1/2 up to the first excited truncated eigenvalue."""
    return find_eigenvalue(M, 1, None, cfg) - unperturbed_eigenvalue(0)
