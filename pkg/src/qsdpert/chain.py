"""Finite-state Markov chains with killing.

One step from a live state x: with probability kappa[x] the chain is sent
to the cemetery, otherwise it moves according to Q[x, :].  The one-step
survive-and-move kernel is therefore ``S = diag(1 - kappa) @ Q`` and

    P_x0(X_n = y) = (S^n)[x0, y].

Everything here compares two chains that share Q and x0 and differ only
in their killing probabilities.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConditioningError, DegenerateChainError, DomainError
from .rng import block_generator, blocks

ROW_SUM_TOL = 1e-12


@dataclass(frozen=True)
class KilledChain:
    Q: np.ndarray
    kappa: np.ndarray
    x0: int = 0

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        kappa = np.array(self.kappa, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise DomainError("Q must be a square matrix")
        n = Q.shape[0]
        if n < 1:
            raise DomainError("need at least one state")
        if np.any(Q < 0) or np.any(np.abs(Q.sum(axis=1) - 1.0) > ROW_SUM_TOL):
            raise DomainError("Q must be row-stochastic")
        if kappa.shape != (n,):
            raise DomainError("kappa must have one entry per state")
        if np.any(kappa < 0) or np.any(kappa > 1):
            raise DomainError("killing probabilities must lie in [0, 1]")
        if not 0 <= int(self.x0) < n:
            raise DomainError("start state out of range")
        Q.setflags(write=False)
        kappa.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "x0", int(self.x0))

    @property
    def n_states(self):
        return self.Q.shape[0]

    def with_kappa(self, kappa):
        return KilledChain(self.Q, kappa, self.x0)


@dataclass(frozen=True)
class SurvivalEnvelope:
    """alpha^n c_lower <= P(survive n steps) <= alpha^n c_upper for 0 <= n <= n_max."""

    alpha: float
    c_lower: float
    c_upper: float
    n_max: int


def survival_matrix(chain):
    return (1.0 - chain.kappa)[:, None] * chain.Q


def _survival_rows(chain, n_max):
    """Row ``n`` holds the sub-probability law (S^n)[x0, :] for n = 0..n_max."""
    S = survival_matrix(chain)
    out = np.empty((n_max + 1, chain.n_states))
    row = np.zeros(chain.n_states)
    row[chain.x0] = 1.0
    out[0] = row
    for n in range(1, n_max + 1):
        row = row @ S
        out[n] = row
    return out


def survival_probability(chain, n):
    if n < 0:
        raise DomainError("n must be >= 0")
    return float(_survival_rows(chain, n)[n].sum())


def conditional_distribution(chain, n):
    if n < 1:
        raise DomainError("n must be >= 1")
    row = _survival_rows(chain, n)[n]
    mass = row.sum()
    if not mass > 0:
        raise ConditioningError(f"survival probability is zero at n={n}", 0.0)
    return row / mass


def tv_distance(p, q):
    """Total variation as a sup over events, i.e. half the L1 distance."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise DomainError("distributions have different lengths")
    if abs(p.sum() - 1.0) > 1e-10 or abs(q.sum() - 1.0) > 1e-10:
        raise DomainError("distributions must sum to 1")
    return 0.5 * float(np.abs(p - q).sum())


def spectral_radius(S, tol=1e-12, max_iter=100_000):
    """Perron root of a nonnegative matrix by power iteration on a positive start vector."""
    n = S.shape[0]
    v = np.full(n, 1.0 / n)
    rho = 0.0
    for _ in range(max_iter):
        w = S @ v
        norm = w.sum()
        if norm == 0.0:
            return 0.0
        w /= norm
        if abs(norm - rho) <= tol * max(norm, 1e-300) and np.abs(w - v).max() <= tol:
            return float(norm)
        v, rho = w, norm
    # slow mixing (e.g. periodic S): fall back on the dense spectrum
    return float(np.max(np.abs(np.linalg.eigvals(S))))


def decay_envelope(chain, n_max, uniform_start=False):
    """Scalar constants for the geometric survival envelope.

    With ``uniform_start`` the upper constant is the maximum of the ratio over
    every start state, which makes it usable as a state-independent bound on
    P_y(survive m) for all y.
    """
    if n_max < 1:
        raise DomainError("n_max must be >= 1")
    S = survival_matrix(chain)
    alpha = spectral_radius(S)
    if alpha <= 0.0:
        raise DegenerateChainError("survival probability vanishes (spectral radius 0)")
    powers = alpha ** np.arange(n_max + 1)
    surv = _survival_rows(chain, n_max).sum(axis=1)
    if np.any(surv <= 0):
        first = int(np.argmax(surv <= 0))
        raise DegenerateChainError(f"survival probability is zero at n={first}")
    ratio = surv / powers
    c_upper = ratio.max()
    if uniform_start:
        for y in range(chain.n_states):
            other = KilledChain(chain.Q, chain.kappa, y)
            c_upper = max(c_upper, (_survival_rows(other, n_max).sum(axis=1) / powers).max())
    return SurvivalEnvelope(float(alpha), float(ratio.min()), float(c_upper), int(n_max))


def _check_pair(base, tilde):
    if base.n_states != tilde.n_states or not np.array_equal(base.Q, tilde.Q):
        raise DomainError("chains must share the transition matrix Q")
    if base.x0 != tilde.x0:
        raise DomainError("chains must share the start state")


def k_constant(base, tilde, envelopes):
    """K(x0) = 2 c~_u c_u / min(c_l, c~_l) for scalar envelope constants."""
    _check_pair(base, tilde)
    env, env_t = envelopes
    return 2.0 * env_t.c_upper * env.c_upper / min(env.c_lower, env_t.c_lower)


def envelopes_for(base, tilde, n_max):
    """Envelope pair used by ``prop1_bound``: the perturbed chain's upper constant is
    taken uniformly over start states, as the bound integrates it against Q(z, .)."""
    return decay_envelope(base, n_max), decay_envelope(tilde, n_max, uniform_start=True)


def prop1_bound(base, tilde, n, envelopes=None, rigorous=False):
    """||kappa - kappa~||_inf K(x0) min(n, 1/|alpha - alpha~|).

    ``rigorous=True`` replaces n by n / max(alpha, alpha~), the value the
    telescoping sum actually admits.
    """
    _check_pair(base, tilde)
    if n < 1:
        raise DomainError("n must be >= 1")
    diff = float(np.max(np.abs(base.kappa - tilde.kappa)))
    if diff == 0.0:
        return 0.0
    if envelopes is None:
        envelopes = envelopes_for(base, tilde, n)
    env, env_t = envelopes
    K = k_constant(base, tilde, envelopes)
    steps = n / max(env.alpha, env_t.alpha) if rigorous else n
    gap = abs(env.alpha - env_t.alpha)
    factor = steps if gap == 0.0 else min(steps, 1.0 / gap)
    return diff * K * factor


@dataclass
class Prop1Report:
    n: list = field(default_factory=list)
    tv: list = field(default_factory=list)
    bound: list = field(default_factory=list)
    truncated_at: int | None = None

    @property
    def margins(self):
        return [b - t for b, t in zip(self.bound, self.tv)]

    @property
    def all_satisfied(self):
        return all(m >= 0 for m in self.margins)

    def rows(self):
        return list(zip(self.n, self.tv, self.bound, self.margins))


def verify_prop1(base, tilde, n_max, rigorous=False):
    """Exact TV between the two conditional laws against the bound, for n = 1..n_max."""
    _check_pair(base, tilde)
    report = Prop1Report()
    rows = _survival_rows(base, n_max)
    rows_t = _survival_rows(tilde, n_max)
    try:
        envelopes = envelopes_for(base, tilde, n_max)
    except DegenerateChainError:
        envelopes = None
    for n in range(1, n_max + 1):
        m, m_t = rows[n].sum(), rows_t[n].sum()
        if not (m > 0 and m_t > 0):
            report.truncated_at = n
            break
        report.n.append(n)
        report.tv.append(tv_distance(rows[n] / m, rows_t[n] / m_t))
        report.bound.append(prop1_bound(base, tilde, n, envelopes, rigorous))
    return report


@dataclass
class ChainSample:
    distribution: np.ndarray
    survival_fraction: float
    survivors: int


def _simulate_block(Q_cum, kappa, x0, n, size, rng):
    state = np.full(size, x0, dtype=np.int64)
    alive = np.ones(size, dtype=bool)
    k = Q_cum.shape[0]
    for _ in range(n):
        u = rng.random(size)
        v = rng.random(size)
        alive &= u > kappa[state]
        nxt = (v[:, None] >= Q_cum[state]).sum(axis=1)
        state = np.minimum(nxt, k - 1)
    return np.bincount(state[alive], minlength=k)


def simulate_chain(chain, n, n_paths, seed, threads=1):
    """Monte-Carlo version of ``conditional_distribution``.

    Paths are processed in fixed blocks, each with its own counter-based
    stream keyed by (seed, block index); the result does not depend on
    ``threads``.
    """
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    if n < 0:
        raise DomainError("n must be >= 0")
    Q_cum = np.cumsum(chain.Q, axis=1)
    Q_cum[:, -1] = 1.0

    def run(job):
        index, size = job
        return _simulate_block(Q_cum, chain.kappa, chain.x0, n, size, block_generator(seed, index))

    jobs = list(blocks(n_paths))
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            counts = list(pool.map(run, jobs))
    else:
        counts = [run(job) for job in jobs]
    total = np.sum(counts, axis=0)
    survivors = int(total.sum())
    fraction = survivors / n_paths
    if survivors == 0:
        raise ConditioningError(f"no path survived {n} steps", fraction)
    return ChainSample(total / survivors, fraction, survivors)


def random_chain(n_states, seed, kappa_range=(0.05, 0.6), x0=0):
    """Dirichlet(1, ..., 1) rows for Q and uniform killing probabilities."""
    rng = np.random.default_rng(seed)
    Q = rng.dirichlet(np.ones(n_states), size=n_states)
    Q /= Q.sum(axis=1, keepdims=True)
    kappa = rng.uniform(*kappa_range, size=n_states)
    return KilledChain(Q, kappa, x0)


def random_pair(n_states, seed, max_diff=0.05, kappa_range=(0.05, 0.6)):
    """A random chain and a copy whose killing is perturbed by at most ``max_diff``."""
    base = random_chain(n_states, seed, kappa_range)
    rng = np.random.default_rng([seed, 1])
    noise = rng.uniform(-max_diff, max_diff, size=n_states)
    tilde = np.clip(base.kappa + noise, 0.0, 1.0)
    return base, base.with_kappa(tilde)
