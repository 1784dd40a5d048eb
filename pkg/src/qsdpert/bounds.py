"""Closed-form eigenvalue/eigenfunction perturbation bounds.

Bounded self-adjoint perturbations L -> L + H with spectral gap
``nu = lambda1 - lambda0`` and ``||H|| < nu/2``:

* Weyl:          |lambda_j - lambda_j_hat| <= ||H||
* main estimate: ||phi - phi_hat|| <= ||H phi - <H phi, phi> phi|| / (nu - 2||H||)
* Davis-Kahan:   ||phi - phi_hat|| <= 2 sqrt(2) ||H phi|| / nu

plus the L2 -> L1 transfer estimates for Gamma-densities and the constants of
the truncated Ornstein-Uhlenbeck example.  ``finite_dim_oracle`` builds
random symmetric matrix pairs on which all of the above can be checked
against exact eigen-decompositions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import integrate

from .errors import AssumptionViolated, DomainError, GenerationError, NumericalError

# L2(Gamma)-normalising constant of exp(-x^2/2) for Gamma(dx) = exp(-x^2/2) dx
OU_C = (3.0 / (2.0 * math.pi)) ** 0.25
# ||pi / gamma||_2 for pi = N(0, 1/2)
OU_Z = (2.0 / (3.0 * math.pi)) ** 0.25
# Gamma(R)^{1/2} = (2 pi)^{1/4}
OU_LAMBDA = (2.0 * math.pi) ** 0.25


@dataclass(frozen=True)
class SpectralGapData:
    lambda0: float
    lambda1: float

    def __post_init__(self):
        if not self.lambda1 - self.lambda0 > 0:
            raise AssumptionViolated("no spectral gap: lambda1 <= lambda0", "nu > 0")

    @property
    def nu(self):
        return self.lambda1 - self.lambda0

    @classmethod
    def from_gap(cls, nu, lambda0=0.0):
        return cls(lambda0, lambda0 + nu)


@dataclass(frozen=True)
class PerturbationData:
    h_opnorm: float
    h_phi_norm: float
    h_phi_centered_norm: Optional[float] = None

    def __post_init__(self):
        for name in ("h_opnorm", "h_phi_norm"):
            if getattr(self, name) < 0:
                raise DomainError(f"{name} must be >= 0")
        if self.h_phi_centered_norm is not None and self.h_phi_centered_norm < 0:
            raise DomainError("h_phi_centered_norm must be >= 0")


@dataclass(frozen=True)
class NormalizationData:
    Z: float
    Lambda: float
    eps: float

    def __post_init__(self):
        if not (self.Z > 0 and self.Lambda > 0):
            raise DomainError("Z and Lambda must be positive")
        if self.eps < 0:
            raise DomainError("eps must be >= 0")


def weyl_interval(lambda_j, h_opnorm):
    if h_opnorm < 0:
        raise DomainError("operator norm must be >= 0")
    return (lambda_j - h_opnorm, lambda_j + h_opnorm)


def _require_small(gap, h_opnorm):
    if not h_opnorm < gap.nu / 2:
        raise AssumptionViolated(
            f"perturbation too large: ||H|| = {h_opnorm:.6g} >= nu/2 = {gap.nu / 2:.6g}",
            "||H|| < nu/2",
        )


def eigenfunction_bound(gap, pert):
    """Main estimate; uses the centred residual when it is available."""
    _require_small(gap, pert.h_opnorm)
    residual = pert.h_phi_centered_norm
    if residual is None:
        residual = pert.h_phi_norm
    return residual / (gap.nu - 2.0 * pert.h_opnorm)


def davis_kahan_bound(gap, h_phi_norm):
    if not gap.nu > 0:
        raise DomainError("spectral gap must be positive")
    if h_phi_norm < 0:
        raise DomainError("||H phi|| must be >= 0")
    return 2.0 * math.sqrt(2.0) * h_phi_norm / gap.nu


def l1_from_l2(Lambda, l2_dist):
    """Cauchy-Schwarz transfer: int |pi - pi~| dx <= Lambda * ||phi - phi~||_2."""
    if not Lambda > 0 or l2_dist < 0:
        raise DomainError("need Lambda > 0 and l2_dist >= 0")
    return Lambda * l2_dist


def _require_eps(nd):
    if not nd.eps < 1.0 / (nd.Lambda * nd.Z):
        raise AssumptionViolated(
            f"eps = {nd.eps:.6g} must be below 1/(Lambda Z) = {1.0 / (nd.Lambda * nd.Z):.6g}",
            "eps < 1/(Lambda Z)",
        )


def normalization_shift(nd):
    """C with |Z - Z~| <= C eps."""
    _require_eps(nd)
    return nd.Z ** 2 * nd.Lambda / (1.0 - nd.Lambda * nd.Z * nd.eps)


def l2_density_bound(nd):
    """||phi - phi~||_2 <= eps (Z + C) for the un-normalised Gamma-densities."""
    return nd.eps * (nd.Z + normalization_shift(nd))


def l1_density_bound(nd):
    return nd.Lambda * l2_density_bound(nd)


def truncation_eigfun_bound(delta, hm_phi0_norm, rho_lower=None):
    """sqrt(2) ||H_M phi0|| / delta, sharpened by 1/sqrt(1+rho) when a lower bound on
    rho = <phi0, phi0_hat> is known."""
    if not delta > 0:
        raise DomainError("delta must be positive")
    if hm_phi0_norm < 0:
        raise DomainError("||H_M phi0|| must be >= 0")
    if rho_lower is None:
        return math.sqrt(2.0) * hm_phi0_norm / delta
    if not 0.0 <= rho_lower <= 1.0:
        raise DomainError("rho_lower must lie in [0, 1]")
    return math.sqrt(2.0) / math.sqrt(1.0 + rho_lower) * hm_phi0_norm / delta


def hm_phi0_norm(M, quad_rel_tol=1e-12):
    """||(kappa - kappa_M) phi0||_2 in L2(Gamma) for kappa = x^2 on the OU example.

    Equals sqrt(2 C^2 int_{sqrt M}^inf (x^2 - M)^2 exp(-3x^2/2) dx).
    """
    if M < 0:
        raise DomainError("M must be >= 0")
    a = math.sqrt(M)
    upper = a + 12.0 / math.sqrt(3.0)
    res = integrate.quad(lambda x: (x * x - M) ** 2 * math.exp(-1.5 * x * x), a, upper,
                         epsabs=0.0, epsrel=quad_rel_tol, limit=200, full_output=1)
    if len(res) > 3:
        raise NumericalError(f"quadrature for ||H_M phi0|| failed: {res[3]}")
    return math.sqrt(2.0 * OU_C ** 2 * res[0])


def hm_phi0_proof_bound(M):
    """Upper bound on ||H_M phi0||^2 from the Cauchy-Schwarz/Gaussian-tail chain."""
    return (OU_C ** 2 * math.sqrt(105.0 * math.sqrt(math.pi) / 16.0)
            * (math.pi / 2.0) ** 0.25 * math.exp(-M))


@dataclass(frozen=True)
class OUConstants:
    c2: float
    c3: float
    M_min: float
    Z: float


def ou_constants(delta):
    if not delta > 0:
        raise DomainError("delta must be positive")
    Z = OU_Z
    c2 = 315.0 / (32.0 * delta)
    c3 = Z * c2 * OU_LAMBDA * (1.0 + 2.0 * Z * OU_LAMBDA)
    M_min = math.log(2.0 * OU_LAMBDA * Z * c2)
    return OUConstants(c2=c2, c3=c3, M_min=M_min, Z=Z)


# -- dense symmetric eigensolver ---------------------------------------------


def jacobi_eigh(A, tol=1e-13, max_sweeps=100):
    """Cyclic Jacobi rotations for a real symmetric matrix.

    Returns ``(w, V)`` with ascending eigenvalues ``w`` and orthonormal
    eigenvectors in the columns of ``V``.  Iterates until the off-diagonal
    Frobenius norm drops below ``tol * max(1, ||A||_F)``.
    """
    A = np.array(A, dtype=float)
    n, m = A.shape
    if n != m:
        raise DomainError("matrix must be square")
    if not np.allclose(A, A.T, rtol=0, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise DomainError("matrix must be symmetric")
    A = 0.5 * (A + A.T)
    V = np.eye(n)
    threshold = tol * max(1.0, np.linalg.norm(A))

    mask = ~np.eye(n, dtype=bool)

    def off(B):
        return float(np.sqrt(np.sum(B[mask] ** 2)))

    for _ in range(max_sweeps):
        if off(A) <= threshold:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if apq == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J the (p, q) rotation
                ap = A[:, p].copy()
                aq = A[:, q].copy()
                A[:, p] = c * ap - s * aq
                A[:, q] = s * ap + c * aq
                ap = A[p, :].copy()
                aq = A[q, :].copy()
                A[p, :] = c * ap - s * aq
                A[q, :] = s * ap + c * aq
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    else:
        if off(A) > threshold:
            raise NumericalError("Jacobi iteration did not converge")
    w = np.diag(A).copy()
    order = np.argsort(w, kind="stable")
    return w[order], V[:, order]


@dataclass
class OracleInstance:
    gap: SpectralGapData
    pert: PerturbationData
    exact_eigvec_dist: float
    exact_eigval_shifts: list
    A: np.ndarray = field(repr=False)
    H: np.ndarray = field(repr=False)
    seed: Optional[int] = None


def oracle_from_matrices(A, H, seed=None):
    """Exact perturbation quantities for the symmetric pair (A, A + H)."""
    A = np.asarray(A, dtype=float)
    H = np.asarray(H, dtype=float)
    w, V = jacobi_eigh(A)
    w_hat, V_hat = jacobi_eigh(A + H)
    h_eigs, _ = jacobi_eigh(H)
    h_norm = float(np.max(np.abs(h_eigs)))
    gap = SpectralGapData(float(w[0]), float(w[1]))
    phi = V[:, 0]
    phi_hat = V_hat[:, 0]
    if phi @ phi_hat < 0:
        phi_hat = -phi_hat
    h_phi = H @ phi
    centred = h_phi - (h_phi @ phi) * phi
    pert = PerturbationData(h_norm, float(np.linalg.norm(h_phi)), float(np.linalg.norm(centred)))
    return OracleInstance(
        gap=gap,
        pert=pert,
        exact_eigvec_dist=float(np.linalg.norm(phi - phi_hat)),
        exact_eigval_shifts=(w_hat - w).tolist(),
        A=A,
        H=H,
        seed=seed,
    )


def finite_dim_oracle(dim, seed, h_fraction=None, max_retries=20):
    """Random symmetric PSD matrix with a simple ground eigenvalue and a random
    symmetric perturbation with ``||H|| = h_fraction * nu / 2``.

    ``h_fraction`` defaults to a draw from U(0.05, 0.95); pass 0 for H = 0.
    """
    if not 2 <= dim <= 12:
        raise DomainError("dim must lie in 2..12")
    rng = np.random.default_rng(seed)
    for _ in range(max_retries):
        Q, R = np.linalg.qr(rng.standard_normal((dim, dim)))
        Q = Q * np.sign(np.diag(R))
        eigs = np.sort(rng.uniform(0.0, 5.0, dim))
        if eigs[1] - eigs[0] < 0.05:
            continue
        A = (Q * eigs) @ Q.T
        A = 0.5 * (A + A.T)
        G = rng.standard_normal((dim, dim))
        G = 0.5 * (G + G.T)
        frac = rng.uniform(0.05, 0.95) if h_fraction is None else h_fraction
        g_norm = float(np.max(np.abs(jacobi_eigh(G)[0])))
        nu = float(eigs[1] - eigs[0])
        H = G * (frac * nu / 2.0 / g_norm)
        inst = oracle_from_matrices(A, H, seed=seed)
        if inst.gap.nu > 0 and inst.pert.h_opnorm < inst.gap.nu / 2 or frac == 0:
            return inst
    raise GenerationError(f"could not generate a non-degenerate instance for seed {seed}")
