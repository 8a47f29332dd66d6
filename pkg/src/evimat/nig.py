"""Normal-Inverse-Gamma evidential head.

The head maps four raw network outputs to NIG parameters
(gamma, omega, alpha, beta), exposes the closed-form uncertainty
moments, the evidential negative log-likelihood with its analytic
gradient, the evidence regularizer, and the Student-t marginal that
serves as an independent cross-check of the NLL.

Scalar entry points operate on NIGParams; the ``*_arrays`` variants
take/return numpy arrays and are what the training loop and the
per-pixel map code use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .special import digamma, lgamma, sigmoid, softplus

EPS_FLOOR = 1e-6
VAR_SIGMA2_SENTINEL = math.inf


class DomainError(ValueError):
    """Raised when inputs violate the documented parameter domains."""


@dataclass(frozen=True)
class NIGParams:
    """One NIG opinion: predicted mean and the three evidence parameters."""

    gamma: float
    omega: float
    alpha: float
    beta: float

    def __post_init__(self):
        vals = (self.gamma, self.omega, self.alpha, self.beta)
        if not all(math.isfinite(v) for v in vals):
            raise DomainError(f"non-finite NIG parameters {vals}")
        if self.omega <= 0 or self.alpha <= 1 or self.beta <= 0:
            raise DomainError(
                f"need omega>0, alpha>1, beta>0, got "
                f"omega={self.omega}, alpha={self.alpha}, beta={self.beta}"
            )


@dataclass(frozen=True)
class UncertaintyTriple:
    """Closed-form uncertainty moments of a NIG opinion."""

    aleatoric: float  # E[sigma^2]
    epistemic: float  # Var[gamma]
    var_sigma2: float  # Var[sigma^2]; +inf sentinel when alpha <= 2


@dataclass
class NIGMap:
    """Per-pixel NIG parameters as four same-shaped float32 planes."""

    gamma: np.ndarray
    omega: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        shapes = {a.shape for a in (self.gamma, self.omega, self.alpha, self.beta)}
        if len(shapes) != 1:
            raise ValueError(f"NIGMap planes disagree on shape: {shapes}")

    @property
    def shape(self) -> tuple[int, int]:
        return self.gamma.shape

    def at(self, row: int, col: int) -> NIGParams:
        return NIGParams(
            float(self.gamma[row, col]),
            float(self.omega[row, col]),
            float(self.alpha[row, col]),
            float(self.beta[row, col]),
        )

    def validate(self) -> None:
        for name, plane in (
            ("gamma", self.gamma),
            ("omega", self.omega),
            ("alpha", self.alpha),
            ("beta", self.beta),
        ):
            if not np.all(np.isfinite(plane)):
                raise DomainError(f"non-finite values in {name} plane")
        if self.gamma.min() < 0 or self.gamma.max() > 1:
            raise DomainError("gamma plane outside [0, 1]")
        if self.omega.min() <= 0 or self.alpha.min() <= 1 or self.beta.min() <= 0:
            raise DomainError("evidence planes violate omega>0, alpha>1, beta>0")


# --- activation -------------------------------------------------------------

def activate_arrays(raw: np.ndarray):
    """Map 4 raw channels (first axis) to (gamma, omega, alpha, beta) arrays.

    gamma = sigmoid(r0); omega = softplus(r1) + eps;
    alpha = 1 + softplus(r2) + eps; beta = softplus(r3) + eps.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape[0] != 4:
        raise ValueError(f"expected 4 raw channels, got {raw.shape[0]}")
    if not np.all(np.isfinite(raw)):
        raise DomainError("non-finite raw head outputs")
    g = sigmoid(raw[0])
    w = softplus(raw[1]) + EPS_FLOOR
    a = 1.0 + softplus(raw[2]) + EPS_FLOOR
    b = softplus(raw[3]) + EPS_FLOOR
    return g, w, a, b


def activate_grads(raw: np.ndarray):
    """d(gamma,omega,alpha,beta)/d(raw channel) for each of the 4 channels."""
    raw = np.asarray(raw, dtype=np.float64)
    g = sigmoid(raw[0])
    return (
        g * (1.0 - g),          # dgamma/dr0
        sigmoid(raw[1]),        # domega/dr1  (softplus' = sigmoid)
        sigmoid(raw[2]),        # dalpha/dr2
        sigmoid(raw[3]),        # dbeta/dr3
    )


def activate(raw: tuple[float, float, float, float] | np.ndarray) -> NIGParams:
    raw = np.asarray(raw, dtype=np.float64)
    if raw.shape != (4,):
        raise ValueError("activate takes exactly 4 raw values")
    g, w, a, b = activate_arrays(raw.reshape(4, 1))
    return NIGParams(float(g[0]), float(w[0]), float(a[0]), float(b[0]))


# --- moments ----------------------------------------------------------------

def moments_arrays(gamma, omega, alpha, beta):
    """(aleatoric, epistemic, var_sigma2) arrays; inf sentinel at alpha<=2.

    epistemic is computed as aleatoric/omega so the algebraic identity
    Var[gamma] = E[sigma^2]/omega holds bit-for-bit.
    """
    omega = np.asarray(omega, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    aleatoric = beta / (alpha - 1.0)
    epistemic = aleatoric / omega
    ok = alpha > 2.0
    var_sigma2 = np.where(
        ok, aleatoric * aleatoric / np.where(ok, alpha - 2.0, 1.0), VAR_SIGMA2_SENTINEL
    )
    return aleatoric, epistemic, var_sigma2


def moments(p: NIGParams) -> UncertaintyTriple:
    al, ep, vs = moments_arrays(p.gamma, p.omega, p.alpha, p.beta)
    return UncertaintyTriple(float(al), float(ep), float(vs))


def map_moments(m: NIGMap):
    """Uncertainty planes of a NIGMap as float32 (aleatoric, epistemic, var_sigma2)."""
    al, ep, vs = moments_arrays(m.gamma, m.omega, m.alpha, m.beta)
    return al.astype(np.float32), ep.astype(np.float32), vs.astype(np.float32)


# --- losses -----------------------------------------------------------------

def nll_arrays(y, gamma, omega, alpha, beta):
    """Evidential NLL: 1/2 log(pi/omega) - alpha log(Omega)
    + (alpha+1/2) log((y-gamma)^2 omega + Omega) + lnG(alpha) - lnG(alpha+1/2),
    with Omega = 2 beta (1 + omega)."""
    y = np.asarray(y, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    big_omega = 2.0 * beta * (1.0 + omega)
    resid2 = (y - gamma) ** 2
    return (
        0.5 * np.log(np.pi / omega)
        - alpha * np.log(big_omega)
        + (alpha + 0.5) * np.log(resid2 * omega + big_omega)
        + lgamma(alpha)
        - lgamma(alpha + 0.5)
    )


def nll(y: float, p: NIGParams) -> float:
    return float(nll_arrays(y, p.gamma, p.omega, p.alpha, p.beta))


def regularizer_arrays(y, gamma, omega, alpha):
    """Evidence penalty |y - gamma| * (2 omega + alpha)."""
    y = np.asarray(y, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    return np.abs(y - gamma) * (2.0 * np.asarray(omega, dtype=np.float64) + alpha)


def regularizer(y: float, p: NIGParams) -> float:
    return float(regularizer_arrays(y, p.gamma, p.omega, p.alpha))


def total_loss_arrays(y, gamma, omega, alpha, beta, lam: float):
    if lam < 0:
        raise DomainError("lambda must be >= 0")
    out = nll_arrays(y, gamma, omega, alpha, beta)
    if lam:
        out = out + lam * regularizer_arrays(y, gamma, omega, alpha)
    return out


def total_loss(y: float, p: NIGParams, lam: float) -> float:
    return float(total_loss_arrays(y, p.gamma, p.omega, p.alpha, p.beta, lam))


def nll_grad_arrays(y, gamma, omega, alpha, beta):
    """Analytic (d/dgamma, d/domega, d/dalpha, d/dbeta) of nll_arrays."""
    y = np.asarray(y, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    big_omega = 2.0 * beta * (1.0 + omega)
    resid = y - gamma
    denom = resid * resid * omega + big_omega
    d_gamma = -2.0 * omega * resid * (alpha + 0.5) / denom
    d_omega = (
        -0.5 / omega
        - alpha / (1.0 + omega)
        + (alpha + 0.5) * (resid * resid + 2.0 * beta) / denom
    )
    d_alpha = -np.log(big_omega) + np.log(denom) + digamma(alpha) - digamma(alpha + 0.5)
    d_beta = -alpha / beta + (alpha + 0.5) * 2.0 * (1.0 + omega) / denom
    return d_gamma, d_omega, d_alpha, d_beta


def nll_grad(y: float, p: NIGParams) -> tuple[float, float, float, float]:
    g = nll_grad_arrays(y, p.gamma, p.omega, p.alpha, p.beta)
    return tuple(float(v) for v in g)


def regularizer_grad_arrays(y, gamma, omega, alpha):
    """Subgradient of the evidence penalty (0 at y == gamma)."""
    y = np.asarray(y, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    s = np.sign(gamma - y)
    absres = np.abs(y - gamma)
    return s * (2.0 * omega + alpha), 2.0 * absres, absres, np.zeros_like(absres)


# --- Student-t marginal -----------------------------------------------------

def student_t_logpdf_arrays(y, gamma, omega, alpha, beta):
    """Log-density of the NIG marginal St(y; gamma, beta(1+omega)/(omega alpha), 2 alpha).

    Written in the standard Student-t parameterization, deliberately a
    different route than nll_arrays; the two must sum to zero.
    """
    y = np.asarray(y, dtype=np.float64)
    gamma = np.asarray(gamma, dtype=np.float64)
    omega = np.asarray(omega, dtype=np.float64)
    alpha = np.asarray(alpha, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    nu = 2.0 * alpha
    scale2 = beta * (1.0 + omega) / (omega * alpha)
    z2 = (y - gamma) ** 2 / scale2
    return (
        lgamma(0.5 * (nu + 1.0))
        - lgamma(0.5 * nu)
        - 0.5 * np.log(nu * np.pi * scale2)
        - 0.5 * (nu + 1.0) * np.log1p(z2 / nu)
    )


def student_t_logpdf(y: float, p: NIGParams) -> float:
    return float(student_t_logpdf_arrays(y, p.gamma, p.omega, p.alpha, p.beta))
