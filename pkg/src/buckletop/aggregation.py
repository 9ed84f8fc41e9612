"""Buckling constraint blocks: separate per-eigenvalue or aggregated.

Constraints are oriented so that g >= 0 means feasible.  The separate form
is g_i = Pc_bar * alpha^(1-i) * mu_i + 1.  Aggregated forms collapse the
block into one constraint g = Pc_bar * s * M[mu] + 1 where M is a smooth
envelope of the spectrum and s = mu_1 / M is the occasional rescaling that
re-anchors the envelope to the fundamental eigenvalue.

Sign conventions (the mu_i of interest are strictly negative):
  * pnorm_agg returns the signed power mean M = -(sum (-mu_i)^rho)^(1/rho),
    which lies below mu_1, so the single constraint is conservative.
  * ks_agg returns the log-sum-exp envelope M = lse(rho*mu)/rho >= mu_1
    (the textbook smooth-max identity).  ks_agg_lower returns the mirrored
    conservative envelope -lse(-rho*mu)/rho <= mu_1, whose softmax weights
    concentrate on the fundamental eigenvalue; the optimization path uses
    the lower orientation so the scaled constraint actually bounds the
    fundamental load factor from below.

All gradients are analytic derivatives of the implemented forms and are
finite-difference validated in the test suite.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp, softmax


def _check_negative(mu):
    mu = np.asarray(mu, dtype=float)
    if mu.ndim != 1 or mu.size == 0:
        raise ValueError("need a non-empty 1-D eigenvalue array")
    if np.any(mu >= 0):
        raise ValueError("tension-side eigenvalues (mu >= 0) must be filtered upstream")
    return mu


def separate_constraints(mu, Pc_bar, alpha):
    """Per-eigenvalue constraint values and gradient scale factors.

    Returns (g, coeff) with g_i = Pc_bar*alpha^(1-i)*mu_i + 1 and
    dg_i/dx = coeff_i * dmu_i/dx.
    """
    mu = _check_negative(mu)
    if alpha < 1.0:
        raise ValueError(f"gap factor must be >= 1, got {alpha}")
    i = np.arange(1, mu.size + 1)
    coeff = Pc_bar * alpha ** (1.0 - i)
    return coeff * mu + 1.0, coeff


def pnorm_agg(mu, rho):
    """Signed rho-norm envelope M <= mu_1 and its gradient weights dM/dmu."""
    mu = _check_negative(mu)
    if rho < 1.0:
        raise ValueError(f"aggregation exponent must be >= 1, got {rho}")
    y = -mu
    ymax = y.max()
    total = np.sum((y / ymax) ** rho)
    M = -ymax * total ** (1.0 / rho)
    weights = (y / -M) ** (rho - 1.0)
    return M, weights


def ks_agg(mu, rho):
    """KS envelope M >= mu_1 (smooth max) with softmax gradient weights."""
    mu = np.asarray(mu, dtype=float)
    if rho <= 0.0:
        raise ValueError(f"aggregation exponent must be positive, got {rho}")
    M = logsumexp(rho * mu) / rho
    return float(M), softmax(rho * mu)


def ks_agg_lower(mu, rho):
    """Conservative KS envelope M <= mu_1 with weights peaked at mu_1."""
    mu = np.asarray(mu, dtype=float)
    if rho <= 0.0:
        raise ValueError(f"aggregation exponent must be positive, got {rho}")
    M = -logsumexp(-rho * mu) / rho
    return float(M), softmax(-rho * mu)


def scale_factor(mu1, M):
    """Envelope rescaling s = mu_1 / M; held out of the constraint gradient."""
    if M == 0.0:
        raise ZeroDivisionError("aggregated measure is zero; cannot scale")
    return mu1 / M


@dataclass
class ConstraintSpec:
    """Configuration of the buckling constraint block."""

    kind: str = "separate"          # separate | pnorm | ks
    Pc_bar: float = 0.0
    alpha: float = 1.01
    rho: float = 100.0

    def __post_init__(self):
        if self.kind not in ("separate", "pnorm", "ks"):
            raise ValueError(f"unknown constraint kind {self.kind!r}")


def aggregate(mu, spec):
    """Dispatch to the envelope used by the optimization path."""
    if spec.kind == "pnorm":
        return pnorm_agg(mu, spec.rho)
    if spec.kind == "ks":
        return ks_agg_lower(mu, spec.rho)
    raise ValueError(f"constraint kind {spec.kind!r} is not aggregated")


def aggregated_constraint(mu, dmu_dx, spec, s=None):
    """Single aggregated constraint g = Pc_bar*s*M + 1 and its gradient.

    dmu_dx has one row per eigenvalue.  The scale factor s is held fixed
    (recomputed by the caller on continuation steps); s=None means compute
    it fresh from the current spectrum.
    """
    mu = _check_negative(mu)
    dmu_dx = np.atleast_2d(np.asarray(dmu_dx, dtype=float))
    if dmu_dx.shape[0] != mu.size:
        raise ValueError("one gradient row per eigenvalue required")
    M, weights = aggregate(mu, spec)
    if s is None:
        s = scale_factor(mu.min(), M)
    g = spec.Pc_bar * s * M + 1.0
    dg = spec.Pc_bar * s * (weights @ dmu_dx)
    return g, dg, s
