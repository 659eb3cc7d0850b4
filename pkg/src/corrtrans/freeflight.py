"""Free-flight distance samplers for every extinction law.

Each sampler maps a uniform variate (or an RNG stream, for the
rejection-based one) to a flight distance and reports the exact density
it sampled from, so estimators can weight events without guessing.
Passing ``t_boundary`` clips the flight at a surface and reports the
probability mass beyond the clip point, which is what a tracer needs to
weight boundary hits.

Uniform inputs live in the half-open interval [0, 1). Keeping 1 out of
the domain protects the (1 - xi) powers of the heavy-tailed inversions
from blowing up.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from corrtrans.models import (
    extinction_prob_gamma,
    transmittance_gamma,
)

__all__ = [
    "DistanceSample",
    "sample_gamma_proportional",
    "sample_gamma_general",
    "sample_exponential",
    "sample_linear",
    "sample_gamma_pathlength",
    "standard_gamma_batch",
    "surface_hit_probability",
    "proportional_normalization",
]


class DistanceSample(NamedTuple):
    """A sampled flight distance plus the density it was drawn from.

    ``reached_boundary`` marks flights clipped at ``t_boundary``; only
    then is ``boundary_probability`` meaningful (the chance of sampling
    past the boundary, always in (0, 1]).
    """

    t: object
    pdf: object
    reached_boundary: object = False
    boundary_probability: object = None


def _prepare_xi(xi):
    arr = np.asarray(xi, dtype=np.float64)
    if np.any((arr < 0.0) | (arr >= 1.0)):
        raise ValueError("uniform variate must lie in [0, 1)")
    return arr, arr.ndim == 0


def _clip_at_boundary(t, pdf, t_boundary, exceed_probability, scalar):
    if t_boundary is None:
        if scalar:
            return DistanceSample(float(t), float(pdf))
        return DistanceSample(t, pdf, np.zeros(t.shape, dtype=bool), None)
    if t_boundary < 0.0:
        raise ValueError("boundary distance must be non-negative")
    reached = t >= t_boundary
    t = np.where(reached, t_boundary, t)
    if scalar:
        return DistanceSample(float(t), float(pdf), bool(reached), float(exceed_probability))
    return DistanceSample(t, pdf, reached, float(exceed_probability))


def proportional_normalization(alpha: float, beta: float, sigma: float = 1.0) -> float:
    """Integral of the transmittance over all distances, beta/(sigma (alpha-1)).

    This is the constant that turns T(t) into the proportional sampling
    density; it only exists for alpha > 1.
    """
    _check_proportional_args(alpha, beta, sigma)
    return beta / (sigma * (alpha - 1.0))


def _check_proportional_args(alpha: float, beta: float, sigma: float) -> None:
    if alpha <= 1.0:
        raise ValueError(
            "transmittance-proportional sampling needs alpha > 1 "
            "(the normalization integral diverges); use sample_gamma_general"
        )
    if beta <= 0.0 or sigma <= 0.0:
        raise ValueError("beta and sigma must be positive")


def sample_gamma_proportional(xi, alpha: float, beta: float, sigma: float = 1.0, t_boundary=None) -> DistanceSample:
    """Draw a distance with density proportional to the gamma transmittance.

    Inverts the CDF 1 - (1 + sigma t / beta)^(1 - alpha):

        t(xi) = (beta / sigma) ((1 - xi)^(-1/(alpha - 1)) - 1)

    The reported pdf is sigma (alpha - 1) / beta (1 + sigma t / beta)^(-alpha),
    i.e. T(t) normalized by its integral. Estimators that score a
    collision at t must therefore reweight by mu(t) times that integral.
    """
    arr, scalar = _prepare_xi(xi)
    _check_proportional_args(alpha, beta, sigma)
    t = (beta / sigma) * np.expm1(-np.log1p(-arr) / (alpha - 1.0))
    pdf = (sigma * (alpha - 1.0) / beta) * np.exp(-alpha * np.log1p(sigma * t / beta))
    exceed = None
    if t_boundary is not None:
        exceed = surface_hit_probability(t_boundary, alpha, beta, sigma)
    return _clip_at_boundary(t, pdf, t_boundary, exceed, scalar)


def sample_gamma_general(xi, alpha: float, beta: float, sigma: float = 1.0, t_boundary=None) -> DistanceSample:
    """Draw a free-flight distance from the gamma extinction density itself.

    Valid for every alpha > 0. The CDF is 1 - T(t), so

        t(xi) = (beta / sigma) ((1 - xi)^(-1/alpha) - 1)

    and the reported pdf is the extinction density at t. A boundary
    clip keeps probability T(t_boundary), the transmittance.
    """
    arr, scalar = _prepare_xi(xi)
    if alpha <= 0.0 or beta <= 0.0 or sigma <= 0.0:
        raise ValueError("alpha, beta and sigma must be positive")
    t = (beta / sigma) * np.expm1(-np.log1p(-arr) / alpha)
    pdf = extinction_prob_gamma(t, alpha, beta, sigma)
    exceed = None
    if t_boundary is not None:
        exceed = float(transmittance_gamma(t_boundary, alpha, beta, sigma))
    return _clip_at_boundary(t, pdf, t_boundary, exceed, scalar)


def sample_exponential(xi, mean_extinction: float, t_boundary=None) -> DistanceSample:
    """Classic exponential free flight: t = -ln(1 - xi) / mu."""
    arr, scalar = _prepare_xi(xi)
    if mean_extinction <= 0.0:
        raise ValueError("mean extinction must be positive")
    t = -np.log1p(-arr) / mean_extinction
    pdf = mean_extinction * np.exp(-mean_extinction * t)
    exceed = None
    if t_boundary is not None:
        exceed = math.exp(-mean_extinction * t_boundary)
    return _clip_at_boundary(t, pdf, t_boundary, exceed, scalar)


def sample_linear(xi, mean_extinction: float, t_boundary=None) -> DistanceSample:
    """Free flight in the maximally negatively correlated medium.

    The density is uniform up to the exhaustion distance 1 / mu, so the
    inversion is just t = xi / mu.
    """
    arr, scalar = _prepare_xi(xi)
    if mean_extinction <= 0.0:
        raise ValueError("mean extinction must be positive")
    t = arr / mean_extinction
    pdf = np.full_like(t, mean_extinction)
    exceed = None
    if t_boundary is not None:
        exceed = max(0.0, 1.0 - mean_extinction * t_boundary)
    return _clip_at_boundary(t, pdf, t_boundary, exceed, scalar)


# ---------------------------------------------------------------------------
# Gamma path lengths by rejection
# ---------------------------------------------------------------------------


def standard_gamma_batch(rng: np.random.Generator, shape: float, n: int) -> tuple[np.ndarray, int]:
    """Draw n standard Gamma(shape) variates by squeeze rejection.

    Returns (samples, proposals) where proposals counts every candidate
    normal drawn, accepted or not; the acceptance rate n / proposals
    exceeds 0.9 for shape >= 1. Shapes below 1 are drawn at shape + 1
    and boosted back with a uniform power, which consumes one extra
    uniform per sample but no extra proposals.
    """
    if shape <= 0.0:
        raise ValueError("shape must be positive")
    if n < 0:
        raise ValueError("sample count must be non-negative")
    boost = shape < 1.0
    k = shape + 1.0 if boost else shape
    d = k - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    out = np.empty(n, dtype=np.float64)
    filled = 0
    proposals = 0
    while filled < n:
        m = n - filled
        x = rng.standard_normal(m)
        proposals += m
        v = (1.0 + c * x) ** 3
        u = rng.random(m)
        ok = v > 0.0
        x2 = x * x
        squeeze = u < 1.0 - 0.0331 * x2 * x2
        with np.errstate(divide="ignore", invalid="ignore"):
            slow = np.log(u) < 0.5 * x2 + d * (1.0 - v + np.log(np.where(v > 0.0, v, 1.0)))
        accept = ok & (squeeze | slow)
        taken = np.count_nonzero(accept)
        out[filled : filled + taken] = d * v[accept]
        filled += taken
    if boost:
        out *= rng.random(n) ** (1.0 / shape)
    return out, proposals


def sample_gamma_pathlength(rng: np.random.Generator, shape: float, scale: float, size: int | None = None) -> DistanceSample:
    """Draw flight distances whose law is Gamma(shape, scale).

    Uses the squeeze/rejection construction for the standard gamma and
    multiplies by the scale. Pass ``size`` for a batch; omit it for a
    single scalar draw.
    """
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    n = 1 if size is None else int(size)
    raw, _proposals = standard_gamma_batch(rng, shape, n)
    t = raw * scale
    k = shape
    log_norm = math.lgamma(k) + k * math.log(scale)
    safe = np.where(t > 0.0, t, 1.0)
    pdf = np.exp((k - 1.0) * np.log(safe) - t / scale - log_norm)
    pdf = np.where(t > 0.0, pdf, 0.0 if k > 1.0 else (1.0 / scale if k == 1.0 else np.inf))
    if size is None:
        return DistanceSample(float(t[0]), float(pdf[0]))
    return DistanceSample(t, pdf, np.zeros(n, dtype=bool), None)


def surface_hit_probability(t_boundary: float, alpha: float, beta: float, sigma: float = 1.0) -> float:
    """Probability that a transmittance-proportional flight passes t_boundary.

    Equals (1 + sigma t' / beta)^(1 - alpha). Only defined for
    alpha > 1, like the sampler it complements.
    """
    if t_boundary < 0.0:
        raise ValueError("boundary distance must be non-negative")
    _check_proportional_args(alpha, beta, sigma)
    return float(np.exp((1.0 - alpha) * np.log1p(sigma * t_boundary / beta)))
