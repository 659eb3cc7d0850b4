"""Closed-form extinction models for spatially correlated media.

An extinction model bundles three linked functions of path length t:

* ``transmittance(t)``: probability that a ray travels at least t
  without colliding,
* ``extinction_density(t)``: probability density of the free path,
* ``differential_extinction(t)``: collision rate conditioned on
  survival to t.

They satisfy p(t) = -dT/dt and mu(t) = p(t) / T(t). Classic transport
is the special case where mu is constant and T is exponential; media
with spatial correlation in the scatterer concentration produce
non-exponential laws, which is what the other models here describe.

All evaluators accept a scalar or an ndarray for t and reject negative
values. Scalars in, floats out; arrays in, arrays out.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import integrate, special

__all__ = [
    "gamma_params",
    "transmittance_gamma",
    "extinction_prob_gamma",
    "diff_extinction_gamma",
    "linear_model_eval",
    "gamma_pathlength_eval",
    "two_mixture_pathlength",
    "transmittance_numeric",
    "directional_variance",
    "concentration_model",
    "model_from_spec",
    "mixture_combine",
    "extinction_from_samples",
    "ExponentialModel",
    "GammaConcentrationModel",
    "LinearNegativeModel",
    "GammaPathLengthModel",
    "GammaPathLengthEval",
    "MixtureComponent",
    "MixtureModel",
    "MixtureEvaluators",
    "DirectionalVariance",
    "ExtinctionCurve",
]

# Below this transmittance the gamma path-length hazard is evaluated at its
# asymptote instead of as p/T; see GammaPathLengthModel.evaluate.
TRANSMITTANCE_FLOOR = 1e-300


def _prepare_t(t):
    """Validate t >= 0 and return (array, was_scalar)."""
    arr = np.asarray(t, dtype=np.float64)
    if np.any(arr < 0.0):
        raise ValueError("path length t must be non-negative")
    return arr, arr.ndim == 0


def _maybe_scalar(arr: np.ndarray, scalar: bool):
    return float(arr) if scalar else arr


# ---------------------------------------------------------------------------
# Gamma concentration model
# ---------------------------------------------------------------------------


def gamma_params(mean_c: float, var_c: float) -> tuple[float, float]:
    """Shape and rate of the gamma law matching a concentration mean and variance.

    Returns (alpha, beta) with alpha = mean^2 / var and beta = mean / var.
    Both inputs must be positive; a zero variance has no gamma
    representation (use :func:`concentration_model`, which degenerates
    to the exponential model instead).
    """
    if mean_c <= 0.0:
        raise ValueError("mean concentration must be positive")
    if var_c <= 0.0:
        raise ValueError("concentration variance must be positive")
    return mean_c * mean_c / var_c, mean_c / var_c


def transmittance_gamma(t, alpha: float, beta: float, sigma: float = 1.0):
    """Transmittance (1 + sigma t / beta)^(-alpha) of the gamma model."""
    arr, scalar = _prepare_t(t)
    _check_gamma_args(alpha, beta, sigma)
    out = np.exp(-alpha * np.log1p(sigma * arr / beta))
    return _maybe_scalar(out, scalar)


def extinction_prob_gamma(t, alpha: float, beta: float, sigma: float = 1.0):
    """Free-path probability density of the gamma model.

    p(t) = (alpha sigma / beta) (sigma t / beta + 1)^(-(1 + alpha)),
    the negative derivative of :func:`transmittance_gamma`.
    """
    arr, scalar = _prepare_t(t)
    _check_gamma_args(alpha, beta, sigma)
    out = (alpha * sigma / beta) * np.exp(-(1.0 + alpha) * np.log1p(sigma * arr / beta))
    return _maybe_scalar(out, scalar)


def diff_extinction_gamma(t, alpha: float, beta: float, sigma: float = 1.0):
    """Collision rate mu(t) = sigma (alpha / beta) / (1 + sigma t / beta).

    Decays from the mean extinction sigma alpha / beta at t = 0 toward
    zero: survivors in a positively correlated medium are
    preferentially the rays that sit in low-density regions.
    """
    arr, scalar = _prepare_t(t)
    _check_gamma_args(alpha, beta, sigma)
    out = sigma * (alpha / beta) / (1.0 + sigma * arr / beta)
    return _maybe_scalar(out, scalar)


def _check_gamma_args(alpha: float, beta: float, sigma: float) -> None:
    if alpha <= 0.0 or beta <= 0.0:
        raise ValueError("gamma shape and rate must be positive")
    if sigma <= 0.0:
        raise ValueError("cross section must be positive")


@dataclass(frozen=True)
class GammaConcentrationModel:
    """Extinction law of a medium whose concentration is gamma distributed.

    Parameters
    ----------
    mean_concentration:
        Ensemble mean of the scatterer concentration, > 0.
    variance_concentration:
        Ensemble variance, > 0. The limit of vanishing variance is the
        exponential model; build it through :func:`concentration_model`
        rather than passing 0 here.
    cross_section:
        Scattering cross section sigma relating concentration to
        extinction, > 0.
    """

    mean_concentration: float
    variance_concentration: float
    cross_section: float = 1.0

    def __post_init__(self) -> None:
        if self.mean_concentration <= 0.0:
            raise ValueError("mean concentration must be positive")
        if self.variance_concentration <= 0.0:
            raise ValueError(
                "concentration variance must be positive; "
                "use concentration_model() for the zero-variance limit"
            )
        if self.cross_section <= 0.0:
            raise ValueError("cross section must be positive")

    @property
    def alpha(self) -> float:
        return self.mean_concentration ** 2 / self.variance_concentration

    @property
    def beta(self) -> float:
        return self.mean_concentration / self.variance_concentration

    @property
    def mean_extinction(self) -> float:
        """Ensemble mean collision rate, equal to mu(0)."""
        return self.mean_concentration * self.cross_section

    def transmittance(self, t):
        return transmittance_gamma(t, self.alpha, self.beta, self.cross_section)

    def extinction_density(self, t):
        return extinction_prob_gamma(t, self.alpha, self.beta, self.cross_section)

    def differential_extinction(self, t):
        return diff_extinction_gamma(t, self.alpha, self.beta, self.cross_section)


@dataclass(frozen=True)
class ExponentialModel:
    """Classic uncorrelated medium: constant collision rate."""

    mean_extinction: float

    def __post_init__(self) -> None:
        if self.mean_extinction <= 0.0:
            raise ValueError("mean extinction must be positive")

    def transmittance(self, t):
        arr, scalar = _prepare_t(t)
        return _maybe_scalar(np.exp(-self.mean_extinction * arr), scalar)

    def extinction_density(self, t):
        arr, scalar = _prepare_t(t)
        out = self.mean_extinction * np.exp(-self.mean_extinction * arr)
        return _maybe_scalar(out, scalar)

    def differential_extinction(self, t):
        arr, scalar = _prepare_t(t)
        return _maybe_scalar(np.full_like(arr, self.mean_extinction), scalar)


def concentration_model(mean_c: float, var_c: float, sigma: float = 1.0):
    """Build the extinction model for given concentration statistics.

    Returns a :class:`GammaConcentrationModel`, or an
    :class:`ExponentialModel` with mean extinction mean_c * sigma when
    the variance is (numerically) zero. Negative variance is rejected.
    """
    if var_c < 0.0:
        raise ValueError("concentration variance must be non-negative")
    if var_c < 1e-12:
        return ExponentialModel(mean_c * sigma)
    return GammaConcentrationModel(mean_c, var_c, sigma)


# ---------------------------------------------------------------------------
# Negatively correlated and path-length-parameterized models
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LinearNegativeModel:
    """Most negatively correlated medium at a given mean extinction.

    Transmittance falls linearly and hits zero at t = 1 / mu: no ray
    survives past one mean free path. The free-path density is uniform
    on [0, 1/mu) and the collision rate diverges as the cutoff nears.
    """

    mean_extinction: float

    def __post_init__(self) -> None:
        if self.mean_extinction <= 0.0:
            raise ValueError("mean extinction must be positive")

    @property
    def cutoff(self) -> float:
        return 1.0 / self.mean_extinction

    def transmittance(self, t):
        arr, scalar = _prepare_t(t)
        out = np.maximum(0.0, 1.0 - self.mean_extinction * arr)
        return _maybe_scalar(out, scalar)

    def extinction_density(self, t):
        arr, scalar = _prepare_t(t)
        out = np.where(arr < self.cutoff, self.mean_extinction, 0.0)
        return _maybe_scalar(out, scalar)

    def differential_extinction(self, t):
        arr, scalar = _prepare_t(t)
        with np.errstate(divide="ignore"):
            out = np.where(
                arr < self.cutoff,
                self.mean_extinction / (1.0 - self.mean_extinction * arr),
                0.0,
            )
        return _maybe_scalar(out, scalar)


class GammaPathLengthEval(NamedTuple):
    transmittance: object
    extinction_density: object
    differential_extinction: object
    saturated: object


@dataclass(frozen=True)
class GammaPathLengthModel:
    """Medium whose free-path length itself follows a gamma law.

    Parameterized by the mean and variance of the path length, from
    which shape = mean^2 / var and scale = var / mean. Unlike the
    concentration-side models this one can be super-exponential
    (shape > 1), with a hazard that grows toward the asymptote
    1 / scale instead of decaying.
    """

    mean_free_path: float
    variance_free_path: float

    def __post_init__(self) -> None:
        if self.mean_free_path <= 0.0 or self.variance_free_path <= 0.0:
            raise ValueError("path-length mean and variance must be positive")

    @property
    def shape(self) -> float:
        return self.mean_free_path ** 2 / self.variance_free_path

    @property
    def scale(self) -> float:
        return self.variance_free_path / self.mean_free_path

    @property
    def mean_extinction(self) -> float:
        """Collision rate at t = 0 (infinite for shape < 1, zero for shape > 1)."""
        k = self.shape
        if k == 1.0:
            return 1.0 / self.scale
        return math.inf if k < 1.0 else 0.0

    def transmittance(self, t):
        arr, scalar = _prepare_t(t)
        out = special.gammaincc(self.shape, arr / self.scale)
        return _maybe_scalar(out, scalar)

    def extinction_density(self, t):
        arr, scalar = _prepare_t(t)
        out = self._density(arr)
        return _maybe_scalar(out, scalar)

    def _density(self, arr: np.ndarray) -> np.ndarray:
        k, theta = self.shape, self.scale
        safe = np.where(arr > 0.0, arr, 1.0)
        logp = (k - 1.0) * np.log(safe) - arr / theta - math.lgamma(k) - k * math.log(theta)
        out = np.exp(logp)
        at_zero = arr == 0.0
        if np.any(at_zero):
            if k < 1.0:
                origin = np.inf
            elif k == 1.0:
                origin = 1.0 / theta
            else:
                origin = 0.0
            out = np.where(at_zero, origin, out)
        return out

    def evaluate(self, t) -> GammaPathLengthEval:
        """Evaluate T, p and mu together, saturating mu where T underflows.

        Past roughly 700 scale lengths the true transmittance drops
        below the smallest positive double and p / T is meaningless;
        there the hazard is pinned to its asymptote 1 / scale and the
        ``saturated`` flag is set.
        """
        arr, scalar = _prepare_t(t)
        T = special.gammaincc(self.shape, arr / self.scale)
        p = self._density(arr)
        saturated = T < TRANSMITTANCE_FLOOR
        with np.errstate(divide="ignore", invalid="ignore"):
            mu = np.where(saturated, 1.0 / self.scale, p / np.maximum(T, TRANSMITTANCE_FLOOR))
        return GammaPathLengthEval(
            _maybe_scalar(T, scalar),
            _maybe_scalar(p, scalar),
            _maybe_scalar(mu, scalar),
            bool(saturated) if scalar else saturated,
        )

    def differential_extinction(self, t):
        return self.evaluate(t).differential_extinction


def linear_model_eval(t, mean_extinction: float):
    """Evaluate (T, p, mu) of the linear negative-correlation law at t."""
    m = LinearNegativeModel(mean_extinction)
    return m.transmittance(t), m.extinction_density(t), m.differential_extinction(t)


def gamma_pathlength_eval(t, shape: float, scale: float) -> GammaPathLengthEval:
    """Evaluate the gamma path-length law with shape k and scale theta at t."""
    if shape <= 0.0 or scale <= 0.0:
        raise ValueError("shape and scale must be positive")
    return GammaPathLengthModel(shape * scale, shape * scale * scale).evaluate(t)


def two_mixture_pathlength(t, mu1: float, mu2: float, p1: float):
    """Free-path density of a stochastic blend of two exponential media.

    A ray lands in a medium of extinction mu1 with probability p1, else
    mu2, and the observed density is the mixture
    p1 mu1 e^(-mu1 t) + (1 - p1) mu2 e^(-mu2 t).
    """
    arr, scalar = _prepare_t(t)
    if mu1 <= 0.0 or mu2 <= 0.0:
        raise ValueError("mixture extinctions must be positive")
    if not 0.0 <= p1 <= 1.0:
        raise ValueError("mixture probability p1 must lie in [0, 1]")
    out = p1 * mu1 * np.exp(-mu1 * arr) + (1.0 - p1) * mu2 * np.exp(-mu2 * arr)
    return _maybe_scalar(out, scalar)


# ---------------------------------------------------------------------------
# Quadrature oracle
# ---------------------------------------------------------------------------


def transmittance_numeric(
    t,
    density: Callable[[float], float] | None = None,
    *,
    atoms: Sequence[tuple[float, float]] | None = None,
    mu_max: float | None = None,
    tol: float = 1e-10,
):
    """Ensemble transmittance by direct integration over the extinction law.

    The medium is described by the distribution of its (locally
    constant) extinction coefficient mu, either as a continuous
    ``density`` over mu >= 0, a list of ``atoms`` (weight, mu), or
    both. The transmittance is the expectation of e^(-mu t):

        T(t) = sum_i w_i e^(-mu_i t) + integral density(mu) e^(-mu t) dmu

    This routine is deliberately independent of every closed form in
    this module so it can serve as an oracle for them. The total
    probability mass must come out to 1 within 1e-9 or a ValueError is
    raised. When ``mu_max`` is not given, the integration cutoff is
    grown until the remaining tail mass is below 1e-12.
    """
    arr, scalar = _prepare_t(t)
    if density is None and atoms is None:
        raise ValueError("provide a density, atoms, or both")

    atom_w = np.zeros(0)
    atom_mu = np.zeros(0)
    if atoms is not None:
        atom_w = np.asarray([w for w, _ in atoms], dtype=np.float64)
        atom_mu = np.asarray([m for _, m in atoms], dtype=np.float64)
        if np.any(atom_w < 0.0) or np.any(atom_mu < 0.0):
            raise ValueError("atom weights and extinctions must be non-negative")

    mass = float(atom_w.sum())
    breakpoints = None
    if density is not None:
        if mu_max is None:
            mu_max = 1.0
            for _ in range(60):
                probe_mass = _scan_mass(density, mu_max)
                tail, _err = integrate.quad(density, mu_max, np.inf, epsabs=1e-14, limit=200)
                if probe_mass > 0.5 and abs(tail) < 1e-12:
                    break
                mu_max *= 2.0
            else:
                raise ValueError("could not locate a negligible-tail cutoff for the density")
        # Narrow spikes hide from adaptive subdivision on a wide interval;
        # a coarse scan finds the support so quad gets breakpoints.
        grid = np.linspace(0.0, mu_max, 8193)
        vals = np.asarray([density(x) for x in grid])
        if np.any(vals < 0.0):
            raise ValueError("extinction density must be non-negative")
        nz = np.nonzero(vals > vals.max() * 1e-15)[0] if vals.max() > 0.0 else np.zeros(0, int)
        if nz.size:
            breakpoints = [float(grid[max(nz[0] - 1, 0)]), float(grid[min(nz[-1] + 1, grid.size - 1)])]
        body, _err = integrate.quad(
            density, 0.0, mu_max, epsabs=tol, limit=400, points=breakpoints
        )
        mass += body
    if abs(mass - 1.0) > 1e-9:
        raise ValueError(f"extinction distribution has total mass {mass!r}, expected 1")

    flat = arr.reshape(-1)
    out = np.empty(flat.shape)
    for i, ti in enumerate(flat):
        val = float(np.dot(atom_w, np.exp(-atom_mu * ti)))
        if density is not None:
            part, _err = integrate.quad(
                lambda mu: density(mu) * math.exp(-mu * ti),
                0.0,
                mu_max,
                epsabs=tol,
                limit=400,
                points=breakpoints,
            )
            val += part
        out[i] = val
    out = out.reshape(arr.shape)
    return _maybe_scalar(out, scalar)


def _scan_mass(density: Callable[[float], float], hi: float) -> float:
    grid = np.linspace(0.0, hi, 4097)
    vals = np.asarray([density(x) for x in grid])
    return float(np.trapezoid(vals, grid))


# ---------------------------------------------------------------------------
# Directional statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectionalVariance:
    """Anisotropic concentration variance described by a 3x3 PSD matrix.

    ``variance_along(omega)`` gives the concentration variance seen by
    rays traveling in unit direction omega, defined as
    sqrt(omega^T V omega). An isotropic matrix v * I therefore yields
    sqrt(v) in every direction.
    """

    matrix: np.ndarray

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError("directional variance matrix must be 3x3")
        if not np.allclose(m, m.T, atol=1e-12):
            raise ValueError("directional variance matrix must be symmetric")
        scale = max(1.0, float(np.abs(m).max()))
        if np.linalg.eigvalsh(m).min() < -1e-12 * scale:
            raise ValueError("directional variance matrix must be positive semidefinite")
        object.__setattr__(self, "matrix", m)

    def variance_along(self, omega) -> float:
        return directional_variance(omega, self.matrix)

    def model_along(self, mean_c: float, omega, sigma: float = 1.0):
        """Extinction model seen by rays along omega.

        Directions where the projected variance vanishes get the
        exponential law, everything else the gamma law.
        """
        return concentration_model(mean_c, self.variance_along(omega), sigma)


def directional_variance(omega, matrix) -> float:
    """Concentration variance along a unit direction: sqrt(omega^T V omega)."""
    w = np.asarray(omega, dtype=np.float64)
    if w.shape != (3,):
        raise ValueError("direction must be a 3-vector")
    n = float(np.dot(w, w))
    if abs(n - 1.0) > 1e-9:
        raise ValueError("direction must be unit length")
    m = np.asarray(matrix, dtype=np.float64)
    q = float(w @ m @ w)
    if q < 0.0:
        if q < -1e-12 * max(1.0, float(np.abs(m).max())):
            raise ValueError("matrix is not positive semidefinite along this direction")
        q = 0.0
    return math.sqrt(q)


# ---------------------------------------------------------------------------
# Mixtures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixtureComponent:
    """One constituent of a stochastic medium blend."""

    weight: float
    model: object
    scattering_albedo: float = 1.0
    phase: object = "isotropic"

    def __post_init__(self) -> None:
        if self.weight < 0.0:
            raise ValueError("mixture weight must be non-negative")
        if not 0.0 <= self.scattering_albedo <= 1.0:
            raise ValueError("scattering albedo must lie in [0, 1]")


class MixtureEvaluators(NamedTuple):
    differential_extinction: Callable
    scattering_albedo: Callable
    phase_weights: Callable


@dataclass(frozen=True)
class MixtureModel:
    """Probabilistic blend of extinction models.

    A ray is governed by component k with probability w_k, so the
    observable statistics mix at the level of transmittance and
    free-path density:

        T(t) = sum_k w_k T_k(t)        p(t) = sum_k w_k p_k(t)

    and the effective collision rate is their ratio. Conditioned on a
    collision at t, the responsible component has posterior weight
    proportional to w_k p_k(t), which is what weights the albedo and
    the phase-function choice. At t = 0 the collision rate reduces to
    the plain weighted sum of the component rates.
    """

    components: tuple[MixtureComponent, ...]

    def __post_init__(self) -> None:
        comps = tuple(self.components)
        if not comps:
            raise ValueError("mixture needs at least one component")
        total = sum(c.weight for c in comps)
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"mixture weights sum to {total!r}, expected 1")
        object.__setattr__(self, "components", comps)

    @property
    def mean_extinction(self) -> float:
        return sum(c.weight * _mu0(c.model) for c in self.components)

    def transmittance(self, t):
        arr, scalar = _prepare_t(t)
        out = sum(c.weight * c.model.transmittance(arr) for c in self.components)
        return _maybe_scalar(out, scalar)

    def extinction_density(self, t):
        arr, scalar = _prepare_t(t)
        out = sum(c.weight * c.model.extinction_density(arr) for c in self.components)
        return _maybe_scalar(out, scalar)

    def differential_extinction(self, t):
        arr, scalar = _prepare_t(t)
        p = sum(c.weight * c.model.extinction_density(arr) for c in self.components)
        T = sum(c.weight * c.model.transmittance(arr) for c in self.components)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(T > 0.0, p / np.where(T > 0.0, T, 1.0), 0.0)
        return _maybe_scalar(out, scalar)

    def collision_weights(self, t) -> np.ndarray:
        """Posterior component probabilities given a collision at t."""
        arr, scalar = _prepare_t(t)
        raw = np.stack([c.weight * c.model.extinction_density(arr) for c in self.components])
        total = raw.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(total > 0.0, raw / np.where(total > 0.0, total, 1.0), 0.0)
        return w

    def scattering_albedo(self, t):
        """Probability that a collision at t scatters rather than absorbs."""
        arr, scalar = _prepare_t(t)
        raw = np.stack([c.weight * c.model.extinction_density(arr) for c in self.components])
        total = raw.sum(axis=0)
        albedos = np.asarray([c.scattering_albedo for c in self.components])
        num = (raw * albedos[:, None] if raw.ndim > 1 else raw * albedos).sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = np.where(total > 0.0, num / np.where(total > 0.0, total, 1.0), 0.0)
        return _maybe_scalar(out, scalar)

    def phase_weights(self, t) -> np.ndarray:
        """Probability of each component's phase function at a scattering event.

        Proportional to w_k p_k(t) Lambda_k: the collision posterior
        further weighted by each component's chance to scatter.
        """
        arr, scalar = _prepare_t(t)
        albedos = np.asarray([c.scattering_albedo for c in self.components])
        raw = np.stack([c.weight * c.model.extinction_density(arr) for c in self.components])
        raw = raw * (albedos[:, None] if raw.ndim > 1 else albedos)
        total = raw.sum(axis=0)
        with np.errstate(divide="ignore", invalid="ignore"):
            w = np.where(total > 0.0, raw / np.where(total > 0.0, total, 1.0), 0.0)
        return w


def _mu0(model) -> float:
    mu = model.differential_extinction(0.0)
    return float(mu)


def mixture_combine(components: Sequence[MixtureComponent]) -> MixtureEvaluators:
    """Bundle a component list into combined medium evaluators.

    Returns callables for the effective collision rate mu(t), the
    effective scattering albedo Lambda(t), and the per-component
    phase-selection weights at a scattering event.
    """
    mix = MixtureModel(tuple(components))
    return MixtureEvaluators(
        mix.differential_extinction,
        mix.scattering_albedo,
        mix.phase_weights,
    )


# ---------------------------------------------------------------------------
# Empirical curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExtinctionCurve:
    """Tabulated T, p and mu on a common strictly increasing abscissa.

    ``t[0]`` is always 0 with transmittance 1. Produced either from a
    closed-form model (:meth:`from_model`) or from free-path samples
    (:func:`extinction_from_samples`).
    """

    t: np.ndarray
    transmittance: np.ndarray
    extinction_density: np.ndarray
    differential_extinction: np.ndarray

    def __post_init__(self) -> None:
        t = np.asarray(self.t, dtype=np.float64)
        T = np.asarray(self.transmittance, dtype=np.float64)
        p = np.asarray(self.extinction_density, dtype=np.float64)
        mu = np.asarray(self.differential_extinction, dtype=np.float64)
        if not (t.shape == T.shape == p.shape == mu.shape) or t.ndim != 1 or t.size < 2:
            raise ValueError("curve columns must be equal-length 1D arrays of size >= 2")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0.0):
            raise ValueError("abscissa must start at 0 and increase strictly")
        if abs(T[0] - 1.0) > 1e-12:
            raise ValueError("transmittance at t = 0 must be 1")
        if np.any(np.diff(T) > 1e-12) or np.any(T < -1e-15):
            raise ValueError("transmittance must be non-increasing and non-negative")
        for name, col in (("t", t), ("transmittance", T), ("extinction_density", p), ("differential_extinction", mu)):
            object.__setattr__(self, name if name != "t" else "t", col)

    @classmethod
    def from_model(cls, model, t_max: float, n: int = 256) -> "ExtinctionCurve":
        if t_max <= 0.0:
            raise ValueError("t_max must be positive")
        if n < 2:
            raise ValueError("need at least two samples")
        t = np.linspace(0.0, t_max, n)
        return cls(
            t,
            np.asarray(model.transmittance(t), dtype=np.float64),
            np.asarray(model.extinction_density(t), dtype=np.float64),
            np.asarray(model.differential_extinction(t), dtype=np.float64),
        )


def extinction_from_samples(samples, bins: int = 128, t_max: float | None = None) -> ExtinctionCurve:
    """Estimate an extinction curve from free-path samples.

    Transmittance is the survival fraction at each bin's left edge, the
    density is a normalized histogram over [0, t_max), and the
    differential extinction is their pointwise ratio (zero where no
    rays survive). Samples at or beyond t_max only contribute to the
    survival counts, so the density columns are unaffected by the
    truncation point. t_max defaults to the 99.9th percentile.
    """
    s = np.asarray(samples, dtype=np.float64).reshape(-1)
    if s.size < 2:
        raise ValueError("need at least two samples")
    if np.any(s < 0.0) or not np.all(np.isfinite(s)):
        raise ValueError("samples must be finite and non-negative")
    if bins < 2:
        raise ValueError("need at least two bins")
    if t_max is None:
        t_max = float(np.quantile(s, 0.999))
    if t_max <= 0.0:
        raise ValueError("t_max must be positive")

    edges = np.linspace(0.0, float(t_max), bins + 1)
    t = edges[:-1].copy()
    n = s.size
    # Survival past each left edge. The first edge is 0 and every sample
    # is non-negative, so survival there is 1 by definition.
    T = np.empty(bins)
    T[0] = 1.0
    sorted_s = np.sort(s)
    T[1:] = 1.0 - np.searchsorted(sorted_s, t[1:], side="right") / n
    counts, _ = np.histogram(s, bins=edges)
    width = edges[1] - edges[0]
    p = counts / (n * width)
    with np.errstate(divide="ignore", invalid="ignore"):
        mu = np.where(T > 0.0, p / np.where(T > 0.0, T, 1.0), 0.0)
    return ExtinctionCurve(t, T, p, mu)


# ---------------------------------------------------------------------------
# Textual model specs
# ---------------------------------------------------------------------------


def model_from_spec(text: str):
    """Parse a model description like ``gamma:meanC=10,varC=40,sigma=1``.

    Supported families:

    * ``exponential:mu=M`` (alias ``exp``)
    * ``gamma:meanC=A,varC=B[,sigma=S]`` or ``gamma:alpha=A,beta=B[,sigma=S]``
    * ``linear:mu=M``
    * ``gammapath:meanT=A,varT=B`` or ``gammapath:k=K,theta=T``

    Raises ValueError on unknown families, unknown or missing keys, and
    non-numeric values. Key matching ignores case.
    """
    if not isinstance(text, str) or ":" not in text:
        raise ValueError(f"malformed model spec {text!r}, expected family:key=value,...")
    family, _, body = text.partition(":")
    family = family.strip().lower()
    kv: dict[str, float] = {}
    for item in body.split(","):
        item = item.strip()
        if not item:
            continue
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"malformed model spec item {item!r}")
        try:
            kv[key.strip().lower()] = float(value)
        except ValueError:
            raise ValueError(f"non-numeric value in model spec item {item!r}") from None

    def take(*names, default=None):
        for name in names:
            if name in kv:
                return kv.pop(name)
        if default is not None:
            return default
        raise ValueError(f"model spec {text!r} is missing one of {names}")

    if family in ("exponential", "exp"):
        model = ExponentialModel(take("mu"))
    elif family == "gamma":
        sigma = take("sigma", default=1.0)
        if "alpha" in kv or "beta" in kv:
            alpha, beta = take("alpha"), take("beta")
            mean_c, var_c = alpha / beta, alpha / (beta * beta)
        else:
            mean_c, var_c = take("meanc"), take("varc")
        model = concentration_model(mean_c, var_c, sigma)
    elif family == "linear":
        model = LinearNegativeModel(take("mu"))
    elif family == "gammapath":
        if "k" in kv or "theta" in kv:
            k, theta = take("k"), take("theta")
            model = GammaPathLengthModel(k * theta, k * theta * theta)
        else:
            model = GammaPathLengthModel(take("meant"), take("vart"))
    else:
        raise ValueError(f"unknown model family {family!r}")
    if kv:
        raise ValueError(f"unknown keys {sorted(kv)} in model spec {text!r}")
    return model
