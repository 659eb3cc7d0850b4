"""Brute-force 2D particle fields for validating extinction statistics.

Media are explicit collections of disk scatterers in a periodic unit
square. Three constructions cover the correlation range: a jittered
triangular lattice for negative correlation, an exponential-step random
walk (optionally split into several walk clusters) for positive
correlation, and plain uniform placement as the control. Free-path
statistics measured against these fields are the ground truth that the
closed-form models have to reproduce.

Rays are traced exactly: nearest disk intersection, periodic wrapping,
a uniform grid for acceleration, and a brute-force scan kept alongside
as a self-check oracle.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit

from corrtrans import rng

__all__ = [
    "DEFAULT_RADIUS",
    "DEFAULT_LAUNCH_ANGLE",
    "ParticleField2D",
    "FreePathHistogram",
    "BoundaryExperiment",
    "SeedSharingStrategy",
    "particle_count_for_extinction",
    "gen_negative_medium",
    "gen_positive_medium",
    "gen_uncorrelated_medium",
    "trace_ray_periodic",
    "trace_ray_bruteforce",
    "trace_rays",
    "estimate_free_paths",
    "run_boundary_experiment",
    "fit_exponential",
]

DEFAULT_RADIUS = 1e-5

# Oblique launch angle, atan of the golden-ratio conjugate. An
# irrational slope keeps a wrapped ray from retracing the same periodic
# strip, which would freeze the statistics of long flights.
DEFAULT_LAUNCH_ANGLE = 0.5535743588970452

_GRID_MIN_CELLS = 10
_GRID_MAX_CELLS = 1024


def particle_count_for_extinction(mean_extinction: float, radius: float = DEFAULT_RADIUS) -> int:
    """Particles needed in the unit box for a target mean extinction.

    A disk of radius r presents a 2D cross-section of 2r, so the mean
    collision rate of a field of number density n is n * 2r.
    """
    if mean_extinction <= 0.0 or radius <= 0.0:
        raise ValueError("mean extinction and radius must be positive")
    return max(1, round(mean_extinction / (2.0 * radius)))


@dataclass
class ParticleField2D:
    """Disk scatterers in the periodic unit square."""

    positions: np.ndarray
    radius: float
    correlation: float
    kind: str
    cluster_seeds: np.ndarray | None = None
    _grid: tuple | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        pos = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64).reshape(-1, 2))
        if self.radius <= 0.0:
            raise ValueError("particle radius must be positive")
        if not -1.0 <= self.correlation < 1.0:
            raise ValueError("correlation degree must lie in [-1, 1)")
        if pos.size and (pos.min() < 0.0 or pos.max() >= 1.0):
            pos = np.mod(pos, 1.0)
        self.positions = pos

    @property
    def count(self) -> int:
        return self.positions.shape[0]

    @property
    def mean_extinction(self) -> float:
        return self.count * 2.0 * self.radius

    def grid(self) -> tuple:
        if self._grid is None:
            self._grid = _build_grid(self.positions, self.radius, self.mean_extinction)
        return self._grid


def _build_grid(positions: np.ndarray, radius: float, mean_extinction: float) -> tuple:
    """Bin every disk into each grid cell it overlaps.

    Cell size targets twice the mean free path; the per-axis count is
    clamped to [10, 1024]. Registering disks in all overlapped cells
    means traversal only ever has to look at the current cell.
    """
    mfp = 1.0 / mean_extinction if mean_extinction > 0.0 else 1.0
    nc = int(np.clip(round(1.0 / (2.0 * mfp)), _GRID_MIN_CELLS, _GRID_MAX_CELLS))
    n = positions.shape[0]
    if n == 0:
        return nc, np.zeros(nc * nc + 1, dtype=np.int64), np.zeros(0, dtype=np.int64)
    pairs = []
    for ox in (-radius, radius):
        for oy in (-radius, radius):
            cx = np.mod(np.floor((positions[:, 0] + ox) * nc).astype(np.int64), nc)
            cy = np.mod(np.floor((positions[:, 1] + oy) * nc).astype(np.int64), nc)
            pairs.append((cy * nc + cx) * n + np.arange(n, dtype=np.int64))
    keys = np.unique(np.concatenate(pairs))
    cells = keys // n
    items = keys % n
    counts = np.bincount(cells, minlength=nc * nc)
    cell_start = np.zeros(nc * nc + 1, dtype=np.int64)
    np.cumsum(counts, out=cell_start[1:])
    return nc, cell_start, np.ascontiguousarray(items)


# ---------------------------------------------------------------------------
# Field generators
# ---------------------------------------------------------------------------


def gen_negative_medium(
    count: int, correlation: float, radius: float = DEFAULT_RADIUS, seed: int = 0
) -> ParticleField2D:
    """Jittered triangular lattice: negatively correlated positions.

    Sites sit at the centers of a triangular tiling (each particle
    mid-hexagon relative to its six neighbors). Every site gets a tiny
    deterministic displacement of 0.1 r so no particle hides exactly
    behind another along a lattice axis, and with probability
    1 - |c| a stochastic displacement of length -ln(xi) (1 - |c|)^2 in
    a uniform direction. c = -1 is the frozen lattice; c = 0 perturbs
    every site with unbounded mean displacement, which matches the
    uncorrelated field statistically.
    """
    if count < 1:
        raise ValueError("particle count must be at least 1")
    if not -1.0 <= correlation <= 0.0:
        raise ValueError("lattice construction covers correlation in [-1, 0]")
    gen = rng.stream(seed, 7001)
    # Triangular lattice geometry: row spacing is sqrt(3)/2 times the
    # in-row spacing, with alternate rows offset by half a step.
    cols = max(1, round(math.sqrt(count * math.sqrt(3.0) / 2.0)))
    rows = max(1, round(count / cols))
    dx = 1.0 / cols
    dy = 1.0 / rows
    if dx < 2.0 * radius or dy < 2.0 * radius:
        warnings.warn("lattice spacing below disk diameter; disks overlap deterministically")
    iy, ix = np.mgrid[0:rows, 0:cols]
    x = (ix + 0.5 + 0.25 * ((-1.0) ** iy)) * dx
    y = (iy + 0.5) * dy
    pos = np.column_stack([x.ravel(), y.ravel()])
    n = pos.shape[0]
    # Deterministic jitter: direction from a low-discrepancy angle
    # sequence, fixed magnitude 0.1 r.
    ang = 2.0 * math.pi * np.mod(np.arange(n) * 0.6180339887498949, 1.0)
    pos += 0.1 * radius * np.column_stack([np.cos(ang), np.sin(ang)])
    strength = 1.0 - abs(correlation)
    perturb = gen.random(n) < strength
    if np.any(perturb):
        k = int(perturb.sum())
        s = -np.log1p(-gen.random(k)) * strength * strength
        theta = 2.0 * math.pi * gen.random(k)
        pos[perturb] += (s[:, None]) * np.column_stack([np.cos(theta), np.sin(theta)])
    return ParticleField2D(np.mod(pos, 1.0), radius, correlation, "negative-lattice")


def gen_positive_medium(
    count: int,
    correlation: float,
    radius: float = DEFAULT_RADIUS,
    seed: int = 0,
    clusters: int = 1,
    seed_points: np.ndarray | None = None,
) -> ParticleField2D:
    """Random-walk clusters: positively correlated positions.

    Each cluster starts at a uniform point (or a caller-supplied seed
    point) and performs a walk with exponential step lengths of mean
    (1 - c)^2 in uniform directions; the visited points are the
    particles. c near 0 makes steps of order the box size, which is
    statistically uniform; c near 1 packs the walk into tight clumps.
    ``clusters`` splits the particle budget over independent walks and
    is the handle the boundary-experiment strategies use.
    """
    if count < 1:
        raise ValueError("particle count must be at least 1")
    if not 0.0 < correlation < 1.0:
        raise ValueError("walk construction covers correlation in (0, 1)")
    gen = rng.stream(seed, 7002)
    if seed_points is not None:
        starts = np.asarray(seed_points, dtype=np.float64).reshape(-1, 2)
        clusters = starts.shape[0]
    else:
        if clusters < 1:
            raise ValueError("cluster count must be at least 1")
        starts = gen.random((clusters, 2))
    step_mean = (1.0 - correlation) ** 2
    base = count // clusters
    extra = count - base * clusters
    chunks = []
    for j in range(clusters):
        m = base + (1 if j < extra else 0)
        if m == 0:
            continue
        s = -np.log1p(-gen.random(m - 1)) * step_mean
        theta = 2.0 * math.pi * gen.random(m - 1)
        steps = np.column_stack([s * np.cos(theta), s * np.sin(theta)])
        walk = starts[j] + np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])
        chunks.append(walk)
    pos = np.mod(np.vstack(chunks), 1.0)
    return ParticleField2D(pos, radius, correlation, "positive-walk", cluster_seeds=starts.copy())


def gen_uncorrelated_medium(count: int, radius: float = DEFAULT_RADIUS, seed: int = 0) -> ParticleField2D:
    """Uniform independent positions: the classic control field."""
    if count < 1:
        raise ValueError("particle count must be at least 1")
    gen = rng.stream(seed, 7003)
    return ParticleField2D(gen.random((count, 2)), radius, 0.0, "uncorrelated")


# ---------------------------------------------------------------------------
# Exact ray tracing
# ---------------------------------------------------------------------------


@njit(cache=True)
def _trace_one(ox, oy, dx, dy, t_max, nc, cell_start, items, px, py, radius):
    r2 = radius * radius
    inv_nc = 1.0 / nc
    ix = int(math.floor(ox * nc))
    iy = int(math.floor(oy * nc))
    if dx > 0.0:
        sx = 1
        tdx = inv_nc / dx
        tmx = ((ix + 1) * inv_nc - ox) / dx
    elif dx < 0.0:
        sx = -1
        tdx = -inv_nc / dx
        tmx = (ix * inv_nc - ox) / dx
    else:
        sx = 0
        tdx = math.inf
        tmx = math.inf
    if dy > 0.0:
        sy = 1
        tdy = inv_nc / dy
        tmy = ((iy + 1) * inv_nc - oy) / dy
    elif dy < 0.0:
        sy = -1
        tdy = -inv_nc / dy
        tmy = (iy * inv_nc - oy) / dy
    else:
        sy = 0
        tdy = math.inf
        tmy = math.inf

    best = math.inf
    while True:
        t_exit = tmx if tmx < tmy else tmy
        if t_exit > t_max:
            t_exit = t_max
        bx = ix // nc
        by = iy // nc
        cell = (iy - by * nc) * nc + (ix - bx * nc)
        ccx = (ix + 0.5) * inv_nc
        ccy = (iy + 0.5) * inv_nc
        for k in range(cell_start[cell], cell_start[cell + 1]):
            j = items[k]
            cx = px[j]
            cy = py[j]
            # Pick the periodic image nearest this cell.
            cx += math.floor(ccx - cx + 0.5)
            cy += math.floor(ccy - cy + 0.5)
            qx = cx - ox
            qy = cy - oy
            b = qx * dx + qy * dy
            if b <= -radius:
                continue
            perp = qx * dy - qy * dx
            c2 = perp * perp
            if c2 > r2:
                continue
            root = b - math.sqrt(r2 - c2)
            if 0.0 <= root < best:
                best = root
        if best <= t_exit:
            if best <= t_max:
                return best, True
            return t_max, False
        if t_exit >= t_max:
            return t_max, False
        if tmx < tmy:
            ix += sx
            tmx += tdx
        else:
            iy += sy
            tmy += tdy


@njit(cache=True)
def _trace_batch(origins, directions, t_max, nc, cell_start, items, px, py, radius):
    n = origins.shape[0]
    ts = np.empty(n, dtype=np.float64)
    hits = np.zeros(n, dtype=np.bool_)
    for i in range(n):
        t, hit = _trace_one(
            origins[i, 0], origins[i, 1], directions[i, 0], directions[i, 1],
            t_max, nc, cell_start, items, px, py, radius,
        )
        ts[i] = t
        hits[i] = hit
    return ts, hits


@njit(cache=True)
def _brute_one(ox, oy, dx, dy, t_max, px, py, radius):
    r2 = radius * radius
    xlo = min(ox, ox + dx * t_max) - radius
    xhi = max(ox, ox + dx * t_max) + radius
    ylo = min(oy, oy + dy * t_max) - radius
    yhi = max(oy, oy + dy * t_max) + radius
    best = math.inf
    for j in range(px.shape[0]):
        for bx in range(int(math.floor(xlo - px[j])), int(math.floor(xhi - px[j])) + 2):
            cx = px[j] + bx
            if cx < xlo or cx > xhi:
                continue
            for by in range(int(math.floor(ylo - py[j])), int(math.floor(yhi - py[j])) + 2):
                cy = py[j] + by
                if cy < ylo or cy > yhi:
                    continue
                qx = cx - ox
                qy = cy - oy
                b = qx * dx + qy * dy
                if b <= -radius:
                    continue
                perp = qx * dy - qy * dx
                c2 = perp * perp
                if c2 > r2:
                    continue
                root = b - math.sqrt(r2 - c2)
                if 0.0 <= root < best:
                    best = root
    if best <= t_max:
        return best, True
    return t_max, False


def _check_direction(direction) -> np.ndarray:
    d = np.asarray(direction, dtype=np.float64).reshape(2)
    norm = math.hypot(d[0], d[1])
    if norm == 0.0:
        raise ValueError("ray direction must be nonzero")
    if abs(norm - 1.0) > 1e-9:
        raise ValueError("ray direction must be unit length")
    return d


def trace_ray_periodic(field: ParticleField2D, origin, direction, t_max: float) -> tuple[float, bool]:
    """Nearest disk hit along a wrapped ray, or (t_max, False) on escape."""
    if t_max <= 0.0:
        raise ValueError("t_max must be positive")
    o = np.mod(np.asarray(origin, dtype=np.float64).reshape(2), 1.0)
    d = _check_direction(direction)
    nc, cell_start, items = field.grid()
    t, hit = _trace_one(
        o[0], o[1], d[0], d[1], float(t_max), nc, cell_start, items,
        field.positions[:, 0], field.positions[:, 1], field.radius,
    )
    return float(t), bool(hit)


def trace_ray_bruteforce(field: ParticleField2D, origin, direction, t_max: float) -> tuple[float, bool]:
    """Reference tracer testing every particle image; no acceleration."""
    if t_max <= 0.0:
        raise ValueError("t_max must be positive")
    o = np.mod(np.asarray(origin, dtype=np.float64).reshape(2), 1.0)
    d = _check_direction(direction)
    t, hit = _brute_one(
        o[0], o[1], d[0], d[1], float(t_max),
        field.positions[:, 0], field.positions[:, 1], field.radius,
    )
    return float(t), bool(hit)


def trace_rays(field: ParticleField2D, origins: np.ndarray, directions: np.ndarray, t_max: float):
    """Batch variant of :func:`trace_ray_periodic` (origins wrapped, unit directions)."""
    o = np.ascontiguousarray(np.mod(np.asarray(origins, dtype=np.float64), 1.0))
    d = np.ascontiguousarray(np.asarray(directions, dtype=np.float64))
    nc, cell_start, items = field.grid()
    return _trace_batch(
        o, d, float(t_max), nc, cell_start, items,
        field.positions[:, 0], field.positions[:, 1], field.radius,
    )


# ---------------------------------------------------------------------------
# Free-path statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FreePathHistogram:
    """Binned free-path record over an ensemble of field realizations.

    Counts are integers so merging realizations is exact regardless of
    order. Flights that neither hit nor stop before ``t_max`` land in
    the overflow count, keeping the survival column unbiased.
    """

    origin_class: str
    theta: float | None
    edges: np.ndarray
    counts: np.ndarray
    overflow: int
    realizations: int
    samples_per_realization: int
    counts_by_realization: np.ndarray | None = None
    samples: np.ndarray | None = None

    @property
    def total(self) -> int:
        return self.realizations * self.samples_per_realization

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def width(self) -> float:
        return float(self.edges[1] - self.edges[0])

    @property
    def density(self) -> np.ndarray:
        return self.counts / (self.total * self.width)

    @property
    def density_stderr(self) -> np.ndarray:
        frac = self.counts / self.total
        return np.sqrt(np.maximum(frac * (1.0 - frac), 0.0) / self.total) / self.width

    @property
    def survival(self) -> np.ndarray:
        """Survival fraction at each bin's right edge."""
        return 1.0 - np.cumsum(self.counts) / self.total

    @property
    def escape_fraction(self) -> float:
        return self.overflow / self.total

    def window_density_by_realization(self, t_lo: float, t_hi: float) -> np.ndarray:
        """Mean free-path density over (t_lo, t_hi], one value per realization.

        Rays launched into one field realization share that field, so
        per-ray (binomial) errors understate the uncertainty whenever
        the medium itself fluctuates. Statistics across these values
        carry the honest field-to-field scatter.
        """
        if self.counts_by_realization is None:
            raise ValueError("histogram was built without per-realization counts")
        sel = (self.edges[1:] > t_lo) & (self.edges[1:] <= t_hi)
        if not np.any(sel):
            raise ValueError("window contains no bins")
        mass = self.counts_by_realization[:, sel].sum(axis=1)
        return mass / (self.samples_per_realization * self.width * sel.sum())


def _histogram_from_distances(
    distances: np.ndarray,
    hits: np.ndarray,
    t_max: float,
    bins: int,
    origin_class: str,
    theta: float | None,
    realizations: int,
    samples: int,
    keep_samples: bool,
) -> FreePathHistogram:
    edges = np.linspace(0.0, t_max, bins + 1)
    recorded = hits & (distances < t_max)
    per_real = np.empty((realizations, bins), dtype=np.int64)
    for i in range(realizations):
        row = slice(i * samples, (i + 1) * samples)
        per_real[i], _ = np.histogram(distances[row][recorded[row]], bins=edges)
    counts = per_real.sum(axis=0)
    overflow = int(distances.size - recorded.sum())
    return FreePathHistogram(
        origin_class,
        theta,
        edges,
        counts,
        overflow,
        realizations,
        samples,
        counts_by_realization=per_real,
        samples=distances.copy() if keep_samples else None,
    )


def _launch(field: ParticleField2D, origin_class: str, theta: float, n: int, gen: np.random.Generator):
    if origin_class == "source":
        origins = np.column_stack([np.zeros(n), gen.random(n)])
        directions = np.tile([math.cos(theta), math.sin(theta)], (n, 1))
    elif origin_class == "scatterer":
        if field.count == 0:
            raise ValueError("scatterer launches need a non-empty field")
        idx = gen.integers(0, field.count, size=n)
        origins = field.positions[idx]
        ang = 2.0 * math.pi * gen.random(n)
        directions = np.column_stack([np.cos(ang), np.sin(ang)])
    else:
        raise ValueError(f"unknown origin class {origin_class!r}")
    return origins, directions


def estimate_free_paths(
    make_field: Callable[[int], ParticleField2D] | ParticleField2D,
    origin_class: str,
    realizations: int,
    samples: int,
    *,
    t_max: float,
    bins: int = 128,
    seed: int = 0,
    theta: float = DEFAULT_LAUNCH_ANGLE,
    keep_samples: bool = False,
) -> FreePathHistogram:
    """Measure the free-path histogram over an ensemble of fields.

    ``make_field`` is called with the realization index (a fixed field
    may be passed directly). Source-class rays enter from the x = 0
    edge at angle ``theta``; scatterer-class rays start on a uniformly
    chosen particle in a uniform direction.
    """
    if realizations < 1 or samples < 1:
        raise ValueError("need at least one realization and one sample")
    if t_max <= 0.0:
        raise ValueError("t_max must be positive")
    factory = make_field if callable(make_field) else (lambda _i: make_field)
    all_t = np.empty(realizations * samples, dtype=np.float64)
    all_hit = np.empty(realizations * samples, dtype=bool)
    for i in range(realizations):
        fld = factory(i)
        gen = rng.stream(seed, 7100, i)
        origins, directions = _launch(fld, origin_class, theta, samples, gen)
        ts, hits = trace_rays(fld, origins, directions, t_max)
        all_t[i * samples : (i + 1) * samples] = ts
        all_hit[i * samples : (i + 1) * samples] = hits
    return _histogram_from_distances(
        all_t, all_hit, t_max, bins, origin_class, theta if origin_class == "source" else None,
        realizations, samples, keep_samples,
    )


# ---------------------------------------------------------------------------
# Medium-to-medium boundary experiments
# ---------------------------------------------------------------------------


class SeedSharingStrategy:
    """Builds the second medium with a requested cross-correlation.

    For c12 = +x a fraction x of the first medium's cluster seeds is
    reused verbatim (walks redrawn); for c12 = -x the same fraction of
    seeds is placed by best-candidate sampling to sit as far from the
    first medium's seeds as possible; c12 = 0 draws everything fresh.
    One concrete realization of cross-correlated construction, not the
    only possible one.
    """

    def __init__(self, candidates: int = 32) -> None:
        if candidates < 1:
            raise ValueError("candidate count must be at least 1")
        self.candidates = candidates

    def make_second_field(
        self,
        first: ParticleField2D,
        correlation: float,
        cross_correlation: float,
        count: int,
        radius: float,
        seed: int,
    ) -> ParticleField2D:
        if not -1.0 < cross_correlation < 1.0:
            raise ValueError("cross-correlation must lie in (-1, 1)")
        if cross_correlation == 0.0:
            return _make_field(count, correlation, radius, seed, clusters=_cluster_count(first))
        if first.cluster_seeds is None or not 0.0 < correlation < 1.0:
            raise ValueError("cross-correlated construction needs positive-walk media on both sides")
        gen = rng.stream(seed, 7200)
        m = first.cluster_seeds.shape[0]
        shared = round(abs(cross_correlation) * m)
        if cross_correlation > 0.0:
            idx = gen.choice(m, size=shared, replace=False) if shared else np.zeros(0, dtype=int)
            kept = first.cluster_seeds[idx]
        else:
            kept = _repelled_points(first.cluster_seeds, shared, gen, self.candidates)
        fresh = gen.random((m - shared, 2))
        seeds = np.vstack([kept, fresh]) if shared else fresh
        return gen_positive_medium(count, correlation, radius, seed=rng.substream_seed(seed, 7201), seed_points=seeds)


def _repelled_points(anchors: np.ndarray, n: int, gen: np.random.Generator, candidates: int) -> np.ndarray:
    """Best-candidate points repelled from the anchors and each other.

    Each point is the best of ``candidates`` uniform draws, scored by
    wrapped distance to the anchors and to points already placed, so
    the result spreads through the anchor field's gaps instead of
    piling into the single widest one.
    """
    out = np.empty((n, 2))
    for i in range(n):
        cand = gen.random((candidates, 2))
        others = np.vstack([anchors, out[:i]]) if i else anchors
        delta = np.abs(cand[:, None, :] - others[None, :, :])
        delta = np.minimum(delta, 1.0 - delta)
        dmin = np.sqrt((delta**2).sum(axis=2)).min(axis=1)
        out[i] = cand[int(np.argmax(dmin))]
    return out


def _cluster_count(f: ParticleField2D) -> int:
    return f.cluster_seeds.shape[0] if f.cluster_seeds is not None else 1


def _make_field(count: int, c: float, radius: float, seed: int, clusters: int = 1) -> ParticleField2D:
    if c > 0.0:
        return gen_positive_medium(count, c, radius, seed=seed, clusters=clusters)
    if c == 0.0:
        return gen_uncorrelated_medium(count, radius, seed=seed)
    return gen_negative_medium(count, c, radius, seed=seed)


@dataclass(frozen=True)
class BoundaryExperiment:
    """Configuration of a two-medium free-path experiment.

    Rays fly ``switch_distance`` in the first medium; survivors continue
    from wherever they are, in the same direction, under the second
    medium. The cross-correlation c12 couples the second medium's
    cluster layout to the first's.
    """

    c1: float
    c2: float
    c12: float
    switch_distance: float
    count: int
    radius: float = DEFAULT_RADIUS
    clusters: int = 1
    theta: float = DEFAULT_LAUNCH_ANGLE

    def __post_init__(self) -> None:
        if self.switch_distance <= 0.0:
            raise ValueError("switch distance must be positive")
        if not -1.0 < self.c12 < 1.0:
            raise ValueError("cross-correlation must lie in (-1, 1)")
        if self.count < 1:
            raise ValueError("particle count must be at least 1")


def run_boundary_experiment(
    config: BoundaryExperiment,
    realizations: int,
    samples: int,
    *,
    t_max: float,
    bins: int = 128,
    seed: int = 0,
    strategy: SeedSharingStrategy | None = None,
    keep_samples: bool = False,
) -> FreePathHistogram:
    """Free-path histogram of source rays crossing a medium boundary."""
    if realizations < 1 or samples < 1:
        raise ValueError("need at least one realization and one sample")
    if t_max <= config.switch_distance:
        raise ValueError("t_max must exceed the switch distance")
    strategy = strategy or SeedSharingStrategy()
    t_switch = config.switch_distance
    all_t = np.empty(realizations * samples, dtype=np.float64)
    all_hit = np.empty(realizations * samples, dtype=bool)
    for i in range(realizations):
        seed1 = rng.substream_seed(seed, 7300, i)
        first = _make_field(config.count, config.c1, config.radius, seed1, clusters=config.clusters)
        second = strategy.make_second_field(
            first, config.c2, config.c12, config.count, config.radius,
            rng.substream_seed(seed, 7301, i),
        )
        gen = rng.stream(seed, 7302, i)
        origins, directions = _launch(first, "source", config.theta, samples, gen)
        t1, hit1 = trace_rays(first, origins, directions, t_switch)
        ts = t1.copy()
        hits = hit1.copy()
        through = ~hit1
        if np.any(through):
            pos = np.mod(origins[through] + directions[through] * t_switch, 1.0)
            t2, hit2 = trace_rays(second, pos, directions[through], t_max - t_switch)
            ts[through] = t_switch + t2
            hits[through] = hit2
        lo = i * samples
        all_t[lo : lo + samples] = ts
        all_hit[lo : lo + samples] = hits
    return _histogram_from_distances(
        all_t, all_hit, t_max, bins, "source", config.theta,
        realizations, samples, keep_samples,
    )


# ---------------------------------------------------------------------------
# Simple fits
# ---------------------------------------------------------------------------


def fit_exponential(hist: FreePathHistogram, survival_floor: float = 1e-3) -> tuple[float, float]:
    """Least-squares exponential fit to a histogram's survival curve.

    Regresses ln T on the bin right edges over the range where the
    survival estimate is solid. Returns (rate, r_squared).
    """
    T = hist.survival
    t = hist.edges[1:]
    ok = T > survival_floor
    if ok.sum() < 3:
        raise ValueError("not enough populated bins for a fit")
    x = t[ok]
    y = np.log(T[ok])
    slope, intercept = np.polyfit(x, y, 1)
    pred = slope * x + intercept
    ss_res = float(((y - pred) ** 2).sum())
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0.0 else 1.0
    return -float(slope), r2
