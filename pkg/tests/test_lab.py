"""Tests for the 2D particle-field laboratory."""

import math

import numpy as np
import pytest
from scipy import stats

from corrtrans import lab


def _uniform_rays(n, seed, t_max_angle=None):
    g = np.random.default_rng(seed)
    origins = g.random((n, 2))
    ang = 2.0 * math.pi * g.random(n)
    directions = np.column_stack([np.cos(ang), np.sin(ang)])
    return origins, directions


class TestFieldGenerators:
    def test_lattice_frozen_at_full_negative_correlation(self):
        # c = -1 leaves zero perturbation probability, so the field is
        # the bare lattice and independent of the seed.
        a = lab.gen_negative_medium(1000, -1.0, seed=1)
        b = lab.gen_negative_medium(1000, -1.0, seed=99)
        np.testing.assert_array_equal(a.positions, b.positions)
        assert a.kind == "negative-lattice"

    def test_lattice_count_close_to_request(self):
        fld = lab.gen_negative_medium(3000, -0.5, seed=2)
        assert abs(fld.count - 3000) / 3000 < 0.05

    @pytest.mark.parametrize("maker", [
        lambda s: lab.gen_negative_medium(500, -0.3, seed=s),
        lambda s: lab.gen_positive_medium(500, 0.7, seed=s),
        lambda s: lab.gen_uncorrelated_medium(500, seed=s),
    ])
    def test_same_seed_same_field(self, maker):
        np.testing.assert_array_equal(maker(5).positions, maker(5).positions)

    def test_different_seeds_differ(self):
        a = lab.gen_positive_medium(200, 0.5, seed=1)
        b = lab.gen_positive_medium(200, 0.5, seed=2)
        assert not np.array_equal(a.positions, b.positions)

    def test_positions_wrapped(self):
        fld = lab.gen_positive_medium(2000, 0.9, seed=3)
        assert fld.positions.min() >= 0.0
        assert fld.positions.max() < 1.0

    def test_walk_records_cluster_seeds(self):
        fld = lab.gen_positive_medium(400, 0.8, seed=4, clusters=5)
        assert fld.cluster_seeds.shape == (5, 2)
        assert fld.count == 400

    def test_walk_accepts_explicit_seed_points(self):
        pts = np.array([[0.25, 0.25], [0.75, 0.75]])
        fld = lab.gen_positive_medium(100, 0.9, seed=5, seed_points=pts)
        np.testing.assert_array_equal(fld.cluster_seeds, pts)
        # first particle of each walk is the seed point itself
        assert np.any(np.all(np.isclose(fld.positions, pts[0]), axis=1))

    def test_uncorrelated_exact_count(self):
        assert lab.gen_uncorrelated_medium(123, seed=0).count == 123

    def test_dense_lattice_warns_about_overlap(self):
        with pytest.warns(UserWarning):
            lab.gen_negative_medium(100, -1.0, radius=0.06, seed=0)

    @pytest.mark.parametrize("call", [
        lambda: lab.gen_negative_medium(100, 0.5),
        lambda: lab.gen_negative_medium(100, -1.5),
        lambda: lab.gen_positive_medium(100, 0.0),
        lambda: lab.gen_positive_medium(100, 1.0),
        lambda: lab.gen_positive_medium(100, 0.5, clusters=0),
        lambda: lab.gen_negative_medium(0, -0.5),
        lambda: lab.gen_uncorrelated_medium(0),
    ])
    def test_domain_errors(self, call):
        with pytest.raises(ValueError):
            call()

    def test_field_validation(self):
        with pytest.raises(ValueError):
            lab.ParticleField2D(np.zeros((3, 2)), -1e-5, 0.0, "uncorrelated")
        with pytest.raises(ValueError):
            lab.ParticleField2D(np.zeros((3, 2)), 1e-5, 1.0, "uncorrelated")

    def test_particle_count_for_extinction(self):
        assert lab.particle_count_for_extinction(2.0, 1e-3) == 1000
        with pytest.raises(ValueError):
            lab.particle_count_for_extinction(0.0)


class TestTracing:
    def test_empty_field_escapes(self):
        empty = lab.ParticleField2D(np.zeros((0, 2)), 1e-5, 0.0, "uncorrelated")
        t, hit = lab.trace_ray_periodic(empty, (0.3, 0.4), (1.0, 0.0), 7.0)
        assert (t, hit) == (7.0, False)

    def test_single_disk_analytic_distance(self):
        fld = lab.ParticleField2D(np.array([[0.7, 0.5]]), 1e-5, 0.0, "uncorrelated")
        t, hit = lab.trace_ray_periodic(fld, (0.2, 0.5), (1.0, 0.0), 2.0)
        assert hit
        assert abs(t - (0.5 - 1e-5)) < 1e-12

    def test_hit_through_periodic_wrap(self):
        # disk just inside the left edge, ray approaching from the right
        fld = lab.ParticleField2D(np.array([[0.05, 0.5]]), 0.01, 0.0, "uncorrelated")
        t, hit = lab.trace_ray_periodic(fld, (0.9, 0.5), (1.0, 0.0), 1.0)
        assert hit
        assert abs(t - (0.15 - 0.01)) < 1e-12

    def test_grid_matches_bruteforce_on_uncorrelated(self):
        fld = lab.gen_uncorrelated_medium(500, radius=2e-3, seed=11)
        origins, directions = _uniform_rays(10_000, seed=12)
        for o, d in zip(origins, directions):
            fast = lab.trace_ray_periodic(fld, o, d, 3.0)
            slow = lab.trace_ray_bruteforce(fld, o, d, 3.0)
            assert fast == slow

    def test_grid_matches_bruteforce_on_clustered(self):
        # clustered fields exercise crowded and empty grid cells alike
        fld = lab.gen_positive_medium(2000, 0.9, radius=1e-3, seed=13)
        origins, directions = _uniform_rays(2000, seed=14)
        for o, d in zip(origins, directions):
            assert lab.trace_ray_periodic(fld, o, d, 2.0) == lab.trace_ray_bruteforce(fld, o, d, 2.0)

    def test_long_flight_stays_exact(self):
        fld = lab.ParticleField2D(np.array([[0.123, 0.456]]), 1e-4, 0.0, "uncorrelated")
        d = np.array([math.cos(0.91), math.sin(0.91)])
        got = lab.trace_ray_periodic(fld, (0.8, 0.2), d, 400.0)
        want = lab.trace_ray_bruteforce(fld, (0.8, 0.2), d, 400.0)
        assert got == want

    def test_direction_validation(self):
        fld = lab.gen_uncorrelated_medium(10, seed=0)
        with pytest.raises(ValueError):
            lab.trace_ray_periodic(fld, (0.5, 0.5), (0.0, 0.0), 1.0)
        with pytest.raises(ValueError):
            lab.trace_ray_periodic(fld, (0.5, 0.5), (1.0, 1.0), 1.0)
        with pytest.raises(ValueError):
            lab.trace_ray_periodic(fld, (0.5, 0.5), (1.0, 0.0), 0.0)


class TestFreePathHistograms:
    def test_single_ray_histogram_is_valid(self):
        fld = lab.gen_uncorrelated_medium(1000, radius=1e-3, seed=20)
        h = lab.estimate_free_paths(fld, "source", 1, 1, t_max=5.0, bins=16, seed=21)
        assert h.total == 1
        assert h.counts.sum() + h.overflow == 1

    def test_bookkeeping_identity(self):
        h = lab.estimate_free_paths(
            lambda i: lab.gen_uncorrelated_medium(1000, radius=1e-3, seed=30 + i),
            "scatterer", 5, 2000, t_max=4.0, bins=64, seed=31)
        rebuilt = 1.0 - np.cumsum(h.density) * h.width
        assert np.abs(h.survival - rebuilt).max() < 1e-12
        total_mass = h.density.sum() * h.width + h.escape_fraction
        assert abs(total_mass - 1.0) < 1e-12

    def test_uncorrelated_rate_and_fit(self):
        # 2D disk of radius r presents cross-section 2r: rate = n * 2r
        h = lab.estimate_free_paths(
            lambda i: lab.gen_uncorrelated_medium(1000, radius=1e-3, seed=40 + i),
            "source", 20, 5000, t_max=3.0, bins=60, seed=41)
        rate, r2 = lab.fit_exponential(h)
        assert abs(rate - 2.0) / 2.0 < 0.05
        assert r2 > 0.99

    def test_relaxed_lattice_looks_uncorrelated(self):
        h = lab.estimate_free_paths(
            lambda i: lab.gen_negative_medium(1000, 0.0, radius=1e-3, seed=50 + i),
            "source", 20, 5000, t_max=3.0, bins=60, seed=51)
        rate, r2 = lab.fit_exponential(h)
        assert r2 > 0.99
        assert abs(rate - 2.0) / 2.0 < 0.05

    def test_weak_walk_looks_uncorrelated(self):
        h = lab.estimate_free_paths(
            lambda i: lab.gen_positive_medium(1000, 0.05, radius=1e-3, seed=60 + i),
            "source", 20, 5000, t_max=3.0, bins=60, seed=61)
        _, r2 = lab.fit_exponential(h)
        assert r2 > 0.99

    def test_uncorrelated_free_paths_are_exponential(self):
        # chi-square goodness of fit at 1e6 rays, rate from the
        # censored maximum-likelihood estimate
        h = lab.estimate_free_paths(
            lambda i: lab.gen_uncorrelated_medium(1000, radius=1e-3, seed=70 + i),
            "scatterer", 20, 50_000, t_max=4.0, bins=80, seed=71,
            keep_samples=True)
        hits = h.samples < 4.0 - 1e-12
        rate = hits.sum() / h.samples.sum()
        edges = h.edges
        expected = h.total * (np.exp(-rate * edges[:-1]) - np.exp(-rate * edges[1:]))
        keep = expected >= 10
        obs = h.counts[keep].astype(float)
        exp = expected[keep] * obs.sum() / expected[keep].sum()
        _, p = stats.chisquare(obs, exp, ddof=1)
        assert p > 0.01

    def test_strong_walk_is_sub_exponential(self):
        h = lab.estimate_free_paths(
            lambda i: lab.gen_positive_medium(2000, 0.9, radius=5e-4, seed=80 + i),
            "source", 50, 2000, t_max=3.0, bins=60, seed=81)
        t = h.edges[1:]
        reference = np.exp(-2.0 * t)
        late = t > 1.5
        assert np.all(h.survival[late] > reference[late])

    def test_frozen_lattice_is_super_exponential(self):
        h = lab.estimate_free_paths(
            lambda i: lab.gen_negative_medium(2500, -1.0, radius=4e-4, seed=90 + i),
            "source", 20, 5000, t_max=1.0, bins=20, seed=91)
        t = h.edges[1:]
        reference = np.exp(-2.0 * t)
        assert np.all(h.survival[1:] < reference[1:])

    def test_scatterer_born_paths_differ_from_source_born(self):
        # scatterer-born rays start inside clumps and collide sooner
        def make(i):
            return lab.gen_positive_medium(100, 0.5, radius=1e-2, seed=100 + i)

        hs = lab.estimate_free_paths(make, "source", 100, 2000, t_max=4.0,
                                     seed=101, keep_samples=True)
        hq = lab.estimate_free_paths(make, "scatterer", 100, 2000, t_max=4.0,
                                     seed=102, keep_samples=True)
        ks = stats.ks_2samp(hs.samples, hq.samples)
        assert ks.pvalue < 1e-3
        assert np.median(hq.samples) < np.median(hs.samples)

    def test_histograms_are_reproducible(self):
        def run():
            return lab.estimate_free_paths(
                lambda i: lab.gen_positive_medium(500, 0.6, radius=1e-3, seed=110 + i),
                "scatterer", 4, 3000, t_max=3.0, seed=111)
        a, b = run(), run()
        np.testing.assert_array_equal(a.counts, b.counts)
        assert a.overflow == b.overflow
        assert a.counts.dtype == np.int64

    def test_theta_recorded_for_source_only(self):
        fld = lab.gen_uncorrelated_medium(100, radius=1e-3, seed=0)
        hs = lab.estimate_free_paths(fld, "source", 1, 10, t_max=1.0, seed=1, theta=0.4)
        hq = lab.estimate_free_paths(fld, "scatterer", 1, 10, t_max=1.0, seed=1)
        assert hs.theta == 0.4
        assert hq.theta is None

    def test_window_density_by_realization(self):
        h = lab.estimate_free_paths(
            lambda i: lab.gen_uncorrelated_medium(500, radius=1e-3, seed=120 + i),
            "source", 6, 1000, t_max=2.0, bins=20, seed=121)
        w = h.window_density_by_realization(0.0, 2.0)
        assert w.shape == (6,)
        full = h.counts_by_realization.sum(axis=1) / (1000 * h.width * 20)
        np.testing.assert_allclose(w, full)
        with pytest.raises(ValueError):
            h.window_density_by_realization(1.99, 1.999)

    @pytest.mark.parametrize("call", [
        lambda f: lab.estimate_free_paths(f, "nowhere", 1, 10, t_max=1.0),
        lambda f: lab.estimate_free_paths(f, "source", 0, 10, t_max=1.0),
        lambda f: lab.estimate_free_paths(f, "source", 1, 10, t_max=0.0),
    ])
    def test_estimate_validation(self, call):
        fld = lab.gen_uncorrelated_medium(10, seed=0)
        with pytest.raises(ValueError):
            call(fld)


class TestBoundaryExperiments:
    def test_uncorrelated_boundary_is_seamless(self):
        # identical uncorrelated statistics on both sides: the spliced
        # histogram should still be a single clean exponential
        cfg = lab.BoundaryExperiment(c1=0.0, c2=0.0, c12=0.0, switch_distance=1.0,
                                     count=1000, radius=1e-3)
        h = lab.run_boundary_experiment(cfg, realizations=20, samples=5000,
                                        t_max=3.0, bins=60, seed=130)
        rate, r2 = lab.fit_exponential(h)
        assert r2 > 0.99
        assert abs(rate - 2.0) / 2.0 < 0.05

    def test_cross_correlation_sign_checks(self):
        # shared cluster seeds shadow the survivors (lower p just past
        # the interface); complement-gap placement ambushes them
        mu = 16.0
        mfp = 1.0 / mu
        sw = 2.0 * mfp
        window = {}
        for c12 in (0.9, 0.0, -0.9):
            cfg = lab.BoundaryExperiment(c1=0.93, c2=0.97, c12=c12, switch_distance=sw,
                                         count=8000, radius=1e-3, clusters=10)
            h = lab.run_boundary_experiment(cfg, realizations=300, samples=2000,
                                            t_max=sw + 3.0 * mfp, bins=60, seed=131,
                                            strategy=lab.SeedSharingStrategy(64))
            window[c12] = h.window_density_by_realization(sw, sw + 2.0 * mfp).mean()
        assert window[0.9] < window[0.0] < window[-0.9]

    def test_boundary_experiment_reproducible(self):
        cfg = lab.BoundaryExperiment(c1=0.9, c2=0.9, c12=0.5, switch_distance=0.2,
                                     count=2000, radius=1e-3, clusters=6)
        runs = [lab.run_boundary_experiment(cfg, realizations=3, samples=2000,
                                            t_max=0.8, bins=32, seed=7)
                for _ in range(2)]
        np.testing.assert_array_equal(runs[0].counts, runs[1].counts)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            lab.BoundaryExperiment(c1=0.5, c2=0.5, c12=1.0, switch_distance=0.5, count=100)
        with pytest.raises(ValueError):
            lab.BoundaryExperiment(c1=0.5, c2=0.5, c12=0.0, switch_distance=0.0, count=100)
        cfg = lab.BoundaryExperiment(c1=0.5, c2=0.5, c12=0.0, switch_distance=0.5, count=100)
        with pytest.raises(ValueError):
            lab.run_boundary_experiment(cfg, 1, 10, t_max=0.4)

    def test_cross_correlation_needs_walk_media(self):
        cfg = lab.BoundaryExperiment(c1=-0.5, c2=-0.5, c12=0.7, switch_distance=0.5,
                                     count=500, radius=1e-3)
        with pytest.raises(ValueError):
            lab.run_boundary_experiment(cfg, 1, 100, t_max=1.0, seed=1)

    def test_strategy_validation(self):
        with pytest.raises(ValueError):
            lab.SeedSharingStrategy(0)
