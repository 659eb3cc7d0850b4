"""Scene parsing, image IO, and path-tracer behavior.

The quantitative tests compare small renders against closed forms that
an independent reader can verify on paper: straight-through
transmittance of an absorbing slab, the inverse-square falloff of a
point light on a Lambertian plane, and energy conservation inside a
uniform radiance field. Determinism tests assert bitwise equality.
"""

import math

import numpy as np
import pytest

from corrtrans import models, rng
from corrtrans.images import Image, read_pfm, write_pfm, write_ppm
from corrtrans.render import (
    _flight_pdf,
    _flight_sample,
    _flight_T,
    _next,
    _pixel_stream,
    phase_density,
    phase_sample,
    render,
    render_with_diagnostics,
)
from corrtrans.scene import (
    KIND_EXPONENTIAL,
    KIND_GAMMA,
    KIND_LINEAR,
    Camera,
    Scene,
    SceneError,
    SceneParseError,
    bundled_scene,
    bundled_scene_names,
    parse_scene,
)

GAMMA_SLAB = """
camera { position 0 0 2  look_at 0 0 0  fov 2  resolution 16 16 }
medium slab { model gamma:alpha=4,beta=0.5,sigma=1  albedo 0 0 0  phase isotropic }
box { min -0.5 -0.5 -0.1  max 0.5 0.5 0.1  interior slab }
light panel { type rect  corner -0.5 -0.5 -1  edge_a 1 0 0  edge_b 0 1 0  radiance 1 1 1 }
background 0 0 0
"""

LIT_PLANE = """
camera { position 0 0.3 2  look_at 0 0 0  fov 5  resolution 9 9 }
plane { point 0 0 0  normal 0 1 0  bsdf lambert 0.6 0.6 0.6 }
light lamp { type point  position 0 2 0  intensity 1 1 1 }
background 0 0 0
"""

# same geometry with an absorbing layer across the shadow rays only;
# each channel gets its own extinction law
FILTERED_PLANE = """
camera { position 0 0.3 2  look_at 0 0 0  fov 5  resolution 9 9 }
medium filt {
  model_red exp:mu=4
  model_green gamma:alpha=4,beta=0.5,sigma=1
  model_blue linear:mu=4
  albedo 0 0 0
  phase isotropic
}
box { min -1.5 0.5 -1.5  max 1.5 0.7 1.5  interior filt }
plane { point 0 0 0  normal 0 1 0  bsdf lambert 0.6 0.6 0.6 }
light lamp { type point  position 0 2 0  intensity 1 1 1 }
background 0 0 0
"""


# ---------------------------------------------------------------------------
# scene text format
# ---------------------------------------------------------------------------


class TestSceneText:
    def test_round_trip_of_a_full_scene(self):
        scene = parse_scene(FILTERED_PLANE)
        assert scene.camera.width == 9
        assert len(scene.media) == 1
        assert len(scene.primitives) == 2
        assert scene.lights[0].name == "lamp"
        medium = scene.media[0]
        assert isinstance(medium.scattered[0], models.ExponentialModel)
        assert isinstance(medium.scattered[1], models.GammaConcentrationModel)
        assert isinstance(medium.scattered[2], models.LinearNegativeModel)

    def test_comments_and_whitespace_are_free(self):
        scene = parse_scene(
            "camera{position 0 0 1 look_at 0 0 0 # trailing\nfov 45\n"
            "resolution 4 4}background 1 0 0"
        )
        assert scene.background == (1.0, 0.0, 0.0)

    def test_unknown_block_reports_position(self):
        with pytest.raises(SceneParseError, match="line 2, column 1"):
            parse_scene("camera { position 0 0 1 look_at 0 0 0 fov 45 resolution 2 2 }\nwedge { }")

    def test_non_numeric_value_reports_position(self):
        with pytest.raises(SceneParseError, match="line 1, column 19"):
            parse_scene("camera { position x 0 1 }")

    def test_duplicate_key_rejected(self):
        with pytest.raises(SceneParseError, match="duplicate key 'fov'"):
            parse_scene("camera { fov 30 fov 40 }")

    def test_missing_camera(self):
        with pytest.raises(SceneParseError, match="no camera"):
            parse_scene("background 0 0 0")

    def test_second_camera_rejected(self):
        text = "camera { position 0 0 1 look_at 0 0 0 fov 45 resolution 2 2 }"
        with pytest.raises(SceneParseError, match="second camera"):
            parse_scene(text + "\n" + text)

    def test_bad_model_spec_is_positioned(self):
        with pytest.raises(SceneParseError, match="line 1, column 18"):
            parse_scene("medium m { model exp:nu=3 }")

    def test_gammapath_models_are_rejected(self):
        with pytest.raises(SceneError):
            parse_scene(
                "camera { position 0 0 1 look_at 0 0 0 fov 45 resolution 2 2 }\n"
                "medium m { model gammapath:k=2,theta=0.5 albedo 0 0 0 }\n"
                "box { min 0 0 0 max 1 1 1 interior m }"
            )

    def test_unknown_interior_name(self):
        with pytest.raises(SceneError, match="unknown medium"):
            parse_scene(
                "camera { position 0 0 1 look_at 0 0 0 fov 45 resolution 2 2 }\n"
                "box { min 0 0 0 max 1 1 1 interior fog }"
            )

    def test_nonzero_cross_correlation_is_refused(self):
        text = (
            "camera { position 0 0 1 look_at 0 0 0 fov 45 resolution 2 2 }\n"
            "medium a { model exp:mu=1 cross_correlation b 0.5 }\n"
            "medium b { model exp:mu=2 }"
        )
        with pytest.raises(SceneError, match="use 0 for an independent interface"):
            parse_scene(text)

    def test_zero_cross_correlation_is_accepted(self):
        scene = parse_scene(
            "camera { position 0 0 1 look_at 0 0 0 fov 45 resolution 2 2 }\n"
            "medium a { model exp:mu=1 cross_correlation b 0 }\n"
            "medium b { model exp:mu=2 }"
        )
        assert len(scene.media) == 2

    def test_variance_matrix_excludes_explicit_models(self):
        with pytest.raises(SceneError, match="variance"):
            parse_scene(
                "medium m { model exp:mu=1 mean_concentration 2 cross_section 1 "
                "variance_matrix 1 0 0 0 1 0 0 0 1 }"
            )

    def test_per_channel_models_need_all_channels(self):
        with pytest.raises(SceneParseError, match="all three"):
            parse_scene("medium m { model_red exp:mu=1 albedo 0 0 0 }")

    def test_lights_get_stable_default_names(self):
        scene = parse_scene(
            "camera { position 0 0 1 look_at 0 0 0 fov 45 resolution 2 2 }\n"
            "light { type point position 0 1 0 intensity 1 1 1 }\n"
            "light { type point position 1 1 0 intensity 1 1 1 }"
        )
        assert [li.name for li in scene.lights] == ["light0", "light1"]

    def test_rect_light_edges_must_be_perpendicular(self):
        with pytest.raises(SceneError, match="perpendicular"):
            parse_scene(
                "camera { position 0 0 1 look_at 0 0 0 fov 45 resolution 2 2 }\n"
                "light { type rect corner 0 0 0 edge_a 1 0 0 edge_b 1 1 0 "
                "radiance 1 1 1 }"
            )

    def test_bundled_scenes_parse_and_compile(self):
        names = bundled_scene_names()
        assert "cube_backlight" in names and "three_materials" in names
        for name in names:
            tables = bundled_scene(name).tables()
            assert tables.prim_kind.shape[0] >= 1
            assert tables.med_kind.shape[1] == 3

    def test_bundled_scene_unknown_name(self):
        with pytest.raises(KeyError):
            bundled_scene("nonexistent")

    def test_with_resolution(self):
        scene = bundled_scene("cube_backlight").with_resolution(32, 24)
        assert (scene.camera.width, scene.camera.height) == (32, 24)

    def test_classical_and_zero_variance_agree_for_gamma_media(self):
        """Both collapse a gamma law of vanishing variance to the same
        exponential tables, which is what makes their renders identical."""
        scene = bundled_scene("cube_backlight")
        a = scene.classical().tables()
        b = scene.with_zero_variance().tables()
        for left, right in zip(a, b):
            if isinstance(left, np.ndarray):
                assert np.array_equal(left, right)
        model = scene.classical().media[0].scattered[0]
        assert isinstance(model, models.ExponentialModel)
        assert model.mean_extinction == pytest.approx(6.0)

    def test_camera_medium_detection(self):
        inside = parse_scene(
            "camera { position 0 0 0 look_at 0 0 -1 fov 45 resolution 2 2 }\n"
            "medium m { model exp:mu=1 albedo 0 0 0 }\n"
            "box { min -1 -1 -1 max 1 1 1 interior m }"
        )
        assert inside.camera_medium() == 0
        assert inside.tables().camera_medium == 0
        outside = parse_scene(
            "camera { position 0 0 5 look_at 0 0 0 fov 45 resolution 2 2 }\n"
            "medium m { model exp:mu=1 albedo 0 0 0 }\n"
            "box { min -1 -1 -1 max 1 1 1 interior m }"
        )
        assert outside.camera_medium() == -1


# ---------------------------------------------------------------------------
# image files
# ---------------------------------------------------------------------------


class TestImageFiles:
    def test_ppm_header_and_gamma(self, tmp_path):
        img = Image(1, 1, np.full((1, 1, 3), 0.5))
        path = tmp_path / "g.ppm"
        write_ppm(path, img)
        data = path.read_bytes()
        assert data.startswith(b"P6\n1 1\n255\n")
        level = int(round(0.5 ** (1 / 2.2) * 255))
        assert data[-3:] == bytes([level] * 3)

    def test_ppm_clips_out_of_range(self, tmp_path):
        img = Image(2, 1, np.array([[[0.0, 0.0, 0.0], [9.0, 9.0, 9.0]]]))
        path = tmp_path / "c.ppm"
        write_ppm(path, img)
        assert path.read_bytes()[-6:] == bytes([0, 0, 0, 255, 255, 255])

    def test_pfm_round_trip(self, tmp_path):
        values = rng.stream(3, 0).random((5, 4, 3))
        img = Image(4, 5, np.float64(np.float32(values)))
        path = tmp_path / "r.pfm"
        write_pfm(path, img)
        back = read_pfm(path)
        assert back.width == 4 and back.height == 5
        assert np.array_equal(back.values, img.values)

    def test_pfm_rejects_wrong_magic(self, tmp_path):
        path = tmp_path / "bad.pfm"
        path.write_bytes(b"Pf\n1 1\n-1.0\n" + b"\x00" * 4)
        with pytest.raises(ValueError):
            read_pfm(path)

    def test_pfm_rejects_short_payload(self, tmp_path):
        path = tmp_path / "short.pfm"
        path.write_bytes(b"PF\n2 2\n-1.0\n" + b"\x00" * 10)
        with pytest.raises(ValueError):
            read_pfm(path)

    def test_image_validates_shape_and_finiteness(self):
        with pytest.raises(ValueError):
            Image(2, 2, np.zeros((2, 2)))
        with pytest.raises(ValueError):
            Image(2, 2, np.full((2, 2, 3), np.nan))
        with pytest.raises(ValueError):
            Image(2, 2, -np.ones((2, 2, 3)))


# ---------------------------------------------------------------------------
# phase functions
# ---------------------------------------------------------------------------


class TestPhase:
    def test_isotropic_density_is_uniform(self):
        c = np.linspace(-1, 1, 7)
        assert np.allclose(phase_density("isotropic", c), 1 / (4 * math.pi))

    def test_hg_density_normalizes(self):
        from scipy import integrate

        for g in (-0.8, -0.3, 0.0, 0.5, 0.9):
            val, _ = integrate.quad(lambda c: float(phase_density("hg", c, g)), -1, 1)
            assert 2 * math.pi * val == pytest.approx(1.0, abs=1e-9)

    def test_hg_sampler_reproduces_mean_cosine(self):
        d = np.array([0.0, 0.0, 1.0])
        dirs, pdf = phase_sample("hg", d, rng.stream(5, 0), g=0.7, size=10**6)
        cos = dirs @ d
        assert abs(cos.mean() - 0.7) < 3 * cos.std() / 1000
        assert np.allclose(np.linalg.norm(dirs, axis=1), 1.0, atol=1e-12)
        assert np.allclose(pdf, phase_density("hg", cos, 0.7))

    def test_hg_at_zero_g_matches_isotropic(self):
        d = np.array([1.0, 0.0, 0.0])
        dirs, pdf = phase_sample("hg", d, rng.stream(6, 0), g=0.0, size=4096)
        assert np.allclose(pdf, 1 / (4 * math.pi))
        assert abs((dirs @ d).mean()) < 0.05

    def test_single_draw_shape(self):
        direction, pdf = phase_sample("isotropic", (0.0, 1.0, 0.0), rng.stream(7, 0))
        assert direction.shape == (3,)
        assert pdf == pytest.approx(1 / (4 * math.pi))

    def test_bad_inputs(self):
        g = rng.stream(8, 0)
        with pytest.raises(ValueError):
            phase_sample("hg", (0, 0, 1), g, g=1.0)
        with pytest.raises(ValueError):
            phase_sample("mie", (0, 0, 1), g)
        with pytest.raises(ValueError):
            phase_sample("isotropic", (0, 0, 2), g)
        with pytest.raises(ValueError):
            phase_density("mie", 0.0)


# ---------------------------------------------------------------------------
# kernel arithmetic pins
# ---------------------------------------------------------------------------


class TestKernelPins:
    """The jit kernels carry their own copies of the extinction math and
    the stream derivation. These tests pin them to the Python originals."""

    def test_transmittance_matches_models(self):
        t = 0.37
        assert _flight_T(KIND_GAMMA, 4.0, 0.5, 1.0, t) == float(
            models.transmittance_gamma(t, 4.0, 0.5, 1.0))
        assert _flight_T(KIND_EXPONENTIAL, 2.5, 0.0, 0.0, t) == float(
            models.ExponentialModel(2.5).transmittance(t))
        assert _flight_T(KIND_LINEAR, 2.5, 0.0, 0.0, t) == float(
            models.LinearNegativeModel(2.5).transmittance(t))

    def test_collision_density_matches_models(self):
        t = 0.37
        assert _flight_pdf(KIND_GAMMA, 4.0, 0.5, 1.0, t) == float(
            models.extinction_prob_gamma(t, 4.0, 0.5, 1.0))
        assert _flight_pdf(KIND_EXPONENTIAL, 2.5, 0.0, 0.0, t) == float(
            models.ExponentialModel(2.5).extinction_density(t))
        assert _flight_pdf(KIND_LINEAR, 2.5, 0.0, 0.0, t) == float(
            models.LinearNegativeModel(2.5).extinction_density(t))

    def test_sampler_inversions_match_freeflight(self):
        from corrtrans import freeflight

        u = 0.73
        gamma = models.GammaConcentrationModel(8.0, 16.0, 1.0)
        drawn = _flight_sample(KIND_GAMMA, gamma.alpha, gamma.beta, 1.0, u)
        assert gamma.transmittance(drawn) == pytest.approx(1 - u, rel=1e-12)
        exp_t = _flight_sample(KIND_EXPONENTIAL, 2.0, 0.0, 0.0, u)
        assert exp_t == pytest.approx(-math.log1p(-u) / 2.0)
        lin_t = _flight_sample(KIND_LINEAR, 2.0, 0.0, 0.0, u)
        assert lin_t == pytest.approx(u / 2.0)
        assert freeflight is not None

    def test_pixel_stream_matches_substream_seed(self):
        for seed, pixel in [(0, 0), (123, 77), (2**63, 4095)]:
            got = int(_pixel_stream(np.uint64(seed), np.uint64(pixel)))
            assert got == rng.substream_seed(seed, 9001, pixel)

    def test_first_draw_matches_mix64(self):
        state = rng.substream_seed(42, 9001, 5)
        u, _ = _next(np.uint64(state))
        assert u == (rng.mix64(state) >> 11) * 2.0**-53


# ---------------------------------------------------------------------------
# tracer: exact cases
# ---------------------------------------------------------------------------


class TestTracerExact:
    def test_empty_scene_is_the_background(self):
        scene = Scene(Camera((0, 0, 0), (0, 0, -1), 60.0, 8, 8), (), (), (),
                      (0.25, 0.5, 0.75))
        img = render(scene, 5, seed=3)
        assert np.all(img.values == np.array([0.25, 0.5, 0.75]))

    def test_uniform_field_is_conserved_by_scattering(self):
        """A non-absorbing medium inside an isotropic radiance field must
        return that field: every path ends on the background with unit
        throughput, whatever it did inside."""
        scene = parse_scene(
            "camera { position 0 0 0 look_at 0 0 -1 fov 60 resolution 8 8 }\n"
            "medium cloud { model gamma:meanC=2,varC=2,sigma=1 "
            "albedo 1 1 1 phase isotropic }\n"
            "box { min -1 -1 -1 max 1 1 1 interior cloud }\n"
            "background 0.7 0.7 0.7"
        )
        img = render(scene, 16, seed=3)
        assert np.all(img.values == img.values[0, 0, 0])
        assert img.values[0, 0, 0] == pytest.approx(0.7, abs=1e-12)

    def test_uniform_field_is_conserved_by_glass(self):
        scene = parse_scene(
            "camera { position 0 0 3 look_at 0 0 0 fov 40 resolution 8 8 }\n"
            "sphere { center 0 0 0 radius 1 bsdf dielectric 1.5 }\n"
            "background 0.6 0.6 0.6"
        )
        img = render(scene, 16, seed=4)
        assert np.all(img.values == img.values[0, 0, 0])
        assert img.values[0, 0, 0] == pytest.approx(0.6, abs=1e-12)

    def test_unit_ior_glass_is_bitwise_invisible(self):
        base = ("camera { position 0 0 2 look_at 0 0 0 fov 30 resolution 8 8 }\n"
                "background 0.3 0.5 0.2")
        pane = base + "\nbox { min -1 -1 -0.2 max 1 1 0.2 bsdf dielectric 1 }"
        a = render(parse_scene(base), 9, seed=6)
        b = render(parse_scene(pane), 9, seed=6)
        assert np.array_equal(a.values, b.values)

    def test_rect_light_emits_from_its_front_only(self):
        def looking_from(z):
            return parse_scene(
                f"camera {{ position 0 0 {z} look_at 0 0 0 fov 10 resolution 4 4 }}\n"
                "light { type rect corner -1 -1 0 edge_a 2 0 0 edge_b 0 2 0 "
                "radiance 4 4 4 }\n"
                "background 0.04 0.04 0.04"
            )
        front = render(looking_from(2), 1, seed=0)
        back = render(looking_from(-2), 1, seed=0)
        assert np.all(front.values == 4.0 + 0.04)
        assert np.all(back.values == 0.04)

    def test_light_behind_a_wall_contributes_nothing(self):
        scene = parse_scene(
            "camera { position 0 0 2 look_at 0 0 0 fov 10 resolution 4 4 }\n"
            "plane { point 0 0 0 normal 0 0 1 bsdf lambert 0.5 0.5 0.5 }\n"
            "light { type point position 0 0 -1 intensity 9 9 9 }\n"
            "background 0 0 0"
        )
        img = render(scene, 4, seed=1)
        assert np.all(img.values == 0.0)


# ---------------------------------------------------------------------------
# tracer: closed-form comparisons
# ---------------------------------------------------------------------------


class TestTracerQuantitative:
    def test_absorbing_gamma_slab_matches_closed_form(self):
        img = render(parse_scene(GAMMA_SLAB), 1024, seed=7)
        expect = float(models.transmittance_gamma(0.2, 4.0, 0.5, 1.0))
        assert img.mean == pytest.approx(expect, rel=4e-3)

    def test_absorbing_gamma_sphere_matches_closed_form(self):
        scene = parse_scene(
            "camera { position 0 0 3 look_at 0 0 0 fov 2 resolution 9 9 }\n"
            "medium ball { model gamma:alpha=4,beta=0.5,sigma=1 "
            "albedo 0 0 0 phase isotropic }\n"
            "sphere { center 0 0 0 radius 0.3 interior ball }\n"
            "light panel { type rect corner -1 -1 -1 edge_a 2 0 0 edge_b 0 2 0 "
            "radiance 1 1 1 }\nbackground 0 0 0"
        )
        img = render(scene, 2048, seed=8)
        center = img.values[4, 4, 0]
        expect = float(models.transmittance_gamma(0.6, 4.0, 0.5, 1.0))
        assert center == pytest.approx(expect, rel=0.06)

    def test_point_light_on_lambert_plane(self):
        # the camera ray hits the plane at the origin, two units from
        # the light: L = albedo * cos / (pi d^2)
        img = render(parse_scene(LIT_PLANE), 64, seed=2)
        expect = 0.6 / (math.pi * 4.0)
        assert img.values[4, 4, 0] == pytest.approx(expect, rel=0.01)

    def test_connection_applies_each_channels_own_law(self):
        clear = render(parse_scene(LIT_PLANE), 64, seed=2)
        filtered = render(parse_scene(FILTERED_PLANE), 64, seed=2)
        ratio = filtered.values[4, 4] / clear.values[4, 4]
        assert ratio[0] == pytest.approx(math.exp(-0.8), rel=0.01)
        assert ratio[1] == pytest.approx(
            float(models.transmittance_gamma(0.2, 4.0, 0.5, 1.0)), rel=0.01)
        assert ratio[2] == pytest.approx(0.2, rel=0.01)

    def test_light_specific_law_overrides_the_default(self):
        override = FILTERED_PLANE.replace(
            "phase isotropic",
            "phase isotropic\n  source_model_for lamp exp:mu=2")
        clear = render(parse_scene(LIT_PLANE), 64, seed=2)
        img = render(parse_scene(override), 64, seed=2)
        ratio = img.values[4, 4] / clear.values[4, 4]
        assert np.allclose(ratio, math.exp(-0.4), rtol=0.01)

    def test_small_rect_light_approaches_point_formula(self):
        scene = parse_scene(
            "camera { position 0 0.3 2 look_at 0 0 0 fov 5 resolution 9 9 }\n"
            "plane { point 0 0 0 normal 0 1 0 bsdf lambert 0.6 0.6 0.6 }\n"
            "light panel { type rect corner -0.025 2 -0.025 edge_a 0.05 0 0 "
            "edge_b 0 0 0.05 radiance 1 1 1 }\nbackground 0 0 0"
        )
        img = render(scene, 256, seed=2)
        expect = 0.6 / math.pi * 0.0025 / 4.0
        assert img.values[4, 4, 0] == pytest.approx(expect, rel=0.02)

    def test_direction_dependent_variance_orders_transmittance(self):
        """Alignment between the view axis and the high-variance axis of
        the concentration field decides how much light gets through."""
        def slab(matrix):
            return parse_scene(
                "camera { position 0 0 2 look_at 0 0 0 fov 2 resolution 16 16 }\n"
                "medium aniso { mean_concentration 6 cross_section 1 "
                "albedo 0 0 0 variance_matrix " + matrix + " }\n"
                "box { min -1 -1 -0.25 max 1 1 0.25 interior aniso }\n"
                "light panel { type rect corner -1 -1 -1 edge_a 2 0 0 "
                "edge_b 0 2 0 radiance 1 1 1 }\nbackground 0 0 0"
            )

        def closed_form(var_along_view):
            alpha = 36.0 / var_along_view
            beta = 6.0 / var_along_view
            return float(models.transmittance_gamma(0.5, alpha, beta, 1.0))

        aligned = render(slab("0.01 0 0  0 0.01 0  0 0 16"), 2048, seed=9).mean
        isotropic = render(slab("5.34 0 0  0 5.34 0  0 0 5.34"), 2048, seed=9).mean
        crosswise = render(slab("16 0 0  0 0.01 0  0 0 0.01"), 2048, seed=9).mean
        assert aligned == pytest.approx(closed_form(4.0), rel=0.05)
        assert isotropic == pytest.approx(closed_form(math.sqrt(5.34)), rel=0.05)
        assert crosswise == pytest.approx(closed_form(0.1), rel=0.05)
        assert aligned > isotropic > crosswise

    def test_rmse_falls_as_inverse_root_spp(self):
        scene = parse_scene(GAMMA_SLAB)
        cam = scene.camera
        fwd, right, up = cam.basis()
        half = math.tan(math.radians(cam.fov_degrees) / 2)
        idx = np.arange(16)
        a = 2 * (idx + 0.5) / 16 - 1
        b = 1 - 2 * (idx[:, None] + 0.5) / 16
        dirs = fwd + a[None, :, None] * half * right + b[:, :, None] * half * up
        dirs /= np.linalg.norm(dirs, axis=2, keepdims=True)
        chord = 0.2 / np.abs(dirs[:, :, 2])
        ref = models.transmittance_gamma(chord, 4.0, 0.5, 1.0)[:, :, None] * np.ones(3)
        spps = [4, 16, 64, 256]
        rmse = [float(np.sqrt(np.mean((render(scene, n, seed=13).values - ref) ** 2)))
                for n in spps]
        slope = np.polyfit(np.log2(spps), np.log2(rmse), 1)[0]
        assert -0.6 < slope < -0.4

    def test_three_materials_scene_orders_the_slabs(self):
        # equal mean extinction, very different straight-through fluxes;
        # the bands sit on the central rows of each slab
        img = render(bundled_scene("three_materials").with_resolution(48, 32), 64, seed=5)
        luma = img.values.mean(axis=2)[12:20]
        sharp = luma[:, 10:15].mean()
        plain = luma[:, 21:27].mean()
        clumpy = luma[:, 33:38].mean()
        assert clumpy > plain > sharp
        assert sharp > 5 * 0.023  # transmitted flux, not just background


# ---------------------------------------------------------------------------
# determinism and diagnostics
# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def cube():
    return bundled_scene("cube_backlight").with_resolution(24, 24)


class TestDeterminism:

    def test_same_seed_is_bitwise_stable(self, cube):
        a = render(cube, 9, seed=5)
        b = render(cube, 9, seed=5)
        assert np.array_equal(a.values, b.values)

    def test_different_seeds_differ(self, cube):
        a = render(cube, 9, seed=5)
        b = render(cube, 9, seed=6)
        assert not np.array_equal(a.values, b.values)

    def test_worker_count_does_not_change_the_image(self, cube):
        a = render(cube, 9, seed=5, workers=1)
        b = render(cube, 9, seed=5, workers=8)
        assert np.array_equal(a.values, b.values)

    def test_zero_variance_render_equals_classical_render(self, cube):
        a = render(cube.with_zero_variance(), 16, seed=11)
        b = render(cube.classical(), 16, seed=11)
        assert np.array_equal(a.values, b.values)

    def test_diagnostics_are_clean_on_the_bundled_scene(self, cube):
        img, diag = render_with_diagnostics(cube, 4, seed=1)
        assert diag.paths == 24 * 24 * 4
        assert diag.nonfinite_samples == 0
        assert diag.reset_violations == 0
        assert img.mean > 0

    def test_input_validation(self, cube):
        with pytest.raises(ValueError):
            render(cube, 0)
        with pytest.raises(ValueError):
            render(cube, 4, workers=0)
