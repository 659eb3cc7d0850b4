"""Scene descriptions for the volumetric renderer.

A scene is a pinhole camera, a set of primitives (spheres, axis-aligned
boxes, planes), participating media attached to watertight primitives,
lights, and a background radiance. Scenes come from a small block-based
text format::

    # comment
    background 0.04 0.04 0.05

    camera {
      position 0 0 1.6
      look_at 0 0 0
      fov 30
      resolution 128 128
    }

    medium haze {
      model gamma:meanC=6,varC=12,sigma=1
      albedo 0.85 0.85 0.85
      phase isotropic            # or: phase hg 0.3
    }

    box { min -0.25 -0.25 -0.25  max 0.25 0.25 0.25  interior haze }
    sphere { center 0 0 0  radius 0.3  bsdf lambert 0.7 0.7 0.7 }
    plane { point 0 -1 0  normal 0 1 0  bsdf lambert 0.8 0.8 0.8 }

    light back { type rect  corner -0.5 -0.5 -0.8
                 edge_a 1 0 0  edge_b 0 1 0  radiance 4 4 4 }

Media take one extinction model per RGB channel (``model`` sets all
three, ``model_red``/``model_green``/``model_blue`` override one), an
optional ``source_model`` used for flights that start at the camera or
at a surface, and optional ``source_model_for NAME SPEC`` overrides used
when connecting to the named light. ``variance_matrix`` (nine numbers,
row-major) switches the medium to a direction-dependent law built from
``mean_concentration`` and ``cross_section``. ``cross_correlation NAME
0`` documents that two media meet at an independent interface; nonzero
values are rejected, because no efficient general treatment of
correlated interfaces exists and this renderer does not attempt one.

Parse problems raise :class:`SceneParseError` with the line and column;
structurally valid text with inconsistent content raises
:class:`SceneError`.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import models

__all__ = [
    "Camera", "Medium", "Sphere", "Box", "Plane", "Lambert", "Dielectric",
    "PointLight", "RectLight", "Scene", "SceneError", "SceneParseError",
    "parse_scene", "load_scene", "bundled_scene", "bundled_scene_names",
]

# Codes shared with the tracer kernels.
KIND_EXPONENTIAL = 0
KIND_GAMMA = 1
KIND_LINEAR = 2

PHASE_ISOTROPIC = 0
PHASE_HG = 1

BSDF_NONE = -1
BSDF_LAMBERT = 0
BSDF_DIELECTRIC = 1

PRIM_SPHERE = 0
PRIM_BOX = 1
PRIM_PLANE = 2

LIGHT_POINT = 0
LIGHT_RECT = 1


class SceneParseError(ValueError):
    """Scene text that does not parse. Carries ``line`` and ``column``."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class SceneError(ValueError):
    """Well-formed scene text describing an inconsistent scene."""


def _vec(values, name: str) -> tuple[float, float, float]:
    out = tuple(float(v) for v in values)
    if len(out) != 3 or not all(math.isfinite(v) for v in out):
        raise SceneError(f"{name} must be three finite numbers")
    return out


def _unit(v: tuple[float, float, float], name: str) -> tuple[float, float, float]:
    n = math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])
    if n <= 0.0:
        raise SceneError(f"{name} must not be the zero vector")
    return (v[0] / n, v[1] / n, v[2] / n)


@dataclass(frozen=True)
class Camera:
    position: tuple[float, float, float]
    look_at: tuple[float, float, float]
    fov_degrees: float
    width: int
    height: int
    up: tuple[float, float, float] = (0.0, 1.0, 0.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _vec(self.position, "camera position"))
        object.__setattr__(self, "look_at", _vec(self.look_at, "camera look_at"))
        object.__setattr__(self, "up", _vec(self.up, "camera up"))
        if not 0.0 < self.fov_degrees < 180.0:
            raise SceneError("vertical fov must be in (0, 180) degrees")
        if self.width < 1 or self.height < 1:
            raise SceneError("image resolution must be at least 1x1")
        fwd = tuple(b - a for a, b in zip(self.position, self.look_at))
        f = _unit(fwd, "camera view direction")
        u = _unit(self.up, "camera up")
        cross = (f[1] * u[2] - f[2] * u[1], f[2] * u[0] - f[0] * u[2],
                 f[0] * u[1] - f[1] * u[0])
        if sum(c * c for c in cross) < 1e-18:
            raise SceneError("camera up is parallel to the view direction")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Forward, right, and up unit vectors of the view frame."""
        fwd = np.array(self.look_at) - np.array(self.position)
        fwd /= np.linalg.norm(fwd)
        right = np.cross(fwd, np.array(self.up, dtype=np.float64))
        right /= np.linalg.norm(right)
        up = np.cross(right, fwd)
        return fwd, right, up


@dataclass(frozen=True)
class Lambert:
    albedo: tuple[float, float, float]

    def __post_init__(self) -> None:
        a = _vec(self.albedo, "lambert albedo")
        if min(a) < 0.0 or max(a) > 1.0:
            raise SceneError("lambert albedo must lie in [0, 1]")
        object.__setattr__(self, "albedo", a)


@dataclass(frozen=True)
class Dielectric:
    ior: float = 1.5

    def __post_init__(self) -> None:
        if not math.isfinite(self.ior) or self.ior < 1.0:
            raise SceneError("dielectric index of refraction must be >= 1")


def _model_row(model) -> tuple[int, tuple[float, float, float]]:
    """Kind code and parameter triple of one extinction model.

    Raises SceneError for model families the tracer cannot sample.
    """
    if isinstance(model, models.ExponentialModel):
        return KIND_EXPONENTIAL, (model.mean_extinction, 0.0, 0.0)
    if isinstance(model, models.GammaConcentrationModel):
        return KIND_GAMMA, (model.alpha, model.beta, model.cross_section)
    if isinstance(model, models.LinearNegativeModel):
        return KIND_LINEAR, (model.mean_extinction, 0.0, 0.0)
    raise SceneError(
        f"{type(model).__name__} cannot be used in scenes; the renderer "
        "samples exponential, gamma and linear extinction laws"
    )


def _mean_extinction(model) -> float:
    return float(model.mean_extinction)


_GREY = tuple[object, object, object]


@dataclass(frozen=True)
class Medium:
    """Optical description of one participating-medium region.

    ``scattered`` holds the per-channel extinction models for flights
    that start at a scattering event; ``source`` the models for flights
    that start at the camera, at a surface, or at a region boundary.
    ``for_light`` maps light names to per-channel models used when
    connecting a vertex to that light. When ``variance`` is set the
    medium is direction dependent: flights and connections along a unit
    direction w see the concentration variance sqrt(w^T V w) at mean
    ``mean_concentration``, and the per-channel models are ignored.
    """

    name: str
    scattered: _GREY
    source: _GREY = None  # type: ignore[assignment]
    albedo: tuple[float, float, float] = (1.0, 1.0, 1.0)
    phase: int = PHASE_ISOTROPIC
    g: float = 0.0
    for_light: dict = field(default_factory=dict)
    variance: models.DirectionalVariance | None = None
    mean_concentration: float = 0.0
    cross_section: float = 1.0

    def __post_init__(self) -> None:
        if not self.name:
            raise SceneError("medium name must be non-empty")
        a = _vec(self.albedo, f"albedo of medium {self.name!r}")
        if min(a) < 0.0 or max(a) > 1.0:
            raise SceneError(f"albedo of medium {self.name!r} must lie in [0, 1]")
        object.__setattr__(self, "albedo", a)
        if self.phase not in (PHASE_ISOTROPIC, PHASE_HG):
            raise SceneError(f"unknown phase code {self.phase}")
        if self.phase == PHASE_HG and not -1.0 < self.g < 1.0:
            raise SceneError("Henyey-Greenstein g must lie in (-1, 1)")
        if self.variance is not None:
            if self.mean_concentration <= 0.0 or self.cross_section <= 0.0:
                raise SceneError(
                    f"medium {self.name!r}: a variance matrix needs positive "
                    "mean_concentration and cross_section"
                )
            if self.for_light:
                raise SceneError(
                    f"medium {self.name!r}: per-light models and a variance "
                    "matrix cannot be combined"
                )
            # Placeholder rows keep the tables rectangular; the tracer
            # rebuilds the law per direction and never reads them.
            stub = models.ExponentialModel(self.mean_concentration * self.cross_section)
            object.__setattr__(self, "scattered", (stub, stub, stub))
            object.__setattr__(self, "source", (stub, stub, stub))
            return
        scat = self._triple(self.scattered, "model")
        object.__setattr__(self, "scattered", scat)
        src = scat if self.source is None else self._triple(self.source, "source_model")
        object.__setattr__(self, "source", src)
        resolved = {}
        for light_name, triple in self.for_light.items():
            resolved[light_name] = self._triple(triple, f"source_model_for {light_name}")
        object.__setattr__(self, "for_light", resolved)

    def _triple(self, value, what: str) -> _GREY:
        triple = tuple(value) if isinstance(value, (tuple, list)) else (value,) * 3
        if len(triple) != 3:
            raise SceneError(f"medium {self.name!r}: {what} needs 1 or 3 models")
        for m in triple:
            _model_row(m)
        return triple

    def light_models(self, light_name: str) -> _GREY:
        return self.for_light.get(light_name, self.source)


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]
    radius: float
    interior: str | None = None
    bsdf: Lambert | Dielectric | None = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "center", _vec(self.center, "sphere center"))
        if not math.isfinite(self.radius) or self.radius <= 0.0:
            raise SceneError("sphere radius must be positive")
        _check_container(self)

    def contains(self, p) -> bool:
        d = np.asarray(p, dtype=np.float64) - np.asarray(self.center)
        return float(d @ d) < self.radius * self.radius


@dataclass(frozen=True)
class Box:
    lo: tuple[float, float, float]
    hi: tuple[float, float, float]
    interior: str | None = None
    bsdf: Lambert | Dielectric | None = None

    def __post_init__(self) -> None:
        lo = _vec(self.lo, "box min")
        hi = _vec(self.hi, "box max")
        if not all(a < b for a, b in zip(lo, hi)):
            raise SceneError("box min must be strictly below box max on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        _check_container(self)

    def contains(self, p) -> bool:
        return all(a < x < b for a, x, b in zip(self.lo, p, self.hi))


@dataclass(frozen=True)
class Plane:
    point: tuple[float, float, float]
    normal: tuple[float, float, float]
    bsdf: Lambert | Dielectric | None = None
    interior = None  # planes bound no volume

    def __post_init__(self) -> None:
        object.__setattr__(self, "point", _vec(self.point, "plane point"))
        object.__setattr__(self, "normal", _unit(_vec(self.normal, "plane normal"),
                                                 "plane normal"))

    def contains(self, p) -> bool:
        return False


def _check_container(prim) -> None:
    if prim.interior is not None and isinstance(prim.bsdf, Lambert):
        raise SceneError("an opaque surface cannot bound a medium region")


@dataclass(frozen=True)
class PointLight:
    name: str
    position: tuple[float, float, float]
    intensity: tuple[float, float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "position", _vec(self.position, "light position"))
        e = _vec(self.intensity, "light intensity")
        if min(e) < 0.0:
            raise SceneError("light intensity must be nonnegative")
        object.__setattr__(self, "intensity", e)


@dataclass(frozen=True)
class RectLight:
    name: str
    corner: tuple[float, float, float]
    edge_a: tuple[float, float, float]
    edge_b: tuple[float, float, float]
    radiance: tuple[float, float, float]

    def __post_init__(self) -> None:
        object.__setattr__(self, "corner", _vec(self.corner, "light corner"))
        object.__setattr__(self, "edge_a", _vec(self.edge_a, "light edge_a"))
        object.__setattr__(self, "edge_b", _vec(self.edge_b, "light edge_b"))
        e = _vec(self.radiance, "light radiance")
        if min(e) < 0.0:
            raise SceneError("light radiance must be nonnegative")
        object.__setattr__(self, "radiance", e)
        if self.area <= 0.0:
            raise SceneError("rect light edges must not be parallel or zero")
        a, b = self.edge_a, self.edge_b
        la = math.sqrt(sum(c * c for c in a))
        lb = math.sqrt(sum(c * c for c in b))
        if abs(sum(x * y for x, y in zip(a, b))) > 1e-9 * la * lb:
            raise SceneError("rect light edges must be perpendicular")

    @property
    def normal(self) -> tuple[float, float, float]:
        a, b = self.edge_a, self.edge_b
        n = (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
             a[0] * b[1] - a[1] * b[0])
        return _unit(n, "rect light normal")

    @property
    def area(self) -> float:
        a, b = self.edge_a, self.edge_b
        n = (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2],
             a[0] * b[1] - a[1] * b[0])
        return math.sqrt(sum(c * c for c in n))


class SceneTables(NamedTuple):
    """Flattened numeric form of a scene, consumed by the tracer kernels."""

    prim_kind: np.ndarray
    prim_a: np.ndarray
    prim_b: np.ndarray
    prim_interior: np.ndarray
    prim_bsdf: np.ndarray
    prim_bsdf_p: np.ndarray
    light_kind: np.ndarray
    light_p: np.ndarray
    light_ea: np.ndarray
    light_eb: np.ndarray
    light_n: np.ndarray
    light_area: np.ndarray
    light_e: np.ndarray
    med_kind: np.ndarray
    med_par: np.ndarray
    med_src_kind: np.ndarray
    med_src_par: np.ndarray
    med_li_kind: np.ndarray
    med_li_par: np.ndarray
    med_albedo: np.ndarray
    med_phase: np.ndarray
    med_g: np.ndarray
    med_dv: np.ndarray
    med_v: np.ndarray
    med_dv_mean: np.ndarray
    med_dv_sigma: np.ndarray
    background: np.ndarray
    camera_medium: int


@dataclass(frozen=True)
class Scene:
    camera: Camera
    media: tuple[Medium, ...] = ()
    primitives: tuple = ()
    lights: tuple = ()
    background: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "media", tuple(self.media))
        object.__setattr__(self, "primitives", tuple(self.primitives))
        object.__setattr__(self, "lights", tuple(self.lights))
        bg = _vec(self.background, "background")
        if min(bg) < 0.0:
            raise SceneError("background radiance must be nonnegative")
        object.__setattr__(self, "background", bg)
        names = [m.name for m in self.media]
        if len(set(names)) != len(names):
            raise SceneError("medium names must be unique")
        light_names = [l.name for l in self.lights]
        if len(set(light_names)) != len(light_names):
            raise SceneError("light names must be unique")
        for prim in self.primitives:
            if prim.interior is not None and prim.interior not in names:
                raise SceneError(f"primitive refers to unknown medium {prim.interior!r}")
        for medium in self.media:
            for light_name in medium.for_light:
                if light_name not in light_names:
                    raise SceneError(
                        f"medium {medium.name!r} overrides the model for "
                        f"unknown light {light_name!r}"
                    )

    def medium_index(self, name: str) -> int:
        for i, m in enumerate(self.media):
            if m.name == name:
                return i
        raise KeyError(name)

    def with_resolution(self, width: int, height: int) -> "Scene":
        cam = dataclasses.replace(self.camera, width=width, height=height)
        return dataclasses.replace(self, camera=cam)

    def classical(self) -> "Scene":
        """The same scene with every extinction law made exponential.

        Mean extinction rates are preserved, so the classical scene is
        the memoryless reference for this one.
        """
        return dataclasses.replace(self, media=tuple(
            self._exponential_medium(m) for m in self.media))

    def with_zero_variance(self) -> "Scene":
        """Gamma and direction-dependent media pinned to zero variance.

        Exponential and linear media are left alone; the result models
        the same concentrations with all spatial correlation removed.
        """
        out = []
        for m in self.media:
            if m.variance is not None:
                out.append(self._exponential_medium(m))
                continue
            def pin(model):
                if isinstance(model, models.GammaConcentrationModel):
                    return models.concentration_model(
                        model.mean_concentration, 0.0, model.cross_section)
                return model
            out.append(dataclasses.replace(
                m,
                scattered=tuple(pin(x) for x in m.scattered),
                source=tuple(pin(x) for x in m.source),
                for_light={k: tuple(pin(x) for x in v)
                           for k, v in m.for_light.items()},
            ))
        return dataclasses.replace(self, media=tuple(out))

    @staticmethod
    def _exponential_medium(m: Medium) -> Medium:
        if m.variance is not None:
            flat = models.ExponentialModel(m.mean_concentration * m.cross_section)
        else:
            flat = None
        def swap(model):
            return models.ExponentialModel(_mean_extinction(model))
        return dataclasses.replace(
            m,
            scattered=(flat,) * 3 if flat else tuple(swap(x) for x in m.scattered),
            source=(flat,) * 3 if flat else tuple(swap(x) for x in m.source),
            for_light={} if flat else {k: tuple(swap(x) for x in v)
                                       for k, v in m.for_light.items()},
            variance=None,
            mean_concentration=0.0,
            cross_section=1.0,
        )

    def camera_medium(self) -> int:
        for i, prim in enumerate(self.primitives):
            if prim.interior is not None and prim.contains(self.camera.position):
                return self.medium_index(prim.interior)
        return -1

    def tables(self) -> SceneTables:
        np_ = len(self.primitives)
        prim_kind = np.empty(np_, dtype=np.int64)
        prim_a = np.zeros((np_, 3))
        prim_b = np.zeros((np_, 3))
        prim_interior = np.full(np_, -1, dtype=np.int64)
        prim_bsdf = np.full(np_, BSDF_NONE, dtype=np.int64)
        prim_bsdf_p = np.zeros((np_, 3))
        for i, prim in enumerate(self.primitives):
            if isinstance(prim, Sphere):
                prim_kind[i] = PRIM_SPHERE
                prim_a[i] = prim.center
                prim_b[i, 0] = prim.radius
            elif isinstance(prim, Box):
                prim_kind[i] = PRIM_BOX
                prim_a[i] = prim.lo
                prim_b[i] = prim.hi
            elif isinstance(prim, Plane):
                prim_kind[i] = PRIM_PLANE
                prim_a[i] = prim.point
                prim_b[i] = prim.normal
            else:
                raise SceneError(f"unknown primitive type {type(prim).__name__}")
            if prim.interior is not None:
                prim_interior[i] = self.medium_index(prim.interior)
            if isinstance(prim.bsdf, Lambert):
                prim_bsdf[i] = BSDF_LAMBERT
                prim_bsdf_p[i] = prim.bsdf.albedo
            elif isinstance(prim.bsdf, Dielectric):
                prim_bsdf[i] = BSDF_DIELECTRIC
                prim_bsdf_p[i, 0] = prim.bsdf.ior

        nl = len(self.lights)
        light_kind = np.empty(nl, dtype=np.int64)
        light_p = np.zeros((nl, 3))
        light_ea = np.zeros((nl, 3))
        light_eb = np.zeros((nl, 3))
        light_n = np.zeros((nl, 3))
        light_area = np.zeros(nl)
        light_e = np.zeros((nl, 3))
        for i, light in enumerate(self.lights):
            if isinstance(light, PointLight):
                light_kind[i] = LIGHT_POINT
                light_p[i] = light.position
                light_e[i] = light.intensity
            else:
                light_kind[i] = LIGHT_RECT
                light_p[i] = light.corner
                light_ea[i] = light.edge_a
                light_eb[i] = light.edge_b
                light_n[i] = light.normal
                light_area[i] = light.area
                light_e[i] = light.radiance

        nm = len(self.media)
        med_kind = np.zeros((nm, 3), dtype=np.int64)
        med_par = np.zeros((nm, 3, 3))
        med_src_kind = np.zeros((nm, 3), dtype=np.int64)
        med_src_par = np.zeros((nm, 3, 3))
        med_li_kind = np.zeros((nm, nl, 3), dtype=np.int64)
        med_li_par = np.zeros((nm, nl, 3, 3))
        med_albedo = np.zeros((nm, 3))
        med_phase = np.zeros(nm, dtype=np.int64)
        med_g = np.zeros(nm)
        med_dv = np.zeros(nm, dtype=np.int64)
        med_v = np.zeros((nm, 3, 3))
        med_dv_mean = np.zeros(nm)
        med_dv_sigma = np.zeros(nm)
        for i, medium in enumerate(self.media):
            med_albedo[i] = medium.albedo
            med_phase[i] = medium.phase
            med_g[i] = medium.g
            if medium.variance is not None:
                med_dv[i] = 1
                med_v[i] = medium.variance.matrix
                med_dv_mean[i] = medium.mean_concentration
                med_dv_sigma[i] = medium.cross_section
            for c in range(3):
                med_kind[i, c], med_par[i, c] = _model_row(medium.scattered[c])
                med_src_kind[i, c], med_src_par[i, c] = _model_row(medium.source[c])
            for j, light in enumerate(self.lights):
                triple = medium.light_models(light.name)
                for c in range(3):
                    med_li_kind[i, j, c], med_li_par[i, j, c] = _model_row(triple[c])

        return SceneTables(
            prim_kind, prim_a, prim_b, prim_interior, prim_bsdf, prim_bsdf_p,
            light_kind, light_p, light_ea, light_eb, light_n, light_area,
            light_e, med_kind, med_par, med_src_kind, med_src_par,
            med_li_kind, med_li_par, med_albedo, med_phase, med_g,
            med_dv, med_v, med_dv_mean, med_dv_sigma,
            np.asarray(self.background, dtype=np.float64),
            self.camera_medium(),
        )


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------


class _Token(NamedTuple):
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    import re
    toks = []
    for ln, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        for m in re.finditer(r"[{}]|[^\s{}]+", body):
            toks.append(_Token(m.group(), ln, m.start() + 1))
    return toks


class _Cursor:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    @property
    def done(self) -> bool:
        return self.pos >= len(self.tokens)

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self, what: str) -> _Token:
        if self.done:
            last = self.tokens[-1] if self.tokens else _Token("", 1, 1)
            raise SceneParseError(f"unexpected end of scene, expected {what}",
                                  last.line, last.column)
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, literal: str) -> _Token:
        tok = self.next(f"'{literal}'")
        if tok.text != literal:
            raise SceneParseError(f"expected '{literal}', found {tok.text!r}",
                                  tok.line, tok.column)
        return tok

    def floats(self, n: int, what: str) -> tuple[float, ...]:
        out = []
        for _ in range(n):
            tok = self.next(f"a number for {what}")
            try:
                out.append(float(tok.text))
            except ValueError:
                raise SceneParseError(f"{what} expects a number, found {tok.text!r}",
                                      tok.line, tok.column) from None
        return tuple(out)

    def ints(self, n: int, what: str) -> tuple[int, ...]:
        out = []
        for _ in range(n):
            tok = self.next(f"an integer for {what}")
            try:
                out.append(int(tok.text))
            except ValueError:
                raise SceneParseError(f"{what} expects an integer, found {tok.text!r}",
                                      tok.line, tok.column) from None
        return tuple(out)

    def word(self, what: str) -> str:
        tok = self.next(what)
        if tok.text in "{}":
            raise SceneParseError(f"expected {what}, found {tok.text!r}",
                                  tok.line, tok.column)
        return tok.text


def _block_items(cur: _Cursor):
    """Yield key tokens inside a brace block, consuming the braces."""
    cur.expect("{")
    while True:
        tok = cur.next("a key or '}'")
        if tok.text == "}":
            return
        if tok.text == "{":
            raise SceneParseError("unexpected '{'", tok.line, tok.column)
        yield tok


def _reject_duplicate(seen: set, tok: _Token) -> None:
    if tok.text in seen:
        raise SceneParseError(f"duplicate key {tok.text!r}", tok.line, tok.column)
    seen.add(tok.text)


def _require(fields: dict, keys: tuple, tok: _Token, block: str):
    missing = [k for k in keys if k not in fields]
    if missing:
        raise SceneParseError(f"{block} block is missing {missing}",
                              tok.line, tok.column)


def _parse_model_token(cur: _Cursor, what: str):
    tok = cur.next(f"a model spec for {what}")
    try:
        return models.model_from_spec(tok.text)
    except ValueError as exc:
        raise SceneParseError(str(exc), tok.line, tok.column) from None


def _parse_camera(cur: _Cursor, opener: _Token) -> Camera:
    fields: dict = {}
    seen: set = set()
    for tok in _block_items(cur):
        _reject_duplicate(seen, tok)
        if tok.text == "position":
            fields["position"] = cur.floats(3, "position")
        elif tok.text == "look_at":
            fields["look_at"] = cur.floats(3, "look_at")
        elif tok.text == "up":
            fields["up"] = cur.floats(3, "up")
        elif tok.text == "fov":
            fields["fov_degrees"] = cur.floats(1, "fov")[0]
        elif tok.text == "resolution":
            fields["width"], fields["height"] = cur.ints(2, "resolution")
        else:
            raise SceneParseError(f"unknown camera key {tok.text!r}",
                                  tok.line, tok.column)
    _require(fields, ("position", "look_at", "fov_degrees", "width"), opener, "camera")
    return Camera(**fields)


def _parse_medium(cur: _Cursor, opener: _Token) -> Medium:
    name = cur.word("a medium name")
    fields: dict = {"name": name}
    per_channel: dict[int, object] = {}
    for_light: dict[str, object] = {}
    cross: list[tuple[str, float, _Token]] = []
    seen: set = set()
    for tok in _block_items(cur):
        if tok.text not in ("source_model_for", "cross_correlation"):
            _reject_duplicate(seen, tok)
        if tok.text == "model":
            fields["scattered"] = _parse_model_token(cur, "model")
        elif tok.text in ("model_red", "model_green", "model_blue"):
            channel = ("model_red", "model_green", "model_blue").index(tok.text)
            per_channel[channel] = _parse_model_token(cur, tok.text)
        elif tok.text == "source_model":
            fields["source"] = _parse_model_token(cur, "source_model")
        elif tok.text == "source_model_for":
            light_name = cur.word("a light name")
            for_light[light_name] = _parse_model_token(cur, "source_model_for")
        elif tok.text == "albedo":
            fields["albedo"] = cur.floats(3, "albedo")
        elif tok.text == "phase":
            kind = cur.word("a phase kind")
            if kind == "isotropic":
                fields["phase"] = PHASE_ISOTROPIC
            elif kind == "hg":
                fields["phase"] = PHASE_HG
                fields["g"] = cur.floats(1, "phase hg")[0]
            else:
                raise SceneParseError(f"unknown phase {kind!r}", tok.line, tok.column)
        elif tok.text == "mean_concentration":
            fields["mean_concentration"] = cur.floats(1, "mean_concentration")[0]
        elif tok.text == "cross_section":
            fields["cross_section"] = cur.floats(1, "cross_section")[0]
        elif tok.text == "variance_matrix":
            flat = cur.floats(9, "variance_matrix")
            try:
                fields["variance"] = models.DirectionalVariance(
                    np.array(flat).reshape(3, 3))
            except ValueError as exc:
                raise SceneParseError(str(exc), tok.line, tok.column) from None
        elif tok.text == "cross_correlation":
            other = cur.word("a medium name")
            value = cur.floats(1, "cross_correlation")[0]
            cross.append((other, value, tok))
        else:
            raise SceneParseError(f"unknown medium key {tok.text!r}",
                                  tok.line, tok.column)
    for other, value, tok in cross:
        if value != 0.0:
            raise SceneError(
                f"media {name!r} and {other!r} declare cross correlation "
                f"{value}; correlated interfaces have no efficient general "
                "treatment and are not supported, use 0 for an independent "
                "interface"
            )
    if per_channel:
        base = fields.get("scattered")
        triple = [per_channel.get(c, base) for c in range(3)]
        if any(m is None for m in triple):
            raise SceneParseError(
                "per-channel models need either all three channels or a "
                "base 'model' entry", opener.line, opener.column)
        fields["scattered"] = tuple(triple)
    if "variance" in fields and ("scattered" in fields or "source" in fields):
        raise SceneError(
            f"medium {name!r} declares both extinction models and a variance "
            "matrix; a direction-dependent medium is defined by "
            "mean_concentration, cross_section and variance_matrix alone"
        )
    if "scattered" not in fields:
        if "variance" not in fields:
            raise SceneParseError(f"medium {name!r} declares no extinction model",
                                  opener.line, opener.column)
        fields["scattered"] = None
    if for_light:
        fields["for_light"] = for_light
    return Medium(**fields)


def _parse_bsdf(cur: _Cursor, tok: _Token):
    kind = cur.word("a bsdf kind")
    if kind == "lambert":
        return Lambert(cur.floats(3, "lambert albedo"))
    if kind == "dielectric":
        return Dielectric(cur.floats(1, "dielectric ior")[0])
    raise SceneParseError(f"unknown bsdf {kind!r}", tok.line, tok.column)


def _parse_prim(cur: _Cursor, opener: _Token):
    fields: dict = {}
    seen: set = set()
    keys = {
        "sphere": {"center": 3, "radius": 1},
        "box": {"min": 3, "max": 3},
        "plane": {"point": 3, "normal": 3},
    }[opener.text]
    for tok in _block_items(cur):
        _reject_duplicate(seen, tok)
        if tok.text in keys:
            n = keys[tok.text]
            fields[tok.text] = cur.floats(n, tok.text) if n > 1 else \
                cur.floats(1, tok.text)[0]
        elif tok.text == "interior" and opener.text != "plane":
            fields["interior"] = cur.word("a medium name")
        elif tok.text == "bsdf":
            fields["bsdf"] = _parse_bsdf(cur, tok)
        else:
            raise SceneParseError(
                f"unknown {opener.text} key {tok.text!r}", tok.line, tok.column)
    _require(fields, tuple(keys), opener, opener.text)
    if opener.text == "sphere":
        return Sphere(fields["center"], fields["radius"],
                      fields.get("interior"), fields.get("bsdf"))
    if opener.text == "box":
        return Box(fields["min"], fields["max"],
                   fields.get("interior"), fields.get("bsdf"))
    return Plane(fields["point"], fields["normal"], fields.get("bsdf"))


def _parse_light(cur: _Cursor, opener: _Token, auto_name: str):
    name = auto_name if cur.peek().text == "{" else cur.word("a light name")
    fields: dict = {}
    seen: set = set()
    for tok in _block_items(cur):
        _reject_duplicate(seen, tok)
        if tok.text == "type":
            fields["type"] = cur.word("a light type")
        elif tok.text in ("position", "corner", "edge_a", "edge_b",
                          "radiance", "intensity"):
            fields[tok.text] = cur.floats(3, tok.text)
        else:
            raise SceneParseError(f"unknown light key {tok.text!r}",
                                  tok.line, tok.column)
    kind = fields.pop("type", None)
    if kind == "point":
        _require(fields, ("position", "intensity"), opener, "point light")
        return PointLight(name, fields["position"], fields["intensity"])
    if kind == "rect":
        _require(fields, ("corner", "edge_a", "edge_b", "radiance"),
                 opener, "rect light")
        return RectLight(name, fields["corner"], fields["edge_a"],
                         fields["edge_b"], fields["radiance"])
    raise SceneParseError("light block needs 'type point' or 'type rect'",
                          opener.line, opener.column)


def parse_scene(text: str) -> Scene:
    cur = _Cursor(_tokenize(text))
    camera = None
    media: list[Medium] = []
    prims: list = []
    lights: list = []
    background = (0.0, 0.0, 0.0)
    while not cur.done:
        tok = cur.next("a top-level block")
        if tok.text == "camera":
            if camera is not None:
                raise SceneParseError("second camera block", tok.line, tok.column)
            camera = _parse_camera(cur, tok)
        elif tok.text == "medium":
            media.append(_parse_medium(cur, tok))
        elif tok.text in ("sphere", "box", "plane"):
            prims.append(_parse_prim(cur, tok))
        elif tok.text == "light":
            lights.append(_parse_light(cur, tok, f"light{len(lights)}"))
        elif tok.text == "background":
            background = cur.floats(3, "background")
        else:
            raise SceneParseError(f"unknown top-level block {tok.text!r}",
                                  tok.line, tok.column)
    if camera is None:
        raise SceneParseError("scene has no camera block", 1, 1)
    return Scene(camera, tuple(media), tuple(prims), tuple(lights), background)


def load_scene(path) -> Scene:
    return parse_scene(Path(path).read_text(encoding="utf-8"))


def bundled_scene_names() -> tuple[str, ...]:
    root = resources.files("corrtrans").joinpath("scenes")
    return tuple(sorted(
        entry.name[: -len(".scene")]
        for entry in root.iterdir() if entry.name.endswith(".scene")
    ))


def bundled_scene(name: str) -> Scene:
    """Load one of the scenes shipped with the package by short name."""
    path = resources.files("corrtrans").joinpath("scenes", f"{name}.scene")
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise KeyError(f"no bundled scene named {name!r}; "
                       f"available: {', '.join(bundled_scene_names())}") from None
    return parse_scene(text)
