"""Volumetric path tracer with class-resolved free flights.

The tracer keeps two extinction laws per medium: one for flights that
start at a scattering event and one for flights that start at a source
boundary (camera, surface, or region entry). Flight lengths are drawn
from the law of the flight's origin class, so the non-exponential
memory within a single flight sits entirely in the sampler; every
scattering event, surface interaction, and region boundary starts a
fresh flight. Connections to a light apply that light's transmittance
law over each contiguous in-medium segment of the shadow ray.

Rendering is deterministic: every pixel owns an RNG stream derived from
(seed, pixel index) with the same mixing function as
:func:`corrtrans.rng.substream_seed`, and threads write disjoint
pixels, so images are identical for any worker count.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numba
import numpy as np
from numba import njit, prange

from .images import Image
from .scene import (
    BSDF_DIELECTRIC,
    BSDF_LAMBERT,
    KIND_EXPONENTIAL,
    KIND_GAMMA,
    KIND_LINEAR,
    LIGHT_RECT,
    PHASE_HG,
    PRIM_BOX,
    PRIM_PLANE,
    PRIM_SPHERE,
    Scene,
)

__all__ = ["render", "render_with_diagnostics", "RenderDiagnostics",
           "phase_sample", "phase_density", "PIXEL_STREAM_TAG"]

INF = 1e30
_EPS = 1e-7
_RR_DEPTH = 16
_MAX_DEPTH = 256
_MAX_CROSSINGS = 1024

PIXEL_STREAM_TAG = 9001


class RenderDiagnostics(NamedTuple):
    """Counters the kernels report alongside an image."""

    paths: int
    nonfinite_samples: int
    reset_violations: int


# ---------------------------------------------------------------------------
# Per-pixel RNG: splitmix64, numba twin of rng.mix64
# ---------------------------------------------------------------------------

_SM_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_SM_C1 = np.uint64(0xBF58476D1CE4E5B9)
_SM_C2 = np.uint64(0x94D049BB133111EB)


@njit(cache=True, inline="always")
def _mix64(x):
    x = x + _SM_GAMMA
    x = (x ^ (x >> np.uint64(30))) * _SM_C1
    x = (x ^ (x >> np.uint64(27))) * _SM_C2
    return x ^ (x >> np.uint64(31))


@njit(cache=True, inline="always")
def _pixel_stream(seed, pixel):
    s = _mix64(seed ^ np.uint64(PIXEL_STREAM_TAG))
    return _mix64(s ^ np.uint64(pixel))


@njit(cache=True, inline="always")
def _next(state):
    state = state + _SM_GAMMA
    z = state
    z = (z ^ (z >> np.uint64(30))) * _SM_C1
    z = (z ^ (z >> np.uint64(27))) * _SM_C2
    z = z ^ (z >> np.uint64(31))
    return (z >> np.uint64(11)) * 1.1102230246251565e-16, state


# ---------------------------------------------------------------------------
# Extinction law evaluation by kind code
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _flight_sample(kind, p0, p1, p2, u):
    if kind == KIND_EXPONENTIAL:
        return -math.log1p(-u) / p0
    if kind == KIND_GAMMA:
        return (p1 / p2) * math.expm1(-math.log1p(-u) / p0)
    return u / p0  # linear: uniform density up to the exhaustion distance


@njit(cache=True, inline="always")
def _flight_T(kind, p0, p1, p2, t):
    if kind == KIND_EXPONENTIAL:
        return math.exp(-p0 * t)
    if kind == KIND_GAMMA:
        return math.exp(-p0 * math.log1p(p2 * t / p1))
    return max(0.0, 1.0 - p0 * t)


@njit(cache=True, inline="always")
def _flight_pdf(kind, p0, p1, p2, t):
    if kind == KIND_EXPONENTIAL:
        return p0 * math.exp(-p0 * t)
    if kind == KIND_GAMMA:
        return (p0 * p2 / p1) * math.exp(-(1.0 + p0) * math.log1p(p2 * t / p1))
    if t < 1.0 / p0:
        return p0
    return 0.0


@njit(cache=True, inline="always")
def _resolve_law(kind, p0, p1, p2, dv, vxx, vxy, vxz, vyy, vyz, vzz,
                 dv_mean, dv_sigma, dx, dy, dz):
    """Final (kind, params) of a law, folding in directional variance.

    For a direction-dependent medium the concentration variance along
    the flight direction is sqrt(d^T V d); a vanishing projection
    degenerates to the exponential law, like the isotropic case.
    """
    if dv == 0:
        return kind, p0, p1, p2
    q = (dx * (vxx * dx + vxy * dy + vxz * dz)
         + dy * (vxy * dx + vyy * dy + vyz * dz)
         + dz * (vxz * dx + vyz * dy + vzz * dz))
    var = math.sqrt(max(0.0, q))
    if var < 1e-12:
        return KIND_EXPONENTIAL, dv_mean * dv_sigma, 0.0, 0.0
    return KIND_GAMMA, dv_mean * dv_mean / var, dv_mean / var, dv_sigma


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _isect_sphere(ox, oy, oz, dx, dy, dz, cx, cy, cz, r, tmin):
    qx, qy, qz = ox - cx, oy - cy, oz - cz
    b = qx * dx + qy * dy + qz * dz
    c = qx * qx + qy * qy + qz * qz - r * r
    disc = b * b - c
    if disc < 0.0:
        return INF
    s = math.sqrt(disc)
    t = -b - s
    if t > tmin:
        return t
    t = -b + s
    if t > tmin:
        return t
    return INF


@njit(cache=True, inline="always")
def _isect_box(ox, oy, oz, dx, dy, dz, lox, loy, loz, hix, hiy, hiz, tmin):
    t_enter = -INF
    t_exit = INF
    for axis in range(3):
        if axis == 0:
            o, d, lo, hi = ox, dx, lox, hix
        elif axis == 1:
            o, d, lo, hi = oy, dy, loy, hiy
        else:
            o, d, lo, hi = oz, dz, loz, hiz
        if d == 0.0:
            if o <= lo or o >= hi:
                return INF
            continue
        inv = 1.0 / d
        ta = (lo - o) * inv
        tb = (hi - o) * inv
        if ta > tb:
            ta, tb = tb, ta
        if ta > t_enter:
            t_enter = ta
        if tb < t_exit:
            t_exit = tb
    if t_exit <= t_enter:
        return INF
    if t_enter > tmin:
        return t_enter
    if t_exit > tmin:
        return t_exit
    return INF


@njit(cache=True, inline="always")
def _isect_plane(ox, oy, oz, dx, dy, dz, px, py, pz, nx, ny, nz, tmin):
    denom = nx * dx + ny * dy + nz * dz
    if abs(denom) < 1e-12:
        return INF
    t = ((px - ox) * nx + (py - oy) * ny + (pz - oz) * nz) / denom
    if t > tmin:
        return t
    return INF


@njit(cache=True)
def _nearest_prim(ox, oy, oz, dx, dy, dz, tmin, tmax,
                  prim_kind, prim_a, prim_b):
    best = INF
    hit = -1
    for i in range(prim_kind.shape[0]):
        if prim_kind[i] == PRIM_SPHERE:
            t = _isect_sphere(ox, oy, oz, dx, dy, dz,
                              prim_a[i, 0], prim_a[i, 1], prim_a[i, 2],
                              prim_b[i, 0], tmin)
        elif prim_kind[i] == PRIM_BOX:
            t = _isect_box(ox, oy, oz, dx, dy, dz,
                           prim_a[i, 0], prim_a[i, 1], prim_a[i, 2],
                           prim_b[i, 0], prim_b[i, 1], prim_b[i, 2], tmin)
        else:
            t = _isect_plane(ox, oy, oz, dx, dy, dz,
                             prim_a[i, 0], prim_a[i, 1], prim_a[i, 2],
                             prim_b[i, 0], prim_b[i, 1], prim_b[i, 2], tmin)
        if t < best and t < tmax:
            best = t
            hit = i
    return best, hit


@njit(cache=True)
def _nearest_rect_light(ox, oy, oz, dx, dy, dz, tmin,
                        light_kind, light_p, light_ea, light_eb, light_n):
    best = INF
    hit = -1
    for j in range(light_kind.shape[0]):
        if light_kind[j] != LIGHT_RECT:
            continue
        nx, ny, nz = light_n[j, 0], light_n[j, 1], light_n[j, 2]
        t = _isect_plane(ox, oy, oz, dx, dy, dz,
                         light_p[j, 0], light_p[j, 1], light_p[j, 2],
                         nx, ny, nz, tmin)
        if t >= best:
            continue
        hx = ox + t * dx - light_p[j, 0]
        hy = oy + t * dy - light_p[j, 1]
        hz = oz + t * dz - light_p[j, 2]
        # edges are validated perpendicular, so project independently
        ea2 = (light_ea[j, 0] ** 2 + light_ea[j, 1] ** 2 + light_ea[j, 2] ** 2)
        eb2 = (light_eb[j, 0] ** 2 + light_eb[j, 1] ** 2 + light_eb[j, 2] ** 2)
        u = (hx * light_ea[j, 0] + hy * light_ea[j, 1] + hz * light_ea[j, 2]) / ea2
        v = (hx * light_eb[j, 0] + hy * light_eb[j, 1] + hz * light_eb[j, 2]) / eb2
        if 0.0 <= u <= 1.0 and 0.0 <= v <= 1.0:
            best = t
            hit = j
    return best, hit


@njit(cache=True, inline="always")
def _prim_normal(kind, ax, ay, az, bx, by, bz, px, py, pz):
    """Outward unit normal of a primitive at a surface point."""
    if kind == PRIM_SPHERE:
        inv = 1.0 / bx
        return (px - ax) * inv, (py - ay) * inv, (pz - az) * inv
    if kind == PRIM_PLANE:
        return bx, by, bz
    best = INF
    nx = ny = nz = 0.0
    for axis in range(3):
        if axis == 0:
            lo, hi, p = ax, bx, px
        elif axis == 1:
            lo, hi, p = ay, by, py
        else:
            lo, hi, p = az, bz, pz
        d_lo = abs(p - lo)
        d_hi = abs(p - hi)
        if d_lo < best:
            best = d_lo
            nx, ny, nz = 0.0, 0.0, 0.0
            if axis == 0:
                nx = -1.0
            elif axis == 1:
                ny = -1.0
            else:
                nz = -1.0
        if d_hi < best:
            best = d_hi
            nx, ny, nz = 0.0, 0.0, 0.0
            if axis == 0:
                nx = 1.0
            elif axis == 1:
                ny = 1.0
            else:
                nz = 1.0
    return nx, ny, nz


@njit(cache=True, inline="always")
def _onb(wx, wy, wz):
    if abs(wx) > 0.9:
        ax, ay, az = 0.0, 1.0, 0.0
    else:
        ax, ay, az = 1.0, 0.0, 0.0
    vx = wy * az - wz * ay
    vy = wz * ax - wx * az
    vz = wx * ay - wy * ax
    inv = 1.0 / math.sqrt(vx * vx + vy * vy + vz * vz)
    vx, vy, vz = vx * inv, vy * inv, vz * inv
    ux = wy * vz - wz * vy
    uy = wz * vx - wx * vz
    uz = wx * vy - wy * vx
    return ux, uy, uz, vx, vy, vz


# ---------------------------------------------------------------------------
# Phase functions
# ---------------------------------------------------------------------------


@njit(cache=True, inline="always")
def _hg_density(g, cos_theta):
    denom = 1.0 + g * g - 2.0 * g * cos_theta
    return (1.0 - g * g) / (4.0 * math.pi * denom * math.sqrt(denom))


@njit(cache=True, inline="always")
def _phase_eval(phase, g, cos_theta):
    if phase == PHASE_HG:
        return _hg_density(g, cos_theta)
    return 1.0 / (4.0 * math.pi)


@njit(cache=True, inline="always")
def _phase_scatter(phase, g, dx, dy, dz, u1, u2):
    if phase == PHASE_HG and abs(g) > 1e-9:
        frac = (1.0 - g * g) / (1.0 + g - 2.0 * g * u1)
        cos_t = (1.0 + g * g - frac * frac) / (2.0 * g)
    else:
        cos_t = 1.0 - 2.0 * u1
    sin_t = math.sqrt(max(0.0, 1.0 - cos_t * cos_t))
    phi = 2.0 * math.pi * u2
    ux, uy, uz, vx, vy, vz = _onb(dx, dy, dz)
    cp = math.cos(phi)
    sp = math.sin(phi)
    return (sin_t * (cp * ux + sp * vx) + cos_t * dx,
            sin_t * (cp * uy + sp * vy) + cos_t * dy,
            sin_t * (cp * uz + sp * vz) + cos_t * dz)


@njit(cache=True, inline="always")
def _cosine_hemisphere(nx, ny, nz, u1, u2):
    r = math.sqrt(u1)
    phi = 2.0 * math.pi * u2
    lx = r * math.cos(phi)
    ly = r * math.sin(phi)
    lz = math.sqrt(max(0.0, 1.0 - u1))
    ux, uy, uz, vx, vy, vz = _onb(nx, ny, nz)
    return (lx * ux + ly * vx + lz * nx,
            lx * uy + ly * vy + lz * ny,
            lx * uz + ly * vz + lz * nz)


# ---------------------------------------------------------------------------
# Light connections
# ---------------------------------------------------------------------------


@njit(cache=True)
def _segment_factor(med, light, dx, dy, dz, length,
                    med_li_kind, med_li_par, med_dv, med_v,
                    med_dv_mean, med_dv_sigma):
    """Per-channel transmittance of one in-medium shadow-ray segment."""
    fr = fg = fb = 1.0
    for c in range(3):
        kind, p0, p1, p2 = _resolve_law(
            med_li_kind[med, light, c],
            med_li_par[med, light, c, 0],
            med_li_par[med, light, c, 1],
            med_li_par[med, light, c, 2],
            med_dv[med],
            med_v[med, 0, 0], med_v[med, 0, 1], med_v[med, 0, 2],
            med_v[med, 1, 1], med_v[med, 1, 2], med_v[med, 2, 2],
            med_dv_mean[med], med_dv_sigma[med], dx, dy, dz)
        T = _flight_T(kind, p0, p1, p2, length)
        if c == 0:
            fr = T
        elif c == 1:
            fg = T
        else:
            fb = T
    return fr, fg, fb


@njit(cache=True)
def _connect_lights(px, py, pz, idx, idy, idz, nx, ny, nz, at_surface,
                    fr_r, fr_g, fr_b, phase, g, cur_med, state,
                    prim_kind, prim_a, prim_b, prim_interior, prim_bsdf,
                    light_kind, light_p, light_ea, light_eb, light_n,
                    light_area, light_e,
                    med_li_kind, med_li_par, med_dv, med_v,
                    med_dv_mean, med_dv_sigma):
    """Sum of direct-light contributions at one vertex.

    For a medium vertex (at_surface False) the throughput factor is the
    phase density toward the light; incoming direction comes in through
    (idx, idy, idz). For a surface vertex it is albedo/pi times the
    surface cosine, with (fr_r, fr_g, fr_b) the albedo and (nx, ny, nz)
    the shading normal. Returns the RGB sum and the advanced RNG state.
    """
    out_r = out_g = out_b = 0.0
    for j in range(light_kind.shape[0]):
        if light_kind[j] == LIGHT_RECT:
            u1, state = _next(state)
            u2, state = _next(state)
            yx = light_p[j, 0] + u1 * light_ea[j, 0] + u2 * light_eb[j, 0]
            yy = light_p[j, 1] + u1 * light_ea[j, 1] + u2 * light_eb[j, 1]
            yz = light_p[j, 2] + u1 * light_ea[j, 2] + u2 * light_eb[j, 2]
        else:
            yx, yy, yz = light_p[j, 0], light_p[j, 1], light_p[j, 2]
        wx, wy, wz = yx - px, yy - py, yz - pz
        dist2 = wx * wx + wy * wy + wz * wz
        if dist2 <= 0.0:
            continue
        dist = math.sqrt(dist2)
        wx, wy, wz = wx / dist, wy / dist, wz / dist
        if light_kind[j] == LIGHT_RECT:
            cos_l = -(light_n[j, 0] * wx + light_n[j, 1] * wy + light_n[j, 2] * wz)
            if cos_l <= 0.0:
                continue
            geom = cos_l * light_area[j] / dist2
        else:
            geom = 1.0 / dist2
        if at_surface:
            cos_s = nx * wx + ny * wy + nz * wz
            if cos_s <= 0.0:
                continue
            f_r = fr_r * cos_s / math.pi
            f_g = fr_g * cos_s / math.pi
            f_b = fr_b * cos_s / math.pi
        else:
            ph = _phase_eval(phase, g, idx * wx + idy * wy + idz * wz)
            f_r = f_g = f_b = ph
        # march the shadow ray: surfaces block, region boundaries
        # switch the transmittance law, lights are transparent
        fac_r = fac_g = fac_b = 1.0
        med = cur_med
        seg_start = 0.0
        cursor = _EPS
        blocked = False
        while True:
            t, ip = _nearest_prim(px, py, pz, wx, wy, wz, cursor, dist - _EPS,
                                  prim_kind, prim_a, prim_b)
            if ip < 0:
                if med >= 0:
                    sr, sg, sb = _segment_factor(
                        med, j, wx, wy, wz, dist - seg_start,
                        med_li_kind, med_li_par, med_dv, med_v,
                        med_dv_mean, med_dv_sigma)
                    fac_r *= sr
                    fac_g *= sg
                    fac_b *= sb
                break
            if prim_bsdf[ip] != -1:
                blocked = True
                break
            if med >= 0:
                sr, sg, sb = _segment_factor(
                    med, j, wx, wy, wz, t - seg_start,
                    med_li_kind, med_li_par, med_dv, med_v,
                    med_dv_mean, med_dv_sigma)
                fac_r *= sr
                fac_g *= sg
                fac_b *= sb
            if prim_interior[ip] == med:
                med = -1
            else:
                med = prim_interior[ip]
            seg_start = t
            cursor = t + _EPS
        if blocked or (fac_r <= 0.0 and fac_g <= 0.0 and fac_b <= 0.0):
            continue
        out_r += f_r * geom * light_e[j, 0] * fac_r
        out_g += f_g * geom * light_e[j, 1] * fac_g
        out_b += f_b * geom * light_e[j, 2] * fac_b
    return out_r, out_g, out_b, state


# ---------------------------------------------------------------------------
# Path tracing
# ---------------------------------------------------------------------------


@njit(cache=True)
def _trace(ox, oy, oz, dx, dy, dz, cam_med, state,
           prim_kind, prim_a, prim_b, prim_interior, prim_bsdf, prim_bsdf_p,
           light_kind, light_p, light_ea, light_eb, light_n, light_area,
           light_e, med_kind, med_par, med_src_kind, med_src_par,
           med_li_kind, med_li_par, med_albedo, med_phase, med_g,
           med_dv, med_v, med_dv_mean, med_dv_sigma, background):
    l_r = l_g = l_b = 0.0
    b_r = b_g = b_b = 1.0
    cur_med = cam_med
    source_class = True  # camera flights start as boundary sources
    count_emission = True
    depth = 0
    crossings = 0
    violations = 0
    t_since_event = 0.0

    while True:
        # sample the free flight for this leg, if inside a medium
        hk = 0
        h0 = h1 = h2 = 1.0
        t_f = INF
        if cur_med >= 0:
            if t_since_event != 0.0:
                violations += 1
            u, state = _next(state)
            hero = int(3.0 * u)
            if hero > 2:
                hero = 2
            if source_class:
                k = med_src_kind[cur_med, hero]
                q0 = med_src_par[cur_med, hero, 0]
                q1 = med_src_par[cur_med, hero, 1]
                q2 = med_src_par[cur_med, hero, 2]
            else:
                k = med_kind[cur_med, hero]
                q0 = med_par[cur_med, hero, 0]
                q1 = med_par[cur_med, hero, 1]
                q2 = med_par[cur_med, hero, 2]
            hk, h0, h1, h2 = _resolve_law(
                k, q0, q1, q2, med_dv[cur_med],
                med_v[cur_med, 0, 0], med_v[cur_med, 0, 1], med_v[cur_med, 0, 2],
                med_v[cur_med, 1, 1], med_v[cur_med, 1, 2], med_v[cur_med, 2, 2],
                med_dv_mean[cur_med], med_dv_sigma[cur_med], dx, dy, dz)
            u, state = _next(state)
            t_f = _flight_sample(hk, h0, h1, h2, u)

        # walk events along the leg until something physical happens
        cursor = _EPS
        terminal = -1  # 0 escape, 1 collision, 2 surface/boundary
        t_event = INF
        prim_hit = -1
        while True:
            t_p, ip = _nearest_prim(ox, oy, oz, dx, dy, dz, cursor, INF,
                                    prim_kind, prim_a, prim_b)
            t_l, il = _nearest_rect_light(ox, oy, oz, dx, dy, dz, cursor,
                                          light_kind, light_p, light_ea,
                                          light_eb, light_n)
            if cur_med >= 0 and t_f <= t_p and t_f <= t_l:
                terminal = 1
                t_event = t_f
                break
            if t_l < t_p:
                # transparent emitter: collect and keep flying
                if count_emission:
                    front = (light_n[il, 0] * dx + light_n[il, 1] * dy
                             + light_n[il, 2] * dz) < 0.0
                    if front:
                        rat_r = rat_g = rat_b = 1.0
                        if cur_med >= 0:
                            th = _flight_T(hk, h0, h1, h2, t_l)
                            if th <= 0.0:
                                rat_r = rat_g = rat_b = 0.0
                            else:
                                rat_r, rat_g, rat_b = _leg_ratios(
                                    cur_med, source_class, hero, t_l, th, True,
                                    med_kind, med_par, med_src_kind,
                                    med_src_par, med_dv, med_v, med_dv_mean,
                                    med_dv_sigma, dx, dy, dz)
                        l_r += b_r * rat_r * light_e[il, 0]
                        l_g += b_g * rat_g * light_e[il, 1]
                        l_b += b_b * rat_b * light_e[il, 2]
                t_since_event = t_l
                cursor = t_l + _EPS
                continue
            if ip < 0:
                terminal = 0
                break
            terminal = 2
            t_event = t_p
            prim_hit = ip
            break

        if terminal == 0:
            l_r += b_r * background[0]
            l_g += b_g * background[1]
            l_b += b_b * background[2]
            return l_r, l_g, l_b, state, violations

        if terminal == 1:
            # collision: reweight channels, absorb or scatter
            px = ox + t_f * dx
            py = oy + t_f * dy
            pz = oz + t_f * dz
            ph = _flight_pdf(hk, h0, h1, h2, t_f)
            if ph <= 0.0:
                return l_r, l_g, l_b, state, violations
            rat_r, rat_g, rat_b = _leg_ratios(
                cur_med, source_class, hero, t_f, ph, False,
                med_kind, med_par, med_src_kind, med_src_par,
                med_dv, med_v, med_dv_mean, med_dv_sigma, dx, dy, dz)
            b_r *= rat_r * med_albedo[cur_med, 0]
            b_g *= rat_g * med_albedo[cur_med, 1]
            b_b *= rat_b * med_albedo[cur_med, 2]
            depth += 1
            t_since_event = 0.0
            if b_r <= 0.0 and b_g <= 0.0 and b_b <= 0.0:
                return l_r, l_g, l_b, state, violations
            c_r, c_g, c_b, state = _connect_lights(
                px, py, pz, dx, dy, dz, 0.0, 0.0, 0.0, False,
                0.0, 0.0, 0.0, med_phase[cur_med], med_g[cur_med], cur_med,
                state, prim_kind, prim_a, prim_b, prim_interior, prim_bsdf,
                light_kind, light_p, light_ea, light_eb, light_n, light_area,
                light_e, med_li_kind, med_li_par, med_dv, med_v,
                med_dv_mean, med_dv_sigma)
            l_r += b_r * c_r
            l_g += b_g * c_g
            l_b += b_b * c_b
            u1, state = _next(state)
            u2, state = _next(state)
            dx, dy, dz = _phase_scatter(med_phase[cur_med], med_g[cur_med],
                                        dx, dy, dz, u1, u2)
            ox, oy, oz = px, py, pz
            source_class = False
            count_emission = False
        else:
            # physical surface or region boundary at t_event
            if cur_med >= 0:
                th = _flight_T(hk, h0, h1, h2, t_event)
                if th <= 0.0:
                    return l_r, l_g, l_b, state, violations
                rat_r, rat_g, rat_b = _leg_ratios(
                    cur_med, source_class, hero, t_event, th, True,
                    med_kind, med_par, med_src_kind, med_src_par,
                    med_dv, med_v, med_dv_mean, med_dv_sigma, dx, dy, dz)
                b_r *= rat_r
                b_g *= rat_g
                b_b *= rat_b
            px = ox + t_event * dx
            py = oy + t_event * dy
            pz = oz + t_event * dz
            t_since_event = 0.0
            kind = prim_kind[prim_hit]
            nx, ny, nz = _prim_normal(
                kind, prim_a[prim_hit, 0], prim_a[prim_hit, 1],
                prim_a[prim_hit, 2], prim_b[prim_hit, 0], prim_b[prim_hit, 1],
                prim_b[prim_hit, 2], px, py, pz)
            bsdf = prim_bsdf[prim_hit]
            if bsdf == -1:
                # transparent region boundary; entering restarts the
                # photon as a boundary source in the new region
                crossings += 1
                if crossings > _MAX_CROSSINGS:
                    return l_r, l_g, l_b, state, violations
                if prim_interior[prim_hit] == cur_med:
                    cur_med = -1
                else:
                    cur_med = prim_interior[prim_hit]
                    source_class = True
                ox, oy, oz = px, py, pz
                continue
            if bsdf == BSDF_LAMBERT:
                if nx * dx + ny * dy + nz * dz > 0.0:
                    nx, ny, nz = -nx, -ny, -nz
                al_r = prim_bsdf_p[prim_hit, 0]
                al_g = prim_bsdf_p[prim_hit, 1]
                al_b = prim_bsdf_p[prim_hit, 2]
                c_r, c_g, c_b, state = _connect_lights(
                    px, py, pz, dx, dy, dz, nx, ny, nz, True,
                    al_r, al_g, al_b, 0, 0.0, cur_med, state,
                    prim_kind, prim_a, prim_b, prim_interior, prim_bsdf,
                    light_kind, light_p, light_ea, light_eb, light_n,
                    light_area, light_e, med_li_kind, med_li_par, med_dv,
                    med_v, med_dv_mean, med_dv_sigma)
                l_r += b_r * c_r
                l_g += b_g * c_g
                l_b += b_b * c_b
                u1, state = _next(state)
                u2, state = _next(state)
                dx, dy, dz = _cosine_hemisphere(nx, ny, nz, u1, u2)
                b_r *= al_r
                b_g *= al_g
                b_b *= al_b
                ox, oy, oz = px, py, pz
                depth += 1
                source_class = True
                count_emission = False
                if b_r <= 0.0 and b_g <= 0.0 and b_b <= 0.0:
                    return l_r, l_g, l_b, state, violations
            else:
                # smooth dielectric
                ior = prim_bsdf_p[prim_hit, 0]
                cos_i = -(dx * nx + dy * ny + dz * nz)
                if cos_i > 0.0:
                    ni, nt = 1.0, ior
                    fx, fy, fz = nx, ny, nz
                    entering = True
                else:
                    ni, nt = ior, 1.0
                    fx, fy, fz = -nx, -ny, -nz
                    cos_i = -cos_i
                    entering = False
                eta = ni / nt
                sin2t = eta * eta * max(0.0, 1.0 - cos_i * cos_i)
                reflect = False
                if sin2t >= 1.0:
                    reflect = True
                    cos_t = 0.0
                else:
                    cos_t = math.sqrt(1.0 - sin2t)
                    rs = (ni * cos_i - nt * cos_t) / (ni * cos_i + nt * cos_t)
                    rp = (nt * cos_i - ni * cos_t) / (nt * cos_i + ni * cos_t)
                    refl = 0.5 * (rs * rs + rp * rp)
                    if refl >= 1.0:
                        reflect = True
                    elif refl > 0.0:
                        u, state = _next(state)
                        reflect = u < refl
                if reflect:
                    dx = dx + 2.0 * cos_i * fx
                    dy = dy + 2.0 * cos_i * fy
                    dz = dz + 2.0 * cos_i * fz
                else:
                    dx = eta * dx + (eta * cos_i - cos_t) * fx
                    dy = eta * dy + (eta * cos_i - cos_t) * fy
                    dz = eta * dz + (eta * cos_i - cos_t) * fz
                    inv = 1.0 / math.sqrt(dx * dx + dy * dy + dz * dz)
                    dx, dy, dz = dx * inv, dy * inv, dz * inv
                    if prim_interior[prim_hit] >= 0:
                        cur_med = prim_interior[prim_hit] if entering else -1
                ox, oy, oz = px, py, pz
                depth += 1
                source_class = True
                count_emission = True

        if depth >= _MAX_DEPTH:
            return l_r, l_g, l_b, state, violations
        if depth >= _RR_DEPTH:
            q = max(b_r, max(b_g, b_b))
            if q > 1.0:
                q = 1.0
            u, state = _next(state)
            if u >= q:
                return l_r, l_g, l_b, state, violations
            b_r /= q
            b_g /= q
            b_b /= q


@njit(cache=True)
def _leg_ratios(med, source_class, hero, t, hero_val, survival,
                med_kind, med_par, med_src_kind, med_src_par,
                med_dv, med_v, med_dv_mean, med_dv_sigma, dx, dy, dz):
    """Per-channel weight of a leg outcome sampled with the hero law.

    With ``survival`` the outcome is passing distance t without a
    collision (weight T_c / T_hero), otherwise it is a collision at t
    (weight p_c / p_hero). ``hero_val`` is the hero law's T or p at t.
    """
    out_r = out_g = out_b = 1.0
    for c in range(3):
        if c == hero:
            continue
        if source_class:
            k = med_src_kind[med, c]
            q0 = med_src_par[med, c, 0]
            q1 = med_src_par[med, c, 1]
            q2 = med_src_par[med, c, 2]
        else:
            k = med_kind[med, c]
            q0 = med_par[med, c, 0]
            q1 = med_par[med, c, 1]
            q2 = med_par[med, c, 2]
        k, q0, q1, q2 = _resolve_law(
            k, q0, q1, q2, med_dv[med],
            med_v[med, 0, 0], med_v[med, 0, 1], med_v[med, 0, 2],
            med_v[med, 1, 1], med_v[med, 1, 2], med_v[med, 2, 2],
            med_dv_mean[med], med_dv_sigma[med], dx, dy, dz)
        if survival:
            val = _flight_T(k, q0, q1, q2, t)
        else:
            val = _flight_pdf(k, q0, q1, q2, t)
        ratio = val / hero_val
        if c == 0:
            out_r = ratio
        elif c == 1:
            out_g = ratio
        else:
            out_b = ratio
    return out_r, out_g, out_b


@njit(cache=True, parallel=True)
def _render_kernel(width, height, spp, seed, cam_o, cam_f, cam_r, cam_u,
                   half_w, half_h, cam_med,
                   prim_kind, prim_a, prim_b, prim_interior, prim_bsdf,
                   prim_bsdf_p, light_kind, light_p, light_ea, light_eb,
                   light_n, light_area, light_e, med_kind, med_par,
                   med_src_kind, med_src_par, med_li_kind, med_li_par,
                   med_albedo, med_phase, med_g, med_dv, med_v, med_dv_mean,
                   med_dv_sigma, background, out, stats):
    strata = int(math.sqrt(spp))
    if strata * strata != spp:
        strata = 0
    for pix in prange(width * height):
        py = pix // width
        px = pix % width
        state = _pixel_stream(seed, pix)
        acc_r = acc_g = acc_b = 0.0
        bad = 0
        viol = 0
        for s in range(spp):
            u1, state = _next(state)
            u2, state = _next(state)
            if strata > 0:
                sx = ((s % strata) + u1) / strata
                sy = ((s // strata) + u2) / strata
            else:
                sx, sy = u1, u2
            a = 2.0 * (px + sx) / width - 1.0
            b = 1.0 - 2.0 * (py + sy) / height
            dx = cam_f[0] + a * half_w * cam_r[0] + b * half_h * cam_u[0]
            dy = cam_f[1] + a * half_w * cam_r[1] + b * half_h * cam_u[1]
            dz = cam_f[2] + a * half_w * cam_r[2] + b * half_h * cam_u[2]
            inv = 1.0 / math.sqrt(dx * dx + dy * dy + dz * dz)
            r, g, bl, state, v = _trace(
                cam_o[0], cam_o[1], cam_o[2], dx * inv, dy * inv, dz * inv,
                cam_med, state, prim_kind, prim_a, prim_b, prim_interior,
                prim_bsdf, prim_bsdf_p, light_kind, light_p, light_ea,
                light_eb, light_n, light_area, light_e, med_kind, med_par,
                med_src_kind, med_src_par, med_li_kind, med_li_par,
                med_albedo, med_phase, med_g, med_dv, med_v, med_dv_mean,
                med_dv_sigma, background)
            viol += v
            if math.isfinite(r) and math.isfinite(g) and math.isfinite(bl):
                acc_r += r
                acc_g += g
                acc_b += bl
            else:
                bad += 1
        out[py, px, 0] = acc_r / spp
        out[py, px, 1] = acc_g / spp
        out[py, px, 2] = acc_b / spp
        stats[pix, 0] = bad
        stats[pix, 1] = viol


# ---------------------------------------------------------------------------
# Python entry points
# ---------------------------------------------------------------------------


def render_with_diagnostics(scene: Scene, spp: int, seed: int = 0,
                            workers: int | None = None
                            ) -> tuple[Image, RenderDiagnostics]:
    """Render and return the image together with the kernel counters."""
    if spp < 1:
        raise ValueError("samples per pixel must be at least 1")
    if workers is None:
        numba.set_num_threads(numba.config.NUMBA_NUM_THREADS)
    else:
        if workers < 1:
            raise ValueError("workers must be at least 1")
        numba.set_num_threads(min(workers, numba.config.NUMBA_NUM_THREADS))
    cam = scene.camera
    fwd, right, up = cam.basis()
    half_h = math.tan(math.radians(cam.fov_degrees) / 2.0)
    half_w = half_h * cam.width / cam.height
    tables = scene.tables()
    out = np.zeros((cam.height, cam.width, 3))
    stats = np.zeros((cam.height * cam.width, 2), dtype=np.int64)
    _render_kernel(
        cam.width, cam.height, int(spp), np.uint64(int(seed) & (2**64 - 1)),
        np.asarray(cam.position, dtype=np.float64), fwd, right, up,
        half_w, half_h, tables.camera_medium,
        tables.prim_kind, tables.prim_a, tables.prim_b, tables.prim_interior,
        tables.prim_bsdf, tables.prim_bsdf_p, tables.light_kind,
        tables.light_p, tables.light_ea, tables.light_eb, tables.light_n,
        tables.light_area, tables.light_e, tables.med_kind, tables.med_par,
        tables.med_src_kind, tables.med_src_par, tables.med_li_kind,
        tables.med_li_par, tables.med_albedo, tables.med_phase, tables.med_g,
        tables.med_dv, tables.med_v, tables.med_dv_mean, tables.med_dv_sigma,
        tables.background, out, stats)
    diag = RenderDiagnostics(
        paths=cam.width * cam.height * int(spp),
        nonfinite_samples=int(stats[:, 0].sum()),
        reset_violations=int(stats[:, 1].sum()),
    )
    np.maximum(out, 0.0, out=out)
    return Image(cam.width, cam.height, out), diag


def render(scene: Scene, spp: int, seed: int = 0,
           workers: int | None = None) -> Image:
    """Render a scene; deterministic in (seed, spp) for any worker count."""
    image, _ = render_with_diagnostics(scene, spp, seed, workers)
    return image


def phase_density(kind: str, cos_theta, g: float = 0.0):
    """Angular density of the named phase function at a scattering cosine."""
    c = np.asarray(cos_theta, dtype=np.float64)
    if kind == "isotropic":
        return np.full_like(c, 1.0 / (4.0 * math.pi))
    if kind == "hg":
        if not -1.0 < g < 1.0:
            raise ValueError("Henyey-Greenstein g must lie in (-1, 1)")
        denom = 1.0 + g * g - 2.0 * g * c
        return (1.0 - g * g) / (4.0 * math.pi * denom ** 1.5)
    raise ValueError(f"unknown phase function {kind!r}")


def phase_sample(kind: str, incoming, rng: np.random.Generator,
                 g: float = 0.0, size: int | None = None):
    """Draw outgoing directions and their density for a phase function.

    ``incoming`` is the propagation direction before the event. Returns
    (direction, pdf); with ``size`` the directions have shape (size, 3).
    """
    d = np.asarray(incoming, dtype=np.float64)
    if d.shape != (3,) or abs(d @ d - 1.0) > 1e-9:
        raise ValueError("incoming direction must be a unit 3-vector")
    n = 1 if size is None else int(size)
    u1 = rng.random(n)
    u2 = rng.random(n)
    if kind == "isotropic":
        cos_t = 1.0 - 2.0 * u1
    elif kind == "hg":
        if not -1.0 < g < 1.0:
            raise ValueError("Henyey-Greenstein g must lie in (-1, 1)")
        if abs(g) > 1e-9:
            frac = (1.0 - g * g) / (1.0 + g - 2.0 * g * u1)
            cos_t = (1.0 + g * g - frac * frac) / (2.0 * g)
        else:
            cos_t = 1.0 - 2.0 * u1
    else:
        raise ValueError(f"unknown phase function {kind!r}")
    sin_t = np.sqrt(np.maximum(0.0, 1.0 - cos_t * cos_t))
    phi = 2.0 * math.pi * u2
    ux, uy, uz, vx, vy, vz = _onb(d[0], d[1], d[2])
    frame_u = np.array([ux, uy, uz])
    frame_v = np.array([vx, vy, vz])
    dirs = (sin_t[:, None] * (np.cos(phi)[:, None] * frame_u
                              + np.sin(phi)[:, None] * frame_v)
            + cos_t[:, None] * d)
    pdf = phase_density("hg" if kind == "hg" else "isotropic", cos_t, g)
    if size is None:
        return dirs[0], float(pdf[0])
    return dirs, pdf
