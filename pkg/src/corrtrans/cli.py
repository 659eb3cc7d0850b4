"""Command-line front end.

Five subcommands: ``transmit`` evaluates extinction curves,
``sample-test`` checks a free-flight sampler against its analytic
distribution, ``lab`` runs the 2D particle-field experiments,
``groundtruth`` scores extinction models against a voxel volume, and
``render`` drives the path tracer. All file output happens here; the
library modules stay pure.

Every CSV (and every PPM, whose format allows comments) begins with
``#`` header lines naming the tool version, the subcommand, the seed,
and the fully resolved parameters, so any result file identifies the
run that produced it. Numbers use the ``.`` decimal point and ``,``
field separators regardless of locale.

Exit codes: 0 success, 1 a validation threshold failed, 2 usage or
input errors.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np
from scipy import stats

from . import __version__, freeflight, lab, models, rng, voxels
from .images import write_pfm, write_ppm
from .render import render_with_diagnostics
from .scene import SceneParseError, bundled_scene, bundled_scene_names, load_scene

__all__ = ["main"]


def _format_value(value) -> str:
    if isinstance(value, float):
        return format(value, ".12g")
    return str(value)


def _header(subcommand: str, params: dict) -> list[str]:
    lines = [f"corrtrans {__version__}", f"subcommand: {subcommand}"]
    lines += [f"{key}: {_format_value(val)}" for key, val in params.items()]
    return lines


def _emit_csv(out, header: list[str], columns: dict) -> None:
    """Write a commented-header CSV to ``out`` (path or '-' for stdout)."""
    rows = zip(*[np.atleast_1d(col) for col in columns.values()])
    text = "".join(f"# {line}\n" for line in header)
    text += ",".join(columns) + "\n"
    for row in rows:
        text += ",".join(_format_value(float(v)) for v in row) + "\n"
    if out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="ascii")


# ---------------------------------------------------------------------------
# transmit
# ---------------------------------------------------------------------------


def _curve_columns(model, t: np.ndarray, suffix: str = "") -> dict:
    return {
        "T" + suffix: model.transmittance(t),
        "p" + suffix: model.extinction_density(t),
        "mu" + suffix: model.differential_extinction(t),
    }


def cmd_transmit(args) -> int:
    model = models.model_from_spec(args.model)
    if args.steps < 2:
        raise ValueError("need at least 2 steps")
    if args.t_max <= 0.0:
        raise ValueError("t-max must be positive")
    t = np.linspace(0.0, args.t_max, args.steps)
    columns: dict = {"t": t}
    columns.update(_curve_columns(model, t))
    params = {"model": args.model, "t_max": args.t_max, "steps": args.steps}
    if args.compare is not None:
        columns.update(_curve_columns(models.model_from_spec(args.compare), t, "_ref"))
        params["compare"] = args.compare
    _emit_csv(args.out, _header("transmit", params), columns)
    return 0


# ---------------------------------------------------------------------------
# sample-test
# ---------------------------------------------------------------------------


def _draw_for_test(sampler: str, model, n: int, seed: int):
    """Return (draws, cdf, acceptance_rate) for one sampler."""
    gen = rng.stream(seed, 7700)
    if sampler == "exponential":
        if not isinstance(model, models.ExponentialModel):
            raise ValueError("the exponential sampler needs an exp:mu=... model")
        mu = model.mean_extinction
        t = freeflight.sample_exponential(gen.random(n), mu).t
        return t, stats.expon(scale=1.0 / mu).cdf, 1.0
    if sampler in ("gamma-proportional", "gamma-general"):
        if not isinstance(model, models.GammaConcentrationModel):
            raise ValueError(f"the {sampler} sampler needs a gamma:... model")
        a, b, s = model.alpha, model.beta, model.cross_section
        if sampler == "gamma-proportional":
            t = freeflight.sample_gamma_proportional(gen.random(n), a, b, s).t
            return t, lambda x: 1.0 - (1.0 + s * np.asarray(x) / b) ** (1.0 - a), 1.0
        t = freeflight.sample_gamma_general(gen.random(n), a, b, s).t
        return t, lambda x: 1.0 - (1.0 + s * np.asarray(x) / b) ** (-a), 1.0
    if sampler == "linear":
        if not isinstance(model, models.LinearNegativeModel):
            raise ValueError("the linear sampler needs a linear:mu=... model")
        mu = model.mean_extinction
        t = freeflight.sample_linear(gen.random(n), mu).t
        return t, lambda x: np.clip(mu * np.asarray(x), 0.0, 1.0), 1.0
    if not isinstance(model, models.GammaPathLengthModel):
        raise ValueError("the gamma-path sampler needs a gammapath:... model")
    raw, proposals = freeflight.standard_gamma_batch(gen, model.shape, n)
    t = raw * model.scale
    return t, stats.gamma(model.shape, scale=model.scale).cdf, n / proposals


def cmd_sample_test(args) -> int:
    if args.n < 1000:
        raise ValueError("sampler diagnostics need at least 1000 draws")
    model = models.model_from_spec(args.model)
    draws, cdf, acceptance = _draw_for_test(args.sampler, model, args.n, args.seed)
    ks = float(stats.kstest(draws, cdf).statistic)
    # default gate: the 99% Kolmogorov critical value for this n
    threshold = args.threshold if args.threshold is not None else 1.63 / np.sqrt(args.n)
    params = {
        "sampler": args.sampler, "model": args.model, "n": args.n,
        "seed": args.seed, "threshold": float(threshold),
    }
    columns = {
        "ks_statistic": ks,
        "threshold": float(threshold),
        "mean": float(np.mean(draws)),
        "variance": float(np.var(draws)),
        "acceptance_rate": float(acceptance),
    }
    _emit_csv(args.out, _header("sample-test", params), columns)
    if ks > threshold:
        print(f"FAIL: KS statistic {ks:.6f} exceeds threshold {threshold:.6f}",
              file=sys.stderr)
        return 1
    return 0


# ---------------------------------------------------------------------------
# lab
# ---------------------------------------------------------------------------


def _histogram_columns(hist: lab.FreePathHistogram) -> dict:
    return {
        "t": hist.centers,
        "p": hist.density,
        "p_stderr": hist.density_stderr,
        "T": hist.survival,
    }


def _field_factory(count: int, c: float, radius: float, clusters: int, seed: int):
    def factory(i: int) -> lab.ParticleField2D:
        sub = rng.substream_seed(seed, 7400, i)
        if c > 0.0:
            return lab.gen_positive_medium(count, c, radius, seed=sub,
                                           clusters=clusters)
        if c == 0.0:
            return lab.gen_uncorrelated_medium(count, radius, seed=sub)
        return lab.gen_negative_medium(count, c, radius, seed=sub)
    return factory


def cmd_lab(args) -> int:
    count = lab.particle_count_for_extinction(args.mean_extinction, args.radius)
    common = {
        "mean_extinction": args.mean_extinction, "radius": args.radius,
        "count": count, "realizations": args.realizations,
        "samples": args.samples, "t_max": args.t_max, "bins": args.bins,
        "theta": args.theta, "seed": args.seed,
    }
    if args.kind == "free-path":
        factory = _field_factory(count, args.c, args.radius, args.clusters,
                                 args.seed)
        hist = lab.estimate_free_paths(
            factory, args.origin, args.realizations, args.samples,
            t_max=args.t_max, bins=args.bins, seed=args.seed, theta=args.theta)
        params = dict(common, kind="free-path", c=args.c,
                      clusters=args.clusters, origin=args.origin)
    else:
        config = lab.BoundaryExperiment(
            c1=args.c, c2=args.c2, c12=args.c12,
            switch_distance=args.switch, count=count,
            radius=args.radius, clusters=args.clusters, theta=args.theta)
        hist = lab.run_boundary_experiment(
            config, args.realizations, args.samples,
            t_max=args.t_max, bins=args.bins, seed=args.seed,
            strategy=lab.SeedSharingStrategy(args.candidates))
        params = dict(common, kind="boundary", c=args.c, c2=args.c2,
                      c12=args.c12, switch=args.switch,
                      clusters=args.clusters, candidates=args.candidates)
    _emit_csv(args.out, _header("lab", params), _histogram_columns(hist))
    return 0


# ---------------------------------------------------------------------------
# groundtruth
# ---------------------------------------------------------------------------


def cmd_groundtruth(args) -> int:
    if args.volume is not None:
        volume = voxels.read_cvol(args.volume)
        params = {"volume": args.volume}
    else:
        volume = voxels.gen_correlated_volume(
            args.dims, args.mean, args.variance,
            axis_weights=tuple(args.axis_weights), seed=args.seed)
        params = {
            "dims": args.dims, "mean": args.mean, "variance": args.variance,
            "axis_weights": "/".join(_format_value(w) for w in args.axis_weights),
            "seed": args.seed,
        }
    if args.save_volume is not None:
        voxels.write_cvol(args.save_volume, volume)
        params["save_volume"] = args.save_volume
    report = voxels.fit_and_score(volume, resolution=args.resolution)
    params.update(
        fit_mean_concentration=report.mean_concentration,
        fit_variance=report.variance, fit_alpha=report.alpha,
        sigma=report.sigma,
        resolution="full" if args.resolution is None else args.resolution,
    )
    columns = {
        "axis": np.arange(3, dtype=float),
        "variance_along_axis": report.variance_by_axis,
        "rmse_log_T_gamma": report.rmse_gamma,
        "rmse_log_T_exponential": report.rmse_exponential,
    }
    _emit_csv(args.out, _header("groundtruth", params), columns)
    return 0


# ---------------------------------------------------------------------------
# render
# ---------------------------------------------------------------------------


def cmd_render(args) -> int:
    t0 = time.perf_counter()
    if Path(args.scene).exists():
        scene = load_scene(args.scene)
    elif args.scene in bundled_scene_names():
        scene = bundled_scene(args.scene)
    else:
        raise ValueError(
            f"no scene file or bundled scene named {args.scene!r}; bundled "
            "scenes: " + ", ".join(bundled_scene_names()))
    if args.resolution is not None:
        scene = scene.with_resolution(*args.resolution)
    t_parse = time.perf_counter()
    workers = args.workers
    if workers is None and os.environ.get("CORRTRANS_WORKERS"):
        workers = int(os.environ["CORRTRANS_WORKERS"])
    image, diag = render_with_diagnostics(scene, args.spp, seed=args.seed,
                                          workers=workers)
    t_render = time.perf_counter()
    params = {
        "scene": args.scene, "spp": args.spp, "seed": args.seed,
        "workers": "auto" if workers is None else workers,
        "resolution": f"{scene.camera.width}x{scene.camera.height}",
    }
    suffix = Path(args.out).suffix.lower()
    if suffix == ".ppm":
        write_ppm(args.out, image, comments=_header("render", params))
    elif suffix == ".pfm":
        # the PFM header has no comment syntax, so the run parameters
        # only appear in the timing summary for this format
        write_pfm(args.out, image)
    else:
        raise ValueError(f"unsupported image extension {suffix!r}, use .ppm or .pfm")
    t_write = time.perf_counter()
    print(f"scene: {args.scene} ({scene.camera.width}x{scene.camera.height}, "
          f"{args.spp} spp, seed {args.seed})")
    print(f"paths traced: {diag.paths}  non-finite samples: "
          f"{diag.nonfinite_samples}  reset violations: {diag.reset_violations}")
    print(f"timing: parse {t_parse - t0:.3f} s, render {t_render - t_parse:.3f} s, "
          f"write {t_write - t_render:.3f} s")
    return 0


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="corrtrans",
        description="Monte Carlo transport in correlated media: curves, "
                    "samplers, particle-field experiments, voxel ground "
                    "truth, and a small renderer.")
    parser.add_argument("--version", action="version",
                        version=f"corrtrans {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("transmit", help="evaluate T, p, mu(t) curves")
    p.add_argument("--model", required=True,
                   help="model spec, e.g. gamma:meanC=10,varC=40,sigma=1")
    p.add_argument("--compare", help="second model spec for side-by-side columns")
    p.add_argument("--t-max", type=float, default=10.0)
    p.add_argument("--steps", type=int, default=101)
    p.add_argument("--out", default="-", help="output CSV path, '-' for stdout")
    p.set_defaults(func=cmd_transmit)

    p = sub.add_parser("sample-test", help="KS and moment diagnostics for a sampler")
    p.add_argument("--sampler", required=True,
                   choices=["exponential", "gamma-proportional", "gamma-general",
                            "linear", "gamma-path"])
    p.add_argument("--model", required=True, help="model spec matching the sampler")
    p.add_argument("--n", type=int, default=10**5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threshold", type=float,
                   help="KS gate; default is the 99%% critical value for n")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sample_test)

    p = sub.add_parser("lab", help="free-path histograms from 2D particle fields")
    p.add_argument("--kind", choices=["free-path", "boundary"], default="free-path")
    p.add_argument("--c", type=float, default=0.0,
                   help="correlation of the (first) medium: negative repels, "
                        "positive clusters, 0 is Poissonian")
    p.add_argument("--c2", type=float, default=0.0, help="second medium (boundary)")
    p.add_argument("--c12", type=float, default=0.0,
                   help="cross-correlation across the interface (boundary)")
    p.add_argument("--switch", type=float, default=0.125,
                   help="distance at which the medium changes (boundary)")
    p.add_argument("--origin", choices=["source", "scattered"], default="source")
    p.add_argument("--mean-extinction", type=float, default=16.0)
    p.add_argument("--radius", type=float, default=lab.DEFAULT_RADIUS)
    p.add_argument("--clusters", type=int, default=10)
    p.add_argument("--candidates", type=int, default=64,
                   help="best-candidate count for anti-correlated interfaces")
    p.add_argument("--realizations", type=int, default=100)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--t-max", type=float, default=0.5)
    p.add_argument("--bins", type=int, default=128)
    p.add_argument("--theta", type=float, default=lab.DEFAULT_LAUNCH_ANGLE)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_lab)

    p = sub.add_parser("groundtruth", help="score extinction models on a voxel volume")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--volume", help="existing CVOL1 volume file")
    src.add_argument("--dims", type=int, default=128,
                     help="edge length of a generated cubic volume")
    p.add_argument("--mean", type=float, default=10.0)
    p.add_argument("--variance", type=float, default=10.0)
    p.add_argument("--axis-weights", type=float, nargs=3, default=[1.0, 1.0, 1.0])
    p.add_argument("--resolution", type=int,
                   help="beam rays per axis (default: one per voxel column)")
    p.add_argument("--save-volume", help="also write the generated volume here")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_groundtruth)

    p = sub.add_parser("render", help="path-trace a scene file or bundled scene")
    p.add_argument("scene", help="scene file path or bundled scene name")
    p.add_argument("--spp", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int,
                   help="thread count (default: CORRTRANS_WORKERS or all cores)")
    p.add_argument("--resolution", type=int, nargs=2, metavar=("W", "H"),
                   help="override the scene's camera resolution")
    p.add_argument("--out", required=True, help="output image, .ppm or .pfm")
    p.set_defaults(func=cmd_render)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SceneParseError as exc:
        print(f"error: scene {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
