"""Experiment harness: single runs, starting-ratio sweeps, hyperparameter
sensitivity scans.

Every subcommand validates its spec before building anything and writes
nothing on a validation failure.  Outputs per run: trace CSV, reconstruction
and ground-truth PGM, sinogram CSV, a one-row summary CSV, and the resolved
config INI.  Sweeps add a combined summary across runs.

Config files are INI with [problem], [controller] and [output] sections;
command-line flags override file values.  The ASPDHG_OUT environment variable
prefixes relative output directories.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields, replace
from itertools import product
from pathlib import Path

from .diag import reference_solution, summarize_run
from .io import write_pgm, write_sinogram_csv, write_summary_csv, write_trace_csv
from .problem import PRESETS, NoiseSpec, build_tv_ct, preset_geometry
from .solver import ASPDHG
from .validation import check_positive, check_positive_int

__all__ = ["RunSpec", "main", "cmd_run", "cmd_sweep", "cmd_sensitivity"]

OUT_ROOT_ENV = "ASPDHG_OUT"

_RULES = ("fixed", "a", "b")
_MODES = ("paper", "strict")
_NOISE_KINDS = ("none", "gaussian", "scaled_poisson")

# Which rules each tunable hyperparameter applies to.
_SENSITIVITY_RULES = {
    "alpha0": ("a", "b"),
    "eta": ("a", "b"),
    "delta": ("a",),
    "c": ("b",),
    "s_scale": ("a",),
}

_DEFAULT_SWEEP_RATIOS = (1e-3, 1e-5, 1e-7, 1e-9)
_SWEEP_REF_ITERS = 50000


@dataclass
class RunSpec:
    """One experiment: problem selection plus controller configuration.

    ``problem_seed`` fixes the data (noise draw) independently of ``seed``,
    which drives block sampling, so a sweep can vary solver seeds on one
    shared problem instance.  ``rho <= 0`` on the command line means exact
    dual residuals (stored as None).
    """

    preset: str = "sparse_view"
    rule: str = "fixed"
    mode: str = "paper"
    ratio0: float = 1e-5
    epochs: int = 10
    n_batches: int = 5
    seed: int = 0
    problem_seed: int = 0
    lam: float | None = None
    noise_kind: str | None = None
    noise_param: float | None = None
    image_side: int = 64
    n_angles: int | None = None
    n_detectors: int | None = None
    angle_deg: float | None = None
    out: str = "out"
    tag: str = "run"
    warm_start: bool = False
    alpha0: float | None = None
    eta: float | None = None
    delta: float = 1.5
    c: float = 0.999
    s_scale: float = 1.0
    rho: float | None = 10.0
    beta: float = 0.999
    ref_iters: int = 0


_SPEC_FIELDS = {f.name for f in fields(RunSpec)}

# Resolved-config layout; also the accepted sections when reading.
_SECTION_FIELDS = {
    "problem": ("preset", "image_side", "n_angles", "n_detectors", "angle_deg",
                "n_batches", "lam", "noise_kind", "noise_param", "problem_seed"),
    "controller": ("rule", "mode", "ratio0", "epochs", "seed", "alpha0", "eta",
                   "delta", "c", "s_scale", "rho", "beta"),
    "output": ("out", "tag", "warm_start", "ref_iters"),
}

_INT_FIELDS = {"epochs", "n_batches", "seed", "problem_seed", "image_side",
               "n_angles", "n_detectors", "ref_iters"}
_FLOAT_FIELDS = {"ratio0", "lam", "noise_param", "angle_deg", "alpha0", "eta",
                 "delta", "c", "s_scale", "rho", "beta"}


def _parse_config_value(name: str, raw: str):
    raw = raw.strip()
    if name == "warm_start":
        lowered = raw.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"config value {raw!r} for warm_start is not boolean")
    if raw.lower() == "none":
        return None
    if name in _INT_FIELDS:
        return int(raw)
    if name in _FLOAT_FIELDS:
        return float(raw)
    return raw


def load_config(path) -> dict:
    """Read an INI config into a {field: value} overlay for RunSpec."""
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ValueError(f"cannot read config file {path!r}")
    overlay = {}
    for section in parser.sections():
        if section not in _SECTION_FIELDS:
            raise ValueError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SECTION_FIELDS[section]:
                raise ValueError(f"unknown key {key!r} in section [{section}]")
            overlay[key] = _parse_config_value(key, raw)
    return overlay


def write_config(path, spec: RunSpec) -> None:
    """Write the fully resolved spec back out as an INI file."""
    parser = configparser.ConfigParser()
    for section, names in _SECTION_FIELDS.items():
        parser[section] = {}
        for name in names:
            value = getattr(spec, name)
            if value is None:
                continue
            parser[section][name] = repr(value) if isinstance(value, float) else str(value)
    with open(path, "w") as fh:
        parser.write(fh)


def validate_spec(spec: RunSpec) -> None:
    """Cheap scalar validation; runs before any problem is built."""
    if spec.preset != "custom" and spec.preset not in PRESETS:
        raise ValueError(
            f"unknown preset {spec.preset!r}; choose from "
            f"{sorted(PRESETS) + ['custom']}")
    if spec.rule not in _RULES:
        raise ValueError(f"rule must be one of {_RULES}, got {spec.rule!r}")
    if spec.mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}, got {spec.mode!r}")
    check_positive("ratio0", spec.ratio0)
    check_positive_int("epochs", spec.epochs)
    check_positive_int("n_batches", spec.n_batches)
    check_positive_int("image_side", spec.image_side)
    if spec.lam is not None:
        check_positive("lam", spec.lam)
    if spec.noise_kind is not None and spec.noise_kind not in _NOISE_KINDS:
        raise ValueError(
            f"noise_kind must be one of {_NOISE_KINDS}, got {spec.noise_kind!r}")
    if spec.noise_param is not None and spec.noise_param < 0:
        raise ValueError(f"noise_param must be >= 0, got {spec.noise_param!r}")
    if spec.n_angles is not None:
        check_positive_int("n_angles", spec.n_angles)
    if spec.n_detectors is not None:
        check_positive_int("n_detectors", spec.n_detectors)
    if spec.angle_deg is not None and not 0.0 < spec.angle_deg <= 360.0:
        raise ValueError(f"angle_deg must be in (0, 360], got {spec.angle_deg!r}")
    if spec.alpha0 is not None:
        check_positive("alpha0", spec.alpha0)
    if spec.eta is not None and not 0.0 < spec.eta <= 1.0:
        raise ValueError(f"eta must be in (0, 1], got {spec.eta!r}")
    if spec.delta <= 1.0:
        raise ValueError(f"delta must be > 1, got {spec.delta!r}")
    if not 0.0 < spec.c < 1.0:
        raise ValueError(f"c must be in (0, 1), got {spec.c!r}")
    check_positive("s_scale", spec.s_scale)
    if spec.rho is not None and spec.rho < 1.0:
        raise ValueError(f"rho must be >= 1 (or <= 0 for exact), got {spec.rho!r}")
    if not 0.0 < spec.beta < 1.0:
        raise ValueError(f"beta must be in (0, 1), got {spec.beta!r}")
    if spec.ref_iters < 0:
        raise ValueError(f"ref_iters must be >= 0, got {spec.ref_iters!r}")
    if not spec.tag or os.sep in spec.tag:
        raise ValueError(f"tag must be a plain name, got {spec.tag!r}")


def resolve_geometry(spec: RunSpec) -> dict:
    """Merge the preset's geometry/noise with any explicit overrides."""
    if spec.preset == "custom":
        geo = dict(image_side=64, n_angles=60, n_detectors=95, angle_deg=180.0,
                   noise_kind="none", noise_param=0.0)
    else:
        geo = preset_geometry(spec.preset)
    geo["image_side"] = spec.image_side
    for key in ("n_angles", "n_detectors", "angle_deg", "noise_kind",
                "noise_param"):
        value = getattr(spec, key)
        if value is not None:
            geo[key] = value
    return geo


def build_problem(spec: RunSpec):
    """Materialize the (problem, truth, sinogram) bundle for a spec."""
    geo = resolve_geometry(spec)
    noise = NoiseSpec(kind=geo["noise_kind"], param=geo["noise_param"])
    return build_tv_ct(
        image_side=geo["image_side"], n_angles=geo["n_angles"],
        n_detectors=geo["n_detectors"], lam=spec.lam,
        n_batches=spec.n_batches, noise=noise, seed=spec.problem_seed,
        angle_range=(0.0, math.radians(geo["angle_deg"])),
    )


def make_solver(spec: RunSpec) -> ASPDHG:
    return ASPDHG(rule=spec.rule, ratio0=spec.ratio0, epochs=spec.epochs,
                  beta=spec.beta, mode=spec.mode, alpha0=spec.alpha0,
                  eta=spec.eta, delta=spec.delta, c=spec.c,
                  s_scale=spec.s_scale, rho=spec.rho, seed=spec.seed,
                  warm_start=spec.warm_start)


def resolve_out(spec: RunSpec) -> Path:
    return Path(os.environ.get(OUT_ROOT_ENV, ".")) / spec.out


def execute_run(spec: RunSpec, bundle=None, f_star: float | None = None) -> dict:
    """Fit one run and write its outputs; returns the summary row.

    The solver's own feasibility validation runs before any iteration and
    before any file is created.
    """
    if bundle is None:
        bundle = build_problem(spec)
    problem, truth, sino = bundle
    geo = resolve_geometry(spec)
    solver = make_solver(spec)
    solver.fit(problem)

    outdir = resolve_out(spec)
    outdir.mkdir(parents=True, exist_ok=True)
    side = geo["image_side"]
    write_trace_csv(outdir / f"{spec.tag}_trace.csv", solver.trace_)
    write_pgm(outdir / f"{spec.tag}_recon.pgm", solver.x_.reshape(side, side))
    write_pgm(outdir / "truth.pgm", truth.pixels.reshape(side, side))
    write_sinogram_csv(outdir / "sinogram.csv", sino, geo["n_angles"])
    summary = {
        "run": spec.tag,
        "rule": spec.rule,
        "ratio0": spec.ratio0,
        "seed": spec.seed,
        "start": "bp-warm-start" if spec.warm_start else "zero",
        "status": "ok",
        "error": "",
        **summarize_run(solver.trace_, f_star=f_star),
    }
    write_summary_csv(outdir / f"{spec.tag}_summary.csv", [summary])
    write_config(outdir / f"{spec.tag}_config.ini", spec)
    return summary


def _blank_metrics(with_ref: bool) -> dict:
    out = {"epochs": 0, "final_objective": float("nan"),
           "final_ratio": float("nan"), "stabilization": float("nan")}
    if with_ref:
        out["final_suboptimality"] = float("nan")
        out["epochs_to_threshold"] = -1
    return out


def _run_child(args) -> dict:
    spec, f_star = args
    try:
        return execute_run(spec, None, f_star)
    except Exception as exc:  # failed runs become summary rows, not crashes
        return {"run": spec.tag, "rule": spec.rule, "ratio0": spec.ratio0,
                "seed": spec.seed,
                "start": "bp-warm-start" if spec.warm_start else "zero",
                "status": "failed", "error": str(exc)[:200],
                **_blank_metrics(f_star is not None)}


def _run_many(specs: list[RunSpec], f_star, jobs) -> list[dict]:
    if jobs is None:
        jobs = min(len(specs), os.cpu_count() or 1)
    if jobs <= 1 or len(specs) == 1:
        return [_run_child((spec, f_star)) for spec in specs]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_child, [(spec, f_star) for spec in specs]))


def _shared_reference(spec: RunSpec) -> float | None:
    if spec.ref_iters <= 0:
        return None
    problem, _, _ = build_problem(spec)
    _, f_star = reference_solution(problem, spec.ref_iters)
    return f_star


def cmd_run(spec: RunSpec) -> int:
    try:
        validate_spec(spec)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        bundle = build_problem(spec)
        f_star = None
        if spec.ref_iters > 0:
            _, f_star = reference_solution(bundle[0], spec.ref_iters)
        summary = execute_run(spec, bundle, f_star)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"{spec.tag}: objective {summary['final_objective']:.8g}, "
          f"final ratio {summary['final_ratio']:.3g}")
    return 0


def cmd_sweep(base: RunSpec, ratios, rules, jobs=None) -> int:
    if ratios is None:
        ratios = list(_DEFAULT_SWEEP_RATIOS)
    if rules is None:
        rules = ["fixed", "a", "b"]
    if not ratios:
        print("warning: empty ratio list, nothing to do", file=sys.stderr)
        return 0
    try:
        validate_spec(base)
        for rule in rules:
            if rule not in _RULES:
                raise ValueError(f"rule must be one of {_RULES}, got {rule!r}")
        specs = []
        for idx, (ratio, rule) in enumerate(product(ratios, rules)):
            tag = f"{rule}_ratio{ratio:g}"
            child = replace(base, ratio0=float(ratio), rule=rule,
                            seed=base.seed + idx, tag=tag,
                            out=os.path.join(base.out, tag))
            validate_spec(child)
            specs.append(child)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    f_star = _shared_reference(base)
    rows = _run_many(specs, f_star, jobs)
    outdir = resolve_out(base)
    outdir.mkdir(parents=True, exist_ok=True)
    write_summary_csv(outdir / "summary.csv", rows)
    n_failed = sum(row["status"] != "ok" for row in rows)
    for row in rows:
        state = row["status"] if row["status"] != "ok" else \
            f"objective {row['final_objective']:.8g}"
        print(f"{row['run']} (seed {row['seed']}): {state}")
    if n_failed:
        print(f"warning: {n_failed}/{len(rows)} runs failed", file=sys.stderr)
    return 1 if n_failed == len(rows) else 0


def cmd_sensitivity(base: RunSpec, param: str, values, jobs=None) -> int:
    if param not in _SENSITIVITY_RULES:
        print(f"error: unknown parameter {param!r}; choose from "
              f"{sorted(_SENSITIVITY_RULES)}", file=sys.stderr)
        return 2
    if base.rule not in _SENSITIVITY_RULES[param]:
        print(f"error: parameter {param!r} does not apply to rule "
              f"{base.rule!r} (applies to {_SENSITIVITY_RULES[param]})",
              file=sys.stderr)
        return 2
    if not values:
        print("warning: empty value list, nothing to do", file=sys.stderr)
        return 0
    try:
        validate_spec(base)
        specs = []
        for value in values:
            tag = f"{param}{value:g}"
            child = replace(base, tag=tag, out=os.path.join(base.out, tag),
                            **{param: float(value)})
            validate_spec(child)
            specs.append(child)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    f_star = _shared_reference(base)
    rows = _run_many(specs, f_star, jobs)
    outdir = resolve_out(base)
    outdir.mkdir(parents=True, exist_ok=True)
    write_summary_csv(outdir / "summary.csv", rows)
    n_failed = sum(row["status"] != "ok" for row in rows)
    if n_failed:
        print(f"warning: {n_failed}/{len(rows)} runs failed", file=sys.stderr)
    return 1 if n_failed == len(rows) else 0


def _add_spec_flags(parser: argparse.ArgumentParser) -> None:
    add = parser.add_argument
    add("--config", default=None, help="INI config file; flags override it")
    add("--preset", default=None,
        help="problem preset: sparse_view, low_dose, limited_angle, custom")
    add("--rule", default=None, help="step-size rule: fixed, a, b")
    add("--mode", default=None, help="controller mode: paper, strict")
    add("--ratio0", type=float, default=None, help="initial tau/sigma ratio")
    add("--epochs", type=int, default=None)
    add("--n-batches", dest="n_batches", type=int, default=None)
    add("--seed", type=int, default=None, help="sampling seed")
    add("--problem-seed", dest="problem_seed", type=int, default=None,
        help="noise seed fixing the data")
    add("--lam", type=float, default=None, help="gradient-term weight")
    add("--noise-kind", dest="noise_kind", default=None)
    add("--noise-param", dest="noise_param", type=float, default=None)
    add("--image-side", dest="image_side", type=int, default=None)
    add("--n-angles", dest="n_angles", type=int, default=None)
    add("--n-detectors", dest="n_detectors", type=int, default=None)
    add("--angle-deg", dest="angle_deg", type=float, default=None,
        help="angular span in degrees")
    add("--out", default=None, help="output directory (under $ASPDHG_OUT)")
    add("--tag", default=None, help="output filename prefix")
    add("--warm-start", dest="warm_start", action="store_true", default=None,
        help="start from the rescaled backprojection")
    add("--alpha0", type=float, default=None)
    add("--eta", type=float, default=None)
    add("--delta", type=float, default=None)
    add("--c", type=float, default=None)
    add("--s-scale", dest="s_scale", type=float, default=None)
    add("--rho", type=float, default=None,
        help="dual-residual subsampling factor; <= 0 for exact")
    add("--beta", type=float, default=None)
    add("--ref-iters", dest="ref_iters", type=int, default=None,
        help="iterations of the deterministic reference solve "
             "(0 disables; sweeps default to 50000)")


def assemble_spec(args) -> tuple[RunSpec, set]:
    """Overlay config-file values then CLI flags onto the defaults."""
    overlay = {}
    if getattr(args, "config", None):
        overlay.update(load_config(args.config))
    for name in _SPEC_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            overlay[name] = value
    if overlay.get("rho") is not None and overlay["rho"] <= 0:
        overlay["rho"] = None
    provided = set(overlay)
    unknown = provided - _SPEC_FIELDS
    if unknown:
        raise ValueError(f"unknown spec fields {sorted(unknown)}")
    return RunSpec(**overlay), provided


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aspdhg",
        description="Stochastic primal-dual solver harness for TV-regularized "
                    "tomography benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="single solve")
    _add_spec_flags(p_run)

    p_sweep = sub.add_parser("sweep", help="cross product of ratios and rules")
    _add_spec_flags(p_sweep)
    p_sweep.add_argument("--ratios", type=float, nargs="*", default=None,
                         help="starting ratios (default 1e-3 1e-5 1e-7 1e-9)")
    p_sweep.add_argument("--rules", nargs="*", default=None,
                         help="rules to compare (default fixed a b)")
    p_sweep.add_argument("--jobs", type=int, default=None)

    p_sens = sub.add_parser("sensitivity", help="scan one hyperparameter")
    _add_spec_flags(p_sens)
    p_sens.add_argument("--param", required=True,
                        choices=sorted(_SENSITIVITY_RULES))
    p_sens.add_argument("--values", type=float, nargs="*", default=[])
    p_sens.add_argument("--jobs", type=int, default=None)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec, provided = assemble_spec(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.command == "run":
        return cmd_run(spec)
    if "ref_iters" not in provided:
        spec = replace(spec, ref_iters=_SWEEP_REF_ITERS)
    if args.command == "sweep":
        return cmd_sweep(spec, args.ratios, args.rules, args.jobs)
    return cmd_sensitivity(spec, args.param, args.values, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
