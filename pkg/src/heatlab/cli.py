"""Configuration-driven experiment runner.

Each run executes one command, writes its data products as CSV (plus a
JSON report where a single table is not enough), and drops a manifest
recording the normalised parameters, config hash, seed and output hashes.
Data files are byte-identical across reruns of the same config at any
worker count; only the manifest's wall time changes.
"""

import argparse
import hashlib
import io
import json
import math
import os
import sys
import time

import numpy as np

from . import __version__
from . import brownian as _brownian
from . import levy as _levy
from . import moments as _moments
from . import spde as _spde
from .config import (
    COMMANDS,
    SCHEMAS,
    ExperimentConfig,
    config_to_text,
    normalize,
    parse_config_text,
)
from .errors import HeatLabError
from .kernels import GridSpec, stable_kernel, truncation_mass
from .martingale import exp_martingale, martingale_series
from .seeds import generator

ENV_OUTPUT_DIR = "HEATLAB_OUTPUT_DIR"

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BLOWUP = 3


def _g(v) -> str:
    return format(float(v), ".17g")


def _atomic_write(path: str, data: bytes) -> None:
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    tmp = os.path.join(d, f".tmp-{os.path.basename(path)}-{os.getpid()}")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def _model_from(params) -> _spde.ModelSpec:
    return _spde.ModelSpec(
        alpha=params["alpha"],
        lip=params["lip"],
        intercept=params["intercept"],
        l_sigma=params["l_sigma"],
        noise_mode=params["noise_mode"],
        lambda0=params["lambda0"],
        c=params["c"],
        hit_level=params["hit_level"],
        u0=params["u0"],
        shared_path=params["shared_path"],
    )


def _grid_from(params) -> GridSpec:
    return GridSpec(half_width=params["half_width"], n_points=params["n_points"])


def _run_upsilon(params, out, log):
    exponent = _levy.stable_exponent(params["alpha"])
    val = _levy.upsilon(exponent, params["beta"])
    log(f"{val:.12g}")
    csv = io.StringIO()
    csv.write("alpha,beta,upsilon\n")
    csv.write(f"{_g(params['alpha'])},{_g(params['beta'])},{_g(val)}\n")
    out["upsilon.csv"] = csv.getvalue().encode()
    return EXIT_OK


def _run_kernel(params, out, log):
    grid = _grid_from(params)
    vals = stable_kernel(params["alpha"], params["t"], grid)
    mass = float(vals.sum() * grid.dx)
    trunc = truncation_mass(params["alpha"], params["t"], grid.half_width)
    csv = io.StringIO()
    csv.write("x,value\n")
    for x, v in zip(grid.x, vals):
        csv.write(f"{_g(x)},{_g(v)}\n")
    out["kernel.csv"] = csv.getvalue().encode()
    log(f"grid mass {mass:.9f}, estimated truncation mass {trunc:.3g}")
    return EXIT_OK


def _run_martingale(params, out, log):
    lam, b, t = params["lam"], params["b"], params["t"]
    closed = exp_martingale(lam, b, t)
    series = martingale_series(lam, b, t, params["terms"])
    rows = [
        ("closed_form", closed),
        ("series", series),
        ("abs_error", abs(series - closed)),
    ]
    if params["paths"]:
        endpoints = generator(params["master_seed"]).standard_normal(params["paths"])
        samples = exp_martingale(lam, endpoints * math.sqrt(t), t)
        rows.append(("mc_mean", float(samples.mean())))
        rows.append(("mc_stderr", float(samples.std(ddof=1) / math.sqrt(params["paths"]))))
    csv = io.StringIO()
    csv.write("quantity,value\n")
    for name, v in rows:
        csv.write(f"{name},{_g(v)}\n")
    out["martingale.csv"] = csv.getvalue().encode()
    log(f"series - closed form = {series - closed:.3e} with {params['terms']} terms")
    return EXIT_OK


def _run_hitting(params, out, log):
    report = _brownian.hitting_laplace_check(
        a=params["a"],
        lam=params["lam"],
        n_paths=params["paths"],
        dt=params["dt"],
        seed=params["master_seed"],
        horizon=params["horizon"],
        bridge=params["bridge"],
    )
    csv = io.StringIO()
    csv.write("a,lambda,paths,dt,horizon,bridge,empirical,exact,stderr,bracket_width,n_hit\n")
    csv.write(
        ",".join(
            [
                _g(report.a),
                _g(report.lam),
                str(report.n_paths),
                _g(report.dt),
                _g(report.horizon),
                str(int(report.bridge)),
                _g(report.empirical),
                _g(report.exact),
                _g(report.stderr),
                _g(report.bracket_width),
                str(report.n_hit),
            ]
        )
        + "\n"
    )
    out["hitting.csv"] = csv.getvalue().encode()
    log(
        f"empirical {report.empirical:.5f} vs exact {report.exact:.5f} "
        f"(3se = {3 * report.stderr:.2e}, bracket {report.bracket_width:.2e})"
    )
    return EXIT_OK


def _run_simulate(params, out, log):
    field = _spde.simulate(
        _model_from(params),
        _grid_from(params),
        params["dt"],
        params["horizon"],
        params["master_seed"],
        save_every=params["save_every"],
    )
    buf = io.StringIO()
    _spde.solution_to_csv(field, buf)
    out["field.csv"] = buf.getvalue().encode()
    if field.blown_up:
        log(f"blow-up flagged at step {field.blowup_step}")
        return EXIT_BLOWUP
    log(f"final sup |u| = {np.abs(field.values[-1]).max():.6g}")
    return EXIT_OK


def _run_moments(params, out, log):
    disc = _moments.Discretization(
        grid=_grid_from(params),
        dt=params["dt"],
        horizon=params["horizon"],
        n_save=params["n_save"],
    )
    series = _moments.estimate_moments(
        _model_from(params),
        disc,
        params["p_list"],
        params["n_replicas"],
        params["master_seed"],
        workers=params["workers"],
    )
    code = EXIT_OK
    for p, s in sorted(series.items()):
        buf = io.StringIO()
        s.to_csv(buf)
        out[f"moments_p{p}.csv"] = buf.getvalue().encode()
        if s.truncated_at is not None:
            log(f"p={p}: all replicas blown up by t = {s.truncated_at:g}; series truncated")
            code = EXIT_BLOWUP
            continue
        try:
            fit = _moments.fit_lyapunov(s, params["fit_window"])
            out[f"fit_p{p}.json"] = json.dumps(
                {
                    "p": p,
                    "slope": fit.slope,
                    "slope_stderr": fit.slope_stderr,
                    "intercept": fit.intercept,
                    "window": list(fit.window),
                    "r_squared": fit.r_squared,
                    "stability_warning": fit.stability_warning,
                },
                sort_keys=True,
                indent=2,
            ).encode()
            log(
                f"p={p}: gamma_hat = {fit.slope:.6g} +- {fit.slope_stderr:.2g} "
                f"(r2 = {fit.r_squared:.4f}, blowups = {s.flagged_blowups})"
            )
        except HeatLabError as exc:
            log(f"p={p}: estimates written; fit skipped ({exc})")
    return code


def _run_bounds(params, out, log):
    bp = _levy.BoundParams(
        p=params["p"],
        lip_sigma=params["lip_sigma"],
        l_sigma=params["l_sigma"],
        z_p=params["z_p"],
        c=params["c"],
        lambda0=params["lambda0"],
        t0=params["t0"],
        a=params["a"],
    )
    exponent = _levy.stable_exponent(params["alpha"])
    upper = _levy.upper_lyapunov_bound(exponent, bp)
    lower = None
    if bp.l_sigma > 0:
        lower = _levy.lower_lyapunov_bound(exponent, bp)
    rate = _levy.stable_growth_rate(params["alpha"], bp)
    payload = {
        "alpha": params["alpha"],
        "bound_params": {
            "p": bp.p,
            "lip_sigma": bp.lip_sigma,
            "l_sigma": bp.l_sigma,
            "z_p": bp.z_p,
            "c": bp.c,
            "lambda0": bp.lambda0,
            "t0": bp.t0,
            "a": bp.a,
        },
        "upper_bound": upper,
        "lower_bound": lower,
        "stable_rate": rate,
        "gamma_hat": params["gamma_hat"],
        "gamma_stderr": params["gamma_stderr"],
    }
    out["bounds.json"] = json.dumps(payload, sort_keys=True, indent=2).encode()
    low = "n/a" if lower is None else f"{lower:.6g}"
    log(f"upper {upper:.6g}, lower {low}, stable-rate coefficient {rate:.6g}")
    return EXIT_OK


def _run_renewal(params, out, log):
    t_grid = np.linspace(0.0, params["t_max"], params["n_points"])
    report = _moments.renewal_bound_check(params["c1"], params["kappa"], params["rho"], t_grid)
    csv = io.StringIO()
    csv.write("t,f,bound\n")
    for t, f, b in zip(report.t_grid, report.solution, report.bound):
        csv.write(f"{_g(t)},{_g(f)},{_g(b)}\n")
    out["renewal.csv"] = csv.getvalue().encode()
    out["renewal.json"] = json.dumps(
        {
            "rho": report.rho,
            "kappa": report.kappa,
            "c1": report.c1,
            "c2": report.c2,
            "c3": report.c3,
            "rate": report.rate,
            "residual": report.residual,
        },
        sort_keys=True,
        indent=2,
    ).encode()
    log(f"c2 = {report.c2:.9g} at rate {report.rate:.6g}; residual {report.residual:.2e}")
    return EXIT_OK


_RUNNERS = {
    "upsilon": _run_upsilon,
    "kernel": _run_kernel,
    "martingale": _run_martingale,
    "hitting": _run_hitting,
    "simulate": _run_simulate,
    "moments": _run_moments,
    "bounds": _run_bounds,
    "renewal": _run_renewal,
}


def run(cfg: ExperimentConfig, output_dir: str | None = None, echo=print) -> int:
    """Execute a validated config; write data products and a manifest."""
    t0 = time.monotonic()
    outputs: dict[str, bytes] = {}
    lines: list[str] = []

    def log(msg):
        lines.append(msg)
        echo(msg)

    try:
        code = _RUNNERS[cfg.command](cfg.parameters, outputs, log)
    except HeatLabError as exc:
        echo(f"error: {exc}", file=sys.stderr) if echo is print else echo(f"error: {exc}")
        return EXIT_VALIDATION
    target = (
        output_dir
        or cfg.parameters.get("output_dir")
        or os.environ.get(ENV_OUTPUT_DIR)
        or "heatlab-out"
    )
    for name, data in outputs.items():
        _atomic_write(os.path.join(target, name), data)
    manifest = {
        "schema_version": cfg.schema_version,
        "command": cfg.command,
        "parameters": {k: v for k, v in sorted(cfg.parameters.items())},
        "config_sha256": hashlib.sha256(config_to_text(cfg).encode()).hexdigest(),
        "package_version": __version__,
        "master_seed": cfg.parameters.get("master_seed"),
        "wall_time_s": round(time.monotonic() - t0, 6),
        "exit_status": code,
        "outputs": {
            name: hashlib.sha256(data).hexdigest() for name, data in sorted(outputs.items())
        },
        "log": lines,
    }
    _atomic_write(
        os.path.join(target, f"{cfg.command}_manifest.json"),
        json.dumps(manifest, sort_keys=True, indent=2).encode(),
    )
    return code


def load_manifest(path: str) -> ExperimentConfig:
    """Rebuild the runnable config from a manifest (reproduction entry point)."""
    with open(path) as fh:
        data = json.load(fh)
    params = {
        k: tuple(v) if isinstance(v, list) else v for k, v in data["parameters"].items()
    }
    cfg, errors = normalize(data["command"], params)
    if errors:
        raise HeatLabError("manifest does not validate: " + "; ".join(errors))
    return cfg


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heatlab",
        description="Stochastic heat equation laboratory: kernels, martingale checks, "
        "moment growth estimation and bound comparison.",
    )
    parser.add_argument("--version", action="version", version=f"heatlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        p = sub.add_parser(command, help=f"run the {command} experiment")
        for key in SCHEMAS[command]:
            p.add_argument(f"--{key.name.replace('_', '-')}", dest=key.name, default=None)
        p.add_argument("--output-dir", dest="output_dir", default=None)
    rerun = sub.add_parser("run", help="run an experiment from a config file or manifest")
    rerun.add_argument("--config", help="path to a [command] config file")
    rerun.add_argument("--manifest", help="path to a manifest to reproduce")
    rerun.add_argument("--output-dir", dest="output_dir", default=None)
    rerun.add_argument("--workers", dest="workers", default=None)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        if bool(args.config) == bool(args.manifest):
            print("run needs exactly one of --config / --manifest", file=sys.stderr)
            return EXIT_VALIDATION
        if args.config:
            with open(args.config) as fh:
                cfg, errors = parse_config_text(fh.read())
            if errors:
                for e in errors:
                    print(f"{args.config}: {e}", file=sys.stderr)
                return EXIT_VALIDATION
        else:
            try:
                cfg = load_manifest(args.manifest)
            except (OSError, ValueError, HeatLabError) as exc:
                print(f"{args.manifest}: {exc}", file=sys.stderr)
                return EXIT_VALIDATION
        if args.workers is not None and "workers" in cfg.parameters:
            cfg.parameters["workers"] = int(args.workers)
        return run(cfg, output_dir=args.output_dir)
    raw = {
        k.name: getattr(args, k.name)
        for k in SCHEMAS[args.command]
        if getattr(args, k.name) is not None
    }
    cfg, errors = normalize(args.command, raw)
    if errors:
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    return run(cfg, output_dir=args.output_dir)


if __name__ == "__main__":
    sys.exit(main())
