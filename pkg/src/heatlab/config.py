"""Experiment configuration: flat key-value files with one section per run.

A config file looks like

    [moments]
    alpha = 2.0
    lip = 2.0
    p_list = 2,4
    n_replicas = 2000
    master_seed = 12345
    ...

Validation returns the complete error list, not just the first problem,
and fills defaults so the manifest can echo the normalised parameters.
"""

import configparser
import io
from dataclasses import dataclass, field

from .errors import ConfigurationError
from .spde import NOISE_MODES

SCHEMA_VERSION = 1

COMMANDS = (
    "upsilon",
    "kernel",
    "martingale",
    "hitting",
    "simulate",
    "moments",
    "bounds",
    "renewal",
)

STOCHASTIC_COMMANDS = ("hitting", "simulate", "moments")


class ValidationFailure(ConfigurationError):
    """Carries every validation error found in a config."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


def _positive(name):
    return lambda v: None if v > 0 else f"{name} must be positive, got {v!r}"


def _nonnegative(name):
    return lambda v: None if v >= 0 else f"{name} must be nonnegative, got {v!r}"


def _alpha_range(v):
    return None if 1.0 < v <= 2.0 else f"alpha must lie in (1, 2], got {v!r}"


def _power_of_two(v):
    ok = v >= 8 and (v & (v - 1)) == 0
    return None if ok else f"n_points must be a power of two >= 8, got {v!r}"


def _even_p(v):
    return None if v >= 2 and v % 2 == 0 else f"p must be an even integer >= 2, got {v!r}"


def _noise_mode(v):
    return None if v in NOISE_MODES else f"noise_mode must be one of {NOISE_MODES}, got {v!r}"


@dataclass(frozen=True)
class Key:
    name: str
    kind: str  # int | float | bool | str | int_list | float_pair
    required: bool = False
    default: object = None
    check: object = None


_MODEL_KEYS = [
    Key("alpha", "float", default=2.0, check=_alpha_range),
    Key("lip", "float", default=0.0, check=_nonnegative("lip")),
    Key("intercept", "float", default=0.0),
    Key("l_sigma", "float", default=0.0, check=_nonnegative("l_sigma")),
    Key("noise_mode", "str", default="white", check=_noise_mode),
    Key("lambda0", "float", default=0.0),
    Key("c", "float", default=1.0, check=_positive("c")),
    Key("hit_level", "float", default=0.0),
    Key("u0", "float", default=1.0),
    Key("shared_path", "bool", default=True),
]

_GRID_KEYS = [
    Key("half_width", "float", required=True, check=_positive("half_width")),
    Key("n_points", "int", required=True, check=_power_of_two),
]

_COMMON_KEYS = [
    Key("schema_version", "int", default=SCHEMA_VERSION),
    Key("output_dir", "str", default=None),
]

SCHEMAS: dict[str, list[Key]] = {
    "upsilon": [
        Key("alpha", "float", required=True, check=_alpha_range),
        Key("beta", "float", required=True, check=_positive("beta")),
    ],
    "kernel": [
        Key("alpha", "float", required=True, check=_alpha_range),
        Key("t", "float", required=True, check=_positive("t")),
        *_GRID_KEYS,
    ],
    "martingale": [
        Key("lam", "float", required=True),
        Key("b", "float", default=0.0),
        Key("t", "float", default=1.0, check=_nonnegative("t")),
        Key("terms", "int", default=30, check=_positive("terms")),
        Key("paths", "int", default=0, check=_nonnegative("paths")),
        Key("master_seed", "int", default=None),
    ],
    "hitting": [
        Key("a", "float", required=True),
        Key("lam", "float", required=True, check=_positive("lam")),
        Key("paths", "int", required=True, check=_positive("paths")),
        Key("dt", "float", required=True, check=_positive("dt")),
        Key("horizon", "float", default=None),
        Key("bridge", "bool", default=True),
        Key("master_seed", "int", required=True),
        Key("workers", "int", default=1, check=_positive("workers")),
    ],
    "simulate": [
        *_MODEL_KEYS,
        *_GRID_KEYS,
        Key("dt", "float", required=True, check=_positive("dt")),
        Key("horizon", "float", required=True, check=_positive("horizon")),
        Key("save_every", "int", default=1, check=_positive("save_every")),
        Key("master_seed", "int", required=True),
    ],
    "moments": [
        *_MODEL_KEYS,
        *_GRID_KEYS,
        Key("dt", "float", required=True, check=_positive("dt")),
        Key("horizon", "float", required=True, check=_positive("horizon")),
        Key("n_save", "int", default=101, check=_positive("n_save")),
        Key("p_list", "int_list", default=(2,)),
        Key("n_replicas", "int", required=True, check=_positive("n_replicas")),
        Key("master_seed", "int", required=True),
        Key("workers", "int", default=1, check=_positive("workers")),
        Key("fit_window", "float_pair", default=None),
    ],
    "bounds": [
        Key("alpha", "float", required=True, check=_alpha_range),
        Key("p", "int", required=True, check=_even_p),
        Key("lip_sigma", "float", default=1.0, check=_nonnegative("lip_sigma")),
        Key("l_sigma", "float", default=0.0, check=_nonnegative("l_sigma")),
        Key("z_p", "float", default=None),
        Key("c", "float", default=1.0, check=_positive("c")),
        Key("lambda0", "float", default=0.0),
        Key("t0", "float", default=0.0, check=_nonnegative("t0")),
        Key("a", "float", default=0.0),
        Key("gamma_hat", "float", default=None),
        Key("gamma_stderr", "float", default=None),
    ],
    "renewal": [
        Key("rho", "float", required=True, check=_positive("rho")),
        Key("kappa", "float", required=True, check=_nonnegative("kappa")),
        Key("c1", "float", default=1.0, check=_positive("c1")),
        Key("t_max", "float", default=10.0, check=_positive("t_max")),
        Key("n_points", "int", default=2001, check=_positive("n_points")),
    ],
}


@dataclass(frozen=True)
class ExperimentConfig:
    command: str
    parameters: dict
    schema_version: int = SCHEMA_VERSION


def _parse_value(key: Key, raw: str, errors: list):
    raw = raw.strip()
    try:
        if key.kind == "int":
            return int(raw)
        if key.kind == "float":
            return float(raw)
        if key.kind == "bool":
            if raw.lower() in ("true", "yes", "1", "on"):
                return True
            if raw.lower() in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if key.kind == "int_list":
            return tuple(int(part) for part in raw.split(",") if part.strip())
        if key.kind == "float_pair":
            parts = [float(part) for part in raw.split(",")]
            if len(parts) != 2:
                raise ValueError(raw)
            return tuple(parts)
        return raw
    except ValueError:
        errors.append(f"key '{key.name}': cannot parse {raw!r} as {key.kind}")
        return None


def _cross_checks(command: str, params: dict, errors: list):
    if command in STOCHASTIC_COMMANDS and params.get("master_seed") is None:
        errors.append(f"command '{command}' requires key 'master_seed'")
    if command == "martingale" and params.get("paths", 0) > 0 and params.get("master_seed") is None:
        errors.append("martingale with paths > 0 requires key 'master_seed'")
    if command == "moments":
        for p in params.get("p_list") or ():
            if p < 2 or p % 2:
                errors.append(f"p_list entries must be even integers >= 2, got {p}")
    if command in ("simulate", "moments"):
        if params.get("l_sigma", 0.0) > 0 and (
            params.get("intercept", 0.0) != 0.0 or params.get("l_sigma") > params.get("lip", 0.0)
        ):
            errors.append("l_sigma > 0 requires intercept = 0 and l_sigma <= lip")
        dt, horizon = params.get("dt"), params.get("horizon")
        if dt and horizon and dt > horizon:
            errors.append(f"dt = {dt:g} exceeds horizon = {horizon:g}")


def normalize(command: str, raw_params: dict) -> tuple[ExperimentConfig | None, list]:
    """Validate raw (string or typed) parameters against the command schema."""
    errors: list[str] = []
    if command not in SCHEMAS:
        return None, [f"unknown command {command!r}; expected one of {COMMANDS}"]
    schema = {k.name: k for k in SCHEMAS[command] + _COMMON_KEYS}
    params: dict = {}
    for name, raw in raw_params.items():
        if name not in schema:
            errors.append(f"unknown key '{name}' for command '{command}'")
            continue
        key = schema[name]
        val = _parse_value(key, raw, errors) if isinstance(raw, str) else raw
        if val is not None:
            params[name] = val
    for key in schema.values():
        if key.name in params:
            if key.check is not None:
                msg = key.check(params[key.name])
                if msg:
                    errors.append(f"key '{key.name}': {msg}")
        elif key.required:
            errors.append(f"command '{command}' is missing required key '{key.name}'")
        elif key.default is not None or key.name in ("output_dir",):
            params[key.name] = key.default
    if params.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        errors.append(
            f"unsupported schema_version {params.get('schema_version')!r}; this build speaks {SCHEMA_VERSION}"
        )
    _cross_checks(command, params, errors)
    if errors:
        return None, errors
    version = params.pop("schema_version", SCHEMA_VERSION)
    return ExperimentConfig(command=command, parameters=params, schema_version=version), []


def parse_config_text(text: str) -> tuple[ExperimentConfig | None, list]:
    """Parse and validate a config file; returns (config, errors)."""
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        return None, [f"parse error: {exc}"]
    sections = parser.sections()
    if len(sections) != 1:
        return None, [f"expected exactly one [command] section, found {sections!r}"]
    command = sections[0]
    raw = dict(parser.items(command))
    return normalize(command, raw)


def validate(text: str) -> ExperimentConfig:
    """parse_config_text that raises ValidationFailure with the full list."""
    cfg, errors = parse_config_text(text)
    if errors:
        raise ValidationFailure(errors)
    return cfg


def config_to_text(cfg: ExperimentConfig) -> str:
    """Render a normalised config back to file form (manifest echo)."""
    out = io.StringIO()
    out.write(f"[{cfg.command}]\n")
    out.write(f"schema_version = {cfg.schema_version}\n")
    for name in sorted(cfg.parameters):
        val = cfg.parameters[name]
        if val is None:
            continue
        if isinstance(val, (tuple, list)):
            val = ",".join(str(v) for v in val)
        out.write(f"{name} = {val}\n")
    return out.getvalue()
