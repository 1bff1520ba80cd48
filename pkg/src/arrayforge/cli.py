"""Command-line front end: design, evaluate-scf, evaluate-crb, sweep.

Option precedence is flags over config-file values over built-in defaults
(the seed additionally falls back to the ARRAYFORGE_SEED environment
variable before the default).  Every resolved value, defaults included,
is echoed into the provenance block of the artifacts it produced.

Exit status: 0 on success, 2 for validation failures (unknown flags,
out-of-range values, missing files), 1 for runtime failures.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

from ._version import __version__
from .array_model import ArrayGeometry, load_geometry, make_suca
from .fileio import atomic_write_csv, atomic_write_json, load_json
from .harness import (
    DEFAULT_SEPARATION,
    SWEEP_METHODS,
    SweepSpec,
    channels_for_rate,
    run_crb_experiment,
    run_scf_sweep,
    write_crb_report,
    write_sweep_report,
)
from .scf_objective import CombiningMatrix, ScfGrid, grid_scf_error
from .sgd_designer import DesignTrace, OptimizerConfig, design

__all__ = ["CliConfig", "parse_and_validate", "run", "main", "console_main"]

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2
CONFIG_SCHEMA_VERSION = 1
SEED_ENV_VAR = "ARRAYFORGE_SEED"


class CliError(Exception):
    """Base class for validation failures; mapped to exit status 2."""


class OptionValueError(CliError):
    """A flag or config value is out of range or malformed."""


class MissingInputError(CliError):
    """A referenced input file does not exist."""


class ConfigFileError(CliError):
    """The config file is malformed, unversioned, or has unknown keys."""


DEFAULTS = {
    "stacks": 3,
    "per_stack": 11,
    "spacing_wl": 0.5,
    "radius_wl": 0.68,
    "geometry": None,
    "seed": 0,
    "jobs": os.cpu_count() or 1,
    "channels": None,
    "iters": 5000,
    "batch": 250,
    "alpha": 1e-2,
    "eta": 0.1,
    "renormalize_every": 1,
    "record_every": 1,
    "sample_az_min": 0.0,
    "sample_az_max": 2.0 * math.pi,
    "sample_el_min": math.pi / 4.0,
    "sample_el_max": 3.0 * math.pi / 4.0,
    "grid_az": 121,
    "grid_el": 61,
    "az_min": -math.pi,
    "az_max": math.pi,
    "el_min": 0.0,
    "el_max": math.pi,
    "sigma2": 1.0,
    "separation": DEFAULT_SEPARATION,
    "method": None,
    "phi": None,
    "rates": [0.2, 0.4, 0.6],
    "seeds_per_point": 5,
    "methods": ["gaussian", "sgd"],
    "external_phi": {},
    "out": None,
}

_SUCA_KEYS = ("stacks", "per_stack", "spacing_wl", "radius_wl")


@dataclass
class CliConfig:
    """Fully resolved and validated invocation of one subcommand."""

    command: str
    geometry: ArrayGeometry
    out: Path
    seed: int
    jobs: int
    options: dict
    optimizer: OptimizerConfig | None = None
    channels: int | None = None
    grid: ScfGrid | None = None
    phi_path: Path | None = None
    method: str | None = None
    seed_given: bool = False
    sigma2: float = 1.0
    separation: float = DEFAULT_SEPARATION
    rates: tuple = ()
    seeds_per_point: int = 1
    methods: tuple = ()
    external_phi: dict = field(default_factory=dict)
    phi_inputs: dict = field(default_factory=dict)


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file (flags override it)")
    common.add_argument("--geometry", help="geometry JSON file (excludes SUCA flags)")
    common.add_argument("--stacks", type=int)
    common.add_argument("--per-stack", type=int, dest="per_stack")
    common.add_argument("--spacing-wl", type=float, dest="spacing_wl")
    common.add_argument("--radius-wl", type=float, dest="radius_wl")
    common.add_argument("--seed", type=int)
    common.add_argument("--jobs", type=int)
    common.add_argument("--out", help="output file or directory")

    grid = argparse.ArgumentParser(add_help=False)
    grid.add_argument("--grid-az", type=int, dest="grid_az")
    grid.add_argument("--grid-el", type=int, dest="grid_el")
    grid.add_argument("--az-min", type=float, dest="az_min")
    grid.add_argument("--az-max", type=float, dest="az_max")
    grid.add_argument("--el-min", type=float, dest="el_min")
    grid.add_argument("--el-max", type=float, dest="el_max")

    optimizer = argparse.ArgumentParser(add_help=False)
    optimizer.add_argument("--iters", type=int)
    optimizer.add_argument("--batch", type=int)
    optimizer.add_argument("--alpha", type=float)
    optimizer.add_argument("--eta", type=float)
    optimizer.add_argument("--renormalize-every", type=int, dest="renormalize_every")
    optimizer.add_argument("--record-every", type=int, dest="record_every")
    optimizer.add_argument("--sample-az-min", type=float, dest="sample_az_min")
    optimizer.add_argument("--sample-az-max", type=float, dest="sample_az_max")
    optimizer.add_argument("--sample-el-min", type=float, dest="sample_el_min")
    optimizer.add_argument("--sample-el-max", type=float, dest="sample_el_max")

    parser = argparse.ArgumentParser(
        prog="arrayforge",
        description="Design and evaluate analog combining matrices for compressive arrays.",
    )
    parser.add_argument("--version", action="version", version=f"arrayforge {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("design", parents=[common, optimizer], help="run one SGD design")
    p.add_argument("--channels", type=int)

    p = commands.add_parser(
        "evaluate-scf", parents=[common, grid], help="grid SCF error of one combining matrix"
    )
    p.add_argument("--phi", help="combining matrix or design trace JSON")
    p.add_argument("--method", help="method label for the CSV row")

    p = commands.add_parser(
        "evaluate-crb", parents=[common, grid], help="CRB maps for named combining matrices"
    )
    p.add_argument(
        "--phi",
        action="append",
        metavar="NAME=PATH",
        help="combining matrix JSON to evaluate (repeatable); uncompressed always included",
    )
    p.add_argument("--sigma2", type=float)
    p.add_argument("--separation", type=float)

    p = commands.add_parser(
        "sweep", parents=[common, grid, optimizer], help="SCF error vs compression rate"
    )
    p.add_argument("--rates", help="comma-separated compression rates in (0, 1]")
    p.add_argument("--seeds-per-point", type=int, dest="seeds_per_point")
    p.add_argument("--methods", help="comma-separated subset of gaussian,sgd,external")
    p.add_argument(
        "--external-phi",
        action="append",
        dest="external_phi",
        metavar="RATE=PATH",
        help="externally designed matrix for one rate (repeatable)",
    )
    return parser


def _load_config_file(path_text: str) -> dict:
    path = Path(path_text)
    if not path.is_file():
        raise MissingInputError(f"config file not found: {path}")
    try:
        data = load_json(path)
    except Exception as exc:
        raise ConfigFileError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigFileError(f"config file {path} must hold a JSON object")
    if data.get("schema_version") != CONFIG_SCHEMA_VERSION:
        raise ConfigFileError(
            f"config file {path} must declare \"schema_version\": {CONFIG_SCHEMA_VERSION}"
        )
    unknown = sorted(set(data) - set(DEFAULTS) - {"schema_version"})
    if unknown:
        raise ConfigFileError(
            f"config file {path} has unknown keys: {', '.join(unknown)}"
        )
    return {k: v for k, v in data.items() if k != "schema_version"}


class _Resolver:
    """Implements flag > config > (env for seed) > default precedence."""

    def __init__(self, flags: dict, config: dict) -> None:
        self.flags = flags
        self.config = config
        self.resolved = {}

    def given(self, name: str) -> bool:
        return self.flags.get(name) is not None or name in self.config

    def get(self, name: str):
        if self.flags.get(name) is not None:
            value = self.flags[name]
        elif name in self.config:
            value = self.config[name]
        elif name == "seed" and os.environ.get(SEED_ENV_VAR) is not None:
            raw = os.environ[SEED_ENV_VAR]
            try:
                value = int(raw)
            except ValueError:
                raise OptionValueError(
                    f"{SEED_ENV_VAR} must be an integer, got {raw!r}"
                ) from None
        else:
            value = DEFAULTS[name]
        self.resolved[name] = value
        return value


def _as_int(name: str, value, minimum=None, maximum=None) -> int:
    try:
        result = int(value)
    except (TypeError, ValueError):
        raise OptionValueError(f"--{name.replace('_', '-')} must be an integer, got {value!r}") from None
    if minimum is not None and result < minimum:
        raise OptionValueError(f"--{name.replace('_', '-')} must be >= {minimum}, got {result}")
    if maximum is not None and result > maximum:
        raise OptionValueError(f"--{name.replace('_', '-')} must be <= {maximum}, got {result}")
    return result


def _as_float(name: str, value, positive=False) -> float:
    try:
        result = float(value)
    except (TypeError, ValueError):
        raise OptionValueError(f"--{name.replace('_', '-')} must be a number, got {value!r}") from None
    if not math.isfinite(result):
        raise OptionValueError(f"--{name.replace('_', '-')} must be finite, got {result}")
    if positive and not result > 0.0:
        raise OptionValueError(f"--{name.replace('_', '-')} must be positive, got {result}")
    return result


def _as_list(value, converter):
    if isinstance(value, str):
        parts = [p for p in value.split(",") if p.strip()]
    elif isinstance(value, (list, tuple)):
        parts = list(value)
    else:
        parts = [value]
    return [converter(p) for p in parts]


def _as_mapping(name: str, value) -> dict:
    """Normalize repeated NAME=PATH flags or a config JSON object to a dict."""
    if value is None:
        return {}
    if isinstance(value, dict):
        return {str(k): str(v) for k, v in value.items()}
    result = {}
    for item in value:
        if "=" not in item:
            raise OptionValueError(f"--{name.replace('_', '-')} expects KEY=PATH, got {item!r}")
        key, path = item.split("=", 1)
        result[key] = path
    return result


def _resolve_geometry(resolver: _Resolver) -> ArrayGeometry:
    file_given = resolver.given("geometry")
    suca_given = [k for k in _SUCA_KEYS if resolver.given(k)]
    if file_given and suca_given:
        flags = ", ".join("--" + k.replace("_", "-") for k in suca_given)
        raise OptionValueError(
            f"exactly one geometry source: drop {flags} or drop --geometry"
        )
    if file_given:
        path = Path(resolver.get("geometry"))
        if not path.is_file():
            raise MissingInputError(f"geometry file not found: {path}")
        try:
            geometry = load_geometry(path)
        except Exception as exc:
            raise OptionValueError(f"could not read geometry {path}: {exc}") from None
        for key in _SUCA_KEYS:
            resolver.resolved[key] = None
        return geometry
    stacks = _as_int("stacks", resolver.get("stacks"), minimum=1)
    per_stack = _as_int("per_stack", resolver.get("per_stack"), minimum=1)
    spacing = _as_float("spacing_wl", resolver.get("spacing_wl"), positive=True)
    radius = _as_float("radius_wl", resolver.get("radius_wl"))
    if radius < 0.0:
        raise OptionValueError(f"--radius-wl must not be negative, got {radius}")
    resolver.resolved["geometry"] = None
    return make_suca(stacks, per_stack, spacing, radius)


def _resolve_grid(resolver: _Resolver) -> ScfGrid:
    grid_az = _as_int("grid_az", resolver.get("grid_az"), minimum=2)
    grid_el = _as_int("grid_el", resolver.get("grid_el"), minimum=2)
    az_min = _as_float("az_min", resolver.get("az_min"))
    az_max = _as_float("az_max", resolver.get("az_max"))
    el_min = _as_float("el_min", resolver.get("el_min"))
    el_max = _as_float("el_max", resolver.get("el_max"))
    if not az_min < az_max:
        raise OptionValueError("--az-min must be strictly below --az-max")
    if not el_min < el_max:
        raise OptionValueError("--el-min must be strictly below --el-max")
    return ScfGrid(grid_az, grid_el, (az_min, az_max), (el_min, el_max))


def _resolve_optimizer(resolver: _Resolver, seed: int) -> OptimizerConfig:
    iters = _as_int("iters", resolver.get("iters"), minimum=0)
    batch = _as_int("batch", resolver.get("batch"), minimum=1)
    alpha = _as_float("alpha", resolver.get("alpha"), positive=True)
    eta = _as_float("eta", resolver.get("eta"))
    if not 0.0 <= eta < 1.0:
        raise OptionValueError(f"--eta must be in [0, 1); got {eta}")
    renorm = _as_int("renormalize_every", resolver.get("renormalize_every"), minimum=1)
    record = _as_int("record_every", resolver.get("record_every"), minimum=1)
    az_lo = _as_float("sample_az_min", resolver.get("sample_az_min"))
    az_hi = _as_float("sample_az_max", resolver.get("sample_az_max"))
    el_lo = _as_float("sample_el_min", resolver.get("sample_el_min"))
    el_hi = _as_float("sample_el_max", resolver.get("sample_el_max"))
    if az_lo > az_hi or el_lo > el_hi:
        raise OptionValueError("sampling ranges must satisfy min <= max")
    return OptimizerConfig(
        iterations=iters,
        batch_size=batch,
        step_size=alpha,
        drag=eta,
        azimuth_range=(az_lo, az_hi),
        elevation_range=(el_lo, el_hi),
        seed=seed,
        renormalize_every=renorm,
        record_every=record,
    )


def _require_out(resolver: _Resolver) -> Path:
    out = resolver.get("out")
    if out is None:
        raise OptionValueError("--out is required")
    return Path(out)


def _require_file(kind: str, path_text: str) -> Path:
    path = Path(path_text)
    if not path.is_file():
        raise MissingInputError(f"{kind} file not found: {path}")
    return path


def parse_and_validate(argv) -> CliConfig:
    """Parse argv (plus optional config file) into a validated CliConfig."""
    args = _build_parser().parse_args(argv)
    flags = vars(args).copy()
    command = flags.pop("command")
    config_file = flags.pop("config", None)
    file_values = _load_config_file(config_file) if config_file else {}
    resolver = _Resolver(flags, file_values)

    geometry = _resolve_geometry(resolver)
    seed_given = resolver.given("seed") or os.environ.get(SEED_ENV_VAR) is not None
    seed = _as_int("seed", resolver.get("seed"), minimum=0)
    jobs = _as_int("jobs", resolver.get("jobs"), minimum=1)
    out = _require_out(resolver)
    cfg = CliConfig(
        command=command,
        geometry=geometry,
        out=out,
        seed=seed,
        jobs=jobs,
        options=resolver.resolved,
        seed_given=seed_given,
    )

    if command == "design":
        channels = resolver.get("channels")
        if channels is None:
            raise OptionValueError("--channels is required for design")
        cfg.channels = _as_int("channels", channels, minimum=1, maximum=geometry.element_count)
        cfg.optimizer = _resolve_optimizer(resolver, seed)
    elif command == "evaluate-scf":
        phi = resolver.get("phi")
        if phi is None:
            raise OptionValueError("--phi is required for evaluate-scf")
        cfg.phi_path = _require_file("combining matrix", phi)
        method = resolver.get("method")
        cfg.method = None if method is None else str(method)
        cfg.grid = _resolve_grid(resolver)
    elif command == "evaluate-crb":
        mapping = _as_mapping("phi", resolver.get("phi"))
        cfg.phi_inputs = {}
        for name, path_text in mapping.items():
            path = _require_file("combining matrix", path_text)
            label = name if name else path.stem
            if label == "uncompressed":
                raise OptionValueError('the label "uncompressed" is reserved')
            cfg.phi_inputs[label] = path
        cfg.sigma2 = _as_float("sigma2", resolver.get("sigma2"), positive=True)
        cfg.separation = _as_float("separation", resolver.get("separation"), positive=True)
        cfg.grid = _resolve_grid(resolver)
    elif command == "sweep":
        try:
            rates = _as_list(resolver.get("rates"), float)
        except (TypeError, ValueError):
            raise OptionValueError("--rates must be comma-separated numbers") from None
        for rate in rates:
            if not 0.0 < rate <= 1.0:
                raise OptionValueError(f"compression rates must lie in (0, 1], got {rate}")
            try:
                channels_for_rate(rate, geometry.element_count)
            except ValueError as exc:
                raise OptionValueError(str(exc)) from None
        cfg.rates = tuple(rates)
        cfg.seeds_per_point = _as_int("seeds_per_point", resolver.get("seeds_per_point"), minimum=1)
        methods = tuple(_as_list(resolver.get("methods"), str))
        for method in methods:
            if method not in SWEEP_METHODS:
                raise OptionValueError(
                    f"unknown method {method!r}; choose from {', '.join(SWEEP_METHODS)}"
                )
        cfg.methods = methods
        external = _as_mapping("external_phi", resolver.get("external_phi"))
        for key, path_text in external.items():
            try:
                float(key)
            except ValueError:
                raise OptionValueError(f"--external-phi keys must be rates, got {key!r}") from None
            _require_file("external combining matrix", path_text)
        cfg.external_phi = external
        cfg.grid = _resolve_grid(resolver)
        cfg.optimizer = _resolve_optimizer(resolver, seed)
    return cfg


def _provenance(config: CliConfig) -> dict:
    options = {
        k: (str(v) if isinstance(v, Path) else v) for k, v in sorted(config.options.items())
    }
    return {
        "schema_version": 1,
        "command": config.command,
        "package_version": __version__,
        "geometry": config.geometry.to_dict(),
        "resolved_options": options,
    }


def _emit(path: Path, detail: str) -> None:
    print(f"wrote {path} ({detail})")


def _run_design(config: CliConfig) -> int:
    trace = design(config.geometry, config.channels, config.optimizer)
    doc = trace.to_dict()
    doc["provenance"] = _provenance(config)
    atomic_write_json(config.out, doc)
    last = trace.costs[-1][1] if trace.costs else math.nan
    _emit(
        config.out,
        f"channels={config.channels}, iterations={config.optimizer.iterations}, "
        f"last_recorded_cost={last:.6g}",
    )
    return EXIT_OK


def _load_phi_document(path: Path):
    """Accept either a bare combining-matrix JSON or a design-trace JSON."""
    data = load_json(path)
    if isinstance(data, dict) and "phi" in data:
        trace = DesignTrace.from_dict(data)
        return trace.final_phi, "sgd", trace.config.seed
    return CombiningMatrix.from_dict(data), "external", None


def _run_evaluate_scf(config: CliConfig) -> int:
    phi, inferred_method, inferred_seed = _load_phi_document(config.phi_path)
    method = config.method if config.method is not None else inferred_method
    seed = config.seed
    if not config.seed_given and inferred_seed is not None:
        seed = inferred_seed
    error = grid_scf_error(config.geometry, phi, config.grid)
    rho = phi.rows / config.geometry.element_count
    atomic_write_csv(
        config.out,
        ["rho", "method", "seed", "scf_error"],
        [[repr(rho), method, str(seed), repr(error)]],
    )
    _emit(config.out, f"rho={rho:.6g}, method={method}, scf_error={error:.6g}")
    sidecar = config.out.parent / (config.out.stem + "_provenance.json")
    doc = _provenance(config)
    doc["grid"] = config.grid.to_dict()
    doc["phi_file"] = str(config.phi_path)
    atomic_write_json(sidecar, doc)
    _emit(sidecar, "provenance")
    return EXIT_OK


def _run_evaluate_crb(config: CliConfig) -> int:
    phis = {name: _load_phi_document(path)[0] for name, path in config.phi_inputs.items()}
    report = run_crb_experiment(
        config.geometry,
        phis,
        config.grid,
        noise_variance=config.sigma2,
        separation=config.separation,
        jobs=config.jobs,
    )
    report.provenance.update(_provenance(config))
    for path in write_crb_report(report, config.out):
        _emit(path, "crb artifact")
    return EXIT_OK


def _run_sweep(config: CliConfig) -> int:
    spec = SweepSpec(
        compression_rates=config.rates,
        seeds_per_point=config.seeds_per_point,
        methods=config.methods,
        grid=config.grid,
        optimizer=config.optimizer,
        external_phi_paths=config.external_phi or None,
    )
    report = run_scf_sweep(config.geometry, spec, jobs=config.jobs)
    report.provenance.update(_provenance(config))
    for path in write_sweep_report(report, config.out):
        _emit(path, "sweep artifact")
    return EXIT_OK


_RUNNERS = {
    "design": _run_design,
    "evaluate-scf": _run_evaluate_scf,
    "evaluate-crb": _run_evaluate_crb,
    "sweep": _run_sweep,
}


def run(config: CliConfig) -> int:
    """Dispatch a validated CliConfig to its workflow."""
    return _RUNNERS[config.command](config)


def main(argv=None) -> int:
    try:
        config = parse_and_validate(list(argv) if argv is not None else sys.argv[1:])
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return run(config)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def console_main() -> None:
    raise SystemExit(main())
