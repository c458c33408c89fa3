"""Strict JSON run configuration.

Every block is validated against an explicit schema before any
computation starts: unknown keys, missing required keys, and out-of-range
values are all hard errors carrying the offending field's path.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .fluxes import ORIENTATIONS, FluxEnsemble
from .spin import RateModel, SpinEnvironment

__all__ = ["RunConfig", "FitConfig", "load_config", "load_fit_config", "build_grid"]

TRANSVERSE_POLICIES = {"half_parallel": 0.5, "equal": 1.0}
METHOD_NAMES = ("closed_form", "monte_carlo", "quadrature")
NORMALIZATIONS = ("none", "b0_at_xmin")
FORMATS = ("csv", "json")


def _check_keys(block: dict, allowed: set, required: set, context: str):
    if not isinstance(block, dict):
        raise ConfigError(f"{context}: expected an object")
    unknown = set(block) - allowed
    if unknown:
        raise ConfigError(f"{context}: unknown key(s) {sorted(unknown)}")
    missing = required - set(block)
    if missing:
        raise ConfigError(f"{context}: missing required key(s) {sorted(missing)}")


def _number(block: dict, key: str, context: str, *, default=None,
            minimum=None, exclusive_minimum=None, maximum=None) -> float:
    if key not in block:
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{context}.{key}: expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ConfigError(f"{context}.{key}: must be finite")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{context}.{key}: must be >= {minimum}, got {value}")
    if exclusive_minimum is not None and value <= exclusive_minimum:
        raise ConfigError(f"{context}.{key}: must be > {exclusive_minimum}, got {value}")
    if maximum is not None and value > maximum:
        raise ConfigError(f"{context}.{key}: must be <= {maximum}, got {value}")
    return value


def _integer(block: dict, key: str, context: str, *, default=None, minimum=None) -> int:
    if key not in block:
        return default
    value = block[key]
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{context}.{key}: expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ConfigError(f"{context}.{key}: must be >= {minimum}, got {value}")
    return value


def _choice(block: dict, key: str, context: str, options, default=None) -> str:
    value = block.get(key, default)
    if value not in options:
        raise ConfigError(f"{context}.{key}: must be one of {list(options)}, got {value!r}")
    return value


def build_grid(x_min: float, x_max: float, points_per_decade: int,
               include_negative: bool) -> np.ndarray:
    """Logarithmic frequency grid, optionally mirrored through zero.

    The positive branch has round(points_per_decade * decades) + 1 points
    from x_min to x_max; the mirrored grid inserts x = 0 between the
    negative and positive branches.
    """
    decades = math.log10(x_max / x_min)
    n = max(int(round(points_per_decade * decades)) + 1, 2)
    positive = np.logspace(math.log10(x_min), math.log10(x_max), n)
    if not include_negative:
        return positive
    return np.concatenate((-positive[::-1], [0.0], positive))


@dataclass(frozen=True)
class RunConfig:
    """Validated configuration for the spectrum/flux/oracle commands."""

    environment: dict
    rate_model: RateModel
    fields_gauss: tuple
    grid: np.ndarray
    grid_spec: dict
    method: dict
    output: dict
    ensemble: FluxEnsemble | None = None
    raw: dict = field(default_factory=dict)

    def env_for_field(self, field_gauss: float) -> SpinEnvironment:
        return SpinEnvironment(
            temperature=self.environment["temperature_mK"] * 1e-3,
            field=field_gauss * 1e-4,
            g_factor=self.environment["g_factor"],
            curie_weiss_temperature=self.environment["t_cw_mK"] * 1e-3,
        )


@dataclass(frozen=True)
class FitConfig:
    """Validated configuration for the fit command."""

    environment: dict
    observations_csv: str
    n_candidates: tuple
    free: tuple
    fixed: dict
    bounds: dict
    starts: int
    seed: int
    output: dict
    raw: dict = field(default_factory=dict)


def _parse_environment(block: dict) -> dict:
    ctx = "environment"
    _check_keys(block, {"temperature_mK", "t_cw_mK", "g_factor", "fields_gauss"},
                {"temperature_mK"}, ctx)
    env = {
        "temperature_mK": _number(block, "temperature_mK", ctx, exclusive_minimum=0.0),
        "t_cw_mK": _number(block, "t_cw_mK", ctx, default=0.0),
        "g_factor": _number(block, "g_factor", ctx, default=2.0, exclusive_minimum=0.0),
    }
    if env["t_cw_mK"] >= env["temperature_mK"]:
        raise ConfigError(f"{ctx}.t_cw_mK: must be below temperature_mK")
    fields = block.get("fields_gauss", [0.0])
    if not isinstance(fields, list):
        raise ConfigError(f"{ctx}.fields_gauss: expected a list")
    for i, value in enumerate(fields):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{ctx}.fields_gauss[{i}]: expected a number")
        if value < 0:
            raise ConfigError(f"{ctx}.fields_gauss[{i}]: must be >= 0")
    env["fields_gauss"] = tuple(float(v) for v in fields)
    return env


def _parse_rate(block: dict) -> RateModel:
    ctx = "rate"
    _check_keys(
        block,
        {"gamma0", "gamma_tilde", "n", "lambda_max", "transverse_policy",
         "transverse_ratio"},
        {"gamma0", "lambda_max"},
        ctx,
    )
    policy = block.get("transverse_policy", "half_parallel")
    if policy in TRANSVERSE_POLICIES:
        if "transverse_ratio" in block:
            raise ConfigError(
                f"{ctx}.transverse_ratio: only allowed with transverse_policy='ratio'"
            )
        ratio = TRANSVERSE_POLICIES[policy]
    elif policy == "ratio":
        ratio = _number(block, "transverse_ratio", ctx, minimum=0.5)
        if ratio is None:
            raise ConfigError(f"{ctx}.transverse_ratio: required for policy 'ratio'")
    else:
        raise ConfigError(
            f"{ctx}.transverse_policy: must be one of "
            f"{sorted(TRANSVERSE_POLICIES) + ['ratio']}, got {policy!r}"
        )
    n = _integer(block, "n", ctx, default=4)
    if n not in (2, 4):
        raise ConfigError(f"{ctx}.n: must be 2 or 4, got {n}")
    try:
        return RateModel(
            gamma0=_number(block, "gamma0", ctx, exclusive_minimum=0.0),
            gamma_tilde=_number(block, "gamma_tilde", ctx, default=0.0, minimum=0.0),
            exponent=n,
            lambda_max=_number(block, "lambda_max", ctx, exclusive_minimum=0.0),
            transverse_ratio=ratio,
        )
    except ValueError as exc:
        raise ConfigError(f"{ctx}: {exc}") from exc


def _parse_grid(block: dict) -> tuple[np.ndarray, dict]:
    ctx = "grid"
    _check_keys(block, {"x_min", "x_max", "points_per_decade", "include_negative"},
                {"x_min", "x_max"}, ctx)
    x_min = _number(block, "x_min", ctx, exclusive_minimum=0.0)
    x_max = _number(block, "x_max", ctx, exclusive_minimum=0.0)
    if not x_min < x_max:
        raise ConfigError(f"{ctx}: x_min must be < x_max")
    ppd = _integer(block, "points_per_decade", ctx, default=8, minimum=4)
    include_negative = block.get("include_negative", False)
    if not isinstance(include_negative, bool):
        raise ConfigError(f"{ctx}.include_negative: expected a boolean")
    spec = {"x_min": x_min, "x_max": x_max, "points_per_decade": ppd,
            "include_negative": include_negative}
    return build_grid(x_min, x_max, ppd, include_negative), spec


def _parse_method(block: dict) -> dict:
    ctx = "method"
    name = _choice(block, "name", ctx, METHOD_NAMES, default="closed_form")
    if name == "closed_form":
        _check_keys(block, {"name"}, set(), ctx)
        return {"name": name}
    if name == "monte_carlo":
        _check_keys(block, {"name", "samples", "seed"}, set(), ctx)
        return {
            "name": name,
            "samples": _integer(block, "samples", ctx, default=1_000_000, minimum=1),
            "seed": _integer(block, "seed", ctx, default=0, minimum=0),
        }
    _check_keys(block, {"name", "tolerance"}, set(), ctx)
    return {
        "name": name,
        "tolerance": _number(block, "tolerance", ctx, default=1e-8,
                             exclusive_minimum=0.0),
    }


def _parse_output(block: dict) -> dict:
    ctx = "output"
    _check_keys(block, {"format", "path", "normalization"}, set(), ctx)
    out = {
        "format": _choice(block, "format", ctx, FORMATS, default="csv"),
        "normalization": _choice(block, "normalization", ctx, NORMALIZATIONS,
                                 default="none"),
        "path": block.get("path"),
    }
    if out["path"] is not None and not isinstance(out["path"], str):
        raise ConfigError(f"{ctx}.path: expected a string")
    return out


def _parse_vector(value, context: str) -> np.ndarray:
    if (not isinstance(value, list) or len(value) != 3
            or any(isinstance(v, bool) or not isinstance(v, (int, float))
                   for v in value)):
        raise ConfigError(f"{context}: expected a 3-component number list")
    return np.asarray(value, dtype=float)


def _parse_ensemble(block: dict) -> FluxEnsemble:
    ctx = "ensemble"
    _check_keys(
        block,
        {"field_direction", "seed", "vectors", "vectors_csv", "count",
         "areal_density_per_m2", "area_m2", "magnitude_wb",
         "magnitude_histogram", "orientation", "plane_normal"},
        {"field_direction"},
        ctx,
    )
    direction = _parse_vector(block["field_direction"], f"{ctx}.field_direction")
    sources = [k for k in ("vectors", "vectors_csv") if k in block]
    generative = [k for k in ("count", "areal_density_per_m2") if k in block]
    if len(sources) + (1 if generative else 0) != 1:
        raise ConfigError(
            f"{ctx}: give exactly one of vectors, vectors_csv, or a generative "
            "spec (count / areal_density_per_m2 + area_m2)"
        )
    try:
        if "vectors" in block:
            vectors = block["vectors"]
            if not isinstance(vectors, list) or not vectors:
                raise ConfigError(f"{ctx}.vectors: expected a non-empty list")
            rows = [_parse_vector(v, f"{ctx}.vectors[{i}]") for i, v in enumerate(vectors)]
            return FluxEnsemble.from_vectors(np.array(rows), direction)
        if "vectors_csv" in block:
            path = block["vectors_csv"]
            if not isinstance(path, str):
                raise ConfigError(f"{ctx}.vectors_csv: expected a path string")
            return FluxEnsemble.from_csv(path, direction)

        count = _integer(block, "count", ctx, minimum=1)
        density = _number(block, "areal_density_per_m2", ctx, exclusive_minimum=0.0)
        area = _number(block, "area_m2", ctx, exclusive_minimum=0.0)
        if count is None and (density is None or area is None):
            raise ConfigError(f"{ctx}: generative spec needs count, or "
                              "areal_density_per_m2 and area_m2")
        if "magnitude_histogram" in block:
            if "magnitude_wb" in block:
                raise ConfigError(f"{ctx}: magnitude_wb and magnitude_histogram "
                                  "are mutually exclusive")
            hist = block["magnitude_histogram"]
            _check_keys(hist, {"bin_edges_wb", "weights"},
                        {"bin_edges_wb", "weights"}, f"{ctx}.magnitude_histogram")
            magnitude = (hist["bin_edges_wb"], hist["weights"])
        else:
            magnitude = _number(block, "magnitude_wb", ctx, default=1.0,
                                exclusive_minimum=0.0)
        orientation = _choice(block, "orientation", ctx, ORIENTATIONS,
                              default="isotropic_3d")
        plane_normal = block.get("plane_normal", [0.0, 0.0, 1.0])
        return FluxEnsemble.generate(
            field_direction=direction,
            count=count,
            areal_density=density,
            area=area,
            magnitude=magnitude,
            orientation=orientation,
            plane_normal=_parse_vector(plane_normal, f"{ctx}.plane_normal"),
            seed=_integer(block, "seed", ctx, default=0, minimum=0),
        )
    except (ValueError, OSError) as exc:
        raise ConfigError(f"{ctx}: {exc}") from exc


def load_config(path) -> RunConfig:
    """Load and validate a spectrum/flux/oracle run configuration."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    _check_keys(raw, {"environment", "rate", "grid", "method", "output", "ensemble"},
                {"environment", "rate", "grid"}, "config")
    environment = _parse_environment(raw["environment"])
    rate_model = _parse_rate(raw["rate"])
    grid, grid_spec = _parse_grid(raw["grid"])
    method = _parse_method(raw.get("method", {}))
    output = _parse_output(raw.get("output", {}))
    ensemble = _parse_ensemble(raw["ensemble"]) if "ensemble" in raw else None
    return RunConfig(
        environment=environment,
        rate_model=rate_model,
        fields_gauss=environment["fields_gauss"],
        grid=grid,
        grid_spec=grid_spec,
        method=method,
        output=output,
        ensemble=ensemble,
        raw=raw,
    )


def _parse_fit_block(block: dict, temperature_mk: float) -> dict:
    ctx = "fit"
    _check_keys(
        block,
        {"observations_csv", "n_candidates", "free", "fixed", "bounds",
         "starts", "seed"},
        {"observations_csv"},
        ctx,
    )
    path = block["observations_csv"]
    if not isinstance(path, str):
        raise ConfigError(f"{ctx}.observations_csv: expected a path string")
    candidates = block.get("n_candidates", [2, 4])
    if (not isinstance(candidates, list) or not candidates
            or any(c not in (2, 4) for c in candidates)):
        raise ConfigError(f"{ctx}.n_candidates: expected a non-empty subset of [2, 4]")
    free = block.get("free", ["amplitude", "gamma0", "gamma_tilde", "lambda_max"])
    if not isinstance(free, list) or not free:
        raise ConfigError(f"{ctx}.free: expected a non-empty list of parameter names")
    allowed_params = {"amplitude", "gamma0", "gamma_tilde", "lambda_max", "t_cw"}
    for name in free:
        if name not in allowed_params:
            raise ConfigError(f"{ctx}.free: unknown parameter {name!r}")
    fixed = block.get("fixed", {})
    if not isinstance(fixed, dict) or set(fixed) - allowed_params:
        raise ConfigError(f"{ctx}.fixed: keys must be parameter names")
    bounds = block.get("bounds", {})
    if not isinstance(bounds, dict) or set(bounds) - allowed_params:
        raise ConfigError(f"{ctx}.bounds: keys must be parameter names")
    parsed_bounds = {}
    for name, pair in bounds.items():
        if (not isinstance(pair, list) or len(pair) != 2
                or any(isinstance(v, bool) or not isinstance(v, (int, float))
                       for v in pair)):
            raise ConfigError(f"{ctx}.bounds.{name}: expected [low, high]")
        parsed_bounds[name] = (float(pair[0]), float(pair[1]))
    return {
        "observations_csv": path,
        "n_candidates": tuple(sorted(set(candidates))),
        "free": tuple(free),
        "fixed": dict(fixed),
        "bounds": parsed_bounds,
        "starts": _integer(block, "starts", ctx, default=8, minimum=8),
        "seed": _integer(block, "seed", ctx, default=0, minimum=0),
    }


def load_fit_config(path) -> FitConfig:
    """Load and validate a fit-command configuration."""
    try:
        raw = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    _check_keys(raw, {"environment", "fit", "output"}, {"environment", "fit"},
                "config")
    env_block = dict(raw["environment"])
    if "fields_gauss" in env_block:
        raise ConfigError(
            "environment.fields_gauss: not allowed for fit; fields come from "
            "the observations CSV"
        )
    environment = _parse_environment(env_block)
    fit_spec = _parse_fit_block(raw["fit"], environment["temperature_mK"])
    output = _parse_output(raw.get("output", {}))
    return FitConfig(
        environment=environment,
        observations_csv=fit_spec["observations_csv"],
        n_candidates=fit_spec["n_candidates"],
        free=fit_spec["free"],
        fixed=fit_spec["fixed"],
        bounds=fit_spec["bounds"],
        starts=fit_spec["starts"],
        seed=fit_spec["seed"],
        output=output,
        raw=raw,
    )
