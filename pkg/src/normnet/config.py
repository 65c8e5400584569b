"""Run configuration and shipped per-model parameter presets."""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .net import DEFAULT_MU_G

PRESETS_PATH = Path(__file__).parent / "data" / "model_presets.json"


@dataclass(frozen=True)
class PipelineConfig:
    """Settings shared by the CLI subcommands.

    ``nf``/``nv`` are filtering and vertex-update iteration counts, ``mu_g``
    the filtering width driving denoising, ``ts`` the voxel half-extent,
    ``alpha_c`` the neighborhood radius factor, and ``mu_g_list`` the widths
    the network's heads are trained for.
    """

    nf: int = 10
    nv: int = 20
    mu_g: float = 0.3
    ts: int = 20
    alpha_c: float = 8.0
    n_heads: int = 6
    mu_g_list: tuple[float, ...] = DEFAULT_MU_G
    seed: int = 0

    def __post_init__(self):
        if self.nf < 0 or self.nv < 0:
            raise ValueError("nf and nv must be >= 0")
        if self.ts < 1:
            raise ValueError(f"ts must be >= 1, got {self.ts}")
        if self.alpha_c <= 0:
            raise ValueError(f"alpha_c must be > 0, got {self.alpha_c}")
        if self.n_heads != len(self.mu_g_list):
            raise ValueError(
                f"n_heads {self.n_heads} does not match "
                f"{len(self.mu_g_list)} entries in mu_g_list"
            )


_FIELD_TYPES = {
    "nf": int,
    "nv": int,
    "mu_g": float,
    "ts": int,
    "alpha_c": float,
    "n_heads": int,
    "seed": int,
}


def _coerce(key: str, value):
    if key == "mu_g_list":
        if not isinstance(value, (list, tuple)) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
        ):
            raise ValueError(f"config key mu_g_list must be a list of numbers")
        return tuple(float(v) for v in value)
    want = _FIELD_TYPES[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValueError(f"config key {key!r} must be a number, got {value!r}")
    if want is int and float(value) != int(value):
        raise ValueError(f"config key {key!r} must be an integer, got {value!r}")
    return want(value)


def config_from_dict(data: dict) -> PipelineConfig:
    """Build a config from a JSON-shaped dict; unknown keys are errors."""
    known = {f.name for f in dataclasses.fields(PipelineConfig)}
    unknown = set(data) - known
    if unknown:
        raise ValueError(f"unknown config key {sorted(unknown)[0]!r}")
    return PipelineConfig(**{k: _coerce(k, v) for k, v in data.items()})


def load_config(path) -> PipelineConfig:
    with open(path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return config_from_dict(data)


def merge_overrides(config: PipelineConfig, **overrides) -> PipelineConfig:
    """New config with every non-None override applied (flags beat file)."""
    changes = {k: v for k, v in overrides.items() if v is not None}
    if not changes:
        return config
    return dataclasses.replace(config, **changes)


def config_to_dict(config: PipelineConfig) -> dict:
    out = dataclasses.asdict(config)
    out["mu_g_list"] = list(out["mu_g_list"])
    return out


# ---------------------------------------------------------------------------
# per-model presets


@dataclass(frozen=True)
class ModelPreset:
    """Published per-model iteration counts and filtering width."""

    nf: int
    nv: int
    mu_g: float


def load_model_presets(path=None) -> dict[str, ModelPreset]:
    """Named presets from a JSON file (the shipped one by default)."""
    with open(PRESETS_PATH if path is None else path) as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("presets file must be a JSON object")
    presets = {}
    for name, entry in data.items():
        extra = set(entry) - {"nf", "nv", "mu_g"}
        if extra:
            raise ValueError(f"preset {name!r}: unknown key {sorted(extra)[0]!r}")
        missing = {"nf", "nv", "mu_g"} - set(entry)
        if missing:
            raise ValueError(f"preset {name!r}: missing key {sorted(missing)[0]!r}")
        presets[name] = ModelPreset(
            nf=int(entry["nf"]), nv=int(entry["nv"]), mu_g=float(entry["mu_g"])
        )
    return presets


def save_model_presets(presets: dict[str, ModelPreset], path) -> None:
    data = {
        name: {"nf": p.nf, "nv": p.nv, "mu_g": p.mu_g}
        for name, p in presets.items()
    }
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
