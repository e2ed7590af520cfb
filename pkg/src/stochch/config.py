"""Experiment configuration: a TOML file, validated into :class:`ExperimentConfig`.

Grammar (TOML subset)::

    experiment = "one_circle"      # one_circle | two_circles | gamma_sweep | ch_vs_ms
                                   # | spectral_check | custom
    realizations = 4
    base_seed = 0                  # seeds are base_seed + i unless `seeds` is given
    eps_list = [0.005, 0.0025]
    T = 1e-3

    [ch]                           # ChParams fields except eps
    gamma = 1.0
    g = 25.13

    [ms]                           # MsParams fields
    [noise]                        # NoiseSpec fields except seed

The canonical serialization is JSON with sorted keys and no whitespace; its
SHA-256 is the config hash recorded in run manifests.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .ch import ChParams
from .ms import MsParams
from .noise import NoiseSpec

EXPERIMENTS = ("one_circle", "two_circles", "gamma_sweep", "ch_vs_ms", "spectral_check",
               "custom")
OUTPUT_ROOT_ENV = "STOCHCH_OUTPUT_ROOT"


class ConfigError(ValueError):
    pass


def _fields(cls) -> set:
    return {f.name for f in dataclasses.fields(cls)}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "custom"
    interface: str = "circle"       # circle | two_circles (custom, ch-run and ms-run)
    realizations: int = 1
    base_seed: int = 0
    seeds: tuple = ()
    output: str = "runs"
    eps_list: tuple = (1.0 / (64 * 3.141592653589793),)
    k_list: tuple = ()              # per-eps CH time steps; default ch.k for all
    gammas: tuple = ()              # gamma_sweep only
    T: float = 1e-3
    relax_T: float = 2e-2
    relax_k: float = 1e-4
    base_n: int = 64                # bulk mesh 1/h_max
    h_min_factor: float = 0.7853981633974483  # h_min = factor * eps, capped at 1/base_n
    level: str = "zero"             # zero | compensated
    probe: tuple = ()               # compensated-level probe; default center + (R, 0)
    output_every: int = 1
    snapshot_every: int = 0
    checkpoint_every: int = 0
    ch: dict = field(default_factory=dict)
    ms: dict = field(default_factory=dict)
    noise: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("eps_list", "k_list", "gammas", "seeds", "probe"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        for name in ("ch", "ms", "noise"):
            object.__setattr__(self, name, dict(getattr(self, name)))
        self.validate()

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.interface not in ("circle", "two_circles"):
            raise ConfigError("interface must be 'circle' or 'two_circles'")
        if self.realizations < 1:
            raise ConfigError("realizations must be >= 1")
        if self.seeds and len(self.seeds) != self.realizations:
            raise ConfigError("seeds must list one seed per realization")
        if len(set(self.seed_list())) != self.realizations:
            raise ConfigError("seeds must be distinct")
        if not self.eps_list or any(e <= 0 for e in self.eps_list):
            raise ConfigError("eps_list must hold positive values")
        if self.k_list and len(self.k_list) != len(self.eps_list):
            raise ConfigError("k_list must match eps_list")
        if self.T <= 0 or self.relax_T < 0 or self.relax_k <= 0:
            raise ConfigError("times must be positive")
        if self.level not in ("zero", "compensated"):
            raise ConfigError("level must be 'zero' or 'compensated'")
        if self.probe and len(self.probe) != 2:
            raise ConfigError("probe must be a 2D point")
        if min(self.output_every, 1 + self.snapshot_every, 1 + self.checkpoint_every) < 1:
            raise ConfigError("cadences must be non-negative (output_every >= 1)")
        for name, cls, skip in (("ch", ChParams, {"eps"}), ("ms", MsParams, set()),
                                ("noise", NoiseSpec, {"seed"})):
            extra = set(getattr(self, name)) - (_fields(cls) - skip)
            if extra:
                raise ConfigError(f"unknown [{name}] keys: {sorted(extra)}")
        try:
            for i, eps in enumerate(self.eps_list):
                self.ch_params(i)
            MsParams(**self.ms)
            NoiseSpec(**self.noise)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    # -- derived objects

    def seed_list(self) -> list[int]:
        if self.seeds:
            return [int(s) for s in self.seeds]
        return [self.base_seed + i for i in range(self.realizations)]

    def h_min(self, eps: float) -> float:
        return min(self.h_min_factor * eps, 1.0 / self.base_n)

    def ch_params(self, i: int, **over) -> ChParams:
        eps = self.eps_list[i]
        kw = {"h_min": self.h_min(eps), "h_max": 1.0 / self.base_n}
        kw.update(self.ch)
        if self.k_list:
            kw["k"] = self.k_list[i]
        kw.update(over)
        return ChParams(eps=eps, **kw)

    def noise_spec(self, seed: int) -> NoiseSpec:
        return NoiseSpec(seed=seed, **self.noise)

    def ms_params(self, **over) -> MsParams:
        return MsParams(**{**self.ms, **over})

    # -- serialization

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def canonical(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"),
                          allow_nan=False)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()

    def run_dir(self, name: str | None = None) -> Path:
        root = os.environ.get(OUTPUT_ROOT_ENV) or self.output
        return Path(root) / f"{name or self.experiment}-{self.config_hash()[:12]}"

    def replace(self, **kw) -> "ExperimentConfig":
        return dataclasses.replace(self, **kw)


def _parse_value(text: str):
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_overrides(data: dict, overrides) -> dict:
    """Apply ``key=value`` strings (``section.key=value`` for tables)."""
    data = {k: (dict(v) if isinstance(v, dict) else v) for k, v in data.items()}
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        if len(parts) > 2:
            raise ConfigError(f"override key {key!r} nests too deep")
        target = data
        if len(parts) == 2:
            target = data.setdefault(parts[0], {})
        target[parts[-1]] = _parse_value(text.strip())
    return data


def from_dict(data: dict) -> ExperimentConfig:
    extra = set(data) - _fields(ExperimentConfig)
    if extra:
        raise ConfigError(f"unknown keys: {sorted(extra)}")
    try:
        return ExperimentConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def loads(text: str, overrides=None) -> ExperimentConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    return from_dict(apply_overrides(data, overrides))


def load(path, overrides=None) -> ExperimentConfig:
    return loads(Path(path).read_text(), overrides)


def _toml_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, float)):
        return repr(v)
    if isinstance(v, str):
        return json.dumps(v)
    if isinstance(v, (list, tuple)):
        return "[" + ", ".join(_toml_value(x) for x in v) + "]"
    if v is None:
        raise ConfigError("None cannot be written to TOML; omit the key")
    raise ConfigError(f"cannot serialize {v!r}")


def dumps(cfg: ExperimentConfig) -> str:
    """TOML text that :func:`loads` maps back to an equal config."""
    d = cfg.to_dict()
    lines = [f"{k} = {_toml_value(v)}" for k, v in sorted(d.items())
             if not isinstance(v, dict)]
    for sec in ("ch", "ms", "noise"):
        items = {k: v for k, v in d[sec].items() if v is not None}
        lines.append(f"\n[{sec}]")
        lines += [f"{k} = {_toml_value(v)}" for k, v in sorted(items.items())]
    return "\n".join(lines) + "\n"
