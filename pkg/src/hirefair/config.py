"""Run configuration: corpus paths, backend blocks, experimental grid, and
statistical settings, loadable from JSON with CLI flag overrides.

The "replication" preset pins the published experimental grid (temperatures
{0.0, 0.3}, lengths {100, 200}, first/third person, 5 runs) and alpha = 0.05;
attempts to override those fields under the preset are configuration errors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

from hirefair.backends import BackendConfig

CONFIG_SCHEMA_VERSION = 1

ALLOWED_TEMPERATURES = (0.0, 0.3)
ALLOWED_LENGTHS = (100, 200)
ALLOWED_POVS = ("first", "third")
MAX_RUNS = 5


class ConfigError(Exception):
    """Raised for invalid run configuration."""


@dataclass(frozen=True)
class GridConfig:
    n_values: tuple[int, ...] = (5, 10, 100)
    x_values: tuple[float, ...] = (5.0, 10.0)
    temperatures: tuple[float, ...] = ALLOWED_TEMPERATURES
    lengths: tuple[int, ...] = ALLOWED_LENGTHS
    povs: tuple[str, ...] = ALLOWED_POVS
    runs: int = MAX_RUNS
    draws: int = 1

    def __post_init__(self):
        if not self.n_values or any(n < 1 for n in self.n_values):
            raise ConfigError(f"n_values must be positive integers: {self.n_values}")
        if not self.x_values or any(not 0 < x <= 100 for x in self.x_values):
            raise ConfigError(f"x_values must lie in (0, 100]: {self.x_values}")
        for t in self.temperatures:
            if t not in ALLOWED_TEMPERATURES:
                raise ConfigError(f"temperature {t} outside supported {ALLOWED_TEMPERATURES}")
        for length in self.lengths:
            if length not in ALLOWED_LENGTHS:
                raise ConfigError(f"length {length} outside supported {ALLOWED_LENGTHS}")
        for pov in self.povs:
            if pov not in ALLOWED_POVS:
                raise ConfigError(f"pov {pov!r} outside supported {ALLOWED_POVS}")
        if not 1 <= self.runs <= MAX_RUNS:
            raise ConfigError(f"runs must be in [1, {MAX_RUNS}], got {self.runs}")
        if self.draws < 1:
            raise ConfigError(f"draws must be >= 1, got {self.draws}")


#: Grid pinned by the replication preset.
REPLICATION_GRID = GridConfig()


@dataclass(frozen=True)
class RunConfig:
    corpus_path: str
    out_dir: str
    backends: tuple[BackendConfig, ...]
    grid: GridConfig = field(default_factory=GridConfig)
    correction: str = "bh"
    alpha: float = 0.05
    master_seed: int = 0
    typo_count: int = 10
    spacing_mode: str = "collapse"
    swap_matching: str = "frequency_binned"
    extracurricular: bool = False
    pair_runs: str = "average"  # "average" | "separate"
    regard_endpoint: str = ""
    regard_credential_env: str = ""
    occupation_aliases: dict = field(default_factory=dict)
    frequency_table_path: str = ""

    def __post_init__(self):
        if self.correction not in ("bh", "bonferroni"):
            raise ConfigError(f"correction must be bh or bonferroni, got {self.correction!r}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.pair_runs not in ("average", "separate"):
            raise ConfigError(f"pair_runs must be average or separate, got {self.pair_runs!r}")
        if self.spacing_mode not in ("collapse", "per_newline"):
            raise ConfigError(f"spacing_mode must be collapse or per_newline")
        if self.swap_matching not in ("random", "frequency_binned"):
            raise ConfigError(f"swap_matching must be random or frequency_binned")
        if self.typo_count < 0:
            raise ConfigError(f"typo_count must be non-negative, got {self.typo_count}")
        if not self.backends:
            raise ConfigError("at least one backend must be configured")
        ids = [b.id for b in self.backends]
        if len(set(ids)) != len(ids):
            raise ConfigError(f"duplicate backend ids: {ids}")

    def embedding_backends(self) -> list[BackendConfig]:
        return [b for b in self.backends if b.kind == "embedding"]

    def completion_backends(self) -> list[BackendConfig]:
        return [b for b in self.backends if b.kind == "completion"]

    def canonical_dict(self) -> dict:
        """Config as manifest content. Excludes out_dir so reruns into a
        different directory produce identical manifests and reports."""
        return {
            "schema_version": CONFIG_SCHEMA_VERSION,
            "corpus_path": str(self.corpus_path),
            "backends": [
                {"id": b.id, "kind": b.kind, "protocol": b.protocol,
                 "model_name": b.model_name, "endpoint": b.endpoint,
                 "params": b.params}
                for b in sorted(self.backends, key=lambda b: b.id)
            ],
            "grid": {
                "n_values": list(self.grid.n_values),
                "x_values": list(self.grid.x_values),
                "temperatures": list(self.grid.temperatures),
                "lengths": list(self.grid.lengths),
                "povs": list(self.grid.povs),
                "runs": self.grid.runs,
                "draws": self.grid.draws,
            },
            "correction": self.correction,
            "alpha": self.alpha,
            "master_seed": self.master_seed,
            "typo_count": self.typo_count,
            "spacing_mode": self.spacing_mode,
            "swap_matching": self.swap_matching,
            "extracurricular": self.extracurricular,
            "pair_runs": self.pair_runs,
            "regard_endpoint": self.regard_endpoint,
            "occupation_aliases": self.occupation_aliases,
            "frequency_table_path": str(self.frequency_table_path),
        }


_PINNED_BY_REPLICATION = ("temperatures", "lengths", "povs", "runs")


def _grid_from_dict(raw: dict, preset: str | None) -> GridConfig:
    if preset == "replication":
        for key in _PINNED_BY_REPLICATION:
            if key in raw:
                raise ConfigError(
                    f"replication preset pins grid.{key}; remove the override"
                )
        base = REPLICATION_GRID
    else:
        base = GridConfig()
    updates = {}
    for key in ("n_values", "x_values", "temperatures", "lengths", "povs"):
        if key in raw:
            updates[key] = tuple(raw[key])
    for key in ("runs", "draws"):
        if key in raw:
            updates[key] = int(raw[key])
    return replace(base, **updates) if updates else base


def load_run_config(path, **overrides) -> RunConfig:
    """Load a JSON run config; keyword overrides win over file values."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if raw.get("schema_version") != CONFIG_SCHEMA_VERSION:
        raise ConfigError("config missing or unsupported schema_version")
    preset = raw.get("preset")
    if preset not in (None, "replication"):
        raise ConfigError(f"unknown preset {preset!r}")
    if preset == "replication" and "alpha" in raw and raw["alpha"] != 0.05:
        raise ConfigError("replication preset pins alpha=0.05")

    def pick(key, default):
        if key in overrides and overrides[key] is not None:
            return overrides[key]
        return raw.get(key, default)

    try:
        backends = tuple(BackendConfig.from_dict(b) for b in raw.get("backends", []))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"invalid backend block: {exc}") from exc

    grid_raw = dict(raw.get("grid", {}))
    for key in ("n_values", "x_values", "draws"):
        if key in overrides and overrides[key] is not None:
            grid_raw[key] = overrides[key]

    base_dir = path.parent

    def resolve(p):
        p = Path(p)
        return str(p if p.is_absolute() else base_dir / p)

    corpus = pick("corpus", None)
    if corpus is None:
        raise ConfigError("config must name a corpus file")
    if overrides.get("out_dir") is not None:
        out_dir = str(Path(overrides["out_dir"]).absolute())  # CLI paths are cwd-relative
    elif raw.get("out_dir") is not None:
        out_dir = resolve(raw["out_dir"])
    else:
        raise ConfigError("config must name an output directory")
    freq_table = pick("frequency_table", "")
    return RunConfig(
        corpus_path=resolve(corpus),
        out_dir=out_dir,
        backends=backends,
        grid=_grid_from_dict(grid_raw, preset),
        correction=pick("correction", "bh"),
        alpha=float(pick("alpha", 0.05)),
        master_seed=int(pick("master_seed", 0)),
        typo_count=int(pick("typo_count", 10)),
        spacing_mode=pick("spacing_mode", "collapse"),
        swap_matching=pick("swap_matching", "frequency_binned"),
        extracurricular=bool(pick("extracurricular", False)),
        pair_runs=pick("pair_runs", "average"),
        regard_endpoint=pick("regard_endpoint", ""),
        regard_credential_env=pick("regard_credential_env", ""),
        occupation_aliases=dict(raw.get("occupation_aliases", {})),
        frequency_table_path=resolve(freq_table) if freq_table else "",
    )
