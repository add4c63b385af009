"""Run configuration: flat key=value files, per-dataset defaults, precedence.

A RunConfig round-trips through a human-readable `key = value` text format;
unknown keys are rejected. Resolution order is CLI flags over config file over
the built-in per-dataset defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .encoding import TimeEncoderConfig
from .model import EdgeModel, ModelConfig
from .sampling import SamplerConfig


class ConfigError(ValueError):
    pass


# sequence lengths from the published per-dataset settings, plus structure
DATASET_DEFAULTS: dict[str, dict[str, object]] = {
    "wikipedia": {"sampler_k": 30, "data_bipartite": True},
    "reddit": {"sampler_k": 10, "data_bipartite": True},
    "mooc": {"sampler_k": 64, "data_bipartite": True},
    "lastfm": {"sampler_k": 10, "data_bipartite": True},
    "enron": {"sampler_k": 16, "data_bipartite": False},
    "uci": {"sampler_k": 32, "data_bipartite": False},
}


@dataclass(frozen=True)
class RunConfig:
    dataset_name: str = ""
    dataset_path: str = ""
    cache_path: str = ""
    out_dir: str = ""
    seed: int = 0

    data_bipartite: bool = False
    data_has_header: bool = False
    data_node_dim: int = 172
    data_edge_dim: int = 172

    sampler_k: int = 20
    sampler_w: int = 5
    sampler_r: int = 10
    sampler_m: int = 10
    sampler_alpha: float = 0.2

    time_dim: int = 100

    mixer_width: int = 172
    mixer_layers: int = 2
    mixer_token_ratio: float = 0.4
    mixer_channel_ratio: float = 4.0

    model_second_order: bool = True
    model_fusion: str = "adaptive"
    model_nss: str = "repeat"
    model_seg_dim: int = 32
    model_no_time_encoding: bool = False
    model_no_segment_embedding: bool = False
    model_separate_encoding: bool = False

    train_epochs: int = 100
    train_patience: int = 20
    train_batch_size: int = 200
    train_lr: float = 1e-4

    # -- derived views -----------------------------------------------------

    def sampler_config(self) -> SamplerConfig:
        return SamplerConfig(
            k=self.sampler_k, w=self.sampler_w, r=self.sampler_r,
            m=self.sampler_m, alpha=self.sampler_alpha,
        )

    def time_config(self) -> TimeEncoderConfig:
        return TimeEncoderConfig(dim=self.time_dim)

    def model_config(self) -> ModelConfig:
        return ModelConfig(
            use_second_order=self.model_second_order,
            fusion=self.model_fusion,
            nss=self.model_nss,
            seg_dim=self.model_seg_dim,
            no_time_encoding=self.model_no_time_encoding,
            no_segment_embedding=self.model_no_segment_embedding,
            separate_encoding=self.model_separate_encoding,
        )

    def build_model(self) -> EdgeModel:
        return EdgeModel(
            node_dim=self.data_node_dim,
            edge_dim=self.data_edge_dim,
            sampler_cfg=self.sampler_config(),
            time_cfg=self.time_config(),
            model_cfg=self.model_config(),
            width=self.mixer_width,
            layers=self.mixer_layers,
            token_ratio=self.mixer_token_ratio,
            channel_ratio=self.mixer_channel_ratio,
        )


_FIELDS = {f.name: f.type for f in fields(RunConfig)}


def _parse_value(name: str, raw: str):
    kind = _FIELDS[name]
    raw = raw.strip()
    if kind == "bool":
        if raw.lower() in ("true", "1", "yes"):
            return True
        if raw.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"{name}: expected a boolean, got {raw!r}")
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from exc
    return raw


def serialize(cfg: RunConfig) -> str:
    lines = []
    for f in fields(RunConfig):
        val = getattr(cfg, f.name)
        if isinstance(val, bool):
            val = "true" if val else "false"
        elif isinstance(val, float):
            val = repr(val)
        lines.append(f"{f.name} = {val}")
    return "\n".join(lines) + "\n"


def parse(text: str) -> dict[str, object]:
    """Parse key=value lines into an override dict; unknown keys are errors."""
    overrides: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value")
        key, raw = stripped.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        overrides[key] = _parse_value(key, raw)
    return overrides


def load_file(path: str | Path) -> dict[str, object]:
    return parse(Path(path).read_text())


def resolve(
    file_overrides: dict[str, object] | None = None,
    cli_overrides: dict[str, object] | None = None,
) -> RunConfig:
    """Apply precedence: CLI flags > config file > per-dataset defaults."""
    merged: dict[str, object] = {}
    file_overrides = dict(file_overrides or {})
    cli_overrides = {k: v for k, v in (cli_overrides or {}).items() if v is not None}
    name = str(cli_overrides.get("dataset_name", file_overrides.get("dataset_name", "")))
    if name:
        merged.update(DATASET_DEFAULTS.get(name.lower(), {}))
        merged["dataset_name"] = name
    merged.update(file_overrides)
    merged.update(cli_overrides)
    for key in merged:
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
    return RunConfig(**merged)  # type: ignore[arg-type]
