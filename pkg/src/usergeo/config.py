"""Pipeline configuration: nested dataclasses loaded from JSON.

Unknown keys are rejected with their dotted path. Each pipeline stage has a
hash over the configuration sections (and input files) it depends on; the
hash is written into every artifact so stale outputs can be detected.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path

from .synth import SynthConfig

MODELS = ("trans_txt", "rgcn_ext", "graphsage_ext", "n2v_ext")


class ConfigError(ValueError):
    """Invalid or unknown configuration entry."""


@dataclass
class PathsConfig:
    workdir: str = "work"
    records: str | None = None       # default: <workdir>/data/records.jsonl
    profiles: str | None = None      # default: <workdir>/data/profiles.jsonl
    gazetteer: str | None = None     # default: <workdir>/data/gazetteer.tsv
    embeddings: str | None = None


@dataclass
class IngestConfig:
    match_radius_km: float = 25.0


@dataclass
class GraphConfig:
    celebrity_threshold: float | None = 5
    use_follower_layer: bool = True


@dataclass
class LabelConfig:
    mode: str = "city"
    min_users: int = 100
    min_bucket: int = 255


@dataclass
class TextConfig:
    max_len: int = 256
    liw_top_k: int = 1000
    liw_min_freq: int = 5


@dataclass
class TransConfig:
    d_model: int = 300
    n_heads: int = 6
    ff_dim: int = 128
    min_freq: int = 5
    lr: float = 1e-3
    epochs: int = 20
    batch_size: int = 32
    patience: int = 3
    val_fraction: float = 0.1
    weight_decay: float = 0.0


@dataclass
class RGCNConfig:
    hidden: list = field(default_factory=lambda: [128, 128, 128])
    lr: float = 0.01
    epochs: int = 200
    patience: int = 20
    val_fraction: float = 0.1
    weight_decay: float = 5e-4


@dataclass
class SAGEConfig:
    layer: str = "all"             # a layer name, or "all" for the flattened multiplex
    hidden: list = field(default_factory=lambda: [64])
    sample_sizes: list = field(default_factory=lambda: [25, 10])
    lr: float = 0.01
    epochs: int = 200
    patience: int = 20
    val_fraction: float = 0.1
    weight_decay: float = 5e-4


@dataclass
class N2VModelConfig:
    p: float = 1.0
    q: float = 1.0
    beta: float = 1.0
    walk_length: int = 80
    num_walks: int = 10
    window: int = 5
    dim: int = 128
    negative: int = 5
    epochs: int = 1
    lr: float = 0.025
    batch_size: int = 1024


@dataclass
class MetaConfig:
    lr: float = 0.05
    epochs: int = 300
    weight_decay: float = 1e-4


@dataclass
class ModelsConfig:
    selected: list = field(default_factory=lambda: list(MODELS))
    trans: TransConfig = field(default_factory=TransConfig)
    rgcn: RGCNConfig = field(default_factory=RGCNConfig)
    sage: SAGEConfig = field(default_factory=SAGEConfig)
    n2v: N2VModelConfig = field(default_factory=N2VModelConfig)
    meta: MetaConfig = field(default_factory=MetaConfig)
    inner_folds: int = 3


@dataclass
class EvalConfig:
    k: int = 5
    seed: int = 0


@dataclass
class PipelineConfig:
    paths: PathsConfig = field(default_factory=PathsConfig)
    ingest: IngestConfig = field(default_factory=IngestConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    labels: LabelConfig = field(default_factory=LabelConfig)
    text: TextConfig = field(default_factory=TextConfig)
    models: ModelsConfig = field(default_factory=ModelsConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    seed: int = 0

    def validate(self) -> "PipelineConfig":
        unknown = [m for m in self.models.selected if m not in MODELS]
        if unknown:
            raise ConfigError(f"models.selected: unknown model(s) {unknown}; choose from {MODELS}")
        if self.labels.mode not in ("city", "kdtree"):
            raise ConfigError(f"labels.mode: expected 'city' or 'kdtree', got {self.labels.mode!r}")
        if self.eval.k < 2:
            raise ConfigError("eval.k: need at least 2 folds")
        if self.models.inner_folds < 2:
            raise ConfigError("models.inner_folds: need at least 2 folds")
        if self.models.trans.d_model % self.models.trans.n_heads:
            raise ConfigError("models.trans: d_model must be divisible by n_heads")
        if len(self.models.sage.sample_sizes) != len(self.models.sage.hidden) + 1:
            raise ConfigError("models.sage: need one sample size per layer")
        return self

    # resolved paths
    @property
    def workdir(self) -> Path:
        return Path(self.paths.workdir)

    def data_path(self, name: str) -> Path:
        given = getattr(self.paths, name)
        if given:
            return Path(given)
        default = {"records": "records.jsonl", "profiles": "profiles.jsonl",
                   "gazetteer": "gazetteer.tsv"}[name]
        return self.workdir / "data" / default


def _build(cls, data, path: str):
    if not isinstance(data, dict):
        raise ConfigError(f"{path or 'config'}: expected an object")
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in data:
        if key not in names:
            raise ConfigError(f"unknown config key: {path + '.' if path else ''}{key}")
    kwargs = {}
    for key, value in data.items():
        sub = hints[key]
        if dataclasses.is_dataclass(sub):
            kwargs[key] = _build(sub, value, f"{path}.{key}" if path else key)
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path or 'config'}: {exc}") from exc


def from_dict(data: dict) -> PipelineConfig:
    return _build(PipelineConfig, data, "").validate()


def load_config(path) -> PipelineConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return from_dict(data)


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def set_override(cfg: PipelineConfig, dotted: str, raw: str) -> None:
    """Apply ``section.key=value`` (value parsed as JSON, else kept as a string)."""
    *parents, leaf = dotted.split(".")
    obj = cfg
    for name in parents:
        if not dataclasses.is_dataclass(obj) or not hasattr(obj, name):
            raise ConfigError(f"unknown config key: {dotted}")
        obj = getattr(obj, name)
    if not dataclasses.is_dataclass(obj) or leaf not in {f.name for f in dataclasses.fields(obj)}:
        raise ConfigError(f"unknown config key: {dotted}")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    setattr(obj, leaf, value)


def _digest(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()[:16]


def stage_hashes(cfg: PipelineConfig) -> dict[str, str]:
    """Hash per stage over the inputs and settings that stage depends on.

    Input files that do not exist yet hash as missing; the stage itself will
    report them.
    """
    inputs = {}
    for name in ("records", "profiles", "gazetteer"):
        p = cfg.data_path(name)
        inputs[name] = file_digest(p) if p.exists() else "missing"
    if cfg.paths.embeddings:
        p = Path(cfg.paths.embeddings)
        inputs["embeddings"] = file_digest(p) if p.exists() else "missing"
    d = to_dict(cfg)
    h = {}
    h["ingest"] = _digest([inputs, d["ingest"]])
    h["build-graph"] = _digest([h["ingest"], d["graph"]])
    h["build-labels"] = _digest([h["ingest"], d["labels"]])
    h["liw"] = _digest([h["build-labels"], d["text"]])
    model_part = [d["text"], d["models"], inputs.get("embeddings")]
    h["train"] = _digest([h["build-graph"], h["build-labels"], model_part, cfg.seed])
    h["evaluate"] = _digest([h["build-graph"], h["build-labels"], model_part, d["eval"], cfg.seed])
    h["profile-report"] = _digest([h["ingest"]])
    return h
