"""Experiment configuration: one YAML file, strictly validated.

Sections: ``data``, ``model``, ``train``, ``faults``, ``campaign``,
``detector``, ``output``.  Unknown keys anywhere raise :class:`InvalidConfig`.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import yaml

from .campaign import CampaignConfig
from .detector import DEFAULT_Q_HIGH, DEFAULT_Q_LOW, DEFAULT_Z
from .errors import InvalidConfig
from .faults import FaultSpec
from .training import TrainConfig


@dataclass
class DataConfig:
    kind: str = "patterns"
    n_train: int = 2000
    n_eval: int = 1000
    classes: int = 10
    noise: float = 0.35
    seed: int = 1
    shape: list[int] | None = None
    train_images: str | None = None
    train_labels: str | None = None
    eval_images: str | None = None
    eval_labels: str | None = None

    def validate(self):
        if self.kind == "idx":
            if not (self.train_images and self.train_labels and self.eval_images and self.eval_labels):
                raise InvalidConfig("idx data needs train/eval image and label paths")
        elif self.kind not in ("blobs", "moons", "patterns"):
            raise InvalidConfig(f"unknown data kind {self.kind!r}")
        elif self.n_train < self.classes or self.n_eval < 1:
            raise InvalidConfig("n_train must be >= classes and n_eval >= 1")


@dataclass
class ModelConfig:
    topology: str = "desk_cnn"
    uncertainty_width: int = 16
    hidden: int = 64
    channels: list[int] = field(default_factory=lambda: [16, 32])
    binary_features: bool = True
    seed: int = 0

    def validate(self):
        if self.topology not in ("desk_cnn", "binary_mlp"):
            raise InvalidConfig(f"unknown topology {self.topology!r}")
        if self.uncertainty_width < 1 or self.hidden < 1:
            raise InvalidConfig("uncertainty_width and hidden must be positive")


@dataclass
class DetectorConfig:
    q_low: float = DEFAULT_Q_LOW
    q_high: float = DEFAULT_Q_HIGH
    z_threshold: float = DEFAULT_Z

    def validate(self):
        if not 0 < self.q_low < self.q_high < 1:
            raise InvalidConfig("detector quantiles need 0 < q_low < q_high < 1")
        if not self.z_threshold > 0:
            raise InvalidConfig("z_threshold must be positive")


def desk_train_config(**overrides) -> TrainConfig:
    """Training recipe used for the desk-scale CNN experiments.

    Stage 2 uses SGD with momentum at a high rate so that clean fingerprints
    settle at 1 to within float32 rounding, which makes the boundary tight.
    """
    base = dict(epochs_stage1=8, epochs_stage2=300, optimizer_stage2="sgd_momentum", learning_rate_stage2=0.05)
    return TrainConfig(**{**base, **overrides})


@dataclass
class ExperimentConfig:
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=desk_train_config)
    faults: list[FaultSpec] = field(default_factory=lambda: [FaultSpec("bit_flip", "weights", 0.0, layers="all")])
    campaign: CampaignConfig | None = None
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    output_dir: str = "out"

    def __post_init__(self):
        if self.campaign is None:
            self.campaign = CampaignConfig(self.faults)
        self.validate()

    def validate(self):
        self.data.validate()
        self.model.validate()
        self.train.validate()
        self.detector.validate()
        for f in self.faults:
            f.validate()
        self.campaign.specs_template = self.faults
        self.campaign.validate()

    def to_dict(self) -> dict:
        camp = asdict(self.campaign)
        camp.pop("specs_template")
        return {
            "data": asdict(self.data),
            "model": asdict(self.model),
            "train": self.train.to_dict(),
            "faults": [f.to_dict() for f in self.faults],
            "campaign": camp,
            "detector": asdict(self.detector),
            "output": {"dir": self.output_dir},
        }


def _section(cls, raw, name: str, factory=None, **extra):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise InvalidConfig(f"section {name!r} must be a mapping")
    allowed = {f.name for f in fields(cls)} - set(extra)
    unknown = set(raw) - allowed
    if unknown:
        raise InvalidConfig(f"unknown keys in {name!r}: {sorted(unknown)}")
    try:
        return (factory or cls)(**raw, **extra)
    except TypeError as exc:
        raise InvalidConfig(f"section {name!r}: {exc}") from exc


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise InvalidConfig("config root must be a mapping")
    unknown = set(d) - {"data", "model", "train", "faults", "campaign", "detector", "output"}
    if unknown:
        raise InvalidConfig(f"unknown top-level keys: {sorted(unknown)}")
    faults_raw = d.get("faults") or [{"kind": "bit_flip", "site": "weights", "rate": 0.0, "layers": "all"}]
    if not isinstance(faults_raw, list):
        raise InvalidConfig("'faults' must be a list of fault specs")
    try:
        faults = [FaultSpec.from_dict(f) for f in faults_raw]
    except TypeError as exc:
        raise InvalidConfig(f"fault spec: {exc}") from exc
    output = d.get("output") or {}
    if set(output) - {"dir"}:
        raise InvalidConfig(f"unknown keys in 'output': {sorted(set(output) - {'dir'})}")
    return ExperimentConfig(
        data=_section(DataConfig, d.get("data"), "data"),
        model=_section(ModelConfig, d.get("model"), "model"),
        train=_section(TrainConfig, d.get("train"), "train", factory=desk_train_config),
        faults=faults,
        campaign=_section(CampaignConfig, d.get("campaign"), "campaign", specs_template=faults),
        detector=_section(DetectorConfig, d.get("detector"), "detector"),
        output_dir=str(output.get("dir", "out")),
    )


def load_config(path) -> ExperimentConfig:
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise InvalidConfig(f"{path}: {exc}") from exc
    return config_from_dict(raw or {})


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)
