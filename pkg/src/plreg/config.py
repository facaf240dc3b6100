"""Experiment configuration: JSON schema, named presets, validation.

A configuration file is a single JSON object; unknown keys anywhere are
rejected by name (with the line they first appear on).  A ``preset``
names a published weight bundle; preset values only fill fields the file
leaves unset, so explicit settings always win.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields

from .data import SyntheticSpec
from .errors import ConfigError
from .losses import LossWeights

TASKS = ("gcd", "mdg_gcd", "cil")
SWEEP_AXES = ("w_p1", "w_p2", "w_lreg", "lambda_infomax", "lambda_kd")


@dataclass(frozen=True)
class Preset:
    """A named weight bundle; ``lreg_times_lambda`` marks presets whose
    third weight is a factor multiplying the unlabeled-loss weight."""

    w_p1: float
    w_p2: float
    w_lreg: float
    lreg_times_lambda: bool = False

    def resolve(self, lambda_infomax: float) -> dict[str, float]:
        w_lreg = self.w_lreg * lambda_infomax if self.lreg_times_lambda else self.w_lreg
        return {"w_p1": self.w_p1, "w_p2": self.w_p2, "w_lreg": w_lreg}


PRESETS: dict[str, Preset] = {
    # discovery presets
    "table4_cub": Preset(1.0, 5e-1, 1e-1),
    "table4_scars": Preset(5.0, 5e-1, 1e-3, lreg_times_lambda=True),
    "table4_herbarium19": Preset(1.5e2, 1e2, 2e-1, lreg_times_lambda=True),
    "table4_cifar100": Preset(1.0, 5e-1, 2.5e-4, lreg_times_lambda=True),
    "table4_cifar10": Preset(1e3, 5.0, 1e-2, lreg_times_lambda=True),
    "table4_imagenet100": Preset(1.0, 5e-1, 1e-2, lreg_times_lambda=True),
    # multi-domain discovery presets
    "table5_pacs": Preset(5e-2, 5e-2, 1e-1),
    "table5_homeoffice": Preset(1e-1, 5e-2, 1e-1),
    "table5_vlcs": Preset(1e2, 5e-2, 1e-1),
    "table5_terraincognita": Preset(7.5, 5e-2, 1e-1),
    "table5_domainnet": Preset(1e-1, 5e-2, 1e-1),
    # incremental-session presets, two host variants each
    "table8_cifar100_ordered": Preset(1e-4, 1e-4, 1e-3),
    "table8_imagenetsubset_ordered": Preset(1e-3, 1e-3, 5e-3),
    "table8_cifar100_shuffled": Preset(1e-3, 1e-3, 1e-3),
    "table8_imagenetsubset_shuffled": Preset(1e-3, 1e-3, 1e-3),
    "table9_cifar100_ordered": Preset(1e-4, 1e-4, 1e-2),
    "table9_imagenetsubset_ordered": Preset(1e-4, 1e-4, 1e-2),
    "table9_cifar100_shuffled": Preset(1e-3, 1e-3, 1e-2),
    "table9_imagenetsubset_shuffled": Preset(1e-3, 1e-3, 5e-3),
}


@dataclass
class ModelSettings:
    dim: int = 32
    depth: int = 2
    head_input: str = "masked"


@dataclass
class OptimizerSettings:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    epochs: int = 50
    batch_size: int = 16

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ConfigError(f"optimizer.lr must be > 0, got {self.lr}")
        if self.epochs < 1:
            raise ConfigError(f"optimizer.epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 2:
            raise ConfigError(f"optimizer.batch_size must be >= 2, got {self.batch_size}")


@dataclass
class ExperimentConfig:
    task: str
    spec: SyntheticSpec
    weights: LossWeights
    seeds: list[int]
    output_dir: str
    model: ModelSettings = field(default_factory=ModelSettings)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    preset: str | None = None
    lambda_infomax: float = 1.0
    lambda_kd: float = 1.0
    kd_temperature: float = 2.0
    sessions: int = 5
    style: str = "ordered"
    held_out_domain: str | int = "all"
    eval_interval: int = 5
    val_fraction: float = 0.2
    test_per_class: int = 20

    def __post_init__(self) -> None:
        if self.task not in TASKS:
            raise ConfigError(f"task must be one of {TASKS}, got {self.task!r}")
        if not self.seeds:
            raise ConfigError("seeds must be a non-empty list")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")

    def estimator_params(self, seed: int) -> dict:
        """Keyword arguments for the task estimator at one seed."""
        common = dict(dim=self.model.dim, depth=self.model.depth,
                      head_input=self.model.head_input,
                      w_p1=self.weights.w_p1, w_p2=self.weights.w_p2,
                      w_lreg=self.weights.w_lreg,
                      lr=self.optimizer.lr, beta1=self.optimizer.beta1,
                      beta2=self.optimizer.beta2, epsilon=self.optimizer.epsilon,
                      epochs=self.optimizer.epochs,
                      batch_size=self.optimizer.batch_size, random_state=seed)
        if self.task == "cil":
            common.update(lambda_kd=self.lambda_kd,
                          kd_temperature=self.kd_temperature)
        else:
            common.update(lambda_infomax=self.lambda_infomax)
        return common


def _reject_unknown(section: str, given: dict, allowed, raw_text: str) -> None:
    for key in given:
        if key not in allowed:
            line = _line_of(raw_text, key)
            where = f" (line {line})" if line else ""
            label = f"{section}.{key}" if section else key
            raise ConfigError(f"unknown key {label!r}{where}")


def _line_of(raw_text: str, key: str) -> int | None:
    needle = f'"{key}"'
    pos = raw_text.find(needle)
    if pos < 0:
        return None
    return raw_text.count("\n", 0, pos) + 1


_TOP_KEYS = ("task", "preset", "seeds", "output_dir", "spec", "weights", "model",
             "optimizer", "lambda_infomax", "lambda_kd", "kd_temperature",
             "sessions", "style", "held_out_domain", "eval_interval",
             "val_fraction", "test_per_class")

_REQUIRED = ("task", "seeds", "output_dir", "spec")


def _build(raw: dict, raw_text: str) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("configuration root must be a JSON object")
    _reject_unknown("", raw, _TOP_KEYS, raw_text)
    for key in _REQUIRED:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r}")

    preset_name = raw.get("preset")
    preset_weights: dict[str, float] = {}
    if preset_name is not None:
        if preset_name not in PRESETS:
            raise ConfigError(f"unknown preset {preset_name!r}; available: "
                              f"{sorted(PRESETS)}")
        preset_weights = PRESETS[preset_name].resolve(
            float(raw.get("lambda_infomax", 1.0)))

    spec_raw = raw["spec"]
    spec_fields = {f.name for f in fields(SyntheticSpec)}
    _reject_unknown("spec", spec_raw, spec_fields, raw_text)
    try:
        spec = SyntheticSpec(**spec_raw)
    except TypeError as exc:
        raise ConfigError(f"spec: {exc}") from exc

    weights_raw = dict(raw.get("weights", {}))
    _reject_unknown("weights", weights_raw, ("w_p1", "w_p2", "w_lreg"), raw_text)
    merged = dict(preset_weights)
    merged.update(weights_raw)  # explicit settings beat the preset
    weights = LossWeights(**{k: float(v) for k, v in merged.items()})

    model_raw = dict(raw.get("model", {}))
    _reject_unknown("model", model_raw, ("dim", "depth", "head_input"), raw_text)
    optim_raw = dict(raw.get("optimizer", {}))
    _reject_unknown("optimizer", optim_raw,
                    ("lr", "beta1", "beta2", "epsilon", "epochs", "batch_size"),
                    raw_text)

    kwargs = {k: raw[k] for k in ("lambda_infomax", "lambda_kd", "kd_temperature",
                                  "sessions", "style", "held_out_domain",
                                  "eval_interval", "val_fraction",
                                  "test_per_class") if k in raw}
    return ExperimentConfig(task=raw["task"], spec=spec, weights=weights,
                            seeds=[int(s) for s in raw["seeds"]],
                            output_dir=str(raw["output_dir"]),
                            model=ModelSettings(**model_raw),
                            optimizer=OptimizerSettings(**optim_raw),
                            preset=preset_name, **kwargs)


def parse_config(path) -> ExperimentConfig:
    with open(path) as fh:
        raw_text = fh.read()
    try:
        raw = json.loads(raw_text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return _build(raw, raw_text)


def parse_config_text(raw_text: str) -> ExperimentConfig:
    try:
        raw = json.loads(raw_text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc}") from exc
    return _build(raw, raw_text)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Fully resolved JSON; parsing it again reproduces the same config."""
    doc = {
        "task": cfg.task,
        "preset": cfg.preset,
        "seeds": cfg.seeds,
        "output_dir": cfg.output_dir,
        "spec": asdict(cfg.spec),
        "weights": asdict(cfg.weights),
        "model": asdict(cfg.model),
        "optimizer": asdict(cfg.optimizer),
        "lambda_infomax": cfg.lambda_infomax,
        "lambda_kd": cfg.lambda_kd,
        "kd_temperature": cfg.kd_temperature,
        "sessions": cfg.sessions,
        "style": cfg.style,
        "held_out_domain": cfg.held_out_domain,
        "eval_interval": cfg.eval_interval,
        "val_fraction": cfg.val_fraction,
        "test_per_class": cfg.test_per_class,
    }
    if doc["preset"] is None:
        del doc["preset"]
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"
