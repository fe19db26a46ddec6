"""Experiment configuration: YAML (or JSON) text in, validated models out.

Unknown keys are rejected everywhere and every validation failure names the
dotted path of the offending field. Defaults follow the reference
hyper-parameter table (10 clients, 3 local epochs, mu=0.5, FedOpt
eta=0.01/beta1=0.9/beta2=0.99/tau=1e-4, FedRef lambda_g=0.01,
lambda_ref 1e-6 -> 5e-3 every 10 rounds by x10).
"""
from __future__ import annotations

import json
from typing import Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError

STRATEGIES = ("fedavg", "fedprox", "fedadam", "fedyogi", "fedadagrad", "fedref")
FEDOPT_STRATEGIES = ("fedadam", "fedyogi", "fedadagrad")


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class ModelConfig(_Strict):
    kind: Literal["logistic_regression", "mlp_one_hidden"] = "logistic_regression"
    input_dim: Optional[int] = Field(default=None, ge=1)
    num_classes: Optional[int] = Field(default=None, ge=2)
    hidden_dim: int = Field(default=16, ge=1)
    init_scale: float = Field(default=0.1, ge=0)
    init_seed: int = Field(default=0, ge=0)


class SyntheticData(_Strict):
    source: Literal["synthetic"] = "synthetic"
    classes: int = Field(default=10, ge=2)
    per_class: int = Field(default=100, ge=1)
    input_dim: int = Field(default=10, ge=1)
    separation: float = Field(default=4.0, ge=0)
    seed: int = Field(default=0, ge=0)


class CsvData(_Strict):
    source: Literal["csv"]
    path: str
    label_column: str = "label"
    feature_columns: list[str] = Field(min_length=1)
    class_count: Optional[int] = Field(default=None, ge=2)


class PartitionConfig(_Strict):
    kind: Literal["label_shards", "dirichlet", "iid"] = "dirichlet"
    alpha: float = Field(default=0.5, gt=0)
    shards_per_client: int = Field(default=2, ge=1)
    seed: Optional[int] = Field(default=None, ge=0)


class LocalConfig(_Strict):
    epochs: int = Field(default=3, ge=0)
    batch_size: int = Field(default=32, ge=1)
    learning_rate: float = Field(default=0.05, gt=0)
    proximal_mu: Optional[float] = Field(default=None, ge=0)


class FedRefSection(_Strict):
    lambda_g: float = Field(default=0.01, ge=0)
    lambda_ref_0: float = Field(default=1e-6, ge=0)
    lambda_ref_top: float = Field(default=5e-3, ge=0)
    sigma_r: int = Field(default=10, ge=1)
    sigma_w: float = Field(default=10.0, gt=1)
    rho: int = Field(default=3, ge=1)
    server_eta: float = Field(default=1.0, ge=0)
    literal_l2: bool = False


class FedOptSection(_Strict):
    eta_s: float = Field(default=0.01, gt=0)
    beta1: float = Field(default=0.9, ge=0, lt=1)
    beta2: float = Field(default=0.99, ge=0, lt=1)
    tau: float = Field(default=1e-4, ge=0)


class Target(_Strict):
    metric: str
    value: float


class ScenarioConfig(_Strict):
    delta: float = Field(gt=0)
    eta: float = Field(default=1.0, gt=0)
    lam: float = Field(default=1.0, ge=0)
    anchor_gap: float = Field(default=0.0, ge=0)
    prox_gap: float = Field(default=0.0, ge=0)
    c_opt: float = Field(default=0.0, ge=0)
    noise: Literal["gaussian", "exponential"] = "gaussian"
    noise_param: float = Field(default=1.0, gt=0)
    samples: int = Field(default=100_000, ge=1)
    seed: int = Field(default=0, ge=0)


class ExperimentConfig(_Strict):
    strategy: Literal["fedavg", "fedprox", "fedadam", "fedyogi", "fedadagrad", "fedref"]
    rounds: int = Field(ge=1)
    model: ModelConfig
    data: Union[SyntheticData, CsvData] = Field(discriminator="source")
    clients: int = Field(default=10, ge=1)
    clients_per_round: Optional[int] = Field(default=None, ge=1)
    partition: PartitionConfig = PartitionConfig()
    local: LocalConfig = LocalConfig()
    fedref: Optional[FedRefSection] = None
    fedopt: Optional[FedOptSection] = None
    eval_split_fraction: float = Field(default=0.2, gt=0, lt=1)
    targets: list[Target] = Field(default_factory=list)
    forgetting_metric: Literal["eval_loss", "accuracy", "f1"] = "accuracy"
    udp_delta: Optional[float] = Field(default=None, gt=0)
    udp_scenario: Optional[ScenarioConfig] = None
    global_seed: int = Field(default=0, ge=0)
    output_dir: str = "runs/latest"
    workers: int = Field(default=1, ge=1)

    @model_validator(mode="before")
    @classmethod
    def _sections_match_strategy(cls, raw):
        if not isinstance(raw, dict):
            return raw
        strategy = raw.get("strategy")
        data = raw.get("data")
        if isinstance(data, dict) and "source" not in data:
            raw = {**raw, "data": {**data, "source": "synthetic"}}
        if raw.get("fedref") is not None and strategy != "fedref":
            raise ValueError(f"section 'fedref' is only valid for strategy fedref, not {strategy}")
        if raw.get("fedopt") is not None and strategy not in FEDOPT_STRATEGIES:
            raise ValueError(f"section 'fedopt' is only valid for FedOpt strategies, not {strategy}")
        return raw

    @model_validator(mode="after")
    def _fill_defaults(self):
        updates = {}
        if self.clients_per_round is None:
            updates["clients_per_round"] = self.clients
        elif self.clients_per_round > self.clients:
            raise ValueError(
                f"clients_per_round: {self.clients_per_round} exceeds clients ({self.clients})")
        if self.partition.seed is None:
            updates["partition"] = self.partition.model_copy(update={"seed": self.global_seed})
        mu = self.local.proximal_mu
        if mu is None:
            mu = 0.5 if self.strategy == "fedprox" else 0.0
            updates["local"] = self.local.model_copy(update={"proximal_mu": mu})
        elif mu > 0 and self.strategy != "fedprox":
            raise ValueError(f"local.proximal_mu: must be 0 for strategy {self.strategy}")
        if self.strategy == "fedref" and self.fedref is None:
            updates["fedref"] = FedRefSection()
        if self.strategy in FEDOPT_STRATEGIES and self.fedopt is None:
            updates["fedopt"] = FedOptSection()
        if isinstance(self.data, SyntheticData):
            model_up = {}
            for field, value in (("input_dim", self.data.input_dim),
                                 ("num_classes", self.data.classes)):
                have = getattr(self.model, field)
                if have is None:
                    model_up[field] = value
                elif have != value:
                    raise ValueError(f"model.{field}: {have} does not match synthetic data ({value})")
            if model_up:
                updates["model"] = self.model.model_copy(update=model_up)
        if updates:
            # Frozen model: rebuild through __dict__ so validators do not re-run.
            for k, v in updates.items():
                object.__setattr__(self, k, v)
        return self


def _format_errors(exc: ValidationError) -> str:
    lines = []
    for err in exc.errors():
        path = ".".join(str(p) for p in err["loc"])
        msg = err["msg"].removeprefix("Value error, ")
        lines.append(f"{path}: {msg}" if path else msg)
    return "; ".join(lines)


def config_from_dict(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>: config must be a mapping")
    try:
        return ExperimentConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(_format_errors(exc)) from None


def _load_text(text: str):
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"<root>: not valid YAML/JSON ({exc})") from None


def parse_config(text: str) -> ExperimentConfig:
    """Parse YAML (JSON is accepted too) into a validated config."""
    return config_from_dict(_load_text(text))


def config_to_dict(cfg: ExperimentConfig) -> dict:
    return cfg.model_dump(mode="json", exclude_none=True)


def serialize_config(cfg: ExperimentConfig) -> str:
    return json.dumps(config_to_dict(cfg), indent=2, sort_keys=True)


def parse_scenarios(text: str) -> list[ScenarioConfig]:
    """A scenario file holds either one scenario mapping or ``scenarios: [...]``."""
    raw = _load_text(text)
    if not isinstance(raw, dict):
        raise ConfigError("<root>: scenario file must be a mapping")
    items = raw["scenarios"] if "scenarios" in raw else [raw]
    if set(raw) - {"scenarios"} and "scenarios" in raw:
        raise ConfigError(f"<root>: unknown keys {sorted(set(raw) - {'scenarios'})}")
    out = []
    for i, item in enumerate(items):
        try:
            out.append(ScenarioConfig.model_validate(item))
        except ValidationError as exc:
            prefix = f"scenarios.{i}." if "scenarios" in raw else ""
            raise ConfigError("; ".join(prefix + part for part in _format_errors(exc).split("; "))) from None
    return out
