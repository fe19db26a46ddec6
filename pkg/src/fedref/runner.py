"""Round loop: client selection, local training, server step, evaluation, telemetry."""
from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import metrics as M
from .config import ExperimentConfig, SyntheticData, config_to_dict
from .data import Dataset, PartitionPlan, gen_synthetic, heterogeneity_index, load_csv, partition
from .errors import FedRefError, UsageError
from .learner import (ClientReport, LocalTrainConfig, ModelSpec, init_model, local_train,
                      loss_and_grad, predict)
from .params import ParameterVector
from .strategies import (FedOptState, FedRefConfig, FedRefState, LambdaSchedule,
                         aggregate_loss, fedavg_aggregate, fedopt_step, fedref_round)
from .udp import DriftScenario, verify_ordering

log = logging.getLogger(__name__)

# Stream tags keep seed derivations for different purposes apart.
_EVAL_SPLIT = 1
_SELECT = 2
_CLIENT = 3

EVAL_METRICS = ("eval_loss", "accuracy", "f1")
ORIENTATION = {
    "eval_loss": M.Orientation.LOWER_IS_BETTER,
    "accuracy": M.Orientation.HIGHER_IS_BETTER,
    "f1": M.Orientation.HIGHER_IS_BETTER,
    "global_loss": M.Orientation.LOWER_IS_BETTER,
}


def derive_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def select_clients(K: int, m: int, r: int, global_seed: int) -> list[int]:
    """Pick ``m`` distinct clients uniformly, deterministically per (seed, round)."""
    if not 1 <= m <= K:
        raise UsageError(f"cannot select {m} of {K} clients")
    rng = np.random.default_rng(np.random.SeedSequence([global_seed, _SELECT, r]))
    return sorted(int(c) for c in rng.choice(K, size=m, replace=False))


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray, num_classes: int) -> float:
    scores = []
    for c in range(num_classes):
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        if tp + fp + fn == 0:
            continue
        scores.append(2 * tp / (2 * tp + fp + fn))
    return float(np.mean(scores)) if scores else 0.0


def evaluate(spec: ModelSpec, params: ParameterVector, data: Dataset) -> dict[str, float]:
    loss, _ = loss_and_grad(spec, params, data)
    pred = predict(spec, params, data.features)
    return {
        "eval_loss": loss,
        "accuracy": float(np.mean(pred == data.labels)),
        "f1": macro_f1(data.labels, pred, spec.num_classes),
    }


# ---------------------------------------------------------------------------
# Server wrappers: one object per strategy family with a common step().


class _AvgServer:
    def __init__(self, params):
        self.params = params

    lambda_ref = 0.0

    def step(self, reports, r):
        self.params = fedavg_aggregate(reports)
        return self.params


class _OptServer:
    def __init__(self, params, variant, section):
        self.params = params
        self.state = FedOptState.zeros(variant, params.size, eta_s=section.eta_s,
                                       beta1=section.beta1, beta2=section.beta2, tau=section.tau)

    lambda_ref = 0.0

    def step(self, reports, r):
        self.params, self.state = fedopt_step(self.state, self.params, fedavg_aggregate(reports))
        return self.params


class _RefServer:
    def __init__(self, params, section):
        schedule = LambdaSchedule(section.lambda_ref_0, section.lambda_ref_top,
                                  section.sigma_r, section.sigma_w)
        cfg = FedRefConfig(section.lambda_g, schedule, section.rho, section.server_eta,
                           section.literal_l2)
        self.state = FedRefState(cfg, params)

    @property
    def params(self):
        return self.state.global_params

    @property
    def lambda_ref(self):
        return self.state.applied_lambda_ref

    def step(self, reports, r):
        new, self.state = fedref_round(self.state, reports, r)
        return new


def make_server(cfg: ExperimentConfig, params: ParameterVector):
    if cfg.strategy in ("fedavg", "fedprox"):
        return _AvgServer(params)
    if cfg.strategy == "fedref":
        return _RefServer(params, cfg.fedref)
    variant = {"fedadam": "adam", "fedyogi": "yogi", "fedadagrad": "adagrad"}[cfg.strategy]
    return _OptServer(params, variant, cfg.fedopt)


# ---------------------------------------------------------------------------


@dataclass
class RunSummary:
    config: dict
    rounds: list[M.RoundRecord]
    final_metrics: dict[str, float]
    zeta: dict[str, dict[str, float]]
    rounds_to_target: list[dict]
    udp: dict
    wall_clock_seconds: float
    heterogeneity_index: float
    udp_ordering: dict | None = None
    # In-memory only: global model after each round (not serialized).
    trajectory: list[np.ndarray] = field(default_factory=list, repr=False)

    def series(self, metric: str) -> M.EvalSeries:
        if metric == "global_loss":
            values = [rec.global_loss for rec in self.rounds]
        else:
            values = [rec.eval[metric] for rec in self.rounds]
        return M.EvalSeries(values, ORIENTATION[metric], metric)


def load_data(cfg: ExperimentConfig) -> Dataset:
    d = cfg.data
    if isinstance(d, SyntheticData):
        return gen_synthetic(d.classes, d.per_class, d.input_dim, d.separation, d.seed)
    return load_csv(d.path, d.label_column, d.feature_columns, d.class_count)


def split_eval(data: Dataset, fraction: float, global_seed: int) -> tuple[Dataset, Dataset]:
    """Hold out a global evaluation set before any client partitioning."""
    n = len(data)
    n_eval = min(max(1, int(round(n * fraction))), n - 1)
    if n_eval < 1:
        raise UsageError("dataset too small to hold out an evaluation split")
    order = np.random.default_rng(np.random.SeedSequence([global_seed, _EVAL_SPLIT])).permutation(n)
    return data.subset(np.sort(order[n_eval:])), data.subset(np.sort(order[:n_eval]))


def model_spec(cfg: ExperimentConfig, data: Dataset) -> ModelSpec:
    m = cfg.model
    input_dim = m.input_dim if m.input_dim is not None else data.input_dim
    num_classes = m.num_classes if m.num_classes is not None else data.class_count
    if input_dim != data.input_dim:
        raise UsageError(f"model.input_dim={input_dim} but data has {data.input_dim} features")
    if num_classes < data.class_count:
        raise UsageError(f"model.num_classes={num_classes} but data has {data.class_count} classes")
    return ModelSpec(m.kind, input_dim, num_classes, m.hidden_dim, m.init_scale, m.init_seed)


def _train_client(spec, global_params, client_data, cfg: ExperimentConfig, client: int, r: int):
    local = LocalTrainConfig(cfg.local.epochs, cfg.local.batch_size, cfg.local.learning_rate,
                             cfg.local.proximal_mu,
                             derive_seed(cfg.global_seed, _CLIENT, client, r))
    return local_train(spec, global_params, client_data, local)


def run_experiment(cfg: ExperimentConfig, workers: int | None = None,
                   keep_trajectory: bool = False) -> RunSummary:
    """Run every round of ``cfg`` and collect telemetry.

    ``workers`` overrides ``cfg.workers``; with more than one worker clients of a
    round train on a thread pool. Results do not depend on the worker count.
    """
    started = time.perf_counter()
    workers = cfg.workers if workers is None else workers
    data = load_data(cfg)
    train, test = split_eval(data, cfg.eval_split_fraction, cfg.global_seed)
    spec = model_spec(cfg, data)
    p = cfg.partition
    clients = partition(train, PartitionPlan(p.kind, cfg.clients, p.shards_per_client, p.alpha, p.seed))
    server = make_server(cfg, init_model(spec))

    records: list[M.RoundRecord] = []
    trajectory = []
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None
    try:
        for r in range(1, cfg.rounds + 1):
            try:
                chosen = select_clients(cfg.clients, cfg.clients_per_round, r, cfg.global_seed)
                prev = server.params
                jobs = [(spec, prev, clients[k], cfg, k, r) for k in chosen]
                if pool is None:
                    reports: Sequence[ClientReport] = [_train_client(*j) for j in jobs]
                else:
                    reports = list(pool.map(lambda j: _train_client(*j), jobs))
                new = server.step(reports, r)
                evals = evaluate(spec, new, test)
            except FedRefError as exc:
                raise type(exc)(f"round {r}: {exc}") from exc

            w = np.array([rep.sample_count for rep in reports], dtype=np.float64)
            w /= w.sum()
            rec = M.RoundRecord(
                round=r,
                global_loss=aggregate_loss(reports),
                eval=evals,
                drift=M.drift_magnitude(new, prev),
                lambda_ref=float(server.lambda_ref),
                global_loss_sum=float(sum(wi * rep.loss_sum for wi, rep in zip(w, reports))),
            )
            records.append(rec)
            series = M.EvalSeries([x.eval[cfg.forgetting_metric] for x in records],
                                  ORIENTATION[cfg.forgetting_metric], cfg.forgetting_metric)
            rec.psi = M.forgetting_psi(series, r)
            if keep_trajectory:
                trajectory.append(np.array(new))
            log.debug("round %d loss=%.4f drift=%.4g", r, rec.global_loss, rec.drift)
    finally:
        if pool is not None:
            pool.shutdown()

    summary = RunSummary(
        config=config_to_dict(cfg),
        rounds=records,
        final_metrics=dict(records[-1].eval),
        zeta={},
        rounds_to_target=[],
        udp={},
        wall_clock_seconds=0.0,
        heterogeneity_index=heterogeneity_index(clients),
        trajectory=trajectory,
    )
    for metric in EVAL_METRICS:
        za, zs = M.zeta(M.psi_series(summary.series(metric)))
        summary.zeta[metric] = {"abs": za, "signed": zs}
    for t in cfg.targets:
        if t.metric not in ORIENTATION:
            raise UsageError(f"targets: unknown metric {t.metric!r}")
        summary.rounds_to_target.append(
            {"metric": t.metric, "target": t.value,
             "round": M.rounds_to_target(summary.series(t.metric), t.value)})

    drifts = [rec.drift for rec in records]
    delta = cfg.udp_delta
    if delta is None:
        delta = max(2.0 * float(np.median(drifts)), np.finfo(float).tiny)
    p_udp, log_p = M.empirical_udp(drifts, delta)
    summary.udp = {"delta": delta, "p": p_udp,
                   "log_p": log_p.to_json() if isinstance(log_p, M.NeverExceeded) else log_p}
    if cfg.udp_scenario is not None:
        s = cfg.udp_scenario
        summary.udp_ordering = verify_ordering(DriftScenario(**s.model_dump())).to_dict()
    summary.wall_clock_seconds = time.perf_counter() - started
    return summary
