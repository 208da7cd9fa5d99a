"""Seeded Monte Carlo fault campaigns and their summary statistics.

Every run ``(rate_index, run_index)`` draws its faults from
``derive(base_seed, rate_index, run_index)``; spec ``j`` of the template gets
``derive(run_seed, j)``.  Results therefore do not depend on worker count or
scheduling order.
"""

from __future__ import annotations

import logging
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .detector import FingerprintBoundary, classify_batch
from .errors import CampaignRunError, EmptyDataset, IncompleteCampaign, InvalidConfig
from .faults import ActivationFaultHook, CompositeHook, FaultSpec, inject_weight_faults, restore, snapshot
from .nn import DualHeadModel, fingerprint, max_logit_score
from .rng import derive
from .training import Dataset

log = logging.getLogger(__name__)

DEFAULT_RATES = (0.0, 0.05, 0.10, 0.15, 0.20, 0.25)
SCORES: dict[str, Callable] = {"fingerprint": fingerprint, "max_logit": max_logit_score}


@dataclass
class CampaignConfig:
    specs_template: list[FaultSpec]
    fault_rates: list[float] = field(default_factory=lambda: list(DEFAULT_RATES))
    runs_per_rate: int = 100
    nonfunctional_drop: float = 0.20
    base_seed: int = 0
    parallel_workers: int = 1

    def __post_init__(self):
        self.fault_rates = [float(r) for r in self.fault_rates]
        self.validate()

    def validate(self):
        if not self.fault_rates:
            raise InvalidConfig("fault_rates is empty")
        if any(not 0 <= r <= 1 for r in self.fault_rates):
            raise InvalidConfig("fault rates must lie in [0, 1]")
        if list(self.fault_rates) != sorted(self.fault_rates):
            raise InvalidConfig("fault rates must be sorted ascending")
        if self.runs_per_rate < 1:
            raise InvalidConfig("runs_per_rate must be >= 1")
        if self.parallel_workers < 1:
            raise InvalidConfig("parallel_workers must be >= 1")
        if not self.specs_template:
            raise InvalidConfig("specs_template is empty")
        if not 0 <= self.nonfunctional_drop <= 1:
            raise InvalidConfig("nonfunctional_drop must lie in [0, 1]")


@dataclass
class EvalResult:
    accuracy: float
    scores: np.ndarray
    faulty: np.ndarray
    invalid: np.ndarray
    predictions: np.ndarray

    @property
    def coverage(self) -> float:
        return float(self.faulty.mean())

    @property
    def n_invalid(self) -> int:
        return int(self.invalid.sum())


@dataclass
class RunResult:
    rate: float
    run_index: int
    accuracy: float
    coverage: float
    nonfunctional: bool
    seed_used: int
    rate_index: int = 0
    n_invalid: int = 0
    extra_coverage: dict[str, float] = field(default_factory=dict)


@dataclass
class RateSummary:
    rate: float
    cov_median: float
    cov_q1: float
    cov_q3: float
    cov_min: float
    cov_max: float
    acc_mean: float
    acc_std: float
    n_runs: int
    n_nonfunctional: int
    tpr_nonfunctional: float | None


@dataclass
class CampaignSummary:
    rates: list[RateSummary]
    fault_free_fpr: float
    baseline_accuracy: float

    def to_dict(self) -> dict:
        return asdict(self)


def evaluate_model(m: DualHeadModel, data: Dataset, boundary: FingerprintBoundary, act_hook=None,
                   score: str | Callable = "fingerprint", batch_size: int = 256,
                   extra: dict[str, tuple[Callable, FingerprintBoundary]] | None = None):
    """One forward pass per input gives the prediction and the detector statistic together."""
    if len(data) == 0:
        raise EmptyDataset("evaluation data is empty")
    score_fn = SCORES[score] if isinstance(score, str) else score
    preds, scores = [], []
    extra_scores: dict[str, list] = {k: [] for k in (extra or {})}
    for s in range(0, len(data), batch_size):
        rec = m.forward(data.x[s:s + batch_size], mode="deploy", act_fault=act_hook)
        preds.append(rec.prediction_logits.argmax(axis=1))
        scores.append(np.atleast_1d(score_fn(rec)))
        for k, (fn, _) in (extra or {}).items():
            extra_scores[k].append(np.atleast_1d(fn(rec)))
    pred = np.concatenate(preds)
    sc = np.concatenate(scores).astype(np.float64)
    faulty, invalid = classify_batch(sc, boundary)
    res = EvalResult(float((pred == data.y).mean()), sc, faulty, invalid, pred)
    if extra is None:
        return res
    others = {k: float(classify_batch(np.concatenate(v), extra[k][1])[0].mean()) for k, v in extra_scores.items()}
    return res, others


def _run_one(m: DualHeadModel, golden, boundary, cfg: CampaignConfig, data: Dataset, baseline_accuracy: float,
             rate_index: int, run_index: int, extra) -> RunResult:
    rate = cfg.fault_rates[rate_index]
    seed = derive(cfg.base_seed, rate_index, run_index)
    specs = [t.with_rate(rate, seed=derive(seed, j)) for j, t in enumerate(cfg.specs_template)]
    try:
        hooks = []
        for spec in specs:
            if spec.site == "weights":
                inject_weight_faults(m, spec, golden)
            else:
                hooks.append(ActivationFaultHook(spec, m))
        hook = None if not hooks else hooks[0] if len(hooks) == 1 else CompositeHook(hooks)
        res, others = evaluate_model(m, data, boundary, hook, extra=extra or {})
    except Exception as exc:
        raise CampaignRunError(rate_index, run_index, exc) from exc
    finally:
        restore(m, golden)
    if res.n_invalid:
        log.warning("rate %.4g run %d: %d NaN fingerprints counted as faulty", rate, run_index, res.n_invalid)
    return RunResult(rate, run_index, res.accuracy, res.coverage,
                     bool(res.accuracy < baseline_accuracy - cfg.nonfunctional_drop), seed,
                     rate_index, res.n_invalid, others)


# worker-process state for parallel campaigns
_WORKER: dict = {}


def _worker_init(payload):
    m, boundary, cfg, data, baseline, extra = payload
    _WORKER.update(m=m, golden=snapshot(m), boundary=boundary, cfg=cfg, data=data, baseline=baseline, extra=extra)


def _worker_run(tasks):
    w = _WORKER
    return [_run_one(w["m"], w["golden"], w["boundary"], w["cfg"], w["data"], w["baseline"], ri, rj, w["extra"])
            for ri, rj in tasks]


def run_campaign(m: DualHeadModel, golden_boundary: FingerprintBoundary, cfg: CampaignConfig, data: Dataset,
                 baseline_accuracy: float | None = None,
                 extra_detectors: dict[str, tuple[Callable, FingerprintBoundary]] | None = None) -> list[RunResult]:
    """Inject, evaluate and restore for every (rate, run) pair.

    ``extra_detectors`` maps a name to ``(score_fn, boundary)``; their coverage
    on the same forward passes is stored in ``RunResult.extra_coverage``.
    """
    cfg.validate()
    if not m.deployed:
        m.deploy()
    golden = snapshot(m)
    before = evaluate_model(m, data, golden_boundary)
    if baseline_accuracy is None:
        baseline_accuracy = before.accuracy
    tasks = [(ri, rj) for ri in range(len(cfg.fault_rates)) for rj in range(cfg.runs_per_rate)]
    if cfg.parallel_workers == 1:
        results = [_run_one(m, golden, golden_boundary, cfg, data, baseline_accuracy, ri, rj, extra_detectors)
                   for ri, rj in tasks]
    else:
        if extra_detectors and any(fn not in SCORES.values() for fn, _ in extra_detectors.values()):
            raise InvalidConfig("parallel campaigns accept only the built-in score functions")
        n = cfg.parallel_workers
        chunks = [tasks[i::n] for i in range(n)]
        payload = (m.clone(), golden_boundary, cfg, data, baseline_accuracy, extra_detectors)
        with ProcessPoolExecutor(n, initializer=_worker_init, initargs=(payload,)) as pool:
            results = [r for chunk in pool.map(_worker_run, chunks) for r in chunk]
        results.sort(key=lambda r: (r.rate_index, r.run_index))
    after = evaluate_model(m, data, golden_boundary)
    if after.accuracy != before.accuracy or not np.array_equal(after.faulty, before.faulty):
        raise CampaignRunError(-1, -1, RuntimeError("golden evaluation changed after restore"))
    return results


def summarize(results: list[RunResult], baseline_accuracy: float, fault_free_coverage: float,
              runs_per_rate: int | None = None, nonfunctional_drop: float = 0.20) -> CampaignSummary:
    by_rate: dict[float, list[RunResult]] = {}
    for r in results:
        by_rate.setdefault(r.rate, []).append(r)
    expected = runs_per_rate if runs_per_rate is not None else max((len(v) for v in by_rate.values()), default=0)
    rows = []
    for rate in sorted(by_rate):
        runs = by_rate[rate]
        if sorted(r.run_index for r in runs) != list(range(expected)):
            raise IncompleteCampaign(f"rate {rate}: expected runs 0..{expected - 1}, got {len(runs)} runs")
        cov = np.array([r.coverage for r in runs])
        acc = np.array([r.accuracy for r in runs])
        nf = acc < baseline_accuracy - nonfunctional_drop
        q1, med, q3 = np.percentile(cov, [25, 50, 75])
        rows.append(RateSummary(rate, float(med), float(q1), float(q3), float(cov.min()), float(cov.max()),
                                float(acc.mean()), float(acc.std()), len(runs), int(nf.sum()),
                                float(cov[nf].mean()) if nf.any() else None))
    return CampaignSummary(rows, float(fault_free_coverage), float(baseline_accuracy))
