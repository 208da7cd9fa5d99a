"""Two-stage training of the dual-head model.

Stage 1 fits backbone and prediction head with cross-entropy on the task split.
Stage 2 freezes both and fits only the uncertainty head with the fingerprint
loss ``alpha * mean((1 - max(u))**2)`` on the held-out fingerprint split.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np

from .errors import EmptyBatch, EmptyDataset, InvalidConfig, InvalidState, TrainingDiverged
from .nn import DualHeadModel
from .rng import derive, stream_u64, stream_uniform


@dataclass
class Dataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x)
        self.y = np.asarray(self.y, dtype=np.int64)
        if len(self.x) != len(self.y):
            raise InvalidConfig(f"{len(self.x)} inputs but {len(self.y)} labels")

    def __len__(self):
        return len(self.y)

    def subset(self, idx) -> "Dataset":
        return Dataset(self.x[idx], self.y[idx])


@dataclass
class SplitDataset:
    task_split: Dataset
    fingerprint_split: Dataset
    seed: int
    task_indices: np.ndarray = field(repr=False, default=None)
    fingerprint_indices: np.ndarray = field(repr=False, default=None)


@dataclass
class TrainConfig:
    epochs_stage1: int = 10
    epochs_stage2: int = 30
    batch_size: int = 64
    learning_rate: float = 1e-3
    learning_rate_stage2: float = 1e-3
    alpha: float = 1.0
    seed: int = 0
    augment_stage1: bool = False
    optimizer: str = "adam"
    optimizer_stage2: str = "adam"
    momentum: float = 0.9

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.epochs_stage1 < 0 or self.epochs_stage2 < 0:
            raise InvalidConfig("epoch counts must be nonnegative")
        if self.batch_size < 1:
            raise InvalidConfig("batch_size must be >= 1")
        if self.learning_rate <= 0 or self.learning_rate_stage2 <= 0:
            raise InvalidConfig("learning rates must be positive")
        if not self.alpha > 0:
            raise InvalidConfig("alpha must be positive")
        for opt in (self.optimizer, self.optimizer_stage2):
            if opt not in ("adam", "sgd_momentum"):
                raise InvalidConfig(f"unknown optimizer {opt!r}")

    def to_dict(self) -> dict:
        return asdict(self)


def seeded_permutation(seed: int, n: int) -> np.ndarray:
    """Portable shuffle: order indices by their SplitMix64 draw."""
    return np.argsort(stream_u64(seed, 0, n), kind="stable")


def split_dataset(data: Dataset, ratio: float = 0.8, seed: int = 0) -> SplitDataset:
    n = len(data)
    if n == 0:
        raise EmptyDataset("cannot split an empty dataset")
    if not 0 < ratio < 1:
        raise InvalidConfig(f"ratio must lie in (0, 1), got {ratio}")
    perm = seeded_permutation(seed, n)
    cut = int(np.floor(ratio * n))
    a, b = np.sort(perm[:cut]), np.sort(perm[cut:])
    return SplitDataset(data.subset(a), data.subset(b), seed, a, b)


# -- losses -------------------------------------------------------------------------

def fingerprint_loss(uncertainty_outputs: np.ndarray, alpha: float = 1.0) -> float:
    u = np.asarray(uncertainty_outputs)
    if u.ndim != 2 or u.shape[0] == 0 or u.shape[1] == 0:
        raise EmptyBatch("fingerprint loss needs a nonempty (N, U) batch")
    m = u.max(axis=1)
    # exact rational sum, rounded once: order-independent and correctly rounded
    total = sum((1 - Fraction(v)) ** 2 for v in m.tolist())
    return float(Fraction(alpha) * total / len(m))


def fingerprint_loss_grad(uncertainty_outputs: np.ndarray, alpha: float = 1.0) -> tuple[float, np.ndarray]:
    """Loss and its gradient w.r.t. the head outputs (routed to the first argmax)."""
    u = np.asarray(uncertainty_outputs)
    loss = fingerprint_loss(u, alpha)
    n = u.shape[0]
    idx = np.argmax(u, axis=1)
    m = u[np.arange(n), idx]
    g = np.zeros_like(u)
    g[np.arange(n), idx] = alpha * -2.0 * (1.0 - m) / n
    return loss, g


def cross_entropy_grad(logits: np.ndarray, y: np.ndarray) -> tuple[float, np.ndarray]:
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    n = len(y)
    loss = float(-logp[np.arange(n), y].mean())
    g = np.exp(logp)
    g[np.arange(n), y] -= 1
    return loss, (g / n).astype(logits.dtype)


# -- optimizers ---------------------------------------------------------------------

class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        for k, p in params.items():
            g = grads[k]
            m = self.m.setdefault(k, np.zeros_like(p))
            v = self.v.setdefault(k, np.zeros_like(p))
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * g * g
            mhat = m / (1 - b1**self.t)
            vhat = v / (1 - b2**self.t)
            p -= (self.lr * mhat / (np.sqrt(vhat) + self.eps)).astype(p.dtype)


class SGDMomentum:
    def __init__(self, lr=1e-2, momentum=0.9):
        self.lr, self.momentum = lr, momentum
        self.vel: dict[str, np.ndarray] = {}

    def step(self, params, grads):
        for k, p in params.items():
            v = self.vel.setdefault(k, np.zeros_like(p))
            v *= self.momentum
            v += grads[k]
            p -= (self.lr * v).astype(p.dtype)


def make_optimizer(cfg: TrainConfig, lr: float, name: str | None = None):
    if (name or cfg.optimizer) == "adam":
        return Adam(lr)
    return SGDMomentum(lr, cfg.momentum)


# -- stages -------------------------------------------------------------------------

def _layer_params(model: DualHeadModel, prefixes: tuple[str, ...]):
    params, grads, binary = {}, {}, []
    for lname, layer in model.named_layers():
        if not lname.startswith(prefixes):
            continue
        for pname, p in layer.params.items():
            key = f"{lname}.{pname}"
            params[key] = p
            grads[key] = (layer, pname)
            if layer.binary and pname == "weight":
                binary.append(p)
    return params, grads, binary


def _batches(seed: int, n: int, batch_size: int):
    perm = seeded_permutation(seed, n)
    for s in range(0, n, batch_size):
        yield perm[s:s + batch_size]


def _hflip(x: np.ndarray, seed: int) -> np.ndarray:
    if x.ndim != 4:
        return x
    flip = stream_uniform(seed, 0, len(x)) < 0.5
    x = x.copy()
    x[flip] = x[flip][..., ::-1]
    return x


def accuracy(model: DualHeadModel, data: Dataset, mode: str = "train", batch_size: int = 512) -> float:
    correct = 0
    for s in range(0, len(data), batch_size):
        rec = model.forward(data.x[s:s + batch_size], mode=mode)
        correct += int((rec.prediction_logits.argmax(axis=1) == data.y[s:s + batch_size]).sum())
    return correct / max(1, len(data))


def train_task(m: DualHeadModel, split: SplitDataset, cfg: TrainConfig, val: Dataset | None = None):
    """Stage 1: cross-entropy on the task split; uncertainty head untouched."""
    cfg.validate()
    data = split.task_split
    if len(data) == 0:
        raise EmptyDataset("task split is empty")
    val = val if val is not None else split.fingerprint_split
    m.train_mode()
    params, owners, binary = _layer_params(m, ("backbone", "prediction_head"))
    opt = make_optimizer(cfg, cfg.learning_rate)
    history = []
    for epoch in range(cfg.epochs_stage1):
        total, seen = 0.0, 0
        epoch_key = derive(cfg.seed, 1, epoch)
        for b, idx in enumerate(_batches(epoch_key, len(data), cfg.batch_size)):
            x = data.x[idx]
            if cfg.augment_stage1:
                x = _hflip(x, derive(epoch_key, b))
            m.zero_grad()
            rec = m.forward(x, mode="train", keep=True)
            loss, g = cross_entropy_grad(rec.prediction_logits, data.y[idx])
            if not np.isfinite(loss):
                raise TrainingDiverged(f"stage 1 loss became {loss} at epoch {epoch}")
            m.backward(grad_logits=g)
            opt.step(params, {k: l.grads[p] for k, (l, p) in owners.items()})
            for w in binary:
                np.clip(w, -1, 1, out=w)
            total += loss * len(idx)
            seen += len(idx)
        history.append({"epoch": epoch, "loss": total / seen,
                        "val_accuracy": accuracy(m, val) if len(val) else float("nan")})
    m.stage1_done = True
    return m, history


def train_uncertainty_head(m: DualHeadModel, split: SplitDataset, cfg: TrainConfig):
    """Stage 2: fingerprint loss on the fingerprint split, everything else frozen.

    No augmentation or stochastic regularization is applied here.
    """
    cfg.validate()
    if not m.stage1_done:
        raise InvalidState("stage 1 has not been run on this model")
    if m.uncertainty_head is None:
        raise InvalidState("model has no uncertainty head")
    data = split.fingerprint_split
    if len(data) == 0:
        raise EmptyDataset("fingerprint split is empty")
    was_deployed = m.deployed
    m.train_mode()
    # frozen backbone: its outputs never change during this stage
    feats = np.concatenate([m.backbone_forward(data.x[s:s + 512], mode="train")
                            for s in range(0, len(data), 512)])
    head = m.uncertainty_head
    params = {f"uncertainty_head.{k}": v for k, v in head.params.items()}
    opt = make_optimizer(cfg, cfg.learning_rate_stage2, cfg.optimizer_stage2)

    def loss_on_all():
        _, u = m.heads_forward(feats, mode="train")
        return fingerprint_loss(u, cfg.alpha)

    history = [{"epoch": -1, "loss": loss_on_all()}]
    for epoch in range(cfg.epochs_stage2):
        total, seen = 0.0, 0
        for idx in _batches(derive(cfg.seed, 2, epoch), len(data), cfg.batch_size):
            head.zero_grad()
            _, u = m.heads_forward(feats[idx], mode="train", keep=True)
            loss, g = fingerprint_loss_grad(u, cfg.alpha)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"stage 2 loss became {loss} at epoch {epoch}")
            m.backward(grad_uncertainty=g.astype(u.dtype), through_backbone=False)
            opt.step(params, {f"uncertainty_head.{k}": v for k, v in head.grads.items()})
            total += loss * len(idx)
            seen += len(idx)
        history.append({"epoch": epoch, "loss": total / seen})
    history.append({"epoch": cfg.epochs_stage2, "loss": loss_on_all()})
    if was_deployed:
        m.deploy()
    return m, history


def train_two_stage(m: DualHeadModel, train_data: Dataset, cfg: TrainConfig, ratio: float = 0.8):
    split = split_dataset(train_data, ratio, derive(cfg.seed, 0))
    m, h1 = train_task(m, split, cfg)
    m, h2 = train_uncertainty_head(m, split, cfg)
    m.deploy()
    return m, split, {"stage1": h1, "stage2": h2}
