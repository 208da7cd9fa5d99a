"""Stuck-at and bit-flip faults on weights and sign activations.

Fault sites are chosen independently per element with probability ``rate``.
Every draw comes from the counter-based stream in :mod:`selftest_bnn.rng`:
the tensor of layer ``i`` (position in ``model.named_layers()``) uses the key
``derive(spec.seed, i)``; site selection reads counters ``0..size-1`` of that
key and fault targets read the same counters of ``derive(key, 1)``.

Values are viewed as K-bit states ``s in 0..2**K-1`` with the uniform
symmetric codec ``value = scale * (2*s - (2**K - 1)) / (2**K - 1)``.  For
binary tensors ``K = 1`` and ``scale = 1``, so state 0 is -1 and state 1 is +1.
Real-valued tensors (the heads) use ``scale = max|w|`` of the tensor.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InvalidConfig, InvalidSnapshot, InvalidSpec, InvalidState
from .nn import Conv2d, DualHeadModel, Linear, SignActivation
from .rng import derive, stream_uniform

KINDS = ("stuck_at", "bit_flip")
SITES = ("weights", "activations")


@dataclass
class FaultSpec:
    kind: str
    site: str
    rate: float
    k: int = 1
    seed: int = 0
    target_state: int | None = None
    layers: str | list[str] = "all"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.kind not in KINDS:
            raise InvalidSpec(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.site not in SITES:
            raise InvalidSpec(f"site must be one of {SITES}, got {self.site!r}")
        if not 0.0 <= self.rate <= 1.0:
            raise InvalidConfig(f"rate must lie in [0, 1], got {self.rate}")
        if self.k < 1:
            raise InvalidSpec("bit width k must be positive")
        if self.kind == "stuck_at":
            if self.target_state is None or not 0 <= self.target_state < 2**self.k:
                raise InvalidSpec(f"stuck_at needs target_state in 0..{2**self.k - 1}")
        if not (self.layers in ("backbone", "all") or isinstance(self.layers, (list, tuple))):
            raise InvalidSpec(f"layer selector must be 'backbone', 'all' or a list of names")

    def with_rate(self, rate: float, seed: int | None = None) -> "FaultSpec":
        d = self.to_dict()
        d["rate"] = rate
        if seed is not None:
            d["seed"] = seed
        return FaultSpec.from_dict(d)

    def to_dict(self) -> dict:
        d = asdict(self)
        if isinstance(d["layers"], tuple):
            d["layers"] = list(d["layers"])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FaultSpec":
        allowed = {"kind", "site", "rate", "k", "seed", "target_state", "layers"}
        extra = set(d) - allowed
        if extra:
            raise InvalidConfig(f"unknown fault spec keys: {sorted(extra)}")
        return cls(**d)


@dataclass
class FaultMask:
    selected: np.ndarray
    targets: np.ndarray | None = None  # realized states, meaningful where selected


@dataclass
class GoldenSnapshot:
    architecture: dict
    params: dict[str, np.ndarray] = field(repr=False)


# -- codec --------------------------------------------------------------------------

def levels(k: int) -> int:
    return 2**k - 1


def quantize(values: np.ndarray, k: int, scale: float) -> np.ndarray:
    if k == 1:
        return (values >= 0).astype(np.int64)
    if scale == 0:
        return np.full(values.shape, 2 ** (k - 1), dtype=np.int64)
    s = np.rint((values / scale * levels(k) + levels(k)) / 2)
    return np.clip(s, 0, levels(k)).astype(np.int64)


def dequantize(states: np.ndarray, k: int, scale: float) -> np.ndarray:
    return scale * (2 * states - levels(k)) / levels(k)


# -- masks --------------------------------------------------------------------------

def sample_fault_mask(shape, p: float, rng_key: int, offset: int = 0) -> FaultMask:
    """Independent Bernoulli(p) selection of every element of ``shape``."""
    if not 0.0 <= p <= 1.0:
        raise InvalidConfig(f"rate must lie in [0, 1], got {p}")
    shape = tuple(shape) if np.ndim(shape) else (int(shape),)
    size = int(np.prod(shape))
    sel = stream_uniform(rng_key, offset, size) < p
    return FaultMask(sel.reshape(shape))


def realize_targets(states: np.ndarray, mask: FaultMask, spec: FaultSpec, rng_key: int, offset: int = 0) -> np.ndarray:
    """New states after applying ``spec`` at ``mask``; fills ``mask.targets``."""
    if spec.kind == "stuck_at":
        targets = np.full(states.shape, spec.target_state, dtype=np.int64)
    elif spec.k == 1:
        targets = 1 - states
    else:
        u = stream_uniform(derive(rng_key, 1), offset, states.size).reshape(states.shape)
        step = 1 + np.floor(u * levels(spec.k)).astype(np.int64)
        targets = (states + step) % 2**spec.k
    mask.targets = targets
    return np.where(mask.selected, targets, states)


def _selected_layers(m: DualHeadModel, selector, want) -> list[tuple[int, str, object]]:
    names = [n for n, _ in m.named_layers()]
    if isinstance(selector, (list, tuple)):
        unknown = set(selector) - set(names)
        if unknown:
            raise InvalidSpec(f"unknown layers in selector: {sorted(unknown)}")
    out = []
    for i, (name, layer) in enumerate(m.named_layers()):
        if not isinstance(layer, want):
            continue
        if selector == "backbone" and not name.startswith("backbone"):
            continue
        if isinstance(selector, (list, tuple)) and name not in selector:
            continue
        out.append((i, name, layer))
    return out


# -- weights ------------------------------------------------------------------------

def snapshot(m: DualHeadModel) -> GoldenSnapshot:
    return GoldenSnapshot(m.describe(), {k: v.copy() for k, v in m.named_parameters()})


def restore(m: DualHeadModel, snap: GoldenSnapshot) -> DualHeadModel:
    if m.describe() != snap.architecture:
        raise InvalidSnapshot("snapshot was taken from a different architecture")
    params = m.parameter_dict()
    if set(params) != set(snap.params):
        raise InvalidSnapshot("parameter names differ from snapshot")
    for k, v in snap.params.items():
        if params[k].shape != v.shape or params[k].dtype != v.dtype:
            raise InvalidSnapshot(f"parameter {k} differs in shape or dtype")
        np.copyto(params[k], v)
    m.refresh_binary()
    return m


def inject_weight_faults(m: DualHeadModel, spec: FaultSpec, golden: GoldenSnapshot | None = None):
    """Persistently corrupt the selected weight tensors of a deployed model.

    Returns ``(model, golden_snapshot, masks)`` where ``masks`` maps layer name
    to the realized :class:`FaultMask`.  The model is modified in place.
    """
    if spec.site != "weights":
        raise InvalidSpec("inject_weight_faults needs a weights spec")
    if not m.deployed:
        raise InvalidState("faults are injected into deployed models only")
    golden = golden if golden is not None else snapshot(m)
    masks = {}
    for idx, name, layer in _selected_layers(m, spec.layers, (Linear, Conv2d)):
        if layer.binary and spec.k != 1:
            raise InvalidSpec(f"{name} holds 1-bit weights; k={spec.k} does not apply")
        w = layer.params["weight"]
        key = derive(spec.seed, idx)
        mask = sample_fault_mask(w.shape, spec.rate, key)
        masks[name] = mask
        if not mask.selected.any():
            continue
        if layer.binary:
            new_states = realize_targets(quantize(w, 1, 1.0), mask, spec, key)
            faulty = dequantize(new_states, 1, 1.0).astype(w.dtype)
        elif spec.k == 1:
            # 1-bit fault on a real tensor hits the sign bit
            new_states = realize_targets(quantize(w, 1, 1.0), mask, spec, key)
            faulty = np.where(new_states == 1, np.abs(w), -np.abs(w)).astype(w.dtype)
        else:
            scale = float(np.abs(w).max())
            new_states = realize_targets(quantize(w, spec.k, scale), mask, spec, key)
            faulty = dequantize(new_states, spec.k, scale).astype(w.dtype)
        w[mask.selected] = faulty[mask.selected]
        layer.refresh_binary()
    return m, golden, masks


# -- activations --------------------------------------------------------------------

class ActivationFaultHook:
    """Applies fresh faults to sign-activation outputs on every forward pass.

    Each input counts as one pass.  For pass ``t`` and an activation with
    ``S`` elements per input, element ``e`` reads counter ``t * S + e`` of the
    layer's stream, so masks depend only on ``(seed, layer, pass index)``.
    """

    def __init__(self, spec: FaultSpec, model: DualHeadModel | None = None, keep_masks: bool = False):
        if spec.site != "activations":
            raise InvalidSpec("activation hooks need an activations spec")
        if spec.k != 1:
            raise InvalidSpec("sign activations are 1-bit; k must be 1")
        self.spec = spec
        self.passes = 0
        self._base = 0
        self._batch = 0
        self.keep_masks = keep_masks
        self.masks: dict[str, np.ndarray] = {}
        self._allowed: dict[str, int] | None = None
        if model is not None:
            self.bind(model)

    def bind(self, model: DualHeadModel) -> "ActivationFaultHook":
        self._allowed = {name: idx for idx, name, _ in _selected_layers(model, self.spec.layers, SignActivation)}
        return self

    def reset(self):
        self.passes = 0
        self.masks.clear()

    def begin(self, batch_size: int):
        self._base = self.passes
        self._batch = batch_size
        self.passes += batch_size

    def layer_index(self, name: str) -> int | None:
        if self._allowed is not None:
            return self._allowed.get(name)
        # unbound: accept backbone sign layers; index from the name
        if self.spec.layers in ("backbone", "all"):
            return int(name.split(".")[1]) if name.startswith("backbone.") else None
        return int(name.split(".")[1]) if name in self.spec.layers else None

    def mask_for(self, name: str, first_pass: int, n_passes: int, per_pass: int) -> np.ndarray | None:
        idx = self.layer_index(name)
        if idx is None:
            return None
        key = derive(self.spec.seed, idx)
        u = stream_uniform(key, first_pass * per_pass, n_passes * per_pass)
        return (u < self.spec.rate).reshape(n_passes, per_pass)

    def apply(self, name: str, h: np.ndarray) -> np.ndarray:
        per_pass = int(np.prod(h.shape[1:]))
        sel = self.mask_for(name, self._base, h.shape[0], per_pass)
        if sel is None:
            return h
        if self.keep_masks:
            self.masks[name] = sel.reshape(h.shape)
        if not sel.any():
            return h
        flat = h.reshape(h.shape[0], -1).copy()
        if self.spec.kind == "bit_flip":
            flat[sel] = -flat[sel]
        else:
            flat[sel] = 1.0 if self.spec.target_state == 1 else -1.0
        return flat.reshape(h.shape)


def make_activation_fault_hook(spec: FaultSpec, model: DualHeadModel | None = None) -> ActivationFaultHook:
    return ActivationFaultHook(spec, model)


class CompositeHook:
    """Chains several activation hooks (one per activation fault spec)."""

    def __init__(self, hooks: list[ActivationFaultHook]):
        self.hooks = hooks

    def begin(self, batch_size: int):
        for h in self.hooks:
            h.begin(batch_size)

    def apply(self, name: str, values: np.ndarray) -> np.ndarray:
        for h in self.hooks:
            values = h.apply(name, values)
        return values
