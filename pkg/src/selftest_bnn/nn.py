"""Layers, straight-through training passes and the dual-head model.

Arrays are batch-first: ``(B, C, H, W)`` for feature maps and ``(B, F)`` for
vectors.  Three forward modes exist:

``train``
    dense float path; binary layers use ``sign(master)`` and caches are kept
    for :meth:`DualHeadModel.backward`.
``deploy``
    inference path; binary layers fed by a sign activation run the packed
    XNOR-popcount kernel.  Requires :meth:`DualHeadModel.deploy`.
``surrogate``
    like ``train`` but every sign is replaced by ``clip(x, -1, 1)``.  Its exact
    derivative equals the straight-through gradient, which makes it the
    finite-difference oracle for the backward pass.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidModel, InvalidShape, ShapeMismatch, UninitializedModel
from .tensor_core import fixed_order_matmul, pack_rows, sign, xnor_popcount_matmul

MODES = ("train", "deploy", "surrogate")


def _binarize(w: np.ndarray, mode: str) -> np.ndarray:
    if mode == "surrogate":
        return np.clip(w, -1, 1)
    return sign(w)


def he_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(np.float32)


class Layer:
    kind = "layer"
    binary = False

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def forward(self, x: np.ndarray, mode: str, keep: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, g: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, in_shape: tuple[int, ...]) -> tuple[int, ...]:
        return in_shape

    def macs(self, in_shape: tuple[int, ...]) -> int:
        return 0

    def describe(self) -> dict:
        return {"kind": self.kind}

    def zero_grad(self):
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}


class Linear(Layer):
    kind = "Linear"

    def __init__(self, in_features: int, out_features: int, bias: bool = True, binary: bool = False,
                 rng: np.random.Generator | None = None):
        super().__init__()
        if in_features < 1 or out_features < 1:
            raise InvalidShape(f"Linear({in_features}, {out_features})")
        if in_features >= 2**31:
            raise InvalidShape("fan-in must stay below 2**31")
        self.in_features = in_features
        self.out_features = out_features
        self.binary = binary
        self.packed_input = False
        self.packed: np.ndarray | None = None
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = he_uniform(rng, (out_features, in_features), in_features)
        if binary:
            np.clip(self.params["weight"], -1, 1, out=self.params["weight"])
        if bias:
            self.params["bias"] = np.zeros(out_features, dtype=np.float32)

    @property
    def has_bias(self) -> bool:
        return "bias" in self.params

    def refresh_binary(self):
        self.packed = pack_rows(self.params["weight"]) if self.binary else None

    def forward(self, x, mode, keep):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ShapeMismatch(f"Linear expects (B, {self.in_features}), got {x.shape}")
        w = self.params["weight"]
        if self.binary and mode == "deploy" and self.packed_input:
            if self.packed is None:
                raise UninitializedModel("binary view missing; call deploy()")
            out = xnor_popcount_matmul(pack_rows(x), self.packed, self.in_features).astype(x.dtype)
        else:
            wb = _binarize(w, mode) if self.binary else w
            # +-1 inputs give exact integer sums in any order; real inputs need a fixed order
            out = x @ wb.T if self.packed_input else fixed_order_matmul(x, wb)
        if self.has_bias:
            out = out + self.params["bias"]
        if keep:
            self._cache = (x, mode)
        return out

    def backward(self, g):
        x, mode = self._cache
        w = self.params["weight"]
        wb = _binarize(w, mode) if self.binary else w
        gw = g.T @ x
        if self.binary:
            gw = gw * (np.abs(w) <= 1)
        self.grads["weight"] += gw
        if self.has_bias:
            self.grads["bias"] += g.sum(axis=0)
        return g @ wb

    def output_shape(self, in_shape):
        return (self.out_features,)

    def macs(self, in_shape):
        return self.in_features * self.out_features

    def describe(self):
        return {"kind": self.kind, "in": self.in_features, "out": self.out_features,
                "bias": self.has_bias, "binary": self.binary}


def _im2col(x: np.ndarray, k: int, stride: int, pad: int) -> tuple[np.ndarray, int, int]:
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]
    b, c, ho, wo = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * k * k)
    return cols, ho, wo


class Conv2d(Layer):
    kind = "Conv2d"

    def __init__(self, in_ch: int, out_ch: int, k: int, stride: int = 1, pad: int = 0, binary: bool = True,
                 rng: np.random.Generator | None = None):
        super().__init__()
        if min(in_ch, out_ch, k, stride) < 1 or pad < 0:
            raise InvalidShape(f"Conv2d({in_ch}, {out_ch}, k={k}, stride={stride}, pad={pad})")
        self.in_ch, self.out_ch, self.k, self.stride, self.pad = in_ch, out_ch, k, stride, pad
        self.binary = binary
        self.packed_input = False
        self.packed: np.ndarray | None = None
        fan_in = in_ch * k * k
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["weight"] = he_uniform(rng, (out_ch, in_ch, k, k), fan_in)
        if binary:
            np.clip(self.params["weight"], -1, 1, out=self.params["weight"])
        self._pad_cols: dict[tuple[int, int], np.ndarray] = {}

    def refresh_binary(self):
        self.packed = pack_rows(self.params["weight"].reshape(self.out_ch, -1)) if self.binary else None

    def _padding_columns(self, h: int, w: int) -> np.ndarray:
        # 1 where an im2col entry comes from zero padding
        key = (h, w)
        if key not in self._pad_cols:
            ones = np.ones((1, self.in_ch, h, w), dtype=np.float32)
            cols, _, _ = _im2col(ones, self.k, self.stride, self.pad)
            self._pad_cols[key] = 1.0 - cols
        return self._pad_cols[key]

    def forward(self, x, mode, keep):
        if x.ndim != 4 or x.shape[1] != self.in_ch:
            raise ShapeMismatch(f"Conv2d expects (B, {self.in_ch}, H, W), got {x.shape}")
        b, _, h, w_ = x.shape
        if h + 2 * self.pad < self.k or w_ + 2 * self.pad < self.k:
            raise ShapeMismatch(f"kernel {self.k} larger than padded input {x.shape[2:]}")
        cols, ho, wo = _im2col(x, self.k, self.stride, self.pad)
        wmat = self.params["weight"].reshape(self.out_ch, -1)
        if self.binary and mode == "deploy" and self.packed_input:
            if self.packed is None:
                raise UninitializedModel("binary view missing; call deploy()")
            # padding zeros pack as +1; subtract their contribution afterwards
            out = xnor_popcount_matmul(pack_rows(cols), self.packed, cols.shape[1])
            if self.pad:
                corr = (self._padding_columns(h, w_) @ sign(wmat).T).astype(np.int32)
                out = (out.reshape(b, ho * wo, self.out_ch) - corr).reshape(b * ho * wo, self.out_ch)
            out = out.astype(x.dtype)
        else:
            wb = _binarize(wmat, mode) if self.binary else wmat
            out = cols @ wb.T if self.packed_input else fixed_order_matmul(cols, wb).astype(x.dtype)
        out = out.reshape(b, ho, wo, self.out_ch).transpose(0, 3, 1, 2)
        if keep:
            self._cache = (cols, x.shape, ho, wo, mode)
        return np.ascontiguousarray(out)

    def backward(self, g):
        cols, xshape, ho, wo, mode = self._cache
        b, c, h, w_ = xshape
        wmat = self.params["weight"].reshape(self.out_ch, -1)
        wb = _binarize(wmat, mode) if self.binary else wmat
        g2 = g.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        gw = g2.T @ cols
        if self.binary:
            gw = gw * (np.abs(wmat) <= 1)
        self.grads["weight"] += gw.reshape(self.params["weight"].shape)
        gcols = (g2 @ wb).reshape(b, ho, wo, c, self.k, self.k)
        p, s = self.pad, self.stride
        gx = np.zeros((b, c, h + 2 * p, w_ + 2 * p), dtype=g.dtype)
        for i in range(self.k):
            for j in range(self.k):
                gx[:, :, i:i + s * ho:s, j:j + s * wo:s] += gcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        return gx[:, :, p:p + h, p:p + w_]

    def output_shape(self, in_shape):
        _, h, w = in_shape
        ho = (h + 2 * self.pad - self.k) // self.stride + 1
        wo = (w + 2 * self.pad - self.k) // self.stride + 1
        return (self.out_ch, ho, wo)

    def macs(self, in_shape):
        _, ho, wo = self.output_shape(in_shape)
        return self.out_ch * self.in_ch * self.k * self.k * ho * wo

    def describe(self):
        return {"kind": self.kind, "in_ch": self.in_ch, "out_ch": self.out_ch, "k": self.k,
                "stride": self.stride, "pad": self.pad, "binary": self.binary}


class Scale(Layer):
    """Learned per-channel affine ``gamma * x + beta`` (kept real-valued)."""

    kind = "Scale"

    def __init__(self, channels: int, init_gamma: float = 1.0):
        super().__init__()
        self.channels = channels
        self.params["gamma"] = np.full(channels, init_gamma, dtype=np.float32)
        self.params["beta"] = np.zeros(channels, dtype=np.float32)

    def _bshape(self, x):
        return (1, self.channels) + (1,) * (x.ndim - 2)

    def forward(self, x, mode, keep):
        if x.shape[1] != self.channels:
            raise ShapeMismatch(f"Scale expects {self.channels} channels, got {x.shape}")
        shp = self._bshape(x)
        if keep:
            self._cache = x
        return x * self.params["gamma"].reshape(shp) + self.params["beta"].reshape(shp)

    def backward(self, g):
        x = self._cache
        axes = (0,) + tuple(range(2, x.ndim))
        self.grads["gamma"] += (g * x).sum(axis=axes)
        self.grads["beta"] += g.sum(axis=axes)
        return g * self.params["gamma"].reshape(self._bshape(x))

    def describe(self):
        return {"kind": self.kind, "channels": self.channels}


class SignActivation(Layer):
    kind = "SignActivation"

    def forward(self, x, mode, keep):
        if keep:
            self._cache = x
        if mode == "surrogate":
            return np.clip(x, -1, 1)
        return sign(x)

    def backward(self, g):
        return g * (np.abs(self._cache) <= 1)


class AdaptiveAvgPool(Layer):
    kind = "AdaptiveAvgPool"

    def forward(self, x, mode, keep):
        if x.ndim != 4 or x.shape[2] < 1 or x.shape[3] < 1:
            raise ShapeMismatch(f"AdaptiveAvgPool expects (B, C, H, W), got {x.shape}")
        if keep:
            self._cache = x.shape
        return x.mean(axis=(2, 3))

    def backward(self, g):
        b, c, h, w = self._cache
        return np.broadcast_to(g[:, :, None, None] / (h * w), (b, c, h, w)).copy()

    def output_shape(self, in_shape):
        return (in_shape[0],)


class Flatten(Layer):
    kind = "Flatten"

    def forward(self, x, mode, keep):
        if keep:
            self._cache = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, g):
        return g.reshape(self._cache)

    def output_shape(self, in_shape):
        return (int(np.prod(in_shape)),)


def adaptive_avg_pool(x: np.ndarray) -> np.ndarray:
    """Mean over the spatial axes of a ``[C, H, W]`` map (or ``[B, C, H, W]`` batch)."""
    x = np.asarray(x)
    if x.ndim == 3:
        return AdaptiveAvgPool().forward(x[None], "train", False)[0]
    return AdaptiveAvgPool().forward(x, "train", False)


def sign_activation(x: np.ndarray) -> np.ndarray:
    return sign(x)


def sign_activation_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    """Straight-through gradient: pass ``upstream`` where ``|x| <= 1``."""
    return upstream * (np.abs(x) <= 1)


LAYER_TYPES = {cls.kind: cls for cls in (Linear, Conv2d, Scale, SignActivation, AdaptiveAvgPool, Flatten)}


def layer_from_description(d: dict) -> Layer:
    kind = d["kind"]
    if kind == "Linear":
        return Linear(d["in"], d["out"], bias=d["bias"], binary=d["binary"])
    if kind == "Conv2d":
        return Conv2d(d["in_ch"], d["out_ch"], d["k"], d["stride"], d["pad"], binary=d["binary"])
    if kind == "Scale":
        return Scale(d["channels"])
    if kind in LAYER_TYPES:
        return LAYER_TYPES[kind]()
    raise InvalidModel(f"unknown layer kind {kind!r}")


@dataclass
class ForwardRecord:
    prediction_logits: np.ndarray
    uncertainty_output: np.ndarray | None
    features: np.ndarray | None = None
    activations: list[np.ndarray] = field(default_factory=list)


class DualHeadModel:
    """Shared backbone feeding a prediction head and an uncertainty head."""

    def __init__(self, input_shape: tuple[int, ...], backbone: list[Layer], prediction_head: Linear,
                 uncertainty_head: Linear | None, uncertainty_pool: bool = False):
        self.input_shape = tuple(int(s) for s in input_shape)
        self.backbone = list(backbone)
        self.prediction_head = prediction_head
        self.uncertainty_head = uncertainty_head
        self.uncertainty_pool = uncertainty_pool
        self.deployed = False
        self.stage1_done = False
        self.metadata: dict = {}
        self._validate()

    # -- structure -----------------------------------------------------------------
    def _validate(self):
        shape = self.input_shape
        for layer in self.backbone:
            shape = layer.output_shape(shape)
        self.feature_shape = shape
        flat = int(np.prod(shape))
        if self.prediction_head.in_features != flat:
            raise InvalidModel(f"prediction head expects {self.prediction_head.in_features} features, backbone gives {flat}")
        if self.uncertainty_head is not None:
            pooled = shape[0] if (self.uncertainty_pool and len(shape) == 3) else flat
            if self.uncertainty_head.in_features != pooled:
                raise InvalidModel(f"uncertainty head expects {self.uncertainty_head.in_features} features, got {pooled}")
            if self.uncertainty_head.out_features < 1:
                raise InvalidModel("uncertainty head needs at least one output")
        # binary layers whose input comes straight from a sign activation use the packed kernel
        prev_sign = False
        for layer in self.backbone:
            if isinstance(layer, (Linear, Conv2d)):
                layer.packed_input = prev_sign and layer.binary
                prev_sign = False
            elif isinstance(layer, SignActivation):
                prev_sign = True
            elif not isinstance(layer, Flatten):
                prev_sign = False

    @property
    def num_classes(self) -> int:
        return self.prediction_head.out_features

    @property
    def uncertainty_width(self) -> int:
        return self.uncertainty_head.out_features if self.uncertainty_head is not None else 0

    def named_layers(self) -> Iterator[tuple[str, Layer]]:
        for i, layer in enumerate(self.backbone):
            yield f"backbone.{i}", layer
        yield "prediction_head", self.prediction_head
        if self.uncertainty_head is not None:
            yield "uncertainty_head", self.uncertainty_head

    def named_parameters(self) -> Iterator[tuple[str, np.ndarray]]:
        for lname, layer in self.named_layers():
            for pname, p in layer.params.items():
                yield f"{lname}.{pname}", p

    def parameter_dict(self) -> dict[str, np.ndarray]:
        return dict(self.named_parameters())

    def layer(self, name: str) -> Layer:
        for lname, layer in self.named_layers():
            if lname == name:
                return layer
        raise KeyError(name)

    def sign_layer_names(self) -> list[str]:
        return [n for n, l in self.named_layers() if isinstance(l, SignActivation)]

    def describe(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "backbone": [l.describe() for l in self.backbone],
            "prediction_head": self.prediction_head.describe(),
            "uncertainty_head": None if self.uncertainty_head is None else self.uncertainty_head.describe(),
            "uncertainty_pool": self.uncertainty_pool,
            "uncertainty_width": self.uncertainty_width,
        }

    @classmethod
    def from_description(cls, d: dict) -> "DualHeadModel":
        uh = d["uncertainty_head"]
        return cls(tuple(d["input_shape"]), [layer_from_description(x) for x in d["backbone"]],
                   layer_from_description(d["prediction_head"]),
                   None if uh is None else layer_from_description(uh),
                   uncertainty_pool=d["uncertainty_pool"])

    def clone(self) -> "DualHeadModel":
        return copy.deepcopy(self)

    def astype(self, dtype) -> "DualHeadModel":
        m = self.clone()
        for _, layer in m.named_layers():
            for k in layer.params:
                layer.params[k] = layer.params[k].astype(dtype)
        return m

    def without_uncertainty_head(self) -> "DualHeadModel":
        m = self.clone()
        m.uncertainty_head = None
        return m

    # -- deployment ----------------------------------------------------------------
    def deploy(self) -> "DualHeadModel":
        for _, layer in self.named_layers():
            if isinstance(layer, (Linear, Conv2d)):
                layer.refresh_binary()
        self.deployed = True
        return self

    def refresh_binary(self):
        if self.deployed:
            self.deploy()

    def train_mode(self) -> "DualHeadModel":
        self.deployed = False
        for _, layer in self.named_layers():
            if isinstance(layer, (Linear, Conv2d)):
                layer.packed = None
        return self

    # -- passes --------------------------------------------------------------------
    def backbone_forward(self, x: np.ndarray, mode: str = "deploy", act_fault=None, keep: bool = False,
                         record: list | None = None) -> np.ndarray:
        if mode not in MODES:
            raise ValueError(f"unknown mode {mode!r}")
        if mode == "deploy" and not self.deployed:
            raise UninitializedModel("model is not deployed; call deploy() first")
        x = np.asarray(x)
        if x.shape == self.input_shape:
            x = x[None]
        if x.shape[1:] != self.input_shape:
            raise ShapeMismatch(f"input shape {x.shape[1:]} does not match model input {self.input_shape}")
        dtype = self.prediction_head.params["weight"].dtype
        h = x.astype(dtype, copy=False)
        if act_fault is not None:
            act_fault.begin(h.shape[0])
        for i, layer in enumerate(self.backbone):
            h = layer.forward(h, mode, keep)
            if isinstance(layer, SignActivation):
                if act_fault is not None:
                    h = act_fault.apply(f"backbone.{i}", h)
                if record is not None:
                    record.append(h)
        return h

    def heads_forward(self, feats: np.ndarray, mode: str = "deploy", keep: bool = False,
                      with_uncertainty: bool = True) -> tuple[np.ndarray, np.ndarray | None]:
        flat = feats.reshape(feats.shape[0], -1)
        logits = self.prediction_head.forward(flat, mode, keep)
        unc = None
        if with_uncertainty and self.uncertainty_head is not None:
            if self.uncertainty_pool and feats.ndim == 4:
                u_in = feats.mean(axis=(2, 3))
            else:
                u_in = flat
            unc = self.uncertainty_head.forward(u_in, mode, keep)
        return logits, unc

    def forward(self, x: np.ndarray, mode: str = "deploy", act_fault=None, keep: bool = False) -> ForwardRecord:
        acts: list = [] if mode != "deploy" else None
        feats = self.backbone_forward(x, mode, act_fault, keep, record=acts)
        logits, unc = self.heads_forward(feats, mode, keep)
        if mode == "deploy":
            return ForwardRecord(logits, unc)
        return ForwardRecord(logits, unc, features=feats, activations=acts)

    def zero_grad(self):
        for _, layer in self.named_layers():
            layer.zero_grad()

    def backward(self, grad_logits: np.ndarray | None = None, grad_uncertainty: np.ndarray | None = None,
                 through_backbone: bool = True) -> np.ndarray | None:
        """Accumulate parameter gradients from upstream gradients at the two heads."""
        g = None
        if grad_logits is not None:
            g = self.prediction_head.backward(grad_logits)
        if grad_uncertainty is not None and self.uncertainty_head is not None:
            gu = self.uncertainty_head.backward(grad_uncertainty)
            if self.uncertainty_pool and len(self.feature_shape) == 3:
                c, hh, ww = self.feature_shape
                gu = np.broadcast_to(gu[:, :, None, None] / (hh * ww), (gu.shape[0], c, hh, ww)).reshape(gu.shape[0], -1)
            g = gu if g is None else g + gu
        if g is None or not through_backbone:
            return None
        g = g.reshape((g.shape[0],) + tuple(self.feature_shape))
        for layer in reversed(self.backbone):
            g = layer.backward(g)
        return g


def forward_dual(m: DualHeadModel, x: np.ndarray, mode: str = "deploy", act_fault=None) -> ForwardRecord:
    return m.forward(x, mode=mode, act_fault=act_fault)


def fingerprint(r: ForwardRecord | np.ndarray) -> np.ndarray | float:
    """Maximum of the uncertainty-head output (per input when batched)."""
    u = r.uncertainty_output if isinstance(r, ForwardRecord) else np.asarray(r)
    if u is None or u.size == 0:
        raise InvalidModel("uncertainty output is empty")
    out = u.max(axis=-1)
    return out.item() if out.ndim == 0 else out


def max_logit_score(r: ForwardRecord | np.ndarray) -> np.ndarray | float:
    z = r.prediction_logits if isinstance(r, ForwardRecord) else np.asarray(r)
    out = z.max(axis=-1)
    return out.item() if out.ndim == 0 else out


def count_params(m: DualHeadModel) -> dict[str, int]:
    backbone = sum(p.size for l in m.backbone for p in l.params.values())
    pred = sum(p.size for p in m.prediction_head.params.values())
    unc = 0 if m.uncertainty_head is None else sum(p.size for p in m.uncertainty_head.params.values())
    return {"backbone": int(backbone), "prediction_head": int(pred), "uncertainty_head": int(unc),
            "total": int(backbone + pred + unc)}


def count_macs(m: DualHeadModel, input_shape: tuple[int, ...] | None = None) -> dict:
    shape = tuple(input_shape) if input_shape is not None else m.input_shape
    if shape != m.input_shape:
        raise ShapeMismatch(f"model built for {m.input_shape}, asked about {shape}")
    per_layer: dict[str, int] = {}
    for i, layer in enumerate(m.backbone):
        if isinstance(layer, Conv2d) and len(shape) == 3 and shape[0] != layer.in_ch:
            raise ShapeMismatch(f"backbone.{i}: channel mismatch")
        if isinstance(layer, (Linear, Conv2d)):
            per_layer[f"backbone.{i}"] = layer.macs(shape)
        shape = layer.output_shape(shape)
    per_layer["prediction_head"] = m.prediction_head.macs(shape)
    if m.uncertainty_head is not None:
        per_layer["uncertainty_head"] = m.uncertainty_head.macs(shape)
    backbone = sum(v for k, v in per_layer.items() if k.startswith("backbone"))
    return {"per_layer": per_layer, "backbone": backbone,
            "prediction_head": per_layer["prediction_head"],
            "uncertainty_head": per_layer.get("uncertainty_head", 0),
            "total": sum(per_layer.values())}


# -- reference topologies -----------------------------------------------------------

def desk_cnn(input_shape=(1, 16, 16), num_classes: int = 10, uncertainty_width: int = 16,
             channels: tuple[int, int] = (16, 32), hidden: int = 64, seed: int = 0,
             binary_features: bool = True, uncertainty_bias: bool = True) -> DualHeadModel:
    """Two binary convolutions and one binary linear layer, then both heads.

    The first convolution sees real-valued pixels; everything after it runs on
    ±1 activations.
    """
    rng = np.random.default_rng(seed)
    c_in, h, w = input_shape
    c1, c2 = channels
    backbone: list[Layer] = [
        Conv2d(c_in, c1, 3, pad=1, rng=rng), Scale(c1, 1 / np.sqrt(c_in * 9)), SignActivation(),
        Conv2d(c1, c2, 3, pad=1, rng=rng), Scale(c2, 1 / np.sqrt(c1 * 9)), SignActivation(),
        Flatten(),
        Linear(c2 * h * w, hidden, bias=False, binary=True, rng=rng), Scale(hidden, 1 / np.sqrt(c2 * h * w)),
    ]
    if binary_features:
        backbone.append(SignActivation())
    return DualHeadModel(input_shape, backbone, Linear(hidden, num_classes, rng=rng),
                         Linear(hidden, uncertainty_width, bias=uncertainty_bias, rng=rng) if uncertainty_width else None)


def binary_mlp(in_features: int, num_classes: int, hidden: tuple[int, ...] = (64, 64),
               uncertainty_width: int = 16, seed: int = 0) -> DualHeadModel:
    rng = np.random.default_rng(seed)
    backbone: list[Layer] = []
    prev = in_features
    for width in hidden:
        backbone += [Linear(prev, width, bias=False, binary=True, rng=rng),
                     Scale(width, 1 / np.sqrt(prev)), SignActivation()]
        prev = width
    return DualHeadModel((in_features,), backbone, Linear(prev, num_classes, rng=rng),
                         Linear(prev, uncertainty_width, rng=rng) if uncertainty_width else None)


TOPOLOGIES = {"desk_cnn": desk_cnn, "binary_mlp": binary_mlp}
