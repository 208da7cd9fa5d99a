import numpy as np
import pytest

from selftest_bnn.errors import InvalidConfig, InvalidSnapshot, InvalidSpec, InvalidState
from selftest_bnn.faults import (ActivationFaultHook, FaultSpec, dequantize, inject_weight_faults, quantize,
                                 realize_targets, restore, sample_fault_mask, snapshot)
from selftest_bnn.nn import DualHeadModel, Linear, binary_mlp, desk_cnn


def params(m):
    return {k: v.copy() for k, v in m.named_parameters()}


def same(a, b):
    return a.keys() == b.keys() and all(np.array_equal(a[k], b[k]) for k in a)


def test_mask_extremes_and_rate():
    assert not sample_fault_mask((50,), 0.0, 1).selected.any()
    assert sample_fault_mask((50,), 1.0, 1).selected.all()
    frac = sample_fault_mask((100_000,), 0.1, 42).selected.mean()
    assert abs(frac - 0.1) <= 0.01
    with pytest.raises(InvalidConfig):
        sample_fault_mask((3,), 1.5, 0)


def test_mask_deterministic():
    a = sample_fault_mask((7, 9), 0.3, 5).selected
    assert np.array_equal(a, sample_fault_mask((7, 9), 0.3, 5).selected)
    assert not np.array_equal(a, sample_fault_mask((7, 9), 0.3, 6).selected)


def test_spec_validation():
    with pytest.raises(InvalidSpec):
        FaultSpec("stuck_at", "weights", 0.1)
    with pytest.raises(InvalidSpec):
        FaultSpec("stuck_at", "weights", 0.1, k=2, target_state=4)
    with pytest.raises(InvalidConfig):
        FaultSpec("bit_flip", "weights", -0.1)
    with pytest.raises(InvalidConfig):
        FaultSpec.from_dict({"kind": "bit_flip", "site": "weights", "rate": 0.1, "sede": 3})
    spec = FaultSpec("bit_flip", "activations", 0.2, seed=4)
    assert FaultSpec.from_dict(spec.to_dict()) == spec


def _one_layer(w):
    lin = Linear(len(w), 1, bias=False, binary=True)
    lin.params["weight"][0] = w
    return DualHeadModel((len(w),), [lin], Linear(1, 2), Linear(1, 2)).deploy()


def test_stuck_at_plus_one():
    m = _one_layer([1.0, -1.0, 1.0])
    inject_weight_faults(m, FaultSpec("stuck_at", "weights", 1.0, target_state=1))
    assert m.backbone[0].params["weight"].tolist() == [[1.0, 1.0, 1.0]]


def test_bit_flip_negates_binary_weights():
    w = np.random.default_rng(0).choice([-1.0, 1.0], size=40)
    m = _one_layer(w)
    inject_weight_faults(m, FaultSpec("bit_flip", "weights", 1.0))
    assert np.array_equal(m.backbone[0].params["weight"][0], -w)


def test_packed_view_refreshed():
    m = desk_cnn(seed=0, binary_features=True).deploy()
    inject_weight_faults(m, FaultSpec("bit_flip", "weights", 0.3, seed=2))
    fresh = m.clone().deploy()
    for (_, a), (_, b) in zip(m.named_layers(), fresh.named_layers()):
        if getattr(a, "binary", False):
            assert np.array_equal(a.packed, b.packed)


def test_rate_zero_is_identity():
    m = desk_cnn(seed=1).deploy()
    before = params(m)
    for spec in (FaultSpec("bit_flip", "weights", 0.0, layers="all"),
                 FaultSpec("stuck_at", "weights", 0.0, target_state=0, layers="all")):
        inject_weight_faults(m, spec)
        assert same(before, params(m))


def test_stuck_at_rate_one_constant():
    m = binary_mlp(6, 2, seed=0).deploy()
    inject_weight_faults(m, FaultSpec("stuck_at", "weights", 1.0, target_state=0))
    for name, layer in m.named_layers():
        if getattr(layer, "binary", False):
            assert np.all(layer.params["weight"] == -1), name


def stored(m):
    # what a deployed model keeps in memory: sign bits for binary layers, values otherwise
    out = {}
    for name, layer in m.named_layers():
        for k, v in layer.params.items():
            out[f"{name}.{k}"] = np.where(v >= 0, 1.0, -1.0) if getattr(layer, "binary", False) else v.copy()
    return out


def test_bit_flip_involution():
    m = binary_mlp(6, 2, seed=0).deploy()
    before = stored(m)
    spec = FaultSpec("bit_flip", "weights", 0.4, seed=9, layers="all")
    inject_weight_faults(m, spec)
    assert not same(before, stored(m))
    inject_weight_faults(m, spec)
    assert same(before, stored(m))


def test_selector_scope():
    m = binary_mlp(6, 2, seed=0).deploy()
    before = params(m)
    inject_weight_faults(m, FaultSpec("bit_flip", "weights", 1.0, layers=["backbone.3"]))
    after = params(m)
    changed = {k for k in before if not np.array_equal(before[k], after[k])}
    assert changed == {"backbone.3.weight"}
    with pytest.raises(InvalidSpec):
        inject_weight_faults(m, FaultSpec("bit_flip", "weights", 1.0, layers=["nope"]))


def test_backbone_selector_leaves_heads():
    m = binary_mlp(6, 2, seed=0).deploy()
    before = params(m)
    inject_weight_faults(m, FaultSpec("bit_flip", "weights", 1.0, layers="backbone"))
    after = params(m)
    assert all(np.array_equal(before[k], after[k]) for k in before if "head" in k)


def test_real_head_sign_bit_faults():
    m = binary_mlp(6, 2, seed=0).deploy()
    w = m.prediction_head.params["weight"].copy()
    inject_weight_faults(m, FaultSpec("bit_flip", "weights", 1.0, layers=["prediction_head"]))
    assert np.array_equal(m.prediction_head.params["weight"], -w)
    inject_weight_faults(m, FaultSpec("stuck_at", "weights", 1.0, target_state=1, layers=["prediction_head"]))
    assert np.array_equal(m.prediction_head.params["weight"], np.abs(w))


def test_requires_deployed_model():
    with pytest.raises(InvalidState):
        inject_weight_faults(binary_mlp(4, 2), FaultSpec("bit_flip", "weights", 0.1))
    with pytest.raises(InvalidSpec):
        inject_weight_faults(binary_mlp(4, 2).deploy(), FaultSpec("bit_flip", "activations", 0.1))


def test_codec_round_trip():
    for k in (2, 3, 4):
        states = np.arange(2**k)
        assert np.array_equal(quantize(dequantize(states, k, 0.7), k, 0.7), states)
    assert dequantize(np.array([0, 1]), 1, 1.0).tolist() == [-1.0, 1.0]


def test_multibit_flip_moves_to_other_state():
    states = np.random.default_rng(0).integers(0, 8, size=2000)
    spec = FaultSpec("bit_flip", "weights", 1.0, k=3)
    mask = sample_fault_mask(states.shape, 1.0, 3)
    new = realize_targets(states, mask, spec, 3)
    assert np.all(new != states)
    assert new.min() >= 0 and new.max() <= 7
    # every other state is reachable, roughly uniformly
    counts = np.bincount((new - states) % 8, minlength=8)
    assert counts[0] == 0 and counts[1:].min() > 200


def test_multibit_stuck_at_on_real_head():
    m = binary_mlp(6, 2, seed=0).deploy()
    w = m.prediction_head.params["weight"]
    scale = float(np.abs(w).max())
    inject_weight_faults(m, FaultSpec("stuck_at", "weights", 1.0, k=2, target_state=3, layers=["prediction_head"]))
    assert np.allclose(m.prediction_head.params["weight"], scale)


def test_restore_exact_and_idempotent():
    m = desk_cnn(seed=5, binary_features=True).deploy()
    before = params(m)
    x = np.random.default_rng(0).uniform(size=(20, 1, 16, 16)).astype(np.float32)
    golden_out = m.forward(x).prediction_logits
    _, snap, _ = inject_weight_faults(m, FaultSpec("bit_flip", "weights", 1.0, layers="all"))
    restore(m, snap)
    assert same(before, params(m))
    restore(m, snap)
    assert same(before, params(m))
    assert np.array_equal(golden_out, m.forward(x).prediction_logits)


def test_restore_rejects_foreign_snapshot():
    snap = snapshot(binary_mlp(4, 2).deploy())
    with pytest.raises(InvalidSnapshot):
        restore(binary_mlp(5, 2).deploy(), snap)


# -- activations ------------------------------------------------------------------------

def test_activation_rate_zero_identity():
    m = desk_cnn(seed=2, binary_features=True).deploy()
    x = np.random.default_rng(1).uniform(size=(8, 1, 16, 16)).astype(np.float32)
    hook = ActivationFaultHook(FaultSpec("bit_flip", "activations", 0.0), m)
    a, b = m.forward(x), m.forward(x, act_fault=hook)
    assert np.array_equal(a.prediction_logits, b.prediction_logits)
    assert np.array_equal(a.uncertainty_output, b.uncertainty_output)


def test_activation_full_flip_negates(trained_mlp):
    m, held, _ = trained_mlp
    x = held.task_split.x
    hook = ActivationFaultHook(FaultSpec("bit_flip", "activations", 1.0), m, keep_masks=True)
    clean, flipped = [], []
    m.backbone_forward(x, record=clean)
    m.backbone_forward(x, act_fault=hook, record=flipped)
    assert set(hook.masks) == set(m.sign_layer_names())
    assert all(mask.all() for mask in hook.masks.values())
    # the first sign output is negated outright
    assert np.array_equal(flipped[0], -clean[0])
    # negating only the features the heads see changes predictions on a trained model
    last = ActivationFaultHook(FaultSpec("bit_flip", "activations", 1.0, layers=[m.sign_layer_names()[-1]]), m)
    feats = m.backbone_forward(x)
    assert np.array_equal(m.backbone_forward(x, act_fault=last), -feats)
    golden = m.forward(x).prediction_logits.argmax(1)
    faulty = m.forward(x, act_fault=last).prediction_logits.argmax(1)
    assert (golden != faulty).mean() > 0.3


def test_activation_masks_fresh_per_pass_and_replayable():
    m = desk_cnn(seed=2, binary_features=True).deploy()
    x = np.random.default_rng(1).uniform(size=(1, 1, 16, 16)).astype(np.float32)
    spec = FaultSpec("bit_flip", "activations", 0.5, seed=77)
    hook = ActivationFaultHook(spec, m, keep_masks=True)
    m.forward(x, act_fault=hook)
    first = {k: v.copy() for k, v in hook.masks.items()}
    m.forward(x, act_fault=hook)
    second = {k: v.copy() for k, v in hook.masks.items()}
    assert all(not np.array_equal(first[k], second[k]) for k in first)
    replay = ActivationFaultHook(spec, m, keep_masks=True)
    m.forward(x, act_fault=replay)
    assert all(np.array_equal(first[k], replay.masks[k]) for k in first)
    # batching does not change which pass sees which mask
    batched = ActivationFaultHook(spec, m, keep_masks=True)
    m.forward(np.concatenate([x, x]), act_fault=batched)
    for k in first:
        assert np.array_equal(batched.masks[k][1:], second[k])


def test_activation_faults_deterministic():
    m = desk_cnn(seed=3, binary_features=True).deploy()
    x = np.random.default_rng(2).uniform(size=(16, 1, 16, 16)).astype(np.float32)
    spec = FaultSpec("stuck_at", "activations", 0.2, target_state=0, seed=5)
    a = m.forward(x, act_fault=ActivationFaultHook(spec, m)).uncertainty_output
    b = m.forward(x, act_fault=ActivationFaultHook(spec, m)).uncertainty_output
    assert np.array_equal(a, b)


def test_activation_hook_rejects_multibit():
    with pytest.raises(InvalidSpec):
        ActivationFaultHook(FaultSpec("bit_flip", "activations", 0.1, k=2))
