from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from selftest_bnn.data import make_synthetic
from selftest_bnn.errors import EmptyBatch, EmptyDataset, InvalidConfig, InvalidState
from selftest_bnn.nn import Linear, binary_mlp, fingerprint
from selftest_bnn.training import (Dataset, TrainConfig, accuracy, fingerprint_loss, fingerprint_loss_grad,
                                   split_dataset, train_task, train_two_stage, train_uncertainty_head)


def test_loss_examples():
    u = np.array([[0.2, 1.0, 0.4], [1.0, -3.0, 0.5]])
    assert fingerprint_loss(u, 2.5) == 0.0
    assert fingerprint_loss(np.array([[0.5, 0.1], [1.0, 0.2]]), 1.0) == 0.125


def test_loss_empty_batch():
    with pytest.raises(EmptyBatch):
        fingerprint_loss(np.zeros((0, 4)))


def test_loss_hand_evaluated_batches():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n, u_width = rng.integers(1, 6), rng.integers(1, 6)
        u = rng.normal(size=(n, u_width))
        alpha = float(rng.uniform(0.1, 3))
        # exact rational evaluation, rounded once
        ref = float(Fraction(alpha) * sum((1 - Fraction(max(row))) ** 2 for row in u.tolist()) / n)
        got = fingerprint_loss(u, alpha)
        assert abs(got - ref) <= np.spacing(ref)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.floats(0.01, 100), st.integers(0, 2**31))
def test_loss_homogeneous_and_permutation_invariant(n, w, c, seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(n, w))
    base = fingerprint_loss(u, 1.0)
    assert abs(fingerprint_loss(u, c) - c * base) <= np.spacing(c * base)
    perm = rng.permutation(n)
    assert abs(fingerprint_loss(u[perm], 1.0) - base) <= np.spacing(base)


def test_gradient_routes_to_first_argmax():
    u = np.array([[0.3, 0.7, 0.7], [2.0, 0.0, 1.0]])
    _, g = fingerprint_loss_grad(u, 1.0)
    assert np.allclose(g, [[0.0, -0.3, 0.0], [1.0, 0.0, 0.0]], rtol=0, atol=1e-15)
    assert g[0, 2] == 0.0


def test_loss_gradient_vs_finite_differences_head_weights():
    rng = np.random.default_rng(1)
    head = Linear(5, 4, rng=rng)
    head.params["weight"] = head.params["weight"].astype(np.float64)
    head.params["bias"] = head.params["bias"].astype(np.float64)
    x = rng.normal(size=(6, 5))

    def loss():
        return fingerprint_loss(head.forward(x, "train", False), 0.8)

    head.zero_grad()
    _, g = fingerprint_loss_grad(head.forward(x, "train", True), 0.8)
    head.backward(g)
    w = head.params["weight"]
    for idx in np.ndindex(w.shape):
        old = w[idx]
        w[idx] = old + 1e-4
        up = loss()
        w[idx] = old - 1e-4
        down = loss()
        w[idx] = old
        fd = (up - down) / 2e-4
        an = head.grads["weight"][idx]
        assert abs(fd - an) <= 1e-3 * max(abs(fd), abs(an), 1e-8)


def test_split_sizes_and_determinism():
    d = Dataset(np.arange(100.0)[:, None], np.zeros(100))
    s = split_dataset(d, 0.8, 3)
    assert (len(s.task_split), len(s.fingerprint_split)) == (80, 20)
    again = split_dataset(d, 0.8, 3)
    assert np.array_equal(s.task_indices, again.task_indices)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 500), st.integers(0, 2**63))
def test_split_disjoint_and_exhaustive(n, seed):
    d = Dataset(np.arange(n, dtype=float)[:, None], np.zeros(n))
    s = split_dataset(d, 0.8, seed)
    a, b = set(s.task_indices.tolist()), set(s.fingerprint_indices.tolist())
    assert not a & b and a | b == set(range(n))
    assert len(a) == int(np.floor(0.8 * n))


def test_split_errors():
    with pytest.raises(EmptyDataset):
        split_dataset(Dataset(np.zeros((0, 1)), np.zeros(0)))
    with pytest.raises(InvalidConfig):
        split_dataset(Dataset(np.zeros((5, 1)), np.zeros(5)), 1.0)


def test_config_validation():
    with pytest.raises(InvalidConfig):
        TrainConfig(alpha=0)
    with pytest.raises(InvalidConfig):
        TrainConfig(batch_size=0)
    with pytest.raises(InvalidConfig):
        TrainConfig(optimizer="rmsprop")


def test_separable_blobs_reach_high_accuracy():
    data = make_synthetic("blobs", 300, classes=2, noise=0.0, seed=2, shape=(8,))
    m = binary_mlp(8, 2, hidden=(16,), seed=0)
    split = split_dataset(data, 0.8, 1)
    m, hist = train_task(m, split, TrainConfig(epochs_stage1=5, learning_rate=5e-3))
    assert accuracy(m, split.task_split) >= 0.95
    assert len(hist) == 5


def test_zero_epochs_leaves_model_unchanged():
    data = make_synthetic("blobs", 50, classes=2, seed=0, shape=(4,))
    m = binary_mlp(4, 2, seed=0)
    before = {k: v.copy() for k, v in m.named_parameters()}
    train_task(m, split_dataset(data), TrainConfig(epochs_stage1=0))
    assert all(np.array_equal(before[k], v) for k, v in m.named_parameters())


def test_training_is_deterministic():
    data = make_synthetic("blobs", 120, classes=3, seed=4, shape=(6,))
    cfg = TrainConfig(epochs_stage1=2, epochs_stage2=3, seed=9)
    runs = [train_two_stage(binary_mlp(6, 3, seed=1), data, cfg)[0] for _ in range(2)]
    for (k, a), (_, b) in zip(runs[0].named_parameters(), runs[1].named_parameters()):
        assert np.array_equal(a, b), k


def test_stage2_requires_stage1():
    data = make_synthetic("blobs", 40, classes=2, seed=0, shape=(4,))
    with pytest.raises(InvalidState):
        train_uncertainty_head(binary_mlp(4, 2), split_dataset(data), TrainConfig())


def test_stage2_freezes_everything_else_and_descends():
    data = make_synthetic("blobs", 200, classes=3, noise=0.5, seed=6, shape=(10,))
    m = binary_mlp(10, 3, seed=2)
    split = split_dataset(data, 0.8, 0)
    m, _ = train_task(m, split, TrainConfig(epochs_stage1=3))
    frozen = {k: v.copy() for k, v in m.named_parameters() if not k.startswith("uncertainty_head")}
    head_before = m.uncertainty_head.params["weight"].copy()
    m, hist = train_uncertainty_head(m, split, TrainConfig(epochs_stage2=20, learning_rate_stage2=1e-2))
    for k, v in m.named_parameters():
        if k in frozen:
            assert np.array_equal(frozen[k], v), k
    assert not np.array_equal(head_before, m.uncertainty_head.params["weight"])
    assert hist[-1]["loss"] < hist[0]["loss"]


def test_fingerprints_centered_on_small_model(trained_mlp):
    m, held, _ = trained_mlp
    f = fingerprint(m.forward(held.task_split.x))
    assert abs(np.median(f) - 1) <= 0.15
