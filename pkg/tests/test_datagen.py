import numpy as np
import pytest

from reshqcnn.datagen import (
    DataSetDescriptor,
    corrupt,
    make_clean_pairs,
    make_noisy_pairs,
    make_target_unitary,
)
from reshqcnn.qmath import make_rng, unitarity_error


def same(p, q):
    return np.array_equal(p.input, q.input) and np.array_equal(p.target, q.target)


def test_target_unitary():
    v = make_target_unitary(1, make_rng(0))
    assert v.shape == (2, 2)
    assert unitarity_error(v) <= 1e-12
    assert np.array_equal(v, make_target_unitary(1, make_rng(0)))
    assert unitarity_error(make_target_unitary(3, make_rng(1))) <= 1e-12


def test_clean_pairs():
    rng = make_rng(1)
    for p in make_clean_pairs(np.eye(4), 5, rng):
        assert np.array_equal(p.input, p.target)
    v = make_target_unitary(2, rng)
    for p in make_clean_pairs(v, 20, rng):
        assert abs(np.linalg.norm(p.target) - 1) <= 1e-12
        assert abs(abs(np.vdot(p.target, v @ p.input)) - 1) <= 1e-12


def test_noisy_pairs_unrelated():
    rng = make_rng(2)
    v = make_target_unitary(1, rng)
    pairs = make_noisy_pairs(1, 1, 1000, rng)
    overlap = np.mean([abs(np.vdot(p.target, v @ p.input)) ** 2 for p in pairs])
    assert abs(overlap - 0.5) < 0.05
    for p in pairs:
        assert abs(np.linalg.norm(p.input) - 1) <= 1e-12
        assert abs(np.linalg.norm(p.target) - 1) <= 1e-12
    again = make_noisy_pairs(1, 1, 1000, make_rng(2))
    assert not same(pairs[0], again[0])  # rng already advanced by the unitary
    a, b = make_noisy_pairs(2, 1, 3, make_rng(5)), make_noisy_pairs(2, 1, 3, make_rng(5))
    assert all(same(x, y) for x, y in zip(a, b))
    assert a[0].input.shape == (4,) and a[0].target.shape == (2,)


def test_corrupt_counts():
    rng = make_rng(3)
    pairs = make_clean_pairs(make_target_unitary(2, rng), 30, rng)
    assert corrupt(pairs, 0, rng) == pairs
    out = corrupt(pairs, 5, rng)
    assert len(out) == 30
    assert sum(same(a, b) for a, b in zip(pairs, out)) == 25
    full = corrupt(pairs, 30, rng)
    assert not any(same(a, b) for a, b in zip(pairs, full))
    with pytest.raises(ValueError):
        corrupt(pairs, 31, rng)


def test_corrupt_subset_is_random():
    rng = make_rng(4)
    pairs = make_clean_pairs(make_target_unitary(1, rng), 10, rng)
    hit = np.zeros(10)
    for _ in range(400):
        out = corrupt(pairs, 3, rng)
        hit += [not same(a, b) for a, b in zip(pairs, out)]
    # each index replaced with probability 3/10
    assert np.all(np.abs(hit / 400 - 0.3) < 0.1)


def test_descriptor_deterministic():
    d = DataSetDescriptor(2, 2, 12, 4, seed=9)
    g1, t1, v1 = d.build()
    g2, t2, v2 = d.build()
    assert np.array_equal(v1, v2)
    assert all(same(a, b) for a, b in zip(t1, t2))
    assert sum(not same(a, b) for a, b in zip(g1, t1)) == 4


def test_descriptor_good_pairs_independent_of_noise():
    g0, t0, _ = DataSetDescriptor(2, 2, 12, 0, seed=9).build()
    g4, _, _ = DataSetDescriptor(2, 2, 12, 4, seed=9).build()
    assert all(same(a, b) for a, b in zip(g0, g4))
    assert all(same(a, b) for a, b in zip(g0, t0))


def test_heldout_disjoint_draws():
    d = DataSetDescriptor(2, 2, 6, 0, seed=1)
    good, _, v = d.build()
    held = d.heldout(v)
    assert len(held) == 6
    assert not any(same(a, b) for a, b in zip(good, held))
    for p in held:
        assert abs(abs(np.vdot(p.target, v @ p.input)) - 1) <= 1e-12


def test_descriptor_validation():
    with pytest.raises(ValueError):
        DataSetDescriptor(2, 2, 5, 6)
    with pytest.raises(ValueError):
        DataSetDescriptor(2, 1, 5)
