"""Token reducers: random drop (uniformity, order), adaptive average pooling
(block oracle), and the dispatch surface."""

import numpy as np
import pytest

from semtok.baselines import (
    KIND_AVG_POOL,
    KIND_GROUPING,
    KIND_IDENTITY,
    KIND_RANDOM_DROP,
    ReducerSpec,
    avg_pool,
    drop_indices,
    pooling_matrix,
    random_drop,
    random_drop_batch,
    reduce,
)
from semtok.grouping import MODE_EVAL, GroupingParams, group_forward
from semtok.tensor import Tensor


def tokens(rng, m, c=4):
    return Tensor(rng.standard_normal((m, c)))


# -- random drop -------------------------------------------------------------


def test_random_drop_keep_all_is_identity():
    rng = np.random.default_rng(0)
    x = tokens(rng, 8)
    out = random_drop(x, 8, seed=3)
    np.testing.assert_array_equal(out.data, x.data)


def test_random_drop_same_seed_same_subset():
    rng = np.random.default_rng(1)
    x = tokens(rng, 10)
    a = random_drop(x, 4, seed=7).data
    b = random_drop(x, 4, seed=7).data
    assert np.array_equal(a, b)


def test_random_drop_rows_are_ordered_subsequence():
    rng = np.random.default_rng(2)
    x = tokens(rng, 12)
    out = random_drop(x, 5, seed=9).data
    # each output row appears in the input, in increasing position order
    positions = []
    for row in out:
        matches = np.where((x.data == row).all(axis=1))[0]
        assert matches.size == 1
        positions.append(matches[0])
    assert positions == sorted(positions)


def test_random_drop_uniformity_monte_carlo():
    # M=8, keep 2: every index should appear with frequency 0.25 +/- 0.01
    m, keep, trials = 8, 2, 100_000
    counts = np.zeros(m)
    for seed in range(trials):
        counts[drop_indices(m, keep, seed)] += 1
    freq = counts / trials
    assert np.abs(freq - keep / m).max() < 0.01


def test_random_drop_too_many_rejected():
    rng = np.random.default_rng(3)
    with pytest.raises(ValueError):
        random_drop(tokens(rng, 4), 5, seed=0)


def test_random_drop_batch_per_element_seeds():
    rng = np.random.default_rng(4)
    x = Tensor(rng.standard_normal((3, 10, 4)))
    out = random_drop_batch(x, 4, seeds=[11, 12, 13]).data
    for b, seed in enumerate([11, 12, 13]):
        np.testing.assert_array_equal(out[b], random_drop(Tensor(x.data[b]), 4, seed).data)


# -- avg pool ----------------------------------------------------------------


def test_avg_pool_identity():
    rng = np.random.default_rng(5)
    x = tokens(rng, 16)
    np.testing.assert_allclose(avg_pool(x, 16).data, x.data, rtol=1e-12)


def test_avg_pool_single_bin_is_global_mean():
    rng = np.random.default_rng(6)
    x = tokens(rng, 4)
    out = avg_pool(x, 1).data
    np.testing.assert_allclose(out[0], x.data.mean(axis=0), rtol=1e-12)


def test_avg_pool_24x24_to_12x12_block_loop_oracle():
    rng = np.random.default_rng(7)
    s, t, c = 24, 12, 3
    x = Tensor(rng.standard_normal((s * s, c)))
    got = avg_pool(x, t * t).data
    grid = x.data.reshape(s, s, c)
    for i in range(t):
        for j in range(t):
            block = grid[2 * i : 2 * i + 2, 2 * j : 2 * j + 2].reshape(-1, c)
            np.testing.assert_allclose(got[i * t + j], block.mean(axis=0), rtol=1e-12)


def test_avg_pool_uneven_bins_follow_floor_ceil_rule():
    # 4x4 -> 3x3: bin i covers floor(i*4/3)..ceil((i+1)*4/3)
    mat = pooling_matrix(16, 9)
    row_bins = [(0, 2), (1, 3), (2, 4)]
    for i, (r0, r1) in enumerate(row_bins):
        for j, (c0, c1) in enumerate(row_bins):
            members = {r * 4 + c for r in range(r0, r1) for c in range(c0, c1)}
            nz = set(np.nonzero(mat[i * 3 + j])[0])
            assert nz == members
            np.testing.assert_allclose(mat[i * 3 + j, sorted(nz)], 1.0 / len(members))


def test_avg_pool_preserves_global_mean_when_even():
    rng = np.random.default_rng(8)
    x = tokens(rng, 64)
    out = avg_pool(x, 16).data
    assert abs(out.mean() - x.data.mean()) < 1e-6


def test_avg_pool_non_square_rejected():
    rng = np.random.default_rng(9)
    with pytest.raises(ValueError):
        avg_pool(tokens(rng, 12), 4)
    with pytest.raises(ValueError):
        avg_pool(tokens(rng, 16), 8)


# -- reducer dispatch -----------------------------------------------------------


def test_spec_validation():
    with pytest.raises(ValueError):
        ReducerSpec("nope", 4)
    with pytest.raises(ValueError):
        ReducerSpec(KIND_IDENTITY, 0)
    ReducerSpec(KIND_IDENTITY, 8).validate_for(8)
    with pytest.raises(ValueError):
        ReducerSpec(KIND_IDENTITY, 4).validate_for(8)
    with pytest.raises(ValueError):
        ReducerSpec(KIND_AVG_POOL, 4).validate_for(12)


def test_reduce_identity_unchanged():
    rng = np.random.default_rng(10)
    x = tokens(rng, 6)
    out = reduce(x, None, ReducerSpec(KIND_IDENTITY, 6))
    assert out is x


def test_reduce_random_drop_matches_direct_call():
    rng = np.random.default_rng(11)
    x = tokens(rng, 9)
    spec = ReducerSpec(KIND_RANDOM_DROP, 3, seed=7)
    np.testing.assert_array_equal(reduce(x, None, spec).data, random_drop(x, 3, 7).data)


def test_reduce_grouping_matches_group_forward():
    rng = np.random.default_rng(12)
    sem = Tensor(rng.standard_normal((4, 6)))
    img = Tensor(rng.standard_normal((16, 6)))
    params = GroupingParams.create(6, rng, dtype=np.float64)
    spec = ReducerSpec(KIND_GROUPING, 4, seed=5)
    got = reduce(img, sem, spec, params=params, mode=MODE_EVAL).data
    want = group_forward(sem, img, params, MODE_EVAL, seed=5).data
    np.testing.assert_array_equal(got, want)


def test_reduce_all_kinds_emit_target_token_count():
    rng = np.random.default_rng(13)
    img = Tensor(rng.standard_normal((16, 6)))
    sem = Tensor(rng.standard_normal((4, 6)))
    params = GroupingParams.create(6, rng, dtype=np.float64)
    cases = [
        (ReducerSpec(KIND_IDENTITY, 16), 16),
        (ReducerSpec(KIND_RANDOM_DROP, 5, seed=1), 5),
        (ReducerSpec(KIND_AVG_POOL, 4), 4),
        (ReducerSpec(KIND_GROUPING, 4, seed=1), 4),
    ]
    for spec, want in cases:
        out = reduce(img, sem, spec, params=params)
        assert out.shape == (want, 6)


def test_reduce_grouping_requires_params():
    rng = np.random.default_rng(14)
    img = Tensor(rng.standard_normal((16, 6)))
    with pytest.raises(ValueError):
        reduce(img, None, ReducerSpec(KIND_GROUPING, 4))
