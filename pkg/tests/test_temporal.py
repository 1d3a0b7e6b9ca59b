import numpy as np
import pytest
from hypothesis import given, settings, strategies as hst

from spiketempo import (
    ConfigError,
    ShapeError,
    TrConfig,
    max_pool_time,
    nar_align,
    nar_residual,
    tr_apply,
    tr_no_overlap,
    tr_oracle,
    tr_overlap,
)
from spiketempo.temporal import grouped_backward, grouped_forward_tape, grouped_t_len


def raster(rows):
    """(T, N) int rows -> (T, 1, N) array."""
    arr = np.asarray(rows, dtype=np.float64)
    return arr[:, None, :]


def random_binary(rng, t_len, batch, units, density=0.3):
    return (rng.random((t_len, batch, units)) < density).astype(np.float64)


# -------------------------------------------------------------- tr_overlap

def test_overlap_len2_stride1_shape_anchor():
    rng = np.random.default_rng(0)
    x = random_binary(rng, 5, 1, 3)
    assert tr_overlap(x, 2, 1).shape[0] == 4  # T -> T-1


def test_overlap_single_group_is_or():
    x = raster([[0, 1], [1, 1]])
    np.testing.assert_array_equal(tr_overlap(x, 2, 1), raster([[1, 1]]))


def test_overlap_trailing_spike_lands_in_last_group():
    x = np.zeros((7, 1, 2))
    x[6, 0, 0] = 1.0
    out = tr_overlap(x, 3, 2)
    assert out.shape[0] == 3  # starts 0, 2, 4; (7-3) % 2 == 0 so no extra frame
    assert out[2, 0, 0] == 1.0
    assert out[:2].sum() == 0.0
    np.testing.assert_array_equal(out, tr_oracle(x, TrConfig("overlap", 3, 2)))


def test_overlap_remainder_appends_raw_last_step():
    x = np.zeros((8, 1, 2))
    x[7, 0, 1] = 1.0
    x[6, 0, 0] = 1.0  # not in any full window start beyond t=4..6
    out = tr_overlap(x, 3, 2)
    # starts 0, 2, 4 -> 3 full frames; (8-3) % 2 == 1 -> extra frame = x[7]
    assert out.shape[0] == 4
    np.testing.assert_array_equal(out[3], x[7])


def test_overlap_len1_stride1_is_identity():
    rng = np.random.default_rng(1)
    x = random_binary(rng, 6, 2, 4)
    np.testing.assert_array_equal(tr_overlap(x, 1, 1), x)


# ----------------------------------------------------------- tr_no_overlap

def test_no_overlap_even_split_shape_anchor():
    rng = np.random.default_rng(2)
    x = random_binary(rng, 6, 1, 3)
    assert tr_no_overlap(x, 2, 1).shape[0] == 3  # even T -> T/2


def test_no_overlap_remainder_frame():
    x = np.zeros((8, 1, 1))
    x[7, 0, 0] = 1.0
    out = tr_no_overlap(x, 3, 1)
    # full windows [0,3) and [3,6); t=6,7 remain -> frame = x[7]
    assert out.shape[0] == 3
    np.testing.assert_array_equal(out[2], x[7])


def test_no_overlap_single_group():
    x = raster([[0, 1], [1, 0], [0, 0]])
    np.testing.assert_array_equal(tr_no_overlap(x, 3, 1), raster([[1, 1]]))


def test_no_overlap_stride_skips_between_groups():
    # step = len + stride - 1 = 4: windows [0,3) and [4,7); t=3 is skipped
    x = np.zeros((7, 1, 1))
    x[3, 0, 0] = 1.0
    out = tr_no_overlap(x, 3, 2)
    assert out.shape[0] == 2
    assert out.sum() == 0.0


# ------------------------------------------------------------- the oracle

@pytest.mark.parametrize("variant", ["overlap", "no_overlap"])
def test_operator_matches_oracle_randomized(variant):
    rng = np.random.default_rng(42)
    for _ in range(200):
        length = int(rng.integers(1, 9))
        stride = int(rng.integers(1, 5))
        t_len = int(rng.integers(length, 65))
        batch = int(rng.integers(1, 5))
        units = int(rng.integers(1, 17))
        x = random_binary(rng, t_len, batch, units)
        cfg = TrConfig(variant, length, stride)
        np.testing.assert_array_equal(tr_apply(x, cfg), tr_oracle(x, cfg))


def test_oracle_or_equals_max_on_binary():
    rng = np.random.default_rng(3)
    x = random_binary(rng, 12, 2, 5)
    out = tr_overlap(x, 3, 2)
    ors = np.stack(
        [np.logical_or.reduce(x[s : s + 3].astype(bool), axis=0) for s in (0, 2, 4, 6, 8)]
    ).astype(np.float64)
    # (12-3) % 2 == 1 -> one extra frame
    expected = np.concatenate([ors, x[11:12]], axis=0)
    np.testing.assert_array_equal(out, expected)


def test_zero_raster_maps_to_zero_of_predicted_length():
    for variant in ("overlap", "no_overlap"):
        x = np.zeros((13, 2, 3))
        out = tr_apply(x, TrConfig(variant, 4, 3))
        assert out.shape[0] == grouped_t_len(13, 4, 3, variant)
        assert not out.any()


# ------------------------------------------------------------- shape laws

def test_overlap_shape_law_exhaustive():
    for length in range(1, 9):
        for stride in range(1, 5):
            for t_len in range(length, 65):
                x = np.zeros((t_len, 1, 2))
                full = (t_len - length) // stride + 1
                expected = full + int((t_len - length) % stride != 0)
                assert tr_overlap(x, length, stride).shape[0] == expected


def test_no_overlap_stride1_shape_law():
    for length in range(1, 9):
        for t_len in range(length, 65):
            x = np.zeros((t_len, 1, 1))
            expected = t_len // length + int(t_len % length != 0)
            assert tr_no_overlap(x, length, 1).shape[0] == expected


@settings(max_examples=60, deadline=None)
@given(
    t_len=hst.integers(8, 40),
    length=hst.integers(1, 8),
    stride=hst.integers(1, 4),
    variant=hst.sampled_from(["overlap", "no_overlap"]),
    seed=hst.integers(0, 2**20),
)
def test_unit_permutation_commutes(t_len, length, stride, variant, seed):
    rng = np.random.default_rng(seed)
    x = random_binary(rng, t_len, 2, 6)
    perm = rng.permutation(6)
    cfg = TrConfig(variant, length, stride)
    np.testing.assert_array_equal(tr_apply(x[:, :, perm], cfg), tr_apply(x, cfg)[:, :, perm])


@settings(max_examples=60, deadline=None)
@given(
    t_len=hst.integers(6, 32),
    length=hst.integers(1, 6),
    stride=hst.integers(1, 4),
    variant=hst.sampled_from(["overlap", "no_overlap"]),
    seed=hst.integers(0, 2**20),
)
def test_grouping_is_monotone(t_len, length, stride, variant, seed):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, size=(t_len, 1, 4))
    bumped = x.copy()
    t, n = rng.integers(t_len), rng.integers(4)
    bumped[t, 0, n] += rng.uniform(0, 2)
    cfg = TrConfig(variant, length, stride)
    assert (tr_apply(bumped, cfg) >= tr_apply(x, cfg)).all()


def test_strong_spike_propagates_through_max():
    x = np.zeros((6, 1, 2))
    x[2, 0, 1] = 2.0
    x[3, 0, 1] = 1.0
    for variant in ("overlap", "no_overlap"):
        out = tr_apply(x, TrConfig(variant, 2, 1))
        assert out.max() == 2.0


# ------------------------------------------------------------------ errors

def test_group_length_exceeding_time_axis_is_shape_error():
    x = np.zeros((3, 1, 1))
    with pytest.raises(ShapeError):
        tr_overlap(x, 4, 1)
    with pytest.raises(ShapeError):
        tr_no_overlap(x, 4, 1)


def test_bad_length_or_stride_is_config_error():
    x = np.zeros((3, 1, 1))
    with pytest.raises(ConfigError):
        tr_overlap(x, 0, 1)
    with pytest.raises(ConfigError):
        tr_no_overlap(x, 2, 0)
    with pytest.raises(ConfigError):
        TrConfig("overlap", 0, 1)
    with pytest.raises(ConfigError):
        TrConfig("sideways", 2, 1)


# ----------------------------------------------------------------- pooling

def test_max_pool_truncates_remainder():
    x = np.zeros((8, 1, 1))
    x[7, 0, 0] = 1.0
    out = max_pool_time(x, 3, 2)
    # starts 0, 2, 4 cover up to t=6; the trailing step is dropped
    assert out.shape[0] == 3
    assert out.sum() == 0.0


def test_max_pool_matches_overlap_when_divisible():
    rng = np.random.default_rng(9)
    x = random_binary(rng, 9, 2, 3)
    np.testing.assert_array_equal(max_pool_time(x, 3, 2), tr_overlap(x, 3, 2))


# ---------------------------------------------------- tape + backward path

@pytest.mark.parametrize("op", ["overlap", "no_overlap", "pool"])
def test_tape_forward_matches_operator(op):
    rng = np.random.default_rng(11)
    for _ in range(50):
        t_len = int(rng.integers(4, 30))
        length = int(rng.integers(1, min(6, t_len) + 1))
        stride = int(rng.integers(1, 4))
        x = rng.uniform(0, 1, size=(t_len, 2, 3))
        out, idx = grouped_forward_tape(x, op, length, stride)
        if op == "pool":
            expected = max_pool_time(x, length, stride)
        else:
            expected = tr_apply(x, TrConfig(op, length, stride))
        np.testing.assert_array_equal(out, expected)
        assert idx.shape == out.shape
        # the recorded index really points at the producing element
        b_idx = np.arange(2)[None, :, None]
        n_idx = np.arange(3)[None, None, :]
        np.testing.assert_array_equal(x[idx, b_idx, n_idx], out)


def test_backward_routes_to_first_argmax():
    x = raster([[1.0], [1.0], [0.0], [1.0]])
    out, idx = grouped_forward_tape(x, "overlap", 2, 2)
    g = np.ones_like(out)
    g_in = grouped_backward(g, idx, x.shape)
    # window [0,2) ties -> first index 0; window [2,4) max at t=3
    np.testing.assert_array_equal(g_in[:, 0, 0], [1.0, 0.0, 0.0, 1.0])


# --------------------------------------------------------------- residuals

def test_align_equal_lengths_returns_inputs_unchanged():
    a = np.ones((4, 1, 2))
    b = np.zeros((4, 1, 2))
    a2, b2 = nar_align(a, b)
    assert a2 is a and b2 is b


def test_align_pads_shorter_on_the_right_with_zeros():
    rng = np.random.default_rng(12)
    a = random_binary(rng, 3, 2, 4)
    b = random_binary(rng, 5, 2, 4)
    a2, b2 = nar_align(a, b)
    assert a2.shape[0] == b2.shape[0] == 5
    assert b2 is b
    np.testing.assert_array_equal(a2[:3], a)  # prefix untouched
    assert not a2[3:].any()


def test_align_is_symmetric_in_direction():
    a = np.ones((6, 1, 2))
    b = np.ones((2, 1, 2))
    a2, b2 = nar_align(a, b)
    assert a2 is a
    assert b2.shape[0] == 6 and not b2[2:].any()


def test_align_rejects_mismatched_units():
    with pytest.raises(ShapeError):
        nar_align(np.zeros((3, 1, 2)), np.zeros((3, 1, 3)))
    with pytest.raises(ShapeError):
        nar_align(np.zeros((3, 2, 2)), np.zeros((3, 1, 2)))


def test_residual_coincident_spikes_become_two():
    x = np.ones((1, 1, 1))
    d = np.ones((1, 1, 1))
    np.testing.assert_array_equal(nar_residual(x, d), np.full((1, 1, 1), 2.0))


def test_residual_zero_input_is_identity_on_other_branch():
    rng = np.random.default_rng(13)
    d = random_binary(rng, 7, 2, 3)
    x = np.zeros((4, 2, 3))
    np.testing.assert_array_equal(nar_residual(x, d), d)


def test_residual_piecewise_definition():
    rng = np.random.default_rng(14)
    x = random_binary(rng, 3, 1, 4)
    d = random_binary(rng, 5, 1, 4)
    y = nar_residual(x, d)
    np.testing.assert_array_equal(y[:3], x + d[:3])
    np.testing.assert_array_equal(y[3:], d[3:])


def test_residual_of_binary_inputs_stays_in_0_1_2():
    rng = np.random.default_rng(15)
    for _ in range(20):
        ta, tb = rng.integers(1, 10, size=2)
        x = random_binary(rng, int(ta), 2, 5, density=0.5)
        d = random_binary(rng, int(tb), 2, 5, density=0.5)
        y = nar_residual(x, d)
        assert y.min() >= 0.0 and y.max() <= 2.0


def test_residual_equal_lengths_is_commutative_addition():
    rng = np.random.default_rng(16)
    x = random_binary(rng, 6, 1, 3)
    d = random_binary(rng, 6, 1, 3)
    np.testing.assert_array_equal(nar_residual(x, d), nar_residual(d, x))
    np.testing.assert_array_equal(nar_residual(x, d), x + d)
