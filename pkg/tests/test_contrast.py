import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contex.contrast import (
    EmbeddingBatch,
    SimilarityMatrix,
    build_masks,
    logsumexp,
    row_logsumexp,
    similarity,
)

from naive_reference import similarity_value


def adjacent_pairs(n):
    pairs = np.arange(n)
    pairs[0::2] += 1
    pairs[1::2] -= 1
    return pairs


def unit_rows(rng, n, d):
    z = rng.normal(size=(n, d))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


class TestBuildMasks:
    def test_two_classes(self):
        m = build_masks(np.array([0, 0, 1, 1]), np.array([1, 0, 3, 2]))
        assert set(np.flatnonzero(m.ctx_pos[0])) == {1}
        assert set(np.flatnonzero(m.ctx_neg[0])) == {2, 3}
        assert set(np.flatnonzero(m.self_neg[0])) == {2, 3}

    def test_single_class_degenerate_ctx_neg(self):
        m = build_masks(np.array([0, 0, 0, 0]), np.array([1, 0, 3, 2]))
        assert set(np.flatnonzero(m.ctx_pos[0])) == {1, 2, 3}
        assert not m.ctx_neg[0].any()

    def test_six_sample_enumeration(self):
        # enumerated by hand from the set definitions
        m = build_masks(np.array([0, 0, 1, 1, 0, 0]), np.array([1, 0, 3, 2, 5, 4]))
        assert set(np.flatnonzero(m.ctx_pos[0])) == {1, 4, 5}
        assert set(np.flatnonzero(m.ctx_neg[0])) == {2, 3}
        assert m.ctx_pos[0].sum() == 3 and m.ctx_neg[0].sum() == 2

    def test_label_pair_mismatch_names_index(self):
        with pytest.raises(ValueError, match="index 2"):
            build_masks(np.array([0, 0, 1, 0]), np.array([1, 0, 3, 2]))

    def test_rejects_fixed_point(self):
        with pytest.raises(ValueError, match="self-pairing"):
            build_masks(np.array([0, 0, 1, 1]), np.array([0, 1, 3, 2]))

    def test_rejects_non_involution(self):
        with pytest.raises(ValueError, match="involution"):
            build_masks(np.array([0, 0, 0, 0]), np.array([1, 2, 3, 0]))

    def test_self_pos_inside_ctx_pos_and_partition(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            n_orig = int(rng.integers(2, 9))
            labels = np.repeat(rng.integers(0, 4, size=n_orig), 2)
            pairs = adjacent_pairs(2 * n_orig)
            m = build_masks(labels, pairs)
            n = 2 * n_orig
            rows = np.arange(n)
            assert m.ctx_pos[rows, pairs].all()
            assert not np.logical_and(m.ctx_pos, m.ctx_neg).any()
            assert np.array_equal(m.ctx_pos | m.ctx_neg, m.all_others)
            assert np.array_equal(m.ctx_pos.sum(1) + m.ctx_neg.sum(1), np.full(n, n - 1))
            assert (m.ctx_pos.sum(axis=1) >= 1).all()
            assert not m.all_others[rows, rows].any()


@given(st.integers(2, 10), st.integers(0, 2**31 - 1))
@settings(max_examples=40, deadline=None)
def test_mask_partition_property(n_orig, seed):
    rng = np.random.default_rng(seed)
    labels = np.repeat(rng.integers(0, 5, size=n_orig), 2)
    pairs = adjacent_pairs(2 * n_orig)
    m = build_masks(labels, pairs)
    n = 2 * n_orig
    assert np.array_equal(m.ctx_pos | m.ctx_neg, m.all_others)
    expected_self_neg = m.all_others.copy()
    expected_self_neg[np.arange(n), pairs] = False
    assert np.array_equal(m.self_neg, expected_self_neg)


class TestSimilarity:
    def test_identical_rows(self):
        z = np.tile(np.array([1.0, 0.0, 0.0]), (4, 1))
        sim = similarity(EmbeddingBatch(z, adjacent_pairs(4)), tau=0.1)
        assert np.allclose(sim.s, 10.0)

    def test_orthogonal_rows(self):
        z = np.eye(4)
        sim = similarity(EmbeddingBatch(z, adjacent_pairs(4)), tau=0.1)
        assert np.allclose(np.diag(sim.s), 10.0)
        off = sim.s[~np.eye(4, dtype=bool)]
        assert np.allclose(off, 0.0)

    def test_matches_naive_double_loop(self):
        rng = np.random.default_rng(3)
        z = unit_rows(rng, 4, 8)
        sim = similarity(EmbeddingBatch(z, adjacent_pairs(4)), tau=0.37)
        oracle = np.array(similarity_value(z.tolist(), 0.37))
        assert np.max(np.abs(sim.s - oracle)) < 1e-12

    def test_symmetry_and_diagonal(self):
        rng = np.random.default_rng(11)
        z = unit_rows(rng, 10, 6)
        sim = similarity(EmbeddingBatch(z, adjacent_pairs(10)), tau=0.25)
        assert np.max(np.abs(sim.s - sim.s.T)) < 1e-9
        assert np.max(np.abs(np.diag(sim.s) - 1 / 0.25)) < 1e-6 / 0.25

    def test_rejects_nonpositive_tau(self):
        z = unit_rows(np.random.default_rng(0), 4, 4)
        with pytest.raises(ValueError, match="temperature"):
            similarity(EmbeddingBatch(z, adjacent_pairs(4)), tau=0.0)

    def test_rejects_unnormalized_rows(self):
        z = unit_rows(np.random.default_rng(0), 4, 4)
        z[2] *= 1.001
        with pytest.raises(ValueError, match="row 2"):
            similarity(EmbeddingBatch(z, adjacent_pairs(4)), tau=1.0)

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        z = unit_rows(rng, 8, 5)
        sim = similarity(EmbeddingBatch(z, adjacent_pairs(8)), tau=0.5)
        perm = rng.permutation(8)
        sim_p = similarity(
            EmbeddingBatch(z[perm], np.argsort(perm)[adjacent_pairs(8)[perm]]), tau=0.5
        )
        assert np.allclose(sim_p.s, sim.s[np.ix_(perm, perm)])


class TestLogSumExp:
    def test_two_zeros(self):
        assert logsumexp(np.array([0.0, 0.0])) == pytest.approx(math.log(2), abs=1e-12)

    def test_shift_invariance_no_overflow(self):
        assert logsumexp(np.array([1000.0, 1000.0])) == pytest.approx(
            1000.0 + math.log(2), abs=1e-9
        )

    def test_matches_extended_precision(self):
        import mpmath

        rng = np.random.default_rng(17)
        xs = rng.uniform(-50, 50, size=32)
        with mpmath.workdps(60):
            oracle = float(mpmath.log(mpmath.fsum(mpmath.exp(x) for x in xs)))
        assert abs(logsumexp(xs) - oracle) <= 1e-12 * abs(oracle)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            logsumexp(np.array([]))


@given(
    st.lists(st.floats(min_value=-1e4, max_value=1e4, allow_nan=False), min_size=1, max_size=64)
)
@settings(max_examples=200, deadline=None)
def test_lse_bracket_property(xs):
    # max(xs) <= lse(xs) <= max(xs) + log(len(xs))
    v = logsumexp(np.array(xs))
    lo = max(xs)
    hi = lo + math.log(len(xs))
    assert lo - 1e-9 <= v <= hi + 1e-9


def test_row_logsumexp_empty_rows_are_neg_inf():
    s = np.array([[0.0, 1.0], [2.0, 3.0]])
    mask = np.array([[False, False], [True, True]])
    out = row_logsumexp(s, mask)
    assert out[0] == -np.inf
    assert out[1] == pytest.approx(logsumexp(np.array([2.0, 3.0])))


def test_similarity_matrix_keeps_source_rows():
    rng = np.random.default_rng(2)
    z = unit_rows(rng, 4, 3)
    sim = similarity(EmbeddingBatch(z, adjacent_pairs(4)), tau=1.0)
    assert isinstance(sim, SimilarityMatrix)
    assert sim.z is not None and sim.z.shape == (4, 3)
