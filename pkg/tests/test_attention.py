import math

import numpy as np
import pytest

from orthopos import (
    AttentionBatch,
    DecayConfig,
    DecayForm,
    DimensionError,
    GeneratorParam,
    InvalidPositionTensor,
    StructureMismatch,
    StructureSpec,
    apply_distance_decay,
    distance_matrix,
    interpretation_from_params,
    modulated_attention,
    modulated_scores_fast,
    modulated_scores_naive,
    permutation_invariance_check,
    position_matrices,
    random_interpretation,
    random_params,
    relative_tensor,
    score_gradient,
    vanilla_attention,
)

SEQ = StructureSpec.sequence()


def make_batch(rng, m, n, d):
    return AttentionBatch(
        rng.standard_normal((m, d)),
        rng.standard_normal((n, d)),
        rng.standard_normal((n, d)),
        rng.standard_normal((d, d)),
        rng.standard_normal((d, d)),
        rng.standard_normal((d, d)),
    )


def rotation2(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@pytest.fixture
def rng():
    return np.random.default_rng(2024)


class TestVanilla:
    def test_single_pair_ignores_scores(self, rng):
        b = make_batch(rng, 1, 1, 4)
        out = vanilla_attention(b)
        assert np.abs(out - b.keys @ b.phi_v).max() < 1e-12

    def test_identical_keys_uniform_weights(self, rng):
        d, n = 4, 5
        key = rng.standard_normal(d)
        b = AttentionBatch(
            rng.standard_normal((3, d)),
            np.tile(key, (n, 1)),
            rng.standard_normal((n, d)),
            rng.standard_normal((d, d)),
            rng.standard_normal((d, d)),
            rng.standard_normal((d, d)),
        )
        out = vanilla_attention(b)
        expected = (b.keys @ b.phi_v).mean(axis=0)
        assert np.abs(out - expected).max() < 1e-12

    def test_matches_three_step_oracle(self, rng):
        b = make_batch(rng, 3, 4, 4)
        # Oracle: project, score, normalize, mix, spelled out row by row.
        q = b.queries @ b.phi_q
        k = b.keys @ b.phi_k
        v = b.keys @ b.phi_v
        out = np.zeros((3, 4))
        for i in range(3):
            scores = np.array([q[i] @ k[j] for j in range(4)]) * b.scale
            weights = np.exp(scores - scores.max())
            weights = weights / weights.sum()
            out[i] = sum(weights[j] * v[j] for j in range(4))
        assert np.abs(vanilla_attention(b) - out).max() < 1e-12

    def test_softmax_rows_sum_to_one(self, rng):
        from orthopos.attention import _softmax_rows

        s = rng.standard_normal((6, 9)) * 30
        w = _softmax_rows(s)
        assert np.abs(w.sum(axis=1) - 1.0).max() < 1e-12


class TestPermutationInvariance:
    def test_identity_permutation(self, rng):
        b = make_batch(rng, 3, 5, 4)
        assert permutation_invariance_check(b, np.arange(5))

    def test_vanilla_invariant_under_random_permutation(self, rng):
        b = make_batch(rng, 3, 6, 4)
        assert permutation_invariance_check(b, rng.permutation(6))

    def test_modulation_breaks_invariance(self, rng):
        d = 2
        b = make_batch(rng, 2, 4, d)
        g = interpretation_from_params(
            SEQ, [GeneratorParam(np.array([[0.0, math.pi / 3], [0.0, 0.0]]))])
        ax = position_matrices(g, [0, 1])
        ay = position_matrices(g, [0, 1, 2, 3])
        swap = np.array([1, 0, 2, 3])
        assert not permutation_invariance_check(b, swap, ax=ax, ay=ay)

    def test_bad_permutation_rejected(self, rng):
        b = make_batch(rng, 2, 3, 4)
        with pytest.raises(DimensionError):
            permutation_invariance_check(b, [0, 0, 1])


class TestNaiveScores:
    def test_identity_slices_reduce_to_vanilla(self, rng):
        b = make_batch(rng, 3, 4, 4)
        rel = np.broadcast_to(np.eye(4), (3, 4, 4, 4)).copy()
        scores = modulated_scores_naive(b, rel)
        expected = (b.queries @ b.phi_q) @ (b.keys @ b.phi_k).T
        assert np.array_equal(scores, expected) or np.abs(scores - expected).max() < 1e-12

    def test_single_pair_definition(self, rng):
        b = make_batch(rng, 1, 1, 2)
        r = rotation2(0.8)
        scores = modulated_scores_naive(b, r[None, None])
        q = (b.queries @ b.phi_q)[0]
        k = (b.keys @ b.phi_k)[0]
        assert abs(scores[0, 0] - q @ r @ k) < 1e-12

    def test_matches_quadruple_loop(self, rng):
        m, n, d = 3, 4, 4
        b = make_batch(rng, m, n, d)
        g = random_interpretation(SEQ, d, rng)
        qpos = [0, 2, 1]
        kpos = [3, 0, 1, 2]
        rel = relative_tensor(g, qpos, kpos)
        scores = modulated_scores_naive(b, rel)
        # Oracle: scalar summation over every index of the contraction.
        q = b.queries @ b.phi_q
        k = b.keys @ b.phi_k
        for i in range(m):
            for j in range(n):
                acc = 0.0
                for bb in range(d):
                    for c in range(d):
                        acc += q[i, bb] * rel[i, j, bb, c] * k[j, c]
                assert abs(scores[i, j] - acc) < 1e-10

    def test_non_orthogonal_slice_rejected(self, rng):
        b = make_batch(rng, 2, 2, 3)
        rel = np.broadcast_to(np.eye(3), (2, 2, 3, 3)).copy()
        rel[1, 1] = 2.0 * np.eye(3)
        with pytest.raises(InvalidPositionTensor):
            modulated_scores_naive(b, rel)


class TestFastScores:
    def test_identity_stacks_reduce_to_vanilla(self, rng):
        b = make_batch(rng, 3, 5, 4)
        ax = np.broadcast_to(np.eye(4), (3, 4, 4)).copy()
        ay = np.broadcast_to(np.eye(4), (5, 4, 4)).copy()
        scores = modulated_scores_fast(b, ax, ay)
        expected = (b.queries @ b.phi_q) @ (b.keys @ b.phi_k).T
        assert np.abs(scores - expected).max() < 1e-12

    def test_transpose_convention_pinned(self, rng):
        # Scores at (i, j) apply the path from position i to position j:
        # score[0][1] sees W^1 and score[1][0] sees W^{-1} = W^T.
        d = 4
        b = make_batch(rng, 2, 2, d)
        g = random_interpretation(SEQ, d, rng)
        w = g.generators[0]
        mats = position_matrices(g, [0, 1])
        scores = modulated_scores_fast(b, mats, mats)
        q = b.queries @ b.phi_q
        k = b.keys @ b.phi_k
        assert abs(scores[0, 1] - q[0] @ w @ k[1]) < 1e-12
        assert abs(scores[1, 0] - q[1] @ w.T @ k[0]) < 1e-12
        assert abs(scores[0, 0] - q[0] @ k[0]) < 1e-12

    @pytest.mark.parametrize("spec,d", [
        (StructureSpec.sequence(), 4),
        (StructureSpec.tree(2), 8),
        (StructureSpec.grid(2), 8),
    ])
    def test_matches_naive_contraction(self, spec, d, rng):
        from orthopos import Kind

        m, n = 5, 7
        b = make_batch(rng, m, n, d)
        g = random_interpretation(spec, d, rng)
        if spec.kind is Kind.SEQUENCE:
            qpos = [int(x) for x in rng.integers(0, 6, size=m)]
            kpos = [int(x) for x in rng.integers(0, 6, size=n)]
        elif spec.kind is Kind.TREE:
            qpos = [tuple(int(x) for x in rng.integers(1, 3, size=rng.integers(0, 4)))
                    for _ in range(m)]
            kpos = [tuple(int(x) for x in rng.integers(1, 3, size=rng.integers(0, 4)))
                    for _ in range(n)]
        else:
            qpos = [tuple(int(x) for x in rng.integers(0, 4, size=2)) for _ in range(m)]
            kpos = [tuple(int(x) for x in rng.integers(0, 4, size=2)) for _ in range(n)]
        fast = modulated_scores_fast(
            b, position_matrices(g, qpos), position_matrices(g, kpos))
        naive = modulated_scores_naive(b, relative_tensor(g, qpos, kpos))
        assert np.abs(fast - naive).max() <= 1e-8

    def test_row_count_mismatch(self, rng):
        b = make_batch(rng, 3, 4, 4)
        ax = np.broadcast_to(np.eye(4), (2, 4, 4)).copy()
        ay = np.broadcast_to(np.eye(4), (4, 4, 4)).copy()
        with pytest.raises(DimensionError):
            modulated_scores_fast(b, ax, ay)

    def test_translation_invariance(self, rng):
        d, m, n = 4, 4, 6
        b = make_batch(rng, m, n, d)
        g = random_interpretation(SEQ, d, rng)
        qpos = [0, 1, 2, 3]
        kpos = [2, 0, 1, 5, 4, 3]
        base = modulated_scores_fast(
            b, position_matrices(g, qpos), position_matrices(g, kpos))
        for k in (1, 7, 23):
            shifted = modulated_scores_fast(
                b,
                position_matrices(g, [p + k for p in qpos]),
                position_matrices(g, [p + k for p in kpos]),
            )
            assert np.abs(base - shifted).max() <= 1e-9

    def test_absolute_mode_modulates_keys_only(self, rng):
        d = 4
        b = make_batch(rng, 3, 5, d)
        g = random_interpretation(SEQ, d, rng)
        ay = position_matrices(g, [0, 1, 2, 3, 4])
        scores = modulated_scores_fast(b, None, ay, absolute=True)
        q = b.queries @ b.phi_q
        k = b.keys @ b.phi_k
        expected = q @ np.stack([ay[j] @ k[j] for j in range(5)]).T
        assert np.abs(scores - expected).max() < 1e-12


class TestDecay:
    def test_zero_distance_multiplier_one(self):
        cfg = DecayConfig()
        assert cfg.multipliers(np.array([0]))[0] == 1.0

    def test_unit_distance(self):
        cfg = DecayConfig(exponent=0.98)
        assert abs(cfg.multipliers(np.array([1]))[0] - 0.98) < 1e-15

    def test_long_distance_value(self):
        cfg = DecayConfig(exponent=0.98)
        assert abs(cfg.multipliers(np.array([35]))[0] - 0.493074620618078) < 1e-15

    def test_strictly_decreasing(self):
        cfg = DecayConfig(exponent=0.98)
        mult = cfg.multipliers(np.arange(50))
        assert mult[0] == 1.0
        assert np.all(np.diff(mult) < 0)

    def test_literal_power_form(self):
        cfg = DecayConfig(exponent=0.98, form=DecayForm.LITERAL_POWER)
        mult = cfg.multipliers(np.array([0, 1, 2, 35]))
        assert mult[0] == 1.0
        assert mult[1] == 1.0
        assert abs(mult[2] - 2**0.98) < 1e-12
        assert abs(mult[3] - 35**0.98) < 1e-12

    def test_applied_to_scores(self, rng):
        scores = rng.standard_normal((2, 3))
        dist = np.array([[0, 1, 2], [1, 0, 1]])
        out = apply_distance_decay(scores, dist, DecayConfig(exponent=0.5))
        assert np.abs(out - scores * 0.5**dist).max() < 1e-15

    def test_distance_matrix_per_structure(self):
        seq = distance_matrix([0, 3], [1, 3], SEQ)
        assert np.array_equal(seq, [[1, 3], [2, 0]])
        tree = distance_matrix([(2, 1)], [(1, 2)], StructureSpec.tree(2))
        assert tree[0, 0] == 4
        grid = distance_matrix([(3, 0)], [(1, 3)], StructureSpec.grid(2))
        assert grid[0, 0] == 5

    def test_geometric_range_validated(self):
        with pytest.raises(DimensionError):
            DecayConfig(exponent=1.5)


class TestModulatedAttention:
    def test_decay_and_softmax_assembly(self, rng):
        d = 4
        b = make_batch(rng, 3, 4, d)
        g = random_interpretation(SEQ, d, rng)
        qpos, kpos = [0, 1, 2], [0, 1, 2, 3]
        ax = position_matrices(g, qpos)
        ay = position_matrices(g, kpos)
        dist = distance_matrix(qpos, kpos, SEQ)
        cfg = DecayConfig()
        out = modulated_attention(b, ax, ay, decay=cfg, distances=dist)
        scores = modulated_scores_fast(b, ax, ay) * b.scale
        scores = scores * cfg.multipliers(dist)
        weights = np.exp(scores - scores.max(axis=1, keepdims=True))
        weights = weights / weights.sum(axis=1, keepdims=True)
        expected = weights @ (b.keys @ b.phi_v)
        assert np.abs(out - expected).max() < 1e-12
        assert np.abs(weights.sum(axis=1) - 1.0).max() < 1e-12


class TestScoreGradient:
    def test_zero_upstream(self, rng):
        d = 4
        b = make_batch(rng, 2, 3, d)
        params = random_params(SEQ, d, rng)
        grad = score_gradient(b, params, SEQ, [0, 1], [0, 1, 2],
                              np.zeros((2, 3)))[0]
        assert np.abs(grad).max() == 0.0

    def test_origin_only_positions(self, rng):
        d = 4
        b = make_batch(rng, 2, 2, d)
        params = random_params(SEQ, d, rng)
        grad = score_gradient(b, params, SEQ, [0, 0], [0, 0],
                              rng.standard_normal((2, 2)))[0]
        assert np.abs(grad).max() == 0.0

    def _fd(self, b, entries, spec, qpos, kpos, upstream, h=1e-5):
        def loss(mat):
            g = interpretation_from_params(
                spec, [GeneratorParam(m) for m in mat])
            scores = modulated_scores_fast(
                b, position_matrices(g, qpos), position_matrices(g, kpos))
            return float((upstream * scores).sum())

        grads = []
        for which in range(len(entries)):
            out = np.zeros_like(entries[which])
            for i in range(out.shape[0]):
                for j in range(out.shape[1]):
                    plus = [e.copy() for e in entries]
                    minus = [e.copy() for e in entries]
                    plus[which][i, j] += h
                    minus[which][i, j] -= h
                    out[i, j] = (loss(plus) - loss(minus)) / (2 * h)
            grads.append(out)
        return grads

    def test_sequence_matches_finite_differences(self, rng):
        d, m, n = 4, 3, 3
        b = make_batch(rng, m, n, d)
        params = random_params(SEQ, d, rng, scale=0.5)
        qpos = [0, 2, 4]
        kpos = [1, 3, 0]
        upstream = rng.standard_normal((m, n))
        grad = score_gradient(b, params, SEQ, qpos, kpos, upstream)[0]
        fd = self._fd(b, [p.entries for p in params], SEQ, qpos, kpos, upstream)[0]
        denom = max(np.abs(fd).max(), 1e-12)
        assert np.abs(grad - fd).max() / denom <= 1e-4

    def test_grid_matches_finite_differences(self, rng):
        spec = StructureSpec.grid(2)
        d, m, n = 4, 3, 2
        b = make_batch(rng, m, n, d)
        params = random_params(spec, d, rng, scale=0.5)
        qpos = [(0, 1), (2, 0), (1, 1)]
        kpos = [(1, 2), (0, 0)]
        upstream = rng.standard_normal((m, n))
        grads = score_gradient(b, params, spec, qpos, kpos, upstream)
        fds = self._fd(b, [p.entries for p in params], spec, qpos, kpos, upstream)
        for grad, fd in zip(grads, fds):
            denom = max(np.abs(fd).max(), 1e-12)
            assert np.abs(grad - fd).max() / denom <= 1e-4

    def test_tree_spec_rejected(self, rng):
        b = make_batch(rng, 2, 2, 4)
        params = random_params(StructureSpec.tree(2), 4, rng)
        with pytest.raises(StructureMismatch):
            score_gradient(b, params, StructureSpec.tree(2),
                           [(), ()], [(), ()], np.ones((2, 2)))
