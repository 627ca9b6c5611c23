import math

import numpy as np
import pytest

from orthopos import (
    DimensionError,
    DimensionSplitError,
    GroupInterpretation,
    InvalidGenerator,
    NotOrthogonal,
    StructureMismatch,
    StructureSpec,
    compose,
    direct_sum,
    grid_positions,
    interpret,
    invert,
    make_periodic_generator,
    orthogonality_defect,
    position_matrices,
    random_interpretation,
    reduce_word,
    seq_powers,
    subsampled_positions,
    tree_positions,
)

SEQ = StructureSpec.sequence()
TREE2 = StructureSpec.tree(2)
GRID2 = StructureSpec.grid(2)


def naive_power(w, k):
    # Oracle: k sequential multiplications, transpose for negatives.
    out = np.eye(w.shape[0])
    step = w if k >= 0 else w.T
    for _ in range(abs(k)):
        out = out @ step
    return out


def rotation2(theta):
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


@pytest.fixture
def rng():
    return np.random.default_rng(42)


class TestGroupInterpretation:
    def test_generator_count_enforced(self, rng):
        w = random_interpretation(SEQ, 4, rng).generators[0]
        with pytest.raises(StructureMismatch):
            GroupInterpretation(TREE2, (w,))

    def test_orthogonality_enforced(self):
        with pytest.raises(NotOrthogonal):
            GroupInterpretation(SEQ, (np.ones((3, 3)),))

    def test_grid_split(self, rng):
        g = random_interpretation(GRID2, 8, rng)
        assert g.dim == 8
        assert g.block_dim == 4
        with pytest.raises(DimensionSplitError):
            random_interpretation(GRID2, 7, rng)

    def test_periodicity_enforced(self, rng):
        spec = StructureSpec.sequence(period=6)
        w = random_interpretation(SEQ, 4, rng).generators[0]
        with pytest.raises(NotOrthogonal):
            GroupInterpretation(spec, (w,))
        good = make_periodic_generator(6, 4)
        GroupInterpretation(spec, (good,))


class TestInterpret:
    def test_identity_words(self, rng):
        for spec, d in [(SEQ, 4), (TREE2, 4), (GRID2, 8)]:
            g = random_interpretation(spec, d, rng)
            from orthopos import identity_word

            assert np.abs(interpret(identity_word(spec), g) - np.eye(d)).max() < 1e-15

    def test_cancelling_tree_word(self, rng):
        g = random_interpretation(TREE2, 4, rng)
        m = interpret((-2, -1, 1, 2), g)
        assert np.abs(m - np.eye(4)).max() < 1e-12

    def test_sequence_matches_naive_product(self, rng):
        g = random_interpretation(SEQ, 5, rng)
        w = g.generators[0]
        assert np.abs(interpret(13, g) - naive_power(w, 13)).max() < 1e-12
        assert np.abs(interpret(-6, g) - naive_power(w, -6)).max() < 1e-12

    def test_homomorphism_random_words(self, rng):
        for spec, d in [(SEQ, 4), (TREE2, 4), (GRID2, 8)]:
            g = random_interpretation(spec, d, rng)
            for _ in range(25):
                p = _random_word(spec, rng)
                q = _random_word(spec, rng)
                lhs = interpret(compose(p, q, spec), g)
                rhs = interpret(p, g) @ interpret(q, g)
                assert np.linalg.norm(lhs - rhs) <= 1e-9 * d
                assert np.linalg.norm(
                    interpret(invert(p, spec), g) - interpret(p, g).T) <= 1e-10

    def test_norm_preservation(self, rng):
        g = random_interpretation(TREE2, 6, rng)
        x = rng.standard_normal(6)
        for _ in range(10):
            p = _random_word(TREE2, rng)
            y = interpret(p, g) @ x
            assert abs(np.linalg.norm(y) - np.linalg.norm(x)) < 1e-10 * np.linalg.norm(x)

    def test_reduction_invariance(self, rng):
        g = random_interpretation(TREE2, 4, rng)
        word = (1, 2, -2, 2, 1, -1, -2, -1)
        assert np.linalg.norm(
            interpret(word, g) - interpret(reduce_word(word, 2), g)) <= 1e-9 * 4


def _random_word(spec, rng):
    from orthopos import Kind

    if spec.kind is Kind.SEQUENCE:
        return int(rng.integers(-10, 11))
    if spec.kind is Kind.TREE:
        length = int(rng.integers(0, 8))
        out = []
        for _ in range(length):
            k = int(rng.integers(1, spec.branching + 1))
            out.append(k if rng.random() < 0.5 else -k)
        return tuple(out)
    return tuple(int(c) for c in rng.integers(-5, 6, size=spec.axes))


class TestSeqPowers:
    def test_identity_generator(self):
        t = seq_powers(np.eye(3), 5)
        assert t.count == 6
        assert np.abs(t.matrices - np.eye(3)).max() == 0.0

    def test_periodic_rotation_closes(self):
        t = seq_powers(rotation2(math.pi / 3), 6)
        assert np.abs(t.matrices[6] - np.eye(2)).max() < 1e-12

    def test_rows_match_naive_products(self, rng):
        w = random_interpretation(SEQ, 8, rng).generators[0]
        t = seq_powers(w, 37)
        for k in range(38):
            assert np.abs(t.matrices[k] - naive_power(w, k)).max() < 5e-12

    def test_transposed_rows_are_backward_offsets(self, rng):
        w = random_interpretation(SEQ, 4, rng).generators[0]
        t = seq_powers(w, 9)
        for k in range(10):
            assert np.abs(t.matrices[k].T - naive_power(w, -k)).max() < 5e-12

    @pytest.mark.parametrize("p", [0, 1, 2, 3, 7, 10, 100, 1000, 10000])
    def test_product_count_bound(self, p, rng):
        w = random_interpretation(SEQ, 4, rng).generators[0]
        t = seq_powers(w, p)
        bound = 2 * math.ceil(math.log2(max(p, 1))) + 1
        assert t.products_used <= bound

    def test_negative_rejected(self, rng):
        w = random_interpretation(SEQ, 4, rng).generators[0]
        with pytest.raises(DimensionError):
            seq_powers(w, -1)


class TestTreePositions:
    def test_root_is_identity(self, rng):
        g = random_interpretation(TREE2, 4, rng)
        t = tree_positions(g, [()])
        assert np.abs(t.row(()) - np.eye(4)).max() == 0.0

    def test_single_word_product(self, rng):
        g = random_interpretation(TREE2, 4, rng)
        w1, w2 = g.generators
        t = tree_positions(g, [(1, 2)])
        assert np.abs(t.row((1, 2)) - w1 @ w2).max() < 1e-13

    def test_complete_tree_matches_naive(self, rng):
        g = random_interpretation(TREE2, 4, rng)
        words = [()]
        level = [()]
        for _ in range(3):
            level = [w + (j,) for w in level for j in (1, 2)]
            words.extend(level)
        assert len(words) == 15
        t = tree_positions(g, words)
        for w in words:
            expected = np.eye(4)
            for letter in w:
                expected = expected @ g.generators[letter - 1]
            assert np.abs(t.row(w) - expected).max() < 1e-12

    def test_batched_product_bound(self, rng):
        g = random_interpretation(TREE2, 4, rng)
        words = [()]
        level = [()]
        depth = 5
        for _ in range(depth):
            level = [w + (j,) for w in level for j in (1, 2)]
            words.extend(level)
        t = tree_positions(g, words)
        assert t.products_used <= depth * 2

    def test_shared_prefixes_and_incomplete_sets(self, rng):
        g = random_interpretation(TREE2, 4, rng)
        t = tree_positions(g, [(1, 1, 2), (2,)])
        assert t.count == 2
        w1, w2 = g.generators
        assert np.abs(t.row((1, 1, 2)) - w1 @ w1 @ w2).max() < 1e-13

    def test_branch_out_of_range(self, rng):
        g = random_interpretation(TREE2, 4, rng)
        with pytest.raises(InvalidGenerator):
            tree_positions(g, [(3,)])


class TestDirectSum:
    def test_identities(self):
        assert np.array_equal(direct_sum(np.eye(2), np.eye(3)), np.eye(5))

    def test_two_rotations(self):
        out = direct_sum(rotation2(0.3), rotation2(1.1))
        assert out.shape == (4, 4)
        assert np.abs(out[:2, :2] - rotation2(0.3)).max() == 0.0
        assert np.abs(out[2:, 2:] - rotation2(1.1)).max() == 0.0
        assert np.abs(out[:2, 2:]).max() == 0.0

    def test_multiplicative(self, rng):
        a, b = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
        c, d = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
        lhs = direct_sum(a, b) @ direct_sum(c, d)
        rhs = direct_sum(a @ c, b @ d)
        assert np.abs(lhs - rhs).max() < 1e-12


class TestGridPositions:
    def test_trivial_extents(self, rng):
        g = random_interpretation(GRID2, 8, rng)
        t = grid_positions(g, (1, 1))
        assert t.count == 1
        assert np.abs(t.row((0, 0)) - np.eye(8)).max() == 0.0

    def test_coordinate_block_structure(self, rng):
        g = random_interpretation(GRID2, 8, rng)
        h, w = g.generators
        t = grid_positions(g, (3, 4))
        expected = direct_sum(naive_power(h, 2), naive_power(w, 3))
        assert np.abs(t.row((2, 3)) - expected).max() < 1e-12

    def test_all_rows_match_naive(self, rng):
        g = random_interpretation(GRID2, 8, rng)
        h, w = g.generators
        t = grid_positions(g, (3, 4))
        assert t.count == 12
        for c1 in range(3):
            for c2 in range(4):
                expected = direct_sum(naive_power(h, c1), naive_power(w, c2))
                assert np.abs(t.row((c1, c2)) - expected).max() < 1e-12

    def test_product_budget(self, rng):
        g = random_interpretation(GRID2, 8, rng)
        t = grid_positions(g, (9, 17))
        bound = sum(2 * math.ceil(math.log2(max(e - 1, 1))) + 1 for e in (9, 17))
        assert t.products_used <= bound


class TestPeriodicGenerator:
    def test_order_one_is_identity(self):
        w = make_periodic_generator(1, 4).entries
        assert np.abs(w - np.eye(4)).max() == 0.0

    def test_benzene_block(self):
        w = make_periodic_generator(6, 2).entries
        assert np.abs(w - rotation2(math.pi / 3)).max() < 1e-15
        assert np.abs(naive_power(w, 6) - np.eye(2)).max() < 1e-12

    def test_order_five_by_naive_powers(self):
        w = make_periodic_generator(5, 4).entries
        assert np.abs(naive_power(w, 5) - np.eye(4)).max() < 1e-9
        for k in range(1, 5):
            assert np.abs(naive_power(w, k) - np.eye(4)).max() > 1e-3

    @pytest.mark.parametrize("n", range(1, 13))
    @pytest.mark.parametrize("d", [2, 4, 8])
    def test_orders_close(self, n, d):
        w = make_periodic_generator(n, d).entries
        assert np.linalg.norm(np.linalg.matrix_power(w, n) - np.eye(d)) <= 1e-9

    def test_odd_dim_rejected(self):
        with pytest.raises(DimensionError):
            make_periodic_generator(4, 3)


class TestSubsampled:
    def test_single_origin(self, rng):
        g = random_interpretation(SEQ, 4, rng)
        t = subsampled_positions(g, [0])
        assert t.count == 1
        assert np.abs(t.row(0) - np.eye(4)).max() == 0.0

    def test_gather_semantics(self, rng):
        g = random_interpretation(SEQ, 4, rng)
        full = seq_powers(g.generators[0], 4)
        t = subsampled_positions(g, [0, 2, 4])
        for i, p in enumerate([0, 2, 4]):
            assert np.array_equal(t.matrices[i], full.matrices[p])

    def test_arbitrary_indices_match_naive(self, rng):
        g = random_interpretation(SEQ, 4, rng)
        w = g.generators[0]
        t = subsampled_positions(g, [3, 17, 5])
        for p in (3, 17, 5):
            assert np.abs(t.row(p) - naive_power(w, p)).max() < 5e-13

    def test_duplicates_rejected(self, rng):
        g = random_interpretation(SEQ, 4, rng)
        with pytest.raises(StructureMismatch):
            subsampled_positions(g, [1, 1])


class TestPositionTensorInvariants:
    def test_slices_orthogonal_and_index_bijective(self, rng):
        for spec, d, positions in [
            (SEQ, 4, list(range(9))),
            (TREE2, 4, [(), (1,), (2, 1), (1, 2, 2)]),
            (GRID2, 8, None),
        ]:
            g = random_interpretation(spec, d, rng)
            if spec is SEQ:
                t = seq_powers(g.generators[0], 8)
            elif spec is TREE2:
                t = tree_positions(g, positions)
            else:
                t = grid_positions(g, (3, 3))
            for m in t.matrices:
                assert orthogonality_defect(m) <= 1e-9 * d
            assert sorted(t.index.values()) == list(range(t.count))

    def test_take_allows_repeats(self, rng):
        g = random_interpretation(SEQ, 4, rng)
        t = seq_powers(g.generators[0], 3)
        stack = t.take([2, 2, 0])
        assert stack.shape == (3, 4, 4)
        assert np.array_equal(stack[0], stack[1])

    def test_position_matrices_per_structure(self, rng):
        g = random_interpretation(GRID2, 8, rng)
        mats = position_matrices(g, [(0, 1), (0, 1), (2, 0)])
        h, w = g.generators
        expected = direct_sum(np.eye(4), w)
        assert np.abs(mats[0] - expected).max() < 1e-12
        assert np.array_equal(mats[0], mats[1])
