"""Semantic layer: interpret path words as orthogonal matrices.

A ``GroupInterpretation`` assigns one orthogonal generator per structural
degree of freedom (one for sequences, one per branch for trees, one per
axis for grids).  ``interpret`` maps a path word to a matrix such that
word composition becomes matrix multiplication and word inversion becomes
transposition.

Batch builders produce a ``PositionTensor`` -- a stack of per-position
matrices -- with instrumented multiplication counts:

* ``seq_powers``     ladder of W^0..W^p in <= 2*ceil(log2 p) + 1 products
  (a batched stack product counts as one);
* ``tree_positions`` depth-wise batched products, one per (depth, branch),
  with shared prefixes computed once;
* ``grid_positions`` per-axis ladders assembled as direct sums.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    DimensionError,
    DimensionSplitError,
    InvalidPositionTensor,
    NotOrthogonal,
    StructureMismatch,
)
from .orthogonal import (
    GeneratorParam,
    OrthogonalMatrix,
    matrix_exp,
    orthogonality_defect,
    skew_symmetrize,
)
from .paths import (
    AbsolutePosition,
    Kind,
    PathWord,
    StructureSpec,
    check_position,
    _check_word,
)

# Per-unit-dim orthogonality budgets: generators at construction,
# tensor slices after batched products.
GENERATOR_TOL = 1e-10
SLICE_TOL = 1e-9
PERIOD_TOL = 1e-8


def _as_matrix(g) -> np.ndarray:
    if isinstance(g, OrthogonalMatrix):
        return np.asarray(g.entries, dtype=float)
    return np.asarray(g, dtype=float)


@dataclass(frozen=True)
class GroupInterpretation:
    """Structure spec plus its orthogonal generators.

    For grids the ambient dimension splits evenly across axes: each of
    the ``axes`` generators is (d/axes) x (d/axes) and the interpretation
    of a grid word is the direct sum of per-axis powers.
    """

    spec: StructureSpec
    generators: tuple[np.ndarray, ...]

    def __post_init__(self):
        gens = tuple(_as_matrix(g) for g in self.generators)
        expected = self.spec.generator_count
        if len(gens) != expected:
            raise StructureMismatch(
                f"{self.spec.kind.value} needs {expected} generators, got {len(gens)}"
            )
        shapes = {g.shape for g in gens}
        if len(shapes) != 1 or any(g.ndim != 2 or g.shape[0] != g.shape[1] for g in gens):
            raise DimensionSplitError(
                f"generators must be square and equally sized, got {sorted(shapes)}"
            )
        dim = gens[0].shape[0] * (self.spec.axes if self.spec.kind is Kind.GRID else 1)
        for g in gens:
            defect = orthogonality_defect(g)
            if not defect <= GENERATOR_TOL * dim:
                raise NotOrthogonal(
                    f"generator defect {defect:.3e} exceeds {GENERATOR_TOL * dim:.3e}"
                )
        if self.spec.period is not None:
            for g, n in zip(gens, self.spec.period):
                drift = np.linalg.norm(np.linalg.matrix_power(g, n) - np.eye(g.shape[0]))
                if not drift <= PERIOD_TOL:
                    raise NotOrthogonal(
                        f"generator is not {n}-periodic (||W^n - I|| = {drift:.3e})"
                    )
        gens = tuple(_freeze(g) for g in gens)
        object.__setattr__(self, "generators", gens)

    @property
    def dim(self) -> int:
        block = self.generators[0].shape[0]
        return block * (self.spec.axes if self.spec.kind is Kind.GRID else 1)

    @property
    def block_dim(self) -> int:
        return self.generators[0].shape[0]


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class PositionTensor:
    """Stack of per-position orthogonal matrices with a position index.

    ``index`` maps each absolute position to its row and is a bijection
    onto ``range(count)``.  ``products_used`` records how many matrix
    products (batched products count once) the builder spent.
    """

    matrices: np.ndarray
    index: dict[AbsolutePosition, int]
    products_used: int = 0

    def __post_init__(self):
        mats = np.asarray(self.matrices, dtype=float)
        if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
            raise DimensionError(f"expected (nu, d, d) stack, got {mats.shape}")
        nu, d, _ = mats.shape
        if sorted(self.index.values()) != list(range(nu)):
            raise InvalidPositionTensor("index is not a bijection onto rows")
        defect = _stack_defect(mats)
        if not defect <= SLICE_TOL * d:
            raise InvalidPositionTensor(
                f"slice defect {defect:.3e} exceeds {SLICE_TOL * d:.3e}"
            )
        object.__setattr__(self, "matrices", _freeze(mats))
        object.__setattr__(self, "index", dict(self.index))

    @property
    def count(self) -> int:
        return self.matrices.shape[0]

    @property
    def dim(self) -> int:
        return self.matrices.shape[1]

    def row(self, position: AbsolutePosition) -> np.ndarray:
        return self.matrices[self.index[position]]

    def take(self, positions) -> np.ndarray:
        """Per-entry matrix stack for a position list (repeats allowed)."""
        rows = [self.index[p] for p in positions]
        return self.matrices[rows]


def _stack_defect(mats: np.ndarray) -> float:
    grams = np.matmul(np.transpose(mats, (0, 2, 1)), mats)
    grams = grams - np.eye(mats.shape[1])
    return float(np.sqrt((grams**2).sum(axis=(1, 2)).max())) if len(mats) else 0.0


def direct_sum(a, b) -> np.ndarray:
    """Block-diagonal [[A, 0], [0, B]]; orthogonal whenever A and B are."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    out = np.zeros((a.shape[0] + b.shape[0], a.shape[1] + b.shape[1]))
    out[: a.shape[0], : a.shape[1]] = a
    out[a.shape[0] :, a.shape[1] :] = b
    return out


def _orth_power(w: np.ndarray, k: int) -> np.ndarray:
    # Negative powers of an orthogonal matrix via the transpose.
    if k < 0:
        return np.linalg.matrix_power(w.T, -k)
    return np.linalg.matrix_power(w, k)


def interpret(p: PathWord, g: GroupInterpretation) -> np.ndarray:
    """Matrix assigned to a path word (reduced first).

    Homomorphism: the identity word maps to I, composition to matrix
    multiplication, inversion to transposition.
    """
    word = _check_word(p, g.spec)
    if g.spec.kind is Kind.SEQUENCE:
        return _orth_power(g.generators[0], word)
    if g.spec.kind is Kind.TREE:
        out = np.eye(g.dim)
        for letter in word:
            gen = g.generators[abs(letter) - 1]
            out = out @ (gen if letter > 0 else gen.T)
        return out
    blocks = [_orth_power(gen, c) for gen, c in zip(g.generators, word)]
    out = blocks[0]
    for blk in blocks[1:]:
        out = direct_sum(out, blk)
    return out


def seq_powers(w, p_max: int) -> PositionTensor:
    """Ladder [W^0, W^1, ..., W^p_max] by repeated doubling.

    Each doubling extends the filled prefix with one batched stack
    product and one squaring of the running power, so the instrumented
    count stays within 2*ceil(log2(max(p_max, 1))) + 1.  Transposing the
    rows serves backward offsets.
    """
    w = _as_matrix(w)
    if p_max < 0:
        raise DimensionError("p_max must be nonnegative")
    d = w.shape[0]
    mats = np.empty((p_max + 1, d, d))
    mats[0] = np.eye(d)
    products = 0
    filled = 1
    running = w
    while filled <= p_max:
        take = min(filled, p_max + 1 - filled)
        mats[filled : filled + take] = np.matmul(mats[:take], running)
        products += 1
        filled += take
        if filled <= p_max:
            running = running @ running
            products += 1
    index = {p: p for p in range(p_max + 1)}
    return PositionTensor(mats, index, products_used=products)


def tree_positions(g: GroupInterpretation, positions) -> PositionTensor:
    """Per-node matrices for a set of tree positions.

    Walks depth levels; at depth t every needed prefix ending in branch j
    is extended from its parent with a single batched product against the
    j-th generator.  Shared prefixes are computed once, so a complete
    depth-delta tree costs at most delta * branching batched products.
    """
    if g.spec.kind is not Kind.TREE:
        raise StructureMismatch("tree_positions requires a tree interpretation")
    words = []
    seen = set()
    for pos in positions:
        word = check_position(pos, g.spec)
        if word not in seen:
            seen.add(word)
            words.append(word)
    needed: set[tuple[int, ...]] = set()
    for word in words:
        for t in range(len(word) + 1):
            needed.add(word[:t])
    d = g.dim
    scratch: dict[tuple[int, ...], np.ndarray] = {(): np.eye(d)}
    products = 0
    max_depth = max((len(w) for w in needed), default=0)
    for t in range(1, max_depth + 1):
        level = sorted(w for w in needed if len(w) == t)
        for j in range(1, g.spec.branching + 1):
            group = [w for w in level if w[-1] == j]
            if not group:
                continue
            parents = np.stack([scratch[w[:-1]] for w in group])
            extended = np.matmul(parents, g.generators[j - 1])
            products += 1
            for w, m in zip(group, extended):
                scratch[w] = m
    mats = np.stack([scratch[w] for w in words]) if words else np.empty((0, d, d))
    index = {w: i for i, w in enumerate(words)}
    return PositionTensor(mats, index, products_used=products)


def grid_positions(g: GroupInterpretation, extents) -> PositionTensor:
    """Matrices for every coordinate of a box, as direct sums of axis powers.

    Rows follow row-major coordinate order (last axis fastest).  Only the
    per-axis ladders cost matrix products; the direct-sum assembly is
    pure copying.
    """
    if g.spec.kind is not Kind.GRID:
        raise StructureMismatch("grid_positions requires a grid interpretation")
    extents = tuple(int(e) for e in extents)
    if len(extents) != g.spec.axes or any(e < 1 for e in extents):
        raise StructureMismatch(
            f"extents must be {g.spec.axes} positive ints, got {extents}"
        )
    ladders = [seq_powers(gen, e - 1) for gen, e in zip(g.generators, extents)]
    products = sum(l.products_used for l in ladders)
    d = g.dim
    block = g.block_dim
    nu = math.prod(extents)
    mats = np.zeros((nu, d, d))
    index: dict[AbsolutePosition, int] = {}
    for row, coords in enumerate(itertools.product(*(range(e) for e in extents))):
        for axis, c in enumerate(coords):
            lo = axis * block
            mats[row, lo : lo + block, lo : lo + block] = ladders[axis].matrices[c]
        index[coords] = row
    return PositionTensor(mats, index, products_used=products)


def subsampled_positions(g: GroupInterpretation, indices) -> PositionTensor:
    """Rows W^i for an increasing-or-not list of distinct sample indices.

    Equivalent to gathering from the full ladder up to max(indices);
    sampling times need not be contiguous.
    """
    if g.spec.kind is not Kind.SEQUENCE:
        raise StructureMismatch("subsampled_positions requires a sequence")
    idx = [check_position(i, g.spec) for i in indices]
    if len(set(idx)) != len(idx):
        raise StructureMismatch("sample indices must be distinct")
    if not idx:
        return PositionTensor(np.empty((0, g.dim, g.dim)), {}, products_used=0)
    ladder = seq_powers(g.generators[0], max(idx))
    mats = ladder.matrices[idx]
    index = {p: i for i, p in enumerate(idx)}
    return PositionTensor(mats, index, products_used=ladder.products_used)


def position_matrices(g: GroupInterpretation, positions) -> np.ndarray:
    """Per-entry matrix stack for arbitrary positions (repeats allowed)."""
    positions = [check_position(p, g.spec) for p in positions]
    if g.spec.kind is Kind.SEQUENCE:
        top = max(positions, default=0)
        ladder = seq_powers(g.generators[0], top)
        return ladder.matrices[positions]
    if g.spec.kind is Kind.TREE:
        tensor = tree_positions(g, positions)
        return tensor.take(positions)
    ladders = [
        seq_powers(gen, max((p[axis] for p in positions), default=0))
        for axis, gen in enumerate(g.generators)
    ]
    d, block = g.dim, g.block_dim
    mats = np.zeros((len(positions), d, d))
    for row, coords in enumerate(positions):
        for axis, c in enumerate(coords):
            lo = axis * block
            mats[row, lo : lo + block, lo : lo + block] = ladders[axis].matrices[c]
    return mats


def make_periodic_generator(n: int, dim: int) -> OrthogonalMatrix:
    """Block rotation generator of exact cyclic order ``n``.

    Block i rotates by 2*pi*m_i/n where m_i is the smallest residue
    coprime to n at or cyclically above (2i+1) mod n, so no block
    degenerates to the identity and the first block has full order.
    """
    if n < 1:
        raise DimensionError("period must be >= 1")
    if dim < 2 or dim % 2 != 0:
        raise DimensionError("periodic generators need an even dimension >= 2")
    out = np.zeros((dim, dim))
    for i in range(dim // 2):
        if n == 1:
            theta = 0.0
        else:
            cand = (2 * i + 1) % n
            multiplier = 1
            for step in range(n):
                m = (cand + step) % n
                if m != 0 and math.gcd(m, n) == 1:
                    multiplier = m
                    break
            theta = 2.0 * math.pi * multiplier / n
        c, s = math.cos(theta), math.sin(theta)
        out[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = [[c, -s], [s, c]]
    return OrthogonalMatrix(out)


# Parameter-to-interpretation plumbing.


def interpretation_from_params(spec: StructureSpec, params) -> GroupInterpretation:
    """Exponentiate one parameter per generator and bundle the result."""
    if isinstance(params, GeneratorParam):
        params = [params]
    gens = [matrix_exp(skew_symmetrize(p)).entries for p in params]
    return GroupInterpretation(spec, tuple(gens))


def random_params(spec: StructureSpec, dim: int, rng: np.random.Generator,
                  scale: float = 1.0) -> list[GeneratorParam]:
    """Strict-upper-triangular Gaussian parameters, one per generator."""
    block = _block_dim(spec, dim)
    out = []
    for _ in range(spec.generator_count):
        a = np.triu(rng.standard_normal((block, block)), k=1) * scale
        out.append(GeneratorParam(a))
    return out


def near_identity_params(spec: StructureSpec, dim: int, rng: np.random.Generator,
                         eps: float = 1e-3) -> list[GeneratorParam]:
    """Uniform(-eps, eps) parameters; generators start close to I."""
    block = _block_dim(spec, dim)
    out = []
    for _ in range(spec.generator_count):
        a = np.triu(rng.uniform(-eps, eps, size=(block, block)), k=1)
        out.append(GeneratorParam(a))
    return out


def random_interpretation(spec: StructureSpec, dim: int,
                          rng: np.random.Generator,
                          scale: float = 1.0) -> GroupInterpretation:
    if spec.period is not None:
        block = _block_dim(spec, dim)
        gens = [make_periodic_generator(n, block).entries for n in spec.period]
        return GroupInterpretation(spec, tuple(gens))
    return interpretation_from_params(spec, random_params(spec, dim, rng, scale))


def head_interpretations(spec: StructureSpec, dim: int, heads: int,
                         rng: np.random.Generator) -> list[GroupInterpretation]:
    """One distinct interpretation per attention head.

    The returned list is meant to be shared across layers (reuse the same
    list everywhere) while each head keeps its own generators.
    """
    return [random_interpretation(spec, dim, rng) for _ in range(heads)]


def _block_dim(spec: StructureSpec, dim: int) -> int:
    if spec.kind is Kind.GRID:
        if dim % spec.axes != 0:
            raise DimensionSplitError(
                f"dimension {dim} not divisible by {spec.axes} axes"
            )
        return dim // spec.axes
    return dim
