"""Self-check suites behind the ``verify`` command.

Each suite runs a randomized property at a fixed tolerance and reports
its worst observed deviation.  Suites are deterministic for a given
seed (PCG64, numpy's default generator).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .attention import (
    AttentionBatch,
    modulated_scores_fast,
    modulated_scores_naive,
    permutation_invariance_check,
    relative_tensor,
    score_gradient,
)
from .encoders import (
    interpret,
    make_periodic_generator,
    position_matrices,
    random_interpretation,
    random_params,
    seq_powers,
    tree_positions,
)
from .orthogonal import orthogonality_defect
from .paths import Kind, StructureSpec, compose, invert, reduce_word


@dataclass(frozen=True)
class SuiteResult:
    suite: str
    trials: int
    max_deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance

    def to_json(self) -> dict:
        out = asdict(self)
        out["pass"] = self.passed
        return out


def _structures(rng: np.random.Generator, dim: int):
    yield StructureSpec.sequence(), dim
    yield StructureSpec.tree(2), dim
    yield StructureSpec.tree(3), dim
    yield StructureSpec.grid(2), dim


def _random_word(spec: StructureSpec, rng: np.random.Generator):
    if spec.kind is Kind.SEQUENCE:
        return int(rng.integers(-12, 13))
    if spec.kind is Kind.TREE:
        length = int(rng.integers(0, 9))
        letters = []
        for _ in range(length):
            g = int(rng.integers(1, spec.branching + 1))
            letters.append(g if rng.random() < 0.5 else -g)
        return tuple(letters)
    return tuple(int(c) for c in rng.integers(-6, 7, size=spec.axes))


def _pad_with_cancellations(word: tuple, spec: StructureSpec,
                            rng: np.random.Generator) -> tuple:
    """Splice cancelling letter pairs into a tree word at random spots."""
    letters = list(word)
    for _ in range(int(rng.integers(1, 4))):
        g = int(rng.integers(1, spec.branching + 1))
        g = g if rng.random() < 0.5 else -g
        at = int(rng.integers(0, len(letters) + 1))
        letters[at:at] = [g, -g]
    return tuple(letters)


def group_laws(dim: int = 4, trials: int = 250, seed: int = 0,
               tolerance: float = 1e-9) -> SuiteResult:
    """Homomorphism, inversion-as-transpose, identity, reduction invariance."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    total = 0
    for spec, d in _structures(rng, dim):
        g = random_interpretation(spec, d, rng)
        eye = np.eye(d)
        for _ in range(trials):
            p = _random_word(spec, rng)
            q = _random_word(spec, rng)
            mp, mq = interpret(p, g), interpret(q, g)
            worst = max(worst, float(np.linalg.norm(
                interpret(compose(p, q, spec), g) - mp @ mq)))
            worst = max(worst, float(np.linalg.norm(
                interpret(invert(p, spec), g) - mp.T)))
            worst = max(worst, float(np.linalg.norm(
                interpret(compose(p, invert(p, spec), spec), g) - eye)))
            if spec.kind is Kind.TREE:
                unreduced = _pad_with_cancellations(p, spec, rng)
                worst = max(worst, float(np.linalg.norm(
                    interpret(unreduced, g)
                    - interpret(reduce_word(unreduced, spec.branching), g))))
            total += 1
    return SuiteResult("group-laws", total, worst, tolerance)


def orthogonality(dim: int = 8, trials: int = 20, seed: int = 1,
                  tolerance: float | None = None) -> SuiteResult:
    """Defect of generators and of every built tensor slice."""
    rng = np.random.default_rng(seed)
    tol = tolerance if tolerance is not None else 1e-9 * dim
    worst = 0.0
    total = 0
    for _ in range(trials):
        seq = random_interpretation(StructureSpec.sequence(), dim, rng)
        worst = max(worst, orthogonality_defect(seq.generators[0]))
        ladder = seq_powers(seq.generators[0], 16)
        worst = max(worst, max(orthogonality_defect(m) for m in ladder.matrices))
        tree = random_interpretation(StructureSpec.tree(2), dim, rng)
        nodes = tree_positions(tree, [(), (1,), (2,), (1, 2), (2, 1), (1, 1, 2)])
        worst = max(worst, max(orthogonality_defect(m) for m in nodes.matrices))
        total += 1
    return SuiteResult("orthogonality", total, worst, tol)


def _random_batch(rng: np.random.Generator, m: int, n: int, d: int) -> AttentionBatch:
    return AttentionBatch(
        rng.standard_normal((m, d)),
        rng.standard_normal((n, d)),
        rng.standard_normal((n, d)),
        rng.standard_normal((d, d)),
        rng.standard_normal((d, d)),
        rng.standard_normal((d, d)),
    )


def _random_positions(spec: StructureSpec, rng: np.random.Generator, count: int):
    if spec.kind is Kind.SEQUENCE:
        return [int(p) for p in rng.integers(0, 9, size=count)]
    if spec.kind is Kind.TREE:
        out = []
        for _ in range(count):
            depth = int(rng.integers(0, 5))
            out.append(tuple(int(x) for x in
                             rng.integers(1, spec.branching + 1, size=depth)))
        return out
    return [tuple(int(c) for c in rng.integers(0, 5, size=spec.axes))
            for _ in range(count)]


def contraction_equiv(trials: int = 50, seed: int = 2,
                      tolerance: float = 1e-8) -> SuiteResult:
    """Factored score path against the explicit relative-tensor path."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    specs = [StructureSpec.sequence(), StructureSpec.tree(2), StructureSpec.grid(2)]
    for t in range(trials):
        spec = specs[t % len(specs)]
        d = int(rng.choice([4, 8]))
        m, n = int(rng.integers(1, 9)), int(rng.integers(1, 9))
        g = random_interpretation(spec, d, rng)
        batch = _random_batch(rng, m, n, d)
        qpos = _random_positions(spec, rng, m)
        kpos = _random_positions(spec, rng, n)
        fast = modulated_scores_fast(
            batch, position_matrices(g, qpos), position_matrices(g, kpos))
        naive = modulated_scores_naive(batch, relative_tensor(g, qpos, kpos))
        worst = max(worst, float(np.abs(fast - naive).max()))
    return SuiteResult("contraction-equiv", trials, worst, tolerance)


def rope_equiv(trials: int = 100, seed: int = 3, dims=(2, 4, 8),
               tolerance: float = 1e-8) -> SuiteResult:
    """Matrix-power scores against elementwise rotary scores."""
    from .rotary import score_agreement

    rng = np.random.default_rng(seed)
    worst = 0.0
    for t in range(trials):
        d = int(dims[t % len(dims)])
        p_max = int(rng.integers(1, 16))
        g = random_interpretation(StructureSpec.sequence(), d, rng)
        batch = _random_batch(rng, p_max + 1, p_max + 1, d)
        worst = max(worst, score_agreement(batch, g.generators[0], p_max))
    return SuiteResult("rope-equiv", trials, worst, tolerance)


def gradient_check(trials: int = 20, seed: int = 4,
                   tolerance: float = 1e-4) -> SuiteResult:
    """Analytic parameter gradients against central finite differences."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        d = 4
        m, n = int(rng.integers(2, 5)), int(rng.integers(2, 5))
        spec = StructureSpec.sequence()
        params = random_params(spec, d, rng, scale=0.4)
        batch = _random_batch(rng, m, n, d)
        qpos = [int(p) for p in rng.integers(0, 5, size=m)]
        kpos = [int(p) for p in rng.integers(0, 5, size=n)]
        upstream = rng.standard_normal((m, n))
        grad = score_gradient(batch, params, spec, qpos, kpos, upstream)[0]
        fd = _fd_gradient(batch, params[0].entries, spec, qpos, kpos, upstream)
        denom = max(float(np.abs(fd).max()), 1e-12)
        worst = max(worst, float(np.abs(grad - fd).max()) / denom)
    return SuiteResult("gradient-check", trials, worst, tolerance)


def _fd_gradient(batch, entries, spec, qpos, kpos, upstream,
                 h: float = 1e-5) -> np.ndarray:
    from .encoders import interpretation_from_params
    from .orthogonal import GeneratorParam

    def loss(mat: np.ndarray) -> float:
        g = interpretation_from_params(spec, [GeneratorParam(mat)])
        scores = modulated_scores_fast(
            batch, position_matrices(g, qpos), position_matrices(g, kpos))
        return float((upstream * scores).sum())

    out = np.zeros_like(entries)
    for i in range(entries.shape[0]):
        for j in range(entries.shape[1]):
            bump = np.zeros_like(entries)
            bump[i, j] = h
            out[i, j] = (loss(entries + bump) - loss(entries - bump)) / (2 * h)
    return out


def periodicity(tolerance: float = 1e-9, dims=(2, 4, 8)) -> SuiteResult:
    """W^n = I for periodic generators, n in 1..12."""
    worst = 0.0
    total = 0
    for n in range(1, 13):
        for d in dims:
            w = make_periodic_generator(n, d).entries
            worst = max(worst, float(np.linalg.norm(
                np.linalg.matrix_power(w, n) - np.eye(d))))
            total += 1
    return SuiteResult("periodicity", total, worst, tolerance)


def permutation(trials: int = 25, seed: int = 5,
                tolerance: float = 0.0) -> SuiteResult:
    """Vanilla attention permutation-invariant; modulated attention not."""
    rng = np.random.default_rng(seed)
    failures = 0
    for _ in range(trials):
        d = 4
        n = int(rng.integers(2, 7))
        batch = _random_batch(rng, 3, n, d)
        perm = rng.permutation(n)
        if not permutation_invariance_check(batch, perm):
            failures += 1
        swap = np.arange(n)
        swap[[0, 1]] = swap[[1, 0]]
        g = random_interpretation(StructureSpec.sequence(), d, rng)
        mats = position_matrices(g, list(range(n)))
        qmats = position_matrices(g, list(range(3)))
        if permutation_invariance_check(batch, swap, ax=qmats, ay=mats):
            failures += 1
    return SuiteResult("permutation", trials, float(failures), tolerance)


DEFAULT_SUITES = (
    "group-laws",
    "orthogonality",
    "contraction-equiv",
    "rope-equiv",
    "gradient-check",
    "periodicity",
    "permutation",
)


def run_suites(names=None, dim: int = 4, trials: int | None = None,
               seed: int = 0, tolerance: float | None = None) -> list[SuiteResult]:
    names = list(names) if names else list(DEFAULT_SUITES)
    results = []
    for name in names:
        if name == "group-laws":
            results.append(group_laws(dim=dim, trials=trials or 250, seed=seed,
                                      tolerance=tolerance if tolerance is not None else 1e-9))
        elif name == "orthogonality":
            results.append(orthogonality(dim=max(dim, 2), trials=trials or 20,
                                         seed=seed + 1, tolerance=tolerance))
        elif name == "contraction-equiv":
            results.append(contraction_equiv(trials=trials or 50, seed=seed + 2,
                                             tolerance=tolerance if tolerance is not None else 1e-8))
        elif name == "rope-equiv":
            results.append(rope_equiv(trials=trials or 100, seed=seed + 3,
                                      dims=(dim,) if dim in (2, 4, 8) else (2, 4, 8),
                                      tolerance=tolerance if tolerance is not None else 1e-8))
        elif name == "gradient-check":
            results.append(gradient_check(trials=trials or 20, seed=seed + 4,
                                          tolerance=tolerance if tolerance is not None else 1e-4))
        elif name == "periodicity":
            results.append(periodicity(
                tolerance=tolerance if tolerance is not None else 1e-9))
        elif name == "permutation":
            results.append(permutation(trials=trials or 25, seed=seed + 5,
                                       tolerance=tolerance if tolerance is not None else 0.0))
        else:
            raise ValueError(f"unknown suite {name!r}")
    return results
