"""Dot-product attention scores with positional modulation.

Two score paths compute the same bilinear form

    score[i, j] = (x_i Phi_q) . T_ij . (y_j Phi_k)^T,

where T_ij interprets the relative path from the query's position to the
key's position:

* ``modulated_scores_naive`` contracts the explicit (m, n, d, d) tensor
  of relative interpretations -- transparent but doubly quadratic;
* ``modulated_scores_fast``  factors T_ij = A_i^T B_j and instead rotates
  projected queries and keys independently by their absolute-position
  matrices, then takes one (m, n) product.

Both return raw (unscaled, pre-softmax) scores; ``modulated_attention``
assembles the full head: scale, optional distance decay, softmax, values.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, InvalidPositionTensor, StructureMismatch
from .encoders import GroupInterpretation, PositionTensor, position_matrices, seq_powers
from .orthogonal import (
    GeneratorParam,
    SkewSymmetric,
    matrix_exp_frechet,
    skew_symmetrize,
    _expm,
)
from .paths import Kind, StructureSpec, check_position, path_length, relative_path

_NAIVE_SLICE_TOL = 1e-8


@dataclass(frozen=True)
class AttentionBatch:
    """Queries/keys/values plus per-head projections.

    ``scale`` defaults to 1/sqrt(d) and multiplies scores before softmax.
    """

    queries: np.ndarray
    keys: np.ndarray
    values: np.ndarray
    phi_q: np.ndarray
    phi_k: np.ndarray
    phi_v: np.ndarray
    scale: float = 0.0

    def __post_init__(self):
        arrays = {}
        for name in ("queries", "keys", "values", "phi_q", "phi_k", "phi_v"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(arr)):
                raise DimensionError(f"{name} contains non-finite entries")
            arrays[name] = arr
        q, k, v = arrays["queries"], arrays["keys"], arrays["values"]
        if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
            raise DimensionError("queries/keys/values must be 2-D")
        d = q.shape[1]
        if k.shape[1] != d or v.shape[1] != d:
            raise DimensionError("queries/keys/values disagree on model dim")
        if k.shape[0] != v.shape[0]:
            raise DimensionError("keys and values disagree on row count")
        if q.shape[0] < 1 or k.shape[0] < 1:
            raise DimensionError("need at least one query and one key")
        for name in ("phi_q", "phi_k", "phi_v"):
            if arrays[name].shape != (d, d):
                raise DimensionError(f"{name} must be {d}x{d}")
        for name, arr in arrays.items():
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)
        if self.scale == 0.0:
            object.__setattr__(self, "scale", 1.0 / np.sqrt(d))

    @property
    def m(self) -> int:
        return self.queries.shape[0]

    @property
    def n(self) -> int:
        return self.keys.shape[0]

    @property
    def dim(self) -> int:
        return self.queries.shape[1]


class DecayForm(enum.Enum):
    GEOMETRIC = "geometric"      # multiplier c**p, decays for 0 < c < 1
    LITERAL_POWER = "power"      # multiplier p**c, with p = 0 mapped to 1


@dataclass(frozen=True)
class DecayConfig:
    """Distance-based score scaling; distances are reduced path lengths."""

    exponent: float = 0.98
    form: DecayForm = DecayForm.GEOMETRIC

    def __post_init__(self):
        if self.form is DecayForm.GEOMETRIC and not 0.0 < self.exponent <= 1.0:
            raise DimensionError("geometric decay needs 0 < exponent <= 1")

    def multipliers(self, distances: np.ndarray) -> np.ndarray:
        p = np.asarray(distances, dtype=float)
        if self.form is DecayForm.GEOMETRIC:
            return self.exponent**p
        return np.where(p > 0, np.power(np.maximum(p, 1.0), self.exponent), 1.0)


def _softmax_rows(scores: np.ndarray) -> np.ndarray:
    shifted = scores - scores.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def vanilla_attention(batch: AttentionBatch) -> np.ndarray:
    """Position-blind attention: softmax(q k^T * scale) applied to values."""
    q = batch.queries @ batch.phi_q
    k = batch.keys @ batch.phi_k
    v = batch.keys @ batch.phi_v
    weights = _softmax_rows((q @ k.T) * batch.scale)
    return weights @ v


def _rows_of(tensor, side: str, count: int) -> np.ndarray:
    mats = tensor.matrices if isinstance(tensor, PositionTensor) else np.asarray(tensor, dtype=float)
    if mats.ndim != 3 or mats.shape[1] != mats.shape[2]:
        raise DimensionError(f"{side} modulation must be a (rows, d, d) stack")
    if mats.shape[0] != count:
        raise DimensionError(
            f"{side} modulation has {mats.shape[0]} rows, batch expects {count}"
        )
    return mats


def modulated_scores_fast(batch: AttentionBatch, ax, ay,
                          absolute: bool = False) -> np.ndarray:
    """Factored score path: rotate projected rows, then one (m, n) product.

    ``ax``/``ay`` hold one matrix per query/key row (absolute-position
    interpretations).  Under ``absolute=True`` only the keys are
    modulated, matching origin-fixed (monoid) positions.
    """
    q = batch.queries @ batch.phi_q
    k = batch.keys @ batch.phi_k
    ay_m = _rows_of(ay, "key", batch.n)
    kt = np.einsum("jab,jb->ja", ay_m, k)
    if absolute:
        qt = q
    else:
        ax_m = _rows_of(ax, "query", batch.m)
        qt = np.einsum("iab,ib->ia", ax_m, q)
    return qt @ kt.T


def modulated_scores_naive(batch: AttentionBatch, rel: np.ndarray) -> np.ndarray:
    """Reference score path over the explicit relative tensor.

    ``rel[i, j]`` must hold the orthogonal interpretation of the path
    from query position i to key position j; every slice is validated.
    Memory grows with m*n*d*d, so this is for checking, not serving.
    """
    rel = np.asarray(rel, dtype=float)
    if rel.shape != (batch.m, batch.n, batch.dim, batch.dim):
        raise DimensionError(
            f"relative tensor shape {rel.shape} does not match batch "
            f"({batch.m}, {batch.n}, {batch.dim}, {batch.dim})"
        )
    d = batch.dim
    grams = np.einsum("ijab,ijac->ijbc", rel, rel)
    defect = np.sqrt(((grams - np.eye(d)) ** 2).sum(axis=(2, 3))).max()
    if not defect <= _NAIVE_SLICE_TOL * d:
        raise InvalidPositionTensor(
            f"relative slice defect {defect:.3e} exceeds {_NAIVE_SLICE_TOL * d:.3e}"
        )
    q = batch.queries @ batch.phi_q
    k = batch.keys @ batch.phi_k
    return np.einsum("ib,ijbc,jc->ij", q, rel, k)


def relative_tensor(g: GroupInterpretation, query_positions,
                    key_positions) -> np.ndarray:
    """Explicit (m, n, d, d) tensor of relative-path interpretations."""
    ax = position_matrices(g, query_positions)
    ay = position_matrices(g, key_positions)
    return np.einsum("iab,jac->ijbc", ax, ay)


def distance_matrix(query_positions, key_positions,
                    spec: StructureSpec) -> np.ndarray:
    """Reduced relative-path lengths between all query/key position pairs."""
    qp = [check_position(p, spec) for p in query_positions]
    kp = [check_position(p, spec) for p in key_positions]
    out = np.zeros((len(qp), len(kp)), dtype=int)
    for i, a in enumerate(qp):
        for j, b in enumerate(kp):
            out[i, j] = path_length(relative_path(a, b, spec), spec)
    return out


def apply_distance_decay(scores: np.ndarray, distances: np.ndarray,
                         cfg: DecayConfig) -> np.ndarray:
    """Scale scores elementwise by the distance-derived multipliers."""
    scores = np.asarray(scores, dtype=float)
    mult = cfg.multipliers(distances)
    if mult.shape != scores.shape:
        raise DimensionError(
            f"distances shape {mult.shape} does not match scores {scores.shape}"
        )
    return scores * mult


def modulated_attention(batch: AttentionBatch, ax, ay, absolute: bool = False,
                        decay: DecayConfig | None = None,
                        distances=None) -> np.ndarray:
    """Full modulated head: raw scores -> scale -> decay -> softmax -> values."""
    scores = modulated_scores_fast(batch, ax, ay, absolute=absolute) * batch.scale
    if decay is not None:
        if distances is None:
            raise DimensionError("decay requires a distance matrix")
        scores = apply_distance_decay(scores, distances, decay)
    weights = _softmax_rows(scores)
    return weights @ (batch.keys @ batch.phi_v)


def permutation_invariance_check(batch: AttentionBatch, perm,
                                 ax=None, ay=None,
                                 tol: float = 1e-10) -> bool:
    """Whether attention output survives permuting keys and values jointly.

    Positional modulation stays attached to slots, so moving content
    across slots changes modulated outputs; the check returns True for
    the position-blind head and False once non-identity modulation
    distinguishes the permuted slots.
    """
    perm = np.asarray(perm, dtype=int)
    if sorted(perm.tolist()) != list(range(batch.n)):
        raise DimensionError(f"not a permutation of {batch.n} keys")

    def output(b: AttentionBatch) -> np.ndarray:
        if ax is None and ay is None:
            return vanilla_attention(b)
        return modulated_attention(b, ax, ay, absolute=ax is None)

    permuted = AttentionBatch(
        batch.queries, batch.keys[perm], batch.values[perm],
        batch.phi_q, batch.phi_k, batch.phi_v, batch.scale,
    )
    return bool(np.abs(output(batch) - output(permuted)).max() <= tol)


def score_gradient(batch: AttentionBatch, params, spec: StructureSpec,
                   query_positions, key_positions,
                   upstream: np.ndarray) -> list[np.ndarray]:
    """Gradient of sum(upstream * fast scores) w.r.t. generator parameters.

    Backpropagates through the power ladder with
    d(W^p) = sum_{r<p} W^r dW W^{p-1-r}, then through the exponential via
    its derivative map (the adjoint is the same map at B^T), and finally
    through B = A - A^T.  Returns one d x d array per generator.
    """
    if spec.kind is Kind.TREE:
        raise StructureMismatch("gradients are defined for sequence and grid specs")
    if isinstance(params, GeneratorParam):
        params = [params]
    upstream = np.asarray(upstream, dtype=float)
    if upstream.shape != (batch.m, batch.n):
        raise DimensionError(
            f"upstream shape {upstream.shape} != ({batch.m}, {batch.n})"
        )
    qp = [check_position(p, spec) for p in query_positions]
    kp = [check_position(p, spec) for p in key_positions]
    if len(qp) != batch.m or len(kp) != batch.n:
        raise DimensionError("position lists must match batch rows")
    q = batch.queries @ batch.phi_q
    k = batch.keys @ batch.phi_k
    if spec.kind is Kind.SEQUENCE:
        if len(params) != 1:
            raise StructureMismatch("sequence gradient takes one parameter")
        return [_cyclic_factor_gradient(q, k, [p for p in qp], [p for p in kp],
                                        params[0], upstream)]
    axes = spec.axes
    if len(params) != axes:
        raise StructureMismatch(f"grid gradient takes {axes} parameters")
    if batch.dim % axes != 0:
        raise DimensionError(f"dimension {batch.dim} not divisible by {axes} axes")
    block = batch.dim // axes
    grads = []
    for axis in range(axes):
        lo = axis * block
        grads.append(_cyclic_factor_gradient(
            q[:, lo : lo + block], k[:, lo : lo + block],
            [p[axis] for p in qp], [p[axis] for p in kp],
            params[axis], upstream,
        ))
    return grads


def _cyclic_factor_gradient(q, k, qpos, kpos, param: GeneratorParam,
                            upstream: np.ndarray) -> np.ndarray:
    b = skew_symmetrize(param)
    w = _expm(b.entries)
    p_max = max(qpos + kpos)
    ladder = seq_powers(w, p_max).matrices
    qt = np.stack([ladder[p] @ q[i] for i, p in enumerate(qpos)])
    kt = np.stack([ladder[p] @ k[j] for j, p in enumerate(kpos)])
    # d(score)/d(per-row matrix), grouped by the power each row uses.
    bar: dict[int, np.ndarray] = {}
    gk = upstream @ kt          # (m, d): sum_j G_ij kt_j
    gq = upstream.T @ qt        # (n, d): sum_i G_ij qt_i
    for i, p in enumerate(qpos):
        bar.setdefault(p, np.zeros_like(w))
        bar[p] += np.outer(gk[i], q[i])
    for j, p in enumerate(kpos):
        bar.setdefault(p, np.zeros_like(w))
        bar[p] += np.outer(gq[j], k[j])
    dw = np.zeros_like(w)
    for p, g in bar.items():
        for r in range(p):
            dw += ladder[r].T @ g @ ladder[p - 1 - r].T
    db = matrix_exp_frechet(SkewSymmetric(b.entries.T), dw)
    return db - db.T
