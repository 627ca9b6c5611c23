"""Conversions between rotary angle lists and orthogonal generators.

A rotary scheme is a block-diagonal matrix of 2x2 planar rotations, one
base angle per plane; position p rotates each plane by p times its base
angle.  Any special orthogonal generator W factors as P R(Theta) P^T, so
the two parameterizations are interchangeable: the angles come from the
canonical form, and the basis P is absorbed by right-composing the
query/key projections with it.  ``score_agreement`` checks the resulting
score equality numerically, running the rotary side elementwise through
sines and cosines rather than matrix powers.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .attention import AttentionBatch, modulated_scores_fast
from .encoders import seq_powers
from .errors import DecompositionFailed, DimensionError, NotSpecialOrthogonal
from .orthogonal import (
    Fixed,
    GeneratorParam,
    OrthogonalMatrix,
    Rotation,
    canonical_form,
    fit_skew_parameter,
    matrix_exp,
    matrix_log_orthogonal,
    skew_symmetrize,
    _coerce_orthogonal,
)

RECONSTRUCTION_TOL = 1e-8


@dataclass(frozen=True)
class RotarySpec:
    """Even dimension plus one base angle per 2-plane."""

    dim: int
    angles: tuple[float, ...]

    def __post_init__(self):
        if self.dim < 2 or self.dim % 2 != 0:
            raise DimensionError(f"rotary dimension must be even, got {self.dim}")
        angles = tuple(float(a) for a in self.angles)
        if len(angles) != self.dim // 2:
            raise DimensionError(
                f"expected {self.dim // 2} angles, got {len(angles)}"
            )
        if not all(math.isfinite(a) for a in angles):
            raise DimensionError("angles must be finite")
        object.__setattr__(self, "angles", angles)


def default_angle_ladder(dim: int, base: float = 10000.0) -> RotarySpec:
    """Geometric frequency ladder theta_i = base^(-2(i-1)/dim)."""
    if dim < 2 or dim % 2 != 0:
        raise DimensionError(f"rotary dimension must be even, got {dim}")
    angles = tuple(base ** (-2.0 * i / dim) for i in range(dim // 2))
    return RotarySpec(dim, angles)


def rotation_block_matrix(spec: RotarySpec) -> OrthogonalMatrix:
    """Block-diagonal [[cos t, -sin t], [sin t, cos t]] per angle, in order."""
    out = np.zeros((spec.dim, spec.dim))
    for i, theta in enumerate(spec.angles):
        c, s = math.cos(theta), math.sin(theta)
        out[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = [[c, -s], [s, c]]
    return OrthogonalMatrix(out)


def angles_to_generator(spec: RotarySpec) -> tuple[GeneratorParam, OrthogonalMatrix]:
    """Parameterize a rotary scheme as a trainable orthogonal generator.

    Expands the angles into the block rotation matrix, takes its
    logarithm, and extracts the strict-upper-triangle parameter whose
    pipeline output reproduces the matrix.  Angles at exactly pi sit on
    the logarithm's branch cut; the principal branch is used and a
    warning is emitted.
    """
    target = rotation_block_matrix(spec)
    if any(abs(_wrap_angle(a) - math.pi) < 1e-12 for a in spec.angles):
        warnings.warn(
            "angle at pi: matrix logarithm branch is ambiguous, "
            "using the principal branch",
            stacklevel=2,
        )
    b = matrix_log_orthogonal(target)
    param = fit_skew_parameter(b)
    generator = matrix_exp(skew_symmetrize(param))
    return param, generator


def generator_to_angles(w) -> tuple[RotarySpec, np.ndarray]:
    """Recover (angles, basis) with W = P R(Theta) P^T.

    Rotation blocks of the canonical form contribute their angles
    directly (standardized to sin >= 0); pairs of -1 directions become
    pi-planes and pairs of +1 directions become zero-planes.  A leftover
    -1 means det(W) = -1, which has no rotary form.
    """
    w = _coerce_orthogonal(w)
    if w.dim % 2 != 0:
        raise DimensionError(f"rotary form needs even dimension, got {w.dim}")
    form = canonical_form(w)
    angles: list[float] = []
    columns: list[np.ndarray] = []
    fixed_cols: list[int] = []
    flip_cols: list[int] = []
    at = 0
    for block in form.blocks:
        if isinstance(block, Rotation):
            angles.append(block.angle)
            columns.append(form.basis[:, at : at + 2])
        elif isinstance(block, Fixed):
            fixed_cols.append(at)
        else:
            flip_cols.append(at)
        at += block.size
    if len(flip_cols) % 2 == 1:
        raise NotSpecialOrthogonal(
            "determinant -1: an unpaired reflection has no rotary form"
        )
    for f1, f2 in zip(flip_cols[::2], flip_cols[1::2]):
        angles.append(math.pi)
        columns.append(form.basis[:, [f1, f2]])
    for f1, f2 in zip(fixed_cols[::2], fixed_cols[1::2]):
        angles.append(0.0)
        columns.append(form.basis[:, [f1, f2]])
    basis = np.hstack(columns) if columns else np.zeros((w.dim, 0))
    spec = RotarySpec(w.dim, tuple(angles))
    residual = float(np.linalg.norm(
        basis @ rotation_block_matrix(spec).entries @ basis.T - w.entries
    ))
    if not residual <= RECONSTRUCTION_TOL:
        raise DecompositionFailed(
            f"rotary reconstruction residual {residual:.3e} exceeds "
            f"{RECONSTRUCTION_TOL:.0e}"
        )
    return spec, basis


def apply_rotary(rows: np.ndarray, positions, spec: RotarySpec) -> np.ndarray:
    """Rotate row vectors elementwise by position-scaled angles.

    Coordinates (2i, 2i+1) form plane i; row r at position p maps to
    (x cos - y sin, x sin + y cos) with the plane angle p * theta_i.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != spec.dim:
        raise DimensionError(f"rows must be (count, {spec.dim}), got {rows.shape}")
    pos = np.asarray(list(positions), dtype=float)
    if pos.shape != (rows.shape[0],):
        raise DimensionError("one position per row required")
    theta = pos[:, None] * np.asarray(spec.angles)[None, :]
    c, s = np.cos(theta), np.sin(theta)
    x, y = rows[:, 0::2], rows[:, 1::2]
    out = np.empty_like(rows)
    out[:, 0::2] = x * c - y * s
    out[:, 1::2] = x * s + y * c
    return out


def score_agreement(batch: AttentionBatch, w, p_max: int) -> float:
    """Max |difference| between the matrix-power and rotary score paths.

    Queries sit at positions 0..p_max and so do keys, which requires
    m = n = p_max + 1.  The first path modulates with powers of W; the
    second recovers (Theta, P), folds P into the projections, and applies
    position-scaled plane rotations elementwise.
    """
    w = _coerce_orthogonal(w)
    if batch.m != p_max + 1 or batch.n != p_max + 1:
        raise DimensionError(
            f"batch rows ({batch.m}, {batch.n}) must equal p_max + 1 = {p_max + 1}"
        )
    ladder = seq_powers(w.entries, p_max)
    direct = modulated_scores_fast(batch, ladder.matrices, ladder.matrices)

    spec, basis = generator_to_angles(w)
    positions = range(p_max + 1)
    q = batch.queries @ (batch.phi_q @ basis)
    k = batch.keys @ (batch.phi_k @ basis)
    rotary = apply_rotary(q, positions, spec) @ apply_rotary(k, positions, spec).T
    return float(np.abs(direct - rotary).max())


def _wrap_angle(a: float) -> float:
    """Map an angle to the principal branch (-pi, pi]."""
    wrapped = math.fmod(a, 2.0 * math.pi)
    if wrapped > math.pi:
        wrapped -= 2.0 * math.pi
    elif wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped
