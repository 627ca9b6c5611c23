"""Construction and decomposition of orthogonal matrices from free parameters.

The forward pipeline turns an arbitrary square parameter matrix into a
special-orthogonal generator:

    A  (free)  ->  B = A - A^T  (skew-symmetric)  ->  W = exp(B)  (det +1).

The reverse pipeline recovers a parameterization from a given generator,
whenever one exists (det(W) must be +1):

    W  ->  canonical form P Q P^T  ->  B = P log(Q) P^T  ->  A = triu(B, 1).

The canonical form factors any orthogonal W into an orthogonal change of
basis P and a block-diagonal Q made of planar rotation blocks and +/-1
scalars.  All angles are reported on the principal branch (-pi, pi], ties
at +/-pi resolved to +pi, and rotation blocks are standardized so that
sin(theta) >= 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DecompositionFailed,
    DimensionError,
    InvalidParameter,
    LogFailed,
    NotOrthogonal,
    NotSpecialOrthogonal,
)

# Orthogonality budget per unit dimension at construction time.
CONSTRUCTION_TOL = 1e-10
# Frobenius budget for reconstructing a matrix from its factored form.
RECONSTRUCTION_TOL = 1e-8
# Subdiagonal magnitude below which a Schur 2x2 block degenerates to scalars.
_SUBDIAG_TOL = 1e-12


def _as_square(m, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(m, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] < 1:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    return arr


def orthogonality_defect(m) -> float:
    """Frobenius norm of M^T M - I; zero iff M is exactly orthogonal."""
    arr = _as_square(m)
    return float(np.linalg.norm(arr.T @ arr - np.eye(arr.shape[0])))


@dataclass(frozen=True)
class GeneratorParam:
    """Unconstrained square parameter; only its strict upper triangle matters."""

    entries: np.ndarray

    def __post_init__(self):
        arr = _as_square(self.entries, "parameter")
        if not np.all(np.isfinite(arr)):
            raise InvalidParameter("parameter entries must be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class SkewSymmetric:
    """Matrix with B^T = -B, holding exactly at every entry."""

    entries: np.ndarray

    def __post_init__(self):
        arr = _as_square(self.entries, "skew matrix")
        if not np.all(np.isfinite(arr)):
            raise InvalidParameter("skew entries must be finite")
        if not np.array_equal(arr.T, -arr):
            raise InvalidParameter("matrix is not exactly skew-symmetric")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    @classmethod
    def project(cls, m) -> "SkewSymmetric":
        """Nearest skew-symmetric matrix, (M - M^T) / 2; exact in IEEE arithmetic."""
        arr = _as_square(m)
        return cls((arr - arr.T) / 2.0)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class OrthogonalMatrix:
    """Square matrix validated against ||W^T W - I||_F <= 1e-10 * dim."""

    entries: np.ndarray

    def __post_init__(self):
        arr = _as_square(self.entries, "orthogonal matrix")
        defect = orthogonality_defect(arr)
        if not defect <= CONSTRUCTION_TOL * arr.shape[0]:
            raise NotOrthogonal(
                f"orthogonality defect {defect:.3e} exceeds "
                f"{CONSTRUCTION_TOL * arr.shape[0]:.3e}"
            )
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def _coerce_orthogonal(w) -> OrthogonalMatrix:
    return w if isinstance(w, OrthogonalMatrix) else OrthogonalMatrix(w)


# Descriptors for the block-diagonal factor of the canonical form.


@dataclass(frozen=True)
class Rotation:
    """2x2 planar rotation block [[cos t, -sin t], [sin t, cos t]]."""

    angle: float
    size = 2

    def matrix(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return np.array([[c, -s], [s, c]])

    def determinant(self) -> float:
        return 1.0


@dataclass(frozen=True)
class Fixed:
    """1x1 block holding +1 (an invariant direction)."""

    size = 1

    def matrix(self) -> np.ndarray:
        return np.array([[1.0]])

    def determinant(self) -> float:
        return 1.0


@dataclass(frozen=True)
class Flip:
    """1x1 block holding -1 (a reflected direction)."""

    size = 1

    def matrix(self) -> np.ndarray:
        return np.array([[-1.0]])

    def determinant(self) -> float:
        return -1.0


Block = Rotation | Fixed | Flip


@dataclass(frozen=True)
class CanonicalForm:
    """Factorization W = P * blockdiag(blocks) * P^T with P orthogonal."""

    basis: np.ndarray
    blocks: tuple[Block, ...]

    def __post_init__(self):
        arr = _as_square(self.basis, "basis")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "basis", arr)
        object.__setattr__(self, "blocks", tuple(self.blocks))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def block_diagonal(self) -> np.ndarray:
        q = np.zeros((self.dim, self.dim))
        at = 0
        for block in self.blocks:
            q[at : at + block.size, at : at + block.size] = block.matrix()
            at += block.size
        return q

    def reconstruct(self) -> np.ndarray:
        return self.basis @ self.block_diagonal() @ self.basis.T

    def determinant(self) -> float:
        out = 1.0
        for block in self.blocks:
            out *= block.determinant()
        return out


def skew_symmetrize(param: GeneratorParam) -> SkewSymmetric:
    """B = A - A^T.  Exactly skew-symmetric for any finite A."""
    a = param.entries
    return SkewSymmetric(a - a.T)


def fit_skew_parameter(b: SkewSymmetric) -> GeneratorParam:
    """Parameter whose skew-symmetrization reproduces ``b`` exactly.

    The optimum of mse(B, A - A^T) is analytic: take the strict upper
    triangle of B.  Residual is zero by construction.
    """
    return GeneratorParam(np.triu(b.entries, k=1))


# Degree-13 Pade coefficients and the matching 1-norm threshold for
# scaling-and-squaring (backward-stable for double precision).
_PADE13 = (
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
)
_THETA13 = 5.371920351148152


def _pade13(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    b = _PADE13
    eye = np.eye(a.shape[0])
    a2 = a @ a
    a4 = a2 @ a2
    a6 = a4 @ a2
    u = a @ (a6 @ (b[13] * a6 + b[11] * a4 + b[9] * a2)
             + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * eye)
    v = (a6 @ (b[12] * a6 + b[10] * a4 + b[8] * a2)
         + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * eye)
    return u, v


def _expm(a: np.ndarray) -> np.ndarray:
    """exp(A) for a general square A by scaling-and-squaring with Pade-13."""
    norm = np.linalg.norm(a, 1)
    if norm == 0.0:
        return np.eye(a.shape[0])
    squarings = 0
    if norm > _THETA13:
        squarings = int(math.ceil(math.log2(norm / _THETA13)))
        a = a / 2.0**squarings
    u, v = _pade13(a)
    r = np.linalg.solve(v - u, v + u)
    for _ in range(squarings):
        r = r @ r
    return r


def matrix_exp(b: SkewSymmetric) -> OrthogonalMatrix:
    """exp(B) for skew-symmetric B; always lands on det +1 orthogonal matrices."""
    return OrthogonalMatrix(_expm(b.entries))


def matrix_exp_frechet(b: SkewSymmetric, direction) -> np.ndarray:
    """Directional derivative of exp at B along E.

    Uses the block-matrix identity: the top-right block of
    exp([[B, E], [0, B]]) equals the derivative L(B, E).
    """
    e = _as_square(direction, "direction")
    d = b.dim
    if e.shape != (d, d):
        raise DimensionError(
            f"direction shape {e.shape} does not match skew dim {d}"
        )
    block = np.zeros((2 * d, 2 * d))
    block[:d, :d] = b.entries
    block[d:, d:] = b.entries
    block[:d, d:] = e
    return _expm(block)[:d, d:]


def canonical_form(w) -> CanonicalForm:
    """Factor an orthogonal W into P * blockdiag(rotations, +/-1) * P^T.

    Computed from the real Schur factorization: for orthogonal (hence
    normal) input, the quasi-triangular factor is block-diagonal with 2x2
    rotation blocks for complex-conjugate eigenvalue pairs and scalar
    blocks for eigenvalues +/-1.  Each rotation block is re-standardized
    so its angle satisfies sin(theta) >= 0, absorbing the sign into a
    column swap of the basis.
    """
    w = _coerce_orthogonal(w)
    try:
        t, z = scipy.linalg.schur(w.entries, output="real")
    except scipy.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise DecompositionFailed(f"Schur factorization failed: {exc}") from exc
    d = w.dim
    basis = z.copy()
    blocks: list[Block] = []
    i = 0
    while i < d:
        if i + 1 < d and abs(t[i + 1, i]) > _SUBDIAG_TOL:
            sin_t = t[i + 1, i]
            cos_t = 0.5 * (t[i, i] + t[i + 1, i + 1])
            theta = math.atan2(sin_t, cos_t)
            if theta < 0.0:
                # Swap the two basis columns; this transposes the block,
                # flipping the angle sign.
                basis[:, [i, i + 1]] = basis[:, [i + 1, i]]
                theta = -theta
            blocks.append(Rotation(theta))
            i += 2
        else:
            blocks.append(Fixed() if t[i, i] > 0.0 else Flip())
            i += 1
    form = CanonicalForm(basis, tuple(blocks))
    residual = float(np.linalg.norm(form.reconstruct() - w.entries))
    if not residual <= RECONSTRUCTION_TOL:
        raise DecompositionFailed(
            f"canonical form residual {residual:.3e} exceeds {RECONSTRUCTION_TOL:.0e}"
        )
    return form


def matrix_log_orthogonal(w) -> SkewSymmetric:
    """Skew-symmetric B with exp(B) = W, for special orthogonal W.

    Assembled from the canonical form: each rotation block contributes a
    2x2 skew block with its angle, and pairs of -1 directions combine
    into rotation-by-pi planes.  A determinant of -1 leaves an unpaired
    flip, for which no real skew-symmetric logarithm exists.
    """
    w = _coerce_orthogonal(w)
    form = canonical_form(w)
    flip_cols: list[int] = []
    k = np.zeros((w.dim, w.dim))
    at = 0
    for block in form.blocks:
        if isinstance(block, Rotation):
            k[at, at + 1] = -block.angle
            k[at + 1, at] = block.angle
        elif isinstance(block, Flip):
            flip_cols.append(at)
        at += block.size
    if len(flip_cols) % 2 == 1:
        raise NotSpecialOrthogonal(
            "determinant -1: no real skew-symmetric logarithm exists"
        )
    for f1, f2 in zip(flip_cols[::2], flip_cols[1::2]):
        # Two reflected directions span a rotation-by-pi plane.
        k[f1, f2] = -math.pi
        k[f2, f1] = math.pi
    raw = form.basis @ k @ form.basis.T
    b = SkewSymmetric.project(raw)
    residual = float(np.linalg.norm(_expm(b.entries) - w.entries))
    if not residual <= 1e-6:
        raise LogFailed(
            f"log reconstruction residual {residual:.3e} exceeds 1e-06"
        )
    return b
