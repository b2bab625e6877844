"""Dense symmetric-matrix utilities.

Inertia and (semi)definiteness at scaled tolerances, Moore-Penrose pseudo-inverses,
kernels, generalized Schur complements and the partitioned quadratic forms that
every other module is built on. All functions are pure.

Tolerance conventions:
  - eigenvalue decisions are relative to max(1, ||A||_2)
  - rank decisions treat singular values below rank_tol * sigma_max as zero
"""

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import scipy.linalg as sla
from numpy.typing import ArrayLike, NDArray

from dissynth.config import settings
from dissynth.errors import DimensionError, SymmetryError

logger = logging.getLogger("dissynth.matcore")

Matrix = NDArray[np.float64]


class Inertia(NamedTuple):
    """Numbers of negative, zero and positive eigenvalues."""

    neg: int
    zero: int
    pos: int


def as_matrix(a: ArrayLike) -> Matrix:
    """Coerce to a 2-D float array (scalars become 1x1, vectors become rows)."""
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2:
        raise DimensionError(f"expected a matrix, got an array with {m.ndim} dimensions")
    return m


def symmetrize(a: ArrayLike) -> Matrix:
    m = as_matrix(a)
    return (m + m.T) / 2


def symmetric(a: ArrayLike, tol: float | None = None) -> Matrix:
    """Validate near-symmetry and return the symmetrized matrix.

    Raises SymmetryError if max|A_ij - A_ji| exceeds tol * (1 + max|A_ij|).
    """
    tol = settings.sym_tol if tol is None else tol
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {m.shape}")
    if m.size == 0:
        return m
    asym = float(np.max(np.abs(m - m.T)))
    if asym > tol * (1.0 + float(np.max(np.abs(m)))):
        raise SymmetryError(f"matrix is not symmetric (max |A - A^T| = {asym:.3e})")
    return (m + m.T) / 2


def congruence(middle: ArrayLike, outer: ArrayLike) -> Matrix:
    """outer^T @ middle @ outer, symmetrized."""
    t = as_matrix(outer)
    return symmetrize(t.T @ as_matrix(middle) @ t)


def eigenvalues(a: ArrayLike) -> NDArray[np.float64]:
    s = symmetric(a)
    if s.size == 0:
        return np.empty(0)
    return sla.eigvalsh(s)


def _scale(eig: NDArray[np.float64]) -> float:
    if eig.size == 0:
        return 1.0
    return max(1.0, float(np.max(np.abs(eig))))


def inertia(a: ArrayLike, zero_tol: float | None = None) -> Inertia:
    zero_tol = settings.zero_tol if zero_tol is None else zero_tol
    eig = eigenvalues(a)
    band = zero_tol * _scale(eig)
    neg = int(np.sum(eig < -band))
    pos = int(np.sum(eig > band))
    return Inertia(neg, eig.size - neg - pos, pos)


def min_eig(a: ArrayLike) -> float:
    eig = eigenvalues(a)
    return float(eig[0]) if eig.size else float("inf")


def max_eig(a: ArrayLike) -> float:
    eig = eigenvalues(a)
    return float(eig[-1]) if eig.size else float("-inf")


def is_psd(a: ArrayLike, tol: float | None = None) -> bool:
    """True iff lambda_min(A) >= -tol * max(1, ||A||_2)."""
    tol = settings.psd_tol if tol is None else tol
    eig = eigenvalues(a)
    if eig.size == 0:
        return True
    return bool(eig[0] >= -tol * _scale(eig))


def is_pd(a: ArrayLike, tol: float | None = None) -> bool:
    """True iff lambda_min(A) > tol * max(1, ||A||_2)."""
    tol = settings.zero_tol if tol is None else tol
    eig = eigenvalues(a)
    if eig.size == 0:
        return True
    return bool(eig[0] > tol * _scale(eig))


def pseudo_inverse(a: ArrayLike, rank_tol: float | None = None) -> Matrix:
    rank_tol = settings.rank_tol if rank_tol is None else rank_tol
    m = as_matrix(a)
    if m.size == 0:
        return np.zeros((m.shape[1], m.shape[0]))
    return sla.pinv(m, atol=0.0, rtol=rank_tol)


def rank(a: ArrayLike, rank_tol: float | None = None) -> int:
    rank_tol = settings.rank_tol if rank_tol is None else rank_tol
    m = as_matrix(a)
    if m.size == 0:
        return 0
    s = sla.svdvals(m)
    if s[0] == 0.0:
        return 0
    return int(np.sum(s > rank_tol * s[0]))


def kernel_basis(a: ArrayLike, rank_tol: float | None = None) -> Matrix:
    """Orthonormal basis (as columns) of ker A."""
    rank_tol = settings.rank_tol if rank_tol is None else rank_tol
    m = as_matrix(a)
    if m.shape[0] == 0:
        return np.eye(m.shape[1])
    if m.shape[1] == 0:
        return np.zeros((0, 0))
    return sla.null_space(m, rcond=rank_tol)


def psd_sqrt(a: ArrayLike, inverse: bool = False) -> Matrix:
    """Symmetric square root (or inverse square root) of a PSD matrix.

    Eigenvalues are clamped at zero first; round-off makes "PSD" matrices
    slightly indefinite.
    """
    s = symmetric(a)
    if s.size == 0:
        return s
    eig, vec = sla.eigh(s)
    eig = np.clip(eig, 0.0, None)
    if inverse:
        if np.any(eig <= 0.0):
            raise DimensionError("inverse square root of a singular matrix")
        root = 1.0 / np.sqrt(eig)
    else:
        root = np.sqrt(eig)
    return symmetrize((vec * root) @ vec.T)


@dataclass(frozen=True)
class PartitionedForm:
    """A symmetric (q+r)x(q+r) matrix with a declared block split (q, r).

    Blocks: pi11 (q x q), pi12 (q x r), pi21 = pi12^T, pi22 (r x r).
    """

    matrix: Matrix
    q: int
    r: int

    def __post_init__(self) -> None:
        if self.q < 1 or self.r < 1:
            raise DimensionError(f"split must be positive, got ({self.q}, {self.r})")
        m = symmetric(self.matrix)
        if m.shape[0] != self.q + self.r:
            raise DimensionError(
                f"matrix of size {m.shape[0]} does not match split ({self.q}, {self.r})"
            )
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_blocks(cls, pi11: ArrayLike, pi12: ArrayLike, pi22: ArrayLike) -> "PartitionedForm":
        a, b, c = as_matrix(pi11), as_matrix(pi12), as_matrix(pi22)
        return cls(np.block([[a, b], [b.T, c]]), a.shape[0], c.shape[0])

    @property
    def size(self) -> int:
        return self.q + self.r

    @property
    def pi11(self) -> Matrix:
        return self.matrix[: self.q, : self.q]

    @property
    def pi12(self) -> Matrix:
        return self.matrix[: self.q, self.q :]

    @property
    def pi21(self) -> Matrix:
        return self.matrix[self.q :, : self.q]

    @property
    def pi22(self) -> Matrix:
        return self.matrix[self.q :, self.q :]

    def scaled(self, factor: float) -> "PartitionedForm":
        return PartitionedForm(self.matrix * factor, self.q, self.r)


def schur_complement(pi: PartitionedForm, rank_tol: float | None = None) -> Matrix:
    """Generalized Schur complement pi11 - pi12 pi22^+ pi21."""
    return symmetrize(pi.pi11 - pi.pi12 @ pseudo_inverse(pi.pi22, rank_tol) @ pi.pi21)


def kernel_contained(
    pi22: ArrayLike,
    pi12: ArrayLike,
    tol: float | None = None,
    rank_tol: float | None = None,
) -> bool:
    """True iff ||pi12 v|| <= tol for every unit vector v of a basis of ker pi22.

    tol is absolute; callers that work relative to a norm scale it themselves.
    """
    tol = settings.psd_tol if tol is None else tol
    b = as_matrix(pi12)
    basis = kernel_basis(symmetric(pi22), rank_tol)
    if basis.shape[1] == 0:
        return True
    if b.shape[1] != basis.shape[0]:
        raise DimensionError(f"pi12 has {b.shape[1]} columns, pi22 has size {basis.shape[0]}")
    residual = np.linalg.norm(b @ basis, axis=0)
    return bool(np.all(residual <= tol))


def inertia_lower_bound(h: ArrayLike, m: ArrayLike, tol: float | None = None) -> bool:
    """Check nu + (m - n) - dim ker M <= nu_hat for H (n x n) and M (n x m).

    nu and nu_hat are the numbers of negative eigenvalues of H and M^T H M.
    The bound always holds, so a False return points at a tolerance problem.
    """
    hs = symmetric(h)
    mm = as_matrix(m)
    n, cols = hs.shape[0], mm.shape[1]
    if mm.shape[0] != n:
        raise DimensionError(f"M has {mm.shape[0]} rows, H has size {n}")
    nu = inertia(hs, tol).neg
    nu_hat = inertia(congruence(hs, mm), tol).neg
    kernel_dim = cols - rank(mm)
    return nu + (cols - n) - kernel_dim <= nu_hat
