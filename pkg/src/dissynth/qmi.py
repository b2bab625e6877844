"""Matrix sets defined by quadratic matrix inequalities.

For a partitioned form Pi with split (q, r) the set

    Z_r(Pi) = {Z in R^{r x q} : [I; Z]^T Pi [I; Z] >= 0}

is the basic object of the data-driven analysis. Forms in the Pi-class (pi22 <= 0,
Pi|pi22 >= 0, ker pi22 in ker pi12) give nonempty sets. Those sets are bounded
iff pi22 < 0, in which case they are matrix ellipsoids and can be sampled.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from numpy.typing import ArrayLike

from dissynth.config import settings
from dissynth.errors import DimensionError, HypothesisError
from dissynth.matcore import (
    Matrix,
    PartitionedForm,
    as_matrix,
    congruence,
    eigenvalues,
    inertia,
    kernel_contained,
    min_eig,
    psd_sqrt,
    rank,
    schur_complement,
    symmetrize,
)

__all__ = [
    "PartitionedForm",
    "PiClassReport",
    "SlemmaCertificate",
    "SlemmaInfeasible",
    "is_bounded",
    "qmi_value",
    "sample_z",
    "slemma",
    "transform_w",
    "validate_pi_class",
    "z_membership",
]

logger = logging.getLogger("dissynth.qmi")


@dataclass(frozen=True)
class PiClassReport:
    pi22_nsd: bool
    schur_psd: bool
    kernel_contained: bool
    pi22_nd: bool

    @property
    def in_pi_class(self) -> bool:
        return self.pi22_nsd and self.schur_psd and self.kernel_contained

    def failures(self) -> list[str]:
        checks = {
            "pi22 <= 0": self.pi22_nsd,
            "Pi|pi22 >= 0": self.schur_psd,
            "ker pi22 in ker pi12": self.kernel_contained,
        }
        return [name for name, ok in checks.items() if not ok]


@dataclass(frozen=True)
class SlemmaCertificate:
    """A multiplier alpha >= 0 with M - alpha*N >= 0."""

    alpha: float
    residual_min_eig: float


@dataclass(frozen=True)
class SlemmaInfeasible:
    """No alpha >= 0 works; alpha is the best multiplier found."""

    alpha: float
    residual_min_eig: float


def _norm(pi: PartitionedForm) -> float:
    return max(1.0, float(np.linalg.norm(pi.matrix, 2)))


def validate_pi_class(pi: PartitionedForm, tol: float | None = None) -> PiClassReport:
    """Check the Pi-class conditions; eigenvalue tests are relative to ||Pi||."""
    tol = settings.psd_tol if tol is None else tol
    scale = _norm(pi)
    eig22 = eigenvalues(pi.pi22)
    return PiClassReport(
        pi22_nsd=bool(eig22[-1] <= tol * scale),
        schur_psd=bool(min_eig(schur_complement(pi)) >= -tol * scale),
        kernel_contained=kernel_contained(pi.pi22, pi.pi12, tol * scale),
        pi22_nd=bool(eig22[-1] < -settings.zero_tol * scale),
    )


def _require_pi_class(pi: PartitionedForm, tol: float | None, what: str) -> PiClassReport:
    report = validate_pi_class(pi, tol)
    if not report.in_pi_class:
        raise HypothesisError("pi-class", f"{what} is not in the Pi-class: {report.failures()}")
    return report


def qmi_value(pi: PartitionedForm, z: ArrayLike) -> Matrix:
    """[I; Z]^T Pi [I; Z] for Z of shape (r, q)."""
    zm = as_matrix(z)
    if zm.shape != (pi.r, pi.q):
        raise DimensionError(f"Z must have shape ({pi.r}, {pi.q}), got {zm.shape}")
    return congruence(pi.matrix, np.vstack([np.eye(pi.q), zm]))


def z_membership(pi: PartitionedForm, z: ArrayLike, tol: float | None = None) -> bool:
    """Z in Z_r(Pi), with tolerance relative to ||Pi|| (1 + ||Z||)^2."""
    tol = settings.psd_tol if tol is None else tol
    zm = as_matrix(z)
    value = qmi_value(pi, zm)
    spread = (1.0 + float(np.linalg.norm(zm, 2))) ** 2
    scale = max(1.0, float(np.linalg.norm(pi.matrix, 2)) * spread)
    return min_eig(value) >= -tol * scale


def is_bounded(pi: PartitionedForm, tol: float | None = None) -> bool:
    """For Pi in the Pi-class, Z_r(Pi) is bounded iff pi22 < 0."""
    return _require_pi_class(pi, tol, "Pi").pi22_nd


def transform_w(pi: PartitionedForm, w: ArrayLike) -> PartitionedForm:
    """Pi_W = diag(W^T, I) Pi diag(W, I) with split (p, r) for W of shape (q, p).

    Requires W of full column rank or pi22 nonsingular; then Z_r(Pi_W) is the set
    of Z W with Z in Z_r(Pi).
    """
    wm = as_matrix(w)
    if wm.shape[0] != pi.q:
        raise DimensionError(f"W must have {pi.q} rows, got shape {wm.shape}")
    full_column_rank = rank(wm) == wm.shape[1]
    if not (full_column_rank or rank(pi.pi22) == pi.r):
        raise HypothesisError(
            "full-column-rank-or-nonsingular",
            "W does not have full column rank and pi22 is singular",
        )
    outer = sla.block_diag(wm, np.eye(pi.r))
    return PartitionedForm(congruence(pi.matrix, outer), wm.shape[1], pi.r)


def sample_z(
    pi: PartitionedForm,
    count: int,
    seed: int | None = None,
    boundary: int | None = None,
    tol: float | None = None,
) -> list[Matrix]:
    """Draw members of the bounded set Z_r(Pi).

    The set is {Zc + (-pi22)^{-1/2} V (Pi|pi22)^{1/2} : ||V||_2 <= 1} with center
    Zc = -pi22^{-1} pi21. The batch holds the center first, then `boundary` points
    with ||V||_2 = 1, then interior points with ||V||_2 uniform in [0, 1].
    A degenerate set (Pi|pi22 = 0) yields only the center.
    """
    if count <= 0:
        return []
    boundary = settings.boundary_samples if boundary is None else boundary
    report = _require_pi_class(pi, tol, "Pi")
    if not report.pi22_nd:
        raise HypothesisError("bounded", "Z_r(Pi) is unbounded (pi22 is not negative definite)")

    neg22 = -pi.pi22
    center = np.linalg.solve(neg22, pi.pi21)
    schur = schur_complement(pi)
    if np.max(eigenvalues(schur)) <= settings.zero_tol * _norm(pi):
        logger.debug("Degenerate ellipsoid; returning only its center")
        return [center]

    left = psd_sqrt(neg22, inverse=True)
    right = psd_sqrt(schur)
    rng = np.random.default_rng(seed)
    samples = [center]
    for i in range(1, count):
        v = rng.standard_normal((pi.r, pi.q))
        radius = 1.0 if i <= boundary else rng.uniform()
        v *= radius / np.linalg.norm(v, 2)
        samples.append(center + left @ v @ right)
    return samples


# --- Matrix S-lemma ---


def _golden_max(g, lo: float, hi: float, tol: float) -> float:
    """Argmax of a concave function on [lo, hi] by golden-section search."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c, d = b - inv_phi * (b - a), a + inv_phi * (b - a)
    gc, gd = g(c), g(d)
    while b - a > tol * max(1.0, b):
        if gc >= gd:
            b, d, gd = d, c, gc
            c = b - inv_phi * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + inv_phi * (b - a)
            gd = g(d)
    return max((lo, hi, (a + b) / 2), key=g)


def slemma(
    m: PartitionedForm,
    n: PartitionedForm,
    alpha_max: float | None = None,
    psd_tol: float | None = None,
    tol: float | None = None,
) -> SlemmaCertificate | SlemmaInfeasible:
    """Decide Z_r(N) subset of Z_r(M) by searching alpha >= 0 with M - alpha*N >= 0.

    Requires the same split, N in the Pi-class and N with a positive eigenvalue.
    g(alpha) = lambda_min(M - alpha*N) is concave and is maximized on normalized
    copies of M and N. residual_min_eig is lambda_min(M - alpha*N) on the original
    pair; the verdict tolerance is relative to the largest entry of M.
    """
    alpha_max = settings.alpha_max if alpha_max is None else alpha_max
    psd_tol = settings.psd_tol if psd_tol is None else psd_tol
    if (m.q, m.r) != (n.q, n.r):
        raise DimensionError(f"split mismatch: M is ({m.q}, {m.r}), N is ({n.q}, {n.r})")
    _require_pi_class(n, tol, "N")
    if inertia(n.matrix).pos == 0:
        raise HypothesisError("positive-eigenvalue", "N has no positive eigenvalue")

    sm = float(np.max(np.abs(m.matrix))) or 1.0
    sn = float(np.max(np.abs(n.matrix)))
    m_bar = m.matrix / sm
    n_bar = symmetrize(n.matrix / sn)

    def g(alpha: float) -> float:
        return min_eig(m_bar - alpha * n_bar)

    hi = alpha_max
    for _ in range(64):
        if g(hi) <= g(hi * (1.0 - 1e-3)):
            break
        hi *= 2.0

    best = _golden_max(g, 0.0, hi, settings.golden_tol)
    alpha = best * sm / sn
    value = min_eig(m.matrix - alpha * n.matrix)
    logger.debug("S-lemma: alpha=%.6g, lambda_min=%.3e", alpha, value)
    if value >= -psd_tol * sm:
        return SlemmaCertificate(alpha, value)
    return SlemmaInfeasible(alpha, value)
