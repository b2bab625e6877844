"""Quadratic supply rates, dissipation inequalities and dualization.

A system x+ = A x + B u, y = C x + D u is dissipative w.r.t. the supply
s(u, y) = [u; y]^T S [u; y] if some storage x^T P x with P >= 0 satisfies

    D(P) = [I 0; A B]^T diag(P, -P) [I 0; A B] + [0 I; C D]^T S [0 I; C D] >= 0.

For synthesis the same property is expressed on the dual system with the dual
supply S_hat, which is affine in Q = P^{-1}.
"""

import logging
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from dissynth import sdpsolve
from dissynth.config import settings
from dissynth.errors import DimensionError, HypothesisError
from dissynth.matcore import Inertia, Matrix, as_matrix, inertia, is_pd, min_eig, symmetric
from dissynth.sdpsolve import Infeasible, SolveStatus, Undecided

logger = logging.getLogger("dissynth.dissipativity")


@dataclass(frozen=True)
class SupplyRate:
    """Symmetric S of size in_dim + out_dim acting on [input; output]."""

    s: Matrix
    in_dim: int
    out_dim: int

    def __post_init__(self) -> None:
        s = symmetric(self.s)
        if s.shape[0] != self.in_dim + self.out_dim:
            raise DimensionError(
                f"supply matrix has size {s.shape[0]}, expected {self.in_dim} + {self.out_dim}"
            )
        object.__setattr__(self, "s", s)

    @property
    def inertia(self) -> Inertia:
        return inertia(self.s)

    @property
    def has_supply_inertia(self) -> bool:
        """In(S) = (p, 0, d) with p outputs and d inputs."""
        return self.inertia == Inertia(self.out_dim, 0, self.in_dim)

    def require_supply_inertia(self) -> None:
        if not self.has_supply_inertia:
            expected = (self.out_dim, 0, self.in_dim)
            raise HypothesisError(
                "supply-inertia", f"S must have inertia {expected}, got {tuple(self.inertia)}"
            )

    def quadratic(self, u: ArrayLike, y: ArrayLike) -> float:
        v = np.concatenate([np.ravel(u), np.ravel(y)])
        return float(v @ self.s @ v)


@dataclass(frozen=True)
class StateStrictSupply(SupplyRate):
    """Passivity from w to (x, y) with excess state dissipation epsilon*|x|^2.

    S over (w, x, y) is [[0, 0, I], [0, -eps*I, 0], [I, 0, 0]]; the output seen by
    the supply is the state stacked on the performance output.
    """

    n: int = 0
    epsilon: float = 0.0

    def at(self, epsilon: float) -> "StateStrictSupply":
        return state_strict_passive_supply(self.n, self.in_dim, epsilon)

    def dual_affine(self) -> tuple[Matrix, Matrix]:
        """S_hat(mu) = intercept + mu * slope with mu = 1/epsilon."""
        s1 = dualize(self.at(1.0)).s
        s2 = dualize(self.at(0.5)).s
        slope = s2 - s1
        return s1 - slope, slope


def passive_supply(d: int) -> SupplyRate:
    """s(u, y) = 2 u^T y."""
    if d < 1:
        raise DimensionError("passivity needs at least one channel")
    eye, zero = np.eye(d), np.zeros((d, d))
    return SupplyRate(np.block([[zero, eye], [eye, zero]]), d, d)


def l2_gain_supply(d: int, p: int, gamma: float) -> SupplyRate:
    """s(u, y) = gamma^2 |u|^2 - |y|^2."""
    if gamma <= 0:
        raise ValueError(f"gain bound must be positive, got {gamma}")
    s = np.block(
        [
            [gamma**2 * np.eye(d), np.zeros((d, p))],
            [np.zeros((p, d)), -np.eye(p)],
        ]
    )
    return SupplyRate(s, d, p)


def state_strict_passive_supply(n: int, d: int, epsilon: float) -> StateStrictSupply:
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    eye_d = np.eye(d)
    s = np.zeros((2 * d + n, 2 * d + n))
    s[:d, d + n :] = eye_d
    s[d + n :, :d] = eye_d
    s[d : d + n, d : d + n] = -epsilon * np.eye(n)
    return StateStrictSupply(s, d, n + d, n=n, epsilon=epsilon)


def _check_system(a: Matrix, b: Matrix, c: Matrix, d: Matrix) -> tuple[int, int, int]:
    n = a.shape[0]
    if a.shape != (n, n):
        raise DimensionError(f"A must be square, got {a.shape}")
    m = b.shape[1]
    if b.shape[0] != n:
        raise DimensionError(f"B must have {n} rows, got {b.shape}")
    p = c.shape[0]
    if c.shape != (p, n) or d.shape != (p, m):
        raise DimensionError(f"C, D must be ({p}, {n}), ({p}, {m}); got {c.shape}, {d.shape}")
    return n, m, p


def _dissipation(a, b, c, d, s: Matrix, p):
    """D(P) for a numeric or cvxpy storage matrix."""
    n, m, _ = _check_system(a, b, c, d)
    t1 = np.block([[np.eye(n), np.zeros((n, m))], [a, b]])
    t2 = np.vstack([np.hstack([np.zeros((m, n)), np.eye(m)]), np.hstack([c, d])])
    storage = sdpsolve.bmat([[p, np.zeros((n, n))], [np.zeros((n, n)), -p]])
    return t1.T @ storage @ t1 + t2.T @ s @ t2


def dissipation_matrix(
    a: ArrayLike, b: ArrayLike, c: ArrayLike, d: ArrayLike, supply: SupplyRate, p: ArrayLike
) -> Matrix:
    a, b, c, d = (as_matrix(x) for x in (a, b, c, d))
    pm = symmetric(p)
    if supply.s.shape[0] != b.shape[1] + c.shape[0]:
        raise DimensionError(
            f"supply of size {supply.s.shape[0]} does not fit {b.shape[1]} inputs "
            f"and {c.shape[0]} outputs"
        )
    if pm.shape != (a.shape[0], a.shape[0]):
        raise DimensionError(f"P must be {a.shape[0]} x {a.shape[0]}, got {pm.shape}")
    return symmetric(_dissipation(a, b, c, d, supply.s, pm))


@dataclass(frozen=True)
class StorageCertificate:
    """Storage matrix P with D(P) >= 0; margin is lambda_min of diag(P, D(P))."""

    p: Matrix
    margin: float


def analyze_dissipativity(
    a: ArrayLike,
    b: ArrayLike,
    c: ArrayLike,
    d: ArrayLike,
    supply: SupplyRate,
    strict: bool = False,
    solver: str | None = None,
) -> StorageCertificate | Infeasible | Undecided:
    """Search P >= 0 (P >= q_floor*I when strict) with D(P) >= 0."""
    a, b, c, d = (as_matrix(x) for x in (a, b, c, d))
    n, m, p = _check_system(a, b, c, d)
    if supply.s.shape[0] != m + p:
        raise DimensionError(f"supply of size {supply.s.shape[0]} does not fit {m} + {p}")

    problem = sdpsolve.LmiProblem("dissipativity")
    storage = problem.symmetric("P", n, lower=settings.q_floor if strict else 0.0)
    problem.require_psd("dissipation", _dissipation(a, b, c, d, supply.s, storage))
    outcome = sdpsolve.solve(problem, solver)

    match outcome.status:
        case SolveStatus.FEASIBLE:
            pm = outcome.assignment["P"]
            margin = min(min_eig(pm), min_eig(dissipation_matrix(a, b, c, d, supply, pm)))
            logger.info("Dissipative with storage margin %.3e", margin)
            return StorageCertificate(pm, margin)
        case SolveStatus.INFEASIBLE:
            return Infeasible(
                "no storage function satisfies the dissipation inequality",
                certificate=outcome.dual_certificate,
            )
        case _:
            return Undecided(outcome.message)


def dissipation_gaps(
    a: ArrayLike,
    b: ArrayLike,
    c: ArrayLike,
    d: ArrayLike,
    supply: SupplyRate,
    p: ArrayLike,
    u: ArrayLike,
    x0: ArrayLike,
) -> Matrix:
    """Per-step slack x^T P x + s(u, y) - x+^T P x+ along a simulated trajectory.

    Nonnegative for every step whenever D(P) >= 0.
    """
    a, b, c, d = (as_matrix(x) for x in (a, b, c, d))
    pm = symmetric(p)
    um = as_matrix(u)
    x = np.ravel(np.asarray(x0, dtype=float))
    gaps = np.empty(um.shape[1])
    for t in range(um.shape[1]):
        ut = um[:, t]
        y = c @ x + d @ ut
        x_next = a @ x + b @ ut
        gaps[t] = x @ pm @ x + supply.quadratic(ut, y) - x_next @ pm @ x_next
        x = x_next
    return gaps


# --- Dualization ---


def dualize(supply: SupplyRate) -> SupplyRate:
    """S_hat = [[0, -I_p], [I_d, 0]] S^{-1} [[0, -I_d], [I_p, 0]].

    The dual supply acts on [dual input (p); dual output (d)] and has inertia
    (d, 0, p) whenever S has inertia (p, 0, d).
    """
    d, p = supply.in_dim, supply.out_dim
    if supply.inertia.zero:
        raise HypothesisError("supply-nonsingular", "cannot dualize a singular supply matrix")
    left = np.block([[np.zeros((p, d)), -np.eye(p)], [np.eye(d), np.zeros((d, p))]])
    right = np.block([[np.zeros((d, p)), -np.eye(d)], [np.eye(p), np.zeros((p, d))]])
    s_hat = left @ np.linalg.inv(supply.s) @ right
    return SupplyRate((s_hat + s_hat.T) / 2, p, d)


def dual_dissipation_matrix(
    a: ArrayLike, b: ArrayLike, c: ArrayLike, d: ArrayLike, s_hat: SupplyRate, q: ArrayLike
) -> Matrix:
    """Dissipation matrix of the dual system (A^T, C^T, B^T, D^T) with storage Q.

    [I 0; A^T C^T]^T diag(Q, -Q) [I 0; A^T C^T] + [0 I; B^T D^T]^T S_hat [0 I; B^T D^T]
    """
    a, b, c, d = (as_matrix(x) for x in (a, b, c, d))
    qm = symmetric(q)
    if not is_pd(qm):
        raise HypothesisError("q-positive-definite", "dual storage Q must be positive definite")
    return dissipation_matrix(a.T, c.T, b.T, d.T, s_hat, qm)
