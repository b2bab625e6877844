"""Data-driven synthesis of dissipating state-feedback gains.

Given noisy experiment data, a noise model and a supply rate, find u = K x such
that every plant consistent with the data is dissipative in closed loop. The
search runs over the dual storage Q = P^{-1} and L = K Q and is a single LMI:

    M_hat(Q, L) - alpha * N_hat >= 0,  Q > 0,  alpha >= 0

solved in margin form (maximize t with M_hat - alpha*N_hat >= t*I and
Q >= (q_floor + t)*I). The sign of the optimal margin is the verdict.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, replace
from enum import StrEnum
from typing import Any

import numpy as np

from dissynth import sdpsolve
from dissynth.config import settings
from dissynth.datamodel import (
    ConsistencyForm,
    ExperimentData,
    NoiseModel,
    PlantModel,
    Variant,
    build_bar_nk,
    build_hat_mk,
    build_hat_mu,
    build_hat_nk,
    build_hat_nu,
    build_mk,
    build_mu,
    build_nu,
    check_interior_sufficient,
    check_positive_eigenvalue,
    check_rank,
    log_interior,
    residual_consistent,
    sample_consistent,
)
from dissynth.dissipativity import (
    StateStrictSupply,
    SupplyRate,
    dissipation_matrix,
    dualize,
)
from dissynth.errors import DimensionError, HypothesisError
from dissynth.matcore import (
    Matrix,
    as_matrix,
    congruence,
    eigenvalues,
    is_pd,
    is_psd,
    min_eig,
    pseudo_inverse,
    rank,
)
from dissynth.qmi import validate_pi_class
from dissynth.sdpsolve import Infeasible, SolveStatus, Undecided

logger = logging.getLogger("dissynth.synthesis")


class Branch(StrEnum):
    UNKNOWN_OUTPUT = "unknownOutput"
    KNOWN_OUTPUT_STRICT = "knownOutputStrict"
    KNOWN_OUTPUT_DEGENERATE = "knownOutputDegenerate"


@dataclass(frozen=True)
class KnownOutputs:
    """Output matrices y = C_s x + D_s u (+ F w) known in advance."""

    c_s: Matrix
    d_s: Matrix

    def __post_init__(self) -> None:
        c, d = as_matrix(self.c_s), as_matrix(self.d_s)
        if c.shape[0] != d.shape[0]:
            raise DimensionError(f"C_s and D_s row counts differ: {c.shape} vs {d.shape}")
        object.__setattr__(self, "c_s", c)
        object.__setattr__(self, "d_s", d)


@dataclass(frozen=True)
class SynthesisProblem:
    data: ExperimentData
    e: Matrix
    f: Matrix
    noise: NoiseModel
    supply: SupplyRate
    known: KnownOutputs | None = None
    maximize_epsilon: bool = False

    def __post_init__(self) -> None:
        e, f = as_matrix(self.e), as_matrix(self.f)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "f", f)
        n, m, d = self.data.n, self.data.m, self.noise.d
        p = self.outputs
        if e.shape != (n, d):
            raise DimensionError(f"E must be ({n}, {d}), got {e.shape}")
        if f.shape != (p, d):
            raise DimensionError(f"F must be ({p}, {d}), got {f.shape}")
        if self.supply.in_dim != d:
            raise DimensionError(f"supply has {self.supply.in_dim} inputs, noise has {d} channels")
        if self.state_strict and self.supply.n != n:
            raise DimensionError(f"state-strict supply is for n = {self.supply.n}, data has {n}")
        if self.known is not None:
            if self.known.c_s.shape != (p, n) or self.known.d_s.shape != (p, m):
                raise DimensionError(
                    f"C_s, D_s must be ({p}, {n}), ({p}, {m}); "
                    f"got {self.known.c_s.shape}, {self.known.d_s.shape}"
                )
        elif self.data.p != p:
            raise DimensionError(f"unknown-output data needs Y- with {p} rows, got {self.data.p}")
        if self.maximize_epsilon and not self.state_strict:
            raise ValueError("epsilon maximization needs a state-strict supply")

    @property
    def state_strict(self) -> bool:
        return isinstance(self.supply, StateStrictSupply)

    @property
    def outputs(self) -> int:
        """Performance outputs p (the supply's output side minus the state block if any)."""
        return self.supply.out_dim - (self.data.n if self.state_strict else 0)

    @property
    def variant(self) -> Variant:
        return Variant.UNKNOWN_OUTPUT if self.known is None else Variant.KNOWN_OUTPUT


@dataclass(frozen=True)
class SynthesisResult:
    k: Matrix
    p: Matrix
    branch: Branch
    margin: float
    alpha: float | None = None
    q: Matrix | None = None
    epsilon: float | None = None
    degenerate_branch_holds: bool = False


@dataclass(frozen=True)
class VerificationReport:
    samples: int
    min_eig: float
    passed: bool
    worst_index: int
    consistent: int


# --- Output augmentation for state-strict supplies ---


@dataclass(frozen=True)
class _Channels:
    """Data, output matrices and noise map as seen by the supply."""

    data: ExperimentData
    known: KnownOutputs | None
    f: Matrix


def _channels(problem: SynthesisProblem) -> _Channels:
    """Stack the state on top of the performance output when the supply is state-strict."""
    if not problem.state_strict:
        return _Channels(problem.data, problem.known, problem.f)
    data = problem.data
    n, m, d = data.n, data.m, problem.noise.d
    f = np.vstack([np.zeros((n, d)), problem.f])
    known = None
    if problem.known is not None:
        known = KnownOutputs(
            np.vstack([np.eye(n), problem.known.c_s]),
            np.vstack([np.zeros((n, m)), problem.known.d_s]),
        )
    else:
        data = ExperimentData(data.u_minus, data.x, np.vstack([data.x_minus, data.y_minus]))
    return _Channels(data, known, f)


def _augment_output(problem: SynthesisProblem, c: Matrix, f: Matrix) -> tuple[Matrix, Matrix]:
    if not problem.state_strict:
        return c, f
    n, d = problem.data.n, problem.noise.d
    return np.vstack([np.eye(n), c]), np.vstack([np.zeros((n, d)), f])


def _dual_supply(problem: SynthesisProblem, mu: Any = None) -> Any:
    """S_hat; for a state-strict supply, affine in mu = 1/epsilon when mu is given."""
    supply = problem.supply
    if isinstance(supply, StateStrictSupply) and mu is not None:
        intercept, slope = supply.dual_affine()
        return intercept + mu * slope
    return dualize(supply).s


# --- Margin-form LMI ---


LiftedBuilder = Callable[[Any, Any, Any], Any]


@dataclass(frozen=True)
class _MarginSolution:
    q: Matrix
    kq: Matrix
    alpha: float
    margin: float
    mu: float | None = None


def _margin_problem(
    name: str,
    n: int,
    m: int,
    lifted: LiftedBuilder,
    n_hat: Matrix,
    s_hat: Any,
    margin: float | None = None,
    mu_bounds: tuple[float, float] | None = None,
) -> tuple[sdpsolve.LmiProblem, float]:
    """Build max t (or min mu at a fixed margin) for M_hat - alpha*N_hat >= t*I.

    N_hat is normalized by its largest entry; the returned scale converts the
    multiplier back.
    """
    scale = float(np.max(np.abs(n_hat))) or 1.0
    problem = sdpsolve.LmiProblem(name)
    q = problem.symmetric("Q", n)
    kq = problem.rectangular("L", m, n)
    alpha = problem.scalar("alpha", lower=0.0)
    if mu_bounds is not None:
        mu = problem.scalar("mu", lower=mu_bounds[0], upper=mu_bounds[1])
        s_hat = s_hat(mu)
        problem.minimize(mu)
    size = n_hat.shape[0]
    if margin is None:
        t = problem.scalar("t", upper=settings.margin_cap)
        problem.maximize(t)
    else:
        t = margin
    problem.require_psd(
        "lifted", lifted(q, kq, s_hat) - alpha * (n_hat / scale) - t * np.eye(size)
    )
    problem.require_psd("storage", q - (settings.q_floor + t) * np.eye(n))
    return problem, scale


def _solve_margin(
    name: str,
    n: int,
    m: int,
    lifted: LiftedBuilder,
    n_hat: Matrix,
    s_hat: Any,
    solver: str | None,
) -> _MarginSolution | Infeasible | Undecided:
    problem, scale = _margin_problem(name, n, m, lifted, n_hat, s_hat)
    outcome = sdpsolve.solve(problem, solver)
    if outcome.status is SolveStatus.INFEASIBLE:
        return Infeasible("backend certified infeasibility", certificate=outcome.dual_certificate)
    if outcome.status is SolveStatus.UNDECIDED:
        return Undecided(outcome.message)

    t = float(outcome.assignment["t"])
    band = settings.undecided_band
    logger.info("%s: optimal margin %.3e", name, t)
    if t <= -band:
        return Infeasible(f"optimal margin {t:.3e} is negative", margin=t)
    if t < band:
        return Undecided(f"optimal margin {t:.3e} is inside the dead band", margin=t)
    return _MarginSolution(
        q=outcome.assignment["Q"],
        kq=outcome.assignment["L"],
        alpha=float(outcome.assignment["alpha"]) / scale,
        margin=t,
    )


def _shrink_epsilon_weight(
    name: str,
    n: int,
    m: int,
    lifted: LiftedBuilder,
    n_hat: Matrix,
    problem: SynthesisProblem,
    first: _MarginSolution,
    solver: str | None,
) -> _MarginSolution:
    """Minimize mu = 1/epsilon keeping half of the stage-one margin."""
    mu_bounds = (1.0 / settings.epsilon_max, first.mu)
    lmi, scale = _margin_problem(
        f"{name}-epsilon",
        n,
        m,
        lifted,
        n_hat,
        lambda mu: _dual_supply(problem, mu),
        margin=0.5 * first.margin,
        mu_bounds=mu_bounds,
    )
    outcome = sdpsolve.solve(lmi, solver)
    if outcome.status is not SolveStatus.FEASIBLE:
        logger.warning(
            "%s: epsilon maximization %s; keeping the requested epsilon", name, outcome.status
        )
        return first
    mu = float(outcome.assignment["mu"])
    logger.info("%s: largest certified epsilon %.6g", name, 1.0 / mu)
    return _MarginSolution(
        q=outcome.assignment["Q"],
        kq=outcome.assignment["L"],
        alpha=float(outcome.assignment["alpha"]) / scale,
        margin=0.5 * first.margin,
        mu=mu,
    )


def _search(
    name: str,
    problem: SynthesisProblem,
    lifted: LiftedBuilder,
    n_hat: Matrix,
    solver: str | None,
) -> _MarginSolution | Infeasible | Undecided:
    n, m = problem.data.n, problem.data.m
    if not problem.maximize_epsilon:
        return _solve_margin(name, n, m, lifted, n_hat, _dual_supply(problem), solver)
    # the supply epsilon is the floor of the search
    mu_max = 1.0 / problem.supply.epsilon
    first = _solve_margin(name, n, m, lifted, n_hat, _dual_supply(problem, mu_max), solver)
    if not isinstance(first, _MarginSolution):
        return first
    first = replace(first, mu=mu_max)
    return _shrink_epsilon_weight(name, n, m, lifted, n_hat, problem, first, solver)


# --- Hypotheses ---


def _require_hypotheses(problem: SynthesisProblem, consistency: ConsistencyForm) -> None:
    problem.supply.require_supply_inertia()
    report = validate_pi_class(consistency.form)
    if not report.in_pi_class:
        raise HypothesisError(
            "pi-class", f"{consistency.variant} consistency form: {report.failures()}"
        )
    log_interior(consistency)


def _recheck(
    m_mat: Matrix, n_mat: Matrix, alpha: float, q: Matrix, tol: float | None = None
) -> float | None:
    """Scaled lambda_min(M - alpha*N) when Q > 0 and it passes, else None."""
    tol = settings.recheck_tol if tol is None else tol
    if not is_pd(q):
        return None
    residual = m_mat - alpha * n_mat
    eig = eigenvalues(residual)
    scale = max(1.0, float(np.max(np.abs(eig))))
    value = float(eig[0]) / scale
    return value if value >= -tol else None


def _finish(
    name: str,
    problem: SynthesisProblem,
    found: _MarginSolution,
    branch: Branch,
    lifted: LiftedBuilder,
    n_hat: Matrix,
    numeric: Callable[[Matrix, Matrix, Matrix], Matrix],
    n_mat: Matrix,
) -> SynthesisResult | Undecided:
    """Extract K = L Q^{-1}, P = Q^{-1} and recheck both the lifted and the reduced LMI."""
    q = found.q
    k = found.kq @ np.linalg.inv(q)
    if found.mu is not None:
        s_hat = _dual_supply(problem, found.mu)
    else:
        s_hat = _dual_supply(problem)
    if _recheck(lifted(q, k @ q, s_hat), n_hat, found.alpha, q) is None:
        logger.warning("%s: lifted recheck of the solver answer failed", name)
        return Undecided("lifted recheck failed", margin=found.margin)
    if _recheck(numeric(q, k, s_hat), n_mat, found.alpha, q) is None:
        logger.warning("%s: numeric recheck of the solver answer failed", name)
        return Undecided("numeric recheck failed", margin=found.margin)

    epsilon = None
    if problem.state_strict:
        epsilon = 1.0 / found.mu if found.mu is not None else problem.supply.epsilon
    return SynthesisResult(
        k=k,
        p=np.linalg.inv(q),
        branch=branch,
        margin=found.margin,
        alpha=found.alpha,
        q=q,
        epsilon=epsilon,
    )


# --- Unknown output matrices ---


def synthesize_unknown_output(
    problem: SynthesisProblem, solver: str | None = None
) -> SynthesisResult | Infeasible | Undecided:
    if problem.known is not None:
        raise ValueError("problem has known output matrices; use synthesize_known_output")
    channels = _channels(problem)
    data, e, f = channels.data, problem.e, channels.f
    if not check_rank(data):
        raise HypothesisError("rank", f"[X-; U-] must have full row rank {data.n + data.m}")
    consistency = build_nu(data, e, f, problem.noise)
    _require_hypotheses(problem, consistency)
    n_mat = consistency.form.matrix
    n_hat = build_hat_nu(data, e, f, problem.noise)
    if not check_positive_eigenvalue(n_hat):
        raise HypothesisError("positive-eigenvalue", "N_hat_u has no positive eigenvalue")

    def lifted(q, kq, s_hat):
        return build_hat_mu(q, kq, e, f, s_hat)

    def numeric(q, k, s_hat):
        return build_mu(q, k, e, f, s_hat)

    found = _search("unknown-output", problem, lifted, n_hat, solver)
    if not isinstance(found, _MarginSolution):
        return found
    return _finish(
        "unknown-output", problem, found, Branch.UNKNOWN_OUTPUT, lifted, n_hat, numeric, n_mat
    )


# --- Known output matrices ---


def _degenerate_branch(problem: SynthesisProblem) -> SynthesisResult | None:
    """u = -D_s^+ C_s x cancels the output when im C_s is in im D_s and
    [I; F]^T S [I; F] >= 0; then P = 0 certifies every consistent plant."""
    if problem.known is None or problem.state_strict:
        return None
    c, d = problem.known.c_s, problem.known.d_s
    if rank(np.hstack([d, c])) != rank(d):
        return None
    noise_gain = np.vstack([np.eye(problem.noise.d), problem.f])
    supply_on_noise = congruence(problem.supply.s, noise_gain)
    if not is_psd(supply_on_noise):
        return None
    k = -pseudo_inverse(d) @ c
    residual = float(np.linalg.norm(c + d @ k, 2)) if c.size else 0.0
    if residual > 1e-9 * (1.0 + float(np.linalg.norm(c, 2))):
        return None
    n = problem.data.n
    return SynthesisResult(
        k=k,
        p=np.zeros((n, n)),
        branch=Branch.KNOWN_OUTPUT_DEGENERATE,
        margin=min_eig(supply_on_noise),
    )


def synthesize_known_output(
    problem: SynthesisProblem, solver: str | None = None
) -> SynthesisResult | Infeasible | Undecided:
    if problem.known is None:
        raise ValueError("problem has no known output matrices; use synthesize_unknown_output")
    channels = _channels(problem)
    data, e, f = channels.data, problem.e, channels.f
    c_s, d_s = channels.known.c_s, channels.known.d_s
    p = c_s.shape[0]
    consistency = build_bar_nk(data, e, problem.noise, p)
    _require_hypotheses(problem, consistency)
    n_mat = consistency.form.matrix
    n_hat = build_hat_nk(data, e, problem.noise, p)
    if not check_positive_eigenvalue(n_hat):
        raise HypothesisError("positive-eigenvalue", "N_hat_k has no positive eigenvalue")

    def lifted(q, kq, s_hat):
        return build_hat_mk(q, kq, c_s, d_s, e, f, s_hat)

    def numeric(q, k, s_hat):
        return build_mk(q, k, c_s, d_s, e, f, s_hat)

    degenerate = _degenerate_branch(problem)
    found = _search("known-output", problem, lifted, n_hat, solver)
    if isinstance(found, _MarginSolution):
        strict = Branch.KNOWN_OUTPUT_STRICT
        result = _finish("known-output", problem, found, strict, lifted, n_hat, numeric, n_mat)
        if isinstance(result, SynthesisResult) and degenerate is not None:
            logger.warning(
                "Output cancellation u = -D_s^+ C_s x also certifies this data; "
                "returning the strict-storage gain"
            )
            return replace(result, degenerate_branch_holds=True)
        if isinstance(result, SynthesisResult):
            return result
        found = result
    if degenerate is not None:
        logger.info("Storage LMI gave %s; output cancellation certifies the data", found.reason)
        return degenerate
    return found


def synthesize(
    problem: SynthesisProblem, solver: str | None = None
) -> SynthesisResult | Infeasible | Undecided:
    if problem.variant is Variant.KNOWN_OUTPUT:
        return synthesize_known_output(problem, solver)
    return synthesize_unknown_output(problem, solver)


@dataclass(frozen=True)
class Diagnostics:
    """Hypothesis checks behind a synthesis verdict; None when not evaluated."""

    supply_inertia: bool
    rank: bool
    pi_class: bool | None = None
    positive_eigenvalue: bool | None = None
    interior_sufficient: bool | None = None
    output_cancellation: bool | None = None


def diagnose(problem: SynthesisProblem) -> Diagnostics:
    """Evaluate every hypothesis without raising."""
    channels = _channels(problem)
    data, e, f = channels.data, problem.e, channels.f
    supply_ok = problem.supply.has_supply_inertia
    rank_ok = check_rank(data)
    if not rank_ok:
        return Diagnostics(supply_ok, rank_ok)
    if channels.known is None:
        consistency = build_nu(data, e, f, problem.noise)
        n_hat = build_hat_nu(data, e, f, problem.noise)
        cancellation = None
    else:
        p = channels.known.c_s.shape[0]
        consistency = build_bar_nk(data, e, problem.noise, p)
        n_hat = build_hat_nk(data, e, problem.noise, p)
        cancellation = _degenerate_branch(problem) is not None
    return Diagnostics(
        supply_inertia=supply_ok,
        rank=rank_ok,
        pi_class=validate_pi_class(consistency.form).in_pi_class,
        positive_eigenvalue=check_positive_eigenvalue(n_hat),
        interior_sufficient=check_interior_sufficient(consistency),
        output_cancellation=cancellation,
    )


# --- Verification ---


def verify_closed_loop(
    problem: SynthesisProblem,
    result: SynthesisResult,
    samples: int | None = None,
    seed: int | None = None,
    tol: float | None = None,
) -> VerificationReport:
    """Check D(P) >= 0 for the closed loop of plants sampled from the consistent set."""
    samples = settings.samples if samples is None else samples
    tol = settings.verify_tol if tol is None else tol
    known = None if problem.known is None else (problem.known.c_s, problem.known.d_s)
    plants = sample_consistent(
        problem.data, problem.e, problem.noise, samples, seed, f=problem.f, known=known
    )
    worst, worst_index, consistent = float("inf"), -1, 0
    for index, plant in enumerate(plants):
        if residual_consistent(
            problem.data, problem.e, problem.noise, plant, known_output=problem.known is not None
        ):
            consistent += 1
        value = _closed_loop_margin(problem, plant, result)
        if value < worst:
            worst, worst_index = value, index
    passed = bool(plants) and worst >= -tol
    logger.info(
        "Verified %d consistent plants: worst scaled lambda_min %.3e (%s)",
        len(plants), worst, "pass" if passed else "FAIL",
    )
    return VerificationReport(len(plants), worst, passed, worst_index, consistent)


def _closed_loop_margin(problem: SynthesisProblem, plant: PlantModel, result: SynthesisResult):
    a, e, c, f = plant.closed_loop(result.k)
    c, f = _augment_output(problem, c, f)
    supply = problem.supply
    if isinstance(supply, StateStrictSupply) and result.epsilon is not None:
        supply = supply.at(result.epsilon)
    value = dissipation_matrix(a, e, c, f, supply, result.p)
    eig = eigenvalues(value)
    return float(eig[0]) / max(1.0, float(np.max(np.abs(eig))))
