"""Semidefinite feasibility through cvxpy.

An LmiProblem declares named decision variables (symmetric, rectangular, scalar)
and affine symmetric-matrix expressions that must be PSD. solve() compiles the
problem with cvxpy (standard conic form, PSD cones vectorized with the sqrt(2)
scaled upper triangle), hands it to a backend adapter and accepts a feasible answer
only after an independent recheck of every constraint with matcore.

Backend adapters are selected by name ("clarabel", "scs", "cvxopt", "mosek"),
defaulting to settings.solver (env DISSYNTH_SOLVER).
"""

import logging
from dataclasses import dataclass, field
from enum import StrEnum
from typing import Any, Protocol

import cvxpy as cp
import numpy as np

from dissynth import matcore
from dissynth.config import settings
from dissynth.errors import DimensionError, SolverError
from dissynth.matcore import Matrix

logger = logging.getLogger("dissynth.sdpsolve")


class VariableKind(StrEnum):
    SYMMETRIC = "symmetric"
    RECTANGULAR = "rectangular"
    SCALAR = "scalar"


class SolveStatus(StrEnum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class VariableSpec:
    name: str
    kind: VariableKind
    shape: tuple[int, ...]
    lower: float | None = None
    upper: float | None = None


@dataclass(frozen=True)
class LmiConstraint:
    label: str
    expr: cp.Expression


@dataclass(frozen=True)
class Infeasible:
    """Proven infeasibility (solver certificate or certified negative margin)."""

    reason: str
    margin: float | None = None
    certificate: dict[str, Any] | None = None


@dataclass(frozen=True)
class Undecided:
    """Numerical trouble; neither feasibility nor infeasibility is certified."""

    reason: str
    margin: float | None = None


@dataclass
class SolveOutcome:
    status: SolveStatus
    assignment: dict[str, Matrix | float] = field(default_factory=dict)
    objective: float | None = None
    dual_certificate: dict[str, Matrix] | None = None
    recheck_margin: float | None = None
    backend: str = ""
    message: str = ""


def _shape(block: Any) -> tuple[int, ...]:
    if isinstance(block, cp.Expression):
        return block.shape
    return matcore.as_matrix(block).shape


def bmat(rows: list[list[Any]]) -> Any:
    """Block matrix from numpy and/or cvxpy blocks (np.block when all constant).

    cvxpy has no zero-size constants, so empty block rows and columns are dropped
    before cp.bmat.
    """
    if any(isinstance(block, cp.Expression) for row in rows for block in row):
        kept = [[block for block in row if _shape(block)[1]] for row in rows]
        return cp.bmat([row for row in kept if row and _shape(row[0])[0]])
    return np.block([[matcore.as_matrix(block) for block in row] for row in rows])


class LmiProblem:
    """Named decision variables plus PSD constraints and an optional linear objective."""

    def __init__(self, name: str = "lmi") -> None:
        self.name = name
        self.specs: dict[str, VariableSpec] = {}
        self.variables: dict[str, cp.Variable] = {}
        self.constraints: list[LmiConstraint] = []
        self.objective: cp.Expression | None = None
        self.sense = "feasibility"

    # --- Variables ---

    def _declare(self, spec: VariableSpec, var: cp.Variable) -> cp.Variable:
        if spec.name in self.variables:
            raise ValueError(f"variable {spec.name!r} declared twice")
        self.specs[spec.name] = spec
        self.variables[spec.name] = var
        return var

    def symmetric(
        self, name: str, n: int, lower: float | None = None, upper: float | None = None
    ) -> cp.Variable:
        """Symmetric n x n variable; bounds mean lower*I <= X <= upper*I."""
        var = self._declare(
            VariableSpec(name, VariableKind.SYMMETRIC, (n, n), lower, upper),
            cp.Variable((n, n), symmetric=True, name=name),
        )
        if lower is not None:
            self.require_psd(f"{name} >= {lower:g}*I", var - lower * np.eye(n))
        if upper is not None:
            self.require_psd(f"{name} <= {upper:g}*I", upper * np.eye(n) - var)
        return var

    def rectangular(self, name: str, rows: int, cols: int) -> cp.Variable:
        return self._declare(
            VariableSpec(name, VariableKind.RECTANGULAR, (rows, cols)),
            cp.Variable((rows, cols), name=name),
        )

    def scalar(self, name: str, lower: float | None = None, upper: float | None = None):
        var = self._declare(
            VariableSpec(name, VariableKind.SCALAR, (), lower, upper), cp.Variable(name=name)
        )
        if lower is not None:
            self.require_psd(f"{name} >= {lower:g}", (var - lower) * np.ones((1, 1)))
        if upper is not None:
            self.require_psd(f"{name} <= {upper:g}", (upper - var) * np.ones((1, 1)))
        return var

    # --- Constraints and objective ---

    def require_psd(self, label: str, expr: Any) -> None:
        """Require the symmetric part of an affine square expression to be PSD."""
        if not isinstance(expr, cp.Expression):
            expr = cp.Constant(matcore.as_matrix(expr))
        if len(expr.shape) != 2 or expr.shape[0] != expr.shape[1]:
            raise DimensionError(f"constraint {label!r} is not square: shape {expr.shape}")
        if not expr.is_affine():
            raise ValueError(f"constraint {label!r} is not affine in the decision variables")
        self.constraints.append(LmiConstraint(label, 0.5 * (expr + expr.T)))

    def maximize(self, expr: cp.Expression) -> None:
        self.objective, self.sense = expr, "maximize"

    def minimize(self, expr: cp.Expression) -> None:
        self.objective, self.sense = expr, "minimize"

    def compile(self) -> tuple[cp.Problem, list[cp.Constraint]]:
        cones = [c.expr >> 0 for c in self.constraints]
        if self.objective is None:
            objective = cp.Minimize(0)
        elif self.sense == "maximize":
            objective = cp.Maximize(self.objective)
        else:
            objective = cp.Minimize(self.objective)
        return cp.Problem(objective, cones), cones

    def assignment(self) -> dict[str, Matrix | float] | None:
        """Current variable values, or None if any variable has no value."""
        values: dict[str, Matrix | float] = {}
        for name, var in self.variables.items():
            if var.value is None:
                return None
            if self.specs[name].kind is VariableKind.SCALAR:
                values[name] = float(var.value)
            elif self.specs[name].kind is VariableKind.SYMMETRIC:
                values[name] = matcore.symmetrize(var.value)
            else:
                values[name] = np.asarray(var.value, dtype=float)
        return values


# --- Backend adapters ---


class SolverAdapter(Protocol):
    name: str

    def solve(self, problem: cp.Problem) -> str:
        """Solve in place, leaving values on the cvxpy variables; return cvxpy status."""
        ...


@dataclass
class CvxpyAdapter:
    name: str
    solver: str
    options: dict[str, Any] = field(default_factory=dict)

    def available(self) -> bool:
        return self.solver in cp.installed_solvers()

    def solve(self, problem: cp.Problem) -> str:
        problem.solve(solver=self.solver, **self.options)
        return problem.status


def _registry(gap_tol: float) -> dict[str, CvxpyAdapter]:
    return {
        "clarabel": CvxpyAdapter(
            "clarabel",
            cp.CLARABEL,
            {"tol_gap_abs": gap_tol, "tol_gap_rel": gap_tol, "tol_feas": gap_tol, "max_iter": 400},
        ),
        "scs": CvxpyAdapter(
            "scs", cp.SCS, {"eps_abs": gap_tol, "eps_rel": gap_tol, "max_iters": 200_000}
        ),
        "cvxopt": CvxpyAdapter(
            "cvxopt", cp.CVXOPT, {"abstol": gap_tol, "reltol": gap_tol, "feastol": gap_tol}
        ),
        "mosek": CvxpyAdapter("mosek", cp.MOSEK),
    }


def available_backends() -> list[str]:
    return [name for name, adapter in _registry(settings.gap_tol).items() if adapter.available()]


def get_adapter(name: str | None = None, gap_tol: float | None = None) -> CvxpyAdapter:
    name = (name or settings.solver).lower()
    gap_tol = settings.gap_tol if gap_tol is None else gap_tol
    registry = _registry(gap_tol)
    if name not in registry:
        raise SolverError(f"unknown solver backend {name!r}; choose from {sorted(registry)}")
    adapter = registry[name]
    if not adapter.available():
        raise SolverError(f"solver backend {name!r} is not installed")
    return adapter


# --- Solve and recheck ---


def _constraint_margins(problem: LmiProblem, assignment: dict[str, Any]) -> list[float]:
    """Scaled lambda_min of every constraint evaluated at the assignment."""
    saved = {name: var.value for name, var in problem.variables.items()}
    try:
        for name, var in problem.variables.items():
            var.value = assignment[name]
        margins = []
        for constraint in problem.constraints:
            value = matcore.symmetrize(constraint.expr.value)
            eig = matcore.eigenvalues(value)
            scale = max(1.0, float(np.max(np.abs(eig))))
            margins.append(float(eig[0]) / scale)
        return margins
    finally:
        for name, var in problem.variables.items():
            var.value = saved[name]


def recheck(problem: LmiProblem, assignment: dict[str, Any], tol: float | None = None) -> bool:
    """Evaluate every constraint at the assignment and test PSD with matcore."""
    tol = settings.recheck_tol if tol is None else tol
    missing = set(problem.variables) - set(assignment)
    if missing:
        raise ValueError(f"assignment is missing variables {sorted(missing)}")
    return all(margin >= -tol for margin in _constraint_margins(problem, assignment))


def solve(
    problem: LmiProblem,
    backend: "str | SolverAdapter | None" = None,
    recheck_tol: float | None = None,
) -> SolveOutcome:
    recheck_tol = settings.recheck_tol if recheck_tol is None else recheck_tol
    if not problem.constraints:
        return SolveOutcome(SolveStatus.FEASIBLE, problem.assignment() or {}, recheck_margin=0.0)

    adapter = get_adapter(backend) if backend is None or isinstance(backend, str) else backend
    compiled, cones = problem.compile()
    logger.info(
        "Solving %s with %s (%d variables, %d constraints)",
        problem.name, adapter.name, len(problem.variables), len(cones),
    )

    try:
        status = adapter.solve(compiled)
    except (cp.error.SolverError, SolverError) as e:
        logger.warning("%s: backend %s failed: %s", problem.name, adapter.name, e)
        return SolveOutcome(SolveStatus.UNDECIDED, backend=adapter.name, message=str(e))

    logger.debug("%s: backend status %s, objective %s", problem.name, status, compiled.value)

    if status == cp.INFEASIBLE:
        certificate = {
            c.label: cone.dual_value
            for c, cone in zip(problem.constraints, cones, strict=True)
            if cone.dual_value is not None
        }
        return SolveOutcome(
            SolveStatus.INFEASIBLE,
            dual_certificate=certificate,
            backend=adapter.name,
            message="primal infeasibility certified by the backend",
        )

    if status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
        return SolveOutcome(
            SolveStatus.UNDECIDED, backend=adapter.name, message=f"backend status {status}"
        )

    assignment = problem.assignment()
    if assignment is None:
        return SolveOutcome(
            SolveStatus.UNDECIDED, backend=adapter.name, message="backend returned no values"
        )

    margin = min(_constraint_margins(problem, assignment))
    if margin < -recheck_tol:
        logger.warning(
            "%s: backend reported %s but recheck failed (scaled margin %.3e)",
            problem.name, status, margin,
        )
        return SolveOutcome(
            SolveStatus.UNDECIDED,
            assignment,
            recheck_margin=margin,
            backend=adapter.name,
            message=f"recheck failed with scaled margin {margin:.3e}",
        )

    objective = None if problem.objective is None else float(compiled.value)
    return SolveOutcome(
        SolveStatus.FEASIBLE,
        assignment,
        objective=objective,
        recheck_margin=margin,
        backend=adapter.name,
        message=f"backend status {status}",
    )
