"""Dissynth CLI entry point.

Exit codes: 0 success/feasible, 1 I/O or validation error, 2 infeasible,
3 hypothesis failure, 4 undecided.
"""

import functools
import json
import logging
import sys
from collections.abc import Callable
from pathlib import Path
from typing import TypeVar

import click
import numpy as np
from pydantic import BaseModel, ValidationError

from dissynth import __version__
from dissynth.config import settings
from dissynth.datamodel import simulate
from dissynth.dissipativity import StorageCertificate, analyze_dissipativity
from dissynth.errors import DissynthError, HypothesisError, SolverError
from dissynth.matcore import PartitionedForm, min_eig
from dissynth.qmi import SlemmaCertificate, slemma
from dissynth.schema import (
    SCHEMAS,
    AnalysisFile,
    DiagnosticsBlock,
    GenConfig,
    ModelFile,
    ProblemFile,
    ResultFile,
    SlemmaFile,
    SlemmaResultFile,
    VerificationBlock,
    from_matrix,
    to_matrix,
)
from dissynth.sdpsolve import Infeasible, Undecided
from dissynth.synthesis import (
    Branch,
    SynthesisProblem,
    SynthesisResult,
    diagnose,
    synthesize,
    verify_closed_loop,
)

logger = logging.getLogger("dissynth")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INFEASIBLE = 2
EXIT_HYPOTHESIS = 3
EXIT_UNDECIDED = 4

M = TypeVar("M", bound=BaseModel)


def _load(model: type[M], path: str) -> M:
    return model.model_validate_json(Path(path).read_text())


def _write(model: BaseModel, output: str | None) -> None:
    text = model.model_dump_json(by_alias=True, exclude_none=True, indent=2)
    if output:
        Path(output).write_text(text + "\n")
        logger.info("Wrote %s", output)
    else:
        click.echo(text)


def _exit_codes(command: Callable[..., int]) -> Callable[..., None]:
    """Map expected failures to exit codes; the command returns its own code."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs) -> None:
        try:
            code = command(*args, **kwargs)
        except HypothesisError as e:
            logger.error("Hypothesis %r does not hold: %s", e.hypothesis, e)
            code = EXIT_HYPOTHESIS
        except ValidationError as e:
            logger.error("Invalid input:\n%s", e)
            code = EXIT_ERROR
        except (OSError, ValueError, SolverError, DissynthError) as e:
            logger.error("%s", e)
            code = EXIT_ERROR
        sys.exit(code)

    return wrapper


@click.group()
@click.version_option(__version__, prog_name="dissynth")
@click.option("--debug", is_flag=True, default=settings.debug, help="Debug logging")
@click.option("--tol", type=float, default=settings.psd_tol, help="PSD tolerance")
@click.option("--solver", default=settings.solver, help="Backend (clarabel/scs/cvxopt/mosek)")
def main(debug: bool, tol: float, solver: str) -> None:
    """Dissynth: data-driven dissipative state-feedback synthesis."""
    logging.basicConfig(
        level=logging.DEBUG if debug else logging.INFO,
        format="%(levelname)s: %(message)s",
    )
    settings.debug = debug
    settings.psd_tol = tol
    settings.solver = solver


# --- gen ---


def _draw_noise(config: GenConfig, rng: np.random.Generator) -> np.ndarray:
    d, horizon = config.dims.d, config.dims.horizon
    law = config.noise_law
    match law.kind:
        case "uniform":
            return rng.uniform(law.low, law.high, size=(d, horizon))
        case "ball":
            directions = rng.standard_normal((d, horizon))
            directions /= np.linalg.norm(directions, axis=0)
            return directions * law.radius * rng.uniform(size=horizon) ** (1.0 / d)
        case _:
            return np.zeros((d, horizon))


def generate(config: GenConfig, seed: int | None = None) -> ProblemFile:
    """Simulate the true plant and record a full problem file (including W_minus)."""
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    plant = config.plant()
    dims = config.dims
    noise = config.noise.build(dims.d, dims.horizon)

    w = _draw_noise(config, rng)
    if not noise.contains(w):
        raise ValueError("noiseLaw: drawn noise violates the declared noise model")
    x0 = rng.standard_normal(dims.n) if config.x0 is None else np.asarray(config.x0)
    excitation = config.inputs.scale * rng.standard_normal((dims.m, dims.horizon))
    gain = None
    if config.inputs.kind == "feedback":
        gain = to_matrix("inputs.K", config.inputs.k, dims.m, dims.n)
    data = simulate(plant, x0, w, inputs=excitation, gain=gain)
    logger.info("Simulated %d samples (seed %s)", dims.horizon, seed)

    return ProblemFile.model_validate(
        {
            "dims": dims.model_dump(by_alias=True),
            "mode": config.mode,
            "seed": seed,
            "E": from_matrix(plant.e),
            "F": from_matrix(plant.f),
            "C_s": from_matrix(plant.c),
            "D_s": from_matrix(plant.d),
            "U_minus": from_matrix(data.u_minus),
            "X": from_matrix(data.x),
            "Y_minus": from_matrix(data.y_minus) if data.y_minus is not None else None,
            "W_minus": from_matrix(w),
            "supply": config.supply.model_dump(by_alias=True, exclude_none=True),
            "noise": config.noise.model_dump(by_alias=True, exclude_none=True),
        }
    )


@main.command()
@click.option("--input", "input_path", required=True, help="Generator config (JSON)")
@click.option("--output", default=None, help="Problem file to write (default: stdout)")
@click.option("--seed", type=int, default=None, help="Override the config seed")
@_exit_codes
def gen(input_path: str, output: str | None, seed: int | None) -> int:
    """Generate a synthetic experiment from a true plant."""
    _write(generate(_load(GenConfig, input_path), seed), output)
    return EXIT_OK


# --- synth / verify ---


def _verification(
    problem: SynthesisProblem, result: SynthesisResult, samples: int, seed: int | None
) -> VerificationBlock:
    report = verify_closed_loop(problem, result, samples=samples, seed=seed)
    return VerificationBlock(
        samples=report.samples,
        min_eig=report.min_eig,
        passed=report.passed,
        consistent=report.consistent,
        seed=seed,
    )


def _summary(result: ResultFile) -> None:
    click.echo(f"status: {result.status}", err=True)
    if result.branch is not None:
        click.echo(f"branch: {result.branch}", err=True)
    if result.feasibility_margin is not None:
        click.echo(f"feasibility margin: {result.feasibility_margin:.6g}", err=True)
    if result.k is not None:
        click.echo(f"||K||: {np.linalg.norm(result.k, 2):.6g}", err=True)
    if result.p is not None:
        click.echo(f"lambda_min(P): {min_eig(np.asarray(result.p)):.6g}", err=True)
    if result.epsilon is not None:
        click.echo(f"epsilon: {result.epsilon:.6g}", err=True)
    if result.verification is not None:
        v = result.verification
        verdict = "pass" if v.passed else "FAIL"
        click.echo(
            f"verification: {v.samples} samples, minEig {v.min_eig:.3e} ({verdict})", err=True
        )
    if result.diagnostics is not None:
        for name, value in result.diagnostics.model_dump(by_alias=True).items():
            if value is not None:
                click.echo(f"  {name}: {'ok' if value else 'fails'}", err=True)
    if result.reason:
        click.echo(f"reason: {result.reason}", err=True)


@main.command()
@click.option("--input", "input_path", required=True, help="Problem file (JSON)")
@click.option("--output", default=None, help="Result file to write (default: stdout)")
@click.option("--mode", type=click.Choice(["known", "unknown"]), default=None)
@click.option("--seed", type=int, default=None, help="Verification sampling seed")
@click.option("--samples", type=int, default=settings.samples, help="Verification samples")
@_exit_codes
def synth(
    input_path: str, output: str | None, mode: str | None, seed: int | None, samples: int
) -> int:
    """Synthesize K (and storage P) from a problem file."""
    problem_file = _load(ProblemFile, input_path).with_mode(mode)
    problem = problem_file.to_problem()
    diagnostics = DiagnosticsBlock(**vars(diagnose(problem)))
    seed = problem_file.seed if seed is None else seed

    outcome = synthesize(problem)
    match outcome:
        case SynthesisResult():
            verification = None
            if samples > 0:
                verification = _verification(problem, outcome, samples, seed)
            result = ResultFile(
                status="feasible",
                branch=outcome.branch.value,
                k=from_matrix(outcome.k),
                p=from_matrix(outcome.p),
                alpha=outcome.alpha,
                epsilon=outcome.epsilon,
                feasibility_margin=outcome.margin,
                verification=verification,
                diagnostics=diagnostics,
            )
            code = EXIT_OK
        case Infeasible():
            result = ResultFile(
                status="infeasible",
                feasibility_margin=outcome.margin,
                reason=outcome.reason,
                diagnostics=diagnostics,
            )
            code = EXIT_INFEASIBLE
        case Undecided():
            result = ResultFile(
                status="undecided",
                feasibility_margin=outcome.margin,
                reason=outcome.reason,
                diagnostics=diagnostics,
            )
            code = EXIT_UNDECIDED

    _write(result, output)
    _summary(result)
    return code


@main.command()
@click.option("--input", "input_path", required=True, help="Problem file (JSON)")
@click.option("--result", "result_path", required=True, help="Result file from synth")
@click.option("--output", default=None, help="Verification report to write (default: stdout)")
@click.option("--mode", type=click.Choice(["known", "unknown"]), default=None)
@click.option("--seed", type=int, default=None, help="Sampling seed")
@click.option("--samples", type=int, default=settings.samples, help="Sampled plants")
@_exit_codes
def verify(
    input_path: str,
    result_path: str,
    output: str | None,
    mode: str | None,
    seed: int | None,
    samples: int,
) -> int:
    """Re-check a synthesized controller on freshly sampled consistent plants."""
    problem = _load(ProblemFile, input_path).with_mode(mode).to_problem()
    stored = _load(ResultFile, result_path)
    if stored.status != "feasible":
        raise ValueError(f"result status is {stored.status!r}; nothing to verify")
    n, m = problem.data.n, problem.data.m
    result = SynthesisResult(
        k=to_matrix("K", stored.k, m, n),
        p=to_matrix("P", stored.p, n, n),
        branch=Branch(stored.branch),
        margin=stored.feasibility_margin or 0.0,
        alpha=stored.alpha,
        epsilon=stored.epsilon,
    )
    block = _verification(problem, result, samples, seed)
    _write(block, output)
    verdict = "pass" if block.passed else "FAIL"
    click.echo(
        f"verification: {block.samples} samples, minEig {block.min_eig:.3e} ({verdict})", err=True
    )
    return EXIT_OK if block.passed else EXIT_INFEASIBLE


# --- analyze / slemma / schema ---


@main.command()
@click.option("--input", "input_path", required=True, help="Model file (JSON)")
@click.option("--output", default=None, help="Analysis report to write (default: stdout)")
@_exit_codes
def analyze(input_path: str, output: str | None) -> int:
    """Search a storage function for a given plant and supply rate."""
    model = _load(ModelFile, input_path)
    a, b, c, d = model.matrices()
    supply = model.supply.build(model.dims.m, model.dims.p, model.dims.n)
    outcome = analyze_dissipativity(a, b, c, d, supply, strict=model.strict)
    match outcome:
        case StorageCertificate():
            report = AnalysisFile(
                status="feasible", p=from_matrix(outcome.p), margin=outcome.margin
            )
            code = EXIT_OK
        case Infeasible():
            report = AnalysisFile(status="infeasible", reason=outcome.reason)
            code = EXIT_INFEASIBLE
        case Undecided():
            report = AnalysisFile(status="undecided", reason=outcome.reason)
            code = EXIT_UNDECIDED
    _write(report, output)
    click.echo(f"status: {report.status}", err=True)
    return code


@main.command(name="slemma")
@click.option("--input", "input_path", required=True, help="S-lemma query (JSON)")
@click.option("--output", default=None, help="Certificate to write (default: stdout)")
@_exit_codes
def slemma_command(input_path: str, output: str | None) -> int:
    """Decide whether Z_r(N) is contained in Z_r(M)."""
    query = _load(SlemmaFile, input_path)
    size = query.q + query.r
    m_form = PartitionedForm(to_matrix("M", query.m, size, size), query.q, query.r)
    n_form = PartitionedForm(to_matrix("N", query.n, size, size), query.q, query.r)
    outcome = slemma(m_form, n_form)
    feasible = isinstance(outcome, SlemmaCertificate)
    report = SlemmaResultFile(
        status="feasible" if feasible else "infeasible",
        alpha=outcome.alpha,
        residual_min_eig=outcome.residual_min_eig,
    )
    _write(report, output)
    click.echo(f"status: {report.status} (alpha {report.alpha:.6g})", err=True)
    return EXIT_OK if feasible else EXIT_INFEASIBLE


@main.command()
@click.argument("name", type=click.Choice(sorted(SCHEMAS)))
def schema(name: str) -> None:
    """Print the JSON schema of a file type."""
    click.echo(json.dumps(SCHEMAS[name].model_json_schema(by_alias=True), indent=2))
