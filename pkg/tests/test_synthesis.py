"""Test :mod:`dissynth.synthesis`."""

from dataclasses import replace

import numpy as np
import pytest
from conftest import HORIZON, Experiment, example_problem, run_experiment

from dissynth import synthesis
from dissynth.datamodel import ExperimentData, NoiseModel, PlantModel, simulate
from dissynth.dissipativity import SupplyRate, l2_gain_supply, passive_supply
from dissynth.errors import DimensionError, HypothesisError
from dissynth.matcore import min_eig
from dissynth.sdpsolve import Infeasible, Undecided
from dissynth.synthesis import (
    Branch,
    KnownOutputs,
    SynthesisProblem,
    SynthesisResult,
    diagnose,
    synthesize,
    synthesize_known_output,
    synthesize_unknown_output,
    verify_closed_loop,
)


def cancellation_problem(seed: int = 0) -> SynthesisProblem:
    """y = u with no noise on the output: u = 0 makes every plant lossless."""
    plant = PlantModel(
        a=np.array([[0.5, 0.2], [-0.1, 0.8]]),
        b=np.array([[0.0], [1.0]]),
        c=np.zeros((1, 2)),
        d=np.ones((1, 1)),
        e=np.array([[1.0], [0.5]]),
        f=np.zeros((1, 1)),
    )
    rng = np.random.default_rng(seed)
    horizon = 20
    w = rng.uniform(-1.0, 1.0, size=(1, horizon))
    data = simulate(plant, rng.standard_normal(2), w, inputs=rng.standard_normal((1, horizon)))
    return SynthesisProblem(
        data=data,
        e=plant.e,
        f=plant.f,
        noise=NoiseModel.norm_bound(1, horizon),
        supply=passive_supply(1),
        known=KnownOutputs(plant.c, plant.d),
    )


class TestProblemValidation:
    def test_shapes(self, experiment):
        problem = example_problem(experiment)
        with pytest.raises(DimensionError):
            replace(problem, e=np.ones((3, 1)))
        with pytest.raises(DimensionError):
            replace(problem, known=KnownOutputs(np.ones((1, 3)), np.ones((1, 1))))

    def test_unknown_needs_outputs(self, experiment):
        data = ExperimentData(experiment.data.u_minus, experiment.data.x)
        with pytest.raises(DimensionError):
            replace(example_problem(experiment, known=False), data=data)

    def test_epsilon_maximization_needs_state_strict(self):
        problem = cancellation_problem()
        with pytest.raises(ValueError):
            replace(problem, maximize_epsilon=True)

    def test_variant_entry_points(self, experiment):
        with pytest.raises(ValueError):
            synthesize_unknown_output(example_problem(experiment))
        with pytest.raises(ValueError):
            synthesize_known_output(example_problem(experiment, known=False))


class TestHypotheses:
    def test_rank(self, plant):
        experiment = run_experiment(plant, seed=1, horizon=2)
        with pytest.raises(HypothesisError) as excinfo:
            synthesize(example_problem(experiment))
        assert excinfo.value.hypothesis == "rank"

    def test_rank_unknown_output(self, plant):
        experiment = run_experiment(plant, seed=1, horizon=2)
        with pytest.raises(HypothesisError) as excinfo:
            synthesize(example_problem(experiment, known=False))
        assert excinfo.value.hypothesis == "rank"

    def test_supply_inertia(self):
        problem = replace(cancellation_problem(), supply=SupplyRate(np.eye(2), 1, 1))
        with pytest.raises(HypothesisError) as excinfo:
            synthesize(problem)
        assert excinfo.value.hypothesis == "supply-inertia"

    def test_diagnose_reports_without_raising(self, plant):
        experiment = run_experiment(plant, seed=1, horizon=2)
        report = diagnose(example_problem(experiment))
        assert report.supply_inertia
        assert not report.rank
        assert report.pi_class is None

    def test_diagnose(self, experiment):
        report = diagnose(example_problem(experiment))
        assert report.supply_inertia and report.rank
        assert report.pi_class and report.positive_eigenvalue
        assert report.output_cancellation is False


class TestOutputCancellation:
    def test_degenerate_branch(self):
        problem = cancellation_problem()
        assert diagnose(problem).output_cancellation
        result = synthesize(problem)
        assert isinstance(result, SynthesisResult)
        assert result.branch is Branch.KNOWN_OUTPUT_DEGENERATE
        np.testing.assert_allclose(result.k, np.zeros((1, 2)), atol=1e-12)
        np.testing.assert_array_equal(result.p, np.zeros((2, 2)))

    def test_degenerate_gain_verifies(self):
        problem = cancellation_problem()
        result = synthesize(problem)
        c, d = problem.known.c_s, problem.known.d_s
        assert np.linalg.norm(c + d @ result.k, 2) <= 1e-9 * (1.0 + np.linalg.norm(c, 2))
        report = verify_closed_loop(problem, result, samples=100, seed=3)
        assert report.passed
        assert report.samples == 100


@pytest.mark.slow
class TestStateStrictPassivity:
    """Two-state plant, 30 noisy samples, state-strict passivity from w to y."""

    @pytest.mark.parametrize("seed", [7, 11])
    def test_known_output(self, plant, seed):
        problem = example_problem(run_experiment(plant, seed=seed))
        result = synthesize(problem)
        assert isinstance(result, SynthesisResult)
        assert result.branch is Branch.KNOWN_OUTPUT_STRICT
        assert min_eig(result.p) > 0
        assert result.alpha >= 0
        np.testing.assert_allclose(result.p @ result.q, np.eye(2), atol=1e-8)
        report = verify_closed_loop(problem, result, samples=50, seed=seed + 1)
        assert report.passed
        assert report.consistent == report.samples

    @pytest.mark.parametrize("seed", [7, 11])
    def test_unknown_output(self, plant, seed):
        problem = example_problem(run_experiment(plant, seed=seed), known=False)
        result = synthesize(problem)
        assert isinstance(result, SynthesisResult)
        assert result.branch is Branch.UNKNOWN_OUTPUT
        report = verify_closed_loop(problem, result, samples=50, seed=seed + 1)
        assert report.passed

    def test_epsilon_maximization(self, experiment):
        problem = example_problem(experiment, maximize_epsilon=True)
        result = synthesize(problem)
        assert isinstance(result, SynthesisResult)
        assert result.epsilon >= problem.supply.epsilon
        assert verify_closed_loop(problem, result, samples=30, seed=0).passed

    def test_smaller_noise_stays_feasible(self, experiment):
        problem = example_problem(experiment)
        assert isinstance(synthesize(problem), SynthesisResult)
        tighter = replace(problem, noise=problem.noise.scaled(0.5))
        assert isinstance(synthesize(tighter), SynthesisResult)


def noise_free_experiment(plant: PlantModel, seed: int = 0) -> Experiment:
    """Exact data under the zero noise bound W W^T <= 0."""
    rng = np.random.default_rng(seed)
    w = np.zeros((plant.noise_dim, HORIZON))
    inputs = 20.0 * rng.standard_normal((plant.m, HORIZON))
    data = simulate(plant, rng.standard_normal(plant.n), w, inputs=inputs)
    return Experiment(plant, data, w, NoiseModel.energy_bound(plant.noise_dim, HORIZON, 0.0))


class TestNoiseFreeData:
    @pytest.mark.parametrize("known", [True, False])
    def test_no_positive_eigenvalue(self, plant, known):
        problem = example_problem(noise_free_experiment(plant), known=known)
        report = diagnose(problem)
        assert report.pi_class
        assert report.positive_eigenvalue is False
        with pytest.raises(HypothesisError) as excinfo:
            synthesize(problem)
        assert excinfo.value.hypothesis == "positive-eigenvalue"


class TestNoOutputs:
    def test_known_output_without_outputs(self, plant, experiment):
        problem = SynthesisProblem(
            data=experiment.data,
            e=plant.e,
            f=np.zeros((0, 1)),
            noise=experiment.noise,
            supply=l2_gain_supply(1, 0, 1.0),
            known=KnownOutputs(np.zeros((0, 2)), np.zeros((0, 1))),
        )
        assert problem.outputs == 0
        result = synthesize(problem)
        assert isinstance(result, SynthesisResult)
        assert result.k.shape == (1, 2)
        assert verify_closed_loop(problem, result, samples=20, seed=0).passed


@pytest.mark.slow
class TestAcceptance:
    """State-strict passivity on the two-state plant over many noise realizations."""

    @pytest.mark.parametrize("known", [True, False])
    def test_most_seeds_certify(self, plant, known):
        passed = 0
        for seed in range(100):
            problem = example_problem(run_experiment(plant, seed=seed), known=known)
            result = synthesize(problem)
            if not isinstance(result, SynthesisResult) or result.epsilon < 1e-3:
                continue
            if verify_closed_loop(problem, result, samples=200, seed=seed).passed:
                passed += 1
        assert passed >= 95

    def test_tighter_noise_is_never_worse(self, plant):
        for seed in range(20):
            problem = example_problem(run_experiment(plant, seed=seed))
            if not isinstance(synthesize(problem), SynthesisResult):
                continue
            tighter = replace(problem, noise=problem.noise.scaled(0.75))
            assert not isinstance(synthesize(tighter), Infeasible), seed

    def test_lifted_recheck_rejects_a_wrong_answer(self, monkeypatch, experiment):
        original = synthesis.build_hat_mk

        def shifted(*args):
            value = original(*args)
            if isinstance(value, np.ndarray):
                return value - 1e3 * np.eye(value.shape[0])
            return value

        monkeypatch.setattr(synthesis, "build_hat_mk", shifted)
        outcome = synthesize(example_problem(experiment))
        assert isinstance(outcome, Undecided)
        assert outcome.reason == "lifted recheck failed"
