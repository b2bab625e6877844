"""Shared fixtures: a two-state plant with passivity-type requirements and its data."""

from dataclasses import dataclass

import numpy as np
import pytest

from dissynth.datamodel import ExperimentData, NoiseModel, PlantModel, simulate
from dissynth.dissipativity import state_strict_passive_supply
from dissynth.synthesis import KnownOutputs, SynthesisProblem

HORIZON = 30


@dataclass(frozen=True)
class Experiment:
    plant: PlantModel
    data: ExperimentData
    w: np.ndarray
    noise: NoiseModel


def example_plant() -> PlantModel:
    return PlantModel(
        a=np.array([[-0.292, 1.551], [-0.469, 0.711]]),
        b=np.array([[-0.066], [-0.397]]),
        c=np.array([[0.573, -0.462]]),
        d=np.array([[0.857]]),
        e=np.array([[0.534], [0.233]]),
        f=np.array([[0.474]]),
    )


def run_experiment(
    plant: PlantModel, seed: int, horizon: int = HORIZON, scale: float = 20.0
) -> Experiment:
    """Uniform noise in [0, 1] under a unit norm bound, Gaussian excitation."""
    rng = np.random.default_rng(seed)
    w = rng.uniform(0.0, 1.0, size=(plant.noise_dim, horizon))
    inputs = scale * rng.standard_normal((plant.m, horizon))
    x0 = rng.standard_normal(plant.n)
    data = simulate(plant, x0, w, inputs=inputs)
    return Experiment(plant, data, w, NoiseModel.norm_bound(plant.noise_dim, horizon))


def example_problem(
    experiment: Experiment, known: bool = True, maximize_epsilon: bool = False
) -> SynthesisProblem:
    plant = experiment.plant
    return SynthesisProblem(
        data=experiment.data,
        e=plant.e,
        f=plant.f,
        noise=experiment.noise,
        supply=state_strict_passive_supply(plant.n, plant.noise_dim, 1e-3),
        known=KnownOutputs(plant.c, plant.d) if known else None,
        maximize_epsilon=maximize_epsilon,
    )


@pytest.fixture
def plant() -> PlantModel:
    return example_plant()


@pytest.fixture
def experiment(plant: PlantModel) -> Experiment:
    return run_experiment(plant, seed=7)
