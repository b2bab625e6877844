"""Dissynth configuration via Pydantic Settings."""

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    model_config = {"env_prefix": "DISSYNTH_"}

    # Backend adapter for semidefinite feasibility (DISSYNTH_SOLVER)
    solver: str = "clarabel"
    debug: bool = False

    # Matrix tolerances
    sym_tol: float = 1e-9
    zero_tol: float = 1e-9  # eigenvalue zero band, scaled by max(1, ||A||)
    rank_tol: float = 1e-10  # singular values below rank_tol * sigma_max are zero
    psd_tol: float = 1e-8

    # Solver / certificate tolerances
    gap_tol: float = 1e-9
    recheck_tol: float = 1e-7
    verify_tol: float = 1e-7
    undecided_band: float = 1e-9
    margin_cap: float = 1.0

    # Synthesis
    q_floor: float = 1e-6  # Q >= q_floor * I realizes "Q positive definite"
    epsilon_min: float = 1e-6
    epsilon_max: float = 1e6

    # S-lemma search
    alpha_max: float = 1e6
    golden_tol: float = 1e-12

    # Verification sampling
    samples: int = 200
    boundary_samples: int = 10


settings = Settings()
