"""Test :mod:`dissynth.datamodel`."""

import numpy as np
import pytest
from conftest import HORIZON, run_experiment

from dissynth.datamodel import (
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
    build_nk,
    build_nu,
    check_positive_eigenvalue,
    check_rank,
    r_hat,
    residual_consistent,
    sample_consistent,
    simulate,
    stack_noise_channels,
)
from dissynth.dissipativity import (
    dual_dissipation_matrix,
    dualize,
    l2_gain_supply,
    passive_supply,
)
from dissynth.errors import DimensionError, HypothesisError
from dissynth.matcore import PartitionedForm, min_eig, schur_complement
from dissynth.qmi import qmi_value, validate_pi_class, z_membership


def lifted_schur(matrix: np.ndarray, n: int) -> np.ndarray:
    """Schur complement with respect to the trailing n x n block."""
    size = matrix.shape[0]
    return schur_complement(PartitionedForm(matrix, size - n, n))


class TestSimulation:
    def test_first_step(self, plant):
        rng = np.random.default_rng(0)
        w = rng.uniform(size=(1, 4))
        u = rng.standard_normal((1, 4))
        data = simulate(plant, [1.0, -1.0], w, inputs=u)
        x0 = np.array([1.0, -1.0])
        x1 = plant.a @ x0 + plant.b @ u[:, 0] + plant.e @ w[:, 0]
        y0 = plant.c @ x0 + plant.d @ u[:, 0] + plant.f @ w[:, 0]
        np.testing.assert_allclose(data.x[:, 1], x1)
        np.testing.assert_allclose(data.y_minus[:, 0], y0)
        assert data.horizon == 4

    def test_feedback_adds_excitation(self, plant):
        k = np.array([[0.1, -0.2]])
        v = np.ones((1, 3))
        data = simulate(plant, [1.0, 0.0], np.zeros((1, 3)), inputs=v, gain=k)
        np.testing.assert_allclose(data.u_minus[:, 0], k @ np.array([1.0, 0.0]) + 1.0)
        np.testing.assert_array_equal(v, np.ones((1, 3)))

    def test_shapes(self, plant):
        with pytest.raises(DimensionError):
            simulate(plant, [0.0, 0.0], np.zeros((2, 3)))
        with pytest.raises(DimensionError):
            ExperimentData(np.zeros((1, 3)), np.zeros((2, 3)))

    def test_plant_shapes(self, plant):
        with pytest.raises(DimensionError):
            PlantModel(plant.a, plant.b, plant.c, plant.d, plant.e, np.zeros((1, 2)))

    def test_stacked_noise_channels(self):
        e, f = stack_noise_channels(np.ones((2, 1)), 2 * np.ones((1, 1)))
        np.testing.assert_array_equal(e, [[1.0, 0.0], [1.0, 0.0]])
        np.testing.assert_array_equal(f, [[0.0, 2.0]])


class TestNoiseModel:
    def test_norm_bound(self):
        noise = NoiseModel.norm_bound(1, 30)
        np.testing.assert_allclose(noise.phi.pi11, [[30.0]])
        np.testing.assert_allclose(noise.phi.pi22, -np.eye(30))
        assert noise.contains(np.ones((1, 30)))
        assert not noise.contains(1.1 * np.ones((1, 30)))

    def test_rejects_unbounded(self):
        with pytest.raises(HypothesisError) as excinfo:
            NoiseModel.custom(np.diag([1.0, 0.0]), 1)
        assert excinfo.value.hypothesis == "noise-model"

    def test_scaled(self):
        noise = NoiseModel.energy_bound(2, 5, 3.0).scaled(0.5)
        np.testing.assert_allclose(noise.phi.pi11, 1.5 * np.eye(2))


class TestConsistencyForms:
    def test_true_plant_is_consistent(self, experiment):
        plant, data, noise = experiment.plant, experiment.data, experiment.noise
        nk = build_nk(data, plant.e, noise)
        assert nk.variant is Variant.KNOWN_OUTPUT
        assert z_membership(nk.form, np.hstack([plant.a, plant.b]).T)
        nu = build_nu(data, plant.e, plant.f, noise)
        theta = np.block([[plant.a, plant.b], [plant.c, plant.d]])
        assert (nu.form.q, nu.form.r) == (3, 3)
        assert z_membership(nu.form, theta.T)

    def test_forms_are_in_pi_class(self, experiment):
        plant, data, noise = experiment.plant, experiment.data, experiment.noise
        assert check_rank(data)
        for form in (build_nk(data, plant.e, noise), build_nu(data, plant.e, plant.f, noise)):
            report = validate_pi_class(form.form)
            assert report.in_pi_class
            assert report.pi22_nd

    def test_residual_agrees_with_membership(self, experiment):
        plant, data, noise = experiment.plant, experiment.data, experiment.noise
        assert residual_consistent(data, plant.e, noise, plant)
        assert residual_consistent(data, plant.e, noise, plant, known_output=False)
        wrong = PlantModel(plant.a + 0.5, plant.b, plant.c, plant.d, plant.e, plant.f)
        nk = build_nk(data, plant.e, noise)
        member = z_membership(nk.form, np.hstack([wrong.a, wrong.b]).T)
        assert residual_consistent(data, plant.e, noise, wrong) == member
        assert not member

    def test_noise_through_e(self, experiment):
        """[I; Z]^T N_k [I; Z] is the noise bound seen through E."""
        plant, data, noise = experiment.plant, experiment.data, experiment.noise
        nk = build_nk(data, plant.e, noise)
        ew = plant.e @ experiment.w
        value = qmi_value(nk.form, np.hstack([plant.a, plant.b]).T)
        expected = 30.0 * plant.e @ plant.e.T - ew @ ew.T
        np.testing.assert_allclose(value, expected, atol=1e-8)

    def test_bar_form_pads_outputs(self, experiment):
        plant, data, noise = experiment.plant, experiment.data, experiment.noise
        bar = build_bar_nk(data, plant.e, noise, p=1).form
        assert (bar.q, bar.r) == (3, 3)
        np.testing.assert_array_equal(bar.matrix[2], np.zeros(6))
        hat = build_hat_nk(data, plant.e, noise, p=1)
        assert hat.shape == (8, 8)
        assert check_positive_eigenvalue(hat)

    def test_rank_deficient(self, plant):
        experiment = run_experiment(plant, seed=0, horizon=2)
        with pytest.raises(HypothesisError) as excinfo:
            build_bar_nk(experiment.data, plant.e, experiment.noise, p=1)
        assert excinfo.value.hypothesis == "rank"

    def test_unknown_needs_outputs(self, experiment):
        data = ExperimentData(experiment.data.u_minus, experiment.data.x)
        with pytest.raises(HypothesisError):
            build_nu(data, experiment.plant.e, experiment.plant.f, experiment.noise)

    def test_horizon_mismatch(self, experiment):
        with pytest.raises(DimensionError):
            build_nk(experiment.data, experiment.plant.e, NoiseModel.norm_bound(1, HORIZON + 1))


class TestLiftedMatrices:
    """The lifted LMIs reduce to M - alpha*N and to the dual dissipation matrix."""

    q = np.array([[2.0, 0.3], [0.3, 1.0]])
    k = np.array([[0.4, -0.7]])
    alpha = 0.8

    def s_hat(self) -> np.ndarray:
        return dualize(passive_supply(1)).s

    def test_r_hat_size(self, plant):
        assert r_hat(self.q, plant.e, plant.f, self.s_hat()).shape == (3, 3)
        with pytest.raises(DimensionError):
            r_hat(self.q, plant.e, plant.f, np.eye(3))

    def test_unknown_output_lift(self, plant, experiment):
        kq = self.k @ self.q
        n_hat = build_hat_nu(experiment.data, plant.e, plant.f, experiment.noise)
        lifted = build_hat_mu(self.q, kq, plant.e, plant.f, self.s_hat()) - self.alpha * n_hat
        n_mat = build_nu(experiment.data, plant.e, plant.f, experiment.noise).form.matrix
        expected = build_mu(self.q, self.k, plant.e, plant.f, self.s_hat()) - self.alpha * n_mat
        np.testing.assert_allclose(lifted_schur(lifted, 2), expected, atol=1e-8)

    def test_known_output_lift(self, plant, experiment):
        kq = self.k @ self.q
        n_hat = build_hat_nk(experiment.data, plant.e, experiment.noise, p=1)
        n_bar = build_bar_nk(experiment.data, plant.e, experiment.noise, p=1).form.matrix
        args = (plant.c, plant.d, plant.e, plant.f, self.s_hat())
        lifted = build_hat_mk(self.q, kq, *args) - self.alpha * n_hat
        expected = build_mk(self.q, self.k, *args) - self.alpha * n_bar
        np.testing.assert_allclose(lifted_schur(lifted, 2), expected, atol=1e-8)

    def test_unknown_output_matrix_is_dual_dissipation(self, plant):
        m_u = PartitionedForm(build_mu(self.q, self.k, plant.e, plant.f, self.s_hat()), 3, 3)
        theta = np.block([[plant.a, plant.b], [plant.c, plant.d]])
        a, e, c, f = plant.closed_loop(self.k)
        expected = dual_dissipation_matrix(a, e, c, f, dualize(passive_supply(1)), self.q)
        np.testing.assert_allclose(qmi_value(m_u, theta.T), expected, atol=1e-10)

    def test_known_output_matrix_is_dual_dissipation(self, plant):
        args = (plant.c, plant.d, plant.e, plant.f, self.s_hat())
        m_k = PartitionedForm(build_mk(self.q, self.k, *args), 3, 3)
        z = np.vstack([np.hstack([plant.a.T, np.zeros((2, 1))]), np.hstack([plant.b.T, [[0.0]]])])
        a, e, c, f = plant.closed_loop(self.k)
        expected = dual_dissipation_matrix(a, e, c, f, dualize(passive_supply(1)), self.q)
        np.testing.assert_allclose(qmi_value(m_k, z), expected, atol=1e-10)


class TestSampling:
    def test_known_output_samples_are_consistent(self, experiment):
        plant, data, noise = experiment.plant, experiment.data, experiment.noise
        plants = sample_consistent(
            data, plant.e, noise, 20, seed=1, f=plant.f, known=(plant.c, plant.d)
        )
        assert len(plants) == 20
        for sampled in plants:
            np.testing.assert_array_equal(sampled.c, plant.c)
            assert residual_consistent(data, plant.e, noise, sampled)

    def test_unknown_output_samples_are_consistent(self, experiment):
        plant, data, noise = experiment.plant, experiment.data, experiment.noise
        plants = sample_consistent(data, plant.e, noise, 20, seed=2, f=plant.f)
        for sampled in plants:
            assert (sampled.p, sampled.m) == (1, 1)
            assert residual_consistent(data, plant.e, noise, sampled, known_output=False)


def random_setting(rng: np.random.Generator) -> tuple[PlantModel, ExperimentData, NoiseModel]:
    """A small random plant run on noise inside the unit ball for every sample."""
    n, m, p, d = rng.integers(1, 4, size=4)
    horizon = int(rng.integers(n + m + 1, 13))
    plant = PlantModel(
        a=0.5 * rng.standard_normal((n, n)) / np.sqrt(n),
        b=rng.standard_normal((n, m)),
        c=rng.standard_normal((p, n)),
        d=rng.standard_normal((p, m)),
        e=rng.standard_normal((n, d)),
        f=rng.standard_normal((p, d)),
    )
    w = rng.standard_normal((d, horizon))
    w *= 0.99 * rng.uniform(size=horizon) ** (1.0 / d) / np.linalg.norm(w, axis=0)
    inputs = rng.standard_normal((m, horizon))
    data = simulate(plant, rng.standard_normal(n), w, inputs=inputs)
    return plant, data, NoiseModel.norm_bound(int(d), horizon)


class TestRandomInstances:
    def test_lifts_reduce_to_the_plain_matrices(self):
        rng = np.random.default_rng(40)
        for _ in range(50):
            plant, data, noise = random_setting(rng)
            n, m = plant.n, plant.m
            h = rng.standard_normal((n, n))
            q = h @ h.T + np.eye(n)
            k = rng.standard_normal((m, n))
            alpha = rng.uniform(0.01, 2.0)
            s_hat = dualize(l2_gain_supply(plant.noise_dim, plant.p, rng.uniform(0.5, 5.0))).s

            unknown = (
                build_hat_mu(q, k @ q, plant.e, plant.f, s_hat)
                - alpha * build_hat_nu(data, plant.e, plant.f, noise),
                build_mu(q, k, plant.e, plant.f, s_hat)
                - alpha * build_nu(data, plant.e, plant.f, noise).form.matrix,
            )
            args = (plant.c, plant.d, plant.e, plant.f, s_hat)
            known = (
                build_hat_mk(q, k @ q, *args)
                - alpha * build_hat_nk(data, plant.e, noise, p=plant.p),
                build_mk(q, k, *args)
                - alpha * build_bar_nk(data, plant.e, noise, p=plant.p).form.matrix,
            )
            for lifted, reduced in (unknown, known):
                scale = max(1.0, float(np.max(np.abs(lifted))))
                np.testing.assert_allclose(
                    lifted_schur(lifted, n), reduced, rtol=0, atol=1e-8 * scale
                )
                lifted_eig, reduced_eig = min_eig(lifted), min_eig(reduced)
                if min(abs(lifted_eig), abs(reduced_eig)) > 1e-6 * scale:
                    assert (lifted_eig > 0) == (reduced_eig > 0)

    def test_true_plant_is_a_member(self):
        rng = np.random.default_rng(41)
        for _ in range(100):
            plant, data, noise = random_setting(rng)
            nk = build_nk(data, plant.e, noise).form
            assert z_membership(nk, np.hstack([plant.a, plant.b]).T)
            nu = build_nu(data, plant.e, plant.f, noise).form
            theta = np.block([[plant.a, plant.b], [plant.c, plant.d]])
            assert z_membership(nu, theta.T)

    def test_sampled_plants_are_members(self, experiment):
        plant, data, noise = experiment.plant, experiment.data, experiment.noise
        nk = build_nk(data, plant.e, noise).form
        known = sample_consistent(
            data, plant.e, noise, 1000, seed=42, f=plant.f, known=(plant.c, plant.d)
        )
        assert len(known) == 1000
        assert all(z_membership(nk, np.hstack([s.a, s.b]).T) for s in known)

        nu = build_nu(data, plant.e, plant.f, noise).form
        unknown = sample_consistent(data, plant.e, noise, 1000, seed=43, f=plant.f)
        assert len(unknown) == 1000
        for s in unknown:
            theta = np.block([[s.a, s.b], [s.c, s.d]])
            assert z_membership(nu, theta.T)
