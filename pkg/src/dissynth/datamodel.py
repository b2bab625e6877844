"""Plants, noise models, experiment data and the data-consistency forms.

A data set (U-, X, Y-) recorded from x+ = A x + B u + E w, y = C x + D u + F w
with noise rows W- (stacked as columns) constrained by

    [I; W-^T]^T Phi [I; W-^T] >= 0

determines the set of plants consistent with the data. That set is a QMI set
Z_r(N) whose form N is built here, together with the lifted matrices used by
the synthesis LMIs.
"""

import logging
from dataclasses import dataclass
from enum import StrEnum

import numpy as np
import scipy.linalg as sla
from numpy.typing import ArrayLike

from dissynth import sdpsolve
from dissynth.errors import DimensionError, HypothesisError
from dissynth.matcore import (
    Matrix,
    PartitionedForm,
    as_matrix,
    congruence,
    inertia,
    is_pd,
    rank,
    schur_complement,
    symmetrize,
)
from dissynth.qmi import sample_z, transform_w, validate_pi_class, z_membership

logger = logging.getLogger("dissynth.datamodel")


class Variant(StrEnum):
    KNOWN_OUTPUT = "known-output"
    UNKNOWN_OUTPUT = "unknown-output"


@dataclass(frozen=True)
class PlantModel:
    """x+ = A x + B u + E w, y = C x + D u + F w."""

    a: Matrix
    b: Matrix
    c: Matrix
    d: Matrix
    e: Matrix
    f: Matrix

    def __post_init__(self) -> None:
        for name in "abcdef":
            object.__setattr__(self, name, as_matrix(getattr(self, name)))
        n, m, p, nd = self.n, self.m, self.p, self.noise_dim
        expected = {"a": (n, n), "b": (n, m), "c": (p, n), "d": (p, m), "e": (n, nd), "f": (p, nd)}
        for name, shape in expected.items():
            actual = getattr(self, name).shape
            if actual != shape:
                raise DimensionError(f"{name.upper()} must be {shape}, got {actual}")

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def m(self) -> int:
        return self.b.shape[1]

    @property
    def p(self) -> int:
        return self.c.shape[0]

    @property
    def noise_dim(self) -> int:
        return self.e.shape[1]

    def closed_loop(self, k: ArrayLike) -> tuple[Matrix, Matrix, Matrix, Matrix]:
        """(A + B K, E, C + D K, F): the map from noise w to output y under u = K x."""
        km = as_matrix(k)
        if km.shape != (self.m, self.n):
            raise DimensionError(f"K must be ({self.m}, {self.n}), got {km.shape}")
        return self.a + self.b @ km, self.e, self.c + self.d @ km, self.f


@dataclass(frozen=True)
class NoiseModel:
    """Phi of size d + T with split (d, T); pi22 < 0 and Phi in the Pi-class."""

    phi: PartitionedForm

    def __post_init__(self) -> None:
        report = validate_pi_class(self.phi)
        if not report.in_pi_class:
            raise HypothesisError("noise-model", f"Phi is not in the Pi-class: {report.failures()}")
        if not report.pi22_nd:
            raise HypothesisError("noise-model", "Phi_22 must be negative definite")

    @property
    def d(self) -> int:
        return self.phi.q

    @property
    def horizon(self) -> int:
        return self.phi.r

    @classmethod
    def norm_bound(cls, d: int, horizon: int, radius: float = 1.0) -> "NoiseModel":
        """|w(t)| <= radius for every sample, relaxed to W W^T <= T radius^2 I."""
        return cls.energy_bound(d, horizon, horizon * radius**2)

    @classmethod
    def energy_bound(cls, d: int, horizon: int, bound: float) -> "NoiseModel":
        """W W^T <= bound * I."""
        if bound < 0:
            raise ValueError(f"noise bound must be nonnegative, got {bound}")
        zero = np.zeros((d, horizon))
        phi = PartitionedForm.from_blocks(bound * np.eye(d), zero, -np.eye(horizon))
        return cls(phi)

    @classmethod
    def custom(cls, phi: ArrayLike, d: int) -> "NoiseModel":
        pm = as_matrix(phi)
        return cls(PartitionedForm(pm, d, pm.shape[0] - d))

    def scaled(self, factor: float) -> "NoiseModel":
        """Phi with phi11 multiplied by factor (a larger noise set for factor > 1)."""
        return NoiseModel(
            PartitionedForm.from_blocks(factor * self.phi.pi11, self.phi.pi12, self.phi.pi22)
        )

    def contains(self, w: ArrayLike) -> bool:
        """Whether a noise realization W- (d x T) satisfies the bound."""
        return z_membership(self.phi, as_matrix(w).T)


@dataclass(frozen=True)
class ExperimentData:
    """Inputs U- (m x T), states X (n x (T+1)) and optionally outputs Y- (p x T)."""

    u_minus: Matrix
    x: Matrix
    y_minus: Matrix | None = None

    def __post_init__(self) -> None:
        u, x = as_matrix(self.u_minus), as_matrix(self.x)
        horizon = u.shape[1]
        if horizon < 1:
            raise DimensionError("experiment needs at least one sample")
        if x.shape[1] != horizon + 1:
            raise DimensionError(f"X must have T + 1 = {horizon + 1} columns, got {x.shape[1]}")
        object.__setattr__(self, "u_minus", u)
        object.__setattr__(self, "x", x)
        if self.y_minus is not None:
            y = as_matrix(self.y_minus)
            if y.shape[1] != horizon:
                raise DimensionError(f"Y- must have T = {horizon} columns, got {y.shape[1]}")
            object.__setattr__(self, "y_minus", y)

    @property
    def horizon(self) -> int:
        return self.u_minus.shape[1]

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.u_minus.shape[0]

    @property
    def p(self) -> int:
        return 0 if self.y_minus is None else self.y_minus.shape[0]

    @property
    def x_minus(self) -> Matrix:
        return self.x[:, :-1]

    @property
    def x_plus(self) -> Matrix:
        return self.x[:, 1:]

    @property
    def regressors(self) -> Matrix:
        """[X-; U-]."""
        return np.vstack([self.x_minus, self.u_minus])


@dataclass(frozen=True)
class ConsistencyForm:
    form: PartitionedForm
    variant: Variant


def stack_noise_channels(e: ArrayLike, f: ArrayLike) -> tuple[Matrix, Matrix]:
    """Separate process and measurement noise: ([E 0], [0 F]).

    With F of zero columns this returns (E, 0).
    """
    em, fm = as_matrix(e), as_matrix(f)
    n, d1 = em.shape
    p, d2 = fm.shape
    return (
        np.hstack([em, np.zeros((n, d2))]),
        np.hstack([np.zeros((p, d1)), fm]),
    )


def simulate(
    plant: PlantModel,
    x0: ArrayLike,
    w: ArrayLike,
    inputs: ArrayLike | None = None,
    gain: ArrayLike | None = None,
) -> ExperimentData:
    """Run the plant for T = w.shape[1] steps.

    Inputs are the open-loop sequence, u = K x under a gain, or u = K x + v when
    both a gain and an excitation sequence v are given.
    """
    wm = as_matrix(w)
    horizon = wm.shape[1]
    if wm.shape[0] != plant.noise_dim:
        raise DimensionError(f"W must have {plant.noise_dim} rows, got {wm.shape[0]}")
    x = np.zeros((plant.n, horizon + 1))
    x[:, 0] = np.ravel(np.asarray(x0, dtype=float))
    u = np.zeros((plant.m, horizon)) if inputs is None else as_matrix(inputs).copy()
    if u.shape != (plant.m, horizon):
        raise DimensionError(f"inputs must be ({plant.m}, {horizon}), got {u.shape}")
    k = None if gain is None else as_matrix(gain)
    y = np.zeros((plant.p, horizon))
    for t in range(horizon):
        if k is not None:
            u[:, t] += k @ x[:, t]
        x[:, t + 1] = plant.a @ x[:, t] + plant.b @ u[:, t] + plant.e @ wm[:, t]
        y[:, t] = plant.c @ x[:, t] + plant.d @ u[:, t] + plant.f @ wm[:, t]
    return ExperimentData(u, x, y if plant.p else None)


# --- Consistency forms ---


def check_rank(data: ExperimentData, rank_tol: float | None = None) -> bool:
    """rank [X-; U-] = n + m."""
    return rank(data.regressors, rank_tol) == data.n + data.m


def check_positive_eigenvalue(n_mat: ArrayLike, zero_tol: float | None = None) -> bool:
    return inertia(n_mat, zero_tol).pos >= 1


def check_interior_sufficient(form: ConsistencyForm, tol: float | None = None) -> bool:
    """pi22 < 0 and N|pi22 > 0, which gives the consistent set a nonempty interior."""
    n = form.form
    return bool(is_pd(-n.pi22, tol) and is_pd(schur_complement(n), tol))


def _require_rank(data: ExperimentData) -> None:
    if not check_rank(data):
        raise HypothesisError("rank", f"[X-; U-] must have full row rank {data.n + data.m}")


def phi_e(noise: NoiseModel, e: ArrayLike) -> PartitionedForm:
    """Phi_{E^T}: the noise bound seen through the process-noise matrix."""
    return transform_w(noise.phi, as_matrix(e).T)


def phi_g(noise: NoiseModel, e: ArrayLike, f: ArrayLike) -> PartitionedForm:
    """Phi_G with G = [E^T F^T]."""
    return transform_w(noise.phi, np.hstack([as_matrix(e).T, as_matrix(f).T]))


def _check_noise(data: ExperimentData, noise: NoiseModel, e: Matrix) -> None:
    if noise.horizon != data.horizon:
        raise DimensionError(f"Phi is for T = {noise.horizon}, data has T = {data.horizon}")
    if e.shape != (data.n, noise.d):
        raise DimensionError(f"E must be ({data.n}, {noise.d}), got {e.shape}")


def _data_factor(top: Matrix, regressors: Matrix, pad_rows: int = 0) -> Matrix:
    """L = [[I, top], [0, -[X-; U-]]] with pad_rows zero rows inserted after the first block."""
    k, horizon = top.shape
    rows = [
        np.hstack([np.eye(k), top]),
        np.zeros((pad_rows, k + horizon)),
        np.hstack([np.zeros((regressors.shape[0], k)), -regressors]),
    ]
    return np.vstack(rows)


def build_nk(data: ExperimentData, e: ArrayLike, noise: NoiseModel) -> ConsistencyForm:
    """N_k with split (n, n+m); Z_r(N_k) holds [A B]^T of every consistent (A, B)."""
    em = as_matrix(e)
    _check_noise(data, noise, em)
    factor = _data_factor(data.x_plus, data.regressors)
    matrix = congruence(phi_e(noise, em).matrix, factor.T)
    return ConsistencyForm(PartitionedForm(matrix, data.n, data.n + data.m), Variant.KNOWN_OUTPUT)


def build_nu(
    data: ExperimentData, e: ArrayLike, f: ArrayLike, noise: NoiseModel
) -> ConsistencyForm:
    """N_u with split (n+p, n+m); Z_r(N_u) holds [[A^T C^T], [B^T D^T]]."""
    if data.y_minus is None:
        raise HypothesisError("missing-outputs", "unknown-output forms need recorded outputs Y-")
    em, fm = as_matrix(e), as_matrix(f)
    _check_noise(data, noise, em)
    if fm.shape != (data.p, noise.d):
        raise DimensionError(f"F must be ({data.p}, {noise.d}), got {fm.shape}")
    top = np.vstack([data.x_plus, data.y_minus])
    factor = _data_factor(top, data.regressors)
    matrix = congruence(phi_g(noise, em, fm).matrix, factor.T)
    split = (data.n + data.p, data.n + data.m)
    return ConsistencyForm(PartitionedForm(matrix, *split), Variant.UNKNOWN_OUTPUT)


def build_bar_nk(data: ExperimentData, e: ArrayLike, noise: NoiseModel, p: int) -> ConsistencyForm:
    """N_k padded with p zero rows/columns after the state block, split (n+p, n+m)."""
    _require_rank(data)
    em = as_matrix(e)
    _check_noise(data, noise, em)
    factor = _data_factor(data.x_plus, data.regressors, pad_rows=p)
    matrix = congruence(phi_e(noise, em).matrix, factor.T)
    split = (data.n + p, data.n + data.m)
    return ConsistencyForm(PartitionedForm(matrix, *split), Variant.KNOWN_OUTPUT)


def _pad(n_mat: Matrix, extra: int) -> Matrix:
    return sla.block_diag(n_mat, np.zeros((extra, extra)))


def build_hat_nk(data: ExperimentData, e: ArrayLike, noise: NoiseModel, p: int) -> Matrix:
    """N_bar_k padded with n trailing zero rows/columns."""
    return _pad(build_bar_nk(data, e, noise, p).form.matrix, data.n)


def build_hat_nu(data: ExperimentData, e: ArrayLike, f: ArrayLike, noise: NoiseModel) -> Matrix:
    """N_u padded with n trailing zero rows/columns."""
    return _pad(build_nu(data, e, f, noise).form.matrix, data.n)


# --- Lifted synthesis matrices ---


def _finish(value):
    return symmetrize(value) if isinstance(value, np.ndarray) else value


def r_hat(q, e: ArrayLike, f: ArrayLike, s_hat: ArrayLike):
    """R_hat = diag(Q, 0_p) + G^T S_hat G with G = [[0, I_p], [E^T, F^T]].

    Q and S_hat may be numeric or cvxpy expressions.
    """
    em, fm = as_matrix(e), as_matrix(f)
    n, p, d = em.shape[0], fm.shape[0], em.shape[1]
    g = np.block([[np.zeros((p, n)), np.eye(p)], [em.T, fm.T]])
    storage = sdpsolve.bmat([[q, np.zeros((n, p))], [np.zeros((p, n)), np.zeros((p, p))]])
    if s_hat.shape != (p + d, p + d):
        raise DimensionError(f"S_hat must be {p + d} x {p + d}, got {s_hat.shape}")
    return _finish(storage + g.T @ s_hat @ g)


def build_hat_mu(q, kq, e: ArrayLike, f: ArrayLike, s_hat):
    """[[R_hat, 0, 0], [0, 0, [Q; L]], [0, [Q L^T], Q]] (affine in Q, L and S_hat)."""
    em, fm = as_matrix(e), as_matrix(f)
    n, p = em.shape[0], fm.shape[0]
    m = kq.shape[0]
    rhat = r_hat(q, em, fm, s_hat)
    ql = sdpsolve.bmat([[q], [kq]])
    return _finish(
        sdpsolve.bmat(
            [
                [rhat, np.zeros((n + p, n + m)), np.zeros((n + p, n))],
                [np.zeros((n + m, n + p)), np.zeros((n + m, n + m)), ql],
                [np.zeros((n, n + p)), ql.T, q],
            ]
        )
    )


def build_hat_mk(q, kq, c_s: ArrayLike, d_s: ArrayLike, e: ArrayLike, f: ArrayLike, s_hat):
    """Lifted known-output matrix; its Schur complement w.r.t. the trailing Q is M_k."""
    cm, dm = as_matrix(c_s), as_matrix(d_s)
    em, fm = as_matrix(e), as_matrix(f)
    n, p, m = em.shape[0], cm.shape[0], dm.shape[1]
    if p == 0:
        # no outputs: the C_s, D_s blocks vanish and the lift is the unknown-output one
        return build_hat_mu(q, kq, em, fm, s_hat)
    rhat = r_hat(q, em, fm, s_hat)
    output = -cm @ q @ cm.T - cm @ kq.T @ dm.T - dm @ kq @ cm.T
    h_hat = sdpsolve.bmat([[np.zeros((n, n)), np.zeros((n, p))], [np.zeros((p, n)), output]])
    b12 = sdpsolve.bmat([[np.zeros((n, n)), np.zeros((n, m))], [-cm @ q, -cm @ kq.T]])
    b13 = sdpsolve.bmat([[np.zeros((n, n))], [dm @ kq]])
    b23 = sdpsolve.bmat([[q], [kq]])
    return _finish(
        sdpsolve.bmat(
            [
                [rhat + h_hat, b12, b13],
                [b12.T, np.zeros((n + m, n + m)), b23],
                [b13.T, b23.T, q],
            ]
        )
    )


def _gain_block(q: Matrix, k: Matrix) -> Matrix:
    """-[I; K] Q [I; K]^T."""
    ik = np.vstack([np.eye(q.shape[0]), k])
    return -(ik @ q @ ik.T)


def build_mu(q: ArrayLike, k: ArrayLike, e: ArrayLike, f: ArrayLike, s_hat: ArrayLike) -> Matrix:
    """M_u = diag(R_hat, -[I; K] Q [I; K]^T)."""
    qm, km = as_matrix(q), as_matrix(k)
    return symmetrize(sla.block_diag(r_hat(qm, e, f, as_matrix(s_hat)), _gain_block(qm, km)))


def build_mk(
    q: ArrayLike,
    k: ArrayLike,
    c_s: ArrayLike,
    d_s: ArrayLike,
    e: ArrayLike,
    f: ArrayLike,
    s_hat: ArrayLike,
) -> Matrix:
    """M_k: the known-output matrix, with the closed-loop output C_s + D_s K folded in."""
    qm, km = as_matrix(q), as_matrix(k)
    cl = as_matrix(c_s) + as_matrix(d_s) @ km
    n, p, m = qm.shape[0], cl.shape[0], km.shape[0]
    rhat = r_hat(qm, e, f, as_matrix(s_hat))
    h = sla.block_diag(np.zeros((n, n)), -cl @ qm @ cl.T)
    b12 = np.block([[np.zeros((n, n)), np.zeros((n, m))], [-cl @ qm, -cl @ qm @ km.T]])
    return symmetrize(np.block([[rhat + h, b12], [b12.T, _gain_block(qm, km)]]))


# --- Consistent plants ---


def sample_consistent(
    data: ExperimentData,
    e: ArrayLike,
    noise: NoiseModel,
    count: int,
    seed: int | None = None,
    f: ArrayLike | None = None,
    known: tuple[ArrayLike, ArrayLike] | None = None,
    boundary: int | None = None,
) -> list[PlantModel]:
    """Draw plants consistent with the data.

    Unknown outputs (f given, known None): samples of Z_r(N_u) give (A, B, C, D).
    Known outputs (known = (C_s, D_s)): samples of Z_r(N_k) give (A, B) and C, D
    are the known matrices. The first plant is the center of the consistent set.
    Plants come straight from the matrix ellipsoid, not from noise draws W- pushed
    through the data equations, so their distribution differs from that construction.
    """
    _require_rank(data)
    em = as_matrix(e)
    n, m = data.n, data.m
    plants = []
    if known is None and f is not None:
        fm = as_matrix(f)
        form = build_nu(data, em, fm, noise).form
        for z in sample_z(form, count, seed, boundary):
            theta = z.T
            a, b = theta[:n, :n], theta[:n, n:]
            c, d = theta[n:, :n], theta[n:, n:]
            plants.append(PlantModel(a, b, c, d, em, fm))
        return plants

    if known is None:
        c, d = np.zeros((0, n)), np.zeros((0, m))
    else:
        c, d = as_matrix(known[0]), as_matrix(known[1])
    fm = np.zeros((c.shape[0], em.shape[1])) if f is None else as_matrix(f)
    form = build_nk(data, em, noise).form
    for z in sample_z(form, count, seed, boundary):
        theta = z.T
        plants.append(PlantModel(theta[:, :n], theta[:, n:], c, d, em, fm))
    return plants


def residual_consistent(
    data: ExperimentData,
    e: ArrayLike,
    noise: NoiseModel,
    plant: PlantModel,
    known_output: bool = True,
    tol: float | None = None,
) -> bool:
    """Whether the residual of (data, plant) is an admissible noise image.

    Known outputs: X+ - A X- - B U- must lie in E times an admissible W-.
    Unknown outputs: [X+; Y-] - [[A, B], [C, D]] [X-; U-] must lie in G^T W-.
    """
    em = as_matrix(e)
    theta = np.hstack([plant.a, plant.b])
    if known_output:
        residual = data.x_plus - theta @ data.regressors
        return z_membership(phi_e(noise, em), residual.T, tol)
    if data.y_minus is None:
        raise HypothesisError("missing-outputs", "unknown-output residuals need outputs Y-")
    theta = np.vstack([theta, np.hstack([plant.c, plant.d])])
    residual = np.vstack([data.x_plus, data.y_minus]) - theta @ data.regressors
    return z_membership(phi_g(noise, em, plant.f), residual.T, tol)


def log_interior(form: ConsistencyForm) -> None:
    if not check_interior_sufficient(form):
        logger.warning(
            "%s consistency set may have empty interior; the synthesis condition is then "
            "only sufficient",
            form.variant,
        )

