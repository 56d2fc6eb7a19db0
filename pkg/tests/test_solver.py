import numpy as np
import pytest
import scipy.sparse as sp
from scipy.linalg import expm

from couplediff import solver as solver_mod
from couplediff.grid import GridSpec, ScalarField, l2_norm
from couplediff.model import ConstantDiffusivity, DiffusivityParams, LambdaField, ModelConfig, ValidationError
from couplediff.operators import assemble_neg_laplacian, assemble_operator_A, gradient_magnitude
from couplediff.solver import (
    LinearSolverError,
    PicardError,
    SolverConfig,
    State,
    cfl_stable_dt,
    run,
    solve_linear,
    step,
)
from conftest import random_field, sine_field


def pm_model(spec, lam=0.5, eps=0.0, delta=1.0, g=(1.0, 1.0, 1.0, 2.0)):
    lamf = lam if isinstance(lam, LambdaField) else LambdaField.constant(spec, lam)
    return ModelConfig(DiffusivityParams(*g), lamf, eps, delta)


# -- solve_linear -------------------------------------------------------------

def test_solve_zero_rhs(spec8):
    K = assemble_neg_laplacian(spec8)
    A = sp.identity(64) + 1e-2 * K
    x = solve_linear(A, ScalarField.zeros(spec8))
    assert np.all(x.values == 0)


def test_solve_matches_dense(spec8, rng):
    A = (sp.identity(64) + 1e-2 * assemble_neg_laplacian(spec8)).tocsr()
    b = random_field(spec8, rng)
    x = solve_linear(A, b, tol=1e-12)
    ref = np.linalg.solve(A.toarray(), b.values.ravel())
    np.testing.assert_allclose(x.values.ravel(), ref, rtol=1e-8, atol=1e-10)
    assert np.linalg.norm(b.values.ravel() - A @ x.values.ravel()) <= 1e-12 * np.linalg.norm(b.values)


def test_solve_callable_and_cap(spec8, rng):
    A = (sp.identity(64) + assemble_neg_laplacian(spec8)).tocsr()
    b = rng.standard_normal(64)
    x = solve_linear(lambda y: A @ y, b, tol=1e-10, max_iter=500, diag=A.diagonal())
    np.testing.assert_allclose(A @ x, b, atol=1e-8)
    with pytest.raises(LinearSolverError):
        solve_linear(A, b, tol=1e-14, max_iter=2)


def test_solve_rejects_indefinite():
    with pytest.raises(LinearSolverError):
        solve_linear(np.diag([1.0, -1.0]), np.array([1.0, 1.0]))


# -- configuration ------------------------------------------------------------

@pytest.mark.parametrize("kw", [dict(dt=0), dict(scheme="rk4"), dict(picard_tol=0), dict(picard_max=0),
                                dict(linsolve_max=0)])
def test_solver_config_rejects(kw):
    with pytest.raises(ValueError):
        SolverConfig(**kw)


def test_run_validates_model(spec8):
    bad = pm_model(spec8, lam=0.0)
    z = ScalarField.zeros(spec8)
    with pytest.raises(ValidationError, match="lambda0 > 0"):
        run(z, z, 0.01, bad, SolverConfig())


# -- basic behaviour ----------------------------------------------------------

def test_zero_is_equilibrium(spec8):
    z = ScalarField.zeros(spec8)
    traj = run(z, z, 0.01, pm_model(spec8), SolverConfig(dt=1e-3))
    assert np.all(traj.u_snaps == 0) and np.all(traj.v_snaps == 0)


def test_short_horizon_single_step(spec8, rng):
    u0 = random_field(spec8, rng)
    traj = run(u0, gradient_magnitude(u0), 1e-4, pm_model(spec8), SolverConfig(dt=1e-3))
    assert len(traj.times) == 2 and traj.times[-1] == pytest.approx(1e-3)
    assert list(traj.snap_times) == [0.0, traj.times[-1]]


def test_snapshot_stride_keeps_endpoints(spec8, rng):
    u0 = random_field(spec8, rng)
    traj = run(u0, gradient_magnitude(u0), 0.0105, pm_model(spec8), SolverConfig(dt=1e-3, snapshot_stride=4))
    assert traj.snap_index[0] == 0 and traj.snap_index[-1] == len(traj.times) - 1
    assert list(traj.snap_index[1:-1]) == [4, 8]
    assert traj.times[-1] - 0.0105 < 1e-3
    assert len(traj.u_norm) == len(traj.times) == len(traj.phi_sq)


def test_heat_decay_coarse():
    s = GridSpec.unit_square(31)
    u0 = sine_field(s)
    m = ModelConfig(ConstantDiffusivity(1.0), LambdaField.constant(s, 0.5))
    traj = run(u0, ScalarField.zeros(s), 0.1, m, SolverConfig(dt=1e-4, snapshot_stride=0))
    ratio = traj.u_norm[-1] / (np.exp(-2 * np.pi**2 * 0.1) * l2_norm(u0))
    assert abs(ratio - 1) < 0.02


def test_v_heat_reduction_coarse():
    s = GridSpec.unit_square(31)
    v0 = sine_field(s)
    m = ModelConfig(DiffusivityParams(), LambdaField.constant(s, 1.0))
    traj = run(ScalarField.zeros(s), v0, 0.1, m, SolverConfig(dt=1e-4, snapshot_stride=0))
    ratio = traj.v_norm[-1] / (np.exp(-2 * np.pi**2 * 0.1) * l2_norm(v0))
    assert abs(ratio - 1) < 0.02


def test_reflection_symmetry():
    s = GridSpec(17, 13)
    X, Y = s.coords()
    u0 = ScalarField(s, np.exp(-((X - 0.5) ** 2 + (Y - 0.3) ** 2) / 0.05) * np.sin(np.pi * Y))
    lam = LambdaField(s, 0.4 + 0.3 * np.cos(np.pi * (X - 0.5)))
    traj = run(u0, gradient_magnitude(u0), 0.02, pm_model(s, lam=lam, delta=0.7, eps=1e-3), SolverConfig(dt=2e-3))
    for u, v in zip(traj.u_snaps, traj.v_snaps):
        np.testing.assert_allclose(u, u[:, ::-1], atol=1e-12)
        np.testing.assert_allclose(v, v[:, ::-1], atol=1e-12)


def test_norm_nonincreasing(rng):
    s = GridSpec(15, 15)
    u0 = random_field(s, rng)
    traj = run(u0, gradient_magnitude(u0), 0.02, pm_model(s, eps=1e-3), SolverConfig(dt=1e-3))
    assert np.all(np.diff(traj.u_norm) <= 1e-13 * traj.u_norm[0])


def test_linear_limit_matches_matrix_exponential():
    # delta = 0: u_t = -eps A u exactly linear; v_t = lam Lap v with constant lambda
    s = GridSpec(8, 8)
    u0 = sine_field(s) + 0.3 * sine_field(s, 2, 1)
    v0 = sine_field(s, 1, 2)
    eps, lam, T, dt = 1e-3, 0.6, 0.05, 1e-4
    m = pm_model(s, lam=lam, eps=eps, delta=0.0)
    traj = run(u0, v0, T, m, SolverConfig(dt=dt, snapshot_stride=0, scale_initial=False))
    Tn = traj.times[-1]
    u_ref = expm(-eps * Tn * assemble_operator_A(s).toarray()) @ u0.values.ravel()
    v_ref = expm(-lam * Tn * assemble_neg_laplacian(s).toarray()) @ v0.values.ravel()
    assert np.abs(traj.u_snaps[-1].ravel() - u_ref).max() < 1e-2 * np.abs(u_ref).max()
    assert np.abs(traj.v_snaps[-1].ravel() - v_ref).max() < 1e-2 * np.abs(v_ref).max()
    assert np.all(np.diff(traj.u_norm) <= 0) and np.all(np.diff(traj.v_norm) <= 0)


# -- energy, Phi and positivity ------------------------------------------------

def test_energy_and_phi_bounds(rng):
    s = GridSpec(15, 11, 1.0, 0.8)
    u0 = random_field(s, rng)
    m = pm_model(s, lam=LambdaField.radial_ramp(s, 0.2), eps=5e-4, delta=0.6)
    traj = run(u0, gradient_magnitude(u0), 0.02, m, SolverConfig(dt=1e-3))
    assert np.all(traj.energy_lhs <= traj.energy_bound + 1e-10 * traj.u0_sq)
    lower, integral, upper = traj.phi_bounds()
    assert np.all(lower <= integral + 1e-8) and np.all(integral <= upper + 1e-8)
    summary = traj.estimate_summary()
    assert all(np.isfinite(v) for v in summary.values())


def test_v_nonnegative(rng):
    s = GridSpec(15, 15)
    u0 = random_field(s, rng)
    traj = run(u0, ScalarField.zeros(s), 0.02, pm_model(s, lam=0.3), SolverConfig(dt=2e-3))
    assert traj.v_snaps.min() >= -1e-12


# -- Picard and stepping -------------------------------------------------------

def test_picard_failure_reports_time(spec8, rng):
    u0 = random_field(spec8, rng)
    with pytest.raises(PicardError) as info:
        run(u0, gradient_magnitude(u0), 0.01, pm_model(spec8), SolverConfig(dt=1e-3, picard_max=1))
    assert info.value.time == 0.0
    assert "at t=0" in str(info.value)


def test_step_halves_dt_once(spec8, rng, monkeypatch):
    calls = []
    real = solver_mod._advance_semi_implicit

    def flaky(u, v, dt, ws, cfg):
        calls.append(dt)
        if len(calls) == 1:
            raise PicardError("forced", residual=1.0)
        return real(u, v, dt, ws, cfg)

    monkeypatch.setattr(solver_mod, "_advance_semi_implicit", flaky)
    u0 = random_field(spec8, rng)
    st = step(State(u0, gradient_magnitude(u0)), pm_model(spec8), SolverConfig(dt=1e-3))
    assert calls == [1e-3, 5e-4] and st.t == pytest.approx(5e-4)


def test_step_matches_run(spec8, rng):
    u0 = random_field(spec8, rng)
    v0 = gradient_magnitude(u0)
    m, cfg = pm_model(spec8), SolverConfig(dt=1e-3)
    st = step(State(u0, v0), m, cfg)
    traj = run(u0, v0, 1e-3, m, cfg)
    np.testing.assert_array_equal(st.u.values, traj.u_snaps[-1])


# -- explicit scheme and the stability bound ------------------------------------

def test_cfl_reference_value():
    s = GridSpec.unit_square(63)
    m = ModelConfig(ConstantDiffusivity(1.0), LambdaField.constant(s, 1.0))
    h = 1 / 64
    assert cfl_stable_dt(m, s) == pytest.approx(0.9 * h**2 / 4, rel=1e-12)
    assert cfl_stable_dt(m, s) == pytest.approx(5.49e-5, rel=1e-3)


def test_cfl_scaling():
    s = GridSpec.unit_square(31)
    lam = LambdaField.constant(s, 0.1)
    big = cfl_stable_dt(ModelConfig(ConstantDiffusivity(4.0), lam), s)
    half = cfl_stable_dt(ModelConfig(ConstantDiffusivity(2.0), lam), s)
    assert half == pytest.approx(2 * big, rel=1e-12)
    assert cfl_stable_dt(ModelConfig(ConstantDiffusivity(2.0), lam, epsilon=1e-4), s) < half


def test_explicit_stable_below_unstable_above(rng):
    s = GridSpec.unit_square(31)
    m = ModelConfig(ConstantDiffusivity(1.0), LambdaField.constant(s, 1.0))
    u0 = sine_field(s) + ScalarField(s, 1e-3 * rng.standard_normal(s.shape))
    z = ScalarField.zeros(s)
    dt = cfl_stable_dt(m, s)
    ok = run(u0, z, 300 * dt, m, SolverConfig(dt=dt, scheme="explicit", snapshot_stride=0))
    assert ok.u_norm[-1] < ok.u_norm[0]
    exact_limit = dt / 0.9
    bad = run(u0, z, 300 * 1.1 * exact_limit, m,
              SolverConfig(dt=1.1 * exact_limit, scheme="explicit", snapshot_stride=0))
    assert bad.u_norm[-1] > 1e3 * bad.u_norm[0]


def test_explicit_and_semi_implicit_agree_to_first_order():
    s = GridSpec(11, 11)
    u0 = sine_field(s)
    m = pm_model(s, lam=0.5)
    dt0 = 0.5 * cfl_stable_dt(m, s)
    gaps = []
    for f in (1, 4):
        cfgs = [SolverConfig(dt=dt0 / f, scheme=sc, snapshot_stride=0) for sc in ("explicit", "semi-implicit")]
        a, b = (run(u0, gradient_magnitude(u0), 0.01, m, c) for c in cfgs)
        gaps.append(np.abs(a.u_snaps[-1] - b.u_snaps[-1]).max())
    assert gaps[0] < 1e-2
    assert gaps[1] < gaps[0] / 3
