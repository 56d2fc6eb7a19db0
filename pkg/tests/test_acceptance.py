"""Acceptance suite: one test per primary criterion, each at its stated tolerance.

Every test records a ``PASS``/``FAIL`` line; the lines are printed together
in the terminal summary (see ``conftest.py``) as well as inline.
"""
import time

import numpy as np
import pytest
from scipy.linalg import expm

from couplediff.analysis import (
    GronwallData,
    check_dissipative,
    epsilon_limit_study,
    fit_minimal_gamma,
    gronwall_check,
    self_consistency_study,
    zero_pair,
)
from couplediff.app.config import default_config
from couplediff.app.pipeline import cmd_restore
from couplediff.grid import GridSpec, ScalarField, l2_norm
from couplediff.model import ConstantDiffusivity, DiffusivityParams, LambdaField, ModelConfig
from couplediff.operators import assemble_neg_laplacian, assemble_operator_A, div_g_grad, gradient_magnitude
from couplediff.scenarios import SCENARIOS, run_scenario
from couplediff.solver import SolverConfig, run, solve_linear
from conftest import random_field, sine_field

RESULTS = []


def record(number, name, ok, detail):
    line = f"[{number:02d}] {'PASS' if ok else 'FAIL'}  {name}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


def test_01_heat_reduction():
    t0 = time.perf_counter()
    traj, setup = run_scenario(SCENARIOS["heat"], n=127, dt=1e-4, T=0.1, snapshot_stride=0)
    elapsed = time.perf_counter() - t0
    T = traj.times[-1]
    expected = np.exp(-2 * np.pi**2 * T) * l2_norm(setup.u0)
    rel = abs(traj.u_norm[-1] - expected) / expected
    record(1, "u-equation heat decay (h=1/128, dt=1e-4, T=0.1)", rel < 0.02 and elapsed < 30,
           f"relative error {rel:.2e} (< 2e-2), runtime {elapsed:.1f}s (< 30s)")


def test_02_v_equation_reduction():
    s = GridSpec.unit_square(63)
    m = ModelConfig(DiffusivityParams(1.0, 1.0, 1.0, 2.0), LambdaField.constant(s, 1.0))
    u0 = sine_field(s)
    traj = run(u0, sine_field(s), 0.1, m, SolverConfig(dt=1e-4, snapshot_stride=0))
    rate = -np.log(traj.v_norm[-1] / traj.v_norm[0]) / traj.times[-1]
    rel = abs(rate - 2 * np.pi**2) / (2 * np.pi**2)
    record(2, "v-equation decay with lambda = 1", rel < 0.02,
           f"rate {rate:.4f} vs 2 pi^2 = {2 * np.pi**2:.4f}, relative error {rel:.2e} (< 2e-2)")


def random_model(rng, s, constant_lambda=False):
    a, b, c = rng.uniform(0.2, 2.0, 3)
    d = rng.uniform(1.0, 2.0)
    if constant_lambda or rng.random() < 0.5:
        lam = LambdaField.constant(s, rng.uniform(0.1, 1.0))
    else:
        lam = LambdaField.radial_ramp(s, rng.uniform(0.1, 0.9))
    eps = 0.0 if constant_lambda or rng.random() < 0.3 else rng.uniform(0.0, 1e-3)
    delta = 1.0 if constant_lambda else rng.uniform(0.2, 1.0)
    return ModelConfig(DiffusivityParams(a, b, c, d), lam, eps, delta)


def test_03_discrete_energy_estimate():
    rng = np.random.default_rng(3)
    worst = -np.inf
    for _ in range(20):
        n = int(rng.integers(7, 16))
        s = GridSpec(n, int(rng.integers(7, 16)), 1.0, rng.uniform(0.6, 1.4))
        m = random_model(rng, s)
        u0 = random_field(s, rng, rng.uniform(0.1, 2.0))
        dt = rng.uniform(1e-4, 2e-3)
        traj = run(u0, gradient_magnitude(u0), 20 * dt, m, SolverConfig(dt=dt))
        worst = max(worst, float(np.max((traj.energy_lhs - traj.energy_bound) / traj.u0_sq)))
    record(3, "discrete energy estimate on 20 random configurations", worst <= 1e-10,
           f"max (lhs - bound)/||u0||^2 = {worst:.3e} (<= 1e-10)")


def test_04_phi_bounds():
    worst = -np.inf
    for sc in SCENARIOS.values():
        traj, _ = run_scenario(sc)
        lower, integral, upper = traj.phi_bounds()
        worst = max(worst, float(np.max(lower - integral)), float(np.max(integral - upper)))
    record(4, "Phi bounds on every shipped scenario", worst <= 1e-8,
           f"max bound excess {worst:.3e} (<= 1e-8) over {len(SCENARIOS)} scenarios")


def test_05_zero_pair_dissipative():
    failed = []
    for name, sc in SCENARIOS.items():
        traj, setup = run_scenario(sc)
        rep = check_dissipative(traj, zero_pair(setup.spec, traj.snap_times), 1.1, setup.model)
        if not rep.ok:
            failed.append(name)
    record(5, "dissipative inequality, zero pair, gamma = 1.1", not failed,
           f"{len(SCENARIOS) - len(failed)}/{len(SCENARIOS)} scenarios pass at all sample times"
           + (f"; failing: {', '.join(failed)}" if failed else ""))


def test_06_self_consistency():
    levels = self_consistency_study(SCENARIOS["eigenmode"], cells=(8, 16, 32), ref_cells=64)
    scale = [lv.dt + lv.h**2 for lv in levels]
    C = levels[0].violation / scale[0]  # fitted at the coarsest level, then frozen
    within = all(lv.min_slack >= -C * sc for lv, sc in zip(levels[1:], scale[1:]))
    slacks = [lv.min_slack for lv in levels]
    monotone = all(b > a for a, b in zip(slacks, slacks[1:]))
    record(6, "self-consistency over 3 joint refinements", within and monotone,
           f"C = {C:.3f}; min slack {', '.join(f'{x:.2e}' for x in slacks)}; "
           f"tol {', '.join(f'{C * x:.2e}' for x in scale)}")


def test_07_minimal_gamma_stability():
    grid = np.geomspace(1.0001, 1e4, 4000)
    gammas = []
    for n in (31, 63, 127):
        traj, setup = run_scenario(SCENARIOS["growth"], n=n)
        fit = fit_minimal_gamma(traj, zero_pair(setup.spec, traj.snap_times), setup.model, grid)
        gammas.append(np.inf if fit.gamma is None else fit.gamma)
    spread = (max(gammas) - min(gammas)) / min(gammas)
    record(7, "minimal gamma across h = 1/32, 1/64, 1/128", spread < 0.2,
           f"gamma* = {', '.join(f'{g:.4f}' for g in gammas)}; variation {spread:.2%} (< 20%)")


def test_08_epsilon_limit():
    eps = [1e-2 / 2**m for m in range(4)]
    res = epsilon_limit_study(SCENARIOS["regularized"], eps)
    # linear case delta = 0: u_t = -eps A u, so u(T) = expm(-eps T A) u0 exactly
    s = GridSpec(8, 8)
    u0 = sine_field(s) + 0.3 * sine_field(s, 2, 1)
    A = assemble_operator_A(s).toarray()
    T, dt = 0.05, 1e-4
    oracle_err, departures, ref_departures = [], [], []
    for e in eps:
        m = ModelConfig(DiffusivityParams(), LambdaField.constant(s, 0.5), e, 0.0)
        traj = run(u0, ScalarField.zeros(s), T, m, SolverConfig(dt=dt, snapshot_stride=0, scale_initial=False))
        ref = expm(-e * traj.times[-1] * A) @ u0.values.ravel()
        u = traj.u_snaps[-1].ravel()
        oracle_err.append(np.linalg.norm(u - ref) / np.linalg.norm(u0.values.ravel() - ref))
        departures.append(np.linalg.norm(u - u0.values.ravel()))
        ref_departures.append(np.linalg.norm(ref - u0.values.ravel()))
    ratios = np.array(departures[:-1]) / np.array(departures[1:])
    ref_ratios = np.array(ref_departures[:-1]) / np.array(ref_departures[1:])
    # first order: departure / (eps T |A u0|) -> 1, with the remainder shrinking as eps halves
    lead = np.array(eps) * T * np.linalg.norm(A @ u0.values.ravel())
    remainder = np.abs(np.array(departures) / lead - 1)
    first_order = np.all(np.abs(ratios - ref_ratios) < 0.01) and np.all(np.diff(remainder) < 0)
    ok = res.strictly_decreasing and max(oracle_err) < 1e-2 and first_order
    record(8, "epsilon -> 0 limit", ok,
           f"u diffs {', '.join(f'{d:.3e}' for d in res.u_diff)} (strictly decreasing: {res.strictly_decreasing}); "
           f"delta=0 vs expm: max rel err {max(oracle_err):.2e}, halving ratios {', '.join(f'{r:.3f}' for r in ratios)} "
           f"(oracle {', '.join(f'{r:.3f}' for r in ref_ratios)}); "
           f"|D/(eps T |A u0|) - 1| {', '.join(f'{r:.3f}' for r in remainder)}")


def test_09_gronwall_equality_cases():
    t = np.arange(0.0, 1.0 + 1e-12, 1e-3)
    exp_case = gronwall_check(GronwallData(t, np.exp(t), 0.0, 1.0, 0.0))
    const_case = gronwall_check(GronwallData(t, np.full_like(t, 3.0), 0.0, 0.0, 0.0))
    gaps = [float(np.max(np.abs(r.rhs - r.lhs))) for r in (exp_case, const_case)]
    ok = exp_case.passed and const_case.passed and max(gaps) <= 1e-6
    record(9, "Gronwall equality cases at dt = 1e-3", ok,
           f"|bound - f| max: f'=f {gaps[0]:.2e}, constant {gaps[1]:.2e} (<= 1e-6)")


def dense_neg_div_loop(gpad, s):
    """-div(g grad .) built entry by entry from nodal g (arithmetic face means)."""
    n = s.nx * s.ny
    M = np.zeros((n, n))
    idx = lambda j, i: j * s.nx + i
    for j in range(s.ny):
        for i in range(s.nx):
            for dj, di, h in ((0, 1, s.hx), (0, -1, s.hx), (1, 0, s.hy), (-1, 0, s.hy)):
                g = 0.5 * (gpad[j + 1, i + 1] + gpad[j + 1 + dj, i + 1 + di])
                M[idx(j, i), idx(j, i)] += g / h**2
                jj, ii = j + dj, i + di
                if 0 <= jj < s.ny and 0 <= ii < s.nx:
                    M[idx(j, i), idx(jj, ii)] -= g / h**2
    return M


def test_10_oracle_equivalence():
    rng = np.random.default_rng(10)
    s = GridSpec(6, 6)
    gpad = rng.uniform(0.1, 2.0, (s.ny + 2, s.nx + 2))
    n = s.nx * s.ny
    D = np.empty((n, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        D[:, k] = div_g_grad(ScalarField(s, e.reshape(s.shape)), gpad).values.ravel()
    oracle = -dense_neg_div_loop(gpad, s)
    scale = np.abs(oracle).max()
    match = np.abs(D - oracle).max() / scale
    asym = np.abs(D - D.T).max() / scale
    top_eig = np.linalg.eigvalsh(0.5 * (D + D.T)).max() / scale
    K = np.eye(n) + 1e-3 * assemble_neg_laplacian(s).toarray()
    rhs = rng.standard_normal(n)
    x = solve_linear(K, ScalarField(s, rhs.reshape(s.shape))).values.ravel()
    x_ref = np.linalg.solve(K, rhs)
    solve_err = np.abs(x - x_ref).max() / np.abs(x_ref).max()
    ok = match <= 1e-12 and asym <= 1e-12 and top_eig <= 1e-12 and solve_err <= 1e-8
    record(10, "operator and solver vs dense oracles (6x6)", ok,
           f"|D - loop| {match:.1e}, |D - D^T| {asym:.1e}, max eig {top_eig:.1e} (<= 1e-12); "
           f"solve vs dense {solve_err:.1e} (<= 1e-8)")


def test_11_restoration_demo(tmp_path):
    cfg = default_config("restore")
    t0 = time.perf_counter()
    first = cmd_restore(cfg, str(tmp_path / "a"), seed=0)
    elapsed = time.perf_counter() - t0
    second = cmd_restore(cfg, str(tmp_path / "b"), seed=0)
    gain = first.summary["psnr_gain"]
    identical = first.manifest.outputs == second.manifest.outputs
    record(11, "restoration demo (256^2 shapes, sigma = 15)", gain >= 2.0 and identical and elapsed < 120,
           f"PSNR {first.summary['psnr_noisy']:.2f} -> {first.summary['psnr_restored']:.2f} dB "
           f"(gain {gain:.2f} >= 2); bit-identical rerun: {identical}; runtime {elapsed:.1f}s (< 120s)")


def test_12_nonnegativity():
    rng = np.random.default_rng(12)
    worst = np.inf
    for _ in range(10):
        s = GridSpec(int(rng.integers(7, 20)), int(rng.integers(7, 20)))
        m = random_model(rng, s, constant_lambda=True)
        u0 = random_field(s, rng, rng.uniform(0.1, 2.0))
        v0 = ScalarField(s, np.abs(rng.standard_normal(s.shape)) * (rng.random(s.shape) < 0.5))
        dt = rng.uniform(1e-4, 5e-3)
        traj = run(u0, v0, 30 * dt, m, SolverConfig(dt=dt, snapshot_stride=1))
        worst = min(worst, float(traj.v_snaps.min()))
    record(12, "nonnegativity of v with constant lambda", worst >= -1e-12,
           f"min v over all steps of 10 runs = {worst:.3e} (>= -1e-12)")
