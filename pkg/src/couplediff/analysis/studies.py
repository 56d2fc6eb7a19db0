"""Refinement, epsilon-limit and self-consistency studies."""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from ..grid import GridSpec, ScalarField, l2_norm
from ..scenarios import Scenario, run_scenario
from ..solver import Trajectory
from .dissipative import check_dissipative
from .pairs import trajectory_pair


def _map(fn, items, workers=1):
    items = list(items)
    if workers > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def restrict_values(a: np.ndarray, factor: int) -> np.ndarray:
    """Inject a fine interior array onto the coarse nodes it contains."""
    return a[..., factor - 1::factor, factor - 1::factor]


def restrict_trajectory(traj: Trajectory, spec: GridSpec, time_stride: int = 1) -> Trajectory:
    """Sample a fine trajectory on a nested coarse grid and every ``time_stride``-th snapshot."""
    factor = (traj.spec.nx + 1) // (spec.nx + 1)
    if factor * (spec.nx + 1) != traj.spec.nx + 1 or factor * (spec.ny + 1) != traj.spec.ny + 1:
        raise ValueError("grids are not nested")
    if len(traj.snap_index) != len(traj.times):
        raise ValueError("restriction needs a trajectory with every step stored")
    sel = np.arange(0, len(traj.times), time_stride)
    if sel[-1] != len(traj.times) - 1:
        raise ValueError("time stride does not hit the final time")
    u = restrict_values(traj.u_snaps[sel], factor)
    v = restrict_values(traj.v_snaps[sel], factor)
    dts = np.concatenate([[0.0], np.diff(traj.times[sel])])
    nan = np.full(len(sel), np.nan)
    return Trajectory(
        spec=spec, delta=traj.delta, epsilon=traj.epsilon,
        u0_sq=l2_norm(ScalarField(spec, u[0])) ** 2 / (traj.delta**2 if traj.delta else 1.0),
        v0_sq=l2_norm(ScalarField(spec, v[0])) ** 2,
        times=traj.times[sel], dts=dts,
        u_norm=np.array([l2_norm(ScalarField(spec, x)) for x in u]),
        v_norm=np.array([l2_norm(ScalarField(spec, x)) for x in v]),
        v_h1=nan, grad_u_l1=nan, dissipation=nan, phi_sq=nan,
        picard_iters=np.zeros(len(sel), dtype=int),
        snap_index=np.arange(len(sel)), u_snaps=u, v_snaps=v,
        meta={"restricted_from": traj.spec},
    )


@dataclass
class ConvergenceResult:
    mode: str  # "exact" or "self"
    h: np.ndarray
    dt: np.ndarray
    errors: np.ndarray
    orders: np.ndarray

    def summary(self) -> str:
        lines = [f"mode={self.mode}"]
        lines += [f"h[{i}]={h!r}" for i, h in enumerate(self.h)]
        lines += [f"error[{i}]={e!r}" for i, e in enumerate(self.errors)]
        lines += [f"order[{i}]={o!r}" for i, o in enumerate(self.orders)]
        return "\n".join(lines)


def _final_u(job):
    scenario, n, dt = job
    traj, _ = run_scenario(scenario, n=n, dt=dt, snapshot_stride=0)
    return traj.u_snaps[-1], traj.times[-1]


def convergence_study(scenario: Scenario, levels: int = 3, base: int = 8, dt_refine: float = 4.0,
                      workers: int = 1) -> ConvergenceResult:
    """Observed orders in h from final-time L2 errors.

    Level l uses nx + 1 = base * 2**l and dt = scenario.dt / dt_refine**l
    (dt_refine = 4 keeps dt/h^2 fixed).  With a closed-form solution the
    errors are against it; otherwise successive levels are differenced on
    the coarser grid and one more level is needed.
    """
    mode = "exact" if scenario.exact else "self"
    need = 2 if mode == "exact" else 3
    if levels < need:
        raise ValueError(f"insufficient levels: {levels} given, {need} needed for mode {mode}")
    ns = [base * 2**l - 1 for l in range(levels)]
    dts = [scenario.dt / dt_refine**l for l in range(levels)]
    finals = _map(_final_u, [(scenario, n, dt) for n, dt in zip(ns, dts)], workers)
    specs = [GridSpec(n, n, scenario.lx, scenario.ly) for n in ns]
    hs = np.array([s.hx for s in specs])
    if mode == "exact":
        errors = np.array([l2_norm(ScalarField(s, u) - scenario.exact_u(s, t)) for s, (u, t) in zip(specs, finals)])
        eh = hs
    else:
        errors = np.array([
            l2_norm(ScalarField(specs[l], finals[l][0] - restrict_values(finals[l + 1][0], 2)))
            for l in range(levels - 1)])
        eh = hs[:-1]
    with np.errstate(divide="ignore", invalid="ignore"):
        orders = np.log(errors[:-1] / errors[1:]) / np.log(eh[:-1] / eh[1:])
    return ConvergenceResult(mode, hs, np.array(dts), errors, orders)


@dataclass
class EpsilonLimitResult:
    eps: np.ndarray
    u_diff: np.ndarray
    v_diff: np.ndarray

    @property
    def strictly_decreasing(self) -> bool:
        return bool(np.all(np.diff(self.u_diff) < 0) and np.all(np.diff(self.v_diff) < 0))

    def summary(self) -> str:
        lines = [f"eps[{i}]={e!r}" for i, e in enumerate(self.eps)]
        lines += [f"u_diff[{i}]={d!r}" for i, d in enumerate(self.u_diff)]
        lines += [f"v_diff[{i}]={d!r}" for i, d in enumerate(self.v_diff)]
        return "\n".join(lines)


def _final_state(job):
    scenario, n = job
    traj, _ = run_scenario(scenario, n=n, snapshot_stride=0)
    return traj.u_snaps[-1], traj.v_snaps[-1], traj.spec


def epsilon_limit_study(scenario: Scenario, eps_sequence, n: int | None = None, workers: int = 1) -> EpsilonLimitResult:
    """Cauchy differences ||u_{eps_m}(T) - u_{eps_m+1}(T)|| (and for v)."""
    eps = np.asarray(eps_sequence, dtype=float)
    if eps.size < 2:
        raise ValueError("need at least two epsilon values")
    finals = _map(_final_state, [(replace(scenario, epsilon=float(e)), n) for e in eps], workers)
    spec = finals[0][2]
    du = np.array([l2_norm(ScalarField(spec, a[0] - b[0])) for a, b in zip(finals, finals[1:])])
    dv = np.array([l2_norm(ScalarField(spec, a[1] - b[1])) for a, b in zip(finals, finals[1:])])
    return EpsilonLimitResult(eps, du, dv)


@dataclass
class SelfConsistencyLevel:
    n: int
    h: float
    dt: float
    min_slack: float
    violation: float
    max_lhs: float
    max_rhs: float


def _trajectory_job(job):
    scenario, n, dt = job
    traj, setup = run_scenario(scenario, n=n, dt=dt, snapshot_stride=1)
    return traj


def self_consistency_study(scenario: Scenario, cells=(8, 16, 32), ref_cells: int = 64, dt_per_h: float = 0.02,
                           gamma: float = 2.0, workers: int = 1) -> list[SelfConsistencyLevel]:
    """Each level's trajectory, frozen as a test pair, against the reference solution.

    The reference run on ``ref_cells`` cells per side stands in for the
    strong solution; it is sampled onto each coarser grid and its time
    levels, and the dissipative inequality is evaluated with the coarse
    trajectory as (zeta, theta).  dt is tied to h by ``dt = dt_per_h * h``.
    """
    all_cells = list(cells) + [ref_cells]
    jobs = [(scenario, c - 1, dt_per_h * scenario.lx / c) for c in all_cells]
    trajs = _map(_trajectory_job, jobs, workers)
    ref = trajs[-1]
    out = []
    for c, traj in zip(cells, trajs[:-1]):
        if ref_cells % c:
            raise ValueError("reference grid must nest the level grids")
        stride = ref_cells // c
        solution = restrict_trajectory(ref, traj.spec, stride)
        if not np.allclose(solution.times, traj.times, rtol=1e-9, atol=1e-12):
            raise ValueError("reference and level time grids do not align")
        setup = scenario.setup(c - 1)
        report = check_dissipative(solution, trajectory_pair(traj, "self"), gamma, setup.model)
        min_slack = report.min_slack
        out.append(SelfConsistencyLevel(c - 1, traj.spec.hx, float(traj.dts[1]), min_slack,
                                        max(0.0, -min_slack), float(report.lhs.max()), float(report.rhs.max())))
    return out
