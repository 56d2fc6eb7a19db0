"""Time stepping for the coupled u/v system and its regularized variant.

Per step the semi-implicit scheme solves

    (I/dt + eps*A_h - delta*D_g) u = u_old/dt
    (I/dt - lam*Lap_h + delta*(1-lam)) v = v_old/dt + delta*(1-lam)|grad u| + (1-delta) grad v_old . grad lam

with g = g(v) and |grad u| frozen at the current Picard iterate.  The v system
is divided through by lam so both systems are symmetric positive definite.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .grid import GridMismatchError, GridSpec, ScalarField, h1_seminorm, l2_norm
from .model import ModelConfig, validate_config
from .operators import (
    _advect,
    _data_gradient,
    _dissipation_cells,
    _div_flux,
    _gradient_magnitude,
    _laplacian,
    assemble_neg_div,
    assemble_operator_A,
    face_coefficients,
)

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    pass


class LinearSolverError(NumericalError):
    pass


class PicardError(NumericalError):
    def __init__(self, msg, residual=None, time=None):
        super().__init__(msg)
        self.residual = residual
        self.time = time


@dataclass(frozen=True)
class SolverConfig:
    dt: float = 1e-3
    scheme: str = "semi-implicit"
    picard_tol: float = 1e-10
    picard_max: int = 50
    linsolve_tol: float = 1e-12
    linsolve_max: int = 5000
    snapshot_stride: int = 1
    face_mean: str = "arithmetic"
    # initial data delta*u0, delta*v0 as in the auxiliary problem; off only for linear oracle tests
    scale_initial: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.scheme not in ("explicit", "semi-implicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not (self.picard_tol > 0 and self.linsolve_tol > 0):
            raise ValueError("tolerances must be positive")
        if self.picard_max < 1 or self.linsolve_max < 1:
            raise ValueError("iteration caps must be at least 1")
        if self.snapshot_stride < 0:
            raise ValueError("snapshot_stride must be >= 0")


@dataclass(frozen=True, eq=False)
class State:
    u: ScalarField
    v: ScalarField
    t: float = 0.0

    def __post_init__(self):
        if self.u.spec != self.v.spec:
            raise GridMismatchError("u and v live on different grids")
        if self.t < 0:
            raise ValueError("time must be nonnegative")


def solve_linear(system, rhs, tol=1e-10, max_iter=1000, x0=None, diag=None):
    """Jacobi-preconditioned conjugate gradients.

    ``system`` is a sparse/dense SPD matrix or a callable ``x -> A x`` on
    flat vectors.  Stops once ``||b - A x|| <= tol * ||b||`` (true residual).
    """
    is_field = isinstance(rhs, ScalarField)
    b = (rhs.values if is_field else np.asarray(rhs, dtype=float)).ravel()
    shape = rhs.values.shape if is_field else np.shape(rhs)

    if callable(system) and not hasattr(system, "shape"):
        matvec = system
    else:
        matvec = system.__matmul__
        if diag is None:
            diag = system.diagonal()
    inv_diag = 1.0 / np.asarray(diag) if diag is not None else np.ones_like(b)

    def wrap(x):
        x = x.reshape(shape)
        return ScalarField(rhs.spec, x) if is_field else x

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return wrap(np.zeros_like(b))
    x = np.zeros_like(b) if x0 is None else np.array(np.ravel(x0.values if isinstance(x0, ScalarField) else x0), dtype=float)
    target = tol * bnorm
    r = b - matvec(x)
    it = 0
    while True:
        if np.linalg.norm(r) <= target:
            return wrap(x)
        z = inv_diag * r
        p = z.copy()
        rz = r @ z
        while it < max_iter:
            it += 1
            Ap = matvec(p)
            pAp = p @ Ap
            if pAp <= 0:
                raise LinearSolverError("operator is not positive definite")
            alpha = rz / pAp
            x += alpha * p
            r -= alpha * Ap
            if np.linalg.norm(r) <= target:
                break
            z = inv_diag * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
        else:
            r = b - matvec(x)
            if np.linalg.norm(r) <= target:
                return wrap(x)
            raise LinearSolverError(
                f"CG did not reach tol {tol:g} in {max_iter} iterations "
                f"(relative residual {np.linalg.norm(r) / bnorm:.3e})")
        # recursive residual converged; restart from the true one
        r = b - matvec(x)


class _Workspace:
    """Cached matrices for one grid and model; not shareable between threads."""

    def __init__(self, model: ModelConfig, solver: SolverConfig):
        self.model = model
        self.solver = solver
        spec = model.spec
        self.spec = spec
        self.n = spec.nx * spec.ny
        lam = model.lam.values
        self.lam = lam
        self.lam_grad = _data_gradient(lam, spec.hx, spec.hy)
        self.advect = model.delta < 1.0 and not model.lam.is_constant
        self.K_diag = np.full(self.n, 2.0 / spec.hx**2 + 2.0 / spec.hy**2)
        self.A_diag = assemble_operator_A(spec).diagonal() if model.epsilon > 0 else None
        self._mv = {}

    def g_pad(self, v: np.ndarray) -> np.ndarray:
        return np.asarray(self.model.g(np.pad(v, 1)), dtype=float) * np.ones((v.shape[0] + 2, v.shape[1] + 2))

    def v_system(self, dt):
        """Matvec and diagonal of the lam-scaled v system (matrix-free)."""
        if dt not in self._mv:
            d = self.model.delta
            scale = (1.0 / dt + d * (1.0 - self.lam)) / self.lam
            spec, shape = self.spec, self.spec.shape
            hx, hy = spec.hx, spec.hy

            def matvec(x):
                x = x.reshape(shape)
                return (scale * x - _laplacian(x, hx, hy)).ravel()

            self._mv[dt] = (matvec, scale.ravel() + self.K_diag)
        return self._mv[dt]

    def u_system(self, dt, gx, gy):
        m = self.model
        spec, shape = self.spec, self.spec.shape
        hx, hy = spec.hx, spec.hy
        eps, d = m.epsilon, m.delta

        def matvec(x):
            x = x.reshape(shape)
            out = x / dt
            if d > 0:
                out = out - d * _div_flux(x, gx, gy, hx, hy)
            if eps > 0:
                lap = _laplacian(x, hx, hy)
                out = out + eps * (_laplacian(lap, hx, hy) - lap)
            return out.ravel()

        diag = np.full(self.n, 1.0 / dt)
        if d > 0:
            diag += d * ((gx[:, :-1] + gx[:, 1:]) / hx**2 + (gy[:-1, :] + gy[1:, :]) / hy**2).ravel()
        if eps > 0:
            diag += eps * self.A_diag
        return matvec, diag

    def u_matrix(self, dt, gx, gy):
        """Assembled counterpart of :meth:`u_system`, for oracle checks."""
        m = self.model
        M = sp.identity(self.n, format="csr") / dt
        if m.epsilon > 0:
            M = M + m.epsilon * assemble_operator_A(self.spec)
        if m.delta > 0:
            M = M + m.delta * assemble_neg_div(gx, gy, self.spec)
        return M.tocsr()


@dataclass
class StepInfo:
    dt: float
    picard_iters: int
    gx: np.ndarray
    gy: np.ndarray


def _advance_semi_implicit(u, v, dt, ws: _Workspace, cfg: SolverConfig):
    m = ws.model
    d = m.delta
    spec = ws.spec
    hx, hy = spec.hx, spec.hy
    adv = (1.0 - d) * _advect(v, ws.lam_grad, hx, hy) if ws.advect else 0.0
    Mv, Mv_diag = ws.v_system(dt)
    area = spec.cell_area
    ui, vi = u, v
    change = np.inf
    for k in range(1, cfg.picard_max + 1):
        gx, gy = face_coefficients(ws.g_pad(vi), cfg.face_mean)
        Mu, Mu_diag = ws.u_system(dt, gx, gy)
        un = solve_linear(Mu, u / dt, cfg.linsolve_tol, cfg.linsolve_max, x0=ui, diag=Mu_diag)
        src = d * (1.0 - ws.lam) * _gradient_magnitude(un, hx, hy)
        rhs_v = (v / dt + src + adv) / ws.lam
        vn = solve_linear(Mv, rhs_v, cfg.linsolve_tol, cfg.linsolve_max, x0=vi, diag=Mv_diag)
        change = math.sqrt(area * (np.sum((un - ui) ** 2) + np.sum((vn - vi) ** 2)))
        scale = 1.0 + math.sqrt(area * (np.sum(un**2) + np.sum(vn**2)))
        ui, vi = un, vn
        if change <= cfg.picard_tol * scale and k > 1:
            return ui, vi, StepInfo(dt, k, gx, gy)
    raise PicardError(f"Picard iteration did not converge in {cfg.picard_max} sweeps "
                      f"(last change {change:.3e})", residual=change)


def _advance_explicit(u, v, dt, ws: _Workspace, cfg: SolverConfig):
    m = ws.model
    d = m.delta
    spec = ws.spec
    hx, hy = spec.hx, spec.hy
    gx, gy = face_coefficients(ws.g_pad(v), cfg.face_mean)
    du = d * _div_flux(u, gx, gy, hx, hy) if d > 0 else 0.0
    if m.epsilon > 0:
        lap = _laplacian(u, hx, hy)
        du = du - m.epsilon * (-lap + _laplacian(lap, hx, hy))
    dv = ws.lam * _laplacian(v, hx, hy) + d * (1.0 - ws.lam) * (_gradient_magnitude(u, hx, hy) - v)
    if ws.advect:
        dv = dv + (1.0 - d) * _advect(v, ws.lam_grad, hx, hy)
    un, vn = u + dt * du, v + dt * dv
    if not (np.all(np.isfinite(un)) and np.all(np.isfinite(vn))):
        raise NumericalError("explicit step produced non-finite values")
    return un, vn, StepInfo(dt, 0, gx, gy)


def _advance(u, v, dt, ws, cfg):
    if cfg.scheme == "explicit":
        return _advance_explicit(u, v, dt, ws, cfg)
    return _advance_semi_implicit(u, v, dt, ws, cfg)


def step(state: State, model: ModelConfig, solver: SolverConfig, workspace: _Workspace | None = None) -> State:
    """Advance one step of size ``solver.dt``; Picard failure retries once at dt/2."""
    ws = workspace or _Workspace(model, solver)
    try:
        u, v, info = _advance(state.u.values, state.v.values, solver.dt, ws, solver)
    except PicardError:
        u, v, info = _advance(state.u.values, state.v.values, solver.dt / 2, ws, solver)
    spec = state.u.spec
    return State(ScalarField(spec, u), ScalarField(spec, v), state.t + info.dt)


def cfl_stable_dt(model: ModelConfig, spec: GridSpec, safety: float = 0.9) -> float:
    """Forward-Euler bound 2/rho for both equations, times ``safety``.

    With eps = 0 and hx = hy = h the u bound is h^2 / (4 sup g).
    """
    kmax = 4.0 / spec.hx**2 + 4.0 / spec.hy**2
    rho_u = model.delta * model.diffusivity.sup * kmax
    if model.epsilon > 0:
        rho_u += model.epsilon * (kmax + kmax**2)
    lam = model.lam.values
    rho_v = float(np.max(lam * kmax + model.delta * (1.0 - lam)))
    if not model.lam.is_constant and model.delta < 1:
        gx, gy = _data_gradient(lam, spec.hx, spec.hy)
        rho_v += (1.0 - model.delta) * float(np.max(np.abs(gx) / spec.hx + np.abs(gy) / spec.hy))
    rho = max(rho_u, rho_v)
    return safety * 2.0 / rho


@dataclass
class Trajectory:
    spec: GridSpec
    delta: float
    epsilon: float
    u0_sq: float
    v0_sq: float
    times: np.ndarray
    dts: np.ndarray
    u_norm: np.ndarray
    v_norm: np.ndarray
    v_h1: np.ndarray
    grad_u_l1: np.ndarray
    dissipation: np.ndarray
    phi_sq: np.ndarray
    picard_iters: np.ndarray
    snap_index: np.ndarray
    u_snaps: np.ndarray
    v_snaps: np.ndarray
    meta: dict = field(default_factory=dict)

    @property
    def snap_times(self) -> np.ndarray:
        return self.times[self.snap_index]

    @property
    def final(self) -> State:
        return State(ScalarField(self.spec, self.u_snaps[-1]), ScalarField(self.spec, self.v_snaps[-1]), float(self.times[-1]))

    @property
    def initial(self) -> State:
        return State(ScalarField(self.spec, self.u_snaps[0]), ScalarField(self.spec, self.v_snaps[0]), 0.0)

    def _cum(self, x):
        return np.concatenate([[0.0], np.cumsum(self.dts[1:] * x[1:])])

    @property
    def cum_dissipation(self) -> np.ndarray:
        return self._cum(self.dissipation)

    @property
    def cum_phi_sq(self) -> np.ndarray:
        return self._cum(self.phi_sq)

    @property
    def energy_lhs(self) -> np.ndarray:
        """1/2 ||u(t_n)||^2 + sum_k dt_k (delta g grad u_k, grad u_k)."""
        return 0.5 * self.u_norm**2 + self.cum_dissipation

    @property
    def energy_bound(self) -> float:
        return 0.5 * self.delta * self.u0_sq

    def phi_bounds(self):
        """(lower, integral of Phi^2, upper) series."""
        lower = self.times * self.spec.area
        upper = 2 * self.times * self.spec.area + self.delta * self.u0_sq - self.u_norm**2
        return lower, self.cum_phi_sq, upper

    def estimate_summary(self) -> dict:
        return {
            "max_u_l2": float(self.u_norm.max()),
            "max_v_l2": float(self.v_norm.max()),
            "int_v_h1_sq": float(self._cum(self.v_h1**2)[-1]),
            "int_grad_u_l1_sq": float(self._cum(self.grad_u_l1**2)[-1]),
            "int_phi_sq": float(self.cum_phi_sq[-1]),
        }

    def diagnostics_rows(self):
        cols = ("time", "u_l2", "v_l2", "v_h1", "grad_u_l1", "dissipation", "phi_sq", "picard_iters")
        data = (self.times, self.u_norm, self.v_norm, self.v_h1, self.grad_u_l1,
                self.dissipation, self.phi_sq, self.picard_iters)
        return cols, list(zip(*data))

    def snapshot(self, k: int) -> State:
        return State(ScalarField(self.spec, self.u_snaps[k]), ScalarField(self.spec, self.v_snaps[k]),
                     float(self.snap_times[k]))


def _diagnostics(u, v, gx, gy, delta, spec: GridSpec):
    hx, hy = spec.hx, spec.hy
    area = spec.cell_area
    cells = delta * _dissipation_cells(u, gx, gy, hx, hy)
    U, V = ScalarField(spec, u), ScalarField(spec, v)
    return (
        l2_norm(U),
        l2_norm(V),
        h1_seminorm(V),
        float(area * np.sum(_gradient_magnitude(u, hx, hy))),
        float(area * np.sum(cells)),
        float(area * np.sum((1.0 + np.sqrt(cells)) ** 2)),
    )


def run(u0: ScalarField, v0: ScalarField, T: float, model: ModelConfig, solver: SolverConfig,
        validate: bool = True) -> Trajectory:
    """Integrate on [0, T]; the last step may overshoot T by less than dt."""
    if u0.spec != v0.spec or u0.spec != model.spec:
        raise GridMismatchError("u0, v0 and lambda must share one grid")
    if not T > 0:
        raise ValueError("T must be positive")
    if validate:
        validate_config(model).raise_if_failed()
    spec = u0.spec
    ws = _Workspace(model, solver)
    scale = model.delta if solver.scale_initial else 1.0
    u, v = scale * u0.values, scale * v0.values

    times, dts, iters = [0.0], [0.0], [0]
    g0x, g0y = face_coefficients(ws.g_pad(v), solver.face_mean)
    diags = [_diagnostics(u, v, g0x, g0y, model.delta, spec)]
    snap_index, us, vs = [0], [u.copy()], [v.copy()]

    t, n = 0.0, 0
    stop = T * (1 - 1e-12)
    while t < stop:
        try:
            try:
                un, vn, info = _advance(u, v, solver.dt, ws, solver)
            except PicardError:
                log.info("Picard failed at t=%g, halving dt", t)
                un, vn, info = _advance(u, v, solver.dt / 2, ws, solver)
        except PicardError as exc:
            exc.time = t
            raise PicardError(f"{exc} at t={t:g}", exc.residual, t) from exc
        except NumericalError as exc:
            raise type(exc)(f"{exc} at t={t:g}") from exc
        u, v = un, vn
        t += info.dt
        n += 1
        times.append(t)
        dts.append(info.dt)
        iters.append(info.picard_iters)
        diags.append(_diagnostics(u, v, info.gx, info.gy, model.delta, spec))
        last = t >= stop
        if last or (solver.snapshot_stride and n % solver.snapshot_stride == 0):
            snap_index.append(n)
            us.append(u.copy())
            vs.append(v.copy())

    d = np.array(diags)
    return Trajectory(
        spec=spec,
        delta=model.delta,
        epsilon=model.epsilon,
        u0_sq=l2_norm(u0) ** 2,
        v0_sq=l2_norm(v0) ** 2,
        times=np.array(times),
        dts=np.array(dts),
        u_norm=d[:, 0],
        v_norm=d[:, 1],
        v_h1=d[:, 2],
        grad_u_l1=d[:, 3],
        dissipation=d[:, 4],
        phi_sq=d[:, 5],
        picard_iters=np.array(iters),
        snap_index=np.array(snap_index),
        u_snaps=np.array(us),
        v_snaps=np.array(vs),
    )


def with_dt(solver: SolverConfig, dt: float) -> SolverConfig:
    return replace(solver, dt=dt)
