"""Artifact-defined experiment scenarios.

None of these come from published experiments; they are small, smooth or
piecewise-smooth set-ups chosen to exercise every term of the model.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .grid import GridSpec, ScalarField
from .model import ConstantDiffusivity, DiffusivityParams, LambdaField, ModelConfig
from .operators import gradient_magnitude
from .solver import SolverConfig, run


def _sine(X, Y, lx, ly):
    return np.sin(np.pi * X / lx) * np.sin(np.pi * Y / ly)


def _sine21(X, Y, lx, ly):
    return np.sin(2 * np.pi * X / lx) * np.sin(np.pi * Y / ly)


def _bump(X, Y, lx, ly):
    x, y = X / lx, Y / ly
    return 2.0 * np.exp(-((x - 0.4) ** 2 + (y - 0.55) ** 2) / 0.03) * _sine(X, Y, lx, ly)


def _shapes(X, Y, lx, ly):
    x, y = X / lx, Y / ly
    disk = ((x - 0.35) ** 2 + (y - 0.4) ** 2) < 0.15**2
    square = (np.abs(x - 0.68) < 0.14) & (np.abs(y - 0.65) < 0.14)
    return 0.3 + 0.5 * disk + 0.3 * square


def _zero(X, Y, lx, ly):
    return np.zeros_like(X)


INITIAL_DATA = {"sine": _sine, "sine21": _sine21, "bump": _bump, "shapes": _shapes, "zero": _zero}


def make_diffusivity(kind: str, params: tuple):
    if kind == "constant":
        return ConstantDiffusivity(*params)
    if kind == "perona_malik":
        return DiffusivityParams(*params)
    raise ValueError(f"unknown diffusivity {kind!r}")


def make_lambda(spec: GridSpec, kind: str, params: tuple) -> LambdaField:
    if kind == "constant":
        return LambdaField.constant(spec, *params)
    if kind == "ramp":
        return LambdaField.radial_ramp(spec, *params)
    raise ValueError(f"unknown lambda preset {kind!r}")


@dataclass(frozen=True)
class Setup:
    spec: GridSpec
    model: ModelConfig
    u0: ScalarField
    v0: ScalarField
    solver: SolverConfig
    T: float


@dataclass(frozen=True)
class Scenario:
    name: str
    u0: str = "sine"
    v0: str = "grad"
    diffusivity: str = "perona_malik"
    g_params: tuple = (1.0, 1.0, 1.0, 2.0)
    lam: str = "constant"
    lam_params: tuple = (0.5,)
    epsilon: float = 0.0
    delta: float = 1.0
    T: float = 0.1
    dt: float = 1e-3
    n: int = 31
    lx: float = 1.0
    ly: float = 1.0
    exact: str | None = None

    def setup(self, n=None, dt=None, **solver_kw) -> Setup:
        n = self.n if n is None else n
        spec = GridSpec(n, n, self.lx, self.ly)
        X, Y = spec.coords()
        u0 = ScalarField(spec, INITIAL_DATA[self.u0](X, Y, self.lx, self.ly))
        if self.v0 == "grad":
            v0 = gradient_magnitude(u0)
        elif self.v0 == "zero":
            v0 = ScalarField.zeros(spec)
        else:
            v0 = ScalarField(spec, INITIAL_DATA[self.v0](X, Y, self.lx, self.ly))
        model = ModelConfig(make_diffusivity(self.diffusivity, self.g_params),
                            make_lambda(spec, self.lam, self.lam_params), self.epsilon, self.delta)
        solver = SolverConfig(dt=self.dt if dt is None else dt, **solver_kw)
        return Setup(spec, model, u0, v0, solver, self.T)

    def exact_u(self, spec: GridSpec, t: float) -> ScalarField | None:
        if self.exact != "heat":
            return None
        g0 = self.g_params[0]
        rate = np.pi**2 * (1 / self.lx**2 + 1 / self.ly**2) * g0
        X, Y = spec.coords()
        return ScalarField(spec, np.exp(-rate * t) * INITIAL_DATA[self.u0](X, Y, self.lx, self.ly))

    def with_(self, **kw) -> "Scenario":
        return replace(self, **kw)


def run_scenario(scenario: Scenario, n=None, dt=None, T=None, **solver_kw):
    s = scenario.setup(n, dt, **solver_kw)
    return run(s.u0, s.v0, s.T if T is None else T, s.model, s.solver), s


SCENARIOS = {
    "heat": Scenario("heat", u0="sine", v0="zero", diffusivity="constant", g_params=(1.0,), exact="heat"),
    "eigenmode": Scenario("eigenmode"),
    "bump": Scenario("bump", u0="bump", g_params=(1.0, 1.0, 0.5, 1.5), lam="ramp", lam_params=(0.3,),
                     T=0.05, dt=5e-4),
    "shapes": Scenario("shapes", u0="shapes", g_params=(1.0, 1.0, 0.05, 2.0), lam_params=(0.7,),
                       T=0.01, dt=2.5e-4),
    "regularized": Scenario("regularized", u0="sine21", lam="ramp", lam_params=(0.4,), epsilon=1e-3,
                            delta=0.8, T=0.05, dt=5e-4),
    # v0 = 0 lets |grad u| pump v up; the fitted gamma is then strictly above 1
    "growth": Scenario("growth", v0="zero", g_params=(0.025, 1.0, 1.0, 2.0), lam_params=(0.05,)),
    "zero": Scenario("zero", u0="zero", v0="zero"),
}
