"""The dissipative inequality and its regularized form, evaluated on a trajectory.

Both sides are reported divided by the common factor gamma**(delta*||u0||^2),
which keeps them finite for large images without changing the comparison::

    lhs(t) = gamma**(||u(t)||^2 - delta*||u0||^2) * (||u - zeta||^2 + ||v - theta||^2 [+ 2 eps int ||u - zeta||_2^2 + lam0 int ||v - theta||_1^2])
    rhs(t) = gamma**(2t) * (||u(0) - zeta(0)||^2 + ||v(0) - theta(0)||^2 + int_0^t 2 gamma**(-s) |R(s)| ds)

with R = (E1, u - zeta) + (E2, v - theta) [- eps (zeta, u - zeta)_2].
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ..grid import GridSpec, ScalarField, h1_seminorm, inner, v2_inner
from ..model import ModelConfig
from .pairs import TestPair
from .residuals import e1_array, e2_array

log = logging.getLogger(__name__)

DEFAULT_RTOL = 1e-9


@dataclass
class DissipativeTerms:
    """The gamma-independent ingredients of the inequality."""

    variant: str
    times: np.ndarray
    u_sq: np.ndarray
    distance: np.ndarray
    extra_cum: np.ndarray
    initial: float
    pairing: np.ndarray
    ref_exponent: float
    admissible: bool


@dataclass
class DissipativeReport:
    gamma: float
    variant: str
    times: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    slack: np.ndarray
    residual_integral: np.ndarray
    passed: np.ndarray
    scale_exponent: float
    warnings: list

    @property
    def ok(self) -> bool:
        return bool(np.all(self.passed))

    @property
    def min_slack(self) -> float:
        return float(self.slack.min())

    def rows(self):
        return list(zip(self.times, self.lhs, self.rhs, self.slack))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", "lhs", "rhs", "slack"])
            for row in self.rows():
                w.writerow([repr(float(x)) for x in row])


def _variant(model: ModelConfig, variant: str) -> str:
    if variant == "auto":
        return "regularized" if (model.epsilon > 0 or model.delta != 1.0) else "target"
    if variant not in ("target", "regularized"):
        raise ValueError(f"unknown variant {variant!r}")
    return variant


def dissipative_terms(traj, pair: TestPair, model: ModelConfig, variant: str = "auto") -> DissipativeTerms:
    variant = _variant(model, variant)
    spec: GridSpec = traj.spec
    if pair.spec != spec:
        raise ValueError("pair and trajectory live on different grids")
    times = traj.snap_times
    pair = pair.resample(times)
    delta = model.delta if variant == "regularized" else 1.0
    eps = model.epsilon if variant == "regularized" else 0.0
    lam0 = model.lam.lambda0

    n = len(times)
    u_sq = np.empty(n)
    dist = np.empty(n)
    extra = np.zeros(n)
    pairing = np.empty(n)
    for k in range(n):
        u, v = traj.u_snaps[k], traj.v_snaps[k]
        w = u - pair.zeta[k]
        s = v - pair.theta[k]
        e1 = e1_array(pair.zeta[k], pair.theta[k], pair.zeta_t[k], model, delta)
        e2 = e2_array(pair.zeta[k], pair.theta[k], pair.theta_t[k], model, delta)
        u_sq[k] = inner(u, u, spec)
        dist[k] = inner(w, w, spec) + inner(s, s, spec)
        r = inner(e1, w, spec) + inner(e2, s, spec)
        if variant == "regularized":
            W, S = ScalarField(spec, w), ScalarField(spec, s)
            if eps > 0:
                r -= eps * v2_inner(ScalarField(spec, pair.zeta[k]), W)
                extra[k] += 2 * eps * v2_inner(W, W)
            extra[k] += lam0 * h1_seminorm(S) ** 2
        pairing[k] = abs(r)

    initial = dist[0]
    extra_cum = cumulative_trapezoid(extra, times, initial=0.0) if variant == "regularized" else np.zeros(n)
    return DissipativeTerms(variant, times, u_sq, dist, extra_cum, float(initial), pairing,
                            float(delta * traj.u0_sq), pair.admissible)


def evaluate(terms: DissipativeTerms, gamma: float, rtol: float = DEFAULT_RTOL) -> DissipativeReport:
    if not gamma > 1:
        raise ValueError("gamma must exceed 1")
    lg = np.log(gamma)
    t = terms.times
    with np.errstate(over="ignore", invalid="ignore"):
        integral = cumulative_trapezoid(2.0 * np.exp(-lg * t) * terms.pairing, t, initial=0.0)
        lhs = np.exp(lg * (terms.u_sq - terms.ref_exponent)) * (terms.distance + terms.extra_cum)
        rhs = np.exp(lg * 2.0 * t) * (terms.initial + integral)
        slack = rhs - lhs
    passed = slack >= -rtol * np.maximum(np.abs(lhs), np.abs(rhs)) - 1e-300
    passed |= np.isinf(rhs) & np.isfinite(lhs)
    warnings = [] if terms.admissible else ["test pair failed the admissibility proxies"]
    return DissipativeReport(float(gamma), terms.variant, t, lhs, rhs, slack, integral, passed,
                             terms.ref_exponent, warnings)


def check_dissipative(traj, pair: TestPair, gamma: float, model: ModelConfig, variant: str = "auto",
                      rtol: float = DEFAULT_RTOL) -> DissipativeReport:
    """Evaluate both sides of the inequality at every snapshot of ``traj``.

    ``variant`` is ``"target"`` (unregularized problem, delta = 1 residuals),
    ``"regularized"`` (regularized form with eps and delta), or ``"auto"``.
    An inadmissible pair is still checked; the report carries a warning.
    """
    terms = dissipative_terms(traj, pair, model, variant)
    if not terms.admissible:
        log.warning("test pair %s failed the admissibility proxies", pair.source)
    return evaluate(terms, gamma, rtol)


def default_gamma_grid(n: int = 64, lo: float = 1.01, hi: float = 1e6) -> np.ndarray:
    return np.geomspace(lo, hi, n)


@dataclass
class GammaFit:
    gamma: float | None
    grid: np.ndarray
    passes: np.ndarray


def fit_minimal_gamma(traj, pair: TestPair, model: ModelConfig, gamma_grid=None, variant: str = "auto",
                      rtol: float = DEFAULT_RTOL) -> GammaFit:
    """Smallest grid value of gamma for which the inequality holds at all times.

    Every grid point is evaluated; passing is not assumed monotone in gamma.
    """
    grid = default_gamma_grid() if gamma_grid is None else np.asarray(gamma_grid, dtype=float)
    if grid.size == 0:
        raise ValueError("empty gamma grid")
    terms = dissipative_terms(traj, pair, model, variant)
    passes = np.array([evaluate(terms, g, rtol).ok for g in grid])
    ok = grid[passes]
    return GammaFit(float(ok.min()) if ok.size else None, grid, passes)
