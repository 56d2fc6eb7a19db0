"""Gronwall-type bound checker and the Ladyzhenskaya / Sobolev diagnostics."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_trapezoid

from ..grid import ScalarField, h1_seminorm, l2_norm, linf_norm, v2_norm


@dataclass
class GronwallData:
    t: np.ndarray
    f: np.ndarray
    chi: np.ndarray
    L: np.ndarray
    M: np.ndarray

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        n = len(self.t)
        for name in ("f", "chi", "L", "M"):
            arr = np.broadcast_to(np.asarray(getattr(self, name), dtype=float), (n,)).copy()
            setattr(self, name, arr)
        if np.any(self.chi < 0) or np.any(self.L < 0):
            raise ValueError("chi and L must be nonnegative")
        if n < 3 or np.any(np.diff(self.t) <= 0):
            raise ValueError("need at least 3 strictly increasing sample times")


@dataclass
class GronwallResult:
    status: str  # "pass", "fail" or "not applicable"
    t: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    max_hypothesis_excess: float

    @property
    def gap(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def gronwall_check(data: GronwallData, tol: float = 1e-6, hyp_tol: float = 1e-4) -> GronwallResult:
    """Check f(t) + int chi <= exp(int L) [f(0) + int_0^t exp(-int_0^s L) M ds].

    The hypothesis f' + chi <= L f + M is tested first with a second-order
    finite-difference f'; if it fails the result is "not applicable".
    Integrals use the trapezoidal rule.
    """
    t, f = data.t, data.f
    fprime = np.gradient(f, t, edge_order=2)
    excess = fprime + data.chi - data.L * f - data.M
    scale = 1.0 + np.maximum.reduce([np.abs(fprime), np.abs(data.L * f), np.abs(data.M), data.chi])
    max_excess = float(np.max(excess / scale))

    IL = cumulative_trapezoid(data.L, t, initial=0.0)
    lhs = f + cumulative_trapezoid(data.chi, t, initial=0.0)
    rhs = np.exp(IL) * (f[0] + cumulative_trapezoid(np.exp(-IL) * data.M, t, initial=0.0))
    if max_excess > hyp_tol:
        status = "not applicable"
    else:
        status = "pass" if np.all(lhs <= rhs + tol * (1.0 + np.abs(rhs))) else "fail"
    return GronwallResult(status, t, lhs, rhs, max_excess)


def ladyzhenskaya_check(f: ScalarField) -> float:
    """r = ||f^2|| / (||f|| ||grad f||); 0 for the zero field."""
    denom = l2_norm(f) * h1_seminorm(f)
    if denom == 0.0:
        return 0.0
    f2 = np.sqrt(f.spec.cell_area * np.sum(f.values**4))
    return float(f2 / denom)


LADYZHENSKAYA_CONSTANT = np.sqrt(2.0)


def ladyzhenskaya_ok(ratio: float, tol: float = 0.1) -> bool:
    return ratio <= LADYZHENSKAYA_CONSTANT * (1.0 + tol)


def sobolev_constant_estimate(samples) -> float:
    """max ||u||_inf / ||u||_2 over the nonzero samples."""
    ratios = [linf_norm(u) / v2_norm(u) for u in samples if np.any(u.values)]
    if not ratios:
        raise ValueError("no nonzero samples")
    return float(max(ratios))
