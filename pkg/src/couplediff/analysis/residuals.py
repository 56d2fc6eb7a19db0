"""Defects E1, E2 of a test pair against the two equations."""
from __future__ import annotations

import numpy as np

from ..grid import ScalarField
from ..model import ModelConfig
from ..operators import _advect, _data_gradient, _div_flux, _gradient_magnitude, _laplacian, face_coefficients
from .pairs import TestPair


def _check(pair: TestPair, model: ModelConfig, k: int):
    if pair.spec != model.spec:
        raise ValueError("pair and model live on different grids")
    if not np.all(np.isfinite(pair.zeta_t[k])) or not np.all(np.isfinite(pair.theta_t[k])):
        raise ValueError(f"missing time derivative at index {k}")


def e1_array(zeta, theta, zeta_t, model: ModelConfig, delta: float, mean="arithmetic"):
    s = model.spec
    out = -zeta_t
    if delta:
        gx, gy = face_coefficients(np.asarray(model.g(np.pad(theta, 1)), dtype=float)
                                   * np.ones((s.ny + 2, s.nx + 2)), mean)
        out = out + delta * _div_flux(zeta, gx, gy, s.hx, s.hy)
    return out


def e2_array(zeta, theta, theta_t, model: ModelConfig, delta: float):
    s = model.spec
    lam = model.lam.values
    out = -theta_t + lam * _laplacian(theta, s.hx, s.hy)
    out = out + delta * (1.0 - lam) * (_gradient_magnitude(zeta, s.hx, s.hy) - theta)
    if delta < 1 and not model.lam.is_constant:
        out = out + (1.0 - delta) * _advect(theta, _data_gradient(lam, s.hx, s.hy), s.hx, s.hy)
    return out


def residual_E1(pair: TestPair, model: ModelConfig, k: int, delta: float | None = None) -> ScalarField:
    """E1 = -zeta_t + delta div(g(theta) grad zeta) at time index ``k``."""
    _check(pair, model, k)
    d = model.delta if delta is None else delta
    return ScalarField(pair.spec, e1_array(pair.zeta[k], pair.theta[k], pair.zeta_t[k], model, d))


def residual_E2(pair: TestPair, model: ModelConfig, k: int, delta: float | None = None) -> ScalarField:
    """E2 = -theta_t + lam Lap theta + delta(1-lam)(|grad zeta| - theta) + (1-delta) grad theta . grad lam."""
    _check(pair, model, k)
    d = model.delta if delta is None else delta
    return ScalarField(pair.spec, e2_array(pair.zeta[k], pair.theta[k], pair.theta_t[k], model, d))
