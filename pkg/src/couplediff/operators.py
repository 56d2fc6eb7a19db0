"""Finite-difference operators on Dirichlet fields.

Public functions take and return :class:`ScalarField`; the underscored
array kernels and the sparse assemblers are what the time stepper uses.
"""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .grid import GridMismatchError, GridSpec, ScalarField, forward_differences
from .model import LambdaField


def _reject_nan(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite values passed to a stencil")


def face_coefficients(gpad: np.ndarray, mean: str = "arithmetic") -> tuple[np.ndarray, np.ndarray]:
    """Coefficients on x-faces ``(ny, nx+1)`` and y-faces ``(ny+1, nx)``.

    ``gpad`` holds nodal values including the boundary ring.
    """
    gl, gr = gpad[1:-1, :-1], gpad[1:-1, 1:]
    gb, gt = gpad[:-1, 1:-1], gpad[1:, 1:-1]
    if mean == "arithmetic":
        return 0.5 * (gl + gr), 0.5 * (gb + gt)
    if mean == "harmonic":
        return 2 * gl * gr / (gl + gr), 2 * gb * gt / (gb + gt)
    raise ValueError(f"unknown face mean {mean!r}")


def pad_coefficient(g: np.ndarray) -> np.ndarray:
    """Attach a boundary ring to an interior coefficient array by edge copy."""
    return np.pad(g, 1, mode="edge")


def _div_flux(u: np.ndarray, gx: np.ndarray, gy: np.ndarray, hx: float, hy: float) -> np.ndarray:
    dx, dy = forward_differences(u, hx, hy)
    fx, fy = gx * dx, gy * dy
    return (fx[:, 1:] - fx[:, :-1]) / hx + (fy[1:, :] - fy[:-1, :]) / hy


def _laplacian(u: np.ndarray, hx: float, hy: float) -> np.ndarray:
    p = np.pad(u, 1)
    return ((p[1:-1, 2:] - 2 * u + p[1:-1, :-2]) / hx**2
            + (p[2:, 1:-1] - 2 * u + p[:-2, 1:-1]) / hy**2)


def _central_gradient(u: np.ndarray, hx: float, hy: float) -> tuple[np.ndarray, np.ndarray]:
    p = np.pad(u, 1)
    return (p[1:-1, 2:] - p[1:-1, :-2]) / (2 * hx), (p[2:, 1:-1] - p[:-2, 1:-1]) / (2 * hy)


def _gradient_magnitude(u: np.ndarray, hx: float, hy: float) -> np.ndarray:
    gx, gy = _central_gradient(u, hx, hy)
    return np.hypot(gx, gy)


def _data_gradient(lam: np.ndarray, hx: float, hy: float) -> tuple[np.ndarray, np.ndarray]:
    # data fields carry no boundary convention: one-sided at the edges
    gy, gx = np.gradient(lam, hy, hx)
    return gx, gy


def _advect(v: np.ndarray, lam_grad: tuple[np.ndarray, np.ndarray], hx: float, hy: float) -> np.ndarray:
    vx, vy = _central_gradient(v, hx, hy)
    return vx * lam_grad[0] + vy * lam_grad[1]


def _dissipation_cells(u: np.ndarray, gx: np.ndarray, gy: np.ndarray, hx: float, hy: float) -> np.ndarray:
    """Per-cell share of sum_faces g_face (Du)^2, shape ``(ny+1, nx+1)``.

    Each face is split evenly between the two cells it borders, so the cell
    values sum to the face sum and cover |Omega| exactly.
    """
    dx, dy = forward_differences(u, hx, hy)
    ex, ey = gx * dx**2, gy * dy**2
    cells = np.zeros((u.shape[0] + 1, u.shape[1] + 1))
    cells[:-1, :] += 0.5 * ex
    cells[1:, :] += 0.5 * ex
    cells[:, :-1] += 0.5 * ey
    cells[:, 1:] += 0.5 * ey
    return cells


# sparse assembly, row-major unknown ordering k = j*nx + i

def assemble_neg_div(gx: np.ndarray, gy: np.ndarray, spec: GridSpec) -> sp.csr_matrix:
    """Matrix of u -> -div(g grad u); symmetric positive definite for g > 0."""
    nx, ny, hx, hy = spec.nx, spec.ny, spec.hx, spec.hy
    diag = ((gx[:, :-1] + gx[:, 1:]) / hx**2 + (gy[:-1, :] + gy[1:, :]) / hy**2).ravel()
    east = np.zeros((ny, nx))
    east[:, :-1] = -gx[:, 1:-1] / hx**2
    east = east.ravel()[:-1]
    north = (-gy[1:-1, :] / hy**2).ravel()
    n = nx * ny
    return sp.diags([diag, east, east, north, north], [0, 1, -1, nx, -nx], shape=(n, n), format="csr")


def assemble_neg_laplacian(spec: GridSpec) -> sp.csr_matrix:
    gx = np.ones((spec.ny, spec.nx + 1))
    gy = np.ones((spec.ny + 1, spec.nx))
    return assemble_neg_div(gx, gy, spec)


def assemble_operator_A(spec: GridSpec) -> sp.csr_matrix:
    K = assemble_neg_laplacian(spec)
    return (K + K @ K).tocsr()


# public field-level API

def gradient_magnitude(u: ScalarField) -> ScalarField:
    """|grad u| by central differences, reading the boundary ring as zero."""
    _reject_nan(u.values)
    return ScalarField(u.spec, _gradient_magnitude(u.values, u.spec.hx, u.spec.hy))


def gradient(u: ScalarField):
    from .grid import VectorField
    gx, gy = _central_gradient(u.values, u.spec.hx, u.spec.hy)
    return VectorField(u.spec, gx, gy)


def div_g_grad(u: ScalarField, gfield, mean: str = "arithmetic") -> ScalarField:
    """Conservative div(g grad u) with face-averaged coefficients.

    ``gfield`` is either an interior-shaped array/field (edge-extended to the
    boundary ring) or an array that already includes the ring.
    """
    g = gfield.values if isinstance(gfield, ScalarField) else np.asarray(gfield, dtype=float)
    spec = u.spec
    if g.shape == spec.shape:
        g = pad_coefficient(g)
    elif g.shape != (spec.ny + 2, spec.nx + 2):
        raise GridMismatchError(f"coefficient of shape {g.shape} does not fit grid {spec.shape}")
    _reject_nan(u.values, g)
    if np.any(g <= 0):
        raise ValueError("diffusion coefficient must be positive everywhere")
    gx, gy = face_coefficients(g, mean)
    return ScalarField(spec, _div_flux(u.values, gx, gy, spec.hx, spec.hy))


def laplacian(f: ScalarField) -> ScalarField:
    _reject_nan(f.values)
    return ScalarField(f.spec, _laplacian(f.values, f.spec.hx, f.spec.hy))


def advect_lambda(v: ScalarField, lam: LambdaField) -> ScalarField:
    """grad v . grad lambda, central differences for both factors."""
    if v.spec != lam.spec:
        raise GridMismatchError(f"{v.spec} vs {lam.spec}")
    _reject_nan(v.values, lam.values)
    s = v.spec
    return ScalarField(s, _advect(v.values, _data_gradient(lam.values, s.hx, s.hy), s.hx, s.hy))


def operator_A(u: ScalarField) -> ScalarField:
    """A_h u = -Lap_h u + Lap_h(Lap_h u), so that (A_h u, w) = v2_inner(u, w)."""
    _reject_nan(u.values)
    s = u.spec
    lap = _laplacian(u.values, s.hx, s.hy)
    return ScalarField(s, -lap + _laplacian(lap, s.hx, s.hy))


def dissipation(u: ScalarField, gfield, mean: str = "arithmetic") -> float:
    """(g grad u, grad u) in the face form matching :func:`div_g_grad`."""
    g = gfield.values if isinstance(gfield, ScalarField) else np.asarray(gfield, dtype=float)
    if g.shape == u.spec.shape:
        g = pad_coefficient(g)
    gx, gy = face_coefficients(g, mean)
    s = u.spec
    return float(s.cell_area * np.sum(_dissipation_cells(u.values, gx, gy, s.hx, s.hy)))
