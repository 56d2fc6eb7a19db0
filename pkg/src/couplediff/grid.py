"""Uniform rectangular grids, Dirichlet fields and the discrete norms.

Fields live on the interior nodes of a uniform grid over ``[0, lx] x [0, ly]``.
The boundary ring is never stored: every stencil reads it as zero, so the
homogeneous Dirichlet condition holds by construction.

Arrays are indexed ``[j, i]`` with ``j`` along y (rows) and ``i`` along x
(columns), the same layout as a grayscale image.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if int(self.nx) != self.nx or int(self.ny) != self.ny:
            raise ValueError("node counts must be integers")
        if self.nx < 3 or self.ny < 3:
            raise ValueError(f"need at least 3x3 interior nodes, got {self.nx}x{self.ny}")
        if not (self.lx > 0 and self.ly > 0):
            raise ValueError("domain extents must be positive")

    @property
    def hx(self) -> float:
        return self.lx / (self.nx + 1)

    @property
    def hy(self) -> float:
        return self.ly / (self.ny + 1)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def area(self) -> float:
        """|Omega| of the continuous rectangle."""
        return self.lx * self.ly

    @property
    def cell_area(self) -> float:
        return self.hx * self.hy

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid ``(X, Y)`` of interior node coordinates."""
        x = self.hx * np.arange(1, self.nx + 1)
        y = self.hy * np.arange(1, self.ny + 1)
        return np.meshgrid(x, y)

    @classmethod
    def unit_square(cls, n: int) -> "GridSpec":
        return cls(n, n, 1.0, 1.0)

    @classmethod
    def with_spacing(cls, nx: int, ny: int, h: float = 1.0) -> "GridSpec":
        return cls(nx, ny, h * (nx + 1), h * (ny + 1))


@dataclass(frozen=True, eq=False)
class ScalarField:
    spec: GridSpec
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.spec.shape:
            raise GridMismatchError(f"values of shape {vals.shape} do not fit grid {self.spec.shape}")
        if not np.all(np.isfinite(vals)):
            raise ValueError("field contains non-finite values")
        object.__setattr__(self, "values", vals)

    @classmethod
    def zeros(cls, spec: GridSpec) -> "ScalarField":
        return cls(spec, np.zeros(spec.shape))

    @classmethod
    def from_function(cls, spec: GridSpec, fn) -> "ScalarField":
        X, Y = spec.coords()
        return cls(spec, np.broadcast_to(fn(X, Y), spec.shape).copy())

    def padded(self) -> np.ndarray:
        """Values with the zero boundary ring attached."""
        return np.pad(self.values, 1)

    def _check(self, other: "ScalarField"):
        if other.spec != self.spec:
            raise GridMismatchError(f"{self.spec} vs {other.spec}")

    def __add__(self, other):
        if isinstance(other, ScalarField):
            self._check(other)
            return ScalarField(self.spec, self.values + other.values)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, ScalarField):
            self._check(other)
            return ScalarField(self.spec, self.values - other.values)
        return NotImplemented

    def __mul__(self, c):
        if np.isscalar(c):
            return ScalarField(self.spec, c * self.values)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField(self.spec, -self.values)


@dataclass(frozen=True, eq=False)
class VectorField:
    spec: GridSpec
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        if np.shape(self.x) != np.shape(self.y):
            raise GridMismatchError("vector components differ in shape")

    def magnitude(self) -> np.ndarray:
        return np.hypot(self.x, self.y)


def _values(f) -> np.ndarray:
    return f.values if isinstance(f, ScalarField) else np.asarray(f, dtype=float)


def _same_spec(f: ScalarField, g: ScalarField):
    if f.spec != g.spec:
        raise GridMismatchError(f"{f.spec} vs {g.spec}")


# array-level kernels; the solver calls these directly on raw arrays

def forward_differences(a: np.ndarray, hx: float, hy: float) -> tuple[np.ndarray, np.ndarray]:
    """Face differences of a zero-extended interior array.

    Returns ``dx`` of shape ``(ny, nx+1)`` (x-faces, including the two
    boundary faces of every row) and ``dy`` of shape ``(ny+1, nx)``.
    """
    p = np.pad(a, 1)
    dx = (p[1:-1, 1:] - p[1:-1, :-1]) / hx
    dy = (p[1:, 1:-1] - p[:-1, 1:-1]) / hy
    return dx, dy


def cross_differences(a: np.ndarray, hx: float, hy: float) -> np.ndarray:
    """Mixed difference D_xy on all ``(ny+1) x (nx+1)`` cells."""
    p = np.pad(a, 1)
    return (p[1:, 1:] - p[1:, :-1] - p[:-1, 1:] + p[:-1, :-1]) / (hx * hy)


def second_differences(a: np.ndarray, hx: float, hy: float) -> tuple[np.ndarray, np.ndarray]:
    """Three-point D_xx and D_yy at interior nodes, zero extension."""
    p = np.pad(a, 1)
    dxx = (p[1:-1, 2:] - 2 * p[1:-1, 1:-1] + p[1:-1, :-2]) / hx**2
    dyy = (p[2:, 1:-1] - 2 * p[1:-1, 1:-1] + p[:-2, 1:-1]) / hy**2
    return dxx, dyy


def inner(f, g, spec: GridSpec) -> float:
    return float(spec.cell_area * np.sum(_values(f) * _values(g)))


def l2_norm(f: ScalarField) -> float:
    return float(np.sqrt(f.spec.cell_area * np.sum(f.values**2)))


def h1_inner(f: ScalarField, g: ScalarField) -> float:
    _same_spec(f, g)
    s = f.spec
    fx, fy = forward_differences(f.values, s.hx, s.hy)
    gx, gy = forward_differences(g.values, s.hx, s.hy)
    return float(s.cell_area * (np.sum(fx * gx) + np.sum(fy * gy)))


def h1_seminorm(f: ScalarField) -> float:
    """||grad f|| from forward differences; a norm under the Dirichlet closure."""
    return float(np.sqrt(max(h1_inner(f, f), 0.0)))


def v2_inner(f: ScalarField, g: ScalarField) -> float:
    """Discrete (f, g)_2: gradient part plus the full Hessian pairing.

    The mixed derivative is counted twice (D_xy and D_yx), so for zero
    extended fields this equals ``(grad f, grad g) + (Lap f, Lap g)`` exactly.
    """
    _same_spec(f, g)
    s = f.spec
    fxx, fyy = second_differences(f.values, s.hx, s.hy)
    gxx, gyy = second_differences(g.values, s.hx, s.hy)
    fxy = cross_differences(f.values, s.hx, s.hy)
    gxy = cross_differences(g.values, s.hx, s.hy)
    hess = np.sum(fxx * gxx) + 2.0 * np.sum(fxy * gxy) + np.sum(fyy * gyy)
    return h1_inner(f, g) + float(s.cell_area * hess)


def v2_norm(f: ScalarField) -> float:
    return float(np.sqrt(max(v2_inner(f, f), 0.0)))


def linf_norm(f: ScalarField) -> float:
    return float(np.max(np.abs(f.values))) if f.values.size else 0.0


def l1_norm(f) -> float:
    if isinstance(f, ScalarField):
        return float(f.spec.cell_area * np.sum(np.abs(f.values)))
    raise TypeError("l1_norm expects a ScalarField")
