"""Test pairs (zeta, theta) sampled in time, with their time derivatives."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..grid import GridSpec, ScalarField, v2_norm
from ..operators import _central_gradient

# proxies above this count as outside the admissible class
ADMISSIBILITY_BOUND = 1e8


@dataclass(eq=False)
class TestPair:
    __test__ = False  # keep pytest from collecting this

    spec: GridSpec
    times: np.ndarray
    zeta: np.ndarray
    theta: np.ndarray
    zeta_t: np.ndarray
    theta_t: np.ndarray
    source: str = "custom"
    bound: float = ADMISSIBILITY_BOUND
    admissibility: dict = field(init=False)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        shape = (len(self.times),) + self.spec.shape
        for name in ("zeta", "theta", "zeta_t", "theta_t"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, expected {shape}")
            setattr(self, name, arr)
        self.admissibility = self._proxies()

    def _proxies(self) -> dict:
        s = self.spec
        gz = [np.hypot(*_central_gradient(z, s.hx, s.hy)).max() for z in self.zeta]
        z2 = np.array([v2_norm(ScalarField(s, z)) if np.all(np.isfinite(z)) else np.inf for z in self.zeta])
        t2 = np.array([v2_norm(ScalarField(s, t)) if np.all(np.isfinite(t)) else np.inf for t in self.theta])
        dt = np.diff(self.times)
        return {
            "max_abs_zeta": float(np.abs(self.zeta).max()),
            "max_grad_zeta": float(max(gz)),
            "max_abs_theta": float(np.abs(self.theta).max()),
            "sum_dt_zeta_v2_4": float(np.sum(dt * z2[1:] ** 4)),
            "sum_dt_theta_v2_2": float(np.sum(dt * t2[1:] ** 2)),
            "max_abs_zeta_t": float(np.abs(self.zeta_t).max()),
            "max_abs_theta_t": float(np.abs(self.theta_t).max()),
        }

    @property
    def admissible(self) -> bool:
        return all(np.isfinite(v) and v <= self.bound for v in self.admissibility.values())

    def resample(self, times) -> "TestPair":
        """Linear interpolation in time onto ``times``."""
        times = np.asarray(times, dtype=float)
        if len(times) == len(self.times) and np.allclose(times, self.times, rtol=0, atol=1e-12):
            return self
        if times.min() < self.times[0] - 1e-12 or times.max() > self.times[-1] + 1e-12:
            raise ValueError("cannot extrapolate a test pair outside its time range")

        def interp(a):
            idx = np.clip(np.searchsorted(self.times, times, side="right") - 1, 0, len(self.times) - 2)
            t0, t1 = self.times[idx], self.times[idx + 1]
            w = ((times - t0) / (t1 - t0))[:, None, None]
            return (1 - w) * a[idx] + w * a[idx + 1]

        return TestPair(self.spec, times, interp(self.zeta), interp(self.theta),
                        interp(self.zeta_t), interp(self.theta_t), self.source, self.bound)

    def state(self, k: int) -> tuple[ScalarField, ScalarField]:
        return ScalarField(self.spec, self.zeta[k]), ScalarField(self.spec, self.theta[k])


def zero_pair(spec: GridSpec, times) -> TestPair:
    z = np.zeros((len(times),) + spec.shape)
    return TestPair(spec, times, z, z, z, z, source="zero")


def eigenmode_pair(spec: GridSpec, times, amp_u=1.0, amp_v=1.0, k=1, l=1, rate=None) -> TestPair:
    """zeta = amp_u*phi*exp(-rate t), theta = amp_v*phi*exp(-rate t), phi = sin(k pi x/lx) sin(l pi y/ly).

    ``rate`` defaults to the Laplacian eigenvalue of phi.
    """
    X, Y = spec.coords()
    phi = np.sin(k * np.pi * X / spec.lx) * np.sin(l * np.pi * Y / spec.ly)
    if rate is None:
        rate = np.pi**2 * ((k / spec.lx) ** 2 + (l / spec.ly) ** 2)
    times = np.asarray(times, dtype=float)
    decay = np.exp(-rate * times)[:, None, None]
    z, th = amp_u * decay * phi, amp_v * decay * phi
    return TestPair(spec, times, z, th, -rate * z, -rate * th, source=f"eigenmode({k},{l})")


def trajectory_pair(traj, source="trajectory") -> TestPair:
    """Freeze a solver trajectory's snapshots as a pair; centered differences in time."""
    t = traj.snap_times
    if len(t) < 2:
        raise ValueError("need at least two snapshots to difference in time")
    zt = np.gradient(traj.u_snaps, t, axis=0, edge_order=1)
    tt = np.gradient(traj.v_snaps, t, axis=0, edge_order=1)
    return TestPair(traj.spec, t, traj.u_snaps, traj.v_snaps, zt, tt, source=source)
