"""Diffusivity, coupling field and the standing assumptions of the model."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import GridSpec


class ValidationError(ValueError):
    """A model assumption does not hold; the message names it."""


@dataclass(frozen=True)
class DiffusivityParams:
    """g(s) = a / (b + c|s|^d).

    Positivity and the range of ``d`` are checked by :func:`validate_config`,
    not here, so that invalid parameter sets can still be reported on.
    """

    a: float = 1.0
    b: float = 1.0
    c: float = 1.0
    d: float = 2.0

    def __call__(self, s):
        return g_eval(self, s)

    @property
    def sup(self) -> float:
        return self.a / self.b


@dataclass(frozen=True)
class ConstantDiffusivity:
    """Test hook: g(s) = value for every s."""

    value: float = 1.0

    def __call__(self, s):
        return np.full(np.shape(s), float(self.value)) if np.ndim(s) else float(self.value)

    @property
    def sup(self) -> float:
        return float(self.value)


def g_eval(params, s):
    if isinstance(params, ConstantDiffusivity):
        return params(s)
    s = np.abs(s)
    return params.a / (params.b + params.c * s**params.d)


def g_inv_sqrt_bound(params, S: float = 10.0, n: int = 10001) -> float:
    """Sampled constant C(g) with 1/sqrt(g(s)) <= C(g)(1 + |s|) on [-S, S].

    Follows the chain 1/sqrt(g(s)) <= |1/sqrt(g(s)) - 1/sqrt(g(0))| + 1/sqrt(g(0)),
    bounding the first term by the sampled Lipschitz constant.
    """
    s = np.linspace(-S, S, n)
    with np.errstate(all="ignore"):
        h = 1.0 / np.sqrt(g_eval(params, s))
        h0 = 1.0 / np.sqrt(g_eval(params, 0.0))
        lip = np.max(np.abs(np.diff(h)) / np.diff(s))
    if not (np.all(np.isfinite(h)) and np.isfinite(lip) and np.isfinite(h0)):
        raise ValidationError("no finite C(g) on the sample range: 1/sqrt(g) is not Lipschitz there")
    C = float(max(lip, h0))
    if np.any(h > C * (1.0 + np.abs(s)) * (1 + 1e-12)):
        raise ValidationError("sampled C(g) does not bound 1/sqrt(g)")
    return C


def lipschitz_constant(values: np.ndarray, spec: GridSpec) -> float:
    """Max |f_p - f_q| / dist(p, q) over horizontally/vertically adjacent nodes."""
    lx = np.abs(np.diff(values, axis=1)).max(initial=0.0) / spec.hx
    ly = np.abs(np.diff(values, axis=0)).max(initial=0.0) / spec.hy
    return float(max(lx, ly))


@dataclass(frozen=True, eq=False)
class LambdaField:
    spec: GridSpec
    values: np.ndarray
    lambda0: float = field(init=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.spec.shape:
            raise ValueError(f"lambda of shape {vals.shape} does not fit grid {self.spec.shape}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "lambda0", float(vals.min()))

    @property
    def is_constant(self) -> bool:
        return bool(np.ptp(self.values) == 0.0)

    @property
    def lipschitz(self) -> float:
        return lipschitz_constant(self.values, self.spec)

    @classmethod
    def constant(cls, spec: GridSpec, value: float) -> "LambdaField":
        return cls(spec, np.full(spec.shape, float(value)))

    @classmethod
    def radial_ramp(cls, spec: GridSpec, lam_min: float, lam_max: float = 1.0) -> "LambdaField":
        """lam_max at the centre, decreasing linearly to lam_min at the corners."""
        X, Y = spec.coords()
        r = np.hypot(X - spec.lx / 2, Y - spec.ly / 2)
        rmax = np.hypot(spec.lx / 2, spec.ly / 2)
        return cls(spec, lam_max - (lam_max - lam_min) * r / rmax)

    @classmethod
    def from_mask(cls, spec: GridSpec, mask: np.ndarray, lam_min: float) -> "LambdaField":
        """Affinely rescale an intensity array into [lam_min, 1]."""
        m = np.asarray(mask, dtype=float)
        if m.shape != spec.shape:
            raise ValueError(f"mask of shape {m.shape} does not fit grid {spec.shape}")
        span = np.ptp(m)
        unit = (m - m.min()) / span if span > 0 else np.ones_like(m)
        return cls(spec, lam_min + (1.0 - lam_min) * unit)


@dataclass(frozen=True)
class ModelConfig:
    diffusivity: DiffusivityParams | ConstantDiffusivity
    lam: LambdaField
    epsilon: float = 0.0
    delta: float = 1.0

    @property
    def spec(self) -> GridSpec:
        return self.lam.spec

    def g(self, s):
        return g_eval(self.diffusivity, s)


@dataclass
class ValidationReport:
    checks: dict[str, bool]
    messages: dict[str, str]

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    @property
    def failures(self) -> list[str]:
        return [k for k, v in self.checks.items() if not v]

    def raise_if_failed(self):
        if not self.ok:
            raise ValidationError("; ".join(f"{k} violated ({self.messages[k]})" for k in self.failures))


def validate_config(config: ModelConfig) -> ValidationReport:
    """Check every standing assumption; collects failures instead of raising."""
    checks: dict[str, bool] = {}
    msgs: dict[str, str] = {}

    def record(name, ok, msg):
        checks[name] = bool(ok)
        msgs[name] = msg

    gp = config.diffusivity
    if isinstance(gp, ConstantDiffusivity):
        record("g > 0", np.isfinite(gp.value) and gp.value > 0, f"g = {gp.value}")
        record("g bounded", np.isfinite(gp.value), f"sup g = {gp.value}")
        record("d in [1, 2]", True, "constant diffusivity")
    else:
        pos = all(np.isfinite(p) and p > 0 for p in (gp.a, gp.b, gp.c, gp.d))
        record("g > 0", pos, f"a={gp.a}, b={gp.b}, c={gp.c}, d={gp.d} must be positive")
        record("g bounded", pos and np.isfinite(gp.a / gp.b), f"sup g = a/b = {gp.a / gp.b if gp.b else np.inf}")
        record("d in [1, 2]", 1.0 <= gp.d <= 2.0, f"d = {gp.d}, Lipschitz sufficiency needs 1 <= d <= 2")
    try:
        C = g_inv_sqrt_bound(gp) if checks["g > 0"] else np.inf
        record("1/sqrt(g) Lipschitz", np.isfinite(C), f"C(g) = {C}")
    except ValidationError as exc:
        record("1/sqrt(g) Lipschitz", False, str(exc))

    lam = config.lam.values
    record("lambda finite", np.all(np.isfinite(lam)), "lambda must be finite")
    record("lambda <= 1", np.all(lam <= 1.0), f"max lambda = {lam.max()}")
    record("lambda0 > 0", config.lam.lambda0 > 0, f"lambda0 = {config.lam.lambda0}")
    lip = config.lam.lipschitz
    record("lambda Lipschitz", np.isfinite(lip), f"discrete Lipschitz constant = {lip}")
    record("epsilon >= 0", np.isfinite(config.epsilon) and config.epsilon >= 0, f"epsilon = {config.epsilon}")
    record("delta in [0, 1]", 0.0 <= config.delta <= 1.0, f"delta = {config.delta}")
    return ValidationReport(checks, msgs)
