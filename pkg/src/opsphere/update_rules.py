"""Update functions f: [-1, 1] -> R and the pairwise opinion update they drive.

An interaction in which agent j influences agent i replaces u_i with
``w / ||w||`` where ``w = u_i + f(<u_i, u_j>) u_j``. Five parametric families
are supported; see :class:`UpdateSpec`.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import DegenerateUpdate, DimensionMismatch, DomainError, InvalidParams, NotStable

DOMAIN_TOL = 1e-12
DEGENERATE_NORM = 1e-9
# angles closer than this to 0 or pi are treated as the slerp fixed points
SLERP_ANGLE_TOL = 1e-9


class Family(str, enum.Enum):
    LINEAR = "linear"
    ASYM_LINEAR = "asym-linear"
    SIGN = "sign"
    ASYM_SIGN = "asym-sign"
    SLERP = "slerp"

    @property
    def code(self) -> int:
        return _FAMILY_CODES[self]


_FAMILY_CODES = {
    Family.LINEAR: 0,
    Family.ASYM_LINEAR: 1,
    Family.SIGN: 2,
    Family.ASYM_SIGN: 3,
    Family.SLERP: 4,
}

_PARAMS = {
    Family.LINEAR: ("eta",),
    Family.ASYM_LINEAR: ("eta_plus", "eta_minus"),
    Family.SIGN: ("eta",),
    Family.ASYM_SIGN: ("eta_plus", "eta_minus", "threshold"),
    Family.SLERP: ("eta",),
}


@dataclass(frozen=True)
class UpdateSpec:
    """Parametric description of an update function.

    ``eta`` is used by linear, sign and slerp; ``eta_plus``/``eta_minus`` by
    the asymmetric families; ``threshold`` is the sign-change point of the
    asymmetric sign family.
    """

    family: Family
    eta: float | None = None
    eta_plus: float | None = None
    eta_minus: float | None = None
    threshold: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        needed = _PARAMS[self.family]
        for name in ("eta", "eta_plus", "eta_minus"):
            value = getattr(self, name)
            if name in needed:
                if value is None or not math.isfinite(value) or value <= 0:
                    raise InvalidParams(f"{self.family.value}: {name} must be a positive real, got {value!r}")
                object.__setattr__(self, name, float(value))
            elif value is not None:
                raise InvalidParams(f"{self.family.value} does not take {name}")
        if self.family is Family.SLERP and not self.eta < 1:
            raise InvalidParams("slerp requires 0 < eta < 1")
        if not -1 < self.threshold < 1:
            raise InvalidParams("threshold must lie in (-1, 1)")
        if self.family is not Family.ASYM_SIGN and self.threshold != 0.0:
            raise InvalidParams(f"{self.family.value} does not take a threshold")
        object.__setattr__(self, "threshold", float(self.threshold))

    @classmethod
    def linear(cls, eta: float) -> "UpdateSpec":
        return cls(Family.LINEAR, eta=eta)

    @classmethod
    def asym_linear(cls, eta_plus: float, eta_minus: float) -> "UpdateSpec":
        return cls(Family.ASYM_LINEAR, eta_plus=eta_plus, eta_minus=eta_minus)

    @classmethod
    def sign(cls, eta: float) -> "UpdateSpec":
        return cls(Family.SIGN, eta=eta)

    @classmethod
    def asym_sign(cls, eta_plus: float, eta_minus: float, threshold: float = 0.0) -> "UpdateSpec":
        return cls(Family.ASYM_SIGN, eta_plus=eta_plus, eta_minus=eta_minus, threshold=threshold)

    @classmethod
    def slerp(cls, eta: float) -> "UpdateSpec":
        return cls(Family.SLERP, eta=eta)

    @classmethod
    def parse(cls, text: str) -> "UpdateSpec":
        """Parse the textual form, e.g. ``asym-linear:eta_plus=0.9,eta_minus=0.1``."""
        name, _, rest = text.strip().partition(":")
        try:
            family = Family(name.strip())
        except ValueError:
            raise InvalidParams(f"unknown update family {name!r}") from None
        kwargs = {}
        for item in filter(None, (s.strip() for s in rest.split(","))):
            key, eq, value = item.partition("=")
            key = key.strip()
            if not eq or key not in _PARAMS[family]:
                raise InvalidParams(f"bad parameter {item!r} for {family.value}")
            try:
                kwargs[key] = float(value)
            except ValueError:
                raise InvalidParams(f"parameter {key} is not a number: {value!r}") from None
        return cls(family, **kwargs)

    def __str__(self) -> str:
        params = ",".join(f"{k}={getattr(self, k)!r}" for k in _PARAMS[self.family])
        return f"{self.family.value}:{params}"

    def kernel_args(self) -> tuple[int, float, float, float, float]:
        """(family code, eta, eta_plus, eta_minus, threshold) with absent values as 0."""
        return (
            self.family.code,
            self.eta or 0.0,
            self.eta_plus or 0.0,
            self.eta_minus or 0.0,
            self.threshold,
        )


def _slerp_f(a: np.ndarray, eta: float) -> np.ndarray:
    theta = np.arccos(a)
    # (1/2) sin(2 theta) = A sqrt(1 - A^2), exactly zero at A = 0
    phi = eta * a * np.sqrt(1.0 - a * a)
    limit = eta / (1.0 - eta)
    near_one = theta < SLERP_ANGLE_TOL
    near_minus_one = (np.pi - theta) < SLERP_ANGLE_TOL
    safe = ~(near_one | near_minus_one)
    out = np.empty_like(a)
    out[safe] = np.sin(phi[safe]) / np.sin(theta[safe] - phi[safe])
    # removable singularities, filled in by continuity
    out[near_one] = limit
    out[near_minus_one] = -limit
    return out


def evaluate(spec: UpdateSpec, a):
    """f(A) for scalar or array A in [-1, 1]."""
    arr = np.asarray(a, dtype=float)
    if np.any(np.abs(arr) > 1.0 + DOMAIN_TOL) or np.any(np.isnan(arr)):
        raise DomainError("update functions are defined on [-1, 1]")
    arr = np.clip(arr, -1.0, 1.0)
    fam = spec.family
    if fam is Family.LINEAR:
        out = spec.eta * arr
    elif fam is Family.ASYM_LINEAR:
        out = np.where(arr >= 0, spec.eta_plus * arr, spec.eta_minus * arr)
    elif fam is Family.SIGN:
        out = np.where(arr >= 0, spec.eta, -spec.eta)
    elif fam is Family.ASYM_SIGN:
        out = np.where(arr >= spec.threshold, spec.eta_plus, -spec.eta_minus)
    else:
        out = _slerp_f(np.atleast_1d(arr), spec.eta).reshape(arr.shape)
    out = np.asarray(out, dtype=float)
    return float(out) if out.ndim == 0 else out


def apply_update(u_i, u_j, spec: UpdateSpec) -> np.ndarray:
    """New opinion of agent i after being influenced by agent j.

    Broadcasts over leading axes: ``u_i`` and ``u_j`` may be (..., d) batches.
    """
    u_i = np.asarray(u_i, dtype=float)
    u_j = np.asarray(u_j, dtype=float)
    if u_i.shape[-1] != u_j.shape[-1]:
        raise DimensionMismatch(f"dimension {u_i.shape[-1]} != {u_j.shape[-1]}")
    a = np.clip(np.einsum("...k,...k->...", u_i, u_j), -1.0, 1.0)
    f = np.asarray(evaluate(spec, a))
    w = u_i + f[..., None] * u_j
    norm = np.linalg.norm(w, axis=-1, keepdims=True)
    if np.any(norm <= DEGENERATE_NORM):
        raise DegenerateUpdate("update vector vanished")
    return w / norm


def predicted_correlation(a, spec: UpdateSpec):
    """Correlation with the influencer after one update, from the correlation alone."""
    arr = np.asarray(a, dtype=float)
    f = np.asarray(evaluate(spec, arr))
    arr = np.clip(arr, -1.0, 1.0)
    # (1 + A f)^2 + f^2 (1 - A^2) equals 1 + 2 A f + f^2 but is an exact square at A = +-1
    denom_sq = (1.0 + arr * f) ** 2 + f * f * (1.0 - arr * arr)
    if np.any(denom_sq <= DEGENERATE_NORM**2):
        raise DegenerateUpdate("update vector vanished")
    out = np.clip((arr + f) / np.sqrt(denom_sq), -1.0, 1.0)
    return float(out) if out.ndim == 0 else out


def slerp_update(u_i, u_j, eta: float) -> np.ndarray:
    """Move u_i along the great circle towards (or away from) u_j by (eta/2) sin(2 theta)."""
    if not 0 < eta < 1:
        raise InvalidParams("slerp requires 0 < eta < 1")
    u_i = np.asarray(u_i, dtype=float)
    u_j = np.asarray(u_j, dtype=float)
    if u_i.shape != u_j.shape:
        raise DimensionMismatch("opinions must have equal dimension")
    # atan2 form keeps theta accurate near 0 and pi, where arccos loses digits
    theta = 2.0 * math.atan2(float(np.linalg.norm(u_i - u_j)), float(np.linalg.norm(u_i + u_j)))
    if theta < SLERP_ANGLE_TOL or math.pi - theta < SLERP_ANGLE_TOL:
        return u_i.copy()
    phi = eta * math.sin(theta) * float(np.clip(u_i @ u_j, -1.0, 1.0))
    out = (math.sin(theta - phi) * u_i + math.sin(phi) * u_j) / math.sin(theta)
    return out / np.linalg.norm(out)


@dataclass(frozen=True)
class FunctionClassification:
    is_stable: bool
    is_active: bool
    is_odd: bool
    sign_change_point: float | None = None
    activity_floor: float | None = None


def classify(spec: UpdateSpec) -> FunctionClassification:
    """Closed-form classification per family."""
    fam = spec.family
    odd = fam in (Family.LINEAR, Family.SIGN, Family.SLERP)
    if fam is Family.SIGN:
        return FunctionClassification(False, True, odd, 0.0, spec.eta)
    if fam is Family.ASYM_SIGN:
        return FunctionClassification(False, True, odd, spec.threshold, min(spec.eta_plus, spec.eta_minus))
    return FunctionClassification(True, False, odd, 0.0, None)


def contraction_constant(spec: UpdateSpec, delta: float) -> float:
    """max of 1/(1+|f(x)|) over delta <= |x| <= 1, for a stable spec.

    Bounds the shrinkage 1 - |A'| <= c (1 - |A|) whenever |A| >= delta.
    """
    if not classify(spec).is_stable:
        raise NotStable(f"{spec} is not a stable update function")
    if not 0 < delta <= 1:
        raise InvalidParams("delta must lie in (0, 1]")
    fam = spec.family
    if fam is Family.LINEAR:
        m = spec.eta * delta
    elif fam is Family.ASYM_LINEAR:
        m = min(spec.eta_plus, spec.eta_minus) * delta
    else:
        m = _min_abs_f(spec, delta)
    return 1.0 / (1.0 + m)


def _min_abs_f(spec: UpdateSpec, delta: float, points: int = 10_001) -> float:
    best = math.inf
    for sign in (1.0, -1.0):
        grid = sign * np.linspace(delta, 1.0, points)
        vals = np.abs(evaluate(spec, grid))
        k = int(np.argmin(vals))
        best = min(best, float(vals[k]))
        lo = abs(grid[max(k - 1, 0)])
        hi = abs(grid[min(k + 1, points - 1)])
        if hi > lo:
            res = minimize_scalar(
                lambda x: abs(float(evaluate(spec, sign * x))),
                bounds=(lo, hi),
                method="bounded",
                options={"xatol": 1e-14},
            )
            best = min(best, float(res.fun))
    return best
