"""Inexact and non-stationary relaxed fixed-point engine with trace recording.

One step is ``z+ = z + lam * (T z + eps - z)``.  The recorded residual is
``e = z - T z``; by rearranging the step, ``e = (z - z+) / lam + eps``, and
the engine cross-checks both forms against each other every iteration so an
implementation drift in either path is caught immediately.

In the non-stationary variant the operator depends on a per-step parameter.
The residual is then measured against the declared *limit* operator and the
engine error absorbs the non-stationarity:
``pi = (T_k z - T z) + eps`` and ``e = (z - z+) / lam + pi``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    DivergenceError,
    NumericalError,
    ParameterError,
    StructuralError,
    UnavailableError,
)
from .operators import OperatorSpec
from .spaces import ProductPoint, ProductSpace

_IDENTITY_TOL = 1e-12


# ---------------------------------------------------------------------------
# schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RelaxationSchedule:
    """Relaxation sequence with declared infimum / supremum.

    ``tau_bounds(c)`` returns conservative bounds on ``inf/sup lam (c - lam)``
    over the declared interval (the map is concave in lam, so the infimum sits
    at an endpoint and the supremum at the clamped vertex ``c / 2``).
    """

    kind: str
    lam_min: float
    lam_max: float
    _fn: Optional[Callable[[int], float]] = None
    _value: float = 0.0

    @staticmethod
    def constant(lam: float) -> "RelaxationSchedule":
        lam = float(lam)
        if lam <= 0:
            raise ParameterError("relaxation must be positive")
        return RelaxationSchedule("constant", lam, lam, None, lam)

    @staticmethod
    def from_function(fn, lam_min: float, lam_max: float) -> "RelaxationSchedule":
        if not (0.0 < lam_min <= lam_max):
            raise ParameterError("need 0 < inf lam <= sup lam")
        return RelaxationSchedule("sequence", float(lam_min), float(lam_max), fn)

    def value(self, k: int) -> float:
        if self.kind == "constant":
            return self._value
        return float(self._fn(k))

    def tau_bounds(self, c: float = 1.0):
        lo, hi = self.lam_min, self.lam_max
        tau_lo = min(lo * (c - lo), hi * (c - hi))
        vertex = 0.5 * c
        if lo <= vertex <= hi:
            tau_hi = vertex * (c - vertex)
        else:
            tau_hi = max(lo * (c - lo), hi * (c - hi))
        return tau_lo, tau_hi

    def describe(self) -> str:
        if self.kind == "constant":
            return f"constant({self._value:g})"
        return f"sequence[{self.lam_min:g},{self.lam_max:g}]"


@dataclass(frozen=True)
class ErrorSchedule:
    """Error-magnitude law; directions come from the run's seeded generator.

    Summability flags are derived symbolically: for the power law
    ``c / (k+1)^p`` the weighted series ``(k+1) ||eps_k||`` is summable iff
    ``c = 0`` or ``p > 2``, and ``lam ||eps_k||`` (with lam bounded away from
    zero) iff ``c = 0`` or ``p > 1``.  Explicit lists are finite, hence
    summable.
    """

    kind: str  # zero | power | explicit
    c: float = 0.0
    p: float = 0.0
    values: tuple = ()

    @staticmethod
    def zero() -> "ErrorSchedule":
        return ErrorSchedule("zero")

    @staticmethod
    def power(c: float, p: float) -> "ErrorSchedule":
        if c < 0 or p < 0:
            raise ParameterError("power law needs c >= 0 and p >= 0")
        if c == 0.0:
            return ErrorSchedule("zero")
        return ErrorSchedule("power", float(c), float(p))

    @staticmethod
    def explicit(values) -> "ErrorSchedule":
        vals = tuple(float(v) for v in values)
        if any(v < 0 for v in vals):
            raise ParameterError("magnitudes must be non-negative")
        return ErrorSchedule("explicit", values=vals)

    def magnitude(self, k: int) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "power":
            return self.c / (k + 1.0) ** self.p
        return self.values[k] if k < len(self.values) else 0.0

    def describe(self) -> str:
        if self.kind == "zero":
            return "exact"
        if self.kind == "power":
            return f"{self.c:g}/(k+1)^{self.p:g}"
        return f"explicit[{len(self.values)}]"

    @property
    def is_k_eps_summable(self) -> bool:
        if self.kind == "zero" or self.kind == "explicit":
            return True
        return self.c == 0.0 or self.p > 2.0

    @property
    def is_lam_eps_summable(self) -> bool:
        if self.kind == "zero" or self.kind == "explicit":
            return True
        return self.c == 0.0 or self.p > 1.0


@dataclass(frozen=True)
class GammaSchedule:
    """Per-step operator parameter with a declared limit and symbolic
    summability classification of ``|gamma_k - gamma|``."""

    kind: str
    limit: float
    start: float
    ratio: float = 1.1
    abs_summable: Optional[bool] = None   # sum |gamma_k - gamma| finite
    k_summable: Optional[bool] = None     # sum (k+1) |gamma_k - gamma| finite
    _fn: Optional[Callable[[int], float]] = None

    @staticmethod
    def constant(gamma: float) -> "GammaSchedule":
        g = float(gamma)
        return GammaSchedule("constant", g, g, abs_summable=True, k_summable=True)

    @staticmethod
    def geometric(limit: float, start: float, ratio: float = 1.1) -> "GammaSchedule":
        if ratio <= 1.0:
            raise ParameterError("geometric ratio must exceed 1")
        return GammaSchedule("geometric", float(limit), float(start), float(ratio),
                             abs_summable=True, k_summable=True)

    @staticmethod
    def inverse_square(limit: float, start: float) -> "GammaSchedule":
        return GammaSchedule("inverse-square", float(limit), float(start),
                             abs_summable=True, k_summable=False)

    @staticmethod
    def harmonic(limit: float, start: float) -> "GammaSchedule":
        return GammaSchedule("harmonic", float(limit), float(start),
                             abs_summable=False, k_summable=False)

    @staticmethod
    def from_function(fn, limit: float, lo: float, hi: float) -> "GammaSchedule":
        return GammaSchedule("custom", float(limit), float(lo), _fn=fn)

    def value(self, k: int) -> float:
        gap = self.start - self.limit
        if self.kind == "constant":
            return self.limit
        if self.kind == "geometric":
            # negative power underflows to zero instead of overflowing
            return self.limit + gap * self.ratio ** (-k)
        if self.kind == "inverse-square":
            return self.limit + gap / max(k, 1) ** 2
        if self.kind == "harmonic":
            return self.limit + gap / max(k, 1)
        return float(self._fn(k))

    @property
    def summability_note(self) -> str:
        if self.abs_summable is None:
            return "summability unknown (custom schedule)"
        if not self.abs_summable:
            return "not summable; convergence not guaranteed"
        if not self.k_summable:
            return "summable; complexity-grade summability not met"
        return "summable"


@dataclass(frozen=True)
class StopRule:
    """Run limits.  ``residual_tol = 0`` disables the residual stop so a run
    always covers its full horizon."""

    max_iters: int = 100_000
    residual_tol: float = 1e-10
    divergence_norm: float = 1e12


# ---------------------------------------------------------------------------
# fixed-point set descriptors
# ---------------------------------------------------------------------------

class FixedPointSet:
    """Analytic point, analytic set projector, or oracle-run reference."""

    __slots__ = ("kind", "_point", "_proj", "label")

    def __init__(self, kind, point=None, proj=None, label=""):
        self.kind = kind
        self._point = point
        self._proj = proj
        self.label = label

    @staticmethod
    def from_point(z_star: ProductPoint, label="analytic point") -> "FixedPointSet":
        return FixedPointSet("point", point=z_star, label=label)

    @staticmethod
    def from_projector(proj, label="analytic projector") -> "FixedPointSet":
        return FixedPointSet("projector", proj=proj, label=label)

    @staticmethod
    def from_reference(z_star: ProductPoint, label="reference run") -> "FixedPointSet":
        return FixedPointSet("reference", point=z_star, label=label)

    def nearest(self, z: ProductPoint) -> ProductPoint:
        if self.kind in ("point", "reference"):
            return self._point
        return self._proj(z)

    def distance(self, z: ProductPoint, space: ProductSpace) -> float:
        return space.norm(z - self.nearest(z))


# ---------------------------------------------------------------------------
# trace
# ---------------------------------------------------------------------------

@dataclass
class IterationTrace:
    """Per-iteration record of a run; immutable after completion."""

    space: ProductSpace
    alpha: Optional[float]
    seed: int
    stop_reason: str
    lam: np.ndarray
    eps_norm: np.ndarray
    res_norm: np.ndarray
    erg_norm: np.ndarray
    disp_norm: np.ndarray
    lam_cumsum: np.ndarray
    z0: ProductPoint
    z_final: ProductPoint
    dist: Optional[np.ndarray] = None          # length n_steps + 1
    gamma: Optional[np.ndarray] = None
    pert_norm: Optional[np.ndarray] = None
    z_vecs: Optional[list] = None              # length n_steps + 1
    e_vecs: Optional[list] = None
    eps_vecs: Optional[list] = None            # entries may be None (exact step)
    channel: Optional[list] = None             # per-step dict of channel vectors
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return int(self.lam.size)

    @property
    def final_residual(self) -> float:
        return float(self.res_norm[-1]) if self.res_norm.size else float("nan")

    @property
    def is_exact(self) -> bool:
        return bool(self.eps_norm.size == 0 or float(self.eps_norm.max()) == 0.0)

    @property
    def retained(self) -> bool:
        return self.z_vecs is not None

    def eps_vector(self, k: int) -> ProductPoint:
        if self.eps_vecs is None:
            raise UnavailableError("vector retention was off for this run")
        v = self.eps_vecs[k]
        return self.space.zeros() if v is None else v


# ---------------------------------------------------------------------------
# engine
# ---------------------------------------------------------------------------

def km_step(z: ProductPoint, T: OperatorSpec, lam: float,
            eps: Optional[ProductPoint] = None) -> ProductPoint:
    """One relaxed step ``z + lam (T z + eps - z)``."""
    Tz = T(z)
    if not Tz.is_finite():
        raise NumericalError("non-finite values in operator output")
    upd = Tz + eps - z if eps is not None else Tz - z
    return z + upd * lam


def _validate_admissible(relaxation: RelaxationSchedule, alpha) -> None:
    cap = 1.0 if alpha is None else 1.0 / alpha
    if relaxation.lam_max > cap + 1e-12:
        raise ParameterError(
            f"relaxation supremum {relaxation.lam_max} exceeds admissible cap {cap} "
            f"for the certified averagedness class"
        )


def _plain_evaluator(T: OperatorSpec, errors: Optional[ErrorSchedule]):
    space = T.space

    def evalstep(k, z, rng):
        exact = T(z)
        mag = errors.magnitude(k) if errors is not None else 0.0
        if mag != 0.0:
            eps = space.unit_vector(rng) * mag
            return exact, exact + eps, eps, None
        return exact, exact, None, None

    return evalstep


def _iterate(operator: OperatorSpec, evalstep, z0: ProductPoint,
             relaxation: RelaxationSchedule, stop: StopRule,
             fix: Optional[FixedPointSet], retain: bool, seed: int,
             nonstationary: bool, meta: dict) -> IterationTrace:
    space = operator.space
    if not space.compatible(z0):
        raise StructuralError("starting point does not live in the operator's space")
    _validate_admissible(relaxation, operator.alpha)

    rng = np.random.default_rng(seed)
    lam_l, epsn_l, res_l, erg_l, disp_l, cum_l = [], [], [], [], [], []
    gamma_l, pert_l, dist_l, chan_l = [], [], [], []
    z_vecs = [z0] if retain else None
    e_vecs = [] if retain else None
    eps_vecs = [] if retain else None

    z = z0
    S = space.zeros()
    lam_total = 0.0
    stop_reason = "max_iters"

    for k in range(stop.max_iters):
        lam = relaxation.value(k)
        if fix is not None:
            dist_l.append(fix.distance(z, space))

        exact, tilde, eps_vec, extras = evalstep(k, z, rng)
        if not tilde.is_finite() or (tilde is not exact and not exact.is_finite()):
            raise NumericalError(f"non-finite operator output at step {k}")

        e = z - exact
        res = space.norm(e)
        z_next = z + (tilde - z) * lam

        # cross-check the residual against its update-rule form
        back = (z - z_next) * (1.0 / lam)
        e_rec = back + eps_vec if eps_vec is not None else back
        drift = space.norm(e - e_rec)
        if drift > _IDENTITY_TOL * max(1.0, space.norm(z)):
            raise NumericalError(
                f"residual identity violated at step {k}: drift {drift:.3e}"
            )

        eps_norm = space.norm(eps_vec) if eps_vec is not None else 0.0
        S = S + e * lam
        lam_total += lam

        lam_l.append(lam)
        epsn_l.append(eps_norm)
        res_l.append(res)
        erg_l.append(space.norm(S) / lam_total)
        disp_l.append(space.norm(z - z_next))
        cum_l.append(lam_total)
        if nonstationary:
            gamma_l.append(extras["gamma"])
            pert_l.append(extras["pert_norm"])
        if extras is not None and "channel" in extras:
            chan_l.append(extras["channel"])
        if retain:
            z_vecs.append(z_next)
            e_vecs.append(e)
            eps_vecs.append(eps_vec)

        z = z_next
        if space.norm(z) > stop.divergence_norm:
            raise DivergenceError(
                f"iterate norm exceeded {stop.divergence_norm:.1e} at step {k}"
            )
        if stop.residual_tol > 0.0 and res <= stop.residual_tol:
            stop_reason = "residual_tol"
            break

    if fix is not None:
        dist_l.append(fix.distance(z, space))

    return IterationTrace(
        space=space,
        alpha=operator.alpha,
        seed=seed,
        stop_reason=stop_reason,
        lam=np.asarray(lam_l),
        eps_norm=np.asarray(epsn_l),
        res_norm=np.asarray(res_l),
        erg_norm=np.asarray(erg_l),
        disp_norm=np.asarray(disp_l),
        lam_cumsum=np.asarray(cum_l),
        z0=z0,
        z_final=z,
        dist=np.asarray(dist_l) if fix is not None else None,
        gamma=np.asarray(gamma_l) if nonstationary else None,
        pert_norm=(np.asarray([p if p is not None else np.nan for p in pert_l])
                   if nonstationary else None),
        z_vecs=z_vecs,
        e_vecs=e_vecs,
        eps_vecs=eps_vecs,
        channel=chan_l if chan_l else None,
        meta=dict(meta or {}),
    )


def run_km(T: OperatorSpec, z0: ProductPoint, relaxation: RelaxationSchedule,
           errors: Optional[ErrorSchedule] = None, stop: Optional[StopRule] = None,
           *, channel=None, fix: Optional[FixedPointSet] = None,
           retain: bool = True, seed: int = 0, meta: Optional[dict] = None,
           ) -> IterationTrace:
    """Run the stationary iteration of a single operator.

    ``errors`` injects synthetic error vectors (seeded direction, scheduled
    magnitude).  ``channel`` instead delegates each evaluation to a channel
    model from the splitting builders, which perturbs the evaluation
    internally and reports the induced error; the two are mutually exclusive.
    """
    if stop is None:
        stop = StopRule()
    if channel is not None:
        if errors is not None:
            raise ParameterError("pass either synthetic errors or a channel model")
        operator = channel.operator
        evalstep = channel.evaluate
    else:
        operator = T
        evalstep = _plain_evaluator(T, errors)
    m = dict(meta or {})
    m.setdefault("label", operator.label)
    m["relaxation"] = relaxation.describe()
    m["errors"] = (errors.describe() if errors is not None
                   else "channel" if channel is not None else "exact")
    return _iterate(operator, evalstep, z0, relaxation, stop, fix, retain, seed,
                    nonstationary=False, meta=m)


def run_km_nonstationary(
    family, gamma_schedule: GammaSchedule, z0: ProductPoint,
    relaxation: RelaxationSchedule, errors: Optional[ErrorSchedule] = None,
    stop: Optional[StopRule] = None, *, limit_operator: Optional[OperatorSpec] = None,
    track_limit: bool = True, fix: Optional[FixedPointSet] = None,
    retain: bool = True, seed: int = 0, lipschitz_slack=None,
    meta: Optional[dict] = None,
) -> IterationTrace:
    """Run the non-stationary iteration of a parameterized operator family.

    ``family`` maps a parameter value to an operator; the update applies the
    per-step operator while the recorded residual refers to the limit
    operator (one extra evaluation per step, disabled by ``track_limit=False``
    in which case the native residual is recorded instead).
    ``lipschitz_slack`` is optional user-declared metadata for per-step
    Lipschitz excesses; it is stored, never computed.
    """
    if stop is None:
        stop = StopRule()
    at = family.at if hasattr(family, "at") else family
    limit_op = limit_operator if limit_operator is not None else at(gamma_schedule.limit)
    space = limit_op.space
    # built-in schedules are monotone between start and limit, so probing the
    # endpoints covers the whole per-step averagedness range
    for g_probe in {gamma_schedule.start, gamma_schedule.limit}:
        _validate_admissible(relaxation, at(g_probe).alpha)

    def evalstep(k, z, rng):
        g = gamma_schedule.value(k)
        Tk = at(g)
        native = Tk(z)
        if Tk is limit_op:
            exact, pert = native, 0.0
        elif not track_limit:
            exact, pert = native, None
        else:
            lim = limit_op(z)
            exact = lim
            pert = space.norm(native - lim)
        mag = errors.magnitude(k) if errors is not None else 0.0
        if mag != 0.0:
            tilde = native + space.unit_vector(rng) * mag
        else:
            tilde = native
        eps_total = tilde - exact if tilde is not exact else None
        return exact, tilde, eps_total, {"gamma": g, "pert_norm": pert}

    m = dict(meta or {})
    m.setdefault("label", limit_op.label)
    m["relaxation"] = relaxation.describe()
    m["errors"] = errors.describe() if errors is not None else "exact"
    m["gamma_schedule"] = gamma_schedule.kind
    m["gamma_limit"] = gamma_schedule.limit
    m["schedule_note"] = gamma_schedule.summability_note
    if lipschitz_slack is not None:
        m["lipschitz_slack"] = lipschitz_slack
    return _iterate(limit_op, evalstep, z0, relaxation, stop, fix, retain, seed,
                    nonstationary=True, meta=m)


# ---------------------------------------------------------------------------
# trace post-processing
# ---------------------------------------------------------------------------

def ergodic_residual(trace: IterationTrace) -> np.ndarray:
    """Recompute the relaxation-weighted running-average residual norms from
    retained residual vectors (O(1) memory via a running vector sum)."""
    if trace.e_vecs is None:
        raise UnavailableError("ergodic recomputation needs retained residual vectors")
    space = trace.space
    S = space.zeros()
    total = 0.0
    out = np.empty(trace.n_steps)
    for k in range(trace.n_steps):
        S = S + trace.e_vecs[k] * trace.lam[k]
        total += trace.lam[k]
        out[k] = space.norm(S) / total
    return out


def displacements(trace: IterationTrace) -> np.ndarray:
    """Per-step displacement norms ``||z_k - z_{k+1}||``, with the identity
    ``z_k - z_{k+1} = lam (e_k - eps_k)`` enforced when vectors are retained."""
    if trace.z_vecs is not None:
        space = trace.space
        for k in range(trace.n_steps):
            v = trace.z_vecs[k] - trace.z_vecs[k + 1]
            ref = (trace.e_vecs[k] - trace.eps_vector(k)) * trace.lam[k]
            if space.norm(v - ref) > 1e-12 * max(1.0, space.norm(trace.z_vecs[k])):
                raise NumericalError(f"displacement identity violated at step {k}")
    return trace.disp_norm.copy()
