"""Splitting-method assembly: product-space forward-backward (GFB),
Douglas-Rachford (DRS) and a primal-dual scheme, each built as a certified
averaged fixed-point operator with termination certificates.

Certificate paths re-evaluate resolvents *without* injected errors: the
optimality inclusions they return are properties of exact resolvent outputs
at the current points, while injected channel errors perturb only the
iterate path.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.linalg as sla

from .bounds import BoundConstants, pointwise_bound
from .errors import NumericalError, ParameterError, StructuralError, UnavailableError
from .km import ErrorSchedule, GammaSchedule, IterationTrace
from .operators import (
    OperatorSpec,
    compose2,
    moreau_envelope_gradient,
    project_box,
    project_subspace,
    prox_l1,
)
from .spaces import ProductPoint, ProductSpace


# ---------------------------------------------------------------------------
# maximal monotone building blocks (resolvents + recognized memberships)
# ---------------------------------------------------------------------------

class MonotoneBlock:
    """A maximal monotone operator given through its resolvent family
    ``v -> (Id + c A)^{-1} v``.  Recognized block types can additionally
    verify ``g in A(u)`` exactly; others report membership as structural
    only (guaranteed by construction, not re-verified)."""

    kind = "abstract"

    def resolvent(self, v: np.ndarray, c: float) -> np.ndarray:
        raise NotImplementedError

    def member_residual(self, u: np.ndarray, g: np.ndarray) -> Optional[float]:
        return None  # structural only


class L1Block(MonotoneBlock):
    """Scaled-l1 subdifferential; resolvent is the soft threshold."""

    kind = "l1"

    def __init__(self, mu: float):
        if mu <= 0:
            raise ParameterError("l1 weight must be positive")
        self.mu = float(mu)

    def resolvent(self, v, c):
        return prox_l1(v, c * self.mu)

    def member_residual(self, u, g):
        u = np.asarray(u, dtype=float)
        g = np.asarray(g, dtype=float)
        on = u != 0.0
        res = np.maximum(np.abs(g) - self.mu, 0.0)
        res[on] = np.abs(g[on] - self.mu * np.sign(u[on]))
        return float(res.max()) if res.size else 0.0


class BoxBlock(MonotoneBlock):
    """Normal cone of a box; resolvent is the clip projection."""

    kind = "box"

    def __init__(self, lo, hi):
        lo = np.asarray(lo, dtype=float)
        hi = np.asarray(hi, dtype=float)
        if np.any(lo > hi):
            raise ParameterError("box bounds must satisfy lo <= hi")
        self.lo, self.hi = lo, hi

    def resolvent(self, v, c):
        return project_box(v, self.lo, self.hi)

    def member_residual(self, u, g):
        u = np.asarray(u, dtype=float)
        g = np.asarray(g, dtype=float)
        lo = np.broadcast_to(self.lo, u.shape)
        hi = np.broadcast_to(self.hi, u.shape)
        btol = 1e-12 * (1.0 + float(np.max(hi - lo, initial=0.0)))
        outside = np.maximum(lo - u, 0.0) + np.maximum(u - hi, 0.0)
        res = np.abs(g)                                   # interior: g = 0
        at_lo = u <= lo + btol
        at_hi = u >= hi - btol
        res[at_lo] = np.maximum(g[at_lo], 0.0)            # lower face: g <= 0
        res[at_hi] = np.maximum(-g[at_hi], 0.0)           # upper face: g >= 0
        res[at_lo & at_hi] = 0.0                          # degenerate face
        return float(np.maximum(res, outside).max())


class SubspaceBlock(MonotoneBlock):
    """Normal cone of a linear subspace given by an orthonormal basis;
    resolvent is the orthogonal projection."""

    kind = "subspace"

    def __init__(self, U):
        U = np.asarray(U, dtype=float)
        if U.ndim == 1:
            U = U[:, None]
        if np.max(np.abs(U.T @ U - np.eye(U.shape[1]))) > 1e-10:
            raise ParameterError("basis columns are not orthonormal")
        self.U = U

    def resolvent(self, v, c):
        return project_subspace(v, self.U)

    def member_residual(self, u, g):
        u = np.asarray(u, dtype=float)
        g = np.asarray(g, dtype=float)
        feas = np.linalg.norm(u - self.U @ (self.U.T @ u))
        perp = np.linalg.norm(self.U @ (self.U.T @ g))
        return float(max(feas, perp))


class LinearBlock(MonotoneBlock):
    """Affine monotone map ``u -> M u - c0`` (symmetric part PSD); resolvent
    solves a cached dense factorization per parameter value."""

    kind = "linear"

    def __init__(self, M, c0=None):
        M = np.asarray(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise StructuralError("M must be square")
        if np.linalg.eigvalsh(0.5 * (M + M.T))[0] < -1e-12:
            raise ParameterError("M is not monotone")
        self.M = M
        self.c0 = np.zeros(M.shape[0]) if c0 is None else np.asarray(c0, dtype=float)
        self._lu = {}

    def resolvent(self, v, c):
        key = float(c)
        if key not in self._lu:
            self._lu[key] = sla.lu_factor(np.eye(self.M.shape[0]) + c * self.M)
        return sla.lu_solve(self._lu[key], np.asarray(v, dtype=float) + c * self.c0)

    def member_residual(self, u, g):
        return float(np.linalg.norm(g - (self.M @ u - self.c0)))


class ZeroBlock(MonotoneBlock):
    kind = "zero"

    def resolvent(self, v, c):
        return np.asarray(v, dtype=float)

    def member_residual(self, u, g):
        return float(np.linalg.norm(g))


@dataclass(frozen=True)
class CocoerciveMap:
    """Single-valued cocoercive map with its modulus."""

    fn: callable
    beta: float
    label: str

    @staticmethod
    def quadratic(Q, q) -> "CocoerciveMap":
        Q = np.asarray(Q, dtype=float)
        q = np.asarray(q, dtype=float)
        if np.max(np.abs(Q - Q.T)) > 1e-12:
            raise StructuralError("Q must be symmetric")
        eigs = np.linalg.eigvalsh(Q)
        if eigs[0] < -1e-12 or eigs[-1] <= 0:
            raise ParameterError("Q must be PSD and non-zero")
        return CocoerciveMap(lambda x: Q @ x - q, 1.0 / float(eigs[-1]), "quadratic")

    @staticmethod
    def envelope_l1(mu: float) -> "CocoerciveMap":
        return CocoerciveMap(lambda x: moreau_envelope_gradient(x, mu), 1.0,
                             f"env_l1({mu:g})")


# ---------------------------------------------------------------------------
# generalized forward-backward on the weighted product space
# ---------------------------------------------------------------------------

@dataclass
class GfbSpec:
    """Blocks, smooth part and parameters of the product-space splitting.

    The smooth part may be None (pure reflection scheme); the step size must
    satisfy ``0 < gamma < 2 beta`` whenever a smooth part is present.
    """

    blocks: List[MonotoneBlock]
    weights: np.ndarray
    gamma: float
    dim: int
    smooth: Optional[CocoerciveMap] = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        n = len(self.blocks)
        if n < 1 or self.weights.shape != (n,) or np.any(self.weights <= 0):
            raise ParameterError("need one positive weight per block")
        if abs(float(self.weights.sum()) - 1.0) > 1e-12:
            raise ParameterError("block weights must sum to 1")
        if self.gamma <= 0:
            raise ParameterError("step size must be positive")
        if self.smooth is not None and self.gamma >= 2.0 * self.smooth.beta:
            raise ParameterError(
                f"step size {self.gamma} outside (0, {2.0 * self.smooth.beta})"
            )

    @property
    def n(self) -> int:
        return len(self.blocks)

    @property
    def lam_cap(self) -> float:
        """Admissible relaxation supremum ``1 / alpha``."""
        if self.smooth is None:
            return 2.0
        beta = self.smooth.beta
        return (4.0 * beta - self.gamma) / (2.0 * beta)


class GfbBuilt:
    """Assembled operator, readout and channel factory."""

    def __init__(self, spec: GfbSpec):
        self.spec = spec
        self.space = ProductSpace((spec.dim,) * spec.n, spec.weights)
        gamma, w = spec.gamma, spec.weights

        def consensus(z: ProductPoint) -> np.ndarray:
            x = w[0] * z.blocks[0]
            for wi, b in zip(w[1:], z.blocks[1:]):
                x = x + wi * b
            return x

        def smooth_at(x: np.ndarray) -> np.ndarray:
            return spec.smooth.fn(x) if spec.smooth is not None else np.zeros_like(x)

        def resolve_all(args) -> list:
            return [blk.resolvent(a, gamma / wi)
                    for blk, a, wi in zip(spec.blocks, args, w)]

        self.consensus = consensus
        self.smooth_at = smooth_at
        self.resolve_all = resolve_all

        def backward_half(zz: ProductPoint) -> ProductPoint:
            # (1/2)(R_A R_S + Id): reflected resolvents about the diagonal
            x = consensus(zz)
            refl = [2.0 * x - b for b in zz.blocks]
            res = resolve_all(refl)
            return self.space.point(
                tuple(0.5 * (2.0 * u - r + b)
                      for u, r, b in zip(res, refl, zz.blocks))
            )

        t1 = OperatorSpec(backward_half, 0.5, "gfb_backward", self.space)
        if spec.smooth is None:
            self.operator = t1
        else:
            beta = spec.smooth.beta

            def forward(zz: ProductPoint) -> ProductPoint:
                g = smooth_at(consensus(zz))
                return self.space.point(tuple(b - gamma * g for b in zz.blocks))

            t2 = OperatorSpec(forward, gamma / (2.0 * beta), "gfb_forward", self.space)
            self.operator = compose2(t1, t2)

    @property
    def alpha(self) -> float:
        return self.operator.alpha

    def step_parts(self, z: ProductPoint):
        """Exact per-step internals: consensus, smooth value, resolvent
        arguments and resolvent outputs."""
        x = self.consensus(z)
        gx = self.smooth_at(x)
        args = [2.0 * x - b - self.spec.gamma * gx for b in z.blocks]
        u = self.resolve_all(args)
        return x, gx, args, u

    def readout(self, z: ProductPoint):
        """Consensus point and exact per-block resolvent outputs."""
        x, _, _, u = self.step_parts(z)
        return x, u

    def channel(self, pre_law: ErrorSchedule, post_law: ErrorSchedule
                ) -> "GfbChannelModel":
        return GfbChannelModel(self, pre_law, post_law)


class GfbChannelModel:
    """Injects a pre-resolvent error (shared across blocks, lifted onto the
    diagonal) and per-block post-resolvent errors, reporting the induced
    iteration error."""

    def __init__(self, built: GfbBuilt, pre_law: ErrorSchedule,
                 post_law: ErrorSchedule):
        self.built = built
        self.pre_law = pre_law
        self.post_law = post_law

    @property
    def operator(self) -> OperatorSpec:
        return self.built.operator

    def evaluate(self, k, z, rng):
        built = self.built
        x, _, args, u = built.step_parts(z)
        exact = built.space.point(tuple(b + ui - x for b, ui in zip(z.blocks, u)))

        dim = built.spec.dim
        mag_b = self.pre_law.magnitude(k)
        b_vec = _unit(rng, dim) * mag_b if mag_b != 0.0 else None
        a_vecs = []
        for _ in range(built.spec.n):
            mag_a = self.post_law.magnitude(k)
            a_vecs.append(_unit(rng, dim) * mag_a if mag_a != 0.0 else None)

        if b_vec is None and all(a is None for a in a_vecs):
            return exact, exact, None, {"channel": {"b": None, "a": a_vecs}}

        tilde_blocks = []
        for i, (blk, arg, bz) in enumerate(zip(built.spec.blocks, args, z.blocks)):
            arg_p = arg + b_vec if b_vec is not None else arg
            ui = blk.resolvent(arg_p, built.spec.gamma / built.spec.weights[i])
            blkout = bz + ui - x
            if a_vecs[i] is not None:
                blkout = blkout + a_vecs[i]
            tilde_blocks.append(blkout)
        tilde = built.space.point(tuple(tilde_blocks))
        eps = tilde - exact
        extras = {"channel": {"b": b_vec, "a": a_vecs}}
        return exact, tilde, eps, extras


def _unit(rng: np.random.Generator, dim: int) -> np.ndarray:
    while True:
        g = rng.standard_normal(dim)
        n = np.linalg.norm(g)
        if n > 1e-12:
            return g / n


def build_gfb(spec: GfbSpec) -> GfbBuilt:
    """Assemble the product-space splitting operator; with a smooth part the
    certificate is ``2 beta / (4 beta - gamma)``, without one it is 1/2."""
    built = GfbBuilt(spec)
    if spec.smooth is not None:
        beta = spec.smooth.beta
        expect = 2.0 * beta / (4.0 * beta - spec.gamma)
        if abs(built.alpha - expect) > 1e-12:
            raise NumericalError("composition certificate drifted from closed form")
    return built


@dataclass(frozen=True)
class GfbCertStep:
    g: np.ndarray
    criterion: float
    membership: Optional[float]
    structural_only: tuple


def gfb_certificate(built: GfbBuilt, z: ProductPoint) -> GfbCertStep:
    """Optimality certificate at the current iterate: an explicit element of
    the summed block operators at the resolvent outputs, its per-block
    membership residual (recognized types), and the stationarity criterion
    ``||g + B(sum_i w_i u_i)||``."""
    spec = built.spec
    x, gx, args, u = built.step_parts(z)
    ubar = spec.weights[0] * u[0]
    for wi, ui in zip(spec.weights[1:], u[1:]):
        ubar = ubar + wi * ui
    g = (x - ubar) / spec.gamma - gx
    crit = float(np.linalg.norm(g + built.smooth_at(ubar)))

    residuals = []
    structural = []
    for i, blk in enumerate(spec.blocks):
        vec = (spec.weights[i] / spec.gamma) * (args[i] - u[i])
        r = blk.member_residual(u[i], vec)
        if r is None:
            structural.append(blk.kind)
        else:
            residuals.append(r)
    membership = max(residuals) if residuals else None
    return GfbCertStep(g, crit, membership, tuple(structural))


@dataclass
class CertificateSeries:
    values: np.ndarray
    bounds: np.ndarray
    membership_max: Optional[float]
    structural_only: tuple = ()
    surrogate: bool = False


def gfb_certificate_series(built: GfbBuilt, trace: IterationTrace,
                           constants: BoundConstants) -> CertificateSeries:
    """Pointwise criterion against ``(1/gamma) * pointwise bound`` at every
    recorded step."""
    if trace.z_vecs is None:
        raise UnavailableError("certificate series needs retained iterates")
    K = trace.n_steps
    vals = np.empty(K)
    bnds = np.empty(K)
    mem = -np.inf
    structural: tuple = ()
    for k in range(K):
        step = gfb_certificate(built, trace.z_vecs[k])
        vals[k] = step.criterion
        bnds[k] = pointwise_bound(k, constants) / built.spec.gamma
        if step.membership is not None:
            mem = max(mem, step.membership)
        structural = step.structural_only
    return CertificateSeries(vals, bnds, None if mem == -np.inf else mem, structural)


def gfb_ergodic_certificate(built: GfbBuilt, trace: IterationTrace,
                            constants: BoundConstants) -> CertificateSeries:
    """Running-average criterion against ``2 (d0 + C2) / (gamma lam_min (k+1))``."""
    if trace.z_vecs is None:
        raise UnavailableError("ergodic certificate needs retained iterates")
    spec = built.spec
    K = trace.n_steps
    lam_min = float(trace.lam.min())
    x_sum = np.zeros(spec.dim)
    u_sums = [np.zeros(spec.dim) for _ in range(spec.n)]
    vals = np.empty(K)
    bnds = np.empty(K)
    for k in range(K):
        x, _, _, u = built.step_parts(trace.z_vecs[k])
        x_sum += x
        for i in range(spec.n):
            u_sums[i] += u[i]
        m = k + 1.0
        xbar = x_sum / m
        ubar = spec.weights[0] * (u_sums[0] / m)
        for wi, us in zip(spec.weights[1:], u_sums[1:]):
            ubar = ubar + wi * (us / m)
        gbar = (xbar - ubar) / spec.gamma - built.smooth_at(xbar)
        vals[k] = float(np.linalg.norm(gbar + built.smooth_at(ubar)))
        bnds[k] = 2.0 * (constants.d0 + constants.C2) / (spec.gamma * lam_min * m)
    return CertificateSeries(vals, bnds, None)


# ---------------------------------------------------------------------------
# Douglas-Rachford
# ---------------------------------------------------------------------------

@dataclass
class DrsSpec:
    """Two resolvents at a common positive parameter on a single block."""

    block1: MonotoneBlock
    block2: MonotoneBlock
    gamma: float
    dim: int

    def __post_init__(self):
        if self.gamma <= 0:
            raise ParameterError("step size must be positive")


class DrsBuilt:
    def __init__(self, spec: DrsSpec):
        self.spec = spec
        self.space = ProductSpace.single(spec.dim)
        g = spec.gamma
        self.j1 = lambda v: spec.block1.resolvent(v, g)
        self.j2 = lambda v: spec.block2.resolvent(v, g)

        def fn(z: ProductPoint) -> ProductPoint:
            zv = z.blocks[0]
            w = 2.0 * self.j2(zv) - zv
            return self.space.vector(0.5 * (2.0 * self.j1(w) - w + zv))

        self.operator = OperatorSpec(fn, 0.5, "drs", self.space)

    @property
    def alpha(self) -> float:
        return 0.5

    def readout(self, z: ProductPoint, z_next: ProductPoint,
                eps2: Optional[np.ndarray] = None):
        """Step quantities: shadow point x, first and second resolvent
        outputs u and v (the shadow point carries the injected
        post-resolvent error when one was active)."""
        zv = z.blocks[0]
        x = self.j2(zv)
        if eps2 is not None:
            x = x + eps2
        u = self.j1(2.0 * x - zv)
        v = self.j2(z_next.blocks[0])
        return x, u, v

    def channel(self, law1: ErrorSchedule, law2: ErrorSchedule) -> "DrsChannelModel":
        return DrsChannelModel(self, law1, law2)


class DrsChannelModel:
    """Relaxation-stage error (added to the averaged update) and shadow-point
    error (perturbing the second resolvent output)."""

    def __init__(self, built: DrsBuilt, law1: ErrorSchedule, law2: ErrorSchedule):
        self.built = built
        self.law1 = law1
        self.law2 = law2

    @property
    def operator(self) -> OperatorSpec:
        return self.built.operator

    def evaluate(self, k, z, rng):
        built = self.built
        zv = z.blocks[0]
        w = 2.0 * built.j2(zv) - zv
        exact = built.space.vector(0.5 * (2.0 * built.j1(w) - w + zv))

        dim = built.spec.dim
        m1 = self.law1.magnitude(k)
        e1 = _unit(rng, dim) * m1 if m1 != 0.0 else None
        m2 = self.law2.magnitude(k)
        e2 = _unit(rng, dim) * m2 if m2 != 0.0 else None
        if e1 is None and e2 is None:
            return exact, exact, None, {"channel": {"eps1": None, "eps2": None}}

        wp = w + 2.0 * e2 if e2 is not None else w
        tv = 0.5 * (2.0 * built.j1(wp) - wp + zv)
        if e1 is not None:
            tv = tv + e1
        tilde = built.space.vector(tv)
        eps = tilde - exact
        return exact, tilde, eps, {"channel": {"eps1": e1, "eps2": e2}}


def build_drs(spec: DrsSpec) -> DrsBuilt:
    """Assemble the reflected-resolvent average, firmly non-expansive by
    construction."""
    return DrsBuilt(spec)


def drs_certificate_series(built: DrsBuilt, trace: IterationTrace,
                           constants: BoundConstants) -> CertificateSeries:
    """Explicit element of the summed operators at (u, v) with the bound
    ``((1 + lam)/gamma) * pointwise bound + c_k`` where the channel errors
    enter ``c_k = (1/gamma)((2 + lam)||eps2|| + ||eps1||)``."""
    if trace.z_vecs is None:
        raise UnavailableError("certificate series needs retained iterates")
    spec = built.spec
    K = trace.n_steps
    vals = np.empty(K)
    bnds = np.empty(K)
    mem = -np.inf
    for k in range(K):
        z, zn = trace.z_vecs[k], trace.z_vecs[k + 1]
        e1 = e2 = None
        if trace.channel is not None:
            e1 = trace.channel[k].get("eps1")
            e2 = trace.channel[k].get("eps2")
        x, u, v = built.readout(z, zn, eps2=e2)
        zv, znv = z.blocks[0], zn.blocks[0]
        g = ((2.0 * x - zv - u) + (znv - v)) / spec.gamma
        vals[k] = float(np.linalg.norm(g))
        lam = float(trace.lam[k])
        ck = (1.0 / spec.gamma) * (
            (2.0 + lam) * (np.linalg.norm(e2) if e2 is not None else 0.0)
            + (np.linalg.norm(e1) if e1 is not None else 0.0)
        )
        bnds[k] = (1.0 + lam) / spec.gamma * pointwise_bound(k, constants) + ck
        r1 = spec.block1.member_residual(u, (2.0 * x - zv - u) / spec.gamma)
        r2 = spec.block2.member_residual(v, (znv - v) / spec.gamma)
        for r in (r1, r2):
            if r is not None:
                mem = max(mem, r)
    return CertificateSeries(vals, bnds, None if mem == -np.inf else mem)


def drs_certificate(built: DrsBuilt, trace: IterationTrace,
                    constants: BoundConstants, k: int):
    """Single-step certificate: returns (g, criterion, bound)."""
    if trace.z_vecs is None:
        raise UnavailableError("certificate needs retained iterates")
    z, zn = trace.z_vecs[k], trace.z_vecs[k + 1]
    e1 = e2 = None
    if trace.channel is not None:
        e1 = trace.channel[k].get("eps1")
        e2 = trace.channel[k].get("eps2")
    x, u, v = built.readout(z, zn, eps2=e2)
    gamma = built.spec.gamma
    g = ((2.0 * x - z.blocks[0] - u) + (zn.blocks[0] - v)) / gamma
    lam = float(trace.lam[k])
    ck = (1.0 / gamma) * (
        (2.0 + lam) * (np.linalg.norm(e2) if e2 is not None else 0.0)
        + (np.linalg.norm(e1) if e1 is not None else 0.0)
    )
    bound = (1.0 + lam) / gamma * pointwise_bound(k, constants) + ck
    return g, float(np.linalg.norm(g)), float(bound)


# ---------------------------------------------------------------------------
# primal-dual splitting on the direct sum H (+) G
# ---------------------------------------------------------------------------

@dataclass
class PdsDualTerm:
    """One dual coordinate: monotone block, linear coupling, shift, weight,
    dual step and optional single-valued strongly-monotone inverse part."""

    block: MonotoneBlock
    L: np.ndarray
    sigma: float
    omega: float
    r: Optional[np.ndarray] = None
    d_inv: Optional[CocoerciveMap] = None

    def __post_init__(self):
        self.L = np.asarray(self.L, dtype=float)
        if self.L.ndim != 2:
            raise StructuralError("coupling must be a matrix")
        if self.sigma <= 0 or self.omega <= 0:
            raise ParameterError("dual step and weight must be positive")
        if self.r is None:
            self.r = np.zeros(self.L.shape[0])
        else:
            self.r = np.asarray(self.r, dtype=float)


@dataclass
class PdsSpec:
    primal_block: MonotoneBlock
    tau: float
    dim_primal: int
    duals: List[PdsDualTerm]
    smooth: Optional[CocoerciveMap] = None

    def __post_init__(self):
        if self.tau <= 0:
            raise ParameterError("primal step must be positive")
        if not self.duals:
            raise ParameterError("need at least one dual term")
        wsum = sum(t.omega for t in self.duals)
        if abs(wsum - 1.0) > 1e-12:
            raise ParameterError("dual weights must sum to 1")


def matrix_norm(L, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """Largest singular value via power iteration on the Gram matrix."""
    L = np.asarray(L, dtype=float)
    G = L.T @ L
    rng = np.random.default_rng(0)
    v = rng.standard_normal(G.shape[0])
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(max_iter):
        w = G @ v
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        v_new = w / nw
        lam_new = float(v_new @ (G @ v_new))
        if abs(lam_new - lam) <= tol * max(lam_new, 1e-30):
            return float(np.sqrt(lam_new))
        v, lam = v_new, lam_new
    return float(np.sqrt(lam))


class PdsBuilt:
    """Assembled primal-dual fixed-point operator on the direct sum space.

    The space's metric is the strongly positive self-adjoint preconditioner
    of the scheme, so the operator is genuinely averaged in the space norm
    and the generic complexity bounds apply to the recorded quantities
    verbatim; the plain direct-sum norm stays available for the surrogate
    termination criterion, which carries the stated ``2 delta / eta`` factor.
    """

    def __init__(self, spec: PdsSpec):
        self.spec = spec
        dims = (spec.dim_primal,) + tuple(t.L.shape[0] for t in spec.duals)
        weights = np.array([1.0] + [t.omega for t in spec.duals])
        for t in spec.duals:
            if t.L.shape[1] != spec.dim_primal:
                raise StructuralError("coupling matrix does not match primal dimension")

        self.L_norms = [matrix_norm(t.L) for t in spec.duals]
        inv_steps = [1.0 / spec.tau] + [1.0 / t.sigma for t in spec.duals]
        radicand = spec.tau * sum(
            t.sigma * t.omega * ln ** 2 for t, ln in zip(spec.duals, self.L_norms)
        )
        if radicand >= 1.0:
            raise ParameterError(
                f"step sizes too large: tau * sum sigma_i w_i ||L_i||^2 = {radicand:.6g} >= 1"
            )
        self.eta = min(inv_steps) * (1.0 - np.sqrt(radicand))
        self.delta = max(inv_steps)
        moduli = []
        if spec.smooth is not None:
            moduli.append(spec.smooth.beta)
        for t in spec.duals:
            if t.d_inv is not None:
                moduli.append(t.d_inv.beta)
        self.beta = min(moduli) if moduli else np.inf

        if np.isinf(self.beta):
            self.alpha = 0.5
        else:
            if 2.0 * self.eta * self.beta <= 1.0:
                raise ParameterError(
                    f"preconditioner too weak: 2 eta beta = "
                    f"{2.0 * self.eta * self.beta:.6g} <= 1 "
                    f"(eta={self.eta:.6g}, beta={self.beta:.6g}, tau={spec.tau}, "
                    f"sigmas={[t.sigma for t in spec.duals]})"
                )
            hb = self.eta * self.beta
            self.alpha = 2.0 * hb / (4.0 * hb - 1.0)

        def metric(z: ProductPoint) -> ProductPoint:
            x = z.blocks[0]
            vs = z.blocks[1:]
            out_x = x / spec.tau
            for t, v in zip(spec.duals, vs):
                out_x = out_x - t.omega * (t.L.T @ v)
            outs = [out_x]
            for t, v in zip(spec.duals, vs):
                outs.append(v / t.sigma - t.L @ x)
            return ProductPoint._raw(tuple(outs), z.weights)

        self.space = ProductSpace(dims, weights, metric_op=metric)
        self.metric_apply = metric

        self.operator = OperatorSpec(self.block_step, self.alpha, "pds", self.space)
        self._assert_abstract_equivalence()

    # -- evaluation paths --------------------------------------------------

    def _dual_resolvent(self, term: PdsDualTerm, w: np.ndarray) -> np.ndarray:
        # resolvent of the inverse operator via the inversion identity
        s = term.sigma
        return w - s * term.block.resolvent(w / s, 1.0 / s)

    def _smooth(self, x: np.ndarray) -> np.ndarray:
        return self.spec.smooth.fn(x) if self.spec.smooth is not None else np.zeros_like(x)

    def block_step(self, z: ProductPoint, errs=None) -> ProductPoint:
        """One exact evaluation of the fixed-point operator via the block
        recursion: primal resolvent, reflection, dual resolvents."""
        spec = self.spec
        x = z.blocks[0]
        vs = z.blocks[1:]
        e1, e2, e3, e4 = errs if errs is not None else (None, None, None, None)
        s = np.zeros_like(x)
        for t, v in zip(spec.duals, vs):
            s = s + t.omega * (t.L.T @ v)
        fwd = s + self._smooth(x)
        if e1 is not None:
            fwd = fwd + e1
        p = spec.primal_block.resolvent(x - spec.tau * fwd, spec.tau)
        if e2 is not None:
            p = p + e2
        y = 2.0 * p - x
        q = []
        for i, (t, v) in enumerate(zip(spec.duals, vs)):
            inner = t.L @ y - t.r
            if t.d_inv is not None:
                inner = inner - t.d_inv.fn(v)
            if e3 is not None and e3[i] is not None:
                inner = inner - e3[i]
            qi = self._dual_resolvent(t, v + t.sigma * inner)
            if e4 is not None and e4[i] is not None:
                qi = qi + e4[i]
            q.append(qi)
        return self.space.point((p, *q))

    def abstract_step(self, z: ProductPoint) -> ProductPoint:
        """Same map through the preconditioned resolvent form: solve the
        metric system for the forward term, then apply the coupled resolvent."""
        spec = self.spec
        x = z.blocks[0]
        vs = list(z.blocks[1:])
        ez = [self._smooth(x)]
        for t, v in zip(spec.duals, vs):
            ez.append(t.d_inv.fn(v) if t.d_inv is not None else np.zeros_like(v))
        u = self._solve_metric(ez)
        wx = x - u[0]
        wv = [v - uv for v, uv in zip(vs, u[1:])]
        sw = np.zeros_like(wx)
        for t, w in zip(spec.duals, wv):
            sw = sw + t.omega * (t.L.T @ w)
        p = spec.primal_block.resolvent(wx - spec.tau * sw, spec.tau)
        y = 2.0 * p - wx
        q = [self._dual_resolvent(t, w + t.sigma * (t.L @ y - t.r))
             for t, w in zip(spec.duals, wv)]
        return self.space.point((p, *q))

    def _solve_metric(self, rhs_blocks) -> list:
        spec = self.spec
        if not hasattr(self, "_metric_lu"):
            dims = [spec.dim_primal] + [t.L.shape[0] for t in spec.duals]
            D = sum(dims)
            M = np.zeros((D, D))
            off = np.cumsum([0] + dims)
            M[: dims[0], : dims[0]] = np.eye(dims[0]) / spec.tau
            for i, t in enumerate(spec.duals):
                a, b = off[i + 1], off[i + 2]
                M[: dims[0], a:b] = -t.omega * t.L.T
                M[a:b, : dims[0]] = -t.L
                M[a:b, a:b] = np.eye(dims[i + 1]) / t.sigma
            self._metric_lu = sla.lu_factor(M)
            self._metric_dims = dims
            self._metric_off = off
        vec = np.concatenate(rhs_blocks)
        sol = sla.lu_solve(self._metric_lu, vec)
        off = self._metric_off
        return [sol[off[i]:off[i + 1]] for i in range(len(self._metric_dims))]

    def _assert_abstract_equivalence(self, samples: int = 3, tol: float = 1e-12):
        rng = np.random.default_rng(1234)
        for _ in range(samples):
            z = self.space.gaussian(rng)
            a = self.block_step(z)
            b = self.abstract_step(z)
            scale = max(1.0, self.space.base_norm(z))
            if self.space.base_norm(a - b) > tol * scale:
                raise NumericalError(
                    "block recursion and preconditioned resolvent form disagree"
                )

    def primal(self, z: ProductPoint) -> np.ndarray:
        return z.blocks[0]

    def channel(self, laws) -> "PdsChannelModel":
        return PdsChannelModel(self, laws)


class PdsChannelModel:
    """Four error channels: forward-term, post-primal-resolvent, dual
    forward-term and post-dual-resolvent (the latter two per dual block)."""

    def __init__(self, built: PdsBuilt, laws):
        if len(laws) != 4:
            raise ParameterError("need exactly four channel laws")
        self.built = built
        self.laws = tuple(laws)

    @property
    def operator(self) -> OperatorSpec:
        return self.built.operator

    def evaluate(self, k, z, rng):
        built = self.built
        spec = built.spec
        exact = built.block_step(z)
        dH = spec.dim_primal
        l1, l2, l3, l4 = (law.magnitude(k) for law in self.laws)
        e1 = _unit(rng, dH) * l1 if l1 != 0.0 else None
        e2 = _unit(rng, dH) * l2 if l2 != 0.0 else None
        e3 = [(_unit(rng, t.L.shape[0]) * l3 if l3 != 0.0 else None)
              for t in spec.duals]
        e4 = [(_unit(rng, t.L.shape[0]) * l4 if l4 != 0.0 else None)
              for t in spec.duals]
        if e1 is None and e2 is None and all(v is None for v in e3 + e4):
            return exact, exact, None, {"channel": {}}
        tilde = built.block_step(z, errs=(e1, e2, e3, e4))
        eps = tilde - exact
        extras = {"channel": {"eps1": e1, "eps2": e2, "eps3": e3, "eps4": e4}}
        return exact, tilde, eps, extras


def build_pds(spec: PdsSpec) -> PdsBuilt:
    """Assemble the primal-dual operator; raises a parameter error with the
    computed preconditioner constants when the step sizes are inadmissible."""
    return PdsBuilt(spec)


def pds_certificate_series(built: PdsBuilt, trace: IterationTrace,
                           fix_point: ProductPoint) -> CertificateSeries:
    """Surrogate termination criterion: the plain direct-sum residual norm
    against ``(2 delta / eta) sqrt((d0^2 + C1)/(tau_min (k+1)))`` with the
    constants measured in the plain norm.  Flagged surrogate: the certified
    quantity is the residual itself, not an explicit element of the operator
    sum."""
    if trace.z_vecs is None or trace.e_vecs is None:
        raise UnavailableError("certificate needs retained vectors")
    space = built.space
    K = trace.n_steps
    z_star = fix_point

    d0 = space.base_norm(trace.z_vecs[0] - z_star)
    c = 1.0 / built.alpha
    tau = trace.lam * (c - trace.lam)
    tau_min = float(tau.min())
    tau_max = float(tau.max())
    eps_base = np.array([
        space.base_norm(trace.eps_vector(k)) if trace.eps_vecs is not None else 0.0
        for k in range(K)
    ])
    sup_relaxed = 0.0
    nu2 = 0.0
    for k in range(K):
        relaxed = trace.z_vecs[k] - trace.e_vecs[k] * trace.lam[k]
        sup_relaxed = max(sup_relaxed, space.base_norm(relaxed - z_star))
        if k + 1 < K:
            nu2 = max(nu2, space.base_norm(trace.e_vecs[k] - trace.e_vecs[k + 1]))
    nu1 = 2.0 * sup_relaxed + float((trace.lam * eps_base).max()) if K else 0.0
    nu2 *= 2.0
    S1 = float((trace.lam * eps_base).sum())
    S2 = float((np.arange(1, K + 1) * eps_base).sum())
    C1 = nu1 * S1 + nu2 * tau_max * S2

    factor = 2.0 * built.delta / built.eta
    vals = np.array([space.base_norm(trace.e_vecs[k]) for k in range(K)])
    ks = np.arange(K, dtype=float)
    bnds = factor * np.sqrt((d0 ** 2 + C1) / (tau_min * (ks + 1.0)))
    return CertificateSeries(vals, bnds, None, surrogate=True)


def pds_candidate(trace: IterationTrace, k: int) -> ProductPoint:
    """Candidate solution ``w = (z_{k+1} - (1 - lam) z_k)/lam - eps_k``
    associated with step k."""
    if trace.z_vecs is None:
        raise UnavailableError("candidate needs retained iterates")
    lam = float(trace.lam[k])
    w = (trace.z_vecs[k + 1] - trace.z_vecs[k] * (1.0 - lam)) * (1.0 / lam)
    return w - trace.eps_vector(k)


# ---------------------------------------------------------------------------
# non-stationary product-space splitting
# ---------------------------------------------------------------------------

class GfbFamily:
    """Parameter-indexed family of product-space splitting operators sharing
    the block set; built operators are cached per parameter value."""

    def __init__(self, spec: GfbSpec):
        self.spec = spec
        self._cache = {}

    def at(self, gamma: float) -> OperatorSpec:
        key = float(gamma)
        op = self._cache.get(key)
        if op is None:
            s = self.spec
            sub = GfbSpec(blocks=s.blocks, weights=s.weights, gamma=key,
                          dim=s.dim, smooth=s.smooth)
            op = GfbBuilt(sub).operator
            self._cache[key] = op
        return op


def build_gfb_nonstationary(spec: GfbSpec, schedule: GammaSchedule):
    """Family plus schedule for the per-step-parameter iteration.  Validates
    that the schedule stays inside (0, 2 beta); the summability
    classification travels on the schedule itself."""
    beta = spec.smooth.beta if spec.smooth is not None else np.inf
    lo = min(schedule.limit, schedule.start)
    hi = max(schedule.limit, schedule.start)
    if not (0.0 < lo and hi < 2.0 * beta):
        raise ParameterError(
            f"schedule range [{lo}, {hi}] leaves the admissible interval "
            f"(0, {2.0 * beta})"
        )
    return GfbFamily(spec), schedule
