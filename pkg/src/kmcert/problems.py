"""Analytic test-problem generators with known fixed-point sets, moduli and
rates.  Every generator is deterministic under a fixed seed."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .bounds import fit_tail_rate, gd_theoretical_rate
from .errors import ParameterError, UnavailableError
from .km import (
    ErrorSchedule,
    FixedPointSet,
    GammaSchedule,
    IterationTrace,
    RelaxationSchedule,
    StopRule,
    run_km,
)
from .operators import OperatorSpec, QuadraticFn, gradient_step, prox_l1, zero_operator
from .spaces import ProductPoint, ProductSpace
from .splitting import (
    BoxBlock,
    CocoerciveMap,
    DrsSpec,
    GfbSpec,
    L1Block,
    LinearBlock,
    PdsDualTerm,
    PdsSpec,
    SubspaceBlock,
    ZeroBlock,
    build_drs,
    build_gfb,
    build_gfb_nonstationary,
    build_pds,
)

CERT_HORIZON = 1000


@dataclass
class ProblemInstance:
    """Operator assembly plus what the certification harness needs: a
    fixed-point description, analytic constants when available, and the
    recommended start / schedules."""

    name: str
    kind: str                       # km | gfb | drs | pds
    operator: OperatorSpec
    z0: ProductPoint
    relaxation: RelaxationSchedule
    fix: Optional[FixedPointSet] = None
    kappa: Optional[float] = None
    theoretical_rate: Optional[float] = None
    rate_basis: Optional[str] = None        # residual | dist_sq
    rate_horizon: int = 60
    cert_horizon: int = CERT_HORIZON
    built: object = None
    constants: dict = field(default_factory=dict)
    _ref: Optional[FixedPointSet] = field(default=None, repr=False)

    # -- run helpers --------------------------------------------------------

    def exact_run(self, max_iters: Optional[int] = None, tol: float = 0.0,
                  retain: bool = True, seed: int = 0) -> IterationTrace:
        stop = StopRule(max_iters=max_iters or self.cert_horizon, residual_tol=tol)
        return run_km(self.operator, self.z0, self.relaxation, stop=stop,
                      fix=self.fix, retain=retain, seed=seed,
                      meta={"problem": self.name})

    def inexact_run(self, c: float = 0.1, p: float = 3.0,
                    max_iters: Optional[int] = None, tol: float = 0.0,
                    retain: bool = True, seed: int = 0) -> IterationTrace:
        stop = StopRule(max_iters=max_iters or self.cert_horizon, residual_tol=tol)
        if self.kind == "km":
            return run_km(self.operator, self.z0, self.relaxation,
                          errors=ErrorSchedule.power(c, p), stop=stop,
                          fix=self.fix, retain=retain, seed=seed,
                          meta={"problem": self.name})
        channel = self.make_channel(c, p)
        return run_km(self.operator, self.z0, self.relaxation, stop=stop,
                      channel=channel, fix=self.fix, retain=retain, seed=seed,
                      meta={"problem": self.name})

    def make_channel(self, c: float, p: float):
        if self.kind == "gfb":
            half = ErrorSchedule.power(c / 2.0, p)
            return self.built.channel(half, half)
        if self.kind == "drs":
            half = ErrorSchedule.power(c / 2.0, p)
            return self.built.channel(half, half)
        if self.kind == "pds":
            quarter = ErrorSchedule.power(c / 4.0, p)
            return self.built.channel([quarter] * 4)
        raise ParameterError(f"no channel model for kind {self.kind!r}")

    def rate_run(self, seed: int = 0) -> IterationTrace:
        return self.exact_run(max_iters=self.rate_horizon, tol=0.0, seed=seed)

    def observed_rate(self, trace: IterationTrace) -> float:
        if self.rate_basis == "residual":
            return fit_tail_rate(trace.res_norm)
        if self.rate_basis == "dist_sq":
            if trace.dist is None:
                raise UnavailableError("distance column missing")
            return fit_tail_rate(trace.dist ** 2)
        raise UnavailableError("no rate convention declared for this problem")

    def fix_reference(self, tol: float = 1e-13, factor: int = 10) -> FixedPointSet:
        if self.fix is not None:
            return self.fix
        if self._ref is None:
            self._ref = reference_solution(self, tol=tol, factor=factor)
        return self._ref


def _check_fixed_point(operator: OperatorSpec, z_star: ProductPoint) -> None:
    res = operator.space.norm(z_star - operator(z_star))
    if res > 1e-10:
        raise ParameterError(f"claimed fixed point has residual {res:.3e}")


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def make_zero_map(d: int = 4, seed: int = 7) -> ProblemInstance:
    """Constant-zero operator, certified non-expansive only; the baseline
    sanity problem with fixed point at the origin."""
    space = ProductSpace.single(d)
    rng = np.random.default_rng(seed)
    z0 = space.vector(rng.standard_normal(d))
    op = zero_operator(space)
    fix = FixedPointSet.from_point(space.zeros())
    _check_fixed_point(op, space.zeros())
    return ProblemInstance(
        name="zero-map", kind="km", operator=op, z0=z0,
        relaxation=RelaxationSchedule.constant(0.5), fix=fix, kappa=1.0,
        rate_horizon=40,
    )


def make_quadratic_gd(delta_m: float, delta_M: float, d: int, gamma: float,
                      ) -> ProblemInstance:
    """Gradient descent on a diagonal quadratic whose spectrum spans
    ``[delta_m, delta_M]`` with the extremes attained.  The fixed point is the
    origin, the residual-to-distance modulus is ``1/(gamma delta_m)`` and the
    starting point is a fixed non-axis-aligned seeded vector so the slow
    eigendirection is excited."""
    if not (0.0 < delta_m <= delta_M) or d < 2:
        raise ParameterError("need 0 < delta_m <= delta_M and d >= 2")
    if not (0.0 < gamma < 2.0 / delta_M):
        raise ParameterError("step size outside (0, 2/delta_M)")
    diag = np.linspace(delta_m, delta_M, d)
    f = QuadraticFn(np.diag(diag), np.zeros(d))
    op = gradient_step(f, gamma)
    space = op.space

    rng = np.random.default_rng(12345)
    z0_vec = 100.0 * (1.0 + 0.25 * rng.standard_normal(d))
    z0 = space.vector(z0_vec)
    fix = FixedPointSet.from_point(space.zeros())
    _check_fixed_point(op, space.zeros())

    spectral = float(np.max(np.abs(1.0 - gamma * diag)))
    res0 = gamma * float(np.linalg.norm(diag * z0_vec))
    if 0.0 < spectral < 1.0:
        horizon = int(np.log(1e-12 / res0) / np.log(spectral))
    else:
        horizon = 20
    horizon = int(np.clip(horizon, 20, 200))

    return ProblemInstance(
        name=f"gd(gamma={gamma:g})", kind="km", operator=op, z0=z0,
        relaxation=RelaxationSchedule.constant(1.0), fix=fix,
        kappa=1.0 / (gamma * delta_m),
        theoretical_rate=gd_theoretical_rate(gamma, delta_m, delta_M),
        rate_basis="residual", rate_horizon=horizon,
        constants={"delta_m": delta_m, "delta_M": delta_M, "gamma": gamma,
                   "spectral_rate": spectral},
    )


def make_two_subspaces(theta: float, d: int, lam: float = 1.0) -> ProblemInstance:
    """Douglas-Rachford for the intersection of two lines at angle theta,
    embedded in dimension d.  The fixed-point set is the orthogonal
    complement of the plane the lines span; the residual-to-distance modulus
    is ``1/sin(theta)`` and the squared-distance contraction per step is
    exactly ``1 - (2 - lam) lam sin^2(theta)``."""
    if not (0.0 < theta <= np.pi / 2.0) or d < 2:
        raise ParameterError("need theta in (0, pi/2] and d >= 2")
    e1 = np.zeros(d); e1[0] = 1.0
    v = np.zeros(d); v[0], v[1] = np.cos(theta), np.sin(theta)
    spec = DrsSpec(SubspaceBlock(e1), SubspaceBlock(v), gamma=1.0, dim=d)
    built = build_drs(spec)
    space = built.space

    def proj_fix(z: ProductPoint) -> ProductPoint:
        out = z.blocks[0].copy()
        out[0] = 0.0
        out[1] = 0.0
        return space.vector(out)

    fix = FixedPointSet.from_projector(proj_fix, "plane-complement")
    rng = np.random.default_rng(99)
    z0_vec = 10.0 * rng.standard_normal(d)
    if np.hypot(z0_vec[0], z0_vec[1]) < 1.0:
        z0_vec[0] += 2.0
    z0 = space.vector(z0_vec)
    _check_fixed_point(built.operator, proj_fix(z0))

    zeta = 1.0 - (2.0 - lam) * lam * np.sin(theta) ** 2
    d_plane = float(np.hypot(z0_vec[0], z0_vec[1]))
    step_factor = float(np.sqrt(zeta))
    if 0.0 < step_factor < 1.0:
        horizon = int(np.log(1e-7 / d_plane) / np.log(step_factor)) - 2
    else:
        horizon = 20
    horizon = int(np.clip(horizon, 20, 200))

    return ProblemInstance(
        name=f"two-subspaces(theta={theta:.4g},lam={lam:g})", kind="drs",
        operator=built.operator, z0=z0,
        relaxation=RelaxationSchedule.constant(lam), fix=fix,
        kappa=1.0 / np.sin(theta), theoretical_rate=float(zeta),
        rate_basis="dist_sq", rate_horizon=horizon, built=built,
        constants={"theta": theta, "lam": lam},
    )


def make_lasso(m: int, n: int, mu: Optional[float] = None, seed: int = 1,
               ) -> ProblemInstance:
    """Single-block product-space splitting (plain forward-backward) for an
    l1-penalized least-squares instance with a planted sparse solution and a
    seeded, column-normalized design."""
    if m > 200 or n > 200 or m < 1 or n < 1:
        raise ParameterError("desk scale only: m, n <= 200")
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    A /= np.linalg.norm(A, axis=0, keepdims=True)
    support = rng.choice(n, size=max(1, n // 8), replace=False)
    x_true = np.zeros(n)
    x_true[support] = rng.choice([-1.0, 1.0], size=support.size) * (
        1.0 + rng.uniform(size=support.size)
    )
    y = A @ x_true
    Q = A.T @ A
    q = A.T @ y
    smooth = CocoerciveMap.quadratic(Q, q)
    if mu is None:
        mu = 0.2 * float(np.max(np.abs(q)))
    gamma = smooth.beta
    spec = GfbSpec(blocks=[L1Block(mu)], weights=np.array([1.0]), gamma=gamma,
                   dim=n, smooth=smooth)
    built = build_gfb(spec)
    z0 = built.space.point((np.zeros(n),))
    return ProblemInstance(
        name="lasso", kind="gfb", operator=built.operator, z0=z0,
        relaxation=RelaxationSchedule.constant(1.0), built=built,
        constants={"A": A, "y": y, "mu": mu, "support": np.sort(support),
                   "beta": smooth.beta},
    )


def make_gfb_multiblock(n_blocks: int, d: int, seed: int = 2) -> ProblemInstance:
    """Multi-block product-space instance mixing l1, box-indicator and affine
    monotone blocks around a smoothed-l1 forcing term (modulus 1).  The
    strongly monotone affine block makes the consensus solution unique."""
    if n_blocks not in (2, 3, 4) or d > 100:
        raise ParameterError("n_blocks in {2,3,4} and d <= 100")
    rng = np.random.default_rng(seed)
    R = rng.standard_normal((d, d))
    M = 0.5 * np.eye(d) + 0.5 * (R - R.T)
    c0 = 0.5 * rng.standard_normal(d)
    linear = LinearBlock(M, c0)
    blocks = {
        2: [L1Block(0.1), linear],
        3: [L1Block(0.1), BoxBlock(-0.8, 0.8), linear],
        4: [L1Block(0.1), BoxBlock(-0.8, 0.8), linear, ZeroBlock()],
    }[n_blocks]
    weights = np.full(n_blocks, 1.0 / n_blocks)
    spec = GfbSpec(blocks=blocks, weights=weights, gamma=1.0, dim=d,
                   smooth=CocoerciveMap.envelope_l1(0.3))
    built = build_gfb(spec)
    z0 = built.space.point(tuple(rng.standard_normal(d) for _ in range(n_blocks)))
    return ProblemInstance(
        name=f"multiblock(n={n_blocks})", kind="gfb", operator=built.operator,
        z0=z0, relaxation=RelaxationSchedule.constant(1.0), built=built,
        constants={"gamma": 1.0, "beta": 1.0},
    )


def make_pds_small(seed: int = 3) -> ProblemInstance:
    """Primal-dual instance with one dual block: box-constrained quadratic
    plus an l1 composite through a dense coupling with orthonormalized rows.
    Step sizes are scaled from the preconditioner formula so the averagedness
    condition holds with margin; the box is wide enough to be inactive, so a
    plain forward-backward run on the composite objective provides an
    independent primal reference."""
    dH, dG = 30, 20
    rng = np.random.default_rng(seed)
    G0 = rng.standard_normal((dH, dH))
    Q = G0.T @ G0
    Q /= np.linalg.eigvalsh(Q)[-1]
    x_target = 0.3 * rng.standard_normal(dH)
    q = Q @ x_target
    smooth = CocoerciveMap.quadratic(Q, q)

    L0 = rng.standard_normal((dG, dH))
    Qm, _ = np.linalg.qr(L0.T)
    L = 1.5 * Qm[:, :dG].T
    mu_l1 = 0.3

    L_norm = 1.5
    s = 0.8 / (L_norm + 1.0 / (2.0 * smooth.beta))
    spec = PdsSpec(
        primal_block=BoxBlock(-10.0, 10.0), tau=s, dim_primal=dH,
        duals=[PdsDualTerm(block=L1Block(mu_l1), L=L, sigma=s, omega=1.0)],
        smooth=smooth,
    )
    built = build_pds(spec)
    z0 = built.space.zeros()
    return ProblemInstance(
        name="pds-small", kind="pds", operator=built.operator, z0=z0,
        relaxation=RelaxationSchedule.constant(1.0), built=built,
        constants={"Q": Q, "q": q, "L": L, "mu": mu_l1, "eta": built.eta,
                   "delta": built.delta, "beta": built.beta},
    )


def pds_fbs_reference(problem: ProblemInstance, tol: float = 1e-13,
                      max_iters: int = 100_000) -> np.ndarray:
    """Forward-backward run on the composite objective behind the primal-dual
    instance (valid because the coupling has orthonormalized rows, giving the
    composite prox in closed form, and the box stays inactive)."""
    Q = problem.constants["Q"]
    q = problem.constants["q"]
    L = problem.constants["L"]
    mu = problem.constants["mu"]
    nu = float(np.linalg.eigvalsh(L @ L.T)[-1])
    gamma = 1.0 / float(np.linalg.eigvalsh(Q)[-1])
    x = np.zeros(Q.shape[0])
    for _ in range(max_iters):
        w = x - gamma * (Q @ x - q)
        Lw = L @ w
        x_new = w + (1.0 / nu) * (L.T @ (prox_l1(Lw, gamma * nu * mu) - Lw))
        if np.linalg.norm(x_new - x) <= tol:
            x = x_new
            break
        x = x_new
    if np.max(np.abs(x)) >= 10.0:
        raise UnavailableError("box constraint active; composite reference invalid")
    return x


def make_multiblock_nonstationary(kind: str, d: int = 10, n_blocks: int = 3,
                                  seed: int = 2):
    """Per-step-parameter variant of the multi-block instance: schedules
    decay toward the stationary parameter from 95% of the admissible limit.
    Returns (family, schedule, stationary problem)."""
    base = make_gfb_multiblock(n_blocks, d, seed=seed)
    beta = base.constants["beta"]
    gamma0 = 1.5 * beta
    hi = 1.9 * beta
    spec = GfbSpec(blocks=base.built.spec.blocks, weights=base.built.spec.weights,
                   gamma=gamma0, dim=d, smooth=base.built.spec.smooth)
    stationary = build_gfb(spec)
    schedules = {
        "geometric": GammaSchedule.geometric(gamma0, hi, ratio=1.1),
        "inverse-square": GammaSchedule.inverse_square(gamma0, hi),
        "harmonic": GammaSchedule.harmonic(gamma0, hi),
        "constant": GammaSchedule.constant(gamma0),
    }
    if kind not in schedules:
        raise ParameterError(f"unknown schedule kind {kind!r}")
    family, schedule = build_gfb_nonstationary(spec, schedules[kind])
    problem = ProblemInstance(
        name=f"multiblock-ns({kind})", kind="gfb", operator=stationary.operator,
        z0=base.z0, relaxation=RelaxationSchedule.constant(1.0),
        built=stationary, constants={"gamma": gamma0, "beta": beta},
    )
    return family, schedule, problem


def reference_solution(problem: ProblemInstance, tol: float = 1e-13,
                       factor: int = 10) -> FixedPointSet:
    """Fixed-point reference from a longer, tighter exact run; certified by
    re-evaluating the residual at the returned point."""
    stop = StopRule(max_iters=factor * problem.cert_horizon, residual_tol=tol)
    trace = run_km(problem.operator, problem.z0, problem.relaxation, stop=stop,
                   retain=False, seed=0, meta={"problem": problem.name,
                                               "role": "reference"})
    zf = trace.z_final
    res = problem.operator.space.norm(zf - problem.operator(zf))
    if res > tol * 10.0:
        raise UnavailableError(
            f"reference run not converged: residual {res:.3e} > {tol * 10.0:.1e}"
        )
    return FixedPointSet.from_reference(zf)
