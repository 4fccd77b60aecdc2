import numpy as np
import pytest

from kmcert.errors import DivergenceError, ParameterError, UnavailableError
from kmcert.km import (
    ErrorSchedule,
    FixedPointSet,
    GammaSchedule,
    RelaxationSchedule,
    StopRule,
    displacements,
    ergodic_residual,
    km_step,
    run_km,
    run_km_nonstationary,
)
from kmcert.operators import (
    identity_operator,
    vector_operator,
    zero_operator,
)
from kmcert.spaces import ProductSpace
from kmcert.splitting import build_gfb_nonstationary
from kmcert.problems import make_multiblock_nonstationary


def one_d_space():
    return ProductSpace.single(1)


def zero_problem(d=1, z0=(1.0,)):
    sp = ProductSpace.single(d)
    return zero_operator(sp), sp.vector(z0), FixedPointSet.from_point(sp.zeros())


class TestKmStep:
    def test_fixed_point_stays(self):
        sp = ProductSpace.single(2)
        T = identity_operator(sp)
        z = sp.vector((1.0, 2.0))
        out = km_step(z, T, 0.7)
        assert sp.norm(out - z) == 0.0

    def test_zero_map_half_step(self):
        T, z, _ = zero_problem()
        out = km_step(z, T, 0.5)
        assert out.blocks[0] == pytest.approx([0.5])

    def test_with_error_vector(self):
        T, z, _ = zero_problem()
        eps = T.space.vector((0.1,))
        out = km_step(z, T, 0.5, eps)
        assert out.blocks[0] == pytest.approx([0.55])


class TestRunKmClosedForms:
    def test_zero_map_geometric(self):
        # z_{k+1} = z_k / 2 exactly, so both residual and iterate are 2^-k
        T, z0, fix = zero_problem()
        tr = run_km(T, z0, RelaxationSchedule.constant(0.5),
                    stop=StopRule(40, 0.0), fix=fix)
        expected = 0.5 ** np.arange(40)
        assert np.max(np.abs(tr.res_norm - expected)) <= 1e-15
        assert np.max(np.abs(tr.dist[:-1] - expected)) <= 1e-15

    def test_zero_map_ergodic_closed_form(self):
        # sum of lam_j e_j telescopes to 1 - 2^-(k+1); Lambda_k = (k+1)/2
        T, z0, _ = zero_problem()
        tr = run_km(T, z0, RelaxationSchedule.constant(0.5), stop=StopRule(30, 0.0))
        ks = np.arange(30)
        expected = (2.0 - 0.5 ** ks) / (ks + 1.0)
        assert np.max(np.abs(tr.erg_norm - expected)) <= 1e-14

    def test_zero_map_displacement(self):
        T, z0, _ = zero_problem()
        tr = run_km(T, z0, RelaxationSchedule.constant(0.5), stop=StopRule(20, 0.0))
        assert np.max(np.abs(tr.disp_norm - 0.5 * tr.res_norm)) <= 1e-15
        assert np.max(np.abs(displacements(tr) - tr.disp_norm)) == 0.0

    def test_projector_converges_one_step(self):
        from kmcert.operators import project_subspace
        sp = ProductSpace.single(2)
        U = np.array([1.0, 0.0])
        P = vector_operator(sp, lambda x: project_subspace(x, U), 0.5, "proj")
        tr = run_km(P, sp.vector((0.0, 1.0)), RelaxationSchedule.constant(1.0),
                    stop=StopRule(10, 1e-10))
        assert tr.res_norm[0] == pytest.approx(1.0)
        assert tr.res_norm[1] == 0.0
        assert tr.n_steps == 2

    def test_projector_residual_equals_distance(self):
        from kmcert.operators import project_subspace
        sp = ProductSpace.single(3)
        rng = np.random.default_rng(0)
        U, _ = np.linalg.qr(rng.standard_normal((3, 2)))
        P = vector_operator(sp, lambda x: project_subspace(x, U), 0.5, "proj")
        fix = FixedPointSet.from_projector(
            lambda z: sp.vector(project_subspace(z.blocks[0], U)))
        tr = run_km(P, sp.vector(rng.standard_normal(3) * 5.0),
                    RelaxationSchedule.constant(0.5), stop=StopRule(40, 0.0),
                    fix=fix)
        assert np.max(np.abs(tr.res_norm - tr.dist[:-1])) <= 1e-12


class TestSchedules:
    def test_relaxation_validation(self):
        with pytest.raises(ParameterError):
            RelaxationSchedule.constant(0.0)
        with pytest.raises(ParameterError):
            RelaxationSchedule.from_function(lambda k: 0.5, 0.7, 0.5)

    def test_tau_bounds(self):
        sched = RelaxationSchedule.constant(0.5)
        lo, hi = sched.tau_bounds(1.0)
        assert lo == pytest.approx(0.25) and hi == pytest.approx(0.25)
        sched2 = RelaxationSchedule.from_function(lambda k: 0.2 + 0.6 / (k + 1), 0.2, 0.8)
        lo2, hi2 = sched2.tau_bounds(1.0)
        assert lo2 == pytest.approx(0.16)
        assert hi2 == pytest.approx(0.25)

    def test_error_schedule_flags(self):
        assert ErrorSchedule.zero().is_k_eps_summable
        s = ErrorSchedule.power(0.1, 3.0)
        assert s.is_k_eps_summable and s.is_lam_eps_summable
        s2 = ErrorSchedule.power(0.1, 1.5)
        assert not s2.is_k_eps_summable and s2.is_lam_eps_summable
        s3 = ErrorSchedule.power(0.1, 0.5)
        assert not s3.is_k_eps_summable and not s3.is_lam_eps_summable
        s4 = ErrorSchedule.explicit([1.0, 0.5, 0.0])
        assert s4.is_k_eps_summable and s4.magnitude(1) == 0.5 and s4.magnitude(7) == 0.0

    def test_admissibility_enforced(self):
        sp = ProductSpace.single(2)
        T = zero_operator(sp)  # non-expansive only: cap 1
        with pytest.raises(ParameterError):
            run_km(T, sp.vector((1.0, 0.0)), RelaxationSchedule.constant(1.5))

    def test_gamma_schedule_values_and_flags(self):
        g = GammaSchedule.geometric(1.5, 1.9)
        assert g.value(0) == pytest.approx(1.9)
        assert g.value(1) == pytest.approx(1.5 + 0.4 / 1.1)
        assert g.abs_summable and g.k_summable
        assert GammaSchedule.geometric(1.5, 1.9).value(100000) == pytest.approx(1.5)
        h = GammaSchedule.harmonic(1.5, 1.9)
        assert h.value(0) == pytest.approx(1.9) and h.value(2) == pytest.approx(1.7)
        assert not h.abs_summable
        q = GammaSchedule.inverse_square(1.5, 1.9)
        assert q.abs_summable and not q.k_summable
        assert "not summable" in h.summability_note


class TestInexactRuns:
    def test_recorded_magnitudes_follow_law(self):
        T, z0, _ = zero_problem(d=4, z0=(1.0, 0.0, 0.0, 0.0))
        tr = run_km(T, z0, RelaxationSchedule.constant(0.5),
                    errors=ErrorSchedule.power(0.1, 3.0), stop=StopRule(50, 0.0))
        ks = np.arange(50)
        assert np.max(np.abs(tr.eps_norm - 0.1 / (ks + 1.0) ** 3)) <= 1e-15

    def test_update_identity_recomputed(self):
        # z_{k+1} - z_k must equal lam (eps_k - e_k) from the stored vectors
        T, z0, _ = zero_problem(d=3, z0=(1.0, 2.0, -1.0))
        tr = run_km(T, z0, RelaxationSchedule.constant(0.7),
                    errors=ErrorSchedule.power(0.2, 2.0), stop=StopRule(40, 0.0))
        sp = T.space
        for k in range(tr.n_steps):
            step = tr.z_vecs[k + 1] - tr.z_vecs[k]
            ref = (tr.eps_vector(k) - tr.e_vecs[k]) * tr.lam[k]
            assert sp.norm(step - ref) <= 1e-12

    def test_determinism(self):
        T, z0, _ = zero_problem(d=4, z0=(1.0, -1.0, 0.5, 2.0))
        a = run_km(T, z0, RelaxationSchedule.constant(0.5),
                   errors=ErrorSchedule.power(0.1, 3.0), stop=StopRule(60, 0.0), seed=5)
        b = run_km(T, z0, RelaxationSchedule.constant(0.5),
                   errors=ErrorSchedule.power(0.1, 3.0), stop=StopRule(60, 0.0), seed=5)
        assert np.array_equal(a.res_norm, b.res_norm)
        assert np.array_equal(a.erg_norm, b.erg_norm)
        assert np.array_equal(a.eps_norm, b.eps_norm)
        assert all(np.array_equal(x.blocks[0], y.blocks[0])
                   for x, y in zip(a.z_vecs, b.z_vecs))

    def test_seed_changes_directions(self):
        T, z0, _ = zero_problem(d=4, z0=(1.0, -1.0, 0.5, 2.0))
        a = run_km(T, z0, RelaxationSchedule.constant(0.5),
                   errors=ErrorSchedule.power(0.1, 3.0), stop=StopRule(30, 0.0), seed=1)
        b = run_km(T, z0, RelaxationSchedule.constant(0.5),
                   errors=ErrorSchedule.power(0.1, 3.0), stop=StopRule(30, 0.0), seed=2)
        assert not np.array_equal(a.res_norm, b.res_norm)
        # magnitudes still follow the same law (up to unit-vector rounding)
        assert np.max(np.abs(a.eps_norm - b.eps_norm)) <= 1e-15


class TestStepInequalities:
    """Per-step inequalities that every run must satisfy (wider sweeps live in
    the acceptance module)."""

    def residual_difference_slack(self, tr, alpha=None):
        sp = tr.space
        worst = -np.inf
        scale = 2.0 * (alpha if alpha is not None else 1.0)
        for k in range(tr.n_steps - 1):
            de = tr.e_vecs[k] - tr.e_vecs[k + 1]
            lhs = sp.inner(de, de) / (scale * tr.lam[k])
            rhs = sp.inner(tr.e_vecs[k] - tr.eps_vector(k), de)
            worst = max(worst, lhs - rhs)
        return worst

    def test_residual_difference_inequality_exact(self):
        T, z0, _ = zero_problem(d=3, z0=(1.0, 2.0, 3.0))
        tr = run_km(T, z0, RelaxationSchedule.constant(0.5), stop=StopRule(40, 0.0))
        assert self.residual_difference_slack(tr) <= 1e-10

    def test_residual_difference_inequality_inexact(self):
        T, z0, _ = zero_problem(d=3, z0=(1.0, 2.0, 3.0))
        tr = run_km(T, z0, RelaxationSchedule.constant(0.5),
                    errors=ErrorSchedule.power(0.1, 3.0), stop=StopRule(100, 0.0))
        assert self.residual_difference_slack(tr) <= 1e-10

    def test_exact_residual_monotone(self):
        T, z0, _ = zero_problem(d=2, z0=(3.0, -4.0))
        tr = run_km(T, z0, RelaxationSchedule.constant(0.7), stop=StopRule(50, 0.0))
        assert np.all(tr.res_norm[1:] <= tr.res_norm[:-1] + 1e-12)

    def test_distance_decrease_exact(self):
        T, z0, fix = zero_problem(d=2, z0=(3.0, -4.0))
        tr = run_km(T, z0, RelaxationSchedule.constant(0.5), stop=StopRule(50, 0.0),
                    fix=fix)
        tau = tr.lam * (1.0 - tr.lam)
        lhs = tr.dist[1:] ** 2
        rhs = tr.dist[:-1] ** 2 - tau * tr.res_norm ** 2
        assert np.all(lhs <= rhs + 1e-10)


class TestDivergenceGuard:
    def test_expanding_map_detected(self):
        sp = ProductSpace.single(1)
        bad = vector_operator(sp, lambda x: 3.0 * x, None, "triple")  # false claim
        with pytest.raises(DivergenceError):
            run_km(bad, sp.vector((1.0,)), RelaxationSchedule.constant(1.0),
                   stop=StopRule(300, 0.0))


class TestErgodicRecompute:
    def test_matches_engine_column(self):
        T, z0, _ = zero_problem(d=3, z0=(1.0, -2.0, 0.5))
        tr = run_km(T, z0, RelaxationSchedule.constant(0.5),
                    errors=ErrorSchedule.power(0.05, 3.0), stop=StopRule(60, 0.0))
        recomputed = ergodic_residual(tr)
        assert np.max(np.abs(recomputed - tr.erg_norm)) <= 1e-14

    def test_requires_retention(self):
        T, z0, _ = zero_problem()
        tr = run_km(T, z0, RelaxationSchedule.constant(0.5), stop=StopRule(10, 0.0),
                    retain=False)
        with pytest.raises(UnavailableError):
            ergodic_residual(tr)

    def test_constant_residual_average(self):
        # identity operator with constant injected error: e_k = 0 always
        sp = ProductSpace.single(2)
        T = identity_operator(sp)
        tr = run_km(T, sp.vector((1.0, 1.0)), RelaxationSchedule.constant(0.5),
                    errors=ErrorSchedule.power(1.0, 0.0), stop=StopRule(25, 0.0))
        assert np.max(tr.res_norm) == 0.0
        assert np.max(tr.erg_norm) == 0.0

    def test_alternating_residual_cancellation(self):
        # the sign flip makes residuals alternate, so the running average
        # collapses to 0 after even step counts and 2||z0||/(k+1) otherwise
        sp = ProductSpace.single(2)
        flip = vector_operator(sp, lambda x: -x, None, "flip")
        z0 = sp.vector((3.0, 4.0))
        tr = run_km(flip, z0, RelaxationSchedule.constant(1.0),
                    stop=StopRule(20, 0.0))
        ks = np.arange(20)
        expected = np.where(ks % 2 == 0, 10.0 / (ks + 1.0), 0.0)
        assert np.max(np.abs(tr.erg_norm - expected)) <= 1e-12


class TestNonstationary:
    def test_constant_schedule_degenerates(self):
        fam, sched, statp = make_multiblock_nonstationary("constant", d=6)
        tr_ns = run_km_nonstationary(fam, sched, statp.z0, statp.relaxation,
                                     stop=StopRule(200, 0.0), retain=False)
        tr_st = statp.exact_run(max_iters=200, retain=False)
        assert np.array_equal(tr_ns.res_norm, tr_st.res_norm)
        assert np.array_equal(tr_ns.erg_norm, tr_st.erg_norm)
        assert np.array_equal(tr_ns.disp_norm, tr_st.disp_norm)
        assert np.max(tr_ns.pert_norm) == 0.0

    def test_geometric_perturbations_summable(self):
        fam, sched, statp = make_multiblock_nonstationary("geometric", d=6)
        tr = run_km_nonstationary(fam, sched, statp.z0, statp.relaxation,
                                  stop=StopRule(600, 0.0), retain=False)
        sums = np.cumsum(tr.pert_norm)
        # the partial-sum tail past step 300 moves by less than 1e-8
        assert sums[-1] - sums[300] <= 1e-8
        assert np.isfinite(sums[-1])

    def test_harmonic_perturbations_still_growing(self):
        fam, sched, statp = make_multiblock_nonstationary("harmonic", d=6)
        tr = run_km_nonstationary(fam, sched, statp.z0, statp.relaxation,
                                  stop=StopRule(600, 0.0), retain=False)
        sums = np.cumsum(tr.pert_norm)
        assert sums[-1] - sums[-301] > 1e-4

    def test_gamma_column_recorded(self):
        fam, sched, statp = make_multiblock_nonstationary("geometric", d=6)
        tr = run_km_nonstationary(fam, sched, statp.z0, statp.relaxation,
                                  stop=StopRule(50, 0.0), retain=False)
        assert tr.gamma is not None
        assert tr.gamma[0] == pytest.approx(sched.value(0))
        assert tr.gamma[7] == pytest.approx(sched.value(7))

    def test_native_residual_mode(self):
        fam, sched, statp = make_multiblock_nonstationary("geometric", d=6)
        tr = run_km_nonstationary(fam, sched, statp.z0, statp.relaxation,
                                  stop=StopRule(50, 0.0), retain=False,
                                  track_limit=False)
        assert np.all(np.isnan(tr.pert_norm))

    def test_schedule_range_validated(self):
        from kmcert.problems import make_gfb_multiblock
        base = make_gfb_multiblock(2, 6)
        from kmcert.km import GammaSchedule
        bad = GammaSchedule.geometric(1.5, 2.5)  # exceeds 2 beta = 2
        with pytest.raises(ParameterError):
            build_gfb_nonstationary(base.built.spec, bad)
