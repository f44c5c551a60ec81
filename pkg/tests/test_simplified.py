import math
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from csmatree.bounds import bound_b1, contraction_lipschitz_sum
from csmatree.model import ArrivalRates, ProtocolParams, TreeTopology, beta_from_alpha
from csmatree.simplified import (
    RegimeWarning,
    UnstableQueueError,
    alpha_from_tau,
    discard_probability,
    domination_check,
    gamma_from_tau,
    mg1_delay,
    scalar_derivative,
    solve_scalar,
    solve_vector,
    total_load,
    vector_step,
)

P = ProtocolParams()
L = 0.02


def star_tree(m):
    return TreeTopology.from_parent({i: 0 for i in range(1, m + 1)}, range(1, m + 1))


def bisect_root(fn, lo, hi, iters=200):
    """fn(lo) < 0 < fn(hi) for an increasing fn."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


class TestDiscardProbability:
    def test_zero_alpha(self):
        assert discard_probability(0.0, L, P) == pytest.approx(L**P.n_t, rel=1e-12)

    def test_alpha_one(self):
        assert discard_probability(1.0, 0.5, P) == 1.0

    def test_monotone_grid(self):
        # within the monotonicity hypothesis alpha^n_c <= 1/n_t, gamma^n_t <= 1/n_t
        alphas = [i / 40 * (1 / P.n_t) ** (1 / P.n_c) for i in range(41)]
        gammas = [i / 40 * (1 / P.n_t) ** (1 / P.n_t) for i in range(41)]
        for g in gammas[::8]:
            vals = [discard_probability(a, g, P) for a in alphas]
            assert all(x <= y + 1e-15 for x, y in zip(vals, vals[1:]))
        for a in alphas[::8]:
            vals = [discard_probability(a, g, P) for g in gammas]
            assert all(x <= y + 1e-15 for x, y in zip(vals, vals[1:]))


class TestArgumentMonotonicity:
    @given(st.floats(0, 0.01), st.floats(0, 0.01))
    @settings(max_examples=100)
    def test_alpha_gamma_delta_nondecreasing(self, t1, t2):
        lo, hi = sorted((t1, t2))
        assert alpha_from_tau(P, lo) <= alpha_from_tau(P, hi) + 1e-15
        assert gamma_from_tau(P, lo, L) <= gamma_from_tau(P, hi, L) + 1e-15
        d_lo = discard_probability(alpha_from_tau(P, lo), gamma_from_tau(P, lo, L), P)
        d_hi = discard_probability(alpha_from_tau(P, hi), gamma_from_tau(P, hi, L), P)
        assert d_lo <= d_hi + 1e-15


class TestSolveVector:
    def test_zero_rates(self):
        tree = star_tree(3)
        sol = solve_vector(tree, ArrivalRates.equal(tree.sources, 0.0), P, L)
        assert all(v == 0.0 for v in sol.tau_minus.values())
        assert all(v == 0.0 for v in sol.alpha.values())
        assert all(v == pytest.approx(L) for v in sol.gamma.values())

    def test_symmetric_star_matches_scalar_reduction(self):
        # all tau_minus equal, solving x = (m-1) lam g(alpha(x))
        m, rate = 6, 2.0
        tree = star_tree(m)
        rates = ArrivalRates.equal(tree.sources, rate)
        lam = P.rate_to_per_symbol(rate)

        def fn(x):
            a = alpha_from_tau(P, x)
            g = sum(a**k for k in range(P.n_c))
            return x - (m - 1) * lam * g

        expected = bisect_root(fn, 0.0, 1.0)
        sol = solve_vector(tree, rates, P, L)
        for v in sol.tau_minus.values():
            assert v == pytest.approx(expected, rel=1e-9)

    def test_init_independence(self):
        tree = star_tree(5)
        rates = ArrivalRates.equal(tree.sources, 1.5)
        a = solve_vector(tree, rates, P, L)
        x0 = {i: 0.003 for i in tree.transmitters}  # start at the box edge
        b = solve_vector(tree, rates, P, L, x0=x0)
        for i in tree.transmitters:
            assert a.tau_minus[i] == pytest.approx(b.tau_minus[i], abs=1e-10)

    def test_out_of_regime_warns(self):
        tree = star_tree(4)
        rates = ArrivalRates.equal(tree.sources, 50.0)  # way past B1/4
        with pytest.warns(RegimeWarning):
            sol = solve_vector(tree, rates, P, L)
        assert not sol.in_regime

    def test_contraction_ratio(self):
        # successive iterate distances decay at least as fast as sum of
        # Lipschitz constants when the load sits inside the regime
        tree = star_tree(5)
        rate = 0.9 * bound_b1(0.0208, P) / tree.total_hops
        rates = ArrivalRates.equal(tree.sources, rate)
        lam = rates.per_symbol(P)
        nu = {i: lam[i] for i in tree.transmitters}
        lip = contraction_lipschitz_sum(0.0208, P, total_load(tree, rates, P))
        assert lip < 1
        x = {i: 0.0 for i in tree.transmitters}
        prev_dist = None
        for _ in range(30):
            nx = vector_step(P, nu, x)
            dist = max(abs(nx[i] - x[i]) for i in x)
            if prev_dist is not None and prev_dist > 1e-14:
                assert dist <= lip * prev_dist + 1e-15
            prev_dist = dist
            x = nx


class TestSolveScalar:
    def test_zero_load(self):
        sol = solve_scalar(0.0, P)
        assert sol.tau_bar == 0.0 and sol.alpha == 0.0

    def test_monotone_in_load(self):
        loads = [i * 2e-4 for i in range(10)]
        taus = [solve_scalar(m, P).tau_bar for m in loads]
        assert all(a <= b + 1e-15 for a, b in zip(taus, taus[1:]))

    def test_fixed_point_residual(self):
        m = 1e-3
        sol = solve_scalar(m, P)
        g = sum(sol.alpha**k for k in range(P.n_c))
        assert sol.tau_bar == pytest.approx(m * g, rel=1e-12)


class TestScalarDerivative:
    def test_zero_limit(self):
        assert scalar_derivative(0.0, P) == 1.0

    def test_matches_finite_differences(self):
        for m in [1e-4, 5e-4, 1e-3, 1.5e-3]:
            h = 1e-6 * m
            num = (solve_scalar(m + h, P).tau_bar - solve_scalar(m - h, P).tau_bar) / (2 * h)
            closed = scalar_derivative(m, P)
            assert closed == pytest.approx(num, rel=1e-4)

    def test_monotone(self):
        ms = [i * 1e-4 for i in range(1, 18)]
        hs = [solve_scalar(m, P).tau_bar for m in ms]
        assert all(a <= b for a, b in zip(hs, hs[1:]))


class TestMg1Delay:
    def test_zero_load_is_service_time(self):
        beta = beta_from_alpha(P, 0.0)
        d = mg1_delay(0.0, 0.0, 0.0, beta, P)
        assert d == pytest.approx(340.0)  # 78 + 262 symbols = 5.44 ms

    def test_unstable(self):
        beta = beta_from_alpha(P, 0.0)
        with pytest.raises(UnstableQueueError):
            mg1_delay(1.0, 0.0, 0.0, beta, P)

    def test_positive_load_adds_queueing(self):
        beta = beta_from_alpha(P, 0.0)
        assert mg1_delay(1e-3, 0.0, 0.0, beta, P) > 340.0


class TestDomination:
    def test_zero_rates(self):
        tree = star_tree(3)
        rep = domination_check(tree, ArrivalRates.equal(tree.sources, 0.0), P, L)
        assert rep.tau_bar == rep.max_tau_minus == rep.slack == 0.0

    def test_scalar_dominates(self):
        tree = TreeTopology.from_parent({1: 0, 2: 1, 3: 1, 4: 2}, [2, 3, 4])
        for rate in (0.5, 1.5, 3.0):
            rep = domination_check(tree, ArrivalRates.equal(tree.sources, rate), P, L)
            assert rep.tau_bar >= rep.max_tau_minus
            assert rep.slack >= 0.0

    def test_monotone_iterates_from_scalar_start(self):
        # starting the vector iteration at tau_bar, iterates only decrease
        tree = TreeTopology.from_parent({1: 0, 2: 1, 3: 1}, [1, 2, 3])
        rates = ArrivalRates.equal(tree.sources, 2.0)
        lam = rates.per_symbol(P)
        nu = {1: lam[1] * 3, 2: lam[2], 3: lam[3]}
        tau_bar = solve_scalar(total_load(tree, rates, P), P).tau_bar
        x = {i: tau_bar for i in (1, 2, 3)}
        for _ in range(50):
            nx = vector_step(P, nu, x)
            for i in x:
                assert nx[i] <= x[i] + 1e-18
            x = nx
