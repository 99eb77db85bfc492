import logging
import math
import warnings

import numpy as np
import pytest

from pyzerowait import NotApplicableError
from pyzerowait.coxian import CoxianDist, derived_constants, make_dist
from pyzerowait.issp import (
    default_n_stop,
    iterate_ideal,
    iterate_rigorous,
    lower_chain,
    theorem1_condition,
    theorem1_interval,
    theorem2_bound,
    upper_chain,
    waiting_bound_value,
)


def coxian4():
    return make_dist(4, [0.5, 0.5, 0.5], [1, 1, 1, 1])


def erlang3():
    with pytest.warns(UserWarning):
        return CoxianDist.erlang(3)


class TestIdeal:
    def test_erlang3_sequence(self):
        dist = erlang3()
        consts = derived_constants(dist)
        trace = iterate_ideal(consts, dist, 1.)

        np.testing.assert_allclose(trace.L[:4, 0], [0, 1/4, 5/16, 21/64],
                atol=1e-15)
        assert trace.converged
        np.testing.assert_allclose(trace.L[-1], [1/3, 1/3, 1/3], atol=1e-11)
        np.testing.assert_allclose(trace.U[-1], [0, 1/3, 2/3], atol=1e-11)

        # distance to the fixed point shrinks by xi each step
        gaps = 1/3 - trace.L[:8, 0]
        np.testing.assert_allclose(gaps[1:]/gaps[:-1], consts.xi, rtol=1e-9)

    def test_erlang3_listing_logged(self, caplog):
        dist = erlang3()
        consts = derived_constants(dist)

        with caplog.at_level(logging.INFO, logger="pyzerowait.issp"):
            iterate_ideal(consts, dist, 1.)
        messages = [rec.getMessage() for rec in caplog.records
                if rec.levelno == logging.INFO]
        assert len(messages) == 1
        assert "0, 0.25, 0.3125 by the recursion" in messages[0]

        caplog.clear()
        with caplog.at_level(logging.INFO, logger="pyzerowait.issp"):
            iterate_ideal(consts, dist, 0.9)
            other = coxian4()
            iterate_ideal(derived_constants(other), other, 1.)
        assert not [rec for rec in caplog.records
                if rec.levelno == logging.INFO]

    def test_coxian4_fixed_point(self):
        dist = coxian4()
        consts = derived_constants(dist)
        lam = 0.99
        trace = iterate_ideal(consts, dist, lam)
        assert trace.converged
        # the cap lam*v_1 binds below one
        np.testing.assert_allclose(trace.L[-1], lam*np.array(dist.v),
                atol=1e-11)
        assert np.all(np.diff(trace.L[:, 0]) >= -1e-15)

    def test_closed_form_matches_chain(self):
        rng = np.random.default_rng(17)
        for _ in range(50):
            M = int(rng.integers(2, 7))
            dist = make_dist(M, rng.uniform(0, 0.95, M-1),
                    np.exp(rng.uniform(math.log(0.1), math.log(10), M)))
            consts = derived_constants(dist)
            lam = float(rng.uniform(0.5, 1))
            trace = iterate_ideal(consts, dist, lam, n_max=40)
            np.testing.assert_allclose(trace.closed_form, trace.L[:, 0],
                    atol=1e-12)

    def test_literal_ordering_lags(self):
        dist = coxian4()
        consts = derived_constants(dist)
        collapsed = iterate_ideal(consts, dist, 1., n_max=10)
        literal = iterate_ideal(consts, dist, 1., n_max=11, ordering="literal")

        # the stored U_M starts at one, so the first update is zero
        assert literal.L[1, 0] == 0
        n = min(literal.L.shape[0]-1, collapsed.L.shape[0])
        np.testing.assert_allclose(literal.L[1:n+1, 0], collapsed.L[:n, 0],
                atol=1e-15)
        assert literal.closed_form is None

    def test_chains(self):
        dist = coxian4()
        consts = derived_constants(dist)
        l11 = 0.4
        U = upper_chain(consts, l11)
        assert U[0] == 0
        for m in range(2, 5):
            i = m-2
            assert U[m-1] == pytest.approx(1 - consts.a[i] - consts.b[i]*l11
                    + consts.a[i]*U[m-2])

        L = lower_chain(consts, l11)
        np.testing.assert_allclose(L, [0.4, 0.2, 0.1, 0.05])

    def test_invalid(self):
        dist = coxian4()
        consts = derived_constants(dist)
        with pytest.raises(ValueError):
            iterate_ideal(consts, dist, 1.5)
        with pytest.raises(ValueError):
            iterate_ideal(consts, dist, 1., ordering="reversed")
        with pytest.raises(ValueError):
            iterate_ideal(consts, make_dist(4, [0.4]*3, [1]*4), 1.)

    def test_single_phase(self):
        dist = CoxianDist.exponential()
        consts = derived_constants(dist)
        with pytest.raises(NotApplicableError):
            iterate_ideal(consts, dist, 0.9)
        with pytest.raises(NotApplicableError):
            theorem1_condition(consts, 100, 0.3)


class TestRigorous:
    def test_reduces_to_ideal(self):
        dist = coxian4()
        consts = derived_constants(dist)
        N = 10**6
        alpha = 0.3

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rigorous = iterate_rigorous(consts, dist, N, alpha, n_stop=25,
                    delta=0., slack=0.)
        ideal = iterate_ideal(consts, dist, rigorous.lam, n_max=25)

        # the ideal run stops once the cap binds
        n = ideal.L.shape[0]
        np.testing.assert_allclose(rigorous.L[:n], ideal.L, atol=1e-15)
        np.testing.assert_allclose(rigorous.U[:n], ideal.U, atol=1e-15)
        assert rigorous.eps is None

    def test_large_N(self):
        dist = coxian4()
        consts = derived_constants(dist)
        N = 10.**15
        alpha = 0.2

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            trace = iterate_rigorous(consts, dist, N, alpha)

        assert trace.n_iterations == default_n_stop(consts, N)
        lam = 1 - N**(-alpha)
        l11 = trace.L[:, 0]
        assert l11[-1] > 0

        # strictly increasing while below s*_{1,1} - 6 Delta/C
        cap = lam*dist.v[0] - 6*trace.delta/consts.C
        below = l11[:-1] < cap
        assert below.all()
        assert np.all(l11[1:][below] > l11[:-1][below])
        assert np.all(l11 <= cap + 1e-15)
        assert np.all(trace.L[-1] <= lam*np.array(dist.v) + 1e-15)
        np.testing.assert_allclose(trace.closed_form[1:], l11[1:],
                rtol=1e-3)

        assert trace.eps.shape == trace.sigma.shape == (trace.n_iterations+1, 4)
        assert not trace.sigma[:, 0].any()
        assert np.all(np.isfinite(trace.eps[1]))

        rows = list(trace.csv_rows())
        assert len(trace.csv_header()) == len(rows[0]) == 1 + 4 + 3 + 4 + 3

    def test_erlang3_moderate_N(self):
        dist = erlang3()
        consts = derived_constants(dist)
        N = 10**6
        alpha = 0.2

        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            trace = iterate_rigorous(consts, dist, N, alpha)

        lam = 1 - N**-alpha
        delta_over_c = trace.delta/consts.C
        assert trace.n_iterations == 5
        assert not trace.conditions_ok

        # the 6 Delta/C margin alone exceeds s*_{1,1} = lam/3 at this N,
        # so the iteration settles far below the equilibrium
        assert 6*delta_over_c > lam/3
        assert consts.C_M_strict == pytest.approx(37/4 + 6)
        K = 1/3 - (consts.C_M_strict*delta_over_c + 0.75/(6*N**alpha))/0.75
        n = np.arange(6)
        np.testing.assert_allclose(trace.L[:, 0], K*(1 - 0.25**n),
                rtol=1e-9, atol=1e-12)
        assert np.all(trace.L[1:, 0] < 0)
        assert np.all(np.diff(trace.L[:, 0]) < 0)

        interval = theorem1_interval(consts, N, alpha)
        assert interval.lower[0] == pytest.approx(lam/3 - 6*delta_over_c)
        assert trace.L[-1, 0] < interval.lower[0]

    def test_closed_form_matches_chain(self):
        rng = np.random.default_rng(29)
        for _ in range(50):
            M = int(rng.integers(2, 7))
            dist = make_dist(M, rng.uniform(0, 0.95, M-1),
                    np.exp(rng.uniform(math.log(0.1), math.log(10), M)))
            consts = derived_constants(dist)
            N = 10**float(rng.uniform(3, 12))
            alpha = float(rng.uniform(0.1, 0.45))

            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                trace = iterate_rigorous(consts, dist, N, alpha,
                        n_stop=min(default_n_stop(consts, N), 60))
            np.testing.assert_allclose(trace.closed_form, trace.L[:, 0],
                    atol=1e-12)

    def test_failure_recursion(self):
        dist = erlang3()
        consts = derived_constants(dist)
        N = 4
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            trace = iterate_rigorous(consts, dist, N, 0.3, n_stop=6)

        assert np.all(np.isfinite(trace.eps))
        assert np.all(np.isfinite(trace.sigma))

        base = math.exp(-math.log(N)**2/consts.C**2)
        assert base > 0
        grow = consts.C/trace.delta + 1
        for n in range(1, 7):
            assert trace.eps[n, 0] == pytest.approx(
                    base + grow*trace.sigma[n-1, -1], rel=1e-12)
            # later phases only accumulate failure probability
            assert np.all(np.diff(trace.eps[n]) > 0)
            assert np.all(np.diff(trace.sigma[n]) > 0)

    @pytest.mark.parametrize("N", [4, 10, 100])
    @pytest.mark.parametrize("name", ["erlang3", "coxian3", "coxian4"])
    def test_failure_growth_across_phases(self, name, N):
        dist = {
                "erlang3": erlang3,
                "coxian3": lambda: make_dist(3, [0.9, 0.9], [1, 1, 1]),
                "coxian4": coxian4,
                }[name]()
        consts = derived_constants(dist)
        M = consts.M
        n_stop = 6
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            trace = iterate_rigorous(consts, dist, N, 0.3, n_stop=n_stop)

        floor = math.exp(-consts.vbar**2*math.log(N)**2/consts.C**2)
        growth = (consts.C/(consts.vbar*trace.delta) + 1)**(M-1)

        for n in range(1, n_stop+1):
            eps = trace.eps[n]
            assert eps[-1] <= ((M-1)*floor + eps[0])*growth*(1 + 1e-12)
            # once eps_1 dominates the per-phase floor
            if eps[0] >= floor:
                assert eps[-1] <= M*eps[0]*growth*(1 + 1e-12)

        if floor > 0:
            assert trace.eps[-1, 0] >= floor

    def test_invalid(self):
        dist = coxian4()
        consts = derived_constants(dist)
        with pytest.raises(ValueError):
            iterate_rigorous(consts, dist, 1, 0.3)
        with pytest.raises(ValueError):
            iterate_rigorous(consts, dist, 100, 0)


class TestBounds:
    def test_interval_signs(self):
        dist = coxian4()
        consts = derived_constants(dist)
        N = 10**4
        interval = theorem1_interval(consts, N, 0.3)
        s_star = (1 - N**-0.3)*np.array(dist.v)

        assert np.all(interval.lower < s_star)
        assert np.all(interval.upper > s_star)
        np.testing.assert_allclose(interval.lower + interval.printed_lower,
                2*s_star)

    def test_waiting_bound_value(self):
        dist = coxian4()
        consts = derived_constants(dist, b=10)
        assert consts.mu_max == pytest.approx(1.875)
        assert waiting_bound_value(consts, 10**4, 0.3) == pytest.approx(
                0.401, abs=1e-3)

        report = theorem2_bound(consts, 10**4, 0.3, max_log2_N=8)
        assert report.bound == pytest.approx(0.401, abs=1e-3)
        assert not report.n_condition_ok
        assert report.min_N is None
        assert not report.slowly_vanishing

    def test_slowly_vanishing(self):
        consts = derived_constants(coxian4(), b=10)
        with pytest.warns(UserWarning):
            report = theorem2_bound(consts, 10**4, 0.46, max_log2_N=4)
        assert report.slowly_vanishing

    def test_waiting_bound_needs_buffer(self):
        consts = derived_constants(coxian4())
        with pytest.raises(ValueError):
            theorem2_bound(consts, 10**4, 0.3)
        with pytest.raises(ValueError):
            theorem2_bound(derived_constants(coxian4(), b=2), 10**4, 0.6)

    def test_condition_monotone_in_N(self):
        consts = derived_constants(coxian4())
        report = theorem1_condition(consts, 10**4, 0.3)
        assert not report.holds
        assert report.log_n == pytest.approx(math.log(10**4))
        assert report.upper_side == max(report.upper_terms.values())


if __name__ == "__main__":
    import sys

    if len(sys.argv) > 1:
        exec(sys.argv[1])
    else:
        from pytest import main

        main([__file__])
