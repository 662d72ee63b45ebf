"""Hazard likelihood terms, debiased competing-events losses, auxiliaries."""

import math

import numpy as np
import pytest

from survformer import autodiff as ad
from survformer import losses as L
from survformer.data import TimeGrid


def grid123():
    return TimeGrid(np.array([1.0, 2.0, 3.0]))


class TestPchLoss:
    def test_censored_with_vanishing_hazard_vanishes(self):
        loss = L.pch_loss(np.full(3, 1e-12), 2.5, 0, grid123())
        assert 0.0 <= loss < 1e-10

    def test_event_first_bin_full_fraction(self):
        # t at the first cut: kappa=1, rho=1, hazard 1 -> -log(1) + 1 = 1
        grid = TimeGrid(np.array([2.0]))
        assert L.pch_loss(np.array([1.0]), 2.0, 1, grid) == pytest.approx(1.0, rel=1e-12)

    def test_censored_third_bin_half_fraction(self):
        # rho = 0.5 in bin 3, hazard 2 everywhere: 2*0.5 + (2 + 2) = 5
        loss = L.pch_loss(np.full(3, 2.0), 2.5, 0, grid123())
        assert loss == pytest.approx(5.0, rel=1e-12)

    def test_nonpositive_hazard_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            L.pch_loss(np.array([1.0, 0.0, 1.0]), 2.5, 0, grid123())

    def test_bad_event_indicator_rejected(self):
        with pytest.raises(ValueError, match="indicator"):
            L.pch_loss(np.ones(3), 1.0, 2, grid123())

    def test_gradient_in_current_bin_is_rho_minus_e_over_hazard(self):
        grid = grid123()
        h = 1e-6
        for e in (0, 1):
            hazards = np.array([0.5, 1.7, 0.9])
            t = 2.5  # bin 3, rho 0.5
            up = L.pch_loss(hazards + np.array([0, 0, h]), t, e, grid)
            dn = L.pch_loss(hazards - np.array([0, 0, h]), t, e, grid)
            fd = (up - dn) / (2 * h)
            expected = 0.5 - e / hazards[2]
            assert fd == pytest.approx(expected, rel=1e-6)

    def test_censored_always_nonnegative(self):
        rng = np.random.default_rng(0)
        grid = grid123()
        for _ in range(200):
            hazards = rng.uniform(1e-6, 5.0, size=3)
            t = rng.uniform(0.0, 3.0)
            assert L.pch_loss(hazards, t, 0, grid) >= 0.0


def hand_naive(losses_matrix, events):
    """Direct enumeration of the observed-event average."""
    total = 0.0
    count = 0
    for i, e in enumerate(events):
        for k in range(losses_matrix.shape[1]):
            if e == k + 1:
                total += losses_matrix[i, k]
                count += 1
    return total / count


class TestNaiveCompetingLoss:
    def test_single_record_single_indicator(self):
        grid = grid123()
        hazards = np.array([[[0.5, 0.5, 0.5], [2.0, 2.0, 2.0]]])  # (1, 2, 3)
        got = L.naive_competing_loss(hazards, np.array([1.5]), np.array([1]), grid)
        want = L.pch_loss(hazards[0, 0], 1.5, 1, grid)
        assert got == pytest.approx(want, rel=1e-12)

    def test_duplicated_records_leave_ratio_unchanged(self):
        grid = grid123()
        rng = np.random.default_rng(1)
        hazards = rng.uniform(0.1, 2.0, size=(1, 2, 3))
        t = np.array([1.2])
        e = np.array([2])
        single = L.naive_competing_loss(hazards, t, e, grid)
        tripled = L.naive_competing_loss(
            np.repeat(hazards, 3, axis=0), np.repeat(t, 3), np.repeat(e, 3), grid
        )
        assert tripled == pytest.approx(single, rel=1e-12)

    def test_three_records_match_hand_enumeration(self):
        grid = grid123()
        hazards = np.array([
            [[0.2, 0.4, 0.6], [1.0, 1.0, 1.0]],
            [[0.5, 0.5, 0.5], [0.3, 0.9, 2.7]],
            [[2.0, 1.0, 0.5], [0.7, 0.7, 0.7]],
        ])
        t = np.array([0.5, 1.5, 3.0])
        e = np.array([1, 2, 1])
        matrix = L.event_loss_matrix(hazards, t, grid)
        for i in range(3):
            for k in range(2):
                want = L.pch_loss(hazards[i, k], t[i], 1, grid)
                assert matrix[i, k] == pytest.approx(want, rel=1e-12)
        got = L.naive_competing_loss(hazards, t, e, grid)
        assert got == pytest.approx(hand_naive(matrix, e), rel=1e-12)

    def test_all_censored_batch_rejected(self):
        grid = grid123()
        with pytest.raises(ValueError, match="no observed events"):
            L.naive_competing_loss(np.ones((2, 2, 3)), np.array([1.0, 2.0]), np.array([0, 0]), grid)


class TestIpsLoss:
    def test_unit_propensities_reduce_to_scaled_naive(self):
        grid = grid123()
        rng = np.random.default_rng(2)
        hazards = rng.uniform(0.1, 2.0, size=(5, 2, 3))
        t = rng.uniform(0.2, 3.0, size=5)
        e = np.array([1, 2, 0, 1, 2])
        pi = np.ones((5, 2))
        got = L.ips_loss(hazards, t, e, pi, grid)
        naive = L.naive_competing_loss(hazards, t, e, grid)
        n_events = int(np.sum(e > 0))
        assert got == pytest.approx(naive * n_events / (5 * 2), rel=1e-12)

    def test_uniform_propensity_proportionality(self):
        grid = grid123()
        rng = np.random.default_rng(3)
        hazards = rng.uniform(0.1, 2.0, size=(4, 2, 3))
        t = rng.uniform(0.2, 3.0, size=4)
        e = np.array([1, 1, 2, 0])
        c = 0.4
        got = L.ips_loss(hazards, t, e, np.full((4, 2), c), grid)
        naive = L.naive_competing_loss(hazards, t, e, grid)
        n_events = int(np.sum(e > 0))
        assert got == pytest.approx(naive * n_events / (4 * 2 * c), rel=1e-12)

    def test_half_propensity_doubles_contribution(self):
        grid = grid123()
        hazards = np.array([[[0.5, 0.5, 0.5], [1.0, 1.0, 1.0]]])
        t = np.array([1.5])
        e = np.array([1])
        ell = L.pch_loss(hazards[0, 0], 1.5, 1, grid)
        got = L.ips_loss(hazards, t, e, np.array([[0.5, 0.5]]), grid)
        assert got == pytest.approx(2.0 * ell / (1 * 2), rel=1e-12)

    def test_censored_records_contribute_nothing(self):
        grid = grid123()
        rng = np.random.default_rng(4)
        hazards = rng.uniform(0.1, 2.0, size=(3, 2, 3))
        t = np.array([1.0, 2.0, 2.9])
        base = L.ips_loss(hazards[:1], t[:1], np.array([1]), np.full((1, 2), 0.5), grid)
        with_censored = L.ips_loss(
            hazards, t, np.array([1, 0, 0]), np.full((3, 2), 0.5), grid
        )
        assert with_censored == pytest.approx(base / 3.0, rel=1e-12)

    def test_nonpositive_propensity_rejected(self):
        grid = grid123()
        with pytest.raises(ValueError, match="positive"):
            L.ips_loss(np.ones((1, 2, 3)), np.array([1.0]), np.array([1]),
                       np.array([[0.0, 1.0]]), grid)

    def test_below_floor_is_clipped_not_rejected(self):
        grid = grid123()
        hazards = np.ones((1, 2, 3))
        t = np.array([1.5])
        e = np.array([1])
        got = L.ips_loss(hazards, t, e, np.array([[0.01, 0.9]]), grid, floor=0.05)
        want = L.ips_loss(hazards, t, e, np.array([[0.05, 0.9]]), grid, floor=0.05)
        assert got == want

    def test_monte_carlo_mean_recovers_oracle_risk(self):
        """Compact unbiasedness check; the acceptance suite runs the full one."""
        grid = grid123()
        rng = np.random.default_rng(5)
        n = 40
        hazards = rng.uniform(0.2, 2.0, size=(n, 2, 3))
        t = rng.uniform(0.2, 3.0, size=n)
        pi = rng.uniform(0.15, 0.85, size=(n, 1))
        pi = np.concatenate([pi, 1.0 - pi], axis=1)
        matrix = L.event_loss_matrix(hazards, t, grid)
        oracle = matrix.sum() / (n * 2)
        draws = 4000
        total = 0.0
        for _ in range(draws):
            e = 1 + (rng.uniform(size=n) > pi[:, 0]).astype(int)
            total += L.ips_loss(hazards, t, e, pi, grid, floor=1e-9)
        assert total / draws == pytest.approx(oracle, rel=0.02)


class TestAuxiliaryLosses:
    def test_uninformative_prediction_costs_log_two(self):
        assert L.mp_loss(np.full(8, 0.5), np.array([1, 0, 1, 0, 1, 0, 1, 0])) == pytest.approx(
            math.log(2.0), rel=1e-12
        )

    def test_confident_correct_predictions_vanish(self):
        y = np.array([1 - 1e-12, 1e-12])
        d = np.array([1.0, 0.0])
        assert L.mp_loss(y, d) < 1e-10

    def test_hand_value(self):
        assert L.mp_loss(np.array([0.8]), np.array([1.0])) == pytest.approx(
            -math.log(0.8), rel=1e-12
        )
        assert -math.log(0.8) == pytest.approx(0.2231, abs=1e-4)

    def test_mp_rejects_boundary_predictions(self):
        with pytest.raises(ValueError, match="strictly"):
            L.mp_loss(np.array([1.0]), np.array([1.0]))

    def test_ls_exact_prediction_is_zero(self):
        assert L.ls_loss(np.array([3.0, 4.0]), np.array([3.0, 4.0])) == 0.0

    def test_ls_squares_residual(self):
        assert L.ls_loss(np.array([5.0]), np.array([2.0])) == 9.0

    def test_ls_mean_of_squares(self):
        assert L.ls_loss(np.array([1.0, -1.0]), np.array([0.0, 0.0])) == 1.0


class TestTotalLoss:
    def test_zero_gammas_leave_survival_term(self):
        sched = L.AnnealSchedule(initial=(0.0, 0.0), mode="constant")
        bd = L.total_loss(1.7, 0.4, 0.9, sched, 0)
        assert bd.total == 1.7

    def test_initial_gammas_are_one(self):
        sched = L.AnnealSchedule(horizon=10)
        assert sched.gammas(0) == (1.0, 1.0)

    def test_linear_schedule_hits_zero_at_horizon(self):
        sched = L.AnnealSchedule(horizon=10)
        assert sched.gammas(10) == (0.0, 0.0)
        assert sched.gammas(15) == (0.0, 0.0)

    def test_gammas_nonincreasing_and_nonnegative(self):
        sched = L.AnnealSchedule(horizon=7)
        values = [sched.gammas(e) for e in range(12)]
        for (a1, a2), (b1, b2) in zip(values, values[1:]):
            assert b1 <= a1 and b2 <= a2
            assert b1 >= 0 and b2 >= 0

    def test_decomposition_identity(self):
        rng = np.random.default_rng(6)
        sched = L.AnnealSchedule(horizon=9)
        for epoch in range(12):
            s, m, l = rng.uniform(0.1, 3.0, size=3)
            bd = L.total_loss(s, m, l, sched, epoch)
            assert abs(bd.total - (bd.survival + bd.gamma1 * bd.mp + bd.gamma2 * bd.ls)) < 1e-10


class TestTapeBuilders:
    def test_tape_survival_matches_numeric_assembly(self):
        """IPS indicator part plus censored terms, cross-checked in numpy."""
        grid = grid123()
        rng = np.random.default_rng(7)
        n, K = 6, 2
        raw = rng.standard_normal((n, K, 3))
        hazards = np.log1p(np.exp(raw))
        t = rng.uniform(0.2, 3.0, size=n)
        e = np.array([1, 2, 0, 1, 0, 2])
        pi = rng.uniform(0.2, 0.9, size=(n, K))
        tensors = [ad.Tensor(hazards[:, k, :], requires_grad=True) for k in range(K)]
        got = L.competing_survival_loss(tensors, grid, t, e, propensities=pi)

        event_m = L.event_loss_matrix(hazards, t, grid)
        cens_m = L.censored_loss_matrix(hazards, t, grid)
        mask = e[:, None] == np.arange(1, K + 1)[None, :]
        want = (event_m[mask] / pi[mask]).sum() + cens_m[~mask].sum()
        want /= n * K
        assert float(got.data) == pytest.approx(want, rel=1e-12)

    def test_single_event_tape_equals_batch_mean_pch(self):
        grid = grid123()
        rng = np.random.default_rng(8)
        n = 5
        hazards = rng.uniform(0.1, 2.0, size=(n, 1, 3))
        t = rng.uniform(0.2, 3.0, size=n)
        e = np.array([1, 0, 1, 0, 1])
        tensors = [ad.Tensor(hazards[:, 0, :], requires_grad=True)]
        got = float(L.competing_survival_loss(tensors, grid, t, e).data)
        want = np.mean([L.pch_loss(hazards[i, 0], t[i], int(e[i]), grid) for i in range(n)])
        assert got == pytest.approx(want, rel=1e-12)

    def test_tape_gradients_match_finite_differences(self):
        from oracles import assert_grads_match, fd_gradients

        grid = grid123()
        rng = np.random.default_rng(9)
        n, K = 4, 2
        hazards = rng.uniform(0.3, 2.0, size=(n, K, 3))
        t = rng.uniform(0.2, 3.0, size=n)
        e = np.array([1, 2, 0, 1])
        pi = rng.uniform(0.3, 0.9, size=(n, K))
        tensors = [ad.Tensor(hazards[:, k, :], requires_grad=True) for k in range(K)]

        def build():
            return L.competing_survival_loss(tensors, grid, t, e, propensities=pi)

        ad.backward(build())
        analytic = [p.grad for p in tensors]
        fd = fd_gradients(lambda: float(build().data), tensors)
        assert_grads_match(analytic, fd)

    def test_mp_ls_tensor_values_match_numeric(self):
        rng = np.random.default_rng(10)
        y = rng.uniform(0.05, 0.95, size=7)
        d = (rng.uniform(size=7) > 0.5).astype(float)
        got = float(L.mp_loss_tensor(ad.Tensor(y), d).data)
        assert got == pytest.approx(L.mp_loss(y, d), rel=1e-12)
        pred = rng.standard_normal(7)
        obs = rng.standard_normal(7)
        got = float(L.ls_loss_tensor(ad.Tensor(pred), obs).data)
        assert got == pytest.approx(L.ls_loss(pred, obs), rel=1e-12)

    def test_total_tensor_breakdown_identity(self):
        sched = L.AnnealSchedule(horizon=4)
        s = ad.Tensor(np.array(1.5), requires_grad=True)
        m = ad.Tensor(np.array(0.3), requires_grad=True)
        l = ad.Tensor(np.array(2.0), requires_grad=True)
        total, bd = L.total_loss_tensor(s, m, l, sched, 1)
        assert abs(bd.total - (bd.survival + bd.gamma1 * bd.mp + bd.gamma2 * bd.ls)) < 1e-10
        assert float(total.data) == bd.total
