import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from leakbeam.beamforming import BeamformingSolution, equal_powers, zf
from leakbeam.channel import ChannelRealization, SystemConfig, perfect_csi
from leakbeam.errors import ConfigurationError
from leakbeam.evaluation import (
    audit_constraints,
    average_over_trials,
    mean_and_halfwidth,
    per_ue_sinr,
    realized_leakage,
    run_trial,
    run_trials,
    summarize,
    trial_inputs,
    weighted_sum_rate,
)


def solution(W, tag="zf"):
    return BeamformingSolution.from_vectors(np.asarray(W, dtype=complex), tag)


class TestRates:
    def test_zero_beams_give_zero_rate(self):
        cfg = SystemConfig()
        ch, _ = trial_inputs(cfg, 0)
        assert weighted_sum_rate(ch, solution(np.zeros((4, 4))), cfg) == 0.0

    @given(st.floats(0.1, 100.0), st.floats(0.2, 3.0), st.floats(0.5, 2.0))
    def test_single_user_matched_filter(self, P, xi, alpha):
        cfg = SystemConfig(N=4, K=1, alpha=(alpha,), xi=(xi,), P_n=(P / 4,) * 4)
        h = np.array([[1.0, 1j, -0.5, 0.25]])
        ch = ChannelRealization(h=h, xi=np.array([xi]))
        A = float(np.sum(np.abs(h) ** 2))
        w = math.sqrt(P) * h[0].conj() / math.sqrt(A)
        expected = alpha * math.log2(1 + xi ** 2 * A * P / cfg.N0)
        assert weighted_sum_rate(ch, solution(w[:, None]), cfg) == pytest.approx(expected)

    @given(st.integers(0, 2 ** 20))
    def test_perfect_zf_direct_formula(self, seed):
        cfg = SystemConfig()
        ch, _ = trial_inputs(cfg, seed)
        csi = perfect_csi(ch)
        P = equal_powers(cfg)
        sol = zf(csi, P)
        # unit ZF columns of H^+ give |xi_k h_k w_k|^2 = xi_k^2 / ||H^+_{:,k}||^2
        Hp = np.linalg.pinv(ch.H)
        ref = np.sum(np.asarray(cfg.alpha) * np.log2(
            1 + P / (cfg.N0 * np.linalg.norm(Hp, axis=0) ** 2)))
        assert weighted_sum_rate(ch, sol, cfg) == pytest.approx(ref, rel=1e-9)

    def test_sinr_and_leakage_bookkeeping(self):
        cfg = SystemConfig(N=2, K=2, alpha=(1, 1), xi=(1, 2), P_n=(1, 1))
        ch = ChannelRealization(h=np.array([[1.0, 0.0], [1.0, 1.0]]), xi=np.array([1.0, 2.0]))
        W = np.array([[1.0, 0.0], [0.0, 1.0]])
        sol = solution(W)
        # gains |xi_k h_k w_j|^2: row 0 = (1, 0); row 1 = (4, 4)
        np.testing.assert_allclose(per_ue_sinr(ch, sol, 1.0), [1.0 / 1.0, 4.0 / 5.0])
        np.testing.assert_allclose(realized_leakage(ch, sol), [4.0, 0.0])

    def test_low_snr_rate_vanishes(self):
        cfg = SystemConfig().with_snr(-60.0)
        assert run_trial("zf", cfg, 0).weighted_sum_rate < 1e-4


class TestAudit:
    def test_feasible(self):
        cfg = SystemConfig()
        W = np.full((4, 4), 0.5 + 0j)
        rep = audit_constraints(solution(W, "zf-pa"), cfg)
        assert rep.passed and rep.max_antenna_violation < 0
        assert rep.summary().startswith("pass")

    def test_violation_is_reported(self):
        cfg = SystemConfig(P_n=(1.0,) * 4)
        W = np.zeros((4, 4), dtype=complex)
        W[0, 0] = 2.0      # 4 on antenna 0 against a budget of 1
        rep = audit_constraints(solution(W, "zf-pa"), cfg)
        assert not rep.passed
        assert rep.max_antenna_violation == pytest.approx(3.0)
        assert rep.summary().startswith("FAIL")
        # without per-antenna budgets only the total counts
        assert audit_constraints(solution(W, "zf"), cfg).passed

    def test_leakage_audit(self):
        cfg = SystemConfig()
        _, csi = trial_inputs(cfg, 0)
        from leakbeam.beamforming import build_statistics
        stats = build_statistics(csi)
        sol = zf(csi, equal_powers(cfg))
        rep = audit_constraints(sol, cfg, stats=stats, thresholds=np.zeros(4))
        assert not rep.passed and rep.leakage_violation > 0


class TestMonteCarlo:
    def test_halfwidth(self):
        assert mean_and_halfwidth([2.0, 2.0]) == (2.0, 0.0)
        m, hw = mean_and_halfwidth([1.0, 3.0])
        assert m == 2.0 and hw == pytest.approx(1.96 * math.sqrt(2) / math.sqrt(2))
        assert mean_and_halfwidth([1.0])[1] == math.inf

    def test_identical_trials_zero_width(self):
        cfg = SystemConfig()
        agg = average_over_trials("zf", cfg, 2, trials=[3, 3])
        assert agg.ci_halfwidth == 0.0 and agg.n_trials == 2

    def test_needs_two_trials(self):
        with pytest.raises(ConfigurationError):
            average_over_trials("zf", SystemConfig(), 1)

    def test_unknown_scheme(self):
        with pytest.raises(ConfigurationError):
            run_trial("mmse", SystemConfig(), 0)

    def test_trials_reproducible_and_order_free(self):
        cfg = SystemConfig(L_algo1=1, L_rand=50)
        a = [r.weighted_sum_rate for r in run_trials("malc-pa", cfg, [0, 1, 2])]
        b = [r.weighted_sum_rate for r in run_trials("malc-pa", cfg, [2, 1, 0])][::-1]
        assert a == b
        assert run_trial("malc-pa", cfg, 1).weighted_sum_rate == a[1]

    def test_workers_do_not_change_results(self):
        cfg = SystemConfig()
        a = run_trials("slnr", cfg, range(4), workers=1)
        b = run_trials("slnr", cfg, range(4), workers=2)
        assert [r.weighted_sum_rate for r in a] == [r.weighted_sum_rate for r in b]

    def test_summary_fields(self):
        cfg = SystemConfig(L_algo1=1, L_rand=50)
        res = run_trials("ralc-pa", cfg, range(3))
        agg = summarize("ralc-pa", cfg, res)
        assert agg.audit_failures == 0
        assert agg.mean_outer_iterations == 1.0 and agg.mean_gp_iterations >= 1
        assert agg.mean_rate == pytest.approx(np.mean([r.weighted_sum_rate for r in res]))

    def test_perfect_csi_helps_zero_forcing(self):
        cfg = SystemConfig()
        q = average_over_trials("zf", cfg, 30)
        p = average_over_trials("zf", cfg, 30, perfect=True)
        assert p.mean_rate > q.mean_rate
