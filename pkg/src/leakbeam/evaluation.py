"""
Ground-truth performance of a beamformer: weighted sum-rate on the true
channels, realized leakage, constraint audits and Monte Carlo averages.
"""

import functools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .beamforming import PA_SCHEMES, SCHEMES, build_statistics, run_scheme, surrogate_rate
from .channel import (
    STREAM_CHANNEL,
    STREAM_SCHEME,
    generate_channel,
    make_rng,
    perfect_csi,
    quantize_channel,
)
from .errors import ConfigurationError

AUDIT_RTOL = 1e-7


def _gains(channel, solution):
    """|xi_k h_k w_j|^2 as a (K, K) matrix, row k = receiving UE."""
    H = np.asarray(channel.xi)[:, None] * channel.h
    return np.abs(H @ solution.W) ** 2


def per_ue_sinr(channel, solution, N0):
    G = _gains(channel, solution)
    sig = np.diag(G)
    interf = G.sum(axis=1) - sig
    return sig / (interf + N0)


def weighted_sum_rate(channel, solution, config):
    """sum_k alpha_k log2(1 + SINR_k) evaluated on the true channels."""
    sinr = per_ue_sinr(channel, solution, config.N0)
    return float(np.sum(np.asarray(config.alpha) * np.log2(1.0 + sinr)))


def realized_leakage(channel, solution):
    """Power each UE's beam deposits on all other UEs (true channels)."""
    G = _gains(channel, solution)
    return G.sum(axis=0) - np.diag(G)


@dataclass
class AuditReport:
    per_antenna_power: np.ndarray
    max_antenna_violation: float      # relative to P_n; <= 0 when satisfied
    sum_power: float
    sum_power_violation: float        # relative to P
    leakage_violation: float = None   # relative to each threshold
    passed: bool = True

    def summary(self):
        parts = [f"antenna={self.max_antenna_violation:.3e}",
                 f"sum={self.sum_power_violation:.3e}"]
        if self.leakage_violation is not None:
            parts.append(f"leakage={self.leakage_violation:.3e}")
        return ("pass " if self.passed else "FAIL ") + " ".join(parts)


def audit_constraints(solution, config, per_antenna=None, stats=None, thresholds=None,
                      rtol=AUDIT_RTOL):
    """Check per-antenna budgets, total power and (optionally) expected leakage.

    ``per_antenna`` defaults to whether the scheme carries per-antenna
    budgets. Leakage is audited when ``stats`` and ``thresholds`` are given
    (or when the solution carries its own thresholds).
    """
    if per_antenna is None:
        per_antenna = solution.scheme_tag in PA_SCHEMES
    P_n = np.asarray(config.P_n, dtype=float)
    ant = solution.antenna_power()
    ant_viol = float(np.max((ant - P_n) / P_n))
    total = float(np.sum(solution.powers))
    sum_viol = (total - config.P) / config.P
    if thresholds is None:
        thresholds = solution.info.get("thresholds")
    leak_viol = None
    if stats is not None and thresholds is not None:
        W = solution.W
        leak = np.einsum("nk,knm,mk->k", W.conj(), stats.U_bar, W).real
        thr = np.asarray(thresholds, dtype=float)
        leak_viol = float(np.max((leak - thr) / np.maximum(thr, 1e-300)))
    passed = sum_viol <= rtol
    if per_antenna:
        passed = passed and ant_viol <= rtol
    if leak_viol is not None:
        passed = passed and leak_viol <= rtol
    return AuditReport(per_antenna_power=ant, max_antenna_violation=ant_viol, sum_power=total,
                       sum_power_violation=sum_viol, leakage_violation=leak_viol,
                       passed=bool(passed))


@dataclass
class TrialResult:
    weighted_sum_rate: float
    per_ue_sinr: np.ndarray
    realized_leakage: np.ndarray
    per_antenna_power: np.ndarray
    scheme_tag: str
    converged_iterations: dict = field(default_factory=dict)
    surrogate: float = float("nan")
    audit: AuditReport = None
    info: dict = field(default_factory=dict)


def trial_inputs(config, trial, perfect=False):
    """Channel and feedback of trial ``trial``; shared by every scheme.

    With ``perfect`` the base station sees the exact channel instead of
    its quantized feedback.
    """
    channel = generate_channel(config, make_rng(config.seed, STREAM_CHANNEL, trial))
    csi = perfect_csi(channel) if perfect else quantize_channel(channel, config, trial)
    return channel, csi


def run_trial(scheme, config, trial, perfect=False):
    """Build scheme ``scheme`` on trial ``trial`` and measure it."""
    if scheme not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {scheme!r}; valid: {', '.join(SCHEMES)}")
    channel, csi = trial_inputs(config, trial, perfect)
    rng = make_rng(config.seed, STREAM_SCHEME, trial, SCHEMES.index(scheme))
    sol = run_scheme(scheme, csi, config, rng)
    stats = build_statistics(csi)
    audit = audit_constraints(sol, config, stats=stats)
    gp_its = sol.info.get("gp_iterations", [])
    return TrialResult(
        weighted_sum_rate=weighted_sum_rate(channel, sol, config),
        per_ue_sinr=per_ue_sinr(channel, sol, config.N0),
        realized_leakage=realized_leakage(channel, sol),
        per_antenna_power=sol.antenna_power(),
        scheme_tag=sol.scheme_tag,
        converged_iterations={"gp": float(np.mean(gp_its)) if gp_its else 0.0,
                              "outer": sol.info.get("outer_iterations", 0)},
        surrogate=surrogate_rate(stats, sol.powers, sol.directions, config.alpha, config.N0),
        audit=audit,
        info=sol.info,
    )


def mean_and_halfwidth(values):
    """Sample mean and 95% normal-approximation half-width."""
    x = np.asarray(values, dtype=float)
    n = x.size
    mean = float(np.mean(x))
    if n < 2:
        return mean, float("inf")
    return mean, float(1.96 * np.std(x, ddof=1) / math.sqrt(n))


@dataclass
class Aggregate:
    scheme: str
    snr_db: float
    n_trials: int
    mean_rate: float
    ci_halfwidth: float
    mean_gp_iterations: float
    mean_outer_iterations: float
    mean_surrogate: float
    audit_failures: int
    rates: np.ndarray = field(default=None, repr=False)
    results: list = field(default=None, repr=False)


def run_trials(scheme, config, trials, workers=1, perfect=False):
    """Run several trials, optionally on a process pool; order is preserved."""
    trials = list(trials)
    if workers <= 1 or len(trials) < 2:
        return [run_trial(scheme, config, t, perfect) for t in trials]
    job = functools.partial(_run_trial_task, scheme, config, perfect)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(job, trials))


def _run_trial_task(scheme, config, perfect, trial):
    return run_trial(scheme, config, trial, perfect)


def summarize(scheme, config, results):
    """Aggregate already computed trials (see :func:`average_over_trials`)."""
    rates = np.array([r.weighted_sum_rate for r in results])
    mean, hw = mean_and_halfwidth(rates)
    return Aggregate(
        scheme=scheme, snr_db=config.snr_db, n_trials=len(results), mean_rate=mean,
        ci_halfwidth=hw,
        mean_gp_iterations=float(np.mean([r.converged_iterations["gp"] for r in results])),
        mean_outer_iterations=float(np.mean([r.converged_iterations["outer"] for r in results])),
        mean_surrogate=float(np.mean([r.surrogate for r in results])),
        audit_failures=int(sum(not r.audit.passed for r in results)),
        rates=rates,
        results=results,
    )


def average_over_trials(scheme, config, n_trials, first_trial=0, trials=None, workers=1,
                        perfect=False):
    """Mean weighted sum-rate over ``n_trials`` channel draws with a 95% CI.

    Trial ``t`` always uses the streams keyed by ``(config.seed, t)``, so the
    result is reproducible and independent of evaluation order and of the
    number of workers.
    """
    if trials is None:
        if n_trials < 2:
            raise ConfigurationError("need at least two trials for a confidence interval")
        trials = range(first_trial, first_trial + n_trials)
    return summarize(scheme, config, run_trials(scheme, config, trials, workers, perfect))
