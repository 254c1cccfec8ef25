"""
Beamforming schemes: zero-forcing (sum-power and per-antenna), SLNR and
average SLNR, leakage-controlled schemes (PLC, MALC, RALC) and the
alternating power/beam optimization with per-antenna budgets (MALC-PA,
RALC-PA).

Beamformers are stored as a power vector ``powers`` (K,) and a matrix
``directions`` (N, K) whose columns are unit-norm; ``W = directions *
sqrt(powers)``.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import ConfigurationError, SolverError
from .leakage import threshold_malc, threshold_ralc
from .numerics import pseudo_inverse
from .solvers import (
    DEFAULT_SETTINGS,
    GpProblem,
    rank_indicator,
    solve_block_log_sdp,
    solve_gp_power,
    solve_leakage_constrained,
    solve_leakage_constrained_pa,
    top_component,
)

SCHEMES = ("zf", "zf-pa", "slnr", "aslnr", "plc", "malc", "ralc", "malc-pa", "ralc-pa")
PA_SCHEMES = ("zf-pa", "malc-pa", "ralc-pa")

_POWER_FLOOR = 1e-9


@dataclass
class RobustStatistics:
    """Second-order statistics of the true channel given the feedback.

    ``U[k]`` is chosen so that the expected signal power of UE k from beam
    ``w`` is ``xi_sq[k] * A[k] * w^H U[k] w``; ``U_bar[k]`` collects the
    same for every other UE, so ``w^H U_bar[k] w`` is the expected leakage.
    """

    U: np.ndarray       # (K, N, N)
    U_bar: np.ndarray   # (K, N, N)
    eta: float
    A: np.ndarray
    xi_sq: np.ndarray

    @property
    def K(self):
        return self.U.shape[0]

    def signal_matrix(self, k):
        return self.xi_sq[k] * self.A[k] * self.U[k]


def build_statistics(csi):
    K, N = csi.K, csi.N
    eta = float(csi.eta)
    U = np.empty((K, N, N), dtype=complex)
    for k in range(K):
        outer = np.outer(csi.h_hat[k].conj(), csi.h_hat[k])
        if N > 1:
            U[k] = (1.0 - N * eta / (N - 1)) * outer + eta / (N - 1) * np.eye(N)
        else:
            U[k] = outer
    weighted = (csi.xi_sq * csi.cmi)[:, None, None] * U
    total = weighted.sum(axis=0)
    U_bar = total[None, :, :] - weighted
    return RobustStatistics(U=U, U_bar=U_bar, eta=eta, A=np.asarray(csi.cmi, dtype=float),
                            xi_sq=np.asarray(csi.xi_sq, dtype=float))


@dataclass
class BeamformingSolution:
    powers: np.ndarray          # (K,)
    directions: np.ndarray      # (N, K), unit-norm columns
    scheme_tag: str
    info: dict = field(default_factory=dict)

    @property
    def W(self):
        return self.directions * np.sqrt(np.maximum(self.powers, 0.0))[None, :]

    @property
    def K(self):
        return self.powers.shape[0]

    def antenna_power(self):
        return np.sum(np.abs(self.W) ** 2, axis=1)

    @classmethod
    def from_vectors(cls, W, scheme_tag, fallback_directions=None, info=None):
        """Split beamvectors (columns of W) into powers and unit directions.

        A zero column keeps the matching column of ``fallback_directions``
        (or the first basis vector) as its direction.
        """
        W = np.asarray(W, dtype=complex)
        N, K = W.shape
        powers = np.sum(np.abs(W) ** 2, axis=0)
        directions = np.empty_like(W)
        for k in range(K):
            norm = math.sqrt(powers[k])
            if norm > 0:
                directions[:, k] = W[:, k] / norm
            elif fallback_directions is not None:
                d = fallback_directions[:, k]
                directions[:, k] = d / np.linalg.norm(d)
            else:
                directions[:, k] = np.eye(N)[:, 0]
        return cls(powers=powers, directions=directions, scheme_tag=scheme_tag,
                   info=dict(info or {}))


def equal_powers(config):
    return np.full(config.K, config.P / config.K)


def _top_generalized(T, S):
    """Unit eigenvector of the largest eigenvalue of S^{-1} T (S positive definite)."""
    w, V = sla.eigh(T, S)
    v = V[:, -1]
    return v / np.linalg.norm(v)


# ---------------------------------------------------------------------------
# Non-robust schemes
# ---------------------------------------------------------------------------

def zf_directions(csi):
    pinv = pseudo_inverse(csi.H_check)          # (N, K)
    return pinv / np.linalg.norm(pinv, axis=0, keepdims=True)


def zf(csi, powers):
    """Zero-forcing directions from the pseudo-inverse of the estimated channel."""
    return BeamformingSolution(powers=np.asarray(powers, dtype=float).copy(),
                               directions=zf_directions(csi), scheme_tag="zf")


def zf_pa(csi, config, settings=DEFAULT_SETTINGS):
    """Zero-forcing with per-antenna budgets, maximizing the weighted sum-rate.

    Each UE's covariance is confined to the null space of the other UEs'
    estimated channels; the rank-one beamvector is the scaled leading
    eigenvector of the optimal covariance.
    """
    K, N = csi.K, csi.N
    hc = csi.h_check
    outers = [np.outer(hc[k].conj(), hc[k]) for k in range(K)]
    gains = [csi.xi_sq[k] * outers[k] / config.N0 for k in range(K)]
    constraints = []
    for k in range(K):
        for j in range(K):
            if j != k:
                constraints.append(({k: outers[j]}, 0.0))
    for n in range(N):
        E = np.zeros((N, N), dtype=complex)
        E[n, n] = 1.0
        constraints.append(({k: E for k in range(K)}, float(config.P_n[n])))
    Qs, gap = solve_block_log_sdp(gains, np.asarray(config.alpha), 1.0, constraints, N,
                                  settings)
    W = np.column_stack([top_component(Q) for Q in Qs])
    ranks = [rank_indicator(Q) for Q in Qs]
    if max(ranks) > 1e-4:
        warnings.warn(f"ZF-PA covariance rank indicator {max(ranks):.2e} exceeds 1e-4",
                      RuntimeWarning, stacklevel=2)
    return BeamformingSolution.from_vectors(
        W, "zf-pa", fallback_directions=zf_directions(csi),
        info={"rank_indicator": max(ranks), "gap_bound": gap})


def slnr(csi, powers, config):
    """Per-UE SLNR maximizing directions on the estimated channels."""
    K, N = csi.K, csi.N
    Hc = csi.H_check
    powers = np.asarray(powers, dtype=float)
    D = np.empty((N, K), dtype=complex)
    for k in range(K):
        others = np.delete(Hc, k, axis=0)
        S = config.N0 / powers[k] * np.eye(N) + others.conj().T @ others
        T = np.outer(Hc[k].conj(), Hc[k])
        D[:, k] = _top_generalized(T, S)
    return BeamformingSolution(powers=powers.copy(), directions=D, scheme_tag="slnr")


def aslnr(stats, powers, config):
    """Directions maximizing the ratio of expected signal to expected leakage plus noise."""
    K = stats.K
    N = stats.U.shape[1]
    powers = np.asarray(powers, dtype=float)
    D = np.empty((N, K), dtype=complex)
    for k in range(K):
        S = config.N0 / powers[k] * np.eye(N) + stats.U_bar[k]
        D[:, k] = _top_generalized(stats.signal_matrix(k), S)
    return BeamformingSolution(powers=powers.copy(), directions=D, scheme_tag="aslnr")


# ---------------------------------------------------------------------------
# Leakage-controlled schemes
# ---------------------------------------------------------------------------

def _scaled_fallback(direction, U_bar, gamma, P_tilde, headroom=None):
    """Largest multiple of ``direction`` meeting the leakage, power and antenna caps."""
    d = direction / np.linalg.norm(direction)
    p = P_tilde
    leak = float(np.real(d.conj() @ U_bar @ d))
    if leak > 0:
        p = min(p, max(gamma, 0.0) / leak)
    if headroom is not None:
        mag = np.abs(d) ** 2
        pos = mag > 0
        if pos.any():
            p = min(p, float(np.min(np.maximum(headroom[pos], 0.0) / mag[pos])))
    return math.sqrt(max(p, 0.0)) * d


def leakage_controlled(stats, powers, gammas, scheme_tag="lc", fallback=None,
                       settings=DEFAULT_SETTINGS):
    """Per-UE maximization of expected signal under an expected-leakage cap."""
    K = stats.K
    N = stats.U.shape[1]
    powers = np.asarray(powers, dtype=float)
    W = np.zeros((N, K), dtype=complex)
    flags = []
    for k in range(K):
        try:
            W[:, k] = solve_leakage_constrained(stats.U[k], stats.U_bar[k], float(gammas[k]),
                                                float(powers[k]), settings)
        except SolverError as exc:
            if fallback is None:
                raise
            warnings.warn(f"UE {k}: leakage-constrained solve failed ({exc}); "
                          "using the zero-forcing direction", RuntimeWarning, stacklevel=2)
            W[:, k] = _scaled_fallback(fallback[:, k], stats.U_bar[k], gammas[k], powers[k])
            flags.append(k)
    return BeamformingSolution.from_vectors(
        W, scheme_tag, fallback_directions=fallback,
        info={"thresholds": np.asarray(gammas, dtype=float), "fallback_ues": flags})


def thresholds(kind, P_tilde, csi, config):
    """Leakage caps for every UE at per-UE powers ``P_tilde``."""
    K = csi.K
    if kind == "malc":
        return np.array([threshold_malc(P_tilde[k], csi, k) for k in range(K)])
    if kind == "ralc":
        return np.array([threshold_ralc(P_tilde[k], csi, k, config.delta,
                                        config.allow_low_delta) for k in range(K)])
    if kind == "plc":
        return np.full(K, config.plc_p * config.plc_gamma)
    raise ConfigurationError(f"unknown threshold kind {kind!r}")


# ---------------------------------------------------------------------------
# Alternating power / beam optimization with per-antenna budgets
# ---------------------------------------------------------------------------

@dataclass
class AlgoState:
    l: int
    powers: np.ndarray
    directions: np.ndarray
    perf_metric: float
    best_solution: BeamformingSolution
    perf_trace: list = field(default_factory=list)   # best-so-far after each step
    step_metrics: list = field(default_factory=list) # surrogate of each step's output
    gp_iterations: list = field(default_factory=list)
    pd_traces: list = field(default_factory=list)
    randomized: int = 0


def coupling_matrix(stats, directions):
    """lam[j, k] = xi_k^2 A_k w_j^H U_k w_j for unit directions w_j."""
    D = directions
    K = D.shape[1]
    lam = np.empty((K, K))
    for k in range(K):
        quad = np.einsum("nj,nm,mj->j", D.conj(), stats.U[k], D).real
        lam[:, k] = stats.xi_sq[k] * stats.A[k] * quad
    return lam


def surrogate_rate(stats, powers, directions, alpha, N0):
    """Weighted sum of log2(1 + E{S_k} / (E{I_k} + N0)) from the statistics."""
    lam = coupling_matrix(stats, directions)
    rx = powers @ lam
    sig = powers * np.diag(lam)
    return float(np.sum(np.asarray(alpha) * np.log2(1.0 + sig / (rx - sig + N0))))


def algo1(csi, config, kind, rng, settings=DEFAULT_SETTINGS, init=None):
    """Alternate GP power updates and sequential per-antenna-capped beam updates.

    Starts from the ZF-PA beamformers (or ``init``), scores that start, runs
    ``config.L_algo1`` outer iterations and returns the best solution seen
    together with the iteration record.
    """
    if kind not in ("malc", "ralc"):
        raise ConfigurationError(f"kind must be 'malc' or 'ralc', got {kind!r}")
    stats = build_statistics(csi)
    K = csi.K
    alpha = np.asarray(config.alpha, dtype=float)
    P_n = np.asarray(config.P_n, dtype=float)
    start = init if init is not None else zf_pa(csi, config, settings)
    powers = start.powers.copy()
    directions = start.directions.copy()
    metric = surrogate_rate(stats, powers, directions, alpha, config.N0)
    best = BeamformingSolution(powers.copy(), directions.copy(), f"{kind}-pa")
    state = AlgoState(l=0, powers=powers, directions=directions, perf_metric=metric,
                      best_solution=best, perf_trace=[metric], step_metrics=[metric])
    tag = f"{kind}-pa"
    best_gammas = None      # the starting point carries no leakage caps
    for l in range(config.L_algo1):
        lam = coupling_matrix(stats, directions)
        gp_problem = GpProblem(
            lam=lam, N0=config.N0, alpha=alpha,
            gamma=thresholds(kind, np.maximum(powers, _POWER_FLOOR), csi, config),
            antenna_rows=np.abs(directions) ** 2, P_n=P_n)
        gp = solve_gp_power(gp_problem, np.maximum(powers, _POWER_FLOOR), config.epsilon,
                            config.gp_max_iter, settings)
        state.gp_iterations.append(gp.iterations)
        state.pd_traces.append(gp.pd_trace)
        new_powers = gp.powers
        order = np.argsort(-new_powers, kind="stable")
        gammas = thresholds(kind, new_powers, csi, config)
        headroom = P_n.copy()
        W = np.zeros_like(directions)
        for k in order:
            try:
                w, info = solve_leakage_constrained_pa(
                    stats.U[k], stats.U_bar[k], gammas[k], new_powers[k], headroom,
                    config.L_rand, rng, settings, full_output=True)
                state.randomized += int(info["randomized"])
            except SolverError as exc:
                warnings.warn(f"UE {k}: beam update failed ({exc}); keeping the previous "
                              "direction", RuntimeWarning, stacklevel=2)
                w = _scaled_fallback(directions[:, k], stats.U_bar[k], gammas[k],
                                     new_powers[k], headroom)
            W[:, k] = w
            headroom = np.maximum(headroom - np.abs(w) ** 2, 0.0)
        step = BeamformingSolution.from_vectors(W, tag, fallback_directions=directions)
        powers, directions = step.powers, step.directions
        metric = surrogate_rate(stats, powers, directions, alpha, config.N0)
        state.step_metrics.append(metric)
        if metric > state.perf_metric:
            state.perf_metric = metric
            state.best_solution = BeamformingSolution(powers.copy(), directions.copy(), tag)
            best_gammas = gammas
        state.perf_trace.append(state.perf_metric)
        state.l = l + 1
        state.powers, state.directions = powers, directions
    sol = state.best_solution
    sol.info = {"perf_trace": list(state.perf_trace), "step_metrics": list(state.step_metrics),
                "gp_iterations": list(state.gp_iterations), "pd_traces": state.pd_traces,
                "outer_iterations": state.l, "randomized": state.randomized}
    if best_gammas is not None:
        sol.info["thresholds"] = np.asarray(best_gammas, dtype=float)
    return sol


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

def run_scheme(name, csi, config, rng=None, settings=DEFAULT_SETTINGS):
    """Build the beamformer of scheme ``name`` for one channel feedback."""
    name = name.lower()
    if name not in SCHEMES:
        raise ConfigurationError(f"unknown scheme {name!r}; valid: {', '.join(SCHEMES)}")
    if name == "zf":
        return zf(csi, equal_powers(config))
    if name == "zf-pa":
        return zf_pa(csi, config, settings)
    if name == "slnr":
        return slnr(csi, equal_powers(config), config)
    stats = build_statistics(csi)
    if name == "aslnr":
        return aslnr(stats, equal_powers(config), config)
    if name in ("plc", "malc", "ralc"):
        P = equal_powers(config)
        return leakage_controlled(stats, P, thresholds(name, P, csi, config), name,
                                  fallback=zf_directions(csi), settings=settings)
    if rng is None:
        raise ValueError(f"scheme {name!r} needs a random generator")
    return algo1(csi, config, name[:4], rng, settings)
