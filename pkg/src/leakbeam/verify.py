"""
Acceptance checks, runnable as ``leakbeam verify`` and from the test suite.

Each check returns a :class:`CheckResult` with a one-line verdict. The
``full`` scale uses the sample and trial counts the checks are specified
at; the quick scale shrinks them for a fast smoke pass, so its verdicts on
the statistical checks are indicative only.
"""

import hashlib
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, stats

from .beamforming import build_statistics, thresholds
from .channel import (
    STREAM_SAMPLER,
    CmiMode,
    SystemConfig,
    eta,
    make_rng,
    sample_true_direction,
    sample_z,
)
from .evaluation import run_trials, summarize, trial_inputs
from .harness import build_spec, render, run
from .leakage import cdf_D, cdf_V, simulate_zf_leakage
from .solvers import (
    DEFAULT_SETTINGS,
    SdpProblem,
    solve_leakage_constrained,
    solve_sdp,
)

log = logging.getLogger(__name__)

CDF_PAIRS = ((2, 2), (2, 4), (4, 4), (4, 6))

FULL = {"cdf_samples": 100_000, "leakage_samples": 100_000, "alt_beams": 100,
        "eta_samples": 100_000, "sdp_instances": 1000, "leak_instances": 500,
        "gp_trials": 200, "algo_trials": 200, "rate_trials": 500}
QUICK = {"cdf_samples": 20_000, "leakage_samples": 20_000, "alt_beams": 20,
         "eta_samples": 20_000, "sdp_instances": 100, "leak_instances": 50,
         "gp_trials": 20, "algo_trials": 20, "rate_trials": 40}

# horizon of the outer-iteration convergence check
ALGO_HORIZON = 6


@dataclass
class CheckResult:
    number: int
    title: str
    passed: bool
    detail: str
    seconds: float

    def line(self):
        verdict = "PASS" if self.passed else "FAIL"
        return f"criterion {self.number:>2} [{verdict}] {self.title}: {self.detail} ({self.seconds:.1f} s)"


@dataclass
class Context:
    """Shared state so later checks can reuse trials run by earlier ones."""

    full: bool = True
    seed: int = 0
    trial_cache: dict = field(default_factory=dict)

    @property
    def n(self):
        return FULL if self.full else QUICK

    def base_config(self, **overrides):
        return SystemConfig(seed=self.seed, **overrides)

    def trials(self, scheme, snr_db, n_trials, **overrides):
        key = (scheme, float(snr_db), n_trials, tuple(sorted(overrides.items())))
        if key not in self.trial_cache:
            cfg = self.base_config(**overrides).with_snr(snr_db)
            log.info("running %s at %g dB, %d trials %s", scheme, snr_db, n_trials, overrides)
            self.trial_cache[key] = run_trials(scheme, cfg, range(n_trials))
        return self.trial_cache[key]

    def cached_pa_results(self):
        for (scheme, *_), results in self.trial_cache.items():
            if scheme.endswith("-pa"):
                yield scheme, results

    def cached_leakage_results(self):
        for (scheme, *_), results in self.trial_cache.items():
            if scheme in ("malc", "ralc", "plc", "malc-pa", "ralc-pa"):
                yield scheme, results


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def ks_distance(samples, cdf, n_points=1000):
    """Two-sided KS distance evaluated at ``n_points`` sample quantiles.

    At a sample point ``x_(i)`` the empirical CDF jumps from ``(i-1)/n`` to
    ``i/n``; both one-sided gaps are taken there.
    """
    x = np.sort(np.asarray(samples))
    n = x.size
    idx = np.unique(np.linspace(0, n - 1, n_points).round().astype(int))
    F = np.atleast_1d(cdf(x[idx]))
    upper = (idx + 1) / n
    lower = idx / n
    return float(max(np.max(np.abs(upper - F)), np.max(np.abs(F - lower))))


def pd_by_quadrature(d, N, B):
    """P_D(d) = int_0^inf P_V(min(d / r, 1)) p_R(r) dr with R ~ Gamma(N, 1)."""
    if d <= 0:
        return 0.0
    pdf = stats.gamma(N).pdf
    # for r <= d the inner CDF is 1
    head = stats.gamma(N).cdf(d)
    tail, _ = integrate.quad(lambda r: float(cdf_V(d / r, N, B)) * pdf(r), d, np.inf,
                             epsabs=1e-12, epsrel=1e-10, limit=200)
    return float(head + tail)


def _random_hermitian(rng, n, psd=False):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return A @ A.conj().T if psd else 0.5 * (A + A.conj().T)


def kkt_residuals(problem, sol, trace_bound=None):
    """Feasibility, PSD, dual-feasibility and gap recomputed from Q and the multipliers.

    The gap is relative to ``|objective|``, floored at ``1e-4 * ||C|| *
    trace_bound`` so that problems whose optimum is Q = 0 are not judged
    on rounding noise.
    """
    C = np.asarray(problem.objective, dtype=complex)
    cons = problem.all_constraints()
    Q = sol.Q
    feas = 0.0
    for A, b in cons:
        feas = max(feas, (float(np.real(np.trace(A @ Q))) - b) / max(abs(b), 1.0))
    lam = np.asarray(sol.dual, dtype=float)
    Z = sum((l * A for l, (A, _) in zip(lam, cons)), np.zeros_like(C)) - C
    cscale = max(np.abs(np.linalg.eigvalsh(C)).max(), 1e-300)
    zmin = float(np.linalg.eigvalsh(0.5 * (Z + Z.conj().T))[0]) / cscale
    obj = float(np.real(np.trace(C @ Q)))
    dual_obj = float(lam @ np.array([b for _, b in cons]))
    trq = float(np.real(np.trace(Q)))
    bound = trace_bound if trace_bound is not None else max(trq, 1e-300)
    gap = abs(dual_obj - obj) / max(abs(obj), 1e-4 * cscale * bound)
    qmin = float(np.linalg.eigvalsh(Q)[0]) / max(trq, 1e-300)
    return {"feasibility": feas, "psd": -min(qmin, 0.0), "dual": -min(zmin, 0.0),
            "negative_multiplier": -min(float(lam.min(initial=0.0)), 0.0), "gap": gap}


def _fmt(x):
    return f"{x:.3g}"


# ---------------------------------------------------------------------------
# criteria
# ---------------------------------------------------------------------------

def criterion_1(ctx):
    """CDF agreement for P_V and P_D, plus P_D against quadrature."""
    ks_v, ks_d, quad_err = [], [], []
    for N, B in CDF_PAIRS:
        v, d = simulate_zf_leakage(N, B, ctx.n["cdf_samples"],
                                   make_rng(ctx.seed, STREAM_SAMPLER, 1, N, B))
        ks_v.append(ks_distance(v, lambda x: cdf_V(x, N, B)))
        ks_d.append(ks_distance(d, lambda x: cdf_D(x, N, B)))
        for x in np.linspace(0.05, 3.0 * N * eta(N, B) / (N - 1), 8):
            quad_err.append(abs(float(cdf_D(x, N, B)) - pd_by_quadrature(x, N, B)))
    ok = max(ks_v) <= 0.01 and max(ks_d) <= 0.01 and max(quad_err) <= 1e-6
    return ok, (f"max KS P_V={_fmt(max(ks_v))}, P_D={_fmt(max(ks_d))} (<=0.01); "
                f"max |P_D - quadrature|={_fmt(max(quad_err))} (<=1e-6)"), 60.0


def criterion_2(ctx):
    """Zero-forcing attains the minimum average leakage eta/(N-1)."""
    N, B = 4, 6
    n = ctx.n["leakage_samples"]
    v, _ = simulate_zf_leakage(N, B, n, make_rng(ctx.seed, STREAM_SAMPLER, 2))
    target = eta(N, B) / (N - 1)
    sigma = float(np.std(v, ddof=1) / math.sqrt(n))
    z_mean = abs(float(np.mean(v)) - target) / sigma

    # alternatives: expected leakage of arbitrary unit beams around one feedback
    rng = make_rng(ctx.seed, STREAM_SAMPLER, 2, 1)
    h = (rng.standard_normal(N) + 1j * rng.standard_normal(N)) / math.sqrt(2)
    h_hat = h / np.linalg.norm(h)
    draws = sample_true_direction(h_hat, N, B, rng, size=n)
    g = rng.standard_normal(N) + 1j * rng.standard_normal(N)
    g -= (g @ h_hat) * h_hat.conj()
    w_zf = g / np.linalg.norm(g)
    leak_zf = np.abs(draws @ w_zf) ** 2
    zf_mean = float(leak_zf.mean())
    zf_sigma = float(leak_zf.std(ddof=1) / math.sqrt(n))
    worst = math.inf
    for _ in range(ctx.n["alt_beams"]):
        w = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        w /= np.linalg.norm(w)
        worst = min(worst, float(np.mean(np.abs(draws @ w) ** 2)))
    ok = z_mean <= 3.0 and worst >= zf_mean - 3.0 * zf_sigma
    return ok, (f"MC mean off by {z_mean:.2f} sigma (<=3); lowest alternative "
                f"{_fmt(worst)} vs ZF {_fmt(zf_mean)} - 3 sigma {_fmt(zf_mean - 3 * zf_sigma)}"), 60.0


def criterion_3(ctx):
    """eta closed form: exact small cases and a sampler check."""
    exact = eta(2, 0) == 0.5 and eta(4, 0) == 0.75
    n = ctx.n["eta_samples"]
    z = sample_z(4, 6, make_rng(ctx.seed, STREAM_SAMPLER, 3), n)
    dev = abs(float(z.mean()) - eta(4, 6)) / (float(z.std(ddof=1)) / math.sqrt(n))
    return exact and dev <= 3.0, (f"eta(2,0)={eta(2, 0)!r}, eta(4,0)={eta(4, 0)!r}; "
                                  f"eta(4,6) vs sampler {dev:.2f} sigma (<=3)"), None


def criterion_4(ctx):
    """SDP certification on random instances and rank-one leakage SDPs."""
    rng = make_rng(ctx.seed, STREAM_SAMPLER, 4)
    worst = {"feasibility": 0.0, "psd": 0.0, "dual": 0.0, "negative_multiplier": 0.0,
             "gap": 0.0}
    failures = 0
    n_inst = ctx.n["sdp_instances"]
    for _ in range(n_inst):
        n = int(rng.integers(2, 9))
        m = int(rng.integers(1, 9))
        cons = [(np.eye(n), float(rng.uniform(0.5, 3.0)))]
        for _ in range(m - 1):
            A = _random_hermitian(rng, n, psd=rng.random() < 0.7)
            cons.append((A, float(rng.uniform(0.5, 3.0))))
        prob = SdpProblem(_random_hermitian(rng, n), cons)
        res = kkt_residuals(prob, solve_sdp(prob), trace_bound=cons[0][1])
        for k, v in res.items():
            worst[k] = max(worst[k], v)
        if (res["feasibility"] > 1e-7 or res["psd"] > 1e-7 or res["negative_multiplier"] > 0
                or res["dual"] > 1e-6 or res["gap"] > 1e-6):
            failures += 1

    cfg = ctx.base_config().with_snr(20.0)
    n_leak = ctx.n["leak_instances"]
    high_rank = 0
    worst_rank = 0.0
    count = 0
    trial = 0
    while count < n_leak:
        _, csi = trial_inputs(cfg, 10_000 + trial)
        trial += 1
        st = build_statistics(csi)
        P = np.full(cfg.K, cfg.P / cfg.K)
        kind = ("malc", "ralc")[trial % 2]
        gam = thresholds(kind, P, csi, cfg)
        for k in range(cfg.K):
            if count >= n_leak:
                break
            _, sol = solve_leakage_constrained(st.U[k], st.U_bar[k], gam[k], P[k],
                                               full_output=True)
            count += 1
            worst_rank = max(worst_rank, sol.rank_indicator)
            high_rank += sol.rank_indicator > DEFAULT_SETTINGS.rank_tol
    ok = failures == 0 and high_rank == 0
    return ok, (f"{n_inst - failures}/{n_inst} random SDPs certified "
                f"(feas {_fmt(worst['feasibility'])}, gap {_fmt(worst['gap'])}, "
                f"dual {_fmt(worst['dual'])}); leakage SDPs rank<=1e-5 in "
                f"{n_leak - high_rank}/{n_leak} (max {_fmt(worst_rank)})"), 120.0


def criterion_5(ctx):
    """Monomial-approximation iterations of the first power update."""
    n = ctx.n["gp_trials"]
    parts, ok = [], True
    for scheme in ("malc-pa", "ralc-pa"):
        for snr in (10.0, 20.0):
            results = ctx.trials(scheme, snr, n, L_algo1=1)
            traces = [r.info["pd_traces"][0] for r in results]
            conv = [t[-1] < 0.01 for t in traces]
            iters = [len(t) for t in traces]
            frac = float(np.mean(conv))
            med = float(np.median(iters))
            ok &= frac >= 0.99 and 3 <= med <= 20
            parts.append(f"{scheme}@{snr:g}dB {100 * frac:.1f}% med {med:g}")
    return ok, "converged within 30 (>=99%), median in [3,20]: " + "; ".join(parts), 300.0


def stabilization_iteration(trace, rel=1e-3):
    """First outer iteration after which the best-so-far value moves < ``rel``."""
    trace = np.asarray(trace, dtype=float)
    for l in range(len(trace)):
        ref = abs(trace[l]) if trace[l] != 0 else 1.0
        if np.all(np.abs(trace[l:] - trace[l]) < rel * ref):
            return l
    return len(trace)


def criterion_6(ctx):
    """Outer-loop convergence of the alternating algorithm."""
    n = ctx.n["algo_trials"]
    parts, ok = [], True
    for scheme in ("malc-pa", "ralc-pa"):
        for snr in (10.0, 20.0):
            results = ctx.trials(scheme, snr, n, L_algo1=ALGO_HORIZON)
            stab = [stabilization_iteration(r.info["perf_trace"]) for r in results]
            frac = float(np.mean([s <= 3 for s in stab]))
            ok &= frac >= 0.90
            parts.append(f"{scheme}@{snr:g}dB {100 * frac:.1f}%")
    return ok, (f"best-so-far settles (<1e-3) by iteration 3 over a {ALGO_HORIZON}-iteration "
                "horizon (>=90%): " + "; ".join(parts)), None


def _agg(ctx, scheme, snr, **overrides):
    cfg = ctx.base_config(**overrides).with_snr(snr)
    return summarize(scheme, cfg, ctx.trials(scheme, snr, ctx.n["rate_trials"], **overrides))


def _separated(hi, lo):
    return hi.mean_rate - hi.ci_halfwidth > lo.mean_rate + lo.ci_halfwidth


def _show(a):
    return f"{a.scheme} {a.mean_rate:.3f}+-{a.ci_halfwidth:.3f}"


def criterion_7(ctx):
    """Scheme ordering at desk scale."""
    ralc_pa, malc_pa, zf_pa = (_agg(ctx, s, 20.0) for s in ("ralc-pa", "malc-pa", "zf-pa"))
    a = _separated(ralc_pa, malc_pa) and _separated(malc_pa, zf_pa)
    malc20, plc20 = _agg(ctx, "malc", 20.0), _agg(ctx, "plc", 20.0)
    b = _separated(malc20, plc20)
    ralc0, malc0 = _agg(ctx, "ralc", 0.0), _agg(ctx, "malc", 0.0)
    c = ralc0.mean_rate >= malc0.mean_rate
    slnr20, slnr30 = _agg(ctx, "slnr", 20.0), _agg(ctx, "slnr", 30.0)
    d = slnr30.mean_rate < 1.1 * slnr20.mean_rate
    flags = "".join(("a" if a else "-", "b" if b else "-", "c" if c else "-", "d" if d else "-"))
    detail = (f"[{flags}] (a) {_show(ralc_pa)} > {_show(malc_pa)} > {_show(zf_pa)}; "
              f"(b) {_show(malc20)} > {_show(plc20)}; (c) at 0 dB {_show(ralc0)} >= "
              f"{_show(malc0)}; (d) SLNR 30/20 dB ratio {slnr30.mean_rate / slnr20.mean_rate:.3f}")
    return a and b and c and d, detail, 1800.0


def criterion_8(ctx):
    """Quantized (2-bit) vs average CF-CMI for MALC-PA."""
    avg = _agg(ctx, "malc-pa", 20.0)
    q2 = _agg(ctx, "malc-pa", 20.0, cmi_mode=CmiMode.QUANTIZED, M=2)
    diff = abs(avg.mean_rate - q2.mean_rate)
    bound = avg.ci_halfwidth + q2.ci_halfwidth
    return diff <= bound, (f"|{avg.mean_rate:.3f} - {q2.mean_rate:.3f}| = {diff:.3f} "
                           f"vs combined half-widths {bound:.3f}"), None


def criterion_9(ctx):
    """Per-antenna and leakage audits over every trial run so far."""
    if not ctx.trial_cache:
        criterion_5(ctx)
    pa_total = pa_bad = 0
    worst_ant = -math.inf
    for _, results in ctx.cached_pa_results():
        for r in results:
            pa_total += 1
            worst_ant = max(worst_ant, r.audit.max_antenna_violation)
            pa_bad += r.audit.max_antenna_violation > 1e-7
    lk_total = lk_bad = 0
    worst_leak = -math.inf
    for _, results in ctx.cached_leakage_results():
        for r in results:
            if r.audit.leakage_violation is None:
                continue
            lk_total += 1
            worst_leak = max(worst_leak, r.audit.leakage_violation)
            lk_bad += r.audit.leakage_violation > 1e-7
    ok = pa_bad == 0 and lk_bad == 0 and pa_total > 0 and lk_total > 0
    return ok, (f"per-antenna {pa_total - pa_bad}/{pa_total} (worst {_fmt(worst_ant)}); "
                f"leakage caps {lk_total - lk_bad}/{lk_total} (worst {_fmt(worst_leak)})"), None


def _digest(text):
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def criterion_10(ctx):
    """Byte-identical outputs on re-runs (and across worker counts)."""
    seed = ctx.seed
    specs = [
        ({"recipe": "fig3", "cdf_pairs": ((4, 6),), "cdf_samples": 5000, "cdf_points": 11,
          "seed": seed}, "cdf"),
        ({"schemes": ("zf", "zf-pa", "slnr", "aslnr", "plc", "malc", "ralc", "malc-pa",
                      "ralc-pa"), "snr_db": (10.0,), "trials": 3, "seed": seed}, "run"),
        ({"recipe": "fig5", "snr_db": (20.0,), "trials": 2, "seed": seed}, "run"),
    ]
    same = []
    for values, command in specs:
        outs = []
        for workers in (1, 1, 2):
            for fmt in ("csv", "json"):
                spec = build_spec({}, {**values, "workers": workers, "format": fmt},
                                  command=command)
                columns, rows = run(spec)
                outs.append((fmt, render(spec, columns, rows)))
        by_fmt = {}
        for fmt, text in outs:
            by_fmt.setdefault(fmt, set()).add(_digest(text))
        same.append(all(len(v) == 1 for v in by_fmt.values()))
    return all(same), (f"{sum(same)}/{len(same)} outputs byte-identical over two runs "
                       "and one two-worker run, CSV and JSON"), None


CRITERIA = {1: ("CDF agreement", criterion_1), 2: ("minimum average leakage", criterion_2),
            3: ("eta closed form", criterion_3), 4: ("solver certification", criterion_4),
            5: ("GP convergence", criterion_5), 6: ("outer-loop convergence", criterion_6),
            7: ("scheme ordering", criterion_7), 8: ("CF-CMI insensitivity", criterion_8),
            9: ("constraint audits", criterion_9), 10: ("determinism", criterion_10)}


def run_check(number, ctx):
    title, fn = CRITERIA[number]
    start = time.perf_counter()
    ok, detail, budget = fn(ctx)
    elapsed = time.perf_counter() - start
    if budget is not None and elapsed > budget:
        ok = False
        detail += f"; runtime over budget {budget:.0f} s"
    return CheckResult(number, title, bool(ok), detail, elapsed)


def run_checks(full=False, only=None, seed=0, echo=print):
    ctx = Context(full=full, seed=seed)
    results = []
    for number in sorted(only or CRITERIA):
        res = run_check(number, ctx)
        if echo is not None:
            echo(res.line() + ("" if full else " [quick scale]"))
        results.append(res)
    return results
