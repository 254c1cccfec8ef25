"""
Small-dimension convex solvers: complex Hermitian SDPs, the per-UE power
allocation geometric program, and Gaussian randomization for rank-one
beamvector extraction.

The SDP engine is a primal log-barrier path-following method over
block-diagonal Hermitian matrices, parametrized by real coordinates in an
orthonormal Hermitian basis. Constraints of the form ``tr(A Q) <= 0`` with
``A`` PSD (zero-forcing conditions, zero per-antenna headroom) have no
strictly feasible interior; they are removed beforehand by restricting the
affected block to the null space of ``A``.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg as sla

from .errors import SolverError


@dataclass(frozen=True)
class SolverSettings:
    feas_tol: float = 1e-7
    gap_tol: float = 1e-6
    rank_tol: float = 1e-5
    rank_error: float = 1e-3
    # relative gap at which the central path is left
    path_gap: float = 1e-8
    barrier_mu: float = 50.0
    # the power-allocation subproblem only feeds a 1e-2 stopping rule
    gp_path_gap: float = 1e-7
    max_newton: int = 80
    max_outer: int = 80
    # squared Newton decrement at which a centering stage ends
    center_tol: float = 1e-9


DEFAULT_SETTINGS = SolverSettings()

# lower bound on GP powers relative to the total power budget
GP_POWER_FLOOR = 1e-10

# objective values below this fraction of the problem scale are treated as
# zero when forming relative gaps
GAP_FLOOR = 1e-4


# ---------------------------------------------------------------------------
# Hermitian coordinates
# ---------------------------------------------------------------------------

_BASIS_CACHE = {}


def hermitian_basis(n):
    """Orthonormal basis of n x n Hermitian matrices under <A, B> = Re tr(A B)."""
    if n not in _BASIS_CACHE:
        E = []
        for i in range(n):
            M = np.zeros((n, n), dtype=complex)
            M[i, i] = 1.0
            E.append(M)
        s = 1.0 / math.sqrt(2.0)
        for i in range(n):
            for j in range(i + 1, n):
                M = np.zeros((n, n), dtype=complex)
                M[i, j] = M[j, i] = s
                E.append(M)
                M = np.zeros((n, n), dtype=complex)
                M[i, j] = 1j * s
                M[j, i] = -1j * s
                E.append(M)
        _BASIS_CACHE[n] = np.array(E).reshape(n * n, n, n)
    return _BASIS_CACHE[n]


def _coords(A, E):
    """Coefficients g_a = Re tr(A E_a), so that tr(A X) = g . x."""
    return np.einsum("ij,aji->a", A, E).real


def _is_psd(A, tol=1e-12):
    w = np.linalg.eigvalsh(0.5 * (A + A.conj().T))
    return w[0] >= -tol * max(abs(w[-1]), 1e-300)


# ---------------------------------------------------------------------------
# Barrier engine
# ---------------------------------------------------------------------------

class _Block:
    def __init__(self, V):
        self.V = V                      # (n_full, n) orthonormal columns
        self.n = V.shape[1]
        self.E = hermitian_basis(self.n) if self.n else np.zeros((0, 0, 0))
        self.size = self.n * self.n

    def reduce(self, A):
        return self.V.conj().T @ A @ self.V

    def coords(self, A):
        if self.n == 0:
            return np.zeros(0)
        return _coords(self.reduce(A), self.E)

    def matrix(self, x):
        return np.einsum("a,aij->ij", x, self.E)

    def full(self, x):
        if self.n == 0:
            m = self.V.shape[0]
            return np.zeros((m, m), dtype=complex)
        X = self.matrix(x)
        return self.V @ X @ self.V.conj().T


def _facial_reduction(dims, constraints):
    """Restrict blocks to null spaces of PSD constraints with zero bound.

    ``constraints`` is a list of ``(parts, b)`` where ``parts`` maps block
    index to a Hermitian matrix. Returns the block list and the remaining
    constraints.
    """
    null_terms = [np.zeros((n, n), dtype=complex) for n in dims]
    kept = []
    for parts, b in constraints:
        all_psd = all(_is_psd(A) for A in parts.values())
        if all_psd and b < 0:
            scale = max(np.abs(A).max() for A in parts.values()) if parts else 0.0
            if scale > 0:
                raise SolverError("infeasible: PSD constraint with negative bound",
                                  {"bound": b})
            continue
        if all_psd and b == 0:
            for k, A in parts.items():
                null_terms[k] = null_terms[k] + A
            continue
        kept.append((parts, b))
    blocks = []
    for n, S in zip(dims, null_terms):
        w, U = np.linalg.eigh(0.5 * (S + S.conj().T))
        scale = max(abs(w).max(initial=0.0), 1e-300)
        V = U[:, w <= 1e-10 * scale] if np.abs(S).max(initial=0.0) > 0 else np.eye(n, dtype=complex)
        blocks.append(_Block(V))
    return blocks, kept


@dataclass
class _BarrierResult:
    x: np.ndarray
    t: float
    slack: np.ndarray
    gap_bound: float
    newton_steps: int
    f_value: float


class _BarrierProblem:
    """maximize f(x) s.t. G x <= b, X_b(x) > 0 for every block.

    ``f`` is linear (``c @ x``) or a weighted sum of logs
    ``sum_k alpha_k log(sigma_k + a_k @ x)``.
    """

    def __init__(self, blocks, G, b, linear=None, logs=None):
        self.blocks = blocks
        self.offsets = np.cumsum([0] + [blk.size for blk in blocks])
        self.p = int(self.offsets[-1])
        self.G = G.reshape(-1, self.p) if self.p else np.zeros((len(b), 0))
        self.b = np.asarray(b, dtype=float)
        self.c = linear
        self.logs = logs   # (alpha (K,), sigma (K,), A (K, p))

    def split(self, x):
        return [x[self.offsets[i]:self.offsets[i + 1]] for i in range(len(self.blocks))]

    def f(self, x):
        if self.c is not None:
            return float(self.c @ x)
        alpha, sigma, A = self.logs
        return float(alpha @ np.log(sigma + A @ x))

    def f_delta(self, x, d):
        """f(x + d) - f(x) without cancellation."""
        if self.c is not None:
            return float(self.c @ d)
        alpha, sigma, A = self.logs
        return float(alpha @ np.log1p((A @ d) / (sigma + A @ x)))

    def f_derivs(self, x):
        if self.c is not None:
            return self.c, None
        alpha, sigma, A = self.logs
        u = sigma + A @ x
        grad = A.T @ (alpha / u)
        hess = -(A.T * (alpha / u ** 2)) @ A
        return grad, hess

    def in_domain(self, x):
        s = self.b - self.G @ x
        if np.any(s <= 0):
            return False
        if self.logs is not None:
            alpha, sigma, A = self.logs
            if np.any(sigma + A @ x <= 0):
                return False
        for blk, xb in zip(self.blocks, self.split(x)):
            if blk.n == 0:
                continue
            try:
                np.linalg.cholesky(blk.matrix(xb))
            except np.linalg.LinAlgError:
                return False
        return True

    def barrier_value(self, x):
        """-sum log(slack) - sum log det X, or inf outside the domain."""
        s = self.b - self.G @ x
        if np.any(s <= 0):
            return np.inf
        if self.logs is not None:
            alpha, sigma, A = self.logs
            if np.any(sigma + A @ x <= 0):
                return np.inf
        val = -np.sum(np.log(s))
        for blk, xb in zip(self.blocks, self.split(x)):
            if blk.n == 0:
                continue
            try:
                L = np.linalg.cholesky(blk.matrix(xb))
            except np.linalg.LinAlgError:
                return np.inf
            val -= 2.0 * np.sum(np.log(np.diag(L).real))
        return val

    def barrier_terms(self, x):
        """Value, gradient and Hessian of -sum log(slack) - sum log det X."""
        s = self.b - self.G @ x
        val = -np.sum(np.log(s))
        grad = self.G.T @ (1.0 / s)
        hess = (self.G.T * (1.0 / s ** 2)) @ self.G
        for i, (blk, xb) in enumerate(zip(self.blocks, self.split(x))):
            if blk.n == 0:
                continue
            X = blk.matrix(xb)
            L = np.linalg.cholesky(X)
            val -= 2.0 * np.sum(np.log(np.diag(L).real))
            Xi = sla.cho_solve((L, True), np.eye(blk.n))
            M = Xi @ blk.E                           # (a, n, n)
            lo, hi = self.offsets[i], self.offsets[i + 1]
            grad[lo:hi] -= np.einsum("aii->a", M).real
            hess[lo:hi, lo:hi] += np.einsum("aij,bji->ab", M, M).real
        return val, grad, hess

    def n_barrier(self):
        return len(self.b) + sum(blk.n for blk in self.blocks)

    def solve(self, x0, f_scale, settings):
        if not self.in_domain(x0):
            raise SolverError("starting point is not strictly feasible")
        x = x0.copy()
        m = self.n_barrier()
        t = m / max(f_scale, 1e-300)
        steps = 0
        for _ in range(settings.max_outer):
            for _ in range(settings.max_newton):
                bval, bgrad, bhess = self.barrier_terms(x)
                fg, fh = self.f_derivs(x)
                grad = -t * fg + bgrad
                hess = bhess if fh is None else bhess - t * fh
                try:
                    dx = -np.linalg.solve(hess, grad)
                except (sla.LinAlgError, ValueError):
                    dx = -np.linalg.lstsq(hess, grad, rcond=None)[0]
                dec2 = float(-grad @ dx)
                steps += 1
                if dec2 <= settings.center_tol:
                    break
                step = 1.0
                while step >= 1e-14:
                    bn = self.barrier_value(x + step * dx)
                    if np.isfinite(bn):
                        dphi = -t * self.f_delta(x, step * dx) + bn - bval
                        if dphi <= -0.01 * step * dec2:
                            break
                    step *= 0.5
                if step < 1e-14:
                    break
                x = x + step * dx
            fx = self.f(x)
            if m / t <= settings.path_gap * max(abs(fx), GAP_FLOOR * f_scale):
                break
            t *= settings.barrier_mu
        else:
            raise SolverError("barrier method did not reach the target gap",
                              {"gap_bound": m / t, "objective": self.f(x)})
        return _BarrierResult(x=x, t=t, slack=self.b - self.G @ x, gap_bound=m / t,
                              newton_steps=steps, f_value=self.f(x))


def _strict_start(blocks, G, b, p):
    """Scaled identity in every block, shrunk until all slacks are positive."""
    offsets = np.cumsum([0] + [blk.size for blk in blocks])
    x_id = np.zeros(p)
    for i, blk in enumerate(blocks):
        if blk.n:
            x_id[offsets[i]:offsets[i] + blk.n] = 1.0   # diagonal basis elements first
    load = G @ x_id if len(b) else np.zeros(0)
    if np.any((b <= 0) & (load >= 0)):
        raise SolverError("no strictly feasible point of the form eps*I; "
                          "constraint needs a phase-one solve")
    pos = load > 0
    eps = 0.5 * float(np.min(b[pos] / load[pos])) if pos.any() else 1.0
    return eps * x_id, eps


def _bounded_radius(blocks, G, b, p, psd_rows):
    """Crude bound on the trace of feasible points from PSD constraint rows."""
    offsets = np.cumsum([0] + [blk.size for blk in blocks])
    radius = 0.0
    for i, blk in enumerate(blocks):
        if blk.n == 0:
            continue
        S = np.zeros((blk.n, blk.n), dtype=complex)
        total_b = 0.0
        best = np.inf
        for r in psd_rows:
            gb = G[r, offsets[i]:offsets[i + 1]]
            Ar = blk.matrix(gb)
            if np.abs(Ar).max() > 0:
                S += Ar
                total_b += b[r]
                # a single positive definite row may bound the trace far more
                # tightly than the sum (e.g. next to a very loose leakage cap)
                lam_r = np.linalg.eigvalsh(Ar)[0]
                if lam_r > 1e-14 * np.abs(Ar).max():
                    best = min(best, b[r] / lam_r)
        lam_min = np.linalg.eigvalsh(S)[0] if np.abs(S).max() > 0 else 0.0
        if lam_min <= 1e-14 * max(np.abs(S).max(), 1e-300):
            raise SolverError("unbounded: the constraints do not bound tr(Q)")
        radius += min(best, total_b / lam_min)
    return radius


# ---------------------------------------------------------------------------
# Single-block SDP
# ---------------------------------------------------------------------------

@dataclass
class SdpProblem:
    """maximize tr(Q C) s.t. tr(Q A_i) <= b_i, Q_nn <= u_n, Q PSD Hermitian."""

    objective: np.ndarray
    constraints: list = field(default_factory=list)       # [(A_i, b_i)]
    element_caps: list = field(default_factory=list)      # [(n, u_n)]

    @property
    def dim(self):
        return self.objective.shape[0]

    def all_constraints(self):
        """Constraints with element caps expanded to matrices e_n e_n^T."""
        out = [(np.asarray(A, dtype=complex), float(bnd)) for A, bnd in self.constraints]
        for n, u in self.element_caps:
            A = np.zeros((self.dim, self.dim), dtype=complex)
            A[n, n] = 1.0
            out.append((A, float(u)))
        return out


@dataclass
class SdpSolution:
    Q: np.ndarray
    objective_value: float
    duality_gap: float              # relative
    max_constraint_violation: float # relative to the bound scale
    min_eigenvalue: float
    rank_indicator: float           # lambda_2 / lambda_1
    dual: np.ndarray = None         # one multiplier per expanded constraint
    dual_residual: float = 0.0      # most negative eigenvalue of the dual slack (relative)
    newton_steps: int = 0
    status: str = "optimal"


def rank_indicator(Q):
    w = np.linalg.eigvalsh(0.5 * (Q + Q.conj().T))[::-1]
    if w[0] <= 0:
        return 0.0
    return float(max(w[1], 0.0) / w[0]) if len(w) > 1 else 0.0


def solve_sdp(problem, settings=DEFAULT_SETTINGS):
    """Solve a small complex Hermitian SDP and certify the result.

    Returns an :class:`SdpSolution` with primal feasibility, duality gap and
    rank diagnostics. Raises :class:`SolverError` for infeasible or
    unbounded problems and when the path-following loop does not converge.
    """
    C = np.asarray(problem.objective, dtype=complex)
    n = C.shape[0]
    cons = problem.all_constraints()
    blocks, kept = _facial_reduction([n], [({0: A}, bnd) for A, bnd in cons])
    blk = blocks[0]
    kept_idx = [i for i, (A, bnd) in enumerate(cons)
                if not (_is_psd(A) and bnd == 0)]
    if blk.n == 0:
        return _zero_solution(n, cons)
    G = np.array([blk.coords(parts[0]) for parts, _ in kept]).reshape(len(kept), blk.size)
    b = np.array([bnd for _, bnd in kept])
    # drop rows that vanish on the reduced block
    live = np.abs(G).max(axis=1, initial=0.0) > 0 if len(b) else np.zeros(0, bool)
    if np.any(~live & (b < 0)):
        raise SolverError("infeasible: constraint 0 <= b with b < 0")
    G, b = G[live], b[live]
    live_idx = [kept_idx[i] for i in np.flatnonzero(live)]
    c = blk.coords(C)
    psd_rows = [r for r, i in enumerate(live_idx) if _is_psd(cons[i][0])]
    radius = _bounded_radius(blocks, G, b, blk.size, psd_rows)
    x0, _ = _strict_start(blocks, G, b, blk.size)
    f_scale = max(np.linalg.norm(np.linalg.eigvalsh(blk.reduce(C)), np.inf) * radius, 1e-300)
    prob = _BarrierProblem(blocks, G, b, linear=c)
    res = prob.solve(x0, f_scale, settings)
    Q = blk.full(res.x)
    Q = 0.5 * (Q + Q.conj().T)

    obj = float(np.real(np.trace(Q @ C)))
    A_red = [blk.reduce(cons[i][0]) for i in live_idx]
    C_red = blk.reduce(C)
    zscale = max(np.abs(np.linalg.eigvalsh(C_red)).max(), 1e-300)
    gap_scale = max(abs(obj), GAP_FLOOR * f_scale)

    def certificate(lam):
        Z = sum((lam[r] * A for r, A in enumerate(A_red)), np.zeros_like(C_red)) - C_red
        zmin = np.linalg.eigvalsh(0.5 * (Z + Z.conj().T))[0]
        gap = abs(float(lam @ b) - obj) / gap_scale
        return gap, float(min(zmin, 0.0) / zscale)

    candidates = [1.0 / (res.t * res.slack)]
    polished = _polish_dual(blk.matrix(res.x), A_red, C_red, res.slack, b)
    if polished is not None:
        candidates.append(polished)
    scored = [(max(g, -d), g, d, lam) for lam in candidates for g, d in [certificate(lam)]]
    _, gap_rel, dual_res, lam_live = min(scored, key=lambda item: item[0])
    dual = np.zeros(len(cons))
    dual[live_idx] = lam_live
    return SdpSolution(
        Q=Q,
        objective_value=obj,
        duality_gap=gap_rel,
        max_constraint_violation=_max_violation(Q, cons),
        min_eigenvalue=float(np.linalg.eigvalsh(Q)[0]),
        rank_indicator=rank_indicator(Q),
        dual=dual,
        dual_residual=dual_res,
        newton_steps=res.newton_steps,
    )


def _polish_dual(X, A_red, C_red, slack, b):
    """Multipliers from the stationarity equations on the active set.

    Solves ``(sum_i lam_i A_i - C) V = 0`` in the least-squares sense, where
    ``V`` spans the range of ``X`` and only constraints with vanishing slack
    take part. Returns None when the result is not a valid multiplier.
    """
    w, U = np.linalg.eigh(0.5 * (X + X.conj().T))
    if w[-1] <= 0:
        return None
    V = U[:, w > 1e-6 * w[-1]]
    active = np.flatnonzero(slack <= 1e-6 * np.maximum(np.abs(b), 1e-300))
    lam = np.zeros(len(slack))
    if active.size:
        cols = [(A_red[i] @ V).ravel() for i in active]
        M = np.column_stack(cols)
        rhs = (C_red @ V).ravel()
        M = np.vstack([M.real, M.imag])
        rhs = np.concatenate([rhs.real, rhs.imag])
        sol = np.linalg.lstsq(M, rhs, rcond=None)[0]
        if np.any(sol < -1e-9 * max(np.abs(sol).max(), 1.0)):
            return None
        lam[active] = np.maximum(sol, 0.0)
    return lam


def _max_violation(Q, cons):
    worst = 0.0
    for A, bnd in cons:
        val = float(np.real(np.trace(Q @ A)))
        scale = max(abs(bnd), 1e-12 * max(np.abs(A).max(), 1.0) * max(np.abs(Q).max(), 1e-300), 1e-300)
        worst = max(worst, (val - bnd) / scale)
    return worst


def _zero_solution(n, cons):
    return SdpSolution(Q=np.zeros((n, n), dtype=complex), objective_value=0.0,
                       duality_gap=0.0, max_constraint_violation=_max_violation(
                           np.zeros((n, n)), cons),
                       min_eigenvalue=0.0, rank_indicator=0.0,
                       dual=np.zeros(len(cons)), status="zero")


def check_kkt(solution, problem, settings=DEFAULT_SETTINGS):
    """True if the solution meets the feasibility, PSD and gap tolerances."""
    tr_scale = max(float(np.real(np.trace(solution.Q))), 1e-300)
    return (solution.max_constraint_violation <= settings.feas_tol
            and solution.min_eigenvalue >= -settings.feas_tol * tr_scale
            and solution.duality_gap <= settings.gap_tol
            and solution.dual_residual >= -settings.gap_tol)


# ---------------------------------------------------------------------------
# Multi-block SDP with a weighted-log objective
# ---------------------------------------------------------------------------

def solve_block_log_sdp(gains, alpha, sigma, constraints, dim, settings=DEFAULT_SETTINGS):
    """maximize sum_k alpha_k log(sigma + tr(G_k Q_k)) over PSD blocks Q_1..Q_K.

    ``constraints`` is a list of ``(parts, b)`` with ``parts`` mapping block
    index to a Hermitian matrix; the constraint reads
    ``sum_k tr(parts[k] Q_k) <= b``. Returns the list of optimal blocks and
    the duality-gap bound of the final barrier iterate.
    """
    K = len(gains)
    blocks, kept = _facial_reduction([dim] * K, constraints)
    offsets = np.cumsum([0] + [blk.size for blk in blocks])
    p = int(offsets[-1])
    if p == 0:
        return [np.zeros((dim, dim), dtype=complex) for _ in range(K)], 0.0

    def row(parts):
        g = np.zeros(p)
        for k, A in parts.items():
            g[offsets[k]:offsets[k + 1]] = blocks[k].coords(A)
        return g

    G = np.array([row(parts) for parts, _ in kept]).reshape(len(kept), p)
    b = np.array([bnd for _, bnd in kept], dtype=float)
    live = np.abs(G).max(axis=1, initial=0.0) > 0 if len(b) else np.zeros(0, bool)
    G, b = G[live], b[live]
    A = np.zeros((K, p))
    for k in range(K):
        A[k, offsets[k]:offsets[k + 1]] = blocks[k].coords(gains[k])
    keep_terms = np.abs(A).max(axis=1) > 0
    alpha = np.asarray(alpha, dtype=float)[keep_terms]
    sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (K,))[keep_terms]
    A = A[keep_terms]
    psd_rows = list(range(len(b)))
    radius = _bounded_radius(blocks, G, b, p, psd_rows)
    x0, _ = _strict_start(blocks, G, b, p)
    if A.shape[0] == 0:
        return [np.zeros((dim, dim), dtype=complex) for _ in range(K)], 0.0
    f_scale = max(float(np.sum(alpha * np.log1p(np.abs(A).sum(axis=1) * radius / sigma))), 1e-12)
    prob = _BarrierProblem(blocks, G, b, logs=(alpha, sigma, A))
    res = prob.solve(x0, f_scale, settings)
    Qs = [blk.full(xb) for blk, xb in zip(blocks, prob.split(res.x))]
    return [0.5 * (Q + Q.conj().T) for Q in Qs], res.gap_bound


# ---------------------------------------------------------------------------
# Rank-one extraction
# ---------------------------------------------------------------------------

def top_component(Q):
    """sqrt(lambda_1) v_1 for the leading eigenpair of a PSD matrix."""
    w, V = np.linalg.eigh(0.5 * (Q + Q.conj().T))
    return math.sqrt(max(w[-1], 0.0)) * V[:, -1]


def reduce_rank(Q, matrices, rel_tol=1e-9, max_steps=None):
    """Lower the rank of a PSD ``Q`` while keeping every ``tr(A Q)`` fixed.

    With ``Q = V V^H`` of rank r, any Hermitian r x r ``D`` orthogonal to all
    ``V^H A V`` gives ``Q' = V (I - D / lambda_max(D)) V^H``, which is PSD,
    has the same value on every matrix in ``matrices`` and loses at least
    one rank. Such a ``D`` exists while r^2 exceeds the number of matrices,
    so an optimum of a problem with m constraints reduces to rank r with
    r^2 <= m + 1 (objective included).
    """
    Q = 0.5 * (Q + Q.conj().T)
    steps = Q.shape[0] if max_steps is None else max_steps
    for _ in range(steps):
        w, U = np.linalg.eigh(Q)
        if w[-1] <= 0:
            break
        keep = w > rel_tol * w[-1]
        r = int(keep.sum())
        if r <= 1:
            break
        V = U[:, keep] * np.sqrt(w[keep])
        E = hermitian_basis(r)
        M = np.array([[np.real(np.trace(V.conj().T @ A @ V @ Eb)) for Eb in E]
                      for A in matrices]).reshape(len(matrices), r * r)
        _, sv, vh = np.linalg.svd(M) if len(matrices) else (None, np.zeros(0), np.eye(r * r))
        rank_M = int(np.sum(sv > 1e-12 * max(sv.max(initial=0.0), 1e-300)))
        if rank_M >= r * r:
            break
        D = np.tensordot(vh[-1], E, axes=1)
        d = np.linalg.eigvalsh(D)
        if abs(d[0]) > abs(d[-1]):
            D, d = -D, -d[::-1]
        Q = V @ (np.eye(r) - D / d[-1]) @ V.conj().T
        Q = 0.5 * (Q + Q.conj().T)
    return Q


def randomize_rank_one(Q_star, problem, L_rand, rng):
    """Gaussian randomization: best of ``L_rand`` scaled draws q ~ CN(0, Q*).

    Each draw is scaled by the largest factor that keeps every constraint
    of ``problem`` satisfied; the draw with the largest ``q^H C q`` wins,
    ties going to the earliest draw.
    """
    Q_star = 0.5 * (Q_star + Q_star.conj().T)
    n = Q_star.shape[0]
    w, V = np.linalg.eigh(Q_star)
    if w[-1] <= 0:
        return np.zeros(n, dtype=complex)
    root = V * np.sqrt(np.clip(w, 0.0, None))
    raw = rng.standard_normal((L_rand, n, 2))
    xi = (raw[..., 0] + 1j * raw[..., 1]) / math.sqrt(2.0)
    q = xi @ root.T                                  # rows ~ CN(0, Q*)
    rho2 = np.full(L_rand, np.inf)
    for A, bnd in problem.all_constraints():
        load = np.einsum("li,ij,lj->l", q.conj(), A, q).real
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(load > 0, bnd / load, np.inf)
        rho2 = np.minimum(rho2, np.maximum(ratio, 0.0))
    rho2 = np.where(np.isfinite(rho2), rho2, 0.0)
    q = q * np.sqrt(rho2)[:, None]
    score = np.einsum("li,ij,lj->l", q.conj(), problem.objective, q).real
    return q[int(np.argmax(score))]


# ---------------------------------------------------------------------------
# Leakage-constrained beamvectors
# ---------------------------------------------------------------------------

def _leakage_problem(U, U_bar, gamma, P_tilde, headroom=None):
    cons = []
    if np.abs(U_bar).max() > 0 or gamma > 0:
        # an all-zero U_bar means no other UEs: the leakage row is vacuous
        if np.abs(U_bar).max() > 0:
            cons.append((U_bar, float(gamma)))
    n = U.shape[0]
    cons.append((np.eye(n, dtype=complex), float(P_tilde)))
    caps = []
    if headroom is not None:
        caps = [(i, max(float(u), 0.0)) for i, u in enumerate(headroom)]
    return SdpProblem(objective=np.asarray(U, dtype=complex), constraints=cons,
                      element_caps=caps)


def solve_leakage_constrained(U, U_bar, gamma, P_tilde, settings=DEFAULT_SETTINGS,
                              full_output=False):
    """Beamvector maximizing w^H U w s.t. w^H U_bar w <= gamma, ||w||^2 <= P_tilde.

    Solved through the semidefinite relaxation, whose optimum is rank one
    for two constraints; the vector is the scaled leading eigenvector.
    """
    problem = _leakage_problem(U, U_bar, gamma, P_tilde)
    if P_tilde <= 0:
        w = np.zeros(U.shape[0], dtype=complex)
        return (w, None) if full_output else w
    sol = solve_sdp(problem, settings)
    if sol.rank_indicator > settings.rank_tol:
        # a non-unique optimum: the barrier ends at the center of the optimal
        # face, which still contains rank-one points
        mats = [problem.objective] + [A for A, _ in problem.all_constraints()]
        sol.Q = reduce_rank(sol.Q, mats)
        sol.rank_indicator = rank_indicator(sol.Q)
    if sol.rank_indicator > settings.rank_error:
        raise SolverError("two-constraint relaxation returned a high-rank solution",
                          {"rank_indicator": sol.rank_indicator})
    w = top_component(sol.Q)
    return (w, sol) if full_output else w


def solve_leakage_constrained_pa(U, U_bar, gamma, P_tilde, headroom, L_rand=1000, rng=None,
                                 settings=DEFAULT_SETTINGS, full_output=False):
    """Leakage-constrained beamvector with per-antenna caps ``|w_n|^2 <= headroom_n``.

    The relaxation can return a higher-rank matrix once the per-antenna rows
    are present; in that case the vector is obtained by Gaussian
    randomization with ``L_rand`` draws from ``rng``.
    """
    n = U.shape[0]
    headroom = np.maximum(np.asarray(headroom, dtype=float), 0.0)
    info = {"randomized": False, "rank_indicator": 0.0, "status": "ok"}
    if P_tilde <= 0 or not np.any(headroom > 0):
        if not np.any(headroom > 0):
            warnings.warn("no per-antenna headroom left; returning a zero beamvector",
                          RuntimeWarning, stacklevel=2)
            info["status"] = "no-headroom"
        w = np.zeros(n, dtype=complex)
        return (w, info) if full_output else w
    problem = _leakage_problem(U, U_bar, gamma, P_tilde, headroom)
    sol = solve_sdp(problem, settings)
    info["rank_indicator"] = sol.rank_indicator
    info["sdp_objective"] = sol.objective_value
    if sol.rank_indicator <= settings.rank_tol:
        w = top_component(sol.Q)
    else:
        if rng is None:
            raise ValueError("a random generator is needed for randomization")
        w = randomize_rank_one(sol.Q, problem, L_rand, rng)
        info["randomized"] = True
    return (w, info) if full_output else w


# ---------------------------------------------------------------------------
# Geometric program for the per-UE powers
# ---------------------------------------------------------------------------

@dataclass
class GpProblem:
    """Per-UE power allocation with leakage and per-antenna caps.

    ``lam[j, k]`` is the expected power UE k receives from a unit-power
    beam of UE j (``lam[k, k]`` is UE k's own signal gain). The leakage of
    UE k at power P_k is ``P_k * sum_{j != k} lam[k, j]`` and must stay
    below ``gamma[k]``; antenna n carries ``sum_k antenna_rows[n, k] P_k``,
    capped at ``P_n[n]``.
    """

    lam: np.ndarray
    N0: float
    alpha: np.ndarray
    gamma: np.ndarray
    antenna_rows: np.ndarray
    P_n: np.ndarray

    @property
    def K(self):
        return self.lam.shape[0]

    def leakage_load(self):
        L = self.lam.copy()
        np.fill_diagonal(L, 0.0)
        return L.sum(axis=1)

    def power_floor(self):
        """Smallest admissible per-UE power, a tiny fraction of the total budget."""
        return np.minimum(GP_POWER_FLOOR * float(np.sum(self.P_n)), 1e-3 * interior_point(self))

    def power_caps(self):
        """Upper bound on each P_k from its leakage row (inf when absent)."""
        load = self.leakage_load()
        gamma = np.asarray(self.gamma, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(load > 0, gamma / np.where(load > 0, load, 1.0), np.inf)

    def objective(self, P):
        """log of prod_k ((I_k + N0) / (I_k + S_k + N0))^alpha_k."""
        rx = P @ self.lam               # rx[k] = sum_j P_j lam[j, k]
        sig = P * np.diag(self.lam)
        interf = rx - sig
        return float(np.sum(self.alpha * (np.log(interf + self.N0) - np.log(rx + self.N0))))

    def is_feasible(self, P, rtol=1e-7):
        caps = self.power_caps()
        ok_leak = np.all(P <= caps * (1 + rtol) + 0.0)
        ok_ant = np.all(self.antenna_rows @ P <= self.P_n * (1 + rtol))
        return bool(ok_leak and ok_ant and np.all(P >= 0))


@dataclass
class GpResult:
    powers: np.ndarray
    iterations: int
    pd_trace: list
    objective_trace: list
    converged: bool


def monomial_bound_terms(m):
    """Weights mu_j = m_j / sum(m) of the arithmetic-geometric mean bound."""
    m = np.asarray(m, dtype=float)
    return m / m.sum()


def feasible_start(problem, P_init, shrink=1.0):
    """Scale ``P_init`` down onto the feasible set (caps are linear in P)."""
    P = np.maximum(np.asarray(P_init, dtype=float), 0.0)
    P = np.minimum(P, problem.power_caps())
    load = problem.antenna_rows @ P
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(load > 0, problem.P_n / load, np.inf)
    P = P * min(1.0, float(ratio.min()))
    return shrink * P


def interior_point(problem):
    """Strictly feasible point: each UE at its own cap, jointly scaled to half
    of the tightest antenna budget."""
    base = np.minimum(problem.power_caps(), float(np.sum(problem.P_n)))
    load = problem.antenna_rows @ base
    with np.errstate(divide="ignore"):
        ant = np.where(load > 0, problem.P_n / np.where(load > 0, load, 1.0), np.inf)
    P = 0.5 * min(1.0, float(ant.min())) * base
    if not np.all(P > 0):
        raise SolverError("caps leave no room for positive powers", {"caps": base})
    return P


def _interior_start(problem, P, weight=0.01):
    return (1.0 - weight) * feasible_start(problem, P) + weight * interior_point(problem)


def _gp_inner(problem, y0, mu, settings):
    """Minimize the condensed GP objective in log-power variables."""
    K = problem.K
    lam = problem.lam
    alpha = np.asarray(problem.alpha, dtype=float)
    N0 = problem.N0
    off = lam.copy()
    np.fill_diagonal(off, 0.0)
    # linear coefficient from the monomial denominator: sum_k alpha_k mu[j, k]
    lin = (mu[1:, :] * alpha[None, :]).sum(axis=1)
    caps = problem.power_caps()
    cap_idx = np.flatnonzero(np.isfinite(caps))
    log_caps = np.log(caps[cap_idx])
    rows = problem.antenna_rows / problem.P_n[:, None]
    rows = rows[np.any(rows > 0, axis=1)]
    log_rows = np.where(rows > 0, np.log(np.where(rows > 0, rows, 1.0)), -np.inf)
    # positivity guard: without it a UE whose power only hurts the others
    # drives its log-power to -inf and the barrier never settles
    log_floor = np.log(problem.power_floor())
    m_con = len(cap_idx) + rows.shape[0] + K

    def F(y):
        e = np.exp(y)
        d = N0 + e @ off
        val = np.sum(alpha * np.log(d)) - lin @ y
        wts = off * e[:, None] / d[None, :]          # wts[j, k]
        grad = wts @ alpha - lin
        hess = np.diag(wts @ alpha) - (wts * alpha[None, :]) @ wts.T
        return val, grad, hess

    def F_delta(y, d_y):
        """F(y + d_y) - F(y) without cancellation."""
        e = np.exp(y)
        d = N0 + e @ off
        with np.errstate(over="ignore", invalid="ignore"):
            change = (e * np.expm1(d_y)) @ off
        if not np.all(np.isfinite(change)):
            return np.inf
        return float(np.sum(alpha * np.log1p(change / d)) - lin @ d_y)

    def barrier(y):
        s_cap = log_caps - y[cap_idx]
        s_low = y - log_floor
        z = log_rows + y[None, :]
        zmax = z.max(axis=1, keepdims=True)
        ez = np.exp(z - zmax)
        S = ez.sum(axis=1, keepdims=True)
        h = (zmax + np.log(S)).ravel()
        if np.any(s_cap <= 0) or np.any(h >= 0) or np.any(s_low <= 0):
            return np.inf, None, None
        p = ez / S
        val = -np.sum(np.log(s_cap)) - np.sum(np.log(-h)) - np.sum(np.log(s_low))
        grad = np.zeros(K)
        grad[cap_idx] += 1.0 / s_cap
        grad -= 1.0 / s_low
        grad += (p / (-h)[:, None]).sum(axis=0)
        hess = np.diag((p / (-h)[:, None]).sum(axis=0))
        hess[cap_idx, cap_idx] += 1.0 / s_cap ** 2
        hess[np.diag_indices(K)] += 1.0 / s_low ** 2
        hess += (p.T * (1.0 / h ** 2 + 1.0 / h)) @ p
        return val, grad, hess

    def barrier_value(y):
        s_cap = log_caps - y[cap_idx]
        s_low = y - log_floor
        z = log_rows + y[None, :]
        zmax = z.max(axis=1)
        h = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
        if (s_cap <= 0).any() or (h >= 0).any() or (s_low <= 0).any():
            return np.inf
        return -np.log(s_cap).sum() - np.log(-h).sum() - np.log(s_low).sum()

    y = y0.copy()
    if m_con == 0:
        raise SolverError("power allocation is unbounded without caps")
    fscale = max(abs(F(y)[0]), 1.0)
    t = m_con / fscale
    for _ in range(settings.max_outer):
        for _ in range(settings.max_newton):
            fv, fg, fh = F(y)
            bv, bg, bh = barrier(y)
            grad = t * fg + bg
            hess = t * fh + bh
            try:
                dy = -np.linalg.solve(hess, grad)
            except np.linalg.LinAlgError:
                dy = -np.linalg.lstsq(hess, grad, rcond=None)[0]
            dec2 = float(-grad @ dy)
            if dec2 <= settings.center_tol:
                break
            step = 1.0
            while step >= 1e-14:
                yn = y + step * dy
                bn = barrier_value(yn)
                if np.isfinite(bn) and t * F_delta(y, step * dy) + bn - bv <= -0.01 * step * dec2:
                    break
                step *= 0.5
            if step < 1e-14:
                break
            y = yn
        if m_con / t <= settings.gp_path_gap * max(abs(F(y)[0]), 1.0):
            break
        t *= settings.barrier_mu
    else:
        raise SolverError("GP inner solve did not converge", {"iterate": np.exp(y)})
    return y


def solve_gp_power(problem, P_init, epsilon=0.01, max_iter=30, settings=DEFAULT_SETTINGS):
    """Per-UE powers by successive monomial approximation of the SINR product.

    At each iteration the denominator posynomial ``N0 + sum_j P_j lam[j, k]``
    is replaced by its arithmetic-geometric mean lower bound at the current
    point, giving a standard GP that is solved in log variables. Iterations
    stop once ``||P_i - P_{i-1}|| / ||P_{i-1}|| < epsilon``.
    """
    K = problem.K
    lam = problem.lam
    P = _interior_start(problem, P_init)
    pd_trace, obj_trace = [], [problem.objective(P)]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        m = np.vstack([np.full(K, problem.N0), P[:, None] * lam])   # m[j, k], j=0 is noise
        mu = m / m.sum(axis=0, keepdims=True)
        y0 = np.log(_interior_start(problem, P))
        y = _gp_inner(problem, y0, mu, settings)
        P_new = np.exp(y)
        pd = float(np.linalg.norm(P_new - P) / max(np.linalg.norm(P), 1e-300))
        pd_trace.append(pd)
        P = P_new
        obj_trace.append(problem.objective(P))
        if pd < epsilon:
            converged = True
            break
    return GpResult(powers=P, iterations=it, pd_trace=pd_trace,
                    objective_trace=obj_trace, converged=converged)
