"""
Interference-leakage statistics of the zero-forcing beamformer under RVQ
feedback, and the leakage thresholds built from them.

With Z the squared sine of the quantization angle and G the squared
projection of one isotropic null-space vector on another,

    V = Z * G           (normalized leakage, exact CF-CMI known)
    D = R * V           (leakage including the chi-square fading power R)

Closed forms of P_V and P_D are double sums with alternating binomial
coefficients C(2^B, m); they cancel catastrophically in double precision
once B exceeds a few bits. Here the polynomial parts are assembled once
in exact rational arithmetic and evaluated exactly (P_V) or with
``mpmath`` at a working precision sized to the cancellation (P_D). Beyond
``CLOSED_FORM_MAX_B`` the coefficient tables get too large and both CDFs
are evaluated by quadrature instead.
"""

import functools
import math
import warnings
from fractions import Fraction

import mpmath
import numpy as np
from scipy import integrate, special

from .channel import CmiMode, eta
from .errors import BracketError, ConfigurationError, DomainError
from .numerics import chi2_cdf, chi2_pdf

CLOSED_FORM_MAX_B = 8

_LOG10_2 = math.log10(2.0)


def _check_NB(N, B):
    if N < 2:
        raise DomainError(f"leakage distributions need N >= 2, got {N}")
    if B < 0:
        raise DomainError(f"B must be >= 0, got {B}")


def evaluation_method(N, B):
    """``"closed"`` if the closed forms are used for (N, B), else ``"numeric"``."""
    return "closed" if B <= CLOSED_FORM_MAX_B else "numeric"


# ---------------------------------------------------------------------------
# Building blocks: Z and G
# ---------------------------------------------------------------------------

def _check_unit(x, name):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x > 1):
        raise DomainError(f"{name} must lie in [0, 1]")
    return x


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def cdf_Z(z, N, B):
    """P_Z(z) = 1 - (1 - z^{N-1})^{2^B}."""
    _check_NB(N, B)
    z = _check_unit(z, "z")
    with np.errstate(divide="ignore"):
        return _out(-np.expm1(2.0 ** B * np.log1p(-z ** (N - 1))))


def pdf_Z(z, N, B):
    _check_NB(N, B)
    z = _check_unit(z, "z")
    n_cw = 2.0 ** B
    with np.errstate(divide="ignore", invalid="ignore"):
        tail = np.exp((n_cw - 1.0) * np.log1p(-z ** (N - 1)))
        out = (N - 1) * n_cw * z ** (N - 2) * tail
    return _out(np.nan_to_num(out))


def cdf_G(g, N):
    """P_G(g) = 1 - (1 - g)^{N-2}; for N = 2, G is identically 1."""
    if N < 2:
        raise DomainError(f"N must be >= 2, got {N}")
    g = _check_unit(g, "g")
    if N == 2:
        return _out(np.where(g >= 1.0, 1.0, 0.0))
    return _out(1.0 - (1.0 - g) ** (N - 2))


def _z_quantile(u, N, B):
    s = -np.expm1(np.log1p(-u) / 2.0 ** B)
    return s ** (1.0 / (N - 1))


def _g_quantile(s, N):
    return -np.expm1(np.log1p(-s) / (N - 2))


# ---------------------------------------------------------------------------
# Exact coefficient tables
# ---------------------------------------------------------------------------

@functools.lru_cache(maxsize=None)
def _c_table(N, B):
    """c[n][m-1] = C(N-2,n) C(2^B,m) (-1)^{n+m} m / (mN - (m+n))."""
    Q = 2 ** B
    table = []
    for n in range(N - 1):
        row = []
        bn = math.comb(N - 2, n)
        for m in range(1, Q + 1):
            sign = -1 if (n + m) % 2 else 1
            row.append(Fraction(sign * bn * math.comb(Q, m) * m, m * N - (m + n)))
        table.append(row)
    return table


def _poly_dict_to_ints(coefs):
    """{power: Fraction} -> (int coefficients by power, common denominator)."""
    if not coefs:
        return [0], 1
    deg = max(coefs)
    den = 1
    for c in coefs.values():
        den = den * c.denominator // math.gcd(den, c.denominator)
    ints = [0] * (deg + 1)
    for p, c in coefs.items():
        ints[p] = c.numerator * (den // c.denominator)
    return ints, den


@functools.lru_cache(maxsize=None)
def _pv_poly(N, B):
    """P_V(v) - 1 as an exact polynomial in v."""
    c = _c_table(N, B)
    coefs = {}
    for n, row in enumerate(c):
        for m, cnm in enumerate(row, start=1):
            t = (N - 1) * cnm
            coefs[n] = coefs.get(n, 0) + t
            p = m * (N - 1)
            coefs[p] = coefs.get(p, 0) - t
    coefs = {p: Fraction(v) for p, v in coefs.items() if v != 0}
    return _poly_dict_to_ints(coefs)


@functools.lru_cache(maxsize=None)
def _pd_braces(N, B):
    """Exact polynomial parts of the four braced groups in the closed form of P_D.

    Returns four ``{power: Fraction}`` dicts, already divided by (N-2)!.
    Groups 1-3 multiply exp(-d), group 4 multiplies E1(d). P_D is
    ``1 + g1 - g2 - g3 - g4``.
    """
    c = _c_table(N, B)
    Q = 2 ** B
    fact = math.factorial(N - 2)
    g1, g2, g3, g4 = {}, {}, {}, {}

    def add(d, p, v):
        d[p] = d.get(p, 0) + v

    for n, row in enumerate(c):
        S_n = sum(row, Fraction(0))
        i = N - 1 - n
        # sum_l l! C(i, l) d^{N-1-l} = sum_l i!/(i-l)! d^{N-1-l}
        ff = 1
        for l in range(i + 1):
            add(g1, N - 1 - l, S_n * ff)
            ff *= (i - l)
        sign = -1 if (n + 1) % 2 else 1
        add(g2, N - 1, Fraction(sign * math.comb(N - 2, n) * Q, N - 1 - n))

    S_m = [sum(c[n][m - 1] for n in range(N - 1)) for m in range(1, Q + 1)]
    for m in range(2, Q + 1):
        L = (m - 1) * (N - 1) - 1
        s = S_m[m - 1]
        # (-1)^{l-1} / (l! C(L, l)) = (-1)^{l-1} (L-l)! / L!
        term = s
        for l in range(1, L + 1):
            term = -term / (L - l + 1) if l > 1 else s / L
            add(g3, N - 1 + l, term)
        add(g4, m * (N - 1), s * (-1 if L % 2 else 1) / math.factorial(L))

    out = []
    for g in (g1, g2, g3, g4):
        out.append({p: Fraction(v) / fact for p, v in g.items() if v != 0})
    return tuple(out)


@functools.lru_cache(maxsize=None)
def _pd_polys(N, B):
    g1, g2, g3, g4 = _pd_braces(N, B)
    expo = dict(g1)
    for g in (g2, g3):
        for p, v in g.items():
            expo[p] = expo.get(p, 0) - v
    e1 = {p: -v for p, v in g4.items()}
    expo = {p: v for p, v in expo.items() if v != 0}
    return _poly_dict_to_ints(expo), _poly_dict_to_ints(e1)


def _eval_exact(poly, x):
    """Exact value of an integer-coefficient polynomial / den at float x."""
    ints, den = poly
    fx = Fraction(float(x))
    p, q = fx.numerator, fx.denominator
    deg = len(ints) - 1
    acc = ints[deg]
    qpow = 1
    for k in range(deg - 1, -1, -1):
        qpow *= q
        acc = acc * p + ints[k] * qpow
    return Fraction(acc, den * qpow)


def _log10_abs(fr):
    if fr == 0:
        return -math.inf
    a, b = abs(fr.numerator), fr.denominator
    return (a.bit_length() - b.bit_length()) * _LOG10_2


def pd_brace(d, N, B, which):
    """Value of one braced group (1-4) of the closed form of P_D at ``d``.

    Exposed so that each group can be checked on its own.
    """
    _check_NB(N, B)
    g = _pd_braces(N, B)[which - 1]
    val = _eval_exact(_poly_dict_to_ints(g), d)
    dps = max(30, int(_log10_abs(val)) + 30)
    with mpmath.workdps(dps):
        base = mpmath.e1(d) if which == 4 else mpmath.exp(-d)
        return float(mpmath.mpf(val.numerator) / val.denominator * base)


# ---------------------------------------------------------------------------
# P_V and P_D
# ---------------------------------------------------------------------------

def _cdf_V_closed(v, N, B):
    if v <= 0.0:
        return 0.0
    if v >= 1.0:
        return 1.0
    val = 1 + _eval_exact(_pv_poly(N, B), v)
    return min(max(float(val), 0.0), 1.0)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)


def _composite_gl(a, b, panels):
    """Nodes and weights of composite Gauss-Legendre rules on [a, b] (vectorized over a, b)."""
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    edges = np.linspace(0.0, 1.0, panels + 1)
    mid = 0.5 * (edges[1:] + edges[:-1])
    half = 0.5 * (edges[1:] - edges[:-1])
    unit = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w_unit = (half[:, None] * _GL_W[None, :]).ravel()
    return a + (b - a) * unit, (b - a) * w_unit


def _cdf_V_numeric_vec(v, N, B):
    """P_V(v) = P_Z(v) + int_v^1 P_G(v/z) p_Z(z) dz, integrated in log z."""
    v = np.atleast_1d(np.asarray(v, dtype=float))
    out = np.where(v >= 1.0, 1.0, 0.0)
    inside = (v > 0.0) & (v < 1.0)
    if not inside.any():
        return out
    vi = v[inside]
    base = -np.expm1(2.0 ** B * np.log1p(-vi ** (N - 1)))
    if N == 2:
        out[inside] = base
        return out
    t, w = _composite_gl(np.log(vi), np.zeros_like(vi), 24)
    z = np.exp(t)
    n_cw = 2.0 ** B
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = (N - 1) * n_cw * z ** (N - 1) * np.exp((n_cw - 1.0) * np.log1p(-z ** (N - 1)))
    dens = np.nan_to_num(dens)
    pg = 1.0 - (1.0 - np.minimum(vi[:, None] / z, 1.0)) ** (N - 2)
    out[inside] = np.clip(base + np.sum(w * pg * dens, axis=1), 0.0, 1.0)
    return out


def _cdf_V_numeric(v, N, B):
    return float(_cdf_V_numeric_vec(v, N, B)[0])


def cdf_V(v, N, B, method=None):
    """CDF of the normalized ZF leakage V = |h◊ w~_ZF|^2.

    ``method`` forces ``"closed"`` or ``"numeric"``; by default the closed
    form is used up to ``CLOSED_FORM_MAX_B`` bits.
    """
    _check_NB(N, B)
    method = method or evaluation_method(N, B)
    fn = _cdf_V_closed if method == "closed" else _cdf_V_numeric
    if np.ndim(v) == 0:
        return fn(float(v), N, B)
    return np.array([fn(float(x), N, B) for x in np.ravel(v)]).reshape(np.shape(v))


def _cdf_D_closed(d, N, B):
    if d <= 0.0:
        return 0.0
    (pe, pe1) = _pd_polys(N, B)
    X = _eval_exact(pe, d)
    Y = _eval_exact(pe1, d)
    mag = max(_log10_abs(X) - d / math.log(10.0), _log10_abs(Y) + math.log10(max(special.exp1(d), 1e-300)))
    dps = max(30, int(mag) + 30)
    with mpmath.workdps(dps):
        val = 1 + mpmath.mpf(X.numerator) / X.denominator * mpmath.exp(-d)
        if Y != 0:
            val += mpmath.mpf(Y.numerator) / Y.denominator * mpmath.e1(d)
        out = float(val)
    return min(max(out, 0.0), 1.0)


def _cdf_D_numeric(d, N, B):
    """P_D(d) = P_R(d) + int_d^inf P_V(d/r) p_R(r) dr with P_V by quadrature."""
    if d <= 0.0:
        return 0.0
    # the chi-square density is negligible beyond r_max
    r_max = max(2.0 * d, N + 60.0 * math.sqrt(N) + 60.0)
    # integrate in log r: the P_V(d/r) factor varies on a log scale
    t, w = _composite_gl(math.log(d), math.log(r_max), 32)
    r = np.exp(t)
    pv = _cdf_V_numeric_vec(d / r, N, B)
    val = float(np.sum(w * pv * chi2_pdf(r, N) * r))
    return min(max(float(chi2_cdf(d, N)) + val, 0.0), 1.0)


def cdf_D(d, N, B, method=None):
    """CDF of the ZF leakage D = |sqrt(R) h◊ w~_ZF|^2 under Rayleigh fading."""
    _check_NB(N, B)
    method = method or evaluation_method(N, B)
    fn = _cdf_D_closed if method == "closed" else _cdf_D_numeric
    if np.ndim(d) == 0:
        return fn(float(d), N, B)
    return np.array([fn(float(x), N, B) for x in np.ravel(d)]).reshape(np.shape(d))


def invert_cdf(cdf, target, bracket, tol=1e-10, max_iter=200):
    """Bisection for ``cdf(x) = target`` on a bracket ``(lo, hi)``.

    The interval is halved, keeping ``target`` inside ``[cdf(lo), cdf(hi)]``,
    until that image interval is narrower than ``tol``; the midpoint of the
    final interval is returned.
    """
    lo, hi = map(float, bracket)
    f_lo, f_hi = cdf(lo), cdf(hi)
    if not f_lo <= target <= f_hi:
        raise BracketError(
            f"target {target} outside [{f_lo}, {f_hi}] on bracket [{lo}, {hi}]")
    for _ in range(max_iter):
        if f_hi - f_lo <= tol or hi - lo <= 1e-15 * max(abs(hi), 1e-300):
            break
        mid = 0.5 * (lo + hi)
        f_mid = cdf(mid)
        if f_mid < target:
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return 0.5 * (lo + hi)


@functools.lru_cache(maxsize=256)
def percentile_V(delta, N, B):
    """P_V^{-1}(delta)."""
    return invert_cdf(lambda v: cdf_V(v, N, B), delta, (0.0, 1.0))


@functools.lru_cache(maxsize=256)
def percentile_D(delta, N, B):
    """P_D^{-1}(delta); the upper bracket doubles until it covers ``delta``."""
    hi = N * (B + 2) * 10.0
    while cdf_D(hi, N, B) < delta:
        hi *= 2.0
    return invert_cdf(lambda d: cdf_D(d, N, B), delta, (0.0, hi))


def simulate_zf_leakage(N, B, n, rng, batch=4096):
    """Monte Carlo draws of (V, D) by direct simulation of RVQ feedback.

    Each draw quantizes a Rayleigh channel with a fresh 2^B-word codebook
    and measures its leakage under a unit beam drawn isotropically from the
    null space of the quantized direction (which is where any ZF beam of
    another UE lies). ``V`` uses the unit-norm true direction, ``D`` the
    full channel.
    """
    _check_NB(N, B)
    n_cw = 2 ** B
    v = np.empty(n)
    d = np.empty(n)
    for start in range(0, n, batch):
        b = min(batch, n - start)
        h = (rng.standard_normal((b, N)) + 1j * rng.standard_normal((b, N))) / math.sqrt(2.0)
        nrm = np.linalg.norm(h, axis=1)
        h_dir = h / nrm[:, None]
        cb = rng.standard_normal((b, n_cw, N)) + 1j * rng.standard_normal((b, n_cw, N))
        cb /= np.linalg.norm(cb, axis=2, keepdims=True)
        inner = np.einsum("bcn,bn->bc", cb, h_dir.conj())
        h_hat = cb[np.arange(b), np.argmax(np.abs(inner), axis=1)]
        g = rng.standard_normal((b, N)) + 1j * rng.standard_normal((b, N))
        # ZF means h_hat @ w = 0, i.e. w orthogonal to conj(h_hat)
        g -= np.einsum("bn,bn->b", g, h_hat)[:, None] * h_hat.conj()
        w = g / np.linalg.norm(g, axis=1, keepdims=True)
        proj = np.abs(np.einsum("bn,bn->b", h_dir, w)) ** 2
        v[start:start + b] = proj
        d[start:start + b] = proj * nrm ** 2
    return v, d


# ---------------------------------------------------------------------------
# Thresholds
# ---------------------------------------------------------------------------

def min_avg_leakage(P_tilde, xi_j_sq, A_j, N, B):
    """Smallest expected leakage from a beam of power ``P_tilde`` onto UE j.

    Attained by the zero-forcing direction: ``P xi^2 A eta / (N-1)``.
    """
    if N < 2:
        raise DomainError(f"N must be >= 2, got {N}")
    return P_tilde * xi_j_sq * A_j * eta(N, B) / (N - 1)


def _others(csi, k):
    mask = np.ones(csi.K, dtype=bool)
    mask[k] = False
    return mask


def _uses_average(csi):
    return CmiMode(csi.cmi_mode) is CmiMode.AVERAGE


def threshold_malc(P_tilde_k, csi, k):
    """Leakage cap pinned to the zero-forcing minimum average leakage."""
    mask = _others(csi, k)
    if not mask.any():
        return 0.0
    N = csi.N
    if _uses_average(csi):
        return P_tilde_k * N * csi.eta / (N - 1) * float(csi.xi_sq[mask].sum())
    return P_tilde_k * csi.eta / (N - 1) * float((csi.xi_sq[mask] * csi.cmi[mask]).sum())


def delta_lower_endpoint(csi):
    """Smallest admissible RALC percentile: the CDF at the MALC point."""
    return _lower_endpoint(csi.N, csi.B, _uses_average(csi))


@functools.lru_cache(maxsize=None)
def _lower_endpoint(N, B, average):
    e = eta(N, B)
    if average:
        return cdf_D(N * e / (N - 1), N, B)
    return cdf_V(e / (N - 1), N, B)


def threshold_ralc(P_tilde_k, csi, k, delta, allow_low_delta=False):
    """Leakage cap at the ``delta`` percentile of the ZF leakage distribution."""
    mask = _others(csi, k)
    if not mask.any():
        return 0.0
    if csi.B is None:
        raise ConfigurationError("RALC thresholds need quantized CDI (B bits)")
    N, B = csi.N, csi.B
    low = delta_lower_endpoint(csi)
    if not delta > low:
        msg = (f"delta={delta} is not above the MALC percentile {low:.6f}; "
               "the RALC cap would be tighter than MALC")
        if not allow_low_delta:
            raise ConfigurationError(msg)
        warnings.warn(msg, stacklevel=2)
    if _uses_average(csi):
        return P_tilde_k * float(csi.xi_sq[mask].sum()) * percentile_D(delta, N, B)
    return P_tilde_k * float((csi.xi_sq[mask] * csi.cmi[mask]).sum()) * percentile_V(delta, N, B)
