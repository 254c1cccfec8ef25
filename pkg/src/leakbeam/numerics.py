"""
Small dense complex linear algebra and the special functions used by the
leakage statistics and the channel quantizer.

Matrices are plain ``numpy`` arrays (complex128). Hermitian inputs are
validated against a relative tolerance before use.
"""

import math

import numpy as np
from scipy import special

from .errors import DomainError, InvalidInputError, SingularityError

HERMITIAN_RTOL = 1e-12


def is_hermitian(A, rtol=HERMITIAN_RTOL):
    A = np.asarray(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        return False
    scale = max(np.abs(A).max(initial=0.0), 1e-300)
    return np.abs(A - A.conj().T).max(initial=0.0) <= rtol * scale


def as_hermitian(A, rtol=HERMITIAN_RTOL):
    """Validate ``A`` as Hermitian and return its exactly symmetrized copy."""
    A = np.asarray(A, dtype=complex)
    if not is_hermitian(A, rtol):
        raise InvalidInputError("matrix is not Hermitian within tolerance")
    return 0.5 * (A + A.conj().T)


def hermitian_eig(A, rtol=HERMITIAN_RTOL):
    """Eigendecomposition of a Hermitian matrix.

    Returns
    -------
    eigenvalues : ndarray, shape (n,)
        Real eigenvalues in descending order.
    eigenvectors : ndarray, shape (n, n)
        Unit-norm, mutually orthogonal eigenvectors stored as columns, in
        the same order as ``eigenvalues``.
    """
    A = as_hermitian(A, rtol)
    w, V = np.linalg.eigh(A)
    return w[::-1].copy(), V[:, ::-1].copy()


def top_eigvec(A):
    """Eigenpair of the largest eigenvalue of a Hermitian matrix."""
    w, V = np.linalg.eigh(0.5 * (A + A.conj().T))
    return w[-1], V[:, -1]


def pseudo_inverse(A, rcond=1e-10):
    """Right pseudo-inverse of a full-row-rank K x N matrix (K <= N)."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2:
        raise InvalidInputError("expected a 2-D matrix")
    K, N = A.shape
    if K > N:
        raise SingularityError(f"{K}x{N} matrix cannot have full row rank")
    s = np.linalg.svd(A, compute_uv=False)
    if s[-1] <= rcond * s[0]:
        raise SingularityError(
            f"matrix is rank deficient (condition {s[0] / max(s[-1], 1e-300):.3g})")
    # A^H (A A^H)^{-1}, solved rather than inverted
    G = A @ A.conj().T
    return np.linalg.solve(G, A).conj().T


def log_gamma(x):
    if x <= 0:
        raise DomainError(f"log_gamma requires x > 0, got {x}")
    return float(special.gammaln(x))


def beta_fn(x, y):
    if x <= 0 or y <= 0:
        raise DomainError(f"beta_fn requires positive arguments, got ({x}, {y})")
    if float(x).is_integer() and x <= _BETA_PRODUCT_MAX:
        # B(n, y) = (1/y) prod_{i<n} i / (y + i): n roundings instead of the
        # cancellation between large log-gamma values
        out = 1.0 / y
        for i in range(1, int(x)):
            out *= i / (y + i)
        return out
    return math.exp(log_gamma(x) + log_gamma(y) - log_gamma(x + y))


_BETA_PRODUCT_MAX = 1 << 16


def exp_integral_e1(x):
    """Exponential integral E1(x) = int_x^inf e^-t / t dt for x > 0."""
    if x <= 0:
        raise DomainError(f"E1 requires x > 0, got {x}")
    return float(special.exp1(x))


def chi2_cdf(r, N):
    """CDF of ||h||^2 for h with N i.i.d. unit-variance complex Gaussians.

    Equals ``1 - exp(-r) * sum_{l<N} r^l / l!``, i.e. the regularized lower
    incomplete gamma function P(N, r).
    """
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    r = np.maximum(np.asarray(r, dtype=float), 0.0)
    out = special.gammainc(N, r)
    return float(out) if out.ndim == 0 else out


def chi2_pdf(r, N):
    r = np.asarray(r, dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(r > 0, np.exp((N - 1) * np.log(np.where(r > 0, r, 1.0))
                                     - r - special.gammaln(N)), 0.0)
    return float(out) if out.ndim == 0 else out


def chi2_cdf_inverse(p, N):
    """Inverse of :func:`chi2_cdf` in its first argument."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"p must lie in (0, 1), got {p}")
    if N < 1:
        raise DomainError(f"N must be >= 1, got {N}")
    r = float(special.gammaincinv(N, p))
    # one Newton polish step on the closed form
    f = chi2_cdf(r, N) - p
    dens = chi2_pdf(r, N)
    if dens > 0 and abs(f) > 1e-15:
        r = max(r - f / dens, 0.0)
    return r
