"""
Rayleigh channel generation, random vector quantization (RVQ) of channel
directions, quantization of the channel-fading magnitude, and sampling of
the base station's uncertainty model for the true channel direction.

Row-vector convention: a channel ``h`` has shape ``(N,)`` and acts on a
beamformer ``w`` (also ``(N,)``) as ``h @ w``. Inner products of two
channel rows are written ``a @ b.conj()``.
"""

import enum
import functools
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, DomainError, InvalidInputError
from .numerics import beta_fn, chi2_cdf_inverse


class CmiMode(str, enum.Enum):
    AVERAGE = "average"
    QUANTIZED = "quantized"
    PERFECT = "perfect"


# purpose tags for the counter-based RNG streams
STREAM_CHANNEL = 0
STREAM_CODEBOOK = 1
STREAM_SCHEME = 2
STREAM_SAMPLER = 3


def make_rng(seed, *keys):
    """Independent generator keyed by ``(seed, *keys)``.

    Streams with different keys are statistically independent, and the same
    key always reproduces the same stream regardless of call order.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SystemConfig:
    """All scenario parameters. Powers are linear, not dB.

    ``P_n`` holds the per-antenna budgets; ``P = sum(P_n)``. The leakage
    scheme knobs (``delta``, ``L_rand``, ``epsilon``, ``L_algo1``) only
    matter for the robust schemes.
    """

    N: int = 4
    K: int = 4
    B: int = 6
    M: int = 0
    cmi_mode: CmiMode = CmiMode.AVERAGE
    alpha: tuple = (1.5, 1.5, 1.0, 1.0)
    xi: tuple = (1.0, 1.0, 1.0, 1.0)
    P_n: tuple = (25.0, 25.0, 25.0, 25.0)
    N0: float = 1.0
    delta: float = 0.8
    L_rand: int = 1000
    epsilon: float = 0.01
    L_algo1: int = 3
    seed: int = 0
    fixed_codebook: bool = False
    allow_low_delta: bool = False
    plc_gamma: float = 0.9
    plc_p: float = 0.05
    gp_max_iter: int = 30

    def __post_init__(self):
        object.__setattr__(self, "cmi_mode", CmiMode(self.cmi_mode))
        for name in ("alpha", "xi", "P_n"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not self.N >= self.K >= 1:
            raise ConfigurationError(f"need N >= K >= 1, got N={self.N}, K={self.K}")
        if self.B < 0 or self.M < 0:
            raise ConfigurationError("bit budgets B and M must be nonnegative")
        if self.cmi_mode is CmiMode.QUANTIZED and self.M < 1:
            raise ConfigurationError("quantized CF-CMI needs M >= 1 bits")
        if len(self.alpha) != self.K or len(self.xi) != self.K:
            raise ConfigurationError("alpha and xi need one entry per UE")
        if len(self.P_n) != self.N:
            raise ConfigurationError("P_n needs one entry per antenna")
        if min(self.alpha) <= 0 or min(self.xi) <= 0 or min(self.P_n) <= 0:
            raise ConfigurationError("weights, amplitudes and power budgets must be positive")
        if self.N0 <= 0:
            raise ConfigurationError("noise power must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError(f"delta must lie in (0, 1), got {self.delta}")
        if self.L_rand < 1 or self.epsilon <= 0 or self.L_algo1 < 0:
            raise ConfigurationError("invalid algorithm knobs (L_rand, epsilon, L_algo1)")

    @property
    def P(self):
        return float(sum(self.P_n))

    @property
    def snr_db(self):
        return 10.0 * math.log10(self.P / self.N0)

    @property
    def xi_sq(self):
        return np.asarray(self.xi) ** 2

    def with_snr(self, snr_db):
        """Copy with total power ``N0 * 10^(snr/10)`` split evenly over antennas."""
        P = self.N0 * 10.0 ** (snr_db / 10.0)
        return replace(self, P_n=(P / self.N,) * self.N)

    def replace(self, **changes):
        return replace(self, **changes)


@dataclass(frozen=True)
class ChannelRealization:
    h: np.ndarray   # (K, N) small-scale channel rows
    xi: np.ndarray  # (K,) large-scale amplitudes

    @property
    def H(self):
        """Stacked channel with large-scale gains applied, rows xi_k h_k."""
        return self.xi[:, None] * self.h


@dataclass(frozen=True)
class RvqCodebook:
    codewords: np.ndarray  # (2^B, N), unit-norm rows

    def __len__(self):
        return self.codewords.shape[0]


@dataclass(frozen=True)
class QuantizedCsi:
    """What the base station knows about each UE.

    ``cmi`` holds the CF-CMI used in beamformer design (``N`` for the
    average mode, the quantized or exact ``||h_k||^2`` otherwise).
    ``eta`` is the mean squared sine of the quantization angle, 0 for
    perfect CDI.
    """

    h_hat: np.ndarray   # (K, N)
    cmi: np.ndarray     # (K,)
    xi_sq: np.ndarray   # (K,)
    B: object           # int, or None for perfect CDI
    eta: float
    cmi_mode: CmiMode = CmiMode.AVERAGE
    indices: np.ndarray = field(default=None)

    @property
    def K(self):
        return self.h_hat.shape[0]

    @property
    def N(self):
        return self.h_hat.shape[1]

    @property
    def h_check(self):
        """Channel estimates sqrt(A_k) * h_hat_k used by non-robust schemes."""
        return np.sqrt(self.cmi)[:, None] * self.h_hat

    @property
    def H_check(self):
        """Rows xi_k * sqrt(A_k) * h_hat_k."""
        return np.sqrt(self.xi_sq)[:, None] * self.h_check


def generate_channel(config, rng):
    K, N = config.K, config.N
    h = (rng.standard_normal((K, N)) + 1j * rng.standard_normal((K, N))) / math.sqrt(2.0)
    return ChannelRealization(h=h, xi=np.asarray(config.xi, dtype=float))


def _isotropic_rows(rng, n_rows, N):
    g = rng.standard_normal((n_rows, N)) + 1j * rng.standard_normal((n_rows, N))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def make_codebook(N, B, rng):
    """RVQ codebook: 2^B i.i.d. isotropic unit vectors in C^N."""
    return RvqCodebook(codewords=_isotropic_rows(rng, 2 ** B, N))


def quantize_cdi(h_k, codebook):
    """Pick the codeword with the largest |c h~^H|.

    The returned codeword is phase-rotated so that ``h_hat @ h~.conj()`` is
    real and nonnegative; the index refers to the unrotated codebook entry.
    Ties go to the lowest index.
    """
    h_k = np.asarray(h_k, dtype=complex)
    nrm = np.linalg.norm(h_k)
    if nrm == 0:
        raise InvalidInputError("cannot quantize the direction of a zero channel")
    h_tilde = h_k / nrm
    inner = codebook.codewords @ h_tilde.conj()
    idx = int(np.argmax(np.abs(inner)))
    c = inner[idx]
    phase = c / abs(c) if abs(c) > 0 else 1.0
    return idx, codebook.codewords[idx] * np.conj(phase)


def decompose_direction(h_tilde, h_hat):
    """Split ``h_tilde`` into components along and orthogonal to ``h_hat``.

    Returns ``(cos_theta, sin_theta, e)`` with ``e`` unit-norm and orthogonal
    to ``h_hat``. When ``h_hat`` follows the phase convention of
    :func:`quantize_cdi`, ``h_tilde == cos_theta * h_hat + sin_theta * e``.
    If the two are parallel, ``sin_theta`` is 0 and ``e`` is the zero vector.
    """
    h_tilde = np.asarray(h_tilde, dtype=complex)
    h_hat = np.asarray(h_hat, dtype=complex)
    c = h_tilde @ h_hat.conj()
    resid = h_tilde - c * h_hat
    sin_t = float(np.linalg.norm(resid))
    cos_t = float(abs(c))
    if sin_t < 1e-12:
        return cos_t, 0.0, np.zeros_like(h_hat)
    return cos_t, sin_t, resid / sin_t


@functools.lru_cache(maxsize=64)
def cf_cmi_codebook(M, N):
    """Midpoint codebook T_i = P_R^{-1}((2i+1) / 2^{M+1}), i < 2^M."""
    if M < 1:
        raise DomainError("CF-CMI codebook needs M >= 1")
    levels = 2 ** M
    return np.array([chi2_cdf_inverse((2 * i + 1) / (2 * levels), N) for i in range(levels)])


def quantize_cf_cmi(norm_sq, M, N):
    T = cf_cmi_codebook(M, N)
    return float(T[np.argmin(np.abs(norm_sq - T))])


def eta(N, B):
    """Mean of Z = sin^2 of the RVQ quantization angle: 2^B beta(2^B, N/(N-1))."""
    if N < 2:
        raise DomainError(f"eta needs N >= 2, got {N}")
    if B < 0:
        raise DomainError(f"eta needs B >= 0, got {B}")
    n_cw = 2.0 ** B
    return n_cw * beta_fn(n_cw, N / (N - 1.0))


def sample_z(N, B, rng, size=None):
    """Inverse-CDF draws of Z with P_Z(z) = 1 - (1 - z^{N-1})^{2^B}."""
    u = rng.random(size)
    # 1 - (1-u)^{1/2^B}, stable for large B
    s = -np.expm1(np.log1p(-u) / 2.0 ** B)
    return s ** (1.0 / (N - 1))


def _nullspace_unit(h_hat, rng, size):
    """Isotropic unit vectors in the orthogonal complement of ``h_hat``."""
    N = h_hat.shape[-1]
    out = np.empty((size, N), dtype=complex)
    todo = np.arange(size)
    while todo.size:
        g = (rng.standard_normal((todo.size, N)) + 1j * rng.standard_normal((todo.size, N)))
        g = g - np.outer(g @ h_hat.conj(), h_hat)
        nrm = np.linalg.norm(g, axis=1)
        ok = nrm >= 1e-9
        out[todo[ok]] = g[ok] / nrm[ok, None]
        todo = todo[~ok]
    return out


def sample_true_direction(h_hat, N, B, rng, size=None):
    """Draw h◊ = sqrt(1-Z) h_hat + sqrt(Z) e◊ around a quantized direction.

    With ``size=None`` a single ``(N,)`` vector is returned, otherwise an
    array of shape ``(size, N)``.
    """
    h_hat = np.asarray(h_hat, dtype=complex)
    n = 1 if size is None else int(size)
    if N < 2:
        return np.broadcast_to(h_hat, (n, N)).copy() if size is not None else h_hat.copy()
    z = sample_z(N, B, rng, n)
    e = _nullspace_unit(h_hat, rng, n)
    draws = np.sqrt(1.0 - z)[:, None] * h_hat[None, :] + np.sqrt(z)[:, None] * e
    return draws[0] if size is None else draws


def _cmi_values(channel, config):
    norm_sq = np.sum(np.abs(channel.h) ** 2, axis=1)
    if config.cmi_mode is CmiMode.AVERAGE:
        return np.full(config.K, float(config.N))
    if config.cmi_mode is CmiMode.QUANTIZED:
        return np.array([quantize_cf_cmi(a, config.M, config.N) for a in norm_sq])
    return norm_sq


def quantize_channel(channel, config, trial=0):
    """Feed back B-bit CDI (one fresh RVQ codebook per UE) and CF-CMI.

    Codebooks are drawn from the stream keyed by ``(seed, trial, UE)``, or
    from a single trial-independent stream when ``config.fixed_codebook``.
    """
    K, N = config.K, config.N
    h_hat = np.empty((K, N), dtype=complex)
    idx = np.empty(K, dtype=int)
    for k in range(K):
        if config.fixed_codebook:
            rng = make_rng(config.seed, STREAM_CODEBOOK, 0, k)
        else:
            rng = make_rng(config.seed, STREAM_CODEBOOK, trial, k)
        cb = make_codebook(N, config.B, rng)
        idx[k], h_hat[k] = quantize_cdi(channel.h[k], cb)
    return QuantizedCsi(
        h_hat=h_hat,
        cmi=_cmi_values(channel, config),
        xi_sq=np.asarray(channel.xi) ** 2,
        B=config.B,
        eta=eta(N, config.B) if N >= 2 else 0.0,
        cmi_mode=config.cmi_mode,
        indices=idx,
    )


def perfect_csi(channel):
    """Base-station knowledge with exact CDI and exact CF-CMI."""
    norm_sq = np.sum(np.abs(channel.h) ** 2, axis=1)
    return QuantizedCsi(
        h_hat=channel.h / np.sqrt(norm_sq)[:, None],
        cmi=norm_sq,
        xi_sq=np.asarray(channel.xi) ** 2,
        B=None,
        eta=0.0,
        cmi_mode=CmiMode.PERFECT,
    )
