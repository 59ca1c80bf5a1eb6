"""a-law and mu-law companding.

Two realizations are provided.  The continuous laws map [-1, 1] onto itself
and are exactly invertible.  The quantized form is the 8-bit ITU-T G.711
codec: a segmented sign/exponent/mantissa code with even-bit inversion
(a-law) or full complement (mu-law), decoded to segment midpoints.

Bit manipulation follows the ITU-T G.191 reference coder, which maps a
negative input ``x`` through its one's complement ``~x`` so that ``x`` and
``-x - 1`` share a magnitude code.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .audio import AudioClip, float_to_pcm16, pcm16_to_float

A_LAW_DEFAULT = 86.5
MU_LAW_DEFAULT = 255.0


class Law(str, enum.Enum):
    A_LAW = "a_law"
    MU_LAW = "mu_law"


class Mode(str, enum.Enum):
    CONTINUOUS = "continuous"
    QUANTIZED8 = "quantized8"


class CompandingDomainError(ValueError):
    pass


@dataclass(frozen=True)
class CompandingLaw:
    law: Law = Law.MU_LAW
    A: float = A_LAW_DEFAULT
    mu: float = MU_LAW_DEFAULT
    mode: Mode = Mode.QUANTIZED8

    def __post_init__(self):
        object.__setattr__(self, "law", Law(self.law))
        object.__setattr__(self, "mode", Mode(self.mode))
        if not self.A > 1.0:
            raise ValueError("a-law parameter A must exceed 1, got %r" % self.A)
        if not self.mu > 0.0:
            raise ValueError("mu-law parameter must be positive, got %r" % self.mu)

    @property
    def tag(self) -> str:
        return "alaw" if self.law is Law.A_LAW else "mulaw"


ALAW = CompandingLaw(Law.A_LAW)
MULAW = CompandingLaw(Law.MU_LAW)


def _check_domain(v: np.ndarray, name: str) -> None:
    if v.size and not np.all(np.abs(v) <= 1.0):
        raise CompandingDomainError("%s must lie in [-1, 1]" % name)


def _result(out: np.ndarray, scalar: bool):
    return float(out) if scalar else out


def compress(x, law: CompandingLaw = MULAW):
    """Continuous compression F(x); accepts a scalar or an array."""
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=np.float64)
    _check_domain(x, "x")
    ax = np.abs(x)
    if law.law is Law.A_LAW:
        A = law.A
        denom = 1.0 + np.log(A)
        small = ax < 1.0 / A
        # the log branch is evaluated on a safe argument and masked out below
        big = (1.0 + np.log(A * np.where(small, 1.0, ax))) / denom
        mag = np.where(small, A * ax / denom, big)
    else:
        mag = np.log1p(law.mu * ax) / np.log1p(law.mu)
    # rounding can push |F(1)| one ulp past 1
    return _result(np.sign(x) * np.minimum(mag, 1.0), scalar)


def expand(y, law: CompandingLaw = MULAW):
    """Continuous expansion F^-1(y); exact inverse of :func:`compress`."""
    scalar = np.ndim(y) == 0
    y = np.asarray(y, dtype=np.float64)
    _check_domain(y, "y")
    ay = np.abs(y)
    if law.law is Law.A_LAW:
        A = law.A
        denom = 1.0 + np.log(A)
        small = ay < 1.0 / denom
        mag = np.where(small, ay * denom / A, np.exp(ay * denom - 1.0) / A)
    else:
        mag = np.expm1(ay * np.log1p(law.mu)) / law.mu
    return _result(np.sign(y) * np.minimum(mag, 1.0), scalar)


# --- G.711 -----------------------------------------------------------------

_MU_BIAS = 33          # 0x84 >> 2, in the 14-bit domain
_MU_CLIP = 0x1FFF


def _bit_length(v: np.ndarray) -> np.ndarray:
    # frexp is exact for integers below 2**53
    return np.frexp(v.astype(np.float64))[1].astype(np.int32)


def _alaw_encode(pcm: np.ndarray) -> np.ndarray:
    pcm = pcm.astype(np.int32)
    ix = np.where(pcm < 0, ~pcm, pcm) >> 4           # 12-bit magnitude
    big = ix > 15
    exp = np.where(big, _bit_length(ix) - 4, 0)
    mant = np.where(big, (ix >> np.maximum(exp - 1, 0)) & 0xF, ix)
    code = (exp << 4) | mant
    code = np.where(pcm >= 0, code | 0x80, code)
    return (code ^ 0x55).astype(np.uint8)


def _alaw_decode(code: np.ndarray) -> np.ndarray:
    code = code.astype(np.int32)
    ix = (code ^ 0x55) & 0x7F
    exp = ix >> 4
    mant = ix & 0xF
    mant = np.where(exp > 0, mant + 16, mant)
    mant = (mant << 4) + 8
    mant = np.where(exp > 1, mant << np.maximum(exp - 1, 0), mant)
    return np.where(code > 127, mant, -mant).astype(np.int16)


def _mulaw_encode(pcm: np.ndarray) -> np.ndarray:
    pcm = pcm.astype(np.int32)
    absno = (np.where(pcm < 0, ~pcm, pcm) >> 2) + _MU_BIAS
    absno = np.minimum(absno, _MU_CLIP)
    segno = 1 + _bit_length(absno >> 6)
    high = 8 - segno
    low = 0xF - ((absno >> segno) & 0xF)
    code = (high << 4) | low
    code = np.where(pcm >= 0, code | 0x80, code)
    return code.astype(np.uint8)


def _mulaw_decode(code: np.ndarray) -> np.ndarray:
    code = code.astype(np.int32)
    sign = np.where(code < 0x80, -1, 1)
    inv = ~code
    exponent = (inv >> 4) & 0x7
    mant = inv & 0xF
    step = 4 << (exponent + 1)
    mag = (0x80 << exponent) + step * mant + step // 2 - 4 * _MU_BIAS
    return (sign * mag).astype(np.int16)


def g711_encode(pcm, law: CompandingLaw = MULAW):
    """Encode int16 samples (scalar or array) to 8-bit G.711 codewords."""
    scalar = np.ndim(pcm) == 0
    arr = np.atleast_1d(np.asarray(pcm))
    if arr.dtype.kind not in "iu" or (arr.size and (arr.min() < -32768 or arr.max() > 32767)):
        raise ValueError("g711_encode expects int16 samples")
    out = _alaw_encode(arr) if law.law is Law.A_LAW else _mulaw_encode(arr)
    return int(out[0]) if scalar else out


def g711_decode(code, law: CompandingLaw = MULAW):
    """Decode 8-bit G.711 codewords to int16 segment midpoints."""
    scalar = np.ndim(code) == 0
    arr = np.atleast_1d(np.asarray(code))
    if arr.dtype.kind not in "iu" or (arr.size and (arr.min() < 0 or arr.max() > 255)):
        raise ValueError("g711_decode expects byte values 0..255")
    out = _alaw_decode(arr) if law.law is Law.A_LAW else _mulaw_decode(arr)
    return int(out[0]) if scalar else out


def companding_perturb(clip: AudioClip, law: CompandingLaw = MULAW) -> AudioClip:
    """Compress then expand a clip.

    In quantized8 mode samples go float -> int16 (saturating) -> G.711 code
    -> int16 -> float, which injects the codec's quantization noise.  In
    continuous mode the round trip is the identity up to rounding.
    """
    x = clip.samples
    if law.mode is Mode.CONTINUOUS:
        return clip.with_samples(expand(compress(x, law), law))
    _check_domain(x, "clip samples")
    pcm = float_to_pcm16(x)
    return clip.with_samples(pcm16_to_float(g711_decode(g711_encode(pcm, law), law)))


def quantized_companding_channel(samples: np.ndarray, law: CompandingLaw, bits: int = 8,
                                 ) -> np.ndarray:
    """Continuous law with uniform quantization of the compressed value.

    A generic companded channel (any A or mu, any code width), used to model
    transmission channels that are not bit-exact G.711.
    """
    levels = 2 ** (bits - 1)
    y = compress(np.clip(samples, -1.0, 1.0), law)
    q = np.clip(np.round(y * levels), -levels, levels - 1) / levels
    return expand(q, law)
