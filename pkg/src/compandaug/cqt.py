"""Constant-Q log-power spectrogram front-end.

Bin ``k`` is centred at ``f_min * 2**(k / bins_per_octave)`` and analysed
with a Hann-windowed complex exponential of length ``ceil(Q * sr / f_k)``,
``Q = 1 / (2**(1/bins_per_octave) - 1)``.  Frame ``t`` is centred on sample
``t * hop``; the signal is zero-padded at both ends so every frame is
defined.  Kernels are normalised by their window sum, so a full-scale
sinusoid at a bin centre yields ``|X| = 0.5``.

Two evaluation paths share the kernel bank: ``method="direct"`` forms every
inner product explicitly; ``method="fft"`` evaluates the same inner products
in the frequency domain against precomputed kernel spectra.
"""

from __future__ import annotations

import functools
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioClip, DEFAULT_SAMPLE_RATE

N_BINS = 84
N_FRAMES = 550
LOG_FLOOR = 1e-10

FEATURE_MAGIC = b"CQTF"
FEATURE_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class FeatureError(ValueError):
    pass


@dataclass(frozen=True)
class CqtConfig:
    n_octaves: int = 7
    bins_per_octave: int = 12
    f_min: float = 62.5
    hop_samples: int = 128
    window: str = "hann"
    sample_rate: int = DEFAULT_SAMPLE_RATE
    pad_mode: str = "tile"

    def __post_init__(self):
        if self.n_octaves <= 0 or self.bins_per_octave <= 0 or self.hop_samples <= 0:
            raise ValueError("n_octaves, bins_per_octave and hop_samples must be positive")
        if self.window != "hann":
            raise ValueError("only the hann window is supported")
        if self.pad_mode not in ("tile", "zero"):
            raise ValueError("pad_mode must be 'tile' or 'zero'")
        if self.f_min <= 0 or self.f_min * 2 ** self.n_octaves > self.sample_rate / 2:
            raise ValueError("f_min * 2**n_octaves must not exceed Nyquist")

    @property
    def n_bins(self) -> int:
        return self.n_octaves * self.bins_per_octave

    @property
    def q_factor(self) -> float:
        return 1.0 / (2.0 ** (1.0 / self.bins_per_octave) - 1.0)

    def center_frequencies(self) -> np.ndarray:
        k = np.arange(self.n_bins)
        return self.f_min * 2.0 ** (k / self.bins_per_octave)

    def window_lengths(self) -> np.ndarray:
        return np.ceil(self.q_factor * self.sample_rate / self.center_frequencies()).astype(int)


@dataclass(frozen=True)
class _KernelBank:
    lengths: np.ndarray
    kernels: tuple          # normalised complex kernels, one per bin
    n_fft: int
    pos: np.ndarray         # (n_fft//2 + 1, n_bins) weights on rfft bins 0..n_fft/2
    neg: np.ndarray         # (n_fft//2 - 1, n_bins) weights on conj(rfft bins 1..n_fft/2-1)


@functools.lru_cache(maxsize=8)
def kernel_bank(cfg: CqtConfig) -> _KernelBank:
    freqs = cfg.center_frequencies()
    lengths = cfg.window_lengths()
    n_fft = 1 << int(math.ceil(math.log2(lengths.max())))
    half = n_fft // 2
    kernels = []
    embedded = np.zeros((len(freqs), n_fft), dtype=np.complex128)
    for k, (f, n) in enumerate(zip(freqs, lengths)):
        win = np.hanning(n + 2)[1:-1]    # drop the zero end points
        t = np.arange(n) - (n - 1) / 2.0
        ker = win * np.exp(-2j * np.pi * f * t / cfg.sample_rate) / win.sum()
        ker.setflags(write=False)
        kernels.append(ker)
        start = half - n // 2
        embedded[k, start:start + n] = ker
    # sum_j v[j] g[j] = (1/N) sum_f V[f] D[f] with D = conj(fft(conj(g)));
    # for real v, V[N - f] = conj(V[f]) folds the sum onto the rfft bins
    D = np.conj(np.fft.fft(np.conj(embedded), axis=1)) / n_fft
    pos = np.ascontiguousarray(D[:, :half + 1].T)
    neg = np.ascontiguousarray(D[:, :half:-1].T)
    return _KernelBank(lengths, tuple(kernels), n_fft, pos, neg)


def _frames_needed(n_samples: int, hop: int) -> int:
    return -(-n_samples // hop)


def cqt(clip: AudioClip, cfg: CqtConfig = CqtConfig(), method: str = "direct") -> np.ndarray:
    """Complex CQT coefficients, shape (n_bins, ceil(len / hop))."""
    if clip.sample_rate != cfg.sample_rate:
        raise FeatureError("clip at %d Hz, config expects %d Hz"
                           % (clip.sample_rate, cfg.sample_rate))
    n = len(clip)
    if n < cfg.hop_samples:
        raise FeatureError("clip shorter than one hop (%d < %d samples)"
                           % (n, cfg.hop_samples))
    bank = kernel_bank(cfg)
    T = _frames_needed(n, cfg.hop_samples)
    half = bank.n_fft // 2
    padded = np.zeros(n + 2 * half + cfg.hop_samples)
    padded[half:half + n] = clip.samples
    starts = np.arange(T) * cfg.hop_samples       # window centre = start + half
    if method == "direct":
        out = np.empty((cfg.n_bins, T), dtype=np.complex128)
        for k, ker in enumerate(bank.kernels):
            L = len(ker)
            offset = half - L // 2
            view = np.lib.stride_tricks.sliding_window_view(padded, L)
            out[k] = view[starts + offset] @ ker
        return out
    if method == "fft":
        frames = np.lib.stride_tricks.sliding_window_view(padded, bank.n_fft)[starts]
        spec = np.fft.rfft(frames, axis=1)
        return (spec @ bank.pos + np.conj(spec[:, 1:half]) @ bank.neg).T
    raise ValueError("method must be 'direct' or 'fft'")


def cqt_lps(clip: AudioClip, cfg: CqtConfig = CqtConfig(), method: str = "direct",
            ) -> np.ndarray:
    """log10(|X|^2 + 1e-10), shape (n_bins, T)."""
    X = cqt(clip, cfg, method)
    return np.log10(X.real ** 2 + X.imag ** 2 + LOG_FLOOR)


def fix_length(matrix: np.ndarray, n_frames: int = N_FRAMES, mode: str = "tile") -> np.ndarray:
    """Crop to the first ``n_frames`` frames, or pad by tiling / zeros."""
    matrix = np.asarray(matrix)
    T = matrix.shape[1]
    if T < 1:
        raise FeatureError("empty feature matrix")
    if T >= n_frames:
        return matrix[:, :n_frames].copy()
    if mode == "tile":
        reps = -(-n_frames // T)
        return np.tile(matrix, (1, reps))[:, :n_frames]
    if mode == "zero":
        out = np.zeros((matrix.shape[0], n_frames), dtype=matrix.dtype)
        out[:, :T] = matrix
        return out
    raise ValueError("mode must be 'tile' or 'zero'")


def extract_features(clip: AudioClip, cfg: CqtConfig = CqtConfig(), method: str = "direct",
                     ) -> np.ndarray:
    """Fixed-size LPS feature matrix (84 x 550 with default config)."""
    return fix_length(cqt_lps(clip, cfg, method), N_FRAMES, cfg.pad_mode)


def write_features(values: np.ndarray, path) -> None:
    values = np.asarray(values, dtype="<f4")
    if values.ndim != 2:
        raise FeatureError("feature matrix must be 2-D")
    rows, cols = values.shape
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(FEATURE_MAGIC, FEATURE_VERSION, rows, cols))
        fh.write(np.ascontiguousarray(values).tobytes())


def read_feature_header(path) -> tuple[int, int]:
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
    if len(head) != _HEADER.size:
        raise FeatureError("%s: truncated header" % path)
    magic, version, rows, cols = _HEADER.unpack(head)
    if magic != FEATURE_MAGIC:
        raise FeatureError("%s: not a feature file" % path)
    if version != FEATURE_VERSION:
        raise FeatureError("%s: unsupported feature file version %d" % (path, version))
    return rows, cols


def read_features(path) -> np.ndarray:
    rows, cols = read_feature_header(path)
    data = np.fromfile(path, dtype="<f4", offset=_HEADER.size)
    if data.size != rows * cols:
        raise FeatureError("%s: expected %d values, found %d" % (path, rows * cols, data.size))
    return data.reshape(rows, cols)


class FeatureStore:
    """Directory of feature files named ``<utt_id>.cqt``."""

    suffix = ".cqt"

    def __init__(self, root):
        self.root = Path(root)

    def path(self, utt_id: str) -> Path:
        return self.root / (utt_id + self.suffix)

    def __contains__(self, utt_id: str) -> bool:
        return self.path(utt_id).is_file()

    def load(self, utt_id: str) -> np.ndarray:
        return read_features(self.path(utt_id))

    def save(self, utt_id: str, values: np.ndarray) -> None:
        write_features(values, self.path(utt_id))
