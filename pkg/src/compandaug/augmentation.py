"""Training-set augmentation: companded copies (DASC) and noise at fixed SNR."""

from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .audio import AudioClip, DatasetManifest, TrialRecord, read_wav, write_wav
from .companding import ALAW, MULAW, CompandingLaw, Mode, companding_perturb

log = logging.getLogger(__name__)

CLIP_WARN_FRACTION = 0.001


class AugmentationError(ValueError):
    pass


@dataclass(frozen=True)
class Identity:
    suffix: str = ""


@dataclass(frozen=True)
class Compand:
    law: CompandingLaw

    @property
    def suffix(self) -> str:
        tag = self.law.tag
        return "_" + tag if self.law.mode is Mode.QUANTIZED8 else "_%s_cont" % tag


@dataclass(frozen=True)
class Noise:
    """Additive noise; ``source`` is ``"white"`` or a path to a noise WAV."""
    source: str = "white"
    snr_db: float = 20.0
    name: str | None = None

    def __post_init__(self):
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ValueError("snr_db must be a number or +inf")

    @property
    def suffix(self) -> str:
        label = self.name or ("white" if self.source == "white" else Path(self.source).stem)
        snr = "inf" if math.isinf(self.snr_db) else "%g" % self.snr_db
        return "_%s%sdb" % (label, snr)


@dataclass
class AugmentationPlan:
    methods: list = field(default_factory=list)
    output_root: Path = Path("augmented")
    seed: int = 0

    def __post_init__(self):
        self.output_root = Path(self.output_root)
        if not any(isinstance(m, Identity) for m in self.methods):
            self.methods.insert(0, Identity())
        suffixes = [m.suffix for m in self.methods]
        if len(set(suffixes)) != len(suffixes):
            raise ValueError("augmentation methods must produce distinct utt_id suffixes")

    @classmethod
    def dasc(cls, output_root, seed: int = 0, mode: Mode = Mode.QUANTIZED8):
        return cls([Identity(), Compand(replace(ALAW, mode=Mode(mode))),
                    Compand(replace(MULAW, mode=Mode(mode)))], output_root, seed)

    @classmethod
    def noise(cls, output_root, sources=("white",), snr_db: float = 20.0, seed: int = 0):
        return cls([Identity()] + [Noise(s, snr_db) for s in sources], output_root, seed)

    @property
    def multiplier(self) -> int:
        return len(self.methods)


@dataclass
class AugmentReport:
    errors: list = field(default_factory=list)       # (utt_id, message)
    measured_snr: dict = field(default_factory=dict)  # derived utt_id -> dB

    @property
    def ok(self) -> bool:
        return not self.errors

    def write(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as fh:
            for utt, msg in self.errors:
                fh.write("%s\t%s\n" % (utt, msg))


def record_seed(seed: int, utt_id: str) -> int:
    """Per-record RNG seed, stable across processes and scheduling order."""
    digest = hashlib.sha256(("%d:%s" % (seed, utt_id)).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def gen_white_noise(length: int, seed: int, sample_rate: int = 16000) -> AudioClip:
    """Zero-mean Gaussian noise scaled so its peak magnitude is 1."""
    if length <= 0:
        raise ValueError("length must be positive")
    x = np.random.default_rng(seed).standard_normal(length)
    x -= x.mean()
    peak = np.abs(x).max()
    return AudioClip(x / peak if peak > 0 else x, sample_rate)


def _noise_segment(noise: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    if len(noise) < n:
        noise = np.tile(noise, -(-n // len(noise)))
    offset = int(rng.integers(0, len(noise) - n + 1))
    return noise[offset:offset + n]


def snr_db(clean: np.ndarray, noise: np.ndarray) -> float:
    return 10.0 * math.log10(np.mean(clean ** 2) / np.mean(noise ** 2))


def mix_noise_at_snr(clip: AudioClip, noise: AudioClip, snr_db: float, seed: int) -> AudioClip:
    """Add ``noise`` scaled to the target full-utterance SNR.

    A seeded random segment of the (tiled, if short) noise is used.  The
    result is clipped to [-1, 1]; a warning is logged when more than 0.1%
    of samples clip.
    """
    if clip.sample_rate != noise.sample_rate:
        raise AugmentationError("clip and noise sample rates differ")
    if snr_db == math.inf:
        return clip
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise AugmentationError("snr_db must be finite or +inf")
    p_sig = clip.power()
    if p_sig == 0.0:
        raise AugmentationError("clip is silent; SNR is undefined")
    if noise.power() == 0.0:
        raise AugmentationError("noise is silent")
    seg = _noise_segment(noise.samples, len(clip), np.random.default_rng(seed))
    p_noise = float(np.mean(seg ** 2))
    if p_noise == 0.0:
        raise AugmentationError("selected noise segment is silent")
    gain = math.sqrt(p_sig / (p_noise * 10.0 ** (snr_db / 10.0)))
    mixed = clip.samples + gain * seg
    n_clip = int(np.count_nonzero(np.abs(mixed) > 1.0))
    if n_clip > CLIP_WARN_FRACTION * len(mixed):
        log.warning("%.2f%% of samples clipped while mixing at %g dB",
                    100.0 * n_clip / len(mixed), snr_db)
    return clip.with_samples(np.clip(mixed, -1.0, 1.0))


def _load_noise(source: str, cache: dict) -> AudioClip | None:
    if source == "white":
        return None
    if source not in cache:
        cache[source] = read_wav(source)
    return cache[source]


def apply_method(method, clip: AudioClip, seed: int, noise_clip: AudioClip | None = None,
                 ) -> AudioClip:
    if isinstance(method, Identity):
        return clip
    if isinstance(method, Compand):
        return companding_perturb(clip, method.law)
    if isinstance(method, Noise):
        if noise_clip is None:
            noise_clip = gen_white_noise(len(clip), seed + 1, clip.sample_rate)
        return mix_noise_at_snr(clip, noise_clip, method.snr_db, seed)
    raise TypeError("unknown augmentation method %r" % (method,))


def _augment_record(rec: TrialRecord, manifest: DatasetManifest, plan: AugmentationPlan,
                    noises: dict):
    clip = read_wav(manifest.audio_path(rec))
    base = record_seed(plan.seed, rec.utt_id)
    out = []
    for i, method in enumerate(plan.methods):
        seed = (base + 7919 * i) % 2 ** 63
        noise_clip = noises.get(method.source) if isinstance(method, Noise) else None
        derived = apply_method(method, clip, seed, noise_clip)
        new_rec = replace(rec, utt_id=rec.utt_id + method.suffix)
        write_wav(derived, plan.output_root / (new_rec.utt_id + ".wav"))
        snr = None
        if isinstance(method, Noise) and not math.isinf(method.snr_db):
            snr = snr_db(clip.samples, derived.samples - clip.samples)
        out.append((new_rec, snr))
    return out


def dasc_augment(manifest: DatasetManifest, plan: AugmentationPlan, jobs: int = 1,
                 ) -> tuple[DatasetManifest, AugmentReport]:
    """Expand ``manifest`` with one derived copy per plan method.

    Every derived record keeps the source's speaker, key and attack id and
    gets ``utt_id + suffix``.  All audio (including the identity copy) is
    written under ``plan.output_root``.  Records whose audio cannot be read
    are reported and skipped; the run continues.
    """
    report = AugmentReport()
    noises = {}
    for m in plan.methods:
        if isinstance(m, Noise):
            try:
                _load_noise(m.source, noises)
            except (OSError, ValueError) as exc:
                raise AugmentationError("cannot load noise %s: %s" % (m.source, exc)) from exc

    def work(rec):
        try:
            return _augment_record(rec, manifest, plan, noises), None
        except (OSError, ValueError) as exc:
            return None, str(exc)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(work, manifest.records))
    else:
        results = [work(r) for r in manifest.records]

    records = []
    for rec, (derived, err) in zip(manifest.records, results):
        if err is not None:
            report.errors.append((rec.utt_id, err))
            continue
        for new_rec, snr in derived:
            records.append(new_rec)
            if snr is not None:
                report.measured_snr[new_rec.utt_id] = snr
    return DatasetManifest(manifest.subset, records, plan.output_root), report
