"""Audio clips, 16-bit PCM WAV I/O and ASVspoof-style protocol files."""

from __future__ import annotations

import os
import wave
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

DEFAULT_SAMPLE_RATE = 16000
PCM_SCALE = 32768.0
SUBSETS = ("train", "development", "evaluation")
KEYS = ("bonafide", "spoof")


class AudioFormatError(ValueError):
    """Malformed or unsupported WAV file."""


class UnsupportedChannelError(AudioFormatError):
    pass


class SampleRangeError(ValueError):
    pass


class ProtocolError(ValueError):
    pass


class DuplicateRecordError(ProtocolError):
    pass


@dataclass(frozen=True, eq=False)
class AudioClip:
    samples: np.ndarray
    sample_rate: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioClip holds mono audio; got shape %s" % (samples.shape,))
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    def power(self) -> float:
        return float(np.mean(self.samples ** 2)) if len(self) else 0.0

    def with_samples(self, samples) -> "AudioClip":
        return AudioClip(samples, self.sample_rate)


def float_to_pcm16(samples: np.ndarray) -> np.ndarray:
    """Round to int16 with saturation; +1.0 lands on 32767."""
    scaled = np.rint(np.asarray(samples, dtype=np.float64) * PCM_SCALE)
    return np.clip(scaled, -32768, 32767).astype(np.int16)


def pcm16_to_float(pcm: np.ndarray) -> np.ndarray:
    return np.asarray(pcm, dtype=np.int16).astype(np.float64) / PCM_SCALE


def read_wav(path, expected_rate: int | None = DEFAULT_SAMPLE_RATE) -> AudioClip:
    """Read a mono 16-bit PCM WAV file.

    Samples are divided by 32768 so that -32768 maps exactly to -1.0.
    Nothing is resampled or downmixed; pass ``expected_rate=None`` to accept
    any sample rate.
    """
    try:
        with wave.open(os.fspath(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            frames = wf.readframes(wf.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioFormatError("%s: %s" % (path, exc)) from exc
    if n_channels != 1:
        raise UnsupportedChannelError(
            "%s: %d channels; only mono is supported" % (path, n_channels))
    if width != 2:
        raise AudioFormatError("%s: %d-bit samples; only 16-bit PCM is supported"
                               % (path, 8 * width))
    if expected_rate is not None and rate != expected_rate:
        raise AudioFormatError("%s: sample rate %d Hz, expected %d Hz"
                               % (path, rate, expected_rate))
    if len(frames) % 2:
        raise AudioFormatError("%s: truncated sample data" % path)
    pcm = np.frombuffer(frames, dtype="<i2")
    return AudioClip(pcm16_to_float(pcm), rate)


def write_wav(clip: AudioClip, path) -> None:
    samples = clip.samples
    if len(samples) and (samples.min() < -1.0 or samples.max() > 1.0):
        raise SampleRangeError("samples outside [-1, 1]; clip explicitly before writing")
    pcm = float_to_pcm16(samples)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with wave.open(os.fspath(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate)
        wf.writeframes(pcm.astype("<i2").tobytes())


@dataclass(frozen=True)
class TrialRecord:
    speaker_id: str
    utt_id: str
    attack_id: str
    key: str
    unused: str = "-"

    def __post_init__(self):
        if self.key not in KEYS:
            raise ProtocolError("key must be bonafide or spoof, got %r" % self.key)
        if (self.key == "bonafide") != (self.attack_id == "-"):
            raise ProtocolError("%s: key %s inconsistent with attack id %r"
                                % (self.utt_id, self.key, self.attack_id))

    @property
    def is_bonafide(self) -> bool:
        return self.key == "bonafide"

    def to_line(self) -> str:
        return " ".join((self.speaker_id, self.utt_id, self.unused, self.attack_id, self.key))


@dataclass
class DatasetManifest:
    subset: str
    records: list[TrialRecord] = field(default_factory=list)
    audio_root: Path = Path(".")

    def __post_init__(self):
        if self.subset not in SUBSETS:
            raise ValueError("unknown subset %r" % self.subset)
        self.audio_root = Path(self.audio_root)
        seen = set()
        for rec in self.records:
            if rec.utt_id in seen:
                raise DuplicateRecordError("duplicate utt_id %s" % rec.utt_id)
            seen.add(rec.utt_id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def counts(self) -> tuple[int, int]:
        """(n_bonafide, n_spoof)."""
        c = Counter(r.key for r in self.records)
        return c["bonafide"], c["spoof"]

    def audio_path(self, record: TrialRecord | str) -> Path:
        utt = record if isinstance(record, str) else record.utt_id
        return self.audio_root / (utt + ".wav")

    def labels(self) -> dict[str, str]:
        return {r.utt_id: r.key for r in self.records}


def parse_protocol(path, subset: str, audio_root=None) -> DatasetManifest:
    """Parse a 5-column protocol file: SPEAKER UTT_ID unused ATTACK_ID KEY."""
    records = []
    seen = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            fields = line.split()
            if not fields:
                continue
            if len(fields) != 5:
                raise ProtocolError("%s:%d: expected 5 fields, got %d"
                                    % (path, lineno, len(fields)))
            speaker, utt, unused, attack, key = fields
            if utt in seen:
                raise DuplicateRecordError("%s:%d: duplicate utt_id %s (first on line %d)"
                                           % (path, lineno, utt, seen[utt]))
            seen[utt] = lineno
            try:
                records.append(TrialRecord(speaker, utt, attack, key, unused))
            except ProtocolError as exc:
                raise ProtocolError("%s:%d: %s" % (path, lineno, exc)) from exc
    if audio_root is None:
        audio_root = Path(path).parent
    return DatasetManifest(subset, records, audio_root)


def write_protocol(manifest: DatasetManifest, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for rec in manifest.records:
            fh.write(rec.to_line() + "\n")


def check_disjoint(*manifests: DatasetManifest) -> None:
    """Raise if any utt_id appears in more than one subset."""
    owner = {}
    for m in manifests:
        for rec in m.records:
            if rec.utt_id in owner and owner[rec.utt_id] != m.subset:
                raise DuplicateRecordError("utt_id %s appears in both %s and %s"
                                           % (rec.utt_id, owner[rec.utt_id], m.subset))
            owner[rec.utt_id] = m.subset
