"""Synthetic bonafide/spoof corpus for tests and desk-scale experiments.

"Bonafide" clips are voiced harmonic sounds: a jittered, vibrato-modulated
fundamental, a few random formant resonances, syllable-like envelopes and
digital silence between syllables.  "Spoof" clips come from the same
generator with two vocoder-like artifacts:

* a weak broadband noise floor (``floor_snr_db`` below the signal) under
  the voicing envelope, which is easy to learn but is masked by any
  companding channel's own quantization noise;
* attenuated upper harmonics (``hf_cut_db`` above ``hf_edge_hz``), which
  survives companding.

A classifier that keys on the noise floor breaks when test audio passes
through a companding channel; one trained with companded copies learns the
spectral cue instead.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio import AudioClip, DatasetManifest, TrialRecord, write_wav, write_protocol


@dataclass(frozen=True)
class SynthConfig:
    sample_rate: int = 16000
    duration: float = 1.0
    floor_snr_db: float = 36.0
    hf_edge_hz: float = 3500.0
    hf_cut_db: float = 8.0
    peak_range: tuple = (0.25, 0.9)


def _harmonic_voice(rng: np.random.Generator, cfg: SynthConfig, hf_gain: float):
    sr = cfg.sample_rate
    n = int(round(cfg.duration * sr))
    t = np.arange(n) / sr
    f0 = rng.uniform(90.0, 260.0)
    vib = 1.0 + rng.uniform(0.01, 0.04) * np.sin(2 * np.pi * rng.uniform(4.0, 6.5) * t
                                                  + rng.uniform(0, 2 * np.pi))
    drift = 1.0 + 0.05 * np.cumsum(rng.standard_normal(n)) / np.sqrt(n) / 3.0
    inst_f0 = f0 * vib * drift
    phase = 2 * np.pi * np.cumsum(inst_f0) / sr
    formants = rng.uniform([300, 900, 2000], [900, 2200, 3400])
    widths = rng.uniform(80, 250, 3)
    x = np.zeros(n)
    n_harm = int(7600.0 / (f0 * 1.1))
    for h in range(1, n_harm + 1):
        fh = h * f0
        amp = h ** -0.7 * (0.15 + sum(np.exp(-0.5 * ((fh - f) / w) ** 2)
                                      for f, w in zip(formants, widths)))
        if fh >= cfg.hf_edge_hz:
            amp *= hf_gain
        x += amp * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
    # syllables separated by digital silence
    env = np.zeros(n)
    pos = int(rng.uniform(0.02, 0.08) * sr)
    while pos < n:
        length = int(rng.uniform(0.15, 0.35) * sr)
        seg = np.hanning(min(length, n - pos) + 2)[1:-1]
        env[pos:pos + len(seg)] = seg ** 0.5
        pos += len(seg) + int(rng.uniform(0.04, 0.12) * sr)
    return x, env


def synth_clip(rng: np.random.Generator, spoof: bool, cfg: SynthConfig = SynthConfig(),
               ) -> AudioClip:
    hf_gain = 10.0 ** (-cfg.hf_cut_db / 20.0) if spoof else 1.0
    x, env = _harmonic_voice(rng, cfg, hf_gain)
    if spoof:
        # the floor rides on the voicing envelope: silences stay digital zero
        p = np.mean(x ** 2)
        x = x + np.sqrt(p * 10.0 ** (-cfg.floor_snr_db / 10.0)) * rng.standard_normal(len(x))
    x = x * env
    peak = rng.uniform(*cfg.peak_range)
    x = x * (peak / np.abs(x).max())
    return AudioClip(x, cfg.sample_rate)


def synth_set(n_bonafide: int, n_spoof: int, seed: int, cfg: SynthConfig = SynthConfig()):
    """Clips and labels (0 bonafide, 1 spoof), interleaved deterministically."""
    rng = np.random.default_rng(seed)
    labels = np.array([0] * n_bonafide + [1] * n_spoof)
    labels = labels[rng.permutation(len(labels))]
    clips = [synth_clip(rng, bool(lab), cfg) for lab in labels]
    return clips, labels


def write_corpus(root, subset: str, n_bonafide: int, n_spoof: int, seed: int,
                 cfg: SynthConfig = SynthConfig(), prefix: str | None = None,
                 ) -> DatasetManifest:
    """Write clips plus a 5-column protocol file ``<root>/<subset>.txt``."""
    root = Path(root)
    prefix = prefix or {"train": "T", "development": "D", "evaluation": "E"}[subset]
    clips, labels = synth_set(n_bonafide, n_spoof, seed, cfg)
    records = []
    for i, (clip, lab) in enumerate(zip(clips, labels)):
        utt = "SYN_%s_%04d" % (prefix, i)
        speaker = "SYN_%02d" % (i % 4)
        rec = TrialRecord(speaker, utt, "S01" if lab else "-", "spoof" if lab else "bonafide")
        write_wav(clip, root / subset / (utt + ".wav"))
        records.append(rec)
    manifest = DatasetManifest(subset, records, root / subset)
    write_protocol(manifest, root / ("%s.txt" % subset))
    return manifest
