"""Acceptance suite: one test per headline criterion.

Each test prints a single ``PASS``/``FAIL`` line (also repeated in the
terminal summary).  Tolerances are the contractual ones; nothing here is
loosened to make a criterion pass.
"""

import math
import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np
import pytest

from compandaug.audio import AudioClip, DatasetManifest, TrialRecord, read_wav
from compandaug.augmentation import (AugmentationPlan, dasc_augment, gen_white_noise,
                                     mix_noise_at_snr, snr_db)
from compandaug.companding import ALAW, MULAW, CompandingLaw, Law, Mode, compress, expand, \
    g711_decode, g711_encode
from compandaug.cqt import CqtConfig, cqt_lps, extract_features
from compandaug.lcnn import (MFM, BatchNorm, Conv2d, Dense, Flatten, MaxPool2d, TrainConfig,
                             UttNorm, softmax_cross_entropy, train)
from compandaug.metrics import TdcfCostModel, compute_eer, compute_min_tdcf
from compandaug.synth import write_corpus
from compandaug.trend import TrendConfig, run_trend
from g711_reference import ref_decode, ref_encode
from metrics_reference import brute_eer, brute_min_tdcf
from test_lcnn import check_layer, numeric_grad, rel_err, small_model, toy_set

ALL_PCM = np.arange(-32768, 32768, dtype=np.int16)
ALL_CODES = np.arange(256, dtype=np.uint8)


@pytest.fixture
def criterion(criteria_log):
    @contextmanager
    def run(name):
        try:
            yield
        except BaseException as exc:
            detail = str(exc).strip().splitlines()
            line = "FAIL  %s: %s" % (name, detail[0] if detail else type(exc).__name__)
            print(line)
            criteria_log.append(line)
            raise
        line = "PASS  %s" % name
        print(line)
        criteria_log.append(line)
    return run


def test_g711_conformance(criterion):
    with criterion("G.711 conformance"):
        t0 = time.perf_counter()
        for law in (ALAW, MULAW):
            name = "mu" if law is MULAW else "a"
            codes = g711_encode(ALL_PCM, law)
            assert np.array_equal(codes, ref_encode(ALL_PCM, name)), "%s encode" % name
            assert np.array_equal(g711_decode(codes, law), ref_decode(codes, name)), \
                "%s decode" % name
        elapsed = time.perf_counter() - t0
        assert elapsed < 1.0, "runtime %.3f s" % elapsed
        for law in (ALAW, MULAW):
            again = g711_encode(g711_decode(ALL_CODES, law), law)
            bad = ALL_CODES[again != ALL_CODES]
            assert bad.size == 0, "%s: encode(decode(c)) != c for codes %s" % (
                law.tag, ", ".join("0x%02X" % c for c in bad))


def test_continuous_companding(criterion):
    with criterion("continuous companding"):
        grid = np.linspace(-1.0, 1.0, 10 ** 6)
        for law in (CompandingLaw(Law.A_LAW, mode=Mode.CONTINUOUS),
                    CompandingLaw(Law.MU_LAW, mode=Mode.CONTINUOUS)):
            assert (law.A, law.mu) == (86.5, 255.0)
            err = np.max(np.abs(expand(compress(grid, law), law) - grid))
            assert err <= 1e-9, "%s round-trip error %.3g" % (law.tag, err)
        A = 86.5
        denom = 1.0 + math.log(A)
        x0, y0 = 1.0 / A, 1.0 / denom
        assert abs(A * x0 / denom - (1.0 + math.log(A * x0)) / denom) <= 1e-12
        assert abs(y0 * denom / A - math.exp(y0 * denom - 1.0) / A) <= 1e-12
        for x in (x0, np.nextafter(x0, 0.0), np.nextafter(x0, 1.0)):
            assert abs(compress(x, ALAW) - y0) <= 1e-12
            assert abs(compress(-x, ALAW) + y0) <= 1e-12
        for y in (y0, np.nextafter(y0, 0.0), np.nextafter(y0, 1.0)):
            assert abs(expand(y, ALAW) - x0) <= 1e-12


def test_feature_contract(criterion):
    with criterion("feature contract"):
        cfg = CqtConfig()
        rng = np.random.default_rng(0)
        for n in (1000, 16000, 70400, 100000):
            feats = extract_features(AudioClip(rng.uniform(-0.5, 0.5, n)), method="fft")
            assert feats.shape == (84, 550)
        half = int(np.ceil(cfg.q_factor * 16000 / cfg.f_min)) // 2 + 1
        frames = [t for t in range(125) if t * 128 - half >= 0 and t * 128 + half < 16000]
        t = np.arange(16000) / 16000
        for k, f in enumerate(cfg.center_frequencies()):
            lps = cqt_lps(AudioClip(0.5 * np.sin(2 * np.pi * f * t)), method="fft")
            assert np.all(np.argmax(lps[:, frames], axis=0) == k), "tone bin %d" % k
        for seed in range(5):
            clip = AudioClip(np.random.default_rng(seed).uniform(-1, 1, 8000 + 1234 * seed))
            diff = np.max(np.abs(cqt_lps(clip, method="fft") - cqt_lps(clip, method="direct")))
            assert diff <= 1e-6, "fft vs direct %.3g" % diff


def test_metrics_oracle(criterion):
    cost = TdcfCostModel(p_miss_asv=0.05, p_fa_asv=0.01, p_miss_spoof_asv=0.4)
    with criterion("metrics oracle equivalence"):
        rng = np.random.default_rng(2024)
        for trial in range(100):
            nb, ns = rng.integers(1, 251, 2)
            decimals = int(rng.integers(0, 4))
            bona = np.round(rng.normal(1.0, 1.5, nb), decimals)
            spoof = np.round(rng.normal(-0.5, 1.5, ns), decimals)
            assert compute_eer(bona, spoof)[0] == brute_eer(bona, spoof), "eer set %d" % trial
            got = compute_min_tdcf(bona, spoof, cost)[0]
            assert got == brute_min_tdcf(bona, spoof, cost.c1, cost.c2), "tdcf set %d" % trial
            merged = np.unique(np.concatenate([bona, spoof]))
            for f in (lambda x: 3.0 * x - 2.0, lambda x: x ** 3 + x, np.arctan,
                      lambda x: np.exp(x / 4.0)):
                assert np.all(np.diff(f(merged)) > 0)
                assert compute_eer(f(bona), f(spoof))[0] == compute_eer(bona, spoof)[0]


def test_dasc_bookkeeping(criterion, tmp_path):
    with criterion("DASC bookkeeping"):
        manifest = write_corpus(tmp_path / "src", "train", 4, 5, seed=3)
        out, report = dasc_augment(manifest, AugmentationPlan.dasc(tmp_path / "aug"))
        assert report.ok and len(out) == 3 * len(manifest)
        labels = manifest.labels()
        for rec in out.records:
            base = rec.utt_id.replace("_alaw", "").replace("_mulaw", "")
            assert rec.key == labels[base]
        recs = [TrialRecord("S", "U%04d" % i, "-" if i % 3 else "A01",
                            "bonafide" if i % 3 else "spoof") for i in range(500)]
        big = DatasetManifest("train", recs, tmp_path)
        assert len(big) * AugmentationPlan.dasc(tmp_path).multiplier == 1500
        noise = gen_white_noise(16000 * 4, 1)
        for rec in manifest.records:
            clip = read_wav(manifest.audio_path(rec))
            mixed = mix_noise_at_snr(clip, noise, 20.0, 5)
            assert abs(snr_db(clip.samples, mixed.samples - clip.samples) - 20.0) <= 0.1


def test_model_numerics(criterion):
    with criterion("model numerics"):
        for layer, shape in [(Conv2d(4, 3), (3, 6, 7)), (Conv2d(4, 3, 2), (2, 7, 8)),
                             (MFM(), (6, 4, 5)), (MaxPool2d(2), (2, 6, 7)),
                             (BatchNorm(), (3, 4, 5)), (UttNorm(), (2, 5, 6)),
                             (Flatten(), (2, 3, 4)), (Dense(5), (7,))]:
            check_layer(layer, shape)
        logits = np.random.default_rng(0).standard_normal((5, 2))
        y = np.array([0, 1, 1, 0, 1])
        num = numeric_grad(lambda: softmax_cross_entropy(logits, y)[0], logits, range(10))
        assert rel_err(softmax_cross_entropy(logits, y)[1].ravel(), num) <= 1e-4

        x, y = toy_set(32)
        runs = []
        for _ in range(2):
            model = small_model(seed=2, dtype=np.float32)
            _, log = train(model, x, y, TrainConfig(batch_size=8, epochs=5,
                                                    learning_rate=1e-3, seed=9))
            runs.append((log.to_text(), model.state()))
        assert runs[0][0] == runs[1][0]
        assert all(np.array_equal(runs[0][1][k], runs[1][1][k]) for k in runs[0][1])

        model = small_model(dtype=np.float32)
        t0 = time.perf_counter()
        _, log = train(model, x, y, TrainConfig(batch_size=8, epochs=200, learning_rate=1e-3))
        elapsed = time.perf_counter() - t0
        first = next((e.epoch for e in log.epochs if e.train_loss < 0.01), None)
        assert first is not None and first <= 200, "toy loss never below 0.01"
        assert elapsed < 60.0, "toy training took %.1f s" % elapsed


def test_trend(criterion):
    with criterion("trend check (DASC vs no augmentation through unseen channel)"):
        result = run_trend(TrendConfig())
        print(result.to_text(), end="")
        print("%.1f s" % result.seconds)
        assert len(result.eer) == 5
        assert result.mean("dasc_channel") < result.mean("noaug_channel"), (
            "DASC %.4f vs no-aug %.4f" % (result.mean("dasc_channel"),
                                          result.mean("noaug_channel")))
        assert result.seconds < 600.0, "runtime %.1f s" % result.seconds


def test_end_to_end_smoke(criterion, tmp_path):
    with criterion("end-to-end smoke"):
        cmd = [sys.executable, "-m", "compandaug"]
        t0 = time.perf_counter()
        subprocess.run(cmd + ["synth", str(tmp_path)], check=True, capture_output=True)
        proc = subprocess.run(cmd + ["-q", "run", "--config", str(tmp_path / "config.ini")],
                              capture_output=True, text=True)
        elapsed = time.perf_counter() - t0
        assert proc.returncode == 0, proc.stderr
        lines = dict(line.split(": ", 1) for line in proc.stdout.splitlines() if ": " in line)
        eer = float(lines["EER"].rstrip(" %"))
        tdcf = float(lines["min t-DCF"])
        print("EER %.3f %%, min t-DCF %.5f, %.1f s" % (eer, tdcf, elapsed))
        assert math.isfinite(eer) and math.isfinite(tdcf)
        assert elapsed < 120.0, "runtime %.1f s" % elapsed
