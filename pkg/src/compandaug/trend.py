"""Desk-scale check that DASC helps against an unseen companding channel.

Train one small LCNN on clean synthetic clips and one on clean plus G.711
a-law and mu-law copies, then score test clips that went through a
companding channel neither model saw in training (mu = 100, 7-bit uniform
code).  Repeated over several seeds.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .companding import ALAW, MULAW, CompandingLaw, Law, Mode, companding_perturb, \
    quantized_companding_channel
from .cqt import CqtConfig, extract_features
from .lcnn import Lcnn, LcnnSpec, TrainConfig, train
from .metrics import compute_eer
from .synth import SynthConfig, synth_set

log = logging.getLogger(__name__)

# a small LCNN for one CPU core: frames are pooled by 10 up front
TREND_LAYERS = (
    "utt_norm max_pool(1,10) conv(8,3) mfm max_pool(2) batch_norm "
    "conv(16,3) mfm max_pool(2) batch_norm conv(16,3) mfm max_pool(2,6) "
    "flatten dense(32) mfm dense(2)"
)

UNSEEN_CHANNEL = CompandingLaw(Law.MU_LAW, mu=100.0, mode=Mode.CONTINUOUS)
UNSEEN_BITS = 7


@dataclass(frozen=True)
class TrendConfig:
    seeds: tuple = (0, 1, 2, 3, 4)
    n_train: int = 40          # per class
    n_dev: int = 20
    n_test: int = 50
    synth: SynthConfig = SynthConfig()
    layers: str = TREND_LAYERS
    train: TrainConfig = TrainConfig(batch_size=16, epochs=25, learning_rate=1e-3)


@dataclass
class TrendResult:
    # eer[seed_index][condition] for conditions below
    conditions: tuple = ("noaug_clean", "noaug_channel", "dasc_clean", "dasc_channel")
    eer: list = field(default_factory=list)
    seconds: float = 0.0

    def mean(self, condition: str) -> float:
        i = self.conditions.index(condition)
        return float(np.mean([row[i] for row in self.eer]))

    def to_text(self) -> str:
        lines = ["seed\t" + "\t".join(self.conditions)]
        for k, row in enumerate(self.eer):
            lines.append("%d\t" % k + "\t".join("%.4f" % v for v in row))
        lines.append("mean\t" + "\t".join("%.4f" % self.mean(c) for c in self.conditions))
        return "\n".join(lines) + "\n"


def unseen_channel(clip):
    return clip.with_samples(quantized_companding_channel(clip.samples, UNSEEN_CHANNEL,
                                                          UNSEEN_BITS))


def _features(clips, cqt_cfg) -> np.ndarray:
    return np.stack([extract_features(c, cqt_cfg, method="fft") for c in clips]).astype(np.float32)


def _eer(model: Lcnn, x, y) -> float:
    s = model.score(x)
    return compute_eer(s[y == 0], s[y == 1])[0]


def run_trend(cfg: TrendConfig = TrendConfig()) -> TrendResult:
    cqt_cfg = CqtConfig()
    result = TrendResult()
    t0 = time.perf_counter()
    for seed in cfg.seeds:
        tr, y_tr = synth_set(cfg.n_train, cfg.n_train, 100 + seed, cfg.synth)
        dv, y_dv = synth_set(cfg.n_dev, cfg.n_dev, 200 + seed, cfg.synth)
        te, y_te = synth_set(cfg.n_test, cfg.n_test, 300 + seed, cfg.synth)
        x_tr = _features(tr, cqt_cfg)
        x_aug = np.concatenate([x_tr,
                                _features([companding_perturb(c, ALAW) for c in tr], cqt_cfg),
                                _features([companding_perturb(c, MULAW) for c in tr], cqt_cfg)])
        y_aug = np.concatenate([y_tr] * 3)
        x_dv = _features(dv, cqt_cfg)
        x_te = _features(te, cqt_cfg)
        x_ch = _features([unseen_channel(c) for c in te], cqt_cfg)
        row = []
        tcfg = TrainConfig(**{**cfg.train.__dict__, "seed": seed})
        for x, y in ((x_tr, y_tr), (x_aug, y_aug)):
            model = Lcnn(LcnnSpec(cfg.layers), seed=seed)
            train(model, x, y, tcfg, x_dv, y_dv)
            row += [_eer(model, x_te, y_te), _eer(model, x_ch, y_te)]
        result.eer.append(row)
        log.info("trend seed %d: %s", seed, " ".join("%.3f" % v for v in row))
    result.seconds = time.perf_counter() - t0
    return result
