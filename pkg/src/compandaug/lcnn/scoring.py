"""Scoring a manifest with a trained model."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..audio import DatasetManifest
from ..cqt import FeatureStore
from .model import Lcnn


@dataclass(frozen=True)
class ScoreRecord:
    utt_id: str
    score: float


def score_set(model: Lcnn, manifest: DatasetManifest, store: FeatureStore,
              batch_size: int = 64) -> tuple[list[ScoreRecord], list[tuple[str, str]]]:
    """Score every record that has features.

    Returns ``(scores, errors)``; records whose feature file is missing or
    unreadable appear in ``errors`` as ``(utt_id, message)``.  Inference has
    no randomness and BatchNorm uses running statistics, so a record's score
    does not depend on which other records share its batch.
    """
    utts, feats, errors = [], [], []
    for rec in manifest.records:
        try:
            feats.append(store.load(rec.utt_id))
            utts.append(rec.utt_id)
        except (OSError, ValueError) as exc:
            errors.append((rec.utt_id, str(exc)))
    if not utts:
        return [], errors
    scores = model.score(np.stack(feats), batch_size=batch_size)
    if not np.all(np.isfinite(scores)):
        bad = [u for u, s in zip(utts, scores) if not np.isfinite(s)]
        raise FloatingPointError("non-finite scores for %s" % ", ".join(bad[:5]))
    return [ScoreRecord(u, float(s)) for u, s in zip(utts, scores)], errors
