"""EER, minimum normalized t-DCF and DET curves for countermeasure scores.

Scores follow the ASVspoof convention: higher means more bonafide-like, and
a trial is accepted as bonafide when ``score >= threshold``.  The candidate
thresholds are the distinct observed scores plus +inf (reject everything);
the lowest distinct score accepts everything, so no -inf is needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class TdcfCostModel:
    """Cost model of the ASV-constrained t-DCF.

    Defaults are the ASVspoof 2019 evaluation-plan priors and costs.  The
    ASV error rates depend on the ASV system and must normally be supplied
    (see :func:`read_asv_operating_point`); the defaults here are placeholders
    for a perfect ASV.
    """
    pi_tar: float = 0.9405
    pi_non: float = 0.0095
    pi_spoof: float = 0.05
    c_miss_cm: float = 1.0
    c_fa_cm: float = 10.0
    c_miss_asv: float = 1.0
    c_fa_asv: float = 10.0
    p_miss_asv: float = 0.0
    p_fa_asv: float = 0.0
    p_miss_spoof_asv: float = 0.0

    def __post_init__(self):
        priors = (self.pi_tar, self.pi_non, self.pi_spoof)
        if any(p < 0 or p > 1 for p in priors) or abs(sum(priors) - 1.0) > 1e-9:
            raise MetricError("priors must lie in [0, 1] and sum to one")
        for name in ("p_miss_asv", "p_fa_asv", "p_miss_spoof_asv"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise MetricError("%s must lie in [0, 1], got %r" % (name, v))
        for name in ("c_miss_cm", "c_fa_cm", "c_miss_asv", "c_fa_asv"):
            if not getattr(self, name) > 0:
                raise MetricError("%s must be positive" % name)

    @property
    def c1(self) -> float:
        """Weight on the CM miss rate."""
        return (self.pi_tar * (self.c_miss_cm - self.c_miss_asv * self.p_miss_asv)
                - self.pi_non * self.c_fa_asv * self.p_fa_asv)

    @property
    def c2(self) -> float:
        """Weight on the CM false-accept rate."""
        return self.c_fa_cm * self.pi_spoof * (1.0 - self.p_miss_spoof_asv)


@dataclass
class EvalResult:
    eer: float
    eer_threshold: float
    min_tdcf: float
    tdcf_threshold: float
    det_points: list = field(default_factory=list)
    n_bonafide: int = 0
    n_spoof: int = 0

    def to_text(self) -> str:
        lines = ["eer = %.10g" % self.eer,
                 "eer_percent = %.6f" % (100.0 * self.eer),
                 "eer_threshold = %.10g" % self.eer_threshold,
                 "min_tdcf = %.10g" % self.min_tdcf,
                 "tdcf_threshold = %.10g" % self.tdcf_threshold,
                 "n_bonafide = %d" % self.n_bonafide,
                 "n_spoof = %d" % self.n_spoof]
        return "\n".join(lines) + "\n"


def _as_scores(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise MetricError("no %s scores" % name)
    if not np.all(np.isfinite(arr)):
        raise MetricError("%s scores contain NaN or Inf" % name)
    return arr


def error_rates(bonafide_scores, spoof_scores):
    """Miss and false-accept rates at every candidate threshold.

    Returns ``(thresholds, p_miss, p_fa)`` with thresholds ascending; the
    last threshold is +inf.  ``p_miss`` is non-decreasing and ``p_fa``
    non-increasing along the array.
    """
    bona = np.sort(_as_scores(bonafide_scores, "bonafide"))
    spoof = np.sort(_as_scores(spoof_scores, "spoof"))
    thresholds = np.append(np.unique(np.concatenate([bona, spoof])), np.inf)
    # bonafide rejected when score < t; spoof accepted when score >= t
    p_miss = np.searchsorted(bona, thresholds, side="left") / bona.size
    p_fa = (spoof.size - np.searchsorted(spoof, thresholds, side="left")) / spoof.size
    return thresholds, p_miss, p_fa


def compute_eer(bonafide_scores, spoof_scores) -> tuple[float, float]:
    """(EER, threshold): the mean of the two error rates at the threshold
    minimizing their absolute difference (first such threshold on ties)."""
    thresholds, p_miss, p_fa = error_rates(bonafide_scores, spoof_scores)
    i = int(np.argmin(np.abs(p_fa - p_miss)))
    return float((p_fa[i] + p_miss[i]) / 2.0), float(thresholds[i])


def tdcf_curve(bonafide_scores, spoof_scores, cost: TdcfCostModel = TdcfCostModel()):
    """Normalized t-DCF at every candidate threshold: (thresholds, tdcf)."""
    c1, c2 = cost.c1, cost.c2
    if c1 <= 0 or c2 <= 0:
        raise MetricError("degenerate cost model: C1=%g, C2=%g; check the ASV error rates"
                          % (c1, c2))
    thresholds, p_miss, p_fa = error_rates(bonafide_scores, spoof_scores)
    return thresholds, (c1 * p_miss + c2 * p_fa) / min(c1, c2)


def compute_min_tdcf(bonafide_scores, spoof_scores,
                     cost: TdcfCostModel = TdcfCostModel()) -> tuple[float, float]:
    """(minimum normalized t-DCF, threshold attaining it)."""
    thresholds, tdcf = tdcf_curve(bonafide_scores, spoof_scores, cost)
    i = int(np.argmin(tdcf))
    return float(tdcf[i]), float(thresholds[i])


def det_curve(bonafide_scores, spoof_scores) -> list[tuple[float, float]]:
    """Exact step DET curve as (p_fa, p_miss) pairs, one per candidate
    threshold, from accept-all (1, 0) to reject-all (0, 1)."""
    _, p_miss, p_fa = error_rates(bonafide_scores, spoof_scores)
    return [(float(a), float(m)) for a, m in zip(p_fa, p_miss)]


def evaluate(bonafide_scores, spoof_scores, cost: TdcfCostModel = TdcfCostModel(),
             with_det: bool = True) -> EvalResult:
    eer, eer_thr = compute_eer(bonafide_scores, spoof_scores)
    tdcf, tdcf_thr = compute_min_tdcf(bonafide_scores, spoof_scores, cost)
    det = det_curve(bonafide_scores, spoof_scores) if with_det else []
    return EvalResult(eer, eer_thr, tdcf, tdcf_thr, det,
                      int(np.size(bonafide_scores)), int(np.size(spoof_scores)))


# --- file formats ----------------------------------------------------------

def read_scores(path) -> dict[str, float]:
    """Read ``UTT_ID SCORE`` lines."""
    scores = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 2:
                raise MetricError("%s:%d: expected 'UTT_ID SCORE'" % (path, lineno))
            try:
                value = float(parts[1])
            except ValueError:
                raise MetricError("%s:%d: bad score %r" % (path, lineno, parts[1])) from None
            if not math.isfinite(value):
                raise MetricError("%s:%d: non-finite score" % (path, lineno))
            if parts[0] in scores:
                raise MetricError("%s:%d: duplicate utt_id %s" % (path, lineno, parts[0]))
            scores[parts[0]] = value
    return scores


def write_scores(scores, path) -> None:
    """Write ``(utt_id, score)`` pairs, one per line, repr-exact floats."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for utt, score in scores:
            fh.write("%s %r\n" % (utt, float(score)))


def split_by_key(scores: dict[str, float], labels: dict[str, str]):
    """Join scores with ground-truth keys; every labelled trial needs a score."""
    missing = [u for u in labels if u not in scores]
    if missing:
        raise MetricError("%d trials have no score (first: %s)" % (len(missing), missing[0]))
    bona = [scores[u] for u, k in labels.items() if k == "bonafide"]
    spoof = [scores[u] for u, k in labels.items() if k == "spoof"]
    return np.array(bona), np.array(spoof)


_ASV_KEYS = ("p_miss_asv", "p_fa_asv", "p_miss_spoof_asv")


def read_key_values(path) -> dict[str, str]:
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            sep = "=" if "=" in line else None
            parts = line.split(sep, 1) if sep else line.split(None, 1)
            if len(parts) != 2:
                raise MetricError("%s:%d: expected 'key = value'" % (path, lineno))
            out[parts[0].strip()] = parts[1].strip()
    return out


def read_asv_operating_point(path, base: TdcfCostModel = TdcfCostModel()) -> TdcfCostModel:
    """Load ASV error rates (and optionally any other cost field) from a
    key-value file into a cost model."""
    kv = read_key_values(path)
    missing = [k for k in _ASV_KEYS if k not in kv]
    if missing:
        raise MetricError("%s: missing %s" % (path, ", ".join(missing)))
    known = {f.name for f in fields(TdcfCostModel)}
    unknown = set(kv) - known
    if unknown:
        raise MetricError("%s: unknown keys %s" % (path, ", ".join(sorted(unknown))))
    params = {f.name: getattr(base, f.name) for f in fields(TdcfCostModel)}
    params.update({k: float(v) for k, v in kv.items()})
    return TdcfCostModel(**params)


def write_det_csv(points, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("p_fa,p_miss\n")
        for p_fa, p_miss in points:
            fh.write("%.10g,%.10g\n" % (p_fa, p_miss))
