"""Registration quality metrics and their per-pair / dataset aggregation.

A registered pair is classified from the Euclidean errors of the
ground-truth points mapped through the fitted transform:

* ``acceptable``: median error (MEE) < 20 px and maximum error (MAE) < 50 px
  (strict inequalities; an MEE of exactly 20 is inaccurate),
* ``failed``: no transform could be fitted,
* ``inaccurate``: everything else.

Dataset AUC is the mean acceptance fraction over the integer MEE
thresholds 1..t_max (default 25); failed pairs never count as under
threshold. Soft Dice between the target vessel map and the warped
source map is 2*sum(a*b) / (sum(a) + sum(b)), with the empty/empty case
defined as 1.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fitting import Transform, eval_transform
from .keypoints import CorrespondenceSet

MEE_ACCEPTABLE = 20.0
MAE_ACCEPTABLE = 50.0
AUC_T_MAX = 25
MATCH_TOLERANCE = 20.0

CLASSES = ("failed", "inaccurate", "acceptable")


def point_errors(t: Transform, gt: CorrespondenceSet) -> np.ndarray:
    """Euclidean distance of each mapped ground-truth source point to its target."""
    if gt.m < 1:
        raise ValueError("ground truth must contain at least one correspondence")
    mapped = t.apply(gt.src)
    return np.hypot(*(mapped - gt.tgt).T)


def classify_pair(errors, fit_failed: bool = False,
                  mee_threshold: float = MEE_ACCEPTABLE,
                  mae_threshold: float = MAE_ACCEPTABLE) -> tuple[float, float, str]:
    """(mee, mae, classification) from per-point errors.

    The median of an even count is the mean of the two middle values.
    """
    if fit_failed:
        return math.nan, math.nan, "failed"
    errors = np.asarray(errors, dtype=np.float64)
    if errors.size == 0:
        raise ValueError("errors must be non-empty unless the fit failed")
    mee = float(np.median(errors))
    mae = float(errors.max())
    label = "acceptable" if (mee < mee_threshold and mae < mae_threshold) else "inaccurate"
    return mee, mae, label


def auc(mees, t_max: int = AUC_T_MAX) -> float:
    """Mean fraction of pairs with MEE <= t over integer thresholds 1..t_max.

    ``mees`` entries are per-pair MEE values; ``None`` (or NaN) marks a
    failed pair, which counts against every threshold.
    """
    if t_max < 1:
        raise ValueError(f"t_max must be >= 1, got {t_max}")
    mees = list(mees)
    if not mees:
        raise ValueError("need at least one pair")
    values = np.array([math.inf if (m is None or (isinstance(m, float) and math.isnan(m)))
                       else float(m) for m in mees])
    thresholds = np.arange(1, t_max + 1)
    fraction_under = (values[:, None] <= thresholds[None, :]).mean(axis=0)
    return float(fraction_under.mean())


def acceptable_matches(P: CorrespondenceSet, gt_t: Transform,
                       tol: float = MATCH_TOLERANCE) -> int:
    """Matches whose target point lies within ``tol`` px of the ground-truth
    mapping of the source point."""
    if P.m == 0:
        return 0
    reference = gt_t.apply(P.src)
    return int((np.hypot(*(reference - P.tgt).T) <= tol).sum())


def soft_dice(a, b) -> float:
    """Soft Dice overlap of two probability maps of equal shape."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    denom = a.sum() + b.sum()
    if denom == 0.0:
        return 1.0
    return float(2.0 * (a * b).sum() / denom)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------

@dataclass
class PairEvaluation:
    """Everything measured about one registered pair."""

    pair_id: str
    mee: float
    mae: float
    classification: str
    n_matches: int = 0
    n_acceptable_matches: int | None = None
    dice_s: float | None = None

    def __post_init__(self):
        if self.classification not in CLASSES:
            raise ValueError(f"classification must be one of {CLASSES}")
        if self.classification != "failed" and self.mee > self.mae:
            raise ValueError(f"mee {self.mee} > mae {self.mae}")

    def to_json_dict(self) -> dict:
        return {"id": self.pair_id,
                "mee": None if math.isnan(self.mee) else self.mee,
                "mae": None if math.isnan(self.mae) else self.mae,
                "classification": self.classification,
                "n_matches": self.n_matches,
                "n_acceptable_matches": self.n_acceptable_matches,
                "dice_s": self.dice_s}


@dataclass
class DatasetReport:
    """Aggregate metrics over all pairs of a dataset run."""

    n_pairs: int
    failed_rate: float
    inaccurate_rate: float
    acceptable_rate: float
    auc: float
    mean_matches: float
    mean_acceptable_matches: float | None
    mean_dice_s: float | None
    n_dice_excluded: int = 0
    pairs: list[PairEvaluation] = field(default_factory=list, repr=False)

    def to_json_dict(self, include_pairs: bool = True) -> dict:
        doc = {"n_pairs": self.n_pairs,
               "failed_rate": self.failed_rate,
               "inaccurate_rate": self.inaccurate_rate,
               "acceptable_rate": self.acceptable_rate,
               "auc": self.auc,
               "mean_matches": self.mean_matches,
               "mean_acceptable_matches": self.mean_acceptable_matches,
               "mean_dice_s": self.mean_dice_s,
               "n_dice_excluded": self.n_dice_excluded}
        if include_pairs:
            doc["pairs"] = [p.to_json_dict() for p in sorted(self.pairs, key=lambda p: p.pair_id)]
        return doc

    def to_json(self, include_pairs: bool = True) -> str:
        return json.dumps(self.to_json_dict(include_pairs), indent=1, sort_keys=True)

    def save(self, path, include_pairs: bool = True) -> None:
        Path(path).write_text(self.to_json(include_pairs))

    CSV_HEADER = ("n_pairs,failed_rate,inaccurate_rate,acceptable_rate,auc,"
                  "mean_matches,mean_acceptable_matches,mean_dice_s")

    def to_csv_row(self) -> str:
        def cell(v):
            return "" if v is None else f"{v:.6g}"

        return ",".join([str(self.n_pairs), cell(self.failed_rate),
                         cell(self.inaccurate_rate), cell(self.acceptable_rate),
                         cell(self.auc), cell(self.mean_matches),
                         cell(self.mean_acceptable_matches), cell(self.mean_dice_s)])


def aggregate_report(pair_evals: list[PairEvaluation], t_max: int = AUC_T_MAX) -> DatasetReport:
    """Fold per-pair evaluations into a DatasetReport.

    Failed pairs are excluded from the Dice mean (their count is
    reported) and contribute zero to every AUC threshold.
    """
    if not pair_evals:
        raise ValueError("cannot aggregate an empty evaluation list")
    n = len(pair_evals)
    labels = [p.classification for p in pair_evals]
    mees = [None if p.classification == "failed" else p.mee for p in pair_evals]

    dices = [p.dice_s for p in pair_evals if p.classification != "failed" and p.dice_s is not None]
    n_excluded = sum(1 for p in pair_evals if p.classification == "failed")
    accept_counts = [p.n_acceptable_matches for p in pair_evals
                     if p.n_acceptable_matches is not None]

    return DatasetReport(
        n_pairs=n,
        failed_rate=labels.count("failed") / n,
        inaccurate_rate=labels.count("inaccurate") / n,
        acceptable_rate=labels.count("acceptable") / n,
        auc=auc(mees, t_max),
        mean_matches=float(np.mean([p.n_matches for p in pair_evals])),
        mean_acceptable_matches=float(np.mean(accept_counts)) if accept_counts else None,
        mean_dice_s=float(np.mean(dices)) if dices else None,
        n_dice_excluded=n_excluded,
        pairs=list(pair_evals),
    )
