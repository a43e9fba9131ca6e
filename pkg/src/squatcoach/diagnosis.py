"""Fuse the four model heads into an issue set, grade it, attach advice.

Each head contributes independently via its argmax class, so a rep can
carry at most one of {posterior, anterior} tilt and at most one of
{hip, knee} dominance. Scoring deducts fixed points per issue from 100.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from typing import Optional

from .labels import LABEL_DESCRIPTIONS, LABEL_KEYS, SquatLabel
from .preprocess import FeatureTensor, OutlierThresholds, RawClip, clip_to_tensor, Excluded

FULL_POINTS = 100.0

DEDUCTIONS = {
    SquatLabel.TOO_SHALLOW: 15.0,
    SquatLabel.POSTERIOR_PELVIC_TILT: 20.0,
    SquatLabel.ANTERIOR_PELVIC_TILT: 10.0,
    SquatLabel.HIP_RISING_TOO_FAST: 10.0,
    SquatLabel.EXCESSIVE_HIP_DOMINANT: 27.5,
    SquatLabel.EXCESSIVE_KNEE_DOMINANT: 27.5,
}

# model head argmax class -> issue label
ISSUE_MAP = {
    "A": {1: SquatLabel.TOO_SHALLOW},
    "B": {1: SquatLabel.POSTERIOR_PELVIC_TILT, 2: SquatLabel.ANTERIOR_PELVIC_TILT},
    "C": {1: SquatLabel.HIP_RISING_TOO_FAST},
    "D": {1: SquatLabel.EXCESSIVE_HIP_DOMINANT, 2: SquatLabel.EXCESSIVE_KNEE_DOMINANT},
}

ADVICE_TEXT = {
    SquatLabel.GOOD: "Good squat. Keep the same depth, tempo, and bar path.",
    SquatLabel.TOO_SHALLOW: "Squat deeper: break parallel so the hip crease "
                            "drops below the knee before standing up.",
    SquatLabel.POSTERIOR_PELVIC_TILT: "Your pelvis tucks under at the bottom. "
                                      "Stop just above the depth where the tuck "
                                      "starts and build ankle/hip mobility.",
    SquatLabel.ANTERIOR_PELVIC_TILT: "Your lower back over-arches at depth. Brace "
                                     "the trunk and keep the ribs stacked over the pelvis.",
    SquatLabel.HIP_RISING_TOO_FAST: "Hips shoot up first on the way up. Drive the "
                                    "chest and hips up together out of the hole.",
    SquatLabel.EXCESSIVE_HIP_DOMINANT: "You fold forward on the descent. Sit down "
                                       "between the feet, letting the knees travel forward.",
    SquatLabel.EXCESSIVE_KNEE_DOMINANT: "Knees shoot forward first on the descent. "
                                        "Start the descent by loading the hips back.",
}


@dataclass
class AdviceEntry:
    label: int
    key: str
    text: str
    demo_key: str


@dataclass
class DiagnosisResult:
    issues: set
    probabilities: dict   # model id -> class probability list
    model_versions: dict  # model id -> version string

    def sorted_issues(self) -> list:
        return sorted(int(i) for i in self.issues)


@dataclass
class GradedSquat:
    clip_id: str
    result: DiagnosisResult
    score: float
    advice: list
    inference_ms: float
    pipeline_ms: float = 0.0
    label: Optional[int] = None


def diagnose(tensor: FeatureTensor, models: dict) -> DiagnosisResult:
    """Issue set from the four heads' argmax classes; empty means good."""
    issues = set()
    probabilities = {}
    versions = {}
    for model_id in ("A", "B", "C", "D"):
        model = models[model_id]
        probs = model.predict(tensor)
        probabilities[model_id] = [float(p) for p in probs]
        versions[model_id] = model.version
        cls = int(probs.argmax())
        issue = ISSUE_MAP[model_id].get(cls)
        if issue is not None:
            issues.add(issue)
    return DiagnosisResult(issues, probabilities, versions)


def grade(result: DiagnosisResult) -> float:
    """100 minus the issue deductions, clamped into [0, 100]."""
    total = FULL_POINTS - sum(DEDUCTIONS[SquatLabel(i)] for i in result.issues)
    return min(max(total, 0.0), FULL_POINTS)


def advise(result: DiagnosisResult) -> list:
    """One advice entry per issue ordered by label; a lone good-squat entry
    when no issue fired."""
    if not result.issues:
        key = LABEL_KEYS[SquatLabel.GOOD]
        return [AdviceEntry(1, key, ADVICE_TEXT[SquatLabel.GOOD], f"demo:{key}")]
    entries = []
    for issue in result.sorted_issues():
        label = SquatLabel(issue)
        key = LABEL_KEYS[label]
        entries.append(AdviceEntry(int(label), key, ADVICE_TEXT[label], f"demo:{key}"))
    return entries


def feasible_issue_sets() -> list:
    """Every issue set the four single-argmax heads can produce."""
    a_opts = [(), (SquatLabel.TOO_SHALLOW,)]
    b_opts = [(), (SquatLabel.POSTERIOR_PELVIC_TILT,), (SquatLabel.ANTERIOR_PELVIC_TILT,)]
    c_opts = [(), (SquatLabel.HIP_RISING_TOO_FAST,)]
    d_opts = [(), (SquatLabel.EXCESSIVE_HIP_DOMINANT,), (SquatLabel.EXCESSIVE_KNEE_DOMINANT,)]
    sets = []
    for combo in itertools.product(a_opts, b_opts, c_opts, d_opts):
        sets.append(frozenset(itertools.chain.from_iterable(combo)))
    return sets


class DiagnosisPipeline:
    """Raw rep clip -> sanitized tensor -> diagnosis -> grade -> advice."""

    def __init__(self, models: dict, thresholds: OutlierThresholds = OutlierThresholds()):
        missing = [m for m in ("A", "B", "C", "D") if m not in models]
        if missing:
            raise ValueError(f"missing models: {missing}")
        self.models = models
        self.thresholds = thresholds

    def grade_tensor(self, tensor: FeatureTensor) -> GradedSquat:
        t0 = time.perf_counter()
        result = diagnose(tensor, self.models)
        score = grade(result)
        advice = advise(result)
        ms = (time.perf_counter() - t0) * 1000.0
        return GradedSquat(tensor.clip_id, result, score, advice, inference_ms=ms,
                           label=int(tensor.label) if tensor.label is not None else None)

    def grade_clip(self, clip: RawClip) -> Optional[GradedSquat]:
        """None when the clip is excluded by the multiple-outlier rule."""
        outcome = clip_to_tensor(clip, self.thresholds)
        if isinstance(outcome, Excluded):
            return None
        return self.grade_tensor(outcome)
