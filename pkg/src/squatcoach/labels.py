"""The seven squat labels: 1 is a good squat, 2-7 are technique issues."""

from enum import IntEnum


class SquatLabel(IntEnum):
    GOOD = 1
    TOO_SHALLOW = 2
    POSTERIOR_PELVIC_TILT = 3
    ANTERIOR_PELVIC_TILT = 4
    HIP_RISING_TOO_FAST = 5
    EXCESSIVE_HIP_DOMINANT = 6
    EXCESSIVE_KNEE_DOMINANT = 7


LABEL_KEYS = {
    SquatLabel.GOOD: "good_squat",
    SquatLabel.TOO_SHALLOW: "too_shallow",
    SquatLabel.POSTERIOR_PELVIC_TILT: "posterior_pelvic_tilt",
    SquatLabel.ANTERIOR_PELVIC_TILT: "anterior_pelvic_tilt",
    SquatLabel.HIP_RISING_TOO_FAST: "hip_rising_too_fast",
    SquatLabel.EXCESSIVE_HIP_DOMINANT: "excessive_hip_dominant",
    SquatLabel.EXCESSIVE_KNEE_DOMINANT: "excessive_knee_dominant",
}

LABEL_DESCRIPTIONS = {
    SquatLabel.GOOD: "Good squat",
    SquatLabel.TOO_SHALLOW: "Squat too shallow",
    SquatLabel.POSTERIOR_PELVIC_TILT: "Posterior pelvic tilt",
    SquatLabel.ANTERIOR_PELVIC_TILT: "Anterior pelvic tilt",
    SquatLabel.HIP_RISING_TOO_FAST: "Hip rising too fast (ascending phase)",
    SquatLabel.EXCESSIVE_HIP_DOMINANT: "Excessive hip dominant (descending phase)",
    SquatLabel.EXCESSIVE_KNEE_DOMINANT: "Excessive knee dominant (descending phase)",
}

ISSUE_LABELS = tuple(l for l in SquatLabel if l != SquatLabel.GOOD)
