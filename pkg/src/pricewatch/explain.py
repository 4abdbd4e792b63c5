"""Rule-based suspected-issue inference from per-feature anomaly scores.

Every explainable log feature has cost in its denominator, so a record whose
score is large on several of them most likely has a bad cost; a record large
on exactly one likely has a bad numerator. The rules below encode that and
the sparse-data case where too few features exist to tell.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

from .gnb import ScoreBreakdown

COST_ISSUE = "Cost"


@dataclass(frozen=True)
class SuspectedIssues:
    """Ordered issue names shown to reviewers, plus the threshold used."""

    issues: tuple[str, ...]
    epsilon_s: float

    def __contains__(self, name: str) -> bool:
        return name in self.issues


def explain_threshold(epsilon: float) -> float:
    """Per-feature explanation threshold: a quarter of the anomaly threshold."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be > 0, got {epsilon}")
    return epsilon / 4.0


def get_suspected_issues(
    breakdown: ScoreBreakdown,
    names: Sequence[str],
    epsilon_s: float,
) -> SuspectedIssues:
    """Derive the suspected-issue list from a score breakdown.

    Rules, applied in order over the per-feature scores A_i:
      1. collect the name of every feature with A_i >= epsilon_s, counting
         the non-missing features below the threshold as num_not_null;
      2. with at most 2 features below threshold there is too little signal
         to exonerate cost, so append "Cost"; otherwise, if more than one
         feature scored high, the shared denominator is the likely culprit
         and the list collapses to just "Cost";
      3. if "Cost" is suspected, every non-missing feature close to cost
         (A_i < epsilon_s) is implicated too.
    """
    if epsilon_s <= 0:
        raise ValueError(f"epsilon_s must be > 0, got {epsilon_s}")
    if len(breakdown.per_feature) != len(names):
        raise ValueError(
            f"breakdown has {len(breakdown.per_feature)} features, expected {len(names)}"
        )

    issues: list[str] = []
    num_not_null = 0
    for a, name in zip(breakdown.per_feature, names):
        if a is not None and a >= epsilon_s:
            issues.append(name)
        elif a is not None:
            num_not_null += 1

    if num_not_null <= 2:
        issues.append(COST_ISSUE)
    elif len(issues) > 1:
        issues = [COST_ISSUE]

    if COST_ISSUE in issues:
        for a, name in zip(breakdown.per_feature, names):
            if a is not None and a < epsilon_s:
                issues.append(name)

    return SuspectedIssues(issues=tuple(issues), epsilon_s=epsilon_s)
