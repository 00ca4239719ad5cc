"""Eight-archetype taxonomy over 4D signatures.

Levels: every component is divided by its largest value across the features
of one run, then cut at ``low_pct``/``high_pct`` percent (defaults 30/70)
into Low, Mid and High. Multiplying one component of every feature by a
positive constant therefore never changes a label.

Decision order (first match wins)::

    1. I, S, N, X all Low                                   -> NoiseCandidate
    2. I High, two or more of S/N/X High, and no character
       component above ``dominance`` x I (S compared as its
       square root, which has the units of I)               -> ComplexDriver
    3. I High, X High and X <= I                            -> InteractiveCatalyst
    4. X High                                               -> HiddenInteractor
    5. N High, I at least Mid                               -> NonlinearDriver
    6. S High, I at least Mid                               -> VolatileSpecialist
    7. I High                                               -> SimpleWorkhorse
    8. otherwise                                            -> StableContributor

Rules 2-4 compare a feature's character components against its own impact:
a feature whose curvature or interaction dwarfs its impact is a soloist or
an interactor, not a driver.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import FFCAError


class Archetype(str, Enum):
    SIMPLE_WORKHORSE = "SimpleWorkhorse"
    STABLE_CONTRIBUTOR = "StableContributor"
    NOISE_CANDIDATE = "NoiseCandidate"
    NONLINEAR_DRIVER = "NonlinearDriver"
    VOLATILE_SPECIALIST = "VolatileSpecialist"
    HIDDEN_INTERACTOR = "HiddenInteractor"
    INTERACTIVE_CATALYST = "InteractiveCatalyst"
    COMPLEX_DRIVER = "ComplexDriver"


RECOMMENDATIONS = {
    Archetype.SIMPLE_WORKHORSE:
        "Trust global explanations. Use Partial Dependence Plots (PDPs) to confirm its linear, stable behavior.",
    Archetype.STABLE_CONTRIBUTOR:
        "Acknowledge as a secondary driver. It can be trusted but is not the primary focus for explanation "
        "or feature engineering.",
    Archetype.NOISE_CANDIDATE:
        "Consider for feature selection. This feature adds complexity without providing signal and can "
        "likely be removed.",
    Archetype.NONLINEAR_DRIVER:
        "Visualize its 1D effect. Do not trust a linear interpretation. Use 1D PDP/ICE plots to understand "
        "its curved relationship.",
    Archetype.VOLATILE_SPECIALIST:
        "Perform sliced analysis. Do not analyze globally. Group data by suspected context-switchers to "
        "uncover distinct local behaviors.",
    Archetype.HIDDEN_INTERACTOR:
        "Stop analyzing in isolation. Use 2D PDPs or SHAP interaction plots to identify its partners and "
        "understand their joint effect.",
    Archetype.INTERACTIVE_CATALYST:
        "Analyze both direct and joint effects. Use 1D PDPs for its individual role and 2D PDPs for its "
        "key interactions.",
    Archetype.COMPLEX_DRIVER:
        "Requires a full deep-dive. No single explanation will suffice. Use the complete XAI toolkit "
        "(local, global, sliced, and interaction analysis).",
}

LOW, MID, HIGH = "Low", "Mid", "High"
_KEYS = ("I", "S", "N", "X")


@dataclass(frozen=True)
class ThresholdPolicy:
    high_pct: float = 70.0
    low_pct: float = 30.0
    dominance: float = 2.0
    curvature_floor: float = 0.1

    def __post_init__(self):
        if not (0 < self.low_pct < self.high_pct < 100):
            raise ValueError("need 0 < low_pct < high_pct < 100")
        if not self.dominance > 0:
            raise ValueError("dominance must be positive")
        if not 0 <= self.curvature_floor < 1:
            raise ValueError("curvature_floor must lie in [0, 1)")


@dataclass
class Classification:
    feature: str
    archetype: Archetype
    levels: dict
    indeterminate: bool = False
    alternative: Archetype | None = None

    @property
    def recommendation(self) -> str:
        return recommend(self.archetype)

    def to_dict(self) -> dict:
        d = {"feature": self.feature, "archetype": self.archetype.value, "levels": dict(self.levels),
             "recommendation": self.recommendation}
        if self.indeterminate:
            d["indeterminate"] = True
            d["alternative"] = self.alternative.value if self.alternative else None
        return d


def recommend(a: Archetype) -> str:
    return RECOMMENDATIONS[Archetype(a)]


def level_components(values, policy: ThresholdPolicy) -> list[str]:
    v = np.asarray(values, dtype=np.float64)
    top = float(np.max(v)) if len(v) else 0.0
    if not top > 0:
        return [LOW] * len(v)
    r = v / top
    return [LOW if x <= policy.low_pct / 100 else HIGH if x >= policy.high_pct / 100 else MID for x in r]


def _decide(lv: dict, raw: dict, policy: ThresholdPolicy) -> Archetype:
    I, S, N, X = (lv[k] for k in _KEYS)
    if all(lv[k] == LOW for k in _KEYS):
        return Archetype.NOISE_CANDIDATE
    character = max(math.sqrt(raw["S"]), raw["N"], raw["X"])
    if I == HIGH and sum(c == HIGH for c in (S, N, X)) >= 2 and character <= policy.dominance * raw["I"]:
        return Archetype.COMPLEX_DRIVER
    if I == HIGH and X == HIGH and raw["X"] <= raw["I"]:
        return Archetype.INTERACTIVE_CATALYST
    if X == HIGH:
        return Archetype.HIDDEN_INTERACTOR
    if N == HIGH and I != LOW:
        return Archetype.NONLINEAR_DRIVER
    if S == HIGH and I != LOW:
        return Archetype.VOLATILE_SPECIALIST
    if I == HIGH:
        return Archetype.SIMPLE_WORKHORSE
    return Archetype.STABLE_CONTRIBUTOR


def classify(signatures, policy: ThresholdPolicy | None = None) -> list[Classification]:
    """Label every signature; levels are relative to the other features in ``signatures``.

    Without interaction scores (diagonal runs) a feature is labelled with X
    assumed Low, and flagged ``indeterminate`` when assuming X High would
    change the label; ``alternative`` then holds that other label.
    """
    policy = policy or ThresholdPolicy()
    sigs = list(signatures)
    if not sigs:
        raise FFCAError("classify needs at least one signature")
    has_x = all(s.interaction is not None for s in sigs)
    comps = {
        "I": [s.impact for s in sigs],
        "S": [s.volatility for s in sigs],
        "N": [s.nonlinearity for s in sigs],
        "X": [s.interaction if has_x else 0.0 for s in sigs],
    }
    levels = {k: level_components(v, policy) for k, v in comps.items()}
    # second-order scores that are small next to the largest curvature anywhere are Low
    scale = max(comps["N"] + comps["X"])
    for k in ("N", "X"):
        levels[k] = [LOW if v < policy.curvature_floor * scale else lv for v, lv in zip(comps[k], levels[k])]
    out = []
    for i, s in enumerate(sigs):
        lv = {k: levels[k][i] for k in _KEYS}
        raw = {k: float(comps[k][i]) for k in _KEYS}
        label = _decide(lv, raw, policy)
        if has_x:
            out.append(Classification(s.feature_name, label, lv))
            continue
        alt = _decide({**lv, "X": HIGH}, {**raw, "X": raw["I"]}, policy)
        lv = {**lv, "X": None}
        out.append(Classification(s.feature_name, label, lv, indeterminate=alt != label,
                                  alternative=alt if alt != label else None))
    return out


def archetype_agreement(run_a, run_b) -> float:
    a = {c.feature: c.archetype for c in run_a}
    b = {c.feature: c.archetype for c in run_b}
    if set(a) != set(b) or not a:
        raise FFCAError("runs must cover the same non-empty feature set")
    return sum(a[f] == b[f] for f in a) / len(a)


def classifications_to_json(classes) -> str:
    return json.dumps([c.to_dict() for c in classes], indent=2)
