"""Automated evidence synthesis.

Fixed-effect inverse-variance pooling per claim group: w_i = 1/se_i^2,
pooled estimate = sum(w_i x_i) / sum(w_i), pooled se = sqrt(1 / sum(w_i)).
Agreement and the low/medium/high label follow an explicit, versionable
rule table so operators can tune thresholds.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

from .errors import MixedUnitsError
from .graph import KnowledgeGraph, claims_conflict
from .models import ClaimTriple, SynthesisRecord, utc_now
from .store import Store


def pool_effects(claims: Sequence[ClaimTriple]) -> tuple[float, float]:
    if not claims:
        raise ValueError("cannot pool an empty claim list")
    total_w = 0.0
    total_wx = 0.0
    for claim in claims:
        eff = claim.effect
        if eff is None:
            raise ValueError(f"claim {claim.claim_id} has no effect")
        if not math.isfinite(eff.estimate):
            raise ValueError(f"claim {claim.claim_id} has non-finite estimate")
        if not (eff.se > 0):
            raise ValueError(f"claim {claim.claim_id} has non-positive se")
        w = 1.0 / (eff.se * eff.se)
        total_w += w
        total_wx += w * eff.estimate
    return (total_wx / total_w, math.sqrt(1.0 / total_w))


def _claim_sign(claim: ClaimTriple) -> int:
    if claim.effect is not None:
        return 1 if claim.effect.estimate >= 0 else -1
    return 1 if claim.polarity == "supports" else -1


def agreement_ratio(claims: Sequence[ClaimTriple]) -> float:
    if not claims:
        raise ValueError("agreement over an empty claim list")
    pos = sum(1 for c in claims if _claim_sign(c) > 0)
    neg = len(claims) - pos
    if pos == neg:
        return 0.5
    return max(pos, neg) / len(claims)


# Confidence rule table; operator-tunable thresholds.
MEDIUM_MIN_STUDIES = 2
MEDIUM_MIN_AGREEMENT = 0.75
HIGH_MIN_STUDIES = 4
HIGH_MIN_AGREEMENT = 0.8  # high additionally requires agreement strictly above this


def confidence_label(n_studies: int, agreement: float, ci95: tuple[float, float], contradiction_flag: bool) -> str:
    lo, hi = ci95
    excludes_zero = lo > 0 or hi < 0
    if contradiction_flag:
        return "low"
    if n_studies < MEDIUM_MIN_STUDIES:
        return "low"
    if n_studies >= HIGH_MIN_STUDIES and agreement > HIGH_MIN_AGREEMENT and excludes_zero:
        return "high"
    if agreement >= MEDIUM_MIN_AGREEMENT and excludes_zero:
        return "medium"
    return "low"


class Synthesizer:
    def __init__(self, store: Store, graph: KnowledgeGraph):
        self.store = store
        self.graph = graph

    def refresh(self, subject: str, relation: str, object_key: str) -> Optional[SynthesisRecord]:
        """Recompute the group's record; returns None (and deletes any stale
        record) when the group has no poolable evidence left."""
        from .models import group_key as make_group_key

        group = make_group_key(subject, relation, object_key)
        claims = self.graph.group_claims(subject, relation, object_key)
        effect_claims = [c for c in claims if c.effect is not None]
        if not claims or not effect_claims:
            self.store.delete_synthesis(group)
            return None

        units = {c.unit or "" for c in effect_claims}
        if len(units) > 1:
            self.store.delete_synthesis(group)
            raise MixedUnitsError(
                f"group {group} mixes units {sorted(units)}; refusing to pool"
            )

        pooled_estimate, pooled_se = pool_effects(effect_claims)
        ci95 = (pooled_estimate - 1.96 * pooled_se, pooled_estimate + 1.96 * pooled_se)
        agreement = agreement_ratio(claims)
        contradiction = any(
            claims_conflict(claims[i], claims[j]) is not None
            for i in range(len(claims))
            for j in range(i + 1, len(claims))
        )
        record = SynthesisRecord(
            group=group,
            subject=subject,
            relation=relation,
            object_key=object_key,
            n_studies=len(claims),
            pooled_estimate=pooled_estimate,
            pooled_se=pooled_se,
            ci95=ci95,
            agreement_ratio=agreement,
            confidence=confidence_label(len(claims), agreement, ci95, contradiction),
            contradiction_flag=contradiction,
            computed_at=utc_now(),
            inputs=sorted(c.claim_id for c in claims),
        )
        self.store.put_synthesis(record)
        return record

    def refresh_groups_of(self, pub_id: str, version: int) -> list[str]:
        """Refresh every group touched by the given publication version.

        MixedUnitsError from one group does not stop the others; the
        offending group's key is still reported so callers can surface a
        finding.
        """
        groups = {}
        for claim in self.store.claims.values():
            if claim.source.pub_id == pub_id and claim.source.version == version:
                groups[claim.group_key()] = (claim.subject, claim.relation, claim.object_key())
        refreshed = []
        for key, (subject, relation, object_key) in sorted(groups.items()):
            try:
                self.refresh(subject, relation, object_key)
            except MixedUnitsError:
                pass
            refreshed.append(key)
        return refreshed
