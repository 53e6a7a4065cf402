"""Entity registry, claim triples and contradiction detection.

Entities and claims persist in the store's record files; this module is
the logic layer: alias resolution (injective after normalization),
deterministic claim ids, pattern queries and the conservative
contradiction rule (opposite effect signs with disjoint 95% CIs, or an
explicit supports/refutes polarity clash).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import AliasConflictError, InvariantError, UnknownEntityError
from .models import (
    CI_TOLERANCE,
    ClaimTriple,
    Entity,
    LiteralObject,
    SynthesisRecord,
    make_claim_id,
    short_digest,
)
from .store import Store
from .textutil import normalize_name


@dataclass
class FactPattern:
    subject: Optional[str] = None  # entity name or id
    relation: Optional[str] = None
    object: Optional[str] = None  # entity name, id, or literal key

    def validate(self) -> None:
        if self.subject is None and self.relation is None and self.object is None:
            raise ValueError("fact pattern needs at least one of subject/relation/object")


@dataclass
class FactQueryResult:
    results: list[dict]  # {"claim": ClaimTriple, "synthesis": SynthesisRecord | None}
    warnings: list[str]


def normalize_relation(relation: str) -> str:
    return "_".join(normalize_name(relation).split())


def effect_ci(estimate: float, se: float) -> tuple[float, float]:
    return (estimate - 1.96 * se, estimate + 1.96 * se)


def claims_conflict(a: ClaimTriple, b: ClaimTriple) -> Optional[str]:
    """Reason string when two same-group claims contradict, else None."""
    if a.object_key() != b.object_key() or a.subject != b.subject or a.relation != b.relation:
        return None
    if a.polarity != b.polarity:
        return "polarity conflict: supports vs refutes"
    if a.effect is not None and b.effect is not None:
        ea, eb = a.effect, b.effect
        opposite = (ea.estimate < 0 < eb.estimate) or (eb.estimate < 0 < ea.estimate)
        if opposite:
            lo_a, hi_a = effect_ci(ea.estimate, ea.se)
            lo_b, hi_b = effect_ci(eb.estimate, eb.se)
            disjoint = hi_a < lo_b or hi_b < lo_a
            if disjoint:
                return "opposite effect signs with disjoint 95% CIs"
    return None


class KnowledgeGraph:
    def __init__(self, store: Store):
        self.store = store
        self._alias_to_entity: dict[str, str] = {}
        for ent in store.entities.values():
            for alias in ent.aliases:
                self._alias_to_entity[normalize_name(alias)] = ent.entity_id

    # -- entities -----------------------------------------------------------

    def resolve_entity(self, name: str, create_if_missing: bool = False) -> str:
        norm = normalize_name(name)
        if not norm:
            raise ValueError("entity name is empty after normalization")
        if norm in self._alias_to_entity:
            return self._alias_to_entity[norm]
        if name in self.store.entities:
            return name  # already an entity_id
        if not create_if_missing:
            raise UnknownEntityError(f"unknown entity {name!r}")
        entity_id = "ent:" + short_digest(norm)
        entity = Entity(entity_id=entity_id, canonical_name=name.strip(), aliases=[name.strip()])
        if normalize_name(entity.canonical_name) != norm:
            entity.aliases.append(norm)
        self.store.append_entity(entity)
        self._alias_to_entity[norm] = entity_id
        return entity_id

    def add_alias(self, entity_id: str, alias: str) -> None:
        ent = self.store.entities.get(entity_id)
        if ent is None:
            raise UnknownEntityError(f"unknown entity {entity_id!r}")
        norm = normalize_name(alias)
        owner = self._alias_to_entity.get(norm)
        if owner == entity_id:
            return  # idempotent
        if owner is not None:
            raise AliasConflictError(f"alias {alias!r} already maps to {owner}, cannot add to {entity_id}")
        ent.aliases.append(alias.strip())
        self.store.append_entity(ent)
        self._alias_to_entity[norm] = entity_id

    def entity(self, entity_id: str) -> Entity:
        ent = self.store.entities.get(entity_id)
        if ent is None:
            raise UnknownEntityError(f"unknown entity {entity_id!r}")
        return ent

    def canonical_name(self, entity_id: str) -> str:
        ent = self.store.entities.get(entity_id)
        return ent.canonical_name if ent else entity_id

    # -- claims ---------------------------------------------------------------

    def assert_claim(self, claim: ClaimTriple) -> str:
        if claim.subject not in self.store.entities:
            raise UnknownEntityError(f"claim subject {claim.subject!r} is not a known entity")
        if not isinstance(claim.object, LiteralObject) and claim.object not in self.store.entities:
            raise UnknownEntityError(f"claim object {claim.object!r} is not a known entity")
        if claim.effect is not None and claim.effect.ci95 is not None:
            lo, hi = claim.effect.expected_ci()
            rlo, rhi = claim.effect.ci95
            if abs(rlo - lo) > CI_TOLERANCE or abs(rhi - hi) > CI_TOLERANCE:
                raise InvariantError(
                    f"claim ci95 [{rlo}, {rhi}] inconsistent with estimate {claim.effect.estimate} "
                    f"se {claim.effect.se}: expected [{lo:.6g}, {hi:.6g}]"
                )
        expected_id = make_claim_id(claim.subject, claim.relation, claim.object_key(), claim.source)
        claim.claim_id = expected_id
        self.store.append_claim(claim)
        return expected_id

    def _claim_visible(self, claim: ClaimTriple, include_superseded: bool) -> bool:
        if include_superseded:
            return True
        return not self.store.is_superseded(claim.source.pub_id, claim.source.version)

    def group_claims(self, subject: str, relation: str, object_key: Optional[str] = None, include_superseded: bool = False) -> list[ClaimTriple]:
        out = [
            c
            for c in self.store.claims.values()
            if c.subject == subject
            and c.relation == relation
            and (object_key is None or c.object_key() == object_key)
            and self._claim_visible(c, include_superseded)
        ]
        out.sort(key=lambda c: (c.object_key(), c.asserted_at, c.claim_id))
        return out

    def query_facts(self, pattern: FactPattern, include_superseded: bool = False) -> FactQueryResult:
        pattern.validate()
        warnings: list[str] = []

        subject_id = relation = object_id = None
        object_literal = None
        if pattern.subject is not None:
            try:
                subject_id = self.resolve_entity(pattern.subject)
            except UnknownEntityError:
                warnings.append(f"unknown entity: {pattern.subject}")
                return FactQueryResult([], warnings)
        if pattern.relation is not None:
            relation = normalize_relation(pattern.relation)
        if pattern.object is not None:
            try:
                object_id = self.resolve_entity(pattern.object)
            except UnknownEntityError:
                object_literal = pattern.object
                if not any(
                    isinstance(c.object, LiteralObject) and c.object_key() == object_literal
                    for c in self.store.claims.values()
                ):
                    warnings.append(f"unknown entity: {pattern.object}")
                    return FactQueryResult([], warnings)

        matched = []
        for claim in self.store.claims.values():
            if subject_id is not None and claim.subject != subject_id:
                continue
            if relation is not None and claim.relation != relation:
                continue
            if object_id is not None and claim.object_key() != object_id:
                continue
            if object_literal is not None and claim.object_key() != object_literal:
                continue
            if not self._claim_visible(claim, include_superseded):
                continue
            matched.append(claim)
        matched.sort(key=lambda c: (c.subject, c.relation, c.object_key(), c.asserted_at, c.claim_id))

        results = []
        for claim in matched:
            synthesis = self.store.get_synthesis(claim.group_key())
            results.append({"claim": claim, "synthesis": synthesis})
        return FactQueryResult(results, warnings)

    # -- contradictions ---------------------------------------------------------

    def detect_contradictions(self, subject: str, relation: str) -> list[tuple[str, str, str]]:
        claims = self.group_claims(subject, relation)
        out = []
        for i in range(len(claims)):
            for j in range(i + 1, len(claims)):
                reason = claims_conflict(claims[i], claims[j])
                if reason is not None:
                    a, b = sorted((claims[i].claim_id, claims[j].claim_id))
                    out.append((a, b, reason))
        out.sort()
        return out

    # -- interchange ---------------------------------------------------------

    def export_tsv(self, include_superseded: bool = False) -> str:
        """Claims as tab-separated (subject, relation, object, estimate, se, pub_id)."""
        lines = []
        claims = sorted(self.store.claims.values(), key=lambda c: (c.subject, c.relation, c.object_key(), c.claim_id))
        for c in claims:
            if not self._claim_visible(c, include_superseded):
                continue
            obj = c.object.key() if isinstance(c.object, LiteralObject) else self.canonical_name(c.object)
            est = f"{c.effect.estimate:g}" if c.effect else ""
            se = f"{c.effect.se:g}" if c.effect else ""
            lines.append("\t".join([self.canonical_name(c.subject), c.relation, obj, est, se, c.source.pub_id]))
        return "\n".join(lines) + ("\n" if lines else "")
