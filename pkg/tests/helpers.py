"""Shared builders for randomized test corpora.

Everything here is driven by an explicit random.Random so corpora are
reproducible from a seed. Symbol pools avoid grammar keywords.
"""

from __future__ import annotations

import random

from proofsketch import (
    DatasetRecord,
    Label,
    Literal,
    Polarity,
    Question,
    Rule,
    Theory,
    brute_force_closure,
    decide_from_closure,
    forward_chain,
)

ENTITY_POOL = ("anne", "bob", "carol", "dave", "erin", "fiona", "gary", "harry")
ATTRIBUTE_POOL = ("big", "kind", "green", "quiet", "smart", "round",
                  "nice", "furry", "young", "blue")


def random_theory(rng: random.Random, *, max_entities: int = 6, max_attributes: int = 6,
                  max_rules: int = 8, max_facts: int = 10) -> Theory:
    entities = rng.sample(ENTITY_POOL, rng.randint(1, max_entities))
    attributes = rng.sample(ATTRIBUTE_POOL, rng.randint(2, max_attributes))

    pairs = [(entity, attribute) for entity in entities for attribute in attributes]
    fact_count = rng.randint(1, min(max_facts, len(pairs)))
    positive: set[Literal] = set()
    negative: set[Literal] = set()
    for entity, attribute in rng.sample(pairs, fact_count):
        if rng.random() < 0.7:
            positive.add(Literal(entity, attribute, Polarity.POSITIVE))
        else:
            negative.add(Literal(entity, attribute, Polarity.NEGATIVE))

    rules: list[Rule] = []
    for _ in range(rng.randint(0, max_rules)):
        rules.append(random_rule(rng, entities, attributes))
    return Theory(frozenset(positive), frozenset(negative), tuple(rules))


def random_rule(rng: random.Random, entities: list[str], attributes: list[str]) -> Rule:
    conditions = [
        (attribute, Polarity.POSITIVE if rng.random() < 0.8 else Polarity.NEGATIVE)
        for attribute in attributes
    ] + [
        (attribute, Polarity.NEGATIVE if rng.random() < 0.8 else Polarity.POSITIVE)
        for attribute in attributes
    ]
    rng.shuffle(conditions)
    seen: set[tuple[str, Polarity]] = set()
    distinct = [c for c in conditions if not (c in seen or seen.add(c))]
    body_size = rng.randint(1, min(3, len(distinct) - 1))
    body = tuple(distinct[:body_size])
    head = distinct[body_size]
    subject = None if rng.random() < 0.8 else rng.choice(entities)
    return Rule(subject, body, head)


def random_question(rng: random.Random, theory: Theory) -> Question:
    entities = sorted(theory.entities()) or ["anne"]
    attributes = sorted(theory.attributes()) or ["big"]
    entity = rng.choice(entities)
    attribute = rng.choice(attributes)
    polarity = Polarity.POSITIVE if rng.random() < 0.7 else Polarity.NEGATIVE
    link = "" if polarity is Polarity.POSITIVE else "not "
    text = f"Is {entity} {link}{attribute}?"
    return Question(Literal(entity, attribute, polarity), raw_text=text)


def gold_label(theory: Theory, question: Question) -> Label:
    return decide_from_closure(forward_chain(theory), question).label


def record_for(theory: Theory, question: Question, record_id: str) -> DatasetRecord:
    return DatasetRecord(
        record_id=record_id,
        theory_text=theory.to_text(),
        question_text=question.raw_text,
        gold_label=gold_label(theory, question),
    )


def tiny_theory(rng: random.Random) -> Theory:
    """Small enough instance to verify by hand."""
    return random_theory(rng, max_entities=3, max_attributes=3, max_rules=3, max_facts=4)
