import json
import random

import pytest

from apengine.config import Config
from apengine.engine import Engine

SCIENCE_WORDS = (
    "aspirin stroke trial cohort dosage placebo outcome mortality enzyme receptor "
    "protein inhibitor biomarker plasma serum lipid glucose insulin therapy remission "
    "relapse patients adults incidence reduction survival metabolism pathway kinase "
    "antibody vaccine antigen immune response clinical randomized blinded baseline "
    "followup endpoint hazard ratio regression variance sample screening diagnosis"
).split()

OFF_CORPUS_WORDS = (
    "zanzibar ukulele quokka fjord saxophone origami tundra mosaic lagoon bazaar "
    "gondola yurt sombrero tango kayak igloo pagoda safari zeppelin harmonica "
    "waffle pretzel gelato espresso croissant baguette paella sushi noodle dumpling"
).split()


def make_markdown(title, date="2020-01-01", sections=None, claims=None, authors=None, references=None):
    lines = [f"# {title}", ""]
    if authors:
        lines.append("Authors: " + "; ".join(authors))
    lines.append(f"Date: {date}")
    lines.append("")
    for heading, text in sections or []:
        lines.append(f"## {heading}")
        lines.append("")
        lines.append(text)
        lines.append("")
    if claims:
        lines.append("## Claims")
        lines.append("")
        lines.extend(claims)
        lines.append("")
    if references:
        lines.append("## References")
        lines.append("")
        lines.extend(f"- {r}" for r in references)
        lines.append("")
    return "\n".join(lines).encode("utf-8")


def make_ap_json(title, date="2020-01-01", sections=None, claims=None, datasets=None, references=None, **extra):
    doc = {
        "title": title,
        "authors": extra.get("authors", [{"name": "A. Researcher"}]),
        "date": date,
        "keywords": extra.get("keywords", []),
        "references": references or [],
        "sections": [{"label": label, "text": text} for label, text in (sections or [])],
    }
    if claims:
        doc["claims"] = claims
    if datasets:
        doc["datasets"] = datasets
    if "venue" in extra:
        doc["venue"] = extra["venue"]
    if "review_score" in extra:
        doc["review_score"] = extra["review_score"]
    return json.dumps(doc).encode("utf-8")


def random_paragraph(rng: random.Random, words, n_sentences=2, words_per_sentence=8):
    sentences = []
    for _ in range(n_sentences):
        tokens = rng.choices(words, k=words_per_sentence)
        sentences.append(" ".join(tokens).capitalize() + ".")
    return " ".join(sentences)


@pytest.fixture
def engine(tmp_path):
    return Engine(Config(store_path=str(tmp_path / "store")))


@pytest.fixture
def engine_factory(tmp_path):
    counter = [0]

    def make(**overrides):
        counter[0] += 1
        cfg = Config(store_path=str(tmp_path / f"store{counter[0]}"), **overrides)
        return Engine(cfg)

    return make
