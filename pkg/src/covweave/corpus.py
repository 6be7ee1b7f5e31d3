"""Paragraph corpora for the reordering task.

File format: UTF-8 text; documents separated by a line holding only ``===``;
paragraphs separated by blank lines.
"""

from __future__ import annotations

import functools
import re
from pathlib import Path

from .core import seeded_stream

Document = list[str]

_DOC_SEP = re.compile(r"^===\s*$", re.MULTILINE)


def parse_corpus(text: str) -> list[Document]:
    docs = []
    for chunk in _DOC_SEP.split(text):
        paras = [" ".join(p.split()) for p in re.split(r"\n\s*\n", chunk)]
        paras = [p for p in paras if p]
        if paras:
            docs.append(paras)
    return docs


def load_corpus(path: str | Path) -> list[Document]:
    return parse_corpus(Path(path).read_text(encoding="utf-8"))


def dump_corpus(docs: list[Document]) -> str:
    return "\n===\n".join("\n\n".join(doc) + "\n" for doc in docs)


_PLACES = ["Alder Creek", "Brightwater", "Cinder Hollow", "Dunmore", "Elk Ridge",
           "Fallowmere", "Glen Ashby", "Harrow Point", "Ironvale", "Juniper Bay",
           "Kestrel Falls", "Larkspur", "Millbrook", "Northgate", "Oakhaven"]
_TRADES = ["timber", "wool", "copper", "salt", "grain", "glass", "paper",
           "clay", "tea", "iron"]
_GROUPS = ["the town council", "a group of merchants", "the local guild",
           "several families", "the river company", "a cooperative of farmers",
           "the parish school board", "a traveling surveyor"]
_EVENTS = [
    "a new bridge was raised over the river",
    "the first market hall opened its doors",
    "a flood damaged the lower streets",
    "the rail line finally reached the valley",
    "a fire swept through the warehouse district",
    "the old mill was converted into a library",
    "a public well was dug in the square",
    "the harbor was dredged to admit larger boats",
    "a cholera outbreak closed the schools for a season",
    "the first newspaper was printed on a hand press",
    "the council voted to pave the main road",
    "a lighthouse was built on the headland",
]
_CONNECTIVES_FIRST = ["In the beginning,", "At first,", "In its earliest days,"]
_CONNECTIVES = ["Next,", "Afterward,", "Some years later,", "Following this,",
                "By then,", "Soon after,", "In the decade that followed,",
                "Later,", "As a result,", "Building on that,"]
_CONNECTIVES_LAST = ["Finally,", "In the end,", "By the close of the period,"]
_DETAILS = [
    "Residents remembered the change for a long time.",
    "Records from the period describe the work in careful detail.",
    "Not everyone agreed with the decision, and debate lasted for months.",
    "Visitors from nearby villages came to see the result.",
    "The effort required loans that took years to repay.",
    "Letters written at the time mention both pride and worry.",
    "Prices for everyday goods shifted in response.",
    "The population grew steadily as a consequence.",
]


def _paragraph(rng, place: str, year: int, connective: str, index: int) -> str:
    trade = rng.choice(_TRADES)
    group = rng.choice(_GROUPS)
    event = rng.choice(_EVENTS)
    sentences = [
        f"{connective} in {year}, {event} in {place}.",
        f"The change was driven by {group}, who had long argued that the "
        f"{trade} trade needed better support.",
        f"This was the {_ordinal(index + 1)} major development recorded in "
        f"the town chronicle.",
    ]
    details = rng.sample(_DETAILS, 2)
    sentences.extend(details)
    return " ".join(sentences)


def _ordinal(n: int) -> str:
    if 10 <= n % 100 <= 20:
        suffix = "th"
    else:
        suffix = {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
    return f"{n}{suffix}"


def synthetic_document(seed: int, label: str, n_paragraphs: int) -> Document:
    rng = seeded_stream(seed, f"corpus:{label}")
    place = rng.choice(_PLACES)
    year = rng.randint(1700, 1800)
    paras = []
    for i in range(n_paragraphs):
        if i == 0:
            conn = rng.choice(_CONNECTIVES_FIRST)
        elif i == n_paragraphs - 1:
            conn = rng.choice(_CONNECTIVES_LAST)
        else:
            conn = rng.choice(_CONNECTIVES)
        paras.append(_paragraph(rng, place, year, conn, i))
        year += rng.randint(1, 4)
    return paras


def synthetic_corpus(seed: int = 0, n_docs: int = 8,
                     paragraphs_per_doc: int = 120) -> list[Document]:
    """Chronicle-style documents whose paragraphs carry ordering cues."""
    return [synthetic_document(seed, f"doc{i}", paragraphs_per_doc)
            for i in range(n_docs)]


@functools.lru_cache(maxsize=4)
def default_corpus() -> tuple[tuple[str, ...], ...]:
    return tuple(tuple(doc) for doc in synthetic_corpus())
