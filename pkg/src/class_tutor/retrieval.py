"""Passage retrieval over course text: preprocessing, inverted index, BM25.

The corpus format is plain UTF-8 text with blank-line paragraph breaks;
lines of the form ``## <locator>`` tag the following paragraphs with a
location prefix. Ranking is BM25 (k1=1.2, b=0.75) with IDF floored at
zero so scores stay nonnegative and adding occurrences of a query term
never hurts. No stemming, no stopwords: determinism first.

A built index is immutable and safe to share across concurrent searchers.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from pathlib import Path

FORMAT_VERSION = 1

BM25_K1 = 1.2
BM25_B = 0.75
MIN_PASSAGE_TOKENS = 5

_TOKEN_RE = re.compile(r"[a-z0-9]+")
_LOCATOR_RE = re.compile(r"^##\s*(.+?)\s*$")


class RetrievalError(Exception):
    """Base error for corpus and index handling."""


class EmptyCorpus(RetrievalError):
    pass


class EmptyQuery(RetrievalError):
    pass


class VersionMismatch(RetrievalError):
    pass


class CorruptIndex(RetrievalError):
    pass


def tokenize(text: str) -> list[str]:
    """Lowercase and split on any non-alphanumeric; digits are kept."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Passage:
    id: int
    locator: str
    text: str
    token_count: int


@dataclass(frozen=True)
class ScoredPassage:
    passage: Passage
    score: float


@dataclass
class InvertedIndex:
    """Postings keyed by term, each a list of (passage id, term frequency)
    sorted by passage id ascending."""

    passages: list[Passage]
    postings: dict[str, list[tuple[int, int]]]
    doc_lengths: list[int]
    format_version: int = FORMAT_VERSION

    @property
    def passage_count(self) -> int:
        return len(self.passages)

    @property
    def avgdl(self) -> float:
        return sum(self.doc_lengths) / len(self.doc_lengths)


def preprocess(raw_text: str) -> list[Passage]:
    """Split corpus text into cleaned passages.

    Paragraphs are blank-line separated; internal whitespace collapses to
    single spaces; paragraphs under five tokens are dropped. Locator lines
    (``## ch1/sec2``) are not passages themselves but prefix the locators
    of the paragraphs that follow them.
    """
    heading: str | None = None
    per_heading_count = 0
    current_lines: list[str] = []
    passages: list[Passage] = []

    def flush():
        nonlocal per_heading_count
        if not current_lines:
            return
        text = " ".join(" ".join(current_lines).split())
        current_lines.clear()
        if not text:
            return
        tokens = tokenize(text)
        if len(tokens) < MIN_PASSAGE_TOKENS:
            return
        per_heading_count += 1
        if heading:
            locator = f"{heading}/p{per_heading_count}"
        else:
            locator = f"p{per_heading_count}"
        passages.append(Passage(id=len(passages), locator=locator, text=text, token_count=len(tokens)))

    for line in raw_text.splitlines():
        match = _LOCATOR_RE.match(line)
        if match:
            flush()
            heading = match.group(1)
            per_heading_count = 0
            continue
        if not line.strip():
            flush()
            continue
        current_lines.append(line.strip())
    flush()

    if not passages:
        raise EmptyCorpus("no passage survived preprocessing")
    return passages


def build_index(passages: list[Passage]) -> InvertedIndex:
    if not passages:
        raise EmptyCorpus("cannot index zero passages")
    postings: dict[str, list[tuple[int, int]]] = {}
    doc_lengths: list[int] = []
    for passage in passages:
        tokens = tokenize(passage.text)
        doc_lengths.append(len(tokens))
        counts: dict[str, int] = {}
        for token in tokens:
            counts[token] = counts.get(token, 0) + 1
        for term, tf in counts.items():
            postings.setdefault(term, []).append((passage.id, tf))
    for plist in postings.values():
        plist.sort(key=lambda entry: entry[0])
    return InvertedIndex(passages=list(passages), postings=postings, doc_lengths=doc_lengths)


def idf(index: InvertedIndex, term: str) -> float:
    """Lucene-style floored IDF: max(0, ln((N - df + 0.5) / (df + 0.5)))."""
    df = len(index.postings.get(term, ()))
    if df == 0:
        return 0.0
    n = index.passage_count
    return max(0.0, math.log((n - df + 0.5) / (df + 0.5)))


def search(index: InvertedIndex, query: str, k: int) -> list[ScoredPassage]:
    """Top-k BM25 results, score descending, ties broken by passage id.

    Query terms keep their multiplicity. Zero-score passages are excluded,
    so every result shares at least one query term with the query.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    terms = tokenize(query)
    if not terms:
        raise EmptyQuery(f"query {query!r} has no searchable terms")
    avgdl = index.avgdl
    scores: dict[int, float] = {}
    for term in terms:
        term_idf = idf(index, term)
        if term_idf == 0.0:
            continue
        for pid, tf in index.postings[term]:
            dl = index.doc_lengths[pid]
            norm = tf + BM25_K1 * (1 - BM25_B + BM25_B * dl / avgdl)
            scores[pid] = scores.get(pid, 0.0) + term_idf * (tf * (BM25_K1 + 1)) / norm
    ranked = sorted(
        (pid for pid, score in scores.items() if score > 0.0),
        key=lambda pid: (-scores[pid], pid),
    )
    return [ScoredPassage(passage=index.passages[pid], score=scores[pid]) for pid in ranked[:k]]


def save_index(index: InvertedIndex, path: str | Path) -> None:
    """Write the index as a single versioned JSON document."""
    document = {
        "format_version": index.format_version,
        "stats": {"passage_count": index.passage_count, "avgdl": index.avgdl},
        "passages": [
            {"id": p.id, "locator": p.locator, "text": p.text, "token_count": p.token_count}
            for p in index.passages
        ],
        "doc_lengths": index.doc_lengths,
        "postings": {term: [[pid, tf] for pid, tf in plist] for term, plist in index.postings.items()},
    }
    Path(path).write_text(json.dumps(document, ensure_ascii=False), encoding="utf-8")


def load_index(path: str | Path) -> InvertedIndex:
    try:
        document = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptIndex(f"cannot read index {path}: {exc}") from None
    if not isinstance(document, dict):
        raise CorruptIndex(f"index {path} is not a JSON object")
    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"index format {version!r}, expected {FORMAT_VERSION}")
    try:
        passages = [
            Passage(id=p["id"], locator=p["locator"], text=p["text"], token_count=p["token_count"])
            for p in document["passages"]
        ]
        postings = {
            term: [(int(pid), int(tf)) for pid, tf in plist]
            for term, plist in document["postings"].items()
        }
        doc_lengths = [int(n) for n in document["doc_lengths"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptIndex(f"index {path} is structurally invalid: {exc}") from None
    if not passages:
        raise CorruptIndex(f"index {path} has no passages")
    return InvertedIndex(passages=passages, postings=postings, doc_lengths=doc_lengths, format_version=version)
