"""Expert rating protocol: ten items over four dimensions, 1-5 scale.

Raters score factual correctness (F1-F3), relevance (R1-R3), completeness
(C1-C2) and motivational impact (M1-M2). Aggregation reports per-item
means rounded half-away-from-zero to two decimals, plus dimension means
computed both over item means and over raw records (the two disagree when
items have unequal rater counts, so both are labeled).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from decimal import Decimal, ROUND_HALF_UP
from enum import Enum
from pathlib import Path


class EvalError(Exception):
    code = "EvalError"


class UnknownItem(EvalError):
    code = "UnknownItem"


class ScoreOutOfRange(EvalError):
    code = "ScoreOutOfRange"


class NoRecords(EvalError):
    code = "NoRecords"


class RatingItem(str, Enum):
    F1 = "F1"
    F2 = "F2"
    F3 = "F3"
    R1 = "R1"
    R2 = "R2"
    R3 = "R3"
    C1 = "C1"
    C2 = "C2"
    M1 = "M1"
    M2 = "M2"

    @property
    def dimension(self) -> str:
        return _DIMENSIONS[self.value[0]]

    @classmethod
    def parse(cls, raw: str) -> "RatingItem":
        try:
            return cls(str(raw).strip().upper())
        except ValueError:
            raise UnknownItem(f"unknown rating item {raw!r}") from None


_DIMENSIONS = {
    "F": "Factual Correctness",
    "R": "Relevance",
    "C": "Completeness",
    "M": "Motivation",
}

DIMENSION_ORDER = ("Factual Correctness", "Relevance", "Completeness", "Motivation")
ITEM_ORDER = tuple(RatingItem)

MIN_SCORE = 1
MAX_SCORE = 5


@dataclass(frozen=True)
class RatingRecord:
    rater: str
    session_id: str
    item: RatingItem
    score: int
    comment: str = ""

    def to_dict(self) -> dict:
        return {
            "rater": self.rater,
            "session_id": self.session_id,
            "item": self.item.value,
            "score": self.score,
            "comment": self.comment,
        }


def record(rater: str, session_id: str, item, score, comment: str = "") -> RatingRecord:
    """Validate one rating; raises on unknown items or off-scale scores."""
    parsed_item = item if isinstance(item, RatingItem) else RatingItem.parse(item)
    try:
        value = int(score)
    except (TypeError, ValueError):
        raise ScoreOutOfRange(f"score {score!r} is not an integer") from None
    if not MIN_SCORE <= value <= MAX_SCORE:
        raise ScoreOutOfRange(f"score {value} outside {MIN_SCORE}..{MAX_SCORE}")
    return RatingRecord(rater=str(rater), session_id=str(session_id), item=parsed_item, score=value, comment=comment or "")


def round_mean(value: float) -> float:
    """Round to 2 decimals, halves away from zero (presentation rule)."""
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass
class Report:
    item_means: dict[RatingItem, float]
    item_counts: dict[RatingItem, int]
    dimension_means_of_item_means: dict[str, float]
    dimension_means_of_records: dict[str, float]

    def to_dict(self) -> dict:
        return {
            "item_means": {item.value: mean for item, mean in self.item_means.items()},
            "item_counts": {item.value: count for item, count in self.item_counts.items()},
            "dimension_means_of_item_means": dict(self.dimension_means_of_item_means),
            "dimension_means_of_records": dict(self.dimension_means_of_records),
        }


def aggregate(records: list[RatingRecord]) -> Report:
    """Arithmetic per-item means over all records of that item."""
    if not records:
        raise NoRecords("no rating records to aggregate")
    by_item: dict[RatingItem, list[int]] = {}
    for rec in records:
        by_item.setdefault(rec.item, []).append(rec.score)

    item_means = {item: round_mean(sum(scores) / len(scores)) for item, scores in by_item.items()}
    item_counts = {item: len(scores) for item, scores in by_item.items()}

    dim_item: dict[str, list[float]] = {}
    dim_scores: dict[str, list[int]] = {}
    for item, scores in by_item.items():
        dim_item.setdefault(item.dimension, []).append(sum(scores) / len(scores))
        dim_scores.setdefault(item.dimension, []).extend(scores)
    return Report(
        item_means=item_means,
        item_counts=item_counts,
        dimension_means_of_item_means={d: round_mean(sum(v) / len(v)) for d, v in dim_item.items()},
        dimension_means_of_records={d: round_mean(sum(v) / len(v)) for d, v in dim_scores.items()},
    )


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.2f}"


def render_markdown(report: Report) -> str:
    """Render the report as a markdown table: a dimension header row over
    the item columns, the item codes, then one row of two-decimal means."""
    dim_cells: list[str] = []
    for dimension in DIMENSION_ORDER:
        span = [item for item in ITEM_ORDER if item.dimension == dimension]
        dim_cells.extend([dimension] + [""] * (len(span) - 1))
    lines = [
        "| " + " | ".join(dim_cells) + " |",
        "| " + " | ".join(["---"] * len(ITEM_ORDER)) + " |",
        "| " + " | ".join(item.value for item in ITEM_ORDER) + " |",
        "| " + " | ".join(_fmt(report.item_means.get(item)) for item in ITEM_ORDER) + " |",
        "",
        "Raters per item: "
        + ", ".join(f"{item.value}={report.item_counts.get(item, 0)}" for item in ITEM_ORDER),
        "",
        "Dimension means (over item means): "
        + ", ".join(
            f"{d}={_fmt(report.dimension_means_of_item_means.get(d))}" for d in DIMENSION_ORDER
        ),
        "",
        "Dimension means (over raw records): "
        + ", ".join(
            f"{d}={_fmt(report.dimension_means_of_records.get(d))}" for d in DIMENSION_ORDER
        ),
        "",
    ]
    return "\n".join(lines)


def append_rating(path: str | Path, rating: RatingRecord) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8") as handle:
        handle.write(json.dumps(rating.to_dict(), ensure_ascii=False) + "\n")


def load_ratings(path: str | Path) -> list[RatingRecord]:
    records: list[RatingRecord] = []
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
            records.append(
                record(
                    rater=data.get("rater", ""),
                    session_id=data.get("session_id", ""),
                    item=data["item"],
                    score=data["score"],
                    comment=data.get("comment", ""),
                )
            )
        except (json.JSONDecodeError, KeyError) as exc:
            raise EvalError(f"ratings line {line_no}: {exc}") from None
    return records
