"""Referring-expression corpora: parsing, tagging, and summary statistics.

Expressions are tagged with fixed word lists rather than a grammatical
tagger, keeping the flags deterministic and auditable.  Token counts use the
package tokenizer (lowercase, split on non-alphanumeric runs), and length
bins are short (< 4 tokens), medium (4-6) and long (> 6).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from importlib import resources
from statistics import fmean

from .metrics import QueryAttributes

ANNOTATION_TYPES = ("first_frame", "full_video")

_TOKEN_PATTERN = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class QueryRecord:
    video_id: str
    object_id: str
    annotator_id: str
    annotation_type: str
    text: str
    is_coco: bool = False
    invalid_over_time: bool | None = None

    def __post_init__(self):
        if self.annotation_type not in ANNOTATION_TYPES:
            raise ValueError(
                f"annotation type must be one of {ANNOTATION_TYPES}, "
                f"got {self.annotation_type!r}"
            )
        if not self.text.strip():
            raise ValueError("query text must be non-empty")


@dataclass(frozen=True)
class Lexicons:
    spatial_words: frozenset[str]
    verb_words: frozenset[str]

    def __post_init__(self):
        for name in ("spatial_words", "verb_words"):
            words = getattr(self, name)
            if not words:
                raise ValueError(f"{name} lexicon is empty")
            if any(w != w.lower() for w in words):
                raise ValueError(f"{name} lexicon must be lowercase")


@dataclass(frozen=True)
class GroupStats:
    count: int
    mean_length: float
    verb_fraction: float
    spatial_fraction: float


def tokenize(text: str) -> list[str]:
    """Lowercase tokens split on any non-alphanumeric run."""
    return _TOKEN_PATTERN.findall(text.lower())


def load_word_list(path) -> frozenset[str]:
    """One word per line; blank lines and # comments ignored."""
    words = set()
    with open(path, "r", encoding="utf-8") as handle:
        for line in handle:
            word = line.split("#", 1)[0].strip().lower()
            if word:
                words.add(word)
    return frozenset(words)


def bundled_lexicons() -> Lexicons:
    data = resources.files("trackref") / "data"
    spatial = frozenset((data / "spatial_words.txt").read_text("utf-8").split())
    verbs = frozenset((data / "verb_words.txt").read_text("utf-8").split())
    return Lexicons(spatial_words=spatial, verb_words=verbs)


def bundled_sample_corpus_path():
    return resources.files("trackref") / "data" / "sample_corpus.jsonl"


def _length_bin(token_count: int) -> str:
    if token_count < 4:
        return "short"
    if token_count <= 6:
        return "medium"
    return "long"


def _num_objects_bin(num_objects: int) -> str:
    if num_objects <= 1:
        return "1"
    if num_objects <= 3:
        return "2-3"
    return ">3"


def tag_query(
    record: QueryRecord, lexicons: Lexicons, num_objects_in_video: int
) -> QueryAttributes:
    tokens = tokenize(record.text)
    if not tokens:
        raise ValueError(f"query text has no tokens: {record.text!r}")
    return QueryAttributes(
        is_coco=record.is_coco,
        has_spatial=any(t in lexicons.spatial_words for t in tokens),
        has_verb=any(t in lexicons.verb_words for t in tokens),
        length_bin=_length_bin(len(tokens)),
        num_objects_bin=_num_objects_bin(num_objects_in_video),
        annotation_type=record.annotation_type,
    )


def corpus_stats(records, lexicons: Lexicons) -> dict[str, GroupStats]:
    """Mean expression length and verb/spatial fractions per annotation type."""
    records = list(records)
    if not records:
        raise ValueError("cannot summarize an empty corpus")
    groups: dict[str, list[QueryRecord]] = {}
    for record in records:
        groups.setdefault(record.annotation_type, []).append(record)
    out: dict[str, GroupStats] = {}
    for annotation_type in ANNOTATION_TYPES:
        members = groups.get(annotation_type)
        if not members:
            continue
        lengths = []
        verbs = 0
        spatial = 0
        for record in members:
            tokens = tokenize(record.text)
            lengths.append(len(tokens))
            verbs += any(t in lexicons.verb_words for t in tokens)
            spatial += any(t in lexicons.spatial_words for t in tokens)
        out[annotation_type] = GroupStats(
            count=len(members),
            mean_length=fmean(lengths),
            verb_fraction=verbs / len(members),
            spatial_fraction=spatial / len(members),
        )
    return out


def num_objects_by_video(records) -> dict[str, int]:
    objects: dict[str, set[str]] = {}
    for record in records:
        objects.setdefault(record.video_id, set()).add(record.object_id)
    return {video: len(ids) for video, ids in objects.items()}


# ---------------------------------------------------------------------------
# Corpus and attribute files (JSON Lines)
# ---------------------------------------------------------------------------

_REQUIRED_CORPUS_FIELDS = {"video", "object", "annotator", "type", "text"}


def read_corpus(path) -> list[QueryRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{number}: invalid JSON ({exc.msg})") from exc
            missing = sorted(_REQUIRED_CORPUS_FIELDS - obj.keys())
            if missing:
                raise ValueError(f"{path}:{number}: missing fields {', '.join(missing)}")
            try:
                records.append(QueryRecord(
                    video_id=str(obj["video"]),
                    object_id=str(obj["object"]),
                    annotator_id=str(obj["annotator"]),
                    annotation_type=str(obj["type"]),
                    text=str(obj["text"]),
                    is_coco=bool(obj.get("is_coco", False)),
                    invalid_over_time=(
                        None if obj.get("invalid_over_time") is None
                        else bool(obj["invalid_over_time"])
                    ),
                ))
            except ValueError as exc:
                raise ValueError(f"{path}:{number}: {exc}") from exc
    if not records:
        raise ValueError(f"no corpus records in {path}")
    return records


def write_attributes(path, tagged: list[tuple[QueryRecord, QueryAttributes]]) -> None:
    ordered = sorted(
        tagged,
        key=lambda item: (item[0].video_id, item[0].object_id, item[0].annotator_id),
    )
    with open(path, "w", encoding="utf-8") as handle:
        for record, attrs in ordered:
            handle.write(json.dumps({
                "video": record.video_id,
                "object": record.object_id,
                "annotator": record.annotator_id,
                "is_coco": attrs.is_coco,
                "has_spatial": attrs.has_spatial,
                "has_verb": attrs.has_verb,
                "length_bin": attrs.length_bin,
                "num_objects_bin": attrs.num_objects_bin,
                "annotation_type": attrs.annotation_type,
            }) + "\n")


def read_attributes(path) -> dict[tuple[str, str], QueryAttributes]:
    """Attributes keyed by (video, object); the first record per key wins."""
    out: dict[tuple[str, str], QueryAttributes] = {}
    required = {
        "video", "object", "is_coco", "has_spatial", "has_verb",
        "length_bin", "num_objects_bin", "annotation_type",
    }
    with open(path, "r", encoding="utf-8") as handle:
        for number, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{number}: invalid JSON ({exc.msg})") from exc
            missing = sorted(required - obj.keys())
            if missing:
                raise ValueError(f"{path}:{number}: missing fields {', '.join(missing)}")
            key = (str(obj["video"]), str(obj["object"]))
            if key in out:
                continue
            try:
                out[key] = QueryAttributes(
                    is_coco=bool(obj["is_coco"]),
                    has_spatial=bool(obj["has_spatial"]),
                    has_verb=bool(obj["has_verb"]),
                    length_bin=str(obj["length_bin"]),
                    num_objects_bin=str(obj["num_objects_bin"]),
                    annotation_type=str(obj["annotation_type"]),
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{number}: {exc}") from exc
    return out
