"""Data model and JSONL serialization for answer-sentence-selection datasets.

A dataset groups labeled answer candidates under their questions. Every text
carries a language plus the ordered chain of languages it passed through, so
translated, mixed, and concatenated corpora stay traceable to their original
records via ``origin_id``.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

SPLITS = ("train", "dev", "test")

_LANG_RE = re.compile(r"[a-z]{2,8}")


class DatasetFormatError(ValueError):
    """A dataset file or record violates the JSONL schema."""


def validate_language(code: str) -> str:
    """Check a language code (2-8 lowercase ASCII letters) and return it."""
    if not isinstance(code, str) or not _LANG_RE.fullmatch(code):
        raise ValueError(f"invalid language code {code!r} (want 2-8 lowercase ASCII letters)")
    return code


def _check_text_record(language: str, provenance: tuple[str, ...]) -> None:
    validate_language(language)
    if not provenance:
        raise ValueError("provenance chain must be nonempty")
    for hop in provenance:
        validate_language(hop)
    if provenance[-1] != language:
        raise ValueError(
            f"language {language!r} must equal the last provenance hop {provenance[-1]!r}"
        )


@dataclass(frozen=True)
class Question:
    id: str
    origin_id: str
    text: str
    language: str
    provenance: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "provenance", tuple(self.provenance))
        _check_text_record(self.language, self.provenance)


@dataclass(frozen=True)
class AnswerCandidate:
    """A candidate sentence for one question; ``label`` is None until annotated."""

    id: str
    question_id: str
    origin_id: str
    text: str
    label: int | None
    language: str
    provenance: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "provenance", tuple(self.provenance))
        if self.label is not None and (isinstance(self.label, bool) or self.label not in (0, 1)):
            raise ValueError(f"label must be 0 or 1, got {self.label!r}")
        _check_text_record(self.language, self.provenance)


@dataclass(frozen=True)
class QuestionGroup:
    question: Question
    candidates: tuple[AnswerCandidate, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "candidates", tuple(self.candidates))
        seen: set[str] = set()
        for cand in self.candidates:
            if cand.question_id != self.question.id:
                raise ValueError(
                    f"candidate {cand.id!r} references question {cand.question_id!r}, "
                    f"not {self.question.id!r}"
                )
            if cand.id in seen:
                raise ValueError(f"duplicate candidate id {cand.id!r} in group {self.question.id!r}")
            seen.add(cand.id)


@dataclass(frozen=True)
class Dataset:
    name: str
    split: str
    groups: tuple[QuestionGroup, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "groups", tuple(self.groups))
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")

    def num_candidates(self) -> int:
        return sum(len(g.candidates) for g in self.groups)


@dataclass(frozen=True)
class DatasetStats:
    num_questions: int
    num_correct: int
    num_incorrect: int


def stats(d: Dataset) -> DatasetStats:
    """Count questions and correct/incorrect candidates; rejects unlabeled data."""
    correct = incorrect = 0
    for group in d.groups:
        for cand in group.candidates:
            if cand.label is None:
                raise ValueError(f"candidate {cand.id!r} is unlabeled")
            if cand.label == 1:
                correct += 1
            else:
                incorrect += 1
    return DatasetStats(len(d.groups), correct, incorrect)


def filter_answerable(d: Dataset) -> Dataset:
    """Keep only groups with at least one candidate labeled correct."""
    kept = tuple(g for g in d.groups if any(c.label == 1 for c in g.candidates))
    return Dataset(d.name, d.split, kept)


def validate_dataset(d: Dataset) -> list[str]:
    """Return a list of invariant violations (empty when the dataset is valid).

    Record- and group-level invariants are enforced at construction time, so
    this checks the dataset-wide ones: unique question ids, unique candidate
    ids, and no pending (None) labels.
    """
    violations: list[str] = []
    seen_q: set[str] = set()
    seen_c: set[str] = set()
    for group in d.groups:
        qid = group.question.id
        if qid in seen_q:
            violations.append(f"duplicate question id {qid!r}")
        seen_q.add(qid)
        for cand in group.candidates:
            if cand.id in seen_c:
                violations.append(f"duplicate candidate id {cand.id!r}")
            seen_c.add(cand.id)
            if cand.label is None:
                violations.append(f"candidate {cand.id!r} has no label")
    return violations


# ---------------------------------------------------------------------------
# JSONL schema
#
# question record:  {"kind":"q","id":...,"origin_id":...,"text":...,"lang":...,"prov":[...]}
# candidate record: {"kind":"c","id":...,"qid":...,"origin_id":...,"text":...,
#                    "label":0|1,"lang":...,"prov":[...]}
# Question records may precede all candidates or be interleaved with them.
# ---------------------------------------------------------------------------

_Q_FIELDS = ("id", "origin_id", "text", "lang", "prov")
_C_FIELDS = ("id", "qid", "origin_id", "text", "label", "lang", "prov")


def _require(rec: dict, fields: tuple[str, ...], where: str) -> None:
    for key in fields:
        if key not in rec:
            raise DatasetFormatError(f"{where}: missing field {key!r}")


def _parse_question(rec: dict, where: str) -> Question:
    _require(rec, _Q_FIELDS, where)
    try:
        return Question(
            id=str(rec["id"]),
            origin_id=str(rec["origin_id"]),
            text=str(rec["text"]),
            language=rec["lang"],
            provenance=tuple(rec["prov"]),
        )
    except (ValueError, TypeError) as exc:
        raise DatasetFormatError(f"{where}: {exc}") from exc


def _parse_candidate(rec: dict, where: str) -> AnswerCandidate:
    _require(rec, _C_FIELDS, where)
    label = rec["label"]
    if isinstance(label, bool) or label not in (0, 1):
        raise DatasetFormatError(f"{where}: label must be 0 or 1, got {label!r}")
    try:
        return AnswerCandidate(
            id=str(rec["id"]),
            question_id=str(rec["qid"]),
            origin_id=str(rec["origin_id"]),
            text=str(rec["text"]),
            label=label,
            language=rec["lang"],
            provenance=tuple(rec["prov"]),
        )
    except (ValueError, TypeError) as exc:
        raise DatasetFormatError(f"{where}: {exc}") from exc


def load_dataset(path: str | Path, split: str, name: str | None = None) -> Dataset:
    """Load a JSONL dataset file, preserving record order.

    Raises DatasetFormatError (with the offending line number) on malformed
    lines, duplicate ids, or candidates referencing unknown questions.
    """
    p = Path(path)
    questions: dict[str, Question] = {}
    candidates: dict[str, list[AnswerCandidate]] = {}
    cand_ids: set[str] = set()
    with p.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{p}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"{where}: invalid JSON: {exc.msg}") from exc
            if not isinstance(rec, dict):
                raise DatasetFormatError(f"{where}: record must be a JSON object")
            kind = rec.get("kind")
            if kind == "q":
                q = _parse_question(rec, where)
                if q.id in questions:
                    raise DatasetFormatError(f"{where}: duplicate question id {q.id!r}")
                questions[q.id] = q
            elif kind == "c":
                c = _parse_candidate(rec, where)
                if c.id in cand_ids:
                    raise DatasetFormatError(f"{where}: duplicate candidate id {c.id!r}")
                cand_ids.add(c.id)
                candidates.setdefault(c.question_id, []).append(c)
            else:
                raise DatasetFormatError(f"{where}: unknown record kind {kind!r}")
    for qid in candidates:
        if qid not in questions:
            raise DatasetFormatError(f"{p}: candidate references unknown question id {qid!r}")
    groups = tuple(
        QuestionGroup(q, tuple(candidates.get(qid, []))) for qid, q in questions.items()
    )
    return Dataset(name if name is not None else p.stem, split, groups)


def dataset_records(d: Dataset) -> Iterator[dict]:
    """Yield the wire-format records of a dataset, question first per group."""
    for group in d.groups:
        q = group.question
        yield {
            "kind": "q",
            "id": q.id,
            "origin_id": q.origin_id,
            "text": q.text,
            "lang": q.language,
            "prov": list(q.provenance),
        }
        for c in group.candidates:
            if c.label is None:
                raise ValueError(f"candidate {c.id!r} is unlabeled; cannot serialize")
            yield {
                "kind": "c",
                "id": c.id,
                "qid": c.question_id,
                "origin_id": c.origin_id,
                "text": c.text,
                "label": c.label,
                "lang": c.language,
                "prov": list(c.provenance),
            }


def save_dataset(d: Dataset, path: str | Path) -> None:
    """Write a dataset as JSONL; ``load_dataset`` parses it back to an equal value."""
    p = Path(path)
    with p.open("w", encoding="utf-8") as fh:
        for rec in dataset_records(d):
            fh.write(json.dumps(rec, ensure_ascii=False))
            fh.write("\n")


def fingerprint_dataset(d: Dataset) -> str:
    """SHA-256 of the canonical JSONL serialization (detects any content drift)."""
    h = hashlib.sha256()
    for rec in dataset_records(d):
        h.update(json.dumps(rec, ensure_ascii=False, sort_keys=True).encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def load_questions(path: str | Path) -> list[Question]:
    """Load a JSONL file of question records only (candidate records rejected)."""
    p = Path(path)
    out: list[Question] = []
    seen: set[str] = set()
    with p.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{p}:{lineno}"
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(f"{where}: invalid JSON: {exc.msg}") from exc
            if not isinstance(rec, dict) or rec.get("kind") != "q":
                raise DatasetFormatError(f"{where}: expected a question record")
            q = _parse_question(rec, where)
            if q.id in seen:
                raise DatasetFormatError(f"{where}: duplicate question id {q.id!r}")
            seen.add(q.id)
            out.append(q)
    return out
