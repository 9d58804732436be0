"""Candidate construction: retrieve documents from a local tf-idf index,
split them into sentences, select the top candidates with a pluggable scorer,
and round-trip annotation task files into labeled datasets.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from mlas2.dataset import AnswerCandidate, Dataset, Question, QuestionGroup
from mlas2.reranking import Scorer, tokenize


@dataclass(frozen=True)
class Document:
    id: str
    text: str


class DocumentCorpus:
    """Immutable inverted index over a document collection.

    Postings map each term to (doc id, term frequency) pairs sorted by doc id;
    idf uses the same smoothed formula as the lexical scorer, and per-document
    tf-idf norms are precomputed for cosine retrieval.
    """

    def __init__(self, documents: Sequence[Document]) -> None:
        docs = list(documents)
        seen: set[str] = set()
        for doc in docs:
            if doc.id in seen:
                raise ValueError(f"duplicate document id {doc.id!r}")
            seen.add(doc.id)
        self.documents: tuple[Document, ...] = tuple(docs)
        self.by_id = {doc.id: doc for doc in docs}

        index: dict[str, list[tuple[str, int]]] = {}
        doc_terms: dict[str, Counter[str]] = {}
        for doc in docs:
            counts = Counter(tokenize(doc.text))
            doc_terms[doc.id] = counts
            for term, tf in counts.items():
                index.setdefault(term, []).append((doc.id, tf))
        for postings in index.values():
            postings.sort()
        self._index = index

        self._norms: dict[str, float] = {}
        for doc in docs:
            self._norms[doc.id] = math.sqrt(
                sum((tf * self.idf(term)) ** 2 for term, tf in doc_terms[doc.id].items())
            )

    @property
    def num_docs(self) -> int:
        return len(self.documents)

    def postings(self, term: str) -> list[tuple[str, int]]:
        return list(self._index.get(term, ()))

    def idf(self, term: str) -> float:
        df = len(self._index.get(term, ()))
        return math.log((self.num_docs + 1) / (df + 1)) + 1.0


def build_index(docs: Iterable[Document | dict]) -> DocumentCorpus:
    """Build a corpus from Document objects or ``{"id","text"}`` dicts."""
    converted = [
        d if isinstance(d, Document) else Document(str(d["id"]), str(d["text"]))
        for d in docs
    ]
    return DocumentCorpus(converted)


def load_corpus(path: str | Path) -> DocumentCorpus:
    """Load a JSONL corpus of ``{"id":str,"text":str}`` records."""
    docs = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                docs.append(Document(str(rec["id"]), str(rec["text"])))
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad corpus record: {exc}") from exc
    return DocumentCorpus(docs)


def retrieve_documents(query: str, corpus: DocumentCorpus, k: int = 500) -> list[str]:
    """Top-k document ids by tf-idf cosine against the query; ties break by
    doc id. Documents sharing no term score 0 but still count toward k."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    q_counts = Counter(tokenize(query))
    if not q_counts:
        raise ValueError("query has no tokens after tokenization")
    q_weights = {term: tf * corpus.idf(term) for term, tf in q_counts.items()}
    q_norm = math.sqrt(sum(w * w for w in q_weights.values()))

    dots: dict[str, float] = {}
    for term, qw in q_weights.items():
        for doc_id, tf in corpus.postings(term):
            dots[doc_id] = dots.get(doc_id, 0.0) + qw * tf * corpus.idf(term)

    scored = []
    for doc in corpus.documents:
        norm = corpus._norms[doc.id]
        dot = dots.get(doc.id, 0.0)
        score = dot / (q_norm * norm) if norm > 0.0 and dot != 0.0 else 0.0
        scored.append((doc.id, score))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return [doc_id for doc_id, _ in scored[:k]]


# ---------------------------------------------------------------------------
# sentence splitting
# ---------------------------------------------------------------------------

_BOUNDARY_RE = re.compile(r"[.!?]+(?=\s|$)")


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """Character spans of sentences: segments ending in '.', '!' or '?'
    followed by whitespace or end of text. Abbreviations are not handled;
    a trailing segment without terminal punctuation is kept as a sentence."""
    spans = []
    start = 0
    boundaries = [m.end() for m in _BOUNDARY_RE.finditer(text)]
    if not boundaries or boundaries[-1] != len(text):
        boundaries.append(len(text))
    for end in boundaries:
        s, e = start, end
        while s < e and text[s].isspace():
            s += 1
        while e > s and text[e - 1].isspace():
            e -= 1
        if s < e:
            spans.append((s, e))
        start = end
    return spans


def split_sentences(text: str) -> list[str]:
    return [text[s:e] for s, e in sentence_spans(text)]


# ---------------------------------------------------------------------------
# candidate selection and annotation round trip
# ---------------------------------------------------------------------------

def select_candidates(
    question: Question,
    corpus: DocumentCorpus,
    scorer: Scorer,
    k_docs: int = 500,
    k_sents: int = 100,
) -> list[AnswerCandidate]:
    """Pool the sentences of the top-k_docs retrieved documents, score them
    against the question, and keep the best k_sents (ties by candidate id).

    Candidate ids are ``{doc_id}:{sentence_index}``; labels stay None until
    annotation.
    """
    doc_ids = retrieve_documents(question.text, corpus, k_docs)
    pool = []
    for doc_id in doc_ids:
        for i, sentence in enumerate(split_sentences(corpus.by_id[doc_id].text)):
            cid = f"{doc_id}:{i}"
            pool.append(
                AnswerCandidate(
                    id=cid,
                    question_id=question.id,
                    origin_id=cid,
                    text=sentence,
                    label=None,
                    language=question.language,
                    provenance=(question.language,),
                )
            )
    if not pool:
        raise ValueError(f"no candidate sentences for question {question.id!r}")
    scores = scorer.score_candidates(question, pool)
    ranked = sorted(zip(pool, scores), key=lambda item: (-item[1], item[0].id))
    return [cand for cand, _ in ranked[:k_sents]]


def export_annotation_tasks(
    tasks: Sequence[tuple[Question, Sequence[AnswerCandidate]]], path: str | Path
) -> None:
    """Write annotation tasks as JSONL
    ``{"qid":str,"cid":str,"q":str,"t":str,"label":null}``; candidates must
    still be unlabeled."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for question, cands in tasks:
            for cand in cands:
                if cand.label is not None:
                    raise ValueError(f"candidate {cand.id!r} is already labeled")
                rec = {
                    "qid": question.id,
                    "cid": cand.id,
                    "q": question.text,
                    "t": cand.text,
                    "label": None,
                }
                fh.write(json.dumps(rec, ensure_ascii=False))
                fh.write("\n")


def load_gold_labels(path: str | Path) -> dict[tuple[str, str], int]:
    """Load gold annotations: JSONL ``{"qid":str,"cid":str,"label":0|1}``."""
    table: dict[tuple[str, str], int] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
                key = (str(rec["qid"]), str(rec["cid"]))
                label = rec["label"]
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{lineno}: bad gold record: {exc}") from exc
            if isinstance(label, bool) or label not in (0, 1):
                raise ValueError(f"{path}:{lineno}: label must be 0 or 1, got {label!r}")
            if key in table:
                raise ValueError(f"{path}:{lineno}: duplicate gold label for {key!r}")
            table[key] = label
    return table


def import_annotations(
    tasks_path: str | Path,
    gold_path: str | Path | None = None,
    *,
    name: str,
    split: str = "test",
    language: str = "en",
) -> Dataset:
    """Turn an annotation task file back into a labeled dataset.

    Labels come from the gold file when given, otherwise from the (edited)
    task file itself; every task must end up with a 0/1 label. Candidate ids
    are qualified as ``{qid}:{cid}`` so they stay unique dataset-wide even
    when two questions selected the same sentence.
    """
    gold = load_gold_labels(gold_path) if gold_path is not None else None
    questions: dict[str, Question] = {}
    grouped: dict[str, list[AnswerCandidate]] = {}
    seen: set[tuple[str, str]] = set()
    with Path(tasks_path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            where = f"{tasks_path}:{lineno}"
            try:
                rec = json.loads(line)
                qid, cid = str(rec["qid"]), str(rec["cid"])
                q_text, t_text = str(rec["q"]), str(rec["t"])
                label = rec["label"]
            except (ValueError, KeyError, TypeError) as exc:
                raise ValueError(f"{where}: bad task record: {exc}") from exc
            if (qid, cid) in seen:
                raise ValueError(f"{where}: duplicate task for {(qid, cid)!r}")
            seen.add((qid, cid))
            if gold is not None:
                if (qid, cid) not in gold:
                    raise ValueError(f"{where}: no gold label for {(qid, cid)!r}")
                label = gold[(qid, cid)]
            if isinstance(label, bool) or label not in (0, 1):
                raise ValueError(f"{where}: task for {(qid, cid)!r} is unlabeled")
            if qid not in questions:
                questions[qid] = Question(qid, qid, q_text, language, (language,))
            full_cid = f"{qid}:{cid}"
            grouped.setdefault(qid, []).append(
                AnswerCandidate(
                    id=full_cid,
                    question_id=qid,
                    origin_id=full_cid,
                    text=t_text,
                    label=label,
                    language=language,
                    provenance=(language,),
                )
            )
    groups = tuple(QuestionGroup(q, tuple(grouped[qid])) for qid, q in questions.items())
    return Dataset(name, split, groups)
