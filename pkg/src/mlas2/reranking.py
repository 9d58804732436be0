"""Candidate scoring and ranking.

Scorers assign each (question, candidate) pair a correctness probability in
[0, 1]; ``rank`` orders a question's candidates by that score with
deterministic id tie-breaking. Backends: a tf-idf lexical baseline, a static
score table, an HTTP client for remote models, and a linear classification
head applied to externally produced embeddings.
"""

from __future__ import annotations

import json
import math
import re
from abc import ABC, abstractmethod
from collections import Counter
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import requests

from mlas2.dataset import AnswerCandidate, Dataset, Question


class ScoringError(RuntimeError):
    """A scorer backend failed or violated the scoring protocol."""


# ---------------------------------------------------------------------------
# tokenization and tf-idf
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric characters, dropping empties."""
    return _TOKEN_RE.findall(text.lower())


class IdfTable:
    """Smoothed inverse document frequencies over a candidate corpus:
    idf(w) = ln((N+1)/(df(w)+1)) + 1."""

    def __init__(self, df: dict[str, int], num_docs: int) -> None:
        self.df = dict(df)
        self.num_docs = num_docs

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "IdfTable":
        df: Counter[str] = Counter()
        n = 0
        for text in texts:
            n += 1
            df.update(set(tokenize(text)))
        return cls(dict(df), n)

    def idf(self, term: str) -> float:
        return math.log((self.num_docs + 1) / (self.df.get(term, 0) + 1)) + 1.0

    def vector(self, text: str) -> dict[str, float]:
        counts = Counter(tokenize(text))
        return {term: tf * self.idf(term) for term, tf in counts.items()}


def cosine(u: dict[str, float], v: dict[str, float]) -> float:
    """Cosine similarity of sparse vectors; 0.0 when either is zero."""
    nu = math.sqrt(sum(x * x for x in u.values()))
    nv = math.sqrt(sum(x * x for x in v.values()))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    if len(v) < len(u):
        u, v = v, u
    dot = sum(x * v[t] for t, x in u.items() if t in v)
    return dot / (nu * nv)


def lexical_score(q_text: str, t_text: str, idf_table: IdfTable) -> float:
    """Tf-idf cosine between question and candidate; always in [0, 1]."""
    return cosine(idf_table.vector(q_text), idf_table.vector(t_text))


# ---------------------------------------------------------------------------
# scorer backends
# ---------------------------------------------------------------------------

class Scorer(ABC):
    """Assigns correctness probabilities to a question's candidates."""

    @abstractmethod
    def score_candidates(
        self, question: Question, candidates: Sequence[AnswerCandidate]
    ) -> list[float]:
        ...


class TextPairScorer(Scorer):
    """Scorer that only looks at the (question text, candidate text) pair."""

    def score_candidates(
        self, question: Question, candidates: Sequence[AnswerCandidate]
    ) -> list[float]:
        return self.score_pairs([(question.text, c.text) for c in candidates])

    @abstractmethod
    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        ...


class LexicalScorer(TextPairScorer):
    def __init__(self, idf_table: IdfTable) -> None:
        self.idf_table = idf_table

    @classmethod
    def from_dataset(cls, dataset: Dataset) -> "LexicalScorer":
        """Build the idf table from all candidate texts of a dataset."""
        return cls(
            IdfTable.from_texts(c.text for g in dataset.groups for c in g.candidates)
        )

    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        return [lexical_score(q, t, self.idf_table) for q, t in pairs]


class StaticScorer(Scorer):
    """Scores looked up from a (question id, candidate id) table."""

    def __init__(self, table: dict[tuple[str, str], float]) -> None:
        for key, score in table.items():
            if not 0.0 <= score <= 1.0:
                raise ScoringError(f"score for {key!r} outside [0, 1]: {score}")
        self.table = dict(table)

    @classmethod
    def from_jsonl(cls, path: str | Path) -> "StaticScorer":
        """Load a JSONL file of ``{"qid":str,"cid":str,"score":float}`` records."""
        table: dict[tuple[str, str], float] = {}
        with Path(path).open("r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    rec = json.loads(line)
                    table[(str(rec["qid"]), str(rec["cid"]))] = float(rec["score"])
                except (ValueError, KeyError, TypeError) as exc:
                    raise ScoringError(f"{path}:{lineno}: bad score record: {exc}") from exc
        return cls(table)

    def score_candidates(
        self, question: Question, candidates: Sequence[AnswerCandidate]
    ) -> list[float]:
        out = []
        for c in candidates:
            key = (question.id, c.id)
            if key not in self.table:
                raise ScoringError(f"no static score for question/candidate {key!r}")
            out.append(self.table[key])
        return out


class RemoteScorer(TextPairScorer):
    """HTTP client for the scoring protocol.

    Request: ``{"max_seq_len":int,"pairs":[{"q":str,"t":str},...]}``;
    response: ``{"scores":[float,...]}`` with status 200. Pairs are sent in
    chunks of ``batch_size``; responses are validated (count, range) and
    reassembled in input order — a short response is an error, never a
    silent truncation.
    """

    def __init__(
        self,
        endpoint: str,
        *,
        max_seq_len: int = 128,
        batch_size: int = 128,
        timeout: float = 30.0,
        session: requests.Session | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.max_seq_len = max_seq_len
        self.batch_size = batch_size
        self.timeout = timeout
        self._session = session or requests.Session()

    def score_pairs(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        out: list[float] = []
        for start in range(0, len(pairs), self.batch_size):
            out.extend(self._send(pairs[start : start + self.batch_size]))
        return out

    def _send(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        payload = {
            "max_seq_len": self.max_seq_len,
            "pairs": [{"q": q, "t": t} for q, t in pairs],
        }
        try:
            resp = self._session.post(self.endpoint, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise ScoringError(f"scorer unreachable: {exc}") from exc
        if resp.status_code != 200:
            raise ScoringError(f"scorer returned {resp.status_code}: {resp.text[:200]}")
        try:
            scores = resp.json().get("scores")
        except ValueError as exc:
            raise ScoringError(f"scorer returned invalid JSON: {exc}") from exc
        if not isinstance(scores, list) or len(scores) != len(pairs):
            got = len(scores) if isinstance(scores, list) else "no"
            raise ScoringError(f"scorer returned {got} scores for {len(pairs)} pairs")
        out = []
        for s in scores:
            value = float(s)
            if not 0.0 <= value <= 1.0:
                raise ScoringError(f"scorer returned score outside [0, 1]: {value}")
            out.append(value)
        return out


# ---------------------------------------------------------------------------
# linear classification head
# ---------------------------------------------------------------------------

class LinearHead:
    """Linear layer over a d-dimensional embedding; the positive class sits at
    index 1 of the softmax output."""

    def __init__(self, weights, bias) -> None:
        w = np.asarray(weights, dtype=float)
        b = np.asarray(bias, dtype=float)
        if w.ndim != 2 or b.ndim != 1 or w.shape[1] != b.shape[0]:
            raise ValueError(
                f"weights must be d x k and bias length k, got {w.shape} and {b.shape}"
            )
        if b.shape[0] < 2:
            raise ValueError(f"need at least 2 classes, got {b.shape[0]}")
        if not (np.isfinite(w).all() and np.isfinite(b).all()):
            raise ValueError("head parameters must be finite")
        self.weights = w
        self.bias = b

    @property
    def input_dim(self) -> int:
        return self.weights.shape[0]

    @property
    def num_classes(self) -> int:
        return self.weights.shape[1]

    def apply(self, x) -> float:
        return linear_head_apply(x, self)


def linear_head_apply(x, head: LinearHead) -> float:
    """Probability of the positive class for one embedding: softmax(Wᵀx + b)[1]."""
    v = np.asarray(x, dtype=float)
    if v.ndim != 1 or v.shape[0] != head.input_dim:
        raise ValueError(
            f"dimension mismatch: embedding has shape {v.shape}, head expects ({head.input_dim},)"
        )
    if not np.isfinite(v).all():
        raise ValueError("embedding must be finite")
    z = head.weights.T @ v + head.bias
    z = z - z.max()
    p = np.exp(z)
    p = p / p.sum()
    if not np.isfinite(p).all():
        raise ValueError("softmax produced non-finite probabilities")
    return float(p[1])


# ---------------------------------------------------------------------------
# ranking
# ---------------------------------------------------------------------------

def rank(
    question: Question, candidates: Sequence[AnswerCandidate], scorer: Scorer
) -> list[tuple[str, float]]:
    """Order candidates by score, descending; ties break by candidate id
    ascending, so the result is deterministic and permutation-invariant."""
    if not candidates:
        raise ValueError(f"no candidates to rank for question {question.id!r}")
    scores = scorer.score_candidates(question, list(candidates))
    if len(scores) != len(candidates):
        raise ScoringError(
            f"scorer returned {len(scores)} scores for {len(candidates)} candidates"
        )
    ranked = sorted(
        ((c.id, float(s)) for c, s in zip(candidates, scores)),
        key=lambda item: (-item[1], item[0]),
    )
    return ranked
