"""Translator backends: a deterministic invertible mock, an HTTP client with
batching and retries, and a persistent content-addressed translation cache.

Wire protocol (HTTP, JSON): POST ``{"src":str,"tgt":str,"texts":[str,...]}``,
response ``{"texts":[str,...]}`` with status 200; anything else is an error.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import requests

from mlas2.dataset import validate_language


class TranslationError(RuntimeError):
    """A translation backend failed or violated the wire protocol."""


@dataclass(frozen=True)
class TranslationRequest:
    texts: tuple[str, ...]
    src: str
    tgt: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "texts", tuple(self.texts))
        validate_language(self.src)
        validate_language(self.tgt)
        if self.src == self.tgt:
            raise ValueError(f"source and target language are both {self.src!r}")


class Translator(ABC):
    """Translates batches of texts; output order matches input order."""

    @abstractmethod
    def translate_batch(self, request: TranslationRequest) -> list[str]:
        ...

    def translate_texts(self, texts: Sequence[str], src: str, tgt: str) -> list[str]:
        return self.translate_batch(TranslationRequest(tuple(texts), src, tgt))


# ---------------------------------------------------------------------------
# deterministic mock
# ---------------------------------------------------------------------------

def mock_translate(text: str, src: str, tgt: str) -> str:
    """Deterministic, invertible stand-in for machine translation.

    Per whitespace token: a ``src:`` prefix is stripped, any other token gains
    a ``tgt:`` prefix. Whitespace collapses to single spaces, so translating
    there and back restores the (normalized) original text.
    """
    src_prefix = src + ":"
    out = []
    for token in text.split():
        if token.startswith(src_prefix):
            out.append(token[len(src_prefix):])
        else:
            out.append(tgt + ":" + token)
    return " ".join(out)


class MockTranslator(Translator):
    def translate_batch(self, request: TranslationRequest) -> list[str]:
        return [mock_translate(t, request.src, request.tgt) for t in request.texts]


# ---------------------------------------------------------------------------
# HTTP client
# ---------------------------------------------------------------------------

def _batches(
    texts: Sequence[str], max_texts: int, max_chars: int
) -> Iterator[list[str]]:
    """Greedy packing: at most max_texts texts or max_chars characters per
    request, whichever limit hits first; an oversized single text travels alone."""
    batch: list[str] = []
    chars = 0
    for text in texts:
        if batch and (len(batch) >= max_texts or chars + len(text) > max_chars):
            yield batch
            batch, chars = [], 0
        batch.append(text)
        chars += len(text)
    if batch:
        yield batch


class HttpTranslator(Translator):
    """Client for the JSON translation protocol with conservative retries.

    Transport failures and 5xx responses are retried with exponential backoff
    (``attempts`` total tries per batch); 4xx responses and malformed payloads
    fail immediately.
    """

    def __init__(
        self,
        endpoint: str,
        *,
        max_texts_per_request: int = 50,
        max_chars_per_request: int = 4000,
        attempts: int = 3,
        backoff: float = 0.5,
        timeout: float = 30.0,
        session: requests.Session | None = None,
    ) -> None:
        self.endpoint = endpoint
        self.max_texts_per_request = max_texts_per_request
        self.max_chars_per_request = max_chars_per_request
        self.attempts = attempts
        self.backoff = backoff
        self.timeout = timeout
        self._session = session or requests.Session()

    def translate_batch(self, request: TranslationRequest) -> list[str]:
        out: list[str] = []
        for batch in _batches(
            request.texts, self.max_texts_per_request, self.max_chars_per_request
        ):
            out.extend(self._send(batch, request.src, request.tgt))
        return out

    def _send(self, batch: list[str], src: str, tgt: str) -> list[str]:
        payload = {"src": src, "tgt": tgt, "texts": batch}
        last_error: TranslationError | None = None
        for attempt in range(self.attempts):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                resp = self._session.post(self.endpoint, json=payload, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = TranslationError(f"translator unreachable: {exc}")
                continue
            if resp.status_code >= 500:
                last_error = TranslationError(
                    f"translator returned {resp.status_code}: {resp.text[:200]}"
                )
                continue
            if resp.status_code != 200:
                raise TranslationError(
                    f"translator returned {resp.status_code}: {resp.text[:200]}"
                )
            try:
                texts = resp.json().get("texts")
            except ValueError as exc:
                raise TranslationError(f"translator returned invalid JSON: {exc}") from exc
            if not isinstance(texts, list) or len(texts) != len(batch):
                got = len(texts) if isinstance(texts, list) else "no"
                raise TranslationError(
                    f"translator returned {got} texts for {len(batch)} inputs"
                )
            return [str(t) for t in texts]
        assert last_error is not None
        raise last_error


# ---------------------------------------------------------------------------
# persistent cache
# ---------------------------------------------------------------------------

class TranslationCache:
    """Append-only JSONL cache keyed by (src, tgt, sha256 of the source text).

    Lines: ``{"src":str,"tgt":str,"hash":str,"text":str}`` where ``text`` is
    the translation. Corrupt lines are skipped on load (treated as misses) and
    rewritten on the next store; duplicate keys resolve last-write-wins.
    """

    def __init__(self, path: str | Path) -> None:
        self._path = Path(path)
        self._lock = threading.Lock()
        self._entries: dict[tuple[str, str, str], str] = {}
        if self._path.exists():
            with self._path.open("r", encoding="utf-8") as fh:
                for line in fh:
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        rec = json.loads(line)
                        key = (rec["src"], rec["tgt"], rec["hash"])
                        self._entries[key] = str(rec["text"])
                    except (ValueError, KeyError, TypeError):
                        continue

    @staticmethod
    def text_key(text: str) -> str:
        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def __len__(self) -> int:
        return len(self._entries)

    def get(self, src: str, tgt: str, text: str) -> str | None:
        with self._lock:
            return self._entries.get((src, tgt, self.text_key(text)))

    def store_many(self, src: str, tgt: str, pairs: Iterable[tuple[str, str]]) -> None:
        """Persist (source text, translation) pairs in one atomic append."""
        lines = []
        with self._lock:
            for text, translated in pairs:
                h = self.text_key(text)
                self._entries[(src, tgt, h)] = translated
                lines.append(
                    json.dumps(
                        {"src": src, "tgt": tgt, "hash": h, "text": translated},
                        ensure_ascii=False,
                    )
                )
            if lines:
                with self._path.open("a", encoding="utf-8") as fh:
                    fh.write("\n".join(lines) + "\n")


def cached_translate(
    request: TranslationRequest, backend: Translator, cache: TranslationCache
) -> list[str]:
    """Translate through the cache: hits bypass the backend, misses are sent
    once (deduplicated) and persisted. Output equals an uncached call."""
    missing = list(
        dict.fromkeys(
            t for t in request.texts if cache.get(request.src, request.tgt, t) is None
        )
    )
    if missing:
        translated = backend.translate_batch(
            TranslationRequest(tuple(missing), request.src, request.tgt)
        )
        cache.store_many(request.src, request.tgt, zip(missing, translated))
    out = []
    for text in request.texts:
        value = cache.get(request.src, request.tgt, text)
        assert value is not None
        out.append(value)
    return out


class CachingTranslator(Translator):
    """Wraps any backend with a persistent cache."""

    def __init__(self, backend: Translator, cache: TranslationCache) -> None:
        self._backend = backend
        self._cache = cache

    def translate_batch(self, request: TranslationRequest) -> list[str]:
        return cached_translate(request, self._backend, self._cache)
