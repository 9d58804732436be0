import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mlas2.translation import (
    CachingTranslator,
    MockTranslator,
    TranslationCache,
    TranslationRequest,
    Translator,
    _batches,
    cached_translate,
    mock_translate,
)


class CountingTranslator(Translator):
    """Wraps a backend, counting batch calls and texts sent."""

    def __init__(self, backend):
        self.backend = backend
        self.batch_calls = 0
        self.texts_sent = 0

    def translate_batch(self, request):
        self.batch_calls += 1
        self.texts_sent += len(request.texts)
        return self.backend.translate_batch(request)


# ---------------------------------------------------------------------------
# mock rule
# ---------------------------------------------------------------------------

def test_mock_translate_rule():
    assert mock_translate("what is x", "en", "de") == "de:what de:is de:x"
    assert mock_translate("de:what de:is", "de", "en") == "what is"
    assert mock_translate("de:a b", "de", "en") == "a en:b"


def test_mock_translate_collapses_whitespace():
    assert mock_translate("  a \t b\nc ", "en", "de") == "de:a de:b de:c"


def test_translate_batch_contract():
    mock = MockTranslator()
    assert mock.translate_texts(["hello world"], "en", "de") == ["de:hello de:world"]
    assert mock.translate_texts(["de:hello de:world"], "de", "en") == ["hello world"]
    assert mock.translate_texts([], "en", "de") == []


def test_request_rejects_same_language():
    with pytest.raises(ValueError, match="both"):
        TranslationRequest(("x",), "en", "en")


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet="abcdefgh ", max_size=60), st.sampled_from([("en", "de"), ("fr", "it")]))
def test_mock_round_trip(text, langs):
    src, tgt = langs
    there = mock_translate(text, src, tgt)
    back = mock_translate(there, tgt, src)
    assert back == " ".join(text.split())


# ---------------------------------------------------------------------------
# batching
# ---------------------------------------------------------------------------

def test_batches_respect_text_limit():
    batches = list(_batches(["x"] * 120, 50, 4000))
    assert [len(b) for b in batches] == [50, 50, 20]


def test_batches_respect_char_limit():
    texts = ["a" * 1500] * 4
    batches = list(_batches(texts, 50, 4000))
    assert [len(b) for b in batches] == [2, 2]


def test_oversized_text_travels_alone():
    batches = list(_batches(["a" * 5000, "b"], 50, 4000))
    assert [len(b) for b in batches] == [1, 1]


# ---------------------------------------------------------------------------
# cache
# ---------------------------------------------------------------------------

def test_cache_hit_skips_backend(tmp_path):
    cache = TranslationCache(tmp_path / "cache.jsonl")
    backend = CountingTranslator(MockTranslator())
    req = TranslationRequest(("hello", "world"), "en", "de")
    first = cached_translate(req, backend, cache)
    assert backend.batch_calls == 1
    second = cached_translate(req, backend, cache)
    assert second == first
    assert backend.batch_calls == 1


def test_partial_hit_sends_only_misses(tmp_path):
    cache = TranslationCache(tmp_path / "cache.jsonl")
    backend = CountingTranslator(MockTranslator())
    cached_translate(TranslationRequest(("one",), "en", "de"), backend, cache)
    cached_translate(TranslationRequest(("one", "two", "three"), "en", "de"), backend, cache)
    assert backend.texts_sent == 3  # 1 + the 2 misses


def test_cached_matches_uncached_oracle(tmp_path):
    rng = random.Random(42)
    words = ["alpha", "beta", "gamma", "delta", "epsilon"]
    texts = tuple(
        " ".join(rng.choice(words) for _ in range(rng.randint(1, 6))) for _ in range(1000)
    )
    req = TranslationRequest(texts, "en", "de")
    plain = MockTranslator().translate_batch(req)
    cache = TranslationCache(tmp_path / "cache.jsonl")
    translator = CachingTranslator(MockTranslator(), cache)
    assert translator.translate_batch(req) == plain
    assert translator.translate_batch(req) == plain


def test_cache_survives_reload(tmp_path):
    path = tmp_path / "cache.jsonl"
    cached_translate(
        TranslationRequest(("persist me",), "en", "de"), MockTranslator(), TranslationCache(path)
    )
    reloaded = TranslationCache(path)
    backend = CountingTranslator(MockTranslator())
    out = cached_translate(TranslationRequest(("persist me",), "en", "de"), backend, reloaded)
    assert out == ["de:persist de:me"]
    assert backend.batch_calls == 0


def test_cache_skips_corrupt_lines(tmp_path):
    path = tmp_path / "cache.jsonl"
    good = {
        "src": "en",
        "tgt": "de",
        "hash": TranslationCache.text_key("keep"),
        "text": "de:keep",
    }
    path.write_text("not json at all\n" + json.dumps(good) + "\n{\"src\":\"en\"}\n")
    cache = TranslationCache(path)
    assert cache.get("en", "de", "keep") == "de:keep"
    assert cache.get("en", "de", "missing") is None
    # the corrupt entries behave as misses and get rewritten
    backend = CountingTranslator(MockTranslator())
    cached_translate(TranslationRequest(("missing",), "en", "de"), backend, cache)
    assert TranslationCache(path).get("en", "de", "missing") == "de:missing"


def test_cache_is_content_addressed(tmp_path):
    cache = TranslationCache(tmp_path / "c.jsonl")
    backend = CountingTranslator(MockTranslator())
    cached_translate(TranslationRequest(("a", "b"), "en", "de"), backend, cache)
    # same texts, different batch order: all hits
    out = cached_translate(TranslationRequest(("b", "a"), "en", "de"), backend, cache)
    assert out == ["de:b", "de:a"]
    assert backend.batch_calls == 1
