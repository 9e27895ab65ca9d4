"""Proxy text measures over generated summaries.

Five measures: Flesch reading ease, reading time, sentiment polarity,
subjectivity, and regard. The first four are deterministic pure functions of
the text; regard is delegated to an external HTTP classifier endpoint and is
simply absent when no endpoint is configured or the endpoint fails.

The syllable rules, sentence-boundary abbreviations, and sentiment lexicon
ship as JSON assets in hirefair/data so scores are reproducible across
installations. The lexicon is a curated subset of common evaluative
vocabulary; coverage gaps lower sensitivity to wording changes but never
change what a returned score means.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Iterable, Mapping

import requests

from hirefair.backends import ResponseCache, cache_key

logger = logging.getLogger(__name__)

_DATA_DIR = Path(__file__).parent / "data"

#: Default per-character reading time. Only between-group differences enter
#: the t-tests, which are invariant under any common positive scaling, so the
#: exact constant does not affect test outcomes.
READING_MS_PER_CHAR = 14.69

MEASURES_SCHEMA_VERSION = 1

REGARD_CATEGORIES = ("positive", "negative", "neutral", "other")

_WORD_RE = re.compile(r"[A-Za-z0-9]+(?:['’-][A-Za-z0-9]+)*")
_TOKEN_RE = re.compile(r"[a-z0-9']+")


class TextMetricsError(Exception):
    """Raised for texts that violate a measure's preconditions."""


@lru_cache(maxsize=1)
def _text_rules() -> dict:
    return json.loads((_DATA_DIR / "text_rules.json").read_text())


@lru_cache(maxsize=1)
def _lexicon() -> dict:
    return json.loads((_DATA_DIR / "sentiment_lexicon.json").read_text())


# ---------------------------------------------------------------------------
# readability
# ---------------------------------------------------------------------------

def split_sentences(text: str) -> list[str]:
    """Split on terminal punctuation (. ! ?) followed by whitespace or EOF,
    except after a known abbreviation. Segments without a word don't count."""
    abbreviations = set(_text_rules()["abbreviations"])
    parts: list[str] = []
    start = 0
    for match in re.finditer(r"[.!?]+(?:\s+|$)", text):
        chunk = text[start:match.end()]
        head = text[start:match.start()]
        last_word = re.findall(r"[A-Za-z.]+", head)
        if last_word and last_word[-1].rstrip(".").lower() in abbreviations:
            continue
        parts.append(chunk)
        start = match.end()
    if start < len(text):
        parts.append(text[start:])
    return [p for p in parts if _WORD_RE.search(p)]


def count_syllables(word: str) -> int:
    """Syllables by vowel-group counting with silent-e handling.

    Rules (shipped in data/text_rules.json): count maximal runs of aeiouy in
    the lowercased letters; subtract one for a trailing silent 'e' unless the
    word ends in consonant+'le'; exception table wins; minimum one syllable.
    Tokens without letters count as one.
    """
    rules = _text_rules()
    letters = re.sub(r"[^a-z]", "", word.lower())
    if not letters:
        return 1
    exceptions = rules["exceptions"]
    if letters in exceptions:
        return exceptions[letters]
    vowels = set(rules["vowels"])
    count = 0
    in_group = False
    for ch in letters:
        if ch in vowels:
            if not in_group:
                count += 1
            in_group = True
        else:
            in_group = False
    if (rules["subtract_silent_e"] and count > 1 and letters.endswith("e")
            and not (rules["keep_consonant_le"] and len(letters) >= 3
                     and letters.endswith("le") and letters[-3] not in vowels)):
        count -= 1
    return max(1, count)


def flesch_reading_ease(text: str) -> float:
    """206.835 - 1.015 * (words/sentences) - 84.6 * (syllables/words)."""
    words = _WORD_RE.findall(text)
    if not words:
        raise TextMetricsError("reading ease needs at least one word")
    sentences = split_sentences(text)
    n_sentences = max(1, len(sentences))
    n_words = len(words)
    n_syllables = sum(count_syllables(w) for w in words)
    return 206.835 - 1.015 * (n_words / n_sentences) - 84.6 * (n_syllables / n_words)


def reading_time(text: str, ms_per_char: float = READING_MS_PER_CHAR) -> float:
    """Seconds to read: character count times a constant per-character cost.

    The per-character cost is snapped to the nearest multiple of 2**-31
    seconds so every product is exactly representable; reading times then
    add exactly under concatenation (time(a+b) == time(a)+time(b) bitwise).
    """
    if ms_per_char <= 0:
        raise TextMetricsError("ms_per_char must be positive")
    per_char = round(ms_per_char / 1000.0 * 2**31) / 2**31
    return len(text) * per_char


# ---------------------------------------------------------------------------
# sentiment
# ---------------------------------------------------------------------------

def _clamp(value: float, lo: float, hi: float) -> float:
    return max(lo, min(hi, value))


def _is_negation(token: str, negations: set[str]) -> bool:
    return token in negations or token.endswith("n't")


def _sentiment_scores(text: str) -> list[tuple[float, float]]:
    lex = _lexicon()
    entries: Mapping[str, dict] = lex["entries"]
    negations = set(lex["negations"])
    neg_mult = lex["negation_multiplier"]
    tokens = _TOKEN_RE.findall(text.lower())
    scored: list[tuple[float, float]] = []
    for i, token in enumerate(tokens):
        entry = entries.get(token)
        if entry is None or entry.get("modifier"):
            continue
        pol = float(entry.get("polarity", 0.0))
        subj = float(entry.get("subjectivity", 0.0))
        prev = entries.get(tokens[i - 1]) if i > 0 else None
        if prev is not None and prev.get("modifier"):
            pol *= float(prev["intensity"])
            subj *= float(prev["intensity"])
        if any(_is_negation(t, negations) for t in tokens[max(0, i - 2):i]):
            pol *= neg_mult
        scored.append((pol, subj))
    return scored


def polarity(text: str) -> float:
    """Mean lexicon polarity of matched words in [-1, 1]; 0 with no matches."""
    scored = _sentiment_scores(text)
    if not scored:
        return 0.0
    return _clamp(sum(p for p, _ in scored) / len(scored), -1.0, 1.0)


def subjectivity(text: str) -> float:
    """Mean lexicon subjectivity of matched words in [0, 1]; 0 with no matches."""
    scored = _sentiment_scores(text)
    if not scored:
        return 0.0
    return _clamp(sum(s for _, s in scored) / len(scored), 0.0, 1.0)


# ---------------------------------------------------------------------------
# regard
# ---------------------------------------------------------------------------

def validate_regard(scores: Mapping[str, float]) -> dict[str, float]:
    """Check a regard response: all four categories, summing to 1 within 1e-6."""
    missing = [c for c in REGARD_CATEGORIES if c not in scores]
    if missing:
        raise TextMetricsError(f"regard response missing categories: {missing}")
    values = {c: float(scores[c]) for c in REGARD_CATEGORIES}
    total = sum(values.values())
    if abs(total - 1.0) > 1e-6:
        raise TextMetricsError(f"regard scores sum to {total}, not 1")
    return values


class RegardClient:
    """Thin client for an external regard classifier endpoint.

    The endpoint receives {"text": ...} and must answer with the four
    category scores. Failures degrade gracefully: score() returns None and
    the measure is recorded as absent.
    """

    def __init__(self, endpoint: str, credential_env: str = "",
                 cache: ResponseCache | None = None,
                 post: Callable | None = None, timeout: float = 30.0):
        self.endpoint = endpoint
        self.credential_env = credential_env
        self.cache = cache
        self.timeout = timeout
        self._post = post or self._http_post

    def _http_post(self, payload: dict) -> dict:
        import os
        headers = {"Content-Type": "application/json"}
        if self.credential_env:
            headers["Authorization"] = f"Bearer {os.environ[self.credential_env]}"
        resp = requests.post(self.endpoint, json=payload, headers=headers,
                             timeout=self.timeout)
        resp.raise_for_status()
        return resp.json()

    def score(self, text: str) -> dict[str, float] | None:
        key = None
        if self.cache is not None:
            key = cache_key("regard", self.endpoint, {"text": text})
            cached = self.cache.get(key)
            if cached is not None:
                return validate_regard(cached)
        try:
            raw = self._post({"text": text})
            scores = validate_regard(raw)
        except (requests.RequestException, TextMetricsError, KeyError,
                ValueError, TypeError) as exc:
            logger.warning("regard endpoint failed; measure absent: %s", exc)
            return None
        if self.cache is not None:
            self.cache.put(key, scores)
        return scores


# ---------------------------------------------------------------------------
# records
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SummaryRecord:
    """One generated summary within the experimental grid."""

    resume_id: str
    variant_id: str
    model_name: str
    length_setting: int   # 100 | 200
    pov: str              # "first" | "third"
    temperature: float    # 0.0 | 0.3
    run_index: int        # 1..5
    text: str

    def __post_init__(self):
        if self.length_setting not in (100, 200):
            raise TextMetricsError(f"length_setting must be 100 or 200, got {self.length_setting}")
        if self.pov not in ("first", "third"):
            raise TextMetricsError(f"pov must be first or third, got {self.pov!r}")
        if self.temperature not in (0.0, 0.3):
            raise TextMetricsError(f"temperature must be 0.0 or 0.3, got {self.temperature}")
        if not 1 <= self.run_index <= 5:
            raise TextMetricsError(f"run_index must be in [1, 5], got {self.run_index}")


@dataclass(frozen=True)
class MeasureVector:
    reading_ease: float
    reading_time: float
    polarity: float
    subjectivity: float
    regard: dict[str, float] | None = None

    #: Measure names in ledger order; regard is optional.
    NAMES = ("reading_ease", "reading_time", "polarity", "subjectivity", "regard")

    def scalar(self, measure: str, regard_category: str = "positive") -> float | None:
        """Scalar value of a measure; regard collapses to one category's score."""
        if measure == "regard":
            return None if self.regard is None else self.regard[regard_category]
        return getattr(self, measure)


def measure_text(text: str, regard_client: RegardClient | None = None,
                 ms_per_char: float = READING_MS_PER_CHAR) -> MeasureVector:
    """Compute all five measures; regard is absent without a configured client."""
    return MeasureVector(
        reading_ease=flesch_reading_ease(text),
        reading_time=reading_time(text, ms_per_char),
        polarity=polarity(text),
        subjectivity=subjectivity(text),
        regard=regard_client.score(text) if regard_client is not None else None,
    )


def write_measures(rows: Iterable[tuple[SummaryRecord, MeasureVector]], path) -> None:
    """One JSON line per summary with its measures; schema versioned."""
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for record, mv in rows:
            rec = {
                "schema_version": MEASURES_SCHEMA_VERSION,
                "resume_id": record.resume_id,
                "variant_id": record.variant_id,
                "model_name": record.model_name,
                "length_setting": record.length_setting,
                "pov": record.pov,
                "temperature": record.temperature,
                "run_index": record.run_index,
                "reading_ease": mv.reading_ease,
                "reading_time": mv.reading_time,
                "polarity": mv.polarity,
                "subjectivity": mv.subjectivity,
            }
            if mv.regard is not None:
                rec["regard"] = mv.regard
            fh.write(json.dumps(rec, sort_keys=True, ensure_ascii=False))
            fh.write("\n")


def read_measures(path) -> list[tuple[SummaryRecord, MeasureVector]]:
    rows = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = json.loads(line)
            if rec.get("schema_version") != MEASURES_SCHEMA_VERSION:
                raise TextMetricsError(f"line {lineno}: unsupported measures schema")
            record = SummaryRecord(
                resume_id=rec["resume_id"], variant_id=rec["variant_id"],
                model_name=rec["model_name"], length_setting=rec["length_setting"],
                pov=rec["pov"], temperature=rec["temperature"],
                run_index=rec["run_index"], text="",
            )
            mv = MeasureVector(
                reading_ease=rec["reading_ease"], reading_time=rec["reading_time"],
                polarity=rec["polarity"], subjectivity=rec["subjectivity"],
                regard=rec.get("regard"),
            )
            rows.append((record, mv))
    return rows
