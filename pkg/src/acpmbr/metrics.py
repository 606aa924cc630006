"""Utility functions u(hypothesis, reference).

Every metric is oriented higher-is-better and carries a ``cost_weight``
(parameter count in millions, used as a proxy for per-call cost).
Two lexical scorers are built in (chrF and smoothed sentence BLEU); neural
scorers live in a child process reached through :class:`ExternalMetric`.
"""

from __future__ import annotations

import json
import logging
import math
import shlex
import subprocess
import threading
import unicodedata
from collections import Counter
from dataclasses import dataclass, field
from typing import Sequence

_logger = logging.getLogger(__name__)

# Parameter counts (millions) of BLEURT-20 and its distilled variants.
KNOWN_PARAM_COUNTS: dict[str, float] = {
    "bleurt-20": 579.0,
    "bleurt-20-d12": 167.0,
    "bleurt-20-d6": 45.0,
    "bleurt-20-d3": 30.0,
}

DEFAULT_BUILTIN_WEIGHT = 1.0


class MetricError(Exception):
    pass


class MetricTransportError(MetricError):
    """The external scorer died, hung up, or broke the line protocol.

    ``batch_offset`` is the index of the first pair of the failing batch
    within the caller's list.
    """

    def __init__(self, message: str, batch_offset: int = 0, batch_size: int = 0):
        super().__init__(f"{message} (batch offset {batch_offset}, size {batch_size})")
        self.batch_offset = batch_offset
        self.batch_size = batch_size


# ---------------------------------------------------------------------------
# chrF


def _char_ngrams(text: str, n: int) -> Counter:
    text = "".join(text.split())
    return Counter(text[k : k + n] for k in range(len(text) - n + 1))


def chrf_score(hypothesis: str, reference: str, char_order: int = 6, beta: float = 2.0) -> float:
    """Sentence-level chrF (character n-grams only, whitespace removed).

    Precision and recall are averaged over the orders for which both sides
    have at least one n-gram, then combined into an F-beta score in [0, 100].
    """
    factor = beta**2
    avg_prec = avg_rec = 0.0
    effective = 0
    for n in range(1, char_order + 1):
        hyp = _char_ngrams(hypothesis, n)
        ref = _char_ngrams(reference, n)
        n_hyp = sum(hyp.values())
        n_ref = sum(ref.values())
        if n_hyp == 0 or n_ref == 0:
            continue
        match = sum((hyp & ref).values())
        avg_prec += match / n_hyp
        avg_rec += match / n_ref
        effective += 1
    if effective == 0:
        return 0.0
    avg_prec /= effective
    avg_rec /= effective
    if avg_prec + avg_rec == 0.0:
        return 0.0
    return 100.0 * (1 + factor) * avg_prec * avg_rec / (factor * avg_prec + avg_rec)


# ---------------------------------------------------------------------------
# sentence BLEU


def _tokens(text: str) -> list[str]:
    return unicodedata.normalize("NFC", text).split()


def _word_ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[k : k + n]) for k in range(len(tokens) - n + 1))


def sentence_bleu_score(hypothesis: str, reference: str, max_order: int = 4) -> float:
    """Smoothed sentence BLEU over NFC-normalised whitespace tokens.

    Uses exponential smoothing for zero-match orders and the effective
    order (orders beyond the hypothesis length are dropped).
    """
    hyp = _tokens(hypothesis)
    ref = _tokens(reference)
    if not hyp or not ref:
        return 0.0
    correct = [sum((_word_ngrams(hyp, n) & _word_ngrams(ref, n)).values()) for n in range(1, max_order + 1)]
    if not any(correct):
        return 0.0
    log_sum = 0.0
    smooth = 1.0
    order = 0
    for n in range(1, max_order + 1):
        total = len(hyp) - n + 1
        if total <= 0:
            break
        order = n
        if correct[n - 1] == 0:
            smooth *= 2.0
            precision = 100.0 / (smooth * total)
        else:
            precision = 100.0 * correct[n - 1] / total
        log_sum += math.log(precision)
    brevity = 1.0 if len(hyp) >= len(ref) else math.exp(1.0 - len(ref) / len(hyp))
    return min(100.0, brevity * math.exp(log_sum / order))


# ---------------------------------------------------------------------------
# metric handles


@dataclass
class Metric:
    """A sentence-pair scorer with a declared cost weight."""

    id: str
    kind: str = "builtin-chrf"
    cost_weight: float = DEFAULT_BUILTIN_WEIGHT

    def __post_init__(self) -> None:
        if not self.cost_weight > 0:
            raise ValueError(f"cost_weight must be positive, got {self.cost_weight}")

    def score_pair(self, hypothesis: str, reference: str) -> float:
        return self.score_batch([(hypothesis, reference)])[0]

    def score_batch(self, pairs: Sequence[tuple[str, str]]) -> list[float]:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc) -> None:
        self.close()


@dataclass
class ChrF(Metric):
    id: str = "chrf"
    kind: str = "builtin-chrf"

    def score_pair(self, hypothesis: str, reference: str) -> float:
        return chrf_score(hypothesis, reference)

    def score_batch(self, pairs):
        return [chrf_score(h, r) for h, r in pairs]


@dataclass
class SentenceBLEU(Metric):
    id: str = "bleu"
    kind: str = "builtin-sentence-bleu"

    def score_pair(self, hypothesis: str, reference: str) -> float:
        return sentence_bleu_score(hypothesis, reference)

    def score_batch(self, pairs):
        return [sentence_bleu_score(h, r) for h, r in pairs]


@dataclass
class ExternalMetric(Metric):
    """Client for a scorer running in a child process.

    The child reads one JSON object per line on stdin,
    ``{"id": int, "hyp": str, "ref": str}``, and answers with
    ``{"id": int, "score": float}`` (or ``{"id": int, "error": str}``) per
    line on stdout.  Responses may arrive in any order within a batch.
    Set ``negate`` for lower-is-better scorers such as MetricX.
    """

    command: Sequence[str] | str = ()
    kind: str = "external"
    batch_size: int = 64
    negate: bool = False
    _proc: subprocess.Popen | None = field(default=None, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)
    _next_id: int = field(default=0, init=False, repr=False)

    def _ensure_started(self) -> subprocess.Popen:
        if self._proc is None or self._proc.poll() is not None:
            cmd = shlex.split(self.command) if isinstance(self.command, str) else list(self.command)
            if not cmd:
                raise MetricTransportError(f"no command configured for metric {self.id!r}")
            try:
                self._proc = subprocess.Popen(
                    cmd,
                    stdin=subprocess.PIPE,
                    stdout=subprocess.PIPE,
                    text=True,
                    encoding="utf-8",
                    bufsize=1,
                )
            except OSError as exc:
                raise MetricTransportError(f"cannot launch {cmd!r}: {exc}") from exc
        return self._proc

    def _run_batch(self, pairs: Sequence[tuple[str, str]], offset: int) -> list[float]:
        try:
            return self._exchange(pairs, offset)
        except MetricTransportError:
            # the stream may hold stale responses; restart on next use
            self._kill()
            raise

    def _kill(self) -> None:
        if self._proc is not None:
            self._proc.kill()
            self._proc.wait()
            self._proc = None

    def _exchange(self, pairs: Sequence[tuple[str, str]], offset: int) -> list[float]:
        proc = self._ensure_started()
        ids = list(range(self._next_id, self._next_id + len(pairs)))
        self._next_id += len(pairs)
        try:
            for rid, (hyp, ref) in zip(ids, pairs):
                proc.stdin.write(json.dumps({"id": rid, "hyp": hyp, "ref": ref}, ensure_ascii=False) + "\n")
            proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise MetricTransportError(f"write to {self.id!r} failed: {exc}", offset, len(pairs)) from exc

        pending = {rid: k for k, rid in enumerate(ids)}
        scores: list[float | None] = [None] * len(pairs)
        while pending:
            line = proc.stdout.readline()
            if not line:
                raise MetricTransportError(f"{self.id!r} closed its output", offset, len(pairs))
            try:
                msg = json.loads(line)
                rid = msg["id"]
            except (ValueError, KeyError, TypeError) as exc:
                raise MetricTransportError(f"malformed response {line.strip()!r}", offset, len(pairs)) from exc
            if rid not in pending:
                raise MetricTransportError(f"unexpected response id {rid!r}", offset, len(pairs))
            if "error" in msg:
                raise MetricTransportError(f"{self.id!r} reported: {msg['error']}", offset, len(pairs))
            try:
                value = float(msg["score"])
            except (KeyError, TypeError, ValueError) as exc:
                raise MetricTransportError(f"response without score: {line.strip()!r}", offset, len(pairs)) from exc
            if not math.isfinite(value):
                raise MetricTransportError(f"non-finite score {value!r}", offset, len(pairs))
            scores[pending.pop(rid)] = -value if self.negate else value
        return scores  # type: ignore[return-value]

    def score_batch(self, pairs):
        if not pairs:
            raise ValueError("score_batch needs at least one pair")
        out: list[float] = []
        with self._lock:
            for start in range(0, len(pairs), self.batch_size):
                out.extend(self._run_batch(pairs[start : start + self.batch_size], start))
        return out

    def close(self) -> None:
        with self._lock:
            if self._proc is not None:
                try:
                    self._proc.stdin.close()
                    self._proc.wait(timeout=5)
                except (OSError, subprocess.TimeoutExpired):
                    self._proc.kill()
                    self._proc.wait()
                self._proc = None


def score_pair(metric: Metric, hypothesis: str, reference: str) -> float:
    return metric.score_pair(hypothesis, reference)


def score_batch(metric: Metric, pairs: Sequence[tuple[str, str]]) -> list[float]:
    if not pairs:
        raise ValueError("score_batch needs at least one pair")
    return metric.score_batch(list(pairs))


def metric_cost(metric: Metric) -> float:
    return metric.cost_weight


def make_metric(spec: str, command: Sequence[str] | str | None = None) -> Metric:
    """Build a metric from a spec string.

    ``chrf`` / ``bleu`` select a builtin scorer; anything else is external
    and needs ``command``.  An optional ``@weight`` suffix overrides the cost
    weight, e.g. ``chrf@2.5`` or ``bleurt-20-d3@30``.  Names listed in
    ``KNOWN_PARAM_COUNTS`` default to their parameter count.  A leading
    ``-`` marks a lower-is-better external scorer to be negated.
    """
    name, _, weight_text = spec.partition("@")
    negate = name.startswith("-")
    name = name.lstrip("-")
    weight = float(weight_text) if weight_text else None
    key = name.lower()
    if key == "chrf":
        return ChrF(cost_weight=weight or DEFAULT_BUILTIN_WEIGHT)
    if key in ("bleu", "sentence-bleu"):
        return SentenceBLEU(cost_weight=weight or DEFAULT_BUILTIN_WEIGHT)
    if weight is None:
        weight = KNOWN_PARAM_COUNTS.get(key, DEFAULT_BUILTIN_WEIGHT)
    if not command:
        raise ValueError(f"external metric {name!r} needs a command line")
    return ExternalMetric(id=name, cost_weight=weight, command=command, negate=negate)


def format_metric_spec(metric: Metric) -> str:
    prefix = "-" if isinstance(metric, ExternalMetric) and metric.negate else ""
    return f"{prefix}{metric.id}@{metric.cost_weight:g}"
