"""Per-sample text metrics and the two-level score aggregation.

BLEU-4, ROUGE-1/2/L, and METEOR are computed from scratch on a shared
normalizing tokenizer; concept F1 reuses the extraction lexicon as a stand-in
for a concept-overlap factuality metric. Embedding-based metrics are obtained
from an optional remote scorer and excluded from the overall mean when that
scorer is unavailable. The overall score is the mean over metrics of the mean
over the two target sections of the per-sample metric means.
"""

from __future__ import annotations

import enum
import logging
import math
import string
import time
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import requests

from .concepts import Lexicon, extract_concepts, normalize_surface
from .errors import AggregationError, RemoteProtocolError, RemoteUnavailableError
from .inputs import TargetSection
from .sections import UnknownSection

log = logging.getLogger(__name__)


class MetricId(enum.Enum):
    BLEU4 = "bleu4"
    ROUGE1 = "rouge1"
    ROUGE2 = "rouge2"
    ROUGE_L = "rougeL"
    METEOR = "meteor"
    CONCEPT_F1 = "concept_f1"
    BERTSCORE = "bertscore"
    ALIGNSCORE = "alignscore"


CORE_METRICS = (
    MetricId.BLEU4,
    MetricId.ROUGE1,
    MetricId.ROUGE2,
    MetricId.ROUGE_L,
    MetricId.METEOR,
    MetricId.CONCEPT_F1,
)
REMOTE_METRICS = (MetricId.BERTSCORE, MetricId.ALIGNSCORE)

_PUNCT = string.punctuation


def tokenize_eval(text: str) -> list[str]:
    """Lowercase, split on whitespace, strip leading/trailing punctuation."""
    out = []
    for raw in text.lower().split():
        token = raw.strip(_PUNCT)
        if token:
            out.append(token)
    return out


def _ngram_counts(tokens: Sequence[str], n: int) -> dict[tuple[str, ...], int]:
    counts: dict[tuple[str, ...], int] = {}
    for i in range(len(tokens) - n + 1):
        gram = tuple(tokens[i : i + n])
        counts[gram] = counts.get(gram, 0) + 1
    return counts


def clipped_ngram_overlap(candidate: Sequence[str], reference: Sequence[str], n: int) -> int:
    """Multiset intersection size of the two n-gram bags (the clipped count)."""
    c = _ngram_counts(candidate, n)
    r = _ngram_counts(reference, n)
    return sum(min(count, r.get(gram, 0)) for gram, count in c.items())


_BLEU_EPS = 1e-9


def bleu4(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Sentence BLEU-4 with an epsilon floor for zero higher-order counts.

    Orders the candidate is too short to populate are left out of the
    geometric mean, so identical sequences score 1.0 at any length. No
    unigram overlap at all scores 0.
    """
    c_len = len(candidate)
    r_len = len(reference)
    if c_len == 0:
        return 0.0
    log_sum = 0.0
    orders = min(4, c_len)
    for n in range(1, orders + 1):
        clipped = clipped_ngram_overlap(candidate, reference, n)
        if n == 1 and clipped == 0:
            return 0.0
        total = c_len - n + 1
        precision = clipped / total if clipped > 0 else _BLEU_EPS
        log_sum += math.log(precision)
    score = math.exp(log_sum / orders)
    if c_len < r_len:
        score *= math.exp(1 - r_len / c_len)
    return min(1.0, score)


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> float:
    """F1 over clipped n-gram overlap; two empty bags count as a perfect match."""
    if n not in (1, 2):
        raise ValueError("rouge_n supports n in {1, 2}")
    c_total = max(0, len(candidate) - n + 1)
    r_total = max(0, len(reference) - n + 1)
    if c_total == 0 and r_total == 0:
        return 1.0
    if c_total == 0 or r_total == 0:
        return 0.0
    overlap = clipped_ngram_overlap(candidate, reference, n)
    if overlap == 0:
        return 0.0
    precision = overlap / c_total
    recall = overlap / r_total
    return 2 * precision * recall / (precision + recall)


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        cur = [0]
        for j, y in enumerate(b, start=1):
            cur.append(prev[j - 1] + 1 if x == y else max(prev[j], cur[j - 1]))
        prev = cur
    return prev[-1]


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """F1 built from the longest-common-subsequence length."""
    if not candidate and not reference:
        return 1.0
    if not candidate or not reference:
        return 0.0
    lcs = lcs_length(candidate, reference)
    if lcs == 0:
        return 0.0
    precision = lcs / len(candidate)
    recall = lcs / len(reference)
    return 2 * precision * recall / (precision + recall)


_STEM_SUFFIXES = ("ing", "es", "ed", "s")
_MIN_STEM = 3


def _stem(token: str) -> str:
    for suffix in _STEM_SUFFIXES:
        if token.endswith(suffix) and len(token) - len(suffix) >= _MIN_STEM:
            return token[: -len(suffix)]
    return token


def _align(candidate: Sequence[str], reference: Sequence[str]) -> list[tuple[int, int]]:
    """Greedy in-order unigram alignment: exact stage, then stemmed stage."""
    pairs: list[tuple[int, int]] = []
    used_c: set[int] = set()
    used_r: set[int] = set()
    for key in (lambda t: t, _stem):
        ref_keys = [key(t) for t in reference]
        for i, token in enumerate(candidate):
            if i in used_c:
                continue
            want = key(token)
            for j, have in enumerate(ref_keys):
                if j not in used_r and have == want:
                    pairs.append((i, j))
                    used_c.add(i)
                    used_r.add(j)
                    break
    pairs.sort()
    return pairs


def meteor(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Unigram F-mean (recall-weighted 9:1) with a cubic fragmentation penalty."""
    pairs = _align(candidate, reference)
    m = len(pairs)
    if m == 0:
        return 0.0
    precision = m / len(candidate)
    recall = m / len(reference)
    f_mean = 10 * precision * recall / (recall + 9 * precision)
    chunks = 1
    for (c_prev, r_prev), (c_cur, r_cur) in zip(pairs, pairs[1:]):
        if c_cur != c_prev + 1 or r_cur != r_prev + 1:
            chunks += 1
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1 - penalty)


_EVAL_SECTION = UnknownSection("evaluation")


def concept_set(text: str, lexicon: Lexicon) -> set[str]:
    return {
        normalize_surface(span.text)
        for span in extract_concepts(text, _EVAL_SECTION, lexicon)
    }


def concept_f1(candidate: str, reference: str, lexicon: Lexicon) -> float:
    """Set F1 over normalized lexicon concepts found in the two texts."""
    c_set = concept_set(candidate, lexicon)
    r_set = concept_set(reference, lexicon)
    if not c_set and not r_set:
        return 1.0
    if not c_set or not r_set:
        return 0.0
    overlap = len(c_set & r_set)
    if overlap == 0:
        return 0.0
    precision = overlap / len(c_set)
    recall = overlap / len(r_set)
    return 2 * precision * recall / (precision + recall)


def remote_score(
    candidate: str,
    reference: str,
    metric: MetricId,
    endpoint: str,
    *,
    timeout: float = 30.0,
    retries: int = 2,
    backoff: float = 0.5,
    session: requests.Session | None = None,
) -> float:
    """Fetch one embedding-based score from the remote scorer, clamped to [0, 1]."""
    if metric not in REMOTE_METRICS:
        raise ValueError(f"{metric.value} is not a remote metric")
    http = session or requests
    payload = {"candidate": candidate, "reference": reference, "metric": metric.value}
    last_error: Exception | None = None
    for attempt in range(retries + 1):
        if attempt:
            time.sleep(backoff * (2 ** (attempt - 1)))
        try:
            resp = http.post(endpoint, json=payload, timeout=timeout)
        except requests.RequestException as exc:
            last_error = exc
            continue
        if resp.status_code >= 500:
            last_error = RemoteUnavailableError(f"server error {resp.status_code}")
            continue
        if resp.status_code != 200:
            raise RemoteProtocolError(f"scorer rejected request: {resp.status_code}")
        try:
            value = float(resp.json()["value"])
        except (ValueError, KeyError, TypeError):
            raise RemoteProtocolError(f"malformed scorer response: {resp.text[:200]}") from None
        if not (0.0 <= value <= 1.0):
            log.warning("scorer returned %s=%s outside [0,1]; clamping", metric.value, value)
            value = min(1.0, max(0.0, value))
        return value
    raise RemoteUnavailableError(f"scorer endpoint {endpoint} unreachable: {last_error}")


@dataclass
class MetricReport:
    hadm_id: str
    target: TargetSection
    scores: dict[MetricId, float]


@dataclass
class AggregateReport:
    per_target_means: dict[TargetSection, dict[MetricId, float]]
    cross_target_means: dict[MetricId, float]
    overall: float
    sample_counts: dict[TargetSection, int] = field(default_factory=dict)
    unavailable_metrics: tuple[MetricId, ...] = ()


def score_pair(
    candidate: str,
    reference: str,
    lexicon: Lexicon,
    metrics: Sequence[MetricId] = CORE_METRICS,
    scorer: "Mapping[MetricId, float] | None" = None,
) -> dict[MetricId, float]:
    """Compute all requested local metrics for one candidate/reference pair.

    Remote metric values, when requested, must be supplied via ``scorer``
    (already fetched); this function itself never talks to the network.
    """
    c_tokens = tokenize_eval(candidate)
    r_tokens = tokenize_eval(reference)
    out: dict[MetricId, float] = {}
    for metric in metrics:
        if metric is MetricId.BLEU4:
            out[metric] = bleu4(c_tokens, r_tokens)
        elif metric is MetricId.ROUGE1:
            out[metric] = rouge_n(c_tokens, r_tokens, 1)
        elif metric is MetricId.ROUGE2:
            out[metric] = rouge_n(c_tokens, r_tokens, 2)
        elif metric is MetricId.ROUGE_L:
            out[metric] = rouge_l(c_tokens, r_tokens)
        elif metric is MetricId.METEOR:
            out[metric] = meteor(c_tokens, r_tokens)
        elif metric is MetricId.CONCEPT_F1:
            out[metric] = concept_f1(candidate, reference, lexicon)
        else:
            if scorer is None or metric not in scorer:
                raise ValueError(f"remote metric {metric.value} requested without a score")
            out[metric] = scorer[metric]
    return out


def aggregate(reports: Iterable[MetricReport]) -> AggregateReport:
    """Two-level mean: per target over samples, then over targets, then metrics."""
    reports = list(reports)
    if not reports:
        raise AggregationError("no metric reports to aggregate")
    metric_set = tuple(sorted(reports[0].scores, key=lambda m: m.value))
    for report in reports:
        if tuple(sorted(report.scores, key=lambda m: m.value)) != metric_set:
            raise AggregationError(
                f"inconsistent metric set for {report.hadm_id}/{report.target.value}"
            )
    per_target: dict[TargetSection, dict[MetricId, float]] = {}
    counts: dict[TargetSection, int] = {}
    for target in TargetSection:
        group = [r for r in reports if r.target is target]
        if not group:
            raise AggregationError(f"target {target.value!r} has zero samples")
        counts[target] = len(group)
        # fsum is exactly rounded, which keeps the mean order-independent.
        per_target[target] = {
            metric: math.fsum(r.scores[metric] for r in group) / len(group)
            for metric in metric_set
        }
    cross = {
        metric: sum(per_target[t][metric] for t in TargetSection) / len(TargetSection)
        for metric in metric_set
    }
    overall = sum(cross.values()) / len(cross)
    return AggregateReport(
        per_target_means=per_target,
        cross_target_means=cross,
        overall=overall,
        sample_counts=counts,
    )


def aggregate_to_json(report: AggregateReport) -> dict:
    return {
        "per_target_means": {
            target.value: {m.value: v for m, v in scores.items()}
            for target, scores in report.per_target_means.items()
        },
        "cross_target_means": {m.value: v for m, v in report.cross_target_means.items()},
        "overall": report.overall,
        "sample_counts": {t.value: n for t, n in report.sample_counts.items()},
        "unavailable_metrics": [m.value for m in report.unavailable_metrics],
    }
