"""Self-contained ROUGE-1 / ROUGE-2 / ROUGE-L scorer.

Normalization is language-aware: alphabetic text lowercases and splits on
non-alphanumeric runs; CJK text counts one unit per ideograph, with
embedded non-CJK substrings falling back to the alphabetic rule. Scores
are precision / recall / F1; corpus aggregation is the arithmetic mean of
per-pair scores.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels

# languages scored with per-ideograph units
CJK_UNIT_LANGS = {"zh"}
KNOWN_LANGS = {"en", "zh", "syna", "synb"}

VARIANTS = ("rouge1", "rouge2", "rougeL")


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float

    @classmethod
    def from_pr(cls, precision: float, recall: float) -> "RougeScore":
        denom = precision + recall
        f1 = 2 * precision * recall / denom if denom > 0 else 0.0
        return cls(precision, recall, f1)


_CJK_RANGES = ((0x4E00, 0x9FFF), (0x3400, 0x4DBF), (0xF900, 0xFAFF))


def _is_cjk(ch: str) -> bool:
    code = ord(ch)
    return any(lo <= code <= hi for lo, hi in _CJK_RANGES)


def _alpha_units(text: str) -> list[str]:
    units, buf = [], []
    for ch in text.lower():
        if ch.isalnum():
            buf.append(ch)
        elif buf:
            units.append("".join(buf))
            buf = []
    if buf:
        units.append("".join(buf))
    return units


def normalize(text: str, lang: str) -> list[str]:
    """Split text into the evaluation units ROUGE counts over."""
    if lang not in KNOWN_LANGS:
        raise ValueError(f"unknown language {lang!r} for ROUGE normalization")
    if lang not in CJK_UNIT_LANGS:
        return _alpha_units(text)
    units, buf = [], []
    for ch in text:
        if _is_cjk(ch):
            if buf:
                units.extend(_alpha_units("".join(buf)))
                buf = []
            units.append(ch)
        else:
            buf.append(ch)
    if buf:
        units.extend(_alpha_units("".join(buf)))
    return units


def rouge_n(candidate: Sequence[str], reference: Sequence[str], n: int) -> RougeScore:
    """Clipped n-gram overlap score."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = [tuple(candidate[i: i + n]) for i in range(len(candidate) - n + 1)]
    ref = [tuple(reference[i: i + n]) for i in range(len(reference) - n + 1)]
    if not cand or not ref:
        return RougeScore(0.0, 0.0, 0.0)
    cand_counts, ref_counts = Counter(cand), Counter(ref)
    overlap = sum(min(c, ref_counts[g]) for g, c in cand_counts.items())
    return RougeScore.from_pr(overlap / len(cand), overlap / len(ref))


def _lcs(candidate: Sequence[str], reference: Sequence[str]) -> int:
    table: dict[str, int] = {}
    for u in candidate:
        table.setdefault(u, len(table))
    for u in reference:
        table.setdefault(u, len(table))
    a = np.array([table[u] for u in candidate], dtype=np.int64)
    b = np.array([table[u] for u in reference], dtype=np.int64)
    return int(kernels.lcs_length(a, b))


def rouge_l(candidate: Sequence[str], reference: Sequence[str]) -> RougeScore:
    """Longest-common-subsequence score."""
    if not candidate or not reference:
        return RougeScore(0.0, 0.0, 0.0)
    lcs = _lcs(candidate, reference)
    return RougeScore.from_pr(lcs / len(candidate), lcs / len(reference))


def score_pair(candidate: str, reference: str, lang: str) -> dict[str, RougeScore]:
    cand = normalize(candidate, lang)
    ref = normalize(reference, lang)
    return {"rouge1": rouge_n(cand, ref, 1),
            "rouge2": rouge_n(cand, ref, 2),
            "rougeL": rouge_l(cand, ref)}


def corpus_rouge(pairs: Sequence[tuple[str, str]], lang: str) -> dict[str, RougeScore]:
    """Arithmetic mean of per-pair P/R/F1 over (candidate, reference) texts."""
    if not pairs:
        raise ValueError("corpus_rouge needs at least one pair")
    sums = {v: [0.0, 0.0, 0.0] for v in VARIANTS}
    for cand, ref in pairs:
        scores = score_pair(cand, ref, lang)
        for v in VARIANTS:
            sums[v][0] += scores[v].precision
            sums[v][1] += scores[v].recall
            sums[v][2] += scores[v].f1
    n = len(pairs)
    return {v: RougeScore(s[0] / n, s[1] / n, s[2] / n) for v, s in sums.items()}


def format_report(scores: dict[str, RougeScore]) -> str:
    """Four-decimal P/R/F1 table, one variant per line."""
    lines = [f"{'variant':<8} {'precision':>10} {'recall':>10} {'f1':>10}"]
    for v in VARIANTS:
        s = scores[v]
        lines.append(f"{v:<8} {s.precision:>10.4f} {s.recall:>10.4f} {s.f1:>10.4f}")
    return "\n".join(lines)
