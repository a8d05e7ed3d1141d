"""Training-example construction for the five pretraining objectives plus
cross-lingual summarization finetuning, and the weighted task mixer.

Every constructor is pure given its rng. The random draw protocol is part of
each function's contract (documented per function) so that independent
re-implementations can mirror the stream draw for draw.

Token sequences entering these functions are pre-encoded ids. Control
specials (pad, bos, task ids, sentinels, ...) are rejected on input; byte
fallback ids are ordinary text and pass through.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping, Sequence

import numpy as np

from .vocab import TASK_NAMES, SpecialTokens


@dataclass
class TrainingExample:
    src_ids: list[int]
    tgt_ids: list[int]
    task: int
    tgt_lang: int


@dataclass
class ParallelPair:
    lang_a: int
    lang_b: int
    sent_a: list[int]
    sent_b: list[int]

    def __post_init__(self):
        if not self.sent_a or not self.sent_b:
            raise ValueError("parallel pair sentences must be non-empty")
        if self.lang_a == self.lang_b:
            raise ValueError("parallel pair languages must differ")


@dataclass
class SummPair:
    doc_lang: int
    summ_lang: int
    doc_ids: list[int]
    summ_ids: list[int]

    def __post_init__(self):
        if not self.doc_ids or not self.summ_ids:
            raise ValueError("summarization pair sides must be non-empty")


@dataclass
class MixWeights:
    """Nonnegative sampling weight per pretraining task."""

    mlm: float = 1.0
    dae: float = 1.0
    ms: float = 1.0
    cmlm: float = 1.0
    mt: float = 1.0

    def as_dict(self) -> dict[str, float]:
        d = {"mlm": self.mlm, "dae": self.dae, "ms": self.ms,
             "cmlm": self.cmlm, "mt": self.mt}
        if any(w < 0 for w in d.values()):
            raise ValueError("task weights must be nonnegative")
        if sum(d.values()) <= 0:
            raise ValueError("at least one task weight must be positive")
        return d


def _check_text_ids(tokens: Sequence[int], sp: SpecialTokens, what: str) -> None:
    if len(tokens) == 0:
        raise ValueError(f"{what} must be non-empty")
    for t in tokens:
        if t < sp.byte_block_start:
            raise ValueError(f"{what} contains control special id {t}")


def _selected_runs(selected: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of True, as [start, end) index pairs."""
    runs = []
    i, n = 0, len(selected)
    while i < n:
        if selected[i]:
            j = i
            while j < n and selected[j]:
                j += 1
            runs.append((i, j))
            i = j
        else:
            i += 1
    return runs


def _sentinel_corrupt(tokens: Sequence[int], selected: np.ndarray,
                      sp: SpecialTokens) -> tuple[list[int], list[int]]:
    """Replace each selected run with an ascending sentinel; target lists
    each sentinel followed by the tokens it hid."""
    runs = _selected_runs(selected)
    if len(runs) > len(sp.sentinel_ids):
        raise ValueError(f"{len(runs)} masked spans exceed the "
                         f"{len(sp.sentinel_ids)} available sentinels")
    src: list[int] = []
    tgt: list[int] = []
    pos = 0
    for k, (start, end) in enumerate(runs):
        src.extend(tokens[pos:start])
        src.append(sp.sentinel_ids[k])
        tgt.append(sp.sentinel_ids[k])
        tgt.extend(tokens[start:end])
        pos = end
    src.extend(tokens[pos:])
    return src, tgt


def corrupt_mlm(tokens: Sequence[int], lang: int, mask_prob: float,
                rng: np.random.Generator, sp: SpecialTokens,
                selection: np.ndarray | None = None) -> TrainingExample:
    """Sentinel span corruption of a single sentence.

    Draw protocol: one rng.random(len(tokens)) vector compared against
    mask_prob (skipped when an explicit boolean `selection` is supplied,
    e.g. to pin down a published fixture).
    """
    _check_text_ids(tokens, sp, "mlm tokens")
    if not 0.0 <= mask_prob <= 1.0:
        raise ValueError("mask_prob must lie in [0, 1]")
    if selection is None:
        selection = rng.random(len(tokens)) < mask_prob
    selection = np.asarray(selection, dtype=bool)
    src, tgt = _sentinel_corrupt(tokens, selection, sp)
    return TrainingExample(src, tgt, sp.task_ids["mlm"], lang)


def corrupt_dae(tokens: Sequence[int], lang: int, drop_prob: float,
                mask_prob: float, shuffle_k: int, rng: np.random.Generator,
                sp: SpecialTokens,
                drop_selection: np.ndarray | None = None,
                mask_selection: np.ndarray | None = None) -> TrainingExample:
    """Denoising corruption: drop, then mask with the shared <M>, then a
    bounded shuffle; the target is the pristine sentence.

    Draw protocol: rng.random(n) for drops; one rng.integers(n) only if
    everything was dropped; rng.random(len(kept)) for masks; then
    rng.random(len(kept)) * (shuffle_k + 1) as position jitter, stable
    argsort of position + jitter. Jitter below shuffle_k + 1 bounds every
    token's displacement by shuffle_k. Explicit selections (indexed over
    the original positions) replace the corresponding draws.
    """
    _check_text_ids(tokens, sp, "dae tokens")
    if not (0.0 <= drop_prob <= 1.0 and 0.0 <= mask_prob <= 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    if shuffle_k < 0:
        raise ValueError("shuffle_k must be >= 0")
    n = len(tokens)
    if drop_selection is None:
        keep = rng.random(n) >= drop_prob
        if not keep.any():
            keep[rng.integers(n)] = True
    else:
        keep = ~np.asarray(drop_selection, dtype=bool)
        if not keep.any():
            raise ValueError("explicit drop selection removed every token")
    kept_idx = np.flatnonzero(keep)
    kept = [tokens[i] for i in kept_idx]
    m = len(kept)
    if mask_selection is None:
        masked = rng.random(m) < mask_prob
    else:
        masked = np.asarray(mask_selection, dtype=bool)[kept_idx]
    corrupted = [sp.shared_mask_id if masked[i] else kept[i] for i in range(m)]
    scores = np.arange(m, dtype=float) + rng.random(m) * (shuffle_k + 1)
    order = np.argsort(scores, kind="stable")
    src = [corrupted[i] for i in order]
    return TrainingExample(src, list(tokens), sp.task_ids["dae"], lang)


def make_cmlm(pair: ParallelPair, mask_prob: float, rng: np.random.Generator,
              sp: SpecialTokens, side: int | None = None,
              selection: np.ndarray | None = None) -> TrainingExample:
    """Sentinel-mask exactly one side of a parallel pair; the other side
    stays intact and the concatenation keeps the stored pair order.

    Draw protocol: rng.integers(2) for the side (0 = first), then the
    corrupt_mlm selection vector over the chosen side; if the vector selects
    nothing, one rng.integers(len(side)) forces a single-token span so the
    single-masked-side shape always holds.
    """
    if not 0.0 < mask_prob <= 1.0:
        raise ValueError("mask_prob must lie in (0, 1]")
    if side is None:
        side = int(rng.integers(2))
    if side not in (0, 1):
        raise ValueError("side must be 0 or 1")
    sides = [list(pair.sent_a), list(pair.sent_b)]
    langs = [pair.lang_a, pair.lang_b]
    tokens = sides[side]
    _check_text_ids(tokens, sp, "cmlm tokens")
    _check_text_ids(sides[1 - side], sp, "cmlm tokens")
    if selection is None:
        sel = rng.random(len(tokens)) < mask_prob
        if not sel.any():
            sel[rng.integers(len(tokens))] = True
    else:
        sel = np.asarray(selection, dtype=bool)
    corrupted, tgt = _sentinel_corrupt(tokens, sel, sp)
    sides[side] = corrupted
    src = sides[0] + [sp.separator_id] + sides[1]
    return TrainingExample(src, tgt, sp.task_ids["cmlm"], langs[side])


def make_mt(pair: ParallelPair, direction: str, sp: SpecialTokens) -> TrainingExample:
    """Plain translation: unchanged source in, unchanged target out.
    `direction` is "ab" or "ba" over the pair's stored sides."""
    if direction not in ("ab", "ba"):
        raise ValueError('direction must be "ab" or "ba"')
    if direction == "ab":
        src, tgt, tgt_lang = pair.sent_a, pair.sent_b, pair.lang_b
    else:
        src, tgt, tgt_lang = pair.sent_b, pair.sent_a, pair.lang_a
    _check_text_ids(src, sp, "mt source")
    _check_text_ids(tgt, sp, "mt target")
    return TrainingExample(list(src), list(tgt), sp.task_ids["mt"], tgt_lang)


def make_summ(pair: SummPair, sp: SpecialTokens) -> TrainingExample:
    """Document in, summary out; monolingual pairs are the ms pretraining
    task, cross-lingual pairs the cls finetuning task."""
    _check_text_ids(pair.doc_ids, sp, "summ document")
    _check_text_ids(pair.summ_ids, sp, "summ summary")
    task = "ms" if pair.doc_lang == pair.summ_lang else "cls"
    return TrainingExample(list(pair.doc_ids), list(pair.summ_ids),
                           sp.task_ids[task], pair.summ_lang)


def control_prefix(task: int, tgt_lang: int, sp: SpecialTokens) -> list[int]:
    """The two forced decoder inputs: task symbol then target language."""
    if task not in sp.task_ids.values():
        raise ValueError(f"unregistered task id {task}")
    if tgt_lang not in sp.lang_ids.values():
        raise ValueError(f"unregistered language id {tgt_lang}")
    return [task, tgt_lang]


def _epoch_iter(items: Sequence, rng: np.random.Generator) -> Iterator:
    """Cycle a finite sequence forever, reshuffling each pass."""
    while True:
        for i in rng.permutation(len(items)):
            yield items[int(i)]


def mix_tasks(sources: Mapping[str, object], weights: MixWeights | Mapping[str, float],
              rng: np.random.Generator) -> Iterator[TrainingExample]:
    """Interleave per-task example streams, drawing each emission's task
    i.i.d. proportional to its weight. Sequences wrap around epoch by epoch
    with a reshuffle; iterators are consumed as given (assumed infinite).
    Task order is fixed, so a fixed seed reproduces the stream exactly.
    """
    wdict = weights.as_dict() if isinstance(weights, MixWeights) else dict(weights)
    tasks = [t for t in TASK_NAMES if wdict.get(t, 0.0) > 0]
    if not tasks:
        raise ValueError("all task weights are zero")
    for t in tasks:
        if t not in sources:
            raise ValueError(f"task {t!r} has positive weight but no stream")
    probs = np.array([wdict[t] for t in tasks], dtype=float)
    probs /= probs.sum()
    cumulative = np.cumsum(probs)
    streams = {}
    for t in tasks:
        src = sources[t]
        if isinstance(src, Sequence):
            child = np.random.default_rng(rng.integers(2 ** 63))
            streams[t] = _epoch_iter(src, child)
        else:
            streams[t] = iter(src)
    while True:
        u = rng.random()
        k = int(np.searchsorted(cumulative, u, side="right"))
        yield next(streams[tasks[min(k, len(tasks) - 1)]])


# -- per-task infinite stream builders (plumbing for the training loop) ----

def mlm_stream(sentences: Sequence[Sequence[int]], lang: int, mask_prob: float,
               rng: np.random.Generator, sp: SpecialTokens) -> Iterator[TrainingExample]:
    for sent in _epoch_iter(sentences, rng):
        yield corrupt_mlm(sent, lang, mask_prob, rng, sp)


def dae_stream(sentences: Sequence[Sequence[int]], lang: int, drop_prob: float,
               mask_prob: float, shuffle_k: int, rng: np.random.Generator,
               sp: SpecialTokens) -> Iterator[TrainingExample]:
    for sent in _epoch_iter(sentences, rng):
        yield corrupt_dae(sent, lang, drop_prob, mask_prob, shuffle_k, rng, sp)


def cmlm_stream(pairs: Sequence[ParallelPair], mask_prob: float,
                rng: np.random.Generator, sp: SpecialTokens) -> Iterator[TrainingExample]:
    for pair in _epoch_iter(pairs, rng):
        yield make_cmlm(pair, mask_prob, rng, sp)


def mt_stream(pairs: Sequence[ParallelPair], rng: np.random.Generator,
              sp: SpecialTokens) -> Iterator[TrainingExample]:
    for pair in _epoch_iter(pairs, rng):
        yield make_mt(pair, "ab" if rng.integers(2) == 0 else "ba", sp)


def summ_stream(pairs: Sequence[SummPair], rng: np.random.Generator,
                sp: SpecialTokens) -> Iterator[TrainingExample]:
    for pair in _epoch_iter(pairs, rng):
        yield make_summ(pair, sp)
