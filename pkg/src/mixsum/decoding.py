"""Control-token-conditioned beam search.

Hypotheses start as [task, lang, bos] and grow one vocabulary token per
step. Scores are accumulated full-vocabulary log-probabilities; ranking
uses score / len^alpha over the generated tokens (eos included once
emitted). Control ids (task, language, bos, pad, unk, separator, <M>) are
never generated; sentinels are additionally banned unless the task is
mlm or cmlm, whose targets legitimately contain them. Ties break toward
the lexicographically smaller id sequence, so decoding is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import Tensor
from .model import (ModelParams, build_param_tensors, causal_bias,
                    decode_stack, encode_stack, output_logits,
                    padding_bias, _embed)
from .objectives import control_prefix
from .vocab import SpecialTokens


@dataclass
class Hypothesis:
    ids: list[int]
    logprob: float
    finished: bool

    def generated(self, prefix_len: int = 3) -> list[int]:
        return self.ids[prefix_len:]


def _banned_ids(sp: SpecialTokens, task: int, extra: Sequence[int]) -> set[int]:
    banned = {sp.pad_id, sp.unk_id, sp.bos_id, sp.separator_id, sp.shared_mask_id}
    banned.update(sp.task_ids.values())
    banned.update(sp.lang_ids.values())
    if task not in (sp.task_ids["mlm"], sp.task_ids["cmlm"]):
        banned.update(sp.sentinel_ids)
    banned.update(extra)
    banned.discard(sp.eos_id)
    return banned


def _score(h: Hypothesis, alpha: float) -> float:
    n = max(1, len(h.ids) - 3)
    return h.logprob / n ** alpha


def _rank_key(h: Hypothesis, alpha: float):
    return (-_score(h, alpha), tuple(h.ids))


def beam_search(params: ModelParams, src_ids: Sequence[int], task: int,
                tgt_lang: int, sp: SpecialTokens, beam_size: int = 6,
                max_len: int = 200, length_alpha: float = 1.0,
                banned_ids: Sequence[int] = ()) -> list[Hypothesis]:
    """Ranked hypotheses for one source sequence. `max_len` counts generated
    tokens only; the 3-token control prefix is excluded."""
    if beam_size < 1 or max_len < 1:
        raise ValueError("beam_size and max_len must be >= 1")
    prefix = control_prefix(task, tgt_lang, sp) + [sp.bos_id]
    cfg = params.config
    if len(prefix) + max_len > cfg.max_positions:
        raise ValueError(f"prefix + max_len exceeds max_positions {cfg.max_positions}")

    banned = np.array(sorted(_banned_ids(sp, task, banned_ids)), dtype=np.int64)
    banned = banned[banned < cfg.vocab_size]

    pt = build_param_tensors(params, requires_grad=False)
    src = np.asarray(src_ids, dtype=np.int64)[None, :]
    src_bias = padding_bias(src, sp.pad_id)
    enc = encode_stack(pt, cfg, _embed(pt, src, cfg, False, None), src_bias)
    enc_data = enc.data

    beams = [Hypothesis(list(prefix), 0.0, False)]
    for _ in range(max_len):
        active = [h for h in beams if not h.finished]
        if not active:
            break
        t = len(active[0].ids)
        dec_in = np.array([h.ids for h in active], dtype=np.int64)
        enc_rep = Tensor(np.broadcast_to(enc_data, (len(active),) + enc_data.shape[1:]))
        dec = decode_stack(pt, cfg, _embed(pt, dec_in, cfg, False, None),
                           enc_rep, causal_bias(t), src_bias)
        logits = output_logits(dec, pt["embed"]).data[:, -1, :]
        shifted = logits - logits.max(axis=-1, keepdims=True)
        logprobs = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
        logprobs[:, banned] = -np.inf

        candidates = [h for h in beams if h.finished]
        for row, h in enumerate(active):
            # only the top beam_size expansions of a beam can survive the
            # ranking; stable sort on -logprob keeps lower token ids first
            top = np.argsort(-logprobs[row], kind="stable")[: beam_size + 1]
            for token in top:
                lp = logprobs[row, token]
                if lp == -np.inf:
                    continue
                candidates.append(Hypothesis(h.ids + [int(token)],
                                             h.logprob + float(lp),
                                             int(token) == sp.eos_id))
        candidates.sort(key=lambda h: _rank_key(h, length_alpha))
        beams = candidates[:beam_size]
    return sorted(beams, key=lambda h: _rank_key(h, length_alpha))


def greedy_decode(params: ModelParams, src_ids: Sequence[int], task: int,
                  tgt_lang: int, sp: SpecialTokens, max_len: int = 200,
                  banned_ids: Sequence[int] = ()) -> Hypothesis:
    return beam_search(params, src_ids, task, tgt_lang, sp, beam_size=1,
                       max_len=max_len, length_alpha=0.0,
                       banned_ids=banned_ids)[0]


def decode_corpus(params: ModelParams, sources: Sequence[Sequence[int]],
                  task: int, tgt_lang: int, sp: SpecialTokens,
                  beam_size: int = 6, max_len: int = 200,
                  length_alpha: float = 1.0) -> list[Hypothesis]:
    """Best hypothesis per source, order preserved."""
    out = []
    for src in sources:
        best = beam_search(params, src, task, tgt_lang, sp, beam_size,
                           max_len, length_alpha)[0]
        out.append(best)
    return out
