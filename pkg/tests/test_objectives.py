import numpy as np
import pytest

from mixsum.objectives import (MixWeights, ParallelPair, SummPair, cmlm_stream,
                               control_prefix, corrupt_dae, corrupt_mlm,
                               dae_stream, make_cmlm, make_mt, make_summ,
                               mix_tasks, mlm_stream, mt_stream, summ_stream)
from mixsum.vocab import SpecialTokens

SP = SpecialTokens.build()
BASE = SP.reserved_size  # plain text ids live at and above this
SENTINELS = set(SP.sentinel_ids)


def toks(*vals):
    return [BASE + v for v in vals]


# -- independent oracles -----------------------------------------------------

def oracle_mlm(tokens, mask_prob, seed):
    """Straight-line re-implementation of select-then-merge span masking,
    consuming the generator the same way (one random vector)."""
    rng = np.random.default_rng(seed)
    sel = rng.random(len(tokens)) < mask_prob
    src, tgt, k, i = [], [], 0, 0
    while i < len(tokens):
        if sel[i]:
            s = SP.sentinel_ids[k]
            k += 1
            src.append(s)
            tgt.append(s)
            while i < len(tokens) and sel[i]:
                tgt.append(tokens[i])
                i += 1
        else:
            src.append(tokens[i])
            i += 1
    return src, tgt


def oracle_dae(tokens, drop_prob, mask_prob, shuffle_k, seed):
    rng = np.random.default_rng(seed)
    n = len(tokens)
    keep = rng.random(n) >= drop_prob
    if not keep.any():
        keep[rng.integers(n)] = True
    kept = [t for t, k in zip(tokens, keep) if k]
    masked = rng.random(len(kept)) < mask_prob
    corrupted = [SP.shared_mask_id if m else t for t, m in zip(kept, masked)]
    jitter = rng.random(len(kept)) * (shuffle_k + 1)
    order = np.argsort(np.arange(len(kept)) + jitter, kind="stable")
    return [corrupted[i] for i in order], order


def reconstruct(src, tgt):
    """Substitute every sentinel in src by its target span."""
    spans, cur = {}, None
    for t in tgt:
        if t in SENTINELS:
            cur = t
            spans[cur] = []
        else:
            spans[cur].append(t)
    out = []
    for t in src:
        if t in SENTINELS:
            out.extend(spans[t])
        else:
            out.append(t)
    return out


# -- corrupt_mlm -------------------------------------------------------------

def test_mlm_fixed_selection_hand_case():
    tokens = toks(0, 1, 2, 3, 4)
    sel = np.array([False, True, True, False, True])
    ex = corrupt_mlm(tokens, SP.lang_ids["en"], 0.5, np.random.default_rng(0), SP,
                     selection=sel)
    s0, s1 = SP.sentinel_ids[0], SP.sentinel_ids[1]
    assert ex.src_ids == [tokens[0], s0, tokens[3], s1]
    assert ex.tgt_ids == [s0, tokens[1], tokens[2], s1, tokens[4]]
    assert ex.task == SP.task_ids["mlm"]
    assert ex.tgt_lang == SP.lang_ids["en"]


def test_mlm_zero_prob_identity():
    tokens = toks(5, 6, 7)
    ex = corrupt_mlm(tokens, SP.lang_ids["en"], 0.0, np.random.default_rng(1), SP)
    assert ex.src_ids == tokens
    assert ex.tgt_ids == []


def test_mlm_matches_oracle_stream():
    tokens = toks(*range(20))
    for seed in range(50):
        ex = corrupt_mlm(tokens, SP.lang_ids["en"], 0.15,
                         np.random.default_rng(seed), SP)
        src, tgt = oracle_mlm(tokens, 0.15, seed)
        assert ex.src_ids == src
        assert ex.tgt_ids == tgt


def test_mlm_reconstruction_and_sentinel_order():
    tokens = toks(*range(40))
    for seed in range(200):
        ex = corrupt_mlm(tokens, SP.lang_ids["en"], 0.3,
                         np.random.default_rng(seed), SP)
        assert reconstruct(ex.src_ids, ex.tgt_ids) == tokens
        src_sent = [t for t in ex.src_ids if t in SENTINELS]
        tgt_sent = [t for t in ex.tgt_ids if t in SENTINELS]
        assert src_sent == sorted(src_sent) == tgt_sent
        assert src_sent == list(SP.sentinel_ids[:len(src_sent)])


def test_mlm_too_many_spans():
    tokens = toks(*range(250))
    sel = np.array([i % 2 == 1 for i in range(250)])  # 125 isolated spans
    with pytest.raises(ValueError, match="sentinel"):
        corrupt_mlm(tokens, SP.lang_ids["en"], 0.5, np.random.default_rng(0), SP,
                    selection=sel)


def test_mlm_rejects_empty_and_special_input():
    rng = np.random.default_rng(0)
    with pytest.raises(ValueError):
        corrupt_mlm([], SP.lang_ids["en"], 0.15, rng, SP)
    with pytest.raises(ValueError, match="control"):
        corrupt_mlm([SP.pad_id], SP.lang_ids["en"], 0.15, rng, SP)


def test_mlm_deterministic():
    tokens = toks(*range(15))
    a = corrupt_mlm(tokens, SP.lang_ids["en"], 0.2, np.random.default_rng(9), SP)
    b = corrupt_mlm(tokens, SP.lang_ids["en"], 0.2, np.random.default_rng(9), SP)
    assert a == b


# -- corrupt_dae -------------------------------------------------------------

def test_dae_identity_corruption():
    tokens = toks(1, 2, 3, 4)
    ex = corrupt_dae(tokens, SP.lang_ids["en"], 0.0, 0.0, 0,
                     np.random.default_rng(3), SP)
    assert ex.src_ids == tokens
    assert ex.tgt_ids == tokens
    assert ex.task == SP.task_ids["dae"]


def test_dae_fixed_selection_hand_case():
    # drop the 4th token, mask the 1st and 3rd: [a b c d] -> [<M> b <M>]
    tokens = toks(0, 1, 2, 3)
    ex = corrupt_dae(tokens, SP.lang_ids["en"], 0.0, 0.0, 0,
                     np.random.default_rng(0), SP,
                     drop_selection=np.array([False, False, False, True]),
                     mask_selection=np.array([True, False, True, False]))
    assert ex.src_ids == [SP.shared_mask_id, tokens[1], SP.shared_mask_id]
    assert ex.tgt_ids == tokens


def test_dae_target_is_pristine_original():
    tokens = toks(*range(12))
    for seed in range(100):
        ex = corrupt_dae(tokens, SP.lang_ids["en"], 0.4, 0.4, 3,
                         np.random.default_rng(seed), SP)
        assert ex.tgt_ids == tokens
        assert len(ex.src_ids) >= 1


def test_dae_matches_oracle_stream():
    tokens = toks(*range(18))
    for seed in range(50):
        ex = corrupt_dae(tokens, SP.lang_ids["en"], 0.1, 0.1, 3,
                         np.random.default_rng(seed), SP)
        src, _ = oracle_dae(tokens, 0.1, 0.1, 3, seed)
        assert ex.src_ids == src


def test_dae_bounded_shuffle_displacement():
    tokens = toks(*range(1, 11))
    for seed in range(200):
        ex = corrupt_dae(tokens, SP.lang_ids["en"], 0.0, 0.0, 3,
                         np.random.default_rng(seed), SP)
        assert sorted(ex.src_ids) == sorted(tokens)
        _, order = oracle_dae(tokens, 0.0, 0.0, 3, seed)
        assert ex.src_ids == [tokens[i] for i in order]
        for new_pos, old_pos in enumerate(order):
            assert abs(new_pos - old_pos) <= 3


def test_dae_never_emits_empty_source():
    tokens = toks(4, 5)
    for seed in range(100):
        ex = corrupt_dae(tokens, SP.lang_ids["en"], 1.0, 0.0, 0,
                         np.random.default_rng(seed), SP)
        assert len(ex.src_ids) == 1
        assert ex.src_ids[0] in tokens


# -- make_cmlm ---------------------------------------------------------------

def _pair():
    return ParallelPair(SP.lang_ids["en"], SP.lang_ids["zh"],
                        toks(10, 11, 12, 13), toks(20, 21, 22))


def test_cmlm_fixed_side_and_selection():
    ex = make_cmlm(_pair(), 0.5, np.random.default_rng(0), SP, side=1,
                   selection=np.array([True, False, False]))
    s0 = SP.sentinel_ids[0]
    assert ex.src_ids == toks(10, 11, 12, 13) + [SP.separator_id, s0] + toks(21, 22)
    assert ex.tgt_ids == [s0] + toks(20)
    assert ex.tgt_lang == SP.lang_ids["zh"]
    assert ex.task == SP.task_ids["cmlm"]


def test_cmlm_exactly_one_side_masked():
    pair = _pair()
    for seed in range(300):
        ex = make_cmlm(pair, 0.3, np.random.default_rng(seed), SP)
        sep_at = ex.src_ids.index(SP.separator_id)
        left, right = ex.src_ids[:sep_at], ex.src_ids[sep_at + 1:]
        left_has = any(t in SENTINELS for t in left)
        right_has = any(t in SENTINELS for t in right)
        assert left_has != right_has
        intact, original, masked_orig = (
            (right, pair.sent_b, pair.sent_a) if left_has
            else (left, pair.sent_a, pair.sent_b))
        assert intact == original
        masked_side = left if left_has else right
        assert reconstruct(masked_side, ex.tgt_ids) == masked_orig
        assert ex.tgt_lang == (pair.lang_a if left_has else pair.lang_b)


def test_cmlm_side_choice_is_balanced():
    pair = _pair()
    rng = np.random.default_rng(42)
    n = 10_000
    first = 0
    for _ in range(n):
        ex = make_cmlm(pair, 0.3, rng, SP)
        if ex.tgt_lang == pair.lang_a:
            first += 1
    sigma = (n * 0.25) ** 0.5
    assert abs(first - n / 2) <= 3 * sigma


# -- make_mt / make_summ -----------------------------------------------------

def test_mt_directions():
    pair = _pair()
    ab = make_mt(pair, "ab", SP)
    assert ab.src_ids == pair.sent_a and ab.tgt_ids == pair.sent_b
    assert ab.tgt_lang == pair.lang_b and ab.task == SP.task_ids["mt"]
    ba = make_mt(pair, "ba", SP)
    assert ba.src_ids == pair.sent_b and ba.tgt_ids == pair.sent_a
    assert ba.tgt_lang == pair.lang_a


def test_mt_degenerate_equal_sides():
    pair = ParallelPair(SP.lang_ids["en"], SP.lang_ids["zh"], toks(1, 2), toks(1, 2))
    ex = make_mt(pair, "ab", SP)
    assert ex.src_ids == ex.tgt_ids


def test_mt_token_mapped_bijection():
    shift = 500
    sent = toks(3, 1, 4, 1, 5)
    pair = ParallelPair(SP.lang_ids["syna"], SP.lang_ids["synb"],
                        sent, [t + shift for t in sent])
    ex = make_mt(pair, "ab", SP)
    assert ex.tgt_ids == [t + shift for t in ex.src_ids]


def test_summ_task_split():
    mono = SummPair(SP.lang_ids["en"], SP.lang_ids["en"], toks(1, 2, 3), toks(1))
    cross = SummPair(SP.lang_ids["en"], SP.lang_ids["zh"], toks(1, 2, 3), toks(9))
    assert make_summ(mono, SP).task == SP.task_ids["ms"]
    assert make_summ(cross, SP).task == SP.task_ids["cls"]
    assert make_summ(cross, SP).tgt_lang == SP.lang_ids["zh"]


def test_summ_identity_pair():
    pair = SummPair(SP.lang_ids["en"], SP.lang_ids["en"], toks(7, 8), toks(7, 8))
    ex = make_summ(pair, SP)
    assert ex.src_ids == ex.tgt_ids


def test_pair_invariants():
    with pytest.raises(ValueError):
        ParallelPair(SP.lang_ids["en"], SP.lang_ids["en"], toks(1), toks(2))
    with pytest.raises(ValueError):
        ParallelPair(SP.lang_ids["en"], SP.lang_ids["zh"], [], toks(2))
    with pytest.raises(ValueError):
        SummPair(SP.lang_ids["en"], SP.lang_ids["zh"], toks(1), [])


# -- control_prefix ----------------------------------------------------------

def test_control_prefix_examples():
    assert control_prefix(SP.task_ids["cmlm"], SP.lang_ids["zh"], SP) == \
        [SP.task_ids["cmlm"], SP.lang_ids["zh"]]
    assert control_prefix(SP.task_ids["mt"], SP.lang_ids["en"], SP) == \
        [SP.task_ids["mt"], SP.lang_ids["en"]]


def test_control_prefix_rejects_unregistered():
    with pytest.raises(ValueError):
        control_prefix(SP.pad_id, SP.lang_ids["en"], SP)
    with pytest.raises(ValueError):
        control_prefix(SP.task_ids["mt"], SP.pad_id, SP)


# -- mix_tasks ---------------------------------------------------------------

def _sources():
    rng = np.random.default_rng(11)
    sents = [toks(*rng.integers(0, 50, size=8)) for _ in range(20)]
    pairs = [ParallelPair(SP.lang_ids["syna"], SP.lang_ids["synb"],
                          toks(*rng.integers(0, 50, size=6)),
                          toks(*rng.integers(50, 99, size=6))) for _ in range(10)]
    summs = [SummPair(SP.lang_ids["syna"], SP.lang_ids["syna"],
                      toks(*rng.integers(0, 50, size=10)),
                      toks(*rng.integers(0, 50, size=3))) for _ in range(10)]
    def build(seed):
        r = np.random.default_rng(seed)
        return {
            "mlm": mlm_stream(sents, SP.lang_ids["syna"], 0.15, r, SP),
            "dae": dae_stream(sents, SP.lang_ids["syna"], 0.1, 0.1, 3, r, SP),
            "ms": summ_stream(summs, r, SP),
            "cmlm": cmlm_stream(pairs, 0.15, r, SP),
            "mt": mt_stream(pairs, r, SP),
        }
    return build


def test_mix_single_task_only():
    build = _sources()
    stream = mix_tasks(build(0), {"mlm": 1.0}, np.random.default_rng(1))
    for _ in range(200):
        assert next(stream).task == SP.task_ids["mlm"]


def test_mix_uniform_chi_square():
    build = _sources()
    stream = mix_tasks(build(0), MixWeights(), np.random.default_rng(2))
    n = 10_000
    counts = {}
    for _ in range(n):
        ex = next(stream)
        counts[ex.task] = counts.get(ex.task, 0) + 1
    expected = n / 5
    chi2 = sum((c - expected) ** 2 / expected for c in counts.values())
    assert len(counts) == 5
    assert chi2 < 13.2767  # chi-square critical value, df=4, alpha=0.01


def test_mix_weighted_three_to_one():
    build = _sources()
    stream = mix_tasks(build(0), {"mt": 3.0, "mlm": 1.0}, np.random.default_rng(3))
    n = 10_000
    mt = sum(next(stream).task == SP.task_ids["mt"] for _ in range(n))
    sigma = (n * 0.75 * 0.25) ** 0.5
    assert abs(mt - 0.75 * n) <= 3 * sigma


def test_mix_rejects_zero_weights_and_missing_stream():
    build = _sources()
    with pytest.raises(ValueError):
        next(mix_tasks(build(0), {"mlm": 0.0}, np.random.default_rng(0)))
    with pytest.raises(ValueError):
        next(mix_tasks({}, {"mlm": 1.0}, np.random.default_rng(0)))


def test_mix_deterministic_and_prefix_consistent():
    build = _sources()
    task_names = {v: k for k, v in SP.task_ids.items()}
    runs = []
    for _ in range(2):
        stream = mix_tasks(build(7), MixWeights(), np.random.default_rng(7))
        runs.append([next(stream) for _ in range(1000)])
    assert runs[0] == runs[1]
    for ex in runs[0]:
        assert control_prefix(ex.task, ex.tgt_lang, SP) == [ex.task, ex.tgt_lang]
        assert task_names[ex.task] in ("mlm", "dae", "ms", "cmlm", "mt")
        assert SP.pad_id not in ex.src_ids and SP.pad_id not in ex.tgt_ids
