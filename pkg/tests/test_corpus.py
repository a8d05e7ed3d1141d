import json
import math

import numpy as np
import pytest

from mixsum.corpus import (CorpusRecord, SyntheticSpec, generate_synthetic,
                           load_corpus, save_bundle, save_corpus, subsample)


def _parallel(i):
    return CorpusRecord("parallel", f"p-{i}", {
        "lang_a": "syna", "lang_b": "synb",
        "text_a": f"a{i} a{i+1}", "text_b": f"b{i} b{i+1}"})


# -- records and IO -----------------------------------------------------------

def test_record_validation():
    with pytest.raises(ValueError, match="kind"):
        CorpusRecord("nonsense", "x", {})
    with pytest.raises(ValueError, match="text"):
        CorpusRecord("mono", "x", {"lang": "en", "text": ""})
    with pytest.raises(ValueError, match="languages"):
        CorpusRecord("parallel", "x", {"lang_a": "en", "lang_b": "en",
                                       "text_a": "t", "text_b": "t"})


def test_empty_file_yields_empty_stream(tmp_path):
    p = tmp_path / "empty.jsonl"
    p.write_text("", encoding="utf-8")
    diags = []
    assert list(load_corpus(p, strict=False, diagnostics=diags)) == []
    assert diags == []


def test_roundtrip_order_and_count(tmp_path):
    records = [_parallel(i) for i in range(3)]
    p = tmp_path / "par.jsonl"
    save_corpus(p, records)
    loaded = list(load_corpus(p, expected_kind="parallel"))
    assert loaded == records


def test_malformed_line_strict_and_lenient(tmp_path):
    records = [_parallel(i) for i in range(100)]
    p = tmp_path / "par.jsonl"
    save_corpus(p, records)
    lines = p.read_text(encoding="utf-8").splitlines()
    lines[41] = "{not json"
    p.write_text("\n".join(lines) + "\n", encoding="utf-8")

    with pytest.raises(ValueError, match="line 42"):
        list(load_corpus(p))

    diags = []
    loaded = list(load_corpus(p, strict=False, diagnostics=diags))
    assert len(loaded) == 99
    assert len(diags) == 1 and "line 42" in diags[0]


def test_kind_mismatch_is_an_error(tmp_path):
    p = tmp_path / "x.jsonl"
    save_corpus(p, [_parallel(0)])
    with pytest.raises(ValueError, match="expected 'mono'"):
        list(load_corpus(p, expected_kind="mono"))


def test_version_mismatch_rejected(tmp_path):
    p = tmp_path / "x.jsonl"
    payload = {"v": 99, "kind": "mono", "id": "m", "lang": "en", "text": "hi"}
    p.write_text(json.dumps(payload) + "\n", encoding="utf-8")
    with pytest.raises(ValueError, match="version"):
        list(load_corpus(p))


# -- subsample ------------------------------------------------------------------

def test_subsample_identity_preserves_order():
    records = list(range(50))
    assert subsample(records, 50, seed=3) == records


def test_subsample_exact_sizes():
    records = list(range(100_000))
    for n in (1_000, 10_000):
        out = subsample(records, n, seed=1)
        assert len(out) == n
        assert out == sorted(out)  # original order preserved
        assert len(set(out)) == n


def test_subsample_deterministic_per_seed():
    records = list(range(500))
    assert subsample(records, 100, 7) == subsample(records, 100, 7)
    assert subsample(records, 100, 7) != subsample(records, 100, 8)


def test_subsample_bounds():
    with pytest.raises(ValueError):
        subsample([1, 2], 3, 0)
    assert subsample([1, 2], 0, 0) == []


def test_subsample_overlap_matches_hypergeometric():
    n_total, n = 10_000, 1_000
    records = list(range(n_total))
    a = set(subsample(records, n, seed=1))
    b = set(subsample(records, n, seed=2))
    overlap = len(a & b)
    expected = n * n / n_total
    var = n * (n / n_total) * (1 - n / n_total) * (n_total - n) / (n_total - 1)
    assert abs(overlap - expected) <= 3 * math.sqrt(var)


# -- synthetic generation ----------------------------------------------------------

@pytest.fixture(scope="module")
def bundle():
    return generate_synthetic(SyntheticSpec(), np.random.default_rng(123))


def test_synthetic_sizes(bundle):
    spec = SyntheticSpec()
    assert len(bundle.mono_a) == spec.n_mono
    assert len(bundle.mono_b) == spec.n_mono
    assert len(bundle.parallel) == spec.n_parallel
    assert len(bundle.cls_train) == spec.n_cls_train
    assert len(bundle.cls_test) == spec.n_cls_test


def test_synthetic_monolingual_summaries_are_lead_k(bundle):
    k = bundle.oracle["lead_k"]
    for rec in bundle.summ_a + bundle.summ_b:
        assert rec["summary"].split() == rec["doc"].split()[:k]


def test_synthetic_parallel_follows_bijection(bundle):
    bij = bundle.oracle["bijection"]
    for rec in bundle.parallel:
        assert rec["text_b"].split() == [bij[w] for w in rec["text_a"].split()]


def test_synthetic_cls_composes_bijection_and_lead(bundle):
    bij = bundle.oracle["bijection"]
    k = bundle.oracle["lead_k"]
    for rec in bundle.cls_train + bundle.cls_test:
        expected = [bij[w] for w in rec["doc"].split()[:k]]
        assert rec["summary"].split() == expected


def test_synthetic_alphabets_disjoint(bundle):
    a_words = {w for r in bundle.mono_a for w in r["text"].split()}
    b_words = {w for r in bundle.mono_b for w in r["text"].split()}
    assert a_words.isdisjoint(b_words)
    assert all(w.startswith("a") for w in a_words)
    assert all(w.startswith("b") for w in b_words)


def test_synthetic_deterministic():
    a = generate_synthetic(SyntheticSpec(), np.random.default_rng(9))
    b = generate_synthetic(SyntheticSpec(), np.random.default_rng(9))
    assert a.mono_a == b.mono_a
    assert a.cls_test == b.cls_test
    assert a.oracle == b.oracle


def test_spec_validation():
    with pytest.raises(ValueError):
        SyntheticSpec(lead_k=0)
    with pytest.raises(ValueError):
        SyntheticSpec(doc_len=(2, 5), lead_k=3)


def test_save_bundle_files_roundtrip(bundle, tmp_path):
    files = save_bundle(bundle, tmp_path / "synth")
    loaded = list(load_corpus(files["cls_test"], expected_kind="summ"))
    assert loaded == bundle.cls_test
    oracle = json.loads(open(files["oracle"], encoding="utf-8").read())
    assert oracle["lead_k"] == bundle.oracle["lead_k"]
