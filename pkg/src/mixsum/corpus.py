"""Line-delimited corpora: readers, writers, deterministic subsampling and
synthetic bilingual generation.

Every record is one self-contained JSON line carrying a format-version key
"v" plus kind-specific fields:

    mono      {"v": 1, "kind": "mono", "id", "lang", "text"}
    parallel  {"v": 1, "kind": "parallel", "id", "lang_a", "lang_b",
               "text_a", "text_b"}
    summ      {"v": 1, "kind": "summ", "id", "doc_lang", "summ_lang",
               "doc", "summary"}

Synthetic corpora use two word inventories with disjoint surface forms
(a0..aN vs b0..bN); language B is the image of language A under a seeded
word bijection, summaries are the first `lead_k` words of their document,
and cross-lingual summaries compose the two rules. The generating rules are
returned as oracle metadata so tests can check any derived artifact against
the ground truth.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

RECORD_VERSION = 1

_REQUIRED_FIELDS = {
    "mono": ("lang", "text"),
    "parallel": ("lang_a", "lang_b", "text_a", "text_b"),
    "summ": ("doc_lang", "summ_lang", "doc", "summary"),
}


@dataclass(frozen=True)
class CorpusRecord:
    kind: str
    id: str
    fields: dict[str, str]

    def __post_init__(self):
        if self.kind not in _REQUIRED_FIELDS:
            raise ValueError(f"unknown record kind {self.kind!r}")
        for key in _REQUIRED_FIELDS[self.kind]:
            value = self.fields.get(key)
            if not isinstance(value, str) or not value:
                raise ValueError(f"{self.kind} record {self.id!r}: field "
                                 f"{key!r} missing or empty")
        if self.kind == "parallel" and self.fields["lang_a"] == self.fields["lang_b"]:
            raise ValueError(f"parallel record {self.id!r} languages must differ")

    def __getitem__(self, key: str) -> str:
        return self.fields[key]


def save_corpus(path, records: Sequence[CorpusRecord]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            payload = {"v": RECORD_VERSION, "kind": r.kind, "id": r.id, **r.fields}
            f.write(json.dumps(payload, ensure_ascii=False, sort_keys=True) + "\n")


def load_corpus(path, expected_kind: str | None = None, strict: bool = True,
                diagnostics: list[str] | None = None) -> Iterator[CorpusRecord]:
    """Stream records from a corpus file.

    strict=True raises on the first malformed line; strict=False skips it
    and appends a located message to `diagnostics` instead.
    """
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
                if raw.get("v") != RECORD_VERSION:
                    raise ValueError(f"record version {raw.get('v')!r} unsupported")
                kind = raw.pop("kind", None)
                if expected_kind and kind != expected_kind:
                    raise ValueError(f"kind {kind!r}, expected {expected_kind!r}")
                rid = raw.pop("id", None)
                raw.pop("v")
                record = CorpusRecord(kind, rid, raw)
            except (json.JSONDecodeError, ValueError, TypeError, AttributeError) as exc:
                message = f"{path}, line {lineno}: {exc}"
                if strict:
                    raise ValueError(message) from exc
                if diagnostics is not None:
                    diagnostics.append(message)
                continue
            yield record


def subsample(records: Sequence, n: int, seed: int) -> list:
    """Uniform sample of n records without replacement, original order kept."""
    if not 0 <= n <= len(records):
        raise ValueError(f"cannot take {n} of {len(records)} records")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(records), size=n, replace=False))
    return [records[int(i)] for i in idx]


# -- synthetic corpora ---------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Sizing and rule knobs for the synthetic bilingual corpora."""

    alphabet_size: int = 40
    sent_len: tuple[int, int] = (5, 12)
    doc_len: tuple[int, int] = (8, 16)
    lead_k: int = 4
    n_mono: int = 400          # per language
    n_parallel: int = 400
    n_summ: int = 300          # per language
    n_cls_train: int = 300
    n_cls_test: int = 64
    lang_a: str = "syna"
    lang_b: str = "synb"

    def __post_init__(self):
        if self.alphabet_size < 2:
            raise ValueError("alphabet_size must be >= 2")
        if self.lead_k < 1:
            raise ValueError("lead_k must be >= 1")
        if self.doc_len[0] < self.lead_k:
            raise ValueError("documents must be at least lead_k words long")
        if min(self.n_mono, self.n_parallel, self.n_summ,
               self.n_cls_train, self.n_cls_test) < 1:
            raise ValueError("all corpus sizes must be >= 1")


@dataclass
class SyntheticBundle:
    mono_a: list[CorpusRecord]
    mono_b: list[CorpusRecord]
    parallel: list[CorpusRecord]
    summ_a: list[CorpusRecord]
    summ_b: list[CorpusRecord]
    cls_train: list[CorpusRecord]
    cls_test: list[CorpusRecord]
    oracle: dict = field(default_factory=dict)


def _words(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(n)]


def generate_synthetic(spec: SyntheticSpec, rng: np.random.Generator) -> SyntheticBundle:
    """Build the full corpora bundle plus its oracle metadata."""
    vocab_a = _words("a", spec.alphabet_size)
    vocab_b = _words("b", spec.alphabet_size)
    perm = rng.permutation(spec.alphabet_size)
    bijection = {vocab_a[i]: vocab_b[int(perm[i])] for i in range(spec.alphabet_size)}

    def translate(text: str) -> str:
        return " ".join(bijection[w] for w in text.split())

    def lead(text: str) -> str:
        return " ".join(text.split()[: spec.lead_k])

    def sentence(lo: int, hi: int) -> str:
        n = int(rng.integers(lo, hi + 1))
        return " ".join(vocab_a[int(i)] for i in rng.integers(0, spec.alphabet_size, n))

    mono_a = [CorpusRecord("mono", f"ma-{i}", {
        "lang": spec.lang_a, "text": sentence(*spec.sent_len)})
        for i in range(spec.n_mono)]
    mono_b = [CorpusRecord("mono", f"mb-{i}", {
        "lang": spec.lang_b, "text": translate(sentence(*spec.sent_len))})
        for i in range(spec.n_mono)]
    parallel = []
    for i in range(spec.n_parallel):
        a = sentence(*spec.sent_len)
        parallel.append(CorpusRecord("parallel", f"p-{i}", {
            "lang_a": spec.lang_a, "lang_b": spec.lang_b,
            "text_a": a, "text_b": translate(a)}))
    summ_a, summ_b = [], []
    for i in range(spec.n_summ):
        doc = sentence(*spec.doc_len)
        summ_a.append(CorpusRecord("summ", f"sa-{i}", {
            "doc_lang": spec.lang_a, "summ_lang": spec.lang_a,
            "doc": doc, "summary": lead(doc)}))
        doc_b = translate(sentence(*spec.doc_len))
        summ_b.append(CorpusRecord("summ", f"sb-{i}", {
            "doc_lang": spec.lang_b, "summ_lang": spec.lang_b,
            "doc": doc_b, "summary": " ".join(doc_b.split()[: spec.lead_k])}))

    def cls_record(tag: str, i: int) -> CorpusRecord:
        doc = sentence(*spec.doc_len)
        return CorpusRecord("summ", f"{tag}-{i}", {
            "doc_lang": spec.lang_a, "summ_lang": spec.lang_b,
            "doc": doc, "summary": translate(lead(doc))})

    cls_train = [cls_record("ct", i) for i in range(spec.n_cls_train)]
    cls_test = [cls_record("cx", i) for i in range(spec.n_cls_test)]

    oracle = {"bijection": bijection, "lead_k": spec.lead_k,
              "lang_a": spec.lang_a, "lang_b": spec.lang_b}
    return SyntheticBundle(mono_a, mono_b, parallel, summ_a, summ_b,
                           cls_train, cls_test, oracle)


def load_bundle(in_dir) -> SyntheticBundle:
    """Read a bundle previously written by save_bundle."""
    from pathlib import Path

    src = Path(in_dir)
    parts = {}
    kinds = {"mono_a": "mono", "mono_b": "mono", "parallel": "parallel",
             "summ_a": "summ", "summ_b": "summ", "cls_train": "summ",
             "cls_test": "summ"}
    for name, kind in kinds.items():
        parts[name] = list(load_corpus(src / f"{name}.jsonl", expected_kind=kind))
    oracle_path = src / "oracle.json"
    oracle = {}
    if oracle_path.exists():
        with open(oracle_path, encoding="utf-8") as f:
            oracle = json.load(f)
    return SyntheticBundle(oracle=oracle, **parts)


def save_bundle(bundle: SyntheticBundle, out_dir) -> dict[str, str]:
    """Write every corpus of the bundle plus the oracle metadata; returns
    the file map."""
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for name in ("mono_a", "mono_b", "parallel", "summ_a", "summ_b",
                 "cls_train", "cls_test"):
        path = out / f"{name}.jsonl"
        save_corpus(path, getattr(bundle, name))
        files[name] = str(path)
    oracle_path = out / "oracle.json"
    with open(oracle_path, "w", encoding="utf-8") as f:
        json.dump(bundle.oracle, f, indent=2, sort_keys=True)
    files["oracle"] = str(oracle_path)
    return files
