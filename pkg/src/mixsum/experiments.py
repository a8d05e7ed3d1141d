"""Experiment orchestration: pretrain -> finetune -> decode -> score
pipelines, the objective-removal ablation grid and the low-resource curve.

Every run is a pure function of (plan, seed, corpora): the shared vocabulary
is trained deterministically from the monolingual corpora, stream seeds
derive from the run seed, and all artifacts (config snapshot, metrics,
checkpoints, decoded outputs, scores, manifest) land in one run directory.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .corpus import SyntheticBundle, subsample
from .decoding import beam_search
from .model import (ModelConfig, ModelParams, init_params, load_checkpoint,
                    save_checkpoint)
from .objectives import (ParallelPair, SummPair, cmlm_stream, dae_stream,
                         mix_tasks, mlm_stream, mt_stream, summ_stream)
from .rouge import corpus_rouge
from .training import (BatchSpec, ScheduleConfig, run_training)
from .vocab import TASK_NAMES, SpecialTokens, Vocabulary, train_vocab

PRETRAIN_TASKS = ("mlm", "dae", "ms", "cmlm", "mt")

ABLATION_ROWS = (
    ("full", PRETRAIN_TASKS),
    ("-MS", ("mlm", "dae", "cmlm", "mt")),
    ("-MT", ("mlm", "dae", "ms", "cmlm")),
    ("-MLM,DAE", ("ms", "cmlm", "mt")),
    ("-All Pretraining", ()),
)


@dataclass(frozen=True)
class ExperimentPlan:
    """Every knob of one pipeline run. Defaults are desk scale: a model and
    step counts that finish on a laptop while still showing the pretraining
    effect on the synthetic task."""

    tasks: tuple[str, ...] = PRETRAIN_TASKS
    pretrain_steps: int = 5_000
    finetune_steps: int = 2_000
    finetune_size: int | None = None          # None: full cls corpus
    seeds: tuple[int, ...] = (0, 1, 2)
    vocab_size: int = 4_000
    vocab_seed: int = 0
    num_layers: int = 2
    num_heads: int = 4
    d_model: int = 128
    d_ff: int = 512
    dropout_p: float = 0.1
    max_positions: int = 256
    pretrain_lr: tuple[float, float] = (1e-9, 1e-3)
    pretrain_warmup: int = 400
    finetune_lr: tuple[float, float] = (1e-4, 1e-3)
    finetune_warmup: int = 100
    decay_rate: float = 0.9999
    batch_max_tokens: int = 1_024
    batch_max_examples: int = 32
    mix_weights: dict = field(default_factory=dict)  # default: uniform
    mlm_mask_prob: float = 0.15
    dae_drop_prob: float = 0.1
    dae_mask_prob: float = 0.1
    dae_shuffle_k: int = 3
    beam_size: int = 4
    max_gen_len: int = 32
    length_alpha: float = 1.0
    out_dir: str = "runs"

    def __post_init__(self):
        for t in self.tasks:
            if t not in PRETRAIN_TASKS:
                raise ValueError(f"unknown pretraining task {t!r}")
        if not self.seeds:
            raise ValueError("at least one seed is required")

    def model_config(self, vocab_size: int) -> ModelConfig:
        return ModelConfig(self.num_layers, self.num_heads, self.d_model,
                           self.d_ff, self.dropout_p, vocab_size,
                           self.max_positions)

    def pretrain_schedule(self) -> ScheduleConfig:
        return ScheduleConfig(*self.pretrain_lr, self.pretrain_warmup,
                              self.decay_rate)

    def finetune_schedule(self) -> ScheduleConfig:
        return ScheduleConfig(*self.finetune_lr, self.finetune_warmup,
                              self.decay_rate)

    def batch_spec(self) -> BatchSpec:
        return BatchSpec(self.batch_max_tokens, self.batch_max_examples)


def build_vocab(plan: ExperimentPlan, bundle: SyntheticBundle,
                sp: SpecialTokens | None = None) -> Vocabulary:
    """Shared vocabulary from the balanced monolingual corpora; independent
    of the run seed so every row and seed scores against the same pieces."""
    sp = sp or SpecialTokens.build()
    corpus = {
        "a": [r["text"] for r in bundle.mono_a],
        "b": [r["text"] for r in bundle.mono_b],
    }
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # exhaustion is fine for tiny corpora
        return train_vocab(corpus, plan.vocab_size, sp, seed=plan.vocab_seed)


def _round_robin(*iterators):
    while True:
        for it in iterators:
            yield next(it)


def _encode_all(vocab: Vocabulary, texts) -> list[list[int]]:
    return [vocab.encode(t) for t in texts]


def _parallel_pairs(vocab, sp, records) -> list[ParallelPair]:
    return [ParallelPair(sp.lang_ids[r["lang_a"]], sp.lang_ids[r["lang_b"]],
                         vocab.encode(r["text_a"]), vocab.encode(r["text_b"]))
            for r in records]


def _summ_pairs(vocab, sp, records) -> list[SummPair]:
    return [SummPair(sp.lang_ids[r["doc_lang"]], sp.lang_ids[r["summ_lang"]],
                     vocab.encode(r["doc"]), vocab.encode(r["summary"]))
            for r in records]


def _pretrain_stream(plan, bundle, vocab, sp, seed):
    rng = np.random.default_rng([seed, 101])
    mono_a = _encode_all(vocab, [r["text"] for r in bundle.mono_a])
    mono_b = _encode_all(vocab, [r["text"] for r in bundle.mono_b])
    lang_a = sp.lang_ids[bundle.mono_a[0]["lang"]]
    lang_b = sp.lang_ids[bundle.mono_b[0]["lang"]]
    parallel = _parallel_pairs(vocab, sp, bundle.parallel)
    summs = _summ_pairs(vocab, sp, bundle.summ_a + bundle.summ_b)

    def child():
        return np.random.default_rng(rng.integers(2 ** 63))

    streams = {}
    if "mlm" in plan.tasks:
        streams["mlm"] = _round_robin(
            mlm_stream(mono_a, lang_a, plan.mlm_mask_prob, child(), sp),
            mlm_stream(mono_b, lang_b, plan.mlm_mask_prob, child(), sp))
    if "dae" in plan.tasks:
        streams["dae"] = _round_robin(
            dae_stream(mono_a, lang_a, plan.dae_drop_prob, plan.dae_mask_prob,
                       plan.dae_shuffle_k, child(), sp),
            dae_stream(mono_b, lang_b, plan.dae_drop_prob, plan.dae_mask_prob,
                       plan.dae_shuffle_k, child(), sp))
    if "ms" in plan.tasks:
        streams["ms"] = summ_stream(summs, child(), sp)
    if "cmlm" in plan.tasks:
        streams["cmlm"] = cmlm_stream(parallel, plan.mlm_mask_prob, child(), sp)
    if "mt" in plan.tasks:
        streams["mt"] = mt_stream(parallel, child(), sp)
    weights = {t: plan.mix_weights.get(t, 1.0) for t in plan.tasks}
    return mix_tasks(streams, weights, np.random.default_rng([seed, 102]))


def _finetune_stream(plan, cls_records, vocab, sp, seed):
    pairs = _summ_pairs(vocab, sp, cls_records)
    return summ_stream(pairs, np.random.default_rng([seed, 201]), sp)


def _decode_test_set(plan, params, bundle, vocab, sp):
    outputs = []
    task = sp.task_ids["cls"]
    for rec in bundle.cls_test:
        src = vocab.encode(rec["doc"])
        tgt_lang = sp.lang_ids[rec["summ_lang"]]
        hyp = beam_search(params, src, task, tgt_lang, sp,
                          beam_size=plan.beam_size, max_len=plan.max_gen_len,
                          length_alpha=plan.length_alpha)[0]
        gen = [t for t in hyp.generated() if t != sp.eos_id]
        n = max(1, len(hyp.generated()))
        outputs.append({"id": rec.id, "text": vocab.decode(gen),
                        "score": hyp.logprob / n ** plan.length_alpha})
    return outputs


RUN_ARTIFACTS = ("plan.json", "metrics_finetune.jsonl", "checkpoint_final.ckpt",
                 "decoded.jsonl", "scores.json", "manifest.json")


def validate_run_dir(run_dir) -> None:
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"{run_dir} has no manifest.json")
    with open(manifest_path, encoding="utf-8") as f:
        listed = json.load(f)["files"]
    for name in RUN_ARTIFACTS:
        if name != "manifest.json" and name not in listed:
            raise ValueError(f"{run_dir}: manifest missing {name}")
    for name in listed:
        if not (run_dir / name).exists():
            raise ValueError(f"{run_dir}: listed artifact {name} absent")


def run_pipeline(plan: ExperimentPlan, bundle: SyntheticBundle, seed: int,
                 vocab: Vocabulary | None = None,
                 run_dir=None, label: str = "run",
                 pretrained: ModelParams | None = None) -> dict:
    """One full pipeline for one seed. Returns the scores record and writes
    all artifacts under run_dir. An explicit `pretrained` model skips the
    pretraining stage (the low-resource curve shares it across sizes)."""
    sp = SpecialTokens.build()
    vocab = vocab or build_vocab(plan, bundle, sp)
    run_dir = Path(run_dir) if run_dir else Path(plan.out_dir) / f"{label}-seed{seed}"
    run_dir.mkdir(parents=True, exist_ok=True)
    files = ["plan.json", "manifest.json"]

    with open(run_dir / "plan.json", "w", encoding="utf-8") as f:
        json.dump({"plan": asdict(plan), "seed": seed, "label": label},
                  f, indent=2, sort_keys=True)

    cfg = plan.model_config(vocab.size)
    if pretrained is not None:
        params = pretrained.copy()
    else:
        params = init_params(cfg, np.random.default_rng([seed, 1]))
        if plan.tasks and plan.pretrain_steps > 0:
            stream = _pretrain_stream(plan, bundle, vocab, sp, seed)
            params, _, _ = run_training(
                params, stream, plan.pretrain_schedule(), plan.pretrain_steps,
                plan.batch_spec(), np.random.default_rng([seed, 2]), sp,
                metrics_path=run_dir / "metrics_pretrain.jsonl")
            save_checkpoint(params, run_dir / "checkpoint_pretrain.ckpt")
            files += ["metrics_pretrain.jsonl", "checkpoint_pretrain.ckpt"]

    cls_records = bundle.cls_train
    if plan.finetune_size is not None:
        cls_records = subsample(cls_records, plan.finetune_size, seed=seed)
    stream = _finetune_stream(plan, cls_records, vocab, sp, seed)
    params, _, _ = run_training(
        params, stream, plan.finetune_schedule(), plan.finetune_steps,
        plan.batch_spec(), np.random.default_rng([seed, 3]), sp,
        metrics_path=run_dir / "metrics_finetune.jsonl")
    save_checkpoint(params, run_dir / "checkpoint_final.ckpt")
    files += ["metrics_finetune.jsonl", "checkpoint_final.ckpt"]

    decoded = _decode_test_set(plan, params, bundle, vocab, sp)
    with open(run_dir / "decoded.jsonl", "w", encoding="utf-8") as f:
        for row in decoded:
            f.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")
    files.append("decoded.jsonl")

    ref_lang = bundle.cls_test[0]["summ_lang"]
    pairs = [(row["text"], rec["summary"])
             for row, rec in zip(decoded, bundle.cls_test)]
    scores = corpus_rouge(pairs, ref_lang)
    record = {
        "label": label, "seed": seed, "tasks": list(plan.tasks),
        "finetune_size": plan.finetune_size,
        "scores": {v: {"precision": s.precision, "recall": s.recall, "f1": s.f1}
                   for v, s in scores.items()},
    }
    with open(run_dir / "scores.json", "w", encoding="utf-8") as f:
        json.dump(record, f, indent=2, sort_keys=True)
    files.append("scores.json")

    with open(run_dir / "manifest.json", "w", encoding="utf-8") as f:
        json.dump({"files": sorted(files)}, f, indent=2, sort_keys=True)
    validate_run_dir(run_dir)
    return record


def _mean_f1(records, variant="rouge1") -> float:
    return float(np.mean([r["scores"][variant]["f1"] for r in records]))


def run_ablation(plan: ExperimentPlan, bundle: SyntheticBundle,
                 rows=ABLATION_ROWS) -> dict:
    """The objective-removal grid: each row reruns the full pipeline with
    one task subset; corpora, vocabulary and seeds are shared. A failing
    row is reported and does not stop the others."""
    sp = SpecialTokens.build()
    vocab = build_vocab(plan, bundle, sp)
    out_root = Path(plan.out_dir)
    results, errors = [], {}
    for row_label, tasks in rows:
        try:
            row_plan = _replace(plan, tasks=tuple(tasks))
            per_seed = []
            for seed in plan.seeds:
                safe = row_label.replace(",", "").replace(" ", "_")
                rec = run_pipeline(row_plan, bundle, seed, vocab=vocab,
                                   run_dir=out_root / f"ablate{safe}-seed{seed}",
                                   label=row_label)
                per_seed.append(rec)
            results.append({
                "row": row_label, "tasks": list(tasks),
                "mean_f1": {v: float(np.mean(
                    [r["scores"][v]["f1"] for r in per_seed]))
                    for v in ("rouge1", "rouge2", "rougeL")},
                "per_seed": per_seed,
            })
        except Exception as exc:  # keep the remaining rows running
            errors[row_label] = repr(exc)
    table = {"rows": results, "errors": errors}
    out_root.mkdir(parents=True, exist_ok=True)
    with open(out_root / "ablation.json", "w", encoding="utf-8") as f:
        json.dump(table, f, indent=2, sort_keys=True)
    _write_tsv(out_root / "ablation.tsv",
               ["row", "rouge1_f1", "rouge2_f1", "rougeL_f1"],
               [[r["row"], f"{r['mean_f1']['rouge1']:.4f}",
                 f"{r['mean_f1']['rouge2']:.4f}",
                 f"{r['mean_f1']['rougeL']:.4f}"] for r in results])
    return table


def run_low_resource(plan: ExperimentPlan, bundle: SyntheticBundle,
                     sizes) -> dict:
    """Pretrained-vs-scratch ROUGE-1 at several finetune subset sizes.
    Pretraining runs once per seed and is shared across sizes."""
    sp = SpecialTokens.build()
    vocab = build_vocab(plan, bundle, sp)
    out_root = Path(plan.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    pretrained: dict[int, ModelParams] = {}
    if plan.tasks and plan.pretrain_steps > 0:
        for seed in plan.seeds:
            cfg = plan.model_config(vocab.size)
            params = init_params(cfg, np.random.default_rng([seed, 1]))
            stream = _pretrain_stream(plan, bundle, vocab, sp, seed)
            params, _, _ = run_training(
                params, stream, plan.pretrain_schedule(), plan.pretrain_steps,
                plan.batch_spec(), np.random.default_rng([seed, 2]), sp)
            ckpt = out_root / f"pretrained-seed{seed}.ckpt"
            save_checkpoint(params, ckpt)
            pretrained[seed] = params

    cells, errors = [], {}
    for size in sizes:
        n = None if size in (None, "full") else int(size)
        size_label = "full" if n is None else str(n)
        for variant in ("pretrained", "scratch"):
            key = f"{size_label}/{variant}"
            try:
                cell_plan = _replace(plan, finetune_size=n,
                                     tasks=plan.tasks if variant == "pretrained" else ())
                per_seed = []
                for seed in plan.seeds:
                    rec = run_pipeline(
                        cell_plan, bundle, seed, vocab=vocab,
                        run_dir=out_root / f"curve-{size_label}-{variant}-seed{seed}",
                        label=key,
                        pretrained=pretrained.get(seed) if variant == "pretrained" else None)
                    per_seed.append(rec)
                cells.append({"size": size_label, "variant": variant,
                              "rouge1_f1": _mean_f1(per_seed),
                              "per_seed": per_seed})
            except Exception as exc:
                errors[key] = repr(exc)
    curve = {"cells": cells, "errors": errors}
    with open(out_root / "curve.json", "w", encoding="utf-8") as f:
        json.dump(curve, f, indent=2, sort_keys=True)
    _write_tsv(out_root / "curve.tsv",
               ["size", "variant", "rouge1_f1"],
               [[c["size"], c["variant"], f"{c['rouge1_f1']:.4f}"] for c in cells])
    return curve


def _replace(plan: ExperimentPlan, **changes) -> ExperimentPlan:
    from dataclasses import replace

    return replace(plan, **changes)


def _write_tsv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("\t".join(header) + "\n")
        for row in rows:
            f.write("\t".join(str(c) for c in row) + "\n")
