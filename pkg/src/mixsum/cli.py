"""Command-line entry points.

Subcommands: synth, build-vocab, pretrain, finetune, generate, score,
ablate, curve. Plan-driven commands read a JSON config whose keys mirror
ExperimentPlan; any key can be overridden on the command line with
`--set key=value` (values parse as JSON when possible, else as strings).
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .corpus import (SyntheticSpec, generate_synthetic, load_bundle,
                     load_corpus, save_bundle)
from .decoding import beam_search
from .experiments import (ExperimentPlan, _finetune_stream, _pretrain_stream,
                          build_vocab, run_ablation, run_low_resource,
                          run_pipeline)
from .model import init_params, load_checkpoint, save_checkpoint
from .rouge import corpus_rouge, format_report
from .training import run_training
from .vocab import SpecialTokens, Vocabulary, train_vocab


def _load_plan(args) -> ExperimentPlan:
    config = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as f:
            config = json.load(f)
    for item in getattr(args, "set", None) or []:
        key, _, raw = item.partition("=")
        if not _:
            raise SystemExit(f"--set expects key=value, got {item!r}")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        config[key] = value
    for key in ("tasks", "seeds"):
        if key in config and isinstance(config[key], list):
            config[key] = tuple(config[key])
    if getattr(args, "out", None):
        config["out_dir"] = args.out
    if getattr(args, "seed", None) is not None:
        config["seeds"] = (args.seed,)
    return ExperimentPlan(**config)


def cmd_synth(args):
    fields = {k: v for k, v in vars(args).items()
              if k in SyntheticSpec.__dataclass_fields__ and v is not None}
    if args.sent_len:
        fields["sent_len"] = tuple(args.sent_len)
    if args.doc_len:
        fields["doc_len"] = tuple(args.doc_len)
    spec = SyntheticSpec(**fields)
    bundle = generate_synthetic(spec, np.random.default_rng(args.seed))
    files = save_bundle(bundle, args.out)
    print(json.dumps(files, indent=2))


def cmd_build_vocab(args):
    bundle = load_bundle(args.data)
    plan = ExperimentPlan(vocab_size=args.target_size, vocab_seed=args.seed)
    vocab = build_vocab(plan, bundle)
    vocab.save(args.out)
    print(f"vocabulary of {vocab.size} entries -> {args.out}")


def cmd_pretrain(args):
    plan = _load_plan(args)
    bundle = load_bundle(args.data)
    sp = SpecialTokens.build()
    vocab = Vocabulary.load(args.vocab) if args.vocab else build_vocab(plan, bundle, sp)
    seed = plan.seeds[0]
    out = Path(plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    params = init_params(plan.model_config(vocab.size),
                         np.random.default_rng([seed, 1]))
    stream = _pretrain_stream(plan, bundle, vocab, sp, seed)
    params, _, metrics = run_training(
        params, stream, plan.pretrain_schedule(), plan.pretrain_steps,
        plan.batch_spec(), np.random.default_rng([seed, 2]), sp,
        metrics_path=out / "metrics_pretrain.jsonl")
    save_checkpoint(params, out / "checkpoint_pretrain.ckpt")
    print(f"pretrained {plan.pretrain_steps} steps "
          f"(final loss {metrics[-1]['loss']:.4f}) -> {out}")


def cmd_finetune(args):
    plan = _load_plan(args)
    bundle = load_bundle(args.data)
    sp = SpecialTokens.build()
    vocab = Vocabulary.load(args.vocab) if args.vocab else build_vocab(plan, bundle, sp)
    seed = plan.seeds[0]
    out = Path(plan.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if args.checkpoint:
        params = load_checkpoint(args.checkpoint)
    else:
        params = init_params(plan.model_config(vocab.size),
                             np.random.default_rng([seed, 1]))
    records = bundle.cls_train
    if plan.finetune_size is not None:
        from .corpus import subsample
        records = subsample(records, plan.finetune_size, seed=seed)
    stream = _finetune_stream(plan, records, vocab, sp, seed)
    params, _, metrics = run_training(
        params, stream, plan.finetune_schedule(), plan.finetune_steps,
        plan.batch_spec(), np.random.default_rng([seed, 3]), sp,
        metrics_path=out / "metrics_finetune.jsonl")
    save_checkpoint(params, out / "checkpoint_final.ckpt")
    print(f"finetuned {plan.finetune_steps} steps "
          f"(final loss {metrics[-1]['loss']:.4f}) -> {out}")


def cmd_generate(args):
    sp = SpecialTokens.build()
    vocab = Vocabulary.load(args.vocab)
    params = load_checkpoint(args.checkpoint)
    records = list(load_corpus(args.input, expected_kind="summ"))
    task = sp.task_ids[args.task]
    with open(args.out, "w", encoding="utf-8") as f:
        for rec in records:
            tgt_lang = sp.lang_ids[args.tgt_lang or rec["summ_lang"]]
            hyp = beam_search(params, vocab.encode(rec["doc"]), task, tgt_lang,
                              sp, beam_size=args.beam_size, max_len=args.max_len,
                              length_alpha=args.length_alpha)[0]
            gen = [t for t in hyp.generated() if t != sp.eos_id]
            score = hyp.logprob / max(1, len(hyp.generated())) ** args.length_alpha
            f.write(json.dumps({"id": rec.id, "text": vocab.decode(gen),
                                "score": score},
                               ensure_ascii=False, sort_keys=True) + "\n")
    print(f"decoded {len(records)} inputs -> {args.out}")


def cmd_score(args):
    with open(args.candidates, encoding="utf-8") as f:
        candidates = [json.loads(line)["text"] for line in f if line.strip()]
    references = [r["summary"] for r in load_corpus(args.references,
                                                    expected_kind="summ")]
    if len(candidates) != len(references):
        raise SystemExit(f"{len(candidates)} candidates vs "
                         f"{len(references)} references")
    scores = corpus_rouge(list(zip(candidates, references)), args.lang)
    print(format_report(scores))
    if args.out:
        payload = {v: {"precision": s.precision, "recall": s.recall, "f1": s.f1}
                   for v, s in scores.items()}
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)


def cmd_ablate(args):
    plan = _load_plan(args)
    bundle = load_bundle(args.data)
    table = run_ablation(plan, bundle)
    for row in table["rows"]:
        mean = row["mean_f1"]
        print(f"{row['row']:<20} rouge1={mean['rouge1']:.4f} "
              f"rouge2={mean['rouge2']:.4f} rougeL={mean['rougeL']:.4f}")
    for row, err in table["errors"].items():
        print(f"{row:<20} FAILED: {err}", file=sys.stderr)


def cmd_curve(args):
    plan = _load_plan(args)
    bundle = load_bundle(args.data)
    sizes = [s if s == "full" else int(s) for s in args.sizes.split(",")]
    curve = run_low_resource(plan, bundle, sizes)
    for cell in curve["cells"]:
        print(f"size={cell['size']:<6} {cell['variant']:<10} "
              f"rouge1={cell['rouge1_f1']:.4f}")
    for key, err in curve["errors"].items():
        print(f"{key} FAILED: {err}", file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixsum",
        description="Mixed-lingual pretraining for cross-lingual summarization")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate synthetic bilingual corpora")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alphabet-size", dest="alphabet_size", type=int)
    p.add_argument("--lead-k", dest="lead_k", type=int)
    p.add_argument("--n-mono", dest="n_mono", type=int)
    p.add_argument("--n-parallel", dest="n_parallel", type=int)
    p.add_argument("--n-summ", dest="n_summ", type=int)
    p.add_argument("--n-cls-train", dest="n_cls_train", type=int)
    p.add_argument("--n-cls-test", dest="n_cls_test", type=int)
    p.add_argument("--sent-len", nargs=2, type=int)
    p.add_argument("--doc-len", nargs=2, type=int)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-vocab", help="train the shared vocabulary")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--target-size", type=int, default=4000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_build_vocab)

    def plan_args(p, data=True):
        p.add_argument("--config", help="JSON plan file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE",
                       help="override one plan key")
        p.add_argument("--out", help="output directory override")
        p.add_argument("--seed", type=int, help="single-seed override")
        if data:
            p.add_argument("--data", required=True, help="corpora bundle directory")

    p = sub.add_parser("pretrain", help="run the mixed-task pretraining stage")
    plan_args(p)
    p.add_argument("--vocab", help="vocabulary file (default: train from data)")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("finetune", help="finetune on cross-lingual summarization")
    plan_args(p)
    p.add_argument("--vocab")
    p.add_argument("--checkpoint", help="start from this checkpoint")
    p.set_defaults(func=cmd_finetune)

    p = sub.add_parser("generate", help="beam-decode summaries")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--input", required=True, help="summ-pair corpus file")
    p.add_argument("--out", required=True)
    p.add_argument("--task", default="cls")
    p.add_argument("--tgt-lang", dest="tgt_lang")
    p.add_argument("--beam-size", type=int, default=6)
    p.add_argument("--max-len", type=int, default=200)
    p.add_argument("--length-alpha", type=float, default=1.0)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("score", help="ROUGE a decoded file against references")
    p.add_argument("--candidates", required=True, help="decoded jsonl")
    p.add_argument("--references", required=True, help="summ-pair corpus file")
    p.add_argument("--lang", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("ablate", help="run the objective-removal grid")
    plan_args(p)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("curve", help="run the low-resource comparison")
    plan_args(p)
    p.add_argument("--sizes", default="16,full",
                   help="comma-separated subset sizes, 'full' allowed")
    p.set_defaults(func=cmd_curve)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
