"""Command-line entry point wiring all modules into reproducible runs.

Subcommands: ingest, stats, build-trainset, train, retrieve, eval, grid,
export-anno, score-anno, make-synthetic-corpus. Each one reads its inputs
from a JSON config file (flags override individual fields), writes its
artifacts under the configured output directory, and drops a
``<command>.manifest.json`` with the argv, config echo, and SHA-256 of
every input and output, so any artifact can be traced and regenerated.

Exit codes: 0 success, 2 bad usage or config, 3 missing input file,
4 malformed data, 5 numerical failure, 1 anything else.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import sys
from pathlib import Path


from . import corpus as corpus_mod
from . import distribution as dist_mod
from . import encoder as enc_mod
from . import evaluation as eval_mod
from . import retrieval as retr_mod
from . import sampling as samp_mod
from . import synthetic as synth_mod
from .config import ExperimentConfig, load_config
from .errors import ConfigError, DataError, DialretError, NumericError
from .seeding import derive_rng, derive_seed

logger = logging.getLogger("dialret")


def _sha256(path: Path) -> str:
    return retr_mod.file_sha256(path)


def _write_manifest(
    cfg_dir: Path, command: str, argv, cfg: ExperimentConfig | None,
    inputs: list[Path], outputs: list[Path],
) -> Path:
    manifest = {
        "command": command,
        "argv": list(argv),
        "master_seed": cfg.master_seed if cfg else None,
        "config": cfg.raw if cfg else None,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "outputs": {str(p): _sha256(p) for p in outputs},
        "created_at": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    path = cfg_dir / f"{command}.manifest.json"
    path.write_text(
        json.dumps(manifest, indent=2, sort_keys=True, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    return path


def _load_corpus(cfg: ExperimentConfig) -> corpus_mod.ParseResult:
    if cfg.corpus_path is None:
        raise ConfigError("this command needs paths.corpus in the config")
    with open(cfg.corpus_path, encoding="utf-8") as fh:
        return corpus_mod.parse_dialogues(fh)


def _split(cfg: ExperimentConfig, dialogues):
    spec = cfg.split_spec(seed=derive_seed(cfg.master_seed, "split"))
    return corpus_mod.split_corpus(dialogues, spec)


def _select_split(cfg: ExperimentConfig, name: str):
    result = _load_corpus(cfg)
    if name == "all":
        return list(result.dialogues)
    train, dev, test = _split(cfg, result.dialogues)
    return {"train": train, "dev": dev, "test": test}[name]


def _pairs_for(cfg: ExperimentConfig, dialogues):
    return corpus_mod.extract_all_pairs(dialogues, cfg.max_context_turns)


def _embeddings_for(cfg: ExperimentConfig, train_dialogues) -> enc_mod.EmbeddingTable:
    if cfg.embeddings_path is not None:
        return enc_mod.load_embeddings(cfg.embeddings_path, cfg.encoder_dim)
    vocab = synth_mod.corpus_vocabulary(train_dialogues)
    return enc_mod.random_embeddings(
        vocab, cfg.encoder_dim, cfg.embedding_scale,
        seed=derive_seed(cfg.master_seed, "embeddings"),
    )


def _safe_label(label: str) -> str:
    return label.replace(":", "_")


def _outdir(cfg: ExperimentConfig) -> Path:
    cfg.output_dir.mkdir(parents=True, exist_ok=True)
    return cfg.output_dir


# ----------------------------------------------------------------------
# subcommand implementations
# ----------------------------------------------------------------------

def cmd_ingest(args, argv) -> int:
    cfg = load_config(args.config, require_corpus=True)
    out = _outdir(cfg)
    result = _load_corpus(cfg)
    errors_path = out / "ingest_errors.txt"
    with open(errors_path, "w", encoding="utf-8") as fh:
        for err in result.errors:
            fh.write(str(err) + "\n")
    train, dev, test = _split(cfg, result.dialogues)
    outputs = [errors_path]
    for name, part in (("train", train), ("dev", dev), ("test", test)):
        path = out / f"{name}.ids"
        corpus_mod.write_split_manifest(path, part)
        outputs.append(path)
    _write_manifest(out, "ingest", argv, cfg, [cfg.corpus_path], outputs)
    print(
        f"ingested {len(result.dialogues)} dialogues "
        f"({len(result.errors)} rejected); "
        f"split {len(train)}/{len(dev)}/{len(test)} -> {out}"
    )
    return 0


def cmd_stats(args, argv) -> int:
    cfg = load_config(args.config, require_corpus=True)
    out = _outdir(cfg)
    dialogues = _select_split(cfg, args.split)
    pairs = _pairs_for(cfg, dialogues)
    dist = dist_mod.count_responses(pairs)
    report = dist_mod.distribution_report(dist)
    text = dist_mod.format_report(report)
    path = out / f"stats_{args.split}.tsv"
    path.write_text(text, encoding="utf-8")
    _write_manifest(out, "stats", argv, cfg, [cfg.corpus_path], [path])
    sys.stdout.write(text)
    print(f"wrote {path}")
    return 0


def cmd_build_trainset(args, argv) -> int:
    cfg = load_config(args.config, require_corpus=True)
    out = _outdir(cfg)
    transform_label = args.transform or cfg.sampling_transform
    spec = dist_mod.TransformSpec.parse(transform_label)
    neg = args.neg_ratio or cfg.neg_per_pos
    filter_flag = cfg.filter_by_inverse_count or args.filter_inverse_count
    strategy = samp_mod.SamplingStrategy(
        transform=spec, neg_per_pos=neg, filter_by_inverse_count=filter_flag
    )
    train_dialogues = _select_split(cfg, "train")
    pairs = _pairs_for(cfg, train_dialogues)
    dist = dist_mod.count_responses(pairs)
    embeddings = (
        _embeddings_for(cfg, train_dialogues) if spec.kind == "kde" else None
    )
    seed = args.seed if args.seed is not None else cfg.master_seed
    rng = derive_rng(seed, "trainset", transform_label)
    examples = samp_mod.build_training_set(pairs, dist, strategy, rng, embeddings)
    suffix = _safe_label(transform_label) + ("_filtered" if filter_flag else "")
    path = out / f"trainset_{suffix}.jsonl"
    samp_mod.write_training_set(path, examples)
    _write_manifest(out, "build-trainset", argv, cfg, [cfg.corpus_path], [path])
    positives = sum(e.label for e in examples)
    print(f"wrote {len(examples)} examples ({positives} positive) -> {path}")
    return 0


def _train_one_variant(
    cfg: ExperimentConfig, transform_label: str, out: Path,
    train_dialogues, write_artifacts: bool = True,
):
    """Build trainset, train a model, optionally persist everything.

    Returns (model, checkpoint_path, index_path, artifact_paths).
    """
    pairs = _pairs_for(cfg, train_dialogues)
    dist = dist_mod.count_responses(pairs)
    spec = dist_mod.TransformSpec.parse(transform_label)
    embeddings_table = _embeddings_for(cfg, train_dialogues)
    strategy = samp_mod.SamplingStrategy(
        transform=spec,
        neg_per_pos=cfg.neg_per_pos,
        filter_by_inverse_count=cfg.filter_by_inverse_count,
    )
    kde_embeddings = embeddings_table if spec.kind == "kde" else None
    rng = derive_rng(cfg.master_seed, "trainset", transform_label)
    examples = samp_mod.build_training_set(pairs, dist, strategy, rng, kde_embeddings)
    model = enc_mod.DualEncoderModel.create(
        embeddings_table,
        variant=cfg.encoder_variant,
        hidden=cfg.encoder_hidden,
        seed=derive_seed(cfg.master_seed, "model-init", transform_label),
        tied=cfg.encoder_tied,
        train_embeddings=cfg.train_embeddings,
    )
    train_config = enc_mod.TrainConfig(
        learning_rate=cfg.learning_rate,
        batch_size=cfg.batch_size,
        max_iterations=cfg.max_iterations,
        seed=derive_seed(cfg.master_seed, "train", transform_label),
        gradient_clip_norm=cfg.gradient_clip_norm,
        eval_every=cfg.eval_every,
    )
    resampler = None
    if cfg.resample_each_epoch:
        resampler = samp_mod.make_epoch_resampler(
            pairs, dist, strategy,
            derive_seed(cfg.master_seed, "trainset", transform_label),
            kde_embeddings,
        )
    result = enc_mod.train(model, examples, train_config, resampler=resampler)
    suffix = _safe_label(transform_label)
    artifacts: list[Path] = []
    ckpt_path = out / f"model_{suffix}.ckpt"
    index_path = None
    if write_artifacts:
        trainset_path = out / f"trainset_{suffix}.jsonl"
        samp_mod.write_training_set(trainset_path, examples)
        artifacts.append(trainset_path)
        enc_mod.save_checkpoint(model, ckpt_path)
        artifacts.append(ckpt_path)
        trace_path = out / f"train_{suffix}_loss.tsv"
        with open(trace_path, "w", encoding="utf-8") as fh:
            for iteration, loss in result.loss_trace:
                fh.write(f"{iteration}\t{loss!r}\n")
        artifacts.append(trace_path)
        if cfg.build_index:
            index = retr_mod.build_history_index(
                model, pairs, cfg.response_weight,
                checkpoint_ref=ckpt_path.name,
                checkpoint_sha256=_sha256(ckpt_path),
            )
            index_path = out / f"history_{suffix}.idx"
            retr_mod.save_index(index, index_path)
            artifacts.append(index_path)
    return model, ckpt_path, index_path, artifacts


def cmd_train(args, argv) -> int:
    cfg = load_config(args.config, require_corpus=True)
    out = _outdir(cfg)
    label = args.transform or cfg.sampling_transform
    train_dialogues = _select_split(cfg, "train")
    _, ckpt, index_path, artifacts = _train_one_variant(
        cfg, label, out, train_dialogues
    )
    _write_manifest(out, "train", argv, cfg, [cfg.corpus_path], artifacts)
    where = f"{ckpt}" + (f" and {index_path}" if index_path else "")
    print(f"trained '{label}' variant -> {where}")
    return 0


def _load_index_with_model(index_path: Path, checkpoint: str | None):
    index = retr_mod.load_index(index_path)
    ckpt_path = Path(checkpoint) if checkpoint else None
    if ckpt_path is None and index.checkpoint_ref:
        candidate = Path(index.checkpoint_ref)
        if not candidate.is_absolute():
            candidate = index_path.parent / candidate
        ckpt_path = candidate
    if ckpt_path is None:
        raise ConfigError("index has no checkpoint reference; pass --checkpoint")
    if not ckpt_path.exists():
        raise FileNotFoundError(f"checkpoint {ckpt_path} not found")
    if index.checkpoint_sha256:
        actual = _sha256(ckpt_path)
        if actual != index.checkpoint_sha256:
            raise DataError(
                f"checkpoint {ckpt_path} hash {actual[:12]}... does not match "
                f"the index's recorded {index.checkpoint_sha256[:12]}..."
            )
    index.model = enc_mod.load_checkpoint(ckpt_path)
    return index


def cmd_retrieve(args, argv) -> int:
    index_path = Path(args.index)
    if not index_path.exists():
        raise FileNotFoundError(f"index {index_path} not found")
    index = _load_index_with_model(index_path, args.checkpoint)
    tokens = corpus_mod.tokenize(args.query)
    if not tokens:
        raise DataError("query contains no tokens")
    hits = retr_mod.query_nearest(index, tokens, args.top_k)
    print("rank\tcosine\tpair_id\tresponse")
    for rank, hit in enumerate(hits, start=1):
        print(f"{rank}\t{hit.score:.6f}\t{hit.pair_id}\t{hit.response_text}")
    return 0


def _eval_config(cfg: ExperimentConfig, alt_label: str) -> eval_mod.EvalConfig:
    return eval_mod.EvalConfig(
        num_alternatives=cfg.eval_num_alternatives,
        ks=cfg.eval_ks,
        alternative_transform=dist_mod.TransformSpec.parse(alt_label),
        seed=derive_seed(cfg.master_seed, "eval"),
    )


def cmd_eval(args, argv) -> int:
    cfg = load_config(args.config, require_corpus=True)
    out = _outdir(cfg)
    result = _load_corpus(cfg)
    train_d, dev_d, test_d = _split(cfg, result.dialogues)
    eval_dialogues = {"train": train_d, "dev": dev_d, "test": test_d}[cfg.eval_split]
    train_pairs = _pairs_for(cfg, train_d)
    test_pairs = _pairs_for(cfg, eval_dialogues)
    train_dist = dist_mod.count_responses(train_pairs)
    alt_label = args.alternative_transform or cfg.eval_alternative_transform
    eval_cfg = _eval_config(cfg, alt_label)

    inputs = [cfg.corpus_path]
    if args.index:
        index = _load_index_with_model(Path(args.index), args.checkpoint)
        scorer = index
        scorer_name = "history-index"
        inputs.append(Path(args.index))
    elif args.checkpoint:
        ckpt = Path(args.checkpoint)
        if not ckpt.exists():
            raise FileNotFoundError(f"checkpoint {ckpt} not found")
        scorer = enc_mod.load_checkpoint(ckpt)
        scorer_name = "dual-encoder"
        inputs.append(ckpt)
    else:
        raise ConfigError("eval needs --checkpoint or --index")

    embeddings = None
    if eval_cfg.alternative_transform.kind == "kde":
        embeddings = _embeddings_for(cfg, train_d)
    report = eval_mod.evaluate(scorer, test_pairs, train_dist, eval_cfg, embeddings)
    text = eval_mod.format_eval_report(report)
    path = out / f"eval_{scorer_name}_{_safe_label(alt_label)}.txt"
    path.write_text(text, encoding="utf-8")
    _write_manifest(out, "eval", argv, cfg, inputs, [path])
    sys.stdout.write(text)
    print(f"wrote {path}")
    return 0


def cmd_grid(args, argv) -> int:
    cfg = load_config(args.config, require_corpus=True)
    out = _outdir(cfg)
    result = _load_corpus(cfg)
    train_d, dev_d, test_d = _split(cfg, result.dialogues)
    eval_dialogues = {"train": train_d, "dev": dev_d, "test": test_d}[cfg.eval_split]
    train_pairs = _pairs_for(cfg, train_d)
    test_pairs = _pairs_for(cfg, eval_dialogues)
    train_dist = dist_mod.count_responses(train_pairs)

    scorers: dict[str, object] = {}
    artifacts: list[Path] = []
    for label in cfg.grid_train_transforms:
        logger.info("grid: training variant %r", label)
        model, _, _, model_artifacts = _train_one_variant(
            cfg, label, out, train_d
        )
        scorers[label] = model
        artifacts.extend(model_artifacts)

    alt_transforms = {
        label: dist_mod.TransformSpec.parse(label) for label in cfg.grid_alt_transforms
    }
    embeddings = None
    if any(spec.kind == "kde" for spec in alt_transforms.values()):
        embeddings = _embeddings_for(cfg, train_d)
    eval_cfg = _eval_config(cfg, cfg.grid_alt_transforms[0])
    grid = eval_mod.cross_distribution_grid(
        scorers, alt_transforms, test_pairs, train_dist, eval_cfg, embeddings
    )
    for (alt_name, scorer_name), report in grid.cells.items():
        path = out / (
            f"grid_{_safe_label(scorer_name)}__alt_{_safe_label(alt_name)}.txt"
        )
        path.write_text(eval_mod.format_eval_report(report), encoding="utf-8")
        artifacts.append(path)
    table = eval_mod.format_grid_table(grid, cfg.eval_ks)
    table_path = out / "grid_table.txt"
    table_path.write_text(table, encoding="utf-8")
    artifacts.append(table_path)
    _write_manifest(out, "grid", argv, cfg, [cfg.corpus_path], artifacts)
    sys.stdout.write(table)
    print(f"wrote {table_path}")
    return 0


def cmd_export_anno(args, argv) -> int:
    cfg = load_config(args.config, require_corpus=True)
    out = _outdir(cfg)
    result = _load_corpus(cfg)
    train_d, dev_d, test_d = _split(cfg, result.dialogues)
    eval_dialogues = {"train": train_d, "dev": dev_d, "test": test_d}[cfg.eval_split]
    train_pairs = _pairs_for(cfg, train_d)
    test_pairs = _pairs_for(cfg, eval_dialogues)
    pool = dist_mod.count_responses(train_pairs).responses

    scorers: dict[str, object] = {}
    inputs = [cfg.corpus_path]
    if args.checkpoint:
        scorers["dual-encoder"] = enc_mod.load_checkpoint(Path(args.checkpoint))
        inputs.append(Path(args.checkpoint))
    if args.index:
        scorers["history-index"] = _load_index_with_model(Path(args.index), None)
        inputs.append(Path(args.index))
    for name, entry in cfg.annotation_models.items():
        path = (Path(args.config).parent / entry["path"]).resolve()
        if not path.exists():
            raise FileNotFoundError(f"annotation model {name}: {path} not found")
        if entry["kind"] == "checkpoint":
            scorers[name] = enc_mod.load_checkpoint(path)
        else:
            scorers[name] = _load_index_with_model(path, None)
        inputs.append(path)
    if not scorers:
        raise ConfigError(
            "export-anno needs --checkpoint/--index or annotation.models"
        )

    questions = [
        (str(p.pair_id), p.context_tokens)
        for p in test_pairs[: cfg.annotation_num_questions]
    ]
    rows = eval_mod.export_annotation(
        scorers, questions, pool,
        n_responses=cfg.annotation_n_responses,
        seed=derive_seed(cfg.master_seed, "annotation"),
    )
    anno_path = out / "annotation.tsv"
    key_path = out / "annotation_key.tsv"
    eval_mod.write_annotation_file(anno_path, rows)
    eval_mod.write_annotation_key(key_path, rows)
    _write_manifest(out, "export-anno", argv, cfg, inputs, [anno_path, key_path])
    print(f"wrote {len(rows)} rows for {len(questions)} questions -> {anno_path}")
    return 0


def cmd_score_anno(args, argv) -> int:
    anno_path = Path(args.anno)
    if not anno_path.exists():
        raise FileNotFoundError(f"annotation file {anno_path} not found")
    key_path = Path(args.key) if args.key else None
    if key_path is not None and not key_path.exists():
        raise FileNotFoundError(f"key file {key_path} not found")
    per_model = eval_mod.read_marked_annotation(anno_path, key_path)
    lines = ["model\tquestions\tCR\tUR"]
    for model in sorted(per_model):
        records = per_model[model]
        cr, ur = eval_mod.score_human_marks(records)
        lines.append(f"{model}\t{len(records)}\t{cr:.4f}\t{ur:.4f}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {args.out}")
    return 0


def cmd_make_synthetic_corpus(args, argv) -> int:
    dialogues = synth_mod.make_synthetic_corpus(
        num_dialogues=args.dialogues,
        distinct_responses=args.responses,
        vocab_size=args.vocab,
        zipf_exponent=args.exponent,
        seed=args.seed,
    )
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        for d in dialogues:
            fh.write(corpus_mod.dialogue_to_record(d) + "\n")
    print(f"wrote {len(dialogues)} dialogues -> {out_path}")
    return 0


# ----------------------------------------------------------------------
# argument parsing
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dialret",
        description="Retrieval-based dialogue experiments with controlled "
        "negative-sampling distributions.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", required=True, help="experiment config JSON")
        return p

    with_config(sub.add_parser("ingest", help="validate corpus and write splits"))

    p = with_config(sub.add_parser("stats", help="response rank/frequency table"))
    p.add_argument("--split", default="all", choices=("all", "train", "dev", "test"))

    p = with_config(sub.add_parser("build-trainset", help="sample a training set"))
    p.add_argument("--transform", help="identity | uniform | power:D | kde:H")
    p.add_argument("--neg-ratio", type=int, help="negatives per positive")
    p.add_argument("--filter-inverse-count", action="store_true",
                   help="keep each pair with probability 1/count(response)")
    p.add_argument("--seed", type=int, help="override master seed for sampling")

    p = with_config(sub.add_parser("train", help="train a dual encoder"))
    p.add_argument("--transform", help="negative-sampling transform override")

    p = sub.add_parser("retrieve", help="query a history index")
    p.add_argument("--index", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--top-k", type=int, default=3)
    p.add_argument("--checkpoint", help="encoder checkpoint (default: index ref)")

    p = with_config(sub.add_parser("eval", help="recall@k on a split"))
    p.add_argument("--checkpoint", help="score with a dual-encoder checkpoint")
    p.add_argument("--index", help="score with a history index")
    p.add_argument("--alternative-transform", help="override eval alternatives")

    with_config(sub.add_parser(
        "grid", help="train per negative distribution, evaluate per alternative"
    ))

    p = with_config(sub.add_parser("export-anno", help="blind annotation sheet"))
    p.add_argument("--checkpoint")
    p.add_argument("--index")

    p = sub.add_parser("score-anno", help="CR/UR from marked annotations")
    p.add_argument("--anno", required=True)
    p.add_argument("--key")
    p.add_argument("--out")

    p = sub.add_parser("make-synthetic-corpus", help="generate a Zipf corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--dialogues", type=int, default=2000)
    p.add_argument("--responses", type=int, default=100)
    p.add_argument("--vocab", type=int, default=250)
    p.add_argument("--exponent", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)

    return parser


_COMMANDS = {
    "ingest": cmd_ingest,
    "stats": cmd_stats,
    "build-trainset": cmd_build_trainset,
    "train": cmd_train,
    "retrieve": cmd_retrieve,
    "eval": cmd_eval,
    "grid": cmd_grid,
    "export-anno": cmd_export_anno,
    "score-anno": cmd_score_anno,
    "make-synthetic-corpus": cmd_make_synthetic_corpus,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return _COMMANDS[args.command](args, argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 4
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 5
    except DialretError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
