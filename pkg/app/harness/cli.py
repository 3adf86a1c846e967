"""Command line entry point for corpus generation, training and evaluation.

Settings resolve in three layers: schema defaults, the ``--config`` key-value
file, then explicit flags. Every command writes ``manifest.json`` (seeds,
settings, library versions, step timings) into its output directory.

    python -m app.harness.cli generate-corpus --mode translation --seed 0 --out runs/corpus
    python -m app.harness.cli pretrain-lm --corpus runs/corpus --out runs/base
    python -m app.harness.cli train --corpus runs/corpus --base runs/base/base.ckpt --out runs/vgs
    python -m app.harness.cli decode --checkpoint runs/vgs/best.ckpt --corpus runs/corpus --out runs/vgs
    python -m app.harness.cli evaluate --row vgs_translation --caption-strategy deterministic_best --hyps runs/vgs/hyps.jsonl --corpus runs/corpus --out runs/vgs
    python -m app.harness.cli report --runs runs/vgs runs/annotator --out runs/report
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

from ..config import RUN_ROOT, build_model_from, configure_logging, load_kv_file, merge_settings
from ..corpus.dataset import Corpus, DatasetSplit, build_dataset, load_dataset
from ..errors import ConfigError, DataError, VGSError
from ..metrics.bleu import corpus_bleu, format_score
from ..metrics.tokenize import detokenize
from ..model.checkpoint import load_checkpoint, save_checkpoint
from ..schemas import (
    CaptionerOracle,
    CellResult,
    CheckpointMeta,
    CorpusConfig,
    DecodeConfig,
    ExperimentSpec,
    ModelConfig,
    PretrainConfig,
    ReportRow,
    SweepCell,
    TrainConfig,
)
from ..utils.diagnostics import DiagnosticContext
from ..utils.records import iter_records, write_records
from .experiments import (
    ROW_LABELS,
    annotator_row,
    captions_row,
    decode_split,
    experiment_for,
    model_row,
    pretrain_base,
    row_label,
    table_labels,
    train_from_base,
)
from .protocols import N_VALUES, REPEATS
from .report import caption_count_frame, read_rows, sweep_frame, write_report, write_rows
from .sweeps import caption_count_sweep, plateau_stats, sensitivity_sweep, sweep_summary

logger = logging.getLogger(__name__)

BASE_NAME = "base.ckpt"
HYPS_NAME = "hyps.jsonl"
RESULTS_NAME = "results.jsonl"
SWEEP_NAME = "sweep_cells.jsonl"
CAPTION_COUNT_NAME = "caption_count.jsonl"


# -- settings ---------------------------------------------------------------

def resolve_settings(args: argparse.Namespace, flags: Dict[str, Any]) -> Dict[str, Any]:
    """Config file first, explicit flags on top."""
    from_file = load_kv_file(args.config) if getattr(args, "config", None) else None
    return merge_settings(from_file, flags)


def oracle_from(settings: Dict[str, Any]) -> CaptionerOracle:
    """Tier defaults first; ``oracle_*`` keys override single fields."""
    base = CaptionerOracle.from_tier(
        settings.get("oracle_tier", "tier_A"), settings.get("oracle_strategy", "diverse_templates")
    )
    scoped = {k: v for k, v in settings.items() if k.startswith("oracle_")}
    return build_model_from(CaptionerOracle, merge_settings(base.model_dump(), scoped), prefix="oracle_")


def corpus_config_from(settings: Dict[str, Any]) -> CorpusConfig:
    config = build_model_from(CorpusConfig, settings)
    return config.model_copy(update={"oracle": oracle_from(settings)})


def model_config_for(settings: Dict[str, Any], corpora: Sequence[Corpus]) -> ModelConfig:
    d_audio = {c.config.d_audio for c in corpora}
    if len(d_audio) != 1:
        raise ConfigError("d_audio", f"corpora disagree on audio width: {sorted(d_audio)}")
    config = build_model_from(ModelConfig, merge_settings({"d_audio": d_audio.pop()}, settings))
    vocab_size = max(len(c.vocab) for c in corpora)
    if config.vocab_size_text < vocab_size:
        raise ConfigError("vocab_size_text", f"{config.vocab_size_text} < corpus vocabulary {vocab_size}")
    return config


def _out_dir(args: argparse.Namespace, default_name: str) -> Path:
    return Path(args.out) if args.out else Path(RUN_ROOT) / default_name


def _run(command: str, out: Path, root: Dict[str, Any], body: Callable[[DiagnosticContext], None]) -> None:
    diag = DiagnosticContext(command=command, out=str(out), **root)
    try:
        with diag:
            body(diag)
    finally:
        path = diag.write_manifest(out)
        logger.info("manifest_written path=%s", path)


# -- hypotheses files -------------------------------------------------------

def write_hypotheses(path: Path, split: DatasetSplit, hyps: Dict[str, List[int]], corpus: Corpus) -> int:
    rows = [
        {"item_id": it.item_id, "tokens": hyps[it.item_id], "text": detokenize(hyps[it.item_id], corpus.vocab)}
        for it in split.items
    ]
    return write_records(path, rows)


def read_hypotheses(path: Path) -> Dict[str, List[int]]:
    return {rec["item_id"]: [int(t) for t in rec["tokens"]] for rec in iter_records(path)}


# -- commands ---------------------------------------------------------------

def cmd_generate_corpus(args: argparse.Namespace) -> None:
    settings = resolve_settings(args, {
        "mode": args.mode,
        "oracle_tier": args.oracle_tier,
        "oracle_strategy": args.strategy,
        "k_captions": args.k_captions,
        "n_train": args.n_train,
        "n_dev": args.n_dev,
        "n_test": args.n_test,
        "seed": args.seed,
    })
    config = corpus_config_from(settings)
    seed = int(settings.get("seed", 0))
    out = _out_dir(args, f"corpus-{config.mode}-{config.oracle.tier}-{config.oracle.strategy}-s{seed}")

    def body(diag: DiagnosticContext) -> None:
        corpus = build_dataset(config, seed, out)
        diag.step("corpus_built", **{name: len(split) for name, split in corpus.splits.items()})

    _run("generate-corpus", out, {"seed": seed, "config": config.model_dump(mode="json")}, body)


def cmd_pretrain_lm(args: argparse.Namespace) -> None:
    settings = resolve_settings(args, {"seed": args.seed})
    seed = int(settings.get("seed", 0))
    out = _out_dir(args, f"base-s{seed}")

    def body(diag: DiagnosticContext) -> None:
        corpora = [load_dataset(p) for p in args.corpus]
        config = model_config_for(settings, corpora)
        pretrain = build_model_from(PretrainConfig, settings)
        diag.root.update(model=config.model_dump(), pretrain=pretrain.model_dump())
        base = pretrain_base(config, corpora, seed, pretrain)
        path = save_checkpoint(base, out / BASE_NAME, CheckpointMeta(seed=seed, note="frozen base"))
        diag.step("base_saved", path=str(path), learnable=base.partition.learnable_count)

    _run("pretrain-lm", out, {"seed": seed, "corpora": list(args.corpus)}, body)


def cmd_train(args: argparse.Namespace) -> None:
    settings = resolve_settings(args, {
        "seed": args.seed,
        "epochs": args.epochs,
        "k_captions": args.k_captions,
        "targets": args.targets,
        "init_checkpoint": args.init_checkpoint,
        "selection": args.selection,
    })
    config = build_model_from(TrainConfig, settings)
    out = _out_dir(args, f"train-s{config.seed}")

    def body(diag: DiagnosticContext) -> None:
        corpus = load_dataset(args.corpus)
        base = load_checkpoint(args.base)
        result = train_from_base(base, corpus, config, out)
        diag.step("trained", best_epoch=result.log.best_epoch, dev_metric=result.checkpoint.meta.dev_metric)

    _run("train", out, {"seed": config.seed, "config": config.model_dump(), "corpus": args.corpus,
                        "base": args.base}, body)


def cmd_decode(args: argparse.Namespace) -> None:
    settings = resolve_settings(args, {
        "strategy": args.strategy,
        "beam_width": args.beam_width,
        "max_len": args.max_len,
        "seed": args.seed,
    })
    config = build_model_from(DecodeConfig, settings)
    out = _out_dir(args, f"decode-{config.strategy}")

    def body(diag: DiagnosticContext) -> None:
        corpus = load_dataset(args.corpus)
        model = load_checkpoint(args.checkpoint).to_model()
        split = corpus[args.split]
        hyps = decode_split(model, split, config)
        n = write_hypotheses(out / HYPS_NAME, split, hyps, corpus)
        diag.step("decoded", split=args.split, items=n)

    _run("decode", out, {"seed": config.seed, "config": config.model_dump(), "checkpoint": args.checkpoint}, body)


def evaluate_row(spec: ExperimentSpec, split: DatasetSplit, seed: int,
                 hyps: Optional[Dict[str, List[int]]] = None) -> ReportRow:
    if spec.row == "annotator_topline":
        return annotator_row(split, seed, spec)
    if spec.row == "generated_captions_topline":
        return captions_row(split, seed, spec)
    if hyps is None:
        raise ConfigError("hyps", f"row {spec.row!r} scores decoded hypotheses")
    missing = [it.item_id for it in split.items if it.item_id not in hyps]
    if missing:
        raise DataError(f"{len(missing)} items have no hypothesis, e.g. {missing[0]}")
    return model_row(row_label(spec), split, hyps, seed, spec.repeats)


def cmd_evaluate(args: argparse.Namespace) -> None:
    settings = resolve_settings(args, {"seed": args.seed, "repeats": args.repeats})
    seed = int(settings.get("seed", 0))
    repeats = int(settings.get("repeats", REPEATS))
    out = _out_dir(args, f"eval-{args.row}")
    ns = tuple(args.n_refs) if args.n_refs else N_VALUES

    def body(diag: DiagnosticContext) -> None:
        corpus = load_dataset(args.corpus)
        split = corpus[args.split]
        oracle = corpus.config.oracle
        if args.caption_strategy:
            oracle = oracle.model_copy(update={"strategy": args.caption_strategy})
        spec = experiment_for(args.row, oracle, repeats)
        diag.root.update(experiment=spec.model_dump())
        hyps = read_hypotheses(Path(args.hyps)) if args.hyps else None
        row = evaluate_row(spec, split, seed, hyps)
        row.cells = {n: row.cells.get(n) for n in ns}
        write_rows(out / RESULTS_NAME, [row])
        if hyps is not None:
            score = corpus_bleu([(hyps[it.item_id], it.references) for it in split.items])
            print(format_score(score))
            diag.step("bleu_all_references", score=score.score)
        for n, cell in row.cells.items():
            print(f"n={n} " + ("n/a" if cell is None else f"{cell.mean:.2f}±{cell.dispersion:.2f}"))
        diag.step("evaluated", row=row.label)

    _run("evaluate", out, {"seed": seed, "row": args.row, "corpus": args.corpus, "hyps": args.hyps}, body)


def cmd_sweep(args: argparse.Namespace) -> None:
    settings = resolve_settings(args, {
        "seed": args.seed,
        "epochs": args.epochs,
        "n_train": args.n_train,
        "n_dev": args.n_dev,
        "n_test": args.n_test,
    })
    seed = int(settings.get("seed", 0))
    corpus_seed = int(settings.get("corpus_seed", seed))
    train_config = build_model_from(TrainConfig, settings)
    out = _out_dir(args, f"sweep-{args.kind}-s{seed}")

    def body(diag: DiagnosticContext) -> None:
        base = load_checkpoint(args.base)
        if args.kind == "sensitivity":
            cells = sensitivity_sweep(base, corpus_config_from(settings), train_config, corpus_seed, seed,
                                      run_dir=out)
            write_records(out / SWEEP_NAME, cells)
            sweep_frame(cells).to_csv(out / "sweep.csv", index=False)
            diag.step("sweep_summary", **sweep_summary(cells))
            return
        if not args.corpus:
            raise ConfigError("corpus", "the caption-count sweep trains on an existing corpus")
        results = caption_count_sweep(base, load_dataset(args.corpus), train_config, seed, run_dir=out)
        write_records(out / CAPTION_COUNT_NAME, [{"k": k, **c.model_dump()} for k, c in results.items()])
        caption_count_frame(results).to_csv(out / "caption_count.csv", index=False)
        diag.step("plateau", **plateau_stats(results))

    _run("sweep", out, {"seed": seed, "corpus_seed": corpus_seed, "kind": args.kind}, body)


def collect_runs(run_dirs: Sequence[str]):
    rows: List[ReportRow] = []
    sweep: List[SweepCell] = []
    counts: Dict[int, CellResult] = {}
    for d in run_dirs:
        root = Path(d)
        if (root / RESULTS_NAME).exists():
            rows.extend(read_rows(root / RESULTS_NAME))
        if (root / SWEEP_NAME).exists():
            sweep.extend(SweepCell(**rec) for rec in iter_records(root / SWEEP_NAME))
        if (root / CAPTION_COUNT_NAME).exists():
            for rec in iter_records(root / CAPTION_COUNT_NAME):
                k = int(rec.pop("k"))
                counts[k] = CellResult(**rec)
    return rows, sweep, counts


def cmd_report(args: argparse.Namespace) -> None:
    out = _out_dir(args, "report")

    def body(diag: DiagnosticContext) -> None:
        rows, sweep, counts = collect_runs(args.runs)
        labels = table_labels()
        order = {label: i for i, label in enumerate(labels)}
        rows.sort(key=lambda r: order.get(r.label, len(order)))
        expected = labels if args.strict else None
        written = write_report(out, rows, expected, sweep or None, counts or None)
        print((out / "table.txt").read_text(encoding="utf-8"), end="")
        diag.step("report_written", files=sorted(written))

    _run("report", out, {"runs": list(args.runs), "strict": args.strict}, body)


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vgs", description="Image-pivot speech translation experiments")
    parser.add_argument("--log-level", default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name: str, handler: Callable[[argparse.Namespace], None], help_text: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--seed", type=int)
        p.add_argument("--out")
        p.set_defaults(handler=handler)
        return p

    p = command("generate-corpus", cmd_generate_corpus, "build a synthetic corpus")
    p.add_argument("--mode", choices=["paraphrase", "translation"])
    p.add_argument("--oracle-tier", choices=["tier_A", "tier_B", "tier_C"])
    p.add_argument("--strategy", choices=["deterministic_best", "diverse_templates", "sampled"])
    p.add_argument("--k-captions", type=int)
    for split in ("train", "dev", "test"):
        p.add_argument(f"--n-{split}", type=int)

    p = command("pretrain-lm", cmd_pretrain_lm, "pretrain the shared frozen base")
    p.add_argument("--corpus", action="append", required=True, help="corpus directory; repeatable")

    p = command("train", cmd_train, "train the adapter on a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--base", required=True, help="frozen base checkpoint")
    p.add_argument("--init-checkpoint")
    p.add_argument("--targets", choices=["captions", "references"])
    p.add_argument("--k-captions", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--selection", choices=["bleu", "loss"])

    p = command("decode", cmd_decode, "decode a split with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--strategy", choices=["greedy", "beam", "diverse_beam", "multinomial"])
    p.add_argument("--beam-width", type=int)
    p.add_argument("--max-len", type=int)

    p = command("evaluate", cmd_evaluate, "score one table row")
    p.add_argument("--row", required=True, choices=sorted(ROW_LABELS))
    p.add_argument("--corpus", required=True)
    p.add_argument("--hyps")
    p.add_argument("--split", default="test", choices=["train", "dev", "test"])
    p.add_argument("--n-refs", type=int, nargs="+")
    p.add_argument("--caption-strategy", choices=["deterministic_best", "diverse_templates", "sampled"],
                   help="captioning strategy the scored model was trained on; defaults to the corpus oracle")
    p.add_argument("--repeats", type=int)

    p = command("sweep", cmd_sweep, "captioner sensitivity grid or caption-count sweep")
    p.add_argument("--kind", required=True, choices=["sensitivity", "captions"])
    p.add_argument("--base", required=True)
    p.add_argument("--corpus")
    p.add_argument("--epochs", type=int)
    for split in ("train", "dev", "test"):
        p.add_argument(f"--n-{split}", type=int)

    p = command("report", cmd_report, "assemble the results table")
    p.add_argument("--runs", nargs="+", required=True)
    p.add_argument("--strict", action="store_true", help="fail unless every row is present")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    try:
        args.handler(args)
    except VGSError as exc:
        logger.error("command=%s failed error=%s detail=%s", args.command, exc.__class__.__name__, exc)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
