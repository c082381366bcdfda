"""Command-line entry point: split, train, predict, evaluate, scan, export-features.

Exit codes: 2 bad input/parse error, 3 missing embedding, 4 config/dimension
mismatch, 5 prediction/truth accession mismatch, 6 missing variant embedding.
Every command writes a run manifest (JSON) next to its outputs.
"""

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import backend, data, metrics, scan as scan_mod, training as train_mod
from .config import ModelConfig
from .embeddings import read_embedding, read_manifest
from .errors import (
    ConfigMismatch, DuplicateError, FormatError, MissingInput, MissingVariant,
    ParseError, SegthermError, SequenceTooShort,
)
from .model import Model

FORMAT_VERSIONS = {"embedding": 1, "checkpoint": 1}


def _write_run_manifest(out_dir, command, args_dict, seed, inputs, outputs, started):
    manifest = {
        "command": command,
        "args": {k: str(v) for k, v in args_dict.items() if v is not None},
        "seed": seed,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "format_versions": FORMAT_VERSIONS,
        "backend": backend.backend_name(),
        "wall_clock_s": round(time.monotonic() - started, 3),
    }
    path = Path(out_dir) / f"{command}_manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_embeddings(manifest_path):
    entries = read_manifest(manifest_path)
    return {acc: read_embedding(p) for acc, p in entries.items()}, entries


def _parse_boundaries(text):
    return [float(x) for x in text.split(",") if x.strip()]


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_split(args):
    started = time.monotonic()
    records = data.parse_dataset(args.data)
    assignment = data.make_split(
        records, seed=args.seed, test_frac=args.test_frac,
        val_cluster_frac=args.val_frac,
        temp_boundaries=_parse_boundaries(args.boundaries),
        cluster_threshold=args.cluster_threshold, kmer=args.kmer,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    split_path = out / "split.tsv"
    assignment.to_tsv(split_path)
    rows = data.split_summary(records, assignment, _parse_boundaries(args.boundaries))
    summary_path = out / "summary.tsv"
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write("range\tsequences\tclusters\ttrain\tvalidation\ttest\n")
        for r in rows:
            fh.write(
                f"{r['range']}\t{r['sequences']}\t{r['clusters']}\t"
                f"{r['train']}\t{r['validation']}\t{r['test']}\n"
            )
    _write_run_manifest(out, "split", vars(args), args.seed, [args.data],
                        [split_path, summary_path], started)
    return 0


def cmd_train(args):
    started = time.monotonic()
    records = data.parse_dataset(args.data)
    assignment = data.SplitAssignment.from_tsv(args.split)
    embeddings, _ = _load_embeddings(args.embeddings)
    by_acc = {r.accession: r for r in records}
    train_records = [by_acc[a] for a in assignment.subset("train") if a in by_acc]
    val_records = [by_acc[a] for a in assignment.subset("validation") if a in by_acc]

    model_cfg = ModelConfig.from_dict(json.loads(Path(args.model_config).read_text())) \
        if args.model_config else ModelConfig()
    train_cfg = train_mod.TrainConfig.from_dict(json.loads(Path(args.train_config).read_text())) \
        if args.train_config else train_mod.TrainConfig()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model = Model.create(model_cfg, seed=train_cfg.seed)
    log_path = out / "train_log.jsonl"
    with open(log_path, "w", encoding="utf-8") as log_fh:
        ckpt = train_mod.train(
            train_records, val_records, embeddings, model, train_cfg,
            log_sink=lambda entry: log_fh.write(json.dumps(entry, sort_keys=True) + "\n"),
        )
    ckpt_path = out / "checkpoint.segc"
    train_mod.save_checkpoint(ckpt, ckpt_path)
    _write_run_manifest(out, "train", vars(args), train_cfg.seed,
                        [args.data, args.split, args.embeddings],
                        [ckpt_path, log_path], started)
    return 0


def cmd_predict(args):
    started = time.monotonic()
    ckpt = train_mod.load_checkpoint(args.checkpoint)
    entries = read_manifest(args.embeddings)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        for acc, path in entries.items():
            emb = read_embedding(path)
            if emb.dim != ckpt.model.cfg.embed_dim:
                raise ConfigMismatch(
                    f"{acc}: embedding dim {emb.dim} != model dim {ckpt.model.cfg.embed_dim}"
                )
            try:
                pred = ckpt.model.predict(emb)
                fh.write(json.dumps(pred.to_json_dict(), sort_keys=True) + "\n")
            except SequenceTooShort as exc:
                fh.write(json.dumps(
                    {"accession": acc, "error": str(exc)}, sort_keys=True) + "\n")
    _write_run_manifest(out_path.parent, "predict", vars(args), None,
                        [args.checkpoint, args.embeddings], [out_path], started)
    return 0


def cmd_evaluate(args):
    started = time.monotonic()
    truth = {r.accession: r.temperature for r in data.parse_dataset(args.truth)}
    preds, truths = [], []
    missing = []
    with open(args.predictions, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            if "error" in obj:
                continue
            acc = obj["accession"]
            if acc not in truth:
                missing.append(acc)
                continue
            preds.append(obj["y_hat"])
            truths.append(truth[acc])
    if missing:
        print("accessions missing from truth: " + ", ".join(missing), file=sys.stderr)
        return 5
    report = metrics.evaluate(preds, truths, _parse_boundaries(args.boundaries))
    print(report.to_table())
    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text(json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
        _write_run_manifest(out_path.parent, "evaluate", vars(args), None,
                            [args.predictions, args.truth], [out_path], started)
    return 0


def _read_sequence(arg):
    p = Path(arg)
    if p.exists():
        return p.read_text(encoding="utf-8").strip()
    return arg.strip()


def cmd_scan(args):
    started = time.monotonic()
    ckpt = train_mod.load_checkpoint(args.checkpoint)
    wild = read_embedding(args.wild_type)
    sequence = _read_sequence(args.sequence)
    if args.synth_seed is not None:
        provider = scan_mod.SynthVariantProvider(sequence, wild.dim, args.synth_seed)
    elif args.variants:
        provider = scan_mod.FileVariantProvider(read_manifest(args.variants), read_embedding)
    else:
        print("scan: need --variants MANIFEST or --synth-seed N", file=sys.stderr)
        return 2
    criteria = scan_mod.SelectionCriteria.from_dict(
        json.loads(Path(args.criteria).read_text())) if args.criteria \
        else scan_mod.SelectionCriteria()
    result = scan_mod.scan(wild, sequence, provider, ckpt.model)
    candidates = scan_mod.select_candidates(result, criteria)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scan_path = out / "scan.json"
    scan_path.write_text(json.dumps(result.to_json_dict(), sort_keys=True) + "\n")
    heatmap_path = out / "heatmap.csv"
    result.write_heatmap_csv(heatmap_path)
    cand_path = out / "candidates.tsv"
    with open(cand_path, "w", encoding="utf-8") as fh:
        fh.write("position\tletter\tdelta_c\tsegment_importance\n")
        for pos, letter, delta, imp in candidates:
            fh.write(f"{pos}\t{letter}\t{delta:.6f}\t{imp:.4f}\n")
    _write_run_manifest(out, "scan", vars(args), args.synth_seed,
                        [args.checkpoint, args.wild_type],
                        [scan_path, heatmap_path, cand_path], started)
    return 0


def cmd_export_features(args):
    started = time.monotonic()
    ckpt = train_mod.load_checkpoint(args.checkpoint)
    embeddings, _ = _load_embeddings(args.embeddings)
    temps = {r.accession: r.temperature for r in data.parse_dataset(args.data)}
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    from .autodiff import Tensor

    with open(out_path, "w", encoding="utf-8") as fh:
        dim = ckpt.model.cfg.model_dim * ckpt.model.cfg.num_scales
        header = ["accession"] + [f"f{i}" for i in range(dim)] + ["temperature_c"]
        fh.write(",".join(header) + "\n")
        for acc in sorted(embeddings):
            if acc not in temps:
                continue
            emb = embeddings[acc]
            parts = ckpt.model.forward_parts(Tensor(emb.values[None, :, :]))
            if args.stage == "pooled":
                vec = np.concatenate([z.data[0] for z in parts["pooled"]])
            else:
                # variable segment counts: mean over segments keeps a fixed width
                vec = np.concatenate([y.data[0].mean(axis=0) for y in parts[args.stage]])
            values = ",".join(f"{v:.6g}" for v in vec)
            fh.write(f"{acc},{values},{temps[acc]:g}\n")
    _write_run_manifest(out_path.parent, "export-features", vars(args), None,
                        [args.checkpoint, args.embeddings, args.data], [out_path], started)
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="segtherm",
        description="Segment-level attention model for enzyme temperature stability.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("split", help="partition a dataset into train/validation/test")
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--test-frac", type=float, default=0.10)
    p.add_argument("--val-frac", type=float, default=0.10)
    p.add_argument("--boundaries", default="45,70,100")
    p.add_argument("--cluster-threshold", type=float, default=0.5)
    p.add_argument("--kmer", type=int, default=5)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train a model on a prepared split")
    p.add_argument("--data", required=True)
    p.add_argument("--split", required=True)
    p.add_argument("--embeddings", required=True, help="embedding manifest TSV")
    p.add_argument("--model-config", help="ModelConfig JSON (defaults if omitted)")
    p.add_argument("--train-config", help="TrainConfig JSON (defaults if omitted)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict stability for a manifest of embeddings")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--out", required=True, help="output JSONL path")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score a prediction JSONL against truth")
    p.add_argument("--predictions", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--boundaries", default="45,70")
    p.add_argument("--out", help="optional report JSON path")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("scan", help="single-mutant scan of one sequence")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--wild-type", required=True, help="wild-type embedding file")
    p.add_argument("--sequence", required=True, help="sequence string or text file")
    p.add_argument("--variants", help="variant embedding manifest keyed <pos><letter>")
    p.add_argument("--synth-seed", type=int, help="use the synthetic embedder instead")
    p.add_argument("--criteria", help="SelectionCriteria JSON")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_scan)

    p = sub.add_parser("export-features", help="dump intermediate features as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--embeddings", required=True)
    p.add_argument("--data", required=True, help="dataset TSV supplying temperature labels")
    p.add_argument("--stage", required=True, choices=["segments", "dgsa", "pooled"])
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_features)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, DuplicateError, FileNotFoundError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MissingInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ConfigMismatch as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except MissingVariant as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 6
    except SegthermError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
