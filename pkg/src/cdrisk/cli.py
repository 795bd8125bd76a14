"""Command-line interface: clean | train | evaluate | explain | importance |
generate | serve.

Machine-readable artifacts go to files; human summaries go to stdout. Exit
codes: 0 success, 1 user error (bad input, bad arguments), 2 internal error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import traceback
from pathlib import Path

import numpy as np

from .errors import CdriskError
from .explainer import global_importance, kernel_shap, prepare_background, top_k
from .ingest import (
    apply_normalizer,
    clean_dataset,
    default_codebook_path,
    load_clean_csv,
    load_codebook,
    write_clean_csv,
)
from .model import ClassWeights, ModelConfig, classify_batch, forward_batch, loss_weighted_ce, metrics
from .synth import generate, load_plants
from .trainer import TrainConfig, class_weights, load_checkpoint, save_checkpoint, train


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors are user errors: exit 1, not 2
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        self.print_usage(sys.stderr)
        raise SystemExit(1)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cdrisk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_codebook(p):
        p.add_argument("--codebook", default=str(default_codebook_path()),
                       help="codebook JSON (default: bundled)")

    p = sub.add_parser("clean", help="clean a raw survey CSV")
    p.add_argument("--input", required=True)
    add_codebook(p)
    p.add_argument("--out", required=True, help="clean CSV output")
    p.add_argument("--report", required=True, help="JSON rejection report")

    p = sub.add_parser("generate", help="generate synthetic clean data with planted effects")
    add_codebook(p)
    p.add_argument("--plants", required=True, help="PlantSpec JSON fixture")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="clean CSV output")

    p = sub.add_parser("train", help="train one per-disease model")
    p.add_argument("--data", required=True, help="clean CSV")
    add_codebook(p)
    p.add_argument("--disease", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="checkpoint path (.cdrp)")
    p.add_argument("--report", help="optional JSON training report")
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--lr0", type=float, default=0.001)
    p.add_argument("--hidden-dim", type=int, default=64)
    p.add_argument("--n-blocks", type=int, default=3)
    p.add_argument("--no-class-weights", action="store_true")

    p = sub.add_parser("evaluate", help="metrics of a checkpoint on a clean CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    add_codebook(p)
    p.add_argument("--out", help="optional JSON metrics output")

    p = sub.add_parser("explain", help="local SHAP attribution for one row")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="clean CSV (background + rows)")
    add_codebook(p)
    p.add_argument("--row", type=int, required=True)
    p.add_argument("--budget", type=int, default=2124)
    p.add_argument("--background-k", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="optional JSON output {base, fx, phi}")

    p = sub.add_parser("importance", help="global feature importance ranking")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True, help="clean CSV")
    add_codebook(p)
    p.add_argument("--sample", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget", type=int, default=2124)
    p.add_argument("--background-k", type=int, default=100)
    p.add_argument("--exclude", default="", help="comma-separated feature ids to exclude")
    p.add_argument("--out", help="ranked CSV output (default: <DISEASE>.importance.csv)")

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--checkpoints", required=True, help="directory of .cdrp files")
    add_codebook(p)
    p.add_argument("--data", help="clean CSV for /explain backgrounds")
    p.add_argument("--background-k", type=int, default=100)

    return parser


def _cmd_clean(args) -> int:
    schema = load_codebook(args.codebook)
    records, report = clean_dataset(args.input, schema)
    write_clean_csv(records, schema, args.out)
    Path(args.report).write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    rej = ", ".join(f"{k}: {v}" for k, v in sorted(report.rejected.items())) or "none"
    print(f"accepted {report.accepted}/{report.total_in} rows (rejected -> {rej})")
    print(f"wrote {args.out} and {args.report}")
    return 0


def _cmd_generate(args) -> int:
    schema = load_codebook(args.codebook)
    plants = load_plants(args.plants, schema)
    records = generate(schema, args.n, plants, args.seed)
    write_clean_csv(records, schema, args.out)
    Y = np.stack([r.y for r in records])
    for j, label in enumerate(schema.labels):
        marker = " (planted)" if any(p.disease == label for p in plants) else ""
        print(f"{label}: positive rate {Y[:, j].mean():.3f}{marker}")
    print(f"wrote {args.n} records to {args.out}")
    return 0


def _records_from_clean(path, schema):
    from .ingest import CleanRecord

    X, Y = load_clean_csv(path, schema)
    return [CleanRecord(x=X[i], y=Y[i]) for i in range(len(X))]


def _cmd_train(args) -> int:
    schema = load_codebook(args.codebook)
    records = _records_from_clean(args.data, schema)
    mc = ModelConfig(hidden_dim=args.hidden_dim, n_blocks=args.n_blocks, seed=args.seed)
    tc = TrainConfig(
        batch_size=args.batch_size,
        epochs=args.epochs,
        lr0=args.lr0,
        seed=args.seed,
        use_class_weights=not args.no_class_weights,
    )
    model, report = train(records, schema, args.disease, mc, tc)
    save_checkpoint(model, args.out)
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2), encoding="utf-8")
    print(
        f"{args.disease}: best epoch {report.best_epoch} "
        f"(test loss {min(report.test_loss):.4f}), "
        f"accuracy {report.accuracy:.2%}, recall {report.recall:.2%}"
    )
    print(f"wrote {args.out}")
    return 0


def _cmd_evaluate(args) -> int:
    schema = load_codebook(args.codebook)
    model = load_checkpoint(args.model, schema)
    X, Y = load_clean_csv(args.data, schema)
    y = Y[:, schema.label_index(model.disease)]
    p = forward_batch(model, apply_normalizer(X, model.norm))
    w = class_weights(y) if len(np.unique(y)) == 2 else ClassWeights(1.0, 1.0)
    loss = loss_weighted_ce(p, y, w)
    m = metrics(classify_batch(p), y)
    result = {"disease": model.disease, "loss": loss, **m, "n": int(len(y))}
    if args.out:
        Path(args.out).write_text(json.dumps(result, indent=2), encoding="utf-8")
    print(
        f"{model.disease}: loss {loss:.4f}, accuracy {m['accuracy']:.2%}, "
        f"recall {m['recall']:.2%} on {len(y)} rows"
    )
    return 0


def _cmd_explain(args) -> int:
    schema = load_codebook(args.codebook)
    model = load_checkpoint(args.model, schema)
    X, _ = load_clean_csv(args.data, schema)
    if not (0 <= args.row < len(X)):
        raise CdriskError(f"--row {args.row} out of range (0..{len(X) - 1})")
    bg = prepare_background(model, X, k=args.background_k, seed=args.seed)
    xn = apply_normalizer(X[args.row], model.norm)
    attr = kernel_shap(model, xn, bg, budget=args.budget, seed=args.seed)
    phi = {fid: float(v) for fid, v in zip(schema.feature_ids, attr.phi)}
    if args.out:
        doc = {"disease": model.disease, "base": attr.base, "fx": attr.fx, "phi": phi}
        Path(args.out).write_text(json.dumps(doc, indent=2), encoding="utf-8")
    print(f"{model.disease} row {args.row}: risk {attr.fx:.4f} (baseline {attr.base:.4f})")
    for fid, v in sorted(phi.items(), key=lambda kv: -abs(kv[1]))[:5]:
        print(f"  {fid}: {v:+.4f}")
    return 0


def _cmd_importance(args) -> int:
    schema = load_codebook(args.codebook)
    model = load_checkpoint(args.model, schema)
    X, _ = load_clean_csv(args.data, schema)
    if not args.out:
        args.out = f"{model.disease}.importance.csv"
    exclude = [s for s in args.exclude.split(",") if s]
    for fid in exclude:
        schema.feature_index(fid)  # validate early
    bg = prepare_background(model, X, k=args.background_k, seed=args.seed)
    Xn = apply_normalizer(X, model.norm)
    gi = global_importance(
        model, Xn, bg, schema.feature_ids,
        sample_size=args.sample, seed=args.seed, budget=args.budget,
    )
    ranked = top_k(gi, k=len(schema.feature_ids) - len(exclude), exclude=exclude)
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["disease", "feature_id", "mean_abs_shap", "rank"])
        for rank, fid in enumerate(ranked, start=1):
            i = gi.feature_ids.index(fid)
            writer.writerow([gi.disease, fid, repr(float(gi.scores[i])), rank])
    sidecar = Path(args.out).with_suffix(".signed.json")
    sidecar.write_text(
        json.dumps(
            {
                "disease": gi.disease,
                "sample_size": gi.sample_size,
                "seed": gi.seed,
                "mean_signed_shap": {f: float(v) for f, v in zip(gi.feature_ids, gi.signed)},
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    print(f"{gi.disease}: top 3 -> {', '.join(ranked[:3])}")
    print(f"wrote {args.out} ({len(ranked)} features) and {sidecar}")
    return 0


def _cmd_serve(args) -> int:
    import uvicorn

    from .errors import PortBusy
    from .service import create_app

    app = create_app(
        codebook_path=args.codebook,
        checkpoint_dir=args.checkpoints,
        data_path=args.data,
        background_k=args.background_k,
    )
    try:
        uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    except OSError as exc:
        if "address already in use" in str(exc).lower():
            raise PortBusy(f"port {args.port} is already in use") from exc
        raise
    return 0


_COMMANDS = {
    "clean": _cmd_clean,
    "generate": _cmd_generate,
    "train": _cmd_train,
    "evaluate": _cmd_evaluate,
    "explain": _cmd_explain,
    "importance": _cmd_importance,
    "serve": _cmd_serve,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        return _COMMANDS[args.command](args)
    except CdriskError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
