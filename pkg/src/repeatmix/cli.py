"""Command line interface.

Commands: ingest, train, eval, sample-bench, pcc-analysis. Shared flags:
--config, --seed, --out, --dataset. REPEATMIX_THREADS caps BLAS worker
threads and is honored before the numerical modules load.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path


def _apply_thread_cap() -> None:
    cap = os.environ.get("REPEATMIX_THREADS")
    if cap:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _shared_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", help="output path (file or directory per command)")
    p.add_argument("--dataset", help="dataset name for built-in defaults (e.g. uci)")


def _resolve_config(args, extra: dict | None = None):
    from . import config as config_mod

    file_overrides = config_mod.load_file(args.config) if args.config else {}
    cli: dict[str, object] = dict(extra or {})
    if args.seed is not None:
        cli["seed"] = args.seed
    if getattr(args, "dataset", None):
        cli["dataset_name"] = args.dataset
    if getattr(args, "cache", None):
        cli["cache_path"] = args.cache
    if getattr(args, "out", None):
        cli["out_dir"] = args.out
    if getattr(args, "csv", None):
        cli["dataset_path"] = args.csv
    return config_mod.resolve(file_overrides, cli)


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _record(fields: dict) -> str:
    return " ".join(f"{k}={_fmt(v)}" for k, v in fields.items())


def cmd_ingest(args) -> int:
    from . import tgraph

    cfg = _resolve_config(
        args,
        {
            "data_bipartite": True if args.bipartite else None,
            "data_node_dim": args.node_dim,
            "data_edge_dim": args.edge_dim,
        },
    )
    ingest_cfg = tgraph.IngestConfig(
        has_header=cfg.data_has_header,
        bipartite=cfg.data_bipartite,
        node_dim=cfg.data_node_dim,
        edge_dim=cfg.data_edge_dim,
    )
    try:
        g = tgraph.ingest_csv(args.csv, ingest_cfg, args.node_features)
    except tgraph.IngestError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out = args.out or (Path(args.csv).with_suffix(".rmxg"))
    tgraph.save_cache(g, out)
    ratio = tgraph.repeat_ratio(g)
    print(
        _record(
            {
                "nodes": g.node_count,
                "interactions": g.interaction_count,
                "repeat_ratio": ratio,
                "bipartite": g.bipartite,
                "cache": str(out),
            }
        )
    )
    return 0


def _model_flags(args) -> dict:
    extra: dict[str, object] = {}
    if args.model == "repeatmixer-f":
        extra["model_second_order"] = False
    elif args.model == "repeatmixer":
        extra["model_second_order"] = True
    if args.nss:
        extra["model_nss"] = args.nss
        if args.nss != "repeat":
            extra["model_second_order"] = False
    if args.fusion:
        extra["model_fusion"] = args.fusion
    for flag in args.ablation or []:
        if flag == "no-te":
            extra["model_no_time_encoding"] = True
        elif flag == "no-se":
            extra["model_no_segment_embedding"] = True
        elif flag == "sep-e":
            extra["model_separate_encoding"] = True
            extra["model_second_order"] = False
        else:
            raise SystemExit(f"unknown ablation {flag!r}")
    return extra


def cmd_train(args) -> int:
    import numpy as np

    from . import checkpoint as ckpt_mod
    from . import harness, tgraph

    cfg = _resolve_config(args, _model_flags(args))
    g = tgraph.load_cache(args.cache)
    split = tgraph.chronological_split(g)
    model = cfg.build_model()
    train_cfg = harness.TrainConfig(
        epochs=args.epochs if args.epochs is not None else cfg.train_epochs,
        patience=args.patience if args.patience is not None else cfg.train_patience,
        batch_size=cfg.train_batch_size,
        lr=cfg.train_lr,
        seed=cfg.seed,
    )

    out_dir = Path(args.out or ".")
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.txt"
    lines: list[str] = []

    def on_epoch(rec: dict) -> None:
        train_line = _record(
            {"epoch": rec["epoch"], "split": "train", "strategy": "rnd",
             "loss": rec["loss"]}
        )
        val_line = _record(
            {"epoch": rec["epoch"], "split": "val", "strategy": "rnd",
             "ap": rec["val_ap"], "auc": rec["val_auc"]}
        )
        lines.append(train_line)
        lines.append(val_line)
        # wall-clock goes to the console only, so metrics files are seed-stable
        print(train_line + f" seconds={rec['seconds']!r}")
        print(val_line)

    try:
        params, report = harness.train(g, split, model, train_cfg, on_epoch)
    except FloatingPointError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    lines.append(
        _record(
            {"split": "best", "strategy": "rnd", "epoch": report.best_epoch,
             "ap": report.ap, "auc": report.auc}
        )
    )
    metrics_path.write_text("\n".join(lines) + "\n")
    ckpt_mod.save(out_dir / "checkpoint.rmxc", cfg, params, report.ap, report.best_epoch)
    print(_record({"checkpoint": str(out_dir / "checkpoint.rmxc"),
                   "metrics": str(metrics_path), "best_epoch": report.best_epoch,
                   "val_ap": report.ap, "seconds": report.seconds}))
    return 0


def cmd_eval(args) -> int:
    import numpy as np

    from . import checkpoint as ckpt_mod
    from . import harness, tgraph

    g = tgraph.load_cache(args.cache)
    try:
        ckpt = ckpt_mod.load(args.checkpoint)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    cfg = ckpt.config
    if args.seed is not None:
        cfg = type(cfg)(**{**cfg.__dict__, "seed": args.seed})
    model = cfg.build_model()
    params = model.init_params(np.random.default_rng(0))
    ckpt_mod.restore_params(ckpt, params)
    split = tgraph.chronological_split(g)
    report = harness.evaluate(
        g, split, params, model,
        strategy=args.neg, inductive=args.inductive, seed=cfg.seed,
        batch_size=cfg.train_batch_size,
    )
    fields = {"split": "test", "strategy": args.neg, "inductive": args.inductive,
              "ap": report.ap, "auc": report.auc}
    if args.neg != "rnd":
        fields["rnd_fallbacks"] = report.negative_fallbacks
    line = _record(fields)
    if args.out:
        Path(args.out).write_text(line + "\n")
    print(line + f" seconds={report.seconds!r}")
    return 0


def cmd_sample_bench(args) -> int:
    import time

    import numpy as np

    from . import tgraph
    from .sampling import SamplerConfig, kernels

    g = tgraph.load_cache(args.cache)
    cfg = SamplerConfig(k=args.k, w=args.w, r=args.r, m=args.m)
    rng = np.random.default_rng(args.seed or 0)
    n = args.queries
    qsrc = rng.integers(0, g.node_count, size=n)
    qdst = rng.integers(0, g.node_count, size=n)
    span = g.t[-1] - g.t[0]
    qt = g.t[0] + span * (0.25 + 0.75 * rng.random(n))

    backends = args.backends.split(",") if args.backends else kernels.available_backends()
    arrays = (g.hist_offsets, g.hist_nbr, g.hist_time, g.hist_eidx)
    for backend_name in backends:
        be = kernels.get_backend(backend_name)
        for strategy in ("recent", "repeat_first", "repeat_second"):
            lat = np.empty(n)
            t_all = time.perf_counter()
            for i in range(n):
                t0 = time.perf_counter()
                if strategy == "recent":
                    be.recent_indices(*arrays, int(qsrc[i]), float(qt[i]), cfg.k)
                elif strategy == "repeat_first":
                    be.first_order_indices(*arrays, int(qsrc[i]), int(qdst[i]),
                                           float(qt[i]), cfg.k, cfg.w, cfg.r)
                else:
                    be.second_order_indices(*arrays, int(qsrc[i]), int(qdst[i]),
                                            float(qt[i]), cfg.k, cfg.w, cfg.r, cfg.m)
                lat[i] = time.perf_counter() - t0
            total = time.perf_counter() - t_all
            print(
                _record(
                    {
                        "backend": backend_name,
                        "strategy": strategy,
                        "queries": n,
                        "mean_us": float(lat.mean() * 1e6),
                        "p99_us": float(np.quantile(lat, 0.99) * 1e6),
                        "qps": float(n / total),
                    }
                )
            )
    return 0


def cmd_pcc_analysis(args) -> int:
    from . import harness, tgraph
    from .sampling import SamplerConfig

    g = tgraph.load_cache(args.cache)
    split = tgraph.chronological_split(g)
    cfg = SamplerConfig(k=args.k, w=args.w, r=args.r, m=args.m)
    means = harness.pcc_preexperiment(
        g, split, cfg, seed=args.seed or 0, limit=args.limit
    )
    for strategy in ("recent", "repeat"):
        print(
            _record(
                {
                    "strategy": strategy,
                    "mean_pcc_pos": means[f"{strategy}_pos"],
                    "mean_pcc_neg": means[f"{strategy}_neg"],
                    "discrepancy": means[f"{strategy}_gap"],
                }
            )
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="repeatmix")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse a CSV edge list into a binary cache")
    _shared_flags(p)
    p.add_argument("csv", help="edge list: src,dst,timestamp,label[,features]")
    p.add_argument("--node-features", help="optional node feature CSV")
    p.add_argument("--bipartite", action="store_true", default=None)
    p.add_argument("--node-dim", type=int, default=None)
    p.add_argument("--edge-dim", type=int, default=None)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("train", help="train a model on an ingested cache")
    _shared_flags(p)
    p.add_argument("--cache", required=True)
    p.add_argument("--model", choices=["repeatmixer", "repeatmixer-f"], default=None)
    p.add_argument("--nss", choices=["repeat", "recent", "uniform", "time_aware"],
                   default=None)
    p.add_argument("--fusion", choices=["adaptive", "summation", "concatenation"],
                   default=None)
    p.add_argument("--ablation", action="append",
                   help="no-te | no-se | sep-e (repeatable)")
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    _shared_flags(p)
    p.add_argument("--cache", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--neg", choices=["rnd", "hist", "ind"], default="rnd")
    p.add_argument("--inductive", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sample-bench", help="time the sampling strategies")
    _shared_flags(p)
    p.add_argument("--cache", required=True)
    p.add_argument("--queries", type=int, default=2000)
    p.add_argument("--backends", help="comma list; default: all available")
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--w", type=int, default=5)
    p.add_argument("--r", type=int, default=10)
    p.add_argument("--m", type=int, default=10)
    p.set_defaults(func=cmd_sample_bench)

    p = sub.add_parser("pcc-analysis",
                       help="endpoint interval-correlation means per strategy")
    _shared_flags(p)
    p.add_argument("--cache", required=True)
    p.add_argument("--limit", type=int, default=None)
    p.add_argument("--k", type=int, default=32)
    p.add_argument("--w", type=int, default=5)
    p.add_argument("--r", type=int, default=10)
    p.add_argument("--m", type=int, default=10)
    p.set_defaults(func=cmd_pcc_analysis)

    return parser


def main(argv: list[str] | None = None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
