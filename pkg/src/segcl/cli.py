"""``segcl`` command line: one subcommand per pipeline stage, files in between.

Exit codes: 0 success, 1 runtime or format error, 2 usage error or missing input,
3 stale or foreign upstream artifact.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from pathlib import Path

from threadpoolctl import threadpool_limits

from . import pipeline
from .config import ConfigError, PipelineConfig, load_config
from .events import CorpusFormatError, EventFormatError, load_corpus, load_events, save_events, validate_blocks
from .graph import GraphFormatError, load_graphs, save_graphs
from .gspan import load_patterns, pattern_table, save_patterns
from .manifest import (
    MissingInputError, StaleArtifactError, check_upstream, require_input, write_manifest,
)
from .probe import ProbeError
from .train import (
    TrainingDivergedError, load_checkpoint, load_embeddings, save_checkpoint, save_embeddings,
    save_history,
)

log = logging.getLogger("segcl")

EXIT_ERROR, EXIT_USAGE, EXIT_STALE = 1, 2, 3


class _Stage:
    """Collects inputs, outputs and timings for one command's manifest."""

    def __init__(self, name: str, args: argparse.Namespace, cfg: PipelineConfig):
        self.name, self.args, self.cfg = name, args, cfg
        self.inputs: dict[str, Path] = {}
        self.timings: dict[str, float] = {}
        self.extra: dict = {}
        self._t0 = time.perf_counter()

    def timed(self, label: str, fn, *a, **kw):
        t = time.perf_counter()
        out = fn(*a, **kw)
        self.timings[label] = time.perf_counter() - t
        log.info("%s: %s took %.3f s", self.name, label, self.timings[label])
        return out

    def finish(self, outputs: list[Path]) -> None:
        self.timings["total"] = time.perf_counter() - self._t0
        write_manifest(
            self.name, self.args.argv, self.inputs, outputs, self.cfg.to_dict(),
            self.cfg.digest(), self.cfg.train.seed, self.args.threads, self.timings, self.extra,
        )


# ---------------------------------------------------------------------------
# commands


def cmd_extract(args, cfg: PipelineConfig) -> int:
    if args.stopwords:
        cfg = cfg.replace("corpus", stopwords=args.stopwords)
    if args.entities:
        cfg = cfg.replace("corpus", entities=args.entities)
    if args.format:
        cfg = cfg.replace("corpus", format=args.format)
    st = _Stage("extract", args, cfg)
    st.inputs["corpus"] = require_input(args.corpus)
    for role in ("stopwords", "entities"):
        path = getattr(cfg.corpus, role)
        if path:
            st.inputs[role] = require_input(path)
    corpus = st.timed("load", load_corpus, args.corpus, cfg.corpus.format)
    if args.from_json:
        st.inputs["events"] = require_input(args.from_json)
        blocks = st.timed("load_events", load_events, args.from_json)
        validate_blocks(blocks, corpus)
    else:
        blocks = st.timed("extract", pipeline.extract, corpus, cfg)
    out = Path(args.output)
    save_events(blocks, out)
    st.extra["counts"] = {"documents": len(corpus), "blocks": len(blocks)}
    st.finish([out])
    print(f"wrote {len(blocks)} event blocks for {len(corpus)} documents to {out}")
    return 0


def cmd_build(args, cfg: PipelineConfig) -> int:
    st = _Stage("build", args, cfg)
    man = check_upstream(args.events, "extract")
    st.inputs["events"] = Path(args.events)
    blocks = load_events(args.events)
    doc_ids = None
    if args.corpus:
        st.inputs["corpus"] = require_input(args.corpus)
        doc_ids = [d.doc_id for d in load_corpus(args.corpus, _corpus_format(man, cfg))]
    graphs = st.timed("build", pipeline.build, blocks, cfg, doc_ids)
    out = Path(args.output)
    save_graphs(graphs, out)
    st.extra["counts"] = {"graphs": len(graphs), "nodes": sum(len(g.nodes) for g in graphs),
                          "edges": sum(len(g.edges) for g in graphs)}
    st.finish([out])
    print(f"wrote {len(graphs)} graphs to {out}")
    return 0


def cmd_mine(args, cfg: PipelineConfig) -> int:
    st = _Stage("mine", args, cfg)
    check_upstream(args.graphs, "build")
    st.inputs["graphs"] = Path(args.graphs)
    graphs = load_graphs(args.graphs)
    patterns = st.timed("mine", pipeline.mine_patterns, graphs, cfg)
    out = Path(args.output)
    save_patterns(patterns, out)
    st.extra["counts"] = {"patterns": len(patterns)}
    st.finish([out])
    if args.verbose:
        print(pattern_table(patterns))
    print(f"wrote {len(patterns)} skeleton patterns to {out}")
    return 0


def _marked_graphs(args, st: _Stage, cfg: PipelineConfig):
    check_upstream(args.graphs, "build")
    check_upstream(args.patterns, "mine")
    st.inputs["graphs"] = Path(args.graphs)
    st.inputs["patterns"] = Path(args.patterns)
    return pipeline.mark(load_graphs(args.graphs), load_patterns(args.patterns), cfg)


def _labels(args, st: _Stage, cfg: PipelineConfig) -> dict[str, str]:
    if not args.corpus:
        raise MissingInputError("this mode needs --corpus with labels (labeled-tsv)")
    st.inputs["corpus"] = require_input(args.corpus)
    fmt = args.format or "labeled-tsv"
    return load_corpus(args.corpus, fmt).labels()


def cmd_train(args, cfg: PipelineConfig) -> int:
    if args.ablate and args.sweep:
        raise ConfigError("--ablate and --sweep are mutually exclusive")
    st = _Stage("train", args, cfg)
    graphs = _marked_graphs(args, st, cfg)
    out = Path(args.output)
    if args.sweep:
        labels = _labels(args, st, cfg)
        loss_cfg = cfg.loss.ablate(args.ablate) if args.ablate else cfg.loss
        cfg = dataclasses.replace(cfg, loss=loss_cfg)
        st.cfg = cfg
        rows = st.timed("sweep", pipeline.sweep, graphs, labels, cfg, args.sweep, args.grid)
        with open(out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow([args.sweep, "precision_mean", "f1_mean", "precision_best", "f1_best",
                        "final_zeta_total", "epochs"])
            for value, run in rows:
                r = run.report
                w.writerow([repr(value), repr(r.mean_precision), repr(r.mean_f1),
                            repr(r.best_precision), repr(r.best_f1),
                            repr(run.result.history[-1].zeta_total if run.result.history else 0.0),
                            len(run.result.history)])
        st.extra["sweep"] = {"param": args.sweep, "values": [v for v, _ in rows]}
        st.finish([out])
        for value, run in rows:
            print(f"{args.sweep}={value:<8g} P={run.report.mean_precision:.4f} "
                  f"F1={run.report.mean_f1:.4f}")
        return 0

    loss_cfg = cfg.loss.ablate(args.ablate) if args.ablate else cfg.loss
    cfg = dataclasses.replace(cfg, loss=loss_cfg)
    st.cfg = cfg
    result = st.timed("train", pipeline.fit, graphs, cfg)
    save_checkpoint(result.params, out, cfg.to_dict())
    hist = history_path(out)
    save_history(result.history, hist)
    st.extra["training"] = {"epochs": len(result.history), "stopped": result.stopped,
                            "ablate": args.ablate}
    st.finish([out, hist])
    last = result.history[-1].zeta_total if result.history else float("nan")
    print(f"trained {len(result.history)} epochs ({result.stopped}); final zeta_total={last:.6g}")
    print(f"wrote checkpoint {out} and loss history {hist}")
    return 0


def history_path(checkpoint: Path) -> Path:
    return checkpoint.with_name(checkpoint.stem + ".history.csv")


def cmd_embed(args, cfg: PipelineConfig) -> int:
    st = _Stage("embed", args, cfg)
    graphs = _marked_graphs(args, st, cfg)
    check_upstream(args.model, "train")
    st.inputs["model"] = Path(args.model)
    params, saved = load_checkpoint(args.model)
    if saved:
        # encoder shape settings must match the checkpoint, not the current config
        cfg = PipelineConfig.from_dict({**cfg.to_dict(), "encoder": saved["encoder"]})
        st.cfg = cfg
    ids, X = st.timed("embed", pipeline.embed, graphs, params, cfg)
    out = Path(args.output)
    side = save_embeddings(ids, X, out)
    st.finish([out, side])
    print(f"wrote {len(ids)} embeddings of dim {X.shape[1]} to {out} (+ {side.name})")
    return 0


def cmd_eval(args, cfg: PipelineConfig) -> int:
    st = _Stage("eval", args, cfg)
    check_upstream(args.embeddings, "embed")
    st.inputs["embeddings"] = Path(args.embeddings)
    labels = _labels(args, st, cfg)
    ids, X = load_embeddings(args.embeddings)
    report = st.timed("probe", pipeline.evaluate, ids, X, labels, cfg)
    out = Path(args.output)
    report.write_csv(out)
    st.extra["metrics"] = {"precision_mean": report.mean_precision, "f1_mean": report.mean_f1,
                           "precision_best": report.best_precision, "f1_best": report.best_f1}
    st.finish([out])
    print(report.table())
    bad = [r for _, r in report.runs
           if not (0.0 <= r.precision <= 1.0 and 0.0 <= r.f1 <= 1.0)]
    if bad:
        log.error("metric invariant violated in %d run(s)", len(bad))
        return EXIT_ERROR
    return 0


def _corpus_format(man: dict, cfg: PipelineConfig) -> str:
    return man.get("config", {}).get("corpus", {}).get("format", cfg.corpus.format)


# ---------------------------------------------------------------------------
# argument parsing


def _globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", metavar="PATH", default=d, help="YAML or JSON config file")
    p.add_argument("--seed", type=int, default=d, help="override train.seed (also the probe seed base)")
    p.add_argument("--threads", type=int, default=d,
                   help="BLAS thread cap; falls back to $SEGCL_THREADS")
    p.add_argument("--verbose", "-v", action="store_true",
                   default=argparse.SUPPRESS if suppress else False)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="segcl", description=__doc__.splitlines()[0])
    _globals(p, suppress=False)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        _globals(sp, suppress=True)
        sp.set_defaults(func=fn)
        return sp

    sp = add("extract", cmd_extract, "corpus -> event blocks (JSONL)")
    sp.add_argument("corpus")
    sp.add_argument("-o", "--output", required=True)
    mode = sp.add_mutually_exclusive_group()
    mode.add_argument("--heuristic", action="store_true", help="rule-based SVO extraction (default)")
    mode.add_argument("--from-json", metavar="PATH", help="ingest pre-extracted event blocks")
    sp.add_argument("--format", choices=["plain-lines", "labeled-tsv"])
    sp.add_argument("--stopwords", metavar="PATH")
    sp.add_argument("--entities", metavar="PATH")

    sp = add("build", cmd_build, "event blocks -> intra-relation graphs")
    sp.add_argument("events")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--corpus", help="include documents without events as empty graphs")

    sp = add("mine", cmd_mine, "graphs -> frequent skeleton patterns")
    sp.add_argument("graphs")
    sp.add_argument("-o", "--output", required=True)

    sp = add("train", cmd_train, "graphs + patterns -> checkpoint and loss history")
    sp.add_argument("graphs")
    sp.add_argument("patterns")
    sp.add_argument("-o", "--output", required=True)
    sp.add_argument("--ablate", choices=["structure", "event", "upper_bound"])
    sp.add_argument("--sweep", choices=sorted(pipeline.SWEEP_FIELDS))
    sp.add_argument("--grid", type=float, nargs="+", help="sweep values (default grid otherwise)")
    sp.add_argument("--corpus", help="labeled corpus, needed by --sweep")
    sp.add_argument("--format", choices=["plain-lines", "labeled-tsv"])

    sp = add("embed", cmd_embed, "checkpoint -> document embeddings")
    sp.add_argument("graphs")
    sp.add_argument("patterns")
    sp.add_argument("model")
    sp.add_argument("-o", "--output", required=True)

    sp = add("eval", cmd_eval, "embeddings + labels -> linear-probe metrics")
    sp.add_argument("embeddings")
    sp.add_argument("--corpus", required=True)
    sp.add_argument("--format", choices=["plain-lines", "labeled-tsv"])
    sp.add_argument("-o", "--output", required=True)
    return p


def resolve_threads(cli_value: int | None) -> int | None:
    if cli_value is not None:
        return cli_value
    env = os.environ.get("SEGCL_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"SEGCL_THREADS must be an integer, got {env!r}") from None
    return None


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.threads = resolve_threads(args.threads)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if args.config:
            require_input(args.config)
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg = cfg.replace("train", seed=args.seed)
        log.info("effective config: %s", json.dumps(cfg.to_dict(), sort_keys=True))
        with threadpool_limits(limits=args.threads):
            return args.func(args, cfg)
    except MissingInputError as exc:
        print(f"segcl {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except StaleArtifactError as exc:
        print(f"segcl {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_STALE
    except ConfigError as exc:
        print(f"segcl {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (CorpusFormatError, EventFormatError, GraphFormatError, ProbeError,
            TrainingDivergedError, ValueError, KeyError, OSError) as exc:
        print(f"segcl {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
