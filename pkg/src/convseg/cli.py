"""Command-line entry point: anchor building, segmentation, evaluation, synthesis.

Exit codes: 0 success, 1 validation/config error, 2 I/O error, 3 embedding
service error.  Diagnostics go to stderr; stdout carries only the requested
artifact or report.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import baselines, metrics, synthetic
from .anchors import DbscanParams, extract_anchors, load_anchor_set, save_anchor_set
from .model import (
    ValidationError,
    load_segmentation,
    load_transcript,
    save_segmentation,
    segmentation_from_dict,
    segmentation_to_dict,
)
from .providers import (
    FileEmbeddingProvider,
    ServiceEmbeddingProvider,
    ServiceError,
    embed_texts,
    load_call_embeddings,
    service_config_from_env,
)
from .scoring import write_probs_csv
from .windowing import PipelineConfig, run_pipeline

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_IO = 2
EXIT_SERVICE = 3

METHODS = ("gptcalls", "greedy", "texttiling")


class _Parser(argparse.ArgumentParser):
    # bad flags are a config error (exit 1), not argparse's default exit 2
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ValidationError(message)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="convseg",
                     description="Topic segmentation of call transcripts via topic anchors.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-anchors", parents=[], help="cluster a sentence corpus into anchors")
    p.add_argument("--sentences", required=True, help="JSONL corpus of topic sentences")
    p.add_argument("--embed", choices=("file", "service"), default="file",
                   help="embedding provider for text entries")
    p.add_argument("--embed-file", help="embedding store JSON for --embed file")
    p.add_argument("--embed-url", help="service endpoint (default: $CONVSEG_EMBED_URL)")
    p.add_argument("--eps", type=float, default=0.25)
    p.add_argument("--min-pts", type=int, default=5)
    p.add_argument("--topic-params", help="JSON file with per-topic {eps, min_pts} overrides")
    p.add_argument("--out", required=True)

    p = sub.add_parser("segment", help="segment one call")
    p.add_argument("--transcript", required=True)
    p.add_argument("--embeddings", required=True, help="per-call embedding sidecar JSON")
    p.add_argument("--anchors", required=True)
    p.add_argument("--config", help="pipeline config JSON (defaults derived from anchors)")
    p.add_argument("--method", choices=METHODS, default="gptcalls")
    p.add_argument("--out", required=True)
    p.add_argument("--dump-probs", metavar="PREFIX",
                   help="write PREFIX.pre.csv / PREFIX.post.csv probability dumps")
    _add_baseline_flags(p)

    p = sub.add_parser("evaluate", help="score hypotheses against references")
    p.add_argument("--ref", help="reference segmentation JSON")
    p.add_argument("--hyp", help="hypothesis segmentation JSON")
    p.add_argument("--manifest", help="corpus manifest (evaluates every call)")
    p.add_argument("--hyp-dir", help="directory of <call_id>.json hypotheses")
    p.add_argument("--per-topic", action="store_true")
    p.add_argument("--k", type=int, help="override the default metric window size")
    p.add_argument("--out", help="write the report JSON here instead of stdout")

    p = sub.add_parser("synth", help="generate a synthetic corpus with gold segmentations")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--plan", help="fixed plan spec JSON")
    group.add_argument("--spec", help="plan distribution spec JSON")
    p.add_argument("--anchors", required=True)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)

    p = sub.add_parser("bench", help="run methods over a corpus and compare")
    p.add_argument("--manifest", required=True)
    p.add_argument("--anchors", required=True)
    p.add_argument("--config")
    p.add_argument("--methods", default="gptcalls,greedy,texttiling",
                   help="comma-separated subset of: " + ",".join(METHODS))
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", help="write the comparison JSON here")
    _add_baseline_flags(p)
    return parser


def _add_baseline_flags(p) -> None:
    p.add_argument("--tau", type=float, help="greedy split-gain threshold")
    p.add_argument("--max-segments", type=int, help="greedy segment budget")
    p.add_argument("--greedy-min-size", type=int, help="greedy minimal segment size")
    p.add_argument("--block-size", type=int, help="texttiling block size")
    p.add_argument("--smoothing-width", type=int, help="texttiling smoothing width (odd)")
    p.add_argument("--depth-cutoff", type=float, help="texttiling depth cutoff in sigmas")
    p.add_argument("--min-confidence", type=float, default=0.15,
                   help="anchor-tagging confidence floor for baseline segments")


def _baseline_params(args):
    greedy_kwargs = {}
    if args.tau is not None:
        greedy_kwargs["tau"] = args.tau
    if args.max_segments is not None:
        greedy_kwargs["max_segments"] = args.max_segments
    if args.greedy_min_size is not None:
        greedy_kwargs["min_size"] = args.greedy_min_size
    tiling_kwargs = {}
    if args.block_size is not None:
        tiling_kwargs["block_size"] = args.block_size
    if args.smoothing_width is not None:
        tiling_kwargs["smoothing_width"] = args.smoothing_width
    if args.depth_cutoff is not None:
        tiling_kwargs["depth_cutoff_sigmas"] = args.depth_cutoff
    return baselines.GreedyParams(**greedy_kwargs), baselines.TextTilingParams(**tiling_kwargs)


def _load_config(path, anchors) -> PipelineConfig:
    if path:
        return PipelineConfig.from_file(path)
    return PipelineConfig.for_topics(anchors.topic_names)


def _segment_one(method, transcript, vectors, anchors, config, greedy_params,
                 tiling_params, min_confidence):
    if method == "gptcalls":
        return run_pipeline(transcript, vectors, anchors, config).result
    if method == "greedy":
        bounds = baselines.greedy_segment(vectors, greedy_params)
    elif method == "texttiling":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            bounds = baselines.texttiling_segment(vectors, tiling_params)
    else:
        raise ValidationError(f"unknown method {method!r}")
    return baselines.tag_segments_by_anchors(bounds, vectors, anchors,
                                             min_confidence=min_confidence,
                                             call_id=transcript.call_id)


# --- subcommands --------------------------------------------------------------

def cmd_gen_anchors(args) -> int:
    groups = synthetic.load_sentence_corpus(args.sentences)
    if not groups:
        raise ValidationError(f"sentence corpus {args.sentences} is empty")

    corpus: dict[str, list[np.ndarray]] = {}
    pending_texts: dict[str, list[str]] = {}
    for topic, items in groups.items():
        vectors = [i for i in items if isinstance(i, np.ndarray)]
        texts = [i for i in items if isinstance(i, str)]
        corpus[topic] = vectors
        if texts:
            pending_texts[topic] = texts
    if pending_texts:
        provider = _make_provider(args)
        for topic, texts in pending_texts.items():
            corpus[topic] = corpus[topic] + embed_texts(texts, provider)

    default_params = DbscanParams(eps=args.eps, min_pts=args.min_pts)
    params: DbscanParams | dict = default_params
    if args.topic_params:
        overrides = json.loads(Path(args.topic_params).read_text())
        params = {}
        for name in corpus:
            o = overrides.get(name, {})
            params[name] = DbscanParams(eps=float(o.get("eps", args.eps)),
                                        min_pts=int(o.get("min_pts", args.min_pts)))
    aset = extract_anchors(corpus, params)
    save_anchor_set(aset, args.out)
    for t in aset.topics:
        note = " (fallback: all points were noise)" if t.fallback else ""
        _log(f"{t.name}: {len(t.anchors)} anchors from clusters {list(t.cluster_sizes)}, "
             f"{t.noise_count} noise points{note}")
    _log(f"wrote {args.out}")
    return EXIT_OK


def _make_provider(args):
    if args.embed == "file":
        if not args.embed_file:
            raise ValidationError("--embed file requires --embed-file")
        return FileEmbeddingProvider.from_path(args.embed_file)
    return ServiceEmbeddingProvider(service_config_from_env(args.embed_url))


def cmd_segment(args) -> int:
    anchors = load_anchor_set(args.anchors)
    transcript = load_transcript(args.transcript)
    call_id, vectors = load_call_embeddings(args.embeddings)
    if vectors.shape[0] != len(transcript):
        raise ValidationError(
            f"embeddings/transcript misaligned: {vectors.shape[0]} vectors, "
            f"{len(transcript)} utterances"
        )
    config = _load_config(args.config, anchors)
    greedy_params, tiling_params = _baseline_params(args)

    if args.method == "gptcalls":
        run = run_pipeline(transcript, vectors, anchors, config)
        result = run.result
        if args.dump_probs:
            write_probs_csv(run.probs_pre, f"{args.dump_probs}.pre.csv")
            write_probs_csv(run.probs_post, f"{args.dump_probs}.post.csv")
            _log(f"wrote {args.dump_probs}.pre.csv and {args.dump_probs}.post.csv")
    else:
        result = _segment_one(args.method, transcript, vectors, anchors, config,
                              greedy_params, tiling_params, args.min_confidence)
        if args.dump_probs:
            _log("--dump-probs applies to the gptcalls method only; ignored")
    save_segmentation(result, args.out)
    _log(f"wrote {args.out} ({len(result.segments)} segments)")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    if args.manifest:
        if not args.hyp_dir:
            raise ValidationError("--manifest requires --hyp-dir")
        manifest = synthetic.load_manifest(args.manifest)
        root = Path(args.manifest).parent
        pairs = []
        for call in manifest["calls"]:
            ref = load_segmentation(root / call["gold"])
            hyp_path = Path(args.hyp_dir) / f"{call['call_id']}.json"
            pairs.append((ref, load_segmentation(hyp_path)))
    elif args.ref and args.hyp:
        pairs = [(load_segmentation(args.ref), load_segmentation(args.hyp))]
    else:
        raise ValidationError("pass either --ref and --hyp, or --manifest and --hyp-dir")

    for ref, hyp in pairs:
        if ref.n_utterances != hyp.n_utterances:
            raise ValidationError(
                f"{ref.call_id}: reference covers {ref.n_utterances} utterances, "
                f"hypothesis {hyp.n_utterances}"
            )
    topics: list[str] = []
    if args.per_topic:
        seen = set()
        for ref, _ in pairs:
            for seg in ref.segments:
                if seg.label != "background" and seg.label not in seen:
                    seen.add(seg.label)
                    topics.append(seg.label)
    report = metrics.corpus_report(pairs, topics=topics, k=args.k)
    payload = report.to_json()
    if args.out:
        Path(args.out).write_text(payload + "\n")
        _log(f"wrote {args.out}")
        if args.per_topic:
            print(report.format_table())
    else:
        print(payload)
        if args.per_topic:
            # keep stdout parseable: the JSON is the artifact, the table is a diagnostic
            print(report.format_table(), file=sys.stderr)
    return EXIT_OK


def cmd_synth(args) -> int:
    anchors = load_anchor_set(args.anchors)
    spec_path = args.plan or args.spec
    source = synthetic.plan_source_from_dict(json.loads(Path(spec_path).read_text()))
    manifest = synthetic.generate_corpus(source, anchors, count=args.count,
                                         seed=args.seed, out_dir=args.out_dir)
    _log(f"wrote {len(manifest['calls'])} calls under {args.out_dir}")
    return EXIT_OK


def _bench_call(task):
    """Worker for one (method, call) pair; returns metrics or an error string."""
    (method, transcript_path, emb_path, gold_path, config, anchors,
     greedy_params, tiling_params, min_confidence, k_override) = task
    try:
        transcript = load_transcript(transcript_path)
        _, vectors = load_call_embeddings(emb_path)
        gold = load_segmentation(gold_path)
        start = time.perf_counter()
        result = _segment_one(method, transcript, vectors, anchors, config,
                              greedy_params, tiling_params, min_confidence)
        elapsed = time.perf_counter() - start
        ref = gold.labels()
        k = k_override if k_override else metrics.default_k(ref)
        return {
            "call_id": transcript.call_id,
            "pk": metrics.pk(ref, result.labels(), k),
            "windowdiff": metrics.window_diff(ref, result.labels(), k),
            "seconds": elapsed,
        }
    except Exception as exc:  # a single bad call must not sink the batch
        return {"call_id": Path(transcript_path).name, "error": f"{exc}"}


def cmd_bench(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHODS:
            raise ValidationError(f"unknown method {m!r}; choose from {', '.join(METHODS)}")
    anchors = load_anchor_set(args.anchors)
    config = _load_config(args.config, anchors)
    greedy_params, tiling_params = _baseline_params(args)
    manifest = synthetic.load_manifest(args.manifest)
    if not manifest["calls"]:
        raise ValidationError(f"manifest {args.manifest} lists no calls")
    root = Path(args.manifest).parent

    rows = {}
    for method in methods:
        tasks = [
            (method, root / c["transcript"], root / c["embeddings"], root / c["gold"],
             config, anchors, greedy_params, tiling_params, args.min_confidence, None)
            for c in manifest["calls"]
        ]
        if args.jobs > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                outcomes = list(pool.map(_bench_call, tasks))
        else:
            outcomes = [_bench_call(t) for t in tasks]
        ok = [o for o in outcomes if "error" not in o]
        failed = [o for o in outcomes if "error" in o]
        for f in failed:
            _log(f"[{method}] {f['call_id']} failed: {f['error']}")
        if not ok:
            raise ValidationError(f"method {method!r} failed on every call")
        rows[method] = {
            "pk_mean": float(np.mean([o["pk"] for o in ok])),
            "pk_std": float(np.std([o["pk"] for o in ok])),
            "windowdiff_mean": float(np.mean([o["windowdiff"] for o in ok])),
            "windowdiff_std": float(np.std([o["windowdiff"] for o in ok])),
            "seconds_per_call": float(np.mean([o["seconds"] for o in ok])),
            "calls": len(ok),
            "failures": len(failed),
        }

    table = _format_bench_table(rows)
    print(table)
    if args.out:
        Path(args.out).write_text(json.dumps(rows, indent=2) + "\n")
        _log(f"wrote {args.out}")
    return EXIT_OK


def _format_bench_table(rows: dict) -> str:
    headers = ["method", "Pk", "WinDiff", "s/call", "calls"]
    body = []
    for method, r in rows.items():
        body.append([
            method,
            f"{r['pk_mean']:.3f} ± {r['pk_std']:.3f}",
            f"{r['windowdiff_mean']:.3f} ± {r['windowdiff_std']:.3f}",
            f"{r['seconds_per_call']:.3f}",
            str(r["calls"]) + (f" ({r['failures']} failed)" if r["failures"] else ""),
        ])
    widths = [max(len(h), *(len(row[i]) for row in body)) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    for row in body:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)


_COMMANDS = {
    "gen-anchors": cmd_gen_anchors,
    "segment": cmd_segment,
    "evaluate": cmd_evaluate,
    "synth": cmd_synth,
    "bench": cmd_bench,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ValidationError as exc:
        _log(f"error: {exc}")
        return EXIT_VALIDATION
    except ServiceError as exc:
        _log(f"embedding service error: {exc}")
        return EXIT_SERVICE
    except json.JSONDecodeError as exc:
        _log(f"malformed JSON input: {exc}")
        return EXIT_IO
    except OSError as exc:
        _log(f"I/O error: {exc}")
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
