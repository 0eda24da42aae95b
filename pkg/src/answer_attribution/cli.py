"""Command-line entry point: reformat | stats | run | eval | run-eval.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 remote-service error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Sequence

import httpx

from . import __version__
from .attributor import AttributionList, attribute_answer_counted
from .config import PipelineConfig, build_pipeline, load_config
from .datasets import (
    CanonicalRecord,
    DropRecord,
    compute_stats,
    read_canonical,
    reformat_hagrid,
    reformat_verifiability,
    write_canonical,
)
from .decomposer import TEMPLATE_VERSION
from .errors import AttributionError, ConfigError, DataError
from .evaluation import emit_report, evaluate

log = logging.getLogger("answer_attribution")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_SERVICE = 0, 1, 2, 3

REFORMATTERS = {"verifiability": reformat_verifiability, "hagrid": reformat_hagrid}


def _fail(exc: AttributionError) -> int:
    print(f"error: {exc}", file=sys.stderr)
    return exc.exit_code


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with path.open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def manifest_path(out_path: Path) -> Path:
    return out_path.with_name(out_path.name + ".manifest.json")


def drops_path(out_path: Path) -> Path:
    return out_path.with_name(out_path.name + ".drops.jsonl")


# --- reformat / stats -------------------------------------------------------


def cmd_reformat(source: str, raw_dir: str | Path, out_path: str | Path) -> int:
    out_path = Path(out_path)
    drops: list[DropRecord] = []
    try:
        records = REFORMATTERS[source](raw_dir, drops)
    except AttributionError as exc:
        return _fail(exc)
    write_canonical(records, out_path)
    # Drop log is append-only across invocations.
    with drops_path(out_path).open("a", encoding="utf-8") as fh:
        for d in drops:
            fh.write(json.dumps(d.to_dict(), ensure_ascii=False) + "\n")
    print(f"{source}: wrote {len(records)} records to {out_path}, dropped {len(drops)}")
    return EXIT_OK


def cmd_stats(dataset_path: str | Path, fmt: str = "table") -> int:
    try:
        records = read_canonical(dataset_path)
    except (OSError, AttributionError) as exc:
        return _fail(exc if isinstance(exc, AttributionError) else DataError(str(exc)))
    by_split: dict[str, list[CanonicalRecord]] = {}
    for r in records:
        by_split.setdefault(r.split, []).append(r)
    rows = {split: compute_stats(recs) for split, recs in sorted(by_split.items())}
    rows["all"] = compute_stats(records)
    if fmt == "json":
        print(json.dumps({k: asdict(v) for k, v in rows.items()}, indent=2))
        return EXIT_OK
    print(f"{'split':<6} {'size':>6} {'src/rec':>8} {'attr/sent':>9} {'attr/sent(all)':>14} {'sent/ans':>8} {'ans/q':>6}")
    for split, st in rows.items():
        print(
            f"{split:<6} {st.size:>6} {st.avg_source_sentences:>8.2f} {st.avg_attributions_per_sentence:>9.2f} "
            f"{st.avg_attributions_per_sentence_all:>14.2f} {st.avg_sentences_per_answer:>8.2f} "
            f"{st.avg_answers_per_question:>6.2f}"
        )
    return EXIT_OK


# --- run ----------------------------------------------------------------------


def prediction_line(rec: CanonicalRecord, preds: Sequence[AttributionList]) -> str:
    return json.dumps(
        {
            "question_id": rec.question_id,
            "answer_id": rec.answer_id,
            "sentences": [
                {
                    "index": p.answer_sentence_index,
                    "attributions": [{"index": i, "score": s} for i, s in p.attributions],
                }
                for p in preds
            ],
        },
        ensure_ascii=False,
    )


def cmd_run(
    config: str | Path | PipelineConfig,
    dataset_path: str | Path,
    out_path: str | Path,
    *,
    workers: int | None = None,
    prune_limit: int | None = None,
    transport: httpx.BaseTransport | None = None,
) -> int:
    out_path = Path(out_path)
    dataset_path = Path(dataset_path)
    try:
        cfg = config if isinstance(config, PipelineConfig) else load_config(config)
        if workers is not None:
            cfg = replace(cfg, workers=workers)
        if prune_limit is not None:
            if cfg.prune is None:
                raise ConfigError("--limit given but the config has no prune section")
            cfg = replace(cfg, prune=replace(cfg.prune, limit=prune_limit))
        pipeline = build_pipeline(cfg, transport)
        records = read_canonical(dataset_path)
    except FileNotFoundError as exc:
        return _fail(DataError(f"file not found: {exc.filename}"))
    except AttributionError as exc:
        return _fail(exc)

    started = datetime.now(timezone.utc).isoformat()

    def work(rec: CanonicalRecord):
        try:
            return attribute_answer_counted(rec.answer, rec.document, pipeline), None
        except AttributionError as exc:
            log.error("record %s/%s failed: %s", rec.question_id, rec.answer_id, exc)
            return None, exc

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(work, records))
    else:
        results = [work(r) for r in records]

    out_path.parent.mkdir(parents=True, exist_ok=True)
    calls = 0
    failures: list[dict] = []
    with out_path.open("w", encoding="utf-8") as fh:
        for rec, (res, err) in zip(records, results):
            if err is not None:
                failures.append({"question_id": rec.question_id, "answer_id": rec.answer_id, "error": str(err), "exit_code": err.exit_code})
                continue
            calls += res.scorer_calls
            fh.write(prediction_line(rec, res.sentences) + "\n")

    manifest = {
        "config_hash": cfg.digest(),
        "config": cfg.to_dict(),
        "dataset": {"path": str(dataset_path), "sha256": sha256_file(dataset_path), "records": len(records)},
        "predictions": str(out_path),
        "versions": {
            "answer_attribution": __version__,
            "decomposition_template": TEMPLATE_VERSION,
            "python": platform.python_version(),
            "httpx": httpx.__version__,
        },
        "started_at": started,
        "finished_at": datetime.now(timezone.utc).isoformat(),
        "scorer_calls": calls,
        "failed_records": failures,
    }
    manifest_path(out_path).write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    if failures:
        print(f"error: {len(failures)} of {len(records)} records failed; first: {failures[0]['error']}", file=sys.stderr)
        return failures[0]["exit_code"]
    print(f"wrote {len(records)} predictions to {out_path} ({calls} scorer calls)")
    return EXIT_OK


# --- eval -----------------------------------------------------------------------


def read_predictions(path: str | Path) -> dict[tuple[str, str], list[AttributionList]]:
    path = Path(path)
    out: dict[tuple[str, str], list[AttributionList]] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                key = (raw["question_id"], raw["answer_id"])
                out[key] = [
                    AttributionList(
                        s["index"], tuple((a["index"], float(a["score"])) for a in s["attributions"])
                    )
                    for s in raw["sentences"]
                ]
            except (ValueError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: malformed prediction line: {exc!r}") from exc
    return out


def cmd_eval(dataset_path: str | Path, predictions_path: str | Path, fmt: str = "table", label: str | None = None) -> int:
    try:
        records = read_canonical(dataset_path)
        preds = read_predictions(predictions_path)
        by_key = {(r.question_id, r.answer_id): r for r in records}
        for key in preds:
            if key not in by_key:
                raise DataError(f"prediction key {key} has no matching dataset record")
        pairs = []
        for r in records:
            key = (r.question_id, r.answer_id)
            if key not in preds:
                raise DataError(f"dataset record {key} has no prediction")
            pairs.append((r, preds[key]))
        report = evaluate(pairs)
    except FileNotFoundError as exc:
        return _fail(DataError(f"file not found: {exc.filename}"))
    except AttributionError as exc:
        return _fail(exc)
    print(emit_report(report, fmt, label or Path(predictions_path).stem))
    return EXIT_OK


# --- argument parsing -------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="answer-attribution", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reformat", help="convert a raw corpus to canonical JSONL")
    p.add_argument("source", choices=sorted(REFORMATTERS))
    p.add_argument("raw_dir")
    p.add_argument("--out", required=True)

    p = sub.add_parser("stats", help="dataset statistics per split")
    p.add_argument("--dataset", required=True)
    p.add_argument("--format", choices=["table", "json"], default="table")

    for name in ("run", "run-eval"):
        p = sub.add_parser(name, help="attribute every record" + (" and score it" if name == "run-eval" else ""))
        p.add_argument("--config", required=True)
        p.add_argument("--dataset", required=True)
        p.add_argument("--out", required=True)
        p.add_argument("--workers", type=int)
        p.add_argument("--limit", type=int, help="override prune.limit")
        if name == "run-eval":
            p.add_argument("--format", choices=["table", "json"], default="table")

    p = sub.add_parser("eval", help="score a predictions file")
    p.add_argument("--dataset", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--format", choices=["table", "json"], default="table")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.command == "reformat":
        return cmd_reformat(args.source, args.raw_dir, args.out)
    if args.command == "stats":
        return cmd_stats(args.dataset, args.format)
    if args.command == "eval":
        return cmd_eval(args.dataset, args.predictions, args.format)
    code = cmd_run(args.config, args.dataset, args.out, workers=args.workers, prune_limit=args.limit)
    if args.command == "run-eval" and code == EXIT_OK:
        code = cmd_eval(args.dataset, args.out, args.format)
    return code


if __name__ == "__main__":
    sys.exit(main())
