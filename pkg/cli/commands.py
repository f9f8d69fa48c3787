"""Subcommand implementations. Each returns the run's result summary."""

import argparse
import json
import logging
import os
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from audit import RunLedger
from compression import quantize_model, run_compression
from model import build_original, evaluate, load_model, predict, save_model, split_dataset, train
from model.network import memory_bytes
from pipesim import REFERENCE_MAPPERS, calibrate_handshake, run_stream
from spikesort import (
    Corpus,
    TableRow,
    artefact_corpus,
    channel_selection_corpus,
    convert_wave_clus,
    desk_recordings,
    generate_synthetic,
    ingest_recording,
    save_recording,
    sort_recording,
    write_table,
)

from .runconfig import RunConfig

logger = logging.getLogger(__name__)


class UsageError(ValueError):
    """Bad command-line input: a missing path or an unusable file."""


def _require(path: Optional[str], flag: str) -> str:
    if not path:
        raise UsageError(f"{flag} is required")
    if not os.path.exists(path):
        raise UsageError(f"{flag}: {path} does not exist")
    return path


def _out(cfg: RunConfig, name: str) -> str:
    os.makedirs(cfg.out, exist_ok=True)
    return os.path.join(cfg.out, name)


def _write_json(path: str, data: Dict[str, Any]) -> str:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(data, f, indent=2, default=str)
    return path


def _load_segments(path: str) -> Tuple[np.ndarray, Optional[np.ndarray]]:
    """(segments, labels or None) from a corpus ``.npz`` or a bare ``.npy`` array."""
    if path.endswith(".npz"):
        corpus = Corpus.load(path)
        return corpus.x, corpus.y
    if path.endswith(".npy"):
        return np.load(path), None
    raise UsageError(f"{path}: expected a .npz corpus or a .npy segment array")


def _write_labels(path: str, labels: np.ndarray, truth: Optional[np.ndarray], digest: str) -> None:
    frame = pd.DataFrame({"index": np.arange(len(labels)), "label": labels})
    if truth is not None:
        frame["truth"] = truth
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# config_hash={digest}\n")
        frame.to_csv(f, index=False)


# ──────────────────────────────────────────────────────────────────────────────
# Data
# ──────────────────────────────────────────────────────────────────────────────


def cmd_generate(args: argparse.Namespace, cfg: RunConfig, digest: str, ledger: RunLedger) -> Dict[str, Any]:
    outputs: List[str] = []
    result: Dict[str, Any] = {"config_hash": digest}
    if args.kind == "recording":
        recording = generate_synthetic(cfg.synthetic)
        outputs.append(save_recording(recording, _out(cfg, recording.name)))
        result.update(recording=outputs[-1], spike_count=recording.spike_count(), noise_sigma=recording.noise_sigma)
    else:
        recordings = desk_recordings(cfg.synthetic, cfg.corpus.recordings)
        if args.kind in ("artefact", "both"):
            corpus = artefact_corpus(recordings, cfg.corpus.noise_ratio, cfg.seed)
            outputs.append(_out(cfg, "corpus_artefact.npz"))
            corpus.save(outputs[-1])
            result["artefact_counts"] = corpus.counts()
        if args.kind in ("channel", "both"):
            corpus = channel_selection_corpus(recordings, cfg.corpus.decimated)
            outputs.append(_out(cfg, "corpus_channel.npz"))
            corpus.save(outputs[-1])
            result["channel_counts"] = corpus.counts()
    ledger.log_outputs(*outputs)
    result["outputs"] = outputs
    return result


def cmd_convert_dataset(args: argparse.Namespace, cfg: RunConfig, digest: str, ledger: RunLedger) -> Dict[str, Any]:
    paths = [_require(path, "--mat") for path in args.mat]
    ledger.log_inputs(*paths)
    converted = []
    for path in paths:
        name = os.path.splitext(os.path.basename(path))[0]
        recording = convert_wave_clus(path, _out(cfg, name))
        converted.append(
            {"dataset": name, "noise_sigma": recording.noise_sigma, "spike_count": recording.spike_count(),
             "classes": recording.class_count(), "path": os.path.join(cfg.out, name)}
        )
    ledger.log_outputs(*(c["path"] for c in converted))
    return {"config_hash": digest, "converted": converted}


# ──────────────────────────────────────────────────────────────────────────────
# Model
# ──────────────────────────────────────────────────────────────────────────────


def cmd_train(args: argparse.Namespace, cfg: RunConfig, digest: str, ledger: RunLedger) -> Dict[str, Any]:
    data = _require(args.data, "--data")
    ledger.log_inputs(data)
    corpus = Corpus.load(data)
    split = split_dataset(corpus.x, corpus.y, seed=cfg.seed)
    model = build_original(seed=cfg.seed, class_count=corpus.class_count)
    trained, history = train(model, split, cfg.train)
    test_accuracy = evaluate(trained, split.x_test, split.y_test) if len(split.y_test) else None

    model_path, history_path = _out(cfg, args.name + ".json"), _out(cfg, args.name + "_history.csv")
    save_model(trained, model_path)
    history.write_csv(history_path)
    ledger.log_outputs(model_path, history_path)
    return {
        "config_hash": digest,
        "model": model_path,
        "learnables": trained.learnables,
        "split": split.as_dict(),
        "history": history.as_dict(),
        "test_accuracy": test_accuracy,
    }


def cmd_compress(args: argparse.Namespace, cfg: RunConfig, digest: str, ledger: RunLedger) -> Dict[str, Any]:
    model_path, data = _require(args.model, "--model"), _require(args.data, "--data")
    ledger.log_inputs(model_path, data)
    model = load_model(model_path)
    corpus = Corpus.load(data)
    split = split_dataset(corpus.x, corpus.y, seed=cfg.seed)
    outcome = run_compression(model, split, cfg.train, cfg.compression)
    selection = outcome.selection

    compressed = selection.model
    bits = selection.bits
    if args.bits is not None:
        calibration = np.asarray(split.x_train[: cfg.compression.calibration_segments])
        compressed = quantize_model(selection.candidate.model, args.bits, calibration=calibration)
        bits = args.bits
    test_accuracy = evaluate(compressed, split.x_test, split.y_test, quantized=True) if len(split.y_test) else None

    paths = [_out(cfg, "compression.csv"), _out(cfg, "compression.json"), _out(cfg, args.name + ".json")]
    outcome.report.write_csv(paths[0], digest)
    outcome.report.write_json(paths[1], digest)
    save_model(compressed, paths[2])
    ledger.log_outputs(*paths)
    return {
        "config_hash": digest,
        "model": paths[2],
        "label": selection.candidate.label,
        "learnables": compressed.learnables,
        "bits": bits,
        "memory_bytes": memory_bytes(compressed.learnables, bits),
        "stable": selection.stable,
        "test_accuracy": test_accuracy,
    }


def cmd_classify(args: argparse.Namespace, cfg: RunConfig, digest: str, ledger: RunLedger) -> Dict[str, Any]:
    model_path, data = _require(args.model, "--model"), _require(args.input, "--input")
    ledger.log_inputs(model_path, data)
    model = load_model(model_path)
    x, y = _load_segments(data)
    labels = predict(model, x)
    path = _out(cfg, "classify_labels.csv")
    _write_labels(path, labels, y, digest)
    ledger.log_outputs(path)
    result = {"config_hash": digest, "labels": path, "segments": int(len(labels)),
              "precision": "fixed" if model.is_quantized else "float"}
    if y is not None:
        result["accuracy"] = float(np.mean(labels == y))
    return result


# ──────────────────────────────────────────────────────────────────────────────
# Hardware pipeline
# ──────────────────────────────────────────────────────────────────────────────


def cmd_simulate(args: argparse.Namespace, cfg: RunConfig, digest: str, ledger: RunLedger) -> Dict[str, Any]:
    model_path, data = _require(args.model, "--model"), _require(args.input, "--input")
    ledger.log_inputs(model_path, data)
    model = load_model(model_path)
    x, y = _load_segments(data)
    if args.limit is not None:
        x, y = x[: args.limit], None if y is None else y[: args.limit]

    pipeline_cfg = cfg.pipeline
    if args.reference_mappers:
        pipeline_cfg = pipeline_cfg.model_copy(update={"mapper_override": dict(REFERENCE_MAPPERS)})
    if args.calibrate is not None:
        pipeline_cfg = calibrate_handshake(model, args.calibrate, pipeline_cfg)
        ledger.log_event("calibration", handshake_cycles=pipeline_cfg.handshake_cycles, target=args.calibrate)

    labels, trace = run_stream(model, x, pipeline_cfg)
    paths = [_out(cfg, "simulate_labels.csv"), _out(cfg, "trace.csv"), _out(cfg, "trace.json")]
    _write_labels(paths[0], labels, y, digest)
    trace.write_csv(paths[1], digest)
    trace.write_json(paths[2], digest)
    ledger.log_outputs(*paths)

    summary = trace.summary(digest)
    summary["labels"] = paths[0]
    summary["segments_classified"] = int(len(labels))
    if y is not None:
        summary["accuracy"] = float(np.mean(labels == y))
    delay_us = summary["time_at_frequency"]["initiation_interval_s"] * 1e6
    logger.info("delay %d cycles = %.1f µs at %.2f MHz", trace.delay_cycles, delay_us, trace.clock_hz / 1e6)
    return summary


# ──────────────────────────────────────────────────────────────────────────────
# Sorting and reporting
# ──────────────────────────────────────────────────────────────────────────────


def cmd_sort(args: argparse.Namespace, cfg: RunConfig, digest: str, ledger: RunLedger) -> Dict[str, Any]:
    directory = _require(args.recording, "--recording")
    cnn_paths = [_require(p, flag) for p, flag in ((args.cnn1, "--cnn1"), (args.cnn2, "--cnn2")) if p]
    ledger.log_inputs(directory, *cnn_paths)
    recording = ingest_recording(directory)
    cnn1 = load_model(args.cnn1) if args.cnn1 else None
    cnn2 = load_model(args.cnn2) if args.cnn2 else None
    report = sort_recording(recording, cnn1, cnn2, cfg.sort)

    result = report.as_dict()
    result["config_hash"] = digest
    paths = [_out(cfg, f"sort_{recording.name}.json"), _out(cfg, f"table_{recording.name}.csv")]
    _write_json(paths[0], result)
    write_table(
        [TableRow(recording.name, recording.noise_sigma, recording.spike_count(), report.metrics.cacc)], paths[1], digest
    )
    ledger.log_outputs(*paths)
    return {"config_hash": digest, "metrics": result["metrics"], "outputs": paths}


def _kind(data: Dict[str, Any]) -> str:
    if "metrics" in data and "dataset" in data:
        return "sort"
    if "selected" in data:
        return "compression"
    if "latency_cycles" in data:
        return "trace"
    return "unknown"


def cmd_report(args: argparse.Namespace, cfg: RunConfig, digest: str, ledger: RunLedger) -> Dict[str, Any]:
    paths = [_require(p, "--inputs") for p in args.inputs]
    ledger.log_inputs(*paths)
    rows: List[TableRow] = []
    summary: Dict[str, Any] = {"config_hash": digest, "compression": [], "traces": []}
    for path in paths:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        kind = _kind(data)
        if kind == "sort":
            rows.append(TableRow.from_json(path))
        elif kind == "compression":
            summary["compression"].append({"source": path, **(data["selected"] or {})})
        elif kind == "trace":
            summary["traces"].append({"source": path, **{k: v for k, v in data.items() if k != "blocks"}})
        else:
            logger.warning("%s: not a sort, compression or trace result; skipped", path)

    outputs = [_out(cfg, "summary.json")]
    if rows:
        outputs.append(_out(cfg, "table.csv"))
        frame = write_table(rows, outputs[-1], digest)
        summary["table"] = json.loads(frame.to_json(orient="records"))
    _write_json(outputs[0], summary)
    ledger.log_outputs(*outputs)
    return {"config_hash": digest, "rows": len(rows), "outputs": outputs}


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "compress": cmd_compress,
    "simulate": cmd_simulate,
    "classify": cmd_classify,
    "sort": cmd_sort,
    "convert-dataset": cmd_convert_dataset,
    "report": cmd_report,
}
