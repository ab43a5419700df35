"""Report records, their JSON schemas, and aligned-text rendering.

Every JSON report carries ``format = "stochgaze-report"``, a ``version``
and a ``kind`` naming one of the schemas in ``SCHEMAS``. Reports are
written with sorted keys so identical runs give identical bytes.
"""
from __future__ import annotations

import json
from pathlib import Path

REPORT_VERSION = 1

_rate = {"type": ["number", "null"], "minimum": 0, "maximum": 1}

METRICS_SCHEMA = {
    "type": "object",
    "required": ["best_f1", "precision_at_best", "recall_at_best", "threshold_at_best",
                 "mean_class_accuracy", "topk", "per_class_accuracy"],
    "properties": {
        "best_f1": _rate,
        "precision_at_best": _rate,
        "recall_at_best": _rate,
        "threshold_at_best": {"type": ["number", "null"]},
        "mean_class_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "topk": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0, "maximum": 1}},
        "per_class_accuracy": {"type": "array", "items": _rate},
        "num_items": {"type": "integer", "minimum": 0},
        "num_gaze_items": {"type": "integer", "minimum": 0},
        "extra": {"type": "object"},
    },
}


def _envelope(kind: str, body: dict, required: list[str]) -> dict:
    return {
        "type": "object",
        "required": ["format", "version", "kind", *required],
        "properties": {
            "format": {"const": "stochgaze-report"},
            "version": {"const": REPORT_VERSION},
            "kind": {"const": kind},
            **body,
        },
    }


SCHEMAS = {
    "eval": _envelope("eval", {
        "metrics": METRICS_SCHEMA,
        "checkpoint": {"type": "string"},
        "data": {"type": "string"},
        "prior_mode": {"type": "string"},
    }, ["metrics"]),
    "train": _envelope("train", {
        "epochs": {"type": "integer", "minimum": 0},
        "final": {"type": "object"},
        "checkpoint": {"type": "string"},
    }, ["epochs", "final"]),
    "gradcheck": _envelope("gradcheck", {
        "tolerance": {"type": "number"},
        "max_rel_error": {"type": "number", "minimum": 0},
        "passed": {"type": "boolean"},
        "configs": {"type": "array", "items": {
            "type": "object",
            "required": ["index", "prior_mode", "dropout", "errors"],
            "properties": {"errors": {"type": "object",
                                      "additionalProperties": {"type": "number", "minimum": 0}}},
        }},
    }, ["tolerance", "max_rel_error", "passed", "configs"]),
    "baselines": _envelope("baselines", {
        "seeds": {"type": "array", "items": {"type": "integer"}},
        "oracle_accuracy": {"type": "array", "items": {"type": "number"}},
        "runs": {"type": "object", "additionalProperties": {"type": "array", "items": METRICS_SCHEMA}},
        "summary": {"type": "object", "additionalProperties": {"type": "object"}},
        "checks": {"type": "object"},
    }, ["seeds", "runs", "summary"]),
    "synth": _envelope("synth", {
        "oracle_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "files": {"type": "object"},
    }, ["oracle_accuracy", "files"]),
    "bench": _envelope("bench", {
        "batch_size": {"type": "integer"},
        "seconds": {"type": "object", "additionalProperties": {"type": "number", "minimum": 0}},
    }, ["batch_size", "seconds"]),
}

TRAIN_LOG_SCHEMA = {
    "type": "object",
    "required": ["epoch", "lr", "nll", "kl", "total", "accuracy"],
    "properties": {
        "epoch": {"type": "integer", "minimum": 0},
        "lr": {"type": "number", "exclusiveMinimum": 0},
        "nll": {"type": "number", "minimum": 0},
        "kl": {"type": "number"},
        "total": {"type": "number"},
        "accuracy": {"type": "number", "minimum": 0, "maximum": 1},
    },
}


def make_report(kind: str, **body) -> dict:
    if kind not in SCHEMAS:
        raise ValueError(f"unknown report kind {kind!r}")
    return {"format": "stochgaze-report", "version": REPORT_VERSION, "kind": kind, **body}


def dumps(report: dict) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


def write_report(report: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(report))
    return path


def table(rows: list[list], header: list[str]) -> str:
    """Left-aligned text table; floats print with four decimals."""
    def fmt(v):
        if v is None:
            return "-"
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    cells = [[fmt(v) for v in r] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in cells)) if cells else len(h) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths)),
             "  ".join("-" * w for w in widths)]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in cells]
    return "\n".join(lines) + "\n"


def metrics_table(metrics: dict) -> str:
    rows = [
        ["best F1", metrics["best_f1"]],
        ["precision @ best", metrics["precision_at_best"]],
        ["recall @ best", metrics["recall_at_best"]],
        ["threshold @ best", metrics["threshold_at_best"]],
        ["mean class accuracy", metrics["mean_class_accuracy"]],
    ]
    rows += [[f"top-{k} accuracy", v] for k, v in sorted(metrics["topk"].items(), key=lambda kv: int(kv[0]))]
    return table(rows, ["metric", "value"])
