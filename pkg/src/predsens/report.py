"""Report envelopes, schema validation and plot-data CSVs.

Every run produces one JSON envelope: schema version, timestamp, the
resolved configuration, an input digest, the command payload and all
warnings. The payload is serialized canonically (sorted keys, shortest
round-trip floats, non-finite numbers as ``null``), so identical input,
configuration and seed give byte-identical payloads.
"""

from __future__ import annotations

import csv
import json
import math
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .errors import PredsensError

SCHEMA_VERSION = "1.0"
COMMANDS = ("predict", "sensitivity", "outliers", "overlap", "cv", "crosscv")
DENSITY_BINS = 30


class SchemaError(PredsensError):
    """A report failed validation against its versioned schema."""


def to_jsonable(obj):
    """Plain JSON types; numpy scalars/arrays converted, NaN and inf become None."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def canonical_json(obj, indent=2):
    return json.dumps(to_jsonable(obj), indent=indent, sort_keys=True, allow_nan=False,
                      ensure_ascii=False)


def load_schema(name):
    text = (resources.files("predsens") / "schemas" / f"{name}.json").read_text(encoding="utf-8")
    return json.loads(text)


def validate(envelope):
    """Check the envelope and its payload against the versioned schemas."""
    try:
        jsonschema.validate(envelope, load_schema("envelope"))
        jsonschema.validate(envelope["payload"], load_schema(envelope["command"]))
    except jsonschema.ValidationError as err:
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        raise SchemaError(f"report does not match its schema at {where}: {err.message}") from None


def make_envelope(command, config, input_info, payload, warnings=(), timestamp=None):
    if command not in COMMANDS:
        raise ValueError(f"unknown command {command!r}")
    stamp = timestamp or datetime.now(timezone.utc).replace(microsecond=0).isoformat()
    env = {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "timestamp": stamp,
        "config": to_jsonable(config),
        "input": to_jsonable(input_info),
        "payload": to_jsonable(payload),
        "warnings": [str(w) for w in warnings],
    }
    validate(env)
    return env


def payload_bytes(envelope):
    """Canonical bytes of the payload, the unit of the determinism guarantee."""
    return canonical_json(envelope["payload"]).encode("utf-8")


def write_envelope(envelope, out_dir, name="report.json"):
    path = Path(out_dir) / name
    path.write_text(canonical_json(envelope) + "\n", encoding="utf-8")
    return path


# ---------------------------------------------------------------------------
# plot data
# ---------------------------------------------------------------------------

def _num(v):
    return "" if v is None or not math.isfinite(v) else repr(float(v))


def write_metric_curves(levels, path, metrics=("rmse", "mae", "r2", "r2_adjusted")):
    """Long-format ``rho, metric, side, estimate, lo, hi`` rows of completed levels."""
    rows = 0
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["rho", "metric", "side", "estimate", "lo", "hi"])
        for lv in levels:
            if lv.get("status") != "ok":
                continue
            for metric in metrics:
                for side in ("original", "augmented"):
                    e = lv["metrics"][metric][side]
                    w.writerow([_num(lv["rho"]), metric, side,
                                _num(e["estimate"]), _num(e["lo"]), _num(e["hi"])])
                    rows += 1
    return rows


def emit_sensitivity_plots(payload, out_dir):
    """``curves.csv`` with every metric plus one ``curve_<metric>.csv`` per metric."""
    out = Path(out_dir)
    files = [out / "curves.csv"]
    write_metric_curves(payload["levels"], files[0])
    for metric in ("rmse", "mae", "r2", "r2_adjusted"):
        path = out / f"curve_{metric}.csv"
        write_metric_curves(payload["levels"], path, (metric,))
        files.append(path)
    return files


def shared_bin_edges(values, bins=DENSITY_BINS):
    values = np.asarray(values, dtype=np.float64)
    values = values[np.isfinite(values)]
    if values.size == 0:
        return np.array([0.0, 1.0])
    return np.histogram_bin_edges(values, bins=bins)


def write_density(groups, path, threshold=None, bins=DENSITY_BINS):
    """Per-group histograms of predictions on one shared set of bin edges.

    Parameters
    ----------
    groups : dict
        Group label -> 1-d array of predictions.
    threshold : float, optional
        Reference level (e.g. a proficiency baseline) written as a column,
        with a flag for bins lying entirely below it.
    """
    edges = shared_bin_edges(np.concatenate([np.asarray(v) for v in groups.values()]), bins)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "bin_lo", "bin_hi", "count", "density", "threshold", "below_threshold"])
        for label in sorted(groups):
            v = np.asarray(groups[label], dtype=np.float64)
            counts, _ = np.histogram(v, bins=edges)
            width = np.diff(edges)
            dens = counts / (counts.sum() * width) if counts.sum() else np.zeros_like(width)
            for i, c in enumerate(counts):
                below = "" if threshold is None else int(edges[i + 1] <= threshold)
                w.writerow([label, _num(edges[i]), _num(edges[i + 1]), int(c), _num(dens[i]),
                            "" if threshold is None else _num(threshold), below])
    return edges
