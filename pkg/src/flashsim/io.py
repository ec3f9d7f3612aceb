"""File formats: price CSV ingestion, single-column series, run outputs.

All filesystem access of the package lives here and in the CLI.
"""
import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, is_dataclass

import numpy as np

from .kernel import AGENT_TYPES

MAX_GAP_MS = 60_000


class DataFormatError(ValueError):
    pass


@dataclass
class RunManifest:
    command: str
    config_path: str = None
    config_hash: str = None
    seeds: list = field(default_factory=list)
    out_dir: str = None
    files: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)


def ingest_price_csv(path):
    """Per-second last-value price series from a ``time_ms,price`` CSV.

    Seconds without an observation carry the previous price.  Timestamps
    must be non-decreasing with no gap over 60 s.
    """
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header != ["time_ms", "price"]:
        raise DataFormatError(f"{path}: header must be 'time_ms,price', got {','.join(header)!r}")
    body = [r for r in rows[1:] if r]
    if not body:
        raise DataFormatError(f"{path}: no data rows")
    try:
        t = np.array([int(float(r[0])) for r in body], dtype=np.int64)
        p = np.array([float(r[1]) for r in body])
    except (ValueError, IndexError) as exc:
        raise DataFormatError(f"{path}: malformed row ({exc})") from exc
    if not np.all(np.isfinite(p)):
        raise DataFormatError(f"{path}: non-finite price")
    dt = np.diff(t)
    if np.any(dt < 0):
        k = int(np.argmax(dt < 0)) + 2
        raise DataFormatError(f"{path}: timestamps not sorted at data row {k}")
    if np.any(dt > MAX_GAP_MS):
        k = int(np.argmax(dt > MAX_GAP_MS)) + 2
        raise DataFormatError(f"{path}: gap over {MAX_GAP_MS // 1000} s at data row {k}")
    return resample_last(t, p)


def resample_last(time_ms, price):
    """Last value in each whole second from the first to the last observation."""
    sec = np.asarray(time_ms) // 1000
    sec = sec - sec[0]
    n = int(sec[-1]) + 1
    out = np.full(n, np.nan)
    out[sec] = price  # later rows overwrite earlier ones within a second
    idx = np.where(np.isnan(out), 0, np.arange(n))
    np.maximum.accumulate(idx, out=idx)
    return out[idx]


def read_series(path):
    """Single-column numeric CSV (an optional non-numeric header is skipped)."""
    vals = []
    with open(path, newline="") as fh:
        for k, row in enumerate(csv.reader(fh)):
            if not row or not row[0].strip():
                continue
            try:
                vals.append(float(row[0]))
            except ValueError:
                if k == 0:
                    continue
                raise DataFormatError(f"{path}: non-numeric value on line {k + 1}")
    if not vals:
        raise DataFormatError(f"{path}: no values")
    return np.array(vals)


def write_series(path, values, name="value", fmt="%.10g"):
    with open(path, "w", newline="") as fh:
        fh.write(name + "\n")
        for v in np.asarray(values):
            fh.write(fmt % v + "\n")


def _price_fmt(tick):
    dec = max(0, len(f"{tick:.10f}".rstrip("0").split(".")[1]))
    return f"%.{dec}f"


def _jsonable(x):
    if is_dataclass(x):
        x = asdict(x)
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_jsonable(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return None if not np.isfinite(x) else round(x, 6)
    return x


def write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()


def emit_outputs(record, out_dir, metrics=None, manifest=None):
    """Write trades, per-step snapshots and inventories, metrics and a manifest."""
    os.makedirs(out_dir, exist_ok=True)
    tick = record.config.tick_size
    pf = _price_fmt(tick)
    files = []

    def px(ticks):
        return "" if ticks < 0 else pf % (ticks * tick)

    tr = record.trades
    path = os.path.join(out_dir, "trades.csv")
    write_rows(path, ["step", "price", "volume", "maker_order_id", "taker_order_id",
                      "maker_agent_id", "taker_agent_id", "maker_type", "taker_type"],
               ([int(tr["step"][k]), pf % tr["price"][k], int(tr["volume"][k]),
                 int(tr["maker_order_id"][k]), int(tr["taker_order_id"][k]),
                 int(tr["maker_agent_id"][k]), int(tr["taker_agent_id"][k]),
                 AGENT_TYPES[record.agent_type[tr["maker_agent_id"][k]]],
                 AGENT_TYPES[record.agent_type[tr["taker_agent_id"][k]]]]
                for k in range(len(tr["step"]))))
    files.append(path)

    path = os.path.join(out_dir, "snapshots.csv")
    mid_fmt = "%." + str(int(pf[2:-1]) + 1) + "f"
    write_rows(path, ["step", "best_bid", "best_ask", "mid", "bid_depth", "ask_depth",
                      "volume", "last_minute_volume", "fundamental"],
               ([t, px(record.best_bid[t]), px(record.best_ask[t]),
                 "" if np.isnan(record.mid[t]) else mid_fmt % record.mid[t],
                 int(record.bid_depth[t]), int(record.ask_depth[t]), int(record.volume[t]),
                 int(record.last_minute_volume[t]),
                 "" if record.fundamental is None else "%.6f" % record.fundamental[t]]
                for t in range(record.n_steps)))
    files.append(path)

    path = os.path.join(out_dir, "inventories.csv")
    write_rows(path, ["step", *AGENT_TYPES],
               ([t, *map(int, record.inventory[t])] for t in range(record.n_steps)))
    files.append(path)

    if metrics is not None:
        path = os.path.join(out_dir, "metrics.json")
        write_json(path, metrics)
        files.append(path)

    manifest = manifest or RunManifest(command="simulate", seeds=[record.config.seed])
    return finish_manifest(manifest, out_dir, files)


def finish_manifest(manifest, out_dir, files):
    path = os.path.join(out_dir, "manifest.json")
    manifest.out_dir = out_dir
    manifest.files = [os.path.basename(f) for f in files] + ["manifest.json"]
    write_json(path, manifest.to_dict())
    return manifest
