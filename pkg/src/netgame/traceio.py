"""CSV traces and JSON summaries.

A trace file is a block of ``# key=value`` metadata lines followed by a
CSV table with a header row.  Columns, in order:

``k``            iteration index, strictly increasing from 0
``dist``         ``|s^k - sbar|_2``
``wdist``        ``|s^k - sbar|`` weighted by ``1/pbar_i``
``tau``          step size used to leave ``s^k``
``n_present``    number of participating agents at ``k``
``max_regret``   ``max_i R_i(k)``
``mean_regret``  ``mean_i R_i(k)``
``noise_sq``     ``|w^k|_2^2`` (only when noise recording is on)
``regret_<i>``   ``R_i(k)`` per agent (only when regret recording is on)

The only line that changes between identical runs is ``# created=...``;
:func:`trace_digest` hashes everything else.
"""
from __future__ import annotations

import hashlib
import io
import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from .dynamics import SimulationTrace

FORMAT = "netgame-trace/1"
TIMESTAMP_KEY = "created"


def timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def trace_columns(trace: SimulationTrace):
    cols = [("k", trace.k), ("dist", trace.dist), ("wdist", trace.wdist), ("tau", trace.tau),
            ("n_present", trace.n_present), ("max_regret", trace.max_regret),
            ("mean_regret", trace.mean_regret)]
    if trace.noise_sq is not None:
        cols.append(("noise_sq", trace.noise_sq))
    if trace.regret is not None:
        cols += [(f"regret_{i}", trace.regret[:, i]) for i in range(trace.regret.shape[1])]
    return cols


def write_trace(path, trace: SimulationTrace, meta: Optional[dict] = None) -> str:
    """Write ``trace`` to ``path``; returns its digest."""
    cols = trace_columns(trace)
    header = {"format": FORMAT, TIMESTAMP_KEY: timestamp(), "seed": trace.seed,
              "replication": trace.replication}
    header.update(meta or {})
    buf = io.StringIO()
    for key, value in header.items():
        if not isinstance(value, str):
            value = json.dumps(value, sort_keys=True)
        buf.write(f"# {key}={value}\n")
    buf.write(",".join(name for name, _ in cols) + "\n")
    table = np.column_stack([np.asarray(c, dtype=float) for _, c in cols])
    fmt = ["%d"] + ["%.17g"] * 3 + ["%d"] + ["%.17g"] * (len(cols) - 5)
    np.savetxt(buf, table, fmt=fmt, delimiter=",")
    text = buf.getvalue()
    Path(path).write_text(text, encoding="utf-8")
    return digest_text(text)


def digest_text(text: str) -> str:
    h = hashlib.sha256()
    for line in text.splitlines(keepends=True):
        if not line.startswith(f"# {TIMESTAMP_KEY}="):
            h.update(line.encode())
    return h.hexdigest()


def trace_digest(path) -> str:
    """SHA-256 of a trace file with the timestamp line left out."""
    return digest_text(Path(path).read_text(encoding="utf-8"))


def read_trace(path):
    """Returns ``(meta, columns)``; ``columns`` maps column name to array."""
    meta, lines = {}, []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("# "):
            key, _, value = line[2:].partition("=")
            try:
                meta[key] = json.loads(value)
            except json.JSONDecodeError:
                meta[key] = value
        elif line:
            lines.append(line)
    names = lines[0].split(",")
    data = np.loadtxt(io.StringIO("\n".join(lines[1:])), delimiter=",", ndmin=2)
    cols = {name: data[:, j] for j, name in enumerate(names)}
    for name in ("k", "n_present"):
        cols[name] = cols[name].astype(np.int64)
    return meta, cols


def write_profiles(path, trace: SimulationTrace):
    """Stored profiles ``s^k``: one row per stored ``k``, stacked coordinates."""
    flat = trace.profiles.reshape(trace.profiles.shape[0], -1)
    table = np.column_stack([trace.profile_k.astype(float), flat])
    names = ["k"] + [f"s_{i}_{d}" for i in range(trace.profiles.shape[1]) for d in range(trace.profiles.shape[2])]
    np.savetxt(path, table, fmt=["%d"] + ["%.17g"] * flat.shape[1], delimiter=",",
               header=",".join(names), comments="")


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if np.isfinite(x) else None
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def write_summary(path, summary: dict):
    body = {TIMESTAMP_KEY: timestamp()}
    body.update(summary)
    Path(path).write_text(json.dumps(_jsonable(body), indent=2, sort_keys=True) + "\n", encoding="utf-8")
