"""Shared plumbing: deterministic parallel mapping and table serialization."""

from __future__ import annotations

import concurrent.futures
import json
import os

FLOAT_FMT = "%.17g"


def thread_count(requested=None) -> int:
    """Resolve a worker count: explicit argument, else CWFLOW_THREADS, else 1."""
    if requested is None:
        env = os.environ.get("CWFLOW_THREADS", "").strip()
        requested = env if env else 1
    n = int(requested)
    if n < 1:
        raise ValueError(f"thread count must be >= 1, got {n}")
    return n


def parallel_map(fn, items, threads=None) -> list:
    """Apply fn over items, results in input order.

    threads <= 1 runs serially. Output does not depend on the worker
    count; only wall time does.
    """
    items = list(items)
    n = thread_count(threads)
    if n <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with concurrent.futures.ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def format_float(x) -> str:
    return FLOAT_FMT % float(x)


def write_csv(path, header, rows, meta: dict | None = None):
    """Plain CSV with full-precision floats.

    meta, when given, becomes a single leading comment line holding a
    canonical JSON object, so files stay self-describing yet parseable
    by any CSV reader that skips '#'.
    """
    lines = []
    if meta is not None:
        lines.append("# " + dump_json(meta))
    lines.append(",".join(header))
    for row in rows:
        lines.append(",".join(
            format_float(c) if isinstance(c, float) else str(c) for c in row))
    text = "\n".join(lines) + "\n"
    if hasattr(path, "write"):
        path.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def dump_json(obj) -> str:
    """Canonical JSON: sorted keys, no trailing whitespace jitter."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))
