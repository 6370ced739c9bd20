"""Report emission: delimited tables, log-log figures, and run manifests.

CSV files are written atomically (temp file, then rename) with shortest
round-trip float formatting, so re-running an experiment with the same
configuration and seed reproduces them byte for byte. Figures are rendered
to SVG with a pinned hash salt and no date metadata for the same reason.
"""

from __future__ import annotations

import json
import os
import tempfile
import time

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "gachaos"

import matplotlib.pyplot as plt  # noqa: E402

__all__ = [
    "fmt",
    "write_text",
    "write_csv",
    "rate_table_csv",
    "trace_csv",
    "plot_rate_table",
    "write_summary",
    "write_manifest",
]


def fmt(value) -> str:
    """Shortest round-trip decimal form of a float; integers stay integers."""
    if isinstance(value, str):
        return value
    if isinstance(value, (int,)) and not isinstance(value, bool):
        return str(value)
    v = float(value)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def write_text(path, content: str) -> None:
    """Atomic write: no partial files are left behind on failure."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(content)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path, header, rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt(v) for v in row))
    write_text(path, "\n".join(lines) + "\n")


def rate_table_csv(table, path) -> None:
    rows = [(row.param, row.mean_err, row.stderr, row.epsilon, row.slope_running)
            for row in table.rows]
    write_csv(path, ["param", "mean_err", "stderr", "epsilon", "slope_running"], rows)


def trace_csv(trace, path) -> None:
    write_csv(path, ["step", "E_n", "bl_emp"], trace.mean_rows())


def plot_rate_table(table, path, target_slope: float) -> None:
    """Log-log error plot with the fitted line and the target-slope guide.

    An empty table produces no figure (the CSV still records the header).
    """
    if not table.rows:
        return
    params = [row.param for row in table.rows]
    means = [row.mean_err for row in table.rows]
    errs = [2.0 * row.stderr for row in table.rows]
    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.errorbar(params, means, yerr=errs, fmt="o", capsize=3, label="measured")
    import numpy as np

    p = np.array(params, dtype=float)
    anchor = means[0]
    guide = anchor * (p / p[0]) ** target_slope
    ax.plot(p, guide, "k--", lw=1,
            label=f"slope {target_slope:+.2f} guide")
    if np.isfinite(table.slope):
        fitted = anchor * (p / p[0]) ** table.slope
        ax.plot(p, fitted, "-", lw=1,
                label=f"fit {table.slope:+.3f}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    xlabel = "N" if table.kind == "N" else "tau"
    ax.set_xlabel(xlabel)
    ax.set_ylabel("BL error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _jsonable(value):
    import numpy as np

    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_summary(path, payload: dict) -> None:
    write_text(path, json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")


def write_manifest(out_dir, config_hash: str, seed: int, version: str,
                   outputs) -> str:
    """One manifest per run: enough to reproduce it (hash + seed + version)."""
    payload = {
        "config_hash": config_hash,
        "seed": int(seed),
        "artifact_version": version,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime()),
        "outputs": sorted(os.path.relpath(p, out_dir) for p in outputs),
    }
    path = os.path.join(out_dir, "manifest.json")
    write_text(path, json.dumps(payload, indent=2, sort_keys=True) + "\n")
    return path
