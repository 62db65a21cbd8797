"""CSV and JSON output.

Numbers are written with ``repr`` of the Python float, the shortest decimal
that round-trips the double exactly, so reruns are byte-identical.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
import subprocess
from pathlib import Path

import numpy as np

from .. import __version__


def format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path, columns, rows) -> None:
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([format_cell(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc


def version_string() -> str:
    """Package version plus ``git describe`` of the checkout when there is one."""
    here = Path(__file__).resolve().parent
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=here, capture_output=True, text=True, timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+g{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _jsonable(value):
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def emit(tables: dict, out_dir, config, wall_clock: float, extra: dict | None = None) -> Path:
    """Write one CSV per table plus ``manifest.json``; returns the manifest path."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror or exc}") from exc
    files = {}
    for name, table in tables.items():
        path = out / f"{name}.csv"
        write_csv(path, table.columns, table.rows)
        files[path.name] = {"columns": list(table.columns), "rows": len(table.rows)}
    manifest = {
        "experiment": config.experiment,
        "seed": config.seed,
        "version": version_string(),
        "config": {k: _jsonable(v) for k, v in config.echo().items()},
        "files": files,
        "wall_clock_seconds": wall_clock,
        "finished_at": dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds"),
    }
    if extra:
        manifest.update(extra)
    path = out / "manifest.json"
    try:
        with open(path, "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=False)
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path
