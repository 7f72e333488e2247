"""Deterministic file emission: CSV/JSON writers and the run manifest.

Data files carry no wall-clock content (identical configs reproduce them
byte-for-byte); timing lives only in the manifest, which is written last as
the atomic completion marker.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile

SCHEMA_VERSIONS = {
    "trajectory.csv": 1,
    "snapshot.csv": 1,
    "limit_snapshot.csv": 1,
    "convergence.csv": 1,
    "sweep.csv": 1,
    "contact.csv": 1,
    "certificates.json": 1,
    "summary.csv": 1,
    "decay.json": 1,
    "kummer_report.json": 1,
    "manifest.json": 1,
}


def _fmt(x):
    import numpy as np
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


def _atomic_write(path: str, data: str):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: str, columns, rows):
    """Rows are dicts keyed by `columns`; floats use shortest round-trip."""
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    _atomic_write(path, "\n".join(lines) + "\n")


def _json_default(o):
    import numpy as np
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"not serializable: {type(o)}")


def write_json(path: str, obj):
    _atomic_write(path, json.dumps(obj, indent=2, sort_keys=True,
                                   default=_json_default) + "\n")


def config_hash(raw_bytes: bytes, seed: int) -> str:
    h = hashlib.sha256()
    h.update(raw_bytes)
    h.update(str(seed).encode())
    return h.hexdigest()


def write_manifest(outdir: str, cfg_hash: str, files: list, timings: dict,
                   pass_summary: dict, seed: int, steps: dict | None = None,
                   monitors: dict | None = None):
    manifest = {
        "config_hash": cfg_hash,
        "schema_versions": {f: SCHEMA_VERSIONS.get(os.path.basename(f), 1)
                            for f in files},
        "files": sorted(files),
        "timings_s": timings,
        "steps": steps or {},
        "monitors": monitors or {},
        "pass_summary": pass_summary,
        "seed": seed,
    }
    write_json(os.path.join(outdir, "manifest.json"), manifest)
    return manifest
