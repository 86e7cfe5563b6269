"""Run directory writers: CSV series, JSON reports, manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import os
import tempfile
import time
from pathlib import Path

import numpy as np

from .. import __version__


def _num(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, columns: dict):
    """Write equal-length columns with a header row; '.' decimal, no locale."""
    path = Path(path)
    names = list(columns)
    data = [np.asarray(columns[n]) for n in names]
    n = {len(d) for d in data}
    if len(n) > 1:
        raise ValueError(f"column lengths differ: {dict(zip(names, map(len, data)))}")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*data):
            w.writerow([_num(v) for v in row])
    return path


def read_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return {h: np.array([float(r[i]) for r in body]) for i, h in enumerate(header)}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_json(path, obj):
    path = Path(path)
    _atomic_write(path, json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n")
    return path


def _atomic_write(path: Path, text: str):
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


class RunDirectory:
    """Collects output files of one run and writes the manifest last."""

    def __init__(self, out, config_raw: dict, kind: str, seed: int):
        self.path = Path(out)
        self.path.mkdir(parents=True, exist_ok=True)
        self.config_raw, self.kind, self.seed = config_raw, kind, seed
        self.files = []
        self.started = time.time()

    def file(self, name) -> Path:
        p = self.path / name
        if name not in self.files:
            self.files.append(name)
        return p

    def csv(self, name, columns):
        return write_csv(self.file(name), columns)

    def json(self, name, obj):
        return write_json(self.file(name), obj)

    def finish(self, status: str, exit_code: int, message: str | None = None) -> Path:
        manifest = {
            "artifact": "wavemgt",
            "version": __version__,
            "experiment": self.kind,
            "seed": self.seed,
            "config": self.config_raw,
            "status": status,
            "exit_code": exit_code,
            "message": message,
            "started": self.started,
            "finished": time.time(),
            "files": {n: sha256(self.path / n) for n in sorted(self.files)
                      if (self.path / n).exists()},
        }
        return write_json(self.path / "manifest.json", manifest)


def verify_manifest(run_dir) -> bool:
    run_dir = Path(run_dir)
    man = json.loads((run_dir / "manifest.json").read_text())
    return all(sha256(run_dir / n) == d for n, d in man["files"].items())
