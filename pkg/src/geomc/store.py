"""CSV-backed posterior-sample persistence with a run manifest.

Each sample block is one CSV file with a header row naming its columns.
Numbers are serialized with 17 significant digits so a written store reloads
bitwise-identically.  Files are written atomically (temp file + rename), and
``manifest.json`` records the config hash, seed, acceptance rates, wall time
and every emitted file; seed plus config hash reproduce every output file
bitwise on the same build.
"""

import json
import os
import tempfile

import numpy as np

from .errors import ParseError

__all__ = ["SampleStore", "write_manifest", "read_manifest"]

MANIFEST_NAME = "manifest.json"


def _atomic_write(path, text):
    directory = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


class SampleStore:
    """Named 2-d sample blocks, each with column headers."""

    def __init__(self):
        self._blocks = {}

    def add(self, name, array, headers):
        array = np.asarray(array, dtype=np.float64)
        if array.ndim != 2:
            raise ValueError(f"block {name!r} must be 2-d, got {array.shape}")
        if len(headers) != array.shape[1]:
            raise ValueError(
                f"block {name!r}: {len(headers)} headers for "
                f"{array.shape[1]} columns"
            )
        self._blocks[name] = (array, list(headers))

    def names(self):
        return sorted(self._blocks)

    def get(self, name):
        return self._blocks[name]

    def __contains__(self, name):
        return name in self._blocks

    def save(self, outdir):
        """Write every block as ``<name>.csv``; returns the file records."""
        os.makedirs(outdir, exist_ok=True)
        records = []
        for name in self.names():
            array, headers = self._blocks[name]
            lines = [",".join(headers)]
            for row in array:
                lines.append(",".join(f"{v:.17g}" for v in row))
            path = os.path.join(outdir, f"{name}.csv")
            _atomic_write(path, "\n".join(lines) + "\n")
            records.append(
                {
                    "name": name,
                    "file": f"{name}.csv",
                    "rows": int(array.shape[0]),
                    "cols": int(array.shape[1]),
                }
            )
        return records

    @classmethod
    def load(cls, outdir, names=None):
        """Reload blocks from a run directory (bitwise round trip)."""
        store = cls()
        if names is None:
            names = [
                f[:-4]
                for f in sorted(os.listdir(outdir))
                if f.endswith(".csv")
            ]
        for name in names:
            path = os.path.join(outdir, f"{name}.csv")
            with open(path) as fh:
                header = fh.readline().rstrip("\n")
                headers = header.split(",") if header else []
                rows = []
                for lineno, line in enumerate(fh, start=2):
                    line = line.rstrip("\n")
                    if not line:
                        continue
                    parts = line.split(",")
                    if len(parts) != len(headers):
                        raise ParseError(
                            f"{path}: row {lineno} has {len(parts)} fields, "
                            f"expected {len(headers)}",
                            row=lineno,
                        )
                    try:
                        rows.append([float(v) for v in parts])
                    except ValueError as err:
                        raise ParseError(
                            f"{path}: row {lineno}: {err}", row=lineno
                        ) from err
            array = np.array(rows, dtype=np.float64).reshape(-1, len(headers))
            store.add(name, array, headers)
        return store


def write_manifest(outdir, manifest):
    _atomic_write(
        os.path.join(outdir, MANIFEST_NAME),
        json.dumps(manifest, indent=2, sort_keys=True) + "\n",
    )


def read_manifest(outdir):
    with open(os.path.join(outdir, MANIFEST_NAME)) as fh:
        return json.load(fh)
