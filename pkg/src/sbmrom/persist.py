"""Binary persistence for snapshot/basis matrices plus JSON sidecars.

Array container layout (little-endian):

  * 16-byte header: 12-byte magic ``SBMROM-ARRAY`` + uint32 format version,
  * two int64 dimensions (rows, cols),
  * rows*cols float64 values in column-major order.

Every matrix gets a JSON sidecar carrying the parameter samples and the
mesh/config hashes; loaders refuse artifacts whose hashes do not match the
current study.
"""

from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from .errors import ArtifactMismatchError, InvalidInputError

MAGIC = b"SBMROM-ARRAY"
FORMAT_VERSION = 1


def save_array(path, array):
    arr = np.atleast_2d(np.asarray(array, dtype=np.float64))
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<qq", arr.shape[0], arr.shape[1]))
        fh.write(np.asfortranarray(arr).tobytes(order="F"))


def load_array(path):
    with open(path, "rb") as fh:
        magic = fh.read(12)
        if magic != MAGIC:
            raise InvalidInputError(f"{path}: not an array container")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise InvalidInputError(f"{path}: unsupported container version {version}")
        rows, cols = struct.unpack("<qq", fh.read(16))
        data = fh.read(8 * rows * cols)
        if len(data) != 8 * rows * cols:
            raise InvalidInputError(f"{path}: truncated container")
    return np.frombuffer(data, dtype="<f8").reshape((rows, cols), order="F").copy()


def config_hash(payload) -> str:
    """Hash of the canonical JSON encoding of a config payload."""
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()


def write_sidecar(path, mesh_hash, cfg_hash, samples, extra=None):
    doc = {
        "mesh_hash": mesh_hash,
        "config_hash": cfg_hash,
        "samples": [list(map(float, mu)) for mu in samples],
    }
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def read_sidecar(path):
    return json.loads(Path(path).read_text())


def check_sidecar(path, mesh_hash, cfg_hash):
    doc = read_sidecar(path)
    if doc.get("mesh_hash") != mesh_hash:
        raise ArtifactMismatchError(
            f"{path}: artifact was built on a different mesh "
            f"({doc.get('mesh_hash', '?')[:12]} != {mesh_hash[:12]})"
        )
    if doc.get("config_hash") != cfg_hash:
        raise ArtifactMismatchError(
            f"{path}: artifact was built from a different configuration "
            f"({doc.get('config_hash', '?')[:12]} != {cfg_hash[:12]})"
        )
    return doc
