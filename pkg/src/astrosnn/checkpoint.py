"""Model checkpoint file format.

A checkpoint is a single binary file: the magic string ``ASTROSNN1`` and a
newline, a 4-byte big-endian length-prefixed JSON header (config echo,
seed lineage, array directory), then the raw C-order bytes of each array
in directory order. The weight matrix is stored row-major with its
dimensions declared in the header; optional arrays (pre-fault snapshot,
fault mask) are present only when supplied.
"""

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .network import NetworkState, SnnConfig

MAGIC = b"ASTROSNN1\n"


class CheckpointFormatError(Exception):
    """Bad magic, truncation, or inconsistent header in a checkpoint."""


@dataclass
class Checkpoint:
    config: SnnConfig
    weights: np.ndarray
    theta: np.ndarray
    fault_mask: np.ndarray
    seed_lineage: list
    w0: np.ndarray = None          # pre-fault weight snapshot, if archived
    baseline_acc: float = None

    def to_state(self):
        """Materialize a NetworkState with fresh per-image transients."""
        state = NetworkState.initial(self.config, seed=0)
        state.weights = np.array(self.weights, dtype=float, copy=True)
        state.theta = np.array(self.theta, dtype=float, copy=True)
        state.fault_mask = np.array(self.fault_mask, dtype=bool, copy=True)
        state.reset_transient(self.config)
        return state


def save_checkpoint(path, config, weights, theta, fault_mask=None,
                    seed_lineage=(), w0=None, baseline_acc=None):
    weights = np.ascontiguousarray(weights, dtype=np.float64)
    theta = np.ascontiguousarray(theta, dtype=np.float64)
    if fault_mask is None:
        fault_mask = np.zeros(weights.shape, dtype=bool)
    fault_mask = np.ascontiguousarray(fault_mask, dtype=np.uint8)
    arrays = [("weights", weights), ("theta", theta),
              ("fault_mask", fault_mask)]
    if w0 is not None:
        arrays.append(("w0", np.ascontiguousarray(w0, dtype=np.float64)))
    header = {
        "config": asdict(config),
        "seed_lineage": list(seed_lineage),
        "baseline_acc": baseline_acc,
        "arrays": [
            {"name": name, "dtype": str(a.dtype), "shape": list(a.shape)}
            for name, a in arrays
        ],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack(">I", len(blob)))
        f.write(blob)
        for _, a in arrays:
            f.write(a.tobytes())


def load_checkpoint(path):
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointFormatError(
                f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        raw_len = f.read(4)
        if len(raw_len) < 4:
            raise CheckpointFormatError(f"{path}: truncated header length")
        (hlen,) = struct.unpack(">I", raw_len)
        blob = f.read(hlen)
        if len(blob) < hlen:
            raise CheckpointFormatError(f"{path}: truncated header")
        try:
            header = json.loads(blob.decode("utf-8"))
        except ValueError as e:
            raise CheckpointFormatError(f"{path}: bad header JSON: {e}")
        data = {}
        for entry in header["arrays"]:
            dtype = np.dtype(entry["dtype"])
            shape = tuple(entry["shape"])
            n_bytes = dtype.itemsize * int(np.prod(shape, dtype=np.int64))
            buf = f.read(n_bytes)
            if len(buf) < n_bytes:
                raise CheckpointFormatError(
                    f"{path}: truncated array {entry['name']}")
            data[entry["name"]] = np.frombuffer(buf, dtype=dtype).reshape(shape)
    config = SnnConfig(**header["config"])
    return Checkpoint(
        config=config,
        weights=np.array(data["weights"], dtype=float),
        theta=np.array(data["theta"], dtype=float),
        fault_mask=data["fault_mask"].astype(bool),
        seed_lineage=header.get("seed_lineage", []),
        w0=np.array(data["w0"], dtype=float) if "w0" in data else None,
        baseline_acc=header.get("baseline_acc"),
    )
