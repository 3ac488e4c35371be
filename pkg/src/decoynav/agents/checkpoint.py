"""Flat-text checkpoints for a bundle of subagents."""
from __future__ import annotations

import hashlib
import json

import numpy as np

CHECKPOINT_HEADER = "decoy-nav agent v1"


class CheckpointError(ValueError):
    pass


class ConfigHashMismatch(CheckpointError):
    def __init__(self, expected: str, found: str):
        super().__init__(f"config hash mismatch: checkpoint has {found}, config gives {expected}")
        self.expected = expected
        self.found = found


def config_hash(obj) -> str:
    """Stable short hash of a JSON-serialisable config."""
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def dumps(subagents, mode: str, cfg_hash: str, meta: dict | None = None) -> str:
    entries = []
    for sa in subagents:
        arrays = {name: {"shape": list(np.shape(v)), "data": np.asarray(v, dtype=float).ravel().tolist()}
                  for name, v in sa.state_dict().items()}
        entries.append({"index": sa.index, "kind": sa.kind, "arrays": arrays})
    body = {"mode": mode, "config_hash": cfg_hash, "k": len(entries), "meta": meta or {}, "subagents": entries}
    return CHECKPOINT_HEADER + "\n" + json.dumps(body, sort_keys=True) + "\n"


def loads(text: str, expected_hash: str | None = None) -> dict:
    """Parse a checkpoint; arrays come back as numpy arrays keyed per subagent."""
    header, _, rest = text.partition("\n")
    if header != CHECKPOINT_HEADER:
        raise CheckpointError(f"not a decoy-nav checkpoint (header {header!r})")
    body = json.loads(rest)
    if expected_hash is not None and body["config_hash"] != expected_hash:
        raise ConfigHashMismatch(expected_hash, body["config_hash"])
    for entry in body["subagents"]:
        entry["arrays"] = {n: np.array(v["data"], dtype=float).reshape(v["shape"]) for n, v in entry["arrays"].items()}
    return body


def save(path, subagents, mode: str, cfg_hash: str, meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps(subagents, mode, cfg_hash, meta))


def load(path, expected_hash: str | None = None) -> dict:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), expected_hash)
