"""Checkpoints: a flat binary of named arrays plus a text manifest.

``<stem>.bin`` starts with the version line and then holds the raw
little-endian bytes of every array back to back.  ``<stem>.manifest`` lists
the run settings followed by one line per array: name, dtype tag, shape and
byte offset into the binary.
"""
from __future__ import annotations

import difflib
from pathlib import Path

import numpy as np

from .config import RunConfig, parse_pair
from .storage import DTYPE_TAGS, _tag

VERSION = "vsgwm-ckpt-1"


class CheckpointMismatch(ValueError):
    pass


def _paths(stem):
    stem = Path(stem)
    if stem.suffix in (".bin", ".manifest"):
        stem = stem.with_suffix("")
    return stem.with_suffix(".bin"), stem.with_suffix(".manifest")


def save_checkpoint(stem, arrays: dict, cfg, extra=None):
    """Write ``arrays`` and the run config ``cfg``; returns the manifest path."""
    bin_path, man_path = _paths(stem)
    head = (VERSION + "\n").encode()
    lines = [f"version {VERSION}", f"variant {cfg.variant}", f"config_hash {cfg.hash()}"]
    for k, v in sorted((extra or {}).items()):
        lines.append(f"{k} {v}")
    lines.append("[config]")
    lines.extend(cfg.dumps().splitlines())
    lines.append("[arrays]")
    offset = len(head)
    chunks = [head]
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        tag = _tag(arr.dtype)
        data = np.ascontiguousarray(arr, dtype=DTYPE_TAGS[tag]).tobytes()
        shape = "x".join(str(d) for d in arr.shape) or "scalar"
        lines.append(f"{name} {tag} {shape} {offset} {len(data)}")
        chunks.append(data)
        offset += len(data)
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    with open(bin_path, "wb") as fh:
        for c in chunks:
            fh.write(c)
    man_path.write_text("\n".join(lines) + "\n")
    return man_path


def read_manifest(stem):
    _, man_path = _paths(stem)
    header, config, arrays, section = {}, [], [], "header"
    for line in man_path.read_text().splitlines():
        if line == "[config]":
            section = "config"
        elif line == "[arrays]":
            section = "arrays"
        elif section == "header":
            k, v = line.split(" ", 1)
            header[k] = v
        elif section == "config":
            config.append(line)
        else:
            name, tag, shape, off, n = line.split()
            dims = () if shape == "scalar" else tuple(int(d) for d in shape.split("x"))
            arrays.append((name, tag, dims, int(off), int(n)))
    if header.get("version") != VERSION:
        raise CheckpointMismatch(f"checkpoint version {header.get('version')!r}, expected {VERSION}")
    return header, config, arrays


def load_checkpoint(stem, expect=None):
    """Read arrays back.  With ``expect`` (a RunConfig) the variant must match;
    on mismatch the error message carries a diff of the two configs."""
    bin_path, _ = _paths(stem)
    header, config, entries = read_manifest(stem)
    if expect is not None and header["variant"] != expect.variant:
        diff = "\n".join(difflib.unified_diff(config, expect.dumps().splitlines(),
                                              "checkpoint", "requested", lineterm="", n=0))
        raise CheckpointMismatch(
            f"checkpoint variant {header['variant']!r} does not match requested "
            f"{expect.variant!r}\n{diff}")
    raw = bin_path.read_bytes()
    if not raw.startswith((VERSION + "\n").encode()):
        raise CheckpointMismatch(f"{bin_path} is not a {VERSION} binary")
    out = {}
    for name, tag, dims, off, n in entries:
        if off + n > len(raw):
            raise CheckpointMismatch(f"{bin_path} truncated at {name}")
        out[name] = np.frombuffer(raw[off:off + n], dtype=DTYPE_TAGS[tag]).reshape(dims).copy()
    return header, config, out


def config_from_manifest(stem):
    _, config, _ = read_manifest(stem)
    pairs = [parse_pair(line) for line in config if not line.startswith("wm.obs_shape")
             and not line.startswith("wm.action_dim")]
    return RunConfig.from_pairs(pairs)
