"""Named n-d array container and the episode record built on it.

Layout: a 16-byte magic line, a 16-byte array count, then per array a
256-byte ASCII header (name, dtype tag, rank, extents, byte length) followed
by the raw little-endian data.  Headers are plain text so other languages can
read the files without special libraries.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

MAGIC = b"vsgwm-arrays-1".ljust(15) + b"\n"
HEADER_BYTES = 256
NAME_WIDTH = 96

# tag -> little-endian dtype
DTYPE_TAGS = {
    "u1": np.dtype("u1"), "b1": np.dtype("?"), "i4": np.dtype("<i4"), "i8": np.dtype("<i8"),
    "f4": np.dtype("<f4"), "f8": np.dtype("<f8"), "u4": np.dtype("<u4"), "u8": np.dtype("<u8"),
}
_TAG_OF = {v.str: k for k, v in DTYPE_TAGS.items()}


class FormatError(ValueError):
    pass


def _tag(dtype):
    dt = np.dtype(dtype).newbyteorder("<")
    if dt.str not in _TAG_OF:
        raise FormatError(f"unsupported dtype {dt}")
    return _TAG_OF[dt.str]


def encode_arrays(arrays: dict) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(f"{len(arrays):<15}\n".encode())
    for name, arr in arrays.items():
        arr = np.asarray(arr)
        tag = _tag(arr.dtype)
        if len(name) > NAME_WIDTH or any(c.isspace() for c in name):
            raise FormatError(f"bad array name {name!r}")
        data = np.ascontiguousarray(arr, dtype=DTYPE_TAGS[tag]).tobytes()
        head = f"{name:<{NAME_WIDTH}} {tag:<3} {arr.ndim:>2} " + " ".join(str(d) for d in arr.shape)
        head = f"{head} | {len(data)}"
        if len(head) >= HEADER_BYTES:
            raise FormatError(f"header for {name!r} exceeds {HEADER_BYTES} bytes")
        buf.write(head.ljust(HEADER_BYTES - 1).encode() + b"\n")
        buf.write(data)
    return buf.getvalue()


def decode_arrays(raw: bytes) -> dict:
    if raw[:16] != MAGIC:
        raise FormatError("not an array container (bad magic)")
    n = int(raw[16:32].decode())
    pos, out = 32, {}
    for _ in range(n):
        head = raw[pos:pos + HEADER_BYTES].decode()
        pos += HEADER_BYTES
        if len(head) < HEADER_BYTES:
            raise FormatError("truncated header")
        left, nbytes = head.rsplit("|", 1)
        name, tag, rank, *dims = left.split()
        shape = tuple(int(d) for d in dims)
        if len(shape) != int(rank):
            raise FormatError(f"{name}: rank {rank} but {len(shape)} extents")
        nbytes = int(nbytes)
        chunk = raw[pos:pos + nbytes]
        if len(chunk) != nbytes:
            raise FormatError(f"{name}: truncated data")
        pos += nbytes
        out[name] = np.frombuffer(chunk, dtype=DTYPE_TAGS[tag]).reshape(shape).copy()
    return out


def save_arrays(path, arrays: dict):
    with open(path, "wb") as fh:
        fh.write(encode_arrays(arrays))


def load_arrays(path) -> dict:
    with open(path, "rb") as fh:
        return decode_arrays(fh.read())


@dataclass
class EpisodeRecord:
    """One episode: ``observations`` has T+1 frames, the rest T entries."""

    observations: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminals: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.actions = np.asarray(self.actions, dtype=np.float32)
        self.rewards = np.asarray(self.rewards, dtype=np.float32)
        self.terminals = np.asarray(self.terminals, dtype=bool)
        t = len(self.actions)
        if len(self.observations) != t + 1 or len(self.rewards) != t or len(self.terminals) != t:
            raise ValueError(
                f"inconsistent episode lengths: obs {len(self.observations)}, actions {t}, "
                f"rewards {len(self.rewards)}, terminals {len(self.terminals)}")

    def __len__(self):
        return len(self.actions)

    @property
    def total_reward(self):
        return float(self.rewards.sum())

    def to_arrays(self):
        meta = np.frombuffer(json.dumps(self.meta, sort_keys=True).encode(), dtype=np.uint8)
        return {"observations": self.observations, "actions": self.actions,
                "rewards": self.rewards, "terminals": self.terminals, "meta": meta}

    @classmethod
    def from_arrays(cls, arrays):
        meta = json.loads(arrays["meta"].tobytes().decode()) if "meta" in arrays else {}
        return cls(arrays["observations"], arrays["actions"], arrays["rewards"],
                   arrays["terminals"], meta)

    def save(self, path):
        save_arrays(path, self.to_arrays())

    @classmethod
    def load(cls, path):
        return cls.from_arrays(load_arrays(path))
