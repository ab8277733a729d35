"""Named parameter groups with freeze flags and a binary container format.

A group is a dict of named float64 arrays; its canonical flat form orders
entries by sorted array name, which fixes a stable, deterministic layout
for serialization, hashing and the optimizer. Frozen groups are skipped by
the optimizer entirely, so their bytes never change.

Container layout (little endian):
    magic  b"SIRAPRM1"
    uint32 group count
    per group:
        uint32 name length, name utf-8 bytes
        uint64 entry count
        float64 * entry count   (canonical flat order)

Array shapes are not part of the container; checkpoints pair it with a
JSON sidecar that records per-group array shapes (see ``sceneio``).
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

from . import autodiff as ad

MAGIC = b"SIRAPRM1"


class ParamStoreError(RuntimeError):
    pass


class ParamStore:
    """Collection of named parameter groups backing all decoders and latents."""

    def __init__(self):
        self.groups: dict[str, dict[str, np.ndarray]] = {}
        self.frozen: set[str] = set()

    # -- construction ------------------------------------------------------
    def add_group(self, group: str, arrays: dict[str, np.ndarray], frozen: bool = False):
        if group in self.groups:
            raise ParamStoreError(f"group '{group}' already exists")
        self.groups[group] = {k: np.asarray(v, dtype=np.float64).copy() for k, v in arrays.items()}
        if frozen:
            self.frozen.add(group)
        return self

    def has_group(self, group: str) -> bool:
        return group in self.groups

    def remove_group(self, group: str):
        self.groups.pop(group)
        self.frozen.discard(group)

    # -- freezing ----------------------------------------------------------
    def freeze(self, *names: str):
        for n in names:
            if n not in self.groups:
                raise ParamStoreError(f"cannot freeze unknown group '{n}'")
            self.frozen.add(n)

    def unfreeze(self, *names: str):
        for n in names:
            self.frozen.discard(n)

    def set_trainable(self, names):
        """Freeze everything except ``names``."""
        names = set(names)
        unknown = names - set(self.groups)
        if unknown:
            raise ParamStoreError(f"unknown groups {sorted(unknown)}")
        self.frozen = set(self.groups) - names

    def is_frozen(self, group: str) -> bool:
        return group in self.frozen

    # -- tape access ---------------------------------------------------------
    def tensor(self, group: str, name: str) -> ad.Tensor:
        """Wrap one array as a fresh differentiable leaf for this graph."""
        return ad.param(f"{group}/{name}", self.groups[group][name])

    def value(self, group: str, name: str) -> np.ndarray:
        return self.groups[group][name]

    # -- canonical flat form -------------------------------------------------
    def flat(self, group: str) -> np.ndarray:
        arrays = self.groups[group]
        return np.concatenate([arrays[k].ravel() for k in sorted(arrays)]) if arrays else np.zeros(0)

    def set_flat(self, group: str, flat: np.ndarray):
        arrays = self.groups[group]
        expected = sum(a.size for a in arrays.values())
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != expected:
            raise ParamStoreError(
                f"group '{group}' expects {expected} entries, got {flat.size}"
            )
        offset = 0
        for k in sorted(arrays):
            n = arrays[k].size
            arrays[k][...] = flat[offset:offset + n].reshape(arrays[k].shape)
            offset += n

    def shapes(self) -> dict:
        return {g: {k: list(v.shape) for k, v in sorted(arrs.items())} for g, arrs in self.groups.items()}

    def hash_group(self, group: str) -> str:
        h = hashlib.sha256()
        arrays = self.groups[group]
        for k in sorted(arrays):
            h.update(k.encode())
            h.update(np.ascontiguousarray(arrays[k]).tobytes())
        return h.hexdigest()

    def hash_groups(self, names=None) -> dict:
        names = sorted(self.groups) if names is None else list(names)
        return {n: self.hash_group(n) for n in names}

    def clone(self) -> "ParamStore":
        out = ParamStore()
        for g, arrays in self.groups.items():
            out.add_group(g, arrays)
        out.frozen = set(self.frozen)
        return out

    # -- serialization -------------------------------------------------------
    def to_bytes(self) -> bytes:
        chunks = [MAGIC, struct.pack("<I", len(self.groups))]
        for g in sorted(self.groups):
            flat = self.flat(g)
            name = g.encode("utf-8")
            chunks.append(struct.pack("<I", len(name)))
            chunks.append(name)
            chunks.append(struct.pack("<Q", flat.size))
            chunks.append(flat.astype("<f8").tobytes())
        return b"".join(chunks)

    def save(self, path):
        with open(path, "wb") as f:
            f.write(self.to_bytes())

    @staticmethod
    def read_flat(path) -> dict[str, np.ndarray]:
        """Read the container into {group: flat vector}."""
        with open(path, "rb") as f:
            data = f.read()
        if data[: len(MAGIC)] != MAGIC:
            raise ParamStoreError(f"bad magic in '{path}'")
        offset = len(MAGIC)
        (count,) = struct.unpack_from("<I", data, offset)
        offset += 4
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", data, offset)
            offset += 4
            name = data[offset:offset + nlen].decode("utf-8")
            offset += nlen
            (size,) = struct.unpack_from("<Q", data, offset)
            offset += 8
            vec = np.frombuffer(data, dtype="<f8", count=size, offset=offset).copy()
            offset += 8 * size
            out[name] = vec
        if offset != len(data):
            raise ParamStoreError(f"trailing bytes in '{path}'")
        return out

    @classmethod
    def load(cls, path, shapes: dict) -> "ParamStore":
        """Rebuild a store from a container plus a {group: {name: shape}} map."""
        flats = cls.read_flat(path)
        store = cls()
        for group, arr_shapes in shapes.items():
            if group not in flats:
                raise ParamStoreError(f"group '{group}' missing from '{path}'")
            arrays = {}
            offset = 0
            flat = flats[group]
            for k in sorted(arr_shapes):
                shape = tuple(arr_shapes[k])
                n = int(np.prod(shape)) if shape else 1
                arrays[k] = flat[offset:offset + n].reshape(shape)
                offset += n
            if offset != flat.size:
                raise ParamStoreError(f"group '{group}' size mismatch loading '{path}'")
            store.add_group(group, arrays)
        return store
