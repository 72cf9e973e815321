"""Single-file named-tensor store.

Layout::

    b"NEOEEGWC" | u64 manifest length | manifest (UTF-8 JSON, space padded) | blob

The manifest section is padded so the blob starts on an 8-byte boundary and
every tensor offset inside the blob is a multiple of 8. Tensors are stored
little-endian, row-major, as float32.
"""

import hashlib
import json
import logging
import struct
from pathlib import Path
from types import MappingProxyType
from typing import Any, Dict, Mapping, Optional, Union

import numpy as np

from ..exceptions import StorageError, WeightContainerError

logger = logging.getLogger(__name__)

MAGIC = b"NEOEEGWC"
LENGTH = struct.Struct("<Q")
ALIGNMENT = 8
FORMAT_VERSION = 1
DTYPE = "<f4"


def _aligned(n: int) -> int:
    return -(-n // ALIGNMENT) * ALIGNMENT


class WeightContainer:
    def __init__(
        self,
        tensors: Mapping[str, np.ndarray],
        model_config: Optional[Mapping[str, Any]] = None,
        kind: str = "cnn-gat",
        metadata: Optional[Mapping[str, Any]] = None,
    ):
        frozen = {}
        for name, value in tensors.items():
            array = np.array(value, dtype=DTYPE, copy=True)
            array.flags.writeable = False
            frozen[name] = array
        self.tensors: Mapping[str, np.ndarray] = MappingProxyType(frozen)
        self.model_config = MappingProxyType(dict(model_config or {}))
        self.kind = kind
        self.metadata = MappingProxyType(dict(metadata or {}))
        self._blob = self._build_blob()

    def __contains__(self, name: str) -> bool:
        return name in self.tensors

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.tensors[name]
        except KeyError:
            raise WeightContainerError(f"container has no tensor named {name!r}") from None

    def _build_blob(self):
        directory = []
        chunks = []
        offset = 0
        for name in sorted(self.tensors):
            raw = self.tensors[name].tobytes()
            padded = raw + b"\0" * (_aligned(len(raw)) - len(raw))
            directory.append(
                {
                    "name": name,
                    "shape": list(self.tensors[name].shape),
                    "dtype": "float32",
                    "offset": offset,
                    "nbytes": len(raw),
                }
            )
            chunks.append(padded)
            offset += len(padded)
        self._directory = directory
        return b"".join(chunks)

    @property
    def checksum(self) -> str:
        return hashlib.sha256(self._blob).hexdigest()

    @property
    def adjacency_hash(self) -> Optional[str]:
        return self.metadata.get("adjacency_sha256")

    def manifest(self) -> Dict[str, Any]:
        return {
            "format": FORMAT_VERSION,
            "kind": self.kind,
            "model_config": dict(self.model_config),
            "metadata": dict(self.metadata),
            "tensors": self._directory,
            "blob_bytes": len(self._blob),
            "blob_sha256": self.checksum,
        }

    def to_bytes(self) -> bytes:
        manifest = json.dumps(self.manifest(), sort_keys=True).encode()
        header_len = len(MAGIC) + LENGTH.size
        padded = manifest + b" " * (_aligned(header_len + len(manifest)) - header_len - len(manifest))
        return MAGIC + LENGTH.pack(len(padded)) + padded + self._blob

    def write(self, path: Union[str, Path]) -> None:
        try:
            Path(path).write_bytes(self.to_bytes())
        except OSError as exc:
            raise StorageError(f"cannot write container {path}: {exc}") from exc
        logger.info("wrote %s container with %d tensors to %s", self.kind, len(self.tensors), path)

    @classmethod
    def from_bytes(cls, raw: bytes, source: str = "<bytes>") -> "WeightContainer":
        if raw[: len(MAGIC)] != MAGIC:
            raise WeightContainerError(f"{source}: not a weight container")
        (manifest_len,) = LENGTH.unpack_from(raw, len(MAGIC))
        start = len(MAGIC) + LENGTH.size
        try:
            manifest = json.loads(raw[start : start + manifest_len].decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise WeightContainerError(f"{source}: unreadable manifest: {exc}") from exc
        if manifest.get("format") != FORMAT_VERSION:
            raise WeightContainerError(f"{source}: unsupported format {manifest.get('format')}")

        blob = raw[start + manifest_len :]
        if len(blob) != manifest["blob_bytes"]:
            raise WeightContainerError(
                f"{source}: blob holds {len(blob)} bytes, manifest declares {manifest['blob_bytes']}"
            )
        if hashlib.sha256(blob).hexdigest() != manifest["blob_sha256"]:
            raise WeightContainerError(f"{source}: blob checksum mismatch")

        tensors = {}
        for entry in manifest["tensors"]:
            if entry["offset"] % ALIGNMENT:
                raise WeightContainerError(f"{source}: tensor {entry['name']} is misaligned")
            count = int(np.prod(entry["shape"], dtype=np.int64))
            tensors[entry["name"]] = np.frombuffer(
                blob, dtype=DTYPE, count=count, offset=entry["offset"]
            ).reshape(entry["shape"])

        return cls(
            tensors,
            model_config=manifest["model_config"],
            kind=manifest["kind"],
            metadata=manifest.get("metadata", {}),
        )

    @classmethod
    def read(cls, path: Union[str, Path]) -> "WeightContainer":
        try:
            raw = Path(path).read_bytes()
        except OSError as exc:
            raise StorageError(f"cannot read container {path}: {exc}") from exc
        return cls.from_bytes(raw, source=str(path))

    def expect_kind(self, kind: str) -> None:
        if self.kind != kind:
            raise WeightContainerError(f"expected a {kind!r} container, got {self.kind!r}")

    def check_shapes(self, expected: Mapping[str, tuple]) -> None:
        for name, shape in expected.items():
            if name not in self.tensors:
                raise WeightContainerError(f"missing tensor {name!r}")
            if tuple(self.tensors[name].shape) != tuple(shape):
                raise WeightContainerError(
                    f"tensor {name!r} has shape {tuple(self.tensors[name].shape)}, "
                    f"architecture expects {tuple(shape)}"
                )
