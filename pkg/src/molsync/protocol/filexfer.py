"""Chunked file transfer with end-to-end integrity.

A file becomes one manifest plus ceil(total/chunk_size) chunks. Chunks may
arrive in any order and duplicated; reassembly succeeds only when every
index is present and the SHA-256 of the joined bytes matches the manifest
digest. File content itself is opaque; nothing here looks inside it.
"""
from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass, field

from .ids import new_file_token
from .messages import DEFAULT_CHUNK_SIZE, FileChunk, FileManifest

MISSING_CHUNKS = "missing_chunks"
DIGEST_MISMATCH = "digest_mismatch"
UNKNOWN_FILE_ID = "unknown_file_id"


class FileError(ValueError):
    def __init__(self, code: str, message: str, missing: list[int] | None = None):
        super().__init__(f"{code}: {message}")
        self.code = code
        self.missing = missing or []


def digest_of(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def chunk_file(
    data: bytes,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    name: str = "",
    rng: random.Random | None = None,
) -> tuple[FileManifest, list[FileChunk]]:
    """Split *data* into a manifest and its chunks, in index order."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    file_id = new_file_token(rng if rng is not None else random.Random())
    count = -(-len(data) // chunk_size)
    manifest = FileManifest(
        file_id=file_id,
        name=name,
        total_bytes=len(data),
        chunk_size=chunk_size,
        chunk_count=count,
        digest=digest_of(data),
    )
    chunks = [
        FileChunk(file_id=file_id, index=i, data=data[i * chunk_size : (i + 1) * chunk_size])
        for i in range(count)
    ]
    return manifest, chunks


def reassemble(manifest: FileManifest, chunks: list[FileChunk]) -> bytes:
    """Rebuild the original bytes; duplicates ignored, any order accepted."""
    asm = Reassembly(manifest)
    for c in chunks:
        asm.add(c)
    return asm.finish()


@dataclass
class Reassembly:
    """Incremental receiver side of one transfer."""

    manifest: FileManifest
    parts: dict[int, bytes] = field(default_factory=dict)

    def add(self, chunk: FileChunk) -> None:
        if chunk.file_id != self.manifest.file_id:
            raise FileError(
                UNKNOWN_FILE_ID,
                f"chunk for {chunk.file_id} offered to transfer {self.manifest.file_id}",
            )
        if chunk.index >= self.manifest.chunk_count:
            raise FileError(
                UNKNOWN_FILE_ID,
                f"chunk index {chunk.index} outside 0..{self.manifest.chunk_count - 1}",
            )
        self.parts.setdefault(chunk.index, chunk.data)

    @property
    def complete(self) -> bool:
        return len(self.parts) == self.manifest.chunk_count

    def missing(self) -> list[int]:
        return [i for i in range(self.manifest.chunk_count) if i not in self.parts]

    def finish(self) -> bytes:
        gaps = self.missing()
        if gaps:
            raise FileError(MISSING_CHUNKS, f"missing chunk indices {gaps}", missing=gaps)
        data = b"".join(self.parts[i] for i in range(self.manifest.chunk_count))
        if len(data) != self.manifest.total_bytes:
            raise FileError(
                DIGEST_MISMATCH,
                f"reassembled {len(data)} bytes, manifest says {self.manifest.total_bytes}",
            )
        if digest_of(data) != self.manifest.digest:
            raise FileError(DIGEST_MISMATCH, "content hash does not match manifest digest")
        return data
