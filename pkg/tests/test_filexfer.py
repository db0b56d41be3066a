import random

import pytest
from hypothesis import given, settings, strategies as st

from molsync.protocol import FileChunk, FileError, Reassembly, chunk_file, digest_of, reassemble
from molsync.protocol.filexfer import DIGEST_MISMATCH, MISSING_CHUNKS, UNKNOWN_FILE_ID


def test_one_mebibyte_makes_64_chunks_and_survives_shuffle():
    rng = random.Random(7)
    data = rng.randbytes(1 << 20)
    manifest, chunks = chunk_file(data, chunk_size=16384, rng=rng)
    assert manifest.chunk_count == 64
    assert len(chunks) == 64
    assert manifest.total_bytes == 1 << 20
    shuffled = list(chunks)
    rng.shuffle(shuffled)
    out = reassemble(manifest, shuffled)
    assert out == data
    assert digest_of(out) == manifest.digest


def test_duplicates_are_ignored():
    rng = random.Random(8)
    data = rng.randbytes(100_000)
    manifest, chunks = chunk_file(data, chunk_size=16384, rng=rng)
    doubled = chunks + chunks[::2]
    rng.shuffle(doubled)
    assert reassemble(manifest, doubled) == data


def test_empty_file():
    manifest, chunks = chunk_file(b"", rng=random.Random(1))
    assert manifest.chunk_count == 0
    assert chunks == []
    assert reassemble(manifest, []) == b""


def test_missing_chunk_reported_by_index():
    rng = random.Random(9)
    data = rng.randbytes(1 << 20)
    manifest, chunks = chunk_file(data, chunk_size=16384, rng=rng)
    del chunks[5]
    with pytest.raises(FileError) as err:
        reassemble(manifest, chunks)
    assert err.value.code == MISSING_CHUNKS
    assert err.value.missing == [5]


def test_corrupted_chunk_fails_digest():
    rng = random.Random(10)
    data = rng.randbytes(50_000)
    manifest, chunks = chunk_file(data, chunk_size=16384, rng=rng)
    bad = FileChunk(
        file_id=chunks[2].file_id,
        index=2,
        data=bytes([chunks[2].data[0] ^ 0xFF]) + chunks[2].data[1:],
    )
    chunks[2] = bad
    with pytest.raises(FileError) as err:
        reassemble(manifest, chunks)
    assert err.value.code == DIGEST_MISMATCH


def test_chunk_for_another_transfer_is_rejected():
    rng = random.Random(11)
    manifest, chunks = chunk_file(b"payload", rng=rng)
    alien = FileChunk(file_id="Z" * 16, index=0, data=b"payload")
    with pytest.raises(FileError) as err:
        reassemble(manifest, chunks + [alien])
    assert err.value.code == UNKNOWN_FILE_ID


def test_chunk_index_beyond_count_is_rejected():
    manifest, chunks = chunk_file(b"payload", rng=random.Random(12))
    stray = FileChunk(file_id=manifest.file_id, index=9, data=b"x")
    with pytest.raises(FileError) as err:
        reassemble(manifest, chunks + [stray])
    assert err.value.code == UNKNOWN_FILE_ID


def test_incremental_reassembly_tracks_progress():
    rng = random.Random(13)
    data = rng.randbytes(40_000)
    manifest, chunks = chunk_file(data, chunk_size=16384, rng=rng)
    asm = Reassembly(manifest)
    assert not asm.complete
    asm.add(chunks[2])
    assert asm.missing() == [0, 1]
    asm.add(chunks[0])
    asm.add(chunks[1])
    assert asm.complete
    assert asm.finish() == data


def test_chunk_size_must_be_positive():
    with pytest.raises(ValueError):
        chunk_file(b"data", chunk_size=0)


@given(
    size=st.integers(min_value=0, max_value=1 << 16),
    chunk_size=st.integers(min_value=1, max_value=5000),
    seed=st.integers(min_value=0, max_value=2**32 - 1),
)
@settings(max_examples=60, deadline=None)
def test_chunk_then_reassemble_is_identity(size, chunk_size, seed):
    rng = random.Random(seed)
    data = rng.randbytes(size)
    manifest, chunks = chunk_file(data, chunk_size=chunk_size, rng=rng)
    assert manifest.chunk_count == -(-size // chunk_size)
    order = list(chunks)
    rng.shuffle(order)
    assert reassemble(manifest, order) == data


def test_identity_across_sizes_up_to_4mib_boundary_cases():
    rng = random.Random(99)
    for size in (0, 1, 16383, 16384, 16385, 1 << 20, (1 << 22) - 1, 1 << 22):
        data = rng.randbytes(size)
        manifest, chunks = chunk_file(data, rng=rng)
        rng.shuffle(chunks)
        assert reassemble(manifest, chunks) == data
