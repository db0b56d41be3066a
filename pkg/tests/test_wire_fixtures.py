"""The committed wire fixtures are the contract shared with the frontend:
both codecs must agree with them byte for byte (encode) and field for
field (decode)."""
import json
from pathlib import Path

import pytest

from molsync.protocol import DecodeError, decode_envelope, encode_envelope

FIXTURES = json.loads(
    (Path(__file__).parent / "fixtures" / "envelopes.json").read_text(encoding="utf-8")
)


@pytest.mark.parametrize(
    "frame", FIXTURES["frames"], ids=[f["kind"] for f in FIXTURES["frames"]]
)
def test_fixture_frames_decode_and_reencode_exactly(frame):
    e = decode_envelope(frame["wire"].encode("utf-8"))
    assert e.kind == frame["kind"]
    assert encode_envelope(e).decode("utf-8") == frame["wire"]
    assert json.loads(frame["wire"]) == frame["expect"]


@pytest.mark.parametrize(
    "case", FIXTURES["invalid"], ids=[c["code"] for c in FIXTURES["invalid"]]
)
def test_fixture_invalid_frames_yield_the_pinned_code(case):
    with pytest.raises(DecodeError) as err:
        decode_envelope(case["wire"].encode("utf-8"))
    assert err.value.code == case["code"]
