import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from opaque_emu import SyntheticProtocolSpec, generate_synthetic, load_library, save_library, worked_example_library
from opaque_emu.evaluate import DirectoryBinaryChecker, DirectoryTextChecker
from opaque_emu.model import Label, Transaction, TransactionLibrary
from opaque_emu.traces import TraceFormatError, dumps_library, loads_library

TEXT_REQUEST = re.compile(rb"^\{id:\d+,op:[SAMD](,[A-Za-z]+:[^,{}]*)+\}$")


def test_worked_example_round_trip(tmp_path):
    lib = worked_example_library()
    save_library(lib, tmp_path / "t.jsonl")
    back = load_library(tmp_path / "t.jsonl")
    assert back == lib and len(back) == 8
    assert {t.label.op_type for t in back} == {"S", "A"}


def test_synthetic_round_trip(tmp_path, text_lib):
    save_library(text_lib, tmp_path / "lib.jsonl")
    assert load_library(tmp_path / "lib.jsonl") == text_lib


def test_zero_bytes_survive(tmp_path):
    lib = TransactionLibrary((Transaction(0, b"\x00\x00a", b"\x00"),))
    save_library(lib, tmp_path / "z.jsonl")
    assert load_library(tmp_path / "z.jsonl").transactions[0].request == b"\x00\x00a"


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.binary(max_size=40), st.binary(max_size=40)), min_size=1, max_size=8))
def test_byte_transparency(pairs):
    lib = TransactionLibrary(tuple(Transaction(i, a, b) for i, (a, b) in enumerate(pairs)))
    assert loads_library(dumps_library(lib)) == lib


def test_all_octets():
    payload = bytes(range(256))
    lib = TransactionLibrary((Transaction(0, payload, payload[::-1], Label("X", ((0, 3),))),))
    assert loads_library(dumps_library(lib)) == lib


def test_overwrite_protection(tmp_path):
    path = tmp_path / "t.jsonl"
    save_library(worked_example_library(), path)
    with pytest.raises(FileExistsError):
        save_library(worked_example_library(), path, overwrite=False)


@pytest.mark.parametrize("text, line", [
    ("", None),
    ('{"format": "opaque-trace", "version": 1}\n', None),
    ('{"format": "other", "version": 1}\n', 1),
    ('{"format": "opaque-trace", "version": 2}\n', 1),
    ('{"format": "opaque-trace", "version": 1}\n{"index": 0, "request": "!!", "response": ""}\n', 2),
    ('{"format": "opaque-trace", "version": 1}\n{"index": -1, "request": "", "response": ""}\n', 2),
    ('{"format": "opaque-trace", "version": 1}\nnot json\n', 2),
    ('{"format": "opaque-trace", "version": 1}\n{"index": 0, "request": "", "response": ""}\n'
     '{"index": 0, "request": "", "response": ""}\n', 3),
    ('{"format": "opaque-trace", "version": 1}\n'
     '{"index": 0, "request": "", "response": "YQ==", "critical_fields": [{"offset": 0, "length": 5}]}\n', 2),
])
def test_format_errors(text, line):
    with pytest.raises(TraceFormatError) as exc:
        loads_library(text)
    assert exc.value.line == line


def test_empty_file_message():
    with pytest.raises(TraceFormatError, match="empty library"):
        loads_library("\n\n")


def test_synthetic_is_deterministic():
    spec = SyntheticProtocolSpec(count=50, seed=12)
    assert dumps_library(generate_synthetic(spec)) == dumps_library(generate_synthetic(spec))
    assert dumps_library(generate_synthetic(spec)) != dumps_library(
        generate_synthetic(SyntheticProtocolSpec(count=50, seed=13)))


def test_count_one():
    assert len(generate_synthetic(SyntheticProtocolSpec(count=1))) == 1


def test_spec_validation():
    for bad in ({"count": 0}, {"ops": ()}, {"ops": ("Q",)}, {"variant": "xml"}):
        with pytest.raises(ValueError):
            SyntheticProtocolSpec(**bad)


def test_two_op_library_looks_like_the_worked_example():
    lib = generate_synthetic(SyntheticProtocolSpec(ops=("S", "A"), count=8, seed=2))
    example = worked_example_library()
    for t in list(lib) + list(example):
        assert TEXT_REQUEST.match(t.request), t.request
        assert DirectoryTextChecker().well_formed(t.response)
    assert {t.label.op_type for t in lib} <= {"S", "A"}


@pytest.mark.parametrize("variant, checker", [("text", DirectoryTextChecker()), ("binary", DirectoryBinaryChecker())])
def test_labels_are_derivable_from_bytes(variant, checker):
    lib = generate_synthetic(SyntheticProtocolSpec(count=300, seed=5, variant=variant))
    for t in lib:
        assert checker.well_formed(t.response)
        assert checker.op_type(t.response) == t.label.op_type
        for off, n in t.label.critical_fields:
            assert t.response[off:off + n] == t.request[off:off + n]


def test_unique_ids_in_text_variant(text_lib):
    ids = [t.request.split(b",")[0] for t in text_lib]
    assert len(set(ids)) == len(ids)
