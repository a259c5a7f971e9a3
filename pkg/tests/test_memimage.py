import json
import shutil
import subprocess

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_program
from snntile.compiler import TileProgram, compile_network
from snntile.errors import CompileError, ParseError
from snntile.memimage import MemoryImage, c_array_payload, emit_c_array, emit_mem, parse_mem
from snntile.network import NetworkGraph
from snntile.parity import build_parity_network


def one_tile_program():
    w = np.zeros((1, 16, 16), dtype=np.int8)
    w[0, 0, 15] = 0x12
    w[0, 0, 0] = -1
    w[0, 3, 7] = -128 + 1
    return TileProgram([0x0203], [0x0405], w, 16 * 0x0406, (0x0405,), 9, 2.5, (0,), (16 * 0x0405,))


def test_weight_and_index_line_layout(tmp_path):
    emit_mem(one_tile_program(), tmp_path)
    lines = (tmp_path / "weights.mem").read_text().splitlines()
    assert len(lines) == 16 and all(len(l) == 32 for l in lines)
    # line 0 = pre slot 0; post slot 15 is the first (most significant) byte
    assert lines[0] == "12" + "00" * 14 + "FF"
    assert lines[3] == "00" * 8 + "81" + "00" * 7
    assert lines[1] == "0" * 32
    assert (tmp_path / "indices.mem").read_text() == "02030405\n"
    assert (tmp_path / "membranes.mem").read_text() == "0" * 32 + "\n"


def test_parity_image_text(tmp_path):
    _, p = compile_network(build_parity_network())
    emit_mem(p, tmp_path)
    assert (tmp_path / "indices.mem").read_text().splitlines() == ["00000000", "00000001"]
    # two distinct tile rows -> two membrane lines
    assert len((tmp_path / "membranes.mem").read_text().splitlines()) == 2
    w = (tmp_path / "weights.mem").read_text().splitlines()
    assert len(w) == 32
    # tile (0,0), pre 1 -> post 2 weight +127 sits at byte 15-2 = 13 from the left
    assert w[1][26:28] == "7F"
    meta = json.loads((tmp_path / "meta.json").read_text())
    assert meta["tile_count"] == 2 and meta["threshold_q"] == 127 and meta["output_tile_ids"] == [1]


def test_text_is_uppercase_hex_without_prefix(tmp_path):
    rng = np.random.default_rng(0)
    emit_mem(random_program(rng), tmp_path)
    for name in ("weights.mem", "indices.mem", "membranes.mem"):
        text = (tmp_path / name).read_text()
        assert "0x" not in text and text == text.upper()


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_round_trip_property(tmp_path_factory, seed):
    p = random_program(np.random.default_rng(seed))
    d = tmp_path_factory.mktemp("img")
    emit_mem(p, d)
    assert parse_mem(d) == p
    assert MemoryImage.read(d) == MemoryImage.from_program(p)


def test_index_overflow_is_compile_error():
    p = TileProgram([1 << 16], [0], np.ones((1, 16, 16), dtype=np.int8), 16, (0,), 1, 1.0)
    with pytest.raises(CompileError):
        MemoryImage.from_program(p)


def corrupt(tmp_path, name, fn):
    _, p = compile_network(build_parity_network())
    emit_mem(p, tmp_path)
    path = tmp_path / name
    path.write_text(fn(path.read_text()))


@pytest.mark.parametrize("name,fn,match", [
    ("weights.mem", lambda t: t.replace(t.splitlines()[4], "ZZ" + t.splitlines()[4][2:], 1), "line 5"),
    ("weights.mem", lambda t: t.replace(t.splitlines()[2], t.splitlines()[2][:-1], 1), "line 3"),
    ("weights.mem", lambda t: "\n".join(t.splitlines()[:-1]) + "\n", "multiple of 16"),
    ("indices.mem", lambda t: t.splitlines()[0] + "\n", "index words"),
    ("membranes.mem", lambda t: "", "membrane"),
    ("meta.json", lambda t: t.replace('"tile_count": 2', '"tile_count": 3'), "header says"),
    ("meta.json", lambda t: "{", "meta.json"),
])
def test_parse_errors(tmp_path, name, fn, match):
    corrupt(tmp_path, name, fn)
    with pytest.raises(ParseError, match=match):
        parse_mem(tmp_path)


def test_missing_file(tmp_path):
    _, p = compile_network(build_parity_network())
    emit_mem(p, tmp_path)
    (tmp_path / "indices.mem").unlink()
    with pytest.raises(ParseError, match="indices.mem"):
        parse_mem(tmp_path)


def test_c_array_matches_mem_bytes():
    rng = np.random.default_rng(4)
    p = random_program(rng)
    text = emit_c_array(p, "net")
    img = MemoryImage.from_program(p)
    assert c_array_payload(text, "net_weights") == img.weight_bytes
    assert c_array_payload(text, "net_indices") == img.index_bytes
    assert c_array_payload(text, "net_membranes") == img.membrane_bytes
    assert f"#define NET_TILE_COUNT {len(p)}" in text


@pytest.mark.skipif(shutil.which("cc") is None, reason="no C compiler")
def test_c_array_compiles_and_matches(tmp_path):
    _, p = compile_network(build_parity_network())
    (tmp_path / "image.c").write_text(emit_c_array(p))
    (tmp_path / "main.c").write_text(
        '#include <stdio.h>\n#include "image.c"\n'
        "int main(void) {\n"
        "  for (int i = 0; i < SNN_WEIGHT_BYTES; i++) printf(\"%02X\", snn_weights[i]);\n"
        "  printf(\"\\n%d %d\\n\", SNN_TILE_COUNT, SNN_THRESHOLD);\n"
        "  return 0;\n}\n")
    subprocess.run(["cc", "-std=c99", "-Wall", "-Werror", "-o", str(tmp_path / "m"), str(tmp_path / "main.c")],
                   check=True, cwd=tmp_path)
    out = subprocess.run([str(tmp_path / "m")], capture_output=True, text=True, check=True).stdout.split()
    assert out[0] == MemoryImage.from_program(p).weight_bytes.hex().upper()
    assert out[1:] == ["2", "127"]


def test_empty_program_round_trips(tmp_path):
    p = TileProgram([], [], np.zeros((0, 16, 16)), 5, (0,), 3, 1.5, (0,), (4,))
    emit_mem(p, tmp_path)
    assert parse_mem(tmp_path) == p
    assert "= {};" in emit_c_array(p)


def test_network_roundtrip_through_image(tmp_path):
    net = NetworkGraph.from_edges(50, [(0, 49, 0.5), (49, 0, -1.0), (20, 20, 0.25)], [0], [49], 0.5)
    _, p = compile_network(net)
    emit_mem(p, tmp_path)
    assert parse_mem(tmp_path).as_network() == p.as_network()
