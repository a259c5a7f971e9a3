"""Bit-exact memory images: ``.mem`` hex files, sidecar JSON and C arrays.

Layout (all hex uppercase, most significant digit first, one word per line):

``weights.mem``
    16 lines per tile, line ``i`` = presynaptic slot ``i``; a 128-bit word whose
    most significant byte is post slot 15 and least significant byte post slot 0
    (two's complement int8).
``indices.mem``
    one 32-bit word per tile: ``tile_idx_x`` in bits [31:16], ``tile_idx_y`` in [15:0].
``membranes.mem``
    one 128-bit word of initial membranes per distinct ``tile_idx_y``, same byte
    order as weights. Always zero.
``meta.json``
    tile count, neuron count, output tile ids, scale, threshold_q, I/O neuron ids.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .compiler import HORIZON_CAP, TileProgram
from .errors import CompileError, ParseError
from .network import TILE

WEIGHTS_FILE = "weights.mem"
INDICES_FILE = "indices.mem"
MEMBRANES_FILE = "membranes.mem"
META_FILE = "meta.json"
IMAGE_FORMAT = "snntile-image"
IMAGE_VERSION = 1

_HEX = re.compile(r"^[0-9A-Fa-f]+$")


@dataclass(frozen=True, eq=False)
class MemoryImage:
    weight_bytes: bytes     # 256 bytes per tile, text order
    index_bytes: bytes      # 4 bytes per tile, big-endian
    membrane_bytes: bytes   # 16 bytes per membrane row, text order
    meta: dict

    @property
    def tile_count(self) -> int:
        return self.meta["tile_count"]

    def __eq__(self, other):
        if not isinstance(other, MemoryImage):
            return NotImplemented
        return (self.weight_bytes == other.weight_bytes and self.index_bytes == other.index_bytes
                and self.membrane_bytes == other.membrane_bytes and self.meta == other.meta)

    __hash__ = None

    # -- program <-> image ---------------------------------------------------

    @classmethod
    def from_program(cls, p: TileProgram) -> "MemoryImage":
        if len(p) and (p.tile_x.max() >= 1 << 16 or p.tile_y.max() >= 1 << 16):
            raise CompileError("tile index >= 2**16 does not fit the index word")
        # reverse slots so post slot 15 lands in the most significant (first) byte
        weight_bytes = p.weights[:, :, ::-1].astype(np.int8).tobytes()
        words = ((p.tile_x.astype(np.uint32) << 16) | p.tile_y.astype(np.uint32)).astype(">u4")
        rows = p.distinct_rows()
        meta = {
            "format": IMAGE_FORMAT,
            "version": IMAGE_VERSION,
            "tile_count": len(p),
            "neuron_count": p.neuron_count,
            "output_tile_ids": list(p.output_tile_ids),
            "scale": p.scale,
            "threshold_q": p.threshold_q,
            "input_ids": list(p.input_ids),
            "output_ids": list(p.output_ids),
            "membrane_rows": rows,
            "horizon_cap": p.horizon_cap,
        }
        return cls(weight_bytes, words.tobytes(), bytes(TILE * len(rows)), meta)

    def to_program(self) -> TileProgram:
        k = self.meta["tile_count"]
        w = np.frombuffer(self.weight_bytes, dtype=np.int8).reshape(k, TILE, TILE)[:, :, ::-1]
        words = np.frombuffer(self.index_bytes, dtype=">u4").astype(np.int64)
        return TileProgram(words >> 16, words & 0xFFFF, w.copy(), self.meta["neuron_count"],
                           tuple(self.meta["output_tile_ids"]), int(self.meta["threshold_q"]),
                           float(self.meta["scale"]), tuple(self.meta.get("input_ids", ())),
                           tuple(self.meta.get("output_ids", ())), int(self.meta.get("horizon_cap", HORIZON_CAP)))

    def initial_membranes(self, n_rows: int) -> np.ndarray:
        """``(n_rows, 16)`` int8 membranes; rows absent from the image start at zero."""
        out = np.zeros((n_rows, TILE), dtype=np.int8)
        data = np.frombuffer(self.membrane_bytes, dtype=np.int8).reshape(-1, TILE)[:, ::-1]
        for row, vals in zip(self.meta.get("membrane_rows", []), data):
            out[row] = vals
        return out

    # -- text rendering ------------------------------------------------------

    def render(self) -> dict[str, str]:
        return {
            WEIGHTS_FILE: _lines(self.weight_bytes, 16),
            INDICES_FILE: _lines(self.index_bytes, 4),
            MEMBRANES_FILE: _lines(self.membrane_bytes, 16),
            META_FILE: json.dumps(self.meta, indent=2) + "\n",
        }

    def write(self, out_dir) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for name, text in self.render().items():
            (out / name).write_text(text)
        return out

    @classmethod
    def read(cls, image_dir) -> "MemoryImage":
        d = Path(image_dir)
        meta_path = d / META_FILE
        try:
            meta = json.loads(meta_path.read_text())
        except FileNotFoundError:
            raise ParseError("missing metadata", path=meta_path) from None
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc), path=meta_path) from None
        if meta.get("format") != IMAGE_FORMAT or meta.get("version") != IMAGE_VERSION:
            raise ParseError("not a supported snntile image header", path=meta_path)
        weight_bytes = _parse_lines(d / WEIGHTS_FILE, 32)
        index_bytes = _parse_lines(d / INDICES_FILE, 8)
        membrane_bytes = _parse_lines(d / MEMBRANES_FILE, 32)

        n_weight_lines = len(weight_bytes) // 16
        if n_weight_lines % TILE:
            raise ParseError(f"{n_weight_lines} lines is not a multiple of {TILE}",
                             path=d / WEIGHTS_FILE, line=n_weight_lines)
        tiles = n_weight_lines // TILE
        if len(index_bytes) // 4 != tiles:
            raise ParseError(f"{len(index_bytes) // 4} index words but {tiles} weight tiles",
                             path=d / INDICES_FILE)
        if meta.get("tile_count") != tiles:
            raise ParseError(f"header says {meta.get('tile_count')} tiles, files hold {tiles}", path=meta_path)
        if len(membrane_bytes) // 16 != len(meta.get("membrane_rows", [])):
            raise ParseError("membrane row count disagrees with header", path=d / MEMBRANES_FILE)
        return cls(weight_bytes, index_bytes, membrane_bytes, meta)


def _lines(data: bytes, width: int) -> str:
    return "".join(data[i:i + width].hex().upper() + "\n" for i in range(0, len(data), width))


def _parse_lines(path: Path, hex_chars: int) -> bytes:
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ParseError("file not found", path=path) from None
    out = bytearray()
    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            raise ParseError("empty line", path=path, line=n)
        if len(line) != hex_chars:
            raise ParseError(f"expected {hex_chars} hex digits, got {len(line)}", path=path, line=n)
        if not _HEX.match(line):
            raise ParseError("malformed hex", path=path, line=n)
        out += bytes.fromhex(line)
    return bytes(out)


def emit_mem(p: TileProgram, out_dir) -> MemoryImage:
    """Write the ``.mem`` trio plus ``meta.json`` into ``out_dir``."""
    image = MemoryImage.from_program(p)
    image.write(out_dir)
    return image


def parse_mem(image_dir) -> TileProgram:
    return MemoryImage.read(image_dir).to_program()


def _c_bytes(name: str, macro: str, data: bytes) -> str:
    body = ",\n".join(
        "    " + ", ".join(f"0x{b:02X}" for b in data[i:i + 16]) for i in range(0, len(data), 16)
    )
    inner = f"\n{body}\n" if data else ""
    return f"static const uint8_t {name}[{macro}] = {{{inner}}};\n"


def emit_c_array(p: TileProgram, prefix: str = "snn") -> str:
    """C translation unit holding the same bytes as the ``.mem`` files."""
    image = MemoryImage.from_program(p)
    up = prefix.upper()
    out = [
        "/* Generated by snntile. Do not edit. */\n",
        "#include <stdint.h>\n\n",
        f"#define {up}_TILE_COUNT {len(p)}\n",
        f"#define {up}_NEURON_COUNT {p.neuron_count}\n",
        f"#define {up}_THRESHOLD {p.threshold_q}\n",
        f"#define {up}_OUTPUT_TILE_COUNT {len(p.output_tile_ids)}\n",
        f"#define {up}_WEIGHT_BYTES {len(image.weight_bytes)}\n",
        f"#define {up}_INDEX_BYTES {len(image.index_bytes)}\n",
        f"#define {up}_MEMBRANE_BYTES {len(image.membrane_bytes)}\n\n",
        _c_bytes(f"{prefix}_weights", f"{up}_WEIGHT_BYTES", image.weight_bytes),
        _c_bytes(f"{prefix}_indices", f"{up}_INDEX_BYTES", image.index_bytes),
        _c_bytes(f"{prefix}_membranes", f"{up}_MEMBRANE_BYTES", image.membrane_bytes),
    ]
    return "".join(out)


def c_array_payload(text: str, name: str) -> bytes:
    """Extract the byte payload of array ``name`` from :func:`emit_c_array` output."""
    m = re.search(rf"{re.escape(name)}\[[A-Z_]+\] = \{{(.*?)\}};", text, re.S)
    if m is None:
        raise ParseError(f"array {name} not found")
    return bytes(int(tok, 16) for tok in re.findall(r"0x([0-9A-F]{2})", m.group(1)))
