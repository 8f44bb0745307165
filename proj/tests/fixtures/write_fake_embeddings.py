#!/usr/bin/env python3
"""Regenerates the checked-in fake text-embedding fixtures (CHEM format).

Layout: b"CHEM", u32 version=1, u32 C, u32 D, C*D little-endian f32,
then a UTF-8 JSON array of class names.
"""
import json
import pathlib
import struct

import numpy as np

HERE = pathlib.Path(__file__).resolve().parent


def write(path, names, dim, seed):
    rng = np.random.default_rng(seed)
    matrix = rng.standard_normal((len(names), dim)).astype("<f4")
    with open(path, "wb") as f:
        f.write(b"CHEM")
        f.write(struct.pack("<III", 1, len(names), dim))
        f.write(matrix.tobytes(order="C"))
        f.write(json.dumps(names).encode("utf-8"))


if __name__ == "__main__":
    write(HERE / "fake_c8_d32.chem", [f"glyph_class_{i}" for i in range(8)], 32, 7)
    write(HERE / "fake_c4_d16.chem", [f"glyph_class_{i}" for i in range(4)], 16, 11)
    write(HERE / "fake_c3_d8.chem", ["cardinal", "blue jay", "house sparrow"], 8, 7)
