#!/usr/bin/env python3
"""Regenerate tests/data/golden_encodings.bin (run once, commit the output)."""

import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "tests"))

from vpki.codec import Writer
from test_codec import _sample_structures

out = os.path.join(os.path.dirname(__file__), "..", "tests", "data", "golden_encodings.bin")
with open(out, "wb") as f:
    f.write(b"".join(Writer().bytes_(x.to_bytes()).take() for x in _sample_structures()))
print(f"wrote {out}")
