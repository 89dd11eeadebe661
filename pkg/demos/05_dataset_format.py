#!/usr/bin/env python3
"""The MSCE embedding container, byte by byte.

MSCE v1 is the wire format between feature extractors and this library:
little-endian, a 24-byte header (magic "MSCE", version, dim, views, flags,
count) followed by one record per sample (label i32, then views*dim
float32). Features are float32 on disk and widened to float64 in memory,
so a write->read round trip is bit-exact.
"""

import struct
import tempfile
from pathlib import Path

import numpy as np

from incd.data import make_blobs, read_embeddings, write_embeddings

dataset = make_blobs(n_classes=3, per_class=4, dim=5, views=2, seed=2)

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.msce"
    write_embeddings(dataset, path)
    raw = path.read_bytes()

    magic, version, dim, views, flags, count = struct.unpack_from("<4sIIHHQ", raw, 0)
    print(f"file size : {len(raw)} bytes")
    print(f"header    : magic={magic} version={version} dim={dim} "
          f"views={views} flags={flags:#x} count={count}")
    record = 4 + views * dim * 4
    print(f"record    : 4-byte label + {views}x{dim} float32 = {record} bytes")

    label0 = struct.unpack_from("<i", raw, 24)[0]
    feat0 = np.frombuffer(raw, dtype="<f4", count=dim, offset=28)
    print(f"sample 0  : label={label0} first view starts {np.round(feat0[:3], 3)}...")

    back = read_embeddings(path)
    print("round trip bit-exact:",
          np.array_equal(back.features, dataset.features)
          and np.array_equal(back.labels, dataset.labels))
