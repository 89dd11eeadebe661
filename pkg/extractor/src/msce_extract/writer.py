"""MSCE v1 writer.

The container carries N samples x V views x D dims of float32 features
plus an optional integer label per sample. Little-endian: magic "MSCE",
version u32=1, dim u32, views u16, flags u16 (bit 0 = labels present),
count u64, then per sample a label i32 (-1 when absent) followed by
views*dim float32. This module is an independent implementation of the
wire format; the discovery engine's reader is the validator of record.
"""

import os
import struct
import tempfile

import numpy as np

MAGIC = b"MSCE"
VERSION = 1
_HEADER = struct.Struct("<4sIIHHQ")


class MsceWriter:
    """Streams records into a temporary file and atomically renames it
    into place on close, so partially written outputs never appear."""

    def __init__(self, path, dim, views, labelled=True):
        if dim < 1 or views < 1:
            raise ValueError(f"bad geometry dim={dim} views={views}")
        self.path = str(path)
        self.dim = dim
        self.views = views
        self.labelled = labelled
        self.count = 0
        directory = os.path.dirname(self.path) or "."
        fd, self._tmp = tempfile.mkstemp(dir=directory, suffix=".msce.part")
        self._fh = os.fdopen(fd, "wb")
        self._fh.write(_HEADER.pack(MAGIC, VERSION, dim, views,
                                    1 if labelled else 0, 0))

    def add(self, features, label=-1):
        """Append one sample; `features` is (views, dim) float-like."""
        feats = np.ascontiguousarray(features, dtype="<f4")
        if feats.shape != (self.views, self.dim):
            raise ValueError(
                f"features shape {feats.shape} != ({self.views}, {self.dim})")
        if not np.all(np.isfinite(feats)):
            raise ValueError("non-finite features")
        self._fh.write(struct.pack("<i", int(label)))
        self._fh.write(feats.tobytes())
        self.count += 1

    def close(self):
        # Patch the sample count into the header, then publish the file.
        self._fh.seek(0)
        self._fh.write(_HEADER.pack(MAGIC, VERSION, self.dim, self.views,
                                    1 if self.labelled else 0, self.count))
        self._fh.close()
        os.replace(self._tmp, self.path)

    def abort(self):
        self._fh.close()
        os.unlink(self._tmp)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self.abort()
