"""Writer for the ZRLE relation-embedding container.

Layout (little-endian): magic "ZRLE", u32 version=1, u32 d_w,
u32 n_relations, then per relation u32 relation_id, u32 n_tokens and
n_tokens*d_w float32 values. Entries are sorted by relation id so equal
inputs produce byte-identical files.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .records import ErdRecord, ExtractionError

MAGIC = b"ZRLE"
VERSION = 1


def encode_and_write(records: list[ErdRecord], encoder, out_path: str,
                     meta: dict | None = None) -> None:
    """Encode every record's enriched description and write the container
    plus the sidecar JSON (texts, ERDs, and provenance metadata)."""
    if not records:
        raise ExtractionError("nothing to encode")
    matrices: dict[int, np.ndarray] = {}
    for record in records:
        matrix = np.ascontiguousarray(encoder.encode(record.erd), dtype=np.float32)
        if matrix.ndim != 2 or matrix.shape[1] != encoder.d_w:
            raise ExtractionError(
                f"relation {record.relation_id}: encoder produced shape "
                f"{matrix.shape}, expected (*, {encoder.d_w})")
        if record.relation_id in matrices:
            raise ExtractionError(f"duplicate relation id {record.relation_id}")
        matrices[record.relation_id] = matrix
    with open(out_path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, encoder.d_w, len(matrices)))
        for rid in sorted(matrices):
            matrix = matrices[rid]
            fh.write(struct.pack("<II", rid, matrix.shape[0]))
            fh.write(matrix.tobytes())
    sidecar: dict = {str(r.relation_id): {"text": r.text, "erd": r.erd}
                     for r in records}
    if meta:
        sidecar["_meta"] = meta
    with open(out_path + ".json", "w", encoding="utf-8", newline="\n") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True, ensure_ascii=False)
        fh.write("\n")
