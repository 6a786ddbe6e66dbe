"""
Curating tuples from a portrait directory
=========================================

Each portrait comes with face and hair masks and 68 landmarks. Every
(identity, shape, appearance) triple is scored by the face-mask IoU and the
landmark pose distance between identity and shape reference, then sorted
into Easy, Medium and Difficult bands.

The directory used here is the small synthetic corpus under
``tests/data/corpus``: disk faces shifted sideways by a few pixels, with
landmarks shifted along with them, so every band is populated.
"""

import collections
import tempfile
from pathlib import Path

from hairtransfer.curation import (
    build_manifest,
    categorize,
    hair_fraction,
    list_portraits,
    read_manifest,
    write_manifest,
)
from hairtransfer.io import read_mask

data = Path(__file__).resolve().parent.parent / "tests" / "data" / "corpus"
for pid in list_portraits(data):
    print(pid, f"hair {hair_fraction(read_mask(data / f'{pid}_hair.png')):.1%}")

# p5 has too little hair and is dropped from every tuple.
records = build_manifest(data)
print(len(records), "tuples;", dict(collections.Counter(r.category for r in records)))

pairs = {(r.identity, r.shape): r for r in records}
for key in [("p0", "p1"), ("p0", "p2"), ("p0", "p3"), ("p0", "p4"), ("p1", "p2")]:
    r = pairs[key]
    print(f"{key[0]} vs {key[1]}: IoU {r.iou:.3f}, PD {r.pd:.2f} -> {r.category}")

# Both the IoU band and the PD band must hold. p1 vs p2 above has an Easy
# IoU but a Medium pose distance, so it is rejected.
print(categorize(0.85, 1.0), categorize(0.75, 3.0), categorize(0.85, 4.5))

# Manifests are JSON lines with paths relative to the data directory.
out = Path(tempfile.mkdtemp()) / "manifest.jsonl"
write_manifest(build_manifest(data, include_rejected=False), out)
print(len(read_manifest(out)), "tuples kept without rejects")
print(out.read_text().splitlines()[0][:120], "...")
