"""
Converting label images to the PGM track layout
===============================================

CTC ground truth ships as 16-bit TIFF label images.  The reader here only
takes PGM, so convert once with Pillow (or any image library) and copy the
track table alongside.  Run as::

    python label_images_to_pgm.py SRC_DIR DST_DIR

``SRC_DIR`` holds ``man_track.txt`` and ``man_track000.tif`` ...
"""

import shutil
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from celluq.io import read_ctc, write_pgm

src, dst = Path(sys.argv[1]), Path(sys.argv[2])
dst.mkdir(parents=True, exist_ok=True)
shutil.copy(src / "man_track.txt", dst / "man_track.txt")

for tif in sorted(src.glob("man_track*.tif")):
    labels = np.asarray(Image.open(tif)).astype(np.int64)
    # binary P5 keeps 16-bit labels compact
    write_pgm(dst / (tif.stem + ".pgm"), labels, binary=True)

seq = read_ctc(dst)
print(f"{len(seq.frames)} frames, {sum(len(f) for f in seq.frames)} detections")
