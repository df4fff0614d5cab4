"""Reading and writing annotated detection sequences.

Two input formats are supported.

``detections-jsonl``
    One JSON object per line and detection::

        {"frame": 0, "id": 3, "centroid": [12.0, 40.5], "area": 57,
         "mask_rle": [[row, col_start, length], ...], "activity": 1.3,
         "parent": 1}

    ``mask_rle``, ``pixels`` (explicit coordinate list), ``activity`` and
    ``parent`` are optional.  ``parent`` is the id of the mother in the
    previous frame, ``null`` for an appearing cell.  Ground truth is read when
    every detection after the first frame carries a ``parent`` key.

``ctc``
    A directory holding ``man_track.txt`` (lines ``L B E P``: label, first
    frame, last frame, parent label or 0) and one label grid per frame named
    ``man_track<T>.pgm`` (plain ``P2`` or binary ``P5``; 0 is background).
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import BOTTOM, Assignment, Detection, Frame, is_feasible


class ParseError(ValueError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.path, self.line = str(path), line


class IntegrityError(ValueError):
    """Inputs parse but contradict each other."""


@dataclass
class Sequence:
    frames: list
    ground_truth: list = None
    source: str = ""
    subsample_factor: int = 1
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.ground_truth is not None:
            if len(self.ground_truth) != max(len(self.frames) - 1, 0):
                raise IntegrityError("ground truth needs one assignment per frame pair")
            for t, a in enumerate(self.ground_truth):
                src, tgt = self.frames[t], self.frames[t + 1]
                if a.source_size != len(src) or a.target_size != len(tgt) or not is_feasible(a):
                    raise IntegrityError(
                        f"ground truth between frames {src.time_index} and "
                        f"{tgt.time_index} is not a feasible assignment"
                    )

    @property
    def has_ground_truth(self):
        return self.ground_truth is not None

    def pairs(self):
        return list(zip(self.frames[:-1], self.frames[1:]))


# -- PGM ---------------------------------------------------------------------

def _pgm_tokens(data: bytes, count):
    """Split a PGM header into ``count`` tokens, skipping comments."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            break
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos


def read_pgm(path) -> np.ndarray:
    """Read a plain (P2) or binary (P5) portable graymap as an integer array."""
    data = Path(path).read_bytes()
    tokens, pos = _pgm_tokens(data, 4)
    if len(tokens) < 4 or tokens[0] not in (b"P2", b"P5"):
        raise ParseError(path, 1, "not a P2/P5 graymap")
    try:
        width, height, maxval = (int(t) for t in tokens[1:4])
    except ValueError:
        raise ParseError(path, 1, "bad PGM header") from None
    if width < 0 or height < 0 or not 0 < maxval < 65536:
        raise ParseError(path, 1, "bad PGM dimensions or maxval")
    if tokens[0] == b"P5":
        raster = data[pos + 1:]
        dtype = ">u2" if maxval > 255 else "u1"
        need = width * height * np.dtype(dtype).itemsize
        if len(raster) < need:
            raise ParseError(path, 1, "truncated P5 raster")
        grid = np.frombuffer(raster[:need], dtype=dtype).astype(np.int64)
    else:
        text = data[pos:].decode("ascii", "replace")
        body = re.sub(r"#[^\n]*", "", text).split()
        if len(body) != width * height:
            raise ParseError(path, 1, f"expected {width * height} values, found {len(body)}")
        try:
            grid = np.array([int(v) for v in body], dtype=np.int64)
        except ValueError as exc:
            raise ParseError(path, 1, str(exc)) from None
    if np.any(grid > maxval):
        raise ParseError(path, 1, "value exceeds maxval")
    return grid.reshape(height, width)


def write_pgm(path, grid, binary=False):
    grid = np.asarray(grid, dtype=np.int64)
    if grid.ndim != 2 or np.any(grid < 0) or np.any(grid > 65535):
        raise ValueError("grid must be 2-D with values in [0, 65535]")
    h, w = grid.shape
    maxval = max(int(grid.max()) if grid.size else 0, 1)
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        Path(path).write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + grid.astype(dtype).tobytes())
    else:
        lines = [f"P2\n{w} {h}\n{maxval}"] + [" ".join(str(v) for v in r) for r in grid]
        Path(path).write_text("\n".join(lines) + "\n")


# -- masks -------------------------------------------------------------------

def mask_to_rle(mask):
    runs = []
    for r, c in sorted(mask):
        if runs and runs[-1][0] == r and runs[-1][1] + runs[-1][2] == c:
            runs[-1][2] += 1
        else:
            runs.append([r, c, 1])
    return runs


def rle_to_mask(runs):
    pix = set()
    for r, c, n in runs:
        if n < 1:
            raise ValueError("run length must be >= 1")
        pix.update((int(r), int(c) + k) for k in range(int(n)))
    return frozenset(pix)


# -- detections-jsonl -----------------------------------------------------------

def _detection_from_record(rec):
    mask = None
    if "mask_rle" in rec:
        mask = rle_to_mask(rec["mask_rle"])
    elif "pixels" in rec:
        mask = frozenset(tuple(int(v) for v in p) for p in rec["pixels"])
    activity = rec.get("activity")
    if mask is not None and "centroid" not in rec:
        return Detection.from_mask(int(rec["id"]), mask, activity)
    area = int(rec.get("area", len(mask) if mask is not None else 0))
    return Detection(int(rec["id"]), rec["centroid"], area, mask, activity)


def read_detections_jsonl(path) -> Sequence:
    path = Path(path)
    by_frame, parents = {}, {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                t = int(rec["frame"])
                det = _detection_from_record(rec)
            except (ValueError, KeyError, TypeError) as exc:
                raise ParseError(path, lineno, f"bad detection record: {exc}") from None
            if t < 0:
                raise ParseError(path, lineno, "negative frame index")
            if "parent" in rec:
                parents[t, det.id] = rec["parent"]
            by_frame.setdefault(t, []).append(det)
    if not by_frame:
        return Sequence([], None, str(path))
    times = range(min(by_frame), max(by_frame) + 1)
    try:
        frames = [Frame(t, by_frame.get(t, [])) for t in times]
    except ValueError as exc:
        raise IntegrityError(f"{path}: {exc}") from None

    later = [(f.time_index, d.id) for f in frames[1:] for d in f]
    with_parent = [k for k in later if k in parents]
    if not later or not with_parent:
        return Sequence(frames, None, str(path))
    if len(with_parent) != len(later):
        raise IntegrityError(f"{path}: only some detections carry a parent key")
    gt = []
    for src, tgt in zip(frames[:-1], frames[1:]):
        mothers = []
        for d in tgt:
            p = parents[tgt.time_index, d.id]
            if p is None:
                mothers.append(BOTTOM)
                continue
            try:
                mothers.append(src.index_of(int(p)))
            except KeyError:
                raise IntegrityError(
                    f"{path}: parent {p} of detection {d.id} missing from frame {src.time_index}"
                ) from None
        gt.append(Assignment.from_mother_vector(mothers, len(src)))
    return Sequence(frames, gt, str(path))


def write_detections_jsonl(path, seq: Sequence):
    with open(path, "w") as fh:
        for t, f in enumerate(seq.frames):
            mothers = None
            if seq.ground_truth is not None and t > 0:
                mothers = seq.ground_truth[t - 1].mother_vector()
            for j, d in enumerate(f):
                rec = {"frame": f.time_index, "id": d.id, "centroid": d.centroid.tolist(),
                       "area": d.area}
                if d.mask is not None:
                    rec["mask_rle"] = mask_to_rle(d.mask)
                if d.activity is not None:
                    rec["activity"] = d.activity
                if mothers is not None:
                    rec["parent"] = None if mothers[j] == BOTTOM else seq.frames[t - 1][mothers[j]].id
                fh.write(json.dumps(rec, sort_keys=True) + "\n")


# -- CTC ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrackRecord:
    label: int
    begin: int
    end: int
    parent: int


def parse_track_line(line, path="<string>", lineno=1) -> TrackRecord:
    parts = line.split()
    if len(parts) != 4:
        raise ParseError(path, lineno, f"expected 'L B E P', got {line.strip()!r}")
    try:
        rec = TrackRecord(*(int(p) for p in parts))
    except ValueError:
        raise ParseError(path, lineno, f"non-integer field in {line.strip()!r}") from None
    if rec.label <= 0 or rec.begin < 0 or rec.end < rec.begin or rec.parent < 0:
        raise ParseError(path, lineno, f"invalid track record {line.strip()!r}")
    return rec


def read_track_table(path) -> dict:
    tracks = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rec = parse_track_line(line, path, lineno)
            if rec.label in tracks:
                raise ParseError(path, lineno, f"duplicate label {rec.label}")
            tracks[rec.label] = rec
    return tracks


_GRID_NAME = re.compile(r"man_track(\d+)\.pgm$")


def read_ctc(path) -> Sequence:
    root = Path(path)
    table = root / "man_track.txt"
    if not table.exists():
        raise FileNotFoundError(table)
    tracks = read_track_table(table)
    grids = {}
    for f in root.iterdir():
        mt = _GRID_NAME.match(f.name)
        if mt:
            grids[int(mt.group(1))] = f
    if not grids:
        raise FileNotFoundError(f"no man_track<T>.pgm grids in {root}")
    times = range(min(grids), max(grids) + 1)
    missing = [t for t in times if t not in grids]
    if missing:
        raise IntegrityError(f"{root}: missing label grids for frames {missing}")

    frames, present = [], []
    for t in times:
        grid = read_pgm(grids[t])
        labels = sorted(int(v) for v in np.unique(grid) if v != 0)
        dets = []
        for lab in labels:
            rec = tracks.get(lab)
            if rec is None or not rec.begin <= t <= rec.end:
                raise IntegrityError(f"{grids[t]}: label {lab} not in the track table at frame {t}")
            dets.append(Detection.from_mask(lab, map(tuple, np.argwhere(grid == lab))))
        frames.append(Frame(t, dets))
        present.append(set(labels))
    for rec in tracks.values():
        for t in range(rec.begin, rec.end + 1):
            if t in grids and rec.label not in present[t - times.start]:
                raise IntegrityError(f"{root}: track {rec.label} absent from frame {t}")
        if rec.parent and rec.parent not in tracks:
            raise IntegrityError(f"{root}: track {rec.label} has unknown parent {rec.parent}")

    gt = []
    for src, tgt in zip(frames[:-1], frames[1:]):
        mothers = []
        for d in tgt:
            if any(s.id == d.id for s in src):
                mothers.append(src.index_of(d.id))
                continue
            p = tracks[d.id].parent
            if p and tracks[d.id].begin == tgt.time_index and tracks[p].end == src.time_index:
                mothers.append(src.index_of(p))
            else:
                mothers.append(BOTTOM)
        a = Assignment.from_mother_vector(mothers, len(src))
        if not is_feasible(a):
            raise IntegrityError(
                f"{root}: lineage between frames {src.time_index} and {tgt.time_index} "
                "gives a mother more than two daughters"
            )
        gt.append(a)
    return Sequence(frames, gt, str(root))


def write_ctc(path, seq: Sequence, shape):
    """Write a mask-carrying sequence with ground truth as a CTC-style directory.

    Track labels are derived from the lineage, so input detection ids are not
    preserved.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    if seq.ground_truth is None:
        raise ValueError("write_ctc needs ground truth")
    next_label = 1
    label_of = {}
    tracks = {}
    for t, f in enumerate(seq.frames):
        grid = np.zeros(shape, dtype=np.int64)
        mothers = seq.ground_truth[t - 1].mother_vector() if t else [BOTTOM] * len(f)
        counts = {}
        for m in mothers:
            if m != BOTTOM:
                counts[m] = counts.get(m, 0) + 1
        for j, d in enumerate(f):
            m = mothers[j]
            if m != BOTTOM and counts[m] == 1:
                lab = label_of[t - 1, m]
                tracks[lab][2] = f.time_index
            else:
                lab, next_label = next_label, next_label + 1
                parent = label_of[t - 1, m] if m != BOTTOM else 0
                tracks[lab] = [lab, f.time_index, f.time_index, parent]
            label_of[t, j] = lab
            for p in d.mask:
                grid[p] = lab
        write_pgm(root / f"man_track{f.time_index:03d}.pgm", grid)
    with open(root / "man_track.txt", "w") as fh:
        for lab in sorted(tracks):
            fh.write(" ".join(str(v) for v in tracks[lab]) + "\n")


def load_sequence(path, format="detections-jsonl") -> Sequence:
    if format == "detections-jsonl":
        return read_detections_jsonl(path)
    if format == "ctc":
        return read_ctc(path)
    raise ValueError(f"unknown format {format!r}; expected detections-jsonl or ctc")
