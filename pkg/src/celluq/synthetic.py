"""Synthetic frames and sequences with known lineage.

Used by the demos and the test-suite.  Cells follow free Brownian motion, so
the displacement over ``s`` frames is Gaussian with variance ``s * v`` per
axis and the softmax over ``-|x - m|^2 / (2 s v)`` is the exact posterior of
a daughter's mother when all mothers are equally likely a priori.
"""

from __future__ import annotations

import numpy as np

from .io import Sequence
from .model import Assignment, Detection, Frame


def ambiguous_pair(offset=1.8, spacing=4.0):
    """Two mothers on a line and three daughters; the middle daughter sits
    between both mothers, slightly closer to the first.

    Returns ``(src, tgt)``.  Under a Brownian cost the two best assignments
    differ only in the middle daughter's mother.
    """
    src = Frame(0, [Detection(0, [0.0, 0.0]), Detection(1, [spacing, 0.0])])
    tgt = Frame(1, [
        Detection(0, [-1.0, 0.0]),
        Detection(1, [offset, 0.0]),
        Detection(2, [spacing + 1.0, 0.0]),
    ])
    return src, tgt


def random_frame_pair(rng, m, n, box=10.0, dims=2):
    src = Frame(0, [Detection(i, rng.uniform(0, box, dims)) for i in range(m)])
    tgt = Frame(1, [Detection(j, rng.uniform(0, box, dims)) for j in range(n)])
    return src, tgt


def brownian_sequence(n_cells, n_frames, step_variance, density=0.25, dims=2, seed=0,
                      activity=None):
    """Non-dividing cells under free Brownian motion, one-to-one ground truth.

    Initial positions are uniform in a box sized so the expected number of
    cells per unit area (or volume) is ``density``.
    """
    rng = np.random.default_rng(seed)
    side = (n_cells / density) ** (1.0 / dims)
    pos = rng.uniform(0, side, (n_cells, dims))
    sd = np.sqrt(step_variance)
    frames, gt = [], []
    for t in range(n_frames):
        if t:
            pos = pos + rng.normal(0, sd, pos.shape)
        frames.append(Frame(t, [Detection(i, p, activity=activity) for i, p in enumerate(pos)]))
        if t:
            gt.append(Assignment.from_mother_vector(list(range(n_cells)), n_cells))
    return Sequence(frames, gt, f"brownian(n={n_cells}, T={n_frames}, v={step_variance})")


def brownian_classification(n_pairs, n_cells, variance, density=0.25, dims=2, seed=0):
    """Independent one-step frame pairs: ``(src, tgt, truth)`` triples with
    mothers scattered uniformly and daughters displaced with ``variance``."""
    rng = np.random.default_rng(seed)
    side = (n_cells / density) ** (1.0 / dims)
    out = []
    for p in range(n_pairs):
        mothers = rng.uniform(0, side, (n_cells, dims))
        daughters = mothers + rng.normal(0, np.sqrt(variance), mothers.shape)
        order = rng.permutation(n_cells)
        src = Frame(2 * p, [Detection(i, x) for i, x in enumerate(mothers)])
        tgt = Frame(2 * p + 1, [Detection(j, daughters[order[j]]) for j in range(n_cells)])
        out.append((src, tgt, Assignment.from_mother_vector(order, n_cells)))
    return out


def dividing_sequence():
    """Three frames, one cell dividing between frames 1 and 2, one cell
    leaving after frame 0 and one entering at frame 1."""
    f0 = Frame(0, [Detection(1, [0.0, 0.0]), Detection(2, [20.0, 0.0]), Detection(3, [40.0, 40.0])])
    f1 = Frame(1, [Detection(1, [0.5, 0.0]), Detection(2, [20.0, 0.5]), Detection(4, [0.0, 40.0])])
    f2 = Frame(2, [
        Detection(5, [-1.0, 0.0]), Detection(6, [2.0, 0.0]),
        Detection(2, [20.5, 0.5]), Detection(4, [0.5, 40.0]),
    ])
    gt = [
        Assignment.from_links([(0, 0), (1, 1)], 3, 3),
        Assignment.from_links([(0, 0), (0, 1), (1, 2), (2, 3)], 3, 4),
    ]
    return Sequence([f0, f1, f2], gt, "dividing")
