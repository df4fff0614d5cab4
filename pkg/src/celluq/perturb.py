"""Feature perturbation ensembles.

Detections are resampled from a noise distribution around the observed
features.  Either every perturbed frame pair is solved separately and the
solutions are counted, or the link costs are averaged over the perturbations
and handed to the classification view once.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .bayes import mc_edge_probabilities
from .costs import CostModel
from .model import ConfigurationError, ContractViolation, Detection, EdgeProbabilityMatrix, Frame
from .solver import solve_map

GAUSSIAN = "gaussian_centroid"
MASK = "mask_inflate_deflate"

_SEED_MASK = (1 << 64) - 1


@dataclass(frozen=True)
class NoiseSpec:
    """Noise distribution and ensemble size.

    ``gamma`` is the per-axis variance (px^2) of centroid noise; ``radius`` is
    the number of 4-connected dilation or erosion steps for mask noise.
    """

    kind: str = GAUSSIAN
    gamma: float = 0.1
    radius: int = 1
    seed: int = 0
    samples: int = 10

    def __post_init__(self):
        if self.kind == GAUSSIAN and not self.gamma > 0:
            raise ConfigurationError(f"gamma must be > 0, got {self.gamma}")
        if self.kind == MASK and self.radius < 1:
            raise ConfigurationError(f"radius must be >= 1, got {self.radius}")
        if self.samples < 1:
            raise ConfigurationError("samples must be >= 1")


def detection_rng(spec: NoiseSpec, sample_index: int, time_index: int,
                  detection_id: int) -> np.random.Generator:
    """Independent stream per (seed, sample, frame, detection)."""
    key = [spec.seed & _SEED_MASK, sample_index, time_index, detection_id & _SEED_MASK]
    return np.random.default_rng(key)


def _morph(mask, radius, grow):
    pts = np.array(sorted(mask), dtype=int)
    lo = pts.min(axis=0) - radius - 1
    shape = pts.max(axis=0) - lo + radius + 2
    grid = np.zeros(shape, dtype=bool)
    grid[tuple((pts - lo).T)] = True
    structure = ndimage.generate_binary_structure(grid.ndim, 1)
    op = ndimage.binary_dilation if grow else ndimage.binary_erosion
    out = op(grid, structure=structure, iterations=radius)
    return frozenset(tuple(int(v) for v in p) for p in np.argwhere(out) + lo)


def perturb_detection(d: Detection, spec: NoiseSpec, rng: np.random.Generator) -> Detection:
    if spec.kind == GAUSSIAN:
        offset = rng.normal(0.0, np.sqrt(spec.gamma), size=d.centroid.shape[0])
        # The mask no longer matches the shifted centroid, so it is dropped.
        return Detection(d.id, d.centroid + offset, d.area, None, d.activity)
    if spec.kind == MASK:
        if d.mask is None:
            raise ConfigurationError(f"detection {d.id} has no mask to inflate or deflate")
        grow = bool(rng.integers(2))
        mask = _morph(d.mask, spec.radius, grow)
        if not mask:
            return d
        return Detection.from_mask(d.id, mask, d.activity)
    raise ConfigurationError(f"unknown noise kind {spec.kind!r}")


def perturb_frame(f: Frame, spec: NoiseSpec, sample_index: int) -> Frame:
    dets = [
        perturb_detection(d, spec, detection_rng(spec, sample_index, f.time_index, d.id))
        for d in f
    ]
    return Frame(f.time_index, dets)


def perturbed_pairs(src: Frame, tgt: Frame, spec: NoiseSpec):
    if src.time_index == tgt.time_index and len(src) and len(tgt):
        # identical stream keys would correlate the noise of both frames
        raise ContractViolation("source and target frames share a time index")
    for k in range(spec.samples):
        yield perturb_frame(src, spec, k), perturb_frame(tgt, spec, k)


def fp_assignment_ensemble(src: Frame, tgt: Frame, cm: CostModel, spec: NoiseSpec
                           ) -> EdgeProbabilityMatrix:
    """Edge frequencies over MAP solutions of perturbed frame pairs."""
    solutions = [solve_map(s, t, cm).assignment for s, t in perturbed_pairs(src, tgt, spec)]
    return mc_edge_probabilities(solutions)


def fp_mean_cost(src: Frame, tgt: Frame, cm: CostModel, spec: NoiseSpec) -> CostModel:
    """Cost model whose link costs are averaged over perturbed frame pairs.

    The returned model only knows the detections of ``src`` and ``tgt``; it
    looks links up by (mother id, daughter id).
    """
    total = np.zeros((len(src), len(tgt)))
    for s, t in perturbed_pairs(src, tgt, spec):
        total += cm.matrix(s, t)
    mean = total / spec.samples
    mean.setflags(write=False)
    index = {(a.id, b.id): (i, j) for i, a in enumerate(src) for j, b in enumerate(tgt)}

    def link_cost(a, b):
        try:
            i, j = index[a.id, b.id]
        except KeyError:
            raise ContractViolation(
                f"mean cost model has no entry for ({a.id}, {b.id})"
            ) from None
        return float(mean[i, j])

    def batch(s, t):
        if [d.id for d in s] != [d.id for d in src] or [d.id for d in t] != [d.id for d in tgt]:
            raise ContractViolation("mean cost model queried with different frames")
        return mean

    params = dict(cm.params, samples=spec.samples, noise=spec.kind, mean_matrix=mean)
    return CostModel(link_cost, cm.appear_cost, cm.disappear_cost, f"{cm.name}+mean",
                     params, batch)
