"""Tumor-region bounding boxes and fixed-size patch extraction.

The extraction pipeline for one case is bbox -> pad -> crop: the tight box
around all non-background voxels is grown by a margin, zero-padded up to the
requested patch size where needed, and a fixed-size window is cut from the
result.  Every step is recorded in a provenance structure that can re-derive
the identical patch from the source case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    CaseBundle,
    OneHotMatrix,
    SegLabel,
    Shape3,
    Volume,
    encode_one_hot,
)
from .errors import DataError, NoTumorError
from .rng import MixConfig, SeededRng


@dataclass(frozen=True)
class BBox:
    """Axis-aligned voxel box: ``lo`` inclusive, ``hi`` exclusive."""

    lo: Shape3
    hi: Shape3

    def __post_init__(self) -> None:
        lo = tuple(int(v) for v in self.lo)
        hi = tuple(int(v) for v in self.hi)
        if len(lo) != 3 or len(hi) != 3:
            raise DataError("bbox corners must be 3D")
        if any(a < 0 for a in lo) or any(a >= b for a, b in zip(lo, hi)):
            raise DataError(f"invalid bbox lo={lo} hi={hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def size(self) -> Shape3:
        return tuple(b - a for a, b in zip(self.lo, self.hi))

    def slices(self) -> tuple[slice, slice, slice]:
        return tuple(slice(a, b) for a, b in zip(self.lo, self.hi))

    def to_dict(self) -> dict:
        return {"lo": list(self.lo), "hi": list(self.hi)}

    @classmethod
    def from_dict(cls, d: dict) -> "BBox":
        return cls(tuple(d["lo"]), tuple(d["hi"]))


@dataclass(frozen=True)
class PatchProvenance:
    """Everything needed to cut the same patch from the source case again."""

    case_id: str
    bbox: BBox
    pad_lo: Shape3
    pad_hi: Shape3
    offset: Shape3

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "bbox": self.bbox.to_dict(),
            "pad_lo": list(self.pad_lo),
            "pad_hi": list(self.pad_hi),
            "offset": list(self.offset),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PatchProvenance":
        return cls(
            case_id=d["case_id"],
            bbox=BBox.from_dict(d["bbox"]),
            pad_lo=tuple(d["pad_lo"]),
            pad_hi=tuple(d["pad_hi"]),
            offset=tuple(d["offset"]),
        )


@dataclass(frozen=True)
class PatchBundle:
    """Fixed-size window over one case: modalities + label + one-hot + provenance."""

    modalities: dict[str, Volume]
    label: SegLabel
    onehot: OneHotMatrix
    provenance: PatchProvenance

    def __post_init__(self) -> None:
        shapes = {v.shape for v in self.modalities.values()} | {self.label.shape}
        if len(shapes) != 1:
            raise DataError(f"patch mixes shapes {sorted(shapes)}")
        if self.onehot.grid_shape != self.label.shape:
            raise DataError("one-hot grid does not match patch shape")

    @property
    def shape(self) -> Shape3:
        return self.label.shape


# ---------------------------------------------------------------------------
# Bounding boxes
# ---------------------------------------------------------------------------


def tumor_bbox(seg: SegLabel, margin: int = 0) -> BBox:
    """Tight box around all non-background voxels, grown by ``margin`` per side.

    The expanded box is clamped to the volume bounds.  An all-background
    segmentation has no box and raises :class:`NoTumorError`.
    """
    if margin < 0:
        raise DataError(f"margin must be non-negative, got {margin}")
    fg = seg.data != seg.scheme.background_code
    if not fg.any():
        raise NoTumorError("segmentation has no foreground voxels")
    lo = []
    hi = []
    for axis in range(3):
        other = tuple(a for a in range(3) if a != axis)
        line = fg.any(axis=other)
        idx = np.flatnonzero(line)
        lo.append(max(0, int(idx[0]) - margin))
        hi.append(min(seg.shape[axis], int(idx[-1]) + 1 + margin))
    return BBox(tuple(lo), tuple(hi))


# ---------------------------------------------------------------------------
# Padding and cropping
# ---------------------------------------------------------------------------


def pad_amounts(dims: Shape3, min_size: Shape3) -> tuple[Shape3, Shape3]:
    """Symmetric per-axis zero-fill to reach ``min_size``, extra voxel high side."""
    lo = []
    hi = []
    for d, m in zip(dims, min_size):
        deficit = max(0, m - d)
        lo.append(deficit // 2)
        hi.append(deficit - deficit // 2)
    return tuple(lo), tuple(hi)


def pad_to_min(
    data: np.ndarray, min_size: Shape3, fill: float | int = 0
) -> tuple[np.ndarray, Shape3, Shape3]:
    """Zero-fill (or ``fill``-fill) a grid so every dim is at least ``min_size``."""
    pad_lo, pad_hi = pad_amounts(data.shape, min_size)
    if not any(pad_lo) and not any(pad_hi):
        return data, pad_lo, pad_hi
    padded = np.pad(
        data,
        tuple(zip(pad_lo, pad_hi)),
        mode="constant",
        constant_values=fill,
    )
    return padded, pad_lo, pad_hi


def crop_fixed(
    region_dims: Shape3, size: Shape3, rng: SeededRng, mode: str = "random"
) -> Shape3:
    """Offsets of a ``size`` window inside ``region_dims``.

    'random' draws each offset uniformly from [0, region - size]; 'center'
    splits the slack evenly (low side keeps the floor).
    """
    if any(r < s for r, s in zip(region_dims, size)):
        raise DataError(f"region {region_dims} smaller than window {size}")
    if mode == "center":
        return tuple((r - s) // 2 for r, s in zip(region_dims, size))
    if mode != "random":
        raise DataError(f"unknown crop mode {mode!r}")
    return tuple(rng.integers(0, r - s + 1) for r, s in zip(region_dims, size))


def _window(data: np.ndarray, offset: Shape3, size: Shape3) -> np.ndarray:
    sl = tuple(slice(o, o + s) for o, s in zip(offset, size))
    return np.ascontiguousarray(data[sl])


def _window_offsets(
    region_dims: Shape3,
    size: Shape3,
    core_lo: Shape3,
    core_hi: Shape3,
    rng: SeededRng,
    mode: str,
) -> Shape3:
    """Window offsets constrained to cover [core_lo, core_hi) where possible.

    Per axis, offsets are drawn uniformly from the sub-range that keeps the
    tumor core inside the window; when the core is wider than the window the
    whole region is used instead (partial coverage is unavoidable there).
    """
    base = []
    spans = []
    for a in range(3):
        lo = max(0, core_hi[a] - size[a])
        hi = min(region_dims[a] - size[a], core_lo[a])
        if lo > hi:
            lo, hi = 0, region_dims[a] - size[a]
        base.append(lo)
        spans.append(hi - lo + size[a])
    rel = crop_fixed(tuple(spans), size, rng, mode=mode)
    return tuple(b + r for b, r in zip(base, rel))


def extract_tumor_patch(
    case: CaseBundle, cfg: MixConfig, rng: SeededRng
) -> PatchBundle:
    """Cut one fixed-size tumor patch from a case (bbox -> pad -> crop).

    The window always covers the whole tumor when the tumor fits inside
    patch_size; otherwise it falls back to a random window inside the padded
    bounding-box region.
    """
    bbox = tumor_bbox(case.label, cfg.margin)
    tight = tumor_bbox(case.label, 0)
    bg = case.label.scheme.background_code

    label_region = case.label.data[bbox.slices()]
    label_padded, pad_lo, pad_hi = pad_to_min(label_region, cfg.patch_size, fill=bg)
    core_lo = tuple(t - b + p for t, b, p in zip(tight.lo, bbox.lo, pad_lo))
    core_hi = tuple(t - b + p for t, b, p in zip(tight.hi, bbox.lo, pad_lo))
    offset = _window_offsets(
        label_padded.shape, cfg.patch_size, core_lo, core_hi, rng, cfg.crop
    )

    label_patch = SegLabel(
        _window(label_padded, offset, cfg.patch_size), case.label.scheme
    )
    modalities = {}
    for name, vol in case.modalities.items():
        region = vol.data[bbox.slices()]
        padded, _, _ = pad_to_min(region, cfg.patch_size, fill=0.0)
        modalities[name] = Volume(
            _window(padded, offset, cfg.patch_size), vol.spacing
        )
    return PatchBundle(
        modalities=modalities,
        label=label_patch,
        onehot=encode_one_hot(label_patch),
        provenance=PatchProvenance(
            case_id=case.case_id,
            bbox=bbox,
            pad_lo=pad_lo,
            pad_hi=pad_hi,
            offset=offset,
        ),
    )


def reextract_patch(
    case: CaseBundle, provenance: PatchProvenance, patch_size: Shape3
) -> PatchBundle:
    """Replay a recorded provenance against its source case.

    Applies the stored bbox, pad amounts, and offset verbatim; the result is
    bit-identical to the original extraction.
    """
    bg = case.label.scheme.background_code
    pads = tuple(zip(provenance.pad_lo, provenance.pad_hi))

    label_region = case.label.data[provenance.bbox.slices()]
    label_padded = np.pad(label_region, pads, mode="constant", constant_values=bg)
    label_patch = SegLabel(
        _window(label_padded, provenance.offset, patch_size), case.label.scheme
    )
    modalities = {}
    for name, vol in case.modalities.items():
        region = vol.data[provenance.bbox.slices()]
        padded = np.pad(region, pads, mode="constant", constant_values=0.0)
        modalities[name] = Volume(
            _window(padded, provenance.offset, patch_size), vol.spacing
        )
    return PatchBundle(
        modalities=modalities,
        label=label_patch,
        onehot=encode_one_hot(label_patch),
        provenance=provenance,
    )


# ---------------------------------------------------------------------------
# Inference-time padding
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PadRecord:
    """Original dims of a case padded for inference, for cropping back."""

    original_shape: Shape3
    target_shape: Shape3

    def to_dict(self) -> dict:
        return {
            "original_shape": list(self.original_shape),
            "target_shape": list(self.target_shape),
        }


def pad_for_inference(case: CaseBundle, target: Shape3) -> tuple[CaseBundle, PadRecord]:
    """Zero-fill a case up to ``target`` dims (fill appended on the high side)."""
    target = tuple(int(t) for t in target)
    if any(t < s for t, s in zip(target, case.shape)):
        raise DataError(f"target {target} smaller than case shape {case.shape}")
    record = PadRecord(original_shape=case.shape, target_shape=target)
    if target == case.shape:
        return case, record
    pads = tuple((0, t - s) for t, s in zip(target, case.shape))
    bg = case.label.scheme.background_code
    modalities = {
        name: Volume(np.pad(vol.data, pads, constant_values=0.0), vol.spacing)
        for name, vol in case.modalities.items()
    }
    label = SegLabel(
        np.pad(case.label.data, pads, constant_values=bg), case.label.scheme
    )
    return CaseBundle(case.case_id, modalities, label), record


def crop_back(data: np.ndarray, record: PadRecord) -> np.ndarray:
    """Undo :func:`pad_for_inference` on a prediction grid."""
    if tuple(data.shape) != record.target_shape:
        raise DataError(
            f"prediction shape {tuple(data.shape)} does not match padded shape "
            f"{record.target_shape}"
        )
    sl = tuple(slice(0, s) for s in record.original_shape)
    return np.ascontiguousarray(data[sl])
