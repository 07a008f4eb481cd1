"""Voxelwise and scalar mixing of paired cases.

Four mixers share one composition rule: images combine as
``X = A (*) X1 + (1 - A) (*) X2`` with a per-voxel weight tensor A, and the
one-hot labels combine with the matrix built by replicating the vectorized
tensor across the k class columns.  That shared weight is what keeps every
synthetic intensity consistent with its soft label:

* ``tensormixup``  - A has i.i.d. Beta(alpha, alpha) entries;
* ``scalar_roi_mix`` - A is constant (one lambda for the whole patch);
* ``mixup_whole``  - constant lambda over whole volumes, window cut afterward;
* ``cutmix3d``     - A is a binary box indicator (copy-paste, not blending).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    CaseBundle,
    LabelScheme,
    OneHotMatrix,
    SegLabel,
    Shape3,
    Spacing3,
    Volume,
    encode_one_hot,
    vectorize,
)
from .errors import ConfigError, DataError
from .patch import BBox, PatchBundle, PatchProvenance, pad_amounts, pad_to_min
from .rng import SeededRng


@dataclass(frozen=True)
class MixMatrix:
    """N x k matrix whose row i repeats element i of the vectorized weight tensor."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2 or data.shape[1] < 1:
            raise DataError("mix matrix must be 2D with at least one column")
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise DataError("mix weights must lie in [0, 1]")
        if data.shape[1] > 1 and np.ptp(data, axis=1).any():
            raise DataError("each mix-matrix row must be constant")
        object.__setattr__(self, "data", data)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class Lineage:
    """How a synthetic case was produced, manifest-ready."""

    method: str
    source_i: str
    source_j: str
    alpha: float | None = None
    lam: float | None = None
    seed_label: str | None = None
    provenance_i: PatchProvenance | None = None
    provenance_j: PatchProvenance | None = None

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "source_i": self.source_i,
            "source_j": self.source_j,
            "alpha": self.alpha,
            "lam": self.lam,
            "seed_label": self.seed_label,
            "provenance_i": self.provenance_i.to_dict() if self.provenance_i else None,
            "provenance_j": self.provenance_j.to_dict() if self.provenance_j else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Lineage":
        return cls(
            method=d["method"],
            source_i=d["source_i"],
            source_j=d["source_j"],
            alpha=d.get("alpha"),
            lam=d.get("lam"),
            seed_label=d.get("seed_label"),
            provenance_i=(
                PatchProvenance.from_dict(d["provenance_i"])
                if d.get("provenance_i")
                else None
            ),
            provenance_j=(
                PatchProvenance.from_dict(d["provenance_j"])
                if d.get("provenance_j")
                else None
            ),
        )


@dataclass(frozen=True)
class SyntheticCase:
    """A mixed sample: blended modalities plus a soft (probabilistic) label."""

    case_id: str
    modalities: dict[str, Volume]
    soft_label: OneHotMatrix
    scheme: LabelScheme
    lineage: Lineage

    def __post_init__(self) -> None:
        if not self.modalities:
            raise DataError("synthetic case needs at least one modality")
        shapes = {v.shape for v in self.modalities.values()}
        if len(shapes) != 1:
            raise DataError(f"synthetic case mixes shapes {sorted(shapes)}")
        if self.soft_label.grid_shape != next(iter(shapes)):
            raise DataError("soft label grid does not match modality shape")
        if self.soft_label.cols != self.scheme.k:
            raise DataError(
                f"soft label has {self.soft_label.cols} columns, scheme has "
                f"{self.scheme.k} classes"
            )

    @property
    def shape(self) -> Shape3:
        return self.soft_label.grid_shape

    @property
    def spacing(self) -> Spacing3:
        return next(iter(self.modalities.values())).spacing

    def hard_label(self) -> SegLabel:
        from .core import decode_argmax

        return decode_argmax(self.soft_label, self.scheme)


# ---------------------------------------------------------------------------
# Weight-tensor machinery
# ---------------------------------------------------------------------------


def map_tensor_to_matrix(a: np.ndarray, k: int) -> MixMatrix:
    """Vectorize the weight tensor and replicate it across k class columns."""
    if k < 1:
        raise ConfigError(f"class count must be at least 1, got {k}")
    a_v = vectorize(np.asarray(a, dtype=np.float32))
    return MixMatrix(np.repeat(a_v[:, None], k, axis=1))


def _check_pair(p1: PatchBundle, p2: PatchBundle) -> None:
    if p1.shape != p2.shape:
        raise DataError(f"patch shapes differ: {p1.shape} vs {p2.shape}")
    if set(p1.modalities) != set(p2.modalities):
        raise DataError(
            f"modality sets differ: {sorted(p1.modalities)} vs {sorted(p2.modalities)}"
        )
    if p1.label.scheme != p2.label.scheme:
        raise DataError("patches use different label schemes")


def _check_weight(value: float, name: str = "lambda") -> float:
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise DataError(f"{name} must lie in [0, 1], got {value}")
    return value


# ---------------------------------------------------------------------------
# Mixers
# ---------------------------------------------------------------------------


def tensormixup(p1: PatchBundle, p2: PatchBundle, a: np.ndarray) -> SyntheticCase:
    """Blend two patches voxelwise with a per-voxel weight tensor.

    Every modality of the pair, and (through the replicated matrix) the
    one-hot labels, are combined with the same per-voxel weights, so voxel
    i's intensity weight and its soft-label row weight are identical.
    """
    _check_pair(p1, p2)
    a = np.asarray(a, dtype=np.float32)
    if tuple(a.shape) != p1.shape:
        raise DataError(f"weight tensor shape {a.shape} does not match patch {p1.shape}")
    if a.size and (a.min() < 0.0 or a.max() > 1.0):
        raise DataError("weight tensor entries must lie in [0, 1]")

    modalities = {
        name: Volume(
            a * p1.modalities[name].data + (1.0 - a) * p2.modalities[name].data,
            p1.modalities[name].spacing,
        )
        for name in p1.modalities
    }
    k = p1.label.scheme.k
    m = map_tensor_to_matrix(a, k)
    soft = m.data * p1.onehot.data + (1.0 - m.data) * p2.onehot.data
    return SyntheticCase(
        case_id="",
        modalities=modalities,
        soft_label=OneHotMatrix(soft, p1.shape),
        scheme=p1.label.scheme,
        lineage=Lineage(
            method="tensormixup",
            source_i=p1.provenance.case_id,
            source_j=p2.provenance.case_id,
            provenance_i=p1.provenance,
            provenance_j=p2.provenance,
        ),
    )


def scalar_roi_mix(p1: PatchBundle, p2: PatchBundle, lam: float) -> SyntheticCase:
    """Blend two patches with one scalar weight (constant tensor)."""
    lam = _check_weight(lam)
    a = np.full(p1.shape, lam, dtype=np.float32)
    mixed = tensormixup(p1, p2, a)
    lineage = Lineage(
        method="scalar_roi",
        source_i=p1.provenance.case_id,
        source_j=p2.provenance.case_id,
        lam=lam,
        provenance_i=p1.provenance,
        provenance_j=p2.provenance,
    )
    return SyntheticCase(
        case_id="",
        modalities=mixed.modalities,
        soft_label=mixed.soft_label,
        scheme=mixed.scheme,
        lineage=lineage,
    )


def cutmix3d(
    p1: PatchBundle, p2: PatchBundle, lam: float, rng: SeededRng
) -> SyntheticCase:
    """Copy a random axis-aligned box from p2 into p1.

    The box covers a fraction (1 - lambda) of the patch volume, realized as
    cube-root scaling per axis and quantized to whole voxels.  Labels are
    composed voxelwise: rows inside the box come from p2, outside from p1.
    """
    _check_pair(p1, p2)
    lam = _check_weight(lam)
    dims = p1.shape
    frac = (1.0 - lam) ** (1.0 / 3.0)
    lengths = tuple(min(d, int(round(d * frac))) for d in dims)
    offsets = tuple(
        rng.integers(0, d - ln + 1) if d > ln else 0 for d, ln in zip(dims, lengths)
    )
    box = np.zeros(dims, dtype=bool)
    box[tuple(slice(o, o + ln) for o, ln in zip(offsets, lengths))] = True

    modalities = {
        name: Volume(
            np.where(box, p2.modalities[name].data, p1.modalities[name].data),
            p1.modalities[name].spacing,
        )
        for name in p1.modalities
    }
    inside = vectorize(box)
    soft = np.where(inside[:, None], p2.onehot.data, p1.onehot.data)
    return SyntheticCase(
        case_id="",
        modalities=modalities,
        soft_label=OneHotMatrix(soft, dims),
        scheme=p1.label.scheme,
        lineage=Lineage(
            method="cutmix3d",
            source_i=p1.provenance.case_id,
            source_j=p2.provenance.case_id,
            lam=lam,
            provenance_i=p1.provenance,
            provenance_j=p2.provenance,
        ),
    )


# ---------------------------------------------------------------------------
# Whole-image baseline
# ---------------------------------------------------------------------------


def _union_window(
    case_i: CaseBundle, case_j: CaseBundle, patch_size: Shape3
) -> tuple[BBox, Shape3, Shape3, Shape3]:
    """Centered patch window over the union of both cases' foreground.

    Returns (full-volume bbox, pad_lo, pad_hi, offset) in the provenance
    convention: crop to bbox, pad, then cut the window at offset.  Cases
    without any foreground center on the volume itself.
    """
    bg = case_i.label.scheme.background_code
    fg = (case_i.label.data != bg) | (case_j.label.data != bg)
    dims = case_i.shape
    padded_dims = tuple(max(d, p) for d, p in zip(dims, patch_size))
    pad_lo, pad_hi = pad_amounts(dims, patch_size)
    if fg.any():
        center = []
        for axis in range(3):
            other = tuple(a for a in range(3) if a != axis)
            idx = np.flatnonzero(fg.any(axis=other))
            center.append(pad_lo[axis] + (int(idx[0]) + int(idx[-1]) + 1) // 2)
    else:
        center = [d // 2 for d in padded_dims]
    offset = tuple(
        int(np.clip(c - s // 2, 0, pd - s))
        for c, s, pd in zip(center, patch_size, padded_dims)
    )
    bbox = BBox((0, 0, 0), dims)
    return bbox, pad_lo, pad_hi, offset


def mixup_whole(
    case_i: CaseBundle,
    case_j: CaseBundle,
    lam: float,
    patch_size: Shape3 = (128, 128, 128),
) -> SyntheticCase:
    """Traditional whole-image mixing with one scalar weight.

    Both cases are combined voxel-for-voxel over the full volume; a fixed
    window is then cut from the synthetic case, centered on the union of the
    two foregrounds (volume center when neither case has any).  Blending and
    windowing are voxelwise, so the window is computed once and both cases
    are blended inside it.
    """
    lam = _check_weight(lam)
    if case_i.shape != case_j.shape:
        raise DataError(f"case shapes differ: {case_i.shape} vs {case_j.shape}")
    if set(case_i.modalities) != set(case_j.modalities):
        raise DataError("modality sets differ")
    if case_i.label.scheme != case_j.label.scheme:
        raise DataError("cases use different label schemes")
    patch_size = tuple(int(s) for s in patch_size)

    bbox, pad_lo, pad_hi, offset = _union_window(case_i, case_j, patch_size)
    scheme = case_i.label.scheme
    window = tuple(slice(o, o + s) for o, s in zip(offset, patch_size))

    def cut(vol: Volume) -> np.ndarray:
        padded, _, _ = pad_to_min(vol.data, patch_size, fill=0.0)
        return np.ascontiguousarray(padded[window])

    def cut_label(seg: SegLabel) -> SegLabel:
        padded, _, _ = pad_to_min(seg.data, patch_size, fill=scheme.background_code)
        return SegLabel(np.ascontiguousarray(padded[window]), scheme)

    modalities = {}
    for name in case_i.modalities:
        w_i = cut(case_i.modalities[name])
        w_j = cut(case_j.modalities[name])
        modalities[name] = Volume(
            np.float32(lam) * w_i + np.float32(1.0 - lam) * w_j,
            case_i.modalities[name].spacing,
        )
    y_i = encode_one_hot(cut_label(case_i.label))
    y_j = encode_one_hot(cut_label(case_j.label))
    soft = np.float32(lam) * y_i.data + np.float32(1.0 - lam) * y_j.data

    prov = {
        "i": PatchProvenance(case_i.case_id, bbox, pad_lo, pad_hi, offset),
        "j": PatchProvenance(case_j.case_id, bbox, pad_lo, pad_hi, offset),
    }
    return SyntheticCase(
        case_id="",
        modalities=modalities,
        soft_label=OneHotMatrix(soft, patch_size),
        scheme=scheme,
        lineage=Lineage(
            method="mixup",
            source_i=case_i.case_id,
            source_j=case_j.case_id,
            lam=lam,
            provenance_i=prov["i"],
            provenance_j=prov["j"],
        ),
    )
