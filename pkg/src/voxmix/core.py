"""Core volumetric types and label encodings.

Volumes are dense 3D grids stored as numpy arrays of shape ``(dx, dy, dz)``
indexed ``[x, y, z]``.  Every place that needs a flat view of a grid (one-hot
rows, mixing-weight rows, raw file bytes) uses the single canonical
vectorization order defined by :func:`vectorize`: x varies fastest, z slowest.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError

Shape3 = tuple[int, int, int]
Spacing3 = tuple[float, float, float]

#: Modality names in their conventional order.
DEFAULT_MODALITIES = ("t1", "t1ce", "t2", "flair")

#: Tolerance on one-hot row sums (float32 convex combinations stay well inside).
ROW_SUM_TOL = 1e-6


class DegenerateVolumeWarning(UserWarning):
    """Signals that an operation met zero-variance input and degraded gracefully."""


def vectorize(data: np.ndarray) -> np.ndarray:
    """Flatten a 3D grid in the canonical order (x fastest, z slowest)."""
    return data.reshape(-1, order="F")


def unvectorize(flat: np.ndarray, shape: Shape3) -> np.ndarray:
    """Inverse of :func:`vectorize`: rebuild the ``(dx, dy, dz)`` grid."""
    return np.ascontiguousarray(flat.reshape(shape, order="F"))


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Volume:
    """One modality's scalar intensity grid.

    ``data`` is float32 with shape ``(dx, dy, dz)``; ``spacing`` is the voxel
    edge length in mm per axis.  Instances are immutable: the wrapped array is
    marked read-only at construction.
    """

    data: np.ndarray
    spacing: Spacing3 = (1.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 3:
            raise DataError(f"volume must be 3D, got {data.ndim}D")
        if data.size == 0:
            raise DataError("volume is empty")
        if not np.isfinite(data).all():
            raise DataError("volume contains non-finite values")
        spacing = tuple(float(s) for s in self.spacing)
        if len(spacing) != 3 or any(s <= 0.0 for s in spacing):
            raise DataError(f"spacing must be three positive values, got {spacing}")
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "spacing", spacing)

    @property
    def shape(self) -> Shape3:
        return self.data.shape


@dataclass(frozen=True)
class LabelScheme:
    """Ordered class codes/names plus named region compositions.

    The first entry of ``class_codes`` is the background code by convention.
    Defaults follow the BraTS labelling: codes 0/1/2/4 and the nested regions
    WT = {1, 2, 4}, TC = {1, 4}, ET = {4}.
    """

    class_codes: tuple[int, ...] = (0, 1, 2, 4)
    class_names: tuple[str, ...] = (
        "background",
        "necrosis_non_enhancing",
        "edema",
        "enhancing",
    )
    region_defs: dict[str, frozenset[int]] = field(
        default_factory=lambda: {
            "WT": frozenset({1, 2, 4}),
            "TC": frozenset({1, 4}),
            "ET": frozenset({4}),
        }
    )

    def __post_init__(self) -> None:
        codes = tuple(int(c) for c in self.class_codes)
        names = tuple(self.class_names)
        if len(codes) < 2:
            raise DataError("label scheme needs at least 2 classes")
        if len(set(codes)) != len(codes):
            raise DataError(f"class codes must be distinct, got {codes}")
        if any(c < 0 or c > 255 for c in codes):
            raise DataError("class codes must fit unsigned 8-bit storage")
        if len(names) != len(codes):
            raise DataError("class_names must parallel class_codes")
        regions = {str(k): frozenset(int(c) for c in v) for k, v in self.region_defs.items()}
        for region, members in regions.items():
            if not members <= set(codes):
                raise DataError(f"region {region!r} uses codes outside the scheme")
            if codes[0] in members:
                raise DataError(f"region {region!r} must not include the background code")
        object.__setattr__(self, "class_codes", codes)
        object.__setattr__(self, "class_names", names)
        object.__setattr__(self, "region_defs", regions)

    @property
    def k(self) -> int:
        return len(self.class_codes)

    @property
    def background_code(self) -> int:
        return self.class_codes[0]

    def code_lookup(self) -> np.ndarray:
        """Array mapping code byte -> position in ``class_codes`` (-1 if absent)."""
        lut = np.full(256, -1, dtype=np.int16)
        for i, code in enumerate(self.class_codes):
            lut[code] = i
        return lut

    def to_dict(self) -> dict:
        # region_order pins presentation order against key-sorting serializers.
        return {
            "class_codes": list(self.class_codes),
            "class_names": list(self.class_names),
            "region_defs": {k: sorted(v) for k, v in self.region_defs.items()},
            "region_order": list(self.region_defs),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LabelScheme":
        order = d.get("region_order", list(d["region_defs"]))
        return cls(
            class_codes=tuple(d["class_codes"]),
            class_names=tuple(d["class_names"]),
            region_defs={k: frozenset(d["region_defs"][k]) for k in order},
        )


@dataclass(frozen=True)
class SegLabel:
    """3D categorical grid of integer class codes under a :class:`LabelScheme`."""

    data: np.ndarray
    scheme: LabelScheme = field(default_factory=LabelScheme)

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim != 3:
            raise DataError(f"label must be 3D, got {data.ndim}D")
        data = data.astype(np.uint8, casting="safe") if data.dtype != np.uint8 else data
        positions = self.scheme.code_lookup()[vectorize(data)]
        if (positions < 0).any():
            voxel = int(np.argmax(positions < 0))
            code = int(vectorize(data)[voxel])
            raise DataError(
                f"voxel {voxel} has code {code} not in scheme {self.scheme.class_codes}"
            )
        object.__setattr__(self, "data", _freeze(data))

    @property
    def shape(self) -> Shape3:
        return self.data.shape


@dataclass(frozen=True)
class BinaryMask:
    """One bit per voxel; same grid conventions as :class:`Volume`."""

    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=bool)
        if data.ndim != 3:
            raise DataError(f"mask must be 3D, got {data.ndim}D")
        object.__setattr__(self, "data", _freeze(data))

    @property
    def shape(self) -> Shape3:
        return self.data.shape

    def count(self) -> int:
        return int(self.data.sum())


@dataclass(frozen=True)
class OneHotMatrix:
    """Row-stochastic N x k matrix of per-voxel class probabilities.

    Rows follow the canonical vectorization order of the grid described by
    ``grid_shape`` (so row i is voxel i of :func:`vectorize`).
    """

    data: np.ndarray
    grid_shape: Shape3

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float32)
        if data.ndim != 2:
            raise DataError("one-hot matrix must be 2D")
        shape = tuple(int(s) for s in self.grid_shape)
        if int(np.prod(shape)) != data.shape[0]:
            raise DataError(
                f"row count {data.shape[0]} does not match grid shape {shape}"
            )
        if data.size and (data.min() < 0.0 or data.max() > 1.0):
            raise DataError("one-hot entries must lie in [0, 1]")
        sums = data.sum(axis=1, dtype=np.float64)
        if data.size and np.abs(sums - 1.0).max() > ROW_SUM_TOL:
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise DataError(f"row {bad} sums to {sums[bad]:.9f}, expected 1")
        object.__setattr__(self, "data", _freeze(data))
        object.__setattr__(self, "grid_shape", shape)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class CaseBundle:
    """One patient: ordered modality volumes plus a label (and optional soft label)."""

    case_id: str
    modalities: dict[str, Volume]
    label: SegLabel
    soft_label: OneHotMatrix | None = None

    def __post_init__(self) -> None:
        if not self.modalities:
            raise DataError("case bundle needs at least one modality")
        shapes = {v.shape for v in self.modalities.values()} | {self.label.shape}
        if len(shapes) != 1:
            raise DataError(f"case {self.case_id!r} mixes shapes {sorted(shapes)}")
        spacings = {v.spacing for v in self.modalities.values()}
        if len(spacings) != 1:
            raise DataError(f"case {self.case_id!r} mixes spacings {sorted(spacings)}")
        if self.soft_label is not None and self.soft_label.grid_shape != self.label.shape:
            raise DataError("soft label grid does not match case shape")

    @property
    def shape(self) -> Shape3:
        return self.label.shape

    @property
    def spacing(self) -> Spacing3:
        return next(iter(self.modalities.values())).spacing


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def zscore_normalize(vol: Volume) -> Volume:
    """Standardize a volume to zero mean and unit population std.

    Statistics are computed over all voxels of the volume.  A zero-variance
    input yields an all-zero volume and a :class:`DegenerateVolumeWarning`
    instead of an error, so batch runs survive blank inputs.
    """
    data = vol.data.astype(np.float64)
    mean = data.mean()
    std = data.std()  # population (1/N)
    if std == 0.0:
        warnings.warn(
            "zero-variance volume standardized to all zeros",
            DegenerateVolumeWarning,
            stacklevel=2,
        )
        return Volume(np.zeros(vol.shape, dtype=np.float32), vol.spacing)
    return Volume(((data - mean) / std).astype(np.float32), vol.spacing)


def encode_one_hot(seg: SegLabel) -> OneHotMatrix:
    """One-hot encode a hard label grid into an N x k indicator matrix.

    Row i is the indicator of voxel i's code position in the scheme's code
    order, with rows in canonical vectorization order.
    """
    codes = vectorize(seg.data)
    positions = seg.scheme.code_lookup()[codes]
    if (positions < 0).any():
        voxel = int(np.argmax(positions < 0))
        raise DataError(
            f"voxel {voxel} has code {int(codes[voxel])} not in scheme "
            f"{seg.scheme.class_codes}"
        )
    n = codes.size
    onehot = np.zeros((n, seg.scheme.k), dtype=np.float32)
    onehot[np.arange(n), positions] = 1.0
    return OneHotMatrix(onehot, seg.shape)


def decode_argmax(onehot: OneHotMatrix, scheme: LabelScheme) -> SegLabel:
    """Harden a (possibly soft) one-hot matrix back to class codes.

    Each voxel gets the code of its maximal row entry; ties break toward the
    lowest scheme index, which makes the decode deterministic.
    """
    if onehot.cols != scheme.k:
        raise DataError(
            f"one-hot has {onehot.cols} columns but scheme has {scheme.k} classes"
        )
    positions = np.argmax(onehot.data, axis=1)  # first max = lowest index
    codes = np.asarray(scheme.class_codes, dtype=np.uint8)[positions]
    return SegLabel(unvectorize(codes, onehot.grid_shape), scheme)


def region_mask(seg: SegLabel, region: str) -> BinaryMask:
    """Binary mask of the voxels whose code belongs to the named region."""
    if region not in seg.scheme.region_defs:
        raise DataError(
            f"unknown region {region!r}; scheme defines {sorted(seg.scheme.region_defs)}"
        )
    members = sorted(seg.scheme.region_defs[region])
    return BinaryMask(np.isin(seg.data, members))
