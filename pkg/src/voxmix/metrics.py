"""Segmentation evaluation: overlap proportions and surface distances.

All four indices are computed per named region (WT/TC/ET under the default
scheme) on binary masks derived from hard labels.  Conventions for the
degenerate mask cases are explicit and flagged rather than silently chosen:

* dice: both masks empty -> 1.0 with flag; exactly one empty -> 0.0;
* sensitivity: undefined (None) when the reference mask is empty;
* specificity: undefined when the reference covers the whole volume;
* hd95: undefined when either mask is empty.

The surface of a mask is its 6-connectivity boundary: mask voxels with at
least one face neighbor outside the mask, where the volume border counts as
outside.  Distances are Euclidean between boundary voxel centers, in mm via
the grid spacing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .core import BinaryMask, SegLabel, Spacing3, region_mask
from .errors import DataError

#: Flag tokens carried through reports and into the CSV flags column.
FLAG_EMPTY_PRED = "empty_pred"
FLAG_EMPTY_GT = "empty_gt"
FLAG_DICE_BOTH_EMPTY = "dice_both_empty"
FLAG_SENS_UNDEFINED = "sensitivity_undefined"
FLAG_SPEC_UNDEFINED = "specificity_undefined"
FLAG_HD95_UNDEFINED = "hd95_undefined"

_FACE_STRUCTURE = ndimage.generate_binary_structure(3, 1)


@dataclass(frozen=True)
class SurfacePointSet:
    """Boundary voxel centers of a mask, scaled to mm."""

    points: np.ndarray  # (n, 3) float64

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class RegionMetrics:
    dice: float
    sensitivity: float | None
    specificity: float | None
    hd95_mm: float | None
    flags: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "dice": self.dice,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "hd95_mm": self.hd95_mm,
            "flags": list(self.flags),
        }


@dataclass(frozen=True)
class MetricsReport:
    """All four indices for every region of one evaluated case."""

    case_id: str
    regions: dict[str, RegionMetrics] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "case_id": self.case_id,
            "regions": {r: m.to_dict() for r, m in self.regions.items()},
        }


# ---------------------------------------------------------------------------
# Overlap proportions
# ---------------------------------------------------------------------------


def _check_shapes(p: BinaryMask, t: BinaryMask) -> None:
    if p.shape != t.shape:
        raise DataError(f"mask shapes differ: {p.shape} vs {t.shape}")


def dice(p: BinaryMask, t: BinaryMask) -> float:
    """2|P and T| / (|P| + |T|); 1.0 when both masks are empty."""
    _check_shapes(p, t)
    np_, nt = p.count(), t.count()
    if np_ + nt == 0:
        return 1.0
    inter = int((p.data & t.data).sum())
    return 2.0 * inter / (np_ + nt)


def sensitivity(p: BinaryMask, t: BinaryMask) -> float | None:
    """|P and T| / |T|, or None when the reference mask is empty."""
    _check_shapes(p, t)
    nt = t.count()
    if nt == 0:
        return None
    inter = int((p.data & t.data).sum())
    return inter / nt


def specificity(p: BinaryMask, t: BinaryMask) -> float | None:
    """|~P and ~T| / |~T|, or None when the reference covers everything."""
    _check_shapes(p, t)
    t0 = ~t.data
    n0 = int(t0.sum())
    if n0 == 0:
        return None
    inter = int((~p.data & t0).sum())
    return inter / n0


# ---------------------------------------------------------------------------
# Surface distances
# ---------------------------------------------------------------------------


def boundary_voxels(mask: np.ndarray) -> np.ndarray:
    """Boolean grid of mask voxels with a 6-neighbor outside the mask.

    ``border_value=0`` makes the volume border read as outside, so a mask
    touching the border keeps its outermost shell.
    """
    eroded = ndimage.binary_erosion(mask, structure=_FACE_STRUCTURE, border_value=0)
    return mask & ~eroded


def surface_points(mask: BinaryMask, spacing: Spacing3 = (1.0, 1.0, 1.0)) -> SurfacePointSet:
    """Boundary voxel centers in mm."""
    if not mask.data.any():
        raise DataError("cannot extract the surface of an empty mask")
    idx = np.argwhere(boundary_voxels(mask.data))
    return SurfacePointSet(idx * np.asarray(spacing, dtype=np.float64))


def _nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    """Nearest-rank percentile of pre-sorted values: index ceil(q n) - 1."""
    n = sorted_values.size
    idx = int(np.ceil(q * n)) - 1
    return float(sorted_values[max(0, idx)])


def _joint_crop(p: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Crop both grids to the union bounding box plus one voxel of margin."""
    union = p | t
    sl = []
    for axis in range(3):
        other = tuple(a for a in range(3) if a != axis)
        idx = np.flatnonzero(union.any(axis=other))
        sl.append(slice(max(0, idx[0] - 1), min(union.shape[axis], idx[-1] + 2)))
    sl = tuple(sl)
    return p[sl], t[sl]


def _directed_distances(
    src_boundary: np.ndarray, dst_boundary: np.ndarray, spacing: Spacing3
) -> np.ndarray:
    """Sorted distances from each source boundary voxel to the nearest
    destination boundary voxel, via an exact Euclidean distance transform."""
    dist_to_dst = ndimage.distance_transform_edt(~dst_boundary, sampling=spacing)
    return np.sort(dist_to_dst[src_boundary])


def hausdorff_percentile(
    p: BinaryMask, t: BinaryMask, spacing: Spacing3 = (1.0, 1.0, 1.0), q: float = 0.95
) -> float | None:
    """max of the two directed nearest-rank q-percentile surface distances."""
    _check_shapes(p, t)
    if not p.data.any() or not t.data.any():
        return None
    pd, td = _joint_crop(p.data, t.data)
    pb = boundary_voxels(pd)
    tb = boundary_voxels(td)
    d_pt = _directed_distances(pb, tb, spacing)
    d_tp = _directed_distances(tb, pb, spacing)
    return max(_nearest_rank(d_pt, q), _nearest_rank(d_tp, q))


def hausdorff95(
    p: BinaryMask, t: BinaryMask, spacing: Spacing3 = (1.0, 1.0, 1.0)
) -> float | None:
    """95th-percentile symmetric Hausdorff surface distance in mm."""
    return hausdorff_percentile(p, t, spacing, q=0.95)


def hausdorff100(
    p: BinaryMask, t: BinaryMask, spacing: Spacing3 = (1.0, 1.0, 1.0)
) -> float | None:
    """Classic max-min Hausdorff surface distance in mm."""
    return hausdorff_percentile(p, t, spacing, q=1.0)


# ---------------------------------------------------------------------------
# Per-case evaluation and aggregation
# ---------------------------------------------------------------------------


def evaluate_case(
    pred: SegLabel,
    gt: SegLabel,
    spacing: Spacing3 = (1.0, 1.0, 1.0),
    case_id: str = "",
) -> MetricsReport:
    """All four indices for every region the scheme defines."""
    if pred.scheme != gt.scheme:
        raise DataError("prediction and reference use different label schemes")
    if pred.shape != gt.shape:
        raise DataError(f"shapes differ: {pred.shape} vs {gt.shape}")
    regions = {}
    for region in pred.scheme.region_defs:
        p = region_mask(pred, region)
        t = region_mask(gt, region)
        flags = []
        if p.count() == 0:
            flags.append(FLAG_EMPTY_PRED)
        if t.count() == 0:
            flags.append(FLAG_EMPTY_GT)
        d = dice(p, t)
        if p.count() == 0 and t.count() == 0:
            flags.append(FLAG_DICE_BOTH_EMPTY)
        sens = sensitivity(p, t)
        if sens is None:
            flags.append(FLAG_SENS_UNDEFINED)
        spec = specificity(p, t)
        if spec is None:
            flags.append(FLAG_SPEC_UNDEFINED)
        hd = hausdorff95(p, t, spacing)
        if hd is None:
            flags.append(FLAG_HD95_UNDEFINED)
        regions[region] = RegionMetrics(
            dice=d, sensitivity=sens, specificity=spec, hd95_mm=hd,
            flags=tuple(flags),
        )
    return MetricsReport(case_id=case_id, regions=regions)


METRIC_NAMES = ("dice", "sensitivity", "specificity", "hd95_mm")


def aggregate_reports(reports: list[MetricsReport]) -> dict:
    """Mean/median/quartiles per (region, metric), skipping undefined values.

    A column with no defined values keeps only its exclusion count.
    """
    if not reports:
        raise DataError("cannot aggregate zero reports")
    region_names = list(reports[0].regions)
    summary: dict = {"n_cases": len(reports), "regions": {}}
    for region in region_names:
        per_metric = {}
        for metric in METRIC_NAMES:
            values = []
            undefined = 0
            for rep in reports:
                value = getattr(rep.regions[region], metric)
                if value is None:
                    undefined += 1
                else:
                    values.append(float(value))
            stats: dict = {"n": len(values), "n_undefined": undefined}
            if values:
                arr = np.asarray(values)
                stats.update(
                    mean=float(arr.mean()),
                    median=float(np.median(arr)),
                    q1=float(np.percentile(arr, 25)),
                    q3=float(np.percentile(arr, 75)),
                )
            per_metric[metric] = stats
        summary["regions"][region] = per_metric
    return summary
