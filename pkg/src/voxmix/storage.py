"""Bit-exact case store, minimal NIfTI-1 ingestion, and report files.

Store layout: one directory per case holding little-endian raw payloads plus
a ``meta.json`` manifest.  The manifest is written last so its presence marks
a complete case (a crashed writer leaves no manifest, and the reader refuses
the directory).  Voxel payloads use the canonical vectorization order
(x fastest, z slowest), which is also how NIfTI-1 lays out its data section.
"""

from __future__ import annotations

import csv
import gzip
import hashlib
import io
import json
import re
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import (
    CaseBundle,
    LabelScheme,
    OneHotMatrix,
    SegLabel,
    Volume,
    unvectorize,
    vectorize,
)
from .errors import DataError
from .metrics import MetricsReport, RegionMetrics
from .mixers import Lineage, SyntheticCase

FORMAT_VERSION = 1

_NAME_RE = re.compile(r"^[a-zA-Z0-9_\-]+$")


def sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_json(path: Path, obj) -> None:
    """Canonical JSON: sorted keys, two-space indent, trailing newline."""
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_json(path: Path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


# ---------------------------------------------------------------------------
# Case store
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CaseManifest:
    case_id: str
    kind: str  # "case" or "synthetic"
    shape: tuple[int, int, int]
    spacing: tuple[float, float, float]
    scheme: LabelScheme
    modalities: dict[str, dict]  # name -> {file, sha256}
    label: dict | None
    soft_label: dict | None
    lineage: Lineage | None
    format_version: int = FORMAT_VERSION

    def to_dict(self) -> dict:
        return {
            "format_version": self.format_version,
            "case_id": self.case_id,
            "kind": self.kind,
            "shape": list(self.shape),
            "spacing": list(self.spacing),
            "scheme": self.scheme.to_dict(),
            "modalities": self.modalities,
            "label": self.label,
            "soft_label": self.soft_label,
            "lineage": self.lineage.to_dict() if self.lineage else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CaseManifest":
        version = d.get("format_version")
        if version != FORMAT_VERSION:
            raise DataError(f"unknown case format version {version!r}")
        return cls(
            case_id=d["case_id"],
            kind=d["kind"],
            shape=tuple(d["shape"]),
            spacing=tuple(d["spacing"]),
            scheme=LabelScheme.from_dict(d["scheme"]),
            modalities=d["modalities"],
            label=d.get("label"),
            soft_label=d.get("soft_label"),
            lineage=Lineage.from_dict(d["lineage"]) if d.get("lineage") else None,
            format_version=version,
        )


def _checked_name(name: str) -> str:
    if not _NAME_RE.match(name):
        raise DataError(f"unsafe file-name component {name!r}")
    return name


def _write_payload(path: Path, payload: bytes) -> str:
    with open(path, "wb") as fh:
        fh.write(payload)
    return hashlib.sha256(payload).hexdigest()


def write_case(case: CaseBundle | SyntheticCase, case_dir: Path) -> CaseManifest:
    """Persist one case; the manifest lands last as the commit marker."""
    case_dir = Path(case_dir)
    case_dir.mkdir(parents=True, exist_ok=True)

    synthetic = isinstance(case, SyntheticCase)
    scheme = case.scheme if synthetic else case.label.scheme
    modality_entries = {}
    for name, vol in case.modalities.items():
        fname = f"{_checked_name(name)}.f32"
        payload = vectorize(vol.data).astype("<f4").tobytes()
        modality_entries[name] = {
            "file": fname,
            "sha256": _write_payload(case_dir / fname, payload),
        }

    label = case.hard_label() if synthetic else case.label
    label_payload = vectorize(label.data).astype(np.uint8).tobytes()
    label_entry = {
        "file": "label.u8",
        "sha256": _write_payload(case_dir / "label.u8", label_payload),
    }

    soft = case.soft_label
    soft_entry = None
    if soft is not None:
        # Channel-major: all of class 0's plane, then class 1's, ...
        payload = np.ascontiguousarray(soft.data.T).astype("<f4").tobytes()
        soft_entry = {
            "file": "soft_label.f32",
            "sha256": _write_payload(case_dir / "soft_label.f32", payload),
            "layout": "channel-major",
            "classes": soft.cols,
        }

    manifest = CaseManifest(
        case_id=case.case_id,
        kind="synthetic" if synthetic else "case",
        shape=case.shape,
        spacing=case.spacing,
        scheme=scheme,
        modalities=modality_entries,
        label=label_entry,
        soft_label=soft_entry,
        lineage=case.lineage if synthetic else None,
    )
    write_json(case_dir / "meta.json", manifest.to_dict())
    return manifest


def read_manifest(case_dir: Path) -> CaseManifest:
    meta = Path(case_dir) / "meta.json"
    if not meta.is_file():
        raise DataError(f"no manifest in {case_dir} (incomplete or not a case)")
    return CaseManifest.from_dict(read_json(meta))


def _read_payload(case_dir: Path, entry: dict) -> bytes:
    path = Path(case_dir) / entry["file"]
    if not path.is_file():
        raise DataError(f"missing payload file {path}")
    payload = path.read_bytes()
    digest = hashlib.sha256(payload).hexdigest()
    if digest != entry["sha256"]:
        raise DataError(
            f"checksum mismatch for {path}: stored {entry['sha256'][:12]}..., "
            f"got {digest[:12]}..."
        )
    return payload


def read_case(case_dir: Path) -> CaseBundle:
    """Load and fully validate one stored case (shape, codes, checksums)."""
    case_dir = Path(case_dir)
    manifest = read_manifest(case_dir)
    shape = manifest.shape
    n = int(np.prod(shape))

    modalities = {}
    for name, entry in manifest.modalities.items():
        payload = _read_payload(case_dir, entry)
        flat = np.frombuffer(payload, dtype="<f4")
        if flat.size != n:
            raise DataError(
                f"modality {name!r} has {flat.size} voxels, expected {n}"
            )
        modalities[name] = Volume(unvectorize(flat, shape), manifest.spacing)

    payload = _read_payload(case_dir, manifest.label)
    flat = np.frombuffer(payload, dtype=np.uint8)
    if flat.size != n:
        raise DataError(f"label has {flat.size} voxels, expected {n}")
    label = SegLabel(unvectorize(flat, shape), manifest.scheme)

    soft = None
    if manifest.soft_label is not None:
        payload = _read_payload(case_dir, manifest.soft_label)
        k = int(manifest.soft_label["classes"])
        planes = np.frombuffer(payload, dtype="<f4")
        if planes.size != n * k:
            raise DataError(
                f"soft label has {planes.size} values, expected {n * k}"
            )
        soft = OneHotMatrix(planes.reshape(k, n).T, shape)

    return CaseBundle(manifest.case_id, modalities, label, soft_label=soft)


def list_cases(store_dir: Path) -> list[str]:
    """Sorted ids of complete cases (those with a manifest) in a store."""
    store_dir = Path(store_dir)
    if not store_dir.is_dir():
        raise DataError(f"case store {store_dir} does not exist")
    return sorted(
        p.name for p in store_dir.iterdir() if (p / "meta.json").is_file()
    )


# ---------------------------------------------------------------------------
# NIfTI-1 ingestion
# ---------------------------------------------------------------------------

_NIFTI_DTYPES = {2: "u1", 4: "i2", 16: "f4", 512: "u2"}
_HDR_SIZE = 348


def _read_nifti_bytes(path: Path) -> bytes:
    raw = Path(path).read_bytes()
    if raw[:2] == b"\x1f\x8b":
        raw = gzip.decompress(raw)
    return raw


def import_nifti(
    path: Path,
    as_label: bool | None = None,
    scheme: LabelScheme | None = None,
) -> Volume | SegLabel:
    """Read a single-file NIfTI-1 volume (optionally gzipped).

    Supports datatypes uint8, int16, uint16, and float32 with either byte
    order.  Dims and pixdim are honored; orientation and intensity-scaling
    header fields are ignored.  ``as_label`` overrides the default rule that
    uint8 payloads are segmentations and everything else is an intensity
    volume.
    """
    raw = _read_nifti_bytes(path)
    if len(raw) < _HDR_SIZE:
        raise DataError(f"{path}: file shorter than a NIfTI-1 header")

    (sizeof_hdr,) = struct.unpack_from("<i", raw, 0)
    if sizeof_hdr == _HDR_SIZE:
        order = "<"
    elif struct.unpack_from(">i", raw, 0)[0] == _HDR_SIZE:
        order = ">"
    else:
        raise DataError(f"{path}: not a NIfTI-1 file (sizeof_hdr != 348)")

    magic = struct.unpack_from("4s", raw, 344)[0]
    if magic != b"n+1\x00":
        raise DataError(f"{path}: unsupported magic {magic!r} (need single-file n+1)")

    dim = struct.unpack_from(f"{order}8h", raw, 40)
    datatype = struct.unpack_from(f"{order}h", raw, 70)[0]
    pixdim = struct.unpack_from(f"{order}8f", raw, 76)
    vox_offset = struct.unpack_from(f"{order}f", raw, 108)[0]

    ndim = dim[0]
    if ndim == 4 and dim[4] == 1:
        ndim = 3
    if ndim != 3:
        raise DataError(f"{path}: expected a 3D volume, header says {dim[0]}D")
    shape = tuple(int(d) for d in dim[1:4])
    if any(d < 1 or d > 32767 for d in shape):
        raise DataError(f"{path}: implausible dims {shape}")
    if datatype not in _NIFTI_DTYPES:
        raise DataError(
            f"{path}: unsupported datatype code {datatype} "
            f"(supported: {sorted(_NIFTI_DTYPES)})"
        )
    spacing = tuple(float(p) if p > 0 else 1.0 for p in pixdim[1:4])

    dtype = np.dtype(order + _NIFTI_DTYPES[datatype])
    n = int(np.prod(shape))
    offset = int(vox_offset)
    if offset < _HDR_SIZE or len(raw) < offset + n * dtype.itemsize:
        raise DataError(f"{path}: data section truncated")
    flat = np.frombuffer(raw, dtype=dtype, count=n, offset=offset)
    grid = unvectorize(flat, shape)

    is_label = datatype == 2 if as_label is None else as_label
    if is_label:
        return SegLabel(grid.astype(np.uint8), scheme or LabelScheme())
    return Volume(grid.astype(np.float32), spacing)


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

REPORT_HEADER = ("case_id", "region", "dice", "sensitivity", "specificity",
                 "hd95_mm", "flags")


def format_metric(value: float | None) -> str:
    """Canonical cell text: 6 significant digits, empty for undefined."""
    return "" if value is None else format(value, ".6g")


def _report_rows(reports: list[MetricsReport]) -> list[dict]:
    rows = []
    for rep in reports:
        for region, m in rep.regions.items():
            rows.append(
                {
                    "case_id": rep.case_id,
                    "region": region,
                    "dice": m.dice,
                    "sensitivity": m.sensitivity,
                    "specificity": m.specificity,
                    "hd95_mm": m.hd95_mm,
                    "flags": ";".join(m.flags),
                }
            )
    return rows


def write_report(reports: list[MetricsReport], path: Path, fmt: str = "csv") -> None:
    """Serialize per-region metric rows; JSON mirrors the CSV cells exactly."""
    if not reports:
        raise DataError("cannot write an empty report")
    path = Path(path)
    rows = _report_rows(reports)
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for row in rows:
            writer.writerow(
                [
                    row["case_id"],
                    row["region"],
                    format_metric(row["dice"]),
                    format_metric(row["sensitivity"]),
                    format_metric(row["specificity"]),
                    format_metric(row["hd95_mm"]),
                    row["flags"],
                ]
            )
        path.write_text(buf.getvalue(), encoding="utf-8")
    elif fmt == "json":
        mirrored = [
            {
                **row,
                "dice": _json_metric(row["dice"]),
                "sensitivity": _json_metric(row["sensitivity"]),
                "specificity": _json_metric(row["specificity"]),
                "hd95_mm": _json_metric(row["hd95_mm"]),
            }
            for row in rows
        ]
        write_json(path, mirrored)
    else:
        raise DataError(f"unknown report format {fmt!r}")


def _json_metric(value: float | None) -> float | None:
    return None if value is None else float(format(value, ".6g"))


def read_report_csv(path: Path) -> list[MetricsReport]:
    """Parse a report back; re-serializing the result is byte-identical."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        if header != REPORT_HEADER:
            raise DataError(f"unexpected report header {header}")
        per_case: dict[str, dict] = {}
        for row in reader:
            case_id, region, d, sens, spec, hd, flags = row
            per_case.setdefault(case_id, {})[region] = RegionMetrics(
                dice=float(d),
                sensitivity=float(sens) if sens else None,
                specificity=float(spec) if spec else None,
                hd95_mm=float(hd) if hd else None,
                flags=tuple(flags.split(";")) if flags else (),
            )
    return [
        MetricsReport(case_id=cid, regions=regions)
        for cid, regions in per_case.items()
    ]
