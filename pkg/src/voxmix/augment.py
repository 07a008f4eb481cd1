"""Classic volumetric augmentations: flips, quarter-turn rotations, noise,
brightness, and elastic distortion.

Geometric ops apply one transform jointly to every modality and the label;
intensity ops never touch the label.  All randomness flows through the
caller's stream, so a fixed seed reproduces the exact augmented case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .core import CaseBundle, SegLabel, Volume, encode_one_hot
from .errors import ConfigError, DataError
from .patch import PatchBundle
from .rng import SeededRng

AUG_KINDS = ("flip", "rotate90", "gaussian_noise", "brightness", "elastic")


def _validate_op(op: dict) -> dict:
    kind = op.get("kind")
    if kind not in AUG_KINDS:
        raise ConfigError(f"unknown augmentation kind {kind!r}; expected {AUG_KINDS}")
    out = dict(op)
    prob = float(out.get("prob", 1.0))
    if not 0.0 <= prob <= 1.0:
        raise ConfigError(f"prob must lie in [0, 1], got {prob}")
    out["prob"] = prob
    if kind == "flip":
        axis = int(out.get("axis", 0))
        if axis not in (0, 1, 2):
            raise ConfigError(f"flip axis must be 0, 1, or 2, got {axis}")
        out["axis"] = axis
    elif kind == "rotate90":
        axes = tuple(int(a) for a in out.get("axes", (0, 1)))
        turns = int(out.get("turns", 1))
        if len(axes) != 2 or axes[0] == axes[1] or not set(axes) <= {0, 1, 2}:
            raise ConfigError(f"rotate90 axes must be a distinct pair, got {axes}")
        if turns not in (1, 2, 3):
            raise ConfigError(f"rotate90 turns must be 1, 2, or 3, got {turns}")
        out["axes"] = axes
        out["turns"] = turns
    elif kind == "gaussian_noise":
        sigma = float(out.get("sigma", 0.1))
        if sigma < 0.0:
            raise ConfigError(f"noise sigma must be non-negative, got {sigma}")
        out["sigma"] = sigma
    elif kind == "brightness":
        lo, hi = (float(v) for v in out.get("scale_range", (0.9, 1.1)))
        if not 0.0 < lo <= hi:
            raise ConfigError(f"scale_range must satisfy 0 < lo <= hi, got ({lo}, {hi})")
        out["scale_range"] = (lo, hi)
    elif kind == "elastic":
        spacing = int(out.get("grid_spacing", 32))
        disp = float(out.get("max_displacement", 8.0))
        smooth = float(out.get("smoothing_sigma", 2.0))
        if spacing <= 0 or disp < 0.0 or smooth <= 0.0:
            raise ConfigError(
                f"elastic needs grid_spacing > 0, max_displacement >= 0, "
                f"smoothing_sigma > 0; got ({spacing}, {disp}, {smooth})"
            )
        out["grid_spacing"] = spacing
        out["max_displacement"] = disp
        out["smoothing_sigma"] = smooth
    return out


@dataclass(frozen=True)
class AugSpec:
    """Ordered augmentation recipe; each op optionally gated by a probability."""

    ops: tuple[dict, ...] = ()
    seed_label: str = "augment"

    def __post_init__(self) -> None:
        object.__setattr__(self, "ops", tuple(_validate_op(op) for op in self.ops))

    def to_dict(self) -> dict:
        return {"ops": [dict(op) for op in self.ops], "seed_label": self.seed_label}

    @classmethod
    def from_dict(cls, d: dict) -> "AugSpec":
        ops = d.get("ops", [])
        return cls(
            ops=tuple({**op, "axes": tuple(op["axes"])} if "axes" in op else op
                      for op in ops),
            seed_label=d.get("seed_label", "augment"),
        )


def default_aug_spec() -> AugSpec:
    """In-plane flips and quarter turns, mild noise/brightness, gentle warp."""
    return AugSpec(
        ops=(
            {"kind": "flip", "axis": 0, "prob": 0.5},
            {"kind": "flip", "axis": 1, "prob": 0.5},
            {"kind": "rotate90", "axes": (0, 1), "turns": 1, "prob": 0.5},
            {"kind": "gaussian_noise", "sigma": 0.1},
            {"kind": "brightness", "scale_range": (0.9, 1.1)},
            {"kind": "elastic", "grid_spacing": 32, "max_displacement": 8.0,
             "smoothing_sigma": 2.0},
        )
    )


# ---------------------------------------------------------------------------
# Bundle plumbing
# ---------------------------------------------------------------------------

Bundle = PatchBundle | CaseBundle


def _rebuild(bundle: Bundle, modalities: dict[str, Volume], label: SegLabel) -> Bundle:
    if isinstance(bundle, PatchBundle):
        return PatchBundle(
            modalities=modalities,
            label=label,
            onehot=encode_one_hot(label),
            provenance=bundle.provenance,
        )
    return CaseBundle(bundle.case_id, modalities, label)


def _transform_all(bundle: Bundle, img_fn, label_fn) -> Bundle:
    modalities = {
        name: Volume(img_fn(vol.data), vol.spacing)
        for name, vol in bundle.modalities.items()
    }
    label = SegLabel(label_fn(bundle.label.data), bundle.label.scheme)
    return _rebuild(bundle, modalities, label)


# ---------------------------------------------------------------------------
# Geometric ops
# ---------------------------------------------------------------------------


def flip(bundle: Bundle, axis: int) -> Bundle:
    """Mirror every modality and the label along one axis."""
    if axis not in (0, 1, 2):
        raise DataError(f"flip axis must be 0, 1, or 2, got {axis}")
    fn = lambda d: np.flip(d, axis=axis).copy()
    return _transform_all(bundle, fn, fn)


def rotate90(bundle: Bundle, axes: tuple[int, int] = (0, 1), turns: int = 1) -> Bundle:
    """Quarter-turn rotation in the plane of ``axes``, applied jointly."""
    axes = tuple(int(a) for a in axes)
    if len(axes) != 2 or axes[0] == axes[1] or not set(axes) <= {0, 1, 2}:
        raise DataError(f"rotate90 axes must be a distinct pair, got {axes}")
    if turns % 4 == 0:
        return bundle
    fn = lambda d: np.ascontiguousarray(np.rot90(d, k=turns, axes=axes))
    return _transform_all(bundle, fn, fn)


# ---------------------------------------------------------------------------
# Intensity ops
# ---------------------------------------------------------------------------


def gaussian_noise(vol: Volume, sigma: float, rng: SeededRng) -> Volume:
    """Add i.i.d. zero-mean Gaussian noise; sigma 0 is the identity."""
    if sigma < 0.0:
        raise ConfigError(f"noise sigma must be non-negative, got {sigma}")
    if sigma == 0.0:
        return vol
    noise = rng.normal(0.0, sigma, size=vol.shape).astype(np.float32)
    return Volume(vol.data + noise, vol.spacing)


def brightness(vol: Volume, scale: float) -> Volume:
    """Multiply every voxel by a positive scale factor."""
    if scale <= 0.0:
        raise ConfigError(f"brightness scale must be positive, got {scale}")
    return Volume(vol.data * np.float32(scale), vol.spacing)


# ---------------------------------------------------------------------------
# Elastic distortion
# ---------------------------------------------------------------------------


def sample_displacement_field(
    shape: tuple[int, int, int],
    grid_spacing: int,
    max_displacement: float,
    smoothing_sigma: float,
    rng: SeededRng,
) -> np.ndarray:
    """Smooth per-voxel displacement field, shape (3, dx, dy, dz).

    Node displacements are uniform in [-max_displacement, +max_displacement]
    per component; smoothing and trilinear upsampling are both convex
    averages, so no component ever exceeds max_displacement.
    """
    nodes = tuple(int(np.ceil((d - 1) / grid_spacing)) + 1 for d in shape)
    coarse = rng.uniform(-max_displacement, max_displacement, size=(3, *nodes))
    for c in range(3):
        coarse[c] = ndimage.gaussian_filter(coarse[c], sigma=smoothing_sigma, mode="nearest")
    axes_coords = np.meshgrid(
        *(np.arange(d, dtype=np.float64) / grid_spacing for d in shape), indexing="ij"
    )
    field = np.empty((3, *shape), dtype=np.float32)
    for c in range(3):
        field[c] = ndimage.map_coordinates(
            coarse[c], axes_coords, order=1, mode="nearest"
        )
    return field


def elastic_distort(
    bundle: Bundle,
    rng: SeededRng,
    grid_spacing: int = 32,
    max_displacement: float = 8.0,
    smoothing_sigma: float = 2.0,
) -> Bundle:
    """Warp a bundle with one shared smooth displacement field.

    Images are resampled trilinearly with out-of-bounds reads as 0; the label
    is resampled nearest-neighbor with out-of-bounds reads as background, so
    no new class codes can appear.
    """
    if grid_spacing <= 0 or max_displacement < 0.0 or smoothing_sigma <= 0.0:
        raise ConfigError("invalid elastic parameters")
    shape = bundle.label.shape
    if max_displacement == 0.0:
        return bundle
    field = sample_displacement_field(
        shape, grid_spacing, max_displacement, smoothing_sigma, rng
    )
    base = np.meshgrid(*(np.arange(d, dtype=np.float64) for d in shape), indexing="ij")
    coords = [base[c] + field[c] for c in range(3)]

    bg = bundle.label.scheme.background_code
    img_fn = lambda d: ndimage.map_coordinates(
        d, coords, order=1, mode="constant", cval=0.0
    ).astype(np.float32)
    label_fn = lambda d: ndimage.map_coordinates(
        d, coords, order=0, mode="constant", cval=bg
    )
    return _transform_all(bundle, img_fn, label_fn)


# ---------------------------------------------------------------------------
# Recipe application
# ---------------------------------------------------------------------------


def apply_augmentations(bundle: Bundle, spec: AugSpec, rng: SeededRng) -> Bundle:
    """Run an augmentation recipe in order against one bundle."""
    out = bundle
    for op in spec.ops:
        if op["prob"] < 1.0 and rng.uniform() >= op["prob"]:
            continue
        kind = op["kind"]
        if kind == "flip":
            out = flip(out, op["axis"])
        elif kind == "rotate90":
            out = rotate90(out, op["axes"], op["turns"])
        elif kind == "gaussian_noise":
            modalities = {
                name: gaussian_noise(vol, op["sigma"], rng)
                for name, vol in out.modalities.items()
            }
            out = _rebuild(out, modalities, out.label)
        elif kind == "brightness":
            lo, hi = op["scale_range"]
            scale = float(rng.uniform(lo, hi))
            modalities = {
                name: brightness(vol, scale) for name, vol in out.modalities.items()
            }
            out = _rebuild(out, modalities, out.label)
        elif kind == "elastic":
            out = elastic_distort(
                out,
                rng,
                grid_spacing=op["grid_spacing"],
                max_displacement=op["max_displacement"],
                smoothing_sigma=op["smoothing_sigma"],
            )
    return out
