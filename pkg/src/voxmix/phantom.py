"""Seed-deterministic synthetic brain cases with a known nested tumor.

A phantom is a brain ellipsoid inside an otherwise empty volume, carrying a
spherical tumor built from three concentric bands: a necrotic core (code 1),
an enhancing rim around it (code 4), and an edema shell outside (code 2).
The nesting makes ET within TC within WT true by construction, and the
default geometry puts the whole tumor at about 1.5% of the volume, matching
the scale the evaluation regions are designed for.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import CaseBundle, LabelScheme, SegLabel, Shape3, Volume
from .errors import ConfigError
from .rng import SeededRng

#: Tissue mean intensities per modality: distinct, loosely MRI-flavored
#: contrasts (contrast agent brightens the rim, fluid lights up t2/flair).
DEFAULT_TISSUE_MEANS = {
    "t1": {"brain": 70.0, "edema": 55.0, "necrosis": 35.0, "enhancing": 80.0},
    "t1ce": {"brain": 70.0, "edema": 60.0, "necrosis": 30.0, "enhancing": 110.0},
    "t2": {"brain": 55.0, "edema": 95.0, "necrosis": 85.0, "enhancing": 70.0},
    "flair": {"brain": 50.0, "edema": 100.0, "necrosis": 60.0, "enhancing": 75.0},
}


@dataclass(frozen=True)
class PhantomParams:
    """Geometry, contrast, and seed for one synthetic case."""

    shape: Shape3 = (240, 240, 155)
    brain_radii: tuple[float, float, float] = (100.0, 100.0, 65.0)
    # (necrotic core, enhancing rim outer, edema outer) radii in voxels.
    tumor_radii: tuple[float, float, float] = (14.0, 20.0, 32.0)
    tissue_means: dict[str, dict[str, float]] = field(
        default_factory=lambda: {m: dict(v) for m, v in DEFAULT_TISSUE_MEANS.items()}
    )
    noise_sigma: float = 2.0
    tumor_fraction_range: tuple[float, float] = (0.01, 0.03)
    seed: int = 0

    def __post_init__(self) -> None:
        shape = tuple(int(s) for s in self.shape)
        brain = tuple(float(r) for r in self.brain_radii)
        tumor = tuple(float(r) for r in self.tumor_radii)
        if len(shape) != 3 or any(s < 8 for s in shape):
            raise ConfigError(f"phantom shape too small: {shape}")
        if any(r <= 0 for r in brain) or any(r <= 0 for r in tumor):
            raise ConfigError("all radii must be positive")
        if not tumor[0] < tumor[1] < tumor[2]:
            raise ConfigError(f"tumor radii must be strictly nested, got {tumor}")
        center = tuple((s - 1) / 2.0 for s in shape)
        if any(r > c for r, c in zip(brain, center)):
            raise ConfigError(f"brain radii {brain} do not fit inside volume {shape}")
        if tumor[2] >= min(brain):
            raise ConfigError(
                f"edema radius {tumor[2]} cannot fit inside brain radii {brain}"
            )
        if self.noise_sigma < 0:
            raise ConfigError(f"noise sigma must be non-negative, got {self.noise_sigma}")
        lo, hi = self.tumor_fraction_range
        expected = (4.0 / 3.0) * np.pi * tumor[2] ** 3 / float(np.prod(shape))
        if not lo <= expected <= hi:
            raise ConfigError(
                f"tumor geometry yields fraction {expected:.4f}, outside "
                f"configured range ({lo}, {hi})"
            )
        object.__setattr__(self, "shape", shape)
        object.__setattr__(self, "brain_radii", brain)
        object.__setattr__(self, "tumor_radii", tumor)
        object.__setattr__(self, "seed", int(self.seed))


def _ellipse_sqnorm(shape: Shape3, center, radii) -> np.ndarray:
    x, y, z = np.ogrid[: shape[0], : shape[1], : shape[2]]
    return (
        ((x - center[0]) / radii[0]) ** 2
        + ((y - center[1]) / radii[1]) ** 2
        + ((z - center[2]) / radii[2]) ** 2
    )


def _draw_tumor_center(params: PhantomParams, rng: SeededRng) -> tuple[float, ...]:
    """Uniform center such that the whole edema sphere stays inside the brain.

    Sufficient containment: ellipse-norm(center) + r_edema / min(brain_radii)
    <= 1.  Rejection sampling over the brain's bounding box terminates fast
    because the accepted core is a sizable fraction of the box.
    """
    center = tuple((s - 1) / 2.0 for s in params.shape)
    bound = 1.0 - params.tumor_radii[2] / min(params.brain_radii)
    for _ in range(10_000):
        cand = tuple(
            c + float(rng.uniform(-r, r))
            for c, r in zip(center, params.brain_radii)
        )
        sq = sum(
            ((p - c) / r) ** 2
            for p, c, r in zip(cand, center, params.brain_radii)
        )
        if sq <= bound * bound:
            return cand
    raise ConfigError("could not place the tumor inside the brain (degenerate geometry)")


def generate_phantom(params: PhantomParams, case_id: str = "phantom") -> CaseBundle:
    """Build one fully deterministic synthetic case from its parameters."""
    rng = SeededRng(params.seed, label=case_id)
    shape = params.shape
    center = tuple((s - 1) / 2.0 for s in shape)

    brain = _ellipse_sqnorm(shape, center, params.brain_radii) <= 1.0
    tumor_center = _draw_tumor_center(params, rng)

    x, y, z = np.ogrid[: shape[0], : shape[1], : shape[2]]
    r_sq = (
        (x - tumor_center[0]) ** 2
        + (y - tumor_center[1]) ** 2
        + (z - tumor_center[2]) ** 2
    )
    r_core, r_rim, r_edema = params.tumor_radii
    label = np.zeros(shape, dtype=np.uint8)
    label[r_sq <= r_edema**2] = 2
    label[r_sq <= r_rim**2] = 4
    label[r_sq <= r_core**2] = 1

    bands = {
        "edema": label == 2,
        "enhancing": label == 4,
        "necrosis": label == 1,
    }
    modalities = {}
    for name, means in params.tissue_means.items():
        img = np.zeros(shape, dtype=np.float32)
        img[brain] = means["brain"]
        for tissue, mask in bands.items():
            img[mask] = means[tissue]
        if params.noise_sigma > 0:
            noise = rng.normal(0.0, params.noise_sigma, size=shape).astype(np.float32)
            img[brain] += noise[brain]
        modalities[name] = Volume(img)

    return CaseBundle(case_id, modalities, SegLabel(label, LabelScheme()))
