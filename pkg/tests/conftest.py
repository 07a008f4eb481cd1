"""Shared builders for small randomized volumes, labels, and cases."""

import sys

import numpy as np
import pytest

from voxmix.core import CaseBundle, LabelScheme, SegLabel, Volume
from voxmix.phantom import PhantomParams

SCHEME = LabelScheme()


def pytest_terminal_summary(terminalreporter):
    """Emit one PASS/FAIL line per acceptance criterion after capture ends."""
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "VERDICTS", None) if mod else None
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


def random_seg(rng: np.random.Generator, shape, fg_prob: float = 0.1) -> SegLabel:
    """Random segmentation over the default codes with roughly fg_prob foreground."""
    codes = np.asarray(SCHEME.class_codes, dtype=np.uint8)
    fg = rng.random(shape) < fg_prob
    picks = rng.integers(1, len(codes), size=shape)
    data = np.where(fg, codes[picks], codes[0]).astype(np.uint8)
    return SegLabel(data, SCHEME)


def blob_seg(shape, lo, hi, code: int = 2) -> SegLabel:
    """Segmentation with one axis-aligned box of a single class."""
    data = np.zeros(shape, dtype=np.uint8)
    data[tuple(slice(a, b) for a, b in zip(lo, hi))] = code
    return SegLabel(data, SCHEME)


def random_case(
    rng: np.random.Generator,
    shape=(32, 32, 32),
    case_id: str = "case",
    modalities=("t1", "t1ce", "t2", "flair"),
    fg_prob: float = 0.1,
) -> CaseBundle:
    vols = {
        m: Volume(rng.normal(size=shape).astype(np.float32)) for m in modalities
    }
    return CaseBundle(case_id, vols, random_seg(rng, shape, fg_prob))


def tiny_params(seed: int = 0) -> PhantomParams:
    """Desk-size phantom: same structure, ~50x fewer voxels than the default."""
    return PhantomParams(
        shape=(64, 64, 52),
        brain_radii=(27.0, 27.0, 22.0),
        tumor_radii=(4.0, 6.0, 9.0),
        tumor_fraction_range=(0.01, 0.03),
        seed=seed,
    )


@pytest.fixture
def tiny_phantom_params() -> PhantomParams:
    return tiny_params()
