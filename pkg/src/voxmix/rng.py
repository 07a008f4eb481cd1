"""Deterministic random streams and Beta-tensor sampling.

All stochastic choices in the toolkit flow through :class:`SeededRng` so a
run is a pure function of its master seed.  Independent per-case streams are
derived by hashing the master seed together with a case label, which keeps
outputs stable under reordering and parallel scheduling.

The Gamma/Beta sampler is written out explicitly (Marsaglia-Tsang squeeze
with the shape boost for alpha < 1) rather than delegated, so the weight
tensors the mixers consume have a pinned, reproducible derivation.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .core import Shape3, unvectorize
from .errors import ConfigError

#: Identifier recorded in manifests so stored streams can be re-derived.
RNG_ALGORITHM = "pcg64-sha256-derive"

MIX_METHODS = ("tensormixup", "mixup", "scalar_roi", "cutmix3d")


class SeededRng:
    """A named PCG64 stream plus the derivation rule for child streams."""

    def __init__(self, seed: int, label: str = "master") -> None:
        self.seed = int(seed)
        self.label = label
        self._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed)))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def derive(self, label: str) -> "SeededRng":
        """Child stream keyed by ``label``; independent of sibling order."""
        child_seed = derive_seed(self.seed, label)
        child = SeededRng.__new__(SeededRng)
        child.seed = child_seed
        child.label = label
        child._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(child_seed))
        )
        return child

    # Convenience passthroughs -------------------------------------------------

    def integers(self, low: int, high: int | None = None) -> int:
        return int(self._gen.integers(low, high))

    def uniform(self, low: float = 0.0, high: float = 1.0, size=None):
        return self._gen.uniform(low, high, size=size)

    def normal(self, loc: float = 0.0, scale: float = 1.0, size=None):
        return self._gen.normal(loc, scale, size=size)

    def shuffle(self, seq: list) -> None:
        self._gen.shuffle(seq)


def derive_seed(master_seed: int, label: str) -> int:
    """Map (master seed, label) to a 128-bit child seed via SHA-256."""
    payload = f"{int(master_seed)}\x1f{label}".encode("utf-8")
    digest = hashlib.sha256(payload).digest()
    return int.from_bytes(digest[:16], "little")


def derive_case_rng(master_seed: int, label: str) -> SeededRng:
    """Independent stream for one unit of work (a pair, a case, a split)."""
    rng = SeededRng.__new__(SeededRng)
    rng.seed = derive_seed(master_seed, label)
    rng.label = label
    rng._gen = np.random.Generator(np.random.PCG64(np.random.SeedSequence(rng.seed)))
    return rng


# ---------------------------------------------------------------------------
# Gamma / Beta sampling
# ---------------------------------------------------------------------------


def _standard_gamma(gen: np.random.Generator, shape_param: float, n: int) -> np.ndarray:
    """n draws from Gamma(shape_param, 1) via Marsaglia-Tsang rejection.

    For shape >= 1 the squeeze accepts when v > 0 and
    log u < 0.5 x^2 + d - d v + d log v with d = shape - 1/3, c = 1/sqrt(9 d),
    v = (1 + c x)^3.  For shape < 1 we draw Gamma(shape + 1) and apply the
    boost G * U^(1/shape).
    """
    a = float(shape_param)
    if a <= 0.0:
        raise ConfigError(f"gamma shape must be positive, got {a}")
    boost = a < 1.0
    d = (a + 1.0 if boost else a) - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)

    out = np.empty(n, dtype=np.float64)
    filled = 0
    while filled < n:
        todo = n - filled
        # Acceptance rate is > 95%; a small overdraw keeps the loop short.
        batch = max(64, int(todo * 1.1))
        x = gen.standard_normal(batch)
        v = (1.0 + c * x) ** 3
        u = gen.uniform(0.0, 1.0, size=batch)
        with np.errstate(divide="ignore", invalid="ignore"):
            ok = (v > 0.0) & (np.log(u) < 0.5 * x * x + d - d * v + d * np.log(v))
        accepted = (d * v[ok])[:todo]
        out[filled : filled + accepted.size] = accepted
        filled += accepted.size
    if boost:
        u = gen.uniform(0.0, 1.0, size=n)
        out *= u ** (1.0 / a)
    return out


def _beta_draws(gen: np.random.Generator, alpha: float, n: int) -> np.ndarray:
    """n draws from Beta(alpha, alpha) as G1 / (G1 + G2)."""
    g1 = _standard_gamma(gen, alpha, n)
    g2 = _standard_gamma(gen, alpha, n)
    total = g1 + g2
    # Both gammas underflowing to 0 is astronomically rare but would divide
    # by zero; the symmetric midpoint is the distribution's mean.
    zero = total == 0.0
    if zero.any():
        total[zero] = 1.0
        g1[zero] = 0.5
    return g1 / total


def sample_beta(rng: SeededRng, alpha: float, size: int | tuple = 1) -> np.ndarray:
    """Beta(alpha, alpha) draws shaped ``size`` from the given stream."""
    if alpha <= 0.0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    shape = (size,) if isinstance(size, int) else tuple(size)
    n = int(np.prod(shape)) if shape else 1
    draws = _beta_draws(rng.generator, float(alpha), n)
    return draws.reshape(shape)


def sample_mix_tensor(rng: SeededRng, alpha: float, shape: Shape3) -> np.ndarray:
    """Per-voxel weight tensor A with i.i.d. Beta(alpha, alpha) entries.

    Entries are drawn in canonical vectorization order, so the tensor and its
    flat view agree under :func:`voxmix.core.vectorize`.
    """
    n = int(np.prod(shape))
    flat = sample_beta(rng, alpha, n)
    return unvectorize(flat.astype(np.float32), tuple(int(s) for s in shape))


def sample_pair(rng: SeededRng, n_cases: int) -> tuple[int, int]:
    """Uniform ordered pair of two distinct case indices."""
    if n_cases < 2:
        raise ConfigError(f"need at least 2 cases to form a pair, got {n_cases}")
    i = rng.integers(0, n_cases)
    j = rng.integers(0, n_cases - 1)
    if j >= i:
        j += 1
    return i, j


# ---------------------------------------------------------------------------
# Mixing configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixConfig:
    """Validated knobs for a mixing run."""

    alpha: float = 0.5
    method: str = "tensormixup"
    patch_size: Shape3 = (128, 128, 128)
    margin: int = 3
    seed: int = 0
    crop: str = "random"
    extra: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.alpha <= 0.0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")
        if self.method not in MIX_METHODS:
            raise ConfigError(
                f"unknown mix method {self.method!r}; expected one of {MIX_METHODS}"
            )
        patch = tuple(int(s) for s in self.patch_size)
        if len(patch) != 3 or any(s <= 0 for s in patch):
            raise ConfigError(f"patch_size must be three positive ints, got {patch}")
        if self.margin < 0:
            raise ConfigError(f"margin must be non-negative, got {self.margin}")
        if self.crop not in ("random", "center"):
            raise ConfigError(f"crop must be 'random' or 'center', got {self.crop!r}")
        object.__setattr__(self, "patch_size", patch)
        object.__setattr__(self, "margin", int(self.margin))
        object.__setattr__(self, "seed", int(self.seed))
