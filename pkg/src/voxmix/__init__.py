"""Volumetric mixing augmentation and segmentation evaluation toolkit."""

from .augment import (
    AugSpec,
    apply_augmentations,
    brightness,
    default_aug_spec,
    elastic_distort,
    flip,
    gaussian_noise,
    rotate90,
)
from .core import (
    BinaryMask,
    CaseBundle,
    DegenerateVolumeWarning,
    LabelScheme,
    OneHotMatrix,
    SegLabel,
    Volume,
    decode_argmax,
    encode_one_hot,
    region_mask,
    unvectorize,
    vectorize,
    zscore_normalize,
)
from .errors import ConfigError, DataError, NoTumorError, VoxmixError
from .metrics import (
    MetricsReport,
    RegionMetrics,
    SurfacePointSet,
    aggregate_reports,
    dice,
    evaluate_case,
    hausdorff95,
    hausdorff100,
    sensitivity,
    specificity,
    surface_points,
)
from .mixers import (
    Lineage,
    MixMatrix,
    SyntheticCase,
    cutmix3d,
    map_tensor_to_matrix,
    mixup_whole,
    scalar_roi_mix,
    tensormixup,
)
from .patch import (
    BBox,
    PatchBundle,
    PatchProvenance,
    crop_back,
    crop_fixed,
    extract_tumor_patch,
    pad_for_inference,
    pad_to_min,
    reextract_patch,
    tumor_bbox,
)
from .phantom import PhantomParams, generate_phantom
from .pipeline import PipelineConfig, kfold_split
from .rng import (
    RNG_ALGORITHM,
    MixConfig,
    SeededRng,
    derive_case_rng,
    derive_seed,
    sample_beta,
    sample_mix_tensor,
    sample_pair,
)
from .storage import (
    CaseManifest,
    import_nifti,
    list_cases,
    read_case,
    read_manifest,
    write_case,
    write_report,
)

__version__ = "0.1.0"
