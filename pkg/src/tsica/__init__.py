"""Spatial and temporal ICA for 4D volumetric time series.

Whole-volume temporal ICA is made tractable by obtaining the leading
eigenpairs of the huge voxel-space covariance from the small Gram matrix
of time points.  The package bundles NIFTI-1/ANALYZE-7.5 I/O, PCA
whitening, kurtosis FastICA, phantom simulators and the component
characterization toolbox used to validate them.
"""

from . import analysis, eigen, fastica, pipeline, simulate, volio
from .eigen import (
    CenteredMatrix,
    DualEigens,
    ReducedBasis,
    WhitenedData,
    center_columns,
    gram_eigens,
    lift_eigenvectors,
    reduce_and_whiten,
    select_component_count,
)
from .fastica import (
    IcaDecomposition,
    UnmixingMatrix,
    extract_sources,
    fastica_kurtosis,
    mixing_in_data_space,
    reconstruct,
)
from .pipeline import (
    IcaRunConfig,
    MaskVolume,
    VoxelIndexMap,
    apply_mask,
    component_to_volume,
    run_ica,
    save_decomposition,
    smooth_gaussian,
    unroll,
)
from .simulate import (
    GroundTruth,
    TubePhantomSpec,
    simulate_event_related,
    simulate_multisignal,
    simulate_traveling_wave,
)
from .volio import (
    Volume4D,
    VolumeHeader,
    default_header,
    detect_format,
    read_header,
    read_volume,
    write_analyze,
    write_nifti,
)

__version__ = "0.1.0"
