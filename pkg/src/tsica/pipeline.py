"""End-to-end ICA pipeline on 4D volumes.

Order of operations: optional Gaussian smoothing, masking, unrolling the
4D array into a 2D matrix (spatial case: voxels x times; temporal case:
times x voxels), column centering, component-count selection, PCA
reduction + whitening (through the Gram dual in the temporal case), and
kurtosis FastICA.  Component maps fold back into volumes through the
voxel index map.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import eigen, fastica
from .errors import EmptyMask, ExtentMismatch, IndexOutOfRange, NoComponent
from .fastica import IcaDecomposition
from .volio import Volume4D

log = logging.getLogger(__name__)

#: fallback component count when the automatic rule retains nothing
AUTO_FALLBACK_CAP = 20


@dataclass
class MaskVolume:
    """Boolean voxel inclusion map matching a volume's spatial extents."""

    mask: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mask)
        if m.ndim != 3:
            raise ExtentMismatch(f"mask must be 3D, got {m.ndim}D")
        self.mask = m.astype(bool)

    @property
    def extents(self) -> tuple[int, int, int]:
        return self.mask.shape

    @property
    def count(self) -> int:
        return int(np.sum(self.mask))

    @classmethod
    def full(cls, extents) -> "MaskVolume":
        return cls(np.ones(tuple(extents), dtype=bool))


@dataclass
class VoxelIndexMap:
    """Bijection between matrix column/row index and voxel coordinate.

    Canonical order is x fastest: flat index x + nx*(y + ny*z), restricted
    to the included voxels.
    """

    extents: tuple[int, int, int]
    flat_indices: np.ndarray  # sorted positions into the x-fastest raveling

    @classmethod
    def from_mask(cls, mask: MaskVolume) -> "VoxelIndexMap":
        flat = np.flatnonzero(mask.mask.ravel(order="F"))
        if flat.size == 0:
            raise EmptyMask("mask includes no voxels")
        return cls(mask.extents, flat)

    @property
    def count(self) -> int:
        return int(self.flat_indices.size)

    def coordinates(self, j: int) -> tuple[int, int, int]:
        x, y, z = np.unravel_index(self.flat_indices[j], self.extents, order="F")
        return int(x), int(y), int(z)

    def fold(self, values) -> np.ndarray:
        """Scatter per-voxel values into a 3D map, zeros outside the mask."""
        values = np.asarray(values, dtype=np.float64)
        if values.size != self.count:
            raise ExtentMismatch(
                f"expected {self.count} values, got {values.size}")
        out = np.zeros(int(np.prod(self.extents)), dtype=np.float64)
        out[self.flat_indices] = values
        return out.reshape(self.extents, order="F")


@dataclass
class IcaRunConfig:
    """Everything a pipeline run needs besides the data."""

    orientation: str = "temporal"          # spatial | temporal
    components: int | str = "auto"          # 'auto' or a fixed count
    seed: int = 0
    fwhm: tuple[float, float, float] = (0.0, 0.0, 0.0)  # mm per spatial axis
    scheme: str = "deflation"
    tol: float = fastica.DEFAULT_TOL
    max_iter: int = fastica.DEFAULT_MAX_ITER
    standardize: bool = False

    def __post_init__(self):
        if self.orientation not in ("spatial", "temporal"):
            raise ValueError(f"orientation must be spatial|temporal, got {self.orientation!r}")
        if self.components != "auto":
            if int(self.components) < 1:
                raise ValueError("fixed component count must be >= 1")
            self.components = int(self.components)
        if any(f < 0 for f in self.fwhm):
            raise ValueError("FWHM must be >= 0")


def apply_mask(volume: Volume4D, mask: MaskVolume) -> Volume4D:
    """Zero every excluded voxel across all time points."""
    if volume.extents[:3] != mask.extents:
        raise ExtentMismatch(
            f"volume spatial extents {volume.extents[:3]} != mask {mask.extents}")
    data = volume.data.copy()
    data[~mask.mask, :] = 0.0
    return Volume4D(data, volume.voxel_size, volume.time_step)


def _gaussian_kernel(sigma_vox: float) -> np.ndarray:
    """Discrete Gaussian truncated at 4 sigma, normalized to sum 1."""
    radius = int(math.floor(4.0 * sigma_vox))
    if radius < 1:
        return np.ones(1)
    offsets = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (offsets / sigma_vox) ** 2)
    return kernel / kernel.sum()


def smooth_gaussian(volume: Volume4D, fwhm) -> Volume4D:
    """Separable 3D Gaussian smoothing of every time point.

    ``fwhm`` is in millimetres per spatial axis and is converted to voxel
    units through the voxel size.  Outside the volume the kernel finds
    nothing: weights are renormalized over the in-volume support, so a
    constant volume stays constant up to the border.
    """
    fwhm = tuple(float(f) for f in np.broadcast_to(fwhm, (3,)))
    if all(f == 0.0 for f in fwhm):
        return volume
    if any(f < 0 for f in fwhm):
        raise ValueError("FWHM must be >= 0")

    factor = 2.0 * math.sqrt(2.0 * math.log(2.0))  # FWHM = factor * sigma
    data = volume.data.astype(np.float64, copy=True)
    support = np.ones(volume.extents[:3], dtype=np.float64)
    for axis, f in enumerate(fwhm):
        if f == 0.0:
            continue
        sigma = f / factor / volume.voxel_size[axis]
        kernel = _gaussian_kernel(sigma)
        if kernel.size == 1:
            continue
        data = ndimage.convolve1d(data, kernel, axis=axis, mode="constant", cval=0.0)
        support = ndimage.convolve1d(support, kernel, axis=axis, mode="constant", cval=0.0)
    data /= support[..., None]
    return Volume4D(data, volume.voxel_size, volume.time_step)


def unroll(volume: Volume4D, mask: MaskVolume, orientation: str
           ) -> tuple[np.ndarray, VoxelIndexMap]:
    """Flatten the masked volume into the 2D matrix for one ICA case.

    spatial: voxels x times (rows are observations over voxels);
    temporal: times x voxels.  Voxels follow the canonical x-fastest order.
    """
    if orientation not in ("spatial", "temporal"):
        raise ValueError(f"orientation must be spatial|temporal, got {orientation!r}")
    if volume.extents[:3] != mask.extents:
        raise ExtentMismatch(
            f"volume spatial extents {volume.extents[:3]} != mask {mask.extents}")
    vmap = VoxelIndexMap.from_mask(mask)
    nt = volume.extents[3]
    flat = volume.data.reshape(-1, nt, order="F")  # no copy: data is C-ordered 4D?
    matrix = flat[vmap.flat_indices, :]             # voxels x times, fresh array
    if orientation == "temporal":
        matrix = np.ascontiguousarray(matrix.T)
    return matrix, vmap


def fold_to_volume(vmap: VoxelIndexMap, values) -> np.ndarray:
    """Convenience alias for VoxelIndexMap.fold."""
    return vmap.fold(values)


def correlation_count_eigenvalues(matrix_voxels_by_time: np.ndarray) -> np.ndarray:
    """Eigenvalues feeding the automatic component-count rule.

    These come from the correlation matrix of the time-point variables
    (each time point standardized over voxels): its trace equals the
    number of time points, which is the regime where the greater-than-one
    rule is meaningful, and it stays tractable for any voxel count.
    """
    cm = eigen.center_columns(matrix_voxels_by_time, standardize=True,
                              orientation="spatial")
    return eigen.covariance_spectrum(cm)


def run_ica(volume: Volume4D, mask: MaskVolume | None,
            config: IcaRunConfig) -> IcaDecomposition:
    """Full pipeline run; returns the assembled decomposition."""
    if volume.extents[3] < 2:
        raise ValueError("need at least 2 time points")
    if mask is None:
        mask = MaskVolume.full(volume.extents[:3])
    if mask.count < 2:
        raise EmptyMask("need at least 2 voxels in the mask")

    vol = smooth_gaussian(volume, config.fwhm)
    matrix, vmap = unroll(vol, mask, config.orientation)

    if config.components == "auto":
        spatial_form = matrix if config.orientation == "spatial" else matrix.T
        count_eigs = correlation_count_eigenvalues(spatial_form)
        try:
            m = eigen.select_component_count(count_eigs, "auto")
        except NoComponent:
            m = min(volume.extents[3] - 1, AUTO_FALLBACK_CAP)
            log.warning("auto component rule retained nothing; falling back to %d", m)
    else:
        m = None  # chosen against the whitening spectrum below

    cm = eigen.center_columns(matrix, standardize=config.standardize,
                              orientation=config.orientation)
    spectrum = eigen.covariance_spectrum(cm)
    if m is None:
        m = eigen.select_component_count(spectrum, config.components)
    else:
        m = eigen.select_component_count(spectrum, m)

    Z, basis = eigen.reduce_and_whiten(cm, m)
    unmix = fastica.fastica_kurtosis(Z, m, seed=config.seed,
                                     max_iter=config.max_iter, tol=config.tol,
                                     scheme=config.scheme)
    S = fastica.extract_sources(Z, unmix)
    scales = fastica.source_scales(Z, unmix.W)
    A = unmix.W.T * scales[None, :]
    mixing = fastica.mixing_in_data_space(basis, A)

    return IcaDecomposition(
        S=S, A=A, mixing=mixing, basis=basis,
        orientation=config.orientation, seed=config.seed,
        unmixing=unmix, spectrum=spectrum, voxel_map=vmap,
    )


def component_to_volume(decomposition: IcaDecomposition, k: int) -> np.ndarray:
    """3D spatial expression of component k (1-based).

    Temporal runs fold the data-space mixing column (where temporal source
    k lives over the voxels); spatial runs fold the source itself.
    """
    m = decomposition.n_components
    if not 1 <= k <= m:
        raise IndexOutOfRange(f"component {k} outside 1..{m}")
    vmap = decomposition.voxel_map
    if vmap is None:
        raise ValueError("decomposition has no voxel index map")
    if decomposition.orientation == "temporal":
        return vmap.fold(decomposition.mixing[:, k - 1])
    return vmap.fold(decomposition.S[:, k - 1])


def component_timecourses(decomposition: IcaDecomposition) -> np.ndarray:
    """times x m matrix of the per-component time courses.

    Temporal runs: the sources; spatial runs: the data-space mixing
    columns (per-component weights over time).
    """
    if decomposition.orientation == "temporal":
        return decomposition.S
    return decomposition.mixing


def save_decomposition(decomposition: IcaDecomposition, outdir,
                       voxel_size=(1.0, 1.0, 1.0), time_step: float = 1.0,
                       container: str = "nii"):
    """Persist a decomposition: one volume per component map, a tabular
    time-course file and a key-value metadata file."""
    import os

    from . import volio
    from .analysis import write_timecourse_table

    os.makedirs(outdir, exist_ok=True)
    m = decomposition.n_components
    for k in range(1, m + 1):
        vol = Volume4D(component_to_volume(decomposition, k),
                       voxel_size, time_step)
        header = volio.default_header(vol, datatype_code=16,
                                      format_kind="nifti_single" if container == "nii"
                                      else ("nifti_pair" if container == "pair"
                                            else "analyze75"))
        stem = os.path.join(outdir, f"component_{k:02d}")
        if container == "nii":
            volio.write_nifti(vol, header, stem + ".nii", mode="single")
        elif container == "pair":
            volio.write_nifti(vol, header, stem, mode="pair")
        else:
            volio.write_analyze(vol, header, stem)

    tc = component_timecourses(decomposition)
    names = [f"component_{k}" for k in range(1, m + 1)]
    write_timecourse_table(os.path.join(outdir, "timecourses.tsv"),
                           names, [tc[:, j] for j in range(m)])

    unmix = decomposition.unmixing
    meta = [
        ("orientation", decomposition.orientation),
        ("components", str(m)),
        ("seed", str(decomposition.seed)),
        ("scheme", unmix.scheme),
        ("time_step", format(time_step, ".17g")),
        ("converged", " ".join(str(int(c)) for c in unmix.converged)),
        ("iterations", " ".join(str(int(i)) for i in unmix.iterations)),
        ("final_deltas", " ".join(format(d, ".6e") for d in unmix.deltas)),
        ("eigenvalues", " ".join(format(v, ".17g")
                                 for v in decomposition.spectrum[:20])),
    ]
    with open(os.path.join(outdir, "metadata.txt"), "w", encoding="ascii") as fh:
        for key, value in meta:
            fh.write(f"{key}={value}\n")


@dataclass
class StoredDecomposition:
    """What save_decomposition wrote, re-read for analysis."""

    timecourses: np.ndarray            # times x m
    names: list[str]
    maps: list[np.ndarray]             # 3D arrays, one per component
    metadata: dict[str, str]
    time_step: float


def load_decomposition(outdir) -> StoredDecomposition:
    import glob
    import os

    from . import volio
    from .analysis import read_timecourse_table

    names, tc = read_timecourse_table(os.path.join(outdir, "timecourses.tsv"))
    metadata = {}
    meta_path = os.path.join(outdir, "metadata.txt")
    if os.path.exists(meta_path):
        with open(meta_path, "r", encoding="ascii") as fh:
            for line in fh:
                if "=" in line:
                    key, _, value = line.strip().partition("=")
                    metadata[key] = value
    maps = []
    stems = sorted(glob.glob(os.path.join(outdir, "component_*.nii")))
    if not stems:
        stems = sorted(glob.glob(os.path.join(outdir, "component_*.hdr")))
    for path in stems:
        vol, _ = volio.read_volume(path)
        maps.append(vol.data[..., 0])
    time_step = float(metadata.get("time_step", "1"))
    return StoredDecomposition(tc, names, maps, metadata, time_step)
