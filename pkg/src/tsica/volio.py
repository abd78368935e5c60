"""Reading and writing of ANALYZE-7.5 and NIFTI-1 volumes.

Supports single-file NIFTI (``.nii``), NIFTI pairs and ANALYZE pairs
(``.hdr``/``.img``), in either byte order, with automatic detection from
the magic and header-size fields.  Samples are always decoded to float64
after slope/intercept scaling and held in canonical (x, y, z, t) order
with x fastest on disk.
"""

from __future__ import annotations

import os
import struct
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    HeaderVolumeMismatch,
    SizeMismatch,
    TruncatedData,
    TruncatedHeader,
    UnrecognizedFormat,
    UnsupportedDatatype,
)

HEADER_SIZE = 348
NIFTI_SINGLE_OFFSET = 352

# datatype code -> numpy base dtype (without byte order)
DATATYPE_CODES = {
    2: "u1",    # unsigned char
    4: "i2",    # signed short
    8: "i4",    # signed int
    16: "f4",   # float
    64: "f8",   # double
}

_ENDIAN_CHAR = {"little": "<", "big": ">"}

_NIFTI1_FIELDS = [
    ("sizeof_hdr", "i4"),
    ("data_type", "S10"),
    ("db_name", "S18"),
    ("extents", "i4"),
    ("session_error", "i2"),
    ("regular", "S1"),
    ("dim_info", "u1"),
    ("dim", "i2", (8,)),
    ("intent_p1", "f4"),
    ("intent_p2", "f4"),
    ("intent_p3", "f4"),
    ("intent_code", "i2"),
    ("datatype", "i2"),
    ("bitpix", "i2"),
    ("slice_start", "i2"),
    ("pixdim", "f4", (8,)),
    ("vox_offset", "f4"),
    ("scl_slope", "f4"),
    ("scl_inter", "f4"),
    ("slice_end", "i2"),
    ("slice_code", "u1"),
    ("xyzt_units", "u1"),
    ("cal_max", "f4"),
    ("cal_min", "f4"),
    ("slice_duration", "f4"),
    ("toffset", "f4"),
    ("glmax", "i4"),
    ("glmin", "i4"),
    ("descrip", "S80"),
    ("aux_file", "S24"),
    ("qform_code", "i2"),
    ("sform_code", "i2"),
    ("quatern_b", "f4"),
    ("quatern_c", "f4"),
    ("quatern_d", "f4"),
    ("qoffset_x", "f4"),
    ("qoffset_y", "f4"),
    ("qoffset_z", "f4"),
    ("srow_x", "f4", (4,)),
    ("srow_y", "f4", (4,)),
    ("srow_z", "f4", (4,)),
    ("intent_name", "S16"),
    ("magic", "S4"),
]

_ANALYZE_FIELDS = [
    ("sizeof_hdr", "i4"),
    ("data_type", "S10"),
    ("db_name", "S18"),
    ("extents", "i4"),
    ("session_error", "i2"),
    ("regular", "S1"),
    ("hkey_un0", "S1"),
    ("dim", "i2", (8,)),
    ("vox_units", "S4"),
    ("cal_units", "S8"),
    ("unused1", "i2"),
    ("datatype", "i2"),
    ("bitpix", "i2"),
    ("dim_un0", "i2"),
    ("pixdim", "f4", (8,)),
    ("vox_offset", "f4"),
    ("funused1", "f4"),
    ("funused2", "f4"),
    ("funused3", "f4"),
    ("cal_max", "f4"),
    ("cal_min", "f4"),
    ("compressed", "i4"),
    ("verified", "i4"),
    ("glmax", "i4"),
    ("glmin", "i4"),
    ("descrip", "S80"),
    ("aux_file", "S24"),
    ("orient", "S1"),
    ("originator", "S10"),
    ("generated", "S10"),
    ("scannum", "S10"),
    ("patient_id", "S10"),
    ("exp_date", "S10"),
    ("exp_time", "S10"),
    ("hist_un0", "S3"),
    ("views", "i4"),
    ("vols_added", "i4"),
    ("start_field", "i4"),
    ("field_skip", "i4"),
    ("omax", "i4"),
    ("omin", "i4"),
    ("smax", "i4"),
    ("smin", "i4"),
]


def _header_dtype(fields, endianness):
    bo = _ENDIAN_CHAR[endianness]
    spec = []
    for f in fields:
        if len(f) == 2:
            name, fmt = f
            spec.append((name, bo + fmt))
        else:
            name, fmt, shape = f
            spec.append((name, bo + fmt, shape))
    dt = np.dtype(spec)
    assert dt.itemsize == HEADER_SIZE
    return dt


def _fields_for(format_kind):
    return _ANALYZE_FIELDS if format_kind == "analyze75" else _NIFTI1_FIELDS


@dataclass
class Volume4D:
    """Dense 4D intensity array, shape (nx, ny, nz, nt), float64.

    The flat on-disk sample order corresponds to Fortran order of this
    array: index x + nx*(y + ny*(z + nz*t)).
    """

    data: np.ndarray
    voxel_size: tuple[float, float, float] = (1.0, 1.0, 1.0)
    time_step: float = 1.0

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        while arr.ndim < 4:
            arr = arr[..., np.newaxis]
        if arr.ndim != 4:
            raise SizeMismatch(f"expected at most 4 dimensions, got {arr.ndim}")
        self.data = arr

    @property
    def extents(self) -> tuple[int, int, int, int]:
        return self.data.shape


@dataclass
class VolumeHeader:
    """Parsed header fields shared by ANALYZE-7.5 and NIFTI-1.

    ``raw`` keeps the original 348 header bytes (in the file's byte order)
    so that fields this package does not interpret, including the
    quaternion/affine orientation block, survive a rewrite untouched.
    """

    format_kind: str                       # analyze75 | nifti_single | nifti_pair
    dims: tuple[int, ...]
    datatype_code: int
    voxel_size: tuple[float, float, float] = (1.0, 1.0, 1.0)
    time_step: float = 1.0
    scl_slope: float = 1.0
    scl_inter: float = 0.0
    endianness: str = "little"
    vox_offset: int = 0
    raw: bytes | None = None
    notes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.format_kind not in ("analyze75", "nifti_single", "nifti_pair"):
            raise ValueError(f"unknown format_kind {self.format_kind!r}")
        if self.endianness not in _ENDIAN_CHAR:
            raise ValueError(f"endianness must be 'little' or 'big', got {self.endianness!r}")
        if self.datatype_code not in DATATYPE_CODES:
            raise UnsupportedDatatype(f"datatype code {self.datatype_code} not supported")
        dims = tuple(int(d) for d in self.dims)
        if not 1 <= len(dims) <= 4 or any(d < 1 for d in dims):
            raise SizeMismatch(f"dims must be 1..4 positive extents, got {dims}")
        self.dims = dims

    @property
    def dims4(self) -> tuple[int, int, int, int]:
        return tuple(self.dims) + (1,) * (4 - len(self.dims))

    @property
    def sample_dtype(self) -> np.dtype:
        return np.dtype(_ENDIAN_CHAR[self.endianness] + DATATYPE_CODES[self.datatype_code])


def default_header(volume: Volume4D, datatype_code: int = 64,
                   format_kind: str = "nifti_single",
                   endianness: str = "little") -> VolumeHeader:
    """Build a header consistent with ``volume`` for writing."""
    offset = NIFTI_SINGLE_OFFSET if format_kind == "nifti_single" else 0
    return VolumeHeader(
        format_kind=format_kind,
        dims=volume.extents,
        datatype_code=datatype_code,
        voxel_size=tuple(float(v) for v in volume.voxel_size),
        time_step=float(volume.time_step),
        endianness=endianness,
        vox_offset=offset,
    )


def _header_path(path: str) -> str:
    root, ext = os.path.splitext(path)
    if ext.lower() == ".img":
        return root + ".hdr"
    return path


def _image_path(path: str) -> str:
    root, ext = os.path.splitext(path)
    if ext.lower() in (".hdr", ".img"):
        return root + ".img"
    return path


def _pair_paths(path: str) -> tuple[str, str]:
    root, ext = os.path.splitext(path)
    base = root if ext.lower() in (".hdr", ".img", ".nii") else path
    return base + ".hdr", base + ".img"


def detect_format(source) -> tuple[str, str]:
    """Identify container format and byte order of a header file.

    ``source`` is a path (``.nii``, ``.hdr`` or ``.img``) or the first 348
    header bytes.  Returns (format_kind, endianness).
    """
    if isinstance(source, (bytes, bytearray)):
        head = bytes(source[:HEADER_SIZE])
    else:
        with open(_header_path(os.fspath(source)), "rb") as fh:
            head = fh.read(HEADER_SIZE)
    if len(head) < HEADER_SIZE:
        raise UnrecognizedFormat(
            f"header is {len(head)} bytes, need at least {HEADER_SIZE}")

    magic = head[344:348]
    endianness = None
    for name, fmt in (("little", "<i"), ("big", ">i")):
        if struct.unpack(fmt, head[:4])[0] == HEADER_SIZE:
            endianness = name
            break
    if endianness is None:
        raise UnrecognizedFormat(
            "header-size field is not 348 under either byte order")
    if magic == b"n+1\x00":
        return "nifti_single", endianness
    if magic == b"ni1\x00":
        return "nifti_pair", endianness
    return "analyze75", endianness


def read_header(path) -> VolumeHeader:
    """Parse an ANALYZE or NIFTI header, keeping unknown fields opaque."""
    path = _header_path(os.fspath(path))
    with open(path, "rb") as fh:
        head = fh.read(HEADER_SIZE)
    if len(head) < HEADER_SIZE:
        raise TruncatedHeader(f"{path}: header is {len(head)} bytes")
    format_kind, endianness = detect_format(head)
    rec = np.frombuffer(head, dtype=_header_dtype(_fields_for(format_kind), endianness))[0]

    datatype_code = int(rec["datatype"])
    if datatype_code not in DATATYPE_CODES:
        raise UnsupportedDatatype(
            f"{path}: datatype code {datatype_code} not supported "
            f"(supported: {sorted(DATATYPE_CODES)})")

    ndim = int(rec["dim"][0])
    if not 1 <= ndim <= 4:
        raise TruncatedHeader(f"{path}: dim[0] = {ndim}, only 1..4 supported")
    dims = tuple(int(d) for d in rec["dim"][1:1 + ndim])
    if any(d < 1 for d in dims):
        raise TruncatedHeader(f"{path}: non-positive extent in {dims}")

    pixdim = np.abs(np.asarray(rec["pixdim"], dtype=np.float64))
    voxel_size = tuple(float(pixdim[i]) if pixdim[i] > 0 else 1.0 for i in (1, 2, 3))
    time_step = float(pixdim[4]) if pixdim[4] > 0 else 1.0

    notes = []
    if format_kind == "analyze75":
        scl_slope, scl_inter = 1.0, 0.0
    else:
        scl_slope = float(rec["scl_slope"])
        scl_inter = float(rec["scl_inter"])
        if scl_slope == 0.0:
            scl_slope = 1.0
            notes.append("scl_slope 0 treated as 1")

    vox_offset = int(rec["vox_offset"])
    if format_kind == "nifti_single":
        if vox_offset < NIFTI_SINGLE_OFFSET:
            raise TruncatedHeader(
                f"{path}: vox_offset {vox_offset} < {NIFTI_SINGLE_OFFSET}")
    elif vox_offset < 0:
        vox_offset = 0

    return VolumeHeader(
        format_kind=format_kind,
        dims=dims,
        datatype_code=datatype_code,
        voxel_size=voxel_size,
        time_step=time_step,
        scl_slope=scl_slope,
        scl_inter=scl_inter,
        endianness=endianness,
        vox_offset=vox_offset,
        raw=head,
        notes=tuple(notes),
    )


def read_volume(path) -> tuple[Volume4D, VolumeHeader]:
    """Read samples and header; samples come back scaled, float64."""
    path = os.fspath(path)
    header = read_header(path)
    if header.format_kind == "nifti_single":
        data_path, offset = _header_path(path), header.vox_offset
    else:
        data_path, offset = _image_path(path), header.vox_offset

    n_samples = int(np.prod(header.dims4))
    itemsize = header.sample_dtype.itemsize
    with open(data_path, "rb") as fh:
        fh.seek(offset)
        payload = fh.read(n_samples * itemsize)
    if len(payload) < n_samples * itemsize:
        raise TruncatedData(
            f"{data_path}: expected {n_samples * itemsize} data bytes at "
            f"offset {offset}, got {len(payload)}")

    raw = np.frombuffer(payload, dtype=header.sample_dtype, count=n_samples)
    values = raw.astype(np.float64) * header.scl_slope + header.scl_inter
    data = values.reshape(header.dims4, order="F")
    return Volume4D(data, header.voxel_size, header.time_step), header


def _base_record(header: VolumeHeader, target_fields, endianness) -> np.ndarray:
    """Start from the header's raw bytes when the layout matches, else zeros."""
    dt = _header_dtype(target_fields, endianness)
    raw_matches = (
        header.raw is not None
        and len(header.raw) == HEADER_SIZE
        and _fields_for(header.format_kind) is target_fields
    )
    rec = np.zeros(1, dtype=dt)
    if raw_matches:
        src = np.frombuffer(header.raw,
                            dtype=_header_dtype(target_fields, header.endianness))
        rec = src.astype(dt) if header.endianness != endianness else src.copy()
    return rec


def _encode_samples(volume: Volume4D, header: VolumeHeader,
                    bake_scaling: bool = False) -> bytes:
    values = volume.data
    if bake_scaling:
        raw = values
    else:
        raw = (values - header.scl_inter) / header.scl_slope
    dt = header.sample_dtype
    if dt.kind in "iu":
        info = np.iinfo(dt)
        raw = np.clip(np.rint(raw), info.min, info.max)
    flat = raw.astype(dt, copy=False).ravel(order="F")
    return flat.tobytes()


def _check_extents(volume: Volume4D, header: VolumeHeader):
    if header.dims4 != volume.extents:
        raise HeaderVolumeMismatch(
            f"header dims {header.dims4} != volume extents {volume.extents}")


def _fill_common(rec, header: VolumeHeader):
    rec["sizeof_hdr"] = HEADER_SIZE
    ndim = len(header.dims)
    dim = np.ones(8, dtype=np.int64)
    dim[0] = ndim
    dim[1:1 + ndim] = header.dims
    rec["dim"] = dim
    rec["datatype"] = header.datatype_code
    rec["bitpix"] = np.dtype(DATATYPE_CODES[header.datatype_code]).itemsize * 8
    pixdim = np.zeros(8, dtype=np.float64)
    pixdim[0] = 1.0
    pixdim[1:4] = header.voxel_size
    pixdim[4] = header.time_step
    rec["pixdim"] = pixdim
    rec["regular"] = b"r"


def write_nifti(volume: Volume4D, header: VolumeHeader, path, mode: str = "single"):
    """Write a NIFTI-1 file (mode 'single') or .hdr/.img pair (mode 'pair')."""
    if mode not in ("single", "pair"):
        raise ValueError(f"mode must be 'single' or 'pair', got {mode!r}")
    _check_extents(volume, header)
    path = os.fspath(path)

    rec = _base_record(header, _NIFTI1_FIELDS, header.endianness)
    _fill_common(rec, header)
    rec["scl_slope"] = header.scl_slope
    rec["scl_inter"] = header.scl_inter
    if mode == "single":
        rec["magic"] = b"n+1"
        rec["vox_offset"] = float(NIFTI_SINGLE_OFFSET)
    else:
        rec["magic"] = b"ni1"
        rec["vox_offset"] = 0.0

    payload = _encode_samples(volume, header)
    if mode == "single":
        out = path if path.endswith(".nii") else path + ".nii"
        with open(out, "wb") as fh:
            fh.write(rec.tobytes())
            fh.write(b"\x00\x00\x00\x00")  # empty extension flag
            fh.write(payload)
    else:
        hdr_path, img_path = _pair_paths(path)
        with open(hdr_path, "wb") as fh:
            fh.write(rec.tobytes())  # exactly 348 bytes for the pair form
        with open(img_path, "wb") as fh:
            fh.write(payload)


def write_analyze(volume: Volume4D, header: VolumeHeader, path):
    """Write an ANALYZE-7.5 .hdr/.img pair.

    ANALYZE has no slope/intercept or quaternion fields: scaling is baked
    into the stored samples and NIFTI-only fields are dropped, with a
    warning when that loses information.
    """
    _check_extents(volume, header)
    path = os.fspath(path)

    dropped = []
    if header.format_kind != "analyze75":
        if header.scl_slope != 1.0 or header.scl_inter != 0.0:
            dropped.append("scl_slope/scl_inter (baked into samples)")
        if header.raw is not None:
            dropped.append("orientation/quaternion block")
    if dropped:
        warnings.warn(
            "ANALYZE-7.5 cannot represent: " + "; ".join(dropped),
            UserWarning, stacklevel=2)

    rec = _base_record(header, _ANALYZE_FIELDS, header.endianness)
    _fill_common(rec, header)
    rec["vox_offset"] = 0.0

    payload = _encode_samples(volume, header, bake_scaling=True)
    hdr_path, img_path = _pair_paths(path)
    with open(hdr_path, "wb") as fh:
        fh.write(rec.tobytes())
    with open(img_path, "wb") as fh:
        fh.write(payload)


def header_field_dump(path) -> list[tuple[str, str]]:
    """All raw header fields of a file as (name, value-string) pairs."""
    path = _header_path(os.fspath(path))
    with open(path, "rb") as fh:
        head = fh.read(HEADER_SIZE)
    if len(head) < HEADER_SIZE:
        raise TruncatedHeader(f"{path}: header is {len(head)} bytes")
    format_kind, endianness = detect_format(head)
    rec = np.frombuffer(head, dtype=_header_dtype(_fields_for(format_kind), endianness))[0]
    out = [("format", format_kind), ("endianness", endianness)]
    for f in _fields_for(format_kind):
        name = f[0]
        val = rec[name]
        if isinstance(val, bytes):
            text = val.rstrip(b"\x00").decode("ascii", "replace")
        elif isinstance(val, np.ndarray):
            text = " ".join(str(x) for x in val.tolist())
        else:
            text = str(val)
        out.append((name, text))
    return out
