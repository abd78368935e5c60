import struct

import numpy as np
import pytest

from tsica import volio
from tsica.errors import (
    HeaderVolumeMismatch,
    TruncatedData,
    UnrecognizedFormat,
    UnsupportedDatatype,
)


def small_volume(shape=(4, 3, 2, 5), seed=0):
    rng = np.random.default_rng(seed)
    data = rng.normal(size=shape)
    return volio.Volume4D(data, voxel_size=(2.0, 2.5, 3.0), time_step=1.5)


def minimal_nifti_header_bytes(endian="<", dims=(128, 128, 3, 100),
                               datatype=16, magic=b"n+1\x00", vox_offset=352.0,
                               slope=1.0, inter=0.0):
    """Build a NIFTI-1 header with plain struct calls, independent of the
    package's writer."""
    buf = bytearray(348)
    struct.pack_into(endian + "i", buf, 0, 348)
    dim = [len(dims)] + list(dims) + [1] * (7 - len(dims))
    struct.pack_into(endian + "8h", buf, 40, *dim)
    struct.pack_into(endian + "h", buf, 70, datatype)
    bitpix = {2: 8, 4: 16, 8: 32, 16: 32, 32: 64, 64: 64}[datatype]
    struct.pack_into(endian + "h", buf, 72, bitpix)
    pixdim = [1.0, 2.0, 2.0, 4.0, 1.5, 0.0, 0.0, 0.0]
    struct.pack_into(endian + "8f", buf, 76, *pixdim)
    struct.pack_into(endian + "f", buf, 108, vox_offset)
    struct.pack_into(endian + "f", buf, 112, slope)
    struct.pack_into(endian + "f", buf, 116, inter)
    buf[344:348] = magic
    return bytes(buf)


class TestDetectFormat:
    def test_written_single_detected(self, tmp_path):
        vol = small_volume()
        volio.write_nifti(vol, volio.default_header(vol), tmp_path / "v.nii")
        assert volio.detect_format(tmp_path / "v.nii") == ("nifti_single", "little")

    def test_written_analyze_detected(self, tmp_path):
        vol = small_volume()
        hdr = volio.default_header(vol, format_kind="analyze75")
        volio.write_analyze(vol, hdr, tmp_path / "v")
        assert volio.detect_format(tmp_path / "v.hdr") == ("analyze75", "little")

    def test_byteswapped_header_reports_opposite_endianness(self, tmp_path):
        # size field of 348 is only valid under the big-endian reading
        head = minimal_nifti_header_bytes(endian=">")
        path = tmp_path / "big.nii"
        path.write_bytes(head + b"\x00" * 64)
        kind, endianness = volio.detect_format(path)
        assert (kind, endianness) == ("nifti_single", "big")

    def test_pair_magic(self, tmp_path):
        head = minimal_nifti_header_bytes(magic=b"ni1\x00", vox_offset=0.0)
        (tmp_path / "p.hdr").write_bytes(head)
        assert volio.detect_format(tmp_path / "p.hdr") == ("nifti_pair", "little")

    def test_garbage_rejected(self, tmp_path):
        (tmp_path / "g.bin").write_bytes(b"\xff" * 400)
        with pytest.raises(UnrecognizedFormat):
            volio.detect_format(tmp_path / "g.bin")

    def test_short_file_rejected(self, tmp_path):
        (tmp_path / "s.bin").write_bytes(b"\x00" * 100)
        with pytest.raises(UnrecognizedFormat):
            volio.detect_format(tmp_path / "s.bin")


class TestReadHeader:
    def test_round_trip_fields(self, tmp_path):
        vol = volio.Volume4D(np.zeros((128, 128, 3, 100)),
                             voxel_size=(2.0, 2.0, 4.0), time_step=1.5)
        hdr = volio.default_header(vol, datatype_code=16)
        volio.write_nifti(vol, hdr, tmp_path / "h.nii")
        back = volio.read_header(tmp_path / "h.nii")
        assert back.dims == (128, 128, 3, 100)
        assert back.datatype_code == 16
        assert back.voxel_size == (2.0, 2.0, 4.0)
        assert back.time_step == 1.5
        assert back.format_kind == "nifti_single"

    def test_big_endian_same_logical_fields(self, tmp_path):
        little = minimal_nifti_header_bytes(endian="<")
        big = minimal_nifti_header_bytes(endian=">")
        (tmp_path / "l.nii").write_bytes(little + b"\x00" * 8)
        (tmp_path / "b.nii").write_bytes(big + b"\x00" * 8)
        h_l = volio.read_header(tmp_path / "l.nii")
        h_b = volio.read_header(tmp_path / "b.nii")
        assert h_l.dims == h_b.dims
        assert h_l.datatype_code == h_b.datatype_code
        assert h_l.voxel_size == h_b.voxel_size
        assert h_l.time_step == h_b.time_step
        assert (h_l.endianness, h_b.endianness) == ("little", "big")

    def test_complex_datatype_rejected(self, tmp_path):
        head = minimal_nifti_header_bytes(datatype=32)  # complex64
        (tmp_path / "c.nii").write_bytes(head)
        with pytest.raises(UnsupportedDatatype):
            volio.read_header(tmp_path / "c.nii")

    def test_slope_zero_treated_as_one(self, tmp_path):
        head = minimal_nifti_header_bytes(slope=0.0)
        (tmp_path / "z.nii").write_bytes(head)
        hdr = volio.read_header(tmp_path / "z.nii")
        assert hdr.scl_slope == 1.0
        assert any("slope" in n for n in hdr.notes)


class TestReadVolume:
    def test_lossless_f64_round_trip(self, tmp_path):
        vol = small_volume()
        volio.write_nifti(vol, volio.default_header(vol), tmp_path / "v.nii")
        back, hdr = volio.read_volume(tmp_path / "v.nii")
        assert np.array_equal(back.data, vol.data)
        assert back.voxel_size == vol.voxel_size
        assert back.time_step == vol.time_step

    def test_slope_intercept_scaling(self, tmp_path):
        # i16 payload holding raw value 3 with slope 2, intercept 1 -> 7.0
        head = minimal_nifti_header_bytes(dims=(1, 1, 1), datatype=4,
                                          slope=2.0, inter=1.0)
        payload = struct.pack("<h", 3)
        (tmp_path / "s.nii").write_bytes(head + b"\x00" * 4 + payload)
        vol, _ = volio.read_volume(tmp_path / "s.nii")
        assert vol.data.ravel()[0] == 7.0

    def test_truncated_payload(self, tmp_path):
        vol = small_volume()
        volio.write_nifti(vol, volio.default_header(vol), tmp_path / "t.nii")
        blob = (tmp_path / "t.nii").read_bytes()
        (tmp_path / "t.nii").write_bytes(blob[:-8])  # drop one f64 sample
        with pytest.raises(TruncatedData):
            volio.read_volume(tmp_path / "t.nii")

    def test_canonical_order_on_disk(self, tmp_path):
        # byte-level check: sample (x,y,z,t) lives at x + nx*(y + ny*(z + nz*t))
        nx, ny, nz, nt = 3, 2, 2, 2
        data = np.arange(nx * ny * nz * nt, dtype=np.float64).reshape(
            (nx, ny, nz, nt), order="C")
        vol = volio.Volume4D(data)
        volio.write_nifti(vol, volio.default_header(vol), tmp_path / "o.nii")
        blob = (tmp_path / "o.nii").read_bytes()
        for (x, y, z, t) in [(0, 0, 0, 0), (2, 1, 0, 1), (1, 0, 1, 1), (2, 1, 1, 1)]:
            flat = x + nx * (y + ny * (z + nz * t))
            value = struct.unpack_from("<d", blob, 352 + 8 * flat)[0]
            assert value == data[x, y, z, t]


class TestWriteNifti:
    def test_rewrite_is_byte_identical(self, tmp_path):
        vol = small_volume()
        hdr = volio.default_header(vol)
        volio.write_nifti(vol, hdr, tmp_path / "a.nii")
        back, hdr2 = volio.read_volume(tmp_path / "a.nii")
        volio.write_nifti(back, hdr2, tmp_path / "b.nii")
        assert (tmp_path / "a.nii").read_bytes() == (tmp_path / "b.nii").read_bytes()

    def test_pair_mode_header_is_348_bytes(self, tmp_path):
        vol = small_volume()
        hdr = volio.default_header(vol, format_kind="nifti_pair")
        volio.write_nifti(vol, hdr, tmp_path / "p", mode="pair")
        assert (tmp_path / "p.hdr").stat().st_size == 348
        assert (tmp_path / "p.img").exists()
        back, hdr2 = volio.read_volume(tmp_path / "p.hdr")
        assert np.array_equal(back.data, vol.data)
        assert hdr2.format_kind == "nifti_pair"

    def test_extent_mismatch(self, tmp_path):
        vol = small_volume()
        bad = volio.default_header(small_volume(shape=(2, 2, 2, 2)))
        with pytest.raises(HeaderVolumeMismatch):
            volio.write_nifti(vol, bad, tmp_path / "x.nii")

    def test_integer_quantization(self, tmp_path):
        vol = volio.Volume4D(np.array([[[[0.2, 3.7, -1.4, 250.0]]]]))
        hdr = volio.default_header(vol, datatype_code=4)
        volio.write_nifti(vol, hdr, tmp_path / "q.nii")
        back, _ = volio.read_volume(tmp_path / "q.nii")
        assert np.array_equal(back.data.ravel(), np.rint(vol.data.ravel()))


class TestWriteAnalyze:
    def test_round_trip(self, tmp_path):
        vol = small_volume()
        hdr = volio.default_header(vol, format_kind="analyze75", datatype_code=16)
        volio.write_analyze(vol, hdr, tmp_path / "a")
        back, hdr2 = volio.read_volume(tmp_path / "a.hdr")
        assert hdr2.format_kind == "analyze75"
        assert hdr2.dims == vol.extents
        assert hdr2.datatype_code == 16
        assert hdr2.voxel_size == vol.voxel_size
        np.testing.assert_allclose(back.data, vol.data, rtol=1e-6)

    def test_nifti_fields_dropped_with_warning(self, tmp_path):
        vol = small_volume()
        hdr = volio.default_header(vol, datatype_code=64)
        hdr.scl_slope = 2.0
        # slope bakes into samples, so values still round-trip
        with pytest.warns(UserWarning, match="ANALYZE"):
            volio.write_analyze(vol, hdr, tmp_path / "w")
        back, hdr2 = volio.read_volume(tmp_path / "w.hdr")
        assert np.array_equal(back.data, vol.data)
        assert hdr2.scl_slope == 1.0

    def test_detected_as_analyze(self, tmp_path):
        vol = small_volume()
        hdr = volio.default_header(vol, format_kind="analyze75")
        volio.write_analyze(vol, hdr, tmp_path / "d")
        assert volio.detect_format(tmp_path / "d.hdr")[0] == "analyze75"


@pytest.mark.parametrize("datatype", sorted(volio.DATATYPE_CODES))
@pytest.mark.parametrize("endianness", ["little", "big"])
def test_round_trip_every_datatype_and_endianness(tmp_path, datatype, endianness):
    rng = np.random.default_rng(datatype)
    data = rng.integers(0, 120, size=(3, 4, 2, 3)).astype(np.float64)
    vol = volio.Volume4D(data)
    for kind, mode in [("nifti_single", "single"), ("nifti_pair", "pair")]:
        hdr = volio.default_header(vol, datatype_code=datatype,
                                   format_kind=kind, endianness=endianness)
        stem = tmp_path / f"{kind}_{datatype}_{endianness}"
        volio.write_nifti(vol, hdr, str(stem), mode=mode)
        target = str(stem) + (".nii" if mode == "single" else ".hdr")
        back, hdr2 = volio.read_volume(target)
        assert np.array_equal(back.data, data)
        assert hdr2.endianness == endianness
        assert hdr2.dims == vol.extents
    hdr = volio.default_header(vol, datatype_code=datatype,
                               format_kind="analyze75", endianness=endianness)
    volio.write_analyze(vol, hdr, str(tmp_path / "az"))
    back, hdr2 = volio.read_volume(str(tmp_path / "az.hdr"))
    assert np.array_equal(back.data, data)
    assert hdr2.endianness == endianness


def test_opaque_fields_survive_rewrite(tmp_path):
    # descrip lives in the unparsed block; it must ride along untouched
    head = bytearray(minimal_nifti_header_bytes(dims=(2, 2, 1, 2), datatype=64))
    head[148:148 + 11] = b"hello world"
    payload = struct.pack("<8d", *range(8))
    (tmp_path / "o.nii").write_bytes(bytes(head) + b"\x00" * 4 + payload)
    vol, hdr = volio.read_volume(tmp_path / "o.nii")
    volio.write_nifti(vol, hdr, tmp_path / "o2.nii")
    blob = (tmp_path / "o2.nii").read_bytes()
    assert blob[148:148 + 11] == b"hello world"
