import numpy as np
import pytest

from strandgen import hairio
from strandgen.binio import HairIOError
from strandgen.geometry import (LOCAL, WORLD, HairMap, LatentMap, Strand,
                                from_local, hemisphere_grid)
from strandgen.synthetic import synthetic_hair_map, synthetic_strands


class TestHaar:
    def test_round_trip_bit_exact(self, tmp_path):
        grid = hemisphere_grid(12, 12)
        hm = synthetic_hair_map(grid, n_points=30, seed=1, coverage=0.8)
        p = tmp_path / "style.haar"
        hairio.write_haar(p, hm)
        back = hairio.read_haar(p)
        assert np.array_equal(back.mask, hm.mask)
        assert np.array_equal(back.strands, hm.strands)

    def test_single_strand_file_size(self, tmp_path):
        # 6 u32/magic fields (24) + 1 mask byte + 100*3*4 + crc 4 = 1229
        mask = np.ones((1, 1), dtype=bool)
        strands = synthetic_strands(1, 100, seed=2)
        hm = HairMap(mask=mask, strands=strands)
        p = tmp_path / "one.haar"
        hairio.write_haar(p, hm)
        assert p.stat().st_size == 1229

    def test_corrupted_crc_rejected(self, tmp_path):
        grid = hemisphere_grid(4, 4)
        hm = synthetic_hair_map(grid, n_points=10, seed=3)
        p = tmp_path / "style.haar"
        hairio.write_haar(p, hm)
        blob = bytearray(p.read_bytes())
        blob[-1] ^= 0xFF
        bad = tmp_path / "bad.haar"
        bad.write_bytes(bytes(blob))
        with pytest.raises(HairIOError, match="CRC"):
            hairio.read_haar(bad)

    def test_truncation_reports_offset(self, tmp_path):
        grid = hemisphere_grid(4, 4)
        hm = synthetic_hair_map(grid, n_points=10, seed=4)
        p = tmp_path / "style.haar"
        hairio.write_haar(p, hm)
        trunc = tmp_path / "trunc.haar"
        trunc.write_bytes(p.read_bytes()[:40])
        with pytest.raises(HairIOError) as ei:
            hairio.read_haar(trunc)
        assert ei.value.offset is not None

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.haar"
        p.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(HairIOError, match="magic"):
            hairio.read_haar(p)


class TestHlat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(5)
        mask = rng.random((8, 8)) > 0.4
        lm = LatentMap(mask=mask, latents=rng.standard_normal(
            (int(mask.sum()), 16)).astype(np.float32))
        p = tmp_path / "map.hlat"
        hairio.write_hlat(p, lm)
        back = hairio.read_hlat(p)
        assert np.array_equal(back.mask, lm.mask)
        assert np.array_equal(back.latents, lm.latents)

    def test_corruption_rejected(self, tmp_path):
        lm = LatentMap(mask=np.ones((2, 2), bool),
                       latents=np.arange(8, dtype=np.float32).reshape(4, 2))
        p = tmp_path / "map.hlat"
        hairio.write_hlat(p, lm)
        blob = bytearray(p.read_bytes())
        blob[30] ^= 0x10
        bad = tmp_path / "bad.hlat"
        bad.write_bytes(bytes(blob))
        with pytest.raises(HairIOError):
            hairio.read_hlat(bad)


class TestCyHair:
    def test_synthetic_two_strand_fixture(self, tmp_path):
        a = Strand(np.array([[0, 0, 0], [0, 0, 1.0]]), space=WORLD)
        b = Strand(np.array([[1, 0, 0], [1, 1, 0.0]]), space=WORLD)
        p = tmp_path / "two.hair"
        hairio.write_cyhair(p, [a, b])
        out = hairio.import_cyhair(p, strand_length=10)
        assert len(out) == 2
        assert np.allclose(out[0].points[0], [0, 0, 0], atol=1e-6)
        assert np.allclose(out[0].points[-1], [0, 0, 1], atol=1e-6)
        assert np.allclose(out[1].points[0], [1, 0, 0], atol=1e-6)
        assert np.allclose(out[1].points[-1], [1, 1, 0], atol=1e-6)
        assert all(s.length == 10 for s in out)

    def test_default_segment_path(self, tmp_path):
        # no per-strand segment table (flag bit0 clear): 2 strands,
        # default 1 segment -> 2 points each
        import struct

        pts = np.array([[0, 0, 0], [0, 0, 1], [1, 0, 0], [1, 0, 2]],
                       dtype="<f4")
        blob = (b"HAIR" + struct.pack("<III", 2, 4, 0b10)
                + struct.pack("<I", 1)
                + struct.pack("<fffff", 0, 0, 0, 0, 0) + b"\x00" * 88
                + pts.tobytes())
        p = tmp_path / "default.hair"
        p.write_bytes(blob)
        out = hairio.import_cyhair(p, strand_length=4)
        assert len(out) == 2
        assert np.allclose(out[1].points[-1], [1, 0, 2], atol=1e-6)

    def test_inconsistent_counts_rejected(self, tmp_path):
        a = Strand(np.array([[0, 0, 0], [0, 0, 1.0]]), space=WORLD)
        p = tmp_path / "bad.hair"
        hairio.write_cyhair(p, [a])
        blob = bytearray(p.read_bytes())
        blob[8:12] = (99).to_bytes(4, "little")  # total point count
        bad = tmp_path / "bad2.hair"
        bad.write_bytes(bytes(blob))
        with pytest.raises(HairIOError, match="points"):
            hairio.import_cyhair(bad)

    def test_missing_point_flag_rejected(self, tmp_path):
        import struct

        blob = (b"HAIR" + struct.pack("<III", 1, 2, 0b01)
                + struct.pack("<I", 1)
                + struct.pack("<fffff", 0, 0, 0, 0, 0) + b"\x00" * 88
                + struct.pack("<H", 1))
        p = tmp_path / "noflag.hair"
        p.write_bytes(blob)
        with pytest.raises(HairIOError, match="point data"):
            hairio.import_cyhair(p)


class TestObjExport:
    def test_two_point_strand_layout(self, tmp_path):
        grid = hemisphere_grid(4, 4)
        iy, ix = np.nonzero(grid.valid)
        mask = np.zeros_like(grid.valid)
        mask[iy[0], ix[0]] = True
        strand = np.array([[0, 0, 0], [0, 0, 0.5]], dtype=np.float32)
        hm = HairMap(mask=mask, strands=strand[None], grid=grid)
        p = tmp_path / "hair.obj"
        hairio.export_obj(hm, grid, p)
        lines = p.read_text().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("v ") and lines[1].startswith("v ")
        assert lines[2] == "l 1 2"
        assert p.read_bytes().count(b"\r") == 0

    def test_strand_count_matches(self, tmp_path):
        grid = hemisphere_grid(6, 6)
        hm = synthetic_hair_map(grid, n_points=12, seed=6)
        p = tmp_path / "hair.obj"
        hairio.export_obj(hm, grid, p)
        text = p.read_text()
        assert text.count("\nl ") + text.startswith("l ") == hm.strands.shape[0]

    def test_parse_back_matches_from_local(self, tmp_path):
        grid = hemisphere_grid(5, 5)
        hm = synthetic_hair_map(grid, n_points=16, seed=7)
        p = tmp_path / "hair.obj"
        hairio.export_obj(hm, grid, p)
        world = hairio.parse_obj_strands(p)
        idx = hm.texel_indices()
        for k in [0, len(idx) - 1]:
            iy, ix = divmod(int(idx[k]), grid.width)
            expect = from_local(Strand(hm.strands[k], space=LOCAL),
                                grid.frame(ix, iy))
            assert np.max(np.abs(world[k] - expect.points)) < 1e-5


class TestBuildHairMap:
    def test_roundtrip_through_alignment(self):
        grid = hemisphere_grid(8, 8)
        src = synthetic_hair_map(grid, n_points=20, seed=8)
        world = src.world_strands()
        strands = [Strand(w, space=WORLD) for w in world]
        built = hairio.build_hair_map(grid, strands, strand_length=20)
        assert np.array_equal(built.mask, src.mask)
        # local coordinates survive the double conversion
        assert np.max(np.abs(built.strands - src.strands)) < 1e-4
