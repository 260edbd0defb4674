"""Bit-exact hairstyle asset I/O.

Formats (little-endian, CRC32 trailer over all preceding bytes):

  HAAR v1 (hair map, local-space strands)
    "HAAR" | u32 version=1 | u32 W | u32 H | u32 L | u32 count |
    validity bitmask ceil(W*H/8) bytes (texel t = iy*W + ix, bit t%8 of
    byte t//8, LSB first) | count * (L*3 f32) strand rows in increasing
    texel order | crc32

  HLAT v1 (latent map; companion container for generated/encoded maps)
    "HLAT" | u32 version=1 | u32 W | u32 H | u32 M | u32 count |
    validity bitmask as above | count * (M f32) | crc32

Also reads the public cyHair strand format and writes world-space OBJ
polylines for rendering hand-off.
"""

from __future__ import annotations

import struct

import numpy as np

from .binio import HairIOError, Reader, atomic_write, finish, read_file
from .geometry import (LOCAL, WORLD, HairMap, LatentMap, ScalpGrid, Strand,
                       from_local, nearest_valid_texels, resample, to_local)

HAAR_MAGIC = b"HAAR"
HLAT_MAGIC = b"HLAT"
CYHAIR_MAGIC = b"HAIR"
FORMAT_VERSION = 1


def _pack_mask(mask: np.ndarray) -> bytes:
    flat = mask.reshape(-1)
    return np.packbits(flat, bitorder="little").tobytes()


def _unpack_mask(blob: bytes, height: int, width: int) -> np.ndarray:
    bits = np.unpackbits(np.frombuffer(blob, dtype=np.uint8),
                         bitorder="little")
    return bits[:height * width].reshape(height, width).astype(bool)


def write_haar(path, h: HairMap) -> None:
    height, width = h.shape
    L = h.strand_length
    count = h.strands.shape[0]
    parts = [HAAR_MAGIC,
             struct.pack("<IIIII", FORMAT_VERSION, width, height, L, count),
             _pack_mask(h.mask),
             np.ascontiguousarray(h.strands, "<f4").tobytes()]
    atomic_write(path, finish(parts))


def read_haar(path, grid: ScalpGrid = None) -> HairMap:
    r = read_file(path)
    r.magic(HAAR_MAGIC)
    version = r.u32()
    if version != FORMAT_VERSION:
        raise HairIOError(f"unsupported HAAR version {version}", offset=4)
    width = r.u32()
    height = r.u32()
    L = r.u32()
    count = r.u32()
    mask = _unpack_mask(r.take((width * height + 7) // 8), height, width)
    if int(mask.sum()) != count:
        raise HairIOError(
            f"strand count {count} != mask popcount {int(mask.sum())}",
            offset=24)
    raw = r.take(4 * count * L * 3)
    r.check_crc()
    strands = np.frombuffer(raw, dtype="<f4").copy().reshape(count, L, 3)
    return HairMap(mask=mask, strands=strands, grid=grid)


def write_hlat(path, lm: LatentMap) -> None:
    height, width = lm.shape
    count = lm.latents.shape[0]
    parts = [HLAT_MAGIC,
             struct.pack("<IIIII", FORMAT_VERSION, width, height,
                         lm.channels, count),
             _pack_mask(lm.mask),
             np.ascontiguousarray(lm.latents, "<f4").tobytes()]
    atomic_write(path, finish(parts))


def read_hlat(path) -> LatentMap:
    r = read_file(path)
    r.magic(HLAT_MAGIC)
    version = r.u32()
    if version != FORMAT_VERSION:
        raise HairIOError(f"unsupported HLAT version {version}", offset=4)
    width = r.u32()
    height = r.u32()
    channels = r.u32()
    count = r.u32()
    mask = _unpack_mask(r.take((width * height + 7) // 8), height, width)
    if int(mask.sum()) != count:
        raise HairIOError(
            f"latent count {count} != mask popcount {int(mask.sum())}",
            offset=24)
    raw = r.take(4 * count * channels)
    r.check_crc()
    latents = np.frombuffer(raw, dtype="<f4").copy().reshape(count, channels)
    return LatentMap(mask=mask, latents=latents)


# ---------------------------------------------------------------------------
# cyHair import

def import_cyhair(path, strand_length: int = 100):
    """Read a cyHair file into world-space strands resampled to L points.

    Header (128 bytes): magic "HAIR", u32 strand count, u32 total point
    count, u32 flags (bit0: per-strand u16 segment counts follow; bit1: xyz
    point data present), u32 default segment count, f32 default thickness /
    transparency / rgb, 88-byte info string.
    """
    r = read_file(path)
    r.magic(CYHAIR_MAGIC)
    n_strands = r.u32()
    total_points = r.u32()
    flags = r.u32()
    default_segments = r.u32()
    r.f32()  # default thickness
    r.f32()  # default transparency
    for _ in range(3):
        r.f32()  # default rgb
    r.take(88)  # info string

    if not flags & 0b10:
        raise HairIOError("cyHair file declares no point data (flag bit 1)",
                          offset=12)
    if flags & 0b01:
        segs = np.frombuffer(r.take(2 * n_strands), dtype="<u2").astype(int)
    else:
        segs = np.full(n_strands, default_segments, dtype=int)
    points_per_strand = segs + 1
    if int(points_per_strand.sum()) != total_points:
        raise HairIOError(
            f"segment counts imply {int(points_per_strand.sum())} points, "
            f"header says {total_points}", offset=r.pos)
    raw = r.take(4 * 3 * total_points)
    pts = np.frombuffer(raw, dtype="<f4").astype(np.float64).reshape(-1, 3)

    strands = []
    cursor = 0
    for n in points_per_strand:
        chunk = pts[cursor:cursor + n]
        cursor += n
        if n < 2:
            continue  # single-point strands carry no geometry
        strands.append(resample(Strand(chunk, space=WORLD), strand_length))
    return strands


# ---------------------------------------------------------------------------
# OBJ strand export

def export_obj(h: HairMap, grid: ScalpGrid, path) -> None:
    """World-space polylines: `v x y z` rows then one `l ...` per strand
    (1-based indices, 6-decimal fixed formatting, LF endings)."""
    if h.grid is None:
        h = HairMap(mask=h.mask, strands=h.strands, grid=grid)
    world = h.world_strands()
    L = h.strand_length
    lines = []
    for s in world:
        for pt in s:
            lines.append(f"v {pt[0]:.6f} {pt[1]:.6f} {pt[2]:.6f}")
    for i in range(len(world)):
        base = i * L
        idx = " ".join(str(base + k + 1) for k in range(L))
        lines.append(f"l {idx}")
    blob = ("\n".join(lines) + "\n").encode("utf-8")
    atomic_write(path, blob)


def parse_obj_strands(path):
    """Read back an exported OBJ into (N, L, 3) world points (test support)."""
    verts = []
    polylines = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif parts[0] == "l":
                polylines.append([int(i) - 1 for i in parts[1:]])
    verts = np.asarray(verts)
    return np.stack([verts[idx] for idx in polylines])


# ---------------------------------------------------------------------------
# dataset alignment

def build_hair_map(grid: ScalpGrid, strands, strand_length: int = 100) -> HairMap:
    """Attach world-space strands to their nearest valid texel frames.

    Each strand is converted into the local frame of the closest valid
    texel (by root distance); when several strands land on one texel the
    closest root wins.
    """
    strands = list(strands)
    if not strands:
        raise ValueError("no strands to place")
    roots = np.stack([s.points[0] for s in strands])
    texels = nearest_valid_texels(grid, roots)
    h, w = grid.valid.shape
    best = {}
    for k, t in enumerate(texels):
        iy, ix = divmod(int(t), w)
        d = float(np.linalg.norm(roots[k] - grid.origins[iy, ix]))
        if t not in best or d < best[t][0]:
            best[t] = (d, k)
    mask = np.zeros((h, w), dtype=bool)
    rows = []
    for t in sorted(best):
        iy, ix = divmod(int(t), w)
        mask[iy, ix] = True
        s = strands[best[t][1]]
        if s.length != strand_length:
            s = resample(s, strand_length)
        rows.append(to_local(s, grid.frame(ix, iy)).points)
    return HairMap(mask=mask, strands=np.stack(rows).astype(np.float32),
                   grid=grid)


def write_cyhair(path, strands) -> None:
    """Write world-space strands in the cyHair layout (fixture support)."""
    strands = list(strands)
    segs = np.asarray([s.length - 1 for s in strands], dtype="<u2")
    total = int(sum(s.length for s in strands))
    header = [CYHAIR_MAGIC,
              struct.pack("<III", len(strands), total, 0b11),
              struct.pack("<I", 0),
              struct.pack("<fffff", 0.1, 0.0, 0.3, 0.2, 0.1),
              b"\x00" * 88]
    pts = np.concatenate([s.points for s in strands]).astype("<f4")
    blob = b"".join(header) + segs.tobytes() + pts.tobytes()
    atomic_write(path, blob)
