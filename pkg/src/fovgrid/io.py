"""On-disk artifact formats.

Every artifact is a JSON manifest next to one little-endian binary blob;
manifests carry a format version and the blob's sha256, which is checked
on load.  Layouts (all little-endian, packed):

grid.bin       per-point records, 62 bytes:
               f64 x, y, r, theta, w, flat_u, flat_v; u32 ring_index;
               u8 hemifield; u8 is_padding
nbhd.bin       u32 indices (n_out*k), then f32 dists (n_out*k), then
               f32 thetas (n_out*k), each row-major per output unit
table.bin      u32 index quads (n_out*k*4), f32 weight quads (n_out*k*4),
               u8 out-of-extent flags (n_out*k)
signal.bin     f32 values, row-major (n_points, channels)
gather.bin     i64 pixel-index quads (n*4), f32 weight quads (n*4)
pixmap.bin     i64 nearest-sensor index per pixel (H*W), u8 fov mask (H*W)

A bundle is a manifest that references grid/neighborhood/table manifests
by content hash, so loaders can verify the whole chain.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .cmf import CmfParams
from .grid import RadialScheme, SensorGrid
from .kernel_map import KernelMapTable
from .neighborhoods import NeighborhoodSet
from .resample import FixationSpec, FoveatedSignal

__all__ = [
    "FORMAT_VERSION",
    "IntegrityError",
    "grid_content_id",
    "save_grid", "load_grid",
    "save_neighborhoods", "load_neighborhoods",
    "save_kernel_table", "load_kernel_table",
    "save_bundle", "load_bundle",
    "save_signal", "load_signal",
    "write_ppm", "read_ppm", "write_png", "read_image",
]

FORMAT_VERSION = 1

GRID_POINT_DTYPE = np.dtype([
    ("x", "<f8"), ("y", "<f8"), ("r", "<f8"), ("theta", "<f8"),
    ("w", "<f8"), ("flat_u", "<f8"), ("flat_v", "<f8"),
    ("ring_index", "<u4"), ("hemifield", "u1"), ("is_padding", "u1"),
])


class IntegrityError(RuntimeError):
    """Blob hash, version, or shape disagrees with its manifest."""


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _write_pair(path: Path, manifest: dict, blob: bytes):
    path.parent.mkdir(parents=True, exist_ok=True)
    blob_path = path.with_suffix(".bin")
    blob_path.write_bytes(blob)
    manifest = dict(manifest, format_version=FORMAT_VERSION,
                    blob=blob_path.name, sha256=_sha256(blob))
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest["sha256"]


def _read_pair(path: Path):
    path = Path(path)
    manifest = json.loads(path.read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise IntegrityError(
            f"unsupported format version {manifest.get('format_version')} in {path}")
    blob = (path.parent / manifest["blob"]).read_bytes()
    if _sha256(blob) != manifest["sha256"]:
        raise IntegrityError(f"blob hash mismatch for {path}")
    return manifest, blob


def _grid_records(grid: SensorGrid) -> np.ndarray:
    rec = np.empty(len(grid), dtype=GRID_POINT_DTYPE)
    for name in ("x", "y", "r", "theta", "w", "flat_u", "flat_v"):
        rec[name] = getattr(grid, name)
    rec["ring_index"] = grid.ring_index
    rec["hemifield"] = grid.hemifield
    rec["is_padding"] = grid.is_padding
    return rec


def grid_content_id(grid: SensorGrid) -> str:
    """Content hash of the grid's binary record block (cached)."""
    cached = grid.meta.get("_content_id")
    if cached is None:
        cached = _sha256(_grid_records(grid).tobytes())
        grid.meta["_content_id"] = cached
    return cached


def save_grid(grid: SensorGrid, path) -> str:
    path = Path(path)
    manifest = {
        "kind": "sensor-grid",
        "a": grid.params.a,
        "r_max": grid.params.r_max,
        "k_a": grid.params.k_a,
        "n_r": grid.scheme.n_r,
        "pad_rings": grid.scheme.pad_rings,
        "delta_w": grid.scheme.delta_w,
        "n_points": len(grid),
        "n_active": grid.n_active,
        "counts": grid.counts.tolist(),
        "ring_offsets": grid.ring_offsets.tolist(),
        "stagger": bool(grid.meta.get("stagger", False)),
    }
    return _write_pair(path, manifest, _grid_records(grid).tobytes())


def load_grid(path) -> SensorGrid:
    manifest, blob = _read_pair(path)
    if manifest.get("kind") != "sensor-grid":
        raise IntegrityError(f"{path} is not a sensor-grid manifest")
    rec = np.frombuffer(blob, dtype=GRID_POINT_DTYPE)
    if rec.shape[0] != manifest["n_points"]:
        raise IntegrityError("point count disagrees with manifest")
    params = CmfParams(a=manifest["a"], r_max=manifest["r_max"])
    n_r, pad = manifest["n_r"], manifest["pad_rings"]
    delta_w = manifest["delta_w"]
    counts = np.asarray(manifest["counts"], dtype=np.int64)
    ring_starts = np.concatenate([[0], np.cumsum(counts)])[:-1]
    scheme = RadialScheme(
        n_r=n_r, pad_rings=pad,
        w_values=rec["w"][ring_starts].astype(float).copy(),
        radii=rec["r"][ring_starts].astype(float).copy(),
        delta_w=delta_w,
    )
    grid = SensorGrid(
        params=params, scheme=scheme, counts=counts,
        ring_offsets=np.asarray(manifest["ring_offsets"], dtype=float),
        x=rec["x"].astype(float), y=rec["y"].astype(float),
        r=rec["r"].astype(float), theta=rec["theta"].astype(float),
        w=rec["w"].astype(float),
        flat_u=rec["flat_u"].astype(float), flat_v=rec["flat_v"].astype(float),
        ring_index=rec["ring_index"].astype(np.int64),
        hemifield=rec["hemifield"].copy(),
        is_padding=rec["is_padding"].astype(bool),
        meta={"stagger": manifest["stagger"]},
    )
    grid.meta["_content_id"] = manifest["sha256"]
    return grid


def save_neighborhoods(nbhd: NeighborhoodSet, path) -> str:
    n_out, k = nbhd.indices.shape
    blob = (nbhd.indices.astype("<u4").tobytes()
            + nbhd.dists.astype("<f4").tobytes()
            + nbhd.thetas.astype("<f4").tobytes())
    manifest = {
        "kind": "neighborhoods",
        "input_grid_id": nbhd.input_grid_id,
        "output_grid_id": nbhd.output_grid_id,
        "n_out": n_out, "k": k,
    }
    return _write_pair(Path(path), manifest, blob)


def load_neighborhoods(path) -> NeighborhoodSet:
    manifest, blob = _read_pair(path)
    if manifest.get("kind") != "neighborhoods":
        raise IntegrityError(f"{path} is not a neighborhoods manifest")
    n_out, k = manifest["n_out"], manifest["k"]
    n = n_out * k
    expect = n * (4 + 4 + 4)
    if len(blob) != expect:
        raise IntegrityError("neighborhood blob size mismatch")
    idx = np.frombuffer(blob, dtype="<u4", count=n).reshape(n_out, k)
    dists = np.frombuffer(blob, dtype="<f4", count=n, offset=4 * n).reshape(n_out, k)
    thetas = np.frombuffer(blob, dtype="<f4", count=n, offset=8 * n).reshape(n_out, k)
    return NeighborhoodSet(
        input_grid_id=manifest["input_grid_id"],
        output_grid_id=manifest["output_grid_id"],
        k=k, indices=idx.astype(np.int64),
        dists=dists.astype(np.float64), thetas=thetas.astype(np.float64),
    )


def save_kernel_table(table: KernelMapTable, path) -> str:
    blob = (table.indices.astype("<u4").tobytes()
            + table.weights.astype("<f4").tobytes()
            + table.out_of_extent.astype("u1").tobytes())
    manifest = {"kind": "kernel-table", "n_out": table.n_out,
                "k": table.k, "s": table.s}
    return _write_pair(Path(path), manifest, blob)


def load_kernel_table(path) -> KernelMapTable:
    manifest, blob = _read_pair(path)
    if manifest.get("kind") != "kernel-table":
        raise IntegrityError(f"{path} is not a kernel-table manifest")
    n_out, k, s = manifest["n_out"], manifest["k"], manifest["s"]
    n = n_out * k
    if len(blob) != n * (16 + 16 + 1):
        raise IntegrityError("kernel table blob size mismatch")
    idx = np.frombuffer(blob, dtype="<u4", count=4 * n).reshape(n_out, k, 4)
    wts = np.frombuffer(blob, dtype="<f4", count=4 * n, offset=16 * n).reshape(n_out, k, 4)
    flags = np.frombuffer(blob, dtype="u1", count=n, offset=32 * n).reshape(n_out, k)
    return KernelMapTable(n_out=n_out, k=k, s=s,
                          indices=idx.astype(np.int32),
                          weights=wts.astype(np.float64),
                          out_of_extent=flags.astype(bool))


def save_bundle(out_dir, input_grid: SensorGrid, output_grid: SensorGrid,
                nbhd: NeighborhoodSet, table: KernelMapTable,
                extra: dict | None = None) -> Path:
    """Write all artifacts plus a manifest binding them by content hash."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    h_in = save_grid(input_grid, out / "input_grid.json")
    h_out = save_grid(output_grid, out / "output_grid.json")
    h_nb = save_neighborhoods(nbhd, out / "neighborhoods.json")
    h_tb = save_kernel_table(table, out / "kernel_table.json")
    manifest = {
        "kind": "bundle", "format_version": FORMAT_VERSION,
        "a": input_grid.params.a, "r_max": input_grid.params.r_max,
        "k": nbhd.k, "s": table.s,
        "n_in": len(input_grid), "n_in_active": input_grid.n_active,
        "n_out": len(output_grid), "n_out_active": output_grid.n_active,
        "components": {
            "input_grid": {"file": "input_grid.json", "sha256": h_in},
            "output_grid": {"file": "output_grid.json", "sha256": h_out},
            "neighborhoods": {"file": "neighborhoods.json", "sha256": h_nb},
            "kernel_table": {"file": "kernel_table.json", "sha256": h_tb},
        },
    }
    if extra:
        manifest.update(extra)
    (out / "bundle.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return out / "bundle.json"


def load_bundle(path):
    """Load and verify a bundle; returns a dict of the four components."""
    path = Path(path)
    if path.is_dir():
        path = path / "bundle.json"
    manifest = json.loads(path.read_text())
    if manifest.get("kind") != "bundle":
        raise IntegrityError(f"{path} is not a bundle manifest")
    if manifest.get("format_version") != FORMAT_VERSION:
        raise IntegrityError("unsupported bundle format version")
    parts = {}
    for name, loader in (("input_grid", load_grid), ("output_grid", load_grid),
                         ("neighborhoods", load_neighborhoods),
                         ("kernel_table", load_kernel_table)):
        ref = manifest["components"][name]
        sub = json.loads((path.parent / ref["file"]).read_text())
        if sub["sha256"] != ref["sha256"]:
            raise IntegrityError(f"bundle component {name} hash mismatch")
        parts[name] = loader(path.parent / ref["file"])
    parts["manifest"] = manifest
    return parts


def save_signal(signal: FoveatedSignal, path) -> str:
    manifest = {
        "kind": "foveated-signal",
        "grid_id": signal.grid_id,
        "fixation": {"cx": signal.fixation.cx, "cy": signal.fixation.cy,
                     "scale": signal.fixation.scale},
        "n_points": signal.values.shape[0],
        "channels": signal.values.shape[1],
        "source_dims": list(signal.source_dims),
    }
    return _write_pair(Path(path), manifest, signal.values.astype("<f4").tobytes())


def load_signal(path) -> FoveatedSignal:
    manifest, blob = _read_pair(path)
    if manifest.get("kind") != "foveated-signal":
        raise IntegrityError(f"{path} is not a signal manifest")
    n, c = manifest["n_points"], manifest["channels"]
    values = np.frombuffer(blob, dtype="<f4").reshape(n, c).astype(np.float64)
    fix = FixationSpec(**manifest["fixation"])
    return FoveatedSignal(grid_id=manifest["grid_id"], fixation=fix,
                          values=values, source_dims=tuple(manifest["source_dims"]))


def save_gather_table(indices: np.ndarray, weights: np.ndarray, dims,
                      fix: FixationSpec, grid_id: str, path) -> str:
    """Precompiled image->signal bilinear gather (for the interop demo)."""
    manifest = {
        "kind": "gather-table",
        "grid_id": grid_id,
        "dims": [int(dims[0]), int(dims[1])],
        "n_points": int(indices.shape[0]),
        "fixation": {"cx": fix.cx, "cy": fix.cy, "scale": fix.scale},
    }
    blob = indices.astype("<i8").tobytes() + weights.astype("<f4").tobytes()
    return _write_pair(Path(path), manifest, blob)


def save_pixel_map(idx_map: np.ndarray, in_fov: np.ndarray, grid_id: str,
                   path) -> str:
    """Nearest-active-sensor index per canvas pixel (for montage renders)."""
    h, w = idx_map.shape
    manifest = {"kind": "pixel-map", "grid_id": grid_id, "dims": [h, w]}
    blob = idx_map.astype("<i8").tobytes() + in_fov.astype("u1").tobytes()
    return _write_pair(Path(path), manifest, blob)


# ---------------------------------------------------------------------------
# images: 8-bit PPM/PGM, PNG via Pillow, raw f32 blobs

def write_ppm(path, image: np.ndarray):
    """8-bit binary PPM (P6) or PGM (P5). Values are clipped to [0, 1]."""
    img = np.asarray(image, dtype=float)
    if img.ndim == 2:
        img = img[:, :, None]
    h, w, c = img.shape
    data = (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    with open(path, "wb") as f:
        if c == 1:
            f.write(f"P5\n{w} {h}\n255\n".encode())
            f.write(data[:, :, 0].tobytes())
        elif c == 3:
            f.write(f"P6\n{w} {h}\n255\n".encode())
            f.write(data.tobytes())
        else:
            raise ValueError("PPM supports 1 or 3 channels")


def read_ppm(path) -> np.ndarray:
    """Read binary P5/P6; returns float (H, W, C) in [0, 1]."""
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    magic, w, h, maxval = fields[0], int(fields[1]), int(fields[2]), int(fields[3])
    pos += 1
    if magic == b"P6":
        c = 3
    elif magic == b"P5":
        c = 1
    else:
        raise ValueError(f"unsupported PPM magic {magic!r}")
    data = np.frombuffer(raw, dtype=np.uint8, count=h * w * c, offset=pos)
    return data.reshape(h, w, c).astype(float) / float(maxval)


def write_png(path, image: np.ndarray):
    from PIL import Image

    img = np.asarray(image, dtype=float)
    data = (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    if data.ndim == 3 and data.shape[2] == 1:
        data = data[:, :, 0]
    Image.fromarray(data).save(path)


def read_image(path) -> np.ndarray:
    """PNG/PPM/PGM or raw .f32 blob -> float (H, W, C) in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() in (".ppm", ".pgm"):
        return read_ppm(path)
    from PIL import Image

    img = np.asarray(Image.open(path).convert("RGB"), dtype=float) / 255.0
    return img
