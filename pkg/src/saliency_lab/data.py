"""Synthetic fixation datasets and file I/O.

On disk a dataset is a directory holding ``manifest.jsonl`` plus
``images/<id>.ppm`` (binary P6), ``maps/<id>.pfm`` (little-endian ``Pf``
float map) and ``fixations/<id>.txt`` (one ``x y`` pair per line).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np

from .metrics import gaussian_blur

MANIFEST_NAME = "manifest.jsonl"
VAL_FRACTION = 0.1


class FormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# netpbm / pfm
# ---------------------------------------------------------------------------

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _header(data: bytes, count: int) -> tuple[list[bytes], int]:
    tokens, pos = [], 0
    for _ in range(count):
        m = _TOKEN.match(data, pos)
        if not m:
            raise FormatError("malformed header")
        tokens.append(m.group(1))
        pos = m.end()
    if pos >= len(data) or data[pos:pos + 1] not in b" \t\r\n":
        raise FormatError("malformed header: missing separator before payload")
    return tokens, pos + 1


def _dims(tokens) -> tuple[int, int, int]:
    try:
        w, h, maxval = (int(t) for t in tokens[1:4])
    except ValueError as exc:
        raise FormatError(f"malformed header: {exc}") from None
    if w <= 0 or h <= 0:
        raise FormatError(f"bad dimensions {w}x{h}")
    if maxval != 255:
        raise FormatError(f"only 8-bit files are supported (maxval {maxval})")
    return w, h, maxval


def _quantize(x: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(np.asarray(x, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)


def _out(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_image(path, image) -> None:
    """Write a (3, H, W) image in [0, 1] as binary PPM."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[0] != 3:
        raise ValueError(f"image must have shape (3, H, W), got {image.shape}")
    _, h, w = image.shape
    payload = _quantize(image).transpose(1, 2, 0).tobytes()
    _out(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + payload)


def read_image(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = _header(data, 4)
    if tokens[0] != b"P6":
        raise FormatError(f"{path}: expected P6 pixmap, got {tokens[0]!r}")
    w, h, _ = _dims(tokens)
    need = w * h * 3
    if len(data) - pos < need:
        raise FormatError(f"{path}: truncated payload ({len(data) - pos} of {need} bytes)")
    raw = np.frombuffer(data, np.uint8, need, pos).reshape(h, w, 3)
    return raw.transpose(2, 0, 1).astype(np.float64) / 255.0


def _write_pgm(path, m: np.ndarray) -> None:
    h, w = m.shape
    _out(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + _quantize(m).tobytes())


def _read_pgm(path, data: bytes) -> np.ndarray:
    tokens, pos = _header(data, 4)
    if tokens[0] != b"P5":
        raise FormatError(f"{path}: expected P5 graymap, got {tokens[0]!r}")
    w, h, _ = _dims(tokens)
    if len(data) - pos < w * h:
        raise FormatError(f"{path}: truncated payload")
    return np.frombuffer(data, np.uint8, w * h, pos).reshape(h, w).astype(np.float64) / 255.0


def _write_pfm(path, m: np.ndarray) -> None:
    h, w = m.shape
    if not np.isfinite(m).all():
        raise ValueError("refusing to write non-finite values")
    body = np.ascontiguousarray(m[::-1], dtype="<f4").tobytes()  # bottom row first
    _out(path).write_bytes(f"Pf\n{w} {h}\n-1.0\n".encode() + body)


def _read_pfm(path, data: bytes) -> np.ndarray:
    tokens, pos = _header(data, 4)
    if tokens[0] != b"Pf":
        raise FormatError(f"{path}: expected Pf float map, got {tokens[0]!r}")
    try:
        w, h = int(tokens[1]), int(tokens[2])
        scale = float(tokens[3])
    except ValueError as exc:
        raise FormatError(f"{path}: malformed header: {exc}") from None
    if w <= 0 or h <= 0 or scale == 0:
        raise FormatError(f"{path}: bad header values")
    dtype = "<f4" if scale < 0 else ">f4"
    if len(data) - pos < 4 * w * h:
        raise FormatError(f"{path}: truncated payload")
    m = np.frombuffer(data, dtype, w * h, pos).reshape(h, w)[::-1].astype(np.float64)
    if np.isnan(m).any():
        raise FormatError(f"{path}: float map contains NaN")
    return m


def write_map(path, m) -> None:
    """Write a 2-D map; ``.pfm`` stores float32 exactly, ``.pgm`` quantizes to 8 bits."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim == 3 and m.shape[0] == 1:
        m = m[0]
    if m.ndim != 2:
        raise ValueError(f"map must be 2-D, got shape {m.shape}")
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        _write_pfm(path, m)
    elif suffix == ".pgm":
        _write_pgm(path, m)
    else:
        raise ValueError(f"unsupported map extension {suffix!r} (use .pfm or .pgm)")


def read_map(path) -> np.ndarray:
    suffix = Path(path).suffix.lower()
    data = Path(path).read_bytes()
    if suffix == ".pfm":
        return _read_pfm(path, data)
    if suffix == ".pgm":
        return _read_pgm(path, data)
    raise ValueError(f"unsupported map extension {suffix!r} (use .pfm or .pgm)")


def map_files(directory) -> dict[str, Path]:
    files = {}
    for p in sorted(Path(directory).iterdir()):
        if p.suffix.lower() in (".pfm", ".pgm"):
            if p.stem in files:
                raise ValueError(f"duplicate map id {p.stem!r} in {directory}")
            files[p.stem] = p
    return files


# ---------------------------------------------------------------------------
# fixations
# ---------------------------------------------------------------------------


def read_fixations(path) -> list[tuple[int, int]]:
    points = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'x y', got {line!r}")
        try:
            points.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise FormatError(f"{path}:{lineno}: non-integer token in {line!r}") from None
    return points


def write_fixations(path, points) -> None:
    _out(path).write_text("".join(f"{int(x)} {int(y)}\n" for x, y in points), encoding="utf-8")


def fixation_indicator(points, height: int, width: int) -> np.ndarray:
    m = np.zeros((height, width))
    for x, y in points:
        if not (0 <= x < width and 0 <= y < height):
            raise ValueError(f"fixation ({x}, {y}) outside {width}x{height}")
        m[y, x] = 1.0
    return m


def ground_truth_map(points, height: int, width: int, sigma: float) -> np.ndarray:
    """Blurred fixation indicator scaled so its peak is 1."""
    m = gaussian_blur(fixation_indicator(points, height, width), sigma)
    return m / m.max()


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


@dataclass
class ManifestEntry:
    id: str
    image: str
    map: str
    fixations: str
    split: str = "train"


@dataclass
class Manifest:
    root: Path
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        self.root = Path(self.root)
        ids = [e.id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ValueError("manifest ids must be unique")

    def path(self, rel: str) -> Path:
        return self.root / rel

    def to_text(self) -> str:
        return "".join(json.dumps(asdict(e), sort_keys=True) + "\n" for e in self.entries)

    def save(self, path=None) -> Path:
        path = Path(path) if path else self.root / MANIFEST_NAME
        path.write_text(self.to_text(), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path) -> "Manifest":
        path = Path(path)
        if path.is_dir():
            path = path / MANIFEST_NAME
        entries = [
            ManifestEntry(**json.loads(line))
            for line in path.read_text(encoding="utf-8").splitlines()
            if line.strip()
        ]
        return cls(path.parent, entries)


def val_count(n: int) -> int:
    return int(round(n * VAL_FRACTION))


# ---------------------------------------------------------------------------
# synthetic generation
# ---------------------------------------------------------------------------


def _smooth_noise(rng, h, w, cells):
    coarse = rng.random((cells[0] + 1, cells[1] + 1))
    ys = np.linspace(0, cells[0], h)
    xs = np.linspace(0, cells[1], w)
    y0, x0 = np.floor(ys).astype(int).clip(max=cells[0] - 1), np.floor(xs).astype(int).clip(max=cells[1] - 1)
    fy, fx = (ys - y0)[:, None], (xs - x0)[None, :]
    a = coarse[y0][:, x0]
    b = coarse[y0][:, x0 + 1]
    c = coarse[y0 + 1][:, x0]
    d = coarse[y0 + 1][:, x0 + 1]
    return a * (1 - fy) * (1 - fx) + b * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx


def synth_sample(rng: np.random.Generator, width: int, height: int, sigma: float,
                 objects=(1, 3), fixations_per_object=(3, 8)):
    """One (image, fixations, ground-truth map) triple."""
    h, w = height, width
    base = 0.3 + 0.15 * _smooth_noise(rng, h, w, (3, 4))
    image = np.stack([base * rng.uniform(0.8, 1.2) for _ in range(3)])
    image += rng.normal(0.0, 0.03, size=image.shape)
    ys, xs = np.mgrid[0:h, 0:w]
    points = []
    for _ in range(rng.integers(objects[0], objects[1] + 1)):
        r = rng.uniform(0.06, 0.14) * w
        cx, cy = rng.uniform(r, w - r), rng.uniform(r, min(h - r, h - 1))
        if rng.random() < 0.5:
            inside = (xs - cx) ** 2 + (ys - cy) ** 2 <= r * r
        else:
            rw, rh = r * rng.uniform(0.7, 1.3), r * rng.uniform(0.7, 1.3)
            inside = (np.abs(xs - cx) <= rw) & (np.abs(ys - cy) <= rh)
        color = rng.uniform(0.0, 1.0, 3)
        color[rng.integers(3)] = 1.0
        image[:, inside] = color[:, None]
        for _ in range(rng.integers(fixations_per_object[0], fixations_per_object[1] + 1)):
            fx, fy = rng.normal(cx, r / 2), rng.normal(cy, r / 2)
            points.append((int(np.clip(round(fx), 0, w - 1)), int(np.clip(round(fy), 0, h - 1))))
    for _ in range(max(1, round(0.1 * len(points)))):
        points.append((int(rng.integers(0, w)), int(rng.integers(0, h))))
    image = np.clip(image, 0.0, 1.0)
    return image, points, ground_truth_map(points, h, w, sigma)


def gen_synthetic(out, count: int, width: int = 64, height: int = 48, sigma: float | None = None,
                  objects=(1, 3), seed: int = 0, fixations_per_object=(3, 8)) -> Manifest:
    """Write ``count`` synthetic samples plus ``manifest.jsonl`` under ``out``.

    The last 10% of entries are tagged ``val``.
    """
    if width % 16 or height % 16:
        raise ValueError(f"width and height must be divisible by 16, got {width}x{height}")
    if count < 1:
        raise ValueError("count must be >= 1")
    sigma = width / 16 if sigma is None else sigma
    out = Path(out)
    for sub in ("images", "maps", "fixations"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    n_val = val_count(count)
    entries = []
    for k in range(count):
        sid = f"img_{k:05d}"
        image, points, gt = synth_sample(rng, width, height, sigma, objects, fixations_per_object)
        entry = ManifestEntry(sid, f"images/{sid}.ppm", f"maps/{sid}.pfm", f"fixations/{sid}.txt",
                              "val" if k >= count - n_val else "train")
        write_image(out / entry.image, image)
        write_map(out / entry.map, gt)
        write_fixations(out / entry.fixations, points)
        entries.append(entry)
    manifest = Manifest(out, entries)
    manifest.save()
    return manifest


# ---------------------------------------------------------------------------
# in-memory dataset
# ---------------------------------------------------------------------------


@dataclass
class Dataset:
    ids: list[str]
    images: np.ndarray  # (n, 3, H, W)
    maps: np.ndarray  # (n, 1, H, W)
    fixations: list[list[tuple[int, int]]]
    splits: list[str]

    def __len__(self) -> int:
        return len(self.ids)

    @property
    def image_size(self) -> tuple[int, int]:
        """(width, height)"""
        return self.images.shape[3], self.images.shape[2]

    @classmethod
    def load(cls, manifest) -> "Dataset":
        if not isinstance(manifest, Manifest):
            manifest = Manifest.load(manifest)
        ids, images, maps, fixes, splits = [], [], [], [], []
        for e in manifest.entries:
            img = read_image(manifest.path(e.image))
            m = read_map(manifest.path(e.map))
            if m.shape != img.shape[1:]:
                raise ValueError(f"{e.id}: map {m.shape} does not match image {img.shape[1:]}")
            pts = read_fixations(manifest.path(e.fixations))
            h, w = m.shape
            for x, y in pts:
                if not (0 <= x < w and 0 <= y < h):
                    raise ValueError(f"{e.id}: fixation ({x}, {y}) outside {w}x{h}")
            ids.append(e.id)
            images.append(img)
            maps.append(m[None])
            fixes.append(pts)
            splits.append(e.split)
        if not ids:
            raise ValueError("empty dataset")
        return cls(ids, np.stack(images), np.stack(maps), fixes, splits)

    def subset(self, index) -> "Dataset":
        index = list(index)
        return Dataset([self.ids[i] for i in index], self.images[index], self.maps[index],
                       [self.fixations[i] for i in index], [self.splits[i] for i in index])

    def split(self, tag: str) -> "Dataset":
        return self.subset(i for i, s in enumerate(self.splits) if s == tag)

    def batches(self, batch_size: int, rng: np.random.Generator | None = None) -> Iterator[np.ndarray]:
        """Index arrays covering every sample once; shuffled when ``rng`` is given."""
        if batch_size < 1:
            raise ValueError("batch size must be >= 1")
        order = rng.permutation(len(self)) if rng is not None else np.arange(len(self))
        for start in range(0, len(self), batch_size):
            yield order[start:start + batch_size]

    def num_batches(self, batch_size: int) -> int:
        return math.ceil(len(self) / batch_size)
