"""Float rasters, PFM encode/decode, and sequence manifests.

PFM convention: ASCII header of three tokens (magic "Pf" for one channel or
"PF" for three, width/height, signed scale), a single whitespace byte, then
raw IEEE-754 float32 samples.  Scanlines are stored bottom-to-top in the
file; in memory rasters are top-to-bottom.  The sign of the scale encodes
endianness (negative = little-endian).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ManifestError,
    PfmError,
    PfmHeaderError,
    PfmScaleError,
    PfmTruncatedError,
)


@dataclass(frozen=True)
class FloatRaster:
    """A finite float32 image, (H, W) for one channel or (H, W, 3) for color."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float32)
        if arr.ndim == 2:
            pass
        elif arr.ndim == 3 and arr.shape[2] == 3:
            pass
        else:
            raise ValueError(f"raster must be (H, W) or (H, W, 3), got {arr.shape}")
        if arr.size == 0:
            raise ValueError("raster must be non-empty")
        if not np.all(np.isfinite(arr)):
            raise ValueError("raster contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3


@dataclass(frozen=True)
class StereoVideoSequence:
    """T rectified left/right pairs plus optional exact ground-truth disparity.

    ``occluded``, when present, marks left-view pixels with no counterpart in
    the right view (an in-memory extra produced by the generator, never
    serialized).
    """

    frames: tuple
    gt_disparity: tuple | None = None
    occluded: tuple | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.frames) < 1:
            raise ValueError("sequence needs at least one frame")
        h, w = self.frames[0][0].height, self.frames[0][0].width
        for left, right in self.frames:
            if (left.height, left.width) != (h, w) or (right.height, right.width) != (h, w):
                raise ValueError("all frames must share dimensions")
        if self.gt_disparity is not None:
            if len(self.gt_disparity) != len(self.frames):
                raise ValueError("gt list length must equal frame count")
            for g in self.gt_disparity:
                if (g.height, g.width) != (h, w):
                    raise ValueError("gt rasters must share frame dimensions")

    @property
    def T(self) -> int:
        return len(self.frames)

    @property
    def height(self) -> int:
        return self.frames[0][0].height

    @property
    def width(self) -> int:
        return self.frames[0][0].width


def write_pfm(raster: FloatRaster, scale: float = -1.0) -> bytes:
    """Encode a raster as PFM bytes.

    The sign of ``scale`` picks the payload byte order (negative =
    little-endian).  Rejects zero scale and non-finite data.
    """
    scale = float(scale)
    if scale == 0.0:
        raise PfmScaleError("scale must be non-zero (its sign encodes endianness)")
    if not np.all(np.isfinite(raster.data)):
        raise PfmError("refusing to write non-finite samples")
    magic = b"Pf" if raster.channels == 1 else b"PF"
    header = magic + b"\n" + f"{raster.width} {raster.height}\n{scale!r}\n".encode("ascii")
    # File order is bottom-to-top.
    flipped = np.flipud(raster.data).astype(np.float32)
    if scale < 0:
        payload = flipped.astype("<f4").tobytes()
    else:
        payload = flipped.astype(">f4").tobytes()
    return header + payload


def read_pfm(stream: bytes) -> FloatRaster:
    """Decode PFM bytes, normalizing scanlines to top-to-bottom."""
    tokens, offset = _header_tokens(stream)
    magic, width_s, height_s, scale_s = tokens
    if magic == b"Pf":
        channels = 1
    elif magic == b"PF":
        channels = 3
    else:
        raise PfmHeaderError(f"bad magic {magic!r}, expected b'Pf' or b'PF'")
    try:
        width, height = int(width_s), int(height_s)
    except ValueError as exc:
        raise PfmHeaderError(f"unparsable dimensions {width_s!r} {height_s!r}") from exc
    if width <= 0 or height <= 0:
        raise PfmHeaderError(f"non-positive dimensions {width}x{height}")
    try:
        scale = float(scale_s)
    except ValueError as exc:
        raise PfmScaleError(f"unparsable scale {scale_s!r}") from exc
    if scale == 0.0:
        raise PfmScaleError("zero scale, endianness undefined")

    count = width * height * channels
    payload = stream[offset:]
    if len(payload) < 4 * count:
        raise PfmTruncatedError(f"payload holds {len(payload)} bytes, need {4 * count}")
    dtype = "<f4" if scale < 0 else ">f4"
    flat = np.frombuffer(payload[: 4 * count], dtype=dtype)
    shape = (height, width) if channels == 1 else (height, width, 3)
    data = np.flipud(flat.reshape(shape)).astype(np.float32)
    return FloatRaster(data)


def _header_tokens(stream: bytes):
    """Return the four header tokens and the payload offset.

    Tokens are separated by arbitrary whitespace; exactly one whitespace byte
    follows the scale token before the payload begins.
    """
    tokens = []
    i = 0
    n = len(stream)
    for _ in range(4):
        while i < n and stream[i : i + 1].isspace():
            i += 1
        start = i
        while i < n and not stream[i : i + 1].isspace():
            i += 1
        if start == i:
            raise PfmHeaderError("truncated header")
        tokens.append(stream[start:i])
    if i >= n:
        raise PfmTruncatedError("header ends without payload")
    i += 1  # the single whitespace byte after the scale token
    return tokens, i


def read_pfm_file(path) -> FloatRaster:
    return read_pfm(Path(path).read_bytes())


def write_pfm_file(path, raster: FloatRaster, scale: float = -1.0) -> None:
    Path(path).write_bytes(write_pfm(raster, scale))


def write_manifest(path, frame_entries, width: int, height: int) -> None:
    """Write a sequence manifest.

    ``frame_entries`` is a list of {"left": path, "right": path, "gt": path or
    None}; paths are stored as given (normally relative to the manifest).
    """
    doc = {"frames": list(frame_entries), "width": int(width), "height": int(height)}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")


def read_manifest(path):
    """Load a manifest and its rasters into a StereoVideoSequence.

    Relative frame paths resolve against the manifest directory.  Returns
    (sequence, manifest_dict).
    """
    path = Path(path)
    if not path.exists():
        raise ManifestError(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ManifestError(f"manifest is not valid JSON: {path}: {exc}") from exc
    if not isinstance(doc, dict) or "frames" not in doc:
        raise ManifestError(f"manifest missing 'frames': {path}")
    base = path.parent
    frames = []
    gts = []
    has_gt = True
    for idx, entry in enumerate(doc["frames"]):
        try:
            left = read_pfm_file(_resolve(base, entry["left"]))
            right = read_pfm_file(_resolve(base, entry["right"]))
        except FileNotFoundError as exc:
            raise ManifestError(f"frame {idx}: missing file {exc.filename}") from exc
        except KeyError as exc:
            raise ManifestError(f"frame {idx}: manifest entry missing {exc}") from exc
        frames.append((left, right))
        gt_path = entry.get("gt")
        if gt_path is None:
            has_gt = False
        else:
            try:
                gts.append(read_pfm_file(_resolve(base, gt_path)))
            except FileNotFoundError as exc:
                raise ManifestError(f"frame {idx}: missing file {exc.filename}") from exc
    seq = StereoVideoSequence(
        frames=tuple(frames),
        gt_disparity=tuple(gts) if has_gt and gts else None,
    )
    return seq, doc


def _resolve(base: Path, p: str) -> Path:
    q = Path(p)
    return q if q.is_absolute() else base / q
