"""PGM/PPM images, curve CSV and level-set text matrices."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .curve import ClosedCurve
from .grid import GridSpec, ScalarField

MAX_MAXVAL = 65535


class ImageFormatError(ValueError):
    code = "image_format"


class MalformedHeader(ImageFormatError):
    code = "malformed_header"


class TruncatedPayload(ImageFormatError):
    code = "truncated_payload"


class UnsupportedMaxval(ImageFormatError):
    code = "unsupported_maxval"


class ImageTooSmall(ImageFormatError):
    code = "image_too_small"


def _header(data: bytes):
    """Parse magic, width, height, maxval; return them and the payload offset."""
    fields: list[bytes] = []
    pos = 0
    n = len(data)
    while len(fields) < 4:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise MalformedHeader(f"header ends after {len(fields)} of 4 fields")
        fields.append(data[start:pos])
    magic = fields[0].decode("ascii", "replace")
    if magic not in ("P2", "P3", "P5", "P6"):
        raise MalformedHeader(f"unsupported magic number {magic!r}")
    try:
        width, height, maxval = (int(f) for f in fields[1:])
    except ValueError:
        raise MalformedHeader(f"non-integer header fields {fields[1:]}") from None
    if width < 1 or height < 1:
        raise MalformedHeader(f"bad dimensions {width}x{height}")
    if maxval < 1:
        raise MalformedHeader(f"bad maxval {maxval}")
    if maxval > MAX_MAXVAL:
        raise UnsupportedMaxval(f"maxval {maxval} exceeds {MAX_MAXVAL}")
    # exactly one whitespace byte separates the header from a binary payload
    if pos >= n and magic in ("P5", "P6"):
        raise TruncatedPayload("no payload after header")
    return magic, width, height, maxval, pos + 1


def _decode(data: bytes):
    if not data:
        raise MalformedHeader("empty file")
    magic, w, h, maxval, offset = _header(data)
    channels = 3 if magic in ("P3", "P6") else 1
    count = w * h * channels
    if magic in ("P5", "P6"):
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        payload = data[offset:offset + count * dtype.itemsize]
        if len(payload) < count * dtype.itemsize:
            raise TruncatedPayload(f"expected {count * dtype.itemsize} payload bytes, got {len(payload)}")
        raw = np.frombuffer(payload, dtype=dtype).astype(float)
    else:
        tokens = data[offset - 1:].split()
        if len(tokens) < count:
            raise TruncatedPayload(f"expected {count} samples, got {len(tokens)}")
        try:
            raw = np.array([int(t) for t in tokens[:count]], dtype=float)
        except ValueError:
            raise MalformedHeader("non-integer sample in ASCII payload") from None
    if raw.max(initial=0) > maxval:
        raise MalformedHeader(f"sample exceeds maxval {maxval}")
    values = raw / maxval
    spec = GridSpec(w, h) if w >= 3 and h >= 3 else None
    return spec, values, channels, (h, w)


def _fields(spec, values, channels, shape):
    if spec is None:
        raise ImageTooSmall(f"image {shape[1]}x{shape[0]} is smaller than the 3x3 minimum grid")
    if channels == 1:
        return ScalarField(spec, values.reshape(shape))
    rgb = values.reshape(shape + (3,))
    return tuple(ScalarField(spec, rgb[..., k]) for k in range(3))


def read_image(path) -> ScalarField | tuple[ScalarField, ScalarField, ScalarField]:
    """Read P2/P5 as one field or P3/P6 as three, scaled to [0, 1] by maxval."""
    data = Path(path).read_bytes()
    return _fields(*_decode(data))


def read_image_array(data: bytes) -> np.ndarray:
    """Decode image bytes to an array of values in [0, 1] (any size)."""
    _, values, channels, shape = _decode(data)
    return values.reshape(shape + ((3,) if channels == 3 else ()))


def encode_pgm(values: np.ndarray, maxval: int = 255) -> bytes:
    if not 1 <= maxval <= MAX_MAXVAL:
        raise ValueError(f"maxval must be in [1, {MAX_MAXVAL}]")
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("image values must be finite")
    q = np.rint(np.clip(v, 0.0, 1.0) * maxval)
    dtype = ">u2" if maxval > 255 else "u1"
    h, w = v.shape
    return f"P5\n{w} {h}\n{maxval}\n".encode("ascii") + q.astype(dtype).tobytes()


def write_image(field: ScalarField, path, maxval: int = 255) -> None:
    """Binary P5 with values clamped to [0, 1] and quantised by ``round(v * maxval)``."""
    Path(path).write_bytes(encode_pgm(field.values, maxval))


def write_mask(mask: np.ndarray, path) -> None:
    """P5 with 255 on ``True`` pixels."""
    Path(path).write_bytes(encode_pgm(np.asarray(mask, dtype=float), 255))


def curves_csv(curves) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "node", "x", "y"])
    for step, c in sorted(curves, key=lambda sc: sc[0]):
        pts = c.points if isinstance(c, ClosedCurve) else np.asarray(c, dtype=float)
        for i, (x, y) in enumerate(pts):
            w.writerow([int(step), i, f"{x:.9g}", f"{y:.9g}"])
    return buf.getvalue()


def export_curve_csv(curves, path) -> None:
    """Write ``(step, curve)`` pairs as ``step,node,x,y`` rows, 9 significant digits."""
    Path(path).write_text(curves_csv(curves))


def read_curve_csv(path) -> list[tuple[int, np.ndarray]]:
    out: dict[int, list] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.setdefault(int(row["step"]), []).append((int(row["node"]), float(row["x"]), float(row["y"])))
    return [(s, np.array([(x, y) for _, x, y in sorted(rows)])) for s, rows in sorted(out.items())]


def save_matrix(field: ScalarField, path) -> None:
    """Plain-text matrix, one image row per line, round-trip exact."""
    np.savetxt(path, field.values, fmt="%.17g")


def load_matrix(path, hx: float = 1.0, hy: float = 1.0) -> ScalarField:
    return ScalarField.from_array(np.loadtxt(path, ndmin=2), hx, hy)
