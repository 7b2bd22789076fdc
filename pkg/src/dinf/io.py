"""Netpbm images, CSV fields, point clouds, supervision filters and metrics."""
from __future__ import annotations

import csv
import re
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DataError, ParseError

PSNR_INF = float("inf")


# ---------------------------------------------------------------------------
# netpbm
# ---------------------------------------------------------------------------

_MAGIC = {b"P2": (1, False), b"P3": (3, False), b"P5": (1, True), b"P6": (3, True)}
_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _next_token(raw: bytes, pos: int, path, what: str):
    m = _TOKEN.match(raw, pos)
    if m is None:
        raise ParseError(f"{path}: missing {what} at byte {pos}")
    return m.group(1), m.end()


def _header_int(raw, pos, path, what):
    tok, end = _next_token(raw, pos, path, what)
    if not tok.isdigit() or int(tok) <= 0:
        raise ParseError(f"{path}: bad {what} {tok!r} at byte {end - len(tok)}")
    return int(tok), end


def read_pgm(path) -> np.ndarray:
    """Read P2/P3/P5/P6 into floats in [0, 1], shape (H, W) or (H, W, 3)."""
    with open(path, "rb") as fh:
        raw = fh.read()
    magic = raw[:2]
    if magic not in _MAGIC:
        raise ParseError(f"{path}: unknown magic {magic!r} at byte 0")
    channels, binary = _MAGIC[magic]
    pos = 2
    w, pos = _header_int(raw, pos, path, "width")
    h, pos = _header_int(raw, pos, path, "height")
    maxval, pos = _header_int(raw, pos, path, "maxval")
    if maxval > 65535:
        raise ParseError(f"{path}: maxval {maxval} above 65535 at byte {pos}")
    n = w * h * channels
    if binary:
        if pos >= len(raw) or not raw[pos : pos + 1].isspace():
            raise ParseError(f"{path}: expected one whitespace byte after the header at byte {pos}")
        pos += 1
        width = 2 if maxval > 255 else 1
        need = n * width
        body = raw[pos : pos + need]
        if len(body) < need:
            raise ParseError(f"{path}: payload needs {need} bytes from byte {pos}, found {len(body)}")
        vals = np.frombuffer(body, dtype=">u2" if width == 2 else np.uint8).astype(np.float64)
    else:
        parts = re.sub(rb"#[^\n]*", b"", raw[pos:]).split()
        if len(parts) < n:
            raise ParseError(f"{path}: expected {n} samples after byte {pos}, found {len(parts)}")
        try:
            vals = np.array([int(t) for t in parts[:n]], dtype=np.float64)
        except ValueError:
            raise ParseError(f"{path}: non-integer sample after byte {pos}") from None
    vals = np.clip(vals / maxval, 0.0, 1.0)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return vals.reshape(shape)


def write_pgm(path, img, maxval: int = 255, binary: bool = True):
    """Write (H, W) as P5/P2 or (H, W, 3) as P6/P3; values clipped to [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3 and img.shape[2] == 1:
        img = img[..., 0]
    if img.ndim not in (2, 3) or (img.ndim == 3 and img.shape[2] != 3) or img.size == 0:
        raise DataError(f"cannot write an image of shape {img.shape}")
    if maxval not in (255, 65535):
        raise DataError(f"maxval must be 255 or 65535, got {maxval}")
    h, w = img.shape[:2]
    color = img.ndim == 3
    q = np.rint(np.clip(np.nan_to_num(img), 0.0, 1.0) * maxval).astype(np.int64)
    magic = {(False, True): b"P5", (True, True): b"P6", (False, False): b"P2", (True, False): b"P3"}[(color, binary)]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n%d\n" % (w, h, maxval))
        if binary:
            fh.write(q.astype(">u2" if maxval > 255 else np.uint8).tobytes())
        else:
            per_row = w * (3 if color else 1)
            for row in q.reshape(h, per_row):
                fh.write(b" ".join(b"%d" % v for v in row) + b"\n")


def to_unit_range(a) -> np.ndarray:
    """Affine map of an array onto [0, 1] for display."""
    a = np.asarray(a, dtype=np.float64)
    lo, hi = np.nanmin(a), np.nanmax(a)
    return np.zeros_like(a) if hi <= lo else (a - lo) / (hi - lo)


def write_csv_field(path, values, header=None):
    """2D array as CSV rows; 1D arrays become one column."""
    values = np.asarray(values, dtype=np.float64)
    if values.ndim == 1:
        values = values[:, None]
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        if header:
            wr.writerow(header)
        for row in values:
            wr.writerow([repr(float(v)) for v in row])


def read_csv_field(path) -> np.ndarray:
    return np.loadtxt(path, delimiter=",", ndmin=2)


# ---------------------------------------------------------------------------
# point clouds
# ---------------------------------------------------------------------------


@dataclass
class PointCloud:
    points: np.ndarray
    normals: np.ndarray

    def __len__(self):
        return len(self.points)


def read_pointcloud(path, renorm_tol: float = 1e-3) -> PointCloud:
    """Lines of ``x y [z] nx ny [nz]``; '#' starts a comment.

    Normals within ``renorm_tol`` of unit length are renormalised, others
    rejected with the line number.
    """
    pts, nrm = [], []
    ncols = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            cols = body.split()
            if len(cols) not in (4, 6) or (ncols is not None and len(cols) != ncols):
                raise ParseError(f"{path}:{lineno}: expected 4 or 6 columns consistently, got {len(cols)}")
            ncols = len(cols)
            try:
                v = np.array([float(c) for c in cols])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-numeric value") from None
            d = ncols // 2
            p, n = v[:d], v[d:]
            if not np.all(np.isfinite(v)):
                raise ParseError(f"{path}:{lineno}: non-finite value")
            if np.any(np.abs(p) > 1.0):
                raise ParseError(f"{path}:{lineno}: point {p.tolist()} lies outside [-1, 1]^{d}")
            ln = np.linalg.norm(n)
            if abs(ln - 1.0) > renorm_tol:
                raise ParseError(f"{path}:{lineno}: normal length {ln:.6f} is not within {renorm_tol} of 1")
            pts.append(p)
            nrm.append(n / ln)
    if not pts:
        raise ParseError(f"{path}: no points")
    return PointCloud(np.array(pts), np.array(nrm))


def write_pointcloud(path, points, normals):
    with open(path, "w") as fh:
        fh.write("# x y [z] nx ny [nz]\n")
        for p, n in zip(np.asarray(points), np.asarray(normals)):
            fh.write(" ".join(repr(float(v)) for v in (*p, *n)) + "\n")


# ---------------------------------------------------------------------------
# supervision filters and pixel mapping
# ---------------------------------------------------------------------------

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]) / 8.0
LAPLACE = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


def _filter(img, kernel):
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise DataError(f"filters take a single channel, got shape {img.shape}")
    # correlate (not convolve) so the kernel reads as written: +x is to the right
    return ndimage.correlate(img, kernel, mode="nearest")


def sobel_gradients(img, scale: float = 10.0):
    """(gx, gy) in pixel units times ``scale``; x along columns, y along rows."""
    return _filter(img, SOBEL_X) * scale, _filter(img, SOBEL_X.T) * scale


def laplace_filter(img, scale: float = 1e4):
    return _filter(img, LAPLACE) * scale


def pixel_coords(h: int, w: int) -> np.ndarray:
    """Normalised centres of pixels in row-major order: (x0, x1) = (column, row)."""
    i, j = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    return np.stack([-1.0 + 2.0 * (j.ravel() + 0.5) / w, -1.0 + 2.0 * (i.ravel() + 0.5) / h], axis=1)


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, dc_align: bool = False) -> float:
    """10 log10(1 / MSE) for [0, 1] data; +inf when the images match."""
    a, b = _pair(a, b)
    diff = a - b
    if dc_align:
        diff = diff - diff.mean()
    mse = float(np.mean(diff * diff))
    # below 300 dB the residual is rounding noise, e.g. after DC alignment
    if mse <= 1e-30:
        return PSNR_INF
    return float(10.0 * np.log10(1.0 / mse))


def mae(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.mean(np.abs(a - b)))


def l1_error(a, b) -> float:
    return mae(a, b)


def l2_error(a, b) -> float:
    a, b = _pair(a, b)
    return float(np.sqrt(np.mean((a - b) ** 2)))


def ls_scale(u, ref) -> float:
    """Real scalar c minimising ||c u - ref||^2."""
    u, ref = _pair(u, ref)
    den = float(np.sum(u * u))
    return 1.0 if den == 0.0 else float(np.sum(u * ref) / den)
