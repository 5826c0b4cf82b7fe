"""Evaluation quantities: angular error traces, peak-to-valley response
times, symmetric Chamfer distance, contrast-to-noise ratio, and force-error
statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import PointCloud


@dataclass
class TimeSeries:
    t: np.ndarray        # (N,), strictly increasing
    values: np.ndarray   # (N,) scalars or (N, k) vectors

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.t.ndim != 1 or len(self.t) != len(self.values):
            raise ValueError("t and values must have matching length")
        if len(self.t) > 1 and np.any(np.diff(self.t) <= 0):
            raise ValueError("time stamps must be strictly increasing")

    def __len__(self):
        return len(self.t)


@dataclass
class GrayImage:
    pixels: np.ndarray   # (H, W), unitless intensities >= 0

    def __post_init__(self):
        self.pixels = np.asarray(self.pixels, dtype=float)
        if self.pixels.ndim != 2:
            raise ValueError("image must be a 2-D grid")
        if not np.all(np.isfinite(self.pixels)) or np.any(self.pixels < 0):
            raise ValueError("intensities must be finite and nonnegative")

    @property
    def height(self):
        return self.pixels.shape[0]

    @property
    def width(self):
        return self.pixels.shape[1]


@dataclass(frozen=True)
class ROI:
    x: int
    y: int
    w: int = 10
    h: int = 10

    def slice_from(self, img: GrayImage) -> np.ndarray:
        if self.w <= 0 or self.h <= 0:
            raise ValueError("ROI must have positive extent")
        if self.x < 0 or self.y < 0 or self.x + self.w > img.width or self.y + self.h > img.height:
            raise ValueError("ROI outside image bounds")
        return img.pixels[self.y:self.y + self.h, self.x:self.x + self.w]


def angular_error_series(v_ee: TimeSeries, v_gt: TimeSeries) -> TimeSeries:
    """Per-sample angle (degrees) between two synchronized vector series."""
    if len(v_ee) != len(v_gt) or not np.array_equal(v_ee.t, v_gt.t):
        raise ValueError("series must be synchronized")
    a = v_ee.values / np.linalg.norm(v_ee.values, axis=1, keepdims=True)
    b = v_gt.values / np.linalg.norm(v_gt.values, axis=1, keepdims=True)
    dots = np.clip(np.einsum("ij,ij->i", a, b), -1.0, 1.0)
    return TimeSeries(t=v_ee.t.copy(), values=np.degrees(np.arccos(dots)))


def response_time(err: TimeSeries, peak_threshold: float = 5.0) -> list[float]:
    """Peak-to-valley durations, one per above-threshold excursion.

    A peak is a 3-sample local maximum above the threshold; only the first
    peak of each excursion counts (re-armed when the trace drops back below
    the threshold).  Its valley is the lowest sample before the next counted
    peak (or the end of the trace).
    """
    if len(err) == 0:
        raise ValueError("empty series")
    v, t = err.values, err.t
    peaks = []
    armed = True
    for i in range(1, len(v) - 1):
        if v[i] <= peak_threshold:
            armed = True
            continue
        if armed and v[i] > v[i - 1] and v[i] >= v[i + 1]:
            peaks.append(i)
            armed = False
    out = []
    for k, pk in enumerate(peaks):
        end = peaks[k + 1] if k + 1 < len(peaks) else len(v)
        seg = v[pk + 1:end]
        if seg.size == 0:
            continue
        vi = pk + 1 + int(np.argmin(seg))
        out.append(float(t[vi] - t[pk]))
    return out


def chamfer_distance(a: PointCloud, b: PointCloud) -> float:
    if len(a) == 0 or len(b) == 0:
        raise ValueError("chamfer distance needs nonempty clouds")
    d_ab, _ = cKDTree(b.points).query(a.points)
    d_ba, _ = cKDTree(a.points).query(b.points)
    return 0.5 * (np.mean(d_ab) + np.mean(d_ba))


def cnr(img: GrayImage, roi: ROI, bg: ROI) -> float:
    """Contrast-to-noise ratio |mu_roi - mu_bg| / sqrt(var_roi + var_bg),
    population variances."""
    a = roi.slice_from(img)
    b = bg.slice_from(img)
    mu_a, mu_b = np.mean(a), np.mean(b)
    var = np.var(a) + np.var(b)
    if var == 0.0:
        if mu_a == mu_b:
            return 0.0
        raise ZeroDivisionError("zero variance with distinct means")
    return float(abs(mu_a - mu_b) / math.sqrt(var))


def force_error_stats(force: TimeSeries, f_desired: float) -> tuple[float, float, float]:
    """(mean, population std, fraction with |error| <= 0.5 N) of force error."""
    if len(force) == 0:
        raise ValueError("empty series")
    err = force.values - f_desired
    return (float(np.mean(err)), float(np.std(err)),
            float(np.mean(np.abs(err) <= 0.5)))


# ---------------------------------------------------------------------------
# file I/O

def save_timeseries_csv(path, series: TimeSeries):
    with open(path, "w") as f:
        f.write("t,value\n")
        for t, v in zip(series.t, series.values):
            f.write(f"{t:.9g},{v:.9g}\n")


def load_timeseries_csv(path) -> TimeSeries:
    ts, vs = [], []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            try:
                t = float(parts[0])
            except ValueError:
                continue  # header
            ts.append(t)
            vs.append(float(parts[1]))
    return TimeSeries(t=np.array(ts), values=np.array(vs))


def save_pgm(path, img: GrayImage, maxval: int = 255, binary: bool = True):
    data = np.rint(np.clip(img.pixels, 0, maxval)).astype(np.uint16)
    header = f"P5\n{img.width} {img.height}\n{maxval}\n" if binary else \
             f"P2\n{img.width} {img.height}\n{maxval}\n"
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        if binary:
            f.write(data.astype(">u2" if maxval > 255 else np.uint8).tobytes())
        else:
            body = "\n".join(" ".join(str(int(x)) for x in row) for row in data)
            f.write((body + "\n").encode("ascii"))


def load_pgm(path) -> GrayImage:
    with open(path, "rb") as f:
        raw = f.read()

    tokens = []
    pos = 0
    while len(tokens) < 4:
        # header tokens with '#' comments, whitespace separated
        if pos >= len(raw):
            raise ValueError("truncated PGM header")
        ch = raw[pos:pos + 1]
        if ch == b"#":
            pos = raw.index(b"\n", pos) + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(raw) and not raw[end:end + 1].isspace():
                end += 1
            tokens.append(raw[pos:end])
            pos = end
    magic, width, height, maxval = tokens[0], int(tokens[1]), int(tokens[2]), int(tokens[3])
    if magic == b"P2":
        vals = np.array(raw[pos:].split(), dtype=float)
    elif magic == b"P5":
        pos += 1  # single whitespace after maxval
        dtype = ">u2" if maxval > 255 else np.uint8
        vals = np.frombuffer(raw[pos:], dtype=dtype, count=width * height).astype(float)
    else:
        raise ValueError(f"unsupported PGM magic {magic!r}")
    if vals.size != width * height:
        raise ValueError("pixel count does not match header")
    return GrayImage(pixels=vals.reshape(height, width))
