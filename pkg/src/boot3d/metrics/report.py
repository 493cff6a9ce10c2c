"""Per-sample NME evaluation with pose buckets, cumulative curves and plots."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .._parallel import parallel_map
from ..errors import Boot3dError, InvalidInputError
from ..geometry.mesh import TriangleMesh
from ..geometry.bvh import build_bvh
from ..viewgen import apply_transform
from .distance import icp_align, interocular_distance, nme, proxy_interocular

BUCKET_WIDTH = 10.0
ROW_HEADER = ["id", "yaw_deg", "pitch_deg", "nme", "aligned", "flags"]


@dataclass(frozen=True)
class EvalPair:
    id: str
    pred: TriangleMesh
    gt: TriangleMesh
    yaw_deg: float
    pitch_deg: float = 0.0


@dataclass(frozen=True)
class NmeRow:
    id: str
    yaw_deg: float
    pitch_deg: float
    nme: float
    aligned: bool
    flags: str = ""

    @property
    def ok(self) -> bool:
        return math.isfinite(self.nme)


@dataclass(frozen=True)
class BucketStat:
    lo: float
    hi: float
    count: int
    mean: float
    std: float


def bucket_of(yaw_deg: float, width: float = BUCKET_WIDTH) -> float:
    return math.floor(yaw_deg / width) * width


@dataclass
class NmeReport:
    rows: list[NmeRow]
    bucket_width: float = BUCKET_WIDTH
    buckets: list[BucketStat] = field(init=False)
    curve: list[tuple[float, float]] = field(init=False)

    def __post_init__(self):
        self.rows = sorted(self.rows, key=lambda r: r.id)
        self.buckets = self._bucketize(lambda r: r.yaw_deg, self.bucket_width)
        vals = np.sort(self.values())
        n = len(vals)
        curve = []
        for i, v in enumerate(vals):
            if curve and curve[-1][0] == v:
                curve[-1] = (float(v), (i + 1) / n)
            else:
                curve.append((float(v), (i + 1) / n))
        self.curve = curve

    def values(self) -> np.ndarray:
        return np.array([r.nme for r in self.rows if r.ok], dtype=np.float64)

    @property
    def n_valid(self) -> int:
        return int(sum(r.ok for r in self.rows))

    @property
    def mean(self) -> float:
        v = self.values()
        return float(v.mean()) if len(v) else math.nan

    @property
    def median(self) -> float:
        v = self.values()
        return float(np.median(v)) if len(v) else math.nan

    def _bucketize(self, key, width) -> list[BucketStat]:
        groups: dict[float, list[float]] = {}
        for r in self.rows:
            if r.ok:
                groups.setdefault(bucket_of(key(r), width), []).append(r.nme)
        out = []
        for lo in sorted(groups):
            v = np.array(groups[lo])
            out.append(BucketStat(lo, lo + width, len(v), float(v.mean()), float(v.std())))
        return out

    def abs_yaw_buckets(self, width: float = 20.0) -> list[BucketStat]:
        """Buckets over |yaw|, so mirrored poses pool together."""
        return self._bucketize(lambda r: abs(r.yaw_deg), width)

    def bucket_mean(self, lo: float, hi: float, absolute: bool = True) -> float:
        """Mean NME over rows with ``lo <= (|yaw| or yaw) < hi``."""
        v = [r.nme for r in self.rows
             if r.ok and lo <= (abs(r.yaw_deg) if absolute else r.yaw_deg) < hi]
        return float(np.mean(v)) if v else math.nan

    # --- output -----------------------------------------------------------

    def write_rows_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(ROW_HEADER)
            for r in self.rows:
                w.writerow([r.id, repr(float(r.yaw_deg)), repr(float(r.pitch_deg)), repr(float(r.nme)),
                            int(r.aligned), r.flags])

    def write_aggregate_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["key", "lo", "hi", "count", "mean", "std"])
            w.writerow(["all", "", "", self.n_valid, repr(self.mean), ""])
            w.writerow(["median", "", "", self.n_valid, repr(self.median), ""])
            w.writerow(["flagged", "", "", len(self.rows) - self.n_valid, "", ""])
            for b in self.buckets:
                w.writerow(["yaw", repr(b.lo), repr(b.hi), b.count, repr(b.mean), repr(b.std)])
            for b in self.abs_yaw_buckets():
                w.writerow(["abs_yaw", repr(b.lo), repr(b.hi), b.count, repr(b.mean), repr(b.std)])

    def write_all(self, out_dir, prefix: str = "nme") -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / f"{prefix}_rows.csv", out / f"{prefix}_aggregate.csv",
                 out / f"{prefix}_by_yaw.svg", out / f"{prefix}_cumulative.svg"]
        self.write_rows_csv(paths[0])
        self.write_aggregate_csv(paths[1])
        paths[2].write_text(bar_chart_svg(
            [f"{b.lo:g}" for b in self.buckets], [100.0 * b.mean for b in self.buckets],
            "yaw of input image (deg)", "NME (%)"))
        paths[3].write_text(curve_svg([100.0 * t for t, _ in self.curve], [100.0 * f for _, f in self.curve],
                                      "NME (%)", "% images"))
        return paths


def read_rows_csv(path) -> list[NmeRow]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ROW_HEADER:
        raise InvalidInputError(f"{path}: not an NME rows CSV")
    return [NmeRow(r[0], float(r[1]), float(r[2]), float(r[3]), bool(int(r[4])), r[5]) for r in rows[1:]]


def evaluate_pair(pair: EvalPair, align: bool = True, d_mode: str = "landmark", max_iters: int = 50) -> NmeRow:
    """One row; any pipeline error becomes a flagged row with NaN NME."""
    flags = []
    try:
        if d_mode == "landmark":
            d = interocular_distance(pair.gt)
        elif d_mode == "proxy":
            try:
                d = interocular_distance(pair.gt)
            except Boot3dError:
                d = proxy_interocular(pair.gt)
                flags.append("proxy-d")
        else:
            raise InvalidInputError(f"unknown d_mode {d_mode!r}")
        index = build_bvh(pair.gt)
        pred = pair.pred
        if align:
            res = icp_align(pred, pair.gt, max_iters=max_iters, index=index)
            pred = apply_transform(pred, res.transform)
        value = nme(pred, index, d)
    except Boot3dError as exc:
        flags.append(exc.code)
        value = math.nan
    return NmeRow(pair.id, float(pair.yaw_deg), float(pair.pitch_deg), value, bool(align), ";".join(flags))


def evaluate_pairs(pairs, align: bool = True, d_mode: str = "landmark", threads: int | None = None) -> NmeReport:
    pairs = list(pairs)
    if not pairs:
        raise InvalidInputError("evaluate_pairs needs at least one pair")
    pairs = [p if isinstance(p, EvalPair) else EvalPair(f"{i:06d}", *p) for i, p in enumerate(pairs)]
    rows = parallel_map(lambda p: evaluate_pair(p, align, d_mode), pairs, threads)
    return NmeReport(rows)


# --- SVG --------------------------------------------------------------------

_W, _H, _M = 480, 320, 48


def _data_comment(xs, ys) -> str:
    body = "\n".join(f"{x},{y!r}" for x, y in zip(xs, ys))
    return f"<!-- data\nx,y\n{body}\n-->"


def _frame(xlabel: str, ylabel: str) -> list[str]:
    return [
        f'<line x1="{_M}" y1="{_H - _M}" x2="{_W - 10}" y2="{_H - _M}" stroke="black"/>',
        f'<line x1="{_M}" y1="{_H - _M}" x2="{_M}" y2="10" stroke="black"/>',
        f'<text x="{_W / 2}" y="{_H - 8}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="12" y="{_H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 12 {_H / 2})">{ylabel}</text>',
    ]


def _svg(parts: list[str]) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
            f'viewBox="0 0 {_W} {_H}">\n' + "\n".join(parts) + "\n</svg>\n")


def bar_chart_svg(labels, values, xlabel: str, ylabel: str) -> str:
    values = [float(v) for v in values]
    parts = [_data_comment(labels, values)] + _frame(xlabel, ylabel)
    top = max([v for v in values if math.isfinite(v)] + [1e-12])
    n = max(len(values), 1)
    slot = (_W - _M - 20) / n
    for i, (lab, v) in enumerate(zip(labels, values)):
        h = 0.0 if not math.isfinite(v) else (_H - _M - 20) * v / top
        x = _M + i * slot + 0.15 * slot
        parts.append(f'<rect x="{x:.2f}" y="{_H - _M - h:.2f}" width="{0.7 * slot:.2f}" height="{h:.2f}" '
                     f'fill="steelblue"/>')
        parts.append(f'<text x="{x + 0.35 * slot:.2f}" y="{_H - _M + 14}" text-anchor="middle" '
                     f'font-size="10">{lab}</text>')
    parts.append(f'<text x="{_M - 4}" y="16" text-anchor="end" font-size="10">{top:.3g}</text>')
    return _svg(parts)


def curve_svg(xs, ys, xlabel: str, ylabel: str) -> str:
    xs = [float(x) for x in xs]
    ys = [float(y) for y in ys]
    parts = [_data_comment(xs, ys)] + _frame(xlabel, ylabel)
    right = max(xs + [1e-12])
    top = max(ys + [1e-12])
    pts = []
    prev_y = 0.0
    for x, y in zip(xs, ys):
        # step curve: fraction jumps at each threshold
        px = _M + (_W - _M - 20) * x / right
        pts.append((px, _H - _M - (_H - _M - 20) * prev_y / top))
        pts.append((px, _H - _M - (_H - _M - 20) * y / top))
        prev_y = y
    if pts:
        path = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        parts.append(f'<polyline points="{path}" fill="none" stroke="firebrick" stroke-width="2"/>')
    parts.append(f'<text x="{_W - 10}" y="{_H - _M + 14}" text-anchor="end" font-size="10">{right:.3g}</text>')
    return _svg(parts)
