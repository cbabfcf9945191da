"""Reference (SAM, CC, sCC, ERGAS, Q4) and no-reference (D_lambda, D_S, QNR) quality indexes.

Images are ``(bands, height, width)``; every statistic is computed in double
precision with population (1/n) moments.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from .errors import (
    DegenerateBand,
    DegenerateBlock,
    DegenerateHighPass,
    DegenerateVariance,
    DimensionMismatch,
    NotFourBands,
    OutOfRange,
    PansharpError,
    ZeroMeanBand,
)
from .raster import MultiBandImage, as_array, downsample, wald_filter

EPS = 1e-12

LAPLACIAN = np.array(
    [[-1.0, -1.0, -1.0],
     [-1.0, 8.0, -1.0],
     [-1.0, -1.0, -1.0]]
)


@dataclass(frozen=True)
class QConfig:
    """Window for Q-type indexes: ``None`` is one global window, an int is a block edge."""

    block: int | None = None

    @classmethod
    def for_q4(cls) -> QConfig:
        return cls(None)

    @classmethod
    def for_qnr(cls) -> QConfig:
        return cls(32)


def _pair(a, b):
    a, b = as_array(a), as_array(b)
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def _note(notes, msg):
    if notes is not None:
        notes.append(msg)


def sam(fused, ref, notes: list[str] | None = None) -> float:
    """Mean spectral angle in degrees over pixels where neither vector is zero."""
    f, r = _pair(fused, ref)
    nf = np.sqrt(np.einsum("bhw,bhw->hw", f, f))
    nr = np.sqrt(np.einsum("bhw,bhw->hw", r, r))
    valid = (nf > 0) & (nr > 0)
    skipped = int(valid.size - valid.sum())
    if skipped:
        _note(notes, f"SAM: skipped {skipped} zero-vector pixel(s)")
    if not valid.any():
        raise DegenerateBand("SAM: every pixel has a zero spectral vector")
    # arccos of the normalised dot product, evaluated as 2*atan2(|u|v| - v|u||, |u|v| + v|u||)
    # so that parallel vectors give exactly zero
    u = (f * nr)[:, valid]
    v = (r * nf)[:, valid]
    angle = 2.0 * np.arctan2(np.linalg.norm(u - v, axis=0), np.linalg.norm(u + v, axis=0))
    return float(np.degrees(angle).mean())


def _corr(x: np.ndarray, y: np.ndarray, err=DegenerateBand) -> float:
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(np.sum(dx * dx))
    syy = float(np.sum(dy * dy))
    if sxx <= EPS or syy <= EPS:
        raise err("band has zero variance")
    return float(np.sum(dx * dy)) / np.sqrt(sxx * syy)


def cc(fused, ref) -> float:
    """Per-band Pearson correlation, averaged over bands."""
    f, r = _pair(fused, ref)
    return float(np.mean([_corr(f[i], r[i]) for i in range(f.shape[0])]))


def high_pass(img) -> np.ndarray:
    """Laplacian high-pass of each band, reflect-101 borders."""
    a = as_array(img)
    return np.stack([ndimage.correlate(band, LAPLACIAN, mode="mirror") for band in a])


def scc(fused, ref) -> float:
    """Correlation between Laplacian high-passed bands, averaged over bands."""
    f, r = _pair(fused, ref)
    hf, hr = high_pass(f), high_pass(r)
    return float(np.mean([_corr(hf[i], hr[i], DegenerateHighPass) for i in range(f.shape[0])]))


def ergas(fused, ref, ratio: int = 4) -> float:
    f, r = _pair(fused, ref)
    rmse = np.sqrt(np.mean((f - r) ** 2, axis=(1, 2)))
    means = r.mean(axis=(1, 2))
    if np.any(np.abs(means) <= EPS):
        raise ZeroMeanBand("reference band with zero mean")
    return float(100.0 / ratio * np.sqrt(np.mean((rmse / means) ** 2)))


def _mean(a: np.ndarray) -> float:
    """Correctly rounded mean: exact summation keeps statistics of
    block-replicated data bit-identical to those of the original."""
    return math.fsum(a.ravel().tolist()) / a.size


def _q_global(a: np.ndarray, b: np.ndarray) -> float | None:
    mu_a, mu_b = _mean(a), _mean(b)
    da, db = a - mu_a, b - mu_b
    var_a, var_b = _mean(da * da), _mean(db * db)
    cov = _mean(da * db)
    var_sum, mu_sq = var_a + var_b, mu_a * mu_a + mu_b * mu_b
    if var_sum * mu_sq <= EPS:
        return None
    # factored so that Q(x, x) is exactly 1
    return float((2.0 * cov / var_sum) * (2.0 * mu_a * mu_b / mu_sq))


def _blocks(shape: tuple[int, int], block: int | None):
    """Non-overlapping windows; an axis shorter than ``block`` becomes one window."""
    h, w = shape
    if block is None:
        yield slice(0, h), slice(0, w)
        return
    by, bx = min(block, h), min(block, w)
    for y in range(0, h - by + 1, by):
        for x in range(0, w - bx + 1, bx):
            yield slice(y, y + by), slice(x, x + bx)


def _blockwise(fn, arrays, cfg: QConfig, notes, label):
    values, skipped = [], 0
    for sy, sx in _blocks(arrays[0].shape[-2:], cfg.block):
        q = fn(*(a[..., sy, sx] for a in arrays))
        if q is None:
            skipped += 1
        else:
            values.append(q)
    if skipped:
        _note(notes, f"{label}: skipped {skipped} degenerate block(s)")
    if not values:
        raise DegenerateBlock(f"{label}: every block is degenerate")
    return float(np.mean(values))


def q_index(a, b, cfg: QConfig | None = None, notes: list[str] | None = None) -> float:
    """Universal image quality index of two single-band images (global or block mean)."""
    a, b = _pair(a, b)
    if a.shape[0] != 1:
        raise ValueError("q_index expects single-band images")
    cfg = cfg or QConfig()
    return _blockwise(_q_global, (a[0], b[0]), cfg, notes, "Q")


def _qmul(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """Hamilton product of quaternion arrays with components on axis 0."""
    a1, b1, c1, d1 = p
    a2, b2, c2, d2 = q
    return np.stack([
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    ])


def _conj(q: np.ndarray) -> np.ndarray:
    return q * np.array([1.0, -1.0, -1.0, -1.0]).reshape((4,) + (1,) * (q.ndim - 1))


def _q4_window(z1: np.ndarray, z2: np.ndarray) -> float | None:
    n = z1[0].size
    mu1 = z1.reshape(4, -1).mean(axis=1)
    mu2 = z2.reshape(4, -1).mean(axis=1)
    d1 = z1.reshape(4, -1) - mu1[:, None]
    d2 = z2.reshape(4, -1) - mu2[:, None]
    cov = _qmul(d1, _conj(d2)).sum(axis=1) / n
    var1 = float(np.sum(d1 * d1)) / n
    var2 = float(np.sum(d2 * d2)) / n
    m1, m2 = float(np.sum(mu1 * mu1)), float(np.sum(mu2 * mu2))
    if (var1 + var2) * (m1 + m2) <= EPS:
        return None
    return (2.0 * float(np.linalg.norm(cov)) / (var1 + var2)) * (2.0 * np.sqrt(m1) * np.sqrt(m2) / (m1 + m2))


def q4(fused, ref, cfg: QConfig | None = None, notes: list[str] | None = None) -> float:
    """Quaternion quality index of two 4-band images; bands map to (1, i, j, k)."""
    f, r = _pair(fused, ref)
    if f.shape[0] != 4:
        raise NotFourBands(f"Q4 needs 4 bands, got {f.shape[0]}")
    cfg = cfg or QConfig.for_q4()
    try:
        return _blockwise(_q4_window, (f, r), cfg, notes, "Q4")
    except DegenerateBlock as exc:
        raise DegenerateVariance(str(exc)) from None


def d_lambda(fused, ms, cfg: QConfig | None = None, notes: list[str] | None = None) -> float:
    """Spectral distortion: inter-band Q differences between fused and low-res MS."""
    f, x = as_array(fused), as_array(ms)
    k = f.shape[0]
    if x.shape[0] != k or k < 2:
        raise DimensionMismatch(f"D_lambda needs equal band counts >= 2, got {k} and {x.shape[0]}")
    cfg = cfg or QConfig.for_qnr()
    total = 0.0
    for i in range(k):
        for j in range(i, k):
            qp = _blockwise(_q_global, (f[i], f[j]), cfg, notes, f"D_lambda Q(P{i},P{j})")
            qx = _blockwise(_q_global, (x[i], x[j]), cfg, notes, f"D_lambda Q(X{i},X{j})")
            total += abs(qp - qx)
    return float(np.sqrt(2.0 / (k * (k - 1)) * total))


def d_s(fused, ms, pan, pan_lr, cfg: QConfig | None = None, notes: list[str] | None = None) -> float:
    """Spatial distortion: Q of each band against PAN at both resolutions."""
    f, x = as_array(fused), as_array(ms)
    y, y_lr = as_array(pan), as_array(pan_lr)
    if f.shape[1:] != y.shape[1:] or x.shape[1:] != y_lr.shape[1:]:
        raise DimensionMismatch("PAN must match the fused size and pan_lr the MS size")
    cfg = cfg or QConfig.for_qnr()
    k = f.shape[0]
    total = 0.0
    for i in range(k):
        qh = _blockwise(_q_global, (f[i], y[0]), cfg, notes, f"D_S Q(P{i},Y)")
        ql = _blockwise(_q_global, (x[i], y_lr[0]), cfg, notes, f"D_S Q(X{i},Y_lr)")
        total += abs(qh - ql)
    return float(np.sqrt(total / k))


def qnr(d_lambda_value: float, d_s_value: float) -> float:
    for name, v in (("D_lambda", d_lambda_value), ("D_S", d_s_value)):
        if not 0.0 <= v <= 1.0:
            raise OutOfRange(f"{name}={v} is outside [0, 1]")
    return (1.0 - d_lambda_value) * (1.0 - d_s_value)


FIELDS = ("sam", "cc", "scc", "ergas", "q4", "d_lambda", "d_s", "qnr")
COLUMNS = ("method", "SAM", "CC", "sCC", "ERGAS", "Q4", "D_lambda", "D_s", "QNR")
MD_HEADER = ("Method", "SAM↓", "CC↑", "sCC↑", "ERGAS↓", "Q4↑", "D_λ↓", "D_S↓", "QNR↑")


@dataclass
class MetricReport:
    method: str = ""
    sam: float | None = None
    cc: float | None = None
    scc: float | None = None
    ergas: float | None = None
    q4: float | None = None
    d_lambda: float | None = None
    d_s: float | None = None
    qnr: float | None = None
    notes: list[str] = field(default_factory=list)

    def values(self) -> list[float | None]:
        return [getattr(self, f) for f in FIELDS]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> MetricReport:
        return cls(**{k: d.get(k) for k in ("method",) + FIELDS}, notes=list(d.get("notes") or []))


def evaluate(
    fused,
    ref=None,
    ms=None,
    pan=None,
    ratio: int = 4,
    cfg: QConfig | None = None,
    pan_lr=None,
    method: str = "",
) -> MetricReport:
    """Compute every metric the supplied inputs allow.

    ``cfg`` overrides the Q window of the no-reference indexes; Q4 stays
    global. A failing metric is left empty and explained in ``notes``.
    """
    report = MetricReport(method=method)
    notes = report.notes

    def attempt(name, fn, *args):
        try:
            setattr(report, name, fn(*args))
        except PansharpError as exc:
            notes.append(f"{name}: {type(exc).__name__}: {exc}")

    if ref is not None:
        attempt("sam", lambda: sam(fused, ref, notes))
        attempt("cc", cc, fused, ref)
        attempt("scc", scc, fused, ref)
        attempt("ergas", ergas, fused, ref, ratio)
        attempt("q4", lambda: q4(fused, ref, QConfig.for_q4(), notes))
    if ms is not None:
        qcfg = cfg or QConfig.for_qnr()
        attempt("d_lambda", lambda: d_lambda(fused, ms, qcfg, notes))
        if pan is not None:
            if pan_lr is None:
                pan_img = pan if isinstance(pan, MultiBandImage) else MultiBandImage(pan)
                pan_lr = downsample(pan_img, ratio, wald_filter())
            attempt("d_s", lambda: d_s(fused, ms, pan, pan_lr, qcfg, notes))
        if report.d_lambda is not None and report.d_s is not None:
            attempt("qnr", qnr, report.d_lambda, report.d_s)
    return report


def _fmt(v, digits):
    return "" if v is None else f"{v:.{digits}f}"


def to_csv(reports: list[MetricReport], header: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(COLUMNS)
    for r in reports:
        writer.writerow([r.method] + [_fmt(v, 6) for v in r.values()])
    return buf.getvalue()


def from_csv(text: str) -> list[MetricReport]:
    reports = []
    for row in csv.DictReader(io.StringIO(text)):
        kw = {f: (float(row[c]) if row.get(c) else None) for f, c in zip(FIELDS, COLUMNS[1:])}
        reports.append(MetricReport(method=row["method"], **kw))
    return reports


def to_markdown(reports: list[MetricReport], digits: int = 4) -> str:
    lines = [
        "| " + " | ".join(MD_HEADER) + " |",
        "|" + "|".join([":---"] + ["---:"] * (len(MD_HEADER) - 1)) + "|",
    ]
    for r in reports:
        cells = [r.method] + [_fmt(v, digits) or "–" for v in r.values()]
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def to_json(reports: list[MetricReport]) -> str:
    return json.dumps([r.to_dict() for r in reports], indent=2) + "\n"
