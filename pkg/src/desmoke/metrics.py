"""Restoration metrics (MSE, PSNR, SSIM) and the per-tier evaluation report."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .imagecore import ImagePlane, ImageRgb, ShapeMismatchError

SIGNIFICANCE_DB = 0.5


@dataclass(frozen=True)
class MetricConfig:
    max_value: float = 1.0
    c1: float | None = None  # default (0.01 * MAX)^2
    c2: float | None = None  # default (0.03 * MAX)^2
    ssim_mode: str = "global"
    window: int = 7
    stride: int = 1

    def __post_init__(self):
        if not self.max_value > 0:
            raise ValueError("max_value must be positive")
        if self.ssim_mode not in ("global", "windowed"):
            raise ValueError(f"ssim_mode must be 'global' or 'windowed', got {self.ssim_mode!r}")
        if self.c1 is not None and not self.c1 > 0 or self.c2 is not None and not self.c2 > 0:
            raise ValueError("SSIM constants must be positive")
        if self.window < 1 or self.stride < 1:
            raise ValueError("window and stride must be >= 1")

    @property
    def C1(self) -> float:
        return (0.01 * self.max_value) ** 2 if self.c1 is None else self.c1

    @property
    def C2(self) -> float:
        return (0.03 * self.max_value) ** 2 if self.c2 is None else self.c2


def _array(img) -> np.ndarray:
    if isinstance(img, (ImageRgb, ImagePlane)):
        img = img.data
    return np.asarray(img, dtype=np.float64)


def _pair(I, J):
    a, b = _array(I), _array(J)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mse(I, J) -> float:
    """Mean squared error; for RGB, the mean of the per-channel MSEs."""
    a, b = _pair(I, J)
    d = a - b
    if d.ndim == 3:
        return float(np.mean([np.mean(d[:, :, c] ** 2) for c in range(d.shape[2])]))
    return float(np.mean(d**2))


def psnr(I, J, cfg: MetricConfig = MetricConfig()) -> float:
    """PSNR in dB; ``inf`` when the images are identical."""
    e = mse(I, J)
    if e == 0:
        return math.inf
    return 10.0 * math.log10(cfg.max_value**2 / e)


def _luma(a: np.ndarray) -> np.ndarray:
    return a.mean(axis=2) if a.ndim == 3 else a


def _ssim_stats(mu_a, mu_b, var_a, var_b, cov, C1, C2):
    return ((2 * mu_a * mu_b + C1) * (2 * cov + C2)) / ((mu_a**2 + mu_b**2 + C1) * (var_a + var_b + C2))


def ssim(I, J, cfg: MetricConfig = MetricConfig()) -> float:
    """SSIM on the grayscale mean of RGB inputs.

    Global mode uses whole-image moments; windowed mode averages the index
    over ``window``-sized square windows taken every ``stride`` pixels.
    Variances and covariance are population (1/N) moments.
    """
    a, b = _pair(I, J)
    a, b = _luma(a), _luma(b)
    if cfg.ssim_mode == "global":
        mu_a, mu_b = a.mean(), b.mean()
        da, db = a - mu_a, b - mu_b
        val = _ssim_stats(mu_a, mu_b, (da * da).mean(), (db * db).mean(), (da * db).mean(), cfg.C1, cfg.C2)
        return float(val)
    w, s = cfg.window, cfg.stride
    if w > min(a.shape):
        raise ValueError(f"SSIM window {w} larger than image {a.shape}")
    from numpy.lib.stride_tricks import sliding_window_view

    wa = sliding_window_view(a, (w, w))[::s, ::s]
    wb = sliding_window_view(b, (w, w))[::s, ::s]
    mu_a = wa.mean(axis=(-1, -2))
    mu_b = wb.mean(axis=(-1, -2))
    da = wa - mu_a[..., None, None]
    db = wb - mu_b[..., None, None]
    vals = _ssim_stats(
        mu_a,
        mu_b,
        (da * da).mean(axis=(-1, -2)),
        (db * db).mean(axis=(-1, -2)),
        (da * db).mean(axis=(-1, -2)),
        cfg.C1,
        cfg.C2,
    )
    return float(vals.mean())


# --- reports -----------------------------------------------------------------

ROW_FIELDS = ("id", "tier", "psnr", "ssim", "baseline_psnr", "baseline_ssim", "psnr_gain", "significant")
AGG_METRICS = ("psnr", "ssim", "baseline_psnr", "baseline_ssim")


@dataclass
class EvalRow:
    id: str
    tier: str
    psnr: float
    ssim: float
    baseline_psnr: float
    baseline_ssim: float

    @property
    def psnr_gain(self) -> float:
        if math.isinf(self.psnr) and math.isinf(self.baseline_psnr):
            return 0.0
        return self.psnr - self.baseline_psnr

    @property
    def significant(self) -> bool:
        return abs(self.psnr_gain) >= SIGNIFICANCE_DB


def summarize(values) -> dict:
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        return {"n": 0}
    with np.errstate(invalid="ignore"):
        q1, med, q3 = np.percentile(v, [25, 50, 75])
        return {
            "n": int(v.size),
            "mean": float(v.mean()),
            "median": float(med),
            "q1": float(q1),
            "q3": float(q3),
            "min": float(v.min()),
            "max": float(v.max()),
        }


@dataclass
class EvalReport:
    rows: list[EvalRow]
    aggregates: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.aggregates:
            self.aggregates = self.compute_aggregates()

    def compute_aggregates(self) -> dict:
        out = {}
        tiers = sorted({r.tier for r in self.rows}) + ["all"]
        for tier in tiers:
            rows = self.rows if tier == "all" else [r for r in self.rows if r.tier == tier]
            out[tier] = {m: summarize([getattr(r, m) for r in rows]) for m in AGG_METRICS}
        return out

    def write(self, out_dir) -> dict[str, Path]:
        """Write ``eval_rows.csv``, ``eval_summary.json`` and ``boxplot_data.json``."""
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = {
            "rows": out_dir / "eval_rows.csv",
            "summary": out_dir / "eval_summary.json",
            "boxplot": out_dir / "boxplot_data.json",
        }
        with open(paths["rows"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(ROW_FIELDS)
            for r in self.rows:
                w.writerow([r.id, r.tier] + [_fmt(getattr(r, f)) for f in ROW_FIELDS[2:7]] + [int(r.significant)])
        summary = {"n_records": len(self.rows), "tiers": _jsonable(self.aggregates)}
        paths["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True))
        box = {
            tier: {
                m: {k: agg[m].get(k) for k in ("min", "q1", "median", "q3", "max")}
                for m in ("psnr", "ssim", "baseline_psnr", "baseline_ssim")
            }
            for tier, agg in self.aggregates.items()
        }
        paths["boxplot"].write_text(json.dumps(_jsonable(box), indent=2, sort_keys=True))
        return paths


def _fmt(v: float) -> str:
    return "inf" if math.isinf(v) else repr(float(v))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, float) and not math.isfinite(obj):
        return "inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    return obj


def read_rows(path) -> list[EvalRow]:
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(
                EvalRow(
                    rec["id"],
                    rec["tier"],
                    float(rec["psnr"]),
                    float(rec["ssim"]),
                    float(rec["baseline_psnr"]),
                    float(rec["baseline_ssim"]),
                )
            )
    return rows


def score_pair(output, clear, smoked, rid: str, tier: str, cfg: MetricConfig) -> EvalRow:
    return EvalRow(
        rid,
        tier,
        psnr(output, clear, cfg),
        ssim(output, clear, cfg),
        psnr(smoked, clear, cfg),
        ssim(smoked, clear, cfg),
    )


def evaluate(manifest, checkpoint, cfg: MetricConfig = MetricConfig(), split: str = "test", batch_size: int = 8) -> EvalReport:
    """Run the desmoking pipeline over a split and score it against ground truth.

    Each row also carries the smoked input's own scores as the do-nothing
    baseline.
    """
    from .pipeline import Desmoker

    recs = manifest.split(split)
    if not recs:
        raise ValueError(f"manifest has no records in split {split!r}")
    model = Desmoker.from_checkpoint(checkpoint)
    if model.resolution != manifest.resolution:
        raise ValueError(
            f"checkpoint resolution {model.resolution} does not match dataset resolution {manifest.resolution}"
        )
    from .imagecore import load_image

    rows = []
    for start in range(0, len(recs), batch_size):
        chunk = recs[start : start + batch_size]
        smoked = [load_image(manifest.path(r.smoked_path)) for r in chunk]
        outputs = model.restore_many(smoked)
        for rec, out, sm in zip(chunk, outputs, smoked):
            clear = load_image(manifest.path(rec.clear_path))
            rows.append(score_pair(out, clear, sm, rec.id, rec.tier.value, cfg))
    return EvalReport(rows)
