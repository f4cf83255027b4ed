"""Evaluation metrics and the test-SNR sweep harness.

Reconstruction quality is reported as PSNR over [0, 1] pixel values:
model outputs in [-1, 1] are un-mapped via x01 = (x + 1) / 2 before the
MSE, so MAX = 1.  Zero MSE is capped at 100 dB to keep CSVs finite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .models import HyperAJSCCModel, forward_pipeline
from .tensor import ContractError, ShapeError, Tensor

PSNR_CAP_DB = 100.0


def psnr(x, x_hat, max_value: float = 1.0) -> float:
    """10*log10(max_value^2 / MSE), capped at 100 dB."""
    x = np.asarray(x, dtype=np.float64)
    x_hat = np.asarray(x_hat, dtype=np.float64)
    if x.shape != x_hat.shape:
        raise ShapeError(f"psnr: shapes differ: {x.shape} vs {x_hat.shape}")
    if max_value <= 0:
        raise ContractError("psnr: max_value must be positive")
    mse = float(((x - x_hat) ** 2).mean())
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(max_value**2 / mse), PSNR_CAP_DB)


def psnr_from_mse(mse: float, max_value: float = 1.0) -> float:
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(max_value**2 / mse), PSNR_CAP_DB)


def top1_accuracy(probs, labels) -> float:
    """Fraction of argmax hits; numpy argmax already breaks ties low-index."""
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if probs.ndim != 2 or labels.shape != (probs.shape[0],):
        raise ShapeError(f"top1_accuracy: probs {probs.shape}, labels {labels.shape}")
    if probs.shape[0] == 0:
        raise ContractError("top1_accuracy: empty batch")
    return float((probs.argmax(axis=1) == labels).mean())


@dataclass
class SweepReport:
    """(test SNR -> metric) table with run metadata; one row per grid point."""

    metric: str  # psnr_db | top1_accuracy
    rows: list = field(default_factory=list)  # (snr_db, mean, std, n_samples)
    model_digest: str = ""
    config_digest: str = ""

    def mean_at(self, snr_db: float) -> float:
        for s, mean, _, _ in self.rows:
            if s == snr_db:
                return mean
        raise ContractError(f"no sweep row for SNR {snr_db} dB")

    def to_csv(self) -> str:
        lines = ["snr_db,metric,mean,std,n"]
        for s, mean, std, n in self.rows:
            lines.append(f"{s:g},{self.metric},{mean!r},{std!r},{n}")
        return "\n".join(lines) + "\n"


def _eval_once(model: HyperAJSCCModel, dataset: Dataset, omega_db: float, rng, chunk: int = 64) -> float:
    n_items = dataset.samples.shape[0]
    if model.config.task == "reconstruction":
        total_se = 0.0
        for start in range(0, n_items, chunk):
            xb = dataset.samples[start : start + chunk]
            out, _, _ = forward_pipeline(model, Tensor(xb), omega_db, rng)
            x01 = (xb + 1.0) / 2.0
            xh01 = (out.data + 1.0) / 2.0
            total_se += float(((x01 - xh01) ** 2).sum())
        return psnr_from_mse(total_se / dataset.samples.size)
    correct = 0
    for start in range(0, n_items, chunk):
        xb = dataset.samples[start : start + chunk]
        out, _, _ = forward_pipeline(model, Tensor(xb), omega_db, rng)
        correct += int((out.data.argmax(axis=1) == np.asarray(dataset.labels[start : start + chunk])).sum())
    return correct / n_items


def snr_sweep(
    model: HyperAJSCCModel,
    dataset: Dataset,
    snr_grid,
    seeds=(0,),
    model_digest: str = "",
    config_digest: str = "",
) -> SweepReport:
    """Full-dataset metric at each grid SNR, aggregated over noise seeds."""
    grid = [float(s) for s in snr_grid]
    if not grid:
        raise ContractError("snr_sweep: empty grid")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ContractError("snr_sweep: grid SNRs must be strictly increasing")
    metric = "psnr_db" if model.config.task == "reconstruction" else "top1_accuracy"
    report = SweepReport(metric=metric, model_digest=model_digest, config_digest=config_digest)
    for gi, snr in enumerate(grid):
        vals = []
        for seed in seeds:
            rng = np.random.default_rng(np.random.SeedSequence((int(seed), gi)))
            vals.append(_eval_once(model, dataset, snr, rng))
        vals = np.asarray(vals)
        report.rows.append((snr, float(vals.mean()), float(vals.std()), dataset.samples.shape[0]))
    return report


def compare_adaptive_vs_fixed(adaptive: SweepReport, fixed: dict[float, SweepReport]) -> list:
    """Per matched point: metric(fixed model at its own train SNR) - metric(adaptive).

    This is the upper-envelope comparison: each fixed model is read out only
    at the SNR it was trained for.
    """
    gaps = []
    for train_snr in sorted(fixed):
        try:
            f_val = fixed[train_snr].mean_at(train_snr)
            a_val = adaptive.mean_at(train_snr)
        except ContractError as e:
            raise ContractError(f"grid mismatch at {train_snr} dB: {e}") from None
        gaps.append((train_snr, f_val - a_val))
    return gaps


# ---------------------------------------------------------------------------
# dependency-free SVG line chart


def sweep_chart_svg(series: dict[str, SweepReport], ylabel: str, width: int = 640, height: int = 420) -> str:
    """One polyline per report, x axis in dB."""
    pad = 60
    xs = sorted({s for rep in series.values() for s, *_ in rep.rows})
    ys = [mean for rep in series.values() for _, mean, _, _ in rep.rows]
    if not xs or not ys:
        raise ContractError("sweep_chart_svg: nothing to plot")
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys), max(ys)
    if x_hi == x_lo:
        x_hi += 1.0
    if y_hi == y_lo:
        y_hi += 1.0

    def px(x):
        return pad + (x - x_lo) / (x_hi - x_lo) * (width - 2 * pad)

    def py(y):
        return height - pad - (y - y_lo) / (y_hi - y_lo) * (height - 2 * pad)

    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height-pad}" x2="{width-pad}" y2="{height-pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height-pad}" stroke="black"/>',
        f'<text x="{width//2}" y="{height-15}" text-anchor="middle" font-size="13">test SNR (dB)</text>',
        f'<text x="18" y="{height//2}" text-anchor="middle" font-size="13" '
        f'transform="rotate(-90 18 {height//2})">{ylabel}</text>',
    ]
    for i, x in enumerate(np.linspace(x_lo, x_hi, 5)):
        out.append(f'<text x="{px(x):.1f}" y="{height-pad+18}" text-anchor="middle" font-size="11">{x:.0f}</text>')
    for y in np.linspace(y_lo, y_hi, 5):
        out.append(f'<text x="{pad-8:.1f}" y="{py(y)+4:.1f}" text-anchor="end" font-size="11">{y:.2f}</text>')
    for i, (name, rep) in enumerate(series.items()):
        color = colors[i % len(colors)]
        pts = " ".join(f"{px(s):.2f},{py(mean):.2f}" for s, mean, _, _ in rep.rows)
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>')
        out.append(
            f'<text x="{width-pad+5}" y="{pad + 16*i}" font-size="11" fill="{color}">{name}</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"
