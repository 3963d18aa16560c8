"""Measurements: per-region spectra, the CAA detector, HF ablation, recompression
survival, stealth metrics, bitrate accounting, and a linear-probe surrogate for
benign accuracy and attack success.

All block-DCT statistics run on luma at 8-bit scale (``255 * Y``).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.stats import ks_2samp, rankdata

from . import masks as mk
from .imagecore import as_image, luma, pad_to_block, psnr, ssim
from .roicodec import decode, encode, block_weights
from .roicodec.tables import ZIGZAG
from .spectral import HighPassSpec, blockify, dct2_8x8, fft2, ifft2, low_pass

HF_START = 32  # zigzag indices 32..63


# ---------------------------------------------------------------- spectra


def block_spectrum(img) -> np.ndarray:
    """Zigzag-ordered block DCT of luma, shape ``(by, bx, 64)``."""
    y, _ = pad_to_block(luma(as_image(img))[:, :, None] * 255.0)
    coeffs = dct2_8x8(blockify(y[:, :, 0]))
    return coeffs.reshape(coeffs.shape[:2] + (64,))[..., ZIGZAG]


@dataclass
class SpectrumReport:
    light_profile: np.ndarray  # mean |coefficient| per zigzag index, light blocks
    dark_profile: np.ndarray
    light_hf: float
    dark_hf: float
    hf_contrast: float  # +inf when dark HF energy is zero
    zero_energy: bool
    n_light: int
    n_dark: int

    def to_dict(self) -> dict:
        d = asdict(self)
        d["light_profile"] = self.light_profile.tolist()
        d["dark_profile"] = self.dark_profile.tolist()
        return d


def region_split(mask, dims: tuple[int, int], tol: float = 0.1) -> np.ndarray:
    """Boolean light-block map from a binary mask; raises if a block mean is not near 0 or 1."""
    wb = block_weights(mask, dims)
    if np.any(np.minimum(wb, 1.0 - wb) > tol):
        raise ValueError(f"mask is not binary at block level (tolerance {tol})")
    return wb >= 0.5


def region_spectrum(img, mask, hf_start: int = HF_START) -> SpectrumReport:
    spec = np.abs(block_spectrum(img))
    spec[spec < 1e-9] = 0.0  # transform round-off, not content
    light = region_split(mask, (spec.shape[0] * 8, spec.shape[1] * 8))
    dark = ~light

    def profile(sel):
        return spec[sel].mean(axis=0) if sel.any() else np.zeros(64)

    lp, dp = profile(light), profile(dark)
    lhf = float(lp[hf_start:].mean())
    dhf = float(dp[hf_start:].mean())
    contrast = lhf / dhf if dhf > 0 else math.inf
    return SpectrumReport(lp, dp, lhf, dhf, contrast, lhf == 0 and dhf == 0, int(light.sum()), int(dark.sum()))


def _binary_family(family: mk.MaskKind) -> None:
    if not isinstance(family, (mk.Checkerboard, mk.ConcentricSquares)):
        raise ValueError(f"caa statistic needs a binary pattern family, got {family.kind}")


def caa_statistic(img, family: mk.MaskKind = mk.Checkerboard(), hf_start: int = HF_START) -> float:
    """``log(hf_contrast)`` of ``img`` against the family's mask.

    Positive values mean more high-frequency energy under the light cells.  A
    zero-energy image returns 0.0 (no evidence either way); see
    :func:`caa_statistic_flagged` for the flag.
    """
    return caa_statistic_flagged(img, family, hf_start)[0]


def caa_statistic_flagged(img, family: mk.MaskKind = mk.Checkerboard(), hf_start: int = HF_START) -> tuple[float, bool]:
    _binary_family(family)
    img = as_image(img)
    rep = region_spectrum(img, mk.build_mask(family, shape=img.shape[:2]), hf_start)
    if rep.zero_energy:
        return 0.0, True
    if rep.light_hf == 0.0:
        return -math.inf, False
    return math.log(rep.hf_contrast), False


# ---------------------------------------------------------------- AUC


def mann_whitney_auc(pos, neg) -> float:
    """P(pos > neg) + 0.5 P(pos == neg), exact via midranks."""
    pos = np.asarray(pos, dtype=np.float64).ravel()
    neg = np.asarray(neg, dtype=np.float64).ravel()
    if pos.size == 0 or neg.size == 0:
        raise ValueError("AUC needs two non-empty samples")
    ranks = rankdata(np.concatenate([pos, neg]))
    u = ranks[: pos.size].sum() - pos.size * (pos.size + 1) / 2.0
    return float(u / (pos.size * neg.size))


def statistics(corpus, family: mk.MaskKind = mk.Checkerboard()) -> np.ndarray:
    return np.array([caa_statistic(x, family) for x in corpus])


def detector_auc(pos, neg, family: mk.MaskKind = mk.Checkerboard()) -> float:
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("detector_auc needs non-empty corpora")
    return mann_whitney_auc(statistics(pos, family), statistics(neg, family))


def tpr_at_benign_percentile(pos_stats, neg_stats, pct: float = 99.0) -> float:
    thr = np.percentile(neg_stats, pct)
    return float(np.mean(np.asarray(pos_stats) > thr))


# ---------------------------------------------------------------- ablation and recompression


def hf_ablation(img, spec: HighPassSpec | float = HighPassSpec(0.5)) -> np.ndarray:
    """Zero every Fourier component with normalized radius above ``t``; clamp."""
    img = as_image(img)
    return np.clip(ifft2(low_pass(fft2(img), spec)), 0.0, 1.0)


def recompress(img, quality: int) -> np.ndarray:
    return decode(encode(img, quality))


def recompress_survival(pos, neg, qualities, family: mk.MaskKind = mk.Checkerboard()) -> dict:
    """Detector AUC after plain recompression at each quality; key ``None`` is no recompression."""
    out = {None: detector_auc(pos, neg, family)}
    for q in qualities:
        out[int(q)] = detector_auc([recompress(x, q) for x in pos], [recompress(x, q) for x in neg], family)
    return out


# ---------------------------------------------------------------- stealth and rate


@dataclass
class StealthReport:
    psnr_mean: float
    ssim_mean: float
    psnr: list = field(default_factory=list)
    ssim: list = field(default_factory=list)


def stealth(poisoned, references) -> StealthReport:
    if len(poisoned) != len(references) or not len(poisoned):
        raise ValueError("need equal-length, non-empty corpora")
    p = [psnr(a, b) for a, b in zip(poisoned, references)]
    s = [ssim(a, b) for a, b in zip(poisoned, references)]
    finite = [v for v in p if math.isfinite(v)]
    return StealthReport(float(np.mean(finite)) if finite else math.inf, float(np.mean(s)), p, s)


def stealth_both(poisoned, originals, compressed_clean) -> dict:
    """Stealth against the uncompressed originals and against uniformly compressed copies."""
    return {"vs_original": stealth(poisoned, originals), "vs_compressed": stealth(poisoned, compressed_clean)}


def mean_bpp(streams) -> float:
    return float(np.mean([s.bpp for s in streams]))


# ---------------------------------------------------------------- linear probe


@dataclass(frozen=True)
class ProbeHyper:
    epochs: int = 300
    lr: float = 0.05
    l2: float = 1e-4
    init_scale: float = 0.01


def probe_features(images) -> np.ndarray:
    """``log1p`` of block-DCT magnitudes of luma, flattened per image."""
    return np.stack([np.log1p(np.abs(block_spectrum(x))).ravel() for x in images])


@dataclass
class ProbeModel:
    weights: np.ndarray  # (class_count, dim)
    bias: np.ndarray  # (class_count,)
    mean: np.ndarray  # feature standardization
    scale: np.ndarray
    image_shape: tuple
    seed: int
    hyper: ProbeHyper
    loss_history: list

    @property
    def class_count(self) -> int:
        return self.weights.shape[0]

    def standardized(self, images) -> np.ndarray:
        return (probe_features(images) - self.mean) / self.scale

    def proba(self, images) -> np.ndarray:
        return softmax(self.standardized(images) @ self.weights.T + self.bias)

    def predict(self, images) -> np.ndarray:
        return np.argmax(self.standardized(images) @ self.weights.T + self.bias, axis=1)


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def loss_and_grad(W, b, F, y, l2: float) -> tuple[float, np.ndarray, np.ndarray]:
    """Mean cross-entropy plus ``l2/2 * |W|^2`` and its gradient."""
    n = F.shape[0]
    z = F @ W.T + b
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), y].mean() + 0.5 * l2 * float(np.sum(W * W))
    g = np.exp(logp)
    g[np.arange(n), y] -= 1.0
    g /= n
    return float(loss), g.T @ F + l2 * W, g.sum(axis=0)


def gradient_check(W, b, F, y, l2: float, eps: float = 1e-6) -> float:
    """Max relative error between analytic and central-difference gradients."""
    _, gW, gb = loss_and_grad(W, b, F, y, l2)
    num_W = np.zeros_like(W)
    num_b = np.zeros_like(b)
    for arr, num in ((W, num_W), (b, num_b)):
        it = np.nditer(arr, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = arr[i]
            arr[i] = old + eps
            lp = loss_and_grad(W, b, F, y, l2)[0]
            arr[i] = old - eps
            lm = loss_and_grad(W, b, F, y, l2)[0]
            arr[i] = old
            num[i] = (lp - lm) / (2 * eps)
    an = np.concatenate([gW.ravel(), gb.ravel()])
    nu = np.concatenate([num_W.ravel(), num_b.ravel()])
    return float(np.max(np.abs(an - nu) / np.maximum(np.maximum(np.abs(an), np.abs(nu)), 1e-8)))


def train_on_features(F, y, class_count: int, seed: int = 0, hyper: ProbeHyper = ProbeHyper()):
    y = np.asarray(y, dtype=np.int64)
    if len(np.unique(y)) < 2:
        raise ValueError("probe training needs at least two classes")
    rng = np.random.default_rng(seed)
    W = hyper.init_scale * rng.standard_normal((class_count, F.shape[1]))
    b = np.zeros(class_count)
    history = []
    for _ in range(hyper.epochs):
        loss, gW, gb = loss_and_grad(W, b, F, y, hyper.l2)
        history.append(loss)
        W -= hyper.lr * gW
        b -= hyper.lr * gb
    history.append(loss_and_grad(W, b, F, y, hyper.l2)[0])
    return W, b, history


def descent_gain(Z: np.ndarray, hyper: ProbeHyper, margin: float = 1.5) -> float:
    """Feature gain that keeps ``lr * L`` at ``margin`` (< 2), so every GD step lowers the loss.

    ``L`` bounds the loss curvature: the softmax cross-entropy Hessian is at
    most half the largest eigenvalue of ``Z^T Z / n``, plus the L2 term.
    """
    lam = float(np.linalg.norm(Z, 2)) ** 2 / len(Z)
    if lam == 0.0:
        return 1.0
    g2 = (margin / hyper.lr - hyper.l2) / (0.5 * lam)
    return float(min(1.0, math.sqrt(max(g2, 0.0))))


def probe_train(train, seed: int = 0, hyper: ProbeHyper = ProbeHyper()) -> ProbeModel:
    """Multinomial logistic regression by full-batch GD on standardized features.

    Features are standardized, then scaled down if needed so the default step
    size is stable (see :func:`descent_gain`).
    """
    F = probe_features(train.images)
    mean = F.mean(axis=0)
    scale = F.std(axis=0)
    scale[scale < 1e-12] = 1.0
    scale = scale / descent_gain((F - mean) / scale, hyper)
    W, b, hist = train_on_features((F - mean) / scale, train.labels, train.class_count, seed, hyper)
    return ProbeModel(W, b, mean, scale, tuple(train.images.shape[1:]), seed, hyper, hist)


@dataclass
class EffectReport:
    ba_proxy: float
    asr_proxy: float
    auc: float  # target-class score, triggered vs clean non-target samples


def probe_effect(model: ProbeModel, clean_test, triggered_test, target: int) -> EffectReport:
    if len(clean_test) == 0 or len(triggered_test) == 0:
        raise ValueError("probe_effect needs non-empty test sets")
    ba = float(np.mean(model.predict(clean_test.images) == clean_test.labels))
    asr = float(np.mean(model.predict(triggered_test.images) == target))
    neg = clean_test.images[clean_test.labels != target]
    auc = mann_whitney_auc(model.proba(triggered_test.images)[:, target], model.proba(neg)[:, target]) if len(neg) else 0.5
    return EffectReport(ba, asr, auc)


def entropy(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 1e-300, 1.0)
    return -(p * np.log(p)).sum(axis=-1)


def strip_entropy(img, clean_pool, model: ProbeModel, n_blend: int = 8, seed: int = 0) -> float:
    """Mean probe entropy over ``n_blend`` seeded 50/50 blends of ``img`` with pool images."""
    if len(clean_pool) == 0:
        raise ValueError("strip_entropy needs a non-empty pool")
    img = as_image(img)
    rng = np.random.default_rng(seed)
    picks = rng.integers(len(clean_pool), size=n_blend)
    blends = [0.5 * img + 0.5 * as_image(clean_pool[i]) for i in picks]
    return float(entropy(model.proba(blends)).mean())


def ks_statistic(a, b) -> float:
    return float(ks_2samp(a, b).statistic)


# ---------------------------------------------------------------- reports


def write_csv(path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as f:
        names = list(dict.fromkeys(k for r in rows for k in r))
        wr = csv.DictWriter(f, fieldnames=names, restval="")
        wr.writeheader()
        wr.writerows(rows)


def _jsonable(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "inf" if v > 0 else ("-inf" if v < 0 else "nan")
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, np.generic):
        return _jsonable(v.item())
    return v


def write_summary(path, summary: dict) -> None:
    Path(path).write_text(json.dumps(_jsonable(summary), indent=1, sort_keys=True))


def with_phase(family: mk.MaskKind, phase: int) -> mk.MaskKind:
    return replace(family, phase=phase)
