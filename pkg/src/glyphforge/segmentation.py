"""Otsu thresholding of glyph templates and pixel-to-token mask downsampling."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

DEFAULT_COVERAGE = 0.25


class SegmentationError(ValueError):
    pass


@dataclass(frozen=True)
class PixelMask:
    bits: np.ndarray  # bool (H, W), True = foreground
    degenerate: bool = False

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    def foreground_count(self) -> int:
        return int(self.bits.sum())

    def to_png_array(self) -> np.ndarray:
        return (self.bits.astype(np.uint8)) * 255


@dataclass(frozen=True)
class TokenMask:
    grid: np.ndarray  # bool (h, w) aligned with latent token grid
    coverage: float

    @property
    def h(self) -> int:
        return self.grid.shape[0]

    @property
    def w(self) -> int:
        return self.grid.shape[1]

    def covered_indices(self) -> np.ndarray:
        """Row-major token indices of glyph-covered tokens."""
        return np.flatnonzero(self.grid.ravel())

    def uncovered_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.grid.ravel())

    def to_bitstring(self) -> str:
        return "".join("1" if b else "0" for b in self.grid.ravel())


def otsu_threshold(gray: np.ndarray) -> int:
    """Threshold maximizing between-class variance over the 256-bin histogram.

    Ties broken toward the smallest threshold.  Classes are {<= t} and {> t}.
    """
    gray = np.asarray(gray)
    hist = np.bincount(gray.ravel().astype(np.int64), minlength=256).astype(np.float64)
    total = hist.sum()
    if total == 0 or np.count_nonzero(hist) < 2:
        raise SegmentationError("degenerate image: fewer than 2 distinct intensities")

    probs = hist / total
    omega = np.cumsum(probs)                      # P(class0) for t = 0..255
    mu = np.cumsum(probs * np.arange(256))        # first moment up to t
    mu_total = mu[-1]

    best_t, best_var = -1, -1.0
    for t in range(255):
        w0, w1 = omega[t], 1.0 - omega[t]
        if w0 <= 0.0 or w1 <= 0.0:
            continue
        mu0 = mu[t] / w0
        mu1 = (mu_total - mu[t]) / w1
        var = w0 * w1 * (mu0 - mu1) ** 2
        if var > best_var + 1e-15:
            best_var, best_t = var, t
    if best_t < 0:
        raise SegmentationError("degenerate image: no valid threshold")
    return best_t


def _estimate_background(gray: np.ndarray) -> float:
    """Background intensity taken as the median of the 1-pixel border."""
    border = np.concatenate([gray[0, :], gray[-1, :], gray[:, 0], gray[:, -1]])
    return float(np.median(border))


def binarize(gray: np.ndarray, threshold: int, background: float | None = None) -> PixelMask:
    """Split at `threshold`; foreground is the class farther from the background fill."""
    gray = np.asarray(gray)
    low = gray <= threshold
    high = ~low
    degenerate = not low.any() or not high.any()
    if background is None:
        background = _estimate_background(gray)
    if degenerate:
        bits = low if low.any() and abs(float(gray[low].mean()) - background) > 127 else high
        return PixelMask(bits=bits.copy(), degenerate=True)
    mean_low = float(gray[low].mean())
    mean_high = float(gray[high].mean())
    if abs(mean_low - background) >= abs(mean_high - background):
        fg = low
    else:
        fg = high
    return PixelMask(bits=fg.copy())


def downsample_mask(mask: PixelMask, patch: int, coverage: float = DEFAULT_COVERAGE) -> TokenMask:
    """Token covered iff foreground fraction within its patch >= coverage."""
    if patch <= 0:
        raise SegmentationError("patch size must be positive")
    bits = mask.bits
    h_pix, w_pix = bits.shape
    pad_h = (-h_pix) % patch
    pad_w = (-w_pix) % patch
    if pad_h or pad_w:
        bits = np.pad(bits, ((0, pad_h), (0, pad_w)), constant_values=False)
    h, w = bits.shape[0] // patch, bits.shape[1] // patch
    frac = bits.reshape(h, patch, w, patch).mean(axis=(1, 3))
    return TokenMask(grid=frac >= coverage, coverage=coverage)
