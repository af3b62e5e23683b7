"""Feature extraction for the two contact modalities.

Audio becomes log-mel spectrograms; tactile frames are small intensity
grids used as-is.  The mixup and blur/crop augmentations feed the
self-supervised encoder training; both are deterministic given an rng.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class MelConfig:
    sample_rate: int = 16000
    window: int = 1024  # 64 ms
    hop: int = 160  # 10 ms
    n_mels: int = 64
    fmin: float = 60.0
    fmax: float = 7800.0
    floor: float = 1e-10


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_center_frequencies(cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Peak frequency of each triangular filter, in Hz."""
    pts = _mel_to_hz(np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    return pts[1:-1]


def mel_filterbank(cfg: MelConfig = MelConfig()) -> np.ndarray:
    """(n_mels, window // 2 + 1) triangular filters, unit peak."""
    if cfg.fmax <= cfg.fmin:
        raise ValueError("fmax must exceed fmin")
    if cfg.fmax > cfg.sample_rate / 2:
        raise ValueError("fmax beyond Nyquist")
    pts = _mel_to_hz(np.linspace(_hz_to_mel(cfg.fmin), _hz_to_mel(cfg.fmax), cfg.n_mels + 2))
    freqs = np.fft.rfftfreq(cfg.window, d=1.0 / cfg.sample_rate)
    fb = np.zeros((cfg.n_mels, len(freqs)))
    for k in range(cfg.n_mels):
        lo, mid, hi = pts[k], pts[k + 1], pts[k + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        fb[k] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def log_mel_spectrogram(samples: np.ndarray, cfg: MelConfig = MelConfig()) -> np.ndarray:
    """Log-mel power spectrogram, shape (frames, n_mels).

    frames = 1 + (n - window) // hop, so a 0.5 s snippet at 16 kHz with the
    default 64 ms window and 10 ms hop yields 44 frames.  Silence maps to a
    uniform grid at log(floor).
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 1:
        raise ValueError("expected a 1-D sample array")
    if len(x) < cfg.window:
        raise ValueError(f"need at least {cfg.window} samples, got {len(x)}")
    n_frames = 1 + (len(x) - cfg.window) // cfg.hop
    idx = np.arange(cfg.window)[None, :] + cfg.hop * np.arange(n_frames)[:, None]
    frames = x[idx] * np.hanning(cfg.window)[None, :]
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    mel = power @ mel_filterbank(cfg).T
    return np.log(np.maximum(mel, cfg.floor))


def log_mixup_exp(x_i: np.ndarray, x_k: np.ndarray, lam: float) -> np.ndarray:
    """Mix two log-domain spectrograms: log((1-lam) exp(x_i) + lam exp(x_k)).

    Computed with logaddexp so large log-power values cannot overflow.
    The mixing weight is drawn by the caller, conventionally U(0, 0.4).
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lam must lie in [0, 1]")
    a = np.asarray(x_i, dtype=np.float64)
    b = np.asarray(x_k, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("mixup inputs must share a shape")
    if lam == 0.0:
        return a.copy()
    if lam == 1.0:
        return b.copy()
    return np.logaddexp(np.log1p(-lam) + a, np.log(lam) + b)


@dataclass(frozen=True)
class TactileAugment:
    """Blur + random-resized-crop for tactile grids.

    blur_sigma and crop_scale are sampled uniformly from the given ranges;
    a (0, 0) blur range with a (1, 1) crop range is the identity.
    """

    blur_sigma: tuple[float, float] = (0.0, 1.0)
    crop_scale: tuple[float, float] = (0.9, 1.0)


def _resize_bilinear(img: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    h, w = img.shape
    yy = np.linspace(0.0, h - 1.0, shape[0])
    xx = np.linspace(0.0, w - 1.0, shape[1])
    grid = np.meshgrid(yy, xx, indexing="ij")
    return ndimage.map_coordinates(img, grid, order=1, mode="nearest")


def augment_tactile(
    grid: np.ndarray, rng: np.random.Generator, spec: TactileAugment = TactileAugment()
) -> np.ndarray:
    """One augmented view of a tactile grid; deterministic under the rng."""
    img = np.asarray(grid, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("tactile grid must be 2-D")
    sigma = float(rng.uniform(*spec.blur_sigma))
    scale = float(rng.uniform(*spec.crop_scale))
    out = img
    if sigma > 0.0:
        out = ndimage.gaussian_filter(out, sigma=sigma, mode="nearest")
    if scale < 1.0:
        h, w = img.shape
        ch, cw = max(1, round(h * scale)), max(1, round(w * scale))
        top, left = (h - ch) // 2, (w - cw) // 2
        out = _resize_bilinear(out[top : top + ch, left : left + cw], (h, w))
    return out


@dataclass
class Standardizer:
    """Scalar mean/std standardization fit on a training set."""

    mean: float = 0.0
    std: float = 1.0

    @staticmethod
    def fit(data: np.ndarray) -> "Standardizer":
        arr = np.asarray(data, dtype=np.float64)
        std = float(arr.std())
        return Standardizer(float(arr.mean()), std if std > 0 else 1.0)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=np.float64) - self.mean) / self.std
