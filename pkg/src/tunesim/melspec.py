"""Log-mel spectrogram frontend and the on-disk mel cache.

Framing uses center padding (window//2 zeros on both sides), so a signal of
N samples yields 1 + N // hop frames. Filters are triangles with unit peak
on the HTK mel scale, and log compression clamps at ``log_floor``.
"""

from __future__ import annotations

import struct

import numpy as np
import scipy.fft

from .config import MelConfig
from .errors import DataError

MEL_CACHE_MAGIC = b"MEL0"


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(cfg: MelConfig) -> np.ndarray:
    """Triangular mel filterbank, shape (n_mels, n_fft // 2 + 1)."""
    n_fft = cfg.window_samples
    fmax = cfg.sample_rate / 2.0 if cfg.fmax_hz is None else cfg.fmax_hz
    mel_pts = np.linspace(hz_to_mel(cfg.fmin_hz), hz_to_mel(fmax),
                          cfg.n_mels + 2)
    hz_pts = mel_to_hz(mel_pts)
    bin_freqs = np.arange(n_fft // 2 + 1) * (cfg.sample_rate / n_fft)
    lo = hz_pts[:-2, None]
    ctr = hz_pts[1:-1, None]
    hi = hz_pts[2:, None]
    rising = (bin_freqs[None, :] - lo) / (ctr - lo)
    falling = (hi - bin_freqs[None, :]) / (hi - ctr)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    return fb


def periodic_hann(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def num_frames(n_samples: int, cfg: MelConfig) -> int:
    """Frame count for a signal of n_samples after truncation to
    max_seconds."""
    max_samples = int(round(cfg.max_seconds * cfg.sample_rate))
    n = min(int(n_samples), max_samples)
    return 1 + n // cfg.hop_samples


def compute_log_mel(wave: np.ndarray, cfg: MelConfig) -> np.ndarray:
    """Log-mel spectrogram of a mono waveform.

    Args:
        wave: 1-D float array of samples at cfg.sample_rate.
        cfg: frontend settings.

    Returns:
        float32 array of shape (num_frames, n_mels), values >= cfg.log_floor.
    """
    wave = np.asarray(wave)
    if wave.ndim != 1:
        raise DataError(f"waveform must be 1-D, got shape {wave.shape}")
    if not np.all(np.isfinite(wave)):
        raise DataError("waveform contains non-finite samples")
    max_samples = int(round(cfg.max_seconds * cfg.sample_rate))
    wave = wave[:max_samples].astype(np.float64)

    win = cfg.window_samples
    hop = cfg.hop_samples
    frames = 1 + wave.shape[0] // hop
    half = win // 2
    padded = np.concatenate(
        [np.zeros(half), wave, np.zeros(win)])  # tail slack covers last frame
    idx = np.arange(frames)[:, None] * hop + np.arange(win)[None, :]
    framed = padded[idx] * periodic_hann(win)[None, :]

    power = np.abs(scipy.fft.rfft(framed, axis=1)) ** 2
    mel = power @ mel_filterbank(cfg).T
    log_mel = np.log(np.maximum(mel, np.exp(cfg.log_floor)))
    return log_mel.astype(np.float32)


def save_mel_cache(path, mel: np.ndarray, valid_frames: int) -> None:
    """Write one mel array to the cache file format."""
    mel = np.ascontiguousarray(mel, dtype="<f4")
    if mel.ndim != 2:
        raise DataError("mel cache payload must be 2-D")
    with open(path, "wb") as fh:
        fh.write(MEL_CACHE_MAGIC)
        fh.write(struct.pack("<III", mel.shape[0], mel.shape[1],
                             int(valid_frames)))
        fh.write(mel.tobytes())


def load_mel_cache(path) -> tuple[np.ndarray, int]:
    """Read one mel cache file, returning (mel, valid_frames)."""
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read mel cache {path}: {exc}")
    if len(blob) < 16 or blob[:4] != MEL_CACHE_MAGIC:
        raise DataError(f"mel cache {path} has a bad header")
    frames, n_mels, valid = struct.unpack("<III", blob[4:16])
    expect = 16 + 4 * frames * n_mels
    if len(blob) != expect:
        raise DataError(f"mel cache {path} is truncated or oversized "
                        f"({len(blob)} bytes, expected {expect})")
    mel = np.frombuffer(blob, dtype="<f4", offset=16).reshape(frames, n_mels)
    if valid > frames:
        raise DataError(f"mel cache {path} claims {valid} valid frames of "
                        f"{frames}")
    return mel.copy(), int(valid)
