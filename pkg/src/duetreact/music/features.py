"""Deterministic 54-channel per-frame audio features.

Channel layout (frame rate = motion fps):

====== ===================================================
 0-19  log mel-band energies (20 bands, 60 Hz .. Nyquist)
20-31  chroma energies, C..B, each frame scaled to max 1
32-51  band-wise onset strength (rectified log-mel flux)
52     aggregate onset envelope (mean of 32-51)
53     binary beat indicator
====== ===================================================
"""
from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

N_MELS = 20
N_CHROMA = 12
N_FFT = 512
LAYOUT = {
    "mel": (0, 20),
    "chroma": (20, 32),
    "onset_bands": (32, 52),
    "onset_envelope": (52, 53),
    "beat": (53, 54),
}
CHANNELS = 54
BEAT_CHANNEL = 53


@dataclass
class MusicFeatures:
    values: np.ndarray  # (T, 54)
    fps: float
    layout: dict = field(default_factory=lambda: dict(LAYOUT))

    @property
    def frames(self) -> int:
        return self.values.shape[0]

    def channel(self, name: str) -> np.ndarray:
        lo, hi = self.layout[name]
        return self.values[:, lo:hi]


def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m) / 2595.0) - 1.0)


def mel_filterbank(sr: int, n_fft: int = N_FFT, n_mels: int = N_MELS, fmin: float = 60.0) -> np.ndarray:
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sr)
    edges = _mel_to_hz(np.linspace(_hz_to_mel(fmin), _hz_to_mel(sr / 2.0), n_mels + 2))
    fb = np.zeros((n_mels, len(freqs)))
    for m in range(n_mels):
        lo, mid, hi = edges[m], edges[m + 1], edges[m + 2]
        up = (freqs - lo) / (mid - lo)
        down = (hi - freqs) / (hi - mid)
        fb[m] = np.clip(np.minimum(up, down), 0.0, None)
    return fb


def chroma_map(sr: int, n_fft: int = N_FFT) -> np.ndarray:
    freqs = np.fft.rfftfreq(n_fft, 1.0 / sr)
    cm = np.zeros((N_CHROMA, len(freqs)))
    valid = (freqs >= 27.5) & (freqs <= 5000.0)
    pitch = np.round(12.0 * np.log2(freqs[valid] / 440.0)).astype(int) + 9  # A4 -> class 9
    cm[pitch % 12, np.nonzero(valid)[0]] = 1.0
    return cm


def power_spectrogram(waveform: np.ndarray, sr: int, fps: float, frames: int) -> np.ndarray:
    """Hann-windowed power spectra centred on each motion frame, (T, n_fft/2+1)."""
    half = N_FFT // 2
    padded = np.pad(waveform, (half, half + N_FFT))
    starts = np.round(np.arange(frames) * sr / fps).astype(np.int64)
    idx = starts[:, None] + np.arange(N_FFT)[None]
    idx = np.clip(idx, 0, len(padded) - 1)
    win = np.hanning(N_FFT)
    spec = np.fft.rfft(padded[idx] * win[None], axis=1)
    return spec.real ** 2 + spec.imag ** 2


def pick_beats(envelope: np.ndarray, fps: float, window_s: float = 0.5, rel_floor: float = 0.3) -> np.ndarray:
    """Peak-pick an onset envelope against a moving mean over ``window_s`` seconds."""
    T = len(envelope)
    beats = np.zeros(T)
    peak = envelope.max() if T else 0.0
    if peak <= 0:
        return beats
    half = max(1, int(round(window_s * fps / 2)))
    for k in range(T):
        left = envelope[k - 1] if k > 0 else -np.inf
        right = envelope[k + 1] if k + 1 < T else -np.inf
        if not (envelope[k] > left and envelope[k] >= right):
            continue
        local = envelope[max(0, k - half):k + half + 1].mean()
        if envelope[k] > local and envelope[k] >= rel_floor * peak:
            beats[k] = 1.0
    return beats


def extract_features(waveform: np.ndarray, sample_rate: int, fps: float = 30.0,
                     frames: int | None = None) -> MusicFeatures:
    waveform = np.asarray(waveform, dtype=np.float64).reshape(-1)
    if waveform.size == 0:
        raise ValueError("empty waveform")
    if sample_rate < 16000:
        raise ValueError(f"sample rate {sample_rate} Hz below the 16 kHz minimum")
    if not np.all(np.isfinite(waveform)):
        raise ValueError("waveform contains non-finite samples")
    T = frames if frames is not None else int(np.floor(len(waveform) / sample_rate * fps))
    power = power_spectrogram(waveform, sample_rate, fps, T)
    mel = power @ mel_filterbank(sample_rate).T
    # relative floor keeps onset channels invariant to waveform gain
    top = mel.max()
    floor = 1e-10 * top if top > 0 else 1e-10
    logmel = np.log(mel + floor)
    chroma = power @ chroma_map(sample_rate).T
    cmax = chroma.max(axis=1, keepdims=True)
    chroma = np.divide(chroma, cmax, out=np.zeros_like(chroma), where=cmax > 0)
    flux = np.zeros_like(logmel)
    flux[1:] = np.maximum(0.0, np.diff(logmel, axis=0))
    envelope = flux.mean(axis=1)
    beat = pick_beats(envelope, fps)
    values = np.concatenate([logmel, chroma, flux, envelope[:, None], beat[:, None]], axis=1)
    return MusicFeatures(values, fps)


def beats_from_features(features) -> np.ndarray:
    """Frame indices whose beat channel is set."""
    values = features.values if isinstance(features, MusicFeatures) else np.asarray(features)
    return np.nonzero(values[:, BEAT_CHANNEL] > 0.5)[0]


def synth_click_track(duration: float, bpm: float, sample_rate: int = 16000, offset: float = 0.0,
                      seed: int = 0, tone: bool = True) -> np.ndarray:
    """Clicks on every beat over a quiet chord pad that changes every four beats."""
    rng = np.random.default_rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    out = np.zeros(n)
    period = 60.0 / bpm
    if tone:
        roots = 220.0 * 2.0 ** (rng.integers(0, 12, size=int(duration / (4 * period)) + 2) / 12.0)
        bar = np.clip(((t - offset) // (4 * period)).astype(int) + 1, 0, len(roots) - 1)
        f0 = roots[bar]
        for ratio in (1.0, 1.25, 1.5):
            phase = 2 * np.pi * np.cumsum(f0 * ratio) / sample_rate
            out += 0.03 * np.sin(phase)
    click_len = int(0.02 * sample_rate)
    env = np.exp(-np.arange(click_len) / (0.003 * sample_rate))
    burst = rng.standard_normal(click_len) * env
    beat_times = offset + period * np.arange(int((duration - offset) / period) + 1)
    for bt in beat_times:
        s = int(round(bt * sample_rate))
        e = min(n, s + click_len)
        if 0 <= s < n:
            out[s:e] += 0.8 * burst[:e - s]
    return out


def click_times(duration: float, bpm: float, offset: float = 0.0) -> np.ndarray:
    period = 60.0 / bpm
    return offset + period * np.arange(int((duration - offset) / period) + 1)


def read_wav(path) -> tuple[np.ndarray, int]:
    """Mono 16-bit PCM WAV -> float samples in [-1, 1] and the sample rate."""
    with wave.open(str(path), "rb") as fh:
        if fh.getsampwidth() != 2:
            raise ValueError("only 16-bit PCM WAV is supported")
        rate = fh.getframerate()
        channels = fh.getnchannels()
        raw = np.frombuffer(fh.readframes(fh.getnframes()), dtype="<i2").astype(np.float64) / 32768.0
    if channels > 1:
        raw = raw.reshape(-1, channels).mean(axis=1)
    return raw, rate


def write_wav(path, samples: np.ndarray, sample_rate: int) -> None:
    pcm = np.clip(np.round(np.asarray(samples) * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(Path(path)), "wb") as fh:
        fh.setnchannels(1)
        fh.setsampwidth(2)
        fh.setframerate(sample_rate)
        fh.writeframes(pcm.tobytes())
