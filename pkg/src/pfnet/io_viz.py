"""Matrix interchange and visualization.

CSV read/write round-trips matrices at full decimal precision, heatmaps
are written as binary P6 PPM files with a hot colormap (black, red,
yellow, white), and matplotlib renderings of the same data are
available for report output.  A small STFT front end turns 16-bit PCM
WAV audio into magnitude spectrograms.
"""

from __future__ import annotations

import csv
import wave

import numpy as np


def write_matrix_csv(m: np.ndarray, path) -> None:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        for row in m:
            writer.writerow([f"{v:.17g}" for v in row])


def read_matrix_csv(path) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: non-numeric cell") from exc
    if not rows:
        raise ValueError(f"{path}: empty matrix")
    widths = {len(r) for r in rows}
    if len(widths) != 1:
        raise ValueError(f"{path}: ragged rows (widths {sorted(widths)})")
    m = np.array(rows)
    if np.any(m < 0.0):
        raise ValueError(f"{path}: negative entries")
    return m


def hot_colormap(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to RGB bytes along black-red-yellow-white."""
    v = np.clip(np.asarray(values, dtype=float), 0.0, 1.0)
    r = np.clip(3.0 * v, 0.0, 1.0)
    g = np.clip(3.0 * v - 1.0, 0.0, 1.0)
    b = np.clip(3.0 * v - 2.0, 0.0, 1.0)
    rgb = np.stack([r, g, b], axis=-1)
    return np.round(rgb * 255.0).astype(np.uint8)


def write_heatmap(m: np.ndarray, path, pixel_size: int = 1) -> None:
    """Binary P6 PPM heatmap, one pixel block per entry.

    The matrix minimum maps to black and the maximum to white; a
    constant matrix renders black.  Row 1 is the top image row.
    """
    m = np.atleast_2d(np.asarray(m, dtype=float))
    if m.size == 0:
        raise ValueError("empty matrix")
    lo, hi = float(m.min()), float(m.max())
    scaled = (m - lo) / (hi - lo) if hi > lo else np.zeros_like(m)
    rgb = hot_colormap(scaled)
    if pixel_size > 1:
        rgb = np.repeat(np.repeat(rgb, pixel_size, axis=0), pixel_size, axis=1)
    height, width = rgb.shape[:2]
    with open(path, "wb") as fh:
        fh.write(f"P6\n{width} {height}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def save_heatmap_png(m: np.ndarray, path, title: str | None = None) -> None:
    """Matplotlib rendering of the same heatmap, for report figures."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    im = ax.imshow(np.atleast_2d(m), aspect="auto", cmap="hot", interpolation="nearest")
    fig.colorbar(im, ax=ax)
    if title:
        ax.set_title(title)
    ax.set_xlabel("column")
    ax.set_ylabel("row")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_trace_png(per_equation_rmse: np.ndarray, equation_ids, path) -> None:
    """Per-equation RMSE versus iteration on a log scale."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    data = np.atleast_2d(per_equation_rmse)
    for j, eq_id in enumerate(equation_ids):
        ax.semilogy(data[:, j], label=str(eq_id))
    ax.set_xlabel("iteration")
    ax.set_ylabel("reconstruction RMSE")
    if len(equation_ids) <= 12:
        ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def read_wav(path) -> tuple[np.ndarray, int]:
    """Mono 16-bit PCM WAV -> (samples in [-1, 1], sample rate)."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1 or wf.getsampwidth() != 2:
            raise ValueError(
                "only mono 16-bit PCM WAV is supported; convert with e.g. "
                "`sox in.wav -c 1 -b 16 out.wav`"
            )
        raw = wf.readframes(wf.getnframes())
        rate = wf.getframerate()
    samples = np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    return samples, rate


def stft_magnitude(samples: np.ndarray, window_len: int = 1024, hop: int = 256) -> np.ndarray:
    """Hann-windowed STFT magnitude with window_len // 2 frequency rows.

    The DC bin is kept and the Nyquist bin dropped, giving a power of
    two row count.  Columns are frames at the given hop.
    """
    samples = np.asarray(samples, dtype=float)
    if window_len < 2 or window_len & (window_len - 1):
        raise ValueError("window_len must be a power of two")
    if hop < 1:
        raise ValueError("hop must be >= 1")
    if samples.size < window_len:
        raise ValueError("signal shorter than one window")
    window = np.hanning(window_len)
    n_frames = 1 + (samples.size - window_len) // hop
    frames = np.stack(
        [samples[i * hop : i * hop + window_len] * window for i in range(n_frames)]
    )
    spec = np.fft.rfft(frames, axis=1)[:, : window_len // 2]
    return np.abs(spec).T
