"""Static PNG figures written next to the CSV outputs (``--plot``)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "figure.figsize": (6.4, 4.0),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path)
    plt.close(fig)
    return path


def snr_series(series: dict, path, title: str = "") -> Path:
    """Overlay several SNR series, each scaled so the first series peaks at 1."""
    names = list(series)
    ref = np.max(np.abs(series[names[0]].values)) or 1.0
    markers = ["o", "x", "+", "s"]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for k, name in enumerate(names):
            s = series[name]
            ax.plot(s.times, s.values / ref, markers[k % len(markers)], ms=4,
                    mfc="none", label=name)
        ax.set_xlabel("time [s]")
        ax.set_ylabel("scaled SNR")
        ax.set_title(title)
        ax.legend()
        return _save(fig, path)


def scatter(truth, estimate, path, title: str = "") -> Path:
    """Estimate-vs-truth and error-vs-truth side by side."""
    truth = np.asarray(truth)
    estimate = np.asarray(estimate)
    with plt.rc_context(STYLE):
        fig, (a, b) = plt.subplots(1, 2, figsize=(10, 4))
        a.plot(truth, estimate, ".", ms=3)
        lim = [truth.min(), truth.max()]
        a.plot(lim, lim, "-", lw=1)
        a.set_xlabel("true SNR")
        a.set_ylabel("estimated SNR")
        b.plot(truth, estimate - truth, ".", ms=3)
        b.axhline(0, lw=1, color="k")
        b.set_xlabel("true SNR")
        b.set_ylabel("error")
        fig.suptitle(title)
        return _save(fig, path)


def psd(estimate, path, title: str = "") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.loglog(estimate.frequencies[1:], estimate.power[1:])
        ax.set_xlabel("frequency [Hz]")
        ax.set_ylabel("PSD [1/Hz]")
        ax.set_title(title)
        return _save(fig, path)


def series(ts, path, title: str = "") -> Path:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.plot(ts.times, ts.samples, lw=0.8)
        ax.set_xlabel("time [s]")
        ax.set_title(title)
        return _save(fig, path)
