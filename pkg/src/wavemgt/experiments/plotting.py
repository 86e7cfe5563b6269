"""SVG figures written next to the CSV outputs.

Figures are for inspection only; the CSV/JSON files are the contract.
Output is reproducible: fixed hash salt and no date metadata.
"""
from __future__ import annotations

import numpy as np

_RC = {
    "figure.figsize": (6.4, 4.0),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "legend.frameon": False,
    "svg.hashsalt": "wavemgt",
    "svg.fonttype": "none",
}


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _save(fig, path):
    plt = _plt()
    with plt.rc_context(_RC):
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _figure(nrows=1):
    plt = _plt()
    with plt.rc_context(_RC):
        fig, axes = plt.subplots(nrows, 1, sharex=True, squeeze=False,
                                 figsize=(6.4, 2.6 * nrows + 0.6))
    for ax in axes[:, 0]:
        ax.grid(True, alpha=0.3)
    return fig, axes[:, 0]


def energy_figure(path, t, E, dissipated, residual):
    fig, (a0, a1) = _figure(2)
    a0.plot(t, E, label="E(t)")
    a0.plot(t, dissipated, label="dissipated")
    a0.plot(t, E + dissipated, "k--", lw=0.8, label="E + dissipated")
    a0.legend()
    a1.semilogy(t, np.abs(residual) + 1e-300, color="C3")
    a1.set_ylabel("|residual|")
    a1.set_xlabel("t")
    return _save(fig, path)


def monitor_figure(path, t, I, J, d_hat):
    fig, (a0, a1) = _figure(2)
    a0.plot(t, I, label="I_alpha")
    a0.axhline(0, color="k", lw=0.6)
    a0.legend()
    a1.plot(t, J, label="J_alpha")
    a1.axhline(d_hat, color="C3", ls="--", label="d_hat")
    a1.legend()
    a1.set_xlabel("t")
    return _save(fig, path)


def spectrum_figure(path, lam, re_wave, re_pred, im_defect, im_pred):
    fig, (a0, a1) = _figure(2)
    a0.loglog(lam, np.abs(re_wave), "o", ms=3, label="|Re s| computed")
    a0.loglog(lam, np.abs(re_pred), "k-", lw=0.8, label="prediction")
    a0.legend()
    a1.loglog(lam, np.abs(im_defect), "o", ms=3, label="|Im defect| computed")
    a1.loglog(lam, np.abs(im_pred), "k-", lw=0.8, label="prediction")
    a1.set_xlabel("lambda")
    a1.legend()
    return _save(fig, path)


def series_figure(path, xs, series: dict, xlabel="t", logy=False):
    fig, (ax,) = _figure(1)
    for name, y in series.items():
        (ax.semilogy if logy else ax.plot)(xs, y, label=name)
    ax.set_xlabel(xlabel)
    ax.legend()
    return _save(fig, path)


def xy_figure(path, curves: dict, xlabel, ylabel, logx=False, logy=False):
    fig, (ax,) = _figure(1)
    for name, (x, y) in curves.items():
        ax.plot(x, y, "o-", ms=3, label=name)
    if logx:
        ax.set_xscale("log")
    if logy:
        ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.legend()
    return _save(fig, path)
