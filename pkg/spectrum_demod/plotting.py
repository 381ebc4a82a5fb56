from typing import Tuple

import matplotlib.pyplot as plt
import numpy as np
from astropy.table import Table
from matplotlib import rc
from matplotlib.axes import Axes
from matplotlib.figure import Figure

from .lineshape import GYROMAGNETIC
from .scan import FieldImage
from .theory import SensitivityMethod
from .tracker import ClosedLoopResult

rc("font", **{"family": "serif", "size": 14})

_THEORY_STYLES = {
    SensitivityMethod.DEMOD_PHASE: ("black", "-", "Phase demodulation"),
    SensitivityMethod.AMPLITUDE_POINT: ("grey", ":", "Amplitude point"),
    SensitivityMethod.LSTSQ_FULL: ("blue", "--", "Least squares"),
    SensitivityMethod.LSTSQ_LARGEALPHA: ("blue", ":", r"Least squares, large $\alpha$"),
}


def _add_field_twin_axis(ax: Axes, label: str) -> Axes:
    """Secondary y axis showing the frequency axis in field units."""
    twin = ax.secondary_yaxis(
        "right", functions=(GYROMAGNETIC.to_field, GYROMAGNETIC.to_frequency)
    )
    twin.set_ylabel(label)
    return twin


def setup_sensitivity_plot() -> Tuple[Figure, Axes]:
    """Frequency std against integration time on log-log axes."""
    fig, ax = plt.subplots(figsize=(8, 6))
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel(r"$t_\mathrm{int}$ [s]")
    ax.set_ylabel(r"std($f_0$) [Hz]")
    ax.grid(True, which="both", alpha=0.3)
    _add_field_twin_axis(ax, "std(B) [T]")
    return fig, ax


def plot_sensitivity_sweep(ax: Axes, table: Table):
    """Measured std and the shot-noise prediction, one series per window."""
    windows = np.unique(np.asarray(table["delta_f_win_hz"]))
    colors = plt.cm.viridis(np.linspace(0, 0.9, windows.size))
    for window, color in zip(windows, colors):
        rows = table[np.asarray(table["delta_f_win_hz"]) == window]
        rows.sort("t_int_s")
        label = rf"$\Delta f$ = {window / 1e6:.3g} MHz"
        ax.plot(rows["t_int_s"], rows["std_hz"], "o", color=color, label=label)
        ax.plot(rows["t_int_s"], rows["predicted_hz"], "-", color=color, lw=1)
    ax.legend(loc="upper right", fontsize=11)


def setup_alpha_plot() -> Tuple[Figure, Axes]:
    fig, ax = plt.subplots(figsize=(8, 6))
    ax.set_xlabel(r"$\alpha = \Delta f / 2\Gamma$")
    ax.set_ylabel(r"$\eta$ [Hz$\sqrt{\mathrm{s}}$]")
    ax.grid(True, alpha=0.3)
    _add_field_twin_axis(ax, r"$\eta$ [T$\sqrt{\mathrm{s}}$]")
    return fig, ax


def plot_alpha_sweep(ax: Axes, table: Table):
    """Monte-Carlo eta against alpha with the closed-form curves."""
    alpha = np.asarray(table["alpha"])
    order = np.argsort(alpha)
    for method, (color, style, label) in _THEORY_STYLES.items():
        column = f"eta_{method}_hz_rt_s"
        if column in table.colnames:
            ax.plot(alpha[order], np.asarray(table[column])[order], style, color=color, label=label)
    ax.plot(alpha, table["eta_hz_rt_s"], "o", color="red", label="Simulated")
    ax.legend(loc="upper right", fontsize=11)


def setup_tracking_plot() -> Tuple[Figure, Axes]:
    fig, ax = plt.subplots(figsize=(12, 5))
    ax.set_xlabel("t [s]")
    ax.set_ylabel("B [mT]")
    ax.grid(True, alpha=0.3)
    return fig, ax


def plot_tracking(ax: Axes, result: ClosedLoopResult, zero_field_frequency: float):
    """Estimated and true field with the instantaneous window as gray bars."""
    low = GYROMAGNETIC.to_field(result.window_low - zero_field_frequency) * 1e3
    high = GYROMAGNETIC.to_field(result.window_high - zero_field_frequency) * 1e3
    width = np.diff(result.t).mean() if result.t.size > 1 else 1.0
    ax.bar(
        result.t, high - low, bottom=low, width=width, align="edge", color="grey", alpha=0.25, lw=0
    )
    ax.plot(result.t, result.b_true * 1e3, color="black", lw=1, label="True field")
    ax.plot(result.t, result.b_est * 1e3, ".", color="red", ms=4, label="Estimate")
    lost = ~result.lock
    if np.any(lost):
        ax.plot(result.t[lost], result.b_est[lost] * 1e3, "x", color="blue", label="No lock")
    ax.legend(loc="upper right", fontsize=11)


def plot_scan(image: FieldImage) -> Tuple[Figure, Axes]:
    """Heatmap of an estimated field image in mT; unlocked pixels are blank."""
    cfg = image.config
    fig, ax = plt.subplots(figsize=(8, 8 * cfg.n_y / max(cfg.n_x, 1) + 1))
    data = np.where(image.lock, image.b * 1e3, np.nan)
    extent = [
        cfg.xs[0] * 1e6,
        (cfg.xs[-1] + cfg.pitch) * 1e6,
        cfg.ys[0] * 1e6,
        (cfg.ys[-1] + cfg.pitch) * 1e6,
    ]
    mesh = ax.imshow(data, origin="lower", extent=extent, cmap="RdBu_r")
    fig.colorbar(mesh, ax=ax, label="B [mT]")
    ax.set_xlabel(r"x [$\mu$m]")
    ax.set_ylabel(r"y [$\mu$m]")
    ax.set_title(f"{cfg.rate:g} Hz, {image.wall_time:.0f} s")
    return fig, ax
