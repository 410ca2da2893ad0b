"""Matplotlib renderings written alongside the delimited outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIG_WIDTH = 6.0


def _new(width=FIG_WIDTH, height=None, **kw):
    if height is None:
        height = width * (np.sqrt(5.0) - 1.0) / 2.0
    return plt.subplots(figsize=(width, height), **kw)


def render_heatmap(grid, path, title=None, markers=()):
    """Heat map of a probability grid; warmer colours are more probable.

    ``markers`` is an iterable of ``(lon, lat, label)`` drawn on top.
    """
    lon_min, lon_max, lat_min, lat_max = grid.spec.bbox
    fig, ax = _new(FIG_WIDTH, FIG_WIDTH * 0.8)
    im = ax.imshow(grid.values, extent=(lon_min, lon_max, lat_min, lat_max),
                   origin="upper", cmap="jet", aspect="auto", interpolation="nearest")
    for lon, lat, label in markers:
        ax.plot(lon, lat, marker="x", color="white", markersize=8, mew=2)
        ax.annotate(label, (lon, lat), xytext=(4, 4), textcoords="offset points", color="white")
    ax.set_xlabel("longitude [deg]")
    ax.set_ylabel("latitude [deg]")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="probability")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep(rows, path, title=None):
    """Average log-likelihood and KL-to-baseline against the component cap."""
    caps = [r.cap for r in rows]
    fig, (ax_ll, ax_kl) = _new(FIG_WIDTH * 1.6, FIG_WIDTH * 0.6, ncols=2)
    ax_ll.errorbar(caps, [r.mean_log_likelihood for r in rows],
                   yerr=[r.std_log_likelihood for r in rows], marker="o", capsize=3)
    ax_ll.set_xlabel("max components")
    ax_ll.set_ylabel("average log-likelihood")
    ax_kl.errorbar(caps, [r.mean_kl_to_baseline for r in rows],
                   yerr=[r.std_kl_to_baseline for r in rows], marker="s", capsize=3, color="C3")
    ax_kl.set_xlabel("max components")
    ax_kl.set_ylabel("symmetric KL to 1-component [nats]")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_features(features, path, synthetic=None, title=None):
    """Scatter of distance/orientation features, synthetic rows in a second colour."""
    features = np.asarray(features, dtype=float)
    fig, ax = _new()
    if synthetic is None:
        ax.scatter(features[:, 0], features[:, 1], s=6)
    else:
        synthetic = np.asarray(synthetic, dtype=bool)
        ax.scatter(features[synthetic, 0], features[synthetic, 1], s=4, alpha=0.4, label="semi-synthetic")
        ax.scatter(features[~synthetic, 0], features[~synthetic, 1], s=18, color="k", label="observed")
        ax.legend(loc="best")
    ax.set_xlabel("distance [km]")
    ax.set_ylabel("orientation [degrees]")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
