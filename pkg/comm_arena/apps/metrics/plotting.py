"""
Learning-curve figures.
"""
from pathlib import Path

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402

from apps.metrics.services import DEFAULT_EWMA_ALPHA, ewma  # noqa: E402

CURVE_STYLE = {
    'axes.labelsize': 10,
    'font.size': 10,
    'legend.fontsize': 8,
    'xtick.labelsize': 8,
    'ytick.labelsize': 8,
    'svg.fonttype': 'none',
    'svg.hashsalt': 'comm-arena',
}


def plot_curves(path, curves, alpha=DEFAULT_EWMA_ALPHA, title=None):
    """
    Write an SVG with one smoothed reward line per configuration.

    Args:
        curves: {configuration label: raw per-epoch series}
    """
    path = Path(path)
    with plt.rc_context(CURVE_STYLE):
        fig, ax = plt.subplots(figsize=(6.4, 4.0))
        for label, raw in curves.items():
            ax.plot(range(len(raw)), ewma(raw, alpha), label=str(label), linewidth=1.2)
        ax.set_xlabel('Epoch')
        ax.set_ylabel(f'Predator reward per episode (EWMA, alpha={alpha:g})')
        if title:
            ax.set_title(title)
        ax.legend(loc='lower right')
        ax.grid(alpha=0.3)
        fig.tight_layout()
        fig.savefig(path, format='svg', metadata={'Date': None})
        plt.close(fig)
    return path
