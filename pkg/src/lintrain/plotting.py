"""Figures written next to the CSV artifacts (Agg backend, PNG files)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# Fixed metadata keeps repeated runs byte-stable.
_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def plot_certificate(path, report):
    """Objective gap J - L* against the certified rate c_z c_r zeta / (2t)."""
    steps = np.array([r[0] for r in report.trace], dtype=float)
    J = np.array([r[1] for r in report.trace])
    fig, ax = plt.subplots(figsize=(5, 3.6))
    keep = steps > 0
    ax.loglog(steps[keep], np.maximum(J[keep] - report.L_star, 1e-300), label="J - L*")
    rate = report.c_z * report.c_r * report.zeta / 2 / steps[keep]
    ax.loglog(steps[keep], rate, "--", label="certified rate")
    ax.axhline(report.epsilon, color="grey", lw=0.8, label="epsilon")
    ax.set_xlabel("step")
    ax.set_ylabel("objective gap")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_concentration(path, report):
    fig, ax = plt.subplots(figsize=(5, 3.6))
    widths = list(report.widths)
    ax.boxplot([report.deviations[m] for m in widths], showfliers=False)
    ax.set_xticks(range(1, len(widths) + 1), [str(m) for m in widths])
    ax.set_xlabel("width m")
    ax.set_ylabel("sqrt(m) |norm^2/m - mean|")
    return _save(fig, path)


def plot_training(path, rows, title=""):
    steps = [r["step"] for r in rows]
    fig, axes = plt.subplots(1, 3, figsize=(11, 3.4))
    axes[0].plot(steps, [r["train_acc"] for r in rows], label="train")
    axes[0].plot(steps, [r["test_acc"] for r in rows], label="test")
    axes[0].set_ylabel("accuracy (%)")
    axes[0].legend(frameon=False)
    axes[1].semilogy(steps, [r["train_loss"] for r in rows])
    axes[1].set_ylabel("train loss")
    axes[2].plot(steps, [r["weight_norm"] for r in rows])
    axes[2].set_ylabel("max output-unit norm")
    for ax in axes:
        ax.set_xlabel("step")
    if title:
        fig.suptitle(title)
    return _save(fig, path)


def plot_figure2(path, table):
    """Four panels: train accuracy, test accuracy, gap, weight norm."""
    steps = [r["step"] for r in table]
    panels = [("train_acc", "train accuracy (%)"), ("test_acc", "test accuracy (%)"),
              ("gap", "(train - test) / 100"), ("weight_norm", "weight norm")]
    fig, axes = plt.subplots(1, 4, figsize=(14, 3.4))
    for ax, (key, label) in zip(axes, panels):
        for tag in ("natural", "corrupted"):
            ax.plot(steps, [r[f"{tag}_{key}"] for r in table], label=tag)
        ax.set_xlabel("step")
        ax.set_ylabel(label)
    axes[0].legend(frameon=False)
    return _save(fig, path)
