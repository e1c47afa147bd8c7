"""Static SVG figures of reduced densities, trajectories and visibility series."""

import logging
import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from cat_decoherence.classical import CORNER_LABELS, TrajectoryEnsemble  # noqa: E402
from cat_decoherence.reduction import DecoherenceReport, ReducedDensityProfile  # noqa: E402

logger = logging.getLogger(__name__)

# Fixed salt and no date keep repeated runs byte-identical.
matplotlib.rcParams["svg.hashsalt"] = "cat-decoherence"
SVG_METADATA = {"Date": None}

CURVES = (
    ("packet0_eff", "packet at 0", "tab:blue", "-"),
    ("packetd_eff", "packet at d", "tab:orange", "-"),
    ("interference_eff", "interference", "tab:green", "--"),
    ("total", "total", "black", ":"),
)


def _save(fig, path: str) -> str:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)
    logger.debug("saved figure %s", path)
    return path


def _draw_profile(ax, profile: ReducedDensityProfile) -> None:
    for attr, label, color, style in CURVES:
        ax.plot(profile.grid, getattr(profile, attr), color=color, linestyle=style, label=label)
    ax.set_xlabel(f"x{profile.particle}")
    ax.set_ylabel("reduced density")
    ax.set_title(f"particle {profile.particle}, t = {profile.t:g}")
    ax.legend(fontsize="small")


def _draw_trajectories(ax, ensemble: TrajectoryEnsemble, particle: int) -> None:
    axis = particle - 1
    for label in CORNER_LABELS:
        ax.plot(ensemble.times, ensemble.positions[label][:, axis], linewidth=1.0, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel(f"x{particle}")
    ax.set_title(f"classical trajectories, particle {particle}")
    ax.legend(fontsize="x-small", ncol=2)


def plot_profile(profile: ReducedDensityProfile, path: str) -> str:
    """Effective packets, interference and total of one reduced density."""
    fig, ax = plt.subplots(figsize=(6, 4))
    _draw_profile(ax, profile)
    fig.tight_layout()
    return _save(fig, path)


def plot_trajectories(ensemble: TrajectoryEnsemble, particle: int, path: str) -> str:
    fig, ax = plt.subplots(figsize=(6, 4))
    _draw_trajectories(ax, ensemble, particle)
    fig.tight_layout()
    return _save(fig, path)


def plot_visibility(report: DecoherenceReport, path: str) -> str:
    """Visibility series of every reported particle with the threshold line."""
    fig, ax = plt.subplots(figsize=(7, 4))
    for particle, series in report.visibility.items():
        ax.plot(report.times, series, label=f"particle {particle}")
        onset = report.onsets.get(particle)
        if onset is not None:
            ax.axvline(onset, linestyle=":", linewidth=0.8)
    ax.axhline(report.threshold, color="gray", linestyle="--", label="threshold")
    ax.set_xlabel("t")
    ax.set_ylabel("visibility")
    ax.legend(fontsize="small")
    fig.tight_layout()
    return _save(fig, path)


def plot_panels(
    profiles: list[ReducedDensityProfile],
    ensemble: TrajectoryEnsemble,
    particle: int,
    path: str,
) -> str:
    """Three reduced-density panels followed by the trajectory panel."""
    fig, axes = plt.subplots(2, 2, figsize=(11, 8))
    for ax, profile, tag in zip(axes.flat, profiles, "abc"):
        _draw_profile(ax, profile)
        ax.set_title(f"({tag}) t = {profile.t:g}")
    _draw_trajectories(axes.flat[3], ensemble, particle)
    axes.flat[3].set_title("(d) classical trajectories")
    fig.tight_layout()
    return _save(fig, path)
