"""Figure rendering for evaluation reports and scene previews.

Figures are written straight to files (Agg backend); the eval CLI drops
them next to its CSV output.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .geometry import Scene
from .metrics import EvalReport


def save_pr_curves(report: EvalReport, path, class_names: Mapping[int, str] | None = None) -> None:
    """One panel per IoU threshold, one PR line per class."""
    names = dict(class_names or {})
    thresholds = sorted(report.detection)
    fig, axes = plt.subplots(1, len(thresholds), figsize=(5.0 * len(thresholds), 4.2), squeeze=False)
    for ax, thr in zip(axes[0], thresholds):
        result = report.detection[thr]
        for cid, cap in sorted(result.per_class.items()):
            label = f"{names.get(cid, cid)} (AP {cap.ap:.3f})"
            recall = np.concatenate([[0.0], cap.recall])
            precision = np.concatenate([[1.0], cap.precision]) if cap.recall.size else np.array([1.0])
            ax.plot(recall, precision, drawstyle="steps-post", label=label)
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_title(f"IoU {thr:g} (mAP {result.mean_ap:.3f})")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8, loc="lower left")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_metric_summary(report: EvalReport, path) -> None:
    """Bar chart of the headline scores (all on the 0..1 scale)."""
    labels = ["mAP@0.25", "mAP@0.5", "corner F1"]
    values = [report.map_at_25, report.map_at_50, report.corner.f1]
    for thr, stats in sorted(report.projection.items()):
        labels.append(f"proj F1@{thr:g}")
        values.append(stats.f1)
    fig, ax = plt.subplots(figsize=(1.6 * len(labels) + 1.5, 4.0))
    bars = ax.bar(labels, values, color="#4878a8")
    for bar, val in zip(bars, values):
        ax.text(bar.get_x() + bar.get_width() / 2, val + 0.01, f"{val:.3f}", ha="center", fontsize=9)
    ax.set_ylim(0, 1.1)
    ax.set_ylabel("score")
    ax.set_title(f"evaluation over {report.scene_count} scenes")
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_scene_bev(
    gt: Scene, path, predictions: Scene | None = None, title: str | None = None
) -> None:
    """Floorplan view: walls as segments, objects as rectangles."""
    fig, ax = plt.subplots(figsize=(6, 6))

    def draw(scene: Scene, wall_color, box_color, label):
        first = True
        for wall in scene.walls:
            a, b = wall.corners[0], wall.corners[1]
            ax.plot(
                [a[0], b[0]], [a[1], b[1]],
                color=wall_color, linewidth=2.5,
                label=label if first else None,
            )
            first = False
        for obj in scene.objects:
            lo = obj.box.lo
            ax.add_patch(
                plt.Rectangle(
                    (lo[0], lo[1]), obj.box.size[0], obj.box.size[1],
                    fill=False, edgecolor=box_color, linewidth=1.2,
                )
            )

    draw(gt, "#2166ac", "#67a9cf", "ground truth")
    if predictions is not None:
        draw(predictions, "#b2182b", "#ef8a62", "prediction")
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right", fontsize=8)
    ax.autoscale_view()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_eval_figures(
    report: EvalReport,
    out_dir,
    class_names: Mapping[int, str] | None = None,
    scene_pairs: Sequence[tuple[str, Scene, Scene]] = (),
    max_scene_figures: int = 4,
) -> list[Path]:
    """Render the standard report figures into a directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    pr_path = out_dir / "pr_curves.png"
    save_pr_curves(report, pr_path, class_names)
    written.append(pr_path)
    summary_path = out_dir / "metric_summary.png"
    save_metric_summary(report, summary_path)
    written.append(summary_path)
    for sid, gt, pred in list(scene_pairs)[:max_scene_figures]:
        scene_path = out_dir / f"scene_{sid}_bev.png"
        save_scene_bev(gt, scene_path, predictions=pred, title=f"scene {sid}")
        written.append(scene_path)
    return written
