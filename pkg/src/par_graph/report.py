from __future__ import annotations

from typing import List, Sequence, Tuple

from .schema import DatasetStats, MetricsReport

ACTIVITY_COLUMNS: Tuple[Tuple[str, str], ...] = (
    ("P_i", "p_i"),
    ("R_i", "r_i"),
    ("F_i", "f_i"),
    ("P_p", "p_p"),
    ("R_p", "r_p"),
    ("F_p", "f_p"),
    ("P_g", "p_g"),
    ("R_g", "r_g"),
    ("F_g", "f_g"),
    ("F_a", "f_a"),
)

DETECTION_COLUMNS: Tuple[Tuple[str, str], ...] = (
    ("IOU@0.5", "iou_05"),
    ("IOU@AUC", "iou_auc"),
    ("Mat.IOU", "mat_iou"),
)

STATS_COLUMNS: Tuple[Tuple[str, str], ...] = (
    ("frames", "frames"),
    ("groups", "groups"),
    ("subjects", "subjects"),
    ("individual", "individual_labels"),
    ("social", "social_labels"),
    ("global", "global_labels"),
)


def percent(value: float) -> str:
    return f"{100.0 * value:.1f}"


def _table(header: Sequence[str], rows: Sequence[Sequence[str]]) -> List[str]:
    widths = [max([len(h)] + [len(r[i]) for r in rows]) for i, h in enumerate(header)]
    lines = ["  ".join(h.rjust(w) for h, w in zip(header, widths))]
    lines.append("  ".join("-" * w for w in widths))
    for row in rows:
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(row, widths)))
    return lines


def format_table(report: MetricsReport, label: str = "model") -> str:
    """Activity scores then group-detection scores, as percentages with one decimal."""
    activity = _table(
        ["method"] + [name for name, _ in ACTIVITY_COLUMNS],
        [[label] + [percent(getattr(report, attr)) for _, attr in ACTIVITY_COLUMNS]],
    )
    detection = _table(
        ["method"] + [name for name, _ in DETECTION_COLUMNS],
        [[label] + [percent(getattr(report, attr)) for _, attr in DETECTION_COLUMNS]],
    )
    lines = activity + [""] + detection
    if report.gt_groups_used:
        lines.append("(ground-truth groups supplied at inference)")
    return "\n".join(lines)


def format_stats(stats: Sequence[DatasetStats]) -> str:
    return "\n".join(
        _table(
            ["split"] + [name for name, _ in STATS_COLUMNS],
            [[s.name] + [str(getattr(s, attr)) for _, attr in STATS_COLUMNS] for s in stats],
        )
    )
