"""Report rendering: delimited tables plus matplotlib figures.

Everything here is presentation only. Figures are written headless (Agg)
with stripped metadata so reruns with the same seed produce byte-identical
files.
"""

from __future__ import annotations

import csv
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .marking import OverlapStats  # noqa: E402
from .synthesis import UsageStats  # noqa: E402

_PNG_META = {"metadata": {"Software": None}}


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def usage_histogram_figure(usage: UsageStats, path) -> None:
    """Distribution of idioms used per decoded output."""
    fig, ax = plt.subplots(figsize=(6, 4))
    if usage.histogram:
        xs = sorted(usage.histogram)
        ax.bar(xs, [usage.histogram[x] for x in xs], color="#4878a8")
        ax.set_xticks(xs)
    ax.set_xlabel("idiom actions per output")
    ax.set_ylabel("outputs")
    ax.set_title("Idiom usage per decoded program")
    fig.tight_layout()
    fig.savefig(path, **_PNG_META)
    plt.close(fig)


def idiom_frequency_figure(per_idiom: dict[int, int], path, title="Uses per idiom") -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    if per_idiom:
        ids = sorted(per_idiom)
        ax.bar([str(i) for i in ids], [per_idiom[i] for i in ids], color="#76a865")
    ax.set_xlabel("idiom id")
    ax.set_ylabel("uses")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, **_PNG_META)
    plt.close(fig)


def overlap_figure(stats: OverlapStats, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.bar(["total", "kept"], [stats.total_occurrences, stats.kept_by_greedy],
           color=["#999999", "#4878a8"])
    ax.set_ylabel("occurrences")
    ax.set_title(f"Greedy rewrite keeps {stats.kept_by_greedy}/{stats.total_occurrences} "
                 f"(discard rate {stats.discard_rate:.2f})")
    fig.tight_layout()
    fig.savefig(path, **_PNG_META)
    plt.close(fig)


def timing_figure(sizes, seconds, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(sizes, seconds, "o-", color="#4878a8")
    ax.set_xlabel("total corpus nodes")
    ax.set_ylabel("mining wall-clock (s)")
    ax.set_title("Mining time vs corpus size")
    fig.tight_layout()
    fig.savefig(path, **_PNG_META)
    plt.close(fig)


def stats_report(out_dir, overlap: OverlapStats, usage: UsageStats | None,
                 figures: bool = True) -> dict:
    """Write the overlap/usage report: CSV tables, optional PNG figures, and
    return the manifest of written files."""
    os.makedirs(out_dir, exist_ok=True)
    written = {}

    p = os.path.join(out_dir, "overlap.csv")
    write_csv(p, ["total_occurrences", "kept_by_greedy", "discard_rate"],
              [[overlap.total_occurrences, overlap.kept_by_greedy,
                f"{overlap.discard_rate:.6f}"]])
    written["overlap_csv"] = p

    p = os.path.join(out_dir, "greedy_usage.csv")
    write_csv(p, ["idiom_id", "occurrences_kept"],
              [[i, overlap.usage[i]] for i in sorted(overlap.usage)])
    written["greedy_usage_csv"] = p

    if usage is not None:
        p = os.path.join(out_dir, "usage_histogram.csv")
        write_csv(p, ["idioms_per_output", "num_outputs"],
                  [[k, usage.histogram[k]] for k in sorted(usage.histogram)])
        written["usage_histogram_csv"] = p
        p = os.path.join(out_dir, "idiom_uses.csv")
        write_csv(p, ["idiom_id", "uses"],
                  [[i, usage.per_idiom[i]] for i in sorted(usage.per_idiom)])
        written["idiom_uses_csv"] = p

    if figures:
        p = os.path.join(out_dir, "overlap.png")
        overlap_figure(overlap, p)
        written["overlap_png"] = p
        if usage is not None:
            p = os.path.join(out_dir, "usage_histogram.png")
            usage_histogram_figure(usage, p)
            written["usage_histogram_png"] = p
            p = os.path.join(out_dir, "idiom_uses.png")
            idiom_frequency_figure(usage.per_idiom, p)
            written["idiom_uses_png"] = p
    return written
