"""Tables, plots and the best-cell summary for a finished grid."""
from __future__ import annotations

import csv
from pathlib import Path

from .experiment import SOFTMAX, Cell, ResultGrid

METRICS = (("accuracy", "A"), ("precision_macro", "P"), ("recall_macro", "R"), ("f1_macro", "F1"))


def pct(x: float) -> str:
    return f"{100.0 * x:.1f}"


def _ordered(values) -> list:
    return list(dict.fromkeys(values))


def best_cell(grid: ResultGrid) -> Cell | None:
    """Highest accuracy; ties go to higher macro-F1, then the lexicographically smaller model name."""
    ok = [c for c in grid if c.ok]
    if not ok:
        return None
    return min(ok, key=lambda c: (-c.evaluation.metrics.accuracy, -c.evaluation.metrics.f1_macro,
                                  c.display_name, c.backbone))


def _scores(metrics: dict | None) -> list[str]:
    return [pct(metrics[k]) if metrics else "" for k, _ in METRICS]


def _write(rows: list[list[str]], header: list[str], stem: Path, title: str) -> None:
    with open(stem.with_suffix(".csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    lines = [f"**{title}**", "", "| " + " | ".join(header) + " |", "|" + "---|" * len(header)]
    lines += ["| " + " | ".join(v if v else "n/a" for v in r) + " |" for r in rows]
    stem.with_suffix(".md").write_text("\n".join(lines) + "\n")


def _metrics(cell: Cell | None) -> dict | None:
    return cell.evaluation.metrics.to_json() if cell is not None and cell.ok else None


def write_table1(grid: ResultGrid, out: Path) -> None:
    cells = [c for c in grid if c.methodology == "softmax"]
    header = ["Backbone"] + [k for _, k in METRICS]
    rows = [[c.backbone] + _scores(_metrics(c)) for c in cells]
    _write(rows, header, out / "table1", "Direct softmax classification, held-out test split (%)")

    # the same softmax models scored on the dataset's own test and val folders
    header = ["Backbone", "Split", "n", "Overlaps training"] + [k for _, k in METRICS]
    rows = []
    for c in cells:
        for name, ev in sorted(c.extra_evaluations.items()):
            rows.append([c.backbone, name, str(ev["n"]), "yes" if ev["overlaps_training"] else "no"]
                        + _scores(ev["metrics"]))
    _write(rows, header, out / "table1_declared", "Direct softmax classification, declared splits (%)")


def write_grid_table(grid: ResultGrid, methodology: str, stem: Path, title: str) -> None:
    cells = [c for c in grid if c.methodology == methodology]
    backbones = _ordered(c.backbone for c in grid)
    models = _ordered(c.display_name for c in cells)
    lookup = {(c.backbone, c.display_name): c for c in cells}
    header = ["Classifier"] + [f"{b} {k}" for b in backbones for _, k in METRICS]
    rows = [[m] + [v for b in backbones for v in _scores(_metrics(lookup.get((b, m))))] for m in models]
    _write(rows, header, stem, title)


def write_flat_metrics(grid: ResultGrid, out: Path) -> None:
    with open(out / "metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["backbone", "model", "methodology", "seed", "wall_time", "error", "accuracy",
                    "precision_macro", "recall_macro", "f1_macro", "f1_weighted", "f1_micro", "macro_auc"])
        for c in grid:
            m = _metrics(c)
            auc = c.evaluation.roc.macro_auc if c.ok and c.evaluation.roc is not None else ""
            w.writerow([c.backbone, c.model_name, c.methodology, c.seed, c.wall_time, c.error or ""]
                       + ([f"{m[k]:.3f}" for k in ("accuracy", "precision_macro", "recall_macro",
                                                   "f1_macro", "f1_weighted", "f1_micro")]
                          if m else [""] * 6)
                       + [f"{auc:.3f}" if auc != "" else ""])


def summary_line(grid: ResultGrid) -> str:
    best = best_cell(grid)
    if best is None:
        return "No cell produced results."
    m = best.evaluation.metrics
    return (f"Best cell: {best.display_name} on {best.backbone} features, accuracy {pct(m.accuracy)}% "
            f"(macro F1 {pct(m.f1_macro)}%)")


def emit_report(grid: ResultGrid, out_dir: str | Path, plots: bool = True) -> Path:
    if not len(grid):
        raise ValueError("cannot report an empty grid")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_table1(grid, out)
    write_grid_table(grid, "ml", out / "table2", "Classical classifiers on backbone features (%)")
    write_grid_table(grid, "fnn", out / "table3", "Feedforward networks on backbone features (%)")
    write_flat_metrics(grid, out)

    errors = [c for c in grid if not c.ok]
    lines = [summary_line(grid), f"{len(grid)} cells, {len(errors)} failed."]
    lines += [f"  failed: {c.backbone}/{c.model_name}: {c.error}" for c in errors]
    (out / "summary.txt").write_text("\n".join(lines) + "\n")

    if plots:
        from .plots import plot_confusion, plot_roc

        fig_dir = out / "figures"
        fig_dir.mkdir(exist_ok=True)
        for c in grid:
            if not c.ok:
                continue
            stem = f"{c.backbone}__{c.display_name}"
            title = f"{c.display_name} ({c.backbone})" if c.model_name != SOFTMAX else f"{c.backbone} softmax"
            plot_confusion(c.evaluation.confusion, fig_dir / f"{stem}_confusion.png", title)
            if c.evaluation.roc is not None:
                plot_roc(c.evaluation.roc, fig_dir / f"{stem}_roc.png", title)
    return out
