"""Summaries of a run directory: best-so-far curve, trial table, headline numbers."""
import csv
import json
from collections import Counter
from pathlib import Path

from .journal import Journal

TRIAL_COLUMNS = ("trial", "config", "budget", "status", "loss", "iterations_run",
                 "t_submit", "t_start", "t_finish", "worker", "bracket", "stage", "slot")


def full_budget(results, b_max=None):
    """Completed trials at the top budget, in finish order."""
    done = [r for r in results if r["status"] == "completed"]
    if not done:
        return []
    b_max = b_max or max(r["budget"] for r in done)
    rows = [r for r in done if r["budget"] == b_max]
    return sorted(rows, key=lambda r: (r["t_finish"], r["trial"]))


def best_so_far(rows):
    """Running minimum of the loss over ``rows`` (already in finish order)."""
    out, best = [], float("inf")
    for r in rows:
        best = min(best, r["loss"])
        out.append((r["t_finish"], r["trial"], r["loss"], best))
    return out


def summarize(results, b_max=None):
    rows = full_budget(results, b_max)
    losses = [r["loss"] for r in rows]
    elapsed = max((r["t_finish"] or 0.0 for r in results), default=0.0)
    best = min(rows, key=lambda r: r["loss"]) if rows else None
    return {
        "trials": len(results),
        "full_budget_trials": len(rows),
        "high_l1": max(losses) if losses else 0.0,
        "low_l1": min(losses) if losses else 0.0,
        "first_l1": losses[0] if losses else 0.0,
        "elapsed_minutes": elapsed,
        "elapsed_hours": elapsed / 60.0,
        "status_counts": dict(Counter(r["status"] for r in results)),
        "best_trial": best["trial"] if best else None,
        "best_config": best["config"] if best else None,
    }


def report(run_dir, out_dir=None):
    """Write ``best_curve.csv``, ``trials.csv`` and ``summary.json``; return the summary."""
    run_dir = Path(run_dir)
    out_dir = Path(out_dir) if out_dir else run_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    journal = Journal(run_dir, fsync=False)
    configs, results = journal.load()
    meta = journal.read_meta() or {}
    b_max = meta.get("config", {}).get("b_max")
    summary = summarize(results, b_max)
    if summary["best_config"] is not None:
        summary["best_values"] = configs[summary["best_config"]]["values"]
    with open(out_dir / "best_curve.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_minutes", "trial", "loss", "best_loss"])
        for row in best_so_far(full_budget(results, b_max)):
            w.writerow(row)
    with open(out_dir / "trials.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=TRIAL_COLUMNS, extrasaction="ignore")
        w.writeheader()
        for r in results:
            w.writerow(r)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    return summary
