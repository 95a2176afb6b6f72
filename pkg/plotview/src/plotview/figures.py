"""Figure builders over harness result files.

This component is read-only over the CSV/JSON results: it displays the
values and fits the harness computed and never re-derives an estimate. All
figures render deterministically (fixed SVG hash salt, no embedded dates),
so identical inputs give byte-identical images.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

RESULT_COLUMNS = [
    "scenario",
    "n",
    "k",
    "beta",
    "mode",
    "t",
    "kind",
    "value",
    "std_error",
    "replicas",
    "seed",
    "wall_time_ms",
]

KINDS = ("profile", "scaling", "hitting")

_STYLE = {
    "svg.hashsalt": "plotview",
    "figure.figsize": (6.0, 4.0),
    "figure.dpi": 100,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 9,
}


@dataclass
class PlotSpec:
    inputs: list
    kind: str
    out: str
    group_keys: tuple = ("k", "beta")

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}; expected one of {KINDS}")
        if not self.inputs:
            raise ValueError("at least one input file is required")


def load_records(paths) -> list[dict]:
    """Read result rows from CSV or JSON files, validating the schema."""
    records = []
    for path in paths:
        path = Path(path)
        if path.suffix == ".json":
            rows = json.load(open(path))
            if rows and set(RESULT_COLUMNS) - set(rows[0]):
                raise ValueError(f"{path}: missing columns {set(RESULT_COLUMNS) - set(rows[0])}")
        else:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                missing = set(RESULT_COLUMNS) - set(reader.fieldnames or [])
                if missing:
                    raise ValueError(f"{path}: missing columns {sorted(missing)}")
                rows = list(reader)
        for row in rows:
            records.append(
                {
                    "scenario": row["scenario"],
                    "n": int(row["n"]),
                    "k": int(row["k"]),
                    "beta": float(row["beta"]),
                    "mode": row["mode"],
                    "t": int(row["t"]),
                    "kind": row["kind"],
                    "value": float(row["value"]),
                    "std_error": float(row["std_error"]),
                    "replicas": int(row["replicas"]),
                    "seed": int(row["seed"]),
                }
            )
    return records


def _save(fig, out_dir: Path, name: str) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / name
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path


def _fmt(x: float) -> str:
    return f"{x:g}"


ESTIMATE_STYLES = {
    "exact_d": {"marker": "o", "linestyle": "-"},
    "tv_lower": {"marker": "v", "linestyle": "--"},
    "coupling_upper": {"marker": "^", "linestyle": ":"},
}


def plot_profiles(spec: PlotSpec) -> list[Path]:
    """One figure per (k, beta): distance estimates against c = t / t_n with
    one curve per n and error bars from the reported standard errors."""
    records = [r for r in load_records(spec.inputs) if r["scenario"] == "cutoff_profile"]
    records = [r for r in records if r["kind"] in ESTIMATE_STYLES]
    if not records:
        raise ValueError("no cutoff-profile rows in the given inputs")
    out = []
    groups = sorted({(r["k"], r["beta"]) for r in records})
    with plt.rc_context(_STYLE):
        for k, beta in groups:
            rows = [r for r in records if r["k"] == k and r["beta"] == beta]
            fig, ax = plt.subplots()
            for n in sorted({r["n"] for r in rows}):
                t_n = n * math.log(n) / (2 * k * (1 - beta))
                for kind in ESTIMATE_STYLES:
                    pts = sorted(
                        [r for r in rows if r["n"] == n and r["kind"] == kind],
                        key=lambda r: r["t"],
                    )
                    if not pts:
                        continue
                    cs = [r["t"] / t_n for r in pts]
                    ys = [r["value"] for r in pts]
                    errs = [r["std_error"] for r in pts]
                    label = f"n={n} {kind.replace('_', ' ')}"
                    ax.errorbar(
                        cs, ys, yerr=errs, label=label, capsize=2, markersize=4,
                        **ESTIMATE_STYLES[kind],
                    )
            ax.set_xlabel(r"c = t / t_n,  t_n = n log n / (2k(1-beta))")
            ax.set_ylabel("distance to stationarity")
            ax.set_title(f"Scan dynamics distance profile, k={k}, beta={_fmt(beta)}")
            ax.legend()
            out.append(_save(fig, Path(spec.out), f"profile_k{k}_beta{_fmt(beta)}.svg"))
    return out


def plot_scaling(spec: PlotSpec) -> tuple[list[Path], dict]:
    """Log-log mixing-time scatter per (scenario, k) plus the harness-fitted
    line; the annotated exponent re-displays the harness fit, it is never
    re-derived here. Returns the output paths and the annotations."""
    records = load_records(spec.inputs)
    tmix = [r for r in records if r["kind"] == "t_mix"]
    if not tmix:
        raise ValueError("no t_mix rows in the given inputs")
    annotations = {}
    out = []
    with plt.rc_context(_STYLE):
        scenarios = sorted({r["scenario"] for r in tmix})
        for scenario in scenarios:
            for k in sorted({r["k"] for r in tmix if r["scenario"] == scenario}):
                pts = sorted(
                    [r for r in tmix if r["scenario"] == scenario and r["k"] == k],
                    key=lambda r: r["n"],
                )
                if len(pts) < 3:
                    raise ValueError(
                        f"scaling figure needs at least 3 sizes, got {len(pts)} "
                        f"for scenario={scenario} k={k}"
                    )
                fit_rows = {
                    r["kind"]: r
                    for r in records
                    if r["scenario"] == scenario and r["k"] == k and r["kind"].startswith("fit_")
                }
                if "fit_exponent_n" not in fit_rows or "fit_intercept_n" not in fit_rows:
                    raise ValueError(
                        "no harness fit rows found; fits are displayed, never re-derived"
                    )
                expo = fit_rows["fit_exponent_n"]["value"]
                expo_se = fit_rows["fit_exponent_n"]["std_error"]
                intercept = fit_rows["fit_intercept_n"]["value"]
                ns = [r["n"] for r in pts]
                ys = [r["value"] for r in pts]
                fig, ax = plt.subplots()
                ax.loglog(ns, ys, "o", label="t_mix(1/4)")
                line_y = [math.exp(intercept) * n**expo for n in ns]
                ax.loglog(ns, line_y, "-", label="harness fit")
                annotation = f"exponent = {expo:.3f} ± {expo_se:.3f}"
                ax.annotate(
                    annotation, xy=(0.05, 0.9), xycoords="axes fraction", fontsize=11
                )
                ax.set_xlabel("n")
                ax.set_ylabel("t_mix(1/4)")
                ax.set_title(f"Mixing-time scaling, {scenario}, k={k}")
                ax.legend()
                path = _save(fig, Path(spec.out), f"scaling_{scenario}_k{k}.svg")
                out.append(path)
                annotations[(scenario, k)] = {
                    "text": annotation,
                    "exponent": expo,
                    "exponent_se": expo_se,
                }
    return out, annotations


def plot_hitting(spec: PlotSpec) -> list[Path]:
    """Hitting-time spread against n: median with a 10-90 percentile band,
    one figure per (k, direction)."""
    records = load_records(spec.inputs)
    tags = ("tau_below", "tau_above")
    rows = [r for r in records if any(r["kind"].startswith(tag) for tag in tags)]
    if not rows:
        raise ValueError("no hitting-time rows in the given inputs")
    out = []
    with plt.rc_context(_STYLE):
        for tag in tags:
            for k in sorted({r["k"] for r in rows}):
                by_stat = {}
                for r in rows:
                    if r["k"] == k and r["kind"].startswith(tag):
                        by_stat.setdefault(r["kind"].removeprefix(tag + "_"), {})[r["n"]] = r
                if "median" not in by_stat:
                    continue
                ns = sorted(by_stat["median"])
                med = [by_stat["median"][n]["value"] for n in ns]
                q10 = [by_stat["q10"][n]["value"] for n in ns] if "q10" in by_stat else None
                q90 = [by_stat["q90"][n]["value"] for n in ns] if "q90" in by_stat else None
                fig, ax = plt.subplots()
                ax.plot(ns, med, "o-", label="median")
                if q10 and q90:
                    ax.fill_between(ns, q10, q90, alpha=0.25, label="10-90 percentile")
                if "mean" in by_stat:
                    means = [by_stat["mean"][n]["value"] for n in ns]
                    errs = [by_stat["mean"][n]["std_error"] for n in ns]
                    ax.errorbar(ns, means, yerr=errs, fmt="s--", label="mean", capsize=2)
                ax.set_xlabel("n")
                ax.set_ylabel("hitting time (steps)")
                direction = "down to" if tag == "tau_above" else "up to"
                ax.set_title(f"First passage {direction} the magnetization plateau, k={k}")
                ax.legend()
                out.append(_save(fig, Path(spec.out), f"hitting_{tag}_k{k}.svg"))
    if not out:
        raise ValueError("hitting-time rows carry no median column")
    return out


def render(spec: PlotSpec):
    if spec.kind == "profile":
        return plot_profiles(spec)
    if spec.kind == "scaling":
        return plot_scaling(spec)[0]
    return plot_hitting(spec)
