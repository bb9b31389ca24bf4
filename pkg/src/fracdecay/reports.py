"""Report emission: delimited series, schema-versioned JSON summaries, and
static log-log figures rendered to SVG files alongside the CSV output."""

import csv
import hashlib
import json
from importlib import resources
from pathlib import Path

import numpy as np

SCHEMA_VERSION = "1.0"

__all__ = ["config_hash", "emit_report", "load_schema", "aggregate_reports"]


def _canonical(obj):
    if isinstance(obj, dict):
        return {str(k): _canonical(v) for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))}
    if isinstance(obj, (list, tuple)):
        return [_canonical(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return [_canonical(v) for v in obj.tolist()]
    if isinstance(obj, float) and (np.isnan(obj) or np.isinf(obj)):
        return repr(obj)
    return obj


def config_hash(config):
    """Stable sha256 of the canonicalized configuration."""
    blob = json.dumps(_canonical(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_schema():
    with resources.files("fracdecay").joinpath("schemas/summary.schema.json").open() as fh:
        return json.load(fh)


def _jsonable(obj):
    out = _canonical(obj)
    return out


def emit_report(outdir, experiment, rows, summary, plot=True, plot_fit=None,
                inconclusive_if_empty=False):
    """Write series.csv, summary.json and plot.svg for one run.

    `rows` is a list of (parameter, norm, error_estimate, wall_time_s); for
    series experiments an empty list yields a header-only CSV and an
    inconclusive summary.  The JSON is validated against the shipped schema
    before writing.
    """
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        probe = outdir / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise PermissionError(f"output directory {outdir} is not writable: {exc}")

    csv_path = outdir / f"{experiment}_series.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["parameter", "norm", "error_estimate", "wall_time_s"])
        for row in rows:
            writer.writerow([_fmt(row[0]), _fmt(row[1]), _fmt(row[2]), _fmt(row[3])])

    doc = {
        "schema_version": SCHEMA_VERSION,
        "experiment": experiment,
        "inconclusive": bool(summary.get("inconclusive",
                                         inconclusive_if_empty and not rows)),
        "versions": _versions(),
    }
    doc.update({k: _jsonable(v) for k, v in summary.items()})
    import jsonschema
    jsonschema.validate(doc, load_schema())
    json_path = outdir / f"{experiment}_summary.json"
    with open(json_path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")

    svg_path = None
    if plot and rows:
        svg_path = outdir / f"{experiment}_plot.svg"
        _render_loglog(svg_path, experiment, rows, plot_fit)
    return {"csv": csv_path, "json": json_path, "svg": svg_path}


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.12g}"
    return x


def _versions():
    import numpy
    import scipy
    from . import __version__
    return {"fracdecay": __version__, "numpy": numpy.__version__, "scipy": scipy.__version__}


def _render_loglog(path, title, rows, fit):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xs = np.array([float(r[0]) for r in rows])
    ys = np.array([float(r[1]) for r in rows])
    fig, ax = plt.subplots(figsize=(5.0, 3.4))
    pos = ys > 0
    ax.loglog(xs[pos], ys[pos], "o", ms=4, label="measured")
    if fit is not None and np.count_nonzero(pos) >= 2:
        xx = np.geomspace(xs[pos].min(), xs[pos].max(), 64)
        ax.loglog(xx, np.exp(fit.intercept) * xx ** fit.exponent, "-",
                  lw=1, label=f"slope {fit.exponent:+.3f}")
    ax.set_xlabel("parameter")
    ax.set_ylabel("norm")
    ax.set_title(title)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def aggregate_reports(paths):
    """Collect summary.json files into one pass/fail table."""
    table = []
    all_ok = True
    for p in paths:
        with open(p) as fh:
            doc = json.load(fh)
        certs = doc.get("certificates", {}) or {}
        ok = all(bool(v) for v in certs.values()) and not doc.get("inconclusive", False)
        all_ok = all_ok and ok
        table.append({
            "experiment": doc.get("experiment", "?"),
            "config_hash": doc.get("config_hash", ""),
            "pass": ok,
            "certificates": certs,
            "path": str(p),
        })
    return {"all_pass": all_ok, "runs": table}
