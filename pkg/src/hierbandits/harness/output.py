"""CSV and SVG writers for regret traces, bound reports and concurrency sweeps."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

REGRET_COLUMNS = ("round", "agent", "mean_instant_regret", "mean_cum_regret", "stderr_cum_regret", "bound_value")
BOUND_COLUMNS = ("agent", "regime", "c", "c_q", "c1", "c2", "c3", "c4", "sigma_max", "bound")
SWEEP_COLUMNS = ("L", "rounds", "agent", "final_mean_cum_regret", "final_stderr_cum_regret")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write(path, header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def emit_csv(trace, path) -> Path:
    """One row per (round, agent); rounds are numbered from 1."""
    rows = []
    per_agent = {a: (trace.mean_instant(a), trace.mean_cum(a), trace.stderr_cum(a)) for a in trace.agents} \
        if trace.rounds else {}
    for t in range(trace.rounds):
        for a in trace.agents:
            inst, cum, se = per_agent[a]
            rows.append((t + 1, a, inst[t], cum[t], se[t], trace.bound_values.get(a)))
    _write(path, REGRET_COLUMNS, rows)
    return Path(path)


def read_regret_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        out = []
        for row in csv.DictReader(fh):
            rec = {"round": int(row["round"]), "agent": row["agent"]}
            for key in REGRET_COLUMNS[2:]:
                rec[key] = float(row[key]) if row[key] != "" else None
            out.append(rec)
        return out


def emit_bounds_csv(bounds: dict, path) -> Path:
    _write(path, BOUND_COLUMNS, [(a, *rep.as_row().values()) for a, rep in bounds.items()])
    return Path(path)


def emit_sweep_csv(rows, path) -> Path:
    _write(path, SWEEP_COLUMNS, [(r.L, r.rounds, r.agent, r.final_mean, r.final_stderr) for r in rows])
    return Path(path)


def emit_plot(trace, path) -> Path:
    """Cumulative regret with a one-standard-error band per agent, as SVG."""
    if trace.rounds == 0:
        raise ValueError("cannot plot an empty trace")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "hierbandits", "svg.fonttype": "none"}):
        fig, ax = plt.subplots(figsize=(5, 3.5))
        x = np.arange(1, trace.rounds + 1)
        for a in trace.agents:
            mean, se = trace.mean_cum(a), trace.stderr_cum(a)
            line, = ax.plot(x, mean, label=a, gid=f"series-{a}", marker="o" if trace.rounds == 1 else None)
            ax.fill_between(x, mean - se, mean + se, alpha=0.25, color=line.get_color(), gid=f"band-{a}")
        ax.set_xlabel("round")
        ax.set_ylabel("cumulative regret")
        ax.legend(loc="upper left")
        fig.tight_layout()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
    return Path(path)
