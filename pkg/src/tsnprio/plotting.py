"""Static SVG figures from benchmark output."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# fixed ids and no timestamp so reruns produce identical files
matplotlib.rcParams["svg.hashsalt"] = "tsnprio"
_META = {"Date": None, "Creator": "tsnprio"}


def _series(rows, value):
    """``{topology: {algorithm: [(n_flows, mean)]}}``."""
    acc = {}
    for r in rows:
        v = r.get(value)
        if r.get("error") or v in ("", None):
            continue
        key = (r["topology"], r["algorithm"], int(r["n_flows"]))
        s = acc.setdefault(key, [0, 0.0])
        s[0] += 1
        s[1] += float(v)
    out = {}
    for (kind, algo, n), (cnt, tot) in sorted(acc.items()):
        out.setdefault(kind, {}).setdefault(algo, []).append((n, tot / cnt))
    return out


def _figure(series, ylabel, path, log=False):
    kinds = sorted(series)
    fig, axes = plt.subplots(1, max(len(kinds), 1), figsize=(4 * max(len(kinds), 1), 3.2), squeeze=False)
    for ax, kind in zip(axes[0], kinds):
        for algo, pts in sorted(series[kind].items()):
            xs, ys = zip(*pts)
            ax.plot(xs, ys, marker="o", label=algo)
        ax.set_title(kind)
        ax.set_xlabel("flows")
        ax.set_ylabel(ylabel)
        if log:
            ax.set_yscale("log")
        ax.grid(alpha=0.3)
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def plot_all(rows, timing, out_dir):
    """Write success-rate, utilisation and time-cost figures; return their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = [
        _figure(_series(rows, "success_rate"), "mean success rate", os.path.join(out_dir, "success_rate.svg")),
        _figure(_series(rows, "nominal_utilization"), "nominal utilization",
                os.path.join(out_dir, "nominal_utilization.svg")),
    ]
    if timing:
        paths.append(_figure(_series(timing, "wall_time_ms"), "time cost (ms)",
                             os.path.join(out_dir, "time_cost.svg"), log=True))
    return paths
