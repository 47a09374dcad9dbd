"""Structured experiment output.

Delimited text and a flat JSON summary are the data contract: rerunning
an experiment with the same config and seed reproduces them byte for
byte.  Figures are presentation only and sit next to the data files;
nothing downstream reads them back.
"""

from __future__ import annotations

import hashlib
import json
from typing import Dict, Iterable, List, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def config_hash(items: Iterable[Tuple[str, str]]) -> str:
    """Short stable digest of flattened (key, value) config pairs."""
    canon = "\n".join(f"{k}={v}" for k, v in sorted(items))
    return hashlib.sha256(canon.encode()).hexdigest()[:12]


def format_cell(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, columns: Sequence[str], rows: Iterable[Sequence],
              seed: int, chash: str) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(f"# seed={seed}, config_hash={chash}\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(format_cell(v) for v in row) + "\n")


def write_summary(path, mapping: Dict, seed: int, chash: str) -> None:
    """Flat key/value report; non-scalar values are rejected early."""
    out = {"seed": seed, "config_hash": chash}
    for k, v in mapping.items():
        if isinstance(v, (np.floating,)):
            v = float(v)
        elif isinstance(v, (np.integer,)):
            v = int(v)
        elif isinstance(v, (np.bool_, bool)):
            v = bool(v)
        if not isinstance(v, (int, float, str, bool)) and v is not None:
            raise TypeError(f"summary value for {k!r} is not flat: {v!r}")
        out[k] = v
    with open(path, "w", newline="\n") as fh:
        json.dump(out, fh, indent=2, sort_keys=True)
        fh.write("\n")


def fig_histogram(path, values, title: str, xlabel: str,
                  bins: int = 40) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.hist(np.asarray(values, float), bins=bins, color="#4878b0",
            edgecolor="white")
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("count")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def fig_survival(path, ts, surv, title: str, xlabel: str,
                 fit: Dict | None = None) -> None:
    """Semilog survival curve, with the fitted line overlaid when given."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.semilogy(ts, surv, drawstyle="steps-post", color="#4878b0",
                label="observed")
    if fit is not None and "rate" in fit:
        tt = np.linspace(min(ts), max(ts), 100)
        ax.semilogy(tt, np.exp(fit["intercept"] - fit["rate"] * tt),
                    "--", color="#d1605e",
                    label="exp fit (R^2=%.3f)" % fit["r_squared"])
    ax.set_title(title)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("P(value > t)")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def fig_measure_compare(path, mu, mup, title: str) -> None:
    fig, ax = plt.subplots(figsize=(5, 5))
    lo = max(min(mu[mu > 0].min(), mup[mup > 0].min()) * 0.5, 1e-300)
    ax.loglog(np.maximum(mu, lo), np.maximum(mup, lo), ".", ms=3,
              color="#4878b0")
    span = [lo, max(mu.max(), mup.max()) * 1.5]
    ax.loglog(span, span, "-", lw=0.8, color="#999999")
    ax.set_title(title)
    ax.set_xlabel("target mass")
    ax.set_ylabel("one-step image mass")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def fig_distribution_pair(path, labels: List[str], pa, pb,
                          names: Tuple[str, str], title: str,
                          top: int = 30) -> None:
    """Side-by-side bars of the heaviest atoms of two empirical laws."""
    pa = np.asarray(pa, float)
    pb = np.asarray(pb, float)
    order = np.argsort(-(pa + pb))[:top]
    x = np.arange(order.size)
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.bar(x - 0.2, pa[order], width=0.4, label=names[0], color="#4878b0")
    ax.bar(x + 0.2, pb[order], width=0.4, label=names[1], color="#d1605e")
    ax.set_xticks(x)
    ax.set_xticklabels([str(labels[i]) for i in order], rotation=90,
                       fontsize=6)
    ax.set_title(title)
    ax.set_ylabel("frequency")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
