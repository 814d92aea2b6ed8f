"""PNG renderings of the curve and sweep outputs (matplotlib, imported lazily)."""

from __future__ import annotations

import math

STYLE = {
    "b_jbb_prime": dict(color="black", ls="-", label="B target, JBB'"),
    "o_jbb_prime": dict(color="red", ls="-", label="O target, JBB'"),
    "o_oa": dict(color="blue", ls="-", label="O target, OA"),
    "o_jbb_prime_bound": dict(color="red", ls="--", label="O target, JBB' (bound)"),
    "o_oa_bound": dict(color="blue", ls="--", label="O target, OA (bound)"),
}


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _db(x):
    return 10.0 * math.log10(x)


def plot_curves(curves: dict, intersections: dict, path, title: str = "") -> None:
    """Total power against power ratio, one line per curve, markers at crossings."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for name, pts in curves.items():
        pts = [p for p in pts if p.feasible]
        if not pts:
            continue
        ax.plot([_db(p.ratio) for p in pts], [_db(p.rho_d) for p in pts], **STYLE.get(name, {"label": name}))
    for label, x in intersections.items():
        ax.plot([_db(x.ratio)], [_db(x.rho_d)], "o", color="gray")
        ax.annotate(label, (_db(x.ratio), _db(x.rho_d)), textcoords="offset points", xytext=(4, -12), fontsize=8)
    ax.set_xlabel("rho_o / rho_b [dB]")
    ax.set_ylabel("rho_d [dB]")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_sweep(rows, path, title: str = "") -> None:
    """Required B power against uplink SNR, one line per broadcast power."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    by_rho_o = {}
    for r in rows:
        by_rho_o.setdefault(r.rho_o, []).append(r)
    for rho_o, rs in sorted(by_rho_o.items()):
        rs = [r for r in rs if r.feasible]
        label = "rho_o = -inf dB" if rho_o == 0 else f"rho_o = {_db(rho_o):.1f} dB"
        ax.plot([_db(r.rho_u) for r in rs], [_db(r.rho_b) for r in rs], marker="o", label=label)
    ax.set_xlabel("rho_u [dB]")
    ax.set_ylabel("required rho_b [dB]")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
