"""SVG rendering of figure data; purely presentational."""

from __future__ import annotations

import io

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

matplotlib.rcParams["svg.hashsalt"] = "trotterscar"


def _to_svg(fig) -> str:
    buf = io.StringIO()
    fig.savefig(buf, format="svg", metadata={"Date": None})
    plt.close(fig)
    return buf.getvalue()


def render_figure(which: str, columns: list[str], rows: np.ndarray, meta: dict) -> str:
    if which == "bloch":
        fig = plt.figure(figsize=(4.5, 4.5))
        ax = fig.add_subplot(projection="3d")
        ax.plot(rows[:, 1], rows[:, 2], rows[:, 3], lw=1.2)
        ax.scatter(*rows[0, 1:4], color="k", s=12)
        u, v = np.mgrid[0 : 2 * np.pi : 30j, 0 : np.pi : 15j]
        ax.plot_wireframe(np.cos(u) * np.sin(v), np.sin(u) * np.sin(v), np.cos(v), color="0.85", lw=0.4)
        ax.set(xlabel=r"$\langle\sigma^x\rangle$", ylabel=r"$\langle\sigma^y\rangle$", zlabel=r"$\langle\sigma^z\rangle$")
        ax.set_title(f"site {meta.get('site')}")
        return _to_svg(fig)

    fig, ax = plt.subplots(figsize=(6, 3.5))
    if which == "overlaps":
        ax.bar(rows[:, 0], rows[:, 1], width=0.03 * max(1.0, np.ptp(rows[:, 0])))
        ax.set(xlabel="$E_n$", ylabel=r"$|c_n|^2$")
        if meta.get("omega"):
            ax.set_title(rf"$\Omega \approx {meta['omega']:.4g}$")
    elif which == "echo":
        for i, name in enumerate(columns[1:], 1):
            ax.plot(rows[:, 0], rows[:, i], label=name.replace("_", " "))
        ax.set(xlabel="$t$", ylabel="Loschmidt echo", ylim=(-0.02, 1.02))
        ax.legend(fontsize=7)
    else:
        for i, name in enumerate(columns[1:], 1):
            y = rows[:, i]
            ok = np.isfinite(y) & (y > 0)
            if ok.any():
                ax.semilogy(rows[ok, 0], y[ok], label=name.replace("_", " "))
        ax.set(xlabel="$t$", ylabel=r"$\|\delta\psi(t)\|$")
        ax.legend(fontsize=7)
    fig.tight_layout()
    return _to_svg(fig)
