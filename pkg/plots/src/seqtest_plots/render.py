"""Render figure analogues from seqtest CSV outputs.

Two input schemas:

* mu-sweep CSVs (fig1a/b, fig2a-d): columns family,K,mu,ess[,se_ess];
  one line series per family (fig1) or per K (fig2); a nonempty se_ess
  column adds a +/-3 SE band.
* signal-recovery sweep CSVs (fig3a/b, fig4a/b, fig5a/b): columns
  u,u_over_m,family,K,alpha_stream,beta_stream,ess_mixture,max_stages;
  fig3 plots max_stages and fig4/fig5 plot ess_mixture against u/m, one
  series per family.  The "b" variants crop to the left 1% of the u/m axis.

Same CSV + checked-in style = pixel-identical output.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_STYLE = Path(__file__).with_name("style.mplstyle")

FIGURE_IDS = ("fig1a", "fig1b", "fig2a", "fig2b", "fig2c", "fig2d",
              "fig3a", "fig3b", "fig4a", "fig4b", "fig5a", "fig5b")

_MU_COLUMNS = {"family", "K", "mu", "ess"}
_HD_COLUMNS = {"u", "u_over_m", "family", "K", "alpha_stream", "beta_stream",
               "ess_mixture", "max_stages"}


class SchemaError(ValueError):
    """Input CSV does not carry the columns the figure needs."""


@dataclass(frozen=True)
class FigureSpec:
    figure_id: str
    inputs: tuple[str, ...]
    out: str
    x_range: Optional[tuple[float, float]] = None
    y_range: Optional[tuple[float, float]] = None

    def __post_init__(self) -> None:
        if self.figure_id not in FIGURE_IDS:
            raise ValueError(f"unknown figure id {self.figure_id!r}; "
                             f"choose from {FIGURE_IDS}")
        if not self.inputs:
            raise ValueError("at least one input CSV is required")


@dataclass(frozen=True)
class RenderResult:
    figure_id: str
    out: str
    series: tuple[str, ...]
    x_limits: tuple[float, float]


def _read_rows(path: str, required: set[str]) -> list[dict]:
    try:
        with open(path, newline="") as f:
            reader = csv.DictReader(f)
            columns = set(reader.fieldnames or ())
            missing = required - columns
            if missing:
                raise SchemaError(
                    f"{path}: missing columns {sorted(missing)} "
                    f"(found {sorted(columns)})")
            return list(reader)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}")


def _series_sorted(rows: list[dict], key) -> list:
    return sorted({key(r) for r in rows})


def _plot_mu_sweep(ax, rows: list[dict], by_k: bool) -> list[str]:
    labels = []
    if by_k:
        keys = _series_sorted(rows, lambda r: int(r["K"]))
        pick = lambda r, k: int(r["K"]) == k
        label = lambda k: f"K={k}"
    else:
        keys = _series_sorted(rows, lambda r: r["family"])
        pick = lambda r, k: r["family"] == k
        label = lambda k: str(k)
    for k in keys:
        pts = sorted((float(r["mu"]), float(r["ess"]),
                      float(r["se_ess"]) if r.get("se_ess") else None)
                     for r in rows if pick(r, k))
        mu = [p[0] for p in pts]
        ess = [p[1] for p in pts]
        ax.plot(mu, ess, label=label(k))
        ses = [p[2] for p in pts]
        if all(s is not None for s in ses):
            lo = [e - 3 * s for e, s in zip(ess, ses)]
            hi = [e + 3 * s for e, s in zip(ess, ses)]
            ax.fill_between(mu, lo, hi, alpha=0.25, linewidth=0)
        labels.append(label(k))
    ax.set_xlabel("true mean")
    ax.set_ylabel("expected sample size")
    return labels


def _plot_highdim(ax, rows: list[dict], y_col: str) -> list[str]:
    labels = []
    for family in _series_sorted(rows, lambda r: r["family"]):
        pts = sorted((float(r["u_over_m"]), float(r[y_col]))
                     for r in rows if r["family"] == family)
        ax.plot([p[0] for p in pts], [p[1] for p in pts],
                label=family, drawstyle="steps-post" if y_col == "max_stages" else "default")
        labels.append(family)
    ax.set_xlabel("u / m")
    ax.set_ylabel("maximum number of stages" if y_col == "max_stages"
                  else "expected average sample size")
    return labels


def render(spec: FigureSpec) -> RenderResult:
    """Write the figure image; returns the series labels and x-limits drawn."""
    fid = spec.figure_id
    with plt.style.context(str(_STYLE)):
        fig, ax = plt.subplots()
        rows: list[dict] = []
        if fid.startswith(("fig1", "fig2")):
            for path in spec.inputs:
                rows.extend(_read_rows(path, _MU_COLUMNS))
            labels = _plot_mu_sweep(ax, rows, by_k=fid.startswith("fig2"))
        else:
            for path in spec.inputs:
                rows.extend(_read_rows(path, _HD_COLUMNS))
            y_col = "max_stages" if fid.startswith("fig3") else "ess_mixture"
            if fid.startswith("fig3"):
                rows = [r for r in rows if r["family"] in ("gmt", "st", "mod-st")]
            labels = _plot_highdim(ax, rows, y_col)
            if fid in ("fig4b", "fig5b"):
                # left 1% of the u/m axis
                ax.set_xlim(0.0, 0.01)
        if spec.x_range is not None:
            ax.set_xlim(*spec.x_range)
        if spec.y_range is not None:
            ax.set_ylim(*spec.y_range)
        ax.legend()
        fig.tight_layout()
        try:
            fig.savefig(spec.out)
        except OSError as exc:
            plt.close(fig)
            raise SchemaError(f"cannot write {spec.out}: {exc}")
        xlim = ax.get_xlim()
        plt.close(fig)
    return RenderResult(fid, spec.out, tuple(labels), (float(xlim[0]), float(xlim[1])))


def _parse_range(text: str) -> tuple[float, float]:
    lo, hi = (float(x) for x in text.split(":"))
    return lo, hi


def main(argv: Optional[Sequence[str]] = None) -> int:
    p = argparse.ArgumentParser(
        prog="seqtest-render",
        description="Render a figure from seqtest CSV output.")
    p.add_argument("--fig", required=True, choices=FIGURE_IDS)
    p.add_argument("--in", dest="inputs", action="append", required=True,
                   help="input CSV (repeatable)")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--x-range", type=_parse_range, default=None, metavar="LO:HI")
    p.add_argument("--y-range", type=_parse_range, default=None, metavar="LO:HI")
    args = p.parse_args(argv)
    try:
        spec = FigureSpec(args.fig, tuple(args.inputs), args.out,
                          x_range=args.x_range, y_range=args.y_range)
        result = render(spec)
    except (SchemaError, ValueError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    sys.stderr.write(f"# wrote {result.out} ({len(result.series)} series)\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
