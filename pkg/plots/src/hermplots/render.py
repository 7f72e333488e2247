"""Static figures from hermlab run outputs.

Each entry point takes --in (one or more data files), --out (image path) and
--manifest (the run's manifest.json); the manifest's config hash is embedded
in every figure's caption. Rendering never mutates inputs; re-rendering
identical inputs reproduces the figure up to image-library metadata.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import dataclass, field

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

SUPPORTED_SCHEMAS = {
    "trajectory.csv": {1},
    "snapshot.csv": {1},
    "limit_snapshot.csv": {1},
    "convergence.csv": {1},
    "contact.csv": {1},
    "certificates.json": {1},
    "decay.json": {1},
}

EXPECTED_HEADERS = {
    "trajectory.csv": ["t", "max_velocity", "sup_rho_over_V", "slab_energy", "dt"],
    "contact.csv": ["t", "x", "y", "in_E", "in_E_plus"],
    "convergence.csv": ["level", "radius", "sup_rho_over_V", "energy_L1",
                        "interlevel_sup_diff", "barrier_C"],
}

PLOT_KINDS = ("decay-fit", "profile-vs-barrier", "monitor-series",
              "contact-heatmap", "slack-table")


class RenderError(ValueError):
    pass


@dataclass
class PlotSpec:
    kind: str
    inputs: list
    manifest: str
    out: str
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PLOT_KINDS:
            raise RenderError(f"unknown plot kind {self.kind!r}")


def _load_manifest(path: str) -> dict:
    try:
        with open(path) as fh:
            man = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise RenderError(f"cannot read manifest {path}: {exc}") from None
    for key in ("config_hash", "schema_versions"):
        if key not in man:
            raise RenderError(f"manifest missing {key!r}")
    return man


def _check_schema(man: dict, path: str):
    base = os.path.basename(path)
    declared = man["schema_versions"].get(base)
    sup = SUPPORTED_SCHEMAS.get(base)
    if sup is None:
        raise RenderError(f"unsupported input file {base!r}")
    if declared is not None and declared not in sup:
        raise RenderError(f"schema version {declared} of {base} unsupported")


def _read_csv(path: str, expect_header=None) -> dict:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise RenderError(f"cannot read {path}: {exc}") from None
    if not rows:
        raise RenderError(f"{path}: empty file")
    header = rows[0]
    if expect_header and header != expect_header:
        raise RenderError(f"{path}: header {header} does not match the "
                          f"schema {expect_header}")
    body = rows[1:]
    if not body:
        raise RenderError(f"{path}: empty series")
    cols = {}
    for j, name in enumerate(header):
        raw = [r[j] for r in body]
        if name.startswith("in_"):
            cols[name] = np.array([v == "true" for v in raw])
        else:
            cols[name] = np.array([float(v) for v in raw])
    return cols


def _caption(fig, man: dict, extra: str = "") -> str:
    text = f"config {man['config_hash'][:16]}"
    if extra:
        text += f"  |  {extra}"
    fig.text(0.01, 0.01, text, fontsize=7, color="0.35", family="monospace")
    return text


def _finish(fig, spec: PlotSpec, caption: str) -> dict:
    os.makedirs(os.path.dirname(os.path.abspath(spec.out)), exist_ok=True)
    fig.savefig(spec.out, dpi=120)
    plt.close(fig)
    return {"out": spec.out, "kind": spec.kind, "caption": caption}


# -- renderers -----------------------------------------------------------------

def _render_decay(spec: PlotSpec, man: dict) -> dict:
    traj_path = next(p for p in spec.inputs if p.endswith("trajectory.csv"))
    decay_path = next((p for p in spec.inputs if p.endswith("decay.json")), None)
    _check_schema(man, traj_path)
    cols = _read_csv(traj_path, EXPECTED_HEADERS["trajectory.csv"])
    t = cols["t"]
    v = cols["max_velocity"]
    pos = (t > 0) & (v > 0)
    if not pos.any():
        raise RenderError("no positive velocity samples to fit against")
    fitted = analytic = None
    if decay_path:
        _check_schema(man, decay_path)
        with open(decay_path) as fh:
            dj = json.load(fh)
        fitted = (dj.get("fit") or {}).get("exponent")
        analytic = dj.get("analytic_exponent")
    if analytic is None:
        analytic = man.get("monitors", {}).get("analytic_exponent")
    fig, ax = plt.subplots(figsize=(6, 4.2))
    ax.loglog(t[pos], v[pos], "o-", ms=3, lw=1, label="max velocity")
    t_ref = np.array([t[pos][0], t[pos][-1]])
    if fitted is not None:
        c = v[pos][-1] * (t_ref / t[pos][-1]) ** (-fitted)
        ax.loglog(t_ref, c, "--", label=f"fitted exponent {fitted:.3f}")
    if analytic is not None:
        c = v[pos][-1] * (t_ref / t[pos][-1]) ** (-analytic)
        ax.loglog(t_ref, c, ":", label=f"analytic exponent {analytic:.3f}")
    ax.set_xlabel("t")
    ax.set_ylabel("max |du/dt|")
    ax.set_title("velocity decay")
    ax.legend(fontsize=8)
    extra = ""
    if fitted is not None and analytic is not None:
        extra = f"fitted {fitted:.3f} vs analytic {analytic:.3f}"
    cap = _caption(fig, man, extra)
    out = _finish(fig, spec, cap)
    out["fitted_exponent"] = fitted
    out["analytic_exponent"] = analytic
    return out


def _barrier_curve(record: dict, coord: np.ndarray):
    """Display curve of a certified barrier from its JSON record."""
    bid = record["barrier_id"]
    p = record["params"]
    if bid == "power":
        return (1 + coord ** 2) ** (-p["alpha"])
    if bid == "log":
        return np.log(p["A"] + coord ** 2) ** (-p["alpha"])
    if bid == "poincare":
        return (p["A"] + 2 * np.arctanh(np.clip(coord, 0, 1 - 1e-12))) ** (-p["mu_prime"])
    if bid in ("two-ends", "two-ends-weak"):
        d = p["delta"]
        return ((1 - np.abs(coord)) ** (-d)) ** (-p["mu_prime"])
    raise RenderError(f"no display curve for barrier {bid!r}")


def _render_profile(spec: PlotSpec, man: dict) -> dict:
    snap_path = next(p for p in spec.inputs
                     if p.endswith("snapshot.csv") or p.endswith("limit_snapshot.csv"))
    _check_schema(man, snap_path)
    cols = _read_csv(snap_path)
    coord = cols["coord"]
    comps = [k for k in cols if k.startswith("u")]
    if not comps:
        raise RenderError("snapshot has no map components")
    fig, ax = plt.subplots(figsize=(6, 4.2))
    for k in sorted(comps):
        ax.plot(coord, cols[k], lw=1.2, label=k)
    cert_path = next((p for p in spec.inputs if p.endswith("certificates.json")), None)
    if cert_path:
        _check_schema(man, cert_path)
        with open(cert_path) as fh:
            certs = json.load(fh)
        rec = certs[0] if isinstance(certs, list) else certs
        try:
            curve = _barrier_curve(rec, np.abs(coord))
            scale = np.nanmax(np.abs([cols[k] for k in comps])) or 1.0
            curve = curve / max(np.nanmax(curve), 1e-300) * scale
            ax.plot(coord, curve, "--", color="0.4",
                    label=f"{rec['barrier_id']} barrier (scaled)")
        except RenderError:
            pass
    ax.set_xlabel("coordinate")
    ax.set_ylabel("value")
    ax.set_title("profile vs barrier")
    ax.legend(fontsize=8)
    cap = _caption(fig, man)
    return _finish(fig, spec, cap)


def _render_monitors(spec: PlotSpec, man: dict) -> dict:
    traj_path = next(p for p in spec.inputs if p.endswith("trajectory.csv"))
    _check_schema(man, traj_path)
    cols = _read_csv(traj_path, EXPECTED_HEADERS["trajectory.csv"])
    fig, axes = plt.subplots(2, 1, figsize=(6, 5.6), sharex=True)
    axes[0].plot(cols["t"], cols["max_velocity"], lw=1.2)
    ceiling = man.get("monitors", {}).get("ceiling")
    if ceiling is not None:
        axes[0].axhline(ceiling, color="crimson", ls="--", lw=1,
                        label=f"initial tension ceiling {ceiling:.4g}")
        axes[0].legend(fontsize=8)
    axes[0].set_ylabel("max |du/dt|")
    axes[1].plot(cols["t"], cols["sup_rho_over_V"], lw=1.2, color="darkgreen")
    axes[1].axhline(1.0, color="0.5", ls=":", lw=1)
    axes[1].set_ylabel("sup rho/V")
    axes[1].set_xlabel("t")
    fig.suptitle("flow monitors")
    cap = _caption(fig, man, f"ceiling={ceiling}" if ceiling is not None else "")
    return _finish(fig, spec, cap)


def _render_contact(spec: PlotSpec, man: dict) -> dict:
    path = next(p for p in spec.inputs if p.endswith("contact.csv"))
    _check_schema(man, path)
    cols = _read_csv(path, EXPECTED_HEADERS["contact.csv"])
    ts = np.unique(cols["t"])
    xs = np.unique(cols["x"])
    ys = np.unique(cols["y"])
    nt, nx, ny = len(ts), len(xs), len(ys)
    mask = np.zeros((nt, nx, ny))
    lookup = {tv: i for i, tv in enumerate(ts)}
    for t, x, y, e, ep in zip(cols["t"], cols["x"], cols["y"],
                              cols["in_E"], cols["in_E_plus"]):
        i = lookup[t]
        j = int(np.argmin(np.abs(xs - x)))
        k = int(np.argmin(np.abs(ys - y)))
        mask[i, j, k] = 2.0 if ep else (1.0 if e else 0.0)
    ncol = min(nt, 4)
    nrow = (nt + ncol - 1) // ncol
    fig, axes = plt.subplots(nrow, ncol, figsize=(2.2 * ncol, 2.2 * nrow),
                             squeeze=False)
    for i in range(nrow * ncol):
        ax = axes[i // ncol][i % ncol]
        if i < nt:
            ax.imshow(mask[i].T, origin="lower", vmin=0, vmax=2,
                      extent=(xs[0], xs[-1], ys[0], ys[-1]), cmap="viridis")
            ax.set_title(f"t={ts[i]:.2f}", fontsize=8)
        ax.set_xticks([])
        ax.set_yticks([])
    fig.suptitle("upper contact set (1 = E, 2 = E+)")
    cap = _caption(fig, man)
    return _finish(fig, spec, cap)


def _render_slack(spec: PlotSpec, man: dict) -> dict:
    path = next(p for p in spec.inputs if p.endswith("certificates.json"))
    _check_schema(man, path)
    with open(path) as fh:
        certs = json.load(fh)
    if not isinstance(certs, list) or not certs:
        raise RenderError("certificates.json holds no records")
    rows = []
    for r in certs:
        rid = r.get("case") or r.get("barrier_id") or r.get("check_id", "?")
        slack = r.get("slack", r.get("residual_min", float("nan")))
        rows.append((str(rid), f"{slack:.3e}", "pass" if r.get("pass") else "FAIL"))
    fig, ax = plt.subplots(figsize=(5.2, 0.26 * len(rows) + 1.2))
    ax.axis("off")
    table = ax.table(cellText=rows, colLabels=("certificate", "slack", "status"),
                     loc="center", cellLoc="left")
    table.auto_set_font_size(False)
    table.set_fontsize(8)
    for (ri, ci), cell in table.get_celld().items():
        if ri > 0 and ci == 2 and rows[ri - 1][2] == "FAIL":
            cell.set_facecolor("#f5c6c6")
    ax.set_title("certificate slack table", fontsize=10)
    cap = _caption(fig, man)
    return _finish(fig, spec, cap)


_RENDERERS = {
    "decay-fit": _render_decay,
    "profile-vs-barrier": _render_profile,
    "monitor-series": _render_monitors,
    "contact-heatmap": _render_contact,
    "slack-table": _render_slack,
}


def render(spec: PlotSpec) -> dict:
    """Render one figure; returns {out, kind, caption, ...}."""
    man = _load_manifest(spec.manifest)
    return _RENDERERS[spec.kind](spec, man)


# -- entry points -----------------------------------------------------------------

def _main(kind: str, argv=None) -> int:
    ap = argparse.ArgumentParser(prog=f"plot-{kind.split('-')[0]}")
    ap.add_argument("--in", dest="inputs", action="append", required=True,
                    help="input data file (repeatable)")
    ap.add_argument("--out", required=True, help="output image path")
    ap.add_argument("--manifest", required=True, help="run manifest.json")
    args = ap.parse_args(argv)
    try:
        out = render(PlotSpec(kind, args.inputs, args.manifest, args.out))
    except (RenderError, StopIteration) as exc:
        msg = "missing required input file" if isinstance(exc, StopIteration) else str(exc)
        print(f"render error: {msg}", file=sys.stderr)
        return 1
    print(out["out"])
    return 0


def main_decay(argv=None):
    return _main("decay-fit", argv)


def main_profile(argv=None):
    return _main("profile-vs-barrier", argv)


def main_monitors(argv=None):
    return _main("monitor-series", argv)


def main_contact(argv=None):
    return _main("contact-heatmap", argv)


def main_slack(argv=None):
    return _main("slack-table", argv)
