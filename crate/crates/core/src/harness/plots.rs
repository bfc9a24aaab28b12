//! Plot scripts written next to a run's CSV files. They need Python with
//! matplotlib and read everything relative to their own directory.

use std::path::Path;

use super::config::RunConfig;
use super::run::{CONFIG_FILE, TRACE_FILE};
use crate::error::{Error, Result};

const READER: &str = r##"import csv
import os
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

HERE = os.path.dirname(os.path.abspath(__file__))


def read(name):
    """Rows of a versioned CSV as dicts; empty fields become None."""
    with open(os.path.join(HERE, name)) as f:
        first = f.readline()
        if not first.startswith("# "):
            sys.exit(name + ": missing schema line")
        rows = list(csv.DictReader(f))
    return [{k: (None if v == "" else v) for k, v in r.items()} for r in rows]
"##;

fn rewards_script(window: usize) -> String {
    format!(
        r##"{READER}

WINDOW = {window}

rows = read("trace.csv")
step = [int(r["step"]) for r in rows]
reward = [float(r["reward"]) for r in rows]
smooth = []
acc = 0.0
for i, r in enumerate(reward):
    acc += r
    if i >= WINDOW:
        acc -= reward[i - WINDOW]
    smooth.append(acc / min(i + 1, WINDOW))

fig, ax = plt.subplots(figsize=(7, 4))
ax.plot(step, smooth, lw=1)
ax.set_xlabel("environment step")
ax.set_ylabel("reward (moving mean over %d steps)" % WINDOW)
l1 = [(int(r["step"]), float(r["l1"])) for r in rows if r["l1"] is not None]
if l1:
    ax2 = ax.twinx()
    ax2.plot([s for s, _ in l1], [v for _, v in l1], lw=0.3, alpha=0.3, color="tab:red")
    ax2.set_ylabel("L1 depth error")
fig.tight_layout()
fig.savefig(os.path.join(HERE, "rewards.png"), dpi=120)
"##
    )
}

fn heatmap_script(bins: [usize; 2], x: (f64, f64), y: (f64, f64)) -> String {
    format!(
        r##"{READER}

NX, NY = {nx}, {ny}
X_RANGE = ({x0}, {x1})
Y_RANGE = ({y0}, {y1})

rows = read("heatmap.csv")
slots = sorted({{int(r["slot"]) for r in rows}})
fig, axes = plt.subplots(1, len(slots), figsize=(3 * len(slots), 3), squeeze=False)
for ax, s in zip(axes[0], slots):
    grid = [[0] * NX for _ in range(NY)]
    for r in rows:
        if int(r["slot"]) == s:
            grid[int(r["iy"])][int(r["ix"])] = int(r["count"])
    ax.imshow(grid, origin="lower", extent=(*X_RANGE, *Y_RANGE), aspect="auto", cmap="viridis")
    ax.set_title("camera %d" % (s + 1))
fig.tight_layout()
fig.savefig(os.path.join(HERE, "heatmap.png"), dpi=120)
"##,
        nx = bins[0],
        ny = bins[1],
        x0 = x.0,
        x1 = x.1,
        y0 = y.0,
        y1 = y.1,
    )
}

fn panels_script() -> String {
    format!(
        r##"{READER}

panels = [n for n in ("histogram.csv", "coverage.csv", "baseline.csv") if os.path.exists(os.path.join(HERE, n))]
fig, axes = plt.subplots(1, len(panels), figsize=(4 * len(panels), 3.5), squeeze=False)
for ax, name in zip(axes[0], panels):
    rows = read(name)
    if name == "histogram.csv":
        ax.bar([int(r["cameras"]) for r in rows], [float(r["fraction"]) for r in rows])
        ax.set_xlabel("cameras placed")
        ax.set_ylabel("fraction of rigs")
    elif name == "coverage.csv":
        rows = [r for r in rows if r["mean_l1"] is not None]
        ax.bar([r["coverage"] for r in rows], [float(r["mean_l1"]) for r in rows])
        ax.set_xlabel("coverage")
        ax.set_ylabel("mean L1")
    else:
        x = [float(r["x"]) for r in rows]
        for col, label in (("one", "1 camera"), ("two", "2 cameras"), ("three", "3 cameras")):
            ax.plot(x, [float(r[col]) for r in rows], label=label)
        ax.set_xlabel("movable camera x")
        ax.set_ylabel("mean L1")
        ax.legend()
fig.tight_layout()
fig.savefig(os.path.join(HERE, "panels.png"), dpi=120)
"##
    )
}

/// Writes `plot_rewards.py`, `plot_heatmap.py` and `plot_panels.py` into
/// `dir`. Output is a pure function of the run's config, so re-running
/// rewrites identical files.
pub fn emit_plots(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    for f in [CONFIG_FILE, TRACE_FILE] {
        if !dir.join(f).exists() {
            return Err(Error::MissingFile(dir.join(f)));
        }
    }
    let cfg = RunConfig::load(&dir.join(CONFIG_FILE))?;
    let spec = super::run::action_spec(&cfg)?;
    let dims: Vec<_> = spec.camera_dims().take(2).map(|d| (d.lo, d.hi)).collect();
    let mut scripts = vec![("plot_rewards.py", rewards_script(1000)), ("plot_panels.py", panels_script())];
    if dims.len() == 2 {
        scripts.push(("plot_heatmap.py", heatmap_script(cfg.report.heatmap_bins, dims[0], dims[1])));
    }
    let mut written = Vec::new();
    for (name, body) in scripts {
        let path = dir.join(name);
        std::fs::write(&path, body)?;
        written.push(path);
    }
    Ok(written)
}
