//! On-disk artifacts: manifest, returns table, per-state grids, spread traces
//! and an SVG learning-curve plot. All output is deterministic text.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::dynamics::SigmaTrace;
use crate::error::{Error, Result};
use crate::gridworld::GridSpec;
use crate::harness::stats::Summary;
use crate::harness::RunResult;

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

/// `nan` marks cells without a value.
pub fn grid_csv(spec: &GridSpec, values: &[Option<f64>]) -> String {
    let mut out = String::new();
    for y in 0..spec.height() {
        let row: Vec<String> = (0..spec.width())
            .map(|x| match values[y * spec.width() + x] {
                Some(v) => v.to_string(),
                None => "nan".to_string(),
            })
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_grid(path: &Path, spec: &GridSpec, values: &[Option<f64>]) -> Result<()> {
    write(path, &grid_csv(spec, values))
}

/// Parses a grid written by [`grid_csv`] back into row-major cells.
pub fn read_grid(path: &Path) -> Result<Vec<Option<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .flat_map(|l| l.split(','))
        .map(|cell| match cell.trim() {
            "nan" => Ok(None),
            v => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("{}: bad grid cell {v:?}", path.display()))),
        })
        .collect()
}

pub fn write_manifest(
    path: &Path,
    cfg: &ExperimentConfig,
    command: &str,
    runs: &[&RunResult],
) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# structlab run manifest");
    let _ = writeln!(out, "# command: {command}");
    out.push_str(&cfg.to_text());
    let _ = writeln!(out, "\n# --- per-run seed sets (not config keys) ---");
    for r in runs {
        match &r.seeds {
            Some(s) => {
                let states: Vec<String> = s.states().iter().map(|s| s.to_string()).collect();
                let _ = writeln!(
                    out,
                    "# seeds[{}:{}] strategy={} states={}",
                    r.arm.name(),
                    r.run_seed,
                    s.strategy(),
                    states.join(" ")
                );
            }
            None => {
                let _ = writeln!(out, "# seeds[{}:{}] none", r.arm.name(), r.run_seed);
            }
        }
    }
    write(path, &out)
}

pub fn returns_csv(runs: &[&RunResult]) -> String {
    let mut out = String::from("episode,run_seed,arm,return,eval_return\n");
    for r in runs {
        for (e, ret) in r.episodic_returns.iter().enumerate() {
            let eval = r.eval_returns[e].map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{e},{},{},{ret},{eval}", r.run_seed, r.arm.name());
        }
    }
    out
}

pub fn write_returns(path: &Path, runs: &[&RunResult]) -> Result<()> {
    write(path, &returns_csv(runs))
}

/// Long format: `episode,x,y,sigma`.
pub fn sigma_trace_csv(spec: &GridSpec, trace: &SigmaTrace) -> String {
    let mut out = String::from("episode,x,y,sigma\n");
    for (episode, sigma) in trace.snapshots() {
        for (i, v) in sigma.iter().enumerate() {
            let s = spec.state_at(i);
            let _ = writeln!(out, "{episode},{},{},{v}", s.x, s.y);
        }
    }
    out
}

pub fn write_sigma_trace(path: &Path, spec: &GridSpec, trace: &SigmaTrace) -> Result<()> {
    write(path, &sigma_trace_csv(spec, trace))
}

pub fn read_sigma_trace(path: &Path, spec: &GridSpec) -> Result<SigmaTrace> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: &str| Error::Config(format!("{}: bad trace row {line:?}", path.display()));
    let mut snapshots: Vec<(usize, Vec<f64>)> = Vec::new();
    for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(bad(line));
        }
        let episode: usize = f[0].parse().map_err(|_| bad(line))?;
        let x: usize = f[1].parse().map_err(|_| bad(line))?;
        let y: usize = f[2].parse().map_err(|_| bad(line))?;
        let v: f64 = f[3].parse().map_err(|_| bad(line))?;
        if x >= spec.width() || y >= spec.height() {
            return Err(bad(line));
        }
        if snapshots.last().map(|(e, _)| *e) != Some(episode) {
            snapshots.push((episode, vec![f64::NAN; spec.n_states()]));
        }
        let slot = snapshots.last_mut().expect("just pushed");
        slot.1[y * spec.width() + x] = v;
    }
    if snapshots.iter().any(|(_, s)| s.iter().any(|v| v.is_nan())) {
        return Err(Error::Config(format!(
            "{}: a snapshot does not cover every state",
            path.display()
        )));
    }
    SigmaTrace::from_snapshots(snapshots)
}

/// Writes the per-state grids for one run under `dir`, returning the paths.
pub fn write_run_grids(dir: &Path, spec: &GridSpec, run: &RunResult) -> Result<Vec<PathBuf>> {
    let prefix = format!("{}_seed{}", run.arm.name(), run.run_seed);
    let mut written = Vec::new();
    let mut emit = |name: &str, values: Vec<Option<f64>>| -> Result<()> {
        let path = dir.join(format!("{prefix}_{name}.csv"));
        write_grid(&path, spec, &values)?;
        written.push(path);
        Ok(())
    };
    emit("sigma_final", run.sigma_final.iter().map(|&v| Some(v)).collect())?;
    emit(
        "tstar",
        run.tstar.values().iter().map(|t| t.map(|t| t as f64)).collect(),
    )?;
    emit("visitation", run.visitation.iter().map(|&v| Some(v as f64)).collect())?;
    emit(
        "replay_visitation",
        run.replay_visitation.iter().map(|&v| Some(v as f64)).collect(),
    )?;
    if let Some(field) = &run.distance_field {
        emit(
            "distance",
            field.values().iter().map(|d| d.map(f64::from)).collect(),
        )?;
    }
    Ok(written)
}

pub fn write_true_distance(dir: &Path, spec: &GridSpec) -> Result<()> {
    let d: Vec<Option<f64>> = spec.true_distances().into_iter().map(|d| Some(d as f64)).collect();
    write_grid(&dir.join("true_distance.csv"), spec, &d)
}

/// Mean return with an interquartile band per arm.
pub fn curves_svg(series: &[(&str, &Summary)], min_return: f64) -> String {
    const W: f64 = 720.0;
    const H: f64 = 360.0;
    const PAD: f64 = 40.0;
    const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];
    let len = series
        .iter()
        .map(|(_, s)| s.episodes.len())
        .max()
        .unwrap_or(1)
        .max(2);
    let px = |e: usize| PAD + (W - 2.0 * PAD) * e as f64 / (len - 1) as f64;
    let py = |r: f64| PAD + (H - 2.0 * PAD) * (r / min_return).clamp(0.0, 1.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    );
    let _ = writeln!(
        out,
        r#"<text x="{PAD}" y="{}" font-size="12">0</text><text x="4" y="{}" font-size="12">{min_return}</text>"#,
        PAD - 6.0,
        H - PAD
    );
    for (k, (name, summary)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let upper: Vec<String> = summary
            .episodes
            .iter()
            .enumerate()
            .map(|(e, s)| format!("{:.2},{:.2}", px(e), py(s.q75)))
            .collect();
        let lower: Vec<String> = summary
            .episodes
            .iter()
            .enumerate()
            .rev()
            .map(|(e, s)| format!("{:.2},{:.2}", px(e), py(s.q25)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let mean: Vec<String> = summary
            .episodes
            .iter()
            .enumerate()
            .map(|(e, s)| format!("{:.2},{:.2}", px(e), py(s.mean)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            mean.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{name}</text>"#,
            W - PAD - 90.0,
            PAD + 14.0 * (k as f64 + 1.0)
        );
    }
    out.push_str("</svg>\n");
    out
}

pub fn write_curves(path: &Path, series: &[(&str, &Summary)], min_return: f64) -> Result<()> {
    write(path, &curves_svg(series, min_return))
}

pub fn write_text(path: &Path, contents: &str) -> Result<()> {
    write(path, contents)
}
