//! Subcommand implementations behind the `alipp` binary: `run`, `sweep` and
//! `validate`. Each returns a process exit code.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::export::{render_line_plot, save_png, Series};
use crate::mission::{run_experiment, LearningCurve};
use crate::planning::PlannerKind;

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Fixed plot colour per planner.
pub fn planner_color(kind: PlannerKind) -> [u8; 3] {
    match kind {
        PlannerKind::Coverage => [120, 120, 120],
        PlannerKind::Image => [31, 119, 180],
        PlannerKind::Frontier => [44, 160, 44],
        PlannerKind::FixedHorizon => [214, 39, 40],
    }
}

fn load_checked(path: &Path, seed_override: Option<u64>) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed_override {
        cfg.seed = s;
        cfg.terrain.seed = None;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn cmd_validate(config_path: &Path) -> i32 {
    match load_checked(config_path, None) {
        Ok(cfg) => {
            print!("{}", cfg.resolved().to_toml());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_CONFIG
        }
    }
}

pub fn cmd_run(config_path: &Path, out_dir: &Path, seed_override: Option<u64>) -> i32 {
    let cfg = match load_checked(config_path, seed_override) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    match run_experiment(&cfg, Some(out_dir)) {
        Ok(out) => {
            if let Some(r) = out.curve.final_row() {
                println!(
                    "{} missions, {} labelled images, accuracy {:.4}, mIoU {:.4}, ECE {:.4}",
                    r.mission_index, r.num_labeled_images, r.accuracy, r.miou, r.ece
                );
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            EXIT_RUNTIME
        }
    }
}

/// Planner × seed grid over a base experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Base experiment config, relative to the sweep file.
    pub base_config: PathBuf,
    pub planners: Vec<PlannerKind>,
    pub seeds: Vec<u64>,
    /// Output root, used when `--out` is not given; relative to the sweep file.
    #[serde(default)]
    pub out_root: Option<PathBuf>,
    /// Points of the common x-grid used for aggregation.
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

fn default_grid_points() -> usize {
    21
}

impl SweepSpec {
    pub fn load(path: &Path) -> Result<(Self, ExperimentConfig)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let spec: SweepSpec = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        if spec.planners.is_empty() {
            return Err(Error::Config("sweep needs at least one planner".into()));
        }
        if spec.seeds.is_empty() {
            return Err(Error::Config("sweep needs at least one seed".into()));
        }
        let mut seen = spec.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != spec.seeds.len() {
            return Err(Error::Config("sweep seeds must be distinct".into()));
        }
        if spec.grid_points < 2 {
            return Err(Error::Config("grid_points must be at least 2".into()));
        }
        let base_path = path.parent().unwrap_or(Path::new(".")).join(&spec.base_config);
        let base = ExperimentConfig::load(&base_path)?;
        Ok((spec, base))
    }
}

pub fn run_dir_name(kind: PlannerKind, seed: u64) -> String {
    format!("{}_seed{seed}", kind.name())
}

/// Linear interpolation of `(x, y)` points sorted by `x`; `None` outside the range.
pub fn interpolate(points: &[(f64, f64)], x: f64) -> Option<f64> {
    let first = points.first()?;
    let last = points.last()?;
    if x < first.0 || x > last.0 {
        return None;
    }
    for w in points.windows(2) {
        let ((x0, y0), (x1, y1)) = (w[0], w[1]);
        if x >= x0 && x <= x1 {
            return Some(if x1 > x0 { y0 + (y1 - y0) * (x - x0) / (x1 - x0) } else { y1 });
        }
    }
    Some(first.1)
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = if v.len() > 1 { (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    (mean, std)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub planner: String,
    pub num_labeled_images: f64,
    pub n_runs: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub miou_mean: f64,
    pub miou_std: f64,
}

/// Mean ± sample std of each planner's curves on a common grid from 0 to the
/// largest image count of any run. A run contributes at `x` only if its curve
/// spans `x`.
pub fn aggregate(runs: &[(PlannerKind, LearningCurve)], grid_points: usize) -> Vec<SummaryRow> {
    let x_max = runs
        .iter()
        .filter_map(|(_, c)| c.final_row().map(|r| r.num_labeled_images as f64))
        .fold(0.0, f64::max);
    let mut planners: Vec<PlannerKind> = runs.iter().map(|(k, _)| *k).collect();
    planners.sort_by_key(|k| PlannerKind::ALL.iter().position(|a| a == k));
    planners.dedup();
    let mut rows = Vec::new();
    for kind in planners {
        let curves: Vec<&LearningCurve> = runs.iter().filter(|(k, _)| *k == kind).map(|(_, c)| c).collect();
        for g in 0..grid_points {
            let x = x_max * g as f64 / (grid_points - 1) as f64;
            let mut acc = Vec::new();
            let mut miou = Vec::new();
            for c in &curves {
                let pts = |f: fn(&crate::mission::LearningRow) -> f64| -> Vec<(f64, f64)> {
                    c.rows.iter().map(|r| (r.num_labeled_images as f64, f(r))).collect()
                };
                if let (Some(a), Some(m)) = (interpolate(&pts(|r| r.accuracy), x), interpolate(&pts(|r| r.miou), x)) {
                    acc.push(a);
                    miou.push(m);
                }
            }
            if acc.is_empty() {
                continue;
            }
            let (am, asd) = mean_std(&acc);
            let (mm, msd) = mean_std(&miou);
            rows.push(SummaryRow {
                planner: kind.name().to_string(),
                num_labeled_images: x,
                n_runs: acc.len(),
                accuracy_mean: am,
                accuracy_std: asd,
                miou_mean: mm,
                miou_std: msd,
            });
        }
    }
    rows
}

/// Two stacked panels, accuracy above mIoU, one coloured line per planner.
pub fn render_summary_plot(rows: &[SummaryRow]) -> image::RgbImage {
    let (w, h) = (640u32, 480u32);
    let mut out = image::RgbImage::from_pixel(w, 2 * h, image::Rgb([255, 255, 255]));
    let mut panels = [Vec::new(), Vec::new()];
    for kind in PlannerKind::ALL {
        let mine: Vec<&SummaryRow> = rows.iter().filter(|r| r.planner == kind.name()).collect();
        if mine.is_empty() {
            continue;
        }
        let color = planner_color(kind);
        panels[0].push(Series {
            color,
            points: mine.iter().map(|r| (r.num_labeled_images, r.accuracy_mean)).collect(),
            spread: mine.iter().map(|r| r.accuracy_std).collect(),
        });
        panels[1].push(Series {
            color,
            points: mine.iter().map(|r| (r.num_labeled_images, r.miou_mean)).collect(),
            spread: mine.iter().map(|r| r.miou_std).collect(),
        });
    }
    for (i, series) in panels.iter().enumerate() {
        let panel = render_line_plot(series, 0.0, 1.0, w, h);
        image::imageops::replace(&mut out, &panel, 0, (i as u32 * h) as i64);
    }
    out
}

pub fn write_summary(rows: &[SummaryRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn cmd_sweep(sweep_path: &Path, out: Option<&Path>, jobs: usize, seed_override: Option<u64>) -> i32 {
    let (spec, base) = match SweepSpec::load(sweep_path) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_CONFIG;
        }
    };
    let out_root = match (out, &spec.out_root) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => sweep_path.parent().unwrap_or(Path::new(".")).join(o),
        (None, None) => {
            eprintln!("no output root: pass --out or set out_root");
            return EXIT_CONFIG;
        }
    };
    let out_root = out_root.as_path();
    let seeds = seed_override.map(|s| vec![s]).unwrap_or_else(|| spec.seeds.clone());
    let mut tasks = Vec::new();
    for &kind in &spec.planners {
        for &s in &seeds {
            let mut cfg = base.clone();
            cfg.planner.kind = kind;
            cfg.seed = s;
            cfg.terrain.seed = None;
            if let Err(e) = cfg.validate() {
                eprintln!("{}: {e}", run_dir_name(kind, s));
                return EXIT_CONFIG;
            }
            tasks.push((kind, s, cfg));
        }
    }
    if let Err(e) = std::fs::create_dir_all(out_root) {
        eprintln!("cannot create {}: {e}", out_root.display());
        return EXIT_RUNTIME;
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<LearningCurve>>> = Mutex::new(vec![None; tasks.len()]);
    let failures = AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..jobs.max(1).min(tasks.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((kind, s, cfg)) = tasks.get(i) else { break };
                let dir = out_root.join(run_dir_name(*kind, *s));
                match run_experiment(cfg, Some(&dir)) {
                    Ok(out) => results.lock().unwrap()[i] = Some(out.curve),
                    Err(e) => {
                        eprintln!("{}: {e}", dir.display());
                        failures.fetch_add(1, Ordering::SeqCst);
                    }
                }
            });
        }
    });

    let runs: Vec<(PlannerKind, LearningCurve)> = results
        .into_inner()
        .unwrap()
        .into_iter()
        .zip(&tasks)
        .filter_map(|(c, (k, _, _))| c.map(|c| (*k, c)))
        .collect();
    let rows = aggregate(&runs, spec.grid_points);
    let written = write_summary(&rows, &out_root.join("sweep_summary.csv"))
        .and_then(|_| save_png(&render_summary_plot(&rows), &out_root.join("sweep_plot.png")));
    if let Err(e) = written {
        eprintln!("cannot write sweep summary: {e}");
        return EXIT_RUNTIME;
    }
    if failures.load(Ordering::SeqCst) > 0 {
        EXIT_RUNTIME
    } else {
        EXIT_OK
    }
}
