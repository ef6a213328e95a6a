//! CSV, SVG and JSON outputs of a [`ResultTable`].
//!
//! Files written into the output directory:
//!
//! - `results.csv`: total squared error (or bound trace) per row, header
//!   `l,n,snr_db,nu,m,series,target,value,stderr,trials`.
//! - `results_per_component.csv`: the same rows divided by the number of
//!   scalar entries of the target.
//! - one `mse_<target>_<fixed axes>.svg` per figure, with a log MSE axis and
//!   one polyline per series.
//! - `manifest.json`: the configuration, the grid status and the list of
//!   figures with the grid values they fix.
//!
//! Values are printed with 17 significant digits and rows keep the table
//! order, so emitting the same table twice gives identical bytes.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use plotters::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use super::run::{GridPoint, GridStatus, ResultRow, ResultTable};
use crate::bounds::Target;
use crate::error::{invalid, Result, SblError};
use crate::io::write_json;

pub const CSV_HEADER: &str = "l,n,snr_db,nu,m,series,target,value,stderr,trials";

/// Paths written by [`emit_outputs`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputFiles {
    pub csv: PathBuf,
    pub per_component_csv: PathBuf,
    pub figures: Vec<PathBuf>,
    pub manifest: PathBuf,
}

/// Grid axis used for the horizontal axis of a figure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    SnrDb,
    N,
    Nu,
    M,
}

impl Axis {
    fn value(&self, p: &GridPoint) -> f64 {
        match self {
            Axis::SnrDb => p.snr_db,
            Axis::N => p.n as f64,
            Axis::Nu => p.nu,
            Axis::M => p.m as f64,
        }
    }

    fn label(&self) -> &'static str {
        match self {
            Axis::SnrDb => "SNR (dB)",
            Axis::N => "N",
            Axis::Nu => "nu",
            Axis::M => "M",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct FigureEntry {
    file: String,
    target: Target,
    x_axis: Axis,
    fixed: GridPoint,
    series: Vec<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    config: &'a ExperimentConfig,
    csv: &'static str,
    per_component_csv: &'static str,
    mse_normalization: &'static str,
    figures: Vec<FigureEntry>,
    grid: &'a [GridStatus],
}

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

/// CSV text for the table, using the total or per-component values.
pub fn csv_text(table: &ResultTable, per_component: bool) -> String {
    let mut out = String::with_capacity(64 * (table.rows.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &table.rows {
        let (value, stderr) = if per_component { (r.per_component, r.per_component_stderr) } else { (r.value, r.stderr) };
        let p = &r.point;
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            p.l,
            p.n,
            p.snr_db,
            p.nu,
            p.m,
            r.series,
            r.target,
            sci(value),
            sci(stderr),
            r.trials
        );
    }
    out
}

fn distinct(values: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut v: Vec<f64> = values.collect();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// The first of SNR, `N`, `ν`, `M` that takes more than one value.
pub fn x_axis(table: &ResultTable) -> Axis {
    [Axis::SnrDb, Axis::N, Axis::Nu, Axis::M]
        .into_iter()
        .find(|a| distinct(table.grid.iter().map(|g| a.value(&g.point))).len() > 1)
        .unwrap_or(Axis::SnrDb)
}

fn fixed_key(axis: Axis, p: &GridPoint) -> GridPoint {
    let mut q = *p;
    match axis {
        Axis::SnrDb => q.snr_db = f64::NAN,
        Axis::N => q.n = 0,
        Axis::Nu => q.nu = f64::NAN,
        Axis::M => q.m = 0,
    }
    q
}

fn same_key(a: &GridPoint, b: &GridPoint) -> bool {
    a.l == b.l && a.n == b.n && a.m == b.m && a.snr_db.total_cmp(&b.snr_db).is_eq() && a.nu.total_cmp(&b.nu).is_eq()
}

fn figure_name(target: Target, axis: Axis, key: &GridPoint) -> String {
    let mut name = format!("mse_{}", target);
    if axis != Axis::N {
        let _ = write!(name, "_n{}", key.n);
    }
    if axis != Axis::Nu {
        let _ = write!(name, "_nu{}", key.nu);
    }
    if axis != Axis::M {
        let _ = write!(name, "_m{}", key.m);
    }
    if axis != Axis::SnrDb {
        let _ = write!(name, "_snr{}", key.snr_db);
    }
    name.push_str(".svg");
    name
}

const PALETTE: [RGBColor; 6] = [
    RGBColor(0x1f, 0x77, 0xb4),
    RGBColor(0xd6, 0x27, 0x28),
    RGBColor(0x2c, 0xa0, 0x2c),
    RGBColor(0x94, 0x67, 0xbd),
    RGBColor(0xff, 0x7f, 0x0e),
    RGBColor(0x8c, 0x56, 0x4b),
];

fn plot_error<E: std::fmt::Display>(e: E) -> SblError {
    SblError::Io(std::io::Error::other(e.to_string()))
}

/// SVG with one polyline per series. Points with a nonpositive or
/// non-finite value are left out of the log axis.
fn render_svg(title: &str, axis: Axis, series: &[(String, Vec<(f64, f64)>)]) -> Result<String> {
    let xs: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.0)).collect();
    let ys: Vec<f64> = series.iter().flat_map(|(_, p)| p.iter().map(|q| q.1)).collect();
    let (mut x0, mut x1) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let (mut y0, mut y1) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !(x0 < x1) {
        x0 -= 1.0;
        x1 += 1.0;
    }
    if !(y0.is_finite() && y1.is_finite()) {
        (y0, y1) = (1e-3, 1.0);
    }
    if !(y0 < y1) {
        y0 /= 2.0;
        y1 *= 2.0;
    }
    let mut svg = String::new();
    {
        let root = SVGBackend::with_string(&mut svg, (720, 480)).into_drawing_area();
        root.fill(&WHITE).map_err(plot_error)?;
        let mut chart = ChartBuilder::on(&root)
            .caption(title, ("sans-serif", 18))
            .margin(12)
            .x_label_area_size(40)
            .y_label_area_size(70)
            .build_cartesian_2d(x0..x1, (y0 / 1.5..y1 * 1.5).log_scale())
            .map_err(plot_error)?;
        chart
            .configure_mesh()
            .x_desc(axis.label())
            .y_desc("MSE / bound trace")
            .y_label_formatter(&|v| format!("{v:.0e}"))
            .draw()
            .map_err(plot_error)?;
        for (k, (name, points)) in series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            chart
                .draw_series(LineSeries::new(points.iter().copied(), color.stroke_width(2)))
                .map_err(plot_error)?
                .label(name.as_str())
                .legend(move |(x, y)| PathElement::new(vec![(x, y), (x + 18, y)], color.stroke_width(2)));
        }
        chart
            .configure_series_labels()
            .background_style(WHITE.mix(0.9))
            .border_style(BLACK)
            .draw()
            .map_err(plot_error)?;
        root.present().map_err(plot_error)?;
    }
    Ok(svg)
}

fn figures(table: &ResultTable) -> Vec<(FigureEntry, Vec<(String, Vec<(f64, f64)>)>)> {
    let axis = x_axis(table);
    let mut out: Vec<(FigureEntry, Vec<(String, Vec<(f64, f64)>)>)> = Vec::new();
    for target in [Target::X, Target::Gamma, Target::Xi] {
        let rows: Vec<&ResultRow> = table.rows.iter().filter(|r| r.target == target).collect();
        let mut keys: Vec<GridPoint> = Vec::new();
        for r in &rows {
            let k = fixed_key(axis, &r.point);
            if !keys.iter().any(|q| same_key(q, &k)) {
                keys.push(k);
            }
        }
        for key in keys {
            let mut series: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
            for r in rows.iter().filter(|r| same_key(&fixed_key(axis, &r.point), &key)) {
                if !table.grid[r.grid_index].valid || !(r.value > 0.0 && r.value.is_finite()) {
                    continue;
                }
                let pt = (axis.value(&r.point), r.value);
                match series.iter_mut().find(|(s, _)| *s == r.series) {
                    Some((_, v)) => v.push(pt),
                    None => series.push((r.series.clone(), vec![pt])),
                }
            }
            for (_, v) in series.iter_mut() {
                v.sort_by(|a, b| a.0.total_cmp(&b.0));
            }
            let entry = FigureEntry {
                file: figure_name(target, axis, &key),
                target,
                x_axis: axis,
                fixed: key,
                series: series.iter().map(|(s, _)| s.clone()).collect(),
            };
            out.push((entry, series));
        }
    }
    out
}

/// Writes the CSV files, the figures and the manifest into
/// `cfg.output_dir`, creating it if needed.
pub fn emit_outputs(table: &ResultTable, cfg: &ExperimentConfig) -> Result<OutputFiles> {
    emit_outputs_to(table, cfg, &cfg.output_dir)
}

/// [`emit_outputs`] into an explicit directory.
pub fn emit_outputs_to(table: &ResultTable, cfg: &ExperimentConfig, dir: &Path) -> Result<OutputFiles> {
    if table.rows.is_empty() {
        return Err(invalid("refusing to emit an empty result table"));
    }
    fs::create_dir_all(dir)?;
    let csv = dir.join("results.csv");
    fs::write(&csv, csv_text(table, false))?;
    let per_component_csv = dir.join("results_per_component.csv");
    fs::write(&per_component_csv, csv_text(table, true))?;

    let mut entries = Vec::new();
    let mut figure_paths = Vec::new();
    for (entry, series) in figures(table) {
        let k = &entry.fixed;
        let title = format!("{} (L={}, N={}, nu={}, M={})", entry.target, k.l, k.n, k.nu, k.m);
        let svg = render_svg(&title, entry.x_axis, &series)?;
        let path = dir.join(&entry.file);
        fs::write(&path, svg)?;
        figure_paths.push(path);
        entries.push(entry);
    }
    let manifest = dir.join("manifest.json");
    write_json(
        &manifest,
        &Manifest {
            config: cfg,
            csv: "results.csv",
            per_component_csv: "results_per_component.csv",
            mse_normalization: "results.csv holds the total squared error (trace); results_per_component.csv divides by the number of scalar entries",
            figures: entries,
            grid: &table.grid,
        },
    )?;
    Ok(OutputFiles { csv, per_component_csv, figures: figure_paths, manifest })
}
