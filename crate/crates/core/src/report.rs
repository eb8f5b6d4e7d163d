//! PNG heatmaps and the per-run report bundle.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::calibrate::CalibrationResult;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::fields::ScalarGrid;
use crate::kernels::{strain_from_displacement, stress_from_strain};
use crate::metrics::{error_map, mae, mre};
use crate::train::PredictedFields;

/// Viridis sampled at nine evenly spaced stops.
const VIRIDIS: [[u8; 3]; 9] = [
    [68, 1, 84],
    [71, 44, 122],
    [59, 81, 139],
    [44, 113, 142],
    [33, 144, 141],
    [39, 173, 129],
    [92, 200, 99],
    [170, 220, 50],
    [253, 231, 37],
];

/// Maps `s` in [0, 1] (clamped) onto the viridis palette.
pub fn viridis(s: f64) -> [u8; 3] {
    let s = if s.is_finite() { s.clamp(0.0, 1.0) } else { 0.0 };
    let pos = s * (VIRIDIS.len() - 1) as f64;
    let k = (pos.floor() as usize).min(VIRIDIS.len() - 2);
    let f = pos - k as f64;
    std::array::from_fn(|c| {
        let (a, b) = (VIRIDIS[k][c] as f64, VIRIDIS[k + 1][c] as f64);
        (a + (b - a) * f).round() as u8
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum ColorScale {
    /// Stretch the grid's own min..max over the palette.
    #[default]
    Auto,
    Fixed { lo: f64, hi: f64 },
}

/// Height in pixels of the annotation strip under the field.
pub const MARGIN: u32 = 14;

/// Pixels per grid cell for a grid whose longer side is `n`.
pub fn cell_pixels(n: usize) -> u32 {
    (256 / n.max(1)).clamp(1, 16) as u32
}

/// Renders `grid` to `path`. The field occupies the top `ny * s` rows; the
/// strip below carries the color range as text.
pub fn export_heatmap(grid: &ScalarGrid, path: &Path, scale: ColorScale) -> Result<()> {
    let img = render_heatmap(grid, scale);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn render_heatmap(grid: &ScalarGrid, scale: ColorScale) -> RgbImage {
    let (ny, nx) = grid.dim();
    let s = cell_pixels(ny.max(nx));
    let (lo, hi) = match scale {
        ColorScale::Auto => (grid.min(), grid.max()),
        ColorScale::Fixed { lo, hi } => (lo, hi),
    };
    let label = format!("{} {}", short(lo), short(hi));
    let text_w = label.len() as u32 * 4 + 2;
    let width = (nx as u32 * s).max(text_w);
    let mut img = RgbImage::from_pixel(width, ny as u32 * s + MARGIN, Rgb([255, 255, 255]));
    for ((i, j), v) in grid.values().indexed_iter() {
        let frac = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
        let px = Rgb(viridis(frac));
        for dy in 0..s {
            for dx in 0..s {
                img.put_pixel(j as u32 * s + dx, i as u32 * s + dy, px);
            }
        }
    }
    draw_text(&mut img, 1, ny as u32 * s + 4, &label);
    img
}

fn short(v: f64) -> String {
    format!("{v:.3e}")
}

/// 3x5 glyphs, one row per `u8` with the three low bits used.
fn glyph(c: char) -> [u8; 5] {
    match c {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '.' => [0, 0, 0, 0, 2],
        '-' => [0, 0, 7, 0, 0],
        'e' => [0, 7, 7, 4, 7],
        'N' | 'n' => [0, 6, 5, 5, 5],
        'a' => [0, 3, 5, 5, 3],
        'i' => [2, 0, 2, 2, 2],
        'f' => [3, 4, 6, 4, 4],
        _ => [0; 5],
    }
}

fn draw_text(img: &mut RgbImage, x0: u32, y0: u32, text: &str) {
    for (k, c) in text.chars().enumerate() {
        for (r, bits) in glyph(c).iter().enumerate() {
            for b in 0..3 {
                if bits & (4 >> b) != 0 {
                    let (x, y) = (x0 + k as u32 * 4 + b, y0 + r as u32);
                    if x < img.width() && y < img.height() {
                        img.put_pixel(x, y, Rgb([0, 0, 0]));
                    }
                }
            }
        }
    }
}

/// Field names in report order.
pub const REPORT_FIELDS: [&str; 10] = ["E", "nu", "ux", "uy", "exx", "eyy", "gxy", "sxx", "syy", "txy"];

/// Files `export_report` writes into the report directory.
pub fn report_manifest(with_truth: bool) -> Vec<String> {
    let mut files = vec!["metrics.csv".to_string()];
    for f in REPORT_FIELDS {
        files.push(format!("{f}_pred.png"));
        if with_truth {
            files.push(format!("{f}_true.png"));
            files.push(format!("{f}_error.png"));
        }
    }
    files.sort();
    files
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldMetrics {
    pub field: String,
    pub mae: f64,
    /// `None` when the reference is not strictly positive.
    pub mre: Option<f64>,
}

/// Writes heatmaps and `metrics.csv` into `dir`. With a calibration the
/// modulus and stresses are reported on the absolute scale.
pub fn export_report(
    dir: &Path,
    pred: &PredictedFields,
    dataset: &Dataset,
    calibration: Option<&CalibrationResult>,
) -> Result<Vec<FieldMetrics>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let c = calibration.map_or(1.0, |c| c.c_hat);
    let stress = pred.stress.scaled(c)?;
    let e_pred = pred.elasticity.e().scaled(c)?;
    let predicted: [&ScalarGrid; 10] = [
        &e_pred,
        pred.elasticity.nu(),
        pred.displacement.ux(),
        pred.displacement.uy(),
        pred.strain.exx(),
        pred.strain.eyy(),
        pred.strain.gxy(),
        stress.sxx(),
        stress.syy(),
        stress.txy(),
    ];

    let truth = truth_fields(dataset)?;
    let mut rows = Vec::new();
    for (k, name) in REPORT_FIELDS.iter().enumerate() {
        let p = predicted[k];
        match &truth {
            Some(t) => {
                let t = &t[k];
                let lo = p.min().min(t.min());
                let hi = p.max().max(t.max());
                let shared = ColorScale::Fixed { lo, hi };
                export_heatmap(p, &dir.join(format!("{name}_pred.png")), shared)?;
                export_heatmap(t, &dir.join(format!("{name}_true.png")), shared)?;
                export_heatmap(&error_map(p, t)?, &dir.join(format!("{name}_error.png")), ColorScale::Auto)?;
                rows.push(FieldMetrics {
                    field: name.to_string(),
                    mae: mae(p, t)?,
                    mre: mre(p, t).ok(),
                });
            }
            None => export_heatmap(p, &dir.join(format!("{name}_pred.png")), ColorScale::Auto)?,
        }
    }
    write_metrics_csv(&rows, &dir.join("metrics.csv"))?;
    Ok(rows)
}

/// Reference fields in [`REPORT_FIELDS`] order, derived from the dataset's
/// truth displacement and elasticity.
fn truth_fields(dataset: &Dataset) -> Result<Option<Vec<ScalarGrid>>> {
    let (Some(u), Some(el)) = (&dataset.truth_displacement, &dataset.truth_elasticity) else {
        return Ok(None);
    };
    let strain = strain_from_displacement(u)?;
    let stress = stress_from_strain(&strain, el)?;
    Ok(Some(vec![
        el.e().clone(),
        el.nu().clone(),
        u.ux().clone(),
        u.uy().clone(),
        strain.exx().clone(),
        strain.eyy().clone(),
        strain.gxy().clone(),
        stress.sxx().clone(),
        stress.syy().clone(),
        stress.txy().clone(),
    ]))
}

pub fn write_metrics_csv(rows: &[FieldMetrics], path: &Path) -> Result<()> {
    let mut out = Vec::new();
    writeln!(out, "field,mae,mre").expect("in-memory write");
    for r in rows {
        let mre = r.mre.map_or(String::new(), |v| format!("{v:e}"));
        writeln!(out, "{},{:e},{}", r.field, r.mae, mre).expect("in-memory write");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Lists regular files in `dir`, sorted by name.
pub fn list_files(dir: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    Ok(names)
}

pub fn report_dir(run_dir: &Path) -> PathBuf {
    run_dir.join("report")
}
