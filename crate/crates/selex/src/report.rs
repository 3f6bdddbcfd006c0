//! Binned curves, two-dimensional occupancy grids and the end-to-end report
//! pipeline that ties ingestion, profiling and classification together.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::bipartite::build_structures;
use crate::error::{Error, Result};
use crate::ingest::{Dataset, Format, IngestStats};
use crate::metrics::{compute_profiles, write_profiles_csv, UserProfile};
use crate::taxonomy::{
    classify_population, write_taxonomy_csv, write_taxonomy_summary, TaxonomyThresholds,
};

pub const DEFAULT_CURVE_BINS: usize = 40;
pub const DEFAULT_GINI_AXIS_BINS: usize = 50;

pub const CURVE_HEADER: &str = "bin_low,bin_high,bin_center,mean,std,count";
pub const DENSITY_HEADER: &str = "x_bin,y_bin,x_center,y_center,count";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binning {
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveRow {
    pub low: f64,
    pub high: f64,
    pub center: f64,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub count: u64,
}

fn check_finite(x: &[f64], y: &[f64]) -> Result<()> {
    let bad = x
        .iter()
        .chain(y.iter())
        .filter(|v| !v.is_finite())
        .count() as u64;
    if bad > 0 {
        return Err(Error::NonFinite { count: bad });
    }
    Ok(())
}

fn edge_grid(min: f64, max: f64, binning: Binning, n_bins: usize) -> Vec<f64> {
    let mut edges = Vec::with_capacity(n_bins + 1);
    match binning {
        Binning::Linear => {
            for i in 0..=n_bins {
                edges.push(min + (max - min) * i as f64 / n_bins as f64);
            }
        }
        Binning::Log => {
            let llo = min.log10();
            let lhi = max.log10();
            for i in 0..=n_bins {
                edges.push(10f64.powf(llo + (lhi - llo) * i as f64 / n_bins as f64));
            }
        }
    }
    edges[0] = min;
    edges[n_bins] = max;
    edges
}

fn bin_center(low: f64, high: f64, binning: Binning) -> f64 {
    match binning {
        Binning::Linear => 0.5 * (low + high),
        Binning::Log => (low * high).sqrt(),
    }
}

/// Index of the bin holding `v` among bins delimited by `interior` edges:
/// each bin takes its lower edge, the last bin takes its upper edge too.
fn bin_index(interior: &[f64], v: f64) -> usize {
    interior.partition_point(|&e| e <= v)
}

#[derive(Default, Clone, Copy)]
struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    fn push(&mut self, v: f64) {
        self.count += 1;
        let d = v - self.mean;
        self.mean += d / self.count as f64;
        self.m2 += d * (v - self.mean);
    }

    fn std(&self) -> f64 {
        (self.m2 / self.count as f64).max(0.0).sqrt()
    }
}

/// Mean and spread of `y` over bins of `x`. Bin edges span the observed range
/// of `x`; a constant `x` collapses to a single bin covering that point.
pub fn binned_average(
    x: &[f64],
    y: &[f64],
    binning: Binning,
    n_bins: usize,
) -> Result<Vec<CurveRow>> {
    if x.len() != y.len() {
        return Err(Error::Config(format!(
            "x has {} values but y has {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() || n_bins == 0 {
        return Err(Error::EmptyBinning);
    }
    check_finite(x, y)?;
    if binning == Binning::Log {
        let bad = x.iter().filter(|&&v| v <= 0.0).count();
        if bad > 0 {
            return Err(Error::NonPositiveLogValue {
                detail: format!("{bad} of {} x values are at or below zero", x.len()),
            });
        }
    }
    let min = x.iter().copied().fold(f64::INFINITY, f64::min);
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    if min == max {
        let mut acc = Welford::default();
        for &v in y {
            acc.push(v);
        }
        return Ok(vec![CurveRow {
            low: min,
            high: max,
            center: min,
            mean: Some(acc.mean),
            std: Some(acc.std()),
            count: acc.count,
        }]);
    }

    let edges = edge_grid(min, max, binning, n_bins);
    let interior = &edges[1..n_bins];
    let mut accs = vec![Welford::default(); n_bins];
    for (&xv, &yv) in x.iter().zip(y) {
        accs[bin_index(interior, xv)].push(yv);
    }
    Ok(accs
        .iter()
        .enumerate()
        .map(|(i, acc)| CurveRow {
            low: edges[i],
            high: edges[i + 1],
            center: bin_center(edges[i], edges[i + 1], binning),
            mean: (acc.count > 0).then_some(acc.mean),
            std: (acc.count > 0).then(|| acc.std()),
            count: acc.count,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisSpec {
    pub binning: Binning,
    pub min: f64,
    pub max: f64,
    pub n_bins: usize,
}

impl AxisSpec {
    pub fn new(binning: Binning, min: f64, max: f64, n_bins: usize) -> Result<AxisSpec> {
        if n_bins == 0 {
            return Err(Error::EmptyBinning);
        }
        if !min.is_finite() || !max.is_finite() || min > max {
            return Err(Error::Config(format!("bad axis range [{min},{max}]")));
        }
        if min == max && n_bins > 1 {
            return Err(Error::ZeroResolution);
        }
        if binning == Binning::Log && min <= 0.0 {
            return Err(Error::NonPositiveLogValue {
                detail: format!("log axis cannot start at {min}"),
            });
        }
        Ok(AxisSpec {
            binning,
            min,
            max,
            n_bins,
        })
    }

    /// Axis covering the observed range of `values`; a constant series gets a
    /// single bin.
    pub fn from_data(binning: Binning, values: &[f64], n_bins: usize) -> Result<AxisSpec> {
        if values.is_empty() || n_bins == 0 {
            return Err(Error::EmptyBinning);
        }
        check_finite(values, &[])?;
        if binning == Binning::Log {
            let bad = values.iter().filter(|&&v| v <= 0.0).count();
            if bad > 0 {
                return Err(Error::NonPositiveLogValue {
                    detail: format!("{bad} of {} values are at or below zero", values.len()),
                });
            }
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n_bins = if min == max { 1 } else { n_bins };
        AxisSpec::new(binning, min, max, n_bins)
    }

    pub fn edges(&self) -> Vec<f64> {
        edge_grid(self.min, self.max, self.binning, self.n_bins)
    }

    pub fn centers(&self) -> Vec<f64> {
        let edges = self.edges();
        (0..self.n_bins)
            .map(|i| bin_center(edges[i], edges[i + 1], self.binning))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridCell {
    pub x_bin: u32,
    pub y_bin: u32,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub x: AxisSpec,
    pub y: AxisSpec,
    /// Non-empty cells, sorted by (x_bin, y_bin).
    pub cells: Vec<GridCell>,
    /// Points whose coordinate fell outside an explicit axis range; they are
    /// counted into the nearest edge bin.
    pub clipped_x: u64,
    pub clipped_y: u64,
    pub total: u64,
}

/// Joint occupancy counts of (x, y) pairs over two axes.
pub fn density_grid(x: &[f64], y: &[f64], x_axis: AxisSpec, y_axis: AxisSpec) -> Result<DensityGrid> {
    if x.len() != y.len() {
        return Err(Error::Config(format!(
            "x has {} values but y has {}",
            x.len(),
            y.len()
        )));
    }
    check_finite(x, y)?;
    let xi = x_axis.edges();
    let yi = y_axis.edges();
    let x_interior = &xi[1..x_axis.n_bins];
    let y_interior = &yi[1..y_axis.n_bins];

    let mut cells: BTreeMap<(u32, u32), u64> = BTreeMap::new();
    let mut clipped_x = 0u64;
    let mut clipped_y = 0u64;
    let clip = |v: f64, axis: &AxisSpec, interior: &[f64], clipped: &mut u64| -> usize {
        if v < axis.min {
            *clipped += 1;
            0
        } else if v > axis.max {
            *clipped += 1;
            axis.n_bins - 1
        } else {
            bin_index(interior, v)
        }
    };
    for (&xv, &yv) in x.iter().zip(y) {
        let bx = clip(xv, &x_axis, x_interior, &mut clipped_x) as u32;
        let by = clip(yv, &y_axis, y_interior, &mut clipped_y) as u32;
        *cells.entry((bx, by)).or_insert(0) += 1;
    }
    Ok(DensityGrid {
        x: x_axis,
        y: y_axis,
        cells: cells
            .into_iter()
            .map(|((x_bin, y_bin), count)| GridCell { x_bin, y_bin, count })
            .collect(),
        clipped_x,
        clipped_y,
        total: x.len() as u64,
    })
}

pub fn write_curve_csv(path: &Path, rows: &[CurveRow]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    let io = |e| Error::io(path, e);
    writeln!(w, "{CURVE_HEADER}").map_err(io)?;
    for r in rows {
        let mean = r.mean.map_or(String::new(), |v| format!("{v:.6}"));
        let std = r.std.map_or(String::new(), |v| format!("{v:.6}"));
        writeln!(
            w,
            "{:.6},{:.6},{:.6},{},{},{}",
            r.low, r.high, r.center, mean, std, r.count
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn write_density_csv(path: &Path, grid: &DensityGrid) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(f);
    let io = |e| Error::io(path, e);
    writeln!(w, "{DENSITY_HEADER}").map_err(io)?;
    let xc = grid.x.centers();
    let yc = grid.y.centers();
    for c in &grid.cells {
        writeln!(
            w,
            "{},{},{:.6},{:.6},{}",
            c.x_bin, c.y_bin, xc[c.x_bin as usize], yc[c.y_bin as usize], c.count
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

/// Streaming sha256 of a file, as (lowercase hex, byte length).
pub fn sha256_file(path: &Path) -> Result<(String, u64)> {
    let mut f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut total = 0u64;
    loop {
        let n = f.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        total += n as u64;
    }
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    use std::fmt::Write as _;
    for byte in digest.iter() {
        let _ = write!(hex, "{byte:02x}");
    }
    Ok((hex, total))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub format: Format,
    /// Explicit (t_topics, t_pages); population means when absent.
    pub thresholds: Option<(f64, f64)>,
    pub curve_bins: usize,
    pub gini_axis_bins: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            format: Format::Csv,
            thresholds: None,
            curve_bins: DEFAULT_CURVE_BINS,
            gini_axis_bins: DEFAULT_GINI_AXIS_BINS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DataCounts {
    pub n_users: u64,
    pub n_posts: u64,
    pub n_pages: u64,
    pub n_topics: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptionsEcho {
    pub format: String,
    pub curve_bins: usize,
    pub gini_axis_bins: usize,
    pub thresholds_requested: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ManifestOutput {
    pub file: String,
    pub rows: u64,
}

/// Summary of one pipeline run. Deliberately free of anything machine- or
/// run-specific (paths of outputs, times, thread counts), so identical inputs
/// give an identical manifest.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub inputs: Vec<InputDigest>,
    pub ingest: IngestStats,
    pub counts: DataCounts,
    pub options: OptionsEcho,
    pub topics_present: bool,
    pub users_with_topic_scores: u64,
    /// Users left out of lifetime curves because first and last like
    /// coincide.
    pub users_zero_lifetime: u64,
    pub thresholds: Option<TaxonomyThresholds>,
    pub outputs: Vec<ManifestOutput>,
}

#[derive(Debug)]
pub struct PipelineOutcome {
    pub manifest: Manifest,
    pub profiles: Vec<UserProfile>,
}

struct CleanupGuard {
    paths: Vec<PathBuf>,
    armed: bool,
}

impl CleanupGuard {
    fn new() -> Self {
        CleanupGuard {
            paths: Vec::new(),
            armed: true,
        }
    }

    fn register(&mut self, p: &Path) {
        self.paths.push(p.to_path_buf());
    }

    fn disarm(&mut self) {
        self.armed = false;
    }
}

impl Drop for CleanupGuard {
    fn drop(&mut self) {
        if self.armed {
            for p in &self.paths {
                let _ = std::fs::remove_file(p);
            }
        }
    }
}

/// Runs ingest, profiling, classification and all report outputs into
/// `out_dir`, returning the manifest. On error, files already written by this
/// run are removed so a failed run leaves no partial report behind.
pub fn run_pipeline(
    interactions: &Path,
    posts: &Path,
    topics: Option<&Path>,
    out_dir: &Path,
    options: &PipelineOptions,
) -> Result<PipelineOutcome> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut guard = CleanupGuard::new();
    let outcome = run_pipeline_inner(interactions, posts, topics, out_dir, options, &mut guard)?;
    guard.disarm();
    Ok(outcome)
}

fn run_pipeline_inner(
    interactions: &Path,
    posts: &Path,
    topics: Option<&Path>,
    out_dir: &Path,
    options: &PipelineOptions,
    guard: &mut CleanupGuard,
) -> Result<PipelineOutcome> {
    let explicit_thresholds = options
        .thresholds
        .map(|(t, p)| TaxonomyThresholds::explicit(t, p))
        .transpose()?;

    let mut inputs = Vec::new();
    for path in [Some(interactions), Some(posts), topics].into_iter().flatten() {
        let (sha256, bytes) = sha256_file(path)?;
        inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256,
            bytes,
        });
    }

    let ds = Dataset::load(interactions, posts, topics, options.format)?;
    let bip = build_structures(&ds)?;
    let profiles = compute_profiles(&ds, &bip)?;
    let mut outputs = Vec::new();

    let profiles_path = out_dir.join("profiles.csv");
    guard.register(&profiles_path);
    write_profiles_csv(&profiles_path, &profiles, &ds.index.users)?;
    outputs.push(ManifestOutput {
        file: "profiles.csv".to_string(),
        rows: profiles.len() as u64,
    });

    let users_with_topic_scores =
        profiles.iter().filter(|p| p.gini_topics.is_some()).count() as u64;
    let users_zero_lifetime =
        profiles.iter().filter(|p| p.lifetime_days <= 0.0).count() as u64;

    let write_curve = |name: &str, series: Vec<(f64, f64)>, guard: &mut CleanupGuard| -> Result<Option<ManifestOutput>> {
        if series.is_empty() {
            return Ok(None);
        }
        let (x, y): (Vec<f64>, Vec<f64>) = series.into_iter().unzip();
        let rows = binned_average(&x, &y, Binning::Log, options.curve_bins)?;
        let path = out_dir.join(name);
        guard.register(&path);
        write_curve_csv(&path, &rows)?;
        Ok(Some(ManifestOutput {
            file: name.to_string(),
            rows: rows.len() as u64,
        }))
    };

    let curve_specs: [(&str, Box<dyn Fn(&UserProfile) -> Option<(f64, f64)>>); 4] = [
        (
            "curve_activity_pages.csv",
            Box::new(|p| Some((p.activity as f64, p.n_pages as f64))),
        ),
        (
            "curve_activity_topics.csv",
            Box::new(|p| p.n_topics.map(|t| (p.activity as f64, t as f64))),
        ),
        (
            "curve_lifetime_pages.csv",
            Box::new(|p| (p.lifetime_days > 0.0).then_some((p.lifetime_days, p.n_pages as f64))),
        ),
        (
            "curve_lifetime_topics.csv",
            Box::new(|p| match p.n_topics {
                Some(t) if p.lifetime_days > 0.0 => Some((p.lifetime_days, t as f64)),
                _ => None,
            }),
        ),
    ];
    for (name, select) in &curve_specs {
        let series: Vec<(f64, f64)> = profiles.iter().filter_map(|p| select(p)).collect();
        if let Some(out) = write_curve(name, series, guard)? {
            outputs.push(out);
        }
    }

    let gini_axis = AxisSpec::new(Binning::Linear, 0.0, 1.0, options.gini_axis_bins)?;
    let density_specs: [(&str, Box<dyn Fn(&UserProfile) -> Option<(f64, f64)>>, bool); 5] = [
        (
            "density_activity_gini_topics.csv",
            Box::new(|p: &UserProfile| p.gini_topics.map(|g| (p.activity as f64, g))),
            true,
        ),
        (
            "density_lifetime_gini_topics.csv",
            Box::new(|p: &UserProfile| match p.gini_topics {
                Some(g) if p.lifetime_days > 0.0 => Some((p.lifetime_days, g)),
                _ => None,
            }),
            true,
        ),
        (
            "density_activity_gini_pages_norm.csv",
            Box::new(|p: &UserProfile| Some((p.activity as f64, p.gini_pages_norm))),
            true,
        ),
        (
            "density_lifetime_gini_pages_norm.csv",
            Box::new(|p: &UserProfile| {
                (p.lifetime_days > 0.0).then_some((p.lifetime_days, p.gini_pages_norm))
            }),
            true,
        ),
        (
            "density_gini_pages_norm_gini_topics.csv",
            Box::new(|p: &UserProfile| p.gini_topics.map(|g| (p.gini_pages_norm, g))),
            false,
        ),
    ];
    for (name, select, log_x) in &density_specs {
        let series: Vec<(f64, f64)> = profiles.iter().filter_map(|p| select(p)).collect();
        if series.is_empty() {
            continue;
        }
        let (x, y): (Vec<f64>, Vec<f64>) = series.into_iter().unzip();
        let x_axis = if *log_x {
            AxisSpec::from_data(Binning::Log, &x, options.curve_bins)?
        } else {
            gini_axis
        };
        let grid = density_grid(&x, &y, x_axis, gini_axis)?;
        let path = out_dir.join(name);
        guard.register(&path);
        write_density_csv(&path, &grid)?;
        outputs.push(ManifestOutput {
            file: name.to_string(),
            rows: grid.cells.len() as u64,
        });
    }

    let mut thresholds_used = None;
    if users_with_topic_scores > 0 {
        let classification = classify_population(&profiles, explicit_thresholds)?;
        thresholds_used = Some(classification.thresholds);
        let tax_path = out_dir.join("taxonomy.csv");
        guard.register(&tax_path);
        write_taxonomy_csv(&classification, ds.index.users.tokens(), &tax_path)?;
        outputs.push(ManifestOutput {
            file: "taxonomy.csv".to_string(),
            rows: classification.rows.len() as u64,
        });
        let sum_path = out_dir.join("taxonomy_summary.json");
        guard.register(&sum_path);
        write_taxonomy_summary(&classification, &sum_path)?;
        outputs.push(ManifestOutput {
            file: "taxonomy_summary.json".to_string(),
            rows: 1,
        });
    }

    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME").to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        inputs,
        ingest: ds.stats.clone(),
        counts: DataCounts {
            n_users: ds.n_users() as u64,
            n_posts: ds.n_posts() as u64,
            n_pages: ds.n_pages() as u64,
            n_topics: ds.n_topics().map(|k| k as u64),
        },
        options: OptionsEcho {
            format: match options.format {
                Format::Csv => "csv".to_string(),
                Format::Jsonl => "jsonl".to_string(),
            },
            curve_bins: options.curve_bins,
            gini_axis_bins: options.gini_axis_bins,
            thresholds_requested: options.thresholds,
        },
        topics_present: ds.mixtures.is_some(),
        users_with_topic_scores,
        users_zero_lifetime,
        thresholds: thresholds_used,
        outputs,
    };
    let manifest_path = out_dir.join("manifest.json");
    guard.register(&manifest_path);
    let json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::Config(format!("manifest serialization failed: {e}")))?;
    std::fs::write(&manifest_path, json + "\n").map_err(|e| Error::io(&manifest_path, e))?;

    Ok(PipelineOutcome { manifest, profiles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, ActivityLaw, SynthConfig};

    #[test]
    fn linear_binning_hand_case() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.0, 10.0, 20.0, 30.0];
        let rows = binned_average(&x, &y, Binning::Linear, 2).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].low, 0.0);
        assert_eq!(rows[0].high, 1.5);
        assert_eq!(rows[0].center, 0.75);
        assert_eq!(rows[0].count, 2);
        assert_eq!(rows[0].mean, Some(5.0));
        assert_eq!(rows[1].count, 2);
        assert_eq!(rows[1].mean, Some(25.0));
    }

    #[test]
    fn boundary_values_take_the_upper_bin_except_the_last() {
        let x = [0.0, 1.0, 2.0];
        let y = [1.0, 1.0, 1.0];
        let rows = binned_average(&x, &y, Binning::Linear, 2).unwrap();
        // 1.0 sits on the interior edge and belongs to the second bin; 2.0 is
        // the global max and stays in the last bin
        assert_eq!(rows[0].count, 1);
        assert_eq!(rows[1].count, 2);
    }

    #[test]
    fn log_binning_uses_geometric_centers() {
        let x = [1.0, 10.0, 100.0];
        let y = [5.0, 7.0, 9.0];
        let rows = binned_average(&x, &y, Binning::Log, 2).unwrap();
        assert!((rows[0].low - 1.0).abs() < 1e-12);
        assert!((rows[0].high - 10.0).abs() < 1e-9);
        assert!((rows[0].center - 10f64.sqrt()).abs() < 1e-9);
        assert!((rows[1].center - 1000f64.sqrt()).abs() < 1e-6);
        assert_eq!(rows[0].count, 1);
        assert_eq!(rows[1].count, 2);
    }

    #[test]
    fn constant_x_collapses_to_one_bin() {
        let rows =
            binned_average(&[5.0, 5.0, 5.0], &[1.0, 2.0, 3.0], Binning::Log, 7).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].count, 3);
        assert_eq!(rows[0].mean, Some(2.0));
        let expected_std = (2.0f64 / 3.0).sqrt();
        assert!((rows[0].std.unwrap() - expected_std).abs() < 1e-12);
    }

    #[test]
    fn population_std_within_a_bin() {
        let rows = binned_average(&[0.0, 1.0], &[1.0, 3.0], Binning::Linear, 1).unwrap();
        assert_eq!(rows[0].mean, Some(2.0));
        assert!((rows[0].std.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn binning_input_validation() {
        assert!(matches!(
            binned_average(&[], &[], Binning::Linear, 4).unwrap_err(),
            Error::EmptyBinning
        ));
        assert!(matches!(
            binned_average(&[1.0], &[1.0], Binning::Linear, 0).unwrap_err(),
            Error::EmptyBinning
        ));
        assert!(matches!(
            binned_average(&[1.0, 2.0], &[1.0], Binning::Linear, 2).unwrap_err(),
            Error::Config(_)
        ));
        assert!(matches!(
            binned_average(&[1.0, f64::NAN], &[1.0, 1.0], Binning::Linear, 2).unwrap_err(),
            Error::NonFinite { count: 1 }
        ));
        assert!(matches!(
            binned_average(&[0.0, 2.0], &[1.0, 1.0], Binning::Log, 2).unwrap_err(),
            Error::NonPositiveLogValue { .. }
        ));
    }

    #[test]
    fn empty_bins_have_no_mean() {
        let rows = binned_average(&[0.0, 10.0], &[1.0, 2.0], Binning::Linear, 5).unwrap();
        assert_eq!(rows.len(), 5);
        assert_eq!(rows[1].count, 0);
        assert_eq!(rows[1].mean, None);
        assert_eq!(rows[1].std, None);
    }

    #[test]
    fn axis_validation() {
        assert!(matches!(
            AxisSpec::new(Binning::Linear, 5.0, 5.0, 3).unwrap_err(),
            Error::ZeroResolution
        ));
        assert!(AxisSpec::new(Binning::Linear, 5.0, 5.0, 1).is_ok());
        assert!(matches!(
            AxisSpec::new(Binning::Log, 0.0, 1.0, 3).unwrap_err(),
            Error::NonPositiveLogValue { .. }
        ));
        let degenerate = AxisSpec::from_data(Binning::Linear, &[2.0, 2.0], 9).unwrap();
        assert_eq!(degenerate.n_bins, 1);
    }

    #[test]
    fn density_counts_and_clipping() {
        let x_axis = AxisSpec::new(Binning::Linear, 0.0, 10.0, 2).unwrap();
        let y_axis = AxisSpec::new(Binning::Linear, 0.0, 1.0, 2).unwrap();
        let x = [0.0, 10.0, 5.0, -1.0];
        let y = [0.0, 1.0, 0.4, 2.0];
        let grid = density_grid(&x, &y, x_axis, y_axis).unwrap();
        assert_eq!(grid.total, 4);
        assert_eq!(grid.clipped_x, 1);
        assert_eq!(grid.clipped_y, 1);
        let get = |bx, by| {
            grid.cells
                .iter()
                .find(|c| c.x_bin == bx && c.y_bin == by)
                .map(|c| c.count)
        };
        // (0,0) in the low cell; (10,1) takes both upper edges; (5,0.4) sits
        // on the interior x edge, so upper x bin, lower y bin; (-1,2) clips
        // both ways
        assert_eq!(get(0, 0), Some(1));
        assert_eq!(get(1, 1), Some(1));
        assert_eq!(get(1, 0), Some(1));
        assert_eq!(get(0, 1), Some(1));
        let counted: u64 = grid.cells.iter().map(|c| c.count).sum();
        assert_eq!(counted, 4);
    }

    #[test]
    fn curve_csv_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("curve.csv");
        let rows = vec![
            CurveRow {
                low: 1.0,
                high: 2.0,
                center: 1.5,
                mean: Some(3.25),
                std: Some(0.5),
                count: 4,
            },
            CurveRow {
                low: 2.0,
                high: 4.0,
                center: 3.0,
                mean: None,
                std: None,
                count: 0,
            },
        ];
        write_curve_csv(&path, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CURVE_HEADER);
        assert_eq!(
            lines.next().unwrap(),
            "1.000000,2.000000,1.500000,3.250000,0.500000,4"
        );
        assert_eq!(lines.next().unwrap(), "2.000000,4.000000,3.000000,,,0");
    }

    #[test]
    fn density_csv_format() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("density.csv");
        let x_axis = AxisSpec::new(Binning::Linear, 0.0, 2.0, 2).unwrap();
        let y_axis = AxisSpec::new(Binning::Linear, 0.0, 1.0, 1).unwrap();
        let grid = density_grid(&[0.5, 1.5, 1.5], &[0.5, 0.5, 0.6], x_axis, y_axis).unwrap();
        write_density_csv(&path, &grid).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), DENSITY_HEADER);
        assert_eq!(lines.next().unwrap(), "0,0,0.500000,0.500000,1");
        assert_eq!(lines.next().unwrap(), "1,0,1.500000,0.500000,2");
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blob");
        std::fs::write(&path, b"hello").unwrap();
        let (h1, n1) = sha256_file(&path).unwrap();
        assert_eq!(n1, 5);
        assert_eq!(
            h1,
            "2cf24dba5fb0a30e26e83b2ac5b9e29e1b161e5c1fa7425e73043362938b9824"
        );
        std::fs::write(&path, b"hello!").unwrap();
        let (h2, _) = sha256_file(&path).unwrap();
        assert_ne!(h1, h2);
    }

    fn tiny_synth_inputs(dir: &Path) -> (PathBuf, PathBuf, PathBuf) {
        let cfg = SynthConfig {
            n_users: 30,
            n_pages: 4,
            n_posts: 120,
            n_topics: 3,
            loyalty: 0.6,
            topic_concentration: 0.8,
            activity: ActivityLaw::Constant(8),
            time_horizon_days: 30.0,
            seed: 11,
        };
        let paths = generate(&cfg).unwrap().write_dataset(dir).unwrap();
        (paths.interactions, paths.posts, paths.topics)
    }

    #[test]
    fn pipeline_writes_full_report() {
        let dir = tempfile::tempdir().unwrap();
        let (inter, posts, topics) = tiny_synth_inputs(&dir.path().join("in"));
        let out = dir.path().join("out");
        let outcome = run_pipeline(
            &inter,
            &posts,
            Some(&topics),
            &out,
            &PipelineOptions::default(),
        )
        .unwrap();
        assert_eq!(outcome.profiles.len(), 30);
        for name in [
            "profiles.csv",
            "taxonomy.csv",
            "taxonomy_summary.json",
            "curve_activity_pages.csv",
            "curve_activity_topics.csv",
            "curve_lifetime_pages.csv",
            "curve_lifetime_topics.csv",
            "density_activity_gini_topics.csv",
            "density_lifetime_gini_topics.csv",
            "density_activity_gini_pages_norm.csv",
            "density_lifetime_gini_pages_norm.csv",
            "density_gini_pages_norm_gini_topics.csv",
            "manifest.json",
        ] {
            assert!(out.join(name).is_file(), "missing {name}");
        }
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["counts"]["n_users"], 30);
        assert_eq!(manifest["topics_present"], true);
        assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
        assert!(manifest["thresholds"]["t_topics"].is_f64());
    }

    #[test]
    fn pipeline_without_topics_degrades() {
        let dir = tempfile::tempdir().unwrap();
        let (inter, posts, _) = tiny_synth_inputs(&dir.path().join("in"));
        let out = dir.path().join("out");
        run_pipeline(&inter, &posts, None, &out, &PipelineOptions::default()).unwrap();
        assert!(out.join("profiles.csv").is_file());
        assert!(out.join("curve_activity_pages.csv").is_file());
        assert!(!out.join("taxonomy.csv").exists());
        assert!(!out.join("curve_activity_topics.csv").exists());
        assert!(!out.join("density_activity_gini_topics.csv").exists());
        let manifest: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["topics_present"], false);
        assert_eq!(manifest["users_with_topic_scores"], 0);
        assert!(manifest["thresholds"].is_null());
    }

    #[test]
    fn failed_pipeline_cleans_up_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let (inter, posts, topics) = tiny_synth_inputs(&dir.path().join("in"));
        let out = dir.path().join("out");
        // a directory where taxonomy.csv should go forces a late write failure
        std::fs::create_dir_all(out.join("taxonomy.csv")).unwrap();
        let err = run_pipeline(
            &inter,
            &posts,
            Some(&topics),
            &out,
            &PipelineOptions::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
        assert!(!out.join("profiles.csv").exists());
        assert!(!out.join("curve_activity_pages.csv").exists());
        assert!(!out.join("manifest.json").exists());
    }

    #[test]
    fn explicit_thresholds_are_validated_before_any_output() {
        let dir = tempfile::tempdir().unwrap();
        let (inter, posts, topics) = tiny_synth_inputs(&dir.path().join("in"));
        let out = dir.path().join("out");
        let options = PipelineOptions {
            thresholds: Some((1.5, 0.5)),
            ..Default::default()
        };
        assert!(run_pipeline(&inter, &posts, Some(&topics), &out, &options).is_err());
        assert!(!out.join("profiles.csv").exists());
    }
}
