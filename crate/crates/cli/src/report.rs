//! Machine-readable outputs: CSV tables, JSON reports, and the rendered
//! SVG figures. Every writer returns the paths it created so commands can
//! list them on the console.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use csilab_core::{CorrelationReport, SweepTable};

use crate::config::ExperimentConfig;
use crate::error::{Error, Result};
use crate::experiment::{ExperimentReport, ResultRecord};
use crate::svg::{interval_chart, line_chart, IntervalItem, PlotPoint, Series};

pub fn write_text(path: &Path, content: &str) -> Result<PathBuf> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, content)?;
    Ok(path.to_path_buf())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Report(format!("JSON serialization failed: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

/// The records table, one CSV row per successful cell.
pub fn records_csv(records: &[ResultRecord]) -> String {
    let mut out = String::from(ResultRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

/// Merges per-plane correlation reports into one table under a single
/// header.
pub fn corr_csv(reports: &[CorrelationReport]) -> String {
    let mut out = String::new();
    for (i, r) in reports.iter().enumerate() {
        let csv = r.to_csv();
        if i == 0 {
            out.push_str(&csv);
        } else if let Some((_, rows)) = csv.split_once('\n') {
            out.push_str(rows);
        }
    }
    out
}

/// The JSON payload of an `experiment` run: the config that produced it
/// plus every record and divergence.
#[derive(Serialize)]
struct ExperimentJson<'a> {
    config: &'a ExperimentConfig,
    records: &'a [ResultRecord],
    divergences: &'a [crate::experiment::DivergenceRecord],
}

/// Writes `records.csv`, `report.json` and (optionally) one NMSE figure
/// per protocol variant.
pub fn write_experiment_outputs(
    dir: &Path,
    cfg: &ExperimentConfig,
    report: &ExperimentReport,
    plot: bool,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    written.push(write_text(&dir.join("records.csv"), &records_csv(&report.records))?);
    written.push(write_json(
        &dir.join("report.json"),
        &ExperimentJson {
            config: cfg,
            records: &report.records,
            divergences: &report.divergences,
        },
    )?);
    if plot && !report.records.is_empty() {
        let svg = nmse_vs_cr_chart(&report.records);
        written.push(write_text(&dir.join("nmse_vs_cr.svg"), &svg)?);
    }
    Ok(written)
}

/// NMSE against compression ratio, one line per `(codec, variant)`,
/// seeds averaged. Cells with non-finite NMSE (exact reconstructions)
/// cannot be placed on a dB axis and are left out of the figure; they
/// stay in the CSV.
fn nmse_vs_cr_chart(records: &[ResultRecord]) -> String {
    // Group on (codec, variant), then on cr; BTreeMap keeps the legend
    // and the x-order stable.
    let mut groups: BTreeMap<(String, String), BTreeMap<u64, Vec<f64>>> = BTreeMap::new();
    for r in records {
        if !r.nmse_db.is_finite() {
            continue;
        }
        groups
            .entry((r.codec.clone(), r.variant.clone()))
            .or_default()
            .entry(r.cr.to_bits())
            .or_default()
            .push(r.nmse_db);
    }
    let series: Vec<Series> = groups
        .into_iter()
        .map(|((codec, variant), by_cr)| Series {
            label: format!("{codec} ({variant})"),
            points: by_cr
                .into_iter()
                .map(|(bits, vals)| PlotPoint {
                    x: f64::from_bits(bits),
                    y: vals.iter().sum::<f64>() / vals.len() as f64,
                    band: None,
                })
                .collect(),
        })
        .collect();
    line_chart(
        "NMSE vs compression ratio",
        "compression ratio",
        "NMSE (dB)",
        &series,
    )
}

/// Writes `corr.csv`, `corr.json` and (optionally) the per-plane median
/// figure with the widest available percentile band.
pub fn write_corr_outputs(
    dir: &Path,
    reports: &[CorrelationReport],
    plot: bool,
) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    written.push(write_text(&dir.join("corr.csv"), &corr_csv(reports))?);
    written.push(write_json(&dir.join("corr.json"), &reports)?);
    if plot && !reports.is_empty() {
        let items: Vec<IntervalItem> = reports
            .iter()
            .map(|r| IntervalItem {
                label: r.plane.name().to_string(),
                value: r.median,
                band: r
                    .ci
                    .iter()
                    .max_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
                    .map(|&(_, lo, hi)| (lo, hi)),
            })
            .collect();
        let svg = interval_chart(
            "Uplink/downlink delay-domain correlation by plane",
            "Pearson correlation",
            &items,
        );
        written.push(write_text(&dir.join("corr.svg"), &svg)?);
    }
    Ok(written)
}

/// Writes `sweep.csv`, `sweep.json` and (optionally) the two profile
/// figures: correlation against gap (one line per bandwidth) and against
/// bandwidth (one line per gap).
pub fn write_sweep_outputs(dir: &Path, table: &SweepTable, plot: bool) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    written.push(write_text(&dir.join("sweep.csv"), &table.to_csv())?);
    written.push(write_json(&dir.join("sweep.json"), table)?);
    if plot && !table.points.is_empty() {
        let mut bandwidths: Vec<f64> = table.points.iter().map(|p| p.bandwidth_hz).collect();
        bandwidths.sort_by(|a, b| a.partial_cmp(b).unwrap());
        bandwidths.dedup();
        let gap_series: Vec<Series> = bandwidths
            .iter()
            .map(|&bw| Series {
                label: format!("BW {}", crate::svg::label_hz(bw)),
                points: table
                    .gap_profile(bw)
                    .iter()
                    .map(|p| PlotPoint {
                        x: p.band_gap_hz,
                        y: p.mean_corr,
                        band: Some((p.ci95_low, p.ci95_high)),
                    })
                    .collect(),
            })
            .collect();
        written.push(write_text(
            &dir.join("corr_vs_gap.svg"),
            &line_chart(
                "Magnitude correlation vs band gap",
                "band gap (Hz)",
                "mean correlation",
                &gap_series,
            ),
        )?);

        let mut gaps: Vec<f64> = table.points.iter().map(|p| p.band_gap_hz).collect();
        gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        gaps.dedup();
        let bw_series: Vec<Series> = gaps
            .iter()
            .map(|&gap| Series {
                label: format!("gap {}", crate::svg::label_hz(gap)),
                points: table
                    .bandwidth_profile(gap)
                    .iter()
                    .map(|p| PlotPoint {
                        x: p.bandwidth_hz,
                        y: p.mean_corr,
                        band: Some((p.ci95_low, p.ci95_high)),
                    })
                    .collect(),
            })
            .collect();
        written.push(write_text(
            &dir.join("corr_vs_bandwidth.svg"),
            &line_chart(
                "Magnitude correlation vs bandwidth",
                "bandwidth (Hz)",
                "mean correlation",
                &bw_series,
            ),
        )?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use csilab_core::{CsiPlane, SweepPoint};

    fn record(codec: &str, cr: f64, nmse: f64) -> ResultRecord {
        ResultRecord {
            codec: codec.into(),
            variant: "baseline".into(),
            cr,
            band_gap_hz: 180e6,
            bandwidth_hz: 20e6,
            seed: 1,
            nmse_db: nmse,
            mag_nmse_db: nmse,
            complex_nmse_db: nmse,
            rho: 0.9,
            payload_floats: 64.0,
            payload_bits: 2048.0,
            epochs_run: 5,
            best_epoch: 4,
            best_loss: 1e-3,
            n_test: 10,
            flagged: nmse > 0.0,
        }
    }

    #[test]
    fn records_csv_has_header_plus_one_row_per_record() {
        let csv = records_csv(&[record("csinet", 0.25, -8.0), record("csinet", 0.125, -6.0)]);
        let lines: Vec<&str> = csv.trim_end().lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("codec,variant,cr,"));
        assert!(lines[1].starts_with("csinet,baseline,0.25,"));
    }

    #[test]
    fn corr_csv_merges_reports_under_one_header() {
        let r = CorrelationReport {
            plane: CsiPlane::Magnitude,
            ld: 8,
            n_samples: 4,
            n_skipped: 0,
            mean: 0.8,
            median: 0.82,
            ci: vec![],
            per_sample: vec![0.8; 4],
        };
        let mut r2 = r.clone();
        r2.plane = CsiPlane::Real;
        let csv = corr_csv(&[r, r2]);
        assert_eq!(csv.matches("plane,ld,n,").count(), 1);
        assert!(csv.contains("\nreal,"));
    }

    #[test]
    fn experiment_outputs_land_in_the_requested_directory() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig::new(crate::config::Scenario::Indoor);
        let report = ExperimentReport {
            records: vec![record("csinet", 0.25, -8.0)],
            divergences: vec![],
        };
        let written = write_experiment_outputs(dir.path(), &cfg, &report, true).unwrap();
        assert_eq!(written.len(), 3);
        let json = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
        assert!(json.contains("\"nmse_db\": \"-8.000000\""));
        assert!(json.contains("\"scenario\""));
        let svg = std::fs::read_to_string(dir.path().join("nmse_vs_cr.svg")).unwrap();
        assert!(svg.contains("csinet (baseline)"));
    }

    #[test]
    fn sweep_outputs_render_both_profiles() {
        let dir = tempfile::tempdir().unwrap();
        let table = SweepTable {
            ld: 8,
            points: vec![
                SweepPoint {
                    band_gap_hz: 50e6,
                    bandwidth_hz: 20e6,
                    mean_corr: 0.8,
                    ci95_low: 0.75,
                    ci95_high: 0.85,
                    n_samples: 40,
                },
                SweepPoint {
                    band_gap_hz: 100e6,
                    bandwidth_hz: 20e6,
                    mean_corr: 0.7,
                    ci95_low: 0.65,
                    ci95_high: 0.75,
                    n_samples: 40,
                },
            ],
        };
        let written = write_sweep_outputs(dir.path(), &table, true).unwrap();
        assert_eq!(written.len(), 4);
        assert!(dir.path().join("corr_vs_gap.svg").exists());
        assert!(dir.path().join("corr_vs_bandwidth.svg").exists());
    }
}
