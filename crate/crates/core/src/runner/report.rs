use std::fmt::Write;
use std::path::Path;

use serde::Serialize;

use super::{load_results, to_json, write_file, RunError, RunIndex, REPORT_DIR};
use crate::analytics::{
    build_transfer_matrix, channel_maps, level_summary, level_table, render_map_svg, scaling_regression,
    AnalyticsError, ChannelMap, LevelRow, LevelSummary, Metric, OlsFit, TransferMatrix,
};
use crate::eval::Regime;
use crate::montage::build_reference_montage;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingRow {
    pub regime: Regime,
    pub metric: Metric,
    /// `None` when the design is insufficient or degenerate.
    pub fit: Option<OlsFit>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummaryRow {
    pub regime: Regime,
    pub metric: Metric,
    #[serde(flatten)]
    pub summary: LevelSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportData {
    pub populations: Vec<String>,
    pub level_rows: Vec<(Metric, LevelRow)>,
    pub level_summaries: Vec<LevelSummaryRow>,
    pub transfer: Vec<TransferMatrix>,
    pub scaling: Vec<ScalingRow>,
    pub channel_maps: Vec<ChannelMap>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "N/A".to_string(), |x| format!("{x:.4}"))
}

const REPORT_METRICS: [Metric; 4] = Metric::ALL;

fn build(index: &RunIndex, results: &[crate::eval::EvaluationResult]) -> Result<ReportData, RunError> {
    let pops = &index.populations;
    let mut level_rows = Vec::new();
    let mut level_summaries = Vec::new();
    let mut scaling = Vec::new();
    for metric in REPORT_METRICS {
        for row in level_table(results, pops, &index.regimes, metric) {
            level_rows.push((metric, row));
        }
        for &regime in &index.regimes {
            for summary in level_summary(results, regime, metric) {
                level_summaries.push(LevelSummaryRow {
                    regime,
                    metric,
                    summary,
                });
            }
            let (fit, note) = match scaling_regression(results, regime, metric) {
                Ok(f) => (Some(f), "ok".to_string()),
                Err(AnalyticsError::InsufficientDesign(m)) => (None, format!("insufficient: {m}")),
                Err(e) => (None, e.to_string()),
            };
            scaling.push(ScalingRow {
                regime,
                metric,
                fit,
                note,
            });
        }
    }
    let mut transfer = Vec::new();
    for &regime in &index.regimes {
        match build_transfer_matrix(results, pops, regime, Metric::Accuracy) {
            Ok(m) => transfer.push(m),
            Err(AnalyticsError::MissingPlan { .. }) => {
                log::warn!("no single-population plans for {regime}; transfer matrix skipped");
                break;
            }
            Err(e) => return Err(RunError::Report(e.to_string())),
        }
    }
    Ok(ReportData {
        populations: pops.clone(),
        level_rows,
        level_summaries,
        transfer,
        scaling,
        channel_maps: channel_maps(results, pops),
    })
}

/// Builds every report table from a completed run directory and writes
/// them as TSV plus JSON under `<dir>/report`.
pub fn report(dir: &Path) -> Result<ReportData, RunError> {
    let (index, results) = load_results(dir)?;
    let data = build(&index, &results)?;
    let out = dir.join(REPORT_DIR);
    let montage = build_reference_montage();

    let mut t = String::from("metric\ttest_population\tlevel\tregime\tn_plans\tmean\tsd\n");
    for (m, r) in &data.level_rows {
        let _ = writeln!(
            t,
            "{m}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.test_population,
            r.level,
            r.regime,
            r.n_plans,
            opt(r.mean),
            opt(r.sd)
        );
    }
    write_file(&out.join("level_table.tsv"), &t)?;
    write_file(&out.join("level_table.json"), &to_json(&data.level_rows))?;

    let mut t = String::from("metric\tregime\tlevel\tn_plans\tmean\tsd\n");
    for r in &data.level_summaries {
        let s = &r.summary;
        let _ = writeln!(
            t,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.metric,
            r.regime,
            s.level,
            s.n_plans,
            opt(s.mean),
            opt(s.sd)
        );
    }
    write_file(&out.join("level_summary.tsv"), &t)?;
    write_file(&out.join("level_summary.json"), &to_json(&data.level_summaries))?;

    for m in &data.transfer {
        write_file(&out.join(format!("transfer_{}.tsv", m.regime)), &m.to_tsv())?;
        write_file(&out.join(format!("transfer_{}.json", m.regime)), &to_json(m))?;
    }

    let mut t = String::from(
        "regime\tmetric\tn\tslope\tslope_lo\tslope_hi\tintercept\tintercept_lo\tintercept_hi\tnote\n",
    );
    for r in &data.scaling {
        match &r.fit {
            Some(f) => {
                let _ = writeln!(
                    t,
                    "{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}",
                    r.regime,
                    r.metric,
                    f.n,
                    f.slope,
                    f.slope_ci[0],
                    f.slope_ci[1],
                    f.intercept,
                    f.intercept_ci[0],
                    f.intercept_ci[1],
                    r.note
                );
            }
            None => {
                let _ = writeln!(t, "{}\t{}\tN/A\tN/A\tN/A\tN/A\tN/A\tN/A\tN/A\t{}", r.regime, r.metric, r.note);
            }
        }
    }
    write_file(&out.join("scaling.tsv"), &t)?;
    write_file(&out.join("scaling.json"), &to_json(&data.scaling))?;

    let mut t = String::from("population\tindex\tlabel\tsolo_count\tmixed_count\tsolo\tmixed\tdifference\n");
    for map in &data.channel_maps {
        for c in 0..montage.len() {
            let _ = writeln!(
                t,
                "{}\t{c}\t{}\t{}\t{}\t{:.4}\t{:.4}\t{:.4}",
                map.population,
                montage.label(c),
                map.solo_counts[c],
                map.mixed_counts[c],
                map.solo[c],
                map.mixed[c],
                map.difference[c]
            );
        }
        for (kind, values, limits) in [
            ("solo", &map.solo, [0.0, 1.0]),
            ("mixed", &map.mixed, [0.0, 1.0]),
            ("difference", &map.difference, [-1.0, 1.0]),
        ] {
            let svg = render_map_svg(&montage, values, limits, &format!("{} {kind}", map.population));
            write_file(&out.join("maps").join(format!("{}_{kind}.svg", map.population)), &svg)?;
        }
    }
    write_file(&out.join("channel_maps.tsv"), &t)?;
    write_file(&out.join("channel_maps.json"), &to_json(&data.channel_maps))?;
    log::info!("report written to {}", out.display());
    Ok(data)
}
