use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use chrono::NaiveDate;
use intraeff::analytics::{
    align_monthly, precision_histograms, return_histograms, split_report, write_correlations, write_cumulative,
    write_daily_returns, write_histograms, write_hft_pairs, write_smoothed, write_split_report, HftRatioSeries,
    ReturnSeries, SMOOTHING_WINDOW,
};
use intraeff::Result;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    File::create(&path)
        .map(BufWriter::new)
        .map_err(|e| intraeff::Error::Malformed(format!("{}: {e}", path.display())))
}

/// Writes every analytics CSV into `dir`; returns the file names written.
/// The HFT files are written only when a ratio series is given.
pub fn write_reports(
    dir: &Path,
    series: &[ReturnSeries],
    split: NaiveDate,
    hft: Option<&HftRatioSeries>,
) -> Result<Vec<&'static str>> {
    let mut written = Vec::new();
    write_daily_returns(create(dir, "daily_returns.csv")?, series)?;
    written.push("daily_returns.csv");
    write_cumulative(create(dir, "cumulative.csv")?, series)?;
    written.push("cumulative.csv");
    write_smoothed(create(dir, "smoothed.csv")?, series, SMOOTHING_WINDOW)?;
    written.push("smoothed.csv");
    write_histograms(create(dir, "return_hist.csv")?, &return_histograms(series)?)?;
    written.push("return_hist.csv");
    write_histograms(create(dir, "precision_hist.csv")?, &precision_histograms(series)?)?;
    written.push("precision_hist.csv");
    write_split_report(create(dir, "split_report.csv")?, &split_report(series, split))?;
    written.push("split_report.csv");
    if let Some(hft) = hft {
        let mut pairs = Vec::new();
        let mut corr = Vec::new();
        for s in series {
            let (p, c) = align_monthly(s, hft, split);
            for c in c.iter().filter(|c| c.pearson.is_none()) {
                log::warn!(
                    "{} {}: correlation undefined ({})",
                    s.learner,
                    c.partition.name(),
                    c.note.as_deref().unwrap_or("")
                );
            }
            pairs.push((s.learner.clone(), p));
            corr.push((s.learner.clone(), c));
        }
        write_hft_pairs(create(dir, "hft_pairs.csv")?, &pairs)?;
        written.push("hft_pairs.csv");
        write_correlations(create(dir, "correlations.csv")?, &corr)?;
        written.push("correlations.csv");
    }
    Ok(written)
}
