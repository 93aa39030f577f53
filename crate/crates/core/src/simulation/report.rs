use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::report::format_sig;

use super::SimulationSummary;

fn opt(v: Option<f64>) -> String {
    v.map(format_sig).unwrap_or_else(|| "NA".into())
}

fn create(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    std::fs::File::create(path)
        .map(std::io::BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// One row per method × estimand; undefined ratios print as `NA`.
pub fn write_summary_tsv(summary: &SimulationSummary, mut out: impl Write) -> std::io::Result<()> {
    writeln!(
        out,
        "method\testimand\ttruth\testimable\tnon_estimable\tbias\tmc_variance\tmse\trelative_efficiency\test_var_over_mc_var\tcoverage\tfailures"
    )?;
    for r in &summary.rows {
        let failures = r
            .failures
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect::<Vec<_>>()
            .join(";");
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.method,
            r.estimand,
            format_sig(r.truth),
            r.estimable,
            r.non_estimable,
            opt(r.bias),
            opt(r.mc_variance),
            opt(r.mse),
            opt(r.relative_efficiency),
            opt(r.variance_ratio),
            opt(r.coverage),
            failures
        )?;
    }
    Ok(())
}

/// Full-precision JSON; undefined metrics are `null`.
pub fn write_summary_json(summary: &SimulationSummary, mut out: impl Write) -> std::io::Result<()> {
    serde_json::to_writer_pretty(&mut out, summary)?;
    writeln!(out)
}

/// Per-replicate raw estimates for audit.
pub fn write_replicates_csv(summary: &SimulationSummary, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in &summary.records {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<replicates csv>", e))?;
    Ok(())
}

impl SimulationSummary {
    /// Writes `summary.tsv`, `summary.json` and `replicates.csv` into `dir`.
    pub fn write_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("summary.tsv");
        write_summary_tsv(self, create(&p)?).map_err(|e| Error::io(&p, e))?;
        let p = dir.join("summary.json");
        write_summary_json(self, create(&p)?).map_err(|e| Error::io(&p, e))?;
        write_replicates_csv(self, create(&dir.join("replicates.csv"))?)
    }
}
