//! Report files: CSV with a comment header, plus a structured twin for plotting.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use infofd::analysis::Table;

use crate::config::RunConfig;
use crate::CliError;

/// Prefix of the only header line that varies between identical runs.
pub const CREATED_PREFIX: &str = "# created_unix=";

/// Comment lines naming the command, the config hash and any extra notes.
pub fn header(command: &str, cfg: &RunConfig, notes: &[String]) -> String {
    let now = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let mut s = format!("# infofd {command}\n# config_sha256={}\n", cfg.hash());
    for n in notes {
        s.push_str(&format!("# {n}\n"));
    }
    s.push_str(&format!("{CREATED_PREFIX}{now}\n"));
    s
}

/// Sample mean and std (N−1; 0 for one value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    (mean, (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

/// `mean(std)` with four decimals, `NA` when nothing is defined.
pub fn mean_std_cell(v: &[f64]) -> String {
    if v.is_empty() {
        return "NA".into();
    }
    let (m, s) = mean_std(v);
    format!("{m:.4}({s:.4})")
}

/// Writes `bytes`, creating parent directories first.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    write_bytes(path, text.as_bytes())
}

/// Writes `<stem>.csv` (with header) and `<stem>.json`; returns the CSV path.
pub fn write_table(
    dir: &Path,
    stem: &str,
    command: &str,
    cfg: &RunConfig,
    notes: &[String],
    table: &Table,
) -> Result<PathBuf, CliError> {
    let csv = dir.join(format!("{stem}.csv"));
    write_text(&csv, &format!("{}{}", header(command, cfg, notes), table.to_csv()))?;
    let json = format!(
        "{{\n\"command\": \"{command}\",\n\"config_sha256\": \"{}\",\n\"rows\": {}}}\n",
        cfg.hash(),
        table.to_structured()
    );
    write_text(&dir.join(format!("{stem}.json")), &json)?;
    Ok(csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_cells() {
        assert_eq!(mean_std_cell(&[]), "NA");
        assert_eq!(mean_std_cell(&[0.5]), "0.5000(0.0000)");
        // mean 2, sample variance 1
        assert_eq!(mean_std_cell(&[1.0, 2.0, 3.0]), "2.0000(1.0000)");
    }
}
