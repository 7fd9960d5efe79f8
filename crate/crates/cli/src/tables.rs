//! Two-column numeric CSV readers for tabulated drives and densities.
//! Lines starting with `#` are skipped, as is a non-numeric first row.

use std::path::Path;

use anyhow::{bail, Context, Result};

pub fn read_pairs(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.with_context(|| format!("reading {}", path.display()))?;
        if rec.len() < 2 {
            bail!(
                "{}: row {} has {} columns, expected 2",
                path.display(),
                i + 1,
                rec.len()
            );
        }
        let parsed = (rec[0].parse::<f64>(), rec[1].parse::<f64>());
        match parsed {
            (Ok(a), Ok(b)) => out.push((a, b)),
            _ if i == 0 && out.is_empty() => continue,
            _ => bail!(
                "{}: row {} is not numeric: {:?}",
                path.display(),
                i + 1,
                rec
            ),
        }
    }
    if out.len() < 2 {
        bail!("{}: need at least two samples", path.display());
    }
    Ok(out)
}
