use std::path::Path;

use num_complex::Complex64;

use crate::error::CliError;

/// Samples read from a CSV file, one entry of `columns` per value field.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub sample_rate_hz: f64,
    /// Time of the first sample, seconds.
    pub start_time: f64,
    pub columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn real(&self) -> &[f64] {
        &self.columns[0]
    }

    pub fn complex(&self) -> Result<Vec<Complex64>, CliError> {
        match self.columns.as_slice() {
            [re, im, ..] => Ok(re.iter().zip(im).map(|(&a, &b)| Complex64::new(a, b)).collect()),
            _ => Err(CliError::Usage("complex input needs t,re,im columns".into())),
        }
    }
}

/// Reads a sampled signal.
///
/// Lines starting with `#` are comments; `# fs=<Hz>` supplies the sample rate. A first row
/// that does not parse as numbers is a header. A single column holds values and needs a
/// sample rate from `fs_flag` or a comment. With two or more columns the first is time and
/// must be uniformly spaced to 1e-6 relative; `value_columns` fields follow it.
pub fn read_signal(path: &Path, fs_flag: Option<f64>, value_columns: usize) -> Result<Table, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_signal(&text, fs_flag, value_columns).map_err(|e| match e {
        CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_signal(text: &str, fs_flag: Option<f64>, value_columns: usize) -> Result<Table, CliError> {
    let bad = |m: String| CliError::Usage(m);
    let mut fs_comment = None;
    let mut body = String::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(c) = trimmed.strip_prefix('#') {
            if let Some(v) = c.trim().strip_prefix("fs=") {
                fs_comment = Some(
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| bad(format!("cannot parse sample rate comment '{trimmed}'")))?,
                );
            }
        } else if !trimmed.is_empty() {
            body.push_str(trimmed);
            body.push('\n');
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(body.as_bytes());
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(|e| bad(format!("malformed CSV: {e}")))?;
        let parsed: Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(row) => rows.push(row),
            Err(_) if i == 0 => continue,
            Err(_) => return Err(bad(format!("malformed CSV: non-numeric field on data row {}", i + 1))),
        }
    }
    if rows.is_empty() {
        return Err(bad("no data rows".into()));
    }
    let width = rows[0].len();
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != width) {
        return Err(bad(format!("malformed CSV: row {} has {} fields, expected {width}", i + 1, r.len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(bad("malformed CSV: non-finite value".into()));
    }

    if width == 1 {
        if value_columns > 1 {
            return Err(bad(format!("expected t and {value_columns} value columns")));
        }
        let fs = fs_flag
            .or(fs_comment)
            .ok_or_else(|| bad("single-column input needs --fs or a '# fs=' comment".into()))?;
        check_rate(fs)?;
        return Ok(Table {
            sample_rate_hz: fs,
            start_time: 0.0,
            columns: vec![rows.into_iter().map(|r| r[0]).collect()],
        });
    }

    if width < 1 + value_columns {
        return Err(bad(format!("expected t and {value_columns} value columns, found {width} columns")));
    }
    let t: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let fs_time = uniform_rate(&t)?;
    let fs = match fs_flag {
        Some(f) => {
            check_rate(f)?;
            if let Some(ft) = fs_time {
                if ((f - ft) / f).abs() > 1e-6 {
                    return Err(bad(format!("--fs {f} disagrees with time column spacing ({ft} Hz)")));
                }
            }
            f
        }
        None => fs_time
            .or(fs_comment)
            .ok_or_else(|| bad("a single row needs --fs or a '# fs=' comment".into()))?,
    };
    let columns = (1..=value_columns).map(|c| rows.iter().map(|r| r[c]).collect()).collect();
    Ok(Table {
        sample_rate_hz: fs,
        start_time: t[0],
        columns,
    })
}

fn check_rate(fs: f64) -> Result<(), CliError> {
    if fs.is_finite() && fs > 0.0 {
        Ok(())
    } else {
        Err(CliError::Usage(format!("sample rate must be positive, got {fs}")))
    }
}

/// Sample rate implied by a time column; `None` for a single sample.
fn uniform_rate(t: &[f64]) -> Result<Option<f64>, CliError> {
    if t.len() < 2 {
        return Ok(None);
    }
    let dt = (t[t.len() - 1] - t[0]) / (t.len() - 1) as f64;
    if !(dt > 0.0) {
        return Err(CliError::Usage("time column must be increasing".into()));
    }
    for (i, w) in t.windows(2).enumerate() {
        if ((w[1] - w[0] - dt) / dt).abs() > 1e-6 {
            return Err(CliError::Usage(format!(
                "time column is not uniformly spaced at row {} (step {} vs {dt})",
                i + 2,
                w[1] - w[0]
            )));
        }
    }
    Ok(Some(1.0 / dt))
}
