//! CSV readers/writers and atomic file output.

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2};

use crate::error::{PottsError, Result};

/// Writes through a temporary sibling file and renames it into place, so a
/// failed write never leaves a partial file at `path`.
pub fn write_atomic<F>(path: &Path, body: F) -> Result<()>
where
    F: FnOnce(&mut BufWriter<File>) -> io::Result<()>,
{
    let tmp = temp_sibling(path);
    let result = (|| {
        let file = File::create(&tmp)?;
        let mut writer = BufWriter::new(file);
        body(&mut writer)?;
        writer.flush()?;
        writer.get_ref().sync_all()?;
        drop(writer);
        fs::rename(&tmp, path)
    })();
    if let Err(err) = result {
        let _ = fs::remove_file(&tmp);
        return Err(PottsError::io(path, err));
    }
    Ok(())
}

pub fn write_bytes_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, |w| w.write_all(bytes))
}

fn temp_sibling(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.{}.tmp", std::process::id()))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| PottsError::io(path, e))
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> PottsError {
    PottsError::Parse {
        source_name: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Numeric CSV with an optional header row (detected when the first row has a
/// non-numeric cell). Blank lines are skipped.
pub fn read_float_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    parse_float_rows(&text, path)
}

pub(crate) fn parse_float_rows(text: &str, path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> =
            cells.iter().map(|c| c.parse::<f64>()).collect();
        let values = match parsed {
            Ok(v) => v,
            Err(_) if rows.is_empty() && width.is_none() => {
                // header
                width = Some(cells.len());
                continue;
            }
            Err(_) => {
                let bad = cells.iter().find(|c| c.parse::<f64>().is_err()).unwrap();
                return Err(parse_error(
                    path,
                    lineno,
                    format!("non-numeric cell {bad:?}"),
                ));
            }
        };
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(parse_error(path, lineno, format!("non-finite value {bad}")));
        }
        match width {
            Some(w) if w != values.len() => {
                return Err(parse_error(
                    path,
                    lineno,
                    format!("ragged row: expected {w} columns, found {}", values.len()),
                ))
            }
            _ => width = Some(values.len()),
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(parse_error(path, 1, "no data rows"));
    }
    Ok(rows)
}

pub fn read_points_csv(path: &Path) -> Result<Array2<f64>> {
    let rows = read_float_rows(path)?;
    let (n, d) = (rows.len(), rows[0].len());
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(Array2::from_shape_vec((n, d), flat).expect("rows validated as rectangular"))
}

/// One nonnegative integer label per line; optional header.
pub fn read_labels_csv(path: &Path) -> Result<Vec<usize>> {
    let text = read_text(path)?;
    let mut labels = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let cell = line.split(',').next().unwrap_or("").trim();
        if cell.is_empty() {
            continue;
        }
        match cell.parse::<usize>() {
            Ok(v) => labels.push(v),
            Err(_) if labels.is_empty() && idx == 0 => continue,
            Err(_) => {
                return Err(parse_error(
                    path,
                    idx + 1,
                    format!("invalid label {cell:?}"),
                ));
            }
        }
    }
    if labels.is_empty() {
        return Err(parse_error(path, 1, "no labels"));
    }
    Ok(labels)
}

/// `index,class_label` pairs; optional header.
pub fn read_index_label_pairs(path: &Path) -> Result<Vec<(usize, usize)>> {
    let text = read_text(path)?;
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed = match cells.as_slice() {
            [a, b] => a.parse::<usize>().ok().zip(b.parse::<usize>().ok()),
            _ => None,
        };
        match parsed {
            Some(p) => pairs.push(p),
            None if idx == 0 => continue,
            None => return Err(parse_error(path, idx + 1, "expected `index,class_label`")),
        }
    }
    Ok(pairs)
}

pub fn write_matrix_csv(path: &Path, m: ArrayView2<'_, f64>) -> Result<()> {
    write_atomic(path, |w| {
        for row in m.outer_iter() {
            let mut first = true;
            for v in row {
                if !first {
                    w.write_all(b",")?;
                }
                first = false;
                write!(w, "{v}")?;
            }
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub fn write_labels_csv(path: &Path, labels: &[usize]) -> Result<()> {
    write_atomic(path, |w| {
        for l in labels {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })
}
