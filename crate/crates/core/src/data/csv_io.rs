use std::io::Read;
use std::path::Path;

use super::Dataset;
use crate::error::{PpmError, Result};
use crate::metrics::quantile_sorted;
use crate::model::ForecastEnsemble;
use crate::numerics::Tensor;

/// Read a comma-separated series. One header row; a leading column named
/// `date` is kept as timestamps, every other column must be numeric.
pub fn load_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| PpmError::io(path, e))?;
    parse_csv(file).map_err(|e| match e {
        PpmError::Data(msg) => PpmError::Data(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_csv<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| PpmError::Data(format!("reading header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || headers.iter().all(String::is_empty) {
        return Err(PpmError::Data("empty file".into()));
    }
    let has_date = headers[0].eq_ignore_ascii_case("date");
    let first = usize::from(has_date);
    let channel_names: Vec<String> = headers[first..].to_vec();
    if channel_names.is_empty() {
        return Err(PpmError::Data("no value columns".into()));
    }
    let c = channel_names.len();
    let mut values = Vec::new();
    let mut stamps = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        // header is line 1, so data row r sits on line r + 2
        let line = row + 2;
        let rec = rec.map_err(|e| PpmError::Data(format!("line {line}: {e}")))?;
        if rec.len() != headers.len() {
            return Err(PpmError::Data(format!(
                "line {line}: expected {} fields, found {}",
                headers.len(),
                rec.len()
            )));
        }
        if has_date {
            stamps.push(rec[0].to_string());
        }
        for (j, cell) in rec.iter().skip(first).enumerate() {
            if cell.is_empty() {
                return Err(PpmError::Data(format!(
                    "line {line}, column '{}': missing value",
                    channel_names[j]
                )));
            }
            let v: f64 = cell.parse().map_err(|_| {
                PpmError::Data(format!(
                    "line {line}, column '{}': non-numeric value '{cell}'",
                    channel_names[j]
                ))
            })?;
            if !v.is_finite() {
                return Err(PpmError::Data(format!(
                    "line {line}, column '{}': non-finite value",
                    channel_names[j]
                )));
            }
            values.push(v);
        }
    }
    if values.is_empty() {
        return Err(PpmError::Data("no data rows".into()));
    }
    let rows = values.len() / c;
    Ok(Dataset {
        values: Tensor::new(vec![rows, c], values)?,
        timestamps: has_date.then_some(stamps),
        channel_names,
        stats: None,
    })
}

/// Quantile levels written for each forecast coordinate.
pub const FORECAST_QUANTILES: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];

/// One line of the forecast CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRow {
    pub origin: usize,
    pub channel: usize,
    pub step: usize,
    pub mean: f64,
    pub quantiles: [f64; 5],
}

impl ForecastRow {
    /// One row per `(channel, step)` of an ensemble.
    pub fn from_ensemble(origin: usize, ens: &ForecastEnsemble) -> Vec<ForecastRow> {
        let mean = ens.mean();
        let mut rows = Vec::with_capacity(ens.horizon() * ens.channels());
        for c in 0..ens.channels() {
            for t in 0..ens.horizon() {
                let mut s = ens.coordinate(t, c);
                s.sort_by(f64::total_cmp);
                let mut q = [0.0; 5];
                for (o, &p) in q.iter_mut().zip(&FORECAST_QUANTILES) {
                    *o = quantile_sorted(&s, p);
                }
                rows.push(ForecastRow {
                    origin,
                    channel: c,
                    step: t,
                    mean: mean.get2(t, c),
                    quantiles: q,
                });
            }
        }
        rows
    }
}

pub fn write_forecast_csv(path: impl AsRef<Path>, rows: &[ForecastRow]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| PpmError::Data(format!("{}: {e}", path.display())))?;
    let wrap = |e: csv::Error| PpmError::Data(format!("{}: {e}", path.display()));
    w.write_record(["origin", "channel", "step", "mean", "q05", "q25", "q50", "q75", "q95"])
        .map_err(wrap)?;
    for r in rows {
        let mut rec = vec![r.origin.to_string(), r.channel.to_string(), r.step.to_string(), fmt(r.mean)];
        rec.extend(r.quantiles.iter().map(|&v| fmt(v)));
        w.write_record(&rec).map_err(wrap)?;
    }
    w.flush().map_err(|e| PpmError::io(path, e))
}

/// Shortest representation that parses back to the same `f64`.
fn fmt(v: f64) -> String {
    format!("{v:?}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_file_parses_exactly() {
        let text = "date,a,b\n2020-01-01 00:00:00,1.5,-2\n2020-01-01 01:00:00,3,4.25\n2020-01-01 02:00:00,0,1e-3\n";
        let ds = parse_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.values.shape(), &[3, 2]);
        assert_eq!(ds.values.data(), &[1.5, -2.0, 3.0, 4.25, 0.0, 1e-3]);
        assert_eq!(ds.channel_names, vec!["a", "b"]);
        assert_eq!(ds.timestamps.as_ref().unwrap().len(), 3);
    }

    #[test]
    fn date_column_is_optional() {
        let ds = parse_csv("x,y,z\n1,2,3\n".as_bytes()).unwrap();
        assert_eq!(ds.values.shape(), &[1, 3]);
        assert!(ds.timestamps.is_none());
    }

    #[test]
    fn missing_cell_names_row_and_column() {
        let err = parse_csv("date,a,b\nt0,1,2\nt1,,3\n".as_bytes()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 3") && msg.contains("'a'"), "{msg}");
    }

    #[test]
    fn ragged_and_non_numeric_rows_fail() {
        assert!(parse_csv("a,b\n1,2\n3\n".as_bytes()).is_err());
        let err = parse_csv("a,b\n1,x\n".as_bytes()).unwrap_err().to_string();
        assert!(err.contains("non-numeric") && err.contains("'b'"));
    }

    #[test]
    fn empty_inputs_fail() {
        assert!(parse_csv("".as_bytes()).is_err());
        assert!(parse_csv("a,b\n".as_bytes()).is_err());
    }
}
