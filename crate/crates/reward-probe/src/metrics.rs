//! Per-epoch metrics as CSV.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use reward_probe_core::trainer::MetricsRecord;

use crate::error::{Error, Result};

pub const HEADER: [&str; 8] = [
    "epoch",
    "train_error_online",
    "train_error_frozen",
    "pr_proper_action",
    "mean_return",
    "steps",
    "seconds",
    "test_error",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn row(m: &MetricsRecord) -> [String; 8] {
    [
        m.epoch.to_string(),
        m.train_error_online.to_string(),
        opt(m.train_error_frozen),
        m.pr_proper_action.to_string(),
        opt(m.mean_return),
        m.steps.to_string(),
        opt(m.seconds),
        opt(m.test_error),
    ]
}

/// Streams rows to disk, flushing after each epoch so a killed run keeps
/// its history.
pub struct MetricsWriter {
    inner: csv::Writer<File>,
    path: std::path::PathBuf,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut inner = csv::Writer::from_writer(file);
        inner.write_record(HEADER).map_err(|e| csv_err(path, e))?;
        let mut w = MetricsWriter {
            inner,
            path: path.to_path_buf(),
        };
        w.flush()?;
        Ok(w)
    }

    pub fn append(&mut self, m: &MetricsRecord) -> Result<()> {
        self.inner.write_record(row(m)).map_err(|e| csv_err(&self.path, e))?;
        self.flush()
    }

    fn flush(&mut self) -> Result<()> {
        self.inner.flush().map_err(|e| Error::io(&self.path, e))
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    }
}

pub fn to_csv_string(records: &[MetricsRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory write");
    for m in records {
        w.write_record(row(m)).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii output")
}

pub fn write_all(path: &Path, records: &[MetricsRecord]) -> Result<()> {
    let mut f = File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(to_csv_string(records).as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read(path: &Path) -> Result<Vec<MetricsRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text).map_err(|reason| Error::format(path, reason))
}

pub fn parse(text: &str) -> std::result::Result<Vec<MetricsRecord>, String> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| e.to_string())?;
    if header.iter().ne(HEADER) {
        return Err(format!("unexpected header {:?}", header.iter().collect::<Vec<_>>()));
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| e.to_string())?;
        let line = i + 2;
        let req = |k: usize| -> std::result::Result<f64, String> {
            rec[k]
                .parse::<f64>()
                .map_err(|_| format!("line {line}: bad {} {:?}", HEADER[k], &rec[k]))
        };
        let optional = |k: usize| -> std::result::Result<Option<f64>, String> {
            if rec[k].is_empty() {
                Ok(None)
            } else {
                req(k).map(Some)
            }
        };
        let int = |k: usize| -> std::result::Result<u64, String> {
            rec[k]
                .parse::<u64>()
                .map_err(|_| format!("line {line}: bad {} {:?}", HEADER[k], &rec[k]))
        };
        out.push(MetricsRecord {
            epoch: int(0)? as usize,
            train_error_online: req(1)?,
            train_error_frozen: optional(2)?,
            pr_proper_action: req(3)?,
            mean_return: optional(4)?,
            steps: int(5)?,
            seconds: optional(6)?,
            test_error: optional(7)?,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(epoch: usize, err: f64) -> MetricsRecord {
        MetricsRecord {
            epoch,
            train_error_online: err,
            train_error_frozen: Some(err / 2.0),
            pr_proper_action: 1.0 - err,
            mean_return: None,
            steps: 10 * epoch as u64,
            seconds: None,
            test_error: (epoch == 2).then_some(0.125),
        }
    }

    #[test]
    fn header_and_empty_cells() {
        let text = to_csv_string(&[record(1, 0.5)]);
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "epoch,train_error_online,train_error_frozen,pr_proper_action,mean_return,steps,seconds,test_error"
        );
        assert_eq!(lines.next().unwrap(), "1,0.5,0.25,0.5,,10,,");
    }

    #[test]
    fn round_trip() {
        let recs = vec![record(1, 0.3), record(2, 0.1 + 0.2)];
        let back = parse(&to_csv_string(&recs)).unwrap();
        assert_eq!(back, recs);
    }

    #[test]
    fn streaming_matches_batch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let recs = vec![record(1, 0.9), record(2, 0.7)];
        let mut w = MetricsWriter::create(&p).unwrap();
        for r in &recs {
            w.append(r).unwrap();
        }
        drop(w);
        assert_eq!(std::fs::read_to_string(&p).unwrap(), to_csv_string(&recs));
        assert_eq!(read(&p).unwrap(), recs);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse("a,b\n1,2\n").is_err());
        let bad = format!("{}\nx,0,,1,,0,,\n", HEADER.join(","));
        assert!(parse(&bad).unwrap_err().contains("line 2"));
    }
}
