//! Stream, alarm and model files.
//!
//! A stream file is CSV with header `t,x1,…,xd`; consecutive rows with the
//! same `t` form one batch and `t` must increase between batches. Streams
//! are read lazily, holding one batch at a time.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::detector::{MonitorModel, MonitorUpdate};
use crate::error::{Error, Result};
use crate::ot::EmpiricalMeasure;

/// Lazy reader yielding `(t, batch)` pairs.
pub struct StreamReader<R: Read> {
    records: csv::StringRecordsIntoIter<R>,
    dim: usize,
    pending: Option<(usize, Vec<f64>)>,
    last_t: Option<usize>,
    done: bool,
    line: u64,
}

impl StreamReader<BufReader<File>> {
    pub fn open(path: &Path) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> StreamReader<R> {
    pub fn new(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let dim = headers.len().saturating_sub(1);
        let ok = headers.get(0) == Some("t")
            && dim >= 1
            && (1..=dim).all(|j| headers.get(j) == Some(&format!("x{j}")[..]));
        if !ok {
            return Err(Error::Parse(format!(
                "stream header must be t,x1,...,xd; got {:?}",
                headers.iter().collect::<Vec<_>>()
            )));
        }
        Ok(Self {
            records: rdr.into_records(),
            dim,
            pending: None,
            last_t: None,
            done: false,
            line: 1,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn next_row(&mut self) -> Result<Option<(usize, Vec<f64>)>> {
        let Some(rec) = self.records.next() else {
            return Ok(None);
        };
        let rec = rec?;
        self.line += 1;
        if rec.len() != self.dim + 1 {
            return Err(Error::Parse(format!(
                "line {}: expected {} fields",
                self.line,
                self.dim + 1
            )));
        }
        let t: usize = rec[0].parse().map_err(|_| {
            Error::Parse(format!("line {}: bad time index {:?}", self.line, &rec[0]))
        })?;
        let x = (1..=self.dim)
            .map(|j| {
                rec[j].parse::<f64>().map_err(|_| {
                    Error::Parse(format!("line {}: bad value {:?}", self.line, &rec[j]))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(Some((t, x)))
    }

    fn next_batch(&mut self) -> Result<Option<(usize, EmpiricalMeasure)>> {
        let (t, mut pts) = match self.pending.take() {
            Some(p) => p,
            None => match self.next_row()? {
                Some(p) => p,
                None => return Ok(None),
            },
        };
        if self.last_t.is_some_and(|last| t <= last) {
            return Err(Error::Parse(format!(
                "line {}: time index {t} is not increasing",
                self.line
            )));
        }
        loop {
            match self.next_row()? {
                Some((t2, x)) if t2 == t => pts.extend(x),
                Some(other) => {
                    self.pending = Some(other);
                    break;
                }
                None => break,
            }
        }
        self.last_t = Some(t);
        let m = EmpiricalMeasure::from_samples(self.dim, pts).map_err(|e| e.at_time(t))?;
        Ok(Some((t, m)))
    }
}

impl<R: Read> Iterator for StreamReader<R> {
    type Item = Result<(usize, EmpiricalMeasure)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.next_batch() {
            Ok(Some(b)) => Some(Ok(b)),
            Ok(None) => {
                self.done = true;
                None
            }
            Err(e) => {
                self.done = true;
                Some(Err(e))
            }
        }
    }
}

/// Read a whole stream file into memory.
pub fn read_stream(path: &Path) -> Result<Vec<(usize, EmpiricalMeasure)>> {
    StreamReader::open(path)?.collect()
}

/// Write batches as a stream file. Each batch's raw rows are reconstructed
/// from atoms and the recorded sample count.
pub struct StreamWriter<W: Write> {
    inner: csv::Writer<W>,
    dim: usize,
}

impl<W: Write> StreamWriter<W> {
    pub fn new(writer: W, dim: usize) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        let mut header = vec!["t".to_string()];
        header.extend((1..=dim).map(|j| format!("x{j}")));
        inner.write_record(&header)?;
        Ok(Self { inner, dim })
    }

    /// Write raw points (flat `N × d`) of batch `t`.
    pub fn write_points(&mut self, t: usize, points: &[f64]) -> Result<()> {
        let ts = t.to_string();
        for p in points.chunks(self.dim) {
            let mut rec = vec![ts.clone()];
            rec.extend(p.iter().map(|x| format!("{x}")));
            self.inner.write_record(&rec)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Writer for `t,t2,spe,alarm,triggered_by` rows.
pub struct AlarmWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> AlarmWriter<W> {
    pub fn new(writer: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(writer);
        inner.write_record(["t", "t2", "spe", "alarm", "triggered_by"])?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, u: &MonitorUpdate) -> Result<()> {
        self.inner.write_record([
            u.t.to_string(),
            format!("{}", u.stats.t2),
            format!("{}", u.stats.spe),
            u.alarm.to_string(),
            u.triggered_by.as_str().to_string(),
        ])?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Write a file atomically enough for our purposes: buffer then flush.
pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

pub fn save_model(model: &MonitorModel, path: &Path) -> Result<()> {
    write_text(path, &model.to_json()?)
}

pub fn load_model(path: &Path) -> Result<MonitorModel> {
    MonitorModel::from_json(&std::fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn groups_rows_by_t() {
        let csv = "t,x1,x2\n1,0,0\n1,1,1\n2,5,5\n4,1,2\n4,3,4\n4,5,6\n";
        let batches: Vec<_> = StreamReader::new(csv.as_bytes())
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(batches.len(), 3);
        assert_eq!(batches[0].0, 1);
        assert_eq!(batches[0].1.len(), 2);
        assert_eq!(batches[2].0, 4);
        assert_eq!(batches[2].1.n_samples(), Some(3));
    }

    #[test]
    fn rejects_bad_header_and_order() {
        assert!(StreamReader::new("time,x1\n1,0\n".as_bytes()).is_err());
        let r: Result<Vec<_>> = StreamReader::new("t,x1\n2,0\n1,0\n".as_bytes())
            .unwrap()
            .collect();
        assert!(matches!(r, Err(Error::Parse(_))));
        let r: Result<Vec<_>> = StreamReader::new("t,x1\n1,abc\n".as_bytes())
            .unwrap()
            .collect();
        assert!(r.is_err());
    }

    #[test]
    fn empty_stream_yields_nothing() {
        let mut r = StreamReader::new("t,x1\n".as_bytes()).unwrap();
        assert!(r.next().is_none());
    }

    #[test]
    fn writer_roundtrip() {
        let mut buf = Vec::new();
        let mut w = StreamWriter::new(&mut buf, 2).unwrap();
        w.write_points(1, &[0.5, 1.0, 2.0, 3.0]).unwrap();
        w.write_points(2, &[0.25, -1.0]).unwrap();
        w.finish().unwrap();
        let back: Vec<_> = StreamReader::new(&buf[..])
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(back[0].1.points(), &[0.5, 1.0, 2.0, 3.0]);
        assert_eq!(back[1].1.points(), &[0.25, -1.0]);
    }
}
