//! CSV files for signals, segment metadata and estimates.
//!
//! Floats are written with 17 significant digits so that every value
//! round-trips exactly.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::sources::PiecewiseSignal;
use crate::{Error, Result};

pub const SIGNAL_HEADER: [&str; 3] = ["index", "x", "y"];
pub const SEGMENT_HEADER: [&str; 4] = ["segment", "start", "length", "amplitude"];
pub const ESTIMATE_HEADER: [&str; 3] = ["index", "y", "xhat"];

/// Formats `v` with 17 significant digits, positional for moderate exponents.
pub fn fmt_f64(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{v:.16e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if (-5..17).contains(&exp) {
        format!("{:.*}", (16 - exp) as usize, v)
    } else {
        sci
    }
}

/// A signal file: optional clean samples and the observation.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalFile {
    pub x: Option<Vec<f64>>,
    pub y: Vec<f64>,
}

fn create(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    if e.is_io_error() {
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            _ => unreachable!(),
        }
    } else {
        Error::malformed(path, e.to_string())
    }
}

fn check_lengths(x: Option<&[f64]>, y: &[f64]) -> Result<()> {
    match x {
        Some(x) if x.len() != y.len() => Err(Error::invalid(format!(
            "x has {} samples, y has {}",
            x.len(),
            y.len()
        ))),
        _ => Ok(()),
    }
}

fn write_signal_records<W: Write>(w: &mut csv::Writer<W>, x: Option<&[f64]>, y: &[f64]) -> csv::Result<()> {
    w.write_record(SIGNAL_HEADER)?;
    for (i, &v) in y.iter().enumerate() {
        let xv = x.map(|x| fmt_f64(x[i])).unwrap_or_default();
        w.write_record([i.to_string(), xv, fmt_f64(v)])?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `index,x,y`; the `x` column is left empty when `x` is `None`.
pub fn write_signal_to<W: Write>(out: W, x: Option<&[f64]>, y: &[f64]) -> Result<()> {
    check_lengths(x, y)?;
    write_signal_records(&mut csv::Writer::from_writer(out), x, y)
        .map_err(|e| csv_err(Path::new("<writer>"), e))
}

pub fn write_signal(path: impl AsRef<Path>, x: Option<&[f64]>, y: &[f64]) -> Result<()> {
    let path = path.as_ref();
    check_lengths(x, y)?;
    write_signal_records(&mut create(path)?, x, y).map_err(|e| csv_err(path, e))
}

fn check_header(path: &Path, found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    if found.iter().ne(expected.iter().copied()) {
        return Err(Error::malformed(
            path,
            format!("expected header {:?}, found {:?}", expected.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(path: &Path, row: usize, name: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::malformed(path, format!("row {row}: bad {name} value {s:?}")))
}

fn parse_signal<R: Read>(path: &Path, input: R) -> Result<SignalFile> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    check_header(path, &header, &SIGNAL_HEADER)?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut has_x = None;
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let index: usize = parse_field(path, row, "index", &rec[0])?;
        if index != row {
            return Err(Error::malformed(path, format!("row {row}: index {index} out of sequence")));
        }
        let x_present = !rec[1].trim().is_empty();
        if *has_x.get_or_insert(x_present) != x_present {
            return Err(Error::malformed(path, format!("row {row}: x column is only partly filled")));
        }
        if x_present {
            xs.push(parse_field(path, row, "x", &rec[1])?);
        }
        ys.push(parse_field(path, row, "y", &rec[2])?);
    }
    Ok(SignalFile {
        x: has_x.unwrap_or(false).then_some(xs),
        y: ys,
    })
}

pub fn read_signal(path: impl AsRef<Path>) -> Result<SignalFile> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_signal(path, file)
}

pub fn read_signal_from<R: Read>(input: R) -> Result<SignalFile> {
    parse_signal(Path::new("<reader>"), input)
}

/// Writes the `segment,start,length,amplitude` sidecar.
pub fn write_segments(path: impl AsRef<Path>, signal: &PiecewiseSignal) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let res: csv::Result<()> = (|| {
        w.write_record(SEGMENT_HEADER)?;
        for (j, (start, len, amp)) in signal.segments().enumerate() {
            w.write_record([j.to_string(), start.to_string(), len.to_string(), fmt_f64(amp)])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| csv_err(path, e))
}

/// Reads a segment sidecar back into the sample sequence it describes.
pub fn read_segments(path: impl AsRef<Path>) -> Result<PiecewiseSignal> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    check_header(path, &header, &SEGMENT_HEADER)?;
    let mut values = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        let seg: usize = parse_field(path, row, "segment", &rec[0])?;
        let start: usize = parse_field(path, row, "start", &rec[1])?;
        let len: usize = parse_field(path, row, "length", &rec[2])?;
        let amp: f64 = parse_field(path, row, "amplitude", &rec[3])?;
        if seg != row || start != values.len() || len == 0 {
            return Err(Error::malformed(path, format!("row {row}: segments must be contiguous")));
        }
        values.extend(std::iter::repeat_n(amp, len));
    }
    PiecewiseSignal::from_values(values)
}

/// Writes `index,y,xhat` for a despeckled signal.
pub fn write_estimate(path: impl AsRef<Path>, y: &[f64], xhat: &[f64]) -> Result<()> {
    let path = path.as_ref();
    if y.len() != xhat.len() {
        return Err(Error::invalid("observation and estimate lengths differ"));
    }
    let mut w = create(path)?;
    let res: csv::Result<()> = (|| {
        w.write_record(ESTIMATE_HEADER)?;
        for (i, (a, b)) in y.iter().zip(xhat).enumerate() {
            w.write_record([i.to_string(), fmt_f64(*a), fmt_f64(*b)])?;
        }
        w.flush()?;
        Ok(())
    })();
    res.map_err(|e| csv_err(path, e))
}

/// Writes already formatted text, mapping failures to [`Error::Io`].
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
