//! Text formats: event files, ground-truth labels and object records.
//!
//! Event file: optional `# sensor W H` header, then one event per line as `t x y p`
//! with `t` in seconds (at least six decimals), integer pixel coordinates and polarity
//! `0` or `1`. Other `#` lines are comments. Timestamps must be non-decreasing.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::bbox::BoundingBox;
use crate::error::{Error, Result};
use crate::eval::GroundTruthBox;
use crate::event::{Event, EventSlice};
use crate::model::MotionModel;
use crate::scalar::Scalar;

/// Formats `v` exactly (shortest round-trip form), padded to at least six decimals.
pub fn format_time<T: Scalar>(v: T) -> String {
    let s = v.to_string();
    if s.contains(['e', 'E', 'i', 'N']) {
        return s;
    }
    let decimals = s.split_once('.').map_or(0, |(_, d)| d.len());
    if decimals >= 6 {
        s
    } else if decimals == 0 {
        format!("{s}.000000")
    } else {
        format!("{s}{}", "0".repeat(6 - decimals))
    }
}

fn integral<T: Scalar>(v: T, what: &str) -> Result<i64> {
    if v.fract() != T::zero() || !v.is_finite() {
        return Err(Error::invalid(format!(
            "{what} coordinate {v} is not an integer; quantize events first"
        )));
    }
    v.to_i64()
        .ok_or_else(|| Error::invalid(format!("{what} coordinate {v} out of range")))
}

/// Serializes events, with a sensor header when `sensor` is given.
pub fn write_events<T: Scalar, W: Write>(mut w: W, events: &[Event<T>], sensor: Option<(u32, u32)>) -> Result<()> {
    let io = |e| Error::io("<writer>", e);
    if let Some((sw, sh)) = sensor {
        writeln!(w, "# sensor {sw} {sh}").map_err(io)?;
    }
    for e in events {
        let x = integral(e.x, "x")?;
        let y = integral(e.y, "y")?;
        writeln!(w, "{} {x} {y} {}", format_time(e.t), u8::from(e.polarity)).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save_events<T: Scalar>(path: &Path, events: &[Event<T>], sensor: Option<(u32, u32)>) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_events(BufWriter::new(f), events, sensor).map_err(|e| relabel(e, path))
}

fn relabel(e: Error, path: &Path) -> Error {
    match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

/// Streaming event parser. Yields events in file order and checks sorting.
pub struct EventReader<R, T> {
    reader: R,
    path: PathBuf,
    line: usize,
    buf: String,
    sensor: Option<(u32, u32)>,
    pending: Option<(usize, String)>,
    last_t: Option<T>,
    done: bool,
}

impl<T: Scalar> EventReader<BufReader<File>, T> {
    pub fn open(path: &Path) -> Result<Self> {
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::new(BufReader::new(f), path)
    }
}

impl<R: BufRead, T: Scalar> EventReader<R, T> {
    /// Reads the header; `path` labels error messages only.
    pub fn new(reader: R, path: impl Into<PathBuf>) -> Result<Self> {
        let mut r = EventReader {
            reader,
            path: path.into(),
            line: 0,
            buf: String::new(),
            sensor: None,
            pending: None,
            last_t: None,
            done: false,
        };
        while let Some(text) = r.next_line()? {
            let trimmed = text.trim();
            if trimmed.is_empty() {
                continue;
            }
            if let Some(comment) = trimmed.strip_prefix('#') {
                r.header_line(comment)?;
                continue;
            }
            r.pending = Some((r.line, text));
            break;
        }
        Ok(r)
    }

    /// Sensor size from the header, if it had one.
    pub fn sensor(&self) -> Option<(u32, u32)> {
        self.sensor
    }

    fn next_line(&mut self) -> Result<Option<String>> {
        self.buf.clear();
        let n = self
            .reader
            .read_line(&mut self.buf)
            .map_err(|e| Error::io(&self.path, e))?;
        if n == 0 {
            return Ok(None);
        }
        self.line += 1;
        Ok(Some(self.buf.trim_end_matches(['\n', '\r']).to_string()))
    }

    fn parse_error(&self, line: usize, message: impl Into<String>, text: &str) -> Error {
        Error::Parse {
            path: self.path.clone(),
            line,
            message: message.into(),
            text: text.to_string(),
        }
    }

    fn header_line(&mut self, comment: &str) -> Result<()> {
        let mut fields = comment.split_whitespace();
        if fields.next() != Some("sensor") {
            return Ok(());
        }
        let dims: Vec<_> = fields.collect();
        let parsed = match dims.as_slice() {
            [w, h] => w.parse::<u32>().ok().zip(h.parse::<u32>().ok()),
            _ => None,
        };
        match parsed {
            Some((w, h)) if w > 0 && h > 0 => {
                self.sensor = Some((w, h));
                Ok(())
            }
            _ => Err(self.parse_error(self.line, "malformed sensor header", comment)),
        }
    }

    fn parse_event(&self, line: usize, text: &str) -> Result<Event<T>> {
        let fields: Vec<&str> = text.split_whitespace().collect();
        let [t, x, y, p] = fields.as_slice() else {
            return Err(self.parse_error(line, "expected 4 fields `t x y p`", text));
        };
        let t: T = t
            .parse()
            .ok()
            .filter(|t: &T| t.is_finite() && *t >= T::zero())
            .ok_or_else(|| self.parse_error(line, "bad timestamp", text))?;
        let x: u32 = x
            .parse()
            .map_err(|_| self.parse_error(line, "bad x coordinate", text))?;
        let y: u32 = y
            .parse()
            .map_err(|_| self.parse_error(line, "bad y coordinate", text))?;
        let polarity = match *p {
            "0" => false,
            "1" => true,
            _ => return Err(self.parse_error(line, "polarity must be 0 or 1", text)),
        };
        Ok(Event::new(
            t,
            T::from_count(x as usize),
            T::from_count(y as usize),
            polarity,
        ))
    }

    fn advance(&mut self) -> Result<Option<Event<T>>> {
        loop {
            let (line, text) = match self.pending.take() {
                Some(p) => p,
                None => match self.next_line()? {
                    Some(t) => (self.line, t),
                    None => return Ok(None),
                },
            };
            let trimmed = text.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let e = self.parse_event(line, trimmed)?;
            if let Some(prev) = self.last_t {
                if e.t < prev {
                    return Err(Error::Unsorted {
                        path: self.path.clone(),
                        line,
                        prev: prev.as_f64(),
                        next: e.t.as_f64(),
                    });
                }
            }
            self.last_t = Some(e.t);
            return Ok(Some(e));
        }
    }
}

impl<R: BufRead, T: Scalar> Iterator for EventReader<R, T> {
    type Item = Result<Event<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        match self.advance() {
            Ok(Some(e)) => Some(Ok(e)),
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

/// A whole event file in memory.
#[derive(Debug, Clone, PartialEq)]
pub struct EventFile<T> {
    pub sensor: Option<(u32, u32)>,
    pub events: Vec<Event<T>>,
}

pub fn read_events<T: Scalar>(path: &Path) -> Result<EventFile<T>> {
    let mut reader = EventReader::open(path)?;
    let events = reader.by_ref().collect::<Result<Vec<_>>>()?;
    Ok(EventFile {
        sensor: reader.sensor(),
        events,
    })
}

pub fn parse_events<T: Scalar>(text: &str) -> Result<EventFile<T>> {
    let mut reader = EventReader::new(text.as_bytes(), "<string>")?;
    let events = reader.by_ref().collect::<Result<Vec<_>>>()?;
    Ok(EventFile {
        sensor: reader.sensor(),
        events,
    })
}

/// How a stream is cut into slices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SliceWindow<T> {
    /// Fixed duration in seconds. Windows are aligned to whole multiples of the
    /// duration, so a stream starting at zero is cut at `k * duration`.
    Duration(T),
    /// Fixed number of events; the last slice may be shorter.
    Count(usize),
}

impl<T: Scalar> Default for SliceWindow<T> {
    fn default() -> Self {
        SliceWindow::Duration(T::lit(0.025))
    }
}

/// Cuts a sorted event stream into slices. Windows without events are skipped.
pub struct Slicer<I: Iterator, T> {
    events: std::iter::Peekable<I>,
    window: SliceWindow<T>,
    sensor: (u32, u32),
    origin: Option<T>,
    index: u64,
}

impl<I, T> Slicer<I, T>
where
    I: Iterator<Item = Result<Event<T>>>,
    T: Scalar,
{
    pub fn new(events: I, window: SliceWindow<T>, sensor: (u32, u32)) -> Result<Self> {
        match window {
            SliceWindow::Duration(d) if !(d > T::zero()) || !d.is_finite() => {
                return Err(Error::invalid(format!("slice duration must be > 0, got {d}")))
            }
            SliceWindow::Count(0) => return Err(Error::invalid("slice event count must be > 0")),
            _ => {}
        }
        if sensor.0 == 0 || sensor.1 == 0 {
            return Err(Error::invalid("sensor dimensions must be positive"));
        }
        Ok(Slicer {
            events: events.peekable(),
            window,
            sensor,
            origin: None,
            index: 0,
        })
    }

    fn next_by_duration(&mut self, d: T) -> Result<Option<EventSlice<T>>> {
        let first_t = match self.events.peek() {
            None => return Ok(None),
            Some(Err(_)) => {
                return Err(self
                    .events
                    .next()
                    .and_then(|r| r.err())
                    .unwrap_or(Error::EmptyInput("events")))
            }
            Some(Ok(e)) => e.t,
        };
        let origin = *self.origin.get_or_insert_with(|| (first_t / d).floor() * d);
        // Skip to the window containing the next event.
        let k = ((first_t - origin) / d).floor().to_u64().unwrap_or(0).max(self.index);
        let t0 = origin + T::from_count(k as usize) * d;
        let t1 = origin + T::from_count(k as usize + 1) * d;
        self.index = k + 1;
        let mut batch = Vec::new();
        while let Some(peek) = self.events.peek() {
            match peek {
                Ok(e) if e.t < t1 => {
                    let e = *e;
                    self.events.next();
                    batch.push(e);
                }
                Ok(_) => break,
                Err(_) => {
                    return Err(self
                        .events
                        .next()
                        .and_then(|r| r.err())
                        .unwrap_or(Error::EmptyInput("events")))
                }
            }
        }
        if batch.is_empty() {
            // Only reachable through rounding at a window edge.
            return self.next_by_duration(d);
        }
        // Rounding in t0 must not push the first event before the window.
        let t0 = batch.first().map_or(t0, |e| t0.min(e.t));
        EventSlice::new(batch, t0, t1 - t0, self.sensor.0, self.sensor.1).map(Some)
    }

    fn next_by_count(&mut self, n: usize) -> Result<Option<EventSlice<T>>> {
        let mut batch = Vec::with_capacity(n);
        while batch.len() < n {
            match self.events.next() {
                Some(Ok(e)) => batch.push(e),
                Some(Err(e)) => return Err(e),
                None => break,
            }
        }
        let (Some(first), Some(last)) = (batch.first(), batch.last()) else {
            return Ok(None);
        };
        let t0 = first.t;
        let span = last.t - t0;
        let dt = if span > T::zero() { span } else { T::lit(1e-6) };
        EventSlice::new(batch, t0, dt, self.sensor.0, self.sensor.1).map(Some)
    }
}

impl<I, T> Iterator for Slicer<I, T>
where
    I: Iterator<Item = Result<Event<T>>>,
    T: Scalar,
{
    type Item = Result<EventSlice<T>>;

    fn next(&mut self) -> Option<Self::Item> {
        let r = match self.window {
            SliceWindow::Duration(d) => self.next_by_duration(d),
            SliceWindow::Count(n) => self.next_by_count(n),
        };
        r.transpose()
    }
}

/// Convenience wrapper: slices in-memory events.
pub fn slice_events<T: Scalar>(
    events: &[Event<T>],
    window: SliceWindow<T>,
    sensor: (u32, u32),
) -> Result<Vec<EventSlice<T>>> {
    Slicer::new(events.iter().map(|e| Ok(*e)), window, sensor)?.collect()
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if !t.is_empty() && !t.starts_with('#') {
            out.push((i + 1, t.to_string()));
        }
    }
    Ok(out)
}

fn fields<T: Scalar>(path: &Path, line: usize, text: &str, n: usize) -> Result<Vec<T>> {
    let parts: Vec<&str> = text.split_whitespace().collect();
    let err = |message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
        text: text.to_string(),
    };
    if parts.len() != n {
        return Err(err(format!("expected {n} fields, found {}", parts.len())));
    }
    parts
        .iter()
        .map(|p| {
            p.parse::<T>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("bad number {p:?}")))
        })
        .collect()
}

fn as_id<T: Scalar>(v: T, path: &Path, line: usize, text: &str) -> Result<u64> {
    v.to_u64()
        .filter(|_| v.fract() == T::zero())
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            line,
            message: "id must be a non-negative integer".into(),
            text: text.to_string(),
        })
}

/// Reads `frame_time object_id x y w h` label lines.
pub fn read_ground_truth<T: Scalar>(path: &Path) -> Result<Vec<GroundTruthBox<T>>> {
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            let v = fields::<T>(path, line, &text, 6)?;
            let id = as_id(v[1], path, line, &text)?;
            if !(v[4] > T::zero() && v[5] > T::zero()) {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: "box width and height must be positive".into(),
                    text,
                });
            }
            Ok(GroundTruthBox {
                frame_time: v[0],
                object_id: id as u32,
                bbox: BoundingBox::new(v[2], v[3], v[4], v[5]),
            })
        })
        .collect()
}

pub fn write_ground_truth<T: Scalar, W: Write>(mut w: W, header: &[String], boxes: &[GroundTruthBox<T>]) -> Result<()> {
    let io = |e| Error::io("<writer>", e);
    for h in header {
        writeln!(w, "# {h}").map_err(io)?;
    }
    writeln!(w, "# frame_time object_id x y w h").map_err(io)?;
    for g in boxes {
        let b = &g.bbox;
        writeln!(
            w,
            "{} {} {} {} {} {}",
            format_time(g.frame_time),
            g.object_id,
            b.x,
            b.y,
            b.w,
            b.h
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)
}

/// One tracked or detected object at one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectRecord<T> {
    pub frame_time: T,
    /// Track id, or the detection index within the frame for untracked output.
    pub id: u64,
    pub centroid: (T, T),
    pub bbox: BoundingBox<T>,
    pub model: MotionModel<T>,
}

pub const OBJECT_RECORD_COLUMNS: &str = "frame_time track_id cx cy bx by bw bh h_x h_y h_z theta";

pub fn write_object_records<T: Scalar, W: Write>(
    mut w: W,
    header: &[String],
    records: &[ObjectRecord<T>],
) -> Result<()> {
    let io = |e| Error::io("<writer>", e);
    for h in header {
        writeln!(w, "# {h}").map_err(io)?;
    }
    writeln!(w, "# {OBJECT_RECORD_COLUMNS}").map_err(io)?;
    for r in records {
        write_object_record(&mut w, r)?;
    }
    w.flush().map_err(io)
}

/// Writes a single record line; for streaming output.
pub fn write_object_record<T: Scalar, W: Write>(mut w: W, r: &ObjectRecord<T>) -> Result<()> {
    let b = &r.bbox;
    let m = &r.model;
    writeln!(
        w,
        "{} {} {} {} {} {} {} {} {} {} {} {}",
        format_time(r.frame_time),
        r.id,
        r.centroid.0,
        r.centroid.1,
        b.x,
        b.y,
        b.w,
        b.h,
        m.h_x,
        m.h_y,
        m.h_z,
        m.theta
    )
    .map_err(|e| Error::io("<writer>", e))
}

pub fn read_object_records<T: Scalar>(path: &Path) -> Result<Vec<ObjectRecord<T>>> {
    read_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            let v = fields::<T>(path, line, &text, 12)?;
            Ok(ObjectRecord {
                frame_time: v[0],
                id: as_id(v[1], path, line, &text)?,
                centroid: (v[2], v[3]),
                bbox: BoundingBox::new(v[4], v[5], v[6], v[7]),
                model: MotionModel::new(v[8], v[9], v[10], v[11]),
            })
        })
        .collect()
}
