use std::io::{BufRead, BufReader, Read, Write};

use super::IoError;
use crate::event::{Event, EventStream, SensorGeometry, StreamError, NEGATIVE, POSITIVE};
use crate::repr::CountAccumulator;

pub const EVB1_MAGIC: &[u8; 4] = b"EVB1";
pub const EVB1_HEADER_LEN: usize = 16;
pub const EVB1_RECORD_LEN: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventFormat {
    /// `t,x,y,p` per line, LF separated, no header.
    Text,
    /// Little-endian fixed-record binary.
    Evb1,
}

/// Guesses the format from the first bytes of a file.
pub fn sniff_format(prefix: &[u8]) -> EventFormat {
    if prefix.starts_with(EVB1_MAGIC) {
        EventFormat::Evb1
    } else {
        EventFormat::Text
    }
}

/// Incremental EVB1 decoder.
///
/// Bytes may arrive in chunks of any size; records split across chunk
/// boundaries are carried over. Each decoded record is validated against the
/// header geometry and the running timestamp order.
#[derive(Debug, Default)]
pub struct Evb1Decoder {
    header: Option<(SensorGeometry, u32)>,
    pending: Vec<u8>,
    decoded: u64,
    last_t: Option<u64>,
    offset: u64,
}

impl Evb1Decoder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Geometry and declared record count, once the header is complete.
    pub fn header(&self) -> Option<(SensorGeometry, u32)> {
        self.header
    }

    pub fn decoded(&self) -> u64 {
        self.decoded
    }

    fn parse_header(&mut self, h: &[u8]) -> Result<(), IoError> {
        if &h[0..4] != EVB1_MAGIC {
            return Err(IoError::Magic {
                expected: "EVB1".into(),
                found: String::from_utf8_lossy(&h[0..4]).into_owned(),
            });
        }
        let width = u16::from_le_bytes([h[4], h[5]]);
        let height = u16::from_le_bytes([h[6], h[7]]);
        let count = u32::from_le_bytes([h[12], h[13], h[14], h[15]]);
        let geometry = SensorGeometry::new(width, height)?;
        self.header = Some((geometry, count));
        self.offset = EVB1_HEADER_LEN as u64;
        Ok(())
    }

    #[inline]
    fn decode_record(&mut self, r: &[u8], geometry: SensorGeometry) -> Result<Event, IoError> {
        let t = u64::from_le_bytes(r[0..8].try_into().unwrap());
        let x = u16::from_le_bytes([r[8], r[9]]);
        let y = u16::from_le_bytes([r[10], r[11]]);
        let p = r[12] as i8;
        let index = self.decoded as usize;
        if !geometry.contains(x, y) {
            return Err(IoError::Validation(StreamError::OutOfBounds {
                index,
                x,
                y,
                width: geometry.width,
                height: geometry.height,
            }));
        }
        if p != POSITIVE && p != NEGATIVE {
            return Err(IoError::Record {
                offset: self.offset,
                msg: format!("polarity byte {p} is not +1 or -1"),
            });
        }
        if let Some(prev) = self.last_t {
            if t < prev {
                return Err(IoError::Validation(StreamError::OutOfOrder { index, t, prev }));
            }
        }
        self.last_t = Some(t);
        self.decoded += 1;
        self.offset += EVB1_RECORD_LEN as u64;
        Ok(Event { t, x, y, p })
    }

    /// Decodes as many whole records as `chunk` (plus carried bytes) holds,
    /// appending them to `out`.
    pub fn feed(&mut self, mut chunk: &[u8], out: &mut Vec<Event>) -> Result<(), IoError> {
        if self.header.is_none() {
            let need = EVB1_HEADER_LEN - self.pending.len();
            let take = need.min(chunk.len());
            self.pending.extend_from_slice(&chunk[..take]);
            chunk = &chunk[take..];
            if self.pending.len() < EVB1_HEADER_LEN {
                return Ok(());
            }
            let h = std::mem::take(&mut self.pending);
            self.parse_header(&h)?;
        }
        let (geometry, count) = self.header.unwrap();
        if !self.pending.is_empty() {
            let need = EVB1_RECORD_LEN - self.pending.len();
            let take = need.min(chunk.len());
            self.pending.extend_from_slice(&chunk[..take]);
            chunk = &chunk[take..];
            if self.pending.len() < EVB1_RECORD_LEN {
                return Ok(());
            }
            let rec: [u8; EVB1_RECORD_LEN] = self.pending[..].try_into().unwrap();
            self.pending.clear();
            self.check_count(count)?;
            let e = self.decode_record(&rec, geometry)?;
            out.push(e);
        }
        let whole = chunk.len() / EVB1_RECORD_LEN * EVB1_RECORD_LEN;
        out.reserve(whole / EVB1_RECORD_LEN);
        for rec in chunk[..whole].chunks_exact(EVB1_RECORD_LEN) {
            self.check_count(count)?;
            let e = self.decode_record(rec, geometry)?;
            out.push(e);
        }
        self.pending.extend_from_slice(&chunk[whole..]);
        Ok(())
    }

    fn check_count(&self, count: u32) -> Result<(), IoError> {
        if self.decoded >= count as u64 {
            return Err(IoError::Record {
                offset: self.offset,
                msg: format!("data continues past the declared {count} records"),
            });
        }
        Ok(())
    }

    /// Checks that the input ended on a record boundary after exactly the
    /// declared number of records.
    pub fn finish(self) -> Result<SensorGeometry, IoError> {
        let Some((geometry, count)) = self.header else {
            return Err(IoError::Truncated(format!(
                "EVB1 header needs {EVB1_HEADER_LEN} bytes, got {}",
                self.pending.len()
            )));
        };
        if !self.pending.is_empty() {
            return Err(IoError::Truncated(format!(
                "partial record of {} bytes at offset {}",
                self.pending.len(),
                self.offset
            )));
        }
        if self.decoded != count as u64 {
            return Err(IoError::Truncated(format!(
                "header declares {count} records, found {}",
                self.decoded
            )));
        }
        Ok(geometry)
    }
}

/// Streaming EVB1 writer for a record count known up front.
///
/// Records are not validated here. `finish` fails unless exactly `count`
/// records were written.
pub struct Evb1Writer<W: Write> {
    writer: W,
    count: u32,
    written: u64,
    buf: Vec<u8>,
}

impl<W: Write> Evb1Writer<W> {
    pub fn new(mut writer: W, geometry: SensorGeometry, count: u32) -> Result<Self, IoError> {
        let mut header = [0u8; EVB1_HEADER_LEN];
        header[0..4].copy_from_slice(EVB1_MAGIC);
        header[4..6].copy_from_slice(&geometry.width.to_le_bytes());
        header[6..8].copy_from_slice(&geometry.height.to_le_bytes());
        header[12..16].copy_from_slice(&count.to_le_bytes());
        writer.write_all(&header)?;
        Ok(Evb1Writer {
            writer,
            count,
            written: 0,
            buf: Vec::new(),
        })
    }

    pub fn write(&mut self, events: &[Event]) -> Result<(), IoError> {
        if self.written + events.len() as u64 > self.count as u64 {
            return Err(IoError::Invalid(format!(
                "more than the declared {} records",
                self.count
            )));
        }
        self.buf.clear();
        self.buf.reserve(events.len() * EVB1_RECORD_LEN);
        for e in events {
            let mut rec = [0u8; EVB1_RECORD_LEN];
            rec[0..8].copy_from_slice(&e.t.to_le_bytes());
            rec[8..10].copy_from_slice(&e.x.to_le_bytes());
            rec[10..12].copy_from_slice(&e.y.to_le_bytes());
            rec[12] = e.p as u8;
            self.buf.extend_from_slice(&rec);
        }
        self.writer.write_all(&self.buf)?;
        self.written += events.len() as u64;
        Ok(())
    }

    pub fn finish(mut self) -> Result<W, IoError> {
        if self.written != self.count as u64 {
            return Err(IoError::Invalid(format!(
                "wrote {} of {} declared records",
                self.written, self.count
            )));
        }
        self.writer.flush()?;
        Ok(self.writer)
    }
}

/// Streams an EVB1 source through the decoder into per-pixel counts,
/// holding at most one chunk of events in memory. Returns the accumulator
/// and the number of events seen.
pub fn accumulate_evb1_counts<R: Read>(
    mut reader: R,
    chunk_bytes: usize,
) -> Result<(CountAccumulator, u64), IoError> {
    let mut decoder = Evb1Decoder::new();
    let mut buf = vec![0u8; chunk_bytes.max(EVB1_RECORD_LEN)];
    let mut events = Vec::with_capacity(buf.len() / EVB1_RECORD_LEN + 1);
    let mut acc: Option<CountAccumulator> = None;
    loop {
        let n = match reader.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        };
        events.clear();
        decoder.feed(&buf[..n], &mut events)?;
        if acc.is_none() {
            if let Some((g, _)) = decoder.header() {
                acc = Some(CountAccumulator::new(g));
            }
        }
        if let Some(a) = acc.as_mut() {
            a.add(&events);
        }
    }
    let total = decoder.decoded();
    let geometry = decoder.finish()?;
    Ok((acc.unwrap_or_else(|| CountAccumulator::new(geometry)), total))
}

/// Writes `count` pseudo-random, time-ordered events as EVB1. Deterministic
/// for a given seed; used to build throughput fixtures of any size.
pub fn write_synthetic_evb1<W: Write>(
    writer: W,
    geometry: SensorGeometry,
    count: u32,
    seed: u64,
) -> Result<W, IoError> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut enc = Evb1Writer::new(writer, geometry, count)?;
    let mut batch = Vec::with_capacity(1 << 16);
    let mut t = 0u64;
    let mut left = count as u64;
    while left > 0 {
        batch.clear();
        let n = left.min(1 << 16);
        for _ in 0..n {
            let r: u64 = rng.gen();
            t += r & 3;
            batch.push(Event {
                t,
                x: ((r >> 8) % geometry.width as u64) as u16,
                y: ((r >> 32) % geometry.height as u64) as u16,
                p: if r & 4 == 0 { POSITIVE } else { NEGATIVE },
            });
        }
        enc.write(&batch)?;
        left -= n;
    }
    enc.finish()
}

fn decode_evb1<R: Read>(
    mut reader: R,
    expected: Option<SensorGeometry>,
) -> Result<EventStream, IoError> {
    let mut decoder = Evb1Decoder::new();
    let mut events = Vec::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = match reader.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => n,
            Err(e) if e.kind() == std::io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e.into()),
        };
        decoder.feed(&buf[..n], &mut events)?;
    }
    let geometry = decoder.finish()?;
    if let Some(g) = expected {
        if g != geometry {
            return Err(IoError::Dimensions(format!(
                "file is {}x{}, expected {}x{}",
                geometry.width, geometry.height, g.width, g.height
            )));
        }
    }
    // Records were validated while decoding.
    Ok(EventStream::new(geometry, events)?)
}

fn parse_field<T: std::str::FromStr>(s: &str, name: &str, line: usize) -> Result<T, IoError> {
    s.trim().parse().map_err(|_| IoError::Line {
        line,
        msg: format!("cannot parse {name} from {s:?}"),
    })
}

fn decode_text<R: Read>(reader: R, geometry: SensorGeometry) -> Result<EventStream, IoError> {
    let mut events = Vec::new();
    let mut reader = BufReader::new(reader);
    let mut line = String::new();
    let mut lineno = 0;
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        lineno += 1;
        let body = line.trim_end_matches(['\n', '\r']);
        if body.trim().is_empty() {
            continue;
        }
        let mut it = body.split(',');
        let (Some(t), Some(x), Some(y), Some(p), None) =
            (it.next(), it.next(), it.next(), it.next(), it.next())
        else {
            return Err(IoError::Line {
                line: lineno,
                msg: format!("expected 4 comma-separated fields, got {body:?}"),
            });
        };
        let t: u64 = parse_field(t, "t", lineno)?;
        let x: u16 = parse_field(x, "x", lineno)?;
        let y: u16 = parse_field(y, "y", lineno)?;
        let p: i8 = match parse_field::<i8>(p, "p", lineno)? {
            1 => POSITIVE,
            0 | -1 => NEGATIVE,
            other => {
                return Err(IoError::Line {
                    line: lineno,
                    msg: format!("polarity {other} is not one of 1, -1, 0"),
                })
            }
        };
        events.push(Event { t, x, y, p });
    }
    Ok(EventStream::new(geometry, events)?)
}

/// Reads a full event stream.
///
/// Text input carries no geometry, so `geometry` is required for it. For
/// EVB1 the header geometry is used and, if `geometry` is given, must match.
pub fn decode_events<R: Read>(
    reader: R,
    format: EventFormat,
    geometry: Option<SensorGeometry>,
) -> Result<EventStream, IoError> {
    match format {
        EventFormat::Evb1 => decode_evb1(reader, geometry),
        EventFormat::Text => {
            let g = geometry.ok_or_else(|| {
                IoError::Invalid("text events need an explicit sensor geometry".into())
            })?;
            decode_text(reader, g)
        }
    }
}

pub fn encode_events<W: Write>(
    stream: &EventStream,
    format: EventFormat,
    writer: W,
) -> Result<(), IoError> {
    let mut w = std::io::BufWriter::new(writer);
    match format {
        EventFormat::Evb1 => {
            let count = u32::try_from(stream.len()).map_err(|_| {
                IoError::Invalid(format!("{} events exceed the EVB1 u32 count", stream.len()))
            })?;
            let mut enc = Evb1Writer::new(&mut w, stream.geometry(), count)?;
            enc.write(stream.events())?;
            enc.finish()?;
        }
        EventFormat::Text => {
            for e in stream.events() {
                writeln!(w, "{},{},{},{}", e.t, e.x, e.y, e.p)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g16() -> SensorGeometry {
        SensorGeometry::new(16, 16).unwrap()
    }

    fn encode(s: &EventStream, f: EventFormat) -> Vec<u8> {
        let mut v = Vec::new();
        encode_events(s, f, &mut v).unwrap();
        v
    }

    #[test]
    fn text_two_events() {
        let s = decode_events(&b"100,5,7,1\n200,5,7,-1\n"[..], EventFormat::Text, Some(g16()))
            .unwrap();
        assert_eq!(
            s.events(),
            &[Event::new(100, 5, 7, 1), Event::new(200, 5, 7, -1)]
        );
    }

    #[test]
    fn text_zero_polarity_is_negative() {
        let s = decode_events(&b"1,0,0,0\n"[..], EventFormat::Text, Some(g16())).unwrap();
        assert_eq!(s.events()[0].p, -1);
    }

    #[test]
    fn text_malformed_line_reports_line_number() {
        let err =
            decode_events(&b"1,0,0,1\n2,0,x,1\n"[..], EventFormat::Text, Some(g16())).unwrap_err();
        assert!(matches!(err, IoError::Line { line: 2, .. }), "{err}");
        let err = decode_events(&b"1,0,0\n"[..], EventFormat::Text, Some(g16())).unwrap_err();
        assert!(matches!(err, IoError::Line { line: 1, .. }));
    }

    #[test]
    fn text_out_of_bounds_is_validation_error() {
        let err = decode_events(&b"1,16,0,1\n"[..], EventFormat::Text, Some(g16())).unwrap_err();
        assert!(matches!(
            err,
            IoError::Validation(StreamError::OutOfBounds { index: 0, .. })
        ));
    }

    #[test]
    fn empty_binary_is_header_only() {
        let s = EventStream::empty(g16());
        let bytes = encode(&s, EventFormat::Evb1);
        assert_eq!(bytes.len(), 16);
        let back = decode_events(&bytes[..], EventFormat::Evb1, None).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.geometry(), g16());
    }

    #[test]
    fn one_event_binary_layout() {
        let s = EventStream::new(g16(), vec![Event::new(1 << 40, 3, 9, -1)]).unwrap();
        let bytes = encode(&s, EventFormat::Evb1);
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[0..4], b"EVB1");
        assert_eq!(&bytes[4..8], &[16, 0, 16, 0]);
        assert_eq!(&bytes[8..12], &[0, 0, 0, 0]);
        assert_eq!(&bytes[12..16], &[1, 0, 0, 0]);
        assert_eq!(&bytes[16..24], &(1u64 << 40).to_le_bytes());
        assert_eq!(&bytes[24..28], &[3, 0, 9, 0]);
        assert_eq!(&bytes[28..32], &[0xff, 0, 0, 0]);
        let back = decode_events(&bytes[..], EventFormat::Evb1, None).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn bad_magic() {
        let mut bytes = encode(&EventStream::empty(g16()), EventFormat::Evb1);
        bytes[0] = b'X';
        assert!(matches!(
            decode_events(&bytes[..], EventFormat::Evb1, None),
            Err(IoError::Magic { .. })
        ));
    }

    #[test]
    fn bad_polarity_record_names_offset() {
        let s = EventStream::new(g16(), vec![Event::new(1, 0, 0, 1), Event::new(2, 0, 0, 1)])
            .unwrap();
        let mut bytes = encode(&s, EventFormat::Evb1);
        bytes[16 + 16 + 12] = 0;
        let err = decode_events(&bytes[..], EventFormat::Evb1, None).unwrap_err();
        assert!(matches!(err, IoError::Record { offset: 32, .. }), "{err}");
    }

    #[test]
    fn truncated_and_overlong_inputs() {
        let s = EventStream::new(g16(), vec![Event::new(1, 0, 0, 1)]).unwrap();
        let bytes = encode(&s, EventFormat::Evb1);
        assert!(matches!(
            decode_events(&bytes[..30], EventFormat::Evb1, None),
            Err(IoError::Truncated(_))
        ));
        assert!(matches!(
            decode_events(&bytes[..8], EventFormat::Evb1, None),
            Err(IoError::Truncated(_))
        ));
        let mut longer = bytes.clone();
        longer.extend_from_slice(&bytes[16..]);
        assert!(matches!(
            decode_events(&longer[..], EventFormat::Evb1, None),
            Err(IoError::Record { .. })
        ));
    }

    #[test]
    fn geometry_mismatch() {
        let bytes = encode(&EventStream::empty(g16()), EventFormat::Evb1);
        let other = SensorGeometry::new(8, 8).unwrap();
        assert!(matches!(
            decode_events(&bytes[..], EventFormat::Evb1, Some(other)),
            Err(IoError::Dimensions(_))
        ));
    }

    #[test]
    fn sniffing() {
        assert_eq!(sniff_format(b"EVB1...."), EventFormat::Evb1);
        assert_eq!(sniff_format(b"10,1,1,1"), EventFormat::Text);
    }

    fn arb_stream() -> impl Strategy<Value = EventStream> {
        (1u16..64, 1u16..64).prop_flat_map(|(w, h)| {
            prop::collection::vec((0u64..1 << 34, 0..w, 0..h, any::<bool>()), 0..200).prop_map(
                move |mut v| {
                    v.sort_by_key(|e| e.0);
                    let ev = v
                        .into_iter()
                        .map(|(t, x, y, p)| Event::new(t, x, y, if p { 1 } else { -1 }))
                        .collect();
                    EventStream::new(SensorGeometry::new(w, h).unwrap(), ev).unwrap()
                },
            )
        })
    }

    proptest! {
        #[test]
        fn round_trip_both_formats(s in arb_stream()) {
            let bin = encode(&s, EventFormat::Evb1);
            prop_assert_eq!(&decode_events(&bin[..], EventFormat::Evb1, None).unwrap(), &s);
            let txt = encode(&s, EventFormat::Text);
            prop_assert_eq!(
                &decode_events(&txt[..], EventFormat::Text, Some(s.geometry())).unwrap(),
                &s
            );
        }

        #[test]
        fn chunked_decode_matches_whole(s in arb_stream(), sizes in prop::collection::vec(1usize..40, 1..20)) {
            let bin = encode(&s, EventFormat::Evb1);
            let mut dec = Evb1Decoder::new();
            let mut out = Vec::new();
            let mut rest = &bin[..];
            let mut i = 0;
            while !rest.is_empty() {
                let n = sizes[i % sizes.len()].min(rest.len());
                dec.feed(&rest[..n], &mut out).unwrap();
                rest = &rest[n..];
                i += 1;
            }
            prop_assert_eq!(dec.finish().unwrap(), s.geometry());
            prop_assert_eq!(&out[..], s.events());
        }
    }
}
