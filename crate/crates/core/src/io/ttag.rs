//! Binary time-tag stream format.
//!
//! Little-endian layout: magic `TTAG`, version `u32` = 1, `time_unit_fs`
//! `u64`, `record_count` `u64`, then `record_count` records of
//! `{timestamp_ticks u64, channel u32, flags u32}`. An empty stream is a
//! valid 24-byte file. The acquisition span is not persisted; reading
//! reconstructs it as the last timestamp.

use crate::error::{Error, Result};
use crate::montecarlo::{TagRecord, TimeTagStream};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"TTAG";
const VERSION: u32 = 1;
const HEADER_LEN: u64 = 24;
const RECORD_LEN: u64 = 16;

/// Write a stream; bit-exact round trip with [`read_ttag`].
pub fn write_ttag(stream: &TimeTagStream, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&stream.time_unit_fs.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(stream.records.len() as u64).to_le_bytes())
        .map_err(io_err)?;
    for r in &stream.records {
        w.write_all(&r.timestamp.to_le_bytes()).map_err(io_err)?;
        w.write_all(&r.channel.to_le_bytes()).map_err(io_err)?;
        w.write_all(&r.flags.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

/// Read a stream, failing with the byte offset at which the file stopped
/// making sense.
pub fn read_ttag(path: &Path) -> Result<TimeTagStream> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);

    let mut header = [0u8; HEADER_LEN as usize];
    r.read_exact(&mut header).map_err(|_| Error::Format {
        offset: 0,
        message: "file shorter than the 24-byte header".into(),
    })?;
    if &header[0..4] != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad magic {:02x?}", &header[0..4]),
        });
    }
    let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(Error::Format {
            offset: 4,
            message: format!("unsupported version {version}"),
        });
    }
    let time_unit_fs = u64::from_le_bytes(header[8..16].try_into().unwrap());
    if time_unit_fs == 0 {
        return Err(Error::Format {
            offset: 8,
            message: "time unit must be positive".into(),
        });
    }
    let count = u64::from_le_bytes(header[16..24].try_into().unwrap());

    let mut records = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut buf = [0u8; RECORD_LEN as usize];
    for i in 0..count {
        let offset = HEADER_LEN + i * RECORD_LEN;
        r.read_exact(&mut buf).map_err(|_| Error::Format {
            offset,
            message: format!("truncated record section: expected {count} records, got {i}"),
        })?;
        records.push(TagRecord {
            timestamp: u64::from_le_bytes(buf[0..8].try_into().unwrap()),
            channel: u32::from_le_bytes(buf[8..12].try_into().unwrap()),
            flags: u32::from_le_bytes(buf[12..16].try_into().unwrap()),
        });
    }
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing).map_err(|e| Error::io(path, e))? != 0 {
        return Err(Error::Format {
            offset: HEADER_LEN + count * RECORD_LEN,
            message: "trailing bytes after the record section".into(),
        });
    }

    let span = records.last().map(|r| r.timestamp).unwrap_or(0);
    TimeTagStream::new(time_unit_fs, span, records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::FLAG_DARK;

    fn sample_stream() -> TimeTagStream {
        let records = vec![
            TagRecord {
                timestamp: 1_000,
                channel: 0,
                flags: 0,
            },
            TagRecord {
                timestamp: 2_500,
                channel: 1,
                flags: FLAG_DARK,
            },
            TagRecord {
                timestamp: 2_500,
                channel: 0,
                flags: 0,
            },
            TagRecord {
                timestamp: 9_999,
                channel: 1,
                flags: 0,
            },
        ];
        TimeTagStream::new(1, 9_999, records).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = std::env::temp_dir().join("rfsim_ttag_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("roundtrip.ttag");
        let stream = sample_stream();
        write_ttag(&stream, &path).unwrap();
        let back = read_ttag(&path).unwrap();
        assert_eq!(back.records, stream.records);
        assert_eq!(back.time_unit_fs, stream.time_unit_fs);
        assert_eq!(back.span_ticks, stream.records.last().unwrap().timestamp);
    }

    #[test]
    fn empty_stream_is_24_bytes() {
        let dir = std::env::temp_dir().join("rfsim_ttag_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("empty.ttag");
        write_ttag(&TimeTagStream::empty(0), &path).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 24);
        let back = read_ttag(&path).unwrap();
        assert!(back.records.is_empty());
    }

    #[test]
    fn truncation_reports_byte_offset() {
        let dir = std::env::temp_dir().join("rfsim_ttag_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("truncated.ttag");
        write_ttag(&sample_stream(), &path).unwrap();
        // Drop the last record: header says 4, file holds 3.
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 16]).unwrap();
        match read_ttag(&path) {
            Err(Error::Format { offset, .. }) => {
                assert_eq!(offset, 24 + 3 * 16);
            }
            other => panic!("expected a format error, got {other:?}"),
        }
    }

    #[test]
    fn bad_magic_and_version_are_rejected() {
        let dir = std::env::temp_dir().join("rfsim_ttag_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("magic.ttag");
        write_ttag(&sample_stream(), &path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_ttag(&path),
            Err(Error::Format { offset: 0, .. })
        ));

        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'T';
        bytes[4] = 9;
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_ttag(&path),
            Err(Error::Format { offset: 4, .. })
        ));
    }
}
