//! Detection records and their on-disk formats.
//!
//! Binary layout (little-endian): a 64-byte header
//! `magic "FCTG" | version u16 | seed u64 | config SHA-256 [u8; 32] | zero padding`
//! followed by 16-byte records `channel u8 | 7 reserved zero bytes | time_ps u64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::chip::Channel;
use crate::{Error, Result};

pub const TAG_MAGIC: [u8; 4] = *b"FCTG";
pub const TAG_FORMAT_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 64;
pub const RECORD_LEN: usize = 16;

/// One detector click.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeTag {
    pub time_ps: u64,
    pub channel: Channel,
}

impl TimeTag {
    pub fn new(channel: Channel, time_ps: u64) -> Self {
        TimeTag { time_ps, channel }
    }

    fn sort_key(&self) -> (u64, u8) {
        (self.time_ps, self.channel.code())
    }
}

/// Orders tags by time, then channel code.
pub fn sort_tags(tags: &mut [TimeTag]) {
    tags.sort_unstable_by_key(TimeTag::sort_key);
}

/// Index of the first record whose time goes backwards.
pub fn first_unsorted(tags: &[TimeTag]) -> Option<usize> {
    tags.windows(2)
        .position(|w| w[1].time_ps < w[0].time_ps)
        .map(|i| i + 1)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StreamMeta {
    pub seed: u64,
    pub cfg_sha256: [u8; 32],
    pub pulses: u64,
    /// Pulses dropped because the photon number at C3 exceeded the cap.
    pub truncated: u64,
}

/// Time-ordered tag sequence with run metadata.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TagStream {
    pub meta: StreamMeta,
    tags: Vec<TimeTag>,
}

impl TagStream {
    /// Builds a stream, rejecting out-of-order input.
    pub fn new(meta: StreamMeta, tags: Vec<TimeTag>) -> Result<Self> {
        if let Some(index) = first_unsorted(&tags) {
            return Err(Error::Unsorted { index });
        }
        Ok(TagStream { meta, tags })
    }

    /// Builds a stream after sorting `tags`.
    pub fn from_unsorted(meta: StreamMeta, mut tags: Vec<TimeTag>) -> Self {
        sort_tags(&mut tags);
        TagStream { meta, tags }
    }

    pub fn tags(&self) -> &[TimeTag] {
        &self.tags
    }

    pub fn into_tags(self) -> Vec<TimeTag> {
        self.tags
    }

    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn count(&self, channel: Channel) -> usize {
        self.tags.iter().filter(|t| t.channel == channel).count()
    }

    /// Merges another time-ordered tag list into this stream.
    pub fn merge(&mut self, other: &[TimeTag]) {
        let mut merged = Vec::with_capacity(self.tags.len() + other.len());
        let (mut a, mut b) = (self.tags.iter().peekable(), other.iter().peekable());
        loop {
            let next = match (a.peek(), b.peek()) {
                (Some(x), Some(y)) => {
                    if y.sort_key() < x.sort_key() {
                        b.next()
                    } else {
                        a.next()
                    }
                }
                (Some(_), None) => a.next(),
                (None, Some(_)) => b.next(),
                (None, None) => break,
            };
            merged.push(*next.expect("peeked"));
        }
        self.tags = merged;
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> Result<()> {
        write_header(&mut w, &self.meta)?;
        for tag in &self.tags {
            write_record(&mut w, tag)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)
            .map_err(|_| Error::Format("file shorter than the 64-byte header".into()))?;
        if header[0..4] != TAG_MAGIC {
            return Err(Error::Format("bad magic".into()));
        }
        let version = u16::from_le_bytes([header[4], header[5]]);
        if version != TAG_FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let seed = u64::from_le_bytes(header[6..14].try_into().expect("8 bytes"));
        let cfg_sha256: [u8; 32] = header[14..46].try_into().expect("32 bytes");

        let mut body = Vec::new();
        r.read_to_end(&mut body)?;
        if body.len() % RECORD_LEN != 0 {
            return Err(Error::Format(format!(
                "trailing {} bytes",
                body.len() % RECORD_LEN
            )));
        }
        let mut tags = Vec::with_capacity(body.len() / RECORD_LEN);
        for (i, rec) in body.chunks_exact(RECORD_LEN).enumerate() {
            let channel = Channel::from_code(rec[0])
                .ok_or_else(|| Error::Format(format!("record {i}: unknown channel {}", rec[0])))?;
            if rec[1..8].iter().any(|&b| b != 0) {
                return Err(Error::Format(format!(
                    "record {i}: reserved bytes not zero"
                )));
            }
            let time_ps = u64::from_le_bytes(rec[8..16].try_into().expect("8 bytes"));
            tags.push(TimeTag { time_ps, channel });
        }
        let meta = StreamMeta {
            seed,
            cfg_sha256,
            ..StreamMeta::default()
        };
        TagStream::new(meta, tags)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "channel,time_ps")?;
        for t in &self.tags {
            writeln!(w, "{},{}", t.channel, t.time_ps)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut tags = Vec::new();
        for (i, line) in BufReader::new(r).lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (i == 0 && line.starts_with("channel")) {
                continue;
            }
            let (ch, t) = line.split_once(',').ok_or_else(|| {
                Error::Format(format!("line {}: expected channel,time_ps", i + 1))
            })?;
            let channel: Channel = ch
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad channel {ch:?}", i + 1)))?;
            let time_ps = t
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad time {t:?}", i + 1)))?;
            tags.push(TimeTag { time_ps, channel });
        }
        TagStream::new(StreamMeta::default(), tags)
    }

    /// Reads a tag file, choosing the format from the extension (`.csv`
    /// is text, anything else binary).
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path)?;
        if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("csv"))
        {
            Self::read_csv(file)
        } else {
            Self::read_binary(BufReader::new(file))
        }
    }
}

fn write_header<W: Write>(w: &mut W, meta: &StreamMeta) -> Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(&TAG_MAGIC);
    header[4..6].copy_from_slice(&TAG_FORMAT_VERSION.to_le_bytes());
    header[6..14].copy_from_slice(&meta.seed.to_le_bytes());
    header[14..46].copy_from_slice(&meta.cfg_sha256);
    w.write_all(&header)?;
    Ok(())
}

fn write_record<W: Write>(w: &mut W, tag: &TimeTag) -> Result<()> {
    let mut rec = [0u8; RECORD_LEN];
    rec[0] = tag.channel.code();
    rec[8..16].copy_from_slice(&tag.time_ps.to_le_bytes());
    w.write_all(&rec)?;
    Ok(())
}

/// Consumer of time-ordered tag batches produced by the runner.
pub trait TagSink {
    fn accept(&mut self, tags: &[TimeTag]) -> Result<()>;
}

impl TagSink for Vec<TimeTag> {
    fn accept(&mut self, tags: &[TimeTag]) -> Result<()> {
        self.extend_from_slice(tags);
        Ok(())
    }
}

impl<S: TagSink + ?Sized> TagSink for &mut S {
    fn accept(&mut self, tags: &[TimeTag]) -> Result<()> {
        (**self).accept(tags)
    }
}

/// Fans each batch out to two sinks.
pub struct Tee<A, B>(pub A, pub B);

impl<A: TagSink, B: TagSink> TagSink for Tee<A, B> {
    fn accept(&mut self, tags: &[TimeTag]) -> Result<()> {
        self.0.accept(tags)?;
        self.1.accept(tags)
    }
}

/// Streams tags straight into a binary tag file. The file is removed if
/// the writer is dropped without [`BinaryTagWriter::finish`].
pub struct BinaryTagWriter {
    path: PathBuf,
    out: Option<BufWriter<File>>,
}

impl BinaryTagWriter {
    pub fn create(path: impl AsRef<Path>, meta: &StreamMeta) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut out = BufWriter::new(File::create(&path)?);
        if let Err(e) = write_header(&mut out, meta) {
            drop(out);
            let _ = std::fs::remove_file(&path);
            return Err(e);
        }
        Ok(BinaryTagWriter {
            path,
            out: Some(out),
        })
    }

    pub fn finish(mut self) -> Result<()> {
        let mut out = self.out.take().expect("writer open");
        out.flush()?;
        Ok(())
    }
}

impl TagSink for BinaryTagWriter {
    fn accept(&mut self, tags: &[TimeTag]) -> Result<()> {
        let out = self.out.as_mut().expect("writer open");
        for t in tags {
            write_record(out, t)?;
        }
        Ok(())
    }
}

impl Drop for BinaryTagWriter {
    fn drop(&mut self) {
        if let Some(out) = self.out.take() {
            drop(out);
            let _ = std::fs::remove_file(&self.path);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample() -> TagStream {
        let meta = StreamMeta {
            seed: 0xdead_beef,
            cfg_sha256: [7u8; 32],
            ..StreamMeta::default()
        };
        TagStream::new(
            meta,
            vec![
                TimeTag::new(Channel::H1, 0),
                TimeTag::new(Channel::S2, 0),
                TimeTag::new(Channel::H2, 13_070),
                TimeTag::new(Channel::S1, u64::MAX / 2),
            ],
        )
        .unwrap()
    }

    #[test]
    fn binary_layout_is_exact() {
        let mut buf = Vec::new();
        sample().write_binary(&mut buf).unwrap();
        assert_eq!(buf.len(), HEADER_LEN + 4 * RECORD_LEN);
        assert_eq!(&buf[0..4], b"FCTG");
        assert_eq!(&buf[4..6], &[1, 0]);
        assert_eq!(&buf[6..14], &0xdead_beefu64.to_le_bytes());
        assert_eq!(&buf[14..46], &[7u8; 32]);
        assert!(buf[46..64].iter().all(|&b| b == 0));
        let rec = &buf[HEADER_LEN + 2 * RECORD_LEN..HEADER_LEN + 3 * RECORD_LEN];
        assert_eq!(rec[0], 3);
        assert!(rec[1..8].iter().all(|&b| b == 0));
        assert_eq!(&rec[8..16], &13_070u64.to_le_bytes());
    }

    #[test]
    fn rejects_corrupt_files() {
        let mut buf = Vec::new();
        sample().write_binary(&mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            TagStream::read_binary(&bad[..]),
            Err(Error::Format(_))
        ));
        let mut bad = buf.clone();
        bad[HEADER_LEN] = 9;
        assert!(TagStream::read_binary(&bad[..]).is_err());
        let mut bad = buf.clone();
        bad[HEADER_LEN + 3] = 1;
        assert!(TagStream::read_binary(&bad[..]).is_err());
        assert!(TagStream::read_binary(&buf[..buf.len() - 3]).is_err());
        assert!(TagStream::read_binary(&buf[..10]).is_err());
    }

    #[test]
    fn csv_format() {
        let mut buf = Vec::new();
        sample().write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("channel,time_ps\nH1,0\nS2,0\nH2,13070\n"));
        let back = TagStream::read_csv(&buf[..]).unwrap();
        assert_eq!(back.tags(), sample().tags());
    }

    #[test]
    fn unsorted_input_is_rejected() {
        let tags = vec![TimeTag::new(Channel::H1, 10), TimeTag::new(Channel::H1, 5)];
        assert!(matches!(
            TagStream::new(StreamMeta::default(), tags),
            Err(Error::Unsorted { index: 1 })
        ));
    }

    #[test]
    fn writer_removes_partial_file_on_drop() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partial.fctg");
        {
            let mut w = BinaryTagWriter::create(&path, &StreamMeta::default()).unwrap();
            w.accept(&[TimeTag::new(Channel::H1, 1)]).unwrap();
        }
        assert!(!path.exists());
        let mut w = BinaryTagWriter::create(&path, &StreamMeta::default()).unwrap();
        w.accept(&[TimeTag::new(Channel::H1, 1)]).unwrap();
        w.finish().unwrap();
        assert_eq!(TagStream::load(&path).unwrap().len(), 1);
    }

    fn arb_tags() -> impl Strategy<Value = Vec<TimeTag>> {
        proptest::collection::vec((0u8..4, 0u64..1_000_000), 0..200).prop_map(|v| {
            let mut tags: Vec<TimeTag> = v
                .into_iter()
                .map(|(c, t)| TimeTag::new(Channel::from_code(c).unwrap(), t * 10))
                .collect();
            sort_tags(&mut tags);
            tags
        })
    }

    proptest! {
        #[test]
        fn binary_and_csv_round_trip(tags in arb_tags(), seed in any::<u64>()) {
            let meta = StreamMeta { seed, cfg_sha256: [seed as u8; 32], ..StreamMeta::default() };
            let s = TagStream::new(meta.clone(), tags).unwrap();
            let mut buf = Vec::new();
            s.write_binary(&mut buf).unwrap();
            let back = TagStream::read_binary(&buf[..]).unwrap();
            prop_assert_eq!(back.tags(), s.tags());
            prop_assert_eq!(back.meta.seed, seed);
            let mut csv = Vec::new();
            s.write_csv(&mut csv).unwrap();
            let back = TagStream::read_csv(&csv[..]).unwrap();
            prop_assert_eq!(back.tags(), s.tags());
        }

        #[test]
        fn merge_keeps_order(a in arb_tags(), b in arb_tags()) {
            let mut s = TagStream::new(StreamMeta::default(), a.clone()).unwrap();
            s.merge(&b);
            prop_assert_eq!(s.len(), a.len() + b.len());
            prop_assert!(first_unsorted(s.tags()).is_none());
        }
    }
}
