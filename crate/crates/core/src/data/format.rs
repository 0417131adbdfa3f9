//! The `WLAD` dataset container.
//!
//! All integers are little-endian.
//!
//! ```text
//! header   : magic "WLAD" | version u32 | T u32 | M u32 | K u32 | sample_count u32
//! sample   : id_len u32 | id (UTF-8) | T·M × f32 (row-major) | n_labels u16 | n_labels × u16
//! ```

use std::io::{Read, Write};

use super::Sample;
use crate::error::{Error, Result};

pub const DATASET_MAGIC: [u8; 4] = *b"WLAD";
pub const DATASET_VERSION: u32 = 1;
pub const HEADER_BYTES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DatasetHeader {
    pub version: u32,
    pub frames: u32,
    pub feature_dim: u32,
    pub n_classes: u32,
    pub sample_count: u32,
}

impl DatasetHeader {
    pub fn new(frames: usize, feature_dim: usize, n_classes: usize, sample_count: usize) -> Self {
        Self {
            version: DATASET_VERSION,
            frames: frames as u32,
            feature_dim: feature_dim as u32,
            n_classes: n_classes as u32,
            sample_count: sample_count as u32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != DATASET_VERSION {
            return Err(Error::UnsupportedVersion(self.version));
        }
        if self.frames == 0 || self.feature_dim == 0 || self.n_classes == 0 {
            return Err(Error::InvalidHeader(format!(
                "T, M and K must be positive (T={}, M={}, K={})",
                self.frames, self.feature_dim, self.n_classes
            )));
        }
        if self.n_classes > u16::MAX as u32 + 1 {
            return Err(Error::InvalidHeader(format!(
                "K={} does not fit 16-bit label indices",
                self.n_classes
            )));
        }
        Ok(())
    }

    pub fn frames(&self) -> usize {
        self.frames as usize
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim as usize
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes as usize
    }

    fn to_bytes(self) -> [u8; HEADER_BYTES] {
        let mut out = [0u8; HEADER_BYTES];
        out[..4].copy_from_slice(&DATASET_MAGIC);
        for (i, v) in [
            self.version,
            self.frames,
            self.feature_dim,
            self.n_classes,
            self.sample_count,
        ]
        .into_iter()
        .enumerate()
        {
            out[4 + 4 * i..8 + 4 * i].copy_from_slice(&v.to_le_bytes());
        }
        out
    }
}

/// A header together with its samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(frames: usize, feature_dim: usize, n_classes: usize, samples: Vec<Sample>) -> Self {
        Self {
            header: DatasetHeader::new(frames, feature_dim, n_classes, samples.len()),
            samples,
        }
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let (header, samples) = read_dataset(std::io::BufReader::new(file))?;
        Ok(Self { header, samples })
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<u64> {
        let file = std::fs::File::create(path)?;
        let mut sink = std::io::BufWriter::new(file);
        let n = write_dataset(&self.samples, &self.header, &mut sink)?;
        sink.flush()?;
        Ok(n)
    }
}

fn check_sample(sample: &Sample, ordinal: usize, header: &DatasetHeader) -> Result<()> {
    let invalid = |message: String| Error::InvalidSample {
        sample: ordinal,
        message,
    };
    if sample.frames != header.frames() || sample.feature_dim != header.feature_dim() {
        return Err(invalid(format!(
            "features are {}x{}, header says {}x{}",
            sample.frames,
            sample.feature_dim,
            header.frames(),
            header.feature_dim()
        )));
    }
    if sample.features.len() != sample.frames * sample.feature_dim {
        return Err(invalid(format!(
            "{} feature values for a {}x{} matrix",
            sample.features.len(),
            sample.frames,
            sample.feature_dim
        )));
    }
    if let Some(pos) = sample.features.iter().position(|v| !v.is_finite()) {
        return Err(invalid(format!("non-finite feature value at index {pos}")));
    }
    if sample.labels.len() > u16::MAX as usize {
        return Err(invalid(format!(
            "{} labels exceed the u16 count",
            sample.labels.len()
        )));
    }
    if !sample.labels.windows(2).all(|w| w[0] < w[1]) {
        return Err(invalid("label indices are not strictly increasing".into()));
    }
    if let Some(&bad) = sample.labels.iter().find(|&&l| l >= header.n_classes()) {
        return Err(invalid(format!(
            "label index {bad} is out of range for K={}",
            header.n_classes()
        )));
    }
    Ok(())
}

/// Serializes `samples` under `header`; returns the number of bytes written.
pub fn write_dataset<W: Write>(
    samples: &[Sample],
    header: &DatasetHeader,
    sink: &mut W,
) -> Result<u64> {
    header.validate()?;
    if header.sample_count as usize != samples.len() {
        return Err(Error::InvalidHeader(format!(
            "header declares {} samples, {} given",
            header.sample_count,
            samples.len()
        )));
    }
    for (i, s) in samples.iter().enumerate() {
        check_sample(s, i, header)?;
    }
    let mut written = 0u64;
    let header_bytes = header.to_bytes();
    sink.write_all(&header_bytes)?;
    written += header_bytes.len() as u64;

    let mut buf = Vec::new();
    for s in samples {
        buf.clear();
        buf.extend_from_slice(&(s.id.len() as u32).to_le_bytes());
        buf.extend_from_slice(s.id.as_bytes());
        for v in &s.features {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&(s.labels.len() as u16).to_le_bytes());
        for &l in &s.labels {
            buf.extend_from_slice(&(l as u16).to_le_bytes());
        }
        sink.write_all(&buf)?;
        written += buf.len() as u64;
    }
    Ok(written)
}

fn read_exact_or<R: Read>(
    source: &mut R,
    buf: &mut [u8],
    what: impl FnOnce() -> String,
) -> Result<()> {
    source.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated { what: what() },
        _ => Error::Io(e),
    })
}

pub fn read_dataset<R: Read>(mut source: R) -> Result<(DatasetHeader, Vec<Sample>)> {
    let mut raw = [0u8; HEADER_BYTES];
    read_exact_or(&mut source, &mut raw[..4], || "header magic".into())?;
    let found: [u8; 4] = raw[..4].try_into().unwrap();
    if found != DATASET_MAGIC {
        return Err(Error::BadMagic {
            expected: DATASET_MAGIC,
            found,
        });
    }
    read_exact_or(&mut source, &mut raw[4..], || "header".into())?;
    let field = |i: usize| u32::from_le_bytes(raw[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    let header = DatasetHeader {
        version: field(0),
        frames: field(1),
        feature_dim: field(2),
        n_classes: field(3),
        sample_count: field(4),
    };
    header.validate()?;

    let (t, m) = (header.frames(), header.feature_dim());
    let mut samples = Vec::with_capacity(header.sample_count.min(1 << 16) as usize);
    let mut word = [0u8; 4];
    let mut half = [0u8; 2];
    let mut feature_bytes = vec![0u8; t * m * 4];
    for ordinal in 0..header.sample_count as usize {
        let at = |part: &str| format!("sample {ordinal} ({part})");
        read_exact_or(&mut source, &mut word, || at("id length"))?;
        let id_len = u32::from_le_bytes(word) as usize;
        let mut id_bytes = vec![0u8; id_len];
        read_exact_or(&mut source, &mut id_bytes, || at("id"))?;
        let id = String::from_utf8(id_bytes).map_err(|_| Error::InvalidSample {
            sample: ordinal,
            message: "id is not valid UTF-8".into(),
        })?;
        read_exact_or(&mut source, &mut feature_bytes, || at("features"))?;
        let features: Vec<f32> = feature_bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        read_exact_or(&mut source, &mut half, || at("label count"))?;
        let n_labels = u16::from_le_bytes(half) as usize;
        let mut labels = Vec::with_capacity(n_labels);
        for _ in 0..n_labels {
            read_exact_or(&mut source, &mut half, || at("labels"))?;
            labels.push(u16::from_le_bytes(half) as usize);
        }
        let sample = Sample {
            id,
            frames: t,
            feature_dim: m,
            features,
            labels,
        };
        check_sample(&sample, ordinal, &header)?;
        samples.push(sample);
    }
    Ok((header, samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_sample() -> Sample {
        Sample {
            id: "clip".into(),
            frames: 2,
            feature_dim: 3,
            features: vec![0.5, -1.0, 2.0, 0.0, 3.25, -0.125],
            labels: vec![1],
        }
    }

    #[test]
    fn empty_dataset_is_header_only() {
        let header = DatasetHeader::new(10, 32, 8, 0);
        let mut bytes = Vec::new();
        let n = write_dataset(&[], &header, &mut bytes).unwrap();
        assert_eq!(n, HEADER_BYTES as u64);
        assert_eq!(bytes.len(), HEADER_BYTES);
        assert_eq!(&bytes[..4], b"WLAD");
        assert_eq!(&bytes[20..24], &0u32.to_le_bytes());
    }

    #[test]
    fn byte_count_for_one_small_sample() {
        let header = DatasetHeader::new(2, 3, 4, 1);
        let mut bytes = Vec::new();
        let n = write_dataset(&[tiny_sample()], &header, &mut bytes).unwrap();
        let expected = HEADER_BYTES + (4 + "clip".len()) + 2 * 3 * 4 + (2 + 2);
        assert_eq!(n as usize, expected);
        assert_eq!(bytes.len(), expected);
    }

    #[test]
    fn round_trip() {
        let header = DatasetHeader::new(2, 3, 4, 1);
        let mut bytes = Vec::new();
        write_dataset(&[tiny_sample()], &header, &mut bytes).unwrap();
        let (h, samples) = read_dataset(&bytes[..]).unwrap();
        assert_eq!(h, header);
        assert_eq!(samples, vec![tiny_sample()]);
    }

    #[test]
    fn bad_magic() {
        let header = DatasetHeader::new(2, 3, 4, 1);
        let mut bytes = Vec::new();
        write_dataset(&[tiny_sample()], &header, &mut bytes).unwrap();
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            read_dataset(&bytes[..]),
            Err(Error::BadMagic { found, .. }) if &found == b"XXXX"
        ));
    }

    #[test]
    fn truncation_names_the_sample() {
        let header = DatasetHeader::new(2, 3, 4, 2);
        let mut bytes = Vec::new();
        let mut second = tiny_sample();
        second.id = "other".into();
        write_dataset(&[tiny_sample(), second], &header, &mut bytes).unwrap();
        bytes.truncate(bytes.len() - 10);
        match read_dataset(&bytes[..]) {
            Err(Error::Truncated { what }) => assert!(what.contains("sample 1"), "{what}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn label_out_of_range_on_read() {
        let header = DatasetHeader::new(2, 3, 4, 1);
        let mut bytes = Vec::new();
        write_dataset(&[tiny_sample()], &header, &mut bytes).unwrap();
        let last = bytes.len() - 2;
        bytes[last..].copy_from_slice(&9u16.to_le_bytes());
        assert!(matches!(
            read_dataset(&bytes[..]),
            Err(Error::InvalidSample { sample: 0, .. })
        ));
    }

    #[test]
    fn writer_rejects_mismatch_and_non_finite() {
        let header = DatasetHeader::new(3, 3, 4, 1);
        assert!(write_dataset(&[tiny_sample()], &header, &mut Vec::new()).is_err());
        let header = DatasetHeader::new(2, 3, 4, 1);
        let mut s = tiny_sample();
        s.features[2] = f32::NAN;
        assert!(matches!(
            write_dataset(&[s], &header, &mut Vec::new()),
            Err(Error::InvalidSample { .. })
        ));
    }

    #[test]
    fn header_with_zero_dimension_is_rejected() {
        let mut bytes = Vec::new();
        write_dataset(&[], &DatasetHeader::new(1, 1, 1, 0), &mut bytes).unwrap();
        bytes[8..12].copy_from_slice(&0u32.to_le_bytes());
        assert!(matches!(
            read_dataset(&bytes[..]),
            Err(Error::InvalidHeader(_))
        ));
    }
}
