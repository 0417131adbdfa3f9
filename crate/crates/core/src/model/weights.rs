//! The `WLAM` weight container.
//!
//! ```text
//! magic "WLAM" | version u32 | M u32 | H u32 | K u32 | L u32 | L × depth u32
//! then f64 values, little-endian, in this order:
//!   per hidden layer (block by block): W, b, gamma, beta, running_mean, running_var
//!   per head: attention W, b, classifier W, b
//!   output W, b
//! ```
//! Matrices are row-major `in × out`.

use std::io::{Read, Write};

use super::arch::{format_arch, ArchSpec};
use super::network::MultiLevelModel;
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: [u8; 4] = *b"WLAM";
pub const WEIGHTS_VERSION: u32 = 1;

fn value_slices(model: &MultiLevelModel) -> Vec<&[f64]> {
    let mut v: Vec<&[f64]> = Vec::new();
    for layer in model.blocks.iter().flatten() {
        v.push(layer.dense.weight.as_slice());
        v.push(&layer.dense.bias);
        v.push(&layer.norm.gamma);
        v.push(&layer.norm.beta);
        v.push(&layer.norm.running_mean);
        v.push(&layer.norm.running_var);
    }
    for head in &model.heads {
        v.push(head.att.weight.as_slice());
        v.push(&head.att.bias);
        v.push(head.cls.weight.as_slice());
        v.push(&head.cls.bias);
    }
    v.push(model.output.weight.as_slice());
    v.push(&model.output.bias);
    v
}

fn value_slices_mut(model: &mut MultiLevelModel) -> Vec<&mut [f64]> {
    let mut v: Vec<&mut [f64]> = Vec::new();
    for layer in model.blocks.iter_mut().flatten() {
        v.push(layer.dense.weight.as_mut_slice());
        v.push(&mut layer.dense.bias);
        v.push(&mut layer.norm.gamma);
        v.push(&mut layer.norm.beta);
        v.push(&mut layer.norm.running_mean);
        v.push(&mut layer.norm.running_var);
    }
    for head in &mut model.heads {
        v.push(head.att.weight.as_mut_slice());
        v.push(&mut head.att.bias);
        v.push(head.cls.weight.as_mut_slice());
        v.push(&mut head.cls.bias);
    }
    v.push(model.output.weight.as_mut_slice());
    v.push(&mut model.output.bias);
    v
}

pub fn save_weights<W: Write>(model: &MultiLevelModel, sink: &mut W) -> Result<()> {
    let spec = model.spec();
    let mut buf = Vec::new();
    buf.extend_from_slice(&WEIGHTS_MAGIC);
    for v in [
        WEIGHTS_VERSION,
        model.feature_dim() as u32,
        spec.hidden_units as u32,
        spec.n_classes as u32,
        spec.levels() as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for &d in &spec.block_depths {
        buf.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for slice in value_slices(model) {
        for v in slice {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    sink.write_all(&buf)?;
    Ok(())
}

fn read_or_truncated<R: Read>(source: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    source.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Truncated {
            what: format!("weight file ({what})"),
        },
        _ => Error::Io(e),
    })
}

fn read_u32<R: Read>(source: &mut R, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_or_truncated(source, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

/// Reads only the header: the saved architecture and input width.
pub fn read_weights_header<R: Read>(source: &mut R) -> Result<(ArchSpec, usize)> {
    let mut magic = [0u8; 4];
    read_or_truncated(source, &mut magic, "magic")?;
    if magic != WEIGHTS_MAGIC {
        return Err(Error::BadMagic {
            expected: WEIGHTS_MAGIC,
            found: magic,
        });
    }
    let version = read_u32(source, "version")?;
    if version != WEIGHTS_VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let m = read_u32(source, "header")? as usize;
    let h = read_u32(source, "header")? as usize;
    let k = read_u32(source, "header")? as usize;
    let l = read_u32(source, "header")? as usize;
    if l > 4096 {
        return Err(Error::InvalidHeader(format!("implausible level count {l}")));
    }
    let depths = (0..l)
        .map(|_| read_u32(source, "block depths").map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let spec = ArchSpec::new(depths, h, k)
        .map_err(|e| Error::InvalidHeader(format!("saved architecture is invalid: {e}")))?;
    Ok((spec, m))
}

/// Loads weights saved for exactly `spec` and input width `feature_dim`.
pub fn load_weights<R: Read>(
    mut source: R,
    spec: &ArchSpec,
    feature_dim: usize,
) -> Result<MultiLevelModel> {
    let (saved, saved_m) = read_weights_header(&mut source)?;
    if &saved != spec || saved_m != feature_dim {
        return Err(Error::SpecMismatch {
            saved: format!("{saved}, M={saved_m}"),
            expected: format!("{spec}, M={feature_dim}"),
        });
    }
    let mut model = MultiLevelModel::build(saved, feature_dim, 0);
    let mut b = [0u8; 8];
    for slice in value_slices_mut(&mut model) {
        for v in slice.iter_mut() {
            read_or_truncated(&mut source, &mut b, "parameters")?;
            *v = f64::from_le_bytes(b);
        }
    }
    if source.read(&mut b)? != 0 {
        return Err(Error::InvalidHeader(
            "trailing bytes after the parameters".into(),
        ));
    }
    Ok(model)
}

pub fn save_weights_file(model: &MultiLevelModel, path: impl AsRef<std::path::Path>) -> Result<()> {
    let mut sink = std::io::BufWriter::new(std::fs::File::create(path)?);
    save_weights(model, &mut sink)?;
    sink.flush()?;
    Ok(())
}

/// Opens a weight file; the architecture comes from `arch`, hidden width
/// from `hidden_units` when given and otherwise from the file.
pub fn load_weights_file(
    path: impl AsRef<std::path::Path>,
    arch: &str,
    hidden_units: Option<usize>,
    n_classes: usize,
    feature_dim: usize,
) -> Result<MultiLevelModel> {
    let path = path.as_ref();
    let (saved, _) = read_weights_header(&mut std::io::BufReader::new(std::fs::File::open(path)?))?;
    let spec = ArchSpec::parse(arch, hidden_units.unwrap_or(saved.hidden_units), n_classes)?;
    if spec.block_depths != saved.block_depths {
        return Err(Error::SpecMismatch {
            saved: format_arch(&saved.block_depths),
            expected: arch.to_string(),
        });
    }
    load_weights(
        std::io::BufReader::new(std::fs::File::open(path)?),
        &spec,
        feature_dim,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Mode, Parameterized, Tensor2};
    use crate::rng::Rng;

    fn trained_model() -> (MultiLevelModel, Tensor2) {
        let spec = ArchSpec::parse("2-A-1-A", 6, 3).unwrap();
        let mut model = MultiLevelModel::build(spec, 4, 5);
        let mut rng = Rng::new(1);
        let x = Tensor2::from_vec(12, 4, (0..48).map(|_| rng.normal()).collect()).unwrap();
        // move the running statistics off their initial values
        model.forward(&x, 3, Mode::Train, &mut rng).unwrap();
        (model, x)
    }

    fn saved(model: &MultiLevelModel) -> Vec<u8> {
        let mut buf = Vec::new();
        save_weights(model, &mut buf).unwrap();
        buf
    }

    #[test]
    fn round_trip_is_bitwise() {
        let (model, x) = trained_model();
        let buf = saved(&model);
        let header = 4 + 4 * 5 + 4 * 2;
        let values = value_slices(&model).iter().map(|s| s.len()).sum::<usize>();
        assert_eq!(buf.len(), header + 8 * values);

        let loaded = load_weights(buf.as_slice(), model.spec(), 4).unwrap();
        assert_eq!(loaded.flat_params(), model.flat_params());
        assert_eq!(loaded.blocks, model.blocks);
        assert_eq!(
            loaded.predict(&x, 3).unwrap(),
            model.predict(&x, 3).unwrap()
        );
    }

    #[test]
    fn header_describes_the_model() {
        let (model, _) = trained_model();
        let (spec, m) = read_weights_header(&mut saved(&model).as_slice()).unwrap();
        assert_eq!(&spec, model.spec());
        assert_eq!(m, 4);
    }

    #[test]
    fn mismatches_are_rejected() {
        let (model, _) = trained_model();
        let buf = saved(&model);
        let wider = ArchSpec::parse("2-A-1-A", 7, 3).unwrap();
        assert!(matches!(
            load_weights(buf.as_slice(), &wider, 4),
            Err(Error::SpecMismatch { .. })
        ));
        let other = ArchSpec::parse("3-A", 6, 3).unwrap();
        assert!(matches!(
            load_weights(buf.as_slice(), &other, 4),
            Err(Error::SpecMismatch { .. })
        ));
        assert!(matches!(
            load_weights(buf.as_slice(), model.spec(), 5),
            Err(Error::SpecMismatch { .. })
        ));
    }

    #[test]
    fn damaged_files_are_rejected() {
        let (model, _) = trained_model();
        let buf = saved(&model);
        let err = load_weights(&buf[..buf.len() - 3], model.spec(), 4).unwrap_err();
        assert!(matches!(err, Error::Truncated { ref what } if what.contains("parameters")));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(
            load_weights(bad.as_slice(), model.spec(), 4),
            Err(Error::BadMagic { .. })
        ));
        let mut longer = buf.clone();
        longer.push(0);
        assert!(load_weights(longer.as_slice(), model.spec(), 4).is_err());
        let mut version = buf;
        version[4] = 9;
        assert!(matches!(
            load_weights(version.as_slice(), model.spec(), 4),
            Err(Error::UnsupportedVersion(_))
        ));
    }

    #[test]
    fn file_helpers_take_width_from_the_file() {
        let (model, _) = trained_model();
        let dir = std::env::temp_dir().join(format!("wlatt-weights-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("m.wlam");
        save_weights_file(&model, &path).unwrap();
        let loaded = load_weights_file(&path, "2-A-1-A", None, 3, 4).unwrap();
        assert_eq!(loaded.flat_params(), model.flat_params());
        assert!(matches!(
            load_weights_file(&path, "3-A", None, 3, 4),
            Err(Error::SpecMismatch { .. })
        ));
        assert!(load_weights_file(&path, "2-A-1-A", Some(8), 3, 4).is_err());
        std::fs::remove_dir_all(dir).unwrap();
    }
}
