//! IDX reader (the MNIST distribution format). Gzip-compressed files are
//! detected by their magic bytes and decompressed transparently.

use std::fs::File;
use std::io::{BufReader, Read};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::{LabeledDataset, Storage};
use crate::error::{Error, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut raw = Vec::new();
    reader.read_to_end(&mut raw).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let b = self.bytes.get(self.pos..end).ok_or_else(|| Error::Format {
            path: self.path.to_path_buf(),
            reason: "truncated header".into(),
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn payload(&self, len: usize) -> Result<&'a [u8]> {
        let rest = &self.bytes[self.pos..];
        if rest.len() < len {
            return Err(Error::Format {
                path: self.path.to_path_buf(),
                reason: format!("truncated payload: expected {len} bytes, found {}", rest.len()),
            });
        }
        Ok(&rest[..len])
    }
}

fn expect_magic(cur: &mut Cursor<'_>, expected: u32) -> Result<()> {
    let magic = cur.u32()?;
    if magic != expected {
        return Err(Error::Format {
            path: cur.path.to_path_buf(),
            reason: format!("bad magic number {magic:#010x}, expected {expected:#010x}"),
        });
    }
    Ok(())
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    load_idx_with(images_path, labels_path, Storage::Dense)
}

pub fn load_idx_with(
    images_path: &Path,
    labels_path: &Path,
    storage: Storage,
) -> Result<LabeledDataset> {
    let image_bytes = read_all(images_path)?;
    let mut cur = Cursor {
        bytes: &image_bytes,
        pos: 0,
        path: images_path,
    };
    expect_magic(&mut cur, IMAGES_MAGIC)?;
    let n_images = cur.u32()? as usize;
    let rows = cur.u32()? as usize;
    let cols = cur.u32()? as usize;
    let n_features = rows * cols;
    let pixels = cur.payload(n_images * n_features)?;

    let label_bytes = read_all(labels_path)?;
    let mut cur = Cursor {
        bytes: &label_bytes,
        pos: 0,
        path: labels_path,
    };
    expect_magic(&mut cur, LABELS_MAGIC)?;
    let n_labels = cur.u32()? as usize;
    let raw_labels = cur.payload(n_labels)?;

    if n_images != n_labels {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            reason: format!("{n_labels} labels for {n_images} images"),
        });
    }
    let labels: Vec<usize> = raw_labels.iter().map(|&l| l as usize).collect();
    let n_classes = labels.iter().max().map_or(1, |&m| m + 1).max(10);
    match storage {
        Storage::Dense => LabeledDataset::from_dense(
            pixels.iter().map(|&b| f64::from(b) / 255.0).collect(),
            labels,
            n_features,
            n_classes,
        ),
        Storage::Bytes => {
            LabeledDataset::from_bytes(pixels.to_vec(), labels, n_features, n_classes)
        }
    }
}

#[derive(Debug, Clone)]
pub struct MnistSplit {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

fn find_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    for candidate in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(&candidate);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::io(
        dir.join(stem),
        std::io::Error::new(std::io::ErrorKind::NotFound, "IDX file not found"),
    ))
}

/// Loads the four standard MNIST files (plain or `.gz`) from `dir`.
pub fn load_mnist_dir(dir: &Path, storage: Storage) -> Result<MnistSplit> {
    let train = load_idx_with(
        &find_file(dir, "train-images-idx3-ubyte")?,
        &find_file(dir, "train-labels-idx1-ubyte")?,
        storage,
    )?;
    let test = load_idx_with(
        &find_file(dir, "t10k-images-idx3-ubyte")?,
        &find_file(dir, "t10k-labels-idx1-ubyte")?,
        storage,
    )?;
    Ok(MnistSplit { train, test })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, bytes).unwrap();
        p
    }

    fn images(n: u32, rows: u32, cols: u32, fill: u8) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        v.extend_from_slice(&n.to_be_bytes());
        v.extend_from_slice(&rows.to_be_bytes());
        v.extend_from_slice(&cols.to_be_bytes());
        v.extend(std::iter::repeat_n(fill, (n * rows * cols) as usize));
        v
    }

    fn labels(ls: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        v.extend_from_slice(&(ls.len() as u32).to_be_bytes());
        v.extend_from_slice(ls);
        v
    }

    #[test]
    fn reads_small_file_and_scales() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "i", &images(3, 2, 2, 255));
        let lab = write(dir.path(), "l", &labels(&[0, 9, 4]));
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.n_features(), 4);
        assert_eq!(ds.n_classes(), 10);
        assert_eq!(ds.labels(), &[0, 9, 4]);
        assert_eq!(ds.row(1), vec![1.0; 4]);
    }

    #[test]
    fn gzip_is_transparent() {
        let dir = tempfile::tempdir().unwrap();
        let mut enc = flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&images(2, 1, 3, 51)).unwrap();
        let img = write(dir.path(), "i.gz", &enc.finish().unwrap());
        let lab = write(dir.path(), "l", &labels(&[1, 2]));
        let ds = load_idx_with(&img, &lab, Storage::Bytes).unwrap();
        assert_eq!(ds.storage(), Storage::Bytes);
        assert!((ds.row(0)[2] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn empty_file_is_truncated() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "i", &[]);
        let lab = write(dir.path(), "l", &labels(&[1]));
        let err = load_idx(&img, &lab).unwrap_err();
        assert!(matches!(err, Error::Format { ref reason, .. } if reason.contains("truncated")));
    }

    #[test]
    fn truncated_payload() {
        let dir = tempfile::tempdir().unwrap();
        let mut bytes = images(2, 2, 2, 0);
        bytes.truncate(bytes.len() - 1);
        let img = write(dir.path(), "i", &bytes);
        let lab = write(dir.path(), "l", &labels(&[1, 1]));
        assert!(matches!(load_idx(&img, &lab), Err(Error::Format { .. })));
    }

    #[test]
    fn bad_magic() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "i", &labels(&[1]));
        let lab = write(dir.path(), "l", &labels(&[1]));
        let err = load_idx(&img, &lab).unwrap_err();
        assert!(matches!(err, Error::Format { ref reason, .. } if reason.contains("magic")));
    }

    #[test]
    fn count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let img = write(dir.path(), "i", &images(3, 1, 1, 0));
        let lab = write(dir.path(), "l", &labels(&[1, 2]));
        assert!(matches!(load_idx(&img, &lab), Err(Error::Format { .. })));
    }

    #[test]
    fn missing_file_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_mnist_dir(dir.path(), Storage::Dense).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
