//! IDX files as distributed with MNIST: a big-endian header followed by
//! unsigned bytes.

use std::fs;
use std::io::{Cursor, Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt, WriteBytesExt};
use clusternet_core::data::{Dataset, ImageShape};
use clusternet_core::Matrix;

use crate::error::{Error, Result};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` pixels, image after image.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn count(&self) -> usize {
        if self.rows * self.cols == 0 {
            0
        } else {
            self.pixels.len() / (self.rows * self.cols)
        }
    }
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn header(cur: &mut Cursor<Vec<u8>>, path: &Path, magic: u32, dims: usize) -> Result<Vec<usize>> {
    let bad = |what: &str| Error::format(path, format!("truncated IDX header ({what})"));
    let found = cur.read_u32::<BigEndian>().map_err(|_| bad("magic"))?;
    if found != magic {
        return Err(Error::format(path, format!("IDX magic {found:#010x}, expected {magic:#010x}")));
    }
    (0..dims)
        .map(|_| cur.read_u32::<BigEndian>().map(|v| v as usize).map_err(|_| bad("dimensions")))
        .collect()
}

fn body(cur: &mut Cursor<Vec<u8>>, path: &Path, len: usize) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(len);
    cur.read_to_end(&mut out).map_err(|e| Error::io(path, e))?;
    if out.len() != len {
        return Err(Error::format(path, format!("IDX header promises {len} bytes of data, file has {}", out.len())));
    }
    Ok(out)
}

pub fn read_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    let path = path.as_ref();
    let mut cur = Cursor::new(read_all(path)?);
    let dims = header(&mut cur, path, IMAGES_MAGIC, 3)?;
    let (count, rows, cols) = (dims[0], dims[1], dims[2]);
    let pixels = body(&mut cur, path, count * rows * cols)?;
    Ok(IdxImages { rows, cols, pixels })
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let mut cur = Cursor::new(read_all(path)?);
    let count = header(&mut cur, path, LABELS_MAGIC, 1)?[0];
    body(&mut cur, path, count)
}

pub fn write_images(path: impl AsRef<Path>, images: &IdxImages) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count() as u32, images.rows as u32, images.cols as u32] {
        buf.write_u32::<BigEndian>(v).expect("writing to a Vec");
    }
    buf.write_all(&images.pixels).expect("writing to a Vec");
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn write_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::with_capacity(8 + labels.len());
    buf.write_u32::<BigEndian>(LABELS_MAGIC).expect("writing to a Vec");
    buf.write_u32::<BigEndian>(labels.len() as u32).expect("writing to a Vec");
    buf.extend_from_slice(labels);
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Images scaled to `[0, 1]` with their labels.
pub fn load_dataset(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset> {
    let img = read_images(images.as_ref())?;
    let lab = read_labels(labels.as_ref())?;
    if img.count() != lab.len() {
        return Err(Error::format(
            labels.as_ref(),
            format!("{} labels for {} images", lab.len(), img.count()),
        ));
    }
    let samples = Matrix::from_vec(
        img.count(),
        img.rows * img.cols,
        img.pixels.iter().map(|&p| f64::from(p) / 255.0).collect(),
    )?;
    let shape = ImageShape { height: img.rows, width: img.cols, channels: 1 };
    Ok(Dataset::new(samples, Some(lab.into_iter().map(usize::from).collect()), Some(shape))?)
}

/// Looks for the usual MNIST file names in `dir`: the training pair first,
/// then unprefixed names.
pub fn find_in_dir(dir: impl AsRef<Path>) -> Result<(std::path::PathBuf, std::path::PathBuf)> {
    let dir = dir.as_ref();
    for prefix in ["train-", "", "t10k-"] {
        for sep in ["-", "."] {
            let images = dir.join(format!("{prefix}images{sep}idx3-ubyte"));
            let labels = dir.join(format!("{prefix}labels{sep}idx1-ubyte"));
            if images.is_file() && labels.is_file() {
                return Ok((images, labels));
            }
        }
    }
    Err(Error::format(dir, "no IDX image/label pair found"))
}
