//! On-disk dataset layout:
//!
//! ```text
//! <dir>/header.json   {"width","height","bands","classes","dtype":"f32le","label_dtype":"u16le","name"}
//! <dir>/cube.f32      width·height·bands little-endian f32, (row, col, band), band fastest
//! <dir>/labels.u16    width·height little-endian u16, row-major, 0 = unlabeled
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{HsiCube, LabelMap};
use crate::error::{Error, LoadError, Result};

pub const HEADER_FILE: &str = "header.json";
pub const CUBE_FILE: &str = "cube.f32";
pub const LABELS_FILE: &str = "labels.u16";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub width: usize,
    pub height: usize,
    pub bands: usize,
    pub classes: usize,
    pub dtype: String,
    pub label_dtype: String,
    pub name: String,
}

impl DatasetHeader {
    pub fn new(name: &str, cube: &HsiCube, labels: &LabelMap) -> Self {
        DatasetHeader {
            width: cube.width(),
            height: cube.height(),
            bands: cube.bands(),
            classes: labels.classes(),
            dtype: "f32le".into(),
            label_dtype: "u16le".into(),
            name: name.into(),
        }
    }

    fn validate(&self, path: &Path) -> std::result::Result<(), LoadError> {
        let bad = |reason: String| LoadError::MalformedHeader {
            path: path.to_path_buf(),
            reason,
        };
        if self.width == 0 || self.height == 0 || self.bands == 0 || self.classes == 0 {
            return Err(bad("width, height, bands and classes must be positive".into()));
        }
        if self.classes > u16::MAX as usize {
            return Err(bad(format!("class count {} exceeds u16 range", self.classes)));
        }
        if self.dtype != "f32le" {
            return Err(bad(format!("unsupported dtype {:?}", self.dtype)));
        }
        if self.label_dtype != "u16le" {
            return Err(bad(format!("unsupported label_dtype {:?}", self.label_dtype)));
        }
        Ok(())
    }
}

fn read_file(path: &Path) -> std::result::Result<Vec<u8>, LoadError> {
    if !path.is_file() {
        return Err(LoadError::MissingFile(path.to_path_buf()));
    }
    fs::read(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn check_len(path: PathBuf, bytes: &[u8], expected: usize) -> std::result::Result<(), LoadError> {
    if bytes.len() != expected {
        return Err(LoadError::ByteCount {
            path,
            expected: expected as u64,
            actual: bytes.len() as u64,
        });
    }
    Ok(())
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<(HsiCube, LabelMap)> {
    let dir = dir.as_ref();
    let header_path = dir.join(HEADER_FILE);
    let header_bytes = read_file(&header_path)?;
    let header: DatasetHeader =
        serde_json::from_slice(&header_bytes).map_err(|e| LoadError::MalformedHeader {
            path: header_path.clone(),
            reason: e.to_string(),
        })?;
    header.validate(&header_path)?;

    let pixels = header.width * header.height;
    let cube_path = dir.join(CUBE_FILE);
    let cube_bytes = read_file(&cube_path)?;
    check_len(cube_path, &cube_bytes, pixels * header.bands * 4)?;
    let label_path = dir.join(LABELS_FILE);
    let label_bytes = read_file(&label_path)?;
    check_len(label_path, &label_bytes, pixels * 2)?;

    let values: Vec<f64> = cube_bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let labels: Vec<u16> = label_bytes
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect();

    let cube = HsiCube::new(header.width, header.height, header.bands, values)?;
    let labels = LabelMap::new(header.width, header.height, header.classes, labels)?;
    Ok((cube, labels))
}

/// Writes the three dataset files. Cube values are narrowed to `f32`.
pub fn save_dataset(
    dir: impl AsRef<Path>,
    name: &str,
    cube: &HsiCube,
    labels: &LabelMap,
) -> Result<()> {
    let dir = dir.as_ref();
    labels.matches(cube)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let header = DatasetHeader::new(name, cube, labels);
    let mut json = serde_json::to_string_pretty(&header).expect("header serializes");
    json.push('\n');
    let header_path = dir.join(HEADER_FILE);
    fs::write(&header_path, json).map_err(|e| Error::io(&header_path, e))?;

    let mut cube_bytes = Vec::with_capacity(cube.values().len() * 4);
    for &v in cube.values().data() {
        cube_bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    let cube_path = dir.join(CUBE_FILE);
    fs::write(&cube_path, cube_bytes).map_err(|e| Error::io(&cube_path, e))?;

    let mut label_bytes = Vec::with_capacity(labels.labels().len() * 2);
    for &l in labels.labels() {
        label_bytes.extend_from_slice(&l.to_le_bytes());
    }
    let label_path = dir.join(LABELS_FILE);
    fs::write(&label_path, label_bytes).map_err(|e| Error::io(&label_path, e))?;
    Ok(())
}
