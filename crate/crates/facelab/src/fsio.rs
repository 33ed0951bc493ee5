//! Datasets on disk: one sub-directory per subject holding PGM files.

use std::fs;
use std::path::{Path, PathBuf};

use facelab_core::image::{decode_pgm, encode_pgm};
use facelab_core::{GrayImage, LabeledImage};

use crate::error::{Error, Result};

pub fn read_pgm(path: &Path) -> Result<GrayImage> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pgm(&bytes).map_err(|source| Error::Image { path: path.to_path_buf(), source })
}

pub fn write_pgm(path: &Path, image: &GrayImage) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode_pgm(image)).map_err(|e| Error::io(path, e))
}

fn is_pgm(path: &Path) -> bool {
    path.is_file() && path.extension().is_some_and(|e| e.eq_ignore_ascii_case("pgm"))
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(|e| Error::io(dir, e))?;
    entries.sort();
    Ok(entries)
}

/// Reads `dir/<label>/*.pgm`. Paths are stored relative to `dir` with `/`
/// separators, images come back sorted by path, and every image must have
/// the same size.
pub fn scan_dataset(dir: &Path) -> Result<Vec<LabeledImage>> {
    let mut out: Vec<LabeledImage> = Vec::new();
    for class_dir in sorted_entries(dir)? {
        if !class_dir.is_dir() {
            continue;
        }
        let label = class_dir.file_name().and_then(|n| n.to_str()).ok_or_else(|| {
            Error::Usage(format!("{}: directory name is not UTF-8", class_dir.display()))
        })?;
        for file in sorted_entries(&class_dir)? {
            if !is_pgm(&file) {
                continue;
            }
            let name = file.file_name().and_then(|n| n.to_str()).ok_or_else(|| {
                Error::Usage(format!("{}: file name is not UTF-8", file.display()))
            })?;
            let image = read_pgm(&file)?;
            if let Some(first) = out.first() {
                if first.image.dims() != image.dims() {
                    return Err(Error::Image {
                        path: file.clone(),
                        source: facelab_core::Error::InvalidImage(format!(
                            "{}x{} differs from {}x{} of {}",
                            image.height(),
                            image.width(),
                            first.image.height(),
                            first.image.width(),
                            first.path
                        )),
                    });
                }
            }
            out.push(LabeledImage { path: format!("{label}/{name}"), label: label.to_string(), image });
        }
    }
    if out.is_empty() {
        return Err(Error::Core(facelab_core::Error::Empty("dataset directory holds no PGM images")));
    }
    Ok(out)
}

/// Writes images under `dir` at their relative paths.
pub fn write_dataset(dir: &Path, images: &[LabeledImage]) -> Result<()> {
    for li in images {
        write_pgm(&dir.join(&li.path), &li.image)?;
    }
    Ok(())
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.{}.tmp", std::process::id()));
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}
