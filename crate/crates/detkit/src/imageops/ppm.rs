//! Binary PPM (P6) raster files, 8-bit, maxval 255. Writing then reading is
//! byte-identical.

use std::fs;
use std::io::Write;
use std::path::Path;

use super::{Image, ImageOpsError};

fn format_err(path: &Path, message: impl Into<String>) -> ImageOpsError {
    ImageOpsError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ImageOpsError + '_ {
    move |source| ImageOpsError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn next_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Option<&'a [u8]> {
    // skip whitespace and comment lines
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    (start != *pos).then(|| &bytes[start..*pos])
}

/// Reads a binary `P6` file with maxval 255. Comments (`#`) in the header
/// are accepted.
pub fn read_ppm(path: impl AsRef<Path>) -> Result<Image, ImageOpsError> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(io_err(path))?;
    let mut pos = 0usize;

    let token = |pos: &mut usize| -> Result<String, ImageOpsError> {
        next_token(&bytes, pos)
            .map(|t| String::from_utf8_lossy(t).into_owned())
            .ok_or_else(|| format_err(path, "truncated header"))
    };

    let magic = token(&mut pos)?;
    if magic != "P6" {
        return Err(format_err(path, format!("expected P6 magic, found '{magic}'")));
    }
    let width: usize = token(&mut pos)?
        .parse()
        .map_err(|_| format_err(path, "invalid width"))?;
    let height: usize = token(&mut pos)?
        .parse()
        .map_err(|_| format_err(path, "invalid height"))?;
    let maxval: usize = token(&mut pos)?
        .parse()
        .map_err(|_| format_err(path, "invalid maxval"))?;
    if maxval != 255 {
        return Err(format_err(path, format!("unsupported maxval {maxval}, expected 255")));
    }
    // exactly one whitespace byte separates the header from the samples
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(format_err(path, "missing sample separator"));
    }
    pos += 1;
    let expected = 3 * width * height;
    let data = &bytes[pos..];
    if data.len() != expected {
        return Err(format_err(
            path,
            format!("expected {expected} sample bytes, found {}", data.len()),
        ));
    }
    Image::new(width, height, data.to_vec())
}

/// Writes a binary `P6` file with maxval 255.
pub fn write_ppm(img: &Image, path: impl AsRef<Path>) -> Result<(), ImageOpsError> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(io_err(path))?;
    let header = format!("P6\n{} {}\n255\n", img.width(), img.height());
    file.write_all(header.as_bytes()).map_err(io_err(path))?;
    file.write_all(img.data()).map_err(io_err(path))?;
    Ok(())
}
