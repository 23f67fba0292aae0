//! File I/O: PFM (portable float map) for lossless float rasters and 16-bit
//! PNG with a millimeter scale for depth interchange.
//!
//! PFM convention: rows stored bottom-to-top, negative scale marks
//! little-endian; we always write scale -1.0 and 32-bit floats.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::image::{DepthMap, ImageBuffer};

/// Millimeters per meter for PNG16 depth interchange.
const PNG16_DEPTH_SCALE: f64 = 1000.0;

pub fn write_pfm_image<P: AsRef<Path>>(path: P, img: &ImageBuffer) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    let magic = if img.channels() == 3 { "PF" } else { "Pf" };
    write!(out, "{}\n{} {}\n-1.0\n", magic, img.width(), img.height())?;
    let (h, w, c) = (img.height(), img.width(), img.channels());
    for y in (0..h).rev() {
        for x in 0..w {
            for ch in 0..c {
                out.write_all(&(img.get(y, x, ch) as f32).to_le_bytes())?;
            }
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_pfm_image<P: AsRef<Path>>(path: P) -> Result<ImageBuffer> {
    let (w, h, c, data) = read_pfm_raw(path)?;
    ImageBuffer::from_vec(h, w, c, data)
}

pub fn write_pfm_depth<P: AsRef<Path>>(path: P, depth: &DepthMap) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write!(out, "Pf\n{} {}\n-1.0\n", depth.width(), depth.height())?;
    for y in (0..depth.height()).rev() {
        for x in 0..depth.width() {
            out.write_all(&(depth.get(y, x) as f32).to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_pfm_depth<P: AsRef<Path>>(path: P) -> Result<DepthMap> {
    let (w, h, c, data) = read_pfm_raw(path)?;
    if c != 1 {
        return Err(Error::Format(format!(
            "depth PFM must be grayscale, got {c} channels"
        )));
    }
    DepthMap::from_vec(h, w, data)
}

fn read_pfm_raw<P: AsRef<Path>>(path: P) -> Result<(usize, usize, usize, Vec<f64>)> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;

    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PFM header".into()));
        }
        let tok = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        pos += 1; // single whitespace after each token
        Ok(tok)
    };

    let magic = token(&bytes)?;
    let channels = match magic.as_str() {
        "PF" => 3,
        "Pf" => 1,
        other => return Err(Error::Format(format!("not a PFM file (magic {other:?})"))),
    };
    let width: usize = token(&bytes)?
        .parse()
        .map_err(|e| Error::Format(format!("bad PFM width: {e}")))?;
    let height: usize = token(&bytes)?
        .parse()
        .map_err(|e| Error::Format(format!("bad PFM height: {e}")))?;
    let scale: f64 = token(&bytes)?
        .parse()
        .map_err(|e| Error::Format(format!("bad PFM scale: {e}")))?;
    let little_endian = scale < 0.0;

    let n = width * height * channels;
    if bytes.len() < pos + 4 * n {
        return Err(Error::Format(format!(
            "PFM payload too short: need {} bytes, have {}",
            4 * n,
            bytes.len() - pos
        )));
    }
    let mut data = vec![0.0f64; n];
    for y_file in 0..height {
        let y = height - 1 - y_file; // file rows run bottom-to-top
        for i in 0..width * channels {
            let off = pos + (y_file * width * channels + i) * 4;
            let raw: [u8; 4] = bytes[off..off + 4].try_into().unwrap();
            let v = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            data[y * width * channels + i] = v as f64;
        }
    }
    Ok((width, height, channels, data))
}

/// Write depth as 16-bit grayscale PNG in millimeters; values are rounded
/// and clamped to the u16 range.
pub fn write_png16_depth<P: AsRef<Path>>(path: P, depth: &DepthMap) -> Result<()> {
    let (h, w) = (depth.height(), depth.width());
    let mut img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let mm = (depth.get(y, x) * PNG16_DEPTH_SCALE)
                .round()
                .clamp(0.0, u16::MAX as f64);
            img.put_pixel(x as u32, y as u32, image::Luma([mm as u16]));
        }
    }
    img.save(path.as_ref())?;
    Ok(())
}

pub fn read_png16_depth<P: AsRef<Path>>(path: P) -> Result<DepthMap> {
    let img = image::open(path.as_ref())?.into_luma16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut data = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            data[y * w + x] = img.get_pixel(x as u32, y as u32).0[0] as f64 / PNG16_DEPTH_SCALE;
        }
    }
    DepthMap::from_vec(h, w, data)
}
