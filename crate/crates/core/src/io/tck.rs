//! TCK track files: text header, float32 LE triplets, NaN separators, Inf
//! terminator.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::engine::Streamline;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

const MAGIC_LINE: &str = "mrtrix tracks";

/// Write a tractogram. Points are world millimeters, stored as float32 LE;
/// each streamline is followed by a NaN triplet and the file ends with an
/// Inf triplet.
pub fn write_tck(path: impl AsRef<Path>, streamlines: &[Streamline]) -> Result<()> {
    // The data offset appears inside the header, so settle its width first.
    let header_for = |offset: usize| {
        format!(
            "{MAGIC_LINE}\ndatatype: Float32LE\ncount: {}\nfile: . {offset}\nEND\n",
            streamlines.len()
        )
    };
    let mut offset = header_for(0).len();
    loop {
        let next = header_for(offset).len();
        if next == offset {
            break;
        }
        offset = next;
    }
    let header = header_for(offset);

    let n_points: usize = streamlines.iter().map(|s| s.points.len()).sum();
    let mut out = Vec::with_capacity(header.len() + (n_points + streamlines.len() + 1) * 12);
    out.extend_from_slice(header.as_bytes());
    let mut buf = [0u8; 12];
    let mut push_triplet = |out: &mut Vec<u8>, x: f32, y: f32, z: f32| {
        LittleEndian::write_f32(&mut buf[0..4], x);
        LittleEndian::write_f32(&mut buf[4..8], y);
        LittleEndian::write_f32(&mut buf[8..12], z);
        out.extend_from_slice(&buf);
    };
    for streamline in streamlines {
        for p in &streamline.points {
            push_triplet(&mut out, p.x as f32, p.y as f32, p.z as f32);
        }
        push_triplet(&mut out, f32::NAN, f32::NAN, f32::NAN);
    }
    push_triplet(&mut out, f32::INFINITY, f32::INFINITY, f32::INFINITY);
    fs::write(path, &out)?;
    Ok(())
}

/// Read a TCK file; arbitrary extra header keys are tolerated.
pub fn read_tck(path: impl AsRef<Path>) -> Result<Vec<Streamline>> {
    let bytes = fs::read(path)?;
    let mut pos = 0usize;
    let mut next_line = || -> Result<String> {
        let start = pos;
        while pos < bytes.len() && bytes[pos] != b'\n' {
            pos += 1;
        }
        if pos >= bytes.len() {
            return Err(Error::format(
                "header: end of file before END line",
            ));
        }
        let line = String::from_utf8_lossy(&bytes[start..pos]).into_owned();
        pos += 1;
        Ok(line)
    };

    let first = next_line()?;
    if first.trim() != MAGIC_LINE {
        return Err(Error::format(format!(
            "magic: expected \"{MAGIC_LINE}\", got \"{first}\""
        )));
    }
    let mut data_offset: Option<usize> = None;
    let mut datatype: Option<String> = None;
    let mut count: Option<usize> = None;
    loop {
        let line = next_line()?;
        let trimmed = line.trim();
        if trimmed == "END" {
            break;
        }
        if let Some((key, value)) = trimmed.split_once(':') {
            let (key, value) = (key.trim(), value.trim());
            match key {
                "datatype" => datatype = Some(value.to_string()),
                "count" => count = value.parse().ok(),
                "file" => {
                    // "file: . <offset>"
                    if let Some(off) = value.strip_prefix('.') {
                        data_offset = off.trim().parse().ok();
                    }
                }
                _ => {}
            }
        }
    }
    match datatype.as_deref() {
        Some("Float32LE") => {}
        Some(other) => {
            return Err(Error::format(format!(
                "datatype: unsupported track datatype {other}"
            )))
        }
        None => {
            return Err(Error::format(
                "datatype: missing datatype header key",
            ))
        }
    }
    let start = data_offset.unwrap_or(pos);
    if start > bytes.len() {
        return Err(Error::format(format!(
            "file: data offset {start} beyond end of file"
        )));
    }

    let mut streamlines = Vec::new();
    let mut current: Vec<Vec3> = Vec::new();
    let mut cursor = start;
    let mut terminated = false;
    while cursor + 12 <= bytes.len() {
        let x = LittleEndian::read_f32(&bytes[cursor..]);
        let y = LittleEndian::read_f32(&bytes[cursor + 4..]);
        let z = LittleEndian::read_f32(&bytes[cursor + 8..]);
        cursor += 12;
        if x.is_nan() {
            streamlines.push(Streamline {
                points: std::mem::take(&mut current),
            });
        } else if x.is_infinite() {
            terminated = true;
            break;
        } else {
            current.push(Vec3::new(x as f64, y as f64, z as f64));
        }
    }
    if !terminated {
        return Err(Error::format(
            "body: truncated track data (missing Inf terminator)",
        ));
    }
    if !current.is_empty() {
        streamlines.push(Streamline { points: current });
    }
    if let Some(expected) = count {
        if expected != streamlines.len() {
            return Err(Error::format(format!(
                "count: header says {expected} streamlines, body holds {}",
                streamlines.len()
            )));
        }
    }
    Ok(streamlines)
}
