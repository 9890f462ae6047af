//! Single-file NIfTI-1 reader/writer covering the subset this pipeline
//! consumes: 3-D masks and 4-D coefficient volumes, float32/float64/int16/
//! uint8 payloads, optional gzip, sform/qform/pixdim affines.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian, WriteBytesExt};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::fod::FodImage;
use crate::geometry::Affine;
use crate::roi::BinaryMask;

const HEADER_SIZE: usize = 348;
const VOX_OFFSET: usize = 352;
const MAGIC: &[u8; 4] = b"n+1\0";

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;

#[derive(Debug)]
pub enum NiftiVolume {
    Fod(FodImage),
    Mask(BinaryMask),
}

struct Header {
    dim: [i16; 8],
    datatype: i16,
    pixdim: [f32; 8],
    vox_offset: f32,
    scl_slope: f32,
    scl_inter: f32,
    qform_code: i16,
    sform_code: i16,
    quatern: [f32; 3],
    qoffset: [f32; 3],
    srow: [[f32; 4]; 3],
}

fn parse_header<E: ByteOrder>(bytes: &[u8]) -> Header {
    let i16_at = |off: usize| E::read_i16(&bytes[off..off + 2]);
    let f32_at = |off: usize| E::read_f32(&bytes[off..off + 4]);
    let mut dim = [0i16; 8];
    for (i, d) in dim.iter_mut().enumerate() {
        *d = i16_at(40 + 2 * i);
    }
    let mut pixdim = [0f32; 8];
    for (i, p) in pixdim.iter_mut().enumerate() {
        *p = f32_at(76 + 4 * i);
    }
    let mut srow = [[0f32; 4]; 3];
    for (r, row) in srow.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            *v = f32_at(280 + 16 * r + 4 * c);
        }
    }
    Header {
        dim,
        datatype: i16_at(70),
        pixdim,
        vox_offset: f32_at(108),
        scl_slope: f32_at(112),
        scl_inter: f32_at(116),
        qform_code: i16_at(252),
        sform_code: i16_at(254),
        quatern: [f32_at(256), f32_at(260), f32_at(264)],
        qoffset: [f32_at(268), f32_at(272), f32_at(276)],
        srow,
    }
}

fn affine_from_header(h: &Header) -> Result<Affine> {
    let mat = if h.sform_code > 0 {
        let mut m = [[0.0f64; 4]; 4];
        for r in 0..3 {
            for c in 0..4 {
                m[r][c] = h.srow[r][c] as f64;
            }
        }
        m[3] = [0.0, 0.0, 0.0, 1.0];
        m
    } else if h.qform_code > 0 {
        let [b, c, d] = [
            h.quatern[0] as f64,
            h.quatern[1] as f64,
            h.quatern[2] as f64,
        ];
        let a = (1.0 - b * b - c * c - d * d).max(0.0).sqrt();
        let qfac = if h.pixdim[0] < 0.0 { -1.0 } else { 1.0 };
        let sx = h.pixdim[1] as f64;
        let sy = h.pixdim[2] as f64;
        let sz = h.pixdim[3] as f64 * qfac;
        [
            [
                (a * a + b * b - c * c - d * d) * sx,
                (2.0 * b * c - 2.0 * a * d) * sy,
                (2.0 * b * d + 2.0 * a * c) * sz,
                h.qoffset[0] as f64,
            ],
            [
                (2.0 * b * c + 2.0 * a * d) * sx,
                (a * a + c * c - b * b - d * d) * sy,
                (2.0 * c * d - 2.0 * a * b) * sz,
                h.qoffset[1] as f64,
            ],
            [
                (2.0 * b * d - 2.0 * a * c) * sx,
                (2.0 * c * d + 2.0 * a * b) * sy,
                (a * a + d * d - b * b - c * c) * sz,
                h.qoffset[2] as f64,
            ],
            [0.0, 0.0, 0.0, 1.0],
        ]
    } else {
        let mut m = [[0.0f64; 4]; 4];
        for (i, row) in m.iter_mut().enumerate().take(3) {
            row[i] = h.pixdim[i + 1].abs().max(f32::MIN_POSITIVE) as f64;
        }
        m[3][3] = 1.0;
        m
    };
    Affine::new(mat)
}

fn decode_values<E: ByteOrder>(h: &Header, payload: &[u8], n: usize) -> Result<Vec<f64>> {
    let elem = match h.datatype {
        DT_UINT8 => 1,
        DT_INT16 => 2,
        DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => {
            return Err(Error::format(format!(
                "datatype: unsupported NIfTI datatype code {other}"
            )))
        }
    };
    if payload.len() < n * elem {
        return Err(Error::format(format!(
            "data: file holds {} bytes after vox_offset, dims require {}",
            payload.len(),
            n * elem
        )));
    }
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let v = match h.datatype {
            DT_UINT8 => payload[i] as f64,
            DT_INT16 => E::read_i16(&payload[i * 2..]) as f64,
            DT_FLOAT32 => E::read_f32(&payload[i * 4..]) as f64,
            DT_FLOAT64 => E::read_f64(&payload[i * 8..]),
            _ => unreachable!(),
        };
        values.push(v);
    }
    if h.scl_slope != 0.0 && (h.scl_slope != 1.0 || h.scl_inter != 0.0) {
        let (slope, inter) = (h.scl_slope as f64, h.scl_inter as f64);
        for v in &mut values {
            *v = *v * slope + inter;
        }
    }
    Ok(values)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..]).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Read a NIfTI-1 file: 4-D volumes become FOD images, 3-D volumes become
/// binary masks (nonzero means set).
pub fn read_nifti(path: impl AsRef<Path>) -> Result<NiftiVolume> {
    let path = path.as_ref();
    let bytes = read_bytes(path)?;
    if bytes.len() < HEADER_SIZE {
        return Err(Error::format(format!(
            "header: file is {} bytes, NIfTI-1 header needs {HEADER_SIZE}",
            bytes.len()
        )));
    }
    if &bytes[344..348] != MAGIC {
        return Err(Error::format(
            "magic: expected single-file NIfTI-1 magic \"n+1\\0\" at offset 344",
        ));
    }
    // Endianness auto-detection: dim[0] must land in 1..=7.
    let dim0_le = LittleEndian::read_i16(&bytes[40..42]);
    let header = if (1..=7).contains(&dim0_le) {
        parse_header::<LittleEndian>(&bytes)
    } else {
        let dim0_be = BigEndian::read_i16(&bytes[40..42]);
        if (1..=7).contains(&dim0_be) {
            parse_header::<BigEndian>(&bytes)
        } else {
            return Err(Error::format(format!(
                "dim[0]: value {dim0_le} (LE) is not in 1..=7 under either byte order"
            )));
        }
    };
    let little_endian = (1..=7).contains(&dim0_le);

    let ndim = header.dim[0];
    if ndim != 3 && ndim != 4 {
        return Err(Error::format(format!(
            "dim[0]: expected a 3-D mask or 4-D coefficient volume, got {ndim}-D"
        )));
    }
    let (nx, ny, nz) = (
        header.dim[1].max(0) as usize,
        header.dim[2].max(0) as usize,
        header.dim[3].max(0) as usize,
    );
    let nc = if ndim == 4 {
        header.dim[4].max(0) as usize
    } else {
        1
    };
    if nx == 0 || ny == 0 || nz == 0 || nc == 0 {
        return Err(Error::format("dim: zero-sized dimension"));
    }
    let offset = header.vox_offset.max(HEADER_SIZE as f32) as usize;
    if offset > bytes.len() {
        return Err(Error::format(format!(
            "vox_offset: {offset} beyond end of file ({})",
            bytes.len()
        )));
    }
    let n = nx * ny * nz * nc;
    let values = if little_endian {
        decode_values::<LittleEndian>(&header, &bytes[offset..], n)?
    } else {
        decode_values::<BigEndian>(&header, &bytes[offset..], n)?
    };
    let affine = affine_from_header(&header)?;

    if ndim == 3 {
        let mut voxels = vec![false; n];
        // NIfTI stores x fastest.
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    voxels[(x * ny + y) * nz + z] = values[x + nx * (y + ny * z)] != 0.0;
                }
            }
        }
        Ok(NiftiVolume::Mask(BinaryMask::new(
            (nx, ny, nz),
            affine,
            voxels,
        )?))
    } else {
        let mut coefficients = vec![0.0f64; n];
        for c in 0..nc {
            for z in 0..nz {
                for y in 0..ny {
                    for x in 0..nx {
                        coefficients[((x * ny + y) * nz + z) * nc + c] =
                            values[x + nx * (y + ny * (z + nz * c))];
                    }
                }
            }
        }
        Ok(NiftiVolume::Fod(FodImage::new(
            (nx, ny, nz, nc),
            affine,
            coefficients,
        )?))
    }
}

pub fn read_fod(path: impl AsRef<Path>) -> Result<FodImage> {
    match read_nifti(&path)? {
        NiftiVolume::Fod(img) => Ok(img),
        NiftiVolume::Mask(_) => Err(Error::format(format!(
            "{}: expected a 4-D FOD volume, found a 3-D volume",
            path.as_ref().display()
        ))),
    }
}

pub fn read_mask(path: impl AsRef<Path>) -> Result<BinaryMask> {
    match read_nifti(&path)? {
        NiftiVolume::Mask(mask) => Ok(mask),
        NiftiVolume::Fod(_) => Err(Error::format(format!(
            "{}: expected a 3-D mask, found a 4-D volume",
            path.as_ref().display()
        ))),
    }
}

fn write_header(
    out: &mut Vec<u8>,
    dim: [i16; 8],
    datatype: i16,
    bitpix: i16,
    pixdim: [f32; 8],
    affine: &Affine,
) {
    out.resize(HEADER_SIZE, 0);
    LittleEndian::write_i32(&mut out[0..4], HEADER_SIZE as i32);
    for (i, d) in dim.iter().enumerate() {
        LittleEndian::write_i16(&mut out[40 + 2 * i..], *d);
    }
    LittleEndian::write_i16(&mut out[70..], datatype);
    LittleEndian::write_i16(&mut out[72..], bitpix);
    for (i, p) in pixdim.iter().enumerate() {
        LittleEndian::write_f32(&mut out[76 + 4 * i..], *p);
    }
    LittleEndian::write_f32(&mut out[108..], VOX_OFFSET as f32);
    LittleEndian::write_f32(&mut out[112..], 1.0); // scl_slope
    LittleEndian::write_f32(&mut out[116..], 0.0); // scl_inter
    LittleEndian::write_i16(&mut out[252..], 0); // qform_code
    LittleEndian::write_i16(&mut out[254..], 2); // sform_code: aligned
    let m = affine.matrix();
    for r in 0..3 {
        for c in 0..4 {
            LittleEndian::write_f32(&mut out[280 + 16 * r + 4 * c..], m[r][c] as f32);
        }
    }
    out[344..348].copy_from_slice(MAGIC);
    out.extend_from_slice(&[0u8; 4]); // extension flag
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if path.extension().is_some_and(|e| e == "gz") {
        let file = fs::File::create(path)?;
        let mut enc = GzEncoder::new(file, Compression::fast());
        enc.write_all(bytes)?;
        enc.finish()?;
    } else {
        fs::write(path, bytes)?;
    }
    Ok(())
}

/// Write a FOD volume as single-file little-endian NIfTI-1, float32.
pub fn write_fod_nifti(path: impl AsRef<Path>, img: &FodImage) -> Result<()> {
    let (nx, ny, nz, nc) = img.dims;
    let vs = img.voxel_size;
    let mut out = Vec::with_capacity(VOX_OFFSET + nx * ny * nz * nc * 4);
    write_header(
        &mut out,
        [4, nx as i16, ny as i16, nz as i16, nc as i16, 1, 1, 1],
        DT_FLOAT32,
        32,
        [1.0, vs[0] as f32, vs[1] as f32, vs[2] as f32, 0.0, 0.0, 0.0, 0.0],
        &img.affine,
    );
    for c in 0..nc {
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    out.write_f32::<LittleEndian>(img.coeffs_at_voxel(x, y, z)[c] as f32)?;
                }
            }
        }
    }
    write_file(path.as_ref(), &out)
}

/// Write a binary mask as single-file little-endian NIfTI-1, uint8.
pub fn write_mask_nifti(path: impl AsRef<Path>, mask: &BinaryMask) -> Result<()> {
    let (nx, ny, nz) = mask.dims;
    let vs = mask.affine.voxel_size();
    let mut out = Vec::with_capacity(VOX_OFFSET + nx * ny * nz);
    write_header(
        &mut out,
        [3, nx as i16, ny as i16, nz as i16, 1, 1, 1, 1],
        DT_UINT8,
        8,
        [1.0, vs[0] as f32, vs[1] as f32, vs[2] as f32, 0.0, 0.0, 0.0, 0.0],
        &mask.affine,
    );
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                out.push(mask.get(x, y, z) as u8);
            }
        }
    }
    write_file(path.as_ref(), &out)
}
