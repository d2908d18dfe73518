//! On-disk formats.
//!
//! * SEGMAP: `"SEGM"`, version `u8 = 1`, `u32` width, height, num_classes,
//!   then width×height little-endian `u16` labels, row-major.
//! * PGM: plain (`P2`) and raw (`P5`) graymaps; the maxval is
//!   `num_classes - 1` (at least 1), and `num_classes = maxval + 1` on load.
//! * PROB: `"PROB"`, version `u8 = 1`, `u32` width, height, channels, then
//!   little-endian `f32` probabilities, channel-last row-major.
//! * PPM: binary `P6` dump of an RGB tensor, for eyeballing only.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use crate::condnet::Tensor;
use crate::error::{Error, Result};
use crate::segmap::{LabelMap, ProbMap};

pub const SEGMAP_MAGIC: &[u8; 4] = b"SEGM";
pub const SEGMAP_VERSION: u8 = 1;
pub const PROBMAP_MAGIC: &[u8; 4] = b"PROB";
pub const PROBMAP_VERSION: u8 = 1;

const HEADER_LEN: usize = 4 + 1 + 12;

/// Label-map file encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapFormat {
    Segmap,
    PgmPlain,
    PgmRaw,
}

impl MapFormat {
    /// Guesses from the extension; anything but `.pgm` is SEGMAP.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("pgm") => MapFormat::PgmRaw,
            _ => MapFormat::Segmap,
        }
    }
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn read_header(
    bytes: &[u8],
    magic: &[u8; 4],
    version: u8,
    format: &'static str,
) -> Result<(usize, usize, usize)> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(
            format,
            format!("header truncated ({} bytes)", bytes.len()),
        ));
    }
    if &bytes[..4] != magic {
        return Err(Error::format(format, "bad magic"));
    }
    if bytes[4] != version {
        return Err(Error::format(
            format,
            format!("unsupported version {}", bytes[4]),
        ));
    }
    Ok((
        read_u32(bytes, 5) as usize,
        read_u32(bytes, 9) as usize,
        read_u32(bytes, 13) as usize,
    ))
}

fn write_header(out: &mut Vec<u8>, magic: &[u8; 4], version: u8, dims: [usize; 3]) {
    out.extend_from_slice(magic);
    out.push(version);
    for d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
}

pub fn encode_segmap(map: &LabelMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 2 * map.len());
    write_header(
        &mut out,
        SEGMAP_MAGIC,
        SEGMAP_VERSION,
        [map.width(), map.height(), map.num_classes()],
    );
    for &l in map.labels() {
        out.extend_from_slice(&l.to_le_bytes());
    }
    out
}

pub fn decode_segmap(bytes: &[u8]) -> Result<LabelMap> {
    let (w, h, n) = read_header(bytes, SEGMAP_MAGIC, SEGMAP_VERSION, "SEGMAP")?;
    let payload = &bytes[HEADER_LEN..];
    let expected = w
        .checked_mul(h)
        .and_then(|p| p.checked_mul(2))
        .ok_or_else(|| Error::format("SEGMAP", "dimensions overflow"))?;
    if payload.len() != expected {
        return Err(Error::format(
            "SEGMAP",
            format!("payload is {} bytes, expected {expected}", payload.len()),
        ));
    }
    let labels = payload
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect();
    LabelMap::new(w, h, n, labels)
}

pub fn encode_probmap(map: &ProbMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * map.probs().len());
    write_header(
        &mut out,
        PROBMAP_MAGIC,
        PROBMAP_VERSION,
        [map.width(), map.height(), map.num_classes()],
    );
    for &p in map.probs() {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

pub fn decode_probmap(bytes: &[u8]) -> Result<ProbMap> {
    let (w, h, c) = read_header(bytes, PROBMAP_MAGIC, PROBMAP_VERSION, "PROBMAP")?;
    let payload = &bytes[HEADER_LEN..];
    let expected = w
        .checked_mul(h)
        .and_then(|p| p.checked_mul(c))
        .and_then(|p| p.checked_mul(4))
        .ok_or_else(|| Error::format("PROBMAP", "dimensions overflow"))?;
    if payload.len() != expected {
        return Err(Error::format(
            "PROBMAP",
            format!("payload is {} bytes, expected {expected}", payload.len()),
        ));
    }
    let probs = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    ProbMap::new(w, h, c, probs)
}

/// Splits a PNM header into tokens, skipping `#` comments. Returns the
/// tokens and the offset just past the single whitespace byte that ends the
/// last token.
fn pnm_header(bytes: &[u8], count: usize) -> Result<(Vec<String>, usize)> {
    let mut tokens = Vec::with_capacity(count);
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && (bytes[i].is_ascii_whitespace() || bytes[i] == b'#') {
            if bytes[i] == b'#' {
                while i < bytes.len() && bytes[i] != b'\n' {
                    i += 1;
                }
            } else {
                i += 1;
            }
        }
        if i >= bytes.len() {
            return Err(Error::format("PGM", "header truncated"));
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() && bytes[i] != b'#' {
            i += 1;
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    Ok((tokens, (i + 1).min(bytes.len())))
}

fn parse_dim(tok: &str, what: &str) -> Result<usize> {
    tok.parse::<usize>()
        .map_err(|_| Error::format("PGM", format!("bad {what} {tok:?}")))
}

pub fn decode_pgm(bytes: &[u8]) -> Result<LabelMap> {
    let (tokens, body) = pnm_header(bytes, 4)?;
    let raw = match tokens[0].as_str() {
        "P2" => false,
        "P5" => true,
        other => return Err(Error::format("PGM", format!("unsupported magic {other:?}"))),
    };
    let w = parse_dim(&tokens[1], "width")?;
    let h = parse_dim(&tokens[2], "height")?;
    let maxval = parse_dim(&tokens[3], "maxval")?;
    if maxval == 0 || maxval > u16::MAX as usize {
        return Err(Error::format(
            "PGM",
            format!("maxval {maxval} outside 1..=65535"),
        ));
    }
    let n = w * h;
    let labels: Vec<u16> = if raw {
        let bpp = if maxval < 256 { 1 } else { 2 };
        let data = &bytes[body..];
        if data.len() < n * bpp {
            return Err(Error::format(
                "PGM",
                format!("payload is {} bytes, expected {}", data.len(), n * bpp),
            ));
        }
        if bpp == 1 {
            data[..n].iter().map(|&b| b as u16).collect()
        } else {
            data[..2 * n]
                .chunks_exact(2)
                .map(|c| u16::from_be_bytes([c[0], c[1]]))
                .collect()
        }
    } else {
        let text = std::str::from_utf8(&bytes[body..])
            .map_err(|_| Error::format("PGM", "non-ASCII payload"))?;
        let vals = text
            .split_ascii_whitespace()
            .take(n)
            .map(|t| {
                t.parse::<u16>()
                    .map_err(|_| Error::format("PGM", format!("bad sample {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if vals.len() < n {
            return Err(Error::format(
                "PGM",
                format!("{} samples, expected {n}", vals.len()),
            ));
        }
        vals
    };
    if let Some(i) = labels.iter().position(|&l| l as usize > maxval) {
        return Err(Error::LabelOutOfRange {
            x: i % w.max(1),
            y: i / w.max(1),
            label: labels[i] as usize,
            num_classes: maxval + 1,
        });
    }
    LabelMap::new(w, h, maxval + 1, labels)
}

pub fn encode_pgm(map: &LabelMap, raw: bool) -> Vec<u8> {
    let maxval = map.num_classes().saturating_sub(1).max(1);
    let magic = if raw { "P5" } else { "P2" };
    let mut out = format!("{magic}\n{} {}\n{maxval}\n", map.width(), map.height()).into_bytes();
    if raw {
        for &l in map.labels() {
            if maxval < 256 {
                out.push(l as u8);
            } else {
                out.extend_from_slice(&l.to_be_bytes());
            }
        }
    } else {
        for row in map.labels().chunks(map.width()) {
            let line: Vec<String> = row.iter().map(|l| l.to_string()).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    out
}

/// Decodes either a SEGMAP or a PGM, sniffing the magic bytes.
pub fn decode_map(bytes: &[u8]) -> Result<LabelMap> {
    if bytes.starts_with(SEGMAP_MAGIC) {
        decode_segmap(bytes)
    } else if bytes.starts_with(b"P2") || bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else {
        Err(Error::format("label map", "unrecognised magic"))
    }
}

pub fn encode_map(map: &LabelMap, format: MapFormat) -> Vec<u8> {
    match format {
        MapFormat::Segmap => encode_segmap(map),
        MapFormat::PgmPlain => encode_pgm(map, false),
        MapFormat::PgmRaw => encode_pgm(map, true),
    }
}

pub fn load_map(path: impl AsRef<Path>) -> Result<LabelMap> {
    decode_map(&fs::read(path)?)
}

/// Writes `map` in the format implied by the file extension.
pub fn save_map(map: &LabelMap, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_map(map, MapFormat::from_path(path)))?;
    Ok(())
}

pub fn load_probmap(path: impl AsRef<Path>) -> Result<ProbMap> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    decode_probmap(&bytes)
}

pub fn save_probmap(map: &ProbMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_probmap(map))?;
    Ok(())
}

/// Binary PPM of a 3-channel tensor with values in `[0, 1]`.
pub fn encode_ppm(rgb: &Tensor) -> Result<Vec<u8>> {
    if rgb.channels() != 3 {
        return Err(Error::shape("PPM channels", 3, rgb.channels()));
    }
    let (h, w) = (rgb.height(), rgb.width());
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let v = (rgb.get(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8;
                out.push(v);
            }
        }
    }
    Ok(out)
}

pub fn save_ppm(rgb: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(&encode_ppm(rgb)?)?;
    Ok(())
}
