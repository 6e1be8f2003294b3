//! On-disk formats.
//!
//! A cube is stored as a raw payload of little-endian `f32` values in
//! band-fastest order plus a text header at `<path>.hdr`:
//!
//! ```text
//! height=50
//! width=50
//! bands=30
//! dtype=f32le
//! layout=bip
//! ```
//!
//! Ground-truth masks are 8-bit binary PGM (`P5`, maxval 255, anomaly = 255).
//! Detection maps are exported as 16-bit PGM (maxval 65535, min-max scaled)
//! for viewing and as `row,col,score` CSV carrying exact values.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::detection::{DetectionMap, GroundTruthMask};
use crate::error::{Error, Result};
use crate::solver::DiagnosticsRecord;
use crate::synth::{NoiseCase, NoiseMeta};
use crate::tensor::{Cube, Shape};

pub const DTYPE_TAG: &str = "f32le";
pub const LAYOUT_TAG: &str = "bip";

pub fn header_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".hdr");
    PathBuf::from(s)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Parses `key=value` lines, ignoring blanks and `#` comments. Duplicate keys
/// are rejected.
pub fn parse_key_values(path: &Path, text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::parse(path, format!("line {}: expected key=value, got {line:?}", n + 1)))?;
        let k = k.trim().to_string();
        if out.iter().any(|(e, _)| *e == k) {
            return Err(Error::parse(path, format!("line {}: duplicate key {k:?}", n + 1)));
        }
        out.push((k, v.trim().to_string()));
    }
    Ok(out)
}

fn lookup<'a>(path: &Path, kv: &'a [(String, String)], key: &str) -> Result<&'a str> {
    kv.iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::parse(path, format!("missing key {key:?}")))
}

fn parse_num<T: std::str::FromStr>(path: &Path, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::parse(path, format!("{key}: cannot parse {v:?}")))
}

pub fn format_header(shape: Shape) -> String {
    format!(
        "height={}\nwidth={}\nbands={}\ndtype={DTYPE_TAG}\nlayout={LAYOUT_TAG}\n",
        shape.height, shape.width, shape.bands
    )
}

pub fn parse_header(path: &Path, text: &str) -> Result<Shape> {
    let kv = parse_key_values(path, text)?;
    for (k, _) in &kv {
        if !matches!(k.as_str(), "height" | "width" | "bands" | "dtype" | "layout") {
            return Err(Error::parse(path, format!("unknown header key {k:?}")));
        }
    }
    let dtype = lookup(path, &kv, "dtype")?;
    if dtype != DTYPE_TAG {
        return Err(Error::parse(path, format!("unsupported dtype {dtype:?}; expected {DTYPE_TAG:?}")));
    }
    let layout = lookup(path, &kv, "layout")?;
    if layout != LAYOUT_TAG {
        return Err(Error::parse(path, format!("unsupported layout {layout:?}; expected {LAYOUT_TAG:?}")));
    }
    let dim = |key: &str| -> Result<usize> {
        let v: usize = parse_num(path, key, lookup(path, &kv, key)?)?;
        if v == 0 {
            return Err(Error::parse(path, format!("{key} must be positive")));
        }
        Ok(v)
    };
    Ok(Shape::new(dim("height")?, dim("width")?, dim("bands")?))
}

/// Writes the payload at `path` and the header at `<path>.hdr`. Values are
/// narrowed to `f32`; a value that overflows `f32` is an error.
pub fn write_cube(cube: &Cube, path: &Path) -> Result<()> {
    let mut bytes = Vec::with_capacity(cube.as_slice().len() * 4);
    for (offset, &v) in cube.as_slice().iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(Error::NonFinite { offset });
        }
        bytes.extend_from_slice(&f.to_le_bytes());
    }
    write_bytes(&header_path(path), format_header(cube.shape()).as_bytes())?;
    write_bytes(path, &bytes)
}

/// Reads a cube; the header is authoritative and the payload must match it
/// exactly.
pub fn read_cube(path: &Path) -> Result<Cube> {
    let hdr = header_path(path);
    let shape = parse_header(&hdr, &read_text(&hdr)?)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let expected = shape.len() * 4;
    if bytes.len() != expected {
        let what = if bytes.len() < expected { "truncated payload" } else { "oversized payload" };
        return Err(Error::parse(
            path,
            format!("{what}: header {shape} needs {expected} bytes, found {}", bytes.len()),
        ));
    }
    let mut data = Vec::with_capacity(shape.len());
    for (offset, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(Error::parse(path, format!("non-finite value at offset {offset}")));
        }
        data.push(v as f64);
    }
    Cube::from_vec(shape, data)
}

/// Raw PGM contents: dimensions, maxval and samples.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

fn pgm_bytes(pgm: &Pgm) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n{}\n", pgm.width, pgm.height, pgm.maxval).into_bytes();
    if pgm.maxval < 256 {
        out.extend(pgm.samples.iter().map(|&s| s as u8));
    } else {
        for s in &pgm.samples {
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    out
}

pub fn read_pgm(path: &Path) -> Result<Pgm> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut pos = 0;
    let mut token = || -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(path, "unexpected end of PGM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    if magic != "P5" {
        return Err(Error::parse(path, format!("expected binary PGM magic P5, found {magic:?}")));
    }
    let width: usize = parse_num(path, "width", &token()?)?;
    let height: usize = parse_num(path, "height", &token()?)?;
    let maxval: u16 = parse_num(path, "maxval", &token()?)?;
    if width == 0 || height == 0 || maxval == 0 {
        return Err(Error::parse(path, "PGM dimensions and maxval must be positive"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let per = if maxval < 256 { 1 } else { 2 };
    let expected = width * height * per;
    let raster = bytes.get(pos..).unwrap_or(&[]);
    if raster.len() != expected {
        return Err(Error::parse(
            path,
            format!("raster of {width}x{height} PGM needs {expected} bytes, found {}", raster.len()),
        ));
    }
    let samples: Vec<u16> = if per == 1 {
        raster.iter().map(|&b| b as u16).collect()
    } else {
        raster.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    };
    if let Some(i) = samples.iter().position(|&s| s > maxval) {
        return Err(Error::parse(path, format!("sample {i} exceeds maxval {maxval}")));
    }
    Ok(Pgm { width, height, maxval, samples })
}

pub fn write_gt_pgm(gt: &GroundTruthMask, path: &Path) -> Result<()> {
    let pgm = Pgm {
        width: gt.width,
        height: gt.height,
        maxval: 255,
        samples: gt.labels.iter().map(|&l| if l { 255 } else { 0 }).collect(),
    };
    write_bytes(path, &pgm_bytes(&pgm))
}

/// Reads a binary mask: 0 is background, maxval is anomaly, anything else is
/// rejected.
pub fn read_gt_pgm(path: &Path) -> Result<GroundTruthMask> {
    let pgm = read_pgm(path)?;
    let mut labels = Vec::with_capacity(pgm.samples.len());
    for (i, &s) in pgm.samples.iter().enumerate() {
        match s {
            0 => labels.push(false),
            s if s == pgm.maxval => labels.push(true),
            s => return Err(Error::parse(path, format!("mask sample {i} is {s}; expected 0 or {}", pgm.maxval))),
        }
    }
    GroundTruthMask::new(pgm.height, pgm.width, labels)
}

/// Min-max scales scores to `0..=65535`; a constant map becomes all zeros.
pub fn write_map_pgm16(map: &DetectionMap, path: &Path) -> Result<()> {
    let mn = map.scores.iter().copied().fold(f64::INFINITY, f64::min);
    let mx = map.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = mx - mn;
    let samples =
        map.scores.iter().map(|&s| if span > 0.0 { ((s - mn) / span * 65535.0).round() as u16 } else { 0 }).collect();
    write_bytes(path, &pgm_bytes(&Pgm { width: map.width, height: map.height, maxval: 65535, samples }))
}

/// Reads any PGM as a map with scores `sample / maxval`.
pub fn read_map_pgm(path: &Path) -> Result<DetectionMap> {
    let pgm = read_pgm(path)?;
    let m = pgm.maxval as f64;
    DetectionMap::new(pgm.height, pgm.width, pgm.samples.iter().map(|&s| s as f64 / m).collect())
}

pub const MAP_CSV_HEADER: &str = "row,col,score";

pub fn format_map_csv(map: &DetectionMap) -> String {
    let mut out = String::with_capacity(map.scores.len() * 24);
    out.push_str(MAP_CSV_HEADER);
    out.push('\n');
    for i in 0..map.height {
        for j in 0..map.width {
            // `{}` on f64 prints the shortest string that parses back exactly.
            let _ = writeln!(out, "{i},{j},{}", map.get(i, j));
        }
    }
    out
}

pub fn write_map_csv(map: &DetectionMap, path: &Path) -> Result<()> {
    write_bytes(path, format_map_csv(map).as_bytes())
}

/// Reads `row,col,score` rows in any order; every pixel must appear once.
pub fn read_map_csv(path: &Path) -> Result<DetectionMap> {
    let text = read_text(path)?;
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == MAP_CSV_HEADER => {}
        _ => return Err(Error::parse(path, format!("expected header {MAP_CSV_HEADER:?}"))),
    }
    let mut rows: Vec<(usize, usize, f64)> = Vec::new();
    for (n, line) in lines {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::parse(path, format!("line {}: expected 3 fields", n + 1)));
        }
        let i: usize = parse_num(path, "row", fields[0])?;
        let j: usize = parse_num(path, "col", fields[1])?;
        let s: f64 = parse_num(path, "score", fields[2])?;
        rows.push((i, j, s));
    }
    let height = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
    let width = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
    if height * width != rows.len() || rows.is_empty() {
        return Err(Error::parse(path, format!("{} rows do not cover a {height}x{width} grid", rows.len())));
    }
    let mut scores = vec![f64::NAN; height * width];
    for &(i, j, s) in &rows {
        let slot = &mut scores[i * width + j];
        if !slot.is_nan() {
            return Err(Error::parse(path, format!("pixel ({i},{j}) appears twice")));
        }
        *slot = s;
    }
    DetectionMap::new(height, width, scores).map_err(|e| Error::parse(path, e.to_string()))
}

pub fn format_roc_csv(points: &[(f64, f64)]) -> String {
    let mut out = String::from("pfa,pd\n");
    for (pfa, pd) in points {
        let _ = writeln!(out, "{pfa},{pd}");
    }
    out
}

pub fn write_roc_csv(points: &[(f64, f64)], path: &Path) -> Result<()> {
    write_bytes(path, format_roc_csv(points).as_bytes())
}

pub fn format_metrics(auc: f64, ser: f64) -> String {
    format!("auc={auc}\nser={ser}\n")
}

pub const DIAGNOSTICS_HEADER: &str = "iteration,relative_change,data_residual,s_l1,stripe_flatness,objective";

pub fn format_diagnostics(history: &[DiagnosticsRecord]) -> String {
    let mut out = String::from(DIAGNOSTICS_HEADER);
    out.push('\n');
    for r in history {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            r.iteration, r.relative_change, r.data_residual, r.s_l1, r.stripe_flatness, r.objective
        );
    }
    out
}

pub fn format_noise_meta(meta: &NoiseMeta) -> String {
    let mut out = format!("sigma={}\nsp={}\nsl={}\n", meta.sigma, meta.sp, meta.sl);
    if let Some(c) = meta.case {
        let _ = writeln!(out, "case={}", c.id());
    }
    if let Some(s) = meta.seed {
        let _ = writeln!(out, "seed={s}");
    }
    out
}

pub fn parse_noise_meta(path: &Path, text: &str) -> Result<NoiseMeta> {
    let kv = parse_key_values(path, text)?;
    let rate = |key: &str| -> Result<f64> { parse_num(path, key, lookup(path, &kv, key)?) };
    let optional = |key: &str| kv.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str());
    let case = match optional("case") {
        Some(v) => {
            let id: u8 = parse_num(path, "case", v)?;
            Some(NoiseCase::from_id(id).map_err(|e| Error::parse(path, e.to_string()))?)
        }
        None => None,
    };
    let seed = optional("seed").map(|v| parse_num(path, "seed", v)).transpose()?;
    Ok(NoiseMeta { sigma: rate("sigma")?, sp: rate("sp")?, sl: rate("sl")?, case, seed })
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

pub fn read_noise_meta(path: &Path) -> Result<NoiseMeta> {
    parse_noise_meta(path, &read_text(path)?)
}
