//! Field serialization: CSV rows `x[,y],u1[,u2,u3]` and PGM images with a
//! `.meta` sidecar recording the gray-level rescale.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{NlgError, Result};
use crate::grid::{make_grid, Field, GridDomain};

pub fn field_to_csv(u: &Field) -> String {
    let d = u.domain.d;
    let mut s = String::new();
    let mut head: Vec<String> = ["x", "y"][..d].iter().map(|v| v.to_string()).collect();
    head.extend((1..=u.m).map(|c| format!("u{c}")));
    s.push_str(&head.join(","));
    s.push('\n');
    for i in 0..u.domain.len() {
        let x = u.domain.node(i);
        let mut row: Vec<String> = x[..d].iter().map(|v| format!("{v}")).collect();
        row.extend(u.at(i).iter().map(|v| format!("{v}")));
        let _ = writeln!(s, "{}", row.join(","));
    }
    s
}

pub fn write_field_csv(u: &Field, path: &Path) -> Result<()> {
    fs::write(path, field_to_csv(u))?;
    Ok(())
}

/// Rescale used when writing a PGM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrayScale {
    pub lo: f64,
    pub hi: f64,
}

impl GrayScale {
    pub fn to_level(&self, v: f64) -> u8 {
        let span = self.hi - self.lo;
        let t = if span > 0.0 { (v - self.lo) / span } else { 0.0 };
        (t.clamp(0.0, 1.0) * 255.0).round() as u8
    }

    pub fn to_value(&self, level: u8) -> f64 {
        self.lo + (self.hi - self.lo) * level as f64 / 255.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    Ascii,
    Binary,
}

fn meta_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

/// Writes a scalar 2D field row-major (row 0 = smallest y) and its sidecar.
pub fn write_pgm(u: &Field, path: &Path, format: PgmFormat, scale: Option<GrayScale>) -> Result<GrayScale> {
    if u.domain.d != 2 || u.m != 1 {
        return Err(NlgError::DimensionMismatch("PGM needs d=2, m=1".into()));
    }
    let scale = scale.unwrap_or_else(|| {
        let lo = u.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = u.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        GrayScale { lo, hi }
    });
    let (w, h) = (u.domain.n[0], u.domain.n[1]);
    let levels: Vec<u8> = u.values.iter().map(|v| scale.to_level(*v)).collect();
    let mut bytes = match format {
        PgmFormat::Ascii => format!("P2\n{w} {h}\n255\n").into_bytes(),
        PgmFormat::Binary => format!("P5\n{w} {h}\n255\n").into_bytes(),
    };
    match format {
        PgmFormat::Ascii => {
            for row in levels.chunks(w) {
                let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
                bytes.extend(line.join(" ").into_bytes());
                bytes.push(b'\n');
            }
        }
        PgmFormat::Binary => bytes.extend_from_slice(&levels),
    }
    fs::write(path, bytes)?;
    fs::write(
        meta_path(path),
        format!("lo = {}\nhi = {}\nh = {}\n", scale.lo, scale.hi, u.domain.h),
    )?;
    Ok(scale)
}

fn parse_meta(text: &str) -> (Option<GrayScale>, Option<f64>) {
    let mut lo = None;
    let mut hi = None;
    let mut h = None;
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            let v: Option<f64> = v.trim().parse().ok();
            match k.trim() {
                "lo" => lo = v,
                "hi" => hi = v,
                "h" => h = v,
                _ => {}
            }
        }
    }
    (lo.zip(hi).map(|(lo, hi)| GrayScale { lo, hi }), h)
}

/// Reads P2/P5. Without a sidecar values map to [0, 1] and the spacing to 1/width.
pub fn read_pgm(path: &Path) -> Result<Field> {
    let bytes = fs::read(path)?;
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
            return Err(NlgError::Format("truncated PGM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token()?;
    let num = |s: String| s.parse::<usize>().map_err(|_| NlgError::Format(format!("bad PGM number `{s}`")));
    let w = num(token()?)?;
    let h = num(token()?)?;
    let maxval = num(token()?)?;
    if maxval == 0 || maxval > 255 {
        return Err(NlgError::Format(format!("unsupported maxval {maxval}")));
    }
    let raw: Vec<u8> = match magic.as_str() {
        "P2" => {
            let mut v = Vec::with_capacity(w * h);
            for _ in 0..w * h {
                let t = num(token()?)?;
                v.push((t * 255 / maxval) as u8);
            }
            v
        }
        "P5" => {
            let start = pos + 1;
            let data = bytes
                .get(start..start + w * h)
                .ok_or_else(|| NlgError::Format("truncated PGM data".into()))?;
            data.iter().map(|&b| (b as usize * 255 / maxval) as u8).collect()
        }
        other => return Err(NlgError::Format(format!("unsupported magic `{other}`"))),
    };
    let (scale, spacing) = match fs::read_to_string(meta_path(path)) {
        Ok(text) => parse_meta(&text),
        Err(_) => (None, None),
    };
    let scale = scale.unwrap_or(GrayScale { lo: 0.0, hi: 1.0 });
    let hh = spacing.unwrap_or(1.0 / w as f64);
    let domain: Arc<GridDomain> = Arc::new(make_grid(&[0.0, 0.0], &[w as f64 * hh, h as f64 * hh], hh)?);
    Field::new(domain, 1, raw.iter().map(|l| scale.to_value(*l)).collect())
}
