//! Artifact formatting: CSV tables, SVG plots and the run manifest.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::{Context, Result};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// One output file, kept in memory until the run finishes.
#[derive(Debug, Clone)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// Floats with 17 significant digits; `inf`, `-inf`, `nan` spelled out.
pub fn num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

pub fn opt_num(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

pub fn opt_bool(x: Option<bool>) -> String {
    x.map(|b| b.to_string()).unwrap_or_default()
}

/// RFC 4180 CSV with the given header.
pub fn csv_named(name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<Artifact> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    Ok(Artifact { name: name.into(), bytes: w.into_inner().context("flushing CSV")? })
}

pub fn json_artifact(name: &str, value: &Value) -> Result<Artifact> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(Artifact { name: name.into(), bytes: s.into_bytes() })
}

/// SHA-256 over `blob <len>\0<bytes>`.
pub fn content_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn manifest(command: &str, config: &Value, seed: u64, files: &[String]) -> Result<Artifact> {
    let canonical = serde_json::to_vec(config)?;
    json_artifact(
        "manifest.json",
        &json!({
            "command": command,
            "config": config,
            "config_hash": content_hash(&canonical),
            "seed": seed,
            "version": env!("CARGO_PKG_VERSION"),
            "files": files,
        }),
    )
}

pub fn write_all(dir: &Path, artifacts: &[Artifact]) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for a in artifacts {
        std::fs::write(dir.join(&a.name), &a.bytes).with_context(|| format!("writing {}", a.name))?;
    }
    Ok(())
}

/// Colour ramp from dark blue through teal to yellow, `t` in `[0, 1]`.
fn ramp(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let stops = [(0.0, [68, 1, 84]), (0.5, [33, 145, 140]), (1.0, [253, 231, 37])];
    let (a, b) = if t <= 0.5 { (stops[0], stops[1]) } else { (stops[1], stops[2]) };
    let s = (t - a.0) / (b.0 - a.0);
    let c: Vec<u8> = (0..3).map(|i| (a.1[i] as f64 + s * (b.1[i] as f64 - a.1[i] as f64)).round() as u8).collect();
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

/// Heatmap of `values[row][col]` with optional polylines in unit
/// coordinates (`[0,1]^2`, y up).
pub fn svg_heatmap(title: &str, values: &[Vec<f64>], lines: &[Vec<(f64, f64)>]) -> Artifact {
    let rows = values.len().max(1);
    let cols = values.first().map_or(1, |r| r.len().max(1));
    let size = 480.0;
    let (cw, ch) = (size / cols as f64, size / rows as f64);
    let finite = values.iter().flatten().copied().filter(|x| x.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), x| (l.min(x), h.max(x)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = size + 20.0,
        h = size + 40.0
    );
    let _ = writeln!(s, r#"<text x="10" y="20" font-family="sans-serif" font-size="14">{title}</text>"#);
    let _ = writeln!(s, r#"<g transform="translate(10,30)">"#);
    for (i, row) in values.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            let y = size - (i + 1) as f64 * ch;
            let _ = writeln!(
                s,
                r#"<rect x="{:.3}" y="{:.3}" width="{:.3}" height="{:.3}" fill="{}"/>"#,
                j as f64 * cw,
                y,
                cw + 0.05,
                ch + 0.05,
                ramp((v - lo) / span)
            );
        }
    }
    for line in lines {
        let pts: Vec<String> =
            line.iter().map(|&(x, y)| format!("{:.3},{:.3}", x * size, size - y * size)).collect();
        let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="red" stroke-width="2"/>"#, pts.join(" "));
    }
    s.push_str("</g>\n</svg>\n");
    Artifact { name: String::new(), bytes: s.into_bytes() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(f64::INFINITY), "inf");
        assert_eq!(0.1f64, num(0.1).parse::<f64>().unwrap());
    }

    #[test]
    fn hash_is_git_blob_style() {
        // `git hash-object` uses SHA-1; the header layout is the same.
        assert_eq!(content_hash(b"").len(), 64);
        assert_ne!(content_hash(b"a"), content_hash(b"b"));
    }

    #[test]
    fn empty_table_has_header_only() {
        let a = csv_named("t.csv", &["x", "y"], &[]).unwrap();
        assert_eq!(a.bytes, b"x,y\r\n");
    }
}
