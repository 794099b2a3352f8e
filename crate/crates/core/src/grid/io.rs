//! Plain-file formats: binary PGM masks with a text sidecar, and CSV fields.
//!
//! PGM rows run over axis 1 (then axis 2 for 3-D grids, slices stacked
//! vertically); columns over axis 0. The sidecar sits next to the image
//! with the extension `hdr`.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use super::{BinarySet, GridGeometry, ScalarField};
use crate::error::{Error, Result};

pub fn sidecar_path(pgm: &Path) -> PathBuf {
    pgm.with_extension("hdr")
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

pub fn write_pgm(set: &BinarySet, path: &Path) -> Result<()> {
    let g = set.geometry();
    let n = g.dims3();
    let mut bytes = format!("P5\n{} {}\n255\n", n[0], n[1] * n[2]).into_bytes();
    bytes.extend(set.mask().iter().map(|&b| if b { 255u8 } else { 0 }));
    fs::write(path, bytes)?;

    let mut hdr = String::new();
    writeln!(hdr, "dim = {}", g.dim()).unwrap();
    writeln!(hdr, "origin = {}", join(g.origin())).unwrap();
    writeln!(hdr, "extent = {}", join(&g.extent())).unwrap();
    let cells: Vec<String> = g.cells_per_axis().iter().map(|c| c.to_string()).collect();
    writeln!(hdr, "cells = {}", cells.join(" ")).unwrap();
    writeln!(hdr, "complement_is_bounded = {}", set.complement_is_bounded()).unwrap();
    fs::write(sidecar_path(path), hdr)?;
    Ok(())
}

fn header_value<'a>(text: &'a str, key: &str) -> Result<&'a str> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == key)
        .map(|(_, v)| v.trim())
        .ok_or_else(|| Error::Format(format!("sidecar is missing `{key}`")))
}

fn parse_list<T: std::str::FromStr>(s: &str, key: &str) -> Result<Vec<T>> {
    s.split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format(format!("bad value `{t}` for `{key}`"))))
        .collect()
}

pub fn read_pgm(path: &Path) -> Result<BinarySet> {
    let hdr = fs::read_to_string(sidecar_path(path))?;
    let origin: Vec<f64> = parse_list(header_value(&hdr, "origin")?, "origin")?;
    let extent: Vec<f64> = parse_list(header_value(&hdr, "extent")?, "extent")?;
    let cells: Vec<usize> = parse_list(header_value(&hdr, "cells")?, "cells")?;
    let flag = match header_value(&hdr, "complement_is_bounded")? {
        "true" => true,
        "false" => false,
        other => return Err(Error::Format(format!("bad complement flag `{other}`"))),
    };
    let geometry = GridGeometry::new(&origin, &extent, &cells)?;

    let bytes = fs::read(path)?;
    let (width, height, data) = parse_p5(&bytes)?;
    let n = geometry.dims3();
    if width != n[0] || height != n[1] * n[2] || data.len() != geometry.len() {
        return Err(Error::Format(format!(
            "image is {width}x{height} but the sidecar describes {:?}",
            geometry.cells_per_axis()
        )));
    }
    let mask = data
        .iter()
        .map(|&v| match v {
            0 => Ok(false),
            255 => Ok(true),
            other => Err(Error::Format(format!("pixel value {other} is neither 0 nor 255"))),
        })
        .collect::<Result<Vec<_>>>()?;
    BinarySet::new(geometry, mask, flag)
}

fn parse_p5(bytes: &[u8]) -> Result<(usize, usize, &[u8])> {
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(std::str::from_utf8(&bytes[start..pos]).map_err(|_| Error::Format("bad PGM header".into()))?);
    }
    if fields[0] != "P5" {
        return Err(Error::Format(format!("expected P5 magic, got `{}`", fields[0])));
    }
    let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PGM number `{s}`")));
    let (w, h, maxval) = (num(fields[1])?, num(fields[2])?, num(fields[3])?);
    if maxval != 255 {
        return Err(Error::Format(format!("expected maxval 255, got {maxval}")));
    }
    // exactly one whitespace byte separates the header from the raster
    Ok((w, h, &bytes[pos + 1..]))
}

/// Writes the field as CSV: three `#` header lines, then one line per grid
/// row (axis-0 values). 3-D slices are separated by a blank line.
pub fn write_field_csv(field: &ScalarField, path: &Path) -> Result<()> {
    let g = field.geometry();
    let n = g.dims3();
    let mut out = String::new();
    writeln!(out, "# origin={}", g.origin().iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")).unwrap();
    writeln!(out, "# cell_size={}", g.cell_size()).unwrap();
    writeln!(out, "# outside_value={}", field.outside_value()).unwrap();
    for k in 0..n[2] {
        if k > 0 {
            out.push('\n');
        }
        for j in 0..n[1] {
            let start = n[0] * (j + n[1] * k);
            let row: Vec<String> = field.values()[start..start + n[0]].iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", row.join(",")).unwrap();
        }
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_field_csv(path: &Path) -> Result<ScalarField> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let mut header = |key: &str| -> Result<String> {
        let l = lines.next().ok_or_else(|| Error::Format("CSV header truncated".into()))?;
        let rest = l
            .strip_prefix('#')
            .and_then(|r| r.trim().strip_prefix(key))
            .and_then(|r| r.strip_prefix('='))
            .ok_or_else(|| Error::Format(format!("expected `# {key}=...`, got `{l}`")))?;
        Ok(rest.trim().to_string())
    };
    let origin: Vec<f64> = header("origin")?
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| Error::Format(format!("bad origin component `{t}`"))))
        .collect::<Result<_>>()?;
    let cell_size: f64 = header("cell_size")?.parse().map_err(|_| Error::Format("bad cell_size".into()))?;
    let outside: f64 = header("outside_value")?.parse().map_err(|_| Error::Format("bad outside_value".into()))?;

    let mut slices: Vec<Vec<Vec<f64>>> = vec![Vec::new()];
    for (lineno, l) in lines.enumerate() {
        if l.trim().is_empty() {
            if !slices.last().unwrap().is_empty() {
                slices.push(Vec::new());
            }
            continue;
        }
        let row = l
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| Error::Format(format!("line {}: bad value `{t}`", lineno + 4))))
            .collect::<Result<Vec<_>>>()?;
        slices.last_mut().unwrap().push(row);
    }
    if slices.last().is_some_and(|s| s.is_empty()) {
        slices.pop();
    }
    let dim = origin.len();
    let n0 = slices.first().and_then(|s| s.first()).map_or(0, |r| r.len());
    let n1 = slices.first().map_or(0, |s| s.len());
    let n2 = slices.len();
    let cells: Vec<usize> = match dim {
        1 => vec![n0],
        2 => vec![n0, n1],
        3 => vec![n0, n1, n2],
        _ => return Err(Error::Format(format!("origin has {dim} components"))),
    };
    if (dim == 1 && (n1 != 1 || n2 != 1)) || (dim == 2 && n2 != 1) {
        return Err(Error::Format("row layout does not match the origin dimension".into()));
    }
    let extent: Vec<f64> = cells.iter().map(|&c| c as f64 * cell_size).collect();
    let geometry = GridGeometry::new(&origin, &extent, &cells)?;
    let mut values = Vec::with_capacity(geometry.len());
    for s in &slices {
        if s.len() != n1 {
            return Err(Error::Format("ragged slices".into()));
        }
        for r in s {
            if r.len() != n0 {
                return Err(Error::Format("ragged rows".into()));
            }
            values.extend_from_slice(r);
        }
    }
    ScalarField::new(geometry, values, outside)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ball;

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridGeometry::new(&[-1.0, 0.5], &[2.0, 1.5], &[16, 12]).unwrap();
        let e = ball(&g, &[0.0, 1.2], 0.4).unwrap().complement();
        let p = dir.path().join("snap.pgm");
        write_pgm(&e, &p).unwrap();
        assert_eq!(read_pgm(&p).unwrap(), e);
        let raw = fs::read(&p).unwrap();
        assert!(raw.starts_with(b"P5\n16 12\n255\n"));
    }

    #[test]
    fn csv_round_trip_2d_and_3d() {
        let dir = tempfile::tempdir().unwrap();
        for dim in [1, 2, 3] {
            let g = GridGeometry::cube(dim, -0.5, 0.5, 5).unwrap();
            let u = ScalarField::from_fn(g, 0.0, |x| {
                let r2 = x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
                (0.16 - r2).max(0.0) / 3.0
            })
            .unwrap();
            let p = dir.path().join(format!("u{dim}.csv"));
            write_field_csv(&u, &p).unwrap();
            assert_eq!(read_field_csv(&p).unwrap(), u);
        }
    }

    #[test]
    fn csv_header_is_three_lines() {
        let dir = tempfile::tempdir().unwrap();
        let g = GridGeometry::cube(2, 0.0, 1.0, 4).unwrap();
        let p = dir.path().join("c.csv");
        write_field_csv(&ScalarField::constant(g, 2.5), &p).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# origin=0,0");
        assert_eq!(lines[1], "# cell_size=0.25");
        assert_eq!(lines[2], "# outside_value=2.5");
        assert_eq!(lines.len(), 7);
    }
}
