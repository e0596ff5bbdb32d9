//! Text file formats: field and distortion files, gain maps, codebooks and
//! summary tables. Floats are written with Rust's shortest round-trip
//! formatting, so every write/read pair is value-exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use num_complex::Complex64;

use crate::codebook::{Codebook, GainMap};
use crate::error::{Error, Result};
use crate::field::{AntennaFieldMap, DistortionField};
use crate::grid::SphericalGrid;
use crate::metrics::{CdfSummary, CoverageRow};

const FIELD_MAGIC: &str = "beamshadow-field v1";
const DISTORTION_MAGIC: &str = "beamshadow-distortion v1";
const GAIN_MAGIC: &str = "beamshadow-gain v1";

fn header(magic: &str, n: usize, grid: &SphericalGrid, extra: &str) -> String {
    format!(
        "{magic}, N={n}, theta={}, phi={}, {extra}\n",
        grid.theta_spec(),
        grid.phi_spec()
    )
}

pub fn field_to_string(field: &AntennaFieldMap) -> String {
    let g = field.grid();
    let mut s = header(
        FIELD_MAGIC,
        field.n_antennas(),
        g,
        &format!("label={}", field.label),
    );
    s.push_str("antenna,theta_deg,phi_deg,re,im\n");
    for i in 0..field.n_antennas() {
        for (c, d) in g.directions().enumerate() {
            let z = field.get(i, c);
            let _ = writeln!(s, "{i},{},{},{},{}", d.theta_deg, d.phi_deg, z.re, z.im);
        }
    }
    s
}

pub fn write_field_file(field: &AntennaFieldMap, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, field_to_string(field))?;
    Ok(())
}

pub fn read_field_file(path: impl AsRef<Path>) -> Result<AntennaFieldMap> {
    parse_field(&fs::read_to_string(path)?)
}

pub fn parse_field(text: &str) -> Result<AntennaFieldMap> {
    let t = parse_table(text, FIELD_MAGIC, "antenna,theta_deg,phi_deg,re,im")?;
    let label = t.extra.strip_prefix("label=").ok_or_else(|| Error::Parse {
        line: 1,
        msg: "header is missing `label=`".into(),
    })?;
    let samples = t
        .values
        .iter()
        .map(|&(a, b)| Complex64::new(a, b))
        .collect();
    AntennaFieldMap::new(t.grid, t.n, samples, label)
}

pub fn distortion_to_string(d: &DistortionField) -> String {
    let g = d.grid();
    let mut s = header(DISTORTION_MAGIC, d.n_antennas(), g, "label=distortion");
    s.push_str("antenna,theta_deg,phi_deg,amp,phase_rad\n");
    for i in 0..d.n_antennas() {
        for (c, dir) in g.directions().enumerate() {
            let _ = writeln!(
                s,
                "{i},{},{},{},{}",
                dir.theta_deg,
                dir.phi_deg,
                d.amp_at(i, c),
                d.phase_at(i, c)
            );
        }
    }
    s
}

pub fn write_distortion_file(d: &DistortionField, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, distortion_to_string(d))?;
    Ok(())
}

pub fn read_distortion_file(path: impl AsRef<Path>) -> Result<DistortionField> {
    parse_distortion(&fs::read_to_string(path)?)
}

pub fn parse_distortion(text: &str) -> Result<DistortionField> {
    let t = parse_table(
        text,
        DISTORTION_MAGIC,
        "antenna,theta_deg,phi_deg,amp,phase_rad",
    )?;
    let (amp, phase) = t.values.into_iter().unzip();
    DistortionField::new(t.grid, t.n, amp, phase)
}

struct Table {
    grid: SphericalGrid,
    n: usize,
    extra: String,
    values: Vec<(f64, f64)>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_header(line: &str, magic: &str) -> Result<(usize, SphericalGrid, String)> {
    let rest = line
        .strip_prefix(magic)
        .and_then(|r| r.strip_prefix(", "))
        .ok_or_else(|| parse_err(1, format!("expected header starting with `{magic}, `")))?;
    // label is last and may itself contain commas
    let mut parts = rest.splitn(4, ", ");
    let mut field = |key: &str| {
        parts
            .next()
            .and_then(|p| p.strip_prefix(key))
            .ok_or_else(|| parse_err(1, format!("header is missing `{key}`")))
    };
    let n_str = field("N=")?;
    let theta = field("theta=")?;
    let phi = field("phi=")?;
    let extra = parts.next().unwrap_or("").to_string();
    let n: usize = n_str
        .parse()
        .map_err(|_| parse_err(1, format!("bad antenna count `{n_str}`")))?;
    let grid = SphericalGrid::from_specs(theta, phi).map_err(|e| parse_err(1, e.to_string()))?;
    Ok((n, grid, extra))
}

fn parse_table(text: &str, magic: &str, columns: &str) -> Result<Table> {
    let mut lines = text.lines();
    let (n, grid, extra) = parse_header(lines.next().unwrap_or(""), magic)?;
    if n < 1 {
        return Err(parse_err(1, "N must be >= 1"));
    }
    match lines.next() {
        Some(l) if l.trim() == columns => {}
        _ => return Err(parse_err(2, format!("expected column line `{columns}`"))),
    }
    let expected = n * grid.len();
    let mut values = Vec::with_capacity(expected);
    for (k, raw) in lines.enumerate() {
        let line_no = k + 3;
        if raw.trim().is_empty() {
            continue;
        }
        if values.len() == expected {
            return Err(parse_err(
                line_no,
                format!("extra row beyond the {expected} declared by the header"),
            ));
        }
        let idx = values.len();
        let (i, cell) = (idx / grid.len(), idx % grid.len());
        let cols: Vec<&str> = raw.split(',').collect();
        if cols.len() != 5 {
            return Err(parse_err(
                line_no,
                format!("expected 5 columns, got {}", cols.len()),
            ));
        }
        let num = |s: &str| -> Result<f64> {
            let v: f64 = s
                .trim()
                .parse()
                .map_err(|_| parse_err(line_no, format!("bad number `{s}`")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(parse_err(line_no, format!("non-finite value `{s}`")))
            }
        };
        let antenna: usize = cols[0]
            .trim()
            .parse()
            .map_err(|_| parse_err(line_no, format!("bad antenna index `{}`", cols[0])))?;
        let d = grid.direction(cell);
        let (th, ph) = (num(cols[1])?, num(cols[2])?);
        if antenna != i || (th - d.theta_deg).abs() > 1e-9 || (ph - d.phi_deg).abs() > 1e-9 {
            return Err(parse_err(
                line_no,
                format!(
                    "expected antenna {i} at (theta={}, phi={}), got ({antenna}, {th}, {ph})",
                    d.theta_deg, d.phi_deg
                ),
            ));
        }
        values.push((num(cols[3])?, num(cols[4])?));
    }
    if values.len() != expected {
        return Err(parse_err(
            text.lines().count() + 1,
            format!(
                "file ends after {} rows, header declares {expected}",
                values.len()
            ),
        ));
    }
    Ok(Table {
        grid,
        n,
        extra,
        values,
    })
}

/// Gain map in the field-file layout; `gain_db` is empty outside the RoI
/// and `-inf` where the field vanishes.
pub fn gain_map_to_string(map: &GainMap) -> String {
    let g = &map.grid;
    let mut s = header(GAIN_MAGIC, 1, g, &format!("scheme={}", map.scheme.name()));
    s.push_str("theta_deg,phi_deg,gain_db\n");
    for (d, v) in g.directions().zip(&map.values) {
        match v {
            Some(x) => {
                let _ = writeln!(s, "{},{},{x}", d.theta_deg, d.phi_deg);
            }
            None => {
                let _ = writeln!(s, "{},{},", d.theta_deg, d.phi_deg);
            }
        }
    }
    s
}

pub fn codebook_to_string(cbk: &Codebook) -> String {
    let mut s = String::from("entry,antenna,re,im,tag\n");
    for (k, w) in cbk.entries().enumerate() {
        let tag = w.tag.to_string();
        for (i, z) in w.weights().iter().enumerate() {
            let _ = writeln!(s, "{k},{i},{},{},{tag}", z.re, z.im);
        }
    }
    s
}

pub fn coverage_to_string(rows: &[CoverageRow]) -> String {
    let mut s = String::from("antenna,max_free_gain_dbi,max_blocked_gain_dbi,area_pct\n");
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{}",
            r.antenna, r.max_free_gain_dbi, r.max_blocked_gain_dbi, r.area_pct
        );
    }
    s
}

/// One row per percentile of every named summary.
pub fn cdf_table_to_string<'a>(
    summaries: impl IntoIterator<Item = (&'a str, &'a CdfSummary)>,
) -> String {
    let mut s = String::from("quantity,percentile,value\n");
    for (name, c) in summaries {
        for (p, v) in &c.percentiles {
            let _ = writeln!(s, "{name},{p},{v}");
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codebook::{directional_codebook, gain_map, DirectionalParams, Scheme};
    use crate::distortion::{gen_distortion, DistortionMode, DistortionSpec};
    use crate::field::{synth_freespace_field, ArrayConfig};
    use crate::grid::make_grid;
    use crate::metrics::{cdf_summary, RoiMask};

    fn small_grid() -> SphericalGrid {
        make_grid(15.0, 30.0, (0.0, 180.0), (0.0, 360.0)).unwrap()
    }

    #[test]
    fn field_round_trip_is_exact() {
        let g = small_grid();
        let mut f = synth_freespace_field(&ArrayConfig::default(), &g).unwrap();
        f.label = "free, space".into();
        let back = parse_field(&field_to_string(&f)).unwrap();
        assert_eq!(back, f);

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.csv");
        write_field_file(&f, &p).unwrap();
        assert_eq!(read_field_file(&p).unwrap(), f);
    }

    #[test]
    fn distortion_round_trip_is_exact() {
        let g = small_grid();
        let spec = DistortionSpec {
            mode: DistortionMode::PhaseScreen,
            phase_std_deg: 25.0,
            seed: 4,
            ..DistortionSpec::default()
        };
        let d = gen_distortion(&spec, &ArrayConfig::default(), &g).unwrap();
        assert_eq!(parse_distortion(&distortion_to_string(&d)).unwrap(), d);
    }

    #[test]
    fn truncated_file_names_the_line() {
        let g = small_grid();
        let f = synth_freespace_field(&ArrayConfig::default(), &g).unwrap();
        let text = field_to_string(&f);
        let total = text.lines().count();
        let short: String = text
            .lines()
            .take(total - 3)
            .map(|l| format!("{l}\n"))
            .collect();
        match parse_field(&short) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, total - 2);
                assert!(msg.contains("header declares"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        let mut long = text.clone();
        long.push_str("3,0,0,1,1\n");
        assert!(matches!(parse_field(&long), Err(Error::Parse { line, .. }) if line == total + 1));
    }

    #[test]
    fn nan_sample_is_rejected() {
        let g = small_grid();
        let f = synth_freespace_field(&ArrayConfig::default(), &g).unwrap();
        let mut lines: Vec<String> = field_to_string(&f).lines().map(String::from).collect();
        let cols: Vec<&str> = lines[5].split(',').collect();
        lines[5] = format!("{},{},{},NaN,{}", cols[0], cols[1], cols[2], cols[4]);
        let err = parse_field(&lines.join("\n")).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 6, .. }), "{err}");
    }

    #[test]
    fn malformed_headers() {
        assert!(parse_field("").is_err());
        assert!(
            parse_field("beamshadow-field v2, N=1, theta=0:90:180, phi=0:180:360, label=x\n")
                .is_err()
        );
        assert!(
            parse_field("beamshadow-field v1, N=1, theta=0:7:180, phi=0:180:360, label=x\n")
                .is_err()
        );
        let ok = "beamshadow-field v1, N=1, theta=0:90:180, phi=0:180:360, label=x\n\
                  antenna,theta_deg,phi_deg,re,im\n\
                  0,0,0,1,0\n0,0,180,1,0\n0,90,0,0,1\n0,90,180,0,-1\n";
        assert_eq!(
            parse_field(ok).unwrap().samples()[3],
            Complex64::new(0.0, -1.0)
        );
        let swapped = ok.replace("0,90,0,0,1\n0,90,180,0,-1", "0,90,180,0,-1\n0,90,0,0,1");
        assert!(matches!(
            parse_field(&swapped),
            Err(Error::Parse { line: 5, .. })
        ));
    }

    #[test]
    fn tables_have_headers_and_rows() {
        let cbk = directional_codebook(4, 4, 5, 0.5).unwrap();
        let s = codebook_to_string(&cbk);
        assert_eq!(s.lines().count(), 1 + 16);
        assert!(s.lines().nth(1).unwrap().contains(",directional("), "{s}");

        let g = small_grid();
        let f = synth_freespace_field(&ArrayConfig::default(), &g).unwrap();
        let map = gain_map(
            Scheme::Optimal,
            DirectionalParams::default(),
            &f,
            &RoiMask::all(g),
        )
        .unwrap();
        let s = gain_map_to_string(&map);
        assert!(s.starts_with(
            "beamshadow-gain v1, N=1, theta=0:15:180, phi=0:30:360, scheme=optimal\n"
        ));
        assert_eq!(s.lines().count(), 2 + g.len());

        let c = cdf_summary(&[1.0, 2.0, 3.0], &[10.0, 50.0]).unwrap();
        let s = cdf_table_to_string([("loss", &c)]);
        assert_eq!(s, "quantity,percentile,value\nloss,10,1.2\nloss,50,2\n");
    }
}
