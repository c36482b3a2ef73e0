//! Plain-text matrices and time series.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a write
//! followed by a read reproduces every value bit for bit.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::analysis::LineProfile;
use crate::error::{Error, Result};
use crate::fieldsolver::SensitivityMap;
use crate::geometry::{Material, PermittivityGrid};
use crate::image::{Channel, GridMeta, ScanImage};
use crate::lockin::TimeSeries;

pub fn format_image(img: &ScanImage) -> String {
    let mut out = String::new();
    let m = img.meta;
    let _ = writeln!(out, "# channel={}", img.channel);
    let _ = writeln!(
        out,
        "# nx={},ny={},dx={},dy={},x0={},y0={},units={},length_units={}",
        img.nx,
        img.ny,
        m.dx,
        m.dy,
        m.x0,
        m.y0,
        img.units(),
        img.length_units
    );
    for j in 0..img.ny {
        let row: Vec<String> = img.row(j).iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn write_image(img: &ScanImage, path: &Path) -> Result<()> {
    fs::write(path, format_image(img))?;
    Ok(())
}

fn parse_header_num<T: std::str::FromStr>(key: &str, value: &str, row: usize) -> Result<T> {
    value.parse().map_err(|_| Error::Parse {
        row,
        col: 0,
        msg: format!("header `{key}` has non-numeric value `{value}`"),
    })
}

/// Parses the CSV image format. Without a channel header the image is taken
/// as `expect` (or R); without grid headers `dx = dy = 1`, origin 0 and
/// arbitrary length units are assumed. Each assumption adds a warning.
pub fn parse_image(text: &str, expect: Option<Channel>) -> Result<(ScanImage, Vec<String>)> {
    let mut warnings = Vec::new();
    let mut channel: Option<Channel> = None;
    let mut meta = GridMeta::default();
    let mut have_grid = false;
    let mut dims: (Option<usize>, Option<usize>) = (None, None);
    let mut length_units: Option<String> = None;
    let mut rows: Vec<Vec<f64>> = Vec::new();

    for (ln, line) in text.lines().enumerate() {
        let row = ln + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            for item in h.split(',') {
                let Some((k, v)) = item.split_once('=') else {
                    continue;
                };
                let (k, v) = (k.trim(), v.trim());
                match k {
                    "channel" => {
                        channel = Some(v.parse().map_err(|_| Error::Parse {
                            row,
                            col: 0,
                            msg: format!("unknown channel `{v}`"),
                        })?)
                    }
                    "nx" => dims.0 = Some(parse_header_num(k, v, row)?),
                    "ny" => dims.1 = Some(parse_header_num(k, v, row)?),
                    "dx" => {
                        meta.dx = parse_header_num(k, v, row)?;
                        have_grid = true;
                    }
                    "dy" => {
                        meta.dy = parse_header_num(k, v, row)?;
                        have_grid = true;
                    }
                    "x0" => meta.x0 = parse_header_num(k, v, row)?,
                    "y0" => meta.y0 = parse_header_num(k, v, row)?,
                    "length_units" => length_units = Some(v.to_string()),
                    "units" => {}
                    other => warnings.push(format!("ignoring unknown header key `{other}`")),
                }
            }
            continue;
        }
        let values = line
            .split(',')
            .enumerate()
            .map(|(c, cell)| {
                let cell = cell.trim();
                cell.parse::<f64>().map_err(|_| Error::Parse {
                    row,
                    col: c + 1,
                    msg: format!("non-numeric cell `{cell}`"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if values.len() != first.len() {
                return Err(Error::Parse {
                    row,
                    col: values.len().min(first.len()) + 1,
                    msg: format!("expected {} values, found {}", first.len(), values.len()),
                });
            }
        }
        rows.push(values);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 0,
            col: 0,
            msg: "no data rows".into(),
        });
    }
    let (ny, nx) = (rows.len(), rows[0].len());
    if let (Some(hx), Some(hy)) = dims {
        if (hx, hy) != (nx, ny) {
            return Err(Error::Parse {
                row: 0,
                col: 0,
                msg: format!("header declares {hy}x{hx} but data is {ny}x{nx}"),
            });
        }
    }
    if !(meta.dx > 0.0 && meta.dy > 0.0) {
        return Err(Error::Parse {
            row: 0,
            col: 0,
            msg: "dx and dy must be > 0".into(),
        });
    }
    let channel = match (channel, expect) {
        (Some(c), Some(e)) if c != e => {
            warnings.push(format!("header channel {c} read as {e}"));
            e
        }
        (Some(c), _) => c,
        (None, Some(e)) => e,
        (None, None) => {
            warnings.push("no channel header; assuming R".into());
            Channel::R
        }
    };
    if !have_grid {
        warnings.push("no dx/dy header; assuming dx = dy = 1 in arbitrary units".into());
    }
    let mut img = ScanImage::new(channel, nx, ny, rows.concat(), meta)?;
    img.length_units = length_units.unwrap_or_else(|| if have_grid { "m".into() } else { "arb".into() });
    Ok((img, warnings))
}

pub fn read_image(path: &Path, expect: Option<Channel>) -> Result<(ScanImage, Vec<String>)> {
    let text = fs::read_to_string(path)?;
    let (img, warnings) = parse_image(&text, expect)?;
    let warnings = warnings
        .into_iter()
        .map(|w| format!("{}: {w}", path.display()))
        .collect();
    Ok((img, warnings))
}

pub fn format_timeseries(ts: &TimeSeries) -> String {
    let mut out = format!("# fs={},t0={}\nt,v\n", ts.fs, ts.t0);
    for (n, v) in ts.samples.iter().enumerate() {
        let _ = writeln!(out, "{},{}", ts.time(n), v);
    }
    out
}

pub fn write_timeseries(ts: &TimeSeries, path: &Path) -> Result<()> {
    fs::write(path, format_timeseries(ts))?;
    Ok(())
}

/// Reads a two-column `t,v` file. The sample rate comes from an `# fs=`
/// header when present, otherwise from the mean spacing of `t`.
pub fn parse_timeseries(text: &str) -> Result<TimeSeries> {
    let mut fs_header: Option<f64> = None;
    let mut t0_header: Option<f64> = None;
    let mut t = Vec::new();
    let mut v = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let row = ln + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(h) = line.strip_prefix('#') {
            for item in h.split(',') {
                if let Some((k, val)) = item.split_once('=') {
                    match k.trim() {
                        "fs" => fs_header = Some(parse_header_num("fs", val.trim(), row)?),
                        "t0" => t0_header = Some(parse_header_num("t0", val.trim(), row)?),
                        _ => {}
                    }
                }
            }
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if t.is_empty() && v.is_empty() && cells.first().is_some_and(|c| c.parse::<f64>().is_err()) {
            // Column header line.
            continue;
        }
        if cells.len() != 2 {
            return Err(Error::Parse {
                row,
                col: cells.len().min(2) + 1,
                msg: format!("expected 2 columns, found {}", cells.len()),
            });
        }
        for (c, (cell, dst)) in cells.iter().zip([&mut t, &mut v]).enumerate() {
            dst.push(cell.parse::<f64>().map_err(|_| Error::Parse {
                row,
                col: c + 1,
                msg: format!("non-numeric cell `{cell}`"),
            })?);
        }
    }
    let fs = match fs_header {
        Some(fs) => fs,
        None => {
            if t.len() < 2 {
                return Err(Error::Parse {
                    row: 0,
                    col: 0,
                    msg: "need an fs header or at least two samples".into(),
                });
            }
            (t.len() - 1) as f64 / (t[t.len() - 1] - t[0])
        }
    };
    if !(fs > 0.0) || !fs.is_finite() {
        return Err(Error::Parse {
            row: 0,
            col: 0,
            msg: format!("sample rate {fs} is not positive"),
        });
    }
    Ok(TimeSeries {
        fs,
        samples: v,
        t0: t0_header.or(t.first().copied()).unwrap_or(0.0),
    })
}

pub fn read_timeseries(path: &Path) -> Result<TimeSeries> {
    parse_timeseries(&fs::read_to_string(path)?)
}

pub fn format_profile(p: &LineProfile) -> String {
    let mut out = format!("# channel={}\nposition,value\n", p.channel);
    for (x, v) in p.positions.iter().zip(&p.values) {
        let _ = writeln!(out, "{x},{v}");
    }
    out
}

/// Perturbed voxels of a sensitivity map with their positions in sample
/// coordinates.
pub fn format_sensitivity(map: &SensitivityMap, grid: &PermittivityGrid) -> String {
    let mut out = format!(
        "# channel=SENSITIVITY,delta_eps={},nx={},ny={},nz={},h={},q_re={},q_im={}\ni,j,k,x,y,z,material,value\n",
        map.delta_eps, map.nx, map.ny, map.nz, grid.h, map.base_charge.q.re, map.base_charge.q.im
    );
    for idx in 0..map.values.len() {
        if !map.perturbed[idx] {
            continue;
        }
        let (i, j, k) = grid.coords(idx);
        let p = grid.node_center(i, j, k);
        let m = match grid.material[idx] {
            Material::Air => "air".to_string(),
            Material::Sample => "sample".to_string(),
            Material::Defect(d) => format!("defect{d}"),
        };
        let _ = writeln!(out, "{i},{j},{k},{},{},{},{m},{}", p[0], p[1], p[2], map.values[idx]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn image_round_trip_is_exact() {
        let vals = vec![0.1, -2.5e-300, f64::MAX, 1.0 / 3.0, std::f64::consts::PI, -0.0];
        let img = ScanImage::new(Channel::Phi, 3, 2, vals, GridMeta {
            x0: 0.01,
            y0: -0.02,
            dx: 0.002,
            dy: 1.0 / 3.0,
        })
        .unwrap();
        let text = format_image(&img);
        assert!(text.starts_with("# channel=PHI\n# nx=3,ny=2,"));
        let (back, warnings) = parse_image(&text, None).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert_eq!(back, img);
        for (a, b) in back.values.iter().zip(&img.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn missing_header_uses_defaults() {
        let (img, warnings) = parse_image("1,2\n3,4\n", None).unwrap();
        assert_eq!(img.meta, GridMeta::default());
        assert_eq!(img.length_units, "arb");
        assert_eq!(warnings.len(), 2);
        assert!(warnings.iter().any(|w| w.contains("dx = dy = 1")));
    }

    #[test]
    fn bad_cells_report_position() {
        match parse_image("# channel=R\n1,2\n3,x\n", None).unwrap_err() {
            Error::Parse { row, col, .. } => assert_eq!((row, col), (3, 2)),
            other => panic!("{other:?}"),
        }
        match parse_image("1,2\n3\n", None).unwrap_err() {
            Error::Parse { row, .. } => assert_eq!(row, 2),
            other => panic!("{other:?}"),
        }
        assert!(parse_image("# nx=3,ny=1\n1,2\n", None).is_err());
    }

    #[test]
    fn timeseries_round_trip() {
        let ts = TimeSeries {
            fs: 1.5e6,
            samples: vec![0.25, -1.0 / 7.0, 3.0],
            t0: 0.0,
        };
        let back = parse_timeseries(&format_timeseries(&ts)).unwrap();
        assert_eq!(back, ts);
        let bare = parse_timeseries("t,v\n0,1\n0.5,2\n1,3\n").unwrap();
        assert_eq!(bare.fs, 2.0);
        assert_eq!(bare.samples, vec![1.0, 2.0, 3.0]);
        assert!(parse_timeseries("t,v\n0,1,2\n").is_err());
    }

    proptest! {
        #[test]
        fn any_finite_matrix_round_trips(vals in prop::collection::vec(prop::num::f64::NORMAL | prop::num::f64::SUBNORMAL | prop::num::f64::ZERO, 1..60), nx in 1usize..6) {
            let ny = vals.len() / nx;
            prop_assume!(ny >= 1);
            let img = ScanImage::new(Channel::Delta, nx, ny, vals[..nx * ny].to_vec(), GridMeta::default()).unwrap();
            let (back, _) = parse_image(&format_image(&img), None).unwrap();
            prop_assert_eq!(back.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), img.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        }
    }
}
