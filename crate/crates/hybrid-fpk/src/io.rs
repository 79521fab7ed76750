//! Text formats: grid files, CSV, PGM heatmaps, sparse triplets, run.meta.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sparse::Csr;

/// C printf `%.17g`.
pub fn fmt_g17(v: f64) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let e = format!("{v:.16e}");
    let (mant, exp) = e.split_once('e').expect("exponent");
    let x: i32 = exp.parse().expect("exponent digits");
    if !(-4..17).contains(&x) {
        let m = strip_zeros(mant);
        let sign = if x < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", x.abs())
    } else {
        let prec = (16 - x) as usize;
        strip_zeros(&format!("{v:.prec$}")).to_string()
    }
}

fn strip_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Node values on a rectangular grid, omega-major (row j holds all theta).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub theta_min: f64,
    pub theta_max: f64,
    pub n_theta: usize,
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_omega: usize,
    pub values: Vec<f64>,
}

pub const GRID_MAGIC: &str = "# hybrid-fpk grid v1";

impl Grid {
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 24 + 128);
        s.push_str(GRID_MAGIC);
        s.push('\n');
        let _ = writeln!(
            s,
            "# theta_min={} theta_max={} n_theta={}",
            fmt_g17(self.theta_min),
            fmt_g17(self.theta_max),
            self.n_theta
        );
        let _ = writeln!(
            s,
            "# omega_min={} omega_max={} n_omega={}",
            fmt_g17(self.omega_min),
            fmt_g17(self.omega_max),
            self.n_omega
        );
        for row in self.values.chunks(self.n_theta) {
            let line: Vec<String> = row.iter().map(|&v| fmt_g17(v)).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(GRID_MAGIC) {
            return Err(Error::Format("missing grid header".into()));
        }
        let axis = |line: Option<&str>, name: &str| -> Result<(f64, f64, usize)> {
            let line = line.ok_or_else(|| Error::Format(format!("missing {name} header")))?;
            let body = line
                .strip_prefix("# ")
                .ok_or_else(|| Error::Format(format!("malformed {name} header")))?;
            let mut lo = None;
            let mut hi = None;
            let mut n = None;
            for kv in body.split_whitespace() {
                let (k, v) = kv
                    .split_once('=')
                    .ok_or_else(|| Error::Format(format!("malformed {name} header")))?;
                let bad = || Error::Format(format!("bad value in {name} header"));
                if k == format!("{name}_min") {
                    lo = Some(v.parse::<f64>().map_err(|_| bad())?);
                } else if k == format!("{name}_max") {
                    hi = Some(v.parse::<f64>().map_err(|_| bad())?);
                } else if k == format!("n_{name}") {
                    n = Some(v.parse::<usize>().map_err(|_| bad())?);
                } else {
                    return Err(Error::Format(format!("unknown key {k} in {name} header")));
                }
            }
            match (lo, hi, n) {
                (Some(a), Some(b), Some(c)) => Ok((a, b, c)),
                _ => Err(Error::Format(format!("incomplete {name} header"))),
            }
        };
        let (t0, t1, nt) = axis(lines.next(), "theta")?;
        let (o0, o1, no) = axis(lines.next(), "omega")?;
        let mut values = Vec::with_capacity(nt * no);
        let mut rows = 0;
        for line in lines {
            if line.is_empty() {
                continue;
            }
            let before = values.len();
            for tok in line.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|_| Error::Format(format!("bad number '{tok}'")))?,
                );
            }
            if values.len() - before != nt {
                return Err(Error::Format(format!("row {rows} has wrong length")));
            }
            rows += 1;
        }
        if rows != no {
            return Err(Error::Format(format!("expected {no} rows, found {rows}")));
        }
        Ok(Self {
            theta_min: t0,
            theta_max: t1,
            n_theta: nt,
            omega_min: o0,
            omega_max: o1,
            n_omega: no,
            values,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    /// ASCII graymap, top row = largest omega, linear in [0, max].
    pub fn to_pgm(&self) -> String {
        let max = self.values.iter().cloned().fold(0.0f64, f64::max);
        let mut s = format!("P2\n{} {}\n255\n", self.n_theta, self.n_omega);
        for row in self.values.chunks(self.n_theta).rev() {
            let px: Vec<String> = row
                .iter()
                .map(|&v| {
                    let q = if max > 0.0 { (v.max(0.0) / max * 255.0).round() } else { 0.0 };
                    (q as u32).to_string()
                })
                .collect();
            s.push_str(&px.join(" "));
            s.push('\n');
        }
        s
    }
}

/// Row-major matrix to PGM (first row on top), linear in [0, max].
pub fn matrix_pgm(rows: &[Vec<f64>]) -> String {
    let w = rows.first().map_or(0, |r| r.len());
    let max = rows.iter().flatten().cloned().fold(0.0f64, f64::max);
    let mut s = format!("P2\n{} {}\n255\n", w, rows.len());
    for r in rows {
        let px: Vec<String> = r
            .iter()
            .map(|&v| {
                let q = if max > 0.0 { (v.max(0.0) / max * 255.0).round() } else { 0.0 };
                (q as u32).to_string()
            })
            .collect();
        s.push_str(&px.join(" "));
        s.push('\n');
    }
    s
}

pub fn csv_text(header: &[&str], cols: &[&[f64]]) -> Result<String> {
    if header.len() != cols.len() {
        return Err(Error::Format("header and column counts differ".into()));
    }
    let n = cols.first().map_or(0, |c| c.len());
    if cols.iter().any(|c| c.len() != n) {
        return Err(Error::Format("columns have different lengths".into()));
    }
    let mut s = header.join(",");
    s.push('\n');
    for i in 0..n {
        let row: Vec<String> = cols.iter().map(|c| fmt_g17(c[i])).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    Ok(s)
}

pub fn write_csv(path: &Path, header: &[&str], cols: &[&[f64]]) -> Result<()> {
    fs::write(path, csv_text(header, cols)?)?;
    Ok(())
}

/// Rows given directly (each row already includes every column).
pub fn write_csv_rows(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::Format("row length differs from header".into()));
        }
        let cells: Vec<String> = r.iter().map(|&v| fmt_g17(v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

/// `# sparse rows cols nnz` then zero-based `row col value` lines.
pub fn sparse_text(m: &Csr) -> String {
    let mut s = format!("# sparse {} {} {}\n", m.n_rows, m.n_cols, m.nnz());
    for (r, c, v) in m.triplets() {
        let _ = writeln!(s, "{r} {c} {}", fmt_g17(v));
    }
    s
}

pub fn parse_sparse(text: &str) -> Result<Csr> {
    let mut lines = text.lines();
    let head = lines.next().ok_or_else(|| Error::Format("empty sparse file".into()))?;
    let dims: Vec<usize> = head
        .strip_prefix("# sparse ")
        .ok_or_else(|| Error::Format("missing sparse header".into()))?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| Error::Format("bad sparse header".into())))
        .collect::<Result<_>>()?;
    if dims.len() != 3 {
        return Err(Error::Format("bad sparse header".into()));
    }
    let mut t = Vec::with_capacity(dims[2]);
    for line in lines.filter(|l| !l.is_empty()) {
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(Error::Format("bad sparse entry".into()));
        }
        let bad = || Error::Format("bad sparse entry".into());
        t.push((
            f[0].parse().map_err(|_| bad())?,
            f[1].parse().map_err(|_| bad())?,
            f[2].parse::<f64>().map_err(|_| bad())?,
        ));
    }
    if t.len() != dims[2] {
        return Err(Error::Format("entry count differs from header".into()));
    }
    Ok(Csr::from_triplets(dims[0], dims[1], t))
}

/// key=value provenance file.
pub fn write_meta(path: &Path, entries: &[(String, String)]) -> Result<()> {
    let mut s = String::new();
    for (k, v) in entries {
        let _ = writeln!(s, "{k}={v}");
    }
    fs::write(path, s)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g17_matches_printf() {
        assert_eq!(fmt_g17(0.1), "0.10000000000000001");
        assert_eq!(fmt_g17(1.0), "1");
        assert_eq!(fmt_g17(-2.5), "-2.5");
        assert_eq!(fmt_g17(1e-5), "1.0000000000000001e-05");
        assert_eq!(fmt_g17(1e20), "1e+20");
        assert_eq!(fmt_g17(123456.0), "123456");
        assert_eq!(fmt_g17(0.0001), "0.0001");
        assert_eq!(fmt_g17(1e16), "10000000000000000");
        assert_eq!(fmt_g17(1e17), "1e+17");
    }

    #[test]
    fn grid_header_errors() {
        assert!(Grid::parse("nope\n").is_err());
        let g = Grid {
            theta_min: -1.0,
            theta_max: 1.0,
            n_theta: 2,
            omega_min: 0.0,
            omega_max: 1.0,
            n_omega: 1,
            values: vec![1.0, 2.0],
        };
        let t = g.to_text();
        assert_eq!(Grid::parse(&t).unwrap(), g);
        assert!(Grid::parse(&t.replace("n_omega=1", "n_omega=2")).is_err());
        assert!(g.to_pgm().starts_with("P2\n2 1\n255\n"));
    }
}
