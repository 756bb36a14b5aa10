//! ESRI ASCII grids.
//!
//! Values are written with C `%.6g` formatting, so a grid re-parsed from disk
//! equals the in-memory grid rounded to six significant digits.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_NODATA: f64 = -9999.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AsciiGrid {
    pub ncols: usize,
    pub nrows: usize,
    /// Lower-left corner of the lower-left cell.
    pub xll: f64,
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: f64,
    /// Row-major, first row is the northernmost.
    pub values: Vec<f64>,
}

/// Formats like C's `%.6g`.
pub fn fmt_g6(v: f64) -> String {
    fmt_g(v, 6)
}

pub fn fmt_g(v: f64, precision: usize) -> String {
    if v.is_nan() {
        return "nan".into();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    let p = precision.max(1);
    // exponent after rounding to p significant digits
    let sci = format!("{:.*e}", p - 1, v);
    let (mantissa, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if exp < -4 || exp >= p as i32 {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

impl AsciiGrid {
    pub fn new(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64) -> Self {
        Self {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata: DEFAULT_NODATA,
            values: vec![DEFAULT_NODATA; ncols * nrows],
        }
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    pub fn set(&mut self, col: usize, row: usize, v: f64) {
        self.values[row * self.ncols + col] = v;
    }

    pub fn is_nodata(&self, v: f64) -> bool {
        !v.is_finite() || v == self.nodata
    }

    /// Center of cell (col, row) in projected coordinates.
    pub fn cell_center(&self, col: usize, row: usize) -> (f64, f64) {
        let x = self.xll + (col as f64 + 0.5) * self.cellsize;
        let y = self.yll + (self.nrows as f64 - row as f64 - 0.5) * self.cellsize;
        (x, y)
    }

    /// Cell containing (x, y), if inside the grid.
    pub fn cell_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let c = ((x - self.xll) / self.cellsize).floor();
        let r_from_bottom = ((y - self.yll) / self.cellsize).floor();
        if c < 0.0 || r_from_bottom < 0.0 || c >= self.ncols as f64 || r_from_bottom >= self.nrows as f64 {
            return None;
        }
        Some((c as usize, self.nrows - 1 - r_from_bottom as usize))
    }

    pub fn sample(&self, x: f64, y: f64) -> Option<f64> {
        let (c, r) = self.cell_of(x, y)?;
        let v = self.get(c, r);
        (!self.is_nodata(v)).then_some(v)
    }

    pub fn to_ascii(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "ncols        {}", self.ncols);
        let _ = writeln!(s, "nrows        {}", self.nrows);
        let _ = writeln!(s, "xllcorner    {}", fmt_g(self.xll, 12));
        let _ = writeln!(s, "yllcorner    {}", fmt_g(self.yll, 12));
        let _ = writeln!(s, "cellsize     {}", fmt_g(self.cellsize, 12));
        let _ = writeln!(s, "NODATA_value {}", fmt_g6(self.nodata));
        for r in 0..self.nrows {
            let row: Vec<String> = (0..self.ncols)
                .map(|c| {
                    let v = self.get(c, r);
                    if self.is_nodata(v) {
                        fmt_g6(self.nodata)
                    } else {
                        fmt_g6(v)
                    }
                })
                .collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut tokens = text.split_whitespace().peekable();
        let mut header = std::collections::HashMap::new();
        while let Some(tok) = tokens.peek() {
            if tok.chars().next().is_some_and(|c| c.is_ascii_alphabetic()) {
                let key = tokens.next().unwrap().to_ascii_lowercase();
                let val: f64 = tokens
                    .next()
                    .ok_or_else(|| Error::Parse(format!("missing value for `{key}`")))?
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad value for `{key}`")))?;
                header.insert(key, val);
            } else {
                break;
            }
        }
        let get = |k: &str| header.get(k).copied();
        let ncols = get("ncols").ok_or_else(|| Error::Parse("missing ncols".into()))? as usize;
        let nrows = get("nrows").ok_or_else(|| Error::Parse("missing nrows".into()))? as usize;
        let cellsize = get("cellsize").ok_or_else(|| Error::Parse("missing cellsize".into()))?;
        let (xll, yll) = match (get("xllcorner"), get("yllcorner"), get("xllcenter"), get("yllcenter")) {
            (Some(x), Some(y), _, _) => (x, y),
            (_, _, Some(x), Some(y)) => (x - 0.5 * cellsize, y - 0.5 * cellsize),
            _ => return Err(Error::Parse("missing xllcorner/yllcorner".into())),
        };
        let nodata = get("nodata_value").unwrap_or(DEFAULT_NODATA);
        let values = tokens
            .map(|t| t.parse::<f64>().map_err(|_| Error::Parse(format!("bad raster value `{t}`"))))
            .collect::<Result<Vec<_>>>()?;
        if values.len() != ncols * nrows {
            return Err(Error::Parse(format!(
                "raster has {} values, header declares {}x{}",
                values.len(),
                ncols,
                nrows
            )));
        }
        Ok(Self {
            ncols,
            nrows,
            xll,
            yll,
            cellsize,
            nodata,
            values,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_ascii())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g6_matches_printf() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (12.5, "12.5"),
            (3.14159265, "3.14159"),
            (123456.7, "123457"),
            (1234567.0, "1.23457e+06"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-42.000001, "-42"),
            (999999.5, "1e+06"),
            (-9999.0, "-9999"),
        ];
        for (v, s) in cases {
            assert_eq!(fmt_g6(v), s, "value {v}");
        }
    }

    #[test]
    fn cell_geometry() {
        let g = AsciiGrid::new(3, 2, 100.0, 200.0, 10.0);
        assert_eq!(g.cell_center(0, 0), (105.0, 215.0));
        assert_eq!(g.cell_of(105.0, 215.0), Some((0, 0)));
        assert_eq!(g.cell_of(129.0, 201.0), Some((2, 1)));
        assert_eq!(g.cell_of(99.0, 201.0), None);
    }

    #[test]
    fn text_round_trip() {
        let mut g = AsciiGrid::new(2, 2, 0.0, 0.0, 100.0);
        g.values = vec![1.0, 2.5, DEFAULT_NODATA, 3.0];
        let back = AsciiGrid::parse(&g.to_ascii()).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.sample(50.0, 150.0), Some(1.0));
        assert_eq!(back.sample(50.0, 50.0), None);
    }
}
