//! Flat-file artifacts. CSV files always carry a header, use `.` as the
//! decimal mark and `\n` line endings; numbers are printed in Rust's
//! shortest round-trip form, so identical results give identical bytes.

use std::io::{self, BufRead, Write};

use serde::Serialize;

use crate::integral::ResidualReport;
use crate::pde::{Boundary, ValueSurface};
use crate::sim::Estimate;

/// `t,x,v` for every `stride`-th time row and every node of that row.
pub fn write_surface_csv<W: Write>(mut w: W, surface: &ValueSurface, stride: usize) -> io::Result<()> {
    writeln!(w, "t,x,v")?;
    let g = &surface.grid;
    let mut rows: Vec<usize> = (0..=g.n_t).step_by(stride.max(1)).collect();
    if *rows.last().unwrap() != g.n_t {
        rows.push(g.n_t);
    }
    for i in rows {
        let t = g.t(i);
        for (j, v) in surface.v[i].iter().enumerate() {
            writeln!(w, "{},{},{}", t, g.x(j), v)?;
        }
    }
    Ok(())
}

pub fn write_boundary_csv<W: Write>(mut w: W, boundary: &Boundary) -> io::Result<()> {
    writeln!(w, "t,h")?;
    for (t, h) in boundary.t_nodes.iter().zip(&boundary.h) {
        writeln!(w, "{t},{h}")?;
    }
    Ok(())
}

/// Reads a `t,h` file as written by [`write_boundary_csv`].
pub fn read_boundary_csv<R: BufRead>(r: R) -> io::Result<Boundary> {
    let bad = |msg: String| io::Error::new(io::ErrorKind::InvalidData, msg);
    let mut lines = r.lines();
    match lines.next() {
        Some(Ok(header)) if header.trim() == "t,h" => {}
        Some(Err(e)) => return Err(e),
        _ => return Err(bad("boundary file must start with the header `t,h`".into())),
    }
    let (mut ts, mut hs) = (Vec::new(), Vec::new());
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let mut next = || -> io::Result<f64> {
            parts
                .next()
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| bad(format!("line {}: expected two numbers, got `{line}`", k + 2)))
        };
        ts.push(next()?);
        hs.push(next()?);
    }
    if ts.len() < 2 {
        return Err(bad("boundary file needs at least two rows".into()));
    }
    if ts.windows(2).any(|w| w[1] <= w[0]) {
        return Err(bad("boundary times must be strictly increasing".into()));
    }
    Ok(Boundary::new(ts, hs))
}

pub fn write_residual_csv<W: Write>(mut w: W, report: &ResidualReport) -> io::Result<()> {
    writeln!(w, "t,residual")?;
    for (t, r) in report.t_nodes.iter().zip(&report.residuals) {
        writeln!(w, "{t},{r}")?;
    }
    Ok(())
}

pub fn write_estimates_csv<W: Write>(mut w: W, rows: &[(&str, Estimate)]) -> io::Result<()> {
    writeln!(w, "rule,mean,stderr,n")?;
    for (rule, e) in rows {
        writeln!(w, "{rule},{},{},{}", e.mean, e.stderr, e.n)?;
    }
    Ok(())
}

/// One row of a parameter sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub value_filtered: f64,
    pub value_naive: f64,
    pub improvement: f64,
}

/// `<axis>,value_filtered,value_naive,improvement`.
pub fn write_sweep_csv<W: Write>(mut w: W, axis: &str, rows: &[SweepRow]) -> io::Result<()> {
    writeln!(w, "{axis},value_filtered,value_naive,improvement")?;
    for r in rows {
        writeln!(w, "{},{},{},{}", r.value, r.value_filtered, r.value_naive, r.improvement)?;
    }
    Ok(())
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<W: Write, T: Serialize + ?Sized>(mut w: W, value: &T) -> io::Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn boundary_round_trip() {
        let b = Boundary::new(vec![0.0, 0.1, 0.30000000000000004], vec![-0.6123456789012345, -1e-17, 0.0]);
        let mut buf = Vec::new();
        write_boundary_csv(&mut buf, &b).unwrap();
        assert!(buf.starts_with(b"t,h\n0,-0.6123456789012345\n"));
        assert_eq!(read_boundary_csv(&buf[..]).unwrap(), b);
    }

    #[test]
    fn boundary_reader_rejects_garbage() {
        assert!(read_boundary_csv(&b"t,x\n0,1\n"[..]).is_err());
        assert!(read_boundary_csv(&b"t,h\n0,abc\n1,0\n"[..]).is_err());
        assert!(read_boundary_csv(&b"t,h\n1,0\n0,0\n"[..]).is_err());
    }

    #[test]
    fn estimates_layout() {
        let mut buf = Vec::new();
        write_estimates_csv(&mut buf, &[("immediate", Estimate { mean: 1.0, stderr: 0.0, n: 10 })]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "rule,mean,stderr,n\nimmediate,1,0,10\n");
    }

    #[test]
    fn sweep_header_names_the_axis() {
        let mut buf = Vec::new();
        let row = SweepRow { value: 0.5, value_filtered: 1.2, value_naive: 1.1, improvement: 0.1 / 1.1 };
        write_sweep_csv(&mut buf, "sigma", &[row]).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("sigma,value_filtered,value_naive,improvement\n0.5,1.2,1.1,"));
    }
}
