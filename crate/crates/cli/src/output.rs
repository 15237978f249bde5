//! CSV and JSON artifacts, written atomically.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;
use tempfile::NamedTempFile;

use matstruct_core::{MapRow, Solution};

use crate::error::{CliError, CliResult};

/// Write to a temporary file beside `path`, then rename over it.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| CliError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    tmp.persist(path).map_err(|e| CliError::io(path, e.error))?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    atomic_write(path, text.as_bytes())
}

#[inline]
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// t, m, N, P for every node at t ≥ 0.
pub fn field_csv(solution: &Solution) -> String {
    let n = &solution.n;
    let p = &solution.p;
    let first = (-n.t0() / n.dt()).round() as usize;
    let mut out = String::from("t,m,N,P\n");
    for r in 0..p.rows() {
        let t = p.time(r);
        for (j, &m) in p.maturities().iter().enumerate() {
            let _ = writeln!(
                out,
                "{},{},{},{}",
                num(t),
                num(m),
                num(n.value(first + r, j)),
                num(p.value(r, j))
            );
        }
    }
    out
}

pub fn maps_csv(rows: &[MapRow]) -> String {
    let mut out = String::from("m,theta,delta,g_inverse,g_inverse_derivative,pi,zeta\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            num(r.m),
            num(r.theta),
            num(r.delta),
            num(r.g_inverse),
            num(r.g_inverse_derivative),
            num(r.pi),
            num(r.zeta)
        );
    }
    out
}
