use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use super::{PrecoderSolution, ProblemSpec};
use crate::error::{Error, Result};
use crate::kv::KvFile;
use crate::util::join_floats;

/// Reads a problem file:
///
/// ```text
/// delta: 0.5
/// noise_term: 2e-14
/// r_th: 1.0
/// h:
/// 1e-6, 2e-6, ...
/// 3e-7, 1e-6, ...
/// ```
///
/// `h` has one line per user and one column per AP.
pub fn read_problem(path: &Path) -> Result<ProblemSpec> {
    let kv = KvFile::read(path)?;
    let rows = kv.float_block("h")?;
    let m = rows.first().map(Vec::len).unwrap_or(0);
    if rows.is_empty() || m == 0 {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: "channel block `h` is empty".into(),
        });
    }
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != m) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("channel row {} has {} values, expected {m}", i + 1, r.len()),
        });
    }
    let spec = ProblemSpec {
        h: DMatrix::from_row_iterator(rows.len(), m, rows.into_iter().flatten()),
        delta: kv.get("delta")?,
        noise_term: kv.get("noise_term")?,
        r_th: kv.get("r_th")?,
    };
    spec.validate()?;
    Ok(spec)
}

/// Writes `solution.txt` and `trace.csv` into `dir`. Returns both paths.
pub fn write_solution(sol: &PrecoderSolution, method: &str, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut s = String::new();
    let _ = writeln!(s, "method: {method}");
    let admitted: Vec<String> = sol.admitted.iter().map(|k| k.to_string()).collect();
    let _ = writeln!(s, "admitted: {}", admitted.join(", "));
    let _ = writeln!(s, "gains_a: {}", join_floats(&sol.gains));
    let _ = writeln!(s, "rates_nats: {}", join_floats(&sol.rates));
    let _ = writeln!(s, "objective_nats: {:?}", sol.objective);
    let _ = writeln!(s, "iterations: {}", sol.trace.len().saturating_sub(1));
    let _ = writeln!(s, "solve_time_s: {:?}", sol.solve_time);
    let _ = writeln!(s, "precoder:");
    for row in sol.precoder.row_iter() {
        let v: Vec<f64> = row.iter().copied().collect();
        let _ = writeln!(s, "{}", join_floats(&v));
    }
    let sol_path = dir.join("solution.txt");
    fs::write(&sol_path, s).map_err(|e| Error::io(&sol_path, e))?;

    let mut t = String::from("iteration,objective_nats\n");
    for (i, f) in sol.trace.iter().enumerate() {
        let _ = writeln!(t, "{i},{f:?}");
    }
    let trace_path = dir.join("trace.csv");
    fs::write(&trace_path, t).map_err(|e| Error::io(&trace_path, e))?;
    Ok((sol_path, trace_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::{solve_with_admission, CcpOptions, SolverKind};

    #[test]
    fn problem_round_trip_and_solution_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("problem.txt");
        fs::write(&p, "delta: 0.5\nnoise_term: 2e-14\nr_th: 0.5\nh:\n1e-6, 2e-7, 3e-7\n2e-7, 9e-7, 1e-7\n").unwrap();
        let spec = read_problem(&p).unwrap();
        assert_eq!(spec.h.shape(), (2, 3));
        assert_eq!(spec.h[(1, 1)], 9e-7);
        let sol = solve_with_admission(&spec, SolverKind::Ccp, &CcpOptions::default()).unwrap();
        let (s, t) = write_solution(&sol, "ccp", &dir.path().join("out")).unwrap();
        let kv = KvFile::read(&s).unwrap();
        assert_eq!(kv.float_block("precoder").unwrap().len(), 3);
        assert!(fs::read_to_string(t).unwrap().starts_with("iteration,objective_nats\n0,"));
    }

    #[test]
    fn ragged_rows_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("problem.txt");
        fs::write(&p, "delta: 0.5\nnoise_term: 2e-14\nr_th: 0.5\nh:\n1, 2, 3\n4, 5\n").unwrap();
        let err = read_problem(&p).unwrap_err().to_string();
        assert!(err.contains("row 2"), "{err}");
    }
}
