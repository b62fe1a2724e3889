//! JSON encoding of matrices and serialization of solution paths.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Value};

use crate::continuation::SolutionPath;
use crate::error::{Error, Result};
use crate::linalg::{c64, Field, Mat};

/// Row-major nested arrays; real-field matrices as plain numbers, complex ones as `[re, im]` pairs.
pub fn matrix_to_json(m: &Mat, field: Field) -> Value {
    let rows: Vec<Value> = (0..m.nrows())
        .map(|i| {
            Value::Array(
                (0..m.ncols())
                    .map(|j| {
                        let x = m[(i, j)];
                        match field {
                            Field::Real => json!(x.re),
                            Field::Complex => json!([x.re, x.im]),
                        }
                    })
                    .collect(),
            )
        })
        .collect();
    Value::Array(rows)
}

/// Parses a row-major matrix whose entries are numbers or `[re, im]` pairs.
///
/// `path` names the value in error messages.
pub fn matrix_from_json(v: &Value, path: &str) -> Result<Mat> {
    let rows = v
        .as_array()
        .ok_or_else(|| Error::config(path, "expected an array of rows"))?;
    if rows.is_empty() {
        return Err(Error::config(path, "matrix has no rows"));
    }
    let mut data = Vec::new();
    let mut cols = None;
    for (i, row) in rows.iter().enumerate() {
        let row_path = format!("{path}[{i}]");
        let entries = row
            .as_array()
            .ok_or_else(|| Error::config(&row_path, "expected an array of entries"))?;
        match cols {
            None => cols = Some(entries.len()),
            Some(c) if c != entries.len() => {
                return Err(Error::config(&row_path, format!("row has {} entries, expected {c}", entries.len())))
            }
            _ => {}
        }
        for (j, e) in entries.iter().enumerate() {
            data.push(scalar_from_json(e, &format!("{row_path}[{j}]"))?);
        }
    }
    let cols = cols.unwrap_or(0);
    if cols == 0 {
        return Err(Error::config(path, "matrix has no columns"));
    }
    Ok(Mat::from_row_slice(rows.len(), cols, &data))
}

/// A number or an `[re, im]` pair.
pub fn scalar_from_json(v: &Value, path: &str) -> Result<num_complex::Complex64> {
    if let Some(x) = v.as_f64() {
        return Ok(c64(x, 0.0));
    }
    if let Some([re, im]) = v.as_array().map(Vec::as_slice) {
        if let (Some(re), Some(im)) = (re.as_f64(), im.as_f64()) {
            return Ok(c64(re, im));
        }
    }
    Err(Error::config(path, "expected a number or a [re, im] pair"))
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Path CSV with header `t,y_1..y_M,residual,newton_iters,gram_cond`, 17 significant digits.
pub fn path_csv(path: &SolutionPath) -> String {
    let dim = path.samples.first().map_or(0, |s| s.coords.len());
    let mut out = String::from("t");
    for k in 1..=dim {
        let _ = write!(out, ",y_{k}");
    }
    out.push_str(",residual,newton_iters,gram_cond\n");
    for s in &path.samples {
        out.push_str(&num(s.t));
        for y in &s.coords {
            out.push(',');
            out.push_str(&num(*y));
        }
        let _ = writeln!(out, ",{},{},{}", num(s.residual), s.newton_iters, num(s.gram_cond));
    }
    out
}

/// Sidecar JSON with `C` for every sample and the run settings.
pub fn path_json(path: &SolutionPath, field: Field) -> Value {
    let samples: Vec<Value> = path
        .samples
        .iter()
        .map(|s| {
            json!({
                "t": s.t,
                "C": matrix_to_json(&s.c, field),
                "residual": s.residual,
                "newton_iters": s.newton_iters,
                "gram_cond": s.gram_cond,
                "velocity": s.velocity,
            })
        })
        .collect();
    json!({
        "config": path.config,
        "sigma_coords": path.sigma_coords,
        "samples": samples,
    })
}

pub fn write_json(file: &Path, value: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(file, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::statespace::real_matrix;

    #[test]
    fn matrix_json_round_trip() {
        let m = real_matrix(2, 3, &[1.0, -2.5, 0.0, 3.0, 4.0, 1e-17]);
        let v = matrix_to_json(&m, Field::Real);
        assert_eq!(v, json!([[1.0, -2.5, 0.0], [3.0, 4.0, 1e-17]]));
        assert_eq!(matrix_from_json(&v, "m").unwrap(), m);

        let mut z = m.clone();
        z[(0, 1)] = c64(0.5, -1.0);
        let v = matrix_to_json(&z, Field::Complex);
        assert_eq!(v[0][1], json!([0.5, -1.0]));
        assert_eq!(matrix_from_json(&v, "z").unwrap(), z);
    }

    #[test]
    fn malformed_matrices_name_the_path() {
        let err = matrix_from_json(&json!([[1.0, 2.0], [3.0]]), "sigma").unwrap_err();
        assert!(err.to_string().contains("sigma[1]"));
        let err = matrix_from_json(&json!([[1.0, "x"]]), "C").unwrap_err();
        assert!(err.to_string().contains("C[0][1]"));
        assert!(matrix_from_json(&json!(3.0), "A").is_err());
    }

    #[test]
    fn csv_uses_seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(1.0 / 3.0).len(), "3.3333333333333331e-1".len());
    }
}
