//! Run configuration files.
//!
//! Matrices are kept as raw JSON until they are built, so a parsed configuration
//! serializes back to the same document.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::continuation::HomotopyConfig;
use crate::error::{Error, Result};
use crate::io::{matrix_from_json, scalar_from_json};
use crate::linalg::{Field, Mat};
use crate::moment::moment_g_statespace;
use crate::statespace::{FactorParameter, FilterBank, PriorSpectrum, StateSpace};

/// Default quadrature step.
pub const DEFAULT_DTHETA: f64 = 1e-4;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub filter: FilterSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<SigmaSpec>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuation: Option<ContinuationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputSpec>,
}

/// `{"preset": "covext", "m": M, "p": P}` or `{"A": …, "B": …}`, with an optional `field`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<Value>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<Field>,
}

/// Exactly one of `constant`, `b` (polynomial in `z^{-1}`) or `rational` (realization of `σ`).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub b: Option<Vec<Value>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rational: Option<RationalSpec>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RationalSpec {
    #[serde(rename = "A")]
    pub a: Value,
    #[serde(rename = "B")]
    pub b: Value,
    #[serde(rename = "C")]
    pub c: Value,
    #[serde(rename = "D")]
    pub d: Value,
}

/// An explicit matrix, or `{"from": {"prior": …, "C": …}}` meaning `Σ = g(ψ, C)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SigmaSpec {
    From { from: SigmaSource },
    Matrix(Value),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SigmaSource {
    /// Defaults to the top-level prior.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prior: Option<PriorSpec>,
    #[serde(rename = "C")]
    pub c: Value,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuationSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_newton: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuadratureSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dtheta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_n: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
    /// Any of `"csv"` and `"json"`; both when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub formats: Option<Vec<String>>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), e.to_string()))?;
        Self::parse(&text)
    }

    pub fn to_json(&self) -> Result<Value> {
        Ok(serde_json::to_value(self)?)
    }

    pub fn build_filter(&self) -> Result<FilterBank> {
        let spec = &self.filter;
        let field = spec.field.unwrap_or_default();
        let filter = match (&spec.preset, &spec.a, &spec.b) {
            (Some(preset), None, None) => {
                if preset != "covext" {
                    return Err(Error::config("filter.preset", format!("unknown preset `{preset}`")));
                }
                let m = spec.m.ok_or_else(|| Error::config("filter.m", "missing"))?;
                let p = spec.p.ok_or_else(|| Error::config("filter.p", "missing"))?;
                if m == 0 {
                    return Err(Error::config("filter.m", "must be at least 1"));
                }
                FilterBank::covariance_extension(m, p).and_then(|f| f.with_field(field))
            }
            (None, Some(a), Some(b)) => {
                if spec.m.is_some() || spec.p.is_some() {
                    return Err(Error::config("filter", "m and p apply to presets only"));
                }
                let a = matrix_from_json(a, "filter.A")?;
                let b = matrix_from_json(b, "filter.B")?;
                FilterBank::new(a, b, field)
            }
            _ => {
                return Err(Error::config(
                    "filter",
                    "give either a preset with m and p, or both A and B",
                ))
            }
        };
        filter.map_err(|e| Error::config("filter", e.to_string()))
    }

    /// The prior; the unit prior when absent.
    pub fn build_prior(&self) -> Result<PriorSpectrum> {
        match &self.prior {
            None => Ok(PriorSpectrum::unit()),
            Some(spec) => spec.build("prior"),
        }
    }

    /// The factor `C`, as a raw matrix (admissibility is checked by the caller).
    pub fn build_c(&self) -> Result<Option<Mat>> {
        self.c.as_ref().map(|v| matrix_from_json(v, "C")).transpose()
    }

    pub fn build_sigma(&self, filter: &FilterBank) -> Result<Mat> {
        match &self.sigma {
            None => Err(Error::config("sigma", "missing")),
            Some(SigmaSpec::Matrix(v)) => {
                let s = matrix_from_json(v, "sigma")?;
                if s.shape() != (filter.n(), filter.n()) {
                    return Err(Error::config(
                        "sigma",
                        format!("is {}x{}, expected {}x{}", s.nrows(), s.ncols(), filter.n(), filter.n()),
                    ));
                }
                Ok(s)
            }
            Some(SigmaSpec::From { from }) => {
                let prior = match &from.prior {
                    Some(p) => p.build("sigma.from.prior")?,
                    None => self.build_prior()?,
                };
                let c = matrix_from_json(&from.c, "sigma.from.C")?;
                let c = FactorParameter::new(filter, c).map_err(|e| Error::config("sigma.from.C", e.to_string()))?;
                moment_g_statespace(filter, &prior, &c)
            }
        }
    }

    pub fn homotopy(&self) -> HomotopyConfig {
        let mut h = HomotopyConfig::default();
        if let Some(c) = &self.continuation {
            h.dt = c.dt.unwrap_or(h.dt);
            h.newton_tol = c.newton_tol.unwrap_or(h.newton_tol);
            h.max_newton = c.max_newton.unwrap_or(h.max_newton);
            h.min_dt = c.min_dt.unwrap_or(h.min_dt);
            h.grid_n = c.grid_n.unwrap_or(h.grid_n);
        }
        if let Some(n) = self.quadrature.as_ref().and_then(|q| q.grid_n) {
            h.grid_n = n;
        }
        h
    }

    pub fn dtheta(&self) -> f64 {
        self.quadrature.as_ref().and_then(|q| q.dtheta).unwrap_or(DEFAULT_DTHETA)
    }

    pub fn output_dir(&self) -> Option<&str> {
        self.output.as_ref().and_then(|o| o.dir.as_deref())
    }

    pub fn wants_format(&self, format: &str) -> bool {
        match self.output.as_ref().and_then(|o| o.formats.as_ref()) {
            None => true,
            Some(list) => list.iter().any(|f| f == format),
        }
    }
}

impl PriorSpec {
    pub fn build(&self, path: &str) -> Result<PriorSpectrum> {
        let prior = match (&self.constant, &self.b, &self.rational) {
            (Some(v), None, None) => PriorSpectrum::constant(*v),
            (None, Some(b), None) => {
                let coeffs = b
                    .iter()
                    .enumerate()
                    .map(|(k, v)| scalar_from_json(v, &format!("{path}.b[{k}]")))
                    .collect::<Result<Vec<_>>>()?;
                PriorSpectrum::from_polynomial(&coeffs)
            }
            (None, None, Some(r)) => {
                let sys = StateSpace::new(
                    matrix_from_json(&r.a, &format!("{path}.rational.A"))?,
                    matrix_from_json(&r.b, &format!("{path}.rational.B"))?,
                    matrix_from_json(&r.c, &format!("{path}.rational.C"))?,
                    matrix_from_json(&r.d, &format!("{path}.rational.D"))?,
                )
                .map_err(|e| Error::config(format!("{path}.rational"), e.to_string()))?;
                PriorSpectrum::from_realization(sys)
            }
            _ => return Err(Error::config(path, "give exactly one of constant, b, rational")),
        };
        prior.map_err(|e| Error::config(path, e.to_string()))
    }
}
