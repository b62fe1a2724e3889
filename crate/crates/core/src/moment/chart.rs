//! Orthonormal coordinates on `Range Gamma` and on the factor space.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{c64, frob, gram_schmidt, inner, Field, Mat};
use crate::matrixeq::solve_dlyap;
use crate::statespace::FilterBank;

/// Relative norm below which a Gram–Schmidt candidate counts as dependent.
pub const RANK_TOL: f64 = 1e-9;

/// A Hermitian matrix together with its coordinates in a [`RangeBasis`].
#[derive(Clone, Debug)]
pub struct MomentValue {
    pub matrix: Mat,
    pub coords: DVector<f64>,
}

/// Orthonormal basis of `Range Gamma`, the Hermitian matrices reachable as `∫ G Φ G*`.
///
/// Built from the Stein images `X - A X A* = B H + H* B*` over a basis of `H`.
#[derive(Clone, Debug)]
pub struct RangeBasis {
    field: Field,
    elements: Vec<Mat>,
}

impl RangeBasis {
    pub fn new(filter: &FilterBank) -> Result<Self> {
        let field = filter.field();
        let (a, b) = (filter.a(), filter.b());
        let mut images = Vec::new();
        for h in field.standard_basis(filter.m(), filter.n()) {
            let q = b * &h + h.adjoint() * b.adjoint();
            images.push(field.enforce(solve_dlyap(a, &q)?)?);
        }
        Ok(Self {
            field,
            elements: gram_schmidt(images, RANK_TOL),
        })
    }

    /// Wraps a caller-supplied orthonormal family.
    pub fn from_elements(field: Field, elements: Vec<Mat>) -> Result<Self> {
        check_orthonormal(&elements)?;
        Ok(Self { field, elements })
    }

    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn elements(&self) -> &[Mat] {
        &self.elements
    }

    pub fn coords(&self, x: &Mat) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.elements.iter().map(|e| inner(x, e)))
    }

    pub fn matrix(&self, coords: &DVector<f64>) -> Mat {
        combine(&self.elements, coords.as_slice())
    }

    /// Orthogonal projection onto `Range Gamma`.
    pub fn project(&self, x: &Mat) -> MomentValue {
        let coords = self.coords(x);
        MomentValue {
            matrix: self.matrix(&coords),
            coords,
        }
    }

    /// `|X - Proj X| / |X|` (zero for `X = 0`).
    pub fn relative_residual(&self, x: &Mat) -> f64 {
        let norm = frob(x);
        if norm == 0.0 {
            return 0.0;
        }
        frob(&(x - self.project(x).matrix)) / norm
    }
}

/// The real vector space of `m x n` matrices `C` with `CB` lower triangular and real diagonal.
#[derive(Clone, Debug)]
pub struct FactorSpace {
    field: Field,
    rows: usize,
    cols: usize,
    /// Orthogonal projector onto the space, acting on real coordinates.
    projector: DMatrix<f64>,
}

impl FactorSpace {
    pub fn new(filter: &FilterBank) -> Self {
        let field = filter.field();
        let (m, n) = (filter.m(), filter.n());
        let ambient = field.standard_basis(m, n);
        let mut constraints: Vec<Vec<f64>> = Vec::new();
        for e in &ambient {
            let cb = e * filter.b();
            let mut row = Vec::new();
            for i in 0..m {
                for j in (i + 1)..m {
                    row.push(cb[(i, j)].re);
                    if field == Field::Complex {
                        row.push(cb[(i, j)].im);
                    }
                }
                if field == Field::Complex {
                    row.push(cb[(i, i)].im);
                }
            }
            constraints.push(row);
        }
        let dim = ambient.len();
        let ncons = constraints.first().map_or(0, Vec::len);
        // columns of K are the constraint values of each ambient basis element
        let k = DMatrix::from_fn(ncons, dim, |r, c| constraints[c][r]);
        let mut projector = DMatrix::<f64>::identity(dim, dim);
        if ncons > 0 {
            let svd = k.svd(false, true);
            let vt = svd.v_t.expect("requested V^T");
            let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
            for (idx, s) in svd.singular_values.iter().enumerate() {
                if *s > 1e-12 * smax {
                    let v = vt.row(idx).transpose();
                    projector -= &v * v.transpose();
                }
            }
        }
        Self {
            field,
            rows: m,
            cols: n,
            projector,
        }
    }

    fn to_real(&self, c: &Mat) -> DVector<f64> {
        let mut out: Vec<f64> = Vec::with_capacity(self.projector.nrows());
        // same ordering as Field::standard_basis (row-major, real parts first)
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.push(c[(i, j)].re);
            }
        }
        if self.field == Field::Complex {
            for i in 0..self.rows {
                for j in 0..self.cols {
                    out.push(c[(i, j)].im);
                }
            }
        }
        DVector::from_vec(out)
    }

    fn from_real(&self, v: &DVector<f64>) -> Mat {
        let mn = self.rows * self.cols;
        Mat::from_fn(self.rows, self.cols, |i, j| {
            let idx = i * self.cols + j;
            let im = if self.field == Field::Complex {
                v[mn + idx]
            } else {
                0.0
            };
            c64(v[idx], im)
        })
    }

    pub fn dim(&self) -> usize {
        let trace: f64 = self.projector.diagonal().iter().sum();
        trace.round() as usize
    }

    /// Nearest element of the factor space.
    pub fn project(&self, c: &Mat) -> Mat {
        self.from_real(&(&self.projector * self.to_real(c)))
    }

    /// `|C - Proj C| / |C|`, counting imaginary parts for real-field spaces.
    pub fn relative_residual(&self, c: &Mat) -> f64 {
        let norm = frob(c);
        if norm == 0.0 {
            return 0.0;
        }
        frob(&(c - self.project(c))) / norm
    }

    fn candidates(&self) -> Vec<Mat> {
        self.field
            .standard_basis(self.rows, self.cols)
            .iter()
            .map(|e| self.project(e))
            .filter(|e| frob(e) > RANK_TOL)
            .collect()
    }
}

/// Orthonormal basis of the factor space, optionally starting at a given anchor.
#[derive(Clone, Debug)]
pub struct FactorBasis {
    space: FactorSpace,
    elements: Vec<Mat>,
}

impl FactorBasis {
    pub fn new(filter: &FilterBank, anchor: Option<&Mat>) -> Result<Self> {
        Self::with_space(FactorSpace::new(filter), anchor)
    }

    pub fn with_space(space: FactorSpace, anchor: Option<&Mat>) -> Result<Self> {
        let mut candidates = Vec::new();
        if let Some(c) = anchor {
            if c.shape() != (space.rows, space.cols) {
                return Err(Error::Dimension(format!(
                    "anchor is {}x{}, expected {}x{}",
                    c.nrows(),
                    c.ncols(),
                    space.rows,
                    space.cols
                )));
            }
            let norm = frob(c);
            if norm == 0.0 {
                return Err(Error::InvalidInput("anchor has zero norm".into()));
            }
            let residual = space.relative_residual(c);
            if residual > 1e-10 {
                return Err(Error::NotInFactorSpace { residual });
            }
            candidates.push(space.project(c).unscale(norm));
        }
        candidates.extend(space.candidates());
        let elements = gram_schmidt(candidates, RANK_TOL);
        Ok(Self { space, elements })
    }

    pub fn from_elements(space: FactorSpace, elements: Vec<Mat>) -> Result<Self> {
        check_orthonormal(&elements)?;
        Ok(Self { space, elements })
    }

    pub fn dim(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Mat] {
        &self.elements
    }

    pub fn space(&self) -> &FactorSpace {
        &self.space
    }

    pub fn coords(&self, c: &Mat) -> DVector<f64> {
        DVector::from_iterator(self.dim(), self.elements.iter().map(|e| inner(c, e)))
    }

    pub fn matrix(&self, coords: &DVector<f64>) -> Mat {
        combine(&self.elements, coords.as_slice())
    }
}

/// Paired orthonormal bases of `Range Gamma` and of the factor space.
#[derive(Clone, Debug)]
pub struct CoordinateChart {
    pub range: RangeBasis,
    pub factor: FactorBasis,
}

impl CoordinateChart {
    pub fn new(filter: &FilterBank, anchor: Option<&Mat>) -> Result<Self> {
        Self::from_parts(RangeBasis::new(filter)?, FactorBasis::new(filter, anchor)?)
    }

    pub fn from_parts(range: RangeBasis, factor: FactorBasis) -> Result<Self> {
        if range.dim() != factor.dim() {
            return Err(Error::Consistency(format!(
                "Range Gamma has dimension {} but the factor space has dimension {}",
                range.dim(),
                factor.dim()
            )));
        }
        Ok(Self { range, factor })
    }

    pub fn dim(&self) -> usize {
        self.range.dim()
    }

    /// Same spaces, bases mixed by the orthogonal matrices `q_range` and `q_factor`.
    pub fn rotated(&self, q_range: &DMatrix<f64>, q_factor: &DMatrix<f64>) -> Result<Self> {
        let mix = |elements: &[Mat], q: &DMatrix<f64>| -> Vec<Mat> {
            (0..elements.len())
                .map(|k| combine(elements, q.column(k).as_slice()))
                .collect()
        };
        let range = RangeBasis::from_elements(self.range.field, mix(&self.range.elements, q_range))?;
        let factor = FactorBasis::from_elements(
            self.factor.space.clone(),
            mix(&self.factor.elements, q_factor),
        )?;
        Self::from_parts(range, factor)
    }
}

fn combine(elements: &[Mat], coords: &[f64]) -> Mat {
    let Some(first) = elements.first() else {
        return Mat::zeros(0, 0);
    };
    let mut out = Mat::zeros(first.nrows(), first.ncols());
    for (e, &x) in elements.iter().zip(coords) {
        out += e.scale(x);
    }
    out
}

fn check_orthonormal(elements: &[Mat]) -> Result<()> {
    for (j, a) in elements.iter().enumerate() {
        for (k, b) in elements.iter().enumerate() {
            let expect = if j == k { 1.0 } else { 0.0 };
            if (inner(a, b) - expect).abs() > 1e-12 {
                return Err(Error::InvalidInput(format!(
                    "basis is not orthonormal at ({j}, {k})"
                )));
            }
        }
    }
    Ok(())
}
