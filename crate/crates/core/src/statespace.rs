//! State-space models: the filter bank, scalar priors, and the factor parameter `C`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{
    self, c64, circle_grid, frob, identity, kron_identity, min_hermitian_eigenvalue, solve,
    spectral_radius, Field, Mat, ONE, STRICT_TOL, ZERO,
};

/// Grid used to certify positivity of a prior density.
pub const PRIOR_CHECK_GRID: usize = 4096;

/// Discrete-time realization `C (zI - A)^{-1} B + D`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSpace {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
}

impl StateSpace {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let k = a.nrows();
        if a.ncols() != k {
            return Err(Error::Dimension(format!("A is {}x{}", a.nrows(), a.ncols())));
        }
        if b.nrows() != k || c.ncols() != k {
            return Err(Error::Dimension(format!(
                "B is {}x{}, C is {}x{} for state dimension {k}",
                b.nrows(),
                b.ncols(),
                c.nrows(),
                c.ncols()
            )));
        }
        if d.nrows() != c.nrows() || d.ncols() != b.ncols() {
            return Err(Error::Dimension(format!(
                "D is {}x{}, expected {}x{}",
                d.nrows(),
                d.ncols(),
                c.nrows(),
                b.ncols()
            )));
        }
        Ok(Self { a, b, c, d })
    }

    /// Static gain `D` with no state.
    pub fn gain(d: Mat) -> Self {
        let (r, q) = d.shape();
        Self {
            a: Mat::zeros(0, 0),
            b: Mat::zeros(0, q),
            c: Mat::zeros(r, 0),
            d,
        }
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn eval(&self, z: Complex64) -> Result<Mat> {
        if self.states() == 0 {
            return Ok(self.d.clone());
        }
        let shifted = identity(self.states()).scale(1.0) * z - &self.a;
        let x = solve(&shifted, &self.b).map_err(|_| Error::Evaluation { z })?;
        Ok(&self.c * x + &self.d)
    }

    pub fn is_stable(&self) -> bool {
        self.states() == 0 || linalg::is_schur_stable(&self.a)
    }

    /// Realization of the product `self(z) * rhs(z)`: `rhs` acts first.
    pub fn series(&self, rhs: &StateSpace) -> Result<StateSpace> {
        if self.inputs() != rhs.outputs() {
            return Err(Error::Dimension(format!(
                "cannot multiply a {}-input system by a {}-output system",
                self.inputs(),
                rhs.outputs()
            )));
        }
        let (kl, kr) = (self.states(), rhs.states());
        let mut a = Mat::zeros(kl + kr, kl + kr);
        a.view_mut((0, 0), (kl, kl)).copy_from(&self.a);
        a.view_mut((0, kl), (kl, kr)).copy_from(&(&self.b * &rhs.c));
        a.view_mut((kl, kl), (kr, kr)).copy_from(&rhs.a);
        let mut b = Mat::zeros(kl + kr, rhs.inputs());
        b.view_mut((0, 0), (kl, rhs.inputs()))
            .copy_from(&(&self.b * &rhs.d));
        b.view_mut((kl, 0), (kr, rhs.inputs())).copy_from(&rhs.b);
        let mut c = Mat::zeros(self.outputs(), kl + kr);
        c.view_mut((0, 0), (self.outputs(), kl)).copy_from(&self.c);
        c.view_mut((0, kl), (self.outputs(), kr))
            .copy_from(&(&self.d * &rhs.c));
        let d = &self.d * &rhs.d;
        Ok(StateSpace { a, b, c, d })
    }

    /// `I_k ⊗ sys` for a scalar system: `k` decoupled copies.
    fn replicate(&self, k: usize) -> StateSpace {
        StateSpace {
            a: kron_identity(&self.a, k),
            b: kron_identity(&self.b, k),
            c: kron_identity(&self.c, k),
            d: kron_identity(&self.d, k),
        }
    }
}

/// Realization of `outer(z) * inner(z)` for a scalar `outer`.
///
/// The scalar is replicated over the inputs of `inner`, so the state dimension is
/// `inner.states() + inner.inputs() * outer.states()`.
pub fn cascade(outer: &StateSpace, inner: &StateSpace) -> Result<StateSpace> {
    if outer.inputs() != 1 || outer.outputs() != 1 {
        return Err(Error::Dimension(format!(
            "outer system must be scalar, got {}x{}",
            outer.outputs(),
            outer.inputs()
        )));
    }
    if outer.states() == 0 {
        let g = outer.d[(0, 0)];
        let mut out = inner.clone();
        out.b *= g;
        out.d *= g;
        return Ok(out);
    }
    inner.series(&outer.replicate(inner.inputs()))
}

/// The pair `(A, B)` defining `G(z) = (zI - A)^{-1} B`.
#[derive(Clone, Debug)]
pub struct FilterBank {
    a: Mat,
    b: Mat,
    field: Field,
}

impl FilterBank {
    /// Validates stability, full column rank of `B` and reachability.
    pub fn new(a: Mat, b: Mat, field: Field) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || b.nrows() != n {
            return Err(Error::Dimension(format!(
                "A is {}x{}, B is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            )));
        }
        let m = b.ncols();
        if m == 0 || n < m {
            return Err(Error::Dimension(format!("need n >= m >= 1, got n={n}, m={m}")));
        }
        let a = field.enforce(a)?;
        let b = field.enforce(b)?;
        let rho = spectral_radius(&a);
        if rho >= 1.0 - STRICT_TOL {
            return Err(Error::Unstable { spectral_radius: rho });
        }
        if linalg::rank(&b, 1e-10) < m {
            return Err(Error::InvalidInput("B must have full column rank".into()));
        }
        let mut reach = Mat::zeros(n, n * m);
        let mut block = b.clone();
        for k in 0..n {
            reach.view_mut((0, k * m), (n, m)).copy_from(&block);
            block = &a * block;
        }
        if linalg::rank(&reach, 1e-10) < n {
            return Err(Error::InvalidInput("(A, B) is not reachable".into()));
        }
        Ok(Self { a, b, field })
    }

    /// Shift filter for matricial covariance extension with `p + 1` lags, `n = m (p + 1)`.
    pub fn covariance_extension(m: usize, p: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidInput("m must be positive".into()));
        }
        let n = m * (p + 1);
        let mut a = Mat::zeros(n, n);
        for k in 0..p {
            for d in 0..m {
                a[(k * m + d, (k + 1) * m + d)] = ONE;
            }
        }
        let mut b = Mat::zeros(n, m);
        for d in 0..m {
            b[(p * m + d, d)] = ONE;
        }
        Self::new(a, b, Field::Real)
    }

    pub fn with_field(mut self, field: Field) -> Result<Self> {
        if field == Field::Real {
            self.a = field.enforce(self.a)?;
            self.b = field.enforce(self.b)?;
        }
        self.field = field;
        Ok(self)
    }

    pub fn a(&self) -> &Mat {
        &self.a
    }

    pub fn b(&self) -> &Mat {
        &self.b
    }

    pub fn field(&self) -> Field {
        self.field
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// `G(z)`, an `n x m` matrix.
    pub fn eval(&self, z: Complex64) -> Result<Mat> {
        let shifted = identity(self.n()) * z - &self.a;
        solve(&shifted, &self.b).map_err(|_| Error::Evaluation { z })
    }

    pub fn as_system(&self) -> StateSpace {
        StateSpace {
            a: self.a.clone(),
            b: self.b.clone(),
            c: identity(self.n()),
            d: Mat::zeros(self.n(), self.m()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PriorKind {
    Constant,
    Polynomial,
    Rational,
}

/// Scalar prior density `psi = |sigma|^2` carried by its outer factor `sigma`.
#[derive(Clone, Debug)]
pub struct PriorSpectrum {
    sigma: StateSpace,
    kind: PriorKind,
    coefficients: Option<Vec<Complex64>>,
}

impl PriorSpectrum {
    /// The constant density `1`.
    pub fn unit() -> Self {
        Self {
            sigma: StateSpace::gain(Mat::from_element(1, 1, ONE)),
            kind: PriorKind::Constant,
            coefficients: None,
        }
    }

    /// Constant density `value > 0`.
    pub fn constant(value: f64) -> Result<Self> {
        if value.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(Error::PriorNotPositive { min_value: value });
        }
        Ok(Self {
            sigma: StateSpace::gain(Mat::from_element(1, 1, c64(value.sqrt(), 0.0))),
            kind: PriorKind::Constant,
            coefficients: None,
        })
    }

    /// `sigma(z) = sum_k b_k z^{-k}`; all zeros must lie strictly inside the unit disk.
    pub fn from_polynomial(b: &[Complex64]) -> Result<Self> {
        let Some(&b0) = b.first() else {
            return Err(Error::InvalidInput("empty coefficient list".into()));
        };
        if b0 == ZERO {
            return Err(Error::InvalidInput("leading coefficient b[0] must be nonzero".into()));
        }
        let deg = b.len() - 1;
        let mut a = Mat::zeros(deg, deg);
        for i in 1..deg {
            a[(i, i - 1)] = ONE;
        }
        let mut bm = Mat::zeros(deg, 1);
        if deg > 0 {
            bm[(0, 0)] = ONE;
        }
        let c = Mat::from_row_slice(1, deg, &b[1..]);
        let d = Mat::from_element(1, 1, b0);
        let sigma = StateSpace::new(a, bm, c, d)?;
        check_minimum_phase(&sigma)?;
        let prior = Self {
            sigma,
            kind: if deg == 0 {
                PriorKind::Constant
            } else {
                PriorKind::Polynomial
            },
            coefficients: Some(b.to_vec()),
        };
        prior.check_positive()?;
        Ok(prior)
    }

    pub fn from_real_polynomial(b: &[f64]) -> Result<Self> {
        let b: Vec<_> = b.iter().map(|&x| c64(x, 0.0)).collect();
        Self::from_polynomial(&b)
    }

    /// Rational prior from a stable, minimum-phase scalar realization of `sigma`.
    pub fn from_realization(sigma: StateSpace) -> Result<Self> {
        if sigma.inputs() != 1 || sigma.outputs() != 1 {
            return Err(Error::Dimension("sigma must be scalar".into()));
        }
        if !sigma.is_stable() {
            return Err(Error::Unstable {
                spectral_radius: spectral_radius(&sigma.a),
            });
        }
        check_minimum_phase(&sigma)?;
        let prior = Self {
            sigma,
            kind: PriorKind::Rational,
            coefficients: None,
        };
        prior.check_positive()?;
        Ok(prior)
    }

    fn check_positive(&self) -> Result<()> {
        let min = min_on_grid(self, PRIOR_CHECK_GRID);
        if min > 0.0 {
            Ok(())
        } else {
            Err(Error::PriorNotPositive { min_value: min })
        }
    }

    pub fn sigma(&self) -> &StateSpace {
        &self.sigma
    }

    pub fn kind(&self) -> PriorKind {
        self.kind
    }

    pub fn coefficients(&self) -> Option<&[Complex64]> {
        self.coefficients.as_deref()
    }

    /// True when the density is identically one.
    pub fn is_unit(&self) -> bool {
        self.sigma.states() == 0 && (self.sigma.d[(0, 0)].norm() - 1.0).abs() == 0.0
    }

    /// `psi(z) = |sigma(z)|^2` for `|z| = 1`.
    pub fn psi(&self, z: Complex64) -> f64 {
        if let Some(b) = &self.coefficients {
            let w = z.inv();
            let mut acc = ZERO;
            for &coef in b.iter().rev() {
                acc = acc * w + coef;
            }
            return acc.norm_sqr();
        }
        self.sigma
            .eval(z)
            .map(|v| v[(0, 0)].norm_sqr())
            .unwrap_or(f64::NAN)
    }

    /// Zeros of `sigma`, the eigenvalues of `A - B D^{-1} C`.
    pub fn zeros(&self) -> Vec<Complex64> {
        inverse_dynamics(&self.sigma)
            .map(|m| linalg::eigenvalues(&m))
            .unwrap_or_default()
    }
}

fn inverse_dynamics(sigma: &StateSpace) -> Option<Mat> {
    let d = sigma.d[(0, 0)];
    if d == ZERO {
        return None;
    }
    Some(&sigma.a - (&sigma.b * &sigma.c) / d)
}

fn check_minimum_phase(sigma: &StateSpace) -> Result<()> {
    let Some(inv) = inverse_dynamics(sigma) else {
        return Err(Error::InvalidInput("sigma has zero feedthrough".into()));
    };
    let worst = linalg::eigenvalues(&inv)
        .into_iter()
        .max_by(|x, y| x.norm().total_cmp(&y.norm()));
    match worst {
        Some(root) if root.norm() >= 1.0 - STRICT_TOL => Err(Error::NotMinimumPhase {
            root,
            modulus: root.norm(),
        }),
        _ => Ok(()),
    }
}

/// Minimum of `psi` on an `n`-point circle grid.
pub fn min_on_grid(prior: &PriorSpectrum, n: usize) -> f64 {
    circle_grid(n)
        .map(|(_, z)| prior.psi(z))
        .fold(f64::INFINITY, f64::min)
}

/// Outcome of the `C+` membership test.
#[derive(Clone, Debug)]
pub struct CplusReport {
    pub in_set: bool,
    pub reasons: Vec<String>,
    /// Spectral radius of the closed loop, `NaN` when `CB` is singular.
    pub spectral_radius: f64,
    /// Zeros of `det(z C G(z))`, i.e. eigenvalues of the closed loop.
    pub zeros: Vec<Complex64>,
}

/// Tests `CB` lower triangular with positive real diagonal and `Pi = A - B (CB)^{-1} C A` stable.
pub fn check_cplus(filter: &FilterBank, c: &Mat) -> CplusReport {
    let mut reasons = Vec::new();
    if c.shape() != (filter.m(), filter.n()) {
        return CplusReport {
            in_set: false,
            reasons: vec![format!(
                "C is {}x{}, expected {}x{}",
                c.nrows(),
                c.ncols(),
                filter.m(),
                filter.n()
            )],
            spectral_radius: f64::NAN,
            zeros: Vec::new(),
        };
    }
    let cb = c * filter.b();
    for i in 0..cb.nrows() {
        for j in (i + 1)..cb.ncols() {
            if cb[(i, j)].norm() > STRICT_TOL {
                reasons.push(format!("CB[{i},{j}] = {} is above the diagonal", cb[(i, j)]));
            }
        }
        let d = cb[(i, i)];
        if d.re <= 0.0 {
            reasons.push(format!("CB[{i},{i}] = {} is not positive", d.re));
        }
        if d.im.abs() > STRICT_TOL {
            reasons.push(format!("CB[{i},{i}] has imaginary part {}", d.im));
        }
    }
    let (spectral_radius, zeros) = match closed_loop(filter, c) {
        Ok(pi) => {
            let zeros = linalg::eigenvalues(&pi);
            let rho = zeros.iter().fold(0.0f64, |acc, z| acc.max(z.norm()));
            if rho >= 1.0 - STRICT_TOL {
                reasons.push(format!("closed loop has spectral radius {rho:.6}"));
            }
            (rho, zeros)
        }
        Err(_) => {
            reasons.push("CB is singular".into());
            (f64::NAN, Vec::new())
        }
    };
    CplusReport {
        in_set: reasons.is_empty(),
        reasons,
        spectral_radius,
        zeros,
    }
}

pub fn is_in_cplus(filter: &FilterBank, c: &Mat) -> bool {
    check_cplus(filter, c).in_set
}

/// `Pi = A - B (CB)^{-1} C A`.
pub fn closed_loop(filter: &FilterBank, c: &Mat) -> Result<Mat> {
    let cb = c * filter.b();
    let gain = solve(&cb, &(c * filter.a())).map_err(|_| Error::NotInCplus {
        reasons: vec!["CB is singular".into()],
    })?;
    Ok(filter.a() - filter.b() * gain)
}

/// A matrix `C` in `C+` together with its closed-loop matrix.
#[derive(Clone, Debug)]
pub struct FactorParameter {
    c: Mat,
    pi: Mat,
}

impl FactorParameter {
    pub fn new(filter: &FilterBank, c: Mat) -> Result<Self> {
        let report = check_cplus(filter, &c);
        if !report.in_set {
            return Err(Error::NotInCplus {
                reasons: report.reasons,
            });
        }
        let c = filter.field().enforce(c)?;
        let pi = closed_loop(filter, &c)?;
        Ok(Self { c, pi })
    }

    pub fn c(&self) -> &Mat {
        &self.c
    }

    pub fn pi(&self) -> &Mat {
        &self.pi
    }

    pub fn into_inner(self) -> Mat {
        self.c
    }
}

/// Realization `(Pi, B (CB)^{-1}, I, 0)` of `G(z) (z C G(z))^{-1}`.
pub fn factor_inner_realization(filter: &FilterBank, c: &FactorParameter) -> Result<StateSpace> {
    let cb = c.c() * filter.b();
    let cb_inv = linalg::inverse(&cb).map_err(|_| Error::NotInCplus {
        reasons: vec!["CB is singular".into()],
    })?;
    Ok(StateSpace {
        a: c.pi().clone(),
        b: filter.b() * cb_inv,
        c: identity(filter.n()),
        d: Mat::zeros(filter.n(), filter.m()),
    })
}

/// Outcome of the `L+` membership test.
#[derive(Clone, Copy, Debug)]
pub struct LplusReport {
    pub in_set: bool,
    pub min_eig: f64,
}

/// Checks `G*(z) L G(z) > 0` on a `grid_n`-point circle grid.
pub fn check_lplus(filter: &FilterBank, lambda: &Mat, grid_n: usize) -> LplusReport {
    if lambda.shape() != (filter.n(), filter.n())
        || linalg::hermitian_defect(lambda) > STRICT_TOL * (1.0 + frob(lambda))
    {
        return LplusReport {
            in_set: false,
            min_eig: f64::NAN,
        };
    }
    let mut min_eig = f64::INFINITY;
    for (_, z) in circle_grid(grid_n) {
        let Ok(g) = filter.eval(z) else {
            return LplusReport {
                in_set: false,
                min_eig: f64::NAN,
            };
        };
        let s = g.adjoint() * lambda * &g;
        min_eig = min_eig.min(min_hermitian_eigenvalue(&s));
    }
    LplusReport {
        in_set: min_eig > 0.0,
        min_eig,
    }
}

/// Real `rows x cols` matrix from a row-major slice.
pub fn real_matrix(rows: usize, cols: usize, data: &[f64]) -> Mat {
    linalg::from_real(&DMatrix::from_row_slice(rows, cols, data))
}
