//! Symmetric bilinear forms in a fixed basis and their signatures.
//!
//! A [`SymmetricForm`] stores the full `n x n` coordinate matrix `(γ_ij)`.
//! Packed `i <= j` coordinates are a view provided by
//! [`crate::geometry::PackedIndex`].

use std::fmt;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative asymmetry accepted (and removed) by [`SymmetricForm::new`].
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Default degeneracy threshold, relative to the largest entry magnitude.
pub const DEGENERACY_TOL: f64 = 1e-10;

/// Largest condition number accepted for the random congruence factor in
/// [`random_form`]. Forms inherit its square, and `Q` its fourth power.
pub const MAX_CONDITION: f64 = 10.0;

/// A real symmetric `n x n` matrix representing a bilinear form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FormRepr", into = "FormRepr")]
pub struct SymmetricForm {
    entries: DMatrix<f64>,
}

#[derive(Serialize, Deserialize)]
struct FormRepr {
    n: usize,
    entries: Vec<Vec<f64>>,
}

impl TryFrom<FormRepr> for SymmetricForm {
    type Error = Error;

    fn try_from(repr: FormRepr) -> Result<Self> {
        if repr.entries.len() != repr.n {
            return Err(Error::DimensionMismatch {
                expected: repr.n,
                found: repr.entries.len(),
            });
        }
        for row in &repr.entries {
            if row.len() != repr.n {
                return Err(Error::DimensionMismatch {
                    expected: repr.n,
                    found: row.len(),
                });
            }
        }
        let m = DMatrix::from_fn(repr.n, repr.n, |i, j| repr.entries[i][j]);
        SymmetricForm::new(m)
    }
}

impl From<SymmetricForm> for FormRepr {
    fn from(form: SymmetricForm) -> Self {
        let n = form.dim();
        FormRepr {
            n,
            entries: (0..n)
                .map(|i| (0..n).map(|j| form.entries[(i, j)]).collect())
                .collect(),
        }
    }
}

impl SymmetricForm {
    /// Builds a form from a square matrix, symmetrizing it.
    ///
    /// Fails if the matrix is not square, has non-finite entries, or its
    /// asymmetry exceeds [`SYMMETRY_TOL`] relative to the largest entry.
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = entries.shape();
        if rows != cols || rows == 0 {
            return Err(Error::NotSquare { rows, cols });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let scale = entries.amax();
        let asym = (&entries - entries.transpose()).amax();
        if asym > SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NotSymmetric(asym / scale));
        }
        let sym = (&entries + entries.transpose()) * 0.5;
        Ok(SymmetricForm { entries: sym })
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn identity(n: usize) -> Self {
        SymmetricForm {
            entries: DMatrix::identity(n, n),
        }
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let n = values.len();
        Self::new(DMatrix::from_fn(n, n, |i, j| if i == j { values[i] } else { 0.0 }))
    }

    /// The standard form `diag(+1 x p, -1 x p')`.
    pub fn standard(sig: Signature) -> Self {
        let n = sig.dim();
        SymmetricForm {
            entries: DMatrix::from_fn(n, n, |i, j| match (i == j, i < sig.p) {
                (false, _) => 0.0,
                (true, true) => 1.0,
                (true, false) => -1.0,
            }),
        }
    }

    pub(crate) fn from_symmetric_unchecked(entries: DMatrix<f64>) -> Self {
        SymmetricForm { entries }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn into_entries(self) -> DMatrix<f64> {
        self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    /// Largest entry magnitude.
    pub fn scale(&self) -> f64 {
        self.entries.amax()
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        SymmetricForm {
            entries: &self.entries * alpha,
        }
    }

    /// The sign-flipped form `-γ`.
    pub fn negated(&self) -> Self {
        self.scaled(-1.0)
    }

    pub fn determinant(&self) -> f64 {
        self.entries.clone().determinant()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        SymmetricEigen::new(self.entries.clone())
            .eigenvalues
            .iter()
            .copied()
            .collect()
    }

    /// Leading principal minors `m_1, ..., m_n`.
    pub fn leading_minors(&self) -> Vec<f64> {
        (1..=self.dim())
            .map(|k| self.entries.view((0, 0), (k, k)).into_owned().determinant())
            .collect()
    }
}

/// Counts `(p, p')` of positive and negative directions of a scalar product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Signature {
    pub p: usize,
    pub p_prime: usize,
}

impl Signature {
    pub const fn new(p: usize, p_prime: usize) -> Self {
        Signature { p, p_prime }
    }

    pub const fn dim(&self) -> usize {
        self.p + self.p_prime
    }

    /// Signature of `-γ`.
    pub const fn swapped(&self) -> Self {
        Signature::new(self.p_prime, self.p)
    }

    /// All signatures with `p + p' = n`.
    pub fn all_of_dim(n: usize) -> impl Iterator<Item = Signature> {
        (0..=n).rev().map(move |p| Signature::new(p, n - p))
    }
}

impl From<[usize; 2]> for Signature {
    fn from(v: [usize; 2]) -> Self {
        Signature::new(v[0], v[1])
    }
}

impl From<Signature> for [usize; 2] {
    fn from(s: Signature) -> Self {
        [s.p, s.p_prime]
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.p, self.p_prime)
    }
}

/// How [`signature_of`] classifies a form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SignatureMethod {
    /// Signs of ratios of consecutive leading principal minors.
    Minors,
    /// Signs of the eigenvalues.
    Eigen,
    /// `Minors`, falling back to `Eigen` when a minor is numerically zero.
    #[default]
    Auto,
}

impl std::str::FromStr for SignatureMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "minors" => Ok(SignatureMethod::Minors),
            "eigen" => Ok(SignatureMethod::Eigen),
            "auto" => Ok(SignatureMethod::Auto),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// Signature of a nondegenerate form, with the default degeneracy tolerance.
pub fn signature_of(form: &SymmetricForm, method: SignatureMethod) -> Result<Signature> {
    signature_of_with_tol(form, method, DEGENERACY_TOL)
}

/// Signature of a nondegenerate form.
///
/// The form is rejected as [`Error::DegenerateForm`] when an eigenvalue is
/// smaller in magnitude than `tol * max|entry|`. The same relative threshold,
/// raised to the k-th power of the scale, decides when the k-th leading minor
/// counts as vanishing.
pub fn signature_of_with_tol(
    form: &SymmetricForm,
    method: SignatureMethod,
    tol: f64,
) -> Result<Signature> {
    let n = form.dim();
    let scale = form.scale();
    let eigenvalues = form.eigenvalues();
    check_nondegenerate(&eigenvalues, scale, tol)?;

    let by_eigen = || {
        let p = eigenvalues.iter().filter(|&&l| l > 0.0).count();
        Signature::new(p, n - p)
    };

    match method {
        SignatureMethod::Eigen => Ok(by_eigen()),
        SignatureMethod::Minors => signature_from_minors(form, scale, tol),
        SignatureMethod::Auto => match signature_from_minors(form, scale, tol) {
            Ok(sig) => Ok(sig),
            Err(Error::MinorBreakdown { .. }) => Ok(by_eigen()),
            Err(e) => Err(e),
        },
    }
}

pub(crate) fn check_nondegenerate(eigenvalues: &[f64], scale: f64, tol: f64) -> Result<()> {
    let min_abs = eigenvalues
        .iter()
        .map(|l| l.abs())
        .fold(f64::INFINITY, f64::min);
    let threshold = tol * scale;
    if !(min_abs > threshold) {
        return Err(Error::DegenerateForm {
            min_abs_eigenvalue: min_abs,
            threshold,
        });
    }
    Ok(())
}

// p' = n/2 - (1/2) Σ sgn(m_k / m_{k-1}), m_0 = 1
fn signature_from_minors(form: &SymmetricForm, scale: f64, tol: f64) -> Result<Signature> {
    let n = form.dim();
    let minors = form.leading_minors();
    let mut previous = 1.0;
    let mut sign_sum: i64 = 0;
    for (idx, &m) in minors.iter().enumerate() {
        let k = idx + 1;
        if !(m.abs() > tol * scale.powi(k as i32)) {
            return Err(Error::MinorBreakdown { k, value: m });
        }
        sign_sum += if (m / previous) > 0.0 { 1 } else { -1 };
        previous = m;
    }
    let twice_p_prime = n as i64 - sign_sum;
    debug_assert!(twice_p_prime >= 0 && twice_p_prime % 2 == 0);
    let p_prime = (twice_p_prime / 2) as usize;
    Ok(Signature::new(n - p_prime, p_prime))
}

/// The inverse coordinate matrix `γ^{ij}` of a scalar product.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseForm {
    entries: DMatrix<f64>,
}

impl InverseForm {
    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[(i, j)]
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Views the inverse as a symmetric form in its own right.
    pub fn to_form(&self) -> SymmetricForm {
        SymmetricForm::from_symmetric_unchecked(self.entries.clone())
    }
}

/// Inverts a nondegenerate form; the result is symmetrized.
pub fn inverse_form(form: &SymmetricForm) -> Result<InverseForm> {
    check_nondegenerate(&form.eigenvalues(), form.scale(), DEGENERACY_TOL)?;
    let inv = form
        .entries
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("matrix inversion failed".into()))?;
    Ok(InverseForm {
        entries: (&inv + inv.transpose()) * 0.5,
    })
}

/// Random form of the given signature from a seed; see [`random_form_with`].
pub fn random_form(sig: Signature, seed: u64, scale: f64) -> Result<SymmetricForm> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_form_with(&mut rng, sig, scale)
}

/// Random form `B diag(+1.., -1..) Bᵀ` with `B` uniform in `[-scale, scale]`
/// and condition number below [`MAX_CONDITION`].
pub fn random_form_with<R: Rng + ?Sized>(
    rng: &mut R,
    sig: Signature,
    scale: f64,
) -> Result<SymmetricForm> {
    let n = sig.dim();
    if n == 0 {
        return Err(Error::InvalidArgument("signature must have p + p' >= 1".into()));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::InvalidArgument(format!("scale must be positive, got {scale}")));
    }
    let eta = SymmetricForm::standard(sig);
    let b = random_well_conditioned(rng, n, scale);
    let m = &b * eta.entries() * b.transpose();
    Ok(SymmetricForm::from_symmetric_unchecked((&m + m.transpose()) * 0.5))
}

/// Random `n x n` matrix with entries in `[-scale, scale]` and condition
/// number below [`MAX_CONDITION`].
pub(crate) fn random_well_conditioned<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    scale: f64,
) -> DMatrix<f64> {
    loop {
        let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-scale..=scale));
        let sv = b.singular_values();
        let (lo, hi) = (sv.min(), sv.max());
        if lo > 0.0 && hi / lo < MAX_CONDITION {
            return b;
        }
    }
}
