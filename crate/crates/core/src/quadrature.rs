//! L² inner products on the one-dimensional fiber `Γ ≅ (0, ∞)` with the
//! invariant measure `dγ/γ`, and orthonormalization against it.
//!
//! With `u = ln γ` the measure becomes `du`, so panels are laid out uniformly
//! in `u`; the integrand then decays at both ends for functions like
//! `γ^k e^{−γ/2}`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{Complex, DMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::Signature;

pub type C64 = Complex<f64>;

/// A complex-valued function on the fiber.
#[derive(Clone)]
pub struct L2Function(Arc<dyn Fn(f64) -> C64 + Send + Sync>);

impl L2Function {
    pub fn new<F>(f: F) -> Self
    where
        F: Fn(f64) -> C64 + Send + Sync + 'static,
    {
        L2Function(Arc::new(f))
    }

    pub fn real<F>(f: F) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        L2Function::new(move |x| C64::new(f(x), 0.0))
    }

    pub fn eval(&self, gamma: f64) -> C64 {
        (self.0)(gamma)
    }
}

impl fmt::Debug for L2Function {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("L2Function(..)")
    }
}

/// Gauss–Legendre rule on `[−1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(m: usize) -> Self {
        let mut nodes = vec![0.0; m];
        let mut weights = vec![0.0; m];
        for i in 0..m.div_ceil(2) {
            let mut x = (PI * (i as f64 + 0.75) / (m as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                // three-term recurrence for P_m and its derivative
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=m {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let pm = if m == 0 { 1.0 } else if m == 1 { x } else { p1 };
                let pm1 = if m == 1 { 1.0 } else { p0 };
                dp = m as f64 * (x * pm - pm1) / (x * x - 1.0);
                let dx = pm / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[m - 1 - i] = x;
            weights[i] = w;
            weights[m - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }

    /// `∫_a^b f` by this rule on a single panel.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let (mid, half) = ((a + b) / 2.0, (b - a) / 2.0);
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(x, w)| w * f(mid + half * x))
            .sum::<f64>()
            * half
    }
}

/// Composite Gauss–Legendre rule over `[gamma_min, gamma_max]`, panels equal
/// in `ln γ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSpec {
    pub gamma_min: f64,
    pub gamma_max: f64,
    pub panels: usize,
    pub nodes: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec {
            gamma_min: 1e-12,
            gamma_max: 60.0,
            panels: 64,
            nodes: 16,
        }
    }
}

/// Boundary contributions above this make the domain too small.
pub const BOUNDARY_TOL: f64 = 1e-8;

impl QuadratureSpec {
    fn validate(&self) -> Result<()> {
        if !(self.gamma_min > 0.0 && self.gamma_max > self.gamma_min && self.gamma_max.is_finite())
            || self.panels == 0
            || self.nodes == 0
        {
            return Err(Error::InvalidArgument(format!("bad quadrature spec {self:?}")));
        }
        Ok(())
    }

    /// Nodes `γ_k` and weights `w_k` with `Σ w_k f(γ_k) ≈ ∫ f dγ/γ`.
    pub fn rule(&self) -> Result<Vec<(f64, f64)>> {
        self.validate()?;
        let gl = GaussLegendre::new(self.nodes);
        let (lo, hi) = (self.gamma_min.ln(), self.gamma_max.ln());
        let width = (hi - lo) / self.panels as f64;
        let mut out = Vec::with_capacity(self.panels * self.nodes);
        for p in 0..self.panels {
            let mid = lo + (p as f64 + 0.5) * width;
            for (x, w) in gl.nodes.iter().zip(&gl.weights) {
                out.push(((mid + 0.5 * width * x).exp(), 0.5 * width * w));
            }
        }
        Ok(out)
    }
}

fn require_positive_line(signature: Signature) -> Result<()> {
    if signature != Signature::new(1, 0) {
        return Err(Error::UnsupportedSignature {
            expected: "(1, 0)".into(),
            found: signature,
        });
    }
    Ok(())
}

/// `∫ ψ₁*(γ) ψ₂(γ) dγ/γ` over the quadrature domain.
///
/// The integrand in `u = ln γ` is `ψ₁*ψ₂`; its modulus at either endpoint is
/// used as the estimate of the truncated tail.
pub fn l2_inner_product(
    psi1: &L2Function,
    psi2: &L2Function,
    signature: Signature,
    quad: &QuadratureSpec,
) -> Result<C64> {
    require_positive_line(signature)?;
    let rule = quad.rule()?;
    let integrand = |g: f64| psi1.eval(g).conj() * psi2.eval(g);
    let boundary = integrand(quad.gamma_min).norm() + integrand(quad.gamma_max).norm();
    if !boundary.is_finite() || boundary > BOUNDARY_TOL {
        return Err(Error::QuadratureDomainTooSmall(boundary));
    }
    let value: C64 = rule.iter().map(|&(g, w)| integrand(g) * w).sum();
    if !(value.re.is_finite() && value.im.is_finite()) {
        return Err(Error::NonFinite);
    }
    Ok(value)
}

/// Gram matrix `G_jk = ⟨ψ_j, ψ_k⟩`.
pub fn gram_matrix(
    functions: &[L2Function],
    signature: Signature,
    quad: &QuadratureSpec,
) -> Result<DMatrix<C64>> {
    let n = functions.len();
    let mut g = DMatrix::zeros(n, n);
    for j in 0..n {
        for k in j..n {
            let v = l2_inner_product(&functions[j], &functions[k], signature, quad)?;
            g[(j, k)] = v;
            g[(k, j)] = v.conj();
        }
    }
    Ok(g)
}

/// Largest Gram condition number accepted by [`gram_schmidt_basis`].
pub const MAX_GRAM_CONDITION: f64 = 1e8;

/// An orthonormal family `e_k = Σ_j C_kj ψ_j`, with `C` lower triangular so
/// that `e_k` spans the same space as `ψ_0..ψ_k`.
#[derive(Debug, Clone)]
pub struct OrthonormalFamily {
    pub coefficients: DMatrix<C64>,
    pub functions: Vec<L2Function>,
}

impl OrthonormalFamily {
    pub fn len(&self) -> usize {
        self.functions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.functions.is_empty()
    }
}

pub fn gram_schmidt_basis(
    functions: &[L2Function],
    signature: Signature,
    quad: &QuadratureSpec,
) -> Result<OrthonormalFamily> {
    let gram = gram_matrix(functions, signature, quad)?;
    let n = functions.len();
    if n == 0 {
        return Ok(OrthonormalFamily {
            coefficients: DMatrix::zeros(0, 0),
            functions: Vec::new(),
        });
    }
    let eig = gram.clone().symmetric_eigen().eigenvalues;
    let (lo, hi) = (eig.min(), eig.max());
    let cond = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if cond >= MAX_GRAM_CONDITION {
        return Err(Error::LinearlyDependentInput(cond));
    }
    // G = M M†; with C = conj(M⁻¹) the family C·ψ has Gram M⁻¹ G M⁻† = I
    let m = gram
        .cholesky()
        .ok_or(Error::LinearlyDependentInput(cond))?
        .l();
    let m_inv = m
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Numerical("triangular solve failed".into()))?;
    let coefficients = m_inv.map(|z| z.conj());

    let out = (0..n)
        .map(|k| {
            let row: Vec<(C64, L2Function)> = (0..=k)
                .map(|j| (coefficients[(k, j)], functions[j].clone()))
                .collect();
            L2Function::new(move |g| row.iter().map(|(c, f)| c * f.eval(g)).sum())
        })
        .collect();
    Ok(OrthonormalFamily {
        coefficients,
        functions: out,
    })
}
