//! The natural metric `Q = γ^{ik}γ^{jl} dγ_ij ⊗ dγ_kl` on a space of scalar
//! products, the one-form `α = γ^{ij} dγ_ij` and the deformed family
//! `Q^a = Q + a α⊗α`.
//!
//! Components are taken in the packed coordinate frame `(γ_ij)_{i≤j}`,
//! ordered lexicographically: `(1,1), (1,2), ..., (1,n), (2,2), ..., (n,n)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::forms::{inverse_form, signature_of, Signature, SignatureMethod, SymmetricForm};
use crate::group::{act, action_jacobian, GroupElement};

/// Lexicographic enumeration of the pairs `(i, j)`, `i ≤ j`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PackedIndex {
    n: usize,
    pairs: Vec<(usize, usize)>,
}

impl PackedIndex {
    pub fn new(n: usize) -> Self {
        let pairs = (0..n)
            .flat_map(|i| (i..n).map(move |j| (i, j)))
            .collect();
        PackedIndex { n, pairs }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `N = n(n+1)/2`.
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// Position of the pair `(i, j)` (in either order).
    pub fn position(&self, i: usize, j: usize) -> usize {
        let (a, b) = if i <= j { (i, j) } else { (j, i) };
        // rows before `a` hold n + (n-1) + ... + (n-a+1) entries
        a * self.n - a * (a.saturating_sub(1)) / 2 + (b - a)
    }

    /// Tangent basis matrix: `E_ii` on the diagonal, `E_ij + E_ji` off it.
    pub fn basis_matrix(&self, (i, j): (usize, usize)) -> DMatrix<f64> {
        let mut e = DMatrix::zeros(self.n, self.n);
        e[(i, j)] = 1.0;
        e[(j, i)] = 1.0;
        e
    }

    pub fn pack(&self, form: &SymmetricForm) -> DVector<f64> {
        DVector::from_iterator(self.len(), self.pairs.iter().map(|&(i, j)| form.get(i, j)))
    }

    pub fn unpack(&self, coords: &DVector<f64>) -> Result<SymmetricForm> {
        if coords.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                found: coords.len(),
            });
        }
        let mut m = DMatrix::zeros(self.n, self.n);
        for (k, &(i, j)) in self.pairs.iter().enumerate() {
            m[(i, j)] = coords[k];
            m[(j, i)] = coords[k];
        }
        SymmetricForm::new(m)
    }

    /// Smallest `n` with `n(n+1)/2 = len`, if any.
    pub fn dim_for_len(len: usize) -> Option<usize> {
        (1..=len).find(|n| n * (n + 1) / 2 == len)
    }
}

/// Components `Q_IJ` of a metric on the space of scalar products at a base
/// point.
#[derive(Debug, Clone, PartialEq)]
pub struct CotangentMetric {
    pub n: usize,
    pub components: DMatrix<f64>,
}

impl CotangentMetric {
    pub fn big_n(&self) -> usize {
        self.components.nrows()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.components[(i, j)]
    }

    pub fn determinant(&self) -> f64 {
        self.components.clone().determinant()
    }

    pub fn as_form(&self) -> SymmetricForm {
        SymmetricForm::from_symmetric_unchecked(self.components.clone())
    }

    pub fn signature(&self) -> Result<Signature> {
        signature_of(&self.as_form(), SignatureMethod::Eigen)
    }
}

/// Components `α_I` of the invariant one-form at a base point.
#[derive(Debug, Clone, PartialEq)]
pub struct OneForm {
    pub components: DVector<f64>,
}

/// `Q_IJ = tr(γ⁻¹ E_I γ⁻¹ E_J)` with `E_I` the packed tangent basis.
pub fn metric_components(form: &SymmetricForm) -> Result<CotangentMetric> {
    let inv = inverse_form(form)?;
    let index = PackedIndex::new(form.dim());
    let products: Vec<DMatrix<f64>> = index
        .pairs()
        .iter()
        .map(|&pair| inv.entries() * index.basis_matrix(pair))
        .collect();
    let big_n = index.len();
    let mut q = DMatrix::zeros(big_n, big_n);
    for a in 0..big_n {
        for b in a..big_n {
            let v = trace_of_product(&products[a], &products[b]);
            q[(a, b)] = v;
            q[(b, a)] = v;
        }
    }
    Ok(CotangentMetric {
        n: form.dim(),
        components: q,
    })
}

fn trace_of_product(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let n = x.nrows();
    let mut acc = 0.0;
    for i in 0..n {
        for k in 0..n {
            acc += x[(i, k)] * y[(k, i)];
        }
    }
    acc
}

/// Signature of `Q` at `form`, computed numerically from its components.
pub fn metric_signature(form: &SymmetricForm) -> Result<Signature> {
    metric_components(form)?.signature()
}

/// `((p(p+1) + p'(p'+1))/2, p·p')`.
pub fn natural_metric_signature(sig: Signature) -> Signature {
    let (p, q) = (sig.p, sig.p_prime);
    Signature::new((p * (p + 1) + q * (q + 1)) / 2, p * q)
}

/// Signature of `Q^a`: equal to that of `Q` for `a > a₀`, one plus traded for
/// one minus for `a < a₀`, `None` (degenerate) at `a = a₀ = -1/n`.
pub fn deformed_metric_signature(sig: Signature, a: f64) -> Option<Signature> {
    let a0 = critical_deformation(sig.dim());
    let base = natural_metric_signature(sig);
    if a > a0 {
        Some(base)
    } else if a < a0 {
        Some(Signature::new(base.p - 1, base.p_prime + 1))
    } else {
        None
    }
}

/// `a₀ = -1 / Q⁻¹(α, α) = -1/n`.
pub fn critical_deformation(n: usize) -> f64 {
    -1.0 / n as f64
}

/// `α_I = γ^{ii}` on diagonal coordinates, `2γ^{ij}` off the diagonal.
pub fn one_form_components(form: &SymmetricForm) -> Result<OneForm> {
    let inv = inverse_form(form)?;
    let index = PackedIndex::new(form.dim());
    let components = DVector::from_iterator(
        index.len(),
        index.pairs().iter().map(|&(i, j)| {
            if i == j {
                inv.get(i, i)
            } else {
                2.0 * inv.get(i, j)
            }
        }),
    );
    Ok(OneForm { components })
}

/// `Q^a_IJ = Q_IJ + a α_I α_J`.
pub fn deformed_metric(form: &SymmetricForm, a: f64) -> Result<CotangentMetric> {
    let q = metric_components(form)?;
    let alpha = one_form_components(form)?.components;
    Ok(CotangentMetric {
        n: q.n,
        components: q.components + (&alpha * alpha.transpose()) * a,
    })
}

/// `Q⁻¹(α, α)`, which equals `dim V` at every point.
pub fn qinv_alpha_alpha(form: &SymmetricForm) -> Result<f64> {
    let q = metric_components(form)?;
    let alpha = one_form_components(form)?.components;
    let solved = q
        .components
        .lu()
        .solve(&alpha)
        .ok_or_else(|| Error::Numerical("natural metric is singular".into()))?;
    Ok(alpha.dot(&solved))
}

/// `‖Lᵀ Q^a(gγ) L − Q^a(γ)‖∞` with `L` the packed action Jacobian; zero for
/// an invariant metric. `a = 0` checks `Q` itself.
pub fn pullback_invariance_residual_deformed(
    g: &GroupElement,
    form: &SymmetricForm,
    a: f64,
) -> Result<f64> {
    let moved = act(g, form)?;
    let l = action_jacobian(g);
    let q_moved = deformed_metric(&moved, a)?;
    let q_here = deformed_metric(form, a)?;
    Ok((l.transpose() * q_moved.components * &l - q_here.components).amax())
}

/// `‖Lᵀ Q(gγ) L − Q(γ)‖∞`.
pub fn pullback_invariance_residual(g: &GroupElement, form: &SymmetricForm) -> Result<f64> {
    pullback_invariance_residual_deformed(g, form, 0.0)
}
