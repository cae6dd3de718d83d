//! The GL(V) action on scalar products `gγ = (g⁻¹)ᵀ γ g⁻¹`, orthonormal
//! frames, transitivity witnesses, GL⁺ paths and modular-function checks.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{random_well_conditioned, signature_of, SignatureMethod, SymmetricForm};
use crate::geometry::PackedIndex;
use crate::linalg;

const SINGULAR_DET: f64 = 1e-12;

/// An invertible `n x n` matrix `(gⁱ_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct GroupElement {
    entries: DMatrix<f64>,
}

impl GroupElement {
    pub fn new(entries: DMatrix<f64>) -> Result<Self> {
        let (rows, cols) = entries.shape();
        if rows != cols || rows == 0 {
            return Err(Error::NotSquare { rows, cols });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        let det = entries.clone().determinant();
        if !(det.abs() > SINGULAR_DET) {
            return Err(Error::SingularGroupElement(det.abs()));
        }
        Ok(GroupElement { entries })
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
        GroupElement {
            entries: DMatrix::identity(n, n),
        }
    }

    pub fn diagonal(values: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_row_slice(values)))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn determinant(&self) -> f64 {
        self.entries.clone().determinant()
    }

    pub fn inverse(&self) -> GroupElement {
        // invertibility was checked at construction
        let inv = self
            .entries
            .clone()
            .try_inverse()
            .expect("group element is invertible");
        GroupElement { entries: inv }
    }

    /// Group product `self · other`.
    pub fn compose(&self, other: &GroupElement) -> Result<GroupElement> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        GroupElement::new(&self.entries * &other.entries)
    }
}

impl TryFrom<Vec<Vec<f64>>> for GroupElement {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::NotSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        GroupElement::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
    }
}

impl From<GroupElement> for Vec<Vec<f64>> {
    fn from(g: GroupElement) -> Self {
        let n = g.dim();
        (0..n)
            .map(|i| (0..n).map(|j| g.entries[(i, j)]).collect())
            .collect()
    }
}

/// Random element of GL(n) with entries in `[-1, 1]` and bounded condition
/// number.
pub fn random_group_element<R: Rng + ?Sized>(rng: &mut R, n: usize) -> GroupElement {
    GroupElement {
        entries: random_well_conditioned(rng, n, 1.0),
    }
}

fn check_dims(g: &GroupElement, form: &SymmetricForm) -> Result<()> {
    if g.dim() != form.dim() {
        return Err(Error::DimensionMismatch {
            expected: g.dim(),
            found: form.dim(),
        });
    }
    Ok(())
}

/// The action `gγ := (g⁻¹)ᵀ γ g⁻¹`, i.e. `(gγ)(v, v') = γ(g⁻¹v, g⁻¹v')`.
pub fn act(g: &GroupElement, form: &SymmetricForm) -> Result<SymmetricForm> {
    check_dims(g, form)?;
    let g_inv = g.inverse();
    Ok(congruence(g_inv.entries(), form))
}

/// `Bᵀ γ B`, symmetrized.
pub(crate) fn congruence(b: &DMatrix<f64>, form: &SymmetricForm) -> SymmetricForm {
    let m = b.transpose() * form.entries() * b;
    SymmetricForm::from_symmetric_unchecked(linalg::symmetrize(&m))
}

/// The constant matrix `L` with `packed(act(g, S)) = L · packed(S)`.
///
/// Column `J` is the packed image of the coordinate basis matrix `E_J`.
/// `det L = (det g)^{-(n+1)}`.
pub fn action_jacobian(g: &GroupElement) -> DMatrix<f64> {
    let n = g.dim();
    let index = PackedIndex::new(n);
    let g_inv = g.inverse();
    let mut jac = DMatrix::zeros(index.len(), index.len());
    for (col, pair) in index.pairs().iter().enumerate() {
        let e = SymmetricForm::from_symmetric_unchecked(index.basis_matrix(*pair));
        let image = congruence(g_inv.entries(), &e);
        jac.set_column(col, &index.pack(&image));
    }
    jac
}

/// A basis orthonormal for a given form: `Bᵀ γ B = η = diag(+1.., -1..)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalFrame {
    pub basis: DMatrix<f64>,
    pub eta: SymmetricForm,
}

impl OrthonormalFrame {
    pub fn residual(&self, form: &SymmetricForm) -> f64 {
        (self.basis.transpose() * form.entries() * &self.basis - self.eta.entries()).amax()
    }
}

/// Orthonormal frame from a symmetric eigendecomposition.
///
/// Columns are `u_k / √|d_k|`, positive directions first. Eigenvectors are
/// sign-normalized (largest component positive) and ordered within each sign
/// class by the position of their largest component, so diagonal inputs get
/// diagonal frames.
pub fn orthonormal_basis(form: &SymmetricForm) -> Result<OrthonormalFrame> {
    let n = form.dim();
    let sig = signature_of(form, SignatureMethod::Eigen)?;
    let eig = SymmetricEigen::new(form.entries().clone());

    let mut columns: Vec<(bool, usize, DVector<f64>)> = (0..n)
        .map(|k| {
            let d = eig.eigenvalues[k];
            let mut u = eig.eigenvectors.column(k).into_owned();
            let lead = u.iamax();
            if u[lead] < 0.0 {
                u = -u;
            }
            (d < 0.0, lead, u / d.abs().sqrt())
        })
        .collect();
    columns.sort_by_key(|(negative, lead, _)| (*negative, *lead));

    let basis = DMatrix::from_columns(&columns.into_iter().map(|c| c.2).collect::<Vec<_>>());
    Ok(OrthonormalFrame {
        basis,
        eta: SymmetricForm::standard(sig),
    })
}

/// A group element `g` with `act(g, from) = to`, built from orthonormal
/// frames as `g⁻¹ = B·B'⁻¹`.
///
/// Many such elements exist; this returns the frame-based one. With
/// `positive_det` the first column of `B` is flipped if needed so that
/// `det g > 0`.
pub fn transitive_witness(
    from: &SymmetricForm,
    to: &SymmetricForm,
    positive_det: bool,
) -> Result<GroupElement> {
    if from.dim() != to.dim() {
        return Err(Error::DimensionMismatch {
            expected: from.dim(),
            found: to.dim(),
        });
    }
    let mut frame = orthonormal_basis(from)?;
    let target = orthonormal_basis(to)?;
    if frame.eta != target.eta {
        return Err(Error::SignatureMismatch {
            left: signature_of(from, SignatureMethod::Eigen)?,
            right: signature_of(to, SignatureMethod::Eigen)?,
        });
    }
    let target_inv = target
        .basis
        .clone()
        .try_inverse()
        .ok_or(Error::SingularFrame(0.0))?;
    let mut g_inv = &frame.basis * &target_inv;
    if positive_det && g_inv.determinant() < 0.0 {
        let flipped = -frame.basis.column(0);
        frame.basis.set_column(0, &flipped);
        g_inv = &frame.basis * &target_inv;
    }
    Ok(GroupElement::new(g_inv)?.inverse())
}

/// A path `s ↦ exp(s·log R)·P^s` in GL⁺ from `e` (s = 0) to `g = R·P`
/// (s = 1).
#[derive(Debug, Clone)]
pub struct GlPlusPath {
    rotation_log: DMatrix<f64>,
    positive: DMatrix<f64>,
}

impl GlPlusPath {
    pub fn new(g: &GroupElement) -> Result<Self> {
        if g.determinant() <= 0.0 {
            return Err(Error::InvalidArgument(
                "GL⁺ path requires a positive-determinant endpoint".into(),
            ));
        }
        let (rotation, positive) = linalg::polar_decomposition(g.entries())?;
        Ok(GlPlusPath {
            rotation_log: linalg::rotation_log(&rotation)?,
            positive,
        })
    }

    pub fn at(&self, s: f64) -> Result<DMatrix<f64>> {
        let rot = linalg::expm(&(&self.rotation_log * s));
        Ok(rot * linalg::spd_power(&self.positive, s)?)
    }
}

/// Smooth non-decreasing `[0,1] → [0,1]`, equal to 0 on `[0, ε]` and to 1 on
/// `[1-ε, 1]`, using the quintic smoothstep in between.
pub fn lazy_reparameterization(t: f64, epsilon: f64) -> f64 {
    let u = ((t - epsilon) / (1.0 - 2.0 * epsilon)).clamp(0.0, 1.0);
    u * u * u * (10.0 - 15.0 * u + 6.0 * u * u)
}

/// Samples `ξ(s)·S` for `s = k/(steps-1)` along a GL⁺ path from `e` to the
/// positive-determinant witness carrying `from` to `to`.
pub fn connecting_path(
    from: &SymmetricForm,
    to: &SymmetricForm,
    steps: usize,
) -> Result<Vec<SymmetricForm>> {
    if steps < 2 {
        return Err(Error::InvalidArgument(format!("steps must be >= 2, got {steps}")));
    }
    let g = transitive_witness(from, to, true)?;
    let path = GlPlusPath::new(&g)?;
    (0..steps)
        .map(|k| {
            let s = k as f64 / (steps - 1) as f64;
            let xi = GroupElement::new(path.at(s)?)?;
            act(&xi, from)
        })
        .collect()
}

/// `det` of `X ↦ g X g⁻¹` restricted to the span of `basis`.
///
/// The modular function of the group is `|det Ad(g⁻¹)|`; unimodular groups
/// give `|adjoint_determinant| = 1`.
pub fn adjoint_determinant(g: &GroupElement, basis: &[DMatrix<f64>]) -> Result<f64> {
    let n = g.dim();
    let k = basis.len();
    if k == 0 {
        return Err(Error::InvalidArgument("empty algebra basis".into()));
    }
    if let Some(bad) = basis.iter().find(|x| x.shape() != (n, n)) {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: bad.nrows(),
        });
    }
    let stacked = DMatrix::from_fn(n * n, k, |r, c| basis[c][r]);
    let svd = stacked.clone().svd(true, true);
    let (lo, hi) = (svd.singular_values.min(), svd.singular_values.max());
    if !(lo > 1e-10 * hi) {
        return Err(Error::DependentAlgebraBasis);
    }
    let g_inv = g.inverse();
    let mut ad = DMatrix::zeros(k, k);
    for (col, x) in basis.iter().enumerate() {
        let y = g.entries() * x * g_inv.entries();
        let rhs = DVector::from_iterator(n * n, y.iter().copied());
        let coeffs = svd
            .solve(&rhs, 1e-14)
            .map_err(|e| Error::Numerical(e.to_string()))?;
        let resid = (&stacked * &coeffs - &rhs).amax();
        if resid > 1e-8 * rhs.amax().max(1.0) {
            return Err(Error::NotInvariantSubspace(resid));
        }
        ad.set_column(col, &coeffs);
    }
    Ok(ad.determinant())
}

/// Basis `{η(E_ij - E_ji)}_{i<j}` of the Lie algebra `{A : Aᵀη + ηA = 0}`
/// of the isotropy group of a diagonal ±1 form `η`.
pub fn isotropy_algebra_basis(eta: &SymmetricForm) -> Result<Vec<DMatrix<f64>>> {
    let n = eta.dim();
    for i in 0..n {
        for j in 0..n {
            let v = eta.get(i, j);
            let ok = if i == j { v == 1.0 || v == -1.0 } else { v == 0.0 };
            if !ok {
                return Err(Error::InvalidArgument("eta must be diagonal with ±1 entries".into()));
            }
        }
    }
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            let mut a = DMatrix::zeros(n, n);
            a[(i, j)] = eta.get(i, i);
            a[(j, i)] = -eta.get(j, j);
            out.push(a);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::forms::{random_form_with, Signature};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diag(v: &[f64]) -> SymmetricForm {
        SymmetricForm::diagonal(v).unwrap()
    }

    #[test]
    fn identity_acts_trivially() {
        let s = SymmetricForm::from_row_slice(2, &[2.0, 1.0, 1.0, -1.0]).unwrap();
        assert_eq!(act(&GroupElement::identity(2), &s).unwrap(), s);
    }

    #[test]
    fn diagonal_congruence() {
        let g = GroupElement::diagonal(&[2.0, 1.0]).unwrap();
        let out = act(&g, &SymmetricForm::identity(2)).unwrap();
        assert_eq!(out, diag(&[0.25, 1.0]));
    }

    #[test]
    fn group_law_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for n in 1..=4 {
            for sig in Signature::all_of_dim(n) {
                let s = random_form_with(&mut rng, sig, 1.0).unwrap();
                let g = random_group_element(&mut rng, n);
                let h = random_group_element(&mut rng, n);
                let lhs = act(&h, &act(&g, &s).unwrap()).unwrap();
                let rhs = act(&h.compose(&g).unwrap(), &s).unwrap();
                let rel = (lhs.entries() - rhs.entries()).amax() / lhs.scale();
                assert!(rel < 1e-10, "n={n} rel={rel}");
                assert_eq!(
                    signature_of(&lhs, SignatureMethod::Eigen).unwrap(),
                    sig,
                    "signature preserved"
                );
            }
        }
    }

    #[test]
    fn singular_element_rejected() {
        assert!(matches!(
            GroupElement::from_row_slice(2, &[1.0, 2.0, 2.0, 4.0]),
            Err(Error::SingularGroupElement(_))
        ));
    }

    #[test]
    fn jacobian_scalar_case() {
        let l = action_jacobian(&GroupElement::diagonal(&[2.0]).unwrap());
        assert_eq!(l.shape(), (1, 1));
        assert!((l[(0, 0)] - 0.25).abs() < 1e-15);
        assert_eq!(action_jacobian(&GroupElement::identity(3)), DMatrix::identity(6, 6));
    }

    #[test]
    fn jacobian_is_the_linear_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = random_group_element(&mut rng, 3);
        let l = action_jacobian(&g);
        let index = PackedIndex::new(3);
        let mut worst: f64 = 0.0;
        for _ in 0..20 {
            let s = random_form_with(&mut rng, Signature::new(2, 1), 1.0).unwrap();
            let direct = index.pack(&act(&g, &s).unwrap());
            worst = worst.max((direct - &l * index.pack(&s)).amax());
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn jacobian_determinant_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..=4 {
            for _ in 0..10 {
                let g = random_group_element(&mut rng, n);
                let det_l = action_jacobian(&g).determinant();
                let expected = g.determinant().powi(-(n as i32 + 1));
                assert!(((det_l - expected) / expected).abs() < 1e-8, "n={n}");
            }
        }
    }

    #[test]
    fn orthonormal_frame_of_diagonal() {
        let frame = orthonormal_basis(&diag(&[4.0, -9.0])).unwrap();
        assert!((frame.basis.clone() - DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0 / 3.0])).amax() < 1e-15);
        assert_eq!(frame.eta, diag(&[1.0, -1.0]));

        let id = orthonormal_basis(&SymmetricForm::identity(3)).unwrap();
        assert_eq!(id.basis, DMatrix::identity(3, 3));
    }

    #[test]
    fn orthonormal_frame_residual() {
        let s = crate::forms::random_form(Signature::new(2, 1), 9, 1.0).unwrap();
        let frame = orthonormal_basis(&s).unwrap();
        assert_eq!(frame.eta, diag(&[1.0, 1.0, -1.0]));
        assert!(frame.residual(&s) < 1e-9);
    }

    #[test]
    fn witness_examples() {
        let g = transitive_witness(&SymmetricForm::identity(2), &diag(&[4.0, 1.0]), false).unwrap();
        assert!((g.entries() - DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 1.0])).amax() < 1e-14);
        assert_eq!(act(&g, &SymmetricForm::identity(2)).unwrap(), diag(&[4.0, 1.0]));

        let g = transitive_witness(&diag(&[2.0]), &diag(&[8.0]), false).unwrap();
        assert!((g.entries()[(0, 0)] - 0.5).abs() < 1e-15);

        let s = SymmetricForm::from_row_slice(2, &[2.0, 1.0, 1.0, -1.0]).unwrap();
        let g = transitive_witness(&s, &s, true).unwrap();
        assert!((act(&g, &s).unwrap().entries() - s.entries()).amax() < 1e-9);
        assert!(g.determinant() > 0.0);
    }

    #[test]
    fn witness_signature_mismatch() {
        assert!(matches!(
            transitive_witness(&SymmetricForm::identity(2), &diag(&[1.0, -1.0]), false),
            Err(Error::SignatureMismatch { .. })
        ));
    }

    #[test]
    fn witness_random_positive_det() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..=4 {
            for sig in Signature::all_of_dim(n) {
                let a = random_form_with(&mut rng, sig, 1.0).unwrap();
                let b = random_form_with(&mut rng, sig, 1.0).unwrap();
                let g = transitive_witness(&a, &b, true).unwrap();
                assert!(g.determinant() > 0.0);
                let rel = (act(&g, &a).unwrap().entries() - b.entries()).amax() / b.scale();
                assert!(rel < 1e-9, "{rel}");
            }
        }
    }

    #[test]
    fn path_constant_when_endpoints_equal() {
        let s = SymmetricForm::from_row_slice(2, &[2.0, 1.0, 1.0, -1.0]).unwrap();
        for sample in connecting_path(&s, &s, 5).unwrap() {
            assert!((sample.entries() - s.entries()).amax() < 1e-10);
        }
    }

    #[test]
    fn path_preserves_signature() {
        let path = connecting_path(&SymmetricForm::identity(2), &diag(&[4.0, 1.0]), 50).unwrap();
        assert_eq!(path.len(), 50);
        for s in &path {
            assert_eq!(signature_of(s, SignatureMethod::Eigen).unwrap(), Signature::new(2, 0));
        }
        assert!((path[49].entries() - diag(&[4.0, 1.0]).entries()).amax() < 1e-8);
    }

    #[test]
    fn path_endpoint_lorentzian() {
        let from = diag(&[1.0, -1.0]);
        let to = SymmetricForm::from_row_slice(2, &[2.0, 1.0, 1.0, -1.0]).unwrap();
        let path = connecting_path(&from, &to, 100).unwrap();
        assert!((path[0].entries() - from.entries()).amax() < 1e-8);
        assert!((path[99].entries() - to.entries()).amax() < 1e-8);
        for s in &path {
            assert_eq!(signature_of(s, SignatureMethod::Eigen).unwrap(), Signature::new(1, 1));
        }
    }

    #[test]
    fn lazy_is_flat_at_the_ends() {
        assert_eq!(lazy_reparameterization(0.0, 0.1), 0.0);
        assert_eq!(lazy_reparameterization(0.1, 0.1), 0.0);
        assert_eq!(lazy_reparameterization(0.9, 0.1), 1.0);
        assert_eq!(lazy_reparameterization(1.0, 0.1), 1.0);
        let mut prev = 0.0;
        for k in 0..=100 {
            let v = lazy_reparameterization(k as f64 / 100.0, 0.1);
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn gl_is_unimodular() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let basis: Vec<_> = (0..4)
            .map(|k| {
                let mut m = DMatrix::zeros(2, 2);
                m[(k / 2, k % 2)] = 1.0;
                m
            })
            .collect();
        let g = random_group_element(&mut rng, 2);
        assert!((adjoint_determinant(&g, &basis).unwrap().abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn lorentz_adjoint() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let boost = GroupElement::new(linalg::expm(&(&x * 0.8))).unwrap();
        let det = adjoint_determinant(&boost, std::slice::from_ref(&x)).unwrap();
        assert!((det - 1.0).abs() < 1e-12);

        let reflection = GroupElement::diagonal(&[1.0, -1.0]).unwrap();
        let det = adjoint_determinant(&reflection, std::slice::from_ref(&x)).unwrap();
        assert!((det + 1.0).abs() < 1e-12);
    }

    #[test]
    fn adjoint_outside_span() {
        let x = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let g = GroupElement::diagonal(&[2.0, 1.0]).unwrap();
        assert!(matches!(
            adjoint_determinant(&g, &[x]),
            Err(Error::NotInvariantSubspace(_))
        ));
    }

    #[test]
    fn isotropy_bases() {
        let so2 = isotropy_algebra_basis(&SymmetricForm::identity(2)).unwrap();
        assert_eq!(so2, vec![DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])]);
        let so11 = isotropy_algebra_basis(&diag(&[1.0, -1.0])).unwrap();
        assert_eq!(so11, vec![DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])]);
        assert_eq!(isotropy_algebra_basis(&diag(&[1.0, 1.0, -1.0])).unwrap().len(), 3);
    }

    #[test]
    fn isotropy_exponentials_fix_eta() {
        for eta in [diag(&[1.0, 1.0]), diag(&[1.0, -1.0]), diag(&[1.0, 1.0, -1.0]), diag(&[1.0, -1.0, -1.0, -1.0])] {
            for x in isotropy_algebra_basis(&eta).unwrap() {
                let residual = (x.transpose() * eta.entries() + eta.entries() * &x).amax();
                assert_eq!(residual, 0.0);
                for t in [-1.0, -0.3, 0.3, 1.0] {
                    let h = linalg::expm(&(&x * t));
                    let pulled = h.transpose() * eta.entries() * &h;
                    assert!((pulled - eta.entries()).amax() < 1e-9);
                }
            }
        }
    }
}
