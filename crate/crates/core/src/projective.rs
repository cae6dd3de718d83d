//! Finite stages of a projective family of Hilbert spaces.
//!
//! A label is a finite set of points. Its Hilbert space is the tensor product
//! of per-point factors in ascending id order. For `λ ⊆ λ′` the factorization
//! `Φ : H_{λ′} → H_{λ′∖λ} ⊗ H_λ` is the slot permutation induced by that
//! order. Observables embed as `Φ⁻¹(1 ⊗ a)Φ`, and states restrict by the
//! partial trace over `λ′∖λ`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::PointId;
use crate::quadrature::C64;

const HERMITIAN_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;
const TRACE_TOL: f64 = 1e-10;
const UNIT_NORM_TOL: f64 = 1e-10;

/// A finite, sorted set of point ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
#[serde(from = "Vec<PointId>", into = "Vec<PointId>")]
pub struct Label(Vec<PointId>);

impl From<Vec<PointId>> for Label {
    fn from(mut ids: Vec<PointId>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        Label(ids)
    }
}

impl From<Label> for Vec<PointId> {
    fn from(l: Label) -> Self {
        l.0
    }
}

impl FromIterator<PointId> for Label {
    fn from_iter<I: IntoIterator<Item = PointId>>(iter: I) -> Self {
        Label::from(iter.into_iter().collect::<Vec<_>>())
    }
}

impl Label {
    pub fn new(ids: impl IntoIterator<Item = PointId>) -> Self {
        ids.into_iter().collect()
    }

    pub fn points(&self) -> &[PointId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `other ⊆ self`, i.e. `self ≥ other`.
    pub fn contains(&self, other: &Label) -> bool {
        other.0.iter().all(|p| self.0.binary_search(p).is_ok())
    }

    pub fn join(&self, other: &Label) -> Label {
        self.0.iter().chain(&other.0).copied().collect()
    }

    /// `self ∖ other`.
    pub fn difference(&self, other: &Label) -> Label {
        Label(
            self.0
                .iter()
                .copied()
                .filter(|p| other.0.binary_search(p).is_err())
                .collect(),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelOrder {
    Less,
    Greater,
    Equal,
    Incomparable,
}

pub fn compare_labels(a: &Label, b: &Label) -> LabelOrder {
    match (b.contains(a), a.contains(b)) {
        (true, true) => LabelOrder::Equal,
        (true, false) => LabelOrder::Less,
        (false, true) => LabelOrder::Greater,
        (false, false) => LabelOrder::Incomparable,
    }
}

pub fn join(a: &Label, b: &Label) -> Label {
    a.join(b)
}

/// `H_λ = ⊗_{x ∈ λ} H_x` with factors in ascending id order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpace {
    factors: Vec<(PointId, usize)>,
}

impl TensorSpace {
    pub fn new(factors: impl IntoIterator<Item = (PointId, usize)>) -> Result<Self> {
        let mut factors: Vec<_> = factors.into_iter().collect();
        factors.sort_unstable();
        if factors.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument("repeated point in tensor space".into()));
        }
        if factors.iter().any(|&(_, d)| d == 0) {
            return Err(Error::InvalidArgument("factor of dimension 0".into()));
        }
        Ok(TensorSpace { factors })
    }

    /// Every point of `label` with the same factor dimension `d`.
    pub fn uniform(label: &Label, d: usize) -> Result<Self> {
        Self::new(label.points().iter().map(|&p| (p, d)))
    }

    pub fn factors(&self) -> &[(PointId, usize)] {
        &self.factors
    }

    pub fn label(&self) -> Label {
        Label(self.factors.iter().map(|f| f.0).collect())
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.1).product()
    }

    /// The factors belonging to `label`.
    pub fn sub(&self, label: &Label) -> Result<TensorSpace> {
        if !self.label().contains(label) {
            return Err(Error::LabelNotContained);
        }
        Ok(TensorSpace {
            factors: self
                .factors
                .iter()
                .copied()
                .filter(|(p, _)| label.points().binary_search(p).is_ok())
                .collect(),
        })
    }

    /// `H_{λ′∖λ}` for `λ′` = self.
    pub fn complement(&self, label: &Label) -> Result<TensorSpace> {
        self.sub(&self.label().difference(label))
    }

    /// For each basis index of this space, its index in `H_sub` and in the
    /// complement. The first factor is the most significant digit.
    fn split_indices(&self, sub: &TensorSpace) -> Result<Vec<(usize, usize)>> {
        let sub_label = sub.label();
        if self.sub(&sub_label)? != *sub {
            return Err(Error::DimensionMismatch {
                expected: self.sub(&sub_label)?.dim(),
                found: sub.dim(),
            });
        }
        let in_sub: Vec<bool> = self
            .factors
            .iter()
            .map(|(p, _)| sub_label.points().binary_search(p).is_ok())
            .collect();
        let total = self.dim();
        let mut out = Vec::with_capacity(total);
        let mut digits = vec![0usize; self.factors.len()];
        for _ in 0..total {
            let (mut s, mut r) = (0, 0);
            for (k, &(_, d)) in self.factors.iter().enumerate() {
                if in_sub[k] {
                    s = s * d + digits[k];
                } else {
                    r = r * d + digits[k];
                }
            }
            out.push((s, r));
            for k in (0..digits.len()).rev() {
                digits[k] += 1;
                if digits[k] < self.factors[k].1 {
                    break;
                }
                digits[k] = 0;
            }
        }
        Ok(out)
    }
}

/// The slot permutation `Φ : H_{λ′} → H_{λ′∖λ} ⊗ H_λ`.
pub fn factorization_map(space: &TensorSpace, label: &Label) -> Result<DMatrix<C64>> {
    let sub = space.sub(label)?;
    let d_sub = sub.dim();
    let split = space.split_indices(&sub)?;
    let mut phi = DMatrix::zeros(space.dim(), space.dim());
    for (i, &(s, r)) in split.iter().enumerate() {
        phi[(r * d_sub + s, i)] = C64::new(1.0, 0.0);
    }
    Ok(phi)
}

fn check_finite(m: &DMatrix<C64>) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

fn check_shape(space: &TensorSpace, m: &DMatrix<C64>) -> Result<()> {
    let d = space.dim();
    if m.nrows() != d || m.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: m.nrows().max(m.ncols()),
        });
    }
    Ok(())
}

/// A bounded operator on `H_λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable {
    pub space: TensorSpace,
    pub matrix: DMatrix<C64>,
}

impl Observable {
    pub fn new(space: TensorSpace, matrix: DMatrix<C64>) -> Result<Self> {
        check_shape(&space, &matrix)?;
        check_finite(&matrix)?;
        Ok(Observable { space, matrix })
    }

    pub fn identity(space: TensorSpace) -> Self {
        let d = space.dim();
        Observable {
            space,
            matrix: DMatrix::identity(d, d),
        }
    }

    pub fn adjoint(&self) -> Observable {
        Observable {
            space: self.space.clone(),
            matrix: self.matrix.adjoint(),
        }
    }

    pub fn compose(&self, other: &Observable) -> Result<Observable> {
        if self.space != other.space {
            return Err(Error::InvalidArgument("observables live on different spaces".into()));
        }
        Ok(Observable {
            space: self.space.clone(),
            matrix: &self.matrix * &other.matrix,
        })
    }
}

/// A density matrix on `H_λ`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateDensity {
    pub space: TensorSpace,
    pub matrix: DMatrix<C64>,
}

impl StateDensity {
    pub fn new(space: TensorSpace, matrix: DMatrix<C64>) -> Result<Self> {
        check_shape(&space, &matrix)?;
        check_finite(&matrix)?;
        let asym = (&matrix - matrix.adjoint()).camax();
        if asym > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not hermitian ({asym:e})")));
        }
        let trace = matrix.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {trace} is not 1")));
        }
        let lo = matrix.clone().symmetric_eigen().eigenvalues.min();
        if lo < -PSD_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {lo:e}")));
        }
        Ok(StateDensity { space, matrix })
    }

    /// `|v⟩⟨v|` for a unit vector `v`.
    pub fn pure(space: TensorSpace, v: &DVector<C64>) -> Result<Self> {
        check_unit(v)?;
        if v.len() != space.dim() {
            return Err(Error::DimensionMismatch {
                expected: space.dim(),
                found: v.len(),
            });
        }
        Ok(StateDensity {
            space,
            matrix: v * v.adjoint(),
        })
    }

    /// `tr(ρ a)`.
    pub fn expectation(&self, a: &Observable) -> Result<C64> {
        if self.space != a.space {
            return Err(Error::InvalidArgument("state and observable live on different spaces".into()));
        }
        Ok((&self.matrix * &a.matrix).trace())
    }
}

fn check_unit(v: &DVector<C64>) -> Result<()> {
    let norm = v.norm();
    if (norm - 1.0).abs() > UNIT_NORM_TOL {
        return Err(Error::InvalidState(format!("vector norm {norm} is not 1")));
    }
    Ok(())
}

/// `ι_{λ′λ}(a)`: identity on the factors of `λ′∖λ`, `a` on those of `λ`.
pub fn embed_observable(a: &Observable, target: &TensorSpace) -> Result<Observable> {
    let split = target.split_indices(&a.space)?;
    let d = target.dim();
    let mut m = DMatrix::zeros(d, d);
    for (i, &(si, ri)) in split.iter().enumerate() {
        for (j, &(sj, rj)) in split.iter().enumerate() {
            if ri == rj {
                m[(i, j)] = a.matrix[(si, sj)];
            }
        }
    }
    Ok(Observable {
        space: target.clone(),
        matrix: m,
    })
}

/// The same embedding written as `Φ⁻¹ ∘ (1 ⊗ a) ∘ Φ`.
pub fn embed_via_factorization(a: &Observable, target: &TensorSpace) -> Result<Observable> {
    let label = a.space.label();
    if target.sub(&label)? != a.space {
        return Err(Error::DimensionMismatch {
            expected: target.sub(&label)?.dim(),
            found: a.space.dim(),
        });
    }
    let phi = factorization_map(target, &label)?;
    let rest = target.complement(&label)?.dim();
    let lifted = DMatrix::<C64>::identity(rest, rest).kronecker(&a.matrix);
    Ok(Observable {
        space: target.clone(),
        matrix: phi.transpose() * lifted * phi,
    })
}

/// `π_{λλ′}(ρ)`: partial trace over the factors of `λ′∖λ`.
pub fn restrict_state(rho: &StateDensity, label: &Label) -> Result<StateDensity> {
    let sub = rho.space.sub(label)?;
    let split = rho.space.split_indices(&sub)?;
    let d = sub.dim();
    let mut m = DMatrix::zeros(d, d);
    for (i, &(si, ri)) in split.iter().enumerate() {
        for (j, &(sj, rj)) in split.iter().enumerate() {
            if ri == rj {
                m[(si, sj)] += rho.matrix[(i, j)];
            }
        }
    }
    Ok(StateDensity {
        space: sub,
        matrix: m,
    })
}

/// A state on `λ′` restricting to `rho`: `Φ⁻¹(σ ⊗ ρ)Φ` for a state `σ` on
/// `λ′∖λ`.
pub fn extend_state(rho: &StateDensity, sigma: &StateDensity) -> Result<StateDensity> {
    let (a, b) = (rho.space.label(), sigma.space.label());
    if a.difference(&b) != a {
        return Err(Error::InvalidArgument("state labels overlap".into()));
    }
    let space = TensorSpace::new(
        rho.space
            .factors()
            .iter()
            .chain(sigma.space.factors())
            .copied(),
    )?;
    let phi = factorization_map(&space, &a)?;
    let product = sigma.matrix.kronecker(&rho.matrix);
    Ok(StateDensity {
        space,
        matrix: phi.transpose() * product * phi,
    })
}

/// Unit vectors `x ↦ Ψ_x` in the per-point factor spaces.
///
/// In the L² picture `Ψ_x` holds coefficients with respect to an orthonormal
/// family built by `gram_schmidt_basis`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StateField {
    vectors: BTreeMap<PointId, DVector<C64>>,
}

impl StateField {
    pub fn new(vectors: BTreeMap<PointId, DVector<C64>>) -> Result<Self> {
        for v in vectors.values() {
            check_unit(v)?;
        }
        Ok(StateField { vectors })
    }

    pub fn get(&self, id: PointId) -> Option<&DVector<C64>> {
        self.vectors.get(&id)
    }

    pub fn space(&self, label: &Label) -> Result<TensorSpace> {
        TensorSpace::new(
            label
                .points()
                .iter()
                .map(|&p| Ok((p, self.vectors.get(&p).ok_or(Error::MissingPoint(p))?.len())))
                .collect::<Result<Vec<_>>>()?,
        )
    }

    /// `Ψ_λ = Ψ_{x₁} ⊗ … ⊗ Ψ_{x_N}` in ascending id order.
    pub fn product_vector(&self, label: &Label) -> Result<DVector<C64>> {
        label.points().iter().try_fold(
            DVector::from_element(1, C64::new(1.0, 0.0)),
            |acc, &p| {
                let v = self.vectors.get(&p).ok_or(Error::MissingPoint(p))?;
                Ok(acc.kronecker(v))
            },
        )
    }
}

/// `λ ↦ s_λ = |Ψ_λ⟩⟨Ψ_λ|` for each label.
pub fn pure_state_net(field: &StateField, labels: &[Label]) -> Result<BTreeMap<Label, StateDensity>> {
    labels
        .iter()
        .map(|l| {
            let v = field.product_vector(l)?;
            Ok((l.clone(), StateDensity::pure(field.space(l)?, &v)?))
        })
        .collect()
}

/// Largest singular value.
pub fn operator_norm(m: &DMatrix<C64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.singular_values().max()
}

/// Residuals of `ι` being a unital, multiplicative, `*`-preserving isometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HomomorphismReport {
    pub unital: f64,
    pub multiplicative: f64,
    pub star: f64,
    pub isometry: f64,
}

impl HomomorphismReport {
    pub fn worst(&self) -> f64 {
        self.unital.max(self.multiplicative).max(self.star).max(self.isometry)
    }
}

pub fn homomorphism_residuals(a: &Observable, b: &Observable, target: &TensorSpace) -> Result<HomomorphismReport> {
    let ia = embed_observable(a, target)?;
    let ib = embed_observable(b, target)?;
    let one = embed_observable(&Observable::identity(a.space.clone()), target)?;
    let ab = embed_observable(&a.compose(b)?, target)?;
    let star = embed_observable(&a.adjoint(), target)?;
    let norm_a = operator_norm(&a.matrix);
    Ok(HomomorphismReport {
        unital: (one.matrix - DMatrix::identity(target.dim(), target.dim())).camax(),
        multiplicative: (ab.matrix - &ia.matrix * &ib.matrix).camax(),
        star: (star.matrix - ia.matrix.adjoint()).camax(),
        isometry: (operator_norm(&ia.matrix) - norm_a).abs() / norm_a.max(1.0),
    })
}

/// `|tr(π(ρ) a) − tr(ρ ι(a))|`.
pub fn duality_residual(rho: &StateDensity, a: &Observable) -> Result<f64> {
    let restricted = restrict_state(rho, &a.space.label())?;
    let embedded = embed_observable(a, &rho.space)?;
    Ok((restricted.expectation(a)? - rho.expectation(&embedded)?).norm())
}

/// Largest entry of `π_{λλ″}(ρ) − π_{λλ′}(π_{λ′λ″}(ρ))`.
pub fn tower_residual(rho: &StateDensity, middle: &Label, bottom: &Label) -> Result<f64> {
    if !middle.contains(bottom) {
        return Err(Error::LabelNotContained);
    }
    let direct = restrict_state(rho, bottom)?;
    let staged = restrict_state(&restrict_state(rho, middle)?, bottom)?;
    Ok((direct.matrix - staged.matrix).camax())
}

/// `U_λ = c^{−#λ/2}`.
pub fn rescale_factor(c: f64, count: usize) -> f64 {
    c.powf(-(count as f64) / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RescaleReport {
    /// `‖u_{λ′} ∘ ι ∘ u_λ⁻¹ (a) − ι(a)‖∞`.
    pub intertwining: f64,
    /// `|c^{−#λ′/2} − c^{−#(λ′∖λ)/2}·c^{−#λ/2}|` relative to the left side.
    pub factorization: f64,
    /// `‖U_{λ′} − Φ⁻¹(U_{λ′∖λ} ⊗ U_λ)Φ‖∞` as matrices.
    pub operator_factorization: f64,
}

impl RescaleReport {
    pub fn worst(&self) -> f64 {
        self.intertwining.max(self.factorization).max(self.operator_factorization)
    }
}

/// Checks that rescaling every fiber measure by `c` induces maps
/// `U_λ(Ψ) = c^{−#λ/2}Ψ` compatible with the embeddings.
pub fn rescale_isomorphism_check(c: f64, a: &Observable, target: &TensorSpace) -> Result<RescaleReport> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("rescale constant must be positive, got {c}")));
    }
    let label = a.space.label();
    let rest = target.complement(&label)?;
    let (n_small, n_big, n_rest) = (label.len(), target.factors().len(), rest.factors().len());
    let u = |space: &TensorSpace, count: usize| -> DMatrix<C64> {
        DMatrix::<C64>::identity(space.dim(), space.dim()) * C64::new(rescale_factor(c, count), 0.0)
    };
    let u_small = u(&a.space, n_small);
    let u_big = u(target, n_big);
    let u_rest = u(&rest, n_rest);

    // u_λ⁻¹(a) = U_λ⁻¹ a U_λ
    let pulled = Observable::new(
        a.space.clone(),
        diag_inverse(&u_small) * &a.matrix * &u_small,
    )?;
    let embedded = embed_observable(&pulled, target)?;
    let conjugated = &u_big * embedded.matrix * diag_inverse(&u_big);
    let reference = embed_observable(a, target)?;

    let lhs = rescale_factor(c, n_big);
    let rhs = rescale_factor(c, n_rest) * rescale_factor(c, n_small);
    let phi = factorization_map(target, &label)?;
    let factored = phi.transpose() * u_rest.kronecker(&u_small) * &phi;

    Ok(RescaleReport {
        intertwining: (conjugated - reference.matrix).camax(),
        factorization: (lhs - rhs).abs() / lhs,
        operator_factorization: (u_big - factored).camax(),
    })
}

fn diag_inverse(m: &DMatrix<C64>) -> DMatrix<C64> {
    DMatrix::from_diagonal(&m.diagonal().map(|z| C64::new(1.0, 0.0) / z))
}

fn random_c64<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    C64::new(rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0))
}

pub fn random_observable<R: Rng + ?Sized>(rng: &mut R, space: &TensorSpace) -> Observable {
    let d = space.dim();
    Observable {
        space: space.clone(),
        matrix: DMatrix::from_fn(d, d, |_, _| random_c64(rng)),
    }
}

/// `A A† / tr(A A†)` for a random complex `A`.
pub fn random_state<R: Rng + ?Sized>(rng: &mut R, space: &TensorSpace) -> StateDensity {
    let d = space.dim();
    let a = DMatrix::from_fn(d, d, |_, _| random_c64(rng));
    let m = &a * a.adjoint();
    let tr = m.trace();
    let mut matrix = m / tr;
    // exact hermiticity after the division
    matrix = (&matrix + matrix.adjoint()) * C64::new(0.5, 0.0);
    StateDensity {
        space: space.clone(),
        matrix,
    }
}

pub fn random_unit_vector<R: Rng + ?Sized>(rng: &mut R, d: usize) -> DVector<C64> {
    loop {
        let v = DVector::from_fn(d, |_, _| random_c64(rng));
        let n = v.norm();
        if n > 1e-3 {
            return v / C64::new(n, 0.0);
        }
    }
}

pub fn random_state_field<R: Rng + ?Sized>(rng: &mut R, factors: &[(PointId, usize)]) -> StateField {
    StateField {
        vectors: factors
            .iter()
            .map(|&(p, d)| (p, random_unit_vector(rng, d)))
            .collect(),
    }
}
