//! Measure fields over a finite set of manifold points.
//!
//! Each point `x` carries a frame `l_x : T_xM → T_{x₀}M`; the measure on the
//! fiber `Γ_x` is the pushforward `l*_{x⋆} dμ_{x₀}` of a base invariant
//! measure along the pullback `l*_x : Γ_{x₀} → Γ_x`. The smooth structure of
//! the manifold only enters through these linear maps and through tangent
//! maps of diffeomorphisms, so a sampled point set carries everything the
//! checks below need.

use std::collections::{BTreeMap, HashMap};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forms::{signature_of, Signature, SignatureMethod, SymmetricForm};
use crate::group::{
    act, action_jacobian, congruence, lazy_reparameterization, transitive_witness, GlPlusPath,
    GroupElement,
};
use crate::measure::{density, DensityValue};

pub type PointId = u64;

/// Flat-end width of the lazy reparameterization used by
/// [`deform_metric_field`].
pub const LAZY_EPSILON: f64 = 0.1;

const SINGULAR_FRAME: f64 = 1e-12;

/// A linear isomorphism `l_x : T_xM → T_{x₀}M` attached to a point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointChart {
    pub point_id: PointId,
    frame: GroupElement,
}

impl PointChart {
    pub fn new(point_id: PointId, frame: DMatrix<f64>) -> Result<Self> {
        let frame = GroupElement::new(frame).map_err(|e| match e {
            Error::SingularGroupElement(d) => Error::SingularFrame(d),
            other => other,
        })?;
        if frame.determinant().abs() <= SINGULAR_FRAME {
            return Err(Error::SingularFrame(frame.determinant().abs()));
        }
        Ok(PointChart { point_id, frame })
    }

    pub fn identity(point_id: PointId, n: usize) -> Self {
        PointChart {
            point_id,
            frame: GroupElement::identity(n),
        }
    }

    pub fn frame(&self) -> &DMatrix<f64> {
        self.frame.entries()
    }
}

/// The natural invariant density `√|det Q_IJ|`, as a base density.
pub fn natural_density(form: &SymmetricForm) -> Result<f64> {
    Ok(density(form)?.value)
}

/// Density at `γ ∈ Γ_V` of the pushforward of a measure on `Γ_W` along the
/// pullback `l* : Γ_W → Γ_V`, `γ ↦ lᵀγl`, for `l : V → W`.
///
/// The preimage of `γ` is `l⁻ᵀγl⁻¹ = act(l, γ)` and the inverse coordinate
/// map has constant Jacobian `action_jacobian(l)`.
pub fn pushforward_density<B>(frame: &DMatrix<f64>, base: B, form: &SymmetricForm) -> Result<f64>
where
    B: Fn(&SymmetricForm) -> Result<f64>,
{
    let l = GroupElement::new(frame.clone()).map_err(|_| Error::SingularFrame(frame.determinant().abs()))?;
    let preimage = act(&l, form)?;
    Ok(base(&preimage)? * action_jacobian(&l).determinant().abs())
}

/// Density of the field measure `l*_{x⋆} dμ_{x₀}` at `form ∈ Γ_x`.
pub fn field_density_at<B>(chart: &PointChart, form: &SymmetricForm, base: B) -> Result<DensityValue>
where
    B: Fn(&SymmetricForm) -> Result<f64>,
{
    Ok(DensityValue {
        value: pushforward_density(chart.frame(), base, form)?,
        at: form.clone(),
    })
}

fn relative_gap(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// Largest relative difference between the field densities built through
/// two different frames of the same tangent space.
pub fn frame_independence_residual<B>(
    l: &PointChart,
    l_prime: &PointChart,
    sample_forms: &[SymmetricForm],
    base: B,
) -> Result<f64>
where
    B: Fn(&SymmetricForm) -> Result<f64>,
{
    sample_forms.iter().try_fold(0.0f64, |worst, form| {
        let a = field_density_at(l, form, &base)?.value;
        let b = field_density_at(l_prime, form, &base)?.value;
        Ok(worst.max(relative_gap(a, b)))
    })
}

/// For `l₁ : V₁ → V₀` and `l : V₂ → V₁`, compares the measure built through
/// `l₂ = l₁∘l` with the one obtained by first building `l₁*⋆dμ` and then
/// pushing it along `l*`. Returns the largest relative difference over the
/// sample forms (forms on `V₂`).
pub fn composition_residual<B>(
    l1: &DMatrix<f64>,
    l: &DMatrix<f64>,
    sample_forms: &[SymmetricForm],
    base: B,
) -> Result<f64>
where
    B: Fn(&SymmetricForm) -> Result<f64>,
{
    let l2 = l1 * l;
    let on_v1 = |g: &SymmetricForm| pushforward_density(l1, &base, g);
    sample_forms.iter().try_fold(0.0f64, |worst, form| {
        let direct = pushforward_density(&l2, &base, form)?;
        let staged = pushforward_density(l, on_v1, form)?;
        Ok(worst.max(relative_gap(direct, staged)))
    })
}

/// A sampled diffeomorphism: each point `y` maps to `χ(y)` with tangent map
/// `Tχ_y : T_yM → T_{χ(y)}M`.
#[derive(Debug, Clone, Default)]
pub struct DiffeoJacobianField {
    maps: BTreeMap<PointId, (PointId, GroupElement)>,
}

impl DiffeoJacobianField {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, from: PointId, to: PointId, jacobian: DMatrix<f64>) -> Result<()> {
        let jac = GroupElement::new(jacobian).map_err(|e| match e {
            Error::SingularGroupElement(d) => Error::SingularFrame(d),
            other => other,
        })?;
        self.maps.insert(from, (to, jac));
        Ok(())
    }

    pub fn identity(points: impl IntoIterator<Item = PointId>, n: usize) -> Self {
        DiffeoJacobianField {
            maps: points
                .into_iter()
                .map(|p| (p, (p, GroupElement::identity(n))))
                .collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (PointId, PointId, &DMatrix<f64>)> {
        self.maps.iter().map(|(&y, (x, j))| (y, *x, j.entries()))
    }
}

/// Largest relative difference between `(χdμ)` and `dμ` over the sampled
/// points: for each `y` with `x = χ(y)`, the field measure on `Γ_x` pushed
/// along `Tχ* : Γ_x → Γ_y` is compared with the field measure on `Γ_y`.
pub fn diffeo_invariance_residual<B>(
    field: &BTreeMap<PointId, PointChart>,
    chi: &DiffeoJacobianField,
    sample_forms: &[SymmetricForm],
    base: B,
) -> Result<f64>
where
    B: Fn(&SymmetricForm) -> Result<f64>,
{
    let mut worst = 0.0f64;
    for (y, x, tangent) in chi.iter() {
        let chart_y = field.get(&y).ok_or(Error::PointNotInField(y))?;
        let chart_x = field.get(&x).ok_or(Error::PointNotInField(x))?;
        let at_x = |g: &SymmetricForm| Ok(field_density_at(chart_x, g, &base)?.value);
        for form in sample_forms {
            let transformed = pushforward_density(tangent, at_x, form)?;
            let original = field_density_at(chart_y, form, &base)?.value;
            worst = worst.max(relative_gap(transformed, original));
        }
    }
    Ok(worst)
}

/// One sample of a metric field on a coordinate patch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub id: PointId,
    pub y: Vec<f64>,
    pub q: SymmetricForm,
}

impl GridPoint {
    pub fn r2(&self) -> f64 {
        self.y.iter().map(|v| v * v).sum()
    }
}

/// A metric field sampled on a rectangular lattice of coordinate points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricFieldGrid {
    pub dim: usize,
    pub signature: Signature,
    pub spacing: f64,
    pub points: Vec<GridPoint>,
}

impl MetricFieldGrid {
    /// Lattice `{k·h : |k·h| ≤ extent}^dim` with ids in lexicographic order of
    /// the lattice indices, sampling `metric(y)` at every point.
    pub fn lattice<F>(dim: usize, spacing: f64, extent: f64, signature: Signature, metric: F) -> Result<Self>
    where
        F: Fn(&[f64]) -> SymmetricForm,
    {
        if dim == 0 || !(spacing > 0.0) || !(extent >= 0.0) {
            return Err(Error::InvalidGrid(format!(
                "dim {dim}, spacing {spacing}, extent {extent}"
            )));
        }
        let half = (extent / spacing + 1e-9).floor() as i64;
        let side = (2 * half + 1) as usize;
        let total = side.pow(dim as u32);
        let mut points = Vec::with_capacity(total);
        for flat in 0..total {
            let mut rem = flat;
            let mut y = vec![0.0; dim];
            for slot in y.iter_mut().rev() {
                let k = (rem % side) as i64 - half;
                rem /= side;
                *slot = k as f64 * spacing;
            }
            let q = metric(&y);
            points.push(GridPoint {
                id: flat as PointId,
                y,
                q,
            });
        }
        let grid = MetricFieldGrid {
            dim,
            signature,
            spacing,
            points,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if self.signature.dim() != self.dim {
            return Err(Error::InvalidGrid(format!(
                "signature {} does not match dimension {}",
                self.signature, self.dim
            )));
        }
        for p in &self.points {
            if p.y.len() != self.dim || p.q.dim() != self.dim {
                return Err(Error::InvalidGrid(format!("point {} has wrong dimension", p.id)));
            }
            let sig = signature_of(&p.q, SignatureMethod::Eigen)?;
            if sig != self.signature {
                return Err(Error::SignatureMismatch {
                    left: self.signature,
                    right: sig,
                });
            }
        }
        Ok(())
    }

    pub fn point(&self, id: PointId) -> Option<&GridPoint> {
        self.points.iter().find(|p| p.id == id)
    }

    /// Id of the point with coordinates `y = 0`, if present.
    pub fn origin(&self) -> Option<PointId> {
        self.points
            .iter()
            .find(|p| p.y.iter().all(|v| v.abs() < 1e-12))
            .map(|p| p.id)
    }
}

/// [`deform_metric_field_with`] with the default flat-end width
/// [`LAZY_EPSILON`].
pub fn deform_metric_field(
    grid: &MetricFieldGrid,
    center_id: PointId,
    target: &SymmetricForm,
) -> Result<MetricFieldGrid> {
    deform_metric_field_with(grid, center_id, target, LAZY_EPSILON)
}

/// Deforms the field so that its value at the center becomes `target`.
///
/// A positive-determinant `k` with `kᵀ q_center k = target` is joined to the
/// identity by the lazy curve `ζ̃(t) = ξ(1 − f(t))`, `ξ` the polar GL⁺ path
/// from `e` to `k` and `f` the flat-ended reparameterization. Points with
/// `r² ≤ 1` get `ζ̃(r²)ᵀ q ζ̃(r²)`; all others are copied unchanged.
pub fn deform_metric_field_with(
    grid: &MetricFieldGrid,
    center_id: PointId,
    target: &SymmetricForm,
    epsilon: f64,
) -> Result<MetricFieldGrid> {
    if !(0.0..0.5).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in [0, 1/2), got {epsilon}")));
    }
    let center = grid.point(center_id).ok_or(Error::PointNotInField(center_id))?;
    if center.y.iter().any(|v| v.abs() > 1e-12) {
        return Err(Error::InvalidGrid(format!(
            "center point {center_id} is not at y = 0"
        )));
    }
    if target.dim() != grid.dim {
        return Err(Error::DimensionMismatch {
            expected: grid.dim,
            found: target.dim(),
        });
    }
    let target_sig = signature_of(target, SignatureMethod::Eigen)?;
    if target_sig != grid.signature {
        return Err(Error::SignatureMismatch {
            left: grid.signature,
            right: target_sig,
        });
    }
    if !grid.points.iter().any(|p| p.r2() >= 1.0) {
        return Err(Error::GridTooCoarse);
    }

    // act(w, q_c) = target means w⁻ᵀ q_c w⁻¹ = target
    let witness = transitive_witness(&center.q, target, true)?;
    let path = GlPlusPath::new(&witness.inverse())?;

    let points = grid
        .points
        .par_iter()
        .map(|p| {
            let r2 = p.r2();
            let s = if r2 > 1.0 { 0.0 } else { 1.0 - lazy_reparameterization(r2, epsilon) };
            // the flat end of the lazy curve is exactly the identity
            if s == 0.0 {
                return Ok(p.clone());
            }
            let zeta = path.at(s)?;
            let q = congruence(&zeta, &p.q);
            let sig = signature_of(&q, SignatureMethod::Eigen)?;
            if sig != grid.signature {
                return Err(Error::Numerical(format!(
                    "deformation changed the signature at point {}",
                    p.id
                )));
            }
            Ok(GridPoint {
                id: p.id,
                y: p.y.clone(),
                q,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(MetricFieldGrid {
        dim: grid.dim,
        signature: grid.signature,
        spacing: grid.spacing,
        points,
    })
}

/// First-difference comparison across the `r² = 1` seam of a deformed grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeamReport {
    /// Largest `‖q_a − q_b‖∞ / h` over axis neighbours straddling `r² = 1`.
    pub seam_quotient: f64,
    /// The same over neighbours strictly inside the unit ball.
    pub interior_quotient: f64,
}

impl SeamReport {
    /// Seam quotient at most ten times the interior quotient.
    pub fn is_smooth(&self) -> bool {
        self.seam_quotient <= 10.0 * self.interior_quotient + 1e-12
    }
}

pub fn seam_report(grid: &MetricFieldGrid) -> SeamReport {
    let h = grid.spacing;
    let key = |y: &[f64]| -> Vec<i64> { y.iter().map(|v| (v / h).round() as i64).collect() };
    let lookup: HashMap<Vec<i64>, &GridPoint> =
        grid.points.iter().map(|p| (key(&p.y), p)).collect();

    let mut seam = 0.0f64;
    let mut interior = 0.0f64;
    for p in &grid.points {
        let base = key(&p.y);
        for axis in 0..grid.dim {
            let mut next = base.clone();
            next[axis] += 1;
            let Some(nb) = lookup.get(&next) else { continue };
            let quotient = (p.q.entries() - nb.q.entries()).amax() / h;
            let (ra, rb) = (p.r2(), nb.r2());
            if (ra <= 1.0) != (rb <= 1.0) {
                seam = seam.max(quotient);
            } else if ra < 1.0 && rb < 1.0 {
                interior = interior.max(quotient);
            }
        }
    }
    SeamReport {
        seam_quotient: seam,
        interior_quotient: interior,
    }
}
