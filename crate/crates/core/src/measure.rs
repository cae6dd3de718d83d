//! The invariant measure `dμ = √|det Q_IJ| dγ¹…dγ^N` on a space of scalar
//! products, closed forms for `n ≤ 2`, and Monte-Carlo integration over
//! coordinate boxes.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use twofloat::TwoFloat;

use crate::error::{Error, Result};
use crate::forms::{
    check_nondegenerate, inverse_form, signature_of, Signature, SignatureMethod, SymmetricForm,
    DEGENERACY_TOL,
};
use crate::geometry::PackedIndex;
use crate::group::{act, action_jacobian, GroupElement};
use crate::linalg::{dd_determinant, dd_inverse, DdMatrix};

/// Samples drawn per RNG substream; fixed so results do not depend on the
/// worker count.
pub const MC_CHUNK: usize = 4096;

/// Smallest sample count accepted by [`mc_integrate`].
pub const MIN_SAMPLES: usize = 1000;

/// Density of the invariant measure at a point, with respect to the packed
/// coordinate Lebesgue measure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityValue {
    pub value: f64,
    pub at: SymmetricForm,
}

/// `√|det Q_IJ(γ)|`.
///
/// `γ⁻¹`, `Q` and its determinant are evaluated in double-double arithmetic.
/// In f64 the inversion and the N×N elimination each amplify the rounding of
/// `det γ` by roughly its cancellation factor, which loses up to eight digits
/// for forms with condition number in the thousands.
pub fn density(form: &SymmetricForm) -> Result<DensityValue> {
    check_nondegenerate(&form.eigenvalues(), form.scale(), DEGENERACY_TOL)?;
    let inv = dd_inverse(form.entries()).ok_or_else(|| Error::Numerical("matrix inversion failed".into()))?;
    let index = PackedIndex::new(form.dim());
    // E_(i,j) = e_i e_jᵀ + e_j e_iᵀ, and tr(A e_i e_jᵀ A e_k e_lᵀ) = A_jk A_li
    let terms: Vec<Vec<(usize, usize)>> = index
        .pairs()
        .iter()
        .map(|&(i, j)| if i == j { vec![(i, i)] } else { vec![(i, j), (j, i)] })
        .collect();
    let q: DdMatrix = terms
        .iter()
        .map(|ta| {
            terms
                .iter()
                .map(|tb| {
                    let mut acc = TwoFloat::from(0.0);
                    for &(i, j) in ta {
                        for &(k, l) in tb {
                            acc += inv[j][k] * inv[l][i];
                        }
                    }
                    acc
                })
                .collect()
        })
        .collect();
    let det = f64::from(dd_determinant(q));
    Ok(DensityValue {
        value: det.abs().sqrt(),
        at: form.clone(),
    })
}

/// The printed low-dimensional formulas, in terms of the inverse components:
/// `|γ^{11}|` for `n = 1` and
/// `√(2|(γ^{11})³(γ^{22})³ + 3γ^{11}γ^{22}(γ^{12})⁴ − 3(γ^{11})²(γ^{22})²(γ^{12})² − (γ^{12})⁶|)`
/// for `n = 2`.
pub fn density_closed_form(form: &SymmetricForm) -> Result<DensityValue> {
    let n = form.dim();
    if n > 2 {
        return Err(Error::UnsupportedDimension(n));
    }
    let inv = inverse_form(form)?;
    let value = if n == 1 {
        inv.get(0, 0).abs()
    } else {
        let (a, b, c) = (inv.get(0, 0), inv.get(1, 1), inv.get(0, 1));
        let poly = a.powi(3) * b.powi(3) + 3.0 * a * b * c.powi(4)
            - 3.0 * a * a * b * b * c * c
            - c.powi(6);
        (2.0 * poly.abs()).sqrt()
    };
    Ok(DensityValue {
        value,
        at: form.clone(),
    })
}

/// `|density(gγ)·|det L| − density(γ)|` with `L` the packed action Jacobian.
pub fn pushforward_invariance_residual(g: &GroupElement, form: &SymmetricForm) -> Result<f64> {
    let moved = density(&act(g, form)?)?.value;
    let jac = action_jacobian(g).determinant().abs();
    Ok((moved * jac - density(form)?.value).abs())
}

/// A product of closed intervals in packed coordinates, with a signature
/// filter selecting the scalar products of interest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub signature: Signature,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>, signature: Signature) -> Result<Self> {
        let b = BoxDomain {
            lower,
            upper,
            signature,
        };
        b.validate()?;
        Ok(b)
    }

    /// Box `center ± half_width` in every coordinate.
    pub fn around(center: &[f64], half_width: f64, signature: Signature) -> Result<Self> {
        Self::new(
            center.iter().map(|c| c - half_width).collect(),
            center.iter().map(|c| c + half_width).collect(),
            signature,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.signature.dim();
        let big_n = n * (n + 1) / 2;
        if self.lower.len() != big_n || self.upper.len() != big_n {
            return Err(Error::InvalidBox(format!(
                "expected {big_n} packed coordinates for signature {}, got {} / {}",
                self.signature,
                self.lower.len(),
                self.upper.len()
            )));
        }
        for (k, (lo, hi)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidBox(format!("coordinate {k}: [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.signature.dim()
    }

    pub fn volume(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| hi - lo)
            .product()
    }

    pub fn contains(&self, coords: &DVector<f64>) -> bool {
        coords
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (lo, hi))| *lo <= *x && *x <= *hi)
    }

    /// Bounding box of the image of this box under `γ ↦ act(g, γ)`, which
    /// is linear in packed coordinates.
    pub fn image_bounds(&self, g: &GroupElement) -> Result<BoxDomain> {
        let jac = action_jacobian(g);
        let center = DVector::from_iterator(
            self.lower.len(),
            self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)),
        );
        let half = DVector::from_iterator(
            self.lower.len(),
            self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (u - l)),
        );
        let c = &jac * center;
        let h = jac.abs() * half;
        BoxDomain::new(
            (0..c.len()).map(|k| c[k] - h[k]).collect(),
            (0..c.len()).map(|k| c[k] + h[k]).collect(),
            self.signature,
        )
    }
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub value: f64,
    pub std_error: f64,
    pub n_samples: usize,
    pub n_accepted: usize,
}

impl MCEstimate {
    pub fn acceptance_rate(&self) -> f64 {
        self.n_accepted as f64 / self.n_samples as f64
    }
}

#[derive(Default, Clone, Copy)]
struct Partial {
    sum: f64,
    sum_sq: f64,
    accepted: usize,
}

/// `∫_box f dμ` by uniform sampling, rejecting points outside the box's
/// signature class.
///
/// Samples are drawn in fixed chunks of [`MC_CHUNK`], chunk `c` from stream
/// `c` of a ChaCha8 generator seeded with `seed`, and partial sums are
/// reduced in chunk order: the result is bitwise reproducible for a given
/// seed regardless of the thread pool size.
pub fn mc_integrate<F>(f: F, domain: &BoxDomain, seed: u64, n_samples: usize) -> Result<MCEstimate>
where
    F: Fn(&SymmetricForm) -> f64 + Sync,
{
    domain.validate()?;
    if n_samples < MIN_SAMPLES {
        return Err(Error::TooFewSamples {
            min: MIN_SAMPLES,
            found: n_samples,
        });
    }
    let index = PackedIndex::new(domain.dim());
    let volume = domain.volume();
    let n_chunks = n_samples.div_ceil(MC_CHUNK);

    let partials: Vec<Partial> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let count = MC_CHUNK.min(n_samples - chunk * MC_CHUNK);
            let mut acc = Partial::default();
            let mut coords = DVector::zeros(index.len());
            for _ in 0..count {
                for k in 0..index.len() {
                    let u: f64 = rng.gen();
                    coords[k] = domain.lower[k] + u * (domain.upper[k] - domain.lower[k]);
                }
                let Ok(form) = index.unpack(&coords) else { continue };
                if signature_of(&form, SignatureMethod::Eigen).ok() != Some(domain.signature) {
                    continue;
                }
                acc.accepted += 1;
                let weight = density(&form).map(|d| d.value).unwrap_or(0.0);
                let v = volume * f(&form) * weight;
                acc.sum += v;
                acc.sum_sq += v * v;
            }
            acc
        })
        .collect();

    let total = partials.iter().fold(Partial::default(), |a, p| Partial {
        sum: a.sum + p.sum,
        sum_sq: a.sum_sq + p.sum_sq,
        accepted: a.accepted + p.accepted,
    });
    if total.accepted == 0 {
        return Err(Error::EmptyDomain(n_samples));
    }
    let n = n_samples as f64;
    let mean = total.sum / n;
    let variance = ((total.sum_sq / n - mean * mean) * n / (n - 1.0)).max(0.0);
    Ok(MCEstimate {
        value: mean,
        std_error: (variance / n).sqrt(),
        n_samples,
        n_accepted: total.accepted,
    })
}

/// Runs [`mc_integrate`] at each sample count, for convergence studies.
pub fn convergence_sweep<F>(
    f: F,
    domain: &BoxDomain,
    seed: u64,
    sample_counts: &[usize],
) -> Result<Vec<MCEstimate>>
where
    F: Fn(&SymmetricForm) -> f64 + Sync,
{
    sample_counts
        .iter()
        .map(|&n| mc_integrate(&f, domain, seed, n))
        .collect()
}

/// Outcome of comparing `∫ f dμ` with `∫ f∘ḡ dμ`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub direct: MCEstimate,
    pub transformed: MCEstimate,
    /// Box over which `f∘ḡ` was integrated.
    pub image_box: BoxDomain,
    pub difference: f64,
    pub combined_std_error: f64,
    /// `|difference| / combined_std_error` (0 when both vanish).
    pub sigmas: f64,
    pub passed: bool,
}

/// Compares `∫ f dμ` over `domain` with `∫ f(gγ) dμ(γ)` over the bounding
/// box of `g⁻¹·domain`, where `f` must vanish outside `domain`. Both
/// integrals use the same seed. The contract is `|difference| < 3σ`.
pub fn invariance_experiment<F>(
    f: F,
    g: &GroupElement,
    domain: &BoxDomain,
    seed: u64,
    n_samples: usize,
) -> Result<InvarianceReport>
where
    F: Fn(&SymmetricForm) -> f64 + Sync,
{
    invariance_experiment_with_seeds(f, g, domain, (seed, seed), n_samples)
}

/// [`invariance_experiment`] with separate seeds for the direct and the
/// transformed integral, so that the two estimates are independent.
pub fn invariance_experiment_with_seeds<F>(
    f: F,
    g: &GroupElement,
    domain: &BoxDomain,
    (seed_direct, seed_transformed): (u64, u64),
    n_samples: usize,
) -> Result<InvarianceReport>
where
    F: Fn(&SymmetricForm) -> f64 + Sync,
{
    if g.dim() != domain.dim() {
        return Err(Error::DimensionMismatch {
            expected: domain.dim(),
            found: g.dim(),
        });
    }
    let direct = mc_integrate(&f, domain, seed_direct, n_samples)?;
    let image_box = domain.image_bounds(&g.inverse())?;
    let transformed = mc_integrate(
        |s: &SymmetricForm| act(g, s).map(|moved| f(&moved)).unwrap_or(0.0),
        &image_box,
        seed_transformed,
        n_samples,
    )?;
    let difference = transformed.value - direct.value;
    let combined = direct.std_error.hypot(transformed.std_error);
    let sigmas = if combined > 0.0 {
        difference.abs() / combined
    } else if difference == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(InvarianceReport {
        direct,
        transformed,
        image_box,
        difference,
        combined_std_error: combined,
        sigmas,
        passed: sigmas < 3.0,
    })
}

/// Integrands addressable from configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Integrand {
    Constant { value: f64 },
    /// The packed coordinate with the given index.
    Coordinate { index: usize },
    /// `exp(-1/(1-r²))` for `r = |x - center| / radius < 1`, else 0.
    Bump { center: Vec<f64>, radius: f64 },
}

impl Integrand {
    /// Checks that the integrand addresses `n x n` forms.
    pub fn validate(&self, n: usize) -> Result<()> {
        let len = PackedIndex::new(n).len();
        match self {
            Integrand::Constant { value } if !value.is_finite() => Err(Error::NonFinite),
            Integrand::Coordinate { index } if *index >= len => Err(Error::InvalidArgument(format!(
                "coordinate index {index} out of range for {len} packed coordinates"
            ))),
            Integrand::Bump { center, .. } if center.len() != len => Err(Error::DimensionMismatch {
                expected: len,
                found: center.len(),
            }),
            Integrand::Bump { radius, .. } if !(*radius > 0.0 && radius.is_finite()) => Err(
                Error::InvalidArgument(format!("bump radius must be positive, got {radius}")),
            ),
            _ => Ok(()),
        }
    }

    pub fn eval(&self, form: &SymmetricForm) -> f64 {
        match self {
            Integrand::Constant { value } => *value,
            Integrand::Coordinate { index } => {
                let idx = PackedIndex::new(form.dim());
                idx.pack(form)[*index]
            }
            Integrand::Bump { center, radius } => {
                let idx = PackedIndex::new(form.dim());
                let x = idx.pack(form);
                let r2: f64 = x
                    .iter()
                    .zip(center)
                    .map(|(a, c)| ((a - c) / radius).powi(2))
                    .sum();
                bump(r2)
            }
        }
    }
}

/// `exp(-1/(1-r²))` on `r² < 1`, zero elsewhere.
pub fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (-1.0 / (1.0 - r2)).exp()
    } else {
        0.0
    }
}
