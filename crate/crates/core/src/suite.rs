//! The acceptance battery: eleven numbered criteria, each a set of named
//! checks with explicit tolerances and a wall-clock budget.

use std::collections::BTreeMap;
use std::fmt;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{
    composition_residual, deform_metric_field, diffeo_invariance_residual,
    frame_independence_residual, natural_density, DiffeoJacobianField, MetricFieldGrid, PointChart,
};
use crate::forms::{random_form_with, signature_of, Signature, SignatureMethod, SymmetricForm};
use crate::geometry::{
    critical_deformation, deformed_metric, deformed_metric_signature, metric_components,
    metric_signature, natural_metric_signature, pullback_invariance_residual, qinv_alpha_alpha,
};
use crate::group::{
    act, adjoint_determinant, connecting_path, isotropy_algebra_basis, random_group_element,
    GroupElement,
};
use crate::linalg::expm;
use crate::measure::{
    bump, density, density_closed_form, invariance_experiment_with_seeds, pushforward_invariance_residual,
    BoxDomain, Integrand,
};
use crate::projective::{
    duality_residual, homomorphism_residuals, pure_state_net, random_observable, random_state,
    random_state_field, rescale_isomorphism_check, restrict_state, tower_residual, Label,
    TensorSpace,
};
use crate::quadrature::GaussLegendre;

/// Number of criteria in the battery.
pub const CRITERIA: u8 = 11;

/// Largest entry difference accepted where two computations must agree
/// exactly up to the order of floating-point additions.
pub const ROUNDING_TOL: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    /// `"<"` or `"<="`.
    pub relation: &'static str,
    pub passed: bool,
}

impl Check {
    pub fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            relation: "<",
            passed: value < tolerance,
        }
    }

    pub fn at_most(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            relation: "<=",
            passed: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriterionOutcome {
    pub id: u8,
    pub title: &'static str,
    pub checks: Vec<Check>,
    pub error: Option<String>,
    pub elapsed_s: f64,
    pub time_limit_s: f64,
    pub passed: bool,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{tag}] {:>2} {}:", self.id, self.title)?;
        if let Some(e) = &self.error {
            write!(f, " error: {e};")?;
        }
        for c in &self.checks {
            let mark = if c.passed { "" } else { " (!)" };
            write!(f, " {} {:.3e} {} {:.0e}{mark};", c.name, c.value, c.relation, c.tolerance)?;
        }
        write!(f, " {:.2}s of {:.0}s", self.elapsed_s, self.time_limit_s)
    }
}

fn title(id: u8) -> (&'static str, f64) {
    match id {
        1 => ("closed-form density n=1", 1.0),
        2 => ("closed-form density n=2", 2.0),
        3 => ("Q signature law", 10.0),
        4 => ("metric and measure invariance", 10.0),
        5 => ("alpha contraction and critical deformation", 5.0),
        6 => ("deformed signature jump", 5.0),
        7 => ("Monte Carlo invariance", 60.0),
        8 => ("unimodularity", 5.0),
        9 => ("projective family", 5.0),
        10 => ("measure fields", 5.0),
        11 => ("constructive deformation", 10.0),
        _ => ("unknown", 0.0),
    }
}

/// Runs criterion `id` with randomness drawn from stream `id` of `seed`.
pub fn run_criterion(id: u8, seed: u64) -> Result<CriterionOutcome> {
    if !(1..=CRITERIA).contains(&id) {
        return Err(Error::InvalidArgument(format!("no criterion {id}")));
    }
    let (title, time_limit_s) = title(id);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id as u64);
    let start = Instant::now();
    let result = match id {
        1 => closed_form_n1(),
        2 => closed_form_n2(&mut rng),
        3 => q_signature_law(&mut rng),
        4 => invariance(&mut rng),
        5 => alpha_contraction(&mut rng),
        6 => signature_jump(&mut rng),
        7 => monte_carlo(&mut rng),
        8 => unimodularity(&mut rng),
        9 => projective(&mut rng),
        10 => measure_fields(&mut rng),
        _ => deformation(&mut rng),
    };
    let elapsed_s = start.elapsed().as_secs_f64();
    let (checks, error) = match result {
        Ok(c) => (c, None),
        Err(e) => (Vec::new(), Some(format!("{}: {e}", e.kind()))),
    };
    let passed = error.is_none()
        && !checks.is_empty()
        && checks.iter().all(|c| c.passed)
        && elapsed_s < time_limit_s;
    Ok(CriterionOutcome {
        id,
        title,
        checks,
        error,
        elapsed_s,
        time_limit_s,
        passed,
    })
}

pub fn run_suite(seed: u64) -> Vec<CriterionOutcome> {
    (1..=CRITERIA)
        .map(|id| run_criterion(id, seed).expect("criterion ids are in range"))
        .collect()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn random_signature<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Signature {
    let p = rng.gen_range(0..=n);
    Signature::new(p, n - p)
}

fn closed_form_n1() -> Result<Vec<Check>> {
    let mut worst = 0.0f64;
    for k in 0..50 {
        let x = 0.1 + 9.9 * k as f64 / 49.0;
        for gamma in [x, -x] {
            let d = density(&SymmetricForm::diagonal(&[gamma])?)?.value;
            worst = worst.max(rel(d, 1.0 / gamma.abs()));
        }
    }
    Ok(vec![Check::below("relative error vs 1/|γ|", worst, 1e-12)])
}

fn closed_form_n2(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for sig in Signature::all_of_dim(2) {
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let s = random_form_with(rng, sig, 1.0)?;
            worst = worst.max(rel(density(&s)?.value, density_closed_form(&s)?.value));
        }
        checks.push(Check::below(format!("{sig} relative error"), worst, 1e-10));
    }
    Ok(checks)
}

fn q_signature_law(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut mismatches = 0usize;
    let mut cases = 0usize;
    for n in 1..=5 {
        for sig in Signature::all_of_dim(n) {
            let expected = natural_metric_signature(sig);
            for _ in 0..100 {
                let s = random_form_with(rng, sig, 1.0)?;
                cases += 1;
                if metric_signature(&s)? != expected {
                    mismatches += 1;
                }
            }
        }
    }
    Ok(vec![Check::at_most(
        format!("mismatches in {cases} cases"),
        mismatches as f64,
        0.0,
    )])
}

fn invariance(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let (mut metric, mut measure) = (0.0f64, 0.0f64);
    for n in 1..=4 {
        for _ in 0..1000 {
            let sig = random_signature(rng, n);
            let s = random_form_with(rng, sig, 1.0)?;
            let g = random_group_element(rng, n);
            let q_scale = metric_components(&s)?.components.amax();
            metric = metric.max(pullback_invariance_residual(&g, &s)? / q_scale);
            measure = measure.max(pushforward_invariance_residual(&g, &s)? / density(&s)?.value);
        }
    }
    Ok(vec![
        Check::below("metric pullback", metric, 1e-8),
        Check::below("measure pushforward", measure, 1e-8),
    ])
}

fn alpha_contraction(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let (mut contraction, mut critical) = (0.0f64, 0.0f64);
    for n in 1..=4 {
        let a0 = critical_deformation(n);
        for _ in 0..500 {
            let sig = random_signature(rng, n);
            let s = random_form_with(rng, sig, 1.0)?;
            contraction = contraction.max(rel(qinv_alpha_alpha(&s)?, n as f64));
            // det Q^a = det Q·(1 + a·n), so |det Q| is the natural scale
            let scale = metric_components(&s)?.determinant().abs();
            critical = critical.max(deformed_metric(&s, a0)?.determinant().abs() / scale);
        }
    }
    Ok(vec![
        Check::below("Q⁻¹(α,α) relative to n", contraction, 1e-8),
        Check::below("|det Q^a₀| / |det Q|", critical, 1e-10),
    ])
}

fn signature_jump(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut mismatches = 0usize;
    let mut cases = 0usize;
    for n in 2..=3 {
        let a0 = critical_deformation(n);
        for sig in Signature::all_of_dim(n) {
            let natural = natural_metric_signature(sig);
            let jumped = Signature::new(natural.p - 1, natural.p_prime + 1);
            for _ in 0..20 {
                let s = random_form_with(rng, sig, 1.0)?;
                for offset in [-2.0, -0.5, -0.05, 0.05, 0.5, 2.0] {
                    let a = a0 + offset;
                    let expected = if a < a0 { jumped } else { natural };
                    let got = deformed_metric(&s, a)?.signature()?;
                    cases += 1;
                    if got != expected || deformed_metric_signature(sig, a) != Some(expected) {
                        mismatches += 1;
                    }
                }
            }
        }
    }
    Ok(vec![Check::at_most(
        format!("mismatches in {cases} cases"),
        mismatches as f64,
        0.0,
    )])
}

/// `∫₁² bump(((γ − 1.5)/0.5)²) dγ/γ` by composite Gauss–Legendre.
pub fn scalar_bump_integral() -> f64 {
    let gl = GaussLegendre::new(16);
    let panels = 400;
    (0..panels)
        .map(|k| {
            let a = 1.0 + k as f64 / panels as f64;
            let b = a + 1.0 / panels as f64;
            gl.integrate(a, b, |g| bump(((g - 1.5) / 0.5).powi(2)) / g)
        })
        .sum()
}

const MC_SAMPLES: usize = 1_000_000;

fn monte_carlo(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let seeds: [u64; 4] = rng.gen();
    let positive_line = Signature::new(1, 0);
    let box1 = BoxDomain::new(vec![1.0], vec![2.0], positive_line)?;
    let f1 = Integrand::Bump {
        center: vec![1.5],
        radius: 0.5,
    };
    let g1 = GroupElement::diagonal(&[2.0])?;
    let rep1 = invariance_experiment_with_seeds(|s| f1.eval(s), &g1, &box1, (seeds[0], seeds[1]), MC_SAMPLES)?;
    let exact = scalar_bump_integral();

    let box2 = BoxDomain::around(&[1.0, 0.0, 1.0], 0.3, Signature::new(2, 0))?;
    let f2 = Integrand::Bump {
        center: vec![1.0, 0.0, 1.0],
        radius: 0.3,
    };
    let g2 = GroupElement::diagonal(&[2.0, 1.0])?;
    let rep2 = invariance_experiment_with_seeds(|s| f2.eval(s), &g2, &box2, (seeds[2], seeds[3]), MC_SAMPLES)?;

    Ok(vec![
        Check::below("n=1 sigmas", rep1.sigmas, 3.0),
        Check::below(
            "n=1 direct vs analytic sigmas",
            (rep1.direct.value - exact).abs() / rep1.direct.std_error,
            3.0,
        ),
        Check::below(
            "n=1 transformed vs analytic sigmas",
            (rep1.transformed.value - exact).abs() / rep1.transformed.std_error,
            3.0,
        ),
        Check::below("n=2 sigmas", rep2.sigmas, 3.0),
    ])
}

fn gl_basis(n: usize) -> Vec<DMatrix<f64>> {
    (0..n * n)
        .map(|k| {
            let mut e = DMatrix::zeros(n, n);
            e[(k / n, k % n)] = 1.0;
            e
        })
        .collect()
}

fn unimodularity(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut gl = 0.0f64;
    for n in 1..=3 {
        let basis = gl_basis(n);
        for _ in 0..200 {
            let g = random_group_element(rng, n);
            gl = gl.max((adjoint_determinant(&g, &basis)?.abs() - 1.0).abs());
        }
    }
    let mut checks = vec![Check::below("GL(n), n ≤ 3", gl, 1e-8)];
    for sig in [Signature::new(1, 1), Signature::new(2, 0), Signature::new(2, 1)] {
        let eta = SymmetricForm::standard(sig);
        let basis = isotropy_algebra_basis(&eta)?;
        let (mut worst, mut isotropy) = (0.0f64, 0.0f64);
        for _ in 0..200 {
            let x = basis
                .iter()
                .fold(DMatrix::zeros(sig.dim(), sig.dim()), |acc, b| acc + b * rng.gen_range(-1.0..=1.0));
            let h = GroupElement::new(expm(&x))?;
            isotropy = isotropy.max((act(&h, &eta)?.entries() - eta.entries()).amax());
            worst = worst.max((adjoint_determinant(&h, &basis)?.abs() - 1.0).abs());
        }
        checks.push(Check::below(format!("O{sig} |det Ad| − 1"), worst, 1e-8));
        checks.push(Check::below(format!("O{sig} membership"), isotropy, 1e-9));
    }
    Ok(checks)
}

fn all_labels(points: &[u64]) -> Vec<Label> {
    (1u32..(1 << points.len()))
        .map(|mask| {
            Label::new(
                points
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| mask & (1 << k) != 0)
                    .map(|(_, &p)| p),
            )
        })
        .collect()
}

fn projective(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let mut worst: Vec<Check> = Vec::new();
    for _ in 0..10 {
        let points: Vec<u64> = {
            let mut ids: Vec<u64> = (0..3).map(|_| rng.gen_range(0..100)).collect();
            ids.sort_unstable();
            ids.dedup();
            while ids.len() < 3 {
                ids.push(ids.last().copied().unwrap_or(0) + 1);
            }
            ids
        };
        let factors: Vec<(u64, usize)> = points.iter().map(|&p| (p, rng.gen_range(1..=3))).collect();
        let checks = projective_checks(rng, &factors, &[0.5, 2.0, 4.0])?;
        if worst.is_empty() {
            worst = checks;
        } else {
            for (w, c) in worst.iter_mut().zip(checks) {
                if c.value > w.value {
                    *w = c;
                }
            }
        }
    }
    Ok(worst)
}

/// Residuals of the projective family over the given points: embeddings,
/// restrictions and rescalings for every pair of nested labels, with the
/// rescaling checked at each constant in `rescale_cs`.
pub fn projective_checks<R: Rng + ?Sized>(
    rng: &mut R,
    factors: &[(u64, usize)],
    rescale_cs: &[f64],
) -> Result<Vec<Check>> {
    let (mut hom, mut duality, mut tower, mut net, mut rescale) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let top = TensorSpace::new(factors.iter().copied())?;
    let points: Vec<u64> = factors.iter().map(|&(p, _)| p).collect();
    let labels = all_labels(&points);
    let field = random_state_field(rng, factors);
    let states = pure_state_net(&field, &labels)?;

    for big in &labels {
        let big_space = top.sub(big)?;
        let rho = random_state(rng, &big_space);
        for small in labels.iter().filter(|l| big.contains(l)) {
            let small_space = top.sub(small)?;
            let a = random_observable(rng, &small_space);
            let b = random_observable(rng, &small_space);
            hom = hom.max(homomorphism_residuals(&a, &b, &big_space)?.worst());
            duality = duality.max(duality_residual(&rho, &a)?);
            let restricted = restrict_state(&states[big], small)?;
            net = net.max((restricted.matrix - &states[small].matrix).camax());
            for &c in rescale_cs {
                rescale = rescale.max(rescale_isomorphism_check(c, &a, &big_space)?.worst());
            }
            for bottom in labels.iter().filter(|l| small.contains(l)) {
                tower = tower.max(tower_residual(&rho, small, bottom)?);
            }
        }
    }
    Ok(vec![
        Check::below("ι homomorphism", hom, 1e-12),
        Check::below("π–ι duality", duality, 1e-12),
        Check::at_most("tower consistency", tower, ROUNDING_TOL),
        Check::below("pure-state net", net, 1e-12),
        Check::below("rescaling", rescale, 1e-12),
    ])
}

fn measure_fields(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let (mut frame, mut composition, mut diffeo) = (0.0f64, 0.0f64, 0.0f64);
    for n in 1..=3 {
        let sig = random_signature(rng, n);
        let forms: Vec<_> = (0..20)
            .map(|_| random_form_with(rng, sig, 1.0))
            .collect::<Result<_>>()?;
        let chart = |rng: &mut ChaCha8Rng, id| PointChart::new(id, random_group_element(rng, n).entries().clone());
        let field: BTreeMap<u64, PointChart> =
            (0..5).map(|id| Ok((id, chart(rng, id)?))).collect::<Result<_>>()?;
        for id in 0..5 {
            let other = chart(rng, id)?;
            frame = frame.max(frame_independence_residual(&field[&id], &other, &forms, natural_density)?);
            let l = random_group_element(rng, n);
            composition = composition.max(composition_residual(field[&id].frame(), l.entries(), &forms, natural_density)?);
        }
        // a random permutation of the five points
        let mut targets: Vec<u64> = (0..5).collect();
        for k in (1..targets.len()).rev() {
            targets.swap(k, rng.gen_range(0..=k));
        }
        let mut chi = DiffeoJacobianField::new();
        for (y, &x) in targets.iter().enumerate() {
            chi.insert(y as u64, x, random_group_element(rng, n).entries().clone())?;
        }
        diffeo = diffeo.max(diffeo_invariance_residual(&field, &chi, &forms, natural_density)?);
    }
    Ok(vec![
        Check::below("frame independence", frame, 1e-9),
        Check::below("composition", composition, 1e-9),
        Check::below("diffeomorphism invariance", diffeo, 1e-8),
    ])
}

/// A smooth field of the given signature: `η + 0.1·[[y₀, y₁], [y₁, −y₀]]`.
pub fn sample_metric_field(sig: Signature, spacing: f64) -> Result<MetricFieldGrid> {
    let eta = SymmetricForm::standard(sig);
    MetricFieldGrid::lattice(2, spacing, 1.2, sig, |y| {
        let mut m = eta.entries().clone();
        m[(0, 0)] += 0.1 * y[0];
        m[(1, 1)] -= 0.1 * y[0];
        m[(0, 1)] += 0.1 * y[1];
        m[(1, 0)] += 0.1 * y[1];
        SymmetricForm::new(m).expect("perturbation keeps the form symmetric and finite")
    })
}

fn deformation(rng: &mut ChaCha8Rng) -> Result<Vec<Check>> {
    let (mut center, mut exterior, mut wrong_sig) = (0.0f64, 0usize, 0usize);
    for sig in Signature::all_of_dim(2) {
        let grid = sample_metric_field(sig, 0.05)?;
        let c = grid.origin().ok_or_else(|| Error::InvalidGrid("no origin".into()))?;
        let target = random_form_with(rng, sig, 1.0)?;
        let out = deform_metric_field(&grid, c, &target)?;
        let at_center = out.point(c).ok_or(Error::PointNotInField(c))?;
        center = center.max((at_center.q.entries() - target.entries()).amax() / target.scale());
        for (before, after) in grid.points.iter().zip(&out.points) {
            if before.r2() >= 1.0 && before != after {
                exterior += 1;
            }
            if signature_of(&after.q, SignatureMethod::Eigen)? != sig {
                wrong_sig += 1;
            }
        }
    }
    let mut path_breaks = 0usize;
    for n in 2..=3 {
        for sig in Signature::all_of_dim(n) {
            for _ in 0..10 {
                let from = random_form_with(rng, sig, 1.0)?;
                let to = random_form_with(rng, sig, 1.0)?;
                for s in connecting_path(&from, &to, 50)? {
                    if signature_of(&s, SignatureMethod::Eigen)? != sig {
                        path_breaks += 1;
                    }
                }
            }
        }
    }
    Ok(vec![
        Check::below("center equals target", center, 1e-9),
        Check::at_most("changed exterior points", exterior as f64, 0.0),
        Check::at_most("points with wrong signature", wrong_sig as f64, 0.0),
        Check::at_most("path samples with wrong signature", path_breaks as f64, 0.0),
    ])
}
