use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sigspace::field::{
    composition_residual, deform_metric_field, field_density_at, natural_density, seam_report,
    PointChart,
};
use sigspace::forms::{
    inverse_form, random_form, random_form_with, signature_of, Signature, SignatureMethod,
    SymmetricForm,
};
use sigspace::geometry::{
    deformed_metric, metric_components, metric_signature, natural_metric_signature,
    pullback_invariance_residual, pullback_invariance_residual_deformed, qinv_alpha_alpha,
};
use sigspace::group::{
    act, action_jacobian, adjoint_determinant, isotropy_algebra_basis, random_group_element,
    GroupElement,
};
use sigspace::linalg::expm;
use sigspace::measure::{density, pushforward_invariance_residual};
use sigspace::projective::{
    duality_residual, extend_state, homomorphism_residuals, pure_state_net, random_observable,
    random_state, random_state_field, restrict_state, tower_residual, Label, TensorSpace,
};
use sigspace::suite::sample_metric_field;

fn signature() -> impl Strategy<Value = Signature> {
    (1usize..=4).prop_flat_map(|n| (0..=n).prop_map(move |p| Signature::new(p, n - p)))
}

fn signature_up_to(max: usize) -> impl Strategy<Value = Signature> {
    (1usize..=max).prop_flat_map(|n| (0..=n).prop_map(move |p| Signature::new(p, n - p)))
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn oracle_density(s: &SymmetricForm) -> f64 {
    let n = s.dim() as f64;
    2f64.powf(n * (n - 1.0) / 4.0) * s.determinant().abs().powf(-(n + 1.0) / 2.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn signature_round_trip(sig in signature_up_to(5), seed in any::<u64>()) {
        let s = random_form(sig, seed, 1.0).unwrap();
        prop_assert_eq!(signature_of(&s, SignatureMethod::Eigen).unwrap(), sig);
        prop_assert_eq!(signature_of(&s, SignatureMethod::Auto).unwrap(), sig);
        if let Ok(by_minors) = signature_of(&s, SignatureMethod::Minors) {
            prop_assert_eq!(by_minors, sig);
        }
    }

    #[test]
    fn minors_agree_with_eigenvalues(sig in signature_up_to(5), seed in any::<u64>()) {
        let s = random_form(sig, seed, 1.0).unwrap();
        prop_assume!(s.leading_minors().iter().all(|m| m.abs() >= 1e-6));
        prop_assert_eq!(
            signature_of(&s, SignatureMethod::Minors).unwrap(),
            signature_of(&s, SignatureMethod::Eigen).unwrap()
        );
    }

    #[test]
    fn inverse_is_an_involution(sig in signature(), seed in any::<u64>()) {
        let s = random_form(sig, seed, 1.0).unwrap();
        let back = inverse_form(&inverse_form(&s).unwrap().to_form()).unwrap().to_form();
        prop_assert!((back.entries() - s.entries()).amax() < 1e-8 * s.scale());
    }

    #[test]
    fn scaling_and_negation(sig in signature(), seed in any::<u64>(), alpha in 0.01f64..100.0) {
        let s = random_form(sig, seed, 1.0).unwrap();
        prop_assert_eq!(signature_of(&s.scaled(alpha), SignatureMethod::Eigen).unwrap(), sig);
        prop_assert_eq!(signature_of(&s.negated(), SignatureMethod::Eigen).unwrap(), sig.swapped());
    }

    #[test]
    fn group_law(sig in signature(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = random_form_with(&mut r, sig, 1.0).unwrap();
        let n = sig.dim();
        let g = random_group_element(&mut r, n);
        let h = random_group_element(&mut r, n);
        let staged = act(&h, &act(&g, &s).unwrap()).unwrap();
        let direct = act(&h.compose(&g).unwrap(), &s).unwrap();
        prop_assert!((staged.entries() - direct.entries()).amax() < 1e-10 * direct.scale());
        prop_assert_eq!(signature_of(&direct, SignatureMethod::Eigen).unwrap(), sig);
    }

    #[test]
    fn jacobian_determinant(n in 1usize..=4, seed in any::<u64>()) {
        let g = random_group_element(&mut rng(seed), n);
        let expected = g.determinant().powi(-(n as i32 + 1));
        prop_assert!(rel_gap(action_jacobian(&g).determinant(), expected) < 1e-8);
    }

    #[test]
    fn isotropy_exponentials(sig in signature(), seed in any::<u64>()) {
        let eta = SymmetricForm::standard(sig);
        let basis = isotropy_algebra_basis(&eta).unwrap();
        for x in &basis {
            for t in [-1.0, -0.3, 0.3, 1.0] {
                let h = GroupElement::new(expm(&(x * t))).unwrap();
                prop_assert!((act(&h, &eta).unwrap().entries() - eta.entries()).amax() < 1e-9);
            }
        }
        prop_assume!(!basis.is_empty());
        let mut r = rng(seed);
        let x = basis.iter().fold(DMatrix::zeros(sig.dim(), sig.dim()), |acc, b| {
            acc + b * rand::Rng::gen_range(&mut r, -1.0..=1.0)
        });
        let h = GroupElement::new(expm(&x)).unwrap();
        prop_assert!((adjoint_determinant(&h, &basis).unwrap().abs() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn metric_signature_law(sig in signature_up_to(5), seed in any::<u64>()) {
        let s = random_form(sig, seed, 1.0).unwrap();
        prop_assert_eq!(metric_signature(&s).unwrap(), natural_metric_signature(sig));
    }

    #[test]
    fn metric_is_invariant(sig in signature(), seed in any::<u64>(), a in -2.0f64..2.0) {
        let mut r = rng(seed);
        let s = random_form_with(&mut r, sig, 1.0).unwrap();
        let g = random_group_element(&mut r, sig.dim());
        let scale = metric_components(&s).unwrap().components.amax();
        prop_assert!(pullback_invariance_residual(&g, &s).unwrap() < 1e-8 * scale);
        let scale_a = deformed_metric(&s, a).unwrap().components.amax();
        prop_assert!(pullback_invariance_residual_deformed(&g, &s, a).unwrap() < 1e-8 * scale_a);
    }

    #[test]
    fn alpha_contraction_and_determinant_lemma(sig in signature(), seed in any::<u64>(), a in -2.0f64..2.0) {
        let s = random_form(sig, seed, 1.0).unwrap();
        let n = sig.dim() as f64;
        prop_assert!(rel_gap(qinv_alpha_alpha(&s).unwrap(), n) < 1e-8);
        let det_q = metric_components(&s).unwrap().determinant();
        let det_qa = deformed_metric(&s, a).unwrap().determinant();
        prop_assert!((det_qa - det_q * (1.0 + a * n)).abs() < 1e-8 * det_q.abs() * (1.0 + a * n).abs().max(1.0));
    }

    #[test]
    fn density_matches_power_law(sig in signature(), seed in any::<u64>()) {
        let s = random_form(sig, seed, 1.0).unwrap();
        prop_assert!(rel_gap(density(&s).unwrap().value, oracle_density(&s)) < 1e-8);
    }

    #[test]
    fn density_is_invariant(sig in signature(), seed in any::<u64>(), alpha in 0.1f64..10.0) {
        let mut r = rng(seed);
        let s = random_form_with(&mut r, sig, 1.0).unwrap();
        let d = density(&s).unwrap().value;
        let g = random_group_element(&mut r, sig.dim());
        prop_assert!(pushforward_invariance_residual(&g, &s).unwrap() < 1e-8 * d);
        // scaling S by alpha is the action of alpha^{-1/2}·I
        let scale = GroupElement::new(DMatrix::identity(sig.dim(), sig.dim()) * alpha.powf(-0.5)).unwrap();
        prop_assert!(pushforward_invariance_residual(&scale, &s).unwrap() < 1e-8 * d);
    }

    #[test]
    fn field_density_is_natural(sig in signature(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let s = random_form_with(&mut r, sig, 1.0).unwrap();
        let chart = PointChart::new(0, random_group_element(&mut r, sig.dim()).entries().clone()).unwrap();
        let got = field_density_at(&chart, &s, natural_density).unwrap().value;
        prop_assert!(rel_gap(got, density(&s).unwrap().value) < 1e-9);
    }

    #[test]
    fn pushforwards_compose(sig in signature(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = sig.dim();
        let forms: Vec<_> = (0..5).map(|_| random_form_with(&mut r, sig, 1.0).unwrap()).collect();
        let l1 = random_group_element(&mut r, n);
        let l = random_group_element(&mut r, n);
        prop_assert!(composition_residual(l1.entries(), l.entries(), &forms, natural_density).unwrap() < 1e-9);
    }
}

fn three_point_space() -> impl Strategy<Value = TensorSpace> {
    (0u64..20, proptest::collection::vec((1u64..10, 1usize..=3), 3)).prop_map(|(start, steps)| {
        let ids = steps.iter().scan(start, |id, &(gap, _)| {
            *id += gap;
            Some(*id)
        });
        TensorSpace::new(ids.zip(steps.iter().map(|&(_, d)| d))).unwrap()
    })
}

fn subsets(top: &TensorSpace) -> Vec<Label> {
    let ids = top.label();
    let pts = ids.points();
    (1u32..(1 << pts.len()))
        .map(|m| Label::new((0..pts.len()).filter(|k| m & (1 << k) != 0).map(|k| pts[k])))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn embedding_and_restriction(top in three_point_space(), seed in any::<u64>()) {
        let mut r = rng(seed);
        let labels = subsets(&top);
        for big in &labels {
            let big_space = top.sub(big).unwrap();
            let rho = random_state(&mut r, &big_space);
            for small in labels.iter().filter(|l| big.contains(l)) {
                let small_space = top.sub(small).unwrap();
                let a = random_observable(&mut r, &small_space);
                let b = random_observable(&mut r, &small_space);
                prop_assert!(homomorphism_residuals(&a, &b, &big_space).unwrap().worst() < 1e-12);
                prop_assert!(duality_residual(&rho, &a).unwrap() < 1e-12);
                for bottom in labels.iter().filter(|l| small.contains(l)) {
                    prop_assert!(tower_residual(&rho, small, bottom).unwrap() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn restriction_is_surjective(top in three_point_space(), seed in any::<u64>()) {
        let mut r = rng(seed);
        for small in subsets(&top) {
            let rest = top.label().difference(&small);
            if rest.is_empty() {
                continue;
            }
            let target = random_state(&mut r, &top.sub(&small).unwrap());
            let sigma = random_state(&mut r, &top.sub(&rest).unwrap());
            let extended = extend_state(&target, &sigma).unwrap();
            let back = restrict_state(&extended, &small).unwrap();
            prop_assert!((back.matrix - &target.matrix).camax() < 1e-15);
        }
    }

    #[test]
    fn pure_state_nets_are_consistent(top in three_point_space(), seed in any::<u64>()) {
        let field = random_state_field(&mut rng(seed), top.factors());
        let labels = subsets(&top);
        let net = pure_state_net(&field, &labels).unwrap();
        for big in &labels {
            for small in labels.iter().filter(|l| big.contains(l)) {
                let r = restrict_state(&net[big], small).unwrap();
                prop_assert!((r.matrix - &net[small].matrix).camax() < 1e-12);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn deformation_contract(p in 0usize..=2, seed in any::<u64>()) {
        let sig = Signature::new(p, 2 - p);
        let grid = sample_metric_field(sig, 0.05).unwrap();
        let center = grid.origin().unwrap();
        let target = random_form(sig, seed, 1.0).unwrap();
        let out = deform_metric_field(&grid, center, &target).unwrap();
        let c = out.point(center).unwrap();
        prop_assert!((c.q.entries() - target.entries()).amax() < 1e-9 * target.scale());
        for (before, after) in grid.points.iter().zip(&out.points) {
            if before.r2() >= 1.0 {
                prop_assert_eq!(before, after);
            }
            prop_assert_eq!(signature_of(&after.q, SignatureMethod::Eigen).unwrap(), sig);
        }
        let seam = seam_report(&out);
        prop_assert!(seam.is_smooth(), "{:?}", seam);
    }
}
