mod common;

use common::{random_covariance, random_ensemble, random_support, rel_err, system_through};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sparsecond::conditioning::{condition_bounds, distance_to_sigma, mixed_dilation};
use sparsecond::experiments::{kostlan_covariance, TrialReport};
use sparsecond::kahler::{hessian, momentum, TorusPoint};
use sparsecond::quadrature::QuadOptions;
use sparsecond::randsys::{derive_seed, dp_distance, evaluate, sample, Ensemble, Field, Region, RegionBox};
use sparsecond::supports::{mixed_volume_oracle, Support};
use sparsecond::volume::{expected_roots, mixed_density};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 48,
        ..ProptestConfig::default()
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn point(n: usize, p: &[f64], q: &[f64]) -> TorusPoint {
    TorusPoint::new(p[..n].to_vec(), q[..n].to_vec()).unwrap()
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn dp_distance_is_a_scale_invariant_metric(seed in any::<u64>(), n in 1usize..=2, s in 0.1f64..10.0, phase in 0.0f64..6.0) {
        let mut r = rng(seed);
        let ens = random_ensemble(&mut r, n, false, Field::Complex);
        let f = sample(&ens, derive_seed(seed, 0));
        let g = sample(&ens, derive_seed(seed, 1));
        let h = sample(&ens, derive_seed(seed, 2));
        let fg = dp_distance(&f, &g).unwrap();
        prop_assert!((fg - dp_distance(&g, &f).unwrap()).abs() < 1e-12);
        prop_assert!(dp_distance(&f, &f).unwrap() < 1e-7);
        prop_assert!(fg <= dp_distance(&f, &h).unwrap() + dp_distance(&h, &g).unwrap() + 1e-12);
        let lambda = vec![Complex64::from_polar(s, phase); n];
        prop_assert!((dp_distance(&f.scaled(&lambda), &g).unwrap() - fg).abs() < 1e-12);
        prop_assert!(fg <= (n as f64).sqrt() + 1e-12);
    }

    #[test]
    fn evaluation_is_linear(seed in any::<u64>(), n in 1usize..=3, p in prop::array::uniform3(-1.5f64..1.5), q in prop::array::uniform3(0.0f64..6.2)) {
        let mut r = rng(seed);
        let ens = random_ensemble(&mut r, n, false, Field::Complex);
        let f = sample(&ens, derive_seed(seed, 0));
        let g = sample(&ens, derive_seed(seed, 1));
        let pt = point(n, &p, &q);
        let a = evaluate(&f, &ens, &pt).unwrap();
        let b = evaluate(&g, &ens, &pt).unwrap();
        let s = evaluate(&f.add(&g), &ens, &pt).unwrap();
        let c = Complex64::new(0.3, -1.7);
        let scaled = evaluate(&f.scaled(&vec![c; n]), &ens, &pt).unwrap();
        for i in 0..n {
            prop_assert!((s[i] - a[i] - b[i]).norm() <= 1e-12 * (1.0 + a[i].norm() + b[i].norm()));
            prop_assert!((scaled[i] - c * a[i]).norm() <= 1e-12 * (1.0 + a[i].norm()));
        }
    }

    #[test]
    fn condition_is_invariant_under_component_scaling(seed in any::<u64>(), n in 1usize..=2, s in 0.05f64..20.0) {
        let mut r = rng(seed);
        let ens = random_ensemble(&mut r, n, seed % 2 == 0, Field::Complex);
        let pt = TorusPoint::new(vec![0.2; n], vec![1.0; n]).unwrap();
        let f = system_through(&mut r, &ens, &pt);
        let d = distance_to_sigma(&f, &ens, &pt).unwrap();
        let lambda: Vec<Complex64> = (0..n).map(|i| Complex64::from_polar(s * (i + 1) as f64, i as f64)).collect();
        let ds = distance_to_sigma(&f.scaled(&lambda), &ens, &pt).unwrap();
        prop_assert!(rel_err(d, ds) < 1e-7, "{} vs {}", d, ds);
        prop_assert!(d <= (n as f64).sqrt() + 1e-9);
    }

    #[test]
    fn unmixed_bounds_collapse(seed in any::<u64>(), n in 1usize..=2) {
        let mut r = rng(seed);
        let ens = random_ensemble(&mut r, n, true, Field::Complex);
        let pt = TorusPoint::new(vec![-0.3; n], vec![2.0; n]).unwrap();
        let f = system_through(&mut r, &ens, &pt);
        let b = condition_bounds(&f, &ens, &pt).unwrap();
        prop_assert!((b.upper - b.lower).abs() <= 1e-6 * b.upper);
    }

    #[test]
    fn mixed_bounds_are_ordered(seed in any::<u64>()) {
        let mut r = rng(seed);
        let ens = random_ensemble(&mut r, 2, false, Field::Complex);
        let pt = TorusPoint::new(vec![0.1, -0.4], vec![0.5, 4.0]).unwrap();
        let f = system_through(&mut r, &ens, &pt);
        let b = condition_bounds(&f, &ens, &pt).unwrap();
        let mu = 1.0 / distance_to_sigma(&f, &ens, &pt).unwrap();
        prop_assert!(b.lower <= mu * (1.0 + 1e-8) && mu <= b.upper * (1.0 + 1e-8), "{} {} {}", b.lower, mu, b.upper);
    }

    #[test]
    fn dilation_is_invariant_under_congruence(seed in any::<u64>(), m in prop::array::uniform4(-2.0f64..2.0)) {
        let mut r = rng(seed);
        let hs: Vec<DMatrix<f64>> = (0..2)
            .map(|_| {
                let a = random_support(&mut r, 2);
                let c = random_covariance(&mut r, a.len());
                hessian(&a, &c, &[0.1, -0.2]).unwrap()
            })
            .collect();
        let t = DMatrix::from_row_slice(2, 2, &m);
        prop_assume!(t.determinant().abs() > 0.3);
        let moved: Vec<DMatrix<f64>> = hs.iter().map(|h| t.transpose() * h * &t).collect();
        let k0 = mixed_dilation(&hs).unwrap().kappa_upper;
        let k1 = mixed_dilation(&moved).unwrap().kappa_upper;
        prop_assert!(k0 >= 1.0 - 1e-9);
        prop_assert!(rel_err(k0, k1) < 1e-3, "{} vs {}", k0, k1);
        let same = mixed_dilation(&[hs[0].clone(), hs[0].clone() * 3.0]).unwrap();
        prop_assert!(same.kappa_upper < 1.0 + 1e-6);
    }

    #[test]
    fn mixed_density_is_symmetric_and_diagonal(seed in any::<u64>(), n in 1usize..=3) {
        let mut r = rng(seed);
        let hs: Vec<DMatrix<f64>> = (0..n)
            .map(|_| {
                let a = random_support(&mut r, n);
                let c = random_covariance(&mut r, a.len());
                hessian(&a, &c, &vec![0.3; n]).unwrap()
            })
            .collect();
        let d = mixed_density(&hs);
        let mut rev = hs.clone();
        rev.reverse();
        prop_assert!(rel_err(d, mixed_density(&rev)) < 1e-12);
        prop_assert!(d >= -1e-12);
        let same = vec![hs[0].clone(); n];
        let fact: f64 = (1..=n).map(|k| k as f64).product();
        prop_assert!(rel_err(mixed_density(&same), fact * (&hs[0] * 0.5).determinant()) < 1e-10);
    }

    #[test]
    fn mixed_volume_is_symmetric_and_translation_invariant(seed in any::<u64>(), shift in prop::array::uniform2(-3i64..3)) {
        let mut r = rng(seed);
        let a = random_support(&mut r, 2);
        let b = random_support(&mut r, 2);
        let ab = mixed_volume_oracle(&[a.hull(), b.hull()]).unwrap();
        prop_assert_eq!(&ab, &mixed_volume_oracle(&[b.hull(), a.hull()]).unwrap());
        prop_assert_eq!(&ab, &mixed_volume_oracle(&[a.hull().translate(&shift), b.hull()]).unwrap());
        let aa = mixed_volume_oracle(&[a.hull(), a.hull()]).unwrap();
        prop_assert_eq!(aa, sparsecond::supports::normalized_volume(&a.hull()));
    }

    #[test]
    fn momentum_lies_in_the_interior(seed in any::<u64>(), n in 1usize..=3, p in prop::array::uniform3(-2.5f64..2.5)) {
        let mut r = rng(seed);
        let a = random_support(&mut r, n);
        let c = random_covariance(&mut r, a.len());
        let y = momentum(&a, &c, &p[..n]).unwrap();
        prop_assert!(a.hull().interior_distance(&y) > 0.0);
        let h = hessian(&a, &c, &p[..n]).unwrap();
        prop_assert!((&h - h.transpose()).norm() < 1e-14);
        prop_assert!(h.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn region_volume_is_additive(cut in -1.5f64..1.5, lo in -3.0f64..-2.0, hi in 2.0f64..3.0) {
        let left = RegionBox::p_box(vec![(lo, cut), (0.0, 1.0)]);
        let right = RegionBox::p_box(vec![(cut, hi), (0.0, 1.0)]);
        let whole = Region::p_box(vec![(lo, hi), (0.0, 1.0)]).unwrap();
        let parts = Region::new(2, vec![left.clone(), right.clone()]).unwrap();
        prop_assert!((whole.lebesgue_volume() - parts.lebesgue_volume()).abs() < 1e-9);
        let overlap = Region::new(2, vec![left, right, RegionBox::p_box(vec![(cut - 0.5, cut + 0.5), (0.0, 1.0)])]).unwrap();
        prop_assert!((overlap.lebesgue_volume() - whole.lebesgue_volume()).abs() < 1e-9);
    }

    #[test]
    fn expected_roots_are_additive(cut in -1.0f64..1.0) {
        let ens = Ensemble::standard(vec![Support::segment(3)], Field::Complex).unwrap();
        let o = QuadOptions::default();
        let a = expected_roots(&ens, &Region::p_box(vec![(f64::NEG_INFINITY, cut)]).unwrap(), &o).unwrap();
        let b = expected_roots(&ens, &Region::p_box(vec![(cut, f64::INFINITY)]).unwrap(), &o).unwrap();
        prop_assert!((a.value + b.value - 3.0).abs() < 1e-6);
    }

    #[test]
    fn kostlan_weights_follow_the_multinomial_theorem(d in 1u32..6, n in 1usize..4) {
        let (a, c) = kostlan_covariance(d, n).unwrap();
        let total: f64 = c.weights().iter().sum();
        prop_assert!(rel_err(total, ((n + 1) as f64).powi(d as i32)) < 1e-12);
        prop_assert!(a.rows().iter().all(|r| r.iter().sum::<i64>() <= d as i64));
    }

    #[test]
    fn proportion_intervals_contain_the_estimate(events in 0usize..500, extra in 0usize..5000) {
        let trials = events + extra.max(1);
        let r = TrialReport::proportion(events, trials, 0, 0);
        prop_assert!(r.ci_low <= r.estimate && r.estimate <= r.ci_high);
        prop_assert!(r.ci_low >= 0.0 && r.ci_high <= 1.0);
    }

    #[test]
    fn torus_distance_is_symmetric(p in prop::array::uniform2(-3.0f64..3.0), q in prop::array::uniform2(-10.0f64..10.0), r in prop::array::uniform2(-10.0f64..10.0)) {
        let a = TorusPoint::new(p.to_vec(), q.to_vec()).unwrap();
        let b = TorusPoint::new(p.to_vec(), r.to_vec()).unwrap();
        prop_assert!((a.distance(&b) - b.distance(&a)).abs() < 1e-15);
        prop_assert!(a.distance(&b) <= std::f64::consts::PI + 1e-12);
    }
}

#[test]
fn samples_are_reproducible() {
    let ens = Ensemble::standard(vec![Support::unit_cube(2), Support::simplex(2)], Field::Real).unwrap();
    for t in 0..20 {
        assert_eq!(sample(&ens, derive_seed(4, t)), sample(&ens, derive_seed(4, t)));
    }
    assert_ne!(sample(&ens, derive_seed(4, 0)), sample(&ens, derive_seed(4, 1)));
}
