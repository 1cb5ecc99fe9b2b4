use econ::linalg;
use econ::oracle::{draw_batch, eval_constraints, sample_subgrad_f, sample_subgrad_g, Batch, BatchSpec, Population, Problem};
use econ::problems::{build_synthetic_quadratic, SyntheticNoise};
use econ::rng;
use econ::set::FeasibleSet;
use econ::Error;
use proptest::prelude::*;
use rand::Rng as _;

fn vec_of(d: usize, scale: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-scale..scale, d)
}

fn sets() -> Vec<FeasibleSet> {
    vec![
        FeasibleSet::ball(4, 1.5).unwrap(),
        FeasibleSet::cube(4, 0.7).unwrap(),
        FeasibleSet::ball_product(2, 2, 0.3).unwrap(),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn projection_lands_in_set_and_is_idempotent(x in vec_of(4, 10.0)) {
        for s in sets() {
            let p = s.project(&x).unwrap();
            prop_assert!(s.contains(&p, 1e-12));
            let pp = s.project(&p).unwrap();
            prop_assert!(linalg::dist(&p, &pp) <= 1e-12);
        }
    }

    #[test]
    fn projection_is_nonexpansive(x in vec_of(4, 10.0), y in vec_of(4, 10.0)) {
        for s in sets() {
            let (px, py) = (s.project(&x).unwrap(), s.project(&y).unwrap());
            prop_assert!(linalg::dist(&px, &py) <= linalg::dist(&x, &y) + 1e-12);
        }
    }

    #[test]
    fn projected_pairs_respect_diameter(x in vec_of(4, 10.0), y in vec_of(4, 10.0)) {
        for s in sets() {
            let (px, py) = (s.project(&x).unwrap(), s.project(&y).unwrap());
            prop_assert!(linalg::dist(&px, &py) <= s.diameter() + 1e-12);
        }
    }

    #[test]
    fn interior_points_are_fixed(x in vec_of(4, 0.25)) {
        let s = FeasibleSet::ball(4, 1.0).unwrap();
        prop_assert_eq!(s.project(&x).unwrap(), x);
    }

    #[test]
    fn sampled_batches_index_the_population(n in 1usize..500, size in 1usize..64, seed in any::<u64>()) {
        let mut r = rng::stream(seed, rng::STREAM_BATCH);
        let b = draw_batch(Population::Finite(n), BatchSpec::sampled(size), &mut r).unwrap();
        prop_assert_eq!(b.len(), size);
        for i in b.indices() {
            prop_assert!(i < n);
        }
    }
}

#[test]
fn ball_projection_reference() {
    let s = FeasibleSet::ball(2, 1.0).unwrap();
    assert_eq!(s.project(&[0.3, 0.4]).unwrap(), vec![0.3, 0.4]);
    let p = s.project(&[3.0, 4.0]).unwrap();
    assert!(linalg::dist(&p, &[0.6, 0.8]) < 1e-15);
    let b = FeasibleSet::cube(2, 1.0).unwrap();
    assert_eq!(b.project(&[2.0, -0.5]).unwrap(), vec![1.0, -0.5]);
}

#[test]
fn diameters() {
    assert_eq!(FeasibleSet::ball(3, 2.0).unwrap().diameter(), 4.0);
    assert!((FeasibleSet::cube(4, 5.0).unwrap().diameter() - 20.0).abs() < 1e-12);
}

#[test]
fn projection_rejects_bad_input() {
    let s = FeasibleSet::ball(2, 1.0).unwrap();
    assert!(matches!(s.project(&[1.0]), Err(Error::DimensionMismatch { .. })));
    assert!(s.project(&[f64::NAN, 0.0]).is_err());
    assert!(FeasibleSet::ball(2, 0.0).is_err());
    assert!(FeasibleSet::ball(2, -1.0).is_err());
}

#[test]
fn full_batches_need_a_matching_finite_population() {
    let mut r = rng::stream(0, 0);
    assert_eq!(draw_batch(Population::Finite(7), BatchSpec::full(7), &mut r).unwrap(), Batch::Full(7));
    assert!(draw_batch(Population::Finite(7), BatchSpec::full(6), &mut r).is_err());
    assert!(draw_batch(Population::Infinite, BatchSpec::full(7), &mut r).is_err());
    assert!(matches!(draw_batch(Population::Finite(7), BatchSpec::sampled(0), &mut r), Err(Error::EmptyBatch)));
    assert_eq!(BatchSpec::for_population(7, Population::Finite(7)), BatchSpec::full(7));
    assert_eq!(BatchSpec::for_population(3, Population::Finite(7)), BatchSpec::sampled(3));
}

#[test]
fn batch_mean_is_unbiased_for_finite_sums() {
    let n = 300;
    let nz = SyntheticNoise { sigma: 1.0, sigma_f: 0.5, sigma_g: 0.5, population: Some(n), seed: 9 };
    let p = build_synthetic_quadratic(Some(nz)).unwrap();
    let x = [0.4, -1.2];
    let exact = p.exact_constraints(&x).unwrap()[0];
    let mut r = rng::stream(4, rng::STREAM_CONSTRAINT);
    let reps = 10_000;
    let vals: Vec<f64> =
        (0..reps).map(|_| eval_constraints(&p, &x, BatchSpec::sampled(8), &mut r).unwrap().0[0]).collect();
    let mean = vals.iter().sum::<f64>() / reps as f64;
    let sd = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (reps as f64 - 1.0)).sqrt();
    assert!((mean - exact).abs() <= 4.0 * sd / (reps as f64).sqrt(), "mean {mean} exact {exact}");
}

#[test]
fn sampled_subgradients_are_bounded() {
    let nz = SyntheticNoise { sigma: 0.2, sigma_f: 0.3, sigma_g: 0.3, population: Some(500), seed: 1 };
    let p = build_synthetic_quadratic(Some(nz)).unwrap();
    let c = p.constants().clone();
    let mut r = rng::stream(2, rng::STREAM_OBJECTIVE);
    for size in [1usize, 4, 16] {
        let slack = 6.0 / (size as f64).sqrt();
        for _ in 0..2000 {
            let x = [r.random_range(-7.0..7.0), r.random_range(-7.0..7.0)];
            let zf = sample_subgrad_f(&p, &x, BatchSpec::sampled(size), &mut r).unwrap();
            assert!(linalg::norm(&zf) <= c.l_f + c.sigma_f * slack);
            let zg = sample_subgrad_g(&p, &x, 0, BatchSpec::sampled(size), &mut r).unwrap();
            assert!(linalg::norm(&zg) <= c.l_g + c.sigma_g * slack);
        }
    }
    assert!(matches!(
        sample_subgrad_g(&p, &[0.0, 0.0], 1, BatchSpec::sampled(1), &mut r),
        Err(Error::IndexOutOfRange { .. })
    ));
}

#[test]
fn convex_oracles_satisfy_the_subgradient_inequality() {
    let p = build_synthetic_quadratic(None).unwrap();
    let mut r = rng::stream(8, rng::STREAM_AUX);
    for _ in 0..1000 {
        let x = [r.random_range(-7.0..7.0), r.random_range(-7.0..7.0)];
        let y = [r.random_range(-7.0..7.0), r.random_range(-7.0..7.0)];
        let z = p.full_objective_subgradient(&x);
        let lin = p.objective(&x) + linalg::dot(&z, &linalg::sub(&y, &x));
        assert!(p.objective(&y) >= lin - 1e-9);
    }
}

#[test]
fn sigmoid_is_stable() {
    assert_eq!(linalg::sigmoid(0.0), 0.5);
    assert!(linalg::sigmoid(-800.0) >= 0.0);
    assert_eq!(linalg::sigmoid(800.0), 1.0);
    assert!((linalg::sigmoid(1.0) - 0.7310585786300049).abs() < 1e-15);
}

#[test]
fn argmax_prefers_the_first_tie() {
    assert_eq!(linalg::argmax_first(&[1.0, 3.0, 3.0]), Some(1));
    assert_eq!(linalg::argmax_first(&[]), None);
}

