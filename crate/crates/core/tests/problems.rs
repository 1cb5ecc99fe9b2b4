use econ::data::{augment_first_coordinate, split_and_partition, Augment, Dataset, Split};
use econ::linalg;
use econ::oracle::{true_constraints, Batch, Population, Problem};
use econ::problems::{
    build_dp_scad, build_example_1d, build_neyman_pearson, build_roc_fairness, build_synthetic_quadratic, scad,
    DpScadSpec, NeymanPearsonSpec, Objective1d, RocFairnessSpec, ScadForm, SumLimit, SyntheticNoise,
};
use rand::{Rng as _, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_split(n: usize, d: usize, seed: u64) -> Split {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let features: Vec<f64> = (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect();
    let labels = (0..n).map(|_| if r.random_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let groups = (0..n).map(|i| i % 3 != 0).collect();
    let ds = Dataset::new(d, features, labels, Some(groups)).unwrap();
    split_and_partition(&augment_first_coordinate(&ds, Augment::GroupSign).unwrap(), seed).unwrap()
}

fn random_classes(m: usize, d: usize, seed: u64) -> Vec<Dataset> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    (0..m)
        .map(|c| {
            let n = 5 + 3 * c;
            let f: Vec<f64> = (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect();
            augment_first_coordinate(&Dataset::new(d, f, vec![c as f64; n], None).unwrap(), Augment::Ones).unwrap()
        })
        .collect()
}

/// Compares `<z, dir>` with central differences at points where the two
/// one-sided differences agree, and returns how many such points were used.
fn check_directional(
    name: &str,
    phi: &dyn Fn(&[f64]) -> f64,
    sub: &dyn Fn(&[f64]) -> Vec<f64>,
    dim: usize,
    scale: f64,
    seed: u64,
) -> usize {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;
    let mut used = 0;
    for _ in 0..400 {
        if used == 100 {
            break;
        }
        let x: Vec<f64> = (0..dim).map(|_| r.random_range(-scale..scale)).collect();
        let mut dir: Vec<f64> = (0..dim).map(|_| r.random_range(-1.0..1.0)).collect();
        let n = linalg::norm(&dir);
        dir.iter_mut().for_each(|v| *v /= n);
        let at = |t: f64| {
            let mut y = x.clone();
            linalg::axpy(t, &dir, &mut y);
            phi(&y)
        };
        let (lo, mid, hi) = (at(-h), at(0.0), at(h));
        let (fwd, bwd) = ((hi - mid) / h, (mid - lo) / h);
        if (fwd - bwd).abs() > 1e-4 * (1.0 + fwd.abs()) {
            continue;
        }
        let fd = (hi - lo) / (2.0 * h);
        let an = linalg::dot(&sub(&x), &dir);
        assert!((fd - an).abs() <= 1e-4 * (1.0 + an.abs()), "{name}: fd {fd} vs analytic {an} at {x:?}");
        used += 1;
    }
    used
}

fn check_problem(p: &dyn Problem, scale: f64, seed: u64) {
    let d = p.dim();
    let f = |x: &[f64]| p.objective(x);
    let zf = |x: &[f64]| p.full_objective_subgradient(x);
    assert_eq!(check_directional(&format!("{} objective", p.name()), &f, &zf, d, scale, seed), 100);
    for i in 0..p.num_constraints() {
        let g = |x: &[f64]| true_constraints(p, x).unwrap()[i];
        let zg = |x: &[f64]| p.full_constraint_subgradient(x, i);
        assert_eq!(check_directional(&format!("{} constraint {i}", p.name()), &g, &zg, d, scale, seed + 1), 100);
    }
}

#[test]
fn subgradients_match_finite_differences() {
    let split = random_split(90, 3, 1);
    check_problem(&build_synthetic_quadratic(None).unwrap(), 5.0, 2);
    check_problem(&build_example_1d(Objective1d::Linear { slope: -1.0 }).unwrap(), 1.0, 3);
    check_problem(&build_example_1d(Objective1d::Quadratic { target: 0.4 }).unwrap(), 1.0, 4);
    check_problem(&build_dp_scad(&split, &DpScadSpec::default()).unwrap(), 2.5, 5);
    check_problem(&build_roc_fairness(&split, &RocFairnessSpec { thresholds: 20, ..Default::default() }).unwrap(), 1.0, 6);
    check_problem(&build_neyman_pearson(random_classes(4, 3, 7), &NeymanPearsonSpec::default()).unwrap(), 0.3, 8);
}

#[test]
fn subgradient_norms_respect_constants() {
    let split = random_split(90, 3, 11);
    let problems: Vec<Box<dyn Problem>> = vec![
        Box::new(build_dp_scad(&split, &DpScadSpec::default()).unwrap()),
        Box::new(build_roc_fairness(&split, &RocFairnessSpec::default()).unwrap()),
        Box::new(build_neyman_pearson(random_classes(3, 3, 12), &NeymanPearsonSpec::default()).unwrap()),
    ];
    let mut r = ChaCha8Rng::seed_from_u64(13);
    for p in &problems {
        let c = p.constants();
        for _ in 0..200 {
            let raw: Vec<f64> = (0..p.dim()).map(|_| r.random_range(-3.0..3.0)).collect();
            let x = p.feasible_set().project(&raw).unwrap();
            assert!(linalg::norm(&p.full_objective_subgradient(&x)) <= c.l_f + 1e-12, "{}", p.name());
            for i in 0..p.num_constraints() {
                assert!(linalg::norm(&p.full_constraint_subgradient(&x, i)) <= c.l_g + 1e-12, "{}", p.name());
            }
        }
    }
}

#[test]
fn sampled_constraint_maps_are_mean_square_lipschitz() {
    let split = random_split(90, 3, 21);
    let problems: Vec<Box<dyn Problem>> = vec![
        Box::new(build_dp_scad(&split, &DpScadSpec::default()).unwrap()),
        Box::new(build_roc_fairness(&split, &RocFairnessSpec::default()).unwrap()),
        Box::new(build_neyman_pearson(random_classes(4, 3, 22), &NeymanPearsonSpec::default()).unwrap()),
        Box::new(build_synthetic_quadratic(Some(SyntheticNoise {
            sigma: 0.3,
            sigma_f: 0.3,
            sigma_g: 0.3,
            population: Some(50),
            seed: 1,
        })).unwrap()),
    ];
    let mut r = ChaCha8Rng::seed_from_u64(23);
    for p in &problems {
        let n = p.constraint_population().size().unwrap();
        let l = p.constants().lipschitz_g;
        for _ in 0..50 {
            let x: Vec<f64> = (0..p.dim()).map(|_| r.random_range(-0.3..0.3)).collect();
            let y: Vec<f64> = (0..p.dim()).map(|_| r.random_range(-0.3..0.3)).collect();
            let mut ms = 0.0;
            for i in 0..n {
                let b = Batch::Indices(vec![i]);
                ms += linalg::dist(&p.constraint_values(&x, &b), &p.constraint_values(&y, &b)).powi(2) / n as f64;
            }
            assert!(ms.sqrt() <= l * linalg::dist(&x, &y) * (1.0 + 1e-9), "{}", p.name());
        }
    }
}

#[test]
fn cubic_constraint_values() {
    let p = build_example_1d(Objective1d::Linear { slope: -1.0 }).unwrap();
    assert_eq!(true_constraints(&p, &[0.0]).unwrap(), vec![-6.0]);
    assert_eq!(true_constraints(&p, &[1.0]).unwrap(), vec![2.0]);
    let g = |x: f64| true_constraints(&p, &[x]).unwrap()[0];
    let h = 1e-4;
    for i in 1..1000 {
        let x = i as f64 / 1000.0;
        let second = (g(x + h) - 2.0 * g(x) + g(x - h)) / (h * h);
        assert!(second >= -4.0 - 1e-4);
    }
    assert_eq!(p.constants().rho_g, 4.0);
    assert!((p.constants().l_g - 25.0 / 3.0).abs() < 1e-12);
}

#[test]
fn scad_values() {
    for form in [ScadForm::AsPrinted, ScadForm::Continuous] {
        assert_eq!(scad(0.0, form), 0.0);
        assert_eq!(scad(1.0, form), 2.0);
        assert_eq!(scad(3.0, form), 3.0);
        assert_eq!(scad(-7.0, form), 3.0);
    }
    assert_eq!(scad(1.5, ScadForm::AsPrinted), 4.75);
    assert_eq!(scad(1.5, ScadForm::Continuous), 2.75);
}

#[test]
fn values_at_the_origin() {
    let split = random_split(60, 3, 31);
    let spec = DpScadSpec::default();
    let dp = build_dp_scad(&split, &spec).unwrap();
    let x = vec![0.0; dp.dim()];
    assert_eq!(dp.objective(&x), 1.0);
    for g in true_constraints(&dp, &x).unwrap() {
        assert!((g + spec.kappa).abs() < 1e-12);
    }
    let roc = build_roc_fairness(&split, &RocFairnessSpec::default()).unwrap();
    assert!(roc.objective(&x).abs() < 1e-12);
}

#[test]
fn dp_constraint_pair_is_the_absolute_gap() {
    let split = random_split(80, 4, 5);
    let spec = DpScadSpec::default();
    let dp = build_dp_scad(&split, &spec).unwrap();
    let sig = |t: f64| 1.0 / (1.0 + (-t).exp());
    let mean = |ds: &Dataset, x: &[f64]| {
        (0..ds.len()).map(|i| sig(ds.row(i).iter().zip(x).map(|(a, b)| a * b).sum())).sum::<f64>() / ds.len() as f64
    };
    let mut r = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let x: Vec<f64> = (0..dp.dim()).map(|_| r.random_range(-2.0..2.0)).collect();
        let gap = mean(&split.p, &x) - mean(&split.u, &x);
        let g = true_constraints(&dp, &x).unwrap();
        assert_eq!(g.len(), 2);
        assert!((g[0] - (gap - spec.kappa)).abs() < 1e-12);
        assert!((g[1] - (-gap - spec.kappa)).abs() < 1e-12);
        let viol = g.iter().map(|v| v.max(0.0)).sum::<f64>();
        assert!((viol - (gap.abs() - spec.kappa).max(0.0)).abs() < 1e-12);
    }
}

#[test]
fn dp_single_sample_subgradients_average_to_the_full_one() {
    let split = random_split(90, 3, 12);
    let dp = build_dp_scad(&split, &DpScadSpec::default()).unwrap();
    let n = match dp.constraint_population() {
        Population::Finite(n) => n,
        Population::Infinite => unreachable!(),
    };
    let mut r = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..20 {
        let x: Vec<f64> = (0..dp.dim()).map(|_| r.random_range(-2.0..2.0)).collect();
        for i in 0..2 {
            let mut mean = vec![0.0; dp.dim()];
            for j in 0..n {
                let z = dp.constraint_subgradient(&x, i, &Batch::Indices(vec![j]));
                linalg::axpy(1.0 / n as f64, &z, &mut mean);
            }
            let full = dp.full_constraint_subgradient(&x, i);
            assert!(linalg::dist(&mean, &full) < 1e-12, "constraint {i}");
        }
    }
}

#[test]
fn roc_objective_by_hand() {
    // Two training rows and one row per group.
    let features = vec![1.0, 0.5, -1.0, 0.25, 1.0, -0.5, -1.0, 2.0];
    let ds = Dataset::new(2, features, vec![1.0, -1.0, 1.0, -1.0], None).unwrap();
    let split = Split {
        main: ds.subset(&[0, 1]),
        p: ds.subset(&[2]),
        u: ds.subset(&[3]),
    };
    let spec = RocFairnessSpec { thresholds: 5, pretrain_epochs: 3, ..Default::default() };
    let p = build_roc_fairness(&split, &spec).unwrap();
    let sig = |t: f64| 1.0 / (1.0 + (-t).exp());
    let x = [0.3, -0.7];
    let (sp, su) = (1.0 * 0.3 + 0.5 * 0.7, -0.3 - 2.0 * 0.7);
    let want = p.thresholds().iter().map(|t| (sig(sp - t) - sig(su - t)).abs()).fold(0.0, f64::max);
    assert!((p.objective(&x) - want).abs() < 1e-15);
    let hinge = |a: [f64; 2], b: f64| (1.0 - b * (a[0] * x[0] + a[1] * x[1])).max(0.0);
    let loss = 0.5 * (hinge([1.0, 0.5], 1.0) + hinge([-1.0, 0.25], -1.0));
    let g = true_constraints(&p, &x).unwrap()[0];
    assert!((g - (loss - p.pretrained_loss() - p.slack())).abs() < 1e-15);
    assert!((p.slack() - 1e-3 * p.pretrained_loss()).abs() < 1e-18);
    assert_eq!(p.initial_point(), p.pretrained().to_vec());
    assert_eq!(p.thresholds().len(), 5);
}

#[test]
fn constants_follow_the_group_moments() {
    let split = random_split(120, 4, 41);
    let mean = |ds: &Dataset, sq: bool| {
        (0..ds.len()).map(|i| if sq { linalg::norm_sq(ds.row(i)) } else { linalg::norm(ds.row(i)) }).sum::<f64>()
            / ds.len() as f64
    };
    let spec = DpScadSpec::default();
    let dp = build_dp_scad(&split, &spec).unwrap();
    for (limit, k) in [(SumLimit::Printed, 4.0), (SumLimit::Population, 1.0)] {
        let c = dp.constants_for(limit);
        let rho = (2.0 * spec.lambda).max(k * (mean(&split.p, true) + mean(&split.u, true)));
        assert!((c.l_f - (5.0 * spec.lambda + mean(&split.main, false))).abs() < 1e-12);
        assert!((c.l_g - (mean(&split.p, false) + k * mean(&split.u, false))).abs() < 1e-12);
        assert!((c.rho_f - rho).abs() < 1e-12 && (c.rho_g - rho).abs() < 1e-12);
    }
    assert_eq!(dp.constants().l_g, dp.constants_for(SumLimit::Printed).l_g);
    assert_eq!(dp.alternative_constants().l_g, dp.constants_for(SumLimit::Population).l_g);

    let roc = build_roc_fairness(&split, &RocFairnessSpec::default()).unwrap();
    let c = roc.constants_for(SumLimit::Population);
    assert!((c.l_f - (mean(&split.p, false) + mean(&split.u, false))).abs() < 1e-12);
    assert!((c.l_g - mean(&split.main, false)).abs() < 1e-12);
    assert_eq!(c.rho_g, 0.0);
    assert!(roc.constants().sigma > 0.0);
}

#[test]
fn neyman_pearson_structure() {
    let classes = random_classes(4, 3, 51);
    let sizes: Vec<usize> = classes.iter().map(|c| c.len()).collect();
    let p = build_neyman_pearson(classes.clone(), &NeymanPearsonSpec::default()).unwrap();
    assert_eq!((p.dim(), p.num_constraints(), p.num_classes()), (16, 3, 4));
    assert_eq!(p.constraint_population(), Population::Finite(sizes[1..].iter().sum()));
    assert_eq!(p.objective_population(), Population::Finite(sizes[0]));
    // Single-sample batches average to the exact values.
    let mut r = ChaCha8Rng::seed_from_u64(52);
    let x: Vec<f64> = (0..16).map(|_| r.random_range(-0.1..0.1)).collect();
    let n = p.constraint_population().size().unwrap();
    let mut mean = vec![0.0; 3];
    for i in 0..n {
        let v = p.constraint_values(&x, &Batch::Indices(vec![i]));
        for c in 0..3 {
            mean[c] += (v[c] + 4.5) / n as f64;
        }
    }
    let exact = true_constraints(&p, &x).unwrap();
    for c in 0..3 {
        assert!((mean[c] - 4.5 - exact[c]).abs() < 1e-12);
    }
    // Class 2 loss by hand: sum over the other constrained classes 3 and 4.
    let sig = |t: f64| 1.0 / (1.0 + (-t).exp());
    let block = |l: usize| &x[l * 4..(l + 1) * 4];
    let c2 = &classes[1];
    let mut loss = 0.0;
    for i in 0..c2.len() {
        let a = c2.row(i);
        for l in [2, 3] {
            loss += sig(linalg::dot(block(1), a) - linalg::dot(block(l), a));
        }
    }
    loss /= c2.len() as f64;
    assert!((exact[0] - (loss - 4.5)).abs() < 1e-12);
    assert!(p.feasible_set().contains(&vec![0.3 / 2.0; 16], 0.0));
}
