use proptest::prelude::*;

use rdperm::data::{
    load_frame_from_reader, realize_window, write_frame, ColumnSchema, Covariate, CovariateColumn, Direction,
    Exclusion, UnitFrame, WindowSpec,
};
use rdperm::inference::{
    hl_closed_form, hl_estimate_on, invert_ci_on, test_effect_on, ConfidenceSet, GridSpec, WindowSample,
};
use rdperm::models::{fit, hat_apply, ModelFamily, ModelSpec};
use rdperm::permute::{permutation_test, PermutationPlan, Reference, Sidedness, StatKind, Statistic};
use rdperm::simlab::{
    generate, run_experiment, run_prop1_check, CovariateDgp, DgpSpec, EffectSpec, ExperimentConfig, InferenceConfig,
    Manipulation, RunningDist, WindowChoice,
};
use rdperm::spectests::{balance_on, mccrary_test, CovariateModel, McCraryOptions};
use rdperm::windowing::{donut_exclusion, select_bandwidth, surgical_exclusion, SweepOptions};

const KINDS: [StatKind; 4] = [
    StatKind::DiffMeans,
    StatKind::AbsDiffMeans,
    StatKind::SumCross,
    StatKind::RankSumStudentized,
];

/// Running values strictly on both sides of 0 plus matching outcomes.
fn instance(n_lo: usize, n_hi: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (n_lo..=n_hi).prop_flat_map(|n| {
        (
            prop::collection::vec(-1.0..1.0f64, n),
            prop::collection::vec(-3.0..3.0f64, n),
        )
            .prop_filter("both arms need two units", |(r, _)| {
                let t = r.iter().filter(|&&x| x <= 0.0).count();
                t >= 2 && r.len() - t >= 2
            })
    })
}

fn assignment(r: &[f64]) -> Vec<bool> {
    r.iter().map(|&x| x <= 0.0).collect()
}

fn exact_plan(kind: StatKind) -> PermutationPlan {
    PermutationPlan::new(11).with_statistic(Statistic::new(kind, Sidedness::TwoSided))
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
}

/// Ordinary least squares of `y` on `(1, r, z)` by Gaussian elimination on
/// the normal equations; returns the coefficient on `z`.
fn ols_z_coefficient(r: &[f64], y: &[f64], z: &[bool]) -> f64 {
    let mut a = [[0.0f64; 4]; 3];
    for i in 0..r.len() {
        let x = [1.0, r[i], if z[i] { 1.0 } else { 0.0 }];
        for p in 0..3 {
            for q in 0..3 {
                a[p][q] += x[p] * x[q];
            }
            a[p][3] += x[p] * y[i];
        }
    }
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        for row in 0..3 {
            if row != col {
                let f = a[row][col] / a[col][col];
                let pivot_row = a[col];
                for (x, p) in a[row].iter_mut().zip(pivot_row).skip(col) {
                    *x -= f * p;
                }
            }
        }
    }
    a[2][3] / a[2][2]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn realize_window_is_idempotent_and_monotone(
        (r, y) in instance(4, 60),
        b1 in 0.0..1.2f64,
        b2 in 0.0..1.2f64,
        ex in prop::option::of(-1.0..1.0f64),
    ) {
        let frame = UnitFrame::new(r.clone(), Some(y), vec![], 0.0, Direction::TreatedAtOrBelow).unwrap();
        let exclusions: Vec<Exclusion> = ex.map(|v| Exclusion::Value { value: r[0].min(v) }).into_iter().collect();
        let (small, large) = if b1 <= b2 { (b1, b2) } else { (b2, b1) };
        let ws = WindowSpec::symmetric(small).with_exclusions(exclusions.clone());
        let wl = WindowSpec::symmetric(large).with_exclusions(exclusions);
        let a = realize_window(&frame, &ws).unwrap();
        let again = realize_window(&frame, &ws).unwrap();
        prop_assert_eq!(&a, &again);
        let sub = frame.subset(&a.indices);
        let inner = realize_window(&sub, &ws).unwrap();
        prop_assert_eq!(inner.n, a.n);
        let l = realize_window(&frame, &wl).unwrap();
        prop_assert!(a.indices.iter().all(|i| l.indices.contains(i)));
    }

    #[test]
    fn assignment_agrees_with_direction_after_load_and_mutation(
        (r, y) in instance(4, 40),
        cutoff in -0.5..0.5f64,
        above in any::<bool>(),
    ) {
        let direction = if above { Direction::TreatedAbove } else { Direction::TreatedAtOrBelow };
        let Ok(frame) = UnitFrame::new(r.clone(), Some(y), vec![], cutoff, direction) else {
            return Ok(());
        };
        prop_assert!(frame.assignment_consistent());
        for (ri, zi) in frame.r().iter().zip(frame.z()) {
            prop_assert_eq!(*zi, direction.assign(*ri, cutoff));
        }
        prop_assert!(frame.centered().assignment_consistent());
        let idx: Vec<usize> = (0..frame.len()).rev().step_by(2).collect();
        prop_assert!(frame.subset(&idx).assignment_consistent());

        let mut buf = Vec::new();
        write_frame(&frame, &mut buf).unwrap();
        let schema = ColumnSchema { running: "r".into(), outcome: Some("y".into()), covariates: vec![] };
        let loaded = load_frame_from_reader(buf.as_slice(), &schema, cutoff, direction, false).unwrap();
        prop_assert!(loaded.frame.assignment_consistent());
        prop_assert_eq!(loaded.frame.r(), frame.r());
    }

    #[test]
    fn residual_maker_is_idempotent_and_shift_tilt_invariant(
        (r, v) in instance(6, 50),
        a in -5.0..5.0f64,
        b in -5.0..5.0f64,
    ) {
        for family in [ModelFamily::Constant, ModelFamily::Linear, ModelFamily::Quadratic] {
            let e = hat_apply(family, &r, &v).unwrap();
            let e2 = hat_apply(family, &r, &e).unwrap();
            for (x, y) in e.iter().zip(&e2) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
            let tilt = if family == ModelFamily::Constant { 0.0 } else { b };
            let shifted: Vec<f64> = v.iter().zip(&r).map(|(vi, ri)| vi + a + tilt * ri).collect();
            let fa = fit(ModelSpec::new(family), &r, &v, None).unwrap();
            let fb = fit(ModelSpec::new(family), &r, &shifted, None).unwrap();
            for (x, y) in fa.residuals.iter().zip(&fb.residuals) {
                prop_assert!((x - y).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn logistic_residuals_have_zero_mean(
        r in prop::collection::vec(-1.0..1.0f64, 30..80),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = r.iter().map(|&x| if rng.gen::<f64>() < 1.0 / (1.0 + (-x).exp()) { 1.0 } else { 0.0 }).collect();
        if let Ok(f) = fit(ModelSpec::new(ModelFamily::LogisticLinear), &r, &v, None) {
            let mean = f.residuals.iter().sum::<f64>() / r.len() as f64;
            prop_assert!(mean.abs() <= 1e-6, "mean residual {}", mean);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn exact_p_values_lie_on_the_lattice((r, v) in instance(4, 12)) {
        let z = assignment(&r);
        let n_t = z.iter().filter(|&&t| t).count();
        let total = binomial(z.len(), n_t);
        for kind in KINDS {
            let res = permutation_test(&v, &z, &exact_plan(kind)).unwrap();
            let exact = matches!(res.method, Reference::Exact { .. });
            prop_assert!(exact);
            let k = res.p_value * total;
            prop_assert!((k - k.round()).abs() < 1e-6, "{:?}: p * C = {}", kind, k);
        }
    }

    #[test]
    fn label_swap_leaves_two_sided_diff_means_p((r, v) in instance(4, 12)) {
        let z = assignment(&r);
        let swapped: Vec<bool> = z.iter().map(|t| !t).collect();
        let plan = exact_plan(StatKind::DiffMeans);
        let a = permutation_test(&v, &z, &plan).unwrap();
        let b = permutation_test(&v, &swapped, &plan).unwrap();
        prop_assert!(close(a.p_value, b.p_value, 1e-12));
        prop_assert!(close(a.observed_signed, -b.observed_signed, 1e-9));
    }

    #[test]
    fn shift_and_scale_invariance((r, v) in instance(4, 12), c in -10.0..10.0f64, lambda in 0.01..100.0f64) {
        let z = assignment(&r);
        let shifted: Vec<f64> = v.iter().map(|x| x + c).collect();
        let a = permutation_test(&v, &z, &exact_plan(StatKind::DiffMeans)).unwrap();
        let b = permutation_test(&shifted, &z, &exact_plan(StatKind::DiffMeans)).unwrap();
        prop_assert!(close(a.p_value, b.p_value, 1e-12));
        let scaled: Vec<f64> = v.iter().map(|x| x * lambda).collect();
        for kind in KINDS {
            let a = permutation_test(&v, &z, &exact_plan(kind)).unwrap();
            let b = permutation_test(&scaled, &z, &exact_plan(kind)).unwrap();
            prop_assert!(close(a.p_value, b.p_value, 1e-12), "{:?}", kind);
        }
    }

    #[test]
    fn results_do_not_depend_on_worker_count((r, v) in instance(30, 60), seed in any::<u64>()) {
        let z = assignment(&r);
        let plan = PermutationPlan::new(seed).with_max_exact(0).with_draws(3000);
        let run = |threads: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| permutation_test(&v, &z, &plan).unwrap())
        };
        prop_assert_eq!(run(1), run(4));
    }

    #[test]
    fn closed_form_equals_ols_coefficient((r, y) in instance(20, 200)) {
        let z = assignment(&r);
        let hl = hl_closed_form(ModelFamily::Linear, &r, &y, &z).unwrap();
        let ols = ols_z_coefficient(&r, &y, &z);
        let scale = y.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        prop_assert!((hl - ols).abs() <= 1e-8 * scale, "hl {} ols {}", hl, ols);
    }

    #[test]
    fn ci_agrees_with_grid_tests((r, y) in instance(6, 11), alpha in 0.05..0.5f64) {
        let sample = WindowSample::from_vectors(r.clone(), y, assignment(&r)).unwrap();
        let model = ModelSpec::new(ModelFamily::Linear);
        let plan = exact_plan(StatKind::DiffMeans);
        let Ok(inf) = invert_ci_on(&sample, model, &plan, alpha, None) else {
            return Ok(());
        };
        let contiguous = !inf.warnings.iter().any(|w| w.contains("unimodal"));
        for g in &inf.grid {
            let direct = test_effect_on(&sample, model, g.tau, &plan).unwrap();
            prop_assert_eq!(direct.p_value, g.p_value);
            if g.p_value >= alpha {
                prop_assert!(inf.ci.covers(g.tau));
            } else if contiguous {
                prop_assert!(!inf.ci.covers(g.tau));
            }
        }
    }

    #[test]
    fn translation_equivariance((r, y) in instance(6, 10), a in -3.0..3.0f64) {
        let z = assignment(&r);
        let model = ModelSpec::new(ModelFamily::Linear);
        let plan = exact_plan(StatKind::DiffMeans);
        let grid = GridSpec { lo: -4.0, hi: 4.0, step: 0.05 };
        let base = WindowSample::from_vectors(r.clone(), y.clone(), z.clone()).unwrap();
        let Ok(b) = invert_ci_on(&base, model, &plan, 0.1, Some(grid)) else {
            return Ok(());
        };
        let plus_const: Vec<f64> = y.iter().map(|v| v + a).collect();
        let c = invert_ci_on(&WindowSample::from_vectors(r.clone(), plus_const, z.clone()).unwrap(), model, &plan, 0.1, Some(grid)).unwrap();
        prop_assert!(close(b.hl.estimate, c.hl.estimate, 1e-8));
        prop_assert_eq!(b.ci.bounds(), c.ci.bounds());

        let plus_effect: Vec<f64> = y.iter().zip(&z).map(|(v, &t)| if t { v + a } else { *v }).collect();
        let shifted = GridSpec { lo: grid.lo + a, hi: grid.hi + a, step: grid.step };
        let d = invert_ci_on(&WindowSample::from_vectors(r.clone(), plus_effect, z).unwrap(), model, &plan, 0.1, Some(shifted)).unwrap();
        prop_assert!(close(b.hl.estimate + a, d.hl.estimate, 1e-8));
        match (b.ci, d.ci) {
            (ConfidenceSet::Interval { lower: l1, upper: u1 }, ConfidenceSet::Interval { lower: l2, upper: u2 }) => {
                prop_assert_eq!(l1.is_some(), l2.is_some());
                prop_assert_eq!(u1.is_some(), u2.is_some());
                if let (Some(x), Some(y)) = (l1, l2) { prop_assert!(close(x + a, y, 1e-9)); }
                if let (Some(x), Some(y)) = (u1, u2) { prop_assert!(close(x + a, y, 1e-9)); }
            }
            (x, y) => prop_assert_eq!(x.is_empty(), y.is_empty()),
        }
    }

    #[test]
    fn sum_cross_estimating_curve_is_affine((r, y) in instance(8, 40), c1 in -2.0..2.0f64, c2 in -2.0..2.0f64) {
        let z = assignment(&r);
        let sample = WindowSample::from_vectors(r.clone(), y, z.clone()).unwrap();
        let model = ModelSpec::new(ModelFamily::Linear);
        let plan = PermutationPlan::new(3)
            .with_max_exact(0)
            .with_draws(200)
            .with_statistic(Statistic::new(StatKind::SumCross, Sidedness::UpperTail));
        let g = |c: f64| {
            let t = test_effect_on(&sample, model, c, &plan).unwrap();
            t.observed_signed - t.null_mean
        };
        let zf: Vec<f64> = z.iter().map(|&t| if t { 1.0 } else { 0.0 }).collect();
        let b = hat_apply(ModelFamily::Linear, &r, &zf).unwrap();
        let slope = -zf.iter().zip(&b).map(|(x, y)| x * y).sum::<f64>();
        let (g0, g1, g2) = (g(0.0), g(c1), g(c2));
        let scale = 1.0 + g0.abs() + slope.abs() * 2.0;
        prop_assert!((g1 - (g0 + slope * c1)).abs() <= 1e-8 * scale);
        prop_assert!((g2 - (g0 + slope * c2)).abs() <= 1e-8 * scale);
        prop_assert!(slope < 0.0);
    }

    #[test]
    fn balance_is_invariant_to_affine_rescaling_and_row_order(
        (r, x) in instance(10, 60),
        a in -5.0..5.0f64,
        s in 0.1..10.0f64,
        rot in 0usize..60,
    ) {
        let z = assignment(&r);
        let models = vec![CovariateModel::new("x", ModelSpec::new(ModelFamily::Linear))];
        let base = balance_on(&r, &z, &models, std::slice::from_ref(&x), None).unwrap();
        let rescaled: Vec<f64> = x.iter().map(|v| a + s * v).collect();
        let other = balance_on(&r, &z, &models, &[rescaled], None).unwrap();
        prop_assert!((base.combined_stat - other.combined_stat).abs() <= 1e-8 * (1.0 + base.combined_stat));

        let n = r.len();
        let order: Vec<usize> = (0..n).map(|i| (i + rot) % n).collect();
        let pick = |v: &[f64]| order.iter().map(|&i| v[i]).collect::<Vec<f64>>();
        let zr: Vec<bool> = order.iter().map(|&i| z[i]).collect();
        let moved = balance_on(&pick(&r), &zr, &models, &[pick(&x)], None).unwrap();
        prop_assert!(close(base.combined_stat, moved.combined_stat, 1e-9));
        prop_assert!(close(base.p_combined_chi2, moved.p_combined_chi2, 1e-9));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn density_test_invariances(r in prop::collection::vec(-1.0..1.0f64, 300..600), rot in 0usize..600) {
        let opts = McCraryOptions::default();
        let Ok(base) = mccrary_test(&r, 0.0, &opts) else { return Ok(()); };
        let n = r.len();
        let rotated: Vec<f64> = (0..n).map(|i| r[(i + rot) % n]).collect();
        let moved = mccrary_test(&rotated, 0.0, &opts).unwrap();
        prop_assert_eq!(base.theta, moved.theta);
        prop_assert_eq!(base.p_value, moved.p_value);

        let fixed = McCraryOptions { bin_width: Some(base.bin_width), bandwidth: Some(base.bandwidth), ..opts };
        let single = mccrary_test(&r, 0.0, &fixed).unwrap();
        let doubled: Vec<f64> = r.iter().chain(&r).copied().collect();
        let twice = mccrary_test(&doubled, 0.0, &fixed).unwrap();
        if let (Some(t1), Some(t2), Some(s1), Some(s2)) = (single.theta, twice.theta, single.se, twice.se) {
            prop_assert!((t1 - t2).abs() <= 1e-9);
            prop_assert!((s2 - s1 / 2f64.sqrt()).abs() <= 1e-9 * s1);
        }
    }
}

fn heap_frame(seed: u64, fraction: f64) -> UnitFrame {
    let mut spec = DgpSpec::linear(1500, 1.0, EffectSpec::Constant { tau: 0.25 });
    spec.running = RunningDist::DiscreteGrid {
        min: -1.0,
        max: 1.0,
        step: 0.01,
        weights: None,
    };
    spec.manipulation = Some(Manipulation::HeapAt {
        value: 0.0,
        fraction,
        source_value: -0.3,
    });
    generate(&spec, seed).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn donut_exclusion_grows_with_alpha_g(seed in any::<u64>(), fraction in 0.0..0.06f64) {
        let frame = heap_frame(seed, fraction);
        let base = WindowSpec::symmetric(1.0);
        let opts = McCraryOptions::default();
        let mut last = -1.0f64;
        for alpha in [0.01, 0.05, 0.1, 0.2] {
            let k = match donut_exclusion(&frame, &base, alpha, 0.01, &opts, Some(true)) {
                Ok(s) => match s.window.exclusions.first() {
                    None => -1.0,
                    Some(Exclusion::Value { .. }) => 0.0,
                    Some(Exclusion::Interval { hi, .. }) => *hi,
                },
                Err(_) => f64::INFINITY,
            };
            prop_assert!(k >= last, "alpha {}: k {} < {}", alpha, k, last);
            last = k;
        }
    }

    #[test]
    fn surgical_prefix_agreement(seed in any::<u64>(), extra in prop::collection::vec(-0.5..0.5f64, 0..3)) {
        let frame = heap_frame(seed, 0.05);
        let base = WindowSpec::symmetric(1.0);
        let opts = McCraryOptions::default();
        let short = vec![vec![0.0]];
        let mut long = short.clone();
        long.push(extra);
        if let Ok(a) = surgical_exclusion(&frame, &base, &short, 0.05, &opts) {
            let b = surgical_exclusion(&frame, &base, &long, 0.05, &opts).unwrap();
            prop_assert_eq!(a, b);
        }
    }
}

#[test]
fn sweep_reports_the_error_budget() {
    let mut spec = DgpSpec::linear(600, 1.0, EffectSpec::Constant { tau: 0.0 });
    spec.covariates.push(CovariateDgp {
        name: "x".into(),
        poly: vec![0.0, 1.0],
        hinges: vec![],
        noise_sd: 1.0,
        binary: false,
    });
    let frame = generate(&spec, 5).unwrap();
    let models = vec![CovariateModel::new("x", ModelSpec::new(ModelFamily::Linear))];
    let options = SweepOptions {
        alpha_f: 0.1,
        alpha_g: 0.05,
        ..SweepOptions::default()
    };
    let sweep = select_bandwidth(&frame, &[1.0, 0.5, 0.25], &models, None, &options).unwrap();
    assert!((sweep.error_budget - 0.15).abs() < 1e-12);
}

#[test]
fn experiments_are_reproducible() {
    let config = ExperimentConfig::Size {
        dgp: DgpSpec::linear(40, 1.0, EffectSpec::Constant { tau: 0.0 }),
        inference: InferenceConfig {
            draws: 300,
            ..InferenceConfig::default()
        },
        n_seeds: 20,
        alpha: 0.05,
        seed: 99,
    };
    let a = run_experiment(&config).unwrap();
    let b = run_experiment(&config).unwrap();
    assert_eq!(a, b);
    let spec = DgpSpec::linear(30, 1.0, EffectSpec::RandomAroundMean { tau: 0.2, eta_sd: 0.5 });
    assert_eq!(generate(&spec, 4).unwrap(), generate(&spec, 4).unwrap());
}

#[test]
fn residual_mean_difference_vanishes_under_random_effects() {
    let spec = DgpSpec::linear(200, 1.0, EffectSpec::RandomAroundMean { tau: 0.25, eta_sd: 0.5 });
    let config = InferenceConfig {
        window: WindowChoice::Full,
        ..InferenceConfig::default()
    };
    let report = run_prop1_check(&spec, &config, 2000, 17).unwrap();
    println!("{}", report.summary_line());
    assert!(report.pass, "{}", report.summary_line());
}

#[test]
fn hl_bisection_agrees_with_closed_form_on_linear_statistic() {
    let spec = DgpSpec::linear(80, 1.0, EffectSpec::Constant { tau: 0.4 });
    let frame = generate(&spec, 8).unwrap();
    let sample = WindowSample::new(&frame, &WindowSpec::unbounded()).unwrap();
    let closed = hl_closed_form(ModelFamily::Linear, &sample.r, &sample.y, &sample.z).unwrap();
    // the rank statistic is nonlinear, so it goes through bisection
    let plan = PermutationPlan::new(2)
        .with_draws(2000)
        .with_statistic(Statistic::new(StatKind::RankSumStudentized, Sidedness::TwoSided));
    let bis = hl_estimate_on(&sample, ModelSpec::new(ModelFamily::Linear), &plan, None).unwrap();
    assert!(
        (bis.estimate - closed).abs() < 0.5,
        "bisection {} closed form {}",
        bis.estimate,
        closed
    );
}

#[test]
fn covariate_columns_survive_a_csv_round_trip() {
    let frame = UnitFrame::new(
        vec![-0.5, -0.25, 0.25, 0.5],
        Some(vec![1.0, 2.0, 3.0, 4.0]),
        vec![Covariate::new("x", vec![0.1, 0.2, 0.3, 0.4], None)],
        0.0,
        Direction::TreatedAtOrBelow,
    )
    .unwrap();
    let mut buf = Vec::new();
    write_frame(&frame, &mut buf).unwrap();
    let schema = ColumnSchema {
        running: "r".into(),
        outcome: Some("y".into()),
        covariates: vec![CovariateColumn {
            name: "x".into(),
            kind: None,
        }],
    };
    let back = load_frame_from_reader(buf.as_slice(), &schema, 0.0, Direction::TreatedAtOrBelow, false).unwrap();
    assert_eq!(back.frame, frame);
}
