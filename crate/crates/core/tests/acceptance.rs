//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use collision_core::baselines::ClassifierConfig;
use collision_core::collision::{
    estimate_gramian, project_row_stochastic, recover_collision_matrix, smooth_gradient, smooth_objective,
    stochasticity_penalty, penalty_subgradient, Init, RecoveryConfig,
};
use collision_core::contrastive::{Architecture, OracleSimilarity};
use collision_core::harness::{divergence_curve, default_mu_grid, run_scenario, Method, Preset, ScenarioConfig};
use collision_core::matrix::{row_tvd, tvd, Matrix};
use collision_core::mixture::{pber_from_s, presets, reference_divergences, reference_divergences_quadrature, GaussianMixture};
use collision_core::nn::{Example, FeedForwardNet, Target, TrainConfig};
use collision_core::posterior::{estimate_posteriors, posterior_from_similarity, ComparisonSets};
use collision_core::rng;
use collision_core::simplex::SimplexVector;
use collision_core::ContrastiveConfig;
use rand::Rng as _;

struct Outcome {
    pass: bool,
    detail: String,
}

fn check(id: u32, title: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = f();
    let took = start.elapsed();
    let in_time = took <= limit;
    let pass = out.pass && in_time;
    let time_note = if in_time { String::new() } else { format!(" [over time limit {limit:?}]") };
    println!(
        "{} {id}. {title}: {} ({:.1}s){time_note}",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64()
    );
    pass
}

/// Symmetric doubly stochastic `αI + (1−α)M` from Sinkhorn-balanced positive `M`.
fn random_doubly_stochastic(k: usize, alpha: f64, r: &mut rng::Rng) -> Matrix<f64> {
    let mut a = Matrix::from_fn(k, k, |_, _| r.random_range(0.05..1.0));
    for _ in 0..500 {
        for i in 0..k {
            let s: f64 = a.row(i).iter().sum();
            a.row_mut(i).iter_mut().for_each(|v| *v /= s);
        }
        for j in 0..k {
            let s: f64 = (0..k).map(|i| a[(i, j)]).sum();
            (0..k).for_each(|i| a[(i, j)] /= s);
        }
    }
    let m = a.symmetrized().unwrap();
    Matrix::from_fn(k, k, |i, j| alpha * f64::from(u8::from(i == j)) + (1.0 - alpha) * m[(i, j)])
}

fn exact_gramian_recovery() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    let mut failures = Vec::new();
    for k in [3usize, 5, 8] {
        let mut r = rng::rng(1000 + k as u64);
        for case in 0..20 {
            let alpha = r.random_range(0.6..0.95);
            let s0 = random_doubly_stochastic(k, alpha, &mut r);
            assert!(s0.is_strictly_diag_dominant().unwrap() && (0..k).all(|i| s0[(i, i)] >= 0.6));
            let g = s0.gram();
            let mut inits = vec![Init::Identity];
            for _ in 0..5 {
                let noise = Matrix::from_fn(k, k, |i, j| f64::from(u8::from(i == j)) + r.random_range(0.0..0.05));
                inits.push(Init::Matrix(project_row_stochastic(&noise)));
            }
            for init in inits {
                cases += 1;
                let cfg = RecoveryConfig { init, ..RecoveryConfig::for_classes(k) };
                match recover_collision_matrix(&g, &cfg) {
                    Ok(rec) => {
                        let (max, _) = row_tvd(&rec.s, &s0).unwrap();
                        worst = worst.max(max);
                        if max >= 1e-3 {
                            failures.push(format!("K={k} case {case}: tvd {max:.2e}"));
                        }
                    }
                    Err(e) => failures.push(format!("K={k} case {case}: {e}")),
                }
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: format!("{cases} recoveries, worst max row TVD {worst:.2e} (< 1e-3){}", summarize(&failures)),
    }
}

fn summarize(failures: &[String]) -> String {
    if failures.is_empty() {
        String::new()
    } else {
        format!("; {} failed, first: {}", failures.len(), failures[0])
    }
}

fn gramian_consistency() -> Outcome {
    let gm = presets::scenario_a(3).unwrap();
    let truth = gm.true_collision_matrix(1_000_000, 21).unwrap();
    let (s, se) = (&truth.mean, &truth.std_err);
    let g = s.gram();
    let k = gm.k();
    // Delta-method standard error of (SSᵀ)_ij from independent row estimates.
    let g_se = Matrix::from_fn(k, k, |i, j| {
        let var: f64 = if i == j {
            (0..k).map(|l| (2.0 * s[(i, l)] * se[(i, l)]).powi(2)).sum()
        } else {
            (0..k).map(|l| (s[(j, l)] * se[(i, l)]).powi(2) + (s[(i, l)] * se[(j, l)]).powi(2)).sum()
        };
        var.sqrt()
    });
    let data = gm.sample(100_000, 22).unwrap();
    let est = estimate_gramian(&OracleSimilarity(&gm), &data, 10_000, 23).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..k {
        for j in 0..k {
            let combined = (est.std_err[(i, j)].powi(2) + g_se[(i, j)].powi(2)).sqrt();
            worst = worst.max((est.g[(i, j)] - g[(i, j)]).abs() / combined);
        }
    }
    Outcome { pass: worst <= 3.0, detail: format!("largest deviation {worst:.2} combined standard errors (<= 3)") }
}

fn end_to_end() -> Outcome {
    let arch = Architecture { hidden: 64, depth: 3, dropout: 0.0 };
    let train = TrainConfig { epochs: 100, ..TrainConfig::default() };
    let cfg = ScenarioConfig {
        methods: vec![Method::Gramian, Method::Naive],
        seeds: (0..5).collect(),
        samples_per_class: Some(250),
        contrastive: ContrastiveConfig { architecture: arch.clone(), train: train.clone(), swap_order: true },
        classifier: ClassifierConfig { architecture: arch, train },
        truth_mc_samples: 1_000_000,
        posterior_queries: 0,
        ..ScenarioConfig::preset(Preset::A { k: 3 })
    };
    let report = match run_scenario(&cfg) {
        Ok(r) => r,
        Err(e) => return Outcome { pass: false, detail: format!("run failed: {e}") },
    };
    let median = |m| report.method_summary(m).and_then(|s| s.median_max_row_tvd);
    match (median(Method::Gramian), median(Method::Naive)) {
        (Some(g), Some(n)) => Outcome {
            pass: g < 0.15 && g <= n,
            detail: format!("median max row TVD gramian {g:.4} (< 0.15), naive {n:.4} (gramian <= naive)"),
        },
        (g, n) => Outcome { pass: false, detail: format!("missing medians: gramian {g:?}, naive {n:?}") },
    }
}

/// Row-stochastic, strictly diagonally dominant, not necessarily symmetric.
fn random_dominant(k: usize, r: &mut rng::Rng) -> Matrix<f64> {
    let mut s = Matrix::from_fn(k, k, |_, _| r.random_range(0.0..1.0));
    for i in 0..k {
        let off: f64 = (0..k).filter(|&j| j != i).map(|j| s[(i, j)]).sum();
        s[(i, i)] = off + r.random_range(0.01..1.0);
        let total: f64 = s.row(i).iter().sum();
        s.row_mut(i).iter_mut().for_each(|v| *v /= total);
    }
    s
}

fn random_simplex(k: usize, r: &mut rng::Rng) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| -r.random_range(f64::EPSILON..1.0).ln()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

fn posterior_identity() -> Outcome {
    let mut r = rng::rng(41);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let k = r.random_range(2..=8);
        let s = random_dominant(k, &mut r);
        let y = random_simplex(k, &mut r);
        match posterior_from_similarity(&s, &s.mul_vec(&y).unwrap()) {
            Ok(est) => {
                for (a, b) in est.y_hat.iter().zip(&y) {
                    worst = worst.max((a - b).abs());
                }
            }
            Err(e) => return Outcome { pass: false, detail: format!("solve failed: {e}") },
        }
    }
    Outcome { pass: worst < 1e-8, detail: format!("1000 pairs, max abs error {worst:.2e} (< 1e-8)") }
}

fn oracle_posterior_quality() -> Outcome {
    let gm = presets::scenario_a(3).unwrap();
    let s = gm.true_collision_matrix(1_000_000, 51).unwrap().mean;
    let test = gm.sample_from_priors(1000, 52).unwrap();
    let xs: Vec<Vec<f64>> = (0..test.len()).map(|i| test.x(i).to_vec()).collect();
    let truth: Vec<SimplexVector<f64>> = xs.iter().map(|x| gm.true_posterior(x).unwrap()).collect();
    // The result depends on which 200 points land in each comparison set,
    // so the mean is averaged over independent draws of those sets.
    let mut per_draw = Vec::new();
    for draw in 0..10u64 {
        let pool = gm.sample(200, 1000 + draw).unwrap();
        let sets = ComparisonSets::from_dataset(&pool, 200, 2000 + draw).unwrap();
        let est = match estimate_posteriors(&OracleSimilarity(&gm), &s, &xs, &sets) {
            Ok(e) => e,
            Err(e) => return Outcome { pass: false, detail: format!("posterior failed: {e}") },
        };
        let mean = est.iter().zip(&truth).map(|(e, t)| tvd(e.y_hat.as_slice(), t.as_slice())).sum::<f64>() / xs.len() as f64;
        per_draw.push(mean);
    }
    let overall = per_draw.iter().sum::<f64>() / per_draw.len() as f64;
    let lo = per_draw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = per_draw.iter().copied().fold(0.0, f64::max);
    Outcome {
        pass: overall < 0.02,
        detail: format!(
            "mean TVD {overall:.4} (< 0.02) over 1000 test points, averaged over 10 comparison-set draws (range {lo:.4}..{hi:.4})"
        ),
    }
}

fn pbc_consistency() -> Outcome {
    let two_class = GaussianMixture::new(vec![vec![0.0], vec![1.5]], 1.0, SimplexVector::new(vec![0.3, 0.7]).unwrap()).unwrap();
    let mut details = Vec::new();
    let mut pass = true;
    for (name, gm) in [("scenario A", presets::scenario_a(3).unwrap()), ("two-class π=(0.3,0.7)", two_class)] {
        let s = gm.true_collision_matrix(1_000_000, 61).unwrap().mean;
        let predicted = pber_from_s(&s, gm.priors()).unwrap();
        let sim = gm.simulate_pbc_error(100_000, 62).unwrap();
        let z = (sim.value - predicted).abs() / sim.std_err;
        pass &= z <= 3.0;
        details.push(format!("{name}: simulated {:.4} vs {predicted:.4} ({z:.2} SE)", sim.value));
    }
    Outcome { pass, detail: details.join("; ") }
}

/// Composite trapezoid rule, independent of the library's adaptive quadrature.
fn trapezoid(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n).map(|i| f(a + i as f64 * h)).sum();
    h * (0.5 * (f(a) + f(b)) + inner)
}

fn divergence_shape() -> Outcome {
    let grid = default_mu_grid();
    let rows = match divergence_curve(&grid) {
        Ok(r) => r,
        Err(e) => return Outcome { pass: false, detail: format!("curve failed: {e}") },
    };
    let zero = rows[0].collision == 0.0;
    let monotone = rows.windows(2).all(|w| w[1].collision >= w[0].collision);
    let pdf = |x: f64, m: f64| (-0.5 * (x - m) * (x - m)).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut oracle_gap: f64 = 0.0;
    let mut closed_gap: f64 = 0.0;
    for row in &rows {
        let mu = row.mu;
        let overlap = trapezoid(
            |x| {
                let (a, b) = (pdf(x, mu), pdf(x, -mu));
                if a + b > 0.0 { 2.0 * a * b / (a + b) } else { 0.0 }
            },
            -mu - 15.0,
            mu + 15.0,
            200_000,
        );
        oracle_gap = oracle_gap.max((row.collision - (1.0 - overlap)).abs());
        let closed = reference_divergences(mu).unwrap();
        let quad = reference_divergences_quadrature(mu, 1e-10).unwrap();
        closed_gap = closed_gap
            .max((closed.tvd - quad.tvd).abs())
            .max((closed.hellinger - quad.hellinger).abs())
            .max((closed.kl - quad.kl).abs());
    }
    let at3 = rows.last().unwrap();
    let verified = oracle_gap < 1e-4;
    let pass = zero && monotone && verified && at3.mu == 3.0 && at3.collision > 0.99 && closed_gap < 1e-6;
    Outcome {
        pass,
        detail: format!(
            "D(0) = {}, monotone {monotone}, D(3) = {:.5} (> 0.99), max gap to trapezoid oracle {oracle_gap:.1e} (< 1e-4), \
             closed forms vs quadrature {closed_gap:.1e} (< 1e-6)",
            rows[0].collision, at3.collision
        ),
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

const STEP: f64 = 1e-6;

fn gradient_checks() -> Outcome {
    let mut r = rng::rng(81);
    let mut obj_worst: f64 = 0.0;
    for _ in 0..10 {
        let k = r.random_range(2..=6);
        // Positive entries with row sums away from 1 keep the penalty differentiable.
        let target = r.random_range(1.2..1.8) / k as f64;
        let s = Matrix::from_fn(k, k, |_, _| target * r.random_range(0.5..1.5));
        let g = random_doubly_stochastic(k, 0.7, &mut r).gram();
        let lambda = 10.0;
        let full = |m: &Matrix<f64>| smooth_objective(m, &g) + lambda * stochasticity_penalty(m);
        let analytic = smooth_gradient(&s, &g).add(&penalty_subgradient(&s).scale(lambda)).unwrap();
        for i in 0..k {
            for j in 0..k {
                let (mut up, mut down) = (s.clone(), s.clone());
                up[(i, j)] += STEP;
                down[(i, j)] -= STEP;
                let numeric = (full(&up) - full(&down)) / (2.0 * STEP);
                obj_worst = obj_worst.max(rel_err(analytic[(i, j)], numeric));
            }
        }
    }

    let mut net_worst: f64 = 0.0;
    for seed in 0..10u64 {
        let (d, k) = (r.random_range(2..=5), r.random_range(2..=4));
        let mut net = FeedForwardNet::mlp(d, r.random_range(3..=8), r.random_range(1..=3), k, seed).unwrap();
        // Zero-initialized biases can put a pre-activation exactly on the ReLU
        // kink when a whole layer is inactive; jitter to a generic point.
        for p in 0..net.parameters().len() {
            *net.parameter_mut(p) += r.random_range(-0.1..0.1);
        }
        let batch: Vec<Example> = (0..8)
            .map(|n| {
                let x: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
                let target = if n % 2 == 0 { Target::Class(r.random_range(0..k)) } else { Target::Soft(random_simplex(k, &mut r)) };
                Example::new(x, target)
            })
            .collect();
        let (grad, _) = net.grad(&batch).unwrap();
        let analytic = grad.flatten();
        let mut probe = net.clone();
        for (p, &a) in analytic.iter().enumerate() {
            let orig = *probe.parameter_mut(p);
            *probe.parameter_mut(p) = orig + STEP;
            let up = probe.loss(&batch).unwrap();
            *probe.parameter_mut(p) = orig - STEP;
            let down = probe.loss(&batch).unwrap();
            *probe.parameter_mut(p) = orig;
            net_worst = net_worst.max(rel_err(a, (up - down) / (2.0 * STEP)));
        }
    }
    Outcome {
        pass: obj_worst < 1e-4 && net_worst < 1e-4,
        detail: format!("max relative error: recovery objective {obj_worst:.1e}, MLP backprop {net_worst:.1e} (< 1e-4)"),
    }
}

fn main() -> ExitCode {
    let min = |m: u64| Duration::from_secs(60 * m);
    let results = [
        check(1, "exact-Gramian recovery", min(1), exact_gramian_recovery),
        check(2, "Gramian estimator consistency", min(2), gramian_consistency),
        check(3, "end-to-end collision matrix quality", min(10), end_to_end),
        check(4, "posterior identity", Duration::from_secs(5), posterior_identity),
        check(5, "posterior quality with oracle components", min(1), oracle_posterior_quality),
        check(6, "probabilistic Bayes classifier simulation", min(1), pbc_consistency),
        check(7, "collision divergence curve", Duration::from_secs(10), divergence_shape),
        check(8, "gradient checks", Duration::from_secs(30), gradient_checks),
    ];
    println!(
        "EXCLUDED 9. not reproducible at desk scale: MNIST collision matrix (S_4,9 = 0.028), real-dataset \
         precision/recall values, and scenarios B/C at 10,000 points per class with the Bayesian network \
         baseline; their pipelines are exercised on reduced synthetic stand-ins above"
    );
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} criteria passed", results.len());
    if passed == results.len() { ExitCode::SUCCESS } else { ExitCode::FAILURE }
}
