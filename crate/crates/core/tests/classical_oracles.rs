use cortexkey_core::classical::{svm_objective, GnbModel, SvmConfig, SvmModel};
use cortexkey_core::ingest::{Dataset, TrialWindow, WindowSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn dataset(rows: Vec<(Vec<f64>, usize)>) -> Dataset {
    Dataset::new(
        rows.into_iter()
            .enumerate()
            .map(|(i, (x, l))| {
                let d = x.len();
                TrialWindow::new(x, 1, d, l, WindowSource { session: "toy".into(), onset: i }).unwrap()
            })
            .collect(),
    )
    .unwrap()
}

/// Three classes with random centres, every class present.
fn toy(seed: u64, n: usize, d: usize) -> (Dataset, Vec<Vec<f64>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let scales: Vec<f64> = (0..3).map(|_| rng.random_range(0.5..1.5)).collect();
    let rows = (0..n)
        .map(|i| {
            let l = if i < 3 { i } else { rng.random_range(0..3) };
            let x = centres[l]
                .iter()
                .map(|c| c + scales[l] * rng.sample::<f64, _>(StandardNormal))
                .collect();
            (x, l)
        })
        .collect();
    let tests = (0..30)
        .map(|_| (0..d).map(|_| rng.random_range(-4.0..4.0)).collect())
        .collect();
    (dataset(rows), tests)
}

/// Direct-density Bayes: products of Gaussian pdfs, no logs.
struct BruteGnb {
    priors: Vec<f64>,
    means: Vec<Vec<f64>>,
    vars: Vec<Vec<f64>>,
}

impl BruteGnb {
    fn fit(data: &Dataset) -> Self {
        let d = data.num_features();
        let mut priors = vec![0.0; 3];
        let mut means = vec![vec![0.0; d]; 3];
        let mut vars = vec![vec![0.0; d]; 3];
        // overall variance for the floor, two-pass
        let n = data.len() as f64;
        let mut max_var: f64 = 0.0;
        for j in 0..d {
            let m = data.windows.iter().map(|w| w.values[j]).sum::<f64>() / n;
            let v = data.windows.iter().map(|w| (w.values[j] - m).powi(2)).sum::<f64>() / n;
            max_var = max_var.max(v);
        }
        let floor = if max_var > 0.0 { 1e-9 * max_var } else { 1e-9 };
        for c in 0..3 {
            let members: Vec<&TrialWindow> = data.windows.iter().filter(|w| w.label == c).collect();
            let k = members.len() as f64;
            priors[c] = k / n;
            for j in 0..d {
                let m = members.iter().map(|w| w.values[j]).sum::<f64>() / k;
                let v = members.iter().map(|w| (w.values[j] - m).powi(2)).sum::<f64>() / k;
                means[c][j] = m;
                vars[c][j] = v.max(floor);
            }
        }
        Self { priors, means, vars }
    }

    fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let joint: Vec<f64> = (0..3)
            .map(|c| {
                let mut p = self.priors[c];
                for (j, &xj) in x.iter().enumerate() {
                    let v = self.vars[c][j];
                    p *= (-(xj - self.means[c][j]).powi(2) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
                }
                p
            })
            .collect();
        let z: f64 = joint.iter().sum();
        joint.into_iter().map(|p| p / z).collect()
    }
}

fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

#[test]
fn gnb_matches_direct_density_oracle() {
    for seed in 0..20 {
        let (data, tests) = toy(seed, 60, 5);
        let model = GnbModel::fit(&data).unwrap();
        let oracle = BruteGnb::fit(&data);
        for c in 0..3 {
            assert!((model.priors[c] - oracle.priors[c]).abs() < 1e-12);
            for j in 0..5 {
                assert!((model.means[c][j] - oracle.means[c][j]).abs() < 1e-12);
                assert!((model.variances[c][j] - oracle.vars[c][j]).abs() < 1e-12);
            }
        }
        for x in tests.iter().chain(data.windows.iter().map(|w| &w.values)) {
            let post = oracle.posterior(x);
            let (class, probs) = model.predict(x).unwrap();
            let lp = model.log_posterior(x).unwrap();
            assert_eq!(class, first_max(&post), "seed {seed}");
            for c in 0..3 {
                assert!((lp[c] - post[c].ln()).abs() < 1e-9, "seed {seed}: {} vs {}", lp[c], post[c].ln());
            }
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn gnb_moments_match_two_pass_on_50_samples() {
    let (data, _) = toy(77, 50, 8);
    let model = GnbModel::fit(&data).unwrap();
    let oracle = BruteGnb::fit(&data);
    for c in 0..3 {
        for j in 0..8 {
            assert!((model.means[c][j] - oracle.means[c][j]).abs() < 1e-12);
            assert!((model.variances[c][j] - oracle.vars[c][j]).abs() < 1e-12);
        }
    }
}

#[test]
fn gnb_argmax_ignores_common_likelihood_scale() {
    let (data, tests) = toy(5, 60, 5);
    let model = GnbModel::fit(&data).unwrap();
    for x in &tests {
        let jll = model.joint_log_likelihood(x).unwrap();
        let shifted: Vec<f64> = jll.iter().map(|v| v + 123.456).collect();
        assert_eq!(first_max(&jll), first_max(&shifted));
        assert_eq!(model.predict(x).unwrap().0, first_max(&jll));
    }
}

fn two_points() -> Dataset {
    dataset(vec![(vec![-1.0], 0), (vec![1.0], 1)])
}

#[test]
fn svm_two_point_sign_agrees_with_grid_oracle() {
    // C = 1 makes the optimum unique at w = 1, b = 0
    let data = two_points();
    let cfg = SvmConfig { c: 1.0, epochs: 1000, seed: 42 };
    let model = SvmModel::fit(&data, cfg).unwrap();

    let mut best = (f64::INFINITY, 0.0, 0.0);
    for wi in -300..=300 {
        for bi in -300..=300 {
            let (w, b) = (wi as f64 / 100.0, bi as f64 / 100.0);
            let obj = svm_objective(&[w], b, 1.0, &data, 1);
            if obj < best.0 {
                best = (obj, w, b);
            }
        }
    }
    let oracle_value = best.1 * 0.5 + best.2;
    let dv = model.decision_values(&[0.5]).unwrap();
    assert!(oracle_value > 0.0);
    assert!(dv[1] > 0.0, "decision for B at 0.5 = {}", dv[1]);
    assert_eq!(model.predict(&[0.5]).unwrap(), 1);
    assert_eq!(model.predict(&[-0.5]).unwrap(), 0);
    let ours = svm_objective(&model.weights[1], model.biases[1], 1.0, &data, 1);
    assert!(ours <= best.0 + 0.05, "{ours} vs grid {}", best.0);
}

fn separable_blobs(seed: u64, n: usize) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres = [[0.0, 8.0], [7.0, -4.0], [-7.0, -4.0]];
    dataset(
        (0..n)
            .map(|i| {
                let l = i % 3;
                let x = centres[l].iter().map(|c| c + rng.random_range(-1.5..1.5)).collect();
                (x, l)
            })
            .collect(),
    )
}

#[test]
fn svm_separates_blobs() {
    let train = separable_blobs(1, 40);
    let model = SvmModel::fit(&train, SvmConfig::default()).unwrap();
    let acc = |d: &Dataset| {
        d.windows.iter().filter(|w| model.predict(&w.values).unwrap() == w.label).count() as f64 / d.len() as f64
    };
    assert_eq!(acc(&train), 1.0);
    assert_eq!(acc(&separable_blobs(2, 60)), 1.0);
}

#[test]
fn svm_averaged_objective_never_increases() {
    for (seed, data) in [(1, separable_blobs(3, 40)), (2, toy(9, 60, 5).0)] {
        let cfg = SvmConfig { seed, ..SvmConfig::default() };
        let (_, trace) = SvmModel::fit_traced(&data, cfg, 100).unwrap();
        assert_eq!(trace.len(), 10);
        for pair in trace.windows(2) {
            for k in 0..3 {
                assert!(pair[1][k] <= pair[0][k] + 1e-12, "class {k}: {} -> {}", pair[0][k], pair[1][k]);
            }
        }
    }
}

#[test]
fn fits_are_bit_identical() {
    let (data, _) = toy(11, 60, 5);
    let a = GnbModel::fit(&data).unwrap();
    let b = GnbModel::fit(&data).unwrap();
    assert_eq!(a, b);
    let cfg = SvmConfig { epochs: 50, ..SvmConfig::default() };
    let s1 = SvmModel::fit(&data, cfg).unwrap();
    let s2 = SvmModel::fit(&data, cfg).unwrap();
    let bits = |m: &SvmModel| -> Vec<u64> { m.weights.concat().iter().chain(&m.biases).map(|v| v.to_bits()).collect() };
    assert_eq!(bits(&s1), bits(&s2));
}
