//! Monte Carlo checks of the test statistics and estimators.

mod common;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use driverchain::chain::{estimate_chain, estimate_second_order, ChainModel, CountMatrix};
use driverchain::ingest::StateSequence;
use driverchain::stats::{chi_square_cdf, compare_groups, test_homogeneity, test_order, test_stationarity};
use driverchain::types::{DriverState, Environment};

use common::{highway, planted_second_order, sample_sequences, suburbs};
use DriverState::*;

fn step_counts(seqs: &[StateSequence]) -> Vec<CountMatrix> {
    estimate_chain(seqs).unwrap().step_counts().to_vec()
}

fn draw(rng: &mut ChaCha8Rng, probs: [f64; 3]) -> DriverState {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (j, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return DriverState::ALL[j];
        }
    }
    DriverState::ALL[probs.iter().rposition(|&p| p > 0.0).unwrap()]
}

type Rows = [[f64; 3]; 3];

fn rows(chain: &ChainModel, step: usize) -> Rows {
    chain.steps()[step].rows.map(|r| r.expect("defined row"))
}

fn sample_matrices(initial: [f64; 3], steps: [Rows; 2], n: usize, seed: u64) -> Vec<StateSequence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let s1 = draw(&mut rng, initial);
            let s2 = draw(&mut rng, steps[0][s1.code()]);
            let s3 = draw(&mut rng, steps[1][s2.code()]);
            StateSequence::new(format!("s{i}"), Environment::Highway, [s1, s2, s3])
        })
        .collect()
}

fn rate(reps: u64, f: impl Fn(u64) -> bool + Sync) -> f64 {
    (0..reps).into_par_iter().filter(|&r| f(r)).count() as f64 / reps as f64
}

#[test]
fn pearson_power_between_environments() {
    let (hw, sb) = (highway(), suburbs());
    let power = rate(1000, |r| {
        let a = step_counts(&sample_sequences(&hw, 206, 2 * r));
        let b = step_counts(&sample_sequences(&sb, 206, 2 * r + 1));
        compare_groups(&a[..1], &b[..1]).unwrap().rejects(0.05)
    });
    assert!(power >= 0.95, "power {power}");
}

#[test]
fn compare_groups_null_p_values_are_uniform() {
    let hw = highway();
    let mut p: Vec<f64> = (0..500u64)
        .into_par_iter()
        .map(|r| {
            let seqs = sample_sequences(&hw, 412, 7_000 + r);
            let (a, b) = seqs.split_at(206);
            compare_groups(&step_counts(a), &step_counts(b)).unwrap().p_value
        })
        .collect();
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    let ks = p
        .iter()
        .enumerate()
        .map(|(i, &v)| (v - i as f64 / n).abs().max(((i + 1) as f64 / n - v).abs()))
        .fold(0.0, f64::max);
    assert!(ks < 0.08, "KS distance {ks}");
}

#[test]
fn stationarity_null_rarely_rejects() {
    let hw = highway();
    let kept = rate(200, |r| {
        let m = rows(&hw, 0);
        let seqs = sample_matrices(hw.initial(), [m, m], 10_000, 90_000 + r);
        !test_stationarity(&estimate_chain(&seqs).unwrap()).unwrap().rejects(0.05)
    });
    assert!(kept >= 0.9, "non-rejection rate {kept}");
}

#[test]
fn homogeneity_type_one_error() {
    let hw = highway();
    let type1 = rate(500, |r| {
        let mut seqs = sample_sequences(&hw, 618, 30_000 + r);
        seqs.shuffle(&mut ChaCha8Rng::seed_from_u64(r));
        let groups: Vec<(String, Vec<CountMatrix>)> = seqs
            .chunks(206)
            .enumerate()
            .map(|(g, chunk)| (format!("g{g}"), step_counts(chunk)))
            .collect();
        test_homogeneity(&groups).unwrap().rejects(0.05)
    });
    assert!((type1 - 0.05).abs() <= 0.02, "type-I error {type1}");
}

/// Highway 1->2 matrix with the Normal row's Takeover share set to `p`.
fn with_normal_to_takeover(chain: &ChainModel, p: f64) -> [Rows; 2] {
    let mut first = rows(chain, 0);
    let row = first[Normal.code()];
    let rest = 1.0 - row[Takeover.code()];
    first[Normal.code()] = [p, row[Alert.code()] / rest * (1.0 - p), row[Normal.code()] / rest * (1.0 - p)];
    [first, rows(chain, 1)]
}

#[test]
fn homogeneity_detects_planted_sex_gap() {
    // Normal->Takeover 34.5% vs 21.9%, 1000 per group
    let hw = highway();
    let female = with_normal_to_takeover(&hw, 0.345);
    let male = with_normal_to_takeover(&hw, 0.219);
    let power = rate(200, |r| {
        let f = step_counts(&sample_matrices(hw.initial(), female, 1000, 2 * r));
        let m = step_counts(&sample_matrices(hw.initial(), male, 1000, 2 * r + 1));
        test_homogeneity(&[("female".into(), f), ("male".into(), m)])
            .unwrap()
            .rejects(0.05)
    });
    assert!(power >= 0.9, "power {power}");
}

#[test]
fn order_test_null_median_p() {
    let hw = highway();
    let mut p: Vec<f64> = (0..500u64)
        .into_par_iter()
        .map(|r| test_order(&sample_sequences(&hw, 206, 10_000 + r)).unwrap().p_value)
        .collect();
    p.sort_by(f64::total_cmp);
    let median = (p[249] + p[250]) / 2.0;
    assert!((0.35..=0.65).contains(&median), "median p {median}");
}

#[test]
fn test_result_p_is_survival_function() {
    let hw = highway();
    for r in [
        compare_groups(&hw.step_counts(), &suburbs().step_counts()).unwrap(),
        test_stationarity(&hw).unwrap(),
        test_order(&sample_sequences(&hw, 206, 1)).unwrap(),
    ] {
        let cdf = chi_square_cdf(r.statistic, r.df).unwrap();
        assert!((r.p_value - (1.0 - cdf)).abs() <= 1e-10);
    }
}

#[test]
fn second_order_estimator_on_first_order_data() {
    let seqs = sample_sequences(&highway(), 100_000, 5);
    let model = estimate_second_order(&seqs).unwrap();
    let mut worst = 0.0f64;
    for (s1, s2) in model.observed_contexts() {
        // rare contexts carry too few samples to be informative
        if model.context_total(s1, s2) < 1000 {
            continue;
        }
        let second = model.conditional(s1, s2).unwrap();
        let first = model.first_order(s2).unwrap();
        for k in 0..3 {
            worst = worst.max((second[k] - first[k]).abs());
        }
    }
    assert!(worst < 0.02, "max deviation {worst}");
}

#[test]
fn second_order_estimator_recovers_planted_gap() {
    let model = estimate_second_order(&planted_second_order(100_000, 0.3, 11)).unwrap();
    let a = model.conditional(Takeover, Alert).unwrap();
    let b = model.conditional(Normal, Alert).unwrap();
    let tv = 0.5 * a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>();
    assert!((tv - 0.3).abs() <= 0.02, "TV {tv}");
}

#[test]
fn first_order_estimator_converges() {
    let hw = highway();
    let chain = estimate_chain(&sample_sequences(&hw, 100_000, 3)).unwrap();
    for (est, truth) in chain.steps().iter().zip(hw.steps()) {
        assert_eq!(est.step, truth.step);
        for (a, b) in est.rows.iter().zip(&truth.rows) {
            let (a, b) = (a.unwrap(), b.unwrap());
            for k in 0..3 {
                assert!((a[k] - b[k]).abs() < 0.02, "{:?}", est.step);
            }
        }
    }
}
