use cflab::rng::{derive_stream, sample_bernoulli, sample_normal, Provenance, RngStream};
use statrs::distribution::{ContinuousCDF, Normal};

fn draws(stream: &mut RngStream, n: usize, mu: f64, sd: f64) -> Vec<f64> {
    (0..n).map(|_| sample_normal(stream, mu, sd).unwrap()).collect()
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

#[test]
fn normal_moments_over_100k_draws() {
    let mut s = derive_stream(11, 0, 0, 0);
    let v = draws(&mut s, 100_000, 50.0, 5.0);
    let (m, sd) = mean_sd(&v);
    assert!((49.9..=50.1).contains(&m), "mean {m}");
    assert!((4.9..=5.1).contains(&sd), "sd {sd}");
}

#[test]
fn standard_normal_is_symmetric() {
    let mut s = derive_stream(12, 1, 2, 0);
    let below = (0..100_000).filter(|_| sample_normal(&mut s, 0.0, 1.0).unwrap() < 0.0).count();
    let frac = below as f64 / 100_000.0;
    assert!((0.494..=0.506).contains(&frac), "fraction {frac}");
}

#[test]
fn lower_tail_fraction_matches_cdf() {
    let mut s = derive_stream(13, 0, 0, 0);
    let below = (0..100_000).filter(|_| sample_normal(&mut s, 45.0, 6.0).unwrap() < 41.0).count();
    let frac = below as f64 / 100_000.0;
    assert!((0.24..=0.265).contains(&frac), "fraction {frac}");
}

#[test]
fn bernoulli_rate() {
    let mut s = derive_stream(14, 0, 0, 1);
    let ones: u32 = (0..100_000).map(|_| sample_bernoulli(&mut s, 0.6).unwrap() as u32).sum();
    let m = ones as f64 / 100_000.0;
    assert!((0.595..=0.605).contains(&m), "mean {m}");
}

#[test]
fn ks_statistic_against_standard_normal() {
    let mut s = derive_stream(15, 4, 4, 2);
    let mut v = draws(&mut s, 10_000, 0.0, 1.0);
    v.sort_by(f64::total_cmp);
    let phi = Normal::new(0.0, 1.0).unwrap();
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = phi.cdf(x);
            (f - i as f64 / n).abs().max((((i + 1) as f64) / n - f).abs())
        })
        .fold(0.0, f64::max);
    assert!(d < 0.02, "KS statistic {d}");
}

#[test]
fn neighbouring_replicates_are_uncorrelated() {
    let a = draws(&mut derive_stream(7, 0, 0, 0), 10_000, 0.0, 1.0);
    let b = draws(&mut derive_stream(7, 0, 1, 0), 10_000, 0.0, 1.0);
    let (ma, sa) = mean_sd(&a);
    let (mb, sb) = mean_sd(&b);
    let cov = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / 9_999.0;
    let corr = cov / (sa * sb);
    assert!(corr.abs() < 0.02, "corr {corr}");
}

#[test]
fn replay_after_provenance_round_trip() {
    let original = derive_stream(7, 3, 5, 1);
    let json = serde_json::to_string(&original.provenance()).unwrap();
    let restored: Provenance = serde_json::from_str(&json).unwrap();
    let mut a = original.clone();
    let mut b = RngStream::from_provenance(restored);
    for _ in 0..1000 {
        assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
    }
}

#[test]
fn purposes_give_distinct_streams() {
    let mut seen = std::collections::HashSet::new();
    for purpose in 0..8 {
        let mut s = derive_stream(7, 0, 0, purpose);
        assert!(seen.insert(s.uniform().to_bits()));
    }
}
