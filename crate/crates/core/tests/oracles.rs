use mi_bracket::attribution::shares;
use mi_bracket::club::{ClubConfig, ClubEstimator};
use mi_bracket::data::{
    align_pair, load_features, save_features, stratified_sample, synth_generate, BatchPlan, FeatureMatrix, PairBatch,
    PairingPolicy, SyntheticSpec,
};
use mi_bracket::fusion::fuse;
use mi_bracket::ksg::{ksg_estimate, KsgConfig, NeighborSearch};
use mi_bracket::mine::{MineConfig, MineEstimator};
use mi_bracket::nn::MlpNet;
use mi_bracket::{seed, Error};
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::digamma;

fn standardise(m: &FeatureMatrix) -> Vec<Vec<f64>> {
    let n = m.rows() as f64;
    let cols: Vec<(f64, f64)> = (0..m.cols())
        .map(|j| {
            let mean = m.column(j).sum::<f64>() / n;
            let var = m.column(j).map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .collect();
    (0..m.rows()).map(|i| m.row(i).iter().zip(&cols).map(|(v, (mu, sd))| (v - mu) / sd).collect()).collect()
}

fn cheb(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
}

/// Textbook KSG (first algorithm) by exhaustive search.
fn naive_ksg(x: &FeatureMatrix, y: &FeatureMatrix, k: usize) -> f64 {
    let (xs, ys) = (standardise(x), standardise(y));
    let n = xs.len();
    let mut acc = 0.0;
    for i in 0..n {
        let mut d: Vec<f64> =
            (0..n).filter(|&j| j != i).map(|j| cheb(&xs[i], &xs[j]).max(cheb(&ys[i], &ys[j]))).collect();
        d.sort_by(f64::total_cmp);
        let eps = d[k - 1];
        let nx = (0..n).filter(|&j| j != i && cheb(&xs[i], &xs[j]) < eps).count();
        let ny = (0..n).filter(|&j| j != i && cheb(&ys[i], &ys[j]) < eps).count();
        acc += digamma(nx as f64 + 1.0) + digamma(ny as f64 + 1.0);
    }
    digamma(k as f64) + digamma(n as f64) - acc / n as f64
}

fn gaussian_pair(rho: f64, n: usize, seed_value: u64) -> (FeatureMatrix, FeatureMatrix) {
    let p = synth_generate(&SyntheticSpec::gaussian(rho, n, seed_value)).unwrap();
    (p.x, p.y)
}

#[test]
fn ksg_matches_exhaustive_reference() {
    for (rho, n, k) in [(0.0, 150, 5), (0.5, 200, 5), (0.8, 120, 3), (0.3, 90, 1)] {
        let (x, y) = gaussian_pair(rho, n, 9);
        let cfg = KsgConfig { k, noise: 0.0, ..KsgConfig::default() };
        for search in [NeighborSearch::KdTree, NeighborSearch::BruteForce] {
            let got = ksg_estimate(&x, &y, &KsgConfig { search, ..cfg.clone() }).unwrap();
            let want = naive_ksg(&x, &y, k);
            assert!((got - want).abs() < 1e-9, "rho {rho}: {got} vs {want}");
        }
    }
}

#[test]
fn ksg_approaches_gaussian_closed_form() {
    for rho in [0.0, 0.6, -0.9] {
        let (x, y) = gaussian_pair(rho, 3000, 21);
        let truth = -0.5 * (1.0 - rho * rho).ln();
        let got = ksg_estimate(&x, &y, &KsgConfig::default()).unwrap();
        assert!((got - truth).abs() < 0.05, "rho {rho}: {got} vs {truth}");
    }
}

#[test]
fn ksg_is_symmetric_and_scale_free() {
    let (x, y) = gaussian_pair(0.7, 400, 3);
    let cfg = KsgConfig::default();
    let a = ksg_estimate(&x, &y, &cfg).unwrap();
    assert_eq!(a, ksg_estimate(&y, &x, &cfg).unwrap());
    let scaled = x.map_values(|_, v| 1e3 * v - 7.0);
    assert!((a - ksg_estimate(&scaled, &y, &cfg).unwrap()).abs() < 1e-9);
}

#[test]
fn fused_rows_match_hand_arithmetic() {
    // (mine, club, ksg) -> (enforced mine, width, weight, final)
    let cases = [
        ((0.2, 0.5, 0.3), (0.2, 0.3, 0.3, 0.7 * 0.35 + 0.3 * 0.3)),
        ((0.5, 0.2, 0.4), (0.2, 0.0, 0.3, 0.7 * 0.2 + 0.3 * 0.4)),
        ((0.0, 1.0, 0.5), (0.0, 1.0, 0.3, 0.7 * 0.5 + 0.3 * 0.5)),
        ((0.1, 2.6, 1.0), (0.1, 2.5, 0.55, 0.45 * 1.35 + 0.55 * 1.0)),
        ((0.0, 10.0, 1.0), (0.0, 10.0, 0.6, 0.4 * 5.0 + 0.6 * 1.0)),
    ];
    for ((m, c, k), (em, d, w, f)) in cases {
        let b = fuse(m, c, k).unwrap();
        assert_eq!(b.raw_mine, m);
        assert_eq!(b.mine, em);
        assert!((b.delta - d).abs() < 1e-12);
        assert!((b.weight - w).abs() < 1e-12);
        assert!((b.final_estimate - f).abs() < 1e-12, "{b:?}");
        assert!(b.mine <= b.club);
        assert!((b.recompute_final() - b.final_estimate).abs() <= 1e-12);
    }
    assert!(matches!(fuse(f64::NAN, 1.0, 0.5), Err(Error::Domain(_))));
    assert!(matches!(fuse(0.0, f64::INFINITY, 0.5), Err(Error::Domain(_))));
}

#[test]
fn shares_complement_and_swap() {
    assert_eq!(shares(0.3, 0.1), Some((0.75, 0.25)));
    assert_eq!(shares(0.1, 0.3), Some((0.25, 0.75)));
    assert_eq!(shares(0.0, 0.4), Some((0.0, 1.0)));
    assert_eq!(shares(0.0, 0.0), None);
    let (a, b) = shares(0.123, 0.456).unwrap();
    let (c, d) = shares(0.456, 0.123).unwrap();
    assert_eq!((a, b), (d, c));
}

#[test]
fn constant_networks_give_zero_bounds() {
    let (x, y) = gaussian_pair(0.8, 64, 2);
    let plan = BatchPlan { joint: (0..64).collect(), marginal_y: (0..64).rev().collect() };
    let joint = PairBatch::joint(&x, &y, &plan);
    let marginal = PairBatch::marginal(&x, &y, &plan);

    let mine = MineEstimator::with_critic(MlpNet::zeros(2, 8, 1, 0.2), 1, 1, MineConfig::default()).unwrap();
    assert_eq!(mine.dv_bound(&joint, &marginal).unwrap(), 0.0);

    let mut club =
        ClubEstimator::from_nets(MlpNet::zeros(1, 8, 1, 0.2), MlpNet::zeros(1, 8, 1, 0.2), ClubConfig::default())
            .unwrap();
    assert!(club.bound(&joint, &marginal).unwrap().abs() < 1e-12);
    // N(0, 1) log density without its normalising constant.
    let ll = club.log_likelihood(&[0.4], &[1.5]).unwrap();
    assert!((ll - (-0.5 * 1.5 * 1.5)).abs() < 1e-15);
}

#[test]
fn feature_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = seed::rng(5, "io", 0);
    let values: Vec<f64> = (0..30).map(|_| StandardNormal.sample(&mut rng)).collect();
    let strata: Vec<String> = (0..10).map(|i| format!("spk{}", i % 3)).collect();
    let m = FeatureMatrix::new(vec!["f0".into(), "pitch".into(), "jitter".into()], values, 10)
        .unwrap()
        .with_strata(strata)
        .unwrap();
    let path = dir.path().join("m.csv");
    save_features(&m, &path).unwrap();
    let back = load_features(&path).unwrap();
    assert_eq!(back.names(), m.names());
    assert_eq!(back.values(), m.values());
    assert_eq!(back.strata(), m.strata());

    let tsv = dir.path().join("t.tsv");
    std::fs::write(&tsv, "a\tb\n1\t2\n3.5\t-4\n").unwrap();
    let t = load_features(&tsv).unwrap();
    assert_eq!((t.rows(), t.cols()), (2, 2));
    assert_eq!(t.values(), &[1.0, 2.0, 3.5, -4.0]);
}

#[test]
fn malformed_cells_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    for (text, line) in [("a,b\n1,2\n3,4\n5,NaN\n", 4), ("a,b\n1,x\n", 2), ("a,b\n1,2\n3\n", 3), ("1,2\n3,4\n", 1)] {
        std::fs::write(&path, text).unwrap();
        match load_features(&path) {
            Err(Error::Parse { line: l, .. }) => assert_eq!(l, line, "{text:?}"),
            other => panic!("{text:?}: {other:?}"),
        }
    }
}

#[test]
fn sampling_and_pairing_are_seeded() {
    let (x, y) = gaussian_pair(0.4, 300, 8);
    let a = stratified_sample(&x, 100, 17).unwrap();
    assert_eq!(a, stratified_sample(&x, 100, 17).unwrap());
    assert_ne!(a, stratified_sample(&x, 100, 18).unwrap());
    assert!(stratified_sample(&x, 301, 17).is_err());

    let same = align_pair(&x, &y, PairingPolicy::SameRows, 0).unwrap();
    assert_eq!(same.permutation, (0..300).collect::<Vec<_>>());
    let r1 = align_pair(&x, &y, PairingPolicy::SeededRandom, 4).unwrap();
    let r2 = align_pair(&x, &y, PairingPolicy::SeededRandom, 4).unwrap();
    assert_eq!(r1.permutation, r2.permutation);
    let mut sorted = r1.permutation.clone();
    sorted.sort_unstable();
    assert_eq!(sorted, (0..300).collect::<Vec<_>>());
    let short = x.select_rows(&(0..10).collect::<Vec<_>>());
    assert!(align_pair(&short, &y, PairingPolicy::SameRows, 0).is_err());
}

#[test]
fn derived_seeds_separate_streams() {
    assert_eq!(seed::derive(1, "train", 0), seed::derive(1, "train", 0));
    let all = [
        seed::derive(1, "train", 0),
        seed::derive(1, "train", 1),
        seed::derive(1, "pairing", 0),
        seed::derive(2, "train", 0),
    ];
    for i in 0..all.len() {
        for j in i + 1..all.len() {
            assert_ne!(all[i], all[j]);
        }
    }
}
