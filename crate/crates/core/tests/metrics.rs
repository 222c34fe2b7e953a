use dams_core::data::{generate_synthetic, LabeledDataset, SyntheticSpec};
use dams_core::eval::{auc_roc, generate_eval_pairs, recall_at_k, EvalPair};
use dams_core::seed::rng_from_seed;
use dams_core::Error;
use ndarray::Array2;
use rand::Rng;

fn brute_auc(pairs: &[EvalPair], d: &[f64]) -> f64 {
    let mut score = 0.0;
    let mut count = 0usize;
    for (i, _) in pairs.iter().enumerate().filter(|(_, p)| p.is_positive) {
        for (j, _) in pairs.iter().enumerate().filter(|(_, q)| !q.is_positive) {
            count += 1;
            if d[i] < d[j] {
                score += 1.0;
            } else if d[i] == d[j] {
                score += 0.5;
            }
        }
    }
    score / count as f64
}

fn brute_recall(emb: &Array2<f64>, labels: &[usize], k: usize) -> f64 {
    let n = emb.nrows();
    let mut hits = 0;
    for a in 0..n {
        let mut others: Vec<(f64, usize)> = (0..n)
            .filter(|&b| b != a)
            .map(|b| {
                let d2: f64 = emb.row(a).iter().zip(emb.row(b).iter()).map(|(x, y)| (x - y).powi(2)).sum();
                (d2.sqrt(), b)
            })
            .collect();
        others.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
        if others[..k].iter().any(|&(_, b)| labels[b] == labels[a]) {
            hits += 1;
        }
    }
    hits as f64 / n as f64
}

fn random_pairs(rng: &mut impl Rng, n: usize) -> (Vec<EvalPair>, Vec<f64>) {
    let pairs: Vec<EvalPair> = (0..n)
        .map(|i| EvalPair { first: i, second: i, is_positive: i == 0 || (i != 1 && rng.random_bool(0.5)) })
        .collect();
    // Coarse values so ties show up often.
    let d = (0..n).map(|_| rng.random_range(0..20) as f64 / 10.0).collect();
    (pairs, d)
}

#[test]
fn auc_matches_pairwise_count() {
    let mut rng = rng_from_seed(11);
    for _ in 0..100 {
        let n = rng.random_range(2..=200);
        let (pairs, d) = random_pairs(&mut rng, n);
        let got = auc_roc(&pairs, &d).unwrap();
        assert!((got - brute_auc(&pairs, &d)).abs() < 1e-12);

        let flipped: Vec<EvalPair> = pairs.iter().map(|p| EvalPair { is_positive: !p.is_positive, ..*p }).collect();
        let back = auc_roc(&flipped, &d).unwrap();
        assert!((got + back - 1.0).abs() < 1e-12);
    }
}

#[test]
fn auc_saturates_and_rejects_one_sided_input() {
    let pairs = [
        EvalPair { first: 0, second: 1, is_positive: true },
        EvalPair { first: 0, second: 2, is_positive: false },
    ];
    assert_eq!(auc_roc(&pairs, &[0.1, 0.9]).unwrap(), 1.0);
    assert_eq!(auc_roc(&pairs, &[0.9, 0.1]).unwrap(), 0.0);
    assert_eq!(auc_roc(&pairs, &[0.5, 0.5]).unwrap(), 0.5);
    assert!(matches!(auc_roc(&pairs[..1], &[0.1]), Err(Error::UndefinedMetric(_))));
    assert!(matches!(auc_roc(&pairs, &[f64::NAN, 0.1]), Err(Error::Input(_))));
}

#[test]
fn recall_matches_full_sort() {
    let mut rng = rng_from_seed(12);
    for _ in 0..50 {
        let n = rng.random_range(9..=500);
        let dim = rng.random_range(1..=4);
        let classes = rng.random_range(2..=10);
        let emb = Array2::from_shape_fn((n, dim), |_| rng.random_range(-3..=3) as f64 / 3.0);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..classes)).collect();
        for k in [1, 2, 4, 8] {
            let got = recall_at_k(emb.view(), &labels, k).unwrap();
            assert_eq!(got, brute_recall(&emb, &labels, k), "n={n} k={k}");
        }
    }
}

#[test]
fn recall_rejects_k_out_of_range() {
    let emb = Array2::<f64>::zeros((4, 2));
    let labels = [0, 0, 1, 1];
    assert!(matches!(recall_at_k(emb.view(), &labels, 0), Err(Error::Config(_))));
    assert!(matches!(recall_at_k(emb.view(), &labels, 4), Err(Error::Config(_))));
    assert!(recall_at_k(emb.view(), &labels, 3).is_ok());
}

#[test]
fn pair_protocol_shape() {
    for (k, m) in [(2, 2), (5, 3), (13, 7)] {
        let spec = SyntheticSpec { num_classes: k, samples_per_class: m, feature_dim: 3, center_scale: 1.0, spread: 0.1 };
        let ds = generate_synthetic(&spec, 4).unwrap();
        let pairs = generate_eval_pairs(&ds, 9).unwrap();
        assert_eq!(pairs.len(), 2 * k);
        assert_eq!(pairs, generate_eval_pairs(&ds, 9).unwrap());
        let labels = ds.labels();
        for (c, chunk) in pairs.chunks(2).enumerate() {
            let (pos, neg) = (chunk[0], chunk[1]);
            assert!(pos.is_positive && !neg.is_positive);
            assert_eq!(pos.first, neg.first);
            assert_eq!(labels[pos.first], format!("c{c}"));
            assert_ne!(pos.first, pos.second);
            assert_eq!(labels[pos.first], labels[pos.second]);
            assert_ne!(labels[neg.first], labels[neg.second]);
        }
    }
}

#[test]
fn pair_protocol_needs_two_classes() {
    let ds = LabeledDataset::new(Array2::zeros((3, 2)), vec!["a".into(); 3]).unwrap();
    assert!(generate_eval_pairs(&ds, 0).is_err());
}
