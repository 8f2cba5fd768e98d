use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssnl::metrics::ConfusionMatrix;

fn random_cm(rng: &mut ChaCha8Rng, k: usize, max: u64) -> Vec<Vec<u64>> {
    (0..k).map(|_| (0..k).map(|_| rng.random_range(0..=max)).collect()).collect()
}

/// Textbook kappa from p_o and p_e in floating point.
fn kappa_oracle(rows: &[Vec<u64>]) -> f64 {
    let k = rows.len();
    let n: f64 = rows.iter().flatten().sum::<u64>() as f64;
    let p_o = (0..k).map(|i| rows[i][i]).sum::<u64>() as f64 / n;
    let p_e = (0..k)
        .map(|c| rows[c].iter().sum::<u64>() as f64 * (0..k).map(|r| rows[r][c]).sum::<u64>() as f64)
        .sum::<f64>()
        / (n * n);
    (p_o - p_e) / (1.0 - p_e)
}

#[test]
fn worked_triple() {
    let cm = ConfusionMatrix::from_rows(&[vec![45, 5], vec![15, 35]]).unwrap();
    assert!((cm.overall_accuracy().unwrap() - 0.80).abs() <= 1e-12);
    assert!((cm.average_accuracy().unwrap() - 0.80).abs() <= 1e-12);
    assert!((cm.kappa().unwrap() - 0.60).abs() <= 1e-12);
}

#[test]
fn outer_products_have_zero_kappa() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..10_000 {
        let k = rng.random_range(2..=8);
        let r: Vec<u64> = (0..k).map(|_| rng.random_range(1..=50)).collect();
        let c: Vec<u64> = (0..k).map(|_| rng.random_range(1..=50)).collect();
        let rows: Vec<Vec<u64>> = r.iter().map(|&ri| c.iter().map(|&cj| ri * cj).collect()).collect();
        assert_eq!(ConfusionMatrix::from_rows(&rows).unwrap().kappa().unwrap(), 0.0, "{rows:?}");
    }
}

#[test]
fn diagonals_have_unit_kappa() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10_000 {
        let k = rng.random_range(2..=8);
        let mut rows = vec![vec![0u64; k]; k];
        // at least two populated classes
        let a = rng.random_range(0..k);
        let b = (a + rng.random_range(1..k)) % k;
        for (i, row) in rows.iter_mut().enumerate() {
            row[i] = if i == a || i == b { rng.random_range(1..=1000) } else { rng.random_range(0..=1000) };
        }
        let cm = ConfusionMatrix::from_rows(&rows).unwrap();
        assert_eq!(cm.kappa().unwrap(), 1.0);
        assert_eq!(cm.overall_accuracy().unwrap(), 1.0);
        assert_eq!(cm.average_accuracy().unwrap(), 1.0);
    }
}

#[test]
fn off_diagonal_mass_breaks_unit_kappa() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..10_000 {
        let k = rng.random_range(2..=6);
        let mut rows = random_cm(&mut rng, k, 20);
        let (i, j) = (rng.random_range(0..k), rng.random_range(0..k));
        if i != j {
            rows[i][j] += 1;
        } else {
            rows[i][(j + 1) % k] += 1;
        }
        assert!(ConfusionMatrix::from_rows(&rows).unwrap().kappa().unwrap() < 1.0);
    }
}

#[test]
fn scores_stay_in_range_and_match_the_textbook_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100_000 {
        let k = rng.random_range(2..=6);
        let rows = random_cm(&mut rng, k, 30);
        let cm = ConfusionMatrix::from_rows(&rows).unwrap();
        if cm.total() == 0 {
            continue;
        }
        let (oa, aa, kappa) = (
            cm.overall_accuracy().unwrap(),
            cm.average_accuracy().unwrap(),
            cm.kappa().unwrap(),
        );
        assert!((0.0..=1.0).contains(&oa));
        assert!((0.0..=1.0).contains(&aa));
        assert!((-1.0..=1.0).contains(&kappa), "{rows:?} -> {kappa}");
        let oracle = kappa_oracle(&rows);
        if oracle.is_finite() {
            assert!((kappa - oracle).abs() <= 1e-12, "{rows:?}: {kappa} vs {oracle}");
        }
    }
}

#[test]
fn relabeling_classes_changes_nothing() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..2_000 {
        let k = rng.random_range(2..=7);
        let rows = random_cm(&mut rng, k, 25);
        let mut perm: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mut permuted = vec![vec![0u64; k]; k];
        for t in 0..k {
            for p in 0..k {
                permuted[perm[t]][perm[p]] = rows[t][p];
            }
        }
        let a = ConfusionMatrix::from_rows(&rows).unwrap();
        let b = ConfusionMatrix::from_rows(&permuted).unwrap();
        if a.total() == 0 {
            continue;
        }
        assert_eq!(a.overall_accuracy().unwrap(), b.overall_accuracy().unwrap());
        assert_eq!(a.kappa().unwrap(), b.kappa().unwrap());
        assert!((a.average_accuracy().unwrap() - b.average_accuracy().unwrap()).abs() <= 1e-12);
    }
}

#[test]
fn counts_are_conserved() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let mut cm = ConfusionMatrix::new(5).unwrap();
    for i in 0..777 {
        cm.record(rng.random_range(1..=5), rng.random_range(1..=5)).unwrap();
        assert_eq!(cm.total(), i + 1);
    }
    let mut twice = cm.clone();
    twice.merge(&cm).unwrap();
    assert_eq!(twice.total(), 2 * 777);
    assert_eq!(twice.kappa().unwrap(), cm.kappa().unwrap());
}
