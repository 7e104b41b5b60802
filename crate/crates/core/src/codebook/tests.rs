use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::*;
use crate::corpus::{Manifest, Record, VectorBlock};
use crate::error::Error;

fn config(k: usize, seed: u64) -> KMeansConfig {
    KMeansConfig {
        k,
        seed,
        max_iter: 300,
        tol: 0.0,
        n_init: 1,
    }
}

fn random_block(n: usize, dim: usize, seed: u64) -> VectorBlock {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * dim).map(|_| rng.random_range(-5.0f32..5.0)).collect();
    VectorBlock::new(dim, data).unwrap()
}

fn manifest_for(rows: &[usize]) -> Manifest {
    let records = rows
        .iter()
        .enumerate()
        .map(|(i, &row)| Record {
            id: format!("r{i}"),
            city: "X".into(),
            timestamp: 0,
            longitude: 0.0,
            latitude: 0.0,
            vector_index: row as u64,
        })
        .collect();
    Manifest::new(records, "v", 1)
}

fn brute_argmin(codebook: &Codebook, v: &[f32]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for j in 0..codebook.k() {
        let c = codebook.centroid(j);
        let mut d = 0.0f64;
        for t in 0..v.len() {
            let diff = v[t] as f64 - c[t] as f64;
            d += diff * diff;
        }
        if d < best_d {
            best_d = d;
            best = j;
        }
    }
    best
}

#[test]
fn single_cluster_is_the_mean() {
    let data = random_block(200, 3, 1);
    let cb = fit_codebook(&data, &config(1, 4)).unwrap();
    let mut mean = [0.0f64; 3];
    for row in data.rows() {
        for j in 0..3 {
            mean[j] += row[j] as f64 / 200.0;
        }
    }
    let total_ss: f64 = data
        .rows()
        .map(|r| (0..3).map(|j| (r[j] as f64 - mean[j]).powi(2)).sum::<f64>())
        .sum();
    for (c, m) in cb.centroid(0).iter().zip(&mean) {
        assert!((*c as f64 - m).abs() < 1e-5);
    }
    assert!((cb.fit_meta.inertia - total_ss).abs() < 1e-6 * total_ss);
}

#[test]
fn two_blobs_are_recovered() {
    let sigma = 0.5f64;
    let n = 500;
    let means = [[-10.0f64, 3.0], [8.0, -4.0]];
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let noise = Normal::new(0.0, sigma).unwrap();
    let mut rows = Vec::new();
    for m in &means {
        for _ in 0..n {
            rows.push([(m[0] + noise.sample(&mut rng)) as f32, (m[1] + noise.sample(&mut rng)) as f32]);
        }
    }
    let data = VectorBlock::from_rows(2, &rows).unwrap();
    let cb = fit_codebook(&data, &config(2, 7)).unwrap();
    let bound = 3.0 * sigma / (n as f64).sqrt();
    for m in &means {
        let hit = cb.centroids().any(|c| {
            (c[0] as f64 - m[0]).abs() <= bound && (c[1] as f64 - m[1]).abs() <= bound
        });
        assert!(hit, "no centroid within {bound} of {m:?}");
    }
}

#[test]
fn k_equals_n_has_zero_inertia() {
    let data = random_block(25, 4, 3);
    let cb = fit_codebook(&data, &config(25, 1)).unwrap();
    assert_eq!(cb.fit_meta.inertia, 0.0);
    let mut centroids: Vec<Vec<u32>> = cb.centroids().map(|c| c.iter().map(|v| v.to_bits()).collect()).collect();
    let mut points: Vec<Vec<u32>> = data.rows().map(|c| c.iter().map(|v| v.to_bits()).collect()).collect();
    centroids.sort();
    points.sort();
    assert_eq!(centroids, points);
}

#[test]
fn preconditions() {
    let data = random_block(3, 2, 0);
    assert!(matches!(
        fit_codebook(&data, &config(4, 0)),
        Err(Error::TooFewSamples { n: 3, k: 4 })
    ));
    assert!(fit_codebook(&data, &config(0, 0)).is_err());
    let dup = VectorBlock::from_rows(1, &[[1.0f32], [1.0], [1.0], [2.0]]).unwrap();
    assert!(matches!(
        fit_codebook(&dup, &config(3, 0)),
        Err(Error::TooFewDistinct { distinct: 2, k: 3 })
    ));
}

#[test]
fn inertia_never_increases() {
    for seed in 0..5 {
        let data = random_block(600, 3, 100 + seed);
        let cb = fit_codebook(&data, &config(12, seed)).unwrap();
        let h = &cb.fit_meta.inertia_history;
        assert!(h.len() >= 2);
        assert!(h.windows(2).all(|w| w[1] <= w[0]), "{h:?}");
        assert!(cb.fit_meta.inertia >= 0.0);
    }
}

#[test]
fn fitting_is_bit_reproducible() {
    let data = random_block(2000, 5, 9);
    let a = fit_codebook(&data, &config(16, 3)).unwrap();
    let b = fit_codebook(&data, &config(16, 3)).unwrap();
    assert_eq!(a, b);
    let c = fit_codebook(&data, &config(16, 4)).unwrap();
    assert_ne!(a.to_block(), c.to_block());
}

#[test]
fn centroids_are_distinct() {
    let data = random_block(500, 2, 12);
    let cb = fit_codebook(&data, &config(40, 2)).unwrap();
    let mut seen = std::collections::HashSet::new();
    for c in cb.centroids() {
        assert!(seen.insert(c.iter().map(|v| v.to_bits()).collect::<Vec<_>>()));
    }
}

#[test]
fn assign_exact_and_tie_rules() {
    let centroids: Vec<[f32; 2]> = (0..8).map(|i| [i as f32 * 2.0, 0.0]).collect();
    let cb = Codebook::from_centroids(VectorBlock::from_rows(2, &centroids).unwrap()).unwrap();
    assert_eq!(assign(&cb, &[14.0, 0.0]).unwrap(), 7);
    // equidistant between centroids 2 (x=4) and 3 (x=6)
    assert_eq!(assign(&cb, &[5.0, 0.0]).unwrap(), 2);

    let tie = Codebook::from_centroids(
        VectorBlock::from_rows(1, &[[0.0f32], [9.0], [2.0], [7.0], [8.0], [4.0]]).unwrap(),
    )
    .unwrap();
    assert_eq!(assign(&tie, &[3.0]).unwrap(), 2);
    assert!(matches!(assign(&cb, &[1.0]), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn assign_matches_brute_force_scan() {
    let cb = fit_codebook(&random_block(800, 6, 5), &config(32, 5)).unwrap();
    let queries = random_block(2000, 6, 77);
    let batch = cb.assign_block(&queries).unwrap();
    for (q, &b) in queries.rows().zip(&batch) {
        let j = assign(&cb, q).unwrap();
        assert_eq!(j, brute_argmin(&cb, q));
        assert_eq!(j, b);
        let dj = crate::features::sq_distance(q, cb.centroid(j)).unwrap();
        assert!(cb.centroids().all(|c| dj <= crate::features::sq_distance(q, c).unwrap()));
    }
}

#[test]
fn histogram_hand_cases() {
    let centroids: Vec<[f32; 1]> = (0..4).map(|i| [i as f32 * 10.0]).collect();
    let cb = Codebook::from_centroids(VectorBlock::from_rows(1, &centroids).unwrap()).unwrap();
    let block = VectorBlock::from_rows(1, &[[0.0f32], [10.0], [20.0], [30.0]]).unwrap();

    let all_three = manifest_for(&[3; 10]);
    let v = build_codeword_vector(&cb, &all_three, &block, "X", "2013").unwrap();
    assert_eq!(v.bins, [0.0, 0.0, 0.0, 1.0]);
    assert_eq!(v.support, 10);

    let empty = manifest_for(&[]);
    let v = build_codeword_vector(&cb, &empty, &block, "X", "2013").unwrap();
    assert_eq!(v.bins, [0.0; 4]);
    assert_eq!(v.support, 0);

    let mixed = manifest_for(&[0, 0, 0, 1, 3, 3, 3, 3]);
    let v = build_codeword_vector(&cb, &mixed, &block, "X", "2013").unwrap();
    assert_eq!(v.bins, [0.375, 0.125, 0.0, 0.5]);
    assert_eq!(v.csv_row(), "X,2013,8,0.375,0.125,0,0.5");

    let wrong = VectorBlock::from_rows(2, &[[0.0f32, 0.0]]).unwrap();
    assert!(build_codeword_vector(&cb, &mixed, &wrong, "X", "2013").is_err());
    let short = manifest_for(&[9]);
    assert!(build_codeword_vector(&cb, &short, &block, "X", "2013").is_err());
}

#[test]
fn repeated_distinct_points_give_exact_frequencies() {
    let points = [[0.0f32, 0.0], [5.0, 5.0], [-3.0, 7.0], [9.0, -2.0]];
    let reps = [7usize, 1, 4, 12];
    let mut rows = Vec::new();
    for (p, &r) in points.iter().zip(&reps) {
        rows.extend(std::iter::repeat_n(*p, r));
    }
    let block = VectorBlock::from_rows(2, &rows).unwrap();
    let cb = fit_codebook(&block, &config(4, 0)).unwrap();
    let total: usize = reps.iter().sum();
    let manifest = manifest_for(&(0..total).collect::<Vec<_>>());
    let v = build_codeword_vector(&cb, &manifest, &block, "X", "all").unwrap();
    for (p, &r) in points.iter().zip(&reps) {
        let bin = assign(&cb, p).unwrap();
        assert_eq!(cb.centroid(bin), p);
        assert_eq!(v.bins[bin], r as f64 / total as f64);
    }
    assert_eq!(cb.fit_meta.inertia, 0.0);
}

#[test]
fn save_and_load_round_trip() {
    let cb = fit_codebook(&random_block(100, 3, 1), &config(5, 1)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let header = dir.path().join("codebook.json");
    cb.save(&header, &dir.path().join("codebook.tlvb")).unwrap();
    assert_eq!(Codebook::load(&header).unwrap(), cb);
}

#[test]
fn mean_of_keeps_normalisation() {
    let a = CodewordVector::from_counts(&[1, 3], "X", "a");
    let b = CodewordVector::from_counts(&[2, 2], "X", "b");
    let m = CodewordVector::mean_of(&[a, b], "X", "all").unwrap();
    assert_eq!(m.bins, [0.375, 0.625]);
    assert_eq!(m.support, 8);
    assert!(CodewordVector::mean_of(&[], "X", "all").is_err());
}

proptest! {
    #[test]
    fn histogram_is_order_invariant_and_normalised(
        rows in proptest::collection::vec(0usize..6, 1..80),
        seed in any::<u64>(),
    ) {
        let centroids: Vec<[f32; 1]> = (0..5).map(|i| [i as f32]).collect();
        let cb = Codebook::from_centroids(VectorBlock::from_rows(1, &centroids).unwrap()).unwrap();
        let block = VectorBlock::from_rows(1, &(0..6).map(|i| [i as f32 * 0.9]).collect::<Vec<_>>()).unwrap();
        let forward = build_codeword_vector(&cb, &manifest_for(&rows), &block, "X", "p").unwrap();
        let mut shuffled = rows.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.random_range(0..=i));
        }
        let back = build_codeword_vector(&cb, &manifest_for(&shuffled), &block, "X", "p").unwrap();
        prop_assert_eq!(&forward, &back);
        prop_assert!((forward.mass() - 1.0).abs() < 1e-6);
    }
}
