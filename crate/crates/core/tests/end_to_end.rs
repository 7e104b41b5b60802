use std::collections::BTreeMap;

use trendscope_core::codebook::{build_codeword_vector, fit_codebook, KMeansConfig};
use trendscope_core::corpus::{default_anchors, filter_by_city, partition_by_period, Granularity};
use trendscope_core::spatial::{evaluate, make_labeled_sets, train_classifier, ClassifierKind, SplitParams, SvmParams};
use trendscope_core::synth::{generate, PlantedShift, SynthParams};
use trendscope_core::trend::trend_series;
use trendscope_core::{Manifest, YearRange};

fn params() -> SynthParams {
    SynthParams {
        seed: 3,
        cities: default_anchors().into_iter().take(4).collect(),
        years: YearRange::new(2012, 2014).unwrap(),
        per_bucket: 800,
        clusters: 10,
        dim: 8,
        outliers: 40,
        ..SynthParams::default()
    }
}

fn kmeans(k: usize, n_init: usize) -> KMeansConfig {
    KMeansConfig { k, seed: 5, max_iter: 100, tol: 1e-6, n_init }
}

#[test]
fn corpus_survives_disk_round_trip() {
    let corpus = generate(&params()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    corpus.write_to_dir(dir.path()).unwrap();
    let (manifest, block) =
        Manifest::load(&dir.path().join("manifest.jsonl"), &dir.path().join("vectors.tlvb")).unwrap();
    assert_eq!(manifest.records, corpus.manifest.records);
    assert_eq!(block, corpus.block);
}

#[test]
fn planted_shift_is_the_only_trend() {
    let mut p = params();
    let city = p.cities[2].name.clone();
    let base = generate(&p).unwrap().truth.mixtures[&city][&2012].clone();
    let from = (0..10).max_by(|&a, &b| base[a].total_cmp(&base[b])).unwrap();
    let to = (from + 1) % 10;
    p.shifts.push(PlantedShift { city: city.clone(), year: 2013, from_cluster: from, to_cluster: to, mass: 0.1 });
    let corpus = generate(&p).unwrap();
    let codebook = fit_codebook(&corpus.block, &kmeans(10, 4)).unwrap();
    let bins = corpus.truth.bin_map(&codebook);

    for anchor in &p.cities {
        let local = filter_by_city(&corpus.manifest, anchor, 100.0).unwrap();
        assert_eq!(local.len(), 3 * 800);
        let parts = partition_by_period(&local, Granularity::Year, p.years);
        let series: Vec<_> = parts
            .buckets
            .iter()
            .map(|(y, m)| build_codeword_vector(&codebook, m, &corpus.block, &anchor.name, &y.to_string()).unwrap())
            .collect();
        let trends = trend_series(&series, 0.01).unwrap();
        assert_eq!(trends.len(), 2);
        for t in &trends {
            let planted = anchor.name == city && t.period_to == "2013";
            let plus: Vec<usize> = t.plus.keys().copied().collect();
            let minus: Vec<usize> = t.minus.keys().copied().collect();
            if planted {
                assert_eq!(plus, [bins[to]]);
                assert_eq!(minus, [bins[from]]);
            } else {
                assert!(plus.is_empty() && minus.is_empty(), "{} {}: {plus:?} {minus:?}", anchor.name, t.period_to);
            }
        }
    }
}

#[test]
fn restarts_never_do_worse_than_the_first_seeding() {
    let corpus = generate(&params()).unwrap();
    let single = fit_codebook(&corpus.block, &kmeans(10, 1)).unwrap();
    let multi = fit_codebook(&corpus.block, &kmeans(10, 5)).unwrap();
    assert!(multi.fit_meta.inertia <= single.fit_meta.inertia);
    assert!(multi.fit_meta.best_init < 5);
    assert!(fit_codebook(&corpus.block, &kmeans(10, 0)).is_err());
}

#[test]
fn both_classifiers_separate_synthetic_cities() {
    let corpus = generate(&params()).unwrap();
    let codebook = fit_codebook(&corpus.block, &kmeans(10, 2)).unwrap();
    let per_city: BTreeMap<String, Manifest> = params()
        .cities
        .iter()
        .map(|a| (a.name.clone(), filter_by_city(&corpus.manifest, a, 100.0).unwrap()))
        .collect();
    let split = SplitParams { train_n: 20, test_n: 5, sample_size: 400, seed: 1 };
    let (train, test) = make_labeled_sets(&per_city, &codebook, &corpus.block, &split).unwrap();
    for kind in [ClassifierKind::NearestClassMean, ClassifierKind::RbfSvm] {
        let params = SvmParams { c: 10.0, gamma: Some(50.0), ..SvmParams::default() };
        let model = train_classifier(&train, kind, &params).unwrap();
        let cm = evaluate(&model, &test).unwrap();
        assert_eq!(cm.total(), 20);
        assert!(cm.accuracy() >= 0.95, "{kind:?}: {}", cm.accuracy());
    }
}
