use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::json;
use trendscope_core::codebook::{build_codeword_vector, fit_codebook, Codebook, CodewordVector, KMeansConfig};
use trendscope_core::corpus::{
    default_anchors, filter_by_city, load_anchors, parse_records, partition_by_period, sample_records,
    validate_anchors, CityAnchor, Granularity, Manifest, VectorBlock,
};
use trendscope_core::features::{FittedFusion, FusionPlan, SegmentPlan};
use trendscope_core::spatial::{
    build_similarity_graph, evaluate, make_labeled_sets, train_classifier, ConfusionMatrix, LabeledCodewordSet,
    SplitParams, SvmParams,
};
use trendscope_core::trend::{nearest_exemplars, top_trends, trend_series, TrendDescriptor};

use crate::config::RunConfig;
use crate::error::{CliError, StageExt};
use crate::report::{FileHash, RunReport, StageTiming};

pub const REPORT_FILE: &str = "report.json";

/// Last stage a command needs. Stages not required by the target are skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Target {
    Ingest,
    Filter,
    Features,
    Codebook,
    Histograms,
    Trends,
    Classify,
    Similarity,
    Exemplars,
    All,
}

impl Target {
    pub fn command(self) -> &'static str {
        match self {
            Target::Ingest => "ingest",
            Target::Filter => "filter",
            Target::Features => "pca",
            Target::Codebook => "codebook",
            Target::Histograms => "histogram",
            Target::Trends => "ftd",
            Target::Classify => "classify",
            Target::Similarity => "simgraph",
            Target::Exemplars => "exemplars",
            Target::All => "pipeline",
        }
    }

    fn needs(self, stage: Target) -> bool {
        use Target::*;
        match stage {
            Ingest => self == Ingest,
            Filter => self != Ingest,
            Features => self == Features,
            Codebook => !matches!(self, Ingest | Filter | Features),
            Histograms => matches!(self, Histograms | Trends | Exemplars | All),
            Trends => matches!(self, Trends | Exemplars | All),
            Classify => matches!(self, Classify | Similarity | All),
            Similarity => matches!(self, Similarity | All),
            Exemplars => matches!(self, Exemplars | All),
            All => false,
        }
    }
}

struct Run<'a> {
    config: &'a RunConfig,
    out: PathBuf,
    report: RunReport,
    written: BTreeSet<String>,
}

impl Run<'_> {
    fn write(&mut self, stage: &'static str, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.out.join(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).stage(stage)?;
        }
        std::fs::write(&path, bytes).stage(stage)?;
        self.written.insert(name.to_owned());
        Ok(())
    }

    fn wrote(&mut self, name: &str) {
        self.written.insert(name.to_owned());
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T, CliError>) -> Result<T, CliError> {
        let t = Instant::now();
        let value = f(self)?;
        self.report.timings.push(StageTiming {
            stage: stage.to_owned(),
            seconds: t.elapsed().as_secs_f64(),
        });
        Ok(value)
    }

    fn metric(&mut self, stage: &str, value: serde_json::Value) {
        self.report.metrics.insert(stage.to_owned(), value);
    }

    fn warn(&mut self, message: String) {
        self.report.warnings.push(message);
    }
}

fn input_path<'p>(path: &'p Option<PathBuf>, what: &str) -> Result<&'p Path, CliError> {
    path.as_deref()
        .ok_or_else(|| CliError::Validation(format!("no {what} path given")))
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

fn csv_bytes(header: &str, rows: impl IntoIterator<Item = String>) -> Vec<u8> {
    let mut text = String::from(header);
    text.push('\n');
    for row in rows {
        text.push_str(&row);
        text.push('\n');
    }
    text.into_bytes()
}

/// Loads the corpus. Out-of-range rows are dropped and reported; malformed
/// lines, duplicate ids and dangling vector indices are errors.
fn load(run: &mut Run) -> Result<(Manifest, VectorBlock), CliError> {
    let manifest_path = input_path(&run.config.paths.manifest, "manifest")?.to_owned();
    let vector_path = input_path(&run.config.paths.vectors, "vectors")?.to_owned();
    let block = VectorBlock::load(&vector_path).stage("load")?;
    let file = File::open(&manifest_path).stage("load")?;
    let parsed = parse_records(BufReader::new(file)).stage("load")?;
    let manifest = Manifest::new(parsed.records, &vector_path, block.dim());
    manifest.validate(&block).stage("load")?;

    for path in [&manifest_path, &vector_path] {
        run.report
            .inputs
            .push(FileHash::of(path, path.clone()).stage("load")?);
    }
    run.report.counts.records_loaded = manifest.len();
    run.report.counts.lines_rejected = parsed.rejected.len();
    for r in &parsed.rejected {
        let id = if r.id.is_empty() { "?" } else { r.id.as_str() };
        run.warn(format!("manifest line {} ({id}) rejected: {}", r.line, r.reason));
    }
    Ok((manifest, block))
}

fn ingest(run: &mut Run, manifest: &Manifest, block: &VectorBlock) -> Result<(), CliError> {
    let mut jsonl = Vec::new();
    manifest.write_jsonl(&mut jsonl).stage("ingest")?;
    run.write("ingest", "manifest.jsonl", &jsonl)?;
    block.save(&run.out.join("vectors.tlvb")).stage("ingest")?;
    run.wrote("vectors.tlvb");
    Ok(())
}

fn anchors(run: &mut Run) -> Result<Vec<CityAnchor>, CliError> {
    match &run.config.paths.anchors {
        Some(path) => {
            let anchors = load_anchors(path).stage("load")?;
            run.report
                .inputs
                .push(FileHash::of(path, path.clone()).stage("load")?);
            Ok(anchors)
        }
        None => {
            let anchors = default_anchors();
            validate_anchors(&anchors).stage("load")?;
            Ok(anchors)
        }
    }
}

/// Per-city subsets of the corpus, keyed by city name.
fn filter(run: &mut Run, manifest: &Manifest) -> Result<BTreeMap<String, Manifest>, CliError> {
    let anchors = anchors(run)?;
    let mut per_city = BTreeMap::new();
    let mut hits: BTreeMap<String, usize> = BTreeMap::new();
    let mut all = Vec::new();
    for anchor in &anchors {
        let kept = filter_by_city(manifest, anchor, run.config.radius_km).stage("filter")?;
        for r in &kept.records {
            *hits.entry(r.id.clone()).or_default() += 1;
        }
        all.extend(kept.records.iter().cloned());
        run.report.counts.per_city.insert(anchor.name.clone(), kept.len());
        if kept.is_empty() {
            run.warn(format!("no records within {} km of {}", run.config.radius_km, anchor.name));
        }
        per_city.insert(anchor.name.clone(), kept);
    }
    let multi = hits.values().filter(|&&n| n > 1).count();
    if multi > 0 {
        run.warn(format!("{multi} records fall within more than one city radius"));
    }
    let unassigned = manifest.len() - hits.len();
    run.report.counts.records_unassigned = unassigned;
    if unassigned > 0 {
        run.warn(format!("{unassigned} records fall outside every city radius"));
    }
    let mut jsonl = Vec::new();
    manifest.with_records(all).write_jsonl(&mut jsonl).stage("filter")?;
    run.write("filter", "filtered.jsonl", &jsonl)?;
    Ok(per_city)
}

/// Rows referenced by any city, in row order.
fn city_rows(per_city: &BTreeMap<String, Manifest>) -> Vec<usize> {
    let rows: BTreeSet<usize> = per_city
        .values()
        .flat_map(|m| m.records.iter().map(|r| r.row()))
        .collect();
    rows.into_iter().collect()
}

/// One record per referenced row, in row order.
fn city_pool(per_city: &BTreeMap<String, Manifest>) -> Manifest {
    let mut by_row = BTreeMap::new();
    let mut template = None;
    for m in per_city.values() {
        template.get_or_insert(m);
        for r in &m.records {
            by_row.entry(r.row()).or_insert_with(|| r.clone());
        }
    }
    match template {
        Some(m) => m.with_records(by_row.into_values().collect()),
        None => Manifest::new(Vec::new(), "", 0),
    }
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

/// Fits the configured fusion plan on city records and maps every row of
/// the block into fused space.
fn features(run: &mut Run, plan: &FusionPlan, per_city: &BTreeMap<String, Manifest>, block: &VectorBlock) -> Result<VectorBlock, CliError> {
    let train = block.select(&city_rows(per_city));
    let fitted = FittedFusion::fit(
        plan.clone(),
        &train,
        run.config.codebook.train_cap,
        run.config.seeds.pca,
    )
    .stage("features")?;
    let fused = fitted.transform(block).stage("features")?;
    run.write("features", "features/fusion.json", &json_bytes(plan))?;
    for (name, model) in &fitted.models {
        let stem = format!("features/pca_{}", file_stem(name));
        model
            .save(&run.out.join(format!("{stem}.json")), &run.out.join(format!("{stem}.tlvb")))
            .stage("features")?;
        run.wrote(&format!("{stem}.json"));
        run.wrote(&format!("{stem}.tlvb"));
    }
    fused.save(&run.out.join("features/fused.tlvb")).stage("features")?;
    run.wrote("features/fused.tlvb");
    let explained: BTreeMap<&str, &[f64]> = fitted
        .models
        .iter()
        .map(|(n, m)| (n.as_str(), m.explained_variance.as_slice()))
        .collect();
    run.metric("features", json!({ "fused_dim": fused.dim(), "explained_variance": explained }));
    Ok(fused)
}

fn codebook(run: &mut Run, per_city: &BTreeMap<String, Manifest>, block: &VectorBlock) -> Result<Codebook, CliError> {
    if let Some(path) = &run.config.paths.codebook {
        let codebook = Codebook::load(path).stage("codebook")?;
        run.report
            .inputs
            .push(FileHash::of(path, path.clone()).stage("codebook")?);
        if codebook.dim() != block.dim() {
            return Err(CliError::Stage {
                stage: "codebook",
                source: trendscope_core::Error::DimensionMismatch {
                    expected: block.dim(),
                    found: codebook.dim(),
                },
            });
        }
        return Ok(codebook);
    }
    let cfg = run.config;
    let picked = sample_records(&city_pool(per_city), cfg.codebook.train_cap, cfg.seeds.sample);
    let mut train_rows: Vec<usize> = picked.records.iter().map(|r| r.row()).collect();
    train_rows.sort_unstable();
    let train = block.select(&train_rows);
    let codebook = fit_codebook(
        &train,
        &KMeansConfig {
            k: cfg.k,
            seed: cfg.seeds.kmeans,
            max_iter: cfg.codebook.max_iter,
            tol: cfg.codebook.tol,
            n_init: cfg.codebook.n_init,
        },
    )
    .stage("codebook")?;
    codebook
        .save(&run.out.join("codebook.json"), &run.out.join("codebook.tlvb"))
        .stage("codebook")?;
    run.wrote("codebook.json");
    run.wrote("codebook.tlvb");
    let meta = &codebook.fit_meta;
    if !meta.converged {
        run.warn(format!("k-means stopped after {} iterations without converging", meta.iterations));
    }
    run.metric(
        "codebook",
        json!({
            "k": codebook.k(),
            "dim": codebook.dim(),
            "n_train": meta.n_train,
            "iterations": meta.iterations,
            "converged": meta.converged,
            "inertia": meta.inertia,
            "reseeds": meta.reseeds,
            "best_init": meta.best_init,
        }),
    );
    Ok(codebook)
}

/// city -> (year, records) for years with at least one record.
type Buckets = BTreeMap<String, Vec<(i32, Manifest)>>;

fn histograms(
    run: &mut Run,
    per_city: &BTreeMap<String, Manifest>,
    codebook: &Codebook,
    block: &VectorBlock,
) -> Result<(Buckets, BTreeMap<String, Vec<CodewordVector>>), CliError> {
    let range = run.config.periods;
    let mut buckets = Buckets::new();
    let mut series = BTreeMap::new();
    let mut rows = Vec::new();
    let mut used = vec![false; codebook.k()];
    for (city, manifest) in per_city {
        let parts = partition_by_period(manifest, Granularity::Year, range);
        if !parts.rejected.is_empty() {
            run.warn(format!(
                "{city}: {} records outside years {}..={}",
                parts.rejected.len(),
                range.start,
                range.end
            ));
        }
        run.report.counts.period_rejected += parts.rejected.len();
        let mut vectors = Vec::new();
        let mut kept = Vec::new();
        let mut counts = BTreeMap::new();
        for (year, bucket) in parts.buckets {
            counts.insert(year.to_string(), bucket.len());
            let v = build_codeword_vector(codebook, &bucket, block, city, &year.to_string()).stage("histograms")?;
            for (u, b) in used.iter_mut().zip(&v.bins) {
                *u |= *b > 0.0;
            }
            rows.push(v.csv_row());
            vectors.push(v);
            kept.push((year, bucket));
        }
        run.report.counts.per_city_period.insert(city.clone(), counts);
        series.insert(city.clone(), vectors);
        buckets.insert(city.clone(), kept);
    }
    let empty = used.iter().filter(|u| !**u).count();
    if empty > 0 {
        run.warn(format!("{empty} of {} codebook bins are empty in every histogram", codebook.k()));
    }
    run.write("histograms", "histograms.csv", &csv_bytes(&CodewordVector::csv_header(codebook.k()), rows))?;
    Ok((buckets, series))
}

/// Maximal runs of consecutive years.
fn consecutive_runs(vectors: &[CodewordVector]) -> Vec<&[CodewordVector]> {
    let year = |v: &CodewordVector| v.period.parse::<i64>().unwrap_or(i64::MIN);
    let mut runs = Vec::new();
    let mut start = 0;
    for i in 1..=vectors.len() {
        if i == vectors.len() || year(&vectors[i]) != year(&vectors[i - 1]) + 1 {
            runs.push(&vectors[start..i]);
            start = i;
        }
    }
    runs
}

fn trends(run: &mut Run, series: &BTreeMap<String, Vec<CodewordVector>>) -> Result<BTreeMap<String, Vec<TrendDescriptor>>, CliError> {
    let th = run.config.threshold;
    let mut all = BTreeMap::new();
    let mut rows = Vec::new();
    let mut records = Vec::new();
    let mut summary = BTreeMap::new();
    for (city, vectors) in series {
        let runs = consecutive_runs(vectors);
        if runs.len() > 1 {
            run.warn(format!("{city}: period series has gaps, trends computed per consecutive run"));
        }
        let mut descriptors = Vec::new();
        for part in runs.into_iter().filter(|r| r.len() >= 2) {
            descriptors.extend(trend_series(part, th).stage("trends")?);
        }
        if descriptors.is_empty() {
            run.warn(format!("{city}: fewer than two consecutive periods, no trends"));
        }
        for d in &descriptors {
            rows.extend(d.csv_rows());
            records.push(d.to_record());
            summary.insert(
                format!("{city} {}->{}", d.period_from, d.period_to),
                json!({ "plus": d.plus.len(), "minus": d.minus.len() }),
            );
        }
        all.insert(city.clone(), descriptors);
    }
    run.write("trends", "trends.csv", &csv_bytes(TrendDescriptor::CSV_HEADER, rows))?;
    run.write("trends", "trends.json", &json_bytes(&records))?;
    run.metric("trends", json!({ "threshold": th, "pairs": summary }));
    Ok(all)
}

#[derive(Serialize)]
struct ExemplarEntry<'a> {
    city: &'a str,
    from: &'a str,
    to: &'a str,
    bin: usize,
    magnitude: f64,
    record_ids: Vec<String>,
    distances: Vec<f64>,
}

/// Nearest records for the strongest rising bins of each city's latest
/// descriptor, drawn from the later period.
fn exemplars(
    run: &mut Run,
    trends: &BTreeMap<String, Vec<TrendDescriptor>>,
    buckets: &Buckets,
    codebook: &Codebook,
    block: &VectorBlock,
) -> Result<(), CliError> {
    let cfg = run.config;
    let mut entries = Vec::new();
    for (city, descriptors) in trends {
        let Some(latest) = descriptors.last() else { continue };
        let Some((_, bucket)) = buckets[city]
            .iter()
            .find(|(y, _)| y.to_string() == latest.period_to)
        else {
            continue;
        };
        let (rising, _) = top_trends(latest, cfg.top_n);
        for (bin, magnitude) in rising {
            let mut set = nearest_exemplars(codebook, bin, bucket, block, cfg.exemplars_per_bin).stage("exemplars")?;
            if let Some(m) = cfg.exemplar_display {
                let seed = cfg.seeds.display.wrapping_add(entries.len() as u64);
                set = set.random_subset(m, seed);
            }
            entries.push(ExemplarEntry {
                city,
                from: &latest.period_from,
                to: &latest.period_to,
                bin,
                magnitude,
                record_ids: set.record_ids,
                distances: set.distances,
            });
        }
    }
    let bytes = json_bytes(&entries);
    run.write("exemplars", "exemplars.json", &bytes)
}

fn classify(
    run: &mut Run,
    per_city: &BTreeMap<String, Manifest>,
    codebook: &Codebook,
    block: &VectorBlock,
) -> Result<(LabeledCodewordSet, LabeledCodewordSet), CliError> {
    let cfg = run.config;
    let s = &cfg.spatial;
    let split = SplitParams {
        train_n: s.train_n,
        test_n: s.test_n,
        sample_size: s.sample_size,
        seed: cfg.seeds.split,
    };
    let populated: BTreeMap<String, Manifest> = per_city
        .iter()
        .filter(|(_, m)| !m.is_empty())
        .map(|(c, m)| (c.clone(), m.clone()))
        .collect();
    let (train, test) = make_labeled_sets(&populated, codebook, block, &split).stage("classify")?;
    let params = SvmParams {
        c: s.svm_c,
        gamma: s.svm_gamma,
        ..SvmParams::default()
    };
    let model = train_classifier(&train, cfg.classifier, &params).stage("classify")?;
    let confusion: ConfusionMatrix = evaluate(&model, &test).stage("classify")?;
    if !model.converged() {
        run.warn("SVM solver hit its iteration cap".into());
    }
    let k = codebook.k();
    run.write("classify", "confusion.csv", confusion.to_csv().as_bytes())?;
    run.write(
        "classify",
        "codewords_train.csv",
        &csv_bytes(&CodewordVector::csv_header(k), train.vectors.iter().map(CodewordVector::csv_row)),
    )?;
    run.write(
        "classify",
        "codewords_test.csv",
        &csv_bytes(&CodewordVector::csv_header(k), test.vectors.iter().map(CodewordVector::csv_row)),
    )?;
    run.metric(
        "classify",
        json!({
            "classifier": cfg.classifier,
            "classes": model.classes,
            "gamma": model.gamma(),
            "converged": model.converged(),
            "train_vectors": train.len(),
            "test_vectors": test.len(),
            "correct": confusion.trace(),
            "total": confusion.total(),
            "accuracy": confusion.accuracy(),
        }),
    );
    Ok((train, test))
}

fn similarity(run: &mut Run, train: &LabeledCodewordSet, test: &LabeledCodewordSet) -> Result<(), CliError> {
    let cfg = run.config;
    let mut vectors = train.vectors.clone();
    vectors.extend(test.vectors.iter().cloned());
    let mut labels = train.labels.clone();
    labels.extend(test.labels.iter().cloned());
    let pooled = LabeledCodewordSet::new(vectors, labels, train.per_vector_sample_size).stage("similarity")?;
    let means = pooled.class_means().stage("similarity")?;
    let graph = build_similarity_graph(&means, cfg.graph_threshold, cfg.measure).stage("similarity")?;
    run.write("similarity", "similarity.dot", graph.to_dot().as_bytes())?;
    run.write(
        "similarity",
        "similarity.json",
        &json_bytes(&json!({
            "aggregate": "mean codeword vector over each city's train and test sets",
            "graph": graph,
        })),
    )?;
    run.metric(
        "similarity",
        json!({ "measure": cfg.measure, "threshold": cfg.graph_threshold, "nodes": graph.nodes.len(), "edges": graph.edges.len() }),
    );
    Ok(())
}

/// Plan that compresses the whole vector to `dim` components.
pub fn whole_vector_plan(input_dim: usize, dim: usize) -> FusionPlan {
    FusionPlan {
        segments: vec![SegmentPlan {
            name: "all".into(),
            len: input_dim,
            pca_dim: Some(dim),
            scale: 1.0,
        }],
    }
}

/// Runs every stage `target` needs and writes the report.
///
/// `pca_dim` replaces the configured fusion plan with a single PCA over the
/// whole vector.
pub fn run(config: &RunConfig, target: Target, pca_dim: Option<usize>) -> Result<RunReport, CliError> {
    config.validate()?;
    let out = config.paths.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| CliError::Validation(format!("{}: {e}", out.display())))?;
    let mut run = Run {
        config,
        out,
        report: RunReport::new(target.command(), config.clone()),
        written: BTreeSet::new(),
    };

    let (manifest, raw) = run.timed("load", load)?;
    if target.needs(Target::Ingest) {
        run.timed("ingest", |r| ingest(r, &manifest, &raw))?;
    }
    let per_city = if target.needs(Target::Filter) {
        run.timed("filter", |r| filter(r, &manifest))?
    } else {
        BTreeMap::new()
    };

    let plan = match pca_dim {
        Some(d) => Some(whole_vector_plan(raw.dim(), d)),
        None => config.fusion.clone(),
    };
    if target == Target::Features && plan.is_none() {
        return Err(CliError::Validation("pca needs --dim or a [fusion] plan".into()));
    }
    let block = match &plan {
        Some(plan) if target != Target::Ingest && target != Target::Filter => {
            run.timed("features", |r| features(r, plan, &per_city, &raw))?
        }
        _ => raw,
    };

    if target.needs(Target::Codebook) {
        let codebook = run.timed("codebook", |r| codebook(r, &per_city, &block))?;
        let mut buckets = Buckets::new();
        let mut series = BTreeMap::new();
        if target.needs(Target::Histograms) {
            (buckets, series) = run.timed("histograms", |r| histograms(r, &per_city, &codebook, &block))?;
        }
        let mut descriptors = BTreeMap::new();
        if target.needs(Target::Trends) {
            descriptors = run.timed("trends", |r| trends(r, &series))?;
        }
        if target.needs(Target::Classify) {
            let (train, test) = run.timed("classify", |r| classify(r, &per_city, &codebook, &block))?;
            if target.needs(Target::Similarity) {
                run.timed("similarity", |r| similarity(r, &train, &test))?;
            }
        }
        if target.needs(Target::Exemplars) {
            run.timed("exemplars", |r| exemplars(r, &descriptors, &buckets, &codebook, &block))?;
        }
    }

    finish(run)
}

fn finish(mut run: Run) -> Result<RunReport, CliError> {
    for name in std::mem::take(&mut run.written) {
        let hash = FileHash::of(&run.out.join(&name), PathBuf::from(&name)).stage("report")?;
        run.report.outputs.push(hash);
    }
    let text = run.report.to_json();
    std::fs::write(run.out.join(REPORT_FILE), text + "\n").stage("report")?;
    Ok(run.report)
}
