//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::time::Instant;

use common::{dense_loss, fixture, oracle_metrics, prediction, reference_clean, TABLE2};
use eventcat::catalog::{export, import, CatalogFormat};
use eventcat::classifier::{
    fit_model, loss_and_gradient, Cascade, FeatureVector, Featurizer, FeaturizerConfig, Method, TrainParams,
};
use eventcat::corpus::{generate_corpus, SyntheticCorpusSpec};
use eventcat::encoder::{attention_weights, encode, init_weights, scaled_dot_attention, EncoderConfig, Matrix};
use eventcat::evaluation::{
    aggregate, confusion, normalize_rows, per_class_metrics, render_report, ClassMetrics, ConfusionMatrix,
};
use eventcat::ingestion::{SourceDescriptor, SourceIndex, SourceKind};
use eventcat::pipeline::{run_all, PipelineConfig};
use eventcat::taxonomy::{CategoryId, Taxonomy};
use eventcat::textprep::{clean_text, prepare_event, CleanEvent, TokenSequence, CLS, NUM_SPECIALS, PAD, SEP};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn table2_aggregates() -> Outcome {
    let start = Instant::now();
    let tax = Taxonomy::default_taxonomy();
    let per_class: Vec<ClassMetrics> = TABLE2
        .iter()
        .enumerate()
        .map(|(i, &(_, p, r, f, s))| ClassMetrics::new(CategoryId(i as u32), p, r, f, s))
        .collect();
    let report = aggregate(&per_class, None);
    check(report.total == 173_175, || format!("total support {}", report.total))?;
    for (name, avg, want) in [("macro", report.macro_avg, 0.86), ("weighted", report.weighted_avg, 0.87)] {
        for v in [avg.precision, avg.recall, avg.f1] {
            check((v - want).abs() <= 0.005, || format!("{name} avg {v} vs {want}"))?;
        }
    }
    let text = render_report(&report, &tax);
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split_whitespace().collect()).collect();
    let cells = |label: &str| -> Vec<String> {
        rows.iter()
            .find(|r| r.join(" ").starts_with(label))
            .map(|r| r[r.len() - 4..].iter().map(|s| s.to_string()).collect())
            .unwrap_or_default()
    };
    for (i, &(name, p, r, f, s)) in TABLE2.iter().enumerate() {
        let want = vec![format!("{p:.2}"), format!("{r:.2}"), format!("{f:.2}"), s.to_string()];
        let got = cells(&format!("Category {i} ({name})"));
        check(got == want, || format!("row {i}: {got:?} vs {want:?}"))?;
    }
    let acc = rows.iter().find(|r| r.first() == Some(&"accuracy")).cloned().unwrap_or_default();
    check(acc == ["accuracy", "0.87", "173175"], || format!("accuracy row {acc:?}"))?;
    for (label, v) in [("macro avg", "0.86"), ("weighted avg", "0.87")] {
        let got = cells(label);
        check(got == [v, v, v, "173175"], || format!("{label} row {got:?}"))?;
    }
    let ms = start.elapsed().as_secs_f64() * 1000.0;
    check(ms < 1000.0, || format!("took {ms:.0} ms"))?;
    Ok(format!(
        "macro {:.4} weighted {:.4} support {} in {ms:.1} ms",
        report.macro_avg.f1, report.weighted_avg.f1, report.total
    ))
}

fn kids_family_row() -> Outcome {
    let classes: Vec<CategoryId> = (0..7).map(CategoryId).collect();
    let mut m = ConfusionMatrix::new(classes.clone());
    let row: [(usize, usize); 7] = [(0, 31), (1, 12), (2, 9), (3, 2), (4, 24), (5, 2), (6, 920)];
    for &(col, n) in &row {
        for _ in 0..n {
            m.add(CategoryId(6), CategoryId(col as u32)).map_err(|e| e.to_string())?;
        }
    }
    for c in 0..6 {
        m.add(CategoryId(c), CategoryId(c)).map_err(|e| e.to_string())?;
    }
    let norm = normalize_rows(&m);
    let kids = &norm[6];
    check((kids[4] - 0.024).abs() < 1e-9, || format!("kids->other {}", kids[4]))?;
    let support = m.row_sum(6) as f64;
    for &(col, n) in &row {
        check((kids[col] * support - n as f64).abs() < 1e-9, || format!("column {col} does not round-trip"))?;
    }
    check((kids.iter().sum::<f64>() - 1.0).abs() < 1e-9, || "row does not sum to 1".into())?;
    Ok(format!("normalized[6][4] = {:.6}", kids[4]))
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-scale..scale)).collect())
}

fn attention_invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases = 1200;
    for case in 0..cases {
        let (nq, nk, dk, dv) = (rng.gen_range(1..6), rng.gen_range(1..10), rng.gen_range(1..9), rng.gen_range(1..6));
        let q = random_matrix(&mut rng, nq, dk, 3.0);
        let k = random_matrix(&mut rng, nk, dk, 3.0);
        let v = random_matrix(&mut rng, nk, dv, 5.0);
        let mut mask: Vec<u8> = (0..nk).map(|_| rng.gen_bool(0.7) as u8).collect();
        let keep = rng.gen_range(0..nk);
        mask[keep] = 1;
        let fail = |what: &str| format!("case {case}: {what}");

        let w = attention_weights(&q, &k, &mask).map_err(|e| fail(&e.to_string()))?;
        for r in 0..nq {
            let row = w.row(r);
            let sum: f64 = row.iter().zip(&mask).filter(|(_, &m)| m == 1).map(|(x, _)| x).sum();
            check((sum - 1.0).abs() <= 1e-9, || fail(&format!("row sum {sum}")))?;
            check(row.iter().zip(&mask).all(|(&x, &m)| m == 1 || x == 0.0), || fail("masked weight not zero"))?;
        }

        let shared = random_matrix(&mut rng, 1, dk, 3.0);
        let equal_keys = Matrix::from_rows(&vec![shared.row(0).to_vec(); nk]);
        let out = scaled_dot_attention(&q, &equal_keys, &v, &mask).map_err(|e| fail(&e.to_string()))?;
        let live: Vec<usize> = (0..nk).filter(|&j| mask[j] == 1).collect();
        for c in 0..dv {
            let mean = live.iter().map(|&j| v.get(j, c)).sum::<f64>() / live.len() as f64;
            for r in 0..nq {
                check((out.get(r, c) - mean).abs() <= 1e-9, || fail("equal keys are not a uniform average"))?;
            }
        }

        let mut perm: Vec<usize> = (0..nk).collect();
        perm.shuffle(&mut rng);
        let kp = Matrix::from_rows(&perm.iter().map(|&j| k.row(j).to_vec()).collect::<Vec<_>>());
        let vp = Matrix::from_rows(&perm.iter().map(|&j| v.row(j).to_vec()).collect::<Vec<_>>());
        let mp: Vec<u8> = perm.iter().map(|&j| mask[j]).collect();
        let a = scaled_dot_attention(&q, &k, &v, &mask).map_err(|e| fail(&e.to_string()))?;
        let b = scaled_dot_attention(&q, &kp, &vp, &mp).map_err(|e| fail(&e.to_string()))?;
        let diff = a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        check(diff <= 1e-12, || fail(&format!("permutation moved output by {diff:e}")))?;
    }
    Ok(format!("{cases} fuzzed instances"))
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let h = 1e-5;
    let pairs = 120;
    let mut worst: f64 = 0.0;
    for _ in 0..pairs {
        let c = rng.gen_range(2..=6);
        let d = rng.gen_range(1..=10);
        let n = rng.gen_range(1..=8);
        let classes: Vec<CategoryId> = (0..c as u32).map(CategoryId).collect();
        let b = random_matrix(&mut rng, c, d + 1, 2.0);
        let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let ys: Vec<usize> = (0..n).map(|_| rng.gen_range(0..c)).collect();
        let w: Vec<f64> = (0..c).map(|_| rng.gen_range(0.5..2.0)).collect();
        let l2 = rng.gen_range(0.0..0.3);
        let batch: Vec<(FeatureVector, CategoryId)> =
            xs.iter().zip(&ys).map(|(x, &y)| (FeatureVector(x.clone()), classes[y])).collect();
        let (_, grad) = loss_and_gradient(&b, &batch, &classes, &w, l2).map_err(|e| e.to_string())?;
        let as_rows = |m: &Matrix| (0..m.rows).map(|r| m.row(r).to_vec()).collect::<Vec<_>>();
        for i in 0..b.data.len() {
            let (mut plus, mut minus) = (b.clone(), b.clone());
            plus.data[i] += h;
            minus.data[i] -= h;
            let numeric = (dense_loss(&as_rows(&plus), &xs, &ys, &w, l2)
                - dense_loss(&as_rows(&minus), &xs, &ys, &w, l2))
                / (2.0 * h);
            let analytic = grad.data[i];
            worst = worst.max((analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4));
        }
    }
    check(worst < 1e-4, || format!("max relative error {worst:e}"))?;
    Ok(format!("{pairs} (model, batch) pairs, max relative error {worst:.2e}"))
}

fn metrics_oracle() -> Outcome {
    let tax = Taxonomy::default_taxonomy();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let sets = 1000;
    for set in 0..sets {
        let n = rng.gen_range(1..200);
        let pairs: Vec<(u32, u32)> = (0..n).map(|_| (rng.gen_range(0..7), rng.gen_range(0..7))).collect();
        let preds: Vec<_> = pairs.iter().enumerate().map(|(i, &(a, p))| prediction(i, Some(a), p)).collect();
        let m = confusion(&preds, &tax).map_err(|e| e.to_string())?;
        for got in per_class_metrics(&m) {
            let want = oracle_metrics(&pairs, got.class.0);
            let close = (got.precision - want.precision).abs() <= 1e-12
                && (got.recall - want.recall).abs() <= 1e-12
                && (got.f1 - want.f1).abs() <= 1e-12
                && got.support == want.support;
            check(close, || format!("set {set}, class {}", got.class))?;
        }
    }
    Ok(format!("{sets} fuzzed prediction sets"))
}

fn end_to_end() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = PipelineConfig::demo(a.path());
    let spec = SyntheticCorpusSpec::bundled();
    check(spec.events_per_class.len() == 7 && spec.total() >= 2000, || "bundled spec shape".into())?;
    check((cfg.test_fraction - 0.2).abs() < 1e-12 && cfg.stratified, || "demo split is not 80/20 stratified".into())?;
    check(matches!(cfg.featurizer, FeaturizerConfig::HashedNgram { .. }), || {
        "demo does not use hashed n-grams".into()
    })?;
    let start = Instant::now();
    let first = run_all(&cfg, |_| {}).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    run_all(&PipelineConfig::demo(b.path()), |_| {}).map_err(|e| e.to_string())?;
    check(first.report.accuracy >= 0.95, || format!("accuracy {}", first.report.accuracy))?;
    check(secs < 60.0, || format!("took {secs:.1} s"))?;
    let mut compared = 0;
    for entry in std::fs::read_dir(a.path()).map_err(|e| e.to_string())? {
        let name = entry.map_err(|e| e.to_string())?.file_name();
        let x = std::fs::read(a.path().join(&name)).map_err(|e| e.to_string())?;
        let y = std::fs::read(b.path().join(&name)).map_err(|e| e.to_string())?;
        check(x == y, || format!("{} differs between reruns", name.to_string_lossy()))?;
        compared += 1;
    }
    Ok(format!(
        "accuracy {:.4} on {} test events in {secs:.2} s, {compared} artifacts byte-identical",
        first.report.accuracy, first.report.total
    ))
}

fn synthetic_events(per_class: usize, seed: u64) -> Vec<CleanEvent> {
    let mut spec = SyntheticCorpusSpec::bundled();
    spec.events_per_class.values_mut().for_each(|n| *n = per_class);
    spec.seed = seed;
    generate_corpus(&spec).map(|raw| raw.iter().filter_map(|e| prepare_event(e, 1000)).collect()).unwrap_or_default()
}

fn cascade_rules() -> Outcome {
    let tax = Taxonomy::default_taxonomy();
    let cfg = FeaturizerConfig::hashed(1024, 0);
    let model = fit_model(&synthetic_events(20, 1), &cfg, &tax, &TrainParams::default()).map_err(|e| e.to_string())?;
    let featurizer = Featurizer::from_config(&cfg).map_err(|e| e.to_string())?;
    let mut trusted = SourceDescriptor::new("music-venue-feed", SourceKind::Feed, "unused");
    trusted.trust = Some(CategoryId(0));
    let mut venues = SourceDescriptor::new("city-listings", SourceKind::ApiDump, "unused");
    venues.venue_rules.insert("Fiera Milano".into(), CategoryId(5));
    let index = SourceIndex::new(&[trusted, venues], &tax).map_err(|e| e.to_string())?;

    let mut events = synthetic_events(10, 2);
    for (i, e) in events.iter_mut().enumerate() {
        match i % 4 {
            0 => e.source_id = "music-venue-feed".into(),
            1 => {
                e.source_id = "city-listings".into();
                e.venue = Some("Fiera Milano".into());
            }
            2 => {
                e.source_id = "city-listings".into();
                e.venue = Some("Teatro Biondo".into());
            }
            _ => {}
        }
    }
    let (mut rule_events, mut model_events) = (Vec::new(), Vec::new());
    for (i, e) in events.iter().enumerate() {
        if i % 4 < 2 {
            rule_events.push(e.clone());
        } else {
            model_events.push(e.clone());
        }
    }

    let rules_only = Cascade::new(&index, &model, &featurizer);
    let preds = rules_only.classify_all(&rule_events, 4).map_err(|e| e.to_string())?;
    for (e, p) in rule_events.iter().zip(&preds) {
        let (method, class) = if e.source_id == "music-venue-feed" {
            (Method::RuleSource, CategoryId(0))
        } else {
            (Method::RuleVenue, CategoryId(5))
        };
        check(p.method == method && p.pred == class, || format!("event {} got {:?}", p.index, p.method))?;
    }
    check(rules_only.model_calls() == 0, || {
        format!("model called {} times for rule events", rules_only.model_calls())
    })?;

    let mixed = Cascade::new(&index, &model, &featurizer);
    let preds = mixed.classify_all(&events, 4).map_err(|e| e.to_string())?;
    let by_rule = preds.iter().filter(|p| p.method != Method::Model).count();
    check(by_rule == rule_events.len(), || format!("{by_rule} rule assignments, expected {}", rule_events.len()))?;
    check(mixed.model_calls() == model_events.len(), || format!("{} model calls", mixed.model_calls()))?;
    Ok(format!(
        "{} rule events with 0 model calls, {} model calls in the mixed run",
        rule_events.len(),
        mixed.model_calls()
    ))
}

fn cleaning_fixtures() -> Outcome {
    let text = std::fs::read_to_string(fixture("cleaning.json")).map_err(|e| e.to_string())?;
    let items: Vec<String> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    let tag = Regex::new(r"<[^>]*>").unwrap();
    let escape = Regex::new(r"\\u[0-9A-Fa-f]{4}").unwrap();
    let email = Regex::new(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,}").unwrap();
    for (i, raw) in items.iter().enumerate() {
        let out = clean_text(raw);
        check(clean_text(&out) == out, || format!("fixture {i} not idempotent"))?;
        check(!tag.is_match(&out) && !escape.is_match(&out) && !email.is_match(&out), || {
            format!("fixture {i}: {out:?}")
        })?;
        let reference = reference_clean(raw);
        check(out == reference, || format!("fixture {i}: {out:?} vs reference {reference:?}"))?;
    }
    Ok(format!("{} fixtures idempotent, contamination-free, equal to reference", items.len()))
}

fn catalog_round_trip() -> Outcome {
    let tax = Taxonomy::default_taxonomy();
    let text = std::fs::read_to_string(fixture("catalog_fig3.csv")).map_err(|e| e.to_string())?;
    let first = import(&text, CatalogFormat::Csv, &tax).map_err(|e| e.to_string())?;
    let london = first.entries.iter().find(|e| e.city.as_deref() == Some("London")).ok_or("no London row")?;
    let lat = london.latitude.unwrap_or(f64::NAN);
    check(format!("{lat:.2}") == "51.50", || format!("London latitude {lat}"))?;
    let logged = first.swaps.iter().find(|s| s.title == london.title).ok_or("London swap not logged")?;
    for format in [CatalogFormat::Csv, CatalogFormat::Jsonl] {
        let exported = export(&first.entries, format);
        let again = import(&exported, format, &tax).map_err(|e| e.to_string())?;
        check(export(&again.entries, format) == exported, || format!("{format:?} export differs after import"))?;
    }
    Ok(format!("5 entries byte-identical through CSV and JSONL; logged \"{logged}\""))
}

fn pad_invariance() -> Outcome {
    let config = EncoderConfig::desk_scale(60, 5);
    let weights = init_weights(&config).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let sequences = 120;
    for s in 0..sequences {
        let real = rng.gen_range(0..40);
        let mut ids = vec![CLS];
        ids.extend((0..real).map(|_| rng.gen_range(NUM_SPECIALS as u32..60)));
        ids.push(SEP);
        let with_tail = |tail: usize, ids_in_tail: &mut dyn FnMut() -> u32| {
            let mut seq = TokenSequence { ids: ids.clone(), mask: vec![1; ids.len()] };
            for _ in 0..tail {
                seq.ids.push(ids_in_tail());
                seq.mask.push(0);
            }
            seq
        };
        let max_tail = config.max_len - ids.len();
        let a = with_tail(rng.gen_range(0..=max_tail), &mut || PAD);
        let tail = rng.gen_range(0..=max_tail);
        let mut noise = ChaCha8Rng::seed_from_u64(s as u64);
        let b = with_tail(tail, &mut || noise.gen_range(0..60));
        let va = encode(&a, &weights, &config).map_err(|e| e.to_string())?;
        let vb = encode(&b, &weights, &config).map_err(|e| e.to_string())?;
        let equal = va.iter().zip(&vb).all(|(x, y)| x.to_bits() == y.to_bits());
        check(equal, || format!("sequence {s}: CLS vectors differ"))?;
    }
    Ok(format!("{sequences} fuzzed sequences, CLS vectors bitwise equal"))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("classification report aggregates", table2_aggregates),
        ("normalized confusion row round-trip", kids_family_row),
        ("attention invariants", attention_invariants),
        ("classifier gradient check", gradient_check),
        ("metrics oracle equivalence", metrics_oracle),
        ("end-to-end synthetic run", end_to_end),
        ("cascade rule correctness", cascade_rules),
        ("cleaning fixtures", cleaning_fixtures),
        ("catalog round-trip", catalog_round_trip),
        ("PAD invariance", pad_invariance),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        match run() {
            Ok(detail) => println!("criterion {:>2} PASS  {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name}: {why}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
