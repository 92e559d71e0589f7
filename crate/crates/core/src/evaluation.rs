//! Train/test splitting, confusion matrices and the classification report.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classifier::Prediction;
use crate::taxonomy::{CategoryId, Taxonomy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    Fraction(f64),
    #[error("class {0} has fewer than 2 examples and cannot be stratified")]
    ClassTooSmall(CategoryId),
    #[error("label {0} is not in the class list")]
    UnknownLabel(CategoryId),
    #[error("prediction {0} has no actual label")]
    MissingActual(usize),
    #[error("confusion matrices over different classes cannot be merged")]
    ClassMismatch,
}

/// Number of test items per class: `n_c · T / N` rounded by largest
/// remainder so that the counts sum to `T = round(N · fraction)`. Equal
/// remainders go to the earlier class.
pub fn stratified_allocation(class_sizes: &[usize], test_fraction: f64) -> Vec<usize> {
    let n: usize = class_sizes.iter().sum();
    if n == 0 {
        return vec![0; class_sizes.len()];
    }
    let target = (n as f64 * test_fraction).round() as usize;
    let quotas: Vec<f64> = class_sizes.iter().map(|&c| c as f64 * target as f64 / n as f64).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rest = target - alloc.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for i in order {
        if rest == 0 {
            break;
        }
        if alloc[i] < class_sizes[i] {
            alloc[i] += 1;
            rest -= 1;
        }
    }
    alloc
}

/// Splits item indices into `(train, test)`. Both lists are sorted.
pub fn split_indices(
    labels: &[CategoryId],
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Vec<usize>, Vec<usize>), EvalError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(EvalError::Fraction(test_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test = Vec::new();
    if stratified {
        let mut groups: BTreeMap<CategoryId, Vec<usize>> = BTreeMap::new();
        for (i, l) in labels.iter().enumerate() {
            groups.entry(*l).or_default().push(i);
        }
        if let Some((c, _)) = groups.iter().find(|(_, g)| g.len() < 2) {
            return Err(EvalError::ClassTooSmall(*c));
        }
        let sizes: Vec<usize> = groups.values().map(Vec::len).collect();
        let alloc = stratified_allocation(&sizes, test_fraction);
        for (group, k) in groups.into_values().zip(alloc) {
            let mut group = group;
            group.shuffle(&mut rng);
            test.extend_from_slice(&group[..k]);
        }
    } else {
        let mut all: Vec<usize> = (0..labels.len()).collect();
        all.shuffle(&mut rng);
        let k = (labels.len() as f64 * test_fraction).round() as usize;
        test.extend_from_slice(&all[..k]);
    }
    test.sort_unstable();
    let mut in_test = vec![false; labels.len()];
    for &i in &test {
        in_test[i] = true;
    }
    let train = (0..labels.len()).filter(|&i| !in_test[i]).collect();
    Ok((train, test))
}

/// Splits `items` by the label `label_of` reports for each.
pub fn split<T: Clone>(
    items: &[T],
    label_of: impl Fn(&T) -> CategoryId,
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Vec<T>, Vec<T>), EvalError> {
    let labels: Vec<CategoryId> = items.iter().map(label_of).collect();
    let (train, test) = split_indices(&labels, test_fraction, seed, stratified)?;
    Ok((train.into_iter().map(|i| items[i].clone()).collect(), test.into_iter().map(|i| items[i].clone()).collect()))
}

/// Rows are actual classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<CategoryId>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<CategoryId>) -> Self {
        let c = classes.len();
        ConfusionMatrix { classes, counts: vec![vec![0; c]; c] }
    }

    pub fn from_pairs(
        classes: Vec<CategoryId>,
        pairs: impl IntoIterator<Item = (CategoryId, CategoryId)>,
    ) -> Result<Self, EvalError> {
        let mut m = ConfusionMatrix::new(classes);
        for (actual, predicted) in pairs {
            m.add(actual, predicted)?;
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, class: CategoryId) -> Result<usize, EvalError> {
        self.classes.iter().position(|&c| c == class).ok_or(EvalError::UnknownLabel(class))
    }

    pub fn add(&mut self, actual: CategoryId, predicted: CategoryId) -> Result<(), EvalError> {
        let a = self.index_of(actual)?;
        let p = self.index_of(predicted)?;
        self.counts[a][p] += 1;
        Ok(())
    }

    pub fn get(&self, actual: CategoryId, predicted: CategoryId) -> Option<u64> {
        let a = self.index_of(actual).ok()?;
        let p = self.index_of(predicted).ok()?;
        Some(self.counts[a][p])
    }

    /// Elementwise sum; both matrices must share the class list.
    pub fn merge(&self, other: &ConfusionMatrix) -> Result<ConfusionMatrix, EvalError> {
        if self.classes != other.classes {
            return Err(EvalError::ClassMismatch);
        }
        let counts =
            self.counts.iter().zip(&other.counts).map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect()).collect();
        Ok(ConfusionMatrix { classes: self.classes.clone(), counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn column_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

/// Confusion matrix over the first-level categories of `taxonomy`, with
/// predicted and actual categories rolled up to their first-level ancestor.
pub fn confusion(predictions: &[Prediction], taxonomy: &Taxonomy) -> Result<ConfusionMatrix, EvalError> {
    let mut m = ConfusionMatrix::new(taxonomy.first_level_ids());
    for p in predictions {
        let actual = p.actual.ok_or(EvalError::MissingActual(p.index))?;
        let roll = |c: CategoryId| taxonomy.first_level_of(c).map_err(|_| EvalError::UnknownLabel(c));
        m.add(roll(actual)?, roll(p.pred)?)?;
    }
    Ok(m)
}

/// Each row divided by its sum; empty rows stay zero.
pub fn normalize_rows(m: &ConfusionMatrix) -> Vec<Vec<f64>> {
    m.counts
        .iter()
        .map(|row| {
            let sum: u64 = row.iter().sum();
            row.iter().map(|&v| if sum == 0 { 0.0 } else { v as f64 / sum as f64 }).collect()
        })
        .collect()
}

/// Metrics of one class. The `*_undefined` flags mark a zero denominator,
/// in which case the value is reported as 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: CategoryId,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

impl ClassMetrics {
    pub fn new(class: CategoryId, precision: f64, recall: f64, f1: f64, support: u64) -> Self {
        ClassMetrics {
            class,
            precision,
            recall,
            f1,
            support,
            precision_undefined: false,
            recall_undefined: false,
            f1_undefined: false,
        }
    }
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

pub fn per_class_metrics(m: &ConfusionMatrix) -> Vec<ClassMetrics> {
    (0..m.len())
        .map(|i| {
            let tp = m.counts[i][i];
            let (precision, precision_undefined) = ratio(tp, m.column_sum(i));
            let (recall, recall_undefined) = ratio(tp, m.row_sum(i));
            ClassMetrics {
                class: m.classes[i],
                precision,
                recall,
                f1: f1_score(precision, recall),
                support: m.row_sum(i),
                precision_undefined,
                recall_undefined,
                f1_undefined: precision + recall == 0.0,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_avg: Averages,
    pub weighted_avg: Averages,
    pub total: u64,
}

/// Accuracy, macro and support-weighted averages. With a confusion matrix,
/// accuracy is its trace over its total; without one it is recovered from
/// the per-class recalls as `Σ recall_c · support_c / Σ support_c`.
pub fn aggregate(per_class: &[ClassMetrics], m: Option<&ConfusionMatrix>) -> EvalReport {
    let total: u64 = per_class.iter().map(|c| c.support).sum();
    let n = per_class.len().max(1) as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n;
    let weighted = |f: fn(&ClassMetrics) -> f64| {
        if total == 0 {
            0.0
        } else {
            per_class.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / total as f64
        }
    };
    let accuracy = match m {
        Some(m) if m.total() > 0 => m.trace() as f64 / m.total() as f64,
        Some(_) => 0.0,
        None => weighted(|c| c.recall),
    };
    EvalReport {
        per_class: per_class.to_vec(),
        accuracy,
        macro_avg: Averages { precision: mean(|c| c.precision), recall: mean(|c| c.recall), f1: mean(|c| c.f1) },
        weighted_avg: Averages {
            precision: weighted(|c| c.precision),
            recall: weighted(|c| c.recall),
            f1: weighted(|c| c.f1),
        },
        total,
    }
}

pub fn evaluate(m: &ConfusionMatrix) -> EvalReport {
    aggregate(&per_class_metrics(m), Some(m))
}

/// Two decimals, halves rounded up.
pub fn round2(x: f64) -> String {
    format!("{:.2}", ((x * 100.0) + 0.5 + 1e-9).floor() / 100.0)
}

fn category_label(class: CategoryId, taxonomy: &Taxonomy) -> String {
    match taxonomy.get(class) {
        Some(node) => format!("Category {} ({})", class, node.name),
        None => format!("Category {class}"),
    }
}

/// Fixed-width text report: one row per category, then accuracy, macro avg
/// and weighted avg.
pub fn render_report(report: &EvalReport, taxonomy: &Taxonomy) -> String {
    if report.total == 0 {
        return "no events evaluated\n".to_string();
    }
    let labels: Vec<String> = report.per_class.iter().map(|c| category_label(c.class, taxonomy)).collect();
    let width = labels.iter().map(|l| l.chars().count()).max().unwrap_or(0).max("weighted avg".len());
    let mut out = String::new();
    let _ =
        writeln!(out, "{:w$}  {:>9}  {:>9}  {:>9}  {:>9}", "", "Precision", "Recall", "F1-score", "Support", w = width);
    out.push('\n');
    for (label, c) in labels.iter().zip(&report.per_class) {
        let _ = writeln!(
            out,
            "{:w$}  {:>9}  {:>9}  {:>9}  {:>9}",
            label,
            round2(c.precision),
            round2(c.recall),
            round2(c.f1),
            c.support,
            w = width
        );
    }
    out.push('\n');
    let _ = writeln!(
        out,
        "{:w$}  {:>9}  {:>9}  {:>9}  {:>9}",
        "accuracy",
        "",
        "",
        round2(report.accuracy),
        report.total,
        w = width
    );
    for (name, avg) in [("macro avg", report.macro_avg), ("weighted avg", report.weighted_avg)] {
        let _ = writeln!(
            out,
            "{:w$}  {:>9}  {:>9}  {:>9}  {:>9}",
            name,
            round2(avg.precision),
            round2(avg.recall),
            round2(avg.f1),
            report.total,
            w = width
        );
    }
    let flagged: Vec<String> = report
        .per_class
        .iter()
        .filter(|c| c.precision_undefined || c.recall_undefined)
        .map(|c| c.class.to_string())
        .collect();
    if !flagged.is_empty() {
        let _ = writeln!(out, "\nundefined metrics reported as 0 for categories: {}", flagged.join(", "));
    }
    out
}

/// Confusion matrix as CSV: a header of class names, then one row per
/// actual class. Normalized cells use six decimals.
pub fn confusion_csv(m: &ConfusionMatrix, taxonomy: &Taxonomy, normalized: bool) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    let names: Vec<String> =
        m.classes.iter().map(|c| taxonomy.get(*c).map(|n| n.name.clone()).unwrap_or_else(|| c.to_string())).collect();
    let mut header = vec!["actual".to_string()];
    header.extend(names.iter().cloned());
    w.write_record(&header).expect("in-memory csv");
    let rows: Vec<Vec<String>> = if normalized {
        normalize_rows(m).iter().map(|r| r.iter().map(|v| format!("{v:.6}")).collect()).collect()
    } else {
        m.counts.iter().map(|r| r.iter().map(u64::to_string).collect()).collect()
    };
    for (name, row) in names.iter().zip(rows) {
        let mut rec = vec![name.clone()];
        rec.extend(row);
        w.write_record(&rec).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8 csv")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(n: u32) -> Vec<CategoryId> {
        (0..n).map(CategoryId).collect()
    }

    /// Table 2 per-class rows: precision, recall, f1, support.
    const TABLE2: [(f64, f64, f64, u64); 7] = [
        (0.87, 0.92, 0.90, 43839),
        (0.88, 0.84, 0.86, 38372),
        (0.88, 0.87, 0.88, 30088),
        (0.97, 0.97, 0.97, 20546),
        (0.81, 0.80, 0.80, 20337),
        (0.84, 0.85, 0.84, 11567),
        (0.76, 0.78, 0.77, 8426),
    ];

    fn table2() -> Vec<ClassMetrics> {
        TABLE2
            .iter()
            .enumerate()
            .map(|(i, &(p, r, f, s))| ClassMetrics::new(CategoryId(i as u32), p, r, f, s))
            .collect()
    }

    #[test]
    fn split_exact_and_deterministic() {
        let labels = vec![CategoryId(0); 100];
        let (train, test) = split_indices(&labels, 0.2, 3, false).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));
        assert_eq!(split_indices(&labels, 0.2, 3, false).unwrap(), (train, test));
        assert!(split_indices(&labels, 1.0, 3, false).is_err());
        assert_eq!(
            split_indices(&[CategoryId(0), CategoryId(0), CategoryId(1)], 0.5, 0, true),
            Err(EvalError::ClassTooSmall(CategoryId(1)))
        );
    }

    #[test]
    fn confusion_cell_and_diagonal() {
        let m = ConfusionMatrix::from_pairs(ids(7), [(CategoryId(6), CategoryId(4))]).unwrap();
        assert_eq!(m.counts[6][4], 1);
        assert_eq!(m.total(), 1);
        let d = ConfusionMatrix::from_pairs(ids(3), (0..3).map(|i| (CategoryId(i), CategoryId(i)))).unwrap();
        assert_eq!(d.counts, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert_eq!(
            ConfusionMatrix::from_pairs(ids(3), [(CategoryId(0), CategoryId(9))]),
            Err(EvalError::UnknownLabel(CategoryId(9)))
        );
    }

    #[test]
    fn normalize_examples() {
        let mut m = ConfusionMatrix::new(ids(2));
        m.counts = vec![vec![1, 3], vec![0, 0]];
        assert_eq!(normalize_rows(&m), vec![vec![0.25, 0.75], vec![0.0, 0.0]]);

        // 1000 kids-and-family events, 24 of them predicted as other events.
        let mut k = ConfusionMatrix::new(ids(7));
        k.counts[6][4] = 24;
        k.counts[6][6] = 976;
        assert!((normalize_rows(&k)[6][4] - 0.024).abs() < 1e-15);
    }

    #[test]
    fn degenerate_metrics_are_flagged() {
        let m = ConfusionMatrix::from_pairs(ids(2), [(CategoryId(1), CategoryId(0))]).unwrap();
        let pc = per_class_metrics(&m);
        assert_eq!(pc[1].precision, 0.0);
        assert!(pc[1].precision_undefined);
        assert_eq!(pc[1].recall, 0.0);
        assert!(!pc[1].recall_undefined);
        assert!(pc[0].recall_undefined);
    }

    #[test]
    fn table2_aggregates() {
        let r = aggregate(&table2(), None);
        assert_eq!(r.total, 173175);
        assert_eq!(round2(r.macro_avg.precision), "0.86");
        assert_eq!(round2(r.macro_avg.recall), "0.86");
        assert_eq!(round2(r.macro_avg.f1), "0.86");
        assert_eq!(round2(r.weighted_avg.precision), "0.87");
        assert_eq!(round2(r.weighted_avg.recall), "0.87");
        assert_eq!(round2(r.weighted_avg.f1), "0.87");
        assert_eq!(round2(r.accuracy), "0.87");
        assert!((r.macro_avg.precision - 0.86).abs() < 0.005);
        assert!((r.weighted_avg.f1 - 0.87).abs() < 0.005);
    }

    #[test]
    fn single_class_report() {
        let one = vec![ClassMetrics::new(CategoryId(2), 0.5, 0.25, 1.0 / 3.0, 8)];
        let r = aggregate(&one, None);
        assert_eq!(r.macro_avg, r.weighted_avg);
        assert_eq!(r.macro_avg.precision, 0.5);
    }

    #[test]
    fn rendered_table2_cells() {
        let tax = Taxonomy::default_taxonomy();
        let text = render_report(&aggregate(&table2(), None), &tax);
        assert_eq!(text, render_report(&aggregate(&table2(), None), &tax));
        let row = |prefix: &str| -> Vec<String> {
            let line = text.lines().find(|l| l.starts_with(prefix)).unwrap();
            line[prefix.len()..].split_whitespace().map(str::to_string).collect()
        };
        assert_eq!(row("Category 0 (music)"), ["0.87", "0.92", "0.90", "43839"]);
        assert_eq!(row("Category 6 (kids and family)"), ["0.76", "0.78", "0.77", "8426"]);
        assert_eq!(row("accuracy"), ["0.87", "173175"]);
        assert_eq!(row("macro avg"), ["0.86", "0.86", "0.86", "173175"]);
        assert_eq!(row("weighted avg"), ["0.87", "0.87", "0.87", "173175"]);

        let empty = aggregate(&per_class_metrics(&ConfusionMatrix::new(ids(7))), None);
        assert_eq!(render_report(&empty, &tax), "no events evaluated\n");
    }

    #[test]
    fn round_half_up() {
        assert_eq!(round2(0.125), "0.13");
        assert_eq!(round2(0.865), "0.87");
        assert_eq!(round2(0.8649), "0.86");
        assert_eq!(round2(1.0), "1.00");
    }

    #[test]
    fn csv_export() {
        let tax = Taxonomy::default_taxonomy();
        let mut m = ConfusionMatrix::new(vec![CategoryId(0), CategoryId(5)]);
        m.counts = vec![vec![3, 1], vec![0, 2]];
        assert_eq!(
            confusion_csv(&m, &tax, false),
            "actual,music,trade fairs and conferences\nmusic,3,1\ntrade fairs and conferences,0,2\n"
        );
        assert!(confusion_csv(&m, &tax, true).contains("music,0.750000,0.250000"));
    }

    /// Minimizes `Σ (k_c − q_c)²` over every allocation summing to the target.
    fn brute_force_allocation(sizes: &[usize], fraction: f64) -> Vec<usize> {
        let n: usize = sizes.iter().sum();
        let target = (n as f64 * fraction).round() as usize;
        let quotas: Vec<f64> = sizes.iter().map(|&s| s as f64 * target as f64 / n as f64).collect();
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut current = vec![0; sizes.len()];
        fn walk(
            i: usize,
            left: usize,
            sizes: &[usize],
            q: &[f64],
            cur: &mut Vec<usize>,
            best: &mut Option<(f64, Vec<usize>)>,
        ) {
            if i == sizes.len() {
                if left == 0 {
                    let cost: f64 = cur.iter().zip(q).map(|(&k, &qq)| (k as f64 - qq).powi(2)).sum();
                    if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                        *best = Some((cost, cur.clone()));
                    }
                }
                return;
            }
            for k in 0..=sizes[i].min(left) {
                cur[i] = k;
                walk(i + 1, left - k, sizes, q, cur, best);
            }
        }
        walk(0, target, sizes, &quotas, &mut current, &mut best);
        best.unwrap().1
    }

    #[test]
    fn stratified_matches_brute_force_allocation() {
        // Music twice as frequent as the other two classes.
        let sizes = [22, 11, 11];
        let alloc = stratified_allocation(&sizes, 0.3);
        assert_eq!(alloc, brute_force_allocation(&sizes, 0.3));
        let labels: Vec<CategoryId> =
            sizes.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(CategoryId(c as u32), n)).collect();
        let (_, test) = split_indices(&labels, 0.3, 5, true).unwrap();
        for (c, &k) in alloc.iter().enumerate() {
            assert_eq!(test.iter().filter(|&&i| labels[i] == CategoryId(c as u32)).count(), k);
        }
    }

    fn tally_metrics(pairs: &[(u32, u32)], c: u32) -> Vec<(f64, f64, u64)> {
        (0..c)
            .map(|k| {
                let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
                for &(a, p) in pairs {
                    match (a == k, p == k) {
                        (true, true) => tp += 1,
                        (false, true) => fp += 1,
                        (true, false) => fn_ += 1,
                        _ => {}
                    }
                }
                let prec = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
                let rec = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
                (prec, rec, tp + fn_)
            })
            .collect()
    }

    fn pairs_strategy(c: u32, max: usize) -> impl Strategy<Value = Vec<(u32, u32)>> {
        prop::collection::vec((0..c, 0..c), 0..max)
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn metrics_match_pair_scan(pairs in pairs_strategy(4, 60)) {
            let m = ConfusionMatrix::from_pairs(ids(4), pairs.iter().map(|&(a, p)| (CategoryId(a), CategoryId(p)))).unwrap();
            for (a, row) in m.counts.iter().enumerate() {
                for (p, &v) in row.iter().enumerate() {
                    prop_assert_eq!(v, pairs.iter().filter(|&&x| x == (a as u32, p as u32)).count() as u64);
                }
            }
            let pc = per_class_metrics(&m);
            for (got, (p, r, s)) in pc.iter().zip(tally_metrics(&pairs, 4)) {
                prop_assert!((got.precision - p).abs() < 1e-12);
                prop_assert!((got.recall - r).abs() < 1e-12);
                prop_assert_eq!(got.support, s);
                if got.precision + got.recall > 0.0 {
                    let h = 2.0 * got.precision * got.recall / (got.precision + got.recall);
                    prop_assert!((got.f1 - h).abs() < 1e-12);
                }
            }
            let r = evaluate(&m);
            prop_assert_eq!(r.total, m.total());
            prop_assert_eq!((0..4).map(|i| m.row_sum(i)).sum::<u64>(), m.total());
            if m.total() > 0 {
                prop_assert!((r.accuracy - m.trace() as f64 / m.total() as f64).abs() < 1e-15);
                prop_assert!((r.accuracy - aggregate(&pc, None).accuracy).abs() < 1e-12);
            }
            for row in normalize_rows(&m) {
                let s: f64 = row.iter().sum();
                prop_assert!(s == 0.0 || (s - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn merge_is_sum_associative_and_commutative(
            a in pairs_strategy(3, 20), b in pairs_strategy(3, 20), c in pairs_strategy(3, 20)
        ) {
            let mk = |v: &Vec<(u32, u32)>| ConfusionMatrix::from_pairs(ids(3), v.iter().map(|&(x, y)| (CategoryId(x), CategoryId(y)))).unwrap();
            let (ma, mb, mc) = (mk(&a), mk(&b), mk(&c));
            prop_assert_eq!(ma.merge(&mb).unwrap(), mb.merge(&ma).unwrap());
            prop_assert_eq!(ma.merge(&mb).unwrap().merge(&mc).unwrap(), ma.merge(&mb.merge(&mc).unwrap()).unwrap());
            let all: Vec<_> = a.iter().chain(&b).chain(&c).cloned().collect();
            prop_assert_eq!(ma.merge(&mb).unwrap().merge(&mc).unwrap(), mk(&all));
        }

        #[test]
        fn uniform_support_weighted_equals_macro(
            vals in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..8), s in 1u64..1000
        ) {
            let pc: Vec<ClassMetrics> = vals.iter().enumerate()
                .map(|(i, &(p, r))| ClassMetrics::new(CategoryId(i as u32), p, r, f1_score(p, r), s))
                .collect();
            let rep = aggregate(&pc, None);
            prop_assert!((rep.macro_avg.precision - rep.weighted_avg.precision).abs() < 1e-12);
            prop_assert!((rep.macro_avg.recall - rep.weighted_avg.recall).abs() < 1e-12);
            prop_assert!((rep.macro_avg.f1 - rep.weighted_avg.f1).abs() < 1e-12);
        }

        #[test]
        fn stratified_split_properties(sizes in prop::collection::vec(2usize..15, 1..5), frac in 0.1f64..0.9, seed in 0u64..50) {
            let labels: Vec<CategoryId> =
                sizes.iter().enumerate().flat_map(|(c, &n)| std::iter::repeat_n(CategoryId(c as u32), n)).collect();
            let (train, test) = split_indices(&labels, frac, seed, true).unwrap();
            let mut all: Vec<usize> = train.iter().chain(&test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            let target = test.len() as f64 / labels.len() as f64;
            for (c, &n) in sizes.iter().enumerate() {
                let k = test.iter().filter(|&&i| labels[i] == CategoryId(c as u32)).count() as f64;
                prop_assert!((k - n as f64 * target).abs() <= 1.0);
            }
        }
    }
}
