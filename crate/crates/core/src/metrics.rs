//! Ranking metrics over the 9 joint labels and the cross-split report.
//!
//! Within an instance the rank of a label is the number of labels scoring at
//! least as high, so ties count against the label being ranked.

use alloc::format;
use alloc::vec::Vec;

use crate::decoder::{JointTarget, N_PAIRS};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

/// One scored instance: the 3x3 grid flattened row-major into 9 labels.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoredInstance {
    pub scores: [f64; N_PAIRS],
    pub truth: [bool; N_PAIRS],
}

impl ScoredInstance {
    pub fn new(scores: [f64; N_PAIRS], truth: [bool; N_PAIRS]) -> Self {
        ScoredInstance { scores, truth }
    }

    pub fn from_prediction(scores: &Matrix, target: &JointTarget) -> Self {
        let mut s = [0.0; N_PAIRS];
        s.copy_from_slice(scores.as_slice());
        let mut truth = [false; N_PAIRS];
        truth[target.flat_index()] = true;
        ScoredInstance { scores: s, truth }
    }

    fn n_relevant(&self) -> usize {
        self.truth.iter().filter(|&&t| t).count()
    }

    /// `rank[ℓ] = |{ℓ' : s(ℓ') ≥ s(ℓ)}|`.
    pub fn ranks(&self) -> [usize; N_PAIRS] {
        let mut order: [usize; N_PAIRS] = core::array::from_fn(|i| i);
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut ranks = [0; N_PAIRS];
        let mut start = 0;
        while start < N_PAIRS {
            let mut end = start + 1;
            while end < N_PAIRS && self.scores[order[end]] == self.scores[order[start]] {
                end += 1;
            }
            for &l in &order[start..end] {
                ranks[l] = end;
            }
            start = end;
        }
        ranks
    }
}

fn check_instances(instances: &[ScoredInstance]) -> Result<()> {
    if instances.is_empty() {
        return Err(Error::Validation("no scored instances".into()));
    }
    for (i, inst) in instances.iter().enumerate() {
        if inst.scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Domain(format!("instance {i} has a NaN score")));
        }
        if inst.n_relevant() == 0 {
            return Err(Error::Validation(format!("instance {i} has no relevant label")));
        }
    }
    Ok(())
}

/// Mann-Whitney AUROC over all `9·N` pooled (score, label) pairs, with tied
/// scores sharing their mean rank.
pub fn micro_auroc(instances: &[ScoredInstance]) -> Result<f64> {
    let mut pooled: Vec<(f64, bool)> = instances
        .iter()
        .flat_map(|i| i.scores.iter().copied().zip(i.truth.iter().copied()))
        .collect();
    if pooled.iter().any(|p| p.0.is_nan()) {
        return Err(Error::Domain("NaN score in AUROC pool".into()));
    }
    let n_pos = pooled.iter().filter(|p| p.1).count();
    let n_neg = pooled.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Undefined("AUROC needs both positive and negative labels"));
    }
    pooled.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut pos_rank_sum = 0.0;
    let mut start = 0;
    while start < pooled.len() {
        let mut end = start + 1;
        while end < pooled.len() && pooled[end].0 == pooled[start].0 {
            end += 1;
        }
        // ranks start..end (0-based) share midrank (start+1 + end) / 2.
        let midrank = (start + 1 + end) as f64 / 2.0;
        let pos_here = pooled[start..end].iter().filter(|p| p.1).count();
        pos_rank_sum += midrank * pos_here as f64;
        start = end;
    }
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((pos_rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// Mean worst rank among each instance's relevant labels.
pub fn coverage_error(instances: &[ScoredInstance]) -> Result<f64> {
    check_instances(instances)?;
    let total: usize = instances
        .iter()
        .map(|inst| {
            let ranks = inst.ranks();
            (0..N_PAIRS).filter(|&l| inst.truth[l]).map(|l| ranks[l]).max().unwrap_or(0)
        })
        .sum();
    Ok(total as f64 / instances.len() as f64)
}

/// Label-ranking average precision.
pub fn rank_precision(instances: &[ScoredInstance]) -> Result<f64> {
    check_instances(instances)?;
    let total: f64 = instances
        .iter()
        .map(|inst| {
            let ranks = inst.ranks();
            let mut rel: Vec<usize> = (0..N_PAIRS).filter(|&l| inst.truth[l]).map(|l| ranks[l]).collect();
            rel.sort_unstable();
            let mut acc = 0.0;
            for &r in &rel {
                let at_or_above = rel.partition_point(|&x| x <= r);
                acc += at_or_above as f64 / r as f64;
            }
            acc / rel.len() as f64
        })
        .sum();
    Ok(total / instances.len() as f64)
}

/// NDCG@k with binary gains and `log2(i + 1)` discounts. Tied scores place
/// irrelevant labels first.
pub fn ndcg_at_k(instances: &[ScoredInstance], k: usize) -> Result<f64> {
    if k == 0 || k > N_PAIRS {
        return Err(Error::Validation(format!("k must be in 1..={N_PAIRS}, got {k}")));
    }
    check_instances(instances)?;
    let discount = |pos: usize| 1.0 / libm::log2(pos as f64 + 1.0);
    let total: f64 = instances
        .iter()
        .map(|inst| {
            let mut order: [usize; N_PAIRS] = core::array::from_fn(|i| i);
            order.sort_by(|&a, &b| {
                inst.scores[b]
                    .total_cmp(&inst.scores[a])
                    .then(inst.truth[a].cmp(&inst.truth[b]))
            });
            let dcg: f64 = order[..k]
                .iter()
                .enumerate()
                .filter(|(_, &l)| inst.truth[l])
                .map(|(i, _)| discount(i + 1))
                .sum();
            let ideal: f64 = (1..=inst.n_relevant().min(k)).map(discount).sum();
            dcg / ideal
        })
        .sum();
    Ok(total / instances.len() as f64)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, libm::sqrt(var))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Metric {
    Auroc,
    CoverageError,
    RankPrecision,
    Ndcg,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Auroc,
        Metric::CoverageError,
        Metric::RankPrecision,
        Metric::Ndcg,
    ];

    pub fn higher_is_better(self) -> bool {
        !matches!(self, Metric::CoverageError)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelName {
    Random,
    MostPopular,
    Standard,
    Tensor,
}

impl ModelName {
    pub const ALL: [ModelName; 4] = [
        ModelName::Random,
        ModelName::MostPopular,
        ModelName::Standard,
        ModelName::Tensor,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ModelName::Random => "Random",
            ModelName::MostPopular => "Most Popular",
            ModelName::Standard => "Standard",
            ModelName::Tensor => "Tensor",
        }
    }
}

/// The four metrics for one model on one split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricValues {
    pub auroc: f64,
    pub coverage_error: f64,
    pub rank_precision: f64,
    pub ndcg: f64,
}

impl MetricValues {
    pub fn get(&self, m: Metric) -> f64 {
        match m {
            Metric::Auroc => self.auroc,
            Metric::CoverageError => self.coverage_error,
            Metric::RankPrecision => self.rank_precision,
            Metric::Ndcg => self.ndcg,
        }
    }
}

pub fn evaluate(instances: &[ScoredInstance], k: usize) -> Result<MetricValues> {
    Ok(MetricValues {
        auroc: micro_auroc(instances)?,
        coverage_error: coverage_error(instances)?,
        rank_precision: rank_precision(instances)?,
        ndcg: ndcg_at_k(instances, k)?,
    })
}

/// Metric values of all four models on one split, indexed like
/// [`ModelName::ALL`].
pub type SplitResult = [MetricValues; 4];

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub metric: Metric,
    pub model: ModelName,
    pub mean: f64,
    pub std: f64,
}

/// Per (metric, model) mean and std across splits, metric-major in the
/// fixed [`Metric::ALL`] x [`ModelName::ALL`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub k: usize,
    pub n_splits: usize,
    pub rows: Vec<ReportRow>,
}

impl MetricsReport {
    pub fn get(&self, metric: Metric, model: ModelName) -> &ReportRow {
        self.rows
            .iter()
            .find(|r| r.metric == metric && r.model == model)
            .expect("report holds every metric/model pair")
    }

    pub fn metric_label(&self, m: Metric) -> alloc::string::String {
        match m {
            Metric::Auroc => "AUROC".into(),
            Metric::CoverageError => "Coverage Error".into(),
            Metric::RankPrecision => "Rank Precision".into(),
            Metric::Ndcg => format!("NDCG@{}", self.k),
        }
    }
}

pub fn report(splits: &[SplitResult], k: usize) -> Result<MetricsReport> {
    if splits.is_empty() {
        return Err(Error::Validation("report needs at least one split".into()));
    }
    let mut rows = Vec::with_capacity(16);
    for metric in Metric::ALL {
        for (mi, model) in ModelName::ALL.into_iter().enumerate() {
            let values: Vec<f64> = splits.iter().map(|s| s[mi].get(metric)).collect();
            let (mean, std) = mean_std(&values);
            rows.push(ReportRow { metric, model, mean, std });
        }
    }
    Ok(MetricsReport {
        k,
        n_splits: splits.len(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;
    use rand::Rng;

    fn one_hot(scores: [f64; 9], true_label: usize) -> ScoredInstance {
        let mut truth = [false; 9];
        truth[true_label] = true;
        ScoredInstance::new(scores, truth)
    }

    fn descending() -> [f64; 9] {
        core::array::from_fn(|i| 9.0 - i as f64)
    }

    #[test]
    fn auroc_extremes() {
        let good: Vec<_> = (0..4).map(|_| one_hot(descending(), 0)).collect();
        assert_eq!(micro_auroc(&good).unwrap(), 1.0);
        let bad: Vec<_> = (0..4).map(|_| one_hot(descending(), 8)).collect();
        assert_eq!(micro_auroc(&bad).unwrap(), 0.0);
        let flat: Vec<_> = (0..4).map(|i| one_hot([0.3; 9], i)).collect();
        assert_eq!(micro_auroc(&flat).unwrap(), 0.5);
        let all_pos = ScoredInstance::new([0.1; 9], [true; 9]);
        assert!(matches!(micro_auroc(&[all_pos]), Err(Error::Undefined(_))));
    }

    #[test]
    fn auroc_matches_pair_counting() {
        let mut rng = seeded_rng(2);
        let inst: Vec<_> = (0..60)
            .map(|_| {
                let s: [f64; 9] = core::array::from_fn(|_| (rng.random_range(0..5) as f64) / 4.0);
                one_hot(s, rng.random_range(0..9))
            })
            .collect();
        let (mut num, mut den) = (0.0, 0.0);
        let pooled: Vec<(f64, bool)> = inst.iter().flat_map(|i| i.scores.iter().copied().zip(i.truth)).collect();
        for &(sp, tp) in &pooled {
            if !tp {
                continue;
            }
            for &(sn, tn) in &pooled {
                if tn {
                    continue;
                }
                den += 1.0;
                num += if sp > sn { 1.0 } else if sp == sn { 0.5 } else { 0.0 };
            }
        }
        assert!((micro_auroc(&inst).unwrap() - num / den).abs() < 1e-12);
    }

    #[test]
    fn ranking_metric_examples() {
        let top = [one_hot(descending(), 0)];
        assert_eq!(coverage_error(&top).unwrap(), 1.0);
        assert_eq!(rank_precision(&top).unwrap(), 1.0);
        assert_eq!(ndcg_at_k(&top, 5).unwrap(), 1.0);

        let third = [one_hot(descending(), 2)];
        assert_eq!(coverage_error(&third).unwrap(), 3.0);
        assert_eq!(ndcg_at_k(&third, 5).unwrap(), 0.5);

        let fourth = [one_hot(descending(), 3)];
        assert_eq!(rank_precision(&fourth).unwrap(), 0.25);

        let sixth = [one_hot(descending(), 5)];
        assert_eq!(ndcg_at_k(&sixth, 5).unwrap(), 0.0);
        assert!(ndcg_at_k(&sixth, 0).is_err());
        assert!(ndcg_at_k(&sixth, 10).is_err());
        assert!(coverage_error(&[ScoredInstance::new([0.0; 9], [false; 9])]).is_err());
        assert!(coverage_error(&[]).is_err());
    }

    #[test]
    fn ties_count_against() {
        // True label tied with two others at the top.
        let mut s = [0.0; 9];
        s[0] = 1.0;
        s[4] = 1.0;
        s[7] = 1.0;
        let inst = [one_hot(s, 4)];
        assert_eq!(coverage_error(&inst).unwrap(), 3.0);
        assert!((rank_precision(&inst).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(ndcg_at_k(&inst, 5).unwrap(), 0.5);
    }

    #[test]
    fn random_scores_cover_around_five() {
        let mut rng = seeded_rng(21);
        let inst: Vec<_> = (0..1000)
            .map(|_| one_hot(core::array::from_fn(|_| rng.random()), rng.random_range(0..9)))
            .collect();
        let ce = coverage_error(&inst).unwrap();
        assert!((ce - 5.0).abs() < 0.3, "coverage {ce}");
    }

    #[test]
    fn report_aggregation() {
        let v = |x: f64| MetricValues {
            auroc: x,
            coverage_error: x,
            rank_precision: x,
            ndcg: x,
        };
        let r = report(&[[v(0.2); 4]], 5).unwrap();
        assert!(r.rows.iter().all(|row| row.std == 0.0));
        let r = report(&[[v(0.2); 4], [v(0.4); 4]], 5).unwrap();
        assert_eq!(r.rows.len(), 16);
        for row in &r.rows {
            assert!((row.mean - 0.3).abs() < 1e-15);
            assert!((row.std - 0.1).abs() < 1e-15);
        }
        assert_eq!(r.rows[0].metric, Metric::Auroc);
        assert_eq!(r.rows[0].model, ModelName::Random);
        assert_eq!(r.rows[3].model, ModelName::Tensor);
        assert_eq!(r.rows[15].metric, Metric::Ndcg);
        assert_eq!(r.metric_label(Metric::Ndcg), "NDCG@5");
        assert!(report(&[], 5).is_err());
    }
}
