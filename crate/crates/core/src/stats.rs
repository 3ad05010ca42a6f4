//! Permutation tests, inter-rater agreement, rank correlation and temperature
//! scaling.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::{cross_entropy, Logits};
use crate::ud::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StatsConfig {
    pub replications: usize,
    pub alpha: f64,
    pub seed: u64,
}

impl Default for StatsConfig {
    fn default() -> Self {
        StatsConfig { replications: 10_000, alpha: 0.05, seed: 0 }
    }
}

impl StatsConfig {
    pub fn validate(&self) -> Result<(), StatsError> {
        if self.replications == 0 {
            return Err(StatsError::InvalidConfig("replications must be at least 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(StatsError::InvalidConfig("alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum StatsError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("sample is empty")]
    Empty,
    #[error("need at least {needed} items, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("correlation is undefined: {0} is constant")]
    Undefined(&'static str),
    #[error("invalid stats config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Paired,
    Unpaired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationReport {
    pub test: TestKind,
    /// Accuracy of x minus accuracy of y.
    pub statistic: f64,
    pub p_value: f64,
    pub replications: usize,
    pub seed: u64,
    pub alpha: f64,
    pub significant: bool,
}

impl PermutationReport {
    pub fn verdict(&self) -> &'static str {
        if self.significant {
            "significant"
        } else {
            "not significant"
        }
    }
}

/// Replication `r` draws from its own stream so results do not depend on how
/// replications are scheduled.
fn replication_rng(seed: u64, r: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r as u64);
    rng
}

fn finish(test: TestKind, statistic: f64, exceed: usize, cfg: &StatsConfig) -> PermutationReport {
    let p_value = (1 + exceed) as f64 / (cfg.replications + 1) as f64;
    PermutationReport {
        test,
        statistic,
        p_value,
        replications: cfg.replications,
        seed: cfg.seed,
        alpha: cfg.alpha,
        significant: p_value < cfg.alpha,
    }
}

fn mean_bits(bits: &[bool]) -> f64 {
    bits.iter().filter(|&&b| b).count() as f64 / bits.len() as f64
}

/// Two-tailed paired test; each replication swaps every item's pair of bits
/// with probability 1/2.
pub fn paired_permutation_test(
    x: &[bool],
    y: &[bool],
    cfg: &StatsConfig,
) -> Result<PermutationReport, StatsError> {
    cfg.validate()?;
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatsError::Empty);
    }
    // Statistic scaled by n: sum of per-item differences. Concordant items contribute 0.
    let diffs: Vec<i64> = x.iter().zip(y).map(|(&a, &b)| a as i64 - b as i64).collect();
    let observed: i64 = diffs.iter().sum();
    let mut exceed = 0;
    for r in 0..cfg.replications {
        let mut rng = replication_rng(cfg.seed, r);
        let stat: i64 = diffs.iter().map(|&d| if rng.gen::<bool>() { -d } else { d }).sum();
        if stat.abs() >= observed.abs() {
            exceed += 1;
        }
    }
    Ok(finish(TestKind::Paired, mean_bits(x) - mean_bits(y), exceed, cfg))
}

/// Two-tailed unpaired test; each replication shuffles the pooled sample and
/// re-splits it at the original sizes.
pub fn unpaired_permutation_test(
    x: &[bool],
    y: &[bool],
    cfg: &StatsConfig,
) -> Result<PermutationReport, StatsError> {
    cfg.validate()?;
    if x.is_empty() || y.is_empty() {
        return Err(StatsError::Empty);
    }
    let (nx, ny) = (x.len() as i64, y.len() as i64);
    let count = |bits: &[bool]| bits.iter().filter(|&&b| b).count() as i64;
    // mean_x - mean_y scaled by nx * ny
    let scaled = |sx: i64, sy: i64| sx * ny - sy * nx;
    let observed = scaled(count(x), count(y));
    let mut pooled: Vec<bool> = x.iter().chain(y).copied().collect();
    let total = count(&pooled);
    let mut exceed = 0;
    for r in 0..cfg.replications {
        let mut rng = replication_rng(cfg.seed, r);
        pooled.sort_unstable();
        pooled.shuffle(&mut rng);
        let sx = count(&pooled[..x.len()]);
        if scaled(sx, total - sx).abs() >= observed.abs() {
            exceed += 1;
        }
    }
    Ok(finish(TestKind::Unpaired, mean_bits(x) - mean_bits(y), exceed, cfg))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub kappa: f64,
    pub observed: f64,
    pub chance: f64,
    /// Items.
    pub n_items: usize,
    /// Raters.
    pub n_raters: usize,
    /// Categories.
    pub n_categories: usize,
}

/// Two-rater, two-category Cohen's kappa. When chance agreement is 1 the
/// raters used a single shared category throughout and kappa is 1.
pub fn cohens_kappa(x: &[Label], y: &[Label]) -> Result<AgreementReport, StatsError> {
    if x.len() != y.len() {
        return Err(StatsError::LengthMismatch(x.len(), y.len()));
    }
    if x.is_empty() {
        return Err(StatsError::Empty);
    }
    let n = x.len() as f64;
    let observed = x.iter().zip(y).filter(|(a, b)| a == b).count() as f64 / n;
    let share = |v: &[Label], c: Label| v.iter().filter(|&&l| l == c).count() as f64 / n;
    let chance: f64 = [Label::A, Label::B].iter().map(|&c| share(x, c) * share(y, c)).sum();
    let kappa = if chance >= 1.0 { 1.0 } else { (observed - chance) / (1.0 - chance) };
    Ok(AgreementReport { kappa, observed, chance, n_items: x.len(), n_raters: 2, n_categories: 2 })
}

/// 1-based ranks with ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && v[idx[end]] == v[idx[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman correlation between model confidence margins and per-item human
/// agreement.
pub fn confidence_agreement_correlation(margins: &[f64], agreement: &[f64]) -> Result<f64, StatsError> {
    if margins.len() != agreement.len() {
        return Err(StatsError::LengthMismatch(margins.len(), agreement.len()));
    }
    if margins.len() < 3 {
        return Err(StatsError::TooFew { needed: 3, got: margins.len() });
    }
    let constant = |v: &[f64]| v.iter().all(|&x| x == v[0]);
    if constant(margins) {
        return Err(StatsError::Undefined("margins"));
    }
    if constant(agreement) {
        return Err(StatsError::Undefined("human agreement"));
    }
    Ok(pearson(&average_ranks(margins), &average_ranks(agreement)))
}

pub const TEMPERATURE_RANGE: (f64, f64) = (0.05, 20.0);
pub const TEMPERATURE_TOLERANCE: f64 = 1e-4;

/// Mean cross-entropy of `logits / t`.
pub fn scaled_nll(logits: &[Logits], labels: &[Label], t: f64) -> f64 {
    let total: f64 = logits.iter().zip(labels).map(|(l, &y)| cross_entropy(l.scaled(1.0 / t), y)).sum();
    total / logits.len() as f64
}

/// Temperature minimizing the mean scaled cross-entropy over
/// [`TEMPERATURE_RANGE`], by golden-section search. The bracket ends and
/// `T = 1` are also considered, so the result is never worse than either.
pub fn temperature_scale(logits: &[Logits], labels: &[Label]) -> Result<f64, StatsError> {
    if logits.len() != labels.len() {
        return Err(StatsError::LengthMismatch(logits.len(), labels.len()));
    }
    if logits.is_empty() {
        return Err(StatsError::Empty);
    }
    let f = |t: f64| scaled_nll(logits, labels, t);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut lo, mut hi) = TEMPERATURE_RANGE;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > TEMPERATURE_TOLERANCE {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    let best = [mid, TEMPERATURE_RANGE.0, TEMPERATURE_RANGE.1, 1.0]
        .into_iter()
        .map(|t| (t, f(t)))
        .fold((mid, f64::INFINITY), |acc, (t, v)| if v < acc.1 { (t, v) } else { acc });
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{A, B};

    /// Exact two-tailed p over all 2^n sign patterns.
    fn exact_paired(x: &[bool], y: &[bool]) -> f64 {
        let d: Vec<i64> = x.iter().zip(y).map(|(&a, &b)| a as i64 - b as i64).collect();
        let obs: i64 = d.iter().sum();
        let n = d.len();
        let hits = (0u32..1 << n)
            .filter(|mask| {
                let s: i64 = (0..n).map(|i| if mask >> i & 1 == 1 { -d[i] } else { d[i] }).sum();
                s.abs() >= obs.abs()
            })
            .count();
        hits as f64 / (1u64 << n) as f64
    }

    /// Exact two-tailed p over all re-splits of the pooled sample.
    fn exact_unpaired(x: &[bool], y: &[bool]) -> f64 {
        let pooled: Vec<bool> = x.iter().chain(y).copied().collect();
        let n = pooled.len();
        let mean = |v: &[bool]| v.iter().filter(|&&b| b).count() as f64 / v.len() as f64;
        let obs = mean(x) - mean(y);
        let (mut hits, mut total) = (0, 0);
        for mask in 0u32..1 << n {
            if mask.count_ones() as usize != x.len() {
                continue;
            }
            let (mut gx, mut gy) = (vec![], vec![]);
            for (i, &b) in pooled.iter().enumerate() {
                if mask >> i & 1 == 1 { gx.push(b) } else { gy.push(b) }
            }
            total += 1;
            if (mean(&gx) - mean(&gy)).abs() >= obs.abs() - 1e-12 {
                hits += 1;
            }
        }
        hits as f64 / total as f64
    }

    fn bits(s: &str) -> Vec<bool> {
        s.chars().map(|c| c == '1').collect()
    }

    #[test]
    fn paired_identical_is_one() {
        let x = bits("1011001");
        let r = paired_permutation_test(&x, &x, &StatsConfig::default()).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn paired_matches_enumeration() {
        let (x, y) = (bits("1110"), bits("0000"));
        let exact = exact_paired(&x, &y);
        assert_eq!(exact, 0.25);
        let r = paired_permutation_test(&x, &y, &StatsConfig::default()).unwrap();
        assert!((r.p_value - exact).abs() <= 0.02, "{}", r.p_value);
        assert_eq!(r.statistic, 0.75);
    }

    #[test]
    fn concordant_items_do_not_matter() {
        // Adding a concordant item leaves every sign pattern's |stat| ordering intact.
        let (x, y) = (bits("110"), bits("001"));
        let (x2, y2) = (bits("1101"), bits("0011"));
        assert_eq!(exact_paired(&x, &y), exact_paired(&x2, &y2));
        let cfg = StatsConfig { replications: 2000, ..Default::default() };
        let a = paired_permutation_test(&x2, &y2, &cfg).unwrap().p_value;
        assert!((a - exact_paired(&x2, &y2)).abs() <= 0.03);
    }

    #[test]
    fn unpaired_matches_enumeration() {
        let (x, y) = (bits("11"), bits("00"));
        let exact = exact_unpaired(&x, &y);
        assert!((exact - 2.0 / 6.0).abs() < 1e-15);
        let cfg = StatsConfig::default();
        let r = unpaired_permutation_test(&x, &y, &cfg).unwrap();
        assert!((r.p_value - exact).abs() <= 0.02, "{}", r.p_value);
        let swapped = unpaired_permutation_test(&y, &x, &cfg).unwrap();
        assert_eq!(swapped.p_value, r.p_value);
        let ones = bits("111");
        assert_eq!(unpaired_permutation_test(&ones, &ones, &cfg).unwrap().p_value, 1.0);
    }

    #[test]
    fn errors() {
        let cfg = StatsConfig::default();
        assert_eq!(
            paired_permutation_test(&bits("10"), &bits("1"), &cfg).unwrap_err(),
            StatsError::LengthMismatch(2, 1)
        );
        assert_eq!(unpaired_permutation_test(&[], &bits("1"), &cfg).unwrap_err(), StatsError::Empty);
        let bad = StatsConfig { alpha: 1.0, ..Default::default() };
        assert!(paired_permutation_test(&bits("1"), &bits("0"), &bad).is_err());
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(cohens_kappa(&[A, B, B], &[A, B, B]).unwrap().kappa, 1.0);
        let r = cohens_kappa(&[A, A, B, B], &[A, B, A, B]).unwrap();
        assert_eq!((r.observed, r.chance, r.kappa), (0.5, 0.5, 0.0));
        let r = cohens_kappa(&[A, A, A, B, B], &[A, A, B, B, B]).unwrap();
        assert!((r.observed - 0.8).abs() < 1e-15);
        assert!((r.chance - 0.48).abs() < 1e-15);
        assert!((r.kappa - 0.32 / 0.52).abs() < 1e-12);
        assert!((r.kappa - 0.6154).abs() < 1e-4);
        // single shared category
        assert_eq!(cohens_kappa(&[A, A], &[A, A]).unwrap().kappa, 1.0);
    }

    #[test]
    fn spearman_examples() {
        let r = confidence_agreement_correlation(&[1.0, 2.0, 3.0, 4.0], &[2.0, 1.0, 4.0, 3.0]).unwrap();
        // 1 - 6 * sum(d^2) / (n (n^2 - 1)) with d = (1, 1, 1, 1)
        assert!((r - 0.6).abs() < 1e-12);
        assert_eq!(confidence_agreement_correlation(&[1.0, 2.0, 3.0], &[0.1, 0.5, 0.9]).unwrap(), 1.0);
        assert_eq!(confidence_agreement_correlation(&[1.0, 2.0, 3.0], &[0.9, 0.5, 0.1]).unwrap(), -1.0);
        assert_eq!(
            confidence_agreement_correlation(&[1.0, 1.0, 1.0], &[0.1, 0.5, 0.9]).unwrap_err(),
            StatsError::Undefined("margins")
        );
        assert!(confidence_agreement_correlation(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn temperature_examples() {
        let logits = vec![
            Logits([1.0, -0.5]),
            Logits([0.2, 0.8]),
            Logits([-1.0, 1.5]),
            Logits([2.0, 0.0]),
            Logits([0.3, 0.1]),
        ];
        let labels = vec![A, A, B, B, A];
        let t = temperature_scale(&logits, &labels).unwrap();
        assert!(t > 0.05 && t < 20.0);
        assert!(scaled_nll(&logits, &labels, t) <= scaled_nll(&logits, &labels, 1.0));
        let doubled: Vec<Logits> = logits.iter().map(|l| l.scaled(2.0)).collect();
        let t2 = temperature_scale(&doubled, &labels).unwrap();
        assert!((t2 - 2.0 * t).abs() < 1e-3, "{t} {t2}");

        let separable = vec![Logits([1.0, 0.0]), Logits([0.0, 2.0])];
        assert_eq!(temperature_scale(&separable, &[A, B]).unwrap(), 0.05);
    }
}
