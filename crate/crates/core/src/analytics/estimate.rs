//! Monte-Carlo estimators over reward traces.
//!
//! With `M(m) = mean_b exp(theta S_b)` over blocks of `m` consecutive rewards,
//! the plain block estimator of the effective bandwidth is
//! `ln M(m) / (m theta)`. Its error contains the boundary term
//! `kappa / (m theta)`, where `ln E exp(theta S_m) = m Psi + kappa + o(1)`.
//! The two-scale estimator `(ln M(2m) - ln M(m)) / (m theta)` cancels that
//! term. Long blocks let a handful of blocks dominate `M(m)` and bias the
//! estimate towards the throughput, so the default block length adapts to
//! the spread of `theta S_b`. All sums are evaluated in log-sum-exp form.

use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::closed_form::EbParams;
use crate::error::{Error, Result};
use crate::rng::aux_rng;
use crate::simulator::QueueTrace;

/// How block sums are formed for the effective-bandwidth estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockLength {
    /// Longest power-of-two fraction of `max` whose largest block sums satisfy
    /// `|theta| sd(S) <= spread` with at least `min_blocks` blocks.
    Auto {
        max: usize,
        min: usize,
    },
    Fixed(usize),
}

impl Default for BlockLength {
    fn default() -> Self {
        BlockLength::Auto {
            max: 10_000,
            min: 16,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EbMethod {
    /// `ln M(m) / (m theta)`.
    Block,
    /// `(ln M(2m) - ln M(m)) / (m theta)` over blocks of `2m` and their halves.
    #[default]
    TwoScale,
}

impl EbMethod {
    fn unit(self, m: usize) -> usize {
        match self {
            EbMethod::Block => m,
            EbMethod::TwoScale => 2 * m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EbEstimatorOptions {
    pub method: EbMethod,
    pub block: BlockLength,
    pub min_blocks: usize,
    /// Largest tolerated `|theta| sd(S)` under automatic block choice.
    pub spread: f64,
    pub resamples: usize,
    pub confidence: f64,
    pub seed: u64,
}

impl Default for EbEstimatorOptions {
    fn default() -> Self {
        EbEstimatorOptions {
            method: EbMethod::default(),
            block: BlockLength::default(),
            min_blocks: 100,
            spread: 1.0,
            resamples: 1000,
            confidence: 0.95,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub std_err: f64,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            value,
            ci_lo: value,
            ci_hi: value,
            std_err: 0.0,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_lo <= x && x <= self.ci_hi
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_hi - self.ci_lo)
    }

    pub fn overlaps(&self, other: &Estimate) -> bool {
        self.ci_lo <= other.ci_hi && other.ci_lo <= self.ci_hi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EbEstimate {
    pub estimate: Estimate,
    pub method: EbMethod,
    /// Block length `m`.
    pub block_len: usize,
    /// Resampling units (blocks of `m`, or of `2m` for the two-scale form).
    pub n_blocks: usize,
    /// `log10` ratio of the largest to the smallest unit weight.
    pub weight_span_decades: f64,
}

fn block_sums<S: AsRef<[u32]>>(segments: &[S], m: usize) -> Vec<f64> {
    segments
        .iter()
        .flat_map(|s| {
            s.as_ref()
                .chunks_exact(m)
                .map(|c| c.iter().map(|&r| f64::from(r)).sum::<f64>())
        })
        .collect()
}

fn sample_sd(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

fn choose_block<S: AsRef<[u32]>>(
    segments: &[S],
    theta: f64,
    opts: &EbEstimatorOptions,
) -> Result<usize> {
    match opts.block {
        BlockLength::Fixed(0) => Err(Error::InvalidArgument(
            "block length must be positive".into(),
        )),
        BlockLength::Fixed(m) => Ok(m),
        BlockLength::Auto { max, min } => {
            if min == 0 || max < min {
                return Err(Error::InvalidArgument(format!(
                    "bad block range [{min}, {max}]"
                )));
            }
            let mut m = max;
            let mut fallback = None;
            while m >= min {
                let sums = block_sums(segments, opts.method.unit(m));
                if sums.len() >= opts.min_blocks.max(2) {
                    if theta.abs() * sample_sd(&sums) <= opts.spread {
                        return Ok(m);
                    }
                    fallback = Some(m);
                }
                m /= 2;
            }
            fallback.ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "too few slots for {} blocks of {min}",
                    opts.min_blocks
                ))
            })
        }
    }
}

/// `exp(theta S - shift)` per block, with the shift that keeps the largest at 1.
struct Weights {
    w: Vec<f64>,
    shift: f64,
    span_decades: f64,
}

impl Weights {
    fn new(sums: impl Iterator<Item = f64>, theta: f64) -> Self {
        let logs: Vec<f64> = sums.map(|s| theta * s).collect();
        let top = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let bottom = logs.iter().cloned().fold(f64::INFINITY, f64::min);
        Weights {
            w: logs.iter().map(|l| (l - top).exp()).collect(),
            shift: top,
            span_decades: (top - bottom) / std::f64::consts::LN_10,
        }
    }

    /// `ln mean exp(theta S)` over the units in `idx`, each contributing
    /// `per_unit` consecutive weights.
    fn log_mean(&self, idx: &[usize], per_unit: usize) -> f64 {
        let total: f64 = idx
            .iter()
            .map(|&u| self.w[u * per_unit..(u + 1) * per_unit].iter().sum::<f64>())
            .sum();
        (total / (idx.len() * per_unit) as f64).ln() + self.shift
    }
}

fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Effective-bandwidth estimate with a percentile bootstrap interval over
/// resampling units. Each segment is cut into whole units; leftovers are
/// dropped.
pub fn estimate_eb<S: AsRef<[u32]>>(
    segments: &[S],
    eb: &EbParams,
    opts: &EbEstimatorOptions,
) -> Result<EbEstimate> {
    let theta = eb.theta;
    if !(theta < 0.0) {
        return Err(Error::InvalidArgument(format!(
            "theta must be negative, got {theta}"
        )));
    }
    if !(opts.confidence > 0.0 && opts.confidence < 1.0) {
        return Err(Error::InvalidArgument(
            "confidence must lie in (0, 1)".into(),
        ));
    }
    let m = choose_block(segments, theta, opts)?;
    let unit = opts.method.unit(m);
    let units = block_sums(segments, unit);
    if units.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least two blocks of {unit} slots"
        )));
    }
    let long = Weights::new(units.iter().copied(), theta);
    let short = match opts.method {
        EbMethod::Block => None,
        // Halves of each unit, in unit order, two per unit.
        EbMethod::TwoScale => Some(Weights::new(
            segments.iter().flat_map(|s| {
                s.as_ref().chunks_exact(unit).flat_map(|c| {
                    c.chunks_exact(m)
                        .map(|h| h.iter().map(|&r| f64::from(r)).sum::<f64>())
                })
            }),
            theta,
        )),
    };
    let span = long
        .span_decades
        .max(short.as_ref().map_or(0.0, |s| s.span_decades));
    if span > 30.0 {
        log::warn!("block weights span {span:.1} orders of magnitude; the estimate is unreliable");
    }
    let psi_m = |idx: &[usize]| match &short {
        None => long.log_mean(idx, 1),
        Some(s) => long.log_mean(idx, 1) - s.log_mean(idx, 2),
    };
    let to_eb = |x: f64| x / (m as f64 * theta);

    let b = units.len();
    let all: Vec<usize> = (0..b).collect();
    let value = to_eb(psi_m(&all));
    let mut rng = aux_rng(opts.seed);
    let mut idx = vec![0usize; b];
    let mut boot: Vec<f64> = (0..opts.resamples)
        .map(|_| {
            idx.iter_mut().for_each(|i| *i = rng.random_range(0..b));
            to_eb(psi_m(&idx))
        })
        .collect();
    let std_err = if boot.len() > 1 {
        sample_sd(&boot)
    } else {
        0.0
    };
    boot.sort_by(f64::total_cmp);
    let alpha = 1.0 - opts.confidence;
    let (ci_lo, ci_hi) = if boot.is_empty() {
        (value, value)
    } else {
        (
            quantile(&boot, alpha / 2.0),
            quantile(&boot, 1.0 - alpha / 2.0),
        )
    };
    Ok(EbEstimate {
        estimate: Estimate {
            value,
            ci_lo,
            ci_hi,
            std_err,
        },
        method: opts.method,
        block_len: m,
        n_blocks: b,
        weight_span_decades: span,
    })
}

/// Student-t interval for the mean of (approximately) independent batch
/// values.
pub fn mean_ci(batches: &[f64], confidence: f64) -> Result<Estimate> {
    if batches.len() < 2 {
        return Err(Error::InvalidArgument("need at least two batches".into()));
    }
    let n = batches.len() as f64;
    let mean = batches.iter().sum::<f64>() / n;
    let se = sample_sd(batches) / n.sqrt();
    let t = StudentsT::new(0.0, 1.0, n - 1.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .inverse_cdf(0.5 + confidence / 2.0);
    Ok(Estimate {
        value: mean,
        ci_lo: mean - t * se,
        ci_hi: mean + t * se,
        std_err: se,
    })
}

/// Means of `n_batches` equal consecutive batches (the remainder is dropped).
pub fn batch_means(values: &[f64], n_batches: usize) -> Result<Vec<f64>> {
    let len = values.len() / n_batches.max(1);
    if n_batches < 2 || len == 0 {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} values into {n_batches} batches",
            values.len()
        )));
    }
    Ok(values
        .chunks_exact(len)
        .take(n_batches)
        .map(|c| c.iter().sum::<f64>() / len as f64)
        .collect())
}

/// Mean reward per slot. Several segments are treated as independent
/// replications; a single segment is cut into `n_batches` batches.
pub fn estimate_throughput<S: AsRef<[u32]>>(
    segments: &[S],
    n_batches: usize,
    confidence: f64,
) -> Result<Estimate> {
    let means: Vec<f64> = match segments {
        [] => return Err(Error::InvalidArgument("no reward segments".into())),
        [one] => {
            let v: Vec<f64> = one.as_ref().iter().map(|&r| f64::from(r)).collect();
            batch_means(&v, n_batches)?
        }
        many => many
            .iter()
            .map(|s| {
                let s = s.as_ref();
                if s.is_empty() {
                    return Err(Error::InvalidArgument("empty reward segment".into()));
                }
                Ok(s.iter().map(|&r| f64::from(r)).sum::<f64>() / s.len() as f64)
            })
            .collect::<Result<_>>()?,
    };
    if means.iter().all(|&m| m == means[0]) {
        return Ok(Estimate::exact(means[0]));
    }
    mean_ci(&means, confidence)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailFit {
    /// Least-squares slope of `ln P(Q > x)` against `x`.
    pub slope: f64,
    pub points: Vec<(f64, f64)>,
}

/// Fits the exponential decay of the queue tail over thresholds `xs`,
/// skipping thresholds exceeded in fewer than `min_count` slots.
pub fn tail_slope(
    queue: &QueueTrace,
    xs: &[f64],
    skip: usize,
    min_count: usize,
) -> Result<TailFit> {
    let tail = &queue.q[(skip + 1).min(queue.q.len())..];
    if tail.is_empty() {
        return Err(Error::InvalidArgument(
            "queue trace is shorter than the skip".into(),
        ));
    }
    let n = tail.len() as f64;
    let points: Vec<(f64, f64)> = xs
        .iter()
        .filter_map(|&x| {
            let k = tail.iter().filter(|&&q| q > x).count();
            (k >= min_count).then(|| (x, (k as f64 / n).ln()))
        })
        .collect();
    if points.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "only {} thresholds have at least {min_count} exceedances",
            points.len()
        )));
    }
    let k = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / k;
    let my = points.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(TailFit {
        slope: sxy / sxx,
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::aux_rng;
    use crate::simulator::queue_from_rewards;
    use proptest::prelude::*;
    use rand::Rng;

    fn theta(t: f64) -> EbParams {
        EbParams::from_theta(t).unwrap()
    }

    #[test]
    fn constant_rewards_give_their_rate() {
        let ones = vec![1u32; 50_000];
        for t in [-0.01, -0.08, -3.0] {
            let e = estimate_eb(&[&ones[..]], &theta(t), &Default::default()).unwrap();
            assert!((e.estimate.value - 1.0).abs() < 1e-12);
        }
        let zeros = vec![0u32; 50_000];
        let e = estimate_eb(&[&zeros[..]], &theta(-0.08), &Default::default()).unwrap();
        assert_eq!(e.estimate.value, 0.0);
    }

    #[test]
    fn bernoulli_matches_log_mgf() {
        let p = 0.3;
        let t = -0.08;
        let mut rng = aux_rng(11);
        let segs: Vec<Vec<u32>> = (0..20)
            .map(|_| {
                (0..100_000)
                    .map(|_| u32::from(rng.random_bool(p)))
                    .collect()
            })
            .collect();
        let oracle = (1.0 - p + p * f64::exp(t)).ln() / t;
        let e = estimate_eb(&segs, &theta(t), &Default::default()).unwrap();
        assert!(
            (e.estimate.value - oracle).abs() / oracle < 0.01,
            "{e:?} vs {oracle}"
        );
        assert!(e.estimate.ci_lo < e.estimate.ci_hi);
        let th = estimate_throughput(&segs, 20, 0.95).unwrap();
        assert!(e.estimate.value < th.value);
        assert!(th.contains(p) || (th.value - p).abs() < 3.0 * th.half_width());
    }

    #[test]
    fn two_scale_removes_boundary_bias() {
        // Sticky on/off chain emitting its state; the tilted 2x2 matrix gives
        // the log-MGF rate. Short blocks leave a large boundary term.
        let (stay0, stay1, t): (f64, f64, f64) = (0.9, 0.95, -0.5);
        let mut rng = aux_rng(5);
        let mut on = false;
        let segs: Vec<Vec<u32>> = (0..8)
            .map(|_| {
                (0..1_000_000)
                    .map(|_| {
                        on = rng.random_bool(if on { stay1 } else { 1.0 - stay0 });
                        u32::from(on)
                    })
                    .collect()
            })
            .collect();
        let e = t.exp();
        let (a, b, c, d) = (stay0, (1.0 - stay0) * e, 1.0 - stay1, stay1 * e);
        let rho = 0.5 * (a + d + ((a - d).powi(2) + 4.0 * b * c).sqrt());
        let oracle = rho.ln() / t;
        let opts = |method| EbEstimatorOptions {
            method,
            block: BlockLength::Fixed(25),
            resamples: 300,
            ..Default::default()
        };
        let plain = estimate_eb(&segs, &theta(t), &opts(EbMethod::Block)).unwrap();
        let two = estimate_eb(&segs, &theta(t), &opts(EbMethod::TwoScale)).unwrap();
        let (ep, et) = (
            (plain.estimate.value - oracle).abs(),
            (two.estimate.value - oracle).abs(),
        );
        assert!(et < ep / 4.0, "plain {ep:e}, two-scale {et:e}");
        assert!(two.estimate.contains(oracle), "{two:?} vs {oracle}");
        assert!(!plain.estimate.contains(oracle), "{plain:?} vs {oracle}");
    }

    #[test]
    fn auto_block_shrinks_with_spread() {
        let mut rng = aux_rng(3);
        let seg: Vec<u32> = (0..1_000_000)
            .map(|_| u32::from(rng.random_bool(0.5)))
            .collect();
        let mild = estimate_eb(&[&seg[..]], &theta(-0.01), &Default::default()).unwrap();
        let harsh = estimate_eb(&[&seg[..]], &theta(-0.5), &Default::default()).unwrap();
        assert!(harsh.block_len < mild.block_len);
        let fixed = EbEstimatorOptions {
            block: BlockLength::Fixed(1000),
            ..Default::default()
        };
        assert_eq!(
            estimate_eb(&[&seg[..]], &theta(-0.5), &fixed)
                .unwrap()
                .block_len,
            1000
        );
    }

    #[test]
    fn estimator_rejects_bad_input() {
        let short = [1u32; 10];
        assert!(estimate_eb(&[&short[..]], &theta(-0.1), &Default::default()).is_err());
        assert!(estimate_throughput::<Vec<u32>>(&[], 20, 0.95).is_err());
        assert!(batch_means(&[1.0, 2.0], 5).is_err());
    }

    #[test]
    fn all_success_throughput_is_c() {
        let full = vec![2u32; 1000];
        let th = estimate_throughput(&[&full[..]], 10, 0.95).unwrap();
        assert_eq!((th.value, th.ci_lo, th.ci_hi), (2.0, 2.0, 2.0));
    }

    #[test]
    fn geometric_queue_tail_slope() {
        // Random walk +1 w.p. 0.4, -1 w.p. 0.6 reflected at 0: P(Q > x) ~ (2/3)^x.
        let mut rng = aux_rng(5);
        let rewards: Vec<u32> = (0..2_000_000)
            .map(|_| if rng.random_bool(0.6) { 2 } else { 0 })
            .collect();
        let q = queue_from_rewards(rewards, 1.0).unwrap();
        let xs: Vec<f64> = (2..=20).map(f64::from).collect();
        let fit = tail_slope(&q, &xs, 1000, 10).unwrap();
        assert!(
            (fit.slope - (2.0f64 / 3.0).ln()).abs() < 0.03,
            "{}",
            fit.slope
        );
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn eb_never_exceeds_mean(p in 0.05f64..0.95, t in -2.0f64..-0.005, seed in any::<u64>()) {
            let mut rng = aux_rng(seed);
            let seg: Vec<u32> = (0..40_000).map(|_| u32::from(rng.random_bool(p))).collect();
            let opts = EbEstimatorOptions {
                method: EbMethod::Block,
                block: BlockLength::Fixed(400),
                resamples: 0,
                ..Default::default()
            };
            let eb = estimate_eb(&[&seg[..]], &theta(t), &opts).unwrap().estimate.value;
            let mean = seg.iter().map(|&r| f64::from(r)).sum::<f64>() / seg.len() as f64;
            // Jensen holds exactly for the plug-in estimator on whole blocks.
            prop_assert!(eb <= mean + 1e-12);
        }
    }
}
