//! Finite-horizon multiplicative dynamic program over channel beliefs.
//!
//! `V_t(w) = min_a { w_a e^theta V_{t+1}(T(w, a | idle)) + (1 - w_a) V_{t+1}(T(w, a | busy)) }`
//! for `t = 1..=K` with `V_{K+1} = 1`: the smallest achievable
//! `E exp(theta * idle sensings)` over `K` slots. For `theta < 0` a smaller
//! value is a better sensing policy.

mod oracle;

pub use oracle::{exhaustive_policy_oracle, OracleOptions};

use std::collections::HashMap;

use serde::Serialize;

use crate::channel::{observe, BeliefVector, SampledChannel};
use crate::error::{Error, Result};

/// Absolute slack under which two action values count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct DpOptions {
    pub max_channels: usize,
    pub max_horizon: usize,
    /// Largest number of memoised `(t, belief)` entries.
    pub memo_budget: usize,
}

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions {
            max_channels: 4,
            max_horizon: 10,
            memo_budget: 5_000_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DpEntry {
    pub t: usize,
    pub belief: BeliefVector,
    pub value: f64,
    /// Value of sensing each channel first and acting optimally after.
    pub action_values: Vec<f64>,
    pub optimal: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct DpSolution {
    pub horizon: usize,
    pub theta: f64,
    pub start: BeliefVector,
    table: HashMap<(usize, Vec<u64>), DpEntry>,
}

impl DpSolution {
    /// `V_1` at the start belief.
    pub fn value(&self) -> f64 {
        self.get(1, &self.start).map(|e| e.value).unwrap_or(1.0)
    }

    pub fn get(&self, t: usize, belief: &BeliefVector) -> Option<&DpEntry> {
        self.table.get(&(t, belief.key()))
    }

    pub fn entries(&self) -> impl Iterator<Item = &DpEntry> {
        self.table.values()
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

fn check_inputs(start: &BeliefVector, k: usize, theta: f64, opts: &DpOptions) -> Result<()> {
    if !(theta < 0.0 && theta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "theta must be finite and negative, got {theta}"
        )));
    }
    if k == 0 || k > opts.max_horizon {
        return Err(Error::Budget(format!(
            "horizon {k} outside 1..={}",
            opts.max_horizon
        )));
    }
    if start.is_empty() || start.len() > opts.max_channels {
        return Err(Error::Budget(format!(
            "{} channels outside 1..={}",
            start.len(),
            opts.max_channels
        )));
    }
    Ok(())
}

struct Solver<'a> {
    k: usize,
    e_theta: f64,
    sc: &'a SampledChannel,
    budget: usize,
    table: HashMap<(usize, Vec<u64>), DpEntry>,
}

impl Solver<'_> {
    fn value(&mut self, t: usize, w: &BeliefVector) -> Result<f64> {
        if t > self.k {
            return Ok(1.0);
        }
        let key = (t, w.key());
        if let Some(e) = self.table.get(&key) {
            return Ok(e.value);
        }
        let mut action_values = Vec::with_capacity(w.len());
        for a in 0..w.len() {
            let idle = self.value(t + 1, &observe(w, a, false, self.sc))?;
            let busy = self.value(t + 1, &observe(w, a, true, self.sc))?;
            action_values.push(w.0[a] * self.e_theta * idle + (1.0 - w.0[a]) * busy);
        }
        let value = action_values.iter().cloned().fold(f64::INFINITY, f64::min);
        let optimal = (0..w.len())
            .filter(|&a| action_values[a] - value <= TIE_TOLERANCE)
            .collect();
        if self.table.len() >= self.budget {
            return Err(Error::Budget(format!(
                "more than {} reachable beliefs",
                self.budget
            )));
        }
        self.table.insert(
            key,
            DpEntry {
                t,
                belief: w.clone(),
                value,
                action_values,
                optimal,
            },
        );
        Ok(value)
    }
}

/// Exact backward recursion over every belief reachable from `start` within
/// `k` slots.
pub fn solve_dp(
    start: &BeliefVector,
    k: usize,
    theta: f64,
    sc: &SampledChannel,
    opts: &DpOptions,
) -> Result<DpSolution> {
    check_inputs(start, k, theta, opts)?;
    let mut solver = Solver {
        k,
        e_theta: theta.exp(),
        sc,
        budget: opts.memo_budget,
        table: HashMap::new(),
    };
    solver.value(1, start)?;
    Ok(DpSolution {
        horizon: k,
        theta,
        start: start.clone(),
        table: solver.table,
    })
}

/// Value of sensing `argmax w` (lowest index on ties) at every slot.
pub fn myopic_value(start: &BeliefVector, k: usize, theta: f64, sc: &SampledChannel) -> f64 {
    fn go(t: usize, k: usize, w: &BeliefVector, e: f64, sc: &SampledChannel) -> f64 {
        if t > k {
            return 1.0;
        }
        let a = w.argmax();
        let idle = go(t + 1, k, &observe(w, a, false, sc), e, sc);
        let busy = go(t + 1, k, &observe(w, a, true, sc), e, sc);
        w.0[a] * e * idle + (1.0 - w.0[a]) * busy
    }
    go(1, k, start, theta.exp(), sc)
}

#[derive(Debug, Clone, Serialize)]
pub struct MyopicViolation {
    pub t: usize,
    pub belief: Vec<f64>,
    pub myopic_action: usize,
    pub optimal: Vec<usize>,
    /// Excess of the myopic action's value over the optimum.
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MyopicReport {
    pub n_channels: usize,
    pub horizon: usize,
    pub theta: f64,
    pub dp_value: f64,
    pub myopic_value: f64,
    /// Largest excess of the myopic action's value over the optimum across
    /// all reachable `(t, w)`.
    pub max_gap: f64,
    pub states_checked: usize,
    pub violations: Vec<MyopicViolation>,
}

impl MyopicReport {
    pub fn passed(&self, tol: f64) -> bool {
        self.violations.is_empty() && (self.dp_value - self.myopic_value).abs() <= tol
    }

    pub fn first_violation(&self) -> Option<&MyopicViolation> {
        self.violations.iter().min_by_key(|v| v.t)
    }
}

/// Solves the program and checks that sensing the largest belief is optimal
/// at every reachable belief.
pub fn verify_myopic(
    start: &BeliefVector,
    k: usize,
    theta: f64,
    sc: &SampledChannel,
    opts: &DpOptions,
) -> Result<MyopicReport> {
    let dp = solve_dp(start, k, theta, sc, opts)?;
    let mut violations = Vec::new();
    let mut max_gap = 0.0f64;
    for e in dp.entries() {
        let a = e.belief.argmax();
        let gap = e.action_values[a] - e.value;
        max_gap = max_gap.max(gap);
        if !e.optimal.contains(&a) {
            violations.push(MyopicViolation {
                t: e.t,
                belief: e.belief.0.clone(),
                myopic_action: a,
                optimal: e.optimal.clone(),
                gap,
            });
        }
    }
    violations.sort_by(|x, y| x.t.cmp(&y.t).then(y.gap.total_cmp(&x.gap)));
    Ok(MyopicReport {
        n_channels: start.len(),
        horizon: k,
        theta,
        dp_value: dp.value(),
        myopic_value: myopic_value(start, k, theta, sc),
        max_gap,
        states_checked: dp.len(),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{derive_sampled, ChannelParams};
    use crate::rng::aux_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn reference_sc() -> SampledChannel {
        derive_sampled(&ChannelParams::REFERENCE).unwrap()
    }

    fn belief(v: &[f64]) -> BeliefVector {
        BeliefVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn single_slot_closed_form() {
        let sc = reference_sc();
        let w = belief(&[0.3, 0.8, 0.5]);
        let th = -0.4;
        let dp = solve_dp(&w, 1, th, &sc, &Default::default()).unwrap();
        let closed =
            w.0.iter()
                .map(|&x| x * th.exp() + 1.0 - x)
                .fold(f64::INFINITY, f64::min);
        assert!((dp.value() - closed).abs() < 1e-15);
        assert_eq!(dp.get(1, &w).unwrap().optimal, vec![1]);
    }

    #[test]
    fn equal_beliefs_make_every_action_optimal() {
        let sc = reference_sc();
        let w = BeliefVector::stationary(3, &sc);
        let dp = solve_dp(&w, 4, -0.08, &sc, &Default::default()).unwrap();
        assert_eq!(dp.get(1, &w).unwrap().optimal, vec![0, 1, 2]);
    }

    #[test]
    fn single_channel_is_trivially_myopic() {
        let sc = reference_sc();
        let rep = verify_myopic(&belief(&[0.4]), 6, -0.5, &sc, &Default::default()).unwrap();
        assert!(rep.passed(1e-12));
    }

    #[test]
    fn myopic_is_optimal_on_reference_grid() {
        let sc = reference_sc();
        for k in 2..=8 {
            for th in [-0.01, -0.08, -0.5, -2.0] {
                let rep = verify_myopic(
                    &BeliefVector::stationary(2, &sc),
                    k,
                    th,
                    &sc,
                    &Default::default(),
                )
                .unwrap();
                assert!(rep.passed(1e-12), "{rep:?}");
            }
        }
    }

    #[test]
    fn myopic_is_optimal_from_random_three_channel_starts() {
        let sc = reference_sc();
        let mut rng = aux_rng(17);
        for _ in 0..100 {
            let w = belief(
                &(0..3)
                    .map(|_| rng.random_range(sc.p_bi..=sc.p_ii))
                    .collect::<Vec<_>>(),
            );
            let rep = verify_myopic(&w, 5, -0.08, &sc, &Default::default()).unwrap();
            assert!(rep.passed(1e-12), "{w:?}: {:?}", rep.first_violation());
        }
    }

    #[test]
    fn values_lie_between_extremes() {
        let sc = reference_sc();
        let th = -0.5;
        let k = 5;
        let dp = solve_dp(&belief(&[0.2, 0.9]), k, th, &sc, &Default::default()).unwrap();
        for e in dp.entries() {
            let floor = (th * (k - e.t + 1) as f64).exp();
            assert!(e.value > floor && e.value <= 1.0);
        }
    }

    #[test]
    fn permuting_channels_permutes_optimal_actions() {
        let sc = reference_sc();
        let w = belief(&[0.3, 0.7, 0.55]);
        let perm = [2usize, 0, 1];
        let wp = belief(&perm.iter().map(|&j| w.0[j]).collect::<Vec<_>>());
        let a = solve_dp(&w, 4, -0.2, &sc, &Default::default()).unwrap();
        let b = solve_dp(&wp, 4, -0.2, &sc, &Default::default()).unwrap();
        assert!((a.value() - b.value()).abs() < 1e-15);
        let opt_a = &a.get(1, &w).unwrap().optimal;
        let mut mapped: Vec<usize> = b
            .get(1, &wp)
            .unwrap()
            .optimal
            .iter()
            .map(|&i| perm[i])
            .collect();
        mapped.sort();
        assert_eq!(opt_a, &mapped);
    }

    // Standard additive DP for the expected number of idle sensings.
    fn additive_best(t: usize, k: usize, w: &BeliefVector, sc: &SampledChannel) -> f64 {
        if t > k {
            return 0.0;
        }
        (0..w.len())
            .map(|a| {
                w.0[a] * (1.0 + additive_best(t + 1, k, &observe(w, a, false, sc), sc))
                    + (1.0 - w.0[a]) * additive_best(t + 1, k, &observe(w, a, true, sc), sc)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn small_theta_matches_risk_neutral_program() {
        let sc = reference_sc();
        let w = belief(&[0.35, 0.75, 0.5]);
        let th = -1e-6;
        let v = solve_dp(&w, 5, th, &sc, &Default::default())
            .unwrap()
            .value();
        let additive = additive_best(1, 5, &w, &sc);
        // Second-order remainder is at most theta^2 K^2 / 2.
        assert!((v - (1.0 + th * additive)).abs() < 2e-11, "{v} {additive}");
    }

    #[test]
    fn budgets_are_enforced() {
        let sc = reference_sc();
        let w = BeliefVector::stationary(2, &sc);
        let tiny = DpOptions {
            memo_budget: 3,
            ..Default::default()
        };
        assert!(matches!(
            solve_dp(&w, 5, -0.1, &sc, &tiny),
            Err(Error::Budget(_))
        ));
        assert!(solve_dp(&w, 11, -0.1, &sc, &Default::default()).is_err());
        assert!(solve_dp(
            &BeliefVector::stationary(5, &sc),
            2,
            -0.1,
            &sc,
            &Default::default()
        )
        .is_err());
        assert!(solve_dp(&w, 2, 0.0, &sc, &Default::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn value_is_nonincreasing_in_each_belief(
            a in 0.0f64..=1.0, b in 0.0f64..=1.0, bump in 0.0f64..=1.0,
            th in -3.0f64..-0.001, k in 1usize..6, which in 0usize..2
        ) {
            let sc = reference_sc();
            let mut hi = vec![a, b];
            hi[which] = (hi[which] + bump * (1.0 - hi[which])).min(1.0);
            let lo = solve_dp(&belief(&[a, b]), k, th, &sc, &Default::default()).unwrap().value();
            let up = solve_dp(&belief(&hi), k, th, &sc, &Default::default()).unwrap().value();
            prop_assert!(up <= lo + 1e-14);
        }
    }
}
