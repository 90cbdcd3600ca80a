//! Debt/balance interval structure of adaptive-transmission traces.
//!
//! Slot `t` is a debt slot iff `A_t < tau * t`, otherwise a balance slot.
//! Maximal runs alternate `B_1, I_1, B_2, I_2, ...` starting with a debt run,
//! since `A_1 = 0 < tau`. `A_0 = 0` by convention.

use super::trace::Trace;
use crate::error::{Error, Result};
use crate::policy::{DebtTarget, TransmissionPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalKind {
    /// `B_k`: in debt, transmitting on idle sensing.
    Debt,
    /// `I_k`: in balance, silent.
    Balance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub kind: IntervalKind,
    /// First slot (`b_k` or `i_k`).
    pub start: u64,
    pub len: u64,
}

#[derive(Debug, Clone)]
pub struct IntervalDecomposition {
    pub tau: f64,
    pub c: f64,
    pub intervals: Vec<Interval>,
    /// Per-slot `A_t` with `a[0] = A_0 = 0`, kept for the lemma checks.
    debt: Vec<u64>,
    /// Slots whose transmit decision disagrees with the debt membership.
    pub transmit_mismatches: u64,
}

/// Violation counts for the interval lemmas. All zero for a genuine
/// adaptive-transmission trace.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LemmaReport {
    pub intervals_checked: usize,
    /// `A_{i_k} >= i_k tau`.
    pub balance_start: u64,
    /// `A_{b_k} < b_k tau`.
    pub debt_start: u64,
    /// `A_{i_k - 1} < (i_k - 1) tau`.
    pub before_balance: u64,
    /// `A_{b_k - 1} >= (b_k - 1) tau`.
    pub before_debt: u64,
    /// `|I_k| < c / tau`.
    pub balance_length: u64,
    /// `A_{b_k} >= tau b_k - tau`.
    pub debt_band: u64,
    /// `A_{i_k} < tau (i_k - 1) + c`.
    pub balance_band: u64,
    /// `A_{t+1} < tau t + c` for every slot.
    pub running_bound: u64,
    /// Decisions inconsistent with `A_t < tau t`.
    pub transmit_mismatch: u64,
}

impl LemmaReport {
    pub fn total(&self) -> u64 {
        self.balance_start
            + self.debt_start
            + self.before_balance
            + self.before_debt
            + self.balance_length
            + self.debt_band
            + self.balance_band
            + self.running_bound
            + self.transmit_mismatch
    }

    pub fn is_clean(&self) -> bool {
        self.total() == 0
    }
}

/// Splits an adaptive-transmission trace (finite `tau > 0`) into its
/// debt and balance intervals.
pub fn decompose_intervals(trace: &Trace) -> Result<IntervalDecomposition> {
    let tau = match trace.policy.transmission {
        TransmissionPolicy::Adaptive(p) => match p.target {
            DebtTarget::Finite(t) if t > 0.0 => t,
            _ => {
                return Err(Error::InconsistentTrace(
                    "interval decomposition needs a finite, positive tau".into(),
                ))
            }
        },
        TransmissionPolicy::Memoryless(_) => {
            return Err(Error::InconsistentTrace(
                "interval decomposition needs an adaptive-transmission trace".into(),
            ))
        }
    };
    if trace.is_empty() {
        return Err(Error::InconsistentTrace("empty trace".into()));
    }

    let mut debt = Vec::with_capacity(trace.len() + 1);
    debt.push(0);
    let mut intervals: Vec<Interval> = Vec::new();
    let mut mismatches = 0;
    for r in &trace.records {
        debt.push(r.debt_a);
        let in_debt = (r.debt_a as f64) < tau * r.t as f64;
        if r.transmitted != (in_debt && !r.sensed_busy) {
            mismatches += 1;
        }
        let kind = if in_debt {
            IntervalKind::Debt
        } else {
            IntervalKind::Balance
        };
        match intervals.last_mut() {
            Some(last) if last.kind == kind => last.len += 1,
            _ => intervals.push(Interval {
                kind,
                start: r.t,
                len: 1,
            }),
        }
    }
    Ok(IntervalDecomposition {
        tau,
        c: trace.params.c(),
        intervals,
        debt,
        transmit_mismatches: mismatches,
    })
}

impl IntervalDecomposition {
    fn a(&self, t: u64) -> f64 {
        self.debt[t as usize] as f64
    }

    pub fn horizon(&self) -> u64 {
        self.debt.len() as u64 - 1
    }

    fn complete(&self, kind: IntervalKind) -> impl Iterator<Item = &Interval> {
        let end = self.horizon() + 1;
        self.intervals
            .iter()
            .filter(move |iv| iv.kind == kind && iv.start + iv.len < end)
    }

    /// Mean length of the debt intervals that ended before the horizon.
    pub fn mean_debt_length(&self) -> Option<f64> {
        let (n, sum) = self
            .complete(IntervalKind::Debt)
            .fold((0u64, 0u64), |(n, s), iv| (n + 1, s + iv.len));
        (n > 0).then(|| sum as f64 / n as f64)
    }

    pub fn max_balance_length(&self) -> u64 {
        self.intervals
            .iter()
            .filter(|iv| iv.kind == IntervalKind::Balance)
            .map(|iv| iv.len)
            .max()
            .unwrap_or(0)
    }

    pub fn count(&self, kind: IntervalKind) -> usize {
        self.intervals.iter().filter(|iv| iv.kind == kind).count()
    }

    /// Counts violations of the interval inequalities and the debt bounds.
    pub fn check_lemmas(&self) -> LemmaReport {
        let tau = self.tau;
        let c = self.c;
        let mut rep = LemmaReport {
            intervals_checked: self.intervals.len(),
            transmit_mismatch: self.transmit_mismatches,
            ..Default::default()
        };
        if self.intervals.first().map(|iv| iv.kind) != Some(IntervalKind::Debt) {
            rep.debt_start += 1;
        }
        for iv in &self.intervals {
            let s = iv.start;
            let prev = (s - 1) as f64;
            match iv.kind {
                IntervalKind::Debt => {
                    if !(self.a(s) < s as f64 * tau) {
                        rep.debt_start += 1;
                    }
                    if !(self.a(s - 1) >= prev * tau) {
                        rep.before_debt += 1;
                    }
                    if !(self.a(s) >= tau * prev) {
                        rep.debt_band += 1;
                    }
                }
                IntervalKind::Balance => {
                    if !(self.a(s) >= s as f64 * tau) {
                        rep.balance_start += 1;
                    }
                    if !(self.a(s - 1) < prev * tau) {
                        rep.before_balance += 1;
                    }
                    if !(self.a(s) < tau * prev + c) {
                        rep.balance_band += 1;
                    }
                    if !((iv.len as f64) < c / tau) {
                        rep.balance_length += 1;
                    }
                }
            }
        }
        // A_{t+1} for t = 1..n-1 is stored; the final slot's is not.
        for t in 1..self.horizon() {
            if !(self.a(t + 1) < tau * t as f64 + c) {
                rep.running_bound += 1;
            }
        }
        rep
    }
}
