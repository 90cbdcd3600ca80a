use super::trace::Trace;
use crate::error::{Error, Result};

/// Queue lengths under a constant arrival stream; `q[0] = Q_0 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct QueueTrace {
    pub arrival_rate: f64,
    pub q: Vec<f64>,
}

impl QueueTrace {
    /// Fraction of slots `t > skip` with `Q_t > x`.
    pub fn exceedance(&self, x: f64, skip: usize) -> f64 {
        let tail = &self.q[(skip + 1).min(self.q.len())..];
        if tail.is_empty() {
            return 0.0;
        }
        tail.iter().filter(|&&v| v > x).count() as f64 / tail.len() as f64
    }
}

/// `Q_t = max(Q_{t-1} + a - R_t, 0)` over an arbitrary reward sequence.
pub fn queue_from_rewards<I: IntoIterator<Item = u32>>(
    rewards: I,
    arrival_rate: f64,
) -> Result<QueueTrace> {
    if !(arrival_rate >= 0.0 && arrival_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "arrival rate must be finite and >= 0, got {arrival_rate}"
        )));
    }
    let iter = rewards.into_iter();
    let mut q = Vec::with_capacity(iter.size_hint().0 + 1);
    q.push(0.0);
    let mut cur = 0.0f64;
    for r in iter {
        cur = (cur + arrival_rate - f64::from(r)).max(0.0);
        q.push(cur);
    }
    Ok(QueueTrace { arrival_rate, q })
}

pub fn queue_sim(trace: &Trace, arrival_rate: f64) -> Result<QueueTrace> {
    queue_from_rewards(trace.records.iter().map(|r| r.success_bits), arrival_rate)
}
