//! Brute force over every deterministic history-dependent sensing policy.
//!
//! Works on the hidden occupancy distribution over `2^N` states rather than
//! on beliefs, so it shares no code with the recursion it validates.

use crate::channel::{BeliefVector, SampledChannel};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Largest number of policies enumerated.
    pub max_policies: u64,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions {
            max_policies: 20_000_000,
        }
    }
}

/// One-slot transition of the joint hidden law (bit `j` set = channel `j` busy).
fn transition(dist: &[f64], sc: &SampledChannel, n: usize) -> Vec<f64> {
    let m = sc.matrix();
    let mut x = dist.to_vec();
    for j in 0..n {
        let bit = 1usize << j;
        for s in 0..x.len() {
            if s & bit == 0 {
                let (x0, x1) = (x[s], x[s | bit]);
                x[s] = x0 * m[0][0] + x1 * m[1][0];
                x[s | bit] = x0 * m[0][1] + x1 * m[1][1];
            }
        }
    }
    x
}

/// `table[actions][obs]` holds `P(obs | actions) exp(theta #idle)`, with the
/// action sequence in base `N` (first action most significant) and bit `d`
/// of `obs` set when the `d`-th sensing was busy.
fn path_table(start: &BeliefVector, k: usize, theta: f64, sc: &SampledChannel) -> Vec<Vec<f64>> {
    let n = start.len();
    let mut init = vec![1.0; 1 << n];
    for (s, p) in init.iter_mut().enumerate() {
        for j in 0..n {
            *p *= if s >> j & 1 == 1 {
                1.0 - start.0[j]
            } else {
                start.0[j]
            };
        }
    }
    let mut table = vec![vec![0.0; 1 << k]; n.pow(k as u32)];
    #[allow(clippy::too_many_arguments)]
    fn go(
        d: usize,
        dist: &[f64],
        actions: usize,
        obs: usize,
        weight: f64,
        ctx: (usize, usize, f64, &SampledChannel),
        table: &mut [Vec<f64>],
    ) {
        let (n, k, e_theta, sc) = ctx;
        if d == k {
            table[actions][obs] = weight * dist.iter().sum::<f64>();
            return;
        }
        for a in 0..n {
            for busy in [false, true] {
                let cut: Vec<f64> = dist
                    .iter()
                    .enumerate()
                    .map(|(s, &p)| if (s >> a & 1 == 1) == busy { p } else { 0.0 })
                    .collect();
                let w = if busy { weight } else { weight * e_theta };
                let next = transition(&cut, sc, n);
                go(
                    d + 1,
                    &next,
                    actions * n + a,
                    obs | (usize::from(busy) << d),
                    w,
                    ctx,
                    table,
                );
            }
        }
    }
    go(0, &init, 0, 0, 1.0, (n, k, theta.exp(), sc), &mut table);
    table
}

/// Smallest `E exp(theta * idle sensings)` over all deterministic policies
/// that map each observation history to a channel.
pub fn exhaustive_policy_oracle(
    start: &BeliefVector,
    k: usize,
    theta: f64,
    sc: &SampledChannel,
    opts: &OracleOptions,
) -> Result<f64> {
    if !(theta < 0.0 && theta.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "theta must be finite and negative, got {theta}"
        )));
    }
    let n = start.len();
    if n == 0 || k == 0 {
        return Err(Error::InvalidArgument(
            "need at least one channel and one slot".into(),
        ));
    }
    let nodes = (1usize << k) - 1;
    let count = (n as f64).powi(nodes as i32);
    if k > 16 || count > opts.max_policies as f64 {
        return Err(Error::Budget(format!(
            "{n}^{nodes} policies exceeds the cap of {}",
            opts.max_policies
        )));
    }
    let table = path_table(start, k, theta, sc);
    // Node for the history of the first d observations h: (2^d - 1) + h.
    let mut policy = vec![0usize; nodes];
    let mut best = f64::INFINITY;
    loop {
        let mut v = 0.0;
        for obs in 0..1usize << k {
            let mut actions = 0;
            for d in 0..k {
                actions = actions * n + policy[(1 << d) - 1 + (obs & ((1 << d) - 1))];
            }
            v += table[actions][obs];
        }
        best = best.min(v);
        // Odometer step.
        let mut i = 0;
        while i < nodes {
            policy[i] += 1;
            if policy[i] < n {
                break;
            }
            policy[i] = 0;
            i += 1;
        }
        if i == nodes {
            break;
        }
    }
    Ok(best)
}
