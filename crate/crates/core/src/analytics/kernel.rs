//! Joint chain of (channel occupancy vector, myopic sensing pointer) under
//! always-transmit-on-idle, and its exponentially tilted variants.
//!
//! State `(s, i)` is stored at index `s * N + i`, where bit `j` of `s` is set
//! when channel `j` is busy. From `(s, i)` the pointer moves to `i` if channel
//! `i` is idle and to `i + 1 (mod N)` otherwise, and every channel makes an
//! independent slot-sampled transition. A tilt rescales the transition row of
//! the sensed channel when that channel is idle at the slot start; all other
//! factors stay stochastic. The matrix is never formed: a product costs
//! `O(N^2 2^N)`.

use crate::channel::{derive_sampled, ChannelParams, SampledChannel};
use crate::error::{Error, Result};

/// Largest channel count the joint-chain routines accept by default.
pub const DEFAULT_MAX_CHANNELS: usize = 12;

#[derive(Debug, Clone, Copy)]
pub struct SpectralOptions {
    /// Stop when the Collatz-Wielandt bracket on the Perron root is this
    /// narrow relative to the root.
    pub rel_tol: f64,
    pub max_iter: usize,
    pub max_channels: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions {
            rel_tol: 1e-13,
            max_iter: 1_000_000,
            max_channels: DEFAULT_MAX_CHANNELS,
        }
    }
}

/// Loosest bracket accepted when rounding stalls the iteration.
const FALLBACK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct TiltedKernel {
    n: usize,
    sampled: SampledChannel,
    /// Destination weights `[idle, busy]` of the sensed channel when it was
    /// idle at the slot start.
    sensed_idle_row: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct PerronRoot {
    pub rho: f64,
    /// Left eigenvector normalised to unit sum.
    pub left: Vec<f64>,
    pub iterations: usize,
    /// Final relative width of the Collatz-Wielandt bracket.
    pub bracket: f64,
}

impl PerronRoot {
    pub fn log_rho(&self) -> f64 {
        self.rho.ln()
    }
}

impl TiltedKernel {
    fn build(
        params: &ChannelParams,
        max_channels: usize,
        row: impl FnOnce(&SampledChannel) -> [f64; 2],
    ) -> Result<Self> {
        let sampled = derive_sampled(params)?;
        if params.n_channels > max_channels {
            return Err(Error::Budget(format!(
                "joint chain has 2^{n} * {n} states; the cap is {max_channels} channels",
                n = params.n_channels
            )));
        }
        Ok(TiltedKernel {
            n: params.n_channels,
            sensed_idle_row: row(&sampled),
            sampled,
        })
    }

    /// Transition kernel of the untilted joint chain.
    pub fn untilted(params: &ChannelParams, max_channels: usize) -> Result<Self> {
        Self::build(params, max_channels, |sc| [sc.p_ii, 1.0 - sc.p_ii])
    }

    /// Rows out of idle-sensed states weighted by `exp(theta_tilde)`: the
    /// generating kernel of the idle-sensing count.
    pub fn idle_sensing(
        params: &ChannelParams,
        theta_tilde: f64,
        max_channels: usize,
    ) -> Result<Self> {
        let w = theta_tilde.exp();
        Self::build(params, max_channels, |sc| {
            [w * sc.p_ii, w * (1.0 - sc.p_ii)]
        })
    }

    /// Generating kernel of the success count itself. A success means the
    /// sensed channel stayed idle all slot, which forces it to end idle, so
    /// only the idle-to-idle weight is tilted:
    /// `[p_ii - q (1 - exp(c theta)), 1 - p_ii]`.
    pub fn success(params: &ChannelParams, theta: f64, max_channels: usize) -> Result<Self> {
        let q = params.p_stay_idle_slot();
        let shrink = q * (params.c() * theta).exp_m1();
        Self::build(params, max_channels, |sc| [sc.p_ii + shrink, 1.0 - sc.p_ii])
    }

    pub fn n_channels(&self) -> usize {
        self.n
    }

    pub fn n_states(&self) -> usize {
        (1usize << self.n) * self.n
    }

    pub fn sampled(&self) -> &SampledChannel {
        &self.sampled
    }

    pub fn index(&self, busy_mask: usize, pointer: usize) -> usize {
        busy_mask * self.n + pointer
    }

    fn next_pointer(&self, busy_mask: usize, pointer: usize) -> usize {
        if busy_mask >> pointer & 1 == 1 {
            (pointer + 1) % self.n
        } else {
            pointer
        }
    }

    /// Single matrix entry `A[(s, i), (s', i')]`.
    pub fn entry(&self, from: (usize, usize), to: (usize, usize)) -> f64 {
        let (s, i) = from;
        let (s2, i2) = to;
        if self.next_pointer(s, i) != i2 {
            return 0.0;
        }
        let m = self.sampled.matrix();
        let sensed_idle = s >> i & 1 == 0;
        (0..self.n)
            .map(|j| {
                let a = s >> j & 1;
                let b = s2 >> j & 1;
                if j == i && sensed_idle {
                    self.sensed_idle_row[b]
                } else {
                    m[a][b]
                }
            })
            .product()
    }

    /// Applies the per-channel 2x2 factors to a vector over occupancy masks.
    /// `special` swaps in the sensed-idle row for that channel; every mask in
    /// `x` has that channel idle.
    fn kron_apply(&self, x: &mut [f64], special: Option<usize>) {
        let m = self.sampled.matrix();
        for j in 0..self.n {
            let (r0, r1) = if special == Some(j) {
                (self.sensed_idle_row, m[1])
            } else {
                (m[0], m[1])
            };
            let bit = 1usize << j;
            for s in 0..x.len() {
                if s & bit == 0 {
                    let x0 = x[s];
                    let x1 = x[s | bit];
                    x[s] = x0 * r0[0] + x1 * r1[0];
                    x[s | bit] = x0 * r0[1] + x1 * r1[1];
                }
            }
        }
    }

    /// `out = v A` for a row vector `v`.
    pub fn left_apply(&self, v: &[f64], out: &mut [f64]) {
        let n = self.n;
        let masks = 1usize << n;
        debug_assert_eq!(v.len(), self.n_states());
        let mut plain = vec![vec![0.0; masks]; n];
        let mut sensed = vec![vec![0.0; masks]; n];
        for s in 0..masks {
            for i in 0..n {
                let w = v[s * n + i];
                if w == 0.0 {
                    continue;
                }
                if s >> i & 1 == 0 {
                    sensed[i][s] += w;
                } else {
                    plain[(i + 1) % n][s] += w;
                }
            }
        }
        for i in 0..n {
            self.kron_apply(&mut plain[i], None);
            self.kron_apply(&mut sensed[i], Some(i));
            for s in 0..masks {
                out[s * n + i] = plain[i][s] + sensed[i][s];
            }
        }
    }

    /// Dense copy of the matrix, for small cross-checks.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let masks = 1usize << self.n;
        let mut a = vec![vec![0.0; self.n_states()]; self.n_states()];
        for s in 0..masks {
            for i in 0..self.n {
                for s2 in 0..masks {
                    for i2 in 0..self.n {
                        a[self.index(s, i)][self.index(s2, i2)] = self.entry((s, i), (s2, i2));
                    }
                }
            }
        }
        a
    }

    /// Perron root by left power iteration with Collatz-Wielandt bounds:
    /// for positive `v`, `min_j (vA)_j / v_j <= rho <= max_j (vA)_j / v_j`.
    pub fn perron_root(&self, opts: &SpectralOptions) -> Result<PerronRoot> {
        let n = self.n_states();
        let mut v = vec![1.0 / n as f64; n];
        let mut w = vec![0.0; n];
        let mut best_gap = f64::INFINITY;
        let mut since_improved = 0usize;
        for it in 1..=opts.max_iter {
            self.left_apply(&v, &mut w);
            let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
            for (a, b) in w.iter().zip(&v) {
                if *b > 0.0 {
                    let r = a / b;
                    lo = lo.min(r);
                    hi = hi.max(r);
                }
            }
            let total: f64 = w.iter().sum();
            if !(total > 0.0) {
                return Err(Error::NoConvergence {
                    iterations: it,
                    gap: f64::NAN,
                });
            }
            for (x, y) in v.iter_mut().zip(&w) {
                *x = y / total;
            }
            let gap = (hi - lo) / hi;
            let done = gap <= opts.rel_tol || (since_improved > 2_000 && best_gap <= FALLBACK_TOL);
            if done {
                return Ok(PerronRoot {
                    rho: 0.5 * (lo + hi),
                    left: v,
                    iterations: it,
                    bracket: gap,
                });
            }
            if gap < best_gap {
                best_gap = gap;
                since_improved = 0;
            } else {
                since_improved += 1;
            }
        }
        Err(Error::NoConvergence {
            iterations: opts.max_iter,
            gap: best_gap,
        })
    }
}

/// Stationary law of the untilted joint chain.
pub fn stationary_distribution(params: &ChannelParams, opts: &SpectralOptions) -> Result<Vec<f64>> {
    Ok(TiltedKernel::untilted(params, opts.max_channels)?
        .perron_root(opts)?
        .left)
}

/// Log Perron root of the idle-sensing kernel tilted by `theta_tilde`.
pub fn psi_x_spectral(
    theta_tilde: f64,
    params: &ChannelParams,
    opts: &SpectralOptions,
) -> Result<f64> {
    if theta_tilde == 0.0 {
        return Ok(0.0);
    }
    Ok(
        TiltedKernel::idle_sensing(params, theta_tilde, opts.max_channels)?
            .perron_root(opts)?
            .log_rho(),
    )
}

/// Log Perron root of the success-count kernel: the exact limiting log
/// moment generating function of the always-transmit success process.
pub fn psi_success_spectral(
    theta: f64,
    params: &ChannelParams,
    opts: &SpectralOptions,
) -> Result<f64> {
    if theta == 0.0 {
        return Ok(0.0);
    }
    Ok(TiltedKernel::success(params, theta, opts.max_channels)?
        .perron_root(opts)?
        .log_rho())
}

/// Long-run throughput of always-transmit-on-idle with myopic sensing:
/// `c exp(-lambda T) sum_{(s,i): s_i idle} pi(s, i)`.
pub fn ms_infinity_throughput(params: &ChannelParams, opts: &SpectralOptions) -> Result<f64> {
    let pi = stationary_distribution(params, opts)?;
    let n = params.n_channels;
    let idle_mass: f64 = pi
        .iter()
        .enumerate()
        .filter(|(k, _)| (k / n) >> (k % n) & 1 == 0)
        .map(|(_, p)| p)
        .sum();
    Ok(idle_mass * params.p_stay_idle_slot() * params.c())
}
