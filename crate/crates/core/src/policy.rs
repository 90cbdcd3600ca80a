//! Sensing and transmission policies.
//!
//! Sensing is myopic round-robin: stay on a channel while it is sensed idle,
//! move to the next channel of a fixed list on a busy result. Transmission is
//! either adaptive (debt based: transmit on idle sensing iff the acknowledged
//! bits lag the target `tau * t`) or memoryless (transmit on idle sensing with
//! a fixed probability).

use rand::Rng;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::simulator::{collision_measure_after, run, RunSpec};

/// Round-robin myopic sensing pointer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MyopicSensingState {
    order: Vec<usize>,
    pos: usize,
}

impl MyopicSensingState {
    /// Starts on the first entry of `order`, which must be a permutation of
    /// `0..order.len()`.
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &c in &order {
            if c >= order.len() || std::mem::replace(&mut seen[c], true) {
                return Err(Error::InvalidPolicy(format!(
                    "channel order {order:?} is not a permutation"
                )));
            }
        }
        if order.is_empty() {
            return Err(Error::InvalidPolicy("channel order is empty".into()));
        }
        Ok(MyopicSensingState { order, pos: 0 })
    }

    pub fn identity(n: usize) -> Self {
        MyopicSensingState {
            order: (0..n).collect(),
            pos: 0,
        }
    }

    pub fn current_channel(&self) -> usize {
        self.order[self.pos]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Stay when idle, switch when busy.
    pub fn advance(&mut self, last_busy: bool) {
        if last_busy {
            self.pos = (self.pos + 1) % self.order.len();
        }
    }
}

/// Functional form of [`MyopicSensingState::advance`].
pub fn myopic_next(state: &MyopicSensingState, last_busy: bool) -> MyopicSensingState {
    let mut next = state.clone();
    next.advance(last_busy);
    next
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DebtTarget {
    Finite(f64),
    /// `tau = infinity`: transmit on every idle sensing result.
    Unbounded,
}

/// How the debt test treats `A_t == tau * t`. Only `Strict` is the adaptive
/// policy; `Inclusive` exists as a negative control for the verifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DebtComparison {
    #[default]
    Strict,
    Inclusive,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ATParams {
    pub target: DebtTarget,
    pub comparison: DebtComparison,
}

impl ATParams {
    pub fn finite(tau: f64) -> Result<Self> {
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(Error::InvalidPolicy(format!(
                "tau must be finite and >= 0, got {tau}"
            )));
        }
        Ok(ATParams {
            target: DebtTarget::Finite(tau),
            comparison: DebtComparison::Strict,
        })
    }

    pub fn unbounded() -> Self {
        ATParams {
            target: DebtTarget::Unbounded,
            comparison: DebtComparison::Strict,
        }
    }

    pub fn tau(&self) -> Option<f64> {
        match self.target {
            DebtTarget::Finite(t) => Some(t),
            DebtTarget::Unbounded => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MTParams {
    pub p_tx: f64,
}

impl MTParams {
    pub fn new(p_tx: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p_tx) {
            return Err(Error::InvalidPolicy(format!(
                "p_tx must lie in [0, 1], got {p_tx}"
            )));
        }
        Ok(MTParams { p_tx })
    }
}

/// Acknowledged bits through slot `t - 1`, together with the slot index.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DebtCounter {
    pub a: u64,
    pub t: u64,
}

impl Default for DebtCounter {
    fn default() -> Self {
        DebtCounter { a: 0, t: 1 }
    }
}

impl DebtCounter {
    pub fn advance(&mut self, success_bits: u32) {
        self.a += u64::from(success_bits);
        self.t += 1;
    }
}

pub fn debt_advance(debt: DebtCounter, success_bits: u32) -> DebtCounter {
    let mut d = debt;
    d.advance(success_bits);
    d
}

/// Whether the adaptive policy is in debt at `debt.t`. `tau * t` is formed
/// from the integer slot index every slot; nothing is accumulated.
pub fn in_debt(debt: &DebtCounter, params: &ATParams) -> bool {
    match params.target {
        DebtTarget::Unbounded => true,
        DebtTarget::Finite(tau) => {
            let a = debt.a as f64;
            let target = tau * debt.t as f64;
            match params.comparison {
                DebtComparison::Strict => a < target,
                DebtComparison::Inclusive => a <= target,
            }
        }
    }
}

pub fn at_decide(debt: &DebtCounter, params: &ATParams, sensed_busy: bool) -> bool {
    !sensed_busy && in_debt(debt, params)
}

/// Memoryless decision; consumes one uniform draw per idle sensing result.
pub fn mt_decide<R: Rng + ?Sized>(params: &MTParams, sensed_busy: bool, rng: &mut R) -> bool {
    if sensed_busy {
        return false;
    }
    rng.random::<f64>() < params.p_tx
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TransmissionPolicy {
    Adaptive(ATParams),
    Memoryless(MTParams),
}

impl TransmissionPolicy {
    pub fn is_deterministic(&self) -> bool {
        matches!(self, TransmissionPolicy::Adaptive(_))
    }

    pub fn decide<R: Rng + ?Sized>(
        &self,
        debt: &DebtCounter,
        sensed_busy: bool,
        rng: &mut R,
    ) -> bool {
        match self {
            TransmissionPolicy::Adaptive(p) => at_decide(debt, p, sensed_busy),
            TransmissionPolicy::Memoryless(p) => mt_decide(p, sensed_busy, rng),
        }
    }

    pub fn describe(&self) -> String {
        match self {
            TransmissionPolicy::Adaptive(p) => match p.target {
                DebtTarget::Finite(t) => format!("MS-AT(tau={t})"),
                DebtTarget::Unbounded => "MS-AT(inf)".to_string(),
            },
            TransmissionPolicy::Memoryless(p) => format!("MS-MT(p_tx={})", p.p_tx),
        }
    }
}

/// Complete policy: sensing order plus transmission rule.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyConfig {
    pub channel_order: Vec<usize>,
    pub transmission: TransmissionPolicy,
}

impl PolicyConfig {
    pub fn at(n_channels: usize, params: ATParams) -> Self {
        PolicyConfig {
            channel_order: (0..n_channels).collect(),
            transmission: TransmissionPolicy::Adaptive(params),
        }
    }

    pub fn mt(n_channels: usize, params: MTParams) -> Self {
        PolicyConfig {
            channel_order: (0..n_channels).collect(),
            transmission: TransmissionPolicy::Memoryless(params),
        }
    }
}

/// Simulation budget for [`calibrate_mt`].
#[derive(Debug, Clone, Copy)]
pub struct CalibrationBudget {
    pub horizon: u64,
    pub burn_in: u64,
    pub seed: u64,
    /// Bisection stops once the bracket on `p_tx` is narrower than this
    /// fraction of its upper end.
    pub tolerance: f64,
}

impl Default for CalibrationBudget {
    fn default() -> Self {
        CalibrationBudget {
            horizon: 200_000,
            burn_in: 1_000,
            seed: 0x6d73_6d74,
            tolerance: 1e-3,
        }
    }
}

fn max_collision(p_tx: f64, params: &ChannelParams, budget: &CalibrationBudget) -> Result<f64> {
    let spec = RunSpec {
        params: *params,
        policy: PolicyConfig::mt(params.n_channels, MTParams::new(p_tx)?),
        horizon: budget.horizon,
        seed: budget.seed,
        initial: Default::default(),
    };
    let trace = run(&spec)?;
    Ok(collision_measure_after(&trace, params, budget.burn_in)?
        .into_iter()
        .fold(0.0, f64::max))
}

const MIN_P_TX: f64 = 1e-9;

/// Largest memoryless transmission probability whose simulated per-channel
/// scaled collision stays within `gamma`. Every probe reuses the same seed,
/// so the collision estimate is monotone in `p_tx`.
pub fn calibrate_mt(
    gamma: f64,
    params: &ChannelParams,
    budget: &CalibrationBudget,
) -> Result<MTParams> {
    if !(gamma > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "gamma must be positive, got {gamma}"
        )));
    }
    if budget.horizon <= budget.burn_in {
        return Err(Error::InvalidArgument(
            "calibration horizon must exceed burn-in".into(),
        ));
    }
    if max_collision(1.0, params, budget)? <= gamma {
        return MTParams::new(1.0);
    }
    // The bracket is refined relative to its upper end so tiny budgets
    // still resolve to a nonzero probability.
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > budget.tolerance * hi {
        if hi < MIN_P_TX {
            return Err(Error::Calibration(format!(
                "no transmission probability above {MIN_P_TX:e} satisfies gamma = {gamma}"
            )));
        }
        let mid = 0.5 * (lo + hi);
        if max_collision(mid, params, budget)? <= gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    MTParams::new(lo)
}
