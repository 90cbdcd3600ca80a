//! Slot loop: sense, decide, transmit, observe.
//!
//! Per slot every channel is advanced across `[0, T]`, the policy reads the
//! slot-start state of the sensed channel, and a transmission succeeds iff
//! that channel stays idle for the whole slot. A transmission on an
//! idle-sensed channel that turns busy mid-slot is a collision charged to
//! that channel's primary user.

mod intervals;
mod queue;
mod trace;

pub use intervals::{
    decompose_intervals, Interval, IntervalDecomposition, IntervalKind, LemmaReport,
};
pub use queue::{queue_from_rewards, queue_sim, QueueTrace};
pub use trace::{SlotRecord, Trace};

use crate::channel::{stationary_draw, ChannelBank, ChannelParams, ChannelState};
use crate::error::{Error, Result};
use crate::policy::{DebtCounter, MyopicSensingState, PolicyConfig, TransmissionPolicy};
use crate::rng::{channel_rng, policy_rng, SimRng};

/// Longest run kept fully in memory by [`run`]; longer horizons go through
/// [`run_with`].
pub const MAX_IN_MEMORY_SLOTS: u64 = 10_000_000;

/// Channel state at slot 1.
#[derive(Debug, Clone, Default, PartialEq)]
pub enum InitialChannels {
    /// Independent draws from the stationary law (channel stream).
    #[default]
    Stationary,
    /// Explicit occupancy, `true` = busy.
    Fixed(Vec<bool>),
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub params: ChannelParams,
    pub policy: PolicyConfig,
    pub horizon: u64,
    pub seed: u64,
    pub initial: InitialChannels,
}

impl RunSpec {
    pub fn new(params: ChannelParams, policy: PolicyConfig, horizon: u64, seed: u64) -> Self {
        RunSpec {
            params,
            policy,
            horizon,
            seed,
            initial: InitialChannels::Stationary,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.horizon == 0 {
            return Err(Error::InvalidArgument(
                "horizon must be at least one slot".into(),
            ));
        }
        validate_policy(&self.policy, self.params.n_channels)?;
        if let InitialChannels::Fixed(s) = &self.initial {
            if s.len() != self.params.n_channels {
                return Err(Error::InvalidArgument(format!(
                    "initial state has {} channels, expected {}",
                    s.len(),
                    self.params.n_channels
                )));
            }
        }
        Ok(())
    }
}

fn validate_policy(policy: &PolicyConfig, n: usize) -> Result<()> {
    if policy.channel_order.len() != n {
        return Err(Error::InvalidPolicy(format!(
            "channel order lists {} channels, model has {n}",
            policy.channel_order.len()
        )));
    }
    MyopicSensingState::new(policy.channel_order.clone())?;
    match policy.transmission {
        TransmissionPolicy::Adaptive(p) => {
            if let Some(tau) = p.tau() {
                if !(tau >= 0.0 && tau.is_finite()) {
                    return Err(Error::InvalidPolicy(format!("bad tau {tau}")));
                }
            }
        }
        TransmissionPolicy::Memoryless(p) => {
            if !(0.0..=1.0).contains(&p.p_tx) {
                return Err(Error::InvalidPolicy(format!("bad p_tx {}", p.p_tx)));
            }
        }
    }
    Ok(())
}

struct Agent {
    sensing: MyopicSensingState,
    debt: DebtCounter,
    transmission: TransmissionPolicy,
    rng: SimRng,
}

impl Agent {
    fn new(policy: &PolicyConfig, seed: u64) -> Result<Self> {
        Ok(Agent {
            sensing: MyopicSensingState::new(policy.channel_order.clone())?,
            debt: DebtCounter::default(),
            transmission: policy.transmission,
            rng: policy_rng(seed),
        })
    }

    fn play(&mut self, outcomes: &[crate::channel::SlotChannelOutcome], c: u32) -> SlotRecord {
        let ch = self.sensing.current_channel();
        let o = outcomes[ch];
        let transmitted = self
            .transmission
            .decide(&self.debt, o.start_busy, &mut self.rng);
        let success = transmitted && o.idle_throughout;
        let rec = SlotRecord {
            t: self.debt.t,
            sensed_channel: ch as u32,
            sensed_busy: o.start_busy,
            transmitted,
            success_bits: if success { c } else { 0 },
            collision: transmitted && !o.idle_throughout,
            debt_a: self.debt.a,
        };
        self.debt.advance(rec.success_bits);
        self.sensing.advance(o.start_busy);
        rec
    }
}

fn initial_state(spec: &RunSpec, rng: &mut SimRng) -> ChannelState {
    match &spec.initial {
        InitialChannels::Stationary => stationary_draw(&spec.params, rng),
        InitialChannels::Fixed(s) => ChannelState(s.clone()),
    }
}

/// Runs the slot loop and hands every record to `sink`. Deterministic in
/// `(spec, seed)`.
pub fn run_with<F: FnMut(&SlotRecord)>(spec: &RunSpec, mut sink: F) -> Result<()> {
    spec.validate()?;
    let bank = ChannelBank::new(spec.params)?;
    let mut ch_rng = channel_rng(spec.seed);
    let mut state = initial_state(spec, &mut ch_rng);
    let mut agent = Agent::new(&spec.policy, spec.seed)?;
    let mut outcomes = Vec::with_capacity(spec.params.n_channels);
    for _ in 0..spec.horizon {
        bank.step_into(&mut state, &mut ch_rng, &mut outcomes);
        let rec = agent.play(&outcomes, spec.params.bits_per_slot);
        sink(&rec);
    }
    Ok(())
}

/// Runs the slot loop and keeps every record.
pub fn run(spec: &RunSpec) -> Result<Trace> {
    if spec.horizon > MAX_IN_MEMORY_SLOTS {
        return Err(Error::InvalidArgument(format!(
            "horizon {} exceeds the in-memory limit of {MAX_IN_MEMORY_SLOTS} slots; use run_with",
            spec.horizon
        )));
    }
    let mut records = Vec::with_capacity(spec.horizon as usize);
    run_with(spec, |r| records.push(*r))?;
    Ok(Trace {
        records,
        params: spec.params,
        policy: spec.policy.clone(),
        seed: spec.seed,
    })
}

fn debt_rank(policy: &PolicyConfig) -> Option<f64> {
    match policy.transmission {
        TransmissionPolicy::Adaptive(p) => Some(p.tau().unwrap_or(f64::INFINITY)),
        TransmissionPolicy::Memoryless(_) => None,
    }
}

/// Runs two deterministic policies over one channel sample path. The lower
/// policy's target must not exceed the upper one's.
pub fn coupled_run(
    params: &ChannelParams,
    lower: &PolicyConfig,
    upper: &PolicyConfig,
    horizon: u64,
    seed: u64,
    initial: InitialChannels,
) -> Result<(Trace, Trace)> {
    let (Some(t1), Some(t2)) = (debt_rank(lower), debt_rank(upper)) else {
        return Err(Error::InvalidPolicy(
            "coupling is defined only for deterministic (adaptive) transmission".into(),
        ));
    };
    if t1 > t2 {
        return Err(Error::InvalidArgument(format!(
            "coupled run needs tau_1 <= tau_2, got {t1} > {t2}"
        )));
    }
    let spec_lo = RunSpec {
        params: *params,
        policy: lower.clone(),
        horizon,
        seed,
        initial,
    };
    let spec_hi = RunSpec {
        policy: upper.clone(),
        ..spec_lo.clone()
    };
    spec_lo.validate()?;
    spec_hi.validate()?;
    if horizon > MAX_IN_MEMORY_SLOTS {
        return Err(Error::InvalidArgument(
            "coupled horizon exceeds the in-memory limit".into(),
        ));
    }

    let bank = ChannelBank::new(*params)?;
    let mut ch_rng = channel_rng(seed);
    let mut state = initial_state(&spec_lo, &mut ch_rng);
    let mut a = Agent::new(lower, seed)?;
    let mut b = Agent::new(upper, seed)?;
    let mut ra = Vec::with_capacity(horizon as usize);
    let mut rb = Vec::with_capacity(horizon as usize);
    let mut outcomes = Vec::with_capacity(params.n_channels);
    for _ in 0..horizon {
        bank.step_into(&mut state, &mut ch_rng, &mut outcomes);
        ra.push(a.play(&outcomes, params.bits_per_slot));
        rb.push(b.play(&outcomes, params.bits_per_slot));
    }
    Ok((
        Trace {
            records: ra,
            params: *params,
            policy: lower.clone(),
            seed,
        },
        Trace {
            records: rb,
            params: *params,
            policy: upper.clone(),
            seed,
        },
    ))
}

/// Number of slots where the lower trace has delivered strictly more bits
/// than the upper one.
pub fn prefix_dominance_violations(lower: &Trace, upper: &Trace) -> usize {
    lower
        .records
        .iter()
        .zip(&upper.records)
        .filter(|(l, u)| l.cumulative_after() > u.cumulative_after())
        .count()
}

/// Scale `1 / (1 - v0 exp(-lambda T))` applied to raw collision frequencies.
pub fn collision_scale(params: &ChannelParams) -> Option<f64> {
    let busy_mass = 1.0 - params.v0() * params.p_stay_idle_slot();
    (busy_mass > 0.0).then(|| 1.0 / busy_mass)
}

/// Per-channel scaled collision over the whole trace.
pub fn collision_measure(trace: &Trace, params: &ChannelParams) -> Result<Vec<f64>> {
    collision_measure_after(trace, params, 0)
}

/// Per-channel scaled collision over the slots after `burn_in`.
pub fn collision_measure_after(
    trace: &Trace,
    params: &ChannelParams,
    burn_in: u64,
) -> Result<Vec<f64>> {
    let slots = trace.records.get(burn_in as usize..).unwrap_or(&[]);
    if slots.is_empty() {
        return Err(Error::InvalidArgument("no slots left after burn-in".into()));
    }
    let mut counts = vec![0u64; params.n_channels];
    for r in slots {
        if let Some(ch) = r.collision_channel() {
            counts[ch] += 1;
        }
    }
    let Some(scale) = collision_scale(params) else {
        // Primary users never transmit, so nothing can collide.
        return Ok(vec![0.0; params.n_channels]);
    };
    let n = slots.len() as f64;
    Ok(counts.into_iter().map(|k| k as f64 / n * scale).collect())
}
