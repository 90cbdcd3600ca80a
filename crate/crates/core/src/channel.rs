//! Independent on/off continuous-time Markov channels.
//!
//! Each channel alternates between idle (holding time `Exp(lambda)`) and busy
//! (holding time `Exp(mu)`). The secondary user works in slots of length `T`;
//! everything it can observe is a function of the slot-boundary states and of
//! whether the sensed channel stayed idle for the whole slot.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Primitive channel model. Rates are in 1/ms, the slot length in ms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelParams {
    pub n_channels: usize,
    /// Idle-to-busy rate; the mean idle holding time is `1 / lambda`.
    pub lambda: f64,
    /// Busy-to-idle rate; the mean busy holding time is `1 / mu`.
    pub mu: f64,
    /// Slot duration `T`.
    pub slot_len: f64,
    /// Payload `c` delivered by one successful slot.
    #[serde(default = "default_bits")]
    pub bits_per_slot: u32,
}

fn default_bits() -> u32 {
    1
}

impl ChannelParams {
    /// Parameters used for the published two-channel experiments.
    pub const REFERENCE: ChannelParams = ChannelParams {
        n_channels: 2,
        lambda: 1.0 / 3.0,
        mu: 0.5,
        slot_len: 0.25,
        bits_per_slot: 1,
    };

    pub fn new(
        n_channels: usize,
        lambda: f64,
        mu: f64,
        slot_len: f64,
        bits_per_slot: u32,
    ) -> Result<Self> {
        let p = ChannelParams {
            n_channels,
            lambda,
            mu,
            slot_len,
            bits_per_slot,
        };
        p.validate()?;
        Ok(p)
    }

    /// Checks the model invariants. `lambda == 0` is accepted as a degenerate
    /// channel that never turns busy; analytic routines reject it.
    pub fn validate(&self) -> Result<()> {
        if self.n_channels == 0 {
            return Err(Error::InvalidChannel(
                "n_channels must be at least 1".into(),
            ));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidChannel(format!(
                "lambda must be finite and >= 0, got {}",
                self.lambda
            )));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            return Err(Error::InvalidChannel(format!(
                "mu must be finite and > 0, got {}",
                self.mu
            )));
        }
        if !(self.slot_len > 0.0 && self.slot_len.is_finite()) {
            return Err(Error::InvalidChannel(format!(
                "slot_len must be finite and > 0, got {}",
                self.slot_len
            )));
        }
        if self.bits_per_slot == 0 {
            return Err(Error::InvalidChannel(
                "bits_per_slot must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Stationary idle probability `mu / (lambda + mu)`.
    pub fn v0(&self) -> f64 {
        self.mu / (self.lambda + self.mu)
    }

    /// Probability that a channel idle at the slot start stays idle for the
    /// whole slot, `exp(-lambda T)`.
    pub fn p_stay_idle_slot(&self) -> f64 {
        (-self.lambda * self.slot_len).exp()
    }

    pub fn c(&self) -> f64 {
        f64::from(self.bits_per_slot)
    }
}

/// Slot-sampled transition probabilities of one channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampledChannel {
    pub p_stay_idle_slot: f64,
    /// P(idle at next boundary | idle now).
    pub p_ii: f64,
    /// P(idle at next boundary | busy now).
    pub p_bi: f64,
    pub v0: f64,
}

impl SampledChannel {
    /// One-step map of the idle probability of an unobserved channel.
    pub fn propagate(&self, idle_prob: f64) -> f64 {
        self.p_bi + idle_prob * (self.p_ii - self.p_bi)
    }

    /// `[[P(i->i), P(i->b)], [P(b->i), P(b->b)]]` with index 0 = idle.
    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.p_ii, 1.0 - self.p_ii], [self.p_bi, 1.0 - self.p_bi]]
    }
}

/// Closed-form two-state CTMC solution over one slot.
pub fn derive_sampled(params: &ChannelParams) -> Result<SampledChannel> {
    params.validate()?;
    if params.lambda <= 0.0 {
        return Err(Error::InvalidChannel(
            "slot-sampled chain requires lambda > 0".into(),
        ));
    }
    let v0 = params.v0();
    let decay = (-(params.lambda + params.mu) * params.slot_len).exp();
    Ok(SampledChannel {
        p_stay_idle_slot: params.p_stay_idle_slot(),
        p_ii: v0 + (1.0 - v0) * decay,
        // v0 * (1 - decay) loses precision for tiny horizons.
        p_bi: v0 * -(-(params.lambda + params.mu) * params.slot_len).exp_m1(),
        v0,
    })
}

/// Slot-boundary occupancy, `true` = busy.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ChannelState(pub Vec<bool>);

impl ChannelState {
    pub fn all_idle(n: usize) -> Self {
        ChannelState(vec![false; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn is_idle(&self, channel: usize) -> bool {
        !self.0[channel]
    }
}

/// What happened to one channel during one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotChannelOutcome {
    pub start_busy: bool,
    /// No busy epoch anywhere in `[0, T]`.
    pub idle_throughout: bool,
    pub end_busy: bool,
}

/// Event-driven sampler for a bank of identical channels.
#[derive(Debug, Clone)]
pub struct ChannelBank {
    params: ChannelParams,
    idle_hold: Option<Exp<f64>>,
    busy_hold: Exp<f64>,
}

impl ChannelBank {
    pub fn new(params: ChannelParams) -> Result<Self> {
        params.validate()?;
        let idle_hold = if params.lambda > 0.0 {
            Some(Exp::new(params.lambda).map_err(|e| Error::InvalidChannel(e.to_string()))?)
        } else {
            None
        };
        let busy_hold = Exp::new(params.mu).map_err(|e| Error::InvalidChannel(e.to_string()))?;
        Ok(ChannelBank {
            params,
            idle_hold,
            busy_hold,
        })
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    fn hold<R: Rng + ?Sized>(&self, busy: bool, rng: &mut R) -> f64 {
        if busy {
            self.busy_hold.sample(rng)
        } else {
            match &self.idle_hold {
                Some(d) => d.sample(rng),
                None => f64::INFINITY,
            }
        }
    }

    /// Advances a single channel across one slot. Holding times are
    /// memoryless, so the residual at the slot start is a fresh draw.
    pub fn step_channel<R: Rng + ?Sized>(
        &self,
        start_busy: bool,
        rng: &mut R,
    ) -> SlotChannelOutcome {
        let horizon = self.params.slot_len;
        let mut busy = start_busy;
        let mut clock = self.hold(busy, rng);
        if !start_busy && clock >= horizon {
            return SlotChannelOutcome {
                start_busy: false,
                idle_throughout: true,
                end_busy: false,
            };
        }
        while clock < horizon {
            busy = !busy;
            clock += self.hold(busy, rng);
        }
        SlotChannelOutcome {
            start_busy,
            idle_throughout: false,
            end_busy: busy,
        }
    }

    /// Advances every channel by one slot, writing per-channel outcomes into
    /// `out` and moving `state` to the next slot boundary.
    pub fn step_into<R: Rng + ?Sized>(
        &self,
        state: &mut ChannelState,
        rng: &mut R,
        out: &mut Vec<SlotChannelOutcome>,
    ) {
        out.clear();
        for busy in state.0.iter_mut() {
            let o = self.step_channel(*busy, rng);
            *busy = o.end_busy;
            out.push(o);
        }
    }

    pub fn stationary_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> ChannelState {
        stationary_draw(&self.params, rng)
    }
}

/// Advances all channels one slot and returns their outcomes; `state` moves
/// to the next boundary.
pub fn step_slot<R: Rng + ?Sized>(
    state: &mut ChannelState,
    params: &ChannelParams,
    rng: &mut R,
) -> Result<Vec<SlotChannelOutcome>> {
    if state.len() != params.n_channels {
        return Err(Error::InvalidArgument(format!(
            "state has {} channels, params expect {}",
            state.len(),
            params.n_channels
        )));
    }
    let bank = ChannelBank::new(*params)?;
    let mut out = Vec::with_capacity(state.len());
    bank.step_into(state, rng, &mut out);
    Ok(out)
}

/// I.i.d. draw from the stationary law (idle with probability `v0`).
pub fn stationary_draw<R: Rng + ?Sized>(params: &ChannelParams, rng: &mut R) -> ChannelState {
    let v0 = params.v0();
    ChannelState(
        (0..params.n_channels)
            .map(|_| !rng.random_bool(v0))
            .collect(),
    )
}

/// Channel information state: per-channel probability of sensing idle at the
/// next slot.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefVector(pub Vec<f64>);

impl BeliefVector {
    pub fn new(components: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::InvalidArgument(
                "belief vector must be nonempty".into(),
            ));
        }
        if let Some(bad) = components.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::InvalidArgument(format!(
                "belief component {bad} outside [0, 1]"
            )));
        }
        Ok(BeliefVector(components))
    }

    pub fn stationary(n: usize, sc: &SampledChannel) -> Self {
        BeliefVector(vec![sc.v0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Lowest-index argmax.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &w) in self.0.iter().enumerate() {
            if w > self.0[best] {
                best = i;
            }
        }
        best
    }

    /// Bit pattern used as an exact memo key.
    pub fn key(&self) -> Vec<u64> {
        self.0.iter().map(|w| w.to_bits()).collect()
    }
}

/// One-slot belief update. `observation` is `Some(true)` for busy.
pub fn belief_update(
    omega: &BeliefVector,
    sensed: Option<usize>,
    observation: Option<bool>,
    sc: &SampledChannel,
) -> Result<BeliefVector> {
    match (sensed, observation) {
        (Some(a), Some(busy)) => {
            if a >= omega.len() {
                return Err(Error::InvalidArgument(format!(
                    "sensed channel {a} out of range"
                )));
            }
            Ok(observe(omega, a, busy, sc))
        }
        (None, None) => Ok(BeliefVector(
            omega.0.iter().map(|&w| sc.propagate(w)).collect(),
        )),
        _ => Err(Error::InvalidArgument(
            "an observation must be supplied exactly when a channel is sensed".into(),
        )),
    }
}

/// Infallible core of [`belief_update`] for a sensed channel.
pub(crate) fn observe(
    omega: &BeliefVector,
    sensed: usize,
    busy: bool,
    sc: &SampledChannel,
) -> BeliefVector {
    BeliefVector(
        omega
            .0
            .iter()
            .enumerate()
            .map(|(j, &w)| {
                if j == sensed {
                    if busy {
                        sc.p_bi
                    } else {
                        sc.p_ii
                    }
                } else {
                    sc.propagate(w)
                }
            })
            .collect(),
    )
}
