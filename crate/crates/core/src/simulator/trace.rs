use std::io::Write;

use serde::Serialize;

use crate::channel::ChannelParams;
use crate::error::{Error, Result};
use crate::policy::PolicyConfig;

/// Outcome of one slot. Channel indices are 0-based in memory and 1-based in
/// exported CSV.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SlotRecord {
    pub t: u64,
    pub sensed_channel: u32,
    pub sensed_busy: bool,
    pub transmitted: bool,
    /// `R_t`: either 0 or `c`.
    pub success_bits: u32,
    /// Collision with the primary user of the sensed channel.
    pub collision: bool,
    /// `A_t`: acknowledged bits through slot `t - 1`.
    pub debt_a: u64,
}

impl SlotRecord {
    pub fn collision_channel(&self) -> Option<usize> {
        self.collision.then_some(self.sensed_channel as usize)
    }

    /// `A_{t+1}`.
    pub fn cumulative_after(&self) -> u64 {
        self.debt_a + u64::from(self.success_bits)
    }
}

#[derive(Debug, Clone)]
pub struct Trace {
    pub records: Vec<SlotRecord>,
    pub params: ChannelParams,
    pub policy: PolicyConfig,
    pub seed: u64,
}

#[derive(Serialize)]
struct CsvRow {
    t: u64,
    sensed_channel: u32,
    sensed_state: u8,
    transmitted: u8,
    success_bits: u32,
    collision: u8,
    debt_a: u64,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// `R_t` for every slot after the first `skip`.
    pub fn rewards_after(&self, skip: usize) -> Vec<u32> {
        self.records
            .iter()
            .skip(skip)
            .map(|r| r.success_bits)
            .collect()
    }

    /// `A_{n+1}`, the total delivered bits.
    pub fn total_bits(&self) -> u64 {
        self.records.last().map_or(0, SlotRecord::cumulative_after)
    }

    /// Checks the per-slot and cross-slot invariants of a trace.
    pub fn validate(&self) -> Result<()> {
        let c = self.params.bits_per_slot;
        let mut a = 0u64;
        for (k, r) in self.records.iter().enumerate() {
            let fail = |msg: &str| Err(Error::InconsistentTrace(format!("slot {}: {msg}", r.t)));
            if r.t != k as u64 + 1 {
                return fail("slot indices must run 1, 2, ...");
            }
            if r.debt_a != a {
                return fail("debt counter disagrees with cumulative successes");
            }
            if r.success_bits != 0 && r.success_bits != c {
                return fail("success bits must be 0 or c");
            }
            if r.success_bits == c && (!r.transmitted || r.sensed_busy || r.collision) {
                return fail("success requires an idle-sensed transmission without collision");
            }
            if r.collision && (!r.transmitted || r.sensed_busy || r.success_bits != 0) {
                return fail("collision requires an idle-sensed, unsuccessful transmission");
            }
            if r.transmitted && r.sensed_busy {
                return fail("transmission on a busy sensing result");
            }
            if r.sensed_channel as usize >= self.params.n_channels {
                return fail("sensed channel out of range");
            }
            a += u64::from(r.success_bits);
        }
        Ok(())
    }

    /// Writes the per-slot CSV (`t,sensed_channel,sensed_state,transmitted,
    /// success_bits,collision,debt_a`), at most `limit` rows when given.
    pub fn write_csv<W: Write>(&self, writer: W, limit: Option<usize>) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let n = limit.unwrap_or(usize::MAX).min(self.records.len());
        if n == 0 {
            w.write_record([
                "t",
                "sensed_channel",
                "sensed_state",
                "transmitted",
                "success_bits",
                "collision",
                "debt_a",
            ])?;
        }
        for r in &self.records[..n] {
            w.serialize(CsvRow {
                t: r.t,
                sensed_channel: r.sensed_channel + 1,
                sensed_state: u8::from(r.sensed_busy),
                transmitted: u8::from(r.transmitted),
                success_bits: r.success_bits,
                collision: u8::from(r.collision),
                debt_a: r.debt_a,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}
