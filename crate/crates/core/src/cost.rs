//! Delay/energy accounting, execution traces and synthesized power traces.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Externally observable operation classes. Reads and writes are split by
/// data value because their costs differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum OpClass {
    Read1,
    Read0,
    Write1,
    Write0,
    #[serde(rename = "CimNOT")]
    CimNot,
    #[serde(rename = "CimAND")]
    CimAnd,
    #[serde(rename = "CimOR")]
    CimOr,
    #[serde(rename = "CimNAND")]
    CimNand,
    #[serde(rename = "CimNOR")]
    CimNor,
    #[serde(rename = "CimXOR")]
    CimXor,
    #[serde(rename = "CimADD")]
    CimAdd,
}

impl OpClass {
    pub const STANDARD: [OpClass; 4] = [
        OpClass::Read1,
        OpClass::Read0,
        OpClass::Write1,
        OpClass::Write0,
    ];
    pub const ENHANCED: [OpClass; 11] = [
        OpClass::Read1,
        OpClass::Read0,
        OpClass::Write1,
        OpClass::Write0,
        OpClass::CimNot,
        OpClass::CimAnd,
        OpClass::CimOr,
        OpClass::CimNand,
        OpClass::CimNor,
        OpClass::CimXor,
        OpClass::CimAdd,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpClass::Read1 => "Read1",
            OpClass::Read0 => "Read0",
            OpClass::Write1 => "Write1",
            OpClass::Write0 => "Write0",
            OpClass::CimNot => "CimNOT",
            OpClass::CimAnd => "CimAND",
            OpClass::CimOr => "CimOR",
            OpClass::CimNand => "CimNAND",
            OpClass::CimNor => "CimNOR",
            OpClass::CimXor => "CimXOR",
            OpClass::CimAdd => "CimADD",
        }
    }

    pub fn is_write(self) -> bool {
        matches!(self, OpClass::Write1 | OpClass::Write0)
    }

    pub fn is_cim(self) -> bool {
        !matches!(
            self,
            OpClass::Read1 | OpClass::Read0 | OpClass::Write1 | OpClass::Write0
        )
    }
}

impl std::fmt::Display for OpClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for OpClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        OpClass::ENHANCED
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownOp(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OpCost {
    pub delay_ns: f64,
    pub energy_fj: f64,
}

impl OpCost {
    pub const fn new(delay_ns: f64, energy_fj: f64) -> Self {
        OpCost {
            delay_ns,
            energy_fj,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum CostMode {
    /// One table row per word-level operation.
    #[default]
    PerWord,
    /// Writes are charged bit by bit so the energy depends on the number of
    /// ones in the word.
    PerBitWrites,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrayKind {
    Standard,
    Enhanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostTable {
    pub standard: BTreeMap<OpClass, OpCost>,
    pub enhanced: BTreeMap<OpClass, OpCost>,
    #[serde(default)]
    pub mode: CostMode,
}

impl Default for CostTable {
    fn default() -> Self {
        use OpClass::*;
        let standard = BTreeMap::from([
            (Read1, OpCost::new(0.6, 8.611)),
            (Read0, OpCost::new(0.6, 7.669)),
            (Write1, OpCost::new(4.4, 233.3)),
            (Write0, OpCost::new(3.3, 191.4)),
        ]);
        let enhanced = BTreeMap::from([
            (Read1, OpCost::new(0.63, 22.69)),
            (Read0, OpCost::new(0.67, 23.85)),
            (Write1, OpCost::new(4.40, 244.64)),
            (Write0, OpCost::new(3.30, 202.70)),
            (CimNot, OpCost::new(0.60, 22.20)),
            (CimAnd, OpCost::new(0.55, 22.30)),
            (CimOr, OpCost::new(0.53, 22.90)),
            (CimNand, OpCost::new(0.45, 18.89)),
            (CimNor, OpCost::new(0.45, 21.00)),
            (CimXor, OpCost::new(0.53, 26.34)),
            (CimAdd, OpCost::new(0.53, 26.32)),
        ]);
        CostTable {
            standard,
            enhanced,
            mode: CostMode::PerWord,
        }
    }
}

impl CostTable {
    pub fn with_mode(mut self, mode: CostMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn rows(&self, kind: ArrayKind) -> &BTreeMap<OpClass, OpCost> {
        match kind {
            ArrayKind::Standard => &self.standard,
            ArrayKind::Enhanced => &self.enhanced,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (op, c) in self.standard.iter().chain(self.enhanced.iter()) {
            if !(c.delay_ns >= 0.0 && c.energy_fj >= 0.0) {
                return Err(Error::Config(format!("negative or NaN cost for {op}")));
            }
        }
        Ok(())
    }
}

/// Table lookup of a single operation class.
pub fn cost_of(op: OpClass, table: &CostTable, kind: ArrayKind) -> Result<OpCost> {
    table
        .rows(kind)
        .get(&op)
        .copied()
        .ok_or_else(|| Error::UnknownOp(format!("{op} ({kind:?} array)")))
}

/// Number of ones and zeros in the word an operation moves.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataContext {
    pub ones: u32,
    pub zeros: u32,
}

impl DataContext {
    pub fn of_word(bits: u64, width: usize) -> Self {
        let mask = if width >= 64 {
            u64::MAX
        } else {
            (1u64 << width) - 1
        };
        let ones = (bits & mask).count_ones();
        DataContext {
            ones,
            zeros: width as u32 - ones,
        }
    }

    /// Word-level subclass: the majority bit value, ties counting as `1`.
    pub fn majority_is_one(&self) -> bool {
        self.ones >= self.zeros
    }
}

/// A word-level access to the array.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordAccess {
    Read,
    Write,
    Cim(OpClass),
}

/// Cost of one word-level access, returning the table class it was charged
/// as.
///
/// In [`CostMode::PerWord`] a read or write is charged as the row of its
/// majority bit value. In [`CostMode::PerBitWrites`] a write costs
/// `ones * E(Write1) + zeros * E(Write0)` and lasts as long as the slowest
/// bit written, since bit lines are driven in parallel.
pub fn word_cost(
    access: WordAccess,
    data: DataContext,
    table: &CostTable,
    kind: ArrayKind,
) -> Result<(OpClass, OpCost)> {
    match access {
        WordAccess::Cim(op) => Ok((op, cost_of(op, table, kind)?)),
        WordAccess::Read => {
            let class = if data.majority_is_one() {
                OpClass::Read1
            } else {
                OpClass::Read0
            };
            Ok((class, cost_of(class, table, kind)?))
        }
        WordAccess::Write => {
            let class = if data.majority_is_one() {
                OpClass::Write1
            } else {
                OpClass::Write0
            };
            match table.mode {
                CostMode::PerWord => Ok((class, cost_of(class, table, kind)?)),
                CostMode::PerBitWrites => {
                    let w1 = cost_of(OpClass::Write1, table, kind)?;
                    let w0 = cost_of(OpClass::Write0, table, kind)?;
                    let mut delay: f64 = 0.0;
                    if data.ones > 0 {
                        delay = delay.max(w1.delay_ns);
                    }
                    if data.zeros > 0 {
                        delay = delay.max(w0.delay_ns);
                    }
                    let energy = data.ones as f64 * w1.energy_fj + data.zeros as f64 * w0.energy_fj;
                    Ok((class, OpCost::new(delay, energy)))
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Channel {
    Bus,
    InMemory,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub kind: OpClass,
    pub ones: u32,
    pub zeros: u32,
    pub start_ns: f64,
    pub duration_ns: f64,
    pub energy_fj: f64,
    pub channel: Channel,
}

impl TraceEvent {
    pub fn end_ns(&self) -> f64 {
        self.start_ns + self.duration_ns
    }
}

/// Append-only, back-to-back event log.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionTrace {
    pub events: Vec<TraceEvent>,
}

#[derive(Serialize)]
struct EventRow<'a> {
    kind: &'a str,
    start_ns: f64,
    duration_ns: f64,
    #[serde(rename = "energy_fJ")]
    energy_fj: f64,
    channel: &'a str,
}

impl ExecutionTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn end_ns(&self) -> f64 {
        self.events.last().map_or(0.0, TraceEvent::end_ns)
    }

    /// Appends an event starting where the previous one ended.
    pub fn record(&mut self, kind: OpClass, data: DataContext, cost: OpCost, channel: Channel) {
        let start_ns = self.end_ns();
        self.events.push(TraceEvent {
            kind,
            ones: data.ones,
            zeros: data.zeros,
            start_ns,
            duration_ns: cost.delay_ns,
            energy_fj: cost.energy_fj,
            channel,
        });
    }

    pub fn total_energy(&self) -> f64 {
        self.events.iter().map(|e| e.energy_fj).sum()
    }

    pub fn total_delay(&self) -> f64 {
        self.events.iter().map(|e| e.duration_ns).sum()
    }

    /// Events carried by the channel.
    pub fn count_channel(&self, channel: Channel) -> usize {
        self.events.iter().filter(|e| e.channel == channel).count()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for e in &self.events {
            w.serialize(EventRow {
                kind: e.kind.name(),
                start_ns: e.start_ns,
                duration_ns: e.duration_ns,
                energy_fj: e.energy_fj,
                channel: match e.channel {
                    Channel::Bus => "Bus",
                    Channel::InMemory => "InMemory",
                },
            })?;
        }
        if self.events.is_empty() {
            w.write_record(["kind", "start_ns", "duration_ns", "energy_fJ", "channel"])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }
}

pub fn count_bus_transfers(trace: &ExecutionTrace) -> usize {
    trace.count_channel(Channel::Bus)
}

/// Uniformly sampled power waveform, µW (fJ/ns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerTrace {
    pub sample_period_ns: f64,
    pub samples: Vec<f64>,
}

impl PowerTrace {
    pub fn time_of(&self, index: usize) -> f64 {
        index as f64 * self.sample_period_ns
    }

    /// Energy in fJ over the whole trace.
    pub fn integral(&self) -> f64 {
        self.samples.iter().sum::<f64>() * self.sample_period_ns
    }

    /// Energy over the samples whose bins start in `[from_ns, to_ns)`.
    pub fn integral_between(&self, from_ns: f64, to_ns: f64) -> f64 {
        self.samples
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let t = self.time_of(*i);
                t >= from_ns && t < to_ns
            })
            .map(|(_, p)| p)
            .sum::<f64>()
            * self.sample_period_ns
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_ns", "power"])?;
        for (i, p) in self.samples.iter().enumerate() {
            w.write_record([self.time_of(i).to_string(), p.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Renders a trace as rectangular power pulses plus Gaussian noise.
///
/// Each sample holds the mean power over its bin, so a noise-free trace
/// integrates to the event energies exactly (up to float rounding).
/// `noise_sigma` is the standard deviation of each sample's energy
/// contribution in fJ.
pub fn synthesize_power_trace<R: Rng + ?Sized>(
    trace: &ExecutionTrace,
    sample_rate: f64,
    noise_sigma: f64,
    rng: &mut R,
) -> Result<PowerTrace> {
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::Config(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }
    let dt = 1.0 / sample_rate;
    let n = (trace.end_ns() / dt).ceil() as usize;
    let mut energy = vec![0.0f64; n];
    for e in &trace.events {
        if e.duration_ns <= 0.0 {
            // zero-length events deposit their energy in one bin
            if let Some(slot) =
                energy.get_mut(((e.start_ns / dt) as usize).min(n.saturating_sub(1)))
            {
                *slot += e.energy_fj;
            }
            continue;
        }
        let power = e.energy_fj / e.duration_ns;
        let first = (e.start_ns / dt).floor() as usize;
        let last = ((e.end_ns() / dt).ceil() as usize).min(n);
        for (k, slot) in energy.iter_mut().enumerate().take(last).skip(first) {
            let lo = (k as f64 * dt).max(e.start_ns);
            let hi = ((k + 1) as f64 * dt).min(e.end_ns());
            if hi > lo {
                *slot += power * (hi - lo);
            }
        }
    }
    let samples = energy
        .into_iter()
        .map(|e| {
            let z: f64 = rng.sample(StandardNormal);
            (e + noise_sigma * z) / dt
        })
        .collect();
    Ok(PowerTrace {
        sample_period_ns: dt,
        samples,
    })
}
