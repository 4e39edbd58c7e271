//! STT-MRAM array with sense amplifiers and in-memory logic.
//!
//! One word lives in one row. Two-row operations activate both word lines,
//! sense the summed current of each column once, and decode that sample
//! against an operation-specific reference.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cost::{
    word_cost, ArrayKind, Channel, CostTable, DataContext, ExecutionTrace, OpClass, WordAccess,
};
use crate::device::{
    sample_pair_current_heated, sample_single_current, CurrentLevelModel, DisturbanceModel,
    MtjState, PairLevel,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrayGeometry {
    pub banks: usize,
    pub rows_per_bank: usize,
    /// Word width; at most 64.
    pub cols_per_row: usize,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        ArrayGeometry {
            banks: 1,
            rows_per_bank: 64,
            cols_per_row: 16,
        }
    }
}

impl ArrayGeometry {
    pub fn new(banks: usize, rows_per_bank: usize, cols_per_row: usize) -> Result<Self> {
        let g = ArrayGeometry {
            banks,
            rows_per_bank,
            cols_per_row,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.banks == 0 || self.rows_per_bank == 0 || self.cols_per_row == 0 {
            return Err(Error::Config("array dimensions must be at least 1".into()));
        }
        if self.cols_per_row > 64 {
            return Err(Error::Config(
                "rows wider than 64 columns are not supported".into(),
            ));
        }
        Ok(())
    }

    pub fn check(&self, addr: RowAddress) -> Result<()> {
        if addr.bank < self.banks && addr.row < self.rows_per_bank {
            Ok(())
        } else {
            Err(Error::OutOfBounds {
                addr,
                banks: self.banks,
                rows: self.rows_per_bank,
            })
        }
    }

    fn index(&self, addr: RowAddress) -> usize {
        addr.bank * self.rows_per_bank + addr.row
    }

    pub fn word_mask(&self) -> u64 {
        mask(self.cols_per_row)
    }
}

fn mask(width: usize) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RowAddress {
    pub bank: usize,
    pub row: usize,
}

impl RowAddress {
    pub const fn new(bank: usize, row: usize) -> Self {
        RowAddress { bank, row }
    }
}

impl fmt::Display for RowAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.bank, self.row)
    }
}

impl FromStr for RowAddress {
    type Err = Error;

    /// `bank:row`, or a bare row in bank 0.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("bad row address `{s}`"));
        match s.split_once(':') {
            Some((b, r)) => Ok(RowAddress::new(
                b.trim().parse().map_err(|_| bad())?,
                r.trim().parse().map_err(|_| bad())?,
            )),
            None => Ok(RowAddress::new(0, s.trim().parse().map_err(|_| bad())?)),
        }
    }
}

/// Fixed-width bit vector; bit `i` is column `i` (little-endian).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BitWord {
    bits: u64,
    width: usize,
}

impl BitWord {
    /// Bits above `width` are discarded.
    pub fn new(bits: u64, width: usize) -> Self {
        assert!((1..=64).contains(&width), "word width {width} out of range");
        BitWord {
            bits: bits & mask(width),
            width,
        }
    }

    pub fn zeros(width: usize) -> Self {
        Self::new(0, width)
    }

    pub fn ones(width: usize) -> Self {
        Self::new(u64::MAX, width)
    }

    /// Parses an MSB-first binary string such as `"1100"`.
    pub fn from_binary(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() || s.len() > 64 {
            return Err(Error::Config(format!("bad binary word `{s}`")));
        }
        let bits = u64::from_str_radix(s, 2)
            .map_err(|_| Error::Config(format!("bad binary word `{s}`")))?;
        Ok(Self::new(bits, s.len()))
    }

    pub fn bits(&self) -> u64 {
        self.bits
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bit(&self, col: usize) -> bool {
        (self.bits >> col) & 1 == 1
    }

    pub fn count_ones(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn is_all_ones(&self) -> bool {
        self.bits == mask(self.width)
    }

    pub fn data_context(&self) -> DataContext {
        DataContext::of_word(self.bits, self.width)
    }

    fn from_fn(width: usize, mut f: impl FnMut(usize) -> bool) -> Self {
        let mut bits = 0u64;
        for col in 0..width {
            if f(col) {
                bits |= 1 << col;
            }
        }
        Self::new(bits, width)
    }
}

impl fmt::Display for BitWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for col in (0..self.width).rev() {
            f.write_str(if self.bit(col) { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl std::ops::BitOr for BitWord {
    type Output = BitWord;

    fn bitor(self, rhs: BitWord) -> BitWord {
        BitWord::new(self.bits | rhs.bits, self.width)
    }
}

impl std::ops::Not for BitWord {
    type Output = BitWord;

    fn not(self) -> BitWord {
        BitWord::new(!self.bits, self.width)
    }
}

/// Word-level array operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CimOp {
    Read,
    Write,
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

impl CimOp {
    pub const TWO_ROW: [CimOp; 5] = [
        CimOp::CimAnd,
        CimOp::CimOr,
        CimOp::CimNand,
        CimOp::CimNor,
        CimOp::CimXor,
    ];

    /// Cost class for in-memory operations; reads and writes depend on data.
    pub fn cost_class(self) -> Option<OpClass> {
        match self {
            CimOp::Read | CimOp::Write => None,
            CimOp::CimNot => Some(OpClass::CimNot),
            CimOp::CimAnd => Some(OpClass::CimAnd),
            CimOp::CimOr => Some(OpClass::CimOr),
            CimOp::CimNand => Some(OpClass::CimNand),
            CimOp::CimNor => Some(OpClass::CimNor),
            CimOp::CimXor => Some(OpClass::CimXor),
            CimOp::CimAdd => Some(OpClass::CimAdd),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            CimOp::Read => "Read",
            CimOp::Write => "Write",
            CimOp::CimNot => "CimNOT",
            CimOp::CimAnd => "CimAND",
            CimOp::CimOr => "CimOR",
            CimOp::CimNand => "CimNAND",
            CimOp::CimNor => "CimNOR",
            CimOp::CimXor => "CimXOR",
            CimOp::CimAdd => "CimADD",
        }
    }

    /// Boolean reference semantics of a two-row operation.
    pub fn apply(self, a: bool, b: bool) -> bool {
        match self {
            CimOp::CimAnd => a && b,
            CimOp::CimOr => a || b,
            CimOp::CimNand => !(a && b),
            CimOp::CimNor => !(a || b),
            CimOp::CimXor => a != b,
            _ => panic!("{} is not a two-row operation", self.name()),
        }
    }
}

impl fmt::Display for CimOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CimOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        const ALL: [CimOp; 9] = [
            CimOp::Read,
            CimOp::Write,
            CimOp::CimNot,
            CimOp::CimAnd,
            CimOp::CimOr,
            CimOp::CimNand,
            CimOp::CimNor,
            CimOp::CimXor,
            CimOp::CimAdd,
        ];
        ALL.into_iter()
            .find(|op| op.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownOp(s.to_string()))
    }
}

/// How a sensed current maps to an output bit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DecodeRule {
    /// `i > reference`
    Above(f64),
    /// `i <= reference`
    AtOrBelow(f64),
    /// `low < i <= high`
    Window { low: f64, high: f64 },
}

impl DecodeRule {
    pub fn decode(&self, current: f64) -> bool {
        match *self {
            DecodeRule::Above(r) => current > r,
            DecodeRule::AtOrBelow(r) => current <= r,
            DecodeRule::Window { low, high } => low < current && current <= high,
        }
    }
}

/// Sense-amplifier reference currents, µA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SenseConfig {
    pub i_ref_read: f64,
    pub i_ref_or: f64,
    pub i_ref_and: f64,
}

impl SenseConfig {
    /// References at the midpoints between adjacent nominal levels.
    pub fn midpoints(levels: &CurrentLevelModel) -> Self {
        SenseConfig {
            i_ref_read: (levels.i_ap + levels.i_p) / 2.0,
            i_ref_or: (levels.i_ap_ap + levels.i_ap_p) / 2.0,
            i_ref_and: (levels.i_ap_p + levels.i_p_p) / 2.0,
        }
    }

    pub fn validate(&self, levels: &CurrentLevelModel) -> Result<()> {
        if !(levels.i_ap < self.i_ref_read && self.i_ref_read < levels.i_p) {
            return Err(Error::InvalidSense("I_ref must lie in (I_AP, I_P)".into()));
        }
        if !(levels.i_ap_ap < self.i_ref_or && self.i_ref_or < levels.i_ap_p) {
            return Err(Error::InvalidSense(
                "I_ref-or must lie in (I_AP,AP, I_AP,P)".into(),
            ));
        }
        if !(levels.i_ap_p < self.i_ref_and && self.i_ref_and < levels.i_p_p) {
            return Err(Error::InvalidSense(
                "I_ref-and must lie in (I_AP,P, I_P,P)".into(),
            ));
        }
        Ok(())
    }

    pub fn rule(&self, op: CimOp) -> DecodeRule {
        match op {
            CimOp::Read | CimOp::Write => DecodeRule::Above(self.i_ref_read),
            CimOp::CimNot => DecodeRule::AtOrBelow(self.i_ref_read),
            CimOp::CimAnd => DecodeRule::Above(self.i_ref_and),
            CimOp::CimOr => DecodeRule::Above(self.i_ref_or),
            CimOp::CimNand => DecodeRule::AtOrBelow(self.i_ref_and),
            CimOp::CimNor => DecodeRule::AtOrBelow(self.i_ref_or),
            CimOp::CimXor | CimOp::CimAdd => DecodeRule::Window {
                low: self.i_ref_or,
                high: self.i_ref_and,
            },
        }
    }

    pub fn decode(&self, op: CimOp, current: f64) -> bool {
        self.rule(op).decode(current)
    }
}

/// What a thermal zone does to the cells it covers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ZoneEffect {
    Thermal(DisturbanceModel),
    /// The targeted senses of an AP,P pair always read as P,P: CimAND
    /// behaves as CimOR.
    ForcedFlip,
}

/// A set of rows that is disturbed while specific operations sense them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThermalZone {
    pub rows: Vec<RowAddress>,
    pub ops: Vec<CimOp>,
    pub effect: ZoneEffect,
}

impl ThermalZone {
    fn heats(&self, op: CimOp, addr: RowAddress) -> bool {
        self.ops.contains(&op) && self.rows.contains(&addr)
    }
}

/// Plain copy of array contents, safe to share for analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArraySnapshot {
    pub geometry: ArrayGeometry,
    pub rows: Vec<u64>,
}

impl ArraySnapshot {
    pub fn word(&self, addr: RowAddress) -> Result<BitWord> {
        self.geometry.check(addr)?;
        Ok(BitWord::new(
            self.rows[self.geometry.index(addr)],
            self.geometry.cols_per_row,
        ))
    }

    pub fn to_hex_dump(&self) -> String {
        let g = &self.geometry;
        let digits = g.cols_per_row.div_ceil(4);
        let mut out = format!(
            "# spincim array banks={} rows={} cols={}\n",
            g.banks, g.rows_per_bank, g.cols_per_row
        );
        for bank in 0..g.banks {
            for row in 0..g.rows_per_bank {
                let v = self.rows[g.index(RowAddress::new(bank, row))];
                out.push_str(&format!("{bank}:{row} {v:0digits$x}\n"));
            }
        }
        out
    }

    /// Parses a dump produced by [`ArraySnapshot::to_hex_dump`]. Rows that
    /// are not listed are zero.
    pub fn from_hex_dump(text: &str, geometry: ArrayGeometry) -> Result<Self> {
        geometry.validate()?;
        let mut rows = vec![0u64; geometry.banks * geometry.rows_per_bank];
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if let Some(header) = line.strip_prefix('#') {
                check_dump_header(header, &geometry)?;
                continue;
            }
            if line.is_empty() {
                continue;
            }
            let bad = |msg: &str| Error::Parse {
                line: n + 1,
                column: 1,
                message: msg.to_string(),
            };
            let (addr, value) = line
                .split_once(char::is_whitespace)
                .ok_or_else(|| bad("expected `bank:row value`"))?;
            let addr: RowAddress = addr.parse().map_err(|_| bad("bad address"))?;
            geometry.check(addr)?;
            let value = u64::from_str_radix(value.trim(), 16).map_err(|_| bad("bad hex value"))?;
            if value & !geometry.word_mask() != 0 {
                return Err(bad("value wider than a row"));
            }
            rows[geometry.index(addr)] = value;
        }
        Ok(ArraySnapshot { geometry, rows })
    }
}

fn check_dump_header(header: &str, geometry: &ArrayGeometry) -> Result<()> {
    for field in header.split_whitespace() {
        if let Some((key, value)) = field.split_once('=') {
            let expected = match key {
                "banks" => geometry.banks,
                "rows" => geometry.rows_per_bank,
                "cols" => geometry.cols_per_row,
                _ => continue,
            };
            if value.parse::<usize>().ok() != Some(expected) {
                return Err(Error::Config(format!(
                    "dump header {key}={value} does not match array geometry ({expected})"
                )));
            }
        }
    }
    Ok(())
}

/// The enhanced STT-MRAM array.
#[derive(Debug, Clone)]
pub struct CimArray {
    geometry: ArrayGeometry,
    levels: CurrentLevelModel,
    sense: SenseConfig,
    costs: CostTable,
    cells: Vec<u64>,
    rng: ChaCha8Rng,
    zone: Option<ThermalZone>,
    trace: ExecutionTrace,
    tracing: bool,
}

impl CimArray {
    pub fn new(
        geometry: ArrayGeometry,
        levels: CurrentLevelModel,
        sense: SenseConfig,
        costs: CostTable,
        seed: u64,
    ) -> Result<Self> {
        Self::with_rng(
            geometry,
            levels,
            sense,
            costs,
            ChaCha8Rng::seed_from_u64(seed),
        )
    }

    pub fn with_rng(
        geometry: ArrayGeometry,
        levels: CurrentLevelModel,
        sense: SenseConfig,
        costs: CostTable,
        rng: ChaCha8Rng,
    ) -> Result<Self> {
        geometry.validate()?;
        levels.validate()?;
        sense.validate(&levels)?;
        costs.validate()?;
        Ok(CimArray {
            geometry,
            levels,
            sense,
            costs,
            cells: vec![0; geometry.banks * geometry.rows_per_bank],
            rng,
            zone: None,
            trace: ExecutionTrace::new(),
            tracing: true,
        })
    }

    /// Default levels and midpoint references with the given noise.
    pub fn with_noise(geometry: ArrayGeometry, sigma: f64, seed: u64) -> Result<Self> {
        let levels = CurrentLevelModel::default().with_sigma(sigma);
        Self::new(
            geometry,
            levels,
            SenseConfig::midpoints(&levels),
            CostTable::default(),
            seed,
        )
    }

    /// Replaces the sensing noise source.
    pub fn reseed(&mut self, rng: ChaCha8Rng) {
        self.rng = rng;
    }

    pub fn geometry(&self) -> &ArrayGeometry {
        &self.geometry
    }

    pub fn levels(&self) -> &CurrentLevelModel {
        &self.levels
    }

    pub fn sense(&self) -> &SenseConfig {
        &self.sense
    }

    pub fn costs(&self) -> &CostTable {
        &self.costs
    }

    pub fn set_sense(&mut self, sense: SenseConfig) -> Result<()> {
        sense.validate(&self.levels)?;
        self.sense = sense;
        Ok(())
    }

    pub fn set_zone(&mut self, zone: Option<ThermalZone>) -> Result<()> {
        if let Some(z) = &zone {
            for &addr in &z.rows {
                self.geometry.check(addr)?;
            }
            if let ZoneEffect::Thermal(d) = z.effect {
                d.validate()?;
            }
        }
        self.zone = zone;
        Ok(())
    }

    pub fn zone(&self) -> Option<&ThermalZone> {
        self.zone.as_ref()
    }

    /// Turns event recording on or off; long Monte Carlo loops switch it off.
    pub fn set_tracing(&mut self, on: bool) {
        self.tracing = on;
    }

    pub fn trace(&self) -> &ExecutionTrace {
        &self.trace
    }

    pub fn take_trace(&mut self) -> ExecutionTrace {
        std::mem::take(&mut self.trace)
    }

    pub fn snapshot(&self) -> ArraySnapshot {
        ArraySnapshot {
            geometry: self.geometry,
            rows: self.cells.clone(),
        }
    }

    pub fn restore(&mut self, snapshot: &ArraySnapshot) -> Result<()> {
        if snapshot.geometry != self.geometry {
            return Err(Error::Config(
                "snapshot geometry does not match array".into(),
            ));
        }
        self.cells.clone_from(&snapshot.rows);
        Ok(())
    }

    /// Stored word, without sensing or cost.
    pub fn peek(&self, addr: RowAddress) -> Result<BitWord> {
        self.geometry.check(addr)?;
        Ok(BitWord::new(
            self.cells[self.geometry.index(addr)],
            self.geometry.cols_per_row,
        ))
    }

    pub fn cell(&self, addr: RowAddress, col: usize) -> Result<MtjState> {
        Ok(MtjState::from_bit(self.peek(addr)?.bit(col)))
    }

    fn record(&mut self, access: WordAccess, word: BitWord, channel: Channel) {
        if !self.tracing {
            return;
        }
        let (class, cost) = word_cost(
            access,
            word.data_context(),
            &self.costs,
            ArrayKind::Enhanced,
        )
        .expect("enhanced table covers every array operation");
        self.trace.record(class, word.data_context(), cost, channel);
    }

    fn check_width(&self, data: BitWord) -> Result<()> {
        if data.width() != self.geometry.cols_per_row {
            return Err(Error::WidthMismatch {
                expected: self.geometry.cols_per_row,
                got: data.width(),
            });
        }
        Ok(())
    }

    fn store(&mut self, addr: RowAddress, data: BitWord) {
        let i = self.geometry.index(addr);
        self.cells[i] = data.bits();
    }

    /// Places a word without sensing or cost, e.g. memory that is already
    /// resident when a program starts.
    pub fn preload(&mut self, addr: RowAddress, data: BitWord) -> Result<()> {
        self.geometry.check(addr)?;
        self.check_width(data)?;
        self.store(addr, data);
        Ok(())
    }

    /// Bus write of a word. Writes are fault-free.
    pub fn write_word(&mut self, addr: RowAddress, data: BitWord) -> Result<()> {
        self.geometry.check(addr)?;
        self.check_width(data)?;
        self.store(addr, data);
        self.record(WordAccess::Write, data, Channel::Bus);
        Ok(())
    }

    /// Bus read: each column's current is compared with `I_ref`.
    pub fn read_word(&mut self, addr: RowAddress) -> Result<BitWord> {
        let out = self.sense_single(CimOp::Read, addr)?;
        self.record(WordAccess::Read, out, Channel::Bus);
        Ok(out)
    }

    pub fn cim_not(&mut self, a: RowAddress) -> Result<BitWord> {
        let out = self.sense_single(CimOp::CimNot, a)?;
        self.record(WordAccess::Cim(OpClass::CimNot), out, Channel::InMemory);
        Ok(out)
    }

    /// CimNOT with the result written back to `dest` as part of the same
    /// in-memory operation.
    pub fn cim_not_into(&mut self, a: RowAddress, dest: RowAddress) -> Result<BitWord> {
        self.geometry.check(dest)?;
        let out = self.cim_not(a)?;
        self.store(dest, out);
        Ok(out)
    }

    fn sense_single(&mut self, op: CimOp, addr: RowAddress) -> Result<BitWord> {
        self.geometry.check(addr)?;
        let stored = self.peek(addr)?;
        let disturbance = match &self.zone {
            Some(z) if z.heats(op, addr) => match z.effect {
                ZoneEffect::Thermal(d) => d,
                ZoneEffect::ForcedFlip => DisturbanceModel::certain_collapse(),
            },
            _ => DisturbanceModel::none(),
        };
        let rule = self.sense.rule(op);
        let levels = self.levels;
        let rng = &mut self.rng;
        Ok(BitWord::from_fn(stored.width(), |col| {
            let state = MtjState::from_bit(stored.bit(col));
            rule.decode(sample_single_current(state, &levels, &disturbance, rng))
        }))
    }

    /// One summed-current sample per column for rows `a` and `b`.
    fn sense_pair(&mut self, op: CimOp, a: RowAddress, b: RowAddress) -> Result<Vec<f64>> {
        self.validate_mapping(a, b)?;
        let wa = self.peek(a)?;
        let wb = self.peek(b)?;
        let (hot_a, hot_b, effect) = match &self.zone {
            Some(z) => (z.heats(op, a), z.heats(op, b), Some(z.effect)),
            None => (false, false, None),
        };
        let levels = self.levels;
        let rng = &mut self.rng;
        let none = DisturbanceModel::none();
        let forced = DisturbanceModel::certain_collapse();
        Ok((0..wa.width())
            .map(|col| {
                let states = (
                    MtjState::from_bit(wa.bit(col)),
                    MtjState::from_bit(wb.bit(col)),
                );
                match effect {
                    Some(ZoneEffect::Thermal(d)) if hot_a || hot_b => {
                        sample_pair_current_heated(states, [hot_a, hot_b], &levels, &d, rng)
                    }
                    Some(ZoneEffect::ForcedFlip)
                        if (hot_a || hot_b)
                            && PairLevel::of(states.0, states.1) == PairLevel::ApP =>
                    {
                        sample_pair_current_heated(states, [true, true], &levels, &forced, rng)
                    }
                    _ => sample_pair_current_heated(states, [false, false], &levels, &none, rng),
                }
            })
            .collect())
    }

    /// Operands of a two-row operation must share a bank and differ in row.
    pub fn validate_mapping(&self, a: RowAddress, b: RowAddress) -> Result<()> {
        validate_mapping(&self.geometry, a, b)
    }

    pub fn cim_two_row(&mut self, op: CimOp, a: RowAddress, b: RowAddress) -> Result<BitWord> {
        if !CimOp::TWO_ROW.contains(&op) {
            return Err(Error::UnknownOp(format!("{op} is not a two-row operation")));
        }
        let currents = self.sense_pair(op, a, b)?;
        let rule = self.sense.rule(op);
        let out = BitWord::from_fn(currents.len(), |col| rule.decode(currents[col]));
        self.record(
            WordAccess::Cim(op.cost_class().expect("cim op")),
            out,
            Channel::InMemory,
        );
        Ok(out)
    }

    pub fn cim_two_row_into(
        &mut self,
        op: CimOp,
        a: RowAddress,
        b: RowAddress,
        dest: RowAddress,
    ) -> Result<BitWord> {
        self.geometry.check(dest)?;
        let out = self.cim_two_row(op, a, b)?;
        self.store(dest, out);
        Ok(out)
    }

    /// `(a CimAND b) OR (a CimNOR b)`. Both partial results go to the scratch
    /// rows; the final OR happens in the controller and cannot fault.
    pub fn cim_xnor(
        &mut self,
        a: RowAddress,
        b: RowAddress,
        scratch: [RowAddress; 2],
    ) -> Result<BitWord> {
        self.validate_mapping(a, b)?;
        for s in scratch {
            self.geometry.check(s)?;
            if s == a || s == b {
                return Err(Error::MappingViolation(format!(
                    "scratch row {s} overlaps an operand row"
                )));
            }
        }
        if scratch[0] == scratch[1] {
            return Err(Error::MappingViolation(
                "scratch rows must be distinct".into(),
            ));
        }
        let and = self.cim_two_row_into(CimOp::CimAnd, a, b, scratch[0])?;
        let nor = self.cim_two_row_into(CimOp::CimNor, a, b, scratch[1])?;
        Ok(and | nor)
    }

    /// Word addition `dest = a + b mod 2^width`, returning the carry out.
    ///
    /// Bit-serial ripple: each column is sensed once; the XOR window gives
    /// the half-sum, the AND and OR decodes of the same sample give
    /// generate/propagate for the carry held in the controller.
    pub fn cim_add(&mut self, a: RowAddress, b: RowAddress, dest: RowAddress) -> Result<bool> {
        self.geometry.check(dest)?;
        let currents = self.sense_pair(CimOp::CimAdd, a, b)?;
        let sense = self.sense;
        let mut carry = false;
        let sum = BitWord::from_fn(currents.len(), |col| {
            let i = currents[col];
            let half = sense.decode(CimOp::CimXor, i);
            let generate = sense.decode(CimOp::CimAnd, i);
            let propagate = sense.decode(CimOp::CimOr, i);
            let s = half != carry;
            carry = generate || (propagate && carry);
            s
        });
        self.store(dest, sum);
        self.record(WordAccess::Cim(OpClass::CimAdd), sum, Channel::InMemory);
        Ok(carry)
    }
}

pub fn validate_mapping(geometry: &ArrayGeometry, a: RowAddress, b: RowAddress) -> Result<()> {
    geometry.check(a)?;
    geometry.check(b)?;
    if a.bank != b.bank {
        return Err(Error::MappingViolation(format!(
            "operands {a} and {b} are not in the same bank"
        )));
    }
    if a.row == b.row {
        return Err(Error::MappingViolation(format!(
            "operands {a} and {b} are not mapped to different rows"
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(width: usize) -> CimArray {
        CimArray::with_noise(ArrayGeometry::new(2, 16, width).unwrap(), 0.0, 0).unwrap()
    }

    fn r(row: usize) -> RowAddress {
        RowAddress::new(0, row)
    }

    fn w(s: &str) -> BitWord {
        BitWord::from_binary(s).unwrap()
    }

    #[test]
    fn write_read_round_trip() {
        let mut arr = quiet(16);
        arr.write_word(r(3), BitWord::new(0xA5A5, 16)).unwrap();
        assert_eq!(arr.read_word(r(3)).unwrap(), BitWord::new(0xA5A5, 16));
    }

    #[test]
    fn all_ones_are_p_cells() {
        let mut arr = quiet(16);
        arr.write_word(r(0), BitWord::ones(16)).unwrap();
        for col in 0..16 {
            assert_eq!(arr.cell(r(0), col).unwrap(), MtjState::P);
        }
    }

    #[test]
    fn width_mismatch_rejected() {
        let mut arr = quiet(16);
        assert!(matches!(
            arr.write_word(r(0), BitWord::new(1, 8)),
            Err(Error::WidthMismatch {
                expected: 16,
                got: 8
            })
        ));
    }

    #[test]
    fn out_of_bounds() {
        let mut arr = quiet(4);
        assert!(matches!(
            arr.read_word(RowAddress::new(0, 16)),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(matches!(
            arr.read_word(RowAddress::new(2, 0)),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn two_row_truth_tables() {
        let mut arr = quiet(4);
        arr.write_word(r(0), w("1100")).unwrap();
        arr.write_word(r(1), w("1010")).unwrap();
        assert_eq!(
            arr.cim_two_row(CimOp::CimAnd, r(0), r(1)).unwrap(),
            w("1000")
        );
        assert_eq!(
            arr.cim_two_row(CimOp::CimOr, r(0), r(1)).unwrap(),
            w("1110")
        );
        assert_eq!(
            arr.cim_two_row(CimOp::CimXor, r(0), r(1)).unwrap(),
            w("0110")
        );
        assert_eq!(
            arr.cim_two_row(CimOp::CimNand, r(0), r(1)).unwrap(),
            w("0111")
        );
        assert_eq!(
            arr.cim_two_row(CimOp::CimNor, r(0), r(1)).unwrap(),
            w("0001")
        );
    }

    #[test]
    fn not_cases() {
        let mut arr = quiet(4);
        arr.write_word(r(0), w("1010")).unwrap();
        assert_eq!(arr.cim_not(r(0)).unwrap(), w("0101"));
        arr.cim_not_into(r(0), r(1)).unwrap();
        assert_eq!(arr.cim_not(r(1)).unwrap(), w("1010"));
        arr.write_word(r(2), w("0000")).unwrap();
        assert_eq!(arr.cim_not(r(2)).unwrap(), w("1111"));
    }

    #[test]
    fn mapping_rules() {
        let g = ArrayGeometry::default();
        assert!(validate_mapping(&g, r(3), r(7)).is_ok());
        let same_row = validate_mapping(&g, r(3), r(3)).unwrap_err();
        assert!(same_row.to_string().contains("different rows"));
        let g2 = ArrayGeometry::new(2, 8, 8).unwrap();
        let banks =
            validate_mapping(&g2, RowAddress::new(0, 1), RowAddress::new(1, 2)).unwrap_err();
        assert!(banks.to_string().contains("same bank"));
    }

    #[test]
    fn xor_with_itself_rejected() {
        let mut arr = quiet(4);
        assert!(matches!(
            arr.cim_two_row(CimOp::CimXor, r(2), r(2)),
            Err(Error::MappingViolation(_))
        ));
    }

    #[test]
    fn xnor_cases() {
        let mut arr = quiet(4);
        arr.write_word(r(0), w("1100")).unwrap();
        arr.write_word(r(1), w("1010")).unwrap();
        assert_eq!(arr.cim_xnor(r(0), r(1), [r(4), r(5)]).unwrap(), w("1001"));
        arr.write_word(r(2), w("1100")).unwrap();
        assert_eq!(arr.cim_xnor(r(0), r(2), [r(4), r(5)]).unwrap(), w("1111"));
        assert!(arr.cim_xnor(r(0), r(1), [r(0), r(5)]).is_err());
        assert!(arr.cim_xnor(r(0), r(1), [r(5), r(5)]).is_err());
    }

    #[test]
    fn add_cases() {
        let mut arr = quiet(16);
        arr.write_word(r(0), BitWord::zeros(16)).unwrap();
        arr.write_word(r(1), BitWord::new(0x1234, 16)).unwrap();
        assert!(!arr.cim_add(r(0), r(1), r(2)).unwrap());
        assert_eq!(arr.peek(r(2)).unwrap().bits(), 0x1234);
        arr.write_word(r(0), BitWord::new(0xFFFF, 16)).unwrap();
        arr.write_word(r(1), BitWord::new(1, 16)).unwrap();
        assert!(arr.cim_add(r(0), r(1), r(2)).unwrap());
        assert_eq!(arr.peek(r(2)).unwrap().bits(), 0);
    }

    #[test]
    fn cim_ops_record_one_in_memory_event() {
        let mut arr = quiet(4);
        arr.write_word(r(0), w("1100")).unwrap();
        arr.write_word(r(1), w("1010")).unwrap();
        arr.take_trace();
        arr.cim_add(r(0), r(1), r(2)).unwrap();
        let t = arr.take_trace();
        assert_eq!(t.len(), 1);
        assert_eq!(t.events[0].kind, OpClass::CimAdd);
        assert_eq!(t.events[0].channel, Channel::InMemory);
    }

    #[test]
    fn forced_flip_turns_and_into_or() {
        let mut arr = quiet(4);
        arr.write_word(r(0), w("1100")).unwrap();
        arr.write_word(r(1), w("1010")).unwrap();
        arr.set_zone(Some(ThermalZone {
            rows: vec![r(0), r(1)],
            ops: vec![CimOp::CimAnd],
            effect: ZoneEffect::ForcedFlip,
        }))
        .unwrap();
        assert_eq!(
            arr.cim_two_row(CimOp::CimAnd, r(0), r(1)).unwrap(),
            w("1110")
        );
        // other ops are untouched
        assert_eq!(
            arr.cim_two_row(CimOp::CimNor, r(0), r(1)).unwrap(),
            w("0001")
        );
    }

    #[test]
    fn hex_dump_round_trip() {
        let mut arr = quiet(16);
        arr.write_word(r(1), BitWord::new(0xBEEF, 16)).unwrap();
        arr.write_word(RowAddress::new(1, 15), BitWord::new(0x0001, 16))
            .unwrap();
        let dump = arr.snapshot().to_hex_dump();
        assert!(dump.contains("0:1 beef"));
        let back = ArraySnapshot::from_hex_dump(&dump, *arr.geometry()).unwrap();
        assert_eq!(back, arr.snapshot());
        let other = ArrayGeometry::new(1, 16, 16).unwrap();
        assert!(ArraySnapshot::from_hex_dump(&dump, other).is_err());
    }

    #[test]
    fn sense_config_rejects_misplaced_references() {
        let levels = CurrentLevelModel::default();
        let mut s = SenseConfig::midpoints(&levels);
        assert_eq!(
            (s.i_ref_read, s.i_ref_or, s.i_ref_and),
            (12.75, 18.6, 21.45)
        );
        s.validate(&levels).unwrap();
        s.i_ref_and = 20.0;
        assert!(s.validate(&levels).is_err());
    }

    #[test]
    fn misread_rate_is_negligible_at_default_noise() {
        // Q(2.75 / 0.485) ~ 7e-9, so a million reads of AP cells see none.
        let levels = CurrentLevelModel::default();
        let reference = SenseConfig::midpoints(&levels).i_ref_read;
        let none = DisturbanceModel::none();
        let errors = crate::stats::count_trials(1_000_000, 9, |rng, _| {
            sample_single_current(MtjState::AP, &levels, &none, rng) > reference
        });
        assert!((errors as f64) / 1e6 < 1e-7);
    }
}
