//! A minimal load/store machine with in-memory instructions.
//!
//! # Assembly format
//!
//! One statement per line. `;` and `#` start comments. Mnemonics are case
//! insensitive.
//!
//! ```text
//! .sym  NAME ADDR          ; bind a symbolic row
//! .data ADDR VALUE         ; word resident before the program starts
//! LOAD  Rd, ADDR
//! STORE Rs, ADDR
//! ADD   Rd, Ra, Rb         ; also AND, OR, XOR
//! NOT   Rd, Ra
//! CimADD A, B, D           ; also CimAND, CimOR, CimXOR, CimNAND, CimNOR
//! CimNOT A, D
//! HALT
//! ```
//!
//! `ADDR` is `bank:row`, `[bank:row]`, `@row` (bank 0) or a symbol. Symbols
//! that are never bound with `.sym` are given the lowest free rows of bank 0
//! in order of first use. `VALUE` is decimal, `0x` hex or `0b` binary.
//! Registers are `R0`..`R7`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::array::{ArrayGeometry, BitWord, CimArray, CimOp, RowAddress, SenseConfig};
use crate::cost::{Channel, ExecutionTrace};
use crate::error::{Error, Result};

pub const REGISTER_COUNT: usize = 8;
/// Registers clobbered by [`lower_to_conventional`].
pub const LOWERING_SCRATCH: [Reg; 2] = [Reg(6), Reg(7)];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Reg(pub u8);

impl fmt::Display for Reg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "R{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Opcode {
    Load,
    Store,
    Add,
    And,
    Or,
    Xor,
    Not,
    CimAdd,
    CimAnd,
    CimOr,
    CimXor,
    CimNot,
    CimNand,
    CimNor,
    Halt,
}

impl Opcode {
    const ALL: [Opcode; 15] = [
        Opcode::Load,
        Opcode::Store,
        Opcode::Add,
        Opcode::And,
        Opcode::Or,
        Opcode::Xor,
        Opcode::Not,
        Opcode::CimAdd,
        Opcode::CimAnd,
        Opcode::CimOr,
        Opcode::CimXor,
        Opcode::CimNot,
        Opcode::CimNand,
        Opcode::CimNor,
        Opcode::Halt,
    ];

    pub fn mnemonic(self) -> &'static str {
        match self {
            Opcode::Load => "LOAD",
            Opcode::Store => "STORE",
            Opcode::Add => "ADD",
            Opcode::And => "AND",
            Opcode::Or => "OR",
            Opcode::Xor => "XOR",
            Opcode::Not => "NOT",
            Opcode::CimAdd => "CimADD",
            Opcode::CimAnd => "CimAND",
            Opcode::CimOr => "CimOR",
            Opcode::CimXor => "CimXOR",
            Opcode::CimNot => "CimNOT",
            Opcode::CimNand => "CimNAND",
            Opcode::CimNor => "CimNOR",
            Opcode::Halt => "HALT",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.mnemonic().eq_ignore_ascii_case(s))
    }

    pub fn is_cim(self) -> bool {
        matches!(
            self,
            Opcode::CimAdd
                | Opcode::CimAnd
                | Opcode::CimOr
                | Opcode::CimXor
                | Opcode::CimNot
                | Opcode::CimNand
                | Opcode::CimNor
        )
    }

    fn cim_op(self) -> Option<CimOp> {
        Some(match self {
            Opcode::CimAdd => CimOp::CimAdd,
            Opcode::CimAnd => CimOp::CimAnd,
            Opcode::CimOr => CimOp::CimOr,
            Opcode::CimXor => CimOp::CimXor,
            Opcode::CimNot => CimOp::CimNot,
            Opcode::CimNand => CimOp::CimNand,
            Opcode::CimNor => CimOp::CimNor,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AluOp {
    Add,
    And,
    Or,
    Xor,
}

impl AluOp {
    fn opcode(self) -> Opcode {
        match self {
            AluOp::Add => Opcode::Add,
            AluOp::And => Opcode::And,
            AluOp::Or => Opcode::Or,
            AluOp::Xor => Opcode::Xor,
        }
    }

    fn apply(self, a: u64, b: u64) -> u64 {
        match self {
            AluOp::Add => a.wrapping_add(b),
            AluOp::And => a & b,
            AluOp::Or => a | b,
            AluOp::Xor => a ^ b,
        }
    }
}

/// CPU instructions use registers; in-memory instructions carry only row
/// addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Instruction {
    Load {
        rd: Reg,
        addr: RowAddress,
    },
    Store {
        rs: Reg,
        addr: RowAddress,
    },
    Alu {
        op: AluOp,
        rd: Reg,
        ra: Reg,
        rb: Reg,
    },
    Not {
        rd: Reg,
        ra: Reg,
    },
    /// Two-row in-memory operation (`CimADD`, `CimAND`, ...).
    Cim {
        op: CimOp,
        a: RowAddress,
        b: RowAddress,
        dest: RowAddress,
    },
    CimNot {
        a: RowAddress,
        dest: RowAddress,
    },
    Halt,
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        match self {
            Instruction::Load { .. } => Opcode::Load,
            Instruction::Store { .. } => Opcode::Store,
            Instruction::Alu { op, .. } => op.opcode(),
            Instruction::Not { .. } => Opcode::Not,
            Instruction::Cim { op, .. } => match op {
                CimOp::CimAdd => Opcode::CimAdd,
                CimOp::CimAnd => Opcode::CimAnd,
                CimOp::CimOr => Opcode::CimOr,
                CimOp::CimXor => Opcode::CimXor,
                CimOp::CimNand => Opcode::CimNand,
                CimOp::CimNor => Opcode::CimNor,
                CimOp::CimNot => Opcode::CimNot,
                CimOp::Read | CimOp::Write => unreachable!("not an instruction"),
            },
            Instruction::CimNot { .. } => Opcode::CimNot,
            Instruction::Halt => Opcode::Halt,
        }
    }
}

impl fmt::Display for Instruction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let m = self.opcode().mnemonic();
        match self {
            Instruction::Load { rd, addr } => write!(f, "{m} {rd}, {addr}"),
            Instruction::Store { rs, addr } => write!(f, "{m} {rs}, {addr}"),
            Instruction::Alu { rd, ra, rb, .. } => write!(f, "{m} {rd}, {ra}, {rb}"),
            Instruction::Not { rd, ra } => write!(f, "{m} {rd}, {ra}"),
            Instruction::Cim { a, b, dest, .. } => write!(f, "{m} {a}, {b}, {dest}"),
            Instruction::CimNot { a, dest } => write!(f, "{m} {a}, {dest}"),
            Instruction::Halt => f.write_str(m),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Program {
    pub instructions: Vec<Instruction>,
    /// Words resident in the array before the first instruction.
    pub data: Vec<(RowAddress, u64)>,
}

impl Program {
    pub fn new(instructions: Vec<Instruction>) -> Self {
        Program {
            instructions,
            data: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn has_cim(&self) -> bool {
        self.instructions.iter().any(|i| i.opcode().is_cim())
    }

    /// Assembly text that [`assemble`] maps back to this program.
    pub fn disassemble(&self) -> String {
        let mut out = String::new();
        for (addr, value) in &self.data {
            out.push_str(&format!(".data {addr} {value:#x}\n"));
        }
        for ins in &self.instructions {
            out.push_str(&format!("{ins}\n"));
        }
        out
    }
}

#[derive(Debug, Clone)]
struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn tokenize(line: &str) -> Vec<Token<'_>> {
    let code = line.split([';', '#']).next().unwrap_or("");
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in code.char_indices() {
        let sep = c.is_whitespace() || c == ',';
        match (sep, start) {
            (true, Some(s)) => {
                out.push(Token {
                    text: &code[s..i],
                    column: s + 1,
                });
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token {
            text: &code[s..],
            column: s + 1,
        });
    }
    out
}

#[derive(Debug, Clone)]
enum AddrRef {
    Fixed(RowAddress),
    Symbol(String),
}

#[derive(Debug, Clone)]
enum Stmt {
    Ins(Opcode, Vec<Operand>),
    Data(AddrRef, u64),
}

#[derive(Debug, Clone)]
enum Operand {
    Reg(Reg),
    Addr(AddrRef),
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        column,
        message: message.into(),
    }
}

fn parse_reg(t: &str) -> Option<Reg> {
    let digits = t.strip_prefix('R').or_else(|| t.strip_prefix('r'))?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let n: usize = digits.parse().ok()?;
    (n < REGISTER_COUNT).then_some(Reg(n as u8))
}

fn parse_addr(t: &str) -> Option<AddrRef> {
    let inner = t
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .unwrap_or(t);
    if let Some(row) = inner.strip_prefix('@') {
        return row
            .parse()
            .ok()
            .map(|r| AddrRef::Fixed(RowAddress::new(0, r)));
    }
    if inner.contains(':') {
        return inner.parse().ok().map(AddrRef::Fixed);
    }
    let reg_like = inner.len() > 1
        && inner.starts_with(['R', 'r'])
        && inner[1..].bytes().all(|b| b.is_ascii_digit());
    if reg_like {
        return None;
    }
    let mut chars = inner.chars();
    let first = chars.next()?;
    if (first.is_ascii_alphabetic() || first == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
    {
        return Some(AddrRef::Symbol(inner.to_string()));
    }
    None
}

fn parse_value(t: &str) -> Option<u64> {
    if let Some(h) = t.strip_prefix("0x").or_else(|| t.strip_prefix("0X")) {
        u64::from_str_radix(h, 16).ok()
    } else if let Some(b) = t.strip_prefix("0b").or_else(|| t.strip_prefix("0B")) {
        u64::from_str_radix(b, 2).ok()
    } else {
        t.parse().ok()
    }
}

/// Parses assembly text into a program.
pub fn assemble(text: &str) -> Result<Program> {
    let mut stmts = Vec::new();
    let mut bound: BTreeMap<String, RowAddress> = BTreeMap::new();

    for (idx, line) in text.lines().enumerate() {
        let ln = idx + 1;
        let toks = tokenize(line);
        let Some(head) = toks.first() else { continue };
        let expect = |n: usize| -> Result<()> {
            if toks.len() - 1 != n {
                let col = toks.get(n + 1).map_or(head.column, |t| t.column);
                Err(parse_err(
                    ln,
                    col,
                    format!(
                        "`{}` takes {n} operand(s), found {}",
                        head.text,
                        toks.len() - 1
                    ),
                ))
            } else {
                Ok(())
            }
        };
        let addr_at = |i: usize| -> Result<AddrRef> {
            parse_addr(toks[i].text).ok_or_else(|| {
                parse_err(
                    ln,
                    toks[i].column,
                    format!("bad address `{}`", toks[i].text),
                )
            })
        };
        let reg_at = |i: usize| -> Result<Reg> {
            parse_reg(toks[i].text).ok_or_else(|| {
                parse_err(
                    ln,
                    toks[i].column,
                    format!("bad register `{}`", toks[i].text),
                )
            })
        };

        if head.text.eq_ignore_ascii_case(".sym") {
            expect(2)?;
            let name = &toks[1];
            let Some(AddrRef::Symbol(sym)) = parse_addr(name.text) else {
                return Err(parse_err(
                    ln,
                    name.column,
                    format!("bad symbol `{}`", name.text),
                ));
            };
            let AddrRef::Fixed(addr) = addr_at(2)? else {
                return Err(parse_err(
                    ln,
                    toks[2].column,
                    "symbol must bind a numeric address",
                ));
            };
            if bound.insert(sym.clone(), addr).is_some() {
                return Err(parse_err(
                    ln,
                    name.column,
                    format!("symbol `{sym}` bound twice"),
                ));
            }
            continue;
        }
        if head.text.eq_ignore_ascii_case(".data") {
            expect(2)?;
            let addr = addr_at(1)?;
            let value = parse_value(toks[2].text).ok_or_else(|| {
                parse_err(ln, toks[2].column, format!("bad value `{}`", toks[2].text))
            })?;
            stmts.push(Stmt::Data(addr, value));
            continue;
        }

        let op = Opcode::parse(head.text).ok_or_else(|| {
            parse_err(ln, head.column, format!("unknown mnemonic `{}`", head.text))
        })?;
        let operands = match op {
            Opcode::Halt => {
                expect(0)?;
                vec![]
            }
            Opcode::Load | Opcode::Store => {
                expect(2)?;
                vec![Operand::Reg(reg_at(1)?), Operand::Addr(addr_at(2)?)]
            }
            Opcode::Add | Opcode::And | Opcode::Or | Opcode::Xor => {
                expect(3)?;
                vec![
                    Operand::Reg(reg_at(1)?),
                    Operand::Reg(reg_at(2)?),
                    Operand::Reg(reg_at(3)?),
                ]
            }
            Opcode::Not => {
                expect(2)?;
                vec![Operand::Reg(reg_at(1)?), Operand::Reg(reg_at(2)?)]
            }
            Opcode::CimNot => {
                expect(2)?;
                vec![Operand::Addr(addr_at(1)?), Operand::Addr(addr_at(2)?)]
            }
            _ => {
                expect(3)?;
                vec![
                    Operand::Addr(addr_at(1)?),
                    Operand::Addr(addr_at(2)?),
                    Operand::Addr(addr_at(3)?),
                ]
            }
        };
        stmts.push(Stmt::Ins(op, operands));
    }

    // allocate unbound symbols to the lowest free rows of bank 0
    let mut used: BTreeSet<RowAddress> = bound.values().copied().collect();
    let mut order = Vec::new();
    let mut note = |a: &AddrRef, used: &mut BTreeSet<RowAddress>| match a {
        AddrRef::Fixed(addr) => {
            used.insert(*addr);
        }
        AddrRef::Symbol(s) => {
            if !bound.contains_key(s) && !order.contains(s) {
                order.push(s.clone());
            }
        }
    };
    for st in &stmts {
        match st {
            Stmt::Data(a, _) => note(a, &mut used),
            Stmt::Ins(_, ops) => {
                for o in ops {
                    if let Operand::Addr(a) = o {
                        note(a, &mut used);
                    }
                }
            }
        }
    }
    let mut next = 0usize;
    for sym in order {
        while used.contains(&RowAddress::new(0, next)) {
            next += 1;
        }
        let addr = RowAddress::new(0, next);
        used.insert(addr);
        bound.insert(sym, addr);
    }
    let resolve = |a: &AddrRef| match a {
        AddrRef::Fixed(addr) => *addr,
        AddrRef::Symbol(s) => bound[s],
    };

    let mut program = Program::default();
    for st in stmts {
        match st {
            Stmt::Data(a, v) => program.data.push((resolve(&a), v)),
            Stmt::Ins(op, ops) => {
                let reg = |i: usize| match &ops[i] {
                    Operand::Reg(r) => *r,
                    Operand::Addr(_) => unreachable!(),
                };
                let addr = |i: usize| match &ops[i] {
                    Operand::Addr(a) => resolve(a),
                    Operand::Reg(_) => unreachable!(),
                };
                let ins = match op {
                    Opcode::Halt => Instruction::Halt,
                    Opcode::Load => Instruction::Load {
                        rd: reg(0),
                        addr: addr(1),
                    },
                    Opcode::Store => Instruction::Store {
                        rs: reg(0),
                        addr: addr(1),
                    },
                    Opcode::Add => Instruction::Alu {
                        op: AluOp::Add,
                        rd: reg(0),
                        ra: reg(1),
                        rb: reg(2),
                    },
                    Opcode::And => Instruction::Alu {
                        op: AluOp::And,
                        rd: reg(0),
                        ra: reg(1),
                        rb: reg(2),
                    },
                    Opcode::Or => Instruction::Alu {
                        op: AluOp::Or,
                        rd: reg(0),
                        ra: reg(1),
                        rb: reg(2),
                    },
                    Opcode::Xor => Instruction::Alu {
                        op: AluOp::Xor,
                        rd: reg(0),
                        ra: reg(1),
                        rb: reg(2),
                    },
                    Opcode::Not => Instruction::Not {
                        rd: reg(0),
                        ra: reg(1),
                    },
                    Opcode::CimNot => Instruction::CimNot {
                        a: addr(0),
                        dest: addr(1),
                    },
                    cim => Instruction::Cim {
                        op: cim.cim_op().expect("cim opcode"),
                        a: addr(0),
                        b: addr(1),
                        dest: addr(2),
                    },
                };
                program.instructions.push(ins);
            }
        }
    }
    Ok(program)
}

/// Counters for one run. `memory_access_count` is bus transfers plus
/// in-memory operations.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecStats {
    pub instruction_count: usize,
    pub memory_access_count: usize,
    pub bus_transfers: usize,
    pub in_memory_ops: usize,
    pub total_delay_ns: f64,
    pub total_energy_fj: f64,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub stats: ExecStats,
    pub trace: ExecutionTrace,
}

#[derive(Debug, Clone)]
pub struct Machine {
    pub array: CimArray,
    pub registers: [u64; REGISTER_COUNT],
    pub step_budget: usize,
}

impl Machine {
    pub fn new(array: CimArray) -> Self {
        Machine {
            array,
            registers: [0; REGISTER_COUNT],
            step_budget: 1_000_000,
        }
    }

    pub fn with_step_budget(mut self, budget: usize) -> Self {
        self.step_budget = budget;
        self
    }

    /// What a reverse engineer can recover from the silicon.
    pub fn description(&self) -> MachineDescription {
        MachineDescription::of_array(self.array.geometry(), self.array.sense())
    }
}

/// Executes `program` until HALT or the end of the instruction list.
///
/// HALT is not counted as an executed instruction.
pub fn run(program: &Program, machine: &mut Machine) -> Result<RunOutcome> {
    let width = machine.array.geometry().cols_per_row;
    let mask = machine.array.geometry().word_mask();
    for &(addr, value) in &program.data {
        machine.array.preload(addr, BitWord::new(value, width))?;
    }
    machine.array.take_trace();

    let mut stats = ExecStats::default();
    let mut pc = 0usize;
    let mut steps = 0usize;
    while let Some(ins) = program.instructions.get(pc) {
        if matches!(ins, Instruction::Halt) {
            break;
        }
        if steps >= machine.step_budget {
            return Err(Error::StepBudgetExceeded(machine.step_budget));
        }
        steps += 1;
        let regs = &mut machine.registers;
        match *ins {
            Instruction::Load { rd, addr } => {
                regs[rd.0 as usize] = machine.array.read_word(addr)?.bits();
            }
            Instruction::Store { rs, addr } => {
                machine
                    .array
                    .write_word(addr, BitWord::new(regs[rs.0 as usize], width))?;
            }
            Instruction::Alu { op, rd, ra, rb } => {
                regs[rd.0 as usize] = op.apply(regs[ra.0 as usize], regs[rb.0 as usize]) & mask;
            }
            Instruction::Not { rd, ra } => {
                regs[rd.0 as usize] = !regs[ra.0 as usize] & mask;
            }
            Instruction::Cim {
                op: CimOp::CimAdd,
                a,
                b,
                dest,
            } => {
                machine.array.cim_add(a, b, dest)?;
            }
            Instruction::Cim { op, a, b, dest } => {
                machine.array.cim_two_row_into(op, a, b, dest)?;
            }
            Instruction::CimNot { a, dest } => {
                machine.array.cim_not_into(a, dest)?;
            }
            Instruction::Halt => unreachable!(),
        }
        stats.instruction_count += 1;
        pc += 1;
    }

    let trace = machine.array.take_trace();
    stats.bus_transfers = trace.count_channel(Channel::Bus);
    stats.in_memory_ops = trace.count_channel(Channel::InMemory);
    stats.memory_access_count = stats.bus_transfers + stats.in_memory_ops;
    stats.total_delay_ns = trace.total_delay();
    stats.total_energy_fj = trace.total_energy();
    Ok(RunOutcome { stats, trace })
}

/// Replaces every in-memory instruction with its LOAD / op / STORE
/// equivalent. Uses R6 and R7 as scratch.
pub fn lower_to_conventional(program: &Program) -> Program {
    let [s0, s1] = LOWERING_SCRATCH;
    let mut out = Vec::with_capacity(program.instructions.len() * 4);
    for ins in &program.instructions {
        match *ins {
            Instruction::Cim { op, a, b, dest } => {
                out.push(Instruction::Load { rd: s0, addr: a });
                out.push(Instruction::Load { rd: s1, addr: b });
                let (alu, invert) = match op {
                    CimOp::CimAdd => (AluOp::Add, false),
                    CimOp::CimAnd => (AluOp::And, false),
                    CimOp::CimOr => (AluOp::Or, false),
                    CimOp::CimXor => (AluOp::Xor, false),
                    CimOp::CimNand => (AluOp::And, true),
                    CimOp::CimNor => (AluOp::Or, true),
                    other => unreachable!("{other} is not a two-row instruction"),
                };
                out.push(Instruction::Alu {
                    op: alu,
                    rd: s0,
                    ra: s0,
                    rb: s1,
                });
                if invert {
                    out.push(Instruction::Not { rd: s0, ra: s0 });
                }
                out.push(Instruction::Store { rs: s0, addr: dest });
            }
            Instruction::CimNot { a, dest } => {
                out.push(Instruction::Load { rd: s0, addr: a });
                out.push(Instruction::Not { rd: s0, ra: s0 });
                out.push(Instruction::Store { rs: s0, addr: dest });
            }
            other => out.push(other),
        }
    }
    Program {
        instructions: out,
        data: program.data.clone(),
    }
}

/// Static, program-independent view of the hardware.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineDescription {
    pub geometry: ArrayGeometry,
    pub register_count: usize,
    pub sense_capabilities: Vec<CimOp>,
    pub reference_currents_ua: [f64; 3],
    pub decode_rules: Vec<String>,
}

impl MachineDescription {
    pub fn of_array(geometry: &ArrayGeometry, sense: &SenseConfig) -> Self {
        let caps = vec![
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
        MachineDescription {
            geometry: *geometry,
            register_count: REGISTER_COUNT,
            decode_rules: caps
                .iter()
                .map(|op| {
                    let kind = match sense.rule(*op) {
                        crate::array::DecodeRule::Above(_) => "above",
                        crate::array::DecodeRule::AtOrBelow(_) => "at-or-below",
                        crate::array::DecodeRule::Window { .. } => "window",
                    };
                    format!("{op}:{kind}")
                })
                .collect(),
            sense_capabilities: caps,
            reference_currents_ua: [sense.i_ref_read, sense.i_ref_or, sense.i_ref_and],
        }
    }
}

/// SHA-256 over the canonical JSON of the static description, hex encoded.
pub fn static_fingerprint(description: &MachineDescription) -> String {
    let json = serde_json::to_vec(description).expect("description serializes");
    hex::encode(Sha256::digest(&json))
}

/// Random straight-line program mixing CPU and in-memory instructions, used
/// for differential testing of [`lower_to_conventional`]. Stays off the
/// lowering scratch registers and keeps every operand in bank 0.
pub fn random_cim_program<R: Rng + ?Sized>(
    rng: &mut R,
    geometry: &ArrayGeometry,
    max_len: usize,
) -> Program {
    let rows = geometry.rows_per_bank.min(16);
    assert!(rows >= 3, "need at least three rows");
    let mask = geometry.word_mask();
    let row = |rng: &mut R| RowAddress::new(0, rng.random_range(0..rows));
    let reg = |rng: &mut R| Reg(rng.random_range(0..6));
    let data = (0..rows)
        .map(|r| (RowAddress::new(0, r), rng.random::<u64>() & mask))
        .collect();
    let len = rng.random_range(1..=max_len);
    let mut instructions = Vec::with_capacity(len + 1);
    for _ in 0..len {
        let ins = match rng.random_range(0..10) {
            0 => Instruction::Load {
                rd: reg(rng),
                addr: row(rng),
            },
            1 => Instruction::Store {
                rs: reg(rng),
                addr: row(rng),
            },
            2 => Instruction::Alu {
                op: [AluOp::Add, AluOp::And, AluOp::Or, AluOp::Xor][rng.random_range(0..4)],
                rd: reg(rng),
                ra: reg(rng),
                rb: reg(rng),
            },
            3 => Instruction::Not {
                rd: reg(rng),
                ra: reg(rng),
            },
            4 => Instruction::CimNot {
                a: row(rng),
                dest: row(rng),
            },
            _ => {
                let a = rng.random_range(0..rows);
                let b = (a + rng.random_range(1..rows)) % rows;
                let ops = [
                    CimOp::CimAdd,
                    CimOp::CimAnd,
                    CimOp::CimOr,
                    CimOp::CimXor,
                    CimOp::CimNand,
                    CimOp::CimNor,
                ];
                Instruction::Cim {
                    op: ops[rng.random_range(0..ops.len())],
                    a: RowAddress::new(0, a),
                    b: RowAddress::new(0, b),
                    dest: row(rng),
                }
            }
        };
        instructions.push(ins);
    }
    instructions.push(Instruction::Halt);
    Program { instructions, data }
}
