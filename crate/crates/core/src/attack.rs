//! Laser-heat fault injection against in-memory authentication.
//!
//! The check evaluated in the array is
//! `(u_t XNOR u_d) AND (p_t XNOR p_d)` where each XNOR is computed as
//! `(x CimAND y) OR (x CimNOR y)` and reduced to one match bit by the
//! controller. Heating the rows of a CimAND sense pushes AP,P columns
//! towards the P,P level, so the AND starts to behave like an OR.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::array::{
    ArrayGeometry, BitWord, CimArray, CimOp, DecodeRule, RowAddress, SenseConfig, ThermalZone,
    ZoneEffect,
};
use crate::cost::{CostTable, ExecutionTrace};
use crate::device::{
    gaussian_exceedance, pair_exceedance_probability, pair_exceedance_probability_heated,
    sample_pair_current, CurrentLevelModel, DisturbanceModel, MtjState, PairLevel,
    DEFAULT_COLLAPSE_A, DEFAULT_COLLAPSE_B,
};
use crate::error::{Error, Result};
use crate::stats::{trial_rng, McReport};

pub const DEFAULT_CREDENTIAL_WIDTH: usize = 16;

/// Representative cell states of a pair level.
pub fn pair_states(level: PairLevel) -> (MtjState, MtjState) {
    match level {
        PairLevel::ApAp => (MtjState::AP, MtjState::AP),
        PairLevel::ApP => (MtjState::AP, MtjState::P),
        PairLevel::PP => (MtjState::P, MtjState::P),
    }
}

/// Monte Carlo rate of `I > reference` for one pair level under `disturbance`
/// (both cells heated), with the closed form as the oracle.
pub fn mc_failure_rate(
    level: PairLevel,
    disturbance: &DisturbanceModel,
    levels: &CurrentLevelModel,
    reference: f64,
    trials: u64,
    seed: u64,
) -> McReport {
    let states = pair_states(level);
    let failures = crate::stats::count_trials(trials, seed, |rng, _| {
        sample_pair_current(states, levels, disturbance, rng) > reference
    });
    let analytic = pair_exceedance_probability(level, levels, disturbance, reference);
    McReport::new(trials, failures, analytic, seed)
}

/// CimAND failure rate at a zone temperature with the shipped defaults.
pub fn and_failure_at(level: PairLevel, zone_temp: f64, trials: u64, seed: u64) -> McReport {
    let levels = CurrentLevelModel::default();
    let sense = SenseConfig::midpoints(&levels);
    let d = DisturbanceModel::laser_heat(zone_temp, levels.ambient_temp);
    mc_failure_rate(level, &d, &levels, sense.i_ref_and, trials, seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Credential {
    pub username: u64,
    pub password: u64,
}

/// Row plan for a credential database resident in bank 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthLayout {
    pub entries: usize,
}

impl AuthLayout {
    pub fn user_row(&self, entry: usize) -> RowAddress {
        RowAddress::new(0, 2 * entry)
    }

    pub fn password_row(&self, entry: usize) -> RowAddress {
        RowAddress::new(0, 2 * entry + 1)
    }

    pub fn typed_user(&self) -> RowAddress {
        RowAddress::new(0, 2 * self.entries)
    }

    pub fn typed_password(&self) -> RowAddress {
        RowAddress::new(0, 2 * self.entries + 1)
    }

    pub fn user_scratch(&self) -> [RowAddress; 2] {
        [
            RowAddress::new(0, 2 * self.entries + 2),
            RowAddress::new(0, 2 * self.entries + 3),
        ]
    }

    pub fn password_scratch(&self) -> [RowAddress; 2] {
        [
            RowAddress::new(0, 2 * self.entries + 4),
            RowAddress::new(0, 2 * self.entries + 5),
        ]
    }

    /// Rows holding the user and password match bits in column 0.
    pub fn match_rows(&self) -> [RowAddress; 2] {
        [
            RowAddress::new(0, 2 * self.entries + 6),
            RowAddress::new(0, 2 * self.entries + 7),
        ]
    }

    pub fn rows_needed(&self) -> usize {
        2 * self.entries + 8
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthDb {
    pub width: usize,
    pub entries: Vec<Credential>,
}

impl AuthDb {
    pub fn new(width: usize, entries: Vec<Credential>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Config("credential database is empty".into()));
        }
        if width == 0 || width > 64 {
            return Err(Error::Config(format!(
                "credential width {width} outside 1..=64"
            )));
        }
        let mask = word_mask(width);
        if entries
            .iter()
            .any(|c| c.username & !mask != 0 || c.password & !mask != 0)
        {
            return Err(Error::Config(format!("credential wider than {width} bits")));
        }
        Ok(AuthDb { width, entries })
    }

    /// A single-entry database with fixed demonstration secrets.
    pub fn demo(width: usize) -> Self {
        let mask = word_mask(width);
        AuthDb::new(
            width,
            vec![Credential {
                username: 0xB5A3_C96E_1F27_D048 & mask,
                password: 0x3C6E_F372_A54F_F53A & mask,
            }],
        )
        .expect("valid demo database")
    }

    pub fn layout(&self) -> AuthLayout {
        AuthLayout {
            entries: self.entries.len(),
        }
    }

    pub fn geometry(&self) -> ArrayGeometry {
        ArrayGeometry {
            banks: 1,
            rows_per_bank: self.layout().rows_needed().max(64),
            cols_per_row: self.width,
        }
    }

    /// Places the stored credentials in the array.
    pub fn install(&self, array: &mut CimArray) -> Result<()> {
        let layout = self.layout();
        if array.geometry().cols_per_row != self.width {
            return Err(Error::WidthMismatch {
                expected: self.width,
                got: array.geometry().cols_per_row,
            });
        }
        for (e, c) in self.entries.iter().enumerate() {
            array.preload(layout.user_row(e), BitWord::new(c.username, self.width))?;
            array.preload(layout.password_row(e), BitWord::new(c.password, self.width))?;
        }
        Ok(())
    }
}

fn word_mask(width: usize) -> u64 {
    if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackVariant {
    None,
    /// Heat the final CimAND that combines the two match bits.
    GateLevel,
    /// Heat the CimAND inside both XNOR evaluations.
    XnorLevel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackScenario {
    pub variant: AttackVariant,
    /// °C
    pub zone_temp: f64,
    /// Every targeted AP,P sense reads as P,P, independent of temperature.
    #[serde(default)]
    pub forced_flip: bool,
    #[serde(default = "default_collapse_a")]
    pub collapse_a: f64,
    #[serde(default = "default_collapse_b")]
    pub collapse_b: f64,
}

fn default_collapse_a() -> f64 {
    DEFAULT_COLLAPSE_A
}

fn default_collapse_b() -> f64 {
    DEFAULT_COLLAPSE_B
}

impl AttackScenario {
    pub fn none() -> Self {
        Self::heat(AttackVariant::None, 20.0)
    }

    pub fn heat(variant: AttackVariant, zone_temp: f64) -> Self {
        AttackScenario {
            variant,
            zone_temp,
            forced_flip: false,
            collapse_a: DEFAULT_COLLAPSE_A,
            collapse_b: DEFAULT_COLLAPSE_B,
        }
    }

    pub fn forced(variant: AttackVariant) -> Self {
        AttackScenario {
            forced_flip: true,
            ..Self::heat(variant, 20.0)
        }
    }

    pub fn validate(&self, levels: &CurrentLevelModel) -> Result<()> {
        if !(self.zone_temp >= levels.ambient_temp) {
            return Err(Error::InvalidModel(format!(
                "zone temperature {} °C is below ambient {} °C",
                self.zone_temp, levels.ambient_temp
            )));
        }
        Ok(())
    }

    fn effect(&self, levels: &CurrentLevelModel) -> ZoneEffect {
        if self.forced_flip {
            ZoneEffect::ForcedFlip
        } else {
            ZoneEffect::Thermal(DisturbanceModel::laser_heat_with(
                self.zone_temp,
                levels.ambient_temp,
                self.collapse_a,
                self.collapse_b,
            ))
        }
    }

    /// Rows and operations the laser reaches for this database layout.
    pub fn zone(&self, layout: &AuthLayout, levels: &CurrentLevelModel) -> Option<ThermalZone> {
        let rows = match self.variant {
            AttackVariant::None => return None,
            AttackVariant::GateLevel => layout.match_rows().to_vec(),
            AttackVariant::XnorLevel => {
                let mut rows: Vec<_> = (0..layout.entries)
                    .flat_map(|e| [layout.user_row(e), layout.password_row(e)])
                    .collect();
                rows.extend([layout.typed_user(), layout.typed_password()]);
                rows
            }
        };
        Some(ThermalZone {
            rows,
            ops: vec![CimOp::CimAnd],
            effect: self.effect(levels),
        })
    }
}

#[derive(Debug, Clone)]
pub struct AuthOutcome {
    pub accept: bool,
    pub trace: ExecutionTrace,
}

/// Evaluates a login attempt against every stored entry; accepts when any
/// entry matches. The array must hold the database (see [`AuthDb::install`]).
pub fn run_auth(
    array: &mut CimArray,
    db: &AuthDb,
    typed: Credential,
    scenario: &AttackScenario,
) -> Result<AuthOutcome> {
    scenario.validate(array.levels())?;
    let layout = db.layout();
    let width = db.width;
    let zone = scenario.zone(&layout, array.levels());
    array.set_zone(zone)?;
    let result = (|| -> Result<bool> {
        array.write_word(layout.typed_user(), BitWord::new(typed.username, width))?;
        array.write_word(layout.typed_password(), BitWord::new(typed.password, width))?;
        let [mu, mp] = layout.match_rows();
        let mut accept = false;
        for e in 0..db.entries.len() {
            let user_ok = array
                .cim_xnor(
                    layout.typed_user(),
                    layout.user_row(e),
                    layout.user_scratch(),
                )?
                .is_all_ones();
            let pass_ok = array
                .cim_xnor(
                    layout.typed_password(),
                    layout.password_row(e),
                    layout.password_scratch(),
                )?
                .is_all_ones();
            array.write_word(mu, BitWord::new(user_ok as u64, width))?;
            array.write_word(mp, BitWord::new(pass_ok as u64, width))?;
            accept |= array.cim_two_row(CimOp::CimAnd, mu, mp)?.bit(0);
        }
        Ok(accept)
    })();
    array.set_zone(None)?;
    let accept = result?;
    Ok(AuthOutcome {
        accept,
        trace: array.take_trace(),
    })
}

/// Probability that one sense of `level` decodes to 1 under `rule`.
/// `heated` selects whether the zone effect reaches this sense.
pub fn sense_one_probability(
    rule: DecodeRule,
    level: PairLevel,
    heated: bool,
    effect: Option<ZoneEffect>,
    levels: &CurrentLevelModel,
) -> f64 {
    let above = |reference: f64| match (heated, effect) {
        (true, Some(ZoneEffect::Thermal(d))) => {
            pair_exceedance_probability_heated(level, level.ap_count(), true, levels, &d, reference)
        }
        (true, Some(ZoneEffect::ForcedFlip)) if level == PairLevel::ApP => {
            gaussian_exceedance(levels.pair_mean(PairLevel::PP), levels.sigma, reference)
        }
        _ => gaussian_exceedance(levels.pair_mean(level), levels.sigma, reference),
    };
    match rule {
        DecodeRule::Above(r) => above(r),
        DecodeRule::AtOrBelow(r) => 1.0 - above(r),
        DecodeRule::Window { low, high } => (above(low) - above(high)).max(0.0),
    }
}

/// Exact acceptance probability of [`run_auth`] for one attempt, composing
/// the per-sense decode probabilities.
pub fn accept_probability(
    db: &AuthDb,
    typed: Credential,
    scenario: &AttackScenario,
    levels: &CurrentLevelModel,
    sense: &SenseConfig,
) -> f64 {
    let effect = Some(scenario.effect(levels));
    let xnor_heated = scenario.variant == AttackVariant::XnorLevel;
    let gate_heated = scenario.variant == AttackVariant::GateLevel;
    let and_rule = sense.rule(CimOp::CimAnd);
    let nor_rule = sense.rule(CimOp::CimNor);

    let word_match = |typed: u64, stored: u64| -> f64 {
        (0..db.width)
            .map(|col| {
                let level = PairLevel::of(
                    MtjState::from_bit(typed >> col & 1 == 1),
                    MtjState::from_bit(stored >> col & 1 == 1),
                );
                let p_and = sense_one_probability(and_rule, level, xnor_heated, effect, levels);
                let p_nor = sense_one_probability(nor_rule, level, false, effect, levels);
                1.0 - (1.0 - p_and) * (1.0 - p_nor)
            })
            .product()
    };

    let mut reject_all = 1.0;
    for entry in &db.entries {
        let pu = word_match(typed.username, entry.username);
        let pp = word_match(typed.password, entry.password);
        let mut accept = 0.0;
        for (u, wu) in [(true, pu), (false, 1.0 - pu)] {
            for (p, wp) in [(true, pp), (false, 1.0 - pp)] {
                let level = PairLevel::of(MtjState::from_bit(u), MtjState::from_bit(p));
                accept +=
                    wu * wp * sense_one_probability(and_rule, level, gate_heated, effect, levels);
            }
        }
        reject_all *= 1.0 - accept;
    }
    1.0 - reject_all
}

/// How an attacker picks one field of a login attempt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "bits")]
pub enum Guess {
    Correct,
    /// Uniform over all words, including the correct one.
    Random,
    /// Uniform over all incorrect words.
    Wrong,
    /// The correct word with this many distinct bits flipped.
    Hamming(u32),
}

impl Guess {
    pub fn draw<R: Rng + ?Sized>(self, secret: u64, width: usize, rng: &mut R) -> u64 {
        let mask = word_mask(width);
        match self {
            Guess::Correct => secret,
            Guess::Random => rng.random::<u64>() & mask,
            Guess::Wrong => loop {
                let flip = rng.random::<u64>() & mask;
                if flip != 0 {
                    break secret ^ flip;
                }
            },
            Guess::Hamming(k) => {
                let k = (k as usize).min(width);
                let cols = rand::seq::index::sample(rng, width, k);
                cols.iter().fold(secret, |w, c| w ^ (1u64 << c))
            }
        }
    }
}

/// Credentials presented in each trial, aimed at entry 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CredentialPolicy {
    pub username: Guess,
    pub password: Guess,
}

impl CredentialPolicy {
    pub const CORRECT: Self = CredentialPolicy {
        username: Guess::Correct,
        password: Guess::Correct,
    };
    pub const CORRECT_USER_RANDOM_PASSWORD: Self = CredentialPolicy {
        username: Guess::Correct,
        password: Guess::Random,
    };
    pub const RANDOM: Self = CredentialPolicy {
        username: Guess::Random,
        password: Guess::Random,
    };

    pub fn draw<R: Rng + ?Sized>(&self, db: &AuthDb, rng: &mut R) -> Credential {
        let target = db.entries[0];
        Credential {
            username: self.username.draw(target.username, db.width, rng),
            password: self.password.draw(target.password, db.width, rng),
        }
    }
}

/// Bypass rate over `trials` login attempts. The analytic rate is the mean
/// of the exact per-attempt acceptance probabilities.
pub fn attack_success_rate(
    db: &AuthDb,
    policy: &CredentialPolicy,
    scenario: &AttackScenario,
    levels: &CurrentLevelModel,
    trials: u64,
    seed: u64,
) -> Result<McReport> {
    scenario.validate(levels)?;
    let sense = SenseConfig::midpoints(levels);
    let geometry = db.geometry();
    let template = {
        let mut a = CimArray::new(geometry, *levels, sense, CostTable::default(), seed)?;
        db.install(&mut a)?;
        a.set_tracing(false);
        a
    };
    // collected in trial order so the float sum does not depend on threads
    let outcomes = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<(u64, f64)> {
            let mut rng = trial_rng(seed, i);
            let typed = policy.draw(db, &mut rng);
            let p = accept_probability(db, typed, scenario, levels, &sense);
            let mut array = template.clone();
            array.reseed(rng);
            let out = run_auth(&mut array, db, typed, scenario)?;
            Ok((out.accept as u64, p))
        })
        .collect::<Result<Vec<_>>>()?;
    let accepted = outcomes.iter().map(|o| o.0).sum();
    let analytic_sum: f64 = outcomes.iter().map(|o| o.1).sum();
    let analytic = if trials == 0 {
        0.0
    } else {
        analytic_sum / trials as f64
    };
    Ok(McReport::new(trials, accepted, analytic, seed))
}
