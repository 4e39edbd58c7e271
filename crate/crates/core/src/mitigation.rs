//! Adaptive sense references: move `I_ref-or` and `I_ref-and` up by the
//! estimated heat-induced level increases so they sit between the shifted
//! level means again.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::array::{CimOp, SenseConfig};
use crate::attack::pair_states;
use crate::device::{
    pair_exceedance_probability, sample_pair_current, CurrentLevelModel, DisturbanceKind,
    DisturbanceModel, PairLevel,
};
use crate::error::{Error, Result};
use crate::stats::{count_trials, McReport};

/// Estimated increases of the AP,AP / AP,P / P,P levels, µA.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftEstimate {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl ShiftEstimate {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        let s = ShiftEstimate { alpha, beta, gamma };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if 0.0 < self.alpha
            && self.alpha < self.beta
            && self.beta < self.gamma
            && self.gamma.is_finite()
        {
            Ok(())
        } else {
            Err(Error::InvalidShift(format!(
                "need 0 < alpha < beta < gamma, got ({}, {}, {})",
                self.alpha, self.beta, self.gamma
            )))
        }
    }

    /// The true shift of a mean-shift disturbance.
    pub fn perfect(disturbance: &DisturbanceModel) -> Result<Self> {
        match disturbance.kind {
            DisturbanceKind::MeanShift { alpha, beta, gamma } => Self::new(alpha, beta, gamma),
            _ => Err(Error::InvalidShift(
                "only a mean-shift disturbance has an exact estimate".into(),
            )),
        }
    }

    /// Estimate read from a sensor with additive Gaussian error `sigma` µA
    /// on each component.
    pub fn from_noisy_sensor<R: Rng + ?Sized>(
        truth: &Self,
        sigma: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let n = Normal::new(0.0, sigma).map_err(|e| Error::InvalidShift(e.to_string()))?;
        Self::new(
            truth.alpha + n.sample(rng),
            truth.beta + n.sample(rng),
            truth.gamma + n.sample(rng),
        )
    }
}

/// References at the midpoints of the shifted pair levels; the read
/// reference is left alone.
pub fn adapt_references(
    base: &SenseConfig,
    levels: &CurrentLevelModel,
    shift: &ShiftEstimate,
) -> Result<SenseConfig> {
    shift.validate()?;
    let adapted = SenseConfig {
        i_ref_read: base.i_ref_read,
        i_ref_or: (levels.i_ap_ap + levels.i_ap_p + shift.alpha + shift.beta) / 2.0,
        i_ref_and: (levels.i_ap_p + levels.i_p_p + shift.beta + shift.gamma) / 2.0,
    };
    let ap_ap = levels.i_ap_ap + shift.alpha;
    let ap_p = levels.i_ap_p + shift.beta;
    let p_p = levels.i_p_p + shift.gamma;
    if !(ap_ap < adapted.i_ref_or
        && adapted.i_ref_or < ap_p
        && ap_p < adapted.i_ref_and
        && adapted.i_ref_and < p_p)
    {
        return Err(Error::InvalidShift(
            "adapted references are not ordered against the shifted levels".into(),
        ));
    }
    Ok(adapted)
}

/// Which sense a mitigation cell looks at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SenseKind {
    And,
    Or,
}

impl SenseKind {
    fn op(self) -> CimOp {
        match self {
            SenseKind::And => CimOp::CimAnd,
            SenseKind::Or => CimOp::CimOr,
        }
    }

    fn reference(self, sense: &SenseConfig) -> f64 {
        match self {
            SenseKind::And => sense.i_ref_and,
            SenseKind::Or => sense.i_ref_or,
        }
    }

    /// Correct output of this sense for a pair level.
    fn truth(self, level: PairLevel) -> bool {
        let (a, b) = pair_states(level);
        self.op().apply(a.bit(), b.bit())
    }
}

/// Closed-form probability that a sense decodes `level` wrongly.
pub fn decode_error_probability(
    level: PairLevel,
    sense_kind: SenseKind,
    sense: &SenseConfig,
    levels: &CurrentLevelModel,
    disturbance: &DisturbanceModel,
) -> f64 {
    let above =
        pair_exceedance_probability(level, levels, disturbance, sense_kind.reference(sense));
    if sense_kind.truth(level) {
        1.0 - above
    } else {
        above
    }
}

/// Monte Carlo decode-error rate with the closed form attached.
pub fn mc_decode_error(
    level: PairLevel,
    sense_kind: SenseKind,
    sense: &SenseConfig,
    levels: &CurrentLevelModel,
    disturbance: &DisturbanceModel,
    trials: u64,
    seed: u64,
) -> McReport {
    let states = pair_states(level);
    let reference = sense_kind.reference(sense);
    let truth = sense_kind.truth(level);
    let errors = count_trials(trials, seed, |rng, _| {
        (sample_pair_current(states, levels, disturbance, rng) > reference) != truth
    });
    let analytic = decode_error_probability(level, sense_kind, sense, levels, disturbance);
    McReport::new(trials, errors, analytic, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationCell {
    pub level: PairLevel,
    pub sense: SenseKind,
    /// Closed-form error with base references and no disturbance.
    pub natural_rate: f64,
    pub before: McReport,
    pub after: McReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationReport {
    pub disturbance: DisturbanceModel,
    pub base: SenseConfig,
    pub adapted: SenseConfig,
    pub cells: Vec<MitigationCell>,
}

impl MitigationReport {
    pub fn cell(&self, level: PairLevel, sense: SenseKind) -> Option<&MitigationCell> {
        self.cells
            .iter()
            .find(|c| c.level == level && c.sense == sense)
    }
}

/// Decode-error rates of every (pair level, AND/OR sense) cell with the base
/// and the adapted references under the same disturbance and seed.
pub fn evaluate_mitigation(
    disturbance: &DisturbanceModel,
    levels: &CurrentLevelModel,
    base: &SenseConfig,
    adapted: &SenseConfig,
    trials: u64,
    seed: u64,
) -> Result<MitigationReport> {
    disturbance.validate()?;
    let natural = DisturbanceModel::none();
    let mut cells = Vec::new();
    for level in PairLevel::ALL {
        for sense in [SenseKind::And, SenseKind::Or] {
            cells.push(MitigationCell {
                level,
                sense,
                natural_rate: decode_error_probability(level, sense, base, levels, &natural),
                before: mc_decode_error(level, sense, base, levels, disturbance, trials, seed),
                after: mc_decode_error(level, sense, adapted, levels, disturbance, trials, seed),
            });
        }
    }
    Ok(MitigationReport {
        disturbance: *disturbance,
        base: *base,
        adapted: *adapted,
        cells,
    })
}
