//! Behavioral MTJ sense-current model.
//!
//! Cells are described only by the current they deliver to the sense node.
//! Two-row operations see the summed current of a cell pair, which takes one
//! of three nominal levels. Gaussian noise is added once per sense. Thermal
//! attacks are modeled either as a pure mean shift of the pair levels or as a
//! Bernoulli "collapse" of heated AP cells onto the P level.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::{normal_tail, normal_tail_inv};

/// Sense noise that puts the natural AP,P failure of CimAND at 0.5 %.
pub const DEFAULT_SIGMA: f64 = 0.485_280_603_911_830_4;
/// Intercept of `ln rho(dT)` fitted to the heated failure rates.
pub const DEFAULT_COLLAPSE_A: f64 = -9.097_513_918;
/// Slope of `ln rho(dT)` in 1/°C.
pub const DEFAULT_COLLAPSE_B: f64 = 0.073_322_482;

/// Magnetization of a cell relative to its pinned layer. `P` stores a logic 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MtjState {
    P,
    AP,
}

impl MtjState {
    pub fn from_bit(bit: bool) -> Self {
        if bit {
            MtjState::P
        } else {
            MtjState::AP
        }
    }

    pub fn bit(self) -> bool {
        self == MtjState::P
    }
}

/// Summed-current level of two cells sensed together, ordered by the number
/// of P cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PairLevel {
    #[serde(rename = "AP,AP")]
    ApAp,
    #[serde(rename = "AP,P")]
    ApP,
    #[serde(rename = "P,P")]
    PP,
}

impl PairLevel {
    pub const ALL: [PairLevel; 3] = [PairLevel::ApAp, PairLevel::ApP, PairLevel::PP];

    pub fn of(a: MtjState, b: MtjState) -> Self {
        Self::from_p_count(a.bit() as u32 + b.bit() as u32)
    }

    pub fn from_p_count(count: u32) -> Self {
        match count {
            0 => PairLevel::ApAp,
            1 => PairLevel::ApP,
            _ => PairLevel::PP,
        }
    }

    pub fn p_count(self) -> u32 {
        match self {
            PairLevel::ApAp => 0,
            PairLevel::ApP => 1,
            PairLevel::PP => 2,
        }
    }

    pub fn ap_count(self) -> u32 {
        2 - self.p_count()
    }

    /// Level reached after `steps` AP cells have collapsed to P.
    pub fn promoted(self, steps: u32) -> Self {
        Self::from_p_count(self.p_count() + steps)
    }
}

impl std::fmt::Display for PairLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            PairLevel::ApAp => "AP,AP",
            PairLevel::ApP => "AP,P",
            PairLevel::PP => "P,P",
        })
    }
}

impl std::str::FromStr for PairLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().replace(' ', "").as_str() {
            "AP,AP" | "APAP" => Ok(PairLevel::ApAp),
            "AP,P" | "P,AP" | "APP" | "PAP" => Ok(PairLevel::ApP),
            "P,P" | "PP" => Ok(PairLevel::PP),
            other => Err(Error::Config(format!("unknown pair state `{other}`"))),
        }
    }
}

/// Nominal sense currents in µA.
///
/// Pair levels are configured directly. The measured pair margins are
/// narrower than a sum of single-cell currents would give, so they cannot be
/// derived from the single levels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurrentLevelModel {
    pub i_ap: f64,
    pub i_p: f64,
    pub i_ap_ap: f64,
    pub i_ap_p: f64,
    pub i_p_p: f64,
    /// Standard deviation of the sense-node noise, µA.
    pub sigma: f64,
    /// °C
    pub ambient_temp: f64,
}

impl Default for CurrentLevelModel {
    fn default() -> Self {
        CurrentLevelModel {
            i_ap: 10.0,
            i_p: 15.5,
            i_ap_ap: 17.0,
            i_ap_p: 20.2,
            i_p_p: 22.7,
            sigma: DEFAULT_SIGMA,
            ambient_temp: 20.0,
        }
    }
}

impl CurrentLevelModel {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.i_ap,
            self.i_p,
            self.i_ap_ap,
            self.i_ap_p,
            self.i_p_p,
            self.sigma,
            self.ambient_temp,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        if self.i_ap >= self.i_p {
            return Err(Error::InvalidModel("requires I_AP < I_P".into()));
        }
        if !(self.i_ap_ap < self.i_ap_p && self.i_ap_p < self.i_p_p) {
            return Err(Error::InvalidModel(
                "requires I_AP,AP < I_AP,P < I_P,P".into(),
            ));
        }
        if self.sigma < 0.0 {
            return Err(Error::InvalidModel("sigma must be non-negative".into()));
        }
        Ok(())
    }

    pub fn with_sigma(mut self, sigma: f64) -> Self {
        self.sigma = sigma;
        self
    }

    pub fn single_mean(&self, state: MtjState) -> f64 {
        match state {
            MtjState::P => self.i_p,
            MtjState::AP => self.i_ap,
        }
    }

    pub fn pair_mean(&self, level: PairLevel) -> f64 {
        match level {
            PairLevel::ApAp => self.i_ap_ap,
            PairLevel::ApP => self.i_ap_p,
            PairLevel::PP => self.i_p_p,
        }
    }

    /// `I_P - I_AP`
    pub fn read_margin(&self) -> f64 {
        self.i_p - self.i_ap
    }

    /// `I_AP,P - I_AP,AP`
    pub fn lower_pair_margin(&self) -> f64 {
        self.i_ap_p - self.i_ap_ap
    }

    /// `I_P,P - I_AP,P`
    pub fn upper_pair_margin(&self) -> f64 {
        self.i_p_p - self.i_ap_p
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum DisturbanceKind {
    None,
    /// Pair levels rise by alpha / beta / gamma µA (AP,AP / AP,P / P,P).
    MeanShift {
        alpha: f64,
        beta: f64,
        gamma: f64,
    },
    /// Each heated AP cell reads as P with probability `exp(a + b * dT)`.
    Collapse {
        a: f64,
        b: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisturbanceModel {
    pub kind: DisturbanceKind,
    /// °C
    pub zone_temp: f64,
}

impl DisturbanceModel {
    pub fn none() -> Self {
        DisturbanceModel {
            kind: DisturbanceKind::None,
            zone_temp: 20.0,
        }
    }

    pub fn mean_shift(alpha: f64, beta: f64, gamma: f64) -> Self {
        DisturbanceModel {
            kind: DisturbanceKind::MeanShift { alpha, beta, gamma },
            zone_temp: 20.0,
        }
    }

    pub fn collapse(a: f64, b: f64, zone_temp: f64) -> Self {
        DisturbanceModel {
            kind: DisturbanceKind::Collapse { a, b },
            zone_temp,
        }
    }

    /// Collapse with probability one regardless of temperature.
    pub fn certain_collapse() -> Self {
        Self::collapse(0.0, 0.0, 20.0)
    }

    /// Laser heating of the zone to `zone_temp` with the shipped collapse fit.
    /// At or below ambient this is the natural condition.
    pub fn laser_heat(zone_temp: f64, ambient: f64) -> Self {
        Self::laser_heat_with(zone_temp, ambient, DEFAULT_COLLAPSE_A, DEFAULT_COLLAPSE_B)
    }

    pub fn laser_heat_with(zone_temp: f64, ambient: f64, a: f64, b: f64) -> Self {
        if zone_temp <= ambient {
            DisturbanceModel {
                kind: DisturbanceKind::None,
                zone_temp,
            }
        } else {
            Self::collapse(a, b, zone_temp)
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            DisturbanceKind::None => Ok(()),
            DisturbanceKind::MeanShift { alpha, beta, gamma } => {
                if 0.0 < alpha && alpha < beta && beta < gamma && gamma.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidModel(format!(
                        "mean shift requires 0 < alpha < beta < gamma, got ({alpha}, {beta}, {gamma})"
                    )))
                }
            }
            DisturbanceKind::Collapse { a, b } => {
                if a.is_finite() && b.is_finite() && self.zone_temp.is_finite() {
                    Ok(())
                } else {
                    Err(Error::InvalidModel("non-finite collapse parameters".into()))
                }
            }
        }
    }

    /// Probability that one heated AP cell collapses, given the ambient
    /// temperature the model was calibrated against.
    pub fn collapse_probability(&self, ambient: f64) -> f64 {
        match self.kind {
            DisturbanceKind::Collapse { a, b } => {
                let dt = (self.zone_temp - ambient).max(0.0);
                (a + b * dt).exp().clamp(0.0, 1.0)
            }
            _ => 0.0,
        }
    }

    /// Mean-shift offset applied to a pair level.
    pub fn pair_shift(&self, level: PairLevel) -> f64 {
        match self.kind {
            DisturbanceKind::MeanShift { alpha, beta, gamma } => match level {
                PairLevel::ApAp => alpha,
                PairLevel::ApP => beta,
                PairLevel::PP => gamma,
            },
            _ => 0.0,
        }
    }

    /// Mean-shift offset for a single cell: half of the matching
    /// homogeneous pair shift.
    pub fn single_shift(&self, state: MtjState) -> f64 {
        match state {
            MtjState::AP => self.pair_shift(PairLevel::ApAp) / 2.0,
            MtjState::P => self.pair_shift(PairLevel::PP) / 2.0,
        }
    }
}

impl Default for DisturbanceModel {
    fn default() -> Self {
        Self::none()
    }
}

fn noise<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    sigma * z
}

pub fn sample_single_current<R: Rng + ?Sized>(
    state: MtjState,
    model: &CurrentLevelModel,
    disturbance: &DisturbanceModel,
    rng: &mut R,
) -> f64 {
    // the uniform is drawn even when rho is zero so that runs at different
    // temperatures with one seed stay coupled
    let mut effective = state;
    if state == MtjState::AP {
        let rho = disturbance.collapse_probability(model.ambient_temp);
        if rng.random::<f64>() < rho {
            effective = MtjState::P;
        }
    }
    model.single_mean(effective) + disturbance.single_shift(state) + noise(model.sigma, rng)
}

pub fn sample_pair_current<R: Rng + ?Sized>(
    states: (MtjState, MtjState),
    model: &CurrentLevelModel,
    disturbance: &DisturbanceModel,
    rng: &mut R,
) -> f64 {
    sample_pair_current_heated(states, [true, true], model, disturbance, rng)
}

/// Pair sample where only the cells flagged in `heated` feel the disturbance.
/// A mean shift applies when either cell is heated.
pub(crate) fn sample_pair_current_heated<R: Rng + ?Sized>(
    states: (MtjState, MtjState),
    heated: [bool; 2],
    model: &CurrentLevelModel,
    disturbance: &DisturbanceModel,
    rng: &mut R,
) -> f64 {
    let level = PairLevel::of(states.0, states.1);
    let mut steps = 0;
    let rho = disturbance.collapse_probability(model.ambient_temp);
    for (state, hot) in [states.0, states.1].into_iter().zip(heated) {
        if hot && state == MtjState::AP && rng.random::<f64>() < rho {
            steps += 1;
        }
    }
    let shift = if heated[0] || heated[1] {
        disturbance.pair_shift(level)
    } else {
        0.0
    };
    model.pair_mean(level.promoted(steps)) + shift + noise(model.sigma, rng)
}

/// Distribution of the effective pair level when `heated_ap` of its AP
/// cells are exposed to collapse probability `rho`.
pub fn collapsed_levels(level: PairLevel, heated_ap: u32, rho: f64) -> Vec<(PairLevel, f64)> {
    let k = heated_ap.min(level.ap_count());
    let mut out = Vec::with_capacity(k as usize + 1);
    let mut binom = 1.0;
    for j in 0..=k {
        if j > 0 {
            binom = binom * (k - j + 1) as f64 / j as f64;
        }
        let p = binom * rho.powi(j as i32) * (1.0 - rho).powi((k - j) as i32);
        out.push((level.promoted(j), p));
    }
    out
}

/// `P(mean + sigma * Z > reference)`, exact for sigma = 0.
pub fn gaussian_exceedance(mean: f64, sigma: f64, reference: f64) -> f64 {
    if sigma == 0.0 {
        if mean > reference {
            1.0
        } else {
            0.0
        }
    } else {
        normal_tail((reference - mean) / sigma)
    }
}

/// Closed-form probability that a sensed pair current exceeds `reference`
/// with both cells heated.
pub fn pair_exceedance_probability(
    level: PairLevel,
    model: &CurrentLevelModel,
    disturbance: &DisturbanceModel,
    reference: f64,
) -> f64 {
    pair_exceedance_probability_heated(level, level.ap_count(), true, model, disturbance, reference)
}

/// As [`pair_exceedance_probability`] with `heated_ap` AP cells exposed.
/// `shifted` selects whether a mean shift applies to this sense.
pub fn pair_exceedance_probability_heated(
    level: PairLevel,
    heated_ap: u32,
    shifted: bool,
    model: &CurrentLevelModel,
    disturbance: &DisturbanceModel,
    reference: f64,
) -> f64 {
    let rho = disturbance.collapse_probability(model.ambient_temp);
    let shift = if shifted {
        disturbance.pair_shift(level)
    } else {
        0.0
    };
    collapsed_levels(level, heated_ap, rho)
        .into_iter()
        .map(|(eff, p)| {
            p * gaussian_exceedance(model.pair_mean(eff) + shift, model.sigma, reference)
        })
        .sum()
}

pub fn single_exceedance_probability(
    state: MtjState,
    model: &CurrentLevelModel,
    disturbance: &DisturbanceModel,
    reference: f64,
) -> f64 {
    let shift = disturbance.single_shift(state);
    let tail =
        |s: MtjState| gaussian_exceedance(model.single_mean(s) + shift, model.sigma, reference);
    match state {
        MtjState::P => tail(MtjState::P),
        MtjState::AP => {
            let rho = disturbance.collapse_probability(model.ambient_temp);
            rho * tail(MtjState::P) + (1.0 - rho) * tail(MtjState::AP)
        }
    }
}

/// One observed CimAND failure rate (`I > I_ref-and`) at a zone temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureTarget {
    pub zone_temp: f64,
    pub level: PairLevel,
    pub rate: f64,
}

/// CimAND failure rates to fit: the natural AP,P rate plus heated rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FailureTargets {
    pub natural_ap_p: f64,
    pub heated: Vec<FailureTarget>,
}

impl Default for FailureTargets {
    /// The measured CimAND failure rates at 20, 50 and 100 °C.
    fn default() -> Self {
        let row = |zone_temp, level, rate| FailureTarget {
            zone_temp,
            level,
            rate,
        };
        FailureTargets {
            natural_ap_p: 0.005,
            heated: vec![
                row(50.0, PairLevel::ApP, 0.006),
                row(50.0, PairLevel::ApAp, 0.0),
                row(100.0, PairLevel::ApP, 0.044),
                row(100.0, PairLevel::ApAp, 0.003),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub sigma: f64,
    pub collapse_a: f64,
    pub collapse_b: f64,
    /// Per-temperature collapse probability before the log-linear fit.
    pub rho_points: Vec<(f64, f64)>,
    /// RMS of analytic minus target over the heated rows, using the fit.
    pub residual_rms: f64,
}

const RHO_FLOOR: f64 = 1e-15;

/// Fits sense noise and the collapse law to observed CimAND failure rates.
///
/// `levels` supplies the pair margins and ambient temperature. The CimAND
/// reference is taken at the AP,P / P,P midpoint.
pub fn calibrate(
    targets: &FailureTargets,
    levels: &CurrentLevelModel,
    max_residual: f64,
) -> Result<Calibration> {
    levels.validate()?;
    let natural = targets.natural_ap_p;
    if !(natural > 0.0 && natural < 0.5) {
        return Err(Error::NonConvergence(format!(
            "natural AP,P rate {natural} cannot be produced by Gaussian noise"
        )));
    }
    let half_margin = levels.upper_pair_margin() / 2.0;
    let sigma = half_margin / normal_tail_inv(natural);
    let mut model = *levels;
    model.sigma = sigma;
    let reference = (levels.i_ap_p + levels.i_p_p) / 2.0;

    let rate_at = |level: PairLevel, rho: f64| -> f64 {
        let dist = DisturbanceModel::collapse(rho.ln(), 0.0, model.ambient_temp);
        pair_exceedance_probability(level, &model, &dist, reference)
    };

    let mut temps: Vec<f64> = targets.heated.iter().map(|t| t.zone_temp).collect();
    temps.sort_by(f64::total_cmp);
    temps.dedup();

    let mut rho_points = Vec::new();
    for &temp in &temps {
        let rows: Vec<&FailureTarget> = targets
            .heated
            .iter()
            .filter(|t| t.zone_temp == temp)
            .collect();
        let loss = |log_rho: f64| -> f64 {
            let rho = log_rho.exp();
            rows.iter()
                .map(|t| (rate_at(t.level, rho) - t.rate).powi(2))
                .sum()
        };
        let log_rho = golden_section(loss, RHO_FLOOR.ln(), 0.0, 1e-12);
        if log_rho <= RHO_FLOOR.ln() + 1e-6 {
            return Err(Error::NonConvergence(format!(
                "no collapse probability reproduces the {temp} °C rows"
            )));
        }
        rho_points.push((temp - levels.ambient_temp, log_rho.exp()));
    }
    if rho_points.len() < 2 {
        return Err(Error::NonConvergence(
            "need heated rows at two or more temperatures".into(),
        ));
    }

    // least-squares line through (dT, ln rho)
    let n = rho_points.len() as f64;
    let mean_x = rho_points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = rho_points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let sxx: f64 = rho_points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = rho_points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1.ln() - mean_y))
        .sum();
    if sxx == 0.0 {
        return Err(Error::NonConvergence("degenerate temperature set".into()));
    }
    let b = sxy / sxx;
    let a = mean_y - b * mean_x;

    let fitted = DisturbanceModel::collapse(a, b, 0.0);
    let residual_sq: f64 = targets
        .heated
        .iter()
        .map(|t| {
            let dist = DisturbanceModel {
                zone_temp: t.zone_temp,
                ..fitted
            };
            let p = pair_exceedance_probability(t.level, &model, &dist, reference);
            (p - t.rate).powi(2)
        })
        .sum();
    let residual_rms = (residual_sq / targets.heated.len() as f64).sqrt();
    if !(residual_rms <= max_residual) {
        return Err(Error::NonConvergence(format!(
            "fit residual {residual_rms:.3e} exceeds bound {max_residual:.3e}"
        )));
    }

    Ok(Calibration {
        sigma,
        collapse_a: a,
        collapse_b: b,
        rho_points,
        residual_rms,
    })
}

fn golden_section<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - ratio * (hi - lo);
    let mut d = lo + ratio * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while (hi - lo).abs() > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - ratio * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + ratio * (hi - lo);
            fd = f(d);
        }
    }
    (lo + hi) / 2.0
}
