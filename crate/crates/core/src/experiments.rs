//! Report builders behind the command-line subcommands. Every report
//! carries the config hash and master seed so it can be replayed.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::array::{ArrayGeometry, BitWord, CimArray, CimOp, RowAddress};
use crate::attack::{
    accept_probability, attack_success_rate, mc_failure_rate, sense_one_probability,
    AttackScenario, AuthDb, CredentialPolicy,
};
use crate::config::ExperimentConfig;
use crate::cost::{ArrayKind, CostMode, ExecutionTrace};
use crate::device::{
    calibrate, single_exceedance_probability, Calibration, CurrentLevelModel, DisturbanceModel,
    MtjState, PairLevel,
};
use crate::error::{Error, Result};
use crate::isa::{assemble, lower_to_conventional, run, static_fingerprint, ExecStats, Machine};
use crate::mitigation::{adapt_references, evaluate_mitigation, MitigationReport};
use crate::sca::{
    accuracy_sweep, hamming_recovery_rate, min_feature_distance, obscuring_experiment,
    AccuracyPoint, ObscuringReport, ObservationNoise,
};
use crate::stats::McReport;

/// Margins and other µA quantities are reported at this resolution so that
/// differences of decimal inputs print cleanly.
const CURRENT_RESOLUTION: f64 = 1e-9;

fn round_current(x: f64) -> f64 {
    (x / CURRENT_RESOLUTION).round() * CURRENT_RESOLUTION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    fn new(experiment: &str, cfg: &ExperimentConfig, result: T) -> Self {
        Report {
            experiment: experiment.to_string(),
            config_hash: cfg.hash(),
            seed: cfg.seed,
            result,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Writes `<dir>/<experiment>.json` and returns its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(format!("{}.json", self.experiment));
        std::fs::write(&path, self.to_json())?;
        Ok(path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginsResult {
    pub read_margin_ua: f64,
    pub lower_pair_margin_ua: f64,
    pub upper_pair_margin_ua: f64,
    pub levels: CurrentLevelModel,
    pub i_ref_read: f64,
    pub i_ref_or: f64,
    pub i_ref_and: f64,
    pub device_parameters: crate::config::DeviceParameters,
}

pub fn margins(cfg: &ExperimentConfig) -> Report<MarginsResult> {
    let l = cfg.levels();
    let s = cfg.sense();
    Report::new(
        "margins",
        cfg,
        MarginsResult {
            read_margin_ua: round_current(l.read_margin()),
            lower_pair_margin_ua: round_current(l.lower_pair_margin()),
            upper_pair_margin_ua: round_current(l.upper_pair_margin()),
            levels: l,
            i_ref_read: s.i_ref_read,
            i_ref_or: s.i_ref_or,
            i_ref_and: s.i_ref_and,
            device_parameters: cfg.device.parameters.clone(),
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRow {
    pub a: u8,
    pub b: Option<u8>,
    pub expected: u8,
    pub output: u8,
    /// Closed-form probability that the output is 1 at this noise.
    pub p_one: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthTableResult {
    pub op: CimOp,
    pub noise_sigma: f64,
    pub rows: Vec<TruthRow>,
}

/// One evaluation of `op` on every input combination.
pub fn truth_table(
    cfg: &ExperimentConfig,
    op: CimOp,
    noise_sigma: f64,
) -> Result<Report<TruthTableResult>> {
    let levels = cfg.levels().with_sigma(noise_sigma);
    levels.validate()?;
    let sense = cfg.sense();
    let geometry = ArrayGeometry::new(1, 2, 4)?;
    let mut array = CimArray::new(geometry, levels, sense, cfg.cost.clone(), cfg.seed)?;
    let (a_row, b_row) = (RowAddress::new(0, 0), RowAddress::new(0, 1));
    // column i holds a = bit 1 of i, b = bit 0 of i
    array.preload(a_row, BitWord::new(0b1100, 4))?;
    array.preload(b_row, BitWord::new(0b1010, 4))?;
    let none = DisturbanceModel::none();
    let rows = match op {
        CimOp::Read | CimOp::CimNot => {
            let out = if op == CimOp::Read {
                array.read_word(a_row)?
            } else {
                array.cim_not(a_row)?
            };
            [1usize, 3]
                .iter()
                .enumerate()
                .map(|(i, &col)| {
                    let a = i as u8;
                    let above = single_exceedance_probability(
                        MtjState::from_bit(a == 1),
                        &levels,
                        &none,
                        sense.i_ref_read,
                    );
                    let expected = if op == CimOp::Read { a } else { 1 - a };
                    TruthRow {
                        a,
                        b: None,
                        expected,
                        output: out.bit(col) as u8,
                        p_one: if op == CimOp::Read {
                            above
                        } else {
                            1.0 - above
                        },
                    }
                })
                .collect()
        }
        op if CimOp::TWO_ROW.contains(&op) => {
            let out = array.cim_two_row(op, a_row, b_row)?;
            (0..4)
                .map(|col| {
                    let a = (col >> 1 & 1) as u8;
                    let b = (col & 1) as u8;
                    let level =
                        PairLevel::of(MtjState::from_bit(a == 1), MtjState::from_bit(b == 1));
                    TruthRow {
                        a,
                        b: Some(b),
                        expected: op.apply(a == 1, b == 1) as u8,
                        output: out.bit(col) as u8,
                        p_one: sense_one_probability(sense.rule(op), level, false, None, &levels),
                    }
                })
                .collect()
        }
        other => {
            return Err(Error::UnknownOp(format!(
                "{other} has no single-bit truth table"
            )))
        }
    };
    Ok(Report::new(
        "truth-table",
        cfg,
        TruthTableResult {
            op,
            noise_sigma,
            rows,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureCell {
    pub pair: PairLevel,
    pub zone_temp: f64,
    pub collapse_probability: f64,
    pub report: McReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McFailureResult {
    pub i_ref_and: f64,
    pub cells: Vec<FailureCell>,
}

impl McFailureResult {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "pair",
            "zone_temp",
            "trials",
            "failures",
            "rate",
            "ci_low",
            "ci_high",
            "analytic_rate",
        ])?;
        for c in &self.cells {
            let r = &c.report;
            w.write_record([
                c.pair.to_string(),
                c.zone_temp.to_string(),
                r.trials.to_string(),
                r.failures.to_string(),
                r.rate.to_string(),
                r.wilson_95_ci[0].to_string(),
                r.wilson_95_ci[1].to_string(),
                r.analytic_rate.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// CimAND failure rates (`I > I_ref-and`) for every pair and temperature.
/// All cells share the master seed, so rates are coupled across
/// temperatures.
pub fn mc_failure(
    cfg: &ExperimentConfig,
    pairs: &[PairLevel],
    temps: &[f64],
) -> Result<Report<McFailureResult>> {
    let levels = cfg.levels();
    let sense = cfg.sense();
    let mut cells = Vec::new();
    for &pair in pairs {
        for &t in temps {
            if t < levels.ambient_temp {
                return Err(Error::Config(format!(
                    "zone temperature {t} °C is below ambient"
                )));
            }
            let d = DisturbanceModel::laser_heat_with(
                t,
                levels.ambient_temp,
                cfg.device.collapse_a,
                cfg.device.collapse_b,
            );
            cells.push(FailureCell {
                pair,
                zone_temp: t,
                collapse_probability: d.collapse_probability(levels.ambient_temp),
                report: mc_failure_rate(pair, &d, &levels, sense.i_ref_and, cfg.trials, cfg.seed),
            });
        }
    }
    Ok(Report::new(
        "mc-failure",
        cfg,
        McFailureResult {
            i_ref_and: sense.i_ref_and,
            cells,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuthAttackResult {
    pub scenario: AttackScenario,
    pub policy: CredentialPolicy,
    pub credential_width: usize,
    /// Acceptance probability of the exact stored credentials.
    pub correct_login_probability: f64,
    pub report: McReport,
}

pub fn auth_attack(cfg: &ExperimentConfig) -> Result<Report<AuthAttackResult>> {
    let levels = cfg.levels();
    let db = AuthDb::demo(cfg.attack.credential_width);
    let scenario = cfg.attack_scenario();
    let report = attack_success_rate(
        &db,
        &cfg.attack.policy,
        &scenario,
        &levels,
        cfg.trials,
        cfg.seed,
    )?;
    let correct = accept_probability(&db, db.entries[0], &scenario, &levels, &cfg.sense());
    Ok(Report::new(
        "auth-attack",
        cfg,
        AuthAttackResult {
            scenario,
            policy: cfg.attack.policy,
            credential_width: db.width,
            correct_login_probability: correct,
            report,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramRun {
    pub listing: Vec<String>,
    pub stats: ExecStats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsaRunResult {
    pub noise_sigma: f64,
    pub direct: ProgramRun,
    pub lowered: Option<ProgramRun>,
    /// Whether both runs leave the array in the same state.
    pub same_final_memory: Option<bool>,
    pub fingerprint: String,
}

/// Runs an assembly program and, optionally, its conventional lowering on
/// a fresh machine. Returns the report and the direct run's trace.
pub fn isa_run(
    cfg: &ExperimentConfig,
    source: &str,
    compare_lowered: bool,
    noise_sigma: f64,
) -> Result<(Report<IsaRunResult>, ExecutionTrace)> {
    let program = assemble(source)?;
    let levels = cfg.levels().with_sigma(noise_sigma);
    levels.validate()?;
    let machine = || -> Result<Machine> {
        Ok(Machine::new(CimArray::new(
            cfg.array.geometry,
            levels,
            cfg.sense(),
            cfg.cost.clone(),
            cfg.seed,
        )?))
    };
    let listing = |p: &crate::isa::Program| p.instructions.iter().map(|i| i.to_string()).collect();

    let mut m = machine()?;
    let fingerprint = static_fingerprint(&m.description());
    let out = run(&program, &mut m)?;
    let mut lowered = None;
    let mut same = None;
    if compare_lowered {
        let lp = lower_to_conventional(&program);
        let mut lm = machine()?;
        let lo = run(&lp, &mut lm)?;
        same = Some(lm.array.snapshot() == m.array.snapshot());
        lowered = Some(ProgramRun {
            listing: listing(&lp),
            stats: lo.stats,
        });
    }
    let report = Report::new(
        "isa-run",
        cfg,
        IsaRunResult {
            noise_sigma,
            direct: ProgramRun {
                listing: listing(&program),
                stats: out.stats,
            },
            lowered,
            same_final_memory: same,
            fingerprint,
        },
    );
    Ok((report, out.trace))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HammingPoint {
    pub sigma_energy_fj: f64,
    pub recovery: McReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaResult {
    pub standard_min_feature_distance: f64,
    pub enhanced_min_feature_distance: f64,
    pub accuracy: Vec<AccuracyPoint>,
    pub hamming_width: usize,
    pub hamming: Vec<HammingPoint>,
    pub obscuring: ObscuringReport,
}

impl ScaResult {
    pub fn accuracy_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "sigma_delay_ns",
            "sigma_energy_fJ",
            "per_class",
            "standard_accuracy",
            "enhanced_accuracy",
        ])?;
        for p in &self.accuracy {
            w.write_record([
                p.sigma_delay_ns.to_string(),
                p.sigma_energy_fj.to_string(),
                p.per_class.to_string(),
                p.standard_accuracy.to_string(),
                p.enhanced_accuracy.to_string(),
            ])?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv is utf-8"))
    }
}

/// Classifier accuracy sweep, Hamming-weight recovery and the obscuring
/// experiment. Zero energy noise in the sweep also zeroes delay noise.
pub fn sca(cfg: &ExperimentConfig) -> Result<Report<ScaResult>> {
    let table = &cfg.cost;
    let noise: Vec<_> = cfg
        .sca
        .energy_noise_fj
        .iter()
        .map(|&e| {
            ObservationNoise::new(
                if e == 0.0 {
                    0.0
                } else {
                    cfg.sca.sigma_delay_ns
                },
                e,
            )
        })
        .collect();
    let accuracy = accuracy_sweep(table, &noise, cfg.sca.per_class, cfg.seed)?;
    let bit_table = table.clone().with_mode(CostMode::PerBitWrites);
    let hamming = cfg
        .sca
        .hamming_noise_fj
        .iter()
        .map(|&s| {
            Ok(HammingPoint {
                sigma_energy_fj: s,
                recovery: hamming_recovery_rate(
                    cfg.sca.hamming_width,
                    s,
                    &bit_table,
                    ArrayKind::Standard,
                    cfg.trials,
                    cfg.seed,
                )?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let obscuring = obscuring_experiment(
        table,
        cfg.sca.obscuring_op,
        &cfg.sca.obscuring_noise,
        cfg.trials,
        cfg.seed,
    )?;
    Ok(Report::new(
        "sca",
        cfg,
        ScaResult {
            standard_min_feature_distance: min_feature_distance(table, ArrayKind::Standard),
            enhanced_min_feature_distance: min_feature_distance(table, ArrayKind::Enhanced),
            accuracy,
            hamming_width: cfg.sca.hamming_width,
            hamming,
            obscuring,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigateResult {
    /// Mean-shift heating with a perfect estimate.
    pub mean_shift: MitigationReport,
    /// Collapse heating with the configured estimate.
    pub collapse: MitigationReport,
    /// No heating, references moved anyway.
    pub miscalibrated: MitigationReport,
}

pub fn mitigate(cfg: &ExperimentConfig) -> Result<Report<MitigateResult>> {
    let levels = cfg.levels();
    let base = cfg.sense();
    let m = &cfg.mitigation;
    let shift =
        DisturbanceModel::mean_shift(m.mean_shift.alpha, m.mean_shift.beta, m.mean_shift.gamma);
    let exact = adapt_references(&base, &levels, &m.mean_shift)?;
    let heated = DisturbanceModel::laser_heat_with(
        m.zone_temp,
        levels.ambient_temp,
        cfg.device.collapse_a,
        cfg.device.collapse_b,
    );
    let guessed = adapt_references(&base, &levels, &m.collapse_estimate)?;
    Ok(Report::new(
        "mitigate",
        cfg,
        MitigateResult {
            mean_shift: evaluate_mitigation(&shift, &levels, &base, &exact, cfg.trials, cfg.seed)?,
            collapse: evaluate_mitigation(&heated, &levels, &base, &guessed, cfg.trials, cfg.seed)?,
            miscalibrated: evaluate_mitigation(
                &DisturbanceModel::none(),
                &levels,
                &base,
                &guessed,
                cfg.trials,
                cfg.seed,
            )?,
        },
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrateResult {
    pub fit: Calibration,
    pub configured_sigma: f64,
    pub configured_collapse_a: f64,
    pub configured_collapse_b: f64,
    /// Largest relative deviation of the fit from the configured values.
    pub max_relative_deviation: f64,
}

pub fn calibrate_report(cfg: &ExperimentConfig) -> Result<Report<CalibrateResult>> {
    let levels = cfg.levels();
    let fit = calibrate(
        &cfg.calibration.targets,
        &levels,
        cfg.calibration.max_residual,
    )?;
    let rel = |fit: f64, cur: f64| ((fit - cur) / cur).abs();
    let dev = rel(fit.sigma, levels.sigma)
        .max(rel(fit.collapse_a, cfg.device.collapse_a))
        .max(rel(fit.collapse_b, cfg.device.collapse_b));
    Ok(Report::new(
        "calibrate",
        cfg,
        CalibrateResult {
            fit,
            configured_sigma: levels.sigma,
            configured_collapse_a: cfg.device.collapse_a,
            configured_collapse_b: cfg.device.collapse_b,
            max_relative_deviation: dev,
        },
    ))
}
