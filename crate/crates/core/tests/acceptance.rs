//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spincim::array::{ArrayGeometry, BitWord, CimArray, CimOp, RowAddress, SenseConfig};
use spincim::attack::{
    attack_success_rate, mc_failure_rate, run_auth, AttackScenario, AttackVariant, AuthDb,
    Credential, CredentialPolicy,
};
use spincim::config::ExperimentConfig;
use spincim::cost::{cost_of, ArrayKind, CostMode, CostTable, OpClass};
use spincim::device::{CurrentLevelModel, DisturbanceModel, PairLevel};
use spincim::experiments;
use spincim::isa::{assemble, lower_to_conventional, random_cim_program, run, Machine};
use spincim::mitigation::SenseKind;
use spincim::sca::{
    accuracy_sweep, hamming_weight_attack, hamming_weight_from_energy, ObservationNoise,
};
use spincim::stats::binomial_stderr;

const SEED: u64 = 2021;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Verdict {
            pass,
            detail: detail.into(),
        }
    }
}

fn quiet_array(geometry: ArrayGeometry) -> CimArray {
    CimArray::with_noise(geometry, 0.0, SEED).expect("zero-noise array")
}

fn failure_table() -> Verdict {
    let cfg = ExperimentConfig::default();
    let start = Instant::now();
    let report = experiments::mc_failure(
        &cfg,
        &[PairLevel::ApAp, PairLevel::ApP],
        &[20.0, 50.0, 100.0],
    )
    .unwrap();
    let elapsed = start.elapsed();
    let rate = |pair, t: f64| {
        let c = report
            .result
            .cells
            .iter()
            .find(|c| c.pair == pair && c.zone_temp == t)
            .expect("cell present");
        (c.report.rate, c.report.failures)
    };
    let mut ok = true;
    let mut parts = Vec::new();
    for (pair, t, target, tol) in [
        (PairLevel::ApP, 20.0, 0.005, 0.002),
        (PairLevel::ApP, 50.0, 0.006, 0.003),
        (PairLevel::ApP, 100.0, 0.044, 0.006),
        (PairLevel::ApAp, 100.0, 0.003, 0.002),
    ] {
        let (r, _) = rate(pair, t);
        ok &= (r - target).abs() <= tol;
        parts.push(format!("{pair}@{t}={:.2}%", r * 100.0));
    }
    for t in [20.0, 50.0] {
        let (_, f) = rate(PairLevel::ApAp, t);
        ok &= f == 0;
        parts.push(format!("AP,AP@{t}={f} failures"));
    }
    ok &= elapsed < Duration::from_secs(10);
    Verdict::new(ok, format!("{} in {:.2?}", parts.join(", "), elapsed))
}

fn oracle_matrix() -> Verdict {
    let levels = CurrentLevelModel::default();
    let sense = SenseConfig::midpoints(&levels);
    let mut cells = 0;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    for (li, level) in PairLevel::ALL.into_iter().enumerate() {
        for (ti, t) in [20.0, 50.0, 75.0, 100.0].into_iter().enumerate() {
            for (ri, reference) in [sense.i_ref_or, sense.i_ref_and].into_iter().enumerate() {
                let d = DisturbanceModel::laser_heat(t, levels.ambient_temp);
                let seed = SEED + (li * 100 + ti * 10 + ri) as u64;
                let r = mc_failure_rate(level, &d, &levels, reference, 10_000, seed);
                ok &= r.agrees(3.0);
                if r.z_score().is_finite() {
                    worst = worst.max(r.z_score());
                }
                cells += 1;
            }
        }
    }
    ok &= cells >= 12;
    Verdict::new(ok, format!("{cells} cells, worst |z| = {worst:.2}"))
}

fn margins() -> Verdict {
    let r = experiments::margins(&ExperimentConfig::default()).result;
    let got = [
        r.read_margin_ua,
        r.lower_pair_margin_ua,
        r.upper_pair_margin_ua,
    ];
    let text = serde_json::to_string(&got).unwrap();
    Verdict::new(text == "[5.5,3.2,2.5]", format!("margins {text} µA"))
}

fn functional_suite() -> Verdict {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let mut ok = true;

    let mut tables = 0;
    for op in [CimOp::Read, CimOp::CimNot]
        .into_iter()
        .chain(CimOp::TWO_ROW)
    {
        let t = experiments::truth_table(&cfg, op, 0.0).unwrap();
        ok &= t.result.rows.iter().all(|r| r.output == r.expected);
        tables += 1;
    }

    // De Morgan on random 16-bit words
    let geometry = ArrayGeometry::default();
    let mut array = quiet_array(geometry);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let (a, b, s0, s1) = (
        RowAddress::new(0, 0),
        RowAddress::new(0, 1),
        RowAddress::new(0, 2),
        RowAddress::new(0, 3),
    );
    let mask = geometry.word_mask();
    let mut demorgan = true;
    for _ in 0..1000 {
        let (x, y) = (rng.random::<u64>() & mask, rng.random::<u64>() & mask);
        array
            .preload(a, BitWord::new(x, geometry.cols_per_row))
            .unwrap();
        array
            .preload(b, BitWord::new(y, geometry.cols_per_row))
            .unwrap();
        let nand = array.cim_two_row(CimOp::CimNand, a, b).unwrap().bits();
        let nor = array.cim_two_row(CimOp::CimNor, a, b).unwrap().bits();
        let na = array.cim_not(a).unwrap().bits();
        let nb = array.cim_not(b).unwrap().bits();
        demorgan &= nand == (na | nb) & mask && nor == na & nb;
    }
    ok &= demorgan;

    // every 8-bit operand pair, in a 9-column word so the carry shows
    let add_geometry = ArrayGeometry::new(1, 4, 9).unwrap();
    let mut adder = quiet_array(add_geometry);
    adder.set_tracing(false);
    let mut add_ok = true;
    for x in 0u64..256 {
        adder.preload(a, BitWord::new(x, 9)).unwrap();
        for y in 0u64..256 {
            adder.preload(b, BitWord::new(y, 9)).unwrap();
            adder.cim_add(a, b, s0).unwrap();
            add_ok &= adder.peek(s0).unwrap().bits() == x + y;
        }
    }
    ok &= add_ok;

    let mut xnor_ok = true;
    for _ in 0..1000 {
        let x = rng.random::<u64>() & mask;
        array
            .preload(a, BitWord::new(x, geometry.cols_per_row))
            .unwrap();
        array
            .preload(b, BitWord::new(x, geometry.cols_per_row))
            .unwrap();
        xnor_ok &= array.cim_xnor(a, b, [s0, s1]).unwrap().is_all_ones();
    }
    ok &= xnor_ok;

    let elapsed = start.elapsed();
    ok &= elapsed < Duration::from_secs(30);
    Verdict::new(
        ok,
        format!(
            "{tables} truth tables, De Morgan {demorgan}, 65536 adds {add_ok}, XNOR(x,x) {xnor_ok}, {elapsed:.2?}"
        ),
    )
}

fn instruction_counts() -> Verdict {
    let conventional = assemble(include_str!("../../../programs/add_conventional.cim")).unwrap();
    let direct = assemble(include_str!("../../../programs/add.cim")).unwrap();
    let mut m = Machine::new(quiet_array(ArrayGeometry::default()));
    let c = run(&conventional, &mut m).unwrap().stats;
    let mut m = Machine::new(quiet_array(ArrayGeometry::default()));
    let d = run(&direct, &mut m).unwrap().stats;
    let mut ok = (c.instruction_count, c.memory_access_count) == (4, 3);
    ok &= (d.instruction_count, d.memory_access_count) == (1, 1);

    let geometry = ArrayGeometry::default();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut agree = 0;
    for _ in 0..100 {
        let p = random_cim_program(&mut rng, &geometry, 24);
        let mut direct = Machine::new(quiet_array(geometry));
        let mut lowered = Machine::new(quiet_array(geometry));
        run(&p, &mut direct).unwrap();
        run(&lower_to_conventional(&p), &mut lowered).unwrap();
        if direct.array.snapshot() == lowered.array.snapshot()
            && direct.registers[..6] == lowered.registers[..6]
        {
            agree += 1;
        }
    }
    ok &= agree == 100;
    Verdict::new(
        ok,
        format!(
            "conventional {}/{}, CimADD {}/{}, differential {agree}/100",
            c.instruction_count, c.memory_access_count, d.instruction_count, d.memory_access_count
        ),
    )
}

fn attack_algebra() -> Verdict {
    let levels = CurrentLevelModel::default().with_sigma(0.0);
    let db = AuthDb::demo(16);
    let xnor = attack_success_rate(
        &db,
        &CredentialPolicy::RANDOM,
        &AttackScenario::forced(AttackVariant::XnorLevel),
        &levels,
        1000,
        SEED,
    )
    .unwrap();
    let mut ok = xnor.failures == xnor.trials;

    let mut array = CimArray::new(
        db.geometry(),
        levels,
        SenseConfig::midpoints(&levels),
        CostTable::default(),
        SEED,
    )
    .unwrap();
    db.install(&mut array).unwrap();
    let c = db.entries[0];
    let gate = AttackScenario::forced(AttackVariant::GateLevel);
    let mut combos = 0;
    for (u_ok, p_ok) in [(true, true), (true, false), (false, true), (false, false)] {
        let typed = Credential {
            username: if u_ok {
                c.username
            } else {
                c.username ^ 0x0101
            },
            password: if p_ok {
                c.password
            } else {
                !c.password & 0xffff
            },
        };
        if run_auth(&mut array, &db, typed, &gate).unwrap().accept == (u_ok || p_ok) {
            combos += 1;
        }
    }
    ok &= combos == 4;
    Verdict::new(
        ok,
        format!(
            "forced XNOR accepted {}/{} random logins, forced gate OR {combos}/4",
            xnor.failures, xnor.trials
        ),
    )
}

fn probabilistic_attack() -> Verdict {
    let cfg = ExperimentConfig::default();
    let xnor = experiments::auth_attack(&cfg).unwrap().result.report;
    let mut gate_cfg = cfg.clone();
    gate_cfg.attack.variant = AttackVariant::GateLevel;
    gate_cfg.attack.policy = CredentialPolicy::CORRECT_USER_RANDOM_PASSWORD;
    let gate = experiments::auth_attack(&gate_cfg).unwrap().result.report;
    let ok = xnor.trials == 10_000 && xnor.agrees(3.0) && gate.agrees(3.0);
    Verdict::new(
        ok,
        format!(
            "XnorLevel@100 {:.3}% vs {:.3}% (z {:.2}), GateLevel@100 {:.3}% vs {:.3}% (z {:.2})",
            xnor.rate * 100.0,
            xnor.analytic_rate * 100.0,
            xnor.z_score(),
            gate.rate * 100.0,
            gate.analytic_rate * 100.0,
            gate.z_score()
        ),
    )
}

fn sca_claim() -> Verdict {
    let table = CostTable::default();
    let noise: Vec<_> = [0.0, 0.5, 1.0, 2.0, 5.0]
        .into_iter()
        .map(|e| ObservationNoise::new(if e == 0.0 { 0.0 } else { 0.05 }, e))
        .collect();
    let points = accuracy_sweep(&table, &noise, 10_000, SEED).unwrap();
    let mut ok = points[0].standard_accuracy == 1.0 && points[0].enhanced_accuracy == 1.0;
    let mut parts = Vec::new();
    for p in &points {
        ok &= p.enhanced_accuracy <= p.standard_accuracy;
        parts.push(format!(
            "σE={}: {:.3}/{:.3}",
            p.sigma_energy_fj, p.standard_accuracy, p.enhanced_accuracy
        ));
    }

    // Hamming weight from the array's own write trace
    let width = 12;
    let bit_table = table.clone().with_mode(CostMode::PerBitWrites);
    let mut array = CimArray::new(
        ArrayGeometry::new(1, 1, width).unwrap(),
        CurrentLevelModel::default(),
        SenseConfig::midpoints(&CurrentLevelModel::default()),
        bit_table.clone(),
        SEED,
    )
    .unwrap();
    let row = RowAddress::new(0, 0);
    let e1 = cost_of(OpClass::Write1, &bit_table, ArrayKind::Standard)
        .unwrap()
        .energy_fj;
    let e0 = cost_of(OpClass::Write0, &bit_table, ArrayKind::Standard)
        .unwrap()
        .energy_fj;
    let mut exact = 0;
    for word in 0u64..1 << width {
        array.write_word(row, BitWord::new(word, width)).unwrap();
        let trace = array.take_trace();
        let from_trace =
            hamming_weight_attack(&trace, width, &bit_table, ArrayKind::Enhanced).unwrap();
        let ones = word.count_ones() as usize;
        let e = ones as f64 * e1 + (width - ones) as f64 * e0;
        let standard =
            hamming_weight_from_energy(e, width, &bit_table, ArrayKind::Standard).unwrap();
        if from_trace == ones && standard == ones {
            exact += 1;
        }
    }
    ok &= exact == 1 << width;
    Verdict::new(
        ok,
        format!(
            "standard/enhanced {}, Hamming exact {exact}/4096",
            parts.join(", ")
        ),
    )
}

fn mitigation() -> Verdict {
    let cfg = ExperimentConfig::default();
    let r = experiments::mitigate(&cfg).unwrap().result;
    let mut ok = true;
    let mut worst: f64 = 0.0;
    for c in &r.mean_shift.cells {
        let diff = (c.after.rate - c.natural_rate).abs();
        let se = binomial_stderr(c.natural_rate, c.after.trials);
        let within = diff <= 3.0 * se
            || (c.after.failures == 0 && c.natural_rate * (c.after.trials as f64) < 1.0);
        ok &= within;
        if se > 0.0 {
            worst = worst.max(diff / se);
        }
    }
    let cell = r.collapse.cell(PairLevel::ApP, SenseKind::And).unwrap();
    ok &= cell.after.rate < cell.before.rate && cell.after.trials == 10_000;
    Verdict::new(
        ok,
        format!(
            "mean shift worst |z| vs natural {worst:.2}; collapse AP,P AND {:.2}% -> {:.2}%",
            cell.before.rate * 100.0,
            cell.after.rate * 100.0
        ),
    )
}

fn all_reports(cfg: &ExperimentConfig) -> Vec<String> {
    let add = include_str!("../../../programs/add.cim");
    vec![
        experiments::margins(cfg).to_json(),
        experiments::truth_table(cfg, CimOp::CimXor, 0.5)
            .unwrap()
            .to_json(),
        experiments::mc_failure(cfg, &PairLevel::ALL, &[20.0, 100.0])
            .unwrap()
            .to_json(),
        experiments::auth_attack(cfg).unwrap().to_json(),
        experiments::isa_run(cfg, add, true, 0.5)
            .unwrap()
            .0
            .to_json(),
        experiments::sca(cfg).unwrap().to_json(),
        experiments::mitigate(cfg).unwrap().to_json(),
        experiments::calibrate_report(cfg).unwrap().to_json(),
    ]
}

fn determinism() -> Verdict {
    let mut cfg = ExperimentConfig::default();
    cfg.trials = 2000;
    cfg.sca.per_class = 1000;
    let in_pool = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| all_reports(&cfg))
    };
    let one = in_pool(1);
    let four = in_pool(4);
    let again = in_pool(4);
    let same = one.iter().zip(&four).filter(|(a, b)| a == b).count();
    let ok = one == four && four == again;
    Verdict::new(
        ok,
        format!("{same}/{} reports identical at 1 vs 4 threads", one.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("failure-rate table", failure_table),
        ("oracle equivalence", oracle_matrix),
        ("margins", margins),
        ("zero-noise functional suite", functional_suite),
        ("instruction counts and lowering", instruction_counts),
        ("attack algebra", attack_algebra),
        ("probabilistic attack", probabilistic_attack),
        ("side-channel comparison", sca_claim),
        ("mitigation", mitigation),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        let tag = if v.pass { "PASS" } else { "FAIL" };
        println!("criterion {:>2} {tag}: {name}: {}", i + 1, v.detail);
        if !v.pass {
            failed += 1;
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
