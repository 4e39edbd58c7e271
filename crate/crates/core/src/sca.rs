//! Side-channel view of the array: operation classification from
//! (duration, energy) observations and Hamming-weight leakage of writes.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cost::{cost_of, ArrayKind, CostTable, ExecutionTrace, OpClass, OpCost, PowerTrace};
use crate::error::{Error, Result};
use crate::stats::{normal_tail, trial_rng, McReport};

/// Pairs of classes closer than this many noise standard deviations are
/// reported as ill-separated.
pub const SEPARATION_THRESHOLD: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledObservation {
    pub duration_ns: f64,
    pub energy_fj: f64,
    pub label: OpClass,
}

impl LabeledObservation {
    pub fn features(&self) -> [f64; 2] {
        [self.duration_ns, self.energy_fj]
    }
}

/// Independent additive Gaussian noise on the two features.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ObservationNoise {
    pub sigma_delay_ns: f64,
    pub sigma_energy_fj: f64,
}

impl ObservationNoise {
    pub fn new(sigma_delay_ns: f64, sigma_energy_fj: f64) -> Self {
        ObservationNoise {
            sigma_delay_ns,
            sigma_energy_fj,
        }
    }

    fn sample<R: Rng + ?Sized>(&self, cost: OpCost, rng: &mut R) -> [f64; 2] {
        let d = Normal::new(0.0, self.sigma_delay_ns).expect("finite sigma");
        let e = Normal::new(0.0, self.sigma_energy_fj).expect("finite sigma");
        [
            cost.delay_ns + d.sample(rng),
            cost.energy_fj + e.sample(rng),
        ]
    }
}

/// `per_class` noisy observations of every class of the given array kind.
pub fn generate_observations<R: Rng + ?Sized>(
    table: &CostTable,
    kind: ArrayKind,
    per_class: usize,
    noise: ObservationNoise,
    rng: &mut R,
) -> Result<Vec<LabeledObservation>> {
    let classes: &[OpClass] = match kind {
        ArrayKind::Standard => &OpClass::STANDARD,
        ArrayKind::Enhanced => &OpClass::ENHANCED,
    };
    let mut out = Vec::with_capacity(classes.len() * per_class);
    for &class in classes {
        let cost = cost_of(class, table, kind)?;
        for _ in 0..per_class {
            let [d, e] = noise.sample(cost, rng);
            out.push(LabeledObservation {
                duration_ns: d,
                energy_fj: e,
                label: class,
            });
        }
    }
    Ok(out)
}

/// Nearest-centroid classifier with a shared diagonal covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidClassifier {
    pub classes: Vec<OpClass>,
    pub centroids: Vec<[f64; 2]>,
    /// Pooled within-class variance per feature; all ones when the data
    /// carry no spread, which reduces the metric to Euclidean.
    pub variance: [f64; 2],
}

impl CentroidClassifier {
    fn distance2(&self, x: [f64; 2], c: [f64; 2]) -> f64 {
        (x[0] - c[0]).powi(2) / self.variance[0] + (x[1] - c[1]).powi(2) / self.variance[1]
    }

    pub fn classify_index(&self, x: [f64; 2]) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centroids.iter().enumerate() {
            let d = self.distance2(x, *c);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best
    }

    pub fn classify(&self, x: [f64; 2]) -> OpClass {
        self.classes[self.classify_index(x)]
    }

    /// Smallest centroid distance in units of the pooled standard deviation.
    pub fn min_separation(&self) -> f64 {
        let mut min = f64::INFINITY;
        for i in 0..self.centroids.len() {
            for j in i + 1..self.centroids.len() {
                min = min.min(self.distance2(self.centroids[i], self.centroids[j]).sqrt());
            }
        }
        min
    }

    pub fn ill_separated(&self) -> bool {
        self.min_separation() < SEPARATION_THRESHOLD
    }
}

/// Fits class means and the pooled diagonal variance. Every class in
/// `classes` needs at least one observation; others are ignored.
pub fn train(
    observations: &[LabeledObservation],
    classes: &[OpClass],
) -> Result<CentroidClassifier> {
    // running means stay exact when every observation of a class is equal
    let mut centroids = vec![[0.0f64; 2]; classes.len()];
    let mut counts = vec![0usize; classes.len()];
    let mut ss = [0.0f64; 2];
    let mut n = 0usize;
    for o in observations {
        if let Some(i) = classes.iter().position(|c| *c == o.label) {
            counts[i] += 1;
            n += 1;
            for (f, x) in o.features().into_iter().enumerate() {
                let delta = x - centroids[i][f];
                centroids[i][f] += delta / counts[i] as f64;
                ss[f] += delta * (x - centroids[i][f]);
            }
        }
    }
    if let Some(i) = counts.iter().position(|&n| n == 0) {
        return Err(Error::MissingClass(classes[i].name().to_string()));
    }
    let dof = n.saturating_sub(classes.len()).max(1) as f64;
    let mut variance = [ss[0] / dof, ss[1] / dof];
    if !(variance[0] > 0.0 && variance[1] > 0.0) {
        variance = [1.0, 1.0];
    }
    Ok(CentroidClassifier {
        classes: classes.to_vec(),
        centroids,
        variance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<OpClass>,
    /// `counts[true][predicted]`
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Row-normalized matrix; empty rows stay zero.
    pub fn rates(&self) -> Vec<Vec<f64>> {
        self.counts
            .iter()
            .map(|row| {
                let n: u64 = row.iter().sum();
                row.iter()
                    .map(|&c| if n == 0 { 0.0 } else { c as f64 / n as f64 })
                    .collect()
            })
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: u64 = (0..self.classes.len()).map(|i| self.counts[i][i]).sum();
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        }
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["true\\predicted".to_string()];
        header.extend(self.classes.iter().map(|c| c.name().to_string()));
        w.write_record(&header)?;
        for (c, row) in self.classes.iter().zip(&self.counts) {
            let mut rec = vec![c.name().to_string()];
            rec.extend(row.iter().map(u64::to_string));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Observations whose label the classifier does not know are skipped.
pub fn confusion_matrix(
    classifier: &CentroidClassifier,
    test: &[LabeledObservation],
) -> ConfusionMatrix {
    let k = classifier.classes.len();
    let mut counts = vec![vec![0u64; k]; k];
    for o in test {
        if let Some(t) = classifier.classes.iter().position(|c| *c == o.label) {
            counts[t][classifier.classify_index(o.features())] += 1;
        }
    }
    ConfusionMatrix {
        classes: classifier.classes.clone(),
        counts,
    }
}

/// Smallest raw Euclidean distance between the cost rows of an array kind.
pub fn min_feature_distance(table: &CostTable, kind: ArrayKind) -> f64 {
    let rows: Vec<_> = table.rows(kind).values().collect();
    let mut min = f64::INFINITY;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d = ((rows[i].delay_ns - rows[j].delay_ns).powi(2)
                + (rows[i].energy_fj - rows[j].energy_fj).powi(2))
            .sqrt();
            min = min.min(d);
        }
    }
    min
}

/// Probability mass of the Gaussian `N(center, diag(sigma²))` that the
/// classifier assigns to class index `target`, by midpoint integration over
/// ±`span` standard deviations on a `steps × steps` grid.
pub fn gaussian_assignment_probability(
    classifier: &CentroidClassifier,
    center: [f64; 2],
    sigma: [f64; 2],
    target: usize,
    steps: usize,
) -> f64 {
    if sigma[0] == 0.0 || sigma[1] == 0.0 {
        return (classifier.classify_index(center) == target) as u8 as f64;
    }
    let span = 7.0;
    let h = 2.0 * span / steps as f64;
    let weights: Vec<f64> = (0..steps)
        .map(|i| {
            let lo = -span + i as f64 * h;
            normal_tail(lo) - normal_tail(lo + h)
        })
        .collect();
    let mut p = 0.0;
    for i in 0..steps {
        let zx = -span + (i as f64 + 0.5) * h;
        for j in 0..steps {
            let zy = -span + (j as f64 + 0.5) * h;
            let x = [center[0] + zx * sigma[0], center[1] + zy * sigma[1]];
            if classifier.classify_index(x) == target {
                p += weights[i] * weights[j];
            }
        }
    }
    p
}

/// Expected accuracy of `classifier` on equally weighted classes whose
/// observations are Gaussian around the cost rows.
pub fn expected_accuracy(
    classifier: &CentroidClassifier,
    table: &CostTable,
    kind: ArrayKind,
    noise: ObservationNoise,
) -> Result<f64> {
    let sigma = [noise.sigma_delay_ns, noise.sigma_energy_fj];
    let mut acc = 0.0;
    for (i, &class) in classifier.classes.iter().enumerate() {
        let c = cost_of(class, table, kind)?;
        acc +=
            gaussian_assignment_probability(classifier, [c.delay_ns, c.energy_fj], sigma, i, 400);
    }
    Ok(acc / classifier.classes.len() as f64)
}

/// Accuracy of one train/test round at a noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyPoint {
    pub sigma_delay_ns: f64,
    pub sigma_energy_fj: f64,
    pub per_class: usize,
    pub standard_accuracy: f64,
    pub enhanced_accuracy: f64,
    pub standard_min_separation: f64,
    pub enhanced_min_separation: f64,
}

/// Trains and tests both the 4-class and the 11-class attacker at each noise
/// level with the same sample sizes and seeds.
pub fn accuracy_sweep(
    table: &CostTable,
    noise_levels: &[ObservationNoise],
    per_class: usize,
    seed: u64,
) -> Result<Vec<AccuracyPoint>> {
    noise_levels
        .iter()
        .enumerate()
        .map(|(i, &noise)| {
            let run = |kind: ArrayKind, classes: &[OpClass], stream: u64| -> Result<(f64, f64)> {
                let mut rng = trial_rng(seed, 4 * i as u64 + stream);
                let train_set = generate_observations(table, kind, per_class, noise, &mut rng)?;
                let test_set = generate_observations(table, kind, per_class, noise, &mut rng)?;
                let clf = train(&train_set, classes)?;
                Ok((
                    confusion_matrix(&clf, &test_set).accuracy(),
                    clf.min_separation(),
                ))
            };
            let (sa, ss) = run(ArrayKind::Standard, &OpClass::STANDARD, 0)?;
            let (ea, es) = run(ArrayKind::Enhanced, &OpClass::ENHANCED, 1)?;
            Ok(AccuracyPoint {
                sigma_delay_ns: noise.sigma_delay_ns,
                sigma_energy_fj: noise.sigma_energy_fj,
                per_class,
                standard_accuracy: sa,
                enhanced_accuracy: ea,
                standard_min_separation: ss,
                enhanced_min_separation: es,
            })
        })
        .collect()
}

/// Number of `1` bits implied by the energy of one word write under
/// per-bit write accounting, clamped to `[0, width]`.
pub fn hamming_weight_from_energy(
    energy_fj: f64,
    width: usize,
    table: &CostTable,
    kind: ArrayKind,
) -> Result<usize> {
    let e1 = cost_of(OpClass::Write1, table, kind)?.energy_fj;
    let e0 = cost_of(OpClass::Write0, table, kind)?.energy_fj;
    if e1 == e0 {
        return Err(Error::MalformedTrace(
            "Write1 and Write0 energies are equal".into(),
        ));
    }
    let est = ((energy_fj - width as f64 * e0) / (e1 - e0)).round();
    Ok(est.clamp(0.0, width as f64) as usize)
}

/// Hamming-weight estimate from an event trace holding exactly one write.
pub fn hamming_weight_attack(
    trace: &ExecutionTrace,
    width: usize,
    table: &CostTable,
    kind: ArrayKind,
) -> Result<usize> {
    match trace.events.as_slice() {
        [e] if e.kind.is_write() => hamming_weight_from_energy(e.energy_fj, width, table, kind),
        [e] => Err(Error::MalformedTrace(format!(
            "expected a write, found {}",
            e.kind
        ))),
        events => Err(Error::MalformedTrace(format!(
            "expected one write event, found {}",
            events.len()
        ))),
    }
}

/// Hamming-weight estimate from a power trace covering one word write.
pub fn hamming_weight_from_power(
    trace: &PowerTrace,
    width: usize,
    table: &CostTable,
    kind: ArrayKind,
) -> Result<usize> {
    if trace.samples.is_empty() {
        return Err(Error::MalformedTrace("empty power trace".into()));
    }
    hamming_weight_from_energy(trace.integral(), width, table, kind)
}

/// Closed-form exact-recovery probability for uniformly random `width`-bit
/// words with Gaussian energy noise `sigma_energy_fj`.
pub fn hamming_recovery_probability(
    width: usize,
    sigma_energy_fj: f64,
    table: &CostTable,
    kind: ArrayKind,
) -> Result<f64> {
    let step = (cost_of(OpClass::Write1, table, kind)?.energy_fj
        - cost_of(OpClass::Write0, table, kind)?.energy_fj)
        .abs();
    if sigma_energy_fj == 0.0 {
        return Ok(1.0);
    }
    let edge = normal_tail(step / (2.0 * sigma_energy_fj));
    let mut p = 0.0;
    let mut binom = 1.0f64;
    for k in 0..=width {
        if k > 0 {
            binom = binom * (width - k + 1) as f64 / k as f64;
        }
        let weight = binom / 2f64.powi(width as i32);
        let miss = if width == 0 {
            0.0
        } else if k == 0 || k == width {
            edge
        } else {
            2.0 * edge
        };
        p += weight * (1.0 - miss);
    }
    Ok(p)
}

/// Monte Carlo exact-recovery rate of [`hamming_weight_from_energy`].
pub fn hamming_recovery_rate(
    width: usize,
    sigma_energy_fj: f64,
    table: &CostTable,
    kind: ArrayKind,
    trials: u64,
    seed: u64,
) -> Result<McReport> {
    let e1 = cost_of(OpClass::Write1, table, kind)?.energy_fj;
    let e0 = cost_of(OpClass::Write0, table, kind)?.energy_fj;
    let mask = if width >= 64 {
        u64::MAX
    } else {
        (1u64 << width) - 1
    };
    let noise = Normal::new(0.0, sigma_energy_fj).map_err(|e| Error::Config(e.to_string()))?;
    let mut hits = 0u64;
    for i in 0..trials {
        let mut rng = trial_rng(seed, i);
        let ones = (rng.random::<u64>() & mask).count_ones() as usize;
        let energy = ones as f64 * e1 + (width - ones) as f64 * e0 + noise.sample(&mut rng);
        if hamming_weight_from_energy(energy, width, table, kind)? == ones {
            hits += 1;
        }
    }
    let analytic = hamming_recovery_probability(width, sigma_energy_fj, table, kind)?;
    Ok(McReport::new(trials, hits, analytic, seed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObscuringPoint {
    pub sigma_delay_ns: f64,
    pub sigma_energy_fj: f64,
    /// Rate at which the composite window is labelled Write1.
    pub as_write1: McReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObscuringReport {
    pub composite_op: OpClass,
    pub composite: [f64; 2],
    pub write1: [f64; 2],
    pub write0: [f64; 2],
    pub distance_to_write1: f64,
    pub write1_write0_distance: f64,
    pub points: Vec<ObscuringPoint>,
}

/// How often an attacker trained on the enhanced classes labels a window
/// holding `composite_op` followed by a Write0 as a single Write1.
pub fn obscuring_experiment(
    table: &CostTable,
    composite_op: OpClass,
    noise_levels: &[ObservationNoise],
    trials: u64,
    seed: u64,
) -> Result<ObscuringReport> {
    let kind = ArrayKind::Enhanced;
    let op = cost_of(composite_op, table, kind)?;
    let w0 = cost_of(OpClass::Write0, table, kind)?;
    let w1 = cost_of(OpClass::Write1, table, kind)?;
    let composite = OpCost::new(op.delay_ns + w0.delay_ns, op.energy_fj + w0.energy_fj);
    let dist = |a: OpCost, b: OpCost| {
        ((a.delay_ns - b.delay_ns).powi(2) + (a.energy_fj - b.energy_fj).powi(2)).sqrt()
    };
    let w1_index = OpClass::ENHANCED
        .iter()
        .position(|c| *c == OpClass::Write1)
        .expect("Write1 class");

    let mut points = Vec::with_capacity(noise_levels.len());
    for (i, &noise) in noise_levels.iter().enumerate() {
        let mut rng = trial_rng(seed, 2 * i as u64);
        let train_set = generate_observations(table, kind, 1000, noise, &mut rng)?;
        let clf = train(&train_set, &OpClass::ENHANCED)?;
        let mut rng = trial_rng(seed, 2 * i as u64 + 1);
        let mut hits = 0u64;
        for _ in 0..trials {
            if clf.classify_index(noise.sample(composite, &mut rng)) == w1_index {
                hits += 1;
            }
        }
        let analytic = gaussian_assignment_probability(
            &clf,
            [composite.delay_ns, composite.energy_fj],
            [noise.sigma_delay_ns, noise.sigma_energy_fj],
            w1_index,
            400,
        );
        points.push(ObscuringPoint {
            sigma_delay_ns: noise.sigma_delay_ns,
            sigma_energy_fj: noise.sigma_energy_fj,
            as_write1: McReport::new(trials, hits, analytic, seed),
        });
    }
    Ok(ObscuringReport {
        composite_op,
        composite: [composite.delay_ns, composite.energy_fj],
        write1: [w1.delay_ns, w1.energy_fj],
        write0: [w0.delay_ns, w0.energy_fj],
        distance_to_write1: dist(composite, w1),
        write1_write0_distance: dist(w1, w0),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cost::{word_cost, CostMode, DataContext, WordAccess};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(17)
    }

    #[test]
    fn zero_noise_centroids_are_table_rows() {
        let t = CostTable::default();
        let obs = generate_observations(
            &t,
            ArrayKind::Enhanced,
            3,
            ObservationNoise::default(),
            &mut rng(),
        )
        .unwrap();
        let clf = train(&obs, &OpClass::ENHANCED).unwrap();
        for (c, m) in clf.classes.iter().zip(&clf.centroids) {
            let row = cost_of(*c, &t, ArrayKind::Enhanced).unwrap();
            assert_eq!(*m, [row.delay_ns, row.energy_fj]);
        }
        assert_eq!(clf.variance, [1.0, 1.0]);
    }

    #[test]
    fn single_observation_is_centroid() {
        let obs = [
            LabeledObservation {
                duration_ns: 1.0,
                energy_fj: 2.0,
                label: OpClass::Read1,
            },
            LabeledObservation {
                duration_ns: 3.0,
                energy_fj: 5.0,
                label: OpClass::Read0,
            },
        ];
        let clf = train(&obs, &[OpClass::Read1, OpClass::Read0]).unwrap();
        assert_eq!(clf.centroids, vec![[1.0, 2.0], [3.0, 5.0]]);
    }

    #[test]
    fn missing_class_rejected() {
        let obs = [LabeledObservation {
            duration_ns: 1.0,
            energy_fj: 2.0,
            label: OpClass::Read1,
        }];
        assert!(matches!(
            train(&obs, &OpClass::STANDARD),
            Err(Error::MissingClass(_))
        ));
    }

    #[test]
    fn noisy_read_and_not_flagged() {
        let t = CostTable::default();
        let obs = generate_observations(
            &t,
            ArrayKind::Enhanced,
            2000,
            ObservationNoise::new(0.05, 1.0),
            &mut rng(),
        )
        .unwrap();
        let clf = train(&obs, &OpClass::ENHANCED).unwrap();
        assert!(clf.ill_separated());
    }

    #[test]
    fn zero_noise_confusion_is_identity() {
        let t = CostTable::default();
        for (kind, classes) in [
            (ArrayKind::Standard, &OpClass::STANDARD[..]),
            (ArrayKind::Enhanced, &OpClass::ENHANCED[..]),
        ] {
            let obs = generate_observations(&t, kind, 5, ObservationNoise::default(), &mut rng())
                .unwrap();
            let m = confusion_matrix(&train(&obs, classes).unwrap(), &obs);
            assert_eq!(m.accuracy(), 1.0);
            for (i, row) in m.rates().iter().enumerate() {
                assert_eq!(row[i], 1.0);
            }
        }
        assert!(
            min_feature_distance(&t, ArrayKind::Enhanced)
                < min_feature_distance(&t, ArrayKind::Standard)
        );
    }

    #[test]
    fn scale_consistency() {
        let t = CostTable::default();
        let obs = generate_observations(
            &t,
            ArrayKind::Enhanced,
            200,
            ObservationNoise::new(0.05, 1.0),
            &mut rng(),
        )
        .unwrap();
        let clf = train(&obs, &OpClass::ENHANCED).unwrap();
        let scaled: Vec<_> = obs
            .iter()
            .map(|o| LabeledObservation {
                duration_ns: o.duration_ns * 7.5,
                energy_fj: o.energy_fj * 7.5,
                label: o.label,
            })
            .collect();
        let clf_s = train(&scaled, &OpClass::ENHANCED).unwrap();
        for (o, s) in obs.iter().zip(&scaled) {
            assert_eq!(clf.classify(o.features()), clf_s.classify(s.features()));
        }
    }

    #[test]
    fn accuracy_matches_numeric_oracle() {
        let t = CostTable::default();
        let noise = ObservationNoise::new(0.05, 1.0);
        let mut r = rng();
        let train_set =
            generate_observations(&t, ArrayKind::Enhanced, 5000, noise, &mut r).unwrap();
        let test_set = generate_observations(&t, ArrayKind::Enhanced, 5000, noise, &mut r).unwrap();
        let clf = train(&train_set, &OpClass::ENHANCED).unwrap();
        let acc = confusion_matrix(&clf, &test_set).accuracy();
        let oracle = expected_accuracy(&clf, &t, ArrayKind::Enhanced, noise).unwrap();
        let n = test_set.len() as f64;
        let se = (oracle * (1.0 - oracle) / n).sqrt();
        assert!((acc - oracle).abs() < 3.0 * se, "{acc} vs {oracle}");
    }

    #[test]
    fn hamming_weight_exact_at_zero_noise() {
        let t = CostTable::default().with_mode(CostMode::PerBitWrites);
        for (word, expect) in [(0xF0F0u64, 8), (0, 0), (0xFFFF, 16)] {
            let (_, cost) = word_cost(
                WordAccess::Write,
                DataContext::of_word(word, 16),
                &t,
                ArrayKind::Standard,
            )
            .unwrap();
            assert_eq!(
                hamming_weight_from_energy(cost.energy_fj, 16, &t, ArrayKind::Standard).unwrap(),
                expect
            );
        }
    }

    #[test]
    fn hamming_attack_rejects_bad_traces() {
        let t = CostTable::default();
        let empty = ExecutionTrace::new();
        assert!(matches!(
            hamming_weight_attack(&empty, 16, &t, ArrayKind::Standard),
            Err(Error::MalformedTrace(_))
        ));
        let mut read = ExecutionTrace::new();
        read.record(
            OpClass::Read1,
            DataContext::default(),
            OpCost::new(0.6, 8.611),
            crate::cost::Channel::Bus,
        );
        assert!(hamming_weight_attack(&read, 16, &t, ArrayKind::Standard).is_err());
        let pt = PowerTrace {
            sample_period_ns: 0.1,
            samples: vec![],
        };
        assert!(hamming_weight_from_power(&pt, 16, &t, ArrayKind::Standard).is_err());
    }

    #[test]
    fn recovery_rate_decreases_with_noise() {
        let t = CostTable::default();
        let mut last = 1.1;
        for sigma in [5.0, 20.0, 40.0, 80.0] {
            let r = hamming_recovery_rate(16, sigma, &t, ArrayKind::Standard, 10_000, 2).unwrap();
            assert!(r.agrees(3.0), "{sigma}: {r:?}");
            assert!(r.rate < last, "{sigma}: {r:?}");
            last = r.rate;
        }
    }

    #[test]
    fn obscuring_composite_geometry() {
        let t = CostTable::default();
        let r = obscuring_experiment(
            &t,
            OpClass::CimAdd,
            &[
                ObservationNoise::default(),
                ObservationNoise::new(0.5, 10.0),
            ],
            4000,
            8,
        )
        .unwrap();
        assert!((r.composite[0] - 3.83).abs() < 1e-12);
        assert!((r.composite[1] - 229.02).abs() < 1e-9);
        assert!(r.distance_to_write1 > 0.0);
        assert!(r.distance_to_write1 < r.write1_write0_distance);
        let noisy = &r.points[1].as_write1;
        assert!(noisy.rate > 0.0 && noisy.agrees(3.0), "{noisy:?}");
    }
}
