use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use spincim::array::{
    ArrayGeometry, ArraySnapshot, BitWord, CimArray, CimOp, RowAddress, SenseConfig, ThermalZone,
    ZoneEffect,
};
use spincim::device::{
    pair_exceedance_probability, CurrentLevelModel, DisturbanceModel, MtjState, PairLevel,
    DEFAULT_COLLAPSE_A, DEFAULT_COLLAPSE_B,
};
use spincim::isa::{assemble, lower_to_conventional, random_cim_program, run, Machine};

const A: RowAddress = RowAddress::new(0, 0);
const B: RowAddress = RowAddress::new(0, 1);
const C: RowAddress = RowAddress::new(0, 2);
const D: RowAddress = RowAddress::new(0, 3);

fn mask(width: usize) -> u64 {
    if width == 64 {
        u64::MAX
    } else {
        (1 << width) - 1
    }
}

fn quiet(width: usize) -> CimArray {
    CimArray::with_noise(ArrayGeometry::new(1, 8, width).unwrap(), 0.0, 7).unwrap()
}

proptest! {
    #[test]
    fn zero_noise_ops_match_boolean_logic(width in 1usize..=8, x in any::<u64>(), y in any::<u64>()) {
        let m = mask(width);
        let (x, y) = (x & m, y & m);
        let mut a = quiet(width);
        a.preload(A, BitWord::new(x, width)).unwrap();
        a.preload(B, BitWord::new(y, width)).unwrap();
        prop_assert_eq!(a.cim_two_row(CimOp::CimAnd, A, B).unwrap().bits(), x & y);
        prop_assert_eq!(a.cim_two_row(CimOp::CimOr, A, B).unwrap().bits(), x | y);
        prop_assert_eq!(a.cim_two_row(CimOp::CimNand, A, B).unwrap().bits(), !(x & y) & m);
        prop_assert_eq!(a.cim_two_row(CimOp::CimNor, A, B).unwrap().bits(), !(x | y) & m);
        prop_assert_eq!(a.cim_two_row(CimOp::CimXor, A, B).unwrap().bits(), x ^ y);
        prop_assert_eq!(a.cim_not(A).unwrap().bits(), !x & m);
        prop_assert_eq!(a.read_word(B).unwrap().bits(), y);
        prop_assert_eq!(a.cim_xnor(A, B, [C, D]).unwrap().bits(), !(x ^ y) & m);
        a.cim_add(A, B, C).unwrap();
        prop_assert_eq!(a.peek(C).unwrap().bits(), (x + y) & m);
    }

    #[test]
    fn de_morgan_holds_in_memory(width in 1usize..=64, x in any::<u64>(), y in any::<u64>()) {
        let m = mask(width);
        let mut a = quiet(width);
        a.preload(A, BitWord::new(x & m, width)).unwrap();
        a.preload(B, BitWord::new(y & m, width)).unwrap();
        let na = a.cim_not(A).unwrap();
        let nb = a.cim_not(B).unwrap();
        a.preload(C, na).unwrap();
        a.preload(D, nb).unwrap();
        prop_assert_eq!(a.cim_two_row(CimOp::CimNand, A, B).unwrap(), a.cim_two_row(CimOp::CimOr, C, D).unwrap());
        prop_assert_eq!(a.cim_two_row(CimOp::CimNor, A, B).unwrap(), a.cim_two_row(CimOp::CimAnd, C, D).unwrap());
    }

    #[test]
    fn nominal_levels_decode_to_the_truth_table(a in any::<bool>(), b in any::<bool>()) {
        let levels = CurrentLevelModel::default();
        let sense = SenseConfig::midpoints(&levels);
        let level = PairLevel::of(MtjState::from_bit(a), MtjState::from_bit(b));
        for op in CimOp::TWO_ROW {
            prop_assert_eq!(sense.decode(op, levels.pair_mean(level)), op.apply(a, b));
        }
        prop_assert_eq!(sense.decode(CimOp::Read, levels.single_mean(MtjState::from_bit(a))), a);
    }

    #[test]
    fn failure_rate_grows_with_temperature(t1 in 20.0f64..150.0, dt in 0.0f64..50.0) {
        let levels = CurrentLevelModel::default();
        let sense = SenseConfig::midpoints(&levels);
        let cool = DisturbanceModel::laser_heat(t1, levels.ambient_temp);
        let hot = DisturbanceModel::laser_heat(t1 + dt, levels.ambient_temp);
        prop_assert!(hot.collapse_probability(20.0) >= cool.collapse_probability(20.0));
        for level in PairLevel::ALL {
            let p_cool = pair_exceedance_probability(level, &levels, &cool, sense.i_ref_and);
            let p_hot = pair_exceedance_probability(level, &levels, &hot, sense.i_ref_and);
            prop_assert!(p_hot >= p_cool - 1e-15);
        }
    }

    #[test]
    fn collapse_law_matches_its_closed_form(t in 20.0f64..120.0) {
        let d = DisturbanceModel::laser_heat(t, 20.0);
        let expected = (DEFAULT_COLLAPSE_A + DEFAULT_COLLAPSE_B * (t - 20.0)).exp().min(1.0);
        prop_assert!((d.collapse_probability(20.0) - expected).abs() <= 1e-15);
    }

    #[test]
    fn hex_dump_round_trips(words in proptest::collection::vec(any::<u16>(), 8)) {
        let mut a = quiet(16);
        for (r, w) in words.iter().enumerate() {
            a.preload(RowAddress::new(0, r), BitWord::new(*w as u64, 16)).unwrap();
        }
        let snap = a.snapshot();
        let back = ArraySnapshot::from_hex_dump(&snap.to_hex_dump(), snap.geometry).unwrap();
        prop_assert_eq!(back, snap);
    }

    #[test]
    fn lowering_preserves_memory(seed in any::<u64>()) {
        let geometry = ArrayGeometry::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_cim_program(&mut rng, &geometry, 32);
        let mut direct = Machine::new(CimArray::with_noise(geometry, 0.0, 1).unwrap());
        let mut lowered = Machine::new(CimArray::with_noise(geometry, 0.0, 1).unwrap());
        run(&p, &mut direct).unwrap();
        run(&lower_to_conventional(&p), &mut lowered).unwrap();
        prop_assert_eq!(direct.array.snapshot(), lowered.array.snapshot());
        prop_assert_eq!(&direct.registers[..6], &lowered.registers[..6]);
    }

    #[test]
    fn disassembly_round_trips(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_cim_program(&mut rng, &ArrayGeometry::default(), 32);
        prop_assert_eq!(assemble(&p.disassemble()).unwrap(), p);
    }
}

/// A heated zone that targets other rows must leave a sense untouched: the
/// outputs are identical to an unheated array with the same seed.
#[test]
fn heating_elsewhere_changes_nothing() {
    let geometry = ArrayGeometry::new(1, 16, 64).unwrap();
    let levels = CurrentLevelModel::default();
    let sense = SenseConfig::midpoints(&levels);
    let make = || CimArray::new(geometry, levels, sense, Default::default(), 11).unwrap();
    let (mut cold, mut hot) = (make(), make());
    hot.set_zone(Some(ThermalZone {
        rows: vec![RowAddress::new(0, 10), RowAddress::new(0, 11)],
        ops: vec![CimOp::CimAnd],
        effect: ZoneEffect::Thermal(DisturbanceModel::certain_collapse()),
    }))
    .unwrap();
    for a in [&mut cold, &mut hot] {
        a.preload(A, BitWord::new(0, 64)).unwrap();
        a.preload(B, BitWord::new(u64::MAX, 64)).unwrap();
    }
    for _ in 0..200 {
        assert_eq!(
            cold.cim_two_row(CimOp::CimAnd, A, B).unwrap(),
            hot.cim_two_row(CimOp::CimAnd, A, B).unwrap()
        );
    }
}

/// The same zone on the operand rows does change the outcome.
#[test]
fn heating_the_operands_flips_and_senses() {
    let mut a = CimArray::with_noise(ArrayGeometry::new(1, 4, 64).unwrap(), 0.0, 3).unwrap();
    a.preload(A, BitWord::new(0, 64)).unwrap();
    a.preload(B, BitWord::new(u64::MAX, 64)).unwrap();
    a.set_zone(Some(ThermalZone {
        rows: vec![A, B],
        ops: vec![CimOp::CimAnd],
        effect: ZoneEffect::Thermal(DisturbanceModel::certain_collapse()),
    }))
    .unwrap();
    assert!(a.cim_two_row(CimOp::CimAnd, A, B).unwrap().is_all_ones());
    // only the listed operation is exposed
    assert_eq!(a.cim_two_row(CimOp::CimOr, A, B).unwrap().bits(), u64::MAX);
    assert_eq!(a.cim_two_row(CimOp::CimXor, A, B).unwrap().bits(), u64::MAX);
}
