use mcf_qkd::fibergrid::{
    classical_frequency, nearest_neighbors, quantum_frequency, reference_plan, validate_plan, ChannelAssignment,
};
use mcf_qkd::{CoreId, CoreTopology, Direction, Freq, FrequencyGrid, Violation};
use proptest::prelude::*;

// GHz-domain oracle: f0 + (n-1)Δf and f0 + (k-1)Δf + Δf/2, in MHz.
fn oracle_classical(f0_ghz: i64, df_ghz: i64, n: u32) -> i64 {
    (f0_ghz + (n as i64 - 1) * df_ghz) * 1000
}

fn oracle_quantum(f0_ghz: i64, df_ghz: i64, k: u32) -> i64 {
    (f0_ghz + (k as i64 - 1) * df_ghz) * 1000 + df_ghz * 500
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn interleave_matches_oracle(
        f0 in 180_000i64..200_000,
        df in prop::sample::select(vec![25i64, 50, 100, 200]),
        count in 1u32..80,
        pick in any::<prop::sample::Index>(),
    ) {
        let grid = FrequencyGrid::from_ghz(f0, df, count).unwrap();
        let k = 1 + pick.index(count as usize) as u32;
        let fc = classical_frequency(k, &grid).unwrap();
        let fq = quantum_frequency(k, &grid).unwrap();
        prop_assert_eq!(fc.mhz(), oracle_classical(f0, df, k));
        prop_assert_eq!(fq.mhz(), oracle_quantum(f0, df, k));
        prop_assert_eq!(fq.mhz() - fc.mhz(), df * 500);
        prop_assert_eq!(grid.quantum_ordinal(fq), Some(k));
        prop_assert_eq!(grid.quantum_ordinal(fc), None);
    }

    #[test]
    fn quantum_classical_separation_is_half_spacing(
        f0 in 180_000i64..200_000,
        df in prop::sample::select(vec![50i64, 100]),
        count in 1u32..24,
    ) {
        let grid = FrequencyGrid::from_ghz(f0, df, count).unwrap();
        let mut min = i64::MAX;
        for k in 1..=count {
            let fq = quantum_frequency(k, &grid).unwrap();
            for n in 1..=count {
                min = min.min(fq.abs_diff(classical_frequency(n, &grid).unwrap()).mhz());
            }
        }
        prop_assert_eq!(min, df * 500);
    }

    #[test]
    fn moving_a_classical_channel_into_the_quantum_slot_is_flagged(
        port in -10.0f64..15.0,
        core in prop::sample::select(vec![1u32, 2, 4]),
    ) {
        let mut plan = reference_plan(port, Direction::Co);
        plan.assignments.push(ChannelAssignment::classical(CoreId(core), Freq::from_ghz(193_500), Direction::Co, 0.0));
        let v = validate_plan(&plan);
        let flagged = v.iter().any(|v| matches!(v, Violation::SeparationBelowHalfSpacing { .. }));
        prop_assert!(flagged, "{v:?}");
    }
}

#[test]
fn out_of_range_ordinals() {
    let grid = FrequencyGrid::from_ghz(193_350, 100, 40).unwrap();
    assert!(classical_frequency(0, &grid).is_err());
    assert!(classical_frequency(41, &grid).is_err());
    assert!(quantum_frequency(0, &grid).is_err());
    assert!(quantum_frequency(41, &grid).is_ok());
}

#[test]
fn hexagon_neighbors_brute_force() {
    let t = CoreTopology::hexagonal();
    // ring 2..7 in cyclic order around center 1
    for c in 2..=7u32 {
        let prev = if c == 2 { 7 } else { c - 1 };
        let next = if c == 7 { 2 } else { c + 1 };
        let want: std::collections::BTreeSet<CoreId> = [1, prev, next].into_iter().map(CoreId).collect();
        assert_eq!(nearest_neighbors(&t, CoreId(c)).unwrap(), want);
    }
    assert_eq!(nearest_neighbors(&t, CoreId(1)).unwrap().len(), 6);
    assert!(nearest_neighbors(&t, CoreId(8)).is_err());
}

#[test]
fn reference_plan_is_clean_in_both_directions() {
    for d in Direction::ALL {
        assert!(validate_plan(&reference_plan(0.0, d)).is_empty());
        assert!(validate_plan(&reference_plan(0.0f32, d)).is_empty());
    }
}
