use gravtile::hermite::{generate_initial_conditions, IcModel};
use gravtile::topology::{
    decompose, estimate_time, execute_evaluation, ChipSide, ClusterConfig, ClusterSpec, ScalingMode,
};
use proptest::prelude::*;

fn spec(mode: ScalingMode, cards: usize) -> ClusterSpec {
    ClusterSpec::with_mode(mode, cards)
}

proptest! {
    #[test]
    fn decomposition_covers_every_particle_once(n in 0usize..5000, cards in 1usize..6, m in 0usize..3) {
        let mode = ScalingMode::ALL[m];
        let parts = decompose(mode, n, cards);
        let mut covered = vec![0u8; n];
        for p in &parts {
            prop_assert!(p.rank < cards);
            if mode == ScalingMode::MultiHostSingleChip {
                prop_assert_eq!(p.chip, ChipSide::L);
            }
            for i in p.range.clone() {
                covered[i] += 1;
            }
        }
        prop_assert!(covered.iter().all(|&c| c == 1));
    }

    #[test]
    fn estimate_components_add_up(n in 1usize..500_000, cards in 1usize..5, m in 0usize..3) {
        let mode = ScalingMode::ALL[m];
        let s = spec(mode, cards);
        let e = estimate_time(mode, n, &s, &s.perf).unwrap();
        let sum = e.host + e.compute + e.pcie + e.ethernet + e.dispatch;
        prop_assert!((e.total - sum).abs() <= 1e-12 * e.total);
        if mode == ScalingMode::MultiHostSingleChip {
            prop_assert_eq!(e.ethernet, 0.0);
        }
        if mode != ScalingMode::MeshSharded {
            prop_assert_eq!(e.dispatch, 0.0);
        }
    }

    #[test]
    fn estimate_grows_with_n(n in 1usize..200_000, m in 0usize..3) {
        let mode = ScalingMode::ALL[m];
        let s = spec(mode, 1);
        let a = estimate_time(mode, n, &s, &s.perf).unwrap().total;
        let b = estimate_time(mode, 2 * n, &s, &s.perf).unwrap().total;
        prop_assert!(b > a);
    }

    #[test]
    fn spec_toml_round_trips(cards in 1usize..9, cores in 1usize..=64, cap in 1usize..5, m in 0usize..3, soft in 1e-9f64..1e-2) {
        let s = ClusterSpec {
            cores_per_chip: cores,
            cb_capacity: cap,
            softening: soft,
            ..spec(ScalingMode::ALL[m], cards)
        };
        prop_assert_eq!(ClusterSpec::from_toml(&s.to_toml()).unwrap(), s);
    }
}

#[test]
fn large_n_mode_ordering() {
    let n = 409_600;
    let t = |mode, cards| {
        let s = spec(mode, cards);
        estimate_time(mode, n, &s, &s.perf).unwrap().total
    };
    let m1c1 = t(ScalingMode::MultiHostSingleChip, 1);
    let m1c2 = t(ScalingMode::MultiHostSingleChip, 2);
    let m2c1 = t(ScalingMode::MultiHostMultiChip, 1);
    let m3c1 = t(ScalingMode::MeshSharded, 1);
    assert!(m1c2 < m1c1 && m1c1 < m2c1 && m2c1 < m3c1);
    assert!(m3c1 >= 5.0 * m1c1);
}

#[test]
fn multi_chip_mode_moves_data_over_ethernet() {
    let s = generate_initial_conditions(300, 1, IcModel::UniformSphere).unwrap();
    for (mode, eth) in [
        (ScalingMode::MultiHostSingleChip, false),
        (ScalingMode::MultiHostMultiChip, true),
        (ScalingMode::MeshSharded, true),
    ] {
        let c = ClusterConfig::new(&spec(mode, 2)).unwrap();
        execute_evaluation(&c, &s).unwrap();
        let log = c.transfer_totals();
        assert_eq!(log.chip_to_chip_bytes > 0, eth, "{mode:?}");
        assert!(log.host_to_device_bytes > 0 && log.device_to_host_bytes > 0);
    }
}

#[test]
fn chip_count_must_match_mode() {
    let s = ClusterSpec {
        chips_per_card: Some(2),
        ..spec(ScalingMode::MultiHostSingleChip, 1)
    };
    assert!(s.validate().is_err());
    assert!(ClusterSpec::from_toml("mode = \"mesh-sharded\"\ncards = 0\n").is_err());
}
