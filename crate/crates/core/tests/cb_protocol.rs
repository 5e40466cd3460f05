mod common;

use std::thread;
use std::time::Duration;

use common::{is_exact_fifo, run_schedule, ScheduleOutcome};
use gravtile::engine::CircularBuffer;
use gravtile::{Error, Tile};
use proptest::prelude::*;

const TIMEOUT: Duration = Duration::from_secs(20);

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn random_schedules_deliver_fifo(capacity in 1usize..=4, tiles in 1u32..400, seed in any::<u64>()) {
        let outcome = run_schedule(capacity, tiles, seed, TIMEOUT);
        prop_assert!(is_exact_fifo(&outcome, tiles), "{outcome:?}");
    }

    #[test]
    fn occupancy_never_exceeds_capacity(capacity in 1usize..=4, pushes in prop::collection::vec(any::<bool>(), 1..64)) {
        let cb = CircularBuffer::new("cb", capacity).unwrap();
        let mut model = std::collections::VecDeque::new();
        let mut next = 0u32;
        for push in pushes {
            if push {
                if cb.try_reserve_back(1).unwrap() {
                    cb.push_back([Tile::splat(next as f32)]).unwrap();
                    model.push_back(next);
                    next += 1;
                } else {
                    prop_assert_eq!(model.len(), capacity);
                }
            } else if cb.try_wait_front(1).unwrap() {
                let t = cb.pop_front(1).unwrap();
                prop_assert_eq!(t[0].lane(0) as u32, model.pop_front().unwrap());
            } else {
                prop_assert!(model.is_empty());
            }
            prop_assert!(cb.occupancy() <= capacity);
            prop_assert_eq!(cb.occupancy(), model.len());
        }
    }
}

#[test]
fn ten_thousand_tiles_each_capacity() {
    for capacity in [1, 2, 4] {
        let outcome = run_schedule(capacity, 10_000, 7 + capacity as u64, TIMEOUT);
        assert!(is_exact_fifo(&outcome, 10_000), "capacity {capacity}: {outcome:?}");
    }
}

#[test]
fn oversized_request_is_an_error_not_a_hang() {
    let cb = CircularBuffer::new("cb", 2).unwrap();
    assert!(matches!(cb.reserve_back(3), Err(Error::CbProtocol { .. })));
    assert!(matches!(cb.wait_front(3), Err(Error::CbProtocol { .. })));
}

#[test]
fn producer_failure_unblocks_consumer() {
    let cb = CircularBuffer::new("cb", 2).unwrap();
    let r = thread::scope(|s| {
        let h = s.spawn(|| cb.wait_front(1));
        thread::sleep(Duration::from_millis(20));
        cb.close();
        h.join().unwrap()
    });
    assert!(matches!(r, Err(Error::CbClosed(_))));
}

#[test]
fn schedule_reports_protocol_failures() {
    let cb = CircularBuffer::new("cb", 1).unwrap();
    assert!(cb.push_back([Tile::zeros()]).is_err());
    assert!(cb.pop_front(1).is_err());
    assert_ne!(run_schedule(1, 5, 1, TIMEOUT), ScheduleOutcome::Deadlock);
}
