#![allow(dead_code)]

use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use gravtile::engine::CircularBuffer;
use gravtile::Tile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, PartialEq)]
pub enum ScheduleOutcome {
    Delivered(Vec<u32>),
    Failed(String),
    Deadlock,
}

fn stall(rng: &mut ChaCha8Rng) {
    match rng.random_range(0..16) {
        0 => thread::sleep(Duration::from_micros(rng.random_range(1..40))),
        1..=4 => thread::yield_now(),
        _ => {}
    }
}

/// Random batch plan shared by both sides, as producer and consumer kernels
/// agree on block sizes. A batch request larger than what the peer will
/// publish before it blocks is a protocol deadlock, not a buffer bug.
fn batch_plan(capacity: usize, tiles: u32, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(17));
    let mut left = tiles as usize;
    let mut plan = Vec::new();
    while left > 0 {
        let k = rng.random_range(1..=capacity).min(left);
        plan.push(k);
        left -= k;
    }
    plan
}

/// Streams tiles tagged `0..tiles` through one buffer. The producer pushes
/// the planned batches; the consumer takes each batch whole or in random
/// pieces. Both sides mix blocking and polling calls with random stalls.
pub fn run_schedule(capacity: usize, tiles: u32, seed: u64, timeout: Duration) -> ScheduleOutcome {
    let plan = Arc::new(batch_plan(capacity, tiles, seed));
    let cb = Arc::new(CircularBuffer::new("cb", capacity).expect("capacity >= 1"));
    let (done_tx, done_rx) = mpsc::channel();

    let producer = {
        let cb = Arc::clone(&cb);
        let done = done_tx.clone();
        let plan = Arc::clone(&plan);
        thread::spawn(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut next = 0u32;
            let r = (|| {
                for &k in plan.iter() {
                    if rng.random_bool(0.3) {
                        while !cb.try_reserve_back(k)? {
                            thread::yield_now();
                        }
                    } else {
                        cb.reserve_back(k)?;
                    }
                    stall(&mut rng);
                    let batch: Vec<Tile> = (next..next + k as u32).map(|t| Tile::splat(t as f32)).collect();
                    cb.push_back(batch)?;
                    next += k as u32;
                }
                Ok::<_, gravtile::Error>(())
            })();
            let _ = done.send(r.map(|_| Vec::new()));
        })
    };
    let consumer = {
        let cb = Arc::clone(&cb);
        thread::spawn(move || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
            let mut got = Vec::with_capacity(tiles as usize);
            let mut pieces = Vec::new();
            for &b in plan.iter() {
                let mut left = b;
                while left > 0 {
                    let k = rng.random_range(1..=left);
                    pieces.push(k);
                    left -= k;
                }
            }
            let r = (|| {
                for k in pieces {
                    if rng.random_bool(0.3) {
                        while !cb.try_wait_front(k)? {
                            thread::yield_now();
                        }
                    } else {
                        cb.wait_front(k)?;
                    }
                    for i in 0..k {
                        let peek = cb.read_front(i)?;
                        got.push(peek.lane(0) as u32);
                    }
                    stall(&mut rng);
                    let popped = cb.pop_front(k)?;
                    let tail = &got[got.len() - k..];
                    for (t, tag) in popped.iter().zip(tail) {
                        assert_eq!(t.lane(TILE_CHECK_LANE) as u32, *tag);
                    }
                }
                Ok::<_, gravtile::Error>(got)
            })();
            let _ = done_tx.send(r);
        })
    };

    let mut delivered = None;
    for _ in 0..2 {
        match done_rx.recv_timeout(timeout) {
            Ok(Ok(v)) if !v.is_empty() || tiles == 0 => delivered = Some(v),
            Ok(Ok(_)) => {}
            Ok(Err(e)) => {
                cb.close();
                let _ = (producer.join(), consumer.join());
                return ScheduleOutcome::Failed(e.to_string());
            }
            Err(_) => {
                cb.close();
                let _ = (producer.join(), consumer.join());
                return ScheduleOutcome::Deadlock;
            }
        }
    }
    let _ = (producer.join(), consumer.join());
    ScheduleOutcome::Delivered(delivered.unwrap_or_default())
}

const TILE_CHECK_LANE: usize = 1023;

pub fn is_exact_fifo(outcome: &ScheduleOutcome, tiles: u32) -> bool {
    matches!(outcome, ScheduleOutcome::Delivered(v) if v.len() == tiles as usize
        && v.iter().enumerate().all(|(i, &t)| t == i as u32))
}
