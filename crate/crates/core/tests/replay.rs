use proptest::prelude::*;
use qtm_core::env::{ActionSpace, HybridAction};
use qtm_core::quantum::BathChoice;
use qtm_core::replay::{ReplayBuffer, Transition};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn transition(x: f64) -> Transition {
    Transition {
        obs: vec![x],
        action: HybridAction::new(0.5, BathChoice::Cold),
        reward: x,
        next_obs: vec![x],
    }
}

fn buffer(capacity: usize) -> ReplayBuffer {
    ReplayBuffer::new(capacity, 1, ActionSpace::engine(0.0, 1.0).unwrap()).unwrap()
}

#[test]
fn sampling_is_uniform_over_slots() {
    let mut b = buffer(100);
    for i in 0..100 {
        b.push(transition(i as f64)).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut counts = [0usize; 100];
    for _ in 0..1000 {
        for i in b.sample_indices(100, &mut rng).unwrap() {
            counts[i] += 1;
        }
    }
    let expected = 1000.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(99.0).unwrap().cdf(chi2);
    assert!(p > 0.01, "chi2 {chi2}, p {p}");
}

#[test]
fn filling_to_capacity() {
    let mut b = buffer(5);
    for i in 0..5 {
        b.push(transition(i as f64)).unwrap();
    }
    assert_eq!(b.len(), b.capacity());
}

proptest! {
    #[test]
    fn keeps_exactly_the_most_recent(capacity in 1usize..40, extra in 0usize..100) {
        let mut b = buffer(capacity);
        let n = capacity + extra;
        for i in 0..n {
            b.push(transition(i as f64)).unwrap();
        }
        prop_assert_eq!(b.pushed(), n as u64);
        prop_assert_eq!(b.len(), capacity);
        let kept: Vec<f64> = (0..capacity).map(|i| b.get(i).unwrap().reward).collect();
        let expect: Vec<f64> = (extra..n).map(|i| i as f64).collect();
        prop_assert_eq!(kept, expect);
    }
}
