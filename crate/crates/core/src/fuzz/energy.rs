//! Annealing power schedule.
//!
//! The temperature halves every `cooling_half_life` seconds. While hot, every
//! seed gets the base energy; as it cools, seeds close to the targets get up
//! to 32x the base and distant seeds down to 1/32x.

use super::{CampaignConfig, Mode, Seed};

pub const MIN_MULTIPLIER: f64 = 1.0 / 32.0;
pub const MAX_MULTIPLIER: f64 = 32.0;

pub fn temperature(elapsed: f64, half_life: f64) -> f64 {
    0.5f64.powf(elapsed / half_life)
}

/// Havoc multiplier for a seed with normalized distance `norm_distance`.
pub fn power_multiplier(norm_distance: f64, elapsed: f64, half_life: f64) -> f64 {
    let t = temperature(elapsed, half_life);
    let p = (1.0 - norm_distance) * (1.0 - t) + 0.5 * t;
    2f64.powf(10.0 * p - 5.0).clamp(MIN_MULTIPLIER, MAX_MULTIPLIER)
}

/// Number of havoc iterations granted to `seed`.
pub fn assign_energy(seed: &Seed, elapsed: f64, config: &CampaignConfig) -> u32 {
    match config.mode {
        Mode::CoverageOnly => config.havoc_base,
        Mode::Directed => {
            let m = power_multiplier(seed.normalized_distance, elapsed, config.cooling_half_life);
            ((config.havoc_base as f64 * m).round() as u32).max(1)
        }
    }
}

/// Rescales raw seed distances to [0, 1] across the queue. Seeds without a
/// distance get 1.0; a degenerate range maps every defined seed to 0.5.
pub fn normalize_distances(queue: &mut [Seed]) {
    let defined = queue.iter().filter_map(|s| s.distance);
    let (min, max) = defined.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), d| (lo.min(d), hi.max(d)));
    for s in queue.iter_mut() {
        s.normalized_distance = match s.distance {
            None => 1.0,
            Some(_) if max <= min => 0.5,
            Some(d) => (d - min) / (max - min),
        };
    }
}
