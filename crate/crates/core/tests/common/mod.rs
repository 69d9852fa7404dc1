//! Shared helpers for the integration tests and the acceptance suite.
#![allow(dead_code)]

pub use lli_core::synth::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// MovieLens-1M style `ratings.dat` and `users.dat` contents with integer
/// ratings from a noisy multiplicative user x item model.
pub fn synthetic_movielens(rng: &mut ChaCha8Rng, n_users: usize, n_items: usize, density: f64) -> (String, String) {
    const AGES: [u32; 7] = [1, 18, 25, 35, 45, 50, 56];
    let mut users = String::new();
    let mut ratings = String::new();
    let item_bias: Vec<f64> = (0..n_items).map(|_| rng.gen_range(0.7..1.3)).collect();
    for u in 1..=n_users {
        let gender = if rng.gen_bool(0.5) { 'F' } else { 'M' };
        let age = AGES[rng.gen_range(0..AGES.len())];
        let occupation = rng.gen_range(0..21);
        users.push_str(&format!("{u}::{gender}::{age}::{occupation}::00000\n"));
        let user_bias: f64 = rng.gen_range(0.7..1.3);
        for p in 1..=n_items {
            if rng.gen_bool(density) {
                let r = (3.0 * user_bias * item_bias[p - 1] * rng.gen_range(0.8..1.2))
                    .round()
                    .clamp(1.0, 5.0);
                ratings.push_str(&format!("{u}::{}::{r}::{}\n", 100 + p, 978_300_000 + p));
            }
        }
    }
    (ratings, users)
}
