//! Seeded random instances and mechanisms for tests and sweeps.

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::instance::MppInstance;
use crate::mechanism::SignalingMechanism;

/// Generator for stream `stream` of `seed`.
pub fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// Uniform draw from the simplex of dimension `m` (Dirichlet(1)).
pub fn dirichlet_row<R: Rng + ?Sized>(rng: &mut R, m: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..m)
        .map(|_| {
            let u: f64 = rng.random();
            -libm::log(1.0 - u)
        })
        .collect();
    let s: f64 = v.iter().sum();
    if s > 0.0 {
        v.iter_mut().for_each(|x| *x /= s);
    } else {
        v.iter_mut().for_each(|x| *x = 1.0 / m as f64);
    }
    v
}

/// Instance whose kernel rows are Dirichlet draws mixed with the uniform
/// law, so every transition has positive probability and the instance is
/// unichain. Utilities and rewards are uniform on [0,1].
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize) -> MppInstance {
    let mut kernel = Vec::with_capacity(n_states * n_actions * n_states);
    for _ in 0..n_states * n_actions {
        let row = dirichlet_row(rng, n_states);
        let floor = 0.05 / n_states as f64;
        let mut row: Vec<f64> = row.iter().map(|p| 0.95 * p + floor).collect();
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= s);
        // Put the rounding residue on the largest entry so rows sum to 1.
        let drift = 1.0 - row.iter().sum::<f64>();
        let big = (0..n_states).max_by(|&i, &j| row[i].partial_cmp(&row[j]).unwrap()).unwrap_or(0);
        row[big] += drift;
        kernel.extend(row);
    }
    let utility = (0..n_states * n_actions).map(|_| rng.random::<f64>()).collect();
    let reward = (0..n_states * n_actions).map(|_| rng.random::<f64>()).collect();
    let mut inst = MppInstance::new(n_states, n_actions, kernel, utility, reward).expect("generated instance is valid");
    inst.name = format!("random-{n_states}x{n_actions}");
    inst
}

/// Instance `index` of a corpus: 2–4 states and 2–3 actions.
pub fn corpus_instance(seed: u64, index: u64) -> MppInstance {
    let mut r = rng(seed, index);
    let n = r.random_range(2..=4);
    let m = r.random_range(2..=3);
    random_instance(&mut r, n, m)
}

/// Mechanism with Dirichlet(1) rows.
pub fn random_mechanism<R: Rng + ?Sized>(rng: &mut R, inst: &MppInstance, memory: usize) -> SignalingMechanism {
    let windows = crate::mechanism::pow(inst.n_pairs(), memory);
    let mut table = Vec::with_capacity(windows * inst.n_pairs());
    for _ in 0..windows * inst.n_states {
        table.extend(dirichlet_row(rng, inst.n_actions));
    }
    let mut s = SignalingMechanism { memory, n_states: inst.n_states, n_actions: inst.n_actions, table };
    s.normalize();
    s
}
