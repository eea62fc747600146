//! Variation operators.
//!
//! Crossover keeps every bit on which both parents agree and fills the
//! disagreeing positions with a number of ones drawn between the two parents'
//! counts, so offspring complexity stays between the parents'. Mutation flips
//! at most one bit per call.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoding::NetworkGenome;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OperatorError {
    #[error("parents have different shapes")]
    ConfigMismatch,
}

/// Where the ones-count bound of crossover is enforced.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CrossoverScope {
    #[default]
    Genome,
    Phase,
}

/// Append the recombination of `a` and `b` to `out`.
fn recombine<R: Rng + ?Sized>(a: &[bool], b: &[bool], out: &mut Vec<bool>, rng: &mut R) {
    let base = out.len();
    let mut disagree = Vec::new();
    let mut ones_a = 0usize;
    for (i, (&x, &y)) in a.iter().zip(b).enumerate() {
        out.push(x);
        if x != y {
            disagree.push(base + i);
            ones_a += x as usize;
        }
    }
    if disagree.is_empty() {
        return;
    }
    let ones_b = disagree.len() - ones_a;
    let (lo, hi) = (ones_a.min(ones_b), ones_a.max(ones_b));
    let t = rng.gen_range(lo..=hi);
    let (chosen, rest) = disagree.partial_shuffle(rng, t);
    for &i in chosen.iter() {
        out[i] = true;
    }
    for &i in rest.iter() {
        out[i] = false;
    }
}

/// Homogeneous crossover of two parents (always recombines).
pub fn crossover<R: Rng + ?Sized>(
    p1: &NetworkGenome,
    p2: &NetworkGenome,
    scope: CrossoverScope,
    rng: &mut R,
) -> Result<NetworkGenome, OperatorError> {
    if p1.phases().len() != p2.phases().len() || p1.nodes() != p2.nodes() {
        return Err(OperatorError::ConfigMismatch);
    }
    let (a, b) = (p1.flat_bits(), p2.flat_bits());
    let mut child = Vec::with_capacity(a.len());
    match scope {
        CrossoverScope::Genome => recombine(&a, &b, &mut child, rng),
        CrossoverScope::Phase => {
            let per_phase = a.len() / p1.phases().len();
            for (ca, cb) in a.chunks(per_phase).zip(b.chunks(per_phase)) {
                recombine(ca, cb, &mut child, rng);
            }
        }
    }
    Ok(NetworkGenome::from_flat_bits(p1.nodes(), &child).expect("child keeps parent shape"))
}

/// Crossover applied with probability `p_c`; otherwise a copy of a uniformly chosen parent.
pub fn maybe_crossover<R: Rng + ?Sized>(
    p1: &NetworkGenome,
    p2: &NetworkGenome,
    p_c: f64,
    scope: CrossoverScope,
    rng: &mut R,
) -> Result<NetworkGenome, OperatorError> {
    if rng.gen_bool(p_c) {
        crossover(p1, p2, scope, rng)
    } else if rng.gen_bool(0.5) {
        Ok(p1.clone())
    } else {
        Ok(p2.clone())
    }
}

/// Scan positions in random order and flip the first one whose Bernoulli(`p_m`) trial succeeds.
pub fn mutate<R: Rng + ?Sized>(g: &NetworkGenome, p_m: f64, rng: &mut R) -> NetworkGenome {
    let mut bits = g.flat_bits();
    let mut order: Vec<usize> = (0..bits.len()).collect();
    order.shuffle(rng);
    if let Some(&i) = order.iter().find(|_| rng.gen_bool(p_m)) {
        bits[i] = !bits[i];
    }
    NetworkGenome::from_flat_bits(g.nodes(), &bits).expect("mutation keeps shape")
}

/// Probability that [`mutate`] changes a genome of `len` bits.
pub fn mutation_flip_probability(p_m: f64, len: usize) -> f64 {
    1.0 - (1.0 - p_m).powi(len as i32)
}
