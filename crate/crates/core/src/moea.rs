//! NSGA-II building blocks: Pareto dominance, fast non-dominated sorting,
//! crowding distance, crowded binary tournament and elitist truncation.
//!
//! Reference: Deb, K., Pratap, A., Agarwal, S., & Meyarivan, T. (2002).
//! A Fast and Elitist Multiobjective Genetic Algorithm: NSGA-II.
//! All objectives are minimized.

use std::cmp::Ordering;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::evaluators::ObjectiveVector;

/// A point in objective space.
pub trait Objectives {
    fn num_objectives(&self) -> usize;
    fn objective(&self, m: usize) -> f64;
}

impl Objectives for ObjectiveVector {
    fn num_objectives(&self) -> usize {
        2
    }

    fn objective(&self, m: usize) -> f64 {
        match m {
            0 => self.error,
            1 => self.complexity,
            _ => panic!("objective index {m} out of range"),
        }
    }
}

impl Objectives for [f64] {
    fn num_objectives(&self) -> usize {
        self.len()
    }

    fn objective(&self, m: usize) -> f64 {
        self[m]
    }
}

impl Objectives for Vec<f64> {
    fn num_objectives(&self) -> usize {
        self.len()
    }

    fn objective(&self, m: usize) -> f64 {
        self[m]
    }
}

impl<const N: usize> Objectives for [f64; N] {
    fn num_objectives(&self) -> usize {
        N
    }

    fn objective(&self, m: usize) -> f64 {
        self[m]
    }
}

impl<T: Objectives + ?Sized> Objectives for &T {
    fn num_objectives(&self) -> usize {
        (**self).num_objectives()
    }

    fn objective(&self, m: usize) -> f64 {
        (**self).objective(m)
    }
}

/// `a` is no worse than `b` everywhere and strictly better somewhere.
pub fn dominates<A: Objectives + ?Sized, B: Objectives + ?Sized>(a: &A, b: &B) -> bool {
    let mut strictly = false;
    for m in 0..a.num_objectives() {
        let (x, y) = (a.objective(m), b.objective(m));
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Partition indices of `points` into non-dominated fronts, best first.
/// Indices inside a front are ascending.
pub fn fast_nondominated_sort<T: Objectives>(points: &[T]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for p in 0..n {
        for q in (p + 1)..n {
            if dominates(&points[p], &points[q]) {
                dominated_by_me[p].push(q);
                domination_count[q] += 1;
            } else if dominates(&points[q], &points[p]) {
                dominated_by_me[q].push(p);
                domination_count[p] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by_me[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front, in input order.
pub fn crowding_distance<T: Objectives>(front: &[T]) -> Vec<f64> {
    let n = front.len();
    if n == 0 {
        return Vec::new();
    }
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let mut distance = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for m in 0..front[0].num_objectives() {
        order.sort_by(|&a, &b| {
            front[a]
                .objective(m)
                .partial_cmp(&front[b].objective(m))
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let lo = front[order[0]].objective(m);
        let hi = front[order[n - 1]].objective(m);
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        let range = hi - lo;
        if range <= 0.0 {
            continue;
        }
        for w in 1..n - 1 {
            let gap = front[order[w + 1]].objective(m) - front[order[w - 1]].objective(m);
            distance[order[w]] += gap / range;
        }
    }
    distance
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedIndividual {
    /// Position in the population this ranking was computed for.
    pub index: usize,
    pub objectives: ObjectiveVector,
    /// Front index, 0 for the non-dominated set.
    pub rank: usize,
    pub crowding: f64,
}

/// Crowded-comparison: lower rank first, then larger crowding distance.
pub fn crowded_cmp(a: &RankedIndividual, b: &RankedIndividual) -> Ordering {
    a.rank.cmp(&b.rank).then_with(|| {
        b.crowding
            .partial_cmp(&a.crowding)
            .unwrap_or(Ordering::Equal)
    })
}

/// Rank and crowding for every member of `objectives`, in input order.
pub fn rank_population(objectives: &[ObjectiveVector]) -> Vec<RankedIndividual> {
    let mut ranked: Vec<RankedIndividual> = objectives
        .iter()
        .enumerate()
        .map(|(index, &objectives)| RankedIndividual {
            index,
            objectives,
            rank: 0,
            crowding: 0.0,
        })
        .collect();
    for (rank, front) in fast_nondominated_sort(objectives).iter().enumerate() {
        let pts: Vec<ObjectiveVector> = front.iter().map(|&i| objectives[i]).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&pts)) {
            ranked[i].rank = rank;
            ranked[i].crowding = d;
        }
    }
    ranked
}

/// Binary tournament under the crowded-comparison operator. Returns the
/// winner's position in `pop`.
pub fn tournament_select<R: Rng + ?Sized>(pop: &[RankedIndividual], rng: &mut R) -> usize {
    assert!(!pop.is_empty(), "tournament over an empty population");
    let a = rng.gen_range(0..pop.len());
    let b = rng.gen_range(0..pop.len());
    match crowded_cmp(&pop[a], &pop[b]) {
        Ordering::Less => a,
        Ordering::Greater => b,
        Ordering::Equal => {
            if rng.gen_bool(0.5) {
                a
            } else {
                b
            }
        }
    }
}

/// Elitist truncation of a combined pool down to `target` members.
///
/// Whole fronts are admitted in rank order; the front that overflows is cut
/// by descending crowding distance, ties kept in input order. Returned
/// entries carry their pool index, rank and crowding as computed on the pool.
pub fn environmental_selection(pool: &[ObjectiveVector], target: usize) -> Vec<RankedIndividual> {
    assert!(pool.len() >= target, "pool smaller than the target size");
    let mut survivors = Vec::with_capacity(target);
    for (rank, front) in fast_nondominated_sort(pool).into_iter().enumerate() {
        if survivors.len() == target {
            break;
        }
        let pts: Vec<ObjectiveVector> = front.iter().map(|&i| pool[i]).collect();
        let crowd = crowding_distance(&pts);
        let mut members: Vec<RankedIndividual> = front
            .iter()
            .zip(crowd)
            .map(|(&index, crowding)| RankedIndividual {
                index,
                objectives: pool[index],
                rank,
                crowding,
            })
            .collect();
        let room = target - survivors.len();
        if members.len() > room {
            // stable sort keeps input order among equal distances
            members.sort_by(|a, b| {
                b.crowding
                    .partial_cmp(&a.crowding)
                    .unwrap_or(Ordering::Equal)
            });
            members.truncate(room);
        }
        survivors.extend(members);
    }
    survivors
}

/// Indices of the non-dominated members of `points`, ascending.
pub fn nondominated_indices<T: Objectives>(points: &[T]) -> Vec<usize> {
    (0..points.len())
        .filter(|&i| !points.iter().any(|q| dominates(q, &points[i])))
        .collect()
}
