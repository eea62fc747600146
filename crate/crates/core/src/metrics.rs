//! Search-quality metrics: exact two-objective hypervolume, its normalized
//! variant and the offspring survival rate.

use std::collections::HashSet;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::archive::Stage;
use crate::evaluators::ObjectiveVector;

/// Offset of the normalized reference point beyond the archive nadir.
pub const REFERENCE_EPSILON: f64 = 0.01;

/// Exact area dominated by `points` and bounded by `reference`.
///
/// Points that do not strictly dominate the reference in both coordinates are ignored.
pub fn hypervolume_2d(points: &[ObjectiveVector], reference: ObjectiveVector) -> f64 {
    let mut pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.error < reference.error && p.complexity < reference.complexity)
        .map(|p| (p.error, p.complexity))
        .collect();
    if pts.is_empty() {
        return 0.0;
    }
    pts.sort_by(|a, b| a.partial_cmp(b).expect("finite objectives"));
    // Sweep by ascending first objective keeping the staircase of strictly improving second values.
    let mut stairs: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for (x, y) in pts {
        if stairs.last().is_none_or(|&(_, best)| y < best) {
            stairs.push((x, y));
        }
    }
    let mut area = 0.0;
    for (i, &(x, y)) in stairs.iter().enumerate() {
        let next_x = stairs.get(i + 1).map_or(reference.error, |s| s.0);
        area += (next_x - x) * (reference.complexity - y);
    }
    area
}

/// Per-objective range used to map objectives onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: ObjectiveVector,
    pub max: ObjectiveVector,
}

impl Bounds {
    pub fn from_points<'a, I: IntoIterator<Item = &'a ObjectiveVector>>(points: I) -> Option<Self> {
        let mut it = points.into_iter();
        let first = *it.next()?;
        let mut b = Bounds {
            min: first,
            max: first,
        };
        for p in it {
            b.min.error = b.min.error.min(p.error);
            b.min.complexity = b.min.complexity.min(p.complexity);
            b.max.error = b.max.error.max(p.error);
            b.max.complexity = b.max.complexity.max(p.complexity);
        }
        Some(b)
    }

    fn map_one(v: f64, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            (v - lo) / (hi - lo)
        } else {
            0.0
        }
    }

    pub fn normalize(&self, p: &ObjectiveVector) -> ObjectiveVector {
        ObjectiveVector::new(
            Self::map_one(p.error, self.min.error, self.max.error),
            Self::map_one(p.complexity, self.min.complexity, self.max.complexity),
        )
    }

    /// Raw-unit reference point matching the normalized `(1 + eps, 1 + eps)`.
    pub fn raw_reference(&self) -> ObjectiveVector {
        let r = 1.0 + REFERENCE_EPSILON;
        ObjectiveVector::new(
            self.min.error + r * (self.max.error - self.min.error),
            self.min.complexity + r * (self.max.complexity - self.min.complexity),
        )
    }
}

/// Hypervolume after mapping by `bounds`, against `(1 + eps, 1 + eps)`.
pub fn normalized_hv(front: &[ObjectiveVector], bounds: &Bounds) -> f64 {
    let mapped: Vec<ObjectiveVector> = front.iter().map(|p| bounds.normalize(p)).collect();
    let r = 1.0 + REFERENCE_EPSILON;
    hypervolume_2d(&mapped, ObjectiveVector::new(r, r))
}

/// Fraction of `offspring` that appear in `survivors`; `None` without offspring.
pub fn survival_rate<T: Eq + Hash>(offspring: &[T], survivors: &[T]) -> Option<f64> {
    if offspring.is_empty() {
        return None;
    }
    let alive: HashSet<&T> = survivors.iter().collect();
    let kept = offspring.iter().filter(|o| alive.contains(o)).count();
    Some(kept as f64 / offspring.len() as f64)
}

/// One line of the per-generation trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub generation: usize,
    pub stage: Stage,
    pub hv: f64,
    pub normalized_hv: f64,
    pub survival_rate: Option<f64>,
    pub evaluations: usize,
}

pub fn trace_to_csv(rows: &[TraceRow]) -> String {
    let mut out =
        String::from("generation,stage,hv,normalized_hv,survival_rate,evaluations_so_far\n");
    for r in rows {
        let rate = r.survival_rate.map(|v| v.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.generation, r.stage, r.hv, r.normalized_hv, rate, r.evaluations
        ));
    }
    out
}
