//! Exploitation by sampling from a chain Bayesian network over phases.
//!
//! States are canonical phase keys, so phenotype-equivalent strings pool their
//! counts. The network is the fixed chain `x1 -> x2 -> ... -> x_np`: a
//! marginal for every phase position (the first one drives sampling, the rest
//! are back-offs) and a conditional table for each adjacent pair.

use indexmap::IndexMap;
use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{ArchiveRecord, SearchArchive};
use crate::dedup::CanonicalPhaseKey;
use crate::encoding::{NetworkGenome, PhaseGenome};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BoaError {
    #[error("cannot fit a model on an empty archive")]
    EmptyArchive,
    #[error("smoothing parameter must be finite and non-negative")]
    InvalidSmoothing,
}

/// Observed states of one phase position, in first-seen order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSupport {
    pub keys: Vec<CanonicalPhaseKey>,
    /// First archived bit-string seen for each key.
    pub representatives: Vec<PhaseGenome>,
}

/// `p(x_{i+1} | x_i)`: rows keyed by the index of the conditioning state in
/// support `i`, columns over support `i + 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalTable {
    pub rows: IndexMap<usize, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseBayesNet {
    pub alpha: f64,
    pub support: Vec<PhaseSupport>,
    /// `marginals[i]` is over `support[i]`.
    pub marginals: Vec<Vec<f64>>,
    /// `conditionals[i]` links position `i` to `i + 1`.
    pub conditionals: Vec<ConditionalTable>,
}

fn normalize(counts: &[f64], alpha: f64) -> Vec<f64> {
    let total: f64 = counts.iter().map(|c| c + alpha).sum();
    counts.iter().map(|c| (c + alpha) / total).collect()
}

/// Fit on every record of the archive.
pub fn fit_bn(archive: &SearchArchive, alpha: f64) -> Result<PhaseBayesNet, BoaError> {
    fit_bn_from(archive.records().iter(), alpha)
}

/// Fit on an arbitrary selection of archive records.
pub fn fit_bn_from<'a, I>(records: I, alpha: f64) -> Result<PhaseBayesNet, BoaError>
where
    I: IntoIterator<Item = &'a ArchiveRecord>,
{
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(BoaError::InvalidSmoothing);
    }
    let mut positions: Vec<IndexMap<CanonicalPhaseKey, (PhaseGenome, f64)>> = Vec::new();
    let mut transitions: Vec<IndexMap<usize, IndexMap<usize, f64>>> = Vec::new();
    let mut seen_any = false;
    for record in records {
        seen_any = true;
        let n = record.key.0.len();
        if positions.is_empty() {
            positions = vec![IndexMap::new(); n];
            transitions = vec![IndexMap::new(); n.saturating_sub(1)];
        }
        let mut prev: Option<usize> = None;
        for (i, (key, phase)) in record.key.0.iter().zip(record.genome.phases()).enumerate() {
            let entry = positions[i].entry(key.clone());
            let idx = entry.index();
            entry.or_insert_with(|| (phase.clone(), 0.0)).1 += 1.0;
            if let Some(p) = prev {
                *transitions[i - 1]
                    .entry(p)
                    .or_default()
                    .entry(idx)
                    .or_default() += 1.0;
            }
            prev = Some(idx);
        }
    }
    if !seen_any {
        return Err(BoaError::EmptyArchive);
    }

    let marginals = positions
        .iter()
        .map(|pos| {
            let counts: Vec<f64> = pos.values().map(|(_, c)| *c).collect();
            normalize(&counts, alpha)
        })
        .collect();
    let conditionals = transitions
        .iter()
        .enumerate()
        .map(|(i, rows)| {
            let width = positions[i + 1].len();
            let rows = rows
                .iter()
                .map(|(&from, cols)| {
                    let mut counts = vec![0.0; width];
                    for (&to, &c) in cols {
                        counts[to] = c;
                    }
                    (from, normalize(&counts, alpha))
                })
                .collect();
            ConditionalTable { rows }
        })
        .collect();
    let support = positions
        .into_iter()
        .map(|pos| {
            let (keys, representatives) = pos.into_iter().map(|(k, (g, _))| (k, g)).unzip();
            PhaseSupport {
                keys,
                representatives,
            }
        })
        .collect();
    Ok(PhaseBayesNet {
        alpha,
        support,
        marginals,
        conditionals,
    })
}

impl PhaseBayesNet {
    pub fn phases(&self) -> usize {
        self.support.len()
    }

    /// Draw state indices (one per phase position) for a single network.
    pub fn sample_states<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<usize> {
        let mut states = Vec::with_capacity(self.phases());
        let mut prev: Option<usize> = None;
        for i in 0..self.phases() {
            let weights = match prev {
                Some(p) => self.conditionals[i - 1]
                    .rows
                    .get(&p)
                    .unwrap_or(&self.marginals[i]),
                None => &self.marginals[0],
            };
            let idx = WeightedIndex::new(weights)
                .expect("fitted distributions have positive mass")
                .sample(rng);
            states.push(idx);
            prev = Some(idx);
        }
        states
    }

    pub fn materialize(&self, states: &[usize]) -> NetworkGenome {
        let phases = states
            .iter()
            .enumerate()
            .map(|(i, &s)| self.support[i].representatives[s].clone())
            .collect();
        NetworkGenome::new(phases).expect("representatives share one shape")
    }

    /// Human-readable dump of supports and tables.
    pub fn to_json(&self) -> serde_json::Value {
        let support: Vec<serde_json::Value> = self
            .support
            .iter()
            .zip(&self.marginals)
            .enumerate()
            .map(|(i, (s, m))| {
                serde_json::json!({
                    "phase": i + 1,
                    "states": s.keys.iter().zip(&s.representatives).zip(m).map(|((k, r), p)| {
                        serde_json::json!({"key": k.to_string(), "bits": r.to_string(), "p": p})
                    }).collect::<Vec<_>>(),
                })
            })
            .collect();
        let conditionals: Vec<serde_json::Value> = self
            .conditionals
            .iter()
            .enumerate()
            .map(|(i, t)| {
                serde_json::json!({
                    "from_phase": i + 1,
                    "to_phase": i + 2,
                    "rows": t.rows.iter().map(|(from, row)| serde_json::json!({"given": from, "p": row})).collect::<Vec<_>>(),
                })
            })
            .collect();
        serde_json::json!({
            "alpha": self.alpha,
            "marginals": support,
            "conditionals": conditionals,
        })
    }
}

pub fn sample_bn<R: Rng + ?Sized>(
    bn: &PhaseBayesNet,
    rng: &mut R,
    count: usize,
) -> Vec<NetworkGenome> {
    (0..count)
        .map(|_| bn.materialize(&bn.sample_states(rng)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::archive::Stage;
    use crate::dedup::{canonical_network, canonical_phase};
    use crate::encoding::{parse_genome_inferred, random_genome, EncodingConfig};
    use crate::evaluators::ObjectiveVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn archive_of(texts: &[&str]) -> SearchArchive {
        let mut a = SearchArchive::new();
        for (i, t) in texts.iter().enumerate() {
            let genome = parse_genome_inferred(t).unwrap();
            a.insert(ArchiveRecord {
                key: canonical_network(&genome).unwrap(),
                genome,
                objectives: ObjectiveVector::new(0.1, i as f64),
                generation: 0,
                stage: Stage::Initialization,
            });
        }
        a
    }

    #[test]
    fn empty_archive_is_rejected() {
        assert_eq!(
            fit_bn(&SearchArchive::new(), 1.0),
            Err(BoaError::EmptyArchive)
        );
        assert_eq!(
            fit_bn(&archive_of(&["1-00-0"]), -1.0),
            Err(BoaError::InvalidSmoothing)
        );
    }

    #[test]
    fn single_genome_is_a_point_mass() {
        let a = archive_of(&["1-00-0 1-11-1 0-00-1"]);
        let bn = fit_bn(&a, 0.0).unwrap();
        assert_eq!(bn.marginals[0], vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for g in sample_bn(&bn, &mut rng, 20) {
            assert_eq!(canonical_network(&g).unwrap(), a.records()[0].key);
        }
    }

    // Phase-1 keys: A = chain (3 distinct strings, one class), B = full.
    const A1: &str = "1-00-0";
    const A2: &str = "0-10-0";
    const A3: &str = "0-01-0";
    const B: &str = "1-11-0";

    fn two_phase(first: &str, second: &str) -> String {
        format!("{first} {second}")
    }

    #[test]
    fn counts_and_laplace_smoothing() {
        let a = archive_of(&[
            &two_phase(A1, "0-00-0"),
            &two_phase(A2, "0-00-1"),
            &two_phase(A3, "1-00-1"),
            &two_phase(B, "1-11-1"),
        ]);
        let raw = fit_bn(&a, 0.0).unwrap();
        assert_eq!(raw.support[0].keys.len(), 2);
        assert_eq!(raw.marginals[0], vec![0.75, 0.25]);
        let smooth = fit_bn(&a, 1.0).unwrap();
        assert!((smooth.marginals[0][0] - 4.0 / 6.0).abs() < 1e-12);
        assert!((smooth.marginals[0][1] - 2.0 / 6.0).abs() < 1e-12);
        // representative is the first archived string
        assert_eq!(smooth.support[0].representatives[0].to_string(), A1);
        for table in &smooth.conditionals {
            for row in table.rows.values() {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn marginal_frequency_converges() {
        let a = archive_of(&[
            &two_phase(A1, "0-00-0"),
            &two_phase(A2, "0-00-1"),
            &two_phase(A3, "1-00-1"),
            &two_phase(B, "1-11-1"),
        ]);
        let bn = fit_bn(&a, 0.0).unwrap();
        let key_a = canonical_phase(&parse_genome_inferred(A1).unwrap().phases()[0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 10_000;
        let hits = sample_bn(&bn, &mut rng, n)
            .iter()
            .filter(|g| canonical_phase(&g.phases()[0]).unwrap() == key_a)
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.75).abs() <= 0.02, "{freq}");
    }

    #[test]
    fn unseen_conditioning_state_backs_off() {
        let a = archive_of(&["1-00-0 1-00-0", "1-11-0 0-00-1"]);
        let mut bn = fit_bn(&a, 1.0).unwrap();
        bn.conditionals[0].rows.clear();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let states: Vec<_> = (0..1000).map(|_| bn.sample_states(&mut rng)).collect();
        assert!(states.iter().all(|s| s[1] < bn.support[1].keys.len()));
    }

    #[test]
    fn samples_stay_in_observed_support() {
        let cfg = EncodingConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut a = SearchArchive::new();
        for i in 0..200 {
            let genome = random_genome(&mut rng, &cfg);
            a.insert(ArchiveRecord {
                key: canonical_network(&genome).unwrap(),
                genome,
                objectives: ObjectiveVector::new(0.2, i as f64),
                generation: 0,
                stage: Stage::Initialization,
            });
        }
        let bn = fit_bn(&a, 1.0).unwrap();
        for dist in &bn.marginals {
            assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        for g in sample_bn(&bn, &mut rng, 500) {
            let key = canonical_network(&g).unwrap();
            for (i, k) in key.0.iter().enumerate() {
                assert!(a.records().iter().any(|r| &r.key.0[i] == k));
            }
        }
        let dump = bn.to_json();
        assert_eq!(dump["marginals"].as_array().unwrap().len(), 3);
    }
}
