//! Search driver: initialization, exploration, exploitation, checkpointing.
//!
//! A generation is computed on a copy of the random source and committed only
//! when every offspring has been evaluated, so a checkpoint always describes a
//! generation boundary and a failed generation can be retried from it.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::archive::{ArchiveRecord, SearchArchive, Stage};
use crate::boa::{fit_bn_from, sample_bn, BoaError, PhaseBayesNet};
use crate::config::{ConfigError, EvaluatorSpec, ExploitationSampler, SearchConfig};
use crate::dedup::{canonical_network, DedupError, NetworkKey};
use crate::encoding::{decode_network, format_genome, parse_genome, random_genome, NetworkGenome};
use crate::evaluators::{
    evaluate_with_cache, CacheEntry, ErrorEvaluator, EvalError, ExternalEvaluator, ObjectiveCache,
    ObjectiveVector, SurrogateEvaluator,
};
use crate::metrics::{hypervolume_2d, normalized_hv, trace_to_csv, Bounds, TraceRow};
use crate::moea::{
    environmental_selection, fast_nondominated_sort, nondominated_indices, rank_population,
    tournament_select,
};
use crate::operators::{maybe_crossover, mutate};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Consecutive duplicate draws tolerated while filling a random-search batch.
const RANDOM_UNIQUE_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Dedup(#[from] DedupError),
    #[error(transparent)]
    Model(#[from] BoaError),
    #[error("generation {generation}: {failures} evaluations failed, last error: {source}")]
    EvaluationFailed {
        generation: usize,
        failures: usize,
        source: EvalError,
    },
    #[error("search produced no evaluated architectures")]
    EmptyFront,
    #[error("could not find {wanted} unseen architectures for random search")]
    SpaceExhausted { wanted: usize },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint was written with a different configuration")]
    ConfigMismatch,
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
    #[error("{path}: {reason}")]
    Io { path: String, reason: String },
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> EngineError {
    EngineError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub genome: NetworkGenome,
    pub key: NetworkKey,
    pub objectives: ObjectiveVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationLog {
    pub generation: usize,
    pub stage: Stage,
    pub survival_rate: Option<f64>,
}

/// Complete resumable state at a generation boundary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: SearchConfig,
    pub rng: ChaCha8Rng,
    /// Index of the next generation to run; 0 means nothing has run yet.
    pub next_generation: usize,
    pub stage: Stage,
    pub population: Vec<Member>,
    pub archive: SearchArchive,
    pub log: Vec<GenerationLog>,
    pub finished: bool,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), EngineError> {
        let text = serde_json::to_string(self).map_err(|e| io_err(path, e))?;
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(|e| io_err(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| io_err(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, EngineError> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let value: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| EngineError::CorruptCheckpoint(e.to_string()))?;
        let found = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| EngineError::CorruptCheckpoint("missing version".into()))?;
        if found != CHECKPOINT_VERSION as u64 {
            return Err(EngineError::VersionMismatch {
                found: found as u32,
                expected: CHECKPOINT_VERSION,
            });
        }
        serde_json::from_value(value).map_err(|e| EngineError::CorruptCheckpoint(e.to_string()))
    }
}

#[derive(Debug, Clone)]
pub struct SearchResult {
    pub config: SearchConfig,
    pub seed: u64,
    /// Non-dominated archive records, in archive order.
    pub front: Vec<ArchiveRecord>,
    pub archive: SearchArchive,
    pub trace: Vec<TraceRow>,
    /// Archive bounds used for every normalized value in `trace`.
    pub bounds: Option<Bounds>,
}

impl SearchResult {
    pub fn final_normalized_hv(&self) -> f64 {
        self.trace.last().map_or(0.0, |r| r.normalized_hv)
    }

    pub fn front_objectives(&self) -> Vec<ObjectiveVector> {
        self.front.iter().map(|r| r.objectives).collect()
    }

    pub fn front_csv(&self) -> String {
        let mut out = String::from("genome,key,error,flops\n");
        for r in &self.front {
            out.push_str(&format!(
                "{},{},{},{}\n",
                format_genome(&r.genome),
                r.key.digest(),
                r.objectives.error,
                r.objectives.complexity
            ));
        }
        out
    }
}

pub fn build_evaluator(cfg: &SearchConfig) -> Arc<dyn ErrorEvaluator> {
    match &cfg.evaluator {
        EvaluatorSpec::Surrogate(p) => Arc::new(SurrogateEvaluator::new(*p)),
        EvaluatorSpec::External { command, .. } => Arc::new(ExternalEvaluator::new(
            command.clone(),
            cfg.evaluator
                .timeout()
                .unwrap_or(ExternalEvaluator::DEFAULT_TIMEOUT),
            cfg.seed,
        )),
    }
}

/// Normalized HV trace over the archive, one row per logged generation.
///
/// Bounds come from the whole archive; row `g` covers records created up to
/// generation `g`, so the values never decrease.
pub fn compute_trace(
    archive: &SearchArchive,
    log: &[GenerationLog],
) -> (Vec<TraceRow>, Option<Bounds>) {
    let bounds = Bounds::from_points(archive.records().iter().map(|r| &r.objectives));
    let rows = log
        .iter()
        .map(|g| {
            let seen: Vec<ObjectiveVector> = archive
                .records()
                .iter()
                .filter(|r| r.generation <= g.generation)
                .map(|r| r.objectives)
                .collect();
            let (hv, nhv) = match &bounds {
                Some(b) => (
                    hypervolume_2d(&seen, b.raw_reference()),
                    normalized_hv(&seen, b),
                ),
                None => (0.0, 0.0),
            };
            TraceRow {
                generation: g.generation,
                stage: g.stage,
                hv,
                normalized_hv: nhv,
                survival_rate: g.survival_rate,
                evaluations: seen.len(),
            }
        })
        .collect();
    (rows, bounds)
}

pub struct SearchRunner {
    state: Checkpoint,
    evaluator: Arc<dyn ErrorEvaluator>,
    cache: ObjectiveCache,
    pool: Option<rayon::ThreadPool>,
}

struct Batch {
    members: Vec<Member>,
    rng: ChaCha8Rng,
}

impl SearchRunner {
    pub fn new(cfg: SearchConfig) -> Result<Self, EngineError> {
        let evaluator = build_evaluator(&cfg);
        Self::with_evaluator(cfg, evaluator)
    }

    pub fn with_evaluator(
        cfg: SearchConfig,
        evaluator: Arc<dyn ErrorEvaluator>,
    ) -> Result<Self, EngineError> {
        cfg.validate()?;
        let state = Checkpoint {
            version: CHECKPOINT_VERSION,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            next_generation: 0,
            stage: if cfg.random_search {
                Stage::Random
            } else {
                Stage::Initialization
            },
            population: Vec::new(),
            archive: SearchArchive::new(),
            log: Vec::new(),
            finished: false,
            config: cfg,
        };
        Self::from_state(state, evaluator)
    }

    /// Continue from `checkpoint`; `cfg` must match the checkpointed config up to worker count.
    pub fn resume(
        checkpoint: Checkpoint,
        cfg: &SearchConfig,
        evaluator: Arc<dyn ErrorEvaluator>,
    ) -> Result<Self, EngineError> {
        if checkpoint.version != CHECKPOINT_VERSION {
            return Err(EngineError::VersionMismatch {
                found: checkpoint.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if !checkpoint.config.compatible_with(cfg) {
            return Err(EngineError::ConfigMismatch);
        }
        let mut state = checkpoint;
        state.config.workers = cfg.workers;
        let runner = Self::from_state(state, evaluator)?;
        for r in runner.state.archive.records() {
            runner.cache.insert(
                r.key.clone(),
                CacheEntry {
                    objectives: r.objectives,
                    evaluator: runner.evaluator.id().to_string(),
                    evaluated_at: 0,
                },
            );
        }
        Ok(runner)
    }

    fn from_state(
        state: Checkpoint,
        evaluator: Arc<dyn ErrorEvaluator>,
    ) -> Result<Self, EngineError> {
        let workers = state.config.workers;
        let pool = if workers > 1 {
            Some(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build()
                    .map_err(|e| EngineError::Io {
                        path: "<thread pool>".into(),
                        reason: e.to_string(),
                    })?,
            )
        } else {
            None
        };
        Ok(SearchRunner {
            state,
            evaluator,
            cache: ObjectiveCache::new(),
            pool,
        })
    }

    pub fn config(&self) -> &SearchConfig {
        &self.state.config
    }

    pub fn archive(&self) -> &SearchArchive {
        &self.state.archive
    }

    pub fn population(&self) -> &[Member] {
        &self.state.population
    }

    pub fn is_finished(&self) -> bool {
        self.state.finished
    }

    /// Evaluator calls made by this runner (cache hits excluded).
    pub fn evaluations(&self) -> usize {
        self.cache.evaluations()
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.state.clone()
    }

    /// Run one generation. Returns `false` once the search is complete.
    pub fn step(&mut self) -> Result<bool, EngineError> {
        if self.state.finished {
            return Ok(false);
        }
        let generation = self.state.next_generation;
        let stage = self.state.stage;
        let batch = match stage {
            Stage::Initialization => self.initial_batch(generation)?,
            Stage::Exploration => self.exploration_batch(generation)?,
            Stage::Exploitation => self.exploitation_batch(generation)?,
            Stage::Random => self.random_batch(generation)?,
        };
        self.commit(generation, stage, batch);
        Ok(!self.state.finished)
    }

    pub fn run(mut self) -> Result<SearchResult, EngineError> {
        while self.step()? {}
        self.result()
    }

    pub fn result(&self) -> Result<SearchResult, EngineError> {
        let archive = &self.state.archive;
        if archive.is_empty() {
            return Err(EngineError::EmptyFront);
        }
        let (trace, bounds) = compute_trace(archive, &self.state.log);
        Ok(SearchResult {
            config: self.state.config.clone(),
            seed: self.state.config.seed,
            front: archive.front().into_iter().cloned().collect(),
            archive: archive.clone(),
            trace,
            bounds,
        })
    }

    fn commit(&mut self, generation: usize, stage: Stage, batch: Batch) {
        let cfg = &self.state.config;
        let n = cfg.population_size;
        let st = &mut self.state;
        st.rng = batch.rng;
        for m in &batch.members {
            st.archive.events.record(stage);
            st.archive.insert(ArchiveRecord {
                genome: m.genome.clone(),
                key: m.key.clone(),
                objectives: m.objectives,
                generation,
                stage,
            });
        }
        let survival_rate = match stage {
            Stage::Exploration | Stage::Exploitation => {
                let mut pool = std::mem::take(&mut st.population);
                let parents = pool.len();
                pool.extend(batch.members);
                let objectives: Vec<ObjectiveVector> = pool.iter().map(|m| m.objectives).collect();
                let survivors = environmental_selection(&objectives, n);
                let offspring: Vec<usize> = (parents..pool.len()).collect();
                let kept: Vec<usize> = survivors.iter().map(|s| s.index).collect();
                let rate = crate::metrics::survival_rate(&offspring, &kept);
                st.population = kept.into_iter().map(|i| pool[i].clone()).collect();
                rate
            }
            Stage::Initialization => {
                st.population = batch.members;
                None
            }
            Stage::Random => None,
        };
        st.log.push(GenerationLog {
            generation,
            stage,
            survival_rate,
        });
        log::info!(
            "generation {generation} ({stage}): archive {} records{}",
            st.archive.len(),
            survival_rate.map_or(String::new(), |r| format!(", survival {r:.3}"))
        );
        st.next_generation = generation + 1;
        self.advance_stage(stage, survival_rate);
    }

    fn advance_stage(&mut self, finished_stage: Stage, survival_rate: Option<f64>) {
        let cfg = &self.state.config;
        let count = |s: Stage| self.state.log.iter().filter(|g| g.stage == s).count();
        let exploit_or_finish = if cfg.exploitation_generations > 0 {
            Some(Stage::Exploitation)
        } else {
            None
        };
        let next = match finished_stage {
            Stage::Initialization => {
                if cfg.exploration_generations > 0 {
                    Some(Stage::Exploration)
                } else {
                    exploit_or_finish
                }
            }
            Stage::Exploration => {
                let switch = match (cfg.survival_rate_switch_threshold, survival_rate) {
                    (Some(t), Some(r)) => r <= t,
                    _ => false,
                };
                if switch || count(Stage::Exploration) >= cfg.exploration_generations {
                    if switch {
                        log::info!(
                            "survival rate at or below threshold, switching to exploitation"
                        );
                    }
                    exploit_or_finish
                } else {
                    Some(Stage::Exploration)
                }
            }
            Stage::Exploitation => {
                if count(Stage::Exploitation) >= cfg.exploitation_generations {
                    None
                } else {
                    Some(Stage::Exploitation)
                }
            }
            Stage::Random => {
                if self.state.archive.len() >= cfg.evaluation_budget() {
                    None
                } else {
                    Some(Stage::Random)
                }
            }
        };
        match next {
            Some(s) => self.state.stage = s,
            None => self.state.finished = true,
        }
    }

    /// Evaluate candidates in parallel; results keep candidate order.
    fn evaluate(
        &self,
        candidates: &[(NetworkGenome, NetworkKey)],
    ) -> Vec<Result<ObjectiveVector, EvalError>> {
        let enc = &self.state.config.encoding;
        let eval = |c: &(NetworkGenome, NetworkKey)| {
            evaluate_with_cache(&c.0, enc, self.evaluator.as_ref(), &self.cache)
                .map(|e| e.objectives)
        };
        match &self.pool {
            Some(pool) => pool.install(|| candidates.par_iter().map(eval).collect()),
            None => candidates.iter().map(eval).collect(),
        }
    }

    /// Draw `count` genomes from `make`, retrying canonical duplicates of the
    /// archive and of the batch so far up to the retry limit.
    fn draw_unique<F>(
        &self,
        count: usize,
        taken: &mut HashSet<NetworkKey>,
        rng: &mut ChaCha8Rng,
        mut make: F,
    ) -> Result<Vec<(NetworkGenome, NetworkKey)>, EngineError>
    where
        F: FnMut(usize, &mut ChaCha8Rng) -> NetworkGenome,
    {
        let limit = self.state.config.dedup_retry_limit;
        let mut out = Vec::with_capacity(count);
        for slot in 0..count {
            let mut attempt = 0;
            let (g, key) = loop {
                let g = make(slot, rng);
                let key = canonical_network(&g)?;
                let seen = self.state.archive.contains(&key) || taken.contains(&key);
                if !seen || attempt >= limit {
                    break (g, key);
                }
                attempt += 1;
            };
            taken.insert(key.clone());
            out.push((g, key));
        }
        Ok(out)
    }

    /// Fill a batch of `target` evaluated members. `make` creates the genome
    /// for a given slot; failed evaluations are discarded and their slots refilled.
    fn fill_batch<F>(
        &self,
        generation: usize,
        target: usize,
        rng: &mut ChaCha8Rng,
        mut make: F,
    ) -> Result<Vec<Member>, EngineError>
    where
        F: FnMut(usize, &mut ChaCha8Rng) -> NetworkGenome,
    {
        let mut members: Vec<Option<Member>> = vec![None; target];
        let mut taken: HashSet<NetworkKey> = HashSet::new();
        let mut failures = 0;
        loop {
            let open: Vec<usize> = (0..target).filter(|&i| members[i].is_none()).collect();
            if open.is_empty() {
                break;
            }
            let candidates =
                self.draw_unique(open.len(), &mut taken, rng, |j, r| make(open[j], r))?;
            for ((slot, cand), res) in open.iter().zip(&candidates).zip(self.evaluate(&candidates))
            {
                match res {
                    Ok(objectives) => {
                        members[*slot] = Some(Member {
                            genome: cand.0.clone(),
                            key: cand.1.clone(),
                            objectives,
                        })
                    }
                    Err(source) => {
                        failures += 1;
                        log::warn!("evaluation of {} failed: {source}", format_genome(&cand.0));
                        taken.remove(&cand.1);
                        if failures > self.state.config.failure_budget {
                            return Err(EngineError::EvaluationFailed {
                                generation,
                                failures,
                                source,
                            });
                        }
                    }
                }
            }
        }
        Ok(members
            .into_iter()
            .map(|m| m.expect("every slot filled"))
            .collect())
    }

    fn initial_batch(&self, generation: usize) -> Result<Batch, EngineError> {
        let cfg = &self.state.config;
        let mut rng = self.state.rng.clone();
        let seeds: Vec<NetworkGenome> = cfg
            .seed_genomes
            .iter()
            .take(cfg.population_size)
            .map(|s| {
                parse_genome(s, &cfg.encoding).map_err(|e| ConfigError::Invalid(e.to_string()))
            })
            .collect::<Result<_, _>>()?;
        let mut used_seeds = vec![false; seeds.len()];
        let members = self.fill_batch(generation, cfg.population_size, &mut rng, |slot, r| {
            // a seed whose evaluation failed is replaced by a random genome
            if slot < seeds.len() && !used_seeds[slot] {
                used_seeds[slot] = true;
                seeds[slot].clone()
            } else {
                random_genome(r, &cfg.encoding)
            }
        })?;
        Ok(Batch { members, rng })
    }

    fn exploration_batch(&self, generation: usize) -> Result<Batch, EngineError> {
        let cfg = &self.state.config;
        let mut rng = self.state.rng.clone();
        let pop = &self.state.population;
        let ranked = rank_population(&pop.iter().map(|m| m.objectives).collect::<Vec<_>>());
        let mating: Vec<usize> = (0..cfg.population_size)
            .map(|_| tournament_select(&ranked, &mut rng))
            .collect();
        let members = self.fill_batch(generation, cfg.population_size, &mut rng, |slot, r| {
            // slots 2k and 2k+1 share the parent pair (2k, 2k+1)
            let pair = slot / 2 * 2;
            let p1 = &pop[mating[pair]].genome;
            let p2 = &pop[mating[pair + 1]].genome;
            let child = if cfg.disable_crossover {
                if slot % 2 == 0 {
                    p1.clone()
                } else {
                    p2.clone()
                }
            } else {
                maybe_crossover(p1, p2, cfg.crossover_probability, cfg.crossover_scope, r)
                    .expect("population shares one encoding")
            };
            mutate(&child, cfg.mutation_probability, r)
        })?;
        Ok(Batch { members, rng })
    }

    fn exploitation_batch(&self, generation: usize) -> Result<Batch, EngineError> {
        let cfg = &self.state.config;
        let mut rng = self.state.rng.clone();
        let bn = match cfg.exploitation_sampler {
            ExploitationSampler::Bn => Some(self.fit_model()?),
            ExploitationSampler::Uniform => None,
        };
        let members = self.fill_batch(generation, cfg.population_size, &mut rng, |_, r| {
            let g = match &bn {
                Some(bn) => sample_bn(bn, r, 1).pop().expect("one sample"),
                None => random_genome(r, &cfg.encoding),
            };
            if cfg.exploitation_mutation {
                mutate(&g, cfg.mutation_probability, r)
            } else {
                g
            }
        })?;
        Ok(Batch { members, rng })
    }

    /// Bayesian network over the archive, optionally restricted to its first fronts.
    pub fn fit_model(&self) -> Result<PhaseBayesNet, EngineError> {
        let cfg = &self.state.config;
        let records = self.state.archive.records();
        let model = match cfg.bn_fronts {
            None => fit_bn_from(records.iter(), cfg.bn_alpha)?,
            Some(k) => {
                let objectives: Vec<ObjectiveVector> =
                    records.iter().map(|r| r.objectives).collect();
                let mut chosen: Vec<usize> = fast_nondominated_sort(&objectives)
                    .into_iter()
                    .take(k)
                    .flatten()
                    .collect();
                chosen.sort_unstable();
                fit_bn_from(chosen.iter().map(|&i| &records[i]), cfg.bn_alpha)?
            }
        };
        Ok(model)
    }

    fn random_batch(&self, generation: usize) -> Result<Batch, EngineError> {
        let cfg = &self.state.config;
        let mut rng = self.state.rng.clone();
        let remaining = cfg.evaluation_budget() - self.state.archive.len();
        let target = remaining.min(cfg.population_size);
        let mut members: Vec<Member> = Vec::with_capacity(target);
        let mut taken: HashSet<NetworkKey> = HashSet::new();
        let mut failures = 0;
        let mut misses = 0;
        while members.len() < target {
            let mut candidates = Vec::new();
            while candidates.len() < target - members.len() {
                let g = random_genome(&mut rng, &cfg.encoding);
                let key = canonical_network(&g)?;
                if self.state.archive.contains(&key) || !taken.insert(key.clone()) {
                    misses += 1;
                    if misses > RANDOM_UNIQUE_ATTEMPTS {
                        return Err(EngineError::SpaceExhausted { wanted: target });
                    }
                    continue;
                }
                misses = 0;
                candidates.push((g, key));
            }
            for (cand, res) in candidates.iter().zip(self.evaluate(&candidates)) {
                match res {
                    Ok(objectives) => members.push(Member {
                        genome: cand.0.clone(),
                        key: cand.1.clone(),
                        objectives,
                    }),
                    Err(source) => {
                        failures += 1;
                        if failures > cfg.failure_budget {
                            return Err(EngineError::EvaluationFailed {
                                generation,
                                failures,
                                source,
                            });
                        }
                    }
                }
            }
        }
        Ok(Batch { members, rng })
    }
}

pub fn run_search(cfg: &SearchConfig) -> Result<SearchResult, EngineError> {
    SearchRunner::new(cfg.clone())?.run()
}

pub fn run_search_with(
    cfg: &SearchConfig,
    evaluator: Arc<dyn ErrorEvaluator>,
) -> Result<SearchResult, EngineError> {
    SearchRunner::with_evaluator(cfg.clone(), evaluator)?.run()
}

/// Uniform sampling of unique genomes with the same budget as a full search.
pub fn run_random_search(cfg: &SearchConfig) -> Result<SearchResult, EngineError> {
    let mut cfg = cfg.clone();
    cfg.random_search = true;
    run_search(&cfg)
}

/// Random search over exactly `budget` unique genomes.
pub fn run_random_search_budget(
    cfg: &SearchConfig,
    budget: usize,
) -> Result<SearchResult, EngineError> {
    if budget == 0 {
        return Err(EngineError::EmptyFront);
    }
    let mut cfg = cfg.clone();
    cfg.random_search = true;
    // budget = population * (1 + generations); use single-genome batches when it does not divide
    let n = cfg.population_size;
    if budget.is_multiple_of(n) {
        cfg.exploration_generations = budget / n - 1;
        cfg.exploitation_generations = 0;
        run_search(&cfg)
    } else {
        let mut runner = SearchRunner::new(cfg.clone())?;
        runner.state.config.exploration_generations = budget.div_ceil(n);
        runner.state.config.exploitation_generations = 0;
        while runner.state.archive.len() < budget {
            let short = budget - runner.state.archive.len();
            if short < n {
                let gen = runner.state.next_generation;
                let mut batch = runner.random_batch(gen)?;
                batch.members.truncate(short);
                runner.commit(gen, Stage::Random, batch);
                break;
            }
            runner.step()?;
        }
        runner.state.finished = true;
        runner.result()
    }
}

/// Fronts of BN-sampled and uniformly sampled architectures drawn after exploration.
#[derive(Debug, Clone)]
pub struct SamplerComparison {
    pub bn: Vec<ObjectiveVector>,
    pub uniform: Vec<ObjectiveVector>,
    /// Normalized HV of each sample set's front, under the bounds of both sets together.
    pub bn_hv: f64,
    pub uniform_hv: f64,
}

pub fn compare_exploitation_samplers(
    cfg: &SearchConfig,
    samples: usize,
) -> Result<SamplerComparison, EngineError> {
    let mut cfg = cfg.clone();
    cfg.exploitation_generations = 0;
    cfg.random_search = false;
    let mut runner = SearchRunner::new(cfg.clone())?;
    while runner.step()? {}
    let bn = runner.fit_model()?;
    let mut rng = runner.state.rng.clone();
    let from_bn = sample_bn(&bn, &mut rng, samples);
    let uniform: Vec<NetworkGenome> = (0..samples)
        .map(|_| random_genome(&mut rng, &cfg.encoding))
        .collect();
    let score = |gs: &[NetworkGenome]| -> Result<Vec<ObjectiveVector>, EngineError> {
        let cands: Vec<(NetworkGenome, NetworkKey)> = gs
            .iter()
            .map(|g| canonical_network(g).map(|k| (g.clone(), k)))
            .collect::<Result<_, _>>()?;
        runner
            .evaluate(&cands)
            .into_iter()
            .map(|r| {
                r.map_err(|source| EngineError::EvaluationFailed {
                    generation: runner.state.next_generation,
                    failures: 1,
                    source,
                })
            })
            .collect()
    };
    let bn_obj = score(&from_bn)?;
    let uni_obj = score(&uniform)?;
    let bounds =
        Bounds::from_points(bn_obj.iter().chain(&uni_obj)).ok_or(EngineError::EmptyFront)?;
    let front = |pts: &[ObjectiveVector]| -> Vec<ObjectiveVector> {
        nondominated_indices(pts)
            .into_iter()
            .map(|i| pts[i])
            .collect()
    };
    Ok(SamplerComparison {
        bn_hv: normalized_hv(&front(&bn_obj), &bounds),
        uniform_hv: normalized_hv(&front(&uni_obj), &bounds),
        bn: bn_obj,
        uniform: uni_obj,
    })
}

/// Files written into a run directory.
pub struct RunPaths {
    pub dir: PathBuf,
}

impl RunPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        RunPaths { dir: dir.into() }
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.dir.join("checkpoint.json")
    }
    pub fn config(&self) -> PathBuf {
        self.dir.join("config.cfg")
    }
    pub fn trace(&self) -> PathBuf {
        self.dir.join("trace.csv")
    }
    pub fn archive(&self) -> PathBuf {
        self.dir.join("archive.csv")
    }
    pub fn front(&self) -> PathBuf {
        self.dir.join("front.csv")
    }
    pub fn log(&self) -> PathBuf {
        self.dir.join("run.log")
    }
    pub fn dot_dir(&self) -> PathBuf {
        self.dir.join("dot")
    }
}

fn write(path: &Path, text: &str) -> Result<(), EngineError> {
    fs::write(path, text).map_err(|e| io_err(path, e))
}

/// Write every result artifact except the checkpoint.
pub fn write_outputs(result: &SearchResult, dir: &Path) -> Result<(), EngineError> {
    let paths = RunPaths::new(dir);
    fs::create_dir_all(paths.dot_dir()).map_err(|e| io_err(dir, e))?;
    write(&paths.config(), &result.config.to_text())?;
    write(&paths.trace(), &trace_to_csv(&result.trace))?;
    write(&paths.archive(), &result.archive.to_csv())?;
    write(&paths.front(), &result.front_csv())?;
    let mut log = format!(
        "seed {}\nrecords {}\nfront {}\n",
        result.seed,
        result.archive.len(),
        result.front.len()
    );
    let ev = result.archive.events;
    log.push_str(&format!(
        "created initialization={} exploration={} exploitation={} random={}\n",
        ev.initialization, ev.exploration, ev.exploitation, ev.random
    ));
    if let Some(b) = &result.bounds {
        log.push_str(&format!(
            "bounds error=[{}, {}] flops=[{}, {}]\n",
            b.min.error, b.max.error, b.min.complexity, b.max.complexity
        ));
    }
    write(&paths.log(), &log)?;
    for (i, r) in result.front.iter().enumerate() {
        let arch = decode_network(&r.genome, &result.config.encoding);
        let name = format!("front_{i:03}");
        write(
            &paths.dot_dir().join(format!("{name}.dot")),
            &arch.to_dot(&name),
        )?;
    }
    Ok(())
}

/// Run inside `dir`, checkpointing after every generation. With `resume`, an
/// existing checkpoint in `dir` is continued. On evaluation failure the last
/// completed generation stays on disk as the checkpoint.
pub fn run_in_dir(
    cfg: &SearchConfig,
    evaluator: Arc<dyn ErrorEvaluator>,
    dir: &Path,
    resume: bool,
) -> Result<SearchResult, EngineError> {
    let paths = RunPaths::new(dir);
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut runner = if resume && paths.checkpoint().exists() {
        SearchRunner::resume(Checkpoint::load(&paths.checkpoint())?, cfg, evaluator)?
    } else {
        SearchRunner::with_evaluator(cfg.clone(), evaluator)?
    };
    loop {
        match runner.step() {
            Ok(more) => {
                runner.checkpoint().save(&paths.checkpoint())?;
                if !more {
                    break;
                }
            }
            Err(e) => {
                runner.checkpoint().save(&paths.checkpoint())?;
                return Err(e);
            }
        }
    }
    let result = runner.result()?;
    write_outputs(&result, dir)?;
    Ok(result)
}
