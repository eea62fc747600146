//! Error-objective providers and the objective cache.
//!
//! The complexity objective is always computed analytically; only the error
//! objective is pluggable. Two providers ship here: a cheap deterministic
//! surrogate and a line-delimited JSON protocol to an external trainer.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::{Arc, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::complexity::estimate_complexity;
use crate::dedup::{canonical_network, DedupError, NetworkKey};
use crate::encoding::{
    decode_network, format_genome, EncodingConfig, NetworkArchitecture, NetworkGenome,
};

/// Environment variable carrying the run seed to external evaluators.
pub const SEED_ENV: &str = "ARCHSEARCH_SEED";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("evaluator timed out after {0:?}")]
    Timeout(Duration),
    #[error("malformed evaluator response: {0}")]
    Malformed(String),
    #[error("evaluator process failed: {0}")]
    Process(String),
    #[error("evaluator returned error {0}, outside [0, 1]")]
    OutOfRange(f64),
    #[error(transparent)]
    Dedup(#[from] DedupError),
}

/// Both objectives are minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    /// Classification error fraction in `[0, 1]`.
    pub error: f64,
    /// Multiply-adds of one forward pass.
    pub complexity: f64,
}

impl ObjectiveVector {
    pub fn new(error: f64, complexity: f64) -> Self {
        ObjectiveVector { error, complexity }
    }

    pub fn is_valid(&self) -> bool {
        self.error.is_finite()
            && self.complexity.is_finite()
            && (0.0..=1.0).contains(&self.error)
            && self.complexity >= 0.0
    }
}

/// Source of the error objective. Implementations must be deterministic for a
/// fixed configuration and genome.
pub trait ErrorEvaluator: Send + Sync {
    fn id(&self) -> &str;

    fn evaluate(
        &self,
        genome: &NetworkGenome,
        arch: &NetworkArchitecture,
    ) -> Result<f64, EvalError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateParams {
    pub e_min: f64,
    pub e_max: f64,
    pub beta: f64,
    /// Amplitude of the keyed perturbation.
    pub rho: f64,
}

impl Default for SurrogateParams {
    fn default() -> Self {
        SurrogateParams {
            e_min: 0.05,
            e_max: 0.60,
            beta: 3.0,
            rho: 0.02,
        }
    }
}

/// Largest connection count (edges plus input/output attachments) a phase
/// with `nodes` nodes can reach: the fully connected chain order.
pub fn max_phase_connections(nodes: usize) -> usize {
    nodes * (nodes - 1) / 2 + 2
}

/// Deterministic desk-scale stand-in for training: error decays exponentially
/// with the fraction of possible connections in use, plus a small perturbation
/// derived from the canonical network key.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEvaluator {
    pub params: SurrogateParams,
}

impl SurrogateEvaluator {
    pub fn new(params: SurrogateParams) -> Self {
        SurrogateEvaluator { params }
    }

    /// Zero-mean offset in `[-rho, rho)` keyed by the network's phenotype.
    pub fn perturbation(&self, key: &NetworkKey) -> f64 {
        let d = key.digest_bytes();
        let h = u64::from_le_bytes(d[..8].try_into().expect("digest is 32 bytes"));
        let unit = (h >> 11) as f64 / (1u64 << 53) as f64;
        self.params.rho * (2.0 * unit - 1.0)
    }

    /// Noise-free trend at normalized connectivity `u`.
    pub fn trend(&self, u: f64) -> f64 {
        let p = &self.params;
        p.e_min + (p.e_max - p.e_min) * (-p.beta * u).exp()
    }

    pub fn normalized_connections(arch: &NetworkArchitecture) -> f64 {
        let max = arch.phases.len() * max_phase_connections(arch.phases[0].nodes);
        (arch.active_connections() as f64 / max as f64).min(1.0)
    }
}

impl Default for SurrogateEvaluator {
    fn default() -> Self {
        SurrogateEvaluator::new(SurrogateParams::default())
    }
}

impl ErrorEvaluator for SurrogateEvaluator {
    fn id(&self) -> &str {
        "surrogate"
    }

    fn evaluate(
        &self,
        genome: &NetworkGenome,
        arch: &NetworkArchitecture,
    ) -> Result<f64, EvalError> {
        let key = canonical_network(genome)?;
        Ok(surrogate_error(self, &key, arch))
    }
}

pub fn surrogate_error(
    s: &SurrogateEvaluator,
    key: &NetworkKey,
    arch: &NetworkArchitecture,
) -> f64 {
    let u = SurrogateEvaluator::normalized_connections(arch);
    (s.trend(u) + s.perturbation(key)).clamp(0.0, 1.0)
}

#[derive(Debug, Serialize)]
struct Request<'a> {
    id: u64,
    genome: &'a str,
    architecture: serde_json::Value,
}

#[derive(Debug, Deserialize)]
struct Response {
    id: u64,
    error: f64,
}

struct Worker {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

impl Worker {
    fn kill(mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }

    fn exit_description(&mut self) -> String {
        match self.child.wait() {
            Ok(status) if status.success() => "child exited before replying".to_string(),
            Ok(status) => format!("child exited with {status}"),
            Err(e) => format!("could not collect child status: {e}"),
        }
    }
}

/// Runs an external program that answers one request line with one response
/// line. Children are kept alive between requests; each holds at most one
/// request in flight, and concurrent callers get their own child.
pub struct ExternalEvaluator {
    command: String,
    timeout: Duration,
    seed: u64,
    idle: Mutex<Vec<Worker>>,
    next_id: AtomicU64,
    spawned: AtomicUsize,
}

impl ExternalEvaluator {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(3600);

    /// `command` is run through `sh -c`.
    pub fn new(command: impl Into<String>, timeout: Duration, seed: u64) -> Self {
        ExternalEvaluator {
            command: command.into(),
            timeout,
            seed,
            idle: Mutex::new(Vec::new()),
            next_id: AtomicU64::new(1),
            spawned: AtomicUsize::new(0),
        }
    }

    /// Number of child processes started so far.
    pub fn spawned(&self) -> usize {
        self.spawned.load(Ordering::Relaxed)
    }

    fn spawn(&self) -> Result<Worker, EvalError> {
        let mut child = Command::new("sh")
            .arg("-c")
            .arg(&self.command)
            .env(SEED_ENV, self.seed.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| EvalError::Process(format!("cannot launch `{}`: {e}", self.command)))?;
        self.spawned.fetch_add(1, Ordering::Relaxed);
        let stdin = child.stdin.take().expect("stdin piped");
        let stdout = child.stdout.take().expect("stdout piped");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(Worker {
            child,
            stdin,
            lines: rx,
        })
    }

    fn exchange(&self, worker: &mut Worker, id: u64, payload: &str) -> Result<f64, EvalError> {
        writeln!(worker.stdin, "{payload}")
            .and_then(|_| worker.stdin.flush())
            .map_err(|e| EvalError::Process(format!("write to child failed: {e}")))?;
        let line = match worker.lines.recv_timeout(self.timeout) {
            Ok(Ok(line)) => line,
            Ok(Err(e)) => return Err(EvalError::Process(format!("read from child failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => return Err(EvalError::Timeout(self.timeout)),
            Err(RecvTimeoutError::Disconnected) => {
                return Err(EvalError::Process(worker.exit_description()))
            }
        };
        let response: Response = serde_json::from_str(line.trim())
            .map_err(|e| EvalError::Malformed(format!("{e}: {line:?}")))?;
        if response.id != id {
            return Err(EvalError::Malformed(format!(
                "response id {} does not match request id {id}",
                response.id
            )));
        }
        if !response.error.is_finite() || !(0.0..=1.0).contains(&response.error) {
            return Err(EvalError::OutOfRange(response.error));
        }
        Ok(response.error)
    }
}

impl ErrorEvaluator for ExternalEvaluator {
    fn id(&self) -> &str {
        "external"
    }

    fn evaluate(
        &self,
        genome: &NetworkGenome,
        arch: &NetworkArchitecture,
    ) -> Result<f64, EvalError> {
        let id = self.next_id.fetch_add(1, Ordering::Relaxed);
        let text = format_genome(genome);
        let payload = serde_json::to_string(&Request {
            id,
            genome: &text,
            architecture: arch.to_json(),
        })
        .map_err(|e| EvalError::Malformed(e.to_string()))?;

        let pooled = self.idle.lock().expect("worker pool poisoned").pop();
        let mut worker = match pooled {
            Some(w) => w,
            None => self.spawn()?,
        };
        match self.exchange(&mut worker, id, &payload) {
            Ok(error) => {
                self.idle.lock().expect("worker pool poisoned").push(worker);
                Ok(error)
            }
            Err(e) => {
                // A child in an unknown protocol state is never reused.
                worker.kill();
                Err(e)
            }
        }
    }
}

impl Drop for ExternalEvaluator {
    fn drop(&mut self) {
        if let Ok(mut idle) = self.idle.lock() {
            for w in idle.drain(..) {
                drop(w.stdin);
                let mut child = w.child;
                if child.try_wait().ok().flatten().is_none() {
                    let _ = child.kill();
                }
                let _ = child.wait();
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub objectives: ObjectiveVector,
    pub evaluator: String,
    /// Milliseconds since the Unix epoch.
    pub evaluated_at: u64,
}

type Slot = Arc<Mutex<Option<CacheEntry>>>;

/// Objectives keyed by canonical network key. Concurrent misses on one key
/// block on that key's slot, so each key is evaluated at most once.
#[derive(Default)]
pub struct ObjectiveCache {
    slots: Mutex<HashMap<NetworkKey, Slot>>,
    evaluations: AtomicUsize,
}

impl ObjectiveCache {
    pub fn new() -> Self {
        Self::default()
    }

    fn slot(&self, key: &NetworkKey) -> Slot {
        let mut slots = self.slots.lock().expect("cache poisoned");
        slots.entry(key.clone()).or_default().clone()
    }

    pub fn get(&self, key: &NetworkKey) -> Option<CacheEntry> {
        let slot = self
            .slots
            .lock()
            .expect("cache poisoned")
            .get(key)
            .cloned()?;
        let entry = slot.lock().expect("cache slot poisoned").clone();
        entry
    }

    /// Seed the cache with a known result (used when resuming a run).
    pub fn insert(&self, key: NetworkKey, entry: CacheEntry) {
        let slot = self.slot(&key);
        let mut guard = slot.lock().expect("cache slot poisoned");
        if guard.is_none() {
            *guard = Some(entry);
        }
    }

    /// Number of filled entries.
    pub fn len(&self) -> usize {
        let slots: Vec<Slot> = self
            .slots
            .lock()
            .expect("cache poisoned")
            .values()
            .cloned()
            .collect();
        slots
            .iter()
            .filter(|s| s.lock().map(|g| g.is_some()).unwrap_or(false))
            .count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Evaluator calls made through this cache.
    pub fn evaluations(&self) -> usize {
        self.evaluations.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub key: NetworkKey,
    pub objectives: ObjectiveVector,
    /// False when the objectives came from the cache.
    pub fresh: bool,
}

/// Objectives for `g`, computed at most once per canonical key.
pub fn evaluate_with_cache(
    g: &NetworkGenome,
    cfg: &EncodingConfig,
    evaluator: &dyn ErrorEvaluator,
    cache: &ObjectiveCache,
) -> Result<Evaluated, EvalError> {
    let key = canonical_network(g)?;
    let slot = cache.slot(&key);
    let mut guard = slot.lock().expect("cache slot poisoned");
    if let Some(entry) = guard.as_ref() {
        return Ok(Evaluated {
            objectives: entry.objectives,
            key,
            fresh: false,
        });
    }
    let arch = decode_network(g, cfg);
    cache.evaluations.fetch_add(1, Ordering::Relaxed);
    let error = evaluator.evaluate(g, &arch)?;
    if !error.is_finite() || !(0.0..=1.0).contains(&error) {
        return Err(EvalError::OutOfRange(error));
    }
    let objectives = ObjectiveVector::new(error, estimate_complexity(&arch).flops as f64);
    *guard = Some(CacheEntry {
        objectives,
        evaluator: evaluator.id().to_string(),
        evaluated_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0),
    });
    Ok(Evaluated {
        key,
        objectives,
        fresh: true,
    })
}
