//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Built without the libtest harness so the report always prints:
//! `cargo test -p archsearch --test acceptance`.

use std::collections::{BTreeSet, HashMap};
use std::time::{Duration, Instant};

use archsearch::boa::{fit_bn_from, sample_bn};
use archsearch::dedup::{canonical_phase, redundancy_census};
use archsearch::encoding::{
    decode_phase, phase_bit_len, random_genome, NetworkGenome, PhaseGenome,
};
use archsearch::engine::{
    compare_exploitation_samplers, run_in_dir, run_random_search, run_search, SearchResult,
    SearchRunner,
};
use archsearch::evaluators::{ExternalEvaluator, ObjectiveCache, SurrogateEvaluator};
use archsearch::metrics::{hypervolume_2d, normalized_hv, Bounds};
use archsearch::moea::{fast_nondominated_sort, nondominated_indices};
use archsearch::operators::{crossover, mutate, mutation_flip_probability, CrossoverScope};
use archsearch::{
    canonical_network, ArchiveRecord, EncodingConfig, ErrorEvaluator, ObjectiveVector,
    SearchConfig, Stage,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, o: Outcome) -> bool {
    println!(
        "criterion {n:>2} [{}] {name}: {}",
        if o.pass { "PASS" } else { "FAIL" },
        o.detail
    );
    o.pass
}

// ---- 1 ----

/// Repeatedly strip the set of points no remaining point dominates.
fn peel(points: &[[f64; 2]]) -> Vec<BTreeSet<usize>> {
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: BTreeSet<usize> = left
            .iter()
            .copied()
            .filter(|&i| {
                !left.iter().any(|&j| {
                    let (a, b) = (points[j], points[i]);
                    a[0] <= b[0] && a[1] <= b[1] && (a[0] < b[0] || a[1] < b[1])
                })
            })
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = Duration::ZERO;
    for inst in 0..100 {
        // coarse grid so ties and duplicates occur
        let pts: Vec<[f64; 2]> = (0..500)
            .map(|_| [rng.gen_range(0..60) as f64, rng.gen_range(0..60) as f64])
            .collect();
        let t = Instant::now();
        let fronts = fast_nondominated_sort(&pts);
        worst = worst.max(t.elapsed());
        let got: Vec<BTreeSet<usize>> = fronts
            .into_iter()
            .map(|f| f.into_iter().collect())
            .collect();
        if got != peel(&pts) {
            return Outcome {
                pass: false,
                detail: format!("instance {inst} differs from peeling oracle"),
            };
        }
    }
    Outcome {
        pass: worst < Duration::from_secs(1),
        detail: format!("100/100 instances agree, slowest sort {worst:?}"),
    }
}

// ---- 2 ----

fn criterion_2() -> Outcome {
    let cfg = EncodingConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut violations = 0;
    for _ in 0..10_000 {
        let a = random_genome(&mut rng, &cfg);
        let b = random_genome(&mut rng, &cfg);
        let c = crossover(&a, &b, CrossoverScope::Genome, &mut rng).unwrap();
        let (x, y, z) = (a.flat_bits(), b.flat_bits(), c.flat_bits());
        let common_ok = (0..x.len()).all(|i| x[i] != y[i] || z[i] == x[i]);
        let (lo, hi) = (a.ones().min(b.ones()), a.ones().max(b.ones()));
        if !common_ok || !(lo..=hi).contains(&c.ones()) || z.len() != x.len() {
            violations += 1;
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!("{violations} violations over 10000 pairs"),
    }
}

// ---- 3 ----

fn criterion_3() -> Outcome {
    let cfg = EncodingConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let p_m = 0.02;
    let calls = 20_000;
    let (mut flips, mut too_far) = (0usize, 0usize);
    for _ in 0..calls {
        let g = random_genome(&mut rng, &cfg);
        let m = mutate(&g, p_m, &mut rng);
        match g.hamming(&m) {
            0 => {}
            1 => flips += 1,
            _ => too_far += 1,
        }
    }
    let rate = flips as f64 / calls as f64;
    let expected = mutation_flip_probability(p_m, cfg.genome_bits());
    Outcome {
        pass: too_far == 0 && (rate - expected).abs() <= 0.02,
        detail: format!("hamming>1: {too_far}, flip rate {rate:.4} vs {expected:.4}"),
    }
}

// ---- 4 ----

/// Directed-graph isomorphism by trying every relabelling of the nodes.
fn isomorphic(a: &PhaseGenome, b: &PhaseGenome) -> bool {
    let (ga, gb) = (decode_phase(a), decode_phase(b));
    if ga.skip != gb.skip
        || ga.active_nodes.len() != gb.active_nodes.len()
        || ga.edges.len() != gb.edges.len()
    {
        return false;
    }
    let n = a.nodes();
    let target: BTreeSet<(usize, usize)> = gb.edges.iter().copied().collect();
    let mut perm: Vec<usize> = (1..=n).collect();
    permutations(&mut perm, 0, &mut |p| {
        let map = |v: usize| p[v - 1];
        ga.active_nodes
            .iter()
            .all(|&v| gb.active_nodes.contains(&map(v)))
            && ga
                .edges
                .iter()
                .all(|&(s, t)| target.contains(&(map(s), map(t))))
    })
}

fn permutations(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize]) -> bool) -> bool {
    if k == v.len() {
        return f(v);
    }
    for i in k..v.len() {
        v.swap(k, i);
        if permutations(v, k + 1, f) {
            v.swap(k, i);
            return true;
        }
        v.swap(k, i);
    }
    false
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let n = 4;
    let total = 1u64 << phase_bit_len(n);
    let phases: Vec<PhaseGenome> = (0..total).map(|v| PhaseGenome::from_index(n, v)).collect();
    let keys: Vec<_> = phases.iter().map(|p| canonical_phase(p).unwrap()).collect();
    let mut mismatches = 0;
    let mut pairs = 0;
    for i in 0..phases.len() {
        for j in i + 1..phases.len() {
            pairs += 1;
            if (keys[i] == keys[j]) != isomorphic(&phases[i], &phases[j]) {
                mismatches += 1;
            }
        }
    }
    let rows: Vec<_> = (2..=5).map(|k| redundancy_census(k).unwrap()).collect();
    let ratios: Vec<f64> = rows.iter().map(|r| r.ratio()).collect();
    let monotone = ratios.windows(2).all(|w| w[1] <= w[0]);
    let elapsed = start.elapsed();
    Outcome {
        pass: total == 128
            && pairs == 8128
            && mismatches == 0
            && monotone
            && elapsed < Duration::from_secs(300),
        detail: format!(
            "{mismatches} mismatches over {pairs} pairs; unique/total {} in {elapsed:?}",
            rows.iter()
                .map(|r| format!("n={}:{}/{}", r.nodes, r.unique, r.total))
                .collect::<Vec<_>>()
                .join(" ")
        ),
    }
}

// ---- 5 ----

fn criterion_5() -> Outcome {
    let ov = ObjectiveVector::new;
    let exact = hypervolume_2d(&[ov(1.0, 3.0), ov(2.0, 2.0), ov(3.0, 1.0)], ov(4.0, 4.0));
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let samples = 1_000_000;
    let mut worst_z: f64 = 0.0;
    for _ in 0..20 {
        let k = rng.gen_range(1..40);
        let pts: Vec<ObjectiveVector> = (0..k).map(|_| ov(rng.gen(), rng.gen())).collect();
        let reference = ov(1.0, 1.0);
        let hv = hypervolume_2d(&pts, reference);
        let front: Vec<ObjectiveVector> = nondominated_indices(&pts)
            .into_iter()
            .map(|i| pts[i])
            .collect();
        let mut hits = 0u64;
        for _ in 0..samples {
            let (x, y): (f64, f64) = (rng.gen(), rng.gen());
            if front.iter().any(|p| p.error <= x && p.complexity <= y) {
                hits += 1;
            }
        }
        let p = hits as f64 / samples as f64;
        let se = (p * (1.0 - p) / samples as f64).sqrt().max(1e-12);
        worst_z = worst_z.max((hv - p).abs() / se);
    }
    Outcome {
        pass: (exact - 6.0).abs() < 1e-12 && worst_z <= 3.0,
        detail: format!("exact {exact}, worst Monte Carlo deviation {worst_z:.2} standard errors"),
    }
}

// ---- 6 ----

fn criterion_6() -> Outcome {
    // Archive built from a few options per phase with correlated choices.
    let cfg = EncodingConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let options: Vec<Vec<PhaseGenome>> = (0..cfg.phases)
        .map(|_| {
            let mut seen = BTreeSet::new();
            let mut out = Vec::new();
            while out.len() < 4 {
                let p = random_genome(&mut rng, &cfg).phases()[0].clone();
                if seen.insert(canonical_phase(&p).unwrap()) {
                    out.push(p);
                }
            }
            out
        })
        .collect();
    let mut records = Vec::new();
    for i in 0..300 {
        let a = rng.gen_range(0..4);
        let b = if rng.gen_bool(0.7) {
            a
        } else {
            rng.gen_range(0..4)
        };
        let c = if rng.gen_bool(0.6) {
            b
        } else {
            rng.gen_range(0..4)
        };
        let g = NetworkGenome::new(vec![
            options[0][a].clone(),
            options[1][b].clone(),
            options[2][c].clone(),
        ])
        .unwrap();
        records.push(ArchiveRecord {
            key: canonical_network(&g).unwrap(),
            genome: g,
            objectives: ObjectiveVector::new(0.5, i as f64),
            generation: 0,
            stage: Stage::Initialization,
        });
    }
    let bn = fit_bn_from(records.iter(), 1.0).unwrap();
    let n = 10_000;
    let samples = sample_bn(&bn, &mut rng, n);
    let index: Vec<HashMap<_, usize>> = bn
        .support
        .iter()
        .map(|s| {
            s.keys
                .iter()
                .cloned()
                .enumerate()
                .map(|(i, k)| (k, i))
                .collect()
        })
        .collect();
    let states: Vec<Vec<usize>> = samples
        .iter()
        .map(|g| {
            g.phases()
                .iter()
                .enumerate()
                .map(|(i, p)| index[i][&canonical_phase(p).unwrap()])
                .collect()
        })
        .collect();
    // model-implied distribution of each position and each adjacent pair
    let mut worst: f64 = 0.0;
    let mut marginal = bn.marginals[0].clone();
    let empirical = |pos: usize, size: usize| {
        let mut f = vec![0.0; size];
        for s in &states {
            f[s[pos]] += 1.0 / n as f64;
        }
        f
    };
    let tv = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
    worst = worst.max(tv(&marginal, &empirical(0, marginal.len())));
    for i in 0..bn.phases() - 1 {
        let next_size = bn.support[i + 1].keys.len();
        let row = |a: usize| -> Vec<f64> {
            bn.conditionals[i]
                .rows
                .get(&a)
                .cloned()
                .unwrap_or_else(|| bn.marginals[i + 1].clone())
        };
        let mut joint_model = vec![0.0; marginal.len() * next_size];
        for a in 0..marginal.len() {
            for (b, p) in row(a).iter().enumerate() {
                joint_model[a * next_size + b] = marginal[a] * p;
            }
        }
        let mut joint_emp = vec![0.0; joint_model.len()];
        for s in &states {
            joint_emp[s[i] * next_size + s[i + 1]] += 1.0 / n as f64;
        }
        worst = worst.max(tv(&joint_model, &joint_emp));
        marginal = (0..next_size)
            .map(|b| {
                (0..marginal.len())
                    .map(|a| joint_model[a * next_size + b])
                    .sum()
            })
            .collect();
        worst = worst.max(tv(&marginal, &empirical(i + 1, next_size)));
    }
    Outcome {
        pass: worst < 0.05,
        detail: format!("largest total-variation distance {worst:.4}"),
    }
}

// ---- 7 ----

fn criterion_7() -> Outcome {
    let cfg = SearchConfig::default();
    let t = Instant::now();
    let r = run_search(&cfg).unwrap();
    let elapsed = t.elapsed();
    let offspring = r.archive.events.offspring();
    let monotone = r
        .trace
        .windows(2)
        .all(|w| w[1].normalized_hv >= w[0].normalized_hv);
    let last = |s: Stage| {
        r.trace
            .iter()
            .rev()
            .find(|t| t.stage == s)
            .map(|t| t.normalized_hv)
    };
    let (explore, exploit) = (last(Stage::Exploration), last(Stage::Exploitation));
    let stages_ok = matches!((explore, exploit), (Some(a), Some(b)) if b >= a);
    Outcome {
        pass: elapsed < Duration::from_secs(60) && offspring == 1200 && r.archive.len() <= 1240 && monotone && stages_ok,
        detail: format!(
            "{elapsed:?}, {offspring} offspring, {} records, HV exploration {:.4} -> exploitation {:.4}, monotone {monotone}",
            r.archive.len(),
            explore.unwrap_or(f64::NAN),
            exploit.unwrap_or(f64::NAN)
        ),
    }
}

// ---- 8 ----

/// Final-front normalized HV of two runs under the bounds of both archives.
fn paired_hv(a: &SearchResult, b: &SearchResult) -> (f64, f64) {
    let all: Vec<ObjectiveVector> = a
        .archive
        .objectives()
        .into_iter()
        .chain(b.archive.objectives())
        .collect();
    let bounds = Bounds::from_points(&all).unwrap();
    (
        normalized_hv(&a.front_objectives(), &bounds),
        normalized_hv(&b.front_objectives(), &bounds),
    )
}

fn criterion_8() -> Outcome {
    let seeds: Vec<u64> = (1..=10).collect();
    let (mut a, mut b, mut c) = (0, 0, 0);
    for &seed in &seeds {
        let cfg = SearchConfig {
            seed,
            ..SearchConfig::default()
        };
        let full = run_search(&cfg).unwrap();
        let random = run_random_search(&cfg).unwrap();
        let (h_full, h_rand) = paired_hv(&full, &random);
        a += (h_full > h_rand) as usize;
        let no_x = run_search(&SearchConfig {
            disable_crossover: true,
            ..cfg.clone()
        })
        .unwrap();
        let (h_x, h_nox) = paired_hv(&full, &no_x);
        b += (h_x > h_nox) as usize;
        let cmp = compare_exploitation_samplers(&cfg, 120).unwrap();
        c += (cmp.bn_hv >= cmp.uniform_hv) as usize;
    }
    Outcome {
        pass: a >= 8 && b >= 7 && c >= 8,
        detail: format!("(a) vs random {a}/10, (b) crossover {b}/10, (c) BN sampling {c}/10"),
    }
}

// ---- 9 ----

fn criterion_9() -> Outcome {
    let cfg = SearchConfig {
        seed: 99,
        ..SearchConfig::default()
    };
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        run_in_dir(
            &cfg,
            std::sync::Arc::new(SurrogateEvaluator::default()),
            d.path(),
            false,
        )
        .unwrap();
    }
    let read = |d: &tempfile::TempDir, f: &str| std::fs::read(d.path().join(f)).unwrap();
    let identical = ["archive.csv", "trace.csv", "front.csv"]
        .iter()
        .all(|f| read(&dirs[0], f) == read(&dirs[1], f));

    let whole = run_search(&cfg).unwrap();
    let mut runner = SearchRunner::new(cfg.clone()).unwrap();
    for _ in 0..11 {
        runner.step().unwrap();
    }
    let path = dirs[0].path().join("interrupted.json");
    runner.checkpoint().save(&path).unwrap();
    drop(runner);
    let resumed = SearchRunner::resume(
        archsearch::Checkpoint::load(&path).unwrap(),
        &cfg,
        std::sync::Arc::new(SurrogateEvaluator::default()),
    )
    .unwrap()
    .run()
    .unwrap();
    let same = resumed.archive.to_csv() == whole.archive.to_csv()
        && resumed.front_csv() == whole.front_csv()
        && resumed.trace == whole.trace;
    Outcome {
        pass: identical && same,
        detail: format!(
            "repeat runs identical: {identical}, resume after generation 10 identical: {same}"
        ),
    }
}

// ---- 10 ----

const RESPONDER: &str = r#"while IFS= read -r line; do
  id=$(printf '%s' "$line" | sed 's/.*"id":\([0-9]*\).*/\1/')
  printf '{"id":%s,"error":0.25}\n' "$id"
done"#;

fn criterion_10() -> Outcome {
    let cfg = EncodingConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let g = random_genome(&mut rng, &cfg);
    let arch = archsearch::decode_network(&g, &cfg);
    let t = Duration::from_secs(20);

    let ok = ExternalEvaluator::new(RESPONDER, t, 1);
    let round_trip = (0..3).all(|_| ok.evaluate(&g, &arch) == Ok(0.25)) && ok.spawned() == 1;

    let out_of_range = ExternalEvaluator::new(r#"read -r line; echo '{"id":1,"error":1.5}'"#, t, 1);
    let range_rejected = matches!(
        out_of_range.evaluate(&g, &arch),
        Err(archsearch::EvalError::OutOfRange(_))
    );

    let slow = ExternalEvaluator::new("sleep 30", Duration::from_millis(300), 1);
    let start = Instant::now();
    let timed_out = matches!(
        slow.evaluate(&g, &arch),
        Err(archsearch::EvalError::Timeout(_))
    ) && start.elapsed() < Duration::from_secs(10);

    // A run whose evaluator fails for some genomes must keep them out of the archive.
    let flaky = r#"while IFS= read -r line; do
  id=$(printf '%s' "$line" | sed 's/.*"id":\([0-9]*\).*/\1/')
  case "$line" in
    *'"genome":"1'*) printf '{"id":%s,"error":7}\n' "$id" ;;
    *) printf '{"id":%s,"error":0.5}\n' "$id" ;;
  esac
done"#;
    let search = SearchConfig {
        population_size: 8,
        exploration_generations: 2,
        exploitation_generations: 1,
        failure_budget: 1000,
        ..SearchConfig::default()
    };
    let eval = std::sync::Arc::new(ExternalEvaluator::new(flaky, t, 0));
    let result = archsearch::engine::run_search_with(&search, eval).unwrap();
    let excluded = result
        .archive
        .records()
        .iter()
        .all(|r| !archsearch::format_genome(&r.genome).starts_with('1'));

    let cache = ObjectiveCache::new();
    let failing = ExternalEvaluator::new("exit 3", t, 0);
    let nothing_cached = archsearch::evaluators::evaluate_with_cache(&g, &cfg, &failing, &cache)
        .is_err()
        && cache.is_empty();

    Outcome {
        pass: round_trip && range_rejected && timed_out && excluded && nothing_cached,
        detail: format!(
            "round trip {round_trip}, range {range_rejected}, timeout {timed_out}, failures kept out of archive {excluded} and cache {nothing_cached}"
        ),
    }
}

fn main() {
    let checks: Vec<(usize, &str, fn() -> Outcome)> = vec![
        (1, "non-dominated sorting", criterion_1),
        (2, "crossover invariants", criterion_2),
        (3, "mutation invariant", criterion_3),
        (4, "duplicate detection", criterion_4),
        (5, "hypervolume", criterion_5),
        (6, "network sampling fidelity", criterion_6),
        (7, "end-to-end dynamics", criterion_7),
        (8, "ablations", criterion_8),
        (9, "determinism", criterion_9),
        (10, "external evaluator protocol", criterion_10),
    ];
    let mut failed = Vec::new();
    for (n, name, f) in checks {
        if !report(n, name, f()) {
            failed.push(n);
        }
    }
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
