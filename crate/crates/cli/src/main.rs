use std::path::{Path, PathBuf};
use std::process::ExitCode;

use archsearch::complexity::estimate_complexity;
use archsearch::config::{parse_pairs, Ablation, ConfigError, SearchConfig};
use archsearch::dedup::redundancy_census;
use archsearch::engine::{build_evaluator, run_in_dir, EngineError};
use archsearch::evaluators::{ErrorEvaluator, SurrogateEvaluator};
use archsearch::metrics::{hypervolume_2d, Bounds};
use archsearch::{
    canonical_network, decode_network, format_genome, parse_genome, parse_genome_inferred,
    EncodingConfig, NetworkGenome, ObjectiveVector,
};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(
    name = "archsearch",
    version,
    about = "Evolutionary bi-objective architecture search"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvaluatorKind {
    Surrogate,
    External,
}

#[derive(Clone, Copy, ValueEnum)]
enum AblationArg {
    None,
    RandomSearch,
    NoCrossover,
    UniformExploitation,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::None => Ablation::None,
            AblationArg::RandomSearch => Ablation::RandomSearch,
            AblationArg::NoCrossover => Ablation::NoCrossover,
            AblationArg::UniformExploitation => Ablation::UniformExploitation,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run a search and write its run directory.
    Search {
        /// Flat key = value config file; defaults apply when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum)]
        evaluator: Option<EvaluatorKind>,
        /// Command line for the external evaluator, run through `sh -c`.
        #[arg(long)]
        external_cmd: Option<String>,
        #[arg(long, value_enum, default_value = "none")]
        ablation: AblationArg,
        /// Extra `key=value` overrides, applied last.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value = "run")]
        out: PathBuf,
        /// Continue from the checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Decode a genome and report its structure, complexity and surrogate error.
    Evaluate {
        genome: String,
        /// Config supplying the encoding; otherwise inferred from the genome.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Count distinct phase architectures among all phase strings of n nodes.
    Census { nodes: usize },
    /// Hypervolume of the points in a CSV file (last two columns per row).
    Hv {
        file: PathBuf,
        /// Reference point `error,flops`; defaults to 1% beyond the points' maxima.
        #[arg(long = "ref", value_name = "E,F")]
        reference: Option<String>,
    },
    /// Print a Graphviz description of a genome's architecture.
    ExportDot {
        genome: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "network")]
        name: String,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Config(c) => c.into(),
            other => Failure::Runtime(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn run(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Search {
            config,
            seed,
            workers,
            evaluator,
            external_cmd,
            ablation,
            overrides,
            out,
            resume,
        } => {
            let mut pairs = match &config {
                Some(p) => {
                    let text = std::fs::read_to_string(p).map_err(|e| ConfigError::Io {
                        path: p.display().to_string(),
                        reason: e.to_string(),
                    })?;
                    parse_pairs(&text)?
                }
                None => Vec::new(),
            };
            let mut push = |k: &str, v: String| pairs.push((k.to_string(), v));
            if let Some(s) = seed {
                push("seed", s.to_string());
            }
            if let Some(w) = workers {
                push("workers", w.to_string());
            }
            if let Some(e) = evaluator {
                let kind = match e {
                    EvaluatorKind::Surrogate => "surrogate",
                    EvaluatorKind::External => "external",
                };
                push("evaluator", kind.to_string());
            }
            if let Some(c) = external_cmd {
                push("external_cmd", c);
            }
            for o in &overrides {
                let (k, v) = o
                    .split_once('=')
                    .ok_or_else(|| Failure::Usage(format!("override {o:?} is not key=value")))?;
                pairs.push((k.trim().to_string(), v.trim().to_string()));
            }
            let mut cfg = SearchConfig::from_pairs(&pairs)?;
            cfg.apply_ablation(ablation.into());
            search(&cfg, &out, resume)
        }
        Command::Evaluate { genome, config } => {
            let (g, enc) = genome_and_encoding(&genome, config.as_deref())?;
            evaluate(&g, &enc)
        }
        Command::Census { nodes } => {
            let row = redundancy_census(nodes).map_err(|e| Failure::Usage(e.to_string()))?;
            println!("nodes,total,unique,ratio");
            println!(
                "{},{},{},{:.6}",
                row.nodes,
                row.total,
                row.unique,
                row.ratio()
            );
            Ok(())
        }
        Command::Hv { file, reference } => hv(&file, reference.as_deref()),
        Command::ExportDot {
            genome,
            config,
            name,
            output,
        } => {
            let (g, enc) = genome_and_encoding(&genome, config.as_deref())?;
            let dot = decode_network(&g, &enc).to_dot(&name);
            match output {
                Some(p) => std::fs::write(&p, dot)
                    .map_err(|e| Failure::Runtime(format!("{}: {e}", p.display()))),
                None => {
                    print!("{dot}");
                    Ok(())
                }
            }
        }
    }
}

fn search(cfg: &SearchConfig, out: &Path, resume: bool) -> Result<(), Failure> {
    let evaluator = build_evaluator(cfg);
    let result = run_in_dir(cfg, evaluator, out, resume)?;
    println!(
        "seed {}: {} architectures evaluated, {} on the front, normalized HV {:.4}",
        result.seed,
        result.archive.len(),
        result.front.len(),
        result.final_normalized_hv()
    );
    println!("{:<8} {:>14}  genome", "error", "flops");
    let mut front = result.front.clone();
    front.sort_by(|a, b| a.objectives.complexity.total_cmp(&b.objectives.complexity));
    for r in &front {
        println!(
            "{:<8.4} {:>14}  {}",
            r.objectives.error,
            r.objectives.complexity,
            format_genome(&r.genome)
        );
    }
    println!("results written to {}", out.display());
    Ok(())
}

fn genome_and_encoding(
    text: &str,
    config: Option<&Path>,
) -> Result<(NetworkGenome, EncodingConfig), Failure> {
    match config {
        Some(p) => {
            let cfg = SearchConfig::from_file(p)?;
            let g = parse_genome(text, &cfg.encoding).map_err(|e| Failure::Usage(e.to_string()))?;
            Ok((g, cfg.encoding))
        }
        None => {
            let g = parse_genome_inferred(text).map_err(|e| Failure::Usage(e.to_string()))?;
            let d = EncodingConfig::default();
            let enc = EncodingConfig::halving(
                g.phases().len(),
                g.nodes(),
                d.input_resolution,
                d.input_channels,
                d.channel_width,
            );
            enc.validate().map_err(|e| Failure::Usage(e.to_string()))?;
            Ok((g, enc))
        }
    }
}

fn evaluate(g: &NetworkGenome, enc: &EncodingConfig) -> Result<(), Failure> {
    let arch = decode_network(g, enc);
    let key = canonical_network(g).map_err(|e| Failure::Usage(e.to_string()))?;
    println!("genome      {}", format_genome(g));
    println!("key         {}", key.digest());
    for (i, p) in arch.phases.iter().enumerate() {
        let note = match (p.is_pass_through(), p.skip) {
            (true, true) => " (pass-through, identity skip)",
            (true, false) => " (pass-through)",
            (false, true) => " (with skip)",
            (false, false) => "",
        };
        println!(
            "phase {}     {} nodes, {} edges, {} connections at {}x{}{}",
            i + 1,
            p.active_nodes.len(),
            p.edges.len(),
            p.connection_count(),
            arch.resolutions[i],
            arch.resolutions[i],
            note
        );
    }
    let c = estimate_complexity(&arch);
    println!(
        "active      {} nodes, {} connections",
        c.active_nodes, c.active_connections
    );
    println!("params      {}", c.params);
    println!("flops       {}", c.flops);
    let error = SurrogateEvaluator::default()
        .evaluate(g, &arch)
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("surrogate   {error:.6}");
    Ok(())
}

fn parse_point(text: &str) -> Option<ObjectiveVector> {
    let (a, b) = text.split_once(',')?;
    Some(ObjectiveVector::new(
        a.trim().parse().ok()?,
        b.trim().parse().ok()?,
    ))
}

fn hv(file: &Path, reference: Option<&str>) -> Result<(), Failure> {
    let text = std::fs::read_to_string(file)
        .map_err(|e| Failure::Runtime(format!("{}: {e}", file.display())))?;
    let points: Vec<ObjectiveVector> = text
        .lines()
        .filter_map(|line| {
            let fields: Vec<&str> = line.split(',').collect();
            let n = fields.len();
            if n < 2 {
                return None;
            }
            parse_point(&format!("{},{}", fields[n - 2], fields[n - 1]))
        })
        .collect();
    if points.is_empty() {
        return Err(Failure::Runtime(format!(
            "{}: no numeric rows",
            file.display()
        )));
    }
    let r = match reference {
        Some(s) => {
            parse_point(s).ok_or_else(|| Failure::Usage(format!("bad reference point {s:?}")))?
        }
        None => Bounds::from_points(&points)
            .expect("non-empty")
            .raw_reference(),
    };
    println!("{}", hypervolume_2d(&points, r));
    Ok(())
}
