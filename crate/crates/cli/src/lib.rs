//! Command implementations behind the `iic` binary.

use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nalgebra::DMatrix;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use iic::closure::{iic_close, ClosureRequest};
use iic::estimate::{iic_estimate, Dataset, EstimateConfig};
use iic::experiments::{instrument_triples, run_experiment, ExperimentConfig, EXPERIMENTS};
use iic::fixtures::{fixture, fixture_seeds, FIXTURE_NAMES};
use iic::graph::{MixedGraph, NodeId};
use iic::oracle::{oracle_agrees_with_closure, OracleConfig};
use iic::seeds::{resolve_seeds, validate_iv_triple, IvTriple, SeedSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MAX_DISCOVERY_NODES: usize = 12;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad invocation or unreadable input; exit code 2.
    #[error("{0}")]
    Usage(String),
    /// The input was read but the computation rejected it; exit code 1.
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

fn domain(e: impl std::fmt::Display) -> CliError {
    CliError::Domain(e.to_string())
}

#[derive(Debug, Error, PartialEq)]
#[error("graph has {0} nodes; discovery is limited to {MAX_DISCOVERY_NODES}")]
pub struct GraphTooLarge(pub usize);

/// Every triple whose `Z -> T` part is a valid instrument.
pub fn discover_iv_triples(g: &MixedGraph) -> Result<Vec<IvTriple>, GraphTooLarge> {
    if g.n_nodes() > MAX_DISCOVERY_NODES {
        return Err(GraphTooLarge(g.n_nodes()));
    }
    Ok(instrument_triples(g))
}

#[derive(Parser, Debug)]
#[command(name = "iic", version, about = "Iterative identification of linear SEM coefficients")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Root RNG seed.
    #[arg(long, global = true, env = "IIC_RNG_SEED", default_value_t = 0)]
    pub rng_seed: u64,
    /// Output file, `-` for stdout.
    #[arg(long, short, global = true, default_value = "-")]
    pub output: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GraphInput {
    /// Graph JSON, `-` for stdin.
    #[arg(value_name = "GRAPH", conflicts_with = "graph")]
    pub input: Option<PathBuf>,
    #[arg(long, value_name = "GRAPH")]
    pub graph: Option<PathBuf>,
    /// Seed specification JSON.
    #[arg(long)]
    pub seeds: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Label every directed edge Identified / NonIdentifiable / Inconclusive.
    Classify {
        #[command(flatten)]
        input: GraphInput,
        /// Disable the single-unknown non-identifiability rule.
        #[arg(long)]
        no_single_unknown: bool,
    },
    /// Compare the closure with the numerical Jacobian oracle.
    Verify {
        #[command(flatten)]
        input: GraphInput,
        #[arg(long, default_value_t = 50)]
        trials: usize,
        #[arg(long, default_value_t = 1e-8)]
        tol: f64,
    },
    /// Run a named experiment and write its table.
    Bench {
        experiment: String,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        graphs: Option<usize>,
        #[arg(long)]
        p_dir: Option<f64>,
        #[arg(long)]
        p_bi: Option<f64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        rate: Option<f64>,
    },
    /// Estimate identified coefficients from a data CSV.
    Estimate {
        #[command(flatten)]
        input: GraphInput,
        /// CSV with one column per node label and an optional `regime` column.
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 200)]
        n_boot: usize,
        #[arg(long, default_value_t = 1e8)]
        kappa_max: f64,
    },
    /// Print a built-in graph, or its seed file with `--seeds`.
    Fixture {
        name: Option<String>,
        #[arg(long)]
        seeds: bool,
        #[arg(long)]
        list: bool,
    },
    /// List instrument triples of a small graph.
    DiscoverIv {
        #[command(flatten)]
        input: GraphInput,
    },
}

fn read_source(path: &Path) -> Result<String, CliError> {
    if path.as_os_str() == "-" {
        let mut s = String::new();
        io::stdin()
            .read_to_string(&mut s)
            .map_err(|e| CliError::Usage(format!("stdin: {e}")))?;
        Ok(s)
    } else {
        fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

fn load(input: &GraphInput) -> Result<(MixedGraph, SeedSpec), CliError> {
    let path = input
        .graph
        .clone()
        .or_else(|| input.input.clone())
        .unwrap_or_else(|| PathBuf::from("-"));
    let g = MixedGraph::from_json(&read_source(&path)?).map_err(domain)?;
    let spec = match &input.seeds {
        Some(p) => SeedSpec::from_json(&g, &read_source(p)?).map_err(domain)?,
        None => SeedSpec::default(),
    };
    Ok((g, spec))
}

fn config_hash(config: &impl Serialize) -> String {
    let json = serde_json::to_string(config).expect("config serialises");
    hex::encode(&Sha256::digest(json.as_bytes())[..8])
}

fn header(out: &mut dyn Write, rng_seed: u64, config: &impl Serialize) -> io::Result<()> {
    writeln!(out, "# iic_version={VERSION}")?;
    writeln!(out, "# rng_seed={rng_seed}")?;
    writeln!(out, "# config_hash={}", config_hash(config))
}

/// Reads a data CSV. Columns are matched to node labels; a `regime` column
/// names the intervened node of each row (empty for observational rows).
pub fn read_dataset(g: &MixedGraph, text: &str) -> Result<Dataset, CliError> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(domain)?.clone();
    let mut col_of = vec![None; g.n_nodes()];
    let mut regime_col = None;
    for (c, h) in headers.iter().enumerate() {
        if h == "regime" {
            regime_col = Some(c);
            continue;
        }
        let v = g.node_by_label(h).map_err(domain)?;
        col_of[v.index()] = Some(c);
    }
    if let Some(v) = col_of.iter().position(Option::is_none) {
        return Err(CliError::Domain(format!(
            "data has no column for node {}",
            g.label(NodeId(v))
        )));
    }
    let mut values = Vec::new();
    let mut regime = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(domain)?;
        for c in col_of.iter().flatten() {
            let x: f64 = rec[*c]
                .parse()
                .map_err(|_| CliError::Domain(format!("non-numeric value `{}`", &rec[*c])))?;
            values.push(x);
        }
        regime.push(match regime_col.map(|c| &rec[c]) {
            None | Some("") => None,
            Some(l) => Some(g.node_by_label(l).map_err(domain)?),
        });
    }
    let x = DMatrix::from_row_slice(regime.len(), g.n_nodes(), &values);
    Ok(Dataset { x, regime })
}

fn open_output(path: &Path) -> Result<Box<dyn Write>, CliError> {
    if path.as_os_str() == "-" {
        Ok(Box::new(io::stdout().lock()))
    } else {
        fs::File::create(path)
            .map(|f| Box::new(io::BufWriter::new(f)) as Box<dyn Write>)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(j) = cli.jobs {
        if j == 0 {
            return Err(CliError::Usage("--jobs must be at least 1".into()));
        }
        // a second call in the same process is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j).build_global();
    }
    let mut out = open_output(&cli.output)?;
    let io_err = |e: io::Error| CliError::Usage(format!("write failed: {e}"));
    match cli.command {
        Command::Classify {
            input,
            no_single_unknown,
        } => {
            let (g, spec) = load(&input)?;
            let seeds = resolve_seeds(&g, &spec).map_err(domain)?;
            for (t, why) in &seeds.rejected {
                eprintln!(
                    "rejected IV ({}, {}, {}): {why}",
                    g.label(t.z),
                    g.label(t.t),
                    g.label(t.y),
                    why = why.reason
                );
            }
            let r = iic_close(&ClosureRequest::new(g.clone(), seeds.clone()).single_unknown(!no_single_unknown));
            header(
                &mut out,
                cli.rng_seed,
                &(&g.to_document(), &spec.to_document(&g), no_single_unknown),
            )
            .map_err(io_err)?;
            writeln!(
                out,
                "# identified={}/{} iterations={}",
                r.n_identified(),
                r.status.len(),
                r.iterations
            )
            .map_err(io_err)?;
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["edge", "from", "to", "status", "rule", "iteration", "estimator"])
                .map_err(domain)?;
            for (e, s) in &r.status {
                let p = r.provenance.get(e);
                w.write_record([
                    g.edge_label(*e),
                    g.label(e.from),
                    g.label(e.to),
                    s.to_string(),
                    p.map(|p| p.rule.as_str().to_string()).unwrap_or_default(),
                    p.map(|p| p.iteration.to_string()).unwrap_or_default(),
                    p.and_then(|p| p.tag)
                        .map(|t| t.as_str().to_string())
                        .unwrap_or_default(),
                ])
                .map_err(domain)?;
            }
            w.flush().map_err(io_err)?;
            eprintln!("identified {}/{}", r.n_identified(), r.status.len());
        }
        Command::Verify { input, trials, tol } => {
            let (g, spec) = load(&input)?;
            let seeds = resolve_seeds(&g, &spec).map_err(domain)?;
            let cfg = OracleConfig {
                trials,
                tol,
                rng_seed: cli.rng_seed,
                ..OracleConfig::default()
            };
            let rep = oracle_agrees_with_closure(&g, &seeds, &cfg).map_err(domain)?;
            header(
                &mut out,
                cli.rng_seed,
                &(&g.to_document(), &spec.to_document(&g), trials, tol),
            )
            .map_err(io_err)?;
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["edge", "closure", "oracle_identifiable", "agree"])
                .map_err(domain)?;
            for c in &rep.rows {
                w.write_record([
                    g.edge_label(c.edge),
                    c.status.to_string(),
                    c.oracle.to_string(),
                    c.agree.to_string(),
                ])
                .map_err(domain)?;
            }
            w.flush().map_err(io_err)?;
            let bad = rep.n_disagreements();
            if bad > 0 {
                return Err(CliError::Domain(format!("{bad} edge(s) disagree with the oracle")));
            }
        }
        Command::Bench {
            experiment,
            n,
            k,
            graphs,
            p_dir,
            p_bi,
            trials,
            rate,
        } => {
            if !EXPERIMENTS.contains(&experiment.as_str()) {
                return Err(CliError::Usage(format!(
                    "unknown experiment `{experiment}`; expected one of {}",
                    EXPERIMENTS.join(", ")
                )));
            }
            let d = ExperimentConfig::default();
            let cfg = ExperimentConfig {
                n: n.unwrap_or(d.n),
                k: k.unwrap_or(d.k),
                graphs: graphs.unwrap_or(d.graphs),
                rng_seed: cli.rng_seed,
                p_dir: p_dir.unwrap_or(d.p_dir),
                p_bi: p_bi.unwrap_or(d.p_bi),
                trials: trials.unwrap_or(d.trials),
                rate,
            };
            let table = run_experiment(&experiment, &cfg).map_err(domain)?;
            header(&mut out, cli.rng_seed, &cfg).map_err(io_err)?;
            table.write_csv(&mut out).map_err(io_err)?;
        }
        Command::Estimate {
            input,
            data,
            n_boot,
            kappa_max,
        } => {
            let (g, spec) = load(&input)?;
            let ds = read_dataset(&g, &read_source(&data)?)?;
            let cfg = EstimateConfig {
                n_boot,
                kappa_max,
                rng_seed: cli.rng_seed,
                ..EstimateConfig::default()
            };
            let r = iic_estimate(&g, &ds, &spec, &cfg).map_err(domain)?;
            header(&mut out, cli.rng_seed, &(&g.to_document(), &spec.to_document(&g), &cfg)).map_err(io_err)?;
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["edge", "estimate", "se", "ci_low", "ci_high", "note"])
                .map_err(domain)?;
            for (e, v) in &r.estimates {
                let (lo, hi) = r.ci[e];
                w.write_record([
                    g.edge_label(*e),
                    v.to_string(),
                    r.se[e].to_string(),
                    lo.to_string(),
                    hi.to_string(),
                    String::new(),
                ])
                .map_err(domain)?;
            }
            for (e, why) in &r.unestimated {
                w.write_record([
                    g.edge_label(*e),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                    why.clone(),
                ])
                .map_err(domain)?;
            }
            w.flush().map_err(io_err)?;
        }
        Command::Fixture { name, seeds, list } => {
            if list {
                for n in FIXTURE_NAMES {
                    writeln!(out, "{n}").map_err(io_err)?;
                }
                return Ok(());
            }
            let name = name.ok_or_else(|| CliError::Usage("fixture name required (or --list)".into()))?;
            let g = fixture(&name).ok_or_else(|| {
                CliError::Usage(format!(
                    "unknown fixture `{name}`; expected one of {}",
                    FIXTURE_NAMES.join(", ")
                ))
            })?;
            let text = if seeds {
                let spec = fixture_seeds(&name).expect("fixture has seeds");
                serde_json::to_string_pretty(&spec.to_document(&g)).expect("seed document serialises")
            } else {
                g.to_json()
            };
            writeln!(out, "{text}").map_err(io_err)?;
        }
        Command::DiscoverIv { input } => {
            let (g, _) = load(&input)?;
            let triples = discover_iv_triples(&g).map_err(domain)?;
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["z", "t", "y", "t_to_y_ok"]).map_err(domain)?;
            for t in triples {
                w.write_record([
                    g.label(t.z),
                    g.label(t.t),
                    g.label(t.y),
                    validate_iv_triple(&g, t).t_to_y_ok.to_string(),
                ])
                .map_err(domain)?;
            }
            w.flush().map_err(io_err)?;
        }
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

/// Runs the binary given its arguments and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
