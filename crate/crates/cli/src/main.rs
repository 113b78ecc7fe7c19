use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use chainlab_core::center_shadowing::measure_lipschitz_L;
use chainlab_core::chain_engine::{write_class_csv, BoxGrid, ChainGraph};
use chainlab_core::lab::{
    convergence_study, emit_plot_data, run_batch, study_rows, write_study_csv, RunRecord, Scenario, ScenarioFile,
};
use chainlab_core::models::PresetLibrary;

#[derive(Parser)]
#[command(name = "chainlab", version, about = "Close pseudo-orbits of skew products on the 3-torus")]
struct Cli {
    /// TOML file with `[preset.<id>]` tables and `[[scenario]]` entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "chainlab-out")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Run scenarios through the whole pipeline.
    Run(ScenarioArgs),
    /// Convergence table and plot files for scenarios with at least 3 values of k.
    Study {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Also export the chain class cover at the scenario resolution.
        #[arg(long)]
        cover: bool,
    },
    /// Chain recurrent classes of a preset on a box grid.
    Classes {
        #[arg(long, default_value = "nonlinear")]
        preset: String,
        #[arg(long, default_value_t = 32)]
        resolution: u32,
        /// Graph epsilon; 1.1 box diameters when absent.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Measure the center shadowing ratio sup d(x_i, w_i)/ε over random chains.
    ShadowBench {
        #[arg(long, default_value = "nonlinear")]
        preset: String,
        #[arg(long, value_delimiter = ',', default_values_t = [0.1, 0.05, 0.025])]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        trials: usize,
        #[arg(long, default_value_t = 1.0)]
        jump_probability: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Run only this scenario of the config file.
    #[arg(long)]
    id: Option<String>,
    #[arg(long, default_value = "nonlinear")]
    preset: String,
    #[arg(long, value_delimiter = ',', num_args = 3, default_values_t = [0.1, 0.2, 0.3])]
    x: Vec<f64>,
    /// Target point; a seeded random walk from x when neither this nor --periodic is given.
    #[arg(long, value_delimiter = ',', num_args = 3, conflicts_with = "periodic")]
    y: Option<Vec<f64>>,
    #[arg(long)]
    periodic: bool,
    #[arg(long, value_delimiter = ',', default_values_t = [10, 20, 40, 80])]
    k: Vec<u32>,
    /// Fixed ε for every k; 1/(2k) when absent.
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long, default_value_t = 64)]
    resolution: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn library(config: Option<&Path>) -> Result<PresetLibrary> {
    let mut lib = PresetLibrary::builtin();
    if let Some(path) = config {
        lib.merge(PresetLibrary::load(path)?);
    }
    Ok(lib)
}

fn scenarios(config: Option<&Path>, args: &ScenarioArgs) -> Result<Vec<Scenario>> {
    if let Some(path) = config {
        let file = ScenarioFile::load(path)?;
        if !file.scenario.is_empty() {
            let picked: Vec<Scenario> = file
                .scenario
                .into_iter()
                .filter(|s| args.id.as_ref().is_none_or(|id| &s.id == id))
                .collect();
            if picked.is_empty() {
                bail!("no scenario `{}` in {}", args.id.as_deref().unwrap_or(""), path.display());
            }
            return Ok(picked);
        }
    }
    let x = [args.x[0], args.x[1], args.x[2]];
    let id = args.id.clone().unwrap_or_else(|| "cli".into());
    let mut s = match (&args.y, args.periodic) {
        (Some(y), _) => Scenario::point(&id, &args.preset, x, [y[0], y[1], y[2]], args.k.clone(), args.seed),
        (None, true) => Scenario::periodic(&id, &args.preset, x, args.k.clone(), args.seed),
        (None, false) => Scenario::walk(&id, &args.preset, x, args.k.clone(), args.seed),
    };
    s.epsilon = args.eps;
    s.resolution = args.resolution;
    Ok(vec![s])
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = fs::File::create(path).with_context(|| path.display().to_string())?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    Ok(())
}

fn summarize(record: &RunRecord) {
    let status = if record.passed() { "PASS" } else { "FAIL" };
    println!(
        "{status} {} preset={} results={} failures={}",
        record.scenario.id,
        record.scenario.preset,
        record.results.len(),
        record.failures.len()
    );
    for r in &record.results {
        println!(
            "  k={:<4} eps={:.3e} n={:<5} tau={:+.3e} d(x,p)={:.3e} d(y,f^n p)={:.3e} bound={:.3e}",
            r.k, r.epsilon, r.steps, r.tau, r.start_distance, r.end_distance, r.bound
        );
    }
    for f in &record.failures {
        let sides = match (f.lhs, f.rhs) {
            (Some(l), Some(r)) => format!(" ({l:.3e} vs {r:.3e})"),
            _ => String::new(),
        };
        let k = f.k.map(|k| format!(" k={k}")).unwrap_or_default();
        println!("  failure{k} [{}] {}: {}{sides}", f.stage, f.message, f.inequality);
    }
}

fn run(cli: &Cli, args: &ScenarioArgs) -> Result<bool> {
    let lib = library(cli.config.as_deref())?;
    let list = scenarios(cli.config.as_deref(), args)?;
    fs::create_dir_all(&cli.out)?;
    let mut all = true;
    for (s, rec) in list.iter().zip(run_batch(&lib, &list)) {
        let rec = rec.with_context(|| format!("scenario `{}`", s.id))?;
        summarize(&rec);
        all &= rec.passed();
        match cli.format {
            Format::Json => write_json(&cli.out.join(format!("{}.json", s.id)), &rec)?,
            Format::Csv => write_study_csv(&study_rows(&rec), fs::File::create(cli.out.join(format!("{}.csv", s.id)))?)?,
        }
    }
    Ok(all)
}

fn study(cli: &Cli, args: &ScenarioArgs, cover: bool) -> Result<bool> {
    let lib = library(cli.config.as_deref())?;
    let list = scenarios(cli.config.as_deref(), args)?;
    let mut all = true;
    for s in &list {
        let (rec, rows) = convergence_study(&lib, s).with_context(|| format!("scenario `{}`", s.id))?;
        summarize(&rec);
        all &= rec.passed();
        let dir = cli.out.join(&s.id);
        fs::create_dir_all(&dir)?;
        match cli.format {
            Format::Json => write_json(&dir.join("study.json"), &rows)?,
            Format::Csv => write_study_csv(&rows, fs::File::create(dir.join("study.csv"))?)?,
        }
        let classes = if cover {
            let system = &lib.get(&s.preset)?.system;
            let grid = BoxGrid::new(s.resolution)?;
            let eps = s.graph_epsilon.unwrap_or(1.1 * grid.diameter());
            let graph = ChainGraph::build(system, s.resolution, eps)?;
            Some((graph.chain_recurrent_classes(), *graph.grid()))
        } else {
            None
        };
        let files = emit_plot_data(&rec, &dir, classes.as_ref().map(|(c, g)| (g, c.as_slice())))?;
        println!("  wrote {} and {}", files.tau.display(), files.distances.display());
        if let Some(path) = files.classes {
            println!("  wrote {}", path.display());
        }
    }
    Ok(all)
}

fn classes(cli: &Cli, preset: &str, resolution: u32, eps: Option<f64>) -> Result<bool> {
    let lib = library(cli.config.as_deref())?;
    let system = &lib.get(preset)?.system;
    let grid = BoxGrid::new(resolution)?;
    let eps = eps.unwrap_or(1.1 * grid.diameter());
    let graph = ChainGraph::build(system, resolution, eps)?;
    let classes = graph.chain_recurrent_classes();
    println!("preset={preset} resolution={resolution} eps={eps:.4e} classes={}", classes.len());
    for c in &classes {
        println!("  class {} boxes={}", c.id, c.boxes.len());
    }
    fs::create_dir_all(&cli.out)?;
    match cli.format {
        Format::Json => write_json(&cli.out.join("classes.json"), &classes)?,
        Format::Csv => {
            write_class_csv(graph.grid(), &classes, fs::File::create(cli.out.join("classes.csv"))?)?;
        }
    }
    Ok(true)
}

fn shadow_bench(cli: &Cli, preset: &str, eps: &[f64], trials: usize, jump: f64, seed: u64) -> Result<bool> {
    let lib = library(cli.config.as_deref())?;
    let system = &lib.get(preset)?.system;
    let table = measure_lipschitz_L(system, trials, eps, jump, seed)?;
    let bound = system.eigen().shadowing_constant() + 1.0;
    let mut ok = true;
    for s in &table.summary {
        let pass = s.max_ratio <= bound;
        ok &= pass;
        println!(
            "{} eps={:.3e} trials={} max ratio={:.4} bound L_b+1={:.4}",
            if pass { "PASS" } else { "FAIL" },
            s.epsilon,
            s.trials,
            s.max_ratio,
            bound
        );
    }
    fs::create_dir_all(&cli.out)?;
    match cli.format {
        Format::Json => write_json(&cli.out.join("lipschitz.json"), &table)?,
        Format::Csv => table.write_csv(fs::File::create(cli.out.join("lipschitz.csv"))?)?,
    }
    Ok(ok)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Run(args) => run(&cli, args),
        Command::Study { scenario, cover } => study(&cli, scenario, *cover),
        Command::Classes {
            preset,
            resolution,
            eps,
        } => classes(&cli, preset, *resolution, *eps),
        Command::ShadowBench {
            preset,
            eps,
            trials,
            jump_probability,
            seed,
        } => shadow_bench(&cli, preset, eps, *trials, *jump_probability, *seed),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
