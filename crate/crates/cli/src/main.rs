use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use consfem::harness::{
    parse_config, parse_levels, parse_methods, run_study_to_csv, ProblemId, StudyConfig,
};
use consfem::{BoundaryKind, DualMesh, ExecutionMode, StructuredMesh};

#[derive(Parser)]
#[command(
    name = "consfem",
    version,
    about = "Conservative Q1/Q2 finite elements: convergence studies"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study and write one CSV row per level and method.
    Study(StudyArgs),
    /// Dump the control volumes of a dual mesh as `k x_lo y_lo x_hi y_hi`.
    Mesh(MeshArgs),
}

#[derive(clap::Args, Debug, Default)]
struct StudyArgs {
    /// File of `key=value` lines using the long flag names; flags given on
    /// the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// example1, neumann_singular or neumann_smooth
    #[arg(long)]
    problem: Option<String>,
    #[arg(long)]
    degree: Option<usize>,
    /// Level range `min:max`
    #[arg(long)]
    levels: Option<String>,
    /// Comma-separated subset of fem,fv
    #[arg(long)]
    methods: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write `x y value` files for every solve into this directory
    #[arg(long)]
    dump_fields: Option<PathBuf>,
    /// Single-threaded assembly and analysis
    #[arg(long)]
    deterministic: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Bc {
    Dirichlet,
    Neumann,
}

#[derive(clap::Args)]
struct MeshArgs {
    #[arg(long)]
    level: u32,
    #[arg(long, value_enum, default_value = "dirichlet")]
    bc: Bc,
    /// Output file; stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
}

const CONFIG_KEYS: [&str; 7] = [
    "problem",
    "degree",
    "levels",
    "methods",
    "out",
    "dump-fields",
    "deterministic",
];

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("config key '{key}': expected true or false, got '{v}'"),
    }
}

/// Command-line values over config-file values.
fn resolve(args: StudyArgs) -> Result<(StudyConfig, PathBuf)> {
    let file: BTreeMap<String, String> = match &args.config {
        Some(path) => {
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            parse_config(&text)?
        }
        None => BTreeMap::new(),
    };
    if let Some(k) = file.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        bail!("unknown config key '{k}'");
    }
    let get = |flag: Option<String>, key: &str| flag.or_else(|| file.get(key).cloned());
    let need = |v: Option<String>, key: &str| v.ok_or_else(|| anyhow!("missing --{key}"));

    let problem: ProblemId = need(get(args.problem, "problem"), "problem")?.parse()?;
    let degree = match args.degree {
        Some(d) => d,
        None => need(file.get("degree").cloned(), "degree")?
            .parse()
            .context("invalid degree")?,
    };
    let levels = parse_levels(&need(get(args.levels, "levels"), "levels")?)?;
    let methods = parse_methods(&get(args.methods, "methods").unwrap_or_else(|| "fem,fv".into()))?;
    let out = args
        .out
        .or_else(|| file.get("out").map(PathBuf::from))
        .ok_or_else(|| anyhow!("missing --out"))?;
    let dump_fields = args
        .dump_fields
        .or_else(|| file.get("dump-fields").map(PathBuf::from));
    let deterministic = args.deterministic
        || match file.get("deterministic") {
            Some(v) => parse_bool("deterministic", v)?,
            None => false,
        };

    let mut config = StudyConfig::new(problem, degree, levels, methods);
    config.dump_fields = dump_fields;
    config.mode = if deterministic {
        ExecutionMode::Sequential
    } else {
        ExecutionMode::Parallel
    };
    config.validate()?;
    Ok((config, out))
}

fn study(args: StudyArgs) -> Result<()> {
    let (config, out) = resolve(args)?;
    let file = fs::File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    let report = run_study_to_csv(&config, BufWriter::new(file))?;
    eprintln!("wrote {} rows to {}", report.rows.len(), out.display());
    Ok(())
}

fn mesh(args: MeshArgs) -> Result<()> {
    let bc = match args.bc {
        Bc::Dirichlet => BoundaryKind::AllDirichlet,
        Bc::Neumann => BoundaryKind::AllNeumann,
    };
    let dual = DualMesh::new(&StructuredMesh::new(args.level, bc)?);
    match args.out {
        Some(path) => dual.write_volumes(BufWriter::new(fs::File::create(path)?))?,
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            dual.write_volumes(&mut lock)?;
            lock.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Study(args) => study(args),
        Command::Mesh(args) => mesh(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
