//! Command-line front end. Every subcommand except `report` runs tasks of a
//! [`RunConfig`]; the one-task subcommands build that config from their arguments.

pub mod config;
pub mod tasks;

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::exponential::ExpMode;
use crate::report::{summary_table, Envelope};
pub use config::{config_hash, Objects, RunConfig, Suite, Task, TaskOp};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "genkernel", version, about = "Generalized kernel operators and their exponentials")]
struct Cli {
    /// TOML file with extra objects (and tasks, for `run`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Moment conditions of the scarp kernel.
    Moments {
        #[arg(long, default_value_t = 4)]
        m_max: u32,
    },
    /// Embed a named function or distribution.
    Embed { function: String },
    Apply { kernel: String, function: String },
    Compose { left: String, right: String },
    /// n-th iterate of a kernel.
    Power { kernel: String, n: usize },
    /// Series for `e^(tH) - Id`.
    Exp {
        kernel: String,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        t: f64,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        t_im: f64,
        #[arg(long, value_enum, default_value = "compact-sup")]
        mode: ModeArg,
        /// Continue when the kernel fails the log-scale gate.
        #[arg(long)]
        proceed: bool,
    },
    /// Run a verification suite on a kernel.
    Verify {
        #[arg(value_enum)]
        suite: SuiteArg,
        kernel: String,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        t: f64,
        #[arg(long, default_value_t = 5)]
        probes: usize,
    },
    /// Merge report files into a CSV summary.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run every task of the config (or only the named ones).
    Run {
        #[arg(long)]
        only: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum ModeArg {
    CompactSup,
    L2,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum SuiteArg {
    Exponential,
    Zero,
    LogScale,
    Support,
}

impl Cmd {
    fn task(&self) -> Option<TaskOp> {
        Some(match self {
            Cmd::Moments { m_max } => TaskOp::Moments { m_max: *m_max, min_decay: 3.0 },
            Cmd::Embed { function } => TaskOp::Embed { function: function.clone() },
            Cmd::Apply { kernel, function } => TaskOp::Apply { kernel: kernel.clone(), function: function.clone() },
            Cmd::Compose { left, right } => TaskOp::Compose { left: left.clone(), right: right.clone() },
            Cmd::Power { kernel, n } => TaskOp::Power { kernel: kernel.clone(), n: *n },
            Cmd::Exp { kernel, t, t_im, mode, proceed } => TaskOp::Exp {
                kernel: kernel.clone(),
                t: (*t, *t_im),
                mode: match mode {
                    ModeArg::CompactSup => ExpMode::CompactSup,
                    ModeArg::L2 => ExpMode::L2,
                },
                proceed: *proceed,
            },
            Cmd::Verify { suite, kernel, t, probes } => TaskOp::Verify {
                suite: match suite {
                    SuiteArg::Exponential => Suite::Exponential,
                    SuiteArg::Zero => Suite::Zero,
                    SuiteArg::LogScale => Suite::LogScale,
                    SuiteArg::Support => Suite::Support,
                },
                kernel: kernel.clone(),
                t: *t,
                probes: *probes,
            },
            Cmd::Report { .. } | Cmd::Run { .. } => return None,
        })
    }
}

fn init_threads() {
    if let Some(n) = std::env::var("GENKERNEL_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        // Fails only when the global pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        _ => EXIT_FAIL,
    }
}

/// Runs the selected tasks and writes `<out>/<output>.report.json` and `.samples.csv` for each.
pub fn run_config(cfg: &RunConfig, hash: &str, base_dir: &Path, out: &Path, only: &[String]) -> i32 {
    for name in only {
        if !cfg.tasks.iter().any(|t| &t.name == name) {
            eprintln!("error: config error: no task named \"{name}\"");
            return EXIT_USAGE;
        }
    }
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("error: {}: {e}", out.display());
        return EXIT_USAGE;
    }
    let mut objs = Objects::new(cfg, base_dir);
    let mut code = EXIT_PASS;
    for task in cfg.tasks.iter().filter(|t| only.is_empty() || only.contains(&t.name)) {
        match tasks::run_task(&mut objs, task) {
            Ok(o) => {
                let env = Envelope::new(hash, &task.name, task.op.name(), o.pass, o.result);
                let base = out.join(task.output_base());
                let written = env
                    .write(&base.with_extension("report.json"))
                    .and_then(|_| std::fs::write(base.with_extension("samples.csv"), &o.samples_csv).map_err(Error::from));
                if let Err(e) = written {
                    eprintln!("error: task {}: {e}", task.name);
                    return EXIT_FAIL;
                }
                println!("{}: {}", task.name, if o.pass { "PASS" } else { "FAIL" });
                if !o.pass {
                    eprintln!("task {} failed verification", task.name);
                    code = EXIT_FAIL;
                }
            }
            Err(e) => {
                eprintln!("error: task {}: {e}", task.name);
                let c = exit_code(&e);
                if c == EXIT_USAGE {
                    return c;
                }
                code = EXIT_FAIL;
            }
        }
    }
    code
}

fn load_config(path: Option<&Path>, extra_task: Option<Task>) -> Result<(RunConfig, String, PathBuf)> {
    let (text, base) = match path {
        Some(p) => (
            std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
            p.parent().map(Path::to_path_buf).unwrap_or_default(),
        ),
        None => (String::new(), PathBuf::from(".")),
    };
    let mut cfg: RunConfig = RunConfig::parse(&text)?;
    let mut hashed = text;
    if let Some(t) = extra_task {
        hashed.push_str(&serde_json::to_string(&t.op).expect("task serializes"));
        cfg.tasks = vec![t];
        cfg.validate()?;
    }
    Ok((cfg, config_hash(&hashed), base))
}

fn report(files: &[PathBuf], out: &Path) -> Result<()> {
    let envs = files.iter().map(|f| Envelope::read(f)).collect::<Result<Vec<_>>>()?;
    let table = summary_table(&envs);
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("summary.csv"), &table)?;
    print!("{table}");
    Ok(())
}

/// Entry point; returns the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
        }
    };
    init_threads();
    if let Cmd::Report { files } = &cli.cmd {
        return match report(files, &cli.out) {
            Ok(()) => EXIT_PASS,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_USAGE
            }
        };
    }
    let task = cli.cmd.task().map(|op| Task { name: op.name().to_string(), output: None, op });
    let (cfg, hash, base) = match load_config(cli.config.as_deref(), task) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let only = match &cli.cmd {
        Cmd::Run { only } => only.clone(),
        _ => vec![],
    };
    run_config(&cfg, &hash, &base, &cli.out, &only)
}
