use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dmh::certify::{certify, diagnose, CertifyConfig, Method};
use dmh::error::Error;
use dmh::experiment::{run_experiment, summary_csv, write_outputs, ExperimentConfig, Format};
use dmh::golden::golden;

#[derive(Parser)]
#[command(name = "dmh", version, about = "Locally balanced Metropolis-Hastings experiments and exact certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum CertMethod {
    Flow,
    RestrictedFlow,
    Drift,
}

#[derive(Subcommand)]
enum Command {
    /// Recompute the reference examples on the three-variable design.
    Golden {
        /// 3, 4 or 5; all three when omitted.
        example: Option<u8>,
        #[arg(long, value_enum)]
        format: Option<OutFormat>,
    },
    /// Run replicated hitting-time experiments.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutFormat>,
    },
    /// Compare exact gaps and mixing times with the available bounds.
    Certify {
        #[arg(long)]
        config: PathBuf,
        /// Restrict to these certificates; repeatable.
        #[arg(long, value_enum)]
        method: Vec<CertMethod>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutFormat>,
    },
    /// Exact spectrum, TV curve and hitting times of a small chain.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        format: Option<OutFormat>,
    },
}

enum Failure {
    Config(String),
    Run(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            Error::CapExceeded { .. } => Failure::Config(format!("{e}; reduce p in [model]")),
            _ => Failure::Run(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Run(e.to_string())
    }
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(name), body)?;
    Ok(())
}

/// Returns whether every check passed.
fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Golden { example, format } => {
            let examples = example.map(|e| vec![e]).unwrap_or_else(|| vec![3, 4, 5]);
            let mut ok = true;
            let mut reports = Vec::new();
            for e in examples {
                let r = golden(e)?;
                ok &= r.pass();
                reports.push(r);
            }
            match format {
                Some(OutFormat::Json) => println!("{}", serde_json::to_string_pretty(&reports)?),
                Some(OutFormat::Csv) => {
                    println!("example,check,computed,expected,tol,pass");
                    for r in &reports {
                        for c in &r.checks {
                            println!("{},{},{},{},{},{}", r.example, c.name, c.computed, c.expected, c.tol, c.pass);
                        }
                    }
                }
                None => reports.iter().for_each(|r| print!("{}", r.to_text())),
            }
            Ok(ok)
        }
        Command::Experiment { config, seed, workers, out, format } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.run.master_seed = s;
            }
            if let Some(w) = workers {
                cfg.run.workers = w;
            }
            if let Some(o) = out {
                cfg.output.directory = o;
            }
            if let Some(f) = format {
                cfg.output.formats = vec![match f {
                    OutFormat::Csv => Format::Csv,
                    OutFormat::Json => Format::Json,
                }];
            }
            cfg.validate()?;
            let res = run_experiment(&cfg)?;
            let files = write_outputs(&cfg, &res)?;
            print!("{}", summary_csv(&res, cfg.output.wall_time));
            for f in files {
                eprintln!("wrote {}", f.display());
            }
            Ok(true)
        }
        Command::Certify { config, method, seed, out, format } => {
            let mut cfg = CertifyConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.certify.master_seed = s;
            }
            if !method.is_empty() {
                cfg.certify.methods = method
                    .iter()
                    .map(|m| match m {
                        CertMethod::Flow => Method::Flow,
                        CertMethod::RestrictedFlow => Method::RestrictedFlow,
                        CertMethod::Drift => Method::Drift,
                    })
                    .collect();
            }
            let r = certify(&cfg)?;
            let json = serde_json::to_string_pretty(&r)? + "\n";
            match format {
                Some(OutFormat::Json) => print!("{json}"),
                Some(OutFormat::Csv) => {
                    println!("check,computed,expected,pass");
                    for c in &r.checks {
                        println!("{},{},{},{}", c.name, c.computed, c.expected, c.pass);
                    }
                }
                None => print!("{}", r.to_text()),
            }
            if let Some(dir) = out {
                write_file(&dir, "certify.json", &json)?;
                write_file(&dir, "certify.txt", &r.to_text())?;
            }
            Ok(r.pass())
        }
        Command::Diagnose { config, seed, out, format } => {
            let mut cfg = CertifyConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.certify.master_seed = s;
            }
            let d = diagnose(&cfg)?;
            let json = serde_json::to_string_pretty(&d)? + "\n";
            let mut tv = format!("# dmh {}\nt,tv\n", dmh::VERSION);
            for (t, v) in d.tv.iter().enumerate() {
                tv += &format!("{t},{v}\n");
            }
            match format {
                Some(OutFormat::Csv) => print!("{tv}"),
                _ => print!("{json}"),
            }
            if let Some(dir) = out {
                write_file(&dir, "diagnose.json", &json)?;
                write_file(&dir, "tv.csv", &tv)?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Run(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
