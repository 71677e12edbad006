use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use dichogeo_cli::{run, write_diagnostic, RunConfig, Task};

#[derive(Parser)]
#[command(name = "dichogeo", version, about = "Geostatistical fits for continuous and dichotomized prevalence surveys")]
struct Args {
    task: Task,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let fallback = args.config.parent().map(PathBuf::from).unwrap_or_default();
    let cfg = RunConfig::load(&args.config).map(|mut c| {
        if let Some(s) = args.seed {
            c.seed = s;
        }
        if args.workers.is_some() {
            c.workers = args.workers;
        }
        c
    });
    let (dir, result) = match cfg {
        Ok(c) => (Some(c.output_dir.clone()), run(args.task, &c)),
        Err(e) => (None, Err(e)),
    };
    match result {
        Ok(outputs) => {
            for o in outputs {
                println!("{}", o.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let d = write_diagnostic(dir.as_deref(), &fallback, args.task, &e);
            eprintln!("error: {e}\n(diagnostic written to {})", d.display());
            ExitCode::FAILURE
        }
    }
}
