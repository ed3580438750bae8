use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use liebridge::{parse_config_with, run_experiment, CliError, Experiment};

#[derive(Parser)]
#[command(name = "liebridge", version, about = "Brownian motion, bridges and heat-kernel estimation on Lie groups")]
struct Args {
    /// bm, bridge, fermi, kpoint, mh, metric-mle, spd-mean, s2-kernel or s2-aniso
    experiment: String,
    /// key = value lines or a JSON object
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the effective configuration and exit.
    #[arg(long)]
    print_config: bool,
}

fn run(args: &Args) -> Result<(), CliError> {
    if Experiment::parse(&args.experiment).is_none() {
        return Err(CliError::config(0, "experiment", format!("unknown experiment '{}'", args.experiment)));
    }
    let text = match &args.config {
        Some(p) => std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        None => String::new(),
    };
    let mut overrides = vec![("experiment", args.experiment.clone())];
    if let Some(s) = args.seed {
        overrides.push(("seed", s.to_string()));
    }
    if let Some(o) = &args.out {
        overrides.push(("output_dir", o.display().to_string()));
    }
    let cfg = parse_config_with(&text, &overrides)?;
    if args.print_config {
        print!("{}", cfg.render());
        return Ok(());
    }
    let manifest = run_experiment(&cfg)?;
    println!("{}", serde_json::to_string(&manifest.to_json()["summary"]).expect("json"));
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = e.record();
            eprintln!("{record}");
            if let Some(dir) = &args.out {
                let _ = std::fs::create_dir_all(dir);
                let _ = std::fs::write(dir.join("error.json"), format!("{record:#}\n"));
            }
            ExitCode::from(2)
        }
    }
}
