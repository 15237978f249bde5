use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use matstruct_cli::{
    audit, dump_maps, run_mode, simulate, sweep, validate, write_error, CliError, CliResult,
    Context, Scenario, PRESETS,
};

#[derive(Debug, Parser)]
#[command(
    name = "matstruct",
    version,
    about = "Maturity-structured cell population simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file (TOML).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Bundled scenario name, used when no file is given.
    #[arg(long, global = true)]
    preset: Option<String>,

    /// Output directory.
    #[arg(long, global = true, env = "MATSTRUCT_OUT_DIR")]
    out: Option<PathBuf>,

    /// Override the run horizon.
    #[arg(long, global = true, allow_negative_numbers = true)]
    horizon: Option<f64>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for randomized initial data.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the scenario and the model hypotheses.
    Validate,
    /// Solve and write the fields and diagnostics.
    Simulate,
    /// Solve and run every audit.
    Audit,
    /// Stability verdict and decay rate over a parameter grid.
    Sweep,
    /// Write the commitment maps.
    DumpMaps,
    /// Follow the scenario's `run.mode`.
    Run,
    /// List bundled scenarios.
    Presets,
}

fn scenario(cli: &Cli) -> CliResult<Scenario> {
    match (&cli.scenario, &cli.preset) {
        (Some(path), _) => Scenario::load(path),
        (None, Some(name)) => Scenario::preset(name),
        (None, None) => Err(CliError::Invalid(
            "pass --scenario <path> or --preset <name>".into(),
        )),
    }
}

fn execute(cli: &Cli, ctx: &Context) -> CliResult<serde_json::Value> {
    let out = ctx.out_dir.display().to_string();
    Ok(match cli.command {
        Command::Validate => serde_json::to_value(validate(ctx)?)?,
        Command::Simulate => {
            let d = simulate(ctx)?;
            json!({ "status": "ok", "out": out, "sup_n": d.sup_n, "verdict": d.certificate.local })
        }
        Command::Audit => {
            let a = audit(ctx)?;
            json!({ "status": "ok", "out": out, "positivity": a.diagnostics.positivity.passed })
        }
        Command::Sweep => json!({ "status": "ok", "out": out, "points": sweep(ctx)?.len() }),
        Command::DumpMaps => json!({ "status": "ok", "maps": dump_maps(ctx)? }),
        Command::Run => run_mode(ctx)?,
        Command::Presets => unreachable!(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Presets = cli.command {
        for (name, _) in PRESETS {
            println!("{name}");
        }
        return ExitCode::SUCCESS;
    }
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            eprintln!(
                "{}",
                json!({ "status": "error", "kind": "threads", "message": e.to_string() })
            );
            return ExitCode::FAILURE;
        }
    }
    let ctx = match scenario(&cli)
        .and_then(|s| Context::new(s, cli.out.clone(), cli.horizon, cli.seed))
    {
        Ok(ctx) => ctx,
        Err(e) => {
            if let Some(dir) = &cli.out {
                write_error(dir, &e);
            }
            return fail(&e);
        }
    };
    match execute(&cli, &ctx) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            write_error(&ctx.out_dir, &e);
            fail(&e)
        }
    }
}

fn fail(e: &CliError) -> ExitCode {
    eprintln!(
        "{}",
        serde_json::to_string(&e.record()).unwrap_or_else(|_| e.to_string())
    );
    ExitCode::FAILURE
}
