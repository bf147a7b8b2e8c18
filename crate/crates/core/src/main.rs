use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use efem::config::CaseConfig;
use efem::driver::{run_case, run_convergence, DriverError, RunOptions};
use efem::Mode;

/// Enriched finite element solver for multi-material electrostatics.
#[derive(Parser)]
#[command(version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one case and write its summary, line samples and fields.
    Solve {
        case: PathBuf,
        /// standard, efem-nod or efem
        #[arg(long)]
        mode: Option<Mode>,
        /// Structured element size (cells per axis = round(1/h)).
        #[arg(long)]
        h: Option<f64>,
        #[arg(long)]
        tol: Option<f64>,
        /// Dense LU instead of BiCGSTAB.
        #[arg(long)]
        direct: bool,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Error against the case reference over several mesh sizes and modes.
    Converge {
        case: PathBuf,
        #[arg(long, value_delimiter = ',')]
        h_list: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        modes: Option<Vec<Mode>>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), DriverError> {
    match cli.command {
        Command::Solve {
            case,
            mode,
            h,
            tol,
            direct,
            threads,
            out,
        } => {
            let mut config = CaseConfig::read(&case)?;
            let overrides = RunOptions {
                mode,
                h,
                tol,
                direct,
                threads,
                out: Some(out.clone()),
            };
            overrides.apply(&mut config);
            let summary = run_case(&config, Some(&out))?;
            println!(
                "{} [{}]: {} unknowns, {} cut elements, {} iterations, residual {:.3e}",
                summary.case,
                summary.mode,
                summary.unknowns,
                summary.cut_elements,
                summary.iterations,
                summary.residual
            );
            for line in &summary.lines {
                if let Some(e) = line.l2_error {
                    println!("  line {}: L2 error {e:.6e}", line.name);
                }
                for c in &line.crossings {
                    println!(
                        "  line {} crosses at {:?}: phi {:.8} (error {}), En- {:.6} En+ {:.6}",
                        line.name,
                        c.point,
                        c.phi,
                        c.phi_error.map_or("-".into(), |e| format!("{e:.3e}")),
                        c.negative.en,
                        c.positive.en
                    );
                }
            }
        }
        Command::Converge {
            case,
            h_list,
            modes,
            tol,
            threads,
            out,
        } => {
            let mut config = CaseConfig::read(&case)?;
            RunOptions {
                tol,
                threads,
                ..Default::default()
            }
            .apply(&mut config);
            let h_list = h_list.unwrap_or_else(|| config.h_list.clone());
            let modes = modes.unwrap_or_else(|| config.modes.clone());
            let report = run_convergence(&config, &h_list, &modes, Some(&out))?;
            print!("{}", report.table());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EFEM_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
