//! Command-line front end: compute classes, run the verification suites,
//! and emit machine-readable JSON reports.

mod suites;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use rigidchern_core::laurent::{build_space_with_window, SpaceDescriptor};
use rigidchern_core::sampling::perturbation_window;
use rigidchern_core::{
    c1_class, c1_cocycle, chern_classes, line_bundle_cocycle, total_diff, Error, PAdicContext,
};

#[derive(Parser)]
#[command(name = "rigidchern", version, about = "exact p-adic Chern classes on toric chart models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// prime of the coefficient ring
    #[arg(long, default_value_t = 5)]
    p: u64,
    /// working precision N (digits base p)
    #[arg(long, default_value_t = 8)]
    precision: u32,
    /// per-variable exponent window D
    #[arg(long, default_value_t = 12)]
    window: u32,
    /// seed for randomized runs
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// also write the JSON report to this path
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// First Chern class of a line bundle O(twist) on P^1 or P^2.
    C1 {
        #[arg(long)]
        space: String,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        twist: i32,
        /// multiply the standard lifts by random 1-units before computing
        #[arg(long)]
        perturb: bool,
        /// read the lifted unit cocycle from a JSON file instead
        #[arg(long)]
        cocycle: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Chern classes of a split bundle over P^1 or P^2.
    Chern {
        #[arg(long)]
        base: String,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        twists: Vec<i32>,
        #[command(flatten)]
        common: Common,
    },
    /// Run a verification suite and report per-case results.
    Verify {
        #[arg(long)]
        suite: String,
        #[arg(long)]
        space: Option<String>,
        #[arg(long)]
        base: Option<String>,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        twists: Option<Vec<i32>>,
        #[arg(long, default_value_t = 10)]
        cases: u32,
        /// divided-power level bound for the mpd suite
        #[arg(long, default_value_t = 2)]
        level: u32,
        #[command(flatten)]
        common: Common,
    },
}

fn parse_projective(name: &str) -> Result<SpaceDescriptor, Error> {
    match name {
        "P1" | "p1" => Ok(SpaceDescriptor::ProjectiveSpace { n: 1 }),
        "P2" | "p2" => Ok(SpaceDescriptor::ProjectiveSpace { n: 2 }),
        other => Err(Error::InvalidInput(format!(
            "unknown space {other:?} (expected P1 or P2)"
        ))),
    }
}

fn emit(report: &Value, out: &Option<PathBuf>) -> std::io::Result<()> {
    let text = serde_json::to_string_pretty(report).expect("report serializes");
    println!("{text}");
    if let Some(path) = out {
        std::fs::write(path, format!("{text}\n"))?;
    }
    Ok(())
}

fn run() -> Result<(Value, bool, Option<PathBuf>), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::C1 {
            space,
            twist,
            perturb,
            cocycle,
            common,
        } => {
            let desc = parse_projective(&space)?;
            let ctx = PAdicContext::new(common.p, common.precision)?;
            let window = if perturb {
                common.window.max(perturbation_window(common.precision, 3))
            } else {
                common.window
            };
            let sp = build_space_with_window(&desc, &ctx, window, window)?;
            let u = match &cocycle {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| Error::InvalidInput(format!("reading {path:?}: {e}")))?;
                    let data = serde_json::from_str(&text)
                        .map_err(|e| Error::InvalidInput(format!("parsing {path:?}: {e}")))?;
                    rigidchern_core::LiftedUnitCocycle::from_data(&sp, &data)?
                }
                None => {
                    let base = line_bundle_cocycle(&sp, twist)?;
                    if perturb {
                        let mut rng = suites::case_rng(common.seed, 0);
                        base.perturb(&sp, &mut rng, 3, 3)?
                    } else {
                        base
                    }
                }
            };
            let z = c1_cocycle(&sp, &u)?;
            let closed = total_diff(&sp, &z)?.is_zero();
            let class = c1_class(&sp, &u)?;
            let report = json!({
                "command": "c1",
                "space": space,
                "twist": twist,
                "perturb": perturb,
                "p": common.p,
                "N": common.precision,
                "D": window,
                "seed": common.seed,
                "class": class.balanced(&ctx),
                "residue": class.residue().to_str_radix(10),
                "precision": class.prec(),
                "closed": closed,
            });
            Ok((report, closed, common.out))
        }
        Command::Chern {
            base,
            twists,
            common,
        } => {
            let n = match parse_projective(&base)? {
                SpaceDescriptor::ProjectiveSpace { n } => n,
                _ => unreachable!(),
            };
            let ctx = PAdicContext::new(common.p, common.precision)?;
            let desc = SpaceDescriptor::ProjBundle {
                base_n: n,
                twists: twists.clone(),
            };
            let fiber_window = common.window.min(8);
            let sp = build_space_with_window(&desc, &ctx, common.window, fiber_window)?;
            let cv = chern_classes(&sp)?;
            let c: Vec<Value> = cv
                .classes
                .iter()
                .map(|x| json!([x.residue().to_str_radix(10), x.prec()]))
                .collect();
            let report = json!({
                "command": "chern",
                "base": base,
                "twists": twists,
                "p": common.p,
                "N": common.precision,
                "D": common.window,
                "seed": common.seed,
                "c": c,
                "c_balanced": cv.classes.iter().map(|x| x.balanced(&ctx)).collect::<Vec<_>>(),
                "precision": cv.precision,
            });
            Ok((report, true, common.out))
        }
        Command::Verify {
            suite,
            space,
            base,
            twists,
            cases,
            level,
            common,
        } => {
            let config = suites::SuiteConfig {
                p: common.p,
                precision: common.precision,
                window: common.window,
                seed: common.seed,
                cases,
                level,
                space,
                base,
                twists,
            };
            let (report, pass) = suites::run_suite(&suite, &config)?;
            Ok((report, pass, common.out))
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok((report, pass, out)) => {
            if emit(&report, &out).is_err() {
                return ExitCode::from(2);
            }
            if pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(err) => {
            let report = json!({ "error": err.to_string() });
            println!("{}", serde_json::to_string_pretty(&report).expect("serializes"));
            ExitCode::from(2)
        }
    }
}
