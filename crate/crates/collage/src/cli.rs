//! Command-line entry point: `forward`, `synth`, `invert`, `sweep`, and
//! `validate` subcommands over a shared TOML config.

use crate::config::{ConfigOverrides, ExperimentConfig, ModelSpec};
use crate::report::{self, fmt_sig, RunError};
use std::path::PathBuf;

const USAGE: &str = "\
usage: collage <subcommand> --config <path> [--seed <int>] [--out <dir>]

subcommands:
  validate   check a config file and exit
  forward    solve the forward problem and dump the solution
  synth      generate (optionally noisy) observations
  invert     run the configured model (model1, model2, or model3)
  sweep      run the weight grid and keep the nondominated solutions

exit codes: 0 success, 1 configuration error, 2 numeric failure
";

struct CliArgs {
    subcommand: String,
    config: PathBuf,
    overrides: ConfigOverrides,
}

fn parse_args(args: &[String]) -> Result<CliArgs, String> {
    let mut iter = args.iter();
    let subcommand = iter.next().ok_or("missing subcommand")?.clone();
    if !matches!(
        subcommand.as_str(),
        "validate" | "forward" | "synth" | "invert" | "sweep"
    ) {
        return Err(format!("unknown subcommand {subcommand:?}"));
    }
    let mut config = None;
    let mut overrides = ConfigOverrides::default();
    while let Some(flag) = iter.next() {
        match flag.as_str() {
            "--config" => {
                let value = iter.next().ok_or("--config needs a path")?;
                config = Some(PathBuf::from(value));
            }
            "--seed" => {
                let value = iter.next().ok_or("--seed needs an integer")?;
                overrides.seed =
                    Some(value.parse().map_err(|_| format!("bad seed {value:?}"))?);
            }
            "--out" => {
                let value = iter.next().ok_or("--out needs a directory")?;
                overrides.output_dir = Some(PathBuf::from(value));
            }
            other => return Err(format!("unknown flag {other:?}")),
        }
    }
    let config = config.ok_or("missing required --config <path>")?;
    Ok(CliArgs {
        subcommand,
        config,
        overrides,
    })
}

fn run(cli: &CliArgs) -> Result<(), RunError> {
    let config = ExperimentConfig::load(&cli.config, &cli.overrides)?;
    match cli.subcommand.as_str() {
        "validate" => {
            println!("config ok: {}", cli.config.display());
        }
        "forward" => {
            let u = report::run_forward(&config)?;
            std::fs::create_dir_all(&config.output_dir).map_err(|source| RunError::Write {
                path: config.output_dir.clone(),
                source,
            })?;
            let path = config.output_dir.join("forward.csv");
            let mut out = String::from("x,u\n");
            for (x, v) in u.breakpoints().iter().zip(u.values()) {
                out.push_str(&format!("{},{}\n", fmt_sig(*x), fmt_sig(*v)));
            }
            std::fs::write(&path, out).map_err(|source| RunError::Write {
                path: path.clone(),
                source,
            })?;
            println!("forward solution written to {}", path.display());
        }
        "synth" => {
            let path = report::run_synth(&config)?;
            println!("observations written to {}", path.display());
        }
        "invert" => {
            if matches!(config.model, ModelSpec::Sweep { .. }) {
                return Err(RunError::Config(crate::config::ConfigError::Invalid(
                    "invert runs a single model; use the sweep subcommand for [sweep]".into(),
                )));
            }
            let outcome = report::run_experiment(&config)?;
            print_rows(&outcome.rows);
            println!("results written to {}", outcome.table_path.display());
        }
        "sweep" => {
            if !matches!(config.model, ModelSpec::Sweep { .. }) {
                return Err(RunError::Config(crate::config::ConfigError::Invalid(
                    "sweep requires a [sweep] section in the config".into(),
                )));
            }
            let outcome = report::run_experiment(&config)?;
            print_rows(&outcome.rows);
            println!(
                "{} nondominated solutions written to {}",
                outcome.rows.len(),
                outcome.table_path.display()
            );
        }
        _ => unreachable!("subcommands are validated during parsing"),
    }
    Ok(())
}

fn print_rows(rows: &[report::ResultRow]) {
    println!("eta1,eta2,eta3,CD,ENT,SP,ER,status");
    for row in rows {
        let p = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
        println!(
            "{},{},{},{},{},{},{},{}",
            p(row.params[0]),
            p(row.params[1]),
            p(row.params[2]),
            fmt_sig(row.cd),
            fmt_sig(row.ent),
            row.sp,
            row.er.map(fmt_sig).unwrap_or_default(),
            row.status
        );
    }
}

/// Runs the CLI and returns the process exit code.
pub fn cli_main(args: &[String]) -> i32 {
    let cli = match parse_args(args) {
        Ok(cli) => cli,
        Err(message) => {
            eprintln!("error: {message}\n{USAGE}");
            return 1;
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(list: &[&str]) -> Vec<String> {
        list.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn missing_config_is_a_usage_error() {
        assert_eq!(cli_main(&args(&["invert"])), 1);
        assert_eq!(cli_main(&args(&[])), 1);
        assert_eq!(cli_main(&args(&["frobnicate", "--config", "x.toml"])), 1);
    }

    #[test]
    fn parse_collects_flags() {
        let cli = parse_args(&args(&[
            "invert", "--config", "c.toml", "--seed", "9", "--out", "results",
        ]))
        .unwrap();
        assert_eq!(cli.subcommand, "invert");
        assert_eq!(cli.config, PathBuf::from("c.toml"));
        assert_eq!(cli.overrides.seed, Some(9));
        assert_eq!(cli.overrides.output_dir, Some(PathBuf::from("results")));
    }

    #[test]
    fn unreadable_config_is_a_config_error() {
        assert_eq!(
            cli_main(&args(&["validate", "--config", "/nonexistent/x.toml"])),
            1
        );
    }

    #[test]
    fn subcommand_and_model_section_must_agree() {
        let dir = std::env::temp_dir().join(format!("collage-cli-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let model1 = dir.join("model1.toml");
        let sweep = dir.join("sweep.toml");
        let base = r#"
[problem]
interval = [0.0, 1.0]
u_true = [0.0, 1.0, -1.0]
f = [-1.0, 12.0]
bc = [0.0, 0.0]
[basis]
interior_counts = [3]
[target]
kind = "exact"
grid_points = 21
"#;
        std::fs::write(&model1, format!("{base}[model1]\nweights = [[1.0, 0.0, 0.0]]\n")).unwrap();
        std::fs::write(&sweep, format!("{base}[sweep]\nweights = [[1.0, 0.0, 0.0]]\n")).unwrap();
        assert_eq!(
            cli_main(&args(&["sweep", "--config", model1.to_str().unwrap()])),
            1
        );
        assert_eq!(
            cli_main(&args(&["invert", "--config", sweep.to_str().unwrap()])),
            1
        );
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
