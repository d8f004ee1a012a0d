mod cli;
mod commands;

use std::process::ExitCode;

use clap::Parser;

use ungsl_core::Error as CoreError;
use ungsl_harness::HarnessError;

use crate::cli::{Cli, Command};

/// A proven inequality failed on some instance.
#[derive(Debug)]
pub struct BoundViolation(pub String);

impl std::fmt::Display for BoundViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "bound violated: {}", self.0)
    }
}

impl std::error::Error for BoundViolation {}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train(a) => commands::train(&a),
        Command::Verify(a) => commands::verify(&a),
        Command::Experiment(a) => commands::experiment(&a),
        Command::Report(a) => commands::report(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain joined with `: `, skipping causes whose text the
/// previous message already includes.
fn describe(e: &anyhow::Error) -> String {
    let mut out = String::new();
    let mut last = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !last.contains(&msg) {
            if !out.is_empty() {
                out.push_str(": ");
            }
            out.push_str(&msg);
        }
        last = msg;
    }
    out
}

fn core_code(e: &CoreError) -> u8 {
    match e.root() {
        CoreError::Divergence { .. } | CoreError::NonFinite(_) => 3,
        CoreError::InvalidInput(_) | CoreError::Precondition(_) | CoreError::Untrained | CoreError::Parse { .. } => 2,
        CoreError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
        _ => 1,
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<BoundViolation>() {
            return 4;
        }
        if let Some(h) = cause.downcast_ref::<HarnessError>() {
            return match h {
                HarnessError::Core(c) => core_code(c),
                HarnessError::Config(_)
                | HarnessError::ConfigRead { .. }
                | HarnessError::ConfigParse { .. }
                | HarnessError::Record { .. } => 2,
                HarnessError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
                _ => 1,
            };
        }
        if let Some(c) = cause.downcast_ref::<CoreError>() {
            return core_code(c);
        }
    }
    1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_the_error_kind() {
        let diverged = CoreError::Divergence { epoch: 3, loss: f64::NAN }.in_stage("re-training");
        assert_eq!(exit_code(&HarnessError::Core(diverged).into()), 3);
        assert_eq!(exit_code(&HarnessError::Config("x".into()).into()), 2);
        assert_eq!(exit_code(&CoreError::Untrained.into()), 2);
        assert_eq!(exit_code(&BoundViolation("slack".into()).into()), 4);
        assert_eq!(exit_code(&anyhow::anyhow!("other")), 1);
    }

    #[test]
    fn repeated_causes_are_printed_once() {
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        let e: anyhow::Error = HarnessError::ConfigRead { path: "a.toml".into(), source: io }.into();
        assert_eq!(describe(&e), "cannot read config a.toml: gone");
        assert_eq!(exit_code(&e), 2);
    }
}
