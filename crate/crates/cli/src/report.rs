use std::path::PathBuf;

use clap::{Args, Subcommand};
use ctecs::fourier::{theory_constants, validate_lambda};
use serde_json::{json, Value};

use crate::fail::{usage, CliResult};
use crate::io::{self, SCHEMA_VERSION};
use crate::Global;

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[command(subcommand)]
    kind: ReportKind,
}

#[derive(Subcommand, Debug)]
enum ReportKind {
    /// Degree, accuracy and sample-count constants of the worst-case analysis.
    Theory {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        lambda: f64,
        /// True rate, for the rate-knowledge check.
        #[arg(long)]
        epsilon: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate verified `sample` reports.
    Summary {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn verification_of(doc: &Value) -> Option<&Value> {
    let report = doc.get("report").unwrap_or(doc);
    report.get("verification").filter(|v| !v.is_null())
}

pub fn run(_global: &Global, args: ReportArgs) -> CliResult<()> {
    match args.kind {
        ReportKind::Theory { n, alpha, delta, lambda, epsilon, out } => {
            let constants = theory_constants(n, alpha, delta, lambda)?;
            let check = match epsilon {
                Some(e) => Some(validate_lambda(alpha, delta, lambda, e)?),
                None => None,
            };
            let report = json!({
                "schema_version": SCHEMA_VERSION,
                "command": "report",
                "config": { "n": n, "alpha": alpha, "delta": delta, "lambda": lambda, "epsilon": epsilon },
                "theory": constants,
                "lambda_check": check,
            });
            io::emit(&report, out.as_deref())
        }
        ReportKind::Summary { inputs, out } => {
            let mut rows = Vec::new();
            let (mut passed, mut verified) = (0, 0);
            let mut l1s = Vec::new();
            for path in &inputs {
                let doc = io::read_json(path)?;
                let v = verification_of(&doc);
                let l1 = v.and_then(|v| v["l1"].as_f64());
                let pass = v.and_then(|v| v["pass"].as_bool());
                if let Some(p) = pass {
                    verified += 1;
                    passed += p as usize;
                }
                if let Some(x) = l1 {
                    l1s.push(x);
                }
                rows.push(json!({ "file": path, "l1": l1, "bound": v.and_then(|v| v["bound"].as_f64()), "pass": pass }));
            }
            if rows.is_empty() {
                return Err(usage("no inputs"));
            }
            l1s.sort_by(f64::total_cmp);
            let stats = (!l1s.is_empty()).then(|| {
                json!({
                    "min": l1s[0],
                    "median": l1s[l1s.len() / 2],
                    "mean": l1s.iter().sum::<f64>() / l1s.len() as f64,
                    "max": l1s[l1s.len() - 1],
                })
            });
            let report = json!({
                "schema_version": SCHEMA_VERSION,
                "command": "report",
                "files": rows,
                "verified": verified,
                "passed": passed,
                "l1": stats,
            });
            io::emit(&report, out.as_deref())
        }
    }
}
