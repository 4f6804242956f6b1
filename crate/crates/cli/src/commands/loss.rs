use serde::Serialize;

use sbs_core::loss_numerics::{consistency_loss_with, load_prob_batch, total_loss, ConsistencyOptions, CrossEntropy};

use crate::args::{ConsistencyArgs, LossCommand, TotalArgs};
use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::report::{emit, path_string, RunReport, Stopwatch};

#[derive(Serialize)]
struct ConsistencyParameters {
    weak: String,
    strong: String,
    tau: f64,
    lambda: f64,
    batch_size: usize,
    #[serde(flatten)]
    options: ConsistencyOptions,
}

pub fn run(cmd: &LossCommand, cfg: &FileConfig, timings: bool) -> CliResult<()> {
    match cmd {
        LossCommand::Consistency(a) => consistency(a, cfg, timings),
        LossCommand::Total(a) => total(a, cfg),
    }
}

fn consistency(args: &ConsistencyArgs, cfg: &FileConfig, timings: bool) -> CliResult<()> {
    let tau = args.tau.unwrap_or(cfg.loss.tau);
    let lambda = args.lambda.unwrap_or(cfg.loss.lambda);
    let options = ConsistencyOptions {
        cross_entropy: if args.soft { CrossEntropy::Soft } else { CrossEntropy::Hard },
        target: args.target.into(),
        floor: args.floor.unwrap_or(cfg.loss.floor),
    };
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(CliError::Param(format!("tau must be in (0, 1], got {tau}")));
    }

    let mut clock = Stopwatch::new(timings);
    let (weak, strong) = clock
        .time("load", || -> CliResult<_> { Ok((load_prob_batch(&args.weak)?, load_prob_batch(&args.strong)?)) })?;
    let l_u = clock.time("loss", || consistency_loss_with(&weak, &strong, tau, &options))?;
    let breakdown = total_loss(args.l_cls, args.l_box, args.l_mask, l_u, lambda)?.with_tau(tau);

    let report = RunReport {
        schema: crate::report::SCHEMA,
        command: "loss consistency",
        parameters: ConsistencyParameters {
            weak: path_string(&args.weak),
            strong: path_string(&args.strong),
            tau,
            lambda,
            batch_size: weak.len(),
            options,
        },
        timings: clock.finish(),
        outputs: Vec::new(),
        warnings: Vec::new(),
        result: breakdown,
    };
    emit(&report, &args.report)
}

fn total(args: &TotalArgs, cfg: &FileConfig) -> CliResult<()> {
    let lambda = args.lambda.unwrap_or(cfg.loss.lambda);
    let breakdown = total_loss(args.l_cls, args.l_box, args.l_mask, args.l_u, lambda)?;
    let report = RunReport {
        schema: crate::report::SCHEMA,
        command: "loss total",
        parameters: serde_json::json!({ "lambda": lambda }),
        timings: None,
        outputs: Vec::new(),
        warnings: Vec::new(),
        result: breakdown,
    };
    emit(&report, &args.report)
}
