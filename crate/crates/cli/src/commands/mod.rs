mod blurmap;
mod loss;
mod stability;
mod stack;
mod synth;

use crate::args::{Cli, Command};
use crate::config::FileConfig;
use crate::error::CliResult;

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    let cfg = FileConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Blurmap(a) => blurmap::run(a, &cfg, cli.timings),
        Command::Stack(a) => stack::run(a, &cfg, cli.timings),
        Command::Stability(a) => stability::run(a, &cfg, cli.timings),
        Command::Loss(c) => loss::run(c, &cfg, cli.timings),
        Command::Synth(a) => synth::run(a, &cfg, cli.timings),
    }
}
