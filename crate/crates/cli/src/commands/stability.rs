use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::Serialize;

use sbs_core::image_io::read_png_codes;
use sbs_core::selftrain_select::{select_reliable, LabelMask, Sample};

use crate::args::StabilityArgs;
use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::report::{emit, path_string, RunReport, Stopwatch};

#[derive(Serialize)]
struct Parameters {
    checkpoints: Vec<String>,
    tau: f64,
    classes: usize,
    slice_count: usize,
}

fn png_names(dir: &Path) -> CliResult<BTreeSet<String>> {
    let mut names = BTreeSet::new();
    for entry in std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))? {
        let p = entry.map_err(|e| CliError::io(dir, e))?.path();
        let is_png = p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"));
        if p.is_file() && is_png {
            if let Some(name) = p.file_name().and_then(|n| n.to_str()) {
                names.insert(name.to_owned());
            }
        }
    }
    Ok(names)
}

type RawMask = (usize, usize, Vec<u8>);

/// Masks of every sample in every checkpoint, paired by file name. The final
/// checkpoint defines the sample set; each sample must exist everywhere.
fn read_checkpoints(dirs: &[PathBuf]) -> CliResult<Vec<(String, Vec<RawMask>)>> {
    let last = dirs.last().expect("at least two checkpoints");
    let names = png_names(last)?;
    if names.is_empty() {
        return Err(CliError::Param(format!("{}: no PNG masks found", last.display())));
    }
    let mut samples = Vec::with_capacity(names.len());
    for name in names {
        let mut masks = Vec::with_capacity(dirs.len());
        for dir in dirs {
            let p = dir.join(&name);
            if !p.is_file() {
                return Err(CliError::Param(format!("sample {name} is missing from checkpoint {}", dir.display())));
            }
            masks.push(read_png_codes(&p)?);
        }
        let id = Path::new(&name).file_stem().and_then(|s| s.to_str()).unwrap_or(&name).to_owned();
        samples.push((id, masks));
    }
    Ok(samples)
}

pub fn run(args: &StabilityArgs, cfg: &FileConfig, timings: bool) -> CliResult<()> {
    let tau = args.tau.unwrap_or(cfg.stability.tau);
    if !(0.0..=1.0).contains(&tau) {
        return Err(CliError::Param(format!("tau must be in [0, 1], got {tau}")));
    }
    let slice_count = args.slice_count.unwrap_or(cfg.stability.slice_count);

    let mut clock = Stopwatch::new(timings);
    let raw = clock.time("load", || read_checkpoints(&args.checkpoints))?;
    let max_label = raw
        .iter()
        .flat_map(|(_, masks)| masks.iter().flat_map(|(_, _, codes)| codes.iter().copied()))
        .max()
        .unwrap_or(0) as usize;
    let classes = args.classes.unwrap_or((max_label + 1).max(2));

    let samples = raw
        .into_iter()
        .map(|(sample_id, masks)| {
            let checkpoints = masks
                .into_iter()
                .map(|(w, h, codes)| LabelMask::new(w, h, classes, codes))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Sample { sample_id, slice_count, checkpoints })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let records = clock.time("score", || select_reliable(&samples, tau))?;

    let outputs = if args.out == "-" { Vec::new() } else { vec![args.out.clone()] };
    let report = RunReport {
        schema: crate::report::SCHEMA,
        command: "stability",
        parameters: Parameters {
            checkpoints: args.checkpoints.iter().map(|p| path_string(p)).collect(),
            tau,
            classes,
            slice_count,
        },
        timings: clock.finish(),
        outputs,
        warnings: Vec::new(),
        result: records,
    };
    emit(&report, &args.out)
}
