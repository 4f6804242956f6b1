use serde::Serialize;

use sbs_core::focus_stack::{sbs_stack, SliceTransform, StackParams};
use sbs_core::image_io::{load_stack, save_png16, save_png8, StackSource};

use crate::args::{BitDepth, StackArgs};
use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::report::{emit, path_string, RunReport, Stopwatch};

#[derive(Serialize)]
struct Parameters<'a> {
    input: String,
    bit_depth: u8,
    #[serde(flatten)]
    stack: &'a StackParams,
}

#[derive(Serialize)]
struct SliceEntry {
    z: usize,
    score: u64,
    selected: bool,
}

#[derive(Serialize)]
struct Summary {
    z_count: usize,
    slices: Vec<SliceEntry>,
    /// Best score first.
    selected: Vec<usize>,
    fused_order: Vec<usize>,
    reference: Option<usize>,
    transforms: Vec<SliceTransform>,
}

fn resolve(args: &StackArgs, cfg: &FileConfig) -> StackParams {
    let mut p = StackParams {
        k: args.k.unwrap_or(cfg.stack.k),
        align: args.align || cfg.stack.align,
        fusion_sigma: args.fusion_sigma.unwrap_or(cfg.stack.fusion_sigma),
        hifst: cfg.blur_map.clone(),
        ..Default::default()
    };
    p.alignment.seed = args.seed.unwrap_or(cfg.stack.seed);
    args.hifst.apply(&mut p.hifst);
    p
}

pub fn run(args: &StackArgs, cfg: &FileConfig, timings: bool) -> CliResult<()> {
    let params = resolve(args, cfg);
    // Everything except k can be checked before touching the input.
    params.hifst.validate()?;
    if params.k == 0 {
        return Err(CliError::Param(format!("k must be at least 1, got {}", params.k)));
    }

    let mut clock = Stopwatch::new(timings);
    let source = StackSource::from_path(&args.input)?;
    let stack = clock.time("load", || load_stack(&source))?;
    params.validate(stack.z_count())?;

    let out = sbs_stack(&stack, &params)?;
    clock.record("blur_maps", out.timings.blur_maps_ms);
    clock.record("selection", out.timings.selection_ms);
    clock.record("alignment", out.timings.alignment_ms);
    clock.record("fusion", out.timings.fusion_ms);

    let mut outputs = Vec::new();
    clock.time("write", || -> CliResult<()> {
        match args.bit_depth {
            BitDepth::Eight => save_png8(&out.image, &args.out)?,
            BitDepth::Sixteen => save_png16(&out.image, &args.out)?,
        }
        outputs.push(path_string(&args.out));
        if let Some(dir) = &args.maps {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            let width = stack.z_count().saturating_sub(1).to_string().len().max(2);
            for (z, map) in out.maps.iter().enumerate() {
                let p = dir.join(format!("map_{z:0width$}.pfm"));
                map.save_pfm(&p)?;
                outputs.push(path_string(&p));
            }
        }
        Ok(())
    })?;

    if let Some(dest) = &args.report {
        let r = out.report;
        let slices = r
            .scores
            .iter()
            .map(|s| SliceEntry { z: s.z_index, score: s.score, selected: r.selected.contains(&s.z_index) })
            .collect();
        let report = RunReport {
            schema: crate::report::SCHEMA,
            command: "stack",
            parameters: Parameters {
                input: path_string(&args.input),
                bit_depth: match args.bit_depth {
                    BitDepth::Eight => 8,
                    BitDepth::Sixteen => 16,
                },
                stack: &params,
            },
            timings: clock.finish(),
            outputs,
            warnings: r.warnings,
            result: Summary {
                z_count: stack.z_count(),
                slices,
                selected: r.selected,
                fused_order: r.fused_order,
                reference: r.reference,
                transforms: r.transforms,
            },
        };
        emit(&report, dest)?;
    }
    Ok(())
}
