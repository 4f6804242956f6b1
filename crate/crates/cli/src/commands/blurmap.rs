use serde::Serialize;

use sbs_core::blur_map::{blur_detection_map, HifstParams};
use sbs_core::image_io::{load_image, save_png8};

use crate::args::BlurmapArgs;
use crate::config::FileConfig;
use crate::error::CliResult;
use crate::report::{emit, path_string, RunReport, Stopwatch};

#[derive(Serialize)]
struct Parameters<'a> {
    input: String,
    hifst: &'a HifstParams,
}

#[derive(Serialize)]
struct Summary {
    width: usize,
    height: usize,
    mean: f64,
}

pub fn run(args: &BlurmapArgs, cfg: &FileConfig, timings: bool) -> CliResult<()> {
    let mut params = cfg.blur_map.clone();
    args.hifst.apply(&mut params);
    params.validate()?;

    let mut clock = Stopwatch::new(timings);
    let img = clock.time("load", || load_image(&args.input))?;
    let map = clock.time("blur_map", || blur_detection_map(&img, &params))?;

    let mut outputs = Vec::new();
    clock.time("write", || -> CliResult<()> {
        map.save_pfm(&args.out)?;
        outputs.push(path_string(&args.out));
        if let Some(p) = &args.png {
            map.save_png(p)?;
            outputs.push(path_string(p));
        }
        if let Some(p) = &args.overlay {
            save_png8(&map.overlay(&img, 0.5)?, p)?;
            outputs.push(path_string(p));
        }
        Ok(())
    })?;

    if let Some(dest) = &args.report {
        let report = RunReport {
            schema: crate::report::SCHEMA,
            command: "blurmap",
            parameters: Parameters { input: path_string(&args.input), hifst: &params },
            timings: clock.finish(),
            outputs,
            warnings: Vec::new(),
            result: Summary { width: img.width(), height: img.height(), mean: map.mean() },
        };
        emit(&report, dest)?;
    }
    Ok(())
}
