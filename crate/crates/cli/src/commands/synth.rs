use std::path::{Path, PathBuf};

use serde::Serialize;

use sbs_core::image_io::{save_png16, save_png_codes, ManifestEntry, StackManifest};
use sbs_core::synth::{generate_zstack, SynthSpec};

use crate::args::SynthArgs;
use crate::config::FileConfig;
use crate::error::{CliError, CliResult};
use crate::report::{emit, path_string, RunReport, Stopwatch};

/// Contents of `ground_truth.json`.
#[derive(Serialize)]
struct GroundTruthFile<'a> {
    schema: u32,
    spec: &'a SynthSpec,
    sharp_fractions: &'a [f64],
    sharp_slices: Vec<usize>,
}

#[derive(Serialize)]
struct Summary {
    z_count: usize,
    sharp_slices: Vec<usize>,
}

fn resolve(args: &SynthArgs, cfg: &FileConfig) -> CliResult<SynthSpec> {
    if let Some(path) = &args.spec {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let spec: SynthSpec =
            serde_json::from_str(&text).map_err(|e| CliError::Param(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        return Ok(spec);
    }
    let mut series = cfg.synth;
    macro_rules! flag {
        ($field:ident, $arg:expr) => {
            if let Some(v) = $arg {
                series.$field = v.into();
            }
        };
    }
    flag!(seed, args.seed);
    flag!(width, args.width);
    flag!(height, args.height);
    flag!(z_count, args.z_count);
    flag!(in_focus, args.in_focus);
    flag!(noise_sigma, args.noise);
    flag!(pattern, args.pattern);
    Ok(series.to_spec()?)
}

fn create_dir(p: &Path) -> CliResult<()> {
    std::fs::create_dir_all(p).map_err(|e| CliError::io(p, e))
}

pub fn run(args: &SynthArgs, cfg: &FileConfig, timings: bool) -> CliResult<()> {
    let spec = resolve(args, cfg)?;
    let mut clock = Stopwatch::new(timings);
    let (stack, truth) = clock.time("generate", || generate_zstack(&spec))?;

    let out = &args.out;
    let (masks, truth_dir) = (out.join("masks"), out.join("truth"));
    let mut outputs = Vec::new();
    clock.time("write", || -> CliResult<()> {
        for d in [out, &masks, &truth_dir] {
            create_dir(d)?;
        }
        let width = stack.z_count().saturating_sub(1).to_string().len().max(2);
        let mut entries = Vec::with_capacity(stack.z_count());
        for (z, slice) in stack.slices().iter().enumerate() {
            let name = format!("slice_{z:0width$}.png");
            let p = out.join(&name);
            save_png16(slice, &p)?;
            outputs.push(path_string(&p));
            let m = &truth.sharp_masks[z];
            let mp = masks.join(&name);
            save_png_codes(&mp, m.width, m.height, &m.to_codes())?;
            outputs.push(path_string(&mp));
            entries.push(ManifestEntry { z, path: PathBuf::from(name) });
        }
        let sharp = truth_dir.join("sharp.png");
        save_png16(&truth.sharp_image, &sharp)?;
        outputs.push(path_string(&sharp));

        let manifest = out.join("manifest.json");
        StackManifest::new(entries, out.clone())?.write(&manifest)?;
        outputs.push(path_string(&manifest));

        let gt = out.join("ground_truth.json");
        let body = GroundTruthFile {
            schema: crate::report::SCHEMA,
            spec: &spec,
            sharp_fractions: &truth.sharp_fractions,
            sharp_slices: truth.sharp_slices(),
        };
        emit(&body, &path_string(&gt))?;
        outputs.push(path_string(&gt));
        Ok(())
    })?;

    if let Some(dest) = &args.report {
        let report = RunReport {
            schema: crate::report::SCHEMA,
            command: "synth",
            parameters: &spec,
            timings: clock.finish(),
            outputs,
            warnings: Vec::new(),
            result: Summary { z_count: stack.z_count(), sharp_slices: truth.sharp_slices() },
        };
        emit(&report, dest)?;
    }
    Ok(())
}
