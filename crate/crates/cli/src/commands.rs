use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use qaoa_noise::closedform::{
    fit_cost, fit_fidelity, model_cost, model_fidelity, CostFitReport, FidelityFitReport,
};
use qaoa_noise::decomposition::{mlevel_curves, reconstruct_cost, reconstruct_fidelity};
use qaoa_noise::engine::{noisy_state, qaoa_state, AngleSchedule};
use qaoa_noise::optimize::{optimize_angles, OptimizationReport};
use qaoa_noise::seed::derive;
use qaoa_noise::tradeoff::{
    default_p_grid, find_crossing_brackets, refine_crossings_with_engine, sweep_with,
    write_crossings_csv, DepthFits, ReoptimizeSettings, SweepOptions,
};
use qaoa_noise::{Error, IsingInstance};
use serde::Serialize;
use serde_json::{json, Value};

use crate::{AngleSource, Failure, GenArgs, InstanceSource, MlevelArgs, OptimizeArgs, SweepArgs};

type Outcome = Result<(), Failure>;

pub(crate) fn prepare_dir(dir: &Path) -> qaoa_noise::Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> qaoa_noise::Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

/// Records every effective parameter of a run next to its outputs.
fn write_manifest(
    dir: &Path,
    command: &str,
    args: &impl Serialize,
    instance: Option<&IsingInstance>,
    outputs: &[&str],
) -> qaoa_noise::Result<()> {
    let manifest = json!({
        "tool": "qaoa-noise",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "args": args,
        "instance": instance,
        "outputs": outputs,
    });
    write_json(&dir.join("manifest.json"), &manifest)
}

fn load_instance(source: &InstanceSource) -> qaoa_noise::Result<IsingInstance> {
    match (&source.instance, &source.generate) {
        (Some(path), _) => IsingInstance::read(path),
        (None, Some(g)) => IsingInstance::random(g.n, g.ensemble, g.seed),
        (None, None) => Err(Error::Validation("an instance source is required".into())),
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &PathBuf) -> qaoa_noise::Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.clone(),
        source: e,
    })?;
    Ok(serde_json::from_str(&text)?)
}

fn resolve_angles(
    source: &AngleSource,
    instance: &IsingInstance,
    depth: usize,
    restarts: usize,
    seed: u64,
) -> qaoa_noise::Result<(AngleSchedule, Option<OptimizationReport>)> {
    let angles = match (&source.angles, &source.angles_file) {
        (Some(flat), _) => AngleSchedule::from_flat(flat)?,
        (None, Some(path)) => read_json(path)?,
        (None, None) => {
            let report = optimize_angles(instance, depth, None, restarts, derive(seed, &[depth as u64]))?;
            return Ok((report.best_angles.clone(), Some(report)));
        }
    };
    if angles.depth() != depth {
        return Err(Error::Validation(format!(
            "angles have {} rounds but depth is {depth}",
            angles.depth()
        )));
    }
    Ok((angles, None))
}

pub fn gen(args: &GenArgs) -> Outcome {
    let instance = IsingInstance::random(args.n, args.ensemble, args.seed)?;
    prepare_dir(&args.out)?;
    instance.write(args.out.join("instance.json"))?;
    write_manifest(&args.out, "gen", args, Some(&instance), &["instance.json"])?;
    Ok(())
}

pub fn mlevel(args: &MlevelArgs) -> Outcome {
    let instance = load_instance(&args.source)?;
    let noise = args.noise.model(0.0)?;
    if let Some(ps) = &args.p {
        for &p in ps.iter() {
            noise.with_p(p)?;
        }
    }
    let (angles, report) = resolve_angles(&args.angles, &instance, args.depth, args.restarts, args.seed)?;
    let curves = mlevel_curves(&instance, &angles, &noise, args.budget, args.seed)?;
    let slots = curves.fidelity.n_slots;

    let ffit = fit_fidelity(&curves.fidelity);
    let cfit = fit_cost(&curves.cost);
    let mut evaluations = Vec::new();
    if let Some(ps) = &args.p {
        let ideal = qaoa_state(&instance, &angles)?;
        let diag = instance.diagonal()?;
        for &p in ps.iter() {
            let rho = noisy_state(&instance, &angles, &noise.with_p(p)?)?;
            let exact = curves.fidelity.is_exact();
            evaluations.push(json!({
                "p": p,
                "fidelity_exact": rho.fidelity(&ideal)?,
                "cost_exact": rho.expected_cost(&diag)?,
                "fidelity_reconstructed": if exact { Some(reconstruct_fidelity(&curves.fidelity, p)?) } else { None },
                "cost_reconstructed": if exact { Some(reconstruct_cost(&curves.cost, p)?) } else { None },
                "fidelity_model": ffit.as_ref().ok().map(|f| model_fidelity(f, slots, p)),
                "cost_model": cfit.as_ref().ok().map(|f| model_cost(f, slots, p)),
            }));
        }
    }
    let fit_json = |r: Result<Value, &Error>| r.unwrap_or_else(|e| json!({ "error": e.to_string() }));
    let fits = json!({
        "n_slots": slots,
        "exact": curves.fidelity.is_exact() && curves.cost.is_exact(),
        "fidelity": fit_json(ffit.as_ref().map(|f| json!(FidelityFitReport::from(f)))),
        "cost": fit_json(cfit.as_ref().map(|f| json!(CostFitReport::from(f)))),
        "evaluations": evaluations,
    });

    prepare_dir(&args.out)?;
    write_json(&args.out.join("angles.json"), &angles)?;
    curves.fidelity.write_csv_file(args.out.join("f_m.csv"))?;
    curves.cost.write_csv_file(args.out.join("c_m.csv"))?;
    write_json(&args.out.join("fits.json"), &fits)?;
    let mut outputs = vec!["angles.json", "f_m.csv", "c_m.csv", "fits.json"];
    if let Some(report) = &report {
        write_json(&args.out.join("optimize.json"), report)?;
        outputs.push("optimize.json");
    }
    write_manifest(&args.out, "mlevel", args, Some(&instance), &outputs)?;
    Ok(())
}

pub fn sweep(args: &SweepArgs) -> Outcome {
    let instance = load_instance(&args.source)?;
    let noise = args.noise.model(0.0)?;
    let grid = match (&args.p, &args.p_grid) {
        (Some(p), _) | (None, Some(p)) => p.0.clone(),
        (None, None) => default_p_grid(),
    };
    let angles: BTreeMap<usize, AngleSchedule> = match &args.angles_file {
        Some(path) => read_json(path)?,
        None => qaoa_noise::tradeoff::noiseless_angles(&instance, &args.depths, args.restarts, args.seed)?,
    };

    let mut fits = BTreeMap::new();
    if args.fit {
        for &d in args.depths.iter() {
            let a = angles
                .get(&d)
                .ok_or_else(|| Error::Validation(format!("no angle schedule for depth {d}")))?;
            let curves = mlevel_curves(&instance, a, &noise, args.budget, derive(args.seed, &[d as u64]))?;
            fits.insert(
                d,
                DepthFits {
                    cost: Some(fit_cost(&curves.cost)?),
                    c_ideal: None,
                    fidelity: Some(fit_fidelity(&curves.fidelity)?),
                },
            );
        }
    }
    let options = SweepOptions {
        reoptimize: args.reoptimize.then_some(ReoptimizeSettings {
            restarts: args.restarts,
            seed: args.seed,
        }),
    };
    let table = sweep_with(&instance, &args.depths, &grid, &noise, &angles, &fits, &options)?;

    // refinement re-evaluates fixed schedules, so it only applies without re-optimisation
    let mut crossings = Vec::new();
    for (i, &da) in args.depths.iter().enumerate() {
        for &db in &args.depths[i + 1..] {
            let brackets = find_crossing_brackets(&table, da, db)?;
            if options.reoptimize.is_none() {
                crossings.extend(refine_crossings_with_engine(&instance, &noise, &angles, &brackets)?);
            } else {
                crossings.extend(brackets);
            }
        }
    }

    prepare_dir(&args.out)?;
    write_json(&args.out.join("angles.json"), &angles)?;
    table.write_csv_file(args.out.join("sweep.csv"))?;
    let path = args.out.join("crossings.csv");
    let file = std::fs::File::create(&path).map_err(|e| Error::Io { path, source: e })?;
    write_crossings_csv(&crossings, file)?;
    write_json(&args.out.join("summary.json"), &table.summaries)?;
    let mut outputs = vec!["angles.json", "sweep.csv", "crossings.csv", "summary.json"];
    if args.fit {
        write_json(&args.out.join("fits.json"), &fits)?;
        outputs.push("fits.json");
    }
    write_manifest(&args.out, "sweep", args, Some(&instance), &outputs)?;
    Ok(())
}

pub fn optimize(args: &OptimizeArgs) -> Outcome {
    let instance = load_instance(&args.source)?;
    let noise = args.p.map(|p| args.noise.model(p)).transpose()?;
    let mut reports = BTreeMap::new();
    for &d in args.depths.iter() {
        let report = optimize_angles(&instance, d, noise.as_ref(), args.restarts, derive(args.seed, &[d as u64]))?;
        reports.insert(d, report);
    }
    let (e0, ground) = instance.ground_energy()?;
    let out = json!({
        "ground_energy": e0,
        "ground_state": ground.to_string(),
        "depths": reports,
    });
    prepare_dir(&args.out)?;
    write_json(&args.out.join("optimize.json"), &out)?;
    write_manifest(&args.out, "optimize", args, Some(&instance), &["optimize.json"])?;
    Ok(())
}
