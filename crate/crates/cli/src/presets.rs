//! Preset execution and run-directory artifacts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nlflow::curvature::{ball_curvature, build_ball_table, default_table_radii, BallCurvatureTable};
use nlflow::grid::io::read_field_csv;
use nlflow::grid::{ball, interface_distance, BinarySet, GridGeometry};
use nlflow::mincut::assemble;
use nlflow::oracle::{radial_ode, RadialSolution};
use nlflow::perimeter::{GridPerimeter, PerimeterModel};
use nlflow::scheme::{default_levels, evolve_levelset, evolve_set, FlowTrace, StepConfig};
use nlflow::{Error, Result};

use crate::checks::{self, Check};
use crate::config::{ExperimentConfig, Initial, Preset};

/// Wall-clock limits for the timed checks, in seconds.
pub const EXACTNESS_LIMIT: f64 = 60.0;
pub const SHRINK_DISK_LIMIT: f64 = 120.0;
pub const FRACTIONAL_DISK_LIMIT: f64 = 300.0;

/// Disk runs are compared with the oracle down to this many cells of radius.
pub const MIN_TRACKED_CELLS: f64 = 8.0;

#[derive(Debug, Clone)]
pub struct RunReport {
    pub dir: PathBuf,
    pub checks: Vec<Check>,
    /// Flow traces produced by the run, by name.
    pub traces: Vec<(String, FlowTrace)>,
    pub seconds: f64,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(Check::passed)
    }
}

/// Progress messages; silent when `quiet`.
pub struct Log {
    pub quiet: bool,
}

impl Log {
    fn say(&self, msg: &str) {
        if !self.quiet {
            eprintln!("{msg}");
        }
    }
}

/// The set an initial shape describes.
pub fn initial_set(g: &GridGeometry, initial: &Initial) -> Result<BinarySet> {
    let dist = |x: [f64; 3], c: &[f64]| (0..g.dim()).map(|a| (x[a] - c[a]).powi(2)).sum::<f64>().sqrt();
    match initial {
        Initial::Disk { center, radius } => ball(g, center, *radius),
        Initial::Annulus { center, radius, inner_radius } => BinarySet::from_fn(*g, false, |x| {
            let d = dist(x, center);
            d <= *radius && d > *inner_radius
        }),
        Initial::Dumbbell { center, radius, separation, neck } => {
            let mut left = center.clone();
            let mut right = center.clone();
            left[0] -= 0.5 * separation;
            right[0] += 0.5 * separation;
            BinarySet::from_fn(*g, false, |x| {
                let bar = (x[0] - center[0]).abs() <= 0.5 * separation
                    && (1..g.dim()).all(|a| (x[a] - center[a]).abs() <= 0.5 * neck);
                bar || dist(x, &left) <= *radius || dist(x, &right) <= *radius
            })
        }
        Initial::Field { .. } => Err(Error::InvalidArgument("a field has no initial set".into())),
    }
}

/// Radial ODE with the model's ball curvature, integrated up to `horizon`.
pub fn disk_oracle(model: &PerimeterModel, dim: usize, r0: f64, h: f64, horizon: f64) -> Result<RadialSolution> {
    radial_ode(r0, |r| ball_curvature(model, dim, r).ok().map(|e| e.value), 0.1 * h, false, horizon)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

/// Executes the preset, writing artifacts under `config.output_dir`.
pub fn run(config: &ExperimentConfig, log: &Log) -> Result<RunReport> {
    let clock = Instant::now();
    let dir = config.output_dir.clone();
    fs::create_dir_all(&dir)?;
    write(&dir.join("config.echo"), &config.echo())?;
    let g = config.geometry()?;
    log.say(&format!("{}: {} on {:?} cells, writing to {}", config.preset.name(), config.perimeter, g.cells_per_axis(), dir.display()));

    let table = build_ball_table(&config.perimeter, g.dim(), &default_table_radii(&g, 10))?;
    table.write_csv(&dir.join("ball_table.csv"))?;

    let (checks, traces) = if config.preset.is_flow() {
        run_flow(config, &g, &table, &dir, log)?
    } else {
        run_suite(config, &g, &dir, log)?
    };
    let report = RunReport { dir, checks, traces, seconds: clock.elapsed().as_secs_f64() };
    write(&report.dir.join("summary.txt"), &summary(config, &report))?;
    Ok(report)
}

fn summary(config: &ExperimentConfig, report: &RunReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "preset: {}", config.preset.name());
    let _ = writeln!(s, "model: {}", config.perimeter);
    let _ = writeln!(s, "grid: {}^{} cells on [{}, {}]", config.grid.cells, config.grid.dim, config.grid.lower, config.grid.upper);
    let _ = writeln!(s, "seed: {}", config.seed);
    let _ = writeln!(s, "elapsed: {:.1} s", report.seconds);
    let fails = report.checks.iter().filter(|c| !c.passed()).count();
    let _ = writeln!(s, "result: {}", if fails == 0 { "PASS".to_string() } else { format!("FAIL ({fails} checks)") });
    let _ = writeln!(s);
    for c in &report.checks {
        let _ = writeln!(s, "{c}");
    }
    s
}

fn step_config(config: &ExperimentConfig) -> StepConfig {
    let mut cfg = StepConfig::new(config.perimeter, config.step.h);
    cfg.max_steps = config.step.max_steps;
    cfg.stop_on_empty = config.step.stop_on_empty;
    cfg.band = config.step.band;
    cfg
}

/// Writes the network of the first solve on the band around `set`.
fn write_first_network(config: &ExperimentConfig, g: &GridGeometry, set: &BinarySet, path: &Path) -> Result<()> {
    let p = GridPerimeter::new(config.perimeter, *g)?;
    let d = interface_distance(set)?;
    let unary: Vec<f64> = d.values().iter().map(|v| v / config.step.h).collect();
    let cell = g.cell_size();
    let free: Vec<bool> = match config.step.band {
        Some(b) => d.values().iter().map(|v| v.abs() <= b * cell).collect(),
        None => vec![true; g.len()],
    };
    let net = assemble(&p.band_terms(set.mask(), &free, Some(&unary))?, 1.0)?;
    net.write_dimacs(std::io::BufWriter::new(fs::File::create(path)?))
}

fn write_snapshots(config: &ExperimentConfig, trace: &FlowTrace, dir: &Path) -> Result<()> {
    if config.output.snapshot_every > 0 {
        let snaps = dir.join("snapshots");
        fs::create_dir_all(&snaps)?;
        trace.write_snapshots(&snaps, config.output.snapshot_every)?;
    }
    Ok(())
}

fn run_flow(
    config: &ExperimentConfig,
    g: &GridGeometry,
    table: &BallCurvatureTable,
    dir: &Path,
    log: &Log,
) -> Result<(Vec<Check>, Vec<(String, FlowTrace)>)> {
    let mut cfg = step_config(config);
    let name = config.preset.name();
    let mut checks = Vec::new();

    if let Initial::Field { path } = &config.initial {
        let u0 = read_field_csv(path)?;
        cfg.level_grid = default_levels(&u0, config.step.levels);
        log.say(&format!("level-set run with {} levels, {} steps", cfg.level_grid.len(), cfg.max_steps));
        let trace = evolve_levelset(&cfg, &u0)?;
        trace.write_csv(&dir.join("trace.csv"))?;
        write_snapshots(config, &trace, dir)?;
        write(&dir.join("plot.gp"), &plot_script(false))?;
        checks.push(checks::descent(&[(name, &trace)]));
        checks.push(Check::info("nesting repairs", format!("{} cells over {} steps", trace.nesting_repairs, trace.steps())));
        return Ok((checks, vec![(name.to_string(), trace)]));
    }

    let set0 = initial_set(g, &config.initial)?;
    let disk = match &config.initial {
        Initial::Disk { center, radius } => Some((center.clone(), *radius)),
        _ => None,
    };
    let oracle = match &disk {
        Some((_, r0)) => {
            let horizon = (cfg.max_steps.max(1) as f64 * cfg.h).max(2.0 * cfg.h);
            Some(disk_oracle(&config.perimeter, g.dim(), *r0, cfg.h, horizon)?)
        }
        None => None,
    };
    let min_radius = MIN_TRACKED_CELLS * g.cell_size();
    if config.preset == Preset::FractionalDisk {
        if let Some(o) = &oracle {
            // nothing is compared once the oracle radius drops below the floor
            let last = (0..=cfg.max_steps).find(|&k| o.radius_at(k as f64 * cfg.h) < min_radius);
            if let Some(k) = last {
                cfg.max_steps = cfg.max_steps.min(k);
            }
        }
    }
    if config.output.dimacs {
        write_first_network(config, g, &set0, &dir.join("first_step.dimacs"))?;
    }

    log.say(&format!("evolving {} cells for up to {} steps", set0.count(), cfg.max_steps));
    let clock = Instant::now();
    let trace = evolve_set(&cfg, &set0)?;
    let seconds = clock.elapsed().as_secs_f64();
    log.say(&format!("{} steps in {seconds:.1} s", trace.steps()));
    trace.write_csv(&dir.join("trace.csv"))?;
    write_snapshots(config, &trace, dir)?;
    write(&dir.join("plot.gp"), &plot_script(disk.is_some()))?;

    if let (Some((center, r0)), Some(oracle)) = (&disk, &oracle) {
        oracle.write_csv(&dir.join("oracle.csv"))?;
        let mut csv = String::from("t,radius,oracle_radius\n");
        for (k, sets) in trace.sets.iter().enumerate() {
            let t = k as f64 * trace.h;
            let _ = writeln!(csv, "{t:.10e},{:.10e},{:.10e}", checks::equivalent_radius(&sets[0]), oracle.radius_at(t));
        }
        write(&dir.join("radius.csv"), &csv)?;

        let local_plane = config.perimeter == PerimeterModel::Local && g.dim() == 2;
        match config.preset {
            Preset::ShrinkDisk if local_plane => {
                checks.push(checks::disk_area_law(&trace, *r0, seconds, SHRINK_DISK_LIMIT));
            }
            Preset::FractionalDisk if matches!(config.perimeter, PerimeterModel::Fractional { .. }) => {
                checks.push(checks::radial_tracking(Some(3), &trace, oracle, min_radius, seconds, FRACTIONAL_DISK_LIMIT));
            }
            _ => {}
        }
        if !checks.iter().any(|c| c.criterion == Some(3)) {
            checks.push(checks::radial_tracking(None, &trace, oracle, min_radius, seconds, f64::INFINITY));
        }
        checks.push(checks::confinement(&trace, center, *r0, table.k_bound));
    }
    if matches!(config.initial, Initial::Dumbbell { .. }) {
        checks.push(pinch_off(&trace));
    }
    checks.push(checks::descent(&[(name, &trace)]));
    Ok((checks, vec![(name.to_string(), trace)]))
}

/// Connected components along the run.
fn pinch_off(trace: &FlowTrace) -> Check {
    let comps: Vec<usize> = trace.sets.iter().map(|s| s[0].components()).collect();
    let split = comps.windows(2).position(|w| w[1] > w[0]).map(|k| k + 1);
    let gone = checks::extinction_time(trace);
    Check::info(
        "topology",
        format!(
            "components {} -> {}; first split at {}; extinction {}",
            comps[0],
            comps.last().unwrap(),
            split.map_or("none".to_string(), |k| format!("step {k} (t = {:.4})", k as f64 * trace.h)),
            gone.map_or("none".to_string(), |t| format!("t = {t:.4}"))
        ),
    )
}

fn plot_script(disk: bool) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset key autotitle columnhead\nset xlabel 't'\n\
         set terminal pngcairo size 800,600\nset output 'energy.png'\nplot 'trace.csv' using 2:4 with linespoints title 'J(E)'\n",
    );
    if disk {
        s.push_str(
            "set output 'radius.png'\nplot 'radius.csv' using 1:2 with points title 'flow', \
             'radius.csv' using 1:3 with lines title 'radial ODE'\n",
        );
    }
    s
}

fn run_suite(
    config: &ExperimentConfig,
    g: &GridGeometry,
    dir: &Path,
    log: &Log,
) -> Result<(Vec<Check>, Vec<(String, FlowTrace)>)> {
    let seed = config.seed;
    let mut checks = Vec::new();
    let mut traces = Vec::new();
    let mut push = |c: Check| {
        log.say(&format!("{} done", c.name));
        checks.push(c);
    };
    match config.preset {
        Preset::ComparisonSuite => push(checks::comparison(g, config.suite.pairs, seed)?),
        Preset::PropertySuite => {
            push(checks::submodularity(g, config.suite.trials, seed)?);
            push(checks::coarea(g, 20, seed)?);
            let (c, trace) = checks::superlevel_consistency(g, config.step.h, config.step.max_steps, config.step.levels)?;
            push(c);
            trace.write_csv(&dir.join("trace.csv"))?;
            push(checks::descent(&[("property-suite level-set run", &trace)]));
            traces.push(("property-suite".to_string(), trace));
        }
        Preset::OracleSuite => {
            push(checks::exactness(config.suite.instances, seed, EXACTNESS_LIMIT)?);
            let models = checks::probe_models(g);
            push(checks::first_variation(g, &models)?);
            let half = 0.5 * g.extent()[0];
            let radii: Vec<f64> = [0.2, 0.3, 0.4, 0.5, 0.6].iter().map(|f| f * half).collect();
            push(checks::curvature_cross(g, &models, &radii)?);
            let r0 = match &config.initial {
                Initial::Disk { radius, .. } => *radius,
                _ => 0.35 * g.extent()[0],
            };
            for m in &models {
                let o = disk_oracle(m, g.dim(), r0, config.step.h, 4.0 * r0 * r0)?;
                o.write_csv(&dir.join(format!("oracle_{}.csv", m.kind())))?;
                push(Check::info(
                    &format!("radial oracle {}", m.kind()),
                    format!("r0 = {r0}, extinction {}", o.extinction_time.map_or("none".to_string(), |t| format!("{t:.5}"))),
                ));
            }
        }
        _ => unreachable!("flow presets are handled by run_flow"),
    }
    Ok((checks, traces))
}
