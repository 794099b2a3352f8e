//! Minimizing movements: the one-step operators `T_h^±` on sets, the
//! level-set operator built from them, and the time loops.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::io::write_pgm;
use crate::grid::{interface_distance, BinarySet, GridGeometry, ScalarField};
use crate::mincut::minimize;
use crate::perimeter::{GridPerimeter, InteractionGraph, PerimeterModel};

/// Relative tolerance granted to energy comparisons, times the magnitude of
/// the step's energy terms.
pub const QUANTUM: f64 = 1e-12;

/// Levels used when a level-set run does not name its own.
pub const DEFAULT_LEVEL_COUNT: usize = 33;

#[derive(Debug, Clone, PartialEq)]
pub struct StepConfig {
    pub h: f64,
    pub model: PerimeterModel,
    /// Strictly increasing; empty means `DEFAULT_LEVEL_COUNT` levels over the
    /// range of the initial field.
    pub level_grid: Vec<f64>,
    pub max_steps: usize,
    pub stop_on_empty: bool,
    /// Half-width, in cells, of the band of free cells around the interface;
    /// `None` solves on the whole grid.
    pub band: Option<f64>,
}

impl StepConfig {
    pub fn new(model: PerimeterModel, h: f64) -> Self {
        StepConfig { h, model, level_grid: Vec::new(), max_steps: 100, stop_on_empty: true, band: None }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::InvalidArgument(format!("time step must be positive, got {}", self.h)));
        }
        if self.level_grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidLevels("level grid must be strictly increasing".into()));
        }
        if let Some(b) = self.band {
            if !(b >= 2.0) {
                return Err(Error::InvalidArgument(format!("band must be at least two cells, got {b}")));
            }
        }
        Ok(())
    }
}

/// Outcome of one application of `T_h^±`.
#[derive(Debug, Clone)]
pub struct Step {
    pub minimal: BinarySet,
    pub maximal: BinarySet,
    /// Energy tolerance for this step: `QUANTUM` times the term magnitudes.
    pub quantum: f64,
    /// Number of cells left free in the final solve.
    pub free_cells: usize,
}

/// A perimeter bound to a grid and a time step.
#[derive(Debug, Clone)]
pub struct Scheme {
    perimeter: GridPerimeter,
    h: f64,
    band: Option<f64>,
}

impl Scheme {
    pub fn new(model: PerimeterModel, geometry: GridGeometry, h: f64, band: Option<f64>) -> Result<Self> {
        let mut cfg = StepConfig::new(model, h);
        cfg.band = band;
        cfg.validate()?;
        Ok(Scheme { perimeter: GridPerimeter::new(model, geometry)?, h, band })
    }

    pub fn from_config(config: &StepConfig, geometry: GridGeometry) -> Result<Self> {
        config.validate()?;
        Self::new(config.model, geometry, config.h, config.band)
    }

    pub fn perimeter(&self) -> &GridPerimeter {
        &self.perimeter
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn geometry(&self) -> &GridGeometry {
        self.perimeter.geometry()
    }

    /// `T_h^±` of a bounded set.
    pub fn step_bounded(&self, set: &BinarySet) -> Result<Step> {
        let g = *self.geometry();
        if set.geometry() != &g {
            return Err(Error::GeometryMismatch);
        }
        if !set.is_bounded() {
            return Err(Error::InvalidArgument("step_bounded needs a bounded set".into()));
        }
        if set.count() == 0 {
            let empty = BinarySet::empty(g);
            return Ok(Step { minimal: empty.clone(), maximal: empty, quantum: 0.0, free_cells: 0 });
        }
        let d = interface_distance(set)?;
        let unary: Vec<f64> = d.values().iter().map(|v| v / self.h).collect();
        let cell = g.cell_size();
        let whole = g.cells_per_axis().iter().copied().max().unwrap_or(1) as f64;
        let mut band = self.band.filter(|&b| b < whole);
        loop {
            let free: Vec<bool> = match band {
                Some(b) => d.values().iter().map(|v| v.abs() <= b * cell).collect(),
                None => vec![true; g.len()],
            };
            let graph = self.perimeter.band_terms(set.mask(), &free, Some(&unary))?;
            let cut = minimize(&graph, 1.0)?;
            if let Some(b) = band {
                let edge = (b - 1.0) * cell;
                let reaches_edge = graph.cells.iter().enumerate().any(|(k, &c)| {
                    let was = set.mask()[c as usize];
                    (cut.minimal[k] != was || cut.maximal[k] != was) && d.values()[c as usize].abs() >= edge
                });
                if reaches_edge {
                    band = Some(2.0 * b).filter(|&w| w < whole);
                    continue;
                }
            }
            let (minimal, maximal) = cut.sets(&graph, set)?;
            return Ok(Step { minimal, maximal, quantum: QUANTUM * magnitude(&graph), free_cells: graph.node_count });
        }
    }

    /// `T_h^± E = R^N \ T_h^∓ (R^N \ E)` for a set with bounded complement.
    pub fn step_unbounded(&self, set: &BinarySet) -> Result<Step> {
        if set.is_bounded() {
            return Err(Error::InvalidArgument("step_unbounded needs a set with bounded complement".into()));
        }
        let s = self.step_bounded(&set.complement())?;
        Ok(Step { minimal: s.maximal.complement(), maximal: s.minimal.complement(), quantum: s.quantum, free_cells: s.free_cells })
    }

    pub fn step(&self, set: &BinarySet) -> Result<Step> {
        if set.is_bounded() {
            self.step_bounded(set)
        } else {
            self.step_unbounded(set)
        }
    }

    /// `(1/h) ∫_{E Δ F} dist(x, ∂E)`.
    pub fn dissipation(&self, from: &BinarySet, to: &BinarySet) -> Result<f64> {
        dissipation(from, to, self.h)
    }

    /// One step of the level-set operator on the levels of `levels`.
    pub fn levelset_step(&self, u: &ScalarField, levels: &[f64]) -> Result<LevelStep> {
        if u.geometry() != self.geometry() {
            return Err(Error::GeometryMismatch);
        }
        check_levels(u, levels)?;
        let inputs: Vec<BinarySet> = levels.iter().map(|&l| u.superlevel(l)).collect::<Result<_>>()?;
        let steps: Vec<Step> = inputs.par_iter().map(|s| self.step(s)).collect::<Result<_>>()?;
        let quantum = steps.iter().map(|s| s.quantum).collect();
        let mut outputs: Vec<BinarySet> = steps.into_iter().map(|s| s.minimal).collect();
        let mut repairs = vec![0usize; levels.len()];
        for i in 1..outputs.len() {
            if !outputs[i].is_subset_of(&outputs[i - 1]) {
                let fixed = outputs[i].intersection(&outputs[i - 1])?;
                repairs[i] = fixed.symmetric_difference_count(&outputs[i]);
                outputs[i] = fixed;
            }
        }
        let g = *self.geometry();
        let mut count = vec![0usize; g.len()];
        for out in &outputs {
            for (c, &b) in count.iter_mut().zip(out.mask()) {
                *c += b as usize;
            }
        }
        let outside_count = outputs.iter().filter(|o| !o.is_bounded()).count();
        if levels[outside_count.min(levels.len() - 1)] != u.outside_value() {
            return Err(Error::Invariant("exterior value not preserved by the level-set step".into()));
        }
        let values = count.iter().map(|&c| levels[c.min(levels.len() - 1)]).collect();
        let field = ScalarField::new(g, values, u.outside_value())?;
        Ok(LevelStep { field, inputs, outputs, repairs, quantum })
    }
}

/// Per-level detail of one level-set step.
#[derive(Debug, Clone)]
pub struct LevelStep {
    pub field: ScalarField,
    /// `{u > λ_i}`.
    pub inputs: Vec<BinarySet>,
    /// `T_h^- {u > λ_i}` after nesting repair; equal to `{u' > λ_i}`.
    pub outputs: Vec<BinarySet>,
    /// Cells removed from each output to restore nesting.
    pub repairs: Vec<usize>,
    pub quantum: Vec<f64>,
}

fn magnitude(graph: &InteractionGraph) -> f64 {
    graph.unary.iter().map(|u| u.abs()).sum::<f64>()
        + graph.pairwise.iter().map(|t| t.2).sum::<f64>()
        + graph.terminal.iter().map(|t| t.2).sum::<f64>()
        + graph.aux_cost.iter().map(|c| c.abs()).sum::<f64>()
}

fn check_levels(u: &ScalarField, levels: &[f64]) -> Result<()> {
    if levels.len() < 2 || levels.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidLevels("need at least two strictly increasing levels".into()));
    }
    if levels[0] > u.min() || *levels.last().unwrap() < u.max() {
        return Err(Error::InvalidLevels(format!(
            "levels [{}, {}] do not cover the field range [{}, {}]",
            levels[0],
            levels.last().unwrap(),
            u.min(),
            u.max()
        )));
    }
    if !levels.contains(&u.outside_value()) {
        return Err(Error::InvalidLevels(format!("outside value {} is not a level", u.outside_value())));
    }
    Ok(())
}

/// `count` uniform levels over the range of `u`, with the level nearest to
/// the outside value moved onto it.
pub fn default_levels(u: &ScalarField, count: usize) -> Vec<f64> {
    let (lo, hi) = (u.min(), u.max());
    if !(hi > lo) || count < 2 {
        return vec![lo, lo + 1.0];
    }
    let mut levels: Vec<f64> = (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect();
    levels[count - 1] = hi;
    let out = u.outside_value();
    let k = (0..count).min_by(|&a, &b| (levels[a] - out).abs().total_cmp(&(levels[b] - out).abs())).unwrap();
    levels[k] = out;
    levels
}

/// `(1/h) ∫_{E Δ F} dist(x, ∂E)` with the distance measured as in the step.
pub fn dissipation(from: &BinarySet, to: &BinarySet, h: f64) -> Result<f64> {
    if from.geometry() != to.geometry() {
        return Err(Error::GeometryMismatch);
    }
    if from.count() == 0 || from.mask().iter().all(|&b| b) {
        return Ok(0.0);
    }
    let d = interface_distance(from)?;
    let cellvol = from.geometry().cell_volume();
    let s: f64 = from
        .mask()
        .iter()
        .zip(to.mask())
        .zip(d.values())
        .filter(|((a, b), _)| a != b)
        .map(|(_, v)| v.abs())
        .sum();
    Ok(s * cellvol / h)
}

pub fn step_bounded(model: &PerimeterModel, set: &BinarySet, h: f64) -> Result<(BinarySet, BinarySet)> {
    let s = Scheme::new(*model, *set.geometry(), h, None)?.step_bounded(set)?;
    Ok((s.minimal, s.maximal))
}

pub fn step_unbounded(model: &PerimeterModel, set: &BinarySet, h: f64) -> Result<(BinarySet, BinarySet)> {
    let s = Scheme::new(*model, *set.geometry(), h, None)?.step_unbounded(set)?;
    Ok((s.minimal, s.maximal))
}

pub fn levelset_step(model: &PerimeterModel, u: &ScalarField, h: f64, levels: &[f64]) -> Result<ScalarField> {
    Ok(Scheme::new(*model, *u.geometry(), h, None)?.levelset_step(u, levels)?.field)
}

/// One row of `trace.csv`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub time: f64,
    pub level: f64,
    pub energy: f64,
    /// Measure of the set; infinite for sets with bounded complement.
    pub volume: f64,
    pub dissipation: f64,
    pub nesting_repairs: usize,
}

/// A step whose energy rose above `J(E_k) - dissipation` by more than the
/// step's quantum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentViolation {
    pub step: usize,
    pub level_index: usize,
    pub excess: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FlowTrace {
    pub h: f64,
    pub levels: Vec<f64>,
    pub rows: Vec<TraceRow>,
    /// `sets[k][i]`: the set of level `i` after `k` steps.
    pub sets: Vec<Vec<BinarySet>>,
    /// Fields after each step, for level-set runs.
    pub fields: Vec<ScalarField>,
    pub descent_violations: Vec<DescentViolation>,
    /// Cells with `T_h^- E` outside `T_h^+ E`; always zero for an exact solver.
    pub selection_violations: usize,
    pub nesting_repairs: usize,
    /// `sup |u_k - u_{k-1}|` per step, for level-set runs.
    pub time_modulus: Vec<f64>,
    /// Largest number of free cells in any solve.
    pub max_free_cells: usize,
}

impl FlowTrace {
    pub fn times(&self) -> Vec<f64> {
        (0..self.sets.len()).map(|k| k as f64 * self.h).collect()
    }

    pub fn steps(&self) -> usize {
        self.sets.len().saturating_sub(1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("step,time,level,energy,volume,dissipation,nesting_repairs\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{:.10e},{},{:.12e},{:.12e},{:.12e},{}",
                r.step, r.time, r.level, r.energy, r.volume, r.dissipation, r.nesting_repairs
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    /// Writes `snap_<step>_<levelindex>.pgm` (with header sidecars) for every
    /// `every`-th step and the last one.
    pub fn write_snapshots(&self, dir: &Path, every: usize) -> Result<usize> {
        let every = every.max(1);
        let last = self.sets.len().saturating_sub(1);
        let mut written = 0;
        for (k, sets) in self.sets.iter().enumerate() {
            if k % every != 0 && k != last {
                continue;
            }
            for (i, set) in sets.iter().enumerate() {
                write_pgm(set, &dir.join(format!("snap_{k}_{i}.pgm")))?;
                written += 1;
            }
        }
        Ok(written)
    }

    fn record(&mut self, step: usize, level_index: usize, set: &BinarySet, energy: f64, dissipation: f64, repairs: usize) {
        self.rows.push(TraceRow {
            step,
            time: step as f64 * self.h,
            level: self.levels[level_index],
            energy,
            volume: if set.is_bounded() { set.volume() } else { f64::INFINITY },
            dissipation,
            nesting_repairs: repairs,
        });
    }
}

fn check_descent(trace: &mut FlowTrace, step: usize, level_index: usize, before: f64, after: f64, dissipation: f64, quantum: f64) {
    let excess = after + dissipation - before;
    if excess > quantum + QUANTUM * before.abs() {
        trace.descent_violations.push(DescentViolation { step, level_index, excess });
    }
}

/// Iterates `T_h^-` from `set0`; the trace has one level, 0, for `χ_E > 0`.
pub fn evolve_set(config: &StepConfig, set0: &BinarySet) -> Result<FlowTrace> {
    let scheme = Scheme::from_config(config, *set0.geometry())?;
    evolve_set_with(&scheme, config, set0)
}

pub fn evolve_set_with(scheme: &Scheme, config: &StepConfig, set0: &BinarySet) -> Result<FlowTrace> {
    let p = scheme.perimeter();
    let mut trace = FlowTrace { h: config.h, levels: vec![0.0], ..Default::default() };
    let mut current = set0.clone();
    let mut energy = p.eval(&current)?;
    trace.record(0, 0, &current, energy, 0.0, 0);
    trace.sets.push(vec![current.clone()]);
    for k in 1..=config.max_steps {
        if config.stop_on_empty && current.count() == 0 && current.is_bounded() {
            break;
        }
        let step = scheme.step(&current)?;
        if !step.minimal.is_subset_of(&step.maximal) {
            trace.selection_violations += step.minimal.difference(&step.maximal)?.count();
        }
        trace.max_free_cells = trace.max_free_cells.max(step.free_cells);
        let next = step.minimal;
        let diss = scheme.dissipation(&current, &next)?;
        let e = p.eval(&next)?;
        check_descent(&mut trace, k, 0, energy, e, diss, step.quantum);
        trace.record(k, 0, &next, e, diss, 0);
        trace.sets.push(vec![next.clone()]);
        current = next;
        energy = e;
    }
    Ok(trace)
}

/// Iterates the level-set operator from `u0`.
pub fn evolve_levelset(config: &StepConfig, u0: &ScalarField) -> Result<FlowTrace> {
    let scheme = Scheme::from_config(config, *u0.geometry())?;
    evolve_levelset_with(&scheme, config, u0)
}

pub fn evolve_levelset_with(scheme: &Scheme, config: &StepConfig, u0: &ScalarField) -> Result<FlowTrace> {
    let levels = if config.level_grid.is_empty() { default_levels(u0, DEFAULT_LEVEL_COUNT) } else { config.level_grid.clone() };
    check_levels(u0, &levels)?;
    let p = scheme.perimeter();
    let mut trace = FlowTrace { h: config.h, levels: levels.clone(), ..Default::default() };
    let sets0: Vec<BinarySet> = levels.iter().map(|&l| u0.superlevel(l)).collect::<Result<_>>()?;
    let mut energies: Vec<f64> = sets0.par_iter().map(|s| p.eval(s)).collect::<Result<_>>()?;
    for (i, s) in sets0.iter().enumerate() {
        trace.record(0, i, s, energies[i], 0.0, 0);
    }
    trace.sets.push(sets0);
    trace.fields.push(u0.clone());
    let mut u = u0.clone();
    for k in 1..=config.max_steps {
        let ls = scheme.levelset_step(&u, &levels)?;
        let next_energies: Vec<f64> = ls.outputs.par_iter().map(|s| p.eval(s)).collect::<Result<_>>()?;
        for i in 0..levels.len() {
            let diss = scheme.dissipation(&ls.inputs[i], &ls.outputs[i])?;
            check_descent(&mut trace, k, i, energies[i], next_energies[i], diss, ls.quantum[i]);
            trace.record(k, i, &ls.outputs[i], next_energies[i], diss, ls.repairs[i]);
        }
        trace.nesting_repairs += ls.repairs.iter().sum::<usize>();
        trace.time_modulus.push(ls.field.sup_distance(&u)?);
        trace.sets.push(ls.outputs);
        trace.fields.push(ls.field.clone());
        u = ls.field;
        energies = next_energies;
    }
    Ok(trace)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentReport {
    pub level: f64,
    pub energies: Vec<f64>,
    /// `(step, increase)` for every step whose energy rose beyond `slack`.
    pub increases: Vec<(usize, f64)>,
}

/// `J({u(t) > level})` along a trace, flagging increases beyond `slack`
/// (relative to the previous energy).
pub fn descent_monitor(trace: &FlowTrace, perimeter: &GridPerimeter, level: f64, slack: f64) -> Result<DescentReport> {
    let sets: Vec<BinarySet> = if trace.fields.is_empty() {
        trace
            .sets
            .iter()
            .map(|s| if level < 0.0 { Ok(BinarySet::full(*perimeter.geometry())) } else if level < 1.0 { Ok(s[0].clone()) } else { Ok(BinarySet::empty(*perimeter.geometry())) })
            .collect::<Result<_>>()?
    } else {
        trace.fields.iter().map(|f| f.superlevel(level)).collect::<Result<_>>()?
    };
    let energies: Vec<f64> = sets.par_iter().map(|s| perimeter.eval(s)).collect::<Result<_>>()?;
    let increases = energies
        .windows(2)
        .enumerate()
        .filter(|(_, w)| w[1] > w[0] + slack * w[0].abs().max(f64::MIN_POSITIVE))
        .map(|(k, w)| (k + 1, w[1] - w[0]))
        .collect();
    Ok(DescentReport { level, energies, increases })
}
