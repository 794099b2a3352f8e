//! Experiment configuration: flat dotted keys on top of a preset's defaults.
//!
//! The file is TOML restricted to scalar and numeric-array values; sections
//! may be written either as `[perimeter]` tables or as dotted keys
//! (`perimeter.alpha = 0.25`).

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use nlflow::grid::io::read_field_csv;
use nlflow::grid::{GridGeometry, ScalarField};
use nlflow::perimeter::{PerimeterKind, PerimeterModel};

pub const PRESETS: [&str; 7] =
    ["shrink-disk", "fractional-disk", "minkowski-disk", "dumbbell", "comparison-suite", "oracle-suite", "property-suite"];

/// A configuration problem, tied to a key and, when known, a line.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    fn at(key: &str, message: impl Into<String>) -> Self {
        ConfigError { key: Some(key.to_string()), line: None, message: message.into() }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if let Some(k) = &self.key {
            write!(f, "`{k}`: ")?;
        }
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for ConfigError {}

type Res<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    ShrinkDisk,
    FractionalDisk,
    MinkowskiDisk,
    Dumbbell,
    ComparisonSuite,
    OracleSuite,
    PropertySuite,
}

impl Preset {
    pub const ALL: [Preset; 7] = [
        Preset::ShrinkDisk,
        Preset::FractionalDisk,
        Preset::MinkowskiDisk,
        Preset::Dumbbell,
        Preset::ComparisonSuite,
        Preset::OracleSuite,
        Preset::PropertySuite,
    ];

    pub fn name(self) -> &'static str {
        PRESETS[Preset::ALL.iter().position(|&p| p == self).unwrap()]
    }

    pub fn parse(s: &str) -> Option<Preset> {
        Preset::ALL.into_iter().find(|p| p.name() == s)
    }

    /// Presets that evolve an initial set or field.
    pub fn is_flow(self) -> bool {
        matches!(self, Preset::ShrinkDisk | Preset::FractionalDisk | Preset::MinkowskiDisk | Preset::Dumbbell)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub dim: usize,
    pub cells: usize,
    pub lower: f64,
    pub upper: f64,
}

impl GridSpec {
    pub fn geometry(&self) -> nlflow::Result<GridGeometry> {
        GridGeometry::cube(self.dim, self.lower, self.upper, self.cells)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Initial {
    Disk { center: Vec<f64>, radius: f64 },
    Annulus { center: Vec<f64>, radius: f64, inner_radius: f64 },
    /// Two disks of `radius` whose centres are `separation` apart along axis
    /// 0, joined by a bar of width `neck`.
    Dumbbell { center: Vec<f64>, radius: f64, separation: f64, neck: f64 },
    Field { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepSpec {
    pub h: f64,
    pub max_steps: usize,
    pub stop_on_empty: bool,
    pub band: Option<f64>,
    /// Level count for level-set runs.
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSpec {
    /// 0 writes no snapshots.
    pub snapshot_every: usize,
    pub dimacs: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteSpec {
    pub instances: usize,
    pub pairs: usize,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub preset: Preset,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub grid: GridSpec,
    pub perimeter: PerimeterModel,
    pub step: StepSpec,
    pub initial: Initial,
    pub output: OutputSpec,
    pub suite: SuiteSpec,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub output_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub levels: Option<usize>,
}

const KEYS: [&str; 29] = [
    "preset",
    "seed",
    "output_dir",
    "grid.dim",
    "grid.cells",
    "grid.lower",
    "grid.upper",
    "perimeter.kind",
    "perimeter.alpha",
    "perimeter.radius",
    "perimeter.sigma",
    "perimeter.rho",
    "step.h",
    "step.max_steps",
    "step.stop_on_empty",
    "step.band",
    "step.levels",
    "initial.shape",
    "initial.center",
    "initial.radius",
    "initial.inner_radius",
    "initial.separation",
    "initial.neck",
    "initial.path",
    "output.snapshot_every",
    "output.dimacs",
    "suite.instances",
    "suite.pairs",
    "suite.trials",
];

/// Default configuration of a preset.
pub fn preset_defaults(preset: Preset) -> ExperimentConfig {
    let square = |cells| GridSpec { dim: 2, cells, lower: -1.0, upper: 1.0 };
    let disk = |radius| Initial::Disk { center: vec![0.0, 0.0], radius };
    let step = |h, max_steps| StepSpec { h, max_steps, stop_on_empty: true, band: Some(8.0), levels: 9 };
    let (grid, perimeter, step, initial) = match preset {
        Preset::ShrinkDisk => (square(256), PerimeterModel::Local, step(2e-3, 150), disk(0.7)),
        Preset::FractionalDisk => {
            (square(256), PerimeterModel::Fractional { alpha: 0.25, radius: 0.25 }, step(2e-3, 60), disk(0.7))
        }
        Preset::MinkowskiDisk => (square(128), PerimeterModel::PreMinkowski { rho: 0.05 }, step(1e-2, 40), disk(0.6)),
        // in the plane a dumbbell rounds off without splitting
        Preset::Dumbbell => (
            GridSpec { dim: 3, cells: 64, lower: -1.0, upper: 1.0 },
            PerimeterModel::Local,
            step(4e-3, 40),
            Initial::Dumbbell { center: vec![0.0, 0.0, 0.0], radius: 0.3, separation: 1.2, neck: 0.28 },
        ),
        Preset::ComparisonSuite => (
            GridSpec { dim: 2, cells: 24, lower: 0.0, upper: 24.0 },
            PerimeterModel::Local,
            step(1.0, 0),
            Initial::Disk { center: vec![12.0, 12.0], radius: 6.0 },
        ),
        Preset::OracleSuite => (
            square(256),
            PerimeterModel::Fractional { alpha: 0.25, radius: 0.25 },
            step(2e-3, 0),
            disk(0.7),
        ),
        Preset::PropertySuite => (square(48), PerimeterModel::Local, step(1e-2, 10), disk(0.7)),
    };
    ExperimentConfig {
        preset,
        seed: 1,
        output_dir: PathBuf::from(format!("runs/{}", preset.name())),
        grid,
        perimeter,
        step,
        initial,
        output: OutputSpec { snapshot_every: if preset.is_flow() { 10 } else { 0 }, dimacs: false },
        suite: SuiteSpec { instances: 200, pairs: 100, trials: 1000 },
    }
}

/// Flattens the document into `dotted.key -> value`.
fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, toml::Value>) -> Res<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        match v {
            toml::Value::Table(t) => flatten(&key, t, out)?,
            other => {
                out.insert(key, other.clone());
            }
        }
    }
    Ok(())
}

/// Line of the assignment to `key`, found by scanning the source.
fn line_of(source: &str, key: &str) -> Option<usize> {
    let mut section = String::new();
    for (n, raw) in source.lines().enumerate() {
        let l = raw.split('#').next().unwrap_or("").trim();
        if let Some(s) = l.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            section = s.trim().to_string();
            continue;
        }
        if let Some((k, _)) = l.split_once('=') {
            let k = k.trim().trim_matches('"');
            let full = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
            if full == key {
                return Some(n + 1);
            }
        }
    }
    None
}

struct Values {
    map: BTreeMap<String, toml::Value>,
}

impl Values {
    fn has(&self, key: &str) -> bool {
        self.map.contains_key(key)
    }

    fn float(&self, key: &str) -> Res<Option<f64>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::Float(x)) if x.is_finite() => Ok(Some(*x)),
            Some(toml::Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(ConfigError::at(key, format!("expected a finite number, got {v}"))),
        }
    }

    fn count(&self, key: &str) -> Res<Option<usize>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(v) => Err(ConfigError::at(key, format!("expected a non-negative integer, got {v}"))),
        }
    }

    fn flag(&self, key: &str) -> Res<Option<bool>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::Boolean(b)) => Ok(Some(*b)),
            Some(v) => Err(ConfigError::at(key, format!("expected true or false, got {v}"))),
        }
    }

    fn text(&self, key: &str) -> Res<Option<String>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(ConfigError::at(key, format!("expected a string, got {v}"))),
        }
    }

    fn point(&self, key: &str) -> Res<Option<Vec<f64>>> {
        match self.map.get(key) {
            None => Ok(None),
            Some(toml::Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    toml::Value::Float(x) if x.is_finite() => Ok(*x),
                    toml::Value::Integer(i) => Ok(*i as f64),
                    _ => Err(ConfigError::at(key, format!("expected an array of numbers, got {v}"))),
                })
                .collect::<Res<Vec<f64>>>()
                .map(Some),
            Some(v) => Err(ConfigError::at(key, format!("expected an array of numbers, got {v}"))),
        }
    }
}

/// Parses and validates a configuration. Relative `initial.path` values are
/// taken relative to `base_dir`.
pub fn parse(source: &str, base_dir: &Path, overrides: &Overrides) -> Res<ExperimentConfig> {
    let table: toml::Table = source.parse().map_err(|e: toml::de::Error| ConfigError {
        key: None,
        line: e.span().map(|s| source[..s.start].matches('\n').count() + 1),
        message: e.message().to_string(),
    })?;
    let mut map = BTreeMap::new();
    flatten("", &table, &mut map)?;
    resolve(Values { map }, base_dir, overrides).map_err(|mut e| {
        if e.line.is_none() {
            e.line = e.key.as_deref().and_then(|k| line_of(source, k));
        }
        e
    })
}

/// Reads, parses and validates a configuration file.
pub fn load(path: &Path, overrides: &Overrides) -> Res<ExperimentConfig> {
    let source = std::fs::read_to_string(path)
        .map_err(|e| ConfigError { key: None, line: None, message: format!("cannot read {}: {e}", path.display()) })?;
    parse(&source, path.parent().unwrap_or(Path::new(".")), overrides)
}

fn resolve(v: Values, base_dir: &Path, overrides: &Overrides) -> Res<ExperimentConfig> {
    if let Some(k) = v.map.keys().find(|k| !KEYS.contains(&k.as_str())) {
        return Err(ConfigError::at(k, "unknown key"));
    }
    let preset = match v.text("preset")? {
        None => return Err(ConfigError::at("preset", format!("missing; available presets: {}", PRESETS.join(", ")))),
        Some(p) => Preset::parse(&p).ok_or_else(|| {
            ConfigError::at("preset", format!("unknown preset `{p}`; available presets: {}", PRESETS.join(", ")))
        })?,
    };
    let mut c = preset_defaults(preset);

    if let Some(s) = v.count("seed")? {
        c.seed = s as u64;
    }
    if let Some(d) = v.text("output_dir")? {
        c.output_dir = PathBuf::from(d);
    }

    let field_initial = v.text("initial.shape")?.as_deref() == Some("field");
    if field_initial {
        if let Some(k) = ["grid.dim", "grid.cells", "grid.lower", "grid.upper"].into_iter().find(|k| v.has(k)) {
            return Err(ConfigError::at(k, "the grid of a field run is read from initial.path"));
        }
    }
    if let Some(d) = v.count("grid.dim")? {
        if !(1..=3).contains(&d) {
            return Err(ConfigError::at("grid.dim", format!("must be 1, 2 or 3, got {d}")));
        }
        c.grid.dim = d;
    }
    if let Some(n) = v.count("grid.cells")? {
        if n < 3 {
            return Err(ConfigError::at("grid.cells", format!("need at least 3 cells per axis, got {n}")));
        }
        c.grid.cells = n;
    }
    if let Some(x) = v.float("grid.lower")? {
        c.grid.lower = x;
    }
    if let Some(x) = v.float("grid.upper")? {
        c.grid.upper = x;
    }
    if !(c.grid.lower < c.grid.upper) {
        return Err(ConfigError::at("grid.upper", format!("must exceed grid.lower ({} <= {})", c.grid.upper, c.grid.lower)));
    }

    // The initial field fixes the geometry before any length is checked.
    c.initial = resolve_initial(&v, &c, base_dir)?;
    let field = match &c.initial {
        Initial::Field { path } => Some(read_field(path)?),
        _ => None,
    };
    let geometry = match &field {
        Some(f) => *f.geometry(),
        None => c.grid.geometry().map_err(|e| ConfigError::at("grid", e.to_string()))?,
    };
    if let Some(f) = &field {
        c.grid = grid_spec_of(f.geometry()).ok_or_else(|| ConfigError::at("initial.path", "field grid must be a cube"))?;
    }
    let cell = geometry.cell_size();

    c.perimeter = resolve_perimeter(&v, &c, &geometry)?;

    if let Some(h) = v.float("step.h")? {
        if !(h > 0.0) {
            return Err(ConfigError::at("step.h", format!("time step must be positive, got {h}")));
        }
        c.step.h = h;
    }
    if let Some(n) = v.count("step.max_steps")? {
        c.step.max_steps = n;
    }
    if let Some(b) = v.flag("step.stop_on_empty")? {
        c.step.stop_on_empty = b;
    }
    if let Some(b) = v.float("step.band")? {
        c.step.band = if b == 0.0 {
            None
        } else if b >= 2.0 {
            Some(b)
        } else {
            return Err(ConfigError::at("step.band", format!("band must be 0 (whole grid) or at least 2 cells, got {b}")));
        };
    }
    if let Some(n) = overrides.levels.map(Ok).or_else(|| v.count("step.levels").transpose()).transpose()? {
        if n < 2 {
            return Err(ConfigError::at("step.levels", format!("need at least 2 levels, got {n}")));
        }
        c.step.levels = n;
    }

    if let Some(n) = v.count("output.snapshot_every")? {
        c.output.snapshot_every = n;
    }
    if let Some(b) = v.flag("output.dimacs")? {
        c.output.dimacs = b;
    }
    for (key, slot) in
        [("suite.instances", &mut c.suite.instances), ("suite.pairs", &mut c.suite.pairs), ("suite.trials", &mut c.suite.trials)]
    {
        if let Some(n) = v.count(key)? {
            if n == 0 {
                return Err(ConfigError::at(key, "must be positive"));
            }
            *slot = n;
        }
    }

    if let Some(d) = &overrides.output_dir {
        c.output_dir = d.clone();
    }
    if let Some(s) = overrides.seed {
        c.seed = s;
    }
    check_initial_fits(&c.initial, &geometry, cell)?;
    Ok(c)
}

fn grid_spec_of(g: &GridGeometry) -> Option<GridSpec> {
    let n = g.cells_per_axis();
    let o = g.origin();
    let e = g.extent();
    let cube = n.iter().all(|&k| k == n[0]) && o.iter().all(|&x| x == o[0]) && e.iter().all(|&x| x == e[0]);
    cube.then(|| GridSpec { dim: g.dim(), cells: n[0], lower: o[0], upper: o[0] + e[0] })
}

fn read_field(path: &Path) -> Res<ScalarField> {
    read_field_csv(path).map_err(|e| ConfigError::at("initial.path", format!("{}: {e}", path.display())))
}

fn resolve_perimeter(v: &Values, c: &ExperimentConfig, g: &GridGeometry) -> Res<PerimeterModel> {
    let kind = match v.text("perimeter.kind")? {
        Some(k) => k.parse::<PerimeterKind>().map_err(|e| ConfigError::at("perimeter.kind", e.to_string()))?,
        None => c.perimeter.kind(),
    };
    let cell = g.cell_size();
    let inherit = kind == c.perimeter.kind();
    let applies: &[&str] = match kind {
        PerimeterKind::Local => &[],
        PerimeterKind::Fractional => &["perimeter.alpha", "perimeter.radius"],
        PerimeterKind::TwoBodyKernel => &["perimeter.sigma", "perimeter.radius"],
        PerimeterKind::PreMinkowski => &["perimeter.rho"],
    };
    for k in ["perimeter.alpha", "perimeter.radius", "perimeter.sigma", "perimeter.rho"] {
        if v.has(k) && !applies.contains(&k) {
            return Err(ConfigError::at(k, format!("does not apply to the {kind} model")));
        }
    }
    let length = |key: &str, default: f64| -> Res<f64> {
        let x = v.float(key)?.unwrap_or(default);
        if !(x >= cell) {
            return Err(ConfigError::at(key, format!("must be at least one cell ({cell}), got {x}")));
        }
        if x > g.diameter() {
            return Err(ConfigError::at(key, format!("{x} exceeds the domain diameter {}", g.diameter())));
        }
        Ok(x)
    };
    let model = match kind {
        PerimeterKind::Local => PerimeterModel::Local,
        PerimeterKind::Fractional => {
            let (a0, r0) = match c.perimeter {
                PerimeterModel::Fractional { alpha, radius } if inherit => (alpha, radius),
                _ => (0.25, PerimeterModel::default_truncation(g)),
            };
            let alpha = v.float("perimeter.alpha")?.unwrap_or(a0);
            if !(alpha > 0.0 && alpha < 0.5) {
                return Err(ConfigError::at("perimeter.alpha", format!("must lie in (0, 0.5), got {alpha}")));
            }
            PerimeterModel::Fractional { alpha, radius: length("perimeter.radius", r0)? }
        }
        PerimeterKind::TwoBodyKernel => {
            let (s0, r0) = match c.perimeter {
                PerimeterModel::TwoBodyKernel { sigma, radius } if inherit => (sigma, radius),
                _ => (4.0 * cell, 16.0 * cell),
            };
            let sigma = v.float("perimeter.sigma")?.unwrap_or(s0);
            if !(sigma > 0.0) {
                return Err(ConfigError::at("perimeter.sigma", format!("must be positive, got {sigma}")));
            }
            PerimeterModel::TwoBodyKernel { sigma, radius: length("perimeter.radius", r0)? }
        }
        PerimeterKind::PreMinkowski => {
            let r0 = match c.perimeter {
                PerimeterModel::PreMinkowski { rho } if inherit => rho,
                _ => 4.0 * cell,
            };
            PerimeterModel::PreMinkowski { rho: length("perimeter.rho", r0)? }
        }
    };
    model.validate(g).map_err(|e| ConfigError::at("perimeter.kind", e.to_string()))?;
    Ok(model)
}

fn resolve_initial(v: &Values, c: &ExperimentConfig, base_dir: &Path) -> Res<Initial> {
    let shape = v.text("initial.shape")?;
    let shape = shape.as_deref().unwrap_or(match c.initial {
        Initial::Disk { .. } => "disk",
        Initial::Annulus { .. } => "annulus",
        Initial::Dumbbell { .. } => "dumbbell",
        Initial::Field { .. } => "field",
    });
    let applies: &[&str] = match shape {
        "disk" => &["initial.center", "initial.radius"],
        "annulus" => &["initial.center", "initial.radius", "initial.inner_radius"],
        "dumbbell" => &["initial.center", "initial.radius", "initial.separation", "initial.neck"],
        "field" => &["initial.path"],
        other => {
            return Err(ConfigError::at(
                "initial.shape",
                format!("unknown shape `{other}` (expected disk, annulus, dumbbell or field)"),
            ))
        }
    };
    for k in ["initial.center", "initial.radius", "initial.inner_radius", "initial.separation", "initial.neck", "initial.path"] {
        if v.has(k) && !applies.contains(&k) {
            return Err(ConfigError::at(k, format!("does not apply to shape `{shape}`")));
        }
    }
    if shape == "field" {
        let p = v.text("initial.path")?.ok_or_else(|| ConfigError::at("initial.path", "required for shape `field`"))?;
        let p = PathBuf::from(p);
        return Ok(Initial::Field { path: if p.is_absolute() { p } else { base_dir.join(p) } });
    }
    let (c0, r0) = match &c.initial {
        Initial::Disk { center, radius } | Initial::Annulus { center, radius, .. } | Initial::Dumbbell { center, radius, .. } => {
            (center.clone(), *radius)
        }
        Initial::Field { .. } => (vec![0.0; c.grid.dim], 0.5),
    };
    let mut center = v.point("initial.center")?.unwrap_or(c0);
    if !v.has("initial.center") {
        center.resize(c.grid.dim, 0.5 * (c.grid.lower + c.grid.upper));
    }
    if center.len() != c.grid.dim {
        return Err(ConfigError::at("initial.center", format!("needs {} components, got {}", c.grid.dim, center.len())));
    }
    let radius = v.float("initial.radius")?.unwrap_or(r0);
    if !(radius > 0.0) {
        return Err(ConfigError::at("initial.radius", format!("must be positive, got {radius}")));
    }
    Ok(match shape {
        "disk" => Initial::Disk { center, radius },
        "annulus" => {
            let inner_radius = v.float("initial.inner_radius")?.unwrap_or(0.5 * radius);
            if !(inner_radius > 0.0 && inner_radius < radius) {
                return Err(ConfigError::at("initial.inner_radius", format!("must lie in (0, {radius}), got {inner_radius}")));
            }
            Initial::Annulus { center, radius, inner_radius }
        }
        _ => {
            let (s0, n0) = match c.initial {
                Initial::Dumbbell { separation, neck, .. } => (separation, neck),
                _ => (2.5 * radius, 0.4 * radius),
            };
            let separation = v.float("initial.separation")?.unwrap_or(s0);
            let neck = v.float("initial.neck")?.unwrap_or(n0);
            if !(separation > 0.0) {
                return Err(ConfigError::at("initial.separation", format!("must be positive, got {separation}")));
            }
            if !(neck > 0.0 && neck < 2.0 * radius) {
                return Err(ConfigError::at("initial.neck", format!("must lie in (0, {}), got {neck}", 2.0 * radius)));
            }
            Initial::Dumbbell { center, radius, separation, neck }
        }
    })
}

/// Half-widths of the initial shape's bounding box around its centre.
fn half_widths(initial: &Initial, dim: usize) -> Option<Vec<f64>> {
    match initial {
        Initial::Disk { radius, .. } | Initial::Annulus { radius, .. } => Some(vec![*radius; dim]),
        Initial::Dumbbell { radius, separation, .. } => {
            let mut w = vec![*radius; dim];
            w[0] = 0.5 * separation + radius;
            Some(w)
        }
        Initial::Field { .. } => None,
    }
}

fn check_initial_fits(initial: &Initial, g: &GridGeometry, cell: f64) -> Res<()> {
    let (center, key) = match initial {
        Initial::Disk { center, .. } | Initial::Annulus { center, .. } | Initial::Dumbbell { center, .. } => {
            (center, if matches!(initial, Initial::Dumbbell { .. }) { "initial.separation" } else { "initial.radius" })
        }
        Initial::Field { .. } => return Ok(()),
    };
    let w = half_widths(initial, g.dim()).unwrap();
    let o = g.origin();
    let e = g.extent();
    for a in 0..g.dim() {
        // the outermost cell layer must stay outside the set
        let (lo, hi) = (o[a] + cell, o[a] + e[a] - cell);
        if center[a] - w[a] < lo || center[a] + w[a] > hi {
            let key = if matches!(initial, Initial::Dumbbell { .. }) && a != 0 { "initial.radius" } else { key };
            return Err(ConfigError::at(
                key,
                format!(
                    "shape spans [{}, {}] on axis {a}, outside the grid interior [{lo}, {hi}]",
                    center[a] - w[a],
                    center[a] + w[a]
                ),
            ));
        }
    }
    Ok(())
}

fn fmt_float(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains('.') || s.contains('e') || s.contains("inf") || s.contains("NaN") {
        s
    } else {
        format!("{s}.0")
    }
}

fn fmt_point(p: &[f64]) -> String {
    format!("[{}]", p.iter().map(|&x| fmt_float(x)).collect::<Vec<_>>().join(", "))
}

impl ExperimentConfig {
    /// The effective configuration as a config file that parses back to it.
    pub fn echo(&self) -> String {
        let mut s = String::new();
        let q = |t: &str| toml::Value::String(t.to_string()).to_string();
        let _ = writeln!(s, "preset = {}", q(self.preset.name()));
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "output_dir = {}", q(&self.output_dir.to_string_lossy()));
        if !matches!(self.initial, Initial::Field { .. }) {
            let _ = writeln!(s, "grid.dim = {}", self.grid.dim);
            let _ = writeln!(s, "grid.cells = {}", self.grid.cells);
            let _ = writeln!(s, "grid.lower = {}", fmt_float(self.grid.lower));
            let _ = writeln!(s, "grid.upper = {}", fmt_float(self.grid.upper));
        }
        let _ = writeln!(s, "perimeter.kind = {}", q(self.perimeter.kind().name()));
        match self.perimeter {
            PerimeterModel::Local => {}
            PerimeterModel::Fractional { alpha, radius } => {
                let _ = writeln!(s, "perimeter.alpha = {}", fmt_float(alpha));
                let _ = writeln!(s, "perimeter.radius = {}", fmt_float(radius));
            }
            PerimeterModel::TwoBodyKernel { sigma, radius } => {
                let _ = writeln!(s, "perimeter.sigma = {}", fmt_float(sigma));
                let _ = writeln!(s, "perimeter.radius = {}", fmt_float(radius));
            }
            PerimeterModel::PreMinkowski { rho } => {
                let _ = writeln!(s, "perimeter.rho = {}", fmt_float(rho));
            }
        }
        let _ = writeln!(s, "step.h = {}", fmt_float(self.step.h));
        let _ = writeln!(s, "step.max_steps = {}", self.step.max_steps);
        let _ = writeln!(s, "step.stop_on_empty = {}", self.step.stop_on_empty);
        let _ = writeln!(s, "step.band = {}", fmt_float(self.step.band.unwrap_or(0.0)));
        let _ = writeln!(s, "step.levels = {}", self.step.levels);
        match &self.initial {
            Initial::Disk { center, radius } => {
                let _ = writeln!(s, "initial.shape = \"disk\"\ninitial.center = {}\ninitial.radius = {}", fmt_point(center), fmt_float(*radius));
            }
            Initial::Annulus { center, radius, inner_radius } => {
                let _ = writeln!(
                    s,
                    "initial.shape = \"annulus\"\ninitial.center = {}\ninitial.radius = {}\ninitial.inner_radius = {}",
                    fmt_point(center),
                    fmt_float(*radius),
                    fmt_float(*inner_radius)
                );
            }
            Initial::Dumbbell { center, radius, separation, neck } => {
                let _ = writeln!(
                    s,
                    "initial.shape = \"dumbbell\"\ninitial.center = {}\ninitial.radius = {}\ninitial.separation = {}\ninitial.neck = {}",
                    fmt_point(center),
                    fmt_float(*radius),
                    fmt_float(*separation),
                    fmt_float(*neck)
                );
            }
            Initial::Field { path } => {
                let _ = writeln!(s, "initial.shape = \"field\"\ninitial.path = {}", q(&path.to_string_lossy()));
            }
        }
        let _ = writeln!(s, "output.snapshot_every = {}", self.output.snapshot_every);
        let _ = writeln!(s, "output.dimacs = {}", self.output.dimacs);
        let _ = writeln!(s, "suite.instances = {}", self.suite.instances);
        let _ = writeln!(s, "suite.pairs = {}", self.suite.pairs);
        let _ = writeln!(s, "suite.trials = {}", self.suite.trials);
        s
    }

    pub fn geometry(&self) -> nlflow::Result<GridGeometry> {
        match &self.initial {
            Initial::Field { path } => Ok(*read_field_csv(path)?.geometry()),
            _ => self.grid.geometry(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse_str(s: &str) -> Res<ExperimentConfig> {
        parse(s, Path::new("."), &Overrides::default())
    }

    #[test]
    fn dotted_and_table_forms_agree() {
        let a = parse_str("preset = \"fractional-disk\"\nperimeter.alpha = 0.2\n").unwrap();
        let b = parse_str("preset = \"fractional-disk\"\n[perimeter]\nalpha = 0.2\n").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.perimeter, PerimeterModel::Fractional { alpha: 0.2, radius: 0.25 });
    }

    #[test]
    fn echo_round_trips() {
        for p in PRESETS {
            let c = parse_str(&format!("preset = \"{p}\"\n")).unwrap();
            assert_eq!(parse_str(&c.echo()).unwrap(), c, "{p}");
        }
    }

    #[test]
    fn errors_name_key_and_line() {
        let e = parse_str("preset = \"shrink-disk\"\n\nperimeter.alhpa = 0.2\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("perimeter.alhpa"));
        assert_eq!(e.line, Some(3));
        let e = parse_str("preset = \"shrink-disk\"\n[step]\nh = -1\n").unwrap_err();
        assert_eq!((e.key.as_deref(), e.line), (Some("step.h"), Some(3)));
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let e = parse_str("preset = \"shrink-disk\"\nstep.h = = 2\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert_eq!(e.key, None);
    }

    #[test]
    fn missing_preset_lists_the_choices() {
        let e = parse_str("seed = 3\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("preset"));
        for p in PRESETS {
            assert!(e.message.contains(p));
        }
    }

    #[test]
    fn oversized_disk_is_rejected() {
        let e = parse_str("preset = \"shrink-disk\"\ninitial.radius = 1.5\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("initial.radius"));
    }

    #[test]
    fn parameters_must_match_the_model() {
        let e = parse_str("preset = \"shrink-disk\"\nperimeter.rho = 0.1\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("perimeter.rho"));
        let c = parse_str("preset = \"shrink-disk\"\nperimeter.kind = \"pre_minkowski\"\nperimeter.rho = 0.1\n").unwrap();
        assert_eq!(c.perimeter, PerimeterModel::PreMinkowski { rho: 0.1 });
        let e = parse_str("preset = \"shrink-disk\"\nperimeter.kind = \"crystalline\"\n").unwrap_err();
        assert_eq!(e.key.as_deref(), Some("perimeter.kind"));
    }

    #[test]
    fn overrides_win() {
        let o = Overrides { output_dir: Some("elsewhere".into()), seed: Some(9), levels: Some(5) };
        let c = parse(
            "preset = \"property-suite\"\nseed = 2\nstep.levels = 3\noutput_dir = \"x\"\n",
            Path::new("."),
            &o,
        )
        .unwrap();
        assert_eq!((c.seed, c.step.levels, c.output_dir.as_path()), (9, 5, Path::new("elsewhere")));
    }
}
