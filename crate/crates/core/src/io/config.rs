//! Line-oriented run configuration: `key = value` lines under `[section]`
//! headers, `#` starts a comment.
//!
//! ```text
//! [model]
//! m = 2.0
//! phi = linear_switch(1.0)
//!
//! [grid]
//! cells = 256
//! extent = 1.0
//!
//! [solver]
//! end_time = 0.05
//!
//! [initial]
//! u = bump(0.5, 0.15, 0.5)
//! w = cosine(0.5, 0.3, 2)
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::lattice::Kernel;
use crate::model::{Field, Grid, ModelParams, Point, Sensitivity, StateQuad};
use crate::solver::{SolverConfig, VzStepper};

use super::snapshot::read_snapshot;

#[derive(Debug, Clone, PartialEq)]
pub struct RawEntry {
    pub key: String,
    pub value: String,
    pub line: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawSection {
    pub name: String,
    pub line: usize,
    pub entries: Vec<RawEntry>,
}

/// Syntax-level view of a config file: sections and their entries in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawConfig {
    pub sections: Vec<RawSection>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut raw = RawConfig::default();
        for (k, full) in text.lines().enumerate() {
            let line = k + 1;
            let content = full.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            if let Some(rest) = content.strip_prefix('[') {
                let name = rest
                    .strip_suffix(']')
                    .ok_or_else(|| syntax(line, "section header is missing `]`"))?
                    .trim();
                if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_') {
                    return Err(syntax(line, format!("bad section name `{name}`")));
                }
                if raw.section(name).is_some() {
                    return Err(syntax(line, format!("section [{name}] appears twice")));
                }
                raw.sections.push(RawSection {
                    name: name.to_string(),
                    line,
                    entries: Vec::new(),
                });
                continue;
            }
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| syntax(line, format!("expected `key = value`, got `{content}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if key.is_empty() {
                return Err(syntax(line, "empty key"));
            }
            if value.is_empty() {
                return Err(syntax(line, format!("key `{key}` has no value")));
            }
            let section = raw
                .sections
                .last_mut()
                .ok_or_else(|| syntax(line, format!("key `{key}` appears before any section")))?;
            if section.entries.iter().any(|e| e.key == key) {
                return Err(syntax(line, format!("key `{key}` repeated in [{}]", section.name)));
            }
            section.entries.push(RawEntry {
                key: key.to_string(),
                value: value.to_string(),
                line,
            });
        }
        Ok(raw)
    }

    pub fn section(&self, name: &str) -> Option<&RawSection> {
        self.sections.iter().find(|s| s.name == name)
    }

    /// Sets `section.key`, creating either if absent.
    pub fn set(&mut self, section: &str, key: &str, value: &str) {
        let idx = match self.sections.iter().position(|s| s.name == section) {
            Some(i) => i,
            None => {
                self.sections.push(RawSection {
                    name: section.to_string(),
                    line: 0,
                    entries: Vec::new(),
                });
                self.sections.len() - 1
            }
        };
        let entries = &mut self.sections[idx].entries;
        match entries.iter_mut().find(|e| e.key == key) {
            Some(e) => e.value = value.to_string(),
            None => entries.push(RawEntry {
                key: key.to_string(),
                value: value.to_string(),
                line: 0,
            }),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, s) in self.sections.iter().enumerate() {
            if k > 0 {
                out.push('\n');
            }
            let _ = writeln!(out, "[{}]", s.name);
            for e in &s.entries {
                let _ = writeln!(out, "{} = {}", e.key, e.value);
            }
        }
        out
    }
}

fn syntax(line: usize, message: impl Into<String>) -> Error {
    Error::ConfigSyntax {
        line,
        message: message.into(),
    }
}

/// Tracks which keys of a section were consumed so leftovers can be rejected.
struct Reader<'a> {
    section: &'a RawSection,
    used: Vec<bool>,
}

impl<'a> Reader<'a> {
    fn new(section: &'a RawSection) -> Self {
        Reader {
            section,
            used: vec![false; section.entries.len()],
        }
    }

    fn take(&mut self, key: &str) -> Option<&'a RawEntry> {
        let i = self.section.entries.iter().position(|e| e.key == key)?;
        self.used[i] = true;
        Some(&self.section.entries[i])
    }

    fn missing(&self, key: &str) -> Error {
        Error::Config(format!("missing key `{key}` in [{}]", self.section.name))
    }

    fn parsed<T>(&mut self, key: &str, parse: impl Fn(&str) -> Option<T>, what: &str) -> Result<Option<T>> {
        let Some(e) = self.take(key) else {
            return Ok(None);
        };
        parse(&e.value).map(Some).ok_or_else(|| {
            syntax(
                e.line,
                format!("[{}] {key}: expected {what}, got `{}`", self.section.name, e.value),
            )
        })
    }

    fn f64(&mut self, key: &str) -> Result<Option<f64>> {
        self.parsed(key, |s| s.parse::<f64>().ok(), "a number")
    }

    fn req_f64(&mut self, key: &str) -> Result<f64> {
        self.f64(key)?.ok_or_else(|| self.missing(key))
    }

    fn u64(&mut self, key: &str) -> Result<Option<u64>> {
        self.parsed(key, |s| s.parse::<u64>().ok(), "a nonnegative integer")
    }

    fn bool(&mut self, key: &str) -> Result<Option<bool>> {
        self.parsed(
            key,
            |s| match s {
                "true" | "on" | "yes" => Some(true),
                "false" | "off" | "no" => Some(false),
                _ => None,
            },
            "true or false",
        )
    }

    fn list_f64(&mut self, key: &str) -> Result<Option<Vec<f64>>> {
        self.parsed(key, |s| parse_list(s, |x| x.parse::<f64>().ok()), "a comma-separated list of numbers")
    }

    fn list_usize(&mut self, key: &str) -> Result<Option<Vec<usize>>> {
        self.parsed(key, |s| parse_list(s, |x| x.parse::<usize>().ok()), "a comma-separated list of integers")
    }

    fn string(&mut self, key: &str) -> Option<(&'a str, usize)> {
        self.take(key).map(|e| (e.value.as_str(), e.line))
    }

    fn finish(self) -> Result<()> {
        for (e, used) in self.section.entries.iter().zip(&self.used) {
            if !used {
                return Err(syntax(e.line, format!("unknown key `{}` in [{}]", e.key, self.section.name)));
            }
        }
        Ok(())
    }
}

fn parse_list<T>(s: &str, item: impl Fn(&str) -> Option<T>) -> Option<Vec<T>> {
    s.split(',').map(|x| item(x.trim())).collect()
}

/// Splits `name(a, b, c)` into the name and its trimmed arguments.
fn call_syntax(s: &str) -> Option<(&str, Vec<&str>)> {
    let open = s.find('(')?;
    let inner = s[open + 1..].strip_suffix(')')?;
    let name = s[..open].trim();
    let args = if inner.trim().is_empty() {
        Vec::new()
    } else {
        inner.split(',').map(str::trim).collect()
    };
    Some((name, args))
}

fn fmt_point(p: Point, dim: usize) -> String {
    if dim == 1 {
        format!("{:?}", p[0])
    } else {
        format!("{:?}, {:?}", p[0], p[1])
    }
}

fn point_from(values: &[f64], dim: usize) -> Option<Point> {
    match (dim, values) {
        (1, [x]) => Some([*x, 0.0]),
        (2, [x, y]) => Some([*x, *y]),
        _ => None,
    }
}

pub fn parse_sensitivity(s: &str) -> Result<Sensitivity> {
    let bad = || Error::Config(format!("cannot read sensitivity `{s}`"));
    let (name, args) = call_syntax(s).ok_or_else(bad)?;
    let num = |a: &str| a.parse::<f64>().map_err(|_| bad());
    match (name, args.as_slice()) {
        ("constant", [c]) => Sensitivity::constant(num(c)?),
        ("linear_switch", [u]) => Sensitivity::linear_switch(num(u)?),
        ("table", knots) if !knots.is_empty() => {
            let pairs = knots
                .iter()
                .map(|k| {
                    let (u, p) = k.split_once(':').ok_or_else(bad)?;
                    Ok((num(u.trim())?, num(p.trim())?))
                })
                .collect::<Result<Vec<_>>>()?;
            Sensitivity::table(pairs)
        }
        _ => Err(bad()),
    }
}

/// Initial condition of one field.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialSpec {
    Constant(f64),
    /// `height · (1 - (|x - center| / radius)^4)_+`
    Bump { center: Point, radius: f64, height: f64 },
    /// `mean + amplitude · Π_axes cos(modes · π (x - origin) / extent)`, a
    /// Neumann eigenfunction.
    Cosine { mean: f64, amplitude: f64, modes: u32 },
    /// The same-named field of a snapshot file.
    Snapshot(PathBuf),
}

impl InitialSpec {
    pub fn parse(s: &str, dim: usize, base: Option<&Path>) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("cannot read initial condition `{s}`: {why}"));
        let (name, args) = call_syntax(s).ok_or_else(|| bad("expected name(arguments)"))?;
        if name == "snapshot" {
            let [path] = args.as_slice() else {
                return Err(bad("snapshot takes one path"));
            };
            let mut path = PathBuf::from(path);
            if path.is_relative() {
                if let Some(b) = base {
                    path = b.join(path);
                }
            }
            if !path.exists() {
                return Err(Error::Config(format!("snapshot file {} does not exist", path.display())));
            }
            return Ok(InitialSpec::Snapshot(path));
        }
        let nums = args
            .iter()
            .map(|a| a.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|_| bad("arguments must be numbers"))?;
        let spec = match (name, nums.as_slice()) {
            ("constant", [c]) => InitialSpec::Constant(*c),
            ("bump", rest) if rest.len() == dim + 2 => InitialSpec::Bump {
                center: point_from(&rest[..dim], dim).ok_or_else(|| bad("bad centre"))?,
                radius: rest[dim],
                height: rest[dim + 1],
            },
            ("bump", _) => return Err(bad(&format!("bump takes {} arguments in {dim}D", dim + 2))),
            ("cosine", [mean, amp, modes]) if *modes >= 0.0 && modes.fract() == 0.0 => InitialSpec::Cosine {
                mean: *mean,
                amplitude: *amp,
                modes: *modes as u32,
            },
            _ => return Err(bad("unknown form")),
        };
        spec.validate().map_err(|e| bad(&e.to_string()))?;
        Ok(spec)
    }

    fn validate(&self) -> Result<()> {
        match *self {
            InitialSpec::Constant(c) if !(c >= 0.0 && c.is_finite()) => {
                Err(Error::Config("constant must be nonnegative".into()))
            }
            InitialSpec::Bump { radius, height, .. } if !(radius > 0.0 && height >= 0.0) => {
                Err(Error::Config("bump needs radius > 0 and height >= 0".into()))
            }
            InitialSpec::Cosine { mean, amplitude, .. } if !(amplitude.abs() <= mean) => {
                Err(Error::Config("cosine needs |amplitude| <= mean to stay nonnegative".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn format(&self, dim: usize) -> String {
        match self {
            InitialSpec::Constant(c) => format!("constant({c:?})"),
            InitialSpec::Bump { center, radius, height } => {
                format!("bump({}, {radius:?}, {height:?})", fmt_point(*center, dim))
            }
            InitialSpec::Cosine { mean, amplitude, modes } => format!("cosine({mean:?}, {amplitude:?}, {modes})"),
            InitialSpec::Snapshot(p) => format!("snapshot({})", p.display()),
        }
    }

    /// Samples the spec at cell centres; `slot` picks the snapshot field (0..4 = u, v, w, z).
    pub fn build(&self, grid: &Grid, slot: usize) -> Result<Field> {
        Ok(match *self {
            InitialSpec::Constant(c) => Field::constant(*grid, c),
            InitialSpec::Bump { center, radius, height } => Field::from_fn(*grid, |x| {
                let s = crate::model::distance(x, center) / radius;
                height * (1.0 - s.powi(4)).max(0.0)
            }),
            InitialSpec::Cosine { mean, amplitude, modes } => {
                let (o, e) = (grid.origin(), grid.extent());
                let k = modes as f64 * std::f64::consts::PI;
                Field::from_fn(*grid, |x| {
                    let mut c = (k * (x[0] - o[0]) / e[0]).cos();
                    if grid.dim() == 2 {
                        c *= (k * (x[1] - o[1]) / e[1]).cos();
                    }
                    mean + amplitude * c
                })
            }
            InitialSpec::Snapshot(ref path) => {
                let s = read_snapshot(path)?;
                let sg = s.grid();
                if sg.dim() != grid.dim() || sg.cells() != grid.cells() || sg.extent() != grid.extent() {
                    return Err(Error::Config(format!(
                        "snapshot {} does not match the configured grid",
                        path.display()
                    )));
                }
                let field = s.fields()[slot].1.values().to_vec();
                Field::from_values(*grid, field)?
            }
        })
    }
}

/// Which comparison profiles `verify` builds and how.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub lower: bool,
    pub upper: bool,
    /// Profile centre; defaults to the solver's support centre.
    pub x0: Option<Point>,
    /// Radius of the ball seeding the lower profile; defaults to half the
    /// support radius of `u0`.
    pub seed_radius: Option<f64>,
    /// Clearance radius of the upper profile; defaults to 0.9 of the
    /// distance from `x0` to the boundary.
    pub r1: Option<f64>,
    pub tau_start: f64,
    /// Relative inflation of the observed signal bounds.
    pub margin: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            lower: true,
            upper: true,
            x0: None,
            seed_radius: None,
            r1: None,
            tau_start: 0.5,
            margin: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub seed: u64,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            seed: 0,
        }
    }
}

/// Ensemble of lattice walks started from a single loaded site.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeConfig {
    pub sites: usize,
    pub spacing: f64,
    pub origin: f64,
    pub u_max: u64,
    pub particles: u64,
    pub load_site: usize,
    pub kernel: Kernel,
    pub m: f64,
    pub alpha: f64,
    pub beta: f64,
    pub end_time: f64,
    pub seeds: usize,
    pub cells_per_bin: usize,
    pub leap: f64,
}

impl LatticeConfig {
    fn validate(&self) -> Result<()> {
        if self.sites < 4 || self.load_site >= self.sites {
            return Err(Error::Config("lattice needs at least 4 sites and load_site < sites".into()));
        }
        if self.cells_per_bin == 0 || !self.sites.is_multiple_of(self.cells_per_bin) || self.sites / self.cells_per_bin < 4 {
            return Err(Error::Config(
                "cells_per_bin must divide sites into at least 4 bins".into(),
            ));
        }
        if !(self.spacing > 0.0 && self.end_time > 0.0 && self.alpha > 0.0 && self.m > 1.0) {
            return Err(Error::Config("lattice spacing, end_time, alpha must be positive and m > 1".into()));
        }
        if self.u_max == 0 || self.seeds == 0 {
            return Err(Error::Config("lattice u_max and seeds must be positive".into()));
        }
        if !(self.leap > 0.0 && self.leap <= crate::lattice::LEAP_LIMIT) {
            return Err(Error::Config("lattice leap must lie in (0, 0.1]".into()));
        }
        Ok(())
    }
}

pub fn kernel_name(k: Kernel) -> &'static str {
    match k {
        Kernel::VolumeFilling => "volume_filling",
        Kernel::Pushing => "pushing",
        Kernel::QuorumPushing => "quorum_pushing",
    }
}

/// One parameter varied over a list of values, e.g. `key = model.mu`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub section: String,
    pub key: String,
    pub values: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelParams,
    pub grid: Grid,
    pub solver: SolverConfig,
    /// Initial conditions of `u, v, w, z`.
    pub initial: [InitialSpec; 4],
    pub oracle: OracleConfig,
    pub output: OutputConfig,
    pub lattice: Option<LatticeConfig>,
    pub sweep: Option<SweepConfig>,
}

const FIELD_NAMES: [&str; 4] = ["u", "v", "w", "z"];

pub fn parse_config(text: &str) -> Result<RunConfig> {
    RunConfig::from_raw(&RawConfig::parse(text)?, None)
}

/// Reads a config file; relative snapshot paths resolve against its directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    RunConfig::from_raw(&RawConfig::parse(&text)?, path.parent())
}

impl RunConfig {
    pub fn from_raw(raw: &RawConfig, base: Option<&Path>) -> Result<Self> {
        const KNOWN: [&str; 8] = ["model", "grid", "solver", "initial", "oracle", "output", "lattice", "sweep"];
        for s in &raw.sections {
            if !KNOWN.contains(&s.name.as_str()) {
                return Err(syntax(s.line, format!("unknown section [{}]", s.name)));
            }
        }
        let required = |name: &str| {
            raw.section(name)
                .ok_or_else(|| Error::Config(format!("missing required section [{name}]")))
        };

        let mut r = Reader::new(required("model")?);
        let phi = match r.string("phi") {
            Some((s, line)) => parse_sensitivity(s).map_err(|e| syntax(line, e.to_string()))?,
            None => Sensitivity::Constant(0.0),
        };
        let model = ModelParams {
            m: r.req_f64("m")?,
            delta: r.f64("delta")?.unwrap_or(1.0),
            mu: r.f64("mu")?.unwrap_or(1.0),
            r: r.f64("r")?.unwrap_or(1.0),
            phi,
            eps_reg: r.f64("eps_reg")?.unwrap_or(0.0),
        };
        r.finish()?;
        model.validate()?;

        let mut r = Reader::new(required("grid")?);
        let dim = r.u64("dim")?.unwrap_or(1) as usize;
        if dim != 1 && dim != 2 {
            return Err(Error::Config(format!("[grid] dim must be 1 or 2, got {dim}")));
        }
        let cells = r.list_usize("cells")?.ok_or_else(|| r.missing("cells"))?;
        let extent = r.list_f64("extent")?.ok_or_else(|| r.missing("extent"))?;
        let origin = r.list_f64("origin")?.unwrap_or_else(|| vec![0.0; dim]);
        r.finish()?;
        if cells.len() != dim || extent.len() != dim || origin.len() != dim {
            return Err(Error::Config(format!("[grid] cells, extent and origin need {dim} entries each")));
        }
        let pad = |v: &[f64]| [v[0], if dim == 2 { v[1] } else { 0.0 }];
        let grid = Grid::build(
            dim,
            [cells[0], if dim == 2 { cells[1] } else { 1 }],
            pad(&extent),
            pad(&origin),
        )?;

        let mut r = Reader::new(required("solver")?);
        let defaults = SolverConfig::default();
        let stepper = match r.string("v_z_stepper") {
            None => defaults.v_z_stepper,
            Some(("semi-implicit", _)) => VzStepper::SemiImplicit,
            Some(("explicit", _)) => VzStepper::Explicit,
            Some((other, line)) => {
                return Err(syntax(line, format!("v_z_stepper must be explicit or semi-implicit, got `{other}`")))
            }
        };
        let support_center = match r.list_f64("support_center")? {
            Some(v) => Some(point_from(&v, dim).ok_or_else(|| Error::Config(format!("support_center needs {dim} entries")))?),
            None => None,
        };
        let solver = SolverConfig {
            cfl_safety: r.f64("cfl_safety")?.unwrap_or(defaults.cfl_safety),
            end_time: r.req_f64("end_time")?,
            output_stride: r.u64("output_stride")?.map_or(defaults.output_stride, |s| s as usize),
            clip_negative: r.bool("clip_negative")?.unwrap_or(defaults.clip_negative),
            chemo_upwind: r.bool("chemo_upwind")?.unwrap_or(defaults.chemo_upwind),
            v_z_stepper: stepper,
            dt_max: r.f64("dt_max")?,
            linear_tol: r.f64("linear_tol")?.unwrap_or(defaults.linear_tol),
            support_center,
            support_threshold: r.f64("support_threshold")?.unwrap_or(defaults.support_threshold),
        };
        r.finish()?;
        solver.validate()?;
        if !(solver.end_time > 0.0) {
            return Err(Error::param("end_time", "must be positive"));
        }

        let mut r = Reader::new(required("initial")?);
        let mut initial: [InitialSpec; 4] = std::array::from_fn(|_| InitialSpec::Constant(0.0));
        for (slot, name) in FIELD_NAMES.iter().enumerate() {
            match r.string(name) {
                Some((s, line)) => {
                    initial[slot] = InitialSpec::parse(s, dim, base).map_err(|e| syntax(line, e.to_string()))?
                }
                None if *name == "u" => return Err(r.missing("u")),
                None => {}
            }
        }
        r.finish()?;

        let mut oracle = OracleConfig::default();
        if let Some(sec) = raw.section("oracle") {
            let mut r = Reader::new(sec);
            oracle.lower = r.bool("lower")?.unwrap_or(oracle.lower);
            oracle.upper = r.bool("upper")?.unwrap_or(oracle.upper);
            if let Some(v) = r.list_f64("x0")? {
                oracle.x0 = Some(point_from(&v, dim).ok_or_else(|| Error::Config(format!("[oracle] x0 needs {dim} entries")))?);
            }
            oracle.seed_radius = r.f64("seed_radius")?;
            oracle.r1 = r.f64("r1")?;
            oracle.tau_start = r.f64("tau_start")?.unwrap_or(oracle.tau_start);
            oracle.margin = r.f64("margin")?.unwrap_or(oracle.margin);
            r.finish()?;
            if !(oracle.margin >= 0.0) || !(oracle.tau_start > 0.0 && oracle.tau_start < 1.0) {
                return Err(Error::Config("[oracle] needs margin >= 0 and tau_start in (0, 1)".into()));
            }
        }

        let mut output = OutputConfig::default();
        if let Some(sec) = raw.section("output") {
            let mut r = Reader::new(sec);
            if let Some((d, _)) = r.string("dir") {
                output.dir = PathBuf::from(d);
            }
            output.seed = r.u64("seed")?.unwrap_or(0);
            r.finish()?;
        }

        let lattice = match raw.section("lattice") {
            None => None,
            Some(sec) => {
                let mut r = Reader::new(sec);
                let kernel = match r.string("kernel") {
                    None | Some(("pushing", _)) => Kernel::Pushing,
                    Some(("volume_filling", _)) => Kernel::VolumeFilling,
                    Some(("quorum_pushing", _)) => Kernel::QuorumPushing,
                    Some((other, line)) => return Err(syntax(line, format!("unknown kernel `{other}`"))),
                };
                let sites = r.u64("sites")?.ok_or_else(|| r.missing("sites"))? as usize;
                let cfg = LatticeConfig {
                    sites,
                    spacing: r.req_f64("spacing")?,
                    origin: r.f64("origin")?.unwrap_or(0.0),
                    u_max: r.u64("u_max")?.ok_or_else(|| r.missing("u_max"))?,
                    particles: r.u64("particles")?.ok_or_else(|| r.missing("particles"))?,
                    load_site: r.u64("load_site")?.map_or(sites / 2, |s| s as usize),
                    kernel,
                    m: r.f64("m")?.unwrap_or(model.m),
                    alpha: r.f64("alpha")?.unwrap_or(1.0),
                    beta: r.f64("beta")?.unwrap_or(0.0),
                    end_time: r.req_f64("end_time")?,
                    seeds: r.u64("seeds")?.map_or(10, |s| s as usize),
                    cells_per_bin: r.u64("cells_per_bin")?.map_or(1, |s| s as usize),
                    leap: r.f64("leap")?.unwrap_or(crate::lattice::LEAP_LIMIT),
                };
                r.finish()?;
                cfg.validate()?;
                Some(cfg)
            }
        };

        let sweep = match raw.section("sweep") {
            None => None,
            Some(sec) => {
                let mut r = Reader::new(sec);
                let (key, line) = r.string("key").ok_or_else(|| r.missing("key"))?;
                let (section, key) = key
                    .split_once('.')
                    .ok_or_else(|| syntax(line, "sweep key must look like `section.key`"))?;
                if section == "sweep" {
                    return Err(syntax(line, "cannot sweep over the [sweep] section"));
                }
                let (values, _) = r.string("values").ok_or_else(|| r.missing("values"))?;
                let values: Vec<String> = values.split(';').map(|v| v.trim().to_string()).collect();
                r.finish()?;
                if values.iter().any(String::is_empty) {
                    return Err(Error::Config("sweep values are `;`-separated and must be nonempty".into()));
                }
                Some(SweepConfig {
                    section: section.to_string(),
                    key: key.to_string(),
                    values,
                })
            }
        };

        Ok(RunConfig {
            model,
            grid,
            solver,
            initial,
            oracle,
            output,
            lattice,
            sweep,
        })
    }

    pub fn to_raw(&self) -> RawConfig {
        let dim = self.grid.dim();
        let mut raw = RawConfig::default();
        let m = &self.model;
        raw.set("model", "m", &format!("{:?}", m.m));
        raw.set("model", "delta", &format!("{:?}", m.delta));
        raw.set("model", "mu", &format!("{:?}", m.mu));
        raw.set("model", "r", &format!("{:?}", m.r));
        raw.set("model", "phi", &m.phi.to_string());
        raw.set("model", "eps_reg", &format!("{:?}", m.eps_reg));

        let g = &self.grid;
        raw.set("grid", "dim", &dim.to_string());
        let cells = g.cells();
        let cells = if dim == 1 { cells[0].to_string() } else { format!("{}, {}", cells[0], cells[1]) };
        raw.set("grid", "cells", &cells);
        raw.set("grid", "extent", &fmt_point(g.extent(), dim));
        raw.set("grid", "origin", &fmt_point(g.origin(), dim));

        let s = &self.solver;
        raw.set("solver", "cfl_safety", &format!("{:?}", s.cfl_safety));
        raw.set("solver", "end_time", &format!("{:?}", s.end_time));
        raw.set("solver", "output_stride", &s.output_stride.to_string());
        raw.set("solver", "clip_negative", &s.clip_negative.to_string());
        raw.set("solver", "chemo_upwind", &s.chemo_upwind.to_string());
        let stepper = match s.v_z_stepper {
            VzStepper::SemiImplicit => "semi-implicit",
            VzStepper::Explicit => "explicit",
        };
        raw.set("solver", "v_z_stepper", stepper);
        if let Some(dt) = s.dt_max {
            raw.set("solver", "dt_max", &format!("{dt:?}"));
        }
        raw.set("solver", "linear_tol", &format!("{:?}", s.linear_tol));
        if let Some(c) = s.support_center {
            raw.set("solver", "support_center", &fmt_point(c, dim));
        }
        raw.set("solver", "support_threshold", &format!("{:?}", s.support_threshold));

        for (slot, name) in FIELD_NAMES.iter().enumerate() {
            raw.set("initial", name, &self.initial[slot].format(dim));
        }

        let o = &self.oracle;
        raw.set("oracle", "lower", &o.lower.to_string());
        raw.set("oracle", "upper", &o.upper.to_string());
        if let Some(x0) = o.x0 {
            raw.set("oracle", "x0", &fmt_point(x0, dim));
        }
        if let Some(r) = o.seed_radius {
            raw.set("oracle", "seed_radius", &format!("{r:?}"));
        }
        if let Some(r) = o.r1 {
            raw.set("oracle", "r1", &format!("{r:?}"));
        }
        raw.set("oracle", "tau_start", &format!("{:?}", o.tau_start));
        raw.set("oracle", "margin", &format!("{:?}", o.margin));

        raw.set("output", "dir", &self.output.dir.display().to_string());
        raw.set("output", "seed", &self.output.seed.to_string());

        if let Some(l) = &self.lattice {
            raw.set("lattice", "sites", &l.sites.to_string());
            raw.set("lattice", "spacing", &format!("{:?}", l.spacing));
            raw.set("lattice", "origin", &format!("{:?}", l.origin));
            raw.set("lattice", "u_max", &l.u_max.to_string());
            raw.set("lattice", "particles", &l.particles.to_string());
            raw.set("lattice", "load_site", &l.load_site.to_string());
            raw.set("lattice", "kernel", kernel_name(l.kernel));
            raw.set("lattice", "m", &format!("{:?}", l.m));
            raw.set("lattice", "alpha", &format!("{:?}", l.alpha));
            raw.set("lattice", "beta", &format!("{:?}", l.beta));
            raw.set("lattice", "end_time", &format!("{:?}", l.end_time));
            raw.set("lattice", "seeds", &l.seeds.to_string());
            raw.set("lattice", "cells_per_bin", &l.cells_per_bin.to_string());
            raw.set("lattice", "leap", &format!("{:?}", l.leap));
        }
        if let Some(sw) = &self.sweep {
            raw.set("sweep", "key", &format!("{}.{}", sw.section, sw.key));
            raw.set("sweep", "values", &sw.values.join("; "));
        }
        raw
    }

    pub fn to_text(&self) -> String {
        self.to_raw().to_text()
    }

    pub fn initial_state(&self) -> Result<StateQuad> {
        let [u, v, w, z] = [0, 1, 2, 3].map(|slot| self.initial[slot].build(&self.grid, slot));
        StateQuad::new(u?, v?, w?, z?, 0.0)
    }

    /// Configurations of each sweep point, in the order of the listed values.
    pub fn sweep_points(&self) -> Result<Vec<RunConfig>> {
        let Some(sw) = &self.sweep else {
            return Ok(vec![self.clone()]);
        };
        let mut base = self.to_raw();
        base.sections.retain(|s| s.name != "sweep");
        sw.values
            .iter()
            .map(|v| {
                let mut raw = base.clone();
                raw.set(&sw.section, &sw.key, v);
                RunConfig::from_raw(&raw, None)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASIC: &str = "\
# standard bump
[model]
m = 2.0
phi = linear_switch(1.0)

[grid]
cells = 64
extent = 1.0

[solver]
end_time = 0.01   # short

[initial]
u = bump(0.5, 0.15, 0.5)
w = cosine(0.5, 0.3, 2)
";

    #[test]
    fn parses_basic_file() {
        let c = parse_config(BASIC).unwrap();
        assert_eq!(c.model.m, 2.0);
        assert_eq!(c.model.phi, Sensitivity::LinearSwitch(1.0));
        assert_eq!(c.grid.cells(), [64, 1]);
        assert_eq!(c.solver.end_time, 0.01);
        assert_eq!(c.initial[1], InitialSpec::Constant(0.0));
        let s = c.initial_state().unwrap();
        assert!((s.u.max() - 0.5).abs() < 0.01);
        assert!((s.w.mean() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn bad_m_names_the_bound() {
        let err = parse_config(&BASIC.replace("m = 2.0", "m = 0.5")).unwrap_err();
        assert!(err.to_string().contains("m must exceed 1"), "{err}");
    }

    #[test]
    fn missing_section_is_named() {
        let text = BASIC.replace("[grid]\ncells = 64\nextent = 1.0\n", "");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("[grid]"), "{err}");
    }

    #[test]
    fn unknown_keys_and_syntax_errors_carry_line_numbers() {
        let err = parse_config(&BASIC.replace("phi = ", "phy = ")).unwrap_err();
        assert!(matches!(err, Error::ConfigSyntax { line: 4, .. }), "{err}");
        let err = parse_config(&BASIC.replace("end_time = 0.01", "end_time 0.01")).unwrap_err();
        assert!(matches!(err, Error::ConfigSyntax { line: 11, .. }), "{err}");
        let err = parse_config(&BASIC.replace("cells = 64", "cells = many")).unwrap_err();
        assert!(matches!(err, Error::ConfigSyntax { line: 7, .. }), "{err}");
        assert!(parse_config(&format!("{BASIC}\n[extra]\nx = 1\n")).is_err());
        assert!(parse_config("m = 2\n").is_err());
    }

    #[test]
    fn round_trip_is_exact() {
        let mut c = parse_config(BASIC).unwrap();
        c.model.mu = 0.1 + 0.2;
        c.solver.dt_max = Some(1.0 / 3.0);
        c.model.phi = Sensitivity::table(vec![(0.0, 1.0), (0.7, 0.3), (2.0, -0.2)]).unwrap();
        let back = parse_config(&c.to_text()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn two_dimensional_grid_and_points() {
        let text = "[model]\nm = 3\n[grid]\ndim = 2\ncells = 16, 8\nextent = 2, 1\norigin = -1, 0\n\
                    [solver]\nend_time = 1\nsupport_center = 0, 0.5\n[initial]\nu = bump(0, 0.5, 0.3, 1)\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.grid.cells(), [16, 8]);
        assert_eq!(c.solver.support_center, Some([0.0, 0.5]));
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
        assert!(parse_config(&text.replace("bump(0, 0.5, 0.3, 1)", "bump(0, 0.3, 1)")).is_err());
    }

    #[test]
    fn sweep_points_override_one_key() {
        let text = format!("{BASIC}\n[sweep]\nkey = model.mu\nvalues = 0.5; 1.0; 2.0\n");
        let c = parse_config(&text).unwrap();
        let pts = c.sweep_points().unwrap();
        assert_eq!(pts.iter().map(|p| p.model.mu).collect::<Vec<_>>(), vec![0.5, 1.0, 2.0]);
        assert!(pts.iter().all(|p| p.sweep.is_none()));
        let bad = format!("{BASIC}\n[sweep]\nkey = model.m\nvalues = 0.5\n");
        assert!(parse_config(&bad).unwrap().sweep_points().is_err());
    }

    #[test]
    fn sensitivity_forms() {
        assert_eq!(parse_sensitivity("constant(0.5)").unwrap(), Sensitivity::Constant(0.5));
        assert!(parse_sensitivity("constant(2)").is_err());
        assert!(parse_sensitivity("table(0:1, 0.5:0)").is_err());
        assert!(parse_sensitivity("wiggle(1)").is_err());
    }

    #[test]
    fn missing_snapshot_path_is_rejected() {
        let text = BASIC.replace("bump(0.5, 0.15, 0.5)", "snapshot(/definitely/not/here.bin)");
        let err = parse_config(&text).unwrap_err();
        assert!(err.to_string().contains("does not exist"), "{err}");
    }
}
