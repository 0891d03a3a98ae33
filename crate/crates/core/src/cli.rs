//! Configuration-driven runs: config parsing and validation, the run modes,
//! and field/report/VTK export.
//!
//! A configuration is a bracketed-section `key = value` file (TOML syntax;
//! strings quoted, lists in brackets). Unknown sections and keys are
//! rejected. See the README for the full key reference.

use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toml::{Table, Value};

use crate::dielectric::DielectricParams;
use crate::energy2d::{reduced_dielectric, EnergyBreakdown, Loads, PlateState, Representation};
use crate::error::Error;
use crate::foundation::{MaterialParams, Regime};
use crate::gauss2d::{electrostatic_work, solve_gauss_with, BoundaryData, GaussProblem};
use crate::grid::{BoundarySpec, Edge, Grid2, MechBc, PhiBc, ScalarField2};
use crate::limit3d::{upper_bound_trend, UpperBoundSetup};
use crate::microlam::{laminate_profile, mollify_laminate, weak_convergence_check};
use crate::qtensor::{make_frank, make_uniaxial, QSet, QTensor};
use crate::solver::{
    minimize_actuation, minimize_relaxed, reflection_residual, solve_minmax, thread_pool, MinMaxOptions, PlateProblem,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_SOLVER: i32 = 3;

pub const CSV_HEADER: &str = "x,y,zeta1,zeta2,zeta3,phi";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Mode {
    Actuate,
    Minmax,
    Relax,
    GammaCheck,
    LaminateCheck,
    GaussDemo,
}

impl Mode {
    pub fn parse(s: &str) -> Option<Mode> {
        Some(match s {
            "actuate" => Mode::Actuate,
            "minmax" => Mode::Minmax,
            "relax" => Mode::Relax,
            "gamma-check" => Mode::GammaCheck,
            "laminate-check" => Mode::LaminateCheck,
            "gauss-demo" => Mode::GaussDemo,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Actuate => "actuate",
            Mode::Minmax => "minmax",
            Mode::Relax => "relax",
            Mode::GammaCheck => "gamma-check",
            Mode::LaminateCheck => "laminate-check",
            Mode::GaussDemo => "gauss-demo",
        }
    }

    fn needs_q(self) -> bool {
        matches!(self, Mode::Actuate | Mode::LaminateCheck | Mode::GaussDemo)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum QSpec {
    Frank(Vector3<f64>),
    Uniaxial(f64, Vector3<f64>),
    Biaxial([f64; 6]),
    Zero,
}

impl QSpec {
    pub fn tensor(&self) -> crate::Result<QTensor> {
        match self {
            QSpec::Frank(n) => make_frank(n),
            QSpec::Uniaxial(s, n) => make_uniaxial(*s, n),
            QSpec::Biaxial(e) => {
                let q = QTensor::from_entries(*e);
                if !q.is_in(QSet::Biaxial, crate::qtensor::MEMBERSHIP_TOL) {
                    return Err(Error::InvalidArgument("biaxial entries are not an admissible order tensor".into()));
                }
                Ok(q)
            }
            QSpec::Zero => Ok(QTensor::zero()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outputs {
    pub csv: Option<PathBuf>,
    pub report: Option<PathBuf>,
    pub vtk: Option<PathBuf>,
    pub table: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub mode: Mode,
    pub regime: Regime,
    pub seed: u64,
    pub threads: Option<usize>,
    pub grid: Grid2,
    pub mp: MaterialParams,
    pub dp: DielectricParams,
    pub q: QSpec,
    pub bc: BoundarySpec,
    pub phi0: BoundaryData,
    pub f3: f64,
    pub outputs: Outputs,
    pub gamma_eps: Vec<f64>,
    /// Coefficients of `ζ₃ = c₀ + c₁x₁²x₂² + c₂x₁x₂` for the trend run.
    pub gamma_zeta3: [f64; 3],
    pub minmax_set: QSet,
    pub minmax_starts: usize,
    pub laminate_eta: f64,
    pub laminate_delta: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Level {
    Error,
    Warning,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub key: String,
    pub message: String,
    pub level: Level,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.level {
            Level::Error => write!(f, "{}: {}", self.key, self.message),
            Level::Warning => write!(f, "{}: warning: {}", self.key, self.message),
        }
    }
}

const SCHEMA: &[(&str, &[&str])] = &[
    ("run", &["mode", "regime", "seed", "threads"]),
    ("grid", &["nx", "ny", "lx", "ly"]),
    ("material", &["nu"]),
    ("dielectric", &["eps_perp", "eps_par"]),
    ("order", &["q_spec", "director", "s", "entries"]),
    ("boundary", &["left", "right", "bottom", "top"]),
    ("potential", &["a0", "a", "dirichlet", "nodes"]),
    ("loads", &["f3"]),
    ("output", &["csv", "report", "vtk", "table"]),
    ("gamma", &["eps", "zeta3"]),
    ("minmax", &["set", "starts"]),
    ("laminate", &["eta", "delta"]),
];

struct Reader<'a> {
    root: &'a Table,
    diags: Vec<Diagnostic>,
}

impl<'a> Reader<'a> {
    fn err(&mut self, key: &str, msg: impl Into<String>) {
        self.diags.push(Diagnostic { key: key.into(), message: msg.into(), level: Level::Error });
    }

    fn warn(&mut self, key: &str, msg: impl Into<String>) {
        self.diags.push(Diagnostic { key: key.into(), message: msg.into(), level: Level::Warning });
    }

    fn raw(&self, sec: &str, key: &str) -> Option<&'a Value> {
        self.root.get(sec).and_then(|s| s.as_table()).and_then(|t| t.get(key))
    }

    fn num(&mut self, sec: &str, key: &str) -> Option<f64> {
        let v = self.raw(sec, key)?;
        let out = match v {
            Value::Float(f) => Some(*f),
            Value::Integer(i) => Some(*i as f64),
            _ => None,
        };
        if out.is_none() {
            self.err(&format!("{sec}.{key}"), "expected a number");
        }
        out
    }

    fn num_or(&mut self, sec: &str, key: &str, default: f64) -> f64 {
        self.num(sec, key).unwrap_or(default)
    }

    fn count(&mut self, sec: &str, key: &str) -> Option<usize> {
        let v = self.raw(sec, key)?;
        match v.as_integer() {
            Some(i) if i >= 0 => Some(i as usize),
            _ => {
                self.err(&format!("{sec}.{key}"), "expected a non-negative integer");
                None
            }
        }
    }

    fn string(&mut self, sec: &str, key: &str) -> Option<String> {
        let v = self.raw(sec, key)?;
        match v.as_str() {
            Some(s) => Some(s.to_string()),
            None => {
                self.err(&format!("{sec}.{key}"), "expected a quoted string");
                None
            }
        }
    }

    fn list(&mut self, sec: &str, key: &str) -> Option<Vec<f64>> {
        let v = self.raw(sec, key)?;
        let out: Option<Vec<f64>> = v.as_array().and_then(|a| {
            a.iter()
                .map(|x| match x {
                    Value::Float(f) => Some(*f),
                    Value::Integer(i) => Some(*i as f64),
                    _ => None,
                })
                .collect()
        });
        if out.is_none() {
            self.err(&format!("{sec}.{key}"), "expected a list of numbers");
        }
        out
    }

    fn fixed<const N: usize>(&mut self, sec: &str, key: &str) -> Option<[f64; N]> {
        let v = self.list(sec, key)?;
        if v.len() != N {
            self.err(&format!("{sec}.{key}"), format!("expected {N} numbers, got {}", v.len()));
            return None;
        }
        Some(std::array::from_fn(|i| v[i]))
    }
}

fn check_schema(root: &Table, r: &mut Vec<Diagnostic>) {
    for (sec, val) in root {
        let Some((_, keys)) = SCHEMA.iter().find(|(s, _)| s == sec) else {
            r.push(Diagnostic { key: sec.clone(), message: "unknown section".into(), level: Level::Error });
            continue;
        };
        let Some(t) = val.as_table() else {
            r.push(Diagnostic { key: sec.clone(), message: "expected a [section]".into(), level: Level::Error });
            continue;
        };
        for k in t.keys() {
            if !keys.contains(&k.as_str()) {
                r.push(Diagnostic { key: format!("{sec}.{k}"), message: "unknown key".into(), level: Level::Error });
            }
        }
    }
}

/// Parses and validates a configuration. Succeeds only without error
/// diagnostics; warnings are returned either way.
pub fn load_config(text: &str) -> (Option<RunConfig>, Vec<Diagnostic>) {
    let root: Table = match text.parse() {
        Ok(t) => t,
        Err(e) => {
            let msg = e.message().to_string();
            return (None, vec![Diagnostic { key: "config".into(), message: msg, level: Level::Error }]);
        }
    };
    let mut diags = Vec::new();
    check_schema(&root, &mut diags);
    let mut r = Reader { root: &root, diags };
    let cfg = read_config(&mut r);
    let diags = r.diags;
    let ok = diags.iter().all(|d| d.level == Level::Warning);
    (if ok { cfg } else { None }, diags)
}

/// Validation only: `key: message` diagnostics, no side effects.
pub fn validate(text: &str) -> Vec<Diagnostic> {
    load_config(text).1
}

fn read_config(r: &mut Reader) -> Option<RunConfig> {
    let mode = match r.string("run", "mode") {
        Some(s) => match Mode::parse(&s) {
            Some(m) => Some(m),
            None => {
                r.err("run.mode", format!("unknown mode '{s}'"));
                None
            }
        },
        None => {
            r.err("run.mode", "missing");
            None
        }
    };
    let regime = match r.string("run", "regime").as_deref() {
        None | Some("thin") => Regime::Thin,
        Some("thick") => Regime::Thick,
        Some(s) => {
            r.err("run.regime", format!("expected thin or thick, got '{s}'"));
            Regime::Thin
        }
    };
    let seed = r.count("run", "seed").unwrap_or(0) as u64;
    let threads = r.count("run", "threads");

    let nx = r.count("grid", "nx").unwrap_or(65);
    let ny = r.count("grid", "ny").unwrap_or(nx);
    let lx = r.num_or("grid", "lx", 1.0);
    let ly = r.num_or("grid", "ly", 1.0);
    let grid = Grid2::new(nx, ny, lx, ly).map_err(|e| r.err("grid", e.to_string())).ok();

    let nu = r.num_or("material", "nu", 0.3);
    let mp = MaterialParams::new(nu).map_err(|e| r.err("material.nu", e.to_string())).ok();
    if let Some(m) = mp {
        if m.check_convex().is_err() {
            r.err("material.nu", format!("Poisson ratio {nu} makes the plate energy non-convex; use 0 <= nu < 0.5"));
        }
    }
    let dp = DielectricParams::new(r.num_or("dielectric", "eps_perp", 1.0), r.num_or("dielectric", "eps_par", 4.0))
        .map_err(|e| r.err("dielectric", e.to_string()))
        .ok();

    let q = read_q(r, mode);
    if let (Some(QSpec::Frank(_) | QSpec::Uniaxial(..) | QSpec::Biaxial(_)), Regime::Thick) = (&q, regime) {
        if let Ok(t) = q.as_ref().unwrap().tensor() {
            if t.get(0, 2).abs() > 0.0 || t.get(1, 2).abs() > 0.0 {
                r.warn("order.q_spec", "thick regime: the foundation ignores in-plane displacements, so Q13 and Q23 have no effect");
            }
        }
    }

    let mut bc = BoundarySpec::clamped();
    for e in Edge::ALL {
        match r.string("boundary", e.name()).as_deref() {
            None | Some("clamped") => {}
            Some("free") => bc.set_mech(e, MechBc::Free),
            Some(s) => r.err(&format!("boundary.{}", e.name()), format!("expected clamped or free, got '{s}'")),
        }
    }
    let a0 = r.num_or("potential", "a0", 0.0);
    let a = r.fixed::<2>("potential", "a").unwrap_or([0.0, 0.0]);
    if let Some(v) = r.raw("potential", "dirichlet") {
        let names: Option<Vec<String>> = v.as_array().and_then(|a| a.iter().map(|x| x.as_str().map(String::from)).collect());
        match names {
            Some(names) => {
                for e in Edge::ALL {
                    bc.set_phi(e, PhiBc::Natural);
                }
                for n in names {
                    match Edge::parse(&n) {
                        Some(e) => bc.set_phi(e, PhiBc::Dirichlet),
                        None => r.err("potential.dirichlet", format!("unknown edge '{n}'")),
                    }
                }
            }
            None => r.err("potential.dirichlet", "expected a list of edge names"),
        }
    }
    let mut phi0 = BoundaryData::affine(a0, a);
    if let Some(v) = r.raw("potential", "nodes") {
        let triples: Option<Vec<(i64, i64, f64)>> = v.as_array().and_then(|a| {
            a.iter()
                .map(|t| match t.as_array().map(|t| t.as_slice()) {
                    Some([i, j, x]) => Some((i.as_integer()?, j.as_integer()?, x.as_float().or(x.as_integer().map(|n| n as f64))?)),
                    _ => None,
                })
                .collect()
        });
        match (triples, grid.as_ref()) {
            (None, _) => r.err("potential.nodes", "expected a list of [i, j, value] triples"),
            (Some(ts), Some(g)) => {
                for (i, j, val) in ts {
                    if i < 0 || j < 0 || i as usize >= g.nx || j as usize >= g.ny {
                        r.err("potential.nodes", format!("node ({i}, {j}) lies outside the grid"));
                        continue;
                    }
                    let k = g.idx(i as usize, j as usize);
                    if !Edge::ALL.iter().any(|&e| g.on_edge(k, e) && bc.phi_at(e) == PhiBc::Dirichlet) {
                        r.err("potential.nodes", format!("node ({i}, {j}) is not on a Dirichlet edge"));
                        continue;
                    }
                    phi0.overrides.push((k, val));
                }
            }
            (Some(_), None) => {}
        }
    }
    if !phi0.is_zero() && !bc.has_dirichlet() {
        r.err("potential.dirichlet", "a nonzero potential needs at least one Dirichlet edge");
    }
    let f3 = r.num_or("loads", "f3", 0.0);

    let path = |r: &mut Reader, k: &str| r.string("output", k).map(PathBuf::from);
    let outputs = Outputs { csv: path(r, "csv"), report: path(r, "report"), vtk: path(r, "vtk"), table: path(r, "table") };

    let gamma_eps = r.list("gamma", "eps").unwrap_or_default();
    let gamma_zeta3 = r.fixed::<3>("gamma", "zeta3").unwrap_or([0.0, 0.5, -0.2]);
    if mode == Some(Mode::GammaCheck) {
        if gamma_eps.len() < 2 {
            r.err("gamma.eps", "gamma-check needs at least two thickness ratios");
        }
        if gamma_eps.iter().any(|e| !(*e > 0.0 && *e < 0.25)) {
            r.err("gamma.eps", "thickness ratios must lie in (0, 0.25)");
        }
    }
    let minmax_set = match r.string("minmax", "set").as_deref() {
        None | Some("frank") => QSet::Frank,
        Some("uniaxial") => QSet::Uniaxial,
        Some("biaxial") => QSet::Biaxial,
        Some(s) => {
            r.err("minmax.set", format!("expected frank, uniaxial or biaxial, got '{s}'"));
            QSet::Frank
        }
    };
    let minmax_starts = r.count("minmax", "starts").unwrap_or(8);
    if minmax_starts == 0 {
        r.err("minmax.starts", "at least one start is required");
    }
    let laminate_eta = r.num_or("laminate", "eta", 0.05);
    let laminate_delta = r.num_or("laminate", "delta", 0.005);
    if mode == Some(Mode::LaminateCheck) && !(laminate_eta > 0.0 && laminate_delta >= 0.0 && laminate_delta < 0.25 * laminate_eta) {
        r.err("laminate", "need eta > 0 and 0 <= delta < eta/4");
    }
    if threads == Some(0) {
        r.err("run.threads", "thread count must be positive");
    }
    Some(RunConfig {
        mode: mode?,
        regime,
        seed,
        threads,
        grid: grid?,
        mp: mp?,
        dp: dp?,
        q: q.unwrap_or(QSpec::Zero),
        bc,
        phi0,
        f3,
        outputs,
        gamma_eps,
        gamma_zeta3,
        minmax_set,
        minmax_starts,
        laminate_eta,
        laminate_delta,
    })
}

fn read_q(r: &mut Reader, mode: Option<Mode>) -> Option<QSpec> {
    let kind = r.string("order", "q_spec");
    let needed = mode.is_some_and(Mode::needs_q);
    let kind = match kind {
        Some(k) => k,
        None => {
            if needed {
                r.err("order.q_spec", "required for this mode");
            }
            return None;
        }
    };
    let dir = |r: &mut Reader| -> Option<Vector3<f64>> {
        match r.fixed::<3>("order", "director") {
            Some(d) if Vector3::from(d).norm() > 0.0 => Some(Vector3::from(d).normalize()),
            Some(_) => {
                r.err("order.director", "director must be nonzero");
                None
            }
            None => {
                if r.raw("order", "director").is_none() {
                    r.err("order.director", format!("missing director for {kind} q_spec"));
                }
                None
            }
        }
    };
    let q = match kind.as_str() {
        "frank" => QSpec::Frank(dir(r)?),
        "uniaxial" => {
            let n = dir(r);
            let s = r.num("order", "s");
            if s.is_none() && r.raw("order", "s").is_none() {
                r.err("order.s", "missing order parameter for uniaxial q_spec");
            }
            QSpec::Uniaxial(s?, n?)
        }
        "biaxial" => {
            let e = r.fixed::<6>("order", "entries");
            if e.is_none() && r.raw("order", "entries").is_none() {
                r.err("order.entries", "missing 6 entries (11, 22, 33, 12, 13, 23) for biaxial q_spec");
            }
            QSpec::Biaxial(e?)
        }
        "zero" => QSpec::Zero,
        other => {
            r.err("order.q_spec", format!("expected frank, uniaxial, biaxial or zero, got '{other}'"));
            return None;
        }
    };
    if let Err(e) = q.tensor() {
        r.err("order", e.to_string());
        return None;
    }
    Some(q)
}

/// Writes nodal fields, `x` fastest, 17 significant digits.
pub fn write_csv<W: Write>(w: W, g: &Grid2, ps: &PlateState, phi: Option<&ScalarField2>) -> std::io::Result<()> {
    let mut wr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w);
    wr.write_record(CSV_HEADER.split(','))?;
    for k in 0..g.nn() {
        let (x, y) = g.coords(k);
        let z = ps.zeta_prime.values[k];
        let p = phi.map_or(0.0, |f| f.values[k]);
        let rec = [x, y, z[0], z[1], ps.zeta3.values[k], p].map(|v| format!("{v:.16e}"));
        wr.write_record(&rec)?;
    }
    wr.flush()
}

/// Reads a field CSV back; rows must follow the grid's node order.
pub fn read_csv<R: std::io::Read>(r: R, g: &Grid2) -> crate::Result<(PlateState, ScalarField2)> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(|e| Error::InvalidArgument(e.to_string()))?.clone();
    if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(Error::InvalidArgument(format!("unexpected CSV header, expected {CSV_HEADER}")));
    }
    let mut u = Vec::with_capacity(3 * g.nn());
    let mut phi = Vec::with_capacity(g.nn());
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let v: Vec<f64> = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|e| Error::InvalidArgument(format!("bad number '{s}': {e}"))))
            .collect::<crate::Result<_>>()?;
        if v.len() != 6 {
            return Err(Error::InvalidArgument("CSV row must have 6 columns".into()));
        }
        u.extend_from_slice(&v[2..5]);
        phi.push(v[5]);
    }
    if phi.len() != g.nn() {
        return Err(Error::InvalidArgument(format!("CSV has {} rows, grid has {} nodes", phi.len(), g.nn())));
    }
    Ok((PlateState::from_dofs(g, &u, Representation::Interface), ScalarField2::from_values(g, phi)?))
}

/// Legacy ASCII VTK with `zeta` as VECTORS and `phi` as SCALARS.
pub fn write_vtk<W: Write>(mut w: W, g: &Grid2, ps: &PlateState, phi: Option<&ScalarField2>) -> std::io::Result<()> {
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "nematoplate fields")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET STRUCTURED_POINTS")?;
    writeln!(w, "DIMENSIONS {} {} 1", g.nx, g.ny)?;
    writeln!(w, "ORIGIN 0 0 0")?;
    writeln!(w, "SPACING {:.16e} {:.16e} 1", g.hx, g.hy)?;
    writeln!(w, "POINT_DATA {}", g.nn())?;
    writeln!(w, "VECTORS zeta double")?;
    for k in 0..g.nn() {
        let z = ps.zeta_prime.values[k];
        writeln!(w, "{:.16e} {:.16e} {:.16e}", z[0], z[1], ps.zeta3.values[k])?;
    }
    writeln!(w, "SCALARS phi double 1")?;
    writeln!(w, "LOOKUP_TABLE default")?;
    for k in 0..g.nn() {
        writeln!(w, "{:.16e}", phi.map_or(0.0, |f| f.values[k]))?;
    }
    Ok(())
}

/// Flat `key = value` report.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Report {
    pub entries: Vec<(String, String)>,
}

impl Report {
    pub fn num(&mut self, k: &str, v: f64) {
        self.entries.push((k.into(), format!("{v:.16e}")));
    }

    pub fn text(&mut self, k: &str, v: impl fmt::Display) {
        self.entries.push((k.into(), v.to_string()));
    }

    pub fn breakdown(&mut self, b: &EnergyBreakdown) {
        for (k, v) in b.entries() {
            self.num(k, v);
        }
    }

    pub fn get(&self, k: &str) -> Option<&str> {
        self.entries.iter().find(|(a, _)| a == k).map(|(_, v)| v.as_str())
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Everything a run produced.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutput {
    pub report: Report,
    pub fields: Option<(PlateState, Option<ScalarField2>)>,
    pub table: Option<String>,
}

fn problem(cfg: &RunConfig) -> PlateProblem {
    let mut pb = PlateProblem::new(cfg.grid, cfg.bc);
    pb.mp = cfg.mp;
    pb.dp = cfg.dp;
    pb.regime = cfg.regime;
    pb
}

fn phi0(cfg: &RunConfig) -> Option<&BoundaryData> {
    (!cfg.phi0.is_zero()).then_some(&cfg.phi0)
}

/// Executes a validated configuration without touching the filesystem.
pub fn execute(cfg: &RunConfig) -> crate::Result<RunOutput> {
    let pool = thread_pool(cfg.threads)?;
    pool.install(|| execute_inner(cfg))
}

fn execute_inner(cfg: &RunConfig) -> crate::Result<RunOutput> {
    let pb = problem(cfg);
    let g = &cfg.grid;
    let mut rep = Report::default();
    rep.text("mode", cfg.mode.name());
    rep.text("regime", cfg.regime.name());
    let mut fields = None;
    let mut table = None;
    match cfg.mode {
        Mode::Actuate => {
            let q = cfg.q.tensor()?;
            let (ps, phi, r) = minimize_actuation(&pb, &q, phi0(cfg))?;
            rep.breakdown(&r.breakdown);
            rep.text("iterations", r.iterations);
            rep.num("grad_norm", r.grad_norm);
            rep.text("trace_monotone", r.trace_is_monotone(1e-12));
            rep.num("max_abs_zeta3", ps.zeta3.max_abs());
            rep.num("reflection_residual_x1", reflection_residual(g, &ps, 0));
            rep.num("reflection_residual_x2", reflection_residual(g, &ps, 1));
            fields = Some((ps, phi));
        }
        Mode::Minmax => {
            let opts = MinMaxOptions { set: cfg.minmax_set, starts: cfg.minmax_starts, threads: cfg.threads, ..Default::default() };
            let res = solve_minmax(&pb, phi0(cfg), &opts)?;
            rep.breakdown(&res.report.breakdown);
            for (name, v) in ["q11", "q22", "q33", "q12", "q13", "q23"].iter().zip(res.qbar.entries()) {
                rep.num(name, v);
            }
            rep.text("basins", res.basins.len());
            rep.text("outer_iterations", res.report.iterations);
            rep.num("stationarity", res.report.grad_norm);
            fields = Some((res.state, res.phi));
        }
        Mode::Relax => {
            let loads = if cfg.f3 == 0.0 { Loads::zero(g) } else { Loads::transverse(g, |_, _| cfg.f3) };
            let (ps, r) = minimize_relaxed(&pb, &loads)?;
            rep.breakdown(&r.breakdown);
            rep.text("iterations", r.iterations);
            rep.text("converged", r.converged);
            rep.text("trace_monotone", r.trace_is_monotone(1e-12));
            fields = Some((ps, None));
        }
        Mode::GammaCheck => {
            let c = cfg.gamma_zeta3;
            let ps = PlateState::from_fns(g, |_, _| 0.0, |_, _| 0.0, |x, y| c[0] + c[1] * x * x * y * y + c[2] * x * y, Representation::Interface);
            let t = upper_bound_trend(g, &ps, &cfg.gamma_eps, &UpperBoundSetup::default(), &cfg.mp)?;
            rep.text("rows", t.rows.len());
            rep.text("gap_strictly_decreasing", t.strictly_decreasing_gap());
            rep.text("gap_positive", t.all_gaps_positive());
            if let Some(o) = t.fitted_order() {
                rep.num("gap_order", o);
            }
            table = Some(t.to_text());
        }
        Mode::LaminateCheck => {
            let q = cfg.q.tensor()?;
            let lf = laminate_profile(&q, cfg.laminate_eta, &Vector3::x())?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let s0 = rng.gen::<f64>() * cfg.laminate_eta;
            let wc = weak_convergence_check(&lf, &q, &[4.37, 16.37, 64.37], s0);
            let cell = lf.cell_average().entries();
            let err = cell.iter().zip(q.entries()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            rep.text("variants", lf.variants.len());
            rep.num("cell_average_error", err);
            rep.num("window_offset", s0);
            for (w, e) in wc.widths.iter().zip(&wc.errors) {
                rep.num(&format!("window_error_{w:.6}"), *e);
            }
            if let Some(rate) = wc.rate {
                rep.num("weak_rate", rate);
            }
            let (_, tr) = mollify_laminate(&lf, cfg.laminate_delta)?;
            rep.num("transition_fraction", tr.fraction);
            rep.num("curvature_per_period", tr.curvature);
        }
        Mode::GaussDemo => {
            let q = cfg.q.tensor()?;
            let b = reduced_dielectric(&q, &cfg.dp)?;
            let gp = GaussProblem { b, phi0: cfg.phi0.clone(), bc: cfg.bc };
            let (phi, r) = solve_gauss_with(&gp, g, None)?;
            rep.num("b11", b.b[(0, 0)]);
            rep.num("b12", b.b[(0, 1)]);
            rep.num("b22", b.b[(1, 1)]);
            rep.num("electrostatic_work", electrostatic_work(g, &phi, &b));
            rep.text("iterations", r.iterations);
            rep.num("rel_residual", r.rel_residual);
            fields = Some((PlateState::zeros(g, Representation::Interface), Some(phi)));
        }
    }
    Ok(RunOutput { report: rep, fields, table })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() { p.to_path_buf() } else { base.join(p) }
}

fn write_file(path: &Path, f: impl FnOnce(&mut std::io::BufWriter<std::fs::File>) -> std::io::Result<()>) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    f(&mut w)?;
    w.flush()
}

/// Runs a configuration file and returns the process exit code. Output
/// paths are relative to the configuration file; without a report path the
/// report goes to standard output. Diagnostics go to standard error.
pub fn run(config: &Path) -> i32 {
    let text = match std::fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("config: cannot read {}: {e}", config.display());
            return EXIT_CONFIG;
        }
    };
    let (cfg, diags) = load_config(&text);
    for d in &diags {
        eprintln!("{d}");
    }
    let Some(cfg) = cfg else { return EXIT_CONFIG };
    let out = match execute(&cfg) {
        Ok(o) => o,
        Err(e @ Error::InvalidArgument(_)) => {
            eprintln!("config: {e}");
            return EXIT_CONFIG;
        }
        Err(e) => {
            eprintln!("solver: {e}");
            return EXIT_SOLVER;
        }
    };
    for key in ["reflection_residual_x2", "gap_strictly_decreasing"] {
        if let Some(v) = out.report.get(key) {
            eprintln!("{key} = {v}");
        }
    }
    let base = config.parent().unwrap_or(Path::new("."));
    let o = &cfg.outputs;
    let res = (|| -> std::io::Result<()> {
        if let (Some(p), Some((ps, phi))) = (&o.csv, &out.fields) {
            write_file(&resolve(base, p), |w| write_csv(w, &cfg.grid, ps, phi.as_ref()))?;
        }
        if let (Some(p), Some((ps, phi))) = (&o.vtk, &out.fields) {
            write_file(&resolve(base, p), |w| write_vtk(w, &cfg.grid, ps, phi.as_ref()))?;
        }
        match &o.report {
            Some(p) => write_file(&resolve(base, p), |w| w.write_all(out.report.render().as_bytes()))?,
            None => print!("{}", out.report.render()),
        }
        if let Some(t) = &out.table {
            match &o.table {
                Some(p) => write_file(&resolve(base, p), |w| w.write_all(t.as_bytes()))?,
                None => print!("{t}"),
            }
        }
        Ok(())
    })();
    if let Err(e) = res {
        eprintln!("output: {e}");
        return EXIT_SOLVER;
    }
    EXIT_OK
}

#[cfg(test)]
mod tests {
    use super::*;

    fn errors(text: &str) -> Vec<String> {
        validate(text).into_iter().filter(|d| d.level == Level::Error).map(|d| d.to_string()).collect()
    }

    #[test]
    fn validation_examples() {
        let e = errors("[run]\nmode = \"actuate\"\n[order]\nq_spec = \"frank\"\n");
        assert!(e.iter().any(|l| l.starts_with("order.director:")), "{e:?}");
        let e = errors("[run]\nmode = \"relax\"\n[material]\nnu = 0.6\n");
        assert!(e.iter().any(|l| l.starts_with("material.nu:")), "{e:?}");
        let w = validate("[run]\nmode = \"actuate\"\nregime = \"thick\"\n[order]\nq_spec = \"frank\"\ndirector = [1, 0, 1]\n");
        assert!(w.iter().any(|d| d.level == Level::Warning && d.key == "order.q_spec"));
        assert!(w.iter().all(|d| d.level == Level::Warning));
        let e = errors("[run]\nmode = \"relax\"\ncolour = 3\n[extra]\n");
        assert_eq!(e.len(), 2, "{e:?}");
        assert!(!errors("[run]\nmode = \"relax\"\n").iter().any(|_| true));
        assert!(!errors("mode = relax").is_empty());
    }

    #[test]
    fn potential_node_overrides() {
        let base = "[run]\nmode = \"gauss-demo\"\n[grid]\nnx = 9\n[order]\nq_spec = \"zero\"\n[potential]\na = [1.0, 0.0]\ndirichlet = [\"left\", \"right\"]\n";
        let (cfg, d) = load_config(&format!("{base}nodes = [[8, 4, 2.5]]\n"));
        assert!(d.is_empty(), "{d:?}");
        assert_eq!(cfg.unwrap().phi0.overrides, vec![(Grid2::unit(9).unwrap().idx(8, 4), 2.5)]);
        let e = errors(&format!("{base}nodes = [[4, 4, 1.0], [9, 0, 1.0]]\n"));
        assert_eq!(e.len(), 2, "{e:?}");
        assert!(e.iter().all(|l| l.starts_with("potential.nodes:")));
    }

    #[test]
    fn relax_zero_load_reports_zero() {
        let (cfg, d) = load_config("[run]\nmode = \"relax\"\n[grid]\nnx = 9\n");
        assert!(d.is_empty());
        let out = execute(&cfg.unwrap()).unwrap();
        let total: f64 = out.report.get("total").unwrap().parse().unwrap();
        assert!(total.abs() < 1e-10);
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let g = Grid2::unit(6).unwrap();
        let ps = PlateState::from_fns(&g, |x, _| (x * 7.1).sin() / 3.0, |x, y| x * y / 7.0, |x, _| 1e-17 + x.exp(), Representation::Interface);
        let phi = g.sample(|x, y| 0.1 + x - y / 3.0);
        let mut buf = Vec::new();
        write_csv(&mut buf, &g, &ps, Some(&phi)).unwrap();
        assert!(buf.starts_with(b"x,y,zeta1,zeta2,zeta3,phi\n"));
        let (ps2, phi2) = read_csv(&buf[..], &g).unwrap();
        assert_eq!(ps2, ps);
        assert_eq!(phi2, phi);
        let mut vtk = Vec::new();
        write_vtk(&mut vtk, &g, &ps, Some(&phi)).unwrap();
        let s = String::from_utf8(vtk).unwrap();
        assert!(s.contains("DATASET STRUCTURED_POINTS") && s.contains("VECTORS zeta double") && s.contains("SCALARS phi double 1"));
    }
}
