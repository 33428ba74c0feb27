//! Experiment configs, seeding and CSV/JSON reports.

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};

use crate::caps::Caps;
use crate::dense::{relative_entropy, tv_distance, DenseDistribution};
use crate::error::{invalid, Error, Result};
use crate::evolution::{collide_dense_capped, matched_gibbs};
use crate::fields::solve_fields_capped;
use crate::frag::{estimate_extinction, uniform_with_rho0, ProcessKind, ProcessSpec};
use crate::graph::GraphWeights;
use crate::ising::{gibbs_distribution_capped, FieldVector, InteractionMatrix, Model};
use crate::kac::{run_population, solve_fields_kac, InitialLaw, EMPIRICAL_MAX_N};
use crate::kernels::{audit_kernel, kernel_matrix, DynamicsKind, KERNEL_MATRIX_MAX_N};
use crate::stats::{derive_seed, fit_exponential, trial_rng, Proportion};
use crate::tree::{tree_sample_glauber_naive, BlockTreeSampler, LazyGlauberTree, LazyRule};

/// Environment variable that overrides the config seed.
pub const SEED_ENV: &str = "NONLINSPIN_SEED";

/// TV values below this are treated as round-off and left out of rate fits.
pub const FIT_FLOOR: f64 = 1e-13;

/// Residual allowed by the kernel audit.
pub const AUDIT_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ExperimentKind {
    TvCurve,
    EntropyCurve,
    Extinction,
    Coupon,
    BranchingTail,
    KacCompare,
    FieldInfer,
    KernelAudit,
    TreeSample,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 9] = [
        ExperimentKind::TvCurve,
        ExperimentKind::EntropyCurve,
        ExperimentKind::Extinction,
        ExperimentKind::Coupon,
        ExperimentKind::BranchingTail,
        ExperimentKind::KacCompare,
        ExperimentKind::FieldInfer,
        ExperimentKind::KernelAudit,
        ExperimentKind::TreeSample,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::TvCurve => "tv-curve",
            ExperimentKind::EntropyCurve => "entropy-curve",
            ExperimentKind::Extinction => "extinction",
            ExperimentKind::Coupon => "coupon",
            ExperimentKind::BranchingTail => "branching-tail",
            ExperimentKind::KacCompare => "kac-compare",
            ExperimentKind::FieldInfer => "field-infer",
            ExperimentKind::KernelAudit => "kernel-audit",
            ExperimentKind::TreeSample => "tree-sample",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ExperimentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| invalid(format!("unknown experiment '{s}'")))
    }
}

/// Where the couplings come from.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelSpec {
    File(PathBuf),
    /// Uniform[−1,1] entries on every pair, rescaled to the Dobrushin norm.
    Random {
        n: usize,
        norm: f64,
        seed: u64,
    },
    Uniform {
        n: usize,
        value: f64,
    },
    /// Uniform couplings with Σ_y p_xy = ρ_0.
    Rho0 {
        n: usize,
        rho0: f64,
    },
    Zero(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub enum FieldSpec {
    /// The fields of a model file, zero otherwise.
    FromModel,
    Zero,
    /// Uniform in [−1,1].
    Random(u64),
    Values(Vec<f64>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldSolver {
    Exact,
    Kac,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TreeRule {
    Star,
    NeededSet,
    Naive,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Option<ExperimentKind>,
    pub model: ModelSpec,
    pub fields: FieldSpec,
    pub init: String,
    pub dynamics: DynamicsKind,
    pub t_grid: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub caps: Caps,
    pub fit_from: usize,
    pub population: usize,
    pub site: usize,
    pub exponent: f64,
    pub tol: f64,
    pub solver: FieldSolver,
    pub sampler: TreeRule,
    pub target: Option<Vec<f64>>,
    pub base_dir: PathBuf,
    /// Hex SHA-256 of the config text.
    pub hash: String,
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    v.trim()
        .parse::<T>()
        .map_err(|e| invalid(format!("{key}: bad value '{v}': {e}")))
}

fn parse_list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>>
where
    T::Err: fmt::Display,
{
    v.split(',').map(|s| parse_num(key, s)).collect()
}

fn parse_model(v: &str) -> Result<ModelSpec> {
    let w: Vec<&str> = v.split_whitespace().collect();
    let num = |i: usize| {
        w.get(i)
            .copied()
            .ok_or_else(|| invalid(format!("model: missing argument in '{v}'")))
    };
    Ok(match w.first().copied() {
        Some("random") if w.len() == 4 => ModelSpec::Random {
            n: parse_num("model", num(1)?)?,
            norm: parse_num("model", num(2)?)?,
            seed: parse_num("model", num(3)?)?,
        },
        Some("uniform") if w.len() == 3 => ModelSpec::Uniform {
            n: parse_num("model", num(1)?)?,
            value: parse_num("model", num(2)?)?,
        },
        Some("rho0") if w.len() == 3 => ModelSpec::Rho0 {
            n: parse_num("model", num(1)?)?,
            rho0: parse_num("model", num(2)?)?,
        },
        Some("zero") if w.len() == 2 => ModelSpec::Zero(parse_num("model", num(1)?)?),
        Some(path) if w.len() == 1 => ModelSpec::File(PathBuf::from(path)),
        _ => return Err(invalid(format!("model: cannot parse '{v}'"))),
    })
}

fn parse_fields(v: &str) -> Result<FieldSpec> {
    let w: Vec<&str> = v.split_whitespace().collect();
    match w.as_slice() {
        ["zero"] => Ok(FieldSpec::Zero),
        ["model"] => Ok(FieldSpec::FromModel),
        ["random", s] => Ok(FieldSpec::Random(parse_num("fields", s)?)),
        _ => Ok(FieldSpec::Values(parse_list("fields", v)?)),
    }
}

impl ExperimentConfig {
    /// Parses flat `key = value` lines; `#` starts a comment. Relative paths resolve against `base_dir`.
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg = ExperimentConfig {
            experiment: None,
            model: ModelSpec::Zero(0),
            fields: FieldSpec::FromModel,
            init: "uniform".into(),
            dynamics: DynamicsKind::Block,
            t_grid: (0..=20).collect(),
            trials: 1000,
            seed: 0,
            output: None,
            caps: Caps::default(),
            fit_from: 2,
            population: 10_000,
            site: 0,
            exponent: 0.8,
            tol: 1e-12,
            solver: FieldSolver::Exact,
            sampler: TreeRule::Star,
            target: None,
            base_dir: base_dir.to_path_buf(),
            hash: hex(&Sha256::digest(text.as_bytes())),
        };
        let mut seen = BTreeSet::new();
        let mut have_model = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| Error::Parse { line: i + 1, msg };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got '{line}'")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key '{key}'")));
            }
            let wrap = |e: Error| match e {
                Error::Invalid(m) => err(m),
                other => other,
            };
            match key {
                "experiment" => cfg.experiment = Some(value.parse().map_err(wrap)?),
                "model" => {
                    cfg.model = parse_model(value).map_err(wrap)?;
                    have_model = true;
                }
                "fields" => cfg.fields = parse_fields(value).map_err(wrap)?,
                "init" => cfg.init = value.to_string(),
                "dynamics" => cfg.dynamics = value.parse().map_err(wrap)?,
                "t_max" => {
                    cfg.t_grid = (0..=parse_num::<usize>(key, value).map_err(wrap)?).collect()
                }
                "t" => cfg.t_grid = parse_list(key, value).map_err(wrap)?,
                "trials" => cfg.trials = parse_num(key, value).map_err(wrap)?,
                "seed" => cfg.seed = parse_num(key, value).map_err(wrap)?,
                "output" => cfg.output = Some(PathBuf::from(value)),
                "fit_from" => cfg.fit_from = parse_num(key, value).map_err(wrap)?,
                "population" => cfg.population = parse_num(key, value).map_err(wrap)?,
                "site" => cfg.site = parse_num(key, value).map_err(wrap)?,
                "exponent" => cfg.exponent = parse_num(key, value).map_err(wrap)?,
                "tol" => cfg.tol = parse_num(key, value).map_err(wrap)?,
                "solver" => {
                    cfg.solver = match value {
                        "exact" => FieldSolver::Exact,
                        "kac" => FieldSolver::Kac,
                        _ => {
                            return Err(err(format!("solver must be exact or kac, got '{value}'")))
                        }
                    }
                }
                "sampler" => {
                    cfg.sampler = match value {
                        "star" => TreeRule::Star,
                        "needed-set" => TreeRule::NeededSet,
                        "naive" => TreeRule::Naive,
                        _ => {
                            return Err(err(format!(
                                "sampler must be star, needed-set or naive, got '{value}'"
                            )))
                        }
                    }
                }
                "target" => cfg.target = Some(parse_list(key, value).map_err(wrap)?),
                "cap.exact" => cfg.caps.exact = parse_num(key, value).map_err(wrap)?,
                "cap.exchange" => cfg.caps.exchange = parse_num(key, value).map_err(wrap)?,
                "cap.dense_block" => cfg.caps.dense_block = parse_num(key, value).map_err(wrap)?,
                "cap.dense_glauber" => {
                    cfg.caps.dense_glauber = parse_num(key, value).map_err(wrap)?
                }
                "cap.tree_depth" => cfg.caps.tree_depth = parse_num(key, value).map_err(wrap)?,
                "cap.fragments" => cfg.caps.fragments = parse_num(key, value).map_err(wrap)?,
                "cap.work" => cfg.caps.work = parse_num(key, value).map_err(wrap)?,
                _ => return Err(err(format!("unknown key '{key}'"))),
            }
        }
        if !have_model {
            return Err(invalid("missing required key 'model'"));
        }
        if cfg.trials == 0 {
            return Err(invalid("trials must be at least 1"));
        }
        if cfg.t_grid.is_empty() || cfg.t_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("t grid must be nonempty and strictly increasing"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::parse(&text, &base)
    }

    /// Applies `NONLINSPIN_SEED` and then an explicit seed, in increasing precedence.
    pub fn apply_seed_overrides(&mut self, env: Option<&str>, explicit: Option<u64>) -> Result<()> {
        if let Some(v) = env {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| invalid(format!("{SEED_ENV}: bad seed '{v}'")))?;
        }
        if let Some(s) = explicit {
            self.seed = s;
        }
        Ok(())
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn t_max(&self) -> usize {
        *self.t_grid.last().expect("nonempty grid")
    }

    pub fn build_model(&self) -> Result<Model> {
        let rng_for = |seed: u64| trial_rng(seed, 0);
        let (j, file_h) = match &self.model {
            ModelSpec::File(p) => {
                let m = Model::load(&self.resolve(p))?;
                (m.j, Some(m.h))
            }
            ModelSpec::Random { n, norm, seed } => (
                InteractionMatrix::random(*n, *norm, &mut rng_for(*seed))?,
                None,
            ),
            ModelSpec::Uniform { n, value } => (InteractionMatrix::uniform(*n, *value)?, None),
            ModelSpec::Rho0 { n, rho0 } => (uniform_with_rho0(*n, *rho0)?, None),
            ModelSpec::Zero(n) => (InteractionMatrix::zeros(*n)?, None),
        };
        let n = j.n();
        let h = match &self.fields {
            FieldSpec::FromModel => file_h.unwrap_or_else(|| FieldVector::zeros(n)),
            FieldSpec::Zero => FieldVector::zeros(n),
            FieldSpec::Random(seed) => {
                let mut r = rng_for(*seed);
                FieldVector::new((0..n).map(|_| r.random_range(-1.0..=1.0)).collect())
            }
            FieldSpec::Values(v) => {
                if v.len() != n {
                    return Err(Error::Dimension {
                        expected: n,
                        got: v.len(),
                    });
                }
                FieldVector::new(v.clone())
            }
        };
        Ok(Model { j, h })
    }

    /// Parses `init`. Besides the laws of `InitialLaw::parse`, `random-product <seed>` draws
    /// marginals uniformly from [0.1, 0.9] and `random-dense <seed>` draws weights uniformly from
    /// [0.1, 1] for every configuration.
    pub fn initial_law(&self, n: usize) -> Result<InitialLaw> {
        let w: Vec<&str> = self.init.split_whitespace().collect();
        match w.as_slice() {
            ["random-product", seed] => {
                let mut r = trial_rng(parse_num("init", seed)?, 0);
                return InitialLaw::product((0..n).map(|_| r.random_range(0.1..0.9)).collect());
            }
            ["random-dense", seed] => {
                if n > self.caps.exact {
                    return Err(Error::CapExceeded {
                        what: "dense initial law",
                        value: n,
                        cap: self.caps.exact,
                    });
                }
                let mut r = trial_rng(parse_num("init", seed)?, 0);
                let weights = (0..1usize << n)
                    .map(|_| r.random_range(0.1..=1.0))
                    .collect();
                return Ok(InitialLaw::Dense(DenseDistribution::from_weights(
                    n, weights,
                )?));
            }
            _ => {}
        }
        InitialLaw::parse(&self.init, n, Some(&self.base_dir))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// A CSV table under construction.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: &str, header: &[&str]) -> Self {
        Table {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }
}

fn f(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-4 || v.abs() >= 1e15) {
        format!("{v:e}")
    } else {
        format!("{v}")
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(f).unwrap_or_default()
}

/// Tables, summary fields and extra text files produced by one experiment.
#[derive(Clone, Debug, Default)]
pub struct Report {
    pub tables: Vec<Table>,
    pub summary: Map<String, Value>,
    pub files: Vec<(String, String)>,
}

impl Report {
    fn table(&mut self, t: Table) -> usize {
        self.tables.push(t);
        self.tables.len() - 1
    }

    fn set(&mut self, key: &str, v: Value) {
        self.summary.insert(key.into(), v);
    }
}

/// Files written by a run, its JSON summary and the error that stopped it, if any.
#[derive(Debug)]
pub struct RunOutcome {
    pub files: Vec<PathBuf>,
    pub summary: Value,
    pub error: Option<Error>,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        self.error.as_ref().map_or(0, Error::exit_code)
    }
}

/// Runs one experiment and writes `<name>.csv` tables plus `<kind>.json` into `out_dir`.
/// A failure part-way still writes whatever rows were produced.
pub fn run_experiment(
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
    out_dir: &Path,
) -> Result<RunOutcome> {
    if let Some(k) = cfg.experiment {
        if k != kind {
            return Err(invalid(format!("config is for '{k}', not '{kind}'")));
        }
    }
    let mut report = Report::default();
    let result = match kind {
        ExperimentKind::TvCurve => curve(cfg, &mut report, false),
        ExperimentKind::EntropyCurve => curve(cfg, &mut report, true),
        ExperimentKind::Extinction => extinction(cfg, &mut report, ProcessKind::Fragmentation),
        ExperimentKind::Coupon => extinction(cfg, &mut report, ProcessKind::Coupon),
        ExperimentKind::BranchingTail => branching_tail(cfg, &mut report),
        ExperimentKind::KacCompare => kac_compare(cfg, &mut report),
        ExperimentKind::FieldInfer => field_infer(cfg, &mut report),
        ExperimentKind::KernelAudit => kernel_audit(cfg, &mut report),
        ExperimentKind::TreeSample => tree_sample(cfg, &mut report),
    };
    fs::create_dir_all(out_dir)?;
    let comment = format!("# config_hash={} seed={}", &cfg.hash[..16], cfg.seed);
    let mut files = Vec::new();
    for t in &report.tables {
        let path = out_dir.join(format!("{}.csv", t.name));
        let mut w = csv::WriterBuilder::new().from_writer(Vec::new());
        w.write_record(&t.header).map_err(csv_err)?;
        for r in &t.rows {
            w.write_record(r).map_err(csv_err)?;
        }
        let body = w
            .into_inner()
            .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
        let mut text = comment.clone().into_bytes();
        text.push(b'\n');
        text.extend(body);
        fs::write(&path, text)?;
        files.push(path);
    }
    for (name, contents) in &report.files {
        let path = out_dir.join(name);
        fs::write(&path, format!("{comment}\n{contents}"))?;
        files.push(path);
    }
    let mut summary = report.summary;
    summary.insert("experiment".into(), json!(kind.name()));
    summary.insert("config_hash".into(), json!(cfg.hash));
    summary.insert("seed".into(), json!(cfg.seed));
    let status = match &result {
        Ok(()) => "ok",
        Err(Error::CapExceeded { .. }) => "cap_exceeded",
        Err(Error::Numerical(_) | Error::Degenerate { .. }) => "numerical_failure",
        Err(_) => "invalid",
    };
    summary.insert("status".into(), json!(status));
    if let Err(e) = &result {
        summary.insert("error".into(), json!(e.to_string()));
    }
    let summary = Value::Object(summary);
    let path = out_dir.join(format!("{}.json", kind.name()));
    fs::write(
        &path,
        serde_json::to_string_pretty(&summary).expect("json") + "\n",
    )?;
    files.push(path);
    Ok(RunOutcome {
        files,
        summary,
        error: result.err(),
    })
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

fn fit_json(points: &[(f64, f64)]) -> Value {
    match fit_exponential(points) {
        Some(fit) => serde_json::to_value(fit).expect("json"),
        None => Value::Null,
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

fn curve(cfg: &ExperimentConfig, rep: &mut Report, entropy: bool) -> Result<()> {
    let model = cfg.build_model()?;
    let j = &model.j;
    let n = j.n();
    let p0 = cfg.initial_law(n)?.to_dense(&cfg.caps)?;
    let target = matched_gibbs(&p0, j, cfg.tol, &cfg.caps)?;
    let name = if entropy { "entropy-curve" } else { "tv-curve" };
    let idx = rep.table(Table::new(
        name,
        &["t", "tv", "relative_entropy", "min_prob", "bound"],
    ));
    let bound = |t: usize| {
        (j.is_zero() && cfg.dynamics == DynamicsKind::Block)
            .then(|| binomial(n, 2) * 0.5f64.powi(t as i32))
    };
    let grid: BTreeSet<usize> = cfg.t_grid.iter().copied().collect();
    let mut cur = p0;
    let mut tv_points = Vec::new();
    let mut prev_d: Option<f64> = None;
    let (mut increases, mut bound_violations) = (0usize, 0usize);
    let mut last = (0.0, 0.0);
    for t in 0..=cfg.t_max() {
        if t > 0 {
            cur = collide_dense_capped(&cur, &cur, cfg.dynamics, j, &cfg.caps)?;
        }
        if !grid.contains(&t) {
            continue;
        }
        let tv = tv_distance(&cur, &target)?;
        let d = relative_entropy(&cur, &target)?;
        if let Some(pd) = prev_d {
            if d >= pd {
                increases += 1;
            }
        }
        prev_d = Some(d);
        if bound(t).is_some_and(|b| tv > b) {
            bound_violations += 1;
        }
        if t >= cfg.fit_from && tv > FIT_FLOOR {
            tv_points.push((t as f64, tv));
        }
        last = (tv, d);
        rep.tables[idx].push(vec![
            t.to_string(),
            f(tv),
            f(d),
            f(cur.min_prob()),
            opt(bound(t)),
        ]);
    }
    rep.set("n", json!(n));
    rep.set("dynamics", json!(cfg.dynamics.to_string()));
    rep.set("dobrushin_norm", json!(crate::ising::dobrushin_norm(j)));
    rep.set("fit", fit_json(&tv_points));
    rep.set("final_tv", json!(last.0));
    rep.set("final_relative_entropy", json!(last.1));
    rep.set("entropy_increases", json!(increases));
    rep.set("bound_violations", json!(bound_violations));
    Ok(())
}

fn extinction(cfg: &ExperimentConfig, rep: &mut Report, kind: ProcessKind) -> Result<()> {
    let model = cfg.build_model()?;
    let spec = ProcessSpec {
        kind,
        j: model.j.clone(),
        guard: cfg.caps.fragments,
    };
    let est = estimate_extinction(&spec, &cfg.t_grid, cfg.trials, cfg.seed)?;
    let name = if kind == ProcessKind::Coupon {
        "coupon"
    } else {
        "extinction"
    };
    let idx = rep.table(Table::new(
        name,
        &[
            "t",
            "trials",
            "alive_count",
            "p_hat",
            "ci_lo",
            "ci_hi",
            "bound",
        ],
    ));
    let mut points = Vec::new();
    let mut violations = 0;
    let mut guard_hits = 0;
    for e in &est {
        let a = e.alive;
        rep.tables[idx].push(vec![
            e.t.to_string(),
            a.trials.to_string(),
            a.count.to_string(),
            f(a.p_hat),
            f(a.ci_lo),
            f(a.ci_hi),
            opt(e.bound),
        ]);
        if e.bound.is_some_and(|b| !a.consistent_with_upper_bound(b)) {
            violations += 1;
        }
        if e.t >= cfg.fit_from && a.p_hat > 0.0 {
            points.push((e.t as f64, a.p_hat));
        }
        guard_hits = guard_hits.max(e.guard_hits);
    }
    rep.set("process", json!(kind.to_string()));
    rep.set("n", json!(model.j.n()));
    rep.set("rho_0", json!(GraphWeights::new(&model.j).rho_0()));
    rep.set("fit", fit_json(&points));
    rep.set("bound_violations", json!(violations));
    rep.set("guard_hits", json!(guard_hits));
    Ok(())
}

fn tail_row(quantity: &str, ell: usize, p: Proportion, bound: f64) -> Vec<String> {
    vec![
        quantity.into(),
        ell.to_string(),
        p.trials.to_string(),
        p.count.to_string(),
        f(p.p_hat),
        f(p.ci_lo),
        f(p.ci_hi),
        f(bound),
    ]
}

fn branching_tail(cfg: &ExperimentConfig, rep: &mut Report) -> Result<()> {
    let model = cfg.build_model()?;
    let w = GraphWeights::new(&model.j);
    let n = model.j.n();
    if cfg.site >= n {
        return Err(invalid(format!("site {} out of range for n={n}", cfg.site)));
    }
    let y = cfg.site;
    let t_max = cfg.t_max();
    let trials = cfg.trials as u64;
    let runs: Vec<Vec<usize>> = (0..trials)
        .into_par_iter()
        .map(|i| {
            crate::frag::run_labeled_branching_with(
                y,
                &w,
                t_max,
                cfg.caps.fragments,
                &mut trial_rng(cfg.seed, i),
            )
            .map(|r| r.sizes)
        })
        .collect::<Result<_>>()?;
    let idx = rep.table(Table::new("branching-tail", &["t", "trials", "mean", "se"]));
    let mut means = Vec::new();
    for &t in &cfg.t_grid {
        let vals: Vec<f64> = runs
            .iter()
            .map(|s| {
                let total: usize = if t == 0 { 1 } else { s[..t].iter().sum() };
                2f64.powf(cfg.exponent * total as f64)
            })
            .collect();
        let k = vals.len() as f64;
        let mean = vals.iter().sum::<f64>() / k;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
        means.push(mean);
        rep.tables[idx].push(vec![
            t.to_string(),
            trials.to_string(),
            f(mean),
            f((var / k).sqrt()),
        ]);
    }
    let rho0 = w.rho_0();
    let comp_master = derive_seed(cfg.seed, 1);
    let star_master = derive_seed(cfg.seed, 2);
    let comps: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|i| w.component_of(y, &mut trial_rng(comp_master, i)).len())
        .collect();
    let stars: Vec<usize> = (0..trials)
        .into_par_iter()
        .map(|i| {
            w.star_sample(y, &mut trial_rng(star_master, i))
                .vertices()
                .len()
                .saturating_sub(1)
        })
        .collect();
    let tidx = rep.table(Table::new(
        "component-tail",
        &[
            "quantity", "ell", "trials", "count", "p_hat", "ci_lo", "ci_hi", "bound",
        ],
    ));
    let mut violations = 0;
    for ell in 2..=6usize {
        let p = Proportion::new(comps.iter().filter(|&&c| c >= ell).count() as u64, trials);
        let b = 2.0 * (4.0 * rho0).powi(ell as i32 - 1);
        violations += !p.consistent_with_upper_bound(b) as usize;
        rep.tables[tidx].push(tail_row("component", ell, p, b));
    }
    for ell in 1..=6usize {
        let p = Proportion::new(stars.iter().filter(|&&c| c >= ell).count() as u64, trials);
        let b = rho0.powi(ell as i32);
        violations += !p.consistent_with_upper_bound(b) as usize;
        rep.tables[tidx].push(tail_row("neighborhood", ell, p, b));
    }
    let (lo, hi) = means
        .iter()
        .fold((f64::INFINITY, 0f64), |(a, b), &m| (a.min(m), b.max(m)));
    rep.set("rho_0", json!(rho0));
    rep.set("exponent", json!(cfg.exponent));
    rep.set("moment_relative_spread", json!((hi - lo) / lo));
    rep.set("tail_violations", json!(violations));
    Ok(())
}

fn kac_compare(cfg: &ExperimentConfig, rep: &mut Report) -> Result<()> {
    let model = cfg.build_model()?;
    let j = &model.j;
    let n = j.n();
    let law = cfg.initial_law(n)?;
    let mut rng = trial_rng(cfg.seed, 0);
    let run = run_population(
        &law,
        cfg.population,
        cfg.dynamics,
        j,
        cfg.t_max(),
        &cfg.caps,
        &mut rng,
    )?;
    let dense_cap = match cfg.dynamics {
        DynamicsKind::Block => cfg.caps.dense_block,
        DynamicsKind::Glauber => cfg.caps.dense_glauber,
    }
    .min(EMPIRICAL_MAX_N);
    let mut exact = if n <= dense_cap {
        Some(law.to_dense(&cfg.caps)?)
    } else {
        None
    };
    let idx = rep.table(Table::new(
        "kac-compare",
        &["t", "tv_to_evolve", "magnetization_drift"],
    ));
    let mut header = vec!["t".to_string(), "site".into(), "marginal".into()];
    header.extend((0..n).map(|y| format!("corr_{y}")));
    let sidx = rep.table(Table {
        name: "kac-stats".into(),
        header,
        rows: Vec::new(),
    });
    let grid: BTreeSet<usize> = cfg.t_grid.iter().copied().collect();
    let mut max_tv: Option<f64> = None;
    for st in &run.stats {
        if st.t > 0 {
            if let Some(e) = exact.as_mut() {
                *e = collide_dense_capped(e, e, cfg.dynamics, j, &cfg.caps)?;
            }
        }
        if !grid.contains(&st.t) {
            continue;
        }
        let tv = match (&exact, &st.empirical) {
            (Some(e), Some(emp)) => Some(tv_distance(emp, e)?),
            _ => None,
        };
        if let Some(v) = tv {
            max_tv = Some(max_tv.map_or(v, |m: f64| m.max(v)));
        }
        rep.tables[idx].push(vec![st.t.to_string(), opt(tv), "0".into()]);
        let mut corr = vec![vec![0.0; n]; n];
        for &(x, y, c) in &st.correlations {
            corr[x][y] = c;
            corr[y][x] = c;
        }
        for x in 0..n {
            let mut row = vec![st.t.to_string(), x.to_string(), f(st.marginals[x])];
            row.extend(corr[x].iter().map(|&c| f(c)));
            rep.tables[sidx].push(row);
        }
    }
    let invariant = run.population.magnetization() == run.initial_magnetization;
    rep.set("n", json!(n));
    rep.set("population", json!(cfg.population));
    rep.set("max_tv_to_evolve", json!(max_tv));
    rep.set("magnetization_invariant", json!(invariant));
    if !invariant {
        return Err(Error::Numerical("population magnetization changed".into()));
    }
    Ok(())
}

fn field_infer(cfg: &ExperimentConfig, rep: &mut Report) -> Result<()> {
    let model = cfg.build_model()?;
    let j = &model.j;
    let n = j.n();
    let (target, truth) = match &cfg.target {
        Some(t) => (t.clone(), None),
        None => (
            gibbs_distribution_capped(j, &model.h, cfg.caps.exact)?.marginals(),
            Some(model.h.clone()),
        ),
    };
    let (h, se, best_effort) = match cfg.solver {
        FieldSolver::Exact => (
            solve_fields_capped(j, &target, cfg.tol, &cfg.caps)?,
            None,
            false,
        ),
        FieldSolver::Kac => {
            let mut rng = trial_rng(cfg.seed, 0);
            let est = solve_fields_kac(
                j,
                &target,
                cfg.dynamics,
                cfg.population,
                cfg.t_max(),
                &cfg.caps,
                &mut rng,
            )?;
            (est.h, Some(est.se), est.best_effort)
        }
    };
    let idx = rep.table(Table::new(
        "field-infer",
        &[
            "site",
            "target_marginal",
            "h_true",
            "h_solved",
            "abs_error",
            "se",
        ],
    ));
    let mut max_err: Option<f64> = None;
    for x in 0..n {
        let hs = h.as_slice()[x];
        let ht = truth.as_ref().map(|t| t.as_slice()[x]);
        let err = ht.map(|v| (v - hs).abs());
        if let Some(e) = err {
            max_err = Some(max_err.map_or(e, |m: f64| m.max(e)));
        }
        rep.tables[idx].push(vec![
            x.to_string(),
            f(target[x]),
            opt(ht),
            f(hs),
            opt(err),
            opt(se.as_ref().map(|s| s[x])),
        ]);
    }
    rep.set("n", json!(n));
    rep.set(
        "solver",
        json!(if cfg.solver == FieldSolver::Exact {
            "exact"
        } else {
            "kac"
        }),
    );
    rep.set("best_effort", json!(best_effort));
    rep.set("max_abs_error", json!(max_err));
    Ok(())
}

fn kernel_audit(cfg: &ExperimentConfig, rep: &mut Report) -> Result<()> {
    let model = cfg.build_model()?;
    let j = &model.j;
    let n = j.n();
    if n > KERNEL_MATRIX_MAX_N {
        return Err(Error::CapExceeded {
            what: "kernel matrix",
            value: n,
            cap: KERNEL_MATRIX_MAX_N,
        });
    }
    let mut rng = trial_rng(cfg.seed, 0);
    let mut measures = vec![gibbs_distribution_capped(j, &model.h, cfg.caps.exact)?];
    for _ in 0..cfg.trials {
        let h = FieldVector::new((0..n).map(|_| rng.random_range(-1.0..=1.0)).collect());
        measures.push(gibbs_distribution_capped(j, &h, cfg.caps.exact)?);
    }
    let idx = rep.table(Table::new(
        "kernel-audit",
        &[
            "dynamics",
            "measures",
            "row_sum",
            "exchange",
            "min_diagonal",
            "detailed_balance",
        ],
    ));
    let mut worst: f64 = 0.0;
    let mut min_diag = f64::INFINITY;
    for kind in [DynamicsKind::Block, DynamicsKind::Glauber] {
        let a = audit_kernel(&kernel_matrix(kind, j)?, &measures);
        worst = worst.max(a.row_sum).max(a.exchange).max(a.detailed_balance);
        min_diag = min_diag.min(a.min_diagonal);
        rep.tables[idx].push(vec![
            kind.to_string(),
            measures.len().to_string(),
            f(a.row_sum),
            f(a.exchange),
            f(a.min_diagonal),
            f(a.detailed_balance),
        ]);
    }
    rep.set("n", json!(n));
    rep.set("max_residual", json!(worst));
    rep.set("min_diagonal", json!(min_diag));
    if worst > AUDIT_TOL || min_diag <= 0.0 {
        return Err(Error::Numerical(format!(
            "kernel audit residual {worst:e}, min diagonal {min_diag:e}"
        )));
    }
    Ok(())
}

fn tree_sample(cfg: &ExperimentConfig, rep: &mut Report) -> Result<()> {
    let model = cfg.build_model()?;
    let j = &model.j;
    let n = j.n();
    let law = cfg.initial_law(n)?;
    let t = cfg.t_max();
    let trials = cfg.trials as u64;
    let draws: Vec<(u64, u64, u64)> = match (cfg.dynamics, cfg.sampler) {
        (DynamicsKind::Block, _) => {
            BlockTreeSampler::new(&law, j, t, &cfg.caps)?;
            (0..trials)
                .into_par_iter()
                .map_init(
                    || BlockTreeSampler::new(&law, j, t, &cfg.caps).expect("validated"),
                    |s, i| s.sample(&mut trial_rng(cfg.seed, i)).map(|c| (c.0, 0, 0)),
                )
                .collect::<Result<_>>()?
        }
        (DynamicsKind::Glauber, TreeRule::Naive) => (0..trials)
            .into_par_iter()
            .map(|i| {
                tree_sample_glauber_naive(&law, j, t, &cfg.caps, &mut trial_rng(cfg.seed, i))
                    .map(|c| (c.0, 0, 0))
            })
            .collect::<Result<_>>()?,
        (DynamicsKind::Glauber, rule) => {
            let rule = if rule == TreeRule::Star {
                LazyRule::StarRevealing
            } else {
                LazyRule::NeededSet
            };
            let tree = LazyGlauberTree::new(&law, j, rule, &cfg.caps)?;
            (0..trials)
                .into_par_iter()
                .map(|i| {
                    tree.sample(t, &mut trial_rng(cfg.seed, i))
                        .map(|s| (s.config.0, s.nodes, s.visits))
                })
                .collect::<Result<_>>()?
        }
    };
    let mut text = String::new();
    for d in &draws {
        text.push_str(&format!("{:#x}\n", d.0));
    }
    rep.files.push(("tree-sample-draws.txt".into(), text));
    let dense_cap = match cfg.dynamics {
        DynamicsKind::Block => cfg.caps.dense_block,
        DynamicsKind::Glauber => cfg.caps.dense_glauber,
    }
    .min(EMPIRICAL_MAX_N);
    if n <= dense_cap {
        let mut w = vec![0.0; 1 << n];
        for d in &draws {
            w[d.0 as usize] += 1.0;
        }
        let emp = DenseDistribution::from_weights(n, w)?;
        let exact = crate::evolution::evolve_capped(
            &law.to_dense(&cfg.caps)?,
            cfg.dynamics,
            j,
            t,
            &cfg.caps,
        )?;
        let idx = rep.table(Table::new("tree-sample", &["config", "empirical", "exact"]));
        for c in 0..1usize << n {
            rep.tables[idx].push(vec![
                format!("{c:#x}"),
                f(emp.probs()[c]),
                f(exact.probs()[c]),
            ]);
        }
        rep.set("tv_to_evolve", json!(tv_distance(&emp, &exact)?));
    }
    let k = draws.len() as f64;
    rep.set("t", json!(t));
    rep.set("samples", json!(draws.len()));
    if cfg.dynamics == DynamicsKind::Glauber && cfg.sampler != TreeRule::Naive {
        rep.set(
            "mean_nodes",
            json!(draws.iter().map(|d| d.1 as f64).sum::<f64>() / k),
        );
        rep.set(
            "mean_visits",
            json!(draws.iter().map(|d| d.2 as f64).sum::<f64>() / k),
        );
    }
    Ok(())
}
