//! Scenario documents, their execution and report serialization.
//!
//! A scenario is one JSON object; see the README for the schema. Reports
//! keep a fixed key order and round every float to 12 significant digits.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{joint_oracle_hypotheses, local_baseline_product, LocalSearch, LOCAL_CLASS};
use crate::discrimination::MeasurementKind;
use crate::error::Error;
use crate::linalg::{CMatrix, CVector, ToleranceConfig, C64};
use crate::memory::{schur_memory_qubits, SchurBudget};
use crate::pipeline::{run_protocol, Hypotheses};
use crate::states::{noon_mps, Mps, MpsEnsemble, ProductHypotheses, PureState, SiteTensor};
use crate::Mode;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Tolerance on the prior sum before renormalisation.
pub const PRIOR_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Ncopy,
    Mps,
    Memory,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Baseline {
    JointOracle,
    LocalNonadaptive,
}

/// `[re, im]`.
pub type Amplitude = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorSpec {
    /// `[left, physical, right]`.
    pub shape: [usize; 3],
    /// Row-major over `(left, physical, right)`.
    pub data: Vec<Amplitude>,
}

/// One hypothesis. Exactly one of `vector`, `product`, `noon`, `mps` is set;
/// `site_dims` accompanies `vector` in the `mps` task.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<Amplitude>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site_dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub product: Option<Vec<Vec<Amplitude>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noon: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mps: Option<Vec<TensorSpec>>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub task: Task,
    #[serde(default)]
    pub states: Vec<StateSpec>,
    /// Uniform when absent.
    #[serde(default)]
    pub priors: Option<Vec<f64>>,
    /// Copies per hypothesis (`ncopy`), tiling count (`mps`) or `N` (`memory`).
    #[serde(default = "one")]
    pub copies: usize,
    /// Local dimension `d` for the `memory` task.
    #[serde(default)]
    pub local_dim: Option<usize>,
    #[serde(default)]
    pub measurement: MeasurementKind,
    #[serde(default)]
    pub baselines: Vec<Baseline>,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub tolerances: ToleranceConfig,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    /// Malformed or inconsistent input; `path` names the offending field.
    Schema { path: String, message: String },
    /// A numerical guard refused the scenario.
    Guard(Error),
    Io(String),
}

impl ScenarioError {
    fn schema(path: impl Into<String>, message: impl fmt::Display) -> Self {
        Self::Schema {
            path: path.into(),
            message: message.to_string(),
        }
    }

    fn at(path: impl Into<String>) -> impl FnOnce(Error) -> Self {
        let path = path.into();
        move |e| {
            if e.is_guard() {
                Self::Guard(e)
            } else {
                Self::schema(path, e)
            }
        }
    }

    /// 2 for schema errors, 3 for guard violations, 1 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Schema { .. } => 2,
            Self::Guard(_) => 3,
            Self::Io(_) => 1,
        }
    }
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Schema { path, message } if path.is_empty() => write!(f, "schema error: {message}"),
            Self::Schema { path, message } => write!(f, "schema error at `{path}`: {message}"),
            Self::Guard(e) => write!(f, "guard violation: {e}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl std::error::Error for ScenarioError {}

fn from_core(e: Error) -> ScenarioError {
    ScenarioError::at("")(e)
}

/// Parses and checks a scenario document. Priors are renormalised after
/// the sum check.
pub fn parse_scenario(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let mut spec: ScenarioSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let path = if path == "." { String::new() } else { path };
        ScenarioError::schema(path, inner)
    })?;
    check_spec(&mut spec)?;
    Ok(spec)
}

fn check_spec(spec: &mut ScenarioSpec) -> Result<(), ScenarioError> {
    spec.tolerances.validate().map_err(ScenarioError::at("tolerances"))?;
    if spec.copies == 0 {
        return Err(ScenarioError::schema("copies", "must be at least 1"));
    }
    match spec.task {
        Task::Memory => {
            match spec.local_dim {
                Some(d) if d >= 1 => {}
                Some(_) => return Err(ScenarioError::schema("local_dim", "must be at least 1")),
                None => return Err(ScenarioError::schema("local_dim", "required by the memory task")),
            }
            if !spec.states.is_empty() {
                return Err(ScenarioError::schema("states", "the memory task takes no states"));
            }
        }
        Task::Ncopy | Task::Mps => {
            if spec.states.is_empty() {
                return Err(ScenarioError::schema("states", "at least one hypothesis is required"));
            }
            if spec.local_dim.is_some() {
                return Err(ScenarioError::schema("local_dim", "only used by the memory task"));
            }
        }
    }
    if let Some(p) = spec.priors.as_mut() {
        if p.len() != spec.states.len() {
            return Err(ScenarioError::schema(
                "priors",
                format!("{} priors for {} states", p.len(), spec.states.len()),
            ));
        }
        if let Some(i) = p.iter().position(|x| !x.is_finite() || *x <= 0.0) {
            return Err(ScenarioError::schema(format!("priors[{i}]"), "must be positive"));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > PRIOR_SUM_TOL {
            return Err(ScenarioError::schema("priors", format!("sum to {sum}, expected 1")));
        }
        for x in p.iter_mut() {
            *x /= sum;
        }
        let head: f64 = p[..p.len() - 1].iter().sum();
        let last = p.len() - 1;
        p[last] = 1.0 - head;
    }
    Ok(())
}

fn amplitudes(path: &str, v: &[Amplitude]) -> Result<CVector, ScenarioError> {
    if v.is_empty() {
        return Err(ScenarioError::schema(path, "empty vector"));
    }
    Ok(CVector::from_iterator(v.len(), v.iter().map(|[re, im]| C64::new(*re, *im))))
}

fn normalized_state(path: &str, v: &[Amplitude]) -> Result<PureState, ScenarioError> {
    PureState::normalized(amplitudes(path, v)?).map_err(ScenarioError::at(path))
}

fn one_kind(path: &str, s: &StateSpec) -> Result<&'static str, ScenarioError> {
    let kinds: Vec<&'static str> = [
        (s.vector.is_some(), "vector"),
        (s.product.is_some(), "product"),
        (s.noon.is_some(), "noon"),
        (s.mps.is_some(), "mps"),
    ]
    .iter()
    .filter(|(set, _)| *set)
    .map(|(_, k)| *k)
    .collect();
    match kinds.as_slice() {
        [k] => {
            if s.site_dims.is_some() && *k != "vector" {
                return Err(ScenarioError::schema(
                    format!("{path}.site_dims"),
                    "only valid alongside `vector`",
                ));
            }
            Ok(k)
        }
        [] => Err(ScenarioError::schema(
            path,
            "expected one of `vector`, `product`, `noon`, `mps`",
        )),
        _ => Err(ScenarioError::schema(
            path,
            format!("conflicting descriptors {}", kinds.join(", ")),
        )),
    }
}

fn priors_of(spec: &ScenarioSpec) -> Vec<f64> {
    spec.priors
        .clone()
        .unwrap_or_else(|| vec![1.0 / spec.states.len() as f64; spec.states.len()])
}

fn product_sites(path: &str, s: &StateSpec) -> Result<Vec<PureState>, ScenarioError> {
    match one_kind(path, s)? {
        "vector" => {
            if s.site_dims.is_some() {
                return Err(ScenarioError::schema(
                    format!("{path}.site_dims"),
                    "not used by the ncopy task",
                ));
            }
            Ok(vec![normalized_state(&format!("{path}.vector"), s.vector.as_ref().unwrap())?])
        }
        "product" => {
            let sites = s.product.as_ref().unwrap();
            if sites.is_empty() {
                return Err(ScenarioError::schema(format!("{path}.product"), "no sites"));
            }
            sites
                .iter()
                .enumerate()
                .map(|(n, v)| normalized_state(&format!("{path}.product[{n}]"), v))
                .collect()
        }
        other => Err(ScenarioError::schema(
            path,
            format!("`{other}` is not a product state; use the mps task"),
        )),
    }
}

fn mps_state(path: &str, s: &StateSpec, tol: &ToleranceConfig) -> Result<Mps, ScenarioError> {
    match one_kind(path, s)? {
        "vector" => {
            let vpath = format!("{path}.vector");
            let v = amplitudes(&vpath, s.vector.as_ref().unwrap())?;
            let dims = s
                .site_dims
                .clone()
                .unwrap_or_else(|| vec![v.len()]);
            let n = v.norm();
            if n == 0.0 {
                return Err(ScenarioError::schema(vpath, Error::ZeroState));
            }
            Mps::from_statevector(&v.unscale(n), &dims, tol).map_err(ScenarioError::at(vpath))
        }
        "product" => {
            let sites = product_sites(path, s)?;
            Mps::product(&sites).map_err(ScenarioError::at(format!("{path}.product")))
        }
        "noon" => noon_mps(s.noon.unwrap()).map_err(ScenarioError::at(format!("{path}.noon"))),
        "mps" => {
            let tensors = s
                .mps
                .as_ref()
                .unwrap()
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    let tpath = format!("{path}.mps[{i}]");
                    let [l, p, r] = t.shape;
                    let data = t.data.iter().map(|[re, im]| C64::new(*re, *im)).collect();
                    SiteTensor::new(l, p, r, data).map_err(ScenarioError::at(tpath))
                })
                .collect::<Result<Vec<_>, _>>()?;
            Mps::new_normalized(tensors).map_err(ScenarioError::at(format!("{path}.mps")))
        }
        _ => unreachable!("one_kind returns a known descriptor"),
    }
}

/// Builds the hypotheses for an `ncopy` or `mps` scenario.
pub fn build_hypotheses(spec: &ScenarioSpec) -> Result<Hypotheses, ScenarioError> {
    let priors = priors_of(spec);
    match spec.task {
        Task::Ncopy => {
            let per: Vec<Vec<PureState>> = spec
                .states
                .iter()
                .enumerate()
                .map(|(k, s)| product_sites(&format!("states[{k}]"), s))
                .collect::<Result<_, _>>()?;
            let base = ProductHypotheses::from_hypotheses(&per, priors).map_err(ScenarioError::at("states"))?;
            let hyp = if spec.copies == 1 {
                base
            } else {
                base.repeated(spec.copies).map_err(ScenarioError::at("copies"))?
            };
            Ok(Hypotheses::Product(hyp))
        }
        Task::Mps => {
            let members: Vec<Mps> = spec
                .states
                .iter()
                .enumerate()
                .map(|(k, s)| mps_state(&format!("states[{k}]"), s, &spec.tolerances))
                .collect::<Result<_, _>>()?;
            let ens = MpsEnsemble::new(members, priors).map_err(ScenarioError::at("states"))?;
            let ens = if spec.copies == 1 {
                ens
            } else {
                ens.tiled(spec.copies).map_err(ScenarioError::at("copies"))?
            };
            Ok(Hypotheses::Mps(ens))
        }
        Task::Memory => Err(ScenarioError::schema("task", "the memory task has no hypotheses")),
    }
}

/// Command-line overrides applied on top of a parsed scenario.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Overrides {
    pub mode: Option<Mode>,
    pub seed: Option<u64>,
    pub rank_tol: Option<f64>,
    pub certificate_tol: Option<f64>,
    /// Adds both baselines.
    pub all_baselines: bool,
}

impl ScenarioSpec {
    pub fn with_overrides(mut self, o: &Overrides) -> Result<Self, ScenarioError> {
        if let Some(m) = o.mode {
            self.mode = m;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(t) = o.rank_tol {
            self.tolerances.rank_tol = t;
        }
        if let Some(t) = o.certificate_tol {
            self.tolerances.certificate_tol = t;
        }
        if o.all_baselines {
            self.baselines = vec![Baseline::JointOracle, Baseline::LocalNonadaptive];
        }
        self.tolerances.validate().map_err(ScenarioError::at("tolerances"))?;
        Ok(self)
    }

    /// Drops the local baseline when the hypotheses cannot support it.
    pub fn without_inapplicable_baselines(mut self) -> Self {
        let local_ok = self.task == Task::Ncopy
            && matches!(build_hypotheses(&self), Ok(Hypotheses::Product(ref h)) if h.site_dims().iter().all(|&d| d == 2));
        if !local_ok {
            self.baselines.retain(|b| *b != Baseline::LocalNonadaptive);
        }
        self
    }
}

/// Parses and builds everything a run needs, without running it.
pub fn validate_scenario(text: &str) -> Result<ScenarioSpec, ScenarioError> {
    let spec = parse_scenario(text)?;
    if spec.task != Task::Memory {
        build_hypotheses(&spec)?;
    }
    Ok(spec)
}

/// Rounds to 12 significant digits.
pub fn round12(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.11e}").parse().expect("formatted float parses")
}

fn matrix_entries(m: &CMatrix) -> Vec<Vec<Amplitude>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .map(|j| [round12(m[(i, j)].re), round12(m[(i, j)].im)])
                .collect()
        })
        .collect()
}

/// Result of one scenario. Field order is the serialized key order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub version: String,
    pub scenario: ScenarioSpec,
    pub p_protocol: Option<f64>,
    pub p_joint_oracle: Option<f64>,
    pub p_local_baseline: Option<f64>,
    /// `p_protocol - p_local_baseline`.
    pub local_gap: Option<f64>,
    pub local_baseline_class: Option<String>,
    /// Polar and azimuthal angle of the best per-copy measurement.
    pub local_measurement: Option<[f64; 2]>,
    pub inconclusive_probability: Option<f64>,
    pub gram_initial: Option<Vec<Vec<Amplitude>>>,
    pub gram_final: Option<Vec<Vec<Amplitude>>>,
    pub gram_error: Option<f64>,
    pub decoupling_max: Option<f64>,
    pub schmidt_rank_max: Option<usize>,
    pub apparatus_dim: Option<usize>,
    pub certificate_residual: Option<f64>,
    pub oracle_certificate_residual: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: Option<bool>,
    pub memory: Option<SchurBudget>,
    /// Wall-clock time; excluded from the determinism contract.
    pub runtime_ms: u64,
}

impl Report {
    fn empty(spec: &ScenarioSpec) -> Self {
        Self {
            version: VERSION.to_string(),
            scenario: spec.clone(),
            p_protocol: None,
            p_joint_oracle: None,
            p_local_baseline: None,
            local_gap: None,
            local_baseline_class: None,
            local_measurement: None,
            inconclusive_probability: None,
            gram_initial: None,
            gram_final: None,
            gram_error: None,
            decoupling_max: None,
            schmidt_rank_max: None,
            apparatus_dim: None,
            certificate_residual: None,
            oracle_certificate_residual: None,
            iterations: None,
            converged: None,
            memory: None,
            runtime_ms: 0,
        }
    }
}

/// Runs a checked scenario.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<Report, ScenarioError> {
    let start = Instant::now();
    let mut report = Report::empty(spec);
    match spec.task {
        Task::Memory => {
            let d = spec.local_dim.expect("checked by parse_scenario");
            let mut b = schur_memory_qubits(spec.copies, d);
            b.lambda_count_paper_formula = round12(b.lambda_count_paper_formula);
            report.memory = Some(b);
        }
        Task::Ncopy | Task::Mps => {
            let tol = &spec.tolerances;
            let hyp = build_hypotheses(spec)?;
            let out = run_protocol(&hyp, spec.mode, spec.measurement, tol).map_err(from_core)?;
            let m = &out.measurement;
            report.p_protocol = Some(round12(m.success_probability));
            if spec.measurement == MeasurementKind::Unambiguous {
                report.inconclusive_probability = Some(round12(m.inconclusive_probability(hyp.priors())));
            }
            report.gram_initial = Some(matrix_entries(&out.initial_gram));
            report.gram_final = Some(matrix_entries(&out.final_gram));
            report.gram_error = Some(round12(out.gram_error));
            report.decoupling_max = out.decoupling_max.map(round12);
            report.schmidt_rank_max = Some(out.schmidt_rank_max);
            report.apparatus_dim = Some(out.apparatus_dim);
            report.certificate_residual = m.certificate_residual.map(round12);
            report.iterations = Some(m.iterations_used);
            report.converged = Some(m.converged);

            if spec.baselines.contains(&Baseline::JointOracle) {
                let r = joint_oracle_hypotheses(&hyp, tol).map_err(from_core)?;
                report.p_joint_oracle = Some(round12(r.success_probability));
                report.oracle_certificate_residual = r.certificate_residual.map(round12);
            }
            if spec.baselines.contains(&Baseline::LocalNonadaptive) {
                let Hypotheses::Product(h) = &hyp else {
                    return Err(ScenarioError::schema(
                        "baselines",
                        "local_nonadaptive needs the ncopy task",
                    ));
                };
                let search = LocalSearch {
                    seed: spec.seed,
                    ..LocalSearch::default()
                };
                let r = local_baseline_product(h, &search).map_err(from_core)?;
                report.p_local_baseline = Some(round12(r.success_probability));
                report.local_gap = Some(round12(m.success_probability - r.success_probability));
                report.local_baseline_class = Some(LOCAL_CLASS.to_string());
                report.local_measurement = Some([round12(r.theta), round12(r.phi)]);
            }
        }
    }
    report.runtime_ms = start.elapsed().as_millis() as u64;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "json" => Ok(Self::Json),
            "csv" => Ok(Self::Csv),
            other => Err(format!("unknown format `{other}` (expected json or csv)")),
        }
    }
}

/// Flat CSV row; absent values are empty cells.
#[derive(Debug, Serialize)]
struct ReportRow<'a> {
    version: &'a str,
    task: Task,
    measurement: MeasurementKind,
    mode: Mode,
    copies: usize,
    hypotheses: usize,
    p_protocol: Option<f64>,
    p_joint_oracle: Option<f64>,
    p_local_baseline: Option<f64>,
    local_gap: Option<f64>,
    inconclusive_probability: Option<f64>,
    gram_error: Option<f64>,
    decoupling_max: Option<f64>,
    schmidt_rank_max: Option<usize>,
    apparatus_dim: Option<usize>,
    certificate_residual: Option<f64>,
    oracle_certificate_residual: Option<f64>,
    iterations: Option<usize>,
    converged: Option<bool>,
    lambda_count_exact: Option<String>,
    max_irrep_dim_exact: Option<String>,
    qubits_label: Option<u64>,
    qubits_unitary: Option<u64>,
    qubits_total: Option<u64>,
    runtime_ms: u64,
}

/// CSV header, in column order.
pub const CSV_HEADER: &str = "version,task,measurement,mode,copies,hypotheses,p_protocol,p_joint_oracle,\
p_local_baseline,local_gap,inconclusive_probability,gram_error,decoupling_max,schmidt_rank_max,\
apparatus_dim,certificate_residual,oracle_certificate_residual,iterations,converged,\
lambda_count_exact,max_irrep_dim_exact,qubits_label,qubits_unitary,qubits_total,runtime_ms";

fn row(r: &Report) -> ReportRow<'_> {
    let m = r.memory.as_ref();
    ReportRow {
        version: &r.version,
        task: r.scenario.task,
        measurement: r.scenario.measurement,
        mode: r.scenario.mode,
        copies: r.scenario.copies,
        hypotheses: r.scenario.states.len(),
        p_protocol: r.p_protocol,
        p_joint_oracle: r.p_joint_oracle,
        p_local_baseline: r.p_local_baseline,
        local_gap: r.local_gap,
        inconclusive_probability: r.inconclusive_probability,
        gram_error: r.gram_error,
        decoupling_max: r.decoupling_max,
        schmidt_rank_max: r.schmidt_rank_max,
        apparatus_dim: r.apparatus_dim,
        certificate_residual: r.certificate_residual,
        oracle_certificate_residual: r.oracle_certificate_residual,
        iterations: r.iterations,
        converged: r.converged,
        lambda_count_exact: m.map(|b| b.lambda_count_exact.to_string()),
        max_irrep_dim_exact: m.map(|b| b.max_irrep_dim_exact.to_string()),
        qubits_label: m.map(|b| b.qubits_label),
        qubits_unitary: m.map(|b| b.qubits_unitary),
        qubits_total: m.map(|b| b.qubits_total),
        runtime_ms: r.runtime_ms,
    }
}

/// Serializes reports: one pretty JSON object (an array for several), or
/// CSV with [`CSV_HEADER`] and one row per report.
pub fn emit_reports(reports: &[Report], format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = if reports.len() == 1 {
                serde_json::to_string_pretty(&reports[0])
            } else {
                serde_json::to_string_pretty(reports)
            }
            .expect("reports serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in reports {
                w.serialize(row(r)).expect("rows serialize");
            }
            String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
        }
    }
}

pub fn emit_report(report: &Report, format: Format) -> String {
    emit_reports(std::slice::from_ref(report), format)
}

/// Serializes a memory budget table.
pub fn emit_budget_table(rows: &[SchurBudget], format: Format) -> String {
    match format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(
                &rows
                    .iter()
                    .map(|b| SchurBudget {
                        lambda_count_paper_formula: round12(b.lambda_count_paper_formula),
                        ..b.clone()
                    })
                    .collect::<Vec<_>>(),
            )
            .expect("budgets serialize");
            s.push('\n');
            s
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record([
                "n",
                "d",
                "lambda_count_exact",
                "lambda_count_paper_formula",
                "max_irrep_dim_exact",
                "max_irrep_dim_paper_bound",
                "maximizing_partition",
                "qubits_label",
                "qubits_unitary",
                "qubits_total",
            ])
            .expect("header writes");
            for b in rows {
                let partition = b
                    .maximizing_partition
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(" ");
                w.write_record([
                    b.n.to_string(),
                    b.d.to_string(),
                    b.lambda_count_exact.to_string(),
                    round12(b.lambda_count_paper_formula).to_string(),
                    b.max_irrep_dim_exact.to_string(),
                    b.max_irrep_dim_paper_bound.to_string(),
                    partition,
                    b.qubits_label.to_string(),
                    b.qubits_unitary.to_string(),
                    b.qubits_total.to_string(),
                ])
                .expect("row writes");
            }
            String::from_utf8(w.into_inner().expect("in-memory writer")).expect("csv is utf-8")
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ZERO_PLUS: &str = r#"{
        "task": "ncopy",
        "states": [{"vector": [[1,0],[0,0]]}, {"vector": [[1,0],[1,0]]}],
        "priors": [0.5, 0.5],
        "copies": 2,
        "measurement": "min_error",
        "baselines": ["joint_oracle", "local_nonadaptive"],
        "mode": "full"
    }"#;

    fn schema_path(text: &str) -> String {
        match parse_scenario(text) {
            Err(ScenarioError::Schema { path, .. }) => path,
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn zero_plus_report() {
        let spec = parse_scenario(ZERO_PLUS).unwrap();
        let r = run_scenario(&spec).unwrap();
        assert_eq!(r.p_protocol, Some(0.933012701892));
        assert!(r.gram_error.unwrap() <= 1e-10);
        assert!((r.p_joint_oracle.unwrap() - 0.933012701892).abs() < 1e-11);
        assert!(r.local_gap.unwrap() > 1e-4);
        assert!(r.decoupling_max.unwrap() <= 1e-10);
    }

    #[test]
    fn malformed_priors_name_the_field() {
        let bad = ZERO_PLUS.replace("[0.5, 0.5]", "[0.5, 0.4]");
        assert_eq!(schema_path(&bad), "priors");
        let e = parse_scenario(&bad).unwrap_err();
        assert_eq!(e.exit_code(), 2);
        assert!(e.to_string().contains("priors"));
    }

    #[test]
    fn type_errors_carry_paths() {
        let bad = ZERO_PLUS.replace("\"copies\": 2", "\"copies\": \"two\"");
        assert_eq!(schema_path(&bad), "copies");
        let bad = ZERO_PLUS.replace("[[1,0],[0,0]]", "[[1,0],[0]]");
        assert!(schema_path(&bad).starts_with("states[0].vector"));
        let bad = ZERO_PLUS.replace("\"mode\": \"full\"", "\"mode\": \"dense\"");
        assert_eq!(schema_path(&bad), "mode");
        let bad = ZERO_PLUS.replace("\"mode\"", "\"mood\"");
        assert!(matches!(parse_scenario(&bad), Err(ScenarioError::Schema { .. })));
    }

    #[test]
    fn semantic_errors_carry_paths() {
        let conflicting = ZERO_PLUS.replace(r#"{"vector": [[1,0],[0,0]]}"#, r#"{"vector": [[1,0],[0,0]], "noon": 2}"#);
        let spec = parse_scenario(&conflicting).unwrap();
        match build_hypotheses(&spec) {
            Err(ScenarioError::Schema { path, .. }) => assert_eq!(path, "states[0]"),
            other => panic!("{other:?}"),
        }
        let zero = ZERO_PLUS.replace("[[1,0],[0,0]]", "[[0,0],[0,0]]");
        assert!(matches!(validate_scenario(&zero), Err(ScenarioError::Schema { .. })));
    }

    #[test]
    fn guard_errors_exit_three() {
        let big = ZERO_PLUS.replace("\"copies\": 2", "\"copies\": 15");
        let spec = parse_scenario(&big).unwrap();
        let e = run_scenario(&spec).unwrap_err();
        assert_eq!(e.exit_code(), 3, "{e}");
    }

    #[test]
    fn memory_csv_row() {
        let spec = parse_scenario(r#"{"task": "memory", "copies": 4, "local_dim": 2}"#).unwrap();
        let r = run_scenario(&spec).unwrap();
        let csv = emit_report(&r, Format::Csv);
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let fields: Vec<&str> = lines.next().unwrap().split(',').collect();
        let header: Vec<&str> = CSV_HEADER.split(',').collect();
        let col = |name: &str| fields[header.iter().position(|h| *h == name).unwrap()];
        assert_eq!(col("lambda_count_exact"), "3");
        assert_eq!(col("qubits_total"), "5");
        assert_eq!(col("p_protocol"), "");
    }

    #[test]
    fn json_round_trip_and_nulls() {
        let text = ZERO_PLUS.replace(r#"["joint_oracle", "local_nonadaptive"]"#, "[]");
        let r = run_scenario(&parse_scenario(&text).unwrap()).unwrap();
        let json = emit_report(&r, Format::Json);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert!(v["p_joint_oracle"].is_null());
        assert!(v["p_local_baseline"].is_null());
        let back: Report = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        // the echoed scenario is itself a valid scenario
        let echo = serde_json::to_string(&v["scenario"]).unwrap();
        assert_eq!(parse_scenario(&echo).unwrap(), r.scenario);
    }

    #[test]
    fn key_order_is_fixed() {
        let r = run_scenario(&parse_scenario(ZERO_PLUS).unwrap()).unwrap();
        let json = emit_report(&r, Format::Json);
        let pos = |k: &str| json.find(&format!("\"{k}\"")).unwrap();
        assert!(pos("version") < pos("scenario"));
        assert!(pos("p_protocol") < pos("p_joint_oracle"));
        assert!(pos("gram_error") < pos("runtime_ms"));
    }

    #[test]
    fn mps_scenario() {
        let text = r#"{"task": "mps", "states": [{"noon": 4}, {"product": [[[1,0],[0,0]],[[1,0],[0,0]],[[1,0],[0,0]],[[1,0],[0,0]]]}],
                      "baselines": ["joint_oracle"]}"#;
        let r = run_scenario(&parse_scenario(text).unwrap()).unwrap();
        assert_eq!(r.p_protocol, Some(0.853553390593));
        assert_eq!(r.p_joint_oracle, Some(0.853553390593));
        assert!(r.schmidt_rank_max.unwrap() <= 4);
    }

    #[test]
    fn rounding() {
        assert_eq!(round12(0.933_012_701_892_219_3), 0.933012701892);
        assert_eq!(round12(0.0), 0.0);
        assert_eq!(round12(123_456_789.123_456_7), 123_456_789.123);
    }
}
