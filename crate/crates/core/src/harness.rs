//! Experiment orchestration: the case study on a labelled dataset, the
//! capacity (`α`) sweep, and the label-bias (`ζ`) sweep on synthetic cohorts.
//!
//! Every cell (one seed, one `ζ`) is self-contained and seeded from the
//! master seed through [`crate::seed`], so cells can run in parallel and the
//! result files are byte-identical across runs. Wall-clock timings are kept
//! out of the result rows and written to their own file.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::audit::{accuracy, group_stats, unfairness_of_labels, unfairness_of_positions, Unfairness};
use crate::baselines::{label_top_alpha, positions, rank_by_score, train_logreg, FeatureSubset, LogRegModel, LogRegParams};
use crate::correlation::csv_field;
use crate::dataset::{load_csv, load_german_credit, train_test_split, Dataset, Label, Schema};
use crate::exec::Exec;
use crate::northstar::{cutoff, learn, DistanceModel, FitConfig};
use crate::synthgen::{self, label_running_example, label_zeta_with_noise, sample_cohort, CohortSpec};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ours,
    LogregAll,
    LogregFtu,
    TestLabels,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::LogregAll, Method::LogregFtu, Method::Ours, Method::TestLabels];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Ours => "ours",
            Method::LogregAll => "logreg-all",
            Method::LogregFtu => "logreg-ftu",
            Method::TestLabels => "test-labels",
        }
    }

    pub fn parse(s: &str) -> Option<Method> {
        Method::ALL.into_iter().find(|m| m.as_str() == s)
    }
}

/// How the synthetic cohorts are labelled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LabelRule {
    RunningExample,
    Zeta {
        zeta: f64,
        #[serde(default = "default_noise_sd")]
        noise_sd: f64,
    },
}

fn default_noise_sd() -> f64 {
    0.1
}

impl Default for LabelRule {
    fn default() -> Self {
        LabelRule::RunningExample
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Source {
    Synthetic {
        #[serde(default)]
        cohort: CohortSpec,
        #[serde(default)]
        labels: LabelRule,
    },
    Csv {
        path: PathBuf,
        schema: PathBuf,
    },
    German {
        path: PathBuf,
        mapping: PathBuf,
    },
}

/// Which protected attribute and groups the admission ratio compares.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub attribute: String,
    pub disadvantaged: String,
    pub reference: String,
}

/// How baselines turn probabilities into labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaselineLabels {
    /// `+` iff `P(+) > 0.5`.
    Threshold,
    /// The top `⌈αN⌉` by probability.
    TopAlpha,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: Source,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// Capacity grid for the α sweep.
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    /// Capacity for the case study.
    #[serde(default = "default_case_alpha")]
    pub case_alpha: f64,
    #[serde(default = "default_zetas")]
    pub zetas: Vec<f64>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_test_size")]
    pub test_size: usize,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub groups: Option<GroupSpec>,
    /// Baseline labelling in the ζ sweep; the α sweep and case study always
    /// label the top `⌈αN⌉`.
    #[serde(default = "default_zeta_labels")]
    pub zeta_baseline_labels: BaselineLabels,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub logreg: LogRegParams,
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}
fn default_alphas() -> Vec<f64> {
    (0..=10).map(|i| f64::from(i) / 10.0).collect()
}
fn default_case_alpha() -> f64 {
    0.75
}
fn default_zetas() -> Vec<f64> {
    (0..=6).map(|i| f64::from(i) / 2.0).collect()
}
fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}
fn default_test_size() -> usize {
    200
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}
fn default_zeta_labels() -> BaselineLabels {
    BaselineLabels::Threshold
}

impl ExperimentConfig {
    /// Synthetic defaults with gender groups female/male.
    pub fn synthetic() -> Self {
        ExperimentConfig {
            source: Source::Synthetic {
                cohort: CohortSpec::default(),
                labels: LabelRule::RunningExample,
            },
            methods: default_methods(),
            alphas: default_alphas(),
            case_alpha: default_case_alpha(),
            zetas: default_zetas(),
            seeds: default_seeds(),
            test_size: default_test_size(),
            output_dir: default_output_dir(),
            groups: Some(GroupSpec {
                attribute: synthgen::GENDER.into(),
                disadvantaged: synthgen::FEMALE.into(),
                reference: synthgen::MALE.into(),
            }),
            zeta_baseline_labels: default_zeta_labels(),
            fit: FitConfig::default(),
            logreg: LogRegParams::default(),
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Loads a config; relative data paths are resolved against its directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut c.source {
            Source::Csv { path, schema } => {
                fix(path);
                fix(schema);
            }
            Source::German { path, mapping } => {
                fix(path);
                fix(mapping);
            }
            Source::Synthetic { .. } => {}
        }
        Ok(c)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.methods.is_empty() {
            return bad("method list is empty".into());
        }
        let mut m = self.methods.clone();
        m.sort();
        m.dedup();
        if m.len() != self.methods.len() {
            return bad("methods are listed more than once".into());
        }
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        let mut s = self.seeds.clone();
        s.sort_unstable();
        s.dedup();
        if s.len() != self.seeds.len() {
            return bad("seeds must be distinct".into());
        }
        if self.alphas.is_empty() || self.zetas.is_empty() {
            return bad("α and ζ grids must be nonempty".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return bad(format!("α = {a} outside [0, 1]"));
        }
        if !(self.case_alpha > 0.0 && self.case_alpha < 1.0) {
            return bad(format!("case-study α = {} outside (0, 1)", self.case_alpha));
        }
        if let Some(z) = self.zetas.iter().find(|z| !(**z >= 0.0 && z.is_finite())) {
            return bad(format!("ζ = {z} must be finite and nonnegative"));
        }
        if self.test_size == 0 {
            return bad("test size must be positive".into());
        }
        if let Source::Synthetic { cohort, .. } = &self.source {
            cohort.validate()?;
            if self.test_size >= cohort.n {
                return bad(format!("test size {} must be below the cohort size {}", self.test_size, cohort.n));
            }
        }
        Ok(())
    }

    fn require_synthetic(&self) -> Result<(&CohortSpec, &LabelRule)> {
        match &self.source {
            Source::Synthetic { cohort, labels } => Ok((cohort, labels)),
            _ => Err(Error::Config("the ζ sweep needs a synthetic source".into())),
        }
    }
}

/// Loads (or generates) the full labelled dataset for a master seed.
pub fn load_source(config: &ExperimentConfig, master: u64) -> Result<Dataset> {
    match &config.source {
        Source::Synthetic { cohort, labels } => synthetic_cohort(cohort, labels, master),
        Source::Csv { path, schema } => load_csv(path, &Schema::from_file(schema)?),
        Source::German { path, mapping } => load_german_credit(path, &Schema::from_file(mapping)?),
    }
}

fn synthetic_cohort(spec: &CohortSpec, rule: &LabelRule, master: u64) -> Result<Dataset> {
    let spec = CohortSpec {
        seed: seed::derive(master, seed::COHORT, 0),
        ..spec.clone()
    };
    let cohort = sample_cohort(&spec)?;
    let label_seed = seed::derive(master, seed::LABELS, 0);
    match rule {
        LabelRule::RunningExample => label_running_example(&cohort, label_seed),
        LabelRule::Zeta { zeta, noise_sd } => label_zeta_with_noise(&cohort, *zeta, *noise_sd, label_seed),
    }
}

/// One (experiment, ζ, α, seed, method) measurement on a test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub zeta: Option<f64>,
    /// Grid capacity, when the experiment has one.
    pub alpha: Option<f64>,
    /// Capacity actually applied (test positive share in the ζ sweep).
    pub alpha_used: Option<f64>,
    pub seed: u64,
    pub method: Method,
    pub n: usize,
    pub admitted: usize,
    pub s_ranking: f64,
    pub t_ranking: u64,
    pub s_labels: f64,
    pub t_labels: u64,
    pub accuracy: f64,
    pub rate_disadvantaged: Option<f64>,
    pub rate_reference: Option<f64>,
    pub ratio: Option<f64>,
    pub ratio_undefined: bool,
    pub omega: Vec<f64>,
    pub rho: Vec<f64>,
    pub importance_fallback: bool,
}

const ROW_HEADER: &str = "experiment,zeta,alpha,alpha_used,seed,method,n,admitted,S_ranking,T_ranking,S_labels,T_labels,accuracy,rate_disadvantaged,rate_reference,ratio,ratio_undefined,omega,rho,importance_fallback";

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(";")
}

impl ResultRow {
    pub fn csv_header() -> &'static str {
        ROW_HEADER
    }

    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&self.experiment),
            opt(self.zeta),
            opt(self.alpha),
            opt(self.alpha_used),
            self.seed,
            self.method.as_str(),
            self.n,
            self.admitted,
            self.s_ranking,
            self.t_ranking,
            self.s_labels,
            self.t_labels,
            self.accuracy,
            opt(self.rate_disadvantaged),
            opt(self.rate_reference),
            opt(self.ratio),
            self.ratio_undefined,
            join(&self.omega),
            join(&self.rho),
            self.importance_fallback
        )
    }
}

pub fn rows_to_csv(rows: &[ResultRow]) -> String {
    let mut out = String::from(ROW_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

/// Wall-clock time spent on one cell, kept apart from the result rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub experiment: String,
    pub zeta: Option<f64>,
    pub seed: u64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<Timing>,
}

/// Models fitted on one training partition.
struct Fitted {
    weights: DistanceModel,
    all: Option<LogRegModel>,
    ftu: Option<LogRegModel>,
}

fn fit_cell(train: &Dataset, config: &ExperimentConfig, master: u64) -> Result<Fitted> {
    let weights = learn(train, &config.fit, seed::derive(master, seed::FOREST, 0))?;
    let baseline = |m: Method, s: FeatureSubset| -> Result<Option<LogRegModel>> {
        if config.methods.contains(&m) {
            train_logreg(train, s, &config.logreg).map(Some)
        } else {
            Ok(None)
        }
    };
    Ok(Fitted {
        weights,
        all: baseline(Method::LogregAll, FeatureSubset::All)?,
        ftu: baseline(Method::LogregFtu, FeatureSubset::Ftu)?,
    })
}

#[derive(Debug, Clone, Copy)]
enum Capacity {
    Fixed(f64),
    TestShare,
}

/// Ranking positions and outcomes of one method on the test partition.
struct Decision {
    positions: Option<Vec<usize>>,
    outcomes: Vec<Label>,
    alpha_used: Option<f64>,
}

fn decide(fitted: &Fitted, test: &Dataset, method: Method, capacity: Capacity, baseline: BaselineLabels) -> Result<Decision> {
    let labels = test.labels().ok_or_else(|| Error::invalid("test partition has no labels"))?;
    let alpha = match capacity {
        Capacity::Fixed(a) => a,
        Capacity::TestShare => test.positive_share().expect("labels present"),
    };
    match method {
        Method::Ours => {
            let mut cohort = fitted.weights.rank(test)?;
            cohort.assign_top(cutoff(alpha, test.len()));
            Ok(Decision {
                positions: Some(cohort.positions()),
                outcomes: cohort.outcomes().expect("assigned"),
                alpha_used: Some(alpha),
            })
        }
        Method::LogregAll | Method::LogregFtu => {
            let model = if method == Method::LogregAll { &fitted.all } else { &fitted.ftu };
            let model = model.as_ref().expect("baseline fitted when listed");
            let order = rank_by_score(&model.scores(test)?);
            let (outcomes, alpha_used) = match baseline {
                BaselineLabels::TopAlpha => (label_top_alpha(&order, alpha)?, Some(alpha)),
                BaselineLabels::Threshold => (model.predict_labels(test)?, None),
            };
            Ok(Decision {
                positions: Some(positions(&order)),
                outcomes,
                alpha_used,
            })
        }
        Method::TestLabels => Ok(Decision {
            positions: None,
            outcomes: labels.to_vec(),
            alpha_used: None,
        }),
    }
}

struct CellKey<'a> {
    experiment: &'a str,
    zeta: Option<f64>,
    alpha: Option<f64>,
    seed: u64,
}

fn measure(
    key: &CellKey<'_>,
    fitted: &Fitted,
    test: &Dataset,
    method: Method,
    capacity: Capacity,
    baseline: BaselineLabels,
    groups: Option<&GroupSpec>,
) -> Result<ResultRow> {
    let d = decide(fitted, test, method, capacity, baseline)?;
    let z = fitted.weights.scale(test)?;
    let psi = fitted.weights.psi();
    let by_labels = unfairness_of_labels(&d.outcomes, &z, psi)?;
    // all `+` above all `-` with no order inside a class: the label audit
    let by_rank: Unfairness = match &d.positions {
        Some(p) => unfairness_of_positions(&z, p, psi)?,
        None => by_labels,
    };
    let acc = accuracy(&d.outcomes, test.labels().expect("labelled test data"))?;
    let stats = match groups {
        Some(g) => {
            let attr = test
                .protected_by_name(&g.attribute)
                .ok_or_else(|| Error::Config(format!("unknown group attribute {:?}", g.attribute)))?;
            Some(group_stats(&d.outcomes, attr, &g.disadvantaged, &g.reference)?)
        }
        None => None,
    };
    Ok(ResultRow {
        experiment: key.experiment.to_string(),
        zeta: key.zeta,
        alpha: key.alpha,
        alpha_used: d.alpha_used,
        seed: key.seed,
        method,
        n: test.len(),
        admitted: d.outcomes.iter().filter(|l| l.is_pos()).count(),
        s_ranking: by_rank.share(),
        t_ranking: by_rank.total(),
        s_labels: by_labels.share(),
        t_labels: by_labels.total(),
        accuracy: acc,
        rate_disadvantaged: stats.as_ref().and_then(|s| s.rate(&s.disadvantaged)),
        rate_reference: stats.as_ref().and_then(|s| s.rate(&s.reference)),
        ratio: stats.as_ref().map(|s| s.ratio),
        ratio_undefined: stats.as_ref().is_some_and(|s| s.ratio_undefined),
        omega: fitted.weights.importance.weights.clone(),
        rho: fitted.weights.penalties.penalties.clone(),
        importance_fallback: fitted.weights.importance.fallback,
    })
}

fn split(data: &Dataset, config: &ExperimentConfig, master: u64) -> Result<(Dataset, Dataset)> {
    train_test_split(data, config.test_size, seed::derive(master, seed::SPLIT, 0))
}

fn collect(cells: Vec<Result<(Vec<ResultRow>, Timing)>>) -> Result<RunOutput> {
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for c in cells {
        let (r, t) = c?;
        rows.extend(r);
        timings.push(t);
    }
    Ok(RunOutput { rows, timings })
}

/// Case study: per seed, split, fit on the training part, and measure every
/// method on the test part at the configured capacity.
pub fn run_case_study(config: &ExperimentConfig) -> Result<RunOutput> {
    run_case_study_with(config, Exec::default())
}

pub fn run_case_study_with(config: &ExperimentConfig, exec: Exec) -> Result<RunOutput> {
    config.validate()?;
    let cells = exec.map(config.seeds.len(), |s| {
        let start = Instant::now();
        let master = config.seeds[s];
        let data = load_source(config, master)?;
        let (train, test) = split(&data, config, master)?;
        let fitted = fit_cell(&train, config, master)?;
        let key = CellKey {
            experiment: "case-study",
            zeta: None,
            alpha: Some(config.case_alpha),
            seed: master,
        };
        let rows = config
            .methods
            .iter()
            .map(|&m| measure(&key, &fitted, &test, m, Capacity::Fixed(config.case_alpha), BaselineLabels::TopAlpha, config.groups.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok((rows, timing("case-study", None, master, start)))
    });
    collect(cells)
}

fn timing(experiment: &str, zeta: Option<f64>, seed: u64, start: Instant) -> Timing {
    Timing {
        experiment: experiment.into(),
        zeta,
        seed,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Label-based (and ranking-based) unfairness of every method over the α grid.
/// Models are fitted once per seed; only the cut moves. The test labels do not
/// depend on α and are skipped.
pub fn run_alpha_sweep(config: &ExperimentConfig) -> Result<RunOutput> {
    run_alpha_sweep_with(config, Exec::default())
}

pub fn run_alpha_sweep_with(config: &ExperimentConfig, exec: Exec) -> Result<RunOutput> {
    config.validate()?;
    let cells = exec.map(config.seeds.len(), |s| {
        let start = Instant::now();
        let master = config.seeds[s];
        let data = load_source(config, master)?;
        let (train, test) = split(&data, config, master)?;
        let fitted = fit_cell(&train, config, master)?;
        let mut rows = Vec::new();
        for &alpha in &config.alphas {
            let key = CellKey {
                experiment: "alpha-sweep",
                zeta: None,
                alpha: Some(alpha),
                seed: master,
            };
            for &m in config.methods.iter().filter(|m| **m != Method::TestLabels) {
                rows.push(measure(&key, &fitted, &test, m, Capacity::Fixed(alpha), BaselineLabels::TopAlpha, config.groups.as_ref())?);
            }
        }
        Ok((rows, timing("alpha-sweep", None, master, start)))
    });
    collect(cells)
}

/// Per ζ and seed: generate a cohort, label it with bias ζ, split, fit every
/// method on the training part and measure on the test part. Our method
/// admits the test set's share of positive labels.
pub fn run_zeta_sweep(config: &ExperimentConfig) -> Result<RunOutput> {
    run_zeta_sweep_with(config, Exec::default())
}

pub fn run_zeta_sweep_with(config: &ExperimentConfig, exec: Exec) -> Result<RunOutput> {
    config.validate()?;
    let (spec, rule) = config.require_synthetic()?;
    let noise_sd = match rule {
        LabelRule::Zeta { noise_sd, .. } => *noise_sd,
        LabelRule::RunningExample => default_noise_sd(),
    };
    let ns = config.seeds.len();
    let cells = exec.map(config.zetas.len() * ns, |c| {
        let start = Instant::now();
        let zeta = config.zetas[c / ns];
        let master = config.seeds[c % ns];
        let data = synthetic_cohort(spec, &LabelRule::Zeta { zeta, noise_sd }, master)?;
        let (train, test) = split(&data, config, master)?;
        let fitted = fit_cell(&train, config, master)?;
        let key = CellKey {
            experiment: "zeta-sweep",
            zeta: Some(zeta),
            alpha: None,
            seed: master,
        };
        let rows = config
            .methods
            .iter()
            .map(|&m| measure(&key, &fitted, &test, m, Capacity::TestShare, config.zeta_baseline_labels, config.groups.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        Ok((rows, timing("zeta-sweep", Some(zeta), master, start)))
    });
    collect(cells)
}

/// Mean and (population) standard deviation over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Stat {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Stat { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub experiment: String,
    pub zeta: Option<f64>,
    pub alpha: Option<f64>,
    pub method: Method,
    pub seeds: usize,
    pub alpha_used: Option<Stat>,
    pub s_ranking: Stat,
    pub t_ranking: Stat,
    pub s_labels: Stat,
    pub t_labels: Stat,
    pub accuracy: Stat,
    pub rate_disadvantaged: Option<Stat>,
    pub rate_reference: Option<Stat>,
    pub ratio: Option<Stat>,
    pub omega: Vec<Stat>,
    pub rho: Vec<Stat>,
}

/// Groups rows by (experiment, ζ, α, method) and averages over seeds.
pub fn aggregate(rows: &[ResultRow]) -> Vec<AggregateRow> {
    let key = |r: &ResultRow| {
        (
            r.experiment.clone(),
            r.zeta.map(f64::to_bits),
            r.alpha.map(f64::to_bits),
            r.method,
        )
    };
    let mut groups: BTreeMap<_, Vec<&ResultRow>> = BTreeMap::new();
    for r in rows {
        groups.entry(key(r)).or_default().push(r);
    }
    let mut out: Vec<AggregateRow> = groups
        .into_values()
        .map(|g| {
            let f = |get: &dyn Fn(&ResultRow) -> f64| Stat::of(&g.iter().map(|r| get(r)).collect::<Vec<_>>());
            let fo = |get: &dyn Fn(&ResultRow) -> Option<f64>| {
                let v: Option<Vec<f64>> = g.iter().map(|r| get(r)).collect();
                v.map(|v| Stat::of(&v))
            };
            let l = g[0].omega.len();
            AggregateRow {
                experiment: g[0].experiment.clone(),
                zeta: g[0].zeta,
                alpha: g[0].alpha,
                method: g[0].method,
                seeds: g.len(),
                alpha_used: fo(&|r| r.alpha_used),
                s_ranking: f(&|r| r.s_ranking),
                t_ranking: f(&|r| r.t_ranking as f64),
                s_labels: f(&|r| r.s_labels),
                t_labels: f(&|r| r.t_labels as f64),
                accuracy: f(&|r| r.accuracy),
                rate_disadvantaged: fo(&|r| r.rate_disadvantaged),
                rate_reference: fo(&|r| r.rate_reference),
                ratio: fo(&|r| r.ratio),
                omega: (0..l).map(|k| f(&|r| r.omega[k])).collect(),
                rho: (0..l).map(|k| f(&|r| r.rho[k])).collect(),
            }
        })
        .collect();
    out.sort_by(|a, b| {
        a.experiment
            .cmp(&b.experiment)
            .then(a.zeta.unwrap_or(-1.0).total_cmp(&b.zeta.unwrap_or(-1.0)))
            .then(a.alpha.unwrap_or(-1.0).total_cmp(&b.alpha.unwrap_or(-1.0)))
            .then(a.method.cmp(&b.method))
    });
    out
}

pub fn aggregates_to_csv(rows: &[AggregateRow]) -> String {
    let mut out = String::from(
        "experiment,zeta,alpha,method,seeds,alpha_used_mean,S_ranking_mean,S_ranking_std,T_ranking_mean,T_ranking_std,S_labels_mean,S_labels_std,T_labels_mean,T_labels_std,accuracy_mean,accuracy_std,ratio_mean,ratio_std,omega_mean,omega_std,rho_mean\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            csv_field(&r.experiment),
            opt(r.zeta),
            opt(r.alpha),
            r.method.as_str(),
            r.seeds,
            opt(r.alpha_used.map(|s| s.mean)),
            r.s_ranking.mean,
            r.s_ranking.std,
            r.t_ranking.mean,
            r.t_ranking.std,
            r.s_labels.mean,
            r.s_labels.std,
            r.t_labels.mean,
            r.t_labels.std,
            r.accuracy.mean,
            r.accuracy.std,
            opt(r.ratio.map(|s| s.mean)),
            opt(r.ratio.map(|s| s.std)),
            join(&r.omega.iter().map(|s| s.mean).collect::<Vec<_>>()),
            join(&r.omega.iter().map(|s| s.std).collect::<Vec<_>>()),
            join(&r.rho.iter().map(|s| s.mean).collect::<Vec<_>>()),
        );
    }
    out
}

/// The four figure series emitted from sweep results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Figure {
    /// Label-based share of unfairly treated observations over α.
    UnfairOverAlpha = 1,
    /// Ranking-based share over ζ.
    UnfairOverZeta = 2,
    AccuracyOverZeta = 3,
    /// Admission ratio (disadvantaged / reference) over ζ.
    RatioOverZeta = 4,
}

impl Figure {
    pub fn from_number(n: u8) -> Option<Figure> {
        match n {
            1 => Some(Figure::UnfairOverAlpha),
            2 => Some(Figure::UnfairOverZeta),
            3 => Some(Figure::AccuracyOverZeta),
            4 => Some(Figure::RatioOverZeta),
            _ => None,
        }
    }

    pub fn number(self) -> u8 {
        self as u8
    }

    fn experiment(self) -> &'static str {
        match self {
            Figure::UnfairOverAlpha => "alpha-sweep",
            _ => "zeta-sweep",
        }
    }

    /// Grid axis of this figure taken from a config.
    pub fn grid(self, config: &ExperimentConfig) -> Vec<f64> {
        match self {
            Figure::UnfairOverAlpha => config.alphas.clone(),
            _ => config.zetas.clone(),
        }
    }
}

/// Long-format series `figure,method,x,mean,std,seeds,missing`, one line per
/// (method, grid point). Grid points without data are kept and flagged.
pub fn emit_figure_data(rows: &[ResultRow], figure: Figure, methods: &[Method], grid: &[f64]) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::invalid("no result rows to plot"));
    }
    let agg: Vec<AggregateRow> = aggregate(rows).into_iter().filter(|a| a.experiment == figure.experiment()).collect();
    let mut out = String::from("figure,method,x,mean,std,seeds,missing\n");
    for &m in methods {
        for &x in grid {
            let hit = agg.iter().find(|a| {
                a.method == m
                    && match figure {
                        Figure::UnfairOverAlpha => a.alpha == Some(x),
                        _ => a.zeta == Some(x),
                    }
            });
            let stat = hit.and_then(|a| match figure {
                Figure::UnfairOverAlpha => Some(a.s_labels),
                Figure::UnfairOverZeta => Some(a.s_ranking),
                Figure::AccuracyOverZeta => Some(a.accuracy),
                Figure::RatioOverZeta => a.ratio,
            });
            match stat {
                Some(s) => {
                    let _ = writeln!(out, "{},{},{x},{},{},{},false", figure.number(), m.as_str(), s.mean, s.std, hit.map_or(0, |a| a.seeds));
                }
                None => {
                    let _ = writeln!(out, "{},{},{x},,,0,true", figure.number(), m.as_str());
                }
            }
        }
    }
    Ok(out)
}

/// Provenance record written next to the results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub crate_version: String,
    pub config_sha256: String,
    pub config: ExperimentConfig,
    pub files: BTreeMap<String, String>,
}

/// Writes `results.csv`, `aggregate.csv`, `timings.csv` and `manifest.json`
/// into `dir`; returns the manifest.
pub fn write_run(dir: impl AsRef<Path>, experiment: &str, config: &ExperimentConfig, out: &RunOutput) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = BTreeMap::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        std::fs::write(&path, &body).map_err(|e| Error::io(&path, e))?;
        let digest = Sha256::digest(body.as_bytes());
        files.insert(name.to_string(), digest.iter().map(|b| format!("{b:02x}")).collect());
        Ok(())
    };
    put("results.csv", rows_to_csv(&out.rows))?;
    put("aggregate.csv", aggregates_to_csv(&aggregate(&out.rows)))?;
    let manifest = Manifest {
        experiment: experiment.into(),
        crate_version: env!("CARGO_PKG_VERSION").into(),
        config_sha256: config.hash(),
        config: config.clone(),
        files,
    };
    let path = dir.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| Error::io(&path, e))?;
    let mut t = String::from("experiment,zeta,seed,seconds\n");
    for x in &out.timings {
        let _ = writeln!(t, "{},{},{},{}", x.experiment, opt(x.zeta), x.seed, x.seconds);
    }
    let path = dir.join("timings.csv");
    std::fs::write(&path, t).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Reads the `manifest.json` of a run directory.
pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::schema(format!("{}: {e}", path.display())))
}

/// Reads a `results.csv` written by [`write_run`].
pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let path = path.as_ref();
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::schema(format!("{}: {other:?}", path.display())),
    })?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != ROW_HEADER {
        return Err(Error::schema(format!("{} is not a results file", path.display())));
    }
    let num = |s: &str| -> Result<f64> { s.parse().map_err(|_| Error::schema(format!("bad number {s:?}"))) };
    let onum = |s: &str| -> Result<Option<f64>> { if s.is_empty() { Ok(None) } else { num(s).map(Some) } };
    let vec = |s: &str| -> Result<Vec<f64>> { if s.is_empty() { Ok(vec![]) } else { s.split(';').map(num).collect() } };
    let int = |s: &str| -> Result<u64> { s.parse().map_err(|_| Error::schema(format!("bad integer {s:?}"))) };
    let mut rows = Vec::new();
    for rec in reader.records() {
        let r = rec?;
        rows.push(ResultRow {
            experiment: r[0].to_string(),
            zeta: onum(&r[1])?,
            alpha: onum(&r[2])?,
            alpha_used: onum(&r[3])?,
            seed: int(&r[4])?,
            method: Method::parse(&r[5]).ok_or_else(|| Error::schema(format!("unknown method {:?}", &r[5])))?,
            n: int(&r[6])? as usize,
            admitted: int(&r[7])? as usize,
            s_ranking: num(&r[8])?,
            t_ranking: int(&r[9])?,
            s_labels: num(&r[10])?,
            t_labels: int(&r[11])?,
            accuracy: num(&r[12])?,
            rate_disadvantaged: onum(&r[13])?,
            rate_reference: onum(&r[14])?,
            ratio: onum(&r[15])?,
            ratio_undefined: &r[16] == "true",
            omega: vec(&r[17])?,
            rho: vec(&r[18])?,
            importance_fallback: &r[19] == "true",
        });
    }
    Ok(rows)
}
