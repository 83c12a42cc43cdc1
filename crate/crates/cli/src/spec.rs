//! Per-command parameter records: clap argument structs, optional JSON spec
//! files, and the resolved forms echoed into manifests.
//!
//! Resolution order: explicit flag > spec file field > default. A manifest
//! written by a previous run is itself a valid `--spec` input (its `params`
//! object is used), which is how runs are reproduced bit-identically.

use std::path::PathBuf;

use anyhow::{bail, Context};
use clap::Args;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

fn load_spec<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> anyhow::Result<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read spec file {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("invalid JSON in {}", path.display()))?;
    let body = match value.get("params") {
        Some(params) => params.clone(),
        None => value,
    };
    serde_json::from_value(body)
        .with_context(|| format!("invalid spec fields in {}", path.display()))
}

macro_rules! pick {
    ($flag:expr, $spec:expr, $default:expr) => {
        $flag.or($spec).unwrap_or($default)
    };
}

/// Which limit-law regime a synthetic CLT run samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CltMode {
    /// One sample drawn from `a`, statistic centered at `d(a, a)`.
    H0One,
    /// Two samples drawn from `a`, statistic centered at `d(a, a)`.
    H0Two,
    /// One sample drawn from `a`, tested against the trend measure `b`.
    H1One,
    /// Samples from `a` and from the trend measure `b`.
    H1Two,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// JSON spec file; explicit flags override its fields.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Grid side; the space is the p x p unit-spaced integer grid.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Regularization values, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    /// First-sample sizes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<u64>>,
    /// Second-sample sizes (two-sample modes); defaults to `n`.
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<u64>>,
    /// Trend slope of the alternative measure (H1 modes).
    #[arg(long)]
    pub theta: Option<f64>,
    /// Replicates per cell.
    #[arg(short = 'M', long)]
    pub reps: Option<usize>,
    #[arg(long, value_enum)]
    pub mode: Option<CltMode>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Solver marginal tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateSpec {
    pub grid: Option<usize>,
    pub lambda: Option<Vec<f64>>,
    pub n: Option<Vec<u64>>,
    pub m: Option<Vec<u64>>,
    pub theta: Option<f64>,
    pub reps: Option<usize>,
    pub mode: Option<CltMode>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Clone, Serialize)]
pub struct SimulateResolved {
    pub grid: usize,
    pub lambda: Vec<f64>,
    pub n: Vec<u64>,
    pub m: Vec<u64>,
    pub theta: f64,
    pub reps: usize,
    pub mode: CltMode,
    pub seed: u64,
    pub out: PathBuf,
    pub tol: f64,
    pub max_iter: usize,
}

impl SimulateArgs {
    pub fn resolve(self) -> anyhow::Result<SimulateResolved> {
        let spec: SimulateSpec = load_spec(&self.spec)?;
        let n = pick!(self.n, spec.n, vec![1000]);
        let m = self.m.or(spec.m).unwrap_or_else(|| n.clone());
        if m.len() != n.len() {
            bail!(
                "m list must match n list length ({} vs {})",
                m.len(),
                n.len()
            );
        }
        let resolved = SimulateResolved {
            grid: pick!(self.grid, spec.grid, 5),
            lambda: pick!(self.lambda, spec.lambda, vec![1.0]),
            n,
            m,
            theta: pick!(self.theta, spec.theta, 0.5),
            reps: pick!(self.reps, spec.reps, 1000),
            mode: pick!(self.mode, spec.mode, CltMode::H0One),
            seed: pick!(self.seed, spec.seed, 0),
            out: pick!(self.out, spec.out, PathBuf::from("out-simulate-clt")),
            tol: pick!(self.tol, spec.tol, 1e-9),
            max_iter: pick!(self.max_iter, spec.max_iter, 100_000),
        };
        if resolved.grid == 0 {
            bail!("grid side must be positive");
        }
        if resolved.lambda.is_empty() || resolved.n.is_empty() {
            bail!("lambda and n lists must be nonempty");
        }
        if resolved.reps == 0 {
            bail!("reps must be positive");
        }
        Ok(resolved)
    }
}

/// How the reference measure of a data-mode test is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind", content = "value")]
pub enum RefChoice {
    /// A group of the binned dataset.
    Group(String),
    /// A measure JSON file (discrete or empirical).
    File(PathBuf),
    /// Uniform over the support of the sampled measure.
    UniformSupport,
}

#[derive(Args)]
pub struct TestOneArgs {
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Synthetic mode: grid side of the p x p space.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Synthetic mode: slope of the reference trend measure (0 = uniform).
    #[arg(long)]
    pub theta: Option<f64>,
    /// Synthetic mode: sample size drawn from the uniform base measure.
    #[arg(long)]
    pub n: Option<u64>,
    /// Data mode: binned dataset JSON produced by `ingest`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Data mode: group label of the sampled measure.
    #[arg(long)]
    pub sample: Option<String>,
    /// Data mode: empirical-measure JSON of the sampled measure.
    #[arg(long)]
    pub sample_file: Option<PathBuf>,
    /// Data mode: reference = this group's frequency measure.
    #[arg(long)]
    pub ref_group: Option<String>,
    /// Data mode: reference = measure JSON at this path.
    #[arg(long)]
    pub ref_file: Option<PathBuf>,
    /// Data mode: reference = uniform over the support of the sample.
    #[arg(long)]
    pub ref_uniform_support: bool,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(short = 'M', long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also export the observed transport plan as dense CSV.
    #[arg(long)]
    pub plan_out: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestOneSpec {
    pub grid: Option<usize>,
    pub theta: Option<f64>,
    pub n: Option<u64>,
    pub data: Option<PathBuf>,
    pub sample: Option<String>,
    pub sample_file: Option<PathBuf>,
    pub reference: Option<RefChoice>,
    pub lambda: Option<f64>,
    pub reps: Option<usize>,
    pub level: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub plan_out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Clone, Serialize)]
pub struct TestOneResolved {
    pub grid: usize,
    pub theta: f64,
    pub n: u64,
    pub data: Option<PathBuf>,
    pub sample: Option<String>,
    pub sample_file: Option<PathBuf>,
    pub reference: Option<RefChoice>,
    pub lambda: f64,
    pub reps: usize,
    pub level: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub plan_out: Option<PathBuf>,
    pub tol: f64,
    pub max_iter: usize,
}

impl TestOneArgs {
    pub fn resolve(self) -> anyhow::Result<TestOneResolved> {
        let spec: TestOneSpec = load_spec(&self.spec)?;
        let reference = if let Some(g) = self.ref_group {
            Some(RefChoice::Group(g))
        } else if let Some(f) = self.ref_file {
            Some(RefChoice::File(f))
        } else if self.ref_uniform_support {
            Some(RefChoice::UniformSupport)
        } else {
            spec.reference
        };
        let resolved = TestOneResolved {
            grid: pick!(self.grid, spec.grid, 5),
            theta: pick!(self.theta, spec.theta, 0.0),
            n: pick!(self.n, spec.n, 1000),
            data: self.data.or(spec.data),
            sample: self.sample.or(spec.sample),
            sample_file: self.sample_file.or(spec.sample_file),
            reference,
            lambda: pick!(self.lambda, spec.lambda, 1.0),
            reps: pick!(self.reps, spec.reps, 1000),
            level: pick!(self.level, spec.level, 0.05),
            seed: pick!(self.seed, spec.seed, 0),
            out: pick!(self.out, spec.out, PathBuf::from("out-test-one")),
            plan_out: self.plan_out.or(spec.plan_out),
            tol: pick!(self.tol, spec.tol, 1e-9),
            max_iter: pick!(self.max_iter, spec.max_iter, 100_000),
        };
        if resolved.data.is_some() {
            if resolved.sample.is_none() && resolved.sample_file.is_none() {
                bail!("data mode needs --sample or --sample-file");
            }
            if resolved.reference.is_none() {
                bail!("data mode needs --ref-group, --ref-file, or --ref-uniform-support");
            }
        } else if resolved.grid == 0 || resolved.n == 0 {
            bail!("synthetic mode needs positive --grid and --n");
        }
        Ok(resolved)
    }
}

#[derive(Args)]
pub struct TestTwoArgs {
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Synthetic mode: slope of the second population.
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub n: Option<u64>,
    #[arg(long)]
    pub m: Option<u64>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Data mode: group label of the first sample.
    #[arg(long)]
    pub sample_a: Option<String>,
    /// Data mode: group label of the second sample.
    #[arg(long)]
    pub sample_b: Option<String>,
    #[arg(long)]
    pub ref_group: Option<String>,
    #[arg(long)]
    pub ref_file: Option<PathBuf>,
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(short = 'M', long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub plan_out: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestTwoSpec {
    pub grid: Option<usize>,
    pub theta: Option<f64>,
    pub n: Option<u64>,
    pub m: Option<u64>,
    pub data: Option<PathBuf>,
    pub sample_a: Option<String>,
    pub sample_b: Option<String>,
    pub reference: Option<RefChoice>,
    pub lambda: Option<f64>,
    pub reps: Option<usize>,
    pub level: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub plan_out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Clone, Serialize)]
pub struct TestTwoResolved {
    pub grid: usize,
    pub theta: f64,
    pub n: u64,
    pub m: u64,
    pub data: Option<PathBuf>,
    pub sample_a: Option<String>,
    pub sample_b: Option<String>,
    pub reference: Option<RefChoice>,
    pub lambda: f64,
    pub reps: usize,
    pub level: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub plan_out: Option<PathBuf>,
    pub tol: f64,
    pub max_iter: usize,
}

impl TestTwoArgs {
    pub fn resolve(self) -> anyhow::Result<TestTwoResolved> {
        let spec: TestTwoSpec = load_spec(&self.spec)?;
        let reference = if let Some(g) = self.ref_group {
            Some(RefChoice::Group(g))
        } else if let Some(f) = self.ref_file {
            Some(RefChoice::File(f))
        } else {
            spec.reference
        };
        let n = pick!(self.n, spec.n, 1000);
        let resolved = TestTwoResolved {
            grid: pick!(self.grid, spec.grid, 5),
            theta: pick!(self.theta, spec.theta, 0.5),
            n,
            m: pick!(self.m, spec.m, n),
            data: self.data.or(spec.data),
            sample_a: self.sample_a.or(spec.sample_a),
            sample_b: self.sample_b.or(spec.sample_b),
            reference,
            lambda: pick!(self.lambda, spec.lambda, 1.0),
            reps: pick!(self.reps, spec.reps, 1000),
            level: pick!(self.level, spec.level, 0.05),
            seed: pick!(self.seed, spec.seed, 0),
            out: pick!(self.out, spec.out, PathBuf::from("out-test-two")),
            plan_out: self.plan_out.or(spec.plan_out),
            tol: pick!(self.tol, spec.tol, 1e-9),
            max_iter: pick!(self.max_iter, spec.max_iter, 100_000),
        };
        if resolved.data.is_some() {
            if resolved.sample_a.is_none() || resolved.sample_b.is_none() {
                bail!("data mode needs --sample-a and --sample-b");
            }
            if resolved.reference.is_none() {
                bail!("data mode needs --ref-group or --ref-file");
            }
        } else if resolved.grid == 0 || resolved.n == 0 || resolved.m == 0 {
            bail!("synthetic mode needs positive --grid, --n, --m");
        }
        Ok(resolved)
    }
}

#[derive(Args)]
pub struct PowerArgs {
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub grid: Option<usize>,
    /// Trend slopes, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub theta: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub lambda: Option<Vec<f64>>,
    #[arg(long)]
    pub n: Option<u64>,
    /// Bootstrap replicates per test.
    #[arg(short = 'M', long)]
    pub reps: Option<usize>,
    /// Synthetic repetitions per grid point.
    #[arg(short = 'R', long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub level: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iter: Option<usize>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerSpec {
    pub grid: Option<usize>,
    pub theta: Option<Vec<f64>>,
    pub lambda: Option<Vec<f64>>,
    pub n: Option<u64>,
    pub reps: Option<usize>,
    pub repeats: Option<usize>,
    pub level: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub max_iter: Option<usize>,
}

#[derive(Clone, Serialize)]
pub struct PowerResolved {
    pub grid: usize,
    pub theta: Vec<f64>,
    pub lambda: Vec<f64>,
    pub n: u64,
    pub reps: usize,
    pub repeats: usize,
    pub level: f64,
    pub seed: u64,
    pub out: PathBuf,
    pub tol: f64,
    pub max_iter: usize,
}

impl PowerArgs {
    pub fn resolve(self) -> anyhow::Result<PowerResolved> {
        let spec: PowerSpec = load_spec(&self.spec)?;
        let resolved = PowerResolved {
            grid: pick!(self.grid, spec.grid, 5),
            theta: pick!(self.theta, spec.theta, vec![0.0, 0.05, 0.10, 0.15]),
            lambda: pick!(self.lambda, spec.lambda, vec![1.0]),
            n: pick!(self.n, spec.n, 1000),
            reps: pick!(self.reps, spec.reps, 1000),
            repeats: pick!(self.repeats, spec.repeats, 100),
            level: pick!(self.level, spec.level, 0.05),
            seed: pick!(self.seed, spec.seed, 0),
            out: pick!(self.out, spec.out, PathBuf::from("out-power")),
            tol: pick!(self.tol, spec.tol, 1e-9),
            max_iter: pick!(self.max_iter, spec.max_iter, 100_000),
        };
        if resolved.grid == 0 || resolved.n == 0 || resolved.reps == 0 || resolved.repeats == 0 {
            bail!("grid, n, reps, and repeats must be positive");
        }
        if resolved.theta.is_empty() || resolved.lambda.is_empty() {
            bail!("theta and lambda lists must be nonempty");
        }
        Ok(resolved)
    }
}

#[derive(Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub x_col: Option<String>,
    #[arg(long)]
    pub y_col: Option<String>,
    #[arg(long)]
    pub group_col: Option<String>,
    /// Bounding box xmin,xmax,ymin,ymax.
    #[arg(long, value_delimiter = ',')]
    pub bbox: Option<Vec<f64>>,
    /// Number of cells along x.
    #[arg(long)]
    pub nx: Option<usize>,
    /// Number of cells along y.
    #[arg(long)]
    pub ny: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestSpec {
    pub input: Option<PathBuf>,
    pub x_col: Option<String>,
    pub y_col: Option<String>,
    pub group_col: Option<String>,
    pub bbox: Option<Vec<f64>>,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Serialize)]
pub struct IngestResolved {
    pub input: PathBuf,
    pub x_col: String,
    pub y_col: String,
    pub group_col: String,
    pub bbox: [f64; 4],
    pub nx: usize,
    pub ny: usize,
    pub out: PathBuf,
}

impl IngestArgs {
    pub fn resolve(self) -> anyhow::Result<IngestResolved> {
        let spec: IngestSpec = load_spec(&self.spec)?;
        let input = self.input.or(spec.input).context("ingest needs --input")?;
        let bbox_vec = self.bbox.or(spec.bbox).context("ingest needs --bbox")?;
        if bbox_vec.len() != 4 {
            bail!("bbox must have exactly 4 numbers: xmin,xmax,ymin,ymax");
        }
        Ok(IngestResolved {
            input,
            x_col: pick!(self.x_col, spec.x_col, "x".to_string()),
            y_col: pick!(self.y_col, spec.y_col, "y".to_string()),
            group_col: pick!(self.group_col, spec.group_col, "group".to_string()),
            bbox: [bbox_vec[0], bbox_vec[1], bbox_vec[2], bbox_vec[3]],
            nx: pick!(self.nx, spec.nx, 27),
            ny: pick!(self.ny, spec.ny, 18),
            out: pick!(self.out, spec.out, PathBuf::from("out-ingest")),
        })
    }
}

#[derive(Args)]
pub struct BarycenterArgs {
    #[arg(long)]
    pub spec: Option<PathBuf>,
    /// Binned dataset JSON produced by `ingest`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Groups to average, comma separated; all groups when omitted.
    #[arg(long, value_delimiter = ',')]
    pub groups: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the pooled-count empirical measure (counts summed across
    /// the selected groups), usable as a test sample.
    #[arg(long)]
    pub pooled_out: Option<PathBuf>,
    /// Also write the uniform measure over the barycenter's support.
    #[arg(long)]
    pub uniform_support_out: Option<PathBuf>,
}

#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarycenterSpec {
    pub data: Option<PathBuf>,
    pub groups: Option<Vec<String>>,
    pub out: Option<PathBuf>,
    pub pooled_out: Option<PathBuf>,
    pub uniform_support_out: Option<PathBuf>,
}

#[derive(Clone, Serialize)]
pub struct BarycenterResolved {
    pub data: PathBuf,
    pub groups: Option<Vec<String>>,
    pub out: PathBuf,
    pub pooled_out: Option<PathBuf>,
    pub uniform_support_out: Option<PathBuf>,
}

impl BarycenterArgs {
    pub fn resolve(self) -> anyhow::Result<BarycenterResolved> {
        let spec: BarycenterSpec = load_spec(&self.spec)?;
        Ok(BarycenterResolved {
            data: self.data.or(spec.data).context("barycenter needs --data")?,
            groups: self.groups.or(spec.groups),
            out: pick!(self.out, spec.out, PathBuf::from("out-barycenter")),
            pooled_out: self.pooled_out.or(spec.pooled_out),
            uniform_support_out: self.uniform_support_out.or(spec.uniform_support_out),
        })
    }
}
