//! Experiment configuration.
//!
//! A config is one TOML file. Every section except `[grid]` and `[time]`
//! has defaults, so a minimal file is
//!
//! ```toml
//! [grid]
//! dim = 1
//! counts = [101]
//!
//! [time]
//! horizon = 0.5
//! steps = 1000
//! ```
//!
//! Relative `file` paths are resolved against the directory holding the
//! config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use parinv::coefficients::{sample_initial, sample_potential};
use parinv::inverse::CaseParams;
use parinv::io::read_field;
use parinv::parabolic::SourceProfile;
use parinv::{EllipticOperator, Face, Grid, SubboundarySpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    ForwardParabolic,
    ForwardWave,
    BridgeCheck,
    InvertSource,
    StabilitySweep,
    LipschitzSweep,
    CarlemanCheck,
    RecoverDelta,
    Report,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::ForwardParabolic => "forward-parabolic",
            Command::ForwardWave => "forward-wave",
            Command::BridgeCheck => "bridge-check",
            Command::InvertSource => "invert-source",
            Command::StabilitySweep => "stability-sweep",
            Command::LipschitzSweep => "lipschitz-sweep",
            Command::CarlemanCheck => "carleman-check",
            Command::RecoverDelta => "recover-delta",
            Command::Report => "report",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// When present, must agree with the subcommand on the command line.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<Command>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub grid: GridSpec,
    #[serde(default)]
    pub operator: OperatorSpec,
    pub time: TimeSpec,
    #[serde(default)]
    pub fields: FieldsSpec,
    #[serde(default)]
    pub admissible: AdmissibleSpec,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub sweep: SweepSpec,
    #[serde(default)]
    pub bridge: BridgeSpec,
    #[serde(default)]
    pub carleman: CarlemanSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub counts: Vec<usize>,
    /// Defaults to the unit interval or square.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extents: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorSpec {
    /// Scalar diffusion coefficient `c(x)`, giving `div(c grad u)`.
    #[serde(default = "unit_field")]
    pub diffusion: FieldSpec,
    /// Constant drift vector, one entry per axis.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<f64>>,
}

impl Default for OperatorSpec {
    fn default() -> Self {
        Self {
            diffusion: unit_field(),
            drift: None,
        }
    }
}

fn unit_field() -> FieldSpec {
    FieldSpec::Constant { value: 1.0 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSpec {
    pub horizon: f64,
    pub steps: usize,
    /// Time profile of the source in `invert-source`.
    #[serde(default = "unit_profile")]
    pub mu: ProfileSpec,
    /// Number of final time nodes of `u_q` seen by `recover-delta`.
    #[serde(default = "default_window")]
    pub window: usize,
}

fn unit_profile() -> ProfileSpec {
    ProfileSpec::Constant { value: 1.0 }
}

fn default_window() -> usize {
    5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProfileSpec {
    Constant {
        value: f64,
    },
    /// `value + slope t`.
    Linear {
        value: f64,
        slope: f64,
    },
    /// `value exp(rate t)`.
    Exponential {
        value: f64,
        rate: f64,
    },
}

impl ProfileSpec {
    pub fn build(&self, horizon: f64, steps: usize) -> parinv::Result<SourceProfile> {
        match *self {
            ProfileSpec::Constant { value } => SourceProfile::constant(horizon, steps, value),
            ProfileSpec::Linear { value, slope } => {
                SourceProfile::from_fn(horizon, steps, |t| value + slope * t, |_| slope)
            }
            ProfileSpec::Exponential { value, rate } => SourceProfile::from_fn(
                horizon,
                steps,
                |t| value * (rate * t).exp(),
                |t| value * rate * (rate * t).exp(),
            ),
        }
    }
}

/// A nodal field on the configured grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    /// `mean + amplitude prod_d cos(m_d pi xi_d)` with `xi` the coordinate
    /// rescaled to `[0, 1]`.
    Cosine {
        mean: f64,
        amplitude: f64,
        modes: Vec<u32>,
    },
    /// `base + height exp(-|x - center|^2 / width^2)`.
    Bump {
        base: f64,
        height: f64,
        center: Vec<f64>,
        width: f64,
    },
    /// Seeded admissible potential, seed `seed + offset`.
    SamplePotential {
        #[serde(default)]
        offset: u64,
    },
    /// Seeded admissible initial datum, seed `seed + offset`.
    SampleInitial {
        #[serde(default)]
        offset: u64,
    },
    /// A field written by `parinv::io::write_field`.
    File {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldsSpec {
    #[serde(default = "zero_field")]
    pub p: FieldSpec,
    #[serde(default = "sampled_potential")]
    pub q: FieldSpec,
    #[serde(default = "sampled_initial")]
    pub a: FieldSpec,
    #[serde(default = "unit_field")]
    pub f: FieldSpec,
}

impl Default for FieldsSpec {
    fn default() -> Self {
        Self {
            p: zero_field(),
            q: sampled_potential(),
            a: sampled_initial(),
            f: unit_field(),
        }
    }
}

fn zero_field() -> FieldSpec {
    FieldSpec::Constant { value: 0.0 }
}

fn sampled_potential() -> FieldSpec {
    FieldSpec::SamplePotential { offset: 1 }
}

fn sampled_initial() -> FieldSpec {
    FieldSpec::SampleInitial { offset: 0 }
}

/// Bounds of the admissible sets used by the samplers and sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdmissibleSpec {
    pub gamma1: f64,
    pub gamma2: f64,
    pub potential_bound: f64,
    pub initial_bound: f64,
    pub floor: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
}

impl Default for AdmissibleSpec {
    fn default() -> Self {
        let c = CaseParams::default();
        Self {
            gamma1: c.gamma1,
            gamma2: c.gamma2,
            potential_bound: c.potential_bound,
            initial_bound: c.initial_bound,
            floor: c.floor,
            gamma: None,
        }
    }
}

/// Thresholds of the acceptance checks recorded in the run manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Truncation tolerance of the transform plan.
    pub transform: f64,
    /// Relative max error of `bridge-check`.
    pub bridge: f64,
    /// Relative L2 error of the recovered source.
    pub source: f64,
    /// Relative L2 error of the recovered `q - p`.
    pub delta: f64,
    pub energy_drift: f64,
    /// Largest max/min ratio over the Lipschitz sweep of one case.
    pub lipschitz_spread: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            transform: 1e-8,
            bridge: 1e-3,
            source: 1e-2,
            delta: 0.05,
            energy_drift: 0.01,
            lipschitz_spread: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSpec {
    pub cases: usize,
    pub epsilons: Vec<f64>,
    /// Observation faces for traces and stability ratios.
    pub faces: Vec<String>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            cases: 10,
            epsilons: vec![1.0, 0.5, 0.25, 0.125],
            faces: vec!["right".into()],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BridgeSpec {
    /// Number of uniformly spaced target times in `(0, horizon]`.
    pub targets: usize,
    /// Largest truncation point tried by the planner.
    pub cap: f64,
    /// Wave step as a fraction of the largest stable step.
    pub cfl_fraction: f64,
}

impl Default for BridgeSpec {
    fn default() -> Self {
        Self {
            targets: 10,
            cap: parinv::reznitskaya::DEFAULT_CAP,
            cfl_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CarlemanSpec {
    pub lambda: f64,
    pub tau0: f64,
    pub samples: usize,
    /// Cutoff margin as a fraction of the horizon.
    pub margin: f64,
    /// The one face left out of `Gamma0`.
    pub excluded: String,
}

impl Default for CarlemanSpec {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            tau0: 1.0,
            samples: 20,
            margin: 0.1,
            excluded: "left".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    /// Every `stride`-th snapshot of a trajectory is written.
    pub stride: usize,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { stride: 10 }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    /// Makes relative `file` paths absolute with respect to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |f: &mut FieldSpec| {
            if let FieldSpec::File { path } = f {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        fix(&mut self.operator.diffusion);
        fix(&mut self.fields.p);
        fix(&mut self.fields.q);
        fix(&mut self.fields.a);
        fix(&mut self.fields.f);
    }

    pub fn build_grid(&self) -> Result<Grid, String> {
        let g = &self.grid;
        let extents: Vec<(f64, f64)> = match &g.extents {
            Some(e) => e.iter().map(|[a, b]| (*a, *b)).collect(),
            None => vec![(0.0, 1.0); g.dim],
        };
        Grid::new(g.dim, &extents, &g.counts).map_err(|e| e.to_string())
    }

    pub fn case_params(&self) -> CaseParams {
        let a = &self.admissible;
        CaseParams {
            gamma1: a.gamma1,
            gamma2: a.gamma2,
            potential_bound: a.potential_bound,
            initial_bound: a.initial_bound,
            floor: a.floor,
            horizon: self.time.horizon,
            gamma: a.gamma,
        }
    }

    pub fn faces(&self, grid: &Grid, names: &[String]) -> Result<SubboundarySpec, String> {
        let faces = names
            .iter()
            .map(|n| Face::parse(n).map_err(|e| e.to_string()))
            .collect::<Result<Vec<_>, _>>()?;
        SubboundarySpec::new(grid, &faces, None).map_err(|e| e.to_string())
    }

    pub fn observation(&self, grid: &Grid) -> Result<SubboundarySpec, String> {
        self.faces(grid, &self.sweep.faces)
    }

    pub fn gamma0(&self, grid: &Grid) -> Result<SubboundarySpec, String> {
        let excluded = Face::parse(&self.carleman.excluded).map_err(|e| e.to_string())?;
        if !grid.has_face(excluded) {
            return Err(format!("grid has no face {}", self.carleman.excluded));
        }
        let faces: Vec<Face> = grid
            .faces()
            .into_iter()
            .filter(|f| *f != excluded)
            .collect();
        SubboundarySpec::new(grid, &faces, None).map_err(|e| e.to_string())
    }

    pub fn build_operator(&self, grid: &Grid) -> Result<EllipticOperator, String> {
        let c = self.field(grid, None, &self.operator.diffusion)?;
        let op = EllipticOperator::isotropic(grid, &c).map_err(|e| e.to_string())?;
        match &self.operator.drift {
            None => Ok(op),
            Some(b) => {
                if b.len() != grid.dim() {
                    return Err(format!(
                        "drift has {} entries for a {}-D grid",
                        b.len(),
                        grid.dim()
                    ));
                }
                let v = [b[0], b.get(1).copied().unwrap_or(0.0)];
                op.with_drift(vec![v; grid.len()])
                    .map_err(|e| e.to_string())
            }
        }
    }

    /// Materializes a field. Sampled initial data need the operator for the
    /// flux check.
    pub fn field(
        &self,
        grid: &Grid,
        op: Option<&EllipticOperator>,
        spec: &FieldSpec,
    ) -> Result<Vec<f64>, String> {
        let adm = &self.admissible;
        match spec {
            FieldSpec::Constant { value } => Ok(vec![*value; grid.len()]),
            FieldSpec::Cosine {
                mean,
                amplitude,
                modes,
            } => {
                if modes.len() != grid.dim() {
                    return Err(format!(
                        "cosine needs {} modes, got {}",
                        grid.dim(),
                        modes.len()
                    ));
                }
                let ext = grid.extents();
                Ok(grid.sample(|x| {
                    let prod: f64 = (0..x.len())
                        .map(|d| {
                            let xi = (x[d] - ext[d].0) / (ext[d].1 - ext[d].0);
                            (modes[d] as f64 * std::f64::consts::PI * xi).cos()
                        })
                        .product();
                    mean + amplitude * prod
                }))
            }
            FieldSpec::Bump {
                base,
                height,
                center,
                width,
            } => {
                if center.len() != grid.dim() {
                    return Err(format!("bump center needs {} coordinates", grid.dim()));
                }
                if !(*width > 0.0) {
                    return Err(format!("bump width {width} must be positive"));
                }
                Ok(grid.sample(|x| {
                    let r2: f64 = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum();
                    base + height * (-r2 / (width * width)).exp()
                }))
            }
            FieldSpec::SamplePotential { offset } => sample_potential(
                self.seed.wrapping_add(*offset),
                adm.gamma1,
                adm.potential_bound,
                grid,
            )
            .map(|s| s.field)
            .map_err(|e| e.to_string()),
            FieldSpec::SampleInitial { offset } => {
                let op = op.ok_or("sampled initial data are not allowed here")?;
                sample_initial(
                    self.seed.wrapping_add(*offset),
                    adm.gamma2,
                    adm.initial_bound,
                    adm.floor,
                    op,
                )
                .map(|s| s.field)
                .map_err(|e| e.to_string())
            }
            FieldSpec::File { path } => {
                if !path.exists() {
                    return Err(format!("field file {} does not exist", path.display()));
                }
                let (g, v) = read_field(path).map_err(|e| e.to_string())?;
                if &g != grid {
                    return Err(format!(
                        "field file {} lives on a different grid",
                        path.display()
                    ));
                }
                Ok(v)
            }
        }
    }

    /// Checks everything that does not need a solver run.
    pub fn validate(&self) -> Result<(), String> {
        let grid = self.build_grid()?;
        let t = &self.time;
        if !(t.horizon > 0.0 && t.horizon.is_finite()) {
            return Err(format!("horizon {} must be positive", t.horizon));
        }
        if t.steps < 2 {
            return Err(format!("steps {} must be at least 2", t.steps));
        }
        if t.window < 3 || t.window > t.steps + 1 {
            return Err(format!("window {} must lie in [3, steps + 1]", t.window));
        }
        if self.output.stride == 0 {
            return Err("output stride must be positive".into());
        }
        let tol = &self.tolerances;
        for (name, v) in [
            ("transform", tol.transform),
            ("bridge", tol.bridge),
            ("source", tol.source),
            ("delta", tol.delta),
            ("energy_drift", tol.energy_drift),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(format!("tolerance {name} = {v} must be positive"));
            }
        }
        if !(tol.lipschitz_spread >= 1.0) {
            return Err(format!(
                "lipschitz_spread {} must be at least 1",
                tol.lipschitz_spread
            ));
        }
        if self.sweep.epsilons.iter().any(|e| !(*e > 0.0 && *e <= 1.0)) {
            return Err("sweep epsilons must lie in (0, 1]".into());
        }
        let b = &self.bridge;
        if b.targets == 0 || !t.steps.is_multiple_of(b.targets) {
            return Err(format!(
                "bridge targets {} must divide steps {}",
                b.targets, t.steps
            ));
        }
        if !(b.cfl_fraction > 0.0 && b.cfl_fraction <= 1.0) {
            return Err(format!(
                "cfl_fraction {} must lie in (0, 1]",
                b.cfl_fraction
            ));
        }
        let c = &self.carleman;
        if !(c.lambda > 0.0 && c.tau0 > 0.0) {
            return Err("carleman lambda and tau0 must be positive".into());
        }
        if !(c.margin > 0.0 && c.margin < 0.25) {
            return Err(format!(
                "carleman margin {} must lie in (0, 0.25)",
                c.margin
            ));
        }
        let op = self.build_operator(&grid)?;
        self.observation(&grid)?;
        self.gamma0(&grid)?;
        for spec in [
            &self.fields.p,
            &self.fields.q,
            &self.fields.a,
            &self.fields.f,
        ] {
            self.field(&grid, Some(&op), spec)?;
        }
        t.mu.build(t.horizon, t.steps).map_err(|e| e.to_string())?;
        Ok(())
    }
}
