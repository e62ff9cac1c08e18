//! Declarative experiment configuration (TOML or JSON).

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::decomposition::DecompositionFamily;
use crate::error::{Error, Result};
use crate::linops::{mm, max_eigenvalue, SymmetricOperator, ORACLE_CAP};
use crate::problems::{manufactured, named_family, random_vector, EvolutionProblem, Grid, ModalOracle, Profile};
use crate::schemes::SchemeConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Convergence,
    StabilitySweep,
    ThresholdMap,
    EnergyAudit,
    Timing,
}

impl StudyKind {
    pub fn name(self) -> &'static str {
        match self {
            StudyKind::Convergence => "convergence",
            StudyKind::StabilitySweep => "stability_sweep",
            StudyKind::ThresholdMap => "threshold_map",
            StudyKind::EnergyAudit => "energy_audit",
            StudyKind::Timing => "timing",
        }
    }
}

impl fmt::Display for StudyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StudyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            StudyKind::Convergence,
            StudyKind::StabilitySweep,
            StudyKind::ThresholdMap,
            StudyKind::EnergyAudit,
            StudyKind::Timing,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| Error::Config(format!("unknown study `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    #[default]
    #[serde(rename = "heat_1d")]
    Heat1d,
    #[serde(rename = "heat_2d")]
    Heat2d,
    MatrixMarket,
}

/// Initial data and forcing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    /// Smooth exact solution with matching forcing.
    #[default]
    Manufactured,
    /// Seeded random `u^0`, `f = 0`.
    RandomInitial,
    /// Seeded random `u^0` and constant seeded random `f`.
    RandomForced,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemSpec {
    pub operator: OperatorKind,
    pub m: usize,
    pub length: f64,
    pub mx: usize,
    pub my: usize,
    /// Matrix Market file for [`OperatorKind::MatrixMarket`], relative to the config file.
    pub path: Option<PathBuf>,
    pub data: DataKind,
    pub profile: Profile,
    pub horizon: f64,
}

impl Default for ProblemSpec {
    fn default() -> Self {
        Self {
            operator: OperatorKind::Heat1d,
            m: 32,
            length: 1.0,
            mx: 16,
            my: 16,
            path: None,
            data: DataKind::Manufactured,
            profile: Profile::Sine,
            horizon: 1.0,
        }
    }
}

/// A built problem with the grid used to name families.
#[derive(Clone, Debug)]
pub struct Instance {
    pub label: String,
    pub grid: Grid,
    pub problem: EvolutionProblem,
    pub lambda_max: f64,
}

impl ProblemSpec {
    pub fn label(&self) -> String {
        let op = match self.operator {
            OperatorKind::Heat1d => format!("heat_1d(m={})", self.m),
            OperatorKind::Heat2d => format!("heat_2d({}x{})", self.mx, self.my),
            OperatorKind::MatrixMarket => format!(
                "matrix_market({})",
                self.path.as_deref().map(|p| p.display().to_string()).unwrap_or_default()
            ),
        };
        let data = match self.data {
            DataKind::Manufactured => format!("manufactured-{:?}", self.profile).to_lowercase(),
            DataKind::RandomInitial => "random_initial".into(),
            DataKind::RandomForced => "random_forced".into(),
        };
        format!("{op}/{data}")
    }

    pub fn build(&self, seed: u64, base_dir: &Path) -> Result<Instance> {
        let (grid, a) = match self.operator {
            OperatorKind::Heat1d => {
                let g = Grid::Line { m: self.m, length: self.length };
                (g, g.operator()?)
            }
            OperatorKind::Heat2d => {
                let g = Grid::Rect { mx: self.mx, my: self.my };
                (g, g.operator()?)
            }
            OperatorKind::MatrixMarket => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("matrix_market problem needs `path`".into()))?;
                let a = mm::read_operator_file(base_dir.join(path))?;
                (Grid::Line { m: a.dim(), length: 1.0 }, a)
            }
        };
        let n = a.dim();
        let lambda_max = spectral_bound(&a)?;
        let label = self.label();
        let problem = match self.data {
            DataKind::Manufactured => {
                if self.operator == OperatorKind::MatrixMarket {
                    return Err(Error::Config("manufactured data needs a heat_1d or heat_2d grid".into()));
                }
                manufactured(&a, &grid, self.profile, self.horizon)?
            }
            DataKind::RandomInitial => {
                EvolutionProblem::homogeneous(label.clone(), a, random_vector(n, seed), self.horizon)?
            }
            DataKind::RandomForced => {
                let f = random_vector(n, seed.wrapping_add(1));
                EvolutionProblem::new(label.clone(), a, Arc::new(move |_| f.clone()), random_vector(n, seed), self.horizon)?
            }
        };
        Ok(Instance {
            label,
            grid,
            problem,
            lambda_max,
        })
    }
}

/// Largest eigenvalue: exact for heat operators' size range, otherwise the
/// Gershgorin bound.
fn spectral_bound(a: &SymmetricOperator) -> Result<f64> {
    if a.dim() <= ORACLE_CAP {
        max_eigenvalue(a)
    } else {
        Ok(a.norm_inf())
    }
}

/// Attaches the modal oracle as exact solution when none is present.
pub fn ensure_exact(problem: &mut EvolutionProblem) -> Result<()> {
    if problem.exact.is_none() {
        let oracle = Arc::new(ModalOracle::new(problem)?);
        problem.exact = Some(Arc::new(move |t| oracle.at(t)));
    }
    Ok(())
}

/// A family by short name (see [`named_family`]) or JSON manifest path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FamilySpec {
    Named(String),
    Manifest { manifest: PathBuf },
}

impl FamilySpec {
    pub fn label(&self) -> String {
        match self {
            FamilySpec::Named(n) => n.clone(),
            FamilySpec::Manifest { manifest } => manifest.display().to_string(),
        }
    }

    pub fn build(&self, grid: &Grid, base_dir: &Path) -> Result<DecompositionFamily> {
        match self {
            FamilySpec::Named(name) => named_family(name, grid),
            FamilySpec::Manifest { manifest } => DecompositionFamily::load_manifest(base_dir.join(manifest)),
        }
    }
}

/// Parameter grid shared by sweeps and threshold maps. Weight factors
/// multiply the configured weight, or the stability threshold when unset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    /// Values of `τ·λmax(A)`.
    pub tau_lambda: Vec<f64>,
    pub mu_factors: Vec<f64>,
    pub sigma_factors: Vec<f64>,
    pub steps: usize,
    /// Steps of the long-run check on the first family (0 disables it).
    pub long_run_steps: usize,
    /// Repeated squarings in the power-growth probe (`2^14 = 16384` steps).
    pub doublings: u32,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            tau_lambda: vec![2.0, 20.0, 200.0, 2e3, 2e4],
            mu_factors: vec![1.0],
            sigma_factors: vec![1.0],
            steps: 200,
            long_run_steps: 10_000,
            doublings: 14,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConvergenceSpec {
    /// Number of step sizes `τ0, τ0/2, ...`.
    pub refinements: usize,
    /// Allowed distance of every observed order from the formal order.
    pub order_tolerance: f64,
}

impl Default for ConvergenceSpec {
    fn default() -> Self {
        Self {
            refinements: 4,
            order_tolerance: 0.25,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingSpec {
    /// Timed steps per configuration; the median is reported.
    pub steps: usize,
    pub warmup: usize,
}

impl Default for TimingSpec {
    fn default() -> Self {
        Self { steps: 20, warmup: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub study: Option<StudyKind>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub problem: ProblemSpec,
    pub families: Vec<FamilySpec>,
    pub schemes: Vec<SchemeConfig>,
    pub sweep: SweepSpec,
    pub convergence: ConvergenceSpec,
    pub timing: TimingSpec,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            study: None,
            seed: 0,
            out: None,
            problem: ProblemSpec::default(),
            families: vec![FamilySpec::Named("strips-2".into())],
            schemes: Vec::new(),
            sweep: SweepSpec::default(),
            convergence: ConvergenceSpec::default(),
            timing: TimingSpec::default(),
            base_dir: PathBuf::from("."),
        }
    }
}

impl ExperimentConfig {
    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let mut cfg = if is_json {
            Self::from_json_str(&text)
        } else {
            Self::from_toml_str(&text)
        }
        .map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            e => e,
        })?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.families.is_empty() {
            return Err(Error::Config("no families configured".into()));
        }
        let study = self.study.unwrap_or(StudyKind::EnergyAudit);
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes configured".into()));
        }
        let sw = &self.sweep;
        if sw.tau_lambda.is_empty() || sw.mu_factors.is_empty() || sw.sigma_factors.is_empty() {
            return Err(Error::Config("sweep ranges must be nonempty".into()));
        }
        if sw.tau_lambda.iter().chain(&sw.mu_factors).chain(&sw.sigma_factors).any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("sweep values must be finite and nonnegative".into()));
        }
        if study == StudyKind::Convergence && self.convergence.refinements < 2 {
            return Err(Error::Config("convergence needs at least two step sizes".into()));
        }
        if study == StudyKind::Timing && self.timing.steps == 0 {
            return Err(Error::Config("timing needs at least one step".into()));
        }
        if let Some(p) = &self.problem.path {
            let full = self.base_dir.join(p);
            if !full.is_file() {
                return Err(Error::Config(format!("matrix file not found: {}", full.display())));
            }
        }
        for f in &self.families {
            if let FamilySpec::Manifest { manifest } = f {
                let full = self.base_dir.join(manifest);
                if !full.is_file() {
                    return Err(Error::Config(format!("family manifest not found: {}", full.display())));
                }
            }
        }
        Ok(())
    }

    pub fn instance(&self) -> Result<Instance> {
        self.problem.build(self.seed, &self.base_dir)
    }

    pub fn build_families(&self, grid: &Grid) -> Result<Vec<(String, DecompositionFamily)>> {
        self.families
            .iter()
            .map(|f| Ok((f.label(), f.build(grid, &self.base_dir)?)))
            .collect()
    }
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::schemes::SchemeKind;

    #[test]
    fn toml_and_json_agree() {
        let toml = r#"
            study = "threshold_map"
            seed = 4
            families = ["strips-2", { manifest = "fam.json" }]
            [problem]
            operator = "heat_2d"
            mx = 4
            my = 3
            [[schemes]]
            scheme = "factorized"
            tau = 0.1
            sigma = 0.5
        "#;
        let json = r#"{"study": "threshold_map", "seed": 4,
            "families": ["strips-2", {"manifest": "fam.json"}],
            "problem": {"operator": "heat_2d", "mx": 4, "my": 3},
            "schemes": [{"scheme": "factorized", "tau": 0.1, "sigma": 0.5}]}"#;
        let a = ExperimentConfig::from_toml_str(toml).unwrap();
        let b = ExperimentConfig::from_json_str(json).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.study, Some(StudyKind::ThresholdMap));
        assert_eq!(a.families[1], FamilySpec::Manifest { manifest: "fam.json".into() });
        assert_eq!(a.schemes[0].scheme, SchemeKind::Factorized);
        assert_eq!(a.sweep, SweepSpec::default());
    }

    #[test]
    fn rejects_unknown_fields_and_empty_ranges() {
        assert!(ExperimentConfig::from_toml_str("bogus = 1").is_err());
        assert!(ExperimentConfig::from_toml_str("[sweep]\nsteps_typo = 3").is_err());
        let mut cfg = ExperimentConfig::from_toml_str("[[schemes]]\nscheme = \"implicit_scalar\"").unwrap();
        assert!(cfg.validate().is_ok());
        cfg.sweep.sigma_factors.clear();
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let no_schemes = ExperimentConfig::default();
        assert!(no_schemes.validate().is_err());
    }

    #[test]
    fn missing_files_are_reported_by_path() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("exp.toml");
        std::fs::write(&path, "families = [{ manifest = \"nope.json\" }]\n[[schemes]]\nscheme = \"implicit_scalar\"\n").unwrap();
        let err = ExperimentConfig::load(&path).unwrap_err().to_string();
        assert!(err.contains("nope.json"), "{err}");
        let err = ExperimentConfig::load(dir.path().join("absent.toml")).unwrap_err().to_string();
        assert!(err.contains("absent.toml"), "{err}");
    }

    #[test]
    fn builds_problems_and_families() {
        let spec = ProblemSpec {
            operator: OperatorKind::Heat2d,
            mx: 4,
            my: 4,
            data: DataKind::RandomForced,
            ..ProblemSpec::default()
        };
        let inst = spec.build(9, Path::new(".")).unwrap();
        assert_eq!(inst.problem.dim(), 16);
        assert!(!inst.problem.zero_forcing);
        assert!(inst.lambda_max > 0.0);
        let again = spec.build(9, Path::new(".")).unwrap();
        assert_eq!(inst.problem.initial, again.problem.initial);
        let fam = FamilySpec::Named("boxes-2x2".into()).build(&inst.grid, Path::new(".")).unwrap();
        assert_eq!(fam.p(), 4);

        let mm_spec = ProblemSpec {
            operator: OperatorKind::MatrixMarket,
            path: None,
            ..ProblemSpec::default()
        };
        assert!(mm_spec.build(0, Path::new(".")).is_err());
    }

    #[test]
    fn matrix_market_problem_gets_modal_exact() {
        let dir = tempfile::tempdir().unwrap();
        let a = crate::problems::heat_1d(5, 1.0).unwrap();
        mm::write_operator_file(dir.path().join("a.mtx"), &a).unwrap();
        let spec = ProblemSpec {
            operator: OperatorKind::MatrixMarket,
            path: Some("a.mtx".into()),
            data: DataKind::RandomInitial,
            ..ProblemSpec::default()
        };
        let mut inst = spec.build(2, dir.path()).unwrap();
        assert_eq!(inst.problem.a, a);
        ensure_exact(&mut inst.problem).unwrap();
        assert_eq!(inst.problem.exact_at(0.0).unwrap(), inst.problem.initial);
    }
}
