//! Scenario configuration, execution, persistence and regression baselines.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::domain::{DomainKind, DomainSpec, HypothesisReport, PolyhedralDomain};
use crate::error::{Error, Result};
use crate::foliation::{
    dynamics_check, evolution_lemma_check, foliate, write_trace_csv, DynamicsLedger, EvolutionCheck, FoliationTrace,
    LeafFamily, LeafOptions,
};
use crate::mesh::{
    gauss_bonnet_residual, gauss_bonnet_residual_fit, geometry_report, horizontal_slice, perturbed, GeometryReport,
    TriSurface,
};
use crate::metric::{Aabb, MetricField, ScalarSignReport};
use crate::solver::{minimize, EnergyReport, GammaPolicy, SolverOptions};
use crate::stability::{
    comparison_verdict, interior_samples, min_face_mean_curvature, rigidity_certificate, ComparisonLedger,
    ComparisonVerdict,
};
use crate::wedge::{wedge_suite, WedgeSuite};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    Solve,
    Foliate,
    Comparison,
    Gaussbonnet,
    Evolution,
    Curvature,
    Wedge,
}

/// Initial surface: horizontal slice at `height` (fraction of the domain
/// height) with a smooth vertical perturbation of amplitude `perturb`
/// (fraction of the domain scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitOptions {
    pub height: f64,
    pub perturb: f64,
}

impl Default for InitOptions {
    fn default() -> Self {
        InitOptions {
            height: 0.5,
            perturb: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FoliationOptions {
    /// Parameter range; defaults to `[0.1, 1]` on cones and `[0.3, 0.7]` on prisms.
    pub range: Option<[f64; 2]>,
    pub steps: usize,
    pub leaf: LeafOptions,
    /// Run the mean-curvature dynamics check.
    pub dynamics: bool,
    /// Certify rigidity of every leaf.
    pub rigidity: bool,
}

impl Default for FoliationOptions {
    fn default() -> Self {
        FoliationOptions {
            range: None,
            steps: 10,
            leaf: LeafOptions::default(),
            dynamics: true,
            rigidity: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Variation {
    #[default]
    One,
    /// `cos(π x / L)` with `L` the domain scale.
    Cosx,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionOptions {
    pub variation: Variation,
    pub dt: f64,
    /// Admissible interior mean curvature of the tested slice.
    pub h_tol: f64,
}

impl Default for EvolutionOptions {
    fn default() -> Self {
        EvolutionOptions {
            variation: Variation::One,
            dt: 1e-3,
            h_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub domain: DomainSpec,
    /// Catalog metric, e.g. `"flat"` or `"conformal_gaussian(0.3,0.6,0,0,1)"`.
    #[serde(default = "flat_name")]
    pub metric: String,
    /// Box the metric is defined on; defaults to the domain box padded by half its scale.
    #[serde(default)]
    pub metric_box: Option<Aabb>,
    #[serde(default)]
    pub gamma: GammaPolicy,
    pub h: f64,
    #[serde(default)]
    pub task: Task,
    #[serde(default)]
    pub init: InitOptions,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default)]
    pub foliation: FoliationOptions,
    #[serde(default)]
    pub evolution: EvolutionOptions,
    #[serde(default = "wedge_samples")]
    pub wedge_samples: usize,
    #[serde(default)]
    pub seed: u64,
    /// Baseline JSON, relative to the config file.
    #[serde(default)]
    pub baseline: Option<PathBuf>,
}

fn flat_name() -> String {
    "flat".into()
}

fn wedge_samples() -> usize {
    100_000
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConfigFile {
    Many { scenarios: Vec<Scenario> },
    One(Box<Scenario>),
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Vec<Scenario>> {
        // parse the single form first so that schema errors name the field
        let v: Value = serde_json::from_str(s)?;
        if v.get("scenarios").is_some() {
            match serde_json::from_value::<ConfigFile>(v)? {
                ConfigFile::Many { scenarios } => Ok(scenarios),
                ConfigFile::One(s) => Ok(vec![*s]),
            }
        } else {
            Ok(vec![serde_json::from_value(v)?])
        }
    }

    /// Load a config; relative baseline paths are resolved against its directory.
    pub fn load(path: &Path) -> Result<Vec<Scenario>> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut out = Self::from_json(&text)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        for s in &mut out {
            if let Some(b) = &s.baseline {
                if b.is_relative() {
                    s.baseline = Some(dir.join(b));
                }
            }
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(PolyhedralDomain, MetricField, Vec<f64>)> {
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::Config(format!("h must be positive, got {}", self.h)));
        }
        let p = PolyhedralDomain::from_spec(&self.domain)?;
        let bbox = self.metric_box.unwrap_or_else(|| p.bbox().padded(0.5 * p.scale()));
        let field = MetricField::from_spec(&self.metric, bbox)?;
        let gamma = self.gamma.resolve(&p)?;
        Ok((p, field, gamma))
    }

    fn initial_surface(&self, p: &PolyhedralDomain) -> Result<TriSurface> {
        let s = horizontal_slice(p, self.init.height * p.height(), self.h)?;
        Ok(if self.init.perturb != 0.0 {
            perturbed(&s, p, self.init.perturb * p.scale())
        } else {
            s
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceBundle {
    pub trace: FoliationTrace,
    pub dynamics: Option<DynamicsLedger>,
    /// Largest rigidity residual per leaf.
    pub rigidity: Option<Vec<f64>>,
    /// `max F - min F` over the leaves.
    pub energy_spread: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussBonnetBundle {
    pub defect_residual: f64,
    pub fit_residual: f64,
    pub report: GeometryReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvatureBundle {
    pub scalar: ScalarSignReport,
    pub min_face_mean_curvature: f64,
    pub hypotheses: HypothesisReport,
}

/// Output of one scenario run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "lowercase")]
pub enum Bundle {
    Solve(EnergyReport),
    Foliate(Box<TraceBundle>),
    Comparison(ComparisonLedger),
    Gaussbonnet(Box<GaussBonnetBundle>),
    Evolution(EvolutionCheck),
    Curvature(CurvatureBundle),
    Wedge(WedgeSuite),
}

impl Bundle {
    /// Whether the run's own acceptance verdict holds.
    pub fn pass(&self) -> bool {
        match self {
            Bundle::Solve(r) => r.converged,
            Bundle::Foliate(t) => t.trace.truncated.is_none() && t.dynamics.as_ref().is_none_or(|d| d.pass),
            Bundle::Comparison(c) => c.verdict == ComparisonVerdict::Consistent,
            Bundle::Gaussbonnet(g) => g.defect_residual < 1e-10,
            Bundle::Evolution(e) => e.mean_curvature.relative < 0.03 && e.angle.relative < 0.03,
            Bundle::Curvature(c) => c.scalar.pass,
            Bundle::Wedge(w) => w.pass,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Bundle plus the artifacts that are persisted next to it.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub scenario: String,
    pub bundle: Bundle,
    pub mesh: Option<TriSurface>,
}

/// Run `sc` as `task` (the scenario's own task when `None`).
pub fn run(sc: &Scenario, task: Option<Task>) -> Result<RunOutput> {
    run_inner(sc, task.unwrap_or(sc.task)).map_err(|e| Error::Scenario {
        name: sc.name.clone(),
        source: Box::new(e),
    })
}

fn run_inner(sc: &Scenario, task: Task) -> Result<RunOutput> {
    let (p, field, gamma) = sc.validate()?;
    let mut mesh = None;
    let bundle = match task {
        Task::Solve => {
            let init = sc.initial_surface(&p)?;
            let (s, rep) = minimize(&p, &field, &gamma, &init, &sc.solver)?;
            mesh = Some(s);
            Bundle::Solve(rep)
        }
        Task::Foliate => {
            let fam = LeafFamily::new(&p, sc.h)?;
            let range = sc.foliation.range.unwrap_or(match p.kind() {
                DomainKind::Cone => [0.1, 1.0],
                DomainKind::Prism => [0.3, 0.7],
            });
            let trace = foliate(
                &p,
                &field,
                &gamma,
                &fam,
                (range[0], range[1]),
                sc.foliation.steps,
                &sc.foliation.leaf,
            )?;
            let dynamics = if sc.foliation.dynamics {
                Some(dynamics_check(&trace, &p, &field, &fam)?)
            } else {
                None
            };
            let rigidity = if sc.foliation.rigidity {
                let model = p.model_angles();
                let mut r = Vec::with_capacity(trace.leaves.len());
                for l in &trace.leaves {
                    r.push(rigidity_certificate(&p, &fam.surface(&l.params), &field, &model)?.max_residual());
                }
                Some(r)
            } else {
                None
            };
            let e: Vec<f64> = trace.leaves.iter().map(|l| l.energy).collect();
            let energy_spread = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - e.iter().cloned().fold(f64::INFINITY, f64::min);
            if let Some(l) = trace.leaves.last() {
                mesh = Some(fam.surface(&l.params));
            }
            Bundle::Foliate(Box::new(TraceBundle {
                trace,
                dynamics,
                rigidity,
                energy_spread,
            }))
        }
        Task::Comparison => {
            let init = sc.initial_surface(&p)?;
            Bundle::Comparison(comparison_verdict(&p, &field, &gamma, &init, &sc.solver)?)
        }
        Task::Gaussbonnet => {
            let s = sc.initial_surface(&p)?;
            let report = geometry_report(&p, &s, &field)?;
            mesh = Some(s);
            Bundle::Gaussbonnet(Box::new(GaussBonnetBundle {
                defect_residual: gauss_bonnet_residual(&report),
                fit_residual: gauss_bonnet_residual_fit(&report),
                report,
            }))
        }
        Task::Evolution => {
            let s = sc.initial_surface(&p)?;
            let l = p.scale();
            let f: Vec<f64> = s
                .vertices
                .iter()
                .map(|x| match sc.evolution.variation {
                    Variation::One => 1.0,
                    Variation::Cosx => (std::f64::consts::PI * x.x / l).cos(),
                })
                .collect();
            let c = evolution_lemma_check(&p, &field, &s, &f, sc.evolution.dt, sc.evolution.h_tol)?;
            mesh = Some(s);
            Bundle::Evolution(c)
        }
        Task::Curvature => {
            let samples = interior_samples(&p, 4);
            Bundle::Curvature(CurvatureBundle {
                scalar: field.verify_scalar_sign(&samples, 1e-8)?,
                min_face_mean_curvature: min_face_mean_curvature(&p, &field, 3)?,
                hypotheses: p.check_hypotheses(&field, &gamma, 5)?,
            })
        }
        Task::Wedge => Bundle::Wedge(wedge_suite(sc.wedge_samples, sc.seed)),
    };
    Ok(RunOutput {
        scenario: sc.name.clone(),
        bundle,
        mesh,
    })
}

/// Write `<name>.json`, `<name>.obj` (with its tag sidecar) and, for traces,
/// `<name>.csv` into `dir`. Returns the written paths.
pub fn persist(out: &RunOutput, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let json = dir.join(format!("{}.json", out.scenario));
    std::fs::write(&json, out.bundle.to_json()?)?;
    written.push(json);
    if let Some(m) = &out.mesh {
        let obj = dir.join(format!("{}.obj", out.scenario));
        m.write_obj(&obj)?;
        written.push(obj);
    }
    if let Bundle::Foliate(t) = &out.bundle {
        let csv = dir.join(format!("{}.csv", out.scenario));
        write_trace_csv(&csv, &t.trace, t.dynamics.as_ref())?;
        written.push(csv);
    }
    Ok(written)
}

/// Reference values with per-field relative tolerances. A field's tolerance
/// is looked up by its exact path, then by `"*"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Baseline {
    pub scenario: String,
    pub values: BTreeMap<String, f64>,
    pub tolerances: BTreeMap<String, f64>,
    /// Denominator floor of the relative difference.
    #[serde(default = "abs_floor")]
    pub abs_floor: f64,
}

fn abs_floor() -> f64 {
    1e-12
}

impl Baseline {
    /// Baseline holding the given fields of `bundle` (all scalar fields when
    /// `fields` is empty) with tolerance `tol`.
    pub fn from_bundle(scenario: &str, bundle: &Bundle, fields: &[String], tol: f64) -> Result<Self> {
        let flat = flatten(bundle)?;
        let values = if fields.is_empty() {
            flat
        } else {
            let mut v = BTreeMap::new();
            for f in fields {
                let x = flat
                    .get(f)
                    .ok_or_else(|| Error::Config(format!("bundle has no field {f}")))?;
                v.insert(f.clone(), *x);
            }
            v
        };
        Ok(Baseline {
            scenario: scenario.into(),
            values,
            tolerances: BTreeMap::from([("*".into(), tol)]),
            abs_floor: abs_floor(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::MissingBaseline(path.display().to_string()))?;
        Ok(serde_json::from_str(&text)?)
    }

    fn tolerance(&self, field: &str) -> f64 {
        self.tolerances
            .get(field)
            .or_else(|| self.tolerances.get("*"))
            .copied()
            .unwrap_or(0.0)
    }
}

/// Scalar leaves of the bundle JSON keyed by dotted path (`a.b.3.c`);
/// booleans map to 0/1.
pub fn flatten(bundle: &Bundle) -> Result<BTreeMap<String, f64>> {
    fn walk(v: &Value, path: String, out: &mut BTreeMap<String, f64>) {
        let join = |k: &str| if path.is_empty() { k.to_string() } else { format!("{path}.{k}") };
        match v {
            Value::Number(n) => {
                if let Some(x) = n.as_f64() {
                    out.insert(path, x);
                }
            }
            Value::Bool(b) => {
                out.insert(path, if *b { 1.0 } else { 0.0 });
            }
            Value::Array(a) => {
                for (i, x) in a.iter().enumerate() {
                    walk(x, join(&i.to_string()), out);
                }
            }
            Value::Object(m) => {
                for (k, x) in m {
                    walk(x, join(k), out);
                }
            }
            _ => {}
        }
    }
    let mut out = BTreeMap::new();
    walk(&serde_json::to_value(bundle)?, String::new(), &mut out);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDiff {
    pub field: String,
    pub baseline: f64,
    pub value: Option<f64>,
    pub relative: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffReport {
    pub scenario: String,
    pub diffs: Vec<FieldDiff>,
    pub failed: Vec<String>,
    pub pass: bool,
}

/// Compare every baseline field against the bundle.
pub fn regress(bundle: &Bundle, baseline: &Baseline) -> Result<DiffReport> {
    let flat = flatten(bundle)?;
    let mut diffs = Vec::with_capacity(baseline.values.len());
    for (k, &b) in &baseline.values {
        let tol = baseline.tolerance(k);
        let value = flat.get(k).copied();
        let relative = match value {
            Some(v) => (v - b).abs() / b.abs().max(baseline.abs_floor),
            None => f64::INFINITY,
        };
        diffs.push(FieldDiff {
            field: k.clone(),
            baseline: b,
            value,
            relative,
            tolerance: tol,
            pass: relative <= tol,
        });
    }
    let failed: Vec<String> = diffs.iter().filter(|d| !d.pass).map(|d| d.field.clone()).collect();
    Ok(DiffReport {
        scenario: baseline.scenario.clone(),
        pass: failed.is_empty(),
        failed,
        diffs,
    })
}

/// Run the scenario and compare against its baseline file.
pub fn regress_scenario(sc: &Scenario) -> Result<(RunOutput, DiffReport)> {
    let path = sc
        .baseline
        .as_ref()
        .ok_or_else(|| Error::MissingBaseline(format!("scenario {} declares no baseline", sc.name)))?;
    let base = Baseline::load(path)?;
    let out = run(sc, None)?;
    let rep = regress(&out.bundle, &base)?;
    Ok((out, rep))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cube(task: &str) -> String {
        format!(
            r#"{{"name": "t", "task": "{task}", "h": 0.25,
               "domain": {{"kind": "prism", "base": [[0,0],[1,0],[1,1],[0,1]], "top_scale": 1.0, "top_offset": [0,0,1]}}}}"#
        )
    }

    #[test]
    fn missing_base_names_the_field() {
        let bad = r#"{"name": "x", "h": 0.1, "domain": {"kind": "cone", "apex": [0,0,1]}}"#;
        let e = Scenario::from_json(bad).unwrap_err();
        assert!(e.to_string().contains("base"), "{e}");
    }

    #[test]
    fn rejects_nonpositive_h() {
        let mut s = Scenario::from_json(&cube("solve")).unwrap().remove(0);
        s.h = 0.0;
        assert!(matches!(run(&s, None).unwrap_err().root(), Error::Config(_)));
    }

    #[test]
    fn rerun_is_identical_and_round_trips() {
        let s = Scenario::from_json(&cube("gaussbonnet")).unwrap().remove(0);
        let a = run(&s, None).unwrap();
        let b = run(&s, None).unwrap();
        let ja = a.bundle.to_json().unwrap();
        assert_eq!(ja, b.bundle.to_json().unwrap());
        let back = Bundle::from_json(&ja).unwrap();
        assert_eq!(back.to_json().unwrap(), ja);
        let base = Baseline::from_bundle("t", &a.bundle, &[], 0.0).unwrap();
        let d = regress(&b.bundle, &base).unwrap();
        assert!(d.pass && d.diffs.iter().all(|x| x.relative == 0.0));
    }

    #[test]
    fn regress_lists_failing_fields() {
        let s = Scenario::from_json(&cube("gaussbonnet")).unwrap().remove(0);
        let a = run(&s, None).unwrap();
        let mut base = Baseline::from_bundle("t", &a.bundle, &["report.total_gauss_defect".into()], 1e-9).unwrap();
        base.values.insert("report.total_gauss_defect".into(), 0.5);
        base.values.insert("nonexistent".into(), 1.0);
        let d = regress(&a.bundle, &base).unwrap();
        assert!(!d.pass);
        assert_eq!(d.failed, vec!["nonexistent".to_string(), "report.total_gauss_defect".to_string()]);
        let s = Scenario {
            baseline: None,
            ..s
        };
        assert!(matches!(regress_scenario(&s), Err(Error::MissingBaseline(_))));
    }

    #[test]
    fn persists_artifacts() {
        let s = Scenario::from_json(&cube("foliate")).unwrap().remove(0);
        let out = run(&s, None).unwrap();
        assert!(out.bundle.pass());
        let dir = tempfile::tempdir().unwrap();
        let files = persist(&out, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let j = std::fs::read_to_string(&files[0]).unwrap();
        assert!(matches!(Bundle::from_json(&j).unwrap(), Bundle::Foliate(_)));
        let csv = std::fs::read_to_string(&files[2]).unwrap();
        assert!(csv.starts_with("rho,lambda,c_rho,min_lapse,angle_residual,hprime_minus_ch"));
        assert_eq!(TriSurface::read_obj(&files[1]).unwrap(), out.mesh.unwrap());
    }
}
