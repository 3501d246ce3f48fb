//! Batch front door: parse a run configuration, execute the selected
//! suites over sampled points, and assemble a machine-readable report.
//!
//! Suite execution is a parallel map over sample points with per-point
//! seeds derived from the run seed, so reports are deterministic for a
//! fixed (config, seed) regardless of thread scheduling. Exit status is
//! 0 when every verdict passes, 1 on violations, 2 on configuration
//! errors.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientStructure;
use crate::catalog;
use crate::error::GeomError;
use crate::immersion::{frame_at, xi_tangency, FramedPoint, Immersion, XiVerdict};
use crate::report::Checked;
use crate::secondform::{self, SecondFormData};
use crate::semislant::{self, Label, PointSlantData, SplitSpec};
use crate::tangency;
use crate::warped::{self, LemmaContext, LemmaKey, LemmaPicks, WarpSpec};

/// Pre-flight margin: sampled slant angles within this of 0 or π/2 count
/// as degenerate when deciding whether an exclusion predicate is missing.
const DEGENERACY_SCAN_TOL: f64 = 1e-3;

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbientConfig {
    pub name: String,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImmersionConfig {
    Catalog {
        catalog: String,
    },
    Inline {
        variables: Vec<String>,
        components: Vec<String>,
        domain: Vec<[f64; 2]>,
        #[serde(default)]
        exclusions: Vec<String>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash, PartialOrd, Ord)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Structure,
    Tangency,
    Semislant,
    Lemmas,
    Warped,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Structure => "structure",
            Suite::Tangency => "tangency",
            Suite::Semislant => "semislant",
            Suite::Lemmas => "lemmas",
            Suite::Warped => "warped",
        }
    }
}

fn default_samples() -> usize {
    100
}

fn default_seed() -> u64 {
    42
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient: Option<AmbientConfig>,
    pub immersion: ImmersionConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warp: Option<WarpSpec>,
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub tolerances: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suites: Option<Vec<String>>,
}

/// One schema or semantic violation, addressed by a JSON-pointer-style
/// path into the configuration document.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfigIssue {
    pub path: String,
    pub message: String,
}

#[derive(Debug)]
pub enum RunError {
    Config(Vec<ConfigIssue>),
    Internal(String),
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::Config(issues) => {
                writeln!(f, "configuration rejected:")?;
                for i in issues {
                    writeln!(f, "  {}: {}", i.path, i.message)?;
                }
                Ok(())
            }
            RunError::Internal(msg) => write!(f, "internal error: {msg}"),
        }
    }
}

impl std::error::Error for RunError {}

fn one_issue(path: &str, message: impl Into<String>) -> RunError {
    RunError::Config(vec![ConfigIssue {
        path: path.into(),
        message: message.into(),
    }])
}

/// Built-in tolerance table; structural identities at 1e-8,
/// second-derivative-dependent identities at 1e-6. Every name is
/// overridable from the config or the command line.
pub fn default_tolerances() -> BTreeMap<String, f64> {
    let mut t = BTreeMap::new();
    for (name, value) in [
        ("structure", 1e-8),
        ("tangency", 1e-8),
        ("semislant", 1e-8),
        ("angle", 1e-7),
        ("theta_constancy", 1e-7),
        ("warp", 1e-6),
        ("lemmas", 1e-6),
        ("chain", 1e-10),
        ("xi_lnf", 1e-8),
        ("mixed_tg_min", 1e-3),
    ] {
        t.insert(name.to_string(), value);
    }
    t
}

struct Resolved {
    ambient: AmbientStructure,
    immersion: Immersion,
    split: Option<SplitSpec>,
    warp: Option<WarpSpec>,
    samples: usize,
    seed: u64,
    tolerances: BTreeMap<String, f64>,
    suites: Vec<Suite>,
    echo: RunConfig,
}

fn parse_suite(name: &str) -> Option<Suite> {
    match name {
        "structure" => Some(Suite::Structure),
        "tangency" => Some(Suite::Tangency),
        "semislant" => Some(Suite::Semislant),
        "lemmas" => Some(Suite::Lemmas),
        "warped" => Some(Suite::Warped),
        _ => None,
    }
}

fn resolve(config: &RunConfig) -> Result<Resolved, RunError> {
    let mut issues: Vec<ConfigIssue> = Vec::new();
    let mut push = |path: &str, message: String| {
        issues.push(ConfigIssue {
            path: path.to_string(),
            message,
        })
    };

    // Immersion (and defaults carried by a catalog entry).
    let mut split = config.split.clone();
    let mut warp = config.warp.clone();
    let mut catalog_ambient = None;
    let immersion = match &config.immersion {
        ImmersionConfig::Catalog { catalog: name } => match catalog::catalog(name) {
            Ok(entry) => {
                if split.is_none() {
                    split = entry.split.clone();
                }
                if warp.is_none() {
                    warp = entry.warp.clone();
                }
                catalog_ambient = Some(entry.ambient);
                Some(entry.immersion)
            }
            Err(_) => {
                push("/immersion/catalog", format!("unknown catalog entry `{name}`"));
                None
            }
        },
        ImmersionConfig::Inline {
            variables,
            components,
            domain,
            exclusions,
        } => {
            if domain.len() != variables.len() {
                push(
                    "/immersion/domain",
                    format!(
                        "{} intervals for {} variables",
                        domain.len(),
                        variables.len()
                    ),
                );
            }
            let vars: Vec<&str> = variables.iter().map(String::as_str).collect();
            let comps: Vec<&str> = components.iter().map(String::as_str).collect();
            let excl: Vec<&str> = exclusions.iter().map(String::as_str).collect();
            let boxes: Vec<(f64, f64)> = domain.iter().map(|d| (d[0], d[1])).collect();
            match Immersion::new(&vars, &comps, &boxes, &excl) {
                Ok(im) => Some(im),
                Err(e) => {
                    push("/immersion", e.to_string());
                    None
                }
            }
        }
    };

    // Ambient: explicit config wins over the catalog default.
    let ambient = match (&config.ambient, catalog_ambient) {
        (Some(ac), _) => {
            if ac.n < 1 {
                push("/ambient/n", "n must be at least 1".into());
                None
            } else {
                match AmbientStructure::by_name(&ac.name, ac.n) {
                    Ok(a) => Some(a),
                    Err(e) => {
                        push("/ambient/name", e.to_string());
                        None
                    }
                }
            }
        }
        (None, Some(a)) => Some(a),
        (None, None) => {
            push("/ambient", "required unless the immersion is a catalog entry".into());
            None
        }
    };

    if config.samples == 0 {
        push("/samples", "at least one sample point is required".into());
    }

    let mut tolerances = default_tolerances();
    for (name, value) in &config.tolerances {
        if !value.is_finite() || *value <= 0.0 {
            push(
                &format!("/tolerances/{name}"),
                "tolerance must be a positive finite number".into(),
            );
        }
        tolerances.insert(name.clone(), *value);
    }

    // Suites: explicit list, or everything the declared inputs support.
    let suites: Vec<Suite> = match &config.suites {
        Some(names) => {
            let mut out = Vec::new();
            for (i, name) in names.iter().enumerate() {
                match parse_suite(name) {
                    Some(s) => {
                        if !out.contains(&s) {
                            out.push(s);
                        }
                    }
                    None => push(&format!("/suites/{i}"), format!("unknown suite `{name}`")),
                }
            }
            out
        }
        None => {
            let mut out = vec![Suite::Structure, Suite::Tangency];
            if split.is_some() {
                out.push(Suite::Semislant);
            }
            if warp.is_some() {
                out.push(Suite::Warped);
            }
            if split.is_some() && warp.is_some() {
                if let Some(a) = &ambient {
                    if a.sasakian {
                        out.push(Suite::Lemmas);
                    }
                }
            }
            out
        }
    };

    // Cross-field prerequisites.
    if let (Some(im), Some(amb)) = (&immersion, &ambient) {
        if im.ambient_dim() != amb.dim() {
            push(
                "/immersion/components",
                format!(
                    "{} components for ambient dimension {}",
                    im.ambient_dim(),
                    amb.dim()
                ),
            );
        }
        if let Some(sp) = &split {
            if sp.m1() + sp.m2() + 1 != im.domain_dim() {
                push(
                    "/split",
                    format!(
                        "split dimensions {} + {} + 1 do not cover domain dimension {}",
                        sp.m1(),
                        sp.m2(),
                        im.domain_dim()
                    ),
                );
            }
            for (gname, group) in [("D", &sp.d), ("Dtheta", &sp.dtheta)] {
                for (i, vec) in group.iter().enumerate() {
                    if vec.len() != im.domain_dim() {
                        push(
                            &format!("/split/{gname}/{i}"),
                            format!(
                                "vector has {} entries for {} variables",
                                vec.len(),
                                im.domain_dim()
                            ),
                        );
                    }
                }
            }
            if sp.xi.len() != im.domain_dim() {
                push("/split/xi", "length differs from the domain dimension".into());
            }
        }
        if let Some(w) = &warp {
            if let Err(e) = w.validate(im.domain_dim()) {
                push("/warp", e.to_string());
            }
        }
        for (i, s) in suites.iter().enumerate() {
            match s {
                Suite::Semislant if split.is_none() => {
                    push(&format!("/suites/{i}"), "semislant requires a split".into())
                }
                Suite::Warped if warp.is_none() => push(
                    &format!("/suites/{i}"),
                    "warped requires a base/fiber declaration".into(),
                ),
                Suite::Lemmas => {
                    if split.is_none() || warp.is_none() {
                        push(
                            &format!("/suites/{i}"),
                            "lemmas requires both a split and a base/fiber declaration".into(),
                        );
                    }
                    if !amb.sasakian {
                        push(
                            &format!("/suites/{i}"),
                            "lemmas requires a Sasakian ambient structure".into(),
                        );
                    }
                }
                _ => {}
            }
        }
    }

    if !issues.is_empty() {
        return Err(RunError::Config(issues));
    }

    let immersion = immersion.unwrap();
    let ambient = ambient.unwrap();
    let echo = RunConfig {
        ambient: Some(AmbientConfig {
            name: ambient.name.clone(),
            n: ambient.n,
        }),
        immersion: config.immersion.clone(),
        split: split.clone(),
        warp: warp.clone(),
        samples: config.samples,
        seed: config.seed,
        tolerances: tolerances.clone(),
        suites: Some(suites.iter().map(|s| s.name().to_string()).collect()),
    };
    Ok(Resolved {
        ambient,
        immersion,
        split,
        warp,
        samples: config.samples,
        seed: config.seed,
        tolerances,
        suites,
        echo,
    })
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateLine {
    pub name: String,
    /// max over evaluated samples; absent when every sample was refused
    pub max: Option<f64>,
    pub mean: Option<f64>,
    pub threshold: f64,
    /// "below": pass when max < threshold; "above": pass when min > threshold
    pub mode: String,
    pub refused: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub point: Vec<f64>,
    pub residuals: Vec<(String, Checked)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub pass: bool,
    pub aggregates: Vec<AggregateLine>,
    pub points: Vec<PointRecord>,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub engine_version: String,
    pub timestamp_unix: u64,
    pub config: RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub classification: Option<Label>,
    pub suites: Vec<SuiteReport>,
    pub overall_pass: bool,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        if self.overall_pass {
            0
        } else {
            1
        }
    }
}

/// Fold per-point named residuals into aggregate pass lines. `mode_above`
/// names lines that must exceed their threshold instead of staying below.
fn aggregate(
    points: &[PointRecord],
    thresholds: &BTreeMap<String, f64>,
    default_threshold: f64,
    mode_above: &[&str],
) -> Vec<AggregateLine> {
    let mut order: Vec<String> = Vec::new();
    let mut seen: BTreeMap<String, (Vec<f64>, usize)> = BTreeMap::new();
    for rec in points {
        for (name, checked) in &rec.residuals {
            if !seen.contains_key(name) {
                order.push(name.clone());
                seen.insert(name.clone(), (Vec::new(), 0));
            }
            let slot = seen.get_mut(name).unwrap();
            match checked {
                Checked::Residual(v) => slot.0.push(*v),
                Checked::Refused(_) => slot.1 += 1,
            }
        }
    }
    order
        .into_iter()
        .map(|name| {
            let (values, refused) = seen.remove(&name).unwrap();
            let threshold = thresholds.get(&name).copied().unwrap_or(default_threshold);
            let above = mode_above.contains(&name.as_str());
            let (max, mean, pass) = if values.is_empty() {
                (None, None, true)
            } else {
                let max = values.iter().fold(f64::MIN, |a, &b| a.max(b));
                let min = values.iter().fold(f64::MAX, |a, &b| a.min(b));
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                let pass = if above { min > threshold } else { max < threshold };
                (Some(max), Some(mean), pass)
            };
            AggregateLine {
                name,
                max,
                mean,
                threshold,
                mode: if above { "above".into() } else { "below".into() },
                refused,
                pass,
            }
        })
        .collect()
}

fn point_seed(seed: u64, idx: usize, salt: u64) -> u64 {
    seed.wrapping_mul(0x9e3779b97f4a7c15)
        .wrapping_add(idx as u64)
        .wrapping_add(salt << 32)
}

fn internal(e: impl std::fmt::Display) -> RunError {
    RunError::Internal(e.to_string())
}

// ---------------------------------------------------------------------------
// Suites
// ---------------------------------------------------------------------------

struct Workspace<'a> {
    res: &'a Resolved,
    frames: Vec<FramedPoint>,
    second_forms: Option<Vec<SecondFormData>>,
    warp_report: Option<warped::WarpReport>,
}

impl<'a> Workspace<'a> {
    fn tol(&self, name: &str) -> f64 {
        self.res.tolerances[name]
    }
}

fn random_unit_combo(
    rng: &mut ChaCha8Rng,
    basis: &[DVector<f64>],
    fp: &FramedPoint,
) -> DVector<f64> {
    loop {
        let mut v = DVector::zeros(basis[0].len());
        for b in basis {
            v += b * rng.gen_range(-1.0..1.0f64);
        }
        let n = fp.g_norm(&fp.domain_to_ambient(&v));
        if n > 1e-3 {
            return v / n;
        }
    }
}

fn random_combo_ambient(rng: &mut ChaCha8Rng, basis: &[DVector<f64>]) -> DVector<f64> {
    loop {
        let mut v = DVector::zeros(basis[0].len());
        for b in basis {
            v += b * rng.gen_range(-1.0..1.0f64);
        }
        if v.norm() > 1e-3 {
            return v;
        }
    }
}

fn structure_suite(ws: &Workspace<'_>) -> Result<SuiteReport, RunError> {
    let res = ws.res;
    let dim = res.ambient.dim();
    let records: Vec<PointRecord> = ws
        .frames
        .par_iter()
        .enumerate()
        .map(|(idx, fp)| -> Result<PointRecord, GeomError> {
            let mut rng = ChaCha8Rng::seed_from_u64(point_seed(res.seed, idx, 1));
            let p = &fp.pos;
            let ac = res.ambient.check_almost_contact(p)?;
            let mut residuals: Vec<(String, Checked)> = vec![
                ("phi_square".into(), Checked::residual(ac.phi_square)),
                ("eta_xi".into(), Checked::residual(ac.eta_xi)),
                ("eta_phi".into(), Checked::residual(ac.eta_phi)),
                ("phi_xi".into(), Checked::residual(ac.phi_xi)),
                ("compatibility".into(), Checked::residual(ac.compatibility)),
            ];
            let g = res.ambient.metric_at(p)?;
            let phi = res.ambient.phi_at(p)?;
            let xi = res.ambient.xi_at(p)?;
            let eta = res.ambient.eta_at(p)?;
            let mut skew = 0.0f64;
            let mut eta_metric = 0.0f64;
            for _ in 0..2 {
                let x = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
                let y = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
                skew = skew.max(
                    (crate::numjet::g_dot(&g, &(&phi * &x), &y)
                        + crate::numjet::g_dot(&g, &x, &(&phi * &y)))
                    .abs(),
                );
                eta_metric =
                    eta_metric.max((eta.dot(&x) - crate::numjet::g_dot(&g, &x, &xi)).abs());
            }
            residuals.push(("phi_skew".into(), Checked::residual(skew)));
            residuals.push(("eta_metric".into(), Checked::residual(eta_metric)));

            let gamma = res.ambient.christoffel(p)?;
            residuals.push((
                "christoffel_symmetry".into(),
                Checked::residual(gamma.symmetry_residual()),
            ));
            residuals.push((
                "metricity".into(),
                Checked::residual(res.ambient.metricity_residual(p)?),
            ));

            if res.ambient.sasakian {
                let mut worst = 0.0f64;
                for _ in 0..2 {
                    let x = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
                    let y = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
                    let r = res.ambient.check_sasakian(p, &x, &y)?;
                    worst = worst.max(r.max());
                }
                residuals.push(("sasakian".into(), Checked::residual(worst)));
            }
            Ok(PointRecord {
                point: fp.param.as_slice().to_vec(),
                residuals,
            })
        })
        .collect::<Result<_, _>>()
        .map_err(internal)?;

    let tol = ws.tol("structure");
    let aggregates = aggregate(&records, &BTreeMap::new(), tol, &[]);
    let pass = aggregates.iter().all(|a| a.pass);
    Ok(SuiteReport {
        suite: "structure".into(),
        pass,
        aggregates,
        points: records,
        notes: vec![],
    })
}

fn tangency_suite(ws: &Workspace<'_>) -> Result<SuiteReport, RunError> {
    let res = ws.res;
    let split = res.split.as_ref();
    let records: Vec<PointRecord> = ws
        .frames
        .par_iter()
        .enumerate()
        .map(|(idx, fp)| -> Result<PointRecord, GeomError> {
            let mut rng = ChaCha8Rng::seed_from_u64(point_seed(res.seed, idx, 2));
            let mut residuals: Vec<(String, Checked)> = Vec::new();

            let pf = tangency::pf_decompose(fp, &res.ambient)?;
            let tf = tangency::tf_decompose(fp, &res.ambient)?;
            residuals.push((
                "reconstruction".into(),
                Checked::residual(tangency::reconstruction_residual(
                    fp,
                    &res.ambient,
                    &pf,
                    &tf,
                )?),
            ));
            residuals.push((
                "adjointness".into(),
                Checked::residual(tangency::adjointness_residual(&pf, &tf)),
            ));

            // θ-free skew identity over random tangent picks.
            let mut skew = 0.0f64;
            for _ in 0..10 {
                let cx = DVector::from_fn(fp.domain_dim(), |_, _| rng.gen_range(-1.0..1.0));
                let cy = DVector::from_fn(fp.domain_dim(), |_, _| rng.gen_range(-1.0..1.0));
                let ids = tangency::identity_residuals(
                    fp,
                    &res.ambient,
                    &fp.domain_to_ambient(&cx),
                    &fp.domain_to_ambient(&cy),
                    None,
                )?;
                skew = skew.max(ids.p_skew);
            }
            residuals.push(("p_skew".into(), Checked::residual(skew)));

            if let Some(spec) = split {
                let resolved = semislant::resolve_split(spec, &res.immersion.variables, fp)?;
                let xi_t = xi_tangency(fp, &res.ambient, ws.tol("tangency"))?;
                residuals.push((
                    "xi_normal_part".into(),
                    Checked::residual(xi_t.normal_norm),
                ));
                if xi_t.verdict != XiVerdict::Tangent {
                    residuals.push((
                        "xi_tangent".into(),
                        Checked::residual(1.0),
                    ));
                }

                for (sub_name, basis) in [
                    ("d", &resolved.d_ambient),
                    ("dtheta", &resolved.dtheta_ambient),
                ] {
                    if basis.is_empty() {
                        continue;
                    }
                    let rep = tangency::slant_function(
                        fp,
                        &res.ambient,
                        basis,
                        point_seed(res.seed, idx, 3),
                    )?;
                    residuals.push((
                        format!("{sub_name}_deviation"),
                        Checked::residual(rep.max_deviation),
                    ));
                    residuals.push((
                        format!("{sub_name}_certificate"),
                        Checked::residual(rep.certificate_residual),
                    ));
                    // Identity suite on 10 picks inside the subspace.
                    let theta = rep.theta;
                    let mut worst = 0.0f64;
                    for _ in 0..10 {
                        let x = random_combo_ambient(&mut rng, basis);
                        let y = random_combo_ambient(&mut rng, basis);
                        let ids =
                            tangency::identity_residuals(fp, &res.ambient, &x, &y, Some(theta))?;
                        worst = worst.max(ids.max_residual());
                    }
                    residuals.push((
                        format!("{sub_name}_identities"),
                        Checked::residual(worst),
                    ));
                }
            }

            Ok(PointRecord {
                point: fp.param.as_slice().to_vec(),
                residuals,
            })
        })
        .collect::<Result<_, _>>()
        .map_err(internal)?;

    let mut thresholds = BTreeMap::new();
    thresholds.insert("d_deviation".into(), ws.tol("angle"));
    thresholds.insert("dtheta_deviation".into(), ws.tol("angle"));
    let aggregates = aggregate(&records, &thresholds, ws.tol("tangency"), &[]);
    let pass = aggregates.iter().all(|a| a.pass);
    let notes = if split.is_none() {
        vec!["no split declared: slant lines skipped".into()]
    } else {
        vec![]
    };
    Ok(SuiteReport {
        suite: "tangency".into(),
        pass,
        aggregates,
        points: records,
        notes,
    })
}

fn semislant_suite(ws: &Workspace<'_>) -> Result<(SuiteReport, Option<Label>), RunError> {
    let res = ws.res;
    let spec = res.split.as_ref().expect("validated");
    let sf_all = ws.second_forms.as_ref().expect("prepared");

    struct PointOut {
        record: PointRecord,
        theta: Option<f64>,
    }

    let outs: Vec<PointOut> = ws
        .frames
        .par_iter()
        .enumerate()
        .map(|(idx, fp)| -> Result<PointOut, GeomError> {
            let mut rng = ChaCha8Rng::seed_from_u64(point_seed(res.seed, idx, 4));
            let resolved = semislant::resolve_split(spec, &res.immersion.variables, fp)?;
            let ver = semislant::verify_split(
                fp,
                &res.ambient,
                &resolved,
                point_seed(res.seed, idx, 5),
            )?;
            let mut residuals: Vec<(String, Checked)> = vec![
                ("orthogonality".into(), Checked::residual(ver.orthogonality)),
                ("completeness".into(), Checked::residual(ver.completeness)),
                ("d_invariance".into(), Checked::residual(ver.d_invariance)),
                ("xi_alignment".into(), Checked::residual(ver.xi_alignment)),
            ];
            let theta = ver.slant.as_ref().map(|s| s.theta);
            if let Some(slant) = &ver.slant {
                residuals.push((
                    "slant_deviation".into(),
                    Checked::residual(slant.max_deviation),
                ));
                residuals.push((
                    "slant_certificate".into(),
                    Checked::residual(slant.certificate_residual),
                ));
            }

            let ns = semislant::normal_split(fp, &res.ambient, &resolved, theta)?;
            residuals.push((
                "nu_invariance".into(),
                Checked::residual(ns.nu_invariance),
            ));

            // The induced-connection identities need a Sasakian ambient.
            if res.ambient.sasakian && resolved.m2() > 0 {
                let theta = theta.expect("slant present when m2 > 0");
                let sf = &sf_all[idx];
                let mut base_fields = resolved.d.clone();
                base_fields.push(resolved.xi.clone());
                let mut worst = 0.0f64;
                let mut evaluated = true;
                'outer: for x in &base_fields {
                    for y in &base_fields {
                        for z in &resolved.dtheta {
                            for w in &resolved.dtheta {
                                match semislant::lemma1_residuals(
                                    fp,
                                    &res.ambient,
                                    sf,
                                    theta,
                                    x,
                                    y,
                                    z,
                                    w,
                                    ws.tol("structure").max(1e-8),
                                ) {
                                    Ok((r1, r2)) => worst = worst.max(r1).max(r2),
                                    Err(GeomError::NotSasakian { .. }) => {
                                        evaluated = false;
                                        break 'outer;
                                    }
                                    Err(e) => return Err(e),
                                }
                            }
                        }
                    }
                }
                // A couple of random combinations exercise bilinearity.
                if evaluated && !resolved.dtheta.is_empty() {
                    let coeffs: Vec<f64> =
                        (0..base_fields.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                    let x = semislant::FieldVector::combine(&base_fields, &coeffs);
                    let (r1, r2) = semislant::lemma1_residuals(
                        fp,
                        &res.ambient,
                        sf,
                        theta,
                        &x,
                        &base_fields[0],
                        &resolved.dtheta[0],
                        &resolved.dtheta[resolved.dtheta.len() - 1],
                        ws.tol("structure").max(1e-8),
                    )?;
                    worst = worst.max(r1).max(r2);
                }
                residuals.push((
                    "split_identities".into(),
                    if evaluated {
                        Checked::residual(worst)
                    } else {
                        Checked::refused("ambient not Sasakian at point")
                    },
                ));
            } else if resolved.m2() > 0 {
                residuals.push((
                    "split_identities".into(),
                    Checked::refused("ambient not Sasakian"),
                ));
            }

            Ok(PointOut {
                record: PointRecord {
                    point: fp.param.as_slice().to_vec(),
                    residuals,
                },
                theta,
            })
        })
        .collect::<Result<_, _>>()
        .map_err(internal)?;

    let m1 = spec.m1();
    let m2 = spec.m2();
    let slant_data: Vec<PointSlantData> = outs
        .iter()
        .map(|o| PointSlantData {
            m1,
            m2,
            theta: o.theta,
        })
        .collect();
    let label = semislant::classify(&slant_data, ws.tol("theta_constancy")).map_err(internal)?;

    let records: Vec<PointRecord> = outs.into_iter().map(|o| o.record).collect();
    let mut thresholds = BTreeMap::new();
    thresholds.insert("slant_deviation".into(), ws.tol("angle"));
    thresholds.insert("split_identities".into(), ws.tol("lemmas"));
    let aggregates = aggregate(&records, &thresholds, ws.tol("semislant"), &[]);
    let pass = aggregates.iter().all(|a| a.pass);
    Ok((
        SuiteReport {
            suite: "semislant".into(),
            pass,
            aggregates,
            points: records,
            notes: vec![format!("classification: {label}")],
        },
        Some(label),
    ))
}

fn warped_suite(ws: &Workspace<'_>) -> Result<SuiteReport, RunError> {
    let res = ws.res;
    let spec = res.warp.as_ref().expect("validated");
    let warp = ws.warp_report.as_ref().expect("prepared");
    let sf_all = ws.second_forms.as_ref().expect("prepared");

    let records: Vec<PointRecord> = ws
        .frames
        .par_iter()
        .enumerate()
        .map(|(idx, fp)| -> Result<PointRecord, GeomError> {
            let lnf = warp.lnf_grad_at(idx);
            let conn = warped::bishop_oneill_check(fp, &sf_all[idx], spec, &lnf)?;
            let pd = &warp.per_point[idx];
            Ok(PointRecord {
                point: fp.param.as_slice().to_vec(),
                residuals: vec![
                    ("mixing".into(), Checked::residual(conn.mixing)),
                    ("base_geodesic".into(), Checked::residual(conn.base_geodesic)),
                    (
                        "fiber_umbilicity".into(),
                        Checked::residual(conn.fiber_umbilicity),
                    ),
                    (
                        "fiber_lnf_dependence".into(),
                        Checked::residual(pd.fiber_dependence),
                    ),
                ],
            })
        })
        .collect::<Result<_, _>>()
        .map_err(internal)?;

    let tol = ws.tol("warp");
    let mut aggregates = aggregate(&records, &BTreeMap::new(), tol, &[]);
    for (name, value) in [
        ("off_block", warp.off_block_max),
        ("base_independence", warp.base_independence),
        ("factorization", warp.factorization_spread),
        ("lnf_entry_spread", warp.lnf_entry_spread),
    ] {
        aggregates.push(AggregateLine {
            name: name.into(),
            max: Some(value),
            mean: Some(value),
            threshold: tol,
            mode: "below".into(),
            refused: 0,
            pass: value < tol,
        });
    }
    let pass = aggregates.iter().all(|a| a.pass);
    let notes = vec![if warp.trivial {
        format!("warping trivial (max |grad ln f| = {:.3e})", warp.max_lnf_grad)
    } else {
        format!("warping nontrivial (max |grad ln f| = {:.3e})", warp.max_lnf_grad)
    }];
    Ok(SuiteReport {
        suite: "warped".into(),
        pass,
        aggregates,
        points: records,
        notes,
    })
}

fn lemmas_suite(ws: &Workspace<'_>) -> Result<SuiteReport, RunError> {
    let res = ws.res;
    let spec = res.split.as_ref().expect("validated");
    let warp = ws.warp_report.as_ref().expect("prepared");
    let sf_all = ws.second_forms.as_ref().expect("prepared");

    let records: Vec<PointRecord> = ws
        .frames
        .par_iter()
        .enumerate()
        .map(|(idx, fp)| -> Result<PointRecord, GeomError> {
            let mut rng = ChaCha8Rng::seed_from_u64(point_seed(res.seed, idx, 6));
            let resolved = semislant::resolve_split(spec, &res.immersion.variables, fp)?;
            let sf = &sf_all[idx];
            let slant = tangency::slant_function(
                fp,
                &res.ambient,
                &resolved.dtheta_ambient,
                point_seed(res.seed, idx, 7),
            )?;
            let theta = slant.theta;
            let lnf = warp.lnf_grad_at(idx);

            // θ gradient only where the angle is differentiable; the
            // identities that need it are refused otherwise.
            let proper = theta.sin() > warped::THETA_DEGENERATE_TOL
                && theta.cos() > warped::THETA_DEGENERATE_TOL;
            let mut theta_fd_check: Option<f64> = None;
            let theta_grad = if proper {
                let section = &spec.dtheta[0];
                match warped::slant_jet(&res.immersion, &res.ambient, section, &fp.param) {
                    Ok(jet) => {
                        // Cross-check the jet derivative by central
                        // differences of the same angle function.
                        let mut worst = 0.0f64;
                        let h = 1e-5;
                        for m in 0..fp.domain_dim() {
                            let mut pp = fp.param.clone();
                            let mut pm = fp.param.clone();
                            pp[m] += h;
                            pm[m] -= h;
                            if !res.immersion.contains(&pp) || !res.immersion.contains(&pm) {
                                continue;
                            }
                            let vp = warped::slant_value(&res.immersion, &res.ambient, section, &pp);
                            let vm = warped::slant_value(&res.immersion, &res.ambient, section, &pm);
                            if let (Ok(vp), Ok(vm)) = (vp, vm) {
                                worst = worst.max((jet.grad[m] - (vp - vm) / (2.0 * h)).abs());
                            }
                        }
                        theta_fd_check = Some(worst);
                        Some(jet.grad)
                    }
                    Err(_) => None,
                }
            } else {
                None
            };

            let ctx = LemmaContext {
                fp,
                amb: &res.ambient,
                sf,
                split: &resolved,
                theta,
                lnf_grad: lnf,
                theta_grad,
            };

            // Vector picks: base basis plus ξ plus one random combination;
            // fiber basis plus one random combination.
            let mut base: Vec<DVector<f64>> = resolved.d.iter().map(|f| f.coords.clone()).collect();
            base.push(resolved.xi.coords.clone());
            base.push(random_unit_combo(&mut rng, &base, fp));
            let mut fiber: Vec<DVector<f64>> = resolved
                .dtheta
                .iter()
                .map(|f| f.coords.clone())
                .collect();
            fiber.push(random_unit_combo(&mut rng, &fiber, fp));

            // Aggregate per key over all picks at this point.
            let mut worst: BTreeMap<&'static str, Checked> = BTreeMap::new();
            let mut chain7 = 0.0f64;
            let mut chain8 = 0.0f64;
            for x in &base {
                for y in &base {
                    for z in &fiber {
                        for w in &fiber {
                            let picks = LemmaPicks {
                                x: x.clone(),
                                y: y.clone(),
                                z: z.clone(),
                                w: w.clone(),
                            };
                            for key in LemmaKey::ALL {
                                let entry = warped::evaluate_identity(key, &ctx, &picks)?;
                                let checked = entry.to_checked();
                                let slot = worst.entry(key.name()).or_insert_with(|| {
                                    Checked::refused("not evaluated")
                                });
                                *slot = merge_checked(slot, &checked);
                            }
                            // Arithmetic chains: L7 = L4 − L6 and
                            // L8 = (L6 with Z and W swapped) − L5, on the
                            // signed sides, independent of geometry.
                            let l4 = warped::evaluate_identity(LemmaKey::L4, &ctx, &picks)?;
                            let l6 = warped::evaluate_identity(LemmaKey::L6, &ctx, &picks)?;
                            let l5 = warped::evaluate_identity(LemmaKey::L5, &ctx, &picks)?;
                            let l7 = warped::evaluate_identity(LemmaKey::L7, &ctx, &picks)?;
                            let l8 = warped::evaluate_identity(LemmaKey::L8, &ctx, &picks)?;
                            let swapped = LemmaPicks {
                                x: x.clone(),
                                y: y.clone(),
                                z: w.clone(),
                                w: z.clone(),
                            };
                            let l6s = warped::evaluate_identity(LemmaKey::L6, &ctx, &swapped)?;
                            if let (Some(l4), Some(l6), Some(l7)) =
                                (l4.eval(), l6.eval(), l7.eval())
                            {
                                chain7 = chain7
                                    .max((l7.lhs - (l4.lhs - l6.lhs)).abs())
                                    .max((l7.rhs - (l4.rhs - l6.rhs)).abs());
                            }
                            if let (Some(l6s), Some(l5), Some(l8)) =
                                (l6s.eval(), l5.eval(), l8.eval())
                            {
                                chain8 = chain8
                                    .max((l8.lhs - (l6s.lhs - l5.lhs)).abs())
                                    .max((l8.rhs - (l6s.rhs - l5.rhs)).abs());
                            }
                        }
                    }
                }
            }

            let mut residuals: Vec<(String, Checked)> = LemmaKey::ALL
                .iter()
                .map(|k| (k.name().to_string(), worst.remove(k.name()).unwrap()))
                .collect();
            residuals.push(("chain_l7".into(), Checked::residual(chain7)));
            residuals.push(("chain_l8".into(), Checked::residual(chain8)));
            if let Some(fd) = theta_fd_check {
                residuals.push(("theta_grad_fd".into(), Checked::residual(fd)));
            }

            // ξ(ln f) and the fiber derivative of ln f must vanish.
            let xi_lnf = ctx.lnf_grad.dot(&resolved.xi.coords).abs();
            residuals.push(("xi_lnf".into(), Checked::residual(xi_lnf)));
            let fiber_lnf = resolved
                .dtheta
                .iter()
                .map(|f| ctx.lnf_grad.dot(&f.coords).abs())
                .fold(0.0f64, f64::max);
            residuals.push(("fiber_lnf".into(), Checked::residual(fiber_lnf)));

            // Mixed totally-geodesic value with its contrapositive gate:
            // a nontrivially warped candidate with a non-invariant fiber
            // must show mixed h, a trivial one must not.
            let d_coords: Vec<DVector<f64>> =
                resolved.d.iter().map(|f| f.coords.clone()).collect();
            let dtheta_coords: Vec<DVector<f64>> =
                resolved.dtheta.iter().map(|f| f.coords.clone()).collect();
            let mtg = secondform::mixed_tg_test(sf, fp, &d_coords, &dtheta_coords)?;
            let trivial = warp.trivial;
            if trivial {
                residuals.push(("mixed_tg_trivial".into(), Checked::residual(mtg)));
            } else if theta.sin() > warped::THETA_DEGENERATE_TOL {
                residuals.push(("mixed_tg_nontrivial".into(), Checked::residual(mtg)));
            }
            // Instance form of the mixed-tg dichotomy: when h(X, Z) = 0
            // across the split, the warping must be trivial or the fiber
            // angle degenerate.
            let dichotomy_ok = mtg >= ws.tol("lemmas")
                || trivial
                || theta.sin() < warped::THETA_DEGENERATE_TOL;
            residuals.push((
                "mixed_tg_dichotomy".into(),
                Checked::residual(if dichotomy_ok { 0.0 } else { 1.0 }),
            ));

            Ok(PointRecord {
                point: fp.param.as_slice().to_vec(),
                residuals,
            })
        })
        .collect::<Result<_, _>>()
        .map_err(internal)?;

    let mut thresholds = BTreeMap::new();
    thresholds.insert("chain_l7".into(), ws.tol("chain"));
    thresholds.insert("chain_l8".into(), ws.tol("chain"));
    thresholds.insert("theta_grad_fd".into(), 1e-4);
    thresholds.insert("xi_lnf".into(), ws.tol("xi_lnf"));
    thresholds.insert("fiber_lnf".into(), ws.tol("xi_lnf"));
    thresholds.insert("mixed_tg_nontrivial".into(), ws.tol("mixed_tg_min"));
    thresholds.insert("mixed_tg_trivial".into(), ws.tol("lemmas"));
    thresholds.insert("mixed_tg_dichotomy".into(), 0.5);
    let aggregates = aggregate(
        &records,
        &thresholds,
        ws.tol("lemmas"),
        &["mixed_tg_nontrivial"],
    );
    let pass = aggregates.iter().all(|a| a.pass);
    Ok(SuiteReport {
        suite: "lemmas".into(),
        pass,
        aggregates,
        points: records,
        notes: vec![],
    })
}

/// Worst-of merge across picks; an evaluated residual wins over a refusal
/// and a later refusal reason replaces the initial placeholder.
fn merge_checked(a: &Checked, b: &Checked) -> Checked {
    match (a, b) {
        (Checked::Residual(x), Checked::Residual(y)) => Checked::Residual(x.max(*y)),
        (Checked::Residual(x), Checked::Refused(_)) => Checked::Residual(*x),
        (Checked::Refused(_), Checked::Refused(r)) => Checked::Refused(r.clone()),
        (Checked::Refused(_), Checked::Residual(y)) => Checked::Residual(*y),
    }
}

// ---------------------------------------------------------------------------
// The run entry point
// ---------------------------------------------------------------------------

pub fn run(config: &RunConfig) -> Result<Report, RunError> {
    let res = resolve(config)?;

    let points = res
        .immersion
        .sample_points(res.samples, res.seed)
        .map_err(|e| one_issue("/samples", e.to_string()))?;

    // Frame every sampled point up front; a frame failure on a sampled
    // point means the domain needs an exclusion predicate.
    let frames: Vec<FramedPoint> = {
        let framed: Result<Vec<_>, _> = points
            .par_iter()
            .map(|p| frame_at(&res.immersion, &res.ambient, p))
            .collect();
        match framed {
            Ok(f) => f,
            Err(e) => {
                return Err(one_issue(
                    "/immersion/exclusions",
                    format!("excluded-point predicate required: {e}"),
                ))
            }
        }
    };

    // Pre-flight degeneracy scan: a slant distribution whose angle
    // crosses between proper and degenerate over the sample needs the
    // degenerate locus excluded.
    if let Some(spec) = &res.split {
        if spec.m2() > 0
            && res
                .suites
                .iter()
                .any(|s| matches!(s, Suite::Semislant | Suite::Lemmas | Suite::Tangency))
        {
            let mut degenerate = 0usize;
            let mut proper = 0usize;
            for (idx, fp) in frames.iter().enumerate() {
                let resolved = semislant::resolve_split(spec, &res.immersion.variables, fp)
                    .map_err(internal)?;
                let rep = tangency::slant_function(
                    fp,
                    &res.ambient,
                    &resolved.dtheta_ambient,
                    point_seed(res.seed, idx, 8),
                )
                .map_err(internal)?;
                let near_zero = rep.theta < DEGENERACY_SCAN_TOL;
                let near_right =
                    rep.theta > std::f64::consts::FRAC_PI_2 - DEGENERACY_SCAN_TOL;
                if near_zero || near_right {
                    degenerate += 1;
                } else {
                    proper += 1;
                }
            }
            if degenerate > 0 && proper > 0 && res.immersion.exclusions.is_empty() {
                return Err(one_issue(
                    "/immersion/exclusions",
                    format!(
                        "excluded-point predicate required: slant angle degenerates at \
                         {degenerate} of {} sampled points",
                        frames.len()
                    ),
                ));
            }
        }
    }

    let needs_sf = res
        .suites
        .iter()
        .any(|s| matches!(s, Suite::Semislant | Suite::Warped | Suite::Lemmas));
    let second_forms = if needs_sf {
        let sfs: Result<Vec<_>, _> = frames
            .par_iter()
            .map(|fp| secondform::second_form(fp, &res.ambient))
            .collect();
        Some(sfs.map_err(internal)?)
    } else {
        None
    };

    let needs_warp = res
        .suites
        .iter()
        .any(|s| matches!(s, Suite::Warped | Suite::Lemmas));
    let warp_report = if needs_warp {
        let spec = res.warp.as_ref().expect("validated");
        Some(
            warped::detect_warp(&res.immersion, &res.ambient, spec, &points)
                .map_err(|e| one_issue("/warp", e.to_string()))?,
        )
    } else {
        None
    };

    let ws = Workspace {
        res: &res,
        frames,
        second_forms,
        warp_report,
    };

    let mut suites = Vec::new();
    let mut classification = None;
    for suite in &res.suites {
        let rep = match suite {
            Suite::Structure => structure_suite(&ws)?,
            Suite::Tangency => tangency_suite(&ws)?,
            Suite::Semislant => {
                let (rep, label) = semislant_suite(&ws)?;
                classification = label;
                rep
            }
            Suite::Warped => warped_suite(&ws)?,
            Suite::Lemmas => lemmas_suite(&ws)?,
        };
        suites.push(rep);
    }

    let overall_pass = suites.iter().all(|s| s.pass);
    Ok(Report {
        engine_version: env!("CARGO_PKG_VERSION").to_string(),
        timestamp_unix: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: res.echo.clone(),
        classification,
        suites,
        overall_pass,
    })
}

/// Catalog names and descriptions in stable order, optionally filtered by
/// a case-insensitive substring.
pub fn catalog_list(filter: Option<&str>) -> Vec<(&'static str, &'static str)> {
    let all = catalog::descriptions();
    match filter {
        None | Some("") => all,
        Some(f) => {
            let f = f.to_lowercase();
            all.into_iter()
                .filter(|(name, desc)| {
                    name.to_lowercase().contains(&f) || desc.to_lowercase().contains(&f)
                })
                .collect()
        }
    }
}
