//! Distribution splits TM = D ⊕ D^θ ⊕ ⟨ξ⟩: verification, classification,
//! the normal-bundle split T⊥M = FD^θ ⊕ ν, and the induced-connection
//! identities that tie ∇, h and the slant data together on a conforming
//! split.
//!
//! Splits are always user-declared (config or catalog) and verified, never
//! auto-discovered: invariant-subspace discovery is ill-conditioned near
//! θ → 0.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientStructure;
use crate::error::{GeomError, Result};
use crate::immersion::FramedPoint;
use crate::numjet::{self, eval_jet2, ExprNode};
use crate::secondform::SecondFormData;
use crate::tangency::{slant_function, SlantReport};

/// Threshold below which sin θ counts as degenerate (F not injective on
/// the slant distribution).
pub const SIN_DEGENERATE_TOL: f64 = 1e-6;

/// One split-basis coefficient: a plain number or an expression in the
/// domain variables. Point-dependent coefficients are what make
/// non-integrable distributions expressible on a coordinate basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coef {
    Num(f64),
    Expr(String),
}

impl Coef {
    fn parse(&self, variables: &[String]) -> Result<ExprNode> {
        match self {
            Coef::Num(v) => Ok(ExprNode::constant(*v)),
            Coef::Expr(src) => Ok(crate::numjet::parse_expr(src, variables)?),
        }
    }
}

/// Declared split: basis vectors in domain coordinates with possibly
/// point-dependent coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    #[serde(rename = "D")]
    pub d: Vec<Vec<Coef>>,
    #[serde(rename = "Dtheta")]
    pub dtheta: Vec<Vec<Coef>>,
    pub xi: Vec<Coef>,
}

impl SplitSpec {
    pub fn from_strs(d: &[&[&str]], dtheta: &[&[&str]], xi: &[&str]) -> SplitSpec {
        let conv = |rows: &[&[&str]]| -> Vec<Vec<Coef>> {
            rows.iter()
                .map(|row| {
                    row.iter()
                        .map(|s| match s.parse::<f64>() {
                            Ok(v) => Coef::Num(v),
                            Err(_) => Coef::Expr(s.to_string()),
                        })
                        .collect()
                })
                .collect()
        };
        SplitSpec {
            d: conv(d),
            dtheta: conv(dtheta),
            xi: conv(&[xi])[0].clone(),
        }
    }

    pub fn m1(&self) -> usize {
        self.d.len()
    }

    pub fn m2(&self) -> usize {
        self.dtheta.len()
    }
}

/// A basis vector field in domain coordinates, evaluated at a point:
/// coefficient values and their domain-coordinate partials.
#[derive(Debug, Clone)]
pub struct FieldVector {
    pub coords: DVector<f64>,
    /// grad[(m, i)] = ∂ᵢ of coefficient m
    pub grad: DMatrix<f64>,
}

impl FieldVector {
    /// Constant-coefficient combination Σ aᵢ · fields[i]; stays inside the
    /// distribution the fields span.
    pub fn combine(fields: &[FieldVector], a: &[f64]) -> FieldVector {
        let k = fields[0].coords.len();
        let mut coords = DVector::zeros(k);
        let mut grad = DMatrix::zeros(k, k);
        for (f, &c) in fields.iter().zip(a) {
            coords += &f.coords * c;
            grad += &f.grad * c;
        }
        FieldVector { coords, grad }
    }
}

/// The split resolved at one framed point.
pub struct ResolvedSplit {
    pub d: Vec<FieldVector>,
    pub dtheta: Vec<FieldVector>,
    pub xi: FieldVector,
    pub d_ambient: Vec<DVector<f64>>,
    pub dtheta_ambient: Vec<DVector<f64>>,
    pub xi_ambient: DVector<f64>,
}

impl ResolvedSplit {
    pub fn m1(&self) -> usize {
        self.d.len()
    }

    pub fn m2(&self) -> usize {
        self.dtheta.len()
    }
}

fn resolve_vector(
    coefs: &[Coef],
    variables: &[String],
    fp: &FramedPoint,
) -> Result<FieldVector> {
    let k = fp.domain_dim();
    if coefs.len() != k {
        return Err(GeomError::DimensionMismatch {
            context: format!("split vector has {} entries for {} variables", coefs.len(), k),
        });
    }
    let mut coords = DVector::zeros(k);
    let mut grad = DMatrix::zeros(k, k);
    for (m, coef) in coefs.iter().enumerate() {
        let expr = coef.parse(variables)?;
        let jet = eval_jet2(&expr, fp.param.as_slice())?;
        coords[m] = jet.value;
        for i in 0..k {
            grad[(m, i)] = jet.grad[i];
        }
    }
    Ok(FieldVector { coords, grad })
}

/// Evaluate the declared split at a framed point.
pub fn resolve_split(
    spec: &SplitSpec,
    variables: &[String],
    fp: &FramedPoint,
) -> Result<ResolvedSplit> {
    let d: Vec<FieldVector> = spec
        .d
        .iter()
        .map(|v| resolve_vector(v, variables, fp))
        .collect::<Result<_>>()?;
    let dtheta: Vec<FieldVector> = spec
        .dtheta
        .iter()
        .map(|v| resolve_vector(v, variables, fp))
        .collect::<Result<_>>()?;
    let xi = resolve_vector(&spec.xi, variables, fp)?;
    if d.len() + dtheta.len() + 1 != fp.domain_dim() {
        return Err(GeomError::DimensionMismatch {
            context: format!(
                "split dims {} + {} + 1 do not cover domain dimension {}",
                d.len(),
                dtheta.len(),
                fp.domain_dim()
            ),
        });
    }
    let d_ambient = d.iter().map(|f| fp.domain_to_ambient(&f.coords)).collect();
    let dtheta_ambient = dtheta
        .iter()
        .map(|f| fp.domain_to_ambient(&f.coords))
        .collect();
    let xi_ambient = fp.domain_to_ambient(&xi.coords);
    Ok(ResolvedSplit {
        d,
        dtheta,
        xi,
        d_ambient,
        dtheta_ambient,
        xi_ambient,
    })
}

/// Residuals of the split axioms at one point.
#[derive(Debug, Clone, Serialize)]
pub struct SplitResiduals {
    /// max g-inner product between unit vectors of different factors
    pub orthogonality: f64,
    /// reconstruction of the tangent frame from the declared union
    pub completeness: f64,
    /// ‖F restricted to D‖ on unit vectors
    pub d_invariance: f64,
    /// slant data of D^θ; absent when m₂ = 0
    pub slant: Option<SlantReport>,
    /// distance between the normalized declared ξ direction and ξ
    pub xi_alignment: f64,
}

impl SplitResiduals {
    pub fn max_structural(&self) -> f64 {
        let slant_dev = self
            .slant
            .as_ref()
            .map(|s| s.max_deviation.max(s.certificate_residual))
            .unwrap_or(0.0);
        self.orthogonality
            .max(self.completeness)
            .max(self.d_invariance)
            .max(self.xi_alignment)
            .max(slant_dev)
    }
}

pub fn verify_split(
    fp: &FramedPoint,
    amb: &AmbientStructure,
    split: &ResolvedSplit,
    seed: u64,
) -> Result<SplitResiduals> {
    let unit = |v: &DVector<f64>| -> DVector<f64> { v / fp.g_norm(v) };

    let mut groups: Vec<Vec<DVector<f64>>> = vec![
        split.d_ambient.iter().map(&unit).collect(),
        split.dtheta_ambient.iter().map(&unit).collect(),
        vec![unit(&split.xi_ambient)],
    ];
    let mut orthogonality = 0.0f64;
    for gi in 0..groups.len() {
        for gj in (gi + 1)..groups.len() {
            for a in &groups[gi] {
                for b in &groups[gj] {
                    orthogonality = orthogonality.max(fp.g_dot(a, b).abs());
                }
            }
        }
    }

    // Completeness: the declared union must span TM.
    let union: Vec<DVector<f64>> = groups.drain(..).flatten().collect();
    let (basis, rank) = numjet::orthonormalize(&union, &fp.metric)?;
    let mut completeness: f64 = if rank < fp.domain_dim() { 1.0 } else { 0.0 };
    for t in &fp.tan_frame {
        let (_, residual) = numjet::metric_project(t, &basis, &fp.metric)?;
        completeness = completeness.max(fp.g_norm(&residual));
    }

    // φ-invariance of D: normal part of φX for unit X in D.
    let phi = amb.phi_at(&fp.pos)?;
    let mut d_invariance = 0.0f64;
    for x in &split.d_ambient {
        let x = unit(x);
        d_invariance = d_invariance.max(fp.g_norm(&fp.normal(&(&phi * &x))));
    }

    let slant = if split.m2() > 0 {
        Some(slant_function(fp, amb, &split.dtheta_ambient, seed)?)
    } else {
        None
    };

    let xi = amb.xi_at(&fp.pos)?;
    let xi_hat = &xi / fp.g_norm(&xi);
    let mut declared = unit(&split.xi_ambient);
    if fp.g_dot(&declared, &xi_hat) < 0.0 {
        declared = -declared;
    }
    let xi_alignment = fp.g_norm(&(declared - xi_hat));

    Ok(SplitResiduals {
        orthogonality,
        completeness,
        d_invariance,
        slant,
        xi_alignment,
    })
}

/// Classification labels following the case split on (m₁, m₂, θ).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Label {
    PointwiseSlant,
    Invariant,
    AntiInvariant,
    ContactCr,
    SemiSlant,
    ProperPointwiseSemiSlant,
}

impl std::fmt::Display for Label {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Label::PointwiseSlant => "pointwise-slant",
            Label::Invariant => "invariant",
            Label::AntiInvariant => "anti-invariant",
            Label::ContactCr => "contact-CR",
            Label::SemiSlant => "semi-slant",
            Label::ProperPointwiseSemiSlant => "proper-pointwise-semi-slant",
        };
        f.write_str(s)
    }
}

/// Per-point data feeding the classification.
#[derive(Debug, Clone)]
pub struct PointSlantData {
    pub m1: usize,
    pub m2: usize,
    /// slant angle of D^θ at the point; None when m₂ = 0
    pub theta: Option<f64>,
}

/// Classify from the per-point slant data; θ-constancy is judged across
/// the whole sample (stddev below `constancy_tol`).
pub fn classify(points: &[PointSlantData], constancy_tol: f64) -> Result<Label> {
    if points.is_empty() {
        return Err(GeomError::EmptySubspace);
    }
    let m1 = points[0].m1;
    let m2 = points[0].m2;
    if m2 == 0 {
        return Ok(Label::Invariant);
    }
    let thetas: Vec<f64> = points.iter().filter_map(|p| p.theta).collect();
    if thetas.len() != points.len() {
        return Err(GeomError::DimensionMismatch {
            context: "missing slant angles in classification input".into(),
        });
    }
    let right_angle = std::f64::consts::FRAC_PI_2;
    let all_right = thetas.iter().all(|t| (t - right_angle).abs() < SIN_DEGENERATE_TOL);
    let mean = thetas.iter().sum::<f64>() / thetas.len() as f64;
    let var = thetas.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / thetas.len() as f64;
    let constant = var.sqrt() < constancy_tol;

    if m1 == 0 {
        if all_right {
            return Ok(Label::AntiInvariant);
        }
        return Ok(Label::PointwiseSlant);
    }
    if all_right {
        return Ok(Label::ContactCr);
    }
    if constant {
        return Ok(Label::SemiSlant);
    }
    Ok(Label::ProperPointwiseSemiSlant)
}

/// The normal-bundle split T⊥M = FD^θ ⊕ ν at one point.
pub struct NormalSplit {
    pub fd_theta: Vec<DVector<f64>>,
    pub nu: Vec<DVector<f64>>,
    /// residual of φν ⊆ ν on unit vectors of ν
    pub nu_invariance: f64,
}

pub fn normal_split(
    fp: &FramedPoint,
    amb: &AmbientStructure,
    split: &ResolvedSplit,
    theta: Option<f64>,
) -> Result<NormalSplit> {
    let phi = amb.phi_at(&fp.pos)?;
    let images: Vec<DVector<f64>> = split
        .dtheta_ambient
        .iter()
        .map(|z| fp.normal(&(&phi * z)))
        .collect();
    let (fd_theta, rank) = numjet::orthonormalize(&images, &fp.metric)?;
    if let Some(theta) = theta {
        if theta.sin() > SIN_DEGENERATE_TOL && rank != split.m2() {
            return Err(GeomError::DegenerateNormalImage {
                rank,
                expected: split.m2(),
            });
        }
    }
    // ν = orthocomplement of FD^θ inside the normal space.
    let mut candidates = fd_theta.clone();
    candidates.extend(fp.nor_frame.iter().cloned());
    let (full, _) = numjet::orthonormalize(&candidates, &fp.metric)?;
    let nu: Vec<DVector<f64>> = full[fd_theta.len()..].to_vec();

    let mut nu_invariance = 0.0f64;
    for n in &nu {
        let phi_n = &phi * n;
        // Component escaping ν: anything tangential or in FD^θ.
        let mut escape = fp.tangential(&phi_n);
        for b in &fd_theta {
            escape += b * fp.g_dot(&phi_n, b);
        }
        nu_invariance = nu_invariance.max(fp.g_norm(&escape));
    }

    Ok(NormalSplit {
        fd_theta,
        nu,
        nu_invariance,
    })
}

/// Residual pair of the induced-connection identities on a conforming
/// split of a Sasakian ambient:
///
/// ```text
/// (i)  sin²θ g(∇_X Y, Z) = g(h(X, φY), FZ) − g(h(X, Y), FPZ)
/// (ii) sin²θ g(∇_Z W, X) = g(h(X, Z), FPW) − g(h(φX, Z), FW)
/// ```
///
/// X, Y range over Γ(D ⊕ ⟨ξ⟩) and Z, W over Γ(D^θ), all given as
/// coefficient fields so ∇ sees their variation. Refuses on a
/// non-Sasakian ambient rather than reporting meaningless numbers.
#[allow(clippy::too_many_arguments)]
pub fn lemma1_residuals(
    fp: &FramedPoint,
    amb: &AmbientStructure,
    sf: &SecondFormData,
    theta: f64,
    x: &FieldVector,
    y: &FieldVector,
    z: &FieldVector,
    w: &FieldVector,
    sasakian_tol: f64,
) -> Result<(f64, f64)> {
    let xa = fp.domain_to_ambient(&x.coords);
    let ya = fp.domain_to_ambient(&y.coords);
    let sas = amb.check_sasakian(&fp.pos, &xa, &ya)?;
    if sas.max() > sasakian_tol {
        return Err(GeomError::NotSasakian {
            residual: sas.max(),
        });
    }

    let phi = amb.phi_at(&fp.pos)?;
    let sin2 = theta.sin().powi(2);

    let za = fp.domain_to_ambient(&z.coords);
    let wa = fp.domain_to_ambient(&w.coords);

    // (i)
    let nabla_xy = sf.induced_cov_deriv(&x.coords, &y.coords, &y.grad);
    let lhs_i = sin2 * fp.g_dot(&fp.domain_to_ambient(&nabla_xy), &za);
    let phi_y = fp.tangential(&(&phi * &ya));
    let fz = fp.nor_coords(&fp.normal(&(&phi * &za)));
    let pz = fp.tangential(&(&phi * &za));
    let fpz = fp.nor_coords(&fp.normal(&(&phi * &pz)));
    let h_x_phiy = sf.h_bilinear(&x.coords, &fp.ambient_to_domain(&phi_y));
    let h_x_y = sf.h_bilinear(&x.coords, &y.coords);
    let rhs_i = h_x_phiy.dot(&fz) - h_x_y.dot(&fpz);

    // (ii)
    let nabla_zw = sf.induced_cov_deriv(&z.coords, &w.coords, &w.grad);
    let lhs_ii = sin2 * fp.g_dot(&fp.domain_to_ambient(&nabla_zw), &xa);
    let pw = fp.tangential(&(&phi * &wa));
    let fpw = fp.nor_coords(&fp.normal(&(&phi * &pw)));
    let fw = fp.nor_coords(&fp.normal(&(&phi * &wa)));
    let phi_x = fp.tangential(&(&phi * &xa));
    let h_x_z = sf.h_bilinear(&x.coords, &z.coords);
    let h_phix_z = sf.h_bilinear(&fp.ambient_to_domain(&phi_x), &z.coords);
    let rhs_ii = h_x_z.dot(&fpw) - h_phix_z.dot(&fw);

    Ok(((lhs_i - rhs_i).abs(), (lhs_ii - rhs_ii).abs()))
}
