//! Warped-product detection and the warped identity suite.
//!
//! A candidate declares disjoint base/fiber coordinate sets. Detection
//! checks that the induced metric is block-diagonal, that the base block
//! does not see fiber coordinates, and that the fiber block factorizes as
//! f(base)²·G_F(fiber); the warping data ln f is recovered up to the
//! normalization f(reference) = 1, which every checked identity is
//! invariant under.
//!
//! The identity suite evaluates, per point and vector pick, the warped
//! mixing identities keyed L2–L8, T4, T5 and C2. Identities that
//! presuppose a proper slant angle are refused with an explicit
//! "degenerate theta" marker instead of reporting a vacuous zero.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ambient::AmbientStructure;
use crate::error::{GeomError, Result};
use crate::immersion::{induced_metric_jets, FramedPoint, Immersion};
use crate::numjet::{eval_jet2, eval_with, invert_jet_matrix, Jet2};
use crate::report::Checked;
use crate::secondform::SecondFormData;
use crate::semislant::ResolvedSplit;

/// sin θ or cos θ below this refuses the θ-sensitive identities.
pub const THETA_DEGENERATE_TOL: f64 = 1e-6;

/// Warping gradient below this classifies the candidate as a trivial
/// (Riemannian product) warped product.
pub const TRIVIAL_TOL: f64 = 1e-8;

/// Hard thresholds past which detection errors instead of reporting.
const BLOCK_ERROR_TOL: f64 = 1e-3;

/// Declared base/fiber coordinate split of an immersion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarpSpec {
    pub base_vars: Vec<usize>,
    pub fiber_vars: Vec<usize>,
    pub reference_point: Vec<f64>,
}

impl WarpSpec {
    /// Check the split covers all variables exactly once.
    pub fn validate(&self, domain_dim: usize) -> Result<()> {
        let mut seen = vec![false; domain_dim];
        for &i in self.base_vars.iter().chain(&self.fiber_vars) {
            if i >= domain_dim || seen[i] {
                return Err(GeomError::DimensionMismatch {
                    context: format!("base/fiber split misuses variable index {i}"),
                });
            }
            seen[i] = true;
        }
        if !seen.iter().all(|&s| s) {
            return Err(GeomError::DimensionMismatch {
                context: "base/fiber split does not cover all variables".into(),
            });
        }
        if self.reference_point.len() != domain_dim {
            return Err(GeomError::DimensionMismatch {
                context: "reference point length differs from domain dimension".into(),
            });
        }
        Ok(())
    }
}

/// Recovered warping data at one point.
#[derive(Debug, Clone, Serialize)]
pub struct WarpPointData {
    pub point: Vec<f64>,
    /// f² normalized to 1 at the reference base point
    pub f_squared: f64,
    /// domain-coordinate gradient of ln f; fiber entries are zero
    pub lnf_grad: Vec<f64>,
    /// residual fiber dependence of the recovered ln f (max over fiber
    /// directions and fiber metric entries)
    pub fiber_dependence: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct WarpReport {
    /// max |g_ab| across base×fiber entry pairs
    pub off_block_max: f64,
    /// max |∂_fiber g_base| over the sample
    pub base_independence: f64,
    /// spread of the fiber-block factorization ratios
    pub factorization_spread: f64,
    /// spread of the per-entry ln f derivative estimates
    pub lnf_entry_spread: f64,
    pub trivial: bool,
    pub max_lnf_grad: f64,
    pub per_point: Vec<WarpPointData>,
}

impl WarpReport {
    pub fn max_structural(&self) -> f64 {
        self.off_block_max
            .max(self.base_independence)
            .max(self.factorization_spread)
            .max(self.lnf_entry_spread)
    }

    /// Interpolated ln f gradient at a sampled point index.
    pub fn lnf_grad_at(&self, idx: usize) -> DVector<f64> {
        DVector::from_vec(self.per_point[idx].lnf_grad.clone())
    }
}

/// Detect warped-product structure of the induced metric over the sampled
/// points. Errors on gross block-structure or factorization violations;
/// finer residuals are reported for the caller's tolerance gates.
pub fn detect_warp(
    im: &Immersion,
    amb: &AmbientStructure,
    spec: &WarpSpec,
    points: &[DVector<f64>],
) -> Result<WarpReport> {
    let k = im.domain_dim();
    spec.validate(k)?;
    let reference = DVector::from_vec(spec.reference_point.clone());
    if !im.contains(&reference) {
        return Err(GeomError::OutsideDomain);
    }

    let mut off_block_max = 0.0f64;
    let mut base_independence = 0.0f64;
    let mut factorization_spread = 0.0f64;
    let mut lnf_entry_spread = 0.0f64;
    let mut max_lnf_grad = 0.0f64;
    let mut per_point = Vec::with_capacity(points.len());

    for q in points {
        let jets = induced_metric_jets(im, amb, q)?;
        // Mixed point: reference base coordinates, q's fiber coordinates.
        let mut mixed = reference.clone();
        for &m in &spec.fiber_vars {
            mixed[m] = q[m];
        }
        let mixed_jets = induced_metric_jets(im, amb, &mixed)?;

        for &a in &spec.base_vars {
            for &b in &spec.fiber_vars {
                off_block_max = off_block_max.max(jets.value[(a, b)].abs());
            }
        }
        if off_block_max > BLOCK_ERROR_TOL {
            return Err(GeomError::BlockStructure {
                value: off_block_max,
            });
        }
        for &m in &spec.fiber_vars {
            for &a in &spec.base_vars {
                for &b in &spec.base_vars {
                    base_independence = base_independence.max(jets.grad[m][(a, b)].abs());
                }
            }
        }

        // Fiber-block factorization against the reference base point.
        let mut ratios = Vec::new();
        let mut diag_ratios = Vec::new();
        for &a in &spec.fiber_vars {
            for &b in &spec.fiber_vars {
                let num = jets.value[(a, b)];
                let den = mixed_jets.value[(a, b)];
                if num.abs() < 1e-12 && den.abs() < 1e-12 {
                    continue;
                }
                if den.abs() < 1e-12 {
                    return Err(GeomError::NotFactorizable { value: num.abs() });
                }
                let r = num / den;
                ratios.push(r);
                if a == b {
                    diag_ratios.push(r);
                }
            }
        }
        if diag_ratios.is_empty() {
            return Err(GeomError::NotFactorizable { value: f64::NAN });
        }
        let f_squared = diag_ratios.iter().sum::<f64>() / diag_ratios.len() as f64;
        let scale = f_squared.abs().max(1.0);
        for r in &ratios {
            factorization_spread = factorization_spread.max((r - f_squared).abs() / scale);
        }
        if factorization_spread > BLOCK_ERROR_TOL {
            return Err(GeomError::NotFactorizable {
                value: factorization_spread,
            });
        }

        // ln f derivatives along base directions from the diagonal fiber
        // entries: ∂_m ln f = ½ ∂_m g_aa / g_aa.
        let mut lnf_grad = vec![0.0f64; k];
        for &m in &spec.base_vars {
            let mut estimates = Vec::new();
            for &a in &spec.fiber_vars {
                let gaa = jets.value[(a, a)];
                if gaa.abs() < 1e-12 {
                    continue;
                }
                estimates.push(0.5 * jets.grad[m][(a, a)] / gaa);
            }
            let mean = estimates.iter().sum::<f64>() / estimates.len() as f64;
            for e in &estimates {
                lnf_entry_spread = lnf_entry_spread.max((e - mean).abs());
            }
            lnf_grad[m] = mean;
        }

        // Residual fiber dependence of ln f: the fiber-direction log
        // derivative must agree between q and the mixed point.
        let mut fiber_dependence = 0.0f64;
        for &m in &spec.fiber_vars {
            for &a in &spec.fiber_vars {
                let gaa = jets.value[(a, a)];
                let haa = mixed_jets.value[(a, a)];
                if gaa.abs() < 1e-12 || haa.abs() < 1e-12 {
                    continue;
                }
                let d = 0.5 * (jets.grad[m][(a, a)] / gaa - mixed_jets.grad[m][(a, a)] / haa);
                fiber_dependence = fiber_dependence.max(d.abs());
            }
        }

        let grad_norm = lnf_grad.iter().map(|x| x * x).sum::<f64>().sqrt();
        max_lnf_grad = max_lnf_grad.max(grad_norm);
        per_point.push(WarpPointData {
            point: q.as_slice().to_vec(),
            f_squared,
            lnf_grad,
            fiber_dependence,
        });
    }

    Ok(WarpReport {
        off_block_max,
        base_independence,
        factorization_spread,
        lnf_entry_spread,
        trivial: max_lnf_grad < TRIVIAL_TOL,
        max_lnf_grad,
        per_point,
    })
}

/// Residuals of the warped connection structure at one point.
#[derive(Debug, Clone, Serialize)]
pub struct WarpConnectionResiduals {
    /// ∇_X Z − X(ln f) Z over base×fiber coordinate pairs
    pub mixing: f64,
    /// fiber component of ∇_X Y for base X, Y (base totally geodesic)
    pub base_geodesic: f64,
    /// h_fiber(Z, W) + g(Z, W) ∇ln f over fiber pairs (fiber umbilical)
    pub fiber_umbilicity: f64,
}

impl WarpConnectionResiduals {
    pub fn max(&self) -> f64 {
        self.mixing.max(self.base_geodesic).max(self.fiber_umbilicity)
    }
}

/// Check ∇_X Z = X(ln f) Z, base totally geodesic, and fiber umbilicity
/// from the induced connection coefficients.
pub fn bishop_oneill_check(
    fp: &FramedPoint,
    sf: &SecondFormData,
    spec: &WarpSpec,
    lnf_grad: &DVector<f64>,
) -> Result<WarpConnectionResiduals> {
    let k = fp.domain_dim();
    spec.validate(k)?;

    let ambient_norm_of_domain = |c: &DVector<f64>| fp.g_norm(&fp.domain_to_ambient(c));

    let mut mixing = 0.0f64;
    for &i in &spec.base_vars {
        for &j in &spec.fiber_vars {
            let mut expect = DVector::zeros(k);
            expect[j] = lnf_grad[i];
            let resid = &sf.induced_gamma[i][j] - expect;
            mixing = mixing.max(ambient_norm_of_domain(&resid));
        }
    }

    let mut base_geodesic = 0.0f64;
    for &i in &spec.base_vars {
        for &j in &spec.base_vars {
            let mut fiber_part = DVector::zeros(k);
            for &m in &spec.fiber_vars {
                fiber_part[m] = sf.induced_gamma[i][j][m];
            }
            base_geodesic = base_geodesic.max(ambient_norm_of_domain(&fiber_part));
        }
    }

    // Raise the base gradient of ln f with the base block of the induced
    // metric.
    let nb = spec.base_vars.len();
    let mut g_base = DMatrix::zeros(nb, nb);
    let mut dlnf = DVector::zeros(nb);
    for (r, &a) in spec.base_vars.iter().enumerate() {
        dlnf[r] = lnf_grad[a];
        for (c, &b) in spec.base_vars.iter().enumerate() {
            g_base[(r, c)] = fp.induced_metric[(a, b)];
        }
    }
    let grad_vec = g_base
        .clone()
        .try_inverse()
        .ok_or(GeomError::SingularMatrix)?
        * dlnf;

    let mut fiber_umbilicity = 0.0f64;
    for &i in &spec.fiber_vars {
        for &j in &spec.fiber_vars {
            let gij = fp.induced_metric[(i, j)];
            let mut resid = DVector::zeros(k);
            for (r, &a) in spec.base_vars.iter().enumerate() {
                resid[a] = sf.induced_gamma[i][j][a] + gij * grad_vec[r];
            }
            fiber_umbilicity = fiber_umbilicity.max(ambient_norm_of_domain(&resid));
        }
    }

    Ok(WarpConnectionResiduals {
        mixing,
        base_geodesic,
        fiber_umbilicity,
    })
}

// ---------------------------------------------------------------------------
// Slant angle as a jet of the domain point
// ---------------------------------------------------------------------------

fn jmat_mul(a: &[Vec<Jet2>], b: &[Vec<Jet2>]) -> Vec<Vec<Jet2>> {
    let n = a.len();
    let p = b[0].len();
    let m = b.len();
    let k = a[0][0].arity();
    let mut out = vec![vec![Jet2::constant(0.0, k); p]; n];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, cell) in row.iter_mut().enumerate() {
            let mut acc = Jet2::constant(0.0, k);
            for l in 0..m {
                acc = acc.add(&a[i][l].mul(&b[l][j]));
            }
            *cell = acc;
        }
    }
    out
}

fn jmat_vec(a: &[Vec<Jet2>], v: &[Jet2]) -> Vec<Jet2> {
    let k = v[0].arity();
    a.iter()
        .map(|row| {
            let mut acc = Jet2::constant(0.0, k);
            for (x, y) in row.iter().zip(v) {
                acc = acc.add(&x.mul(y));
            }
            acc
        })
        .collect()
}

fn jvec_quadratic(g: &[Vec<Jet2>], v: &[Jet2], w: &[Jet2]) -> Jet2 {
    let k = v[0].arity();
    let gw = jmat_vec(g, w);
    let mut acc = Jet2::constant(0.0, k);
    for (a, b) in v.iter().zip(&gw) {
        acc = acc.add(&a.mul(b));
    }
    acc
}

/// The slant angle of a distribution section as a jet of the domain
/// point:
///
/// ```text
/// cos²θ(q) = g(PZ, PZ) / g(φZ, φZ),   Z = Σ cₘ(q) ∂ₘχ(q).
/// ```
///
/// Only the value and gradient of the result are meaningful: the Jacobian
/// entries enter as first-order jets, so second-order terms are dropped.
/// Errors when θ is within [`THETA_DEGENERATE_TOL`] of 0 or π/2, where
/// the angle is not differentiable.
pub fn slant_jet(
    im: &Immersion,
    amb: &AmbientStructure,
    section: &[crate::semislant::Coef],
    p: &DVector<f64>,
) -> Result<Jet2> {
    let k = im.domain_dim();
    let dim = im.ambient_dim();

    // Coordinate jets of the immersion; these seed all compositions.
    let chi: Vec<Jet2> = im
        .components
        .iter()
        .map(|e| eval_jet2(e, p.as_slice()))
        .collect::<std::result::Result<_, _>>()?;

    // Jacobian entries as first-order jets (value = ∂ₘχ, grad = Hessian
    // row; the Hessian of these jets is not meaningful).
    let jac: Vec<Vec<Jet2>> = (0..dim)
        .map(|c| {
            (0..k)
                .map(|m| Jet2 {
                    value: chi[c].grad[m],
                    grad: chi[c].hess.row(m).transpose(),
                    hess: DMatrix::zeros(k, k),
                })
                .collect()
        })
        .collect();

    // Ambient tensors composed with the immersion.
    let eval_entry = |e: &crate::numjet::ExprNode| -> Result<Jet2> { Ok(eval_with(e, &chi)?) };
    let mut g = vec![vec![Jet2::constant(0.0, k); dim]; dim];
    let mut phi = vec![vec![Jet2::constant(0.0, k); dim]; dim];
    for i in 0..dim {
        for j in 0..dim {
            g[i][j] = eval_entry(&amb.metric[i][j])?;
            phi[i][j] = eval_entry(&amb.phi[i][j])?;
        }
    }

    // Section coefficients and the ambient vectors Z, φZ.
    let coefs: Vec<Jet2> = section
        .iter()
        .map(|c| {
            let expr = match c {
                crate::semislant::Coef::Num(v) => crate::numjet::ExprNode::constant(*v),
                crate::semislant::Coef::Expr(src) => {
                    crate::numjet::parse_expr(src, &im.variables)?
                }
            };
            Ok(eval_jet2(&expr, p.as_slice())?)
        })
        .collect::<Result<_>>()?;
    let z: Vec<Jet2> = (0..dim)
        .map(|c| {
            let mut acc = Jet2::constant(0.0, k);
            for m in 0..k {
                acc = acc.add(&jac[c][m].mul(&coefs[m]));
            }
            acc
        })
        .collect();
    let phi_z = jmat_vec(&phi, &z);

    // Tangential projection coordinates: γ = (JᵀgJ)⁻¹ Jᵀ g φZ.
    let jac_t: Vec<Vec<Jet2>> = (0..k)
        .map(|m| (0..dim).map(|c| jac[c][m].clone()).collect())
        .collect();
    let jt_g = jmat_mul(&jac_t, &g);
    let g_ind = jmat_mul(&jt_g, &{
        // J as column-major rows
        (0..dim)
            .map(|c| (0..k).map(|m| jac[c][m].clone()).collect::<Vec<_>>())
            .collect::<Vec<_>>()
    });
    let g_ind_inv = invert_jet_matrix(&g_ind).ok_or(GeomError::SingularMatrix)?;
    let rhs = jmat_vec(&jt_g, &phi_z);
    let gamma = jmat_vec(&g_ind_inv, &rhs);
    let pz: Vec<Jet2> = (0..dim)
        .map(|c| {
            let mut acc = Jet2::constant(0.0, k);
            for m in 0..k {
                acc = acc.add(&jac[c][m].mul(&gamma[m]));
            }
            acc
        })
        .collect();

    let num = jvec_quadratic(&g, &pz, &pz);
    let den = jvec_quadratic(&g, &phi_z, &phi_z);
    if den.value < 1e-14 {
        return Err(GeomError::PhiDegenerate);
    }
    let cos2 = num.div(&den).map_err(GeomError::Eval)?;
    let eps = THETA_DEGENERATE_TOL * THETA_DEGENERATE_TOL;
    if cos2.value < eps || cos2.value > 1.0 - eps {
        return Err(GeomError::DegenerateTheta {
            context: format!("cos^2 = {}", cos2.value),
        });
    }
    let cos = cos2.sqrt().map_err(GeomError::Eval)?;
    cos.acos().map_err(GeomError::Eval)
}

/// Value-only slant angle through the same formula, for the
/// finite-difference cross-check of [`slant_jet`].
pub fn slant_value(
    im: &Immersion,
    amb: &AmbientStructure,
    section: &[crate::semislant::Coef],
    p: &DVector<f64>,
) -> Result<f64> {
    Ok(slant_jet(im, amb, section, p)?.value)
}

// ---------------------------------------------------------------------------
// The warped identity suite
// ---------------------------------------------------------------------------

/// Identity keys of the warped suite, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Hash)]
#[allow(clippy::upper_case_acronyms)]
pub enum LemmaKey {
    L2,
    L3i,
    L3ii,
    L3iii,
    L4,
    L5,
    L6,
    L7,
    L8,
    T4,
    T5,
    C2,
}

impl LemmaKey {
    pub const ALL: [LemmaKey; 12] = [
        LemmaKey::L2,
        LemmaKey::L3i,
        LemmaKey::L3ii,
        LemmaKey::L3iii,
        LemmaKey::L4,
        LemmaKey::L5,
        LemmaKey::L6,
        LemmaKey::L7,
        LemmaKey::L8,
        LemmaKey::T4,
        LemmaKey::T5,
        LemmaKey::C2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LemmaKey::L2 => "L2",
            LemmaKey::L3i => "L3i",
            LemmaKey::L3ii => "L3ii",
            LemmaKey::L3iii => "L3iii",
            LemmaKey::L4 => "L4",
            LemmaKey::L5 => "L5",
            LemmaKey::L6 => "L6",
            LemmaKey::L7 => "L7",
            LemmaKey::L8 => "L8",
            LemmaKey::T4 => "T4",
            LemmaKey::T5 => "T5",
            LemmaKey::C2 => "C2",
        }
    }
}

/// Signed sides of one evaluated identity; the reported residual is
/// |lhs − rhs|.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct IdentityEval {
    pub lhs: f64,
    pub rhs: f64,
}

impl IdentityEval {
    pub fn residual(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

#[derive(Debug, Clone, Serialize)]
pub enum LemmaEntry {
    Eval(IdentityEval),
    Refused(String),
}

impl LemmaEntry {
    pub fn to_checked(&self) -> Checked {
        match self {
            LemmaEntry::Eval(e) => Checked::residual(e.residual()),
            LemmaEntry::Refused(r) => Checked::refused(r.clone()),
        }
    }

    pub fn eval(&self) -> Option<IdentityEval> {
        match self {
            LemmaEntry::Eval(e) => Some(*e),
            LemmaEntry::Refused(_) => None,
        }
    }
}

/// Everything the identity evaluators need at one point.
pub struct LemmaContext<'a> {
    pub fp: &'a FramedPoint,
    pub amb: &'a AmbientStructure,
    pub sf: &'a SecondFormData,
    pub split: &'a ResolvedSplit,
    /// slant angle of the fiber distribution at this point
    pub theta: f64,
    /// domain-coordinate gradient of ln f (fiber entries zero)
    pub lnf_grad: DVector<f64>,
    /// domain gradient of θ; only present when θ is proper
    pub theta_grad: Option<DVector<f64>>,
}

/// One choice of identity arguments, in domain coordinates: x, y from the
/// base tangent space, z, w from the fiber.
pub struct LemmaPicks {
    pub x: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DVector<f64>,
    pub w: DVector<f64>,
}

impl<'a> LemmaContext<'a> {
    fn eta(&self, v_ambient: &DVector<f64>) -> Result<f64> {
        Ok(self.amb.eta_at(&self.fp.pos)?.dot(v_ambient))
    }

    fn phi_tangential_domain(&self, v_domain: &DVector<f64>) -> Result<DVector<f64>> {
        let phi = self.amb.phi_at(&self.fp.pos)?;
        let va = self.fp.domain_to_ambient(v_domain);
        Ok(self.fp.ambient_to_domain(&self.fp.tangential(&(&phi * va))))
    }

    fn f_normal(&self, v_domain: &DVector<f64>) -> Result<DVector<f64>> {
        let phi = self.amb.phi_at(&self.fp.pos)?;
        let va = self.fp.domain_to_ambient(v_domain);
        Ok(self.fp.normal(&(&phi * va)))
    }

    fn g_domain(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.fp
            .g_dot(&self.fp.domain_to_ambient(a), &self.fp.domain_to_ambient(b))
    }

    /// g(h(x, y), N) with x, y in domain coordinates and N ambient.
    fn h_pair(&self, x: &DVector<f64>, y: &DVector<f64>, n: &DVector<f64>) -> f64 {
        self.sf.h_bilinear(x, y).dot(&self.fp.nor_coords(n))
    }

    /// A_N x as an ambient vector, from the h-route.
    fn shape_apply(&self, n: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
        let k = self.fp.domain_dim();
        let nu = self.fp.nor_coords(n);
        let mut rhs = DVector::zeros(k);
        for j in 0..k {
            let mut ej = DVector::zeros(k);
            ej[j] = 1.0;
            rhs[j] = self.sf.h_bilinear(x, &ej).dot(&nu);
        }
        let coords = self.fp.induced_solve(&rhs);
        self.fp.domain_to_ambient(&coords)
    }

    fn x_of(&self, grad: &DVector<f64>, x: &DVector<f64>) -> f64 {
        grad.dot(x)
    }
}

/// Evaluate one identity of the suite. Refusals carry the reason; no key
/// is ever silently skipped.
pub fn evaluate_identity(
    key: LemmaKey,
    ctx: &LemmaContext<'_>,
    picks: &LemmaPicks,
) -> Result<LemmaEntry> {
    let theta = ctx.theta;
    let sin = theta.sin();
    let cos = theta.cos();
    let degenerate = sin < THETA_DEGENERATE_TOL || cos < THETA_DEGENERATE_TOL;
    let refuse = |reason: &str| Ok(LemmaEntry::Refused(reason.to_string()));

    let x = &picks.x;
    let y = &picks.y;
    let z = &picks.z;
    let w = &picks.w;
    let xa = ctx.fp.domain_to_ambient(x);

    match key {
        LemmaKey::L2 => {
            if degenerate {
                return refuse("degenerate theta");
            }
            let Some(theta_grad) = &ctx.theta_grad else {
                return refuse("theta gradient unavailable");
            };
            let pz = ctx.phi_tangential_domain(z)?;
            let fpz = ctx.f_normal(&pz)?;
            let fw = ctx.f_normal(w)?;
            let lhs = ctx.h_pair(x, w, &fpz) - ctx.h_pair(x, &pz, &fw);
            let rhs =
                (2.0 * theta).sin() * ctx.x_of(theta_grad, x) * ctx.g_domain(z, w);
            Ok(LemmaEntry::Eval(IdentityEval { lhs, rhs }))
        }
        LemmaKey::L3i => {
            let pz = ctx.phi_tangential_domain(z)?;
            let lhs = ctx.g_domain(&pz, w);
            let xi_lnf = ctx.x_of(&ctx.lnf_grad, &ctx.split.xi.coords);
            let rhs = -xi_lnf * ctx.g_domain(z, w);
            Ok(LemmaEntry::Eval(IdentityEval { lhs, rhs }))
        }
        LemmaKey::L3ii => {
            let fz = ctx.f_normal(z)?;
            let lhs = ctx.h_pair(x, y, &fz);
            Ok(LemmaEntry::Eval(IdentityEval { lhs, rhs: 0.0 }))
        }
        LemmaKey::L3iii => {
            let fw = ctx.f_normal(w)?;
            let pz = ctx.phi_tangential_domain(z)?;
            let phix = ctx.phi_tangential_domain(x)?;
            let lhs = ctx.h_pair(x, z, &fw);
            let rhs = ctx.x_of(&ctx.lnf_grad, x) * ctx.g_domain(&pz, w)
                - ctx.x_of(&ctx.lnf_grad, &phix) * ctx.g_domain(z, w)
                - ctx.eta(&xa)? * ctx.g_domain(z, w);
            Ok(LemmaEntry::Eval(IdentityEval { lhs, rhs }))
        }
        LemmaKey::L4 => {
            let fw = ctx.f_normal(w)?;
            let pw = ctx.phi_tangential_domain(w)?;
            let phix = ctx.phi_tangential_domain(x)?;
            let lhs = ctx.h_pair(&phix, z, &fw);
            let rhs = ctx.x_of(&ctx.lnf_grad, x) * ctx.g_domain(z, w)
                - ctx.eta(&xa)? * ctx.g_domain(z, &pw)
                - ctx.x_of(&ctx.lnf_grad, &phix) * ctx.g_domain(z, &pw);
            Ok(LemmaEntry::Eval(IdentityEval { lhs, rhs }))
        }
        LemmaKey::L5 => {
            let fw = ctx.f_normal(w)?;
            let pz = ctx.phi_tangential_domain(z)?;
            let pw = ctx.phi_tangential_domain(w)?;
            let phix = ctx.phi_tangential_domain(x)?;
            let lhs = ctx.h_pair(x, &pz, &fw);
            let rhs = ctx.x_of(&ctx.lnf_grad, &phix) * ctx.g_domain(z, &pw)
                - ctx.eta(&xa)? * ctx.g_domain(&pz, w)
                - cos * cos * ctx.x_of(&ctx.lnf_grad, x) * ctx.g_domain(z, w);
            Ok(LemmaEntry::Eval(IdentityEval { lhs, rhs }))
        }
        LemmaKey::L6 => {
            let pw = ctx.phi_tangential_domain(w)?;
            let fpw = ctx.f_normal(&pw)?;
            let phix = ctx.phi_tangential_domain(x)?;
            let lhs = ctx.h_pair(x, z, &fpw);
            let rhs = cos * cos * ctx.x_of(&ctx.lnf_grad, x) * ctx.g_domain(z, w)
                - ctx.x_of(&ctx.lnf_grad, &phix) * ctx.g_domain(z, &pw)
                - ctx.eta(&xa)? * ctx.g_domain(z, &pw);
            Ok(LemmaEntry::Eval(IdentityEval { lhs, rhs }))
        }
        LemmaKey::L7 => {
            if degenerate {
                return refuse("degenerate theta");
            }
            let fw = ctx.f_normal(w)?;
            let pw = ctx.phi_tangential_domain(w)?;
            let fpw = ctx.f_normal(&pw)?;
            let phix = ctx.phi_tangential_domain(x)?;
            let za = ctx.fp.domain_to_ambient(z);
            // Shape-operator route on the left, so the arithmetic chain
            // against L4 − L6 crosses the duality wiring.
            let lhs = ctx.fp.g_dot(&ctx.shape_apply(&fw, &phix), &za)
                - ctx.fp.g_dot(&ctx.shape_apply(&fpw, x), &za);
            let rhs = sin * sin * ctx.x_of(&ctx.lnf_grad, x) * ctx.g_domain(z, w);
            Ok(LemmaEntry::Eval(IdentityEval { lhs, rhs }))
        }
        LemmaKey::L8 => {
            if degenerate {
                return refuse("degenerate theta");
            }
            let pz = ctx.phi_tangential_domain(z)?;
            let fpz = ctx.f_normal(&pz)?;
            let fw = ctx.f_normal(w)?;
            let lhs = ctx.fp.g_dot(
                &ctx.shape_apply(&fpz, w),
                &ctx.fp.domain_to_ambient(x),
            ) - ctx
                .fp
                .g_dot(&ctx.shape_apply(&fw, &pz), &ctx.fp.domain_to_ambient(x));
            let rhs = 2.0 * cos * cos * ctx.x_of(&ctx.lnf_grad, x) * ctx.g_domain(z, w);
            Ok(LemmaEntry::Eval(IdentityEval { lhs, rhs }))
        }
        LemmaKey::T4 => {
            if degenerate {
                return refuse("degenerate theta");
            }
            let Some(theta_grad) = &ctx.theta_grad else {
                return refuse("theta gradient unavailable");
            };
            let lhs = ctx.x_of(&ctx.lnf_grad, x);
            let rhs = theta.tan() * ctx.x_of(theta_grad, x);
            Ok(LemmaEntry::Eval(IdentityEval { lhs, rhs }))
        }
        LemmaKey::T5 => {
            if sin < THETA_DEGENERATE_TOL {
                return refuse("degenerate theta");
            }
            let fw = ctx.f_normal(w)?;
            let pw = ctx.phi_tangential_domain(w)?;
            let fpw = ctx.f_normal(&pw)?;
            let phix = ctx.phi_tangential_domain(x)?;
            let wa = ctx.fp.domain_to_ambient(w);
            let vec = ctx.shape_apply(&fw, &phix)
                - ctx.shape_apply(&fpw, x)
                - wa * (sin * sin * ctx.x_of(&ctx.lnf_grad, x));
            Ok(LemmaEntry::Eval(IdentityEval {
                lhs: ctx.fp.g_norm(&vec),
                rhs: 0.0,
            }))
        }
        LemmaKey::C2 => {
            if (theta - std::f64::consts::FRAC_PI_2).abs() > THETA_DEGENERATE_TOL {
                return refuse("theta not pi/2");
            }
            let phi = ctx.amb.phi_at(&ctx.fp.pos)?;
            let za = ctx.fp.domain_to_ambient(z);
            let phi_z = &phi * za;
            let phix = ctx.phi_tangential_domain(x)?;
            // A_{φZ}X = −(η(X) + φX(ln f)) Z. The sign of the η term is
            // forced by the ∇̃_Xξ = −φX convention used throughout (it
            // follows from h(ξ, Z) = −FZ); sources using ∇̃_Xξ = +φX
            // state it with +η(X).
            let scalar = -(ctx.eta(&xa)? + ctx.x_of(&ctx.lnf_grad, &phix));
            let vec =
                ctx.shape_apply(&phi_z, x) - ctx.fp.domain_to_ambient(z) * scalar;
            Ok(LemmaEntry::Eval(IdentityEval {
                lhs: ctx.fp.g_norm(&vec),
                rhs: 0.0,
            }))
        }
    }
}

/// Metadata echoed with every suite evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct LemmaMeta {
    pub point: Vec<f64>,
    pub theta: f64,
    pub x_lnf: f64,
    pub x_theta: Option<f64>,
    /// max |Z(ln f)| over the fiber basis (must vanish on a conforming
    /// candidate)
    pub fiber_lnf: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct LemmaReport {
    pub entries: Vec<(String, Checked)>,
    pub meta: LemmaMeta,
}

impl LemmaReport {
    pub fn get(&self, key: LemmaKey) -> Option<&Checked> {
        self.entries
            .iter()
            .find(|(name, _)| name == key.name())
            .map(|(_, c)| c)
    }
}

/// Evaluate the selected identities at one point for one vector pick.
/// Every selected key appears in the report, evaluated or refused.
pub fn lemma_suite(
    ctx: &LemmaContext<'_>,
    picks: &LemmaPicks,
    selectors: &[LemmaKey],
) -> Result<LemmaReport> {
    let mut entries = Vec::with_capacity(selectors.len());
    for &key in selectors {
        let entry = evaluate_identity(key, ctx, picks)?;
        entries.push((key.name().to_string(), entry.to_checked()));
    }
    let fiber_lnf = ctx
        .split
        .dtheta
        .iter()
        .map(|f| ctx.lnf_grad.dot(&f.coords).abs())
        .fold(0.0f64, f64::max);
    let meta = LemmaMeta {
        point: ctx.fp.param.as_slice().to_vec(),
        theta: ctx.theta,
        x_lnf: ctx.lnf_grad.dot(&picks.x),
        x_theta: ctx.theta_grad.as_ref().map(|g| g.dot(&picks.x)),
        fiber_lnf,
    };
    Ok(LemmaReport { entries, meta })
}

/// |X(ln f) − tan θ · X(θ)| for a proper slant angle; refused outside
/// (tol, π/2 − tol).
pub fn theorem4_check(ctx: &LemmaContext<'_>, x: &DVector<f64>) -> LemmaEntry {
    let picks = LemmaPicks {
        x: x.clone(),
        y: x.clone(),
        z: DVector::zeros(x.len()),
        w: DVector::zeros(x.len()),
    };
    evaluate_identity(LemmaKey::T4, ctx, &picks)
        .unwrap_or_else(|e| LemmaEntry::Refused(e.to_string()))
}

/// The forward shape-operator identity together with the fiber
/// θ-direction derivative of the recovered warping data.
pub struct ForwardCheck {
    pub identity: LemmaEntry,
    /// max |Z(ln f)| over the fiber basis
    pub fiber_mu: f64,
}

pub fn theorem5_forward(
    ctx: &LemmaContext<'_>,
    x: &DVector<f64>,
    w: &DVector<f64>,
) -> Result<ForwardCheck> {
    let picks = LemmaPicks {
        x: x.clone(),
        y: x.clone(),
        z: w.clone(),
        w: w.clone(),
    };
    let identity = evaluate_identity(LemmaKey::T5, ctx, &picks)?;
    let fiber_mu = ctx
        .split
        .dtheta
        .iter()
        .map(|f| ctx.lnf_grad.dot(&f.coords).abs())
        .fold(0.0f64, f64::max);
    Ok(ForwardCheck { identity, fiber_mu })
}

pub fn corollary2_check(
    ctx: &LemmaContext<'_>,
    x: &DVector<f64>,
    z: &DVector<f64>,
) -> Result<LemmaEntry> {
    let picks = LemmaPicks {
        x: x.clone(),
        y: x.clone(),
        z: z.clone(),
        w: z.clone(),
    };
    evaluate_identity(LemmaKey::C2, ctx, &picks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::immersion::frame_at;
    use crate::secondform::second_form;
    use crate::semislant::resolve_split;
    use crate::semislant::Coef;

    fn warp_entry(name: &str) -> catalog::CatalogEntry {
        catalog::catalog(name).unwrap()
    }

    #[test]
    fn planted_exponential_warp_is_recovered() {
        let entry = warp_entry("warp_surface_r5");
        let spec = entry.warp.as_ref().unwrap();
        let points = entry.immersion.sample_points(30, 42).unwrap();
        let rep = detect_warp(&entry.immersion, &entry.ambient, spec, &points).unwrap();
        assert!(rep.max_structural() < 1e-9, "{rep:?}");
        assert!(!rep.trivial);
        for pd in &rep.per_point {
            // f = e^u up to normalization, so ∂_u ln f = 1 exactly.
            assert!((pd.lnf_grad[0] - 1.0).abs() < 1e-6, "{}", pd.lnf_grad[0]);
            assert!(pd.fiber_dependence < 1e-9);
            let expect = (2.0 * (pd.point[0] - spec.reference_point[0])).exp();
            assert!((pd.f_squared - expect).abs() < 1e-9);
        }
    }

    #[test]
    fn product_candidate_is_trivial() {
        let entry = warp_entry("cr_product_r7");
        let spec = entry.warp.as_ref().unwrap();
        let points = entry.immersion.sample_points(20, 42).unwrap();
        let rep = detect_warp(&entry.immersion, &entry.ambient, spec, &points).unwrap();
        assert!(rep.trivial);
        assert!(rep.max_lnf_grad < 1e-10);
        assert!(rep.max_structural() < 1e-10);
    }

    #[test]
    fn warped_cr_candidate_has_the_expected_gradient() {
        let entry = warp_entry("cr_warped_r7");
        let spec = entry.warp.as_ref().unwrap();
        let points = entry.immersion.sample_points(20, 42).unwrap();
        let rep = detect_warp(&entry.immersion, &entry.ambient, spec, &points).unwrap();
        assert!(rep.max_structural() < 1e-9, "{rep:?}");
        assert!(!rep.trivial);
        for pd in &rep.per_point {
            let (u, v) = (pd.point[0], pd.point[1]);
            let r2 = u * u + v * v;
            assert!((pd.lnf_grad[0] - u / r2).abs() < 1e-9);
            assert!((pd.lnf_grad[1] - v / r2).abs() < 1e-9);
            assert!(pd.lnf_grad[3].abs() < 1e-12);
        }
    }

    #[test]
    fn off_block_violation_is_an_error() {
        // A graph surface whose metric mixes the declared base and fiber.
        let amb = crate::ambient::AmbientStructure::euclidean_acm(2);
        let im = Immersion::new(
            &["u", "s"],
            &["u", "s", "u*s", "0", "0"],
            &[(0.5, 1.5), (0.5, 1.5)],
            &[],
        )
        .unwrap();
        let spec = WarpSpec {
            base_vars: vec![0],
            fiber_vars: vec![1],
            reference_point: vec![1.0, 1.0],
        };
        let points = im.sample_points(5, 1).unwrap();
        assert!(matches!(
            detect_warp(&im, &amb, &spec, &points),
            Err(GeomError::BlockStructure { .. })
        ));
    }

    #[test]
    fn non_factorizable_fiber_is_an_error() {
        // Orthogonal blocks but the fiber metric does not factor through
        // a base function: g_ss = 1 + u² sin² s.
        let amb = crate::ambient::AmbientStructure::euclidean_acm(2);
        let im = Immersion::new(
            &["u", "s"],
            &["u", "cos(s)", "u*cos(s)", "0", "0"],
            &[(0.5, 1.5), (0.6, 1.4)],
            &[],
        )
        .unwrap();
        let spec = WarpSpec {
            base_vars: vec![0],
            fiber_vars: vec![1],
            reference_point: vec![1.0, 1.0],
        };
        let points = im.sample_points(10, 1).unwrap();
        match detect_warp(&im, &amb, &spec, &points) {
            Err(GeomError::NotFactorizable { .. }) | Err(GeomError::BlockStructure { .. }) => {}
            other => panic!("expected factorization failure, got {other:?}"),
        }
    }

    #[test]
    fn connection_structure_of_the_planted_warp() {
        let entry = warp_entry("warp_surface_r5");
        let spec = entry.warp.as_ref().unwrap();
        let points = entry.immersion.sample_points(10, 7).unwrap();
        let rep = detect_warp(&entry.immersion, &entry.ambient, spec, &points).unwrap();
        for (idx, p) in points.iter().enumerate() {
            let fp = frame_at(&entry.immersion, &entry.ambient, p).unwrap();
            let sf = second_form(&fp, &entry.ambient).unwrap();
            let r = bishop_oneill_check(&fp, &sf, spec, &rep.lnf_grad_at(idx)).unwrap();
            assert!(r.mixing < 1e-6, "mixing {}", r.mixing);
            assert!(r.base_geodesic < 1e-6);
            assert!(r.fiber_umbilicity < 1e-6, "umbilicity {}", r.fiber_umbilicity);
        }
    }

    #[test]
    fn product_candidate_has_flat_connection_structure() {
        let entry = warp_entry("cr_product_r7");
        let spec = entry.warp.as_ref().unwrap();
        let p = DVector::from_vec(vec![0.4, 0.7, 0.8, 0.1]);
        let fp = frame_at(&entry.immersion, &entry.ambient, &p).unwrap();
        let sf = second_form(&fp, &entry.ambient).unwrap();
        let lnf = DVector::zeros(4);
        let r = bishop_oneill_check(&fp, &sf, spec, &lnf).unwrap();
        assert!(r.max() < 1e-9, "{r:?}");
    }

    #[test]
    fn slant_jet_matches_the_closed_form_gradient() {
        // On the catalog surface θ(w, t) = arccos(|t−w| / √((t²+1)(w²+1)));
        // compare the jet gradient against finite differences of the
        // closed form.
        let entry = warp_entry("example1");
        let section = vec![
            Coef::Num(0.0),
            Coef::Num(0.0),
            Coef::Num(1.0),
            Coef::Num(0.0),
            Coef::Num(0.0),
        ];
        let p = DVector::from_vec(vec![0.1, -0.2, 1.0, 2.0, 0.3]);
        let jet = slant_jet(&entry.immersion, &entry.ambient, &section, &p).unwrap();
        let closed = |w: f64, t: f64| ((t - w) / ((t * t + 1.0) * (w * w + 1.0)).sqrt()).acos();
        assert!((jet.value - closed(1.0, 2.0)).abs() < 1e-12);
        let h = 1e-6;
        let dw = (closed(1.0 + h, 2.0) - closed(1.0 - h, 2.0)) / (2.0 * h);
        let dt = (closed(1.0, 2.0 + h) - closed(1.0, 2.0 - h)) / (2.0 * h);
        assert!((jet.grad[2] - dw).abs() < 1e-8, "{} vs {}", jet.grad[2], dw);
        assert!((jet.grad[3] - dt).abs() < 1e-8);
        assert!(jet.grad[0].abs() < 1e-10);
        assert!(jet.grad[4].abs() < 1e-10);

        // And against finite differences of the engine's own value.
        let mut pp = p.clone();
        let mut pm = p.clone();
        pp[2] += 1e-5;
        pm[2] -= 1e-5;
        let fd = (slant_value(&entry.immersion, &entry.ambient, &section, &pp).unwrap()
            - slant_value(&entry.immersion, &entry.ambient, &section, &pm).unwrap())
            / 2e-5;
        assert!((jet.grad[2] - fd).abs() < 1e-4);
    }

    fn cr_context_at(
        name: &str,
        p: &[f64],
    ) -> (
        catalog::CatalogEntry,
        crate::immersion::FramedPoint,
        crate::secondform::SecondFormData,
        crate::semislant::ResolvedSplit,
        DVector<f64>,
    ) {
        let entry = warp_entry(name);
        let fp = frame_at(
            &entry.immersion,
            &entry.ambient,
            &DVector::from_vec(p.to_vec()),
        )
        .unwrap();
        let sf = second_form(&fp, &entry.ambient).unwrap();
        let spec = entry.split.as_ref().unwrap();
        let resolved = resolve_split(spec, &entry.immersion.variables, &fp).unwrap();
        let warp = entry.warp.as_ref().unwrap();
        let rep =
            detect_warp(&entry.immersion, &entry.ambient, warp, std::slice::from_ref(&fp.param))
                .unwrap();
        let lnf = rep.lnf_grad_at(0);
        (entry, fp, sf, resolved, lnf)
    }

    #[test]
    fn proper_angle_branch_is_refused_on_the_cr_candidate() {
        let (entry, fp, sf, resolved, lnf) = cr_context_at("cr_warped_r7", &[1.4, 0.9, 0.7, 0.2]);
        let ctx = LemmaContext {
            fp: &fp,
            amb: &entry.ambient,
            sf: &sf,
            split: &resolved,
            theta: std::f64::consts::FRAC_PI_2,
            lnf_grad: lnf,
            theta_grad: None,
        };
        let x = resolved.d[0].coords.clone();
        match theorem4_check(&ctx, &x) {
            LemmaEntry::Refused(reason) => assert!(reason.contains("degenerate")),
            LemmaEntry::Eval(_) => panic!("right-angle fiber must refuse the gradient branch"),
        }
    }

    #[test]
    fn forward_identity_on_the_cr_candidate() {
        let (entry, fp, sf, resolved, lnf) = cr_context_at("cr_warped_r7", &[1.6, 1.2, 0.4, -0.5]);
        let ctx = LemmaContext {
            fp: &fp,
            amb: &entry.ambient,
            sf: &sf,
            split: &resolved,
            theta: std::f64::consts::FRAC_PI_2,
            lnf_grad: lnf,
            theta_grad: None,
        };
        let x = resolved.d[0].coords.clone();
        let w = resolved.dtheta[0].coords.clone();
        let fwd = theorem5_forward(&ctx, &x, &w).unwrap();
        match fwd.identity {
            LemmaEntry::Eval(e) => assert!(e.residual() < 1e-6, "{:?}", e),
            LemmaEntry::Refused(r) => panic!("must evaluate at right angle: {r}"),
        }
        assert!(fwd.fiber_mu < 1e-8);
        // ξ pick: both sides vanish since φξ = 0 and ξ(ln f) = 0.
        let fwd = theorem5_forward(&ctx, &resolved.xi.coords, &w).unwrap();
        match fwd.identity {
            LemmaEntry::Eval(e) => assert!(e.residual() < 1e-9),
            LemmaEntry::Refused(r) => panic!("must evaluate: {r}"),
        }
    }

    #[test]
    fn forward_identity_trivial_on_the_product() {
        let (entry, fp, sf, resolved, lnf) = cr_context_at("cr_product_r7", &[0.3, 0.5, 0.6, 0.1]);
        assert!(lnf.norm() < 1e-10);
        let ctx = LemmaContext {
            fp: &fp,
            amb: &entry.ambient,
            sf: &sf,
            split: &resolved,
            theta: std::f64::consts::FRAC_PI_2,
            lnf_grad: lnf,
            theta_grad: None,
        };
        let x = resolved.d[0].coords.clone();
        let w = resolved.dtheta[0].coords.clone();
        let fwd = theorem5_forward(&ctx, &x, &w).unwrap();
        match fwd.identity {
            LemmaEntry::Eval(e) => assert!(e.residual() < 1e-9, "{:?}", e),
            LemmaEntry::Refused(r) => panic!("must evaluate: {r}"),
        }
    }

    #[test]
    fn right_angle_shape_identity_on_the_cr_candidate() {
        let (entry, fp, sf, resolved, lnf) = cr_context_at("cr_warped_r7", &[1.2, 0.7, 0.9, 0.4]);
        let ctx = LemmaContext {
            fp: &fp,
            amb: &entry.ambient,
            sf: &sf,
            split: &resolved,
            theta: std::f64::consts::FRAC_PI_2,
            lnf_grad: lnf.clone(),
            theta_grad: None,
        };
        let z = resolved.dtheta[0].coords.clone();
        for x in [&resolved.d[0].coords, &resolved.d[1].coords, &resolved.xi.coords] {
            let out = corollary2_check(&ctx, x, &z).unwrap();
            match out {
                LemmaEntry::Eval(e) => assert!(e.residual() < 1e-6, "{:?}", e),
                LemmaEntry::Refused(r) => panic!("must evaluate at right angle: {r}"),
            }
        }
        // ξ specialization: A_{φZ}ξ = −Z under the ∇̃ξ = −φX convention.
        let phi = entry.ambient.phi_at(&fp.pos).unwrap();
        let za = fp.domain_to_ambient(&z);
        let phi_z = &phi * &za;
        let a = ctx.shape_apply(&phi_z, &resolved.xi.coords);
        assert!(fp.g_norm(&(a + za)) < 1e-9);
        // Constant warping and η(X) = 0 forces A_{φZ}X = 0.
        let (entry2, fp2, sf2, resolved2, lnf2) =
            cr_context_at("cr_product_r7", &[0.2, -0.4, 0.5, 0.3]);
        let ctx2 = LemmaContext {
            fp: &fp2,
            amb: &entry2.ambient,
            sf: &sf2,
            split: &resolved2,
            theta: std::f64::consts::FRAC_PI_2,
            lnf_grad: lnf2,
            theta_grad: None,
        };
        let z2 = resolved2.dtheta[0].coords.clone();
        let phi2 = entry2.ambient.phi_at(&fp2.pos).unwrap();
        let phi_z2 = &phi2 * fp2.domain_to_ambient(&z2);
        // Both declared D directions are η-horizontal here.
        let a = ctx2.shape_apply(&phi_z2, &resolved2.d[1].coords);
        assert!(fp2.g_norm(&a) < 1e-9, "{}", fp2.g_norm(&a));
    }

    #[test]
    fn gradient_identity_evaluates_on_a_proper_angle() {
        // On the flat surface θ is proper; with ln f fabricated to satisfy
        // the gradient relation exactly, the T4 and L2 branches must
        // evaluate (not refuse) and return zero residual.
        let entry = warp_entry("example1");
        let p = DVector::from_vec(vec![0.1, -0.3, 0.9, 1.8, 0.2]);
        let fp = frame_at(&entry.immersion, &entry.ambient, &p).unwrap();
        let sf = second_form(&fp, &entry.ambient).unwrap();
        let spec = entry.split.as_ref().unwrap();
        let resolved = resolve_split(spec, &entry.immersion.variables, &fp).unwrap();
        let section = &spec.dtheta[0];
        let jet = slant_jet(&entry.immersion, &entry.ambient, section, &p).unwrap();
        let theta = jet.value;
        let lnf = &jet.grad * theta.tan();
        let ctx = LemmaContext {
            fp: &fp,
            amb: &entry.ambient,
            sf: &sf,
            split: &resolved,
            theta,
            lnf_grad: lnf,
            theta_grad: Some(jet.grad.clone()),
        };
        for x in [&resolved.d[0].coords, &resolved.d[1].coords, &resolved.xi.coords] {
            match theorem4_check(&ctx, x) {
                LemmaEntry::Eval(e) => assert!(e.residual() < 1e-12, "{e:?}"),
                LemmaEntry::Refused(r) => panic!("proper angle must evaluate: {r}"),
            }
        }
        // L2 evaluates too (its residual is not forced to zero here, only
        // its refusal behaviour is under test).
        let picks = LemmaPicks {
            x: resolved.d[0].coords.clone(),
            y: resolved.d[1].coords.clone(),
            z: resolved.dtheta[0].coords.clone(),
            w: resolved.dtheta[1].coords.clone(),
        };
        assert!(matches!(
            evaluate_identity(LemmaKey::L2, &ctx, &picks).unwrap(),
            LemmaEntry::Eval(_)
        ));
    }

    #[test]
    fn right_angle_identity_refused_off_angle() {
        // On the flat surface θ is proper, so the right-angle identity
        // must refuse.
        let entry = warp_entry("example1");
        let fp = frame_at(
            &entry.immersion,
            &entry.ambient,
            &DVector::from_vec(vec![0.0, 0.0, 1.0, 2.0, 0.0]),
        )
        .unwrap();
        let sf = second_form(&fp, &entry.ambient).unwrap();
        let spec = entry.split.as_ref().unwrap();
        let resolved = resolve_split(spec, &entry.immersion.variables, &fp).unwrap();
        let ctx = LemmaContext {
            fp: &fp,
            amb: &entry.ambient,
            sf: &sf,
            split: &resolved,
            theta: (1.0 / 10.0f64.sqrt()).acos(),
            lnf_grad: DVector::zeros(5),
            theta_grad: None,
        };
        let out = corollary2_check(&ctx, &resolved.d[0].coords, &resolved.dtheta[0].coords)
            .unwrap();
        assert!(matches!(out, LemmaEntry::Refused(_)));
    }

    #[test]
    fn slant_jet_refuses_degenerate_angles() {
        let entry = warp_entry("cr_warped_r7");
        let section = vec![
            Coef::Num(0.0),
            Coef::Num(0.0),
            Coef::Num(1.0),
            Coef::Num(0.0),
        ];
        let p = DVector::from_vec(vec![1.3, 0.9, 0.5, 0.1]);
        assert!(matches!(
            slant_jet(&entry.immersion, &entry.ambient, &section, &p),
            Err(GeomError::DegenerateTheta { .. })
        ));
    }
}
