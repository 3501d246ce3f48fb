//! Parametrized immersions into an ambient structure: framed points,
//! induced metric, ξ-tangency, and seeded domain sampling.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ambient::AmbientStructure;
use crate::error::{GeomError, Result};
use crate::numjet::{
    complete_basis, eval_jet2, eval_value, g_dot, g_norm, orthonormalize, parse_expr, ExprNode,
};

/// Points with any exclusion predicate within this margin of zero are
/// rejected by the sampler and refused by `frame_at`.
pub const EXCLUSION_MARGIN: f64 = 1e-3;

/// A parametrized immersion χ: domain box ⊂ R^k → R^(2n+1). Component
/// sources are kept verbatim alongside the parsed trees for reporting.
#[derive(Debug, Clone)]
pub struct Immersion {
    pub variables: Vec<String>,
    pub component_srcs: Vec<String>,
    pub components: Vec<ExprNode>,
    pub domain_box: Vec<(f64, f64)>,
    pub exclusion_srcs: Vec<String>,
    /// Predicates whose zero set marks degenerate points; a point is
    /// excluded when |predicate| < [`EXCLUSION_MARGIN`].
    pub exclusions: Vec<ExprNode>,
}

impl Immersion {
    pub fn new(
        variables: &[&str],
        components: &[&str],
        domain_box: &[(f64, f64)],
        exclusions: &[&str],
    ) -> Result<Immersion> {
        let vars: Vec<String> = variables.iter().map(|s| s.to_string()).collect();
        if domain_box.len() != vars.len() {
            return Err(GeomError::DimensionMismatch {
                context: format!(
                    "domain box has {} intervals for {} variables",
                    domain_box.len(),
                    vars.len()
                ),
            });
        }
        let parsed: Vec<ExprNode> = components
            .iter()
            .map(|src| parse_expr(src, &vars))
            .collect::<std::result::Result<_, _>>()?;
        let excl: Vec<ExprNode> = exclusions
            .iter()
            .map(|src| parse_expr(src, &vars))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Immersion {
            variables: vars,
            component_srcs: components.iter().map(|s| s.to_string()).collect(),
            components: parsed,
            domain_box: domain_box.to_vec(),
            exclusion_srcs: exclusions.iter().map(|s| s.to_string()).collect(),
            exclusions: excl,
        })
    }

    pub fn domain_dim(&self) -> usize {
        self.variables.len()
    }

    pub fn ambient_dim(&self) -> usize {
        self.components.len()
    }

    pub fn contains(&self, p: &DVector<f64>) -> bool {
        p.len() == self.domain_dim()
            && p.iter()
                .zip(&self.domain_box)
                .all(|(&x, &(lo, hi))| x >= lo && x <= hi)
    }

    /// The first exclusion predicate violated at p, if any.
    pub fn excluded_by(&self, p: &DVector<f64>) -> Option<&str> {
        for (expr, src) in self.exclusions.iter().zip(&self.exclusion_srcs) {
            match eval_value(expr, p.as_slice()) {
                Ok(v) if v.abs() < EXCLUSION_MARGIN => return Some(src),
                Err(_) => return Some(src),
                _ => {}
            }
        }
        None
    }

    /// Seeded uniform samples from the domain box, rejection-sampled
    /// against the exclusion predicates.
    pub fn sample_points(&self, count: usize, seed: u64) -> Result<Vec<DVector<f64>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut points = Vec::with_capacity(count);
        let mut attempts = 0usize;
        let cap = 1000 * count.max(1);
        while points.len() < count {
            attempts += 1;
            if attempts > cap {
                return Err(GeomError::SamplingFailed { requested: count });
            }
            let p = DVector::from_fn(self.domain_dim(), |i, _| {
                let (lo, hi) = self.domain_box[i];
                rng.gen_range(lo..=hi)
            });
            if self.excluded_by(&p).is_none() {
                points.push(p);
            }
        }
        Ok(points)
    }
}

/// An immersion point with its derivatives and g-orthonormal frames.
pub struct FramedPoint {
    /// Domain point.
    pub param: DVector<f64>,
    /// Ambient image χ(param).
    pub pos: DVector<f64>,
    /// (2n+1)×k Jacobian; column j is the coordinate tangent ∂_j χ.
    pub jac: DMatrix<f64>,
    /// second[i][j] = ∂_i ∂_j χ, an ambient vector; symmetric in (i, j).
    pub second: Vec<Vec<DVector<f64>>>,
    /// g-orthonormal tangent frame (k vectors).
    pub tan_frame: Vec<DVector<f64>>,
    /// g-orthonormal normal frame (2n+1−k vectors).
    pub nor_frame: Vec<DVector<f64>>,
    /// Gram matrix JᵀgJ of the coordinate tangents.
    pub induced_metric: DMatrix<f64>,
    induced_chol: Cholesky<f64, Dyn>,
    /// Ambient metric at `pos`.
    pub metric: DMatrix<f64>,
}

impl FramedPoint {
    pub fn domain_dim(&self) -> usize {
        self.jac.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.jac.nrows()
    }

    pub fn g_dot(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        g_dot(&self.metric, a, b)
    }

    pub fn g_norm(&self, a: &DVector<f64>) -> f64 {
        g_norm(&self.metric, a)
    }

    /// J·c for domain coordinates c.
    pub fn domain_to_ambient(&self, c: &DVector<f64>) -> DVector<f64> {
        &self.jac * c
    }

    /// Domain coordinates of the tangential part of an ambient vector:
    /// G_ind⁻¹ Jᵀ g v.
    pub fn ambient_to_domain(&self, v: &DVector<f64>) -> DVector<f64> {
        let rhs = self.jac.transpose() * (&self.metric * v);
        self.induced_chol.solve(&rhs)
    }

    /// Coordinates of v on the orthonormal tangent frame.
    pub fn tan_coords(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.tan_frame.len(), |i, _| self.g_dot(v, &self.tan_frame[i]))
    }

    /// Coordinates of v on the orthonormal normal frame.
    pub fn nor_coords(&self, v: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.nor_frame.len(), |i, _| self.g_dot(v, &self.nor_frame[i]))
    }

    /// Tangential part of an ambient vector.
    pub fn tangential(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(v.len());
        for b in &self.tan_frame {
            out += b * self.g_dot(v, b);
        }
        out
    }

    /// Normal part of an ambient vector.
    pub fn normal(&self, v: &DVector<f64>) -> DVector<f64> {
        v - self.tangential(v)
    }

    /// Solve G_ind x = rhs.
    pub fn induced_solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        self.induced_chol.solve(rhs)
    }
}

/// Evaluate frames, induced metric and second derivatives at a domain
/// point. Errors on points outside the box, excluded points, and
/// rank-deficient Jacobians; rank deficiency is never silently dropped
/// because it invalidates every downstream identity.
pub fn frame_at(im: &Immersion, amb: &AmbientStructure, p: &DVector<f64>) -> Result<FramedPoint> {
    if !im.contains(p) {
        return Err(GeomError::OutsideDomain);
    }
    if let Some(pred) = im.excluded_by(p) {
        return Err(GeomError::ExcludedPoint {
            predicate: pred.to_string(),
        });
    }
    let k = im.domain_dim();
    let dim = im.ambient_dim();

    let mut pos = DVector::zeros(dim);
    let mut jac = DMatrix::zeros(dim, k);
    let mut second = vec![vec![DVector::zeros(dim); k]; k];
    for (c, expr) in im.components.iter().enumerate() {
        let jet = eval_jet2(expr, p.as_slice())?;
        pos[c] = jet.value;
        for j in 0..k {
            jac[(c, j)] = jet.grad[j];
            for (i, row) in second.iter_mut().enumerate() {
                row[j][c] = jet.hess[(i, j)];
            }
        }
    }

    let metric = amb.metric_at(&pos)?;
    let columns: Vec<DVector<f64>> = (0..k).map(|j| jac.column(j).into_owned()).collect();
    let (tan_frame, rank) = orthonormalize(&columns, &metric)?;
    if rank < k {
        return Err(GeomError::RankDeficient { rank, expected: k });
    }
    let nor_frame = complete_basis(&tan_frame, &metric)?;

    let induced_metric = jac.transpose() * &metric * &jac;
    let induced_chol =
        Cholesky::new(induced_metric.clone()).ok_or(GeomError::MetricNotSpd)?;

    Ok(FramedPoint {
        param: p.clone(),
        pos,
        jac,
        second,
        tan_frame,
        nor_frame,
        induced_metric,
        induced_chol,
        metric,
    })
}

/// Classification of ξ relative to the tangent space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum XiVerdict {
    Tangent,
    Normal,
    Mixed,
}

#[derive(Debug, Clone, Serialize)]
pub struct XiTangency {
    pub tangent_norm: f64,
    pub normal_norm: f64,
    pub verdict: XiVerdict,
}

/// Split ξ at the framed point into tangential and normal parts. The
/// all-normal case is the C-totally real situation.
pub fn xi_tangency(fp: &FramedPoint, amb: &AmbientStructure, tol: f64) -> Result<XiTangency> {
    let xi = amb.xi_at(&fp.pos)?;
    let tangent_norm = fp.g_norm(&fp.tangential(&xi));
    let normal_norm = fp.g_norm(&fp.normal(&xi));
    let verdict = if normal_norm < tol {
        XiVerdict::Tangent
    } else if tangent_norm < tol {
        XiVerdict::Normal
    } else {
        XiVerdict::Mixed
    };
    Ok(XiTangency {
        tangent_norm,
        normal_norm,
        verdict,
    })
}

/// First-order data of the induced metric as a function of the domain
/// point: entry values and their domain-coordinate partials.
pub struct InducedMetricJets {
    pub value: DMatrix<f64>,
    /// grad[m][(a, b)] = ∂_m of entry (a, b)
    pub grad: Vec<DMatrix<f64>>,
}

/// Assemble ∂_m (Jᵀ g J)_ab from the immersion jets and the ambient
/// metric jets via the chain rule.
pub fn induced_metric_jets(
    im: &Immersion,
    amb: &AmbientStructure,
    p: &DVector<f64>,
) -> Result<InducedMetricJets> {
    let k = im.domain_dim();
    let dim = im.ambient_dim();
    let mut pos = DVector::zeros(dim);
    let mut jac = DMatrix::zeros(dim, k);
    let mut second = vec![vec![DVector::zeros(dim); k]; k];
    for (c, expr) in im.components.iter().enumerate() {
        let jet = eval_jet2(expr, p.as_slice())?;
        pos[c] = jet.value;
        for j in 0..k {
            jac[(c, j)] = jet.grad[j];
            for (i, row) in second.iter_mut().enumerate() {
                row[j][c] = jet.hess[(i, j)];
            }
        }
    }
    let gj = amb.metric_jets(&pos)?;
    let value = jac.transpose() * &gj.value * &jac;

    let mut grad = vec![DMatrix::zeros(k, k); k];
    for m in 0..k {
        // ∂_m g evaluated along the immersion: Σ_e (∂_e g) χ^e_{,m}
        let mut dg = DMatrix::zeros(dim, dim);
        for e in 0..dim {
            dg += &gj.grad[e] * jac[(e, m)];
        }
        for a in 0..k {
            for b in 0..k {
                let col_a = jac.column(a);
                let col_b = jac.column(b);
                let term1 = second[a][m].dot(&(&gj.value * col_b));
                let term2 = col_a.dot(&(&gj.value * &second[b][m]));
                let term3 = col_a.dot(&(&dg * col_b));
                grad[m][(a, b)] = term1 + term2 + term3;
            }
        }
    }
    Ok(InducedMetricJets { value, grad })
}
