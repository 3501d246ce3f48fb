//! Second fundamental form, shape operators, and the normal connection.
//!
//! For coordinate fields ∂ᵢχ the ambient derivative splits as
//!
//! ```text
//! ∇̃_{∂ᵢ}∂ⱼχ = ∇_{∂ᵢ}∂ⱼχ + h(∂ᵢ, ∂ⱼ),
//! ```
//!
//! with ∇ the induced connection (tangential part) and h the second
//! fundamental form (normal part). h is computed in coordinate frames and
//! then expressed on the orthonormal normal frame; differentiating the
//! orthonormalization is avoided everywhere except the finite-difference
//! cross-checks that exist to catch frame-differentiation errors.

use nalgebra::{DMatrix, DVector};

use crate::ambient::AmbientStructure;
use crate::error::{GeomError, Result};
use crate::immersion::{frame_at, FramedPoint, Immersion};

/// Finite-difference step for the frame-extension cross-checks.
const FD_STEP: f64 = 1e-5;

/// Allowed tangential leakage when a caller passes a "normal" vector.
pub const NORMAL_TOL: f64 = 1e-8;

pub struct SecondFormData {
    /// h[i][j] = normal-frame coordinates of h(∂ᵢ, ∂ⱼ); symmetric in (i, j).
    pub h: Vec<Vec<DVector<f64>>>,
    /// induced_gamma[i][j] = domain coordinates of ∇_{∂ᵢ}∂ⱼ.
    pub induced_gamma: Vec<Vec<DVector<f64>>>,
}

impl SecondFormData {
    pub fn domain_dim(&self) -> usize {
        self.h.len()
    }

    /// max ‖h(∂ᵢ,∂ⱼ) − h(∂ⱼ,∂ᵢ)‖ on the orthonormal normal frame.
    pub fn symmetry_residual(&self) -> f64 {
        let k = self.domain_dim();
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in (i + 1)..k {
                worst = worst.max((&self.h[i][j] - &self.h[j][i]).norm());
            }
        }
        worst
    }

    /// h(X, Y) for domain-coordinate vectors, extended bilinearly; result
    /// on the normal frame.
    pub fn h_bilinear(&self, x: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        let k = self.domain_dim();
        let codim = self.h[0][0].len();
        let mut out = DVector::zeros(codim);
        for i in 0..k {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..k {
                if y[j] == 0.0 {
                    continue;
                }
                out += &self.h[i][j] * (x[i] * y[j]);
            }
        }
        out
    }

    /// ∇_X Y in domain coordinates for vector fields with jet-evaluated
    /// coefficients: x, y are the coefficient values at the point and
    /// y_grad[(m, i)] = ∂ᵢ y^m.
    pub fn induced_cov_deriv(
        &self,
        x: &DVector<f64>,
        y: &DVector<f64>,
        y_grad: &DMatrix<f64>,
    ) -> DVector<f64> {
        let k = self.domain_dim();
        let mut out = y_grad * x;
        for i in 0..k {
            for j in 0..k {
                out += &self.induced_gamma[i][j] * (x[i] * y[j]);
            }
        }
        out
    }
}

/// Split ∇̃_{∂ᵢ}∂ⱼχ = ∂ᵢ∂ⱼχ + Γ(χ)[∂ᵢχ, ∂ⱼχ] into its tangential and
/// normal parts.
pub fn second_form(fp: &FramedPoint, amb: &AmbientStructure) -> Result<SecondFormData> {
    let k = fp.domain_dim();
    let gamma = amb.christoffel(&fp.pos)?;
    let mut h = vec![vec![DVector::zeros(fp.nor_frame.len()); k]; k];
    let mut induced_gamma = vec![vec![DVector::zeros(k); k]; k];
    for i in 0..k {
        let ti = fp.jac.column(i).into_owned();
        for j in 0..k {
            let tj = fp.jac.column(j).into_owned();
            let full = &fp.second[i][j] + gamma.contract(&ti, &tj);
            h[i][j] = fp.nor_coords(&full);
            induced_gamma[i][j] = fp.ambient_to_domain(&full);
        }
    }
    Ok(SecondFormData { h, induced_gamma })
}

/// Completeness of the split: ∇̃_{∂ᵢ}∂ⱼχ must reconstruct from its
/// tangential and normal parts.
pub fn gauss_reconstruction_residual(
    sf: &SecondFormData,
    fp: &FramedPoint,
    amb: &AmbientStructure,
) -> Result<f64> {
    let k = fp.domain_dim();
    let gamma = amb.christoffel(&fp.pos)?;
    let mut worst = 0.0f64;
    for i in 0..k {
        let ti = fp.jac.column(i).into_owned();
        for j in 0..k {
            let tj = fp.jac.column(j).into_owned();
            let full = &fp.second[i][j] + gamma.contract(&ti, &tj);
            let mut rebuilt = fp.domain_to_ambient(&sf.induced_gamma[i][j]);
            for (a, n) in fp.nor_frame.iter().enumerate() {
                rebuilt += n * sf.h[i][j][a];
            }
            worst = worst.max(fp.g_norm(&(full - rebuilt)));
        }
    }
    Ok(worst)
}

/// Shape operator A_N on domain coordinates, from h by raising with the
/// induced metric: g(A_N X, Y) = g(h(X, Y), N).
pub struct ShapeOperator {
    pub normal: DVector<f64>,
    /// a[(m, j)]: domain coordinates of A_N ∂ⱼ.
    pub a: DMatrix<f64>,
}

impl ShapeOperator {
    /// A_N X for domain coordinates x.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x
    }

    /// max |(G_ind A) − (G_ind A)ᵀ|: self-adjointness w.r.t. the induced
    /// metric.
    pub fn self_adjointness_residual(&self, fp: &FramedPoint) -> f64 {
        let m = &fp.induced_metric * &self.a;
        crate::numjet::max_abs(&(&m - m.transpose()))
    }
}

pub fn shape_operator(
    sf: &SecondFormData,
    fp: &FramedPoint,
    n: &DVector<f64>,
) -> Result<ShapeOperator> {
    let tangential = fp.g_norm(&fp.tangential(n));
    if tangential > NORMAL_TOL {
        return Err(GeomError::NotNormal {
            magnitude: tangential,
        });
    }
    let nu = fp.nor_coords(n);
    let k = fp.domain_dim();
    let mut rhs = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            rhs[(i, j)] = sf.h[i][j].dot(&nu);
        }
    }
    // Solve G_ind A = rhs column by column.
    let mut a = DMatrix::zeros(k, k);
    for j in 0..k {
        let col = fp.induced_solve(&rhs.column(j).into_owned());
        a.set_column(j, &col);
    }
    Ok(ShapeOperator {
        normal: n.clone(),
        a,
    })
}

/// max |g(h(∂ᵢ,∂ⱼ), N) − g(A_N ∂ᵢ, ∂ⱼ)| over the coordinate frame.
pub fn duality_residual(sf: &SecondFormData, fp: &FramedPoint, op: &ShapeOperator) -> f64 {
    let k = fp.domain_dim();
    let nu = fp.nor_coords(&op.normal);
    let mut worst = 0.0f64;
    for i in 0..k {
        let mut ei = DVector::zeros(k);
        ei[i] = 1.0;
        let aei = op.apply(&ei);
        for j in 0..k {
            let lhs = sf.h[i][j].dot(&nu);
            let mut ej = DVector::zeros(k);
            ej[j] = 1.0;
            let rhs = (fp.induced_metric.clone() * &ej).dot(&aei);
            worst = worst.max((lhs - rhs).abs());
        }
    }
    worst
}

/// Ambient derivative ∇̃_{direction} N of the normal field with constant
/// normal-frame coordinates `nu`, by central finite differences of the
/// frame along the coordinate curves plus the Christoffel correction.
/// `direction` is in domain coordinates.
fn ambient_normal_derivative(
    im: &Immersion,
    amb: &AmbientStructure,
    fp: &FramedPoint,
    direction: &DVector<f64>,
    nu: &DVector<f64>,
) -> Result<DVector<f64>> {
    let k = fp.domain_dim();
    let dim = fp.ambient_dim();
    let field_at = |p: &DVector<f64>| -> Result<DVector<f64>> {
        let f = frame_at(im, amb, p)?;
        let mut n = DVector::zeros(dim);
        for (a, b) in f.nor_frame.iter().enumerate() {
            n += b * nu[a];
        }
        Ok(n)
    };
    let n0 = {
        let mut n = DVector::zeros(dim);
        for (a, b) in fp.nor_frame.iter().enumerate() {
            n += b * nu[a];
        }
        n
    };
    let mut deriv = DVector::zeros(dim);
    for i in 0..k {
        if direction[i] == 0.0 {
            continue;
        }
        // Shrink the step if the box is tight around the point.
        let (lo, hi) = im.domain_box[i];
        let h = FD_STEP
            .min((hi - fp.param[i]).abs() / 2.0)
            .min((fp.param[i] - lo).abs() / 2.0)
            .max(1e-9);
        let mut pp = fp.param.clone();
        let mut pm = fp.param.clone();
        pp[i] += h;
        pm[i] -= h;
        let np = field_at(&pp)?;
        let nm = field_at(&pm)?;
        deriv += (np - nm) * (direction[i] / (2.0 * h));
    }
    let gamma = amb.christoffel(&fp.pos)?;
    let dir_ambient = fp.domain_to_ambient(direction);
    Ok(deriv + gamma.contract(&dir_ambient, &n0))
}

/// Normal part of ∇̃_X N for a normal field constant on the normal frame.
/// X in domain coordinates, `nu` the frame coordinates of N.
pub fn normal_connection(
    im: &Immersion,
    amb: &AmbientStructure,
    fp: &FramedPoint,
    direction: &DVector<f64>,
    nu: &DVector<f64>,
) -> Result<DVector<f64>> {
    let full = ambient_normal_derivative(im, amb, fp, direction, nu)?;
    Ok(fp.normal(&full))
}

/// Residual of the reconstruction ∇̃_X N = −A_N X + ∇⊥_X N, with A_N from
/// the h-route and ∇̃_X N from the frame-extension route. Disagreement
/// beyond ~1e-7 flags a frame-differentiation error.
pub fn weingarten_residual(
    im: &Immersion,
    amb: &AmbientStructure,
    fp: &FramedPoint,
    sf: &SecondFormData,
    direction: &DVector<f64>,
    nu: &DVector<f64>,
) -> Result<f64> {
    let mut n = DVector::zeros(fp.ambient_dim());
    for (a, b) in fp.nor_frame.iter().enumerate() {
        n += b * nu[a];
    }
    let op = shape_operator(sf, fp, &n)?;
    let full = ambient_normal_derivative(im, amb, fp, direction, nu)?;
    let tangential = fp.tangential(&full);
    let a_x = fp.domain_to_ambient(&op.apply(direction));
    Ok(fp.g_norm(&(tangential + a_x)))
}

/// max ‖h(X, Z)‖ over g-unit vectors from the two sub-bases; exact on the
/// bases by bilinearity. Errors when the bases are not g-orthogonal.
pub fn mixed_tg_test(
    sf: &SecondFormData,
    fp: &FramedPoint,
    d1: &[DVector<f64>],
    d2: &[DVector<f64>],
) -> Result<f64> {
    let mut cross = 0.0f64;
    for x in d1 {
        let xa = fp.domain_to_ambient(x);
        for z in d2 {
            let za = fp.domain_to_ambient(z);
            cross = cross.max(fp.g_dot(&xa, &za).abs() / (fp.g_norm(&xa) * fp.g_norm(&za)));
        }
    }
    if cross > 1e-6 {
        return Err(GeomError::NonOrthogonalSplit { value: cross });
    }
    let mut worst = 0.0f64;
    for x in d1 {
        let xnorm = fp.g_norm(&fp.domain_to_ambient(x));
        for z in d2 {
            let znorm = fp.g_norm(&fp.domain_to_ambient(z));
            let h = sf.h_bilinear(x, z);
            worst = worst.max(h.norm() / (xnorm * znorm));
        }
    }
    Ok(worst)
}
