//! Tangential/normal decompositions of φ along a submanifold and the slant
//! machinery.
//!
//! For tangent X and normal N,
//!
//! ```text
//! φX = PX + FX,        φN = tN + fN,
//! ```
//!
//! with P, F, t, f expressed on the orthonormal tangent/normal frames of a
//! [`FramedPoint`]. The slant angle of X is the angle between φX and the
//! tangent space, arccos(‖PX‖/‖φX‖) ∈ [0, π/2].

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ambient::AmbientStructure;
use crate::error::{GeomError, Result};
use crate::immersion::FramedPoint;
use crate::report::Checked;

/// Per-vector slant spread below which a subspace counts as pointwise
/// slant; also the zero / right-angle classification margin.
pub const ANGLE_TOL: f64 = 1e-7;

/// Threshold on ‖X − g(X, ξ̂)ξ̂‖ (after unit-normalizing) below which X is
/// treated as proportional to ξ.
pub const XI_PROPORTIONAL_TOL: f64 = 1e-8;

/// Number of sampled unit vectors behind a slant estimate.
pub const SLANT_SAMPLES: usize = 32;

/// The decomposition of φ restricted to the tangent space: `p[(i, j)]` and
/// `f[(a, j)]` are the tangent- and normal-frame coordinates of φ applied
/// to the j-th tangent frame vector.
pub struct PFSplit {
    pub p: DMatrix<f64>,
    pub f: DMatrix<f64>,
}

/// The decomposition of φ restricted to the normal space: `t[(i, a)]` and
/// `f_op[(b, a)]` are the tangent- and normal-frame coordinates of φ
/// applied to the a-th normal frame vector.
pub struct TFSplit {
    pub t: DMatrix<f64>,
    pub f_op: DMatrix<f64>,
}

pub fn pf_decompose(fp: &FramedPoint, amb: &AmbientStructure) -> Result<PFSplit> {
    let phi = amb.phi_at(&fp.pos)?;
    let k = fp.tan_frame.len();
    let codim = fp.nor_frame.len();
    let mut p = DMatrix::zeros(k, k);
    let mut f = DMatrix::zeros(codim, k);
    for (j, e) in fp.tan_frame.iter().enumerate() {
        let phi_e = &phi * e;
        p.set_column(j, &fp.tan_coords(&phi_e));
        f.set_column(j, &fp.nor_coords(&phi_e));
    }
    Ok(PFSplit { p, f })
}

pub fn tf_decompose(fp: &FramedPoint, amb: &AmbientStructure) -> Result<TFSplit> {
    let phi = amb.phi_at(&fp.pos)?;
    let k = fp.tan_frame.len();
    let codim = fp.nor_frame.len();
    let mut t = DMatrix::zeros(k, codim);
    let mut f_op = DMatrix::zeros(codim, codim);
    for (a, n) in fp.nor_frame.iter().enumerate() {
        let phi_n = &phi * n;
        t.set_column(a, &fp.tan_coords(&phi_n));
        f_op.set_column(a, &fp.nor_coords(&phi_n));
    }
    Ok(TFSplit { t, f_op })
}

/// Reconstruction residual of both decompositions: φv must equal its
/// frame-coordinate rebuild for every frame vector.
pub fn reconstruction_residual(
    fp: &FramedPoint,
    amb: &AmbientStructure,
    pf: &PFSplit,
    tf: &TFSplit,
) -> Result<f64> {
    let phi = amb.phi_at(&fp.pos)?;
    let mut worst = 0.0f64;
    for (j, e) in fp.tan_frame.iter().enumerate() {
        let mut rebuilt = DVector::zeros(fp.ambient_dim());
        for (i, b) in fp.tan_frame.iter().enumerate() {
            rebuilt += b * pf.p[(i, j)];
        }
        for (a, n) in fp.nor_frame.iter().enumerate() {
            rebuilt += n * pf.f[(a, j)];
        }
        worst = worst.max(fp.g_norm(&(&phi * e - rebuilt)));
    }
    for (a, n) in fp.nor_frame.iter().enumerate() {
        let mut rebuilt = DVector::zeros(fp.ambient_dim());
        for (i, b) in fp.tan_frame.iter().enumerate() {
            rebuilt += b * tf.t[(i, a)];
        }
        for (b_idx, m) in fp.nor_frame.iter().enumerate() {
            rebuilt += m * tf.f_op[(b_idx, a)];
        }
        worst = worst.max(fp.g_norm(&(&phi * n - rebuilt)));
    }
    Ok(worst)
}

/// g(FX, N) + g(X, tN) over the frames; guards the sign conventions of
/// both decompositions at once.
pub fn adjointness_residual(pf: &PFSplit, tf: &TFSplit) -> f64 {
    let mut worst = 0.0f64;
    for j in 0..pf.f.ncols() {
        for a in 0..pf.f.nrows() {
            worst = worst.max((pf.f[(a, j)] + tf.t[(j, a)]).abs());
        }
    }
    worst
}

/// Slant angle of a tangent vector, arccos(‖PX‖/‖φX‖) clamped to [0, 1]
/// before the arccosine. Values above 1 + 1e-9 are errors; the sliver in
/// between is round-off and clamps.
pub fn slant_angle(fp: &FramedPoint, amb: &AmbientStructure, x: &DVector<f64>) -> Result<f64> {
    let xi = amb.xi_at(&fp.pos)?;
    let xi_norm = fp.g_norm(&xi);
    let x_norm = fp.g_norm(x);
    if x_norm < 1e-14 {
        return Err(GeomError::XiProportional);
    }
    let x_hat = x / x_norm;
    if xi_norm > 1e-14 {
        let xi_hat = &xi / xi_norm;
        let off_xi = &x_hat - &xi_hat * fp.g_dot(&x_hat, &xi_hat);
        if fp.g_norm(&off_xi) <= XI_PROPORTIONAL_TOL {
            return Err(GeomError::XiProportional);
        }
    }
    let phi = amb.phi_at(&fp.pos)?;
    let phi_x = &phi * &x_hat;
    let denom = fp.g_norm(&phi_x);
    if denom < 1e-14 {
        return Err(GeomError::PhiDegenerate);
    }
    let tangential = fp.g_norm(&fp.tangential(&phi_x));
    let normal = fp.g_norm(&fp.normal(&phi_x));
    let ratio = tangential / denom;
    if ratio > 1.0 + 1e-9 {
        return Err(GeomError::AcosDomain { value: ratio });
    }
    // The decomposition is g-orthogonal, so atan2 of the two norms equals
    // arccos(clamped ratio) but stays exact at both endpoints, where the
    // arccosine loses half its digits.
    Ok(normal.atan2(tangential))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SlantVerdict {
    Invariant,
    AntiInvariant,
    PointwiseSlant,
    NotSlant,
}

/// Slant estimate for a subspace at one point: θ is the mean angle over
/// seeded random unit vectors, `max_deviation` their spread around it, and
/// `certificate_residual` the operator identity
/// ‖P² + cos²θ (I − η⊗ξ)‖ restricted to the subspace.
#[derive(Debug, Clone, Serialize)]
pub struct SlantReport {
    pub theta: f64,
    pub max_deviation: f64,
    pub per_vector: Vec<f64>,
    pub verdict: SlantVerdict,
    pub certificate_residual: f64,
}

/// Estimate the slant function of the span of `subspace` (which must
/// exclude ξ) from [`SLANT_SAMPLES`] seeded random unit vectors.
pub fn slant_function(
    fp: &FramedPoint,
    amb: &AmbientStructure,
    subspace: &[DVector<f64>],
    seed: u64,
) -> Result<SlantReport> {
    if subspace.is_empty() {
        return Err(GeomError::EmptySubspace);
    }
    let (basis, rank) = crate::numjet::orthonormalize(subspace, &fp.metric)?;
    if rank == 0 {
        return Err(GeomError::EmptySubspace);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_vector = Vec::with_capacity(SLANT_SAMPLES);
    for _ in 0..SLANT_SAMPLES {
        let v = loop {
            let mut v = DVector::zeros(fp.ambient_dim());
            for b in &basis {
                // Uniform coefficients sample directions well enough here.
                v += b * rng.gen_range(-1.0..1.0f64);
            }
            if fp.g_norm(&v) > 1e-3 {
                break v;
            }
        };
        per_vector.push(slant_angle(fp, amb, &v)?);
    }
    let theta = per_vector.iter().sum::<f64>() / per_vector.len() as f64;
    let max_deviation = per_vector
        .iter()
        .map(|a| (a - theta).abs())
        .fold(0.0f64, f64::max);

    // Operator certificate: P²V + cos²θ (V − η(V)ξ) = 0 on the subspace.
    let phi = amb.phi_at(&fp.pos)?;
    let xi = amb.xi_at(&fp.pos)?;
    let eta = amb.eta_at(&fp.pos)?;
    let cos2 = theta.cos().powi(2);
    let mut certificate_residual = 0.0f64;
    for v in &basis {
        let pv = fp.tangential(&(&phi * v));
        let ppv = fp.tangential(&(&phi * &pv));
        let resid = ppv + v * cos2 - &xi * (cos2 * eta.dot(v));
        certificate_residual = certificate_residual.max(fp.g_norm(&resid));
    }

    let verdict = if max_deviation > ANGLE_TOL {
        SlantVerdict::NotSlant
    } else if theta < ANGLE_TOL {
        SlantVerdict::Invariant
    } else if theta > std::f64::consts::FRAC_PI_2 - ANGLE_TOL {
        SlantVerdict::AntiInvariant
    } else {
        SlantVerdict::PointwiseSlant
    };

    Ok(SlantReport {
        theta,
        max_deviation,
        per_vector,
        verdict,
        certificate_residual,
    })
}

/// Named residuals of the pointwise identities for a pair of tangent
/// vectors. The θ-dependent lines presuppose a verified pointwise slant
/// subspace and are refused when no angle is supplied.
#[derive(Debug, Clone, Serialize)]
pub struct TangencyIdentities {
    /// g(PX, Y) + g(X, PY)
    pub p_skew: f64,
    /// g(PX, PY) − cos²θ [g(X,Y) − η(X)η(Y)]
    pub p_norms: Checked,
    /// g(FX, FY) − sin²θ [g(X,Y) − η(X)η(Y)]
    pub f_norms: Checked,
    /// tFX − sin²θ (−X + η(X)ξ)
    pub tf_back: Checked,
    /// fFX + FPX
    pub ff_forward: Checked,
}

impl TangencyIdentities {
    pub fn max_residual(&self) -> f64 {
        let mut worst = self.p_skew;
        for c in [&self.p_norms, &self.f_norms, &self.tf_back, &self.ff_forward] {
            if let Checked::Residual(r) = c {
                worst = worst.max(*r);
            }
        }
        worst
    }
}

/// Evaluate the identity residuals for tangent vectors x, y. `theta` is
/// the verified slant angle of the subspace containing them, or `None`
/// when only the θ-free line applies.
pub fn identity_residuals(
    fp: &FramedPoint,
    amb: &AmbientStructure,
    x: &DVector<f64>,
    y: &DVector<f64>,
    theta: Option<f64>,
) -> Result<TangencyIdentities> {
    let phi = amb.phi_at(&fp.pos)?;
    let xi = amb.xi_at(&fp.pos)?;
    let eta = amb.eta_at(&fp.pos)?;

    let phi_x = &phi * x;
    let phi_y = &phi * y;
    let px = fp.tangential(&phi_x);
    let py = fp.tangential(&phi_y);
    let fx = fp.normal(&phi_x);
    let fy = fp.normal(&phi_y);

    let p_skew = (fp.g_dot(&px, y) + fp.g_dot(x, &py)).abs();

    let (p_norms, f_norms, tf_back, ff_forward) = match theta {
        None => {
            let refused = || Checked::Refused("no verified slant subspace".into());
            (refused(), refused(), refused(), refused())
        }
        Some(theta) => {
            let cos2 = theta.cos().powi(2);
            let sin2 = theta.sin().powi(2);
            let base = fp.g_dot(x, y) - eta.dot(x) * eta.dot(y);
            let p_norms = (fp.g_dot(&px, &py) - cos2 * base).abs();
            let f_norms = (fp.g_dot(&fx, &fy) - sin2 * base).abs();

            let phi_fx = &phi * &fx;
            let tfx = fp.tangential(&phi_fx);
            let ffx = fp.normal(&phi_fx);
            let tf_expect = (x * -1.0 + &xi * eta.dot(x)) * sin2;
            let tf_back = fp.g_norm(&(tfx - tf_expect));
            let fpx = fp.normal(&(&phi * &px));
            let ff_forward = fp.g_norm(&(ffx + fpx));
            (
                Checked::Residual(p_norms),
                Checked::Residual(f_norms),
                Checked::Residual(tf_back),
                Checked::Residual(ff_forward),
            )
        }
    };

    Ok(TangencyIdentities {
        p_skew,
        p_norms,
        f_norms,
        tf_back,
        ff_forward,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::immersion::frame_at;

    fn surface_at(w: f64, t: f64) -> (AmbientStructure, crate::immersion::Immersion, FramedPoint) {
        let entry = catalog::catalog("example1").unwrap();
        let p = DVector::from_vec(vec![0.0, 0.0, w, t, 0.0]);
        let fp = frame_at(&entry.immersion, &entry.ambient, &p).unwrap();
        (entry.ambient, entry.immersion, fp)
    }

    /// Frame coordinates of a domain-coordinate direction.
    fn coord_dir(fp: &FramedPoint, idx: usize) -> DVector<f64> {
        fp.jac.column(idx).into_owned()
    }

    #[test]
    fn invariant_direction_has_zero_normal_part() {
        let (amb, _, fp) = surface_at(1.0, 2.0);
        let pf = pf_decompose(&fp, &amb).unwrap();
        // φZ₁ = −Z₂ is tangent, so the F-column of Z₁ vanishes. The
        // coordinate tangents are orthogonal, so frame index 0 is Z₁.
        for a in 0..pf.f.nrows() {
            assert!(pf.f[(a, 0)].abs() < 1e-12);
        }
        // And the tangential part is −Z₂ up to normalization.
        let z1 = coord_dir(&fp, 0);
        let z2 = coord_dir(&fp, 1);
        let phi = amb.phi_at(&fp.pos).unwrap();
        assert!(fp.g_norm(&(&phi * &z1 + &z2)) < 1e-12);
    }

    #[test]
    fn xi_direction_has_zero_columns() {
        let (amb, _, fp) = surface_at(1.0, 2.0);
        let pf = pf_decompose(&fp, &amb).unwrap();
        // Frame index 4 is ξ.
        for i in 0..5 {
            assert!(pf.p[(i, 4)].abs() < 1e-13);
        }
        for a in 0..2 {
            assert!(pf.f[(a, 4)].abs() < 1e-13);
        }
    }

    #[test]
    fn cross_pairing_of_slant_tangents() {
        // g(φZ₃, Z₄) = t − w = 1 at (w, t) = (1, 2).
        let (amb, _, fp) = surface_at(1.0, 2.0);
        let phi = amb.phi_at(&fp.pos).unwrap();
        let z3 = coord_dir(&fp, 2);
        let z4 = coord_dir(&fp, 3);
        assert!((fp.g_dot(&(&phi * &z3), &z4) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slant_angles_of_named_directions() {
        let (amb, _, fp) = surface_at(1.0, 2.0);
        let z1 = coord_dir(&fp, 0);
        assert!(slant_angle(&fp, &amb, &z1).unwrap() < 1e-9);
        let z3 = coord_dir(&fp, 2);
        let expect = (1.0 / 10.0f64.sqrt()).acos();
        assert!((slant_angle(&fp, &amb, &z3).unwrap() - expect).abs() < 1e-12);
        assert!((expect - 1.249046).abs() < 1e-6);
    }

    #[test]
    fn xi_proportional_vector_is_rejected() {
        let (amb, _, fp) = surface_at(1.0, 2.0);
        let xi = amb.xi_at(&fp.pos).unwrap();
        assert!(matches!(
            slant_angle(&fp, &amb, &xi),
            Err(GeomError::XiProportional)
        ));
    }

    #[test]
    fn slant_function_on_the_slant_plane() {
        let (amb, _, fp) = surface_at(1.0, 2.0);
        let sub = vec![coord_dir(&fp, 2), coord_dir(&fp, 3)];
        let rep = slant_function(&fp, &amb, &sub, 7).unwrap();
        let expect = (1.0 / 10.0f64.sqrt()).acos();
        assert!((rep.theta - expect).abs() < 1e-9);
        assert!(rep.max_deviation < 1e-9);
        assert!(rep.certificate_residual < 1e-9);
        assert_eq!(rep.verdict, SlantVerdict::PointwiseSlant);
    }

    #[test]
    fn slant_function_on_the_invariant_plane() {
        let (amb, _, fp) = surface_at(1.0, 2.0);
        let sub = vec![coord_dir(&fp, 0), coord_dir(&fp, 1)];
        let rep = slant_function(&fp, &amb, &sub, 7).unwrap();
        assert!(rep.theta < 1e-9);
        assert_eq!(rep.verdict, SlantVerdict::Invariant);
    }

    #[test]
    fn mixed_subspace_is_not_slant() {
        let (amb, _, fp) = surface_at(1.0, 2.0);
        let sub: Vec<DVector<f64>> = (0..4).map(|i| coord_dir(&fp, i)).collect();
        let rep = slant_function(&fp, &amb, &sub, 7).unwrap();
        assert_eq!(rep.verdict, SlantVerdict::NotSlant);
    }

    #[test]
    fn empty_subspace_is_an_error() {
        let (amb, _, fp) = surface_at(1.0, 2.0);
        assert!(matches!(
            slant_function(&fp, &amb, &[], 7),
            Err(GeomError::EmptySubspace)
        ));
    }

    #[test]
    fn identity_residuals_on_slant_vectors() {
        let (amb, _, fp) = surface_at(1.0, 2.0);
        let theta = (1.0 / 10.0f64.sqrt()).acos();
        let z3 = coord_dir(&fp, 2);
        // g(PZ₃, PZ₃) = cos²θ g(Z₃,Z₃) = 0.5 and the F-norm line gives 4.5.
        let phi = amb.phi_at(&fp.pos).unwrap();
        let pz3 = fp.tangential(&(&phi * &z3));
        let fz3 = fp.normal(&(&phi * &z3));
        assert!((fp.g_dot(&pz3, &pz3) - 0.5).abs() < 1e-12);
        assert!((fp.g_dot(&fz3, &fz3) - 4.5).abs() < 1e-12);
        let ids = identity_residuals(&fp, &amb, &z3, &z3, Some(theta)).unwrap();
        assert!(ids.max_residual() < 1e-10);
    }

    #[test]
    fn skew_identity_holds_for_random_tangents() {
        let (amb, _, fp) = surface_at(1.3, 0.7);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..10 {
            let c = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
            let d = DVector::from_fn(5, |_, _| rng.gen_range(-1.0..1.0));
            let x = fp.domain_to_ambient(&c);
            let y = fp.domain_to_ambient(&d);
            let ids = identity_residuals(&fp, &amb, &x, &y, None).unwrap();
            assert!(ids.p_skew < 1e-10);
            assert!(matches!(ids.p_norms, Checked::Refused(_)));
        }
    }

    #[test]
    fn composition_identity_on_slant_vectors() {
        // fFX = −FPX for X in the slant plane.
        let (amb, _, fp) = surface_at(1.0, 2.0);
        let theta = (1.0 / 10.0f64.sqrt()).acos();
        for idx in [2, 3] {
            let x = coord_dir(&fp, idx);
            let ids = identity_residuals(&fp, &amb, &x, &x, Some(theta)).unwrap();
            match ids.ff_forward {
                Checked::Residual(r) => assert!(r < 1e-9),
                _ => panic!("expected residual"),
            }
            match ids.tf_back {
                Checked::Residual(r) => assert!(r < 1e-9),
                _ => panic!("expected residual"),
            }
        }
    }

    #[test]
    fn f_operator_vanishes_on_anti_invariant_image() {
        // On a right-angle fiber, fFX = −FPX = 0: φ maps the normal image
        // of the fiber back into the tangent space.
        let entry = catalog::catalog("cr_warped_r7").unwrap();
        let p = DVector::from_vec(vec![1.3, 0.8, 0.6, 0.2]);
        let fp = frame_at(&entry.immersion, &entry.ambient, &p).unwrap();
        let phi = entry.ambient.phi_at(&fp.pos).unwrap();
        // Fiber direction ∂s.
        let z = fp.jac.column(2).into_owned();
        let fz = fp.normal(&(&phi * &z));
        let ffz = fp.normal(&(&phi * &fz));
        assert!(fp.g_norm(&ffz) < 1e-12, "{}", fp.g_norm(&ffz));
        let ids = identity_residuals(&fp, &entry.ambient, &z, &z,
            Some(std::f64::consts::FRAC_PI_2)).unwrap();
        match ids.ff_forward {
            Checked::Residual(r) => assert!(r < 1e-12),
            _ => panic!("expected residual"),
        }
    }

    #[test]
    fn reconstruction_and_adjointness() {
        let entry = catalog::catalog("example1").unwrap();
        for p in entry.immersion.sample_points(10, 99).unwrap() {
            let fp = frame_at(&entry.immersion, &entry.ambient, &p).unwrap();
            let pf = pf_decompose(&fp, &entry.ambient).unwrap();
            let tf = tf_decompose(&fp, &entry.ambient).unwrap();
            assert!(reconstruction_residual(&fp, &entry.ambient, &pf, &tf).unwrap() < 1e-10);
            assert!(adjointness_residual(&pf, &tf) < 1e-9);
        }
    }
}
