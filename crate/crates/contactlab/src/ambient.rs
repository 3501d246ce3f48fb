//! Almost contact metric structures on R^(2n+1).
//!
//! A structure is the quadruple (φ, ξ, η, g) with every tensor entry stored
//! as a jet-evaluable expression in the ambient coordinates. Coordinates are
//! ordered (x₁, y₁, …, x_n, y_n, z).
//!
//! The axioms checked here are
//!
//! ```text
//! φ² = −I + η ⊗ ξ,   η(ξ) = 1,   η∘φ = 0,   φξ = 0,
//! g(φX, φY) = g(X, Y) − η(X) η(Y),
//! ```
//!
//! and for structures that claim it, the covariant-derivative condition
//!
//! ```text
//! (∇̃_X φ)Y = g(X, Y) ξ − η(Y) X,       ∇̃_X ξ = −φX.
//! ```

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{GeomError, Result};
use crate::numjet::{eval_jet2, g_norm, spd_cholesky, ExprNode};

/// Residual threshold for the constructor self-check.
pub const SELF_CHECK_TOL: f64 = 1e-9;

/// Evaluated first-order data of a matrix field: entry values and the
/// per-coordinate partials of each entry.
pub struct MatrixJets {
    pub value: DMatrix<f64>,
    /// grad[l][(i, j)] = ∂_l of entry (i, j)
    pub grad: Vec<DMatrix<f64>>,
}

/// Evaluated first-order data of a vector field.
pub struct VectorJets {
    pub value: DVector<f64>,
    /// grad[(c, l)] = ∂_l of component c
    pub grad: DMatrix<f64>,
}

/// Christoffel symbols Γ^k_ij of the metric at a point; `gamma[k][(i, j)]`.
pub struct ChristoffelData {
    pub gamma: Vec<DMatrix<f64>>,
}

impl ChristoffelData {
    pub fn dim(&self) -> usize {
        self.gamma.len()
    }

    /// max |Γ^k_ij − Γ^k_ji|; zero for a torsion-free construction.
    pub fn symmetry_residual(&self) -> f64 {
        let n = self.dim();
        let mut worst = 0.0f64;
        for g in &self.gamma {
            for i in 0..n {
                for j in (i + 1)..n {
                    worst = worst.max((g[(i, j)] - g[(j, i)]).abs());
                }
            }
        }
        worst
    }

    /// Contraction Γ[a, b]^k = Σ_ij Γ^k_ij a^i b^j.
    pub fn contract(&self, a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(self.dim(), |k, _| a.dot(&(&self.gamma[k] * b)))
    }
}

/// The quadruple (φ, ξ, η, g) with jet-evaluable entries.
pub struct AmbientStructure {
    pub name: String,
    pub n: usize,
    /// Whether the constructor asserts the covariant-derivative condition;
    /// self-checked at construction when true.
    pub sasakian: bool,
    /// phi[i][j] = component i of φ(∂_j)
    pub phi: Vec<Vec<ExprNode>>,
    pub xi: Vec<ExprNode>,
    pub eta: Vec<ExprNode>,
    pub metric: Vec<Vec<ExprNode>>,
}

/// Named residuals of the structure axioms at a point.
#[derive(Debug, Clone, Serialize)]
pub struct AlmostContactResiduals {
    /// φ² + I − η⊗ξ, max norm over the coordinate basis
    pub phi_square: f64,
    /// η(ξ) − 1
    pub eta_xi: f64,
    /// η∘φ on the coordinate basis
    pub eta_phi: f64,
    /// φξ
    pub phi_xi: f64,
    /// g(φ·, φ·) − g + η⊗η on the coordinate basis
    pub compatibility: f64,
}

impl AlmostContactResiduals {
    pub fn max(&self) -> f64 {
        self.phi_square
            .max(self.eta_xi)
            .max(self.eta_phi)
            .max(self.phi_xi)
            .max(self.compatibility)
    }
}

/// Residual pair of the covariant-derivative condition at a point.
#[derive(Debug, Clone, Serialize)]
pub struct SasakianResiduals {
    /// ‖∇̃_X(φY) − φ(∇̃_X Y) − g(X,Y)ξ + η(Y)X‖_g
    pub covariant_phi: f64,
    /// ‖∇̃_X ξ + φX‖_g
    pub xi_derivative: f64,
}

impl SasakianResiduals {
    pub fn max(&self) -> f64 {
        self.covariant_phi.max(self.xi_derivative)
    }
}

fn const_matrix(dim: usize) -> Vec<Vec<ExprNode>> {
    vec![vec![ExprNode::zero(); dim]; dim]
}

impl AmbientStructure {
    pub fn dim(&self) -> usize {
        2 * self.n + 1
    }

    /// Index of the x_i coordinate (1-based i).
    pub fn x_index(i: usize) -> usize {
        2 * (i - 1)
    }

    /// Index of the y_i coordinate (1-based i).
    pub fn y_index(i: usize) -> usize {
        2 * (i - 1) + 1
    }

    pub fn z_index(&self) -> usize {
        2 * self.n
    }

    /// Flat structure: φ(∂x_i) = −∂y_i, φ(∂y_j) = ∂x_j, φ(∂z) = 0,
    /// ξ = ∂z, η = dz, g Euclidean. Almost contact metric but does not
    /// satisfy the covariant-derivative condition.
    pub fn euclidean_acm(n: usize) -> AmbientStructure {
        assert!(n >= 1);
        let dim = 2 * n + 1;
        let mut phi = const_matrix(dim);
        for i in 1..=n {
            let x = Self::x_index(i);
            let y = Self::y_index(i);
            phi[y][x] = ExprNode::constant(-1.0);
            phi[x][y] = ExprNode::constant(1.0);
        }
        let mut xi = vec![ExprNode::zero(); dim];
        xi[dim - 1] = ExprNode::constant(1.0);
        let mut eta = vec![ExprNode::zero(); dim];
        eta[dim - 1] = ExprNode::constant(1.0);
        let mut metric = const_matrix(dim);
        for (i, row) in metric.iter_mut().enumerate() {
            row[i] = ExprNode::constant(1.0);
        }
        AmbientStructure {
            name: "euclidean_acm".into(),
            n,
            sasakian: false,
            phi,
            xi,
            eta,
            metric,
        }
    }

    /// The standard structure on R^(2n+1):
    ///
    /// ```text
    /// η = ½(dz − Σ yⁱ dxⁱ),   ξ = 2∂z,
    /// g = η⊗η + ¼ Σ ((dxⁱ)² + (dyⁱ)²),
    /// φ: ∂xᵢ ↦ −∂yᵢ,  ∂yᵢ ↦ ∂xᵢ + yᵢ∂z,  ∂z ↦ 0.
    /// ```
    ///
    /// The global sign of φ is pinned by the self-check of ∇̃_Xξ = −φX;
    /// the matrix above is the passing sign and is hard-coded.
    pub fn standard_sasakian(n: usize) -> Result<AmbientStructure> {
        assert!(n >= 1);
        let dim = 2 * n + 1;
        let z = dim - 1;
        let c = ExprNode::constant;
        let y = |i: usize| ExprNode::var(Self::y_index(i));

        let mut phi = const_matrix(dim);
        for i in 1..=n {
            let xi_ = Self::x_index(i);
            let yi = Self::y_index(i);
            phi[yi][xi_] = c(-1.0);
            phi[xi_][yi] = c(1.0);
            phi[z][yi] = y(i);
        }

        let mut xi = vec![ExprNode::zero(); dim];
        xi[z] = c(2.0);

        let mut eta = vec![ExprNode::zero(); dim];
        for i in 1..=n {
            eta[Self::x_index(i)] = c(-0.5) * y(i);
        }
        eta[z] = c(0.5);

        let mut metric = const_matrix(dim);
        for i in 1..=n {
            for j in 1..=n {
                let delta = if i == j { 1.0 } else { 0.0 };
                metric[Self::x_index(i)][Self::x_index(j)] =
                    c(0.25) * (c(delta) + y(i) * y(j));
            }
            metric[Self::y_index(i)][Self::y_index(i)] = c(0.25);
            metric[Self::x_index(i)][z] = c(-0.25) * y(i);
            metric[z][Self::x_index(i)] = c(-0.25) * y(i);
        }
        metric[z][z] = c(0.25);

        let structure = AmbientStructure {
            name: "standard_sasakian".into(),
            n,
            sasakian: true,
            phi,
            xi,
            eta,
            metric,
        };
        structure.self_check()?;
        Ok(structure)
    }

    /// Look up a structure by its CLI name.
    pub fn by_name(name: &str, n: usize) -> Result<AmbientStructure> {
        match name {
            "euclidean_acm" => Ok(Self::euclidean_acm(n)),
            "standard_sasakian" => Self::standard_sasakian(n),
            _ => Err(GeomError::UnknownCatalogEntry { name: name.into() }),
        }
    }

    /// Probe the axioms at seeded points in [−1, 1]^(2n+1); used by the
    /// Sasakian constructor to catch sign errors.
    fn self_check(&self) -> Result<()> {
        let dim = self.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5a5a);
        let mut worst = 0.0f64;
        for _ in 0..8 {
            let p = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
            worst = worst.max(self.check_almost_contact(&p)?.max());
            if self.sasakian {
                for _ in 0..3 {
                    let x = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
                    let y = DVector::from_fn(dim, |_, _| rng.gen_range(-1.0..1.0));
                    worst = worst.max(self.check_sasakian(&p, &x, &y)?.max());
                }
            }
        }
        if worst >= SELF_CHECK_TOL {
            return Err(GeomError::SelfCheckFailed { residual: worst });
        }
        Ok(())
    }

    fn eval_matrix(&self, entries: &[Vec<ExprNode>], p: &DVector<f64>) -> Result<DMatrix<f64>> {
        let dim = self.dim();
        let mut out = DMatrix::zeros(dim, dim);
        for (i, row) in entries.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                out[(i, j)] = crate::numjet::eval_value(e, p.as_slice())?;
            }
        }
        Ok(out)
    }

    fn eval_matrix_jets(&self, entries: &[Vec<ExprNode>], p: &DVector<f64>) -> Result<MatrixJets> {
        let dim = self.dim();
        let mut value = DMatrix::zeros(dim, dim);
        let mut grad = vec![DMatrix::zeros(dim, dim); dim];
        for (i, row) in entries.iter().enumerate() {
            for (j, e) in row.iter().enumerate() {
                let jet = eval_jet2(e, p.as_slice())?;
                value[(i, j)] = jet.value;
                for (l, g) in grad.iter_mut().enumerate() {
                    g[(i, j)] = jet.grad[l];
                }
            }
        }
        Ok(MatrixJets { value, grad })
    }

    fn eval_vector_jets(&self, entries: &[ExprNode], p: &DVector<f64>) -> Result<VectorJets> {
        let dim = self.dim();
        let mut value = DVector::zeros(dim);
        let mut grad = DMatrix::zeros(dim, dim);
        for (c, e) in entries.iter().enumerate() {
            let jet = eval_jet2(e, p.as_slice())?;
            value[c] = jet.value;
            for l in 0..dim {
                grad[(c, l)] = jet.grad[l];
            }
        }
        Ok(VectorJets { value, grad })
    }

    pub fn metric_at(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        let g = self.eval_matrix(&self.metric, p)?;
        spd_cholesky(&g)?;
        Ok(g)
    }

    pub fn metric_jets(&self, p: &DVector<f64>) -> Result<MatrixJets> {
        self.eval_matrix_jets(&self.metric, p)
    }

    pub fn phi_at(&self, p: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.eval_matrix(&self.phi, p)
    }

    pub fn phi_jets(&self, p: &DVector<f64>) -> Result<MatrixJets> {
        self.eval_matrix_jets(&self.phi, p)
    }

    pub fn xi_at(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dim());
        for (c, e) in self.xi.iter().enumerate() {
            out[c] = crate::numjet::eval_value(e, p.as_slice())?;
        }
        Ok(out)
    }

    /// Covector coefficients of η at p.
    pub fn eta_at(&self, p: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(self.dim());
        for (c, e) in self.eta.iter().enumerate() {
            out[c] = crate::numjet::eval_value(e, p.as_slice())?;
        }
        Ok(out)
    }

    pub fn eta_apply(&self, p: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        Ok(self.eta_at(p)?.dot(v))
    }

    /// Γ^k_ij = ½ g^{kl}(∂_i g_jl + ∂_j g_il − ∂_l g_ij)
    pub fn christoffel(&self, p: &DVector<f64>) -> Result<ChristoffelData> {
        let dim = self.dim();
        let jets = self.metric_jets(p)?;
        spd_cholesky(&jets.value)?;
        let ginv = jets
            .value
            .clone()
            .try_inverse()
            .ok_or(GeomError::SingularMatrix)?;
        let mut gamma = vec![DMatrix::zeros(dim, dim); dim];
        for k in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    let mut acc = 0.0;
                    for l in 0..dim {
                        acc += ginv[(k, l)]
                            * (jets.grad[i][(j, l)] + jets.grad[j][(i, l)]
                                - jets.grad[l][(i, j)]);
                    }
                    gamma[k][(i, j)] = 0.5 * acc;
                }
            }
        }
        Ok(ChristoffelData { gamma })
    }

    /// Componentwise residual of metric compatibility,
    /// max |∂_l g_ij − Γ^k_li g_kj − Γ^k_lj g_ik|.
    pub fn metricity_residual(&self, p: &DVector<f64>) -> Result<f64> {
        let dim = self.dim();
        let jets = self.metric_jets(p)?;
        let gamma = self.christoffel(p)?;
        let mut worst = 0.0f64;
        for l in 0..dim {
            for i in 0..dim {
                for j in 0..dim {
                    let mut corr = 0.0;
                    for k in 0..dim {
                        corr += gamma.gamma[k][(l, i)] * jets.value[(k, j)]
                            + gamma.gamma[k][(l, j)] * jets.value[(i, k)];
                    }
                    worst = worst.max((jets.grad[l][(i, j)] - corr).abs());
                }
            }
        }
        Ok(worst)
    }

    /// (∇̃_direction field)(p) for a vector field given by one expression
    /// per ambient component.
    pub fn cov_deriv(
        &self,
        field: &[ExprNode],
        direction: &DVector<f64>,
        p: &DVector<f64>,
    ) -> Result<DVector<f64>> {
        let jets = self.eval_vector_jets(field, p)?;
        let gamma = self.christoffel(p)?;
        Ok(&jets.grad * direction + gamma.contract(direction, &jets.value))
    }

    /// ∇̃_X of the field q ↦ φ(q)·Y for a constant coordinate vector Y.
    fn cov_deriv_phi_apply(
        &self,
        phi: &MatrixJets,
        gamma: &ChristoffelData,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> DVector<f64> {
        let dim = self.dim();
        let w0 = &phi.value * y;
        let mut deriv = DVector::zeros(dim);
        for l in 0..dim {
            deriv += (&phi.grad[l] * y) * x[l];
        }
        deriv + gamma.contract(x, &w0)
    }

    /// Max-norm residuals of the structure axioms at p.
    pub fn check_almost_contact(&self, p: &DVector<f64>) -> Result<AlmostContactResiduals> {
        let dim = self.dim();
        let g = self.metric_at(p)?;
        let phi = self.phi_at(p)?;
        let xi = self.xi_at(p)?;
        let eta = self.eta_at(p)?;

        let phi2 = &phi * &phi;
        let outer = &xi * eta.transpose();
        let phi_square =
            crate::numjet::max_abs(&(phi2 + DMatrix::identity(dim, dim) - outer));
        let eta_xi = (eta.dot(&xi) - 1.0).abs();
        let eta_phi = crate::numjet::max_abs_vec(&(phi.transpose() * &eta));
        let phi_xi = crate::numjet::max_abs_vec(&(&phi * &xi));
        let compat = &phi.transpose() * &g * &phi - &g + &eta * eta.transpose();
        let compatibility = crate::numjet::max_abs(&compat);

        Ok(AlmostContactResiduals {
            phi_square,
            eta_xi,
            eta_phi,
            phi_xi,
            compatibility,
        })
    }

    /// Residuals of the covariant-derivative condition for constant
    /// coordinate vectors X, Y, with φY extended as the field
    /// q ↦ φ(q)·Y.
    pub fn check_sasakian(
        &self,
        p: &DVector<f64>,
        x: &DVector<f64>,
        y: &DVector<f64>,
    ) -> Result<SasakianResiduals> {
        let g = self.metric_at(p)?;
        let phi = self.phi_jets(p)?;
        let gamma = self.christoffel(p)?;
        let xi_jets = self.eval_vector_jets(&self.xi, p)?;
        let eta = self.eta_at(p)?;
        let xi = &xi_jets.value;

        let nabla_phi_y = self.cov_deriv_phi_apply(&phi, &gamma, x, y);
        let nabla_y = gamma.contract(x, y);
        let lhs = nabla_phi_y - &phi.value * nabla_y;
        let gxy = crate::numjet::g_dot(&g, x, y);
        let resid1 = lhs - xi * gxy + x * eta.dot(y);
        let covariant_phi = g_norm(&g, &resid1);

        let nabla_xi = &xi_jets.grad * x + gamma.contract(x, xi);
        let resid2 = nabla_xi + &phi.value * x;
        let xi_derivative = g_norm(&g, &resid2);

        Ok(SasakianResiduals {
            covariant_phi,
            xi_derivative,
        })
    }
}
