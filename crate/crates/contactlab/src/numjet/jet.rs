//! Second-order forward jets: value, gradient, and Hessian propagated
//! exactly through arithmetic. Chosen over nested first-order duals so the
//! Hessian stays symmetric by construction.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use super::expr::{ExprNode, UnaryFn};

/// Second-order Taylor data of a scalar at a point: value, gradient and
/// Hessian with respect to the `k` evaluation variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Jet2 {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("division by zero in `{expr}`")]
    DivisionByZero { expr: String },
    #[error("log of non-positive value {value} in `{expr}`")]
    LogDomain { value: f64, expr: String },
    #[error("sqrt of negative value {value} in `{expr}`")]
    SqrtDomain { value: f64, expr: String },
    #[error("arccos argument {value} outside [-1, 1]")]
    AcosDomain { value: f64 },
    #[error("variable index {index} out of range for arity {arity}")]
    VarOutOfRange { index: usize, arity: usize },
    #[error("point length {got} does not match variable count {expected}")]
    ArityMismatch { got: usize, expected: usize },
}

impl Jet2 {
    /// Constant with respect to `k` variables.
    pub fn constant(value: f64, k: usize) -> Self {
        Jet2 {
            value,
            grad: DVector::zeros(k),
            hess: DMatrix::zeros(k, k),
        }
    }

    /// The `index`-th coordinate variable seeded at `value`.
    pub fn variable(value: f64, index: usize, k: usize) -> Self {
        let mut grad = DVector::zeros(k);
        grad[index] = 1.0;
        Jet2 {
            value,
            grad,
            hess: DMatrix::zeros(k, k),
        }
    }

    pub fn arity(&self) -> usize {
        self.grad.len()
    }

    pub fn add(&self, o: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value + o.value,
            grad: &self.grad + &o.grad,
            hess: &self.hess + &o.hess,
        }
    }

    pub fn sub(&self, o: &Jet2) -> Jet2 {
        Jet2 {
            value: self.value - o.value,
            grad: &self.grad - &o.grad,
            hess: &self.hess - &o.hess,
        }
    }

    pub fn neg(&self) -> Jet2 {
        Jet2 {
            value: -self.value,
            grad: -&self.grad,
            hess: -&self.hess,
        }
    }

    pub fn scale(&self, c: f64) -> Jet2 {
        Jet2 {
            value: c * self.value,
            grad: &self.grad * c,
            hess: &self.hess * c,
        }
    }

    pub fn mul(&self, o: &Jet2) -> Jet2 {
        let cross = &self.grad * o.grad.transpose();
        Jet2 {
            value: self.value * o.value,
            grad: &self.grad * o.value + &o.grad * self.value,
            hess: &self.hess * o.value + &o.hess * self.value + &cross + cross.transpose(),
        }
    }

    /// Quotient; the Hessian is assembled from the already-computed quotient
    /// gradient, which keeps it symmetric.
    pub fn div(&self, o: &Jet2) -> Result<Jet2, EvalError> {
        if o.value == 0.0 {
            return Err(EvalError::DivisionByZero {
                expr: String::new(),
            });
        }
        let value = self.value / o.value;
        let grad = (&self.grad - &o.grad * value) / o.value;
        let cross = &grad * o.grad.transpose();
        let hess = (&self.hess - &o.hess * value - &cross - cross.transpose()) / o.value;
        Ok(Jet2 { value, grad, hess })
    }

    /// Chain rule through a scalar map with derivatives `d1`, `d2` at
    /// `self.value`.
    fn chain(&self, value: f64, d1: f64, d2: f64) -> Jet2 {
        Jet2 {
            value,
            grad: &self.grad * d1,
            hess: &self.hess * d1 + (&self.grad * self.grad.transpose()) * d2,
        }
    }

    pub fn sin(&self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }

    pub fn cos(&self) -> Jet2 {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }

    pub fn tan(&self) -> Jet2 {
        let t = self.value.tan();
        let sec2 = 1.0 + t * t;
        self.chain(t, sec2, 2.0 * t * sec2)
    }

    pub fn exp(&self) -> Jet2 {
        let e = self.value.exp();
        self.chain(e, e, e)
    }

    pub fn log(&self) -> Result<Jet2, EvalError> {
        if self.value <= 0.0 {
            return Err(EvalError::LogDomain {
                value: self.value,
                expr: String::new(),
            });
        }
        Ok(self.chain(self.value.ln(), 1.0 / self.value, -1.0 / (self.value * self.value)))
    }

    pub fn sqrt(&self) -> Result<Jet2, EvalError> {
        if self.value < 0.0 {
            return Err(EvalError::SqrtDomain {
                value: self.value,
                expr: String::new(),
            });
        }
        let r = self.value.sqrt();
        Ok(self.chain(r, 0.5 / r, -0.25 / (r * self.value)))
    }

    /// Arccosine; not part of the expression grammar, used by the slant
    /// machinery after clamping its argument.
    pub fn acos(&self) -> Result<Jet2, EvalError> {
        let v = self.value;
        if !(-1.0..=1.0).contains(&v) {
            return Err(EvalError::AcosDomain { value: v });
        }
        let s = (1.0 - v * v).sqrt();
        Ok(self.chain(v.acos(), -1.0 / s, -v / (s * s * s)))
    }

    pub fn powi(&self, n: i32) -> Result<Jet2, EvalError> {
        match n {
            0 => Ok(Jet2::constant(1.0, self.arity())),
            1 => Ok(self.clone()),
            _ => {
                if self.value == 0.0 {
                    if n < 0 {
                        return Err(EvalError::DivisionByZero {
                            expr: String::new(),
                        });
                    }
                    let d1 = if n == 1 { 1.0 } else { 0.0 };
                    let d2 = if n == 2 { 2.0 } else { 0.0 };
                    return Ok(self.chain(0.0, d1, d2));
                }
                let nf = f64::from(n);
                Ok(self.chain(
                    self.value.powi(n),
                    nf * self.value.powi(n - 1),
                    nf * (nf - 1.0) * self.value.powi(n - 2),
                ))
            }
        }
    }

    /// Maximum asymmetry of the Hessian; zero up to round-off by
    /// construction.
    pub fn hess_asymmetry(&self) -> f64 {
        let k = self.hess.nrows();
        let mut worst = 0.0f64;
        for i in 0..k {
            for j in (i + 1)..k {
                worst = worst.max((self.hess[(i, j)] - self.hess[(j, i)]).abs());
            }
        }
        worst
    }
}

fn tag(err: EvalError, node: &ExprNode) -> EvalError {
    let rendered = node.to_string();
    match err {
        EvalError::DivisionByZero { .. } => EvalError::DivisionByZero { expr: rendered },
        EvalError::LogDomain { value, .. } => EvalError::LogDomain {
            value,
            expr: rendered,
        },
        EvalError::SqrtDomain { value, .. } => EvalError::SqrtDomain {
            value,
            expr: rendered,
        },
        other => other,
    }
}

/// Evaluate an expression with the given jets bound to its variables.
/// Composition through already-evaluated jets gives the chain rule for
/// free, so this doubles as the composition operator.
pub fn eval_with(expr: &ExprNode, vars: &[Jet2]) -> Result<Jet2, EvalError> {
    let k = vars.first().map(Jet2::arity).unwrap_or(0);
    match expr {
        ExprNode::Const(v) => Ok(Jet2::constant(*v, k)),
        ExprNode::Var(i) => vars.get(*i).cloned().ok_or(EvalError::VarOutOfRange {
            index: *i,
            arity: vars.len(),
        }),
        ExprNode::Add(a, b) => Ok(eval_with(a, vars)?.add(&eval_with(b, vars)?)),
        ExprNode::Sub(a, b) => Ok(eval_with(a, vars)?.sub(&eval_with(b, vars)?)),
        ExprNode::Mul(a, b) => Ok(eval_with(a, vars)?.mul(&eval_with(b, vars)?)),
        ExprNode::Div(a, b) => eval_with(a, vars)?
            .div(&eval_with(b, vars)?)
            .map_err(|e| tag(e, expr)),
        ExprNode::Pow(a, n) => eval_with(a, vars)?.powi(*n).map_err(|e| tag(e, expr)),
        ExprNode::Neg(a) => Ok(eval_with(a, vars)?.neg()),
        ExprNode::Unary(f, a) => {
            let inner = eval_with(a, vars)?;
            match f {
                UnaryFn::Sin => Ok(inner.sin()),
                UnaryFn::Cos => Ok(inner.cos()),
                UnaryFn::Tan => Ok(inner.tan()),
                UnaryFn::Exp => Ok(inner.exp()),
                UnaryFn::Log => inner.log().map_err(|e| tag(e, expr)),
                UnaryFn::Sqrt => inner.sqrt().map_err(|e| tag(e, expr)),
            }
        }
    }
}

/// Evaluate value, gradient and Hessian of `expr` at `point`.
pub fn eval_jet2(expr: &ExprNode, point: &[f64]) -> Result<Jet2, EvalError> {
    if let Some(max) = expr.max_var() {
        if max >= point.len() {
            return Err(EvalError::VarOutOfRange {
                index: max,
                arity: point.len(),
            });
        }
    }
    let k = point.len();
    let vars: Vec<Jet2> = point
        .iter()
        .enumerate()
        .map(|(i, &x)| Jet2::variable(x, i, k))
        .collect();
    eval_with(expr, &vars)
}

/// Value-only evaluation; used for exclusion predicates, sampling and
/// finite-difference probes where jets would be wasted.
pub fn eval_value(expr: &ExprNode, point: &[f64]) -> Result<f64, EvalError> {
    match expr {
        ExprNode::Const(v) => Ok(*v),
        ExprNode::Var(i) => point.get(*i).copied().ok_or(EvalError::VarOutOfRange {
            index: *i,
            arity: point.len(),
        }),
        ExprNode::Add(a, b) => Ok(eval_value(a, point)? + eval_value(b, point)?),
        ExprNode::Sub(a, b) => Ok(eval_value(a, point)? - eval_value(b, point)?),
        ExprNode::Mul(a, b) => Ok(eval_value(a, point)? * eval_value(b, point)?),
        ExprNode::Div(a, b) => {
            let d = eval_value(b, point)?;
            if d == 0.0 {
                return Err(EvalError::DivisionByZero {
                    expr: expr.to_string(),
                });
            }
            Ok(eval_value(a, point)? / d)
        }
        ExprNode::Pow(a, n) => {
            let base = eval_value(a, point)?;
            if base == 0.0 && *n < 0 {
                return Err(EvalError::DivisionByZero {
                    expr: expr.to_string(),
                });
            }
            Ok(base.powi(*n))
        }
        ExprNode::Neg(a) => Ok(-eval_value(a, point)?),
        ExprNode::Unary(f, a) => {
            let x = eval_value(a, point)?;
            match f {
                UnaryFn::Log if x <= 0.0 => Err(EvalError::LogDomain {
                    value: x,
                    expr: expr.to_string(),
                }),
                UnaryFn::Sqrt if x < 0.0 => Err(EvalError::SqrtDomain {
                    value: x,
                    expr: expr.to_string(),
                }),
                _ => Ok(f.apply(x)),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numjet::expr::parse_expr_named;
    use proptest::prelude::*;

    fn jet(src: &str, vars: &[&str], point: &[f64]) -> Jet2 {
        let e = parse_expr_named(src, vars).unwrap();
        eval_jet2(&e, point).unwrap()
    }

    /// Central finite differences of the expression value, used as the
    /// independent oracle for jet gradients and Hessians.
    fn fd_grad_hess(src: &str, vars: &[&str], point: &[f64], h: f64) -> (DVector<f64>, DMatrix<f64>) {
        let e = parse_expr_named(src, vars).unwrap();
        let k = point.len();
        let f = |p: &[f64]| eval_value(&e, p).unwrap();
        let mut grad = DVector::zeros(k);
        let mut hess = DMatrix::zeros(k, k);
        let base = f(point);
        for i in 0..k {
            let mut pp = point.to_vec();
            let mut pm = point.to_vec();
            pp[i] += h;
            pm[i] -= h;
            grad[i] = (f(&pp) - f(&pm)) / (2.0 * h);
            hess[(i, i)] = (f(&pp) - 2.0 * base + f(&pm)) / (h * h);
        }
        for i in 0..k {
            for j in (i + 1)..k {
                let mut ppp = point.to_vec();
                let mut ppm = point.to_vec();
                let mut pmp = point.to_vec();
                let mut pmm = point.to_vec();
                ppp[i] += h;
                ppp[j] += h;
                ppm[i] += h;
                ppm[j] -= h;
                pmp[i] -= h;
                pmp[j] += h;
                pmm[i] -= h;
                pmm[j] -= h;
                let mixed = (f(&ppp) - f(&ppm) - f(&pmp) + f(&pmm)) / (4.0 * h * h);
                hess[(i, j)] = mixed;
                hess[(j, i)] = mixed;
            }
        }
        (grad, hess)
    }

    #[test]
    fn bilinear_product() {
        let j = jet("u*v", &["u", "v"], &[2.0, 3.0]);
        assert_eq!(j.value, 6.0);
        assert_eq!(j.grad[0], 3.0);
        assert_eq!(j.grad[1], 2.0);
        assert_eq!(j.hess[(0, 1)], 1.0);
        assert_eq!(j.hess[(0, 0)], 0.0);
    }

    #[test]
    fn sine_at_zero() {
        let j = jet("sin(u)", &["u"], &[0.0]);
        assert_eq!(j.value, 0.0);
        assert_eq!(j.grad[0], 1.0);
        assert_eq!(j.hess[(0, 0)], 0.0);
    }

    #[test]
    fn product_cosine_matches_finite_differences() {
        let point = [1.0, 2.0];
        let j = jet("t*cos(w)", &["w", "t"], &point);
        let (grad, hess) = fd_grad_hess("t*cos(w)", &["w", "t"], &point, 1e-5);
        for i in 0..2 {
            let denom = grad[i].abs().max(1.0);
            assert!((j.grad[i] - grad[i]).abs() / denom < 1e-5);
            for l in 0..2 {
                let denom = hess[(i, l)].abs().max(1.0);
                assert!((j.hess[(i, l)] - hess[(i, l)]).abs() / denom < 1e-5);
            }
        }
    }

    #[test]
    fn mixed_expression_matches_finite_differences() {
        let vars = ["u", "v", "w"];
        let src = "exp(u)*sin(v)/(1+w^2)+sqrt(u+3)*tan(v/4)";
        let point = [0.3, 0.7, -0.4];
        let j = jet(src, &vars, &point);
        let (grad, hess) = fd_grad_hess(src, &vars, &point, 1e-5);
        for i in 0..3 {
            assert!((j.grad[i] - grad[i]).abs() / grad[i].abs().max(1.0) < 1e-5);
            for l in 0..3 {
                let d = (j.hess[(i, l)] - hess[(i, l)]).abs();
                assert!(d / hess[(i, l)].abs().max(1.0) < 1e-5, "({i},{l}): {d}");
            }
        }
    }

    #[test]
    fn quotient_hessian_is_symmetric() {
        let j = jet("u/(v+2)", &["u", "v"], &[1.3, 0.4]);
        assert!(j.hess_asymmetry() == 0.0);
    }

    #[test]
    fn log_of_nonpositive_reports_subexpression() {
        let e = parse_expr_named("log(u-2)", &["u"]).unwrap();
        match eval_jet2(&e, &[1.0]).unwrap_err() {
            EvalError::LogDomain { value, expr } => {
                assert_eq!(value, -1.0);
                assert!(expr.contains("log"), "{expr}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn division_by_zero_reports_subexpression() {
        let e = parse_expr_named("u/(u-1)", &["u"]).unwrap();
        match eval_jet2(&e, &[1.0]).unwrap_err() {
            EvalError::DivisionByZero { expr } => assert!(expr.contains('/'), "{expr}"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn sqrt_of_negative_is_domain_error() {
        let e = parse_expr_named("sqrt(u)", &["u"]).unwrap();
        assert!(matches!(
            eval_jet2(&e, &[-1.0]).unwrap_err(),
            EvalError::SqrtDomain { .. }
        ));
    }

    #[test]
    fn zero_base_integer_powers() {
        let j = jet("u^3", &["u"], &[0.0]);
        assert_eq!(j.value, 0.0);
        assert_eq!(j.grad[0], 0.0);
        assert_eq!(j.hess[(0, 0)], 0.0);
        let j = jet("u^2", &["u"], &[0.0]);
        assert_eq!(j.hess[(0, 0)], 2.0);
        let e = parse_expr_named("u^-1", &["u"]).unwrap();
        assert!(matches!(
            eval_jet2(&e, &[0.0]).unwrap_err(),
            EvalError::DivisionByZero { .. }
        ));
    }

    #[test]
    fn acos_jet_matches_derivative() {
        let x = Jet2::variable(0.3, 0, 1);
        let a = x.acos().unwrap();
        assert!((a.value - 0.3f64.acos()).abs() < 1e-15);
        assert!((a.grad[0] + 1.0 / (1.0 - 0.09f64).sqrt()).abs() < 1e-12);
    }

    proptest! {
        /// Jet arithmetic is exact on quadratic polynomials: the Hessian of
        /// c0 + c1 u + c2 v + c3 u^2 + c4 u v + c5 v^2 is analytic.
        #[test]
        fn quadratic_polynomials_are_exact(
            c in proptest::array::uniform6(-5.0f64..5.0),
            p in proptest::array::uniform2(-3.0f64..3.0),
        ) {
            use ExprNode as E;
            let u = || E::var(0);
            let v = || E::var(1);
            let expr = E::constant(c[0])
                + E::constant(c[1]) * u()
                + E::constant(c[2]) * v()
                + E::constant(c[3]) * u() * u()
                + E::constant(c[4]) * u() * v()
                + E::constant(c[5]) * v() * v();
            let j = eval_jet2(&expr, &p).unwrap();
            let expect_value = c[0] + c[1]*p[0] + c[2]*p[1] + c[3]*p[0]*p[0]
                + c[4]*p[0]*p[1] + c[5]*p[1]*p[1];
            prop_assert!((j.value - expect_value).abs() < 1e-12);
            prop_assert!((j.grad[0] - (c[1] + 2.0*c[3]*p[0] + c[4]*p[1])).abs() < 1e-12);
            prop_assert!((j.grad[1] - (c[2] + 2.0*c[5]*p[1] + c[4]*p[0])).abs() < 1e-12);
            prop_assert!((j.hess[(0,0)] - 2.0*c[3]).abs() < 1e-12);
            prop_assert!((j.hess[(1,1)] - 2.0*c[5]).abs() < 1e-12);
            prop_assert!((j.hess[(0,1)] - c[4]).abs() < 1e-12);
            prop_assert!(j.hess_asymmetry() == 0.0);
        }
    }
}
