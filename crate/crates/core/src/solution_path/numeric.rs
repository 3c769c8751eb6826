//! Compiled numeric expressions, symbolic isolation, and damped Newton.

use nalgebra::{DMatrix, DVector};

use crate::expr::{BinOp, EvalError, Func};

/// Arithmetic over network variables, indexed into a value slice.
#[derive(Debug, Clone, PartialEq)]
pub enum Num {
    Const(f64),
    Var(usize),
    Neg(Box<Num>),
    /// One of `+ - * / ^`.
    Bin(BinOp, Box<Num>, Box<Num>),
    Func(Func, Vec<Num>),
}

impl Num {
    pub fn eval(&self, x: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Num::Const(c) => *c,
            Num::Var(i) => x[*i],
            Num::Neg(a) => -a.eval(x)?,
            Num::Bin(op, a, b) => {
                let (p, q) = (a.eval(x)?, b.eval(x)?);
                match op {
                    BinOp::Add => p + q,
                    BinOp::Sub => p - q,
                    BinOp::Mul => p * q,
                    BinOp::Div if q == 0.0 => return Err(EvalError::DivisionByZero),
                    BinOp::Div => p / q,
                    BinOp::Pow => p.powf(q),
                    _ => unreachable!("comparison in numeric expression"),
                }
            }
            Num::Func(f, args) => {
                let vals = args.iter().map(|a| a.eval(x)).collect::<Result<Vec<_>, _>>()?;
                return crate::expr::eval::apply_func(*f, &vals);
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::Domain("arithmetic".into()))
        }
    }

    pub fn collect_vars(&self, out: &mut Vec<usize>) {
        match self {
            Num::Const(_) => {}
            Num::Var(i) => out.push(*i),
            Num::Neg(a) => a.collect_vars(out),
            Num::Bin(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
            Num::Func(_, args) => args.iter().for_each(|a| a.collect_vars(out)),
        }
    }

    pub fn is_constant(&self) -> bool {
        let mut v = Vec::new();
        self.collect_vars(&mut v);
        v.is_empty()
    }

    pub fn occurrences(&self, var: usize) -> usize {
        let mut v = Vec::new();
        self.collect_vars(&mut v);
        v.iter().filter(|&&i| i == var).count()
    }

    /// Whether every operator on the path to the single occurrence of `var`
    /// can be inverted in closed form.
    fn invertible_path(&self, var: usize) -> bool {
        match self {
            Num::Var(i) => *i == var,
            Num::Const(_) => false,
            Num::Neg(a) => a.invertible_path(var),
            Num::Bin(BinOp::Pow, a, b) => b.occurrences(var) == 0 && a.invertible_path(var),
            Num::Bin(_, a, b) => {
                if a.occurrences(var) > 0 {
                    a.invertible_path(var)
                } else {
                    b.invertible_path(var)
                }
            }
            Num::Func(Func::Exp | Func::Ln | Func::Sqrt, args) => args[0].invertible_path(var),
            Num::Func(..) => false,
        }
    }

    /// Solves `self == target` for `var`, which must occur exactly once.
    fn invert(&self, var: usize, target: f64, x: &[f64]) -> Result<f64, EvalError> {
        let domain = |what: &str| Err(EvalError::Domain(format!("inverse of {what}")));
        match self {
            Num::Var(_) => Ok(target),
            Num::Neg(a) => a.invert(var, -target, x),
            Num::Bin(op, a, b) => {
                let in_a = a.occurrences(var) > 0;
                let (inner, other) = if in_a { (a, b.eval(x)?) } else { (b, a.eval(x)?) };
                let t = match (op, in_a) {
                    (BinOp::Add, _) => target - other,
                    (BinOp::Sub, true) => target + other,
                    (BinOp::Sub, false) => other - target,
                    (BinOp::Mul, _) if other == 0.0 => return domain("*"),
                    (BinOp::Mul, _) => target / other,
                    (BinOp::Div, true) => target * other,
                    (BinOp::Div, false) if target == 0.0 => return domain("/"),
                    (BinOp::Div, false) => other / target,
                    (BinOp::Pow, true) => {
                        if other == 0.0 {
                            return domain("^");
                        }
                        let odd = other.fract() == 0.0 && (other as i64) % 2 != 0;
                        if target < 0.0 && odd {
                            -(-target).powf(1.0 / other)
                        } else if target < 0.0 {
                            return domain("^");
                        } else {
                            target.powf(1.0 / other)
                        }
                    }
                    _ => return domain("operator"),
                };
                inner.invert(var, t, x)
            }
            Num::Func(f, args) => {
                let t = match f {
                    Func::Exp if target <= 0.0 => return domain("exp"),
                    Func::Exp => target.ln(),
                    Func::Ln => target.exp(),
                    Func::Sqrt if target < 0.0 => return domain("sqrt"),
                    Func::Sqrt => target * target,
                    _ => return domain(f.name()),
                };
                args[0].invert(var, t, x)
            }
            Num::Const(_) => domain("constant"),
        }
    }
}

/// Relative residual `|l - r| / (1 + |l| + |r|)`.
pub fn relative_residual(l: f64, r: f64) -> f64 {
    (l - r).abs() / (1.0 + l.abs() + r.abs())
}

/// Whether `lhs == rhs` can be solved for `var` by isolation.
pub(crate) fn isolatable(lhs: &Num, rhs: &Num, var: usize) -> bool {
    match (lhs.occurrences(var), rhs.occurrences(var)) {
        (1, 0) => lhs.invertible_path(var),
        (0, 1) => rhs.invertible_path(var),
        _ => false,
    }
}

/// Closed-form solution of `lhs == rhs` for `var`.
pub(crate) fn isolate(lhs: &Num, rhs: &Num, var: usize, x: &[f64]) -> Result<f64, EvalError> {
    if lhs.occurrences(var) == 1 {
        lhs.invert(var, rhs.eval(x)?, x)
    } else {
        rhs.invert(var, lhs.eval(x)?, x)
    }
}

/// Newton iteration limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub min_damping: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) enum NewtonFailure {
    Eval(EvalError),
    Singular,
    Stalled { iterations: usize, residual: f64 },
    MaxIterations { residual: f64 },
}

/// Damped Newton on `f(x) = 0` with a forward-difference Jacobian.
///
/// `residuals` returns `(lhs, rhs)` pairs; convergence is judged on the
/// relative residual of every pair.
pub(crate) fn newton<F>(x0: &[f64], settings: &NewtonSettings, residuals: F) -> Result<Vec<f64>, NewtonFailure>
where
    F: Fn(&[f64]) -> Result<Vec<(f64, f64)>, EvalError>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let eval = |x: &[f64]| -> Result<(Vec<f64>, f64), EvalError> {
        let pairs = residuals(x)?;
        let worst = pairs.iter().map(|&(l, r)| relative_residual(l, r)).fold(0.0, f64::max);
        Ok((pairs.iter().map(|&(l, r)| l - r).collect(), worst))
    };
    let merit = |f: &[f64]| f.iter().map(|v| v * v).sum::<f64>();
    let (mut f, mut worst) = eval(&x).map_err(NewtonFailure::Eval)?;
    // aim well below the acceptance tolerance so the final check has headroom
    let target = settings.tolerance * 1e-3;

    for iter in 0..settings.max_iterations {
        if worst <= target {
            return Ok(x);
        }
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let h = f64::EPSILON.sqrt() * x[j].abs().max(1.0);
            let mut xp = x.clone();
            xp[j] += h;
            let (fp, _) = eval(&xp).map_err(NewtonFailure::Eval)?;
            for i in 0..n {
                jac[(i, j)] = (fp[i] - f[i]) / h;
            }
        }
        let rhs = DVector::from_iterator(n, f.iter().map(|v| -v));
        let step = jac.lu().solve(&rhs).ok_or(NewtonFailure::Singular)?;
        if step.iter().any(|s| !s.is_finite()) {
            return Err(NewtonFailure::Singular);
        }

        let m0 = merit(&f);
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= settings.min_damping {
            let trial: Vec<f64> = x.iter().zip(step.iter()).map(|(xi, si)| xi + lambda * si).collect();
            if let Ok((ft, wt)) = eval(&trial) {
                if merit(&ft) < m0 || wt <= target {
                    x = trial;
                    f = ft;
                    worst = wt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            if worst <= settings.tolerance {
                return Ok(x);
            }
            return Err(NewtonFailure::Stalled {
                iterations: iter + 1,
                residual: worst,
            });
        }
    }
    if worst <= settings.tolerance {
        Ok(x)
    } else {
        Err(NewtonFailure::MaxIterations { residual: worst })
    }
}
