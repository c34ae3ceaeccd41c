//! Damped Gauss-Newton (Levenberg-Marquardt) for small dense problems.

use nalgebra::{DMatrix, DVector};

/// A nonlinear least-squares problem `min ½ Σ r_i(p)²`.
pub trait LeastSquaresProblem {
    fn num_params(&self) -> usize;

    fn residuals(&self, params: &[f64]) -> Vec<f64>;

    /// Analytic Jacobian `∂r_i/∂p_j` (rows = residuals). `None` falls back to
    /// central finite differences.
    fn jacobian(&self, _params: &[f64]) -> Option<DMatrix<f64>> {
        None
    }

    /// Typical residual magnitude (e.g. the data norm), used as a floor when
    /// scaling the gradient so exact fits register as converged.
    fn residual_scale(&self) -> f64 {
        0.0
    }
}

/// Central-difference Jacobian.
pub fn finite_difference_jacobian<P: LeastSquaresProblem + ?Sized>(problem: &P, params: &[f64]) -> DMatrix<f64> {
    let m = problem.residuals(params).len();
    let n = params.len();
    let mut jac = DMatrix::zeros(m, n);
    let mut probe = params.to_vec();
    for j in 0..n {
        let h = 1e-6 * params[j].abs().max(1e-3);
        probe[j] = params[j] + h;
        let up = problem.residuals(&probe);
        probe[j] = params[j] - h;
        let down = problem.residuals(&probe);
        probe[j] = params[j];
        for i in 0..m {
            jac[(i, j)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    jac
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevenbergMarquardt {
    pub max_iterations: usize,
    /// Scaled gradient tolerance: max_j |J_jᵀ r| / (‖J_j‖ max(‖r‖, ‖r₀‖, s)),
    /// where r₀ are the residuals at the initial guess and `s` the problem's
    /// [`LeastSquaresProblem::residual_scale`].
    pub gradient_tolerance: f64,
    pub initial_damping: f64,
}

impl Default for LevenbergMarquardt {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            gradient_tolerance: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport {
    pub params: Vec<f64>,
    pub residuals: Vec<f64>,
    /// ½ Σ r² at the returned parameters.
    pub objective: f64,
    pub initial_objective: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Gauss-Newton normal matrix JᵀJ at the solution.
    pub normal_matrix: DMatrix<f64>,
}

fn half_sum_sq(r: &[f64]) -> f64 {
    0.5 * r.iter().map(|x| x * x).sum::<f64>()
}

fn scaled_gradient(jac: &DMatrix<f64>, r: &DVector<f64>, r0_norm: f64) -> f64 {
    let r_norm = r.norm().max(r0_norm);
    if r_norm == 0.0 {
        return 0.0;
    }
    (0..jac.ncols())
        .map(|j| {
            let col = jac.column(j);
            let c = col.norm();
            if c == 0.0 {
                0.0
            } else {
                col.dot(r).abs() / (c * r_norm)
            }
        })
        .fold(0.0, f64::max)
}

impl LevenbergMarquardt {
    pub fn minimize<P: LeastSquaresProblem + ?Sized>(&self, problem: &P, initial: &[f64]) -> LmReport {
        let n = problem.num_params();
        assert_eq!(initial.len(), n, "initial guess has wrong dimension");
        let jacobian = |p: &[f64]| problem.jacobian(p).unwrap_or_else(|| finite_difference_jacobian(problem, p));

        let mut params = initial.to_vec();
        let mut r = problem.residuals(&params);
        let initial_objective = half_sum_sq(&r);
        let r0_norm = (2.0 * initial_objective).sqrt().max(problem.residual_scale());
        let mut objective = initial_objective;
        let mut jac = jacobian(&params);
        let mut lambda = self.initial_damping;
        let mut iterations = 0;
        let mut converged = false;

        while iterations < self.max_iterations {
            let rv = DVector::from_column_slice(&r);
            if scaled_gradient(&jac, &rv, r0_norm) < self.gradient_tolerance {
                converged = true;
                break;
            }
            iterations += 1;
            let jtj = jac.transpose() * &jac;
            let jtr = jac.transpose() * &rv;
            let mut improved = false;
            for _ in 0..40 {
                let mut a = jtj.clone();
                for k in 0..n {
                    a[(k, k)] += lambda * jtj[(k, k)].max(1e-300);
                }
                let Some(step) = a.lu().solve(&(-&jtr)) else {
                    lambda *= 10.0;
                    continue;
                };
                let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, s)| p + s).collect();
                let r_trial = problem.residuals(&trial);
                let obj_trial = half_sum_sq(&r_trial);
                if obj_trial.is_finite() && obj_trial < objective {
                    params = trial;
                    r = r_trial;
                    objective = obj_trial;
                    lambda = (lambda / 10.0).max(1e-15);
                    improved = true;
                    break;
                }
                // Near the minimum the objective stops resolving progress; accept
                // rounding-level ties that still shrink the gradient.
                if obj_trial.is_finite() && obj_trial <= objective * (1.0 + 1e-14) && obj_trial <= initial_objective {
                    let jac_trial = jacobian(&trial);
                    let g_trial = scaled_gradient(&jac_trial, &DVector::from_column_slice(&r_trial), r0_norm);
                    if g_trial < 0.5 * scaled_gradient(&jac, &rv, r0_norm) {
                        params = trial;
                        r = r_trial;
                        objective = obj_trial;
                        jac = jac_trial;
                        improved = true;
                        break;
                    }
                }
                lambda *= 10.0;
            }
            if !improved {
                break;
            }
            jac = jacobian(&params);
        }
        let rv = DVector::from_column_slice(&r);
        let gradient_norm = scaled_gradient(&jac, &rv, r0_norm);
        if !converged && gradient_norm < self.gradient_tolerance {
            converged = true;
        }
        LmReport {
            normal_matrix: jac.transpose() * &jac,
            params,
            residuals: r,
            objective,
            initial_objective,
            gradient_norm,
            iterations,
            converged,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Rosenbrock;

    impl LeastSquaresProblem for Rosenbrock {
        fn num_params(&self) -> usize {
            2
        }
        fn residuals(&self, p: &[f64]) -> Vec<f64> {
            vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]]
        }
    }

    struct Line {
        xs: Vec<f64>,
        ys: Vec<f64>,
    }

    impl LeastSquaresProblem for Line {
        fn num_params(&self) -> usize {
            2
        }
        fn residuals(&self, p: &[f64]) -> Vec<f64> {
            self.xs.iter().zip(&self.ys).map(|(x, y)| p[0] * x + p[1] - y).collect()
        }
        fn jacobian(&self, _p: &[f64]) -> Option<DMatrix<f64>> {
            Some(DMatrix::from_fn(self.xs.len(), 2, |i, j| if j == 0 { self.xs[i] } else { 1.0 }))
        }
    }

    #[test]
    fn solves_rosenbrock() {
        let rep = LevenbergMarquardt::default().minimize(&Rosenbrock, &[-1.2, 1.0]);
        assert!(rep.converged);
        assert!((rep.params[0] - 1.0).abs() < 1e-8);
        assert!((rep.params[1] - 1.0).abs() < 1e-8);
        assert!(rep.objective <= rep.initial_objective);
    }

    #[test]
    fn noisy_line_converges_at_stationary_point() {
        let xs: Vec<f64> = (0..20).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().enumerate().map(|(i, x)| 2.0 * x + 1.0 + if i % 2 == 0 { 0.1 } else { -0.1 }).collect();
        let rep = LevenbergMarquardt::default().minimize(&Line { xs, ys }, &[0.0, 0.0]);
        assert!(rep.converged);
        assert!(rep.gradient_norm < 1e-10);
    }

    #[test]
    fn finite_difference_matches_analytic() {
        let l = Line { xs: vec![1.0, 2.0, 5.0], ys: vec![0.0; 3] };
        let a = l.jacobian(&[0.3, 0.4]).unwrap();
        let f = finite_difference_jacobian(&l, &[0.3, 0.4]);
        assert!((a - f).abs().max() < 1e-8);
    }
}
