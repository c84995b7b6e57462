//! Covariance Matrix Adaptation Evolution Strategy with an ask/tell interface.
//!
//! Fitness is maximized; internally the strategy ranks by `-fitness` and
//! applies the standard rank-one plus rank-mu covariance update with
//! cumulative step-size adaptation. Strategy constants follow Hansen's
//! default parameterization.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeds::Rng;

/// Smallest eigenvalue kept in the covariance matrix.
pub const EIGEN_FLOOR: f64 = 1e-14;

#[derive(Debug, Error, PartialEq)]
pub enum CmaError {
    #[error("generation budget of {0} exhausted")]
    BudgetExhausted(usize),
    #[error("fitness of sample {index} is not finite ({value})")]
    NonFiniteFitness { index: usize, value: f64 },
    #[error("expected {expected} entries, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("no generation has been told yet")]
    NoIncumbent,
    #[error("invalid CMA-ES configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CmaConfig {
    pub population: usize,
    pub max_generations: usize,
    pub initial_sigma: f64,
    /// Per-coordinate `[lo, hi]`; infinite bounds are allowed.
    pub bounds: Vec<(f64, f64)>,
}

impl CmaConfig {
    /// The textbook population size `4 + floor(3 ln n)`.
    pub fn default_population(n: usize) -> usize {
        4 + (3.0 * (n.max(1) as f64).ln()).floor() as usize
    }

    pub fn unbounded(
        n: usize,
        population: usize,
        max_generations: usize,
        initial_sigma: f64,
    ) -> Self {
        Self {
            population,
            max_generations,
            initial_sigma,
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); n],
        }
    }

    fn validate(&self, n: usize) -> Result<(), CmaError> {
        if n == 0 {
            return Err(CmaError::InvalidConfig("dimension must be positive".into()));
        }
        if self.population < 2 {
            return Err(CmaError::InvalidConfig(format!(
                "population {} < 2",
                self.population
            )));
        }
        if self.max_generations == 0 {
            return Err(CmaError::InvalidConfig(
                "max_generations must be positive".into(),
            ));
        }
        if !(self.initial_sigma > 0.0 && self.initial_sigma.is_finite()) {
            return Err(CmaError::InvalidConfig(format!(
                "initial sigma {} must be > 0",
                self.initial_sigma
            )));
        }
        if self.bounds.len() != n {
            return Err(CmaError::SizeMismatch {
                expected: n,
                got: self.bounds.len(),
            });
        }
        // Negated so that NaN bounds are rejected too.
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        let bad = self.bounds.iter().position(|(lo, hi)| !(lo < hi));
        if let Some(i) = bad {
            return Err(CmaError::InvalidConfig(format!("bound {i} has lo >= hi")));
        }
        Ok(())
    }
}

/// One row of the optional convergence trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub generation: usize,
    pub sigma: f64,
    pub best_fitness: f64,
}

pub fn trace_csv(rows: &[TraceRow]) -> String {
    let mut out = String::from("generation,sigma,best_fitness\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.generation, r.sigma, r.best_fitness);
    }
    out
}

#[derive(Clone, Debug)]
pub struct CmaState {
    n: usize,
    mean: DVector<f64>,
    sigma: f64,
    cov: DMatrix<f64>,
    p_sigma: DVector<f64>,
    p_c: DVector<f64>,
    generation: usize,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
    basis: DMatrix<f64>,
    axis_scales: DVector<f64>,
    population: usize,
    max_generations: usize,
    bounds: Vec<(f64, f64)>,
    best: Option<(Vec<f64>, f64)>,
}

impl CmaState {
    pub fn new(mean: &[f64], config: &CmaConfig) -> Result<Self, CmaError> {
        Self::with_scales(mean, &vec![config.initial_sigma; mean.len()], config)
    }

    /// Initial per-coordinate standard deviations `std`; the global step size
    /// is `config.initial_sigma` and `C` starts diagonal with `(std/sigma)^2`.
    pub fn with_scales(mean: &[f64], std: &[f64], config: &CmaConfig) -> Result<Self, CmaError> {
        let n = mean.len();
        config.validate(n)?;
        if std.len() != n {
            return Err(CmaError::SizeMismatch {
                expected: n,
                got: std.len(),
            });
        }
        if std.iter().any(|s| !(*s > 0.0 && s.is_finite())) || mean.iter().any(|m| !m.is_finite()) {
            return Err(CmaError::InvalidConfig(
                "mean must be finite and scales positive".into(),
            ));
        }
        let lambda = config.population;
        let mu = lambda / 2;
        let raw: Vec<f64> = (0..mu)
            .map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - ((i + 1) as f64).ln())
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let nf = n as f64;
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu =
            (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));

        let sigma = config.initial_sigma;
        let diag = DVector::from_iterator(n, std.iter().map(|s| (s / sigma).powi(2)));
        let mut state = Self {
            n,
            mean: DVector::from_column_slice(mean),
            sigma,
            cov: DMatrix::from_diagonal(&diag),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            generation: 0,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            basis: DMatrix::identity(n, n),
            axis_scales: DVector::from_element(n, 1.0),
            population: lambda,
            max_generations: config.max_generations,
            bounds: config.bounds.clone(),
            best: None,
        };
        state.decompose();
        Ok(state)
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> &[f64] {
        self.mean.as_slice()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn generation(&self) -> usize {
        self.generation
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mu_eff(&self) -> f64 {
        self.mu_eff
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        self.axis_scales.iter().map(|d| d * d).collect()
    }

    pub fn condition_number(&self) -> f64 {
        let ev = self.eigenvalues();
        let max = ev.iter().copied().fold(f64::MIN, f64::max);
        let min = ev.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }

    pub fn is_exhausted(&self) -> bool {
        self.generation >= self.max_generations
    }

    fn decompose(&mut self) {
        let sym = (&self.cov + self.cov.transpose()) * 0.5;
        let eig = SymmetricEigen::new(sym);
        let floored = eig.eigenvalues.map(|v| {
            if v.is_finite() {
                v.max(EIGEN_FLOOR)
            } else {
                EIGEN_FLOOR
            }
        });
        let b = eig.eigenvectors;
        let c = &b * DMatrix::from_diagonal(&floored) * b.transpose();
        self.cov = (&c + c.transpose()) * 0.5;
        self.axis_scales = floored.map(f64::sqrt);
        self.basis = b;
    }

    fn in_bounds(&self, x: &DVector<f64>) -> bool {
        x.iter()
            .zip(&self.bounds)
            .all(|(v, (lo, hi))| *v >= *lo && *v <= *hi)
    }

    fn draw(&self, rng: &mut Rng) -> DVector<f64> {
        let z = DVector::from_iterator(self.n, (0..self.n).map(|_| StandardNormal.sample(rng)));
        let y = &self.basis * z.component_mul(&self.axis_scales);
        &self.mean + y * self.sigma
    }

    /// Samples one generation. Out-of-bounds draws are redrawn once, then clamped.
    pub fn ask(&self, rng: &mut Rng) -> Result<Vec<Vec<f64>>, CmaError> {
        if self.is_exhausted() {
            return Err(CmaError::BudgetExhausted(self.max_generations));
        }
        Ok((0..self.population)
            .map(|_| {
                let mut x = self.draw(rng);
                if !self.in_bounds(&x) {
                    x = self.draw(rng);
                    if !self.in_bounds(&x) {
                        for (v, (lo, hi)) in x.iter_mut().zip(&self.bounds) {
                            *v = v.clamp(*lo, *hi);
                        }
                    }
                }
                x.as_slice().to_vec()
            })
            .collect())
    }

    /// Updates the search distribution from one evaluated generation.
    pub fn tell(&mut self, samples: &[Vec<f64>], fitness: &[f64]) -> Result<(), CmaError> {
        if samples.len() != self.population {
            return Err(CmaError::SizeMismatch {
                expected: self.population,
                got: samples.len(),
            });
        }
        if fitness.len() != self.population {
            return Err(CmaError::SizeMismatch {
                expected: self.population,
                got: fitness.len(),
            });
        }
        if let Some(s) = samples.iter().find(|s| s.len() != self.n) {
            return Err(CmaError::SizeMismatch {
                expected: self.n,
                got: s.len(),
            });
        }
        if let Some(index) = fitness.iter().position(|f| !f.is_finite()) {
            return Err(CmaError::NonFiniteFitness {
                index,
                value: fitness[index],
            });
        }

        let mut order: Vec<usize> = (0..self.population).collect();
        order.sort_by(|&a, &b| fitness[b].total_cmp(&fitness[a]));

        let top = order[0];
        if self.best.as_ref().is_none_or(|(_, f)| fitness[top] > *f) {
            self.best = Some((samples[top].clone(), fitness[top]));
        }

        let n = self.n as f64;
        let old_mean = self.mean.clone();
        let steps: Vec<DVector<f64>> = order
            .iter()
            .take(self.weights.len())
            .map(|&i| (DVector::from_column_slice(&samples[i]) - &old_mean) / self.sigma)
            .collect();
        let mut y_w = DVector::zeros(self.n);
        for (w, y) in self.weights.iter().zip(&steps) {
            y_w += y * *w;
        }
        self.mean = &old_mean + &y_w * self.sigma;

        // C^{-1/2} y_w = B D^{-1} B^T y_w
        let inv_sqrt_y =
            &self.basis * (self.basis.transpose() * &y_w).component_div(&self.axis_scales);
        self.p_sigma = &self.p_sigma * (1.0 - self.c_sigma)
            + inv_sqrt_y * (self.c_sigma * (2.0 - self.c_sigma) * self.mu_eff).sqrt();
        let ps_norm = self.p_sigma.norm();
        let decay = 1.0 - (1.0 - self.c_sigma).powi(2 * (self.generation as i32 + 1));
        let h_sigma = ps_norm / decay.sqrt() / self.chi_n < 1.4 + 2.0 / (n + 1.0);
        let h = if h_sigma { 1.0 } else { 0.0 };
        self.p_c = &self.p_c * (1.0 - self.c_c)
            + &y_w * (h * (self.c_c * (2.0 - self.c_c) * self.mu_eff).sqrt());

        let delta_h = (1.0 - h) * self.c_c * (2.0 - self.c_c);
        let mut rank_mu = DMatrix::zeros(self.n, self.n);
        for (w, y) in self.weights.iter().zip(&steps) {
            rank_mu += y * y.transpose() * *w;
        }
        let rank_one = &self.p_c * self.p_c.transpose() + &self.cov * delta_h;
        self.cov =
            &self.cov * (1.0 - self.c_1 - self.c_mu) + rank_one * self.c_1 + rank_mu * self.c_mu;

        self.sigma *= ((self.c_sigma / self.d_sigma) * (ps_norm / self.chi_n - 1.0)).exp();
        self.decompose();
        self.generation += 1;
        Ok(())
    }

    /// Best-ever sample and its fitness.
    pub fn best(&self) -> Result<(&[f64], f64), CmaError> {
        self.best
            .as_ref()
            .map(|(x, f)| (x.as_slice(), *f))
            .ok_or(CmaError::NoIncumbent)
    }

    pub fn trace_row(&self) -> TraceRow {
        TraceRow {
            generation: self.generation,
            sigma: self.sigma,
            best_fitness: self.best.as_ref().map(|b| b.1).unwrap_or(f64::NEG_INFINITY),
        }
    }
}
