//! Covariance Matrix Adaptation Evolution Strategy with cumulative step-size
//! adaptation and rank-1 / rank-μ covariance updates.
//!
//! The state maximises: higher fitness is better. Use [`minimize`] for the
//! usual minimisation convention.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, SimRng};

/// Default population size `4 + ⌊3 ln n⌋`.
pub fn default_population(n: usize) -> usize {
    4 + (3.0 * (n.max(1) as f64).ln()).floor() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CmaesConfig {
    /// Population size; `None` selects the default.
    #[serde(default)]
    pub population: Option<usize>,
    /// Initial step size in metres (planner) or objective units.
    #[serde(default = "default_sigma0")]
    pub sigma0: f64,
    #[serde(default = "default_max_evals")]
    pub max_evals: usize,
    /// Generations without incumbent improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
}

fn default_sigma0() -> f64 {
    0.5
}
fn default_max_evals() -> usize {
    1000
}
fn default_patience() -> usize {
    20
}

impl Default for CmaesConfig {
    fn default() -> Self {
        Self { population: None, sigma0: default_sigma0(), max_evals: default_max_evals(), patience: default_patience() }
    }
}

#[derive(Debug, Clone)]
pub struct CmaesState {
    pub dim: usize,
    pub mean: DVector<f64>,
    pub sigma: f64,
    pub cov: DMatrix<f64>,
    pub p_sigma: DVector<f64>,
    pub p_c: DVector<f64>,
    pub population: usize,
    pub generation: usize,
    pub best_x: DVector<f64>,
    pub best_f: f64,
    weights: Vec<f64>,
    mu_eff: f64,
    c_sigma: f64,
    d_sigma: f64,
    c_c: f64,
    c_1: f64,
    c_mu: f64,
    chi_n: f64,
    basis: DMatrix<f64>,
    scales: DVector<f64>,
    rng: SimRng,
}

impl CmaesState {
    pub fn init(mean: &[f64], sigma0: f64, population: Option<usize>, seed: u64) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::InvalidArgument("dimension must be at least 1".into()));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("initial mean is not finite".into()));
        }
        if !(sigma0 > 0.0 && sigma0.is_finite()) {
            return Err(Error::InvalidArgument(format!("sigma0 must be positive, got {sigma0}")));
        }
        let lambda = population.unwrap_or_else(|| default_population(n));
        if lambda < 2 {
            return Err(Error::InvalidArgument("population must be at least 2".into()));
        }
        let mu = lambda / 2;
        let raw: Vec<f64> = (1..=mu).map(|i| ((lambda as f64 + 1.0) / 2.0).ln() - (i as f64).ln()).collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        let mu_eff = 1.0 / weights.iter().map(|w| w * w).sum::<f64>();
        let nf = n as f64;
        let c_sigma = (mu_eff + 2.0) / (nf + mu_eff + 5.0);
        let d_sigma = 1.0 + 2.0 * (((mu_eff - 1.0) / (nf + 1.0)).sqrt() - 1.0).max(0.0) + c_sigma;
        let c_c = (4.0 + mu_eff / nf) / (nf + 4.0 + 2.0 * mu_eff / nf);
        let c_1 = 2.0 / ((nf + 1.3).powi(2) + mu_eff);
        let c_mu = (1.0 - c_1).min(2.0 * (mu_eff - 2.0 + 1.0 / mu_eff) / ((nf + 2.0).powi(2) + mu_eff));
        let chi_n = nf.sqrt() * (1.0 - 1.0 / (4.0 * nf) + 1.0 / (21.0 * nf * nf));
        let m = DVector::from_column_slice(mean);
        Ok(Self {
            dim: n,
            best_x: m.clone(),
            mean: m,
            sigma: sigma0,
            cov: DMatrix::identity(n, n),
            p_sigma: DVector::zeros(n),
            p_c: DVector::zeros(n),
            population: lambda,
            generation: 0,
            best_f: f64::NEG_INFINITY,
            weights,
            mu_eff,
            c_sigma,
            d_sigma,
            c_c,
            c_1,
            c_mu,
            chi_n,
            basis: DMatrix::identity(n, n),
            scales: DVector::from_element(n, 1.0),
            rng: seed::rng(seed),
        })
    }

    pub fn mu(&self) -> usize {
        self.weights.len()
    }

    /// Samples `λ` candidates `m + σ B D z`.
    pub fn ask(&mut self) -> Vec<DVector<f64>> {
        let n = self.dim;
        (0..self.population)
            .map(|_| {
                let z = DVector::from_iterator(n, (0..n).map(|_| StandardNormal.sample(&mut self.rng)));
                let y = &self.basis * z.component_mul(&self.scales);
                &self.mean + y * self.sigma
            })
            .collect()
    }

    /// Updates the distribution from evaluated candidates. Non-finite
    /// fitnesses are discarded.
    pub fn tell(&mut self, candidates: &[DVector<f64>], fitness: &[f64]) -> Result<()> {
        if candidates.len() != self.population || fitness.len() != self.population {
            return Err(Error::InvalidArgument(format!(
                "expected {} candidates and fitnesses, got {} and {}",
                self.population,
                candidates.len(),
                fitness.len()
            )));
        }
        let mut order: Vec<usize> = (0..fitness.len()).filter(|&i| fitness[i].is_finite()).collect();
        if order.is_empty() {
            return Err(Error::AllFitnessNonFinite { generation: self.generation });
        }
        // stable sort keeps ties in sampling order
        order.sort_by(|&a, &b| fitness[b].partial_cmp(&fitness[a]).unwrap());
        if fitness[order[0]] > self.best_f {
            self.best_f = fitness[order[0]];
            self.best_x = candidates[order[0]].clone();
        }

        let selected = order.len().min(self.mu());
        let wsum: f64 = self.weights[..selected].iter().sum();
        let weights: Vec<f64> = self.weights[..selected].iter().map(|w| w / wsum).collect();

        let n = self.dim;
        let old_mean = self.mean.clone();
        let steps: Vec<DVector<f64>> =
            order[..selected].iter().map(|&i| (&candidates[i] - &old_mean) / self.sigma).collect();
        let mut y_w = DVector::zeros(n);
        for (w, y) in weights.iter().zip(&steps) {
            y_w += y * *w;
        }
        self.mean = &old_mean + &y_w * self.sigma;

        let inv_sqrt = &self.basis * DMatrix::from_diagonal(&self.scales.map(|d| 1.0 / d)) * self.basis.transpose();
        let cs = self.c_sigma;
        self.p_sigma = &self.p_sigma * (1.0 - cs) + inv_sqrt * &y_w * (cs * (2.0 - cs) * self.mu_eff).sqrt();
        let gen = (self.generation + 1) as f64;
        let ps_norm = self.p_sigma.norm();
        let h_sigma = ps_norm / (1.0 - (1.0 - cs).powf(2.0 * gen)).sqrt() / self.chi_n < 1.4 + 2.0 / (n as f64 + 1.0);
        let hs = if h_sigma { 1.0 } else { 0.0 };
        let cc = self.c_c;
        self.p_c = &self.p_c * (1.0 - cc) + &y_w * (hs * (cc * (2.0 - cc) * self.mu_eff).sqrt());

        let mut rank_mu = DMatrix::zeros(n, n);
        for (w, y) in weights.iter().zip(&steps) {
            rank_mu += y * y.transpose() * *w;
        }
        let rank_one = &self.p_c * self.p_c.transpose() + &self.cov * ((1.0 - hs) * cc * (2.0 - cc));
        self.cov = &self.cov * (1.0 - self.c_1 - self.c_mu) + rank_one * self.c_1 + rank_mu * self.c_mu;
        self.cov = (&self.cov + self.cov.transpose()) * 0.5;

        self.sigma *= ((cs / self.d_sigma) * (ps_norm / self.chi_n - 1.0)).exp();
        self.decompose();
        self.generation += 1;
        Ok(())
    }

    fn decompose(&mut self) {
        let eig = SymmetricEigen::new(self.cov.clone());
        let max = eig.eigenvalues.max().max(f64::MIN_POSITIVE);
        let floor = max * 1e-14;
        let values = eig.eigenvalues.map(|v| v.max(floor));
        if values != eig.eigenvalues {
            self.cov = &eig.eigenvectors * DMatrix::from_diagonal(&values) * eig.eigenvectors.transpose();
            self.cov = (&self.cov + self.cov.transpose()) * 0.5;
        }
        self.scales = values.map(f64::sqrt);
        self.basis = eig.eigenvectors;
    }

    /// Smallest eigenvalue of the covariance.
    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.cov.clone()).eigenvalues.min()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub best_x: Vec<f64>,
    pub best_f: f64,
    pub evals_used: usize,
    pub generations: usize,
}

/// Maximises `objective` until the evaluation budget is spent or the incumbent
/// stagnates for `patience` generations.
pub fn optimize<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    x0: &[f64],
    config: &CmaesConfig,
    seed: u64,
) -> Result<OptimResult> {
    let mut state = CmaesState::init(x0, config.sigma0, config.population, seed)?;
    if config.max_evals < state.population {
        return Err(Error::InvalidArgument(format!(
            "max_evals {} is below the population size {}",
            config.max_evals, state.population
        )));
    }
    let mut evals = 0;
    let mut stale = 0;
    while evals + state.population <= config.max_evals {
        let candidates = state.ask();
        let fitness: Vec<f64> = candidates.iter().map(|c| objective(c.as_slice())).collect();
        evals += candidates.len();
        let before = state.best_f;
        state.tell(&candidates, &fitness)?;
        if state.best_f > before {
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
        if !(state.sigma > 0.0) || !state.sigma.is_finite() {
            break;
        }
    }
    Ok(OptimResult {
        best_x: state.best_x.as_slice().to_vec(),
        best_f: state.best_f,
        evals_used: evals,
        generations: state.generation,
    })
}

/// Minimises `objective` by maximising its negation; `best_f` is reported in
/// the original sign.
pub fn minimize<F: FnMut(&[f64]) -> f64>(
    mut objective: F,
    x0: &[f64],
    config: &CmaesConfig,
    seed: u64,
) -> Result<OptimResult> {
    let mut r = optimize(|x| -objective(x), x0, config, seed)?;
    r.best_f = -r.best_f;
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_population_sizes() {
        assert_eq!(default_population(10), 10);
        assert_eq!(default_population(1), 4);
        assert_eq!(default_population(2), 6);
    }

    #[test]
    fn init_rejects_bad_input() {
        assert!(CmaesState::init(&[f64::NAN], 1.0, None, 0).is_err());
        assert!(CmaesState::init(&[0.0], 0.0, None, 0).is_err());
        assert!(CmaesState::init(&[], 1.0, None, 0).is_err());
    }

    #[test]
    fn same_seed_same_population() {
        let mut a = CmaesState::init(&[1.0, 2.0], 0.3, None, 9).unwrap();
        let mut b = CmaesState::init(&[1.0, 2.0], 0.3, None, 9).unwrap();
        assert_eq!(a.ask(), b.ask());
    }

    #[test]
    fn tiny_sigma_collapses_to_mean() {
        let mut s = CmaesState::init(&[3.0, -1.0], 1e-300, None, 1).unwrap();
        for c in s.ask() {
            assert!((c[0] - 3.0).abs() < 1e-200 && (c[1] + 1.0).abs() < 1e-200);
        }
    }

    #[test]
    fn identical_candidates_keep_mean() {
        let mut s = CmaesState::init(&[1.0, 1.0], 0.5, None, 1).unwrap();
        let c = vec![DVector::from_vec(vec![1.0, 1.0]); s.population];
        s.tell(&c, &vec![0.0; s.population]).unwrap();
        assert_eq!(s.mean.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn all_non_finite_is_error() {
        let mut s = CmaesState::init(&[0.0], 0.5, None, 1).unwrap();
        let c = s.ask();
        let err = s.tell(&c, &vec![f64::NAN; s.population]).unwrap_err();
        assert!(matches!(err, Error::AllFitnessNonFinite { generation: 0 }));
    }

    #[test]
    fn partially_non_finite_generation_still_updates() {
        let mut s = CmaesState::init(&[0.0, 0.0], 0.5, None, 1).unwrap();
        let c = s.ask();
        let mut f: Vec<f64> = c.iter().map(|x| -x.norm_squared()).collect();
        f[0] = f64::INFINITY;
        f[1] = f64::NAN;
        s.tell(&c, &f).unwrap();
        assert!(s.best_f.is_finite());
    }

    #[test]
    fn single_generation_budget() {
        let cfg = CmaesConfig { population: Some(6), max_evals: 6, ..Default::default() };
        let r = optimize(|x| -x[0] * x[0], &[1.0], &cfg, 3).unwrap();
        assert_eq!(r.evals_used, 6);
        assert_eq!(r.generations, 1);
        let mut s = CmaesState::init(&[1.0], cfg.sigma0, Some(6), 3).unwrap();
        let best = s.ask().iter().map(|c| -c[0] * c[0]).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(r.best_f, best);
    }

    #[test]
    fn budget_below_population_rejected() {
        let cfg = CmaesConfig { max_evals: 3, ..Default::default() };
        assert!(optimize(|x| x[0], &[0.0, 0.0], &cfg, 0).is_err());
    }
}
