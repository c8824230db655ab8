//! Prior densities and prior samplers for the tree, substitution and indel
//! parameter blocks.

use std::sync::Arc;

use rand::Rng;
use rand_distr::{Beta, Dirichlet, Distribution, Exp, Exp1};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::hky::SubstParams;
use crate::indel::{Geometric, IndelParams, SizeDistribution};
use crate::tree::{ln_topology_count, Tree};

/// How the deletion-size law enters the model.
#[derive(Clone, Debug)]
pub enum DeletionLaw {
    /// Geometric with a free `r_d` under a Beta prior.
    Geometric,
    /// Any law with fixed parameters.
    Fixed(Arc<dyn SizeDistribution>),
}

/// Hyperparameters.
#[derive(Clone, Debug)]
pub struct PriorConfig {
    pub alpha_gamma: f64,
    pub alpha_kappa: f64,
    pub alpha_lambda: f64,
    pub alpha_pi: [f64; 4],
    pub r: (f64, f64),
    pub rd: (f64, f64),
    pub deletion: DeletionLaw,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            alpha_gamma: 0.1,
            alpha_kappa: 1.0,
            alpha_lambda: 10.0,
            alpha_pi: [13.3, 21.7, 23.1, 11.9],
            r: (100.0, 12200.0),
            rd: (3.0, 15.0),
            deletion: DeletionLaw::Geometric,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("alpha_gamma", self.alpha_gamma),
            ("alpha_kappa", self.alpha_kappa),
            ("alpha_lambda", self.alpha_lambda),
            ("r_alpha", self.r.0),
            ("r_beta", self.r.1),
            ("rd_alpha", self.rd.0),
            ("rd_beta", self.rd.1),
        ];
        for (name, v) in positive.into_iter().chain(self.alpha_pi.iter().map(|&a| ("alpha_pi", a))) {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("hyperparameter {name} = {v} must be positive")));
            }
        }
        Ok(())
    }

    pub fn is_geometric(&self) -> bool {
        matches!(self.deletion, DeletionLaw::Geometric)
    }
}

/// Every continuous parameter apart from branch lengths.
#[derive(Clone, Debug)]
pub struct Params {
    pub gamma: f64,
    pub subst: SubstParams,
    pub indel: IndelParams,
}

/// `ln g(x) = ln α - 2 ln(1 + α x)`, the ratio-of-exponentials density.
pub fn ln_ratio_exp_density(x: f64, alpha: f64) -> f64 {
    if !(x > 0.0 && x.is_finite()) {
        return f64::NEG_INFINITY;
    }
    alpha.ln() - 2.0 * (alpha * x).ln_1p()
}

pub fn ln_beta_density(x: f64, a: f64, b: f64) -> f64 {
    if !(x > 0.0 && x < 1.0) {
        return f64::NEG_INFINITY;
    }
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + (a - 1.0) * x.ln() + (b - 1.0) * (-x).ln_1p()
}

pub fn ln_dirichlet_density(p: &[f64; 4], alpha: &[f64; 4]) -> f64 {
    let total: f64 = p.iter().sum();
    if p.iter().any(|&x| !(x > 0.0)) || (total - 1.0).abs() > 1e-9 {
        return f64::NEG_INFINITY;
    }
    let a0: f64 = alpha.iter().sum();
    ln_gamma(a0) + p.iter().zip(alpha).map(|(&x, &a)| (a - 1.0) * x.ln() - ln_gamma(a)).sum::<f64>()
}

pub fn ln_exponential_density(x: f64, rate: f64) -> f64 {
    if !(x > 0.0 && x.is_finite()) {
        return f64::NEG_INFINITY;
    }
    rate.ln() - rate * x
}

/// Branch lengths iid Exponential(γ) plus the uniform topology constant.
pub fn ln_tree_prior(tree: &Tree, gamma: f64) -> f64 {
    if !(gamma > 0.0 && gamma.is_finite()) {
        return f64::NEG_INFINITY;
    }
    -ln_topology_count(tree.n_leaves())
        + tree.edges().map(|v| ln_exponential_density(tree.branch_length(v), gamma)).sum::<f64>()
}

/// Prior of the parameter blocks, excluding the tree.
pub fn ln_param_prior(params: &Params, cfg: &PriorConfig) -> f64 {
    let mut lp = ln_ratio_exp_density(params.gamma, cfg.alpha_gamma)
        + ln_dirichlet_density(&params.subst.pi, &cfg.alpha_pi)
        + ln_ratio_exp_density(params.subst.kappa, cfg.alpha_kappa)
        + ln_beta_density(params.indel.r, cfg.r.0, cfg.r.1)
        + ln_exponential_density(params.indel.lambda, cfg.alpha_lambda);
    if cfg.is_geometric() {
        lp += match params.indel.rd() {
            Some(rd) if rd < 1.0 => ln_beta_density(rd, cfg.rd.0, cfg.rd.1),
            _ => f64::NEG_INFINITY,
        };
    }
    lp
}

/// Full log prior; `-∞` whenever a parameter leaves its support.
pub fn log_prior(tree: &Tree, params: &Params, cfg: &PriorConfig) -> f64 {
    let lp = ln_tree_prior(tree, params.gamma) + ln_param_prior(params, cfg);
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}

fn ratio_exp<R: Rng + ?Sized>(rng: &mut R, alpha: f64) -> f64 {
    let a: f64 = Exp1.sample(rng);
    let b: f64 = Exp1.sample(rng);
    a / (alpha * b)
}

fn positive<R: Rng + ?Sized>(rng: &mut R, mut draw: impl FnMut(&mut R) -> f64) -> f64 {
    loop {
        let x = draw(rng);
        if x > 0.0 && x.is_finite() {
            return x;
        }
    }
}

/// Draws every parameter block from its prior.
pub fn sample_params<R: Rng + ?Sized>(rng: &mut R, cfg: &PriorConfig) -> Result<Params> {
    cfg.validate()?;
    let gamma = positive(rng, |g| ratio_exp(g, cfg.alpha_gamma));
    let kappa = positive(rng, |g| ratio_exp(g, cfg.alpha_kappa));
    let dirichlet = Dirichlet::new(cfg.alpha_pi).map_err(|e| Error::domain(e.to_string()))?;
    let pi = loop {
        let p: [f64; 4] = dirichlet.sample(rng);
        if p.iter().all(|&x| x > 0.0) {
            break p;
        }
    };
    let beta_r = Beta::new(cfg.r.0, cfg.r.1).map_err(|e| Error::domain(e.to_string()))?;
    let r = loop {
        let x = beta_r.sample(rng);
        if x > 0.0 && x < 1.0 {
            break x;
        }
    };
    let lambda = positive(rng, |g| Exp::new(cfg.alpha_lambda).unwrap().sample(g));
    let deletion: Arc<dyn SizeDistribution> = match &cfg.deletion {
        DeletionLaw::Geometric => {
            let beta_rd = Beta::new(cfg.rd.0, cfg.rd.1).map_err(|e| Error::domain(e.to_string()))?;
            let rd = loop {
                let x = beta_rd.sample(rng);
                if x > 0.0 && x < 1.0 {
                    break x;
                }
            };
            Arc::new(Geometric::new(rd)?)
        }
        DeletionLaw::Fixed(d) => d.clone(),
    };
    Ok(Params {
        gamma,
        subst: SubstParams::new(kappa, pi)?,
        indel: IndelParams { r, lambda, deletion },
    })
}

/// Draws parameters and a tree: uniform topology, branch lengths iid
/// Exponential(γ).
pub fn sample_prior<R: Rng + ?Sized>(
    rng: &mut R,
    cfg: &PriorConfig,
    labels: Arc<[String]>,
) -> Result<(Tree, Params)> {
    let params = sample_params(rng, cfg)?;
    let branch = Exp::new(params.gamma).map_err(|e| Error::domain(e.to_string()))?;
    let tree = Tree::random(labels, rng, |g| positive(g, |g| branch.sample(g)))?;
    Ok((tree, params))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::tests::labels;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn median(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs[xs.len() / 2]
    }

    #[test]
    fn ratio_density_at_its_median() {
        for alpha in [0.1, 1.0, 10.0] {
            let g = ln_ratio_exp_density(1.0 / alpha, alpha).exp();
            assert!((g - alpha / 4.0).abs() < 1e-14);
        }
    }

    #[test]
    fn ratio_density_integrates_to_one() {
        // Substituting u = αγ/(1+αγ) maps the density to the unit interval.
        let alpha = 10.0;
        let upper = 1e6 / alpha;
        let u_max = alpha * upper / (1.0 + alpha * upper);
        let steps = 100_000;
        let mut total = 0.0;
        for k in 0..steps {
            let u = (k as f64 + 0.5) / steps as f64 * u_max;
            let x = u / (alpha * (1.0 - u));
            let jac = 1.0 / (alpha * (1.0 - u) * (1.0 - u));
            total += ln_ratio_exp_density(x, alpha).exp() * jac * u_max / steps as f64;
        }
        assert!(total >= 0.999999, "{total}");
        assert!(total <= 1.0 + 1e-9);
    }

    #[test]
    fn dirichlet_mean_is_finite() {
        let cfg = PriorConfig::default();
        let total: f64 = cfg.alpha_pi.iter().sum();
        let mean = cfg.alpha_pi.map(|a| a / total);
        for (m, want) in mean.iter().zip([0.19, 0.31, 0.33, 0.17]) {
            assert!((m - want).abs() < 1e-12);
        }
        assert!(ln_dirichlet_density(&mean, &cfg.alpha_pi).is_finite());
    }

    #[test]
    fn out_of_support_is_negative_infinity() {
        assert_eq!(ln_beta_density(1.2, 100.0, 12200.0), f64::NEG_INFINITY);
        assert_eq!(ln_exponential_density(-1.0, 10.0), f64::NEG_INFINITY);
        assert_eq!(ln_ratio_exp_density(0.0, 1.0), f64::NEG_INFINITY);
        let cfg = PriorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (tree, mut p) = sample_prior(&mut rng, &cfg, labels(5)).unwrap();
        p.indel.r = 1.2;
        assert_eq!(log_prior(&tree, &p, &cfg), f64::NEG_INFINITY);
    }

    #[test]
    fn beta_density_is_normalized() {
        let (a, b) = (3.0, 15.0);
        let steps = 200_000;
        let total: f64 = (0..steps)
            .map(|k| ln_beta_density((k as f64 + 0.5) / steps as f64, a, b).exp() / steps as f64)
            .sum();
        assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn prior_draws_match_their_laws() {
        let cfg = PriorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 100_000;
        let mut r = Vec::with_capacity(n);
        let mut gamma = Vec::with_capacity(n);
        for _ in 0..n {
            let p = sample_params(&mut rng, &cfg).unwrap();
            assert!(ln_param_prior(&p, &cfg).is_finite());
            r.push(p.indel.r);
            gamma.push(p.gamma);
        }
        let (a, b) = cfg.r;
        let mean = a / (a + b);
        let sd = (a * b / ((a + b).powi(2) * (a + b + 1.0))).sqrt();
        let got = r.iter().sum::<f64>() / n as f64;
        assert!((got - mean).abs() < 3.0 * sd / (n as f64).sqrt());
        // The empirical median of n draws has s.e. 1/(2 g(m) sqrt(n)).
        let m = 1.0 / cfg.alpha_gamma;
        let se = 1.0 / (2.0 * (cfg.alpha_gamma / 4.0) * (n as f64).sqrt());
        assert!((median(gamma) - m).abs() < 3.0 * se);
    }

    #[test]
    fn sampled_trees_have_finite_prior() {
        let cfg = PriorConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1000 {
            let (tree, p) = sample_prior(&mut rng, &cfg, labels(6)).unwrap();
            assert!(log_prior(&tree, &p, &cfg).is_finite());
        }
    }
}
