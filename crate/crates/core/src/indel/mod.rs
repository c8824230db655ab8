//! The general indel process: equilibrium length, rate ratio, fragment-size
//! laws and exact log-densities of edge and tree histories.
//!
//! Free functions mirror the textbook quantities one at a time; [`IndelModel`]
//! bundles them with memoized tables for the sampler's hot path.

pub mod size;

use std::sync::Arc;

use rand::Rng;

pub use size::{Geometric, NegativeBinomial, PowerLaw, SizeDistribution, SizeRegistry};

use crate::error::{Error, Result};
use crate::history::{EdgeHistory, EventKind, TreeHistory};
use crate::tree::Tree;

/// Series truncation tolerance for non-geometric rate ratios.
pub const TAIL_EPS: f64 = 1e-12;

/// Precomputed `f(x)` entries; larger arguments are extended on the fly.
const F_TABLE_LEN: usize = 2048;

/// `ln q(x) = ln r + x ln(1 - r)`.
pub fn equilibrium_length_log_pmf(x: usize, r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::domain(format!("r = {r} outside (0, 1)")));
    }
    Ok(r.ln() + x as f64 * (-r).ln_1p())
}

/// `λ/μ = Σ_{k≥1} (1-r)^k d(k)`.
pub fn rate_ratio(r: f64, d: &dyn SizeDistribution) -> Result<f64> {
    d.rate_ratio(r, TAIL_EPS)
}

/// `ln i(k) = ln[(μ/λ)(1-r)^k d(k)]`.
pub fn insertion_size_log_pmf(k: usize, r: f64, d: &dyn SizeDistribution, lambda: f64, mu: f64) -> f64 {
    (mu / lambda).ln() + k as f64 * (-r).ln_1p() + d.ln_pmf(k)
}

/// `f(x) = Σ_{k=1}^{x} (x-k+1) d(k)` by direct summation.
pub fn deletion_position_mass(x: usize, d: &dyn SizeDistribution) -> f64 {
    (1..=x).map(|k| (x - k + 1) as f64 * d.pmf(k)).sum()
}

/// `η(n) = (n+1)λ + f(n)μ`.
pub fn total_event_rate(n: usize, lambda: f64, mu: f64, d: &dyn SizeDistribution) -> f64 {
    (n + 1) as f64 * lambda + deletion_position_mass(n, d) * mu
}

/// Free indel parameters: `r`, the insertion rate `λ` and the deletion law.
#[derive(Clone, Debug)]
pub struct IndelParams {
    pub r: f64,
    pub lambda: f64,
    pub deletion: Arc<dyn SizeDistribution>,
}

impl IndelParams {
    pub fn geometric(r: f64, rd: f64, lambda: f64) -> Result<Self> {
        Ok(Self {
            r,
            lambda,
            deletion: Arc::new(Geometric::new(rd)?),
        })
    }

    pub fn rd(&self) -> Option<f64> {
        self.deletion.geometric_param()
    }

    /// Insertion-size parameter of the geometric case, `1 - (1-r_d)(1-r)`.
    pub fn ri(&self) -> Option<f64> {
        self.rd().map(|rd| 1.0 - (1.0 - rd) * (1.0 - self.r))
    }
}

#[derive(Debug)]
struct DeletionTables {
    ln_d: Vec<f64>,
    cdf: Vec<f64>,
    f: Vec<f64>,
}

impl DeletionTables {
    fn build(d: &dyn SizeDistribution) -> Self {
        let mut ln_d = Vec::with_capacity(F_TABLE_LEN + 1);
        let mut cdf = Vec::with_capacity(F_TABLE_LEN + 1);
        let mut f = Vec::with_capacity(F_TABLE_LEN + 1);
        ln_d.push(f64::NEG_INFINITY);
        cdf.push(0.0);
        f.push(0.0);
        for k in 1..=F_TABLE_LEN {
            ln_d.push(d.ln_pmf(k));
            cdf.push(cdf[k - 1] + d.pmf(k));
            f.push(f[k - 1] + cdf[k]);
        }
        Self { ln_d, cdf, f }
    }
}

/// Derived quantities of one parameter setting.
#[derive(Clone, Debug)]
pub struct IndelModel {
    params: IndelParams,
    ratio: f64,
    mu: f64,
    ln_lambda: f64,
    ln_mu: f64,
    ln_r: f64,
    ln_keep: f64,
    ln_ratio: f64,
    tables: Arc<DeletionTables>,
}

impl IndelModel {
    pub fn new(params: IndelParams) -> Result<Self> {
        let tables = Arc::new(DeletionTables::build(params.deletion.as_ref()));
        Self::with_tables(params, tables)
    }

    /// New parameters, reusing the deletion tables when the law is unchanged.
    pub fn update(&self, params: IndelParams) -> Result<Self> {
        if Arc::ptr_eq(&params.deletion, &self.params.deletion) {
            Self::with_tables(params, self.tables.clone())
        } else {
            Self::new(params)
        }
    }

    fn with_tables(params: IndelParams, tables: Arc<DeletionTables>) -> Result<Self> {
        let IndelParams { r, lambda, .. } = params;
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::domain(format!("r = {r} outside (0, 1)")));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::domain(format!("λ = {lambda} must be positive")));
        }
        if !(params.deletion.pmf(1) > 0.0) {
            return Err(Error::domain("deletion law needs d(1) > 0"));
        }
        let ratio = params.deletion.rate_ratio(r, TAIL_EPS)?;
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Numerical(format!("rate ratio {ratio} outside (0, 1)")));
        }
        let mu = lambda / ratio;
        Ok(Self {
            ratio,
            mu,
            ln_lambda: lambda.ln(),
            ln_mu: mu.ln(),
            ln_r: r.ln(),
            ln_keep: (-r).ln_1p(),
            ln_ratio: ratio.ln(),
            tables,
            params,
        })
    }

    pub fn params(&self) -> &IndelParams {
        &self.params
    }

    pub fn r(&self) -> f64 {
        self.params.r
    }

    pub fn lambda(&self) -> f64 {
        self.params.lambda
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// `λ/μ`.
    pub fn ratio(&self) -> f64 {
        self.ratio
    }

    pub fn deletion(&self) -> &dyn SizeDistribution {
        self.params.deletion.as_ref()
    }

    pub fn ln_q(&self, x: usize) -> f64 {
        self.ln_r + x as f64 * self.ln_keep
    }

    pub fn ln_d(&self, k: usize) -> f64 {
        match self.tables.ln_d.get(k) {
            Some(&v) => v,
            None => self.params.deletion.ln_pmf(k),
        }
    }

    pub fn d(&self, k: usize) -> f64 {
        self.ln_d(k).exp()
    }

    pub fn ln_i(&self, k: usize) -> f64 {
        if k == 0 {
            return f64::NEG_INFINITY;
        }
        k as f64 * self.ln_keep + self.ln_d(k) - self.ln_ratio
    }

    pub fn i(&self, k: usize) -> f64 {
        self.ln_i(k).exp()
    }

    /// `f(x)`, memoized up to a fixed table length.
    pub fn f(&self, x: usize) -> f64 {
        match self.tables.f.get(x) {
            Some(&v) => v,
            None => {
                let last = self.tables.f.len() - 1;
                let mut acc = self.tables.f[last];
                let mut cdf = self.tables.cdf[last];
                for j in last + 1..=x {
                    cdf += self.params.deletion.pmf(j);
                    acc += cdf;
                }
                acc
            }
        }
    }

    /// `η(n) = (n+1)λ + f(n)μ`.
    pub fn eta(&self, n: usize) -> f64 {
        (n + 1) as f64 * self.params.lambda + self.f(n) * self.mu
    }

    /// Probability that the next event on a length-`n` sequence is an insertion.
    pub fn insertion_prob(&self, n: usize) -> f64 {
        (n + 1) as f64 * self.params.lambda / self.eta(n)
    }

    /// `ln q_del(l | n) = ln[(n-l+1) d(l) / f(n)]`, the size law of a deletion
    /// on a length-`n` sequence.
    pub fn ln_deletion_size(&self, l: usize, n: usize) -> f64 {
        if l == 0 || l > n {
            return f64::NEG_INFINITY;
        }
        ((n - l + 1) as f64).ln() + self.ln_d(l) - self.f(n).ln()
    }

    pub fn sample_insertion_size<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        if let Some(ri) = self.params.ri() {
            if ri >= 1.0 {
                return 1;
            }
            let u: f64 = 1.0 - rng.random::<f64>();
            return 1 + (u.ln() / (-ri).ln_1p()).floor() as usize;
        }
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for k in 1..size::MAX_SERIES_TERMS {
            acc += self.i(k);
            if u < acc {
                return k;
            }
        }
        size::MAX_SERIES_TERMS
    }

    /// Draws a deletion size on a length-`n` sequence with weight `(n-l+1) d(l)`.
    pub fn sample_deletion_size<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> usize {
        debug_assert!(n > 0);
        let target = rng.random::<f64>() * self.f(n);
        let mut acc = 0.0;
        for l in 1..=n {
            acc += (n - l + 1) as f64 * self.d(l);
            if target < acc {
                return l;
            }
        }
        // Rounding residue: fall back to the largest size with positive mass.
        (1..=n).rev().find(|&l| self.d(l) > 0.0).unwrap_or(1)
    }

    /// Log-density of an edge history given its span and parent length.
    pub fn edge_log_density(&self, h: &EdgeHistory) -> Result<f64> {
        h.validate()?;
        Ok(self.edge_log_density_unchecked(h))
    }

    pub(crate) fn edge_log_density_unchecked(&self, h: &EdgeHistory) -> f64 {
        let mut n = h.parent_len;
        let mut t_prev = 0.0;
        let mut acc = 0.0;
        for e in &h.events {
            acc -= self.eta(n) * (e.time - t_prev);
            match e.kind {
                EventKind::Insertion => {
                    acc += self.ln_lambda + self.ln_i(e.size);
                    n += e.size;
                }
                EventKind::Deletion => {
                    acc += self.ln_mu + self.ln_d(e.size);
                    n -= e.size;
                }
            }
            t_prev = e.time;
        }
        acc - self.eta(n) * (h.span - t_prev)
    }

    /// `ln q(n_root) + Σ_edges ln Pr(h_e | v_e, n_parent)`.
    pub fn tree_log_density(&self, tree: &Tree, history: &TreeHistory) -> Result<f64> {
        history.validate(tree)?;
        Ok(self.ln_q(history.root_len())
            + history
                .edges()
                .map(|(_, h)| self.edge_log_density_unchecked(h))
                .sum::<f64>())
    }
}
