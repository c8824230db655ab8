//! Deletion fragment-size laws `d(k)` on the positive integers.
//!
//! Each law is a [`SizeDistribution`] strategy; [`SizeRegistry`] maps a
//! config name such as `geometric:0.3` to a constructed law.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Series terms allowed before a rate-ratio sum is declared non-convergent.
pub const MAX_SERIES_TERMS: usize = 1_000_000;

pub trait SizeDistribution: fmt::Debug + Send + Sync {
    /// Registry name, e.g. `"geometric"`.
    fn name(&self) -> &'static str;

    /// Parameters in registry order.
    fn params(&self) -> Vec<f64>;

    fn pmf(&self, k: usize) -> f64;

    fn ln_pmf(&self, k: usize) -> f64 {
        self.pmf(k).ln()
    }

    /// Exact `P(size > k)` when cheaply known.
    fn tail(&self, _k: usize) -> Option<f64> {
        None
    }

    /// `sum_{k>=1} (1-r)^k d(k)`.
    fn rate_ratio(&self, r: f64, eps: f64) -> Result<f64> {
        series_rate_ratio(self, r, eps)
    }

    /// `Some(r_d)` when the law is geometric; the sampler only moves this parameter.
    fn geometric_param(&self) -> Option<f64> {
        None
    }

    /// Config form `name:p1,p2`.
    fn spec(&self) -> String {
        let ps: Vec<String> = self.params().iter().map(|p| format!("{p}")).collect();
        format!("{}:{}", self.name(), ps.join(","))
    }
}

/// Truncated evaluation of `sum (1-r)^k d(k)`. Stops when the envelope
/// `(1-r)^(N+1) / r` (or `(1-r)^(N+1) * P(size > N)` when the tail is known)
/// bounds the remainder below `eps`.
pub fn series_rate_ratio<D: SizeDistribution + ?Sized>(d: &D, r: f64, eps: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::domain(format!("r = {r} outside (0, 1)")));
    }
    let keep = 1.0 - r;
    let mut sum = 0.0;
    let mut power = 1.0;
    for k in 1..=MAX_SERIES_TERMS {
        power *= keep;
        sum += power * d.pmf(k);
        let envelope = power * keep / r;
        let bound = match d.tail(k) {
            Some(t) => (power * keep * t).min(envelope),
            None => envelope,
        };
        if bound < eps {
            return Ok(sum);
        }
    }
    Err(Error::Numerical(format!(
        "rate ratio series for {} did not converge within {MAX_SERIES_TERMS} terms at r = {r}",
        d.spec()
    )))
}

/// `d(k) = p (1-p)^(k-1)`; `p = 1` puts all mass on single-base events.
#[derive(Clone, Debug, PartialEq)]
pub struct Geometric {
    p: f64,
}

impl Geometric {
    pub fn new(p: f64) -> Result<Self> {
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::domain(format!("geometric parameter {p} outside (0, 1]")));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }
}

impl SizeDistribution for Geometric {
    fn name(&self) -> &'static str {
        "geometric"
    }

    fn params(&self) -> Vec<f64> {
        vec![self.p]
    }

    fn pmf(&self, k: usize) -> f64 {
        if k == 0 {
            return 0.0;
        }
        if self.p == 1.0 {
            return if k == 1 { 1.0 } else { 0.0 };
        }
        self.p * (1.0 - self.p).powi(k as i32 - 1)
    }

    fn ln_pmf(&self, k: usize) -> f64 {
        if k == 0 {
            return f64::NEG_INFINITY;
        }
        if self.p == 1.0 {
            return if k == 1 { 0.0 } else { f64::NEG_INFINITY };
        }
        self.p.ln() + (k as f64 - 1.0) * (-self.p).ln_1p()
    }

    fn tail(&self, k: usize) -> Option<f64> {
        Some((1.0 - self.p).powi(k as i32))
    }

    fn rate_ratio(&self, r: f64, _eps: f64) -> Result<f64> {
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::domain(format!("r = {r} outside (0, 1)")));
        }
        let ri = 1.0 - (1.0 - self.p) * (1.0 - r);
        Ok(self.p * (1.0 - r) / ri)
    }

    fn geometric_param(&self) -> Option<f64> {
        Some(self.p)
    }
}

/// Negative binomial shifted onto `{1, 2, ...}`:
/// `d(k) = C(k-2+s, k-1) p^s (1-p)^(k-1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NegativeBinomial {
    shape: f64,
    prob: f64,
    ln_norm: f64,
}

impl NegativeBinomial {
    pub fn new(shape: f64, prob: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite()) {
            return Err(Error::domain(format!("negative binomial shape {shape} must be positive")));
        }
        if !(prob > 0.0 && prob <= 1.0) {
            return Err(Error::domain(format!("negative binomial prob {prob} outside (0, 1]")));
        }
        Ok(Self {
            shape,
            prob,
            ln_norm: shape * prob.ln() - ln_gamma(shape),
        })
    }
}

impl SizeDistribution for NegativeBinomial {
    fn name(&self) -> &'static str {
        "negbin"
    }

    fn params(&self) -> Vec<f64> {
        vec![self.shape, self.prob]
    }

    fn pmf(&self, k: usize) -> f64 {
        self.ln_pmf(k).exp()
    }

    fn ln_pmf(&self, k: usize) -> f64 {
        if k == 0 {
            return f64::NEG_INFINITY;
        }
        let j = (k - 1) as f64;
        if self.prob == 1.0 {
            return if k == 1 { 0.0 } else { f64::NEG_INFINITY };
        }
        self.ln_norm + ln_gamma(j + self.shape) - ln_gamma(j + 1.0) + j * (1.0 - self.prob).ln()
    }
}

/// `d(k) ∝ k^(-a)` on `1..=cutoff`.
#[derive(Clone, Debug, PartialEq)]
pub struct PowerLaw {
    exponent: f64,
    cutoff: usize,
    ln_z: f64,
    cdf: Arc<[f64]>,
}

impl PowerLaw {
    pub fn new(exponent: f64, cutoff: usize) -> Result<Self> {
        if !(exponent > 0.0 && exponent.is_finite()) {
            return Err(Error::domain(format!("power-law exponent {exponent} must be positive")));
        }
        if cutoff == 0 {
            return Err(Error::domain("power-law cutoff must be at least 1"));
        }
        let weights: Vec<f64> = (1..=cutoff).map(|k| (k as f64).powf(-exponent)).collect();
        let z: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cdf: Vec<f64> = weights
            .iter()
            .map(|w| {
                acc += w / z;
                acc
            })
            .collect();
        Ok(Self {
            exponent,
            cutoff,
            ln_z: z.ln(),
            cdf: cdf.into(),
        })
    }
}

impl SizeDistribution for PowerLaw {
    fn name(&self) -> &'static str {
        "powerlaw"
    }

    fn params(&self) -> Vec<f64> {
        vec![self.exponent, self.cutoff as f64]
    }

    fn pmf(&self, k: usize) -> f64 {
        if k == 0 || k > self.cutoff {
            0.0
        } else {
            self.ln_pmf(k).exp()
        }
    }

    fn ln_pmf(&self, k: usize) -> f64 {
        if k == 0 || k > self.cutoff {
            f64::NEG_INFINITY
        } else {
            -self.exponent * (k as f64).ln() - self.ln_z
        }
    }

    fn tail(&self, k: usize) -> Option<f64> {
        if k >= self.cutoff {
            Some(0.0)
        } else {
            Some((1.0 - self.cdf[k - 1]).max(0.0))
        }
    }
}

type Constructor = fn(&[f64]) -> Result<Arc<dyn SizeDistribution>>;

/// Named constructors for deletion-size laws.
pub struct SizeRegistry {
    entries: BTreeMap<&'static str, (usize, Constructor)>,
}

impl Default for SizeRegistry {
    fn default() -> Self {
        let mut reg = Self {
            entries: BTreeMap::new(),
        };
        reg.register("geometric", 1, |p| Ok(Arc::new(Geometric::new(p[0])?)));
        reg.register("negbin", 2, |p| Ok(Arc::new(NegativeBinomial::new(p[0], p[1])?)));
        reg.register("powerlaw", 2, |p| {
            if p[1] < 1.0 || p[1].fract() != 0.0 {
                return Err(Error::domain(format!("power-law cutoff {} must be a positive integer", p[1])));
            }
            Ok(Arc::new(PowerLaw::new(p[0], p[1] as usize)?))
        });
        reg
    }
}

impl SizeRegistry {
    pub fn register(&mut self, name: &'static str, arity: usize, ctor: Constructor) {
        self.entries.insert(name, (arity, ctor));
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.keys().copied()
    }

    pub fn build(&self, name: &str, params: &[f64]) -> Result<Arc<dyn SizeDistribution>> {
        let (arity, ctor) = self
            .entries
            .get(name)
            .ok_or_else(|| Error::domain(format!("unknown size distribution {name:?}")))?;
        if params.len() != *arity {
            return Err(Error::domain(format!(
                "{name} takes {arity} parameter(s), got {}",
                params.len()
            )));
        }
        ctor(params)
    }

    /// Parses `name:p1,p2,...`.
    pub fn parse(&self, spec: &str) -> Result<Arc<dyn SizeDistribution>> {
        let (name, rest) = spec.split_once(':').unwrap_or((spec, ""));
        let params = rest
            .split(',')
            .filter(|s| !s.trim().is_empty())
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::domain(format!("bad size-distribution parameter {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        self.build(name.trim(), &params)
    }
}
