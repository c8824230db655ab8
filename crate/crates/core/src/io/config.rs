use std::collections::BTreeMap;
use std::fmt::Write;

use sha2::{Digest, Sha256};

use crate::error::{ParseError, Result};
use crate::indel::SizeRegistry;
use crate::mcmc::{Problem, Sampler, Start, Target};
use crate::prior::{DeletionLaw, PriorConfig};
use crate::proposal::{KernelRegistry, Tuning};
use crate::sequence::Sequence;
use crate::summary::{DEFAULT_BURN_IN, DEFAULT_GAP_FACTOR};

/// Everything a run reads from its `key = value` config file.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub iterations: u64,
    pub thin: u64,
    pub chains: usize,
    pub burn_in: f64,
    pub gap_factor: f64,
    pub target: Target,
    /// How chains pick their first alignment.
    pub start: Start,
    /// `None` follows the build: audits in debug builds only. `Some(0)` disables.
    pub audit_every: Option<u64>,
    pub prior: PriorConfig,
    pub tuning: Tuning,
    /// Kernel names to use; `None` means every built-in.
    pub kernels: Option<Vec<String>>,
    pub weights: BTreeMap<String, f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            iterations: 100_000,
            thin: 100,
            chains: 3,
            burn_in: DEFAULT_BURN_IN,
            gap_factor: DEFAULT_GAP_FACTOR,
            target: Target::Posterior,
            start: Start::default(),
            audit_every: None,
            prior: PriorConfig::default(),
            tuning: Tuning::default(),
            kernels: None,
            weights: BTreeMap::new(),
        }
    }
}

fn list(xs: &[f64]) -> String {
    xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

fn parse_list<const N: usize>(v: &str) -> Option<[f64; N]> {
    let xs: Vec<f64> = v.split(',').map(|s| s.trim().parse().ok()).collect::<Option<_>>()?;
    xs.try_into().ok()
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "auto".into(), |v| v.to_string())
}

impl RunConfig {
    /// Canonical text: every key, fixed order.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| writeln!(s, "{k} = {v}").unwrap();
        kv("seed", self.seed.to_string());
        kv("iterations", self.iterations.to_string());
        kv("thin", self.thin.to_string());
        kv("chains", self.chains.to_string());
        kv("burn_in", self.burn_in.to_string());
        kv("gap_factor", self.gap_factor.to_string());
        kv(
            "target",
            match self.target {
                Target::Posterior => "posterior",
                Target::NoSequenceData => "prior",
            }
            .into(),
        );
        kv(
            "start",
            match self.start {
                Start::Guide => "guide",
                Start::Star => "star",
            }
            .into(),
        );
        kv("audit_every", self.audit_every.map_or_else(|| "auto".into(), |n| n.to_string()));
        let p = &self.prior;
        kv("alpha_gamma", p.alpha_gamma.to_string());
        kv("alpha_kappa", p.alpha_kappa.to_string());
        kv("alpha_lambda", p.alpha_lambda.to_string());
        kv("alpha_pi", list(&p.alpha_pi));
        kv("r_prior", list(&[p.r.0, p.r.1]));
        kv("rd_prior", list(&[p.rd.0, p.rd.1]));
        kv(
            "deletion",
            match &p.deletion {
                DeletionLaw::Geometric => "geometric".into(),
                DeletionLaw::Fixed(d) => d.spec(),
            },
        );
        let t = &self.tuning;
        kv("guided.w_stop", t.guided.w_stop.to_string());
        kv("guided.w_dir", t.guided.w_dir.to_string());
        kv("guided.w_exact", t.guided.w_exact.to_string());
        kv("log_window", t.log_window.to_string());
        kv("node_step", t.node_step.to_string());
        kv("spr_length_decay", t.spr_length_decay.to_string());
        kv("pi_concentration", t.pi_concentration.to_string());
        kv("r_window", opt(t.r_window));
        kv("rd_window", opt(t.rd_window));
        kv("shift_max", t.shift_max.to_string());
        kv("kernels", self.kernels.as_ref().map_or_else(|| "all".into(), |k| k.join(",")));
        for (name, w) in &self.weights {
            kv(&format!("weight.{name}"), w.to_string());
        }
        s
    }

    /// Parses `key = value` lines; `#` starts a comment. Unset keys keep
    /// their defaults.
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let line_no = ln + 1;
            let line = raw.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ParseError::new("config", msg).at(line_no, 1);
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if let Some(prev) = seen.insert(key.to_string(), line_no) {
                return Err(err(format!("{key} already set on line {prev}")));
            }
            cfg.set(key, value).map_err(|m| err(format!("{key}: {m}")))?;
        }
        Ok(cfg)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        fn num<T: std::str::FromStr>(v: &str) -> Result<T, String> {
            v.parse().map_err(|_| format!("cannot parse {v:?}"))
        }
        fn auto(v: &str) -> Result<Option<f64>, String> {
            if v == "auto" {
                Ok(None)
            } else {
                num(v).map(Some)
            }
        }
        let pair = |v: &str| parse_list::<2>(v).map(|[a, b]| (a, b)).ok_or("expected two numbers");
        match key {
            "seed" => self.seed = num(v)?,
            "iterations" => self.iterations = num(v)?,
            "thin" => self.thin = num(v)?,
            "chains" => self.chains = num(v)?,
            "burn_in" => self.burn_in = num(v)?,
            "gap_factor" => self.gap_factor = num(v)?,
            "target" => {
                self.target = match v {
                    "posterior" => Target::Posterior,
                    "prior" => Target::NoSequenceData,
                    _ => return Err(format!("unknown target {v:?}")),
                }
            }
            "start" => {
                self.start = match v {
                    "guide" => Start::Guide,
                    "star" => Start::Star,
                    _ => return Err(format!("unknown start {v:?}")),
                }
            }
            "audit_every" => self.audit_every = if v == "auto" { None } else { Some(num(v)?) },
            "alpha_gamma" => self.prior.alpha_gamma = num(v)?,
            "alpha_kappa" => self.prior.alpha_kappa = num(v)?,
            "alpha_lambda" => self.prior.alpha_lambda = num(v)?,
            "alpha_pi" => self.prior.alpha_pi = parse_list::<4>(v).ok_or("expected four numbers")?,
            "r_prior" => self.prior.r = pair(v)?,
            "rd_prior" => self.prior.rd = pair(v)?,
            "deletion" => {
                self.prior.deletion = if v == "geometric" {
                    DeletionLaw::Geometric
                } else {
                    DeletionLaw::Fixed(SizeRegistry::default().parse(v).map_err(|e| e.to_string())?)
                }
            }
            "guided.w_stop" => self.tuning.guided.w_stop = num(v)?,
            "guided.w_dir" => self.tuning.guided.w_dir = num(v)?,
            "guided.w_exact" => self.tuning.guided.w_exact = num(v)?,
            "log_window" => self.tuning.log_window = num(v)?,
            "node_step" => self.tuning.node_step = num(v)?,
            "spr_length_decay" => self.tuning.spr_length_decay = num(v)?,
            "pi_concentration" => self.tuning.pi_concentration = num(v)?,
            "r_window" => self.tuning.r_window = auto(v)?,
            "rd_window" => self.tuning.rd_window = auto(v)?,
            "shift_max" => self.tuning.shift_max = num(v)?,
            "kernels" => {
                self.kernels = if v == "all" {
                    None
                } else {
                    Some(v.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect())
                }
            }
            _ => match key.strip_prefix("weight.") {
                Some(name) if !name.is_empty() => {
                    self.weights.insert(name.to_string(), num(v)?);
                }
                _ => return Err("unknown key".into()),
            },
        }
        Ok(())
    }

    /// Hex SHA-256 prefix of the canonical text.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_text().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn registry(&self) -> Result<KernelRegistry> {
        let mut reg = match &self.kernels {
            None => KernelRegistry::standard(&self.prior),
            Some(names) => {
                let names: Vec<&str> = names.iter().map(String::as_str).collect();
                KernelRegistry::from_names(&names, &self.prior)?
            }
        };
        for (name, &w) in &self.weights {
            reg.set_weight(name, w)?;
        }
        Ok(reg)
    }

    /// A sampler for `leaves` with this config's target, kernels and audits.
    pub fn sampler(&self, leaves: Vec<Sequence>) -> Result<Sampler> {
        self.prior.validate()?;
        let problem = Problem::new(leaves, self.prior.clone())?.with_target(self.target);
        let mut sampler = Sampler::new(problem, self.tuning.clone());
        sampler.registry = self.registry()?;
        sampler.start = self.start;
        match self.audit_every {
            Some(0) => sampler.audit_every = None,
            Some(n) => sampler.audit_every = Some(n),
            None => {}
        }
        Ok(sampler)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip() {
        let c = RunConfig::default();
        let back = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(back.to_text(), c.to_text());
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 16);
    }

    #[test]
    fn overrides_and_comments() {
        let c = RunConfig::parse(
            "# run\niterations = 500\nthin=5 # every fifth\ndeletion = negbin:2,0.4\nkernels = spr, pi\nweight.spr = 3\nr_window = 0.01\n",
        )
        .unwrap();
        assert_eq!((c.iterations, c.thin), (500, 5));
        assert_eq!(c.tuning.r_window, Some(0.01));
        assert!(!c.prior.is_geometric());
        let reg = c.registry().unwrap();
        assert_eq!(reg.names(), ["spr", "pi"]);
        assert!((reg.weight(0) - 3.0 / 3.15).abs() < 1e-12);
        let again = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(again.to_text(), c.to_text());
        assert_ne!(again.hash(), RunConfig::default().hash());
    }

    #[test]
    fn errors_name_the_line() {
        let e = RunConfig::parse("seed = 1\nfoo = 2\n").unwrap_err();
        assert_eq!(e.line, Some(2));
        assert!(RunConfig::parse("seed = x").is_err());
        assert!(RunConfig::parse("seed = 1\nseed = 2").is_err());
        assert!(RunConfig::parse("alpha_pi = 1,2,3").is_err());
        assert!(RunConfig::parse("kernels = nope").unwrap().registry().is_err());
    }
}
