//! Flat key=value experiment configuration, shared between config files and
//! command-line overrides.

use skelfac::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Problem {
    CircleBump,
    LippmannSchwinger,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    FixedProportion,
    FixedCount,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub n: usize,
    pub n_list: Vec<usize>,
    pub eps: f64,
    pub kind: skelfac::factor::FactorKind,
    pub mode: Mode,
    pub kappa: f64,
    pub n_occ: usize,
    pub n_proxy: usize,
    pub seed: u64,
    pub reps: usize,
    pub out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            problem: Problem::CircleBump,
            n: 4096,
            n_list: Vec::new(),
            eps: 1e-6,
            kind: skelfac::factor::FactorKind::Rskelf,
            mode: Mode::FixedCount,
            kappa: 0.1,
            n_occ: 64,
            n_proxy: 64,
            seed: 1,
            reps: 3,
            out: None,
        }
    }
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |k: &str, v: &str| Error::InvalidConfig(format!("{k} = {v}"));
        match key {
            "problem" => {
                self.problem = match value {
                    "circle-bump" => Problem::CircleBump,
                    "lippmann-schwinger" => Problem::LippmannSchwinger,
                    _ => return Err(bad(key, value)),
                }
            }
            "n" => self.n = value.parse().map_err(|_| bad(key, value))?,
            "n_list" => {
                self.n_list = value
                    .split(',')
                    .map(|s| s.trim().parse().map_err(|_| bad(key, value)))
                    .collect::<Result<_>>()?
            }
            "eps" => self.eps = value.parse().map_err(|_| bad(key, value))?,
            "kind" => {
                self.kind = match value {
                    "rskelf" => skelfac::factor::FactorKind::Rskelf,
                    "hif" => skelfac::factor::FactorKind::Hif,
                    _ => return Err(bad(key, value)),
                }
            }
            "mode" => {
                self.mode = match value {
                    "fixed-proportion" => Mode::FixedProportion,
                    "fixed-count" => Mode::FixedCount,
                    _ => return Err(bad(key, value)),
                }
            }
            "kappa" => self.kappa = value.parse().map_err(|_| bad(key, value))?,
            "n_occ" => self.n_occ = value.parse().map_err(|_| bad(key, value))?,
            "n_proxy" => self.n_proxy = value.parse().map_err(|_| bad(key, value))?,
            "seed" => self.seed = value.parse().map_err(|_| bad(key, value))?,
            "reps" => self.reps = value.parse().map_err(|_| bad(key, value))?,
            "out" => self.out = Some(value.to_string()),
            _ => return Err(Error::InvalidConfig(format!("unknown key {key}"))),
        }
        Ok(())
    }

    pub fn parse_text(&mut self, text: &str) -> Result<()> {
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidConfig(format!("bad line: {line}")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 4 || self.eps <= 0.0 || self.eps >= 1.0 {
            return Err(Error::InvalidConfig("n or eps out of range".into()));
        }
        if self.n_occ < 4 || self.n_proxy < 8 || self.reps == 0 {
            return Err(Error::InvalidConfig("n_occ, n_proxy or reps out of range".into()));
        }
        if self.kappa <= 0.0 {
            return Err(Error::InvalidConfig("kappa must be positive".into()));
        }
        if self.problem == Problem::LippmannSchwinger {
            for &n in std::iter::once(&self.n).chain(self.n_list.iter()) {
                let side = (n as f64).sqrt().round() as usize;
                if side * side != n {
                    return Err(Error::InvalidConfig(format!("N = {n} is not a perfect square")));
                }
            }
        }
        Ok(())
    }

    pub fn sizes(&self) -> Vec<usize> {
        if self.n_list.is_empty() {
            vec![self.n]
        } else {
            self.n_list.clone()
        }
    }

    /// Serialize every key; parsing this text reproduces the config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "problem = {}\n",
            match self.problem {
                Problem::CircleBump => "circle-bump",
                Problem::LippmannSchwinger => "lippmann-schwinger",
            }
        ));
        s.push_str(&format!("n = {}\n", self.n));
        if !self.n_list.is_empty() {
            let list: Vec<String> = self.n_list.iter().map(|n| n.to_string()).collect();
            s.push_str(&format!("n_list = {}\n", list.join(",")));
        }
        s.push_str(&format!("eps = {:e}\n", self.eps));
        s.push_str(&format!(
            "kind = {}\n",
            match self.kind {
                skelfac::factor::FactorKind::Rskelf => "rskelf",
                skelfac::factor::FactorKind::Hif => "hif",
            }
        ));
        s.push_str(&format!(
            "mode = {}\n",
            match self.mode {
                Mode::FixedProportion => "fixed-proportion",
                Mode::FixedCount => "fixed-count",
            }
        ));
        s.push_str(&format!("kappa = {}\n", self.kappa));
        s.push_str(&format!("n_occ = {}\n", self.n_occ));
        s.push_str(&format!("n_proxy = {}\n", self.n_proxy));
        s.push_str(&format!("seed = {}\n", self.seed));
        s.push_str(&format!("reps = {}\n", self.reps));
        if let Some(out) = &self.out {
            s.push_str(&format!("out = {out}\n"));
        }
        s
    }
}
