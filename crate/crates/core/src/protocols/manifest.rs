use std::fmt::{Display, Write as _};

use crate::fit::FitResult;

/// Provenance written next to every data file: protocol, the experiment it
/// mirrors, configuration hash, seed, and summary results.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunManifest {
    pub protocol: String,
    pub reproduces: String,
    pub config_hash: String,
    pub seed: u64,
    pub entries: Vec<(String, String)>,
}

impl RunManifest {
    pub fn new(protocol: &str, reproduces: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            protocol: protocol.into(),
            reproduces: reproduces.into(),
            config_hash: config_hash.into(),
            seed,
            entries: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.push((key.into(), value.to_string()));
    }

    /// One `prefix.name = value` and `prefix.name_sigma = sigma` pair per parameter.
    pub fn push_fit(&mut self, prefix: &str, fit: &FitResult) {
        for p in &fit.params {
            self.set(&format!("{prefix}.{}", p.name), format!("{:.9e}", p.value));
            self.set(&format!("{prefix}.{}_sigma", p.name), format!("{:.3e}", p.sigma));
        }
        self.set(&format!("{prefix}.converged"), fit.converged);
        if !fit.at_bound.is_empty() {
            self.set(&format!("{prefix}.at_bound"), fit.at_bound.join("|"));
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "protocol = {}", self.protocol);
        let _ = writeln!(s, "reproduces = {}", self.reproduces);
        let _ = writeln!(s, "config_hash = {}", self.config_hash);
        let _ = writeln!(s, "seed = {}", self.seed);
        for (k, v) in &self.entries {
            let _ = writeln!(s, "{k} = {}", v.replace('\n', " "));
        }
        s
    }
}
