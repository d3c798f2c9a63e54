use std::fmt::Write as _;

use crate::error::{Result, SpinLabError};
use crate::spin::BASIS_LABELS;

/// One swept measurement: axis, photon totals per point, and provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentRecord {
    pub sweep_name: String,
    pub x_label: String,
    pub x_unit: String,
    pub x: Vec<f64>,
    pub counts_signal: Vec<u64>,
    pub counts_reference: Vec<u64>,
    pub shots: u64,
    /// Normalized population per point, from the counts.
    pub population: Vec<f64>,
    /// Additional derived columns, e.g. the noiseless expectation.
    pub extra: Vec<(String, Vec<f64>)>,
    /// Ordered `key = value` pairs written into the CSV header.
    pub metadata: Vec<(String, String)>,
}

impl ExperimentRecord {
    pub fn new(sweep_name: &str, x_label: &str, x_unit: &str, shots: u64) -> Self {
        Self {
            sweep_name: sweep_name.into(),
            x_label: x_label.into(),
            x_unit: x_unit.into(),
            x: Vec::new(),
            counts_signal: Vec::new(),
            counts_reference: Vec::new(),
            shots,
            population: Vec::new(),
            extra: Vec::new(),
            metadata: Vec::new(),
        }
    }

    pub fn push(&mut self, x: f64, signal: u64, reference: u64, population: f64) {
        self.x.push(x);
        self.counts_signal.push(signal);
        self.counts_reference.push(reference);
        self.population.push(population);
    }

    pub fn meta(&mut self, key: &str, value: impl ToString) {
        self.metadata.push((key.into(), value.to_string()));
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.extra.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.len();
        let lens = [self.counts_signal.len(), self.counts_reference.len(), self.population.len()];
        if lens.iter().any(|&l| l != n) || self.extra.iter().any(|(_, v)| v.len() != n) {
            return Err(SpinLabError::Domain(format!("record `{}` has ragged columns", self.sweep_name)));
        }
        if self.shots == 0 {
            return Err(SpinLabError::Domain("record needs shots >= 1".into()));
        }
        Ok(())
    }

    /// CSV with a `#`-commented header carrying the metadata.
    pub fn to_csv(&self) -> Result<String> {
        self.validate()?;
        let mut s = String::new();
        let _ = writeln!(s, "# sweep = {}", self.sweep_name);
        let _ = writeln!(s, "# shots = {}", self.shots);
        let _ = writeln!(s, "# basis = [{}]", BASIS_LABELS.join(" | "));
        for (k, v) in &self.metadata {
            let _ = writeln!(s, "# {k} = {}", v.replace('\n', " "));
        }
        let mut header = vec![format!("{}_{}", self.x_label, self.x_unit), "counts_signal".into(), "counts_reference".into(), "population".into()];
        header.extend(self.extra.iter().map(|(n, _)| n.clone()));
        let _ = writeln!(s, "{}", header.join(","));
        for i in 0..self.x.len() {
            let mut row = vec![
                self.x[i].to_string(),
                self.counts_signal[i].to_string(),
                self.counts_reference[i].to_string(),
                self.population[i].to_string(),
            ];
            row.extend(self.extra.iter().map(|(_, v)| v[i].to_string()));
            let _ = writeln!(s, "{}", row.join(","));
        }
        Ok(s)
    }
}
