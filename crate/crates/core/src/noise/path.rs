use std::io::Write;
use std::path::Path;

use crate::csv::{fmt_f64, write_lines};
use crate::error::{Error, Result};

/// A sampled noise trajectory on the uniform grid `t_k = k * dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisePath {
    pub dt: f64,
    /// `values[0] == 0` for the increment-driven processes; the OU path stores its state.
    pub values: Vec<f64>,
    /// `increments[k] == values[k + 1] - values[k]`, bit for bit.
    pub increments: Vec<f64>,
}

impl NoisePath {
    /// Builds a path starting at zero by cumulative summation.
    pub fn from_increments(dt: f64, raw: &[f64]) -> Self {
        Self::from_start_and_increments(dt, 0.0, raw)
    }

    pub fn from_start_and_increments(dt: f64, start: f64, raw: &[f64]) -> Self {
        let mut values = Vec::with_capacity(raw.len() + 1);
        values.push(start);
        let mut acc = start;
        for &d in raw {
            acc += d;
            values.push(acc);
        }
        Self::from_values(dt, values)
    }

    pub fn from_values(dt: f64, values: Vec<f64>) -> Self {
        let increments = values.windows(2).map(|w| w[1] - w[0]).collect();
        Self {
            dt,
            values,
            increments,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let rows = self
            .values
            .iter()
            .enumerate()
            .map(|(k, v)| format!("{},{}", fmt_f64(self.time(k)), fmt_f64(*v)));
        write_lines(out, "t,value", rows)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}
