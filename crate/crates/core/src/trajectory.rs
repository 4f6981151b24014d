use std::io::Write;

use crate::error::{Error, Result};

/// Sampled observables: mean phenotype, mean fitness and total size.
///
/// For the PDE solvers `size` is the pre-renormalization mass; for the
/// individual-based models it is `N_t / K`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub xbar: Vec<Vec<f64>>,
    pub mbar: Vec<f64>,
    pub size: Vec<f64>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, xbar: Vec<f64>, mbar: f64, size: f64) {
        debug_assert!(self.times.last().is_none_or(|&last| t > last));
        self.times.push(t);
        self.xbar.push(xbar);
        self.mbar.push(mbar);
        self.size.push(size);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.xbar.first().map_or(0, Vec::len)
    }

    /// First coordinate of the mean phenotype over time.
    pub fn xbar1(&self) -> Vec<f64> {
        self.xbar.iter().map(|x| x[0]).collect()
    }

    /// Index of the sample whose time is closest to `t`.
    pub fn nearest_sample(&self, t: f64) -> Option<usize> {
        (0..self.len()).min_by(|&i, &j| {
            (self.times[i] - t)
                .abs()
                .total_cmp(&(self.times[j] - t).abs())
        })
    }

    /// Observable `x̄_1` at exactly time `t` (within `1e-9`).
    pub fn xbar1_at(&self, t: f64) -> Result<f64> {
        let i = self
            .nearest_sample(t)
            .filter(|&i| (self.times[i] - t).abs() <= 1e-9 * (1.0 + t.abs()))
            .ok_or_else(|| Error::OutOfRange(format!("no sample recorded at t = {t}")))?;
        Ok(self.xbar[i][0])
    }

    pub fn check_invariants(&self) -> Result<()> {
        let n = self.times.len();
        if self.xbar.len() != n || self.mbar.len() != n || self.size.len() != n {
            return Err(Error::Precondition("trajectory columns have unequal lengths".into()));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Precondition("trajectory times are not strictly increasing".into()));
        }
        Ok(())
    }

    /// CSV with columns `t, xbar_1..xbar_n, mbar, <size_column>`, plus
    /// `mbar_minus_final` when requested.
    pub fn write_csv<W: Write>(&self, mut out: W, size_column: &str, with_relative: bool) -> Result<()> {
        let n = self.dim();
        let mut header = vec!["t".to_owned()];
        header.extend((1..=n).map(|k| format!("xbar_{k}")));
        header.push("mbar".into());
        header.push(size_column.into());
        if with_relative {
            header.push("mbar_minus_final".into());
        }
        writeln!(out, "{}", header.join(","))?;
        let last = self.mbar.last().copied().unwrap_or(0.0);
        for i in 0..self.len() {
            let mut row = vec![format!("{}", self.times[i])];
            row.extend(self.xbar[i].iter().map(|v| format!("{v:e}")));
            row.push(format!("{:e}", self.mbar[i]));
            row.push(format!("{:e}", self.size[i]));
            if with_relative {
                row.push(format!("{:e}", self.mbar[i] - last));
            }
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}
