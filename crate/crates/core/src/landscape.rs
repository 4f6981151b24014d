//! Phenotype-to-rate maps: birth `b`, survival `s`, death `d = r - s` and
//! Malthusian fitness `m = b - d = b + s - r`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::Grid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Family {
    GaussianTwoPeak,
    GaussianTwoPeakAsymmetric,
    PiecewiseConstant1D,
    Tanh1D,
    Custom,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::GaussianTwoPeak => "GaussianTwoPeak",
            Family::GaussianTwoPeakAsymmetric => "GaussianTwoPeakAsymmetric",
            Family::PiecewiseConstant1D => "PiecewiseConstant1D",
            Family::Tanh1D => "Tanh1D",
            Family::Custom => "Custom",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            Family::GaussianTwoPeak,
            Family::GaussianTwoPeakAsymmetric,
            Family::PiecewiseConstant1D,
            Family::Tanh1D,
            Family::Custom,
        ];
        all.into_iter()
            .find(|f| f.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown landscape family `{s}`")))
    }
}

/// Closed box `[lo_1, hi_1] x ... x [lo_n, hi_n]`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Domain {
    pub bounds: Vec<(f64, f64)>,
}

impl Domain {
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Self {
        Self {
            bounds: vec![(lo, hi); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.bounds.len()
            && x
                .iter()
                .zip(&self.bounds)
                .all(|(&v, &(lo, hi))| v >= lo && v <= hi)
    }
}

/// Birth and survival rates tabulated on a grid, interpolated multilinearly.
#[derive(Clone, Debug, PartialEq)]
pub struct RateTable {
    grid: Grid,
    birth: Vec<f64>,
    survival: Vec<f64>,
}

impl RateTable {
    pub fn new(grid: Grid, birth: Vec<f64>, survival: Vec<f64>) -> Result<Self> {
        if birth.len() != grid.len() || survival.len() != grid.len() {
            return Err(Error::InvalidParameter(format!(
                "rate tables must have {} entries (got {} and {})",
                grid.len(),
                birth.len(),
                survival.len()
            )));
        }
        if let Some(v) = birth.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
            return Err(Error::InvalidParameter(format!(
                "tabulated birth rate must be positive, found {v}"
            )));
        }
        Ok(Self {
            grid,
            birth,
            survival,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        let dim = self.grid.dim();
        let mut base = 0;
        let mut frac = [0.0; 2];
        for k in 0..dim {
            let axis = self.grid.axis(k);
            let t = ((x[k] - axis.lo) / axis.spacing()).clamp(0.0, (axis.nodes - 1) as f64);
            let i = (t.floor() as usize).min(axis.nodes - 2);
            frac[k] = t - i as f64;
            base += i * self.grid.stride(k);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dim) {
            let mut w = 1.0;
            let mut idx = base;
            for (k, f) in frac.iter().enumerate().take(dim) {
                if corner >> k & 1 == 1 {
                    w *= f;
                    idx += self.grid.stride(k);
                } else {
                    w *= 1.0 - f;
                }
            }
            if w != 0.0 {
                acc += w * values[idx];
            }
        }
        acc
    }
}

/// Birth and survival rates over the phenotype domain.
///
/// Parameters that a family does not use are kept at their defaults and ignored.
#[derive(Clone, Debug, PartialEq)]
pub struct PhenotypeLandscape {
    pub dim: usize,
    pub family: Family,
    pub beta: f64,
    pub sigma_sq: Vec<f64>,
    pub b0: f64,
    pub r: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub a: f64,
    pub big_m: f64,
    pub domain: Domain,
    table: Option<Arc<RateTable>>,
}

/// Domain half-width used for the Gaussian families.
pub const GAUSSIAN_HALF_WIDTH: f64 = 1.3;

impl PhenotypeLandscape {
    /// Two Gaussian bumps of unit height, the birth one at `(beta, 0, ...)` and
    /// the survival one at its mirror image.
    pub fn gaussian_two_peak(dim: usize, beta: f64, sigma_sq: Vec<f64>, b0: f64, r: f64) -> Result<Self> {
        let land = Self {
            dim,
            family: Family::GaussianTwoPeak,
            beta,
            sigma_sq,
            b0,
            r,
            gamma: 1.0,
            alpha: 40.0,
            a: 1.0,
            big_m: 1e3,
            domain: Domain::cube(dim, -GAUSSIAN_HALF_WIDTH, GAUSSIAN_HALF_WIDTH),
            table: None,
        };
        land.validate()?;
        Ok(land)
    }

    /// The two-trait landscape of the main trajectory experiments:
    /// `beta = 1/2`, widths `1/10`, `b0 = 0.7`, `r = 1 + b0`.
    pub fn standard() -> Self {
        Self::gaussian_two_peak(2, 0.5, vec![0.1, 0.1], 0.7, 1.7).expect("valid constants")
    }

    /// Birth bump scaled by `gamma`, survival bump of unit height.
    pub fn asymmetric(dim: usize, beta: f64, sigma_sq: Vec<f64>, b0: f64, r: f64, gamma: f64) -> Result<Self> {
        let mut land = Self::gaussian_two_peak(dim, beta, sigma_sq, b0, r)?;
        land.family = Family::GaussianTwoPeakAsymmetric;
        land.gamma = gamma;
        land.validate()?;
        Ok(land)
    }

    /// `b = 1` on `(-a, 0)`, `b = 2` on `(0, a)`, `s = 3 - b` inside, so that
    /// `m = 3 - r` there; outside `(-a, a)` the fitness drops to `-2M - r`.
    ///
    /// The exterior birth rate is kept at 1 (rather than a negative value)
    /// so that `b > 0` everywhere; only the exterior fitness enters the
    /// stationary problem in a way that matters.
    pub fn piecewise_constant(a: f64, big_m: f64, r: f64) -> Result<Self> {
        let land = Self {
            dim: 1,
            family: Family::PiecewiseConstant1D,
            beta: 0.5,
            sigma_sq: vec![0.1],
            b0: 1.0,
            r,
            gamma: 1.0,
            alpha: 40.0,
            a,
            big_m,
            domain: Domain::cube(1, -a, a),
            table: None,
        };
        land.validate()?;
        Ok(land)
    }

    /// `b = 1 + (1 + tanh(alpha x))/2`, `s = b(-x)`: the fitness is flat.
    pub fn tanh(alpha: f64, a: f64, r: f64) -> Result<Self> {
        let land = Self {
            dim: 1,
            family: Family::Tanh1D,
            beta: 0.5,
            sigma_sq: vec![0.1],
            b0: 1.0,
            r,
            gamma: 1.0,
            alpha,
            a,
            big_m: 1e3,
            domain: Domain::cube(1, -a, a),
            table: None,
        };
        land.validate()?;
        Ok(land)
    }

    /// Tabulated rates. The domain is the table's grid extent.
    pub fn custom(table: RateTable, r: f64) -> Result<Self> {
        let grid = table.grid();
        let dim = grid.dim();
        let domain = Domain {
            bounds: grid.axes().iter().map(|a| (a.lo, a.hi)).collect(),
        };
        let land = Self {
            dim,
            family: Family::Custom,
            beta: 0.5,
            sigma_sq: vec![0.1; dim],
            b0: 0.0,
            r,
            gamma: 1.0,
            alpha: 40.0,
            a: 1.0,
            big_m: 1e3,
            domain,
            table: Some(Arc::new(table)),
        };
        land.validate()?;
        Ok(land)
    }

    pub fn with_domain(mut self, domain: Domain) -> Result<Self> {
        self.domain = domain;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.dim == 0 {
            return bad("dimension must be at least 1".into());
        }
        if self.domain.dim() != self.dim {
            return bad(format!(
                "domain has {} axes but the landscape has dimension {}",
                self.domain.dim(),
                self.dim
            ));
        }
        if self.domain.bounds.iter().any(|&(lo, hi)| !(hi > lo)) {
            return bad("domain bounds must satisfy lo < hi".into());
        }
        if !self.r.is_finite() {
            return bad(format!("r must be finite, got {}", self.r));
        }
        match self.family {
            Family::GaussianTwoPeak | Family::GaussianTwoPeakAsymmetric => {
                if self.sigma_sq.len() != self.dim {
                    return bad(format!(
                        "sigma_sq needs {} entries, got {}",
                        self.dim,
                        self.sigma_sq.len()
                    ));
                }
                if self.sigma_sq.iter().any(|v| !(*v > 0.0)) {
                    return bad("sigma_sq entries must be positive".into());
                }
                if !(self.beta > 0.0) {
                    return bad(format!("beta must be positive, got {}", self.beta));
                }
                if !(self.b0 >= 0.0) {
                    return bad(format!("b0 must be nonnegative, got {}", self.b0));
                }
                if !(self.gamma >= 1.0) {
                    return bad(format!("gamma must be at least 1, got {}", self.gamma));
                }
            }
            Family::PiecewiseConstant1D | Family::Tanh1D => {
                if self.dim != 1 {
                    return bad(format!("{} is one-dimensional", self.family.name()));
                }
                if !(self.a > 0.0) {
                    return bad(format!("a must be positive, got {}", self.a));
                }
                if self.family == Family::Tanh1D && !(self.alpha > 0.0) {
                    return bad(format!("alpha must be positive, got {}", self.alpha));
                }
                if self.family == Family::PiecewiseConstant1D && !(self.big_m > 0.0) {
                    return bad(format!("M must be positive, got {}", self.big_m));
                }
            }
            Family::Custom => {
                if self.table.is_none() {
                    return bad("custom landscape without a rate table".into());
                }
            }
        }
        Ok(())
    }

    /// Whether `b(x) = s(reflect(x))` holds by construction.
    pub fn is_symmetric(&self) -> bool {
        match self.family {
            Family::GaussianTwoPeak | Family::PiecewiseConstant1D | Family::Tanh1D => true,
            Family::GaussianTwoPeakAsymmetric => self.gamma == 1.0,
            Family::Custom => false,
        }
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if self.domain.contains(x) {
            Ok(())
        } else {
            Err(Error::OutsideDomain { point: x.to_vec() })
        }
    }

    pub fn birth(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.birth_unchecked(x))
    }

    pub fn survival(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.survival_unchecked(x))
    }

    pub fn death(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.r - self.survival_unchecked(x))
    }

    pub fn fitness(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        Ok(self.fitness_unchecked(x))
    }

    /// The Gaussian bump centred on the birth optimum.
    fn bump(&self, x: &[f64]) -> f64 {
        let mut e = (x[0] - self.beta).powi(2) / (2.0 * self.sigma_sq[0]);
        for k in 1..self.dim {
            e += x[k] * x[k] / (2.0 * self.sigma_sq[k]);
        }
        (-e).exp()
    }

    fn piecewise_birth(&self, x: f64) -> f64 {
        if x > 0.0 && x < self.a {
            2.0
        } else if x < 0.0 && x > -self.a {
            1.0
        } else if x == 0.0 {
            1.5
        } else {
            1.0
        }
    }

    fn piecewise_survival(&self, x: f64) -> f64 {
        if x.abs() < self.a {
            3.0 - self.piecewise_birth(x)
        } else {
            -2.0 * self.big_m - 1.0
        }
    }

    pub fn birth_unchecked(&self, x: &[f64]) -> f64 {
        match self.family {
            Family::GaussianTwoPeak => self.b0 + self.bump(x),
            Family::GaussianTwoPeakAsymmetric => self.b0 + self.gamma * self.bump(x),
            Family::PiecewiseConstant1D => self.piecewise_birth(x[0]),
            Family::Tanh1D => 1.0 + 0.5 * (1.0 + (self.alpha * x[0]).tanh()),
            Family::Custom => {
                let t = self.table.as_ref().expect("validated");
                t.interpolate(&t.birth, x)
            }
        }
    }

    pub fn survival_unchecked(&self, x: &[f64]) -> f64 {
        match self.family {
            Family::GaussianTwoPeak | Family::GaussianTwoPeakAsymmetric => {
                self.b0 + self.bump(&reflect(x))
            }
            Family::PiecewiseConstant1D => self.piecewise_survival(x[0]),
            Family::Tanh1D => 1.0 + 0.5 * (1.0 + (self.alpha * -x[0]).tanh()),
            Family::Custom => {
                let t = self.table.as_ref().expect("validated");
                t.interpolate(&t.survival, x)
            }
        }
    }

    pub fn death_unchecked(&self, x: &[f64]) -> f64 {
        self.r - self.survival_unchecked(x)
    }

    pub fn fitness_unchecked(&self, x: &[f64]) -> f64 {
        self.birth_unchecked(x) + self.survival_unchecked(x) - self.r
    }

    /// Height of the birth bump at the survival optimum.
    pub fn cross_height(&self) -> f64 {
        (-2.0 * self.beta * self.beta / self.sigma_sq[0]).exp()
    }

    pub fn birth_optimum(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        x[0] = self.beta;
        x
    }

    pub fn survival_optimum(&self) -> Vec<f64> {
        reflect(&self.birth_optimum())
    }
}

/// Mirror image across the hyperplane `x_1 = 0`.
pub fn reflect(x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    if let Some(first) = y.first_mut() {
        *first = -*first;
    }
    y
}

/// `b > s` at every node with `x_1 > 0` and `s > b` at every node with `x_1 < 0`.
pub fn check_half_space_ordering(land: &PhenotypeLandscape, grid: &Grid) -> bool {
    let mut p = vec![0.0; grid.dim()];
    (0..grid.len()).all(|idx| {
        grid.point_into(idx, &mut p);
        let b = land.birth_unchecked(&p);
        let s = land.survival_unchecked(&p);
        if p[0] > 0.0 {
            b > s
        } else if p[0] < 0.0 {
            s > b
        } else {
            true
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 1e-14 * (1.0 + b.abs())
    }

    #[test]
    fn gaussian_values() {
        let land = PhenotypeLandscape::standard();
        assert!(close(land.birth(&[0.5, 0.0]).unwrap(), 1.7));
        assert!(close(land.birth(&[-0.5, 0.0]).unwrap(), 0.7 + (-5.0f64).exp()));
        assert!(close(land.survival(&[-0.5, 0.0]).unwrap(), 1.7));
        assert!(close(
            land.fitness(&[0.5, 0.0]).unwrap(),
            1.7 + 0.7 + (-5.0f64).exp() - 1.7
        ));
        assert!(land.death(&[-0.5, 0.0]).unwrap().abs() < 1e-15);
    }

    #[test]
    fn asymmetric_survival_keeps_unit_height() {
        let land = PhenotypeLandscape::asymmetric(2, 0.5, vec![0.1, 0.1], 0.7, 1.7, 1.05).unwrap();
        assert!(close(land.survival(&[-0.5, 0.0]).unwrap(), 1.7));
        assert!(close(land.birth(&[0.5, 0.0]).unwrap(), 0.7 + 1.05));
    }

    #[test]
    fn asymmetric_peak_gap() {
        let gamma = 1.07;
        let land = PhenotypeLandscape::asymmetric(2, 0.5, vec![0.1, 0.1], 0.7, 1.7, gamma).unwrap();
        let gap = land.fitness(&land.birth_optimum()).unwrap()
            - land.fitness(&land.survival_optimum()).unwrap();
        let eps = land.cross_height();
        assert!((gap - (gamma - 1.0) * (1.0 - eps)).abs() < 1e-14);
    }

    #[test]
    fn tanh_and_piecewise_values() {
        let t = PhenotypeLandscape::tanh(40.0, 1.0, 2.0).unwrap();
        assert_eq!(t.birth(&[0.0]).unwrap(), 1.5);
        let r = 0.4;
        let p = PhenotypeLandscape::piecewise_constant(1.0, 1e3, r).unwrap();
        for x in [-0.9, -0.3, 0.0, 0.2, 0.99] {
            assert!(close(p.fitness(&[x]).unwrap(), 3.0 - r));
        }
        let wide = p.with_domain(Domain::cube(1, -1.5, 1.5)).unwrap();
        assert!(close(wide.fitness(&[1.2]).unwrap(), -2e3 - r));
    }

    #[test]
    fn outside_domain_is_an_error() {
        let land = PhenotypeLandscape::standard();
        assert!(matches!(land.birth(&[1.4, 0.0]), Err(Error::OutsideDomain { .. })));
        assert!(land.fitness(&[0.0]).is_err());
    }

    #[test]
    fn reflect_examples() {
        assert_eq!(reflect(&[0.5, -0.3]), vec![-0.5, -0.3]);
        assert_eq!(reflect(&[0.0, 1.0]), vec![0.0, 1.0]);
    }

    #[test]
    fn half_space_ordering() {
        let grid = Grid::uniform(2, -1.3, 1.3, 131).unwrap();
        assert!(check_half_space_ordering(&PhenotypeLandscape::standard(), &grid));
        let g1 = Grid::uniform(1, -1.0, 1.0, 1001).unwrap();
        let t = PhenotypeLandscape::tanh(40.0, 1.0, 2.0).unwrap();
        assert!(check_half_space_ordering(&t, &g1));
        let flat = RateTable::new(g1.clone(), vec![1.0; g1.len()], vec![1.0; g1.len()]).unwrap();
        let flat = PhenotypeLandscape::custom(flat, 1.5).unwrap();
        assert!(!check_half_space_ordering(&flat, &g1));
    }

    #[test]
    fn custom_table_interpolates_bilinearly() {
        let grid = Grid::uniform(2, 0.0, 1.0, 3).unwrap();
        let birth = grid.tabulate(|p| 1.0 + p[0] + 2.0 * p[1]);
        let surv = grid.tabulate(|p| 0.5 * p[0] * p[1]);
        let land = PhenotypeLandscape::custom(RateTable::new(grid, birth, surv).unwrap(), 1.0).unwrap();
        assert!(close(land.birth(&[0.3, 0.7]).unwrap(), 1.0 + 0.3 + 1.4));
        assert!(close(land.survival(&[0.25, 0.75]).unwrap(), 0.5 * 0.25 * 0.75));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(PhenotypeLandscape::gaussian_two_peak(2, 0.5, vec![0.1], 0.7, 1.7).is_err());
        assert!(PhenotypeLandscape::asymmetric(2, 0.5, vec![0.1, 0.1], 0.7, 1.7, 0.9).is_err());
        assert!(PhenotypeLandscape::tanh(-1.0, 1.0, 2.0).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]
        #[test]
        fn symmetry_identity(x1 in -1.3f64..1.3, x2 in -1.3f64..1.3, t in -1.0f64..1.0) {
            let land = PhenotypeLandscape::standard();
            let x = [x1, x2];
            let xr = reflect(&x);
            prop_assert!((land.birth(&x).unwrap() - land.survival(&xr).unwrap()).abs() <= 1e-12);
            prop_assert_eq!(land.fitness(&x).unwrap(), land.fitness(&xr).unwrap());
            prop_assert!(land.death(&x).unwrap() >= -1e-15);

            let th = PhenotypeLandscape::tanh(40.0, 1.0, 2.0).unwrap();
            prop_assert!((th.birth(&[t]).unwrap() - th.survival(&[-t]).unwrap()).abs() <= 1e-12);
            prop_assert!((th.fitness(&[t]).unwrap() - 1.0).abs() <= 1e-14);
            prop_assert!(th.death(&[t]).unwrap() >= 0.0);
        }

        #[test]
        fn half_space_inequality_pointwise(x1 in 1e-6f64..1.3, x2 in -1.3f64..1.3) {
            let land = PhenotypeLandscape::standard();
            prop_assert!(land.birth(&[x1, x2]).unwrap() > land.survival(&[x1, x2]).unwrap());
            prop_assert!(land.survival(&[-x1, x2]).unwrap() > land.birth(&[-x1, x2]).unwrap());
        }
    }
}
