//! Local climatologies, anomaly standardization, the standard normal CDF
//! and its inverse, and quantile-exceedance labels.

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::grid::GridSpec;

pub const DAYS_PER_YEAR: usize = 365;
pub const SIGMA_FLOOR: f64 = 1e-6;
pub const DEFAULT_WINDOW_DAYS: usize = 31;

/// A field of standardized anomalies.
pub type AnomalyField = Field;

/// Day-of-year slot in `0..365`. Feb 29 shares Feb 28's slot.
pub fn day_of_year_index(date: NaiveDate) -> usize {
    let ord = date.ordinal0() as usize;
    if date.leap_year() && ord >= 59 {
        ord - 1
    } else {
        ord
    }
}

/// Standard normal CDF.
#[inline]
pub fn phi(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Standard normal quantile function.
pub fn phi_inv(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::invalid(format!("quantile must lie in (0, 1), got {q}")));
    }
    Ok(-std::f64::consts::SQRT_2 * erfc_inv(2.0 * q))
}

#[derive(Debug, Default, Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1.0;
        let d = x - self.mean;
        self.mean += d / self.n;
        self.m2 += d * (x - self.mean);
    }

    /// Chan et al. pairwise combination.
    fn merge(&mut self, o: &Moments) {
        if o.n == 0.0 {
            return;
        }
        if self.n == 0.0 {
            *self = *o;
            return;
        }
        let n = self.n + o.n;
        let d = o.mean - self.mean;
        self.mean += d * o.n / n;
        self.m2 += o.m2 + d * d * self.n * o.n / n;
        self.n = n;
    }

    fn std(&self) -> f64 {
        if self.n < 2.0 {
            return SIGMA_FLOOR;
        }
        (self.m2 / (self.n - 1.0)).sqrt().max(SIGMA_FLOOR)
    }
}

/// Per-cell, per-day-of-year mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Climatology {
    grid: GridSpec,
    window_days: usize,
    source_years: (i32, i32),
    /// `[doy][cell]`
    mean: Vec<f64>,
    std: Vec<f64>,
}

impl Climatology {
    pub fn from_parts(
        grid: GridSpec,
        window_days: usize,
        source_years: (i32, i32),
        mean: Vec<f64>,
        std: Vec<f64>,
    ) -> Result<Self> {
        let len = DAYS_PER_YEAR * grid.cell_count();
        if mean.len() != len || std.len() != len {
            return Err(Error::invalid(format!(
                "climatology needs {len} values per channel, got {} and {}",
                mean.len(),
                std.len()
            )));
        }
        if std.iter().any(|s| !(*s >= SIGMA_FLOOR)) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid("climatology std below floor or non-finite mean"));
        }
        Ok(Climatology {
            grid,
            window_days,
            source_years,
            mean,
            std,
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn window_days(&self) -> usize {
        self.window_days
    }

    pub fn source_years(&self) -> (i32, i32) {
        self.source_years
    }

    pub fn mean_slice(&self, doy: usize) -> &[f64] {
        let n = self.grid.cell_count();
        &self.mean[doy * n..(doy + 1) * n]
    }

    pub fn std_slice(&self, doy: usize) -> &[f64] {
        let n = self.grid.cell_count();
        &self.std[doy * n..(doy + 1) * n]
    }

    pub fn means(&self) -> &[f64] {
        &self.mean
    }

    pub fn stds(&self) -> &[f64] {
        &self.std
    }
}

/// Fits a climatology from dated fields. Each day-of-year slot pools all
/// values within `±(window_days-1)/2` days (circular over the year).
pub fn fit_climatology(series: &[(NaiveDate, Field)], window_days: usize) -> Result<Climatology> {
    if window_days == 0 || window_days % 2 == 0 {
        return Err(Error::invalid(format!("window_days must be odd and >= 1, got {window_days}")));
    }
    let Some((_, first)) = series.first() else {
        return Err(Error::InsufficientData("empty series".into()));
    };
    let grid = first.grid();
    for (_, f) in series {
        f.ensure_grid(grid)?;
    }
    // Fixed accumulation order makes the fit independent of input order.
    let mut order: Vec<&(NaiveDate, Field)> = series.iter().collect();
    order.sort_by_key(|(d, _)| *d);
    if let Some(w) = order.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::invalid(format!("duplicate date {} in series", w[0].0)));
    }
    if order.len() < DAYS_PER_YEAR {
        return Err(Error::InsufficientData(format!(
            "climatology needs at least {DAYS_PER_YEAR} days, got {}",
            order.len()
        )));
    }

    let cells = grid.cell_count();
    let mut per_day = vec![Moments::default(); DAYS_PER_YEAR * cells];
    for (date, field) in &order {
        let base = day_of_year_index(*date) * cells;
        for (m, &x) in per_day[base..base + cells].iter_mut().zip(field.values()) {
            m.push(x);
        }
    }

    let half = (window_days - 1) / 2;
    let offsets: Vec<usize> = if 2 * half + 1 >= DAYS_PER_YEAR {
        (0..DAYS_PER_YEAR).collect()
    } else {
        (0..window_days).map(|o| (o + DAYS_PER_YEAR - half) % DAYS_PER_YEAR).collect()
    };

    let mut mean = Vec::with_capacity(DAYS_PER_YEAR * cells);
    let mut std = Vec::with_capacity(DAYS_PER_YEAR * cells);
    for doy in 0..DAYS_PER_YEAR {
        for cell in 0..cells {
            let mut acc = Moments::default();
            for &o in &offsets {
                acc.merge(&per_day[((doy + o) % DAYS_PER_YEAR) * cells + cell]);
            }
            mean.push(acc.mean);
            std.push(acc.std());
        }
    }
    let years = (order[0].0.year(), order[order.len() - 1].0.year());
    Climatology::from_parts(grid, window_days, years, mean, std)
}

/// `x = (T - mu) / sigma` for the field's day of year.
pub fn standardize(field: &Field, date: NaiveDate, clim: &Climatology) -> Result<AnomalyField> {
    field.ensure_grid(clim.grid)?;
    let doy = day_of_year_index(date);
    let values = field
        .values()
        .iter()
        .zip(clim.mean_slice(doy).iter().zip(clim.std_slice(doy)))
        .map(|(&t, (&m, &s))| (t - m) / s)
        .collect();
    Field::from_values(field.grid(), values)
}

/// Inverse of [`standardize`]: `T = x * sigma + mu`.
pub fn destandardize(anoms: &AnomalyField, date: NaiveDate, clim: &Climatology) -> Result<Field> {
    anoms.ensure_grid(clim.grid)?;
    let doy = day_of_year_index(date);
    let values = anoms
        .values()
        .iter()
        .zip(clim.mean_slice(doy).iter().zip(clim.std_slice(doy)))
        .map(|(&x, (&m, &s))| x * s + m)
        .collect();
    Field::from_values(anoms.grid(), values)
}

/// Binary exceedance labels for one quantile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelField {
    grid: GridSpec,
    quantile: f64,
    labels: Vec<u8>,
}

impl LabelField {
    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn quantile(&self) -> f64 {
        self.quantile
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1).count()
    }
}

pub(crate) fn check_label_quantile(q: f64) -> Result<()> {
    if !(0.5..1.0).contains(&q) {
        return Err(Error::invalid(format!("label quantile must lie in [0.5, 1), got {q}")));
    }
    Ok(())
}

/// Anomaly threshold of the `q`-extreme: `x >= phi_inv(q)`.
pub fn exceedance_threshold(q: f64) -> Result<f64> {
    check_label_quantile(q)?;
    phi_inv(q)
}

pub fn label_extreme(anoms: &AnomalyField, q: f64) -> Result<LabelField> {
    let threshold = exceedance_threshold(q)?;
    Ok(LabelField {
        grid: anoms.grid(),
        quantile: q,
        labels: anoms.values().iter().map(|&x| u8::from(x >= threshold)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_pcg::Pcg64Mcg;

    fn grid() -> GridSpec {
        GridSpec::new(2).unwrap()
    }

    fn daily(start: NaiveDate, days: usize, f: impl Fn(NaiveDate, usize) -> f64) -> Vec<(NaiveDate, Field)> {
        (0..days)
            .map(|i| {
                let d = start + chrono::Days::new(i as u64);
                (d, Field::from_fn(grid(), |c| f(d, grid().index_of(c).unwrap())))
            })
            .collect()
    }

    fn ymd(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn leap_day_shares_feb_28() {
        assert_eq!(day_of_year_index(ymd(2020, 2, 29)), day_of_year_index(ymd(2020, 2, 28)));
        assert_eq!(day_of_year_index(ymd(2020, 3, 1)), day_of_year_index(ymd(2021, 3, 1)));
        assert_eq!(day_of_year_index(ymd(2020, 12, 31)), 364);
        assert_eq!(day_of_year_index(ymd(2021, 1, 1)), 0);
    }

    #[test]
    fn constant_series_floors_sigma() {
        let s = daily(ymd(2001, 1, 1), 730, |_, _| 5.0);
        let c = fit_climatology(&s, 31).unwrap();
        assert!(c.means().iter().all(|&m| m == 5.0));
        assert!(c.stds().iter().all(|&s| s == SIGMA_FLOOR));
    }

    #[test]
    fn whole_year_window_gives_global_mean() {
        let s = daily(ymd(2001, 1, 1), 730, |d, cell| (d.ordinal() as f64 * 0.37).sin() + cell as f64);
        let c = fit_climatology(&s, 365).unwrap();
        for cell in 0..grid().cell_count() {
            let direct: f64 = s.iter().map(|(_, f)| f.values()[cell]).sum::<f64>() / s.len() as f64;
            for doy in [0, 100, 364] {
                assert!((c.mean_slice(doy)[cell] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn day_of_year_series_recovered_with_unit_window() {
        let s = daily(ymd(2001, 1, 1), 3 * 365, |d, _| day_of_year_index(d) as f64);
        let c = fit_climatology(&s, 1).unwrap();
        let mut rng = Pcg64Mcg::seed_from_u64(10);
        for _ in 0..10 {
            let doy = rng.gen_range(0..365);
            let cell = rng.gen_range(0..grid().cell_count());
            assert_eq!(c.mean_slice(doy)[cell], doy as f64);
            assert_eq!(c.std_slice(doy)[cell], SIGMA_FLOOR);
        }
    }

    #[test]
    fn window_wraps_the_year_boundary() {
        // Value 1 on Jan 1, 0 elsewhere; Dec 31 with a 3-day window sees it.
        let s = daily(ymd(2001, 1, 1), 730, |d, _| f64::from(u8::from(d.ordinal0() == 0)));
        let c = fit_climatology(&s, 3).unwrap();
        assert!((c.mean_slice(364)[0] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(c.mean_slice(2)[0], 0.0);
    }

    #[test]
    fn fit_errors() {
        let s = daily(ymd(2001, 1, 1), 364, |_, _| 1.0);
        assert!(matches!(fit_climatology(&s, 31), Err(Error::InsufficientData(_))));
        assert!(matches!(fit_climatology(&[], 31), Err(Error::InsufficientData(_))));
        let s = daily(ymd(2001, 1, 1), 400, |_, _| 1.0);
        assert!(fit_climatology(&s, 30).is_err());
        assert!(fit_climatology(&s, 0).is_err());
        let mut dup = s.clone();
        dup.push(s[0].clone());
        assert!(fit_climatology(&dup, 31).is_err());
    }

    #[test]
    fn standardize_identities() {
        let mut rng = Pcg64Mcg::seed_from_u64(2);
        let s = daily(ymd(2001, 1, 1), 800, |_, _| 0.0)
            .into_iter()
            .map(|(d, f)| (d, f.map(|_| rng.gen_range(-3.0..3.0))))
            .collect::<Vec<_>>();
        let c = fit_climatology(&s, 31).unwrap();
        let date = ymd(2003, 7, 4);
        let doy = day_of_year_index(date);
        let mu = Field::from_values(grid(), c.mean_slice(doy).to_vec()).unwrap();
        assert!(standardize(&mu, date, &c).unwrap().values().iter().all(|&x| x == 0.0));
        let mu_sigma = Field::from_values(
            grid(),
            c.mean_slice(doy).iter().zip(c.std_slice(doy)).map(|(m, s)| m + s).collect(),
        )
        .unwrap();
        for &x in standardize(&mu_sigma, date, &c).unwrap().values() {
            assert!((x - 1.0).abs() < 1e-12);
        }
        let t = Field::from_fn(grid(), |_| rng.gen_range(-10.0..10.0));
        let x = standardize(&t, date, &c).unwrap();
        for cell in 0..grid().cell_count() {
            let want = (t.values()[cell] - c.mean_slice(doy)[cell]) / c.std_slice(doy)[cell];
            assert!((x.values()[cell] - want).abs() < 1e-12);
        }
        let back = destandardize(&x, date, &c).unwrap();
        for (a, b) in back.values().iter().zip(t.values()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(standardize(&Field::zeros(GridSpec::new(3).unwrap()), date, &c).is_err());
    }

    #[test]
    fn phi_basics() {
        assert_eq!(phi(0.0), 0.5);
        let mut rng = Pcg64Mcg::seed_from_u64(1);
        for _ in 0..1000 {
            let x = rng.gen_range(-8.0..8.0);
            assert!((phi(x) + phi(-x) - 1.0).abs() < 1e-12);
        }
        assert!((phi(1.2815515655446004) - 0.9).abs() < 1e-9);
    }

    #[test]
    fn phi_inv_basics() {
        assert!(phi_inv(0.5).unwrap().abs() < 1e-12);
        assert!((phi_inv(0.9).unwrap() - 1.2815515655).abs() < 1e-8);
        assert!(phi_inv(0.0).is_err());
        assert!(phi_inv(1.0).is_err());
        assert!(phi_inv(f64::NAN).is_err());
        let mut x = -5.0;
        while x <= 5.0 {
            assert!((phi_inv(phi(x)).unwrap() - x).abs() < 1e-8, "x={x}");
            x += 0.01;
        }
    }

    #[test]
    // Above |x| ~ 7.6 the upper tail falls below one ulp of 1.0.
    fn phi_is_strictly_increasing() {
        let xs: Vec<f64> = (0..10_000).map(|i| -7.0 + 14.0 * i as f64 / 9999.0).collect();
        for w in xs.windows(2) {
            assert!(phi(w[1]) > phi(w[0]), "{} {}", w[0], w[1]);
        }
    }

    #[test]
    fn labels() {
        let g = grid();
        assert!(label_extreme(&Field::zeros(g), 0.9).unwrap().labels().iter().all(|&y| y == 0));
        let t = phi_inv(0.9).unwrap();
        assert!(label_extreme(&Field::constant(g, t), 0.9).unwrap().labels().iter().all(|&y| y == 1));
        assert!(label_extreme(&Field::zeros(g), 0.4).is_err());
        assert!(label_extreme(&Field::zeros(g), 1.0).is_err());
        assert_eq!(label_extreme(&Field::zeros(g), 0.5).unwrap().positives(), g.cell_count());
    }
}
