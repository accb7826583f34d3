//! Human Mortality Database period 1x1 table ingestion.
//!
//! Parses the whitespace-separated `Mx_1x1`, `Deaths_1x1` and `Exposures_1x1`
//! layouts (header lines, then Year / Age / Female / Male / Total columns,
//! with `110+` for the open age group and `.` for missing cells), pools ages
//! above a configured threshold into one open group, and builds dense
//! log-mortality surfaces with the smallest-positive-rate imputation
//! constant and Poisson-based observational standard deviations.

use std::collections::HashMap;
use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which quantity an HMD table carries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    DeathRates,
    Exposures,
    Deaths,
}

/// Which sex column to read. Total is the default throughout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Sex {
    Female,
    Male,
    #[default]
    Total,
}

impl Sex {
    fn column(self) -> usize {
        match self {
            Sex::Female => 2,
            Sex::Male => 3,
            Sex::Total => 4,
        }
    }
}

impl std::str::FromStr for Sex {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "female" | "f" => Ok(Sex::Female),
            "male" | "m" => Ok(Sex::Male),
            "total" | "t" => Ok(Sex::Total),
            other => Err(Error::Config(format!("unknown sex '{other}'"))),
        }
    }
}

impl fmt::Display for Sex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Sex::Female => "female",
            Sex::Male => "male",
            Sex::Total => "total",
        };
        f.write_str(s)
    }
}

/// One parsed row: (year, age, open-age flag, value or missing).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TableRow {
    pub year: i32,
    pub age: u32,
    pub open_age: bool,
    pub value: Option<f64>,
}

/// A parsed HMD table, rows in file order.
#[derive(Debug, Clone)]
pub struct RawMortalityTable {
    pub kind: TableKind,
    pub rows: Vec<TableRow>,
}

impl RawMortalityTable {
    /// Year range present in the table.
    pub fn year_range(&self) -> Option<(i32, i32)> {
        let min = self.rows.iter().map(|r| r.year).min()?;
        let max = self.rows.iter().map(|r| r.year).max()?;
        Some((min, max))
    }
}

/// Country-level extraction settings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountryConfig {
    pub code: String,
    pub commencing_year: i32,
    pub end_year: i32,
    pub max_age: u32,
    #[serde(default)]
    pub sex: Sex,
}

impl CountryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.commencing_year >= self.end_year {
            return Err(Error::Config(format!(
                "commencing_year {} must precede end_year {}",
                self.commencing_year, self.end_year
            )));
        }
        if self.max_age == 0 || self.max_age > 110 {
            return Err(Error::Config(format!(
                "max_age {} outside (0, 110]",
                self.max_age
            )));
        }
        Ok(())
    }

    /// Parse a plain-text `key = value` config file with fields
    /// `code`, `commencing_year`, `end_year`, `max_age`, `sex`.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected 'key = value', got '{line}'"),
            })?;
            map.insert(key.trim().to_string(), value.trim().to_string());
        }
        let get = |k: &str| {
            map.get(k)
                .cloned()
                .ok_or_else(|| Error::Config(format!("missing field '{k}'")))
        };
        let cfg = CountryConfig {
            code: get("code")?,
            commencing_year: get("commencing_year")?
                .parse()
                .map_err(|e| Error::Config(format!("commencing_year: {e}")))?,
            end_year: map
                .get("end_year")
                .map(|v| v.parse::<i32>())
                .transpose()
                .map_err(|e| Error::Config(format!("end_year: {e}")))?
                .unwrap_or(2015),
            max_age: get("max_age")?
                .parse()
                .map_err(|e| Error::Config(format!("max_age: {e}")))?,
            sex: map
                .get("sex")
                .map(|v| v.parse::<Sex>())
                .transpose()?
                .unwrap_or_default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parse an HMD period 1x1 table from a reader, using the Total column.
pub fn parse_hmd_table(reader: impl BufRead, kind: TableKind) -> Result<RawMortalityTable> {
    parse_hmd_table_sex(reader, kind, Sex::Total)
}

/// Parse an HMD period 1x1 table, selecting the value column by sex.
pub fn parse_hmd_table_sex(
    reader: impl BufRead,
    kind: TableKind,
    sex: Sex,
) -> Result<RawMortalityTable> {
    let mut rows = Vec::new();
    let mut seen: HashMap<(i32, u32), ()> = HashMap::new();
    let mut in_data = false;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.is_empty() {
            continue;
        }
        let year: i32 = match tokens[0].parse() {
            Ok(y) => {
                in_data = true;
                y
            }
            Err(_) if !in_data => continue, // header line
            Err(_) => {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("non-numeric year '{}'", tokens[0]),
                })
            }
        };
        if tokens.len() < 5 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 5 columns, got {}", tokens.len()),
            });
        }
        let age_tok = tokens[1];
        let (age, open_age) = if let Some(stripped) = age_tok.strip_suffix('+') {
            let age = stripped.parse::<u32>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("unparsable age '{age_tok}'"),
            })?;
            (age, true)
        } else {
            let age = age_tok.parse::<u32>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("unparsable age '{age_tok}'"),
            })?;
            (age, false)
        };
        let tok = tokens[sex.column()];
        let value = if tok == "." {
            None
        } else {
            let v = tok.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("unparsable value '{tok}'"),
            })?;
            if v < 0.0 {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("negative value {v}"),
                });
            }
            Some(v)
        };
        if seen.insert((year, age), ()).is_some() {
            return Err(Error::DuplicateCell { year, age });
        }
        rows.push(TableRow { year, age, open_age, value });
    }
    Ok(RawMortalityTable { kind, rows })
}

/// Dense age x year grid of central death rates with optional deaths and
/// exposures. Missing cells are NaN. The last age is the pooled open group.
#[derive(Debug, Clone)]
pub struct MortalitySurface {
    pub code: String,
    /// Ascending ages; the final entry is the pooled open group.
    pub ages: Vec<u32>,
    /// Ascending, contiguous years.
    pub years: Vec<i32>,
    /// Row-major ages x years rates; NaN marks missing.
    pub rates: Vec<f64>,
    pub deaths: Option<Vec<f64>>,
    pub exposures: Option<Vec<f64>>,
    /// True when the open group was pooled without exposure weighting.
    pub approximate_pooling: bool,
}

impl MortalitySurface {
    pub fn n_ages(&self) -> usize {
        self.ages.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    fn idx(&self, age_i: usize, year_i: usize) -> usize {
        age_i * self.years.len() + year_i
    }

    pub fn rate(&self, age_i: usize, year_i: usize) -> f64 {
        self.rates[self.idx(age_i, year_i)]
    }
}

/// Log-rate surface: `y = ln(m + c)` with the smallest-positive-rate
/// imputation constant `c`, plus optional per-cell observational standard
/// deviations of the log rate.
#[derive(Debug, Clone)]
pub struct LogMortalitySurface {
    pub code: String,
    pub ages: Vec<u32>,
    pub years: Vec<i32>,
    /// Row-major ages x years log rates.
    pub y: Vec<f64>,
    pub imputation_constant: f64,
    /// Row-major ages x years observational sd of the log rate, if known.
    pub sigma_obs: Option<Vec<f64>>,
}

impl LogMortalitySurface {
    pub fn n_ages(&self) -> usize {
        self.ages.len()
    }

    pub fn n_years(&self) -> usize {
        self.years.len()
    }

    pub fn idx(&self, age_i: usize, year_i: usize) -> usize {
        age_i * self.years.len() + year_i
    }

    pub fn value(&self, age_i: usize, year_i: usize) -> f64 {
        self.y[self.idx(age_i, year_i)]
    }

    /// One year's log rates over all ages.
    pub fn year_column(&self, year_i: usize) -> Vec<f64> {
        (0..self.ages.len()).map(|a| self.value(a, year_i)).collect()
    }

    /// Restrict to years up to and including `last_year`.
    pub fn up_to_year(&self, last_year: i32) -> Result<LogMortalitySurface> {
        let n_keep = self.years.iter().filter(|&&t| t <= last_year).count();
        if n_keep == 0 {
            return Err(Error::Coverage(format!(
                "no years at or before {last_year}"
            )));
        }
        let p = self.ages.len();
        let n = self.years.len();
        let take = |src: &Vec<f64>| -> Vec<f64> {
            let mut out = Vec::with_capacity(p * n_keep);
            for a in 0..p {
                out.extend_from_slice(&src[a * n..a * n + n_keep]);
            }
            out
        };
        Ok(LogMortalitySurface {
            code: self.code.clone(),
            ages: self.ages.clone(),
            years: self.years[..n_keep].to_vec(),
            y: take(&self.y),
            imputation_constant: self.imputation_constant,
            sigma_obs: self.sigma_obs.as_ref().map(take),
        })
    }
}

fn dense_grid(
    table: &RawMortalityTable,
    years: &[i32],
    ages: &[u32],
) -> Result<Vec<f64>> {
    let mut map: HashMap<(i32, u32), Option<f64>> = HashMap::new();
    for r in &table.rows {
        map.insert((r.year, r.age), r.value);
    }
    let mut grid = vec![f64::NAN; ages.len() * years.len()];
    for (ai, &age) in ages.iter().enumerate() {
        for (yi, &year) in years.iter().enumerate() {
            match map.get(&(year, age)) {
                Some(Some(v)) => grid[ai * years.len() + yi] = *v,
                Some(None) => {}
                None => {
                    return Err(Error::Data(format!(
                        "missing cell (year {year}, age {age})"
                    )))
                }
            }
        }
    }
    Ok(grid)
}

/// Assemble a pooled, year-restricted [`MortalitySurface`].
///
/// Ages above `cfg.max_age` collapse into one open group. With deaths and
/// exposures available the pooled rate is total deaths over total exposures;
/// otherwise it is the unweighted mean of the pooled rates (flagged
/// approximate). When deaths and exposures are both present, each cell's
/// rate is recomputed as deaths/exposures after a consistency check against
/// the published rate.
pub fn build_surface(
    rates: &RawMortalityTable,
    deaths: Option<&RawMortalityTable>,
    exposures: Option<&RawMortalityTable>,
    cfg: &CountryConfig,
) -> Result<MortalitySurface> {
    cfg.validate()?;
    let mut years: Vec<i32> = (cfg.commencing_year..=cfg.end_year).collect();
    let available: std::collections::HashSet<i32> = rates.rows.iter().map(|r| r.year).collect();
    years.retain(|y| available.contains(y));
    if years.is_empty() {
        return Err(Error::Coverage(format!(
            "no overlap between table years and [{}, {}]",
            cfg.commencing_year, cfg.end_year
        )));
    }
    if years.len() != (cfg.end_year - cfg.commencing_year + 1) as usize {
        return Err(Error::Coverage(format!(
            "table covers {} of the {} requested years",
            years.len(),
            cfg.end_year - cfg.commencing_year + 1
        )));
    }

    // Ages must be contiguous from 0 within each requested year.
    let mut max_listed_age = u32::MAX;
    for &year in &years {
        let mut ages_in_year: Vec<u32> = rates
            .rows
            .iter()
            .filter(|r| r.year == year)
            .map(|r| r.age)
            .collect();
        ages_in_year.sort_unstable();
        for (i, &a) in ages_in_year.iter().enumerate() {
            if a != i as u32 {
                return Err(Error::Data(format!(
                    "ages not contiguous from 0 in year {year}"
                )));
            }
        }
        let top = *ages_in_year.last().unwrap_or(&0);
        max_listed_age = max_listed_age.min(top);
    }
    if cfg.max_age > max_listed_age {
        return Err(Error::Data(format!(
            "max_age {} exceeds the top listed age {max_listed_age}",
            cfg.max_age
        )));
    }

    let full_ages: Vec<u32> = (0..=max_listed_age).collect();
    let rate_grid = dense_grid(rates, &years, &full_ages)?;
    let death_grid = deaths.map(|t| dense_grid(t, &years, &full_ages)).transpose()?;
    let expo_grid = exposures.map(|t| dense_grid(t, &years, &full_ages)).transpose()?;

    let ny = years.len();
    let out_ages: Vec<u32> = (0..=cfg.max_age).collect();
    let p = out_ages.len();
    let mut out_rates = vec![f64::NAN; p * ny];
    let mut out_deaths = death_grid.as_ref().map(|_| vec![f64::NAN; p * ny]);
    let mut out_expos = expo_grid.as_ref().map(|_| vec![f64::NAN; p * ny]);
    let weighted = death_grid.is_some() && expo_grid.is_some();

    for yi in 0..ny {
        // Copy ages below the pooling threshold.
        for ai in 0..p - 1 {
            let src = ai * ny + yi;
            let dst = ai * ny + yi;
            let mut m = rate_grid[src];
            if weighted {
                let d = death_grid.as_ref().unwrap()[src];
                let e = expo_grid.as_ref().unwrap()[src];
                if d.is_finite() && e.is_finite() && e > 0.0 && m.is_finite() {
                    let implied = d / e;
                    if (m - implied).abs() > 1e-3 * m.abs().max(1.0) {
                        return Err(Error::Data(format!(
                            "rate {m} inconsistent with deaths/exposures {implied} at age {ai}, year {}",
                            years[yi]
                        )));
                    }
                    m = implied;
                }
            }
            out_rates[dst] = m;
            if let (Some(od), Some(dg)) = (out_deaths.as_mut(), death_grid.as_ref()) {
                od[dst] = dg[src];
            }
            if let (Some(oe), Some(eg)) = (out_expos.as_mut(), expo_grid.as_ref()) {
                oe[dst] = eg[src];
            }
        }
        // Pool max_age..=max_listed_age into the open group.
        let pool: Vec<usize> = (cfg.max_age as usize..=max_listed_age as usize)
            .map(|ai| ai * ny + yi)
            .collect();
        let dst = (p - 1) * ny + yi;
        if weighted {
            let dg = death_grid.as_ref().unwrap();
            let eg = expo_grid.as_ref().unwrap();
            let d: f64 = pool.iter().map(|&i| dg[i]).filter(|v| v.is_finite()).sum();
            let e: f64 = pool.iter().map(|&i| eg[i]).filter(|v| v.is_finite()).sum();
            out_rates[dst] = if e > 0.0 { d / e } else { f64::NAN };
            out_deaths.as_mut().unwrap()[dst] = d;
            out_expos.as_mut().unwrap()[dst] = e;
        } else {
            let vals: Vec<f64> = pool
                .iter()
                .map(|&i| rate_grid[i])
                .filter(|v| v.is_finite())
                .collect();
            out_rates[dst] = if vals.is_empty() {
                f64::NAN
            } else {
                vals.iter().sum::<f64>() / vals.len() as f64
            };
            if let (Some(od), Some(dg)) = (out_deaths.as_mut(), death_grid.as_ref()) {
                od[dst] = pool.iter().map(|&i| dg[i]).filter(|v| v.is_finite()).sum();
            }
            if let (Some(oe), Some(eg)) = (out_expos.as_mut(), expo_grid.as_ref()) {
                oe[dst] = pool.iter().map(|&i| eg[i]).filter(|v| v.is_finite()).sum();
            }
        }
    }

    // Reject rows with no information at all.
    for ai in 0..p {
        if (0..ny).all(|yi| !out_rates[ai * ny + yi].is_finite()) {
            return Err(Error::Data(format!(
                "age {} has no observed rates in any year",
                out_ages[ai]
            )));
        }
    }

    Ok(MortalitySurface {
        code: cfg.code.clone(),
        ages: out_ages,
        years,
        rates: out_rates,
        deaths: out_deaths,
        exposures: out_expos,
        approximate_pooling: !weighted,
    })
}

/// Floor on the death count used in the Poisson variance 1/D.
const DEATHS_FLOOR: f64 = 1.0;

/// Log-transform a surface: `y = ln(m + c)` where `c` is the smallest
/// strictly positive rate when any cell is zero or missing, else 0.
/// Missing cells are set to 0 before the shift. When deaths (or exposures to
/// reconstruct them) are available, the observational sd of the log rate is
/// `1 / sqrt(max(D, 1))`.
pub fn to_log_surface(surface: &MortalitySurface) -> Result<LogMortalitySurface> {
    let cells = surface.rates.len();
    let mut min_pos = f64::INFINITY;
    let mut needs_constant = false;
    for &m in &surface.rates {
        if m.is_finite() && m > 0.0 {
            min_pos = min_pos.min(m);
        } else {
            needs_constant = true;
        }
    }
    if !min_pos.is_finite() {
        return Err(Error::Data("all cells are zero or missing".into()));
    }
    let c = if needs_constant { min_pos } else { 0.0 };
    let mut y = Vec::with_capacity(cells);
    for &m in &surface.rates {
        let m = if m.is_finite() { m } else { 0.0 };
        y.push((m + c).ln());
    }

    let sigma_obs = match (&surface.deaths, &surface.exposures) {
        (Some(d), _) => Some(
            d.iter()
                .map(|&v| {
                    let v = if v.is_finite() { v } else { 0.0 };
                    1.0 / v.max(DEATHS_FLOOR).sqrt()
                })
                .collect(),
        ),
        (None, Some(e)) => Some(
            e.iter()
                .zip(&surface.rates)
                .map(|(&ex, &m)| {
                    let d = if ex.is_finite() && m.is_finite() { m * ex } else { 0.0 };
                    1.0 / d.max(DEATHS_FLOOR).sqrt()
                })
                .collect(),
        ),
        (None, None) => None,
    };

    Ok(LogMortalitySurface {
        code: surface.code.clone(),
        ages: surface.ages.clone(),
        years: surface.years.clone(),
        y,
        imputation_constant: c,
        sigma_obs,
    })
}
