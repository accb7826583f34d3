//! Seeded synthetic mortality surfaces for calibration studies: a
//! mortality-shaped generator with optional outlier years, and an exact
//! component-model world with known observational noise.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::hmd::LogMortalitySurface;

/// Mortality-shaped scenario: infant decline, accident hump, senescent
/// rise, a two-component improvement trend, and optional spike years
/// concentrated on young-adult ages.
#[derive(Debug, Clone)]
pub struct MortalityScenario {
    pub ages: Vec<u32>,
    pub years: Vec<i32>,
    /// Years that receive the young-adult mortality spike.
    pub outlier_years: Vec<i32>,
    /// Peak size of the spike on the log scale.
    pub outlier_size: f64,
    /// Observation noise standard deviation on the log scale.
    pub noise_sd: f64,
    /// Annual drift of the main improvement index.
    pub drift: f64,
}

impl Default for MortalityScenario {
    fn default() -> Self {
        Self {
            ages: (0..=95).collect(),
            years: (1950..=2015).collect(),
            outlier_years: vec![],
            outlier_size: 0.0,
            noise_sd: 0.03,
            drift: -1.0,
        }
    }
}

/// Baseline log death rate by age: infant mortality, an accident hump in
/// the twenties, and exponential senescent growth.
pub fn baseline_log_rate(age: f64) -> f64 {
    let infant = 0.008 * (-age / 1.2).exp();
    let floor = 0.0002;
    let hump = 0.0008 * (-(age - 22.0) * (age - 22.0) / 80.0).exp();
    let senescent = 0.00003 * (0.095 * age).exp();
    (infant + floor + hump + senescent).ln()
}

/// Age response of the main improvement index: young ages improve faster.
fn improvement_profile(age: f64) -> f64 {
    0.022 * (-age / 45.0).exp()
}

/// Age response of the secondary component: a mid-life bump with no trend.
fn secondary_profile(age: f64) -> f64 {
    0.05 * (-(age - 45.0) * (age - 45.0) / 800.0).exp()
}

/// Young-adult spike profile used for outlier years.
fn spike_profile(age: f64) -> f64 {
    (-(age - 28.0) * (age - 28.0) / (2.0 * 49.0)).exp()
}

/// Generate a mortality-shaped log surface. Deterministic given the
/// scenario and seed.
pub fn mortality_like_surface(
    scenario: &MortalityScenario,
    seed: u64,
) -> Result<LogMortalitySurface> {
    if scenario.ages.is_empty() || scenario.years.len() < 3 {
        return Err(Error::Config(
            "scenario needs ages and at least 3 years".into(),
        ));
    }
    let p = scenario.ages.len();
    let n = scenario.years.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).map_err(|e| Error::Config(e.to_string()))?;

    // Main index: random walk with drift. Secondary index: stationary AR(1).
    let mut kappa = vec![0.0; n];
    let mut gamma = vec![0.0; n];
    for t in 1..n {
        kappa[t] = kappa[t - 1] + scenario.drift + 0.3 * std_normal.sample(&mut rng);
        gamma[t] = 0.6 * gamma[t - 1] + 0.5 * std_normal.sample(&mut rng);
    }

    let mut y = vec![0.0; p * n];
    for (ai, &a) in scenario.ages.iter().enumerate() {
        let age = a as f64;
        let base = baseline_log_rate(age);
        let b1 = improvement_profile(age);
        let b2 = secondary_profile(age);
        let spike = spike_profile(age);
        for (ti, &year) in scenario.years.iter().enumerate() {
            let mut v = base + b1 * kappa[ti] + b2 * gamma[ti];
            if scenario.outlier_years.contains(&year) {
                v += scenario.outlier_size * spike;
            }
            if scenario.noise_sd > 0.0 {
                v += scenario.noise_sd * std_normal.sample(&mut rng);
            }
            y[ai * n + ti] = v;
        }
    }

    Ok(LogMortalitySurface {
        code: "SYNTH".into(),
        ages: scenario.ages.clone(),
        years: scenario.years.clone(),
        y,
        imputation_constant: 0.0,
        sigma_obs: None,
    })
}

/// A world that is exactly a component model: mean curve plus orthonormal
/// basis columns driven by independent random walks with drift, plus
/// Gaussian observation noise with known standard deviation.
#[derive(Debug, Clone)]
pub struct ComponentWorld {
    pub ages: Vec<u32>,
    pub years: Vec<i32>,
    /// Per-component drift of the coefficient random walks.
    pub drifts: Vec<f64>,
    /// Per-component innovation standard deviation.
    pub innovation_sd: Vec<f64>,
    /// Observation noise standard deviation, recorded into `sigma_obs`.
    pub obs_sd: f64,
}

impl Default for ComponentWorld {
    fn default() -> Self {
        Self {
            ages: (0..=80).collect(),
            years: (1950..=2015).collect(),
            drifts: vec![-0.4, 0.1],
            innovation_sd: vec![0.25, 0.15],
            obs_sd: 0.02,
        }
    }
}

/// Orthonormal cosine basis over `q` grid points: column `k` is
/// `cos(pi k (i + 1/2) / q)`, normalized to unit Euclidean length.
pub fn cosine_basis(q: usize, k: usize) -> Vec<Vec<f64>> {
    let mut basis = vec![vec![0.0; k]; q];
    for col in 0..k {
        let freq = (col + 1) as f64;
        let mut norm = 0.0;
        for i in 0..q {
            let v = (std::f64::consts::PI * freq * (i as f64 + 0.5) / q as f64).cos();
            basis[i][col] = v;
            norm += v * v;
        }
        let norm = norm.sqrt();
        for row in basis.iter_mut() {
            row[col] /= norm;
        }
    }
    basis
}

/// Output of a component-world simulation: the observed surface plus the
/// latent quantities needed to score recovery.
#[derive(Debug, Clone)]
pub struct ComponentWorldDraw {
    pub surface: LogMortalitySurface,
    /// True mean curve per age.
    pub mean: Vec<f64>,
    /// True basis, `q` rows of `k` entries.
    pub basis: Vec<Vec<f64>>,
    /// True coefficient paths, `n` rows of `k` entries.
    pub beta: Vec<Vec<f64>>,
}

/// Simulate the component world. The surface carries `sigma_obs` filled
/// with the known observation noise level. Deterministic given the world
/// and seed.
pub fn simulate_component_world(
    world: &ComponentWorld,
    seed: u64,
) -> Result<ComponentWorldDraw> {
    let k = world.drifts.len();
    if k == 0 || k != world.innovation_sd.len() {
        return Err(Error::Config(
            "drifts and innovation_sd must be non-empty and equal length".into(),
        ));
    }
    if world.ages.is_empty() || world.years.len() < 3 {
        return Err(Error::Config("world needs ages and at least 3 years".into()));
    }
    let p = world.ages.len();
    let n = world.years.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std_normal = Normal::new(0.0, 1.0).map_err(|e| Error::Config(e.to_string()))?;

    let mean: Vec<f64> = world
        .ages
        .iter()
        .map(|&a| baseline_log_rate(a as f64))
        .collect();
    let basis = cosine_basis(p, k);

    let mut beta = vec![vec![0.0; k]; n];
    for t in 1..n {
        for c in 0..k {
            beta[t][c] = beta[t - 1][c]
                + world.drifts[c]
                + world.innovation_sd[c] * std_normal.sample(&mut rng);
        }
    }

    let mut y = vec![0.0; p * n];
    for ai in 0..p {
        for ti in 0..n {
            let signal: f64 =
                (0..k).map(|c| basis[ai][c] * beta[ti][c]).sum::<f64>();
            y[ai * n + ti] =
                mean[ai] + signal + world.obs_sd * std_normal.sample(&mut rng);
        }
    }

    let surface = LogMortalitySurface {
        code: "WORLD".into(),
        ages: world.ages.clone(),
        years: world.years.clone(),
        y,
        imputation_constant: 0.0,
        sigma_obs: Some(vec![world.obs_sd; p * n]),
    };
    Ok(ComponentWorldDraw { surface, mean, basis, beta })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn baseline_has_the_classic_shape() {
        let infant = baseline_log_rate(0.0);
        let trough = baseline_log_rate(10.0);
        let hump = baseline_log_rate(22.0);
        let old = baseline_log_rate(85.0);
        assert!(infant > trough);
        assert!(hump > trough);
        assert!(old > infant);
    }

    #[test]
    fn generator_is_deterministic_per_seed() {
        let scenario = MortalityScenario::default();
        let a = mortality_like_surface(&scenario, 5).unwrap();
        let b = mortality_like_surface(&scenario, 5).unwrap();
        let c = mortality_like_surface(&scenario, 6).unwrap();
        assert!(a.y.iter().zip(&b.y).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(a.y.iter().zip(&c.y).any(|(x, y)| x != y));
    }

    #[test]
    fn outlier_years_raise_young_adult_mortality() {
        let scenario = MortalityScenario {
            outlier_years: vec![1942, 1943],
            outlier_size: 1.5,
            noise_sd: 0.0,
            years: (1930..=1960).collect(),
            ..Default::default()
        };
        let s = mortality_like_surface(&scenario, 9).unwrap();
        let ai = s.ages.iter().position(|&a| a == 28).unwrap();
        let yi = |year: i32| s.years.iter().position(|&t| t == year).unwrap();
        let spike = s.value(ai, yi(1942));
        let before = s.value(ai, yi(1941));
        let after = s.value(ai, yi(1944));
        assert!(spike > before + 1.0);
        assert!(spike > after + 1.0);
        // Old ages are barely touched by the spike profile.
        let old = s.ages.iter().position(|&a| a == 80).unwrap();
        assert!((s.value(old, yi(1942)) - s.value(old, yi(1941))
            - scenario.drift * improvement_profile(80.0))
        .abs() < 0.2);
    }

    #[test]
    fn cosine_basis_is_orthonormal() {
        let basis = cosine_basis(40, 4);
        for a in 0..4 {
            for b in 0..4 {
                let dot: f64 = (0..40).map(|i| basis[i][a] * basis[i][b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-12, "columns {a},{b}: {dot}");
            }
        }
    }

    #[test]
    fn component_world_matches_its_own_construction() {
        let world = ComponentWorld::default();
        let draw = simulate_component_world(&world, 17).unwrap();
        let s = &draw.surface;
        assert_eq!(s.sigma_obs.as_ref().unwrap().len(), s.y.len());
        // Removing the known signal leaves pure observation noise.
        let p = s.n_ages();
        let n = s.n_years();
        let mut sse = 0.0;
        for ai in 0..p {
            for ti in 0..n {
                let signal: f64 = (0..world.drifts.len())
                    .map(|c| draw.basis[ai][c] * draw.beta[ti][c])
                    .sum();
                let e = s.value(ai, ti) - draw.mean[ai] - signal;
                sse += e * e;
            }
        }
        let sd = (sse / (p * n) as f64).sqrt();
        assert!(
            (sd - world.obs_sd).abs() < 0.1 * world.obs_sd,
            "residual sd {sd} vs nominal {}",
            world.obs_sd
        );
    }

    #[test]
    fn degenerate_configurations_are_rejected() {
        let bad = ComponentWorld { drifts: vec![], ..Default::default() };
        assert!(simulate_component_world(&bad, 1).is_err());
        let bad = MortalityScenario { years: vec![2000], ..Default::default() };
        assert!(mortality_like_surface(&bad, 1).is_err());
    }
}
