//! Seeded synthetic KPI traffic.
//!
//! `internet` is a base level plus diurnal and weekly sinusoids, AR(1)
//! noise and Poisson-arriving bursts that decay exponentially. The other
//! three channels are proportional to `internet` with their own noise.

use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::timeseries::{KpiRecord, KpiSeries};

pub const DEFAULT_PROFILE: &str = "default-5g";

const SECONDS_PER_DAY: f64 = 86_400.0;
const SECONDS_PER_WEEK: f64 = 7.0 * SECONDS_PER_DAY;
/// e-folding time of a burst.
const BURST_DECAY_S: f64 = 1_800.0;
/// Secondary channels carry this fraction of the primary noise level.
const SIDE_NOISE_RATIO: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub length: usize,
    pub interval_s: u64,
    pub base_level: f64,
    pub diurnal_amplitude: f64,
    pub weekly_amplitude: f64,
    pub noise_sigma: f64,
    pub ar_coefficient: f64,
    pub burst_rate: f64,
    pub burst_magnitude: f64,
    pub downstream_ratio: f64,
    pub sessions_per_bps: f64,
    pub vpn_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::default_5g()
    }
}

impl SynthConfig {
    /// The pinned profile used by the reference experiment: one week of
    /// 5-minute samples around a 500 Mbit/s mean.
    pub fn default_5g() -> Self {
        let base = 5.0e8;
        Self {
            seed: 42,
            length: 2000,
            interval_s: 300,
            base_level: base,
            diurnal_amplitude: 0.35 * base,
            weekly_amplitude: 0.1 * base,
            noise_sigma: 0.04 * base,
            ar_coefficient: 0.8,
            burst_rate: 2.0,
            burst_magnitude: 0.25 * base,
            downstream_ratio: 0.85,
            sessions_per_bps: 1.0e-5,
            vpn_fraction: 0.12,
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            DEFAULT_PROFILE => Ok(Self::default_5g()),
            other => Err(Error::Config(format!("unknown synth profile `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.to_string()));
        if self.length == 0 {
            return fail("length must be at least 1");
        }
        if self.interval_s == 0 {
            return fail("interval_s must be positive");
        }
        if !(self.base_level > 0.0 && self.base_level.is_finite()) {
            return fail("base_level must be positive");
        }
        for (name, v) in [
            ("diurnal_amplitude", self.diurnal_amplitude),
            ("weekly_amplitude", self.weekly_amplitude),
            ("noise_sigma", self.noise_sigma),
            ("burst_rate", self.burst_rate),
            ("burst_magnitude", self.burst_magnitude),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be non-negative")));
            }
        }
        if !(0.0..1.0).contains(&self.ar_coefficient) {
            return fail("ar_coefficient must lie in [0, 1)");
        }
        if !(self.downstream_ratio > 0.0 && self.downstream_ratio <= 1.0) {
            return fail("downstream_ratio must lie in (0, 1]");
        }
        if !(self.sessions_per_bps > 0.0 && self.sessions_per_bps.is_finite()) {
            return fail("sessions_per_bps must be positive");
        }
        if !(0.0..1.0).contains(&self.vpn_fraction) {
            return fail("vpn_fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

fn normal(sigma: f64) -> Option<Normal<f64>> {
    (sigma > 0.0).then(|| Normal::new(0.0, sigma).expect("finite sigma"))
}

fn draw(rng: &mut ChaCha8Rng, dist: &Option<Normal<f64>>) -> f64 {
    dist.as_ref().map_or(0.0, |d| d.sample(rng))
}

pub fn generate_traffic(config: &SynthConfig) -> Result<KpiSeries> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dt = config.interval_s as f64;

    let primary = normal(config.noise_sigma);
    let down_noise = normal(SIDE_NOISE_RATIO * config.noise_sigma * config.downstream_ratio);
    let sess_noise = normal(SIDE_NOISE_RATIO * config.noise_sigma * config.sessions_per_bps);
    let vpn_noise = normal(SIDE_NOISE_RATIO * config.noise_sigma * config.vpn_fraction);
    let arrivals_per_step = config.burst_rate * dt / SECONDS_PER_DAY;
    let arrivals = (arrivals_per_step > 0.0 && config.burst_magnitude > 0.0)
        .then(|| Poisson::new(arrivals_per_step).expect("positive rate"));
    let decay = (-dt / BURST_DECAY_S).exp();

    let mut ar = 0.0;
    let mut burst = 0.0;
    let mut records = Vec::with_capacity(config.length);
    for step in 0..config.length {
        let t = step as f64 * dt;
        ar = config.ar_coefficient * ar + draw(&mut rng, &primary);
        burst *= decay;
        if let Some(p) = &arrivals {
            let count: f64 = p.sample(&mut rng);
            for _ in 0..count as u64 {
                let size: f64 = rng.sample(Exp1);
                burst += config.burst_magnitude * size;
            }
        }
        let internet = (config.base_level
            + config.diurnal_amplitude * (TAU * t / SECONDS_PER_DAY).sin()
            + config.weekly_amplitude * (TAU * t / SECONDS_PER_WEEK).sin()
            + ar
            + burst)
            .max(0.0);
        let downstream =
            (config.downstream_ratio * internet + draw(&mut rng, &down_noise)).max(0.0);
        let sessions = (config.sessions_per_bps * internet + draw(&mut rng, &sess_noise)).max(0.0);
        let vpn = (config.vpn_fraction * internet + draw(&mut rng, &vpn_noise)).max(0.0);
        records.push(KpiRecord {
            timestamp: step as u64 * config.interval_s,
            internet,
            downstream,
            sessions,
            vpn,
        });
    }
    KpiSeries::new(records, config.interval_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::Feature;

    fn quiet() -> SynthConfig {
        SynthConfig {
            diurnal_amplitude: 0.0,
            weekly_amplitude: 0.0,
            noise_sigma: 0.0,
            burst_rate: 0.0,
            burst_magnitude: 0.0,
            length: 50,
            ..SynthConfig::default_5g()
        }
    }

    #[test]
    fn degenerate_config_is_constant() {
        let c = quiet();
        let s = generate_traffic(&c).unwrap();
        for r in s.records() {
            assert_eq!(r.internet, c.base_level);
            assert_eq!(r.downstream, c.downstream_ratio * c.base_level);
            assert_eq!(r.sessions, c.sessions_per_bps * c.base_level);
            assert_eq!(r.vpn, c.vpn_fraction * c.base_level);
        }
    }

    #[test]
    fn same_seed_same_series() {
        let c = SynthConfig::default_5g();
        assert_eq!(generate_traffic(&c).unwrap(), generate_traffic(&c).unwrap());
    }

    #[test]
    fn different_seed_differs() {
        let a = generate_traffic(&SynthConfig::default_5g()).unwrap();
        let b = generate_traffic(&SynthConfig {
            seed: 43,
            ..SynthConfig::default_5g()
        })
        .unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn zero_length_rejected() {
        let c = SynthConfig {
            length: 0,
            ..SynthConfig::default_5g()
        };
        assert!(matches!(generate_traffic(&c), Err(Error::Config(_))));
    }

    #[test]
    fn never_negative_even_with_large_noise() {
        let c = SynthConfig {
            noise_sigma: 3.0 * 5.0e8,
            diurnal_amplitude: 2.0 * 5.0e8,
            length: 3000,
            ..SynthConfig::default_5g()
        };
        let s = generate_traffic(&c).unwrap();
        assert!(s.records().iter().all(|r| r.values().iter().all(|v| *v >= 0.0)));
        assert!(s.records().iter().any(|r| r.internet == 0.0));
    }

    #[test]
    fn noiseless_series_is_diurnal_periodic() {
        let c = SynthConfig {
            noise_sigma: 0.0,
            burst_rate: 0.0,
            weekly_amplitude: 0.0,
            length: 288 * 3,
            ..SynthConfig::default_5g()
        };
        let v = generate_traffic(&c).unwrap().feature_values(Feature::Internet);
        let period = 288;
        for t in 0..v.len() - period {
            assert!((v[t] - v[t + period]).abs() <= 1e-9 * c.base_level, "step {t}");
        }
    }

    #[test]
    fn unknown_profile() {
        assert!(SynthConfig::profile("lte-rural").is_err());
        assert_eq!(SynthConfig::profile("default-5g").unwrap(), SynthConfig::default_5g());
    }
}
