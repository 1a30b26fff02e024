//! Synthetic trade tapes with known price laws and controlled price/volume
//! dependence, used as ground truth for the moment estimators.
//!
//! # Random stream
//!
//! Every tape is a pure function of its [`TapeSpec`]. The generator is
//! ChaCha20 (`rand_chacha`) seeded with `seed_from_u64(seed)`. Prices read
//! stream 1 and volumes stream 2 of that key, so changing the volume law never
//! perturbs the price draws. A uniform is `(next_u64 >> 11) * 2^-53`; a
//! standard normal takes two uniforms `u1, u2` and returns
//! `sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`. Transcendental functions come from
//! `libm` so the bits do not depend on the platform math library.
//!
//! # Laws
//!
//! Each trade draws a price shock `z_p` and a volume shock `z_v`.
//! Prices: lognormal `exp(mu + s z_p)`, uniform `a + (b - a) Phi(z_p)`,
//! two-point `p_a` when `Phi(z_p) < w`, else `p_b`. Base volumes follow the
//! same recipes with `z_v`. Dependence then sets the traded volume:
//! independent keeps the base volume, comonotone trades volume equal to the
//! price, and `volume_follows_price(beta)` trades `base * exp(beta z_p)`.

use std::io::Write;

use rand_chacha::ChaCha20Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::power_sums::CompensatedSum;
use crate::trade::{make_tick, Timestamp, TradeTick};

pub const GENERATOR_NAME: &str = "chacha20(seed_from_u64; price stream 1, volume stream 2)+box-muller(cos)+libm";

const PRICE_STREAM: u64 = 1;
const VOLUME_STREAM: u64 = 2;

fn default_spacing() -> i64 {
    1_000_000_000
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriceLaw {
    Lognormal {
        mu: f64,
        s: f64,
    },
    Uniform {
        a: f64,
        b: f64,
    },
    /// `p_a` with probability `w`, `p_b` otherwise.
    TwoPoint {
        p_a: f64,
        p_b: f64,
        w: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeLaw {
    Constant { c: f64 },
    Lognormal { mu: f64, s: f64 },
    Uniform { a: f64, b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dependence {
    #[default]
    Independent,
    Comonotone,
    VolumeFollowsPrice {
        beta: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapeSpec {
    pub n_trades: usize,
    pub price_law: PriceLaw,
    pub volume_law: VolumeLaw,
    #[serde(default)]
    pub dependence: Dependence,
    pub seed: u64,
    #[serde(default)]
    pub start_ns: i64,
    #[serde(default = "default_spacing")]
    pub spacing_ns: i64,
}

impl TapeSpec {
    pub fn new(n_trades: usize, price_law: PriceLaw, volume_law: VolumeLaw, dependence: Dependence, seed: u64) -> Self {
        TapeSpec {
            n_trades,
            price_law,
            volume_law,
            dependence,
            seed,
            start_ns: 0,
            spacing_ns: default_spacing(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::BadSpec(msg));
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        if self.n_trades == 0 {
            return bad("n_trades must be at least 1".into());
        }
        if self.spacing_ns <= 0 {
            return bad("spacing_ns must be positive".into());
        }
        let span = (self.n_trades as i128 - 1) * self.spacing_ns as i128 + self.start_ns as i128;
        if span > i64::MAX as i128 {
            return bad("timestamps overflow".into());
        }
        match self.price_law {
            PriceLaw::Lognormal { mu, s } if !(finite(&[mu, s]) && s > 0.0) => {
                return bad(format!("price lognormal needs finite mu and s > 0, got mu={mu} s={s}"))
            }
            PriceLaw::Uniform { a, b } if !(finite(&[a, b]) && 0.0 < a && a < b) => {
                return bad(format!("price uniform needs 0 < a < b, got a={a} b={b}"))
            }
            PriceLaw::TwoPoint { p_a, p_b, w }
                if !(finite(&[p_a, p_b]) && p_a > 0.0 && p_b > 0.0 && 0.0 < w && w < 1.0) =>
            {
                return bad(format!(
                    "two_point needs positive prices and 0 < w < 1, got {p_a} {p_b} {w}"
                ))
            }
            _ => {}
        }
        match self.volume_law {
            VolumeLaw::Constant { c } if !(c.is_finite() && c > 0.0) => {
                return bad(format!("constant volume must be positive, got {c}"))
            }
            VolumeLaw::Lognormal { mu, s } if !(finite(&[mu, s]) && s > 0.0) => {
                return bad(format!("volume lognormal needs finite mu and s > 0, got mu={mu} s={s}"))
            }
            VolumeLaw::Uniform { a, b } if !(finite(&[a, b]) && 0.0 < a && a < b) => {
                return bad(format!("volume uniform needs 0 < a < b, got a={a} b={b}"))
            }
            _ => {}
        }
        if let Dependence::VolumeFollowsPrice { beta } = self.dependence {
            if !beta.is_finite() {
                return bad(format!("beta must be finite, got {beta}"));
            }
        }
        Ok(())
    }
}

/// Standard normal shocks from one ChaCha20 stream.
pub struct ShockStream {
    rng: ChaCha20Rng,
}

impl ShockStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        ShockStream { rng }
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn normal(&mut self) -> f64 {
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(std::f64::consts::TAU * u2)
    }
}

/// Standard normal distribution function.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

fn price_from_shock(law: PriceLaw, z: f64) -> f64 {
    match law {
        PriceLaw::Lognormal { mu, s } => libm::exp(mu + s * z),
        PriceLaw::Uniform { a, b } => a + (b - a) * normal_cdf(z),
        PriceLaw::TwoPoint { p_a, p_b, w } => {
            if normal_cdf(z) < w {
                p_a
            } else {
                p_b
            }
        }
    }
}

fn volume_from_shock(law: VolumeLaw, z: f64) -> f64 {
    match law {
        VolumeLaw::Constant { c } => c,
        VolumeLaw::Lognormal { mu, s } => libm::exp(mu + s * z),
        VolumeLaw::Uniform { a, b } => a + (b - a) * normal_cdf(z),
    }
}

/// Draws the tape described by `spec`.
pub fn generate(spec: &TapeSpec) -> Result<Vec<TradeTick<f64>>> {
    spec.validate()?;
    let mut prices = ShockStream::new(spec.seed, PRICE_STREAM);
    let mut volumes = ShockStream::new(spec.seed, VOLUME_STREAM);
    (0..spec.n_trades)
        .map(|i| {
            let z_p = prices.normal();
            let z_v = volumes.normal();
            let price = price_from_shock(spec.price_law, z_p);
            let base = volume_from_shock(spec.volume_law, z_v);
            let volume = match spec.dependence {
                Dependence::Independent => base,
                Dependence::Comonotone => price,
                Dependence::VolumeFollowsPrice { beta } => base * libm::exp(beta * z_p),
            };
            let ts = Timestamp(spec.start_ns + i as i64 * spec.spacing_ns);
            make_tick(ts, price, volume, None).map_err(|e| Error::BadSpec(format!("trade {i}: {e}")))
        })
        .collect()
}

/// Sample raw moments `(1/N) sum p(t_i)^n`, `n = 1..=n_max`, of the realized
/// price draws.
pub fn oracle_price_moments(tape: &[TradeTick<f64>], n_max: usize) -> Vec<f64> {
    let n = tape.len() as f64;
    (1..=n_max)
        .map(|k| {
            let s: CompensatedSum<f64> = tape.iter().map(|t| t.price.powi(k as i32)).collect();
            s.value() / n
        })
        .collect()
}

/// Moment-based estimate `p(n)` next to the frequency oracle, with a
/// delta-method standard error of their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentGap {
    pub order: usize,
    pub estimate: f64,
    pub oracle: f64,
    pub difference: f64,
    pub standard_error: f64,
}

impl MomentGap {
    /// `|difference| / standard_error`.
    pub fn z_score(&self) -> f64 {
        self.difference.abs() / self.standard_error
    }
}

/// Linearizing `R = mean(C^n) / mean(U^n)` and `P = mean(p^n)` gives the
/// per-trade influence `(C_i^n - R U_i^n) / mean(U^n) - (p_i^n - P)`; its
/// sample deviation over `sqrt(N)` is the standard error of `R - P`.
pub fn moment_gap(tape: &[TradeTick<f64>], n: usize) -> Result<MomentGap> {
    if tape.len() < 2 {
        return Err(Error::EmptyWindow);
    }
    let k = n as i32;
    let count = tape.len() as f64;
    let c_sum: CompensatedSum<f64> = tape.iter().map(|t| t.value.powi(k)).collect();
    let u_sum: CompensatedSum<f64> = tape.iter().map(|t| t.volume.powi(k)).collect();
    let p_sum: CompensatedSum<f64> = tape.iter().map(|t| t.price.powi(k)).collect();
    let u_mean = u_sum.value() / count;
    let ratio = c_sum.value() / u_sum.value();
    let oracle = p_sum.value() / count;
    let influence: Vec<f64> = tape
        .iter()
        .map(|t| (t.value.powi(k) - ratio * t.volume.powi(k)) / u_mean - (t.price.powi(k) - oracle))
        .collect();
    let mean = influence.iter().copied().collect::<CompensatedSum<f64>>().value() / count;
    let var = influence
        .iter()
        .map(|d| (d - mean) * (d - mean))
        .collect::<CompensatedSum<f64>>()
        .value()
        / (count - 1.0);
    Ok(MomentGap {
        order: n,
        estimate: ratio,
        oracle,
        difference: ratio - oracle,
        standard_error: (var / count).sqrt(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TapeMetadata {
    pub generator: String,
    pub seed: u64,
    pub spec: TapeSpec,
}

impl TapeMetadata {
    pub fn for_spec(spec: &TapeSpec) -> Self {
        TapeMetadata {
            generator: GENERATOR_NAME.to_string(),
            seed: spec.seed,
            spec: spec.clone(),
        }
    }

    pub fn write_json<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        serde_json::to_writer_pretty(&mut out, self)?;
        writeln!(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::write_tape_csv;
    use crate::price_moments::{frequency_mean, vwap_ticks};

    fn lognormal_spec(n: usize, dependence: Dependence, seed: u64) -> TapeSpec {
        TapeSpec::new(
            n,
            PriceLaw::Lognormal { mu: 4.0, s: 0.2 },
            VolumeLaw::Lognormal { mu: 1.0, s: 0.5 },
            dependence,
            seed,
        )
    }

    #[test]
    fn constant_volume_two_point() {
        let spec = TapeSpec::new(
            3,
            PriceLaw::TwoPoint {
                p_a: 1.0,
                p_b: 3.0,
                w: 0.5,
            },
            VolumeLaw::Constant { c: 1.0 },
            Dependence::Independent,
            11,
        );
        let tape = generate(&spec).unwrap();
        assert_eq!(tape.len(), 3);
        assert!(tape
            .iter()
            .all(|t| t.volume == 1.0 && (t.price == 1.0 || t.price == 3.0)));
        assert_eq!(tape[2].timestamp, Timestamp(2_000_000_000));
    }

    #[test]
    fn deterministic_for_seed() {
        let spec = lognormal_spec(500, Dependence::VolumeFollowsPrice { beta: 0.7 }, 99);
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_tape_csv(&mut a, &generate(&spec).unwrap()).unwrap();
        write_tape_csv(&mut b, &generate(&spec).unwrap()).unwrap();
        assert_eq!(a, b);
        let other = generate(&lognormal_spec(500, Dependence::VolumeFollowsPrice { beta: 0.7 }, 100)).unwrap();
        assert_ne!(generate(&spec).unwrap(), other);
    }

    #[test]
    fn volume_law_does_not_move_prices() {
        let a = generate(&lognormal_spec(100, Dependence::Independent, 5)).unwrap();
        let mut spec = lognormal_spec(100, Dependence::Independent, 5);
        spec.volume_law = VolumeLaw::Uniform { a: 1.0, b: 2.0 };
        let b = generate(&spec).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.price == y.price));
    }

    #[test]
    fn uniforms_and_normals_are_sane() {
        let mut s = ShockStream::new(1, 1);
        let n = 200_000;
        let zs: Vec<f64> = (0..n).map(|_| s.normal()).collect();
        let mean = zs.iter().sum::<f64>() / n as f64;
        let var = zs.iter().map(|z| (z - mean).powi(2)).sum::<f64>() / n as f64;
        assert!(mean.abs() < 5.0 / (n as f64).sqrt());
        assert!((var - 1.0).abs() < 0.02);
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((normal_cdf(1.959963984540054) - 0.975).abs() < 1e-12);
    }

    #[test]
    fn independent_tape_is_uncorrelated() {
        let n = 100_000;
        let tape = generate(&lognormal_spec(n, Dependence::Independent, 2024)).unwrap();
        let r = crate::price_moments::price_volume_correlation(&tape).unwrap();
        assert!(r.abs() <= 3.0 / (n as f64).sqrt(), "{r}");
    }

    #[test]
    fn constant_volume_oracle_matches_estimator_exactly() {
        let mut spec = lognormal_spec(2000, Dependence::Independent, 3);
        spec.volume_law = VolumeLaw::Constant { c: 2.5 };
        let tape = generate(&spec).unwrap();
        let oracle = oracle_price_moments(&tape, 4);
        for n in 1..=4 {
            let gap = moment_gap(&tape, n).unwrap();
            assert!(crate::rel_diff(gap.estimate, oracle[n - 1]) <= 1e-13);
        }
    }

    #[test]
    fn comonotone_two_point_bias() {
        let (p_a, p_b, w) = (1.0, 3.0, 0.4);
        let spec = TapeSpec::new(
            20_000,
            PriceLaw::TwoPoint { p_a, p_b, w },
            VolumeLaw::Constant { c: 1.0 },
            Dependence::Comonotone,
            8,
        );
        let tape = generate(&spec).unwrap();
        let frac_a = tape.iter().filter(|t| t.price == p_a).count() as f64 / tape.len() as f64;
        // With U = p the VWAP is sum p^2 / sum p over the realized draws.
        let brute = (p_a * p_a * frac_a + p_b * p_b * (1.0 - frac_a)) / (p_a * frac_a + p_b * (1.0 - frac_a));
        let vwap = vwap_ticks(&tape).unwrap();
        assert!(crate::rel_diff(vwap, brute) < 1e-12);
        assert!(vwap - frequency_mean(&tape).unwrap() > 0.1);
        let law = (p_a * p_a * w + p_b * p_b * (1.0 - w)) / (p_a * w + p_b * (1.0 - w));
        assert!((vwap - law).abs() < 0.02);
    }

    #[test]
    fn bad_specs() {
        let base = lognormal_spec(10, Dependence::Independent, 1);
        let cases = [
            TapeSpec {
                n_trades: 0,
                ..base.clone()
            },
            TapeSpec {
                price_law: PriceLaw::Lognormal { mu: 0.0, s: 0.0 },
                ..base.clone()
            },
            TapeSpec {
                price_law: PriceLaw::Uniform { a: 2.0, b: 1.0 },
                ..base.clone()
            },
            TapeSpec {
                price_law: PriceLaw::Uniform { a: -1.0, b: 1.0 },
                ..base.clone()
            },
            TapeSpec {
                price_law: PriceLaw::TwoPoint {
                    p_a: 1.0,
                    p_b: 2.0,
                    w: 1.0,
                },
                ..base.clone()
            },
            TapeSpec {
                volume_law: VolumeLaw::Constant { c: 0.0 },
                ..base.clone()
            },
            TapeSpec {
                dependence: Dependence::VolumeFollowsPrice { beta: f64::NAN },
                ..base.clone()
            },
            TapeSpec {
                spacing_ns: 0,
                ..base.clone()
            },
        ];
        for spec in cases {
            assert!(matches!(generate(&spec), Err(Error::BadSpec(_))), "{spec:?}");
        }
    }

    #[test]
    fn spec_json_shape() {
        let text = r#"{"n_trades":3,"price_law":{"two_point":{"p_a":1,"p_b":3,"w":0.5}},
            "volume_law":{"constant":{"c":1}},"dependence":{"volume_follows_price":{"beta":1}},"seed":7}"#;
        let spec: TapeSpec = serde_json::from_str(text).unwrap();
        assert_eq!(spec.dependence, Dependence::VolumeFollowsPrice { beta: 1.0 });
        assert_eq!(spec.spacing_ns, 1_000_000_000);
        let spec: TapeSpec =
            serde_json::from_str(&text.replace(r#"{"volume_follows_price":{"beta":1}}"#, r#""independent""#)).unwrap();
        assert_eq!(spec.dependence, Dependence::Independent);
        let mut meta = Vec::new();
        TapeMetadata::for_spec(&spec).write_json(&mut meta).unwrap();
        let back: TapeMetadata = serde_json::from_slice(&meta).unwrap();
        assert_eq!(back.spec, spec);
    }
}
