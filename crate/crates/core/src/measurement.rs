//! Stroboscopic measurement records with binomial shot noise.
//!
//! Each sample time corresponds to a fresh preparation, evolution to `t`,
//! and a two-outcome projective readout repeated `N_e` times. The recorded
//! estimate is the empirical expectation value `2m/N_e − 1` where
//! `m ~ Binomial(N_e, (1 + r(t))/2)`. Sample times come from an additive
//! golden-ratio low-discrepancy sequence.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which Bloch component was measured: a Pauli label for qubits, or a
/// trace-zero basis index in general.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Observable {
    X,
    Y,
    Z,
    Basis(usize),
}

impl Observable {
    /// Index of the measured component in the Bloch vector.
    pub fn index(&self) -> usize {
        match self {
            Observable::X => 0,
            Observable::Y => 1,
            Observable::Z => 2,
            Observable::Basis(k) => *k,
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Observable::X => write!(f, "x"),
            Observable::Y => write!(f, "y"),
            Observable::Z => write!(f, "z"),
            Observable::Basis(k) => write!(f, "basis{k}"),
        }
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "x" | "X" => Ok(Observable::X),
            "y" | "Y" => Ok(Observable::Y),
            "z" | "Z" => Ok(Observable::Z),
            other => other
                .strip_prefix("basis")
                .and_then(|k| k.parse().ok())
                .map(Observable::Basis)
                .ok_or_else(|| Error::InvalidInput(format!("unknown observable `{other}`"))),
        }
    }
}

/// A stroboscopic measurement record for one observable.
///
/// `n_repeats = None` is the infinite-statistics switch: estimates are the
/// exact (clamped) expectation values and no randomness is involved.
#[derive(Clone, Debug)]
pub struct MeasurementRecord {
    pub observable: Observable,
    pub times: Vec<f64>,
    pub estimates: Vec<f64>,
    pub n_repeats: Option<u64>,
    pub seed: u64,
}

impl MeasurementRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Sampling horizon, taken as the last (largest) sample time.
    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    /// Shot-noise standard deviation implied by the record itself,
    /// `sqrt(mean (1 − est²) / N_e)`; zero for infinite statistics.
    pub fn noise_floor(&self) -> f64 {
        match self.n_repeats {
            None => 0.0,
            Some(ne) => {
                if self.estimates.is_empty() {
                    return 0.0;
                }
                let mean_var: f64 = self
                    .estimates
                    .iter()
                    .map(|e| (1.0 - e * e).max(0.0) / ne as f64)
                    .sum::<f64>()
                    / self.estimates.len() as f64;
                mean_var.sqrt()
            }
        }
    }

    /// Write `t,estimate` rows at full double precision.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,estimate")?;
        for (t, e) in self.times.iter().zip(&self.estimates) {
            writeln!(out, "{t:.16e},{e:.16e}")?;
        }
        Ok(())
    }

    /// Write the metadata sidecar `{observable, n_repeats, seed, T}`.
    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let meta = RecordMeta {
            observable: self.observable,
            n_repeats: self.n_repeats,
            seed: self.seed,
            t: self.horizon(),
        };
        std::fs::write(path, serde_json::to_string_pretty(&meta)?)?;
        Ok(())
    }

    /// Read a record from its CSV and sidecar files.
    pub fn read_csv(csv_path: &Path, sidecar_path: &Path) -> Result<Self> {
        let meta: RecordMeta = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
        let text = std::fs::read_to_string(csv_path)?;
        let mut times = Vec::new();
        let mut estimates = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if i == 0 {
                if line.trim() != "t,estimate" {
                    return Err(Error::InvalidInput(format!(
                        "unexpected record header `{line}`"
                    )));
                }
                continue;
            }
            let mut parts = line.split(',');
            let (Some(t), Some(e)) = (parts.next(), parts.next()) else {
                return Err(Error::InvalidInput(format!("malformed record row {i}")));
            };
            times.push(t.trim().parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!("bad time on row {i}"))
            })?);
            estimates.push(e.trim().parse::<f64>().map_err(|_| {
                Error::InvalidInput(format!("bad estimate on row {i}"))
            })?);
        }
        Ok(Self {
            observable: meta.observable,
            times,
            estimates,
            n_repeats: meta.n_repeats,
            seed: meta.seed,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct RecordMeta {
    observable: Observable,
    n_repeats: Option<u64>,
    seed: u64,
    #[serde(rename = "T")]
    t: f64,
}

/// Additive golden-ratio low-discrepancy sample times.
///
/// Returns `t_k = T·frac(k·φ⁻¹)` for `k = 1..=n`, sorted ascending. The
/// sequence is deterministic and its points are distinct for any practical
/// `n`.
pub fn lds_times(n: usize, horizon: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::InvalidInput("need at least one sample time".into()));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidInput("horizon must be positive".into()));
    }
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut times: Vec<f64> = (1..=n)
        .map(|k| {
            let x = k as f64 * inv_phi;
            horizon * x.fract()
        })
        .collect();
    times.sort_by(f64::total_cmp);
    debug_assert!(times.windows(2).all(|w| w[0] < w[1]), "duplicate LDS point");
    Ok(times)
}

/// Mix a base seed, trial index and channel into an independent stream
/// seed (splitmix64 finaliser over the xor-combined inputs).
pub fn derive_seed(base: u64, trial: u64, channel: u64) -> u64 {
    let mut z = base
        ^ trial.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ channel.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Simulate a stroboscopic record of one trajectory component.
///
/// For each time `t` draws `m ~ Binomial(N_e, (1 + r(t))/2)` and records
/// `2m/N_e − 1`; deterministic given the seed. Component values are clamped
/// into [−1, 1] but values beyond `1 + 1e-6` in magnitude signal an
/// unphysical model and error out.
pub fn sample_record<F>(
    component: F,
    times: &[f64],
    n_repeats: Option<u64>,
    observable: Observable,
    seed: u64,
) -> Result<MeasurementRecord>
where
    F: Fn(f64) -> f64,
{
    if let Some(0) = n_repeats {
        return Err(Error::InvalidInput("n_repeats must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut estimates = Vec::with_capacity(times.len());
    for &t in times {
        let value = component(t);
        if value.abs() > 1.0 + 1e-6 {
            return Err(Error::ProbabilityOutOfRange { time: t, value });
        }
        let clamped = value.clamp(-1.0, 1.0);
        match n_repeats {
            None => estimates.push(clamped),
            Some(ne) => {
                let p = (1.0 + clamped) / 2.0;
                let m = Binomial::new(ne, p)
                    .expect("probability in range")
                    .sample(&mut rng);
                estimates.push(2.0 * m as f64 / ne as f64 - 1.0);
            }
        }
    }
    Ok(MeasurementRecord {
        observable,
        times: times.to_vec(),
        estimates,
        n_repeats,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn lds_single_point() {
        let ts = lds_times(1, 50.0).unwrap();
        assert_eq!(ts.len(), 1);
        assert_abs_diff_eq!(ts[0], 30.9016994374947, epsilon = 1e-9);
    }

    #[test]
    fn lds_small_sequences() {
        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut expect: Vec<f64> = (1..=4).map(|k| (k as f64 * inv_phi).fract()).collect();
        expect.sort_by(f64::total_cmp);
        let ts = lds_times(4, 1.0).unwrap();
        for (a, b) in ts.iter().zip(&expect) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        assert!(ts.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn lds_rejects_empty() {
        assert!(lds_times(0, 1.0).is_err());
    }

    #[test]
    fn deterministic_extremes() {
        let times = lds_times(64, 10.0).unwrap();
        let up = sample_record(|_| 1.0, &times, Some(500), Observable::Z, 1).unwrap();
        assert!(up.estimates.iter().all(|&e| e == 1.0));
        let down = sample_record(|_| -1.0, &times, Some(500), Observable::Z, 1).unwrap();
        assert!(down.estimates.iter().all(|&e| e == -1.0));
    }

    #[test]
    fn binomial_mean_near_zero() {
        let times = lds_times(1000, 10.0).unwrap();
        let rec = sample_record(|_| 0.0, &times, Some(1000), Observable::X, 99).unwrap();
        let mean: f64 = rec.estimates.iter().sum::<f64>() / rec.estimates.len() as f64;
        // 4σ band, σ = 1/sqrt(N·N_e).
        let sigma = 1.0 / (1000.0f64 * 1000.0).sqrt();
        assert!(mean.abs() < 4.0 * sigma, "mean {mean} outside 4σ = {}", 4.0 * sigma);
    }

    #[test]
    fn unbiased_and_variance_matches_binomial() {
        let trials = 10_000usize;
        for &r in &[0.0, 0.5, 0.9] {
            let ne = 1000u64;
            let mut sum = 0.0;
            let mut sumsq = 0.0;
            for k in 0..trials {
                let rec =
                    sample_record(|_| r, &[1.0], Some(ne), Observable::Z, derive_seed(7, k as u64, 0))
                        .unwrap();
                let e = rec.estimates[0];
                sum += e;
                sumsq += e * e;
            }
            let mean = sum / trials as f64;
            let var = sumsq / trials as f64 - mean * mean;
            let expect_var = (1.0 - r * r) / ne as f64;
            let se = (expect_var / trials as f64).sqrt();
            assert!(
                (mean - r).abs() < 5.0 * se,
                "bias {} exceeds 5 standard errors",
                mean - r
            );
            assert!(
                (var - expect_var).abs() < 0.1 * expect_var,
                "variance {var} vs expected {expect_var}"
            );
        }
    }

    #[test]
    fn identical_seed_bit_exact() {
        let times = lds_times(200, 25.0).unwrap();
        let f = |t: f64| (0.8 * (0.3 * t).cos()) * (-0.05 * t).exp();
        let a = sample_record(f, &times, Some(1000), Observable::Y, 1234).unwrap();
        let b = sample_record(f, &times, Some(1000), Observable::Y, 1234).unwrap();
        assert_eq!(a.estimates, b.estimates);
        let c = sample_record(f, &times, Some(1000), Observable::Y, 1235).unwrap();
        assert_ne!(a.estimates, c.estimates);
    }

    #[test]
    fn out_of_range_rejected() {
        let err = sample_record(|_| 1.1, &[1.0], Some(10), Observable::Z, 0).unwrap_err();
        assert!(matches!(err, Error::ProbabilityOutOfRange { .. }));
        // Values within the clamp band are accepted.
        assert!(sample_record(|_| 1.0 + 5e-7, &[1.0], Some(10), Observable::Z, 0).is_ok());
    }

    #[test]
    fn noiseless_mode_is_exact() {
        let times = lds_times(16, 4.0).unwrap();
        let rec = sample_record(|t| 0.25 * t.cos(), &times, None, Observable::X, 0).unwrap();
        for (t, e) in rec.times.iter().zip(&rec.estimates) {
            assert_abs_diff_eq!(*e, 0.25 * t.cos(), epsilon = 0.0);
        }
        assert_eq!(rec.noise_floor(), 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let times = lds_times(32, 8.0).unwrap();
        let rec = sample_record(|t| (0.5 * t).sin(), &times, Some(100), Observable::Z, 77).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("rec.csv");
        let side = dir.path().join("rec.json");
        rec.write_csv(&csv).unwrap();
        rec.write_sidecar(&side).unwrap();
        let back = MeasurementRecord::read_csv(&csv, &side).unwrap();
        assert_eq!(back.observable, Observable::Z);
        assert_eq!(back.n_repeats, Some(100));
        assert_eq!(back.seed, 77);
        assert_eq!(back.estimates, rec.estimates);
        assert_eq!(back.times, rec.times);
    }

    proptest! {
        /// Estimates are quantised by shot statistics:
        /// est ∈ {2m/N_e − 1 : m = 0..N_e}.
        #[test]
        fn estimates_quantized(r in -1.0f64..1.0, ne in 1u64..2000, seed in any::<u64>()) {
            let rec = sample_record(|_| r, &[1.0, 2.0, 3.0], Some(ne), Observable::Z, seed).unwrap();
            for &e in &rec.estimates {
                let m = (e + 1.0) * ne as f64 / 2.0;
                prop_assert!((m - m.round()).abs() < 1e-9);
                prop_assert!((-1.0..=1.0).contains(&e));
            }
        }

        /// Golden-ratio times are strictly increasing and within [0, T).
        #[test]
        fn lds_within_horizon(n in 1usize..500, t in 0.1f64..200.0) {
            let ts = lds_times(n, t).unwrap();
            prop_assert_eq!(ts.len(), n);
            prop_assert!(ts.iter().all(|&x| (0.0..t).contains(&x)));
            prop_assert!(ts.windows(2).all(|w| w[0] < w[1]));
        }
    }
}
