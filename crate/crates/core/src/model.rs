//! Measurement model `y = A x0 + z` and seeded instance generation.
//!
//! `A` is `m x n` with iid `N(0, 1/n)` entries, `z` is iid `N(0, sigma^2)` and
//! `x0` is a BPSK vector. The normalisation makes `SNR = 1/sigma^2`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Dimensions and noise level of one experiment point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemShape {
    pub n: usize,
    pub m: usize,
    /// Requested ratio, used by the theory.
    pub delta: f64,
    /// Noise variance (linear).
    pub sigma_sq: f64,
}

impl ProblemShape {
    /// Linear SNR, `1/sigma^2` (infinite when noiseless).
    pub fn snr(&self) -> f64 {
        1.0 / self.sigma_sq
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * self.snr().log10()
    }

    /// The ratio `m/n` actually simulated.
    pub fn realized_delta(&self) -> f64 {
        self.m as f64 / self.n as f64
    }

    pub fn is_noiseless(&self) -> bool {
        self.sigma_sq == 0.0
    }
}

/// Builds a shape with `m = round(delta * n)` and `sigma^2 = 10^(-snr_db/10)`.
///
/// `snr_db = +inf` gives the noiseless shape.
pub fn make_shape(n: usize, delta: f64, snr_db: f64) -> Result<ProblemShape> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "delta must be a positive finite number, got {delta}"
        )));
    }
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::InvalidArgument(format!(
            "snr_db must be a number or +inf, got {snr_db}"
        )));
    }
    let m = ((delta * n as f64).round() as usize).max(1);
    let sigma_sq = 10f64.powf(-snr_db / 10.0);
    Ok(ProblemShape {
        n,
        m,
        delta,
        sigma_sq,
    })
}

/// What a random stream is used for. Each purpose gets its own stream so
/// that e.g. changing the signal prior never perturbs the channel draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Channel,
    Noise,
    Signal,
    SubsetSampling,
}

impl Purpose {
    fn code(self) -> u64 {
        match self {
            Purpose::Channel => 0,
            Purpose::Noise => 1,
            Purpose::Signal => 2,
            Purpose::SubsetSampling => 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub master_seed: u64,
    pub trial_index: u64,
    pub purpose: Purpose,
}

impl RngStream {
    pub fn new(master_seed: u64, trial_index: u64, purpose: Purpose) -> Self {
        RngStream {
            master_seed,
            trial_index,
            purpose,
        }
    }

    /// A fresh generator positioned at the start of this stream.
    ///
    /// The master seed keys the ChaCha state; `(trial_index, purpose)` select
    /// one of its 2^64 independent streams.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(
            self.trial_index
                .wrapping_mul(4)
                .wrapping_add(self.purpose.code()),
        );
        rng
    }
}

/// Seed coordinates of one trial; hands out its per-purpose streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrialSeed {
    pub master_seed: u64,
    pub trial_index: u64,
}

impl TrialSeed {
    pub fn new(master_seed: u64, trial_index: u64) -> Self {
        TrialSeed {
            master_seed,
            trial_index,
        }
    }

    pub fn stream(&self, purpose: Purpose) -> RngStream {
        RngStream::new(self.master_seed, self.trial_index, purpose)
    }
}

/// Distribution of the transmitted signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SignalPrior {
    /// iid uniform on {+1, -1}.
    #[default]
    Uniform,
    /// `x0 = (1, ..., 1)`, the normalisation used by the AO analysis.
    AllOnes,
}

/// One realisation of the channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelInstance {
    pub a: DMatrix<f64>,
    pub x0: DVector<f64>,
    pub z: DVector<f64>,
    pub y: DVector<f64>,
}

impl ChannelInstance {
    /// Assembles an instance, forming `y = A x0 + z`.
    pub fn from_parts(a: DMatrix<f64>, x0: DVector<f64>, z: DVector<f64>) -> Self {
        let y = &a * &x0 + &z;
        ChannelInstance { a, x0, z, y }
    }

    pub fn n(&self) -> usize {
        self.a.ncols()
    }

    pub fn m(&self) -> usize {
        self.a.nrows()
    }

    /// Applies `D = diag(signs)`: returns `(A D, D x0, z)` which has the same `y`.
    pub fn relabel_signs(&self, signs: &[f64]) -> Result<ChannelInstance> {
        if signs.len() != self.n() {
            return Err(Error::InvalidArgument(format!(
                "sign vector has length {}, expected {}",
                signs.len(),
                self.n()
            )));
        }
        if signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::InvalidArgument("signs must be +1 or -1".into()));
        }
        let mut a = self.a.clone();
        for (j, &s) in signs.iter().enumerate() {
            if s < 0.0 {
                a.column_mut(j).neg_mut();
            }
        }
        let x0 = self.x0.component_mul(&DVector::from_column_slice(signs));
        Ok(ChannelInstance {
            a,
            x0,
            z: self.z.clone(),
            y: self.y.clone(),
        })
    }
}

pub(crate) fn standard_normals(rng: &mut ChaCha8Rng, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Draws `(A, x0, z)` for one trial and forms `y`.
pub fn sample_instance(
    shape: &ProblemShape,
    seed: &TrialSeed,
    prior: SignalPrior,
) -> ChannelInstance {
    let (n, m) = (shape.n, shape.m);

    let scale = 1.0 / (n as f64).sqrt();
    let mut rng = seed.stream(Purpose::Channel).rng();
    let entries: Vec<f64> = standard_normals(&mut rng, m * n)
        .into_iter()
        .map(|v| v * scale)
        .collect();
    let a = DMatrix::from_vec(m, n, entries);

    let x0 = match prior {
        SignalPrior::AllOnes => DVector::from_element(n, 1.0),
        SignalPrior::Uniform => {
            let mut rng = seed.stream(Purpose::Signal).rng();
            DVector::from_iterator(
                n,
                (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }),
            )
        }
    };

    let z = if shape.sigma_sq == 0.0 {
        DVector::zeros(m)
    } else {
        let sigma = shape.sigma_sq.sqrt();
        let mut rng = seed.stream(Purpose::Noise).rng();
        DVector::from_vec(
            standard_normals(&mut rng, m)
                .into_iter()
                .map(|v| v * sigma)
                .collect(),
        )
    };

    ChannelInstance::from_parts(a, x0, z)
}
