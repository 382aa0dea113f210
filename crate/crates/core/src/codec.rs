//! Gradient codec: l-infinity clipping, unbiased uniform quantization to
//! level s, additive Bin(m, q) noise, and the matching unbiased decode.
//!
//! The encode side maps each clipped coordinate to an integer code in
//! `{-s, ..., s+m}`; the decode side multiplies by C/s and subtracts the
//! exact m*q offset, so the round trip is an unbiased estimator of the
//! clipped gradient. `noise_pdf` exposes the closed-form piecewise-linear
//! density of the end-to-end noise and `noise_variance` its normalized
//! second moment V(m, q, s) = mq(1-q)/s^2 + 1/(6 s^2).

use crate::binomial;
use crate::error::{BqError, Result};
use crate::rng::Stream;
use rand::Rng;

/// Codec parameters: clip bound C, quantization level s, binomial trials m,
/// and success probability q (a rational, so the decode offset m*q is exact
/// for q = 1/2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BqConfig {
    clip_bound: f64,
    quant_level: u32,
    noise_trials: u32,
    q_num: u32,
    q_den: u32,
}

impl BqConfig {
    /// New config with the default q = 1/2.
    pub fn new(clip_bound: f64, quant_level: u32, noise_trials: u32) -> Result<Self> {
        if !clip_bound.is_finite() || clip_bound <= 0.0 {
            return Err(BqError::InvalidConfig(format!(
                "clip bound must be positive and finite, got {clip_bound}"
            )));
        }
        if quant_level == 0 {
            return Err(BqError::InvalidConfig("quantization level s must be >= 1".into()));
        }
        Ok(BqConfig {
            clip_bound,
            quant_level,
            noise_trials,
            q_num: 1,
            q_den: 2,
        })
    }

    /// Replace the noise probability with the rational num/den in (0, 1).
    pub fn with_noise_prob(mut self, num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 || num >= den {
            return Err(BqError::InvalidConfig(format!(
                "noise probability {num}/{den} must lie strictly in (0, 1)"
            )));
        }
        self.q_num = num;
        self.q_den = den;
        Ok(self)
    }

    pub fn clip_bound(&self) -> f64 {
        self.clip_bound
    }

    pub fn quant_level(&self) -> u32 {
        self.quant_level
    }

    pub fn noise_trials(&self) -> u32 {
        self.noise_trials
    }

    pub fn noise_prob(&self) -> f64 {
        f64::from(self.q_num) / f64::from(self.q_den)
    }

    pub fn noise_prob_rational(&self) -> (u32, u32) {
        (self.q_num, self.q_den)
    }

    /// Exact decode offset m*q.
    pub fn mean_offset(&self) -> f64 {
        f64::from(self.noise_trials) * f64::from(self.q_num) / f64::from(self.q_den)
    }

    /// Number of representable codes, 2s + m + 1.
    pub fn alphabet_size(&self) -> u64 {
        2 * u64::from(self.quant_level) + u64::from(self.noise_trials) + 1
    }

    /// Smallest and largest valid code, {-s, s+m}.
    pub fn code_range(&self) -> (i64, i64) {
        let s = i64::from(self.quant_level);
        let m = i64::from(self.noise_trials);
        (-s, s + m)
    }

    fn contains_code(&self, code: i64) -> bool {
        let (lo, hi) = self.code_range();
        (lo..=hi).contains(&code)
    }
}

/// Per-coordinate integer codes plus the config they were produced under.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedMessage {
    pub codes: Vec<i64>,
    pub config: BqConfig,
}

impl QuantizedMessage {
    pub fn dimension(&self) -> usize {
        self.codes.len()
    }
}

fn check_finite(grad: &[f64]) -> Result<()> {
    for (j, &g) in grad.iter().enumerate() {
        if !g.is_finite() {
            return Err(BqError::InvalidInput(format!(
                "non-finite gradient coordinate {g} at index {j}"
            )));
        }
    }
    Ok(())
}

fn linf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, &x| acc.max(x.abs()))
}

/// Scale one per-sample gradient so its l-infinity norm is at most C,
/// preserving direction: g / max(1, |g|_inf / C).
pub fn clip_per_sample(grad: &[f64], clip_bound: f64) -> Result<Vec<f64>> {
    if !(clip_bound.is_finite() && clip_bound > 0.0) {
        return Err(BqError::InvalidInput(format!(
            "clip bound must be positive, got {clip_bound}"
        )));
    }
    check_finite(grad)?;
    let scale = (linf_norm(grad) / clip_bound).max(1.0);
    Ok(grad.iter().map(|&g| g / scale).collect())
}

/// Clip every per-sample gradient, then average the batch. The triangle
/// inequality keeps the result inside the clip bound.
pub fn clip_batch_average(per_sample: &[Vec<f64>], clip_bound: f64) -> Result<Vec<f64>> {
    let batch = per_sample.len();
    if batch == 0 {
        return Err(BqError::InvalidInput("empty batch".into()));
    }
    let d = per_sample[0].len();
    let mut mean = vec![0.0f64; d];
    for grad in per_sample {
        if grad.len() != d {
            return Err(BqError::InvalidInput(format!(
                "dimension mismatch in batch: {} vs {}",
                grad.len(),
                d
            )));
        }
        let clipped = clip_per_sample(grad, clip_bound)?;
        for (acc, g) in mean.iter_mut().zip(&clipped) {
            *acc += g;
        }
    }
    let inv = 1.0 / batch as f64;
    for acc in &mut mean {
        *acc *= inv;
    }
    Ok(mean)
}

// Averaging clipped values can land a hair above C through round-off.
const CLIP_SLACK: f64 = 1.0 + 1e-9;

/// Stochastic uniform quantizer. Maps |g_j|/C in [l/s, (l+1)/s] to level
/// l+1 with probability s|g_j|/C - l, else l, and records the sign.
/// Unbiased: E[C * sign * level / s] = g_j.
pub fn uniform_quantize(
    clipped: &[f64],
    config: &BqConfig,
    stream: &Stream,
) -> Result<(Vec<i8>, Vec<u32>)> {
    check_finite(clipped)?;
    let c = config.clip_bound;
    let s = config.quant_level;
    let mut signs = Vec::with_capacity(clipped.len());
    let mut levels = Vec::with_capacity(clipped.len());
    for (j, &g) in clipped.iter().enumerate() {
        if g.abs() > c * CLIP_SLACK {
            return Err(BqError::InvalidInput(format!(
                "coordinate {g} at index {j} exceeds clip bound {c}"
            )));
        }
        let x = (g.abs() / c).min(1.0) * f64::from(s);
        let lower = x.floor();
        let level = if lower >= f64::from(s) {
            s
        } else {
            let p = x - lower;
            let mut rng = stream.coord(j as u64);
            // p = 0 on an exact bin edge keeps the lower level.
            lower as u32 + u32::from(rng.gen::<f64>() < p)
        };
        signs.push(if g < 0.0 { -1 } else { 1 });
        levels.push(level);
    }
    Ok((signs, levels))
}

/// Element-wise sign * level, the integer sequence sigma . rho in {-s..s}.
pub fn signed_levels(signs: &[i8], levels: &[u32]) -> Vec<i64> {
    signs
        .iter()
        .zip(levels)
        .map(|(&sg, &lv)| i64::from(sg) * i64::from(lv))
        .collect()
}

/// Add an independent Bin(m, q) draw to every signed level, producing the
/// transmitted codes in {-s, ..., s+m}.
pub fn add_binomial_noise(
    levels_signed: &[i64],
    config: &BqConfig,
    stream: &Stream,
) -> Result<QuantizedMessage> {
    let s = i64::from(config.quant_level);
    let m = config.noise_trials;
    let q = config.noise_prob();
    // Inversion table is shared across coordinates; each coordinate spends
    // exactly one uniform draw from its own substream.
    let cdf = if m > 64 { Some(binomial::cdf_table(m, q)) } else { None };
    let mut codes = Vec::with_capacity(levels_signed.len());
    for (j, &lv) in levels_signed.iter().enumerate() {
        if lv < -s || lv > s {
            return Err(BqError::InvalidInput(format!(
                "signed level {lv} at index {j} outside [-{s}, {s}]"
            )));
        }
        let mut rng = stream.coord(j as u64);
        let o = match &cdf {
            Some(table) => binomial::invert_cdf(table, rng.gen::<f64>()),
            None => binomial::sample(m, q, &mut rng),
        };
        codes.push(lv + i64::from(o));
    }
    Ok(QuantizedMessage {
        codes,
        config: *config,
    })
}

/// Clip-free convenience: quantize then add noise.
pub fn encode(
    clipped: &[f64],
    config: &BqConfig,
    quantize_stream: &Stream,
    noise_stream: &Stream,
) -> Result<QuantizedMessage> {
    let (signs, levels) = uniform_quantize(clipped, config, quantize_stream)?;
    add_binomial_noise(&signed_levels(&signs, &levels), config, noise_stream)
}

/// Unbiased decode: (C/s) * (code - m*q).
pub fn decode(msg: &QuantizedMessage) -> Result<Vec<f64>> {
    let cfg = &msg.config;
    let scale = cfg.clip_bound / f64::from(cfg.quant_level);
    let offset = cfg.mean_offset();
    let mut out = Vec::with_capacity(msg.codes.len());
    for (j, &code) in msg.codes.iter().enumerate() {
        if !cfg.contains_code(code) {
            let (lo, hi) = cfg.code_range();
            return Err(BqError::CorruptMessage(format!(
                "code {code} at index {j} outside alphabet [{lo}, {hi}]"
            )));
        }
        out.push(scale * (code as f64 - offset));
    }
    Ok(out)
}

/// Normalized BQ noise variance V(m, q, s) = mq(1-q)/s^2 + 1/(6 s^2).
/// The per-coordinate noise second moment is C^2 * V.
pub fn noise_variance(config: &BqConfig) -> f64 {
    let s2 = f64::from(config.quant_level) * f64::from(config.quant_level);
    let m = f64::from(config.noise_trials);
    let q = config.noise_prob();
    m * q * (1.0 - q) / s2 + 1.0 / (6.0 * s2)
}

/// One linear segment of the noise density: f(r) = intercept + slope * r on
/// [lo, hi].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdfPiece {
    pub lo: f64,
    pub hi: f64,
    pub intercept: f64,
    pub slope: f64,
}

/// Closed-form noise law: piecewise-linear density over m + 2 intervals plus
/// the per-coordinate variance C^2 * V(m, q, s).
#[derive(Debug, Clone)]
pub struct NoiseStats {
    pub variance_per_coord: f64,
    pub pieces: Vec<PdfPiece>,
}

impl NoiseStats {
    /// Density at r; zero outside the support.
    pub fn density(&self, r: f64) -> f64 {
        let first = self.pieces.first().map_or(0.0, |p| p.lo);
        let last = self.pieces.last().map_or(0.0, |p| p.hi);
        if r < first || r > last {
            return 0.0;
        }
        let idx = self
            .pieces
            .partition_point(|p| p.hi < r)
            .min(self.pieces.len() - 1);
        let p = &self.pieces[idx];
        p.intercept + p.slope * r
    }

    pub fn support(&self) -> (f64, f64) {
        (
            self.pieces.first().map_or(0.0, |p| p.lo),
            self.pieces.last().map_or(0.0, |p| p.hi),
        )
    }
}

/// The end-to-end noise density of the codec: on interval k (k = -1..m),
/// f(r) = (s/C)[(k+1-mq) P_k + (mq-k) P_{k+1}] + (s^2/C^2)(P_{k+1} - P_k) r,
/// with P_k the Bin(m, q) mass and P_{-1} = P_{m+1} = 0.
pub fn noise_pdf(config: &BqConfig) -> NoiseStats {
    let c = config.clip_bound;
    let s = f64::from(config.quant_level);
    let m = config.noise_trials;
    let q = config.noise_prob();
    let mq = config.mean_offset();
    let mut pieces = Vec::with_capacity(m as usize + 2);
    for k in -1..=i64::from(m) {
        let kf = k as f64;
        let p_k = binomial::pmf(m, k, q);
        let p_k1 = binomial::pmf(m, k + 1, q);
        pieces.push(PdfPiece {
            lo: (kf - mq) * c / s,
            hi: (kf + 1.0 - mq) * c / s,
            intercept: (s / c) * ((kf + 1.0 - mq) * p_k + (mq - kf) * p_k1),
            slope: (s * s) / (c * c) * (p_k1 - p_k),
        });
    }
    NoiseStats {
        variance_per_coord: c * c * noise_variance(config),
        pieces,
    }
}
