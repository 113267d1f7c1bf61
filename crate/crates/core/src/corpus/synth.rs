//! Gaussian-component beat synthesis with planted waveform features.
//!
//! Each beat at time τ is a sum of truncated Gaussians (P, Q, R, S, T) plus an
//! optional ST plateau. Components are cut off at ±5σ so that every feature
//! changes the signal only inside closed-form windows.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::features::{
    validate_features, FeatureSet, ABSENT_P, INVERTED_T, IRREGULAR_RR, PROLONGED_PR, Q_WAVE,
    ST_ELEVATION, TALL_R, WIDE_QRS,
};
use crate::error::{Error, Result};

/// Gaussian cutoff in units of σ.
pub const TRUNCATION_SIGMAS: f64 = 5.0;
/// Leads whose T wave flips under `inverted_t`.
pub const INVERTED_T_LEADS: std::ops::Range<usize> = 0..6;
pub const ST_PLATEAU: (f64, f64, f64) = (0.06, 0.20, 0.20);
pub const RR_JITTER: f64 = 0.30;
pub const HEART_RATE_BPM: (f64, f64) = (60.0, 90.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub sample_rate: f64,
    pub duration: f64,
    pub lead_count: usize,
    pub noise_std: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            sample_rate: 100.0,
            duration: 10.0,
            lead_count: 12,
            noise_std: 0.02,
        }
    }
}

impl SynthConfig {
    pub fn samples(&self) -> Result<usize> {
        self.validate()?;
        Ok((self.sample_rate * self.duration).round() as usize)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate > 0.0 && self.duration > 0.0) {
            return Err(Error::Config("sample_rate and duration must be positive".into()));
        }
        if !(2..=12).contains(&self.lead_count) {
            return Err(Error::Config(format!(
                "lead_count must be in 2..=12, got {}",
                self.lead_count
            )));
        }
        let n = self.sample_rate * self.duration;
        if (n - n.round()).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "sample_rate × duration = {n} is not a whole number of samples"
            )));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config("noise_std must be non-negative".into()));
        }
        Ok(())
    }
}

/// Multi-lead sampled signal, stored lead-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub signal: Vec<f64>,
    pub sample_rate: f64,
    pub lead_count: usize,
    pub true_features: FeatureSet,
    pub seed: u64,
}

impl EcgRecord {
    pub fn samples(&self) -> usize {
        self.signal.len() / self.lead_count.max(1)
    }

    pub fn lead(&self, l: usize) -> &[f64] {
        let n = self.samples();
        &self.signal[l * n..(l + 1) * n]
    }
}

/// One Gaussian component of the beat template.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub offset: f64,
    pub width: f64,
    pub amplitude: f64,
}

/// Per-record template after applying the planted features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeatTemplate {
    pub p: Component,
    pub q: Component,
    pub r: Component,
    pub s: Component,
    pub t: Component,
    pub invert_t: bool,
    pub st_plateau: bool,
}

impl BeatTemplate {
    pub fn base() -> Self {
        Self {
            p: Component { offset: -0.16, width: 0.02, amplitude: 0.15 },
            q: Component { offset: -0.03, width: 0.008, amplitude: -0.10 },
            r: Component { offset: 0.0, width: 0.01, amplitude: 1.00 },
            s: Component { offset: 0.03, width: 0.008, amplitude: -0.20 },
            t: Component { offset: 0.30, width: 0.05, amplitude: 0.30 },
            invert_t: false,
            st_plateau: false,
        }
    }

    pub fn with_features(features: &FeatureSet) -> Self {
        let mut tpl = Self::base();
        for &f in features {
            match f {
                PROLONGED_PR => tpl.p.offset = -0.28,
                INVERTED_T => tpl.invert_t = true,
                ST_ELEVATION => tpl.st_plateau = true,
                WIDE_QRS => {
                    tpl.q.width *= 2.5;
                    tpl.r.width *= 2.5;
                    tpl.s.width *= 2.5;
                }
                ABSENT_P => tpl.p.amplitude = 0.0,
                TALL_R => tpl.r.amplitude *= 1.8,
                Q_WAVE => tpl.q.amplitude *= 4.0,
                _ => {}
            }
        }
        tpl
    }
}

pub fn lead_weight(lead: usize, lead_count: usize) -> f64 {
    0.5 + 0.5 * (lead + 1) as f64 / lead_count as f64
}

/// Random draws shared by every feature variant of one seed.
struct BeatPlan {
    rr: f64,
    phase: f64,
    jitter: Vec<f64>,
}

fn plan(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> BeatPlan {
    let hr = rng.random_range(HEART_RATE_BPM.0..HEART_RATE_BPM.1);
    let rr = 60.0 / hr;
    let phase = rng.random_range(0.0..rr);
    let n_jitter = ((cfg.duration + 1.0) / (rr * (1.0 - RR_JITTER))).ceil() as usize + 2;
    let jitter = (0..n_jitter)
        .map(|_| rng.random_range(-RR_JITTER..RR_JITTER))
        .collect();
    BeatPlan { rr, phase, jitter }
}

fn beat_times_from(plan: &BeatPlan, cfg: &SynthConfig, irregular: bool) -> Vec<f64> {
    // one beat before t=0 so its T wave can reach into the window
    let mut times = vec![plan.phase - plan.rr];
    let mut tau = plan.phase;
    let mut k = 0;
    while tau < cfg.duration + 0.5 {
        times.push(tau);
        let factor = if irregular { 1.0 + plan.jitter[k.min(plan.jitter.len() - 1)] } else { 1.0 };
        tau += plan.rr * factor;
        k += 1;
    }
    times
}

/// Beat times (seconds) that [`synth_ecg`] uses for this seed and feature set.
pub fn beat_times(features: &FeatureSet, seed: u64, cfg: &SynthConfig) -> Result<Vec<f64>> {
    validate_features(features)?;
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = plan(&mut rng, cfg);
    Ok(beat_times_from(&p, cfg, features.contains(&IRREGULAR_RR)))
}

fn add_gaussian(lead: &mut [f64], fs: f64, center: f64, c: &Component, amp: f64) {
    if amp == 0.0 {
        return;
    }
    let reach = TRUNCATION_SIGMAS * c.width;
    let n = lead.len() as isize;
    let lo = ((center - reach) * fs).ceil() as isize;
    let hi = ((center + reach) * fs).floor() as isize;
    for i in lo.max(0)..=hi.min(n - 1) {
        let t = i as f64 / fs;
        let z = (t - center) / c.width;
        lead[i as usize] += amp * (-0.5 * z * z).exp();
    }
}

fn add_plateau(lead: &mut [f64], fs: f64, start: f64, end: f64, level: f64) {
    let n = lead.len() as isize;
    let lo = (start * fs).ceil() as isize;
    let hi = (end * fs).floor() as isize;
    for i in lo.max(0)..=hi.min(n - 1) {
        lead[i as usize] += level;
    }
}

/// Synthesize a record carrying exactly `features`. Deterministic in
/// `(features, seed, cfg)`; the random draws do not depend on `features`.
pub fn synth_ecg(features: &FeatureSet, seed: u64, cfg: &SynthConfig) -> Result<EcgRecord> {
    validate_features(features)?;
    let samples = cfg.samples()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let beat_plan = plan(&mut rng, cfg);
    let times = beat_times_from(&beat_plan, cfg, features.contains(&IRREGULAR_RR));
    let tpl = BeatTemplate::with_features(features);
    let fs = cfg.sample_rate;
    let noise = Normal::new(0.0, cfg.noise_std.max(0.0)).expect("validated noise_std");

    let mut signal = vec![0.0; cfg.lead_count * samples];
    for l in 0..cfg.lead_count {
        let w = lead_weight(l, cfg.lead_count);
        let lead = &mut signal[l * samples..(l + 1) * samples];
        let t_sign = if tpl.invert_t && INVERTED_T_LEADS.contains(&l) { -1.0 } else { 1.0 };
        for &tau in &times {
            add_gaussian(lead, fs, tau + tpl.p.offset, &tpl.p, tpl.p.amplitude * w);
            add_gaussian(lead, fs, tau + tpl.q.offset, &tpl.q, tpl.q.amplitude * w);
            add_gaussian(lead, fs, tau + tpl.r.offset, &tpl.r, tpl.r.amplitude * w);
            add_gaussian(lead, fs, tau + tpl.s.offset, &tpl.s, tpl.s.amplitude * w);
            add_gaussian(lead, fs, tau + tpl.t.offset, &tpl.t, t_sign * tpl.t.amplitude * w);
            if tpl.st_plateau {
                add_plateau(lead, fs, tau + ST_PLATEAU.0, tau + ST_PLATEAU.1, ST_PLATEAU.2);
            }
        }
    }
    if cfg.noise_std > 0.0 {
        for v in signal.iter_mut() {
            *v += noise.sample(&mut rng);
        }
    } else {
        // keep the stream position independent of noise_std
        rng.next_u64();
    }
    Ok(EcgRecord {
        signal,
        sample_rate: fs,
        lead_count: cfg.lead_count,
        true_features: features.clone(),
        seed,
    })
}
