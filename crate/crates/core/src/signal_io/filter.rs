//! Butterworth bandpass as cascaded second-order sections.
//!
//! An order-N analog lowpass prototype is mapped to a bandpass (2N poles) and
//! discretized with the bilinear transform, band edges pre-warped. Each section
//! carries one zero at z = 1 and one at z = -1; the gain is normalized to unity
//! at the geometric band centre, where the Butterworth response peaks.

use std::f64::consts::PI;

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use super::{Recording, SignalError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterMode {
    /// Single forward pass; the only option when samples arrive live.
    Causal,
    /// Forward-backward pass for offline evaluation.
    ZeroPhase,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterSpec {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
    pub mode: FilterMode,
}

impl Default for FilterSpec {
    fn default() -> Self {
        Self {
            low_hz: 8.0,
            high_hz: 30.0,
            order: 4,
            mode: FilterMode::Causal,
        }
    }
}

impl FilterSpec {
    pub fn with_mode(mut self, mode: FilterMode) -> Self {
        self.mode = mode;
        self
    }
}

/// Normalized biquad, `a[0] == 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    fn response(&self, z_inv: Complex<f64>) -> Complex<f64> {
        let z2 = z_inv * z_inv;
        let num = self.b[0] + z_inv * self.b[1] + z2 * self.b[2];
        let den = self.a[0] + z_inv * self.a[1] + z2 * self.a[2];
        num / den
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ButterworthBandpass {
    sections: Vec<Biquad>,
}

impl ButterworthBandpass {
    pub fn design(spec: &FilterSpec, sample_rate_hz: f64) -> Result<Self, SignalError> {
        let nyquist = sample_rate_hz / 2.0;
        if spec.order == 0 {
            return Err(SignalError::InvalidFilterSpec("order must be positive".into()));
        }
        if !(spec.low_hz > 0.0 && spec.low_hz < spec.high_hz) {
            return Err(SignalError::InvalidFilterSpec(format!(
                "band [{}, {}] Hz is not an increasing positive interval",
                spec.low_hz, spec.high_hz
            )));
        }
        if spec.high_hz >= nyquist {
            return Err(SignalError::UnstableDesign(format!(
                "upper edge {} Hz is not below Nyquist {nyquist} Hz",
                spec.high_hz
            )));
        }

        let fs2 = 2.0 * sample_rate_hz;
        let w_lo = fs2 * (PI * spec.low_hz / sample_rate_hz).tan();
        let w_hi = fs2 * (PI * spec.high_hz / sample_rate_hz).tan();
        let bw = w_hi - w_lo;
        let w0_sq = w_lo * w_hi;

        let n = spec.order;
        let mut poles = Vec::with_capacity(2 * n);
        for k in 0..n {
            let angle = PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let proto = Complex::from_polar(1.0, angle);
            // s^2 - p*bw*s + w0^2 = 0
            let half = proto * (bw / 2.0);
            let disc = (half * half - w0_sq).sqrt();
            for s in [half + disc, half - disc] {
                poles.push((fs2 + s) / (fs2 - s));
            }
        }

        if poles
            .iter()
            .any(|z| !(z.re.is_finite() && z.im.is_finite()) || z.norm() >= 1.0 - 1e-12)
        {
            return Err(SignalError::UnstableDesign(format!(
                "poles on or outside the unit circle for [{}, {}] Hz at {sample_rate_hz} Hz",
                spec.low_hz, spec.high_hz
            )));
        }

        let mut sections = Vec::with_capacity(n);
        let mut reals = Vec::new();
        for z in &poles {
            if z.im > 1e-12 {
                sections.push(Biquad {
                    b: [1.0, 0.0, -1.0],
                    a: [1.0, -2.0 * z.re, z.norm_sqr()],
                });
            } else if z.im.abs() <= 1e-12 {
                reals.push(z.re);
            }
        }
        for pair in reals.chunks(2) {
            let (r1, r2) = (pair[0], pair.get(1).copied().unwrap_or(0.0));
            sections.push(Biquad {
                b: [1.0, 0.0, -1.0],
                a: [1.0, -(r1 + r2), r1 * r2],
            });
        }
        if sections.len() != n {
            return Err(SignalError::UnstableDesign(format!(
                "expected {n} sections, paired {}",
                sections.len()
            )));
        }

        let mut filter = Self { sections };
        let centre = 2.0 * (w0_sq.sqrt() / fs2).atan();
        let gain = 1.0 / filter.response_at_angle(centre);
        for c in &mut filter.sections[0].b {
            *c *= gain;
        }
        Ok(filter)
    }

    pub fn sections(&self) -> &[Biquad] {
        &self.sections
    }

    fn response_at_angle(&self, omega: f64) -> f64 {
        let z_inv = Complex::from_polar(1.0, -omega);
        self.sections
            .iter()
            .fold(Complex::new(1.0, 0.0), |acc, s| acc * s.response(z_inv))
            .norm()
    }

    /// Magnitude of the digital transfer function at `freq_hz`.
    pub fn magnitude(&self, freq_hz: f64, sample_rate_hz: f64) -> f64 {
        self.response_at_angle(2.0 * PI * freq_hz / sample_rate_hz)
    }

    pub fn state(&self) -> FilterState {
        FilterState {
            sections: self.sections.clone(),
            memory: vec![[0.0; 2]; self.sections.len()],
        }
    }

    pub fn filter_causal(&self, x: &[f64]) -> Vec<f64> {
        let mut state = self.state();
        x.iter().map(|&v| state.process(v)).collect()
    }

    /// Forward-backward filtering with odd-extension padding at both ends.
    pub fn filter_zero_phase(&self, x: &[f64]) -> Vec<f64> {
        let n = x.len();
        if n < 2 {
            return self.filter_causal(&self.filter_causal(x));
        }
        let pad = (3 * (2 * self.sections.len() + 1)).min(n - 1);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
        ext.extend_from_slice(x);
        ext.extend((1..=pad).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

        let mut y = self.filter_causal(&ext);
        y.reverse();
        let mut y = self.filter_causal(&y);
        y.reverse();
        y[pad..pad + n].to_vec()
    }
}

/// Running state of a cascade, for sample-by-sample streaming.
#[derive(Debug, Clone)]
pub struct FilterState {
    sections: Vec<Biquad>,
    memory: Vec<[f64; 2]>,
}

impl FilterState {
    /// Transposed direct form II, one section after another.
    #[inline]
    pub fn process(&mut self, x: f64) -> f64 {
        let mut v = x;
        for (s, z) in self.sections.iter().zip(self.memory.iter_mut()) {
            let y = s.b[0] * v + z[0];
            z[0] = s.b[1] * v - s.a[1] * y + z[1];
            z[1] = s.b[2] * v - s.a[2] * y;
            v = y;
        }
        v
    }

    pub fn reset(&mut self) {
        self.memory.iter_mut().for_each(|z| *z = [0.0; 2]);
    }
}

/// Filters every channel of a recording; output length equals input length.
pub fn bandpass(recording: &Recording, spec: &FilterSpec) -> Result<Recording, SignalError> {
    let filter = ButterworthBandpass::design(spec, recording.sample_rate_hz())?;
    let samples = recording
        .samples()
        .iter()
        .map(|row| match spec.mode {
            FilterMode::Causal => filter.filter_causal(row),
            FilterMode::ZeroPhase => filter.filter_zero_phase(row),
        })
        .collect();
    Ok(recording.with_samples(samples))
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 160.0;

    /// Analog Butterworth bandpass magnitude at the pre-warped frequency,
    /// which the bilinear transform maps exactly onto the digital response.
    fn analog_oracle(f: f64, spec: &FilterSpec) -> f64 {
        let warp = |hz: f64| 2.0 * FS * (PI * hz / FS).tan();
        let (lo, hi, w) = (warp(spec.low_hz), warp(spec.high_hz), warp(f));
        let x = (w * w - lo * hi) / (w * (hi - lo));
        1.0 / (1.0 + x.powi(2 * spec.order as i32)).sqrt()
    }

    fn sine(freq: f64, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| (2.0 * PI * freq * i as f64 / FS).sin())
            .collect()
    }

    fn rms(x: &[f64]) -> f64 {
        (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
    }

    #[test]
    fn designed_response_matches_analog_prototype() {
        let spec = FilterSpec::default();
        let filter = ButterworthBandpass::design(&spec, FS).unwrap();
        assert_eq!(filter.sections().len(), 4);
        for f in [1.0, 2.0, 5.0, 8.0, 12.0, 20.0, 30.0, 40.0, 60.0, 75.0] {
            let got = filter.magnitude(f, FS);
            let want = analog_oracle(f, &spec);
            assert!((got - want).abs() < 1e-9, "{f} Hz: {got} vs {want}");
        }
        // -3 dB at the edges
        assert!((filter.magnitude(8.0, FS) - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
    }

    #[test]
    fn passband_sine_keeps_amplitude() {
        let spec = FilterSpec::default();
        let gain = analog_oracle(20.0, &spec);
        assert!((gain - 1.0).abs() < 0.05);
        let out = bandpass(
            &Recording::new(FS, vec!["C3".into()], vec![sine(20.0, 1600)], vec![]).unwrap(),
            &spec,
        )
        .unwrap();
        let tail = &out.samples()[0][400..];
        let peak = tail.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 0.05, "peak {peak}");
        assert!((peak - gain).abs() < 0.01);
    }

    #[test]
    fn stopband_sine_is_attenuated() {
        let spec = FilterSpec::default();
        for mode in [FilterMode::Causal, FilterMode::ZeroPhase] {
            let rec = Recording::new(FS, vec!["C3".into()], vec![sine(2.0, 3200)], vec![]).unwrap();
            let out = bandpass(&rec, &spec.clone().with_mode(mode)).unwrap();
            let ratio = rms(&out.samples()[0][800..2400]) / rms(&rec.samples()[0][800..2400]);
            assert!(ratio < 0.1, "{mode:?}: {ratio}");
            assert!(ratio < 2.0 * analog_oracle(2.0, &spec).max(1e-3));
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let rec = Recording::new(FS, vec!["C3".into()], vec![vec![0.0; 500]], vec![]).unwrap();
        for mode in [FilterMode::Causal, FilterMode::ZeroPhase] {
            let out = bandpass(&rec, &FilterSpec::default().with_mode(mode)).unwrap();
            assert!(out.samples()[0].iter().all(|&v| v == 0.0));
            assert_eq!(out.n_samples(), 500);
        }
    }

    #[test]
    fn zero_phase_has_no_lag() {
        let filter = ButterworthBandpass::design(&FilterSpec::default(), FS).unwrap();
        let x = sine(15.0, 1600);
        let y = filter.filter_zero_phase(&x);
        let err = x[400..1200]
            .iter()
            .zip(&y[400..1200])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 0.05, "{err}");
    }

    #[test]
    fn invalid_and_unstable_specs() {
        let bad = FilterSpec { low_hz: 30.0, high_hz: 8.0, ..FilterSpec::default() };
        assert!(matches!(ButterworthBandpass::design(&bad, FS), Err(SignalError::InvalidFilterSpec(_))));
        let nyq = FilterSpec { high_hz: 80.0, ..FilterSpec::default() };
        assert!(matches!(ButterworthBandpass::design(&nyq, FS), Err(SignalError::UnstableDesign(_))));
    }

    #[test]
    fn odd_order_designs() {
        let spec = FilterSpec { order: 3, ..FilterSpec::default() };
        let filter = ButterworthBandpass::design(&spec, FS).unwrap();
        assert!((filter.magnitude(20.0, FS) - analog_oracle(20.0, &spec)).abs() < 1e-9);
    }

    #[test]
    fn streaming_state_matches_batch() {
        let filter = ButterworthBandpass::design(&FilterSpec::default(), FS).unwrap();
        let x: Vec<f64> = (0..300).map(|i| ((i * 37 % 101) as f64 - 50.0) * 0.1).collect();
        let batch = filter.filter_causal(&x);
        let mut state = filter.state();
        let mut streamed = Vec::new();
        for chunk in x.chunks(20) {
            streamed.extend(chunk.iter().map(|&v| state.process(v)));
        }
        assert_eq!(batch, streamed);
    }
}
