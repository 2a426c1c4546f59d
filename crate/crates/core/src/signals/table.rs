//! Breakpointed piecewise-cubic waveform tables.
//!
//! The text format is TOML. A table covers exactly one period, from the first
//! knot to the last; the last knot must repeat the first knot's values so the
//! periodic extension is continuous.
//!
//! ```toml
//! channels = 2
//!
//! [[knot]]
//! t = 0.0
//! value = [1.0, 0.0]
//! slope = [0.0, 1.0]
//!
//! [[knot]]
//! t = 0.5
//! value = [0.0, 1.0]
//! slope = [-1.0, 0.0]
//! slope_left = [-1.5, 0.0]   # optional: one-sided slope arriving at this knot
//!
//! [[knot]]
//! t = 1.0
//! value = [1.0, 0.0]
//! ```
//!
//! Between knots each channel is the cubic Hermite interpolant of the values
//! and slopes. `slope` is the slope leaving a knot; `slope_left` (defaulting to
//! `slope`) the slope arriving at it, so kinks are represented exactly. A knot
//! without `slope` gets a finite-difference slope from its neighbours.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableKnot {
    pub t: f64,
    pub value: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slope_left: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformTable {
    pub channels: usize,
    #[serde(rename = "knot")]
    pub knots: Vec<TableKnot>,
}

impl WaveformTable {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: WaveformTable =
            toml::from_str(text).map_err(|e| Error::Config(format!("waveform table: {e}")))?;
        table.validate()?;
        Ok(table)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("waveform table: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |msg: String| Err(Error::Config(msg));
        if self.channels == 0 {
            return cfg("waveform table needs at least one channel".into());
        }
        if self.knots.len() < 2 {
            return cfg("waveform table needs at least two knots".into());
        }
        for (i, k) in self.knots.iter().enumerate() {
            if !k.t.is_finite() {
                return cfg(format!("knot {i}: non-finite time"));
            }
            if k.value.len() != self.channels {
                return cfg(format!(
                    "knot {i}: {} values for {} channels",
                    k.value.len(),
                    self.channels
                ));
            }
            for (name, s) in [("slope", &k.slope), ("slope_left", &k.slope_left)] {
                if let Some(s) = s {
                    if s.len() != self.channels {
                        return cfg(format!("knot {i}: {name} has {} entries", s.len()));
                    }
                }
            }
            if k.value.iter().any(|v| !v.is_finite()) {
                return cfg(format!("knot {i}: non-finite value"));
            }
            if i > 0 && k.t <= self.knots[i - 1].t {
                return cfg(format!("knot {i}: times must be strictly increasing"));
            }
        }
        let first = &self.knots[0].value;
        let last = &self.knots[self.knots.len() - 1].value;
        if first.iter().zip(last).any(|(a, b)| (a - b).abs() > 1e-9) {
            return cfg("last knot must repeat the first knot's values (continuity)".into());
        }
        Ok(())
    }

    pub fn start(&self) -> f64 {
        self.knots[0].t
    }

    pub fn period(&self) -> f64 {
        self.knots[self.knots.len() - 1].t - self.knots[0].t
    }

    /// Interior knot times relative to the table start.
    pub fn interior_breakpoints(&self) -> Vec<f64> {
        let t0 = self.start();
        self.knots[1..self.knots.len() - 1]
            .iter()
            .map(|k| k.t - t0)
            .collect()
    }

    fn outgoing_slope(&self, i: usize, c: usize) -> f64 {
        match &self.knots[i].slope {
            Some(s) => s[c],
            None => self.fd_slope(i, c),
        }
    }

    fn incoming_slope(&self, i: usize, c: usize) -> f64 {
        match (&self.knots[i].slope_left, &self.knots[i].slope) {
            (Some(s), _) | (None, Some(s)) => s[c],
            (None, None) => self.fd_slope(i, c),
        }
    }

    // Centered difference using periodic neighbours.
    fn fd_slope(&self, i: usize, c: usize) -> f64 {
        let n = self.knots.len();
        let period = self.period();
        let (prev_t, prev_v) = if i == 0 {
            (self.knots[n - 2].t - period, self.knots[n - 2].value[c])
        } else {
            (self.knots[i - 1].t, self.knots[i - 1].value[c])
        };
        let (next_t, next_v) = if i == n - 1 {
            (self.knots[1].t + period, self.knots[1].value[c])
        } else {
            (self.knots[i + 1].t, self.knots[i + 1].value[c])
        };
        (next_v - prev_v) / (next_t - prev_t)
    }

    /// Evaluate the periodic extension at `t`.
    pub fn eval_into(&self, t: f64, out: &mut [f64]) {
        let t0 = self.start();
        let tt = t0 + (t - t0).rem_euclid(self.period());
        let seg = self
            .knots
            .partition_point(|k| k.t <= tt)
            .clamp(1, self.knots.len() - 1)
            - 1;
        let (k0, k1) = (&self.knots[seg], &self.knots[seg + 1]);
        let h = k1.t - k0.t;
        let s = (tt - k0.t) / h;
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        for (c, o) in out.iter_mut().enumerate().take(self.channels) {
            let m0 = self.outgoing_slope(seg, c);
            let m1 = self.incoming_slope(seg + 1, c);
            *o = h00 * k0.value[c] + h10 * h * m0 + h01 * k1.value[c] + h11 * h * m1;
        }
    }

    /// Sample a signal into a table: knots on a uniform grid merged with `breakpoints`,
    /// slopes from one-sided differences so kinks survive the round trip.
    pub fn sample<F>(f: F, channels: usize, start: f64, period: f64, samples: usize, breakpoints: &[f64]) -> Self
    where
        F: Fn(f64, &mut [f64]),
    {
        let mut ts: Vec<f64> = (0..=samples)
            .map(|k| start + period * k as f64 / samples as f64)
            .collect();
        ts.extend(breakpoints.iter().map(|b| start + b));
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|a, b| (*a - *b).abs() < 1e-12 * period.max(1.0));

        let step = 1e-6 * period / samples.max(1) as f64;
        let mut v = vec![0.0; channels];
        let mut lo = vec![0.0; channels];
        let mut hi = vec![0.0; channels];
        let mut mid = vec![0.0; channels];
        let knots = ts
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                f(t, &mut v);
                // outgoing: forward difference; incoming: backward difference
                f(t + step, &mut hi);
                f(t + 2.0 * step, &mut mid);
                let slope: Vec<f64> = (0..channels)
                    .map(|c| (-3.0 * v[c] + 4.0 * hi[c] - mid[c]) / (2.0 * step))
                    .collect();
                f(t - step, &mut lo);
                f(t - 2.0 * step, &mut mid);
                let left: Vec<f64> = (0..channels)
                    .map(|c| (3.0 * v[c] - 4.0 * lo[c] + mid[c]) / (2.0 * step))
                    .collect();
                let kink = slope
                    .iter()
                    .zip(&left)
                    .any(|(a, b)| (a - b).abs() > 1e-4 * (1.0 + a.abs()));
                TableKnot {
                    t,
                    value: v.clone(),
                    slope: Some(slope),
                    slope_left: (kink || i == ts.len() - 1).then_some(left),
                }
            })
            .collect();
        WaveformTable { channels, knots }
    }
}
