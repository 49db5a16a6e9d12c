//! Coordinate encodings: sinusoidal positional encoding, the source-relative
//! heading transform, and the learnable four-direction embedding table.

use std::f64::consts::{FRAC_PI_2, PI, TAU};

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::params::take;
use crate::nn::{ParamSegment, Parameterized};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeMode {
    /// Inputs outside `[-1, 1]` are an error.
    Strict,
    /// Inputs outside `[-1, 1]` are clamped (and logged).
    Lenient,
}

/// `x -> (sin(2^k pi x), cos(2^k pi x))_{k < L}` per input dimension, optionally
/// preceded by the raw input.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PositionalEncoding {
    pub num_frequencies: usize,
    pub include_input: bool,
    pub mode: RangeMode,
}

impl Default for PositionalEncoding {
    fn default() -> Self {
        Self {
            num_frequencies: 10,
            include_input: false,
            mode: RangeMode::Strict,
        }
    }
}

impl PositionalEncoding {
    pub fn new(num_frequencies: usize) -> Self {
        Self {
            num_frequencies,
            ..Self::default()
        }
    }

    pub fn lenient(self) -> Self {
        Self {
            mode: RangeMode::Lenient,
            ..self
        }
    }

    pub fn per_dim(&self) -> usize {
        2 * self.num_frequencies + usize::from(self.include_input)
    }

    pub fn output_dim(&self, input_dim: usize) -> usize {
        input_dim * self.per_dim()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.output_dim(x.len())];
        self.encode_into(x, &mut out)?;
        Ok(out)
    }

    /// Layout: for each input dimension, `[x?, sin_0, cos_0, sin_1, cos_1, ...]`.
    pub fn encode_into(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        debug_assert_eq!(out.len(), self.output_dim(x.len()));
        let per = self.per_dim();
        for (d, &raw) in x.iter().enumerate() {
            let v = self.check(raw)?;
            let slot = &mut out[d * per..(d + 1) * per];
            let mut i = 0;
            if self.include_input {
                slot[0] = v;
                i = 1;
            }
            let mut scale = PI;
            for _ in 0..self.num_frequencies {
                let (s, c) = (scale * v).sin_cos();
                slot[i] = s;
                slot[i + 1] = c;
                i += 2;
                scale *= 2.0;
            }
        }
        Ok(())
    }

    fn check(&self, v: f64) -> Result<f64> {
        if !v.is_finite() {
            return Err(Error::Input(format!("cannot encode non-finite coordinate {v}")));
        }
        if (-1.0..=1.0).contains(&v) {
            return Ok(v);
        }
        match self.mode {
            RangeMode::Strict => Err(Error::Input(format!(
                "coordinate {v} lies outside the normalized range [-1, 1]"
            ))),
            RangeMode::Lenient => {
                log::debug!("clamping out-of-range coordinate {v}");
                Ok(v.clamp(-1.0, 1.0))
            }
        }
    }
}

/// Signed counter-clockwise angle from the heading vector `(cos h, sin h)` to the
/// listener-to-source vector, wrapped to `[0, 2 pi)`. A source on the listener's
/// left gives an angle in `(0, pi)`.
pub fn relative_direction(listener: [f64; 2], heading: f64, source: [f64; 2]) -> Result<f64> {
    let v1 = [source[0] - listener[0], source[1] - listener[1]];
    let norm = v1[0].hypot(v1[1]);
    if norm < 1e-12 {
        return Err(Error::DegenerateGeometry(format!(
            "listener at {listener:?} coincides with the source"
        )));
    }
    let v2 = heading.sin_cos();
    let (sin_h, cos_h) = v2;
    let cross = cos_h * v1[1] - sin_h * v1[0];
    let dot = cos_h * v1[0] + sin_h * v1[1];
    Ok(wrap_angle(cross.atan2(dot)))
}

/// Wraps any angle into `[0, 2 pi)`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w >= TAU {
        0.0
    } else {
        w
    }
}

/// Which two table rows an angle blends, and with what weights.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Blend {
    pub rows: [usize; 2],
    pub weights: [f64; 2],
}

impl Blend {
    /// Linear blend between the two cardinal directions bracketing `angle`.
    pub fn for_angle(angle: f64) -> Self {
        let a = wrap_angle(angle);
        let pos = a / FRAC_PI_2;
        let lower = (pos.floor() as usize).min(3);
        let frac = (pos - lower as f64).clamp(0.0, 1.0);
        Self {
            rows: [lower, (lower + 1) % 4],
            weights: [1.0 - frac, frac],
        }
    }
}

/// Learnable `4 x c` table for the directions 0, 90, 180 and 270 degrees.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionEmbedding {
    table: Array2<f64>,
}

impl DirectionEmbedding {
    pub fn new(table: Array2<f64>) -> Result<Self> {
        if table.nrows() != 4 {
            return Err(Error::Config(format!(
                "direction table needs 4 rows, got {}",
                table.nrows()
            )));
        }
        if table.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("direction table must be finite".into()));
        }
        Ok(Self { table })
    }

    /// Uniform in `[-0.1, 0.1]`.
    pub fn init<R: Rng + ?Sized>(width: usize, rng: &mut R) -> Self {
        Self {
            table: Array2::from_shape_fn((4, width), |_| rng.random_range(-0.1..=0.1)),
        }
    }

    pub fn width(&self) -> usize {
        self.table.ncols()
    }

    pub fn table(&self) -> &Array2<f64> {
        &self.table
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.table.row(i)
    }

    pub fn interpolate(&self, angle: f64) -> Array1<f64> {
        self.blend(&Blend::for_angle(angle))
    }

    pub fn blend(&self, b: &Blend) -> Array1<f64> {
        &self.table.row(b.rows[0]) * b.weights[0] + &self.table.row(b.rows[1]) * b.weights[1]
    }

    /// Scatters the gradient w.r.t. an interpolated embedding back onto the table.
    pub fn accumulate_grad(&self, b: &Blend, grad: ArrayView1<f64>, table_grad: &mut Array2<f64>) {
        for (row, w) in b.rows.iter().zip(b.weights) {
            table_grad.row_mut(*row).scaled_add(w, &grad);
        }
    }
}

pub fn interpolate_embedding(angle: f64, emb: &DirectionEmbedding) -> Array1<f64> {
    emb.interpolate(angle)
}

pub fn positional_encode(x: &[f64], pe: &PositionalEncoding) -> Result<Vec<f64>> {
    pe.encode(x)
}

impl Parameterized for DirectionEmbedding {
    fn param_segments(&self) -> Vec<ParamSegment> {
        vec![ParamSegment::new("table", vec![4, self.width()])]
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        out.extend(self.table.iter().copied());
    }

    fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let vals = take(src, self.table.len(), "direction table")?;
        for (d, &v) in self.table.iter_mut().zip(vals) {
            *d = v;
        }
        Ok(vals.len())
    }
}
