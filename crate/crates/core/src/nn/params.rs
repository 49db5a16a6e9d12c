use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A named, shaped slice of a model's flattened parameter vector.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSegment {
    pub name: String,
    pub shape: Vec<usize>,
}

impl ParamSegment {
    pub fn new(name: impl Into<String>, shape: Vec<usize>) -> Self {
        Self {
            name: name.into(),
            shape,
        }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn prefixed(mut self, prefix: &str) -> Self {
        self.name = format!("{prefix}.{}", self.name);
        self
    }
}

/// Anything whose trainable state can be flattened into one `f64` vector.
///
/// The order of `param_segments` defines the flattening order, which is also the
/// order gradients are reported in.
pub trait Parameterized {
    fn param_segments(&self) -> Vec<ParamSegment>;

    fn write_params(&self, out: &mut Vec<f64>);

    /// Reads parameters from the front of `src` and returns how many were consumed.
    fn read_params(&mut self, src: &[f64]) -> Result<usize>;

    fn num_params(&self) -> usize {
        self.param_segments().iter().map(ParamSegment::len).sum()
    }

    fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        self.write_params(&mut out);
        out
    }

    fn load_flat_params(&mut self, src: &[f64]) -> Result<()> {
        let used = self.read_params(src)?;
        if used != src.len() {
            return Err(Error::Input(format!(
                "parameter vector has {} entries, model expects {used}",
                src.len()
            )));
        }
        Ok(())
    }
}

/// Maps a flat parameter index back to `segment[offset]` for diagnostics.
pub fn locate_param(segments: &[ParamSegment], mut index: usize) -> String {
    for seg in segments {
        if index < seg.len() {
            return format!("{}[{index}]", seg.name);
        }
        index -= seg.len();
    }
    format!("<out of range {index}>")
}

pub(crate) fn take<'a>(src: &'a [f64], n: usize, what: &str) -> Result<&'a [f64]> {
    src.get(..n).ok_or_else(|| {
        Error::Input(format!(
            "parameter vector too short while reading {what}: need {n}, have {}",
            src.len()
        ))
    })
}
