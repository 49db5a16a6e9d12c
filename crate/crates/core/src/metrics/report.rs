use serde::{Deserialize, Serialize};

use super::distance::{env_distance, mag_distance};
use super::room::{c50_error, edt_error, t60_error};
use crate::dsp::StftConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub id: String,
    pub mag: f64,
    pub env: f64,
    pub t60_pct: Option<f64>,
    pub c50_db: Option<f64>,
    pub edt_s: Option<f64>,
}

/// Means over samples; room-acoustic entries are present only for
/// impulse-response evaluations and skip samples whose decay is too short.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub label: String,
    pub samples: usize,
    pub mag: f64,
    pub env: f64,
    pub t60_pct: Option<f64>,
    pub c50_db: Option<f64>,
    pub edt_s: Option<f64>,
    pub per_sample: Vec<SampleMetrics>,
}

fn mean(v: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    (n > 0).then(|| s / n as f64)
}

impl MetricReport {
    pub fn from_samples(label: &str, per_sample: Vec<SampleMetrics>) -> Self {
        Self {
            label: label.to_string(),
            samples: per_sample.len(),
            mag: mean(per_sample.iter().map(|s| s.mag)).unwrap_or(0.0),
            env: mean(per_sample.iter().map(|s| s.env)).unwrap_or(0.0),
            t60_pct: mean(per_sample.iter().filter_map(|s| s.t60_pct)),
            c50_db: mean(per_sample.iter().filter_map(|s| s.c50_db)),
            edt_s: mean(per_sample.iter().filter_map(|s| s.edt_s)),
            per_sample,
        }
    }

    pub const CSV_HEADER: &'static str = "label,samples,mag,env,t60_pct,c50_db,edt_s";

    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map_or(String::new(), |x| format!("{x:.9e}"));
        format!(
            "{},{},{:.9e},{:.9e},{},{},{}",
            self.label,
            self.samples,
            self.mag,
            self.env,
            opt(self.t60_pct),
            opt(self.c50_db),
            opt(self.edt_s)
        )
    }
}

pub fn binaural_metrics(id: &str, pred: &[Vec<f64>; 2], gt: &[Vec<f64>; 2], cfg: StftConfig) -> Result<SampleMetrics> {
    Ok(SampleMetrics {
        id: id.to_string(),
        mag: mag_distance(pred, gt, cfg)?,
        env: env_distance(pred, gt)?,
        t60_pct: None,
        c50_db: None,
        edt_s: None,
    })
}

fn per_channel(f: impl Fn(usize) -> Result<f64>, id: &str, what: &str) -> Result<Option<f64>> {
    let mut vals = Vec::with_capacity(2);
    for ch in 0..2 {
        match f(ch) {
            Ok(v) => vals.push(v),
            Err(Error::MetricUndefined(m)) => {
                log::warn!("{what} undefined for `{id}` channel {ch}: {m}; excluded");
                return Ok(None);
            }
            Err(e) => return Err(e),
        }
    }
    Ok(Some(0.5 * (vals[0] + vals[1])))
}

/// MAG/ENV plus T60, C50 and EDT errors, each averaged over the two channels.
pub fn ir_metrics(id: &str, pred: &[Vec<f64>; 2], gt: &[Vec<f64>; 2], cfg: StftConfig) -> Result<SampleMetrics> {
    let sr = cfg.sample_rate;
    let mut m = binaural_metrics(id, pred, gt, cfg)?;
    m.t60_pct = per_channel(|c| t60_error(&pred[c], &gt[c], sr), id, "T60")?;
    m.c50_db = per_channel(|c| c50_error(&pred[c], &gt[c], sr), id, "C50")?;
    m.edt_s = per_channel(|c| edt_error(&pred[c], &gt[c], sr), id, "EDT")?;
    Ok(m)
}
