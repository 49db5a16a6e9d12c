use ndarray::{Array1, Array2, ArrayView2};

use super::compose::{compose_magnitudes, loss_and_mask_grads, BinauralMagnitudes, RefineConv};
use super::model::{ANerfConfig, ANerfModel, MaskPair};
use crate::avmapper::{AvMapper, VisualFeatures};
use crate::dsp::{StftConfig, StftPlan};
use crate::error::{Error, Result};
use crate::nn::{ParamSegment, Parameterized};
use crate::pose::Pose;
use crate::rng;
use crate::train::Objective;

/// Masks from a stack of per-source models, one per source.
pub fn multi_source_masks(models: &[ANerfModel], pose: &Pose, sources: &[[f64; 2]]) -> Result<Vec<MaskPair>> {
    if models.is_empty() || models.len() != sources.len() {
        return Err(Error::Input(format!(
            "{} models for {} sources",
            models.len(),
            sources.len()
        )));
    }
    models
        .iter()
        .zip(sources)
        .map(|(m, &s)| m.predict_masks(pose, s, None))
        .collect()
}

/// One training observation in the spectrogram domain.
#[derive(Clone, Debug)]
pub struct AcousticExample {
    pub pose: Pose,
    /// Source magnitude spectrograms, one per source.
    pub sources: Vec<Array2<f64>>,
    pub target: BinauralMagnitudes,
    pub visual: Option<VisualFeatures>,
}

/// The complete acoustic model of a scene: one mask network per source, the
/// optional AV mapper shared by all of them, and the optional refinement.
#[derive(Clone, Debug, PartialEq)]
pub struct AcousticField {
    config: ANerfConfig,
    sources: Vec<[f64; 2]>,
    models: Vec<ANerfModel>,
    mapper: Option<AvMapper>,
    refine: Option<RefineConv>,
}

impl AcousticField {
    pub fn new(config: ANerfConfig, sources: Vec<[f64; 2]>, seed: u64) -> Result<Self> {
        config.validate()?;
        if sources.is_empty() {
            return Err(Error::Config("an acoustic field needs at least one source".into()));
        }
        let models = (0..sources.len())
            .map(|k| ANerfModel::new(&config, &mut rng::seeded(rng::derive(seed, k as u64))))
            .collect::<Result<Vec<_>>>()?;
        let mapper = if config.av_mapper {
            Some(AvMapper::new(config.width, &mut rng::seeded(rng::derive(seed, 0x6d61_7070)))?)
        } else {
            None
        };
        let refine = config.refine.then(RefineConv::default);
        Ok(Self {
            config,
            sources,
            models,
            mapper,
            refine,
        })
    }

    pub fn config(&self) -> &ANerfConfig {
        &self.config
    }

    pub fn sources(&self) -> &[[f64; 2]] {
        &self.sources
    }

    pub fn models(&self) -> &[ANerfModel] {
        &self.models
    }

    pub fn models_mut(&mut self) -> &mut [ANerfModel] {
        &mut self.models
    }

    pub fn mapper(&self) -> Option<&AvMapper> {
        self.mapper.as_ref()
    }

    pub fn mapper_mut(&mut self) -> Option<&mut AvMapper> {
        self.mapper.as_mut()
    }

    pub fn refine(&self) -> Option<&RefineConv> {
        self.refine.as_ref()
    }

    pub fn zero_output_layers(&mut self) {
        self.models.iter_mut().for_each(ANerfModel::zero_output_layers);
        if let Some(m) = &mut self.mapper {
            m.zero_output_layer();
        }
    }

    /// Visual embedding for a view, or `None` when the field has no AV path or
    /// no view is supplied.
    pub fn embedding(&self, visual: Option<&VisualFeatures>) -> Result<Option<Array1<f64>>> {
        match (&self.mapper, visual) {
            (Some(m), Some(v)) => Ok(Some(m.map(v)?)),
            _ => Ok(None),
        }
    }

    pub fn predict_masks(&self, pose: &Pose, visual: Option<&VisualFeatures>) -> Result<Vec<MaskPair>> {
        let e = self.embedding(visual)?;
        self.models
            .iter()
            .zip(&self.sources)
            .map(|(m, &s)| m.predict_masks(pose, s, e.as_ref().map(|e| e.view())))
            .collect()
    }

    pub fn compose(&self, sources: &[ArrayView2<f64>], masks: &[MaskPair]) -> Result<BinauralMagnitudes> {
        compose_magnitudes(sources, masks, self.refine.as_ref())
    }

    /// Renders binaural audio at `pose` from the per-source dry signals.
    ///
    /// Output channels have the input length and use the phase of the summed
    /// source spectra.
    pub fn synthesize(
        &self,
        pose: &Pose,
        source_audio: &[&[f64]],
        visual: Option<&VisualFeatures>,
        stft: StftConfig,
    ) -> Result<[Vec<f64>; 2]> {
        if source_audio.len() != self.sources.len() {
            return Err(Error::Input(format!(
                "{} source signals for {} sources",
                source_audio.len(),
                self.sources.len()
            )));
        }
        let plan = StftPlan::new(stft)?;
        let (mags, phase) = plan.analyze_mixture(source_audio)?;
        let masks = self.predict_masks(pose, visual)?;
        let views: Vec<ArrayView2<f64>> = mags.iter().map(|m| m.view()).collect();
        let out = self.compose(&views, &masks)?;
        let len = Some(source_audio[0].len());
        Ok([plan.synthesize(&out.left, &phase, len)?, plan.synthesize(&out.right, &phase, len)?])
    }

    pub fn loss(&self, ex: &AcousticExample) -> Result<f64> {
        let masks = self.predict_masks(&ex.pose, ex.visual.as_ref())?;
        let views: Vec<ArrayView2<f64>> = ex.sources.iter().map(|m| m.view()).collect();
        let (loss, _) = loss_and_mask_grads(&views, &masks, self.refine.as_ref(), &ex.target)?;
        Ok(loss)
    }

    /// Loss of one example and its full parameter gradient.
    pub fn loss_and_grad(&self, ex: &AcousticExample) -> Result<(f64, Vec<f64>)> {
        let mut g = vec![0.0; self.num_params()];
        let loss = self.accumulate(ex, &mut g)?;
        Ok((loss, g))
    }
}

impl Objective for AcousticField {
    type Example = AcousticExample;

    fn accumulate(&self, ex: &AcousticExample, grad: &mut [f64]) -> Result<f64> {
        if ex.sources.len() != self.models.len() {
            return Err(Error::Input(format!(
                "example has {} sources, field has {}",
                ex.sources.len(),
                self.models.len()
            )));
        }
        let mapped = match (&self.mapper, &ex.visual) {
            (Some(m), Some(v)) => Some(m.forward(v)?),
            _ => None,
        };
        let e = mapped.as_ref().map(|(e, _)| e.view());
        let mut masks = Vec::with_capacity(self.models.len());
        let mut tapes = Vec::with_capacity(self.models.len());
        for (m, &s) in self.models.iter().zip(&self.sources) {
            let (mask, tape) = m.forward(&ex.pose, s, e)?;
            masks.push(mask);
            tapes.push(tape);
        }
        let views: Vec<ArrayView2<f64>> = ex.sources.iter().map(|m| m.view()).collect();
        let (loss, mg) = loss_and_mask_grads(&views, &masks, self.refine.as_ref(), &ex.target)?;

        let mut flat = Vec::with_capacity(grad.len());
        let mut emb_grad = Array1::zeros(self.config.width);
        for (k, (m, tape)) in self.models.iter().zip(&tapes).enumerate() {
            emb_grad += &m.backward(tape, &mg.mix[k], &mg.diff[k], &mut flat)?;
        }
        if let Some(mapper) = &self.mapper {
            match &mapped {
                Some((_, tape)) => mapper.backward(tape, &emb_grad, &mut flat)?,
                None => flat.resize(flat.len() + mapper.num_params(), 0.0),
            }
        }
        if let Some(r) = &mg.refine {
            flat.extend_from_slice(r);
        }
        debug_assert_eq!(flat.len(), grad.len());
        grad.iter_mut().zip(&flat).for_each(|(a, b)| *a += b);
        Ok(loss)
    }
}

impl Parameterized for AcousticField {
    fn param_segments(&self) -> Vec<ParamSegment> {
        let mut segs = Vec::new();
        for (k, m) in self.models.iter().enumerate() {
            let prefix = format!("source{k}");
            segs.extend(m.param_segments().into_iter().map(|s| s.prefixed(&prefix)));
        }
        if let Some(m) = &self.mapper {
            segs.extend(m.param_segments().into_iter().map(|s| s.prefixed("mapper")));
        }
        if let Some(r) = &self.refine {
            segs.extend(r.param_segments());
        }
        segs
    }

    fn write_params(&self, out: &mut Vec<f64>) {
        self.models.iter().for_each(|m| m.write_params(out));
        if let Some(m) = &self.mapper {
            m.write_params(out);
        }
        if let Some(r) = &self.refine {
            r.write_params(out);
        }
    }

    fn read_params(&mut self, src: &[f64]) -> Result<usize> {
        let mut used = 0;
        for m in &mut self.models {
            used += m.read_params(&src[used..])?;
        }
        if let Some(m) = &mut self.mapper {
            used += m.read_params(&src[used..])?;
        }
        if let Some(r) = &mut self.refine {
            used += r.read_params(&src[used..])?;
        }
        Ok(used)
    }
}
