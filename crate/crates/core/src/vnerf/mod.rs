//! Radiance field with quadrature volume rendering of color and depth.

pub mod analytic;
mod field;
mod render;

pub use field::{
    color_loss, ray_bundles, train_vnerf, view_psnr, FieldTape, RadianceField, RayBundle, View, VnerfConfig,
};
pub use render::{
    camera_ray, composite, composite_backward, render_color, render_depth, render_image, render_ray, sample_ray,
    Composite, Ray, RaySamples, RenderOptions, Sampling, VolumeField,
};
