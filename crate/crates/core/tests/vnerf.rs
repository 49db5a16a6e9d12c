use std::f64::consts::PI;

use avfield::camera::Intrinsics;
use avfield::nn::{max_relative_error, numeric_gradient, AdamConfig, Parameterized};
use avfield::pose::Pose;
use avfield::simulator::{render_analytic, Primitive, Room, SceneSpec};
use avfield::train::{Objective, TrainConfig};
use avfield::vnerf::analytic::{Blobs, Homogeneous, Slab};
use avfield::vnerf::*;
use avfield::Error;
use proptest::prelude::*;
use rand::Rng;

fn x_ray(t_near: f64, t_far: f64) -> Ray {
    Ray::new([0.0, 0.0, 0.0], [1.0, 0.0, 0.0], t_near, t_far).unwrap()
}

#[test]
fn empty_space_renders_black_at_zero_depth() {
    let f = Homogeneous {
        sigma: 0.0,
        color: [0.7, 0.2, 0.1],
    };
    let c = render_ray(&f, &x_ray(0.1, 5.0), 64, Sampling::Stratified { seed: 1 }).unwrap();
    assert_eq!(c.color, [0.0; 3]);
    assert_eq!(c.depth, 0.0);
}

#[test]
fn homogeneous_medium_matches_closed_form() {
    for (s, tn, tf) in [(0.5, 0.2, 4.0), (2.0, 1.0, 3.0), (0.05, 0.0, 6.0)] {
        let k = [0.9, 0.4, 0.1];
        let f = Homogeneous { sigma: s, color: k };
        let ray = x_ray(tn, tf);
        let l = tf - tn;
        let opacity = 1.0 - (-s * l).exp();
        // Integral of s e^{-s u} (tn + u) over [0, l].
        let depth = tn * opacity + 1.0 / s - (-s * l).exp() * (l + 1.0 / s);
        let c = render_ray(&f, &ray, 256, Sampling::Midpoint).unwrap();
        for ch in 0..3 {
            assert!((c.color[ch] - k[ch] * opacity).abs() < 1e-3);
        }
        assert!((c.depth - depth).abs() < 1e-3, "{} vs {depth}", c.depth);
        let jittered = render_color(&f, &ray, 256, Sampling::Stratified { seed: 9 }).unwrap();
        assert!((jittered[0] - k[0] * opacity).abs() < 1e-3);
    }
}

#[test]
fn opaque_slab_depth_within_one_sample() {
    for d in [1.3, 2.71, 4.05] {
        let f = Slab {
            axis: 0,
            lo: d,
            hi: d + 0.2,
            sigma: 1e4,
            color: [1.0; 3],
        };
        let ray = x_ray(0.0, 6.0);
        let n = 128;
        let depth = render_depth(&f, &ray, n, Sampling::Midpoint).unwrap();
        assert!((depth - d).abs() <= 6.0 / n as f64, "{depth} vs {d}");
    }
}

fn random_blobs(seed: u64) -> Blobs {
    let mut r = avfield::rng::seeded(seed);
    let k = 3;
    Blobs {
        centers: (0..k)
            .map(|_| [r.random_range(1.0..4.0), r.random_range(-0.3..0.3), r.random_range(-0.3..0.3)])
            .collect(),
        scales: (0..k).map(|_| r.random_range(0.3..0.8)).collect(),
        peaks: (0..k).map(|_| r.random_range(0.2..2.0)).collect(),
    }
}

fn quad_error(f: &Blobs, ray: &Ray, n: usize, reference: &Composite) -> f64 {
    let c = render_ray(f, ray, n, Sampling::Midpoint).unwrap();
    (0..3).map(|ch| (c.color[ch] - reference.color[ch]).abs()).fold(0.0, f64::max)
}

#[test]
fn coarse_quadrature_tracks_fine_reference() {
    let ray = x_ray(0.0, 5.0);
    for seed in 0..5 {
        let f = random_blobs(seed);
        let reference = render_ray(&f, &ray, 4096, Sampling::Midpoint).unwrap();
        assert!(quad_error(&f, &ray, 64, &reference) < 1e-2);
        let jittered = render_ray(&f, &ray, 64, Sampling::Stratified { seed }).unwrap();
        assert!((jittered.color[0] - reference.color[0]).abs() < 1e-2);
    }
}

#[test]
fn quadrature_error_shrinks_when_samples_double() {
    let ray = x_ray(0.0, 5.0);
    let mut ratios: Vec<f64> = (0..9)
        .map(|seed| {
            let f = random_blobs(100 + seed);
            let reference = render_ray(&f, &ray, 4096, Sampling::Midpoint).unwrap();
            quad_error(&f, &ray, 32, &reference) / quad_error(&f, &ray, 16, &reference)
        })
        .collect();
    ratios.sort_by(f64::total_cmp);
    assert!(ratios[4] < 0.7, "{ratios:?}");
}

#[test]
fn invalid_rays_are_rejected() {
    assert!(matches!(Ray::new([0.0; 3], [1.0, 1.0, 0.0], 0.0, 1.0), Err(Error::Input(_))));
    assert!(matches!(Ray::new([0.0; 3], [1.0, 0.0, 0.0], 2.0, 1.0), Err(Error::Input(_))));
    assert!(matches!(Ray::new([f64::NAN, 0.0, 0.0], [1.0, 0.0, 0.0], 0.0, 1.0), Err(Error::Input(_))));
    let f = Homogeneous {
        sigma: 1.0,
        color: [1.0; 3],
    };
    assert!(matches!(render_ray(&f, &x_ray(0.0, 1.0), 1, Sampling::Midpoint), Err(Error::Input(_))));
}

#[test]
fn stratified_rendering_is_seeded() {
    let f = random_blobs(3);
    let ray = x_ray(0.0, 5.0);
    let a = render_ray(&f, &ray, 32, Sampling::Stratified { seed: 4 }).unwrap();
    let b = render_ray(&f, &ray, 32, Sampling::Stratified { seed: 4 }).unwrap();
    let c = render_ray(&f, &ray, 32, Sampling::Stratified { seed: 5 }).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn composite_gradient_matches_finite_differences() {
    let mut r = avfield::rng::seeded(8);
    let n = 12;
    let ray = x_ray(0.5, 3.0);
    let s = sample_ray(&ray, n, Sampling::Stratified { seed: 2 }).unwrap();
    let sigma: Vec<f64> = (0..n).map(|_| r.random_range(0.0..3.0)).collect();
    let color: Vec<[f64; 3]> = (0..n).map(|_| [r.random(), r.random(), r.random()]).collect();
    let g = [0.3, -1.2, 0.7];
    let comp = composite(&sigma, &color, &s);
    let (ds, dc) = composite_backward(&sigma, &color, &s, &comp, g);
    let obj = |sig: &[f64], col: &[[f64; 3]]| {
        let c = composite(sig, col, &s).color;
        (0..3).map(|ch| g[ch] * c[ch]).sum::<f64>()
    };
    let num_s = numeric_gradient(|p| obj(p, &color), &sigma, 1e-6);
    assert!(max_relative_error(&ds, &num_s) < 1e-6);
    let flat: Vec<f64> = color.iter().flatten().copied().collect();
    let num_c = numeric_gradient(
        |p| {
            let col: Vec<[f64; 3]> = p.chunks(3).map(|c| [c[0], c[1], c[2]]).collect();
            obj(&sigma, &col)
        },
        &flat,
        1e-6,
    );
    let ana_c: Vec<f64> = dc.iter().flatten().copied().collect();
    assert!(max_relative_error(&ana_c, &num_c) < 1e-6);
}

fn tiny_field(seed: u64) -> RadianceField {
    let cfg = VnerfConfig {
        width: 6,
        position_frequencies: 2,
        direction_frequencies: 1,
        center: [1.0, 0.0, 0.0],
        extent: 3.0,
        render: RenderOptions {
            samples: 6,
            t_near: 0.2,
            t_far: 3.0,
            sampling: Sampling::Stratified { seed: 1 },
        },
    };
    RadianceField::new(cfg, &mut avfield::rng::seeded(seed)).unwrap()
}

#[test]
fn field_gradient_matches_finite_differences() {
    for seed in 0..3 {
        let field = tiny_field(seed);
        let bundle = RayBundle {
            rays: vec![
                Ray::new([0.0, 0.1, 0.0], [1.0, 0.0, 0.0], 0.2, 3.0).unwrap(),
                Ray::new([0.0, 0.0, 0.3], [0.6, 0.8, 0.0], 0.2, 3.0).unwrap(),
            ],
            targets: vec![[0.9, 0.1, 0.3], [0.2, 0.5, 0.8]],
            sampling: Sampling::Stratified { seed: 5 },
        };
        let mut grad = vec![0.0; field.num_params()];
        field.accumulate(&bundle, &mut grad).unwrap();
        let params = field.flat_params();
        let numeric = numeric_gradient(
            |p| {
                let mut f = field.clone();
                f.load_flat_params(p).unwrap();
                let mut g = vec![0.0; p.len()];
                f.accumulate(&bundle, &mut g).unwrap()
            },
            &params,
            1e-5,
        );
        let err = max_relative_error(&grad, &numeric);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn empty_field_has_zero_loss_on_black_views() {
    let mut field = tiny_field(1);
    field.clear_density();
    let views = vec![View {
        pose: Pose::new(0.0, 0.0, 0.0, 0.0, 0.0),
        rgb: avfield::raster::Image::new(4, 4, 3),
    }];
    let opts = field.config().render;
    let bundles = ray_bundles(&views, 1.2, &opts, 8, 0).unwrap();
    let mut g = vec![0.0; field.num_params()];
    let loss: f64 = bundles.iter().map(|b| field.accumulate(b, &mut g).unwrap()).sum();
    assert!(loss < 1e-30, "{loss}");
    assert_eq!(color_loss(&[[0.2, 0.3, 0.4]], &[[0.2, 0.3, 0.4]]), 0.0);
}

struct SolidSphere {
    center: [f64; 3],
    radius: f64,
}

impl VolumeField for SolidSphere {
    fn query(&self, points: &[[f64; 3]], _: [f64; 3]) -> avfield::Result<(Vec<f64>, Vec<[f64; 3]>)> {
        let sigma = points
            .iter()
            .map(|p| {
                let d2: f64 = (0..3).map(|i| (p[i] - self.center[i]).powi(2)).sum();
                if d2 < self.radius * self.radius {
                    1e3
                } else {
                    0.0
                }
            })
            .collect();
        Ok((sigma, vec![[1.0, 0.0, 0.0]; points.len()]))
    }
}

#[test]
fn image_rendering_geometry() {
    let sphere = SolidSphere {
        center: [4.0, 0.0, 1.2],
        radius: 0.8,
    };
    let opts = RenderOptions {
        samples: 256,
        t_near: 0.1,
        t_far: 8.0,
        sampling: Sampling::Midpoint,
    };
    let pose = Pose::new(0.0, 0.0, 1.2, 0.0, 0.0);
    let k = Intrinsics::from_hfov(64, 64, 1.2).unwrap();
    let (rgb, depth) = render_image(&sphere, &pose, 64, 64, &k, &opts).unwrap();
    let hits = rgb.data().chunks(3).filter(|p| p[0] > 0.5).count() as f64;
    let radius_px = k.focal * (0.8f64 / 4.0).asin().tan();
    let area = PI * radius_px * radius_px;
    assert!((hits - area).abs() / area < 0.1, "{hits} vs {area}");
    assert!((depth.get(32, 32, 0) as f64 - 3.2).abs() < 8.0 / 256.0 + 1e-3);

    let away = Pose::new(0.0, 0.0, 1.2, PI, 0.0);
    let (rgb, depth) = render_image(&sphere, &away, 16, 16, &k, &opts).unwrap();
    assert!(rgb.data().iter().all(|&v| v == 0.0));
    assert!(depth.data().iter().all(|&v| v == 0.0));

    let one = Intrinsics::from_hfov(1, 1, 1.2).unwrap();
    let (rgb, depth) = render_image(&sphere, &pose, 1, 1, &one, &opts).unwrap();
    let central = render_ray(&sphere, &camera_ray(&pose, &one, 0, 0, &opts).unwrap(), 256, Sampling::Midpoint).unwrap();
    assert_eq!(rgb.get(0, 0, 0), central.color[0] as f32);
    assert_eq!(depth.get(0, 0, 0), central.depth as f32);

    let bad = Intrinsics {
        focal: -1.0,
        cx: 0.0,
        cy: 0.0,
    };
    assert!(render_image(&sphere, &pose, 4, 4, &bad, &opts).is_err());
}

fn sphere_scene() -> SceneSpec {
    let mut s = SceneSpec::default();
    s.room = Some(Room {
        walls: None,
        primitives: vec![Primitive::Sphere {
            center: [0.0, 0.0, 1.2],
            radius: 0.8,
            color: [0.9, 0.3, 0.2],
        }],
    });
    s
}

fn orbit(i: usize, n: usize) -> Pose {
    let a = 2.0 * PI * i as f64 / n as f64;
    Pose::new(3.0 * a.cos(), 3.0 * a.sin(), 1.2, a + PI, 0.0)
}

#[test]
fn trained_field_reproduces_held_out_views() {
    let scene = sphere_scene();
    let hfov = scene.listener.hfov;
    let view = |p: Pose| View {
        pose: p,
        rgb: render_analytic(&scene, &p, 32, 32).unwrap().0,
    };
    let train_views: Vec<View> = (0..20).map(|i| view(orbit(2 * i, 40))).collect();
    let val_views: Vec<View> = (0..4).map(|i| view(orbit(10 * i + 5, 40))).collect();
    let cfg = VnerfConfig {
        width: 32,
        center: [0.0, 0.0, 1.2],
        extent: 3.0,
        render: RenderOptions {
            samples: 32,
            t_near: 1.0,
            t_far: 5.0,
            sampling: Sampling::Stratified { seed: 3 },
        },
        ..VnerfConfig::default()
    };
    let mut field = RadianceField::new(cfg, &mut avfield::rng::seeded(0)).unwrap();
    let train_cfg = TrainConfig {
        epochs: 4,
        batch_size: 4,
        seed: 1,
        adam: AdamConfig {
            lr_init: 5e-3,
            lr_final: 5e-4,
            ..AdamConfig::default()
        },
    };
    let stats = train_vnerf(&mut field, &train_views, hfov, &train_cfg, 32, |_, _, _| Ok(())).unwrap();
    assert!(stats.last().unwrap().loss < stats[0].loss);
    let psnr: f64 = val_views.iter().map(|v| view_psnr(&field, v, hfov).unwrap()).sum::<f64>() / 4.0;
    assert!(psnr > 20.0, "held-out PSNR {psnr}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn transmittance_falls_and_weights_sum_below_one(seed in 0u64..10_000, n in 2usize..80) {
        let f = random_blobs(seed);
        let c = render_ray(&f, &x_ray(0.0, 5.0), n, Sampling::Stratified { seed }).unwrap();
        prop_assert!(c.transmittance.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(c.weights.iter().sum::<f64>() <= 1.0 + 1e-12);
        prop_assert!(c.weights.iter().all(|&w| w >= 0.0));
    }
}
