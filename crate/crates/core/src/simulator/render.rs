use super::scene::{Primitive, SceneSpec, Walls};
use crate::camera::{dot, pixel_direction, Intrinsics};
use crate::error::{Error, Result};
use crate::pose::Pose;
use crate::raster::Image;

const EPS: f64 = 1e-9;

/// Nearest positive hit of a sphere; the exit point when starting inside.
fn hit_sphere(o: [f64; 3], d: [f64; 3], center: [f64; 3], radius: f64) -> Option<f64> {
    let oc = [o[0] - center[0], o[1] - center[1], o[2] - center[2]];
    let b = dot(d, oc);
    let c = dot(oc, oc) - radius * radius;
    let disc = b * b - c;
    if disc < 0.0 {
        return None;
    }
    let s = disc.sqrt();
    [-b - s, -b + s].into_iter().find(|&t| t > EPS)
}

/// Slab test; returns (entry, exit) parameters.
fn slabs(o: [f64; 3], d: [f64; 3], min: [f64; 3], max: [f64; 3]) -> Option<(f64, f64, usize, usize)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    let (mut a0, mut a1) = (0, 0);
    for i in 0..3 {
        if d[i].abs() < 1e-300 {
            if o[i] < min[i] || o[i] > max[i] {
                return None;
            }
            continue;
        }
        let (mut lo, mut hi) = ((min[i] - o[i]) / d[i], (max[i] - o[i]) / d[i]);
        if lo > hi {
            std::mem::swap(&mut lo, &mut hi);
        }
        if lo > t0 {
            t0 = lo;
            a0 = i;
        }
        if hi < t1 {
            t1 = hi;
            a1 = i;
        }
    }
    (t0 <= t1).then_some((t0, t1, a0, a1))
}

fn hit_cuboid(o: [f64; 3], d: [f64; 3], min: [f64; 3], max: [f64; 3]) -> Option<f64> {
    let (t0, t1, _, _) = slabs(o, d, min, max)?;
    [t0, t1].into_iter().find(|&t| t > EPS)
}

/// Exit distance and surface color of a ray leaving the walled room.
fn hit_walls(scene: &SceneSpec, w: &Walls, o: [f64; 3], d: [f64; 3]) -> Option<(f64, [f64; 3])> {
    let (_, t1, _, axis) = slabs(o, d, w.min, w.max)?;
    if t1 <= EPS {
        return None;
    }
    let color = if axis == 2 && d[2] < 0.0 {
        let p = [o[0] + t1 * d[0], o[1] + t1 * d[1]];
        scene
            .zones
            .iter()
            .rev()
            .find(|z| z.contains(p))
            .map_or(w.floor_color, |z| z.color)
    } else if axis == 2 {
        w.ceiling_color
    } else {
        w.wall_color
    };
    Some((t1, color))
}

/// First surface along a ray: distance and flat color.
pub fn trace(scene: &SceneSpec, o: [f64; 3], d: [f64; 3]) -> Option<(f64, [f64; 3])> {
    let room = scene.room.as_ref()?;
    let mut best: Option<(f64, [f64; 3])> = room.walls.as_ref().and_then(|w| hit_walls(scene, w, o, d));
    for p in &room.primitives {
        let hit = match *p {
            Primitive::Sphere { center, radius, color } => hit_sphere(o, d, center, radius).map(|t| (t, color)),
            Primitive::Cuboid { min, max, color } => hit_cuboid(o, d, min, max).map(|t| (t, color)),
        };
        if let Some((t, c)) = hit {
            if best.is_none_or(|(bt, _)| t < bt) {
                best = Some((t, c));
            }
        }
    }
    best
}

/// Exact ray-traced RGB (3 channels) and ray-distance depth (1 channel) views.
/// Rays that hit nothing are black with depth 0.
pub fn render_analytic(scene: &SceneSpec, pose: &Pose, width: usize, height: usize) -> Result<(Image, Image)> {
    if scene.room.is_none() {
        return Err(Error::Config(format!("scene `{}` has no visual geometry", scene.name)));
    }
    let k = Intrinsics::from_hfov(width, height, scene.listener.hfov)?;
    render_with(scene, pose, width, height, &k)
}

pub fn render_with(scene: &SceneSpec, pose: &Pose, width: usize, height: usize, k: &Intrinsics) -> Result<(Image, Image)> {
    k.validate()?;
    let mut rgb = Image::new(width, height, 3);
    let mut depth = Image::new(width, height, 1);
    let o = pose.position3();
    for r in 0..height {
        for c in 0..width {
            let d = pixel_direction(pose, k, r, c);
            if let Some((t, color)) = trace(scene, o, d) {
                let px = rgb.pixel_mut(r, c);
                for ch in 0..3 {
                    px[ch] = color[ch] as f32;
                }
                depth.pixel_mut(r, c)[0] = t as f32;
            }
        }
    }
    Ok((rgb, depth))
}
