//! Analytic ground truth: textured planes rendered by exact ray casting.
//!
//! Textures are sums of sinusoids evaluated in plane coordinates, so every
//! rendered view is a point sample of a smooth function and carries no
//! resampling bias. The world is Lambertian with constant exposure.

use nalgebra::Vector3;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Camera, Pose};
use crate::optim::SceneState;
use crate::rng::Rng;
use crate::types::{depth_to_disp, DepthField, DepthRange, Image};

/// One sinusoidal component of a texture channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Wave {
    pub channel: usize,
    /// Angular frequency along the plane axes, radians per world unit.
    pub freq: [f64; 2],
    pub phase: f64,
    pub amplitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Texture {
    pub waves: Vec<Wave>,
}

impl Texture {
    /// Random band-limited texture: wavelengths in `[min, max]` world units,
    /// amplitudes summing to at most 0.45 per channel so values stay in [0, 1].
    pub fn random(rng: &mut Rng, wavelength: (f64, f64), waves_per_channel: usize) -> Self {
        let amp = 0.45 / waves_per_channel as f64;
        let mut waves = Vec::with_capacity(3 * waves_per_channel);
        for channel in 0..3 {
            for _ in 0..waves_per_channel {
                let theta: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let lambda = rng.random_range(wavelength.0..=wavelength.1);
                let k = std::f64::consts::TAU / lambda;
                waves.push(Wave {
                    channel,
                    freq: [k * theta.cos(), k * theta.sin()],
                    phase: rng.random_range(0.0..std::f64::consts::TAU),
                    amplitude: amp * rng.random_range(0.6..1.0),
                });
            }
        }
        Self { waves }
    }

    pub fn sample(&self, a: f64, b: f64) -> [f64; 3] {
        let mut out = [0.5; 3];
        for w in &self.waves {
            out[w.channel] += w.amplitude * (w.freq[0] * a + w.freq[1] * b + w.phase).sin();
        }
        out
    }
}

/// Textured plane through `origin` with unit `normal`, optionally bounded to a
/// rectangle `[a0, a1] x [b0, b1]` in its tangent coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plane {
    pub origin: Vector3<f64>,
    pub normal: Vector3<f64>,
    pub axes: [Vector3<f64>; 2],
    pub extent: Option<[f64; 4]>,
    pub texture: Texture,
}

impl Plane {
    pub fn new(origin: Vector3<f64>, normal: Vector3<f64>, extent: Option<[f64; 4]>, texture: Texture) -> Self {
        let normal = normal.normalize();
        let helper = if normal.x.abs() < 0.9 {
            Vector3::x()
        } else {
            Vector3::y()
        };
        let a0 = (helper - normal * normal.dot(&helper)).normalize();
        let a1 = normal.cross(&a0);
        Self {
            origin,
            normal,
            axes: [a0, a1],
            extent,
            texture,
        }
    }

    pub fn offset(&self) -> f64 {
        self.normal.dot(&self.origin)
    }

    /// Ray parameter of the hit, if any, for `center + t * dir`, `t > 0`.
    pub fn intersect(&self, center: &Vector3<f64>, dir: &Vector3<f64>) -> Option<(f64, [f64; 3])> {
        let denom = self.normal.dot(dir);
        if denom.abs() < 1e-12 {
            return None;
        }
        let t = (self.offset() - self.normal.dot(center)) / denom;
        if t <= 0.0 {
            return None;
        }
        let rel = center + dir * t - self.origin;
        let (a, b) = (rel.dot(&self.axes[0]), rel.dot(&self.axes[1]));
        if let Some([a0, a1, b0, b1]) = self.extent {
            if a < a0 || a > a1 || b < b0 || b > b1 {
                return None;
            }
        }
        Some((t, self.texture.sample(a, b)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum OccluderMotion {
    /// Moves through the world by `velocity` per frame of offset.
    World { velocity: [f64; 3] },
    /// Rigidly attached to the camera: identical in every frame's camera coordinates.
    CameraLocked,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OccluderSpec {
    /// Centre in target-camera coordinates.
    pub center: [f64; 3],
    pub half_size: [f64; 2],
    pub motion: OccluderMotion,
    /// Frame offsets (0 = target) in which the occluder exists.
    pub present_in: Vec<i32>,
    pub wavelength: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Occluder {
    pub spec: OccluderSpec,
    pub texture: Texture,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneScene {
    pub planes: Vec<Plane>,
    pub camera: Camera,
    /// `(offset, pose target → frame)`, ascending offset, excluding the target.
    pub trajectory: Vec<(i32, Pose)>,
    pub occluders: Vec<Occluder>,
    pub depth_range: DepthRange,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub origin: [f64; 3],
    pub normal: [f64; 3],
    pub extent: Option<[f64; 4]>,
    /// Texture wavelength range in world units.
    pub wavelength: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub camera: Camera,
    pub planes: Vec<PlaneSpec>,
    pub trajectory: Vec<(i32, Pose)>,
    /// Bounds every visible depth must respect.
    pub depth_range: DepthRange,
    pub waves_per_channel: usize,
}

fn fronto(depth: f64, extent: Option<[f64; 4]>, wavelength: (f64, f64)) -> PlaneSpec {
    PlaneSpec {
        origin: [0.0, 0.0, depth],
        normal: [0.0, 0.0, -1.0],
        extent,
        wavelength,
    }
}

/// Wavelengths spanning roughly 10–30 px at `depth` for focal length `f`.
fn pixel_band(depth: f64, f: f64) -> (f64, f64) {
    (10.0 * depth / f, 30.0 * depth / f)
}

impl SceneSpec {
    pub fn default_camera(height: usize, width: usize) -> Camera {
        let w = width as f64;
        let h = height as f64;
        Camera {
            fx: 0.62 * w,
            fy: 0.62 * w,
            cx: 0.49 * w,
            cy: 0.51 * h,
            width,
            height,
        }
    }

    /// Forward/sideways handheld-style motion with a little rotation.
    pub fn default_trajectory() -> Vec<(i32, Pose)> {
        vec![
            (-1, Pose::new([0.02, 0.04, 0.01], [0.22, -0.01, 0.18])),
            (1, Pose::new([-0.015, -0.035, -0.012], [-0.25, 0.012, -0.20])),
        ]
    }

    pub fn fronto_parallel(height: usize, width: usize, depth: f64) -> Self {
        let camera = Self::default_camera(height, width);
        Self {
            camera,
            planes: vec![fronto(depth, None, pixel_band(depth, camera.fx))],
            trajectory: Self::default_trajectory(),
            depth_range: DepthRange {
                min: depth / 4.0,
                max: depth * 4.0,
            },
            waves_per_channel: 5,
        }
    }

    /// A near half-plane at depth 3 over the left of the view, in front of an
    /// unbounded back plane at depth 6.
    pub fn two_plane(height: usize, width: usize) -> Self {
        let camera = Self::default_camera(height, width);
        let (near, far) = (3.0, 6.0);
        Self {
            camera,
            planes: vec![
                fronto(
                    near,
                    Some([f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, -0.05]),
                    pixel_band(near, camera.fx),
                ),
                fronto(far, None, pixel_band(far, camera.fx)),
            ],
            trajectory: Self::default_trajectory(),
            depth_range: DepthRange { min: 2.0, max: 12.0 },
            waves_per_channel: 5,
        }
    }

    /// Same geometry as [`SceneSpec::two_plane`] with a camera that never moves.
    pub fn static_two_plane(height: usize, width: usize) -> Self {
        let mut spec = Self::two_plane(height, width);
        for (_, pose) in &mut spec.trajectory {
            *pose = Pose::identity();
        }
        spec
    }

    /// Random slanted planes and small random motion, used for gradient checks.
    pub fn random(rng: &mut Rng, height: usize, width: usize) -> Self {
        let camera = Self::default_camera(height, width);
        let back = rng.random_range(5.0..8.0);
        let tilt = [rng.random_range(-0.2..0.2), rng.random_range(-0.2..0.2)];
        let mut planes = vec![PlaneSpec {
            origin: [0.0, 0.0, back],
            normal: [tilt[0], tilt[1], -1.0],
            extent: None,
            wavelength: pixel_band(back, camera.fx),
        }];
        let near = rng.random_range(2.5..4.0);
        let edge = rng.random_range(-0.3..0.3);
        planes.push(fronto(
            near,
            Some([f64::NEG_INFINITY, edge, f64::NEG_INFINITY, f64::INFINITY]),
            pixel_band(near, camera.fx),
        ));
        let mut pose = || {
            Pose::new(
                std::array::from_fn(|_| rng.random_range(-0.02..0.02)),
                std::array::from_fn(|_| rng.random_range(-0.2..0.2)),
            )
        };
        let trajectory = vec![(-1, pose()), (1, pose())];
        Self {
            camera,
            planes,
            trajectory,
            depth_range: DepthRange { min: 1.0, max: 20.0 },
            waves_per_channel: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedFrame {
    pub image: Image,
    pub gt_depth: DepthField,
    pub gt_pose: Pose,
    /// Pixels where an occluder is the visible surface.
    pub occluder_mask: Vec<bool>,
}

pub fn make_scene(rng: &mut Rng, spec: &SceneSpec) -> Result<PlaneScene> {
    spec.camera.validate()?;
    if spec.planes.is_empty() {
        return Err(Error::InvalidInput("scene needs at least one plane".into()));
    }
    let planes = spec
        .planes
        .iter()
        .map(|p| {
            let tex = Texture::random(rng, p.wavelength, spec.waves_per_channel);
            Plane::new(Vector3::from(p.origin), Vector3::from(p.normal), p.extent, tex)
        })
        .collect();
    let mut trajectory = spec.trajectory.clone();
    trajectory.sort_by_key(|(k, _)| *k);
    let scene = PlaneScene {
        planes,
        camera: spec.camera,
        trajectory,
        occluders: Vec::new(),
        depth_range: spec.depth_range,
    };
    for (k, _) in std::iter::once(&(0, Pose::identity())).chain(&scene.trajectory) {
        let frame = render_frame(&scene, *k)?;
        if let Some(bad) = frame
            .gt_depth
            .values
            .iter()
            .find(|&&d| d < spec.depth_range.min || d > spec.depth_range.max)
        {
            return Err(Error::InvalidInput(format!(
                "infeasible scene: depth {bad} outside [{}, {}] in frame {k}",
                spec.depth_range.min, spec.depth_range.max
            )));
        }
    }
    Ok(scene)
}

impl PlaneScene {
    pub fn pose_of(&self, offset: i32) -> Result<Pose> {
        if offset == 0 {
            return Ok(Pose::identity());
        }
        self.trajectory
            .iter()
            .find(|(k, _)| *k == offset)
            .map(|(_, p)| *p)
            .ok_or_else(|| Error::InvalidInput(format!("no pose for frame offset {offset}")))
    }

    pub fn offsets(&self) -> Vec<i32> {
        self.trajectory.iter().map(|(k, _)| *k).collect()
    }

    /// Occluder planes (in target coordinates) present at frame `offset`.
    fn occluder_planes(&self, offset: i32) -> Result<Vec<Plane>> {
        let mut out = Vec::new();
        for occ in &self.occluders {
            if !occ.spec.present_in.contains(&offset) {
                continue;
            }
            let [hx, hy] = occ.spec.half_size;
            let c = Vector3::from(occ.spec.center);
            let plane = match occ.spec.motion {
                OccluderMotion::World { velocity } => {
                    let origin = c + Vector3::from(velocity) * offset as f64;
                    Plane {
                        origin,
                        normal: -Vector3::z(),
                        axes: [Vector3::x(), Vector3::y()],
                        extent: Some([-hx, hx, -hy, hy]),
                        texture: occ.texture.clone(),
                    }
                }
                OccluderMotion::CameraLocked => {
                    // Fixed in the frame's camera; express it in target coordinates.
                    let inv = self.pose_of(offset)?.inverse();
                    let rot = inv.rotation_matrix();
                    Plane {
                        origin: inv.transform(&c),
                        normal: rot * -Vector3::z(),
                        axes: [rot * Vector3::x(), rot * Vector3::y()],
                        extent: Some([-hx, hx, -hy, hy]),
                        texture: occ.texture.clone(),
                    }
                }
            };
            out.push(plane);
        }
        Ok(out)
    }
}

struct Hit {
    depth: f64,
    color: [f64; 3],
    occluder: bool,
}

fn cast(static_planes: &[Plane], occluders: &[Plane], center: &Vector3<f64>, dir: &Vector3<f64>) -> Option<Hit> {
    let mut best: Option<Hit> = None;
    let candidates = static_planes
        .iter()
        .map(|p| (p, false))
        .chain(occluders.iter().map(|p| (p, true)));
    for (plane, occluder) in candidates {
        if let Some((t, color)) = plane.intersect(center, dir) {
            if best.as_ref().is_none_or(|b| t < b.depth) {
                best = Some(Hit {
                    depth: t,
                    color,
                    occluder,
                });
            }
        }
    }
    best
}

fn render_with(scene: &PlaneScene, pose: &Pose, occluders: &[Plane]) -> Result<RenderedFrame> {
    let cam = &scene.camera;
    let (h, w) = (cam.height, cam.width);
    let rt = pose.rotation_matrix().transpose();
    let center = -(rt * pose.translation);
    let mut data = Vec::with_capacity(h * w * 3);
    let mut depth = Vec::with_capacity(h * w);
    let mut occ = Vec::with_capacity(h * w);
    for v in 0..h {
        for u in 0..w {
            // unit-z ray in the frame, so the ray parameter is the frame depth
            let dir = rt * cam.ray(u as f64, v as f64);
            let hit = cast(&scene.planes, occluders, &center, &dir).ok_or_else(|| {
                Error::InvalidInput(format!("camera ray through pixel ({u}, {v}) misses every plane"))
            })?;
            data.extend_from_slice(&hit.color);
            depth.push(hit.depth);
            occ.push(hit.occluder);
        }
    }
    Ok(RenderedFrame {
        image: Image::new(h, w, 3, data)?,
        gt_depth: DepthField::new(h, w, depth)?,
        gt_pose: *pose,
        occluder_mask: occ,
    })
}

/// Renders the scene as configured at the target time from an arbitrary pose.
pub fn render_view(scene: &PlaneScene, pose: &Pose) -> Result<RenderedFrame> {
    let occluders = scene.occluder_planes(0)?;
    render_with(scene, pose, &occluders)
}

/// Renders frame `offset` of the trajectory, occluders included.
pub fn render_frame(scene: &PlaneScene, offset: i32) -> Result<RenderedFrame> {
    let pose = scene.pose_of(offset)?;
    let occluders = scene.occluder_planes(offset)?;
    render_with(scene, &pose, &occluders)
}

pub fn add_dynamic_occluder(scene: &PlaneScene, spec: OccluderSpec, rng: &mut Rng) -> Result<PlaneScene> {
    if spec.half_size.iter().any(|s| *s <= 0.0) {
        return Err(Error::InvalidInput("occluder needs a positive size".into()));
    }
    let texture = Texture::random(rng, spec.wavelength, 5);
    let mut out = scene.clone();
    out.occluders.push(Occluder {
        spec: spec.clone(),
        texture,
    });
    let planes = out.occluder_planes_for_check(&spec)?;
    for (offset, pose, plane) in planes {
        let cam = &out.camera;
        let c = pose.transform(&plane.origin);
        let in_view = c.z > 0.0 && {
            let [u, v] = cam.project(&c);
            (0.0..cam.width as f64).contains(&u) && (0.0..cam.height as f64).contains(&v)
        };
        if !in_view {
            return Err(Error::InvalidInput(format!(
                "occluder centre leaves the frustum in frame {offset}"
            )));
        }
        let frame = render_frame(&out, offset)?;
        let cover = frame.occluder_mask.iter().filter(|&&m| m).count() as f64 / frame.occluder_mask.len() as f64;
        if cover > 0.5 {
            return Err(Error::InvalidInput(format!(
                "occluder covers {:.0}% of frame {offset}; at most 50% allowed",
                cover * 100.0
            )));
        }
    }
    Ok(out)
}

impl PlaneScene {
    fn occluder_planes_for_check(&self, spec: &OccluderSpec) -> Result<Vec<(i32, Pose, Plane)>> {
        let idx = self.occluders.len() - 1;
        let mut out = Vec::new();
        for &k in &spec.present_in {
            let pose = self.pose_of(k)?;
            let planes = self.occluder_planes(k)?;
            // occluder_planes keeps declaration order, filtered by presence
            let pos = self.occluders[..=idx]
                .iter()
                .filter(|o| o.spec.present_in.contains(&k))
                .count()
                - 1;
            out.push((k, pose, planes[pos].clone()));
        }
        Ok(out)
    }
}

/// For each support frame, the target pixels whose visible surface is hidden
/// behind an occluder in that frame. Pixels projecting outside the support
/// image are reported as not occluded.
pub fn occlusion_masks(scene: &PlaneScene) -> Result<Vec<(i32, Vec<bool>)>> {
    let target = render_frame(scene, 0)?;
    let cam = &scene.camera;
    let (h, w) = (cam.height, cam.width);
    let mut out = Vec::new();
    for &(k, pose) in &scene.trajectory {
        let occluders = scene.occluder_planes(k)?;
        let rt = pose.rotation_matrix().transpose();
        let center = -(rt * pose.translation);
        let mut mask = vec![false; h * w];
        for v in 0..h {
            for u in 0..w {
                let p = v * w + u;
                let x = cam.ray(u as f64, v as f64) * target.gt_depth.values[p];
                let y = pose.transform(&x);
                if y.z <= 0.0 {
                    continue;
                }
                let [pu, pv] = cam.project(&y);
                if !(0.0..=(w - 1) as f64).contains(&pu) || !(0.0..=(h - 1) as f64).contains(&pv) {
                    continue;
                }
                let dir = rt * (y / y.z);
                let blocked = occluders
                    .iter()
                    .any(|o| o.intersect(&center, &dir).is_some_and(|(t, _)| t < y.z * (1.0 - 1e-9)));
                mask[p] = blocked;
            }
        }
        out.push((k, mask));
    }
    Ok(out)
}

/// Renders every frame of the scene: the target first, then supports by offset.
pub fn render_sequence(scene: &PlaneScene) -> Result<Vec<(i32, RenderedFrame)>> {
    std::iter::once(0)
        .chain(scene.offsets())
        .map(|k| Ok((k, render_frame(scene, k)?)))
        .collect()
}

/// Occluder spec visible only in the first support frame, drifting sideways.
pub fn transient_occluder(scene: &PlaneScene) -> OccluderSpec {
    let first = scene.trajectory.first().map_or(-1, |(k, _)| *k);
    OccluderSpec {
        center: [0.25, 0.0, 2.2],
        half_size: [0.35, 0.35],
        motion: OccluderMotion::World {
            velocity: [0.05, 0.0, 0.0],
        },
        present_in: vec![first],
        wavelength: pixel_band(2.2, scene.camera.fx),
    }
}

/// Occluder riding along with the camera, present in every frame.
pub fn camera_locked_occluder(scene: &PlaneScene) -> OccluderSpec {
    OccluderSpec {
        center: [0.3, 0.1, 2.2],
        half_size: [0.35, 0.3],
        motion: OccluderMotion::CameraLocked,
        present_in: std::iter::once(0).chain(scene.offsets()).collect(),
        wavelength: pixel_band(2.2, scene.camera.fx),
    }
}

/// Optimization state for a random plane scene with every parameter moved
/// off the truth: logits by up to ±0.3, pose components by up to ±0.01 and
/// learned intrinsics left at their prior.
pub fn perturbed_synthetic_state(rng: &mut Rng, height: usize, width: usize) -> Result<SceneState> {
    let spec = SceneSpec::random(rng, height, width);
    let scene = make_scene(rng, &spec)?;
    let frames = render_sequence(&scene)?;
    let target = &frames[0].1;
    let supports = frames[1..].iter().map(|(k, f)| (*k, f.image.clone())).collect();
    let poses: Vec<Pose> = frames[1..]
        .iter()
        .map(|(_, f)| {
            let mut a = f.gt_pose.to_array();
            for x in &mut a {
                *x += rng.random_range(-0.01..0.01);
            }
            Pose::from_slice(&a)
        })
        .collect();
    let mut disp = depth_to_disp(&target.gt_depth, spec.depth_range)?;
    for r in &mut disp.raw {
        *r += rng.random_range(-0.3..0.3);
    }
    SceneState::new(target.image.clone(), supports)?
        .with_depth_range(spec.depth_range)
        .with_poses(&poses)?
        .with_disparity(&disp)
}
