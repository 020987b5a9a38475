//! Test problems: the 2x2 motivating systems and a synthetic blendshape
//! curve-matching scene.
//!
//! The scene is a sphere-like patch of surface points driven by a linear
//! blendshape basis. A fixed set of curves (mouth and eye contours laid out on
//! the patch) is projected through a pinhole camera; the residual is the
//! difference between the projected model curves and the target curves.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::problem::{check_len, LinearProblem, Problem};
use crate::{Error, Result};

pub const SCENE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MotivatingCase {
    /// `b = (0, 1)`: reachable only by overdialing both columns.
    B01,
    /// `b = (5, 1)`.
    B51,
}

impl std::str::FromStr for MotivatingCase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "B01" => Ok(MotivatingCase::B01),
            "B51" => Ok(MotivatingCase::B51),
            other => Err(Error::config(format!("unknown motivating case {other:?}"))),
        }
    }
}

impl std::fmt::Display for MotivatingCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MotivatingCase::B01 => "B01",
            MotivatingCase::B51 => "B51",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotivatingSystem {
    pub matrix: DMatrix<f64>,
    pub rhs: DVector<f64>,
    pub case: MotivatingCase,
}

impl MotivatingSystem {
    pub fn problem(&self) -> LinearProblem {
        LinearProblem {
            matrix: self.matrix.clone(),
            rhs: self.rhs.clone(),
        }
    }

    pub fn column(&self, i: usize) -> DVector<f64> {
        self.matrix.column(i).into_owned()
    }
}

/// `A = [[1, -1], [0.1, 1e-6]]` with the right-hand side for `case`.
pub fn motivating_system(case: MotivatingCase) -> MotivatingSystem {
    let rhs = match case {
        MotivatingCase::B01 => [0.0, 1.0],
        MotivatingCase::B51 => [5.0, 1.0],
    };
    MotivatingSystem {
        matrix: DMatrix::from_row_slice(2, 2, &[1.0, -1.0, 0.1, 1e-6]),
        rhs: DVector::from_row_slice(&rhs),
        case,
    }
}

/// Pinhole camera looking down `+z`; world points sit `distance` in front of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    pub focal_length: f64,
    pub principal_point: [f64; 2],
    pub distance: f64,
}

impl Camera {
    pub fn to_camera_frame(&self, p: [f64; 3]) -> [f64; 3] {
        [p[0], p[1], p[2] + self.distance]
    }
}

/// Projects camera-frame points: `(f X / Z + cx, f Y / Z + cy)`.
pub fn project(points: &[[f64; 3]], camera: &Camera) -> Result<Vec<[f64; 2]>> {
    points
        .iter()
        .enumerate()
        .map(|(index, p)| {
            if !(p[2] > 0.0) {
                return Err(Error::BehindCamera { index, depth: p[2] });
            }
            Ok([
                camera.focal_length * p[0] / p[2] + camera.principal_point[0],
                camera.focal_length * p[1] / p[2] + camera.principal_point[1],
            ])
        })
        .collect()
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// `n` points at equal arc-length spacing along `polyline`, endpoints included.
pub fn resample_curve_uniform(polyline: &[[f64; 2]], n: usize) -> Result<Vec<[f64; 2]>> {
    if polyline.len() < 2 {
        return Err(Error::config("polyline needs at least two points"));
    }
    if n < 2 {
        return Err(Error::config("resampling needs at least two samples"));
    }
    let mut cumulative = Vec::with_capacity(polyline.len());
    cumulative.push(0.0);
    for w in polyline.windows(2) {
        let last = *cumulative.last().unwrap();
        cumulative.push(last + dist(w[0], w[1]));
    }
    let total = *cumulative.last().unwrap();
    if !(total > 0.0) {
        return Err(Error::DegenerateCurve);
    }

    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        if i == n - 1 {
            out.push(*polyline.last().unwrap());
            break;
        }
        let s = total * i as f64 / (n - 1) as f64;
        while seg + 2 < cumulative.len() && cumulative[seg + 1] < s {
            seg += 1;
        }
        let len = cumulative[seg + 1] - cumulative[seg];
        let t = if len > 0.0 {
            (s - cumulative[seg]) / len
        } else {
            0.0
        };
        let (a, b) = (polyline[seg], polyline[seg + 1]);
        out.push([a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]);
    }
    Ok(out)
}

/// Perturbs every coordinate by an independent draw from `U(-a, a)`.
pub fn add_uniform_noise(points: &[[f64; 2]], amplitude: f64, seed: u64) -> Vec<[f64; 2]> {
    if amplitude == 0.0 {
        return points.to_vec();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    points
        .iter()
        .map(|p| {
            let dx: f64 = rng.random_range(-amplitude..amplitude);
            let dy: f64 = rng.random_range(-amplitude..amplitude);
            [p[0] + dx, p[1] + dy]
        })
        .collect()
}

/// Dimensions and seed of a generated scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneSpec {
    pub parameters: usize,
    pub curves: usize,
    pub samples_per_curve: usize,
    /// Side of the square grid of non-curve surface points.
    pub grid_resolution: usize,
    pub duplicate_fraction: f64,
    pub true_weight_count: usize,
    pub true_weight_value: f64,
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            parameters: 150,
            curves: 8,
            samples_per_curve: 30,
            grid_resolution: 16,
            duplicate_fraction: 0.2,
            true_weight_count: 2,
            true_weight_value: 1.0,
            noise_amplitude: 0.0,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn point_count(&self) -> usize {
        self.grid_resolution * self.grid_resolution + self.curves * self.samples_per_curve
    }

    pub fn validate(&self) -> Result<()> {
        if self.parameters < 10 {
            return Err(Error::config(format!(
                "need at least 10 parameters, got {}",
                self.parameters
            )));
        }
        if self.curves == 0 {
            return Err(Error::config("need at least one curve"));
        }
        if self.samples_per_curve < 2 {
            return Err(Error::config("need at least two samples per curve"));
        }
        if self.point_count() < 4 * self.samples_per_curve {
            return Err(Error::config(format!(
                "{} surface points is fewer than 4 x {} samples",
                self.point_count(),
                self.samples_per_curve
            )));
        }
        if !(0.0..1.0).contains(&self.duplicate_fraction) {
            return Err(Error::config("duplicate_fraction must lie in [0, 1)"));
        }
        let originals = self.parameters - self.duplicate_count();
        if self.true_weight_count > originals {
            return Err(Error::config(
                "more true weights than distinct basis columns",
            ));
        }
        if !(self.noise_amplitude >= 0.0) {
            return Err(Error::config("noise amplitude must be non-negative"));
        }
        Ok(())
    }

    fn duplicate_count(&self) -> usize {
        (self.duplicate_fraction * self.parameters as f64).round() as usize
    }
}

/// A generated scene. Serializes to a versioned JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlendshapeScene {
    pub scene_version: u32,
    pub neutral: Vec<[f64; 3]>,
    /// `basis[k][p]` is the displacement of point `p` under a unit weight on shape `k`.
    pub basis: Vec<Vec<[f64; 3]>>,
    pub true_weights: Vec<f64>,
    pub camera: Camera,
    pub curves: Vec<Vec<usize>>,
    pub samples_per_curve: usize,
    pub noise_amplitude: f64,
    pub seed: u64,
    /// For near-duplicate shapes, the index of the shape they copy.
    pub duplicate_of: Vec<Option<usize>>,
}

/// Half-width of the square `(u, v)` patch.
const PATCH_HALF_WIDTH: f64 = 1.0;
const SPHERE_RADIUS: f64 = 2.5;
/// Largest curve-point displacement per unit weight, as a fraction of the patch width.
const UNIT_DISPLACEMENT: f64 = 0.05;
const DEPTH_SHARE: f64 = 0.2;
const DUPLICATE_NOISE: f64 = 0.01;
/// Image-plane scale `f / Z`; the patch then spans about one unit.
const IMAGE_SCALE: f64 = 0.5;

fn surface_point(uv: [f64; 2]) -> [f64; 3] {
    let r2 = uv[0] * uv[0] + uv[1] * uv[1];
    [
        uv[0],
        uv[1],
        SPHERE_RADIUS - (SPHERE_RADIUS * SPHERE_RADIUS - r2).sqrt(),
    ]
}

fn bezier(p: [[f64; 2]; 3], t: f64) -> [f64; 2] {
    let a = (1.0 - t) * (1.0 - t);
    let b = 2.0 * t * (1.0 - t);
    let c = t * t;
    [
        a * p[0][0] + b * p[1][0] + c * p[2][0],
        a * p[0][1] + b * p[1][1] + c * p[2][1],
    ]
}

/// Mouth (outer/inner, upper/lower) and eye (upper/lower) contours.
const CONTOURS: [[[f64; 2]; 3]; 8] = [
    [[-0.5, -0.45], [0.0, -0.15], [0.5, -0.45]],
    [[-0.5, -0.45], [0.0, -0.85], [0.5, -0.45]],
    [[-0.35, -0.47], [0.0, -0.37], [0.35, -0.47]],
    [[-0.35, -0.47], [0.0, -0.62], [0.35, -0.47]],
    [[-0.65, 0.35], [-0.4, 0.65], [-0.15, 0.35]],
    [[-0.65, 0.35], [-0.4, 0.15], [-0.15, 0.35]],
    [[0.15, 0.35], [0.4, 0.65], [0.65, 0.35]],
    [[0.15, 0.35], [0.4, 0.15], [0.65, 0.35]],
];

fn contour_controls(m: usize, rng: &mut ChaCha8Rng) -> [[f64; 2]; 3] {
    if m < CONTOURS.len() {
        return CONTOURS[m];
    }
    let mut pt = || [rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8)];
    [pt(), pt(), pt()]
}

/// Deterministically builds a scene from `spec`.
pub fn generate_scene(spec: &SceneSpec) -> Result<BlendshapeScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Curves: a coarse, unevenly spaced polyline per contour, resampled uniformly.
    let mut uv: Vec<[f64; 2]> = Vec::with_capacity(spec.point_count());
    let mut curves = Vec::with_capacity(spec.curves);
    for m in 0..spec.curves {
        let controls = contour_controls(m, &mut rng);
        let coarse: Vec<[f64; 2]> = (0..=12)
            .map(|i| {
                let s = i as f64 / 12.0;
                bezier(controls, s * s * (3.0 - 2.0 * s))
            })
            .collect();
        let samples = resample_curve_uniform(&coarse, spec.samples_per_curve)?;
        curves.push((uv.len()..uv.len() + samples.len()).collect::<Vec<_>>());
        uv.extend(samples);
    }
    let g = spec.grid_resolution;
    for i in 0..g {
        for j in 0..g {
            let along = |k: usize| {
                -PATCH_HALF_WIDTH + 2.0 * PATCH_HALF_WIDTH * k as f64 / (g.max(2) - 1) as f64
            };
            uv.push([along(j), along(i)]);
        }
    }
    let neutral: Vec<[f64; 3]> = uv.iter().map(|&p| surface_point(p)).collect();
    let curve_points: Vec<usize> = curves.iter().flatten().copied().collect();

    let k = spec.parameters;
    let duplicates = spec.duplicate_count();
    let originals = k - duplicates;
    let target_max = UNIT_DISPLACEMENT * 2.0 * PATCH_HALF_WIDTH;

    let mut shapes: Vec<Vec<[f64; 3]>> = Vec::with_capacity(k);
    let mut source: Vec<Option<usize>> = Vec::with_capacity(k);
    for _ in 0..originals {
        let bumps = rng.random_range(1..=2);
        let mut params = Vec::with_capacity(bumps);
        for _ in 0..bumps {
            let anchor = uv[curve_points[rng.random_range(0..curve_points.len())]];
            let ox: f64 = rng.sample(StandardNormal);
            let oy: f64 = rng.sample(StandardNormal);
            let center = [anchor[0] + 0.12 * ox, anchor[1] + 0.12 * oy];
            let sigma: f64 = rng.random_range(0.1..0.3);
            let mut dir = [0.0; 3];
            for d in dir.iter_mut() {
                *d = rng.sample(StandardNormal);
            }
            dir[2] *= DEPTH_SHARE;
            params.push((center, sigma, dir));
        }
        let mut shape: Vec<[f64; 3]> = uv
            .iter()
            .map(|p| {
                let mut out = [0.0; 3];
                for (c, s, d) in &params {
                    let w = (-(dist(*p, *c).powi(2)) / (2.0 * s * s)).exp();
                    for a in 0..3 {
                        out[a] += w * d[a];
                    }
                }
                out
            })
            .collect();
        let peak = curve_points
            .iter()
            .map(|&p| norm3(shape[p]))
            .fold(0.0, f64::max);
        let scale = if peak > 0.0 { target_max / peak } else { 0.0 };
        for d in shape.iter_mut() {
            for a in d.iter_mut() {
                *a *= scale;
            }
        }
        shapes.push(shape);
        source.push(None);
    }
    for _ in 0..duplicates {
        let src = rng.random_range(0..originals);
        let rms = (shapes[src]
            .iter()
            .map(|d| d.iter().map(|a| a * a).sum::<f64>())
            .sum::<f64>()
            / (3 * shapes[src].len()) as f64)
            .sqrt();
        let dup: Vec<[f64; 3]> = shapes[src]
            .iter()
            .map(|d| {
                let mut out = *d;
                for a in out.iter_mut() {
                    let e: f64 = rng.sample(StandardNormal);
                    *a += DUPLICATE_NOISE * rms * e;
                }
                out
            })
            .collect();
        shapes.push(dup);
        source.push(Some(src));
    }

    // Shuffle so duplicates are interleaved with the shapes they copy.
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng);
    let mut position = vec![0; k];
    for (new, &old) in order.iter().enumerate() {
        position[old] = new;
    }
    let basis: Vec<Vec<[f64; 3]>> = order.iter().map(|&old| shapes[old].clone()).collect();
    let duplicate_of: Vec<Option<usize>> = order
        .iter()
        .map(|&old| source[old].map(|s| position[s]))
        .collect();

    let mut candidates: Vec<usize> = (0..originals).map(|i| position[i]).collect();
    candidates.shuffle(&mut rng);
    let mut true_weights = vec![0.0; k];
    for &i in candidates.iter().take(spec.true_weight_count) {
        true_weights[i] = spec.true_weight_value;
    }

    // Keep every point in front of the camera for any |w_k| <= 2.
    let excursion = (0..neutral.len())
        .map(|p| basis.iter().map(|shape| shape[p][2].abs()).sum::<f64>() * 2.0 - neutral[p][2])
        .fold(0.0, f64::max);
    let distance = (4.0 * PATCH_HALF_WIDTH / IMAGE_SCALE * 0.5).max(excursion + 1.0);
    let camera = Camera {
        focal_length: IMAGE_SCALE * distance,
        principal_point: [0.5, 0.5],
        distance,
    };

    Ok(BlendshapeScene {
        scene_version: SCENE_VERSION,
        neutral,
        basis,
        true_weights,
        camera,
        curves,
        samples_per_curve: spec.samples_per_curve,
        noise_amplitude: spec.noise_amplitude,
        seed: spec.seed,
        duplicate_of,
    })
}

fn norm3(v: [f64; 3]) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

impl BlendshapeScene {
    pub fn parameter_count(&self) -> usize {
        self.basis.len()
    }

    pub fn curve_point_indices(&self) -> Vec<usize> {
        self.curves.iter().flatten().copied().collect()
    }

    /// Surface `x(w) = neutral + basis w`.
    pub fn surface(&self, weights: &[f64]) -> Result<Vec<[f64; 3]>> {
        check_len("weights", self.parameter_count(), weights.len())?;
        let mut pts = self.neutral.clone();
        for (shape, &w) in self.basis.iter().zip(weights) {
            if w == 0.0 {
                continue;
            }
            for (p, d) in pts.iter_mut().zip(shape) {
                for a in 0..3 {
                    p[a] += w * d[a];
                }
            }
        }
        Ok(pts)
    }

    /// Projected curve points for weights `w`, in curve order.
    pub fn projected_curves(&self, weights: &[f64]) -> Result<Vec<[f64; 2]>> {
        let surface = self.surface(weights)?;
        let cam: Vec<[f64; 3]> = self
            .curve_point_indices()
            .iter()
            .map(|&p| self.camera.to_camera_frame(surface[p]))
            .collect();
        project(&cam, &self.camera)
    }

    /// Target curve points from the true weights, with optional uniform noise.
    pub fn target(&self, noise_amplitude: f64, noise_seed: u64) -> Result<Vec<[f64; 2]>> {
        let n = self.curve_point_indices().len();
        let model = self.problem(&vec![[0.0; 2]; n])?;
        let uv = model.evaluate(&DVector::from_column_slice(&self.true_weights));
        let clean: Vec<[f64; 2]> = uv.as_slice().chunks(2).map(|c| [c[0], c[1]]).collect();
        Ok(add_uniform_noise(&clean, noise_amplitude, noise_seed))
    }

    /// Curve-matching problem `f(w) = C(x(w)) - C*` for a given target.
    pub fn problem(&self, target: &[[f64; 2]]) -> Result<CurveMatchingProblem> {
        let idx = self.curve_point_indices();
        check_len("target points", idx.len(), target.len())?;
        let k = self.parameter_count();
        let r = idx.len();
        let mut neutral = DMatrix::zeros(r, 3);
        let mut basis = [
            DMatrix::zeros(r, k),
            DMatrix::zeros(r, k),
            DMatrix::zeros(r, k),
        ];
        for (row, &p) in idx.iter().enumerate() {
            for a in 0..3 {
                neutral[(row, a)] = self.neutral[p][a];
                for (col, shape) in self.basis.iter().enumerate() {
                    basis[a][(row, col)] = shape[p][a];
                }
            }
            neutral[(row, 2)] += self.camera.distance;
        }
        let target = DVector::from_iterator(2 * r, target.iter().flat_map(|t| [t[0], t[1]]));
        Ok(CurveMatchingProblem {
            neutral,
            basis,
            camera: self.camera,
            target,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Version {
            scene_version: u32,
        }
        let v: Version = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("scene document: {e}")))?;
        if v.scene_version != SCENE_VERSION {
            return Err(Error::config(format!(
                "scene_version {} is not supported (expected {SCENE_VERSION})",
                v.scene_version
            )));
        }
        let scene: BlendshapeScene = serde_json::from_str(text)
            .map_err(|e| Error::config(format!("scene document: {e}")))?;
        scene.check()?;
        Ok(scene)
    }

    fn check(&self) -> Result<()> {
        let p = self.neutral.len();
        let k = self.basis.len();
        check_len("true_weights", k, self.true_weights.len())?;
        check_len("duplicate_of", k, self.duplicate_of.len())?;
        for shape in &self.basis {
            check_len("basis shape", p, shape.len())?;
        }
        if self.curves.iter().flatten().any(|&i| i >= p) {
            return Err(Error::config("curve index out of range"));
        }
        Ok(())
    }
}

/// Stacked image residual `[u_0 - u*_0, v_0 - v*_0, ...]` over all curve points.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveMatchingProblem {
    /// Camera-frame neutral curve points, one row per point.
    neutral: DMatrix<f64>,
    /// Per-axis basis restricted to curve points (`points x shapes`).
    basis: [DMatrix<f64>; 3],
    camera: Camera,
    target: DVector<f64>,
}

impl CurveMatchingProblem {
    pub fn target(&self) -> &DVector<f64> {
        &self.target
    }

    fn camera_points(&self, w: &DVector<f64>) -> [DVector<f64>; 3] {
        [0, 1, 2].map(|a| &self.basis[a] * w + self.neutral.column(a))
    }
}

impl Problem for CurveMatchingProblem {
    fn parameter_count(&self) -> usize {
        self.basis[0].ncols()
    }

    fn residual_count(&self) -> usize {
        self.target.len()
    }

    fn evaluate(&self, w: &DVector<f64>) -> DVector<f64> {
        let [x, y, z] = self.camera_points(w);
        let f = self.camera.focal_length;
        let [cx, cy] = self.camera.principal_point;
        let mut out = DVector::zeros(self.target.len());
        for r in 0..x.len() {
            out[2 * r] = f * x[r] / z[r] + cx - self.target[2 * r];
            out[2 * r + 1] = f * y[r] / z[r] + cy - self.target[2 * r + 1];
        }
        out
    }

    fn jacobian(&self, w: &DVector<f64>) -> DMatrix<f64> {
        let [x, y, z] = self.camera_points(w);
        let f = self.camera.focal_length;
        let k = self.parameter_count();
        let mut jac = DMatrix::zeros(self.target.len(), k);
        for r in 0..x.len() {
            let inv = 1.0 / z[r];
            let (pu, pv) = (x[r] * inv, y[r] * inv);
            for c in 0..k {
                let dz = self.basis[2][(r, c)];
                jac[(2 * r, c)] = f * inv * (self.basis[0][(r, c)] - pu * dz);
                jac[(2 * r + 1, c)] = f * inv * (self.basis[1][(r, c)] - pv * dz);
            }
        }
        jac
    }
}
