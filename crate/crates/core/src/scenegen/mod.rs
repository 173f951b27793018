//! Procedural road scenes with depth, semantic mask, time-of-day and
//! weather labels.
//!
//! A pinhole camera 1.5 m above a flat ground plane looks at the horizon.
//! Cars and pedestrians are upright rectangles standing on the ground at a
//! sampled distance. Lighting follows the sun around the day: overall
//! brightness tracks the sun's elevation and a horizontal shading ramp its
//! azimuth, so the image carries a full cyclic time cue. Each weather class
//! adds its own overlay or noise pattern.

mod format;
mod split;

pub use format::{
    generate_dataset, load_manifest, manifest_hash, read_sample, write_sample, Manifest, ManifestEntry, GENERATOR_FILE,
    MANIFEST_FILE,
};
pub use split::{spatial_split, split_positions, Split, SplitSpec};

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const N_WEATHER_CLASSES: usize = 11;
pub const WEATHER_NAMES: [&str; N_WEATHER_CLASSES] = [
    "clear",
    "overcast",
    "light-rain",
    "heavy-rain",
    "fog",
    "snow",
    "thunder",
    "drizzle",
    "haze",
    "dawn-glare",
    "night-clear",
];

pub const CLASS_BACKGROUND: u8 = 0;
pub const CLASS_CAR: u8 = 1;
pub const CLASS_PEDESTRIAN: u8 = 2;

const CAMERA_HEIGHT_M: f64 = 1.5;
const HORIZON_FRACTION: f64 = 0.4;
/// Depth assigned to sky pixels; beyond the far clipping distance.
pub const SKY_DEPTH_M: f64 = 5000.0;

/// Label distribution and rendering parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LabelDistribution {
    pub image_h: usize,
    pub image_w: usize,
    /// Relative frequency of each weather class.
    pub weather_weights: Vec<f64>,
    /// Relative frequency of each hour of the day.
    pub hour_weights: Vec<f64>,
    pub max_cars: usize,
    pub max_pedestrians: usize,
    /// Side length of the square world positions are drawn from.
    pub world_extent_m: f64,
}

impl Default for LabelDistribution {
    fn default() -> Self {
        let bump = |h: f64, mu: f64, s: f64| (-(h - mu).powi(2) / (2.0 * s * s)).exp();
        LabelDistribution {
            image_h: 48,
            image_w: 64,
            weather_weights: vec![0.30, 0.15, 0.08, 0.05, 0.06, 0.05, 0.04, 0.07, 0.08, 0.05, 0.07],
            hour_weights: (0..24)
                .map(|h| {
                    let h = h as f64 + 0.5;
                    0.15 + bump(h, 8.0, 1.5) + bump(h, 17.5, 2.0)
                })
                .collect(),
            max_cars: 5,
            max_pedestrians: 5,
            world_extent_m: 10_000.0,
        }
    }
}

impl LabelDistribution {
    /// No objects: ground plane and sky only.
    pub fn empty_scene() -> Self {
        LabelDistribution { max_cars: 0, max_pedestrians: 0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, w: &[f64], len: usize| -> Result<()> {
            if w.len() != len {
                return Err(Error::InvalidConfig(format!("{name} needs {len} entries, got {}", w.len())));
            }
            if w.iter().any(|v| !v.is_finite() || *v < 0.0) || w.iter().sum::<f64>() <= 0.0 {
                return Err(Error::InvalidConfig(format!("{name} must be non-negative with a positive sum")));
            }
            Ok(())
        };
        check("weather_weights", &self.weather_weights, N_WEATHER_CLASSES)?;
        check("hour_weights", &self.hour_weights, 24)?;
        if self.image_h < 2 || self.image_w < 2 {
            return Err(Error::InvalidConfig("image must be at least 2x2".into()));
        }
        if !(self.world_extent_m > 0.0 && self.world_extent_m.is_finite()) {
            return Err(Error::InvalidConfig("world_extent_m must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlacedObject {
    pub class: u8,
    pub distance_m: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub height: usize,
    pub width: usize,
    /// `H x W x 3`, values in `[0, 1]`.
    pub image: Vec<f32>,
    pub depth_m: Vec<f32>,
    pub mask: Vec<u8>,
    pub time_min: f64,
    pub weather: u8,
    /// `(north, east)` in meters.
    pub world_pos: [f64; 2],
    pub objects: Vec<PlacedObject>,
}

/// Labels drawn ahead of rendering.
#[derive(Clone, Debug, PartialEq)]
pub struct SceneLabels {
    pub time_min: f64,
    pub weather: u8,
    pub world_pos: [f64; 2],
}

fn to_f32_exact(v: f64) -> f64 {
    v as f32 as f64
}

fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

fn draw_labels(rng: &mut ChaCha8Rng, dist: &LabelDistribution) -> Result<SceneLabels> {
    let weather =
        WeightedIndex::new(&dist.weather_weights).map_err(|e| Error::InvalidConfig(format!("weather_weights: {e}")))?;
    let hours =
        WeightedIndex::new(&dist.hour_weights).map_err(|e| Error::InvalidConfig(format!("hour_weights: {e}")))?;
    let half = dist.world_extent_m / 2.0;
    let north = to_f32_exact(rng.gen_range(-half..half));
    let east = to_f32_exact(rng.gen_range(-half..half));
    let weather = weather.sample(rng) as u8;
    let hour = hours.sample(rng) as f64;
    let mut time_min = to_f32_exact(hour * 60.0 + rng.gen_range(0.0..60.0));
    if time_min >= 1440.0 {
        time_min = to_f32_exact(1439.99);
    }
    Ok(SceneLabels { time_min, weather, world_pos: [north, east] })
}

/// Labels of sample `index` without rendering it. Matches [`generate_sample`].
pub fn sample_labels(seed: u64, index: u64, dist: &LabelDistribution) -> Result<SceneLabels> {
    dist.validate()?;
    draw_labels(&mut sample_rng(seed, index), dist)
}

/// Camera intrinsics shared by rendering and the geometry oracle in tests.
#[derive(Clone, Copy, Debug)]
pub struct Camera {
    pub focal_px: f64,
    pub horizon_row: f64,
    pub height_m: f64,
}

impl Camera {
    pub fn for_image(h: usize, w: usize) -> Camera {
        Camera { focal_px: w as f64, horizon_row: h as f64 * HORIZON_FRACTION, height_m: CAMERA_HEIGHT_M }
    }

    /// Depth of the ground plane seen through the centre of row `y`, or the
    /// sky depth above the horizon.
    pub fn ground_depth(&self, y: usize) -> f64 {
        let below = y as f64 + 0.5 - self.horizon_row;
        if below > 0.0 {
            self.height_m * self.focal_px / below
        } else {
            SKY_DEPTH_M
        }
    }
}

struct Shape {
    class: u8,
    distance: f64,
    rows: (usize, usize),
    cols: (usize, usize),
    color: [f64; 3],
}

fn place(rng: &mut ChaCha8Rng, cam: &Camera, h: usize, w: usize, class: u8) -> Shape {
    let (d_range, width_range, height_m, lateral, palette): (_, _, f64, f64, &[[f64; 3]]) = if class == CLASS_CAR {
        (
            4.0..60.0,
            1.8..4.5,
            1.5,
            8.0,
            &[[0.8, 0.1, 0.1], [0.1, 0.2, 0.8], [0.9, 0.9, 0.85], [0.1, 0.1, 0.1], [0.9, 0.7, 0.1]],
        )
    } else {
        (3.0..30.0, 0.45..0.6, 1.75, 6.0, &[[0.3, 0.2, 0.5], [0.5, 0.3, 0.2], [0.2, 0.4, 0.25]])
    };
    let distance = to_f32_exact(rng.gen_range(d_range));
    let width_m = rng.gen_range(width_range);
    let x_m = rng.gen_range(-lateral..lateral);
    let color = palette[rng.gen_range(0..palette.len())];

    let scale = cam.focal_px / distance;
    let bottom = cam.horizon_row + cam.height_m * scale;
    let top = bottom - height_m * scale;
    let cx = w as f64 / 2.0 + x_m * scale;
    let half_w = width_m * scale / 2.0;
    let span = |lo: f64, hi: f64, n: usize| {
        let a = lo.round().clamp(0.0, n as f64) as usize;
        let b = hi.round().clamp(0.0, n as f64) as usize;
        let b = b.max(a + 1).min(n);
        (a.min(n), b)
    };
    Shape { class, distance, rows: span(top, bottom, h), cols: span(cx - half_w, cx + half_w, w), color }
}

fn luminance(c: [f64; 3]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

fn blend(c: [f64; 3], target: [f64; 3], t: f64) -> [f64; 3] {
    [c[0] + (target[0] - c[0]) * t, c[1] + (target[1] - c[1]) * t, c[2] + (target[2] - c[2]) * t]
}

/// Renders sample `index` of the stream seeded by `seed`.
pub fn generate_sample(seed: u64, index: u64, dist: &LabelDistribution) -> Result<Sample> {
    dist.validate()?;
    let mut rng = sample_rng(seed, index);
    let labels = draw_labels(&mut rng, dist)?;
    let (h, w) = (dist.image_h, dist.image_w);
    let cam = Camera::for_image(h, w);

    let mut depth: Vec<f64> = (0..h).flat_map(|y| std::iter::repeat(cam.ground_depth(y)).take(w)).collect();
    let mut mask = vec![CLASS_BACKGROUND; h * w];
    let mut albedo: Vec<[f64; 3]> = Vec::with_capacity(h * w);
    let texture_phase = rng.gen_range(0.0..std::f64::consts::TAU);
    for y in 0..h {
        for x in 0..w {
            let d = depth[y * w + x];
            albedo.push(if d >= SKY_DEPTH_M {
                let t = y as f64 / cam.horizon_row.max(1.0);
                [0.45 + 0.2 * t, 0.6 + 0.15 * t, 0.95]
            } else {
                // lane markings and distance-dependent texture
                let lane = ((x as f64 - w as f64 / 2.0).abs() * d / cam.focal_px - 1.75).abs() < 0.12;
                let g = 0.33 + 0.06 * (d.ln() * 6.0 + texture_phase).sin();
                if lane {
                    [0.85, 0.85, 0.8]
                } else {
                    [g, g, g * 0.95]
                }
            });
        }
    }

    let n_cars = rng.gen_range(0..=dist.max_cars);
    let n_peds = rng.gen_range(0..=dist.max_pedestrians);
    let mut objects = Vec::with_capacity(n_cars + n_peds);
    let mut shapes: Vec<Shape> = Vec::with_capacity(n_cars + n_peds);
    for k in 0..n_cars + n_peds {
        let class = if k < n_cars { CLASS_CAR } else { CLASS_PEDESTRIAN };
        shapes.push(place(&mut rng, &cam, h, w, class));
    }
    for s in &shapes {
        objects.push(PlacedObject { class: s.class, distance_m: s.distance });
        for y in s.rows.0..s.rows.1 {
            for x in s.cols.0..s.cols.1 {
                let p = y * w + x;
                if s.distance < depth[p] {
                    depth[p] = s.distance;
                    mask[p] = s.class;
                    // darker lower body
                    let shade = if y + 1 == s.rows.1 { 0.5 } else { 1.0 };
                    albedo[p] = s.color.map(|c| c * shade);
                }
            }
        }
    }

    // Sun angle runs once around the circle per day: elevation drives
    // brightness, azimuth drives a left/right shading ramp.
    let theta = std::f64::consts::PI * (labels.time_min - 360.0) / 720.0;
    let (elev, azim) = (theta.sin(), theta.cos());
    let brightness = 0.55 + 0.4 * elev;
    let warmth = (1.0 - elev.abs()).max(0.0) * 0.35;
    let mut img: Vec<[f64; 3]> = albedo
        .iter()
        .enumerate()
        .map(|(p, &c)| {
            let x = (p % w) as f64 / (w - 1) as f64 - 0.5;
            let ramp = 1.0 + 0.35 * azim * x;
            let l = brightness * ramp;
            [c[0] * l * (1.0 + warmth), c[1] * l, c[2] * l * (1.0 - warmth)]
        })
        .collect();

    apply_weather(&mut rng, &mut img, &depth, h, w, labels.weather);

    let noise = Normal::new(0.0, 0.01).expect("positive std");
    let image = img.iter().flat_map(|c| *c).map(|v| (v + noise.sample(&mut rng)).clamp(0.0, 1.0) as f32).collect();

    Ok(Sample {
        height: h,
        width: w,
        image,
        depth_m: depth.iter().map(|&d| d as f32).collect(),
        mask,
        time_min: labels.time_min,
        weather: labels.weather,
        world_pos: labels.world_pos,
        objects,
    })
}

fn apply_weather(rng: &mut ChaCha8Rng, img: &mut [[f64; 3]], depth: &[f64], h: usize, w: usize, weather: u8) {
    let streaks = |rng: &mut ChaCha8Rng, img: &mut [[f64; 3]], density: f64, len: usize, gain: f64| {
        let count = (density * (h * w) as f64) as usize;
        for _ in 0..count {
            let (y0, x) = (rng.gen_range(0..h), rng.gen_range(0..w));
            for y in y0..(y0 + len).min(h) {
                img[y * w + x] = img[y * w + x].map(|c| c + gain);
            }
        }
    };
    match WEATHER_NAMES[weather as usize] {
        "overcast" => img.iter_mut().for_each(|c| *c = blend(*c, [luminance(*c); 3], 0.6).map(|v| v * 0.85)),
        "light-rain" => {
            img.iter_mut().for_each(|c| *c = c.map(|v| v * 0.9));
            streaks(rng, img, 0.03, 3, 0.25);
        }
        "heavy-rain" => {
            img.iter_mut().for_each(|c| *c = blend(*c, [luminance(*c); 3], 0.3).map(|v| v * 0.7));
            streaks(rng, img, 0.12, 4, 0.3);
        }
        "fog" => {
            for (c, &d) in img.iter_mut().zip(depth) {
                *c = blend(*c, [0.75, 0.75, 0.77], 1.0 - (-d / 30.0).exp());
            }
        }
        "snow" => {
            for (c, &d) in img.iter_mut().zip(depth) {
                if d < SKY_DEPTH_M {
                    *c = blend(*c, [0.95, 0.95, 0.97], 0.45);
                }
            }
            let flakes = (0.08 * (h * w) as f64) as usize;
            for _ in 0..flakes {
                img[rng.gen_range(0..h * w)] = [0.97, 0.97, 1.0];
            }
        }
        "thunder" => {
            img.iter_mut().for_each(|c| *c = [c[0] * 0.45, c[1] * 0.45, c[2] * 0.6]);
            let mut x = rng.gen_range(w / 4..3 * w / 4) as isize;
            let horizon = (h as f64 * HORIZON_FRACTION) as usize;
            for y in 0..horizon {
                img[y * w + x as usize] = [1.0, 1.0, 0.9];
                x = (x + rng.gen_range(-1..=1)).clamp(0, w as isize - 1);
            }
        }
        "drizzle" => {
            let n = Normal::new(0.0, 0.06).expect("positive std");
            img.iter_mut().for_each(|c| *c = c.map(|v| v + n.sample(rng)));
        }
        "haze" => {
            for (c, &d) in img.iter_mut().zip(depth) {
                *c = blend(*c, [0.85, 0.8, 0.6], 1.0 - (-d / 80.0).exp());
            }
        }
        "dawn-glare" => {
            let (cy, cx) = (rng.gen_range(0.0..h as f64 * 0.3), rng.gen_range(0.0..w as f64));
            let sigma = w as f64 / 6.0;
            for (p, c) in img.iter_mut().enumerate() {
                let (y, x) = ((p / w) as f64, (p % w) as f64);
                let g = 0.6 * (-((y - cy).powi(2) + (x - cx).powi(2)) / (2.0 * sigma * sigma)).exp();
                *c = [c[0] + g, c[1] + g * 0.9, c[2] + g * 0.6];
            }
        }
        "night-clear" => {
            for (c, &d) in img.iter_mut().zip(depth) {
                *c = c.map(|v| v * 0.25);
                if d >= SKY_DEPTH_M && rng.gen_bool(0.04) {
                    *c = [0.9, 0.9, 0.8];
                }
            }
        }
        _ => {}
    }
}
