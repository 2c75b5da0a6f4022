//! Procedural 28x28 digit corpus: each class is a fixed set of glyph
//! strokes, rasterized through a per-sample random affine jitter with
//! stroke-width, intensity, and pixel noise. Gives a deterministic,
//! class-structured image dataset in the standard grayscale layout without
//! external files.

use super::{assemble_split, DataError, DatasetSplit, MixtureSpec, Pools, Sample};
use crate::Label;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIDE: usize = 28;
pub const PIXELS: usize = SIDE * SIDE;

type Point = (f32, f32);

/// Dense polyline approximation of an ellipse arc; angles in radians, the
/// y axis points down.
fn arc(cx: f32, cy: f32, rx: f32, ry: f32, t0: f32, t1: f32, n: usize) -> Vec<Point> {
    (0..=n)
        .map(|i| {
            let t = t0 + (t1 - t0) * i as f32 / n as f32;
            (cx + rx * t.cos(), cy + ry * t.sin())
        })
        .collect()
}

const TAU: f32 = std::f32::consts::TAU;
const PI: f32 = std::f32::consts::PI;

/// Stroke set of one digit in the unit square, y pointing down.
fn glyph(digit: usize) -> Vec<Vec<Point>> {
    match digit {
        0 => vec![arc(0.5, 0.5, 0.26, 0.36, 0.0, TAU, 40)],
        1 => vec![
            vec![(0.35, 0.28), (0.52, 0.14), (0.52, 0.86)],
            vec![(0.38, 0.86), (0.66, 0.86)],
        ],
        2 => {
            let mut top = arc(0.5, 0.34, 0.24, 0.2, PI, TAU, 24);
            top.push((0.28, 0.84));
            top.push((0.74, 0.84));
            vec![top]
        }
        3 => vec![
            arc(0.45, 0.3, 0.22, 0.18, 1.1 * PI, 2.5 * PI, 24),
            arc(0.45, 0.66, 0.24, 0.2, 1.5 * PI, 2.9 * PI, 24),
        ],
        4 => vec![
            vec![(0.58, 0.14), (0.22, 0.6), (0.8, 0.6)],
            vec![(0.58, 0.14), (0.58, 0.88)],
        ],
        5 => {
            let mut s = vec![(0.72, 0.14), (0.3, 0.14), (0.3, 0.45)];
            s.extend(arc(0.46, 0.64, 0.25, 0.22, -0.55 * PI, 0.8 * PI, 28));
            vec![s]
        }
        6 => vec![
            arc(0.56, 0.34, 0.3, 0.26, 0.9 * PI, 1.6 * PI, 20),
            arc(0.5, 0.66, 0.21, 0.19, 0.0, TAU, 32),
        ],
        7 => vec![vec![(0.24, 0.15), (0.76, 0.15), (0.4, 0.86)]],
        8 => vec![
            arc(0.5, 0.3, 0.19, 0.17, 0.0, TAU, 32),
            arc(0.5, 0.67, 0.22, 0.2, 0.0, TAU, 32),
        ],
        9 => vec![
            arc(0.5, 0.34, 0.21, 0.19, 0.0, TAU, 32),
            arc(0.48, 0.5, 0.23, 0.36, -0.15 * PI, 0.45 * PI, 20),
        ],
        _ => panic!("digit out of range: {digit}"),
    }
}

fn dist_to_segment(p: Point, a: Point, b: Point) -> f32 {
    let (px, py) = (p.0 - a.0, p.1 - a.1);
    let (vx, vy) = (b.0 - a.0, b.1 - a.1);
    let len2 = vx * vx + vy * vy;
    let t = if len2 > 0.0 {
        ((px * vx + py * vy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (dx, dy) = (px - t * vx, py - t * vy);
    (dx * dx + dy * dy).sqrt()
}

struct Jitter {
    /// Inverse affine, mapping raster coordinates back into glyph space.
    inv: [f32; 4],
    shift: Point,
    stroke_radius: f32,
    intensity: f32,
    noise: f32,
    noise_seed: u64,
}

fn draw_jitter(rng: &mut ChaCha8Rng) -> Jitter {
    let theta = rng.random_range(-0.18f32..0.18);
    let (sx, sy) = (
        rng.random_range(0.85f32..1.1),
        rng.random_range(0.85f32..1.1),
    );
    let shear = rng.random_range(-0.14f32..0.14);
    let (tx, ty) = (
        rng.random_range(-0.055f32..0.055),
        rng.random_range(-0.055f32..0.055),
    );
    // Forward map A = R(theta) * Shear(shear) * diag(sx, sy); pixels are
    // pulled back through its inverse.
    let (c, s) = (theta.cos(), theta.sin());
    let d = [sx, 0.0, 0.0, sy];
    let sh = [1.0, shear, 0.0, 1.0];
    let r = [c, -s, s, c];
    let mul = |x: [f32; 4], y: [f32; 4]| {
        [
            x[0] * y[0] + x[1] * y[2],
            x[0] * y[1] + x[1] * y[3],
            x[2] * y[0] + x[3] * y[2],
            x[2] * y[1] + x[3] * y[3],
        ]
    };
    let fwd = mul(r, mul(sh, d));
    let det = fwd[0] * fwd[3] - fwd[1] * fwd[2];
    let inv = [fwd[3] / det, -fwd[1] / det, -fwd[2] / det, fwd[0] / det];
    Jitter {
        inv,
        shift: (tx, ty),
        stroke_radius: rng.random_range(0.035f32..0.055),
        intensity: rng.random_range(0.75f32..1.0),
        noise: rng.random_range(0.0f32..0.05),
        noise_seed: rng.random(),
    }
}

/// Rasterizes one digit with the given jitter into a row-major [0,1] image.
fn render(digit: usize, j: &Jitter) -> Vec<f32> {
    let strokes = glyph(digit);
    let aa = 1.4 / SIDE as f32;
    let mut img = vec![0.0f32; PIXELS];
    let mut noise_rng = ChaCha8Rng::seed_from_u64(j.noise_seed);
    for row in 0..SIDE {
        for col in 0..SIDE {
            let px = (col as f32 + 0.5) / SIDE as f32 - 0.5 - j.shift.0;
            let py = (row as f32 + 0.5) / SIDE as f32 - 0.5 - j.shift.1;
            let gx = j.inv[0] * px + j.inv[1] * py + 0.5;
            let gy = j.inv[2] * px + j.inv[3] * py + 0.5;
            let mut d = f32::MAX;
            for stroke in &strokes {
                for w in stroke.windows(2) {
                    d = d.min(dist_to_segment((gx, gy), w[0], w[1]));
                }
            }
            let coverage = (0.5 + (j.stroke_radius - d) / aa).clamp(0.0, 1.0);
            let noise = noise_rng.random_range(-1.0f32..1.0) * j.noise;
            img[row * SIDE + col] = (coverage * j.intensity + noise).clamp(0.0, 1.0);
        }
    }
    img
}

/// One rendered sample; exposed for inspection and tests.
pub fn render_digit(digit: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let j = draw_jitter(rng);
    render(digit, &j)
}

/// Builds a positive-plus-unlabeled split over the procedural digit corpus:
/// the positive pool renders `inlier_digit`, the outlier pool cycles through
/// the other nine classes.
pub fn make_digits_analog(
    inlier_digit: usize,
    spec: &MixtureSpec,
) -> Result<DatasetSplit, DataError> {
    if inlier_digit > 9 {
        return Err(DataError::InlierClassOutOfRange(inlier_digit, 10));
    }
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x44494749);
    let n_in = spec.n_positive + 2 * spec.n_unlabeled;
    let n_out = spec.positive_outliers() + 2 * spec.unlabeled_outliers() + 2;
    let outlier_classes: Vec<usize> = (0..10).filter(|&d| d != inlier_digit).collect();
    let inliers: Vec<Sample> = (0..n_in)
        .map(|i| Sample {
            features: render_digit(inlier_digit, &mut rng),
            true_label: Label::Inlier,
            source_id: format!("digits-in-{i}"),
        })
        .collect();
    let outliers: Vec<Sample> = (0..n_out)
        .map(|i| Sample {
            features: render_digit(outlier_classes[i % 9], &mut rng),
            true_label: Label::Outlier,
            source_id: format!("digits-out-{i}"),
        })
        .collect();
    assemble_split(
        "digits-analog",
        spec,
        Pools { inliers, outliers },
        Pools {
            inliers: vec![],
            outliers: vec![],
        },
        true,
    )
}
