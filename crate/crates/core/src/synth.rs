//! A procedurally generated image set for desk-scale experiments.
//!
//! Every class is a small set of strokes. Classes of the `animal` group share
//! a long body stroke and differ in their other strokes; classes of the
//! `vehicle` group share two wheel rings. Each sample applies a random
//! rotation, scale, shift and mirror to its class's strokes, jitters every
//! endpoint, adds a faint clutter stroke and pixel noise. Images are
//! grayscale and mirror-symmetric in distribution, so flips preserve labels.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, ImageShape};
use crate::error::{Error, Result};
use crate::rng::{RngStream, StreamId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub side: usize,
    pub animal_classes: usize,
    pub vehicle_classes: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Largest rotation, in degrees.
    pub max_rotation: f64,
    /// Scale is drawn from `[1 - scale_jitter, 1 + scale_jitter]`.
    pub scale_jitter: f64,
    /// Largest shift, as a fraction of the half-width.
    pub max_shift: f64,
    /// Standard deviation of endpoint jitter, in normalized coordinates.
    pub point_jitter: f64,
    /// Standard deviation of additive pixel noise (before scaling to [-1, 1]).
    pub noise: f64,
    /// Stroke half-thickness in normalized coordinates.
    pub stroke_width: f64,
    pub clutter_strokes: usize,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            side: 12,
            animal_classes: 6,
            vehicle_classes: 4,
            train_per_class: 600,
            test_per_class: 200,
            max_rotation: 25.0,
            scale_jitter: 0.15,
            max_shift: 0.2,
            point_jitter: 0.08,
            noise: 0.25,
            stroke_width: 0.16,
            clutter_strokes: 1,
            seed: 2024,
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum Stroke {
    Segment { a: (f64, f64), b: (f64, f64) },
    Ring { c: (f64, f64), r: f64 },
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.random_range(lo..hi)
}

fn point(rng: &mut ChaCha8Rng, extent: f64) -> (f64, f64) {
    (uniform(rng, -extent, extent), uniform(rng, -extent, extent))
}

/// Stroke templates, animal classes first.
fn templates(spec: &SynthSpec) -> Vec<Vec<Stroke>> {
    let mut rng = RngStream::new(spec.seed, StreamId::Init).derive(0).rng();
    let mut out = Vec::new();
    for _ in 0..spec.animal_classes {
        let mut strokes = vec![Stroke::Segment {
            a: (-0.55, 0.0),
            b: (0.55, 0.0),
        }];
        for _ in 0..2 {
            strokes.push(Stroke::Segment {
                a: point(&mut rng, 0.75),
                b: point(&mut rng, 0.75),
            });
        }
        out.push(strokes);
    }
    for _ in 0..spec.vehicle_classes {
        let mut strokes = vec![
            Stroke::Ring {
                c: (-0.4, 0.45),
                r: 0.22,
            },
            Stroke::Ring {
                c: (0.4, 0.45),
                r: 0.22,
            },
        ];
        strokes.push(Stroke::Segment {
            a: point(&mut rng, 0.7),
            b: point(&mut rng, 0.7),
        });
        out.push(strokes);
    }
    out
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

fn distance(p: (f64, f64), s: &Stroke) -> f64 {
    match *s {
        Stroke::Segment { a, b } => segment_distance(p, a, b),
        Stroke::Ring { c, r } => (((p.0 - c.0).powi(2) + (p.1 - c.1).powi(2)).sqrt() - r).abs(),
    }
}

struct Pose {
    cos: f64,
    sin: f64,
    scale: f64,
    shift: (f64, f64),
    mirror: bool,
}

impl Pose {
    fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        let x = if self.mirror { -p.0 } else { p.0 };
        let (rx, ry) = (self.cos * x - self.sin * p.1, self.sin * x + self.cos * p.1);
        (self.scale * rx + self.shift.0, self.scale * ry + self.shift.1)
    }
}

fn render(spec: &SynthSpec, template: &[Stroke], rng: &mut ChaCha8Rng) -> Vec<f32> {
    let jitter = Normal::new(0.0, spec.point_jitter.max(1e-12)).expect("finite jitter");
    let noise = Normal::new(0.0, spec.noise.max(1e-12)).expect("finite noise");
    let angle = uniform(rng, -spec.max_rotation, spec.max_rotation).to_radians();
    let pose = Pose {
        cos: angle.cos(),
        sin: angle.sin(),
        scale: uniform(rng, 1.0 - spec.scale_jitter, 1.0 + spec.scale_jitter),
        shift: point(rng, spec.max_shift.max(1e-12)),
        mirror: rng.random::<bool>(),
    };
    let j = |p: (f64, f64), rng: &mut ChaCha8Rng| {
        let q = pose.apply(p);
        (q.0 + jitter.sample(rng), q.1 + jitter.sample(rng))
    };
    let mut strokes: Vec<(Stroke, f64)> = template
        .iter()
        .map(|s| {
            let placed = match *s {
                Stroke::Segment { a, b } => Stroke::Segment {
                    a: j(a, rng),
                    b: j(b, rng),
                },
                Stroke::Ring { c, r } => Stroke::Ring {
                    c: j(c, rng),
                    r: r * pose.scale,
                },
            };
            (placed, 1.0)
        })
        .collect();
    for _ in 0..spec.clutter_strokes {
        let a = point(rng, 0.9);
        let b = point(rng, 0.9);
        let strength = uniform(rng, 0.3, 0.6);
        strokes.push((Stroke::Segment { a, b }, strength));
    }
    let contrast = uniform(rng, 0.7, 1.0);
    let n = spec.side;
    let w2 = 2.0 * spec.stroke_width * spec.stroke_width;
    let mut image = Vec::with_capacity(n * n);
    for y in 0..n {
        for x in 0..n {
            let p = (
                (2.0 * x as f64 + 1.0) / n as f64 - 1.0,
                (2.0 * y as f64 + 1.0) / n as f64 - 1.0,
            );
            let ink = strokes
                .iter()
                .map(|(s, k)| k * (-distance(p, s).powi(2) / w2).exp())
                .fold(0.0, f64::max);
            let v = (contrast * ink + noise.sample(rng)).clamp(0.0, 1.0);
            image.push((2.0 * v - 1.0) as f32);
        }
    }
    image
}

fn generate(spec: &SynthSpec, per_class: usize, part: u64) -> Result<Dataset> {
    let templates = templates(spec);
    let k = templates.len();
    let shape = ImageShape::new(spec.side, spec.side, 1);
    let mut images = Vec::with_capacity(k * per_class * shape.len());
    let mut labels = Vec::with_capacity(k * per_class);
    let stream = RngStream::new(spec.seed, StreamId::Init).derive(part);
    // Interleave classes so any prefix is roughly balanced.
    for i in 0..per_class {
        for (c, template) in templates.iter().enumerate() {
            let mut rng = stream.derive((i * k + c) as u64).rng();
            images.extend(render(spec, template, &mut rng));
            labels.push(c);
        }
    }
    let names: Vec<String> = (0..spec.animal_classes)
        .map(|c| format!("animal_{c}"))
        .chain((0..spec.vehicle_classes).map(|c| format!("vehicle_{c}")))
        .collect();
    let mut groups = BTreeMap::new();
    groups.insert("animal".to_string(), (0..spec.animal_classes).collect());
    groups.insert("vehicle".to_string(), (spec.animal_classes..k).collect());
    Dataset::new(shape, images, labels, names)?.with_class_groups(groups)
}

/// Generates the train and test sets.
pub fn generate_synthetic(spec: &SynthSpec) -> Result<(Dataset, Dataset)> {
    if spec.side < 4 {
        return Err(Error::validation("side", "must be >= 4"));
    }
    if spec.animal_classes + spec.vehicle_classes < 2 {
        return Err(Error::validation("classes", "need at least 2 classes"));
    }
    Ok((generate(spec, spec.train_per_class, 1)?, generate(spec, spec.test_per_class, 2)?))
}
