//! Seeded synthetic signature corpus.
//!
//! Each user owns a stroke model: a few cubic Bézier curves laid left to
//! right, a pen width and a slant. Genuine samples redraw the model with
//! small jitter; skilled forgeries redraw a persistently perturbed copy with
//! larger jitter; simple forgeries are drawn from unrelated models. This is
//! a stand-in for real signature data, good for exercising the pipeline and
//! its ordering properties but not for absolute error rates.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{Corpus, SampleKind, UserSamples};
use crate::error::{Error, Result};
use crate::imageprep::GrayImage;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthConfig {
    pub n_users: usize,
    pub n_genuine: usize,
    pub n_simple: usize,
    pub n_skilled: usize,
    pub height: usize,
    pub width: usize,
    pub seed: u64,
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users < 2 {
            return Err(Error::config("a synthetic corpus needs at least 2 users"));
        }
        if self.n_genuine == 0 {
            return Err(Error::config("a synthetic corpus needs at least 1 genuine signature per user"));
        }
        if self.height < 16 || self.width < 16 {
            return Err(Error::config(format!(
                "synthetic images must be at least 16x16, got {}x{}",
                self.height, self.width
            )));
        }
        Ok(())
    }
}

type Point = (f64, f64);

#[derive(Clone, Debug)]
struct StrokeModel {
    /// Control points in unit coordinates (x across, y down).
    strokes: Vec<[Point; 4]>,
    /// Pen width as a fraction of the image height.
    pen: f64,
    /// Horizontal shear.
    slant: f64,
}

struct Jitter {
    control: f64,
    rotation: f64,
    scale: f64,
    shift: f64,
    pen: f64,
}

const GENUINE: Jitter = Jitter {
    control: 0.010,
    rotation: 0.02,
    scale: 0.02,
    shift: 0.015,
    pen: 0.06,
};

const FORGERY: Jitter = Jitter {
    control: 0.018,
    rotation: 0.035,
    scale: 0.035,
    shift: 0.02,
    pen: 0.10,
};

/// Per-forger systematic deviation from the target model.
const FORGER_DRIFT: f64 = 0.03;

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn stream(seed: u64, user: usize, role: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix(seed ^ mix((user as u64) << 24 ^ role << 56 ^ index as u64)))
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

fn random_model(rng: &mut ChaCha8Rng) -> StrokeModel {
    let n = rng.gen_range(3..=5);
    let span = 0.8 / n as f64;
    let strokes = (0..n)
        .map(|k| {
            let x0 = 0.1 + span * k as f64;
            let x1 = x0 + span * rng.gen_range(0.9..1.3);
            let mut y = || 0.5 + 0.12 * normal(rng);
            let ends = [(x0, y()), (x1, y())];
            let mut inner = || (rng.gen_range(x0 - 0.08..x1 + 0.08), rng.gen_range(0.15..0.85));
            [ends[0], inner(), inner(), ends[1]]
        })
        .collect();
    StrokeModel {
        strokes,
        pen: rng.gen_range(0.012..0.03),
        slant: rng.gen_range(-0.35..0.35),
    }
}

fn perturb(model: &StrokeModel, rng: &mut ChaCha8Rng, sigma: f64) -> StrokeModel {
    let mut out = model.clone();
    for s in &mut out.strokes {
        for p in s.iter_mut() {
            p.0 += sigma * normal(rng);
            p.1 += sigma * normal(rng);
        }
    }
    out
}

fn bezier(p: &[Point; 4], t: f64) -> Point {
    let u = 1.0 - t;
    let (a, b, c, d) = (u * u * u, 3.0 * u * u * t, 3.0 * u * t * t, t * t * t);
    (
        a * p[0].0 + b * p[1].0 + c * p[2].0 + d * p[3].0,
        a * p[0].1 + b * p[1].1 + c * p[2].1 + d * p[3].1,
    )
}

fn render(model: &StrokeModel, jitter: &Jitter, rng: &mut ChaCha8Rng, h: usize, w: usize) -> GrayImage<u8> {
    let sample = perturb(model, rng, jitter.control);
    let theta = jitter.rotation * normal(rng);
    let scale = 1.0 + jitter.scale * normal(rng);
    let (dx, dy) = (jitter.shift * normal(rng), jitter.shift * normal(rng));
    let radius = (0.5 * model.pen * h as f64 * (1.0 + jitter.pen * normal(rng))).max(0.6);
    let (sin, cos) = theta.sin_cos();
    let (hf, wf) = (h as f64, w as f64);
    let to_pixel = |(x, y): Point| -> Point {
        let (cx, cy) = (x - 0.5 + model.slant * (0.5 - y) * hf / wf, y - 0.5);
        let (rx, ry) = (cos * cx * wf - sin * cy * hf, sin * cx * wf + cos * cy * hf);
        ((0.5 + dx) * wf + scale * rx, (0.5 + dy) * hf + scale * ry)
    };

    let mut ink = vec![0.0f64; h * w];
    for stroke in &sample.strokes {
        let pts: Vec<Point> = stroke.iter().map(|&p| to_pixel(p)).collect();
        let ctrl = [pts[0], pts[1], pts[2], pts[3]];
        let length: f64 = ctrl.windows(2).map(|s| ((s[1].0 - s[0].0).powi(2) + (s[1].1 - s[0].1).powi(2)).sqrt()).sum();
        let steps = (length * 3.0).ceil().max(8.0) as usize;
        for k in 0..=steps {
            let (px, py) = bezier(&ctrl, k as f64 / steps as f64);
            let reach = radius + 1.0;
            let (r0, r1) = ((py - reach).floor().max(0.0) as usize, ((py + reach).ceil().max(0.0) as usize).min(h));
            let (c0, c1) = ((px - reach).floor().max(0.0) as usize, ((px + reach).ceil().max(0.0) as usize).min(w));
            for r in r0..r1 {
                for c in c0..c1 {
                    let d = ((r as f64 + 0.5 - py).powi(2) + (c as f64 + 0.5 - px).powi(2)).sqrt();
                    let cover = (radius + 0.5 - d).clamp(0.0, 1.0);
                    let cell = &mut ink[r * w + c];
                    *cell = cell.max(cover);
                }
            }
        }
    }

    let ink_level = rng.gen_range(30.0..80.0);
    let sheet = rng.gen_range(236.0..250.0);
    let pixels = ink
        .iter()
        .map(|&a| {
            let bg = sheet + 2.5 * normal(rng);
            (bg - a * (bg - ink_level)).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    GrayImage::new(h, w, pixels).expect("dimensions validated")
}

const ROLE_MODEL: u64 = 1;
const ROLE_FORGER: u64 = 2;
const ROLE_SIMPLE_MODEL: u64 = 3;

fn role_of(kind: SampleKind) -> u64 {
    match kind {
        SampleKind::Genuine => 10,
        SampleKind::Simple => 11,
        SampleKind::Skilled => 12,
    }
}

/// Generates the corpus. Every image depends only on the seed, the user
/// index, its kind and its position, never on the other settings.
pub fn generate_synthetic_corpus(cfg: &SynthConfig) -> Result<Corpus<GrayImage<u8>>> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let users = (0..cfg.n_users)
        .map(|u| {
            let model = random_model(&mut stream(cfg.seed, u, ROLE_MODEL, 0));
            let forger = perturb(&model, &mut stream(cfg.seed, u, ROLE_FORGER, 0), FORGER_DRIFT);
            let mut user = UserSamples::new(u);
            for i in 0..cfg.n_genuine {
                let mut rng = stream(cfg.seed, u, role_of(SampleKind::Genuine), i);
                user.genuine.push(render(&model, &GENUINE, &mut rng, h, w));
            }
            for i in 0..cfg.n_simple {
                let other = random_model(&mut stream(cfg.seed, u, ROLE_SIMPLE_MODEL, i));
                let mut rng = stream(cfg.seed, u, role_of(SampleKind::Simple), i);
                user.simple.push(render(&other, &FORGERY, &mut rng, h, w));
            }
            for i in 0..cfg.n_skilled {
                let mut rng = stream(cfg.seed, u, role_of(SampleKind::Skilled), i);
                user.skilled.push(render(&forger, &FORGERY, &mut rng, h, w));
            }
            user
        })
        .collect();
    Corpus::new(users)
}
