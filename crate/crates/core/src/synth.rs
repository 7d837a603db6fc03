//! Synthetic face images for fixtures, demos and the acceptance suite.
//!
//! A synthetic face is a square filled with an identity-specific smooth
//! texture and surrounded by a green frame, drawn on a near-black canvas.
//! [`crate::detector::synthetic::SyntheticBackend`] detects exactly these.
//! Textures never produce frame-coloured or background-coloured pixels.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::detector::synthetic::FRAME_FRACTION;
use crate::geometry::BoundingBox;
use crate::imaging::Image;

pub const FRAME_COLOR: [u8; 3] = [30, 230, 30];

const GRID: usize = 5;
const RED: (u8, u8) = (60, 235);
const GREEN: (u8, u8) = (20, 130);
const BLUE: (u8, u8) = (60, 235);

/// Smooth per-identity colour pattern: a coarse grid of random colours,
/// bilinearly interpolated.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityTexture {
    grid: Vec<[f64; 3]>,
}

impl IdentityTexture {
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_face);
        let grid = (0..GRID * GRID)
            .map(|_| {
                [
                    rng.random_range(RED.0..=RED.1) as f64,
                    rng.random_range(GREEN.0..=GREEN.1) as f64,
                    rng.random_range(BLUE.0..=BLUE.1) as f64,
                ]
            })
            .collect();
        Self { grid }
    }

    /// Colour at normalised position `(u, v)` in `[0, 1]²`.
    pub fn sample(&self, u: f64, v: f64) -> [f64; 3] {
        let gx = u.clamp(0.0, 1.0) * (GRID - 1) as f64;
        let gy = v.clamp(0.0, 1.0) * (GRID - 1) as f64;
        let (x0, y0) = (gx.floor() as usize, gy.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(GRID - 1), (y0 + 1).min(GRID - 1));
        let (fx, fy) = (gx - x0 as f64, gy - y0 as f64);
        let at = |x: usize, y: usize| self.grid[y * GRID + x];
        std::array::from_fn(|c| {
            let top = at(x0, y0)[c] * (1.0 - fx) + at(x1, y0)[c] * fx;
            let bottom = at(x0, y1)[c] * (1.0 - fx) + at(x1, y1)[c] * fx;
            top * (1.0 - fy) + bottom * fy
        })
    }
}

fn clamp_channel(v: f64, range: (u8, u8)) -> u8 {
    v.round().clamp(range.0 as f64, range.1 as f64) as u8
}

/// Draws one framed face of side `side` with top-left corner `(x, y)`.
/// `noise` is the amplitude of uniform per-channel pixel noise.
pub fn draw_face(
    canvas: &mut Image,
    x: u32,
    y: u32,
    side: u32,
    texture: &IdentityTexture,
    noise: f64,
    rng: &mut impl Rng,
) {
    let frame = ((side as f64 * FRAME_FRACTION).round() as u32).max(1);
    for dy in 0..side {
        for dx in 0..side {
            let (px, py) = (x + dx, y + dy);
            if px >= canvas.width() || py >= canvas.height() {
                continue;
            }
            let d = dx.min(dy).min(side - 1 - dx).min(side - 1 - dy);
            let rgb = if d < frame {
                FRAME_COLOR
            } else {
                let t = texture.sample(dx as f64 / (side - 1) as f64, dy as f64 / (side - 1) as f64);
                let mut jitter = || {
                    if noise > 0.0 {
                        rng.random_range(-noise..=noise)
                    } else {
                        0.0
                    }
                };
                [
                    clamp_channel(t[0] + jitter(), RED),
                    clamp_channel(t[1] + jitter(), GREEN),
                    clamp_channel(t[2] + jitter(), BLUE),
                ]
            };
            canvas.put(px, py, rgb);
        }
    }
}

/// Canvas with faint background noise (all channels below 10).
pub fn blank_canvas(width: u32, height: u32, rng: &mut impl Rng) -> Image {
    Image::from_fn(width, height, |_, _| {
        let v = rng.random_range(0..10u8);
        [v, v, v]
    })
}

/// A photo of one identity: canvas of `canvas` × `canvas` pixels with the
/// face at a jittered position and size. Returns the image and the face
/// box as drawn.
pub fn face_photo(texture: &IdentityTexture, variant: u64, canvas: u32) -> (Image, BoundingBox) {
    let mut rng = ChaCha8Rng::seed_from_u64(variant.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ 0xfa11);
    let side = (canvas as f64 * rng.random_range(0.45..0.6)).round() as u32;
    let slack = canvas - side;
    let x = slack / 2 + rng.random_range(0..=slack / 4) - slack / 8;
    let y = slack / 2 + rng.random_range(0..=slack / 4) - slack / 8;
    let mut img = blank_canvas(canvas, canvas, &mut rng);
    draw_face(&mut img, x, y, side, texture, 6.0, &mut rng);
    (
        img,
        BoundingBox::new(x as f64, y as f64, (x + side) as f64, (y + side) as f64),
    )
}

/// An aligned face crop of `size` × `size` (what the detector would hand the
/// embedder), with per-variant pixel noise.
pub fn face_crop(texture: &IdentityTexture, variant: u64, size: u32) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(variant ^ 0xc409);
    let mut img = Image::filled(size, size, [0, 0, 0]);
    draw_face(&mut img, 0, 0, size, texture, 6.0, &mut rng);
    img
}
