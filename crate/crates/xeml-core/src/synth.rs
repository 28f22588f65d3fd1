//! Procedural multi-domain benchmark generator.
//!
//! Class identity is a geometric shape; domain identity is a rendering
//! style (background texture, palette, noise, blur, polarity). Holding out
//! one domain therefore yields an unseen style while the label space stays
//! homogeneous. Generation is a pure function of (seed, arguments): styles
//! derive from per-domain streams and every image from a per-instance
//! stream, so datasets are bit-reproducible.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{DomainTable, ImageRef, MultiDomainDataset};
use crate::error::{CoreError, Result};
use crate::rng::{stream_rng, synth_image_stream, synth_style_stream};

/// The built-in shape classes, in canonical order.
pub const SHAPE_NAMES: [&str; 10] = [
    "circle", "square", "triangle", "cross", "ring", "h-stripes", "v-stripes", "diamond",
    "dot-grid", "l-shape",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Shape {
    Circle,
    Square,
    Triangle,
    Cross,
    Ring,
    HStripes,
    VStripes,
    Diamond,
    DotGrid,
    LShape,
}

const SHAPES: [Shape; 10] = [
    Shape::Circle,
    Shape::Square,
    Shape::Triangle,
    Shape::Cross,
    Shape::Ring,
    Shape::HStripes,
    Shape::VStripes,
    Shape::Diamond,
    Shape::DotGrid,
    Shape::LShape,
];

impl Shape {
    /// Membership test at offset (dx, dy) from the shape center, scale `s`
    /// in pixels.
    fn contains(self, dx: f32, dy: f32, s: f32) -> bool {
        match self {
            Shape::Circle => dx * dx + dy * dy <= s * s,
            Shape::Square => dx.abs() <= 0.85 * s && dy.abs() <= 0.85 * s,
            Shape::Triangle => {
                dy.abs() <= s && dx.abs() <= 0.9 * s * (dy + s) / (2.0 * s)
            }
            Shape::Cross => {
                (dx.abs() <= 0.33 * s && dy.abs() <= s) || (dy.abs() <= 0.33 * s && dx.abs() <= s)
            }
            Shape::Ring => {
                let r2 = dx * dx + dy * dy;
                r2 <= s * s && r2 >= 0.36 * s * s
            }
            Shape::HStripes => {
                dx.abs() <= s && dy.abs() <= s && ((dy + s) / (0.5 * s)) as i32 % 2 == 0
            }
            Shape::VStripes => {
                dx.abs() <= s && dy.abs() <= s && ((dx + s) / (0.5 * s)) as i32 % 2 == 0
            }
            Shape::Diamond => dx.abs() + dy.abs() <= 1.1 * s,
            Shape::DotGrid => {
                for gy in [-0.66, 0.0, 0.66] {
                    for gx in [-0.66, 0.0, 0.66] {
                        let (ox, oy) = (dx - gx * s, dy - gy * s);
                        if ox * ox + oy * oy <= 0.22 * 0.22 * s * s {
                            return true;
                        }
                    }
                }
                false
            }
            Shape::LShape => {
                (dx >= -s && dx <= -0.45 * s && dy.abs() <= s)
                    || (dy >= 0.45 * s && dy <= s && dx.abs() <= s)
            }
        }
    }
}

/// Background texture of a domain. Period/cell sizes are in pixels at a
/// 64-pixel reference and scale with the rendered image size.
#[derive(Clone, Debug, PartialEq)]
pub enum Background {
    Solid([f32; 3]),
    Stripes {
        a: [f32; 3],
        b: [f32; 3],
        period: usize,
    },
    Checker {
        a: [f32; 3],
        b: [f32; 3],
        cell: usize,
    },
    Noise {
        base: [f32; 3],
        amplitude: f32,
    },
}

impl Background {
    fn name(&self) -> &'static str {
        match self {
            Background::Solid(_) => "solid",
            Background::Stripes { .. } => "stripes",
            Background::Checker { .. } => "checker",
            Background::Noise { .. } => "noise",
        }
    }
}

/// Rendering style of one domain. Together with the (class, instance)
/// stream it fully determines every pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthStyle {
    pub background: Background,
    /// Foreground colors; each instance draws one of the three.
    pub palette: [[f32; 3]; 3],
    pub noise_sigma: f32,
    pub blur_radius: usize,
    pub invert: bool,
}

impl SynthStyle {
    pub fn background_name(&self) -> &'static str {
        self.background.name()
    }
}

/// Style of domain `d` under `seed`. Background kind rotates with the
/// domain index and polarity flips every four domains, so styles of
/// distinct domains never coincide.
pub fn style_for_domain(seed: u64, d: usize) -> SynthStyle {
    let mut rng = stream_rng(seed, synth_style_stream(d));
    let dark = |rng: &mut ChaCha8Rng| -> [f32; 3] { [(); 3].map(|_| rng.random_range(0.05..0.35)) };
    let background = match d % 4 {
        0 => Background::Solid(dark(&mut rng)),
        1 => Background::Stripes {
            a: dark(&mut rng),
            b: dark(&mut rng),
            period: rng.random_range(6..13),
        },
        2 => Background::Checker {
            a: dark(&mut rng),
            b: dark(&mut rng),
            cell: rng.random_range(5..11),
        },
        _ => Background::Noise {
            base: dark(&mut rng),
            amplitude: rng.random_range(0.08..0.20),
        },
    };
    let palette = [(); 3].map(|_| [(); 3].map(|_| rng.random_range(0.60..0.95)));
    SynthStyle {
        background,
        palette,
        noise_sigma: rng.random_range(0.005..0.035),
        blur_radius: rng.random_range(0..2),
        invert: (d / 4) % 2 == 1,
    }
}

/// Generates `n_domains` styled domains of `n_classes` shape classes with
/// `per_class` examples each. Class ids follow lexicographic name order so
/// an on-disk round trip preserves them.
pub fn generate_synthetic(
    n_domains: usize,
    n_classes: usize,
    per_class: usize,
    image_size: usize,
    seed: u64,
) -> Result<MultiDomainDataset> {
    if n_classes == 0 || n_classes > SHAPE_NAMES.len() {
        return Err(CoreError::Config(format!(
            "n_classes must be in [1, {}], got {n_classes}",
            SHAPE_NAMES.len()
        )));
    }
    if n_domains < 2 {
        return Err(CoreError::Config(format!(
            "n_domains must be at least 2, got {n_domains}"
        )));
    }
    if per_class == 0 || image_size < 8 {
        return Err(CoreError::Config(
            "per_class must be positive and image_size at least 8".into(),
        ));
    }

    // First n shapes of the canonical list, ordered by name for class ids.
    let mut picked: Vec<usize> = (0..n_classes).collect();
    picked.sort_by_key(|&i| SHAPE_NAMES[i]);
    let class_names: Vec<String> = picked.iter().map(|&i| String::from(SHAPE_NAMES[i])).collect();

    let styles: Vec<SynthStyle> = (0..n_domains).map(|d| style_for_domain(seed, d)).collect();
    for (i, a) in styles.iter().enumerate() {
        for b in styles.iter().skip(i + 1) {
            debug_assert!(a != b, "domain styles must differ");
        }
    }

    let mut domains = Vec::with_capacity(n_domains);
    for (d, style) in styles.iter().enumerate() {
        let mut classes: Vec<Vec<ImageRef>> = Vec::with_capacity(n_classes);
        for (class_id, &shape_idx) in picked.iter().enumerate() {
            let shape = SHAPES[shape_idx];
            let mut examples = Vec::with_capacity(per_class);
            for i in 0..per_class {
                let mut rng = stream_rng(seed, synth_image_stream(d, class_id, i));
                examples.push(Arc::new(render(shape, style, image_size, &mut rng)));
            }
            classes.push(examples);
        }
        domains.push(DomainTable::new(
            d,
            format!("d{d:02}_{}", style.background_name()),
            classes,
        ));
    }
    MultiDomainDataset::new(domains, class_names, image_size, 3)
}

/// Renders one [3, size, size] example. The rng drives, in order: shape
/// center and scale, foreground color choice, background noise (noise
/// backgrounds only), then pixel noise. Output values are quantized to the
/// k/255 grid so a PPM round trip is lossless.
fn render(shape: Shape, style: &SynthStyle, size: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let plane = size * size;
    let mut img = vec![0.0f32; 3 * plane];
    let fsize = size as f32;
    let cx = rng.random_range(0.35..0.65) * fsize;
    let cy = rng.random_range(0.35..0.65) * fsize;
    let s = rng.random_range(0.16..0.28) * fsize;
    let fg = style.palette[rng.random_range(0..3usize)];

    let px_scale = |v: usize| -> usize { (v * size).div_ceil(64).max(2) };
    for y in 0..size {
        for x in 0..size {
            let color = match &style.background {
                Background::Solid(c) => *c,
                Background::Stripes { a, b, period } => {
                    if (y / px_scale(*period)) % 2 == 0 {
                        *a
                    } else {
                        *b
                    }
                }
                Background::Checker { a, b, cell } => {
                    let c = px_scale(*cell);
                    if (x / c + y / c) % 2 == 0 {
                        *a
                    } else {
                        *b
                    }
                }
                Background::Noise { base, amplitude } => {
                    let n: f32 = rng.random_range(-1.0..1.0) * amplitude;
                    [base[0] + n, base[1] + n, base[2] + n]
                }
            };
            for (c, &v) in color.iter().enumerate() {
                img[c * plane + y * size + x] = v;
            }
        }
    }

    for y in 0..size {
        for x in 0..size {
            if shape.contains(x as f32 + 0.5 - cx, y as f32 + 0.5 - cy, s) {
                for (c, &v) in fg.iter().enumerate() {
                    img[c * plane + y * size + x] = v;
                }
            }
        }
    }

    if style.noise_sigma > 0.0 {
        let normal = Normal::new(0.0f32, style.noise_sigma).expect("sigma validated");
        for v in &mut img {
            *v += normal.sample(rng);
        }
    }

    if style.blur_radius > 0 {
        box_blur(&mut img, size, style.blur_radius);
    }

    for v in &mut img {
        let mut p = v.clamp(0.0, 1.0);
        if style.invert {
            p = 1.0 - p;
        }
        *v = libm::roundf(p * 255.0) / 255.0;
    }
    img
}

/// Separable box blur with edge clamping, applied per channel.
fn box_blur(img: &mut [f32], size: usize, radius: usize) {
    let plane = size * size;
    let r = radius as isize;
    let norm = 1.0 / (2 * radius + 1) as f32;
    let mut tmp = vec![0.0f32; plane];
    for channel in img.chunks_mut(plane) {
        for y in 0..size {
            for x in 0..size {
                let mut acc = 0.0;
                for dx in -r..=r {
                    let sx = (x as isize + dx).clamp(0, size as isize - 1) as usize;
                    acc += channel[y * size + sx];
                }
                tmp[y * size + x] = acc * norm;
            }
        }
        for y in 0..size {
            for x in 0..size {
                let mut acc = 0.0;
                for dy in -r..=r {
                    let sy = (y as isize + dy).clamp(0, size as isize - 1) as usize;
                    acc += tmp[sy * size + x];
                }
                channel[y * size + x] = acc * norm;
            }
        }
    }
}
