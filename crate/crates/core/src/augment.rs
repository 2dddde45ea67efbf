//! Deterministic image transforms and the augmentation policies built from them.
//!
//! Every transform is a pure function of its parameters and the input pixels.
//! Geometric transforms use bilinear sampling with edge replication, and all
//! intermediate arithmetic is `f64` rounded once to `u8` at the end.

use std::fmt;
use std::path::Path;

use crate::error::{Result, TtaError};

/// Side length the standard policy assumes for its (already resized) source.
pub const STANDARD_SOURCE_SIDE: u32 = 256;
/// Crop side used by the standard policy.
pub const STANDARD_CROP_SIZE: u32 = 224;
/// Zoom factors of the standard policy.
pub const STANDARD_SCALES: [f64; 3] = [1.0, 1.04, 1.10];
/// Levels per continuous transform in the expanded policy.
pub const EXPANDED_LEVELS: usize = 10;
/// Version of the expanded transform table below. Bump on any change.
pub const EXPANDED_POLICY_VERSION: u32 = 1;

/// Continuous transforms of the expanded policy with their magnitude ranges.
/// Levels are `lo + k (hi - lo) / 9` for `k = 0..10`.
pub const EXPANDED_CONTINUOUS: [(&str, f64, f64); 12] = [
    ("rotate", -30.0, 30.0),
    ("shear_x", -0.3, 0.3),
    ("shear_y", -0.3, 0.3),
    ("translate_x", -0.3, 0.3),
    ("translate_y", -0.3, 0.3),
    ("brightness", 0.1, 1.9),
    ("contrast", 0.1, 1.9),
    ("color", 0.1, 1.9),
    ("sharpness", 0.1, 1.9),
    ("posterize", 2.0, 20.0),
    ("solarize", 16.0, 232.0),
    ("gaussian_blur", 0.2, 2.0),
];

/// Parameterless transforms of the expanded policy; identity first.
pub const EXPANDED_BINARY: [&str; 8] = [
    "identity",
    "hflip",
    "vflip",
    "autocontrast",
    "invert",
    "equalize",
    "grayscale",
    "transpose",
];

/// An 8-bit raster image, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    channels: u8,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, channels: u8, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(TtaError::GeometryError(format!(
                "empty image {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(TtaError::GeometryError(format!(
                "{channels} channels (need 1 or 3)"
            )));
        }
        let expected = width as usize * height as usize * channels as usize;
        if pixels.len() != expected {
            return Err(TtaError::GeometryError(format!(
                "buffer of {} bytes for {width}x{height}x{channels}",
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    /// Builds an image from a per-(x, y, channel) function.
    pub fn from_fn(
        width: u32,
        height: u32,
        channels: u8,
        mut f: impl FnMut(u32, u32, u8) -> u8,
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width as usize * height as usize * channels as usize);
        for y in 0..height {
            for x in 0..width {
                for ch in 0..channels {
                    pixels.push(f(x, y, ch));
                }
            }
        }
        Self::new(width, height, channels, pixels)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn channels(&self) -> u8 {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32, ch: u8) -> u8 {
        self.pixels[self.offset(x, y) + ch as usize]
    }

    #[inline]
    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * self.channels as usize
    }

    /// Reads a PNG; gray stays single-channel, everything else becomes RGB.
    pub fn load_png(path: &Path) -> Result<Self> {
        let dynimg = image::open(path).map_err(|e| match e {
            image::ImageError::IoError(io) => TtaError::Io(io),
            other => TtaError::Image(other.to_string()),
        })?;
        let color = dynimg.color();
        if color.channel_count() == 1 || color == image::ColorType::La8 {
            let g = dynimg.to_luma8();
            Self::new(g.width(), g.height(), 1, g.into_raw())
        } else {
            let rgb = dynimg.to_rgb8();
            Self::new(rgb.width(), rgb.height(), 3, rgb.into_raw())
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let color = if self.channels == 1 {
            image::ExtendedColorType::L8
        } else {
            image::ExtendedColorType::Rgb8
        };
        image::save_buffer_with_format(
            path,
            &self.pixels,
            self.width,
            self.height,
            color,
            image::ImageFormat::Png,
        )
        .map_err(|e| match e {
            image::ImageError::IoError(io) => TtaError::Io(io),
            other => TtaError::Image(other.to_string()),
        })
    }

    fn map_pixels(&self, mut f: impl FnMut(u8) -> u8) -> Image {
        Image {
            pixels: self.pixels.iter().map(|&p| f(p)).collect(),
            ..self.clone()
        }
    }
}

/// Where a fixed-size crop is anchored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CropAnchor {
    Center,
    TopLeft,
    TopRight,
    BottomLeft,
    BottomRight,
}

impl CropAnchor {
    pub const ALL: [CropAnchor; 5] = [
        CropAnchor::Center,
        CropAnchor::TopLeft,
        CropAnchor::TopRight,
        CropAnchor::BottomLeft,
        CropAnchor::BottomRight,
    ];

    /// Integer code used in policy manifests.
    pub fn code(self) -> u32 {
        match self {
            CropAnchor::Center => 0,
            CropAnchor::TopLeft => 1,
            CropAnchor::TopRight => 2,
            CropAnchor::BottomLeft => 3,
            CropAnchor::BottomRight => 4,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    fn origin(self, width: u32, height: u32, size: u32) -> (u32, u32) {
        let (right, bottom) = (width - size, height - size);
        match self {
            CropAnchor::Center => (right / 2, bottom / 2),
            CropAnchor::TopLeft => (0, 0),
            CropAnchor::TopRight => (right, 0),
            CropAnchor::BottomLeft => (0, bottom),
            CropAnchor::BottomRight => (right, bottom),
        }
    }
}

/// One deterministic transform with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum AugmentationSpec {
    Identity,
    HorizontalFlip,
    VerticalFlip,
    AutoContrast,
    Invert,
    Equalize,
    Grayscale,
    Transpose,
    /// Counter-clockwise rotation about the image center.
    Rotate {
        degrees: f64,
    },
    ShearX {
        factor: f64,
    },
    ShearY {
        factor: f64,
    },
    /// Shift right by `fraction` of the width.
    TranslateX {
        fraction: f64,
    },
    /// Shift down by `fraction` of the height.
    TranslateY {
        fraction: f64,
    },
    Brightness {
        factor: f64,
    },
    Contrast {
        factor: f64,
    },
    /// Saturation: blend between grayscale (0) and the input (1).
    Color {
        factor: f64,
    },
    Sharpness {
        factor: f64,
    },
    Posterize {
        levels: u32,
    },
    Solarize {
        threshold: u32,
    },
    GaussianBlur {
        sigma: f64,
    },
    /// Resize about the center by `scale`, take a `size` crop at `anchor`,
    /// then optionally mirror horizontally.
    FlipCropScale {
        hflip: bool,
        anchor: CropAnchor,
        scale: f64,
        size: u32,
    },
}

impl AugmentationSpec {
    pub fn name(&self) -> &'static str {
        use AugmentationSpec::*;
        match self {
            Identity => "identity",
            HorizontalFlip => "hflip",
            VerticalFlip => "vflip",
            AutoContrast => "autocontrast",
            Invert => "invert",
            Equalize => "equalize",
            Grayscale => "grayscale",
            Transpose => "transpose",
            Rotate { .. } => "rotate",
            ShearX { .. } => "shear_x",
            ShearY { .. } => "shear_y",
            TranslateX { .. } => "translate_x",
            TranslateY { .. } => "translate_y",
            Brightness { .. } => "brightness",
            Contrast { .. } => "contrast",
            Color { .. } => "color",
            Sharpness { .. } => "sharpness",
            Posterize { .. } => "posterize",
            Solarize { .. } => "solarize",
            GaussianBlur { .. } => "gaussian_blur",
            FlipCropScale { .. } => "flip_crop_scale",
        }
    }

    /// Ordered `(key, value)` parameters as written to manifests.
    pub fn params(&self) -> Vec<(&'static str, String)> {
        use AugmentationSpec::*;
        match *self {
            Identity | HorizontalFlip | VerticalFlip | AutoContrast | Invert | Equalize
            | Grayscale | Transpose => vec![],
            Rotate { degrees } => vec![("degrees", degrees.to_string())],
            ShearX { factor } | ShearY { factor } => vec![("factor", factor.to_string())],
            TranslateX { fraction } | TranslateY { fraction } => {
                vec![("fraction", fraction.to_string())]
            }
            Brightness { factor }
            | Contrast { factor }
            | Color { factor }
            | Sharpness { factor } => {
                vec![("factor", factor.to_string())]
            }
            Posterize { levels } => vec![("levels", levels.to_string())],
            Solarize { threshold } => vec![("threshold", threshold.to_string())],
            GaussianBlur { sigma } => vec![("sigma", sigma.to_string())],
            FlipCropScale {
                hflip,
                anchor,
                scale,
                size,
            } => vec![
                ("hflip", u32::from(hflip).to_string()),
                ("anchor", anchor.code().to_string()),
                ("scale", scale.to_string()),
                ("size", size.to_string()),
            ],
        }
    }

    /// Parses a registered transform name and its parameters, checking ranges.
    pub fn from_parts(name: &str, params: &[(String, String)]) -> Result<Self> {
        let p = Params { name, params };
        use AugmentationSpec::*;
        let spec = match name {
            "identity" => Identity,
            "hflip" => HorizontalFlip,
            "vflip" => VerticalFlip,
            "autocontrast" => AutoContrast,
            "invert" => Invert,
            "equalize" => Equalize,
            "grayscale" => Grayscale,
            "transpose" => Transpose,
            "rotate" => Rotate {
                degrees: p.real("degrees", -180.0, 180.0)?,
            },
            "shear_x" => ShearX {
                factor: p.real("factor", -1.0, 1.0)?,
            },
            "shear_y" => ShearY {
                factor: p.real("factor", -1.0, 1.0)?,
            },
            "translate_x" => TranslateX {
                fraction: p.real("fraction", -1.0, 1.0)?,
            },
            "translate_y" => TranslateY {
                fraction: p.real("fraction", -1.0, 1.0)?,
            },
            "brightness" => Brightness {
                factor: p.real("factor", 0.0, 10.0)?,
            },
            "contrast" => Contrast {
                factor: p.real("factor", 0.0, 10.0)?,
            },
            "color" => Color {
                factor: p.real("factor", 0.0, 10.0)?,
            },
            "sharpness" => Sharpness {
                factor: p.real("factor", 0.0, 10.0)?,
            },
            "posterize" => Posterize {
                levels: p.integer("levels", 2, 256)?,
            },
            "solarize" => Solarize {
                threshold: p.integer("threshold", 0, 256)?,
            },
            "gaussian_blur" => GaussianBlur {
                sigma: p.real("sigma", 1e-3, 20.0)?,
            },
            "flip_crop_scale" => FlipCropScale {
                hflip: p.integer("hflip", 0, 1)? == 1,
                anchor: CropAnchor::from_code(p.integer("anchor", 0, 4)?)
                    .expect("range-checked anchor code"),
                scale: p.real("scale", 1.0, 4.0)?,
                size: p.integer("size", 1, 1 << 16)?,
            },
            other => return Err(TtaError::UnknownTransform(other.to_string())),
        };
        let expected: Vec<&str> = spec.params().iter().map(|(k, _)| *k).collect();
        let given: Vec<&str> = params.iter().map(|(k, _)| k.as_str()).collect();
        if expected != given {
            return Err(TtaError::BadTransformParam {
                name: name.to_string(),
                detail: format!("expected parameters {expected:?}, got {given:?}"),
            });
        }
        Ok(spec)
    }

    /// Builds a continuous transform of the expanded table at `magnitude`.
    pub fn continuous(name: &str, magnitude: f64) -> Result<Self> {
        use AugmentationSpec::*;
        Ok(match name {
            "rotate" => Rotate { degrees: magnitude },
            "shear_x" => ShearX { factor: magnitude },
            "shear_y" => ShearY { factor: magnitude },
            "translate_x" => TranslateX {
                fraction: magnitude,
            },
            "translate_y" => TranslateY {
                fraction: magnitude,
            },
            "brightness" => Brightness { factor: magnitude },
            "contrast" => Contrast { factor: magnitude },
            "color" => Color { factor: magnitude },
            "sharpness" => Sharpness { factor: magnitude },
            "posterize" => Posterize {
                levels: magnitude.round() as u32,
            },
            "solarize" => Solarize {
                threshold: magnitude.round() as u32,
            },
            "gaussian_blur" => GaussianBlur { sigma: magnitude },
            other => return Err(TtaError::UnknownTransform(other.to_string())),
        })
    }

    /// Whether this spec reproduces the (preprocessed) input view.
    pub fn is_identity_view(&self) -> bool {
        match *self {
            AugmentationSpec::Identity => true,
            AugmentationSpec::FlipCropScale {
                hflip,
                anchor,
                scale,
                ..
            } => !hflip && anchor == CropAnchor::Center && scale == 1.0,
            _ => false,
        }
    }

    /// Applies the transform. Pure: equal inputs give byte-identical outputs.
    pub fn apply(&self, img: &Image) -> Result<Image> {
        use AugmentationSpec::*;
        Ok(match *self {
            Identity => img.clone(),
            HorizontalFlip => hflip(img),
            VerticalFlip => vflip(img),
            AutoContrast => autocontrast(img),
            Invert => img.map_pixels(|p| 255 - p),
            Equalize => equalize(img),
            Grayscale => grayscale(img),
            Transpose => transpose(img),
            Rotate { degrees } => {
                let (s, c) = degrees.to_radians().sin_cos();
                let (cx, cy) = center(img);
                warp(img, |x, y| {
                    let (dx, dy) = (x - cx, y - cy);
                    (cx + c * dx - s * dy, cy + s * dx + c * dy)
                })
            }
            ShearX { factor } => {
                let (_, cy) = center(img);
                warp(img, |x, y| (x + factor * (y - cy), y))
            }
            ShearY { factor } => {
                let (cx, _) = center(img);
                warp(img, |x, y| (x, y + factor * (x - cx)))
            }
            TranslateX { fraction } => {
                let shift = fraction * img.width as f64;
                warp(img, |x, y| (x - shift, y))
            }
            TranslateY { fraction } => {
                let shift = fraction * img.height as f64;
                warp(img, |x, y| (x, y - shift))
            }
            Brightness { factor } => img.map_pixels(|p| to_u8(p as f64 * factor)),
            Contrast { factor } => {
                let gray = grayscale_plane(img);
                let mean = gray.iter().sum::<f64>() / gray.len() as f64;
                let mean = mean.round();
                img.map_pixels(|p| to_u8(mean + factor * (p as f64 - mean)))
            }
            Color { factor } => color(img, factor),
            Sharpness { factor } => sharpness(img, factor),
            Posterize { levels } => {
                let steps = (levels - 1) as f64;
                img.map_pixels(|p| {
                    let q = (p as f64 * steps / 255.0).round();
                    to_u8(q * 255.0 / steps)
                })
            }
            Solarize { threshold } => {
                img.map_pixels(|p| if p as u32 >= threshold { 255 - p } else { p })
            }
            GaussianBlur { sigma } => gaussian_blur(img, sigma),
            FlipCropScale {
                hflip: flip,
                anchor,
                scale,
                size,
            } => {
                let scaled = if scale == 1.0 {
                    img.clone()
                } else {
                    let w = (img.width as f64 * scale).round() as u32;
                    let h = (img.height as f64 * scale).round() as u32;
                    resize_bilinear(img, w, h)?
                };
                let cropped = crop(&scaled, anchor, size)?;
                if flip {
                    hflip(&cropped)
                } else {
                    cropped
                }
            }
        })
    }
}

impl fmt::Display for AugmentationSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let params: Vec<String> = self
            .params()
            .iter()
            .map(|(k, v)| format!("{k}={v}"))
            .collect();
        write!(f, "{}({})", self.name(), params.join(","))
    }
}

struct Params<'a> {
    name: &'a str,
    params: &'a [(String, String)],
}

impl Params<'_> {
    fn raw(&self, key: &str) -> Result<&str> {
        self.params
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
            .ok_or_else(|| self.bad(format!("missing `{key}`")))
    }

    fn real(&self, key: &str, lo: f64, hi: f64) -> Result<f64> {
        let raw = self.raw(key)?;
        let v: f64 = raw
            .parse()
            .map_err(|_| self.bad(format!("`{key}`={raw} is not a number")))?;
        if !(lo..=hi).contains(&v) {
            return Err(self.bad(format!("`{key}`={v} outside [{lo}, {hi}]")));
        }
        Ok(v)
    }

    fn integer(&self, key: &str, lo: u32, hi: u32) -> Result<u32> {
        let raw = self.raw(key)?;
        let v: u32 = raw
            .parse()
            .map_err(|_| self.bad(format!("`{key}`={raw} is not an integer")))?;
        if !(lo..=hi).contains(&v) {
            return Err(self.bad(format!("`{key}`={v} outside [{lo}, {hi}]")));
        }
        Ok(v)
    }

    fn bad(&self, detail: String) -> TtaError {
        TtaError::BadTransformParam {
            name: self.name.to_string(),
            detail,
        }
    }
}

/// Ordered list of transforms; index 0 is the identity view.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationPolicy {
    name: String,
    specs: Vec<AugmentationSpec>,
}

impl AugmentationPolicy {
    pub fn new(name: impl Into<String>, specs: Vec<AugmentationSpec>) -> Result<Self> {
        let first = specs
            .first()
            .ok_or_else(|| TtaError::InvariantViolation("policy has no specs".into()))?;
        if !first.is_identity_view() {
            return Err(TtaError::InvariantViolation(format!(
                "policy index 0 must be the identity view, found {first}"
            )));
        }
        for (i, a) in specs.iter().enumerate() {
            if let Some(j) = specs[i + 1..].iter().position(|b| b == a) {
                return Err(TtaError::InvariantViolation(format!(
                    "duplicate spec {a} at indices {i} and {}",
                    i + 1 + j
                )));
            }
        }
        Ok(Self {
            name: name.into(),
            specs,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn specs(&self) -> &[AugmentationSpec] {
        &self.specs
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    /// Renders the manifest: `index<TAB>name<TAB>key=value,...` per line.
    pub fn to_manifest(&self) -> String {
        let mut out = String::new();
        for (i, spec) in self.specs.iter().enumerate() {
            let params: Vec<String> = spec
                .params()
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect();
            out.push_str(&format!("{i}\t{}\t{}\n", spec.name(), params.join(",")));
        }
        out
    }

    pub fn from_manifest(name: impl Into<String>, text: &str) -> Result<Self> {
        let mut specs = Vec::new();
        for (line_no, line) in text.lines().enumerate() {
            let line_no = line_no + 1;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |detail: String| TtaError::BadManifest {
                line: line_no,
                detail,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            if fields.len() != 3 {
                return Err(bad(format!(
                    "expected 3 tab-separated fields, got {}",
                    fields.len()
                )));
            }
            let index: usize = fields[0].parse().map_err(|_| bad("bad index".into()))?;
            if index != specs.len() {
                return Err(bad(format!("index {index}, expected {}", specs.len())));
            }
            let params = if fields[2].is_empty() {
                Vec::new()
            } else {
                fields[2]
                    .split(',')
                    .map(|kv| {
                        kv.split_once('=')
                            .map(|(k, v)| (k.to_string(), v.to_string()))
                            .ok_or_else(|| bad(format!("parameter `{kv}` lacks `=`")))
                    })
                    .collect::<Result<Vec<_>>>()?
            };
            specs.push(AugmentationSpec::from_parts(fields[1], &params)?);
        }
        Self::new(name, specs)
    }

    pub fn read_manifest(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "manifest".into());
        Self::from_manifest(name, &text)
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_manifest())?;
        Ok(())
    }
}

/// The 30-view policy: {no flip, flip} × {center, 4 corners} × {1, 1.04, 1.10},
/// flip-major, then crop, then scale, for a 256×256 source.
pub fn standard_policy(crop_size: u32) -> Result<AugmentationPolicy> {
    standard_policy_for(crop_size, STANDARD_SOURCE_SIDE)
}

/// [`standard_policy`] for an arbitrary square source side.
pub fn standard_policy_for(crop_size: u32, source_side: u32) -> Result<AugmentationPolicy> {
    // the unscaled view is the smallest, so it bounds the crop
    if crop_size == 0 || crop_size > source_side {
        return Err(TtaError::InvalidCropSize {
            crop: crop_size,
            source_side,
        });
    }
    let mut specs = Vec::with_capacity(30);
    for hflip in [false, true] {
        for anchor in CropAnchor::ALL {
            for scale in STANDARD_SCALES {
                specs.push(AugmentationSpec::FlipCropScale {
                    hflip,
                    anchor,
                    scale,
                    size: crop_size,
                });
            }
        }
    }
    AugmentationPolicy::new("standard", specs)
}

/// The 128-view policy: 8 parameterless transforms plus 12 continuous
/// transforms at 10 evenly spaced magnitudes each.
pub fn expanded_policy() -> AugmentationPolicy {
    let mut specs = Vec::with_capacity(128);
    for name in EXPANDED_BINARY {
        specs.push(AugmentationSpec::from_parts(name, &[]).expect("registered binary transform"));
    }
    for (name, lo, hi) in EXPANDED_CONTINUOUS {
        for magnitude in magnitude_levels(lo, hi, EXPANDED_LEVELS) {
            specs.push(
                AugmentationSpec::continuous(name, magnitude)
                    .expect("registered continuous transform"),
            );
        }
    }
    AugmentationPolicy::new("expanded", specs).expect("expanded table is valid")
}

/// Identity, horizontal flip, vertical flip.
pub fn flips_policy() -> AugmentationPolicy {
    AugmentationPolicy::new(
        "flips",
        vec![
            AugmentationSpec::Identity,
            AugmentationSpec::HorizontalFlip,
            AugmentationSpec::VerticalFlip,
        ],
    )
    .expect("flips policy is valid")
}

/// `count` evenly spaced values from `lo` to `hi` inclusive.
pub fn magnitude_levels(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    match count {
        0 => vec![],
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / (count - 1) as f64;
            (0..count).map(|k| lo + k as f64 * step).collect()
        }
    }
}

/// Applies a single spec.
pub fn apply(spec: &AugmentationSpec, img: &Image) -> Result<Image> {
    spec.apply(img)
}

/// Applies every spec of `policy` in order.
pub fn apply_policy(policy: &AugmentationPolicy, img: &Image) -> Result<Vec<Image>> {
    policy.specs().iter().map(|s| s.apply(img)).collect()
}

#[inline]
fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn center(img: &Image) -> (f64, f64) {
    (
        (img.width as f64 - 1.0) / 2.0,
        (img.height as f64 - 1.0) / 2.0,
    )
}

fn hflip(img: &Image) -> Image {
    let (w, h) = (img.width, img.height);
    let ch = img.channels;
    Image::from_fn(w, h, ch, |x, y, c| img.get(w - 1 - x, y, c)).expect("same geometry")
}

fn vflip(img: &Image) -> Image {
    let (w, h) = (img.width, img.height);
    Image::from_fn(w, h, img.channels, |x, y, c| img.get(x, h - 1 - y, c)).expect("same geometry")
}

fn transpose(img: &Image) -> Image {
    Image::from_fn(img.height, img.width, img.channels, |x, y, c| {
        img.get(y, x, c)
    })
    .expect("swapped geometry")
}

fn crop(img: &Image, anchor: CropAnchor, size: u32) -> Result<Image> {
    if size > img.width || size > img.height {
        return Err(TtaError::GeometryError(format!(
            "crop {size} exceeds {}x{} image",
            img.width, img.height
        )));
    }
    let (x0, y0) = anchor.origin(img.width, img.height, size);
    Image::from_fn(size, size, img.channels, |x, y, c| {
        img.get(x0 + x, y0 + y, c)
    })
}

/// Bilinear sample at a real-valued position, clamping to the border.
#[inline]
fn sample(img: &Image, sx: f64, sy: f64, ch: u8) -> f64 {
    let max_x = (img.width - 1) as f64;
    let max_y = (img.height - 1) as f64;
    let sx = sx.clamp(0.0, max_x);
    let sy = sy.clamp(0.0, max_y);
    let x0 = sx.floor();
    let y0 = sy.floor();
    let fx = sx - x0;
    let fy = sy - y0;
    let (x0, y0) = (x0 as u32, y0 as u32);
    let x1 = (x0 + 1).min(img.width - 1);
    let y1 = (y0 + 1).min(img.height - 1);
    let p = |x, y| img.get(x, y, ch) as f64;
    let top = p(x0, y0) * (1.0 - fx) + p(x1, y0) * fx;
    let bottom = p(x0, y1) * (1.0 - fx) + p(x1, y1) * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Inverse-maps every output pixel to a source position.
fn warp(img: &Image, map: impl Fn(f64, f64) -> (f64, f64)) -> Image {
    Image::from_fn(img.width, img.height, img.channels, |x, y, c| {
        let (sx, sy) = map(x as f64, y as f64);
        to_u8(sample(img, sx, sy, c))
    })
    .expect("same geometry")
}

/// Resize with pixel-center alignment.
pub fn resize_bilinear(img: &Image, width: u32, height: u32) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(TtaError::GeometryError(format!(
            "resize to {width}x{height}"
        )));
    }
    if width == img.width && height == img.height {
        return Ok(img.clone());
    }
    let rx = img.width as f64 / width as f64;
    let ry = img.height as f64 / height as f64;
    Image::from_fn(width, height, img.channels, |x, y, c| {
        let sx = (x as f64 + 0.5) * rx - 0.5;
        let sy = (y as f64 + 0.5) * ry - 0.5;
        to_u8(sample(img, sx, sy, c))
    })
}

fn autocontrast(img: &Image) -> Image {
    let ch = img.channels as usize;
    let mut lo = vec![255u8; ch];
    let mut hi = vec![0u8; ch];
    for px in img.pixels.chunks_exact(ch) {
        for c in 0..ch {
            lo[c] = lo[c].min(px[c]);
            hi[c] = hi[c].max(px[c]);
        }
    }
    let mut out = img.clone();
    for (k, p) in out.pixels.iter_mut().enumerate() {
        let c = k % ch;
        if hi[c] > lo[c] {
            let scale = 255.0 / (hi[c] - lo[c]) as f64;
            *p = to_u8((*p - lo[c]) as f64 * scale);
        }
    }
    out
}

/// Per-channel histogram equalization with the lookup table PIL uses.
fn equalize(img: &Image) -> Image {
    let ch = img.channels as usize;
    let mut out = img.clone();
    for c in 0..ch {
        let mut hist = [0usize; 256];
        for px in img.pixels.chunks_exact(ch) {
            hist[px[c] as usize] += 1;
        }
        let nonzero: Vec<usize> = hist.iter().copied().filter(|&h| h > 0).collect();
        if nonzero.len() <= 1 {
            continue;
        }
        let total: usize = nonzero.iter().sum();
        let step = (total - nonzero[nonzero.len() - 1]) / 255;
        if step == 0 {
            continue;
        }
        let mut lut = [0u8; 256];
        let mut n = step / 2;
        for (v, slot) in lut.iter_mut().enumerate() {
            *slot = (n / step).min(255) as u8;
            n += hist[v];
        }
        for px in out.pixels.chunks_exact_mut(ch) {
            px[c] = lut[px[c] as usize];
        }
    }
    out
}

/// Luma plane (ITU-R 601-2) as reals.
fn grayscale_plane(img: &Image) -> Vec<f64> {
    if img.channels == 1 {
        return img.pixels.iter().map(|&p| p as f64).collect();
    }
    img.pixels
        .chunks_exact(3)
        .map(|px| (299.0 * px[0] as f64 + 587.0 * px[1] as f64 + 114.0 * px[2] as f64) / 1000.0)
        .collect()
}

fn grayscale(img: &Image) -> Image {
    let gray = grayscale_plane(img);
    let ch = img.channels as usize;
    let mut out = img.clone();
    for (px, g) in out.pixels.chunks_exact_mut(ch).zip(gray) {
        px.fill(to_u8(g));
    }
    out
}

fn color(img: &Image, factor: f64) -> Image {
    let gray = grayscale_plane(img);
    let ch = img.channels as usize;
    let mut out = img.clone();
    for (px, g) in out.pixels.chunks_exact_mut(ch).zip(gray) {
        let g = to_u8(g) as f64;
        for p in px.iter_mut() {
            *p = to_u8(g + factor * (*p as f64 - g));
        }
    }
    out
}

/// Blends with a 3×3 smoothed copy (border pixels are left unsmoothed).
fn sharpness(img: &Image, factor: f64) -> Image {
    const KERNEL: [[f64; 3]; 3] = [[1.0, 1.0, 1.0], [1.0, 5.0, 1.0], [1.0, 1.0, 1.0]];
    let (w, h) = (img.width, img.height);
    Image::from_fn(w, h, img.channels, |x, y, c| {
        let p = img.get(x, y, c) as f64;
        if x == 0 || y == 0 || x + 1 >= w || y + 1 >= h {
            return to_u8(p);
        }
        let mut acc = 0.0;
        for (dy, row) in KERNEL.iter().enumerate() {
            for (dx, k) in row.iter().enumerate() {
                acc += k * img.get(x + dx as u32 - 1, y + dy as u32 - 1, c) as f64;
            }
        }
        let smooth = to_u8(acc / 13.0) as f64;
        to_u8(smooth + factor * (p - smooth))
    })
    .expect("same geometry")
}

fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    let radius = (3.0 * sigma).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= total);

    let (w, h, ch) = (img.width as i64, img.height as i64, img.channels as i64);
    let idx = |x: i64, y: i64, c: i64| ((y * w + x) * ch + c) as usize;
    let mut horizontal = vec![0.0f64; img.pixels.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, weight) in kernel.iter().enumerate() {
                    let sx = (x + k as i64 - radius).clamp(0, w - 1);
                    acc += weight * img.pixels[idx(sx, y, c)] as f64;
                }
                horizontal[idx(x, y, c)] = acc;
            }
        }
    }
    let mut out = img.clone();
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (k, weight) in kernel.iter().enumerate() {
                    let sy = (y + k as i64 - radius).clamp(0, h - 1);
                    acc += weight * horizontal[idx(x, sy, c)];
                }
                out.pixels[idx(x, y, c)] = to_u8(acc);
            }
        }
    }
    out
}
