use std::path::Path;

use image::{DynamicImage, ImageFormat, Rgb, RgbImage};
use ndarray::{Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{PottsError, Result};
use crate::graph::GridGeometry;
use crate::io::write_bytes_atomic;
use crate::region::{
    image_probabilities, kmeans_centroids, region_force_l2, region_force_linear, region_force_log,
    CentroidSet, ForceKind, RegionForceMatrix, DEFAULT_DELTA,
};
use crate::solver::{solve, SolverConfig, SolverReport, TvBackend, TvFlavor};

/// Row-major image with interleaved channels, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    /// Values are clamped into `[0, 1]`; NaN is rejected.
    pub fn new(width: usize, height: usize, channels: usize, mut data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(PottsError::invalid(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(PottsError::invalid(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        crate::error::check_len("image data", width * height * channels, data.len())?;
        if data.iter().any(|v| v.is_nan()) {
            return Err(PottsError::invalid("NaN in image data"));
        }
        for v in &mut data {
            *v = v.clamp(0.0, 1.0);
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry {
            width: self.width,
            height: self.height,
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let start = (y * self.width + x) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// One row per pixel, one column per channel.
    pub fn colors(&self) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((self.width * self.height, self.channels), &self.data)
            .expect("length checked at construction")
    }

    pub fn channel(&self, c: usize) -> Vec<f64> {
        self.data
            .iter()
            .skip(c)
            .step_by(self.channels)
            .copied()
            .collect()
    }
}

fn image_err(path: &Path, message: impl ToString) -> PottsError {
    PottsError::Image {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Reads PNG, PPM (P6) or PGM (P5). Gray images get one channel, everything
/// else three (alpha dropped). Samples are divided by the format maximum.
pub fn load_image(path: &Path) -> Result<Image> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| PottsError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| PottsError::io(path, e))?;
    let img = reader.decode().map_err(|e| image_err(path, e))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = !img.color().has_color();
    let sixteen = img.color().bytes_per_pixel() / img.color().channel_count() > 1;
    let data: Vec<f64> = match (gray, sixteen) {
        (true, false) => img
            .to_luma8()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
        (true, true) => img
            .to_luma16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        (false, false) => img
            .to_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
        (false, true) => img
            .to_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
    };
    Image::new(w, h, if gray { 1 } else { 3 }, data)
}

fn to_u8(v: f64) -> u8 {
    (v * 255.0).round().clamp(0.0, 255.0) as u8
}

fn encode_png(img: DynamicImage, path: &Path) -> Result<()> {
    let mut buf = std::io::Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| image_err(path, e))?;
    write_bytes_atomic(path, buf.get_ref())
}

/// Writes an 8-bit PNG (gray or RGB).
pub fn save_image(img: &Image, path: &Path) -> Result<()> {
    let bytes: Vec<u8> = img.data.iter().map(|&v| to_u8(v)).collect();
    let (w, h) = (img.width as u32, img.height as u32);
    let dynamic = if img.channels == 1 {
        DynamicImage::ImageLuma8(image::GrayImage::from_raw(w, h, bytes).expect("sized"))
    } else {
        DynamicImage::ImageRgb8(RgbImage::from_raw(w, h, bytes).expect("sized"))
    };
    encode_png(dynamic, path)
}

const PALETTE: [[u8; 3]; 20] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
    [188, 189, 34],
    [23, 190, 207],
    [174, 199, 232],
    [255, 187, 120],
    [152, 223, 138],
    [255, 152, 150],
    [197, 176, 213],
    [196, 156, 148],
    [247, 182, 210],
    [199, 199, 199],
    [219, 219, 141],
    [158, 218, 229],
];

/// Largest class count a label map can encode.
pub const MAX_LABEL_CLASSES: usize = PALETTE.len() + (1 << 16);

/// Color of class `k`. The first twenty are a fixed qualitative palette
/// (all with a nonzero blue channel); later classes encode `k - 20` in the
/// red and green bytes with blue zero, so every class color is distinct.
pub fn palette_color(k: usize) -> [u8; 3] {
    if k < PALETTE.len() {
        PALETTE[k]
    } else {
        let j = k - PALETTE.len();
        [(j >> 8) as u8, (j & 0xff) as u8, 0]
    }
}

fn palette_index(c: [u8; 3]) -> Option<usize> {
    if c[2] == 0 {
        return Some(PALETTE.len() + ((c[0] as usize) << 8 | c[1] as usize));
    }
    PALETTE.iter().position(|p| *p == c)
}

/// Renders labels with [`palette_color`] and writes a PNG atomically.
pub fn save_label_map(labels: &[usize], k: usize, geom: GridGeometry, path: &Path) -> Result<()> {
    crate::error::check_len("label map", geom.n_pixels(), labels.len())?;
    if k > MAX_LABEL_CLASSES {
        return Err(PottsError::invalid(format!(
            "label maps support at most {MAX_LABEL_CLASSES} classes"
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(PottsError::invalid(format!(
            "label {bad} out of range for K={k}"
        )));
    }
    let mut img = RgbImage::new(geom.width as u32, geom.height as u32);
    for (p, &l) in labels.iter().enumerate() {
        img.put_pixel(
            (p % geom.width) as u32,
            (p / geom.width) as u32,
            Rgb(palette_color(l)),
        );
    }
    encode_png(DynamicImage::ImageRgb8(img), path)
}

/// Inverse of [`save_label_map`].
pub fn load_label_map(path: &Path) -> Result<(Vec<usize>, GridGeometry)> {
    let img = image::ImageReader::open(path)
        .map_err(|e| PottsError::io(path, e))?
        .with_guessed_format()
        .map_err(|e| PottsError::io(path, e))?
        .decode()
        .map_err(|e| image_err(path, e))?
        .to_rgb8();
    let geom = GridGeometry::new(img.width() as usize, img.height() as usize)?;
    let labels = img
        .pixels()
        .map(|p| {
            palette_index(p.0)
                .ok_or_else(|| image_err(path, format!("color {:?} is not a palette color", p.0)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((labels, geom))
}

/// Writes each class column of `phi` as an 8-bit PGM, `{prefix}_{k}.pgm`.
pub fn save_phi_pgm(phi: ArrayView2<'_, f64>, geom: GridGeometry, prefix: &Path) -> Result<()> {
    crate::error::check_len("phi rows", geom.n_pixels(), phi.nrows())?;
    for (k, col) in phi.columns().into_iter().enumerate() {
        let mut bytes = format!("P5\n{} {}\n255\n", geom.width, geom.height).into_bytes();
        bytes.extend(col.iter().map(|&v| to_u8(v)));
        let mut name = prefix.as_os_str().to_owned();
        name.push(format!("_{k}.pgm"));
        write_bytes_atomic(Path::new(&name), &bytes)?;
    }
    Ok(())
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian smoothing with radius `ceil(3σ)` and replicated
/// borders. `σ = 0` returns the input.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(PottsError::invalid(format!(
            "blur sigma must be nonnegative, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let kernel = gaussian_kernel(sigma);
    let r = (kernel.len() / 2) as isize;
    let (w, h, ch) = (img.width as isize, img.height as isize, img.channels);
    let at = |x: isize, y: isize| ((y * w + x) as usize) * ch;

    let mut tmp = vec![0.0; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            for (t, &kv) in kernel.iter().enumerate() {
                let xs = (x + t as isize - r).clamp(0, w - 1);
                for c in 0..ch {
                    tmp[at(x, y) + c] += kv * img.data[at(xs, y) + c];
                }
            }
        }
    }
    let mut out = vec![0.0; img.data.len()];
    for y in 0..h {
        for x in 0..w {
            for (t, &kv) in kernel.iter().enumerate() {
                let ys = (y + t as isize - r).clamp(0, h - 1);
                for c in 0..ch {
                    out[at(x, y) + c] += kv * tmp[at(x, ys) + c];
                }
            }
        }
    }
    Image::new(img.width, img.height, img.channels, out)
}

/// Per-pixel TV weight `α(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeDetectorField(Vec<f64>);

impl EdgeDetectorField {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// `α = β / (1 + γ s² |∇I_σ|²)` with forward differences (zero at the
/// last row and column) summed over channels. `gradient_scale` (`s`) lets
/// intensities be measured on another range, e.g. 255.
pub fn edge_detector(
    img: &Image,
    beta: f64,
    gamma: f64,
    sigma: f64,
    gradient_scale: f64,
) -> Result<EdgeDetectorField> {
    if !(beta > 0.0 && beta.is_finite()) {
        return Err(PottsError::invalid(format!(
            "edge detector beta must be positive, got {beta}"
        )));
    }
    if !(gamma >= 0.0 && gamma.is_finite()) {
        return Err(PottsError::invalid(format!(
            "edge detector gamma must be nonnegative, got {gamma}"
        )));
    }
    if !(gradient_scale > 0.0 && gradient_scale.is_finite()) {
        return Err(PottsError::invalid(format!(
            "gradient scale must be positive, got {gradient_scale}"
        )));
    }
    let smooth = gaussian_blur(img, sigma)?;
    let (w, h, ch) = (img.width, img.height, img.channels);
    let s2 = gradient_scale * gradient_scale;
    let mut alpha = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let here = smooth.pixel(x, y);
            let mut g2 = 0.0;
            for c in 0..ch {
                let gx = if x + 1 < w {
                    smooth.pixel(x + 1, y)[c] - here[c]
                } else {
                    0.0
                };
                let gy = if y + 1 < h {
                    smooth.pixel(x, y + 1)[c] - here[c]
                } else {
                    0.0
                };
                g2 += gx * gx + gy * gy;
            }
            alpha.push(beta / (1.0 + gamma * s2 * g2));
        }
    }
    Ok(EdgeDetectorField(alpha))
}

/// Pipeline parameters for [`segment_image`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentParams {
    /// Edge-detector `β`.
    pub beta: f64,
    /// Edge-detector `γ`.
    pub gamma: f64,
    /// Smoothing applied before the edge-detector gradient.
    pub edge_sigma: f64,
    pub gradient_scale: f64,
    /// Standard deviation of the color model.
    pub prob_sigma: f64,
    /// Use `|I - c|²` in the color model exponent.
    pub squared_distance: bool,
    pub delta: f64,
    pub rng_seed: u64,
}

impl Default for SegmentParams {
    fn default() -> Self {
        SegmentParams {
            beta: 0.6,
            gamma: 50.0,
            edge_sigma: 0.0,
            gradient_scale: 1.0,
            prob_sigma: 1.0,
            squared_distance: false,
            delta: DEFAULT_DELTA,
            rng_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub labels: Vec<usize>,
    pub phi: Array2<f64>,
    pub centroids: CentroidSet,
    pub alpha: EdgeDetectorField,
    pub report: SolverReport,
}

/// Region forces for the given kind from pixel colors and centroids.
pub fn image_region_force(
    colors: ArrayView2<'_, f64>,
    centroids: &CentroidSet,
    kind: ForceKind,
    params: &SegmentParams,
) -> Result<RegionForceMatrix> {
    match kind {
        ForceKind::L2 => region_force_l2(colors, centroids),
        ForceKind::Log => {
            let p = image_probabilities(
                colors,
                centroids,
                params.prob_sigma,
                params.squared_distance,
            )?;
            region_force_log(&p, params.delta)
        }
        ForceKind::Linear => {
            let p = image_probabilities(
                colors,
                centroids,
                params.prob_sigma,
                params.squared_distance,
            )?;
            Ok(region_force_linear(&p))
        }
    }
}

/// k-means centroids, region forces, edge detector, then a grid solve.
pub fn segment_image(
    img: &Image,
    k: usize,
    kind: ForceKind,
    params: &SegmentParams,
    config: &SolverConfig,
) -> Result<Segmentation> {
    if k < 2 {
        return Err(PottsError::invalid(format!(
            "segmentation needs K >= 2, got {k}"
        )));
    }
    let centroids = kmeans_centroids(img.colors(), k, params.rng_seed)?;
    segment_with_centroids(img, centroids, kind, params, config)
}

/// [`segment_image`] with caller-supplied centroids.
pub fn segment_with_centroids(
    img: &Image,
    centroids: CentroidSet,
    kind: ForceKind,
    params: &SegmentParams,
    config: &SolverConfig,
) -> Result<Segmentation> {
    if config.tv_flavor != TvFlavor::IsotropicGrid {
        return Err(PottsError::Config(
            "image segmentation uses the isotropic-grid TV flavor".into(),
        ));
    }
    let forces = image_region_force(img.colors(), &centroids, kind, params)?;
    let alpha = edge_detector(
        img,
        params.beta,
        params.gamma,
        params.edge_sigma,
        params.gradient_scale,
    )?;
    let solution = solve(
        &forces,
        alpha.values(),
        &TvBackend::Grid(img.geometry()),
        config,
    )?;
    Ok(Segmentation {
        labels: solution.labels(),
        phi: solution.phi,
        centroids,
        alpha,
        report: solution.report,
    })
}

/// Best accuracy over all relabelings of `predicted` (exhaustive `K!`).
pub fn permutation_accuracy(predicted: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    crate::error::check_len("label vectors", truth.len(), predicted.len())?;
    if k > 9 {
        return Err(PottsError::invalid(
            "exhaustive matching is limited to K <= 9",
        ));
    }
    if predicted.iter().chain(truth).any(|&l| l >= k) {
        return Err(PottsError::invalid(format!("label out of range for K={k}")));
    }
    if truth.is_empty() {
        return Ok(1.0);
    }
    let mut confusion = vec![vec![0usize; k]; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        confusion[p][t] += 1;
    }
    fn search(confusion: &[Vec<usize>], row: usize, used: &mut Vec<bool>) -> usize {
        if row == confusion.len() {
            return 0;
        }
        let mut best = 0;
        for t in 0..confusion.len() {
            if !used[t] {
                used[t] = true;
                best = best.max(confusion[row][t] + search(confusion, row + 1, used));
                used[t] = false;
            }
        }
        best
    }
    let hits = search(&confusion, 0, &mut vec![false; k]);
    Ok(hits as f64 / truth.len() as f64)
}

/// Four-quadrant RGB test image with additive Gaussian noise. Quadrant
/// labels are 0 (top left), 1 (top right), 2 (bottom left), 3 (bottom right).
pub fn quadrant_image(size: usize, noise_sigma: f64, rng_seed: u64) -> Result<(Image, Vec<usize>)> {
    const COLORS: [[f64; 3]; 4] = [
        [0.9, 0.15, 0.1],
        [0.1, 0.75, 0.2],
        [0.15, 0.2, 0.9],
        [0.9, 0.85, 0.25],
    ];
    let half = size / 2;
    synthetic_image(size, size, &COLORS, noise_sigma, rng_seed, |x, y| {
        usize::from(x >= half) + 2 * usize::from(y >= half)
    })
}

/// Left half dark, right half light.
pub fn two_tone_image(
    width: usize,
    height: usize,
    noise_sigma: f64,
    rng_seed: u64,
) -> Result<(Image, Vec<usize>)> {
    const COLORS: [[f64; 3]; 2] = [[0.2, 0.2, 0.2], [0.8, 0.8, 0.8]];
    let half = width / 2;
    synthetic_image(width, height, &COLORS, noise_sigma, rng_seed, |x, _| {
        usize::from(x >= half)
    })
}

fn synthetic_image(
    width: usize,
    height: usize,
    colors: &[[f64; 3]],
    noise_sigma: f64,
    rng_seed: u64,
    region: impl Fn(usize, usize) -> usize,
) -> Result<(Image, Vec<usize>)> {
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(PottsError::invalid(format!(
            "noise sigma must be nonnegative, got {noise_sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let noise = Normal::new(0.0, noise_sigma).expect("checked sigma");
    let mut data = Vec::with_capacity(width * height * 3);
    let mut truth = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let r = region(x, y);
            truth.push(r);
            for &c in &colors[r] {
                let n = if noise_sigma > 0.0 {
                    noise.sample(&mut rng)
                } else {
                    0.0
                };
                data.push(c + n);
            }
        }
    }
    Ok((Image::new(width, height, 3, data)?, truth))
}
