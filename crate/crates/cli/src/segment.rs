//! Color segmentation and pixelation.

use std::collections::BTreeMap;

use capanneal_core::metrics::nearest;
use capanneal_core::{anneal, AnnealConfig, CapacitySpec, Dataset, Error, SolveReport};
use ndarray::Array2;
use serde::Serialize;

use crate::error::Result;
use crate::ppm::RgbImage;

/// Summary of a segmentation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentReport {
    pub width: usize,
    pub height: usize,
    pub k: usize,
    pub distinct_colors: usize,
    pub output_colors: usize,
    /// Distortion in the unit color cube.
    pub distortion: f64,
    pub palette: Vec<[u8; 3]>,
    /// Pixels per palette entry: `N / K`.
    pub palette_compression: f64,
    /// `3N` bytes against a `3K`-byte palette plus a `⌈log₂ K⌉`-bit index
    /// per pixel.
    pub indexed_compression: f64,
    pub converged: bool,
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    pub image: RgbImage,
    pub palette: Vec<[u8; 3]>,
    pub report: SegmentReport,
    pub solve: SolveReport,
}

/// Distinct colors of an image as a weighted dataset in `[0, 1]³`, in
/// ascending color order, with pixel counts as weights.
pub fn color_dataset(img: &RgbImage) -> Result<(Dataset, Vec<[u8; 3]>)> {
    let mut counts: BTreeMap<[u8; 3], usize> = BTreeMap::new();
    for px in &img.pixels {
        *counts.entry(*px).or_default() += 1;
    }
    let colors: Vec<[u8; 3]> = counts.keys().copied().collect();
    let rows: Vec<Vec<f64>> = colors
        .iter()
        .map(|c| c.iter().map(|&v| f64::from(v) / 255.0).collect())
        .collect();
    let weights = counts.values().map(|&n| n as f64).collect();
    Ok((Dataset::from_rows(&rows, Some(weights))?, colors))
}

fn to_rgb(y: ndarray::ArrayView1<f64>) -> [u8; 3] {
    let c = |v: f64| (v * 255.0).round().clamp(0.0, 255.0) as u8;
    [c(y[0]), c(y[1]), c(y[2])]
}

fn palette_dataset(palette: &[[u8; 3]]) -> Array2<f64> {
    Array2::from_shape_fn((palette.len(), 3), |(j, c)| f64::from(palette[j][c]) / 255.0)
}

fn nearest_color(palette: &Array2<f64>, rgb: [f64; 3]) -> usize {
    let mut best = (0, f64::INFINITY);
    for (j, y) in palette.outer_iter().enumerate() {
        let d: f64 = (0..3).map(|c| (rgb[c] - y[c]).powi(2)).sum();
        if d < best.1 {
            best = (j, d);
        }
    }
    best.0
}

/// Segments an image into `k` colors with an unconstrained anneal in color
/// space. With `pixelate = Some((w, h))` the output is a `w × h` image of
/// block averages snapped to the palette.
pub fn segment_image(
    img: &RgbImage,
    k: usize,
    cfg: &AnnealConfig,
    pixelate: Option<(usize, usize)>,
) -> Result<Segmentation> {
    let (ds, colors) = color_dataset(img)?;
    if k > colors.len() {
        return Err(Error::TooManyClusters { k, n: colors.len() }.into());
    }
    let solve = anneal(&ds, k, &CapacitySpec::None, cfg)?;
    let locations = &solve.final_state.locations;
    let palette: Vec<[u8; 3]> = locations.outer_iter().map(to_rgb).collect();

    let lookup: BTreeMap<[u8; 3], [u8; 3]> = colors
        .iter()
        .enumerate()
        .map(|(i, &c)| (c, palette[nearest(&ds, locations.view(), i).0]))
        .collect();
    let image = match pixelate {
        None => RgbImage::new(img.width, img.height, img.pixels.iter().map(|p| lookup[p]).collect())?,
        Some((w, h)) => pixelate_image(img, &palette, w, h)?,
    };

    let distinct: std::collections::BTreeSet<[u8; 3]> = image.pixels.iter().copied().collect();
    let n = img.pixels.len() as f64;
    let index_bits = (k as f64).log2().ceil();
    let report = SegmentReport {
        width: image.width,
        height: image.height,
        k,
        distinct_colors: colors.len(),
        output_colors: distinct.len(),
        distortion: solve.distortion,
        palette: palette.clone(),
        palette_compression: n / k as f64,
        indexed_compression: 3.0 * n / (3.0 * k as f64 + n * index_bits / 8.0),
        converged: solve.converged,
    };
    Ok(Segmentation {
        image,
        palette,
        report,
        solve,
    })
}

/// Averages the image over a `w × h` grid of blocks and replaces each block
/// by the nearest palette color.
pub fn pixelate_image(img: &RgbImage, palette: &[[u8; 3]], w: usize, h: usize) -> Result<RgbImage> {
    if w == 0 || h == 0 || w > img.width || h > img.height {
        return Err(crate::error::CliError::Usage(format!(
            "cannot pixelate a {}x{} image to {w}x{h}",
            img.width, img.height
        )));
    }
    let pal = palette_dataset(palette);
    let mut out = Vec::with_capacity(w * h);
    for by in 0..h {
        let (y0, y1) = (by * img.height / h, (by + 1) * img.height / h);
        for bx in 0..w {
            let (x0, x1) = (bx * img.width / w, (bx + 1) * img.width / w);
            let mut sum = [0.0; 3];
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = img.pixel(x, y);
                    for c in 0..3 {
                        sum[c] += f64::from(p[c]);
                    }
                }
            }
            let count = ((y1 - y0) * (x1 - x0)) as f64;
            let mean = sum.map(|s| s / count / 255.0);
            out.push(palette[nearest_color(&pal, mean)]);
        }
    }
    RgbImage::new(w, h, out)
}
