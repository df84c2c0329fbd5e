//! Labeled image directories: `root/<class_name>/*.png`.

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use super::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// A decoded image, channels-first, values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    /// Replicates a single channel into RGB.
    fn to_rgb(&self) -> Image {
        if self.channels == 3 {
            return self.clone();
        }
        let mut data = Vec::with_capacity(self.data.len() * 3);
        for _ in 0..3 {
            data.extend_from_slice(&self.data);
        }
        Image { channels: 3, data, ..*self }
    }
}

pub fn decode_png(path: &Path) -> Result<Image> {
    let fail = |message: String| Error::Decode { path: path.to_path_buf(), message };
    let file = fs::File::open(path).map_err(|e| fail(e.to_string()))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::normalize_to_color8());
    let mut reader = decoder.read_info().map_err(|e| fail(e.to_string()))?;
    let size = reader.output_buffer_size().ok_or_else(|| fail("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let info = reader.next_frame(&mut buf).map_err(|e| fail(e.to_string()))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let (src_channels, out_channels) = match info.color_type {
        png::ColorType::Grayscale => (1, 1),
        png::ColorType::GrayscaleAlpha => (2, 1),
        png::ColorType::Rgb => (3, 3),
        png::ColorType::Rgba => (4, 3),
        other => return Err(fail(format!("unsupported color type {other:?}"))),
    };
    let mut data = vec![0.0; out_channels * h * w];
    for y in 0..h {
        let line = &buf[y * info.line_size..];
        for x in 0..w {
            for c in 0..out_channels {
                data[(c * h + y) * w + x] = line[x * src_channels + c] as f64 / 255.0;
            }
        }
    }
    Ok(Image { channels: out_channels, height: h, width: w, data })
}

/// Writes an 8-bit grayscale or RGB PNG from channels-first `[0, 1]` data.
pub fn write_png(path: &Path, image: &Image) -> Result<()> {
    let color = match image.channels {
        1 => png::ColorType::Grayscale,
        3 => png::ColorType::Rgb,
        c => return Err(Error::Validation(format!("cannot write {c}-channel PNG"))),
    };
    let (h, w) = (image.height, image.width);
    let mut pixels = vec![0u8; h * w * image.channels];
    for y in 0..h {
        for x in 0..w {
            for c in 0..image.channels {
                let v = image.data[(c * h + y) * w + x].clamp(0.0, 1.0);
                pixels[(y * w + x) * image.channels + c] = (v * 255.0).round() as u8;
            }
        }
    }
    let file = BufWriter::new(fs::File::create(path)?);
    let mut encoder = png::Encoder::new(file, w as u32, h as u32);
    encoder.set_color(color);
    encoder.set_depth(png::BitDepth::Eight);
    let encode_err = |e: png::EncodingError| Error::Decode { path: path.to_path_buf(), message: e.to_string() };
    let mut writer = encoder.write_header().map_err(encode_err)?;
    writer.write_image_data(&pixels).map_err(encode_err)?;
    writer.finish().map_err(encode_err)?;
    Ok(())
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn resize_bilinear(image: &Image, height: usize, width: usize) -> Image {
    if image.height == height && image.width == width {
        return image.clone();
    }
    let taps = |out: usize, input: usize| -> Vec<(usize, usize, f64)> {
        let scale = input as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (input - 1) as f64);
                let lo = src.floor() as usize;
                let hi = (lo + 1).min(input - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let ys = taps(height, image.height);
    let xs = taps(width, image.width);
    let (ih, iw) = (image.height, image.width);
    let mut data = Vec::with_capacity(image.channels * height * width);
    for c in 0..image.channels {
        let plane = &image.data[c * ih * iw..(c + 1) * ih * iw];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * iw + x0] * (1.0 - fx) + plane[y0 * iw + x1] * fx;
                let bottom = plane[y1 * iw + x0] * (1.0 - fx) + plane[y1 * iw + x1] * fx;
                data.push(top * (1.0 - fy) + bottom * fy);
            }
        }
    }
    Image { channels: image.channels, height, width, data }
}

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut entries = fs::read_dir(dir)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<Vec<_>>>()?;
    entries.sort();
    Ok(entries)
}

/// Loads one class per subdirectory (lexicographic order). Images are resized
/// to `target` (`H×W`); if any image has color, grayscale ones are replicated
/// to three channels.
pub fn load_image_dir(root: impl AsRef<Path>, target: (usize, usize)) -> Result<LabeledDataset> {
    let root = root.as_ref();
    let (th, tw) = target;
    if th == 0 || tw == 0 {
        return Err(Error::Validation(format!("target size {th}×{tw} has a zero extent")));
    }
    let class_dirs: Vec<PathBuf> = sorted_entries(root)?.into_iter().filter(|p| p.is_dir()).collect();
    if class_dirs.len() < 2 {
        return Err(Error::Validation(format!(
            "{} holds {} class directories, need at least 2",
            root.display(),
            class_dirs.len()
        )));
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    let mut names = Vec::new();
    for (label, dir) in class_dirs.iter().enumerate() {
        let files: Vec<PathBuf> = sorted_entries(dir)?
            .into_iter()
            .filter(|p| {
                p.is_file() && p.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"))
            })
            .collect();
        if files.is_empty() {
            return Err(Error::Validation(format!("class directory {} holds no PNG images", dir.display())));
        }
        for f in files {
            images.push(resize_bilinear(&decode_png(&f)?, th, tw));
            labels.push(label);
        }
        names.push(dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
    }
    let channels = if images.iter().any(|i| i.channels == 3) { 3 } else { 1 };
    let mut data = Vec::with_capacity(images.len() * channels * th * tw);
    for img in &images {
        if channels == 3 {
            data.extend_from_slice(&img.to_rgb().data);
        } else {
            data.extend_from_slice(&img.data);
        }
    }
    let tensor = Tensor::new(vec![images.len(), channels, th, tw], data)?;
    LabeledDataset::new(tensor, labels, names)
}
