//! Grayscale image buffers, PNG I/O, 2x mean-pool downsampling, and the
//! patch grid used by both the low-resolution input and high-resolution
//! target streams.

use std::path::Path;

use crate::error::{Error, Result};

/// Pixel intensities in [0,1], row-major `[height][width][channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub data: Vec<f32>,
}

impl Image {
    pub fn new(height: usize, width: usize, channels: usize) -> Self {
        Image { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    pub fn from_data(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::Dimension(format!(
                "image data length {} does not match {}x{}x{}",
                data.len(),
                height,
                width,
                channels
            )));
        }
        Ok(Image { height, width, channels, data })
    }

    #[inline]
    pub fn at(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn at_mut(&mut self, y: usize, x: usize, c: usize) -> &mut f32 {
        &mut self.data[(y * self.width + x) * self.channels + c]
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Check that every pixel lies in [0,1].
    pub fn validate_range(&self) -> Result<()> {
        if let Some(v) = self.data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!("pixel value {v} outside [0,1]")));
        }
        Ok(())
    }
}

/// Load an 8- or 16-bit grayscale PNG, rescaling intensities to [0,1].
pub fn load_png(path: &Path) -> Result<Image> {
    let dynimg = image::open(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    match dynimg {
        image::DynamicImage::ImageLuma8(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            let data = img.into_raw().iter().map(|&v| v as f32 / 255.0).collect();
            Image::from_data(h, w, 1, data)
        }
        image::DynamicImage::ImageLuma16(img) => {
            let (w, h) = (img.width() as usize, img.height() as usize);
            let data = img.into_raw().iter().map(|&v| v as f32 / 65535.0).collect();
            Image::from_data(h, w, 1, data)
        }
        other => Err(Error::Validation(format!(
            "{}: expected 8- or 16-bit grayscale PNG, got {:?}",
            path.display(),
            other.color()
        ))),
    }
}

/// Write a single-channel image as an 8-bit grayscale PNG.
pub fn save_png(path: &Path, img: &Image) -> Result<()> {
    if img.channels != 1 {
        return Err(Error::Validation(format!(
            "PNG output supports 1 channel, image has {}",
            img.channels
        )));
    }
    let bytes: Vec<u8> = img
        .data
        .iter()
        .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let buf = image::GrayImage::from_raw(img.width as u32, img.height as u32, bytes)
        .ok_or_else(|| Error::Internal("image buffer size mismatch".into()))?;
    buf.save(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

/// 2x2 mean-pool downsampling. Preserves the global mean and keeps values in [0,1].
pub fn downsample(img: &Image) -> Result<Image> {
    if img.height % 2 != 0 || img.width % 2 != 0 {
        return Err(Error::Dimension(format!(
            "downsample needs even dimensions, got {}x{}",
            img.height, img.width
        )));
    }
    let (h, w, c) = (img.height / 2, img.width / 2, img.channels);
    let mut out = Image::new(h, w, c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                let s = img.at(2 * y, 2 * x, ch)
                    + img.at(2 * y, 2 * x + 1, ch)
                    + img.at(2 * y + 1, 2 * x, ch)
                    + img.at(2 * y + 1, 2 * x + 1, ch);
                *out.at_mut(y, x, ch) = s * 0.25;
            }
        }
    }
    Ok(out)
}

/// Non-overlapping patch grid shared by the low- and high-resolution streams.
/// Cell (r, c) maps to flat index `r * grid_cols + c` in both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// Low-resolution patch side in pixels.
    pub patch_size: usize,
    /// High-resolution target patch side (2x the input patch).
    pub target_patch_size: usize,
}

impl PatchGrid {
    pub fn for_image(height: usize, width: usize, patch_size: usize) -> Result<Self> {
        if patch_size == 0 || height % patch_size != 0 || width % patch_size != 0 {
            return Err(Error::Dimension(format!(
                "patch size {patch_size} does not divide {height}x{width}"
            )));
        }
        Ok(PatchGrid {
            grid_rows: height / patch_size,
            grid_cols: width / patch_size,
            patch_size,
            target_patch_size: 2 * patch_size,
        })
    }

    pub fn num_patches(&self) -> usize {
        self.grid_rows * self.grid_cols
    }

    pub fn cell(&self, index: usize) -> (usize, usize) {
        (index / self.grid_cols, index % self.grid_cols)
    }
}

/// Split an image into non-overlapping `p x p` patch vectors of length
/// `p*p*channels`, in row-major grid order.
pub fn patchify(img: &Image, patch_size: usize) -> Result<Vec<Vec<f32>>> {
    let grid = PatchGrid::for_image(img.height, img.width, patch_size)?;
    let p = patch_size;
    let c = img.channels;
    let mut patches = Vec::with_capacity(grid.num_patches());
    for gr in 0..grid.grid_rows {
        for gc in 0..grid.grid_cols {
            let mut patch = Vec::with_capacity(p * p * c);
            for py in 0..p {
                for px in 0..p {
                    for ch in 0..c {
                        patch.push(img.at(gr * p + py, gc * p + px, ch));
                    }
                }
            }
            patches.push(patch);
        }
    }
    Ok(patches)
}

/// Inverse of [`patchify`].
pub fn unpatchify(
    patches: &[Vec<f32>],
    grid_rows: usize,
    grid_cols: usize,
    patch_size: usize,
    channels: usize,
) -> Result<Image> {
    if patches.len() != grid_rows * grid_cols {
        return Err(Error::Dimension(format!(
            "{} patches do not fill a {}x{} grid",
            patches.len(),
            grid_rows,
            grid_cols
        )));
    }
    let p = patch_size;
    let mut img = Image::new(grid_rows * p, grid_cols * p, channels);
    for (j, patch) in patches.iter().enumerate() {
        if patch.len() != p * p * channels {
            return Err(Error::Dimension(format!(
                "patch {j} has {} values, expected {}",
                patch.len(),
                p * p * channels
            )));
        }
        let (gr, gc) = (j / grid_cols, j % grid_cols);
        for py in 0..p {
            for px in 0..p {
                for ch in 0..channels {
                    *img.at_mut(gr * p + py, gc * p + px, ch) = patch[(py * p + px) * channels + ch];
                }
            }
        }
    }
    Ok(img)
}

/// Nearest-neighbour 2x upscale, used when composing reconstruction panels.
pub fn upscale_nearest_2x(img: &Image) -> Image {
    let mut out = Image::new(img.height * 2, img.width * 2, img.channels);
    for y in 0..out.height {
        for x in 0..out.width {
            for ch in 0..img.channels {
                *out.at_mut(y, x, ch) = img.at(y / 2, x / 2, ch);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn downsample_2x2_mean() {
        let img = Image::from_data(2, 2, 1, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let out = downsample(&img).unwrap();
        assert_eq!(out.data, vec![0.5]);
    }

    #[test]
    fn downsample_constant_stays_constant() {
        let img = Image::from_data(4, 4, 1, vec![0.25; 16]).unwrap();
        let out = downsample(&img).unwrap();
        assert_eq!(out.height, 2);
        assert_eq!(out.width, 2);
        assert!(out.data.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn downsample_448_to_224() {
        let img = Image::new(448, 448, 1);
        let out = downsample(&img).unwrap();
        assert_eq!((out.height, out.width), (224, 224));
    }

    #[test]
    fn downsample_rejects_odd() {
        let img = Image::new(3, 4, 1);
        assert!(matches!(downsample(&img), Err(Error::Dimension(_))));
    }

    #[test]
    fn downsample_preserves_global_mean() {
        let mut img = Image::new(8, 8, 1);
        for (i, v) in img.data.iter_mut().enumerate() {
            *v = (i as f32 * 37.0 % 101.0) / 101.0;
        }
        let out = downsample(&img).unwrap();
        assert!((img.mean() - out.mean()).abs() < 1e-6);
    }

    #[test]
    fn patchify_shapes() {
        let img = Image::new(4, 4, 1);
        let patches = patchify(&img, 2).unwrap();
        assert_eq!(patches.len(), 4);
        assert!(patches.iter().all(|p| p.len() == 4));

        let img = Image::new(224, 224, 1);
        let patches = patchify(&img, 16).unwrap();
        assert_eq!(patches.len(), 196);
        assert!(patches.iter().all(|p| p.len() == 256));
    }

    #[test]
    fn patchify_rejects_nondivisible() {
        let img = Image::new(5, 4, 1);
        assert!(matches!(patchify(&img, 2), Err(Error::Dimension(_))));
    }

    #[test]
    fn patch_grid_indexing_row_major() {
        let grid = PatchGrid::for_image(8, 12, 4).unwrap();
        assert_eq!((grid.grid_rows, grid.grid_cols), (2, 3));
        assert_eq!(grid.cell(0), (0, 0));
        assert_eq!(grid.cell(4), (1, 1));
        assert_eq!(grid.target_patch_size, 8);
    }

    proptest! {
        #[test]
        fn patchify_unpatchify_roundtrip(seed in 0u64..1000) {
            let mut img = Image::new(32, 32, 1);
            let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
            for v in img.data.iter_mut() {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                *v = (state >> 40) as f32 / (1u64 << 24) as f32;
            }
            let patches = patchify(&img, 4).unwrap();
            let back = unpatchify(&patches, 8, 8, 4, 1).unwrap();
            prop_assert_eq!(back.data, img.data);
        }
    }
}
