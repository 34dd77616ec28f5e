//! View-grid directories: `view_{row:02}_{col:02}.png` files plus a
//! `grid.json` manifest.

use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageFormat};
use serde::{Deserialize, Serialize};

use super::{LightFieldGrid, ViewImage};
use crate::error::{Error, Result};
use crate::par;

pub const MANIFEST: &str = "grid.json";

/// Shape of a view grid as recorded in `grid.json`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    pub vx: usize,
    pub vy: usize,
    pub width: usize,
    pub height: usize,
    pub channels: usize,
}

impl GridLayout {
    pub fn of(grid: &LightFieldGrid) -> Self {
        Self {
            vx: grid.vx(),
            vy: grid.vy(),
            width: grid.width(),
            height: grid.height(),
            channels: grid.channels(),
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        read_json(&dir.join(MANIFEST))
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(MANIFEST), self)
    }
}

pub fn view_file_name(row: usize, col: usize, ext: &str) -> String {
    format!("view_{row:02}_{col:02}.{ext}")
}

/// Loads every view named by `layout` from `dir`.
pub fn load_light_field(dir: &Path, layout: &GridLayout) -> Result<LightFieldGrid> {
    let coords: Vec<(usize, usize)> = (0..layout.vy)
        .flat_map(|row| (0..layout.vx).map(move |col| (row, col)))
        .collect();
    // Presence is checked up front so the error names the first missing view
    // in scan order regardless of decode scheduling.
    for &(row, col) in &coords {
        let path = dir.join(view_file_name(row, col, "png"));
        if !path.is_file() {
            return Err(Error::MissingView { row, col, path });
        }
    }
    let views = par::map(&coords, |&(row, col)| {
        let path = dir.join(view_file_name(row, col, "png"));
        let view = load_png(&path)?;
        if view.width() != layout.width
            || view.height() != layout.height
            || view.channels() != layout.channels
        {
            return Err(Error::InconsistentView {
                found: format!("{}x{}x{}", view.width(), view.height(), view.channels()),
                expected: format!("{}x{}x{}", layout.width, layout.height, layout.channels),
                path,
            });
        }
        Ok(view)
    });
    let views = views.into_iter().collect::<Result<Vec<_>>>()?;
    LightFieldGrid::new(layout.vx, layout.vy, views)
}

/// Reads `grid.json` and loads the grid it describes.
pub fn load_grid_dir(dir: &Path) -> Result<LightFieldGrid> {
    let layout = GridLayout::read(dir)?;
    load_light_field(dir, &layout)
}

pub fn save_light_field(grid: &LightFieldGrid, dir: &Path) -> Result<()> {
    ensure_dir(dir)?;
    GridLayout::of(grid).write(dir)?;
    let coords = grid.coords();
    par::map(&coords, |c| {
        save_png(grid.view(c.i, c.j), &dir.join(view_file_name(c.j, c.i, "png")))
    })
    .into_iter()
    .collect()
}

/// Decodes an 8-bit (or wider) PNG into normalized samples (`v / 255` for 8-bit).
pub fn load_png(path: &Path) -> Result<ViewImage> {
    let img = image::open(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(from_dynamic(img))
}

pub fn decode_png(bytes: &[u8]) -> Result<ViewImage> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png).map_err(|source| {
        Error::Image {
            path: PathBuf::from("<memory>"),
            source,
        }
    })?;
    Ok(from_dynamic(img))
}

fn from_dynamic(img: DynamicImage) -> ViewImage {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let gray = matches!(
        img,
        DynamicImage::ImageLuma8(_) | DynamicImage::ImageLumaA8(_) | DynamicImage::ImageLuma16(_)
    );
    let data: Vec<f32> = if gray {
        img.to_luma8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect()
    } else {
        img.to_rgb8().into_raw().into_iter().map(|v| v as f32 / 255.0).collect()
    };
    let channels = if gray { 1 } else { 3 };
    ViewImage::from_data(w, h, channels, data).expect("decoded samples are in range")
}

/// Quantizes to 8 bits. Holes are written as black.
pub fn to_u8(view: &ViewImage) -> Vec<u8> {
    let c = view.channels();
    view.data()
        .chunks_exact(c)
        .zip(view.mask())
        .flat_map(|(px, valid)| {
            px.iter()
                .map(move |v| if *valid { (v.clamp(0.0, 1.0) * 255.0).round() as u8 } else { 0 })
        })
        .collect()
}

pub fn encode_png(view: &ViewImage) -> Vec<u8> {
    use image::codecs::png::{CompressionType, FilterType, PngEncoder};
    use image::{ExtendedColorType, ImageEncoder};

    let mut out = Vec::new();
    let color = if view.channels() == 1 {
        ExtendedColorType::L8
    } else {
        ExtendedColorType::Rgb8
    };
    PngEncoder::new_with_quality(Cursor::new(&mut out), CompressionType::Fast, FilterType::Sub)
        .write_image(&to_u8(view), view.width() as u32, view.height() as u32, color)
        .expect("in-memory PNG encoding cannot fail for consistent buffers");
    out
}

pub fn save_png(view: &ViewImage, path: &Path) -> Result<()> {
    fs::write(path, encode_png(view)).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}
