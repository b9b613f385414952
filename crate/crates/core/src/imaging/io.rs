//! On-disk formats.
//!
//! A stack is a directory holding one 16-bit grayscale PNG per channel, named
//! `ch<k>_<wavelength>nm.png`, and a `stack.json` sidecar with the band list.
//! Ground truth is an 8-bit indexed PNG (255 = unlabeled) next to a
//! `labels.json` map from class id to organ name. Calibration references are
//! two stacks under `dark/` and `white/`.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::stack::{Band, CalibrationPair, ChannelStack, GroundTruth};
use crate::error::{Error, Result};

pub const STACK_FORMAT: &str = "spectag-stack/1";
pub const STACK_SIDECAR: &str = "stack.json";
pub const UNLABELED: u8 = 255;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StackSidecar {
    pub format: String,
    pub width: usize,
    pub height: usize,
    pub channels: Vec<ChannelEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelEntry {
    pub index: usize,
    pub file: String,
    pub wavelength: f64,
    pub fwhm: f64,
}

pub fn channel_file_name(k: usize, wavelength: f64) -> String {
    format!("ch{k}_{wavelength}nm.png")
}

fn quantize(v: f64) -> u16 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Writes a stack with values in `[0, 1]` as 16-bit PNGs plus sidecar.
pub fn write_stack(dir: &Path, stack: &ChannelStack) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut channels = Vec::with_capacity(stack.channels());
    for (k, band) in stack.bands().iter().enumerate() {
        let file = channel_file_name(k, band.wavelength);
        let bytes: Vec<u8> = stack
            .channel(k)
            .iter()
            .flat_map(|&v| quantize(v).to_be_bytes())
            .collect();
        write_png(
            &dir.join(&file),
            stack.width(),
            stack.height(),
            png::ColorType::Grayscale,
            png::BitDepth::Sixteen,
            None,
            &bytes,
        )?;
        channels.push(ChannelEntry {
            index: k,
            file,
            wavelength: band.wavelength,
            fwhm: band.fwhm,
        });
    }
    let sidecar = StackSidecar {
        format: STACK_FORMAT.to_string(),
        width: stack.width(),
        height: stack.height(),
        channels,
    };
    write_json(&dir.join(STACK_SIDECAR), &sidecar)
}

/// Reads a stack written by [`write_stack`]; 16-bit counts map to `[0, 1]`.
pub fn read_stack(dir: &Path) -> Result<ChannelStack> {
    let sidecar_path = dir.join(STACK_SIDECAR);
    let sidecar: StackSidecar = read_json(&sidecar_path)?;
    if sidecar.format != STACK_FORMAT {
        return Err(Error::format(&sidecar_path, format!("unknown stack format {:?}", sidecar.format)));
    }
    let mut entries = sidecar.channels.clone();
    entries.sort_by_key(|c| c.index);
    let mut bands = Vec::with_capacity(entries.len());
    let mut data = Vec::with_capacity(entries.len());
    for entry in &entries {
        let path = dir.join(&entry.file);
        let img = read_png(&path)?;
        if img.width != sidecar.width || img.height != sidecar.height {
            return Err(Error::format(&path, "channel size differs from sidecar"));
        }
        let grid = match (img.color, img.depth) {
            (png::ColorType::Grayscale, png::BitDepth::Sixteen) => Array2::from_shape_fn(
                (img.height, img.width),
                |(y, x)| {
                    let i = 2 * (y * img.width + x);
                    u16::from_be_bytes([img.bytes[i], img.bytes[i + 1]]) as f64 / 65535.0
                },
            ),
            (png::ColorType::Grayscale, png::BitDepth::Eight) => {
                Array2::from_shape_fn((img.height, img.width), |(y, x)| {
                    img.bytes[y * img.width + x] as f64 / 255.0
                })
            }
            other => return Err(Error::format(&path, format!("unsupported channel encoding {other:?}"))),
        };
        bands.push(Band {
            wavelength: entry.wavelength,
            fwhm: entry.fwhm,
        });
        data.push(grid);
    }
    ChannelStack::new(bands, data)
}

pub fn write_calibration(dir: &Path, calib: &CalibrationPair) -> Result<()> {
    write_stack(&dir.join("dark"), &calib.dark)?;
    write_stack(&dir.join("white"), &calib.white)
}

pub fn read_calibration(dir: &Path) -> Result<CalibrationPair> {
    CalibrationPair::new(read_stack(&dir.join("dark"))?, read_stack(&dir.join("white"))?)
}

/// Writes the label PNG and, next to it, `labels.json`.
pub fn write_ground_truth(png_path: &Path, gt: &GroundTruth, class_names: &[String]) -> Result<()> {
    let bytes: Vec<u8> = gt.as_array().iter().map(|l| l.unwrap_or(UNLABELED)).collect();
    let palette: Vec<u8> = (0..=255u8)
        .flat_map(|i| {
            if i == UNLABELED {
                [0, 0, 0]
            } else {
                class_color(i as usize)
            }
        })
        .collect();
    write_png(
        png_path,
        gt.width(),
        gt.height(),
        png::ColorType::Indexed,
        png::BitDepth::Eight,
        Some(palette),
        &bytes,
    )?;
    let labels: BTreeMap<u8, &String> = class_names
        .iter()
        .enumerate()
        .map(|(i, n)| (i as u8, n))
        .collect();
    let labels_path = png_path.with_file_name("labels.json");
    write_json(&labels_path, &labels)
}

pub fn read_ground_truth(png_path: &Path) -> Result<GroundTruth> {
    let img = read_png(png_path)?;
    if img.depth != png::BitDepth::Eight
        || !matches!(img.color, png::ColorType::Indexed | png::ColorType::Grayscale)
    {
        return Err(Error::format(png_path, "ground truth must be an 8-bit indexed PNG"));
    }
    Ok(GroundTruth::new(Array2::from_shape_fn(
        (img.height, img.width),
        |(y, x)| match img.bytes[y * img.width + x] {
            UNLABELED => None,
            l => Some(l),
        },
    )))
}

/// Reads `labels.json` (class id -> organ name), returned in id order.
pub fn read_labels(path: &Path) -> Result<Vec<String>> {
    let map: BTreeMap<u8, String> = read_json(path)?;
    for (expected, &id) in map.keys().enumerate() {
        if id as usize != expected {
            return Err(Error::format(path, "class ids must be dense from 0"));
        }
    }
    Ok(map.into_values().collect())
}

/// Distinct display colour for a class id.
pub fn class_color(i: usize) -> [u8; 3] {
    const TABLE: [[u8; 3]; 10] = [
        [200, 60, 50],
        [90, 170, 60],
        [120, 70, 170],
        [230, 200, 70],
        [240, 140, 170],
        [60, 140, 210],
        [240, 130, 40],
        [70, 200, 190],
        [150, 110, 60],
        [180, 180, 180],
    ];
    TABLE[i % TABLE.len()]
}

/// 8-bit RGB PNG.
pub fn write_rgb_png(path: &Path, width: usize, height: usize, rgb: &[u8]) -> Result<()> {
    write_png(path, width, height, png::ColorType::Rgb, png::BitDepth::Eight, None, rgb)
}

/// 16-bit grayscale PNG of a label map (debug output).
pub fn write_label_map_png(path: &Path, width: usize, height: usize, labels: &[u32]) -> Result<()> {
    let bytes: Vec<u8> = labels
        .iter()
        .flat_map(|&l| (l.min(u16::MAX as u32) as u16).to_be_bytes())
        .collect();
    write_png(path, width, height, png::ColorType::Grayscale, png::BitDepth::Sixteen, None, &bytes)
}

struct DecodedPng {
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    bytes: Vec<u8>,
}

fn write_png(
    path: &Path,
    width: usize,
    height: usize,
    color: png::ColorType,
    depth: png::BitDepth,
    palette: Option<Vec<u8>>,
    bytes: &[u8],
) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    encoder.set_color(color);
    encoder.set_depth(depth);
    if let Some(p) = palette {
        encoder.set_palette(p);
    }
    let mut writer = encoder.write_header().map_err(|e| Error::format(path, e))?;
    writer.write_image_data(bytes).map_err(|e| Error::format(path, e))?;
    writer.finish().map_err(|e| Error::format(path, e))
}

fn read_png(path: &Path) -> Result<DecodedPng> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut decoder = png::Decoder::new(BufReader::new(file));
    decoder.set_transformations(png::Transformations::IDENTITY);
    let mut reader = decoder.read_info().map_err(|e| Error::format(path, e))?;
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| Error::format(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::format(path, e))?;
    buf.truncate(info.buffer_size());
    Ok(DecodedPng {
        width: info.width as usize,
        height: info.height as usize,
        color: info.color_type,
        depth: info.bit_depth,
        bytes: buf,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e))
}
