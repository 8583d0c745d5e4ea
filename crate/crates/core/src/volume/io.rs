//! Volume file I/O.
//!
//! Two on-disk layouts map onto the `(D, H, W, C)` model, both 8-bit:
//! a directory of lexicographically ordered PNG slices, or a multi-page
//! TIFF. Slice index becomes depth. Round-tripping through either layout
//! is exact at 8-bit precision.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use image::{DynamicImage, GrayImage, RgbImage};
use ndarray::{Array4, Axis};
use tiff::decoder::{Decoder, DecodingResult};
use tiff::encoder::{colortype, TiffEncoder};
use tiff::ColorType;

use crate::error::{Error, Result};
use crate::volume::{denormalize, normalize, Domain, ProjectionImage, Volume};

fn is_tiff(path: &Path) -> bool {
    matches!(
        path.extension().and_then(|e| e.to_str()),
        Some("tif") | Some("tiff")
    )
}

/// One decoded 8-bit slice: `(height, width, channels, data)`.
struct Slice {
    h: usize,
    w: usize,
    c: usize,
    bytes: Vec<u8>,
}

fn slice_from_dynamic(img: DynamicImage, src: &Path) -> Result<Slice> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma8(buf) => Ok(Slice {
            h,
            w,
            c: 1,
            bytes: buf.into_raw(),
        }),
        DynamicImage::ImageRgb8(buf) => Ok(Slice {
            h,
            w,
            c: 3,
            bytes: buf.into_raw(),
        }),
        other => Err(Error::Data(format!(
            "{}: unsupported pixel format {:?} (need 8-bit grayscale or RGB)",
            src.display(),
            other.color()
        ))),
    }
}

fn load_png_dir(dir: &Path) -> Result<Vec<(PathBuf, Slice)>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("png"))
        })
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!(
            "{}: no PNG slices found",
            dir.display()
        )));
    }
    files
        .into_iter()
        .map(|p| {
            let img = image::open(&p)
                .map_err(|e| Error::Data(format!("{}: {e}", p.display())))?;
            let s = slice_from_dynamic(img, &p)?;
            Ok((p, s))
        })
        .collect()
}

fn load_tiff_pages(path: &Path) -> Result<Vec<(PathBuf, Slice)>> {
    let file = File::open(path)?;
    let mut dec = Decoder::new(BufReader::new(file))
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    let mut slices = Vec::new();
    loop {
        let (w, h) = dec
            .dimensions()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let ct = dec
            .colortype()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let c = match ct {
            ColorType::Gray(8) => 1,
            ColorType::RGB(8) => 3,
            other => {
                return Err(Error::Data(format!(
                    "{} page {}: unsupported TIFF color type {other:?}",
                    path.display(),
                    slices.len()
                )))
            }
        };
        let bytes = match dec
            .read_image()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
        {
            DecodingResult::U8(v) => v,
            _ => {
                return Err(Error::Data(format!(
                    "{} page {}: not 8-bit data",
                    path.display(),
                    slices.len()
                )))
            }
        };
        let tag = path.join(format!("page_{}", slices.len()));
        slices.push((
            tag,
            Slice {
                h: h as usize,
                w: w as usize,
                c,
                bytes,
            },
        ));
        if !dec.more_images() {
            break;
        }
        dec.next_image()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    }
    Ok(slices)
}

/// Loads a volume from a PNG slice directory or a multi-page TIFF and
/// normalizes it into `[-1, 1]`. All slices must agree in size and channel
/// count, and the channel count must match `expected` (1 for OCT-like,
/// 3 for confocal-like).
pub fn load_volume(path: &Path, expected: Domain) -> Result<Volume> {
    let slices = if path.is_dir() {
        load_png_dir(path)?
    } else if is_tiff(path) {
        load_tiff_pages(path)?
    } else {
        return Err(Error::Data(format!(
            "{}: expected a slice directory or a .tif/.tiff file",
            path.display()
        )));
    };

    let (first_path, first) = &slices[0];
    let (h, w, c) = (first.h, first.w, first.c);
    for (p, s) in &slices[1..] {
        if (s.h, s.w, s.c) != (h, w, c) {
            return Err(Error::Data(format!(
                "{}: slice shape {}x{}x{} differs from {} ({}x{}x{})",
                p.display(),
                s.h,
                s.w,
                s.c,
                first_path.display(),
                h,
                w,
                c
            )));
        }
    }
    if c != expected.channels() {
        return Err(Error::Data(format!(
            "{}: {c}-channel slices cannot become a {expected} volume (needs {})",
            path.display(),
            expected.channels()
        )));
    }

    let d = slices.len();
    let mut raw = Array4::<f64>::zeros((d, h, w, c));
    for (di, (_, s)) in slices.iter().enumerate() {
        let mut plane = raw.index_axis_mut(Axis(0), di);
        for ((hh, ww, cc), v) in plane.indexed_iter_mut() {
            *v = s.bytes[(hh * w + ww) * c + cc] as f64;
        }
    }
    normalize(&raw, expected)
}

fn slice_bytes(v: &Array4<u8>, d: usize) -> Vec<u8> {
    v.index_axis(Axis(0), d).iter().copied().collect()
}

/// Saves a volume as 8-bit slices: to a multi-page TIFF when `path` ends in
/// `.tif`/`.tiff`, otherwise to `path/slice_###.png`.
pub fn save_volume(v: &Volume, path: &Path) -> Result<()> {
    let bytes = denormalize(v);
    let (d, h, w, c) = v.shape();
    if is_tiff(path) {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let file = File::create(path)?;
        let mut enc = TiffEncoder::new(BufWriter::new(file))
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        for di in 0..d {
            let data = slice_bytes(&bytes, di);
            let res = match c {
                1 => enc.write_image::<colortype::Gray8>(w as u32, h as u32, &data),
                _ => enc.write_image::<colortype::RGB8>(w as u32, h as u32, &data),
            };
            res.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        }
    } else {
        std::fs::create_dir_all(path)?;
        for di in 0..d {
            let data = slice_bytes(&bytes, di);
            let out = path.join(format!("slice_{di:03}.png"));
            match c {
                1 => GrayImage::from_raw(w as u32, h as u32, data)
                    .expect("slice buffer size")
                    .save(&out)
                    .map_err(|e| Error::Data(format!("{}: {e}", out.display())))?,
                _ => RgbImage::from_raw(w as u32, h as u32, data)
                    .expect("slice buffer size")
                    .save(&out)
                    .map_err(|e| Error::Data(format!("{}: {e}", out.display())))?,
            }
        }
    }
    Ok(())
}

/// Writes a projection image as an 8-bit PNG (values scaled from `[0, 1]`).
pub fn save_projection_png(img: &ProjectionImage, path: &Path) -> Result<()> {
    let (h, w, c) = img.shape();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let to_u8 = |x: f64| (x * 255.0).round().clamp(0.0, 255.0) as u8;
    match c {
        1 => {
            let mut buf = GrayImage::new(w as u32, h as u32);
            for (hh, ww, px) in buf.enumerate_pixels_mut().map(|(x, y, p)| (y, x, p)) {
                px.0 = [to_u8(img.data()[[hh as usize, ww as usize, 0]])];
            }
            buf.save(path)
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
        }
        3 => {
            let mut buf = RgbImage::new(w as u32, h as u32);
            for (hh, ww, px) in buf.enumerate_pixels_mut().map(|(x, y, p)| (y, x, p)) {
                let at = |cc: usize| to_u8(img.data()[[hh as usize, ww as usize, cc]]);
                px.0 = [at(0), at(1), at(2)];
            }
            buf.save(path)
                .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
        }
        other => Err(Error::Shape(format!(
            "projection with {other} channels cannot be written as PNG"
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use ndarray::Array4;
    use tempfile::TempDir;

    fn random_volume(shape: (usize, usize, usize, usize), domain: Domain, seed: u64) -> Volume {
        let mut rng = Stream::new(seed, 99);
        let raw = Array4::from_shape_fn(shape, |_| rng.below(256) as f64);
        normalize(&raw, domain).unwrap()
    }

    #[test]
    fn png_dir_roundtrip_is_exact() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("vol");
        let v = random_volume((5, 12, 9, 3), Domain::ConfocalLike, 1);
        save_volume(&v, &path).unwrap();
        let back = load_volume(&path, Domain::ConfocalLike).unwrap();
        assert_eq!(v.shape(), back.shape());
        assert_eq!(v.data(), back.data());
    }

    #[test]
    fn tiff_roundtrip_is_exact() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("vol.tif");
        let v = random_volume((9, 8, 7, 1), Domain::OctLike, 2);
        save_volume(&v, &path).unwrap();
        let back = load_volume(&path, Domain::OctLike).unwrap();
        assert_eq!(v.shape(), back.shape());
        assert_eq!(v.data(), back.data());
    }

    #[test]
    fn single_page_tiff_has_depth_one() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("one.tiff");
        let v = random_volume((1, 4, 4, 1), Domain::OctLike, 3);
        save_volume(&v, &path).unwrap();
        let back = load_volume(&path, Domain::OctLike).unwrap();
        assert_eq!(back.depth(), 1);
    }

    #[test]
    fn slice_order_is_lexicographic() {
        let dir = TempDir::new().unwrap();
        let path = dir.path().join("vol");
        let v = random_volume((4, 3, 3, 1), Domain::OctLike, 4);
        save_volume(&v, &path).unwrap();
        // slice_000..slice_003 written; loading picks them back in order
        let back = load_volume(&path, Domain::OctLike).unwrap();
        assert_eq!(v.data(), back.data());
    }

    #[test]
    fn empty_dir_errors() {
        let dir = TempDir::new().unwrap();
        let err = load_volume(dir.path(), Domain::OctLike).unwrap_err();
        assert!(err.to_string().contains("no PNG slices"));
    }

    #[test]
    fn mixed_slice_shapes_error_names_offender() {
        let dir = TempDir::new().unwrap();
        GrayImage::new(4, 4)
            .save(dir.path().join("slice_000.png"))
            .unwrap();
        GrayImage::new(5, 4)
            .save(dir.path().join("slice_001.png"))
            .unwrap();
        let err = load_volume(dir.path(), Domain::OctLike).unwrap_err();
        assert!(err.to_string().contains("slice_001.png"), "{err}");
    }

    #[test]
    fn domain_channel_mismatch_errors() {
        let dir = TempDir::new().unwrap();
        RgbImage::new(4, 4)
            .save(dir.path().join("slice_000.png"))
            .unwrap();
        let err = load_volume(dir.path(), Domain::OctLike).unwrap_err();
        assert!(err.to_string().contains("3-channel"), "{err}");
    }
}
