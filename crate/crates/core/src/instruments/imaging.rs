//! PNG helpers: content addressing, polygon/rect crops, solid fills and
//! stroke rasterization.

use std::io::Cursor;

use image::{ImageFormat as CodecFormat, Rgba, RgbaImage};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::card::{AssetId, ImageAssetRef, ImageFormat};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// An ordered list of canvas points drawn in one gesture.
pub type Stroke = Vec<Point>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PixelRect {
    pub x: u32,
    pub y: u32,
    pub width: u32,
    pub height: u32,
}

impl PixelRect {
    pub fn new(x: u32, y: u32, width: u32, height: u32) -> Self {
        Self { x, y, width, height }
    }

    pub fn fits_within(&self, width: u32, height: u32) -> bool {
        self.width > 0
            && self.height > 0
            && u64::from(self.x) + u64::from(self.width) <= u64::from(width)
            && u64::from(self.y) + u64::from(self.height) <= u64::from(height)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ImagingError {
    #[error("image decode failed: {0}")]
    Decode(String),
    #[error("image encode failed: {0}")]
    Encode(String),
    #[error("polygon needs at least 3 non-collinear vertices")]
    DegeneratePolygon,
    #[error("selection lies outside the {width}x{height} image")]
    OutOfBounds { width: u32, height: u32 },
}

/// PNG bytes together with their asset reference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedImage {
    pub asset: ImageAssetRef,
    pub bytes: Vec<u8>,
}

pub fn asset_id_for(bytes: &[u8]) -> AssetId {
    AssetId::new(hex::encode(Sha256::digest(bytes)))
}

/// Reads the header of a PNG and builds its asset reference.
pub fn describe_png(bytes: &[u8]) -> Result<ImageAssetRef, ImagingError> {
    let reader = image::ImageReader::with_format(Cursor::new(bytes), CodecFormat::Png);
    let (width, height) = reader.into_dimensions().map_err(|e| ImagingError::Decode(e.to_string()))?;
    if width == 0 || height == 0 {
        return Err(ImagingError::Decode("zero-sized image".into()));
    }
    Ok(ImageAssetRef { asset_id: asset_id_for(bytes), format: ImageFormat::Png, width, height })
}

pub fn decode_png(bytes: &[u8]) -> Result<RgbaImage, ImagingError> {
    image::load_from_memory_with_format(bytes, CodecFormat::Png)
        .map(|img| img.to_rgba8())
        .map_err(|e| ImagingError::Decode(e.to_string()))
}

pub fn encode_png(img: &RgbaImage) -> Result<EncodedImage, ImagingError> {
    let mut bytes = Vec::new();
    img.write_to(&mut Cursor::new(&mut bytes), CodecFormat::Png).map_err(|e| ImagingError::Encode(e.to_string()))?;
    let asset = ImageAssetRef {
        asset_id: asset_id_for(&bytes),
        format: ImageFormat::Png,
        width: img.width(),
        height: img.height(),
    };
    Ok(EncodedImage { asset, bytes })
}

pub fn solid_png(width: u32, height: u32, rgb: [u8; 3]) -> Result<EncodedImage, ImagingError> {
    let img = RgbaImage::from_pixel(width, height, Rgba([rgb[0], rgb[1], rgb[2], 255]));
    encode_png(&img)
}

fn polygon_area(polygon: &[Point]) -> f64 {
    let n = polygon.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (polygon[i], polygon[(i + 1) % n]);
            a.x * b.y - b.x * a.y
        })
        .sum();
    twice.abs() / 2.0
}

/// Even-odd rule.
pub fn point_in_polygon(p: Point, polygon: &[Point]) -> bool {
    let mut inside = false;
    let mut j = polygon.len() - 1;
    for i in 0..polygon.len() {
        let (a, b) = (polygon[i], polygon[j]);
        if (a.y > p.y) != (b.y > p.y) && p.x < (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Bounding box of a polygon snapped outward to whole pixels.
pub fn polygon_bounds(polygon: &[Point]) -> PixelRect {
    let min_x = polygon.iter().map(|p| p.x).fold(f64::INFINITY, f64::min).floor();
    let min_y = polygon.iter().map(|p| p.y).fold(f64::INFINITY, f64::min).floor();
    let max_x = polygon.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max).ceil();
    let max_y = polygon.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max).ceil();
    PixelRect::new(min_x as u32, min_y as u32, (max_x - min_x) as u32, (max_y - min_y) as u32)
}

pub fn check_polygon(polygon: &[Point], width: u32, height: u32) -> Result<PixelRect, ImagingError> {
    if polygon.len() < 3 {
        return Err(ImagingError::DegeneratePolygon);
    }
    let inside = |p: &Point| {
        p.x.is_finite()
            && p.y.is_finite()
            && (0.0..=f64::from(width)).contains(&p.x)
            && (0.0..=f64::from(height)).contains(&p.y)
    };
    if !polygon.iter().all(inside) {
        return Err(ImagingError::OutOfBounds { width, height });
    }
    if polygon_area(polygon) < 1e-9 {
        return Err(ImagingError::DegeneratePolygon);
    }
    Ok(polygon_bounds(polygon))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolygonCrop {
    pub image: EncodedImage,
    pub bbox: PixelRect,
}

/// Crops to the polygon's bounding box and clears pixels whose centers fall
/// outside the polygon to transparent. When nothing is masked and the box is
/// the whole image, the source bytes are returned untouched.
pub fn crop_polygon(png: &[u8], polygon: &[Point]) -> Result<PolygonCrop, ImagingError> {
    let source = decode_png(png)?;
    let bbox = check_polygon(polygon, source.width(), source.height())?;

    let mut out = image::imageops::crop_imm(&source, bbox.x, bbox.y, bbox.width, bbox.height).to_image();
    let mut masked = false;
    for (x, y, px) in out.enumerate_pixels_mut() {
        let center = Point::new(f64::from(bbox.x + x) + 0.5, f64::from(bbox.y + y) + 0.5);
        if !point_in_polygon(center, polygon) {
            *px = Rgba([0, 0, 0, 0]);
            masked = true;
        }
    }

    let whole = bbox == PixelRect::new(0, 0, source.width(), source.height());
    let image = if whole && !masked {
        EncodedImage { asset: describe_png(png)?, bytes: png.to_vec() }
    } else {
        encode_png(&out)?
    };
    Ok(PolygonCrop { image, bbox })
}

pub fn crop_rect(png: &[u8], rect: PixelRect) -> Result<EncodedImage, ImagingError> {
    let source = decode_png(png)?;
    if !rect.fits_within(source.width(), source.height()) {
        return Err(ImagingError::OutOfBounds { width: source.width(), height: source.height() });
    }
    if rect == PixelRect::new(0, 0, source.width(), source.height()) {
        return Ok(EncodedImage { asset: describe_png(png)?, bytes: png.to_vec() });
    }
    encode_png(&image::imageops::crop_imm(&source, rect.x, rect.y, rect.width, rect.height).to_image())
}

const MAX_SCAFFOLD_SIDE: f64 = 1024.0;

/// Draws strokes as 1px black polylines on white, sized to their bounding box
/// (plus a 2px margin). Returns `None` when there is nothing to draw.
pub fn rasterize_strokes(strokes: &[Stroke]) -> Result<Option<EncodedImage>, ImagingError> {
    let points: Vec<Point> = strokes.iter().flatten().copied().filter(|p| p.x.is_finite() && p.y.is_finite()).collect();
    if points.is_empty() {
        return Ok(None);
    }
    let min_x = points.iter().map(|p| p.x).fold(f64::INFINITY, f64::min);
    let min_y = points.iter().map(|p| p.y).fold(f64::INFINITY, f64::min);
    let max_x = points.iter().map(|p| p.x).fold(f64::NEG_INFINITY, f64::max);
    let max_y = points.iter().map(|p| p.y).fold(f64::NEG_INFINITY, f64::max);
    let span = (max_x - min_x).max(max_y - min_y).max(1.0);
    let scale = (MAX_SCAFFOLD_SIDE / span).min(1.0);
    let margin = 2.0;
    let width = ((max_x - min_x) * scale + 2.0 * margin).ceil() as u32 + 1;
    let height = ((max_y - min_y) * scale + 2.0 * margin).ceil() as u32 + 1;

    let mut img = RgbaImage::from_pixel(width, height, Rgba([255, 255, 255, 255]));
    let to_px = |p: &Point| ((p.x - min_x) * scale + margin, (p.y - min_y) * scale + margin);
    for stroke in strokes {
        let pts: Vec<(f64, f64)> = stroke.iter().filter(|p| p.x.is_finite() && p.y.is_finite()).map(to_px).collect();
        if pts.len() == 1 {
            plot(&mut img, pts[0].0, pts[0].1);
        }
        for seg in pts.windows(2) {
            let (a, b) = (seg[0], seg[1]);
            let steps = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
            for k in 0..=steps {
                let t = k as f64 / steps as f64;
                plot(&mut img, a.0 + (b.0 - a.0) * t, a.1 + (b.1 - a.1) * t);
            }
        }
    }
    encode_png(&img).map(Some)
}

fn plot(img: &mut RgbaImage, x: f64, y: f64) {
    let (x, y) = (x.round() as u32, y.round() as u32);
    if x < img.width() && y < img.height() {
        img.put_pixel(x, y, Rgba([0, 0, 0, 255]));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(width: u32, height: u32) -> Vec<u8> {
        let img = RgbaImage::from_fn(width, height, |x, y| Rgba([(x % 256) as u8, (y % 256) as u8, 7, 255]));
        encode_png(&img).unwrap().bytes
    }

    #[test]
    fn triangle_crop_matches_bounding_box() {
        let png = gradient(512, 512);
        let tri = [Point::new(100.0, 100.0), Point::new(300.0, 120.0), Point::new(180.0, 260.0)];
        let crop = crop_polygon(&png, &tri).unwrap();
        assert_eq!(crop.bbox, PixelRect::new(100, 100, 200, 160));
        assert_eq!((crop.image.asset.width, crop.image.asset.height), (200, 160));

        let decoded = decode_png(&crop.image.bytes).unwrap();
        // top-right corner of the box is outside the triangle
        assert_eq!(decoded.get_pixel(199, 159).0[3], 0);
        // a point well inside keeps the source pixel
        let (sx, sy) = (190u32, 160u32);
        assert_eq!(decoded.get_pixel(sx - 100, sy - 100).0, [(sx % 256) as u8, (sy % 256) as u8, 7, 255]);
    }

    #[test]
    fn full_rectangle_crop_is_byte_identical() {
        let png = gradient(64, 48);
        let rect = [Point::new(0.0, 0.0), Point::new(64.0, 0.0), Point::new(64.0, 48.0), Point::new(0.0, 48.0)];
        let crop = crop_polygon(&png, &rect).unwrap();
        assert_eq!(crop.image.bytes, png);
        assert_eq!(crop.image.asset.asset_id, asset_id_for(&png));
    }

    #[test]
    fn degenerate_and_out_of_bounds_polygons() {
        let png = gradient(32, 32);
        assert_eq!(
            crop_polygon(&png, &[Point::new(0.0, 0.0), Point::new(5.0, 5.0)]),
            Err(ImagingError::DegeneratePolygon)
        );
        let collinear = [Point::new(0.0, 0.0), Point::new(5.0, 5.0), Point::new(10.0, 10.0)];
        assert_eq!(crop_polygon(&png, &collinear), Err(ImagingError::DegeneratePolygon));
        let outside = [Point::new(0.0, 0.0), Point::new(40.0, 0.0), Point::new(0.0, 10.0)];
        assert!(matches!(crop_polygon(&png, &outside), Err(ImagingError::OutOfBounds { .. })));
    }

    #[test]
    fn rect_crop_bounds() {
        let png = gradient(32, 16);
        let c = crop_rect(&png, PixelRect::new(4, 4, 8, 8)).unwrap();
        assert_eq!((c.asset.width, c.asset.height), (8, 8));
        assert!(crop_rect(&png, PixelRect::new(30, 0, 4, 4)).is_err());
        assert!(crop_rect(&png, PixelRect::new(0, 0, 0, 4)).is_err());
        assert_eq!(crop_rect(&png, PixelRect::new(0, 0, 32, 16)).unwrap().bytes, png);
    }

    #[test]
    fn solid_png_is_deterministic() {
        let a = solid_png(16, 16, [1, 2, 3]).unwrap();
        let b = solid_png(16, 16, [1, 2, 3]).unwrap();
        assert_eq!(a, b);
        assert_eq!(describe_png(&a.bytes).unwrap(), a.asset);
        assert!(decode_png(&a.bytes).unwrap().pixels().all(|p| p.0 == [1, 2, 3, 255]));
    }

    #[test]
    fn strokes_rasterize_to_their_bounding_box() {
        assert_eq!(rasterize_strokes(&[]).unwrap(), None);
        let stroke = vec![Point::new(10.0, 10.0), Point::new(50.0, 30.0)];
        let img = rasterize_strokes(&[stroke]).unwrap().unwrap();
        assert_eq!((img.asset.width, img.asset.height), (45, 25));
        let decoded = decode_png(&img.bytes).unwrap();
        assert!(decoded.pixels().any(|p| p.0 == [0, 0, 0, 255]));
    }

    #[test]
    fn garbage_is_not_a_png() {
        assert!(matches!(describe_png(b"not a png"), Err(ImagingError::Decode(_))));
    }
}
