//! Camera frame compositing and the MJPEG stream.

use caris_core::tracker::TrackView;
use image::{Rgb, RgbImage};

pub const BOUNDARY: &str = "carisframe";
pub const BOX_COLOR: Rgb<u8> = Rgb([0, 230, 60]);
const PLACEHOLDER_SIZE: (u32, u32) = (640, 480);

pub fn placeholder() -> RgbImage {
    let mut img = RgbImage::from_pixel(PLACEHOLDER_SIZE.0, PLACEHOLDER_SIZE.1, Rgb([40, 40, 40]));
    let text = "NO CAMERA FRAME";
    let scale = 3;
    let w = text.len() as u32 * 8 * scale;
    draw_text(&mut img, (PLACEHOLDER_SIZE.0 - w) as i64 / 2, 228, text, scale, Rgb([200, 200, 200]));
    img
}

fn put(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn fill(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>) {
    for y in y0..y1 {
        for x in x0..x1 {
            put(img, x, y, c);
        }
    }
}

/// 8x8 bitmap glyphs; non-ASCII characters render as '?'.
pub fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, scale: u32, c: Rgb<u8>) {
    let s = scale as i64;
    for (i, ch) in text.chars().enumerate() {
        let code = if ch.is_ascii() { ch as usize } else { '?' as usize };
        let glyph = font8x8::legacy::BASIC_LEGACY[code];
        for (row, bits) in glyph.iter().enumerate() {
            for col in 0..8 {
                if bits >> col & 1 == 1 {
                    let px = x + (i as i64 * 8 + col) * s;
                    let py = y + row as i64 * s;
                    fill(img, px, py, px + s, py + s, c);
                }
            }
        }
    }
}

pub fn draw_box(img: &mut RgbImage, view: &TrackView) {
    let (x0, y0, x1, y1) = view.bbox.corners();
    let (x0, y0, x1, y1) = (x0.round() as i64, y0.round() as i64, x1.round() as i64, y1.round() as i64);
    let t = 3;
    fill(img, x0, y0, x1, y0 + t, BOX_COLOR);
    fill(img, x0, y1 - t, x1, y1, BOX_COLOR);
    fill(img, x0, y0, x0 + t, y1, BOX_COLOR);
    fill(img, x1 - t, y0, x1, y1, BOX_COLOR);
    let label = match &view.group {
        Some(g) => format!("{} [{g}]", view.label),
        None => view.label.clone(),
    };
    let ty = if y0 >= 20 { y0 - 20 } else { y0 + t };
    fill(img, x0, ty, x0 + label.chars().count() as i64 * 16 + 4, ty + 20, BOX_COLOR);
    draw_text(img, x0 + 2, ty + 2, &label, 2, Rgb([0, 0, 0]));
}

pub fn composite(frame: Option<&RgbImage>, tracks: &[TrackView]) -> RgbImage {
    let mut img = frame.cloned().unwrap_or_else(placeholder);
    for t in tracks {
        draw_box(&mut img, t);
    }
    img
}

pub fn encode_jpeg(img: &RgbImage) -> Vec<u8> {
    let mut out = Vec::new();
    image::codecs::jpeg::JpegEncoder::new_with_quality(&mut out, 80)
        .encode_image(img)
        .expect("encoding an RGB image into memory cannot fail");
    out
}

pub fn encode_png(img: &RgbImage) -> Vec<u8> {
    let mut out = std::io::Cursor::new(Vec::new());
    img.write_to(&mut out, image::ImageFormat::Png)
        .expect("encoding an RGB image into memory cannot fail");
    out.into_inner()
}

pub fn decode_jpeg(bytes: &[u8]) -> Result<RgbImage, String> {
    image::load_from_memory_with_format(bytes, image::ImageFormat::Jpeg)
        .map(|i| i.to_rgb8())
        .map_err(|e| e.to_string())
}

/// One multipart section, boundary line included.
pub fn mjpeg_part(jpeg: &[u8], overlays: usize) -> Vec<u8> {
    let mut part = format!(
        "--{BOUNDARY}\r\nContent-Type: image/jpeg\r\nContent-Length: {}\r\nX-Caris-Overlays: {overlays}\r\n\r\n",
        jpeg.len()
    )
    .into_bytes();
    part.extend_from_slice(jpeg);
    part.extend_from_slice(b"\r\n");
    part
}
