//! Deterministic raster for simulator screenshots and annotation overlays.
//! Binary PPM (P6); one filled rectangle per visible widget, fill colour
//! hashed from (class_name, text), 1-pixel black border. No glyph rendering
//! except the tiny digit font used for annotation labels.

use crate::model::Bounds;

pub const FORMAT_PPM: &str = "ppm";

pub struct Canvas {
    pub width: u32,
    pub height: u32,
    pixels: Vec<u8>,
}

impl Canvas {
    pub fn new(width: u32, height: u32, background: [u8; 3]) -> Canvas {
        let mut pixels = Vec::with_capacity((width * height * 3) as usize);
        for _ in 0..width * height {
            pixels.extend_from_slice(&background);
        }
        Canvas {
            width,
            height,
            pixels,
        }
    }

    /// Parse a P6 document produced by `encode`.
    pub fn decode(bytes: &[u8]) -> Option<Canvas> {
        let mut pos = 0;
        let mut token = |bytes: &[u8]| -> Option<String> {
            while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
                pos += 1;
            }
            if bytes.get(pos) == Some(&b'#') {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                while pos < bytes.len() && (bytes[pos] as char).is_whitespace() {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !(bytes[pos] as char).is_whitespace() {
                pos += 1;
            }
            (pos > start).then(|| String::from_utf8_lossy(&bytes[start..pos]).to_string())
        };
        if token(bytes)? != "P6" {
            return None;
        }
        let width: u32 = token(bytes)?.parse().ok()?;
        let height: u32 = token(bytes)?.parse().ok()?;
        let maxval: u32 = token(bytes)?.parse().ok()?;
        if maxval != 255 {
            return None;
        }
        pos += 1; // single whitespace after maxval
        let need = (width * height * 3) as usize;
        let data = bytes.get(pos..pos + need)?;
        Some(Canvas {
            width,
            height,
            pixels: data.to_vec(),
        })
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        if x < self.width && y < self.height {
            let i = ((y * self.width + x) * 3) as usize;
            self.pixels[i..i + 3].copy_from_slice(&rgb);
        }
    }

    pub fn fill_rect(&mut self, b: Bounds, rgb: [u8; 3]) {
        for y in b.y1..=b.y2.min(self.height.saturating_sub(1)) {
            for x in b.x1..=b.x2.min(self.width.saturating_sub(1)) {
                self.set(x, y, rgb);
            }
        }
    }

    pub fn stroke_rect(&mut self, b: Bounds, thickness: u32, rgb: [u8; 3]) {
        for t in 0..thickness {
            let (x1, y1) = (b.x1 + t, b.y1 + t);
            let (x2, y2) = (b.x2.saturating_sub(t), b.y2.saturating_sub(t));
            if x1 > x2 || y1 > y2 {
                break;
            }
            for x in x1..=x2 {
                self.set(x, y1, rgb);
                self.set(x, y2, rgb);
            }
            for y in y1..=y2 {
                self.set(x1, y, rgb);
                self.set(x2, y, rgb);
            }
        }
    }

    /// Draw a decimal label in the 3x5 digit font at the given scale.
    pub fn draw_number(&mut self, x: u32, y: u32, value: u32, scale: u32, rgb: [u8; 3]) {
        let digits: Vec<u8> = value
            .to_string()
            .bytes()
            .map(|b| b - b'0')
            .collect();
        let mut cx = x;
        for d in digits {
            self.draw_digit(cx, y, d, scale, rgb);
            cx += (3 + 1) * scale;
        }
    }

    fn draw_digit(&mut self, x: u32, y: u32, digit: u8, scale: u32, rgb: [u8; 3]) {
        let rows = DIGIT_FONT[digit as usize];
        for (ry, row) in rows.iter().enumerate() {
            for rx in 0..3u32 {
                if row & (0b100 >> rx) != 0 {
                    let b = Bounds::new(
                        x + rx * scale,
                        y + ry as u32 * scale,
                        x + rx * scale + scale - 1,
                        y + ry as u32 * scale + scale - 1,
                    );
                    self.fill_rect(b, rgb);
                }
            }
        }
    }
}

/// 3x5 bitmap digits, one row per byte, 3 low bits used.
const DIGIT_FONT: [[u8; 5]; 10] = [
    [0b111, 0b101, 0b101, 0b101, 0b111], // 0
    [0b010, 0b110, 0b010, 0b010, 0b111], // 1
    [0b111, 0b001, 0b111, 0b100, 0b111], // 2
    [0b111, 0b001, 0b111, 0b001, 0b111], // 3
    [0b101, 0b101, 0b111, 0b001, 0b001], // 4
    [0b111, 0b100, 0b111, 0b001, 0b111], // 5
    [0b111, 0b100, 0b111, 0b101, 0b111], // 6
    [0b111, 0b001, 0b010, 0b010, 0b010], // 7
    [0b111, 0b101, 0b111, 0b101, 0b111], // 8
    [0b111, 0b101, 0b111, 0b001, 0b111], // 9
];

/// Stable 64-bit FNV-1a; the raster must not depend on hasher internals that
/// could change between toolchain versions.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// Fill colour for a widget rectangle: hash of (class_name, text).
pub fn widget_fill(class_name: &str, text: &str) -> [u8; 3] {
    let mut key = Vec::with_capacity(class_name.len() + text.len() + 1);
    key.extend_from_slice(class_name.as_bytes());
    key.push(0x1f);
    key.extend_from_slice(text.as_bytes());
    let h = fnv1a64(&key);
    [(h >> 16) as u8, (h >> 8) as u8, h as u8]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encode_decode_round_trip() {
        let mut c = Canvas::new(8, 4, [255, 255, 255]);
        c.fill_rect(Bounds::new(1, 1, 3, 2), [10, 20, 30]);
        let bytes = c.encode();
        let back = Canvas::decode(&bytes).unwrap();
        assert_eq!(back.width, 8);
        assert_eq!(back.height, 4);
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn widget_fill_is_stable() {
        assert_eq!(
            widget_fill("android.widget.Button", "5"),
            widget_fill("android.widget.Button", "5")
        );
        assert_ne!(
            widget_fill("android.widget.Button", "5"),
            widget_fill("android.widget.Button", "6")
        );
    }

    #[test]
    fn digits_render_within_bounds() {
        let mut c = Canvas::new(30, 20, [0, 0, 0]);
        c.draw_number(1, 1, 190, 2, [255, 0, 0]);
        let bytes = c.encode();
        assert!(bytes.iter().any(|&b| b == 255));
    }
}
