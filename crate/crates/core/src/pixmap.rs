//! Minimal RGB image with line and marker drawing, written as binary PPM.

use std::io::Write;

pub type Rgb = [u8; 3];

pub const BLACK: Rgb = [0, 0, 0];
pub const WHITE: Rgb = [255, 255, 255];

#[derive(Clone, Debug, PartialEq)]
pub struct Pixmap {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl Pixmap {
    pub fn new(width: usize, height: usize, fill: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: vec![fill; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    /// Sets a pixel; coordinates outside the image are ignored.
    pub fn put(&mut self, x: i64, y: i64, color: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height {
            self.pixels[y as usize * self.width + x as usize] = color;
        }
    }

    /// Bresenham line between pixel positions.
    pub fn line(&mut self, from: (i64, i64), to: (i64, i64), color: Rgb) {
        let (mut x0, mut y0) = from;
        let (x1, y1) = to;
        let dx = (x1 - x0).abs();
        let dy = -(y1 - y0).abs();
        let sx = if x0 < x1 { 1 } else { -1 };
        let sy = if y0 < y1 { 1 } else { -1 };
        let mut err = dx + dy;
        // Bounded so a wild coordinate cannot stall the renderer.
        for _ in 0..=(dx - dy).min(1 << 16) {
            self.put(x0, y0, color);
            if x0 == x1 && y0 == y1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dy {
                err += dy;
                x0 += sx;
            }
            if e2 <= dx {
                err += dx;
                y0 += sy;
            }
        }
    }

    /// A small plus-shaped marker.
    pub fn marker(&mut self, at: (i64, i64), size: i64, color: Rgb) {
        for k in -size..=size {
            self.put(at.0 + k, at.1, color);
            self.put(at.0, at.1 + k, color);
        }
    }

    pub fn write_ppm(&self, out: &mut impl Write) -> std::io::Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        let bytes: Vec<u8> = self.pixels.iter().flatten().copied().collect();
        out.write_all(&bytes)
    }
}

/// A fixed palette for basin labels.
pub fn label_color(label: u16) -> Rgb {
    const PALETTE: [Rgb; 6] = [
        [70, 130, 180],
        [218, 165, 32],
        [60, 179, 113],
        [205, 92, 92],
        [147, 112, 219],
        [72, 209, 204],
    ];
    PALETTE[label as usize % PALETTE.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_header_and_size() {
        let mut img = Pixmap::new(3, 2, WHITE);
        img.line((0, 0), (2, 1), BLACK);
        assert_eq!(img.get(0, 0), BLACK);
        assert_eq!(img.get(2, 1), BLACK);
        let mut buf = Vec::new();
        img.write_ppm(&mut buf).unwrap();
        assert!(buf.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(buf.len(), 11 + 18);
    }

    #[test]
    fn drawing_off_image_is_harmless() {
        let mut img = Pixmap::new(1, 1, WHITE);
        img.line((-100, -100), (100, 100), BLACK);
        img.marker((5, 5), 3, BLACK);
        assert_eq!(img.get(0, 0), BLACK);
    }
}
