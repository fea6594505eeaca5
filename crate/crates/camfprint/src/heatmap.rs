//! Deterministic PNG heatmap of a similarity matrix.
//!
//! Device labels on both axes, a 0..1 colorbar on the right, and per-cell
//! value annotations while the matrix is small enough to read them
//! (N <= 40). Everything is drawn from an embedded 5x7 pixel font, so
//! re-rendering the same matrix yields byte-identical output.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::eval::SimilarityMatrix;

const GLYPH_W: usize = 5;
const GLYPH_H: usize = 7;
const ADVANCE: usize = 6;
const ANNOTATE_MAX: usize = 40;
const MAX_LABEL: usize = 24;

const BG: Rgb<u8> = Rgb([255, 255, 255]);
const INK: Rgb<u8> = Rgb([0, 0, 0]);

/// Rows of 5 bits each, top to bottom; uppercase-only.
fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        'A' => [0b01110, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'B' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10001, 0b10001, 0b11110],
        'C' => [0b01110, 0b10001, 0b10000, 0b10000, 0b10000, 0b10001, 0b01110],
        'D' => [0b11110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11110],
        'E' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b11111],
        'F' => [0b11111, 0b10000, 0b10000, 0b11110, 0b10000, 0b10000, 0b10000],
        'G' => [0b01110, 0b10001, 0b10000, 0b10111, 0b10001, 0b10001, 0b01111],
        'H' => [0b10001, 0b10001, 0b10001, 0b11111, 0b10001, 0b10001, 0b10001],
        'I' => [0b01110, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        'J' => [0b00111, 0b00010, 0b00010, 0b00010, 0b00010, 0b10010, 0b01100],
        'K' => [0b10001, 0b10010, 0b10100, 0b11000, 0b10100, 0b10010, 0b10001],
        'L' => [0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b10000, 0b11111],
        'M' => [0b10001, 0b11011, 0b10101, 0b10101, 0b10001, 0b10001, 0b10001],
        'N' => [0b10001, 0b11001, 0b10101, 0b10011, 0b10001, 0b10001, 0b10001],
        'O' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'P' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10000, 0b10000, 0b10000],
        'Q' => [0b01110, 0b10001, 0b10001, 0b10001, 0b10101, 0b10010, 0b01101],
        'R' => [0b11110, 0b10001, 0b10001, 0b11110, 0b10100, 0b10010, 0b10001],
        'S' => [0b01111, 0b10000, 0b10000, 0b01110, 0b00001, 0b00001, 0b11110],
        'T' => [0b11111, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100, 0b00100],
        'U' => [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01110],
        'V' => [0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b01010, 0b00100],
        'W' => [0b10001, 0b10001, 0b10001, 0b10101, 0b10101, 0b10101, 0b01010],
        'X' => [0b10001, 0b10001, 0b01010, 0b00100, 0b01010, 0b10001, 0b10001],
        'Y' => [0b10001, 0b10001, 0b01010, 0b00100, 0b00100, 0b00100, 0b00100],
        'Z' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b10000, 0b11111],
        '0' => [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
        '1' => [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
        '2' => [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
        '3' => [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
        '4' => [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
        '5' => [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
        '6' => [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
        '7' => [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
        '8' => [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
        '9' => [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
        '_' => [0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b11111],
        '-' => [0b00000, 0b00000, 0b00000, 0b11111, 0b00000, 0b00000, 0b00000],
        '.' => [0b00000, 0b00000, 0b00000, 0b00000, 0b00000, 0b01100, 0b01100],
        ' ' => [0; 7],
        // unknown characters render as a hollow box
        _ => [0b11111, 0b10001, 0b10001, 0b10001, 0b10001, 0b10001, 0b11111],
    }
}

fn draw_text(img: &mut RgbImage, x0: usize, y0: usize, text: &str, color: Rgb<u8>) {
    for (k, c) in text.chars().enumerate() {
        let rows = glyph(c);
        for (gy, row) in rows.iter().enumerate() {
            for gx in 0..GLYPH_W {
                if row & (1 << (GLYPH_W - 1 - gx)) != 0 {
                    let (x, y) = (x0 + k * ADVANCE + gx, y0 + gy);
                    if x < img.width() as usize && y < img.height() as usize {
                        img.put_pixel(x as u32, y as u32, color);
                    }
                }
            }
        }
    }
}

/// Text rotated a quarter turn clockwise, running downward from (x0, y0).
fn draw_text_down(img: &mut RgbImage, x0: usize, y0: usize, text: &str, color: Rgb<u8>) {
    for (k, c) in text.chars().enumerate() {
        let rows = glyph(c);
        for (gy, row) in rows.iter().enumerate() {
            for gx in 0..GLYPH_W {
                if row & (1 << (GLYPH_W - 1 - gx)) != 0 {
                    let (x, y) = (x0 + (GLYPH_H - 1 - gy), y0 + k * ADVANCE + gx);
                    if x < img.width() as usize && y < img.height() as usize {
                        img.put_pixel(x as u32, y as u32, color);
                    }
                }
            }
        }
    }
}

/// Viridis-like colormap over [0,1].
fn colormap(v: f64) -> Rgb<u8> {
    const ANCHORS: [(f64, [f64; 3]); 5] = [
        (0.00, [68.0, 1.0, 84.0]),
        (0.25, [59.0, 82.0, 139.0]),
        (0.50, [33.0, 145.0, 140.0]),
        (0.75, [94.0, 201.0, 98.0]),
        (1.00, [253.0, 231.0, 37.0]),
    ];
    let v = v.clamp(0.0, 1.0);
    let mut lo = ANCHORS[0];
    let mut hi = ANCHORS[4];
    for w in ANCHORS.windows(2) {
        if v >= w[0].0 && v <= w[1].0 {
            lo = w[0];
            hi = w[1];
            break;
        }
    }
    let t = if hi.0 > lo.0 { (v - lo.0) / (hi.0 - lo.0) } else { 0.0 };
    let mut px = [0u8; 3];
    for c in 0..3 {
        px[c] = (lo.1[c] + t * (hi.1[c] - lo.1[c])).round() as u8;
    }
    Rgb(px)
}

fn luminance(c: Rgb<u8>) -> f64 {
    0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64
}

fn label_of(device: &str) -> String {
    if device.len() > MAX_LABEL {
        device[..MAX_LABEL].to_string()
    } else {
        device.to_string()
    }
}

/// Renders the matrix into an image buffer; a pure function of the matrix.
pub fn render_to_image(matrix: &SimilarityMatrix) -> RgbImage {
    let n = matrix.devices.len();
    let annotate = n <= ANNOTATE_MAX;
    let cell = if annotate { 34 } else { 10 };
    let label_px = matrix
        .devices
        .iter()
        .map(|d| label_of(d).len() * ADVANCE)
        .max()
        .unwrap_or(0);
    let left = label_px + 10;
    let top = 10;
    let grid = n * cell;
    let bar_w = 16;
    let right = 10 + bar_w + 4 + 3 * ADVANCE + 8;
    let bottom = label_px + 10;
    let width = (left + grid + right) as u32;
    let height = (top + grid + bottom) as u32;
    let mut img = RgbImage::from_pixel(width, height, BG);

    for i in 0..n {
        for j in 0..n {
            let v = matrix.cells[i][j];
            let color = colormap(v);
            for y in 0..cell {
                for x in 0..cell {
                    img.put_pixel(
                        (left + j * cell + x) as u32,
                        (top + i * cell + y) as u32,
                        color,
                    );
                }
            }
            if annotate {
                let text = format!("{v:.2}");
                let tx = left + j * cell + (cell - text.len() * ADVANCE) / 2;
                let ty = top + i * cell + (cell - GLYPH_H) / 2;
                let ink = if luminance(color) < 128.0 {
                    Rgb([255, 255, 255])
                } else {
                    INK
                };
                draw_text(&mut img, tx, ty, &text, ink);
            }
        }
    }

    // axis labels
    for (i, d) in matrix.devices.iter().enumerate() {
        let label = label_of(d);
        let tx = left.saturating_sub(label.len() * ADVANCE + 4);
        let ty = top + i * cell + cell / 2 - GLYPH_H / 2;
        draw_text(&mut img, tx, ty, &label, INK);
        let cx = left + i * cell + cell / 2 - GLYPH_H / 2;
        draw_text_down(&mut img, cx, top + grid + 4, &label, INK);
    }

    // colorbar, 1 at the top
    let bar_x = left + grid + 10;
    for y in 0..grid.max(1) {
        let v = 1.0 - y as f64 / grid.max(1) as f64;
        let color = colormap(v);
        for x in 0..bar_w {
            img.put_pixel((bar_x + x) as u32, (top + y) as u32, color);
        }
    }
    let tick_x = bar_x + bar_w + 4;
    draw_text(&mut img, tick_x, top, "1.0", INK);
    draw_text(&mut img, tick_x, top + grid / 2 - GLYPH_H / 2, "0.5", INK);
    draw_text(&mut img, tick_x, (top + grid).saturating_sub(GLYPH_H), "0.0", INK);

    img
}

pub fn render_heatmap(matrix: &SimilarityMatrix, out_path: &Path) -> Result<()> {
    render_to_image(matrix)
        .save(out_path)
        .map_err(|e| Error::image(out_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_matrix(n: usize) -> SimilarityMatrix {
        SimilarityMatrix {
            devices: (0..n).map(|i| format!("Cam{}_{}", (b'A' + (i / 2) as u8) as char, i % 2)).collect(),
            cells: (0..n)
                .map(|i| (0..n).map(|j| if i == j { 0.97 } else { 0.03 * j as f64 }).collect())
                .collect(),
            n_pairs_per_cell: 100,
            eta: 0.9,
            seed: 0,
        }
    }

    #[test]
    fn one_by_one_matrix_renders() {
        let m = toy_matrix(1);
        let img = render_to_image(&m);
        assert!(img.width() > 0 && img.height() > 0);
    }

    #[test]
    fn rendering_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let m = toy_matrix(4);
        let p1 = dir.path().join("a.png");
        let p2 = dir.path().join("b.png");
        render_heatmap(&m, &p1).unwrap();
        render_heatmap(&m, &p2).unwrap();
        assert_eq!(std::fs::read(p1).unwrap(), std::fs::read(p2).unwrap());
    }

    #[test]
    fn every_row_and_column_gets_a_label() {
        let n = 31;
        let m = toy_matrix(n);
        let img = render_to_image(&m);
        let cell = 34;
        let label_px = m.devices.iter().map(|d| d.len() * ADVANCE).max().unwrap();
        let left = label_px + 10;
        let top = 10;
        for i in 0..n {
            let band_has_ink = (0..left).any(|x| {
                (top + i * cell..top + (i + 1) * cell)
                    .any(|y| img.get_pixel(x as u32, y as u32) == &INK)
            });
            assert!(band_has_ink, "row label {i} missing");
            let col_band_has_ink = (left + i * cell..left + (i + 1) * cell).any(|x| {
                (top + n * cell..img.height() as usize)
                    .any(|y| img.get_pixel(x as u32, y as u32) == &INK)
            });
            assert!(col_band_has_ink, "column label {i} missing");
        }
    }

    #[test]
    fn unwritable_path_is_an_error() {
        let m = toy_matrix(1);
        assert!(render_heatmap(&m, Path::new("/nonexistent/dir/x.png")).is_err());
    }

    #[test]
    fn colormap_endpoints_and_order() {
        assert_eq!(colormap(0.0), Rgb([68, 1, 84]));
        assert_eq!(colormap(1.0), Rgb([253, 231, 37]));
        // luminance rises with value
        assert!(luminance(colormap(1.0)) > luminance(colormap(0.5)));
        assert!(luminance(colormap(0.5)) > luminance(colormap(0.0)));
    }
}
