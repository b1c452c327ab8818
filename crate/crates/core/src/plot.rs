//! Minimal line-chart rasterizer for run diagnostics.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};

const WIDTH: u32 = 640;
const HEIGHT: u32 = 360;
const MARGIN: u32 = 32;

pub const BLUE: Rgb<u8> = Rgb([31, 119, 180]);
pub const ORANGE: Rgb<u8> = Rgb([255, 127, 14]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Points,
}

#[derive(Debug, Clone)]
pub struct Series<'a> {
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub color: Rgb<u8>,
    pub style: Style,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

fn line(img: &mut RgbImage, (x0, y0): (i64, i64), (x1, y1): (i64, i64), color: Rgb<u8>) {
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Render the series on shared axes. Non-finite points are skipped.
pub fn render(series: &[Series<'_>]) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let (x_lo, x_hi) = bounds(series.iter().flat_map(|s| s.x.iter().copied()));
    let (y_lo, y_hi) = bounds(series.iter().flat_map(|s| s.y.iter().copied()));
    let (left, right) = (MARGIN as i64, (WIDTH - MARGIN) as i64);
    let (top, bottom) = (MARGIN as i64, (HEIGHT - MARGIN) as i64);
    for k in 1..4 {
        let gy = top + (bottom - top) * k / 4;
        line(&mut img, (left, gy), (right, gy), GRID);
        let gx = left + (right - left) * k / 4;
        line(&mut img, (gx, top), (gx, bottom), GRID);
    }
    line(&mut img, (left, bottom), (right, bottom), AXIS);
    line(&mut img, (left, top), (left, bottom), AXIS);
    let to_px = |x: f64, y: f64| -> (i64, i64) {
        let px = left as f64 + (x - x_lo) / (x_hi - x_lo) * (right - left) as f64;
        let py = bottom as f64 - (y - y_lo) / (y_hi - y_lo) * (bottom - top) as f64;
        (px.round() as i64, py.round() as i64)
    };
    for s in series {
        let mut prev: Option<(i64, i64)> = None;
        for (&x, &y) in s.x.iter().zip(s.y) {
            if !(x.is_finite() && y.is_finite()) {
                prev = None;
                continue;
            }
            let p = to_px(x, y);
            match s.style {
                Style::Line => {
                    if let Some(q) = prev {
                        line(&mut img, q, p, s.color);
                    } else {
                        put(&mut img, p.0, p.1, s.color);
                    }
                }
                Style::Points => {
                    for (dx, dy) in [(0, 0), (1, 0), (0, 1), (-1, 0), (0, -1)] {
                        put(&mut img, p.0 + dx, p.1 + dy, s.color);
                    }
                }
            }
            prev = Some(p);
        }
    }
    img
}

pub fn save(series: &[Series<'_>], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    render(series)
        .save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Backend(format!("writing {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn draws_something_deterministically() {
        let x = [0.0, 1.0, 2.0];
        let y = [1.0, f64::NAN, 3.0];
        let s = [Series {
            x: &x,
            y: &y,
            color: BLUE,
            style: Style::Line,
        }];
        let a = render(&s);
        assert_eq!(a, render(&s));
        assert!(a.pixels().any(|p| *p == BLUE));
    }

    #[test]
    fn empty_and_constant_series() {
        let img = render(&[]);
        assert_eq!(img.dimensions(), (WIDTH, HEIGHT));
        let x = [5.0; 3];
        render(&[Series {
            x: &x,
            y: &x,
            color: ORANGE,
            style: Style::Points,
        }]);
    }
}
