//! Minimal PNG line and bar charts. There is no text rendering; series colours are listed in
//! a legend CSV written next to each plot.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::{Error, Result};

pub const WIDTH: u32 = 800;
pub const HEIGHT: u32 = 500;
const MARGIN: u32 = 40;

pub const PALETTE: [[u8; 3]; 8] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
    [227, 119, 194],
    [127, 127, 127],
];

/// A named (x, y) series, as read from a CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

/// Extracts columns `x` and `y` from CSV text with a header row. Rows with an empty field in
/// either column are skipped.
pub fn series_from_csv(name: &str, csv: &str, x: &str, y: &str) -> Result<Series> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::Format(format!("{name}: empty CSV")))?
        .split(',')
        .collect();
    let col = |c: &str| {
        header
            .iter()
            .position(|h| *h == c)
            .ok_or_else(|| Error::Format(format!("{name}: no column {c}")))
    };
    let (xi, yi) = (col(x)?, col(y)?);
    let mut points = Vec::new();
    for (i, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        let get = |k: usize| f.get(k).map(|s| s.trim()).filter(|s| !s.is_empty());
        let (Some(a), Some(b)) = (get(xi), get(yi)) else {
            continue;
        };
        let parse = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::Format(format!("{name}: row {}: bad number {s}", i + 2)))
        };
        points.push((parse(a)?, parse(b)?));
    }
    Ok(Series {
        name: name.to_string(),
        points,
    })
}

/// Data-space rectangle shown by a plot.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Bounds {
    pub x: (f64, f64),
    pub y: (f64, f64),
}

impl Bounds {
    pub fn of(series: &[Series]) -> Bounds {
        let mut b = Bounds {
            x: (f64::INFINITY, f64::NEG_INFINITY),
            y: (f64::INFINITY, f64::NEG_INFINITY),
        };
        for &(x, y) in series.iter().flat_map(|s| &s.points) {
            b.x = (b.x.0.min(x), b.x.1.max(x));
            b.y = (b.y.0.min(y), b.y.1.max(y));
        }
        let widen = |(lo, hi): (f64, f64)| {
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                (lo, hi)
            }
        };
        Bounds {
            x: widen(b.x),
            y: widen(b.y),
        }
    }

    /// Pixel position of a data point (y grows downward in the image).
    pub fn to_pixel(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let w = (WIDTH - 2 * MARGIN) as f64;
        let h = (HEIGHT - 2 * MARGIN) as f64;
        let px = MARGIN as f64 + (x - self.x.0) / (self.x.1 - self.x.0) * w;
        let py = (HEIGHT - MARGIN) as f64 - (y - self.y.0) / (self.y.1 - self.y.0) * h;
        (px, py)
    }
}

fn canvas(bounds: &Bounds) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, Rgb([255, 255, 255]));
    let axis = Rgb([0, 0, 0]);
    for x in MARGIN..=WIDTH - MARGIN {
        img.put_pixel(x, HEIGHT - MARGIN, axis);
    }
    for y in MARGIN..=HEIGHT - MARGIN {
        img.put_pixel(MARGIN, y, axis);
    }
    // dashed zero line when the range straddles it
    if bounds.y.0 < 0.0 && bounds.y.1 > 0.0 {
        let (_, zy) = bounds.to_pixel((bounds.x.0, 0.0));
        for x in (MARGIN..=WIDTH - MARGIN).filter(|x| x / 4 % 2 == 0) {
            img.put_pixel(x, zy.round() as u32, Rgb([180, 180, 180]));
        }
    }
    img
}

fn put(img: &mut RgbImage, x: f64, y: f64, c: Rgb<u8>) {
    let (x, y) = (x.round(), y.round());
    if x >= 0.0 && y >= 0.0 && (x as u32) < WIDTH && (y as u32) < HEIGHT {
        img.put_pixel(x as u32, y as u32, c);
    }
}

fn line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), c: Rgb<u8>) {
    let n = ((b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil() as usize).max(1);
    for i in 0..=n {
        let t = i as f64 / n as f64;
        put(img, a.0 + t * (b.0 - a.0), a.1 + t * (b.1 - a.1), c);
    }
}

pub fn line_chart(series: &[Series]) -> RgbImage {
    let bounds = Bounds::of(series);
    let mut img = canvas(&bounds);
    for (k, s) in series.iter().enumerate() {
        let c = Rgb(PALETTE[k % PALETTE.len()]);
        let px: Vec<(f64, f64)> = s.points.iter().map(|&p| bounds.to_pixel(p)).collect();
        match px.len() {
            0 => {}
            1 => put(&mut img, px[0].0, px[0].1, c),
            _ => {
                for w in px.windows(2) {
                    line(&mut img, w[0], w[1], c);
                }
            }
        }
    }
    img
}

/// Bars from (bin start, bin end, count) rows.
pub fn bar_chart(bins: &[(f64, f64, f64)]) -> RgbImage {
    let pts: Vec<(f64, f64)> = bins.iter().flat_map(|&(a, b, c)| [(a, 0.0), (b, c)]).collect();
    let bounds = Bounds::of(&[Series {
        name: String::new(),
        points: pts,
    }]);
    let mut img = canvas(&bounds);
    let c = Rgb(PALETTE[0]);
    for &(a, b, count) in bins {
        let (x0, y0) = bounds.to_pixel((a, 0.0));
        let (x1, y1) = bounds.to_pixel((b, count));
        let (x0, x1) = (x0.round() as u32, (x1.round() as u32).saturating_sub(1).max(x0.round() as u32));
        for x in x0..=x1 {
            for y in y1.round() as u32..=y0.round() as u32 {
                if x < WIDTH && y < HEIGHT {
                    img.put_pixel(x, y, c);
                }
            }
        }
    }
    img
}

pub fn legend_csv(series: &[Series]) -> String {
    let mut out = String::from("series,r,g,b\n");
    for (k, s) in series.iter().enumerate() {
        let [r, g, b] = PALETTE[k % PALETTE.len()];
        out.push_str(&format!("{},{r},{g},{b}\n", s.name));
    }
    out
}

pub fn save_png(img: &RgbImage, path: impl AsRef<Path>) -> Result<()> {
    img.save(path.as_ref())
        .map_err(|e| Error::Io(std::io::Error::other(e.to_string())))
}
