//! SVG charts and PNG heatmaps. Output depends only on the inputs.

use std::fmt::Write as _;

use image::{Rgb, RgbImage};
use jawkit::lie_stats::{Histogram, PcaEllipsoid};
use jawkit::mesh::TriangleMesh;
use jawkit::tmj_sim::{JointSummary, Side};
use nalgebra::{Point3, Vector3};

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;

/// Linear map from data range to pixel range.
#[derive(Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
    p0: f64,
    p1: f64,
}

impl Axis {
    fn new(lo: f64, hi: f64, p0: f64, p1: f64) -> Self {
        let (lo, hi) = if hi - lo > 1e-12 { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Axis { lo, hi, p0, p1 }
    }

    fn map(&self, v: f64) -> f64 {
        self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)
    }
}

fn svg_open(title: &str, width: f64, height: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">{}</text>\n",
        width / 2.0,
        escape(title)
    )
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn frame(out: &mut String, x: &Axis, y: &Axis, xlabel: &str, ylabel: &str) {
    let (left, right, top, bottom) = (x.p0, x.p1, y.p1, y.p0);
    writeln!(out, "<rect x=\"{left:.1}\" y=\"{top:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>", right - left, bottom - top).unwrap();
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let vx = x.lo + f * (x.hi - x.lo);
        let vy = y.lo + f * (y.hi - y.lo);
        writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{vx:.2}</text>", x.map(vx), bottom + 16.0).unwrap();
        writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{vy:.2}</text>", left - 4.0, y.map(vy) + 4.0).unwrap();
    }
    writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>", (left + right) / 2.0, bottom + 34.0, escape(xlabel)).unwrap();
    writeln!(
        out,
        "<text x=\"14\" y=\"{:.1}\" text-anchor=\"middle\" transform=\"rotate(-90 14 {:.1})\">{}</text>",
        (top + bottom) / 2.0,
        (top + bottom) / 2.0,
        escape(ylabel)
    )
    .unwrap();
}

/// Bars with the mean (solid) and median (dashed) marked.
pub fn histogram_svg(h: &Histogram, title: &str, unit: &str) -> String {
    let mut out = svg_open(title, W, H);
    let edges = h.bin_edges();
    let max = h.counts.iter().copied().max().unwrap_or(1).max(1) as f64;
    let x = Axis::new(edges[0], edges[edges.len() - 1], MARGIN, W - 20.0);
    let y = Axis::new(0.0, max, H - MARGIN, 36.0);
    frame(&mut out, &x, &y, unit, "count");
    for (i, c) in h.counts.iter().enumerate() {
        let (x0, x1) = (x.map(edges[i]), x.map(edges[i + 1]));
        let y0 = y.map(*c as f64);
        writeln!(
            out,
            "<rect x=\"{x0:.1}\" y=\"{y0:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#7fa7d1\" stroke=\"#2c5d8f\"/>",
            (x1 - x0).max(1.0),
            y.map(0.0) - y0
        )
        .unwrap();
    }
    for (v, dash, label) in [(h.mean, "", "mean"), (h.median, " stroke-dasharray=\"6 4\"", "median")] {
        let px = x.map(v);
        writeln!(out, "<line x1=\"{px:.1}\" y1=\"{:.1}\" x2=\"{px:.1}\" y2=\"{:.1}\" stroke=\"#c0392b\" stroke-width=\"2\"{dash}/>", y.p1, y.p0).unwrap();
        writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"#c0392b\">{label} {v:.3}</text>", px + 4.0, y.p1 + if label == "mean" { 12.0 } else { 26.0 }).unwrap();
    }
    out.push_str("</svg>\n");
    out
}

/// Samples projected onto the three principal planes, with the 95% ellipse
/// (semi-axes `r95`) of each plane.
pub fn ellipsoid_svg(points: &[Vector3<f64>], e: &PcaEllipsoid, title: &str) -> String {
    let (pw, ph) = (300.0, 300.0);
    let mut out = svg_open(title, 3.0 * pw + 40.0, ph + 80.0);
    let coords: Vec<[f64; 3]> = points
        .iter()
        .map(|p| {
            let d = p - e.mean;
            [0, 1, 2].map(|k| d.dot(&e.eigenvectors[k]))
        })
        .collect();
    for (panel, (i, j)) in [(0usize, 1usize), (0, 2), (1, 2)].into_iter().enumerate() {
        let extent = coords
            .iter()
            .map(|c| c[i].abs().max(c[j].abs()))
            .fold(e.r95[i].max(e.r95[j]), f64::max)
            * 1.1;
        let left = 20.0 + panel as f64 * pw + 36.0;
        let x = Axis::new(-extent, extent, left, left + pw - 50.0);
        let y = Axis::new(-extent, extent, ph + 20.0, 60.0);
        frame(&mut out, &x, &y, &format!("PC{} [{}]", i + 1, e.space.unit()), &format!("PC{}", j + 1));
        let (cx, cy) = (x.map(0.0), y.map(0.0));
        let rx = x.map(e.r95[i]) - cx;
        let ry = cy - y.map(e.r95[j]);
        writeln!(out, "<ellipse cx=\"{cx:.1}\" cy=\"{cy:.1}\" rx=\"{rx:.1}\" ry=\"{ry:.1}\" fill=\"#7fa7d1\" fill-opacity=\"0.3\" stroke=\"#2c5d8f\"/>").unwrap();
        for c in &coords {
            writeln!(out, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"#c0392b\"/>", x.map(c[i]), y.map(c[j])).unwrap();
        }
    }
    out.push_str("</svg>\n");
    out
}

/// Mean ± σ of each difference map, grouped by side, with the zero line and
/// each side's pooled mean (dashed).
pub fn errorbar_svg(summary: &JointSummary, title: &str) -> String {
    let mut out = svg_open(title, W + 120.0, H);
    let n = summary.points.len();
    let lo = summary.points.iter().map(|p| p.stats.mu - p.stats.sigma).fold(0.0, f64::min);
    let hi = summary.points.iter().map(|p| p.stats.mu + p.stats.sigma).fold(0.0, f64::max);
    let pad = 0.1 * (hi - lo).max(1e-3);
    let x = Axis::new(-0.5, n as f64 - 0.5, MARGIN + 10.0, W + 100.0);
    let y = Axis::new(lo - pad, hi + pad, H - MARGIN, 36.0);
    frame(&mut out, &x, &y, "report", "distance difference [mm]");
    let z = y.map(0.0);
    writeln!(out, "<line x1=\"{:.1}\" y1=\"{z:.1}\" x2=\"{:.1}\" y2=\"{z:.1}\" stroke=\"black\" stroke-width=\"1.5\"/>", x.p0, x.p1).unwrap();
    let color = |s: Side| if s == Side::Left { "#2c5d8f" } else { "#c0392b" };
    for (side, pooled) in &summary.pooled {
        let idx: Vec<usize> = (0..n).filter(|&k| summary.points[k].side == *side).collect();
        if let (Some(a), Some(b)) = (idx.first(), idx.last()) {
            let py = y.map(pooled.mu);
            writeln!(
                out,
                "<line x1=\"{:.1}\" y1=\"{py:.1}\" x2=\"{:.1}\" y2=\"{py:.1}\" stroke=\"{}\" stroke-dasharray=\"6 4\"/>",
                x.map(*a as f64 - 0.4),
                x.map(*b as f64 + 0.4),
                color(*side)
            )
            .unwrap();
            writeln!(out, "<text x=\"{:.1}\" y=\"{:.1}\" fill=\"{}\">{side} pooled {:.3} ± {:.3}</text>", x.map(*a as f64), 50.0 + if *side == Side::Left { 0.0 } else { 14.0 }, color(*side), pooled.mu, pooled.sigma).unwrap();
        }
    }
    for (k, p) in summary.points.iter().enumerate() {
        let px = x.map(k as f64);
        let (y0, y1) = (y.map(p.stats.mu - p.stats.sigma), y.map(p.stats.mu + p.stats.sigma));
        let c = color(p.side);
        writeln!(out, "<line x1=\"{px:.1}\" y1=\"{y0:.1}\" x2=\"{px:.1}\" y2=\"{y1:.1}\" stroke=\"{c}\"/>").unwrap();
        writeln!(out, "<circle cx=\"{px:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{c}\"><title>{} {} {}</title></circle>", y.map(p.stats.mu), p.splint_id, p.repeat_id, p.side).unwrap();
    }
    out.push_str("</svg>\n");
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ColorRamp {
    /// `0..=max`, perceptually ordered dark blue to yellow.
    Sequential { max: f64 },
    /// `-limit..=limit`, blue through white to red.
    Diverging { limit: f64 },
}

const VIRIDIS: [[f64; 3]; 6] = [
    [68.0, 1.0, 84.0],
    [65.0, 68.0, 135.0],
    [42.0, 120.0, 142.0],
    [34.0, 168.0, 132.0],
    [122.0, 209.0, 81.0],
    [253.0, 231.0, 37.0],
];
const DIVERGING: [[f64; 3]; 5] = [
    [33.0, 102.0, 172.0],
    [146.0, 197.0, 222.0],
    [247.0, 247.0, 247.0],
    [244.0, 165.0, 130.0],
    [178.0, 24.0, 43.0],
];
const MASKED: Rgb<u8> = Rgb([170, 170, 170]);
const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);

fn sample_ramp(stops: &[[f64; 3]], f: f64) -> Rgb<u8> {
    let f = f.clamp(0.0, 1.0) * (stops.len() - 1) as f64;
    let i = (f.floor() as usize).min(stops.len() - 2);
    let t = f - i as f64;
    let c = [0, 1, 2].map(|k| (stops[i][k] + t * (stops[i + 1][k] - stops[i][k])).round() as u8);
    Rgb(c)
}

impl ColorRamp {
    pub fn color(&self, v: Option<f64>) -> Rgb<u8> {
        match (self, v) {
            (_, None) => MASKED,
            (ColorRamp::Sequential { max }, Some(v)) => sample_ramp(&VIRIDIS, v / max),
            (ColorRamp::Diverging { limit }, Some(v)) => sample_ramp(&DIVERGING, 0.5 + 0.5 * v / limit),
        }
    }
}

/// Orthographic view of a per-vertex scalar field along `view` (the camera
/// looks in this direction), z-buffered, with a color bar along the bottom.
pub fn heatmap(mesh: &TriangleMesh, values: &[Option<f64>], ramp: ColorRamp, view: Vector3<f64>, size: u32) -> RgbImage {
    assert_eq!(values.len(), mesh.vertex_count());
    let bar = 24u32;
    let mut img = RgbImage::from_pixel(size, size + bar, BACKGROUND);
    let d = view.normalize();
    let helper = if d.z.abs() < 0.9 { Vector3::z() } else { Vector3::y() };
    let u = helper.cross(&d).normalize();
    let v = d.cross(&u);
    let project = |p: &Point3<f64>| (p.coords.dot(&u), p.coords.dot(&v), p.coords.dot(&d));
    let proj: Vec<(f64, f64, f64)> = mesh.vertices().iter().map(project).collect();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for &(a, b, _) in &proj {
        lo = [lo[0].min(a), lo[1].min(b)];
        hi = [hi[0].max(a), hi[1].max(b)];
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9) * 1.05;
    let center = [(lo[0] + hi[0]) / 2.0, (lo[1] + hi[1]) / 2.0];
    let s = size as f64;
    let to_px = |a: f64, b: f64| ((a - center[0]) / span * s + s / 2.0, s / 2.0 - (b - center[1]) / span * s);
    let mut depth = vec![f64::INFINITY; (size * size) as usize];
    for tri in mesh.triangles() {
        let p = tri.map(|i| {
            let (a, b, z) = proj[i as usize];
            let (x, y) = to_px(a, b);
            (x, y, z)
        });
        let area = (p[1].0 - p[0].0) * (p[2].1 - p[0].1) - (p[2].0 - p[0].0) * (p[1].1 - p[0].1);
        if area.abs() < 1e-12 {
            continue;
        }
        let x0 = p.iter().map(|q| q.0).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
        let x1 = p.iter().map(|q| q.0).fold(f64::NEG_INFINITY, f64::max).ceil().min(s - 1.0) as u32;
        let y0 = p.iter().map(|q| q.1).fold(f64::INFINITY, f64::min).floor().max(0.0) as u32;
        let y1 = p.iter().map(|q| q.1).fold(f64::NEG_INFINITY, f64::max).ceil().min(s - 1.0) as u32;
        let vals = tri.map(|i| values[i as usize]);
        for py in y0..=y1 {
            for px in x0..=x1 {
                let (cx, cy) = (px as f64 + 0.5, py as f64 + 0.5);
                let w = [
                    ((p[1].0 - cx) * (p[2].1 - cy) - (p[2].0 - cx) * (p[1].1 - cy)) / area,
                    ((p[2].0 - cx) * (p[0].1 - cy) - (p[0].0 - cx) * (p[2].1 - cy)) / area,
                    ((p[0].0 - cx) * (p[1].1 - cy) - (p[1].0 - cx) * (p[0].1 - cy)) / area,
                ];
                if w.iter().any(|&x| x < -1e-9) {
                    continue;
                }
                let z = w[0] * p[0].2 + w[1] * p[1].2 + w[2] * p[2].2;
                let k = (py * size + px) as usize;
                if z >= depth[k] {
                    continue;
                }
                depth[k] = z;
                let value = match vals {
                    [Some(a), Some(b), Some(c)] => Some(w[0] * a + w[1] * b + w[2] * c),
                    _ => None,
                };
                img.put_pixel(px, py, ramp.color(value));
            }
        }
    }
    for px in 0..size {
        let f = px as f64 / (size - 1).max(1) as f64;
        let value = match ramp {
            ColorRamp::Sequential { max } => f * max,
            ColorRamp::Diverging { limit } => (2.0 * f - 1.0) * limit,
        };
        for py in size + 4..size + bar {
            img.put_pixel(px, py, ramp.color(Some(value)));
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use jawkit::lie_stats::{histogram, PcaSpace};

    #[test]
    fn ramps_hit_endpoints() {
        let r = ColorRamp::Diverging { limit: 2.0 };
        assert_eq!(r.color(Some(0.0)), Rgb([247, 247, 247]));
        assert_eq!(r.color(Some(-5.0)), Rgb([33, 102, 172]));
        assert_eq!(r.color(None), MASKED);
        let s = ColorRamp::Sequential { max: 10.0 };
        assert_eq!(s.color(Some(10.0)), Rgb([253, 231, 37]));
    }

    #[test]
    fn svgs_are_well_formed_and_stable() {
        let h = histogram(&[1.0, 2.0, 2.5, 4.0], 4).unwrap();
        let a = histogram_svg(&h, "t_norm", "mm");
        assert_eq!(a, histogram_svg(&h, "t_norm", "mm"));
        assert!(a.starts_with("<svg") && a.trim_end().ends_with("</svg>"));
        let e = PcaEllipsoid::from_eigenvalues(PcaSpace::Translation, [4.0, 1.0, 0.25]);
        let s = ellipsoid_svg(&[Vector3::new(1.0, 0.0, 0.0)], &e, "translation");
        assert_eq!(s.matches("<ellipse").count(), 3);
    }

    #[test]
    fn heatmap_covers_a_plate() {
        let v = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(1.0, 0.0, 0.0), Point3::new(1.0, 1.0, 0.0), Point3::new(0.0, 1.0, 0.0)];
        let mesh = TriangleMesh::new(v, vec![[0, 1, 2], [0, 2, 3]]).unwrap();
        let img = heatmap(&mesh, &[Some(0.0), Some(10.0), Some(10.0), None], ColorRamp::Sequential { max: 10.0 }, Vector3::z(), 64);
        assert_eq!(img.dimensions(), (64, 88));
        assert_ne!(*img.get_pixel(32, 32), BACKGROUND);
    }
}
