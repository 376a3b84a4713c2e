//! Static scatter plots of complex spectra.

use std::f64::consts::PI;
use std::fmt::Write;

use capres_core::deformation::a_of_theta;
use capres_core::spectra::SectorWindow;
use capres_core::Complex64;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const PAD: f64 = 40.0;

struct Frame {
    re_min: f64,
    re_max: f64,
    im_min: f64,
    im_max: f64,
}

impl Frame {
    fn fit(points: &[Complex64], window: Option<&SectorWindow>) -> Frame {
        let mut re = (0.0f64, 0.0f64);
        let mut im = (0.0f64, 0.0f64);
        let mut take = |z: Complex64| {
            if z.re.is_finite() && z.im.is_finite() {
                re = (re.0.min(z.re), re.1.max(z.re));
                im = (im.0.min(z.im), im.1.max(z.im));
            }
        };
        points.iter().copied().for_each(&mut take);
        if let Some(w) = window {
            for z in window_outline(w) {
                take(z);
            }
        }
        let span = (re.1 - re.0).max(im.1 - im.0).max(1e-6);
        let m = 0.05 * span;
        Frame {
            re_min: re.0 - m,
            re_max: re.1 + m,
            im_min: im.0 - m,
            im_max: im.1 + m,
        }
    }

    fn map(&self, z: Complex64) -> (f64, f64) {
        let x = PAD + (z.re - self.re_min) / (self.re_max - self.re_min) * (WIDTH - 2.0 * PAD);
        let y = HEIGHT - PAD - (z.im - self.im_min) / (self.im_max - self.im_min) * (HEIGHT - 2.0 * PAD);
        (x, y)
    }

    /// Far end of the ray `t e^{iψ}`, `t ≥ 0`, clipped to the frame.
    fn ray_end(&self, psi: f64) -> Complex64 {
        let d = Complex64::from_polar(1.0, psi);
        let mut t = f64::INFINITY;
        for (lo, hi, v) in [(self.re_min, self.re_max, d.re), (self.im_min, self.im_max, d.im)] {
            if v > 1e-12 {
                t = t.min(hi / v);
            } else if v < -1e-12 {
                t = t.min(lo / v);
            }
        }
        d * t.max(0.0)
    }
}

fn window_outline(w: &SectorWindow) -> Vec<Complex64> {
    let steps = 32;
    let arc = |r: f64| (0..=steps).map(move |k| Complex64::from_polar(r, w.arg_min + (w.arg_max - w.arg_min) * k as f64 / steps as f64));
    let mut pts: Vec<Complex64> = arc(w.r_max.min(1e6)).collect();
    pts.extend(arc(w.r_min).collect::<Vec<_>>().into_iter().rev());
    pts.push(pts[0]);
    pts
}

/// Scatter of `points` with the essential ray `arg z = -2a(θ)` and the
/// window outline. Output depends only on the inputs.
pub fn scatter(title: &str, points: &[Complex64], theta: Complex64, window: Option<&SectorWindow>) -> String {
    let frame = Frame::fit(points, window);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{PAD}" y="24" font-family="sans-serif" font-size="14">{}</text>"#, escape(title));

    let (x0, y0) = frame.map(Complex64::new(frame.re_min, 0.0));
    let (x1, _) = frame.map(Complex64::new(frame.re_max, 0.0));
    let _ = writeln!(s, r##"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="#999" stroke-width="1"/>"##);
    let (xa, ya) = frame.map(Complex64::new(0.0, frame.im_min));
    let (_, yb) = frame.map(Complex64::new(0.0, frame.im_max));
    let _ = writeln!(s, r##"<line x1="{xa:.2}" y1="{ya:.2}" x2="{xa:.2}" y2="{yb:.2}" stroke="#999" stroke-width="1"/>"##);

    let psi = -2.0 * a_of_theta(theta);
    let (ox, oy) = frame.map(Complex64::new(0.0, 0.0));
    let (ex, ey) = frame.map(frame.ray_end(psi));
    let _ = writeln!(
        s,
        r##"<line x1="{ox:.2}" y1="{oy:.2}" x2="{ex:.2}" y2="{ey:.2}" stroke="#c33" stroke-width="1.5" stroke-dasharray="6 4"/>"##
    );
    let _ = writeln!(
        s,
        r##"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="11" fill="#c33">arg z = {:.2} deg</text>"##,
        ex - 90.0,
        ey - 6.0,
        psi * 180.0 / PI
    );

    if let Some(w) = window {
        let pts: Vec<String> = window_outline(w)
            .into_iter()
            .map(|z| {
                let (x, y) = frame.map(z);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#36c" stroke-width="1"/>"##, pts.join(" "));
    }

    for z in points.iter().filter(|z| z.re.is_finite() && z.im.is_finite()) {
        let (x, y) = frame.map(*z);
        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="black"/>"#);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
