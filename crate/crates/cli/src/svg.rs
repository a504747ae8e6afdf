//! Minimal self-contained SVG charts. CSV files stay the canonical output.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(title: &str) -> String {
    let mut s = String::new();
    writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#).unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title)).unwrap();
    s
}

/// Value axis: either linear over `[lo, hi]` or log10 over whole decades.
struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn new(values: impl Iterator<Item = f64>, log: bool) -> Self {
        let vals: Vec<f64> = values.filter(|v| v.is_finite() && (!log || *v > 0.0)).collect();
        if vals.is_empty() {
            return Self { lo: 0.0, hi: 1.0, log: false };
        }
        let (mut lo, mut hi) = vals.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if log {
            lo = lo.log10().floor();
            hi = hi.log10().ceil();
            if hi <= lo {
                hi = lo + 1.0;
            }
        } else {
            lo = lo.min(0.0);
            if hi <= lo {
                hi = lo + 1.0;
            }
        }
        Self { lo, hi, log }
    }

    /// Pixel y of `v`, `None` if not drawable.
    fn y(&self, v: f64) -> Option<f64> {
        let t = if self.log {
            if !(v > 0.0) || !v.is_finite() {
                return None;
            }
            v.log10()
        } else if v.is_finite() {
            v
        } else {
            return None;
        };
        let frac = ((t - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0);
        Some(H - BOTTOM - frac * (H - TOP - BOTTOM))
    }

    fn ticks(&self, out: &mut String) {
        let steps = if self.log { (self.hi - self.lo) as usize } else { 5 };
        for i in 0..=steps {
            let t = self.lo + (self.hi - self.lo) * i as f64 / steps as f64;
            let (v, label) = if self.log { (10f64.powf(t), format!("1e{t:.0}")) } else { (t, format!("{t:.3}")) };
            let y = self.y(v).unwrap_or(H - BOTTOM);
            writeln!(out, r##"<line x1="{LEFT}" x2="{}" y1="{y:.1}" y2="{y:.1}" stroke="#ddd"/>"##, W - RIGHT).unwrap();
            writeln!(out, r#"<text x="{}" y="{:.1}" text-anchor="end">{label}</text>"#, LEFT - 6.0, y + 4.0).unwrap();
        }
    }
}

fn frame(out: &mut String, x_label: &str, y_label: &str) {
    writeln!(out, r#"<rect x="{LEFT}" y="{TOP}" width="{}" height="{}" fill="none" stroke="black"/>"#, W - LEFT - RIGHT, H - TOP - BOTTOM).unwrap();
    writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (LEFT + W - RIGHT) / 2.0, H - 12.0, escape(x_label)).unwrap();
    writeln!(
        out,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (TOP + H - BOTTOM) / 2.0,
        escape(y_label)
    )
    .unwrap();
}

/// One bar per label on a log-scaled value axis.
pub fn bar_chart_log(title: &str, y_label: &str, labels: &[String], values: &[f64]) -> String {
    let mut s = header(title);
    let axis = Axis::new(values.iter().copied(), true);
    axis.ticks(&mut s);
    let slot = (W - LEFT - RIGHT) / labels.len().max(1) as f64;
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let x = LEFT + slot * (i as f64 + 0.15);
        if let Some(y) = axis.y(v) {
            writeln!(s, r#"<rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#, slot * 0.7, H - BOTTOM - y, COLORS[0]).unwrap();
        }
        writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, x + slot * 0.35, H - BOTTOM + 16.0, escape(label)).unwrap();
    }
    frame(&mut s, "", y_label);
    s.push_str("</svg>\n");
    s
}

/// Polylines over a shared x axis; non-drawable points break the line.
pub fn line_chart(title: &str, x_label: &str, y_label: &str, x: &[f64], series: &[(String, Vec<f64>)], log_y: bool) -> String {
    let mut s = header(title);
    let axis = Axis::new(series.iter().flat_map(|(_, v)| v.iter().copied()), log_y);
    axis.ticks(&mut s);
    let (x0, x1) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if x1 > x0 { x1 - x0 } else { 1.0 };
    let px = |v: f64| LEFT + (v - x0) / span * (W - LEFT - RIGHT);
    for tick in [x0, x0 + span / 2.0, x1] {
        writeln!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, px(tick), H - BOTTOM + 16.0, trim(tick)).unwrap();
    }
    for (k, (name, ys)) in series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let mut path = String::new();
        let mut pen_down = false;
        for (&xv, &yv) in x.iter().zip(ys) {
            match axis.y(yv) {
                Some(py) => {
                    write!(path, "{}{:.1},{:.1} ", if pen_down { "L" } else { "M" }, px(xv), py).unwrap();
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        if !path.is_empty() {
            writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.trim_end()).unwrap();
        }
        let ly = TOP + 16.0 + 16.0 * k as f64;
        writeln!(s, r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#, W - RIGHT - 8.0, escape(name)).unwrap();
    }
    frame(&mut s, x_label, y_label);
    s.push_str("</svg>\n");
    s
}

fn trim(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e9 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_wellformed_and_skip_bad_values() {
        let bars = bar_chart_log("e", "error", &["Z2^0".into(), "Z3^1".into()], &[1e-3, f64::NAN]);
        assert!(bars.starts_with("<svg") && bars.trim_end().ends_with("</svg>"));
        assert_eq!(bars.matches("<rect x=").count(), 2); // one bar plus frame
        let lines = line_chart("eps", "p", "eps", &[1.0, 2.0, 3.0], &[("ol".into(), vec![0.1, f64::INFINITY, 0.01])], true);
        assert_eq!(lines.matches('M').count(), 2);
    }
}
