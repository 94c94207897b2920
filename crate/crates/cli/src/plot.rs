//! Minimal static SVG line plot of sweep results.

use std::fmt::Write as _;

use doa_core::bench::{BenchRow, SweepAxis, SweepSpec};

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 130.0;
const PAD_T: f64 = 30.0;
const PAD_B: f64 = 50.0;
const COLORS: [&str; 5] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e"];

fn db(mse: f64) -> Option<f64> {
    (mse.is_finite() && mse > 0.0).then(|| 10.0 * mse.log10())
}

/// MSE in dB against the sweep axis, one polyline per estimator.
pub fn render_svg(spec: &SweepSpec, rows: &[BenchRow]) -> String {
    let xs: Vec<f64> = rows.iter().map(|r| r.axis_value).filter(|v| v.is_finite()).collect();
    let ys: Vec<f64> = rows.iter().filter_map(|r| db(r.mse)).collect();
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let sx = |x: f64| PAD_L + (x - x0) / (x1 - x0) * (W - PAD_L - PAD_R);
    let sy = |y: f64| H - PAD_B - (y - y0) / (y1 - y0) * (H - PAD_T - PAD_B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD_L}" y="{PAD_T}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - PAD_L - PAD_R,
        H - PAD_T - PAD_B
    );
    for i in 0..=4 {
        let t = i as f64 / 4.0;
        let xv = x0 + t * (x1 - x0);
        let yv = y0 + t * (y1 - y0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle">{:.3}</text>"#,
            sx(xv),
            H - PAD_B + 16.0,
            xv
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="end">{:.1}</text>"#,
            PAD_L - 6.0,
            sy(yv) + 4.0,
            yv
        );
    }
    let xlabel = match spec.axis {
        SweepAxis::SnrDb => "SNR (dB)",
        SweepAxis::Separation => "separation (rad, electrical)",
    };
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" text-anchor="middle">{xlabel}</text>"#,
        PAD_L + (W - PAD_L - PAD_R) / 2.0,
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" font-size="13" text-anchor="middle" transform="rotate(-90 16 {:.1})">MSE (dB rad²)</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, &method) in spec.estimators.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let pts: Vec<String> = rows
            .iter()
            .filter(|r| r.method == method && r.axis_value.is_finite())
            .filter_map(|r| db(r.mse).map(|y| format!("{:.2},{:.2}", sx(r.axis_value), sy(y))))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = PAD_T + 18.0 * (i as f64 + 1.0);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{ly:.1}" font-size="12" fill="{color}">{method}</text>"#,
            W - PAD_R + 10.0
        );
    }
    s.push_str("</svg>\n");
    s
}

fn bounds(v: &[f64]) -> (f64, f64) {
    let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    (lo, hi)
}
