//! Minimal SVG emitter for log-linear decay plots, one panel per curve.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const PANEL_HEIGHT: f64 = 220.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 40.0;
/// Decades shown below the largest value.
const MAX_DECADES: i32 = 6;

pub struct Panel {
    pub title: String,
    /// (t, y) with y > 0 plotted on a log axis.
    pub points: Vec<(f64, f64)>,
    pub curve: Vec<(f64, f64)>,
}

fn fmt_num(x: f64) -> String {
    let s = format!("{x:.2}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

fn nice_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.5 {
        2.0
    } else if norm < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn render_panel(out: &mut String, panel: &Panel, y0: f64) {
    let positive = |v: &&(f64, f64)| v.1 > 0.0 && v.1.is_finite();
    let all: Vec<(f64, f64)> = panel
        .points
        .iter()
        .chain(&panel.curve)
        .filter(positive)
        .copied()
        .collect();
    let t_max = all.iter().map(|p| p.0).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let y_hi = all.iter().map(|p| p.1).fold(f64::MIN_POSITIVE, f64::max);
    let y_lo = all.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let top_dec = y_hi.log10().ceil() as i32;
    let bottom_dec = (y_lo.log10().floor() as i32).max(top_dec - MAX_DECADES).min(top_dec - 1);

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = PANEL_HEIGHT - TOP - BOTTOM;
    let sx = |t: f64| LEFT + plot_w * t / t_max;
    let sy = |y: f64| {
        let frac = (y.log10() - bottom_dec as f64) / (top_dec - bottom_dec) as f64;
        y0 + TOP + plot_h * (1.0 - frac)
    };
    let in_range = |y: f64| y > 0.0 && y.log10() >= bottom_dec as f64;

    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="13" font-family="sans-serif">{}</text>"#,
        LEFT,
        y0 + TOP - 10.0,
        panel.title
    );
    let _ = writeln!(
        out,
        r##"<rect x="{LEFT:.1}" y="{:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#333"/>"##,
        y0 + TOP
    );
    for d in bottom_dec..=top_dec {
        let y = sy(10f64.powi(d));
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{LEFT:.1}" y2="{y:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" font-size="10" text-anchor="end" font-family="sans-serif">1e{d}</text>"##,
            LEFT - 5.0,
            LEFT - 8.0,
            y + 3.0
        );
    }
    let step = nice_step(t_max);
    let mut k = 0;
    while step * k as f64 <= t_max * (1.0 + 1e-9) {
        let t = step * k as f64;
        let x = sx(t);
        let base = y0 + TOP + plot_h;
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{base:.1}" x2="{x:.1}" y2="{:.1}" stroke="#333"/><text x="{x:.1}" y="{:.1}" font-size="10" text-anchor="middle" font-family="sans-serif">{}</text>"##,
            base + 5.0,
            base + 17.0,
            fmt_num(t)
        );
        k += 1;
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="{:.1}" font-size="11" text-anchor="middle" font-family="sans-serif">t (s)</text>"#,
        LEFT + plot_w / 2.0,
        y0 + PANEL_HEIGHT - 6.0
    );

    let line: Vec<String> = panel
        .curve
        .iter()
        .filter(|p| in_range(p.1))
        .map(|&(t, y)| format!("{:.2},{:.2}", sx(t), sy(y)))
        .collect();
    if !line.is_empty() {
        let _ = writeln!(
            out,
            r##"<polyline fill="none" stroke="#c0392b" stroke-width="1.5" points="{}"/>"##,
            line.join(" ")
        );
    }
    for &(t, y) in panel.points.iter().filter(|p| in_range(p.1)) {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#2c3e50"/>"##,
            sx(t),
            sy(y)
        );
    }
}

pub fn render(panels: &[Panel]) -> String {
    let height = PANEL_HEIGHT * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, panel) in panels.iter().enumerate() {
        render_panel(&mut out, panel, PANEL_HEIGHT * i as f64);
    }
    out.push_str("</svg>\n");
    out
}
