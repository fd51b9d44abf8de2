//! `plot`: standalone SVG with axes, one polyline per probe, a legend and an
//! optional zoom inset. Output bytes depend only on the inputs.

use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;

use transient_bench_core::WaveformSet;

use crate::waveform_csv::read_waveforms;
use crate::{CliError, CliResult};

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 540.0;
const MARGIN_LEFT: f64 = 80.0;
const MARGIN_RIGHT: f64 = 24.0;
const MARGIN_TOP: f64 = 28.0;
const MARGIN_BOTTOM: f64 = 52.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Debug, Clone, Copy)]
struct Rect {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
}

struct Panel<'a> {
    rect: Rect,
    t: (f64, f64),
    y: (f64, f64),
    range: (usize, usize),
    set: &'a WaveformSet,
    columns: &'a [(&'a str, &'a [f64])],
}

impl Panel<'_> {
    fn px(&self, t: f64) -> f64 {
        self.rect.x + (t - self.t.0) / (self.t.1 - self.t.0) * self.rect.w
    }

    fn py(&self, v: f64) -> f64 {
        self.rect.y + self.rect.h - (v - self.y.0) / (self.y.1 - self.y.0) * self.rect.h
    }
}

/// Tick spacing of 1, 2 or 5 times a power of ten giving about `target` ticks.
pub fn nice_step(span: f64, target: usize) -> f64 {
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let m = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

/// `12.5 k`, `300 µ`-style label with an SI prefix.
pub fn si_label(v: f64, unit: &str) -> String {
    if v == 0.0 {
        return format!("0 {unit}").trim_end().to_string();
    }
    const PREFIXES: [(f64, &str); 7] = [
        (1e6, "M"),
        (1e3, "k"),
        (1.0, ""),
        (1e-3, "m"),
        (1e-6, "µ"),
        (1e-9, "n"),
        (1e-12, "p"),
    ];
    let a = v.abs() * (1.0 + 1e-9);
    let (scale, prefix) = PREFIXES
        .iter()
        .copied()
        .find(|(s, _)| a >= *s)
        .unwrap_or(PREFIXES[PREFIXES.len() - 1]);
    let scaled = v / scale;
    let mut text = format!("{scaled:.3}");
    while text.contains('.') && (text.ends_with('0') || text.ends_with('.')) {
        text.pop();
    }
    format!("{text} {prefix}{unit}").trim_end().to_string()
}

fn ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let step = nice_step(hi - lo, target);
    let first = (lo / step - 1e-9).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Sample index range `[lo, hi]` covering `(a, b)`, or `None` if it holds
/// fewer than two samples.
fn index_range(set: &WaveformSet, (a, b): (f64, f64)) -> Option<(usize, usize)> {
    let lo = ((a - set.t0()) / set.dt() - 1e-9).ceil().max(0.0) as usize;
    let hi = (((b - set.t0()) / set.dt() + 1e-9).floor() as i64).min(set.len() as i64 - 1);
    (hi >= 0 && (hi as usize) > lo).then_some((lo, hi as usize))
}

/// Clips `window` to the record, warning when it reaches outside.
fn clip(
    set: &WaveformSet,
    window: (f64, f64),
    what: &str,
    warnings: &mut Vec<String>,
) -> (f64, f64) {
    let (first, last) = (set.time(0), set.time(set.len() - 1));
    let clipped = (window.0.max(first), window.1.min(last));
    if clipped != window {
        warnings.push(format!(
            "{what} {}:{} s extends beyond the record {first}:{last} s; clipped",
            window.0, window.1
        ));
    }
    clipped
}

fn value_range(columns: &[(&str, &[f64])], (lo, hi): (usize, usize)) -> (f64, f64) {
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    for (_, c) in columns {
        for v in &c[lo..=hi] {
            min = min.min(*v);
            max = max.max(*v);
        }
    }
    if max - min <= f64::EPSILON * max.abs().max(min.abs()).max(1e-300) {
        let pad = if max == 0.0 { 1.0 } else { 0.1 * max.abs() };
        return (min - pad, max + pad);
    }
    let pad = 0.05 * (max - min);
    (min - pad, max + pad)
}

/// Min/max per pixel column, in time order.
fn decimate(panel: &Panel<'_>, values: &[f64]) -> Vec<(f64, f64)> {
    let (lo, hi) = panel.range;
    let columns = panel.rect.w.max(1.0) as usize;
    let n = hi - lo + 1;
    if n <= 2 * columns {
        return (lo..=hi)
            .map(|k| (panel.px(panel.set.time(k)), panel.py(values[k])))
            .collect();
    }
    let mut points = Vec::with_capacity(2 * columns);
    for c in 0..columns {
        let a = lo + c * n / columns;
        let b = (lo + (c + 1) * n / columns).min(hi + 1);
        if a >= b {
            continue;
        }
        let (mut kmin, mut kmax) = (a, a);
        for k in a..b {
            if values[k] < values[kmin] {
                kmin = k;
            }
            if values[k] > values[kmax] {
                kmax = k;
            }
        }
        for k in if kmin <= kmax {
            [kmin, kmax]
        } else {
            [kmax, kmin]
        } {
            points.push((panel.px(panel.set.time(k)), panel.py(values[k])));
        }
    }
    points.dedup();
    points
}

fn draw_panel(svg: &mut String, panel: &Panel<'_>, labels: bool) {
    let r = panel.rect;
    let font = if labels { 12 } else { 10 };
    let _ = writeln!(
        svg,
        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="white" stroke="black" stroke-width="1"/>"#,
        r.x, r.y, r.w, r.h
    );
    let target = if labels { 8 } else { 4 };
    for t in ticks(panel.t.0, panel.t.1, target) {
        let x = panel.px(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#dddddd" stroke-width="0.5"/>"##,
            r.y,
            r.y + r.h
        );
        let _ = writeln!(
            svg,
            r#"<text x="{x:.2}" y="{:.2}" font-size="{font}" text-anchor="middle">{}</text>"#,
            r.y + r.h + font as f64 + 4.0,
            esc(&si_label(t, "s"))
        );
    }
    for v in ticks(panel.y.0, panel.y.1, if labels { 6 } else { 4 }) {
        let y = panel.py(v);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#dddddd" stroke-width="0.5"/>"##,
            r.x,
            r.x + r.w
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="{font}" text-anchor="end">{}</text>"#,
            r.x - 4.0,
            y + font as f64 / 3.0,
            esc(&si_label(v, ""))
        );
    }
    let clip_id = if labels { "main" } else { "inset" };
    let _ = writeln!(
        svg,
        r#"<clipPath id="clip-{clip_id}"><rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/></clipPath>"#,
        r.x, r.y, r.w, r.h
    );
    for (k, (name, values)) in panel.columns.iter().enumerate() {
        let mut points = String::new();
        for (x, y) in decimate(panel, values) {
            let _ = write!(points, "{x:.2},{y:.2} ");
        }
        let _ = writeln!(
            svg,
            r#"<polyline data-probe="{}" clip-path="url(#clip-{clip_id})" fill="none" stroke="{}" stroke-width="1" points="{}"/>"#,
            esc(name),
            PALETTE[k % PALETTE.len()],
            points.trim_end()
        );
    }
}

/// Renders the SVG document; `warnings` collects clipping notices.
pub fn render(
    set: &WaveformSet,
    probes: &[String],
    t_range: Option<(f64, f64)>,
    zoom: Option<(f64, f64)>,
    warnings: &mut Vec<String>,
) -> CliResult<String> {
    if probes.is_empty() {
        return Err(CliError::usage("no probes selected"));
    }
    if set.is_empty() {
        return Err(CliError::usage("record holds no samples"));
    }
    let mut columns = Vec::with_capacity(probes.len());
    for p in probes {
        let values = set.probe(p).ok_or_else(|| {
            CliError::usage(format!(
                "unknown probe `{p}` (available: {})",
                set.names().join(", ")
            ))
        })?;
        columns.push((p.as_str(), values));
    }

    let full = (set.time(0), set.time(set.len() - 1));
    let window = match t_range {
        Some(w) => clip(set, w, "time range", warnings),
        None => full,
    };
    let range = index_range(set, window)
        .ok_or_else(|| CliError::usage("selected time range holds fewer than two samples"))?;
    let t = (set.time(range.0), set.time(range.1));

    let plot = Rect {
        x: MARGIN_LEFT,
        y: MARGIN_TOP,
        w: WIDTH - MARGIN_LEFT - MARGIN_RIGHT,
        h: HEIGHT - MARGIN_TOP - MARGIN_BOTTOM,
    };
    let main = Panel {
        rect: plot,
        t,
        y: value_range(&columns, range),
        range,
        set,
        columns: &columns,
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    draw_panel(&mut svg, &main, true);
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" font-size="13" text-anchor="middle">time</text>"#,
        plot.x + plot.w / 2.0,
        HEIGHT - 10.0
    );

    for (k, (name, _)) in columns.iter().enumerate() {
        let y = plot.y + 16.0 + 16.0 * k as f64;
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-width="2"/>"#,
            plot.x + 10.0,
            y - 4.0,
            plot.x + 30.0,
            y - 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="12">{}</text>"#,
            plot.x + 36.0,
            y,
            esc(name)
        );
    }

    if let Some(z) = zoom {
        let z = clip(set, z, "zoom window", warnings);
        let zrange = index_range(set, z)
            .ok_or_else(|| CliError::usage("zoom window holds fewer than two samples"))?;
        let rect = Rect {
            x: plot.x + plot.w * 0.56,
            y: plot.y + 8.0,
            w: plot.w * 0.42,
            h: plot.h * 0.40,
        };
        let inset = Panel {
            rect,
            t: (set.time(zrange.0), set.time(zrange.1)),
            y: value_range(&columns, zrange),
            range: zrange,
            set,
            columns: &columns,
        };
        let _ = writeln!(svg, r#"<g class="zoom-inset">"#);
        draw_panel(&mut svg, &inset, false);
        let _ = writeln!(svg, "</g>");
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn plot(
    csv: &Path,
    probes: &[String],
    t_range: Option<(f64, f64)>,
    zoom: Option<(f64, f64)>,
    svg_path: &Path,
    out: &mut dyn Write,
) -> CliResult<()> {
    let set = read_waveforms(csv)?;
    let mut warnings = Vec::new();
    let svg = render(&set, probes, t_range, zoom, &mut warnings)?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    std::fs::write(svg_path, svg)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", svg_path.display())))?;
    writeln!(
        out,
        "wrote {} ({} probes)",
        svg_path.display(),
        probes.len()
    )
    .map_err(|e| CliError::io(e.to_string()))
}
