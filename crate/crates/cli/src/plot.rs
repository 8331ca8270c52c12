//! Minimal SVG line chart of cumulative attempts over time.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::CliError;

const W: f64 = 640.0;
const H: f64 = 400.0;
const MARGIN: f64 = 50.0;
const COLORS: [&str; 6] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"];

/// Reads `curves.csv` (`arms,t,mean_cumulative_attempts,...`) into one series per arm count.
pub fn parse_curves(text: &str) -> Result<BTreeMap<usize, Vec<(f64, f64)>>, CliError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| CliError::Input("curves file is empty".into()))?;
    if !header.starts_with("arms,t,mean_cumulative_attempts") {
        return Err(CliError::Input(format!("unexpected curves header `{header}`")));
    }
    let mut series: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || CliError::Input(format!("curves line {}: `{line}`", i + 2));
        let mut cols = line.split(',');
        let arms: usize = cols.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let t: f64 = cols.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        let y: f64 = cols.next().and_then(|v| v.parse().ok()).ok_or_else(bad)?;
        series.entry(arms).or_default().push((t, y));
    }
    Ok(series)
}

pub fn curves_svg(series: &BTreeMap<usize, Vec<(f64, f64)>>) -> String {
    let pts = series.values().flatten();
    let t_max = pts.clone().map(|p| p.0).fold(1.0, f64::max);
    let y_max = pts.map(|p| p.1).fold(1.0, f64::max).ceil();
    let sx = |t: f64| MARGIN + t / t_max * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - y / y_max * (H - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (x0, y0, x1, y1) = (sx(0.0), sy(0.0), sx(t_max), sy(y_max));
    let _ = writeln!(s, r#"<path d="M{x0},{y1} L{x0},{y0} L{x1},{y0}" stroke="black" fill="none"/>"#);
    for m in 0..=(t_max / 60.0).floor() as usize {
        let x = sx(m as f64 * 60.0);
        let _ = writeln!(s, r#"<line x1="{x}" y1="{y0}" x2="{x}" y2="{}" stroke="black"/>"#, y0 + 4.0);
        let _ = writeln!(s, r#"<text x="{x}" y="{}" text-anchor="middle">{}</text>"#, y0 + 18.0, m * 60);
    }
    let ticks = 5;
    for k in 0..=ticks {
        let v = y_max * k as f64 / ticks as f64;
        let y = sy(v);
        let _ = writeln!(s, r#"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="black"/>"#, x0 - 4.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{v:.1}</text>"#, x0 - 6.0, y + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">time (s)</text>"#, W / 2.0, H - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">cumulative attempts</text>"#,
        H / 2.0,
        H / 2.0
    );
    for (i, (arms, data)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let d: Vec<String> = data.iter().map(|&(t, y)| format!("{:.1},{:.1}", sx(t), sy(y))).collect();
        let _ = writeln!(s, r#"<polyline points="{}" stroke="{color}" stroke-width="2" fill="none"/>"#, d.join(" "));
        let ly = MARGIN + 16.0 * i as f64;
        let _ = writeln!(s, r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, MARGIN + 10.0, MARGIN + 30.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{arms} arm{}</text>"#, MARGIN + 36.0, ly + 4.0, if *arms == 1 { "" } else { "s" });
    }
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_draws_one_polyline_per_series() {
        let text = "arms,t,mean_cumulative_attempts,mean_cumulative_successes\n1,0.0,0,0\n1,60.0,2,1\n6,0.0,0,0\n6,60.0,5,2\n";
        let series = parse_curves(text).unwrap();
        assert_eq!(series.len(), 2);
        assert_eq!(series[&6], vec![(0.0, 0.0), (60.0, 5.0)]);
        let svg = curves_svg(&series);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("6 arms"));
        assert!(parse_curves("x,y\n").is_err());
        assert!(parse_curves("arms,t,mean_cumulative_attempts\n1,zero,0\n").is_err());
    }
}
