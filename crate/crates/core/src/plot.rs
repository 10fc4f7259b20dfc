//! Minimal standalone SVG charts for the experiment outputs. CSVs are
//! the canonical artifacts; these are conveniences for eyeballing runs.

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 52.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn scale(v: f64, lo: f64, hi: f64, out_lo: f64, out_hi: f64) -> f64 {
    if (hi - lo).abs() < 1e-12 {
        return (out_lo + out_hi) / 2.0;
    }
    out_lo + (v - lo) / (hi - lo) * (out_hi - out_lo)
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Polyline chart: one series per `(label, points)` entry.
pub fn line_chart(
    title: &str,
    x_label: &str,
    y_label: &str,
    series: &[(&str, Vec<(f64, f64)>)],
) -> String {
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for (_, pts) in series {
        for (x, y) in pts {
            xs.push(*x);
            ys.push(*y);
        }
    }
    let (x_lo, x_hi) = bounds(&xs);
    let (y_lo, y_hi) = bounds(&ys);
    let px = |x: f64| scale(x, x_lo, x_hi, MARGIN_L, WIDTH - MARGIN_R);
    let py = |y: f64| scale(y, y_lo, y_hi, HEIGHT - MARGIN_B, MARGIN_T);

    let mut svg = header(title);
    svg.push_str(&axes(x_lo, x_hi, y_lo, y_hi, x_label, y_label));
    for (i, (label, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts
            .iter()
            .map(|(x, y)| format!("{:.1},{:.1}", px(*x), py(*y)))
            .collect();
        svg.push_str(&format!(
            "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"2\" points=\"{}\"/>\n",
            path.join(" ")
        ));
        for (x, y) in pts {
            svg.push_str(&format!(
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{color}\"/>\n",
                px(*x),
                py(*y)
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            WIDTH - MARGIN_R - 130.0,
            MARGIN_T + 16.0 * (i as f64 + 1.0),
            esc(label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Grouped bar chart: one group per label, one bar per series.
pub fn grouped_bars(title: &str, group_labels: &[String], series: &[(String, Vec<f64>)]) -> String {
    let mut ys: Vec<f64> = vec![0.0];
    for (_, vals) in series {
        ys.extend_from_slice(vals);
    }
    let (y_lo, y_hi) = bounds(&ys);
    let py = |y: f64| scale(y, y_lo, y_hi, HEIGHT - MARGIN_B, MARGIN_T);
    let n_groups = group_labels.len().max(1);
    let group_w = (WIDTH - MARGIN_L - MARGIN_R) / n_groups as f64;
    let bar_w = (group_w * 0.8) / series.len().max(1) as f64;

    let mut svg = header(title);
    svg.push_str(&axes(-0.5, n_groups as f64 - 0.5, y_lo, y_hi, "", "mean cost"));
    for (si, (label, vals)) in series.iter().enumerate() {
        let color = PALETTE[si % PALETTE.len()];
        for (gi, v) in vals.iter().enumerate() {
            let x = MARGIN_L + gi as f64 * group_w + group_w * 0.1 + si as f64 * bar_w;
            let y0 = py(0.0f64.max(y_lo));
            let y1 = py(*v);
            let (top, h) = if y1 < y0 { (y1, y0 - y1) } else { (y0, y1 - y0) };
            svg.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{top:.1}\" width=\"{bar_w:.1}\" height=\"{h:.1}\" fill=\"{color}\"/>\n"
            ));
        }
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            WIDTH - MARGIN_R - 150.0,
            MARGIN_T + 16.0 * (si as f64 + 1.0),
            esc(label)
        ));
    }
    for (gi, label) in group_labels.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            MARGIN_L + (gi as f64 + 0.5) * group_w,
            HEIGHT - MARGIN_B + 18.0,
            esc(label)
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(vals: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in vals {
        if v.is_finite() {
            lo = lo.min(*v);
            hi = hi.max(*v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = (hi - lo) * 0.06;
    (lo - pad, hi + pad)
}

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{:.1}\" y=\"24\" font-size=\"15\" text-anchor=\"middle\">{}</text>\n",
        WIDTH / 2.0,
        esc(title)
    )
}

fn axes(x_lo: f64, x_hi: f64, y_lo: f64, y_hi: f64, x_label: &str, y_label: &str) -> String {
    let mut svg = String::new();
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    svg.push_str(&format!(
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>\n"
    ));
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let yv = y_lo + f * (y_hi - y_lo);
        let yy = scale(yv, y_lo, y_hi, y0, y1);
        svg.push_str(&format!(
            "<line x1=\"{:.1}\" y1=\"{yy:.1}\" x2=\"{x0}\" y2=\"{yy:.1}\" stroke=\"black\"/>\n\
             <text x=\"{:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"end\">{:.2}</text>\n",
            x0 - 5.0,
            x0 - 8.0,
            yy + 4.0,
            yv
        ));
        let xv = x_lo + f * (x_hi - x_lo);
        let xx = scale(xv, x_lo, x_hi, x0, x1);
        svg.push_str(&format!(
            "<line x1=\"{xx:.1}\" y1=\"{y0}\" x2=\"{xx:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
            y0 + 5.0
        ));
        if !x_label.is_empty() {
            svg.push_str(&format!(
                "<text x=\"{xx:.1}\" y=\"{:.1}\" font-size=\"11\" text-anchor=\"middle\">{xv:.2}</text>\n",
                y0 + 18.0
            ));
        }
    }
    if !x_label.is_empty() {
        svg.push_str(&format!(
            "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"12\" text-anchor=\"middle\">{}</text>\n",
            (x0 + x1) / 2.0,
            HEIGHT - 14.0,
            esc(x_label)
        ));
    }
    if !y_label.is_empty() {
        svg.push_str(&format!(
            "<text x=\"16\" y=\"{:.1}\" font-size=\"12\" transform=\"rotate(-90 16 {:.1})\" text-anchor=\"middle\">{}</text>\n",
            (y0 + y1) / 2.0,
            (y0 + y1) / 2.0,
            esc(y_label)
        ));
    }
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_chart_is_valid_svg() {
        let svg = line_chart(
            "cost vs speed",
            "speed",
            "cost",
            &[
                ("dd", vec![(6.0, 10.0), (10.0, 14.0), (14.0, 30.0)]),
                ("mpc", vec![(6.0, 9.0), (10.0, 10.0), (14.0, 12.0)]),
            ],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<polyline").count(), 2);
    }

    #[test]
    fn bars_handle_negative_values() {
        let svg = grouped_bars(
            "methods",
            &["carpet".into(), "turf".into()],
            &[("dd".into(), vec![12.0, 8.0]), ("mpc".into(), vec![-2.0, 4.0])],
        );
        assert!(svg.contains("<rect"));
        assert!(svg.ends_with("</svg>\n"));
    }

    #[test]
    fn degenerate_ranges_do_not_panic() {
        let svg = line_chart("flat", "x", "y", &[("s", vec![(1.0, 5.0), (1.0, 5.0)])]);
        assert!(svg.contains("<polyline"));
    }
}
