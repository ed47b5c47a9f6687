//! Minimal static SVG scaling plot: factor and update times against N on
//! log-log axes, with O(N) and O(log^4 N) guide curves.

use crate::runner::ResultRow;

fn path(points: &[(f64, f64)]) -> String {
    points
        .iter()
        .enumerate()
        .map(|(i, (x, y))| format!("{}{:.2},{:.2}", if i == 0 { "M" } else { "L" }, x, y))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn scaling_plot(rows: &[ResultRow]) -> String {
    let (w, h) = (560.0, 420.0);
    let (ml, mr, mt, mb) = (70.0, 20.0, 20.0, 50.0);
    let mut pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| (r.n as f64, r.t_f.max(1e-9), r.t_u.max(1e-9)))
        .collect();
    pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    if pts.is_empty() {
        return String::from("<svg xmlns=\"http://www.w3.org/2000/svg\"/>");
    }
    let xs: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let all_t: Vec<f64> = pts.iter().flat_map(|p| [p.1, p.2]).collect();
    let (x0, x1) = (xs[0], xs[xs.len() - 1].max(xs[0] + 1.0));
    let t_lo = all_t.iter().cloned().fold(f64::INFINITY, f64::min).ln() - 0.5;
    let t_hi = all_t.iter().cloned().fold(0.0f64, f64::max).ln() + 0.5;
    let sx = |n: f64| ml + (n.ln() - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |t: f64| h - mb - (t.ln() - t_lo) / (t_hi - t_lo) * (h - mt - mb);

    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" \
         viewBox=\"0 0 {w} {h}\" font-family=\"monospace\" font-size=\"11\">\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n\
         <line x1=\"{ml}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
         <line x1=\"{ml}\" y1=\"{mt}\" x2=\"{ml}\" y2=\"{}\" stroke=\"black\"/>\n",
        h - mb,
        w - mr,
        h - mb,
        h - mb
    );
    // guide curves anchored at the last update-time point
    let (n_ref, _, tu_ref) = *pts.last().unwrap();
    let guide_n: Vec<(f64, f64)> = pts
        .iter()
        .map(|p| (sx(p.0), sy(tu_ref * p.0 / n_ref)))
        .collect();
    let lg4 = |n: f64| n.log2().powi(4);
    let guide_l: Vec<(f64, f64)> = pts
        .iter()
        .map(|p| (sx(p.0), sy(tu_ref * lg4(p.0) / lg4(n_ref))))
        .collect();
    svg.push_str(&format!(
        "<path d=\"{}\" fill=\"none\" stroke=\"#bbbbbb\" stroke-dasharray=\"6 3\"/>\n",
        path(&guide_n)
    ));
    svg.push_str(&format!(
        "<path d=\"{}\" fill=\"none\" stroke=\"#bbbbbb\" stroke-dasharray=\"2 3\"/>\n",
        path(&guide_l)
    ));
    let tf_line: Vec<(f64, f64)> = pts.iter().map(|p| (sx(p.0), sy(p.1))).collect();
    let tu_line: Vec<(f64, f64)> = pts.iter().map(|p| (sx(p.0), sy(p.2))).collect();
    svg.push_str(&format!(
        "<path d=\"{}\" fill=\"none\" stroke=\"#1f4e9c\" stroke-width=\"1.5\"/>\n",
        path(&tf_line)
    ));
    svg.push_str(&format!(
        "<path d=\"{}\" fill=\"none\" stroke=\"#b02818\" stroke-width=\"1.5\"/>\n",
        path(&tu_line)
    ));
    for (x, y) in &tf_line {
        svg.push_str(&format!("<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3\" fill=\"#1f4e9c\"/>\n"));
    }
    for (x, y) in &tu_line {
        svg.push_str(&format!(
            "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"6\" height=\"6\" fill=\"#b02818\"/>\n",
            x - 3.0,
            y - 3.0
        ));
    }
    for p in &pts {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            sx(p.0),
            h - mb + 16.0,
            p.0 as usize
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\">t_f (circles), t_u (squares); guides O(N), O(log^4 N)</text>\n",
        ml,
        mt + 2.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">N</text>\n",
        (ml + w - mr) / 2.0,
        h - 12.0
    ));
    svg.push_str("</svg>\n");
    svg
}
