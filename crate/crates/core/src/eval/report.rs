//! CSV tables and standalone SVG plots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::ArrayView2;

use super::{ConfusionMatrix, LlSeparationReport, ScoreDistribution, SCORE_MIN};
use crate::error::{Error, Result};

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 56.0;

/// `report_<kind>_<group>_<stamp>.<ext>`
pub fn report_file_name(kind: &str, group: &str, stamp: &str, ext: &str) -> String {
    format!("report_{kind}_{group}_{stamp}.{ext}")
}

pub fn write_confusion_csv(path: impl AsRef<Path>, cm: &ConfusionMatrix) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![format!("{}:true\\predicted", cm.axis)];
    header.extend(cm.classes.iter().cloned());
    header.push("recall".into());
    w.write_record(&header)?;
    for (i, (row, recall)) in cm.counts.outer_iter().zip(cm.recall()).enumerate() {
        let mut rec = vec![cm.classes[i].clone()];
        rec.extend(row.iter().map(|c| c.to_string()));
        rec.push(recall.map(|r| format!("{r:.6}")).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// One row per bin, one count column per distribution.
pub fn write_scores_csv(path: impl AsRef<Path>, dists: &[&ScoreDistribution]) -> Result<()> {
    let Some(first) = dists.first() else {
        return Err(Error::validation("no score distributions to write"));
    };
    if dists.iter().any(|d| d.bins.len() != first.bins.len()) {
        return Err(Error::shape("score distributions have different bin counts"));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["bin_lo".to_string(), "bin_hi".to_string()];
    header.extend(dists.iter().map(|d| d.label.clone()));
    w.write_record(&header)?;
    let bw = first.bin_width();
    for b in 0..first.bins.len() {
        let lo = SCORE_MIN + b as f64 * bw;
        let mut rec = vec![format!("{lo:.4}"), format!("{:.4}", lo + bw)];
        rec.extend(dists.iter().map(|d| d.bins[b].to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_llsep_csv(path: impl AsRef<Path>, r: &LlSeparationReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["true_group", &format!("ll[{}]", r.first), &format!("ll[{}]", r.second)])?;
    for row in &r.rows {
        let g = if row.truth == 0 { &r.first } else { &r.second };
        w.write_record([g.clone(), format!("{:.10}", row.ll_first), format!("{:.10}", row.ll_second)])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_projection_csv(path: impl AsRef<Path>, coords: ArrayView2<f64>, groups: &[String]) -> Result<()> {
    if coords.nrows() != groups.len() {
        return Err(Error::shape(format!("{} groups for {} points", groups.len(), coords.nrows())));
    }
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["group".to_string()];
    header.extend((1..=coords.ncols()).map(|i| format!("pc{i}")));
    w.write_record(&header)?;
    for (g, row) in groups.iter().zip(coords.outer_iter()) {
        let mut rec = vec![g.clone()];
        rec.extend(row.iter().map(|v| format!("{v:.8}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let pad = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Self { x0, x1, y0, y1 }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn svg_open(out: &mut String, title: &str, xlabel: &str, ylabel: &str, f: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="15">{}</text>"#, WIDTH / 2.0, escape(title));
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black"/>"#);
    for (v, x) in [(f.x0, l), (f.x1, r)] {
        let _ = writeln!(out, r#"<text x="{x}" y="{}" text-anchor="middle">{v:.3}</text>"#, b + 16.0);
    }
    for (v, y) in [(f.y0, b), (f.y1, t)] {
        let _ = writeln!(out, r#"<text x="{}" y="{y}" text-anchor="end">{v:.3}</text>"#, l - 4.0);
    }
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 14.0, escape(xlabel));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(ylabel)
    );
}

fn legend(out: &mut String, names: &[String]) {
    for (i, name) in names.iter().enumerate() {
        let y = MARGIN + 4.0 + 16.0 * i as f64;
        let x = WIDTH - MARGIN - 150.0;
        let _ = writeln!(out, r#"<rect x="{x}" y="{}" width="10" height="10" fill="{}"/>"#, y - 9.0, PALETTE[i % PALETTE.len()]);
        let _ = writeln!(out, r#"<text x="{}" y="{y}">{}</text>"#, x + 14.0, escape(name));
    }
}

/// Scatter plot of the first two columns, colored by group.
pub fn write_scatter_svg(path: impl AsRef<Path>, title: &str, coords: ArrayView2<f64>, groups: &[String], axis_labels: [&str; 2]) -> Result<()> {
    if coords.ncols() < 2 || coords.nrows() != groups.len() {
        return Err(Error::shape("scatter needs n x 2 coordinates and one group per point"));
    }
    let mut names: Vec<String> = Vec::new();
    for g in groups {
        if !names.contains(g) {
            names.push(g.clone());
        }
    }
    let col = |j: usize| coords.column(j).iter().copied().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    let ((x0, x1), (y0, y1)) = (col(0), col(1));
    let f = Frame::new(x0, x1, y0, y1);
    let mut out = String::new();
    svg_open(&mut out, title, axis_labels[0], axis_labels[1], &f);
    for (g, row) in groups.iter().zip(coords.outer_iter()) {
        let c = PALETTE[names.iter().position(|n| n == g).unwrap() % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{c}" fill-opacity="0.6"/>"#,
            f.px(row[0]),
            f.py(row[1])
        );
    }
    legend(&mut out, &names);
    out.push_str("</svg>\n");
    fs::write(path, out)?;
    Ok(())
}

/// Overlaid normalized score histograms over `[-2, 0]`.
pub fn write_histogram_svg(path: impl AsRef<Path>, title: &str, dists: &[&ScoreDistribution]) -> Result<()> {
    if dists.is_empty() {
        return Err(Error::validation("no score distributions to plot"));
    }
    let normed: Vec<Vec<f64>> = dists.iter().map(|d| d.normalized()).collect();
    let top = normed.iter().flatten().copied().fold(0.0, f64::max);
    let f = Frame::new(SCORE_MIN, 0.0, 0.0, top);
    let mut out = String::new();
    svg_open(&mut out, title, "similarity score", "fraction of pairs", &f);
    for (i, (d, h)) in dists.iter().zip(&normed).enumerate() {
        let bw = d.bin_width();
        let mut path_d = format!("M{:.2} {:.2}", f.px(SCORE_MIN), f.py(0.0));
        for (b, v) in h.iter().enumerate() {
            let lo = SCORE_MIN + b as f64 * bw;
            let _ = write!(path_d, " L{:.2} {:.2} L{:.2} {:.2}", f.px(lo), f.py(*v), f.px(lo + bw), f.py(*v));
        }
        let _ = write!(path_d, " L{:.2} {:.2}", f.px(0.0), f.py(0.0));
        let c = PALETTE[i % PALETTE.len()];
        let _ = writeln!(out, r#"<path d="{path_d}" fill="{c}" fill-opacity="0.25" stroke="{c}"/>"#);
    }
    legend(&mut out, &dists.iter().map(|d| d.label.clone()).collect::<Vec<_>>());
    out.push_str("</svg>\n");
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{score_distribution, ScoreMode};
    use ndarray::array;

    #[test]
    fn writes_readable_files() {
        let dir = tempfile::tempdir().unwrap();
        let cm = ConfusionMatrix::from_predictions("g", &["f".into(), "m".into()], &[0, 0, 1], &[0, 1, 1]).unwrap();
        let p = dir.path().join(report_file_name("confusion", "g", "abc", "csv"));
        write_confusion_csv(&p, &cm).unwrap();
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("f,1,1,0.5"));

        let x = array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]];
        let d = score_distribution("within", x.view(), x.view(), ScoreMode::Within, 100).unwrap();
        write_scores_csv(dir.path().join("s.csv"), &[&d]).unwrap();
        write_histogram_svg(dir.path().join("s.svg"), "scores", &[&d]).unwrap();
        let svg = fs::read_to_string(dir.path().join("s.svg")).unwrap();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));

        let groups = vec!["a".to_string(), "b".into(), "a".into()];
        write_scatter_svg(dir.path().join("p.svg"), "pca", x.view(), &groups, ["pc1", "pc2"]).unwrap();
        let svg = fs::read_to_string(dir.path().join("p.svg")).unwrap();
        assert_eq!(svg.matches("<circle").count(), 3);
        write_projection_csv(dir.path().join("p.csv"), x.view(), &groups).unwrap();
        assert!(write_projection_csv(dir.path().join("q.csv"), x.view(), &groups[..2]).is_err());
    }
}
