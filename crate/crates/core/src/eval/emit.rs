//! CSV and SVG output. CSV floats carry 17 significant digits so they parse
//! back bit-exactly; SVG documents use a fixed 800x600 view box and fixed
//! number formatting, so equal inputs give equal bytes.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::boundary::BoundaryGrid;
use super::roc::{Confusion, RocCurve, RocPoint};
use crate::error::{Error, Result};
use crate::ncd::TrainingHistory;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Svg,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()) {
            Some("csv") => Ok(Format::Csv),
            Some("svg") => Ok(Format::Svg),
            _ => Err(Error::invalid_config("path", format!("{}: expected .csv or .svg", path.display()))),
        }
    }
}

pub trait Artifact {
    fn to_csv(&self) -> String;
    fn to_svg(&self) -> String;
}

pub fn emit(item: &impl Artifact, path: &Path, format: Format) -> Result<()> {
    let body = match format {
        Format::Csv => item.to_csv(),
        Format::Svg => item.to_svg(),
    };
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

const W: f64 = 800.0;
const H: f64 = 600.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = ["#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1", "#76b7b2", "#edc948", "#9c755f"];

fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        LEFT + (v - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, v: f64) -> f64 {
        H - BOTTOM - (v - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }
}

fn svg_open(out: &mut String) {
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {W} {H}\" width=\"{W}\" height=\"{H}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    out.push_str(&format!("<rect x=\"0\" y=\"0\" width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"));
}

fn axes(out: &mut String, fr: &Frame, xlabel: &str, ylabel: &str) {
    let (x0, x1, y0, y1) = (fr.px(fr.x.0), fr.px(fr.x.1), fr.py(fr.y.0), fr.py(fr.y.1));
    let _ = writeln!(out, "<rect x=\"{x0:.2}\" y=\"{y1:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"none\" stroke=\"black\"/>", x1 - x0, y0 - y1);
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        let xv = fr.x.0 + t * (fr.x.1 - fr.x.0);
        let yv = fr.y.0 + t * (fr.y.1 - fr.y.0);
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{}</text>", fr.px(xv), y0 + 18.0, tick(xv));
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>", x0 - 6.0, fr.py(yv) + 4.0, tick(yv));
    }
    let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\">{xlabel}</text>", (x0 + x1) / 2.0, H - 15.0);
    let _ = writeln!(
        out,
        "<text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" transform=\"rotate(-90 18 {:.2})\">{ylabel}</text>",
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
}

fn tick(v: f64) -> String {
    let s = format!("{v:.2}");
    if s == "-0.00" { "0.00".into() } else { s }
}

fn polyline(out: &mut String, fr: &Frame, pts: impl Iterator<Item = (f64, f64)>, color: &str, dash: bool) {
    let coords: Vec<String> = pts.map(|(x, y)| format!("{:.2},{:.2}", fr.px(x), fr.py(y))).collect();
    let dash = if dash { " stroke-dasharray=\"4 4\"" } else { "" };
    let _ = writeln!(out, "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"2\"{dash}/>", coords.join(" "));
}

fn legend(out: &mut String, entries: &[(String, &str)]) {
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = TOP + 10.0 + 20.0 * i as f64;
        let x = W - RIGHT + 15.0;
        let _ = writeln!(out, "<rect x=\"{x:.2}\" y=\"{:.2}\" width=\"12\" height=\"12\" fill=\"{color}\"/>", y - 10.0);
        let _ = writeln!(out, "<text x=\"{:.2}\" y=\"{y:.2}\">{}</text>", x + 18.0, escape(name));
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

const ROC_HEADER: &str = "threshold,fpr,tpr,tp,fp,fn,tn";

impl Artifact for RocCurve {
    fn to_csv(&self) -> String {
        let mut out = format!("{ROC_HEADER}\n");
        for p in &self.points {
            let c = p.counts;
            let _ = writeln!(out, "{},{},{},{},{},{},{}", f17(p.threshold), f17(p.fpr), f17(p.tpr), c.tp, c.fp, c.fn_, c.tn);
        }
        out
    }

    fn to_svg(&self) -> String {
        roc_svg(&[(format!("AUC {:.4}", self.auc), self)])
    }
}

/// Several ROC curves on one set of axes.
pub fn roc_svg(curves: &[(String, &RocCurve)]) -> String {
    let fr = Frame { x: (0.0, 1.0), y: (0.0, 1.0) };
    let mut out = String::new();
    svg_open(&mut out);
    axes(&mut out, &fr, "false positive rate", "true positive rate");
    polyline(&mut out, &fr, [(0.0, 0.0), (1.0, 1.0)].into_iter(), "#999999", true);
    let mut entries = Vec::new();
    for (i, (name, curve)) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        polyline(&mut out, &fr, curve.points.iter().map(|p| (p.fpr, p.tpr)), color, false);
        entries.push((name.clone(), color));
    }
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}

/// Parse a ROC CSV written by [`Artifact::to_csv`]; the AUC is recomputed.
pub fn roc_from_csv(text: &str) -> Result<RocCurve> {
    let bad = |r: String| Error::parse("<roc csv>", r);
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != ROC_HEADER {
        return Err(bad(format!("unexpected header {headers:?}")));
    }
    let mut points = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let f = |i: usize| rec[i].parse::<f64>().map_err(|e| bad(e.to_string()));
        let u = |i: usize| rec[i].parse::<usize>().map_err(|e| bad(e.to_string()));
        points.push(RocPoint {
            threshold: f(0)?,
            fpr: f(1)?,
            tpr: f(2)?,
            counts: Confusion { tp: u(3)?, fp: u(4)?, fn_: u(5)?, tn: u(6)? },
        });
    }
    let auc = points.windows(2).map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0).sum();
    Ok(RocCurve { points, auc })
}

fn label_color(label: u32) -> &'static str {
    PALETTE[label as usize % PALETTE.len()]
}

impl Artifact for BoundaryGrid {
    fn to_csv(&self) -> String {
        let mut out = String::from("row,col,x,y,label\n");
        let n = self.spec.resolution;
        for r in 0..n {
            for c in 0..n {
                let p = self.spec.point(r, c);
                let _ = writeln!(out, "{r},{c},{},{},{}", f17(p[self.spec.plane.0]), f17(p[self.spec.plane.1]), self.label(r, c));
            }
        }
        out
    }

    fn to_svg(&self) -> String {
        let s = &self.spec;
        let fr = Frame { x: s.x_range, y: s.y_range };
        let n = s.resolution;
        let cw = (fr.px(s.x_range.1) - fr.px(s.x_range.0)) / n as f64;
        let ch = (fr.py(s.y_range.0) - fr.py(s.y_range.1)) / n as f64;
        let mut out = String::new();
        svg_open(&mut out);
        for r in 0..n {
            for c in 0..n {
                let x = fr.px(s.x_range.0) + c as f64 * cw;
                let y = fr.py(s.y_range.0) - (r + 1) as f64 * ch;
                let _ = writeln!(
                    out,
                    "<rect class=\"cell\" x=\"{x:.3}\" y=\"{y:.3}\" width=\"{cw:.3}\" height=\"{ch:.3}\" fill=\"{}\"/>",
                    label_color(self.label(r, c))
                );
            }
        }
        axes(&mut out, &fr, &format!("x[{}]", s.plane.0 + 1), &format!("x[{}]", s.plane.1 + 1));
        let mut present: Vec<u32> = self.labels.clone();
        present.sort_unstable();
        present.dedup();
        let entries: Vec<(String, &str)> = present
            .iter()
            .map(|&l| {
                let bits: String = (0..self.d).map(|j| if l >> (self.d - 1 - j) & 1 == 1 { '1' } else { '0' }).collect();
                (format!("{l} ({bits})"), label_color(l))
            })
            .collect();
        legend(&mut out, &entries);
        out.push_str("</svg>\n");
        out
    }
}

impl Artifact for TrainingHistory {
    fn to_csv(&self) -> String {
        let d = self.records.first().map_or(0, |r| r.mean_pi.len());
        let mut out = String::from("epoch,train_nll,val_nll,temperature");
        for j in 1..=d {
            let _ = write!(out, ",mean_pi_{j}");
        }
        out.push('\n');
        for r in &self.records {
            let _ = write!(out, "{},{},{},{}", r.epoch, f17(r.train_nll), f17(r.val_nll), f17(r.temperature));
            for p in &r.mean_pi {
                let _ = write!(out, ",{}", f17(*p));
            }
            out.push('\n');
        }
        out
    }

    fn to_svg(&self) -> String {
        let finite = |v: f64| if v.is_finite() { Some(v) } else { None };
        let ys: Vec<f64> = self.records.iter().flat_map(|r| [finite(r.train_nll), finite(r.val_nll)]).flatten().collect();
        let (lo, hi) = ys.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (lo.min(0.0).max(-1.0), lo.max(0.0) + 1.0) };
        let last = self.records.last().map_or(1.0, |r| r.epoch.max(1) as f64);
        let fr = Frame { x: (0.0, last), y: (lo, hi) };
        let mut out = String::new();
        svg_open(&mut out);
        axes(&mut out, &fr, "epoch", "negative log-likelihood");
        let series = [("train", PALETTE[0]), ("validation", PALETTE[1])];
        polyline(&mut out, &fr, self.records.iter().map(|r| (r.epoch as f64, r.train_nll)), series[0].1, false);
        polyline(&mut out, &fr, self.records.iter().map(|r| (r.epoch as f64, r.val_nll)), series[1].1, false);
        legend(&mut out, &series.map(|(n, c)| (n.to_string(), c)));
        out.push_str("</svg>\n");
        out
    }
}
