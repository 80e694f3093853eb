//! Collision report aggregation, its CSV forms and the SVG bar chart.

use std::fmt::Write as _;
use std::io;

use serde::{Deserialize, Serialize};

use crate::data::format::format_number;
use crate::error::FormatError;
use crate::eval::{CollisionCategory, CollisionEvent};

pub const METERS_PER_MILE: f64 = 1609.344;

#[derive(Clone, Debug, PartialEq)]
pub struct CollisionReport {
    pub model: String,
    /// Front, side, rear.
    pub counts: [u64; 3],
    pub frames: u64,
    pub meters: f64,
}

impl CollisionReport {
    pub fn new(model: &str) -> Self {
        CollisionReport {
            model: model.to_string(),
            counts: [0; 3],
            frames: 0,
            meters: 0.0,
        }
    }

    pub fn add(&mut self, category: CollisionCategory) {
        self.counts[category as usize] += 1;
    }

    pub fn count(&self, category: CollisionCategory) -> u64 {
        self.counts[category as usize]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Events of `category` per 10,000 simulated frames.
    pub fn rate_10k(&self, category: CollisionCategory) -> f64 {
        per_10k(self.count(category), self.frames)
    }

    pub fn total_rate_10k(&self) -> f64 {
        per_10k(self.total(), self.frames)
    }

    /// All events per 1000 miles driven; `None` when the ego never moved.
    pub fn per_1000_miles(&self) -> Option<f64> {
        (self.meters > 0.0).then(|| self.total() as f64 * 1000.0 / (self.meters / METERS_PER_MILE))
    }

    pub fn merge(&mut self, other: &CollisionReport) {
        for (a, b) in self.counts.iter_mut().zip(other.counts) {
            *a += b;
        }
        self.frames += other.frames;
        self.meters += other.meters;
    }

    pub fn row(&self) -> ReportRow {
        ReportRow {
            model: self.model.clone(),
            front_10k: self.rate_10k(CollisionCategory::Front),
            side_10k: self.rate_10k(CollisionCategory::Side),
            rear_10k: self.rate_10k(CollisionCategory::Rear),
            total_per_1000mi: self.per_1000_miles(),
            frames: self.frames,
            meters: self.meters,
        }
    }
}

fn per_10k(count: u64, frames: u64) -> f64 {
    if frames == 0 {
        0.0
    } else {
        count as f64 * 10_000.0 / frames as f64
    }
}

/// One line of the report CSV. An empty `total_per_1000mi` means the ego
/// drove zero meters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: String,
    pub front_10k: f64,
    pub side_10k: f64,
    pub rear_10k: f64,
    pub total_per_1000mi: Option<f64>,
    pub frames: u64,
    pub meters: f64,
}

impl ReportRow {
    pub fn rates(&self) -> [f64; 3] {
        [self.front_10k, self.side_10k, self.rear_10k]
    }
}

pub const REPORT_HEADER: [&str; 7] = [
    "model",
    "front_10k",
    "side_10k",
    "rear_10k",
    "total_per_1000mi",
    "frames",
    "meters",
];

pub fn write_report_csv<W: io::Write>(out: W, rows: &[ReportRow]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER).map_err(csv_error)?;
    for r in rows {
        w.write_record([
            r.model.clone(),
            format_number(r.front_10k),
            format_number(r.side_10k),
            format_number(r.rear_10k),
            r.total_per_1000mi.map(format_number).unwrap_or_default(),
            r.frames.to_string(),
            format_number(r.meters),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_report_csv<R: io::Read>(input: R) -> Result<Vec<ReportRow>, FormatError> {
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers().map_err(csv_error)?;
    if header.iter().ne(REPORT_HEADER) {
        return Err(FormatError::Record {
            what: "report csv",
            line: 1,
            detail: format!("expected header `{}`", REPORT_HEADER.join(",")),
        });
    }
    r.deserialize()
        .enumerate()
        .map(|(i, row)| {
            row.map_err(|e| FormatError::Record {
                what: "report csv",
                line: i + 2,
                detail: e.to_string(),
            })
        })
        .collect()
}

pub fn write_events_csv<W: io::Write>(out: W, events: &[CollisionEvent]) -> Result<(), FormatError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["scene_id", "frame", "track_id", "theta", "category"])
        .map_err(csv_error)?;
    for e in events {
        w.write_record([
            e.scene_id.to_string(),
            e.frame_index.to_string(),
            e.track_id.to_string(),
            format_number(e.theta),
            e.category.to_string(),
        ])
        .map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_error(e: csv::Error) -> FormatError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => FormatError::Io(e),
        other => FormatError::Invalid(format!("csv: {other:?}")),
    }
}

const CANVAS_W: f64 = 640.0;
const CANVAS_H: f64 = 400.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_TOP: f64 = 40.0;
const PLOT_H: f64 = 300.0;
const BAR_W: f64 = 24.0;
const BAR_COLORS: [&str; 3] = ["#d95f02", "#7570b3", "#1b9e77"];

fn px(v: f64) -> String {
    format!("{v:.3}")
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Grouped bar chart: one group per model in input order, bars for front,
/// side and rear rates. Bar height is `value / max · 300` px.
pub fn render_svg(rows: &[ReportRow]) -> String {
    let max = rows.iter().flat_map(|r| r.rates()).fold(0.0f64, f64::max);
    let base = MARGIN_TOP + PLOT_H;
    let plot_w = CANVAS_W - MARGIN_LEFT - 20.0;
    let group_w = plot_w / rows.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{CANVAS_W}\" height=\"{CANVAS_H}\" viewBox=\"0 0 {CANVAS_W} {CANVAS_H}\">"
    );
    let _ = writeln!(s, "<rect x=\"0\" y=\"0\" width=\"{CANVAS_W}\" height=\"{CANVAS_H}\" fill=\"white\"/>");
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"14\">Collisions per 10,000 frames</text>",
        MARGIN_LEFT
    );
    let _ = writeln!(
        s,
        "<line x1=\"{MARGIN_LEFT}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
        px(base),
        px(CANVAS_W - 20.0),
        px(base)
    );
    let _ = writeln!(
        s,
        "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"10\" text-anchor=\"end\">{}</text>",
        px(MARGIN_LEFT - 4.0),
        px(MARGIN_TOP + 4.0),
        format_number(max)
    );
    for (g, row) in rows.iter().enumerate() {
        let gx = MARGIN_LEFT + g as f64 * group_w + (group_w - 3.0 * BAR_W) / 2.0;
        for (k, (value, cat)) in row.rates().into_iter().zip(CollisionCategory::ALL).enumerate() {
            let h = if max > 0.0 { value / max * PLOT_H } else { 0.0 };
            let _ = writeln!(
                s,
                "<rect class=\"bar\" data-model=\"{}\" data-category=\"{}\" data-value=\"{}\" x=\"{}\" y=\"{}\" width=\"{BAR_W}\" height=\"{}\" fill=\"{}\"/>",
                escape(&row.model),
                cat,
                format_number(value),
                px(gx + k as f64 * BAR_W),
                px(base - h),
                px(h),
                BAR_COLORS[k]
            );
        }
        let _ = writeln!(
            s,
            "<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">{}</text>",
            px(gx + 1.5 * BAR_W),
            px(base + 18.0),
            escape(&row.model)
        );
    }
    for (k, cat) in CollisionCategory::ALL.iter().enumerate() {
        let y = CANVAS_H - 20.0;
        let x = MARGIN_LEFT + k as f64 * 90.0;
        let _ = writeln!(
            s,
            "<rect x=\"{}\" y=\"{}\" width=\"10\" height=\"10\" fill=\"{}\"/><text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"11\">{}</text>",
            px(x),
            px(y - 9.0),
            BAR_COLORS[k],
            px(x + 14.0),
            px(y),
            cat
        );
    }
    s.push_str("</svg>\n");
    s
}
