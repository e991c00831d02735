use std::fmt::Write as _;
use std::str::FromStr;

use super::json::Json;
use super::{ComparisonTable, CostReport, ReportError};
use crate::hwprofile::OpClass;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Table,
    Json,
    Csv,
    Svg,
}

impl FromStr for Format {
    type Err = ReportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "table" => Ok(Format::Table),
            "json" => Ok(Format::Json),
            "csv" => Ok(Format::Csv),
            "svg" => Ok(Format::Svg),
            other => Err(ReportError::UnknownFormat(other.to_string())),
        }
    }
}

pub trait Render {
    fn to_json(&self) -> Json;
    fn table(&self) -> String;
    fn csv(&self) -> String;
    fn svg(&self) -> String;
}

pub fn render<R: Render + ?Sized>(item: &R, format: Format) -> String {
    match format {
        Format::Table => item.table(),
        Format::Json => item.to_json().to_canonical_string(),
        Format::Csv => item.csv(),
        Format::Svg => item.svg(),
    }
}

pub const CSV_COLUMNS: [&str; 9] = [
    "name",
    "kind",
    "macs",
    "ops",
    "params_bytes",
    "out_bytes",
    "work_per_output",
    "est_time_s",
    "est_energy_j",
];

fn f<T: Scalar>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

fn canon<T: Scalar>(v: T) -> String {
    v.canonical().unwrap_or_default()
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Left-aligns the first column and right-aligns the rest.
fn aligned(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                write!(s, "{c:<w$}").unwrap();
            } else {
                write!(s, "  {c:>w$}").unwrap();
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(header.to_vec());
    out.push('\n');
    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * (widths.len() - 1)));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

fn pct<T: Scalar>(v: T) -> String {
    format!("{:.1}%", f(v) * 100.0)
}

fn micros<T: Scalar>(v: T) -> String {
    format!("{:.3}", f(v) * 1e6)
}

impl<T: Scalar> Render for CostReport<T> {
    fn to_json(&self) -> Json {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                Json::obj([
                    ("name", Json::str(&r.name)),
                    ("kind", Json::str(r.kind.as_str())),
                    ("class", Json::str(r.class.as_str())),
                    ("macs", Json::UInt(r.macs)),
                    ("ops", Json::UInt(r.ops)),
                    ("params_bytes", Json::UInt(r.params_bytes)),
                    ("out_bytes", Json::UInt(r.out_bytes)),
                    (
                        "work_per_output",
                        Json::num(T::from_ratio(r.work_per_output)),
                    ),
                    ("est_time_s", Json::num(r.est_time_s)),
                    ("est_energy_j", Json::num(r.est_energy_j)),
                    ("time_share", Json::num(r.time_share)),
                    ("energy_share", Json::num(r.energy_share)),
                ])
            })
            .collect();
        let distribution = self
            .distribution
            .iter()
            .map(|c| {
                (
                    c.class.as_str(),
                    Json::obj([
                        ("nodes", Json::UInt(c.nodes as u64)),
                        ("macs", Json::UInt(c.macs)),
                        ("ops", Json::UInt(c.ops)),
                        ("ops_share", Json::num(c.ops_share)),
                        ("est_time_s", Json::num(c.est_time_s)),
                        ("time_share", Json::num(c.time_share)),
                        ("est_energy_j", Json::num(c.est_energy_j)),
                        ("energy_share", Json::num(c.energy_share)),
                    ]),
                )
            })
            .collect::<Vec<_>>();
        let limit = match self.options.order {
            super::OrderPolicy::MinPeak { limit } => Json::UInt(limit as u64),
            super::OrderPolicy::Default => Json::Null,
        };
        Json::obj([
            ("model", Json::str(&self.model)),
            ("target", Json::str(&self.target)),
            ("tool_version", Json::str(&self.tool_version)),
            (
                "config",
                Json::obj([
                    ("ops_per_mac", Json::UInt(self.options.ops.ops_per_mac)),
                    (
                        "inplace_elementwise",
                        Json::Bool(self.options.liveness.inplace),
                    ),
                    ("order_policy", Json::str(self.options.order.as_str())),
                    ("order_limit", limit),
                    ("time_model", Json::str("serial")),
                    ("allocator", Json::str("ideal, non-fragmenting")),
                ]),
            ),
            (
                "order",
                Json::Arr(self.order.iter().map(Json::str).collect()),
            ),
            ("layers", Json::Arr(rows)),
            (
                "totals",
                Json::obj([
                    ("macs", Json::UInt(self.totals.macs)),
                    ("ops", Json::UInt(self.totals.ops)),
                    ("params", Json::UInt(self.totals.params)),
                    ("params_bytes", Json::UInt(self.totals.params_bytes)),
                    ("est_time_s", Json::num(self.totals.est_time_s)),
                    ("est_energy_j", Json::num(self.totals.est_energy_j)),
                ]),
            ),
            ("distribution", Json::obj(distribution)),
            (
                "footprint",
                Json::obj([
                    ("weights_bytes", Json::UInt(self.footprint.weights_bytes)),
                    (
                        "peak_activation_bytes",
                        Json::UInt(self.footprint.peak_activation_bytes),
                    ),
                    ("total_bytes", Json::UInt(self.footprint.total_bytes)),
                    (
                        "activation_share",
                        Json::num(self.footprint.activation_share),
                    ),
                ]),
            ),
            (
                "fit",
                Json::obj([
                    ("pass", Json::Bool(self.fit.pass())),
                    ("flash_budget", Json::UInt(self.fit.flash_budget)),
                    ("sram_budget", Json::UInt(self.fit.sram_budget)),
                    ("flash_margin", Json::Int(self.fit.flash_margin)),
                    ("sram_margin", Json::Int(self.fit.sram_margin)),
                ]),
            ),
        ])
    }

    fn table(&self) -> String {
        let mut out = String::new();
        writeln!(out, "model   {}", self.model).unwrap();
        writeln!(out, "target  {}", self.target).unwrap();
        writeln!(
            out,
            "config  ops_per_mac={} inplace={} order={} (serial time model, ideal allocator)",
            self.options.ops.ops_per_mac,
            self.options.liveness.inplace,
            self.options.order.as_str()
        )
        .unwrap();
        out.push('\n');

        let header = [
            "layer",
            "kind",
            "macs",
            "ops",
            "params_B",
            "out_B",
            "work/out",
            "time_us",
            "energy_uJ",
            "time%",
            "energy%",
        ];
        let mut rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.name.clone(),
                    r.kind.to_string(),
                    r.macs.to_string(),
                    r.ops.to_string(),
                    r.params_bytes.to_string(),
                    r.out_bytes.to_string(),
                    format!("{:.2}", f(T::from_ratio(r.work_per_output))),
                    micros(r.est_time_s),
                    micros(r.est_energy_j),
                    pct(r.time_share),
                    pct(r.energy_share),
                ]
            })
            .collect();
        rows.push(vec![
            "TOTAL".into(),
            String::new(),
            self.totals.macs.to_string(),
            self.totals.ops.to_string(),
            self.totals.params_bytes.to_string(),
            String::new(),
            String::new(),
            micros(self.totals.est_time_s),
            micros(self.totals.est_energy_j),
            String::new(),
            String::new(),
        ]);
        out.push_str(&aligned(&header, &rows));
        out.push('\n');

        let dist: Vec<Vec<String>> = self
            .distribution
            .iter()
            .map(|c| {
                vec![
                    c.class.to_string(),
                    c.nodes.to_string(),
                    c.ops.to_string(),
                    pct(c.ops_share),
                    pct(c.time_share),
                    pct(c.energy_share),
                ]
            })
            .collect();
        out.push_str(&aligned(
            &["class", "nodes", "ops", "ops%", "time%", "energy%"],
            &dist,
        ));
        out.push('\n');

        let fp = &self.footprint;
        writeln!(
            out,
            "footprint  weights {} B + peak activation {} B = {} B (activation {})",
            fp.weights_bytes,
            fp.peak_activation_bytes,
            fp.total_bytes,
            pct(fp.activation_share)
        )
        .unwrap();
        let verdict = |ok: bool| if ok { "ok" } else { "OVER" };
        writeln!(
            out,
            "fit        {}  flash {} (margin {} B of {} B), sram {} (margin {} B of {} B)",
            if self.fit.pass() { "PASS" } else { "FAIL" },
            verdict(self.fit.flash_ok()),
            self.fit.flash_margin,
            self.fit.flash_budget,
            verdict(self.fit.sram_ok()),
            self.fit.sram_margin,
            self.fit.sram_budget
        )
        .unwrap();
        out
    }

    fn csv(&self) -> String {
        let mut out = CSV_COLUMNS.join(",");
        out.push('\n');
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.name,
                r.kind,
                r.macs,
                r.ops,
                r.params_bytes,
                r.out_bytes,
                canon(T::from_ratio(r.work_per_output)),
                canon(r.est_time_s),
                canon(r.est_energy_j)
            )
            .unwrap();
        }
        out
    }

    fn svg(&self) -> String {
        let groups: Vec<(OpClass, [f64; 3])> = self
            .distribution
            .iter()
            .map(|c| {
                (
                    c.class,
                    [f(c.ops_share), f(c.time_share), f(c.energy_share)],
                )
            })
            .collect();
        let fp = &self.footprint;
        let memory = [
            ("weights", fp.weights_bytes),
            ("peak activation", fp.peak_activation_bytes),
        ];
        svg_chart(
            &format!("{} on {}", self.model, self.target),
            &["ops share", "time share", "energy share"],
            &groups,
            &[(self.model.clone(), memory)],
        )
    }
}

impl<T: Scalar> Render for ComparisonTable<T> {
    fn to_json(&self) -> Json {
        let rows = self
            .rows
            .iter()
            .map(|r| {
                Json::obj([
                    ("model", Json::str(&r.model)),
                    ("ops", Json::UInt(r.ops)),
                    ("macs", Json::UInt(r.macs)),
                    ("est_time_s", Json::num(r.est_time_s)),
                    ("est_energy_j", Json::num(r.est_energy_j)),
                    ("weights_bytes", Json::UInt(r.weights_bytes)),
                    ("peak_activation_bytes", Json::UInt(r.peak_activation_bytes)),
                    ("total_bytes", Json::UInt(r.total_bytes)),
                    ("norm_ops", Json::opt_num(r.norm_ops)),
                    ("norm_time", Json::opt_num(r.norm_time)),
                    ("norm_energy", Json::opt_num(r.norm_energy)),
                    ("norm_footprint", Json::opt_num(r.norm_footprint)),
                    (
                        "ops_distribution",
                        Json::obj(
                            r.ops_distribution
                                .iter()
                                .map(|(c, s)| (c.as_str(), Json::num(*s))),
                        ),
                    ),
                ])
            })
            .collect();
        Json::obj([
            ("target", Json::str(&self.target)),
            (
                "normalized_to",
                Json::str(self.rows.first().map_or("", |r| r.model.as_str())),
            ),
            ("tool_version", Json::str(super::TOOL_VERSION)),
            ("models", Json::Arr(rows)),
        ])
    }

    fn table(&self) -> String {
        let norm = |v: Option<T>| v.map_or_else(|| "n/a".to_string(), |v| format!("{:.3}", f(v)));
        let mut out = String::new();
        writeln!(out, "target  {}", self.target).unwrap();
        if let Some(first) = self.rows.first() {
            writeln!(out, "normalized to {}", first.model).unwrap();
        }
        out.push('\n');
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.model.clone(),
                    r.ops.to_string(),
                    micros(r.est_energy_j),
                    r.total_bytes.to_string(),
                    norm(r.norm_ops),
                    norm(r.norm_time),
                    norm(r.norm_energy),
                    norm(r.norm_footprint),
                ]
            })
            .collect();
        out.push_str(&aligned(
            &[
                "model",
                "ops",
                "energy_uJ",
                "footprint_B",
                "ops",
                "time",
                "energy",
                "footprint",
            ],
            &rows,
        ));
        out.push('\n');

        let classes = self.classes();
        let mut header = vec!["model"];
        header.extend(classes.iter().map(|c| c.as_str()));
        let dist: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                let mut cells = vec![r.model.clone()];
                for c in &classes {
                    let s = r.ops_distribution.iter().find(|(k, _)| k == c);
                    cells.push(s.map_or_else(|| "-".to_string(), |(_, v)| pct(*v)));
                }
                cells
            })
            .collect();
        out.push_str("ops share by class\n");
        out.push_str(&aligned(&header, &dist));
        out
    }

    fn csv(&self) -> String {
        let opt = |v: Option<T>| v.and_then(Scalar::canonical).unwrap_or_default();
        let mut out = String::from(
            "model,ops,macs,est_time_s,est_energy_j,total_bytes,norm_ops,norm_time,norm_energy,norm_footprint\n",
        );
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{}",
                r.model,
                r.ops,
                r.macs,
                canon(r.est_time_s),
                canon(r.est_energy_j),
                r.total_bytes,
                opt(r.norm_ops),
                opt(r.norm_time),
                opt(r.norm_energy),
                opt(r.norm_footprint)
            )
            .unwrap();
        }
        out
    }

    fn svg(&self) -> String {
        let classes = self.classes();
        let groups: Vec<(OpClass, Vec<f64>)> = classes
            .iter()
            .map(|c| {
                let shares = self
                    .rows
                    .iter()
                    .map(|r| {
                        r.ops_distribution
                            .iter()
                            .find(|(k, _)| k == c)
                            .map_or(0.0, |(_, v)| f(*v))
                    })
                    .collect();
                (*c, shares)
            })
            .collect();
        let series: Vec<String> = self.rows.iter().map(|r| r.model.clone()).collect();
        let series: Vec<&str> = series.iter().map(String::as_str).collect();
        let memory: Vec<(String, [(&str, u64); 2])> = self
            .rows
            .iter()
            .map(|r| {
                (
                    r.model.clone(),
                    [
                        ("weights", r.weights_bytes),
                        ("peak activation", r.peak_activation_bytes),
                    ],
                )
            })
            .collect();
        svg_chart(
            &format!("ops share by class on {}", self.target),
            &series,
            &groups,
            &memory,
        )
    }
}

impl<T: Scalar> ComparisonTable<T> {
    /// Classes present in any model, in class order.
    fn classes(&self) -> Vec<OpClass> {
        let mut v: Vec<OpClass> = self
            .rows
            .iter()
            .flat_map(|r| r.ops_distribution.iter().map(|(c, _)| *c))
            .collect();
        v.sort();
        v.dedup();
        v
    }
}

const PALETTE: [&str; 6] = [
    "#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#76b7b2", "#edc948",
];

/// Grouped bar chart of shares (one `<g class="bar-group">` per op class,
/// one bar per series) above stacked memory bars (one per model).
fn svg_chart<V: AsRef<[f64]>>(
    title: &str,
    series: &[&str],
    groups: &[(OpClass, V)],
    memory: &[(String, [(&str, u64); 2])],
) -> String {
    const WIDTH: f64 = 720.0;
    const LEFT: f64 = 60.0;
    const CHART_TOP: f64 = 60.0;
    const CHART_H: f64 = 220.0;
    const BAR_W: f64 = 14.0;
    const GAP: f64 = 24.0;
    const MEM_ROW: f64 = 26.0;

    let mem_top = CHART_TOP + CHART_H + 70.0;
    let height = mem_top + MEM_ROW * memory.len() as f64 + 60.0;
    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{LEFT}" y="24" font-size="14">{}</text>"#,
        xml_escape(title)
    )
    .unwrap();

    for (i, name) in series.iter().enumerate() {
        let x = LEFT + 150.0 * i as f64;
        writeln!(
            s,
            r#"<rect class="legend" x="{x}" y="34" width="10" height="10" fill="{}"/><text x="{:.1}" y="43">{}</text>"#,
            PALETTE[i % PALETTE.len()],
            x + 14.0,
            xml_escape(name)
        )
        .unwrap();
    }

    let base = CHART_TOP + CHART_H;
    writeln!(
        s,
        r##"<line x1="{LEFT}" y1="{base}" x2="{:.1}" y2="{base}" stroke="#333"/>"##,
        WIDTH - 20.0
    )
    .unwrap();
    let mut x = LEFT + 10.0;
    for (class, values) in groups {
        let values = values.as_ref();
        writeln!(s, r#"<g class="bar-group" data-class="{class}">"#).unwrap();
        for (i, v) in values.iter().enumerate() {
            let h = (v.clamp(0.0, 1.0) * CHART_H * 100.0).round() / 100.0;
            writeln!(
                s,
                r#"  <rect class="bar" x="{:.1}" y="{:.2}" width="{BAR_W}" height="{h:.2}" fill="{}"><title>{} {}: {:.1}%</title></rect>"#,
                x + BAR_W * i as f64,
                base - h,
                PALETTE[i % PALETTE.len()],
                class,
                xml_escape(series.get(i).copied().unwrap_or("")),
                v * 100.0
            )
            .unwrap();
        }
        let group_w = BAR_W * values.len() as f64;
        writeln!(
            s,
            r#"  <text x="{:.1}" y="{:.1}" text-anchor="middle">{class}</text>"#,
            x + group_w / 2.0,
            base + 16.0
        )
        .unwrap();
        s.push_str("</g>\n");
        x += group_w + GAP;
    }

    writeln!(
        s,
        r#"<text x="{LEFT}" y="{:.1}" font-size="13">memory footprint</text>"#,
        mem_top - 14.0
    )
    .unwrap();
    let max_total = memory
        .iter()
        .map(|(_, parts)| parts.iter().map(|p| p.1).sum::<u64>())
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let bar_span = WIDTH - LEFT - 200.0;
    for (row, (name, parts)) in memory.iter().enumerate() {
        let y = mem_top + MEM_ROW * row as f64;
        writeln!(s, r#"<g class="memory" data-model="{}">"#, xml_escape(name)).unwrap();
        let mut cursor = LEFT;
        for (i, (label, bytes)) in parts.iter().enumerate() {
            let w = *bytes as f64 / max_total * bar_span;
            writeln!(
                s,
                r#"  <rect class="mem" x="{cursor:.2}" y="{y:.1}" width="{w:.2}" height="18" fill="{}"><title>{label}: {bytes} B</title></rect>"#,
                PALETTE[(i + 3) % PALETTE.len()]
            )
            .unwrap();
            cursor += w;
        }
        let total: u64 = parts.iter().map(|p| p.1).sum();
        writeln!(
            s,
            r#"  <text x="{:.2}" y="{:.1}">{} ({total} B)</text>"#,
            cursor + 6.0,
            y + 13.0,
            xml_escape(name)
        )
        .unwrap();
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    s
}
