//! Target characterization profiles.
//!
//! A profile maps each operation class to a table of (work per output,
//! throughput) knots and an average power. Throughput between knots is
//! interpolated linearly in `log2(work per output)` and clamped outside the
//! characterized range.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use num_rational::Ratio;
use thiserror::Error;

use crate::graph::{OpKind, OpNode};
use crate::metrics::LayerMetrics;
use crate::scalar::Scalar;

/// Flash budget when a profile does not declare one: 1 MB.
pub const DEFAULT_FLASH_BYTES: u64 = 1024 * 1024;
/// SRAM budget when a profile does not declare one: 320 KB.
pub const DEFAULT_SRAM_BYTES: u64 = 320 * 1024;

const CSV_HEADER: [&str; 4] = [
    "op_class",
    "work_per_output",
    "throughput_ops_per_s",
    "power_mw",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProfileError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: {field} must be positive")]
    NonPositive { line: usize, field: &'static str },
    #[error("class `{class}`: duplicate knot at work_per_output {x}")]
    DuplicateKnot { class: OpClass, x: String },
    #[error("class `{0}` has no knots")]
    EmptyClass(OpClass),
    #[error("class `{class}`: rows disagree on power ({first} mW vs {other} mW)")]
    InconsistentPower {
        class: OpClass,
        first: String,
        other: String,
    },
    #[error("profile has no entry for class `{0}` and no fallback class")]
    MissingClass(OpClass),
}

/// Characterization class an [`OpKind`] is looked up under.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OpClass {
    Conv,
    Conv1x1,
    DwConv,
    Fc,
    Pool,
    Elementwise,
    /// Used for any class the profile does not list.
    Fallback,
}

impl OpClass {
    /// Classes every complete profile covers (unless it has a fallback).
    pub const REQUIRED: [OpClass; 6] = [
        OpClass::Conv,
        OpClass::Conv1x1,
        OpClass::DwConv,
        OpClass::Fc,
        OpClass::Pool,
        OpClass::Elementwise,
    ];

    pub fn of(kind: OpKind) -> OpClass {
        match kind {
            OpKind::Conv2D => OpClass::Conv,
            OpKind::Conv1x1 => OpClass::Conv1x1,
            OpKind::DWConv2D => OpClass::DwConv,
            OpKind::FullyConnected => OpClass::Fc,
            OpKind::MaxPool | OpKind::AvgPool => OpClass::Pool,
            OpKind::ReLU | OpKind::Add | OpKind::Concat | OpKind::Softmax => OpClass::Elementwise,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            OpClass::Conv => "conv",
            OpClass::Conv1x1 => "conv1x1",
            OpClass::DwConv => "dwconv",
            OpClass::Fc => "fc",
            OpClass::Pool => "pool",
            OpClass::Elementwise => "elementwise",
            OpClass::Fallback => "fallback",
        }
    }

    pub fn parse(s: &str) -> Option<OpClass> {
        OpClass::REQUIRED
            .into_iter()
            .chain([OpClass::Fallback])
            .find(|c| c.as_str() == s)
    }
}

impl fmt::Display for OpClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThroughputKnot<T> {
    pub work_per_output: T,
    /// Ops per second.
    pub throughput: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OpTypeProfile<T> {
    class: OpClass,
    knots: Vec<ThroughputKnot<T>>,
    power_mw: T,
}

impl<T: Scalar> OpTypeProfile<T> {
    /// Sorts knots by work per output and rejects empty tables, duplicate
    /// x values, and non-positive values.
    pub fn new(
        class: OpClass,
        mut knots: Vec<ThroughputKnot<T>>,
        power_mw: T,
    ) -> Result<Self, ProfileError> {
        if knots.is_empty() {
            return Err(ProfileError::EmptyClass(class));
        }
        let positive = |v: T| v > T::zero() && v.is_finite();
        if !positive(power_mw) {
            return Err(ProfileError::NonPositive {
                line: 0,
                field: "power_mw",
            });
        }
        for k in &knots {
            if !positive(k.work_per_output) {
                return Err(ProfileError::NonPositive {
                    line: 0,
                    field: "work_per_output",
                });
            }
            if !positive(k.throughput) {
                return Err(ProfileError::NonPositive {
                    line: 0,
                    field: "throughput_ops_per_s",
                });
            }
        }
        knots.sort_by(|a, b| a.work_per_output.partial_cmp(&b.work_per_output).unwrap());
        if let Some(w) = knots
            .windows(2)
            .find(|w| w[0].work_per_output == w[1].work_per_output)
        {
            return Err(ProfileError::DuplicateKnot {
                class,
                x: w[0].work_per_output.to_string(),
            });
        }
        Ok(OpTypeProfile {
            class,
            knots,
            power_mw,
        })
    }

    pub fn class(&self) -> OpClass {
        self.class
    }

    /// Knots in strictly increasing work-per-output order.
    pub fn knots(&self) -> &[ThroughputKnot<T>] {
        &self.knots
    }

    pub fn power_mw(&self) -> T {
        self.power_mw
    }

    /// Throughput at `x`: exact at knots, linear in `log2 x` between them,
    /// clamped to the end knots outside the table.
    pub fn throughput_at(&self, x: T) -> T {
        let first = self.knots[0];
        let last = self.knots[self.knots.len() - 1];
        if x.is_nan() || x <= first.work_per_output {
            return first.throughput;
        }
        if x >= last.work_per_output {
            return last.throughput;
        }
        let hi = self.knots.partition_point(|k| k.work_per_output < x);
        let (a, b) = (self.knots[hi - 1], self.knots[hi]);
        if b.work_per_output == x {
            return b.throughput;
        }
        let t = (x.log2() - a.work_per_output.log2())
            / (b.work_per_output.log2() - a.work_per_output.log2());
        a.throughput + t * (b.throughput - a.throughput)
    }

    fn scaled(&self, k: T) -> Self {
        OpTypeProfile {
            class: self.class,
            knots: self
                .knots
                .iter()
                .map(|kn| ThroughputKnot {
                    work_per_output: kn.work_per_output,
                    throughput: kn.throughput * k,
                })
                .collect(),
            power_mw: self.power_mw,
        }
    }
}

/// Characterization of one target.
#[derive(Debug, Clone, PartialEq)]
pub struct HwProfile<T> {
    target_name: String,
    profiles: BTreeMap<OpClass, OpTypeProfile<T>>,
    flash_budget: u64,
    sram_budget: u64,
}

impl<T: Scalar> HwProfile<T> {
    pub fn new(
        target_name: impl Into<String>,
        profiles: impl IntoIterator<Item = OpTypeProfile<T>>,
        flash_budget: u64,
        sram_budget: u64,
    ) -> Self {
        HwProfile {
            target_name: target_name.into(),
            profiles: profiles.into_iter().map(|p| (p.class, p)).collect(),
            flash_budget,
            sram_budget,
        }
    }

    pub fn target_name(&self) -> &str {
        &self.target_name
    }

    pub fn flash_budget(&self) -> u64 {
        self.flash_budget
    }

    pub fn sram_budget(&self) -> u64 {
        self.sram_budget
    }

    pub fn classes(&self) -> impl Iterator<Item = &OpTypeProfile<T>> {
        self.profiles.values()
    }

    /// Table used for `kind`: its own class, else the fallback.
    pub fn profile_for(&self, kind: OpKind) -> Result<&OpTypeProfile<T>, ProfileError> {
        let class = OpClass::of(kind);
        self.profiles
            .get(&class)
            .or_else(|| self.profiles.get(&OpClass::Fallback))
            .ok_or(ProfileError::MissingClass(class))
    }

    /// Fails unless every required class, or a fallback, is present.
    pub fn check_complete(&self) -> Result<(), ProfileError> {
        if self.profiles.contains_key(&OpClass::Fallback) {
            return Ok(());
        }
        match OpClass::REQUIRED
            .into_iter()
            .find(|c| !self.profiles.contains_key(c))
        {
            Some(c) => Err(ProfileError::MissingClass(c)),
            None => Ok(()),
        }
    }

    /// The same target with every knot throughput multiplied by `k`.
    pub fn with_throughput_scaled(&self, k: T) -> Self {
        HwProfile {
            target_name: self.target_name.clone(),
            profiles: self
                .profiles
                .iter()
                .map(|(c, p)| (*c, p.scaled(k)))
                .collect(),
            flash_budget: self.flash_budget,
            sram_budget: self.sram_budget,
        }
    }

    /// Writes the profile in its CSV file format. Comment lines are not kept.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "#target {}", self.target_name).unwrap();
        writeln!(s, "#flash_bytes {}", self.flash_budget).unwrap();
        writeln!(s, "#sram_bytes {}", self.sram_budget).unwrap();
        writeln!(s, "{}", CSV_HEADER.join(",")).unwrap();
        for p in self.profiles.values() {
            for k in &p.knots {
                writeln!(
                    s,
                    "{},{},{},{}",
                    p.class, k.work_per_output, k.throughput, p.power_mw
                )
                .unwrap();
            }
        }
        s
    }
}

/// Ops/s for `kind` at `work_per_output`.
pub fn throughput<T: Scalar>(
    p: &HwProfile<T>,
    kind: OpKind,
    work_per_output: Ratio<u64>,
) -> Result<T, ProfileError> {
    Ok(p.profile_for(kind)?
        .throughput_at(T::from_ratio(work_per_output)))
}

/// Seconds to run a layer: ops divided by the characterized throughput.
pub fn estimate_time<T: Scalar>(
    p: &HwProfile<T>,
    node: &OpNode,
    m: &LayerMetrics,
) -> Result<T, ProfileError> {
    let tp = throughput(p, node.kind, m.work_per_output)?;
    if m.ops == 0 {
        return Ok(T::zero());
    }
    Ok(T::from_count(m.ops) / tp)
}

/// Joules for a layer: time times the class's average power.
pub fn estimate_energy<T: Scalar>(
    p: &HwProfile<T>,
    node: &OpNode,
    m: &LayerMetrics,
) -> Result<T, ProfileError> {
    let time = estimate_time(p, node, m)?;
    let power_mw = p.profile_for(node.kind)?.power_mw();
    Ok(time * power_mw * T::lit(1e-3))
}

fn malformed(line: usize, message: impl Into<String>) -> ProfileError {
    ProfileError::Malformed {
        line,
        message: message.into(),
    }
}

/// Parses a profile file.
///
/// Lines before the CSV header may be pragmas (`#target <name>`,
/// `#flash_bytes <n>`, `#sram_bytes <n>`) or `# ` comments. Profiles may list
/// a subset of classes; lookups for missing classes fail unless a `fallback`
/// class is present. See [`load_profile_strict`] for the complete-profile
/// check.
pub fn load_profile<T: Scalar>(text: &str) -> Result<HwProfile<T>, ProfileError> {
    let mut target = String::from("unnamed");
    let mut flash = DEFAULT_FLASH_BYTES;
    let mut sram = DEFAULT_SRAM_BYTES;

    let lines: Vec<&str> = text.lines().collect();
    let mut first_data = lines.len();
    for (i, raw) in lines.iter().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let Some(pragma) = line.strip_prefix('#') else {
            first_data = i;
            break;
        };
        if pragma.is_empty() || pragma.starts_with(char::is_whitespace) {
            continue;
        }
        let (key, value) = pragma
            .split_once(char::is_whitespace)
            .unwrap_or((pragma, ""));
        let value = value.trim();
        let bytes = || {
            value.parse::<u64>().map_err(|_| {
                malformed(
                    i + 1,
                    format!("`#{key}` expects a byte count, got `{value}`"),
                )
            })
        };
        match key {
            "target" if !value.is_empty() => target = value.to_string(),
            "flash_bytes" => flash = bytes()?,
            "sram_bytes" => sram = bytes()?,
            _ => return Err(malformed(i + 1, format!("unknown pragma `#{pragma}`"))),
        }
    }

    let body = lines[first_data..].join("\n");
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(body.as_bytes());
    let header_line = first_data + 1;
    let header = reader
        .headers()
        .map_err(|e| malformed(header_line, e.to_string()))?
        .clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(malformed(
            header_line,
            format!("expected header `{}`", CSV_HEADER.join(",")),
        ));
    }

    let mut rows: BTreeMap<OpClass, (Vec<ThroughputKnot<T>>, T, usize)> = BTreeMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e
                .position()
                .map_or(header_line, |p| first_data + p.line() as usize);
            malformed(line, e.to_string())
        })?;
        let line = first_data + record.position().map_or(0, |p| p.line() as usize);
        let class = OpClass::parse(&record[0])
            .ok_or_else(|| malformed(line, format!("unknown op class `{}`", &record[0])))?;
        let number = |idx: usize, field: &'static str| -> Result<T, ProfileError> {
            let v: T = record[idx].parse().map_err(|_| {
                malformed(line, format!("{field}: `{}` is not a number", &record[idx]))
            })?;
            if v.is_nan() || v <= T::zero() || !v.is_finite() {
                return Err(ProfileError::NonPositive { line, field });
            }
            Ok(v)
        };
        let knot = ThroughputKnot {
            work_per_output: number(1, "work_per_output")?,
            throughput: number(2, "throughput_ops_per_s")?,
        };
        let power = number(3, "power_mw")?;
        let entry = rows
            .entry(class)
            .or_insert_with(|| (Vec::new(), power, line));
        if entry.1 != power {
            return Err(ProfileError::InconsistentPower {
                class,
                first: entry.1.to_string(),
                other: power.to_string(),
            });
        }
        entry.0.push(knot);
    }
    if rows.is_empty() {
        return Err(malformed(header_line, "profile has no knot rows"));
    }

    let profiles = rows
        .into_iter()
        .map(|(class, (knots, power, _))| OpTypeProfile::new(class, knots, power))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HwProfile::new(target, profiles, flash, sram))
}

/// [`load_profile`] followed by [`HwProfile::check_complete`].
pub fn load_profile_strict<T: Scalar>(text: &str) -> Result<HwProfile<T>, ProfileError> {
    let p = load_profile(text)?;
    p.check_complete()?;
    Ok(p)
}

/// The bundled synthetic profile (illustrative numbers, not measurements).
pub const DEFAULT_PROFILE_CSV: &str = include_str!("../../../profiles/default.csv");

pub fn default_profile<T: Scalar>() -> HwProfile<T> {
    load_profile_strict(DEFAULT_PROFILE_CSV).expect("bundled profile is valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::OpAttrs;

    const M: f64 = 1e6;

    fn two_knots() -> OpTypeProfile<f64> {
        OpTypeProfile::new(
            OpClass::Conv,
            vec![
                ThroughputKnot {
                    work_per_output: 256.0,
                    throughput: 280.0 * M,
                },
                ThroughputKnot {
                    work_per_output: 64.0,
                    throughput: 200.0 * M,
                },
            ],
            120.0,
        )
        .unwrap()
    }

    fn metrics(ops: u64, wpo: u64) -> LayerMetrics {
        LayerMetrics {
            macs: 0,
            ops,
            params: 0,
            params_bytes: 0,
            out_elements: 1,
            out_bytes: 1,
            work_per_output: Ratio::from_integer(wpo),
        }
    }

    fn conv_node() -> OpNode {
        OpNode::new(
            "c",
            OpKind::Conv2D,
            ["x"],
            OpAttrs::default().kernel(3, 3).out_channels(4),
        )
    }

    fn flat(class: OpClass, tput: f64, power: f64) -> OpTypeProfile<f64> {
        OpTypeProfile::new(
            class,
            vec![ThroughputKnot {
                work_per_output: 1.0,
                throughput: tput,
            }],
            power,
        )
        .unwrap()
    }

    #[test]
    fn interpolation() {
        let p = two_knots();
        assert_eq!(p.throughput_at(64.0), 200.0 * M);
        assert_eq!(p.throughput_at(256.0), 280.0 * M);
        assert_eq!(p.throughput_at(128.0), 240.0 * M);
        assert_eq!(p.throughput_at(1024.0), 280.0 * M);
        assert_eq!(p.throughput_at(1.0), 200.0 * M);
    }

    #[test]
    fn one_class_file() {
        let text = "#target m7\n#flash_bytes 2048\n#sram_bytes 512\n\
                    op_class,work_per_output,throughput_ops_per_s,power_mw\n\
                    conv,27,95000000,120\n";
        let p: HwProfile<f64> = load_profile(text).unwrap();
        assert_eq!(p.target_name(), "m7");
        assert_eq!((p.flash_budget(), p.sram_budget()), (2048, 512));
        assert_eq!(p.classes().count(), 1);
        let conv = p.profile_for(OpKind::Conv2D).unwrap();
        assert_eq!(conv.knots()[0].throughput, 95e6);
        assert_eq!(conv.power_mw(), 120.0);
        assert_eq!(
            p.profile_for(OpKind::MaxPool).unwrap_err(),
            ProfileError::MissingClass(OpClass::Pool)
        );
        assert_eq!(
            load_profile_strict::<f64>(text).unwrap_err(),
            ProfileError::MissingClass(OpClass::Conv1x1)
        );
    }

    #[test]
    fn defaults_without_pragmas() {
        let p: HwProfile<f64> = load_profile(
            "op_class,work_per_output,throughput_ops_per_s,power_mw\nfallback,1,1000,10\n",
        )
        .unwrap();
        assert_eq!(p.flash_budget(), 1_048_576);
        assert_eq!(p.sram_budget(), 327_680);
        assert!(p.check_complete().is_ok());
        assert_eq!(
            p.profile_for(OpKind::Softmax).unwrap().class(),
            OpClass::Fallback
        );
    }

    #[test]
    fn rejected_files() {
        let h = "op_class,work_per_output,throughput_ops_per_s,power_mw\n";
        let dup = format!("{h}conv,27,95,120\nconv,27,96,120\n");
        assert!(matches!(
            load_profile::<f64>(&dup),
            Err(ProfileError::DuplicateKnot {
                class: OpClass::Conv,
                ..
            })
        ));
        assert!(matches!(
            load_profile::<f64>(&format!("{h}conv,27,0,120\n")),
            Err(ProfileError::NonPositive {
                line: 2,
                field: "throughput_ops_per_s"
            })
        ));
        assert!(matches!(
            load_profile::<f64>(&format!("{h}conv,27,95,-1\n")),
            Err(ProfileError::NonPositive {
                field: "power_mw",
                ..
            })
        ));
        assert!(matches!(
            load_profile::<f64>(&format!("{h}conv,27,95\n")),
            Err(ProfileError::Malformed { .. })
        ));
        assert!(matches!(
            load_profile::<f64>(&format!("{h}gpu,27,95,1\n")),
            Err(ProfileError::Malformed { line: 2, .. })
        ));
        assert!(matches!(
            load_profile::<f64>(h),
            Err(ProfileError::Malformed { .. })
        ));
        assert!(matches!(
            load_profile::<f64>(&format!("{h}conv,1,95,1\nconv,2,95,2\n")),
            Err(ProfileError::InconsistentPower { .. })
        ));
        assert!(matches!(
            load_profile::<f64>(&format!("#voltage 3\n{h}conv,1,95,1\n")),
            Err(ProfileError::Malformed { line: 1, .. })
        ));
    }

    #[test]
    fn empty_knot_table() {
        assert_eq!(
            OpTypeProfile::<f64>::new(OpClass::Fc, vec![], 1.0).unwrap_err(),
            ProfileError::EmptyClass(OpClass::Fc)
        );
    }

    #[test]
    fn time_and_energy() {
        let p = HwProfile::new("t", [flat(OpClass::Conv, 100.0 * M, 100.0)], 1, 1);
        let node = conv_node();
        let t = estimate_time(&p, &node, &metrics(1_000_000, 27)).unwrap();
        assert!((t - 1e-2).abs() < 1e-15);
        let e = estimate_energy(&p, &node, &metrics(1_000_000, 27)).unwrap();
        assert!((e - 1e-3).abs() < 1e-15);
        assert_eq!(estimate_time(&p, &node, &metrics(0, 27)).unwrap(), 0.0);
        assert_eq!(estimate_energy(&p, &node, &metrics(0, 27)).unwrap(), 0.0);

        let p = HwProfile::new("t", [flat(OpClass::Conv, 50.0 * M, 100.0)], 1, 1);
        let t = estimate_time(&p, &node, &metrics(5130, 256)).unwrap();
        assert!((t - 102.6e-6).abs() < 1e-15);
    }

    #[test]
    fn five_x_energy_ratio() {
        let p = HwProfile::new(
            "t",
            [
                flat(OpClass::Conv, 200.0 * M, 120.0),
                flat(OpClass::DwConv, 40.0 * M, 120.0),
            ],
            1,
            1,
        );
        let dw = OpNode::new(
            "d",
            OpKind::DWConv2D,
            ["x"],
            OpAttrs::default().kernel(3, 3),
        );
        let m = metrics(1_000_000, 9);
        let ratio =
            estimate_energy(&p, &dw, &m).unwrap() / estimate_energy(&p, &conv_node(), &m).unwrap();
        assert!((ratio - 5.0).abs() < 1e-12);
    }

    #[test]
    fn f32_profile() {
        let p: HwProfile<f32> = default_profile();
        assert!(p.check_complete().is_ok());
        let t = throughput(&p, OpKind::Conv2D, Ratio::from_integer(27)).unwrap();
        assert!(t > 0.0);
    }

    #[test]
    fn csv_round_trip() {
        let p: HwProfile<f64> = default_profile();
        let again: HwProfile<f64> = load_profile(&p.to_csv()).unwrap();
        assert_eq!(again, p);
    }
}
