//! On-disk formats: plan, demand and model documents (TOML) and the
//! measurement and sweep CSV tables. All of these are `f64`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fibergrid::{ChannelAssignment, ChannelPlan, CoreId, CoreTopology, Direction, Freq, FrequencyGrid, Role};
use crate::planner::{ClassicalDemand, TrafficDemand};
use crate::scenario::Curve;
use crate::xtmodel::{MeasurementRecord, XtalkModel};

pub const MEASUREMENT_HEADER: &str = "power_dbm,pcr_cps,direction,cores,freq_ghz,length_km,filter_loss_db";
pub const SWEEP_HEADER: &str = "x,variant,skr_bps,qber,q_mu,e_mu,y1_lower,e1_upper,xt_pcr_cps,eta,y0";

pub fn read_to_string(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn write_string(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn parse_err(origin: &str, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: origin.to_string(),
        message: message.to_string(),
    }
}

fn from_toml<D: serde::de::DeserializeOwned>(text: &str, origin: &str) -> Result<D> {
    toml::from_str(text).map_err(|e| parse_err(origin, e))
}

fn to_toml<S: Serialize>(value: &S) -> Result<String> {
    toml::to_string(value).map_err(|e| parse_err("<serialize>", e))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyDoc {
    #[serde(default = "seven")]
    pub core_count: u32,
    #[serde(default = "one")]
    pub center: u32,
    /// Unordered neighbor pairs; omitted for the default hexagonal layout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<Vec<[u32; 2]>>,
    pub quantum_core: u32,
}

fn seven() -> u32 {
    7
}

fn one() -> u32 {
    1
}

impl TopologyDoc {
    pub fn to_topology(&self) -> Result<CoreTopology> {
        build_topology(self.core_count, self.center, self.adjacency.as_deref())
    }
}

/// Hexagonal layout when `adjacency` is omitted (seven cores, center 1 only).
pub fn build_topology(core_count: u32, center: u32, adjacency: Option<&[[u32; 2]]>) -> Result<CoreTopology> {
    match adjacency {
        Some(pairs) => CoreTopology::from_adjacency(
            core_count,
            CoreId(center),
            pairs.iter().map(|[a, b]| (CoreId(*a), CoreId(*b))),
        ),
        None if core_count == 7 && center == 1 => Ok(CoreTopology::hexagonal()),
        None => Err(Error::domain(format!(
            "a {core_count}-core topology needs an explicit adjacency list"
        ))),
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridDoc {
    pub f0_ghz: i64,
    pub delta_f_ghz: i64,
    pub channel_count: u32,
}

impl GridDoc {
    pub fn to_grid(self) -> Result<FrequencyGrid> {
        FrequencyGrid::from_ghz(self.f0_ghz, self.delta_f_ghz, self.channel_count)
    }

    pub fn from_grid(grid: &FrequencyGrid) -> Result<Self> {
        let whole = |f: Freq, what: &str| {
            f.whole_ghz()
                .ok_or_else(|| Error::domain(format!("{what} {f} is not a whole number of GHz")))
        };
        Ok(Self {
            f0_ghz: whole(grid.f0, "f0")?,
            delta_f_ghz: whole(grid.delta_f, "channel spacing")?,
            channel_count: grid.channel_count,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelDoc {
    pub core: u32,
    pub freq_ghz: i64,
    pub role: Role,
    #[serde(default = "co")]
    pub direction: Direction,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_dbm: Option<f64>,
}

fn co() -> Direction {
    Direction::Co
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanDoc {
    pub topology: TopologyDoc,
    pub grid: GridDoc,
    #[serde(default)]
    pub channel: Vec<ChannelDoc>,
}

pub fn parse_plan(text: &str, origin: &str) -> Result<ChannelPlan<f64>> {
    let doc: PlanDoc = from_toml(text, origin)?;
    let topology = doc.topology.to_topology().map_err(|e| parse_err(origin, e))?;
    let grid = doc.grid.to_grid().map_err(|e| parse_err(origin, e))?;
    let mut assignments = Vec::with_capacity(doc.channel.len());
    for (i, c) in doc.channel.into_iter().enumerate() {
        if c.role == Role::Classical && c.power_dbm.is_none() {
            return Err(parse_err(origin, format!("channel #{}: classical channel needs `power_dbm`", i + 1)));
        }
        assignments.push(ChannelAssignment {
            core: CoreId(c.core),
            frequency: Freq::from_ghz(c.freq_ghz),
            role: c.role,
            direction: c.direction,
            // quantum channels carry no classical launch power
            launch_power: if c.role == Role::Quantum { None } else { c.power_dbm },
        });
    }
    Ok(ChannelPlan {
        topology,
        grid,
        assignments,
        quantum_core: CoreId(doc.topology.quantum_core),
    })
}

pub fn plan_to_string(plan: &ChannelPlan<f64>) -> Result<String> {
    let topo = &plan.topology;
    let adjacency = if *topo == CoreTopology::hexagonal() {
        None
    } else {
        Some(topo.adjacency().map(|(a, b)| [a.0, b.0]).collect())
    };
    let mut channel = Vec::with_capacity(plan.assignments.len());
    for a in &plan.assignments {
        channel.push(ChannelDoc {
            core: a.core.0,
            freq_ghz: a
                .frequency
                .whole_ghz()
                .ok_or_else(|| Error::domain(format!("{} is not a whole number of GHz", a.frequency)))?,
            role: a.role,
            direction: a.direction,
            power_dbm: a.launch_power,
        });
    }
    to_toml(&PlanDoc {
        topology: TopologyDoc {
            core_count: topo.core_count(),
            center: topo.center().0,
            adjacency,
            quantum_core: plan.quantum_core.0,
        },
        grid: GridDoc::from_grid(&plan.grid)?,
        channel,
    })
}

pub fn read_plan(path: &Path) -> Result<ChannelPlan<f64>> {
    parse_plan(&read_to_string(path)?, &path.display().to_string())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassicalDoc {
    pub ordinal: u32,
    pub power_dbm: f64,
    pub direction: Direction,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemandDoc {
    pub quantum_count: u32,
    #[serde(default)]
    pub sync: bool,
    #[serde(default)]
    pub classical: Vec<ClassicalDoc>,
}

pub fn parse_demand(text: &str, origin: &str) -> Result<TrafficDemand<f64>> {
    let doc: DemandDoc = from_toml(text, origin)?;
    for (i, c) in doc.classical.iter().enumerate() {
        if !c.power_dbm.is_finite() {
            return Err(parse_err(origin, format!("classical #{}: `power_dbm` must be finite", i + 1)));
        }
    }
    Ok(TrafficDemand {
        classical: doc
            .classical
            .into_iter()
            .map(|c| ClassicalDemand {
                ordinal: c.ordinal,
                power_dbm: c.power_dbm,
                direction: c.direction,
            })
            .collect(),
        quantum_count: doc.quantum_count,
        sync_required: doc.sync,
    })
}

pub fn read_demand(path: &Path) -> Result<TrafficDemand<f64>> {
    parse_demand(&read_to_string(path)?, &path.display().to_string())
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDoc {
    pub chi_co: f64,
    pub chi_counter: f64,
    pub reference_filter_loss_db: f64,
    pub dark_floor_cps: f64,
}

pub fn parse_model(text: &str, origin: &str) -> Result<XtalkModel<f64>> {
    let d: ModelDoc = from_toml(text, origin)?;
    XtalkModel::new(d.chi_co, d.chi_counter, d.reference_filter_loss_db, d.dark_floor_cps)
        .map_err(|e| parse_err(origin, e))
}

pub fn model_to_string(model: &XtalkModel<f64>) -> Result<String> {
    to_toml(&ModelDoc {
        chi_co: model.chi_co,
        chi_counter: model.chi_counter,
        reference_filter_loss_db: model.reference_filter_loss_db,
        dark_floor_cps: model.dark_floor,
    })
}

pub fn read_model(path: &Path) -> Result<XtalkModel<f64>> {
    parse_model(&read_to_string(path)?, &path.display().to_string())
}

#[derive(Debug, Deserialize)]
struct MeasurementRow {
    power_dbm: f64,
    pcr_cps: f64,
    direction: String,
    cores: String,
    freq_ghz: i64,
    length_km: f64,
    filter_loss_db: f64,
}

fn parse_cores(s: &str) -> std::result::Result<BTreeSet<CoreId>, String> {
    s.split('+')
        .map(|c| {
            c.trim()
                .parse::<u32>()
                .map(CoreId)
                .map_err(|_| format!("`cores` entry `{c}` is not a core index"))
        })
        .collect()
}

/// Parses a measurement table. Lines starting with `#` are ignored.
pub fn parse_measurements(text: &str, origin: &str) -> Result<Vec<MeasurementRecord<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_err(origin, e))?.clone();
    let expected: Vec<&str> = MEASUREMENT_HEADER.split(',').collect();
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(parse_err(origin, format!("header must be `{MEASUREMENT_HEADER}`")));
    }
    let mut out = Vec::new();
    for row in reader.deserialize::<MeasurementRow>() {
        let row = row.map_err(|e| parse_err(origin, e))?;
        let line = out.len() + 2;
        let at = |msg: String| parse_err(origin, format!("record {line}: {msg}"));
        let direction = row.direction.parse::<Direction>().map_err(|e| at(e.to_string()))?;
        let active_cores = parse_cores(&row.cores).map_err(at)?;
        if !(row.pcr_cps >= 0.0) {
            return Err(at(format!("`pcr_cps` must be non-negative, got {}", row.pcr_cps)));
        }
        if !(row.length_km > 0.0) {
            return Err(at(format!("`length_km` must be positive, got {}", row.length_km)));
        }
        out.push(MeasurementRecord {
            launch_power_dbm: row.power_dbm,
            pcr: row.pcr_cps,
            direction,
            active_cores,
            probe_frequency: Freq::from_ghz(row.freq_ghz),
            fiber_length_km: row.length_km,
            filter_chain_loss_db: row.filter_loss_db,
        });
    }
    Ok(out)
}

pub fn measurements_to_string(records: &[MeasurementRecord<f64>]) -> Result<String> {
    let mut s = String::from(MEASUREMENT_HEADER);
    s.push('\n');
    for r in records {
        let cores: Vec<String> = r.active_cores.iter().map(|c| c.0.to_string()).collect();
        let ghz = r
            .probe_frequency
            .whole_ghz()
            .ok_or_else(|| Error::domain(format!("{} is not a whole number of GHz", r.probe_frequency)))?;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.launch_power_dbm,
            r.pcr,
            r.direction,
            cores.join("+"),
            ghz,
            r.fiber_length_km,
            r.filter_chain_loss_db
        );
    }
    Ok(s)
}

pub fn read_measurements(path: &Path) -> Result<Vec<MeasurementRecord<f64>>> {
    parse_measurements(&read_to_string(path)?, &path.display().to_string())
}

/// Nine significant digits, scientific notation.
pub fn fmt_sig9(v: f64) -> String {
    format!("{v:.8e}")
}

/// One row per (x, variant), x-major.
pub fn sweep_csv(curves: &[Curve<f64>]) -> String {
    let mut s = String::from(SWEEP_HEADER);
    s.push('\n');
    let n = curves.iter().map(|c| c.points.len()).max().unwrap_or(0);
    for i in 0..n {
        for c in curves {
            let Some((x, r)) = c.points.get(i) else { continue };
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{}",
                fmt_sig9(*x),
                c.label,
                fmt_sig9(r.skr),
                fmt_sig9(r.e_mu),
                fmt_sig9(r.q_mu),
                fmt_sig9(r.e_mu),
                fmt_sig9(r.y1_lower),
                fmt_sig9(r.e1_upper),
                fmt_sig9(r.xt_pcr),
                fmt_sig9(r.eta),
                fmt_sig9(r.y0),
            );
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SweepRow {
    pub x: f64,
    pub variant: String,
    pub skr_bps: f64,
    pub qber: f64,
    pub q_mu: f64,
    pub e_mu: f64,
    pub y1_lower: f64,
    pub e1_upper: f64,
    pub xt_pcr_cps: f64,
    pub eta: f64,
    pub y0: f64,
}

pub fn parse_sweep_csv(text: &str, origin: &str) -> Result<Vec<SweepRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_err(origin, e))?.clone();
    if headers.iter().collect::<Vec<_>>().join(",") != SWEEP_HEADER {
        return Err(parse_err(origin, format!("header must be `{SWEEP_HEADER}`")));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| parse_err(origin, e)))
        .collect()
}

/// `(x, skr)` series per variant, in first-appearance order.
pub fn series_by_variant(rows: &[SweepRow]) -> Vec<(String, Vec<(f64, f64)>)> {
    let mut out: Vec<(String, Vec<(f64, f64)>)> = Vec::new();
    for r in rows {
        match out.iter_mut().find(|(l, _)| *l == r.variant) {
            Some((_, v)) => v.push((r.x, r.skr_bps)),
            None => out.push((r.variant.clone(), vec![(r.x, r.skr_bps)])),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fibergrid::{reference_plan, validate_plan};

    const FIELD_PLAN: &str = r#"
[topology]
quantum_core = 3

[grid]
f0_ghz = 193350
delta_f_ghz = 100
channel_count = 40

[[channel]]
core = 3
freq_ghz = 193500
role = "quantum"

[[channel]]
core = 3
freq_ghz = 193300
role = "sync"
power_dbm = -20.0

[[channel]]
core = 1
freq_ghz = 193400
role = "classical"
direction = "counter"
power_dbm = 0.0

[[channel]]
core = 2
freq_ghz = 193600
role = "classical"
direction = "counter"
power_dbm = 0.0
"#;

    #[test]
    fn field_plan_parses_and_validates() {
        let plan = parse_plan(FIELD_PLAN, "field.toml").unwrap();
        assert_eq!(plan.quantum_core, CoreId(3));
        assert_eq!(plan.assignments.len(), 4);
        assert!(validate_plan(&plan).is_empty());
    }

    #[test]
    fn plan_text_roundtrip() {
        let plan = reference_plan(3.0, Direction::Co);
        let text = plan_to_string(&plan).unwrap();
        assert_eq!(parse_plan(&text, "x").unwrap(), plan);
        let custom = ChannelPlan {
            topology: CoreTopology::from_adjacency(3, CoreId(1), [(CoreId(1), CoreId(2)), (CoreId(1), CoreId(3))])
                .unwrap(),
            ..plan.without_classical()
        };
        let text = plan_to_string(&custom).unwrap();
        assert!(text.contains("adjacency"));
        assert_eq!(parse_plan(&text, "x").unwrap().topology, custom.topology);
    }

    #[test]
    fn plan_parse_errors_name_the_field() {
        let bad = FIELD_PLAN.replace("role = \"sync\"", "role = \"pilot\"");
        let err = parse_plan(&bad, "bad.toml").unwrap_err().to_string();
        assert!(err.contains("bad.toml") && err.contains("pilot"), "{err}");
        let missing = FIELD_PLAN.replace("f0_ghz = 193350\n", "");
        let err = parse_plan(&missing, "m.toml").unwrap_err().to_string();
        assert!(err.contains("f0_ghz"), "{err}");
        let no_power = FIELD_PLAN.replace("direction = \"counter\"\npower_dbm = 0.0\n\n[[channel]]", "direction = \"counter\"\n\n[[channel]]");
        let err = parse_plan(&no_power, "p.toml").unwrap_err().to_string();
        assert!(err.contains("power_dbm"), "{err}");
    }

    #[test]
    fn demand_parsing() {
        let text = r#"
quantum_count = 1
sync = true

[[classical]]
ordinal = 1
power_dbm = 0.0
direction = "counter"
"#;
        let d = parse_demand(text, "d").unwrap();
        assert_eq!(d.classical.len(), 1);
        assert!(d.sync_required);
        let err = parse_demand(&text.replace("ordinal = 1", "ordinal = \"one\""), "d.toml")
            .unwrap_err()
            .to_string();
        assert!(err.contains("ordinal"), "{err}");
    }

    #[test]
    fn model_roundtrip() {
        let m = XtalkModel::new(15.0, 1.5, 2.9, 10.0).unwrap();
        let text = model_to_string(&m).unwrap();
        for key in ["chi_co", "chi_counter", "reference_filter_loss_db", "dark_floor_cps"] {
            assert!(text.contains(key), "{text}");
        }
        assert_eq!(parse_model(&text, "m").unwrap(), m);
        assert!(parse_model("chi_co = 1.0", "m").is_err());
        assert!(parse_model(&text.replace("chi_co = 15.0", "chi_co = -1.0"), "m").is_err());
    }

    #[test]
    fn measurement_csv() {
        let text = format!("{MEASUREMENT_HEADER}\n0,1000,co,1+2+4,193500,1,2.9\n# note\n3,2000,counter,1,193500,1,2.9\n");
        let recs = parse_measurements(&text, "m.csv").unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].active_cores.len(), 3);
        assert_eq!(recs[1].direction, Direction::Counter);
        assert_eq!(parse_measurements(&measurements_to_string(&recs).unwrap(), "x").unwrap(), recs);

        let bad_dir = format!("{MEASUREMENT_HEADER}\n0,1000,sideways,1,193500,1,2.9\n");
        let err = parse_measurements(&bad_dir, "m.csv").unwrap_err().to_string();
        assert!(err.contains("sideways"), "{err}");
        let bad_header = "power,pcr\n0,1\n";
        assert!(parse_measurements(bad_header, "m.csv").is_err());
        let bad_cores = format!("{MEASUREMENT_HEADER}\n0,1000,co,1+x,193500,1,2.9\n");
        assert!(parse_measurements(&bad_cores, "m.csv").unwrap_err().to_string().contains("cores"));
    }

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(10900.0), "1.09000000e4");
        assert_eq!(fmt_sig9(0.0), "0.00000000e0");
        assert_eq!(fmt_sig9(-2.5e-7), "-2.50000000e-7");
        let v = 0.123456789123_f64;
        assert!((fmt_sig9(v).parse::<f64>().unwrap() - v).abs() < 1e-9);
    }
}
