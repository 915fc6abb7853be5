//! Network cases: data model, file formats, radial topology and the
//! case transformations used by the experiments.
//!
//! All quantities are per unit. Voltages are *squared* magnitudes, demands
//! are positive for consumption, and an infinite bound means "no bound".

mod augment;
mod generate;
mod matpower;
mod native;
mod topology;

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

pub use augment::{augment_distributed_generation, set_flow_limits_from_solution, DgSpec};
pub use generate::{random_case, RandomCaseSpec};
pub use matpower::parse_matpower_case;
pub use native::{emit_native_case, parse_native_case};
pub use topology::{validate_radial, RadialTopology};

pub type BusId = usize;
pub type BranchId = usize;

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum CaseError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("case schema: {0}")]
    Schema(String),
    #[error("invalid case: {0}")]
    Validation(String),
    #[error("network is not radial: {0}")]
    NotRadial(String),
    #[error("bus {0} is not connected to the slack bus")]
    Disconnected(BusId),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
}

/// Reads a case file, choosing the format by extension: `.m` is MATPOWER,
/// anything else is the native JSON format.
pub fn read_case_file(path: &std::path::Path) -> Result<NetworkCase, CaseError> {
    let text = std::fs::read_to_string(path).map_err(|e| CaseError::Io {
        path: path.display().to_string(),
        msg: e.to_string(),
    })?;
    if path.extension().is_some_and(|e| e == "m") {
        parse_matpower_case(&text)
    } else {
        parse_native_case(&text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Slack,
    Generator,
    Load,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub kind: BusKind,
    #[serde(with = "bound::lower")]
    pub v_min: f64,
    #[serde(with = "bound::upper")]
    pub v_max: f64,
    pub p_demand: f64,
    pub q_demand: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub id: BranchId,
    pub from_bus: BusId,
    pub to_bus: BusId,
    pub r: f64,
    pub x: f64,
    /// Apparent-power limit; `None` leaves the branch unconstrained.
    pub f_max: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: BusId,
    #[serde(with = "bound::lower")]
    pub p_min: f64,
    #[serde(with = "bound::upper")]
    pub p_max: f64,
    #[serde(with = "bound::lower")]
    pub q_min: f64,
    #[serde(with = "bound::upper")]
    pub q_max: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slack {
    pub bus: BusId,
    pub v0: f64,
    #[serde(with = "bound::lower")]
    pub p_min: f64,
    #[serde(with = "bound::upper")]
    pub p_max: f64,
    #[serde(with = "bound::lower")]
    pub q_min: f64,
    #[serde(with = "bound::upper")]
    pub q_max: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkCase {
    pub base_mva: f64,
    pub slack: Slack,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub generators: Vec<Generator>,
}

impl NetworkCase {
    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    pub fn branch(&self, id: BranchId) -> Option<&Branch> {
        self.branches.iter().find(|b| b.id == id)
    }

    pub fn generator_at(&self, bus: BusId) -> Option<&Generator> {
        self.generators.iter().find(|g| g.bus == bus)
    }

    pub fn load_buses(&self) -> impl Iterator<Item = &Bus> {
        self.buses.iter().filter(|b| b.kind == BusKind::Load)
    }

    /// Checks the structural invariants of a case. Radiality is checked
    /// separately by [`validate_radial`].
    pub fn validate(&self) -> Result<(), CaseError> {
        let fail = |msg: String| Err(CaseError::Validation(msg));
        if !(self.base_mva > 0.0 && self.base_mva.is_finite()) {
            return fail(format!("base MVA must be positive, got {}", self.base_mva));
        }

        let mut ids = HashSet::new();
        for bus in &self.buses {
            if !ids.insert(bus.id) {
                return fail(format!("duplicate bus id {}", bus.id));
            }
            if bus.v_min.is_nan() || bus.v_max.is_nan() || bus.v_min > bus.v_max {
                return fail(format!(
                    "bus {}: v_min {} exceeds v_max {}",
                    bus.id, bus.v_min, bus.v_max
                ));
            }
            if !bus.p_demand.is_finite() || !bus.q_demand.is_finite() {
                return fail(format!("bus {}: demand must be finite", bus.id));
            }
            if bus.kind != BusKind::Load && (bus.p_demand != 0.0 || bus.q_demand != 0.0) {
                return fail(format!(
                    "bus {} carries both generation and load; split it into separate buses",
                    bus.id
                ));
            }
        }

        let slacks: Vec<_> = self.buses.iter().filter(|b| b.kind == BusKind::Slack).collect();
        if slacks.len() != 1 {
            return fail(format!("expected exactly one slack bus, found {}", slacks.len()));
        }
        if slacks[0].id != self.slack.bus {
            return fail(format!(
                "slack record names bus {} but bus {} is marked slack",
                self.slack.bus, slacks[0].id
            ));
        }
        let s = &self.slack;
        if !(s.v0 > 0.0 && s.v0.is_finite()) {
            return fail(format!("slack voltage must be positive, got {}", s.v0));
        }
        check_interval("slack real power", s.p_min, s.p_max)?;
        check_interval("slack reactive power", s.q_min, s.q_max)?;
        if !s.cost.is_finite() {
            return fail("slack cost must be finite".into());
        }

        let kinds: HashMap<BusId, BusKind> = self.buses.iter().map(|b| (b.id, b.kind)).collect();
        let mut gen_buses = HashSet::new();
        for g in &self.generators {
            match kinds.get(&g.bus) {
                Some(BusKind::Generator) => {}
                Some(_) => return fail(format!("generator at bus {} which is not a generator bus", g.bus)),
                None => return fail(format!("generator at unknown bus {}", g.bus)),
            }
            if !gen_buses.insert(g.bus) {
                return fail(format!("more than one generator at bus {}", g.bus));
            }
            check_interval(&format!("generator {} real power", g.bus), g.p_min, g.p_max)?;
            check_interval(&format!("generator {} reactive power", g.bus), g.q_min, g.q_max)?;
            if !g.cost.is_finite() {
                return fail(format!("generator {}: cost must be finite", g.bus));
            }
        }
        for bus in &self.buses {
            if bus.kind == BusKind::Generator && !gen_buses.contains(&bus.id) {
                return fail(format!("generator bus {} has no generator record", bus.id));
            }
        }

        let non_slack = self.buses.len() - 1;
        if self.branches.len() != non_slack {
            return fail(format!(
                "{} branches for {} non-slack buses; a radial network needs exactly one per bus",
                self.branches.len(),
                non_slack
            ));
        }
        let mut branch_ids = HashSet::new();
        for br in &self.branches {
            if !branch_ids.insert(br.id) {
                return fail(format!("duplicate branch id {}", br.id));
            }
            for end in [br.from_bus, br.to_bus] {
                if !kinds.contains_key(&end) {
                    return fail(format!("branch {} references unknown bus {}", br.id, end));
                }
            }
            if !(br.r >= 0.0 && br.r.is_finite()) || !(br.x >= 0.0 && br.x.is_finite()) {
                return fail(format!("branch {}: r and x must be finite and nonnegative", br.id));
            }
            if let Some(f) = br.f_max {
                if f.is_nan() || f <= 0.0 {
                    return fail(format!("branch {}: flow limit must be positive, got {f}", br.id));
                }
            }
        }
        Ok(())
    }
}

fn check_interval(what: &str, lo: f64, hi: f64) -> Result<(), CaseError> {
    if lo.is_nan() || hi.is_nan() || lo > hi || lo == f64::INFINITY || hi == f64::NEG_INFINITY {
        return Err(CaseError::Validation(format!("{what}: invalid bounds [{lo}, {hi}]")));
    }
    Ok(())
}

/// Infinite bounds are written as JSON `null`.
mod bound {
    use serde::{Deserialize, Deserializer, Serializer};

    fn ser<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub mod lower {
        use super::*;

        pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
            ser(v, s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NEG_INFINITY))
        }
    }

    pub mod upper {
        use super::*;

        pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
            ser(v, s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
            Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
        }
    }
}
