//! Network case data: buses, branches, devices and cost factors.

mod profiles;
pub mod topology;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use profiles::{load_profile, renewable_profile};
pub use topology::{is_radial, radiality_rows, Loop, RadialityRow};

pub const SCHEMA: &str = "rdnr-case/1";

/// Either one value shared by every item or one value per item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerItem {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerItem {
    fn expand(&self, n: usize, what: &str, errs: &mut Vec<String>) -> Vec<f64> {
        match self {
            PerItem::Uniform(v) => vec![*v; n],
            PerItem::Each(v) => {
                if v.len() != n {
                    errs.push(format!("{what}: expected {n} entries, got {}", v.len()));
                    vec![0.0; n]
                } else {
                    v.clone()
                }
            }
        }
    }
}

/// Resizing cost: uniform, per renewable, or per renewable and period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResizingCost {
    Uniform(f64),
    PerUnit(Vec<f64>),
    PerUnitPeriod(Vec<Vec<f64>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseSpec {
    pub mva: f64,
    pub kv: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BusKind {
    Substation,
    Load,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BusSpec {
    pub id: u32,
    pub kind: BusKind,
    pub v_min: f64,
    pub v_max: f64,
    pub p_load: Vec<f64>,
    pub q_load: Vec<f64>,
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BranchSpec {
    pub id: u32,
    pub from: u32,
    pub to: u32,
    pub r: f64,
    pub x: f64,
    pub l_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    #[serde(default = "yes")]
    pub switchable: bool,
}

fn default_band() -> [f64; 2] {
    [0.5, 1.5]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DeviceSpec {
    Thermal {
        bus: u32,
        p_min: f64,
        p_max: f64,
        q_min: f64,
        q_max: f64,
    },
    Renewable {
        bus: u32,
        forecast: Vec<f64>,
        #[serde(default = "default_band")]
        band: [f64; 2],
    },
    Storage {
        bus: u32,
        p_min: f64,
        p_max: f64,
        soc_min: f64,
        soc_max: f64,
        soc_init: f64,
        dt: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CostSpec {
    pub switching: PerItem,
    pub resizing: ResizingCost,
    pub thermal_p: PerItem,
    pub thermal_q: PerItem,
    pub storage: PerItem,
}

/// On-disk case layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseFile {
    pub schema: String,
    #[serde(default)]
    pub name: String,
    pub base: BaseSpec,
    pub horizon: usize,
    pub buses: Vec<BusSpec>,
    pub branches: Vec<BranchSpec>,
    pub devices: Vec<DeviceSpec>,
    pub costs: CostSpec,
    #[serde(rename = "bigM", default, skip_serializing_if = "Option::is_none")]
    pub big_m: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Bus {
    pub id: u32,
    pub substation: bool,
    pub v_min: f64,
    pub v_max: f64,
    pub p_load: Vec<f64>,
    pub q_load: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    pub id: u32,
    /// Bus index (not id) of the sending end.
    pub from: usize,
    pub to: usize,
    pub r: f64,
    pub x: f64,
    pub l_max: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub switchable: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Thermal {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Renewable {
    pub bus: usize,
    pub forecast: Vec<f64>,
    pub band: [f64; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Storage {
    pub bus: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub soc_init: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Costs {
    /// Per branch.
    pub switching: Vec<f64>,
    /// Per renewable, per period.
    pub resizing: Vec<Vec<f64>>,
    pub thermal_p: Vec<f64>,
    pub thermal_q: Vec<f64>,
    pub storage: Vec<f64>,
}

/// A validated network case. Branch and bus vectors keep file order.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkCase {
    pub name: String,
    pub base_mva: f64,
    pub base_kv: f64,
    pub horizon: usize,
    pub buses: Vec<Bus>,
    pub branches: Vec<Branch>,
    pub thermals: Vec<Thermal>,
    pub renewables: Vec<Renewable>,
    pub storages: Vec<Storage>,
    pub costs: Costs,
    pub big_m: Option<f64>,
    pub substation: usize,
}

impl NetworkCase {
    pub fn from_json(text: &str) -> Result<Self> {
        let file: CaseFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("case serialises")
    }

    pub fn num_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    /// Number of uncertain coordinates (renewables × periods).
    pub fn num_w(&self) -> usize {
        self.renewables.len() * self.horizon
    }

    /// Coordinate of renewable `i` in period `t`.
    pub fn w_index(&self, i: usize, t: usize) -> usize {
        i * self.horizon + t
    }

    pub fn bus_index(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn branch_index(&self, id: u32) -> Option<usize> {
        self.branches.iter().position(|b| b.id == id)
    }

    pub fn from_file(file: CaseFile) -> Result<Self> {
        let mut errs = Vec::new();
        if file.schema != SCHEMA {
            errs.push(format!("unknown schema '{}', expected '{SCHEMA}'", file.schema));
        }
        let t = file.horizon;
        if t == 0 {
            errs.push("horizon must be at least 1".into());
        }
        if !(file.base.mva > 0.0) || !(file.base.kv > 0.0) {
            errs.push("base mva and kv must be positive".into());
        }

        let mut bus_ids = BTreeMap::new();
        for (k, b) in file.buses.iter().enumerate() {
            if bus_ids.insert(b.id, k).is_some() {
                errs.push(format!("duplicate bus id {}", b.id));
            }
        }
        let n_sub = file.buses.iter().filter(|b| b.kind == BusKind::Substation).count();
        if n_sub != 1 {
            errs.push(format!("exactly one substation bus required, found {n_sub}"));
        }
        let mut buses = Vec::with_capacity(file.buses.len());
        for b in &file.buses {
            if !(b.v_min > 0.0 && b.v_min <= b.v_max) {
                errs.push(format!("bus {}: voltage bounds [{}, {}] invalid", b.id, b.v_min, b.v_max));
            }
            if b.p_load.len() != t || b.q_load.len() != t {
                errs.push(format!("bus {}: load series must have {t} entries", b.id));
            }
            if b.p_load.iter().chain(&b.q_load).any(|v| !v.is_finite()) {
                errs.push(format!("bus {}: non-finite load", b.id));
            }
            buses.push(Bus {
                id: b.id,
                substation: b.kind == BusKind::Substation,
                v_min: b.v_min,
                v_max: b.v_max,
                p_load: b.p_load.clone(),
                q_load: b.q_load.clone(),
            });
        }
        if file.buses.is_empty() {
            errs.push("case has no buses".into());
        }

        let mut branch_ids = BTreeSet::new();
        let mut branches = Vec::with_capacity(file.branches.len());
        for br in &file.branches {
            if !branch_ids.insert(br.id) {
                errs.push(format!("duplicate branch id {}", br.id));
            }
            let (from, to) = (bus_ids.get(&br.from), bus_ids.get(&br.to));
            if from.is_none() || to.is_none() {
                errs.push(format!("branch {}: unknown endpoint bus", br.id));
            }
            if br.from == br.to {
                errs.push(format!("branch {}: self loop", br.id));
            }
            if !(br.r >= 0.0 && br.x >= 0.0 && br.r + br.x > 0.0) {
                errs.push(format!("branch {}: impedance must be non-negative and non-zero", br.id));
            }
            if !(br.l_max > 0.0) {
                errs.push(format!("branch {}: l_max must be positive", br.id));
            }
            if !(br.p_min <= 0.0 && br.p_max >= 0.0 && br.q_min <= 0.0 && br.q_max >= 0.0) {
                errs.push(format!("branch {}: flow limits must bracket zero", br.id));
            }
            branches.push(Branch {
                id: br.id,
                from: from.copied().unwrap_or(0),
                to: to.copied().unwrap_or(0),
                r: br.r,
                x: br.x,
                l_max: br.l_max,
                p_min: br.p_min,
                p_max: br.p_max,
                q_min: br.q_min,
                q_max: br.q_max,
                switchable: br.switchable,
            });
        }

        let (mut thermals, mut renewables, mut storages) = (Vec::new(), Vec::new(), Vec::new());
        for (k, d) in file.devices.iter().enumerate() {
            let bus_of = |id: u32, errs: &mut Vec<String>| match bus_ids.get(&id) {
                Some(&b) => b,
                None => {
                    errs.push(format!("device {k}: unknown bus {id}"));
                    0
                }
            };
            match d {
                DeviceSpec::Thermal { bus, p_min, p_max, q_min, q_max } => {
                    if !(p_min <= p_max && q_min <= q_max) {
                        errs.push(format!("device {k}: thermal bounds out of order"));
                    }
                    thermals.push(Thermal { bus: bus_of(*bus, &mut errs), p_min: *p_min, p_max: *p_max, q_min: *q_min, q_max: *q_max });
                }
                DeviceSpec::Renewable { bus, forecast, band } => {
                    if forecast.len() != t {
                        errs.push(format!("device {k}: forecast must have {t} entries"));
                    }
                    if forecast.iter().any(|v| !(*v >= 0.0)) {
                        errs.push(format!("device {k}: forecast must be non-negative"));
                    }
                    if !(band[0] >= 0.0 && band[0] <= 1.0 && band[1] >= 1.0) {
                        errs.push(format!("device {k}: band must satisfy 0 ≤ lo ≤ 1 ≤ hi"));
                    }
                    renewables.push(Renewable { bus: bus_of(*bus, &mut errs), forecast: forecast.clone(), band: *band });
                }
                DeviceSpec::Storage { bus, p_min, p_max, soc_min, soc_max, soc_init, dt } => {
                    if !(p_min <= p_max) {
                        errs.push(format!("device {k}: storage power bounds out of order"));
                    }
                    if !(soc_min <= soc_init && soc_init <= soc_max) {
                        errs.push(format!("device {k}: storage needs soc_min ≤ soc_init ≤ soc_max"));
                    }
                    if !(*dt > 0.0) {
                        errs.push(format!("device {k}: storage dt must be positive"));
                    }
                    storages.push(Storage {
                        bus: bus_of(*bus, &mut errs),
                        p_min: *p_min,
                        p_max: *p_max,
                        soc_min: *soc_min,
                        soc_max: *soc_max,
                        soc_init: *soc_init,
                        dt: *dt,
                    });
                }
            }
        }

        let c = &file.costs;
        let switching = c.switching.expand(branches.len(), "costs.switching", &mut errs);
        let thermal_p = c.thermal_p.expand(thermals.len(), "costs.thermal_p", &mut errs);
        let thermal_q = c.thermal_q.expand(thermals.len(), "costs.thermal_q", &mut errs);
        let storage = c.storage.expand(storages.len(), "costs.storage", &mut errs);
        let resizing = match &c.resizing {
            ResizingCost::Uniform(v) => vec![vec![*v; t]; renewables.len()],
            ResizingCost::PerUnit(v) => {
                if v.len() != renewables.len() {
                    errs.push(format!("costs.resizing: expected {} entries", renewables.len()));
                }
                v.iter().map(|&x| vec![x; t]).collect()
            }
            ResizingCost::PerUnitPeriod(v) => {
                if v.len() != renewables.len() || v.iter().any(|r| r.len() != t) {
                    errs.push("costs.resizing: expected one row of horizon length per renewable".into());
                }
                v.clone()
            }
        };
        if let Some(m) = file.big_m {
            if !(m > 0.0) {
                errs.push(format!("bigM must be positive, got {m}"));
            }
        }

        let substation = buses.iter().position(|b| b.substation).unwrap_or(0);
        let case = NetworkCase {
            name: file.name.clone(),
            base_mva: file.base.mva,
            base_kv: file.base.kv,
            horizon: t,
            buses,
            branches,
            thermals,
            renewables,
            storages,
            costs: Costs { switching, resizing, thermal_p, thermal_q, storage },
            big_m: file.big_m,
            substation,
        };
        if errs.is_empty() && !case.is_connected() {
            errs.push("network is not connected with every branch closed".into());
        }
        if errs.is_empty() {
            Ok(case)
        } else {
            Err(Error::Validation(errs))
        }
    }

    pub fn to_file(&self) -> CaseFile {
        let id = |b: usize| self.buses[b].id;
        let mut devices = Vec::new();
        for g in &self.thermals {
            devices.push(DeviceSpec::Thermal { bus: id(g.bus), p_min: g.p_min, p_max: g.p_max, q_min: g.q_min, q_max: g.q_max });
        }
        for r in &self.renewables {
            devices.push(DeviceSpec::Renewable { bus: id(r.bus), forecast: r.forecast.clone(), band: r.band });
        }
        for s in &self.storages {
            devices.push(DeviceSpec::Storage {
                bus: id(s.bus),
                p_min: s.p_min,
                p_max: s.p_max,
                soc_min: s.soc_min,
                soc_max: s.soc_max,
                soc_init: s.soc_init,
                dt: s.dt,
            });
        }
        CaseFile {
            schema: SCHEMA.into(),
            name: self.name.clone(),
            base: BaseSpec { mva: self.base_mva, kv: self.base_kv },
            horizon: self.horizon,
            buses: self
                .buses
                .iter()
                .map(|b| BusSpec {
                    id: b.id,
                    kind: if b.substation { BusKind::Substation } else { BusKind::Load },
                    v_min: b.v_min,
                    v_max: b.v_max,
                    p_load: b.p_load.clone(),
                    q_load: b.q_load.clone(),
                })
                .collect(),
            branches: self
                .branches
                .iter()
                .map(|b| BranchSpec {
                    id: b.id,
                    from: id(b.from),
                    to: id(b.to),
                    r: b.r,
                    x: b.x,
                    l_max: b.l_max,
                    p_min: b.p_min,
                    p_max: b.p_max,
                    q_min: b.q_min,
                    q_max: b.q_max,
                    switchable: b.switchable,
                })
                .collect(),
            devices,
            costs: CostSpec {
                switching: PerItem::Each(self.costs.switching.clone()),
                resizing: ResizingCost::PerUnitPeriod(self.costs.resizing.clone()),
                thermal_p: PerItem::Each(self.costs.thermal_p.clone()),
                thermal_q: PerItem::Each(self.costs.thermal_q.clone()),
                storage: PerItem::Each(self.costs.storage.clone()),
            },
            big_m: self.big_m,
        }
    }

    fn is_connected(&self) -> bool {
        let n = self.buses.len();
        let mut uf = topology::UnionFind::new(n);
        for b in &self.branches {
            uf.union(b.from, b.to);
        }
        (1..n).all(|k| uf.find(k) == uf.find(0))
    }

    /// Expands a single-period case to `horizon` periods using the built-in
    /// daily load and renewable shapes.
    pub fn with_horizon(&self, horizon: usize) -> Result<NetworkCase> {
        if horizon == self.horizon {
            return Ok(self.clone());
        }
        if self.horizon != 1 {
            return Err(Error::InvalidInput("only single-period cases can be expanded".into()));
        }
        if horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        let lp = load_profile(horizon);
        let rp = renewable_profile(horizon);
        let mut c = self.clone();
        c.horizon = horizon;
        for b in &mut c.buses {
            b.p_load = lp.iter().map(|f| f * b.p_load[0]).collect();
            b.q_load = lp.iter().map(|f| f * b.q_load[0]).collect();
        }
        for r in &mut c.renewables {
            r.forecast = rp.iter().map(|f| f * r.forecast[0]).collect();
        }
        for row in &mut c.costs.resizing {
            *row = vec![row[0]; horizon];
        }
        Ok(c)
    }

    /// Adjacency list of (neighbour bus, branch index).
    pub fn adjacency(&self) -> Vec<Vec<(usize, usize)>> {
        let mut adj = vec![Vec::new(); self.buses.len()];
        for (k, b) in self.branches.iter().enumerate() {
            adj[b.from].push((b.to, k));
            adj[b.to].push((b.from, k));
        }
        adj
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cases;

    #[test]
    fn bundled_cases_parse_and_round_trip() {
        for text in [cases::CASE6, cases::CASE33] {
            let c = NetworkCase::from_json(text).unwrap();
            let again = NetworkCase::from_json(&c.to_json()).unwrap();
            assert_eq!(c, again);
        }
    }

    #[test]
    fn case33_shape() {
        let c = cases::case33();
        assert_eq!(c.num_buses(), 33);
        assert_eq!(c.num_branches(), 37);
        assert_eq!(c.renewables.len(), 6);
        assert_eq!(c.storages.len(), 4);
    }

    #[test]
    fn validation_collects_every_problem() {
        let mut f = cases::case6().to_file();
        f.buses[2].v_min = 2.0;
        f.branches[0].l_max = -1.0;
        f.branches[1].to = 999;
        match NetworkCase::from_file(f) {
            Err(Error::Validation(v)) => assert!(v.len() >= 3, "{v:?}"),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn disconnected_case_rejected() {
        let mut f = cases::case6().to_file();
        let last = f.buses.last().unwrap().id;
        f.branches.retain(|b| b.from != last && b.to != last);
        assert!(matches!(NetworkCase::from_file(f), Err(Error::Validation(_))));
    }

    #[test]
    fn horizon_expansion_keeps_shape() {
        let c = cases::case6().with_horizon(4).unwrap();
        assert_eq!(c.horizon, 4);
        assert!(c.buses.iter().all(|b| b.p_load.len() == 4));
        assert_eq!(c.num_w(), 8);
        assert_eq!(c.costs.resizing[0].len(), 4);
    }
}
