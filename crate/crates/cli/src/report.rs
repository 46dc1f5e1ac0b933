use serde::{Deserialize, Serialize};

use obspart::estimator::KfConfig;
use obspart::maximize::SolverConfig;
use obspart::measures::{Metric, MetricKind};
use obspart::oracle::Violation;
use obspart::partition::Provenance;
use obspart::placement::ObjectiveMode;
use obspart::sysmodel::Horizon;

pub const TOOL: &str = "obspart";

/// Everything a command produced, plus what it takes to reproduce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config: ResolvedConfig,
    /// Seed of every randomized step; absent for deterministic commands.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub output: Output,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<Timing>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResolvedConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<Horizon>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metric: Option<Metric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver: Option<SolverSettings>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub partition: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sensors: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budgets: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<ObjectiveMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kalman: Option<KfConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepRange>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    pub solver: obspart::maximize::Solver,
    #[serde(flatten)]
    pub config: SolverConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepRange {
    pub from: usize,
    pub to: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    Sysinfo(SysInfo),
    Gramian(GramianOut),
    Partition(PartitionOut),
    Placement(PlacementOut),
    Modularity(ModularityOut),
    Kalman(KalmanOut),
    Check(CheckOut),
    Sweep(SweepOut),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SysInfo {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n_x: usize,
    pub n_y: usize,
    pub state_labels: Vec<String>,
    pub spectral_radius: f64,
    pub stable: bool,
    /// Edge count of the interaction graph, when the file defines one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graph_edges: Option<usize>,
}

/// Metric value of a Gramian, both as measured and shifted so the empty set scores zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Value {
    #[serde(with = "real")]
    pub raw: f64,
    #[serde(with = "real")]
    pub shifted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GramianOut {
    pub selection: Vec<usize>,
    pub labels: Vec<String>,
    pub metric: MetricKind,
    pub value: Value,
    #[serde(with = "real")]
    pub trace: f64,
    #[serde(with = "real")]
    pub logdet: f64,
    pub rank: usize,
    pub matrix: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub states: Vec<usize>,
    pub labels: Vec<String>,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionOut {
    pub kappa: usize,
    pub provenance: Provenance,
    pub blocks: Vec<Block>,
    pub total: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub modularity: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub completed_states: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub evaluations: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceOut {
    #[serde(with = "real::vec")]
    pub objective: Vec<f64>,
    #[serde(with = "real::vec")]
    pub gains: Vec<f64>,
    pub evaluations: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsystemSensors {
    pub budget: usize,
    pub selected: Vec<usize>,
    pub labels: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bound {
    pub metric: MetricKind,
    #[serde(with = "real")]
    pub global: f64,
    #[serde(with = "real")]
    pub local_sum: f64,
    #[serde(with = "real")]
    pub gap: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementOut {
    pub mode: ObjectiveMode,
    pub budgets: Vec<usize>,
    pub selected: Vec<usize>,
    pub labels: Vec<String>,
    pub subsystems: Vec<SubsystemSensors>,
    pub value: Value,
    pub bound: Bound,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<TraceOut>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModularityOut {
    pub blocks: Vec<Vec<usize>>,
    pub edges: usize,
    pub modularity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KalmanOut {
    pub sensors: Vec<usize>,
    pub labels: Vec<String>,
    pub mean_relative_error: f64,
    pub std_dev: f64,
    pub per_trial: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOut {
    pub ground_size: usize,
    pub triples_checked: usize,
    pub violations: usize,
    pub witnesses: Vec<Violation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub kappa: usize,
    pub solver_total: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_modularity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_total: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_modularity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub solver_placement: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spectral_placement: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOut {
    pub rows: Vec<SweepRow>,
}

/// Serde for `f64` that keeps infinities and NaN as the strings `"inf"`, `"-inf"`, `"nan"`.
pub mod real {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: `{other}`"))),
            },
        }
    }

    pub mod vec {
        use serde::ser::SerializeSeq;
        use serde::{Deserialize, Deserializer, Serializer};

        #[derive(Deserialize)]
        struct Item(#[serde(with = "super")] f64);

        struct Ref<'a>(&'a f64);

        impl serde::Serialize for Ref<'_> {
            fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
                super::serialize(self.0, s)
            }
        }

        pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
            let mut seq = s.serialize_seq(Some(v.len()))?;
            for x in v {
                seq.serialize_element(&Ref(x))?;
            }
            seq.end()
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
            let items = Vec::<Item>::deserialize(d)?;
            Ok(items.into_iter().map(|i| i.0).collect())
        }
    }
}
