use serde::{Deserialize, Serialize};

use super::{attack_success_curve, AttackTemplate, ModelCache, NodeRole, ResultTable, ScenarioConfig};
use crate::attack::{InputSource, PowerRule};
use crate::channel::Topology;
use crate::error::Result;
use crate::neuralnet::ArchSpec;
use crate::Scalar;

/// The four candidate distances used for both location sweeps.
pub const LOCATION_DISTANCES: [f64; 4] = [0.5, 1.0, 1.118_033_988_749_895, 1.5];

pub const UPPER_BOUND_LABEL: &str = "upper-bound";

const FIX_DBA_LABELS: [&str; 4] = ["A1", "A2", "A3", "A4"];
const FIX_DTA_LABELS: [&str; 4] = ["A1", "A5", "A6", "A7"];
const ARCH_DEPTHS: [usize; 3] = [1, 2, 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Figure {
    /// Adversary fixed at `d_ba = 0.5`, moved away from the transmitter.
    FixDba,
    /// Adversary fixed at `d_ta = 0.5`, moved away from the emitter.
    FixDta,
    /// Max power vs. surrogate search vs. search on `r_ba`.
    Methods,
    /// Surrogate depth 1, 2 and 3.
    Arch,
}

impl Figure {
    pub const ALL: [Figure; 4] = [Figure::FixDba, Figure::FixDta, Figure::Methods, Figure::Arch];

    pub fn name(self) -> &'static str {
        match self {
            Figure::FixDba => "fix-dba",
            Figure::FixDta => "fix-dta",
            Figure::Methods => "methods",
            Figure::Arch => "arch",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }
}

fn d<T: Scalar>(v: f64) -> T {
    T::lit(v)
}

/// Location shared by both sweeps; also where the method and architecture
/// comparisons are run.
fn common_location<T: Scalar>(base: &ScenarioConfig<T>) -> Topology<T> {
    Topology { label: "A1".into(), d_bt: base.topology.d_bt, d_ba: d(0.5), d_ta: d(0.5) }
}

pub fn reproduce<T: Scalar>(figure: Figure, base: &ScenarioConfig<T>) -> Result<Vec<ResultTable<T>>> {
    reproduce_with_cache(figure, base, &mut ModelCache::new())
}

/// Every curve of one study, in a fixed order. Models come from `cache`,
/// so studies run back to back share training.
pub fn reproduce_with_cache<T: Scalar>(
    figure: Figure,
    base: &ScenarioConfig<T>,
    cache: &mut ModelCache<T>,
) -> Result<Vec<ResultTable<T>>> {
    base.validate()?;
    let target = cache.get(base, NodeRole::Target, base.topology.d_bt, &base.arch_t)?;
    let t_acc = target.meta().validation_accuracy;
    let mut tables = Vec::new();
    let mut push = |mut t: ResultTable<T>, s_acc: f64, hidden: &[usize], white_box: bool| {
        t.meta.target_validation_accuracy = Some(t_acc);
        t.meta.surrogate_validation_accuracy = Some(s_acc);
        t.meta.surrogate_hidden_layers = hidden.to_vec();
        t.meta.white_box = white_box;
        tables.push(t);
    };
    let a1 = common_location(base);
    match figure {
        Figure::FixDba => {
            let sur = cache.get(base, NodeRole::Surrogate, d(0.5), &base.arch_a)?;
            for (label, &d_ta) in FIX_DBA_LABELS.iter().zip(&LOCATION_DISTANCES) {
                let topo = Topology { label: (*label).into(), d_bt: base.topology.d_bt, d_ba: d(0.5), d_ta: d(d_ta) };
                let t = attack_success_curve(*label, &*target, &*sur, base, &topo, &base.attack)?;
                push(t, sur.meta().validation_accuracy, &base.arch_a.hidden_layers, false);
            }
            let ub = AttackTemplate {
                power_rule: PowerRule::SurrogateSearch,
                input_source: InputSource::TransmitterInput,
                ..base.attack.clone()
            };
            let t = attack_success_curve(UPPER_BOUND_LABEL, &*target, &*target, base, &a1, &ub)?;
            push(t, t_acc, &base.arch_t.hidden_layers, true);
        }
        Figure::FixDta => {
            for (label, &d_ba) in FIX_DTA_LABELS.iter().zip(&LOCATION_DISTANCES) {
                let sur = cache.get(base, NodeRole::Surrogate, d(d_ba), &base.arch_a)?;
                let topo = Topology { label: (*label).into(), d_bt: base.topology.d_bt, d_ba: d(d_ba), d_ta: d(0.5) };
                let t = attack_success_curve(*label, &*target, &*sur, base, &topo, &base.attack)?;
                push(t, sur.meta().validation_accuracy, &base.arch_a.hidden_layers, false);
            }
        }
        Figure::Methods => {
            let sur = cache.get(base, NodeRole::Surrogate, d(0.5), &base.arch_a)?;
            let methods = [
                ("max-power", PowerRule::MaxBudget, InputSource::TransmitterInput),
                ("surrogate-search", PowerRule::SurrogateSearch, InputSource::TransmitterInput),
                ("rba-search", PowerRule::SurrogateSearch, InputSource::AdversaryInput),
            ];
            for (label, power_rule, input_source) in methods {
                let tpl = AttackTemplate { power_rule, input_source, ..base.attack.clone() };
                let t = attack_success_curve(label, &*target, &*sur, base, &a1, &tpl)?;
                push(t, sur.meta().validation_accuracy, &base.arch_a.hidden_layers, false);
            }
        }
        Figure::Arch => {
            for depth in ARCH_DEPTHS {
                let width = base.arch_a.hidden_layers.first().copied().unwrap_or(64);
                let arch = ArchSpec { hidden_layers: vec![width; depth], ..base.arch_a.clone() };
                let sur = cache.get(base, NodeRole::Surrogate, d(0.5), &arch)?;
                let label = format!("hidden-{depth}");
                let t = attack_success_curve(label, &*target, &*sur, base, &a1, &base.attack)?;
                push(t, sur.meta().validation_accuracy, &arch.hidden_layers, false);
            }
        }
    }
    Ok(tables)
}
