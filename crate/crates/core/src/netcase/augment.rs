use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{BranchId, BusId, BusKind, CaseError, Generator, NetworkCase};

/// Distributed generation to add to a case.
#[derive(Debug, Clone, PartialEq)]
pub struct DgSpec {
    pub count: usize,
    pub p_max: f64,
    /// Reactive limits are `[-q_mag, q_mag]`.
    pub q_mag: f64,
    /// Costs are drawn uniformly from `[lo, hi)`.
    pub cost_range: (f64, f64),
    pub seed: u64,
}

/// Converts `spec.count` load buses into generator buses.
///
/// The random stream is ChaCha8 seeded with `spec.seed` through
/// `SeedableRng::seed_from_u64`. The candidate load buses (bus-table order,
/// minus `exclude`) are shuffled once and the first `count` are taken; one
/// cost is then drawn per chosen bus in shuffled order. A converted bus
/// loses its demand, since a bus cannot carry both load and generation. If
/// the slack cost does not already exceed `cost_range.1`, it is raised to
/// `cost_range.1 + 1` so the slack stays the most expensive source.
pub fn augment_distributed_generation(
    case: &NetworkCase,
    spec: &DgSpec,
    exclude: &[BusId],
) -> Result<NetworkCase, CaseError> {
    let (lo, hi) = spec.cost_range;
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(CaseError::Argument(format!("invalid cost range [{lo}, {hi}]")));
    }
    if !(spec.p_max >= 0.0 && spec.q_mag >= 0.0) {
        return Err(CaseError::Argument("generator limits must be nonnegative".into()));
    }
    let mut candidates: Vec<BusId> = case
        .load_buses()
        .map(|b| b.id)
        .filter(|id| !exclude.contains(id))
        .collect();
    if spec.count > candidates.len() {
        return Err(CaseError::Argument(format!(
            "cannot place {} generators on {} available load buses",
            spec.count,
            candidates.len()
        )));
    }
    if spec.count == 0 {
        return Ok(case.clone());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    candidates.shuffle(&mut rng);
    let chosen: HashMap<BusId, f64> = candidates[..spec.count]
        .iter()
        .map(|&bus| (bus, if lo < hi { rng.random_range(lo..hi) } else { lo }))
        .collect();

    let mut out = case.clone();
    for bus in &mut out.buses {
        if chosen.contains_key(&bus.id) {
            bus.kind = BusKind::Generator;
            bus.p_demand = 0.0;
            bus.q_demand = 0.0;
        }
    }
    for bus in &out.buses {
        if let Some(&cost) = chosen.get(&bus.id) {
            out.generators.push(Generator {
                bus: bus.id,
                p_min: 0.0,
                p_max: spec.p_max,
                q_min: -spec.q_mag,
                q_max: spec.q_mag,
                cost,
            });
        }
    }
    let position: HashMap<BusId, usize> = out.buses.iter().enumerate().map(|(k, b)| (b.id, k)).collect();
    out.generators.sort_by_key(|g| position[&g.bus]);
    if out.slack.cost <= hi {
        out.slack.cost = hi + 1.0;
    }
    out.validate()?;
    Ok(out)
}

/// Sets the limit of each listed branch to the apparent power of its flow
/// `(f_p, f_q)` in `flows`. Other limits are left alone.
pub fn set_flow_limits_from_solution(
    case: &NetworkCase,
    flows: &BTreeMap<BranchId, (f64, f64)>,
    branches: &[BranchId],
) -> Result<NetworkCase, CaseError> {
    let mut out = case.clone();
    for &id in branches {
        let Some(&(fp, fq)) = flows.get(&id) else {
            return Err(CaseError::Argument(format!("no flow recorded for branch {id}")));
        };
        let Some(br) = out.branches.iter_mut().find(|b| b.id == id) else {
            return Err(CaseError::Argument(format!("unknown branch {id}")));
        };
        let limit = fp.hypot(fq);
        if !(limit > 0.0 && limit.is_finite()) {
            return Err(CaseError::Argument(format!(
                "branch {id} carries no flow at the setpoint; cannot derive a positive limit"
            )));
        }
        br.f_max = Some(limit);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcase::{random_case, RandomCaseSpec};

    fn spec(count: usize, seed: u64) -> DgSpec {
        DgSpec {
            count,
            p_max: 0.0654,
            q_mag: 0.027,
            cost_range: (0.0, 1.0),
            seed,
        }
    }

    fn base() -> NetworkCase {
        random_case(&RandomCaseSpec {
            buses: 40,
            generators: 0,
            seed: 3,
        })
    }

    #[test]
    fn zero_count_is_identity() {
        let case = base();
        assert_eq!(augment_distributed_generation(&case, &spec(0, 1), &[]).unwrap(), case);
    }

    #[test]
    fn same_seed_same_case() {
        let case = base();
        let a = augment_distributed_generation(&case, &spec(10, 9), &[]).unwrap();
        let b = augment_distributed_generation(&case, &spec(10, 9), &[]).unwrap();
        let c = augment_distributed_generation(&case, &spec(10, 10), &[]).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn converted_buses_follow_the_spec() {
        let case = base();
        let out = augment_distributed_generation(&case, &spec(12, 5), &[7]).unwrap();
        assert_eq!(out.generators.len(), 12);
        for g in &out.generators {
            assert_eq!((g.p_min, g.p_max, g.q_min, g.q_max), (0.0, 0.0654, -0.027, 0.027));
            assert!((0.0..1.0).contains(&g.cost));
            assert!(out.slack.cost > g.cost);
            assert_ne!(g.bus, 7);
            assert_eq!(out.bus(g.bus).unwrap().p_demand, 0.0);
        }
    }

    #[test]
    fn too_many_generators_is_an_argument_error() {
        let case = base();
        let err = augment_distributed_generation(&case, &spec(40, 1), &[1]).unwrap_err();
        assert!(matches!(err, CaseError::Argument(_)));
    }

    #[test]
    fn limits_from_flows() {
        let case = base();
        let flows = BTreeMap::from([(case.branches[0].id, (3.0, 4.0))]);
        let out = set_flow_limits_from_solution(&case, &flows, &[case.branches[0].id]).unwrap();
        assert_eq!(out.branches[0].f_max, Some(5.0));
        assert_eq!(set_flow_limits_from_solution(&case, &flows, &[]).unwrap(), case);
        assert!(set_flow_limits_from_solution(&case, &flows, &[999]).is_err());
    }
}
