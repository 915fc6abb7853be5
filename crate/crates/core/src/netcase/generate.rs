use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Branch, Bus, BusKind, Generator, NetworkCase, Slack};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomCaseSpec {
    /// Non-slack buses.
    pub buses: usize,
    pub generators: usize,
    pub seed: u64,
}

/// A random radial case with slack bus 0 and no flow limits.
///
/// The tree is a random recursive tree; bus and branch tables are shuffled
/// and about half the branches are stored pointing toward the slack, so
/// consumers cannot rely on file order or orientation. Impedances,
/// demands and limits are drawn so that the unconstrained problem is
/// feasible with a wide voltage margin.
pub fn random_case(spec: &RandomCaseSpec) -> NetworkCase {
    assert!(spec.generators <= spec.buses, "more generators than buses");
    let n = spec.buses;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let mut is_gen = vec![false; n + 1];
    let mut ids: Vec<usize> = (1..=n).collect();
    ids.shuffle(&mut rng);
    for &id in &ids[..spec.generators] {
        is_gen[id] = true;
    }

    let mut buses = vec![Bus {
        id: 0,
        kind: BusKind::Slack,
        v_min: 1.0,
        v_max: 1.0,
        p_demand: 0.0,
        q_demand: 0.0,
    }];
    let mut generators = Vec::new();
    for (id, &generator) in is_gen.iter().enumerate().skip(1) {
        if generator {
            buses.push(Bus {
                id,
                kind: BusKind::Generator,
                v_min: 0.81,
                v_max: 1.21,
                p_demand: 0.0,
                q_demand: 0.0,
            });
            let q = rng.random_range(0.01..0.05);
            generators.push(Generator {
                bus: id,
                p_min: 0.0,
                p_max: rng.random_range(0.02..0.1),
                q_min: -q,
                q_max: q,
                cost: rng.random_range(0.0..1.0),
            });
        } else {
            let p = rng.random_range(0.0..0.05);
            buses.push(Bus {
                id,
                kind: BusKind::Load,
                v_min: 0.81,
                v_max: 1.21,
                p_demand: p,
                q_demand: p * rng.random_range(0.0..0.6),
            });
        }
    }

    let mut branches = Vec::with_capacity(n);
    for id in 1..=n {
        let parent = rng.random_range(0..id);
        let (from_bus, to_bus) = if rng.random_bool(0.5) {
            (parent, id)
        } else {
            (id, parent)
        };
        branches.push(Branch {
            id,
            from_bus,
            to_bus,
            r: rng.random_range(0.002..0.02),
            x: rng.random_range(0.002..0.03),
            f_max: None,
        });
    }
    buses[1..].shuffle(&mut rng);
    branches.shuffle(&mut rng);
    generators.sort_by_key(|g| buses.iter().position(|b| b.id == g.bus));

    NetworkCase {
        base_mva: 100.0,
        slack: Slack {
            bus: 0,
            v0: 1.0,
            p_min: 0.0,
            p_max: 10.0,
            q_min: -10.0,
            q_max: 10.0,
            cost: 2.0,
        },
        buses,
        branches,
        generators,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netcase::validate_radial;

    #[test]
    fn random_cases_are_valid_trees() {
        for seed in 0..20 {
            let case = random_case(&RandomCaseSpec {
                buses: 25,
                generators: 6,
                seed,
            });
            case.validate().unwrap();
            let topo = validate_radial(&case).unwrap();
            assert_eq!(topo.n(), 25);
            assert_eq!(case.generators.len(), 6);
        }
    }
}
