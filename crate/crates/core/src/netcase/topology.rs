use std::collections::{HashMap, VecDeque};

use super::{BranchId, BusId, CaseError, NetworkCase};

/// A radial network as a tree rooted at the slack bus.
///
/// Non-slack buses are numbered `0..n` in the order they appear in the case
/// (the *internal index*). Each branch shares the internal index of its
/// downstream bus, so index `i` names both a bus and the branch feeding it.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialTopology {
    slack: BusId,
    bus_ids: Vec<BusId>,
    index: HashMap<BusId, usize>,
    branch_ids: Vec<BranchId>,
    branch_pos: Vec<usize>,
    branch_index: HashMap<BranchId, usize>,
    parent: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
    root_children: Vec<usize>,
    reversed: Vec<bool>,
    downstream: Vec<Vec<usize>>,
}

impl RadialTopology {
    /// Number of non-slack buses, which is also the number of branches.
    pub fn n(&self) -> usize {
        self.bus_ids.len()
    }

    pub fn slack(&self) -> BusId {
        self.slack
    }

    pub fn bus_id(&self, i: usize) -> BusId {
        self.bus_ids[i]
    }

    pub fn bus_ids(&self) -> &[BusId] {
        &self.bus_ids
    }

    /// Internal index of a non-slack bus.
    pub fn index_of(&self, bus: BusId) -> Option<usize> {
        self.index.get(&bus).copied()
    }

    /// Id of the branch feeding bus `i`.
    pub fn branch_id(&self, i: usize) -> BranchId {
        self.branch_ids[i]
    }

    /// Position of that branch in `NetworkCase::branches`.
    pub fn branch_position(&self, i: usize) -> usize {
        self.branch_pos[i]
    }

    /// Internal index of a branch given its id.
    pub fn branch_index(&self, id: BranchId) -> Option<usize> {
        self.branch_index.get(&id).copied()
    }

    /// Upstream neighbour of bus `i`; `None` when it hangs off the slack.
    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn root_children(&self) -> &[usize] {
        &self.root_children
    }

    /// Whether the branch feeding `i` is stored pointing toward the slack.
    pub fn reversed(&self, i: usize) -> bool {
        self.reversed[i]
    }

    /// Inclusive downstream set of bus `i`, sorted by internal index.
    pub fn downstream(&self, i: usize) -> &[usize] {
        &self.downstream[i]
    }

    pub fn is_downstream(&self, of: usize, bus: usize) -> bool {
        self.downstream[of].binary_search(&bus).is_ok()
    }

    /// Branches from bus `i` up to the slack, starting with `i` itself.
    pub fn path_to_slack(&self, i: usize) -> Vec<usize> {
        let mut path = vec![i];
        let mut at = i;
        while let Some(p) = self.parent[at] {
            path.push(p);
            at = p;
        }
        path
    }
}

/// Checks that the case is a tree rooted at the slack bus and orients every
/// branch away from it.
pub fn validate_radial(case: &NetworkCase) -> Result<RadialTopology, CaseError> {
    let slack = case.slack.bus;
    let mut node_of: HashMap<BusId, usize> = HashMap::new();
    for (k, bus) in case.buses.iter().enumerate() {
        if node_of.insert(bus.id, k).is_some() {
            return Err(CaseError::Validation(format!("duplicate bus id {}", bus.id)));
        }
    }
    let Some(&root) = node_of.get(&slack) else {
        return Err(CaseError::Validation(format!(
            "slack bus {slack} is not in the bus table"
        )));
    };

    let mut adjacency: Vec<Vec<(usize, usize)>> = vec![Vec::new(); case.buses.len()];
    for (pos, br) in case.branches.iter().enumerate() {
        let ends = (node_of.get(&br.from_bus), node_of.get(&br.to_bus));
        let (Some(&u), Some(&v)) = ends else {
            return Err(CaseError::Validation(format!(
                "branch {} references an unknown bus",
                br.id
            )));
        };
        if u == v {
            return Err(CaseError::NotRadial(format!(
                "branch {} connects bus {} to itself",
                br.id, br.from_bus
            )));
        }
        adjacency[u].push((v, pos));
        adjacency[v].push((u, pos));
    }

    // breadth-first from the slack; reaching a visited node closes a loop
    let mut parent_edge: Vec<Option<usize>> = vec![None; case.buses.len()];
    let mut parent_node: Vec<Option<usize>> = vec![None; case.buses.len()];
    let mut visited = vec![false; case.buses.len()];
    let mut order = Vec::with_capacity(case.buses.len());
    let mut queue = VecDeque::from([root]);
    visited[root] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &(v, pos) in &adjacency[u] {
            if Some(pos) == parent_edge[u] {
                continue;
            }
            if visited[v] {
                return Err(CaseError::NotRadial(format!(
                    "branch {} closes a loop through bus {}",
                    case.branches[pos].id, case.buses[v].id
                )));
            }
            visited[v] = true;
            parent_edge[v] = Some(pos);
            parent_node[v] = Some(u);
            queue.push_back(v);
        }
    }
    if let Some(k) = visited.iter().position(|seen| !seen) {
        return Err(CaseError::Disconnected(case.buses[k].id));
    }

    let bus_ids: Vec<BusId> = case.buses.iter().map(|b| b.id).filter(|&id| id != slack).collect();
    let index: HashMap<BusId, usize> = bus_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let n = bus_ids.len();
    let internal = |node: usize| index.get(&case.buses[node].id).copied();

    let mut branch_ids = vec![0; n];
    let mut branch_pos = vec![0; n];
    let mut parent = vec![None; n];
    let mut reversed = vec![false; n];
    let mut children = vec![Vec::new(); n];
    let mut root_children = Vec::new();
    for (i, id) in bus_ids.iter().enumerate() {
        let node = node_of[id];
        let pos = parent_edge[node].expect("every non-slack bus has an upstream branch");
        let up = parent_node[node].expect("every non-slack bus has an upstream bus");
        branch_ids[i] = case.branches[pos].id;
        branch_pos[i] = pos;
        reversed[i] = case.branches[pos].from_bus != case.buses[up].id;
        parent[i] = internal(up);
        match parent[i] {
            Some(p) => children[p].push(i),
            None => root_children.push(i),
        }
    }
    let branch_index = branch_ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();

    let mut downstream: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for &node in order.iter().rev() {
        let Some(i) = internal(node) else { continue };
        let mut set = std::mem::take(&mut downstream[i]);
        set.sort_unstable();
        if let Some(p) = parent[i] {
            downstream[p].extend_from_slice(&set);
        }
        downstream[i] = set;
    }

    Ok(RadialTopology {
        slack,
        bus_ids,
        index,
        branch_ids,
        branch_pos,
        branch_index,
        parent,
        children,
        root_children,
        reversed,
        downstream,
    })
}
