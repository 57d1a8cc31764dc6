use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Entry of a neighbor list: a controllable node or a boundary pseudo-node
/// whose state lives in [`NetworkState::boundary`](super::NetworkState).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Neighbor {
    Node(usize),
    Boundary(usize),
}

/// How nodes are grouped for certificate/controller sharing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sharing {
    /// Every node shares one group.
    Single,
    /// Platoon ends `{first, last}` share one group, the middle trucks another.
    EndsMiddle,
    /// Platoon first, middle and last trucks each get a group.
    PerRole,
    /// One group per node.
    PerNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkTopology {
    pub n: usize,
    pub neighbors: Vec<Vec<Neighbor>>,
    pub share_group: Vec<usize>,
    pub state_dims: Vec<usize>,
    pub control_dims: Vec<usize>,
}

impl NetworkTopology {
    pub fn n_groups(&self) -> usize {
        self.share_group.iter().map(|g| g + 1).max().unwrap_or(0)
    }

    /// Controllable neighbors of node `i`.
    pub fn node_neighbors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.neighbors[i].iter().filter_map(|nb| match nb {
            Neighbor::Node(j) => Some(*j),
            Neighbor::Boundary(_) => None,
        })
    }

    pub fn members(&self, group: usize) -> Vec<usize> {
        (0..self.n).filter(|&i| self.share_group[i] == group).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n;
        if self.neighbors.len() != n || self.share_group.len() != n || self.state_dims.len() != n || self.control_dims.len() != n {
            return Err(Error::Config("topology arrays must all have length n".into()));
        }
        for (i, nbs) in self.neighbors.iter().enumerate() {
            for nb in nbs {
                if let Neighbor::Node(j) = nb {
                    if *j >= n {
                        return Err(Error::Config(format!("node {i} lists neighbor {j} outside 0..{n}")));
                    }
                    if *j == i {
                        return Err(Error::Config(format!("node {i} lists itself as a neighbor")));
                    }
                }
            }
        }
        for g in 0..self.n_groups() {
            let members = self.members(g);
            let Some(&first) = members.first() else {
                return Err(Error::Config(format!("share group {g} has no members")));
            };
            for &i in &members {
                if self.state_dims[i] != self.state_dims[first] || self.control_dims[i] != self.control_dims[first] {
                    return Err(Error::Config(format!("share group {g} mixes subsystem dimensions")));
                }
            }
        }
        Ok(())
    }

    /// Chain of `n` trucks: neighbors `[front, behind]`, with the leading and
    /// trailing boundary vehicles as pseudo-nodes 0 and 1.
    pub fn platoon(n: usize, sharing: Sharing) -> Self {
        let neighbors = (0..n)
            .map(|i| {
                let front = if i == 0 { Neighbor::Boundary(0) } else { Neighbor::Node(i - 1) };
                let behind = if i + 1 == n { Neighbor::Boundary(1) } else { Neighbor::Node(i + 1) };
                vec![front, behind]
            })
            .collect();
        let roles: Vec<usize> = (0..n)
            .map(|i| match sharing {
                Sharing::Single => 0,
                Sharing::PerNode => i,
                Sharing::EndsMiddle => usize::from(i != 0 && i + 1 != n),
                Sharing::PerRole => {
                    if i == 0 {
                        0
                    } else if i + 1 == n {
                        2
                    } else {
                        1
                    }
                }
            })
            .collect();
        Self {
            n,
            neighbors,
            share_group: compact(&roles),
            state_dims: vec![3; n],
            control_dims: vec![1; n],
        }
    }

    /// `rows × cols` drone formation, node `(r, c)` at index `r·cols + c`.
    /// Neighbors are `[left, right, up, down]`; missing ones are the
    /// reference pseudo-node 0.
    pub fn drone_grid(rows: usize, cols: usize, sharing: Sharing) -> Self {
        let n = rows * cols;
        let at = |r: usize, c: usize| Neighbor::Node(r * cols + c);
        let neighbors = (0..n)
            .map(|i| {
                let (r, c) = (i / cols, i % cols);
                vec![
                    if c > 0 { at(r, c - 1) } else { Neighbor::Boundary(0) },
                    if c + 1 < cols { at(r, c + 1) } else { Neighbor::Boundary(0) },
                    if r + 1 < rows { at(r + 1, c) } else { Neighbor::Boundary(0) },
                    if r > 0 { at(r - 1, c) } else { Neighbor::Boundary(0) },
                ]
            })
            .collect();
        Self {
            n,
            neighbors,
            share_group: sharing_groups(n, sharing),
            state_dims: vec![8; n],
            control_dims: vec![2; n],
        }
    }

    /// Microgrid nodes coupled along the given power lines.
    pub fn microgrid(n: usize, lines: &[(usize, usize)], sharing: Sharing) -> Self {
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in lines {
            if a < n && b < n {
                if !neighbors[a].contains(&Neighbor::Node(b)) {
                    neighbors[a].push(Neighbor::Node(b));
                }
                if !neighbors[b].contains(&Neighbor::Node(a)) {
                    neighbors[b].push(Neighbor::Node(a));
                }
            }
        }
        for nb in &mut neighbors {
            nb.sort_by_key(|x| match x {
                Neighbor::Node(j) => *j,
                Neighbor::Boundary(k) => usize::MAX - k,
            });
        }
        Self {
            n,
            neighbors,
            share_group: sharing_groups(n, sharing),
            state_dims: vec![2; n],
            control_dims: vec![2; n],
        }
    }
}

fn sharing_groups(n: usize, sharing: Sharing) -> Vec<usize> {
    match sharing {
        Sharing::PerNode => (0..n).collect(),
        _ => vec![0; n],
    }
}

/// Renumbers group ids to `0..k` in order of first appearance.
fn compact(ids: &[usize]) -> Vec<usize> {
    let mut seen: Vec<usize> = Vec::new();
    ids.iter()
        .map(|id| match seen.iter().position(|s| s == id) {
            Some(p) => p,
            None => {
                seen.push(*id);
                seen.len() - 1
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn platoon_chain() {
        let t = NetworkTopology::platoon(5, Sharing::EndsMiddle);
        assert!(t.validate().is_ok());
        assert_eq!(t.neighbors[0], vec![Neighbor::Boundary(0), Neighbor::Node(1)]);
        assert_eq!(t.neighbors[4], vec![Neighbor::Node(3), Neighbor::Boundary(1)]);
        assert_eq!(t.share_group, vec![0, 1, 1, 1, 0]);
        assert_eq!(t.n_groups(), 2);
        let r = NetworkTopology::platoon(5, Sharing::PerRole);
        assert_eq!(r.share_group, vec![0, 1, 1, 1, 2]);
    }

    #[test]
    fn small_platoons_compact_groups() {
        let t = NetworkTopology::platoon(2, Sharing::PerRole);
        assert_eq!(t.share_group, vec![0, 1]);
        let t = NetworkTopology::platoon(1, Sharing::EndsMiddle);
        assert_eq!(t.share_group, vec![0]);
        assert!(t.validate().is_ok());
    }

    #[test]
    fn drone_grid_neighbors() {
        let t = NetworkTopology::drone_grid(2, 2, Sharing::Single);
        assert!(t.validate().is_ok());
        // node 0 = (0,0): right is 1, up is 2
        assert_eq!(
            t.neighbors[0],
            vec![Neighbor::Boundary(0), Neighbor::Node(1), Neighbor::Node(2), Neighbor::Boundary(0)]
        );
        assert_eq!(t.node_neighbors(3).collect::<Vec<_>>(), vec![2, 1]);
    }

    #[test]
    fn rejects_self_loops_and_mixed_groups() {
        let mut t = NetworkTopology::platoon(3, Sharing::Single);
        t.neighbors[1][0] = Neighbor::Node(1);
        assert!(t.validate().is_err());
        let mut t = NetworkTopology::platoon(3, Sharing::Single);
        t.state_dims[2] = 4;
        assert!(t.validate().is_err());
    }
}
