use rand::Rng;
use serde::{Deserialize, Serialize};

use super::certificate::IssCertificate;
use super::policy::DecentralizedPolicy;
use crate::environments::{EnvKind, EnvironmentModel, Neighbor};
use crate::error::{dim_check, Error, Result};

/// Certificate and controller shared by one group of nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupParams {
    pub certificate: IssCertificate,
    pub policy: DecentralizedPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateBundle {
    pub kind: EnvKind,
    pub node_group: Vec<usize>,
    pub groups: Vec<GroupParams>,
}

impl CertificateBundle {
    /// Fresh random parameters for every share group of `env`.
    pub fn init<R: Rng + ?Sized>(env: &EnvironmentModel, hidden: &[usize], alpha: f64, spectral: bool, rng: &mut R) -> Result<Self> {
        let topo = &env.topology;
        let mut groups = Vec::with_capacity(topo.n_groups());
        for g in 0..topo.n_groups() {
            let members = topo.members(g);
            let goal = env.goal_frame(members[0]);
            if members.iter().any(|&i| env.goal_frame(i) != goal) {
                return Err(Error::Config(format!("share group {g} has members with different goal sets")));
            }
            let certificate = IssCertificate::init(goal, hidden, alpha, spectral, rng)?;
            let policy = DecentralizedPolicy::init(env.state_dim(), env.actuation_bounds.clone(), hidden, spectral, rng)?;
            groups.push(GroupParams { certificate, policy });
        }
        Ok(Self {
            kind: env.kind,
            node_group: topo.share_group.clone(),
            groups,
        })
    }

    pub fn n(&self) -> usize {
        self.node_group.len()
    }

    pub fn certificate(&self, node: usize) -> &IssCertificate {
        &self.groups[self.node_group[node]].certificate
    }

    pub fn policy(&self, node: usize) -> &DecentralizedPolicy {
        &self.groups[self.node_group[node]].policy
    }

    pub fn v_node(&self, node: usize, x: &[f64]) -> Result<f64> {
        self.certificate(node).v_eval(x)
    }

    pub fn control(&self, node: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.policy(node).policy_eval(x)
    }

    /// All trainable parameters, group by group: `S`, `p`, `q`, `k`, then
    /// the policy net.
    pub fn parameters(&self) -> Vec<f64> {
        let mut b = self.clone();
        let mut out = Vec::new();
        for g in &mut b.groups {
            for blk in g.certificate.blocks_mut() {
                out.extend_from_slice(blk);
            }
            out.push(g.certificate.gain_k);
            for blk in g.policy.net.blocks_mut() {
                out.extend_from_slice(blk);
            }
        }
        out
    }

    /// Inverse of [`parameters`](Self::parameters).
    pub fn set_parameters(&mut self, flat: &[f64]) -> Result<()> {
        dim_check("bundle parameters", self.parameters().len(), flat.len())?;
        let mut k = 0;
        for g in &mut self.groups {
            for blk in g.certificate.blocks_mut() {
                blk.copy_from_slice(&flat[k..k + blk.len()]);
                k += blk.len();
            }
            g.certificate.gain_k = flat[k];
            k += 1;
            for blk in g.policy.net.blocks_mut() {
                blk.copy_from_slice(&flat[k..k + blk.len()]);
                k += blk.len();
            }
        }
        Ok(())
    }

    /// Checks that the bundle fits `env`: kind, node count, dimensions.
    pub fn check_env(&self, env: &EnvironmentModel) -> Result<()> {
        if self.kind != env.kind {
            return Err(Error::KindMismatch(format!(
                "bundle is for {}, environment is {}",
                self.kind.name(),
                env.kind.name()
            )));
        }
        dim_check("bundle node count", env.n(), self.n())?;
        for (i, &g) in self.node_group.iter().enumerate() {
            let grp = self
                .groups
                .get(g)
                .ok_or_else(|| Error::Config(format!("node {i} references missing group {g}")))?;
            dim_check("certificate dimension", env.topology.state_dims[i], grp.certificate.dim())?;
            dim_check("policy outputs", env.topology.control_dims[i], grp.policy.bounds.len())?;
        }
        Ok(())
    }
}

/// Neighborhood map of one target node: the source node it copies and the
/// source entry matched with each of its neighbors.
#[derive(Debug, Clone, PartialEq)]
pub struct TauMap {
    pub source_node: usize,
    pub neighbors: Vec<(Neighbor, Neighbor)>,
}

/// Lemma-2 port of a trained bundle to a larger network of the same kind.
///
/// Platoon targets get one group per role (first, middle, last) copied from
/// the corresponding source trucks; drone formations share the single
/// source group. Each node's neighborhood map is validated before the bundle
/// is built.
pub fn port_certificate(
    bundle: &CertificateBundle,
    source: &EnvironmentModel,
    target: &EnvironmentModel,
) -> Result<CertificateBundle> {
    if source.kind != target.kind || bundle.kind != source.kind {
        return Err(Error::KindMismatch(format!(
            "bundle {}, source {}, target {}",
            bundle.kind.name(),
            source.kind.name(),
            target.kind.name()
        )));
    }
    bundle.check_env(source)?;
    if source.physics != target.physics || source.actuation_bounds != target.actuation_bounds {
        return Err(Error::Port("target subsystems have different dynamics".into()));
    }
    if source.topology == target.topology {
        return Ok(bundle.clone());
    }
    match source.kind {
        EnvKind::Platoon => port_platoon(bundle, source, target),
        EnvKind::PlanarDrone => port_drone(bundle, source, target),
        EnvKind::Microgrid => Err(Error::Port("microgrid certificates cannot be ported".into())),
    }
}

fn port_platoon(bundle: &CertificateBundle, source: &EnvironmentModel, target: &EnvironmentModel) -> Result<CertificateBundle> {
    let ns = source.n();
    let nt = target.n();
    if ns < 3 {
        return Err(Error::Port(format!("source platoon needs at least 3 trucks, has {ns}")));
    }
    let middle = &bundle.node_group[1..ns - 1];
    if middle.iter().any(|&g| g != middle[0]) {
        return Err(Error::Port("middle trucks of the source must share one certificate".into()));
    }
    // a middle source truck whose neighbors are both middle trucks when possible
    let mid_src = ns / 2;
    let role_src = |j: usize| {
        if j == 0 {
            0
        } else if j + 1 == nt {
            ns - 1
        } else {
            mid_src
        }
    };
    let taus: Vec<TauMap> = (0..nt)
        .map(|j| {
            let s = role_src(j);
            let neighbors = target.topology.neighbors[j]
                .iter()
                .zip(&source.topology.neighbors[s])
                .map(|(a, b)| (*a, *b))
                .collect();
            TauMap { source_node: s, neighbors }
        })
        .collect();
    validate_taus(bundle, source, target, &taus, true)?;

    let roles = [0, mid_src, ns - 1];
    let groups: Vec<GroupParams> = roles.iter().map(|&s| bundle.groups[bundle.node_group[s]].clone()).collect();
    let node_group = (0..nt)
        .map(|j| {
            if j == 0 {
                0
            } else if j + 1 == nt {
                2
            } else {
                1
            }
        })
        .collect::<Vec<_>>();
    let (groups, node_group) = drop_unused(groups, node_group);
    Ok(CertificateBundle {
        kind: bundle.kind,
        node_group,
        groups,
    })
}

fn port_drone(bundle: &CertificateBundle, source: &EnvironmentModel, target: &EnvironmentModel) -> Result<CertificateBundle> {
    if bundle.groups.len() != 1 || bundle.node_group.iter().any(|&g| g != 0) {
        return Err(Error::Port("drone ports need a single shared source certificate".into()));
    }
    let (rs, cs) = source.grid.unwrap_or((1, source.n()));
    let (rt, ct) = target.grid.unwrap_or((1, target.n()));
    // edge drones copy a source drone on the same edges
    let pick = |k: usize, nt: usize, ns: usize| {
        if k == 0 {
            0
        } else if k + 1 == nt {
            ns - 1
        } else {
            0
        }
    };
    let taus: Vec<TauMap> = (0..target.n())
        .map(|j| {
            let s = pick(j / ct, rt, rs) * cs + pick(j % ct, ct, cs);
            TauMap {
                source_node: s,
                neighbors: target.topology.neighbors[j]
                    .iter()
                    .zip(&source.topology.neighbors[s])
                    .map(|(a, b)| (*a, *b))
                    .collect(),
            }
        })
        .collect();
    validate_taus(bundle, source, target, &taus, false)?;
    Ok(CertificateBundle {
        kind: bundle.kind,
        node_group: vec![0; target.n()],
        groups: bundle.groups.clone(),
    })
}

/// Checks every τ_j: one-to-one, neighbor lists matched slot by slot, and
/// the shared-neighbor premise `V_{τ_j(ℓ)} = V_{τ_j'(ℓ)}`. With
/// `strict_boundary`, boundary pseudo-nodes must map to the same boundary
/// slot; otherwise (single shared certificate) a source boundary slot may
/// stand in for a target node in the same direction.
fn validate_taus(
    bundle: &CertificateBundle,
    source: &EnvironmentModel,
    target: &EnvironmentModel,
    taus: &[TauMap],
    strict_boundary: bool,
) -> Result<()> {
    let nt = target.n();
    // image[j][ℓ] = source group of τ_j(ℓ) for target node neighbors ℓ
    let mut seen: Vec<Option<(usize, usize)>> = vec![None; nt];
    for (j, tau) in taus.iter().enumerate() {
        let nb_t = &target.topology.neighbors[j];
        let nb_s = &source.topology.neighbors[tau.source_node];
        if nb_t.len() != nb_s.len() || tau.neighbors.len() != nb_t.len() {
            return Err(Error::Port(format!("node {j}: neighborhood size differs from source node {}", tau.source_node)));
        }
        let mut images = vec![Neighbor::Node(tau.source_node)];
        for &(t_nb, s_nb) in &tau.neighbors {
            match (t_nb, s_nb) {
                (Neighbor::Boundary(a), Neighbor::Boundary(b)) if a == b => {}
                (Neighbor::Boundary(_), _) | (_, Neighbor::Boundary(_)) if strict_boundary => {
                    return Err(Error::Port(format!(
                        "node {j}: boundary role mismatch against source node {}",
                        tau.source_node
                    )));
                }
                (Neighbor::Node(_), Neighbor::Node(_)) | (Neighbor::Node(_), Neighbor::Boundary(_)) => {}
                _ => return Err(Error::Port(format!("node {j}: boundary neighbor mapped to a node"))),
            }
            if let (Neighbor::Node(l), Neighbor::Node(s)) = (t_nb, s_nb) {
                let g = bundle.node_group[s];
                match seen[l] {
                    Some((g0, j0)) if g0 != g && j0 != j => {
                        return Err(Error::Port(format!(
                            "shared neighbor {l} of nodes {j0} and {j} maps to different certificates"
                        )));
                    }
                    None => seen[l] = Some((g, j)),
                    _ => {}
                }
            }
            if let Neighbor::Node(s) = s_nb {
                if images.contains(&Neighbor::Node(s)) {
                    return Err(Error::Port(format!("node {j}: neighborhood map is not one-to-one")));
                }
            }
            images.push(s_nb);
        }
    }
    Ok(())
}

/// Removes groups no node refers to and renumbers the rest.
fn drop_unused(groups: Vec<GroupParams>, node_group: Vec<usize>) -> (Vec<GroupParams>, Vec<usize>) {
    let mut remap = vec![usize::MAX; groups.len()];
    let mut kept = Vec::new();
    let node_group = node_group
        .into_iter()
        .map(|g| {
            if remap[g] == usize::MAX {
                remap[g] = kept.len();
                kept.push(groups[g].clone());
            }
            remap[g]
        })
        .collect();
    (kept, node_group)
}
