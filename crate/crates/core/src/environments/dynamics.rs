//! Per-subsystem vector fields. All three models are control-affine:
//! `ẋ_i = h_i(x_i, x_{N_i}) + g_i(x_i) u_i`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Platoon truck: `x = [p_f, p_b, v]`, `u = [a]`.
pub fn platoon_derivative(x: &[f64], v_front: f64, v_behind: f64, u: &[f64]) -> [f64; 3] {
    [v_front - x[2], x[2] - v_behind, u[0]]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DroneParams {
    pub mass: f64,
    pub inertia: f64,
    pub arm: f64,
    pub gravity: f64,
}

impl Default for DroneParams {
    fn default() -> Self {
        Self {
            mass: 1.0,
            inertia: 0.01,
            arm: 0.25,
            gravity: 9.81,
        }
    }
}

impl DroneParams {
    pub fn hover_thrust(&self) -> f64 {
        0.5 * self.mass * self.gravity
    }
}

/// Velocities `(v_x, v_y)` of the left, right, up and down neighbours.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridNeighbors {
    pub left: (f64, f64),
    pub right: (f64, f64),
    pub up: (f64, f64),
    pub down: (f64, f64),
}

/// Planar drone in a formation: `x = [p_l, p_r, p_u, p_d, θ, v_x, v_y, ω]`,
/// `u = [u_1, u_2]` propeller forces.
pub fn drone_derivative(x: &[f64], nb: &GridNeighbors, u: &[f64], p: &DroneParams) -> [f64; 8] {
    let (theta, vx, vy, omega) = (x[4], x[5], x[6], x[7]);
    let thrust = u[0] + u[1];
    [
        vx - nb.left.0,
        nb.right.0 - vx,
        nb.up.1 - vy,
        vy - nb.down.1,
        omega,
        -thrust * theta.sin() / p.mass,
        thrust * theta.cos() / p.mass - p.gravity,
        p.arm * (u[0] - u[1]) / p.inertia,
    ]
}

/// Input matrix `g(x)` of the drone, row-major 8×2.
pub fn drone_control_matrix(x: &[f64], p: &DroneParams) -> [[f64; 2]; 8] {
    let (s, c) = x[4].sin_cos();
    let mut g = [[0.0; 2]; 8];
    g[5] = [-s / p.mass, -s / p.mass];
    g[6] = [c / p.mass, c / p.mass];
    g[7] = [p.arm / p.inertia, -p.arm / p.inertia];
    g
}

/// Power line between two microgrids, entering both nodes' equations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: usize,
    pub to: usize,
    pub admittance: f64,
    pub angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicrogridParams {
    pub inertia_angle: Vec<f64>,
    pub inertia_voltage: Vec<f64>,
    pub droop_angle: Vec<f64>,
    pub droop_voltage: Vec<f64>,
    pub delta_ref: Vec<f64>,
    pub e_ref: Vec<f64>,
    pub p_ref: Vec<f64>,
    pub q_ref: Vec<f64>,
    pub g_self: Vec<f64>,
    pub b_self: Vec<f64>,
    pub lines: Vec<Line>,
}

impl MicrogridParams {
    /// Synthetic `n`-node ring with chords `(i, i+2)` for every even `i`.
    /// Inertia and droop coefficients are 1, references sit at the origin and
    /// `P^ref`, `Q^ref` are chosen so the references are an equilibrium.
    pub fn synthetic_ring(n: usize) -> Self {
        let mut lines = Vec::new();
        for i in 0..n {
            let j = (i + 1) % n;
            if n > 1 && (n > 2 || i == 0) {
                lines.push(Line {
                    from: i,
                    to: j,
                    admittance: 0.3,
                    angle: 0.05,
                });
            }
        }
        if n > 3 {
            for i in (0..n).step_by(2) {
                let j = (i + 2) % n;
                if j != i && !lines.iter().any(|l| (l.from == i && l.to == j) || (l.from == j && l.to == i)) {
                    lines.push(Line {
                        from: i,
                        to: j,
                        admittance: 0.15,
                        angle: 0.05,
                    });
                }
            }
        }
        let mut p = Self {
            inertia_angle: vec![1.0; n],
            inertia_voltage: vec![1.0; n],
            droop_angle: vec![1.0; n],
            droop_voltage: vec![1.0; n],
            delta_ref: vec![0.0; n],
            e_ref: vec![0.0; n],
            p_ref: vec![0.0; n],
            q_ref: vec![0.0; n],
            g_self: vec![0.1; n],
            b_self: vec![0.1; n],
            lines,
        };
        p.balance_references();
        p
    }

    pub fn n(&self) -> usize {
        self.delta_ref.len()
    }

    /// Lines incident to node `i` as `(neighbor, admittance, angle)`.
    pub fn incident(&self, i: usize) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.lines.iter().filter_map(move |l| {
            if l.from == i {
                Some((l.to, l.admittance, l.angle))
            } else if l.to == i {
                Some((l.from, l.admittance, l.angle))
            } else {
                None
            }
        })
    }

    /// Sets `P^ref` and `Q^ref` so that the power-balance residuals vanish
    /// at `(δ^ref, E^ref)`.
    pub fn balance_references(&mut self) {
        for i in 0..self.n() {
            let (d, e) = (self.delta_ref[i], self.e_ref[i]);
            let mut sp = 0.0;
            let mut sq = 0.0;
            for (j, y, sigma) in self.incident(i) {
                let arg = self.delta_ref[j] - d - sigma;
                sp += e * self.e_ref[j] * y * arg.cos();
                sq += e * self.e_ref[j] * y * arg.sin();
            }
            self.p_ref[i] = self.g_self[i] * e * e + sp;
            self.q_ref[i] = -self.b_self[i] * e * e + sq;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        for (name, v) in [
            ("inertia_angle", &self.inertia_angle),
            ("inertia_voltage", &self.inertia_voltage),
            ("droop_angle", &self.droop_angle),
            ("droop_voltage", &self.droop_voltage),
            ("e_ref", &self.e_ref),
            ("p_ref", &self.p_ref),
            ("q_ref", &self.q_ref),
            ("g_self", &self.g_self),
            ("b_self", &self.b_self),
        ] {
            if v.len() != n {
                return Err(Error::Config(format!("microgrid {name} has {} entries, expected {n}", v.len())));
            }
        }
        if self.inertia_angle.iter().chain(&self.inertia_voltage).any(|&m| m == 0.0) {
            return Err(Error::Config("microgrid inertia coefficients must be non-zero".into()));
        }
        for l in &self.lines {
            if l.from >= n || l.to >= n || l.from == l.to {
                return Err(Error::Config(format!("invalid microgrid line {} -> {}", l.from, l.to)));
            }
        }
        Ok(())
    }
}

/// Microgrid node `i`: `x = [δ, E]`, `u = [u_P, u_Q]`. `neighbor` returns the
/// state `[δ_j, E_j]` of node `j`.
pub fn microgrid_derivative<'a>(
    i: usize,
    x: &[f64],
    neighbor: impl Fn(usize) -> &'a [f64],
    u: &[f64],
    p: &MicrogridParams,
) -> [f64; 2] {
    let (delta, e) = (x[0], x[1]);
    let mut sp = 0.0;
    let mut sq = 0.0;
    for (j, y, sigma) in p.incident(i) {
        let xj = neighbor(j);
        let arg = xj[0] - delta - sigma;
        sp += e * xj[1] * y * arg.cos();
        sq += e * xj[1] * y * arg.sin();
    }
    let rhs_p = u[0] + p.droop_angle[i] * (p.p_ref[i] - p.g_self[i] * e * e - sp) - (delta - p.delta_ref[i]);
    let rhs_q = u[1] + p.droop_voltage[i] * (p.q_ref[i] + p.b_self[i] * e * e - sq) - (e - p.e_ref[i]);
    [rhs_p / p.inertia_angle[i], rhs_q / p.inertia_voltage[i]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn platoon_substitution() {
        assert_eq!(platoon_derivative(&[1.0, 1.0, 2.0], 2.0, 2.0, &[0.0]), [0.0, 0.0, 0.0]);
        assert_eq!(platoon_derivative(&[1.0, 1.0, 2.0], 3.0, 1.0, &[0.5]), [1.0, 1.0, 0.5]);
        assert_eq!(platoon_derivative(&[1.0, 1.0, 0.0], 0.0, 0.0, &[-1.0]), [0.0, 0.0, -1.0]);
    }

    fn still(v: (f64, f64)) -> GridNeighbors {
        GridNeighbors {
            left: v,
            right: v,
            up: v,
            down: v,
        }
    }

    #[test]
    fn drone_hover_is_equilibrium() {
        let p = DroneParams::default();
        let x = [1.0, 1.0, 0.5, 0.5, 0.0, 0.7, 0.0, 0.0];
        let hover = p.hover_thrust();
        let dx = drone_derivative(&x, &still((0.7, 0.0)), &[hover, hover], &p);
        for v in dx {
            assert!(v.abs() < 1e-12, "{dx:?}");
        }
    }

    #[test]
    fn drone_free_fall_and_spin() {
        let p = DroneParams::default();
        let x = [1.0; 8].map(|_| 0.0);
        let dx = drone_derivative(&x, &still((0.0, 0.0)), &[0.0, 0.0], &p);
        assert_eq!(dx[6], -p.gravity);
        assert_eq!(dx[7], 0.0);
        let du = p.inertia / p.arm;
        let dx = drone_derivative(&x, &still((0.0, 0.0)), &[1.0 + du, 1.0], &p);
        assert!((dx[7] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn drone_matches_control_affine_form() {
        let p = DroneParams::default();
        let x = [0.3, 1.2, 0.8, 0.1, 0.4, -1.0, 0.5, 0.2];
        let nb = GridNeighbors {
            left: (0.1, 0.2),
            right: (0.3, -0.1),
            up: (1.0, 0.0),
            down: (-0.4, 0.6),
        };
        let u = [2.0, 7.5];
        let f = drone_derivative(&x, &nb, &u, &p);
        let h = drone_derivative(&x, &nb, &[0.0, 0.0], &p);
        let g = drone_control_matrix(&x, &p);
        for r in 0..8 {
            let affine = h[r] + g[r][0] * u[0] + g[r][1] * u[1];
            assert!((f[r] - affine).abs() < 1e-12);
        }
    }

    #[test]
    fn microgrid_reference_is_equilibrium() {
        let mut p = MicrogridParams::synthetic_ring(5);
        // move the references off the origin so the coupling terms are active
        p.delta_ref = vec![0.1, -0.2, 0.05, 0.0, 0.3];
        p.e_ref = vec![1.0, 1.1, 0.9, 1.05, 0.95];
        p.balance_references();
        let states: Vec<[f64; 2]> = (0..5).map(|i| [p.delta_ref[i], p.e_ref[i]]).collect();
        for i in 0..5 {
            let dx = microgrid_derivative(i, &states[i], |j| &states[j][..], &[0.0, 0.0], &p);
            assert!(dx[0].abs() < 1e-12 && dx[1].abs() < 1e-12, "{dx:?}");
        }
    }

    #[test]
    fn microgrid_inertia_scaling_and_isolated_node() {
        let mut p = MicrogridParams::synthetic_ring(1);
        p.lines.clear();
        p.p_ref[0] = 0.0;
        p.g_self[0] = 0.0;
        let x = [p.delta_ref[0] + 1.0, p.e_ref[0]];
        let none = |_j: usize| -> &[f64] { unreachable!() };
        let d1 = microgrid_derivative(0, &x, none, &[0.0, 0.0], &p)[0];
        assert!((d1 + 1.0 / p.inertia_angle[0]).abs() < 1e-12);
        p.inertia_angle[0] *= 2.0;
        let d2 = microgrid_derivative(0, &x, none, &[0.0, 0.0], &p)[0];
        assert!((d2 - d1 / 2.0).abs() < 1e-12);
    }

    #[test]
    fn microgrid_rejects_zero_inertia() {
        let mut p = MicrogridParams::synthetic_ring(5);
        p.inertia_voltage[2] = 0.0;
        assert!(matches!(p.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn synthetic_ring_has_chords() {
        let p = MicrogridParams::synthetic_ring(5);
        assert!(p.validate().is_ok());
        // 5 ring edges plus chords (0,2), (2,4); (4,1) is also a chord
        assert!(p.lines.len() > 5);
    }
}
