//! Discrete second-order model `M1 z'' + M2 z' + M3 z = B u`, `y = C z` of a
//! circular faceplate pushed by a rectangular grid of mass-spring-damper
//! actuators.
//!
//! The plate is a uniform square lattice masked to the disk. Bending
//! stiffness is the exact Hessian of the discrete Kirchhoff energy
//!
//! ```text
//! U = D/2 Σ [ w_xx² + w_yy² + 2ν w_xx w_yy + 2(1-ν) w_xy² ] dA
//! ```
//!
//! with centered second differences for `w_xx`, `w_yy` at nodes and the
//! four-corner difference for `w_xy` on cells. Terms whose stencil leaves the
//! plate are dropped, which leaves the free edge stress-free without special
//! boundary stencils.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::{CooMatrix, CsrMatrix};

/// Relative slack applied to every "inside radius" test on lattice points.
const RADIUS_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialParams<T> {
    /// Pa
    pub youngs_modulus: T,
    /// kg/m³
    pub density: T,
    pub poisson_ratio: T,
    /// m
    pub thickness: T,
    /// m
    pub plate_radius: T,
}

impl<T: Scalar> MaterialParams<T> {
    /// 3 mm Zerodur faceplate of radius 1 m.
    pub fn zerodur() -> Self {
        Self {
            youngs_modulus: T::lit(9.03e10),
            density: T::lit(2530.0),
            poisson_ratio: T::lit(0.24),
            thickness: T::lit(0.003),
            plate_radius: T::one(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("youngs_modulus", self.youngs_modulus),
            ("density", self.density),
            ("thickness", self.thickness),
            ("plate_radius", self.plate_radius),
        ];
        for (name, v) in positive {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::param(name, format!("must be positive, got {v}")));
            }
        }
        if !(self.poisson_ratio >= T::zero() && self.poisson_ratio < T::lit(0.5)) {
            return Err(Error::param("poisson_ratio", format!("must lie in [0, 0.5), got {}", self.poisson_ratio)));
        }
        Ok(())
    }

    /// `D = E t³ / (12 (1 - ν²))`, N·m.
    pub fn flexural_rigidity(&self) -> T {
        let t = self.thickness;
        self.youngs_modulus * t * t * t / (T::lit(12.0) * (T::one() - self.poisson_ratio * self.poisson_ratio))
    }

    /// `ρ t`, kg/m².
    pub fn areal_mass(&self) -> T {
        self.density * self.thickness
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuatorParams<T> {
    /// N/m
    pub stiffness: T,
    /// N·s/m
    pub damping: T,
    /// kg
    pub mass: T,
    /// lattice spacing, m
    pub pitch: T,
    /// actuators are placed at lattice points within this radius, m
    pub inclusion_radius: T,
}

impl<T: Scalar> ActuatorParams<T> {
    /// 1e4 N/m, 500 N·s/m, 0.3 kg actuators inside a 0.9 m radius.
    pub fn with_pitch(pitch: T) -> Self {
        Self {
            stiffness: T::lit(1e4),
            damping: T::lit(500.0),
            mass: T::lit(0.3),
            pitch,
            inclusion_radius: T::lit(0.9),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stiffness > T::zero()) {
            return Err(Error::param("stiffness", "must be positive"));
        }
        if !(self.mass > T::zero()) {
            return Err(Error::param("mass", "must be positive"));
        }
        if !(self.damping >= T::zero()) {
            return Err(Error::param("damping", "must be non-negative"));
        }
        if !(self.pitch > T::zero()) || !self.pitch.is_finite() {
            return Err(Error::param("pitch", "must be positive"));
        }
        if !(self.inclusion_radius > T::zero()) {
            return Err(Error::param("inclusion_radius", "must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    #[default]
    Free,
    /// Boundary-layer nodes are pinned and the exterior held at zero. Used for
    /// verification against the classical clamped-plate solution.
    Clamped,
}

#[derive(Debug, Clone)]
pub struct PlateGrid<T> {
    pub node_pitch: T,
    pub plate_radius: T,
    pub boundary_mode: BoundaryMode,
    /// Integer lattice coordinates, row-major in (y, x).
    lattice: Vec<(i32, i32)>,
    index: HashMap<(i32, i32), usize>,
    pinned: Vec<bool>,
}

impl<T: Scalar> PlateGrid<T> {
    pub fn len(&self) -> usize {
        self.lattice.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lattice.is_empty()
    }

    pub fn lattice(&self) -> &[(i32, i32)] {
        &self.lattice
    }

    pub fn node_at(&self, i: i32, j: i32) -> Option<usize> {
        self.index.get(&(i, j)).copied()
    }

    pub fn coords(&self, node: usize) -> (T, T) {
        let (i, j) = self.lattice[node];
        (T::lit(i as f64) * self.node_pitch, T::lit(j as f64) * self.node_pitch)
    }

    pub fn radius_of(&self, node: usize) -> T {
        let (x, y) = self.coords(node);
        x.hypot(y)
    }

    /// Node nearest to `(x, y)`, if that lattice point is on the plate.
    pub fn nearest_node(&self, x: T, y: T) -> Option<usize> {
        let i = (x / self.node_pitch).round().to_i32()?;
        let j = (y / self.node_pitch).round().to_i32()?;
        self.node_at(i, j)
    }

    pub fn is_pinned(&self, node: usize) -> bool {
        self.pinned[node]
    }

    pub fn pinned_count(&self) -> usize {
        self.pinned.iter().filter(|p| **p).count()
    }

    /// Nodal forces of a uniform pressure `p` (N/m²); pinned nodes carry none.
    pub fn uniform_pressure_load(&self, pressure: T) -> Vec<T> {
        let f = pressure * self.node_pitch * self.node_pitch;
        self.pinned.iter().map(|&p| if p { T::zero() } else { f }).collect()
    }

    /// Rebuilds a grid from exported lattice coordinates.
    pub(crate) fn from_lattice(node_pitch: T, plate_radius: T, boundary_mode: BoundaryMode, lattice: Vec<(i32, i32)>) -> Self {
        let index = lattice.iter().enumerate().map(|(k, &ij)| (ij, k)).collect();
        let mut grid = Self {
            node_pitch,
            plate_radius,
            boundary_mode,
            lattice,
            index,
            pinned: Vec::new(),
        };
        grid.pinned = grid.compute_pinned();
        grid
    }

    fn compute_pinned(&self) -> Vec<bool> {
        match self.boundary_mode {
            BoundaryMode::Free => vec![false; self.len()],
            BoundaryMode::Clamped => self
                .lattice
                .iter()
                .map(|&(i, j)| [(i + 1, j), (i - 1, j), (i, j + 1), (i, j - 1)].iter().any(|k| !self.index.contains_key(k)))
                .collect(),
        }
    }
}

fn inside<T: Scalar>(x: T, y: T, radius: T) -> bool {
    x * x + y * y <= radius * radius * (T::one() + T::lit(RADIUS_SLACK))
}

pub fn build_grid<T: Scalar>(mat: &MaterialParams<T>, node_pitch: T, boundary_mode: BoundaryMode) -> Result<PlateGrid<T>> {
    mat.validate()?;
    if !(node_pitch > T::zero()) || !node_pitch.is_finite() {
        return Err(Error::param("node_pitch", "must be positive"));
    }
    let radius = mat.plate_radius;
    if node_pitch > radius / T::lit(2.0) {
        return Err(Error::PitchTooCoarse {
            pitch: node_pitch.as_f64(),
            radius: radius.as_f64(),
        });
    }
    let half = (radius / node_pitch + T::lit(RADIUS_SLACK)).floor().to_i32().unwrap_or(0);
    let mut lattice = Vec::new();
    for j in -half..=half {
        for i in -half..=half {
            let (x, y) = (T::lit(i as f64) * node_pitch, T::lit(j as f64) * node_pitch);
            if inside(x, y, radius) {
                lattice.push((i, j));
            }
        }
    }
    Ok(PlateGrid::from_lattice(node_pitch, radius, boundary_mode, lattice))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActuatorLayout<T> {
    pub positions: Vec<(T, T)>,
    /// Plate node carrying each actuator; empty until bound to a grid.
    pub node_index: Vec<usize>,
}

impl<T: Scalar> ActuatorLayout<T> {
    pub fn from_positions(positions: Vec<(T, T)>) -> Self {
        Self {
            positions,
            node_index: Vec::new(),
        }
    }

    pub fn count(&self) -> usize {
        self.positions.len()
    }

    /// Maps each actuator to its nearest node; distinct actuators must land
    /// on distinct nodes.
    pub fn bind(&self, grid: &PlateGrid<T>) -> Result<Self> {
        let mut seen: HashMap<usize, usize> = HashMap::new();
        let mut node_index = Vec::with_capacity(self.count());
        for (a, &(x, y)) in self.positions.iter().enumerate() {
            let node = grid.nearest_node(x, y).ok_or(Error::ActuatorOffPlate {
                index: a,
                x: x.as_f64(),
                y: y.as_f64(),
            })?;
            if let Some(&first) = seen.get(&node) {
                return Err(Error::DuplicateActuatorNode { first, second: a, node });
            }
            seen.insert(node, a);
            node_index.push(node);
        }
        Ok(Self {
            positions: self.positions.clone(),
            node_index,
        })
    }
}

/// All lattice points `(i·pitch, j·pitch)` within the inclusion radius,
/// ordered by row (y) then column (x).
pub fn build_layout<T: Scalar>(act: &ActuatorParams<T>) -> Result<ActuatorLayout<T>> {
    act.validate()?;
    let half = (act.inclusion_radius / act.pitch + T::lit(RADIUS_SLACK)).floor().to_i32().unwrap_or(0);
    let mut positions = Vec::new();
    for j in -half..=half {
        for i in -half..=half {
            let (x, y) = (T::lit(i as f64) * act.pitch, T::lit(j as f64) * act.pitch);
            if inside(x, y, act.inclusion_radius) {
                positions.push((x, y));
            }
        }
    }
    if positions.is_empty() {
        return Err(Error::NoActuators);
    }
    Ok(ActuatorLayout::from_positions(positions))
}

#[derive(Clone, Copy)]
enum Slot {
    Free(usize),
    Zero,
}

/// Accumulates `coef · c cᵀ` for a stencil `c`, skipping zero-valued slots.
fn add_term<T: Scalar>(coo: &mut CooMatrix<T>, coef: T, stencil: &[(Slot, f64)]) {
    for &(si, ci) in stencil {
        let Slot::Free(a) = si else { continue };
        for &(sj, cj) in stencil {
            let Slot::Free(b) = sj else { continue };
            coo.push(a, b, coef * T::lit(ci * cj));
        }
    }
}

/// Stiffness matrix of the discrete bending energy (see module docs).
pub fn assemble_bending_stiffness<T: Scalar>(grid: &PlateGrid<T>, mat: &MaterialParams<T>) -> CsrMatrix<T> {
    let n = grid.len();
    let nu = mat.poisson_ratio.as_f64();
    let d = grid.node_pitch;
    // D dA / d⁴
    let scale = mat.flexural_rigidity() / (d * d);
    let clamped = grid.boundary_mode == BoundaryMode::Clamped;
    let slot = |i: i32, j: i32| -> Option<Slot> {
        match grid.node_at(i, j) {
            Some(k) if clamped && grid.is_pinned(k) => Some(Slot::Zero),
            Some(k) => Some(Slot::Free(k)),
            None if clamped => Some(Slot::Zero),
            None => None,
        }
    };

    let mut coo = CooMatrix::with_capacity(n, n, n * 40);
    for &(i, j) in grid.lattice() {
        let centre = slot(i, j);
        let xx = match (slot(i - 1, j), centre, slot(i + 1, j)) {
            (Some(a), Some(b), Some(c)) => Some([(a, 1.0), (b, -2.0), (c, 1.0)]),
            _ => None,
        };
        let yy = match (slot(i, j - 1), centre, slot(i, j + 1)) {
            (Some(a), Some(b), Some(c)) => Some([(a, 1.0), (b, -2.0), (c, 1.0)]),
            _ => None,
        };
        match (xx, yy) {
            (Some(xx), Some(yy)) => {
                // w_xx² + w_yy² + 2ν w_xx w_yy = (1-ν)(w_xx² + w_yy²) + ν (w_xx + w_yy)²
                add_term(&mut coo, scale * T::lit(1.0 - nu), &xx);
                add_term(&mut coo, scale * T::lit(1.0 - nu), &yy);
                let sum: Vec<_> = xx.iter().chain(yy.iter()).copied().collect();
                add_term(&mut coo, scale * T::lit(nu), &sum);
            }
            (Some(xx), None) => add_term(&mut coo, scale, &xx),
            (None, Some(yy)) => add_term(&mut coo, scale, &yy),
            (None, None) => {}
        }
    }

    // cells by lower-left corner
    let mut cells = BTreeSet::new();
    for &(i, j) in grid.lattice() {
        for (di, dj) in [(0, 0), (-1, 0), (0, -1), (-1, -1)] {
            cells.insert((j + dj, i + di));
        }
    }
    for (j, i) in cells {
        let corners = [slot(i, j), slot(i + 1, j), slot(i, j + 1), slot(i + 1, j + 1)];
        if let [Some(a), Some(b), Some(c), Some(e)] = corners {
            add_term(&mut coo, scale * T::lit(2.0 * (1.0 - nu)), &[(a, 1.0), (b, -1.0), (c, -1.0), (e, 1.0)]);
        }
    }

    let k = coo.to_csr();
    if !clamped {
        return k;
    }
    // pinned rows/cols are structurally empty; give them a unit-scale diagonal
    let diag = k.diagonal();
    let free: Vec<T> = (0..n).filter(|&a| !grid.is_pinned(a)).map(|a| diag[a]).collect();
    let mean = if free.is_empty() {
        scale
    } else {
        free.iter().copied().sum::<T>() / T::from_usize_lossy(free.len())
    };
    let pin: Vec<T> = (0..n).map(|a| if grid.is_pinned(a) { mean } else { T::zero() }).collect();
    k.with_added_diagonal(&pin)
}

/// Optional proportional plate damping `α M1 + β K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayleighDamping<T> {
    pub alpha: T,
    pub beta: T,
}

impl<T: Scalar> Default for RayleighDamping<T> {
    fn default() -> Self {
        Self {
            alpha: T::zero(),
            beta: T::zero(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SecondOrderModel<T> {
    /// mass
    pub m1: CsrMatrix<T>,
    /// damping
    pub m2: CsrMatrix<T>,
    /// stiffness
    pub m3: CsrMatrix<T>,
    /// n x m force input
    pub b: CsrMatrix<T>,
    /// r x n out-of-plane observation
    pub c: CsrMatrix<T>,
    pub grid: PlateGrid<T>,
    pub layout: ActuatorLayout<T>,
    pub material: MaterialParams<T>,
    pub actuator: ActuatorParams<T>,
    pub rayleigh: RayleighDamping<T>,
    pub obs_radius: T,
    /// Plate node observed by each row of `C`.
    pub observed: Vec<usize>,
}

impl<T: Scalar> SecondOrderModel<T> {
    pub fn n(&self) -> usize {
        self.m3.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn r(&self) -> usize {
        self.c.nrows()
    }

    pub fn observation_points(&self) -> Vec<(T, T)> {
        self.observed.iter().map(|&k| self.grid.coords(k)).collect()
    }
}

pub fn assemble_model<T: Scalar>(
    grid: &PlateGrid<T>,
    mat: &MaterialParams<T>,
    act: &ActuatorParams<T>,
    layout: &ActuatorLayout<T>,
    obs_radius: T,
    rayleigh: RayleighDamping<T>,
) -> Result<SecondOrderModel<T>> {
    mat.validate()?;
    act.validate()?;
    if !(obs_radius > T::zero()) {
        return Err(Error::param("obs_radius", "must be positive"));
    }
    if obs_radius >= mat.plate_radius {
        log::warn!("observation radius {obs_radius} covers the whole plate (radius {})", mat.plate_radius);
    }
    let layout = layout.bind(grid)?;
    let n = grid.len();
    let m = layout.count();
    let k_plate = assemble_bending_stiffness(grid, mat);

    let node_mass = mat.areal_mass() * grid.node_pitch * grid.node_pitch;
    let mut mass = vec![node_mass; n];
    let mut damping = vec![T::zero(); n];
    let mut spring = vec![T::zero(); n];
    let mut b = CooMatrix::with_capacity(n, m, m);
    for (a, &node) in layout.node_index.iter().enumerate() {
        mass[node] += act.mass;
        damping[node] += act.damping;
        spring[node] += act.stiffness;
        b.push(node, a, T::one());
    }
    let m1 = CsrMatrix::from_diagonal(&mass);
    let mut m2 = CsrMatrix::from_diagonal(&damping);
    if rayleigh.alpha != T::zero() || rayleigh.beta != T::zero() {
        let prop = m1.linear_combination(rayleigh.alpha, &k_plate, rayleigh.beta);
        m2 = m2.linear_combination(T::one(), &prop, T::one());
    }
    let m3 = k_plate.with_added_diagonal(&spring);

    let observed: Vec<usize> = (0..n)
        .filter(|&k| {
            let (x, y) = grid.coords(k);
            inside(x, y, obs_radius)
        })
        .collect();
    let mut c = CooMatrix::with_capacity(observed.len(), n, observed.len());
    for (row, &k) in observed.iter().enumerate() {
        c.push(row, k, T::one());
    }

    Ok(SecondOrderModel {
        m1,
        m2,
        m3,
        b: b.to_csr(),
        c: c.to_csr(),
        grid: grid.clone(),
        layout,
        material: *mat,
        actuator: *act,
        rayleigh,
        obs_radius,
        observed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn act(pitch: f64, radius: f64) -> ActuatorParams<f64> {
        ActuatorParams {
            inclusion_radius: radius,
            ..ActuatorParams::with_pitch(pitch)
        }
    }

    #[test]
    fn layout_counts() {
        assert_eq!(build_layout(&act(0.2, 0.9)).unwrap().count(), 69);
        assert_eq!(build_layout(&act(0.1, 0.9)).unwrap().count(), 253);
        let single = build_layout(&act(2.5, 0.9)).unwrap();
        assert_eq!(single.positions, vec![(0.0, 0.0)]);
    }

    #[test]
    fn layout_rejects_bad_parameters() {
        let mut s = act(0.2, 0.9);
        s.mass = 0.0;
        assert!(build_layout(&s).is_err());
        let mut s = act(0.2, 0.9);
        s.pitch = -1.0;
        assert!(build_layout(&s).is_err());
    }

    #[test]
    fn grid_counts_and_coarse_rejection() {
        let mat = MaterialParams::<f64>::zerodur();
        assert_eq!(build_grid(&mat, 0.5, BoundaryMode::Free).unwrap().len(), 13);
        assert!(matches!(build_grid(&mat, 2.0, BoundaryMode::Free), Err(Error::PitchTooCoarse { .. })));
        let g = build_grid(&mat, 0.05, BoundaryMode::Free).unwrap();
        for k in 0..g.len() {
            assert!(g.radius_of(k) <= 1.0 + 1e-12);
            assert_eq!(g.nearest_node(g.coords(k).0, g.coords(k).1), Some(k));
        }
    }

    #[test]
    fn zerodur_constants() {
        let mat = MaterialParams::<f64>::zerodur();
        assert!((mat.flexural_rigidity() - 215.6).abs() < 0.05);
        assert!((mat.areal_mass() - 7.59).abs() < 1e-12);
        let mut bad = mat;
        bad.poisson_ratio = 0.5;
        assert!(bad.validate().is_err());
    }

    #[test]
    fn stencil_row_counts_bounded() {
        let mat = MaterialParams::<f64>::zerodur();
        let g = build_grid(&mat, 0.1, BoundaryMode::Free).unwrap();
        let k = assemble_bending_stiffness(&g, &mat);
        assert!(k.row_counts().into_iter().all(|c| c <= 13));
        let centre = g.node_at(0, 0).unwrap();
        assert_eq!(k.row_counts()[centre], 13);
        assert!(k.is_symmetric(1e-14));
    }

    #[test]
    fn duplicate_actuator_nodes_rejected() {
        let mat = MaterialParams::<f64>::zerodur();
        let g = build_grid(&mat, 0.25, BoundaryMode::Free).unwrap();
        let act = act(0.25, 0.9);
        let layout = ActuatorLayout::from_positions(vec![(0.0, 0.0), (0.01, 0.0)]);
        let err = assemble_model(&g, &mat, &act, &layout, 0.6, RayleighDamping::default()).unwrap_err();
        assert!(matches!(err, Error::DuplicateActuatorNode { .. }));
        let off = ActuatorLayout::from_positions(vec![(3.0, 0.0)]);
        assert!(assemble_model(&g, &mat, &act, &off, 0.6, RayleighDamping::default()).is_err());
    }

    #[test]
    fn clamped_grid_pins_boundary_layer() {
        let mat = MaterialParams::<f64>::zerodur();
        let g = build_grid(&mat, 0.25, BoundaryMode::Clamped).unwrap();
        assert!(g.is_pinned(g.node_at(4, 0).unwrap()));
        assert!(!g.is_pinned(g.node_at(0, 0).unwrap()));
        let load = g.uniform_pressure_load(2.0);
        assert_eq!(load[g.node_at(4, 0).unwrap()], 0.0);
        assert_eq!(load[g.node_at(0, 0).unwrap()], 2.0 * 0.0625);
    }
}
