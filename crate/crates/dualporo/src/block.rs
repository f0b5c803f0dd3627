//! Matrix-block imbibition: a generalized porous-medium equation in the
//! Kirchhoff transform of the matrix saturation, driven through a Dirichlet
//! trace on the block boundary, one block per macro cell. The block never
//! carries a pressure unknown and no gravity term: summing the two phase
//! balances eliminates the block pressure, which is the structural reduction
//! the upscaled model relies on.

use crate::error::{Error, Result};
use crate::homogenize::CellGeometry;
use crate::numerics::sparse::{solve_bicgstab, CooBuilder};
use crate::petro::MediumCurves;

#[derive(Debug, Clone, Copy)]
pub struct BlockFace {
    pub cell: usize,
    /// neighbor cell; usize::MAX marks a boundary (interface) face
    pub neighbor: usize,
    pub trans: f64,
}

/// Discretization of one matrix block.
#[derive(Debug, Clone)]
pub struct BlockGrid {
    pub vol: Vec<f64>,
    pub phi: Vec<f64>,
    pub faces: Vec<BlockFace>,
    /// measure of the matrix part this block represents
    pub measure: f64,
}

impl BlockGrid {
    /// 1D block: an interval of the given width with Dirichlet traces on
    /// both ends (a slab block seen across its thickness).
    pub fn line(width: f64, cells: usize, phi_m: f64, k: f64) -> Result<Self> {
        if !(width > 0.0) || cells < 2 {
            return Err(Error::geometry(
                "block width must be positive and resolution at least 2".to_string(),
            ));
        }
        if !(phi_m > 0.0 && phi_m < 1.0) {
            return Err(Error::config(format!(
                "A.1: matrix porosity {phi_m} outside (0,1)"
            )));
        }
        let dx = width / cells as f64;
        let mut faces = Vec::new();
        for i in 0..cells - 1 {
            faces.push(BlockFace {
                cell: i,
                neighbor: i + 1,
                trans: k / dx,
            });
        }
        faces.push(BlockFace {
            cell: 0,
            neighbor: usize::MAX,
            trans: 2.0 * k / dx,
        });
        faces.push(BlockFace {
            cell: cells - 1,
            neighbor: usize::MAX,
            trans: 2.0 * k / dx,
        });
        Ok(BlockGrid {
            vol: vec![dx; cells],
            phi: vec![phi_m; cells],
            faces,
            measure: width,
        })
    }

    /// Block built from the matrix part of a cell geometry; the interface to
    /// the fracture (including across the periodic seam) carries the
    /// Dirichlet trace.
    pub fn from_cell_geometry(geom: &CellGeometry) -> Result<Self> {
        let n = geom.n;
        let h = 1.0 / n as f64;
        let cells = geom.num_cells();
        let mut index = vec![usize::MAX; cells];
        let mut count = 0usize;
        for c in 0..cells {
            if geom.matrix_mask[c] {
                index[c] = count;
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::geometry("matrix part is empty".to_string()));
        }
        let area = if geom.dim == 1 { 1.0 } else { h };
        let cell_vol = if geom.dim == 1 { h } else { h * h };
        let mut vol = vec![cell_vol; count];
        let mut phi = vec![0.0; count];
        let mut k_of = vec![0.0; count];
        for c in 0..cells {
            if geom.matrix_mask[c] {
                phi[index[c]] = geom.porosity_m[c];
                k_of[index[c]] = geom.perm[c].kxx;
            }
        }
        let mut faces = Vec::new();
        let neighbor_pairs = |c: usize| -> Vec<usize> {
            if geom.dim == 1 {
                vec![(c + 1) % n]
            } else {
                let (i, j) = (c % n, c / n);
                vec![j * n + (i + 1) % n, ((j + 1) % n) * n + i]
            }
        };
        for c in 0..cells {
            if !geom.matrix_mask[c] {
                continue;
            }
            for nb in neighbor_pairs(c) {
                if geom.matrix_mask[nb] {
                    let (ka, kb) = (k_of[index[c]], k_of[index[nb]]);
                    faces.push(BlockFace {
                        cell: index[c],
                        neighbor: index[nb],
                        trans: area * 2.0 * ka * kb / ((ka + kb) * h),
                    });
                }
            }
            // Dirichlet faces toward every fracture neighbor (all four sides)
            let all_neighbors = |c: usize| -> Vec<usize> {
                if geom.dim == 1 {
                    vec![(c + n - 1) % n, (c + 1) % n]
                } else {
                    let (i, j) = (c % n, c / n);
                    vec![
                        j * n + (i + n - 1) % n,
                        j * n + (i + 1) % n,
                        ((j + n - 1) % n) * n + i,
                        ((j + 1) % n) * n + i,
                    ]
                }
            };
            for nb in all_neighbors(c) {
                if !geom.matrix_mask[nb] {
                    faces.push(BlockFace {
                        cell: index[c],
                        neighbor: usize::MAX,
                        trans: area * k_of[index[c]] / (0.5 * h),
                    });
                }
            }
        }
        vol.shrink_to_fit();
        Ok(BlockGrid {
            vol,
            phi,
            faces,
            measure: geom.measure_m,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.vol.len()
    }

    /// Pore volume of the block (mass capacity at full saturation).
    pub fn pore_volume(&self) -> f64 {
        self.vol.iter().zip(&self.phi).map(|(v, p)| v * p).sum()
    }
}

/// Saturation field of one block at one time level.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockState {
    pub s: Vec<f64>,
    pub t: f64,
}

impl BlockState {
    pub fn uniform(grid: &BlockGrid, s: f64) -> Self {
        BlockState {
            s: vec![s; grid.num_cells()],
            t: 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        self.s.iter().sum::<f64>() / self.s.len() as f64
    }

    pub fn volume_weighted_mean(&self, grid: &BlockGrid) -> f64 {
        let num: f64 = self.s.iter().zip(&grid.vol).map(|(s, v)| s * v).sum();
        let den: f64 = grid.vol.iter().sum();
        num / den
    }
}

/// The steady state with a constant boundary trace.
pub fn equilibrium_state(grid: &BlockGrid, boundary_s: f64) -> Result<BlockState> {
    if !(0.0..=1.0).contains(&boundary_s) {
        return Err(Error::domain(format!(
            "boundary saturation {boundary_s} outside [0,1]"
        )));
    }
    Ok(BlockState::uniform(grid, boundary_s))
}

const NEWTON_MAX_ITERS: usize = 30;
const NEWTON_TOL: f64 = 1e-12;

/// One backward-Euler step of the block problem with the boundary trace
/// fixed over the step.
pub fn block_step(
    state: &BlockState,
    grid: &BlockGrid,
    curves: &MediumCurves,
    boundary_s: f64,
    dt: f64,
) -> Result<BlockState> {
    if !(0.0..=1.0).contains(&boundary_s) {
        return Err(Error::domain(format!(
            "boundary saturation {boundary_s} outside [0,1]"
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::domain("dt must be positive".to_string()));
    }
    let n = grid.num_cells();
    let beta_bnd = curves.beta(boundary_s)?;
    let scale = grid
        .vol
        .iter()
        .zip(&grid.phi)
        .map(|(v, p)| v * p / dt)
        .fold(0.0f64, f64::max);
    let tol = NEWTON_TOL * scale;

    let assemble =
        |s: &[f64], residual: &mut [f64], mut jac: Option<&mut CooBuilder>| -> Result<()> {
            for c in 0..n {
                residual[c] = grid.vol[c] * grid.phi[c] * (s[c] - state.s[c]) / dt;
                if let Some(j) = jac.as_deref_mut() {
                    j.add(c, c, grid.vol[c] * grid.phi[c] / dt);
                }
            }
            for face in &grid.faces {
                let (c, t) = (face.cell, face.trans);
                if face.neighbor == usize::MAX {
                    let q = t * (curves.beta(s[c])? - beta_bnd);
                    residual[c] += q;
                    if let Some(j) = jac.as_deref_mut() {
                        j.add(c, c, t * curves.beta_deriv(s[c]));
                    }
                } else {
                    let nb = face.neighbor;
                    let q = t * (curves.beta(s[c])? - curves.beta(s[nb])?);
                    residual[c] += q;
                    residual[nb] -= q;
                    if let Some(j) = jac.as_deref_mut() {
                        let (dc, dn) = (curves.beta_deriv(s[c]), curves.beta_deriv(s[nb]));
                        j.add(c, c, t * dc);
                        j.add(c, nb, -t * dn);
                        j.add(nb, nb, t * dn);
                        j.add(nb, c, -t * dc);
                    }
                }
            }
            Ok(())
        };

    let mut s: Vec<f64> = state.s.clone();
    let mut residual = vec![0.0; n];
    assemble(&s, &mut residual, None)?;
    let mut res_norm = residual.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let mut iters = 0usize;
    while res_norm > tol {
        if iters >= NEWTON_MAX_ITERS {
            return Err(Error::solver(format!(
                "block Newton stalled at residual {res_norm:.3e}"
            )));
        }
        let mut coo = CooBuilder::new(n);
        residual.iter_mut().for_each(|r| *r = 0.0);
        assemble(&s, &mut residual, Some(&mut coo))?;
        res_norm = residual.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
        if res_norm <= tol {
            break;
        }
        let jac = coo.build();
        let rhs: Vec<f64> = residual.iter().map(|r| -r).collect();
        let mut delta = vec![0.0; n];
        solve_bicgstab(&jac, &rhs, &mut delta, 1e-12, 200 * n + 200)?;
        let mut omega = 1.0;
        let mut accepted = false;
        let mut trial = vec![0.0; n];
        let mut trial_res = vec![0.0; n];
        for _ in 0..=8 {
            for c in 0..n {
                trial[c] = (s[c] + omega * delta[c]).clamp(0.0, 1.0);
            }
            trial_res.iter_mut().for_each(|r| *r = 0.0);
            assemble(&trial, &mut trial_res, None)?;
            let trial_norm = trial_res.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
            if trial_norm < res_norm * (1.0 - 1e-4 * omega) || trial_norm <= tol {
                s.copy_from_slice(&trial);
                residual.copy_from_slice(&trial_res);
                res_norm = trial_norm;
                accepted = true;
                break;
            }
            omega *= 0.5;
        }
        if !accepted {
            return Err(Error::solver(format!(
                "block Newton line search failed at residual {res_norm:.3e}"
            )));
        }
        iters += 1;
    }
    Ok(BlockState { s, t: state.t + dt })
}

/// Matrix-fracture wetting source: minus the rate of change of the block's
/// wetting content per unit matrix measure. Negative while the block imbibes.
pub fn transfer_source(
    old: &BlockState,
    new: &BlockState,
    grid: &BlockGrid,
    dt: f64,
) -> Result<f64> {
    if old.s.len() != new.s.len() || old.s.len() != grid.num_cells() {
        return Err(Error::domain(
            "block states and grid disagree in size".to_string(),
        ));
    }
    let mut acc = 0.0;
    for c in 0..grid.num_cells() {
        acc += grid.phi[c] * (new.s[c] - old.s[c]) / dt * grid.vol[c];
    }
    Ok(-acc / grid.measure)
}

/// Discrete boundary flux of the Kirchhoff field through the block interface
/// at the given state (positive = out of the block).
pub fn boundary_flux(
    state: &BlockState,
    grid: &BlockGrid,
    curves: &MediumCurves,
    boundary_s: f64,
) -> Result<f64> {
    let beta_bnd = curves.beta(boundary_s)?;
    let mut acc = 0.0;
    for face in &grid.faces {
        if face.neighbor == usize::MAX {
            acc += face.trans * (curves.beta(state.s[face.cell])? - beta_bnd);
        }
    }
    Ok(acc)
}

/// Accumulated uniqueness functional of two runs on the same grid:
/// sum over steps and cells of (s1 - s2)(beta(s1) - beta(s2)) dV dt.
/// Zero only when the runs coincide; positive otherwise by monotonicity.
pub fn uniqueness_energy_check(
    run_a: &[BlockState],
    run_b: &[BlockState],
    grid: &BlockGrid,
    curves: &MediumCurves,
    dt: f64,
) -> Result<f64> {
    if run_a.len() != run_b.len() {
        return Err(Error::domain("runs have different lengths".to_string()));
    }
    let mut acc = 0.0;
    for (sa, sb) in run_a.iter().zip(run_b) {
        if sa.s.len() != grid.num_cells() || sb.s.len() != grid.num_cells() {
            return Err(Error::domain(
                "block states and grid disagree in size".to_string(),
            ));
        }
        for c in 0..grid.num_cells() {
            acc += (sa.s[c] - sb.s[c])
                * (curves.beta(sa.s[c])? - curves.beta(sb.s[c])?)
                * grid.vol[c]
                * dt;
        }
    }
    Ok(acc)
}

/// One block per macro cell plus the transfer sources of the last advance.
#[derive(Debug, Clone)]
pub struct BlockEnsemble {
    pub grid: BlockGrid,
    pub states: Vec<BlockState>,
    pub q_w: Vec<f64>,
}

impl BlockEnsemble {
    /// Starts every block at capillary equilibrium with its macro cell.
    pub fn at_equilibrium(grid: BlockGrid, boundary: &[f64]) -> Result<Self> {
        let states = boundary
            .iter()
            .map(|&b| equilibrium_state(&grid, b))
            .collect::<Result<Vec<_>>>()?;
        let q_w = vec![0.0; boundary.len()];
        Ok(BlockEnsemble { grid, states, q_w })
    }

    pub fn uniform(grid: BlockGrid, s0: f64, cells: usize) -> Result<Self> {
        let state = equilibrium_state(&grid, s0)?;
        Ok(BlockEnsemble {
            grid,
            states: vec![state; cells],
            q_w: vec![0.0; cells],
        })
    }

    /// Advances every block one step with its own boundary trace; blocks are
    /// independent, so the work splits over `workers` threads with results
    /// written to disjoint slots (bitwise identical for any worker count).
    pub fn advance(
        &self,
        curves: &MediumCurves,
        boundary: &[f64],
        dt: f64,
        workers: usize,
    ) -> Result<BlockEnsemble> {
        let n = self.states.len();
        if boundary.len() != n {
            return Err(Error::domain(
                "boundary trace count must match the ensemble".to_string(),
            ));
        }
        let workers = workers.clamp(1, n.max(1));
        let mut results: Vec<Option<Result<(BlockState, f64)>>> = Vec::new();
        results.resize_with(n, || None);
        if workers == 1 {
            for i in 0..n {
                results[i] = Some(self.advance_one(curves, boundary[i], dt, i));
            }
        } else {
            let chunk = n.div_ceil(workers);
            std::thread::scope(|scope| {
                for (w, slot) in results.chunks_mut(chunk).enumerate() {
                    let start = w * chunk;
                    let this = &*self;
                    scope.spawn(move || {
                        for (k, cell) in slot.iter_mut().enumerate() {
                            let i = start + k;
                            *cell = Some(this.advance_one(curves, boundary[i], dt, i));
                        }
                    });
                }
            });
        }
        let mut states = Vec::with_capacity(n);
        let mut q_w = Vec::with_capacity(n);
        for r in results {
            let (state, q) = r.expect("all slots filled")?;
            states.push(state);
            q_w.push(q);
        }
        Ok(BlockEnsemble {
            grid: self.grid.clone(),
            states,
            q_w,
        })
    }

    fn advance_one(
        &self,
        curves: &MediumCurves,
        boundary_s: f64,
        dt: f64,
        idx: usize,
    ) -> Result<(BlockState, f64)> {
        let new = block_step(&self.states[idx], &self.grid, curves, boundary_s, dt)?;
        let q = transfer_source(&self.states[idx], &new, &self.grid, dt)?;
        Ok((new, q))
    }

    /// Advance with `substeps` internal backward-Euler steps per call; the
    /// reported transfer is the total storage change over the whole interval,
    /// so the macro-step mass accounting is unchanged by sub-cycling.
    pub fn advance_subcycled(
        &self,
        curves: &MediumCurves,
        boundary: &[f64],
        dt: f64,
        substeps: usize,
        workers: usize,
    ) -> Result<BlockEnsemble> {
        let substeps = substeps.max(1);
        if substeps == 1 {
            return self.advance(curves, boundary, dt, workers);
        }
        let mut current = self.clone();
        for _ in 0..substeps {
            current = current.advance(curves, boundary, dt / substeps as f64, workers)?;
        }
        for i in 0..current.states.len() {
            current.q_w[i] = transfer_source(&self.states[i], &current.states[i], &self.grid, dt)?;
        }
        Ok(current)
    }

    /// Volume-weighted mean matrix saturation per macro cell.
    pub fn means(&self) -> Vec<f64> {
        self.states
            .iter()
            .map(|s| s.volume_weighted_mean(&self.grid))
            .collect()
    }
}
