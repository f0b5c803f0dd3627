//! Resolved fine-scale reference problem on a periodic microstructure. The
//! matrix permeability carries the contrast scaling eps^theta; saturation is
//! discontinuous across fracture/matrix interfaces while the phase pressures
//! stay continuous, enforced by the local equilibrium face solve.
//!
//! Two layouts are supported:
//!
//! - a quasi-1D layered medium ("strip"): macroscopic direction x, slab
//!   microstructure across y, solved on one periodic transverse period of
//!   height eps (the exact symmetry reduction of the full stripe problem);
//! - a fully replicated 2D microstructure with the cell mask tiled
//!   eps^{-1} times per axis.

use crate::error::{Error, Result};
use crate::fv::{FlowModel, GridSpec, SatExtras, SideBc};
use crate::homogenize::CellGeometry;
use crate::petro::{CurvePair, MediumId};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MicroLayout {
    /// layered medium, one transverse period
    Strip,
    /// full 2D tiling of the cell mask
    Replicated,
}

/// Fine-scale grid plus its flow model.
pub struct MicroProblem {
    pub model: FlowModel,
    pub layout: MicroLayout,
    pub epsilon: f64,
    pub theta: f64,
    /// cells per epsilon-cell per axis (transverse resolution in strip mode)
    pub resolution: usize,
}

/// Builds the strip layout: `nx` cells along the macro direction on (0, lx),
/// one transverse period of height `epsilon` resolved by `resolution` cells,
/// periodic across. The slab mask row pattern comes from the cell geometry,
/// which must be a y-slab (mask constant along x).
#[allow(clippy::too_many_arguments)]
pub fn build_strip(
    geom: &CellGeometry,
    epsilon: f64,
    theta: f64,
    resolution: usize,
    nx: usize,
    lx: f64,
    pair: CurvePair,
    phi_fracture: f64,
    phi_matrix_of: impl Fn(f64) -> f64,
    k_base: f64,
    gravity_x: f64,
    p_dirichlet: f64,
    s_dirichlet: f64,
) -> Result<MicroProblem> {
    check_epsilon(epsilon)?;
    if resolution < 8 {
        return Err(Error::config(
            "resolution per cell must be at least 8".to_string(),
        ));
    }
    if geom.dim != 2 {
        return Err(Error::geometry(
            "strip layout needs the 2D slab cell geometry".to_string(),
        ));
    }
    // transcribe the mask's row profile (must be x-independent)
    let n = geom.n;
    let mut profile = Vec::with_capacity(n);
    for j in 0..n {
        let row = geom.matrix_mask[j * n];
        for i in 0..n {
            if geom.matrix_mask[j * n + i] != row {
                return Err(Error::geometry(
                    "strip layout needs a layered (x-independent) mask".to_string(),
                ));
            }
        }
        profile.push(row);
    }
    // resample the profile onto `resolution` rows
    if resolution % n != 0 && n % resolution != 0 {
        return Err(Error::geometry(format!(
            "transverse resolution {resolution} must refine or coarsen the mask rows {n} evenly"
        )));
    }
    let rows: Vec<bool> = (0..resolution)
        .map(|j| profile[j * n / resolution])
        .collect();
    let spec = GridSpec {
        dim: 2,
        nx,
        ny: resolution,
        lx,
        ly: epsilon,
        west: SideBc::NoFlow,
        east: SideBc::Dirichlet,
        south: SideBc::Periodic,
        north: SideBc::Periodic,
    };
    let cells = spec.num_cells();
    let mut medium = vec![MediumId::Fracture; cells];
    let mut phi = vec![phi_fracture; cells];
    let mut k = vec![k_base; cells];
    let kappa = epsilon.powf(theta);
    for j in 0..resolution {
        for i in 0..nx {
            if rows[j] {
                let c = j * nx + i;
                medium[c] = MediumId::Matrix;
                // transverse position inside the unit cell
                let y_cell = (j as f64 + 0.5) / resolution as f64;
                phi[c] = phi_matrix_of(y_cell);
                k[c] = k_base * kappa;
            }
        }
    }
    let model = FlowModel::new(
        spec,
        medium,
        &k,
        &k,
        phi,
        pair,
        [gravity_x, 0.0],
        p_dirichlet,
        s_dirichlet,
    )?;
    Ok(MicroProblem {
        model,
        layout: MicroLayout::Strip,
        epsilon,
        theta,
        resolution,
    })
}

/// Builds the fully replicated 2D microstructure on the unit square.
#[allow(clippy::too_many_arguments)]
pub fn build_replicated(
    geom: &CellGeometry,
    epsilon: f64,
    theta: f64,
    resolution: usize,
    pair: CurvePair,
    phi_fracture: f64,
    k_base: f64,
    gravity: [f64; 2],
    p_dirichlet: f64,
    s_dirichlet: f64,
) -> Result<MicroProblem> {
    check_epsilon(epsilon)?;
    if resolution < 8 {
        return Err(Error::config(
            "resolution per cell must be at least 8".to_string(),
        ));
    }
    if geom.dim != 2 {
        return Err(Error::geometry(
            "replicated layout needs a 2D cell geometry".to_string(),
        ));
    }
    let periods = (1.0 / epsilon).round() as usize;
    let n_mask = geom.n;
    if resolution % n_mask != 0 && n_mask % resolution != 0 {
        return Err(Error::geometry(format!(
            "resolution per cell {resolution} must refine or coarsen the mask {n_mask} evenly"
        )));
    }
    let nf = periods * resolution;
    let mask_at = |i: usize, j: usize| -> bool {
        let (ci, cj) = (i % resolution, j % resolution);
        geom.matrix_mask[(cj * n_mask / resolution) * n_mask + (ci * n_mask / resolution)]
    };
    // blocks must stay away from the outer boundary
    for i in 0..nf {
        if mask_at(i, 0) || mask_at(i, nf - 1) || mask_at(0, i) || mask_at(nf - 1, i) {
            return Err(Error::geometry(
                "matrix cells touch the outer boundary; the mask border must be fracture"
                    .to_string(),
            ));
        }
    }
    let spec = GridSpec {
        dim: 2,
        nx: nf,
        ny: nf,
        lx: 1.0,
        ly: 1.0,
        west: SideBc::NoFlow,
        east: SideBc::Dirichlet,
        south: SideBc::NoFlow,
        north: SideBc::NoFlow,
    };
    let cells = spec.num_cells();
    let mut medium = vec![MediumId::Fracture; cells];
    let mut phi = vec![phi_fracture; cells];
    let mut k = vec![k_base; cells];
    let kappa = epsilon.powf(theta);
    for j in 0..nf {
        for i in 0..nf {
            if mask_at(i, j) {
                let c = j * nf + i;
                medium[c] = MediumId::Matrix;
                let (ci, cj) = (i % resolution, j % resolution);
                phi[c] = geom.porosity_m
                    [(cj * n_mask / resolution) * n_mask + (ci * n_mask / resolution)];
                k[c] = k_base * kappa;
            }
        }
    }
    let model = FlowModel::new(
        spec,
        medium,
        &k,
        &k,
        phi,
        pair,
        gravity,
        p_dirichlet,
        s_dirichlet,
    )?;
    Ok(MicroProblem {
        model,
        layout: MicroLayout::Replicated,
        epsilon,
        theta,
        resolution,
    })
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon > 0.0 && epsilon <= 0.5) {
        return Err(Error::config(format!("epsilon {epsilon} outside (0, 1/2]")));
    }
    let inv = 1.0 / epsilon;
    if (inv - inv.round()).abs() > 1e-9 {
        return Err(Error::config(format!(
            "1/epsilon must be an integer so the cells tile the domain; got {epsilon}"
        )));
    }
    Ok(())
}

/// State of the fine-scale problem.
#[derive(Debug, Clone)]
pub struct MicroState {
    pub s: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct MicroLedgerRow {
    pub t: f64,
    pub dt: f64,
    pub s_min: f64,
    pub s_max: f64,
    pub mean_fracture_s: f64,
    pub mean_matrix_s: f64,
    pub stored_mass: f64,
    pub drift: f64,
    pub newton_iters: usize,
}

#[derive(Debug, Clone)]
pub struct MicroRun {
    pub state: MicroState,
    pub ledger: Vec<MicroLedgerRow>,
    pub snapshots: Vec<MicroState>,
}

impl MicroProblem {
    /// Initial state: fracture saturation `s0_fracture`, matrix saturation
    /// either given or at capillary equilibrium; pressure from one solve.
    pub fn initialize(&self, s0_fracture: f64, s0_matrix: Option<f64>) -> Result<MicroState> {
        if !(0.0..=1.0).contains(&s0_fracture) {
            return Err(Error::config(
                "A.8: initial saturation outside [0,1]".to_string(),
            ));
        }
        let s_m = match s0_matrix {
            Some(v) => {
                if !(0.0..=1.0).contains(&v) {
                    return Err(Error::config(
                        "A.8: initial matrix saturation outside [0,1]".to_string(),
                    ));
                }
                v
            }
            None => self.model.pair.equilibrium_saturation(s0_fracture)?,
        };
        let n = self.model.spec.num_cells();
        let s: Vec<f64> = (0..n)
            .map(|c| {
                if self.model.medium[c] == MediumId::Fracture {
                    s0_fracture
                } else {
                    s_m
                }
            })
            .collect();
        let p = self
            .model
            .pressure_step(&s, &vec![self.model.p_dirichlet; n])?;
        Ok(MicroState { s, p, t: 0.0 })
    }

    /// One sequential-implicit step with dt halving on Newton failure.
    pub fn step(
        &self,
        state: &MicroState,
        dt: f64,
        max_halvings: usize,
    ) -> Result<(MicroState, f64, usize)> {
        let p_new = self.model.pressure_step(&state.s, &state.p)?;
        let extras = SatExtras::default();
        let mut attempt = dt;
        for _ in 0..=max_halvings {
            match self
                .model
                .saturation_step(&state.s, &p_new, attempt, &extras)
            {
                Ok((s_new, rep)) => {
                    return Ok((
                        MicroState {
                            s: s_new,
                            p: p_new,
                            t: state.t + attempt,
                        },
                        attempt,
                        rep.newton_iters,
                    ))
                }
                Err(_) if attempt > 0.0 => attempt *= 0.5,
                Err(e) => return Err(e),
            }
        }
        Err(Error::solver(
            "fine-scale step failed after dt halvings".to_string(),
        ))
    }

    /// Runs to `t_end` with the given initial data.
    pub fn run(
        &self,
        s0_fracture: f64,
        s0_matrix: Option<f64>,
        t_end: f64,
        dt_init: f64,
        dt_max: f64,
        snapshot_every: usize,
    ) -> Result<MicroRun> {
        let mut state = self.initialize(s0_fracture, s0_matrix)?;
        let extras = SatExtras::default();
        let initial_mass = self.model.stored_mass(&state.s, &extras)?;
        let mut cum_in = 0.0;
        let mut ledger = Vec::new();
        let mut snapshots = vec![state.clone()];
        let mut dt = dt_init.min(dt_max);
        let mut streak = 0usize;
        let mut step_index = 0usize;
        while state.t < t_end * (1.0 - 1e-12) {
            let dt_step = dt.min(t_end - state.t);
            let p_new = self.model.pressure_step(&state.s, &state.p)?;
            let mut attempt = dt_step;
            let mut halvings = 0usize;
            let (s_new, report) = loop {
                match self
                    .model
                    .saturation_step(&state.s, &p_new, attempt, &SatExtras::default())
                {
                    Ok(ok) => break ok,
                    Err(e) => {
                        if halvings >= 10 {
                            return Err(Error::solver(format!(
                                "fine-scale step {step_index} failed after {halvings} halvings: {e}"
                            )));
                        }
                        halvings += 1;
                        attempt *= 0.5;
                        streak = 0;
                    }
                }
            };
            if halvings > 0 {
                dt = attempt;
            } else {
                streak += 1;
                if streak >= 5 {
                    dt = (dt * 1.2).min(dt_max);
                    streak = 0;
                }
            }
            state = MicroState {
                s: s_new,
                p: p_new,
                t: state.t + attempt,
            };
            step_index += 1;
            cum_in += attempt
                * (report.boundary_influx_w + report.source_rate_w + report.coupling_rate_w);
            let stored = self.model.stored_mass(&state.s, &extras)?;
            let drift = (stored - initial_mass) - cum_in;
            let (mf, mm) = self.medium_means(&state.s);
            ledger.push(MicroLedgerRow {
                t: state.t,
                dt: attempt,
                s_min: state.s.iter().cloned().fold(f64::INFINITY, f64::min),
                s_max: state.s.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
                mean_fracture_s: mf,
                mean_matrix_s: mm,
                stored_mass: stored,
                drift,
                newton_iters: report.newton_iters,
            });
            if snapshot_every > 0 && step_index % snapshot_every == 0 {
                snapshots.push(state.clone());
            }
        }
        snapshots.push(state.clone());
        Ok(MicroRun {
            state,
            ledger,
            snapshots,
        })
    }

    /// Mean saturation over the fracture and matrix parts.
    pub fn medium_means(&self, s: &[f64]) -> (f64, f64) {
        let (mut sf, mut nf, mut sm, mut nm) = (0.0, 0usize, 0.0, 0usize);
        for (c, &v) in s.iter().enumerate() {
            if self.model.medium[c] == MediumId::Fracture {
                sf += v;
                nf += 1;
            } else {
                sm += v;
                nm += 1;
            }
        }
        (
            if nf > 0 { sf / nf as f64 } else { 0.0 },
            if nm > 0 { sm / nm as f64 } else { 0.0 },
        )
    }

    /// Column averages over the macro direction: per-x-cell mean fracture and
    /// matrix saturations (strip layout).
    pub fn column_averages(&self, s: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (nx, ny) = (self.model.spec.nx, self.model.spec.ny);
        let mut frac = vec![0.0; nx];
        let mut frac_n = vec![0usize; nx];
        let mut mat = vec![0.0; nx];
        let mut mat_n = vec![0usize; nx];
        for j in 0..ny {
            for i in 0..nx {
                let c = j * nx + i;
                if self.model.medium[c] == MediumId::Fracture {
                    frac[i] += s[c];
                    frac_n[i] += 1;
                } else {
                    mat[i] += s[c];
                    mat_n[i] += 1;
                }
            }
        }
        for i in 0..nx {
            if frac_n[i] > 0 {
                frac[i] /= frac_n[i] as f64;
            }
            if mat_n[i] > 0 {
                mat[i] /= mat_n[i] as f64;
            }
        }
        (frac, mat)
    }

    /// Largest phase-pressure continuity defect over all interface faces:
    /// reconstructed (p_w, p_n) from the two one-sided traces must agree.
    pub fn interface_continuity_defect(&self, state: &MicroState) -> Result<f64> {
        use crate::fv::{interface_flux, FaceKind};
        let mut worst = 0.0f64;
        for face in &self.model.faces {
            if face.kind != FaceKind::Interface {
                continue;
            }
            let cl = self.model.pair.by_id(self.model.medium[face.l]);
            let cr = self.model.pair.by_id(self.model.medium[face.r]);
            let (_, _, st) = interface_flux(
                cl,
                cr,
                face,
                state.p[face.l],
                state.p[face.r],
                state.s[face.l],
                state.s[face.r],
            )?;
            // the trace pair sits at a single face pressure; pressure
            // continuity defect is the capillary mismatch of the traces
            let defect = (cl.pc(st.s_trace_l)? - cr.pc(st.s_trace_r)?).abs();
            worst = worst.max(defect);
        }
        Ok(worst)
    }
}

/// L2 distances between column-averaged fine-scale saturations and the
/// upscaled fields: (fracture vs macro S, matrix vs block/equilibrium mean).
pub fn restrict_compare(
    micro: &MicroProblem,
    micro_s: &[f64],
    macro_s: &[f64],
    matrix_reference: &[f64],
    dx: f64,
) -> Result<(f64, f64)> {
    let (frac, mat) = micro.column_averages(micro_s);
    if frac.len() != macro_s.len() || mat.len() != matrix_reference.len() {
        return Err(Error::domain(
            "column counts do not match the macro grid".to_string(),
        ));
    }
    let mut e_f = 0.0;
    let mut e_m = 0.0;
    for i in 0..frac.len() {
        e_f += (frac[i] - macro_s[i]).powi(2) * dx;
        e_m += (mat[i] - matrix_reference[i]).powi(2) * dx;
    }
    Ok((e_f.sqrt(), e_m.sqrt()))
}
