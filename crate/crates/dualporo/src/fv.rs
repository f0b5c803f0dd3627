//! Structured-grid finite-volume core shared by the upscaled and fine-scale
//! solvers: two-point fluxes with harmonic transmissibilities, Kirchhoff-form
//! capillary diffusion, phase-wise upwind mobilities, and the local
//! capillary-equilibrium solve at fracture/matrix interface faces.
//!
//! The saturation update is backward Euler with Newton iteration; the
//! residual is written in the Kirchhoff transform (all diffusive terms are
//! differences of beta values), while the iteration variable is the
//! saturation itself so the Jacobian stays bounded at the degenerate
//! endpoints.

use crate::error::{Error, Result};
use crate::numerics::sparse::{solve_bicgstab, solve_cg, CooBuilder};
use crate::petro::{CurvePair, MediumCurves, MediumId};

/// Boundary condition attached to one side of the rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SideBc {
    NoFlow,
    /// Fixed global pressure and saturation (applied on fracture cells only).
    Dirichlet,
    Periodic,
}

#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub dim: usize,
    pub nx: usize,
    pub ny: usize,
    pub lx: f64,
    pub ly: f64,
    pub west: SideBc,
    pub east: SideBc,
    pub south: SideBc,
    pub north: SideBc,
}

impl GridSpec {
    pub fn line(nx: usize, lx: f64, west: SideBc, east: SideBc) -> Self {
        GridSpec {
            dim: 1,
            nx,
            ny: 1,
            lx,
            ly: 1.0,
            west,
            east,
            south: SideBc::NoFlow,
            north: SideBc::NoFlow,
        }
    }

    pub fn dx(&self) -> f64 {
        self.lx / self.nx as f64
    }

    pub fn dy(&self) -> f64 {
        if self.dim == 1 {
            1.0
        } else {
            self.ly / self.ny as f64
        }
    }

    pub fn num_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx() * self.dy()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaceKind {
    /// Both sides in the same medium (or a transparent pair): single
    /// harmonic transmissibility.
    Interior,
    /// Fracture/matrix face resolved by the local equilibrium solve.
    Interface,
    /// Dirichlet boundary face (the right state is the boundary state).
    Boundary,
}

#[derive(Debug, Clone, Copy)]
pub struct Face {
    pub l: usize,
    /// right cell; usize::MAX on boundary faces
    pub r: usize,
    pub kind: FaceKind,
    /// combined transmissibility (interior and boundary faces)
    pub t_full: f64,
    /// half transmissibilities (interface faces)
    pub t_l: f64,
    pub t_r: f64,
    /// gravity head over the half distances: d * (g . n), split per side
    pub grav_l: f64,
    pub grav_r: f64,
}

impl Face {
    pub fn grav(&self) -> f64 {
        self.grav_l + self.grav_r
    }
}

/// One two-phase flow problem on a structured grid. Immutable during a run.
#[derive(Debug, Clone)]
pub struct FlowModel {
    pub spec: GridSpec,
    pub faces: Vec<Face>,
    pub medium: Vec<MediumId>,
    /// accumulation coefficient per cell (effective or true porosity)
    pub phi: Vec<f64>,
    pub pair: CurvePair,
    pub p_dirichlet: f64,
    pub s_dirichlet: f64,
    /// injection / production rates per cell (1/s), wetting injection fraction
    pub f_inject: Vec<f64>,
    pub f_produce: Vec<f64>,
    pub s_inject_w: f64,
    /// measure ratio applied to sources (|Y_f|/|Y_m| upscaled, 1 fine-scale)
    pub source_scale: f64,
}

/// Per-cell extras the upscaled solver adds to the saturation residual.
#[derive(Debug, Clone, Copy, Default)]
pub struct SatExtras<'a> {
    /// matrix-fracture source rate per cell (added as + on the right side)
    pub coupling: Option<&'a [f64]>,
    /// moderate-contrast extra accumulation: mean matrix porosity in front of
    /// the equilibrium-map storage term
    pub phi_hat_m: Option<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct SatReport {
    pub newton_iters: usize,
    /// wetting volume rate entering through Dirichlet faces
    pub boundary_influx_w: f64,
    /// total wetting source rate at the accepted state
    pub source_rate_w: f64,
    pub coupling_rate_w: f64,
    pub max_residual: f64,
}

const NEWTON_MAX_ITERS: usize = 30;
const NEWTON_TOL: f64 = 1e-12;
const LINE_SEARCH_MAX: usize = 8;
/// Absolute tolerance (scaled) of the scalar interface equilibrium solve.
const FACE_SOLVE_TOL: f64 = 1e-13;

impl FlowModel {
    /// Builds the face list for a medium/permeability layout. `kx`/`ky` are
    /// per-cell permeabilities along each axis. Faces between different media
    /// become interface faces unless the pair is transparent and the
    /// permeabilities match, in which case the interface condition collapses
    /// to the interior formula exactly and the face is classified interior.
    pub fn new(
        spec: GridSpec,
        medium: Vec<MediumId>,
        kx: &[f64],
        ky: &[f64],
        phi: Vec<f64>,
        pair: CurvePair,
        gravity: [f64; 2],
        p_dirichlet: f64,
        s_dirichlet: f64,
    ) -> Result<Self> {
        let n = spec.num_cells();
        if medium.len() != n || kx.len() != n || ky.len() != n || phi.len() != n {
            return Err(Error::domain(
                "field lengths must match the grid".to_string(),
            ));
        }
        let (nx, ny) = (spec.nx, spec.ny);
        let (dx, dy) = (spec.dx(), spec.dy());
        let transparent = pair.is_transparent();
        let mut faces = Vec::new();
        let classify = |a: usize, b: usize, ka: f64, kb: f64| -> FaceKind {
            if medium[a] == medium[b] || (transparent && ka == kb) {
                FaceKind::Interior
            } else {
                FaceKind::Interface
            }
        };
        let push_pair =
            |faces: &mut Vec<Face>, a: usize, b: usize, area: f64, d: f64, ga: f64, axis: usize| {
                let (ka, kb) = if axis == 0 {
                    (kx[a], kx[b])
                } else {
                    (ky[a], ky[b])
                };
                let t_l = area * ka / (0.5 * d);
                let t_r = area * kb / (0.5 * d);
                let kind = classify(a, b, ka, kb);
                faces.push(Face {
                    l: a,
                    r: b,
                    kind,
                    t_full: t_l * t_r / (t_l + t_r),
                    t_l,
                    t_r,
                    grav_l: 0.5 * d * ga,
                    grav_r: 0.5 * d * ga,
                });
            };
        // x-direction faces
        for j in 0..ny {
            for i in 0..nx - 1 {
                let a = j * nx + i;
                push_pair(&mut faces, a, a + 1, dy, dx, gravity[0], 0);
            }
            if spec.west == SideBc::Periodic || spec.east == SideBc::Periodic {
                let a = j * nx + (nx - 1);
                let b = j * nx;
                push_pair(&mut faces, a, b, dy, dx, gravity[0], 0);
            }
        }
        // y-direction faces
        if spec.dim == 2 {
            for j in 0..ny - 1 {
                for i in 0..nx {
                    let a = j * nx + i;
                    push_pair(&mut faces, a, a + nx, dx, dy, gravity[1], 1);
                }
            }
            if spec.south == SideBc::Periodic || spec.north == SideBc::Periodic {
                for i in 0..nx {
                    let a = (ny - 1) * nx + i;
                    push_pair(&mut faces, a, i, dx, dy, gravity[1], 1);
                }
            }
        }
        // Dirichlet boundary faces (fracture cells only; the matrix part of
        // the boundary is sealed so blocks communicate through fractures).
        // A fully transparent model has no physical matrix, so the seal is
        // dropped and the face layout matches the single-medium solver.
        let k_uniform = kx.windows(2).all(|w| w[0] == w[1]) && ky.windows(2).all(|w| w[0] == w[1]);
        let fully_transparent = transparent && k_uniform;
        let push_boundary = |faces: &mut Vec<Face>, c: usize, area: f64, d: f64, gn: f64| {
            if medium[c] != MediumId::Fracture && !fully_transparent {
                return;
            }
            let k = if area == dy { kx[c] } else { ky[c] };
            let t = area * k / (0.5 * d);
            faces.push(Face {
                l: c,
                r: usize::MAX,
                kind: FaceKind::Boundary,
                t_full: t,
                t_l: t,
                t_r: t,
                grav_l: 0.5 * d * gn,
                grav_r: 0.0,
            });
        };
        for j in 0..ny {
            if spec.west == SideBc::Dirichlet {
                // normal points outward (-x): head is -g_x * d/2
                push_boundary(&mut faces, j * nx, dy, dx, -gravity[0]);
            }
            if spec.east == SideBc::Dirichlet {
                push_boundary(&mut faces, j * nx + nx - 1, dy, dx, gravity[0]);
            }
        }
        if spec.dim == 2 {
            for i in 0..nx {
                if spec.south == SideBc::Dirichlet {
                    push_boundary(&mut faces, i, dx, dy, -gravity[1]);
                }
                if spec.north == SideBc::Dirichlet {
                    push_boundary(&mut faces, (ny - 1) * nx + i, dx, dy, gravity[1]);
                }
            }
        }
        Ok(FlowModel {
            spec,
            faces,
            medium,
            phi,
            pair,
            p_dirichlet,
            s_dirichlet,
            f_inject: vec![0.0; n],
            f_produce: vec![0.0; n],
            s_inject_w: 1.0,
            source_scale: 1.0,
        })
    }

    pub fn curves(&self, cell: usize) -> &MediumCurves {
        self.pair.by_id(self.medium[cell])
    }

    fn has_dirichlet_face(&self) -> bool {
        self.faces.iter().any(|f| f.kind == FaceKind::Boundary)
    }

    /// Wetting source rate density at a cell for saturation `s` (zero on the
    /// matrix part of a fine-scale model).
    pub fn source_w(&self, cell: usize, s: f64) -> f64 {
        if self.medium[cell] != MediumId::Fracture {
            return 0.0;
        }
        self.source_scale * (self.s_inject_w * self.f_inject[cell] - s * self.f_produce[cell])
    }

    fn source_total(&self, cell: usize) -> f64 {
        if self.medium[cell] != MediumId::Fracture {
            return 0.0;
        }
        self.source_scale * (self.f_inject[cell] - self.f_produce[cell])
    }

    /// Right-side state of a face: (pressure, saturation, curves) seen from
    /// the left cell.
    fn face_right_state<'a>(
        &'a self,
        face: &Face,
        p: &[f64],
        s: &[f64],
    ) -> (f64, f64, &'a MediumCurves) {
        if face.kind == FaceKind::Boundary {
            (self.p_dirichlet, self.s_dirichlet, self.curves(face.l))
        } else {
            (p[face.r], s[face.r], self.curves(face.r))
        }
    }

    /// Pressure solve with frozen saturation: total-flow equation with
    /// phase-wise upwind mobilities. `p_hint` fixes upwind directions and
    /// seeds the Krylov iteration.
    pub fn pressure_step(&self, s: &[f64], p_hint: &[f64]) -> Result<Vec<f64>> {
        if !self.has_dirichlet_face() {
            return Err(Error::config(
                "pressure system has no Dirichlet boundary faces; the all-no-flow system is singular"
                    .to_string(),
            ));
        }
        let n = self.spec.num_cells();
        let vol = self.spec.cell_volume();
        let mut coo = CooBuilder::new(n);
        let mut rhs = vec![0.0; n];
        for c in 0..n {
            rhs[c] = vol * self.source_total(c);
        }
        for face in &self.faces {
            let (p_r, s_r, curves_r) = self.face_right_state(face, p_hint, s);
            let curves_l = self.curves(face.l);
            let s_l = s[face.l];
            let adv = (p_hint[face.l] - p_r) + face.grav();
            match face.kind {
                FaceKind::Interior | FaceKind::Boundary => {
                    let s_up = if adv >= 0.0 { s_l } else { s_r };
                    let lam = curves_l.mobility_w(s_up) + curves_l.mobility_n(s_up);
                    let t = face.t_full * lam;
                    coo.add(face.l, face.l, t);
                    rhs[face.l] -= t * face.grav();
                    if face.kind == FaceKind::Boundary {
                        rhs[face.l] += t * self.p_dirichlet;
                    } else {
                        coo.add(face.l, face.r, -t);
                        coo.add(face.r, face.r, t);
                        coo.add(face.r, face.l, -t);
                        rhs[face.r] += t * face.grav();
                    }
                }
                FaceKind::Interface => {
                    let (lam_l, lam_r) = {
                        let (mobs_l, mobs_r) =
                            interface_mobilities(curves_l, curves_r, s_l, s_r, adv)?;
                        (mobs_l.0 + mobs_l.1, mobs_r.0 + mobs_r.1)
                    };
                    let (tl, tr) = (face.t_l * lam_l, face.t_r * lam_r);
                    let t = tl * tr / (tl + tr);
                    coo.add(face.l, face.l, t);
                    coo.add(face.l, face.r, -t);
                    coo.add(face.r, face.r, t);
                    coo.add(face.r, face.l, -t);
                    rhs[face.l] -= t * face.grav();
                    rhs[face.r] += t * face.grav();
                }
            }
        }
        let a = coo.build();
        let mut p = p_hint.to_vec();
        let rel = solve_cg(&a, &rhs, &mut p, 1e-12, 400 * n + 400)?;
        if rel > 1e-10 {
            return Err(Error::solver(format!(
                "pressure residual {rel:.3e} above tolerance"
            )));
        }
        Ok(p)
    }

    /// Wetting flux through a face and its derivatives with respect to the
    /// two adjacent saturations. Positive = flow from `l` to `r`.
    fn wetting_flux(&self, face: &Face, p: &[f64], s: &[f64]) -> Result<(f64, f64, f64)> {
        let curves_l = self.curves(face.l);
        let (p_r, s_r, curves_r) = self.face_right_state(face, p, s);
        let s_l = s[face.l];
        let adv = (p[face.l] - p_r) + face.grav();
        match face.kind {
            FaceKind::Interior | FaceKind::Boundary => {
                let up_left = adv >= 0.0;
                let (lam, dlam_l, dlam_r) = if up_left {
                    (
                        curves_l.mobility_w(s_l),
                        curves_l.mobility_w_prime(s_l),
                        0.0,
                    )
                } else {
                    (
                        curves_l.mobility_w(s_r),
                        0.0,
                        curves_l.mobility_w_prime(s_r),
                    )
                };
                let q = face.t_full * (lam * adv + (curves_l.beta(s_l)? - curves_r.beta(s_r)?));
                let dq_l = face.t_full * (dlam_l * adv + curves_l.beta_deriv(s_l));
                let dq_r = if face.kind == FaceKind::Boundary {
                    0.0
                } else {
                    face.t_full * (dlam_r * adv - curves_r.beta_deriv(s_r))
                };
                Ok((q, dq_l, dq_r))
            }
            FaceKind::Interface => {
                let q = interface_flux(curves_l, curves_r, face, p[face.l], p_r, s_l, s_r)?.0;
                // saturations enter through mobilities and the Kirchhoff
                // differences; differentiate the whole face solve numerically
                let h = 1e-6;
                let (sl_m, sl_p) = ((s_l - h).max(0.0), (s_l + h).min(1.0));
                let q_lp = interface_flux(curves_l, curves_r, face, p[face.l], p_r, sl_p, s_r)?.0;
                let q_lm = interface_flux(curves_l, curves_r, face, p[face.l], p_r, sl_m, s_r)?.0;
                let dq_l = (q_lp - q_lm) / (sl_p - sl_m);
                let (sr_m, sr_p) = ((s_r - h).max(0.0), (s_r + h).min(1.0));
                let q_rp = interface_flux(curves_l, curves_r, face, p[face.l], p_r, s_l, sr_p)?.0;
                let q_rm = interface_flux(curves_l, curves_r, face, p[face.l], p_r, s_l, sr_m)?.0;
                let dq_r = (q_rp - q_rm) / (sr_p - sr_m);
                Ok((q, dq_l, dq_r))
            }
        }
    }

    fn assemble_saturation(
        &self,
        s: &[f64],
        s_old: &[f64],
        p: &[f64],
        dt: f64,
        extras: &SatExtras,
        residual: &mut [f64],
        jacobian: Option<&mut CooBuilder>,
    ) -> Result<()> {
        let n = self.spec.num_cells();
        let vol = self.spec.cell_volume();
        let mut jac = jacobian;
        for c in 0..n {
            let mut r = vol * self.phi[c] * (s[c] - s_old[c]) / dt;
            let mut diag = vol * self.phi[c] / dt;
            if let Some(phm) = extras.phi_hat_m {
                let stored = self.pair.equilibrium_saturation(s[c].clamp(0.0, 1.0))?;
                let stored_old = self.pair.equilibrium_saturation(s_old[c].clamp(0.0, 1.0))?;
                r += vol * phm * (stored - stored_old) / dt;
                diag += vol
                    * phm
                    * self
                        .pair
                        .equilibrium_saturation_prime(s[c].clamp(0.0, 1.0))?
                    / dt;
            }
            r -= vol * self.source_w(c, s[c]);
            if self.medium[c] == MediumId::Fracture {
                diag += vol * self.source_scale * self.f_produce[c];
            }
            if let Some(q) = extras.coupling {
                r -= vol * q[c];
            }
            residual[c] = r;
            if let Some(j) = jac.as_deref_mut() {
                j.add(c, c, diag);
            }
        }
        for face in &self.faces {
            let (q, dq_l, dq_r) = self.wetting_flux(face, p, s)?;
            residual[face.l] += q;
            if let Some(j) = jac.as_deref_mut() {
                j.add(face.l, face.l, dq_l);
            }
            if face.kind != FaceKind::Boundary {
                residual[face.r] -= q;
                if let Some(j) = jac.as_deref_mut() {
                    j.add(face.l, face.r, dq_r);
                    j.add(face.r, face.r, -dq_r);
                    j.add(face.r, face.l, -dq_l);
                }
            }
        }
        Ok(())
    }

    /// Implicit saturation update at fixed pressure. Returns the new
    /// saturations and the mass-accounting report, or a solver error for the
    /// caller's dt control to handle.
    pub fn saturation_step(
        &self,
        s_old: &[f64],
        p: &[f64],
        dt: f64,
        extras: &SatExtras,
    ) -> Result<(Vec<f64>, SatReport)> {
        let n = self.spec.num_cells();
        let vol = self.spec.cell_volume();
        let scale = self
            .phi
            .iter()
            .map(|&phi| vol * phi / dt)
            .fold(0.0f64, f64::max);
        let tol = NEWTON_TOL * scale;
        let mut s = s_old.to_vec();
        let mut residual = vec![0.0; n];
        self.assemble_saturation(&s, s_old, p, dt, extras, &mut residual, None)?;
        let mut res_norm = inf_norm(&residual);
        let mut iters = 0usize;
        while res_norm > tol {
            if iters >= NEWTON_MAX_ITERS {
                return Err(Error::solver(format!(
                    "saturation Newton stalled at residual {res_norm:.3e} (tol {tol:.3e})"
                )));
            }
            let mut coo = CooBuilder::new(n);
            residual.iter_mut().for_each(|r| *r = 0.0);
            self.assemble_saturation(&s, s_old, p, dt, extras, &mut residual, Some(&mut coo))?;
            res_norm = inf_norm(&residual);
            if res_norm <= tol {
                break;
            }
            let jac = coo.build();
            let rhs: Vec<f64> = residual.iter().map(|r| -r).collect();
            let mut delta = vec![0.0; n];
            solve_bicgstab(&jac, &rhs, &mut delta, 1e-12, 200 * n + 200)?;
            // backtracking on the step length, iterates clamped to [0,1]
            let mut accepted = false;
            let mut omega = 1.0;
            let mut trial = vec![0.0; n];
            let mut trial_res = vec![0.0; n];
            for _ in 0..=LINE_SEARCH_MAX {
                for c in 0..n {
                    trial[c] = (s[c] + omega * delta[c]).clamp(0.0, 1.0);
                }
                trial_res.iter_mut().for_each(|r| *r = 0.0);
                self.assemble_saturation(&trial, s_old, p, dt, extras, &mut trial_res, None)?;
                let trial_norm = inf_norm(&trial_res);
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
                    "saturation Newton line search failed at residual {res_norm:.3e}"
                )));
            }
            iters += 1;
        }
        // post-Newton clamp within tolerance (iterates are already projected)
        for v in s.iter_mut() {
            *v = v.clamp(0.0, 1.0);
        }
        let mut influx = 0.0;
        for face in &self.faces {
            if face.kind == FaceKind::Boundary {
                influx -= self.wetting_flux(face, p, &s)?.0;
            }
        }
        let mut source_rate = 0.0;
        for c in 0..n {
            source_rate += vol * self.source_w(c, s[c]);
        }
        let coupling_rate = extras
            .coupling
            .map(|q| q.iter().map(|v| v * vol).sum())
            .unwrap_or(0.0);
        Ok((
            s,
            SatReport {
                newton_iters: iters,
                boundary_influx_w: influx,
                source_rate_w: source_rate,
                coupling_rate_w: coupling_rate,
                max_residual: res_norm,
            },
        ))
    }

    /// Wetting mass currently stored in the model's accumulation terms
    /// (including the equilibrium-map storage in the moderate regime).
    pub fn stored_mass(&self, s: &[f64], extras: &SatExtras) -> Result<f64> {
        let vol = self.spec.cell_volume();
        let mut acc = 0.0;
        for c in 0..self.spec.num_cells() {
            acc += vol * self.phi[c] * s[c];
            if let Some(phm) = extras.phi_hat_m {
                acc += vol * phm * self.pair.equilibrium_saturation(s[c].clamp(0.0, 1.0))?;
            }
        }
        Ok(acc)
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, &x| m.max(x.abs()))
}

/// Phase mobilities on the two sides of an interface face, carried over from
/// the upwind cell and converted through capillary equilibrium, so that a
/// transparent pair reproduces the interior upwind formula exactly.
fn interface_mobilities(
    curves_l: &MediumCurves,
    curves_r: &MediumCurves,
    s_l: f64,
    s_r: f64,
    adv: f64,
) -> Result<((f64, f64), (f64, f64))> {
    let map = |from: &MediumCurves, to: &MediumCurves, s: f64| -> Result<f64> {
        to.pc_inverse(from.pc(s.clamp(0.0, 1.0))?)
    };
    if adv >= 0.0 {
        let s_r_img = map(curves_l, curves_r, s_l)?;
        Ok((
            (curves_l.mobility_w(s_l), curves_l.mobility_n(s_l)),
            (curves_r.mobility_w(s_r_img), curves_r.mobility_n(s_r_img)),
        ))
    } else {
        let s_l_img = map(curves_r, curves_l, s_r)?;
        Ok((
            (curves_l.mobility_w(s_l_img), curves_l.mobility_n(s_l_img)),
            (curves_r.mobility_w(s_r), curves_r.mobility_n(s_r)),
        ))
    }
}

/// Resolved interface state: single wetting/nonwetting fluxes through the
/// face plus the one-sided saturation traces at capillary equilibrium.
#[derive(Debug, Clone, Copy)]
pub struct InterfaceState {
    pub q_w: f64,
    pub q_n: f64,
    pub s_trace_l: f64,
    pub s_trace_r: f64,
    pub p_face: f64,
}

/// Solves the local two-point interface problem: find the face capillary
/// pressure (hence both saturation traces) and face pressure such that both
/// phase half-fluxes match. The trace pair always satisfies
/// pc_l(trace_l) = pc_r(trace_r).
pub fn interface_flux(
    curves_l: &MediumCurves,
    curves_r: &MediumCurves,
    face: &Face,
    p_l: f64,
    p_r: f64,
    s_l: f64,
    s_r: f64,
) -> Result<(f64, f64, InterfaceState)> {
    let adv = (p_l - p_r) + face.grav();
    let ((lw_l, ln_l), (lw_r, ln_r)) = interface_mobilities(curves_l, curves_r, s_l, s_r, adv)?;
    let (lam_l, lam_r) = (lw_l + ln_l, lw_r + ln_r);
    // total-flux elimination of the face pressure (no Kirchhoff terms left)
    let al = face.t_l * lam_l;
    let ar = face.t_r * lam_r;
    let p_face = (al * (p_l + face.grav_l) + ar * (p_r - face.grav_r)) / (al + ar);
    let drive_l = p_l - p_face + face.grav_l;
    let drive_r = p_face - p_r + face.grav_r;

    let beta_ll = curves_l.beta(s_l.clamp(0.0, 1.0))?;
    let beta_rr = curves_r.beta(s_r.clamp(0.0, 1.0))?;
    // wetting continuity as a function of the face capillary pressure
    let mismatch = |psi: f64| -> Result<(f64, f64, f64, f64, f64)> {
        let trace_l = curves_l.pc_inverse(psi)?;
        let trace_r = curves_r.pc_inverse(psi)?;
        let q_l = face.t_l * (lw_l * drive_l + (beta_ll - curves_l.beta(trace_l)?));
        let q_r = face.t_r * (lw_r * drive_r + (curves_r.beta(trace_r)? - beta_rr));
        Ok((q_l - q_r, q_l, q_r, trace_l, trace_r))
    };
    let psi_max = curves_l.pc_max().min(curves_r.pc_max());
    let scale = face.t_l * (lw_l.abs() * drive_l.abs() + curves_l.beta_end())
        + face.t_r * (lw_r.abs() * drive_r.abs() + curves_r.beta_end())
        + 1e-300;
    let tol = FACE_SOLVE_TOL * scale;

    // the mismatch is nondecreasing in psi; bracket then bisect with a
    // secant acceleration
    let f0 = mismatch(0.0)?;
    let f1 = mismatch(psi_max)?;
    let solved = if f0.0 >= -tol {
        f0
    } else if f1.0 <= tol {
        f1
    } else {
        let (mut lo, mut hi) = (0.0, psi_max);
        let (mut flo, mut fhi) = (f0.0, f1.0);
        let mut best = f0;
        for _ in 0..200 {
            let mid = if (fhi - flo).abs() > 1e-300 {
                let secant = lo - flo * (hi - lo) / (fhi - flo);
                if secant > lo && secant < hi {
                    secant
                } else {
                    0.5 * (lo + hi)
                }
            } else {
                0.5 * (lo + hi)
            };
            best = mismatch(mid)?;
            if best.0.abs() <= tol || (hi - lo) < 1e-15 * psi_max {
                break;
            }
            if best.0 > 0.0 {
                hi = mid;
                fhi = best.0;
            } else {
                lo = mid;
                flo = best.0;
            }
        }
        best
    };
    let (_, q_l, q_r, trace_l, trace_r) = solved;
    let q_w = 0.5 * (q_l + q_r);
    let q_tot = al * ar / (al + ar) * (p_l - p_r + face.grav());
    let state = InterfaceState {
        q_w,
        q_n: q_tot - q_w,
        s_trace_l: trace_l,
        s_trace_r: trace_r,
        p_face,
    };
    Ok((q_w, q_tot - q_w, state))
}
