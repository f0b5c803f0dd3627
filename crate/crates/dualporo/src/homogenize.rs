//! Periodic cell problems on the fracture part of the unit cell and the
//! effective quantities built from them: the upscaled permeability tensor,
//! effective porosity, and the averaged matrix porosity.
//!
//! Discretization: lowest-order conforming nodal elements (P1 in 1D, Q1 in
//! 2D) on the uniform cell grid restricted to fracture cells, with periodic
//! node identification. The interface condition on the matrix boundary is
//! the natural one of the weak form, so no constraint rows are needed.

use crate::error::{Error, Result};
use crate::numerics::sparse::{solve_cg, CooBuilder};

/// Symmetric 2x2 permeability tensor of one grid cell (kxx only in 1D).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellTensor {
    pub kxx: f64,
    pub kxy: f64,
    pub kyy: f64,
}

impl CellTensor {
    pub fn isotropic(k: f64) -> Self {
        CellTensor {
            kxx: k,
            kxy: 0.0,
            kyy: k,
        }
    }

    pub fn scaled(&self, c: f64) -> Self {
        CellTensor {
            kxx: c * self.kxx,
            kxy: c * self.kxy,
            kyy: c * self.kyy,
        }
    }

    fn spd_bounds(&self) -> (f64, f64) {
        let tr = 0.5 * (self.kxx + self.kyy);
        let det = self.kxx * self.kyy - self.kxy * self.kxy;
        let disc = (tr * tr - det).max(0.0).sqrt();
        (tr - disc, tr + disc)
    }
}

/// Shape descriptors realizable exactly on a conforming grid.
#[derive(Debug, Clone)]
pub enum CellShape {
    /// Square (interval in 1D) matrix block of the given side, centered.
    CenteredBox { side: f64 },
    /// Matrix slab of the given thickness spanning the cell horizontally
    /// (normal to the second axis); identical to CenteredBox in 1D.
    HorizontalSlab { thickness: f64 },
    /// Explicit matrix mask, row-major, `true` on matrix cells.
    Custom { mask: Vec<Vec<bool>> },
}

/// The unit cell: mask, measures, matrix porosity field, permeability field.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    pub dim: usize,
    pub n: usize,
    /// row-major cell mask, true on the matrix part
    pub matrix_mask: Vec<bool>,
    pub measure_m: f64,
    pub measure_f: f64,
    /// per-cell matrix porosity (referenced on matrix cells)
    pub porosity_m: Vec<f64>,
    /// per-cell permeability
    pub perm: Vec<CellTensor>,
    pub k_min: f64,
    pub k_max: f64,
}

/// Connectivity diagnostics of the fracture set under periodic identification.
#[derive(Debug, Clone)]
pub struct ConnectivityReport {
    pub fracture_components: usize,
    /// per-direction percolation of the fracture set
    pub percolates: Vec<bool>,
    pub warnings: Vec<String>,
}

/// Effective quantities produced by the cell solves.
#[derive(Debug, Clone)]
pub struct EffectiveProps {
    pub dim: usize,
    /// homogenized tensor entries, row-major d x d
    pub k_star: Vec<f64>,
    pub phi_star: f64,
    pub phi_hat_m: f64,
    /// corrector fields, one per direction, on the periodic node grid
    pub xi: Vec<Vec<f64>>,
    pub measure_m: f64,
    pub measure_f: f64,
}

impl EffectiveProps {
    pub fn k_entry(&self, i: usize, j: usize) -> f64 {
        self.k_star[i * self.dim + j]
    }
}

fn aligned_span(extent: f64, n: usize, what: &str) -> Result<(usize, usize)> {
    if !(0.0..=1.0).contains(&extent) || extent == 0.0 {
        return Err(Error::geometry(format!("{what} must lie in (0, 1]")));
    }
    let cells = extent * n as f64;
    let m = cells.round() as usize;
    if (cells - m as f64).abs() > 1e-9 || (n - m) % 2 != 0 {
        let suggestion = (2.0 / extent).ceil() as usize * 2;
        return Err(Error::geometry(format!(
            "{what} {extent} is not representable on an n={n} grid; use n that is a multiple of {suggestion}"
        )));
    }
    let lo = (n - m) / 2;
    Ok((lo, lo + m))
}

/// Builds the cell geometry from a shape descriptor.
///
/// `porosity_m` assigns the matrix porosity at each cell center; axis-aligned
/// shapes are represented exactly so the measures are exact.
pub fn build_geometry(
    shape: &CellShape,
    dim: usize,
    n: usize,
    porosity_m: impl Fn(f64, f64) -> f64,
    perm: impl Fn(f64, f64) -> CellTensor,
) -> Result<CellGeometry> {
    if !(dim == 1 || dim == 2) {
        return Err(Error::geometry("cell dimension must be 1 or 2".to_string()));
    }
    if n < 4 {
        return Err(Error::geometry(
            "cell resolution must be at least 4".to_string(),
        ));
    }
    let num_cells = if dim == 1 { n } else { n * n };
    let mut mask = vec![false; num_cells];
    match shape {
        CellShape::CenteredBox { side } => {
            let (lo, hi) = aligned_span(*side, n, "centered box side")?;
            if dim == 1 {
                for (i, m) in mask.iter_mut().enumerate() {
                    *m = i >= lo && i < hi;
                }
            } else {
                for j in 0..n {
                    for i in 0..n {
                        mask[j * n + i] = i >= lo && i < hi && j >= lo && j < hi;
                    }
                }
            }
        }
        CellShape::HorizontalSlab { thickness } => {
            let (lo, hi) = aligned_span(*thickness, n, "slab thickness")?;
            if dim == 1 {
                for (i, m) in mask.iter_mut().enumerate() {
                    *m = i >= lo && i < hi;
                }
            } else {
                for j in 0..n {
                    for i in 0..n {
                        mask[j * n + i] = j >= lo && j < hi;
                    }
                }
            }
        }
        CellShape::Custom { mask: rows } => {
            if dim == 1 {
                if rows.len() != 1 || rows[0].len() != n {
                    return Err(Error::geometry(format!("custom 1D mask must be 1 x {n}")));
                }
                mask.copy_from_slice(&rows[0]);
            } else {
                if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                    return Err(Error::geometry(format!("custom mask must be {n} x {n}")));
                }
                for (j, row) in rows.iter().enumerate() {
                    for (i, &v) in row.iter().enumerate() {
                        mask[j * n + i] = v;
                    }
                }
            }
        }
    }
    let count_m = mask.iter().filter(|&&m| m).count();
    if count_m == 0 {
        return Err(Error::geometry("measure_m must be positive".to_string()));
    }
    if count_m == num_cells {
        return Err(Error::geometry(
            "fracture part must be nonempty".to_string(),
        ));
    }
    let measure_m = count_m as f64 / num_cells as f64;
    let h = 1.0 / n as f64;
    let mut porosity = vec![0.0; num_cells];
    let mut tensors = vec![CellTensor::isotropic(1.0); num_cells];
    let (mut k_min, mut k_max) = (f64::INFINITY, 0.0f64);
    for c in 0..num_cells {
        let (i, j) = if dim == 1 { (c, 0) } else { (c % n, c / n) };
        let (x, y) = ((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
        let phi = porosity_m(x, y);
        if mask[c] && !(phi > 0.0 && phi < 1.0) {
            return Err(Error::config(format!(
                "A.1: matrix porosity {phi} at cell ({i},{j}) outside (0,1)"
            )));
        }
        porosity[c] = phi;
        let t = perm(x, y);
        let (lo, hi) = t.spd_bounds();
        if lo <= 0.0 {
            return Err(Error::config(format!(
                "A.2: permeability tensor at cell ({i},{j}) is not positive definite"
            )));
        }
        k_min = k_min.min(lo);
        k_max = k_max.max(hi);
        tensors[c] = t;
    }
    Ok(CellGeometry {
        dim,
        n,
        matrix_mask: mask,
        measure_m,
        measure_f: 1.0 - measure_m,
        porosity_m: porosity,
        perm: tensors,
        k_min,
        k_max,
    })
}

impl CellGeometry {
    pub fn num_cells(&self) -> usize {
        if self.dim == 1 {
            self.n
        } else {
            self.n * self.n
        }
    }

    fn cell_index(&self, i: usize, j: usize) -> usize {
        if self.dim == 1 {
            i
        } else {
            j * self.n + i
        }
    }

    fn periodic_neighbors(&self, c: usize) -> Vec<usize> {
        let n = self.n;
        if self.dim == 1 {
            vec![(c + n - 1) % n, (c + 1) % n]
        } else {
            let (i, j) = (c % n, c / n);
            vec![
                self.cell_index((i + n - 1) % n, j),
                self.cell_index((i + 1) % n, j),
                self.cell_index(i, (j + n - 1) % n),
                self.cell_index(i, (j + 1) % n),
            ]
        }
    }

    /// Flood-fill connectivity of the fracture set and per-direction
    /// percolation checks; produces warnings instead of errors because the
    /// effective tensor stays well defined (blocked rows degenerate to zero).
    pub fn connectivity_report(&self) -> ConnectivityReport {
        let cells = self.num_cells();
        let mut comp = vec![usize::MAX; cells];
        let mut count = 0usize;
        for start in 0..cells {
            if self.matrix_mask[start] || comp[start] != usize::MAX {
                continue;
            }
            let mut stack = vec![start];
            comp[start] = count;
            while let Some(c) = stack.pop() {
                for nb in self.periodic_neighbors(c) {
                    if !self.matrix_mask[nb] && comp[nb] == usize::MAX {
                        comp[nb] = count;
                        stack.push(nb);
                    }
                }
            }
            count += 1;
        }
        let mut percolates = Vec::new();
        for dir in 0..self.dim {
            percolates.push(self.percolates(dir));
        }
        let mut warnings = Vec::new();
        if count > 1 {
            warnings.push(format!(
                "fracture set splits into {count} periodic components; corrector gauges are fixed per component"
            ));
        }
        for (dir, &p) in percolates.iter().enumerate() {
            if !p {
                warnings.push(format!(
                    "fracture set does not percolate in direction {}; the corresponding effective tensor row degenerates",
                    dir + 1
                ));
            }
        }
        ConnectivityReport {
            fracture_components: count,
            percolates,
            warnings,
        }
    }

    fn percolates(&self, dir: usize) -> bool {
        // BFS from the first slice, forbidding wrap across the seam in `dir`;
        // percolation means reaching the last slice adjacent to a fracture
        // cell back across the seam.
        let n = self.n;
        let slice_cells = |slice: usize| -> Vec<usize> {
            if self.dim == 1 {
                vec![slice]
            } else if dir == 0 {
                (0..n).map(|j| self.cell_index(slice, j)).collect()
            } else {
                (0..n).map(|i| self.cell_index(i, slice)).collect()
            }
        };
        let coord = |c: usize| -> usize {
            if self.dim == 1 {
                c
            } else if dir == 0 {
                c % n
            } else {
                c / n
            }
        };
        let mut seen = vec![false; self.num_cells()];
        let mut stack: Vec<usize> = slice_cells(0)
            .into_iter()
            .filter(|&c| !self.matrix_mask[c])
            .collect();
        for &c in &stack {
            seen[c] = true;
        }
        while let Some(c) = stack.pop() {
            for nb in self.periodic_neighbors(c) {
                // skip moves that wrap across the seam in `dir`
                let (a, b) = (coord(c), coord(nb));
                if (a == 0 && b == n - 1) || (a == n - 1 && b == 0) {
                    continue;
                }
                if !self.matrix_mask[nb] && !seen[nb] {
                    seen[nb] = true;
                    stack.push(nb);
                }
            }
        }
        for c in slice_cells(n - 1) {
            if seen[c] {
                // the wrap neighbor in `dir` lies in slice 0
                let wrap = match (self.dim, dir) {
                    (1, _) => (c + 1) % n,
                    (_, 0) => self.cell_index((c % n + 1) % n, c / n),
                    _ => self.cell_index(c % n, (c / n + 1) % n),
                };
                if !self.matrix_mask[wrap] {
                    return true;
                }
            }
        }
        false
    }

    fn num_nodes(&self) -> usize {
        if self.dim == 1 {
            self.n
        } else {
            self.n * self.n
        }
    }

    fn element_nodes(&self, c: usize) -> Vec<usize> {
        let n = self.n;
        if self.dim == 1 {
            vec![c, (c + 1) % n]
        } else {
            let (i, j) = (c % n, c / n);
            let (ip, jp) = ((i + 1) % n, (j + 1) % n);
            vec![j * n + i, j * n + ip, jp * n + i, jp * n + ip]
        }
    }
}

/// Q1 gradients at the four 2x2 Gauss points of the reference square.
fn q1_gauss_data(h: f64) -> Vec<([f64; 4], [[f64; 2]; 4])> {
    let g = 0.5 - 0.5 / 3.0f64.sqrt();
    let pts = [(g, g), (1.0 - g, g), (g, 1.0 - g), (1.0 - g, 1.0 - g)];
    pts.iter()
        .map(|&(u, v)| {
            let shapes = [(1.0 - u) * (1.0 - v), u * (1.0 - v), (1.0 - u) * v, u * v];
            let grads = [
                [-(1.0 - v) / h, -(1.0 - u) / h],
                [(1.0 - v) / h, -u / h],
                [-v / h, (1.0 - u) / h],
                [v / h, u / h],
            ];
            (shapes, grads)
        })
        .collect()
}

/// Solves the auxiliary periodic cell problem for direction `dir` (0-based):
/// find the periodic, zero-mean corrector whose flux K(grad xi + e_dir) is
/// divergence-free in the fracture part with the natural no-flux closure on
/// the matrix interface.
pub fn solve_cell_problem(geom: &CellGeometry, dir: usize) -> Result<Vec<f64>> {
    if dir >= geom.dim {
        return Err(Error::domain(format!(
            "direction {dir} out of range for dim {}",
            geom.dim
        )));
    }
    let n = geom.n;
    let h = 1.0 / n as f64;
    let nodes = geom.num_nodes();

    // nodes touched by at least one fracture element
    let mut active = vec![false; nodes];
    for c in 0..geom.num_cells() {
        if geom.matrix_mask[c] {
            continue;
        }
        for nd in geom.element_nodes(c) {
            active[nd] = true;
        }
    }

    // connected components of active nodes through fracture elements
    let mut comp = vec![usize::MAX; nodes];
    {
        let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); nodes];
        for c in 0..geom.num_cells() {
            if geom.matrix_mask[c] {
                continue;
            }
            let elems = geom.element_nodes(c);
            for &a in &elems {
                for &b in &elems {
                    if a != b {
                        adjacency[a].push(b);
                    }
                }
            }
        }
        let mut next = 0usize;
        for start in 0..nodes {
            if !active[start] || comp[start] != usize::MAX {
                continue;
            }
            comp[start] = next;
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &w in &adjacency[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = next;
                        stack.push(w);
                    }
                }
            }
            next += 1;
        }
        // pin the first node of each component to remove the constant nullspace
        let mut pinned = vec![false; next];
        for nd in 0..nodes {
            if active[nd] && !pinned[comp[nd]] {
                pinned[comp[nd]] = true;
                active[nd] = false; // pinned node becomes a Dirichlet-0 node
            }
        }
    }

    let mut index = vec![usize::MAX; nodes];
    let mut unknowns = 0usize;
    for nd in 0..nodes {
        if active[nd] {
            index[nd] = unknowns;
            unknowns += 1;
        }
    }
    if unknowns == 0 {
        // a single pinned node per component and nothing else: corrector is 0
        return Ok(vec![0.0; nodes]);
    }

    let mut coo = CooBuilder::new(unknowns);
    let mut rhs = vec![0.0; unknowns];
    if geom.dim == 1 {
        // P1 elements: stiffness k/h, forcing -k * e (constant per element)
        for c in 0..geom.num_cells() {
            if geom.matrix_mask[c] {
                continue;
            }
            let k = geom.perm[c].kxx;
            let nds = geom.element_nodes(c);
            let ke = [[k / h, -k / h], [-k / h, k / h]];
            let fe = [k, -k]; // -(K e)·grad(phi) integrated over the element
            for (a, &na) in nds.iter().enumerate() {
                if index[na] == usize::MAX {
                    continue;
                }
                rhs[index[na]] += fe[a];
                for (b, &nb) in nds.iter().enumerate() {
                    if index[nb] != usize::MAX {
                        coo.add(index[na], index[nb], ke[a][b]);
                    }
                }
            }
        }
    } else {
        let gauss = q1_gauss_data(h);
        let w = 0.25 * h * h; // equal weights of the 2x2 rule scaled to the cell
        for c in 0..geom.num_cells() {
            if geom.matrix_mask[c] {
                continue;
            }
            let t = geom.perm[c];
            let nds = geom.element_nodes(c);
            let e = if dir == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
            let ke_dot = |ga: [f64; 2], gb: [f64; 2]| {
                (t.kxx * ga[0] + t.kxy * ga[1]) * gb[0] + (t.kxy * ga[0] + t.kyy * ga[1]) * gb[1]
            };
            for (_, grads) in &gauss {
                for (a, &na) in nds.iter().enumerate() {
                    if index[na] == usize::MAX {
                        continue;
                    }
                    rhs[index[na]] -= w * ke_dot(e, grads[a]);
                    for (b, &nb) in nds.iter().enumerate() {
                        if index[nb] != usize::MAX {
                            coo.add(index[na], index[nb], w * ke_dot(grads[b], grads[a]));
                        }
                    }
                }
            }
        }
    }
    let a = coo.build();
    let mut x = vec![0.0; unknowns];
    solve_cg(&a, &rhs, &mut x, 1e-12, 200 * unknowns + 200)?;

    let mut xi = vec![0.0; nodes];
    for nd in 0..nodes {
        if index[nd] != usize::MAX {
            xi[nd] = x[index[nd]];
        }
    }
    // shift to zero mean over the fracture part (gauge only; the tensor
    // depends on gradients alone)
    let mut mean = 0.0;
    let mut vol = 0.0;
    let cell_vol = if geom.dim == 1 { h } else { h * h };
    for c in 0..geom.num_cells() {
        if geom.matrix_mask[c] {
            continue;
        }
        let nds = geom.element_nodes(c);
        let avg = nds.iter().map(|&nd| xi[nd]).sum::<f64>() / nds.len() as f64;
        mean += avg * cell_vol;
        vol += cell_vol;
    }
    mean /= vol;
    for nd in 0..nodes {
        if comp[nd] != usize::MAX {
            xi[nd] -= mean;
        }
    }
    Ok(xi)
}

/// Assembles the homogenized tensor from the corrector fields, using the same
/// quadrature as the stiffness assembly.
pub fn effective_tensor(geom: &CellGeometry, xi: &[Vec<f64>]) -> Result<Vec<f64>> {
    let d = geom.dim;
    if xi.len() != d {
        return Err(Error::domain(format!(
            "need {d} corrector fields, got {}",
            xi.len()
        )));
    }
    let n = geom.n;
    let h = 1.0 / n as f64;
    let mut k_star = vec![0.0; d * d];
    if d == 1 {
        for c in 0..geom.num_cells() {
            if geom.matrix_mask[c] {
                continue;
            }
            let nds = geom.element_nodes(c);
            let grad = (xi[0][nds[1]] - xi[0][nds[0]]) / h;
            k_star[0] += geom.perm[c].kxx * (grad + 1.0) * (grad + 1.0) * h;
        }
    } else {
        let gauss = q1_gauss_data(h);
        let w = 0.25 * h * h;
        for c in 0..geom.num_cells() {
            if geom.matrix_mask[c] {
                continue;
            }
            let t = geom.perm[c];
            let nds = geom.element_nodes(c);
            for (_, grads) in &gauss {
                let mut fields = [[0.0f64; 2]; 2];
                for dir in 0..2 {
                    let e = if dir == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
                    let mut g = e;
                    for (a, &nd) in nds.iter().enumerate() {
                        g[0] += xi[dir][nd] * grads[a][0];
                        g[1] += xi[dir][nd] * grads[a][1];
                    }
                    fields[dir] = g;
                }
                for i in 0..2 {
                    for j in 0..2 {
                        let gi = fields[i];
                        let gj = fields[j];
                        let flux = [t.kxx * gi[0] + t.kxy * gi[1], t.kxy * gi[0] + t.kyy * gi[1]];
                        k_star[i * 2 + j] += w * (flux[0] * gj[0] + flux[1] * gj[1]);
                    }
                }
            }
        }
    }
    for v in k_star.iter_mut() {
        *v /= geom.measure_m;
    }
    Ok(k_star)
}

/// Effective fracture porosity: the fracture porosity scaled by the measure
/// ratio |Y_f| / |Y_m| that the homogenized balance carries.
pub fn effective_porosity(phi_f_h: f64, geom: &CellGeometry) -> Result<f64> {
    if !(phi_f_h > 0.0 && phi_f_h < 1.0) {
        return Err(Error::config(format!(
            "A.1: fracture porosity {phi_f_h} outside (0,1)"
        )));
    }
    Ok(phi_f_h * geom.measure_f / geom.measure_m)
}

/// Mean matrix porosity over the matrix part.
pub fn averaged_matrix_porosity(geom: &CellGeometry) -> Result<f64> {
    let mut acc = 0.0;
    let mut count = 0usize;
    for c in 0..geom.num_cells() {
        if geom.matrix_mask[c] {
            acc += geom.porosity_m[c];
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::geometry("matrix part is empty".to_string()));
    }
    Ok(acc / count as f64)
}

/// Runs all cell solves and collects the effective properties.
pub fn upscale(geom: &CellGeometry, phi_f_h: f64) -> Result<EffectiveProps> {
    let mut xi = Vec::with_capacity(geom.dim);
    for dir in 0..geom.dim {
        xi.push(solve_cell_problem(geom, dir)?);
    }
    let k_star = effective_tensor(geom, &xi)?;
    Ok(EffectiveProps {
        dim: geom.dim,
        k_star,
        phi_star: effective_porosity(phi_f_h, geom)?,
        phi_hat_m: averaged_matrix_porosity(geom)?,
        xi,
        measure_m: geom.measure_m,
        measure_f: geom.measure_f,
    })
}

/// Corrector reconstruction: the periodic fluctuations of pressure and of the
/// Kirchhoff-transformed saturation given macroscale gradients.
pub fn reconstruct_correctors(
    props: &EffectiveProps,
    grad_p: &[f64],
    grad_beta: &[f64],
    gravity: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let nodes = props.xi[0].len();
    let mut w_p = vec![0.0; nodes];
    let mut w_s = vec![0.0; nodes];
    for dir in 0..props.dim {
        let cp = grad_p[dir] - gravity[dir];
        let cs = grad_beta[dir];
        for nd in 0..nodes {
            w_p[nd] += props.xi[dir][nd] * cp;
            w_s[nd] += props.xi[dir][nd] * cs;
        }
    }
    (w_p, w_s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn slab(n: usize) -> CellGeometry {
        build_geometry(
            &CellShape::HorizontalSlab { thickness: 0.5 },
            2,
            n,
            |_, _| 0.3,
            |_, _| CellTensor::isotropic(1.0),
        )
        .unwrap()
    }

    fn boxed(n: usize) -> CellGeometry {
        build_geometry(
            &CellShape::CenteredBox { side: 0.5 },
            2,
            n,
            |_, _| 0.3,
            |_, _| CellTensor::isotropic(1.0),
        )
        .unwrap()
    }

    #[test]
    fn measures_are_exact_for_aligned_shapes() {
        let b = boxed(64);
        assert!((b.measure_m - 0.25).abs() < 1e-14);
        assert!((b.measure_f - 0.75).abs() < 1e-14);
        let s = slab(64);
        assert!((s.measure_m - 0.5).abs() < 1e-14);
        assert!((s.measure_f - 0.5).abs() < 1e-14);
        assert!((s.measure_m + s.measure_f - 1.0).abs() < 1e-14);
    }

    #[test]
    fn degenerate_masks_are_rejected() {
        let all_false = CellShape::Custom {
            mask: vec![vec![false; 8]; 8],
        };
        let err = build_geometry(
            &all_false,
            2,
            8,
            |_, _| 0.3,
            |_, _| CellTensor::isotropic(1.0),
        );
        assert!(matches!(err, Err(Error::Geometry(msg)) if msg.contains("measure_m")));
        let all_true = CellShape::Custom {
            mask: vec![vec![true; 8]; 8],
        };
        assert!(build_geometry(
            &all_true,
            2,
            8,
            |_, _| 0.3,
            |_, _| CellTensor::isotropic(1.0)
        )
        .is_err());
    }

    #[test]
    fn misaligned_shape_reports_suggestion() {
        let err = build_geometry(
            &CellShape::CenteredBox { side: 0.3 },
            2,
            8,
            |_, _| 0.3,
            |_, _| CellTensor::isotropic(1.0),
        );
        assert!(matches!(err, Err(Error::Geometry(msg)) if msg.contains("not representable")));
    }

    #[test]
    fn slab_correctors_are_the_analytic_layered_solution() {
        let geom = slab(32);
        let xi1 = solve_cell_problem(&geom, 0).unwrap();
        // along the slab the corrector is constant (zero after the gauge shift)
        for &v in &xi1 {
            assert!(v.abs() < 1e-9, "xi_1 should vanish, got {v}");
        }
        let xi2 = solve_cell_problem(&geom, 1).unwrap();
        // across the slab: grad xi_2 + e_2 = 0 on the fracture strip
        let n = geom.n;
        let h = 1.0 / n as f64;
        for c in 0..geom.num_cells() {
            if geom.matrix_mask[c] {
                continue;
            }
            let nds = geom.element_nodes(c);
            let g = (xi2[nds[2]] - xi2[nds[0]]) / h;
            assert!((g + 1.0).abs() < 1e-8, "grad xi_2 = {g}");
        }
    }

    #[test]
    fn galerkin_orthogonality_holds() {
        // taking the corrector itself as test function zeroes the weak form
        let geom = boxed(32);
        for dir in 0..2 {
            let xi = solve_cell_problem(&geom, dir).unwrap();
            let n = geom.n;
            let h = 1.0 / n as f64;
            let gauss = q1_gauss_data(h);
            let w = 0.25 * h * h;
            let e = if dir == 0 { [1.0, 0.0] } else { [0.0, 1.0] };
            let mut acc = 0.0;
            for c in 0..geom.num_cells() {
                if geom.matrix_mask[c] {
                    continue;
                }
                let nds = geom.element_nodes(c);
                for (_, grads) in &gauss {
                    let mut g = e;
                    let mut gt = [0.0, 0.0];
                    for (a, &nd) in nds.iter().enumerate() {
                        g[0] += xi[nd] * grads[a][0];
                        g[1] += xi[nd] * grads[a][1];
                        gt[0] += xi[nd] * grads[a][0];
                        gt[1] += xi[nd] * grads[a][1];
                    }
                    acc += w * (g[0] * gt[0] + g[1] * gt[1]);
                }
            }
            assert!(acc.abs() < 1e-9, "Galerkin orthogonality violated: {acc}");
        }
    }

    #[test]
    fn slab_tensor_is_diag_ratio_and_zero() {
        let geom = slab(64);
        let props = upscale(&geom, 0.2).unwrap();
        assert!((props.k_entry(0, 0) - 1.0).abs() < 1e-8);
        assert!(props.k_entry(1, 1).abs() < 1e-8);
        assert!((props.k_entry(0, 1) - props.k_entry(1, 0)).abs() < 1e-10);
        assert!(props.k_entry(0, 1).abs() < 1e-9);
    }

    #[test]
    fn box_tensor_is_symmetric_isotropic() {
        let geom = boxed(32);
        let props = upscale(&geom, 0.2).unwrap();
        assert!((props.k_entry(0, 0) - props.k_entry(1, 1)).abs() < 1e-8);
        assert!(props.k_entry(0, 1).abs() < 1e-8);
        // Voigt bound: eigenvalues below k_max |Y_f|/|Y_m|
        let bound = geom.k_max * geom.measure_f / geom.measure_m + 1e-9;
        assert!(props.k_entry(0, 0) <= bound);
        assert!(props.k_entry(1, 1) <= bound);
    }

    #[test]
    fn tensor_scales_linearly_in_permeability() {
        let base = boxed(16);
        let scaled = build_geometry(
            &CellShape::CenteredBox { side: 0.5 },
            2,
            16,
            |_, _| 0.3,
            |_, _| CellTensor::isotropic(3.5),
        )
        .unwrap();
        let kb = upscale(&base, 0.2).unwrap();
        let ks = upscale(&scaled, 0.2).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (ks.k_entry(i, j) - 3.5 * kb.k_entry(i, j)).abs()
                        < 1e-9 * (1.0 + kb.k_entry(i, j).abs())
                );
            }
        }
    }

    #[test]
    fn self_convergence_on_centered_box() {
        let k: Vec<f64> = [16usize, 32, 64]
            .iter()
            .map(|&n| upscale(&boxed(n), 0.2).unwrap().k_entry(0, 0))
            .collect();
        let d1 = (k[0] - k[1]).abs();
        let d2 = (k[1] - k[2]).abs();
        assert!(d2 < d1, "self-convergence violated: {d1} vs {d2}");
    }

    #[test]
    fn effective_porosity_formula() {
        let geom = slab(16);
        assert!((effective_porosity(0.2, &geom).unwrap() - 0.2).abs() < 1e-14);
        let geom_box = boxed(16); // |Y_f| = 0.75, |Y_m| = 0.25
        assert!((effective_porosity(0.2, &geom_box).unwrap() - 0.6).abs() < 1e-14);
        assert!(effective_porosity(1.2, &geom).is_err());
    }

    #[test]
    fn averaged_matrix_porosity_of_linear_field() {
        let geom = build_geometry(
            &CellShape::HorizontalSlab { thickness: 0.5 },
            2,
            32,
            |x, _| 0.2 + 0.2 * x,
            |_, _| CellTensor::isotropic(1.0),
        )
        .unwrap();
        assert!((averaged_matrix_porosity(&geom).unwrap() - 0.3).abs() < 1e-13);
        let const_geom = slab(16);
        assert!((averaged_matrix_porosity(&const_geom).unwrap() - 0.3).abs() < 1e-14);
    }

    #[test]
    fn corrector_reconstruction_is_linear() {
        let geom = slab(16);
        let props = upscale(&geom, 0.2).unwrap();
        let g = [0.4, -0.2];
        let (wp, ws) = reconstruct_correctors(&props, &g, &[0.0, 0.0], &g);
        assert!(wp.iter().all(|&v| v == 0.0));
        assert!(ws.iter().all(|&v| v == 0.0));
        let (wp1, _) = reconstruct_correctors(&props, &[1.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]);
        // layered geometry, along-slab unit gradient: corrector vanishes
        assert!(wp1.iter().all(|&v| v.abs() < 1e-9));
        let (wa, _) = reconstruct_correctors(&props, &[0.6, 1.2], &[0.0, 0.0], &[0.0, 0.0]);
        let (wb, _) = reconstruct_correctors(&props, &[1.2, 2.4], &[0.0, 0.0], &[0.0, 0.0]);
        for nd in 0..wa.len() {
            assert!((2.0 * wa[nd] - wb[nd]).abs() < 1e-12);
        }
    }

    #[test]
    fn connectivity_report_flags_blocked_directions() {
        let geom = slab(16);
        let rep = geom.connectivity_report();
        assert_eq!(rep.fracture_components, 1);
        assert!(rep.percolates[0]);
        assert!(!rep.percolates[1]);
        assert_eq!(rep.warnings.len(), 1);
        let geom_box = boxed(16);
        let rep_box = geom_box.connectivity_report();
        assert!(rep_box.percolates[0] && rep_box.percolates[1]);
        assert!(rep_box.warnings.is_empty());
    }

    #[test]
    fn forcing_is_compatible_with_the_periodic_closure() {
        // the shape-function gradients sum to zero at each quadrature point,
        // so the assembled right-hand side sums to zero over every element
        // (the discrete form of the periodic + no-flux closure)
        let gauss = q1_gauss_data(0.25);
        for (shapes, grads) in &gauss {
            let sum_shapes: f64 = shapes.iter().sum();
            assert!((sum_shapes - 1.0).abs() < 1e-14);
            let gx: f64 = grads.iter().map(|g| g[0]).sum();
            let gy: f64 = grads.iter().map(|g| g[1]).sum();
            assert!(gx.abs() < 1e-14 && gy.abs() < 1e-14);
        }
    }

    #[test]
    fn deterministic_assembly() {
        let a = upscale(&boxed(24), 0.2).unwrap();
        let b = upscale(&boxed(24), 0.2).unwrap();
        assert_eq!(a.k_star, b.k_star);
        assert_eq!(a.xi, b.xi);
    }
}
