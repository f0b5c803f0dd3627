//! Action dispatch: builds the solver objects from a validated scenario
//! configuration, runs the requested pipeline, and writes deterministic
//! outputs plus a run manifest.

use crate::block::{block_step, transfer_source, BlockState};
use crate::config::ScenarioConfig;
use crate::error::{Error, Result};
use crate::fv::{GridSpec, SideBc};
use crate::homogenize::upscale;
use crate::macroscale::{MacroSolver, Regime};
use crate::micro::{build_replicated, build_strip, restrict_compare, MicroProblem};
use crate::report::{fmt_f64, write_vtk_cells, write_vtk_points, CsvValue, CsvWriter};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub theta: Option<f64>,
    pub epsilons: Option<Vec<f64>>,
    pub out_dir: Option<PathBuf>,
}

/// Worker count from the environment (reproducibility-first default of 1).
pub fn worker_count() -> usize {
    std::env::var("DUALPORO_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&v| v >= 1)
        .unwrap_or(1)
}

/// Runs one action and reports the exit code per the CLI contract:
/// 0 success, 2 solver failure, 3 configuration error, 64 usage.
pub fn dispatch(action: &str, config_path: &Path, overrides: &Overrides) -> i32 {
    let known = [
        "curves",
        "homogenize",
        "macro",
        "micro",
        "block-demo",
        "convergence",
    ];
    if !known.contains(&action) {
        eprintln!(
            "unknown action '{action}'; expected one of: {}",
            known.join(", ")
        );
        return EXIT_USAGE;
    }
    match run_action(action, config_path, overrides) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Config(_) | Error::Domain(_) | Error::Geometry(_) => EXIT_CONFIG,
                _ => EXIT_SOLVER,
            }
        }
    }
}

fn run_action(action: &str, config_path: &Path, overrides: &Overrides) -> Result<()> {
    let started = Instant::now();
    let config_text = std::fs::read_to_string(config_path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", config_path.display())))?;
    let mut config = ScenarioConfig::from_str(&config_text)?;
    if let Some(theta) = overrides.theta {
        config.regime.theta = theta;
    }
    let violations = config.validate();
    if !violations.is_empty() {
        return Err(Error::config(violations.join("; ")));
    }
    let out_dir = overrides
        .out_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from(&config.output.directory));
    std::fs::create_dir_all(&out_dir)?;

    let outputs = match action {
        "curves" => action_curves(&config, &out_dir)?,
        "homogenize" => action_homogenize(&config, &out_dir)?,
        "macro" => action_macro(&config, &out_dir)?,
        "micro" => action_micro(&config, &out_dir, overrides)?,
        "block-demo" => action_block_demo(&config, &out_dir)?,
        "convergence" => action_convergence(&config, &out_dir, overrides)?,
        _ => unreachable!(),
    };

    let mut manifest = String::new();
    manifest.push_str(&format!(
        "config_sha256={:x}\n",
        Sha256::digest(config_text.as_bytes())
    ));
    manifest.push_str(&format!("version={}\n", env!("CARGO_PKG_VERSION")));
    manifest.push_str(&format!("action={action}\n"));
    if let Some(theta) = overrides.theta {
        manifest.push_str(&format!("theta_override={}\n", fmt_f64(theta)));
    }
    for f in &outputs {
        manifest.push_str(&format!("output={f}\n"));
    }
    manifest.push_str(&format!("wall_ms={}\n", started.elapsed().as_millis()));
    std::fs::write(out_dir.join("manifest.txt"), manifest)?;
    Ok(())
}

fn action_curves(config: &ScenarioConfig, out_dir: &Path) -> Result<Vec<String>> {
    let pair = config.build_pair()?;
    let mut csv = CsvWriter::new(&[
        "s", "pc_f", "pc_m", "mobw_f", "mobn_f", "mobw_m", "mobn_m", "alpha_f", "beta_f",
        "alpha_m", "beta_m", "Gw_f", "Gn_f", "Gw_m", "Gn_m", "P_of_S",
    ]);
    let samples = 1001;
    for k in 0..samples {
        let s = k as f64 / (samples - 1) as f64;
        csv.row(&[
            s,
            pair.fracture.pc(s)?,
            pair.matrix.pc(s)?,
            pair.fracture.mobility_w(s),
            pair.fracture.mobility_n(s),
            pair.matrix.mobility_w(s),
            pair.matrix.mobility_n(s),
            pair.fracture.alpha(s)?,
            pair.fracture.beta(s)?,
            pair.matrix.alpha(s)?,
            pair.matrix.beta(s)?,
            pair.fracture.g_w(s)?,
            pair.fracture.g_n(s)?,
            pair.matrix.g_w(s)?,
            pair.matrix.g_n(s)?,
            pair.equilibrium_saturation(s)?,
        ]);
    }
    let path = out_dir.join("curves.csv");
    csv.write_to(&path)?;
    Ok(vec!["curves.csv".to_string()])
}

fn action_homogenize(config: &ScenarioConfig, out_dir: &Path) -> Result<Vec<String>> {
    let geom = config.build_cell_geometry()?;
    for w in geom.connectivity_report().warnings {
        eprintln!("warning: {w}");
    }
    let props = upscale(&geom, config.cell.porosity_fracture)?;
    let mut csv = CsvWriter::new(&["quantity", "value"]);
    let rows = [
        ("K11", props.k_entry(0, 0)),
        ("K12", props.k_entry(0, 1)),
        ("K21", props.k_entry(1, 0)),
        ("K22", props.k_entry(1, 1)),
        ("phi_star", props.phi_star),
        ("phi_hat_m", props.phi_hat_m),
        ("measure_m", props.measure_m),
        ("measure_f", props.measure_f),
    ];
    for (name, value) in rows {
        csv.row_mixed(&[CsvValue::Text(name.to_string()), CsvValue::Float(value)]);
    }
    csv.write_to(&out_dir.join("effective.csv"))?;
    let mut outputs = vec!["effective.csv".to_string()];
    let n = geom.n;
    let h = 1.0 / n as f64;
    for (dir, xi) in props.xi.iter().enumerate() {
        let name = format!("xi_{}.vtk", dir + 1);
        write_vtk_points(
            &out_dir.join(&name),
            "cell-problem corrector",
            &format!("xi_{}", dir + 1),
            n,
            n,
            h,
            h,
            xi,
        )?;
        outputs.push(name);
    }
    Ok(outputs)
}

fn build_macro_solver(config: &ScenarioConfig, workers: usize) -> Result<MacroSolver> {
    let pair = config.build_pair()?;
    let geom = config.build_cell_geometry()?;
    let props = upscale(&geom, config.cell.porosity_fracture)?;
    let regime = config.regime()?;
    let spec = GridSpec::line(
        config.macro_grid.nx,
        config.macro_grid.lx,
        SideBc::NoFlow,
        SideBc::Dirichlet,
    );
    let block_grid = if regime == Regime::Critical {
        Some(config.build_block_grid()?)
    } else {
        None
    };
    let mut solver = MacroSolver::new(
        spec,
        &props,
        pair,
        regime,
        [config.boundary.gravity_x, 0.0],
        config.boundary.p_gamma1,
        config.boundary.s_gamma1,
        block_grid,
        config.macro_options(workers),
    )?;
    let (f_i, f_p) = config.source_fields();
    solver.set_sources(
        f_i,
        f_p,
        config.sources.injection_saturation_w,
        props.measure_f / props.measure_m,
    );
    Ok(solver)
}

fn action_macro(config: &ScenarioConfig, out_dir: &Path) -> Result<Vec<String>> {
    let solver = build_macro_solver(config, worker_count())?;
    let nx = config.macro_grid.nx;
    let run = solver.run(vec![config.initial.saturation; nx])?;
    let mut csv = CsvWriter::new(&[
        "t",
        "dt",
        "s_min",
        "s_max",
        "s_mean",
        "stored_mass",
        "influx_rate",
        "source_rate",
        "coupling_rate",
        "drift",
        "newton_iters",
    ]);
    for row in &run.ledger {
        csv.row_mixed(&[
            CsvValue::Float(row.t),
            CsvValue::Float(row.dt),
            CsvValue::Float(row.s_min),
            CsvValue::Float(row.s_max),
            CsvValue::Float(row.s_mean),
            CsvValue::Float(row.stored_mass),
            CsvValue::Float(row.influx),
            CsvValue::Float(row.source),
            CsvValue::Float(row.coupling),
            CsvValue::Float(row.drift),
            CsvValue::Int(row.newton_iters as i64),
        ]);
    }
    csv.write_to(&out_dir.join("macro_series.csv"))?;
    let mut outputs = vec!["macro_series.csv".to_string()];
    let dx = config.macro_grid.lx / nx as f64;
    for (idx, snap) in run.snapshots.iter().enumerate() {
        let s_name = format!("S_{idx:04}.vtk");
        let p_name = format!("P_{idx:04}.vtk");
        write_vtk_cells(
            &out_dir.join(&s_name),
            "macro saturation",
            "S",
            nx,
            1,
            dx,
            1.0,
            &snap.s,
        )?;
        write_vtk_cells(
            &out_dir.join(&p_name),
            "macro global pressure",
            "P",
            nx,
            1,
            dx,
            1.0,
            &snap.p,
        )?;
        outputs.push(s_name);
        outputs.push(p_name);
    }
    Ok(outputs)
}

fn build_micro_problem(config: &ScenarioConfig, epsilon: f64) -> Result<MicroProblem> {
    let pair = config.build_pair()?;
    let geom = config.build_cell_geometry()?;
    let phi_m = config.cell.porosity_matrix;
    match config.micro.layout.as_str() {
        "strip" => build_strip(
            &geom,
            epsilon,
            config.regime.theta,
            config.micro.resolution_per_cell,
            config.macro_grid.nx,
            config.macro_grid.lx,
            pair,
            config.cell.porosity_fracture,
            move |_| phi_m,
            config.cell.permeability,
            config.boundary.gravity_x,
            config.boundary.p_gamma1,
            config.boundary.s_gamma1,
        ),
        "replicated" => build_replicated(
            &geom,
            epsilon,
            config.regime.theta,
            config.micro.resolution_per_cell,
            pair,
            config.cell.porosity_fracture,
            config.cell.permeability,
            [config.boundary.gravity_x, 0.0],
            config.boundary.p_gamma1,
            config.boundary.s_gamma1,
        ),
        other => Err(Error::config(format!("micro: unknown layout '{other}'"))),
    }
}

fn initial_matrix_saturation(config: &ScenarioConfig) -> Option<f64> {
    if config.initial.matrix_saturation >= 0.0 {
        Some(config.initial.matrix_saturation)
    } else {
        None
    }
}

fn action_micro(
    config: &ScenarioConfig,
    out_dir: &Path,
    overrides: &Overrides,
) -> Result<Vec<String>> {
    let epsilon = overrides
        .epsilons
        .as_ref()
        .and_then(|v| v.first().copied())
        .unwrap_or(config.micro.epsilon);
    let problem = build_micro_problem(config, epsilon)?;
    let run = problem.run(
        config.initial.saturation,
        initial_matrix_saturation(config),
        config.time.t_end,
        config.time.dt_init,
        config.time.dt_max,
        config.time.snapshot_every,
    )?;
    let mut csv = CsvWriter::new(&[
        "t",
        "dt",
        "s_min",
        "s_max",
        "mean_fracture_s",
        "mean_matrix_s",
        "stored_mass",
        "drift",
        "newton_iters",
    ]);
    for row in &run.ledger {
        csv.row_mixed(&[
            CsvValue::Float(row.t),
            CsvValue::Float(row.dt),
            CsvValue::Float(row.s_min),
            CsvValue::Float(row.s_max),
            CsvValue::Float(row.mean_fracture_s),
            CsvValue::Float(row.mean_matrix_s),
            CsvValue::Float(row.stored_mass),
            CsvValue::Float(row.drift),
            CsvValue::Int(row.newton_iters as i64),
        ]);
    }
    csv.write_to(&out_dir.join("micro_series.csv"))?;
    let mut outputs = vec!["micro_series.csv".to_string()];
    let spec = &problem.model.spec;
    for (idx, snap) in run.snapshots.iter().enumerate() {
        let s_name = format!("S_micro_{idx:04}.vtk");
        write_vtk_cells(
            &out_dir.join(&s_name),
            "fine-scale saturation",
            "S",
            spec.nx,
            spec.ny,
            spec.dx(),
            spec.dy(),
            &snap.s,
        )?;
        outputs.push(s_name);
    }
    Ok(outputs)
}

fn action_block_demo(config: &ScenarioConfig, out_dir: &Path) -> Result<Vec<String>> {
    let pair = config.build_pair()?;
    let grid = config.build_block_grid()?;
    let demo = &config.block_demo;
    let boundary_at = |t: f64| -> f64 {
        let mut value = demo.boundary_values[0];
        for (tk, vk) in demo.boundary_times.iter().zip(&demo.boundary_values) {
            if t >= *tk {
                value = *vk;
            }
        }
        value
    };
    let mut state = BlockState::uniform(&grid, boundary_at(0.0));
    let mut csv = CsvWriter::new(&["t", "boundary_s", "mean_s", "Q_w"]);
    csv.row(&[
        0.0,
        boundary_at(0.0),
        state.volume_weighted_mean(&grid),
        0.0,
    ]);
    let mut outputs = vec!["block_series.csv".to_string()];
    let mut step = 0usize;
    while state.t < demo.t_end * (1.0 - 1e-12) {
        let dt = demo.dt.min(demo.t_end - state.t);
        let b = boundary_at(state.t + dt);
        let new = block_step(&state, &grid, &pair.matrix, b, dt)?;
        let q = transfer_source(&state, &new, &grid, dt)?;
        state = new;
        step += 1;
        csv.row(&[state.t, b, state.volume_weighted_mean(&grid), q]);
        if demo.snapshot_every > 0 && step % demo.snapshot_every == 0 {
            let name = format!("block_s_{step:04}.csv");
            let mut prof = CsvWriter::new(&["x", "s"]);
            let n = grid.num_cells();
            for (c, &s) in state.s.iter().enumerate() {
                let x = (c as f64 + 0.5) / n as f64 * config.cell.extent;
                prof.row(&[x, s]);
            }
            prof.write_to(&out_dir.join(&name))?;
            outputs.push(name);
        }
    }
    csv.write_to(&out_dir.join("block_series.csv"))?;
    Ok(outputs)
}

/// Matrix-side reference for the fine-vs-upscaled comparison: block means in
/// the critical regime, the equilibrium image in the moderate regime, and
/// the frozen initial value in the very-high regime.
fn matrix_reference(
    solver: &MacroSolver,
    run: &crate::macroscale::MacroRun,
    config: &ScenarioConfig,
) -> Result<Vec<f64>> {
    match solver.regime {
        Regime::Critical => Ok(run
            .blocks
            .as_ref()
            .expect("critical run carries blocks")
            .means()),
        Regime::Moderate => run
            .state
            .s
            .iter()
            .map(|&s| solver.model.pair.equilibrium_saturation(s.clamp(0.0, 1.0)))
            .collect(),
        Regime::VeryHigh => {
            let s0m = match initial_matrix_saturation(config) {
                Some(v) => v,
                None => solver
                    .model
                    .pair
                    .equilibrium_saturation(config.initial.saturation)?,
            };
            Ok(vec![s0m; run.state.s.len()])
        }
    }
}

fn action_convergence(
    config: &ScenarioConfig,
    out_dir: &Path,
    overrides: &Overrides,
) -> Result<Vec<String>> {
    let epsilons = overrides
        .epsilons
        .clone()
        .unwrap_or_else(|| vec![1.0 / 8.0, 1.0 / 16.0, 1.0 / 32.0]);
    if epsilons.is_empty() {
        return Err(Error::config(
            "convergence needs at least one epsilon".to_string(),
        ));
    }
    let solver = build_macro_solver(config, worker_count())?;
    let nx = config.macro_grid.nx;
    let macro_run = solver.run(vec![config.initial.saturation; nx])?;
    let matrix_ref = matrix_reference(&solver, &macro_run, config)?;
    let dx = config.macro_grid.lx / nx as f64;

    let mut csv = CsvWriter::new(&["epsilon", "errL2_fracture", "errL2_matrix", "runtime_s"]);
    for &eps in &epsilons {
        let t0 = Instant::now();
        let problem = build_micro_problem(config, eps)?;
        let run = problem.run(
            config.initial.saturation,
            initial_matrix_saturation(config),
            config.time.t_end,
            config.time.dt_init,
            config.time.dt_max,
            0,
        )?;
        let (e_f, e_m) =
            restrict_compare(&problem, &run.state.s, &macro_run.state.s, &matrix_ref, dx)?;
        csv.row(&[eps, e_f, e_m, t0.elapsed().as_secs_f64()]);
    }
    csv.write_to(&out_dir.join("convergence.csv"))?;
    Ok(vec!["convergence.csv".to_string()])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write_config(dir: &Path, text: &str) -> PathBuf {
        let path = dir.join("scenario.toml");
        std::fs::write(&path, text).unwrap();
        path
    }

    #[test]
    fn unknown_action_is_usage_error() {
        let td = tempfile::tempdir().unwrap();
        let cfg = write_config(td.path(), "");
        assert_eq!(
            dispatch("frobnicate", &cfg, &Overrides::default()),
            EXIT_USAGE
        );
    }

    #[test]
    fn invalid_config_is_config_error() {
        let td = tempfile::tempdir().unwrap();
        let cfg = write_config(td.path(), "[cell]\nporosity_matrix = 1.5\n");
        let over = Overrides {
            out_dir: Some(td.path().join("out")),
            ..Default::default()
        };
        assert_eq!(dispatch("curves", &cfg, &over), EXIT_CONFIG);
    }

    #[test]
    fn curves_action_writes_csv_and_manifest() {
        let td = tempfile::tempdir().unwrap();
        let cfg = write_config(td.path(), "");
        let out = td.path().join("out");
        let over = Overrides {
            out_dir: Some(out.clone()),
            ..Default::default()
        };
        assert_eq!(dispatch("curves", &cfg, &over), EXIT_OK);
        let text = std::fs::read_to_string(out.join("curves.csv")).unwrap();
        assert_eq!(text.lines().count(), 1002); // header + 1001 samples
        assert!(out.join("manifest.txt").exists());
    }

    #[test]
    fn curves_output_is_byte_identical_across_runs() {
        let td = tempfile::tempdir().unwrap();
        let cfg = write_config(td.path(), "[regime]\ntheta = 1.0\n");
        let out_a = td.path().join("a");
        let out_b = td.path().join("b");
        for out in [&out_a, &out_b] {
            let over = Overrides {
                out_dir: Some(out.clone()),
                ..Default::default()
            };
            assert_eq!(dispatch("curves", &cfg, &over), EXIT_OK);
        }
        let a = std::fs::read(out_a.join("curves.csv")).unwrap();
        let b = std::fs::read(out_b.join("curves.csv")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn homogenize_action_writes_effective_table() {
        let td = tempfile::tempdir().unwrap();
        let cfg = write_config(td.path(), "[cell]\nn = 16\n");
        let out = td.path().join("out");
        let over = Overrides {
            out_dir: Some(out.clone()),
            ..Default::default()
        };
        assert_eq!(dispatch("homogenize", &cfg, &over), EXIT_OK);
        let text = std::fs::read_to_string(out.join("effective.csv")).unwrap();
        assert!(text.contains("K11"));
        assert!(text.contains("phi_hat_m"));
        assert!(out.join("xi_1.vtk").exists());
        assert!(out.join("xi_2.vtk").exists());
    }

    #[test]
    fn homogenize_accepts_custom_masks() {
        let td = tempfile::tempdir().unwrap();
        // 8x8 plus-shaped matrix block away from the borders
        let mut rows = vec![vec![false; 8]; 8];
        for j in 2..6 {
            for i in 3..5 {
                rows[j][i] = true;
                rows[i][j] = true;
            }
        }
        let mask_text: String = rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&b| if b { '1' } else { '0' })
                    .collect::<String>()
                    + "\n"
            })
            .collect();
        let mask_path = td.path().join("mask.txt");
        std::fs::write(&mask_path, mask_text).unwrap();
        let cfg = write_config(
            td.path(),
            &format!(
                "[cell]\nshape = \"custom\"\nn = 8\nmask_file = \"{}\"\n",
                mask_path.display()
            ),
        );
        let out = td.path().join("out");
        let over = Overrides {
            out_dir: Some(out.clone()),
            ..Default::default()
        };
        assert_eq!(dispatch("homogenize", &cfg, &over), EXIT_OK);
        let text = std::fs::read_to_string(out.join("effective.csv")).unwrap();
        // 12 matrix cells of 64: plus shape measure
        assert!(text.contains("measure_m"));
    }

    #[test]
    fn block_demo_writes_series() {
        let td = tempfile::tempdir().unwrap();
        let cfg = write_config(
            td.path(),
            "[block_demo]\nboundary_times = [0.0, 0.05]\nboundary_values = [0.2, 0.9]\nt_end = 0.1\ndt = 5e-3\n[block]\ncells = 16\n",
        );
        let out = td.path().join("out");
        let over = Overrides {
            out_dir: Some(out.clone()),
            ..Default::default()
        };
        assert_eq!(dispatch("block-demo", &cfg, &over), EXIT_OK);
        let text = std::fs::read_to_string(out.join("block_series.csv")).unwrap();
        assert!(text.lines().count() > 10);
    }

    #[test]
    fn convergence_writes_one_row_per_epsilon() {
        let td = tempfile::tempdir().unwrap();
        let cfg = write_config(
            td.path(),
            "[regime]\ntheta = 1.0\n[macro_grid]\nnx = 16\n[time]\nt_end = 0.01\ndt_init = 2e-3\ndt_max = 2e-3\n[cell]\nn = 16\n[micro]\nresolution_per_cell = 8\n[block]\ncells = 8\n",
        );
        let out = td.path().join("out");
        let over = Overrides {
            out_dir: Some(out.clone()),
            epsilons: Some(vec![0.125, 0.0625]),
            ..Default::default()
        };
        assert_eq!(dispatch("convergence", &cfg, &over), EXIT_OK);
        let text = std::fs::read_to_string(out.join("convergence.csv")).unwrap();
        assert_eq!(text.lines().count(), 3); // header + 2 epsilons
    }
}
