//! Builds the reference fracture/matrix curve pair and walks through the
//! derived transforms: capillary pressure, mobilities, the Kirchhoff
//! transform and its inverse, the pressure offsets behind the global
//! pressure, and the fracture->matrix equilibrium map.
//!
//! Run with: cargo run --example curve_transforms

use dualporo::petro::CurvePair;

fn main() -> dualporo::Result<()> {
    let pair = CurvePair::reference()?;
    let f = &pair.fracture;
    let m = &pair.matrix;

    println!("reference curve pair");
    println!("  fracture: pc(s) = 1 - s            mobilities s^2, (1-s)^2");
    println!("  matrix:   pc(s) = (1-s)(1+s/2)     mobilities s^2, (1-s)^2");
    println!();
    println!(
        "  beta_f(1) = {:.12}   (Kirchhoff range of the fracture)",
        f.beta_end()
    );
    println!("  beta_m(1) = {:.12}", m.beta_end());
    println!(
        "  G_n(0)    = {:.12}   (pressure offset constant, fracture)",
        f.gn0()
    );
    println!();

    println!(
        "{:>6} {:>10} {:>10} {:>12} {:>12} {:>12} {:>12}",
        "s", "pc_f", "pc_m", "beta_f", "G_w_f", "G_n_f", "P(s)"
    );
    for k in 0..=10 {
        let s = k as f64 / 10.0;
        println!(
            "{:>6.2} {:>10.5} {:>10.5} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.6}",
            s,
            f.pc(s)?,
            m.pc(s)?,
            f.beta(s)?,
            f.g_w(s)?,
            f.g_n(s)?,
            pair.equilibrium_saturation(s)?,
        );
    }
    println!();

    // phase pressures bracket the global pressure and reproduce pc exactly
    let (pw, pn) = f.phase_pressures(2.0, 0.4)?;
    println!("phase pressures at P = 2, s = 0.4: p_w = {pw:.6}, p_n = {pn:.6}");
    println!(
        "  p_n - p_w = {:.12} = pc(0.4) = {:.12}",
        pn - pw,
        f.pc(0.4)?
    );

    // Kirchhoff round trip
    let b = f.beta(0.37)?;
    println!(
        "beta round trip: beta(0.37) = {b:.6e}, beta^-1 back = {:.12}",
        f.beta_inverse(b)?
    );

    // the Kirchhoff-level coupling map fixes both endpoints
    println!(
        "coupling map M: M(0) = {:.2e}, M(beta_f(1)) = {:.6e} (= beta_m(1) = {:.6e})",
        pair.kirchhoff_coupling(0.0)?,
        pair.kirchhoff_coupling(f.beta_end())?,
        m.beta_end()
    );
    println!("Lipschitz bound of M (sampled): {:.3}", pair.lipschitz_m());
    Ok(())
}
