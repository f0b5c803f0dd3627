//! Property tests of the constitutive-transform invariants.

use dualporo::petro::{CurvePair, CurveParams, MediumCurves, MediumId};
use proptest::prelude::*;

fn arbitrary_params() -> impl Strategy<Value = (CurveParams, CurveParams)> {
    // exponents, viscosities and curvature within the validated family;
    // the shared entry pressure keeps the pair admissible
    (
        1.0f64..3.0,
        1.0f64..3.0,
        1.0f64..4.0,
        1.0f64..4.0,
        0.0f64..0.9,
        0.0f64..0.9,
        0.5f64..2.0,
    )
        .prop_map(|(aw, an, mw, mn, cf, cm, pe)| {
            (
                CurveParams {
                    medium: MediumId::Fracture,
                    exp_w: aw,
                    exp_n: an,
                    mu_w: mw,
                    mu_n: mn,
                    entry_pressure: pe,
                    shape_c: cf,
                },
                CurveParams {
                    medium: MediumId::Matrix,
                    exp_w: an,
                    exp_n: aw,
                    mu_w: mn,
                    mu_n: mw,
                    entry_pressure: pe,
                    shape_c: cm,
                },
            )
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn kirchhoff_round_trip_across_the_family((fp, _mp) in arbitrary_params(), s in 0.0f64..1.0) {
        let curves = MediumCurves::new(fp).unwrap();
        let b = curves.beta(s).unwrap();
        let back = curves.beta_inverse(b).unwrap();
        // round trip through the same table is limited only by the root find
        prop_assert!((curves.beta(back).unwrap() - b).abs() <= 1e-10 * curves.beta_end());
    }

    #[test]
    fn phase_pressure_identity_and_sandwich((fp, _mp) in arbitrary_params(), s in 0.0f64..=1.0, pg in -10.0f64..10.0) {
        let curves = MediumCurves::new(fp).unwrap();
        let (pw, pn) = curves.phase_pressures(pg, s).unwrap();
        prop_assert!((pn - pw - curves.pc(s).unwrap()).abs() <= 1e-12);
        prop_assert!(pw <= pg + 1e-12 && pg <= pn + 1e-12);
    }

    #[test]
    fn equilibrium_map_monotone_with_fixed_endpoints((fp, mp) in arbitrary_params()) {
        let pair = CurvePair::new(
            MediumCurves::new(fp).unwrap(),
            MediumCurves::new(mp).unwrap(),
        )
        .unwrap();
        prop_assert!(pair.equilibrium_saturation(0.0).unwrap().abs() <= 1e-10);
        prop_assert!((pair.equilibrium_saturation(1.0).unwrap() - 1.0).abs() <= 1e-10);
        let mut prev = -1e-9;
        for k in 0..=64 {
            let v = pair.equilibrium_saturation(k as f64 / 64.0).unwrap();
            prop_assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn kirchhoff_coupling_monotone_with_fixed_endpoints((fp, mp) in arbitrary_params()) {
        let pair = CurvePair::new(
            MediumCurves::new(fp).unwrap(),
            MediumCurves::new(mp).unwrap(),
        )
        .unwrap();
        let end = pair.fracture.beta_end();
        prop_assert!(pair.kirchhoff_coupling(0.0).unwrap().abs() <= 1e-12);
        prop_assert!(
            (pair.kirchhoff_coupling(end).unwrap() - pair.matrix.beta_end()).abs()
                <= 1e-9 * pair.matrix.beta_end().max(1e-30)
        );
        let mut prev = -1e-12;
        for k in 0..=64 {
            let v = pair.kirchhoff_coupling(end * k as f64 / 64.0).unwrap();
            prop_assert!(v + 1e-12 >= prev);
            prev = v;
        }
    }

    #[test]
    fn energy_density_nonpositive_and_nondecreasing((fp, _mp) in arbitrary_params()) {
        let curves = MediumCurves::new(fp).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for k in 0..=32 {
            let v = curves.energy_density(k as f64 / 32.0).unwrap();
            prop_assert!(v <= 1e-14);
            prop_assert!(v >= prev - 1e-14);
            prev = v;
        }
        prop_assert!(curves.energy_density(1.0).unwrap().abs() <= 1e-14);
    }
}
