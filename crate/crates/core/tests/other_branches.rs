//! Horizons outside the default acceptance set.

use horizon_core::catalog::{build, Branch, EntryName, EntrySpec};
use horizon_core::verify::{self, VerifyOptions};
use horizon_core::{expansion, foliation};

#[test]
fn kerr_inner_horizon_off_equator() {
    let sol = build(&EntrySpec::new(EntryName::Kerr).branch(Branch::Inner)).unwrap();
    let h = 1e-4;
    for y in [vec![0.0, 0.3, 0.0], vec![0.0, 2.8, 0.0]] {
        let fmap = foliation::evolve_stencil(&sol, std::slice::from_ref(&y), h).unwrap();
        let rec = foliation::pullback_metric_jet(&sol, &fmap, 0, h, 3).unwrap();
        let dev = expansion::compare(&sol.closed_form_data, &sol, &rec, 1e-5).unwrap();
        assert!(dev.max_deviation < 1e-7, "{y:?}: {}", dev.max_deviation);
        assert!(dev.slope_within(1.9, 2.1), "{y:?}: {:?}", dev.slope);
    }
}

#[test]
fn taub_nut_minus_and_misner_positive_alpha() {
    let options = VerifyOptions {
        entries: vec![
            EntrySpec::new(EntryName::TaubNut)
                .branch(Branch::Minus)
                .m(0.3)
                .l(-0.8),
            EntrySpec::new(EntryName::Misner).alpha(3.0),
            EntrySpec::new(EntryName::Kerr).a(0.9),
        ],
        theta_grid: 3,
        global_checks: false,
        ..VerifyOptions::default()
    };
    let report = verify::run(&options);
    for c in &report.checks {
        assert!(c.passed, "{c:?}");
    }
}
