use hhk::gexp::{gexp_eval, prior_enumerate};
use hhk::model::{derive, validate};
use hhk::stationary::{expected_cost_closed, portfolio_pi, solve};
use hhk::tracking::{kbound_holds, optimal_path, write_paths_csv, CSV_COLUMNS};
use hhk::{Driver, Error, Lattice, ModelParams, TimeGrid};

fn reference_constants() -> hhk::DerivedConstants {
    derive(&validate(&ModelParams::reference()).unwrap()).unwrap()
}

#[test]
fn params_from_json_solve_to_budget() {
    let json = serde_json::to_string(&ModelParams::reference()).unwrap();
    let p: ModelParams = serde_json::from_str(&json).unwrap();
    let d = derive(&validate(&p).unwrap()).unwrap();
    let sol = solve(&d);
    assert!((sol.psi - p.w).abs() < 1e-9 * p.w);
    assert!((expected_cost_closed(p.eta, sol.k, &d) - p.w).abs() < 1e-9 * p.w);
}

#[test]
fn portfolio_ignores_wealth_and_weight() {
    let base = portfolio_pi(&reference_constants());
    for (w, eta) in [(1.0, 1.0), (50.0, 1.0), (5.0, 0.2), (0.3, 7.0)] {
        let p = ModelParams { w, eta, ..ModelParams::reference() };
        let d = derive(&validate(&p).unwrap()).unwrap();
        assert!((portfolio_pi(&d) - base).abs() < 1e-12 * base.abs());
    }
}

#[test]
fn single_precision_matches_double() {
    let p32 = hhk::model::ModelParams::<f32>::reference();
    let d32 = derive(&validate(&p32).unwrap()).unwrap();
    let d64 = reference_constants();
    assert!(((d32.k as f64) - d64.k).abs() < 1e-4 * d64.k);
    assert!(((portfolio_pi(&d32) as f64) - portfolio_pi(&d64)).abs() < 1e-3 * portfolio_pi(&d64));
}

#[test]
fn invalid_params_are_rejected() {
    let p = ModelParams { a_prime: 0.1, ..ModelParams::reference() };
    assert!(matches!(validate(&p), Err(Error::OrderingViolation(_))));
    let p = ModelParams { delta: 0.01, ..ModelParams::reference() };
    assert!(matches!(validate(&p), Err(Error::IllPosed { .. })));
    let p = ModelParams { sigma: -0.1, ..ModelParams::reference() };
    assert!(matches!(validate(&p), Err(Error::NonPositive { .. })));
}

#[test]
fn optimal_path_tracks_and_writes() {
    let d = reference_constants();
    let grid = TimeGrid::new(5.0, 0.01).unwrap();
    let paths: Vec<_> = (0..3).map(|i| optimal_path(&grid, &d, d.theta, 11, i).unwrap()).collect();
    for gp in &paths {
        assert!(gp.y.iter().zip(&gp.level).all(|(y, l)| *y >= l * (1.0 - 1e-12)));
        assert!(gp.c.windows(2).all(|w| w[1] >= w[0]));
        assert!(kbound_holds(&gp.y, &gp.c, d.params.eta, d.params.beta));
    }
    let again = optimal_path(&grid, &d, d.theta, 11, 0).unwrap();
    assert_eq!(again.c, paths[0].c);

    let mut buf = Vec::new();
    write_paths_csv(&mut buf, &paths).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(CSV_COLUMNS));
    assert_eq!(lines.count(), 3 * grid.len());
}

#[test]
fn lattice_recursion_equals_enumeration() {
    let lat = Lattice::new(4, 0.05).unwrap();
    let driver = Driver::inf(-0.2, 0.3).unwrap();
    let payoff = |b: &[f64]| b.last().unwrap().sin() + 0.5 * b.iter().cloned().fold(f64::MIN, f64::max);
    let rec = gexp_eval(&driver, payoff, &lat).unwrap();
    let brute = prior_enumerate(&driver, payoff, &lat).unwrap();
    assert!((rec - brute).abs() < 1e-10, "{rec} vs {brute}");
}
