use pansim_core::collateral::{check_relation, lyl_from_gdp, predict_gdp, predict_lyl, train_collateral, CollateralConfig, QuarterlyNpis};
use pansim_core::synthetic::{gdp_formula, lyl_formula, synthetic_collateral, CollateralSpec};
use pansim_core::Matrix;

#[test]
fn generator_relation_is_learned() {
    let data = synthetic_collateral(&CollateralSpec::default());
    let model = train_collateral(&data.npis, &data.econ, &CollateralConfig::default()).unwrap();
    assert!(model.gdp_gate.passed && model.lyl_gate.passed);
    let r2 = model.composed_validation_r2.unwrap();
    assert!(r2 >= 0.85, "composed validation R² {r2}");

    // composition is exactly the two-step application
    let gdp = predict_gdp(&model, &data.npis).unwrap();
    assert_eq!(predict_lyl(&model, &data.npis).unwrap(), lyl_from_gdp(&model, &gdp).unwrap());

    // zero NPIs land near the generator's baseline
    let zero = QuarterlyNpis {
        levels: Matrix::zeros(1, data.npis.npi_names.len()),
        periods: data.npis.periods[..1].to_vec(),
        ..data.npis.clone()
    };
    let base = predict_lyl(&model, &zero).unwrap()[0];
    let truth = lyl_formula(gdp_formula(&[0.0, 0.0, 0.0]));
    assert!(base >= 0.0);
    assert!((base - truth).abs() < 0.25 * truth, "{base} vs {truth}");
}

#[test]
fn training_is_deterministic() {
    let data = synthetic_collateral(&CollateralSpec::default());
    let cfg = CollateralConfig::default();
    assert_eq!(
        train_collateral(&data.npis, &data.econ, &cfg).unwrap(),
        train_collateral(&data.npis, &data.econ, &cfg).unwrap()
    );
}

#[test]
fn exact_line_is_highly_significant() {
    let x: Vec<f64> = (0..12).map(f64::from).collect();
    let y: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
    let r = check_relation(&x, &y, 0.05).unwrap();
    assert!(r.passed && r.p_value < 1e-6);
}
