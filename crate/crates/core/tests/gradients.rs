mod common;

use common::{gradient_error, supported_pairs, FD_TOLERANCE};
use dura_kge::models::ModelKind;
use dura_kge::regularizers::{RegKind, RegSpec};

fn check_model(model: ModelKind) {
    let pairs: Vec<RegKind> = supported_pairs()
        .into_iter()
        .filter(|(m, _)| *m == model)
        .map(|(_, r)| r)
        .collect();
    assert!(!pairs.is_empty());
    for reg in pairs {
        for seed in 0..20 {
            let err = gradient_error(model, reg, seed);
            assert!(err <= FD_TOLERANCE, "{model} + {reg}, seed {seed}: relative error {err:e}");
        }
    }
}

#[test]
fn cp_gradients() {
    check_model(ModelKind::Cp);
}

#[test]
fn complex_gradients() {
    check_model(ModelKind::ComplEx);
}

#[test]
fn rescal_gradients() {
    check_model(ModelKind::Rescal);
}

#[test]
fn tcomplex_gradients() {
    check_model(ModelKind::TComplEx);
}

#[test]
fn trescal_gradients() {
    check_model(ModelKind::TRescal);
}

#[test]
fn unsupported_pairs_are_exactly_the_documented_ones() {
    let supported = supported_pairs();
    for model in ModelKind::ALL {
        for reg in RegKind::ALL {
            let expected_ok = !(reg.is_temporal() && !model.is_temporal())
                && !(reg == RegKind::N3 && model.has_dense_relations())
                && !(model == ModelKind::TRescal && reg == RegKind::TDura2);
            assert_eq!(supported.contains(&(model, reg)), expected_ok, "{model} + {reg}");
        }
    }
    assert!(RegSpec::new(RegKind::TWeighted, 0.1)
        .validate(ModelKind::TRescal)
        .is_err());
}
