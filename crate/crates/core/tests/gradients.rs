use renewgan_core::tensor::gradcheck::{adjoint_mismatch, check_gradients, CheckedOp};

#[test]
fn analytic_gradients_match_central_differences() {
    for op in CheckedOp::ALL {
        let r = check_gradients(op, 25, 1e-4, 2024).unwrap();
        assert_eq!(r.cases, 25);
        assert!(r.max_rel_error < 1e-4, "{op:?}: {:e}", r.max_rel_error);
    }
}

#[test]
fn transposed_convolution_is_the_adjoint_of_convolution() {
    let (err, checked) = adjoint_mismatch(200, 7).unwrap();
    assert!(checked >= 100, "{checked}");
    assert!(err < 1e-12, "{err:e}");
}
