mod common;

#[test]
fn analytic_gradient_matches_central_differences() {
    for seed in 0..20 {
        let err = common::max_relative_error(seed);
        assert!(err < 1e-6, "draw {seed}: relative error {err:e}");
    }
}
