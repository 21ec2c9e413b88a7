use cdbin_autodiff::layer_suite;

#[test]
fn every_layer_passes_over_ten_seeds() {
    for seed in 0..10 {
        for case in layer_suite(seed).unwrap() {
            assert!(
                case.passed(),
                "seed {seed} {}: {:.3e} at {} (tolerance {:.0e})",
                case.name,
                case.report.max_rel_error,
                case.report.worst,
                case.tolerance
            );
            assert!(case.report.entries > 0);
        }
    }
}
