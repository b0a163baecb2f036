#[path = "common/checks.rs"]
mod checks;

fn pass(c: checks::Check) {
    if let Err(e) = c {
        panic!("{e}");
    }
}

#[test]
fn canonical_mac_counts() {
    pass(checks::mac_counts());
}

#[test]
fn workload_parameter_counts() {
    pass(checks::parameter_counts());
}

#[test]
fn int8_weights_are_a_quarter_of_float() {
    pass(checks::quantized_size_ratio());
}

#[test]
fn analyzer_speed_ratios() {
    pass(checks::analyzer_ratios());
}

#[test]
fn memory_probe_matches_prediction() {
    pass(checks::memory_probe());
}

#[test]
fn scripted_timing_sequences() {
    pass(checks::timing_protocol());
}

#[test]
fn dispatch_fallback_and_forced_tests() {
    pass(checks::dispatch_rules());
}

#[test]
fn scoring_fixed_point_linearity_and_failures() {
    pass(checks::scoring());
}

#[test]
fn outlier_mean() {
    pass(checks::outlier_fixture());
}
