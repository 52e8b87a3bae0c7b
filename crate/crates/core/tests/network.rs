#[path = "common/gradcheck.rs"]
mod gradcheck;

use gradcheck::{max_relative_error, tiny_config};
use fnssl_core::nn::{closed_form_param_count, count_params, Head, NetworkConfig};

#[test]
fn parameter_counts_of_full_models() {
    let online = NetworkConfig::default();
    let offline = NetworkConfig { causal: false, ..online };
    assert_eq!(count_params(&online), 2_505_218);
    assert_eq!(count_params(&offline), 2_112_002);
    for cfg in [online, offline] {
        for head in [Head::DpIpd, Head::classification(), Head::Regression] {
            for blocks in 1..=4 {
                let c = NetworkConfig { head, num_blocks: blocks, ..cfg };
                assert_eq!(count_params(&c), closed_form_param_count(&c));
            }
        }
    }
}

#[test]
fn gradients_match_central_differences() {
    for head in [Head::DpIpd, Head::classification(), Head::Regression] {
        for causal in [true, false] {
            let err = max_relative_error(&tiny_config(head, causal), 6, 11, 1e-5);
            assert!(err < 1e-4, "{head:?} causal={causal}: {err:e}");
        }
    }
}
