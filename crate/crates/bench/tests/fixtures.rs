use naf_bench::{default_network, shuffled_observation, CLASSES, HIDDEN, INPUT_DIM};
use naf_core::coding::symbol_distance;
use naf_core::{align, generate_codebook};

#[test]
fn observation_rows_are_shuffled_words_with_the_requested_errors() {
    let cb = generate_codebook(16, 40, 2, 15, 1).unwrap();
    let observed = shuffled_observation(&cb, 3, 9);
    assert_eq!(observed.codes.len(), cb.n());
    let mut hit = vec![false; cb.n()];
    for row in &observed.codes {
        let n = (0..cb.n()).find(|&n| symbol_distance(row, cb.word(n)) == 3).expect("row is a corrupted word");
        assert!(!hit[n], "word {n} appears twice");
        hit[n] = true;
    }
}

#[test]
fn observation_within_radius_aligns_exactly() {
    let cb = generate_codebook(16, 40, 2, 15, 2).unwrap();
    let observed = shuffled_observation(&cb, cb.radius(), 4);
    let result = align(&observed, &cb).unwrap();
    for (n, &suspect) in result.perm_estimate.iter().enumerate() {
        assert_eq!(symbol_distance(&observed.codes[suspect], cb.word(n)), cb.radius());
    }
    assert_eq!(result.total_distance, cb.n() * cb.radius());
}

#[test]
fn default_network_has_the_experiment_shape() {
    let net = default_network(0);
    assert_eq!(net.input_dim(), INPUT_DIM);
    assert_eq!(net.num_layers(), HIDDEN.len() + 1);
    assert_eq!(net.layers().last().unwrap().out_dim(), CLASSES);
}
