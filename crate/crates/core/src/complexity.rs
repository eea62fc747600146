//! Analytic complexity of a decoded architecture.
//!
//! Every active node is a 3x3 convolution followed by batch-norm and ReLU.
//! Multiply-adds are counted for the convolution only; batch-norm contributes
//! its two affine parameters per channel. Summation joins are free.

use serde::{Deserialize, Serialize};

use crate::encoding::NetworkArchitecture;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub params: u64,
    /// Multiply-adds of one forward pass.
    pub flops: u64,
    pub active_nodes: usize,
    /// Edges plus input and output attachments.
    pub active_connections: usize,
}

/// `(active_nodes, active_connections)` summed over phases.
pub fn count_structure(a: &NetworkArchitecture) -> (usize, usize) {
    (a.active_nodes(), a.active_connections())
}

pub fn estimate_complexity(a: &NetworkArchitecture) -> ComplexityReport {
    let k2 = a.node_op.kernel * a.node_op.kernel;
    let c_out = a.channel_width;
    let mut params = 0u64;
    let mut flops = 0u64;
    for (i, (phase, &res)) in a.phases.iter().zip(&a.resolutions).enumerate() {
        for node in &phase.active_nodes {
            // Only phase 1 sees the raw input tensor; every later phase input
            // already carries `channel_width` channels.
            let c_in = if i == 0 && phase.input_attached.contains(node) {
                a.input_channels
            } else {
                a.channel_width
            };
            let weights = k2 * c_in * c_out;
            params += weights + 2 * c_out;
            flops += weights * res * res;
        }
    }
    let (active_nodes, active_connections) = count_structure(a);
    ComplexityReport {
        params,
        flops,
        active_nodes,
        active_connections,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoding::{
        decode_network, parse_genome, random_genome, EncodingConfig, NetworkGenome, PhaseGenome,
    };
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn single_phase(
        edges: &[(usize, usize)],
        nodes: usize,
        cfg: &EncodingConfig,
    ) -> NetworkArchitecture {
        let g = NetworkGenome::new(vec![PhaseGenome::from_edges(nodes, edges, false)]).unwrap();
        decode_network(&g, cfg)
    }

    #[test]
    fn skip_only_network_is_free() {
        let cfg = EncodingConfig::default();
        let g = parse_genome(
            "0-00-000-0000-00000-1 0-00-000-0000-00000-1 0-00-000-0000-00000-1",
            &cfg,
        )
        .unwrap();
        let r = estimate_complexity(&decode_network(&g, &cfg));
        assert_eq!(r, ComplexityReport::default());
    }

    #[test]
    fn single_node_closed_form() {
        // Two nodes 1 -> 2 at 32x32; node 2 is not input-attached, so it is a
        // 16 -> 16 convolution. Node 1 takes the raw input channels.
        let cfg = EncodingConfig::halving(1, 2, 32, 16, 16);
        let a = single_phase(&[(1, 2)], 2, &cfg);
        let r = estimate_complexity(&a);
        assert_eq!(r.flops, 2 * 2_359_296);
        assert_eq!(r.params, 2 * 2_336);

        // Same node in a later phase, with phase 1 empty.
        let cfg3 = EncodingConfig::halving(2, 2, 64, 3, 16);
        let g = NetworkGenome::new(vec![
            PhaseGenome::zeros(2),
            PhaseGenome::from_edges(2, &[(1, 2)], false),
        ])
        .unwrap();
        let r = estimate_complexity(&decode_network(&g, &cfg3));
        assert_eq!(r.flops, 2 * 9 * 16 * 16 * 32 * 32);
        assert_eq!(r.params, 2 * (9 * 256 + 32));
    }

    #[test]
    fn phase_one_input_channels() {
        let cfg = EncodingConfig::halving(1, 2, 32, 3, 16);
        let r = estimate_complexity(&single_phase(&[(1, 2)], 2, &cfg));
        assert_eq!(r.params, (9 * 3 * 16 + 32) + (9 * 256 + 32));
        assert_eq!(r.flops, (9 * 3 * 16 + 9 * 256) * 32 * 32);
    }

    #[test]
    fn fully_connected_three_nodes_structure() {
        let cfg = EncodingConfig::halving(1, 3, 32, 3, 16);
        let a = single_phase(&[(1, 2), (1, 3), (2, 3)], 3, &cfg);
        assert_eq!(count_structure(&a), (3, 5));
    }

    #[test]
    fn empty_structure() {
        let cfg = EncodingConfig::default();
        let g = NetworkGenome::new(vec![PhaseGenome::zeros(6); 3]).unwrap();
        assert_eq!(count_structure(&decode_network(&g, &cfg)), (0, 0));
    }

    /// Phase profiles with the node/connection counts of the six rows of the
    /// appendix complexity table, evaluated as the first phase at 32x32.
    #[test]
    fn table_profiles_are_strictly_ordered() {
        let rows: [(usize, &[(usize, usize)], usize, usize); 6] = [
            (3, &[(1, 2), (2, 3)], 3, 4),
            (4, &[(1, 3), (2, 3), (3, 4)], 4, 6),
            (4, &[(1, 2), (2, 3), (3, 4), (1, 3), (1, 4)], 4, 7),
            (5, &[(1, 3), (2, 3), (3, 4), (4, 5), (1, 4), (2, 5)], 5, 9),
            (
                5,
                &[
                    (1, 2),
                    (2, 3),
                    (3, 4),
                    (4, 5),
                    (1, 3),
                    (1, 4),
                    (1, 5),
                    (2, 4),
                ],
                5,
                10,
            ),
            (
                6,
                &[
                    (1, 2),
                    (2, 3),
                    (3, 4),
                    (4, 5),
                    (5, 6),
                    (1, 3),
                    (1, 4),
                    (1, 5),
                    (1, 6),
                    (2, 4),
                    (2, 5),
                ],
                6,
                13,
            ),
        ];
        let cfg = EncodingConfig::halving(1, 6, 32, 3, 16);
        let mut last = (0u64, 0u64);
        for (nodes, edges, want_nodes, want_conns) in rows {
            let a = single_phase(edges, 6, &cfg);
            let r = estimate_complexity(&a);
            assert_eq!(
                (r.active_nodes, r.active_connections),
                (want_nodes, want_conns)
            );
            assert_eq!(nodes, want_nodes);
            assert!(
                r.params > last.0 && r.flops > last.1,
                "{r:?} after {last:?}"
            );
            last = (r.params, r.flops);
        }
    }

    #[test]
    fn adding_edges_never_decreases_cost() {
        let cfg = EncodingConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..2000 {
            let g = random_genome(&mut rng, &cfg);
            let mut bits = g.flat_bits();
            let zeros: Vec<usize> = (0..bits.len()).filter(|&i| !bits[i]).collect();
            if zeros.is_empty() {
                continue;
            }
            let before_arch = decode_network(&g, &cfg);
            let before = estimate_complexity(&before_arch);
            bits[zeros[rng.gen_range(0..zeros.len())]] = true;
            let h = NetworkGenome::from_flat_bits(cfg.nodes, &bits).unwrap();
            let after = estimate_complexity(&decode_network(&h, &cfg));
            assert!(after.flops >= before.flops);
            assert!(after.params >= before.params);
            assert!(after.active_nodes >= before.active_nodes);
        }
    }

    #[test]
    fn halving_resolution_quarters_flops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let wide = EncodingConfig::halving(3, 6, 64, 3, 16);
        let narrow = EncodingConfig::halving(3, 6, 32, 3, 16);
        for _ in 0..200 {
            let g = random_genome(&mut rng, &wide);
            let a = estimate_complexity(&decode_network(&g, &wide));
            let b = estimate_complexity(&decode_network(&g, &narrow));
            assert_eq!(a.flops, 4 * b.flops);
            assert_eq!(a.params, b.params);
            assert_eq!(a, estimate_complexity(&decode_network(&g, &wide)));
        }
    }
}
