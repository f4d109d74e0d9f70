//! Acceptance suite: one test per criterion, each printing a pass line.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tcspmm::balance::{
    compute_ibd, max_over_mean, predict_tb_time, schedule_from_counts, unit_predicted_times,
    HardwareProfile, MAX_BLOCKS_PER_TB,
};
use tcspmm::bittcf::{
    bittcf_index_bytes, decode, encode, metcf_index_bytes, serialize, HEADER_BYTES,
};
use tcspmm::executor::{spmm_bittcf, spmm_bittcf_scheduled, verify};
use tcspmm::matrix::{
    apply_symmetric_permutation, coo_to_csr, spmm_oracle, CooMatrix, CsrMatrix, DenseMatrix,
    Permutation,
};
use tcspmm::pipesim::{gap, simulate_acc, simulate_dtc, StageDurations};
use tcspmm::reorder::{
    build_affinity_graph, delta_q, modularity, reorder, MergeState,
};
use tcspmm::sbm::{generate_sbm, random_csr};
use tcspmm::tile::{mean_nnz_tc, plan_tiles};

fn integer_matrix(rows: usize, cols: usize, density: f64, seed: u64) -> CsrMatrix<f64> {
    random_csr::<f64>(rows, cols, density, seed).map_values(|v| (v * 6.0).floor())
}

fn integer_dense(rows: usize, cols: usize, seed: u64) -> DenseMatrix<f64> {
    let mut b = DenseMatrix::<f64>::random(rows, cols, seed);
    b.data.iter_mut().for_each(|v| *v = (*v * 8.0).floor());
    b
}

#[test]
fn criterion_1_format_roundtrip() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC1);
    let mut instances = 0usize;

    for _ in 0..200 {
        let rows = rng.gen_range(1..=512);
        let cols = rng.gen_range(1..=512);
        let density = (-(rng.gen::<f64>() * (0.3f64 / 1e-3).ln()) + 0.3f64.ln()).exp();
        let a = random_csr::<f64>(rows, cols, density, rng.gen());
        let t = encode(&plan_tiles(&a), &a);
        assert_eq!(decode(&t).unwrap(), a, "roundtrip drift at {rows}x{cols}");
        instances += 1;
    }

    // Fixtures: identity, empty, and a fully dense window.
    for a in [
        CsrMatrix::<f64>::identity(64),
        coo_to_csr(&CooMatrix::<f64>::from_entries(32, 32, vec![]).unwrap()),
        coo_to_csr(
            &CooMatrix::from_entries(
                8,
                8,
                (0..8).flat_map(|r| (0..8).map(move |c| (r, c, (r * 8 + c) as f64))).collect(),
            )
            .unwrap(),
        ),
    ] {
        let t = encode(&plan_tiles(&a), &a);
        assert_eq!(decode(&t).unwrap(), a);
        instances += 1;
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "criterion 1 overran: {elapsed:?}");
    println!("criterion 1 (format roundtrip, {instances} instances): PASS");
}

#[test]
fn criterion_2_byte_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC2);
    for _ in 0..100 {
        let rows = rng.gen_range(1..=256);
        let cols = rng.gen_range(1..=256);
        let a = random_csr::<f64>(rows, cols, rng.gen_range(0.001..0.3), rng.gen());
        let plan = plan_tiles(&a);
        let t = encode(&plan, &a);
        let blocks = t.num_blocks();

        // Formula equals the measured serialized index size.
        let formula = bittcf_index_bytes(rows, blocks);
        assert_eq!(formula, (rows.div_ceil(8) + blocks * 11 + 2) * 4);
        let measured_index = serialize(&t).len() - HEADER_BYTES - 4 * t.nnz;
        assert_eq!(formula, measured_index);

        // Exact gap against ME-TCF, hence the > 8 nnz/block crossover.
        let metcf = metcf_index_bytes(rows, blocks, t.nnz);
        assert_eq!(formula as i64 - metcf as i64, 8 * blocks as i64 - t.nnz as i64);
        if blocks > 0 {
            let mean = mean_nnz_tc(&plan).unwrap();
            assert_eq!(formula < metcf, mean > 8.0);
        }
    }
    println!("criterion 2 (byte formula, 100 instances): PASS");
}

#[test]
fn criterion_3_executor_equivalence() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC3);

    for pair in 0..100u64 {
        let rows = rng.gen_range(8..=192);
        let cols = rng.gen_range(8..=192);
        let density = rng.gen_range(0.01..0.2);
        let integer_pair = pair % 2 == 0;

        let a = if integer_pair {
            integer_matrix(rows, cols, density, rng.gen())
        } else {
            random_csr::<f64>(rows, cols, density, rng.gen())
        };
        let t = encode(&plan_tiles(&a), &a);

        for f in [16usize, 32, 128] {
            let b = if integer_pair {
                integer_dense(cols, f, rng.gen())
            } else {
                DenseMatrix::<f64>::random(cols, f, rng.gen())
            };
            let got = spmm_bittcf(&t, &b).unwrap();
            let want = spmm_oracle(&a, &b).unwrap();
            if integer_pair {
                assert_eq!(got.data, want.data, "integer pair {pair} f {f} not bit-exact");
            } else {
                for (x, y) in got.data.iter().zip(&want.data) {
                    let rel = if *y == 0.0 { (x - y).abs() } else { (x - y).abs() / y.abs() };
                    assert!(rel <= 1e-5, "pair {pair} f {f}: rel {rel}");
                }
            }
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "criterion 3 overran: {elapsed:?}");
    println!("criterion 3 (executor equivalence, 100 pairs x 3 dims): PASS");
}

#[test]
fn criterion_4_reordering_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC4);

    // Q of the all-in-one-community assignment is 0 on 50 random graphs.
    let mut graphs = 0;
    while graphs < 50 {
        let n = rng.gen_range(4..=128);
        let a = random_csr::<f64>(n, n, rng.gen_range(0.05..0.4), rng.gen());
        let g = build_affinity_graph(&a).unwrap();
        if g.total_weight_2m == 0.0 {
            continue;
        }
        let q = modularity(&g, &vec![0; n]).unwrap();
        assert!(q.abs() <= 1e-12, "Q(single community) = {q}");
        graphs += 1;
    }

    // delta_q equals the two-evaluation modularity difference for every
    // distinct-community pair, at several coarsening depths, n <= 32.
    for n in [4usize, 9, 16, 25, 32] {
        let a = random_csr::<f64>(n, n, 0.3, n as u64);
        let g = build_affinity_graph(&a).unwrap();
        if g.total_weight_2m == 0.0 {
            continue;
        }
        let mut state = MergeState::new(&g);
        let mut assignment: Vec<usize> = (0..n).collect();
        for _round in 0..4 {
            let before = modularity(&g, &assignment).unwrap();
            for u in 0..n {
                for v in 0..n {
                    if state.root(u) == state.root(v) {
                        continue;
                    }
                    let dq = delta_q(&g, &mut state, u, v).unwrap();
                    let ru = state.root(u);
                    let rv = state.root(v);
                    let merged: Vec<usize> =
                        assignment.iter().map(|&c| if c == rv { ru } else { c }).collect();
                    let after = modularity(&g, &merged).unwrap();
                    assert!(
                        (dq - (after - before)).abs() <= 1e-12,
                        "n {n}: delta_q {dq} vs {}",
                        after - before
                    );
                }
            }
            // Coarsen somewhere legal and repeat.
            let mut merged_any = false;
            for v in 0..n {
                if state.root(v) != state.root(0) {
                    let r0 = state.root(0);
                    let rv = state.root(v);
                    state.merge(v, 0).unwrap();
                    assignment.iter_mut().for_each(|c| {
                        if *c == rv {
                            *c = r0;
                        }
                    });
                    merged_any = true;
                    break;
                }
            }
            if !merged_any {
                break;
            }
        }
    }

    // Reorder always emits a bijection.
    for a in [
        CsrMatrix::<f64>::identity(17),
        random_csr::<f64>(33, 33, 0.1, 5),
        generate_sbm::<f64>(64, 8, 0.5, 0.02, 6).unwrap(),
        coo_to_csr(&CooMatrix::<f64>::from_entries(12, 12, vec![]).unwrap()),
    ] {
        let n = a.num_rows;
        let (_, p, _) = reorder(&a).unwrap();
        let mut seen: Vec<usize> = (0..n).map(|v| p.apply(v)).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..n).collect::<Vec<_>>());
    }

    // End-to-end reordered SpMM against the oracle.
    let a_int = integer_matrix(96, 96, 0.1, 7);
    let b_int = integer_dense(96, 32, 8);
    let r = verify(&a_int, &b_int).unwrap();
    assert_eq!(r.reordered.unwrap().max_abs, 0.0);

    let a_f = random_csr::<f64>(96, 96, 0.1, 9);
    let b_f = DenseMatrix::<f64>::random(96, 32, 10);
    let r = verify(&a_f, &b_f).unwrap();
    assert!(r.reordered.unwrap().max_rel <= 1e-5);

    println!("criterion 4 (reordering correctness): PASS");
}

#[test]
fn criterion_5_reordering_quality() {
    for seed in 0..10u64 {
        let a = generate_sbm::<f64>(512, 16, 0.3, 0.005, seed).unwrap();
        let shuffle = Permutation::random(512, seed + 1000);
        let shuffled = apply_symmetric_permutation(&a, &shuffle).unwrap();

        let before = mean_nnz_tc(&plan_tiles(&shuffled)).unwrap();
        let (reordered, _, _) = reorder(&shuffled).unwrap();
        let after = mean_nnz_tc(&plan_tiles(&reordered)).unwrap();
        assert!(
            after > before,
            "seed {seed}: MeanNNZTC fell from {before:.2} to {after:.2}"
        );
    }

    // The two planted cliques come back as contiguous index ranges.
    let a = generate_sbm::<f64>(8, 2, 1.0, 0.0, 0).unwrap();
    let shuffle = Permutation::new(vec![5, 2, 7, 0, 4, 1, 6, 3]).unwrap();
    let shuffled = apply_symmetric_permutation(&a, &shuffle).unwrap();
    let (_, p, _) = reorder(&shuffled).unwrap();
    for clique in [0usize, 1] {
        let mut ids: Vec<usize> =
            (0..4).map(|v| p.apply(shuffle.apply(clique * 4 + v))).collect();
        ids.sort_unstable();
        assert_eq!(ids[3] - ids[0], 3, "clique {clique} not contiguous: {ids:?}");
    }

    println!("criterion 5 (reordering quality, 10 seeds): PASS");
}

#[test]
fn criterion_6_ibd_and_scheduling() {
    let profile = HardwareProfile::a800();

    assert_eq!(compute_ibd(&[1, 3, 8, 4]).unwrap(), 2.0);

    // Balancing triggers strictly above the threshold of 8.
    let at = schedule_from_counts(&[0, 16], &profile, 128).unwrap();
    assert_eq!(at.ibd, 8.0);
    assert!(!at.balanced);
    let above = schedule_from_counts(&[0, 17], &profile, 128).unwrap();
    assert!(above.ibd > 8.0 && above.balanced);

    // Power-law plans: coverage, caps, and a flatter time profile.
    let mut rng = ChaCha8Rng::seed_from_u64(0xC6);
    for plan_idx in 0..20 {
        let counts: Vec<usize> = (0..30)
            .map(|i| if i % 10 == 0 { rng.gen_range(100..=200) } else { rng.gen_range(1..=4) })
            .collect();
        let s = schedule_from_counts(&counts, &profile, 128).unwrap();
        assert!(s.balanced, "plan {plan_idx} did not trigger balancing");

        let mut covered = vec![false; counts.iter().sum()];
        for unit in &s.units {
            assert!(unit.block_count() <= MAX_BLOCKS_PER_TB);
            for seg in &unit.segments {
                for b in seg.first_block..seg.first_block + seg.block_count {
                    assert!(!covered[b], "block {b} scheduled twice");
                    covered[b] = true;
                }
            }
        }
        assert!(covered.iter().all(|&c| c));

        let identity_times: Vec<f64> =
            counts.iter().filter(|&&c| c > 0).map(|&c| predict_tb_time(&profile, 128, c)).collect();
        let balanced_times = unit_predicted_times(&s, &profile, 128);
        assert!(max_over_mean(&balanced_times) <= max_over_mean(&identity_times));
    }

    // Executor output identical under identity and balanced schedules.
    let mut entries: Vec<(usize, usize, f64)> = Vec::new();
    let mut rng2 = ChaCha8Rng::seed_from_u64(0x66);
    for c in 0..2048 {
        for r in 0..8 {
            if rng2.gen::<f64>() < 0.5 {
                entries.push((r, c, rng2.gen_range(1..6) as f64));
            }
        }
    }
    for w in 1..8usize {
        entries.push((w * 8, w, 1.0));
    }
    let a = coo_to_csr(&CooMatrix::from_entries(64, 2048, entries).unwrap());
    let plan = plan_tiles(&a);
    let counts = plan.blocks_per_window();
    assert!(compute_ibd(&counts).unwrap() > 8.0);

    let t = encode(&plan, &a);
    let b = integer_dense(2048, 16, 11);
    let balanced = schedule_from_counts(&counts, &profile, 16).unwrap();
    assert!(balanced.balanced);
    let identity = identity_schedule(&counts);
    let plain = spmm_bittcf(&t, &b).unwrap();
    let out_identity = spmm_bittcf_scheduled(&t, &b, &identity).unwrap();
    let out_balanced = spmm_bittcf_scheduled(&t, &b, &balanced).unwrap();
    assert_eq!(plain.data, out_identity.data);
    assert_eq!(plain.data, out_balanced.data);

    println!("criterion 6 (IBD and scheduling): PASS");

    // One unit per nonempty window, regardless of IBD.
    fn identity_schedule(counts: &[usize]) -> tcspmm::balance::Schedule {
        let mut units = Vec::new();
        let mut first = 0usize;
        for (w, &c) in counts.iter().enumerate() {
            if c > 0 {
                units.push(tcspmm::balance::WorkUnit {
                    segments: vec![tcspmm::balance::Segment {
                        window_id: w,
                        first_block: first,
                        block_count: c,
                        writes_back: true,
                    }],
                });
            }
            first += c;
        }
        tcspmm::balance::Schedule { units, balanced: false, ibd: 0.0 }
    }
}

#[test]
fn criterion_7_cost_model() {
    let profile = HardwareProfile::a800();

    // Hand substitution: load = wb = 8*128*4 elements * 4 bytes / 1935 GB/s,
    // mma = 8*15*128 / 156 TFLOPS.
    let hand = 16384.0 / 1935e9 + 15360.0 / 156e12 + 16384.0 / 1935e9;
    let got = predict_tb_time(&profile, 128, 4);
    assert!(((got - hand) / hand).abs() <= 1e-12);
    assert!((got - 1.70e-8).abs() / 1.70e-8 < 0.01);

    let mut rng = ChaCha8Rng::seed_from_u64(0xC7);
    for _ in 0..1000 {
        let f = rng.gen_range(1..1024);
        let blocks = rng.gen_range(1..256);
        let t = predict_tb_time(&profile, f, blocks);
        assert!(predict_tb_time(&profile, f, blocks + 1) > t);
        assert!(predict_tb_time(&profile, f + 1, blocks) > t);
    }

    println!("criterion 7 (cost model): PASS");
}

#[test]
fn criterion_8_pipeline_simulator() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xC8);

    for _ in 0..1000 {
        let d = StageDurations {
            g_to_shm_a: rng.gen_range(0.0..10.0),
            g_to_reg_b: rng.gen_range(0.0..10.0),
            tc_mma: rng.gen_range(0.0..10.0),
            wb: rng.gen_range(0.0..5.0),
        };
        let n = rng.gen_range(1..=64);
        let dtc = simulate_dtc(n, &d);
        let acc = simulate_acc(n, &d);
        assert!(acc.makespan <= dtc.makespan, "acc lost at n={n} {d:?}");
        assert_eq!(dtc.tc_busy, n as f64 * d.tc_mma);
        assert_eq!(acc.tc_busy, n as f64 * d.tc_mma);
        assert!(dtc.bubble >= 0.0 && acc.bubble >= 0.0);
    }

    // Worked example: (4, 4, 1, 2) at n = 3 gives GAP = 2 exactly.
    let d = StageDurations { g_to_shm_a: 4.0, g_to_reg_b: 4.0, tc_mma: 1.0, wb: 2.0 };
    let g = gap(&simulate_dtc(3, &d), &simulate_acc(3, &d)).unwrap();
    assert_eq!(g, 2.0);

    // GAP nondecreasing in n whenever the B load dominates the MMA.
    for _ in 0..50 {
        let d = StageDurations {
            g_to_shm_a: rng.gen_range(0.0..10.0),
            g_to_reg_b: rng.gen_range(1.0..10.0),
            tc_mma: 0.0,
            wb: rng.gen_range(0.0..5.0),
        };
        let d = StageDurations { tc_mma: rng.gen_range(0.0..d.g_to_reg_b), ..d };
        let mut last = 0.0;
        for n in 1..=40 {
            let g = gap(&simulate_dtc(n, &d), &simulate_acc(n, &d)).unwrap();
            assert!(g >= last, "GAP shrank at n={n} for {d:?}");
            last = g;
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "criterion 8 overran: {elapsed:?}");
    println!("criterion 8 (pipeline simulator): PASS");
}
