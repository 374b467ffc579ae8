//! Cross-checks of solver components against exhaustive enumeration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use kqkp::bnb::SolverConfig;
use kqkp::bundle::{minimize, oracle_eval, BundleSettings, StepKind};
use kqkp::cuts::{self, CutPool};
use kqkp::generator::{generate, GenSpec};
use kqkp::heuristics::{primal_heuristic, varfix_heuristic};
use kqkp::instance::preprocess;
use kqkp::ipm::{self, IpmSettings};
use kqkp::oracle::enumerate;
use kqkp::relaxation::{build_padded, extract_fractional};

#[test]
fn fixing_an_optimal_selection_leaves_the_optimum_as_offset() {
    for seed in 0..40 {
        let inst = generate(&GenSpec::new(4 + seed as usize % 7, 75, seed));
        let opt = enumerate(&inst).unwrap();
        // fix from the highest index down so the remaining indices stay valid
        let mut red = inst.clone();
        for j in (0..inst.n()).rev() {
            red = red.fix_variable(j, opt.argmax[j]).unwrap();
        }
        assert_eq!(red.n(), 0);
        assert_eq!(red.k(), 0);
        assert_eq!(red.offset(), opt.value.unwrap(), "seed {seed}");
    }
}

#[test]
fn fractional_point_of_the_relaxation_lies_in_the_unit_box() {
    for seed in 0..10 {
        let inst = generate(&GenSpec::new(14, 50, seed));
        let relax = build_padded(&inst).unwrap();
        let sol = ipm::solve(&relax, None, &IpmSettings::default()).unwrap();
        let frac = extract_fractional(&sol.x, &relax);
        assert_eq!(frac.len(), inst.n());
        assert!(frac.iter().all(|v| (0.0..=1.0).contains(v)));
        // and the unclamped coordinates are close to the box already
        let raw = (sol.x.row(0).sum() * relax.proj_scale + 1.0) / 2.0;
        assert!((-1e-3..=1.0 + 1e-3).contains(&raw), "seed {seed}: {raw}");
    }
}

#[test]
fn bound_does_not_grow_when_capacity_shrinks() {
    let mut checked = 0;
    for seed in 0..40 {
        let inst = generate(&GenSpec::new(12, 50, seed));
        let b_prime = preprocess(&inst).b_prime;
        if inst.capacity() - 1 < b_prime {
            continue;
        }
        let tight = inst.with_capacity(inst.capacity() - 1);
        let loose_bound = ipm::bound(&build_padded(&inst).unwrap(), None, 1e-8).unwrap();
        let tight_bound = ipm::bound(&build_padded(&tight).unwrap(), None, 1e-8).unwrap();
        assert!(tight_bound <= loose_bound + 1e-5 * (1.0 + loose_bound.abs()), "seed {seed}");
        checked += 1;
    }
    assert!(checked >= 20);
}

#[test]
fn random_multipliers_give_valid_bounds() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..12 {
        let inst = generate(&GenSpec::new(8 + seed as usize % 5, 50, seed));
        let opt = enumerate(&inst).unwrap().value.unwrap() as f64;
        let relax = build_padded(&inst).unwrap();
        let x0 = oracle_eval(&CutPool::new(0), &[], &relax, 1e-7).unwrap().x;
        let mut pool = CutPool::new(500);
        pool.add(cuts::separate(&x0, 30, 0.0, None));
        for _ in 0..10 {
            let gamma: Vec<f64> = (0..pool.len()).map(|_| rng.gen_range(0.0..5.0)).collect();
            let f = oracle_eval(&pool, &gamma, &relax, 1e-7).unwrap().f;
            assert!(f >= opt - 1e-6, "seed {seed}: {f} < {opt}");
        }
    }
}

#[test]
fn tight_relaxation_stops_without_further_descent() {
    // Search for instances whose plain bound already rounds down to the optimum.
    let mut found = 0;
    for seed in 0..200 {
        let inst = generate(&GenSpec::new(8, 25, seed));
        let opt = enumerate(&inst).unwrap().value.unwrap() as f64;
        let relax = build_padded(&inst).unwrap();
        let res = minimize(&relax, opt, &BundleSettings::default()).unwrap();
        if res.sdp_bound >= opt + 1.0 {
            continue;
        }
        found += 1;
        let descents = res.trace.iter().filter(|e| e.kind == StepKind::Descent).count();
        assert!(descents <= 1);
        assert_eq!(res.bound, res.sdp_bound);
        if found == 5 {
            break;
        }
    }
    assert!(found > 0, "no tight instance in the search range");
}

#[test]
fn greedy_heuristic_averages_ninety_percent() {
    let mut sum = 0.0;
    for seed in 0..100 {
        let inst = generate(&GenSpec::new(12, [25, 50, 75, 100][seed as usize % 4], seed));
        let opt = enumerate(&inst).unwrap().value.unwrap();
        let h = primal_heuristic(&inst, &preprocess(&inst)).unwrap();
        sum += if opt == 0 { 1.0 } else { h.value as f64 / opt as f64 };
    }
    let avg = sum / 100.0;
    println!("greedy average ratio {avg:.4}");
    assert!(avg >= 0.9, "{avg}");
}

#[test]
fn variable_fixing_finds_the_optimum_at_least_as_often() {
    let (mut greedy_hits, mut varfix_hits) = (0, 0);
    for seed in 0..40 {
        let inst = generate(&GenSpec::new(11, [25, 50, 75, 100][seed as usize % 4], 100 + seed));
        let opt = enumerate(&inst).unwrap().value.unwrap();
        let relax = build_padded(&inst).unwrap();
        let sol = ipm::solve(&relax, None, &IpmSettings::default()).unwrap();
        let frac = extract_fractional(&sol.x, &relax);
        let greedy = primal_heuristic(&inst, &preprocess(&inst)).unwrap();
        let varfix = varfix_heuristic(&inst, &frac, None).map_or(i64::MIN, |i| i.value);
        greedy_hits += (greedy.value == opt) as usize;
        varfix_hits += (varfix.max(greedy.value) == opt) as usize;
        assert!(varfix <= opt);
    }
    println!("optimum found: greedy {greedy_hits}/40, with variable fixing {varfix_hits}/40");
    assert!(varfix_hits >= greedy_hits);
}

#[test]
fn bench_gaps_are_nonnegative() {
    let dir = std::env::temp_dir().join(format!("kqkp-oracle-checks-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    for seed in 0..10 {
        let spec = GenSpec::new(12, 50, 700 + seed);
        std::fs::write(dir.join(spec.file_name()), generate(&spec).to_text()).unwrap();
    }
    let files = kqkp::bench::instance_files(&dir).unwrap();
    let rows = kqkp::bench::run(&files, &SolverConfig::default(), 1).unwrap();
    std::fs::remove_dir_all(&dir).unwrap();
    assert_eq!(rows.iter().map(|r| r.instances).sum::<usize>(), 10);
    for r in &rows {
        assert!(r.gap_root_percent >= 0.0, "{r:?}");
    }
}
