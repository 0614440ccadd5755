use ddtwin_core::sched::random::{random_instance, random_restriction, with_twins};
use ddtwin_core::sched::{
    brute_force_oracle, check_schedule, solve_best_case, CheckOptions, Mode, OracleResult, SolveOptions, SolveOutcome,
};

fn solve(i: &ddtwin_core::sched::random::Instance, mode: Mode) -> SolveOutcome {
    let opts = SolveOptions {
        mode,
        node_limit: u64::MAX,
        ..SolveOptions::default()
    };
    solve_best_case(&i.graph, &i.topo, &i.catalog, &opts).unwrap()
}

#[test]
fn exact_matches_oracle() {
    let mut feasible = 0;
    let n: u64 = std::env::var("ORACLE_SEEDS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(120);
    let mut infeasible = 0;
    for seed in 0..n {
        let inst = random_instance(seed);
        let oracle = brute_force_oracle(&inst.graph, &inst.topo, &inst.catalog).unwrap();
        let out = solve(&inst, Mode::Exact);
        match (oracle, &out) {
            (OracleResult::Makespan(m), SolveOutcome::Optimal { schedule }) => {
                feasible += 1;
                assert_eq!(schedule.makespan, m, "seed {seed}");
                let v = check_schedule(
                    schedule,
                    &inst.graph,
                    &inst.topo,
                    &inst.catalog,
                    &CheckOptions::default(),
                );
                assert!(v.is_empty(), "seed {seed}: {v:?}");
            }
            (OracleResult::Infeasible, SolveOutcome::Infeasible { .. }) => infeasible += 1,
            (o, s) => panic!("seed {seed}: oracle {o:?}, solver {}", s.status()),
        }
    }
    eprintln!("{feasible} feasible, {infeasible} infeasible");
    assert!(feasible > 40, "only {feasible} feasible instances");
}

#[test]
fn exact_matches_oracle_with_twins() {
    let n: u64 = std::env::var("ORACLE_SEEDS")
        .ok()
        .and_then(|s| s.parse().ok())
        .unwrap_or(120);
    let mut grown = 0;
    for seed in 0..n {
        let base = random_instance(seed);
        let inst = with_twins(&base, seed);
        if inst.graph.tasks.len() == base.graph.tasks.len() && inst.graph.buffers.len() == base.graph.buffers.len() {
            continue;
        }
        grown += 1;
        inst.graph.check_consistency().unwrap();
        let oracle = brute_force_oracle(&inst.graph, &inst.topo, &inst.catalog).unwrap();
        match (oracle, solve(&inst, Mode::Exact)) {
            (OracleResult::Makespan(m), SolveOutcome::Optimal { schedule }) => {
                assert_eq!(schedule.makespan, m, "seed {seed}")
            }
            (OracleResult::Infeasible, SolveOutcome::Infeasible { .. }) => {}
            (o, s) => panic!("seed {seed}: oracle {o:?}, solver {}", s.status()),
        }
    }
    assert!(grown > n / 2, "only {grown} instances grew");
}

#[test]
fn heuristic_is_valid_and_no_better_than_exact() {
    for seed in 200..260u64 {
        let inst = random_instance(seed);
        let exact = solve(&inst, Mode::Exact);
        if let SolveOutcome::Heuristic { schedule } = solve(&inst, Mode::Heuristic) {
            let v = check_schedule(
                &schedule,
                &inst.graph,
                &inst.topo,
                &inst.catalog,
                &CheckOptions::default(),
            );
            assert!(v.is_empty(), "seed {seed}: {v:?}");
            assert!(schedule.makespan >= exact.makespan().unwrap(), "seed {seed}");
        }
    }
}

#[test]
fn restriction_never_helps() {
    for seed in 0..80u64 {
        let base = random_instance(1000 + seed);
        let tight = random_restriction(&base, seed);
        let a = solve(&base, Mode::Exact);
        let b = solve(&tight, Mode::Exact);
        match (a.makespan(), b.makespan()) {
            (Some(x), Some(y)) => assert!(y >= x, "seed {seed}: {x} -> {y}"),
            (None, _) => assert!(b.is_infeasible(), "seed {seed}"),
            (Some(_), None) => {}
        }
    }
}

#[test]
#[ignore]
fn witness_histogram() {
    let mut h = std::collections::BTreeMap::new();
    for seed in 0..1000u64 {
        let inst = random_instance(seed);
        if let SolveOutcome::Infeasible { witness } = solve(&inst, Mode::Exact) {
            *h.entry(witness.as_str()).or_insert(0) += 1;
        }
    }
    eprintln!("{h:?}");
}

#[test]
fn sequential_and_parallel_agree() {
    use ddtwin_core::par::Parallelism;
    for seed in 500..600u64 {
        let inst = random_instance(seed);
        let run = |parallelism| {
            let opts = SolveOptions {
                parallelism,
                ..SolveOptions::default()
            };
            solve_best_case(&inst.graph, &inst.topo, &inst.catalog, &opts).unwrap()
        };
        assert_eq!(run(Parallelism::Sequential), run(Parallelism::Parallel), "seed {seed}");
    }
}
