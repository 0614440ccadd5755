use ddtwin_core::graph::{Buffer, GraphInput, TaskGraph, TaskInstance};
use ddtwin_core::manifest::{generate_patterns_from_topology, ClassCost, HardwareTopology, PatternCatalog};
use ddtwin_core::sched::{
    check_schedule, compute_ready_times, solve_best_case, CheckOptions, Mode, SolveOptions, SolveOutcome,
    ViolationKind, Witness,
};

fn task(id: usize, runtime: u64) -> TaskInstance {
    TaskInstance {
        id,
        name: format!("t{id}"),
        function: "f".into(),
        runtime,
        internalsize: 0,
        inputs: vec![],
        external_inputs: vec![],
        outputs: vec![],
        allowed_cores: None,
    }
}

fn link(g: &mut TaskGraph, from: usize, to: &[usize], size: u64, patterns: &[&str]) -> usize {
    let id = g.buffers.len();
    g.buffers.push(Buffer {
        id,
        name: format!("b{id}"),
        size,
        definer: from,
        observers: to.to_vec(),
        allowed_patterns: patterns.iter().map(|s| s.to_string()).collect(),
        labels: vec![],
        release: None,
        due: None,
    });
    g.tasks[from].outputs.push(id);
    for &t in to {
        g.tasks[t].inputs.push(id);
    }
    id
}

/// One core, L2-to-L3 transfers cost a flat 50.
fn one_core() -> (HardwareTopology, PatternCatalog) {
    let mut t = HardwareTopology::uniform(1, 1 << 20, 1 << 24);
    t.pattern_costs.l2tol2 = ClassCost {
        base: 50,
        bandwidth: None,
    };
    let c = generate_patterns_from_topology(&t);
    (t, c)
}

const L2L3: &str = "L2toL2.c_0.L3_0.accL3_0";

fn chain() -> TaskGraph {
    let mut g = TaskGraph::empty(u64::MAX);
    g.tasks.push(task(0, 100));
    g.tasks.push(task(1, 200));
    link(&mut g, 0, &[1], 64, &[L2L3]);
    g
}

fn exact(g: &TaskGraph, t: &HardwareTopology, c: &PatternCatalog) -> SolveOutcome {
    solve_best_case(g, t, c, &SolveOptions::default()).unwrap()
}

#[test]
fn chain_pays_the_transfer() {
    let (t, c) = one_core();
    let out = exact(&chain(), &t, &c);
    assert_eq!(out.status(), "optimal");
    assert_eq!(out.makespan(), Some(350));
    let s = out.schedule().unwrap();
    assert_eq!(compute_ready_times(s, &chain()), vec![0, 150]);
    assert!(check_schedule(s, &chain(), &t, &c, &CheckOptions::default()).is_empty());
}

#[test]
fn single_task_is_its_runtime() {
    let (t, c) = one_core();
    let mut g = TaskGraph::empty(1_000_000);
    g.tasks.push(task(0, 7200));
    link(&mut g, 0, &[], 8, &["pipeline.c_0.L3_0"]);
    assert_eq!(exact(&g, &t, &c).makespan(), Some(7200));
}

#[test]
fn deadline_witness() {
    let (t, c) = one_core();
    let mut g = chain();
    g.deadline = 100;
    match exact(&g, &t, &c) {
        SolveOutcome::Infeasible { witness } => assert_eq!(witness, Witness::Deadline),
        other => panic!("{other:?}"),
    }
}

#[test]
fn lag_witness() {
    let (t, c) = one_core();
    let mut g = TaskGraph::empty(u64::MAX);
    g.inputs.push(GraphInput {
        name: "x".into(),
        labels: vec![],
        release: 0,
    });
    for i in 0..2 {
        g.tasks.push(task(i, 100));
        g.tasks[i].external_inputs.push(0);
    }
    g.max_start_lag = Some(10);
    match exact(&g, &t, &c) {
        SolveOutcome::Infeasible { witness } => assert_eq!(witness, Witness::StartLag),
        other => panic!("{other:?}"),
    }
}

#[test]
fn unknown_core_is_an_error() {
    let (t, c) = one_core();
    let mut g = chain();
    g.tasks[0].allowed_cores = Some([5].into());
    assert!(solve_best_case(&g, &t, &c, &SolveOptions::default()).is_err());
    g.tasks[0].allowed_cores = Some([0].into());
    g.buffers[0].allowed_patterns = vec!["pipeline.c_0.L3_0".into()];
    assert_eq!(exact(&g, &t, &c).makespan(), Some(300));
}

#[test]
fn two_cores_run_independent_tasks_together() {
    let t = HardwareTopology::uniform(2, 1 << 20, 1 << 24);
    let c = generate_patterns_from_topology(&t);
    let mut g = TaskGraph::empty(u64::MAX);
    for i in 0..4 {
        g.tasks.push(task(i, 100 * (i as u64 + 1)));
    }
    // 100+400 and 200+300 split evenly
    assert_eq!(exact(&g, &t, &c).makespan(), Some(500));
    let h = solve_best_case(
        &g,
        &t,
        &c,
        &SolveOptions {
            mode: Mode::Heuristic,
            ..SolveOptions::default()
        },
    )
    .unwrap();
    assert!(h.makespan().unwrap() >= 500);
}

fn kinds(
    g: &TaskGraph,
    t: &HardwareTopology,
    c: &PatternCatalog,
    s: &ddtwin_core::sched::Schedule,
) -> Vec<ViolationKind> {
    let mut k: Vec<_> = check_schedule(s, g, t, c, &CheckOptions::default())
        .into_iter()
        .map(|v| v.kind)
        .collect();
    k.sort();
    k.dedup();
    k
}

#[test]
fn checker_flags_broken_schedules() {
    let (t, c) = one_core();
    let g = chain();
    let good = exact(&g, &t, &c).schedule().unwrap().clone();

    let mut early = good.clone();
    early.assignments[1].start = 120;
    early.assignments[1].finish = 320;
    early.makespan = 320;
    assert!(kinds(&g, &t, &c, &early).contains(&ViolationKind::ReadBeforeWrite));

    let mut overlap = good.clone();
    overlap.pattern_choice[0].start = 0;
    overlap.assignments[1].start = 50;
    overlap.assignments[1].finish = 250;
    overlap.makespan = 250;
    let k = kinds(&g, &t, &c, &overlap);
    assert!(k.contains(&ViolationKind::CoreOverlap), "{k:?}");

    let mut wrong = good.clone();
    wrong.pattern_choice[0].pattern = "pipeline.c_0.L3_0".into();
    assert!(kinds(&g, &t, &c, &wrong).contains(&ViolationKind::PatternViolation));

    let mut late = g.clone();
    late.deadline = 300;
    assert!(kinds(&late, &t, &c, &good).contains(&ViolationKind::DeadlineMiss));
}
