use bloomclock::{
    classify_events, classify_pair, sample_slice, simulate, ExecutionLog, ExperimentConfig, Outcome,
    SliceSpec,
};

/// Happened-before from the log's structure alone: program order plus
/// send-to-receive edges, closed transitively.
fn reachability(log: &ExecutionLog) -> Vec<Vec<bool>> {
    let n = log.len();
    let mut adj = vec![Vec::new(); n];
    let mut last_on = vec![None; log.config.process_count()];
    for (i, ev) in log.events.iter().enumerate() {
        if let Some(prev) = last_on[ev.pid.index()].replace(i) {
            adj[prev].push(i);
        }
        if let Some(send) = ev.send_gsn {
            adj[send as usize - 1].push(i);
        }
    }
    let mut reach = vec![vec![false; n]; n];
    for (start, row) in reach.iter_mut().enumerate() {
        let mut stack = adj[start].clone();
        while let Some(v) = stack.pop() {
            if !row[v] {
                row[v] = true;
                stack.extend(&adj[v]);
            }
        }
    }
    reach
}

#[test]
fn vector_clocks_match_graph_reachability() {
    for seed in 1..=5 {
        for cfg in [
            ExperimentConfig::complete(5, 3, 2, 0.3, seed),
            ExperimentConfig::star(4, 2, 2, seed),
            ExperimentConfig::broadcast(5, 2, 2, seed),
        ] {
            let mut cfg = cfg;
            cfg.gsn_limit = Some(50);
            let log = simulate(&cfg).unwrap();
            let reach = reachability(&log);
            for (i, y) in log.events.iter().enumerate() {
                for (j, z) in log.events.iter().enumerate() {
                    let vector = y.vector_ts.happened_before(&z.vector_ts).unwrap();
                    assert_eq!(vector, reach[i][j], "{cfg:?} gsn {} -> {}", y.gsn, z.gsn);
                    let bloom = y.bloom_ts.leq(&z.bloom_ts).unwrap();
                    assert!(!vector || bloom, "false negative at {} -> {}", y.gsn, z.gsn);
                }
            }
        }
    }
}

#[test]
fn seeded_run_has_no_false_negatives() {
    let log = simulate(&ExperimentConfig::complete(50, 5, 2, 0.0, 42)).unwrap();
    let spec = SliceSpec { start_gsn: 1, stride: 3, end_gsn: None };
    let counts = classify_events(&sample_slice(&log, &spec).unwrap()).unwrap();
    assert_eq!(counts.fn_, 0);
    assert!(counts.tp > 0 && counts.fp > 0 && counts.tn > 0);
}

#[test]
fn gsn_order_linearizes_causality() {
    let log = simulate(&ExperimentConfig::complete(10, 2, 2, 0.2, 3)).unwrap();
    let events: Vec<_> = log.events.iter().step_by(7).collect();
    for y in &events {
        for z in &events {
            if z.gsn <= y.gsn {
                assert_ne!(classify_pair(y, z).unwrap(), Outcome::TruePositive);
            }
        }
    }
}
