//! Acceptance suite: one test per release criterion, each printing a
//! PASS line with the measured values. Run with
//! `cargo test -p assistnav --test acceptance -- --nocapture`.
//!
//! The directional criteria (7, 8, 10) share two trained checkpoints
//! built once per process; expect the full suite to take tens of minutes
//! on a small core count.

use std::sync::OnceLock;

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use assistnav::anna::{
    build_route_system, compose_plan, enterable_routes, select_departure_and_goal, select_route,
    synth_instruction, Route, RoutePlanner, RouteSystem,
};
use assistnav::env::{
    facing_view, generate_environment, is_success, multi_source_distances, panoramic_actions,
    render_observation, shortest_distances, EnvironmentGraph, NavAction, Node, Pose, SimConfig,
    Task, Vec3, NUM_NAV_SLOTS, STOP_SLOT,
};
use assistnav::eval::{
    evaluate, generate_tasks, report_csv_header, report_csv_row, EvalOptions, PolicyName,
    ScriptedPolicy, TaskDataset,
};
use assistnav::policy::{
    action_embeddings, ask_step, gradcheck::check_gradients, nav_step, target_similarity,
    MemRef, NetMemory, PolicyConfig, PolicyParameters, StepInputs, Tape, SIM_THRESHOLD,
};
use assistnav::teachers::{
    efficiency, retrospective_ask_teacher, AskAction, EpisodeTrace, Mode, StepRecord,
    TeacherConfig,
};
use assistnav::training::{
    rollout_episode, train, ActionSelect, RolloutOptions, TrainConfig, World,
};

fn pass(criterion: &str, detail: String) {
    println!("PASS {criterion}: {detail}");
}

// ---------------------------------------------------------------------------
// Criterion 1: Shortest skyline exactness.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_shortest_skyline_exactness() {
    let sim = SimConfig::default();
    let mut details = Vec::new();
    for (n, radius, seed) in [(30usize, 3.2, 301u64), (60, 2.8, 302), (100, 2.9, 303)] {
        let env = generate_environment(n, radius, 4, seed).unwrap();
        let routes = build_route_system(&env, 0, &sim).unwrap();
        let world = World {
            env_id: format!("n{n}"),
            env,
            routes,
        };
        let dataset = generate_tasks(&[&world], &[], 200, seed ^ 0xbeef, &sim).unwrap();
        let opts = EvalOptions {
            policy: PolicyName::Shortest,
            ..EvalOptions::default()
        };
        let out = evaluate(
            std::slice::from_ref(&world),
            &dataset.test_seen,
            None,
            &opts,
            &sim,
        )
        .unwrap();
        assert_eq!(out.metrics.sr, 100.0, "N={n}: SR must be exactly 100");
        assert_eq!(out.metrics.spl, 100.0, "N={n}: SPL must be exactly 100");
        assert_eq!(out.metrics.nav_error, 0.0, "N={n}: zero navigation error");
        details.push(format!("N={n} SR=100 SPL=100 err=0 over 200 tasks"));
    }
    pass("criterion 1 (shortest skyline)", details.join("; "));
}

// ---------------------------------------------------------------------------
// Criterion 2: route-count bound and plan composition.
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_route_system_bounds() {
    let sim = SimConfig::default();
    let mut details = Vec::new();
    for (n, radius, seed) in [
        (8usize, 5.0, 311u64),
        (16, 4.2, 312),
        (33, 3.2, 313),
        (64, 3.0, 314),
        (128, 3.0, 315),
        (256, 3.0, 316),
    ] {
        let env = generate_environment(n, radius, 2, seed).unwrap();
        let routes = build_route_system(&env, 0, &sim).unwrap();
        let bound = 2 * n * (n as f64).log2().ceil() as usize;
        assert!(
            routes.routes.len() <= bound,
            "N={n}: {} routes exceed the 2*N*ceil(log2 N) = {bound} bound",
            routes.routes.len()
        );
        if n <= 64 {
            let planner = RoutePlanner::new(&routes, &env);
            let plan_bound = 2 * (n as f64).log2().ceil() as usize;
            for u in 0..n {
                for v in 0..n {
                    if u == v {
                        continue;
                    }
                    let plan = planner.compose_plan(u, v).unwrap();
                    assert!(plan.len() <= plan_bound, "plan {u}->{v} too long");
                    let mut at = u;
                    for &idx in &plan {
                        assert_eq!(routes.routes[idx].start(), at);
                        at = routes.routes[idx].end();
                    }
                    assert_eq!(at, v);
                }
            }
        }
        details.push(format!("N={n}: {} <= {bound}", routes.routes.len()));
    }
    pass("criterion 2 (route-count and plan bounds)", details.join("; "));
}

// ---------------------------------------------------------------------------
// Criterion 3: selection rules match an exhaustive minimizer.
// ---------------------------------------------------------------------------

/// Exhaustive reference: iterate every (route, path node, goal) triple.
fn brute_force_select(
    rs: &RouteSystem,
    candidates: &[usize],
    env: &EnvironmentGraph,
    goals: &[usize],
) -> (usize, usize, usize) {
    let mut best_route = usize::MAX;
    let mut best = f64::INFINITY;
    for &ri in candidates {
        for &v in &rs.routes[ri].path {
            let d = shortest_distances(env, v);
            for &g in goals {
                if d[g] < best {
                    best = d[g];
                    best_route = ri;
                }
            }
        }
    }
    let route = &rs.routes[best_route];
    let mut v_d = usize::MAX;
    let mut dd = f64::INFINITY;
    for &v in &route.path {
        let d = shortest_distances(env, v);
        let here = goals.iter().map(|&g| d[g]).fold(f64::INFINITY, f64::min);
        if here < dd {
            dd = here;
            v_d = v;
        }
    }
    let d = shortest_distances(env, v_d);
    let mut g_star = usize::MAX;
    let mut gd = f64::INFINITY;
    for &g in goals {
        if d[g] < gd {
            gd = d[g];
            g_star = g;
        }
    }
    (best_route, v_d, g_star)
}

#[test]
fn criterion_3_selection_oracle_equivalence() {
    let mut rng = ChaCha8Rng::seed_from_u64(333);
    let mut checked = 0;
    while checked < 500 {
        let env = generate_environment(12, 3.6, 2, 4000 + checked as u64).unwrap();
        let mut routes = Vec::new();
        for _ in 0..rng.gen_range(1..=10usize) {
            let mut path = vec![rng.gen_range(0..env.len())];
            for _ in 0..rng.gen_range(1..8usize) {
                let cur = *path.last().unwrap();
                let nbrs = env.neighbors(cur);
                path.push(nbrs[rng.gen_range(0..nbrs.len())].0);
            }
            let (h, _e) = facing_view(&env, path[0], path[1]);
            routes.push(Route {
                start_heading: h,
                start_elevation: 0,
                path: path.clone(),
                instruction: synth_instruction(&env, h, &path),
            });
        }
        let rs = RouteSystem::new(routes, 2.0, &env).unwrap();
        let goals: Vec<usize> = (0..rng.gen_range(1..4usize))
            .map(|_| rng.gen_range(0..env.len()))
            .collect();
        let candidates: Vec<usize> = (0..rs.routes.len()).collect();
        let (br, bv, bg) = brute_force_select(&rs, &candidates, &env, &goals);
        let route = select_route(&rs, &candidates, &env, &goals).unwrap();
        assert_eq!(route, br, "route choice diverged from brute force");
        let (v_d, g_star) = select_departure_and_goal(&rs.routes[route], &env, &goals);
        assert_eq!((v_d, g_star), (bv, bg), "departure/goal diverged");
        // Monotonic usefulness.
        let gd = multi_source_distances(&env, &goals);
        assert!(gd[v_d] <= gd[rs.routes[route].start()] + 1e-12);
        checked += 1;
    }
    pass(
        "criterion 3 (selection oracle)",
        format!("{checked} random instances matched the exhaustive minimizer"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: retrospective teacher on exhaustively enumerated traces.
// ---------------------------------------------------------------------------

fn chain_env(n: usize) -> EnvironmentGraph {
    let nodes = (0..n)
        .map(|i| Node {
            id: i,
            pos: Vec3::new(i as f64, 0.0, 0.0),
            scene_seed: i as u64 * 17 + 3,
        })
        .collect();
    let edges = (0..n - 1).map(|i| (i, i + 1)).collect();
    EnvironmentGraph::new(nodes, edges, vec![(0, n - 1)]).unwrap()
}

fn synthetic_step(env: &EnvironmentGraph, node: usize, in_zone: bool, uniform: bool) -> StepRecord {
    let pose = Pose::new(node, 12, 0).unwrap();
    let pan = panoramic_actions(env, &pose);
    let mask = pan.mask();
    let valid: Vec<usize> = (0..NUM_NAV_SLOTS).filter(|&s| mask[s]).collect();
    let mut p_nav = vec![0.0; NUM_NAV_SLOTS];
    if uniform {
        for &s in &valid {
            p_nav[s] = 1.0 / valid.len() as f64;
        }
    } else {
        p_nav[valid[0]] = 1.0;
    }
    StepRecord {
        pose,
        instr_id: 0,
        mode: Mode::MainTask,
        target_node: None,
        has_target_view: false,
        in_zone,
        p_nav,
        p_ask: [1.0, 0.0],
        rho_hat: None,
        ask_decision: AskAction::DoNothing,
        nav_decision_slot: Some(valid[0]),
        executed: NavAction::Stop,
        forced: false,
        teacher_nav_slot: None,
        teacher_ask: None,
        rho_star: None,
    }
}

#[test]
fn criterion_4_retrospective_teacher_exhaustive() {
    let env = chain_env(5);
    let goals = vec![4usize];
    let cfg = TeacherConfig::default();
    let goal_dist = multi_source_distances(&env, &goals);
    let mut traces_checked = 0usize;

    // All node walks of length <= 6: each step stays or moves to an
    // adjacent node (the full action alphabet of the chain).
    fn walks(env: &EnvironmentGraph, prefix: &mut Vec<usize>, len: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == len {
            out.push(prefix.clone());
            return;
        }
        let cur = *prefix.last().unwrap();
        let mut options: Vec<usize> = vec![cur];
        options.extend(env.neighbors(cur).iter().map(|&(v, _)| v));
        for v in options {
            prefix.push(v);
            walks(env, prefix, len, out);
            prefix.pop();
        }
    }

    for start in 0..env.len() {
        for len in 1..=6usize {
            let mut all = Vec::new();
            walks(&env, &mut vec![start], len, &mut all);
            for walk in all {
                // Zone membership alternates so the composite rule's zone
                // clause is exercised on both branches.
                for zone_pattern in [true, false] {
                    let steps: Vec<StepRecord> = walk
                        .iter()
                        .enumerate()
                        .map(|(t, &v)| {
                            synthetic_step(&env, v, zone_pattern || t % 2 == 0, true)
                        })
                        .collect();
                    let mut trace = EpisodeTrace {
                        start: steps[0].pose,
                        final_pose: steps.last().unwrap().pose,
                        steps,
                        travel_distance: 0.0,
                    };
                    retrospective_ask_teacher(&mut trace, &env, &goals, &cfg).unwrap();
                    for t in 0..trace.steps.len() {
                        let here = goal_dist[trace.steps[t].pose.node];
                        // Brute-force lookahead: does any strictly closer
                        // future step exist?
                        let lost = !trace.steps[t + 1..]
                            .iter()
                            .any(|s| goal_dist[s.pose.node] < here);
                        let rho = trace.steps[t].rho_star.unwrap();
                        assert_eq!(rho[0], lost, "lost label diverged at step {t}");
                        // Composite rule: (lost or uncertain) and
                        // never-asked and in-zone.
                        let uncertain = {
                            let s = &trace.steps[t];
                            let eff = efficiency(&s.p_nav);
                            let argmax = s
                                .p_nav
                                .iter()
                                .enumerate()
                                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(b.0.cmp(&a.0)))
                                .unwrap()
                                .0;
                            eff >= cfg.gamma && argmax != s.teacher_nav_slot.unwrap()
                        };
                        assert_eq!(rho[1], uncertain);
                        let never = !trace.steps[..t].iter().any(|s| {
                            s.ask_decision == AskAction::RequestHelp
                                && s.pose.node == trace.steps[t].pose.node
                        });
                        assert_eq!(rho[2], never);
                        let expect_ask = (rho[0] || rho[1]) && rho[2] && trace.steps[t].in_zone;
                        let got = trace.steps[t].teacher_ask.unwrap() == AskAction::RequestHelp;
                        assert_eq!(got, expect_ask, "composite rule diverged at step {t}");
                    }
                    traces_checked += 1;
                }
            }
        }
    }
    pass(
        "criterion 4 (retrospective teacher)",
        format!("{traces_checked} enumerated traces matched the lookahead oracle"),
    );
}

// ---------------------------------------------------------------------------
// Criterion 5: gradient correctness.
// ---------------------------------------------------------------------------

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0))
}

/// Per-operation finite-difference checks on a fresh parameter set.
fn check_operations(seed: u64) {
    let mut params = PolicyParameters::new(PolicyConfig::tiny(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let h = params.cfg.hidden;
    let nav = params.nav;

    // Instruction encoder.
    let tokens: Vec<u32> = vec![7, 8, 40, 6];
    let probe: Vec<Array1<f64>> = (0..tokens.len()).map(|_| rand_vec(&mut rng, h)).collect();
    let encode_loss = |p: &PolicyParameters| -> f64 {
        let vecs = assistnav::policy::encode_instruction(p, assistnav::policy::NetKind::Nav, &tokens)
            .unwrap();
        vecs.iter().zip(&probe).map(|(v, q)| v.dot(q)).sum()
    };
    let mut grads = params.store.zeros_like();
    {
        let mut tape = Tape::new();
        let mut reg_rng = ChaCha8Rng::seed_from_u64(0);
        let mut reg = assistnav::policy::Regularizer {
            rate: 0.0,
            rng: &mut reg_rng,
        };
        let ids = assistnav::policy::encode_tokens(
            &mut tape,
            &params.store,
            &nav,
            &params.cfg,
            &tokens,
            &mut reg,
        )
        .unwrap();
        let seeds = ids.iter().zip(&probe).map(|(&id, q)| (id, q.clone())).collect();
        tape.backward(seeds, &params.store, &mut grads);
    }
    check_gradients(&mut params, &grads, |p| encode_loss(p)).expect("encoder gradients");

    // Time increments (local and global) through their layer norms.
    let x_loc = rand_vec(&mut rng, h);
    let x_glob = rand_vec(&mut rng, h);
    let probe_t = rand_vec(&mut rng, h);
    let time_loss = |p: &PolicyParameters| -> f64 {
        let mut tape = Tape::new();
        let loc_prev = tape.leaf(x_loc.clone());
        let loc = assistnav::policy::inc_time(&mut tape, &p.store, &p.nav.time_loc, loc_prev, loc_prev);
        let glob_prev = tape.leaf(x_glob.clone());
        let packed = tape.concat(&[loc, glob_prev]);
        let glob = assistnav::policy::inc_time(&mut tape, &p.store, &p.nav.time_glob, packed, glob_prev);
        tape.value(glob).dot(&probe_t)
    };
    let mut grads = params.store.zeros_like();
    {
        let mut tape = Tape::new();
        let loc_prev = tape.leaf(x_loc.clone());
        let loc = assistnav::policy::inc_time(&mut tape, &params.store, &nav.time_loc, loc_prev, loc_prev);
        let glob_prev = tape.leaf(x_glob.clone());
        let packed = tape.concat(&[loc, glob_prev]);
        let glob =
            assistnav::policy::inc_time(&mut tape, &params.store, &nav.time_glob, packed, glob_prev);
        tape.backward(vec![(glob, probe_t.clone())], &params.store, &mut grads);
    }
    check_gradients(&mut params, &grads, |p| time_loss(p)).expect("inc-time gradients");

    // Multi-head attention, feed-forward and cosine-gated attention in
    // one fused objective (covers affine/relu/layer-norm/softmax paths).
    let mem_k: Vec<Array1<f64>> = (0..5).map(|_| rand_vec(&mut rng, h)).collect();
    let mem_v: Vec<Array1<f64>> = (0..5).map(|_| rand_vec(&mut rng, h)).collect();
    let q_in = rand_vec(&mut rng, h);
    let probe_m = rand_vec(&mut rng, h);
    let attn_loss = |p: &PolicyParameters| -> (f64, Tape, usize) {
        let mut tape = Tape::new();
        let mut reg_rng = ChaCha8Rng::seed_from_u64(0);
        let mut reg = assistnav::policy::Regularizer {
            rate: 0.0,
            rng: &mut reg_rng,
        };
        let q = tape.leaf(q_in.clone());
        let attended = assistnav::policy::multi_attend(
            &mut tape,
            &p.store,
            &p.nav.intra_attn,
            p.cfg.n_heads,
            q,
            MemRef::Const(mem_k.clone()),
            MemRef::Const(mem_v.clone()),
            &mut reg,
        );
        let out = assistnav::policy::ffn(&mut tape, &p.store, &p.nav.intra_ffn, attended, &mut reg);
        let sim = tape.sim_attend(out, mem_k.clone(), mem_v.clone(), SIM_THRESHOLD, h);
        let combined = tape.add(out, sim);
        (tape.value(combined).dot(&probe_m), tape, combined)
    };
    let (_, tape, out_id) = attn_loss(&params);
    let mut grads = params.store.zeros_like();
    tape.backward(vec![(out_id, probe_m.clone())], &params.store, &mut grads);
    check_gradients(&mut params, &grads, |p| attn_loss(p).0).expect("attention gradients");
}

#[test]
fn criterion_5_gradient_correctness() {
    // Per-operation checks on a few seeds, full two-network step checks
    // on twenty.
    for seed in [0u64, 1, 2] {
        check_operations(seed);
    }
    let mut full_checked = 0;
    let mut seed = 0u64;
    while full_checked < 20 {
        match full_pass_check(seed) {
            FullPass::Checked => full_checked += 1,
            FullPass::UnstableIndicator => {}
        }
        seed += 1;
        assert!(seed < 60, "too many threshold-adjacent configurations");
    }
    pass(
        "criterion 5 (gradient correctness)",
        format!(
            "per-op checks on 3 seeds and full two-network checks on {full_checked} seeds at rtol 1e-4"
        ),
    );
}

enum FullPass {
    Checked,
    /// A cosine landed within 5e-3 of the match threshold; central
    /// differences would straddle the indicator, so the configuration is
    /// resampled (the gradient itself is fine).
    UnstableIndicator,
}

fn full_pass_check(seed: u64) -> FullPass {
    let env = generate_environment(8, 4.0, 1, 900 + seed).unwrap();
    let sim = SimConfig {
        feature_dim: 8,
        ..SimConfig::default()
    };
    let mut params = PolicyParameters::new(PolicyConfig::tiny(), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let nodes: Vec<usize> = (0..3).map(|_| rng.gen_range(0..env.len())).collect();
    let tgt = render_observation(&env, (nodes[2] + 3) % env.len(), &sim);
    let tokens: Vec<u32> = vec![7, 8 + (seed % 4) as u32, 41, 6];

    let fixed_p_nav = {
        let pose = Pose::new(nodes[2], 4, 0).unwrap();
        let pan = panoramic_actions(&env, &pose);
        let valid: Vec<usize> = (0..NUM_NAV_SLOTS).filter(|&s| pan.mask()[s]).collect();
        let mut p = vec![0.0; NUM_NAV_SLOTS];
        for &s in &valid {
            p[s] = 1.0 / valid.len() as f64;
        }
        p
    };

    let mut nav_mem = NetMemory::new(&params.cfg);
    let mut ask_mem = NetMemory::new(&params.cfg);
    {
        let mut warm_rng = ChaCha8Rng::seed_from_u64(0);
        for &node in &nodes[..2] {
            let pose = Pose::new(node, 4, 0).unwrap();
            let views = render_observation(&env, node, &sim);
            let pan = panoramic_actions(&env, &pose);
            let (embs, mask) = action_embeddings(&pan, &views, false);
            let delta = target_similarity(Some(&views), Some(&tgt));
            let last = Array1::zeros(params.cfg.action_input_dim());
            let mut inputs = StepInputs {
                instr_id: 0,
                tokens: &tokens,
                cur_views: &views,
                tgt_views: Some(&tgt),
                delta: &delta,
                last_action_emb: &last,
                action_embs: &embs,
                mask: &mask,
                in_zone: true,
                p_nav: None,
            };
            nav_step(&params, &mut nav_mem, &inputs, 0.0, &mut warm_rng).unwrap();
            inputs.p_nav = Some(&fixed_p_nav);
            ask_step(&params, &mut ask_mem, &inputs, 0.0, &mut warm_rng).unwrap();
        }
    }

    let node = nodes[2];
    let pose = Pose::new(node, 4, 0).unwrap();
    let views = render_observation(&env, node, &sim);
    let pan = panoramic_actions(&env, &pose);
    let (embs, mask) = action_embeddings(&pan, &views, false);
    let delta = target_similarity(Some(&views), Some(&tgt));
    let valid: Vec<usize> = (0..NUM_NAV_SLOTS).filter(|&s| mask[s]).collect();
    let star = valid[0];
    let mistake = *valid.last().unwrap();
    let rho_star = [1.0, 0.0, 1.0];

    let run_step = |p: &PolicyParameters| -> (f64, Option<(assistnav::policy::NavForward, assistnav::policy::AskForward)>) {
        let mut nm = nav_mem.clone();
        let mut am = ask_mem.clone();
        let mut step_rng = ChaCha8Rng::seed_from_u64(1);
        let last = Array1::zeros(p.cfg.action_input_dim());
        let mut inputs = StepInputs {
            instr_id: 0,
            tokens: &tokens,
            cur_views: &views,
            tgt_views: Some(&tgt),
            delta: &delta,
            last_action_emb: &last,
            action_embs: &embs,
            mask: &mask,
            in_zone: true,
            p_nav: None,
        };
        let nav = nav_step(p, &mut nm, &inputs, 0.0, &mut step_rng).unwrap();
        inputs.p_nav = Some(&fixed_p_nav);
        let ask = ask_step(p, &mut am, &inputs, 0.0, &mut step_rng).unwrap();
        let lp = nav.tape.value(nav.log_p);
        let lpa = ask.tape.value(ask.log_p);
        let mut loss = -lp[star] + 0.5 * lp[mistake] - lpa[1];
        for i in 0..3 {
            let y = rho_star[i];
            loss -= (y * ask.rho_hat[i].ln() + (1.0 - y) * (1.0 - ask.rho_hat[i]).ln()) / 3.0;
        }
        // The appended intra query for the indicator-margin guard.
        let q = nm.intra_in.last().unwrap();
        for keys in [&nav_mem.intra_in, &ask_mem.intra_in] {
            for k in keys.iter() {
                let cos = q.dot(k) / (q.dot(q).sqrt() * k.dot(k).sqrt()).max(1e-12);
                if (cos - SIM_THRESHOLD).abs() < 5e-3 {
                    return (f64::NAN, None);
                }
            }
        }
        (loss, Some((nav, ask)))
    };

    let (base_loss, handles) = run_step(&params);
    if base_loss.is_nan() {
        return FullPass::UnstableIndicator;
    }
    let (nav, ask) = handles.unwrap();
    let mut grads = params.store.zeros_like();
    let mut nav_seed = Array1::zeros(NUM_NAV_SLOTS);
    nav_seed[star] = -1.0;
    nav_seed[mistake] = 0.5;
    nav.tape
        .backward(vec![(nav.log_p, nav_seed)], &params.store, &mut grads);
    let mut ask_seed = Array1::zeros(2);
    ask_seed[1] = -1.0;
    let mut reason_seed = Array1::zeros(3);
    for i in 0..3 {
        reason_seed[i] = (ask.rho_hat[i] - rho_star[i]) / 3.0;
    }
    ask.tape.backward(
        vec![(ask.log_p, ask_seed), (ask.reason_scores, reason_seed)],
        &params.store,
        &mut grads,
    );
    check_gradients(&mut params, &grads, |p| run_step(p).0)
        .unwrap_or_else(|e| panic!("seed {seed}: {e}"));
    FullPass::Checked
}

// ---------------------------------------------------------------------------
// Criterion 6: episode-protocol conformance.
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_episode_protocol_conformance() {
    let env = chain_env(6);
    let sim = SimConfig::default();
    let routes = build_route_system(&env, 0, &sim).unwrap();
    let task = Task {
        env_id: "chain".to_string(),
        object_type: 0,
        start: Pose::new(2, 12, 0).unwrap(),
        goals: vec![5],
        budget: 20,
    };
    let slot_toward = |from: usize, to: usize| {
        let pose = Pose::new(from, 12, 0).unwrap();
        panoramic_actions(&env, &pose).slot_of_target(to).unwrap()
    };
    let run = |nav: Vec<usize>, ask: Vec<bool>, budget: usize, rs: &RouteSystem| {
        let mut policy = ScriptedPolicy::new(nav, ask);
        let options = RolloutOptions {
            select: ActionSelect::Greedy,
            budget,
            seed: 11,
        };
        rollout_episode(&env, rs, &task, &mut policy, &options, &sim)
            .unwrap()
            .0
    };

    // Branch: stop in main task.
    let t = run(vec![STOP_SLOT], vec![false], 20, &routes);
    assert_eq!(
        (t.steps.len(), t.final_pose.node, t.steps[0].mode),
        (1, 2, Mode::MainTask)
    );

    // Branch: request in zone forces route entry and an instruction
    // switch; the decision-time record stays main-task.
    let t = run(vec![0, STOP_SLOT, STOP_SLOT], vec![true, false, false], 20, &routes);
    assert_eq!(t.steps[0].mode, Mode::MainTask);
    assert!(t.steps[0].forced && t.steps[0].nav_decision_slot.is_none());
    assert_eq!(t.steps[1].mode, Mode::SubTask);
    assert_ne!(t.steps[1].instr_id, 0);
    assert!(t.steps[1].has_target_view && t.steps[1].target_node.is_some());
    // Branch: stop in subtask returns to the main task with the goal view
    // and a forced in-place stay; the following main-task stop ends it.
    assert_eq!(t.steps[1].nav_decision_slot, Some(STOP_SLOT));
    assert!(t.steps[1].forced);
    assert_eq!(t.steps[2].mode, Mode::MainTask);
    assert_eq!(t.steps[2].instr_id, 0);
    assert!(t.steps[2].has_target_view);
    assert_eq!(t.steps.len(), 3);

    // Branch: request outside every zone is masked to do-nothing.
    let (h, e) = facing_view(&env, 4, 5);
    let lonely = RouteSystem::new(
        vec![Route {
            start_heading: h,
            start_elevation: e,
            path: vec![4, 5],
            instruction: synth_instruction(&env, h, &[4, 5]),
        }],
        0.5,
        &env,
    )
    .unwrap();
    let t = run(
        vec![slot_toward(2, 3), slot_toward(3, 4)],
        vec![true, true],
        2,
        &lonely,
    );
    assert!(t.steps.iter().all(|s| !s.in_zone
        && s.ask_decision == AskAction::DoNothing
        && s.p_ask == [1.0, 0.0]));

    // Branch: budget exhaustion ends the episode unfinished.
    let t = run(
        vec![slot_toward(2, 3), slot_toward(3, 4), slot_toward(4, 5)],
        vec![false, false, false],
        3,
        &routes,
    );
    assert_eq!(t.steps.len(), 3);
    assert_eq!(t.final_pose.node, 5);

    // Enterability sanity for the forced entry: the entered route started
    // within reach of the request pose.
    let t = run(vec![0], vec![true], 1, &routes);
    let entered = match t.steps[0].executed {
        NavAction::Move { to, .. } => to,
        NavAction::Stop => unreachable!(),
    };
    let reachable = enterable_routes(&routes, &env, &task.start)
        .iter()
        .map(|&i| routes.routes[i].start())
        .collect::<Vec<_>>();
    assert!(reachable.contains(&entered));

    pass(
        "criterion 6 (episode protocol)",
        "stop-main, forced entry, subtask depart, masked request, and budget branches all matched the hand trace".to_string(),
    );
}

// ---------------------------------------------------------------------------
// Criteria 7, 8, 10: the trained suite.
// ---------------------------------------------------------------------------

struct Suite {
    worlds: Vec<World>,
    dataset: TaskDataset,
    sim: SimConfig,
    alpha1: PolicyParameters,
    alpha0: PolicyParameters,
}

static SUITE: OnceLock<Suite> = OnceLock::new();

fn suite() -> &'static Suite {
    SUITE.get_or_init(|| {
        let sim = SimConfig::default();
        let mut worlds = Vec::new();
        for (i, seed) in (201u64..=206).enumerate() {
            let env = generate_environment(40, 2.8, 5, seed).unwrap();
            let routes = build_route_system(&env, 0, &sim).unwrap();
            worlds.push(World {
                env_id: format!("env_{i}"),
                env,
                routes,
            });
        }
        let seen: Vec<&World> = worlds[..5].iter().collect();
        let unseen: Vec<&World> = worlds[5..].iter().collect();
        let dataset = generate_tasks(&seen, &unseen, 200, 7, &sim).unwrap();
        let train_cfg = |alpha: f64| TrainConfig {
            alpha,
            iterations: 2000,
            batch_size: 32,
            seed: 1,
            eval_every: 0,
            ..TrainConfig::default()
        };
        let base = PolicyParameters::new(PolicyConfig::default(), 1).unwrap();
        eprintln!("[suite] training alpha=1 (2000 iterations)...");
        let alpha1 = train(&worlds, &dataset.train, &[], base.clone(), &train_cfg(1.0), &sim)
            .unwrap()
            .params;
        eprintln!("[suite] training alpha=0 (2000 iterations)...");
        let alpha0 = train(&worlds, &dataset.train, &[], base, &train_cfg(0.0), &sim)
            .unwrap()
            .params;
        Suite {
            worlds,
            dataset,
            sim,
            alpha1,
            alpha0,
        }
    })
}

fn eval_policy(s: &Suite, policy: PolicyName, params: Option<&PolicyParameters>) -> assistnav::eval::EvalMetrics {
    let opts = EvalOptions {
        policy,
        seed: 17,
        ..EvalOptions::default()
    };
    evaluate(&s.worlds, &s.dataset.test_seen, params, &opts, &s.sim)
        .unwrap()
        .metrics
}

#[test]
fn criterion_7_assistance_ordering() {
    let s = suite();
    let learned = eval_policy(s, PolicyName::Learned, Some(&s.alpha1));
    let no_ask = eval_policy(s, PolicyName::NoAsk, Some(&s.alpha1));
    let random_walk = eval_policy(s, PolicyName::RandomWalk, None);
    assert!(
        learned.sr > no_ask.sr + 20.0,
        "SR(learned)={:.2} must exceed SR(no_ask)={:.2} by more than 20 points",
        learned.sr,
        no_ask.sr
    );
    assert!(
        no_ask.sr > random_walk.sr,
        "SR(no_ask)={:.2} must exceed SR(random_walk)={:.2}",
        no_ask.sr,
        random_walk.sr
    );
    pass(
        "criterion 7 (assistance ordering)",
        format!(
            "SR learned {:.2}% > no_ask {:.2}% + 20 > random_walk {:.2}% (requests/task {:.2})",
            learned.sr, no_ask.sr, random_walk.sr, learned.requests_per_task
        ),
    );
}

#[test]
fn criterion_8_curiosity_reduces_repeats() {
    let s = suite();
    let with = eval_policy(s, PolicyName::Learned, Some(&s.alpha1));
    let without = eval_policy(s, PolicyName::Learned, Some(&s.alpha0));
    assert!(
        with.nav_mistake_repeat < without.nav_mistake_repeat,
        "nav mistake repeat: alpha=1 {:.2}% must be below alpha=0 {:.2}%",
        with.nav_mistake_repeat,
        without.nav_mistake_repeat
    );
    assert!(
        with.help_request_repeat < without.help_request_repeat,
        "help request repeat: alpha=1 {:.2}% must be below alpha=0 {:.2}%",
        with.help_request_repeat,
        without.help_request_repeat
    );
    pass(
        "criterion 8 (curiosity effect)",
        format!(
            "nav repeat {:.2}% < {:.2}%, request repeat {:.2}% < {:.2}%",
            with.nav_mistake_repeat,
            without.nav_mistake_repeat,
            with.help_request_repeat,
            without.help_request_repeat
        ),
    );
}

// ---------------------------------------------------------------------------
// Criterion 9: SPL unit suite.
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_spl_units() {
    let env = chain_env(11);
    let sim = SimConfig::default();
    let task = Task {
        env_id: "chain".to_string(),
        object_type: 0,
        start: Pose::new(0, 12, 0).unwrap(),
        goals: vec![10],
        budget: 50,
    };
    let stub = |final_node: usize, travel: f64| EpisodeTrace {
        steps: vec![synthetic_step(&env, 0, true, true)],
        start: task.start,
        final_pose: Pose::new(final_node, 12, 0).unwrap(),
        travel_distance: travel,
    };
    let metric = |trace: &EpisodeTrace| {
        let mut t = trace.clone();
        retrospective_ask_teacher(&mut t, &env, &task.goals, &TeacherConfig::default()).unwrap();
        assistnav::eval::compute_metrics(
            &[assistnav::eval::EvalItem {
                trace: &t,
                task: &task,
                env: &env,
            }],
            &sim,
        )
        .unwrap()
    };
    let optimal = metric(&stub(10, 10.0));
    assert!((optimal.spl - 100.0).abs() < 1e-12);
    let failed = metric(&stub(5, 3.0));
    assert_eq!(failed.spl, 0.0);
    let detour = metric(&stub(10, 20.0));
    assert!((detour.spl - 50.0).abs() < 1e-12);
    // SPL <= SR on every generated report.
    let s = suite();
    for (policy, params) in [
        (PolicyName::Learned, Some(&s.alpha1)),
        (PolicyName::RandomWalk, None),
        (PolicyName::ForwardK, None),
        (PolicyName::Shortest, None),
    ] {
        let m = eval_policy(s, policy, params);
        assert!(
            m.spl <= m.sr + 1e-9,
            "{}: SPL {:.3} exceeded SR {:.3}",
            policy.as_str(),
            m.spl,
            m.sr
        );
    }
    pass(
        "criterion 9 (SPL units)",
        "100/0/50 cases exact; SPL <= SR across four policies".to_string(),
    );
}

// ---------------------------------------------------------------------------
// Criterion 10: byte-identical evaluation reports.
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_evaluation_determinism() {
    let s = suite();
    let report = |seed: u64| {
        let opts = EvalOptions {
            policy: PolicyName::Learned,
            seed,
            ..EvalOptions::default()
        };
        let out = evaluate(&s.worlds, &s.dataset.test_seen, Some(&s.alpha1), &opts, &s.sim)
            .unwrap();
        let mut csv = report_csv_header();
        csv.push('\n');
        csv.push_str(&report_csv_row("test_seen", "learned", &out.metrics));
        csv.push('\n');
        csv
    };
    let a = report(23);
    let b = report(23);
    assert_eq!(a, b, "identical seeds and checkpoint must give byte-identical CSV");
    // And for a stochastic baseline, where the per-episode seeding does
    // the work.
    let baseline = |_: ()| {
        let opts = EvalOptions {
            policy: PolicyName::RandomWalk,
            seed: 5,
            ..EvalOptions::default()
        };
        let out = evaluate(&s.worlds, &s.dataset.test_seen, None, &opts, &s.sim).unwrap();
        report_csv_row("test_seen", "random_walk", &out.metrics)
    };
    assert_eq!(baseline(()), baseline(()));
    pass(
        "criterion 10 (determinism)",
        "two learned-policy reports and two random-walk reports were byte-identical".to_string(),
    );
}
