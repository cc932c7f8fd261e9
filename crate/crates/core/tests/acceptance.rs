//! Acceptance suite. Runs every criterion, prints one line each, and fails if
//! any hard criterion fails. Criterion 9 is reported but never fails the run.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use layerpar::config::{enumerate_configs, owned_region, required_input_region, InputSlot};
use layerpar::cost::{sync_cost, transfer_cost};
use layerpar::oracle::{brute_force, brute_force_plan, DEFAULT_BUDGET};
use layerpar::{
    baseline_strategy, build_cost_tables, builtin_model, evaluate_strategy, plan, plan_with_tables, quantize_seconds,
    random_series_parallel_graph, Baseline, Config, DeviceGraph, Error, Exact, GraphBuilder, LayerKind, Model,
    PlanOptions, RandomGraphSpec, ReducedGraph, TensorShape,
};

enum Verdict {
    Pass(String),
    Fail(String),
    /// Soft check that did not hold; reported, not fatal.
    Deviation(String),
}

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn secs(d: Duration) -> String {
    format!("{:.3}s", d.as_secs_f64())
}

fn random_instance(
    seed: u64,
    nodes: usize,
    configs: usize,
    branch: f64,
) -> (layerpar::ComputationGraph, layerpar::ExactCostTables) {
    let spec = RandomGraphSpec {
        max_configs_per_layer: configs,
        branch_probability: branch,
        ..RandomGraphSpec::new(seed, nodes)
    };
    random_series_parallel_graph::<Exact>(&spec).unwrap()
}

fn oracle_equivalence() -> Verdict {
    let start = Instant::now();
    let mut checked = 0;
    for seed in 0..200u64 {
        let nodes = 2 + (seed as usize % 7);
        let configs = 1 + (seed as usize / 7 % 4);
        let (g, t) = random_instance(seed, nodes, configs, 0.4);
        let planned = plan_with_tables(&g, &t, PlanOptions::default()).unwrap();
        let brute = brute_force_plan(&g, &t, DEFAULT_BUDGET).unwrap();
        if planned.search_cost != brute.cost || evaluate_strategy(&g, &t, &planned.strategy).unwrap() != brute.cost {
            return Verdict::Fail(format!("seed {seed}: plan {} vs brute {}", planned.cost, brute.cost));
        }
        checked += 1;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(30), format!("{checked} instances equal, {}", secs(elapsed)))
}

fn elimination_preserves_optimum() -> Verdict {
    let start = Instant::now();
    let (mut node_cases, mut edge_cases, mut strategies) = (0, 0, 0u64);
    let mut seed = 0u64;
    while (node_cases < 60 || edge_cases < 60) && seed < 10_000 {
        let (g, t) = random_instance(seed, 3 + seed as usize % 4, 3, 0.6);
        seed += 1;
        let mut rg = ReducedGraph::new(&g, &t);
        let before = brute_force(&rg.problem().0, DEFAULT_BUDGET).unwrap().cost;
        if rg.eliminate_node() {
            let after = brute_force(&rg.problem().0, DEFAULT_BUDGET).unwrap().cost;
            if after != before {
                return Verdict::Fail(format!(
                    "seed {}: node elimination moved the optimum {before} -> {after}",
                    seed - 1
                ));
            }
            node_cases += 1;
        }
        // reach a state with parallel edges, then apply exactly one edge elimination
        loop {
            let (prev, _) = rg.problem();
            if rg.eliminate_edge() {
                let (next, _) = rg.problem();
                let b = brute_force(&prev, DEFAULT_BUDGET).unwrap().cost;
                let a = brute_force(&next, DEFAULT_BUDGET).unwrap().cost;
                if a != b {
                    return Verdict::Fail(format!("seed {}: edge elimination moved the optimum", seed - 1));
                }
                let sizes: Vec<usize> = prev.node_costs.iter().map(Vec::len).collect();
                let mut choice = vec![0; sizes.len()];
                loop {
                    if prev.evaluate(&choice) != next.evaluate(&choice) {
                        return Verdict::Fail(format!("seed {}: strategy {choice:?} changed cost", seed - 1));
                    }
                    strategies += 1;
                    let mut i = choice.len();
                    while i > 0 {
                        i -= 1;
                        choice[i] += 1;
                        if choice[i] < sizes[i] {
                            break;
                        }
                        choice[i] = 0;
                    }
                    if choice.iter().all(|&c| c == 0) {
                        break;
                    }
                }
                edge_cases += 1;
                break;
            }
            if !rg.eliminate_node() {
                break;
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(
        node_cases >= 50 && edge_cases >= 50 && elapsed < Duration::from_secs(30),
        format!(
            "{node_cases} node and {edge_cases} edge eliminations ({strategies} strategies compared), {}",
            secs(elapsed)
        ),
    )
}

fn reduction_power() -> Verdict {
    let devices = DeviceGraph::default_cluster(4).unwrap();
    let vgg = builtin_model(Model::Vgg16, 32).unwrap();
    let t = build_cost_tables::<f64>(&vgg, &devices).unwrap();
    let start = Instant::now();
    let mut rg = ReducedGraph::new(&vgg, &t);
    let mut node_elims = 0;
    while rg.eliminate_node() {
        node_elims += 1;
    }
    let vgg_final = rg.live_nodes().len();
    let vgg_stuck = !rg.eliminate_edge();

    let inc = builtin_model("inception_chain".parse().unwrap(), 32).unwrap();
    let ti = build_cost_tables::<f64>(&inc, &devices).unwrap();
    let mut ri = ReducedGraph::new(&inc, &ti);
    ri.reduce();
    let elapsed = start.elapsed();
    let inc_nodes = ri.log().iter().filter(|r| matches!(r, layerpar::EliminationRecord::Node { .. })).count();
    let inc_edges = ri.log().len() - inc_nodes;
    let inc_final = ri.live_nodes().len();
    ensure(
        vgg.layer_count() == 21
            && vgg_final == 2
            && vgg_stuck
            && inc.node_count() >= 102
            && inc_final == 2
            && inc_nodes > 0
            && inc_edges > 0
            && elapsed < Duration::from_secs(1),
        format!(
            "vgg16 ({} layers) -> {vgg_final} nodes by {node_elims} node eliminations; inception_chain ({} nodes) -> {inc_final} nodes by {inc_nodes} node + {inc_edges} edge eliminations; {}",
            vgg.layer_count(),
            inc.node_count(),
            secs(elapsed)
        ),
    )
}

fn dp_vs_dfs() -> Verdict {
    let devices = DeviceGraph::default_cluster(4).unwrap();
    let lenet = builtin_model(Model::LeNet5, 32).unwrap();
    let t = build_cost_tables::<f64>(&lenet, &devices).unwrap();
    let start = Instant::now();
    let planned = plan_with_tables(&lenet, &t, PlanOptions::default()).unwrap();
    let plan_time = start.elapsed();
    let start = Instant::now();
    let brute = brute_force_plan(&lenet, &t, DEFAULT_BUDGET).unwrap();
    let brute_time = start.elapsed();
    let agree_f64 = (planned.cost - brute.cost).abs() <= 1e-12 * brute.cost;

    let exact = t.convert(quantize_seconds);
    let p_exact = plan_with_tables(&lenet, &exact, PlanOptions::default()).unwrap();
    let b_exact = brute_force_plan(&lenet, &exact, DEFAULT_BUDGET).unwrap();
    let agree_exact = p_exact.cost == b_exact.cost;

    let vgg = builtin_model(Model::Vgg16, 32).unwrap();
    let start = Instant::now();
    let (tv, _) = plan(&vgg, &devices, PlanOptions::default()).unwrap();
    let vgg_time = start.elapsed();
    let vgg_brute = brute_force_plan(&vgg, &tv, DEFAULT_BUDGET);
    let aborted = matches!(vgg_brute, Err(Error::BudgetExceeded { .. }));
    let speedup = brute_time.as_secs_f64() / plan_time.as_secs_f64().max(1e-9);
    ensure(
        agree_f64 && agree_exact && speedup >= 10.0 && vgg_time < Duration::from_secs(1) && aborted,
        format!(
            "lenet5/4: plan {} vs brute {} ({} strategies, {speedup:.0}x), costs equal; vgg16/4 plan {}, brute {}",
            secs(plan_time),
            secs(brute_time),
            brute.visited,
            secs(vgg_time),
            match vgg_brute {
                Err(e) => format!("aborted: {e}"),
                Ok(_) => "finished".into(),
            }
        ),
    )
}

fn planner_speed() -> Verdict {
    let devices = DeviceGraph::default_cluster(16).unwrap();
    let g = builtin_model("inception_chain".parse().unwrap(), 32).unwrap();
    let start = Instant::now();
    let (_, out) = plan(&g, &devices, PlanOptions::default()).unwrap();
    let elapsed = start.elapsed();
    ensure(
        g.node_count() >= 102 && elapsed < Duration::from_secs(10),
        format!(
            "inception_chain ({} nodes) on 16 devices planned in {}, final graph {} nodes",
            g.node_count(),
            secs(elapsed),
            out.final_nodes
        ),
    )
}

/// Marks every input element read by the partition, from the window definition.
fn mark_window(out: usize, k: usize, s: usize, p: usize, extent: usize) -> impl Iterator<Item = usize> {
    (0..k).filter_map(move |j| (out * s + j).checked_sub(p)).filter(move |&i| i < extent)
}

fn region_oracle() -> Verdict {
    let start = Instant::now();
    let mut regions = 0u64;
    for h in 1..=16usize {
        for w in 1..=16usize {
            for k in 1..=5usize {
                for s in 1..=3usize {
                    for p in 0..=k / 2 {
                        for pool in [false, true] {
                            let kind = if pool {
                                LayerKind::Pool2D { kernel: (k, k), stride: (s, s), padding: (p, p) }
                            } else {
                                LayerKind::Conv2D { out_channels: 2, kernel: (k, k), stride: (s, s), padding: (p, p) }
                            };
                            let Ok(g) = GraphBuilder::new(2).input("x", 2, h, w).layer("y", kind, &["x"]).build()
                            else {
                                continue;
                            };
                            let (src, dst) = (g.shape(0), g.shape(1));
                            let slot = InputSlot { shape: src, offset: 0 };
                            for c in enumerate_configs(&kind, dst, 4) {
                                for q in 0..c.total_degree() {
                                    let owned = owned_region(dst, &c, q).unwrap();
                                    let fp = required_input_region(&kind, dst, &c, q, &slot).unwrap();
                                    let ext = src.extents();
                                    let idx = |x: [usize; 4]| ((x[0] * ext[1] + x[1]) * ext[2] + x[2]) * ext[3] + x[3];
                                    let mut want = vec![false; src.volume()];
                                    for n in owned.dim(layerpar::Dim::Sample).lo..owned.dim(layerpar::Dim::Sample).hi {
                                        for co in
                                            owned.dim(layerpar::Dim::Channel).lo..owned.dim(layerpar::Dim::Channel).hi
                                        {
                                            for oy in
                                                owned.dim(layerpar::Dim::Height).lo..owned.dim(layerpar::Dim::Height).hi
                                            {
                                                for ox in owned.dim(layerpar::Dim::Width).lo
                                                    ..owned.dim(layerpar::Dim::Width).hi
                                                {
                                                    let chans = if pool { co..co + 1 } else { 0..src.channel };
                                                    for ci in chans {
                                                        for iy in mark_window(oy, k, s, p, h) {
                                                            for ix in mark_window(ox, k, s, p, w) {
                                                                want[idx([n, ci, iy, ix])] = true;
                                                            }
                                                        }
                                                    }
                                                }
                                            }
                                        }
                                    }
                                    let mut got = vec![0u8; src.volume()];
                                    for b in fp.boxes() {
                                        let d = b.dims;
                                        for a0 in d[0].lo..d[0].hi {
                                            for a1 in d[1].lo..d[1].hi {
                                                for a2 in d[2].lo..d[2].hi {
                                                    for a3 in d[3].lo..d[3].hi {
                                                        got[idx([a0, a1, a2, a3])] += 1;
                                                    }
                                                }
                                            }
                                        }
                                    }
                                    if got.iter().zip(&want).any(|(&g, &w)| g != w as u8) {
                                        return Verdict::Fail(format!(
                                            "{} input {h}x{w} k={k} s={s} p={p} config {c} part {q}",
                                            kind.name()
                                        ));
                                    }
                                    regions += 1;
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    let mut tensors = 0u64;
    for n in 1..=4usize {
        for c in 1..=4usize {
            for h in 1..=16usize {
                for w in 1..=16usize {
                    let shape = TensorShape::new(n, c, h, w);
                    let kind = LayerKind::Pool2D { kernel: (1, 1), stride: (1, 1), padding: (0, 0) };
                    for cfg in enumerate_configs(&kind, shape, 8) {
                        let mut cover = vec![0u8; shape.volume()];
                        for part in 0..cfg.total_degree() {
                            let r = owned_region(shape, &cfg, part).unwrap();
                            let d = r.dims;
                            for a0 in d[0].lo..d[0].hi {
                                for a1 in d[1].lo..d[1].hi {
                                    for a2 in d[2].lo..d[2].hi {
                                        for a3 in d[3].lo..d[3].hi {
                                            cover[((a0 * c + a1) * h + a2) * w + a3] += 1;
                                        }
                                    }
                                }
                            }
                        }
                        if cover.iter().any(|&x| x != 1) {
                            return Verdict::Fail(format!("owned regions of {shape} under {cfg} do not partition it"));
                        }
                        tensors += 1;
                    }
                }
            }
        }
    }
    Verdict::Pass(format!(
        "{regions} partition footprints equal the marked dependencies; {tensors} (shape, config) pairs partitioned exactly; {}",
        secs(start.elapsed())
    ))
}

fn communication_ordering() -> Verdict {
    let g = GraphBuilder::new(32)
        .input("data", 512, 14, 14)
        .layer("pool5", LayerKind::Pool2D { kernel: (2, 2), stride: (2, 2), padding: (0, 0) }, &["data"])
        .layer("fc6", LayerKind::FullyConnected { out_channels: 4096 }, &["pool5"])
        .build()
        .unwrap();
    let devices = DeviceGraph::default_cluster(2).unwrap();
    let data = Config { sample: 2, ..Config::ones() };
    let channel = Config { channel: 2, ..Config::ones() };
    // the preceding layer runs data-parallel, which favours the data-parallel side
    let comm = |c: &Config| -> f64 {
        sync_cost::<f64>(&g, 2, c, &devices).unwrap() + transfer_cost::<f64>(&g, 1, &data, c, &devices).unwrap()
    };
    let (d, c) = (comm(&data), comm(&channel));
    ensure(
        g.shape(1).features() == 25088 && c * 5.0 <= d,
        format!("fc6 communication: data-parallel {:.4e}s, channel-parallel {:.4e}s, ratio {:.1}x", d, c, d / c),
    )
}

fn dominance() -> Verdict {
    let mut lines = Vec::new();
    for model in [Model::LeNet5, Model::AlexNet, Model::Vgg16] {
        for n in [2usize, 4] {
            let g = builtin_model(model, 32).unwrap();
            let devices = DeviceGraph::default_cluster(n).unwrap();
            let t = build_cost_tables::<f64>(&g, &devices).unwrap().convert(quantize_seconds);
            let best = plan_with_tables(&g, &t, PlanOptions::default()).unwrap().cost;
            for b in Baseline::ALL {
                let s = baseline_strategy(b, &g, &t, n).unwrap();
                let cost = evaluate_strategy(&g, &t, &s).unwrap();
                if best > cost {
                    return Verdict::Fail(format!("{model}/{n}: optimal {best} > {b} {cost}"));
                }
            }
            lines.push(format!("{model}/{n}"));
        }
    }
    Verdict::Pass(format!("optimal <= data, model, owt on {}", lines.join(", ")))
}

fn vgg_strategy_shape() -> Verdict {
    let g = builtin_model(Model::Vgg16, 32).unwrap();
    let devices = DeviceGraph::default_cluster(4).unwrap();
    let (t, out) = plan(&g, &devices, PlanOptions::default()).unwrap();
    let configs = out.strategy.configs(&t).unwrap();
    let cfg = |id: &str| configs[g.index_of(id).unwrap()];
    let block1 = ["conv1_1", "conv1_2"].iter().all(|id| cfg(id).sample == 4);
    let fcs = ["fc6", "fc7"].iter().all(|id| cfg(id).sample == 1 && cfg(id).channel > 1);
    let detail = format!(
        "conv1_1 {}, conv1_2 {}, fc6 {}, fc7 {}, fc8 {}",
        cfg("conv1_1"),
        cfg("conv1_2"),
        cfg("fc6"),
        cfg("fc7"),
        cfg("fc8")
    );
    if block1 && fcs {
        Verdict::Pass(detail)
    } else {
        Verdict::Deviation(detail)
    }
}

fn main() -> ExitCode {
    type Criterion = (&'static str, fn() -> Verdict);
    let criteria: [Criterion; 9] = [
        ("oracle equivalence", oracle_equivalence),
        ("elimination preserves optimum", elimination_preserves_optimum),
        ("reduction power", reduction_power),
        ("dp vs dfs scaling", dp_vs_dfs),
        ("planner speed", planner_speed),
        ("region-math oracle", region_oracle),
        ("communication ordering", communication_ordering),
        ("dominance over baselines", dominance),
        ("vgg16 strategy shape (soft)", vgg_strategy_shape),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let verdict = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Verdict::Fail(format!("panicked: {msg}"))
        });
        let (tag, detail) = match verdict {
            Verdict::Pass(d) => ("PASS", d),
            Verdict::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Verdict::Deviation(d) => ("DEVIATION", d),
        };
        println!("criterion {} ({name}): {tag} - {detail}", i + 1);
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
