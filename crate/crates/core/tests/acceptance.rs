//! Acceptance checks. Runs as a plain binary and prints one
//! `criterion N: PASS|FAIL` line per criterion; exits non-zero if any fails.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use igcl::expcli::{export_sweep, prepare, run_sweep, ExperimentConfig, Prepared, Regime, SweepReport, REPORT_FILE};
use igcl::infograph::{
    build_batch, build_info_graph, expand_second_order, sample_edges, BalanceQuotas, Batch,
    EdgeSample, InfoGraph, NodeRef,
};
use igcl::loss::{batch_contrastive_loss, cross_entropy_batch, LossConfig, Strategy};
use igcl::model::{init_anchor_vectors, AnchorVectors, GradientTape, Group, ModelConfig, ModelParams, Path};
use igcl::rng::rng_for;
use igcl::siggen::{synth_dataset, Dataset, Segment, StreamId};
use igcl::train::{balanced_batches, epoch_batches, finetune_head, Method, TrainPlan};
use igcl::Matrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- oracles

/// Contrastive loss written out term by term, straight from the formula,
/// with no shared code beyond the batch structure.
fn brute_force_loss(batch: &Batch, z: &Matrix<f64>, anchors: &AnchorVectors<f64>, cfg: &LossConfig) -> Option<f64> {
    let n = batch.nodes.len();
    let is_anchor = |i: usize| matches!(batch.nodes[i], NodeRef::Anchor(_));
    let vec_of = |i: usize| -> Vec<f64> {
        match batch.nodes[i] {
            NodeRef::Anchor(c) => anchors.a.row(c).to_vec(),
            NodeRef::Segment(_) => z.row(i).to_vec(),
        }
    };
    let cos = |i: usize, j: usize| {
        let (u, v) = (vec_of(i), vec_of(j));
        let d: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
        let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        d / (nu * nv)
    };
    // B from scratch
    let mut a = vec![vec![0u64; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = batch.a[i * n + j] as u64;
        }
    }
    let b = |i: usize, j: usize| a[i][j] + (0..n).map(|k| a[i][k] * a[k][j]).sum::<u64>();
    let participates = |i: usize| cfg.strategy == Strategy::Anchor || !is_anchor(i);
    let mut pairs = Vec::new();
    for &(s, t) in &batch.edge_list {
        match (is_anchor(s), is_anchor(t), cfg.strategy) {
            (true, true, _) => {}
            (false, false, _) | (_, _, Strategy::Anchor) => {
                pairs.push((s, t));
                pairs.push((t, s));
            }
            (sa, _, Strategy::Link) => {
                let (seg, anc) = if sa { (t, s) } else { (s, t) };
                for j in 0..n {
                    if j != seg && !is_anchor(j) && a[j][anc] > 0 {
                        pairs.push((seg, j));
                        pairs.push((j, seg));
                    }
                }
            }
        }
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (s, t) in pairs {
        let w = b(s, t) as f64;
        if w == 0.0 {
            count += 1;
            continue;
        }
        let negs: Vec<usize> = (0..n).filter(|&k| participates(k) && b(s, k) == 0).collect();
        if negs.is_empty() {
            continue;
        }
        let denom: f64 = negs.iter().map(|&k| (cos(s, k) / cfg.tau).exp()).sum();
        total += -w * (cos(s, t) / cfg.tau - denom.ln());
        count += 1;
    }
    (count > 0).then(|| total / count as f64)
}

fn random_batch(rng: &mut ChaCha8Rng, max_nodes: usize) -> Batch {
    let n_anchor = rng.random_range(0..=2usize);
    let n_seg = rng.random_range(2..=max_nodes - n_anchor);
    let mut nodes: Vec<NodeRef> = (0..n_seg as u64).map(NodeRef::Segment).collect();
    nodes.extend((0..n_anchor).map(NodeRef::Anchor));
    let n = nodes.len();
    let mut edges = Vec::new();
    for i in 0..n_seg {
        for j in i + 1..n_seg {
            if rng.random_bool(0.35) {
                edges.push((i, j));
            }
        }
        if n_anchor > 0 && rng.random_bool(0.5) {
            edges.push((i, n_seg + rng.random_range(0..n_anchor)));
        }
    }
    if edges.is_empty() {
        edges.push((0, 1));
    }
    let mut a = vec![0u32; n * n];
    for &(i, j) in &edges {
        a[i * n + j] = 1;
        a[j * n + i] = 1;
    }
    let b = expand_second_order(&a, n);
    let edge_list: Vec<(usize, usize)> = edges.iter().copied().filter(|_| rng.random_bool(0.6)).collect();
    let edge_list = if edge_list.is_empty() { vec![edges[0]] } else { edge_list };
    Batch { nodes, a, b, edge_list }
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Matrix<f64> {
    Matrix::from_vec(r, c, (0..r * c).map(|_| rng.random_range(-1.0..1.0)).collect())
}

// ------------------------------------------------------------- criteria

fn criterion_1() -> Outcome {
    let mut rng = rng_for(101, &[]);
    let mut worst = 0.0f64;
    let mut compared = 0;
    for k in 0..50 {
        let strategy = if k % 2 == 0 { Strategy::Anchor } else { Strategy::Link };
        let cfg = LossConfig { tau: [0.1, 0.5, 1.0][k % 3], strategy };
        let batch = random_batch(&mut rng, 8);
        let d = rng.random_range(2..=8);
        let anchors = init_anchor_vectors::<f64>(2, d, k as u64).unwrap();
        let z = random_matrix(&mut rng, batch.nodes.len(), d);
        let fast = batch_contrastive_loss(&batch, &z, &anchors, &cfg).ok().map(|r| r.value);
        match (fast, brute_force_loss(&batch, &z, &anchors, &cfg)) {
            (Some(f), Some(o)) => {
                worst = worst.max((f - o).abs());
                compared += 1;
            }
            (None, None) => compared += 1,
            (f, o) => return outcome(false, format!("instance {k}: fast {f:?} vs oracle {o:?}")),
        }
    }
    outcome(worst < 1e-10 && compared == 50, format!("50 instances, max |Δ| = {worst:.2e}"))
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn tiny_model(seed: u64) -> ModelParams<f64> {
    ModelParams::init(&ModelConfig {
        input_dim: 10,
        encoder_widths: vec![8],
        head_hidden: 6,
        embed_dim: 4,
        n_classes: 3,
        seed,
    })
    .unwrap()
}

fn param_count(m: &ModelParams<f64>, groups: &[Group]) -> usize {
    m.slices(groups).iter().map(|s| s.len()).sum()
}

fn nudge(m: &mut ModelParams<f64>, groups: &[Group], mut k: usize, delta: f64) {
    for s in m.slices_mut(groups) {
        if k < s.len() {
            s[k] += delta;
            return;
        }
        k -= s.len();
    }
}

fn flat(m: &ModelParams<f64>, groups: &[Group]) -> Vec<f64> {
    m.slices(groups).concat()
}

/// Full-model gradient check through both loss paths.
fn model_gradient_error(seed: u64) -> f64 {
    let mut rng = rng_for(seed, &[7]);
    let model = tiny_model(seed);
    let n_seg = 5;
    let x = random_matrix(&mut rng, n_seg, 10);
    let mut nodes: Vec<NodeRef> = (0..n_seg as u64).map(NodeRef::Segment).collect();
    nodes.push(NodeRef::Anchor(0));
    nodes.push(NodeRef::Anchor(1));
    let edges = [(0, 1), (1, 2), (3, 4), (0, 5), (3, 6)];
    let n = nodes.len();
    let mut a = vec![0u32; n * n];
    for &(i, j) in &edges {
        a[i * n + j] = 1;
        a[j * n + i] = 1;
    }
    let batch = Batch { b: expand_second_order(&a, n), nodes, a, edge_list: edges.to_vec() };
    let anchors = init_anchor_vectors::<f64>(3, 4, seed).unwrap();
    let strategy = if seed % 2 == 0 { Strategy::Anchor } else { Strategy::Link };
    let cfg = LossConfig { tau: 0.5, strategy };
    let labels: Vec<usize> = (0..n_seg).map(|i| i % 3).collect();

    let contrastive = |m: &ModelParams<f64>, tape: &mut GradientTape<f64>| -> (f64, Matrix<f64>) {
        let zs = m.forward(&x, Path::Embed, tape).unwrap();
        let mut z = Matrix::zeros(n, 4);
        for i in 0..n_seg {
            z.row_mut(i).copy_from_slice(zs.row(i));
        }
        for (slot, c) in batch.anchor_slots() {
            z.row_mut(slot).copy_from_slice(anchors.vector(c));
        }
        let r = batch_contrastive_loss(&batch, &z, &anchors, &cfg).unwrap();
        (r.value, r.dz.select_rows(&(0..n_seg).collect::<Vec<_>>()))
    };
    let supervised = |m: &ModelParams<f64>, tape: &mut GradientTape<f64>| -> (f64, Matrix<f64>) {
        let logits = m.forward(&x, Path::Classify, tape).unwrap();
        cross_entropy_batch(&logits, &labels).unwrap()
    };

    let mut worst = 0.0f64;
    for (path_groups, which) in [(vec![Group::Encoder, Group::EmbedHead], 0), (vec![Group::Encoder, Group::ClassHead], 1)] {
        let eval = |m: &ModelParams<f64>| {
            let mut t = GradientTape::new(&m.config);
            if which == 0 { contrastive(m, &mut t).0 } else { supervised(m, &mut t).0 }
        };
        let mut tape = GradientTape::new(&model.config);
        let upstream = if which == 0 { contrastive(&model, &mut tape).1 } else { supervised(&model, &mut tape).1 };
        model.backward(&mut tape, &upstream).unwrap();
        let analytic = flat(&tape.grads, &path_groups);
        let h = 1e-5;
        for k in 0..param_count(&model, &path_groups) {
            let mut p = model.clone();
            nudge(&mut p, &path_groups, k, h);
            let fp = eval(&p);
            nudge(&mut p, &path_groups, k, -2.0 * h);
            let fm = eval(&p);
            worst = worst.max(rel_err(analytic[k], (fp - fm) / (2.0 * h)));
        }
    }
    worst
}

fn embedding_gradient_error(seed: u64) -> f64 {
    let mut rng = rng_for(seed, &[9]);
    loop {
        let batch = random_batch(&mut rng, 8);
        let strategy = if seed % 2 == 0 { Strategy::Anchor } else { Strategy::Link };
        let cfg = LossConfig { tau: 0.1, strategy };
        let anchors = init_anchor_vectors::<f64>(2, 5, seed).unwrap();
        let z = random_matrix(&mut rng, batch.nodes.len(), 5);
        let Ok(r) = batch_contrastive_loss(&batch, &z, &anchors, &cfg) else { continue };
        let h = 1e-5;
        let mut worst = 0.0f64;
        for i in 0..z.rows() {
            for c in 0..z.cols() {
                let (mut zp, mut zm) = (z.clone(), z.clone());
                zp.set(i, c, z.get(i, c) + h);
                zm.set(i, c, z.get(i, c) - h);
                let num = (batch_contrastive_loss(&batch, &zp, &anchors, &cfg).unwrap().value
                    - batch_contrastive_loss(&batch, &zm, &anchors, &cfg).unwrap().value)
                    / (2.0 * h);
                worst = worst.max(rel_err(r.dz.get(i, c), num));
            }
        }
        return worst;
    }
}

fn criterion_2() -> Outcome {
    let emb = (0..20).map(embedding_gradient_error).fold(0.0, f64::max);
    let model = (0..20).map(model_gradient_error).fold(0.0, f64::max);
    outcome(
        emb < 1e-4 && model < 1e-4,
        format!("20 draws each: embeddings max rel err {emb:.2e}, model parameters {model:.2e}"),
    )
}

fn random_segments(rng: &mut ChaCha8Rng, n: usize) -> Vec<Segment> {
    (0..n)
        .map(|k| {
            let t0 = if rng.random_bool(0.5) { 15.0 * rng.random_range(0..20) as f64 } else { rng.random_range(0.0..300.0) };
            let len = if rng.random_bool(0.5) { 30.0 } else { rng.random_range(1.0..60.0) };
            Segment {
                seg_id: 1000 + k as u64,
                stream: StreamId::new(rng.random_range(0..4), rng.random_range(0..3)),
                t_start: t0,
                t_end: t0 + len,
                sample_rate: 100.0,
                samples: vec![],
                label: None,
            }
        })
        .collect()
}

fn criterion_3() -> Outcome {
    let mut rng = rng_for(303, &[]);
    for layout in 0..100 {
        let n = rng.random_range(0..=200);
        let segs = random_segments(&mut rng, n);
        let mut oracle = BTreeSet::new();
        for i in 0..n {
            for j in i + 1..n {
                let (a, b) = (&segs[i], &segs[j]);
                let overlap = a.t_end.min(b.t_end) - a.t_start.max(b.t_start);
                if overlap > 0.0 && a.stream != b.stream {
                    oracle.insert((a.seg_id.min(b.seg_id), a.seg_id.max(b.seg_id)));
                }
            }
        }
        let g = build_info_graph(&segs);
        let got: BTreeSet<(u64, u64)> = g
            .edges()
            .iter()
            .map(|e| {
                let (x, y) = (e.a.segment_id().unwrap(), e.b.segment_id().unwrap());
                (x.min(y), x.max(y))
            })
            .collect();
        if got != oracle || got.len() != g.edges().len() {
            return outcome(false, format!("layout {layout}: {} edges vs oracle {}", got.len(), oracle.len()));
        }
    }
    outcome(true, "100 layouts match the pairwise overlap rule exactly")
}

fn criterion_4() -> Outcome {
    let mut rng = rng_for(404, &[]);
    for trial in 0..100 {
        let n = rng.random_range(1..=16);
        let p = rng.random_range(0.05..0.9);
        let mut a = vec![0u32; n * n];
        for i in 0..n {
            for j in i + 1..n {
                if rng.random_bool(p) {
                    a[i * n + j] = 1;
                    a[j * n + i] = 1;
                }
            }
        }
        let b = expand_second_order(&a, n);
        for i in 0..n {
            for j in 0..n {
                let mut sq = 0u32;
                for k in 0..n {
                    sq += a[i * n + k] * a[k * n + j];
                }
                if b[i * n + j] != a[i * n + j] + sq {
                    return outcome(false, format!("graph {trial}: B[{i}][{j}] mismatch"));
                }
            }
            let degree: u32 = a[i * n..(i + 1) * n].iter().sum();
            if b[i * n + i] != degree {
                return outcome(false, format!("graph {trial}: diagonal {i} is not the degree"));
            }
        }
    }
    outcome(true, "100 graphs: B = A + A² exactly, diag(B) = degree")
}

fn reference_graph(prepared: &Prepared, stations: &[usize]) -> InfoGraph {
    prepared.graph(true, stations).unwrap()
}

fn criterion_5(prepared: &Prepared) -> Outcome {
    let mut rng = rng_for(505, &[]);
    let mut worst = 0.0f64;
    for (k, n_e) in [8usize, 32, 64, 100].into_iter().enumerate() {
        let g = reference_graph(prepared, &[k % prepared.n_stations]);
        let quotas = BalanceQuotas::new(n_e, prepared.n_classes, 4.5).unwrap();
        for _ in 0..250 {
            let s = sample_edges(&g, n_e, &mut rng, &quotas).unwrap();
            let b = build_batch(&g, &s);
            worst = worst.max(b.len() as f64 / (2 * n_e) as f64);
            if b.len() > 2 * n_e || s.len() != n_e {
                return outcome(false, format!("batch of {} nodes for n_e = {n_e}", b.len()));
            }
        }
    }
    outcome(true, format!("1000 batches, max N / 2N_e = {worst:.3}"))
}

fn criterion_6() -> Outcome {
    let good = (0..100u64)
        .filter(|&seed| {
            let a = init_anchor_vectors::<f64>(3, 128, seed).unwrap();
            let mut worst = 0.0f64;
            for i in 0..3 {
                for j in i + 1..3 {
                    let d: f64 = a.vector(i).iter().zip(a.vector(j)).map(|(x, y)| x * y).sum();
                    worst = worst.max(d.abs());
                }
            }
            worst < 0.5
        })
        .count();
    outcome(good >= 99, format!("{good}/100 seeds with max |⟨a_i,a_j⟩| < 0.5"))
}

fn criterion_7(cfg: &ExperimentConfig, prepared: &Prepared) -> Outcome {
    // frozen encoder
    let mc = ModelConfig {
        input_dim: prepared.pretrain.dim(),
        encoder_widths: cfg.model.encoder_widths.clone(),
        head_hidden: cfg.model.head_hidden,
        embed_dim: cfg.model.embed_dim,
        n_classes: prepared.n_classes,
        seed: 3,
    };
    let mut model = ModelParams::init(&mc).unwrap();
    let labeled = prepared.finetune.subset(&prepared.finetune.labeled_rows(&[0])).unwrap();
    let before = model.fingerprint(&[Group::Encoder]);
    let plan = TrainPlan { finetune_epochs: 3, ..cfg.train.clone() };
    finetune_head(&plan, &labeled, &mut model).unwrap();
    let frozen = model.fingerprint(&[Group::Encoder]) == before;

    // balanced batches on the real labeled set
    let labels = labeled.labels_of(&(0..labeled.len()).collect::<Vec<_>>()).unwrap();
    let mut rng = rng_for(707, &[]);
    let n_batches = labeled.len().div_ceil(plan.batch_size);
    let mut spread = 0usize;
    for batch in balanced_batches(&labels, plan.batch_size.min(labels.len()), 10 * n_batches, &mut rng) {
        let mut h = vec![0usize; prepared.n_classes];
        batch.iter().for_each(|&i| h[labels[i]] += 1);
        spread = spread.max(h.iter().max().unwrap() - h.iter().min().unwrap());
    }

    // unlabeled:labeled edge ratio over one epoch
    let g = reference_graph(prepared, &[0]);
    let quotas = BalanceQuotas::new(plan.n_e, prepared.n_classes, plan.unlabeled_ratio).unwrap();
    let (mut ctx, mut ann) = (0usize, 0usize);
    for _ in 0..epoch_batches(g.edges().len(), plan.n_e) {
        let s: EdgeSample = sample_edges(&g, plan.n_e, &mut rng, &quotas).unwrap();
        for &(x, y) in &s.edges {
            if !g.has_edge(x, y) {
                return outcome(false, "sampled edge missing from graph");
            }
            if x.is_anchor() || y.is_anchor() {
                ann += 1;
            } else {
                ctx += 1;
            }
        }
    }
    let ratio = ctx as f64 / ann as f64;
    let ratio_ok = (ratio - 4.5).abs() <= 0.2 * 4.5;
    outcome(
        frozen && spread <= 1 && ratio_ok,
        format!("encoder hash unchanged: {frozen}; max class spread {spread}; context:annotation = {ratio:.2}"),
    )
}

fn cell(sweep: &SweepReport, regime: Regime, method: Method) -> f64 {
    sweep.cell(regime, method).expect("cell present").mean
}

fn cross_station(sweep: &SweepReport, regime: Regime, method: Method) -> f64 {
    sweep
        .cell(regime, method)
        .and_then(|c| c.cross_station_mean)
        .expect("one-station cell with a cross-station mean")
}

fn criterion_8(sweep: &SweepReport, elapsed: Duration) -> Outcome {
    let sc_anchor = cross_station(sweep, Regime::OneStationSc, Method::IgAnchor);
    let xe = cross_station(sweep, Regime::OneStation, Method::Xe);
    let sc_link = cross_station(sweep, Regime::OneStationSc, Method::IgLink);
    let link = cross_station(sweep, Regime::OneStation, Method::IgLink);
    let pass = sc_anchor - xe >= 10.0 && sc_link >= link && elapsed < Duration::from_secs(15 * 60);
    outcome(
        pass,
        format!(
            "cross-station: one_station_sc/ig_anchor {sc_anchor:.2} vs one_station/xe {xe:.2} (Δ {:+.2}); \
             ig_link {sc_link:.2} vs {link:.2}; sweep {:.0} s",
            sc_anchor - xe,
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_9(sweep: &SweepReport) -> Outcome {
    let mut parts = Vec::new();
    let mut pass = true;
    for m in [Method::IgLink, Method::IgAnchor] {
        let (sc, plain) = (cell(sweep, Regime::AllSc, m), cell(sweep, Regime::All, m));
        pass &= sc >= plain - 1.0;
        parts.push(format!("{} all_sc {sc:.2} vs all {plain:.2}", m.as_str()));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_10(first: &SweepReport, cfg: &ExperimentConfig) -> Outcome {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    export_sweep(first, dirs[0].path()).unwrap();
    let dataset = Dataset { config: cfg.synth.clone(), streams: synth_dataset(&cfg.synth).unwrap() };
    let prepared = prepare(cfg, &dataset).unwrap();
    let second = run_sweep(cfg, &prepared).unwrap();
    export_sweep(&second, dirs[1].path()).unwrap();
    let read = |d: &tempfile::TempDir| std::fs::read(d.path().join(REPORT_FILE)).unwrap();
    let (a, b) = (read(&dirs[0]), read(&dirs[1]));
    outcome(a == b, format!("report.json {} bytes, byte-equal: {}", a.len(), a == b))
}

fn main() {
    let mut results: Vec<(u32, Outcome, Duration)> = Vec::new();
    let mut timed = |id: u32, f: &mut dyn FnMut() -> Outcome| {
        let t = Instant::now();
        let o = f();
        let el = t.elapsed();
        println!(
            "criterion {id}: {} ({:.1} s) {}",
            if o.pass { "PASS" } else { "FAIL" },
            el.as_secs_f64(),
            o.detail
        );
        results.push((id, o, el));
    };
    timed(1, &mut criterion_1);
    timed(2, &mut criterion_2);
    timed(3, &mut criterion_3);
    timed(4, &mut criterion_4);

    let cfg = ExperimentConfig::reference_benchmark();
    let t = Instant::now();
    let dataset = Dataset { config: cfg.synth.clone(), streams: synth_dataset(&cfg.synth).unwrap() };
    let prepared = prepare(&cfg, &dataset).unwrap();
    let prepare_time = t.elapsed();
    timed(5, &mut || criterion_5(&prepared));
    timed(6, &mut criterion_6);
    timed(7, &mut || criterion_7(&cfg, &prepared));
    let t = Instant::now();
    let sweep = run_sweep(&cfg, &prepared).unwrap();
    let elapsed = prepare_time + t.elapsed();
    timed(8, &mut || criterion_8(&sweep, elapsed));
    timed(9, &mut || criterion_9(&sweep));
    timed(10, &mut || criterion_10(&sweep, &cfg));

    let failed: Vec<u32> = results.iter().filter(|r| !r.1.pass).map(|r| r.0).collect();
    println!(
        "acceptance: {}/{} criteria passed",
        results.len() - failed.len(),
        results.len()
    );
    if !failed.is_empty() {
        println!("acceptance: failed {failed:?}");
        std::process::exit(1);
    }
}
