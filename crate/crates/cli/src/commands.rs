use std::fmt::Write as _;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use slate_core::graph::{
    generate_erdos_renyi, generate_sbm, load_edge_list, read_metadata, split_chronological,
    write_edge_list, write_metadata, DynamicGraph, EdgeListFormat, GraphMeta,
};
use slate_core::model::{EncodingKind, PoolingSpec, SlateModel};
use slate_core::nn::{read_checkpoint, write_checkpoint};
use slate_core::spectral::{
    normalized_laplacian, smallest_eigenpairs, smallest_eigenpairs_keep_trivial,
};
use slate_core::supra::{build_supra, build_untransformed, RowKind};
use slate_core::train::{evaluate, train as train_model, Strategy, TrainConfig};
use slate_core::SupraGraph;

use crate::config::{parse_window, window_name, RunConfig};

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write(path, text)
}

fn meta_path(data: &Path) -> PathBuf {
    data.with_extension("meta")
}

pub fn generate(cfg: &RunConfig) -> Result<()> {
    let seed = cfg.parse("seed")?;
    let n = cfg.parse("n")?;
    let t = cfg.parse("t")?;
    let g = match cfg.get("kind") {
        "sbm" => generate_sbm(n, cfg.parse("blocks")?, cfg.parse("p_in")?, cfg.parse("p_out")?, t, seed)?,
        "er" => generate_erdos_renyi(n, cfg.parse("p")?, t, seed)?,
        other => bail!("unknown generator kind `{other}` (expected sbm or er)"),
    };
    let name = cfg.get("name");
    let out = cfg.out_dir();
    let edges = out.join(format!("{name}.edges"));
    write(&edges, write_edge_list(&g))?;
    write(&meta_path(&edges), write_metadata(&GraphMeta::of(name, &g)))?;
    println!(
        "wrote {} ({} nodes, {} snapshots, {} edges)",
        edges.display(),
        g.num_nodes(),
        g.num_snapshots(),
        g.snapshots().iter().map(|s| s.num_edges()).sum::<usize>()
    );
    Ok(())
}

/// Loads `--data`, taking node and snapshot counts from the `.meta` sidecar
/// when present.
pub fn load_graph(cfg: &RunConfig) -> Result<DynamicGraph> {
    let data = cfg.get("data");
    if data.is_empty() {
        bail!("`--data <edge list>` is required");
    }
    let path = PathBuf::from(data);
    let mut format = EdgeListFormat {
        one_based: cfg.parse("one_based")?,
        num_nodes: cfg.optional("num_nodes")?,
        num_snapshots: None,
    };
    let meta = meta_path(&path);
    if meta.exists() {
        let m = read_metadata(&fs::read_to_string(&meta)?).with_context(|| format!("reading {}", meta.display()))?;
        format.num_nodes = format.num_nodes.or(Some(m.num_nodes));
        format.num_snapshots = Some(m.num_snapshots);
    }
    let file = fs::File::open(&path).with_context(|| format!("opening {}", path.display()))?;
    let loaded = load_edge_list(BufReader::new(file), format).with_context(|| format!("loading {}", path.display()))?;
    if loaded.self_loops_dropped > 0 {
        log::warn!("dropped {} self-loops", loaded.self_loops_dropped);
    }
    Ok(loaded.graph)
}

#[derive(Serialize, Default)]
struct VariantSummary {
    rows: usize,
    edges: usize,
    components: usize,
    lambda0: Option<f64>,
    eigenvalues: Vec<f64>,
    /// Per-layer mean of the selected eigenvector over node rows.
    layer_means: Vec<f64>,
    layer_mean_gap: Option<f64>,
    separated: Option<bool>,
    error: Option<String>,
}

#[derive(Serialize)]
struct InspectSummary {
    window_end: usize,
    window: Vec<usize>,
    k: usize,
    lambda_index: usize,
    transformed: VariantSummary,
    untransformed: VariantSummary,
}

/// `values[0]` is the smallest eigenvalue; `column(i)` the eigenvector of `values[i]`.
struct Spectrum {
    values: Vec<f64>,
    vectors: Vec<Vec<f64>>,
}

fn dump_variant(
    dir: &Path,
    sg: &SupraGraph,
    spectrum: Option<&Spectrum>,
    lambda_index: usize,
    num_nodes: usize,
    summary: &mut VariantSummary,
) -> Result<()> {
    summary.rows = sg.size();
    summary.edges = sg.num_edges();
    summary.components = sg.connected_components();
    write(&dir.join("supra_coo.txt"), sg.coordinate_list())?;
    write(&dir.join("index_map.txt"), sg.index_map_lines())?;
    let Some(sp) = spectrum else { return Ok(()) };
    let mut eig = String::new();
    for (i, v) in sp.values.iter().enumerate() {
        writeln!(eig, "{i} {v:.17e}")?;
    }
    write(&dir.join("eigenvalues.txt"), eig)?;
    summary.lambda0 = sp.values.first().copied();
    summary.eigenvalues = sp.values.clone();

    let vector = sp
        .vectors
        .get(lambda_index)
        .ok_or_else(|| anyhow!("lambda_index {lambda_index} outside the {} computed eigenpairs", sp.values.len()))?;
    let lambda = sp.values[lambda_index];
    let mut csv = String::from("node,tau,lambda_index,eigenvalue,projection\n");
    for tau in 0..sg.num_layers() {
        for u in 0..num_nodes {
            let flagged = sg.is_transformed() && sg.masks()[tau].is_isolated(u);
            match sg.row_of(u, tau) {
                Some(r) if !flagged => writeln!(csv, "{u},{tau},{lambda_index},{lambda:.17e},{:.17e}", vector[r])?,
                _ => writeln!(csv, "{u},{tau},{lambda_index},{lambda:.17e},")?,
            }
        }
    }
    write(&dir.join("projections.csv"), csv)?;

    let mut sums = vec![(0.0, 0usize); sg.num_layers()];
    for (r, kind) in sg.rows().iter().enumerate() {
        if let RowKind::Node { tau, .. } = kind {
            sums[*tau].0 += vector[r];
            sums[*tau].1 += 1;
        }
    }
    summary.layer_means = sums.iter().map(|&(s, c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
    let max = summary.layer_means.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = summary.layer_means.iter().copied().fold(f64::INFINITY, f64::min);
    summary.layer_mean_gap = Some(max - min);
    summary.separated = Some(max - min > 1e-3);
    Ok(())
}

pub fn inspect(cfg: &RunConfig) -> Result<()> {
    let g = load_graph(cfg)?;
    let k: usize = cfg.parse("k")?;
    let lambda_index: usize = cfg.parse("lambda_index")?;
    let end = cfg.optional("end")?.unwrap_or(g.num_snapshots() - 1);
    if end >= g.num_snapshots() {
        bail!("window end {end} outside {} snapshots", g.num_snapshots());
    }
    let window = g.window_of(end, cfg.window()?);
    let snaps = g.window_snapshots(&window);
    let eigen = cfg.eigen()?;
    let out = cfg.out_dir();

    let mut transformed = VariantSummary::default();
    match build_supra(snaps, window, &cfg.supra()?) {
        Ok(sg) => {
            let spectrum = normalized_laplacian::<f64>(&sg)
                .and_then(|l| smallest_eigenpairs(&l, k, &eigen))
                .map(|b| {
                    let mut values = vec![b.lambda0()];
                    values.extend_from_slice(b.eigenvalues());
                    // the discarded trivial vector is not kept; index 0 has no projection column
                    let mut vectors = vec![Vec::new()];
                    vectors.extend((0..b.k()).map(|i| b.column(i)));
                    Spectrum { values, vectors }
                });
            match spectrum {
                Ok(sp) => dump_variant(&out.join("transformed"), &sg, Some(&sp), lambda_index, g.num_nodes(), &mut transformed)?,
                Err(e) => {
                    dump_variant(&out.join("transformed"), &sg, None, lambda_index, g.num_nodes(), &mut transformed)?;
                    transformed.error = Some(e.to_string());
                }
            }
        }
        Err(e) => transformed.error = Some(e.to_string()),
    }

    let mut untransformed = VariantSummary::default();
    let sg = build_untransformed(snaps, window)?;
    let count = (k + 1).min(sg.size());
    let spectrum = normalized_laplacian::<f64>(&sg)
        .and_then(|l| smallest_eigenpairs_keep_trivial(&l, count, &eigen))
        .map(|b| Spectrum {
            values: b.eigenvalues().to_vec(),
            vectors: (0..b.k()).map(|i| b.column(i)).collect(),
        });
    match spectrum {
        Ok(sp) => dump_variant(&out.join("untransformed"), &sg, Some(&sp), lambda_index, g.num_nodes(), &mut untransformed)?,
        Err(e) => {
            dump_variant(&out.join("untransformed"), &sg, None, lambda_index, g.num_nodes(), &mut untransformed)?;
            untransformed.error = Some(e.to_string());
        }
    }

    let summary = InspectSummary {
        window_end: end,
        window: window.members().collect(),
        k,
        lambda_index,
        transformed,
        untransformed,
    };
    write_json(&out.join("summary.json"), &summary)?;
    for (name, v) in [("transformed", &summary.transformed), ("untransformed", &summary.untransformed)] {
        match &v.error {
            Some(e) if v.rows == 0 => println!("{name}: error: {e}"),
            _ => {
                print!("{name}: rows {} edges {} components {}", v.rows, v.edges, v.components);
                if let Some(l0) = v.lambda0 {
                    print!(" lambda0 {l0:.3e}");
                }
                if let Some(gap) = v.layer_mean_gap {
                    print!(" layer-mean gap {gap:.3e} ({})", if gap > 1e-3 { "separated" } else { "not separated" });
                }
                if let Some(e) = &v.error {
                    print!(" spectrum error: {e}");
                }
                println!();
            }
        }
    }
    Ok(())
}

fn history_csv(h: &slate_core::train::TrainHistory) -> String {
    let mut csv = String::from("epoch,train_loss,val_ap\n");
    for (e, loss) in h.train_loss.iter().enumerate() {
        let ap = h.val_ap.get(e).map(|x| format!("{x:.17e}")).unwrap_or_default();
        let _ = writeln!(csv, "{e},{loss:.17e},{ap}");
    }
    csv
}

pub fn train(cfg: &RunConfig) -> Result<()> {
    let g = load_graph(cfg)?;
    let tc = cfg.train(g.num_nodes())?;
    let mut model = SlateModel::<f64>::new(tc.model.clone(), tc.seed)?;
    let history = train_model(&mut model, &g, &tc)?;
    let out = cfg.out_dir();
    let mut buf = Vec::new();
    write_checkpoint(model.store(), &mut buf)?;
    write(&out.join("checkpoint.bin"), buf)?;
    write(&out.join("trace.csv"), history_csv(&history))?;
    write_json(&out.join("history.json"), &history)?;
    println!(
        "trained {} epochs, best epoch {}{}",
        history.train_loss.len(),
        history.best_epoch,
        history
            .val_ap
            .get(history.best_epoch)
            .map(|ap| format!(", validation AP {ap:.4}"))
            .unwrap_or_default()
    );
    Ok(())
}

fn load_model(cfg: &RunConfig, tc: &TrainConfig) -> Result<SlateModel<f64>> {
    let path = match cfg.get("checkpoint") {
        "" => cfg.out_dir().join("checkpoint.bin"),
        p => PathBuf::from(p),
    };
    let bytes = fs::read(&path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    let store = read_checkpoint::<f64, _>(bytes.as_slice())?;
    let mut model = SlateModel::<f64>::new(tc.model.clone(), tc.seed)?;
    model
        .store_mut()
        .load_values(&store)
        .context("checkpoint does not match the configured model")?;
    Ok(model)
}

pub fn eval(cfg: &RunConfig) -> Result<()> {
    let g = load_graph(cfg)?;
    let tc = cfg.train(g.num_nodes())?;
    let model = load_model(cfg, &tc)?;
    let split = split_chronological(&g, &tc.split)?;
    for strategy in cfg.strategies()? {
        let mut report = evaluate(&model, &g, &tc, split.test.clone(), strategy)?;
        report.config = cfg.as_map();
        write_json(&cfg.out_dir().join(format!("report_{}.json", strategy.name())), &report)?;
        println!(
            "{}: AUC {:.4} AP {:.4} over {} pairs",
            strategy.name(),
            report.aggregate.auc,
            report.aggregate.ap,
            report.n_pairs
        );
    }
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
struct Cell {
    encoding: String,
    edge_module: bool,
    pooling: String,
    w: String,
    seed: u64,
    auc: Option<f64>,
    ap: Option<f64>,
    error: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
struct SummaryRow {
    encoding: String,
    edge_module: bool,
    pooling: String,
    w: String,
    runs: usize,
    auc_mean: f64,
    auc_std: f64,
    ap_mean: f64,
    ap_std: f64,
    /// `mean ± std` in percent, two decimals.
    auc: String,
    ap: String,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

fn run_cell(g: &DynamicGraph, base: &TrainConfig, strategy: Strategy, cell: &mut Cell) -> Result<()> {
    let mut tc = base.clone();
    tc.model.encoding = EncodingKind::parse(&cell.encoding)?;
    tc.model.edge_module = cell.edge_module;
    tc.model.pooling = PoolingSpec::parse(&cell.pooling)?;
    tc.w = parse_window(&cell.w)?;
    tc.seed = cell.seed;
    let mut model = SlateModel::<f64>::new(tc.model.clone(), tc.seed)?;
    train_model(&mut model, g, &tc)?;
    let split = split_chronological(g, &tc.split)?;
    let report = evaluate(&model, g, &tc, split.test.clone(), strategy)?;
    cell.auc = Some(report.aggregate.auc);
    cell.ap = Some(report.aggregate.ap);
    Ok(())
}

pub fn ablate(cfg: &RunConfig) -> Result<()> {
    let g = load_graph(cfg)?;
    let base = cfg.train(g.num_nodes())?;
    let strategy = Strategy::parse(cfg.get("strategy"))?;
    let seeds: u64 = cfg.parse("seeds")?;
    let seed0: u64 = cfg.parse("seed")?;
    let encodings = cfg.list("encodings");
    let edge_flags = cfg
        .list("edge_modules")
        .iter()
        .map(|s| s.parse::<bool>().map_err(|_| anyhow!("invalid edge module flag `{s}`")))
        .collect::<Result<Vec<_>>>()?;
    let poolings = cfg.list("poolings");
    let ws = cfg.list("ws");
    for e in &encodings {
        EncodingKind::parse(e)?;
    }
    for p in &poolings {
        PoolingSpec::parse(p)?;
    }
    for w in &ws {
        parse_window(w)?;
    }
    let mut cells = Vec::new();
    for enc in &encodings {
        for &edge in &edge_flags {
            for pool in &poolings {
                for w in &ws {
                    for s in 0..seeds {
                        cells.push(Cell {
                            encoding: enc.clone(),
                            edge_module: edge,
                            pooling: pool.clone(),
                            w: window_name(parse_window(w)?),
                            seed: seed0 + s,
                            auc: None,
                            ap: None,
                            error: None,
                        });
                    }
                }
            }
        }
    }
    let jobs: usize = cfg.parse("jobs")?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    pool.install(|| {
        cells.par_iter_mut().for_each(|cell| {
            if let Err(e) = run_cell(&g, &base, strategy, cell) {
                cell.error = Some(format!("{e:#}"));
            }
        })
    });

    let mut cells_csv = String::from("encoding,edge_module,pooling,w,seed,auc,ap,error\n");
    for c in &cells {
        let f = |x: Option<f64>| x.map(|v| format!("{v:.17e}")).unwrap_or_default();
        let err = c.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        writeln!(cells_csv, "{},{},{},{},{},{},{},{}", c.encoding, c.edge_module, c.pooling, c.w, c.seed, f(c.auc), f(c.ap), err)?;
    }
    let mut rows = Vec::new();
    for group in cells.chunks(seeds.max(1) as usize) {
        let ok: Vec<&Cell> = group.iter().filter(|c| c.error.is_none()).collect();
        if ok.is_empty() {
            continue;
        }
        let aucs: Vec<f64> = ok.iter().filter_map(|c| c.auc).collect();
        let aps: Vec<f64> = ok.iter().filter_map(|c| c.ap).collect();
        let (am, asd) = mean_std(&aucs);
        let (pm, psd) = mean_std(&aps);
        let c = group[0].clone();
        rows.push(SummaryRow {
            encoding: c.encoding,
            edge_module: c.edge_module,
            pooling: c.pooling,
            w: c.w,
            runs: ok.len(),
            auc_mean: am,
            auc_std: asd,
            ap_mean: pm,
            ap_std: psd,
            auc: format!("{:.2} ± {:.2}", 100.0 * am, 100.0 * asd),
            ap: format!("{:.2} ± {:.2}", 100.0 * pm, 100.0 * psd),
        });
    }
    let mut summary_csv = String::from("encoding,edge_module,pooling,w,runs,auc_mean,auc_std,ap_mean,ap_std,auc,ap\n");
    for r in &rows {
        writeln!(
            summary_csv,
            "{},{},{},{},{},{:.17e},{:.17e},{:.17e},{:.17e},{},{}",
            r.encoding, r.edge_module, r.pooling, r.w, r.runs, r.auc_mean, r.auc_std, r.ap_mean, r.ap_std, r.auc, r.ap
        )?;
    }
    let out = cfg.out_dir();
    write(&out.join("cells.csv"), cells_csv)?;
    write(&out.join("summary.csv"), summary_csv)?;
    write_json(&out.join("summary.json"), &serde_json::json!({ "rows": rows, "cells": cells }))?;

    println!("{:<20} {:<6} {:<8} {:<4} {:>16} {:>16}", "encoding", "edge", "pooling", "w", "AUC", "AP");
    for r in &rows {
        println!("{:<20} {:<6} {:<8} {:<4} {:>16} {:>16}", r.encoding, r.edge_module, r.pooling, r.w, r.auc, r.ap);
    }
    let failed: Vec<&Cell> = cells.iter().filter(|c| c.error.is_some()).collect();
    if !failed.is_empty() {
        for c in &failed {
            eprintln!(
                "failed cell: encoding={} edge_module={} pooling={} w={} seed={}: {}",
                c.encoding,
                c.edge_module,
                c.pooling,
                c.w,
                c.seed,
                c.error.as_deref().unwrap_or("")
            );
        }
        bail!("{} of {} ablation cells failed", failed.len(), cells.len());
    }
    Ok(())
}
