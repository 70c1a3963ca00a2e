use std::fs;
use std::path::{Path, PathBuf};

use dare_core::backbone::{load_weights, BackboneConfig, BackboneWeights};
use dare_core::dataio::{load_manifest, synth_fmv, synth_images, write_image_dataset, FeatureSet, LabelTaxonomy, Manifest, SynthImageSpec, SynthSpec};
use dare_core::layers::HeadArchitecture;
use dare_core::metrics::{cross_validate, cross_validate_with, report, ConfusionMatrix, MetricsReport};
use dare_core::pipeline::{featurize, predict_pair};
use dare_core::treeclf::{load_archive, save_archive, train_tree, TrainConfig, TreeTopology};
use dare_core::{Error, Result};

use crate::run::RunManifest;
use crate::{BackboneArgs, Mode, TrainArgs};

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MissingFile(_) => 2,
        _ => 3,
    }
}

fn require(path: &Path) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::MissingFile(path.to_path_buf()))
    }
}

/// `path` itself, or `path/default` when `path` is a directory.
fn resolve(path: &Path, default: &str) -> Result<PathBuf> {
    require(path)?;
    let p = if path.is_dir() { path.join(default) } else { path.to_path_buf() };
    require(&p)?;
    Ok(p)
}

fn train_config(args: &TrainArgs) -> TrainConfig {
    TrainConfig {
        lr: args.lr,
        momentum: args.momentum,
        batch_size: args.batch,
        epochs: args.epochs,
        seed: args.seed,
        head: HeadArchitecture { hidden: args.hidden.clone(), dropout: args.dropout },
        jobs: args.jobs,
    }
}

fn topology(spec: &str, class_names: Option<&[String]>) -> Result<TreeTopology> {
    match (spec, class_names) {
        ("flat", Some(names)) => TreeTopology::flat(names),
        ("flat", None) => Err(Error::InvalidConfig("flat topology needs class names from the data".into())),
        _ => TreeTopology::load(spec),
    }
}

/// Label order for image manifests: the diver taxonomy when the tree covers
/// exactly those labels, the tree's leaf order otherwise.
fn taxonomy_for(topo: &TreeTopology) -> Result<LabelTaxonomy> {
    let mut leaves: Vec<String> = topo.leaves().iter().map(|s| s.to_string()).collect();
    let caddy = LabelTaxonomy::caddy();
    let mut sorted = caddy.labels().to_vec();
    sorted.sort();
    let ordered = leaves.clone();
    leaves.sort();
    if leaves == sorted {
        Ok(caddy)
    } else {
        LabelTaxonomy::from_labels(ordered)
    }
}

fn backbone(args: &BackboneArgs, run: &mut RunManifest) -> Result<(BackboneConfig, BackboneWeights)> {
    let cfg = BackboneConfig::load(&args.backbone)?;
    run.config("backbone", &args.backbone);
    let weights = match &args.backbone_weights {
        Some(p) => {
            require(p)?;
            run.config("backbone_weights", p);
            load_weights(&cfg, p)?
        }
        None => BackboneWeights::random(&cfg, args.backbone_seed)?,
    };
    Ok((cfg, weights))
}

fn image_features(
    data: &Path,
    taxonomy: &LabelTaxonomy,
    cfg: &BackboneConfig,
    weights: &BackboneWeights,
    jobs: usize,
) -> Result<(Manifest, FeatureSet)> {
    let manifest = load_manifest(resolve(data, "manifest.csv")?, taxonomy, true)?;
    let set = featurize(&manifest, cfg, weights, jobs)?;
    Ok((manifest, set))
}

fn write_metrics(out: &Path, rep: &MetricsReport, names: &[String], run: &mut RunManifest) -> Result<()> {
    fs::write(out.join("metrics.csv"), rep.to_csv(names))?;
    fs::write(out.join("boxstats.csv"), rep.box_stats_csv()?)?;
    run.output(out.join("metrics.csv"));
    run.output(out.join("boxstats.csv"));
    println!("CCR: {:.2}", rep.ccr);
    println!("macro F1: {:.4}", rep.macro_f1);
    println!("min BACC: {:.4}", rep.min_bacc());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn synth(
    classes: usize,
    per_class: usize,
    mode: Mode,
    dim: usize,
    margin: f64,
    noise: f64,
    side: usize,
    seed: u64,
    out: &Path,
) -> Result<()> {
    let mut run = RunManifest::start("synth", Some(seed));
    fs::create_dir_all(out)?;
    match mode {
        Mode::Fmv => {
            let set = synth_fmv(&SynthSpec { classes, per_class, dim, margin, noise, seed })?;
            let path = out.join("features.dfmv");
            set.save(&path)?;
            run.output(path);
            println!("wrote {} rows of dimension {dim}", set.len());
        }
        Mode::Image => {
            let pairs = synth_images(&SynthImageSpec { classes, per_class, side, seed })?;
            let manifest = write_image_dataset(out, &pairs, &LabelTaxonomy::for_classes(classes))?;
            run.output(out.join("manifest.csv"));
            run.output(out.join("left"));
            run.output(out.join("right"));
            println!("wrote {} stereo pairs ({} images)", manifest.samples.len(), manifest.image_count());
        }
    }
    run.finish(out)
}

pub fn train(data: &Path, mode: Mode, args: &TrainArgs, bb: &BackboneArgs, out: &Path) -> Result<()> {
    let mut run = RunManifest::start("train", Some(args.seed));
    run.config("data", data);
    run.config("topology", &args.topology);
    let cfg = train_config(args);
    cfg.validate()?;
    let (set, topo, backbone) = match mode {
        Mode::Fmv => {
            let set = FeatureSet::load(resolve(data, "features.dfmv")?)?;
            let topo = topology(&args.topology, Some(&set.class_names))?;
            (set, topo, None)
        }
        Mode::Image => {
            let topo = topology(&args.topology, None)?;
            let (bcfg, weights) = backbone(bb, &mut run)?;
            let (_, set) = image_features(data, &taxonomy_for(&topo)?, &bcfg, &weights, args.jobs)?;
            (set, topo, Some((bcfg, weights)))
        }
    };
    let (tree, reports) = train_tree(&topo, &set, &cfg)?;
    fs::create_dir_all(out)?;
    save_archive(out, &tree, &cfg, backbone.as_ref().map(|(c, w)| (c, w)))?;
    let mut csv = String::from("node_id,node,epoch,loss\n");
    for r in &reports {
        for (epoch, loss) in r.loss_history.iter().enumerate() {
            csv.push_str(&format!("{},{},{},{:.9}\n", r.id, r.name, epoch + 1, loss));
        }
    }
    fs::write(out.join("loss_history.csv"), csv)?;
    run.output(out.join("manifest.json"));
    run.output(out.join("loss_history.csv"));
    for r in &reports {
        let last = r.loss_history.last().copied().unwrap_or(f64::NAN);
        println!("{:>3} {:<10} samples {:>6}  final loss {last:.4}", r.id, r.name, r.samples);
    }
    println!("archive written to {}", out.display());
    run.finish(out)
}

#[allow(clippy::too_many_arguments)]
pub fn eval(
    data: &Path,
    mode: Mode,
    kfold: usize,
    archive: Option<&Path>,
    stub_class: Option<usize>,
    args: &TrainArgs,
    bb: &BackboneArgs,
    out: &Path,
) -> Result<()> {
    let mut run = RunManifest::start("eval", Some(args.seed));
    run.config("data", data);
    if let Some(dir) = archive {
        require(dir)?;
        run.config("archive", dir);
        let arch = load_archive(dir)?;
        let set = match mode {
            Mode::Fmv => FeatureSet::load(resolve(data, "features.dfmv")?)?,
            Mode::Image => {
                let (cfg, weights) = arch
                    .backbone
                    .as_ref()
                    .ok_or_else(|| Error::InvalidConfig("archive has no backbone for image data".into()))?;
                let taxonomy = LabelTaxonomy::from_labels(arch.tree.class_names().to_vec())?;
                image_features(data, &taxonomy, cfg, weights, args.jobs)?.1
            }
        };
        if set.class_names != arch.tree.class_names() {
            return Err(Error::InvalidConfig("dataset classes differ from the archive's".into()));
        }
        let mut cm = ConfusionMatrix::new(set.n_classes());
        let mut preds = String::from("index,truth,predicted,path\n");
        for i in 0..set.len() {
            let p = arch.tree.predict(set.row(i))?;
            cm.record(set.label(i), p.class)?;
            let path: Vec<String> = p.path.iter().map(|id| id.to_string()).collect();
            preds.push_str(&format!("{i},{},{},{}\n", set.class_names[set.label(i)], p.label, path.join("/")));
        }
        fs::create_dir_all(out)?;
        fs::write(out.join("predictions.csv"), preds)?;
        run.output(out.join("predictions.csv"));
        write_metrics(out, &report(&cm)?, &set.class_names, &mut run)?;
        return run.finish(out);
    }

    let set = match mode {
        Mode::Fmv => FeatureSet::load(resolve(data, "features.dfmv")?)?,
        Mode::Image => {
            let topo = topology(&args.topology, None)?;
            let (cfg, weights) = backbone(bb, &mut run)?;
            image_features(data, &taxonomy_for(&topo)?, &cfg, &weights, args.jobs)?.1
        }
    };
    let cv = match stub_class {
        Some(c) => {
            if c >= set.n_classes() {
                return Err(Error::LabelOutOfRange { label: c, n: set.n_classes() });
            }
            cross_validate_with(&set, kfold, args.seed, |_, _| Ok(move |_: &[f64]| c))?
        }
        None => {
            run.config("topology", &args.topology);
            let topo = topology(&args.topology, Some(&set.class_names))?;
            let cfg = train_config(args);
            cfg.validate()?;
            cross_validate(&set, &topo, &cfg, kfold, args.seed)?
        }
    };
    fs::create_dir_all(out)?;
    let mut folds = String::from("fold,samples,ccr,macro_f1,min_bacc\n");
    for (f, r) in cv.folds.iter().enumerate() {
        folds.push_str(&format!("{f},{},{:.4},{:.6},{:.6}\n", r.test_indices.len(), r.report.ccr, r.report.macro_f1, r.report.min_bacc()));
    }
    fs::write(out.join("folds.csv"), folds)?;
    run.output(out.join("folds.csv"));
    write_metrics(out, &cv.aggregate, &set.class_names, &mut run)?;
    run.finish(out)
}

pub fn predict(left: &Path, right: &Path, archive: &Path, out: Option<&Path>) -> Result<()> {
    let mut run = RunManifest::start("predict", None);
    require(left)?;
    require(right)?;
    require(archive)?;
    run.config("archive", archive);
    let arch = load_archive(archive)?;
    let (cfg, weights) = arch
        .backbone
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("archive has no backbone; it was trained on precomputed features".into()))?;
    let p = predict_pair(left, right, cfg, weights, &arch.tree)?;
    let path: Vec<&str> = p.path.iter().map(|&id| arch.tree.topology().node(id).name.as_str()).collect();
    let root: Vec<String> = p.probs[0].iter().map(|v| format!("{v:.6}")).collect();
    println!("{}\t{}\t{}", p.label, path.join("/"), root.join(","));
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        run.finish(dir)?;
    }
    Ok(())
}

pub fn bench(archive: &Path, data: &Path, reps: usize, out: Option<&Path>) -> Result<()> {
    let mut run = RunManifest::start("bench", None);
    require(archive)?;
    run.config("archive", archive);
    run.config("data", data);
    if reps < 2 {
        eprintln!("warning: with {reps} repetition the median and p95 are the same single sample");
    }
    let arch = load_archive(archive)?;
    let (cfg, weights) = arch
        .backbone
        .as_ref()
        .ok_or_else(|| Error::InvalidConfig("archive has no backbone; bench needs image input".into()))?;
    let taxonomy = LabelTaxonomy::from_labels(arch.tree.class_names().to_vec())?;
    let manifest = load_manifest(resolve(data, "manifest.csv")?, &taxonomy, true)?;
    let rep = dare_core::pipeline::bench(&manifest.samples, cfg, weights, &arch.tree, reps)?;
    let text = rep.render();
    println!("repetitions: {}", rep.reps);
    print!("{text}");
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("bench.csv"), &text)?;
        run.output(dir.join("bench.csv"));
        run.finish(dir)?;
    }
    Ok(())
}
