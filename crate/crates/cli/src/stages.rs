//! Pipeline stages. Each reads the previous stage's artifacts under the
//! work directory and writes its own, so any stage can be rerun alone.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use sigver::imageprep::{self, io as imgio, GrayImage};
use sigver::metrics::{self, EvalReport, ReportLayout, UserScores};
use sigver::nn::{gradcheck, load_network, save_network, Network, Tensor};
use sigver::par::Execution;
use sigver::protocol::{self, build_wd_sets, Corpus, SampleKind, SynthConfig, UserSamples, WdProtocol};
use sigver::svm::{grid_search, DevProblem, FitReport, GridSearchResult, Kernel, SvmModel, WdTrainSet};
use sigver::training::{train_wi as fit_network, EpochRecord};

use crate::artifacts::{self, FeatureRecord, FEATURE_DIR, GRID_DIR, PREP_DIR, REPORT_DIR, WD_DIR, WI_DIR};
use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{self, Entry};

/// A validated configuration plus how to run it.
#[derive(Clone, Debug)]
pub struct Context {
    pub cfg: RunConfig,
    pub digest: String,
    pub exec: Execution,
    pub force: bool,
}

impl Context {
    pub fn new(cfg: RunConfig, exec: Execution, force: bool) -> CliResult<Self> {
        cfg.validate()?;
        cfg.seed()?;
        let digest = cfg.digest();
        Ok(Context { cfg, digest, exec, force })
    }

    fn dir(&self, stage: &str) -> CliResult<PathBuf> {
        Ok(self.cfg.work_dir()?.join(stage))
    }

    fn announce(&self, stage: &str) {
        log::info!("{stage}: config {}", self.digest);
    }
}

fn wd_model_path(dir: &Path, user: usize) -> PathBuf {
    dir.join(format!("user_{user:03}.sgsv"))
}

// ---------------------------------------------------------------- datagen

/// Writes a synthetic corpus and its manifest; returns the number of images.
pub fn datagen(ctx: &Context) -> CliResult<usize> {
    ctx.announce("datagen");
    let root = ctx.cfg.corpus()?;
    let occupied = root.exists()
        && fs::read_dir(root)
            .map_err(|e| CliError::io(format!("listing {}", root.display()), e))?
            .next()
            .is_some();
    if occupied && !ctx.force {
        return Err(CliError::Validation(format!(
            "{} is not empty; pass --force to write into it",
            root.display()
        )));
    }
    let s = &ctx.cfg.synth;
    let corpus = protocol::generate_synthetic_corpus(&SynthConfig {
        n_users: s.users,
        n_genuine: s.genuine,
        n_simple: s.simple,
        n_skilled: s.skilled,
        height: s.height,
        width: s.width,
        seed: ctx.cfg.seed()?,
    })?;
    let mut entries = Vec::new();
    for user in &corpus.users {
        artifacts::create_dir(&root.join(format!("user{:03}", user.id)))?;
        for kind in [SampleKind::Genuine, SampleKind::Simple, SampleKind::Skilled] {
            for (index, img) in user.samples(kind).iter().enumerate() {
                let path = manifest::relative_path(user.id, kind, index);
                imgio::write_png(&root.join(&path), img)?;
                entries.push(Entry { user: user.id, kind, index, path });
            }
        }
    }
    entries.sort();
    artifacts::write_bytes(&root.join(manifest::MANIFEST_FILE), manifest::render(&entries, &ctx.digest).as_bytes())?;
    log::info!("datagen: {} users, {} images in {}", corpus.len(), entries.len(), root.display());
    Ok(entries.len())
}

// ------------------------------------------------------------- preprocess

fn dev_positions(corpus: &Corpus<usize>, cfg: &RunConfig) -> CliResult<Vec<usize>> {
    let (dev, _) = protocol::split(corpus, cfg.split)?;
    Ok(dev.iter().flat_map(|u| u.genuine.iter().copied()).collect())
}

/// Normalizes every manifest image; returns the development-set pixel std.
pub fn preprocess(ctx: &Context) -> CliResult<f64> {
    ctx.announce("preprocess");
    let root = ctx.cfg.corpus()?;
    let entries = manifest::load(root)?;
    let corpus = manifest::corpus_of(&entries)?;
    let prep = ctx.cfg.prep.clone();
    let prepared = ctx
        .exec
        .map(&entries, |e| -> sigver::Result<GrayImage<f32>> {
            let img = imgio::read_png(&root.join(&e.path))?;
            imageprep::prepare(&img, &prep).map_err(|err| match err {
                sigver::Error::DegenerateImage(m) => sigver::Error::DegenerateImage(format!("{}: {m}", e.path)),
                other => other,
            })
        })
        .into_iter()
        .collect::<sigver::Result<Vec<_>>>()?;
    let dev = dev_positions(&corpus, &ctx.cfg)?;
    let std = imageprep::compute_dataset_std(dev.iter().map(|&i| &prepared[i]))?;
    let normalized = prepared
        .iter()
        .map(|img| imageprep::normalize_std(img, std))
        .collect::<sigver::Result<Vec<_>>>()?;

    let dir = ctx.dir(PREP_DIR)?;
    artifacts::create_dir(&dir)?;
    let batch = dir.join("images.sgtn");
    let mut buf = Vec::new();
    imgio::write_batch(&mut buf, &normalized)?;
    artifacts::write_bytes(&batch, &buf)?;
    let index = dir.join("index.tsv");
    artifacts::write_bytes(&index, manifest::render(&entries, &ctx.digest).as_bytes())?;
    let stats = dir.join("stats.txt");
    artifacts::write_bytes(&stats, format!("# config {}\npixel_std = {std:?}\n", ctx.digest).as_bytes())?;
    artifacts::write_provenance(&dir, "preprocess", &ctx.digest, &[batch, index, stats])?;
    log::info!("preprocess: {} images, development pixel std {std:.4}", normalized.len());
    Ok(std)
}

fn load_prepared(ctx: &Context) -> CliResult<(Vec<Entry>, Vec<Tensor<f32>>)> {
    let dir = ctx.dir(PREP_DIR)?;
    let (batch, index) = (dir.join("images.sgtn"), dir.join("index.tsv"));
    artifacts::require(&batch, "preprocess")?;
    artifacts::require(&index, "preprocess")?;
    let entries = manifest::parse(&artifacts::read_text(&index)?)?;
    let images = imgio::read_batch(&mut artifacts::open(&batch)?)?;
    if images.len() != entries.len() {
        return Err(CliError::Validation(format!(
            "{} lists {} samples but the batch holds {}",
            index.display(),
            entries.len(),
            images.len()
        )));
    }
    let tensors = images
        .into_iter()
        .map(|img| {
            let (h, w) = (img.height(), img.width());
            Tensor::from_vec(&[1, h, w], img.into_pixels())
        })
        .collect::<sigver::Result<Vec<_>>>()?;
    Ok((entries, tensors))
}

// ---------------------------------------------------------------- train-wi

/// Trains the feature network on the development users' genuine signatures.
pub fn train_wi(ctx: &Context) -> CliResult<Vec<EpochRecord>> {
    ctx.announce("train-wi");
    let (entries, tensors) = load_prepared(ctx)?;
    let corpus = manifest::corpus_of(&entries)?;
    let (dev, _) = protocol::split(&corpus, ctx.cfg.split)?;
    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (label, user) in dev.iter().enumerate() {
        for &pos in &user.genuine {
            inputs.push(tensors[pos].clone());
            labels.push(label);
        }
    }
    drop(tensors);
    let seed = ctx.cfg.seed()?;
    let mut net = Network::<f32>::new(&ctx.cfg.network, dev.len(), seed)?;
    let train = sigver::training::TrainConfig {
        seed,
        ..ctx.cfg.train.clone()
    };

    let dir = ctx.dir(WI_DIR)?;
    artifacts::create_dir(&dir)?;
    let every = ctx.cfg.checkpoint_every;
    let failure: RefCell<Option<CliError>> = RefCell::new(None);
    let log = fit_network(&mut net, &inputs, &labels, &train, ctx.exec, |rec, net| {
        if every > 0 && (rec.epoch + 1) % every == 0 && failure.borrow().is_none() {
            let path = dir.join(format!("checkpoint_e{:03}.sgnt", rec.epoch + 1));
            if let Err(e) = save_model(&path, net) {
                *failure.borrow_mut() = Some(e);
            }
        }
    })?;
    if let Some(e) = failure.into_inner() {
        return Err(e);
    }

    let model = dir.join("model.sgnt");
    save_model(&model, &net)?;
    let mut csv = String::from("epoch,lr,mean_loss,accuracy\n");
    for r in &log {
        let _ = writeln!(csv, "{},{:?},{:?},{:?}", r.epoch, r.lr, r.mean_loss, r.accuracy);
    }
    let log_path = dir.join("train_log.csv");
    artifacts::write_bytes(&log_path, csv.as_bytes())?;
    artifacts::write_provenance(&dir, "train-wi", &ctx.digest, &[model, log_path])?;
    Ok(log)
}

fn save_model(path: &Path, net: &Network<f32>) -> CliResult<()> {
    let mut buf = Vec::new();
    save_network(&mut buf, net)?;
    artifacts::write_bytes(path, &buf)
}

// ----------------------------------------------------------------- extract

/// Writes a feature vector for every sample; returns the feature length.
pub fn extract(ctx: &Context) -> CliResult<usize> {
    ctx.announce("extract");
    let model_path = ctx.dir(WI_DIR)?.join("model.sgnt");
    artifacts::require(&model_path, "train-wi")?;
    let net: Network<f32> = load_network(&mut artifacts::open(&model_path)?)?;
    let (entries, tensors) = load_prepared(ctx)?;
    let features = net.extract_features_batch(&tensors, ctx.exec)?;
    let records: Vec<FeatureRecord> = entries
        .iter()
        .zip(features)
        .map(|(e, f)| FeatureRecord {
            user: e.user,
            kind: e.kind,
            index: e.index,
            values: f.0,
        })
        .collect();
    let dir = ctx.dir(FEATURE_DIR)?;
    artifacts::create_dir(&dir)?;
    let path = dir.join("features.sgft");
    artifacts::save_features(&path, &records)?;
    let index = dir.join("index.tsv");
    artifacts::write_bytes(&index, manifest::render(&entries, &ctx.digest).as_bytes())?;
    artifacts::write_provenance(&dir, "extract", &ctx.digest, &[path, index])?;
    let dim = net.feature_len();
    log::info!("extract: {} samples, {dim}-d features", records.len());
    Ok(dim)
}

/// Features as rows indexed by sample position, plus the corpus over those
/// positions.
pub struct FeatureTable {
    pub corpus: Corpus<usize>,
    pub rows: Vec<Vec<f64>>,
}

pub fn load_features(ctx: &Context) -> CliResult<FeatureTable> {
    let path = ctx.dir(FEATURE_DIR)?.join("features.sgft");
    artifacts::require(&path, "extract")?;
    let records = artifacts::read_features(artifacts::open(&path)?)?;
    let entries: Vec<Entry> = records
        .iter()
        .map(|r| Entry {
            user: r.user,
            kind: r.kind,
            index: r.index,
            path: String::new(),
        })
        .collect();
    if entries.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::Validation(format!("{} is not in sample order", path.display())));
    }
    Ok(FeatureTable {
        corpus: manifest::corpus_of(&entries)?,
        rows: records.iter().map(|r| r.values.iter().map(|&v| v as f64).collect()).collect(),
    })
}

fn rows<'a>(table: &'a FeatureTable, positions: &[&usize]) -> Vec<&'a [f64]> {
    positions.iter().map(|&&p| table.rows[p].as_slice()).collect()
}

// -------------------------------------------------------------- gridsearch

/// Selects C and γ on the first `grid.dev_users` development users.
pub fn gridsearch(ctx: &Context) -> CliResult<GridSearchResult> {
    ctx.announce("gridsearch");
    let table = load_features(ctx)?;
    let (dev, _) = protocol::split(&table.corpus, ctx.cfg.split)?;
    let n = ctx.cfg.grid_dev_users;
    if dev.len() <= n {
        return Err(CliError::Validation(format!(
            "grid search on {n} development users needs more than {n} of them, found {}",
            dev.len()
        )));
    }
    let proto = WdProtocol {
        forgeries: protocol::ForgeryPolicy {
            random: 0,
            simple: 0,
            ..ctx.cfg.protocol.forgeries
        },
        ..ctx.cfg.protocol
    };
    let seed = ctx.cfg.seed()?;
    let others: Vec<Vec<UserSamples<usize>>> = (0..n)
        .map(|k| dev.iter().enumerate().filter(|&(i, _)| i != k).map(|(_, u)| u.clone()).collect())
        .collect();
    let sets = (0..n)
        .map(|k| build_wd_sets(0, &others[k], std::slice::from_ref(&dev[k]), &proto, seed))
        .collect::<sigver::Result<Vec<_>>>()?;
    let problems: Vec<DevProblem<'_>> = sets
        .iter()
        .map(|s| DevProblem {
            train: WdTrainSet {
                positives: rows(&table, &s.train_genuine),
                negatives: rows(&table, &s.train_negative),
            },
            genuine: rows(&table, &s.test_genuine),
            skilled: rows(&table, &s.test_skilled),
        })
        .collect();
    let result = grid_search(&problems, &ctx.cfg.grid, &ctx.cfg.svm, ctx.exec)?;

    let dir = ctx.dir(GRID_DIR)?;
    artifacts::create_dir(&dir)?;
    let path = dir.join("result.txt");
    let text = artifacts::render_grid(result.best, result.best_error, &result.table, &ctx.digest);
    artifacts::write_bytes(&path, text.as_bytes())?;
    log::info!(
        "gridsearch: C={} gamma={} mean error {:.4}",
        result.best.c,
        result.best.gamma,
        result.best_error
    );
    Ok(result)
}

// ---------------------------------------------------------------- train-wd

/// Solver diagnostics of one enrolled user's classifier.
#[derive(Clone, Debug, PartialEq)]
pub struct WdFit {
    pub user: usize,
    pub positives: usize,
    pub negatives: usize,
    pub support_vectors: usize,
    pub report: FitReport,
}

fn effective_svm(ctx: &Context) -> CliResult<sigver::svm::SvmConfig> {
    let mut svm = ctx.cfg.svm.clone();
    if ctx.cfg.use_grid {
        let path = ctx.dir(GRID_DIR)?.join("result.txt");
        artifacts::require(&path, "gridsearch")?;
        let best = artifacts::parse_grid(&artifacts::read_text(&path)?)?;
        svm.c = best.c;
        if let Kernel::Rbf { gamma } = &mut svm.kernel {
            *gamma = best.gamma;
        }
    }
    Ok(svm)
}

/// Trains one SVM per enrolled user.
pub fn train_wd(ctx: &Context) -> CliResult<Vec<WdFit>> {
    ctx.announce("train-wd");
    let table = load_features(ctx)?;
    let (dev, expl) = protocol::split(&table.corpus, ctx.cfg.split)?;
    let svm = effective_svm(ctx)?;
    let seed = ctx.cfg.seed()?;
    let proto = ctx.cfg.protocol;
    let inner = Execution::Sequential;
    let fitted = ctx
        .exec
        .map_range(expl.len(), |i| -> sigver::Result<(WdFit, Vec<u8>)> {
            let sets = build_wd_sets(i, dev, expl, &proto, seed)?;
            let train = WdTrainSet {
                positives: rows(&table, &sets.train_genuine),
                negatives: rows(&table, &sets.train_negative),
            };
            let (model, report) = SvmModel::fit(&train, &svm, inner)?;
            let mut bytes = Vec::new();
            model.save(&mut bytes)?;
            let fit = WdFit {
                user: sets.user,
                positives: train.positives.len(),
                negatives: train.negatives.len(),
                support_vectors: model.support.len(),
                report,
            };
            Ok((fit, bytes))
        })
        .into_iter()
        .collect::<sigver::Result<Vec<_>>>()?;

    let dir = ctx.dir(WD_DIR)?;
    artifacts::create_dir(&dir)?;
    let mut outputs = Vec::new();
    let mut csv = String::from("user,positives,negatives,support_vectors,iterations,gap,kkt_violation\n");
    for (fit, bytes) in &fitted {
        let path = wd_model_path(&dir, fit.user);
        artifacts::write_bytes(&path, bytes)?;
        outputs.push(path);
        let r = &fit.report;
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{:?},{:?}",
            fit.user, fit.positives, fit.negatives, fit.support_vectors, r.iterations, r.gap, r.kkt_violation
        );
        if r.kkt_violation > svm.tolerance {
            log::warn!("user {}: KKT violation {:.2e} above tolerance", fit.user, r.kkt_violation);
        }
    }
    let fit_path = dir.join("fit.csv");
    artifacts::write_bytes(&fit_path, csv.as_bytes())?;
    outputs.push(fit_path);
    artifacts::write_provenance(&dir, "train-wd", &ctx.digest, &outputs)?;
    log::info!("train-wd: {} users, {:?}, C={}", fitted.len(), svm.kernel, svm.c);
    Ok(fitted.into_iter().map(|(f, _)| f).collect())
}

// ---------------------------------------------------------------- evaluate

/// Scores every enrolled user's test set and writes the report.
pub fn evaluate(ctx: &Context) -> CliResult<EvalReport> {
    ctx.announce("evaluate");
    let table = load_features(ctx)?;
    let (dev, expl) = protocol::split(&table.corpus, ctx.cfg.split)?;
    let dir = ctx.dir(WD_DIR)?;
    let seed = ctx.cfg.seed()?;
    let proto = ctx.cfg.protocol;
    for u in expl {
        artifacts::require(&wd_model_path(&dir, u.id), "train-wd")?;
    }
    let scores = ctx
        .exec
        .map_range(expl.len(), |i| -> CliResult<UserScores> {
            let sets = build_wd_sets(i, dev, expl, &proto, seed)?;
            let model = SvmModel::load(artifacts::open(&wd_model_path(&dir, sets.user))?)?;
            let score = |list: &[&usize]| -> sigver::Result<Vec<f64>> { rows(&table, list).iter().map(|v| model.score(v)).collect() };
            Ok(UserScores {
                user: sets.user,
                genuine: score(&sets.test_genuine)?,
                random: score(&sets.test_random)?,
                simple: score(&sets.test_simple)?,
                skilled: score(&sets.test_skilled)?,
            })
        })
        .into_iter()
        .collect::<CliResult<Vec<_>>>()?;
    let layout = if proto.forgeries.random > 0 && proto.forgeries.simple > 0 {
        ReportLayout::AllForgeries
    } else {
        ReportLayout::GenuineSkilled
    };
    let report = metrics::aggregate(&scores, layout)?;

    let out = ctx.dir(REPORT_DIR)?;
    artifacts::create_dir(&out)?;
    let csv_path = out.join("report.csv");
    let file = fs::File::create(&csv_path).map_err(|e| CliError::io(format!("creating {}", csv_path.display()), e))?;
    report.write_csv(BufWriter::new(file))?;
    let summary_path = out.join("summary.txt");
    let summary = format!("# config {}\n{}", ctx.digest, report.summary_table());
    artifacts::write_bytes(&summary_path, summary.as_bytes())?;
    artifacts::write_provenance(&out, "evaluate", &ctx.digest, &[csv_path, summary_path])?;
    log::info!(
        "evaluate: mean EER {:.4}, mean AUC {:.4}",
        report.summary.mean_eer,
        report.summary.mean_auc
    );
    Ok(report)
}

// --------------------------------------------------------------- gradcheck

/// Finite-difference checks of every layer over `seeds` seeds each.
pub fn gradcheck(seeds: u64) -> CliResult<Vec<gradcheck::GradCheck>> {
    let results = gradcheck::check_all(0..seeds)?;
    let failed: Vec<String> = results
        .iter()
        .filter(|r| !r.passed())
        .map(|r| format!("{} seed {} ({:.2e})", r.layer.name(), r.seed, r.max_rel_error))
        .collect();
    if failed.is_empty() {
        Ok(results)
    } else {
        Err(CliError::GradCheck(failed.join(", ")))
    }
}

/// Runs every stage after `datagen` in order.
pub fn run_pipeline(ctx: &Context) -> CliResult<EvalReport> {
    preprocess(ctx)?;
    train_wi(ctx)?;
    extract(ctx)?;
    if ctx.cfg.use_grid {
        gridsearch(ctx)?;
    }
    train_wd(ctx)?;
    evaluate(ctx)
}
