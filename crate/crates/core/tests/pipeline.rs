//! Small end-to-end run through the library API: synthetic corpus, image
//! preparation, WI training, features, WD SVMs, report.

use sigver::imageprep::{self, GrayImage, PrepConfig, PrepMode};
use sigver::metrics::{self, ReportLayout, UserScores};
use sigver::nn::{load_network, save_network, Network, NetworkSpec, Tensor};
use sigver::par::Execution;
use sigver::protocol::{build_wd_sets, generate_synthetic_corpus, split, ForgeryPolicy, SplitSpec, SynthConfig, WdProtocol};
use sigver::svm::{SvmConfig, SvmModel, WdTrainSet};
use sigver::training::{train_wi, TrainConfig};

const TINY: &str = "\
input 1x28x40
conv 8 5x5 stride=2 pad=0
relu
maxpool 2x2 stride=2
conv 8 3x3 stride=1 pad=1
relu
maxpool 2x2 stride=2
fc 32
relu
dropout 0.5
fc classes
softmax
";

fn prep() -> PrepConfig {
    PrepConfig {
        mode: PrepMode::CanvasThenResize,
        canvas_h: 56,
        canvas_w: 80,
        target_h: 28,
        target_w: 40,
        dataset_pixel_std: 1.0,
    }
}

fn to_tensor(img: &GrayImage<f32>) -> Tensor<f32> {
    Tensor::from_vec(&[1, img.height(), img.width()], img.pixels().to_vec()).unwrap()
}

struct Run {
    model_bytes: Vec<u8>,
    features: Vec<Vec<f32>>,
    report: metrics::EvalReport,
}

fn run(exec: Execution) -> Run {
    let corpus = generate_synthetic_corpus(&SynthConfig {
        n_users: 9,
        n_genuine: 8,
        n_simple: 0,
        n_skilled: 6,
        height: 56,
        width: 80,
        seed: 11,
    })
    .unwrap();
    let cfg = prep();
    let prepared: Vec<_> = corpus.users.iter().map(|u| u.map(|img| imageprep::prepare(img, &cfg).unwrap())).collect();
    let (dev_raw, _) = prepared.split_at(corpus.len() - 3);
    let std = imageprep::compute_dataset_std(dev_raw.iter().flat_map(|u| u.genuine.iter())).unwrap();
    let users: Vec<_> = prepared
        .iter()
        .map(|u| u.map(|img| to_tensor(&imageprep::normalize_std(img, std).unwrap())))
        .collect();
    let corpus = sigver::protocol::Corpus::new(users).unwrap();
    let (dev, expl) = split(&corpus, SplitSpec { exploitation_users: 3 }).unwrap();

    let mut inputs = Vec::new();
    let mut labels = Vec::new();
    for (label, u) in dev.iter().enumerate() {
        for t in &u.genuine {
            inputs.push(t.clone());
            labels.push(label);
        }
    }
    let spec: NetworkSpec = TINY.parse().unwrap();
    let mut net = Network::<f32>::new(&spec, dev.len(), 5).unwrap();
    let train = TrainConfig {
        batch_size: 8,
        epochs: 6,
        lr_decay_every: 4,
        seed: 5,
        ..TrainConfig::default()
    };
    let log = train_wi(&mut net, &inputs, &labels, &train, exec, |_, _| {}).unwrap();
    assert_eq!(log.len(), 6);
    assert!(log.iter().all(|r| r.mean_loss.is_finite()));

    let mut model_bytes = Vec::new();
    save_network(&mut model_bytes, &net).unwrap();
    let reloaded: Network<f32> = load_network(&mut model_bytes.as_slice()).unwrap();

    let feats = |t: &Tensor<f32>| -> Vec<f64> { reloaded.extract_features(t).unwrap().to_f64() };
    let proto = WdProtocol {
        n_genuine_train: 4,
        n_neg_per_dev_user: 3,
        n_genuine_test: 4,
        forgeries: ForgeryPolicy { random: 0, simple: 0, skilled: 6 },
    };
    let mut scores = Vec::new();
    for i in 0..expl.len() {
        let sets = build_wd_sets(i, dev, expl, &proto, 5).unwrap();
        let pos: Vec<Vec<f64>> = sets.train_genuine.iter().map(|t| feats(t)).collect();
        let neg: Vec<Vec<f64>> = sets.train_negative.iter().map(|t| feats(t)).collect();
        let set = WdTrainSet {
            positives: pos.iter().map(|v| v.as_slice()).collect(),
            negatives: neg.iter().map(|v| v.as_slice()).collect(),
        };
        let cfg = SvmConfig {
            kernel: sigver::svm::Kernel::Rbf { gamma: 1.0 / 32.0 },
            ..SvmConfig::default()
        };
        let (model, fit) = SvmModel::fit(&set, &cfg, exec).unwrap();
        assert!(fit.kkt_violation <= cfg.tolerance, "{fit:?}");
        let score = |list: &[&Tensor<f32>]| list.iter().map(|t| model.score(&feats(t)).unwrap()).collect::<Vec<_>>();
        scores.push(UserScores {
            user: sets.user,
            genuine: score(&sets.test_genuine),
            random: Vec::new(),
            simple: Vec::new(),
            skilled: score(&sets.test_skilled),
        });
    }
    let report = metrics::aggregate(&scores, ReportLayout::GenuineSkilled).unwrap();
    let all: Vec<Tensor<f32>> = corpus.users.iter().flat_map(|u| u.genuine.iter().cloned()).collect();
    let features = net.extract_features_batch(&all, exec).unwrap().into_iter().map(|f| f.0).collect();
    Run {
        model_bytes,
        features,
        report,
    }
}

#[test]
fn pipeline_runs_and_is_execution_independent() {
    let seq = run(Execution::Sequential);
    let par = run(Execution::Parallel);
    assert_eq!(seq.model_bytes, par.model_bytes);
    assert_eq!(seq.features, par.features);
    assert_eq!(seq.report.users, par.report.users);

    let r = &seq.report;
    assert_eq!(r.users.len(), 3);
    assert!(seq.features.iter().all(|f| f.len() == 32));
    for u in &r.users {
        assert!((0.0..=1.0).contains(&u.eer) && (0.0..=1.0).contains(&u.auc));
    }
    let mut csv = Vec::new();
    r.write_csv(&mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 3 + 2);
}

#[test]
fn model_files_reject_other_versions() {
    let spec: NetworkSpec = TINY.parse().unwrap();
    let net = Network::<f32>::new(&spec, 4, 0).unwrap();
    let mut bytes = Vec::new();
    save_network(&mut bytes, &net).unwrap();
    assert_eq!(&bytes[..4], b"SGNT");
    let mut bumped = bytes.clone();
    bumped[4] = bumped[4].wrapping_add(1);
    assert!(load_network::<_, f32>(&mut bumped.as_slice()).is_err());
    let mut wrong_magic = bytes;
    wrong_magic[0] = b'X';
    assert!(load_network::<_, f32>(&mut wrong_magic.as_slice()).is_err());
}
