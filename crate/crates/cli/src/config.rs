//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored; unknown or repeated keys are
//! errors. Relative paths resolve against the config file's directory. The
//! digest covers every resolved setting except filesystem locations, so two
//! runs that differ only in where they live share a digest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sha2::{Digest, Sha256};
use sigver::imageprep::{PrepConfig, PrepMode};
use sigver::nn::NetworkSpec;
use sigver::protocol::{ForgeryPolicy, SplitSpec, WdProtocol};
use sigver::svm::{default_grid, GridPoint, Kernel, SvmConfig};
use sigver::training::TrainConfig;

use crate::error::{CliError, CliResult};

pub const CANONICAL_SPEC: &str = include_str!("../specs/canonical.net");
pub const DESK_SPEC: &str = include_str!("../specs/desk.net");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SynthSettings {
    pub users: usize,
    pub genuine: usize,
    pub simple: usize,
    pub skilled: usize,
    pub height: usize,
    pub width: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub work_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub synth: SynthSettings,
    pub prep: PrepConfig,
    pub network: NetworkSpec,
    pub train: TrainConfig,
    /// Checkpoint period in epochs; 0 disables checkpoints.
    pub checkpoint_every: usize,
    pub split: SplitSpec,
    pub protocol: WdProtocol,
    pub svm: SvmConfig,
    /// Take C and γ from the grid-search result instead of `svm.*`.
    pub use_grid: bool,
    pub grid: Vec<GridPoint>,
    pub grid_dev_users: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            corpus: None,
            work_dir: None,
            seed: None,
            synth: SynthSettings {
                users: 30,
                genuine: 24,
                simple: 0,
                skilled: 30,
                height: 110,
                width: 160,
            },
            prep: PrepConfig::default(),
            network: CANONICAL_SPEC.parse().expect("bundled spec parses"),
            train: TrainConfig::default(),
            checkpoint_every: 0,
            split: SplitSpec { exploitation_users: 160 },
            protocol: WdProtocol::gpds(14),
            svm: SvmConfig::default(),
            use_grid: false,
            grid: default_grid(),
            grid_dev_users: 10,
        }
    }
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

/// Parses `2^-12`-style powers as well as plain numbers.
fn parse_real(key: &str, v: &str) -> CliResult<f64> {
    let parsed = match v.split_once('^') {
        Some((base, exp)) => match (base.trim().parse::<f64>(), exp.trim().parse::<i32>()) {
            (Ok(b), Ok(e)) => Ok(b.powi(e)),
            _ => Err(()),
        },
        None => v.parse::<f64>().map_err(|_| ()),
    };
    parsed
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| invalid(format!("{key}: '{v}' is not a number")))
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.parse().map_err(|_| invalid(format!("{key}: '{v}' is not a valid value")))
}

fn parse_bool(key: &str, v: &str) -> CliResult<bool> {
    match v {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(invalid(format!("{key}: '{v}' is not a boolean"))),
    }
}

fn parse_list(key: &str, v: &str) -> CliResult<Vec<f64>> {
    v.split(',').map(|x| parse_real(key, x.trim())).collect()
}

/// Splits config text into key/value pairs.
pub fn parse_pairs(text: &str) -> CliResult<BTreeMap<String, String>> {
    let mut map = BTreeMap::new();
    for (no, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| invalid(format!("line {}: expected 'key = value', got '{}'", no + 1, raw.trim())))?;
        let (k, v) = (k.trim().to_string(), v.trim().to_string());
        if k.is_empty() {
            return Err(invalid(format!("line {}: empty key", no + 1)));
        }
        if map.insert(k.clone(), v).is_some() {
            return Err(invalid(format!("line {}: key '{k}' set twice", no + 1)));
        }
    }
    Ok(map)
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(format!("reading config {}", path.display()), e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::parse(&text, base)
    }

    pub fn parse(text: &str, base: &Path) -> CliResult<RunConfig> {
        let mut kv = parse_pairs(text)?;
        let mut cfg = RunConfig::default();
        let resolve = |p: &str| {
            let p = PathBuf::from(p);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };

        // presets first, so individual keys override them wherever they appear
        if let Some(p) = kv.remove("wd.protocol") {
            cfg.protocol = match p.as_str() {
                "gpds" => WdProtocol::gpds(14),
                "brazilian" => WdProtocol::brazilian(30),
                other => return Err(invalid(format!("wd.protocol: unknown protocol '{other}'"))),
            };
        }
        if let Some(n) = kv.remove("network") {
            cfg.network = match n.as_str() {
                "canonical" => CANONICAL_SPEC.parse()?,
                "desk" => DESK_SPEC.parse()?,
                path => {
                    let file = resolve(path);
                    let text = std::fs::read_to_string(&file)
                        .map_err(|e| CliError::io(format!("reading network spec {}", file.display()), e))?;
                    text.parse()?
                }
            };
        }

        let (mut gamma_set, mut grid_c, mut grid_gamma) = (None, None, None);
        for (key, v) in kv {
            let k = key.as_str();
            let v = v.as_str();
            match k {
                "corpus" => cfg.corpus = Some(resolve(v)),
                "work_dir" => cfg.work_dir = Some(resolve(v)),
                "seed" => cfg.seed = Some(parse_num(k, v)?),
                "datagen.users" => cfg.synth.users = parse_num(k, v)?,
                "datagen.genuine" => cfg.synth.genuine = parse_num(k, v)?,
                "datagen.simple" => cfg.synth.simple = parse_num(k, v)?,
                "datagen.skilled" => cfg.synth.skilled = parse_num(k, v)?,
                "datagen.height" => cfg.synth.height = parse_num(k, v)?,
                "datagen.width" => cfg.synth.width = parse_num(k, v)?,
                "prep.mode" => cfg.prep.mode = v.parse::<PrepMode>()?,
                "prep.canvas_h" => cfg.prep.canvas_h = parse_num(k, v)?,
                "prep.canvas_w" => cfg.prep.canvas_w = parse_num(k, v)?,
                "prep.target_h" => cfg.prep.target_h = parse_num(k, v)?,
                "prep.target_w" => cfg.prep.target_w = parse_num(k, v)?,
                "train.lr" => cfg.train.initial_lr = parse_real(k, v)?,
                "train.lr_decay_factor" => cfg.train.lr_decay_factor = parse_real(k, v)?,
                "train.lr_decay_every" => cfg.train.lr_decay_every = parse_num(k, v)?,
                "train.momentum" => cfg.train.momentum = parse_real(k, v)?,
                "train.weight_decay" => cfg.train.weight_decay = parse_real(k, v)?,
                "train.batch_size" => cfg.train.batch_size = parse_num(k, v)?,
                "train.epochs" => cfg.train.epochs = parse_num(k, v)?,
                "train.checkpoint_every" => cfg.checkpoint_every = parse_num(k, v)?,
                "split.exploitation_users" => cfg.split.exploitation_users = parse_num(k, v)?,
                "wd.n_genuine_train" => cfg.protocol.n_genuine_train = parse_num(k, v)?,
                "wd.n_neg_per_dev_user" => cfg.protocol.n_neg_per_dev_user = parse_num(k, v)?,
                "wd.n_genuine_test" => cfg.protocol.n_genuine_test = parse_num(k, v)?,
                "wd.random" => cfg.protocol.forgeries.random = parse_num(k, v)?,
                "wd.simple" => cfg.protocol.forgeries.simple = parse_num(k, v)?,
                "wd.skilled" => cfg.protocol.forgeries.skilled = parse_num(k, v)?,
                "svm.kernel" => {
                    cfg.svm.kernel = match v {
                        "linear" => Kernel::Linear,
                        "rbf" => Kernel::Rbf { gamma: 2f64.powi(-12) },
                        other => return Err(invalid(format!("svm.kernel: unknown kernel '{other}'"))),
                    }
                }
                "svm.gamma" => gamma_set = Some(parse_real(k, v)?),
                "svm.c" => cfg.svm.c = parse_real(k, v)?,
                "svm.tolerance" => cfg.svm.tolerance = parse_real(k, v)?,
                "svm.max_iterations" => cfg.svm.max_iterations = parse_num(k, v)?,
                "svm.use_grid" => cfg.use_grid = parse_bool(k, v)?,
                "grid.dev_users" => cfg.grid_dev_users = parse_num(k, v)?,
                "grid.c" => grid_c = Some(parse_list(k, v)?),
                "grid.gamma" => grid_gamma = Some(parse_list(k, v)?),
                _ => return Err(invalid(format!("unknown config key '{k}'"))),
            }
        }
        if let Some(g) = gamma_set {
            match &mut cfg.svm.kernel {
                Kernel::Rbf { gamma } => *gamma = g,
                Kernel::Linear => return Err(invalid("svm.gamma is meaningless for the linear kernel")),
            }
        }
        if grid_c.is_some() || grid_gamma.is_some() {
            let mut cs = grid_c.unwrap_or_else(|| default_grid().iter().map(|p| p.c).collect());
            let mut gammas = grid_gamma.unwrap_or_else(|| default_grid().iter().map(|p| p.gamma).collect());
            for list in [&mut cs, &mut gammas] {
                list.sort_by(f64::total_cmp);
                list.dedup();
            }
            let mut grid = Vec::new();
            for &c in &cs {
                for &gamma in &gammas {
                    grid.push(GridPoint { c, gamma });
                }
            }
            cfg.grid = grid;
        }
        Ok(cfg)
    }

    /// Checks settings that do not depend on the data.
    pub fn validate(&self) -> CliResult<()> {
        self.prep.validate_geometry()?;
        self.train.validate()?;
        self.svm.validate()?;
        self.protocol.validate()?;
        if self.split.exploitation_users == 0 {
            return Err(invalid("split.exploitation_users must be positive"));
        }
        if self.grid.is_empty() || self.grid_dev_users == 0 {
            return Err(invalid("the hyperparameter grid and its development users must be nonempty"));
        }
        let [c, h, w] = self.network.input;
        if c != 1 || h != self.prep.target_h || w != self.prep.target_w {
            return Err(invalid(format!(
                "network input {c}x{h}x{w} does not match preprocessing target 1x{}x{}",
                self.prep.target_h, self.prep.target_w
            )));
        }
        Ok(())
    }

    pub fn seed(&self) -> CliResult<u64> {
        self.seed.ok_or_else(|| invalid("a seed is required: set 'seed' in the config or pass --seed"))
    }

    pub fn work_dir(&self) -> CliResult<&Path> {
        self.work_dir.as_deref().ok_or_else(|| invalid("config key 'work_dir' is required for this stage"))
    }

    pub fn corpus(&self) -> CliResult<&Path> {
        self.corpus.as_deref().ok_or_else(|| invalid("config key 'corpus' is required for this stage"))
    }

    /// Every setting except paths, one `key = value` per line in a fixed
    /// order, followed by the network spec.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("seed", self.seed.map_or_else(|| "none".into(), |v| v.to_string()));
        let d = &self.synth;
        put("datagen", format!("{} {} {} {} {}x{}", d.users, d.genuine, d.simple, d.skilled, d.height, d.width));
        let p = &self.prep;
        put("prep", format!("{} {}x{} -> {}x{}", p.mode.as_str(), p.canvas_h, p.canvas_w, p.target_h, p.target_w));
        let t = &self.train;
        put(
            "train",
            format!(
                "lr={:?} decay={:?}/{} momentum={:?} wd={:?} batch={} epochs={} checkpoint={}",
                t.initial_lr, t.lr_decay_factor, t.lr_decay_every, t.momentum, t.weight_decay, t.batch_size, t.epochs, self.checkpoint_every
            ),
        );
        put("split", self.split.exploitation_users.to_string());
        let w = &self.protocol;
        let ForgeryPolicy { random, simple, skilled } = w.forgeries;
        put(
            "wd",
            format!("train={} neg={} test={} random={random} simple={simple} skilled={skilled}", w.n_genuine_train, w.n_neg_per_dev_user, w.n_genuine_test),
        );
        let v = &self.svm;
        put("svm", format!("{:?} c={:?} tol={:?} max_iter={} use_grid={}", v.kernel, v.c, v.tolerance, v.max_iterations, self.use_grid));
        let grid: Vec<String> = self.grid.iter().map(|g| format!("{:?}/{:?}", g.c, g.gamma)).collect();
        put("grid", format!("dev_users={} points={}", self.grid_dev_users, grid.join(",")));
        s.push_str(&self.network.to_string());
        s
    }

    /// Hex SHA-256 of [`canonical_text`](Self::canonical_text).
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_text().as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_specs_match_library() {
        assert_eq!(CANONICAL_SPEC.parse::<NetworkSpec>().unwrap(), NetworkSpec::canonical());
        assert_eq!(DESK_SPEC.parse::<NetworkSpec>().unwrap(), NetworkSpec::desk());
    }

    #[test]
    fn parses_keys_and_overrides() {
        let text = "# desk\nseed = 7\nnetwork = desk\nwd.protocol = brazilian\nwd.n_genuine_train = 5 # fewer\n\
                    svm.gamma = 2^-10\ngrid.c = 1, 2^2\ngrid.gamma = 0.5\nprep.target_h = 55\nprep.target_w = 80\n\
                    corpus = data\n";
        let cfg = RunConfig::parse(text, Path::new("/runs")).unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.protocol.n_genuine_train, 5);
        assert_eq!(cfg.protocol.forgeries.simple, 10);
        assert_eq!(cfg.svm.kernel, Kernel::Rbf { gamma: 2f64.powi(-10) });
        assert_eq!(cfg.grid, vec![GridPoint { c: 1.0, gamma: 0.5 }, GridPoint { c: 4.0, gamma: 0.5 }]);
        assert_eq!(cfg.corpus.as_deref(), Some(Path::new("/runs/data")));
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_bad_input() {
        for bad in ["seed = 1\nseed = 2", "nonsense", "foo = 1", "train.lr = abc", "svm.kernel = poly", "svm.kernel = linear\nsvm.gamma = 1"] {
            assert!(matches!(RunConfig::parse(bad, Path::new(".")), Err(CliError::Validation(_))), "{bad}");
        }
        let mismatch = RunConfig::parse("network = desk", Path::new(".")).unwrap();
        assert!(mismatch.validate().is_err());
    }

    #[test]
    fn digest_ignores_paths_but_not_settings() {
        let a = RunConfig::parse("seed = 3\ncorpus = a\nwork_dir = x", Path::new("/one")).unwrap();
        let b = RunConfig::parse("seed = 3\ncorpus = b\nwork_dir = y", Path::new("/two")).unwrap();
        let c = RunConfig::parse("seed = 4\ncorpus = a\nwork_dir = x", Path::new("/one")).unwrap();
        assert_eq!(a.digest(), b.digest());
        assert_ne!(a.digest(), c.digest());
        assert_eq!(a.digest().len(), 64);
    }
}
