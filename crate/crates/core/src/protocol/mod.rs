//! Dataset bookkeeping: development/exploitation split and the per-user
//! writer-dependent training and testing sets.
//!
//! Everything here is generic over the sample type, so the same rules apply
//! to images, feature vectors or plain identifiers.

mod synth;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use synth::{generate_synthetic_corpus, SynthConfig};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SampleKind {
    Genuine,
    Simple,
    Skilled,
}

impl SampleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleKind::Genuine => "genuine",
            SampleKind::Simple => "simple",
            SampleKind::Skilled => "skilled",
        }
    }
}

impl std::str::FromStr for SampleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genuine" => Ok(SampleKind::Genuine),
            "simple" => Ok(SampleKind::Simple),
            "skilled" => Ok(SampleKind::Skilled),
            other => Err(Error::config(format!("unknown sample kind '{other}'"))),
        }
    }
}

/// One user's signatures, each list in index order.
#[derive(Clone, Debug, PartialEq)]
pub struct UserSamples<S> {
    pub id: usize,
    pub genuine: Vec<S>,
    pub simple: Vec<S>,
    pub skilled: Vec<S>,
}

impl<S> UserSamples<S> {
    pub fn new(id: usize) -> Self {
        UserSamples {
            id,
            genuine: Vec::new(),
            simple: Vec::new(),
            skilled: Vec::new(),
        }
    }

    pub fn samples(&self, kind: SampleKind) -> &[S] {
        match kind {
            SampleKind::Genuine => &self.genuine,
            SampleKind::Simple => &self.simple,
            SampleKind::Skilled => &self.skilled,
        }
    }

    pub fn samples_mut(&mut self, kind: SampleKind) -> &mut Vec<S> {
        match kind {
            SampleKind::Genuine => &mut self.genuine,
            SampleKind::Simple => &mut self.simple,
            SampleKind::Skilled => &mut self.skilled,
        }
    }

    pub fn map<T>(&self, mut f: impl FnMut(&S) -> T) -> UserSamples<T> {
        UserSamples {
            id: self.id,
            genuine: self.genuine.iter().map(&mut f).collect(),
            simple: self.simple.iter().map(&mut f).collect(),
            skilled: self.skilled.iter().map(&mut f).collect(),
        }
    }
}

/// Users in index order.
#[derive(Clone, Debug, PartialEq)]
pub struct Corpus<S> {
    pub users: Vec<UserSamples<S>>,
}

impl<S> Corpus<S> {
    pub fn new(users: Vec<UserSamples<S>>) -> Result<Self> {
        let mut ids: Vec<usize> = users.iter().map(|u| u.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::config("user ids in a corpus must be unique"));
        }
        Ok(Corpus { users })
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SplitSpec {
    /// The first this many users form the exploitation set E; the rest are
    /// the development set D.
    pub exploitation_users: usize,
}

/// `(D, E)` with `E` the leading users.
pub fn split<S>(corpus: &Corpus<S>, spec: SplitSpec) -> Result<(&[UserSamples<S>], &[UserSamples<S>])> {
    let k = spec.exploitation_users;
    if k == 0 || k >= corpus.len() {
        return Err(Error::config(format!(
            "exploitation set of {k} users must be nonempty and leave development users among {}",
            corpus.len()
        )));
    }
    let (e, d) = corpus.users.split_at(k);
    Ok((d, e))
}

/// Number of test samples per forgery type.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ForgeryPolicy {
    pub random: usize,
    pub simple: usize,
    pub skilled: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WdProtocol {
    pub n_genuine_train: usize,
    /// Negatives taken from every development user.
    pub n_neg_per_dev_user: usize,
    pub n_genuine_test: usize,
    pub forgeries: ForgeryPolicy,
}

impl WdProtocol {
    /// 14 negatives per development user; test on 10 genuine and 30 skilled.
    pub fn gpds(n_genuine_train: usize) -> Self {
        WdProtocol {
            n_genuine_train,
            n_neg_per_dev_user: 14,
            n_genuine_test: 10,
            forgeries: ForgeryPolicy {
                random: 0,
                simple: 0,
                skilled: 30,
            },
        }
    }

    /// 30 negatives per development user; test on 10 genuine, 10 random,
    /// 10 simple and 10 skilled.
    pub fn brazilian(n_genuine_train: usize) -> Self {
        WdProtocol {
            n_genuine_train,
            n_neg_per_dev_user: 30,
            n_genuine_test: 10,
            forgeries: ForgeryPolicy {
                random: 10,
                simple: 10,
                skilled: 10,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_genuine_train == 0 || self.n_neg_per_dev_user == 0 || self.n_genuine_test == 0 {
            return Err(Error::config(format!("protocol counts must be positive: {self:?}")));
        }
        Ok(())
    }
}

/// Training and testing samples of one enrolled user.
#[derive(Clone, Debug, PartialEq)]
pub struct WdSets<'a, S> {
    pub user: usize,
    pub train_genuine: Vec<&'a S>,
    pub train_negative: Vec<&'a S>,
    pub test_genuine: Vec<&'a S>,
    pub test_random: Vec<&'a S>,
    pub test_simple: Vec<&'a S>,
    pub test_skilled: Vec<&'a S>,
}

/// The negative pool shared by every enrolled user: the first
/// `n_neg_per_dev_user` genuine signatures of each development user.
pub fn negative_pool<'a, S>(dev: &'a [UserSamples<S>], proto: &WdProtocol) -> Result<Vec<&'a S>> {
    let mut pool = Vec::with_capacity(dev.len() * proto.n_neg_per_dev_user);
    for u in dev {
        if u.genuine.len() < proto.n_neg_per_dev_user {
            return Err(Error::Protocol(format!(
                "development user {} has {} genuine signatures, {} needed as negatives",
                u.id,
                u.genuine.len(),
                proto.n_neg_per_dev_user
            )));
        }
        pool.extend(&u.genuine[..proto.n_neg_per_dev_user]);
    }
    Ok(pool)
}

/// Builds the sets of `exploitation[index]`.
///
/// Training uses the user's first `n_genuine_train` genuine signatures;
/// testing uses the last `n_genuine_test`, which must not overlap. Random
/// forgeries are one genuine signature from each of a seeded choice of other
/// enrolled users, drawn from the part of their genuine list never used for
/// training. Simple and skilled forgeries are the leading ones of the user.
pub fn build_wd_sets<'a, S>(
    index: usize,
    dev: &'a [UserSamples<S>],
    exploitation: &'a [UserSamples<S>],
    proto: &WdProtocol,
    seed: u64,
) -> Result<WdSets<'a, S>> {
    proto.validate()?;
    let user = exploitation
        .get(index)
        .ok_or_else(|| Error::config(format!("no exploitation user at position {index}")))?;
    let (n_train, n_test) = (proto.n_genuine_train, proto.n_genuine_test);
    let n_gen = user.genuine.len();
    if n_train + n_test > n_gen {
        return Err(Error::Protocol(format!(
            "user {} has {n_gen} genuine signatures; {n_train} training + {n_test} testing requested",
            user.id
        )));
    }
    let take = |kind: SampleKind, n: usize| -> Result<Vec<&'a S>> {
        let list = user.samples(kind);
        if list.len() < n {
            return Err(Error::Protocol(format!(
                "user {} has {} {} forgeries, {n} required",
                user.id,
                list.len(),
                kind.as_str()
            )));
        }
        Ok(list[..n].iter().collect())
    };

    let mut test_random = Vec::with_capacity(proto.forgeries.random);
    if proto.forgeries.random > 0 {
        let mut others: Vec<usize> = (0..exploitation.len()).filter(|&i| i != index).collect();
        if others.len() < proto.forgeries.random {
            return Err(Error::Protocol(format!(
                "{} random forgeries need as many other enrolled users, found {}",
                proto.forgeries.random,
                others.len()
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (user.id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
        others.shuffle(&mut rng);
        for &o in &others[..proto.forgeries.random] {
            let unused = &exploitation[o].genuine;
            if unused.len() <= n_train {
                return Err(Error::Protocol(format!(
                    "user {} has no genuine signature outside its training set to serve as a random forgery",
                    exploitation[o].id
                )));
            }
            test_random.push(&unused[rng.gen_range(n_train..unused.len())]);
        }
    }

    Ok(WdSets {
        user: user.id,
        train_genuine: user.genuine[..n_train].iter().collect(),
        train_negative: negative_pool(dev, proto)?,
        test_genuine: user.genuine[n_gen - n_test..].iter().collect(),
        test_random,
        test_simple: take(SampleKind::Simple, proto.forgeries.simple)?,
        test_skilled: take(SampleKind::Skilled, proto.forgeries.skilled)?,
    })
}
